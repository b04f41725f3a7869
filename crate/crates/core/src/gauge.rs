//! Compact Lie algebras `su(N)`, `u(N)` with bases orthonormal for
//! `⟨Z, W⟩ = −2 Tr(ZW)` (optionally rescaled) and their unitary representations.
//!
//! Basis order for `su(N)`: for every pair `r < s` the elements
//! `X_rs = −(i/2)(E_rs + E_sr)` and `Y_rs = −(1/2)(E_rs − E_sr)`, followed by
//! the diagonal elements `H_d = −i c_d diag(1, …, 1, −d, 0, …)` with
//! `c_d = 1/sqrt(2d(d+1))`. For `N = 2` this is exactly `{−iσ_k/2}`.
//! `u(N)` appends the central element `i·Id/sqrt(2N)`.

use nalgebra::DMatrix;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exterior::LieVec;
use crate::linalg::{c, commutator, CMat, I};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum AlgebraKind {
    Su,
    U,
}

#[derive(Debug, Clone)]
pub struct GaugeAlgebra {
    n: usize,
    kind: AlgebraKind,
    metric_scale: f64,
    basis: Vec<CMat>,
    /// `f[a][b]` = coordinates of `[σ_a, σ_b]`.
    structure: Vec<Vec<LieVec>>,
}

fn unit(n: usize, r: usize, s: usize) -> CMat {
    let mut e = CMat::zeros(n, n);
    e[(r, s)] = c(1.0, 0.0);
    e
}

impl GaugeAlgebra {
    pub fn su(n: usize) -> Result<Self> {
        if n < 2 {
            return Err(Error::InvalidRank(format!("su(N) needs N >= 2, got {n}")));
        }
        Ok(Self::build(n, AlgebraKind::Su, 1.0))
    }

    pub fn u(n: usize) -> Result<Self> {
        if n < 1 {
            return Err(Error::InvalidRank("u(N) needs N >= 1".into()));
        }
        Ok(Self::build(n, AlgebraKind::U, 1.0))
    }

    /// Same algebra with the inner product `scale · (−2 Tr)`; the basis is
    /// rescaled by `1/sqrt(scale)` to stay orthonormal.
    pub fn with_metric_scale(&self, scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::InvalidRank(format!("metric scale {scale}")));
        }
        Ok(Self::build(self.n, self.kind, scale))
    }

    fn build(n: usize, kind: AlgebraKind, metric_scale: f64) -> Self {
        let mut basis = Vec::new();
        for r in 0..n {
            for s in (r + 1)..n {
                let sym = unit(n, r, s) + unit(n, s, r);
                let anti = unit(n, r, s) - unit(n, s, r);
                basis.push(sym * (-I * 0.5));
                basis.push(anti * c(-0.5, 0.0));
            }
        }
        for d in 1..n {
            let cd = 1.0 / ((2 * d * (d + 1)) as f64).sqrt();
            let mut h = CMat::zeros(n, n);
            for j in 0..d {
                h[(j, j)] = c(0.0, -cd);
            }
            h[(d, d)] = c(0.0, cd * d as f64);
            basis.push(h);
        }
        if kind == AlgebraKind::U {
            basis.push(CMat::identity(n, n) * c(0.0, 1.0 / ((2 * n) as f64).sqrt()));
        }
        let inv_sqrt = 1.0 / metric_scale.sqrt();
        for b in basis.iter_mut() {
            *b *= c(inv_sqrt, 0.0);
        }
        let mut alg = Self {
            n,
            kind,
            metric_scale,
            basis,
            structure: Vec::new(),
        };
        let dim = alg.basis.len();
        alg.structure = (0..dim)
            .map(|a| {
                (0..dim)
                    .map(|b| alg.coords(&commutator(&alg.basis[a], &alg.basis[b])))
                    .collect()
            })
            .collect();
        alg
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn kind(&self) -> AlgebraKind {
        self.kind
    }

    pub fn dim(&self) -> usize {
        self.basis.len()
    }

    pub fn metric_scale(&self) -> f64 {
        self.metric_scale
    }

    pub fn basis(&self) -> &[CMat] {
        &self.basis
    }

    /// `scale · (−2 Re Tr(ZW))`.
    pub fn inner(&self, z: &CMat, w: &CMat) -> f64 {
        -2.0 * self.metric_scale * (z * w).trace().re
    }

    /// Coordinates of an algebra element in the orthonormal basis.
    pub fn coords(&self, x: &CMat) -> LieVec {
        LieVec::from_iterator(self.dim(), self.basis.iter().map(|b| self.inner(b, x)))
    }

    /// Complex-linear coordinates (for complexified elements).
    pub fn coords_complex(&self, x: &CMat) -> Vec<Complex64> {
        self.basis
            .iter()
            .map(|b| (b * x).trace() * (-2.0 * self.metric_scale))
            .collect()
    }

    pub fn element(&self, coords: &LieVec) -> CMat {
        let mut out = CMat::zeros(self.n, self.n);
        for (b, &x) in self.basis.iter().zip(coords.iter()) {
            out += b * c(x, 0.0);
        }
        out
    }

    pub fn zero(&self) -> LieVec {
        LieVec::zeros(self.dim())
    }

    /// Lie bracket on coordinates through the structure constants.
    pub fn bracket(&self, x: &LieVec, y: &LieVec) -> LieVec {
        let mut out = self.zero();
        for (a, &xa) in x.iter().enumerate() {
            if xa == 0.0 {
                continue;
            }
            for (b, &yb) in y.iter().enumerate() {
                if yb != 0.0 {
                    out.axpy(xa * yb, &self.structure[a][b], 1.0);
                }
            }
        }
        out
    }

    /// Gram matrix `⟨σ_a, σ_b⟩`.
    pub fn gram(&self) -> DMatrix<f64> {
        let d = self.dim();
        DMatrix::from_fn(d, d, |a, b| self.inner(&self.basis[a], &self.basis[b]))
    }
}

#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
pub enum RepKind {
    Standard,
    Adjoint,
    SymSu2(usize),
}

/// A unitary representation, given by the anti-Hermitian images of the basis.
#[derive(Debug, Clone)]
pub struct GaugeRep {
    algebra: GaugeAlgebra,
    kind: RepKind,
    images: Vec<CMat>,
}

impl GaugeRep {
    pub fn standard(algebra: &GaugeAlgebra) -> Self {
        Self {
            algebra: algebra.clone(),
            kind: RepKind::Standard,
            images: algebra.basis.clone(),
        }
    }

    /// `ρ_*(X) = ad_X` written in the orthonormal basis (real antisymmetric).
    pub fn adjoint(algebra: &GaugeAlgebra) -> Self {
        let d = algebra.dim();
        let images = (0..d)
            .map(|a| CMat::from_fn(d, d, |r, s| c(algebra.structure[a][s][r], 0.0)))
            .collect();
        Self {
            algebra: algebra.clone(),
            kind: RepKind::Adjoint,
            images,
        }
    }

    /// The irreducible `(ℓ+1)`-dimensional representation `S^ℓ(C^2)` of `su(2)`,
    /// written on the monomials `e_0^{ℓ−j} e_1^j` normalised by `sqrt(C(ℓ, j))`.
    pub fn sym_su2(level: usize) -> Result<Self> {
        let algebra = GaugeAlgebra::su(2)?;
        let d = level + 1;
        let binom = |j: usize| -> f64 {
            (0..j).fold(1.0, |acc, i| acc * (level - i) as f64 / (i + 1) as f64)
        };
        let images = algebra
            .basis
            .iter()
            .map(|x| {
                // derivation action on monomials m_j = e0^{ℓ−j} e1^j
                let mut mono = CMat::zeros(d, d);
                for j in 0..d {
                    let a = (level - j) as f64;
                    let b = j as f64;
                    // e0 ↦ x00 e0 + x10 e1, e1 ↦ x01 e0 + x11 e1
                    if a > 0.0 {
                        mono[(j, j)] += x[(0, 0)] * a;
                        mono[(j + 1, j)] += x[(1, 0)] * a;
                    }
                    if b > 0.0 {
                        mono[(j - 1, j)] += x[(0, 1)] * b;
                        mono[(j, j)] += x[(1, 1)] * b;
                    }
                }
                // orthonormal u_j = sqrt(C(ℓ,j)) m_j
                CMat::from_fn(d, d, |r, s| {
                    mono[(r, s)] * (binom(s).sqrt() / binom(r).sqrt())
                })
            })
            .collect();
        Ok(Self {
            algebra,
            kind: RepKind::SymSu2(level),
            images,
        })
    }

    pub fn algebra(&self) -> &GaugeAlgebra {
        &self.algebra
    }

    pub fn kind(&self) -> &RepKind {
        &self.kind
    }

    pub fn dim(&self) -> usize {
        self.images.first().map(|m| m.nrows()).unwrap_or(0)
    }

    pub fn images(&self) -> &[CMat] {
        &self.images
    }

    /// `ρ_*(X)` for real coordinates.
    pub fn rho(&self, coords: &LieVec) -> CMat {
        let d = self.dim();
        let mut out = CMat::zeros(d, d);
        for (img, &x) in self.images.iter().zip(coords.iter()) {
            if x != 0.0 {
                out += img * c(x, 0.0);
            }
        }
        out
    }

    /// Complex-linear extension of `ρ_*`.
    pub fn rho_complex(&self, coords: &[Complex64]) -> CMat {
        let d = self.dim();
        let mut out = CMat::zeros(d, d);
        for (img, &x) in self.images.iter().zip(coords.iter()) {
            out += img * x;
        }
        out
    }

    /// Largest residual of `ρ_*([σ_a, σ_b]) − [ρ_*σ_a, ρ_*σ_b]` over basis pairs.
    pub fn homomorphism_residual(&self) -> f64 {
        let d = self.algebra.dim();
        let mut worst = 0.0_f64;
        for a in 0..d {
            for b in 0..d {
                let lhs = self.rho(&self.algebra.structure[a][b]);
                let rhs = commutator(&self.images[a], &self.images[b]);
                worst = worst.max(crate::linalg::max_abs(&(lhs - rhs)));
            }
        }
        worst
    }

    pub fn anti_hermiticity_residual(&self) -> f64 {
        self.images
            .iter()
            .map(crate::linalg::anti_hermiticity_defect)
            .fold(0.0, f64::max)
    }

    /// `Σ_a ρ_*(σ_a)²`.
    pub fn casimir(&self) -> CMat {
        let d = self.dim();
        self.images
            .iter()
            .fold(CMat::zeros(d, d), |acc, x| acc + x * x)
    }
}

/// Max over basis pairs of `|Tr(ad_X ad_Y) − 2N Tr(XY)|` for `su(N)`.
pub fn killing_check(n: usize) -> Result<f64> {
    let alg = GaugeAlgebra::su(n)?;
    let ad = GaugeRep::adjoint(&alg);
    let mut worst = 0.0_f64;
    for (a, xa) in alg.basis.iter().enumerate() {
        for (b, xb) in alg.basis.iter().enumerate() {
            let lhs = (&ad.images[a] * &ad.images[b]).trace();
            let rhs = (xa * xb).trace() * (2.0 * n as f64);
            worst = worst.max((lhs - rhs).norm());
        }
    }
    Ok(worst)
}
