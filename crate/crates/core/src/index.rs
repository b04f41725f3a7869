//! Exact characteristic-number arithmetic and Chern–Weil densities.
//!
//! `ch_k` is normalised as the degree-`2k` part of `Tr exp(iF/2π)`, i.e.
//! `ch_k = (1/k!)(i/2π)^k Tr(F^{∧k})`, so that `ch₂ = −c₂` when `c₁ = 0`.

use num_bigint::BigInt;
use num_complex::Complex64;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::Serialize;

use crate::clifford::endo_form;
use crate::construct::{surviving_chirality, Bpst};
use crate::error::{Error, Result};
use crate::exterior::{wedge_with, Form, LieVec};
use crate::fieldcalc::{integrate_box, QuadDomain, QuadratureReport};
use crate::gauge::GaugeRep;
use crate::linalg::{anti_hermiticity_defect, CMat};
use crate::par::Exec;

pub type CharNumber = BigRational;

/// `a = (a_0, …, a_n)` with `a_ℓ = Â_{n−ℓ}(TM) c₂(E)^ℓ [M]`.
pub type CharVector = Vec<CharNumber>;

pub fn int(v: i64) -> CharNumber {
    BigRational::from_integer(BigInt::from(v))
}

pub fn ratio(p: i64, q: i64) -> CharNumber {
    BigRational::new(BigInt::from(p), BigInt::from(q))
}

fn factorial(n: u64) -> BigInt {
    (1..=n).fold(BigInt::one(), |acc, k| acc * k)
}

/// `Â[V^{2n}(2d)] = (2d/(2n+1)!) Π_{k=1}^n (d² − k²)`.
pub fn ahat_hypersurface(n: u64, d: u64) -> Result<CharNumber> {
    if n == 0 || d == 0 {
        return Err(Error::Degenerate(format!("hypersurface parameters n = {n}, d = {d}")));
    }
    let d = BigInt::from(d);
    let prod = (1..=n).fold(BigInt::one(), |acc, k| acc * (&d * &d - BigInt::from(k * k)));
    Ok(BigRational::new(BigInt::from(2) * &d * prod, factorial(2 * n + 1)))
}

/// `p_j(ℓ) = ((−1)^j/(2j)!) Σ_{s=0}^ℓ (ℓ − 2s)^{2j}`.
pub fn p_poly(j: u32, l: u64) -> CharNumber {
    let sum = (0..=l).fold(BigInt::zero(), |acc, s| {
        acc + (BigInt::from(l as i64) - BigInt::from(2 * s as i64)).pow(2 * j)
    });
    let sign = if j.is_multiple_of(2) { BigInt::one() } else { -BigInt::one() };
    BigRational::new(sign * sum, factorial(2 * j as u64))
}

/// `ind(D̸⁺_{E_ℓ}) = Σ_j p_j(ℓ) a_j`.
pub fn su2_index(a: &[CharNumber], l: u64) -> CharNumber {
    a.iter()
        .enumerate()
        .fold(CharNumber::zero(), |acc, (j, aj)| acc + p_poly(j as u32, l) * aj)
}

/// Coefficients `c_0 + c_1 ℓ + …` of `q(ℓ) = Σ_j p_j(ℓ) a_j`, by exact
/// Lagrange interpolation on `ℓ = 0, …, 2n+1`.
pub fn index_polynomial(a: &[CharNumber]) -> Vec<CharNumber> {
    let n_pts = 2 * a.len();
    let xs: Vec<CharNumber> = (0..n_pts).map(|l| int(l as i64)).collect();
    let ys: Vec<CharNumber> = (0..n_pts).map(|l| su2_index(a, l as u64)).collect();
    let mut coeffs = vec![CharNumber::zero(); n_pts];
    for i in 0..n_pts {
        // basis polynomial Π_{k≠i} (ℓ − x_k)/(x_i − x_k)
        let mut basis = vec![CharNumber::one()];
        let mut denom = CharNumber::one();
        for k in (0..n_pts).filter(|&k| k != i) {
            let mut next = vec![CharNumber::zero(); basis.len() + 1];
            for (p, b) in basis.iter().enumerate() {
                next[p + 1] += b;
                next[p] -= b * &xs[k];
            }
            basis = next;
            denom *= &xs[i] - &xs[k];
        }
        let w = &ys[i] / denom;
        for (c, b) in coeffs.iter_mut().zip(&basis) {
            *c += b * &w;
        }
    }
    while coeffs.len() > 1 && coeffs.last().is_some_and(|c| c.is_zero()) {
        coeffs.pop();
    }
    coeffs
}

pub fn eval_poly(coeffs: &[CharNumber], l: &CharNumber) -> CharNumber {
    coeffs.iter().rev().fold(CharNumber::zero(), |acc, c| acc * l + c)
}

/// Scan cap for the positive-root search.
pub const ROOT_SCAN_CAP: u64 = 10_000;

#[derive(Debug, Clone, Serialize)]
pub struct RootReport {
    pub roots: Vec<u64>,
    pub degree: usize,
    /// Cauchy bound on the absolute value of any real root.
    pub cauchy_bound: f64,
    pub scanned_to: u64,
    /// `true` when the Cauchy bound exceeds the scan cap.
    pub truncated: bool,
    /// `count ≤ 2n − 1` (with `n = len(a) − 1`).
    pub within_bound: bool,
}

/// Positive integers `ℓ` with `q(ℓ) = 0`.
pub fn positive_roots(a: &[CharNumber]) -> Result<RootReport> {
    if a.iter().all(|v| v.is_zero()) {
        return Err(Error::Degenerate("index polynomial of a zero CharVector".into()));
    }
    let coeffs = index_polynomial(a);
    let lead = coeffs.last().expect("nonempty").abs();
    let max_ratio = coeffs[..coeffs.len() - 1]
        .iter()
        .map(|c| (c.abs() / &lead).to_f64().unwrap_or(f64::INFINITY))
        .fold(0.0, f64::max);
    let cauchy_bound = 1.0 + max_ratio;
    let scanned_to = if cauchy_bound >= ROOT_SCAN_CAP as f64 {
        ROOT_SCAN_CAP
    } else {
        cauchy_bound.floor() as u64
    };
    let roots: Vec<u64> = (1..=scanned_to)
        .filter(|&l| eval_poly(&coeffs, &int(l as i64)).is_zero())
        .collect();
    let n = a.len() as i64 - 1;
    Ok(RootReport {
        within_bound: (roots.len() as i64) <= (2 * n - 1).max(0),
        degree: coeffs.len() - 1,
        truncated: cauchy_bound > ROOT_SCAN_CAP as f64,
        cauchy_bound,
        scanned_to,
        roots,
    })
}

/// `ind(D̸⁺_{ad}) = 2N·ind(D̸⁺_E) − (N²+1)·ind(∂̸⁺)` on a 4-manifold with `SU(N)` bundle.
pub fn ad_st_relation(n: u64, ind_e: &CharNumber, ind_partial: &CharNumber) -> Result<CharNumber> {
    if n < 2 {
        return Err(Error::InvalidRank(format!("SU({n})")));
    }
    let n = n as i64;
    Ok(int(2 * n) * ind_e - int(n * n + 1) * ind_partial)
}

/// Any two of `ind ∂̸⁺ = 0`, `ind D̸⁺_E = 0`, `ind D̸⁺_ad = 0` imply the third
/// (checked on the values produced by [`ad_st_relation`]).
pub fn two_implies_third(n: u64, ind_e: &CharNumber, ind_partial: &CharNumber) -> Result<bool> {
    let ind_ad = ad_st_relation(n, ind_e, ind_partial)?;
    let zeros = [ind_partial.is_zero(), ind_e.is_zero(), ind_ad.is_zero()];
    Ok(zeros.iter().filter(|&&z| z).count() != 2)
}

/// Formats a `CharNumber` as `"p/q"` (or `"p"` for integers).
pub fn exact_string(v: &CharNumber) -> String {
    v.to_string()
}

/// Pointwise `ch_k(F)` as a `2k`-form, from an endomorphism-valued curvature.
/// The input must be anti-Hermitian; the density is then real, which is checked.
pub fn chern_weil_ch(f: &Form<CMat>, k: usize) -> Result<Form<f64>> {
    if f.degree() != 2 {
        return Err(Error::InvalidDegree {
            degree: f.degree(),
            dim: f.dim(),
        });
    }
    let scale = f.coeffs().iter().map(|e| e.norm()).fold(1.0, f64::max);
    let defect = f.coeffs().iter().map(anti_hermiticity_defect).fold(0.0, f64::max);
    if defect > 1e-12 * scale {
        return Err(Error::ValueKind(format!("curvature is not anti-Hermitian (defect {defect:.2e})")));
    }
    let rank = f.template().nrows();
    let mut power = Form::monomial(f.dim(), &[], CMat::identity(rank, rank))?;
    for _ in 0..k {
        power = wedge_with(&power, f, &f.template(), |a, b| a * b)?;
    }
    let kf = (1..=k).fold(1.0, |acc, v| acc * v as f64);
    let factor = Complex64::new(0.0, 1.0 / (2.0 * std::f64::consts::PI)).powi(k as i32) / kf;
    let traced: Vec<Complex64> = power.coeffs().iter().map(|m| m.trace() * factor).collect();
    let worst_im = traced.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    let re_scale = traced.iter().map(|z| z.norm()).fold(1e-300, f64::max);
    if worst_im > 1e-10 * re_scale.max(1.0) {
        return Err(Error::Consistency(format!("ch_{k} density has imaginary part {worst_im:.2e}")));
    }
    let mut it = traced.into_iter();
    Form::from_fn(f.dim(), 2 * k, |_| it.next().expect("one value per monomial").re)
}

/// Top-degree coefficient of `ch_k` (requires `2k = m`).
pub fn chern_weil_top(f: &Form<CMat>, k: usize) -> Result<f64> {
    if 2 * k != f.dim() {
        return Err(Error::InvalidDegree {
            degree: 2 * k,
            dim: f.dim(),
        });
    }
    Ok(chern_weil_ch(f, k)?.coeffs()[0])
}

/// `ch_k` of a Lie-valued curvature in a representation.
pub fn chern_weil_rep(f: &Form<LieVec>, rep: &GaugeRep, k: usize) -> Result<Form<f64>> {
    chern_weil_ch(&endo_form(f, rep), k)
}

/// The dual-bundle curvature `−Fᵀ`.
pub fn dual_curvature(f: &Form<CMat>) -> Form<CMat> {
    f.map(|e| -e.transpose())
}

/// Result of integrating the BPST `ch₂` density over `R^4`.
#[derive(Debug, Clone, Serialize)]
pub struct InstantonReport {
    pub scale: f64,
    pub quadrature: QuadratureReport,
    pub integral: f64,
    pub magnitude_ok: bool,
    /// Sign of `∫ch₂` at every resolution.
    pub signs: Vec<i8>,
    pub sign_stable: bool,
    pub orientation: String,
    /// Chirality of untwisted spinors not annihilated by `F` (`"+"` or `"-"`).
    pub surviving_chirality: String,
}

/// Default quadrature ladder (nodes per axis).
pub const BPST_LADDER: [usize; 3] = [32, 64, 128];

/// `∫_{R^4} ch₂(F_BPST)` on the compactified chart along `ladder`.
pub fn bpst_index_check(scale: f64, ladder: &[usize], exec: Exec) -> Result<InstantonReport> {
    let bpst = Bpst::scaled(scale)?;
    let density = |x: &[f64]| bpst.ch2_density(x);
    let quadrature = integrate_box(&density, &QuadDomain::Compactified { dim: 4 }, ladder, 1e-3, exec)?;
    let integral = quadrature.value();
    let signs: Vec<i8> = quadrature.values.iter().map(|v| v.signum() as i8).collect();
    let module = crate::clifford::CliffordModule::new(4)?;
    let survivor = surviving_chirality(&bpst, &module)?;
    Ok(InstantonReport {
        scale,
        magnitude_ok: quadrature.values.iter().all(|v| (v.abs() - 1.0).abs() <= 1e-3),
        sign_stable: signs.windows(2).all(|w| w[0] == w[1]),
        signs,
        integral,
        orientation: "vol = dx0^dx1^dx2^dx3, x = x0 + x1 i + x2 j + x3 k".into(),
        surviving_chirality: if survivor { "+" } else { "-" }.into(),
        quadrature,
    })
}
