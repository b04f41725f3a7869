//! Finite-difference field calculus on flat charts.
//!
//! Fields are closed-form evaluators `x ↦ value`. Connections are Lie-valued
//! 1-forms `A = Σ A_k e^k` in orthonormal Lie coordinates; covariant
//! derivatives are `∇_k = ∂_k + ρ_*(A_k)` on twisted spinors and
//! `∇_k = ∂_k + [A_k, ·]` on Lie-valued forms. All derivatives use central
//! stencils of order 2, 4 or 6. Nested operators (`D̸²`, the connection
//! Laplacian, divergences of stress tensors) nest the same stencils.

use std::sync::Arc;

use gauss_quad::legendre::GaussLegendre;
use nalgebra::DMatrix;
use serde::Serialize;

use crate::clifford::{apply_tensor, spinor_inner, CliffordModule, TwistedSpinor};
use crate::error::{Error, Result};
use crate::exterior::{form_inner, hodge_star, hodge_star_inv, insert, wedge, Coefficient, Form, LieVec};
use crate::gauge::{GaugeAlgebra, GaugeRep};
use crate::linalg::CMat;
use crate::par::Exec;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Domain {
    Whole,
    Box { lo: Vec<f64>, hi: Vec<f64> },
    Torus { length: f64 },
}

/// A closed-form field on a flat chart.
pub struct ChartField<T> {
    dim: usize,
    domain: Domain,
    f: Arc<dyn Fn(&[f64]) -> T + Send + Sync>,
}

impl<T> Clone for ChartField<T> {
    fn clone(&self) -> Self {
        Self {
            dim: self.dim,
            domain: self.domain.clone(),
            f: Arc::clone(&self.f),
        }
    }
}

impl<T> ChartField<T> {
    pub fn new(dim: usize, domain: Domain, f: impl Fn(&[f64]) -> T + Send + Sync + 'static) -> Self {
        Self {
            dim,
            domain,
            f: Arc::new(f),
        }
    }

    pub fn on_whole(dim: usize, f: impl Fn(&[f64]) -> T + Send + Sync + 'static) -> Self {
        Self::new(dim, Domain::Whole, f)
    }

    pub fn eval(&self, x: &[f64]) -> T {
        (self.f)(x)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn domain(&self) -> &Domain {
        &self.domain
    }

    /// Same domain, new values.
    pub fn derived<S>(&self, f: impl Fn(&[f64]) -> S + Send + Sync + 'static) -> ChartField<S> {
        ChartField::new(self.dim, self.domain.clone(), f)
    }
}

/// Lie-valued connection 1-form field.
pub type Connection = ChartField<Form<LieVec>>;
pub type SpinorField = ChartField<TwistedSpinor>;

/// The zero connection on `R^m`.
pub fn zero_connection(m: usize, alg: &GaugeAlgebra) -> Connection {
    let zero = alg.zero();
    ChartField::on_whole(m, move |_| Form::zeros(m, 1, &zero).expect("degree 1"))
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct FdScheme {
    pub h: f64,
    pub order: usize,
}

impl Default for FdScheme {
    fn default() -> Self {
        Self {
            h: crate::tol::FD_STEP,
            order: 4,
        }
    }
}

const STENCIL_2: [f64; 3] = [-0.5, 0.0, 0.5];
const STENCIL_4: [f64; 5] = [1.0 / 12.0, -2.0 / 3.0, 0.0, 2.0 / 3.0, -1.0 / 12.0];
const STENCIL_6: [f64; 7] = [
    -1.0 / 60.0,
    3.0 / 20.0,
    -3.0 / 4.0,
    0.0,
    3.0 / 4.0,
    -3.0 / 20.0,
    1.0 / 60.0,
];

impl FdScheme {
    pub fn new(h: f64, order: usize) -> Result<Self> {
        if !(h > 0.0 && h.is_finite()) {
            return Err(Error::ShapeMismatch(format!("step h = {h} must be positive")));
        }
        if !matches!(order, 2 | 4 | 6) {
            return Err(Error::ShapeMismatch(format!("stencil order {order} not in {{2, 4, 6}}")));
        }
        Ok(Self { h, order })
    }

    /// First-derivative weights on offsets `−r..=r`.
    pub fn weights(&self) -> &'static [f64] {
        match self.order {
            2 => &STENCIL_2,
            6 => &STENCIL_6,
            _ => &STENCIL_4,
        }
    }

    pub fn radius(&self) -> usize {
        self.order / 2
    }

    /// Distance from `x` touched by one derivative.
    pub fn reach(&self) -> f64 {
        self.radius() as f64 * self.h
    }
}

fn check_point(domain: &Domain, x: &[f64], reach: f64) -> Result<()> {
    if let Domain::Box { lo, hi } = domain {
        let inside = x
            .iter()
            .zip(lo.iter().zip(hi))
            .all(|(&xi, (&a, &b))| xi - reach >= a && xi + reach <= b);
        if !inside {
            return Err(Error::NearBoundary {
                point: x.to_vec(),
                radius: reach,
            });
        }
    }
    Ok(())
}

fn partial_unchecked<T: Coefficient>(f: &ChartField<T>, x: &[f64], k: usize, s: FdScheme) -> T {
    let r = s.radius() as isize;
    let mut y = x.to_vec();
    let mut acc: Option<T> = None;
    for (j, &w) in s.weights().iter().enumerate() {
        if w == 0.0 {
            continue;
        }
        y[k] = x[k] + (j as isize - r) as f64 * s.h;
        let v = f.eval(&y);
        match acc.as_mut() {
            Some(a) => a.add_scaled(w / s.h, &v),
            None => {
                let mut a = v.zero_like();
                a.add_scaled(w / s.h, &v);
                acc = Some(a);
            }
        }
    }
    acc.expect("stencil has nonzero weights")
}

/// `∂_k f(x)` by a central stencil.
pub fn partial<T: Coefficient>(f: &ChartField<T>, x: &[f64], k: usize, scheme: FdScheme) -> Result<T> {
    check_point(f.domain(), x, scheme.reach())?;
    if k >= f.dim() || x.len() != f.dim() {
        return Err(Error::ShapeMismatch(format!("direction {k} at a point of length {}", x.len())));
    }
    Ok(partial_unchecked(f, x, k, scheme))
}

fn bracket_form(alg: &GaugeAlgebra, a: &LieVec, xi: &Form<LieVec>) -> Form<LieVec> {
    xi.map(|v| alg.bracket(a, v))
}

fn cov_partial_form_unchecked(
    a: &Connection,
    xi: &ChartField<Form<LieVec>>,
    x: &[f64],
    k: usize,
    s: FdScheme,
    alg: &GaugeAlgebra,
) -> Form<LieVec> {
    let mut d = partial_unchecked(xi, x, k, s);
    let ak = a.eval(x).coeffs()[k].clone();
    d.add_scaled(1.0, &bracket_form(alg, &ak, &xi.eval(x)));
    d
}

fn cov_d_unchecked(
    a: &Connection,
    xi: &ChartField<Form<LieVec>>,
    x: &[f64],
    s: FdScheme,
    alg: &GaugeAlgebra,
) -> Result<Form<LieVec>> {
    let m = xi.dim();
    let mut out: Option<Form<LieVec>> = None;
    for k in 0..m {
        let ek = Form::monomial(m, &[k], 1.0)?;
        let term = wedge(&ek, &cov_partial_form_unchecked(a, xi, x, k, s, alg))?;
        match out.as_mut() {
            Some(o) => o.add_scaled(1.0, &term),
            None => out = Some(term),
        }
    }
    Ok(out.expect("m >= 1"))
}

/// `d_ω Ξ = Σ e^k ∧ ∇_k Ξ` for a Lie-valued form field (adjoint bundle).
pub fn cov_exterior_derivative(
    a: &Connection,
    xi: &ChartField<Form<LieVec>>,
    x: &[f64],
    scheme: FdScheme,
    alg: &GaugeAlgebra,
) -> Result<Form<LieVec>> {
    check_point(xi.domain(), x, scheme.reach())?;
    cov_d_unchecked(a, xi, x, scheme, alg)
}

/// `δ_ω Ξ = −Σ e_k ⌟ ∇_k Ξ`.
pub fn cov_codifferential(
    a: &Connection,
    xi: &ChartField<Form<LieVec>>,
    x: &[f64],
    scheme: FdScheme,
    alg: &GaugeAlgebra,
) -> Result<Form<LieVec>> {
    check_point(xi.domain(), x, scheme.reach())?;
    let m = xi.dim();
    let mut out: Option<Form<LieVec>> = None;
    for k in 0..m {
        let term = insert(k, &cov_partial_form_unchecked(a, xi, x, k, scheme, alg))?;
        match out.as_mut() {
            Some(o) => o.add_scaled(-1.0, &term),
            None => out = Some(term.scaled(-1.0)),
        }
    }
    Ok(out.expect("m >= 1"))
}

/// The codifferential through the Hodge star. With `⋆α ∧ β = ⟨α, β⟩ vol` this is
/// `(−1)^{m+1} (−1)^k ⋆^{-1} d_ω ⋆ Ξ`, which agrees with [`cov_codifferential`].
pub fn cov_codifferential_hodge(
    a: &Connection,
    xi: &ChartField<Form<LieVec>>,
    x: &[f64],
    scheme: FdScheme,
    alg: &GaugeAlgebra,
) -> Result<Form<LieVec>> {
    check_point(xi.domain(), x, scheme.reach())?;
    let m = xi.dim();
    let k = xi.eval(x).degree();
    if k == 0 {
        return Err(Error::InvalidDegree { degree: 0, dim: m });
    }
    let inner = xi.clone();
    let star = xi.derived(move |y| hodge_star(&inner.eval(y)));
    let d = cov_d_unchecked(a, &star, x, scheme, alg)?;
    let sign = if (m + 1 + k).is_multiple_of(2) { 1.0 } else { -1.0 };
    Ok(hodge_star_inv(&d).scaled(sign))
}

fn curvature_unchecked(a: &Connection, x: &[f64], s: FdScheme, alg: &GaugeAlgebra) -> Form<LieVec> {
    let m = a.dim();
    let da: Vec<Form<LieVec>> = (0..m).map(|i| partial_unchecked(a, x, i, s)).collect();
    let ax = a.eval(x);
    Form::from_fn(m, 2, |idx| {
        let (i, j) = (idx[0], idx[1]);
        let mut f = da[i].coeffs()[j].clone();
        f -= &da[j].coeffs()[i];
        f += alg.bracket(&ax.coeffs()[i], &ax.coeffs()[j]);
        f
    })
    .expect("m >= 2")
}

/// `F = dA + ½[A, A]`, i.e. `F_ij = ∂_i A_j − ∂_j A_i + [A_i, A_j]`.
pub fn curvature_of(a: &Connection, x: &[f64], scheme: FdScheme, alg: &GaugeAlgebra) -> Result<Form<LieVec>> {
    check_point(a.domain(), x, scheme.reach())?;
    if a.dim() < 2 {
        return Err(Error::InvalidDimension(a.dim()));
    }
    Ok(curvature_unchecked(a, x, scheme, alg))
}

/// Curvature as a field (nested finite differences).
pub fn curvature_field(a: &Connection, scheme: FdScheme, alg: &GaugeAlgebra) -> ChartField<Form<LieVec>> {
    let a2 = a.clone();
    let alg = alg.clone();
    a.derived(move |y| curvature_unchecked(&a2, y, scheme, &alg))
}

fn cov_partial_spinor_unchecked(
    a: &Connection,
    psi: &SpinorField,
    x: &[f64],
    k: usize,
    s: FdScheme,
    rep: &GaugeRep,
) -> TwistedSpinor {
    let d = partial_unchecked(psi, x, k, s);
    let ak = rep.rho(&a.eval(x).coeffs()[k]);
    d + psi.eval(x) * ak.transpose()
}

/// `∇_k Ψ = ∂_kΨ + ρ_*(A_k)Ψ`.
pub fn cov_partial_spinor(
    a: &Connection,
    psi: &SpinorField,
    x: &[f64],
    k: usize,
    scheme: FdScheme,
    rep: &GaugeRep,
) -> Result<TwistedSpinor> {
    check_point(psi.domain(), x, scheme.reach())?;
    Ok(cov_partial_spinor_unchecked(a, psi, x, k, scheme, rep))
}

fn dirac_unchecked(
    a: &Connection,
    psi: &SpinorField,
    x: &[f64],
    s: FdScheme,
    module: &CliffordModule,
    rep: &GaugeRep,
) -> TwistedSpinor {
    let mut out: Option<TwistedSpinor> = None;
    for k in 0..module.dim() {
        let term = module.gamma(k) * cov_partial_spinor_unchecked(a, psi, x, k, s, rep);
        match out.as_mut() {
            Some(o) => *o += term,
            None => out = Some(term),
        }
    }
    out.expect("m >= 2")
}

/// `D̸_A Ψ = Σ_k γ_k ∇_k Ψ`.
pub fn dirac_apply(
    a: &Connection,
    psi: &SpinorField,
    x: &[f64],
    scheme: FdScheme,
    module: &CliffordModule,
    rep: &GaugeRep,
) -> Result<TwistedSpinor> {
    check_point(psi.domain(), x, scheme.reach())?;
    if module.dim() != psi.dim() || a.dim() != psi.dim() {
        return Err(Error::ShapeMismatch("field and module dimensions differ".into()));
    }
    Ok(dirac_unchecked(a, psi, x, scheme, module, rep))
}

/// `D̸_A Ψ` as a field.
pub fn dirac_field(
    a: &Connection,
    psi: &SpinorField,
    scheme: FdScheme,
    module: &CliffordModule,
    rep: &GaugeRep,
) -> SpinorField {
    let (a, p, cl, r) = (a.clone(), psi.clone(), module.clone(), rep.clone());
    psi.derived(move |y| dirac_unchecked(&a, &p, y, scheme, &cl, &r))
}

/// `ρ_*(F)·Ψ = Σ_{i<j} γ_iγ_j ρ_*(F_ij) Ψ`.
pub fn curvature_action(f: &Form<LieVec>, psi: &TwistedSpinor, module: &CliffordModule, rep: &GaugeRep) -> TwistedSpinor {
    let mut out = TwistedSpinor::zeros(psi.nrows(), psi.ncols());
    for (mask, v) in f.terms() {
        out += apply_tensor(module.blade(mask), &rep.rho(v), psi);
    }
    out
}

/// `‖D̸²Ψ − ΔΨ − ρ_*(F)·Ψ‖` at `x`, with `Δ = −Σ ∇_k∇_k` and `F` from [`curvature_of`].
pub fn weitzenbock_residual(
    a: &Connection,
    psi: &SpinorField,
    x: &[f64],
    scheme: FdScheme,
    module: &CliffordModule,
    rep: &GaugeRep,
) -> Result<f64> {
    check_point(psi.domain(), x, 2.0 * scheme.reach())?;
    let alg = rep.algebra();
    let dpsi = dirac_field(a, psi, scheme, module, rep);
    let d2 = dirac_unchecked(a, &dpsi, x, scheme, module, rep);
    let mut lap = TwistedSpinor::zeros(module.spin_dim(), rep.dim());
    for k in 0..module.dim() {
        let (a2, p2, r2) = (a.clone(), psi.clone(), rep.clone());
        let nabla_k = psi.derived(move |y| cov_partial_spinor_unchecked(&a2, &p2, y, k, scheme, &r2));
        lap -= cov_partial_spinor_unchecked(a, &nabla_k, x, k, scheme, rep);
    }
    let f = curvature_unchecked(a, x, scheme, alg);
    let rf = curvature_action(&f, &psi.eval(x), module, rep);
    Ok((d2 - lap - rf).norm())
}

/// Pointwise stress-energy data.
#[derive(Debug, Clone)]
pub struct StressTensors {
    pub ym: DMatrix<f64>,
    pub dirac: DMatrix<f64>,
    /// `|F|²`.
    pub f_norm_sq: f64,
    /// `Re⟨D̸Ψ, Ψ⟩`.
    pub dirac_pairing: f64,
}

impl StressTensors {
    pub fn total(&self) -> DMatrix<f64> {
        &self.ym + &self.dirac
    }

    /// `|Tr T_YM − (m/2 − 2)|F|²|`.
    pub fn ym_trace_residual(&self) -> f64 {
        let m = self.ym.nrows() as f64;
        (self.ym.trace() - (m / 2.0 - 2.0) * self.f_norm_sq).abs()
    }

    /// `|Tr T_Dirac − ((m − 1)/2)⟨D̸Ψ, Ψ⟩|`.
    pub fn dirac_trace_residual(&self) -> f64 {
        let m = self.dirac.nrows() as f64;
        (self.dirac.trace() - 0.5 * (m - 1.0) * self.dirac_pairing).abs()
    }
}

/// The Yang–Mills stress tensor of a curvature value.
pub fn ym_stress(f: &Form<LieVec>) -> (DMatrix<f64>, f64) {
    let m = f.dim();
    let norm_sq = f.norm_sq();
    let t = DMatrix::from_fn(m, m, |a, b| {
        let cross: f64 = (0..m)
            .map(|c| f.component(&[a, c]).dot(&f.component(&[b, c])))
            .sum();
        -cross + if a == b { 0.5 * norm_sq } else { 0.0 }
    });
    (t, norm_sq)
}

/// The Dirac stress tensor from `Ψ` and its covariant derivatives `∇_kΨ`.
pub fn dirac_stress(psi: &TwistedSpinor, nabla: &[TwistedSpinor], module: &CliffordModule) -> (DMatrix<f64>, f64) {
    let m = module.dim();
    let dpsi = nabla
        .iter()
        .enumerate()
        .fold(TwistedSpinor::zeros(psi.nrows(), psi.ncols()), |acc, (k, n)| {
            acc + module.gamma(k) * n
        });
    let pairing = spinor_inner(&dpsi, psi).re;
    let t = DMatrix::from_fn(m, m, |a, b| {
        let v = module.gamma(a) * &nabla[b] + module.gamma(b) * &nabla[a];
        -0.25 * spinor_inner(&v, psi).re + if a == b { 0.5 * pairing } else { 0.0 }
    });
    (t, pairing)
}

fn stress_unchecked(
    a: &Connection,
    psi: &SpinorField,
    x: &[f64],
    s: FdScheme,
    module: &CliffordModule,
    rep: &GaugeRep,
) -> StressTensors {
    let f = curvature_unchecked(a, x, s, rep.algebra());
    let (ym, f_norm_sq) = ym_stress(&f);
    let nabla: Vec<TwistedSpinor> = (0..module.dim())
        .map(|k| cov_partial_spinor_unchecked(a, psi, x, k, s, rep))
        .collect();
    let (dirac, dirac_pairing) = dirac_stress(&psi.eval(x), &nabla, module);
    StressTensors {
        ym,
        dirac,
        f_norm_sq,
        dirac_pairing,
    }
}

/// `T_YM` and `T_Dirac` at `x`; the curvature is taken from `A` by finite differences.
pub fn stress_tensors(
    a: &Connection,
    psi: &SpinorField,
    x: &[f64],
    scheme: FdScheme,
    module: &CliffordModule,
    rep: &GaugeRep,
) -> Result<StressTensors> {
    check_point(psi.domain(), x, scheme.reach())?;
    Ok(stress_unchecked(a, psi, x, scheme, module, rep))
}

/// `T_DYM = T_YM + T_Dirac` as a field.
pub fn stress_field(
    a: &Connection,
    psi: &SpinorField,
    scheme: FdScheme,
    module: &CliffordModule,
    rep: &GaugeRep,
) -> ChartField<DMatrix<f64>> {
    let (a, p, cl, r) = (a.clone(), psi.clone(), module.clone(), rep.clone());
    psi.derived(move |y| stress_unchecked(&a, &p, y, scheme, &cl, &r).total())
}

/// `‖Σ_i ∂_i T(e_i, ·)‖` at `x`.
pub fn divergence_residual(t: &ChartField<DMatrix<f64>>, x: &[f64], scheme: FdScheme) -> Result<f64> {
    check_point(t.domain(), x, scheme.reach())?;
    let m = t.dim();
    let mut div = vec![0.0; m];
    for i in 0..m {
        let d = partial_unchecked(t, x, i, scheme);
        for (j, dj) in div.iter_mut().enumerate() {
            *dj += d[(i, j)];
        }
    }
    Ok(div.iter().map(|v| v * v).sum::<f64>().sqrt())
}

/// `| e^{4u}·|F|²_ḡ − |F|²_g |` for `ḡ = e^{2u}g` in dimension 4: the frame
/// rescales as `ē^i = e^u e^i`, so components of a 2-form scale by `e^{−2u}`.
pub fn conformal_ym_density_check(f: &Form<LieVec>, u: f64) -> Result<f64> {
    if f.dim() != 4 || f.degree() != 2 {
        return Err(Error::InvalidDegree {
            degree: f.degree(),
            dim: f.dim(),
        });
    }
    let rescaled = f.scaled((-2.0 * u).exp());
    let bar = form_inner(&rescaled, &rescaled)? * (4.0 * u).exp();
    Ok((bar - form_inner(f, f)?).abs())
}

/// Sample-point residual record.
#[derive(Debug, Clone, Serialize)]
pub struct PointRecord {
    pub point: Vec<f64>,
    pub residual: f64,
    pub h: f64,
    pub order: usize,
}

/// Observed convergence orders `log(r_i/r_{i+1}) / log(h_i/h_{i+1})`.
pub fn observed_orders(hs: &[f64], residuals: &[f64]) -> Vec<f64> {
    hs.windows(2)
        .zip(residuals.windows(2))
        .map(|(h, r)| (r[0] / r[1]).ln() / (h[0] / h[1]).ln())
        .collect()
}

/// A residual evaluated along a step ladder.
#[derive(Debug, Clone, Serialize)]
pub struct ResidualLadder {
    pub hs: Vec<f64>,
    pub residuals: Vec<f64>,
    pub orders: Vec<f64>,
    pub stencil_order: usize,
}

impl ResidualLadder {
    pub fn run(hs: &[f64], order: usize, mut f: impl FnMut(FdScheme) -> Result<f64>) -> Result<Self> {
        let residuals = hs
            .iter()
            .map(|&h| f(FdScheme::new(h, order)?))
            .collect::<Result<Vec<_>>>()?;
        Ok(Self {
            hs: hs.to_vec(),
            orders: observed_orders(hs, &residuals),
            residuals,
            stencil_order: order,
        })
    }

    /// Smallest observed order, `None` for a single-step ladder.
    pub fn min_order(&self) -> Option<f64> {
        self.orders.iter().copied().reduce(f64::min)
    }
}

/// Integration region for [`integrate`].
#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum QuadDomain {
    /// Axis-aligned box.
    Box { lo: Vec<f64>, hi: Vec<f64> },
    /// All of `R^m` through `x_i = tan θ_i` on `(−π/2, π/2)^m`.
    Compactified { dim: usize },
}

impl QuadDomain {
    fn dim(&self) -> usize {
        match self {
            QuadDomain::Box { lo, .. } => lo.len(),
            QuadDomain::Compactified { dim } => *dim,
        }
    }
}

/// Per-axis nodes and weights (with the Jacobian folded into the weights).
fn axis_rule(domain: &QuadDomain, axis: usize, n: usize) -> Result<Vec<(f64, f64)>> {
    let degree = std::num::NonZeroUsize::new(n).ok_or_else(|| Error::Quadrature("zero nodes".into()))?;
    let rule = GaussLegendre::new(degree);
    let (a, b) = match domain {
        QuadDomain::Box { lo, hi } => (lo[axis], hi[axis]),
        QuadDomain::Compactified { .. } => (-std::f64::consts::FRAC_PI_2, std::f64::consts::FRAC_PI_2),
    };
    let half = 0.5 * (b - a);
    let mid = 0.5 * (b + a);
    Ok(rule
        .as_node_weight_pairs()
        .iter()
        .map(|&(t, w)| {
            let s = mid + half * t;
            match domain {
                QuadDomain::Box { .. } => (s, w * half),
                QuadDomain::Compactified { .. } => {
                    let c = s.cos();
                    (s.tan(), w * half / (c * c))
                }
            }
        })
        .collect())
}

/// Tensor-product Gauss–Legendre estimate with `n` nodes per axis. The
/// outermost axis is split into independent slabs; slab sums are added in a
/// fixed order.
pub fn integrate(
    density: &(dyn Fn(&[f64]) -> f64 + Sync),
    domain: &QuadDomain,
    n: usize,
    exec: Exec,
) -> Result<f64> {
    let m = domain.dim();
    if m == 0 {
        return Err(Error::Quadrature("zero-dimensional domain".into()));
    }
    let rules = (0..m).map(|ax| axis_rule(domain, ax, n)).collect::<Result<Vec<_>>>()?;
    let slabs = exec.map(n, |i0| {
        let (x0, w0) = rules[0][i0];
        let mut x = vec![0.0; m];
        x[0] = x0;
        let mut idx = vec![0usize; m];
        let mut sum = 0.0;
        if m == 1 {
            return w0 * density(&x);
        }
        loop {
            let mut w = w0;
            for ax in 1..m {
                let (xa, wa) = rules[ax][idx[ax]];
                x[ax] = xa;
                w *= wa;
            }
            sum += w * density(&x);
            let mut ax = m - 1;
            loop {
                idx[ax] += 1;
                if idx[ax] < n {
                    break;
                }
                idx[ax] = 0;
                ax -= 1;
                if ax == 0 {
                    return sum;
                }
            }
        }
    });
    let total: f64 = slabs.iter().sum();
    if !total.is_finite() {
        return Err(Error::Quadrature("non-finite integrand value".into()));
    }
    Ok(total)
}

#[derive(Debug, Clone, Serialize)]
pub struct QuadratureReport {
    pub resolutions: Vec<usize>,
    pub values: Vec<f64>,
    /// Difference between the two finest levels.
    pub error_estimate: f64,
    pub converged: bool,
}

impl QuadratureReport {
    pub fn value(&self) -> f64 {
        *self.values.last().expect("nonempty ladder")
    }
}

/// Integrates along a resolution ladder; flags non-convergence when the last
/// refinement changes the value by more than `tol`.
pub fn integrate_box(
    density: &(dyn Fn(&[f64]) -> f64 + Sync),
    domain: &QuadDomain,
    ladder: &[usize],
    tol: f64,
    exec: Exec,
) -> Result<QuadratureReport> {
    if ladder.is_empty() {
        return Err(Error::Quadrature("empty resolution ladder".into()));
    }
    let values = ladder
        .iter()
        .map(|&n| integrate(density, domain, n, exec))
        .collect::<Result<Vec<_>>>()?;
    let error_estimate = if values.len() > 1 {
        (values[values.len() - 1] - values[values.len() - 2]).abs()
    } else {
        f64::NAN
    };
    Ok(QuadratureReport {
        resolutions: ladder.to_vec(),
        converged: error_estimate <= tol,
        values,
        error_estimate,
    })
}

/// Anti-Hermiticity defect of `ρ_*` applied to every coefficient of a Lie form.
pub fn lie_form_anti_hermiticity(f: &Form<LieVec>, rep: &GaugeRep) -> f64 {
    f.coeffs()
        .iter()
        .map(|v| crate::linalg::anti_hermiticity_defect(&rep.rho(v)))
        .fold(0.0, f64::max)
}

/// Spinor field from a closure returning matrices, for convenience in tests
/// and drivers.
pub fn spinor_field(dim: usize, f: impl Fn(&[f64]) -> CMat + Send + Sync + 'static) -> SpinorField {
    ChartField::on_whole(dim, f)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{c, max_abs};

    fn su2() -> GaugeAlgebra {
        GaugeAlgebra::su(2).unwrap()
    }

    #[test]
    fn scheme_validation() {
        assert!(FdScheme::new(0.0, 4).is_err());
        assert!(FdScheme::new(0.1, 3).is_err());
        assert_eq!(FdScheme::new(0.1, 6).unwrap().radius(), 3);
    }

    #[test]
    fn flat_exterior_derivative() {
        let alg = su2();
        let a = zero_connection(4, &alg);
        let v = LieVec::from_vec(vec![1.0, 0.0, 0.0]);
        let xi: ChartField<Form<LieVec>> =
            ChartField::on_whole(4, move |x| Form::monomial(4, &[1], v.clone() * x[0]).unwrap());
        let d = cov_exterior_derivative(&a, &xi, &[0.3, 0.1, 0.2, 0.4], FdScheme::default(), &alg).unwrap();
        assert!((d.component(&[0, 1])[0] - 1.0).abs() < 1e-12);
        assert!((d.norm() - 1.0).abs() < 1e-12);
    }

    #[test]
    fn flat_codifferential_is_minus_divergence() {
        let alg = su2();
        let a = zero_connection(3, &alg);
        let v = LieVec::from_vec(vec![0.0, 1.0, 0.0]);
        let xi: ChartField<Form<LieVec>> =
            ChartField::on_whole(3, move |x| Form::monomial(3, &[0], v.clone() * x[0]).unwrap());
        let x = [0.2, -0.3, 0.5, 0.1];
        let d = cov_codifferential(&a, &xi, &x[..3], FdScheme::default(), &alg).unwrap();
        assert!((d.coeffs()[0][1] + 1.0).abs() < 1e-12);
        for m in [2, 3, 4] {
            let a = zero_connection(m, &alg);
            let v = LieVec::from_vec(vec![0.0, 1.0, 0.0]);
            let xi: ChartField<Form<LieVec>> =
                ChartField::on_whole(m, move |x| Form::monomial(m, &[0], v.clone() * x[0]).unwrap());
            let h = cov_codifferential_hodge(&a, &xi, &x[..m], FdScheme::default(), &alg).unwrap();
            assert!((h.coeffs()[0][1] + 1.0).abs() < 1e-12, "m={m}");
        }
    }

    #[test]
    fn boundary_is_enforced() {
        let alg = su2();
        let a = zero_connection(2, &alg);
        let psi = ChartField::new(
            2,
            Domain::Box {
                lo: vec![0.0, 0.0],
                hi: vec![1.0, 1.0],
            },
            |_| CMat::zeros(2, 2),
        );
        let cl = CliffordModule::new(2).unwrap();
        let rep = GaugeRep::standard(&alg);
        let err = dirac_apply(&a, &psi, &[0.01, 0.5], FdScheme::default(), &cl, &rep).unwrap_err();
        assert!(matches!(err, Error::NearBoundary { .. }));
        assert!(dirac_apply(&a, &psi, &[0.5, 0.5], FdScheme::default(), &cl, &rep).is_ok());
    }

    #[test]
    fn plane_wave_dirac() {
        let alg = su2();
        let cl = CliffordModule::new(3).unwrap();
        let rep = GaugeRep::standard(&alg);
        let a = zero_connection(3, &alg);
        let p = [1.0, -2.0, 0.5];
        let psi0 = CMat::from_fn(2, 2, |i, j| c(1.0 + i as f64, j as f64 - 0.5));
        let psi0c = psi0.clone();
        let psi = spinor_field(3, move |x| {
            let ph = p[0] * x[0] + p[1] * x[1] + p[2] * x[2];
            &psi0c * c(ph.cos(), ph.sin())
        });
        let x = [0.1, 0.2, 0.3];
        let d = dirac_apply(&a, &psi, &x, FdScheme::new(1e-3, 6).unwrap(), &cl, &rep).unwrap();
        let pnorm = (p.iter().map(|v| v * v).sum::<f64>()).sqrt();
        let psinorm = psi0.norm();
        assert!((d.norm() - pnorm * psinorm).abs() < 1e-9);
        let expected = cl.vector(&p) * psi.eval(&x) * crate::linalg::I;
        assert!(max_abs(&(d - expected)) < 1e-9);
    }

    #[test]
    fn constant_fields_give_k_operator() {
        let alg = su2();
        let cl = CliffordModule::new(4).unwrap();
        let rep = GaugeRep::standard(&alg);
        let eta = Form::from_fn(4, 1, |idx| LieVec::from_fn(3, |a, _| (idx[0] + 2 * a) as f64 * 0.1)).unwrap();
        let eta2 = eta.clone();
        let a: Connection = ChartField::on_whole(4, move |_| eta2.clone());
        let psi0 = CMat::from_fn(4, 2, |i, j| c(i as f64, 1.0 - j as f64));
        let p2 = psi0.clone();
        let psi = spinor_field(4, move |_| p2.clone());
        let d = dirac_apply(&a, &psi, &[0.0; 4], FdScheme::default(), &cl, &rep).unwrap();
        let k = crate::current::k_eta_apply(&eta, &psi0, &cl, &rep).unwrap();
        assert!(max_abs(&(d - k)) < 1e-12);
    }

    #[test]
    fn constant_curvature_cases() {
        let alg = su2();
        let abel = LieVec::from_vec(vec![0.0, 0.0, 1.0]);
        let a: Connection = ChartField::on_whole(3, move |_| {
            Form::from_fn(3, 1, |idx| abel.clone() * (idx[0] as f64 + 1.0)).unwrap()
        });
        let f = curvature_of(&a, &[0.0; 3], FdScheme::default(), &alg).unwrap();
        assert!(f.norm() < 1e-12);

        let a1 = LieVec::from_vec(vec![1.0, 0.0, 0.0]);
        let a2 = LieVec::from_vec(vec![0.0, 1.0, 0.0]);
        let (b1, b2) = (a1.clone(), a2.clone());
        let a: Connection = ChartField::on_whole(2, move |_| {
            Form::from_fn(2, 1, |idx| if idx[0] == 0 { b1.clone() } else { b2.clone() }).unwrap()
        });
        let f = curvature_of(&a, &[0.0; 2], FdScheme::default(), &alg).unwrap();
        let expected = alg.bracket(&a1, &a2);
        assert!((f.component(&[0, 1]) - expected).amax() < 1e-12);
    }

    #[test]
    fn weitzenbock_polynomial_spinor() {
        let alg = su2();
        let cl = CliffordModule::new(4).unwrap();
        let rep = GaugeRep::standard(&alg);
        let a = zero_connection(4, &alg);
        // harmonic quadratic: x0² − x1², x2·x3
        let psi = spinor_field(4, |x| {
            CMat::from_fn(4, 2, |i, j| {
                c(x[0] * x[0] - x[1] * x[1] + i as f64, x[2] * x[3] * (j as f64 + 1.0))
            })
        });
        let r = weitzenbock_residual(&a, &psi, &[0.3, -0.2, 0.5, 0.1], FdScheme::default(), &cl, &rep).unwrap();
        assert!(r < 1e-10, "r = {r}");
    }

    #[test]
    fn weitzenbock_converges_with_nonabelian_field() {
        let alg = su2();
        let cl = CliffordModule::new(3).unwrap();
        let rep = GaugeRep::standard(&alg);
        let a: Connection = ChartField::on_whole(3, |x| {
            Form::from_fn(3, 1, |idx| {
                let k = idx[0] as f64;
                LieVec::from_fn(3, |al, _| ((al as f64 + 1.0) * x[0] + k * x[1]).sin() * 0.5 + x[2] * 0.1)
            })
            .unwrap()
        });
        let psi = spinor_field(3, |x| {
            CMat::from_fn(2, 2, |i, j| c((x[0] + i as f64 * x[1]).cos(), (x[2] * (j as f64 + 1.0)).sin()))
        });
        let x = [0.2, 0.4, -0.1];
        let ladder = ResidualLadder::run(&[4e-2, 2e-2, 1e-2], 4, |s| {
            weitzenbock_residual(&a, &psi, &x, s, &cl, &rep)
        })
        .unwrap();
        assert!(ladder.min_order().unwrap() > 3.5, "{:?}", ladder);
    }

    #[test]
    fn stress_traces_are_algebraic() {
        let alg = su2();
        let rep = GaugeRep::standard(&alg);
        for m in [3, 4, 5] {
            let cl = CliffordModule::new(m).unwrap();
            let a: Connection = ChartField::on_whole(m, move |x| {
                Form::from_fn(m, 1, |idx| {
                    LieVec::from_fn(3, |al, _| (x[idx[0]] * (al as f64 + 1.0)).sin() + x[0] * x[1])
                })
                .unwrap()
            });
            let n = cl.spin_dim();
            let psi = spinor_field(m, move |x| {
                CMat::from_fn(n, 2, |i, j| c((x[0] * (i + 1) as f64).sin(), x[1] * j as f64 + x[m - 1]))
            });
            let s = stress_tensors(&a, &psi, &vec![0.3; m], FdScheme::default(), &cl, &rep).unwrap();
            assert!(s.ym_trace_residual() < 1e-12 * (1.0 + s.f_norm_sq));
            assert!(s.dirac_trace_residual() < 1e-12 * (1.0 + s.dirac_pairing.abs()));
            assert!((&s.ym - s.ym.transpose()).amax() < 1e-14);
            assert!((&s.dirac - s.dirac.transpose()).amax() < 1e-14);
        }
    }

    #[test]
    fn constant_tensor_has_no_divergence() {
        let t = ChartField::on_whole(3, |_| DMatrix::from_element(3, 3, 2.0));
        assert!(divergence_residual(&t, &[0.0; 3], FdScheme::default()).unwrap() < 1e-12);
    }

    #[test]
    fn quadrature_basics() {
        let unit = QuadDomain::Box {
            lo: vec![0.0; 4],
            hi: vec![1.0; 4],
        };
        let v = integrate(&|_| 1.0, &unit, 4, Exec::Sequential).unwrap();
        assert!((v - 1.0).abs() < 1e-14);
        let r4 = QuadDomain::Compactified { dim: 4 };
        let gauss = |x: &[f64]| (-x.iter().map(|t| t * t).sum::<f64>()).exp();
        let rep = integrate_box(&gauss, &r4, &[32, 64], 1e-4, Exec::Parallel).unwrap();
        let pi2 = std::f64::consts::PI.powi(2);
        assert!((rep.value() - pi2).abs() < 1e-10, "{:?}", rep);
        assert!(rep.converged, "{:?}", rep);
    }

    #[test]
    fn conformal_weight() {
        let f = Form::from_fn(4, 2, |idx| LieVec::from_fn(3, |a, _| (idx[0] + idx[1] + a) as f64 * 0.3 - 0.5)).unwrap();
        assert_eq!(conformal_ym_density_check(&f, 0.0).unwrap(), 0.0);
        assert!(conformal_ym_density_check(&f, 0.7).unwrap() < 1e-13);
        let e12 = Form::monomial(4, &[0, 1], LieVec::from_vec(vec![1.0])).unwrap();
        assert!(conformal_ym_density_check(&e12, -1.3).unwrap() < 1e-13);
    }

    #[test]
    fn orders_from_ladder() {
        let o = observed_orders(&[0.02, 0.01], &[16e-8, 1e-8]);
        assert!((o[0] - 4.0).abs() < 1e-12);
    }
}
