//! Explicit Dirac–Yang–Mills pairs on flat `R^4`: twistor spinors, the BPST
//! instanton and the Clifford-product ansatz `Ψ = F·φ`.
//!
//! All BPST component formulas are generated from quaternion arithmetic, with
//! `x = x_0 + x_1 i + x_2 j + x_3 k` and `{i, j, k} ↦ {−iσ₁, −iσ₂, −iσ₃}`.

use std::ops::{Add, Mul, Neg, Sub};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::clifford::{chiral_project, clifford_tensor_product, CliffordModule, TwistedSpinor};
use crate::current::dirac_current;
use crate::error::{Error, Result};
use crate::exterior::{Form, LieVec};
use crate::fieldcalc::{
    cov_codifferential, cov_exterior_derivative, dirac_apply, observed_orders, partial, ChartField, Connection,
    FdScheme, SpinorField,
};
use crate::gauge::{GaugeAlgebra, GaugeRep};
use crate::linalg::{c, pauli, CMat, CVec, I};
use crate::par::Exec;

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Quaternion(pub [f64; 4]);

impl Quaternion {
    pub const ONE: Self = Self([1.0, 0.0, 0.0, 0.0]);

    pub fn new(a: f64, b: f64, c: f64, d: f64) -> Self {
        Self([a, b, c, d])
    }

    /// The `k`-th basis unit `1, i, j, k`.
    pub fn unit(k: usize) -> Self {
        let mut q = [0.0; 4];
        q[k] = 1.0;
        Self(q)
    }

    pub fn from_point(x: &[f64]) -> Self {
        Self([x[0], x[1], x[2], x[3]])
    }

    pub fn re(&self) -> f64 {
        self.0[0]
    }

    pub fn im(&self) -> [f64; 3] {
        [self.0[1], self.0[2], self.0[3]]
    }

    pub fn conj(&self) -> Self {
        let [a, b, c, d] = self.0;
        Self([a, -b, -c, -d])
    }

    pub fn norm_sq(&self) -> f64 {
        self.0.iter().map(|v| v * v).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }

    pub fn scale(&self, s: f64) -> Self {
        Self(self.0.map(|v| v * s))
    }

    /// `a + b(−iσ₁) + c(−iσ₂) + d(−iσ₃)`.
    pub fn to_matrix(&self) -> CMat {
        let [a, b, cc, d] = self.0;
        let mut m = CMat::identity(2, 2) * c(a, 0.0);
        for (k, v) in [b, cc, d].into_iter().enumerate() {
            m += pauli(k + 1) * (-I * v);
        }
        m
    }
}

impl Mul for Quaternion {
    type Output = Self;
    fn mul(self, o: Self) -> Self {
        let [a1, b1, c1, d1] = self.0;
        let [a2, b2, c2, d2] = o.0;
        Self([
            a1 * a2 - b1 * b2 - c1 * c2 - d1 * d2,
            a1 * b2 + b1 * a2 + c1 * d2 - d1 * c2,
            a1 * c2 - b1 * d2 + c1 * a2 + d1 * b2,
            a1 * d2 + b1 * c2 - c1 * b2 + d1 * a2,
        ])
    }
}

impl Add for Quaternion {
    type Output = Self;
    fn add(self, o: Self) -> Self {
        Self(std::array::from_fn(|i| self.0[i] + o.0[i]))
    }
}

impl Sub for Quaternion {
    type Output = Self;
    fn sub(self, o: Self) -> Self {
        Self(std::array::from_fn(|i| self.0[i] - o.0[i]))
    }
}

impl Neg for Quaternion {
    type Output = Self;
    fn neg(self) -> Self {
        self.scale(-1.0)
    }
}

/// The BPST instanton on the chart `p₀`, optionally dilated:
/// `A = Im(q̄ dq)/(λ² + |q|²)`, `F = λ² dq̄∧dq/(λ² + |q|²)²`.
#[derive(Debug, Clone)]
pub struct Bpst {
    scale: f64,
    alg: GaugeAlgebra,
}

impl Bpst {
    pub fn new() -> Self {
        Self::scaled(1.0).expect("unit scale")
    }

    pub fn scaled(scale: f64) -> Result<Self> {
        if !(scale > 0.0 && scale.is_finite()) {
            return Err(Error::Degenerate(format!("instanton scale {scale}")));
        }
        Ok(Self {
            scale,
            alg: GaugeAlgebra::su(2)?,
        })
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn algebra(&self) -> &GaugeAlgebra {
        &self.alg
    }

    fn quat_to_lie(&self, q: Quaternion) -> LieVec {
        self.alg.coords(&q.to_matrix())
    }

    /// `A_k(x)` as imaginary quaternions.
    pub fn connection_quat(&self, x: &[f64]) -> [Quaternion; 4] {
        let q = Quaternion::from_point(x);
        let den = self.scale * self.scale + q.norm_sq();
        std::array::from_fn(|k| {
            let v = q.conj() * Quaternion::unit(k);
            Quaternion::new(0.0, v.0[1], v.0[2], v.0[3]).scale(1.0 / den)
        })
    }

    /// `F_ab(x)` for `a < b` in lexicographic order `(01, 02, 03, 12, 13, 23)`.
    pub fn curvature_quat(&self, x: &[f64]) -> [Quaternion; 6] {
        let q = Quaternion::from_point(x);
        let l2 = self.scale * self.scale;
        let w = l2 / (l2 + q.norm_sq()).powi(2);
        let pairs = [(0, 1), (0, 2), (0, 3), (1, 2), (1, 3), (2, 3)];
        pairs.map(|(a, b)| {
            let (ea, eb) = (Quaternion::unit(a), Quaternion::unit(b));
            (ea.conj() * eb - eb.conj() * ea).scale(w)
        })
    }

    pub fn connection(&self, x: &[f64]) -> Form<LieVec> {
        let a = self.connection_quat(x);
        Form::from_fn(4, 1, |idx| self.quat_to_lie(a[idx[0]])).expect("degree 1")
    }

    pub fn curvature(&self, x: &[f64]) -> Form<LieVec> {
        let f = self.curvature_quat(x);
        Form::from_fn(4, 2, |idx| self.quat_to_lie(f[pair_slot(idx[0], idx[1])])).expect("degree 2")
    }

    pub fn connection_field(&self) -> Connection {
        let me = self.clone();
        ChartField::on_whole(4, move |x| me.connection(x))
    }

    pub fn curvature_field(&self) -> ChartField<Form<LieVec>> {
        let me = self.clone();
        ChartField::on_whole(4, move |x| me.curvature(x))
    }

    /// Pointwise `ch₂` density `−Tr(F∧F)_{0123}/(8π²)`, using
    /// `Tr(ρ(u)ρ(v)) = −2 u·v` on imaginary quaternions.
    pub fn ch2_density(&self, x: &[f64]) -> f64 {
        let f = self.curvature_quat(x);
        let dot = |p: Quaternion, q: Quaternion| p.0[1] * q.0[1] + p.0[2] * q.0[2] + p.0[3] * q.0[3];
        let pf = dot(f[0], f[5]) - dot(f[1], f[4]) + dot(f[2], f[3]);
        let tr_ff = -4.0 * pf;
        -tr_ff / (8.0 * std::f64::consts::PI.powi(2))
    }
}

/// Position of `(a, b)`, `a < b`, in the order `(01, 02, 03, 12, 13, 23)`.
fn pair_slot(a: usize, b: usize) -> usize {
    match (a, b) {
        (0, k) => k - 1,
        (1, k) => k + 1,
        _ => 5,
    }
}

impl Default for Bpst {
    fn default() -> Self {
        Self::new()
    }
}

/// Constant spinors defining `φ(x) = ψ₀ + ¼ x·ψ₁`.
#[derive(Debug, Clone)]
pub struct TwistorSpec {
    pub psi0: CVec,
    pub psi1: CVec,
}

impl TwistorSpec {
    /// A chiral twistor spinor: `ψ₀ ∈ Σ^±`, `ψ₁ ∈ Σ^∓` (projections of the inputs).
    pub fn chiral(positive: bool, psi0: &CVec, psi1: &CVec, module: &CliffordModule) -> Result<Self> {
        let col = |v: &CVec| CMat::from_column_slice(v.len(), 1, v.as_slice());
        let p0 = chiral_project(&col(psi0), positive, module)?;
        let p1 = chiral_project(&col(psi1), !positive, module)?;
        Ok(Self {
            psi0: p0.column(0).into_owned(),
            psi1: p1.column(0).into_owned(),
        })
    }

    /// `Some(true)` for `φ ∈ Σ^+` pointwise, `Some(false)` for `Σ^-`, `None` otherwise.
    pub fn chirality(&self, module: &CliffordModule) -> Result<Option<bool>> {
        let g = module.chirality()?;
        let tol = 1e-12 * (1.0 + self.psi0.norm() + self.psi1.norm());
        let (g0, g1) = (g * &self.psi0, g * &self.psi1);
        let in0 = |s: f64| (&g0 - &self.psi0 * c(s, 0.0)).norm() <= tol;
        let in1 = |s: f64| (&g1 - &self.psi1 * c(s, 0.0)).norm() <= tol;
        Ok([true, false].into_iter().find(|&pos| {
            let s = if pos { 1.0 } else { -1.0 };
            in0(s) && in1(-s)
        }))
    }
}

/// `x ↦ ψ₀ + ¼ Σ_k x_k γ_k ψ₁`, stored as a one-column spinor.
pub fn twistor_field(spec: &TwistorSpec, module: &CliffordModule) -> Result<SpinorField> {
    let n = module.spin_dim();
    if spec.psi0.len() != n || spec.psi1.len() != n {
        return Err(Error::ShapeMismatch("twistor data of wrong spin dimension".into()));
    }
    if module.dim() != 4 && spec.psi1.norm() != 0.0 {
        return Err(Error::InvalidDimension(module.dim()));
    }
    let (p0, p1, cl) = (spec.psi0.clone(), spec.psi1.clone(), module.clone());
    Ok(ChartField::on_whole(module.dim(), move |x| {
        let v = &p0 + cl.vector(x) * &p1 * c(0.25, 0.0);
        CMat::from_column_slice(n, 1, v.as_slice())
    }))
}

/// `D̸φ` for an untwisted field on a flat chart.
pub fn flat_dirac(phi: &SpinorField, x: &[f64], scheme: FdScheme, module: &CliffordModule) -> Result<CMat> {
    let mut out = CMat::zeros(module.spin_dim(), phi.eval(x).ncols());
    for k in 0..module.dim() {
        out += module.gamma(k) * partial(phi, x, k, scheme)?;
    }
    Ok(out)
}

/// `max_k ‖∂_kφ + (1/m) γ_k D̸φ‖` at `x`.
pub fn twistor_residual(phi: &SpinorField, x: &[f64], scheme: FdScheme, module: &CliffordModule) -> Result<f64> {
    let d = flat_dirac(phi, x, scheme, module)?;
    let m = module.dim() as f64;
    let mut worst: f64 = 0.0;
    for k in 0..module.dim() {
        let r = partial(phi, x, k, scheme)? + module.gamma(k) * &d * c(1.0 / m, 0.0);
        worst = worst.max(r.norm());
    }
    Ok(worst)
}

fn column(phi: &CMat) -> CVec {
    phi.column(0).into_owned()
}

/// `D^Θφ = Σ_k e_k·Θ·∂_kφ` for an adjoint-valued form `Θ` and an untwisted `φ`.
pub fn d_theta_apply(
    theta: &ChartField<Form<LieVec>>,
    phi: &SpinorField,
    x: &[f64],
    scheme: FdScheme,
    module: &CliffordModule,
    rep: &GaugeRep,
) -> Result<TwistedSpinor> {
    let th = theta.eval(x);
    let mut out = TwistedSpinor::zeros(module.spin_dim(), rep.dim());
    for k in 0..module.dim() {
        let dphi = column(&partial(phi, x, k, scheme)?);
        out += module.gamma(k) * clifford_tensor_product(&th, &dphi, module, rep)?;
    }
    Ok(out)
}

/// `‖D̸(Θ·φ) − (d_ωΘ + δ_ωΘ)·φ − D^Θφ‖` at `x`.
pub fn product_rule_residual(
    a: &Connection,
    theta: &ChartField<Form<LieVec>>,
    phi: &SpinorField,
    x: &[f64],
    scheme: FdScheme,
    module: &CliffordModule,
    rep: &GaugeRep,
) -> Result<f64> {
    let product = clifford_product_field(theta, phi, module, rep);
    let lhs = dirac_apply(a, &product, x, scheme, module, rep)?;
    let alg = rep.algebra();
    let p = column(&phi.eval(x));
    let mut rhs = d_theta_apply(theta, phi, x, scheme, module, rep)?;
    if theta.eval(x).degree() < module.dim() {
        let d = cov_exterior_derivative(a, theta, x, scheme, alg)?;
        rhs += clifford_tensor_product(&d, &p, module, rep)?;
    }
    if theta.eval(x).degree() > 0 {
        let dl = cov_codifferential(a, theta, x, scheme, alg)?;
        rhs += clifford_tensor_product(&dl, &p, module, rep)?;
    }
    Ok((lhs - rhs).norm())
}

/// `x ↦ Θ(x)·φ(x)`.
pub fn clifford_product_field(
    theta: &ChartField<Form<LieVec>>,
    phi: &SpinorField,
    module: &CliffordModule,
    rep: &GaugeRep,
) -> SpinorField {
    let (th, ph, cl, r) = (theta.clone(), phi.clone(), module.clone(), rep.clone());
    phi.derived(move |x| {
        clifford_tensor_product(&th.eval(x), &column(&ph.eval(x)), &cl, &r).expect("adjoint-valued form")
    })
}

/// Which chirality of untwisted spinor survives Clifford multiplication by the
/// BPST curvature, determined by applying `F(x)` to each chiral projection.
pub fn surviving_chirality(bpst: &Bpst, module: &CliffordModule) -> Result<bool> {
    let rep = GaugeRep::adjoint(bpst.algebra());
    let f = bpst.curvature(&[0.3, -0.2, 0.5, 0.1]);
    let mut norms = [0.0; 2];
    for (slot, positive) in [true, false].into_iter().enumerate() {
        for b in 0..module.spin_dim() {
            let mut e = CMat::zeros(module.spin_dim(), 1);
            e[(b, 0)] = c(1.0, 0.0);
            let p = chiral_project(&e, positive, module)?;
            norms[slot] += clifford_tensor_product(&f, &column(&p), module, &rep)?.norm();
        }
    }
    let tol = 1e-12 * (norms[0] + norms[1]);
    match (norms[0] > tol, norms[1] > tol) {
        (true, false) => Ok(true),
        (false, true) => Ok(false),
        _ => Err(Error::Consistency(format!(
            "curvature does not annihilate exactly one chirality (norms {norms:?})"
        ))),
    }
}

/// A candidate pair `(A, Ψ = F·φ)` with adjoint coefficients.
pub struct Solution {
    pub bpst: Bpst,
    pub connection: Connection,
    pub curvature: ChartField<Form<LieVec>>,
    pub psi: SpinorField,
    pub module: CliffordModule,
    pub rep: GaugeRep,
    /// Chirality of `φ` (and hence of `Ψ`).
    pub positive: bool,
    /// `true` when the chirality is the annihilated one, so `Ψ ≡ 0`.
    pub annihilated: bool,
}

/// `Ψ = F·φ` for the BPST instanton and a chiral twistor spinor `φ`.
pub fn build_solution(bpst: &Bpst, spec: &TwistorSpec) -> Result<Solution> {
    let module = CliffordModule::new(4)?;
    let positive = spec
        .chirality(&module)?
        .ok_or_else(|| Error::Degenerate("twistor data is not chiral".into()))?;
    let rep = GaugeRep::adjoint(bpst.algebra());
    let phi = twistor_field(spec, &module)?;
    let curvature = bpst.curvature_field();
    let psi = clifford_product_field(&curvature, &phi, &module, &rep);
    Ok(Solution {
        bpst: bpst.clone(),
        connection: bpst.connection_field(),
        annihilated: positive != surviving_chirality(bpst, &module)?,
        curvature,
        psi,
        module,
        rep,
        positive,
    })
}

/// Residuals of a candidate pair at one point.
#[derive(Debug, Clone, Serialize)]
pub struct PairResiduals {
    pub point: Vec<f64>,
    pub dirac_res: f64,
    pub ym_res: f64,
    pub bianchi_res: f64,
    pub current_norm: f64,
    pub h: f64,
    pub order: usize,
}

pub fn pair_residuals(
    a: &Connection,
    f: &ChartField<Form<LieVec>>,
    psi: &SpinorField,
    x: &[f64],
    scheme: FdScheme,
    module: &CliffordModule,
    rep: &GaugeRep,
) -> Result<PairResiduals> {
    let alg = rep.algebra();
    Ok(PairResiduals {
        point: x.to_vec(),
        dirac_res: dirac_apply(a, psi, x, scheme, module, rep)?.norm(),
        ym_res: cov_codifferential(a, f, x, scheme, alg)?.norm(),
        bianchi_res: cov_exterior_derivative(a, f, x, scheme, alg)?.norm(),
        current_norm: dirac_current(&psi.eval(x), module, rep)?.norm(),
        h: scheme.h,
        order: scheme.order,
    })
}

/// Maxima over the sample points at one step size.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct ResidualMaxima {
    pub h: f64,
    pub dirac: f64,
    pub ym: f64,
    pub bianchi: f64,
    pub current: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct VerificationReport {
    pub stencil_order: usize,
    pub levels: Vec<ResidualMaxima>,
    /// Observed orders between consecutive levels, `None` for a single level.
    pub dirac_order: Option<f64>,
    pub ym_order: Option<f64>,
    pub bianchi_order: Option<f64>,
    pub max_current: f64,
    /// Worst point of the Dirac residual on the finest level.
    pub worst_point: Vec<f64>,
    pub records: Vec<PairResiduals>,
}

impl VerificationReport {
    /// All residual orders reach `min_order` and the current vanishes to `current_tol`.
    pub fn passes(&self, min_order: f64, current_tol: f64) -> bool {
        let ok = |o: Option<f64>| o.is_some_and(|v| v >= min_order);
        ok(self.dirac_order) && ok(self.ym_order) && ok(self.bianchi_order) && self.max_current <= current_tol
    }
}

fn min_observed(hs: &[f64], r: &[f64]) -> Option<f64> {
    observed_orders(hs, r).into_iter().reduce(f64::min)
}

/// Residual ladder of `(A, F, Ψ)` over `points` for each step in `hs`.
pub fn verify_solution(
    a: &Connection,
    f: &ChartField<Form<LieVec>>,
    psi: &SpinorField,
    points: &[Vec<f64>],
    hs: &[f64],
    order: usize,
    module: &CliffordModule,
    rep: &GaugeRep,
    exec: Exec,
) -> Result<VerificationReport> {
    if points.is_empty() || hs.is_empty() {
        return Err(Error::Degenerate("no sample points or step sizes".into()));
    }
    let mut levels = Vec::with_capacity(hs.len());
    let mut records = Vec::new();
    let mut worst_point = points[0].clone();
    for &h in hs {
        let scheme = FdScheme::new(h, order)?;
        let recs = exec
            .map_slice(points, |x| pair_residuals(a, f, psi, x, scheme, module, rep))
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
        let max = |g: fn(&PairResiduals) -> f64| recs.iter().map(g).fold(0.0, f64::max);
        levels.push(ResidualMaxima {
            h,
            dirac: max(|r| r.dirac_res),
            ym: max(|r| r.ym_res),
            bianchi: max(|r| r.bianchi_res),
            current: max(|r| r.current_norm),
        });
        if let Some(w) = recs.iter().max_by(|p, q| p.dirac_res.total_cmp(&q.dirac_res)) {
            worst_point = w.point.clone();
        }
        records.extend(recs);
    }
    let col = |g: fn(&ResidualMaxima) -> f64| levels.iter().map(g).collect::<Vec<_>>();
    Ok(VerificationReport {
        stencil_order: order,
        dirac_order: min_observed(hs, &col(|l| l.dirac)),
        ym_order: min_observed(hs, &col(|l| l.ym)),
        bianchi_order: min_observed(hs, &col(|l| l.bianchi)),
        max_current: levels.iter().map(|l| l.current).fold(0.0, f64::max),
        levels,
        worst_point,
        records,
    })
}

/// `n_core` seeded points in the ball `|x| ≤ 3` and `n_far` with `|x| ∈ [5, 10]`.
pub fn sample_points(seed: u64, n_core: usize, n_far: usize) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let dir = |rng: &mut ChaCha8Rng| loop {
        let v: Vec<f64> = (0..4).map(|_| rng.random_range(-1.0..1.0)).collect();
        let n = v.iter().map(|t| t * t).sum::<f64>().sqrt();
        if n > 1e-3 && n <= 1.0 {
            break v.into_iter().map(|t| t / n).collect::<Vec<_>>();
        }
    };
    let mut out = Vec::with_capacity(n_core + n_far);
    for _ in 0..n_core {
        let d = dir(&mut rng);
        let r = 3.0 * rng.random::<f64>().powf(0.25);
        out.push(d.into_iter().map(|t| t * r).collect());
    }
    for _ in 0..n_far {
        let d = dir(&mut rng);
        let r = rng.random_range(5.0..10.0);
        out.push(d.into_iter().map(|t| t * r).collect());
    }
    out
}

/// A noise field of amplitude `eps` added to `Ψ`, for anti-tests.
pub fn perturbed_spinor(psi: &SpinorField, eps: f64) -> SpinorField {
    let p = psi.clone();
    psi.derived(move |x| {
        let base = p.eval(x);
        let bump = CMat::from_fn(base.nrows(), base.ncols(), |i, j| {
            let t = (i + 2 * j + 1) as f64;
            c((t * x[0] + x[1]).sin(), (x[2] - t * x[3]).cos())
        });
        base + bump * c(eps, 0.0)
    })
}
