//! The Dirac current `J(Ψ)`, the operator `K_η`, and the dimension-3
//! injectivity system.
//!
//! `J(Ψ)_{kα} = −½⟨Ψ, γ_k ρ_*(σ_α) Ψ⟩` in an orthonormal Lie basis, so the
//! components are coordinates and `⟨η, J⟩ = Σ η_{kα} J_{kα}`.

use nalgebra::{DMatrix, DVector};
use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::clifford::{apply_tensor, spinor_inner, spinor_norm, CliffordModule, TwistedSpinor};
use crate::error::{Error, Result};
use crate::exterior::{Form, LieVec};
use crate::gauge::{AlgebraKind, GaugeRep, RepKind};
use crate::linalg::{c, kron, random_cmat, CMat};
use crate::par::Exec;
use crate::tol;

/// `m × dim g` real coefficients of the current.
pub type CurrentValue = DMatrix<f64>;

fn check_shapes(psi: &TwistedSpinor, module: &CliffordModule, rep: &GaugeRep) -> Result<()> {
    if psi.nrows() != module.spin_dim() || psi.ncols() != rep.dim() {
        return Err(Error::ShapeMismatch(format!(
            "twisted spinor {}x{} for spin dimension {} and representation dimension {}",
            psi.nrows(),
            psi.ncols(),
            module.spin_dim(),
            rep.dim()
        )));
    }
    Ok(())
}

/// Raw complex bilinears `⟨Ψ, γ_k ρ_*(σ_α) Ψ⟩`.
fn raw_bilinears(psi: &TwistedSpinor, module: &CliffordModule, rep: &GaugeRep) -> DMatrix<Complex64> {
    let m = module.dim();
    let dg = rep.images().len();
    // ρ(σ_α) acts on the color index: Ψ ρᵀ
    let colored: Vec<CMat> = rep.images().iter().map(|r| psi * r.transpose()).collect();
    DMatrix::from_fn(m, dg, |k, a| spinor_inner(psi, &(module.gamma(k) * &colored[a])))
}

pub fn dirac_current(psi: &TwistedSpinor, module: &CliffordModule, rep: &GaugeRep) -> Result<CurrentValue> {
    check_shapes(psi, module, rep)?;
    let raw = raw_bilinears(psi, module, rep);
    let scale = spinor_norm(psi).powi(2).max(1.0);
    let worst_im = raw.iter().map(|z| z.im.abs()).fold(0.0, f64::max);
    if worst_im > tol::REALITY * scale {
        return Err(Error::Consistency(format!(
            "current bilinear has imaginary part {worst_im:.3e}"
        )));
    }
    Ok(raw.map(|z| -0.5 * z.re))
}

/// Largest imaginary part among the current bilinears (should be rounding).
pub fn current_reality_defect(psi: &TwistedSpinor, module: &CliffordModule, rep: &GaugeRep) -> Result<f64> {
    check_shapes(psi, module, rep)?;
    Ok(raw_bilinears(psi, module, rep)
        .iter()
        .map(|z| z.im.abs())
        .fold(0.0, f64::max))
}

/// Frobenius norm of the current.
pub fn current_norm(j: &CurrentValue) -> f64 {
    j.norm()
}

fn check_eta(eta: &Form<LieVec>, module: &CliffordModule, rep: &GaugeRep) -> Result<()> {
    if eta.degree() != 1 || eta.dim() != module.dim() {
        return Err(Error::ShapeMismatch(format!(
            "η must be a 1-form over m = {}, got degree {} over m = {}",
            module.dim(),
            eta.degree(),
            eta.dim()
        )));
    }
    if eta.coeffs().iter().any(|v| v.len() != rep.images().len()) {
        return Err(Error::ShapeMismatch("η coefficients do not match the algebra".into()));
    }
    Ok(())
}

/// `K_η Ψ = Σ_k γ_k ρ_*(η_k) Ψ`.
pub fn k_eta_apply(
    eta: &Form<LieVec>,
    psi: &TwistedSpinor,
    module: &CliffordModule,
    rep: &GaugeRep,
) -> Result<TwistedSpinor> {
    check_eta(eta, module, rep)?;
    check_shapes(psi, module, rep)?;
    let mut out = TwistedSpinor::zeros(psi.nrows(), psi.ncols());
    for k in 0..module.dim() {
        out += apply_tensor(module.gamma(k), &rep.rho(&eta.coeffs()[k]), psi);
    }
    Ok(out)
}

/// `K_η` as a matrix on row-major vectorised twisted spinors (index `s·d + c`).
pub fn k_eta_matrix(eta: &Form<LieVec>, module: &CliffordModule, rep: &GaugeRep) -> Result<CMat> {
    check_eta(eta, module, rep)?;
    let n = module.spin_dim() * rep.dim();
    Ok((0..module.dim()).fold(CMat::zeros(n, n), |acc, k| {
        acc + kron(module.gamma(k), &rep.rho(&eta.coeffs()[k]))
    }))
}

/// `⟨η, J⟩ = Σ_{k,α} η_{kα} J_{kα}`.
pub fn eta_dot_current(eta: &Form<LieVec>, j: &CurrentValue) -> f64 {
    eta.coeffs()
        .iter()
        .enumerate()
        .map(|(k, v)| v.iter().enumerate().map(|(a, x)| x * j[(k, a)]).sum::<f64>())
        .sum()
}

/// `|−½⟨Ψ, K_ηΨ⟩ − ⟨η, J(Ψ)⟩|`.
pub fn pairing_residual(
    psi: &TwistedSpinor,
    eta: &Form<LieVec>,
    module: &CliffordModule,
    rep: &GaugeRep,
) -> Result<f64> {
    let k = k_eta_apply(eta, psi, module, rep)?;
    let lhs = spinor_inner(psi, &k) * -0.5;
    let j = dirac_current(psi, module, rep)?;
    Ok((lhs - c(eta_dot_current(eta, &j), 0.0)).norm())
}

/// The nine bilinears of the dimension-3 argument for one index `k`, three ways.
#[derive(Debug, Clone, Serialize)]
pub struct Dim3Bilinears {
    pub k: usize,
    /// `⟨e_ℓ·σΨ, Ψ⟩` evaluated with the gamma and color matrices.
    pub direct: [f64; 9],
    /// The closed-form expressions in the components `Ψ^{jc}`.
    pub closed_form: [f64; 9],
    /// Reassembled from the raw current via `−2 Σ_α ⟨σ, σ_α⟩ J_{ℓα}`.
    pub from_current: [f64; 9],
}

/// Order of the nine bilinears: (frame index ℓ, element), element 0 = H, 1 = X, 2 = Y.
pub const DIM3_ORDER: [(usize, usize); 9] = [
    (2, 0),
    (0, 1),
    (1, 2),
    (0, 2),
    (1, 1),
    (0, 0),
    (1, 0),
    (2, 2),
    (2, 1),
];

/// `(H_k, X_k, Y_k)` on the color indices `0, k`.
pub fn dim3_elements(n: usize, k: usize) -> [CMat; 3] {
    let e = |r: usize, s: usize| {
        let mut m = CMat::zeros(n, n);
        m[(r, s)] = c(1.0, 0.0);
        m
    };
    let mi2 = c(0.0, -0.5);
    let h = (e(0, 0) - e(k, k)) * mi2;
    let x = (e(0, k) + e(k, 0)) * mi2;
    let y = (e(0, k) - e(k, 0)) * c(-0.5, 0.0);
    [h, x, y]
}

fn dim3_closed_forms(psi: &TwistedSpinor, k: usize) -> [f64; 9] {
    let p00 = psi[(0, 0)];
    let p0k = psi[(0, k)];
    let p10 = psi[(1, 0)];
    let p1k = psi[(1, k)];
    let cj = |z: Complex64| z.conj();
    [
        0.5 * (p0k.norm_sqr() + p10.norm_sqr() - p00.norm_sqr() - p1k.norm_sqr()),
        (-p00 * cj(p1k) - p10 * cj(p0k)).re,
        (p00 * cj(p1k) - p10 * cj(p0k)).re,
        (p00 * cj(p1k) + p10 * cj(p0k)).im,
        (p00 * cj(p1k) - p10 * cj(p0k)).im,
        (p0k * cj(p1k) - p00 * cj(p10)).re,
        (p00 * cj(p10) - p0k * cj(p1k)).im,
        (p00 * cj(p0k) - p10 * cj(p1k)).im,
        (p10 * cj(p1k) - p00 * cj(p0k)).re,
    ]
}

/// The nine bilinears for every `k = 1..N−1` (standard representation, `m = 3`).
pub fn dim3_bilinears(psi: &TwistedSpinor, module: &CliffordModule, rep: &GaugeRep) -> Result<Vec<Dim3Bilinears>> {
    if module.dim() != 3 {
        return Err(Error::InvalidDimension(module.dim()));
    }
    if *rep.kind() != RepKind::Standard {
        return Err(Error::ValueKind("dimension-3 bilinears need the standard representation".into()));
    }
    check_shapes(psi, module, rep)?;
    let alg = rep.algebra();
    let n = alg.n();
    if alg.kind() == AlgebraKind::U && n == 1 {
        return Err(Error::Degenerate("u(1) has no off-diagonal index k".into()));
    }
    let j = dirac_current(psi, module, rep)?;
    let mut out = Vec::new();
    for k in 1..n {
        let elems = dim3_elements(n, k);
        let mut direct = [0.0; 9];
        let mut from_current = [0.0; 9];
        for (slot, &(l, which)) in DIM3_ORDER.iter().enumerate() {
            let sigma = &elems[which];
            let v = apply_tensor(module.gamma(l), sigma, psi);
            direct[slot] = spinor_inner(&v, psi).re;
            let coords = alg.coords(sigma);
            from_current[slot] = -2.0 * (0..coords.len()).map(|a| coords[a] * j[(l, a)]).sum::<f64>();
        }
        out.push(Dim3Bilinears {
            k,
            direct,
            closed_form: dim3_closed_forms(psi, k),
            from_current,
        });
    }
    Ok(out)
}

/// Outcome of the multi-start minimisation of `‖J(Ψ)‖` on the unit sphere.
#[derive(Debug, Clone, Serialize)]
pub struct SphereMinimum {
    pub best: f64,
    pub per_restart: Vec<f64>,
    pub converged: usize,
    #[serde(skip)]
    pub best_psi: TwistedSpinor,
}

/// Hermitian operators `H_{kα} = γ_k ⊗ ρ_*(σ_α)` on vectorised spinors.
fn current_operators(module: &CliffordModule, rep: &GaugeRep) -> Vec<CMat> {
    let mut ops = Vec::new();
    for k in 0..module.dim() {
        for img in rep.images() {
            ops.push(kron(module.gamma(k), img));
        }
    }
    ops
}

fn vec_of(psi: &TwistedSpinor) -> DVector<Complex64> {
    DVector::from_iterator(psi.len(), psi.transpose().iter().copied())
}

fn residuals(ops: &[CMat], v: &DVector<Complex64>) -> DVector<f64> {
    DVector::from_iterator(
        ops.len(),
        ops.iter().map(|h| -0.5 * v.dotc(&(h * v)).re),
    )
}

/// Riemannian Levenberg–Marquardt on the unit sphere for `f(Ψ) = ‖J(Ψ)‖²`.
fn minimise_from(ops: &[CMat], start: DVector<Complex64>, max_iter: usize) -> (f64, DVector<Complex64>, bool) {
    let n = start.len();
    let mut v = start.normalize();
    let mut r = residuals(ops, &v);
    let mut f = r.norm_squared();
    let mut mu = 1e-3;
    for _ in 0..max_iter {
        if f.sqrt() < 1e-15 {
            return (f.sqrt(), v, true);
        }
        // real Jacobian: dJ_i = −Re⟨H_iΨ, δ⟩ over δ ∈ C^n ≅ R^{2n}
        let hv: Vec<DVector<Complex64>> = ops.iter().map(|h| h * &v).collect();
        let mut jac = DMatrix::<f64>::zeros(ops.len(), 2 * n);
        for (i, w) in hv.iter().enumerate() {
            for s in 0..n {
                jac[(i, s)] = -w[s].re;
                jac[(i, n + s)] = -w[s].im;
            }
        }
        // tangent space of the sphere modulo the phase: orthogonal to Ψ and iΨ
        let mut basis_out = DMatrix::<f64>::zeros(2 * n, 2);
        for s in 0..n {
            basis_out[(s, 0)] = v[s].re;
            basis_out[(n + s, 0)] = v[s].im;
            basis_out[(s, 1)] = -v[s].im;
            basis_out[(n + s, 1)] = v[s].re;
        }
        let proj = DMatrix::<f64>::identity(2 * n, 2 * n) - &basis_out * basis_out.transpose();
        let jt = &jac * &proj;
        let grad = jt.transpose() * &r;
        if grad.norm() < 1e-16 {
            return (f.sqrt(), v, true);
        }
        let jtj = jt.transpose() * &jt;
        let mut accepted = false;
        for _ in 0..30 {
            let mut a = jtj.clone();
            for d in 0..2 * n {
                a[(d, d)] += mu * (1.0 + jtj[(d, d)]);
            }
            let step = match a.cholesky() {
                Some(ch) => -(&proj * ch.solve(&grad)),
                None => {
                    mu *= 10.0;
                    continue;
                }
            };
            let cand = DVector::from_fn(n, |s, _| v[s] + c(step[s], step[n + s])).normalize();
            let rc = residuals(ops, &cand);
            let fc = rc.norm_squared();
            if fc < f {
                v = cand;
                r = rc;
                let rel = (f - fc) / f.max(1e-300);
                f = fc;
                mu = (mu * 0.3).max(1e-12);
                accepted = true;
                if rel < 1e-14 {
                    return (f.sqrt(), v, true);
                }
                break;
            }
            mu *= 10.0;
        }
        if !accepted {
            return (f.sqrt(), v, true);
        }
    }
    (f.sqrt(), v, false)
}

/// Multi-start minimisation of `‖J(Ψ)‖` over `‖Ψ‖ = 1`; restart `r` uses the
/// seed `seed + r`.
pub fn current_min_on_sphere(
    module: &CliffordModule,
    rep: &GaugeRep,
    restarts: usize,
    seed: u64,
    exec: Exec,
) -> Result<SphereMinimum> {
    if restarts == 0 {
        return Err(Error::Degenerate("at least one restart is required".into()));
    }
    let ops = current_operators(module, rep);
    let (s, d) = (module.spin_dim(), rep.dim());
    let runs = exec.map(restarts, |r| {
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(r as u64));
        let start = vec_of(&random_cmat(&mut rng, s, d));
        minimise_from(&ops, start, 500)
    });
    let per_restart: Vec<f64> = runs.iter().map(|x| x.0).collect();
    let converged = runs.iter().filter(|x| x.2).count();
    let (best_idx, _) = per_restart
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("nonempty");
    let v = &runs[best_idx].1;
    let best_psi = TwistedSpinor::from_fn(s, d, |i, j| v[i * d + j]);
    Ok(SphereMinimum {
        best: per_restart[best_idx],
        per_restart,
        converged,
        best_psi,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::clifford::chiral_project;
    use crate::gauge::GaugeAlgebra;
    use crate::linalg::{hermiticity_defect, operator_norm};

    fn random_eta(rng: &mut ChaCha8Rng, m: usize, dg: usize) -> Form<LieVec> {
        Form::from_fn(m, 1, |_| {
            LieVec::from_fn(dg, |_, _| crate::linalg::standard_normal(rng))
        })
        .unwrap()
    }

    #[test]
    fn zero_spinor_has_zero_current() {
        let cl = CliffordModule::new(4).unwrap();
        let rep = GaugeRep::standard(&GaugeAlgebra::su(2).unwrap());
        let j = dirac_current(&CMat::zeros(4, 2), &cl, &rep).unwrap();
        assert_eq!(j.norm(), 0.0);
    }

    #[test]
    fn chiral_spinors_have_zero_current() {
        let cl = CliffordModule::new(4).unwrap();
        let rep = GaugeRep::adjoint(&GaugeAlgebra::su(2).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..20 {
            let psi = chiral_project(&random_cmat(&mut rng, 4, 3), true, &cl).unwrap();
            assert!(dirac_current(&psi, &cl, &rep).unwrap().norm() < 1e-13);
        }
    }

    #[test]
    fn quadratic_scaling() {
        let cl = CliffordModule::new(3).unwrap();
        let rep = GaugeRep::standard(&GaugeAlgebra::su(2).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(6);
        let psi = random_cmat(&mut rng, 2, 2);
        let j1 = dirac_current(&psi, &cl, &rep).unwrap().norm();
        let j2 = dirac_current(&(&psi * c(0.0, 3.0)), &cl, &rep).unwrap().norm();
        assert!((j2 - 9.0 * j1).abs() < 1e-12 * j2);
    }

    #[test]
    fn k_eta_u1_is_sigma1() {
        let cl = CliffordModule::new(3).unwrap();
        let alg = GaugeAlgebra::u(1).unwrap();
        let rep = GaugeRep::standard(&alg);
        let cc = 0.7;
        // η = c e¹ ⊗ i; the coordinate of i in the basis i/√2 is √2
        let coord = alg.coords(&CMat::from_element(1, 1, c(0.0, cc)));
        let eta = Form::monomial(3, &[0], coord).unwrap();
        let k = k_eta_matrix(&eta, &cl, &rep).unwrap();
        let expected = crate::linalg::pauli(1) * c(cc, 0.0);
        assert!(crate::linalg::max_abs(&(k - expected)) < 1e-15);
    }

    #[test]
    fn k_eta_hermitian_and_bounded() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for m in 2..=5 {
            let cl = CliffordModule::new(m).unwrap();
            let rep = GaugeRep::standard(&GaugeAlgebra::su(3).unwrap());
            let eta = random_eta(&mut rng, m, 8);
            let k = k_eta_matrix(&eta, &cl, &rep).unwrap();
            assert!(hermiticity_defect(&k) < 1e-13);
            let bound: f64 = eta.coeffs().iter().map(|x| operator_norm(&rep.rho(x))).sum();
            assert!(operator_norm(&k) <= bound + 1e-12);
            let psi = random_cmat(&mut rng, cl.spin_dim(), 3);
            let via_apply = k_eta_apply(&eta, &psi, &cl, &rep).unwrap();
            let v = vec_of(&psi);
            let via_mat = &k * v;
            assert!((vec_of(&via_apply) - via_mat).camax() < 1e-13);
        }
    }

    #[test]
    fn pairing_identity_small_sweep() {
        let mut rng = ChaCha8Rng::seed_from_u64(8);
        for m in 2..=4 {
            let cl = CliffordModule::new(m).unwrap();
            let alg = GaugeAlgebra::su(2).unwrap();
            for rep in [GaugeRep::standard(&alg), GaugeRep::adjoint(&alg)] {
                for _ in 0..20 {
                    let psi = random_cmat(&mut rng, cl.spin_dim(), rep.dim());
                    let eta = random_eta(&mut rng, m, 3);
                    assert!(pairing_residual(&psi, &eta, &cl, &rep).unwrap() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn bilinear_of_first_basis_spinor() {
        let cl = CliffordModule::new(3).unwrap();
        let rep = GaugeRep::standard(&GaugeAlgebra::su(2).unwrap());
        let mut psi = CMat::zeros(2, 2);
        psi[(0, 0)] = c(1.0, 0.0);
        let b = &dim3_bilinears(&psi, &cl, &rep).unwrap()[0];
        assert!((b.closed_form[0] + 0.5).abs() < 1e-15);
        assert!((b.direct[0] + 0.5).abs() < 1e-15);
        // the H_1 direction is the third basis element of su(2)
        let j = dirac_current(&psi, &cl, &rep).unwrap();
        assert!((j[(2, 2)] - 0.25).abs() < 1e-15);
        let zero = dim3_bilinears(&CMat::zeros(2, 2), &cl, &rep).unwrap();
        assert!(zero[0].direct.iter().all(|&x| x == 0.0));
    }

    #[test]
    fn dim3_direct_matches_current() {
        let cl = CliffordModule::new(3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for n in 2..=3 {
            let rep = GaugeRep::standard(&GaugeAlgebra::su(n).unwrap());
            let psi = random_cmat(&mut rng, 2, n);
            for b in dim3_bilinears(&psi, &cl, &rep).unwrap() {
                for s in 0..9 {
                    assert!((b.direct[s] - b.from_current[s]).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn wrong_inputs_rejected() {
        let cl4 = CliffordModule::new(4).unwrap();
        let alg = GaugeAlgebra::su(2).unwrap();
        let rep = GaugeRep::standard(&alg);
        assert!(dim3_bilinears(&CMat::zeros(4, 2), &cl4, &rep).is_err());
        assert!(dirac_current(&CMat::zeros(2, 2), &cl4, &rep).is_err());
    }

    #[test]
    fn even_dimension_minimum_vanishes() {
        let cl = CliffordModule::new(4).unwrap();
        let rep = GaugeRep::standard(&GaugeAlgebra::su(2).unwrap());
        let res = current_min_on_sphere(&cl, &rep, 8, 11, Exec::Sequential).unwrap();
        assert!(res.best <= 1e-10, "best = {}", res.best);
    }

    #[test]
    fn dimension_three_minimum_is_positive() {
        let cl = CliffordModule::new(3).unwrap();
        let rep = GaugeRep::standard(&GaugeAlgebra::su(2).unwrap());
        let res = current_min_on_sphere(&cl, &rep, 16, 3, Exec::Parallel).unwrap();
        assert!(res.best > 1e-3, "best = {}", res.best);
    }
}
