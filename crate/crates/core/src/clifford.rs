//! Pointwise Clifford algebra of `R^m` with `e_i² = −1`, its complex spinor
//! representation, and Clifford products of forms with (twisted) spinors.
//!
//! Gamma matrices are built recursively: `m = 2` uses `(−iσ₁, −iσ₂)`; from an
//! even `m` the next even dimension uses `γ_j ⊗ σ₃`, `1 ⊗ (−iσ₁)`, `1 ⊗ (−iσ₂)`;
//! an odd dimension appends `−i·Γ` to the gammas of `m − 1`, where `Γ` is the
//! chirality. For `m = 3` this gives exactly `(−iσ₁, −iσ₂, −iσ₃)`.
//!
//! The chirality in even dimension is `Γ = i^{m/2} γ₁⋯γ_m`; with this sign
//! `Γ² = +1` for every even `m`.
//!
//! A twisted spinor value is a `spin_dim × color_dim` complex matrix `Ψ`; an
//! operator `A ⊗ B` acts as `A Ψ Bᵀ`.

use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::exterior::{mask_indices, Coefficient, Form, LieVec};
use crate::gauge::{GaugeRep, RepKind};
use crate::linalg::{c, identity, kron, pauli, CMat, CVec, I};

/// Pointwise value of an E-valued spinor field.
pub type TwistedSpinor = CMat;

#[derive(Debug, Clone)]
pub struct CliffordModule {
    m: usize,
    gammas: Vec<CMat>,
    chirality: Option<CMat>,
    /// `γ_I = γ_{i_1}⋯γ_{i_k}` for every increasing index set, by bitmask.
    blades: Vec<CMat>,
}

fn chirality_of(gammas: &[CMat]) -> CMat {
    let m = gammas.len();
    let n = gammas[0].nrows();
    let prod = gammas.iter().fold(identity(n), |acc, g| acc * g);
    prod * I.powu((m / 2) as u32)
}

impl CliffordModule {
    pub fn new(m: usize) -> Result<Self> {
        if m < 2 {
            return Err(Error::InvalidDimension(m));
        }
        if m > 16 {
            return Err(Error::ShapeMismatch(format!("m = {m} exceeds the supported range")));
        }
        let mi = c(0.0, -1.0);
        let mut gammas = vec![pauli(1) * mi, pauli(2) * mi];
        let mut even = 2;
        while even + 2 <= m {
            let n = gammas[0].nrows();
            let mut next: Vec<CMat> = gammas.iter().map(|g| kron(g, &pauli(3))).collect();
            next.push(kron(&identity(n), &(pauli(1) * mi)));
            next.push(kron(&identity(n), &(pauli(2) * mi)));
            gammas = next;
            even += 2;
        }
        let chirality = if m.is_multiple_of(2) {
            Some(chirality_of(&gammas))
        } else {
            gammas.push(chirality_of(&gammas) * mi);
            None
        };
        let n = gammas[0].nrows();
        let blades = (0u32..(1u32 << m))
            .map(|mask| {
                mask_indices(mask)
                    .iter()
                    .fold(identity(n), |acc, &i| acc * &gammas[i])
            })
            .collect();
        Ok(Self {
            m,
            gammas,
            chirality,
            blades,
        })
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    /// Complex dimension `2^⌊m/2⌋` of the spinor space.
    pub fn spin_dim(&self) -> usize {
        self.gammas[0].nrows()
    }

    pub fn gammas(&self) -> &[CMat] {
        &self.gammas
    }

    pub fn gamma(&self, i: usize) -> &CMat {
        &self.gammas[i]
    }

    pub fn chirality(&self) -> Result<&CMat> {
        self.chirality.as_ref().ok_or(Error::NoChirality(self.m))
    }

    /// `γ_{i_1}⋯γ_{i_k}` for the increasing index set encoded by `mask`.
    pub fn blade(&self, mask: u32) -> &CMat {
        &self.blades[mask as usize]
    }

    /// Clifford multiplication by the vector `Σ v_k e_k`.
    pub fn vector(&self, v: &[f64]) -> CMat {
        let n = self.spin_dim();
        self.gammas
            .iter()
            .zip(v)
            .fold(CMat::zeros(n, n), |acc, (g, &x)| acc + g * c(x, 0.0))
    }

    /// Clifford multiplication by a real form `Σ Θ_I e_I` as a spinor endomorphism.
    pub fn form_endo(&self, theta: &Form<f64>) -> Result<CMat> {
        self.check_dim(theta.dim())?;
        let n = self.spin_dim();
        Ok(theta
            .terms()
            .fold(CMat::zeros(n, n), |acc, (mask, &x)| acc + self.blade(mask) * c(x, 0.0)))
    }

    /// Largest entry of `γ_iγ_j + γ_jγ_i + 2δ_ij`.
    pub fn clifford_residual(&self) -> f64 {
        let n = self.spin_dim();
        let mut worst = 0.0_f64;
        for (i, gi) in self.gammas.iter().enumerate() {
            for (j, gj) in self.gammas.iter().enumerate() {
                let mut r = gi * gj + gj * gi;
                if i == j {
                    r += identity(n) * c(2.0, 0.0);
                }
                worst = worst.max(crate::linalg::max_abs(&r));
            }
        }
        worst
    }

    fn check_dim(&self, m: usize) -> Result<()> {
        if m != self.m {
            return Err(Error::ShapeMismatch(format!(
                "form over m = {m} used with Clifford module of m = {}",
                self.m
            )));
        }
        Ok(())
    }

    fn check_spinor(&self, psi: &TwistedSpinor) -> Result<()> {
        if psi.nrows() != self.spin_dim() {
            return Err(Error::ShapeMismatch(format!(
                "spinor factor has dimension {}, expected {}",
                psi.nrows(),
                self.spin_dim()
            )));
        }
        Ok(())
    }
}

/// Hermitian inner product of twisted spinors, antilinear in the first slot.
pub fn spinor_inner(a: &TwistedSpinor, b: &TwistedSpinor) -> Complex64 {
    a.iter().zip(b.iter()).map(|(x, y)| x.conj() * y).sum()
}

pub fn spinor_norm(a: &TwistedSpinor) -> f64 {
    a.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

/// `(A ⊗ B) Ψ = A Ψ Bᵀ`.
pub fn apply_tensor(spin: &CMat, color: &CMat, psi: &TwistedSpinor) -> TwistedSpinor {
    spin * psi * color.transpose()
}

/// Color part of a form coefficient for the Clifford tensor product.
pub trait ColorValue: Coefficient {
    fn color_vector(&self, color_dim: usize, rep: &GaugeRep) -> Result<CVec>;
}

/// A scalar `s` is placed in every color slot: `s·(1, …, 1)`.
impl ColorValue for f64 {
    fn color_vector(&self, color_dim: usize, _rep: &GaugeRep) -> Result<CVec> {
        Ok(CVec::from_element(color_dim, c(*self, 0.0)))
    }
}

/// A Lie-algebra value is placed through its coordinates, which requires the
/// color space to be the algebra itself (adjoint representation).
impl ColorValue for LieVec {
    fn color_vector(&self, color_dim: usize, rep: &GaugeRep) -> Result<CVec> {
        if *rep.kind() != RepKind::Adjoint || color_dim != self.len() {
            return Err(Error::ValueKind(
                "Lie-valued forms act on spinors only in the adjoint representation".into(),
            ));
        }
        Ok(self.map(|x| c(x, 0.0)))
    }
}

/// `Θ·ψ = Σ_{I} Θ^I ⊗ γ_I ψ` for an untwisted spinor `ψ`.
pub fn clifford_tensor_product<V: ColorValue>(
    theta: &Form<V>,
    psi: &CVec,
    module: &CliffordModule,
    rep: &GaugeRep,
) -> Result<TwistedSpinor> {
    module.check_dim(theta.dim())?;
    if psi.len() != module.spin_dim() {
        return Err(Error::ShapeMismatch(format!(
            "spinor of length {} for spin dimension {}",
            psi.len(),
            module.spin_dim()
        )));
    }
    let d = rep.dim();
    let mut out = TwistedSpinor::zeros(module.spin_dim(), d);
    for (mask, v) in theta.terms() {
        let col = v.color_vector(d, rep)?;
        let spin = module.blade(mask) * psi;
        out += spin * col.transpose();
    }
    Ok(out)
}

/// `Ξ·Ψ = Σ_I γ_I · Ξ^I(Ψ)` for endomorphism-valued forms of any degrees.
pub fn clifford_action(
    parts: &[&Form<CMat>],
    psi: &TwistedSpinor,
    module: &CliffordModule,
) -> Result<TwistedSpinor> {
    module.check_spinor(psi)?;
    let mut out = TwistedSpinor::zeros(psi.nrows(), psi.ncols());
    for xi in parts {
        module.check_dim(xi.dim())?;
        for (mask, e) in xi.terms() {
            if e.nrows() != psi.ncols() || e.ncols() != psi.ncols() {
                return Err(Error::ShapeMismatch(format!(
                    "endomorphism {}x{} on color dimension {}",
                    e.nrows(),
                    e.ncols(),
                    psi.ncols()
                )));
            }
            out += apply_tensor(module.blade(mask), e, psi);
        }
    }
    Ok(out)
}

/// Pushes a Lie-valued form through `ρ_*` to an endomorphism-valued form.
pub fn endo_form(form: &Form<LieVec>, rep: &GaugeRep) -> Form<CMat> {
    form.map(|x| rep.rho(x))
}

/// Real scalar form as an endomorphism-valued form (`s ↦ s·Id`).
pub fn scalar_endo_form(form: &Form<f64>, color_dim: usize) -> Form<CMat> {
    form.map(|&x| identity(color_dim) * c(x, 0.0))
}

/// `½(1 ± Γ)Ψ`.
pub fn chiral_project(psi: &TwistedSpinor, positive: bool, module: &CliffordModule) -> Result<TwistedSpinor> {
    let gamma = module.chirality()?;
    module.check_spinor(psi)?;
    let g = gamma * psi;
    Ok(if positive {
        (psi + g) * c(0.5, 0.0)
    } else {
        (psi - g) * c(0.5, 0.0)
    })
}

/// Product of basis blades `e_A e_B = sign · e_{A △ B}` in `Cl(R^m)`, `e_i² = −1`.
pub fn blade_product(a: u32, b: u32) -> (i32, u32) {
    // reorder sign: pairs (i in A, j in B) with i > j, the same count as for disjoint sets
    let mut inversions = 0u32;
    let mut rest = b;
    while rest != 0 {
        let j = rest.trailing_zeros();
        inversions += (a >> (j + 1)).count_ones();
        rest &= rest - 1;
    }
    inversions += (a & b).count_ones();
    (if inversions.is_multiple_of(2) { 1 } else { -1 }, a ^ b)
}

/// Element of the Clifford algebra stored by blade coefficients.
#[derive(Debug, Clone, PartialEq)]
pub struct Multivector {
    m: usize,
    coeffs: Vec<f64>,
}

impl Multivector {
    pub fn zero(m: usize) -> Self {
        Self {
            m,
            coeffs: vec![0.0; 1 << m],
        }
    }

    pub fn from_form(theta: &Form<f64>) -> Self {
        let mut mv = Self::zero(theta.dim());
        for (mask, &x) in theta.terms() {
            mv.coeffs[mask as usize] += x;
        }
        mv
    }

    pub fn basis_vector(m: usize, i: usize) -> Self {
        let mut mv = Self::zero(m);
        mv.coeffs[1 << i] = 1.0;
        mv
    }

    pub fn mul(&self, other: &Self) -> Self {
        let mut out = Self::zero(self.m);
        for (a, &x) in self.coeffs.iter().enumerate() {
            if x == 0.0 {
                continue;
            }
            for (b, &y) in other.coeffs.iter().enumerate() {
                if y != 0.0 {
                    let (s, ab) = blade_product(a as u32, b as u32);
                    out.coeffs[ab as usize] += s as f64 * x * y;
                }
            }
        }
        out
    }

    pub fn add_scaled(&mut self, a: f64, other: &Self) {
        for (x, y) in self.coeffs.iter_mut().zip(&other.coeffs) {
            *x += a * y;
        }
    }

    /// Degree-`k` part as a form.
    pub fn grade(&self, k: usize) -> Form<f64> {
        Form::from_fn(self.m, k, |idx| {
            let mask = idx.iter().fold(0u32, |acc, &i| acc | (1 << i));
            self.coeffs[mask as usize]
        })
        .expect("grade within range")
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn max_abs_diff(&self, other: &Self) -> f64 {
        self.coeffs
            .iter()
            .zip(&other.coeffs)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max)
    }
}

/// `Σ_i e_i·Θ·e_i` computed in the Clifford algebra, returned as a form of the
/// same degree (the other grades vanish and are checked to).
pub fn conjugation_sum(theta: &Form<f64>) -> Result<Form<f64>> {
    let m = theta.dim();
    let t = Multivector::from_form(theta);
    let mut acc = Multivector::zero(m);
    for i in 0..m {
        let e = Multivector::basis_vector(m, i);
        acc.add_scaled(1.0, &e.mul(&t).mul(&e));
    }
    let r = theta.degree();
    let mut stray = acc.clone();
    for (mask, x) in stray.coeffs.iter_mut().enumerate() {
        if (mask as u32).count_ones() as usize == r {
            *x = 0.0;
        }
    }
    if stray.coeffs.iter().any(|x| x.abs() > 0.0) {
        return Err(Error::Consistency("conjugation sum left its degree".into()));
    }
    Ok(acc.grade(r))
}

/// The same sum evaluated with the gamma matrices of `module`:
/// `Σ_i γ_i (Σ_I Θ_I γ_I) γ_i`.
pub fn conjugation_sum_matrix(theta: &Form<f64>, module: &CliffordModule) -> Result<CMat> {
    let t = module.form_endo(theta)?;
    let n = module.spin_dim();
    Ok(module
        .gammas()
        .iter()
        .fold(CMat::zeros(n, n), |acc, g| acc + g * &t * g))
}

/// The expected factor `(−1)^r (2r − m)`.
pub fn conjugation_factor(r: usize, m: usize) -> f64 {
    let f = 2.0 * r as f64 - m as f64;
    if r.is_multiple_of(2) {
        f
    } else {
        -f
    }
}

/// Clifford product `e_i · Θ` of a basis one-form with a homogeneous form,
/// split into its degree `r + 1` and `r − 1` parts.
pub fn one_form_product(i: usize, theta: &Form<f64>) -> (Form<f64>, Option<Form<f64>>) {
    let m = theta.dim();
    let r = theta.degree();
    let prod = Multivector::basis_vector(m, i).mul(&Multivector::from_form(theta));
    let up = if r < m {
        prod.grade(r + 1)
    } else {
        Form::zeros(m, m, &0.0).expect("top degree")
    };
    let down = (r > 0).then(|| prod.grade(r - 1));
    (up, down)
}

/// For each degree `r` of `Θ`, the sign `s` for which
/// `e_i·Θ = e^i ∧ Θ + s·⋆(e^i ∧ ⋆Θ)` holds on every basis pair, or `None`
/// when no single sign works (or when the lower term never appears, `r = 0`).
pub fn one_form_identity_signs(m: usize) -> Vec<Option<i32>> {
    use crate::exterior::{basis_masks, hodge_star, wedge};
    (0..=m)
        .map(|r| {
            let mut seen = Vec::new();
            for &mask in &basis_masks(m, r) {
                let theta = Form::monomial(m, &mask_indices(mask), 1.0).expect("basis");
                for i in 0..m {
                    let Some(down) = one_form_product(i, &theta).1 else {
                        continue;
                    };
                    let e = Form::monomial(m, &[i], 1.0).expect("basis");
                    let rhs = hodge_star(&wedge(&e, &hodge_star(&theta)).expect("degree"));
                    if rhs.coeffs().iter().all(|x| *x == 0.0) {
                        continue;
                    }
                    let fits = |s: f64| {
                        down.coeffs()
                            .iter()
                            .zip(rhs.coeffs())
                            .all(|(a, b)| (a - s * b).abs() < 1e-15)
                    };
                    seen.push(if fits(1.0) {
                        1
                    } else if fits(-1.0) {
                        -1
                    } else {
                        0
                    });
                }
            }
            match seen.first() {
                Some(&s) if s != 0 && seen.iter().all(|&t| t == s) => Some(s),
                _ => None,
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::exterior::{basis_masks, basis_one_form, insert, wedge};
    use crate::gauge::GaugeAlgebra;
    use crate::linalg::{max_abs, random_cmat};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn rejects_small_dimension() {
        assert_eq!(CliffordModule::new(1).unwrap_err(), Error::InvalidDimension(1));
    }

    #[test]
    fn dimension_three_is_pauli() {
        let cl = CliffordModule::new(3).unwrap();
        for k in 0..3 {
            let expected = pauli(k + 1) * c(0.0, -1.0);
            assert!(max_abs(&(cl.gamma(k) - expected)) == 0.0);
        }
        assert!(cl.chirality().is_err());
    }

    #[test]
    fn clifford_relations_up_to_eight() {
        for m in 2..=8 {
            let cl = CliffordModule::new(m).unwrap();
            assert_eq!(cl.spin_dim(), 1 << (m / 2));
            assert!(cl.clifford_residual() <= 1e-13, "m={m}");
            for g in cl.gammas() {
                assert!(crate::linalg::anti_hermiticity_defect(g) < 1e-15);
                assert!(max_abs(&(g.adjoint() * g - identity(cl.spin_dim()))) < 1e-15);
            }
            if m % 2 == 0 {
                let gam = cl.chirality().unwrap();
                let n = cl.spin_dim();
                assert!(max_abs(&(gam * gam - identity(n))) < 1e-14);
                assert!(crate::linalg::hermiticity_defect(gam) < 1e-14);
                for g in cl.gammas() {
                    assert!(max_abs(&(gam * g + g * gam)) < 1e-14);
                    // P⁺ γ P⁺ = 0
                    let p = (identity(n) + gam) * c(0.5, 0.0);
                    assert!(max_abs(&(&p * g * &p)) < 1e-14);
                }
            }
        }
    }

    #[test]
    fn four_dim_chirality_is_normalised_volume() {
        let cl = CliffordModule::new(4).unwrap();
        let prod = cl.blade(0b1111);
        let gam = cl.chirality().unwrap();
        assert!(max_abs(&(prod * c(-1.0, 0.0) - gam)) < 1e-15);
    }

    #[test]
    fn tensor_product_of_scalar_one_form() {
        let cl = CliffordModule::new(4).unwrap();
        let rep = GaugeRep::standard(&GaugeAlgebra::su(2).unwrap());
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let psi = crate::linalg::random_cvec(&mut rng, 4);
        let theta = basis_one_form(4, 0).scaled(2.5);
        let out = clifford_tensor_product(&theta, &psi, &cl, &rep).unwrap();
        let g1psi = cl.gamma(0) * &psi * c(2.5, 0.0);
        for col in 0..2 {
            assert!((out.column(col) - &g1psi).camax() < 1e-15);
        }
        let zero = Form::zeros(4, 2, &0.0).unwrap();
        let out0 = clifford_tensor_product(&zero, &psi, &cl, &rep).unwrap();
        assert_eq!(max_abs(&out0), 0.0);
    }

    #[test]
    fn tensor_product_of_lie_two_form() {
        let cl = CliffordModule::new(4).unwrap();
        let alg = GaugeAlgebra::su(2).unwrap();
        let rep = GaugeRep::adjoint(&alg);
        let sigma = LieVec::from_vec(vec![0.3, -1.0, 0.5]);
        let theta = Form::monomial(4, &[0, 1], sigma.clone()).unwrap();
        let psi = CVec::from_fn(4, |i, _| if i == 0 { c(1.0, 0.0) } else { c(0.0, 0.0) });
        let out = clifford_tensor_product(&theta, &psi, &cl, &rep).unwrap();
        let spin = cl.gamma(0) * cl.gamma(1) * &psi;
        let expected = spin * sigma.map(|x| c(x, 0.0)).transpose();
        assert!(max_abs(&(out - expected)) < 1e-15);
        let st = GaugeRep::standard(&alg);
        assert!(matches!(
            clifford_tensor_product(&theta, &psi, &cl, &st),
            Err(Error::ValueKind(_))
        ));
    }

    #[test]
    fn clifford_action_cases() {
        let cl = CliffordModule::new(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let psi = random_cmat(&mut rng, 4, 3);
        let id = scalar_endo_form(&crate::exterior::scalar_form(4, 1.0), 3);
        let same = clifford_action(&[&id], &psi, &cl).unwrap();
        assert!(max_abs(&(same - &psi)) < 1e-15);

        let a = crate::linalg::random_anti_hermitian(&mut rng, 3);
        let xi = Form::monomial(4, &[0], a.clone()).unwrap();
        let once = clifford_action(&[&xi], &psi, &cl).unwrap();
        let twice = clifford_action(&[&xi], &once, &cl).unwrap();
        let expected = apply_tensor(&identity(4), &(&a * &a), &psi) * c(-1.0, 0.0);
        assert!(max_abs(&(twice - expected)) < 1e-13);

        let bad = random_cmat(&mut rng, 2, 3);
        assert!(clifford_action(&[&xi], &bad, &cl).is_err());
    }

    #[test]
    fn self_dual_forms_annihilate_one_chirality() {
        // For each chirality, exactly one of the SD/ASD halves acts as zero.
        let cl = CliffordModule::new(4).unwrap();
        let mut killed = Vec::new();
        for positive in [true, false] {
            for part in [crate::exterior::Duality::SelfDual, crate::exterior::Duality::AntiSelfDual] {
                let all_zero = basis_masks(4, 2).iter().all(|&mask| {
                    let idx = mask_indices(mask);
                    let f = Form::monomial(4, &idx, 1.0).unwrap();
                    let p = crate::exterior::sd_asd_project(&f, part).unwrap();
                    let e = cl.form_endo(&p).unwrap();
                    let proj = chiral_project(&identity(4), positive, &cl).unwrap();
                    max_abs(&(e * proj)) < 1e-14
                });
                if all_zero {
                    killed.push((positive, part));
                }
            }
        }
        assert_eq!(killed.len(), 2);
        assert_ne!(killed[0].0, killed[1].0);
        assert_ne!(killed[0].1, killed[1].1);
    }

    #[test]
    fn chiral_projection() {
        let cl = CliffordModule::new(4).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let psi = random_cmat(&mut rng, 4, 2);
        let p = chiral_project(&psi, true, &cl).unwrap();
        let q = chiral_project(&psi, false, &cl).unwrap();
        assert!(max_abs(&(&p + &q - &psi)) < 1e-14);
        assert!(max_abs(&chiral_project(&p, false, &cl).unwrap()) < 1e-15);
        assert!(max_abs(&(chiral_project(&p, true, &cl).unwrap() - &p)) < 1e-15);
        assert!(spinor_inner(&p, &q).norm() < 1e-14);
        let odd = CliffordModule::new(3).unwrap();
        assert_eq!(
            chiral_project(&random_cmat(&mut rng, 2, 1), true, &odd).unwrap_err(),
            Error::NoChirality(3)
        );
    }

    #[test]
    fn conjugation_basics() {
        let r0 = crate::exterior::scalar_form(5, 2.0);
        let out = conjugation_sum(&r0).unwrap();
        assert_eq!(out.coeffs()[0], -10.0);
        let e = basis_one_form(3, 1);
        assert_eq!(conjugation_sum(&e).unwrap().coeffs(), e.coeffs());
        assert_eq!(conjugation_factor(2, 4), 0.0);
        assert_eq!(conjugation_factor(1, 3), 1.0);
    }

    #[test]
    fn blade_algebra_matches_gammas() {
        for m in 2..=5 {
            let cl = CliffordModule::new(m).unwrap();
            for a in 0u32..(1 << m) {
                for b in 0u32..(1 << m) {
                    let (s, ab) = blade_product(a, b);
                    let lhs = cl.blade(a) * cl.blade(b);
                    let rhs = cl.blade(ab) * c(s as f64, 0.0);
                    assert!(max_abs(&(lhs - rhs)) < 1e-14);
                }
            }
        }
    }

    #[test]
    fn one_form_identity_sign_pattern() {
        // with ⋆α ∧ β = ⟨α, β⟩ vol the sign is (−1)^{rm}
        for m in 2..=6 {
            let signs = one_form_identity_signs(m);
            assert_eq!(signs[0], None);
            for (r, s) in signs.iter().enumerate().skip(1) {
                let expected = if (r * m) % 2 == 0 { 1 } else { -1 };
                assert_eq!(*s, Some(expected), "m={m} r={r}");
            }
        }
    }

    #[test]
    fn one_form_product_is_wedge_minus_insertion() {
        for m in 2..=5 {
            for r in 0..=m {
                for &mask in &basis_masks(m, r) {
                    let theta = Form::monomial(m, &mask_indices(mask), 1.0).unwrap();
                    for i in 0..m {
                        let (up, down) = one_form_product(i, &theta);
                        if r < m {
                            let w = wedge(&basis_one_form(m, i), &theta).unwrap();
                            assert_eq!(up.coeffs(), w.coeffs());
                        }
                        if let Some(down) = down {
                            let ins = insert(i, &theta).unwrap().scaled(-1.0);
                            assert_eq!(down.coeffs(), ins.coeffs());
                        }
                    }
                }
            }
        }
    }
}
