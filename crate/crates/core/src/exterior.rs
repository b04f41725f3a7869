//! Pointwise exterior algebra on an oriented orthonormal frame `e_1..e_m`.
//!
//! A k-form is stored by its components on the increasing monomials
//! `e^{i_1} ∧ … ∧ e^{i_k}`, each monomial encoded as a bitmask of its index
//! set. Components for arbitrary (unordered, repeated) index tuples are
//! recovered with the permutation sign, so antisymmetry holds exactly.
//!
//! Conventions:
//! * wedge of monomials is the usual determinant product (the binomial
//!   normalisation of the alternator), so `e^1 ∧ e^2` has component `+1` on
//!   `(1, 2)`;
//! * the Hodge star is fixed by `⋆α ∧ β = ⟨α, β⟩ vol` with
//!   `vol = e^1 ∧ … ∧ e^m`;
//! * `⟨α, β⟩ = (1/k!) Σ α_{i…} β_{i…}`, making increasing monomials
//!   orthonormal.

use nalgebra::DVector;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CMat;

/// Lie-algebra coordinates with respect to an orthonormal basis.
pub type LieVec = DVector<f64>;

/// Coefficient types a form can carry.
pub trait Coefficient: Clone + Send + Sync + std::fmt::Debug {
    fn zero_like(&self) -> Self;
    fn add_scaled(&mut self, a: f64, other: &Self);
    /// Real part of the natural (Hermitian or Euclidean) inner product.
    fn dot(&self, other: &Self) -> f64;
    fn is_finite(&self) -> bool;
}

impl Coefficient for f64 {
    fn zero_like(&self) -> Self {
        0.0
    }
    fn add_scaled(&mut self, a: f64, other: &Self) {
        *self += a * other;
    }
    fn dot(&self, other: &Self) -> f64 {
        self * other
    }
    fn is_finite(&self) -> bool {
        f64::is_finite(*self)
    }
}

impl Coefficient for Complex64 {
    fn zero_like(&self) -> Self {
        Complex64::new(0.0, 0.0)
    }
    fn add_scaled(&mut self, a: f64, other: &Self) {
        *self += other * a;
    }
    fn dot(&self, other: &Self) -> f64 {
        (self.conj() * other).re
    }
    fn is_finite(&self) -> bool {
        self.re.is_finite() && self.im.is_finite()
    }
}

impl Coefficient for LieVec {
    fn zero_like(&self) -> Self {
        LieVec::zeros(self.len())
    }
    fn add_scaled(&mut self, a: f64, other: &Self) {
        self.axpy(a, other, 1.0);
    }
    fn dot(&self, other: &Self) -> f64 {
        self.dot(other)
    }
    fn is_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }
}

impl Coefficient for CMat {
    fn zero_like(&self) -> Self {
        CMat::zeros(self.nrows(), self.ncols())
    }
    fn add_scaled(&mut self, a: f64, other: &Self) {
        *self += other * Complex64::new(a, 0.0);
    }
    /// The Hilbert–Schmidt pairing `Re Tr(a^* b)`.
    fn dot(&self, other: &Self) -> f64 {
        crate::linalg::frobenius_re(self, other)
    }
    fn is_finite(&self) -> bool {
        self.iter().all(|z| z.re.is_finite() && z.im.is_finite())
    }
}

impl Coefficient for nalgebra::DMatrix<f64> {
    fn zero_like(&self) -> Self {
        nalgebra::DMatrix::zeros(self.nrows(), self.ncols())
    }
    fn add_scaled(&mut self, a: f64, other: &Self) {
        *self += other * a;
    }
    fn dot(&self, other: &Self) -> f64 {
        self.dot(other)
    }
    fn is_finite(&self) -> bool {
        self.iter().all(|x| x.is_finite())
    }
}

/// Forms are themselves coefficients, so fields of forms can be differentiated.
impl<V: Coefficient> Coefficient for Form<V> {
    fn zero_like(&self) -> Self {
        self.scaled(0.0)
    }
    fn add_scaled(&mut self, a: f64, other: &Self) {
        Form::add_scaled(self, a, other);
    }
    fn dot(&self, other: &Self) -> f64 {
        form_inner(self, other).expect("matching degrees")
    }
    fn is_finite(&self) -> bool {
        Form::is_finite(self)
    }
}

/// Bitmasks of the increasing k-element subsets of `{0..m}`, sorted numerically.
pub fn basis_masks(m: usize, k: usize) -> Vec<u32> {
    (0u32..(1u32 << m))
        .filter(|b| b.count_ones() as usize == k)
        .collect()
}

/// Indices (0-based, increasing) of a mask.
pub fn mask_indices(mask: u32) -> Vec<usize> {
    (0..32).filter(|i| mask & (1 << i) != 0).collect()
}

/// Sign of the permutation sorting the concatenation `I ++ J` of two
/// increasing index sets (zero if they overlap).
pub fn merge_sign(a: u32, b: u32) -> i32 {
    if a & b != 0 {
        return 0;
    }
    // count pairs (i in a, j in b) with i > j
    let mut inversions = 0u32;
    let mut rest = b;
    while rest != 0 {
        let j = rest.trailing_zeros();
        inversions += (a >> (j + 1)).count_ones();
        rest &= rest - 1;
    }
    if inversions.is_multiple_of(2) {
        1
    } else {
        -1
    }
}

/// Sign and mask of an arbitrary index tuple; sign 0 on repeated indices.
pub fn tuple_mask(indices: &[usize]) -> (i32, u32) {
    let mut mask = 0u32;
    let mut sign = 1;
    for &i in indices {
        let bit = 1u32 << i;
        if mask & bit != 0 {
            return (0, 0);
        }
        // moving e^i to its sorted place passes every larger index already present
        if (mask >> (i + 1)).count_ones() % 2 == 1 {
            sign = -sign;
        }
        mask |= bit;
    }
    (sign, mask)
}

/// A homogeneous k-form at a point with coefficients of type `V`.
#[derive(Debug, Clone)]
pub struct Form<V> {
    dim: usize,
    degree: usize,
    masks: Vec<u32>,
    coeffs: Vec<V>,
}

impl<V: Coefficient> Form<V> {
    pub fn zeros(dim: usize, degree: usize, template: &V) -> Result<Self> {
        if degree > dim {
            return Err(Error::InvalidDegree { degree, dim });
        }
        let masks = basis_masks(dim, degree);
        let coeffs = vec![template.zero_like(); masks.len()];
        Ok(Self {
            dim,
            degree,
            masks,
            coeffs,
        })
    }

    /// Builds a form from its components on the increasing monomials.
    pub fn from_fn(dim: usize, degree: usize, mut f: impl FnMut(&[usize]) -> V) -> Result<Self> {
        if degree > dim {
            return Err(Error::InvalidDegree { degree, dim });
        }
        let masks = basis_masks(dim, degree);
        let coeffs = masks.iter().map(|&b| f(&mask_indices(b))).collect();
        Ok(Self {
            dim,
            degree,
            masks,
            coeffs,
        })
    }

    /// The monomial `value ⊗ e^{i_1} ∧ … ∧ e^{i_k}` (0-based indices, any order).
    pub fn monomial(dim: usize, indices: &[usize], value: V) -> Result<Self> {
        if indices.iter().any(|&i| i >= dim) {
            return Err(Error::ShapeMismatch(format!("index out of range for m = {dim}")));
        }
        let mut form = Self::zeros(dim, indices.len(), &value)?;
        let (sign, mask) = tuple_mask(indices);
        if sign != 0 {
            let pos = form.position(mask);
            form.coeffs[pos].add_scaled(sign as f64, &value);
        }
        Ok(form)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn masks(&self) -> &[u32] {
        &self.masks
    }

    pub fn coeffs(&self) -> &[V] {
        &self.coeffs
    }

    pub fn coeffs_mut(&mut self) -> &mut [V] {
        &mut self.coeffs
    }

    /// Iterates over `(mask, coefficient)` pairs of increasing monomials.
    pub fn terms(&self) -> impl Iterator<Item = (u32, &V)> {
        self.masks.iter().copied().zip(self.coeffs.iter())
    }

    fn position(&self, mask: u32) -> usize {
        self.masks
            .binary_search(&mask)
            .expect("mask of the right degree")
    }

    /// Coefficient on the increasing monomial with this mask.
    pub fn get_mask(&self, mask: u32) -> &V {
        &self.coeffs[self.position(mask)]
    }

    pub fn get_mask_mut(&mut self, mask: u32) -> &mut V {
        let pos = self.position(mask);
        &mut self.coeffs[pos]
    }

    /// Fully antisymmetric component `Ξ(e_{i_1}, …, e_{i_k})`.
    pub fn component(&self, indices: &[usize]) -> V {
        assert_eq!(indices.len(), self.degree, "component arity");
        let (sign, mask) = tuple_mask(indices);
        let mut out = self.coeffs.first().map(|v| v.zero_like()).unwrap_or_else(|| {
            panic!("empty form basis")
        });
        if sign != 0 {
            out.add_scaled(sign as f64, self.get_mask(mask));
        }
        out
    }

    pub fn template(&self) -> V {
        self.coeffs[0].zero_like()
    }

    pub fn map<W: Coefficient>(&self, f: impl FnMut(&V) -> W) -> Form<W> {
        Form {
            dim: self.dim,
            degree: self.degree,
            masks: self.masks.clone(),
            coeffs: self.coeffs.iter().map(f).collect(),
        }
    }

    pub fn add_scaled(&mut self, a: f64, other: &Self) {
        assert_eq!((self.dim, self.degree), (other.dim, other.degree));
        for (x, y) in self.coeffs.iter_mut().zip(&other.coeffs) {
            x.add_scaled(a, y);
        }
    }

    pub fn scaled(&self, a: f64) -> Self {
        let mut out = self.clone();
        for x in out.coeffs.iter_mut() {
            let y = x.clone();
            *x = y.zero_like();
            x.add_scaled(a, &y);
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.coeffs.iter().all(Coefficient::is_finite)
    }

    /// Pointwise norm `|α|² = ⟨α, α⟩`.
    pub fn norm_sq(&self) -> f64 {
        self.coeffs.iter().map(|v| v.dot(v)).sum()
    }

    pub fn norm(&self) -> f64 {
        self.norm_sq().sqrt()
    }
}

/// `(α ∧ β)` with coefficient product `mul`.
pub fn wedge_with<A, B, C>(
    alpha: &Form<A>,
    beta: &Form<B>,
    template: &C,
    mul: impl Fn(&A, &B) -> C,
) -> Result<Form<C>>
where
    A: Coefficient,
    B: Coefficient,
    C: Coefficient,
{
    if alpha.dim != beta.dim {
        return Err(Error::ShapeMismatch("wedge of forms over different dimensions".into()));
    }
    let m = alpha.dim;
    let degree = alpha.degree + beta.degree;
    if degree > m {
        return Err(Error::InvalidDegree { degree, dim: m });
    }
    let mut out = Form::zeros(m, degree, template)?;
    for (ma, a) in alpha.terms() {
        for (mb, b) in beta.terms() {
            let s = merge_sign(ma, mb);
            if s != 0 {
                out.get_mask_mut(ma | mb).add_scaled(s as f64, &mul(a, b));
            }
        }
    }
    Ok(out)
}

/// Wedge of a scalar form with any coefficient form.
pub fn wedge<V: Coefficient>(alpha: &Form<f64>, beta: &Form<V>) -> Result<Form<V>> {
    wedge_with(alpha, beta, &beta.template(), |a, b| {
        let mut v = b.zero_like();
        v.add_scaled(*a, b);
        v
    })
}

/// Sign `s_I` with `⋆e^I = s_I e^{I^c}`.
fn hodge_sign(dim: usize, mask: u32) -> (i32, u32) {
    let full = if dim == 32 { u32::MAX } else { (1u32 << dim) - 1 };
    let comp = full & !mask;
    // ⋆e^I ∧ e^I = vol  ⇒  s_I · sign(I^c, I) = 1
    (merge_sign(comp, mask), comp)
}

/// Hodge star `⋆: Λ^k → Λ^{m−k}`.
pub fn hodge_star<V: Coefficient>(alpha: &Form<V>) -> Form<V> {
    let m = alpha.dim;
    let mut out = Form::zeros(m, m - alpha.degree, &alpha.template()).expect("valid degree");
    for (mask, v) in alpha.terms() {
        let (s, comp) = hodge_sign(m, mask);
        out.get_mask_mut(comp).add_scaled(s as f64, v);
    }
    out
}

/// Inverse Hodge star, `⋆^{-1} = (−1)^{k(m−k)} ⋆` on k-forms.
pub fn hodge_star_inv<V: Coefficient>(alpha: &Form<V>) -> Form<V> {
    let k = alpha.degree;
    let m = alpha.dim;
    let out = hodge_star(alpha);
    if (k * (m - k)).is_multiple_of(2) {
        out
    } else {
        out.scaled(-1.0)
    }
}

/// Insertion `e_v ⌟ α` of the frame vector `e_v` (0-based).
pub fn insert<V: Coefficient>(v: usize, alpha: &Form<V>) -> Result<Form<V>> {
    if alpha.degree == 0 {
        return Err(Error::InvalidDegree {
            degree: 0,
            dim: alpha.dim,
        });
    }
    if v >= alpha.dim {
        return Err(Error::ShapeMismatch(format!("frame index {v} out of range")));
    }
    let mut out = Form::zeros(alpha.dim, alpha.degree - 1, &alpha.template())?;
    let bit = 1u32 << v;
    for (mask, val) in alpha.terms() {
        if mask & bit != 0 {
            // e_v must be moved to the front: passes the smaller indices
            let pos = (mask & (bit - 1)).count_ones();
            let s = if pos.is_multiple_of(2) { 1.0 } else { -1.0 };
            out.get_mask_mut(mask & !bit).add_scaled(s, val);
        }
    }
    Ok(out)
}

/// `⟨α, β⟩` using the coefficient pairing; increasing monomials orthonormal.
pub fn form_inner<V: Coefficient>(alpha: &Form<V>, beta: &Form<V>) -> Result<f64> {
    if alpha.dim != beta.dim || alpha.degree != beta.degree {
        return Err(Error::ShapeMismatch(format!(
            "inner product of degrees {} and {}",
            alpha.degree, beta.degree
        )));
    }
    Ok(alpha
        .coeffs
        .iter()
        .zip(&beta.coeffs)
        .map(|(a, b)| a.dot(b))
        .sum())
}

/// The same inner product from the full antisymmetric sum with the `1/k!` factor.
pub fn form_inner_full_sum(alpha: &Form<f64>, beta: &Form<f64>) -> f64 {
    let m = alpha.dim;
    let k = alpha.degree;
    let mut total = 0.0;
    let mut idx = vec![0usize; k];
    loop {
        total += alpha.component(&idx) * beta.component(&idx);
        // odometer over {0..m}^k
        let mut p = 0;
        loop {
            if p == k {
                let fact: f64 = (1..=k).map(|x| x as f64).product();
                return total / fact;
            }
            idx[p] += 1;
            if idx[p] < m {
                break;
            }
            idx[p] = 0;
            p += 1;
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Duality {
    SelfDual,
    AntiSelfDual,
}

/// `½(α ± ⋆α)` for a 2-form in dimension 4.
pub fn sd_asd_project<V: Coefficient>(alpha: &Form<V>, part: Duality) -> Result<Form<V>> {
    if alpha.dim != 4 || alpha.degree != 2 {
        return Err(Error::InvalidDegree {
            degree: alpha.degree,
            dim: alpha.dim,
        });
    }
    let star = hodge_star(alpha);
    let sign = match part {
        Duality::SelfDual => 1.0,
        Duality::AntiSelfDual => -1.0,
    };
    let mut out = alpha.scaled(0.5);
    out.add_scaled(0.5 * sign, &star);
    Ok(out)
}

/// Top-degree coefficient of `⋆α ∧ β` for real forms of equal degree.
pub fn star_wedge_top(alpha: &Form<f64>, beta: &Form<f64>) -> Result<f64> {
    let w = wedge(&hodge_star(alpha), beta)?;
    Ok(w.coeffs[0])
}

/// `e^i` as a real 1-form.
pub fn basis_one_form(dim: usize, i: usize) -> Form<f64> {
    Form::monomial(dim, &[i], 1.0).expect("index in range")
}

/// The volume form `e^1 ∧ … ∧ e^m`.
pub fn volume_form(dim: usize) -> Form<f64> {
    let idx: Vec<usize> = (0..dim).collect();
    Form::monomial(dim, &idx, 1.0).expect("valid")
}

/// A constant real 0-form.
pub fn scalar_form(dim: usize, value: f64) -> Form<f64> {
    Form::monomial(dim, &[], value).expect("valid")
}
