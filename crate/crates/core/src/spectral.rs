//! Fourier-truncated twisted Dirac operators on flat tori `R^m/(L Z)^m`.
//!
//! Twisted spinors are expanded in the orthonormal plane waves
//! `e_n(x) = L^{−m/2} exp(2πi (n + δ)·x/L)`, `|n|_∞ ≤ K`, where `δ_j ∈ {0, ½}`
//! selects the spin structure on each axis. A band-limited connection acts by
//! exact convolution, so the truncated operator is the compression of the
//! continuum one. The basis index of `(mode, spin s, color c)` is
//! `mode·(S·N) + s·N + c`.
//!
//! A connection only couples modes that differ by one of its wave vectors, so
//! the operator splits into invariant momentum sectors which are diagonalised
//! independently.

use std::collections::{BTreeMap, HashMap};

use num_complex::Complex64;
use rand::Rng;
use serde::Serialize;

use crate::clifford::{apply_tensor, CliffordModule, TwistedSpinor};
use crate::current::{dirac_current, eta_dot_current};
use crate::error::{Error, Result};
use crate::exterior::{Form, LieVec};
use crate::gauge::GaugeRep;
use crate::linalg::{c, hermitian_eigh, kron, CMat, CVec, I};
use crate::par::Exec;
use crate::tol;

type Mode = Vec<i64>;

/// A band-limited Lie-valued 1-form `A(x) = Σ_p a_p exp(2πi p·x/L)` with
/// complexified Lie coordinates; `a_{−p} = conj(a_p)` keeps `A` real.
#[derive(Debug, Clone, PartialEq)]
pub struct FourierConnection {
    m: usize,
    lie_dim: usize,
    /// Per wave vector: `m` coefficient vectors of length `lie_dim`.
    modes: BTreeMap<Mode, Vec<Vec<Complex64>>>,
}

impl FourierConnection {
    pub fn zero(m: usize, lie_dim: usize) -> Self {
        Self {
            m,
            lie_dim,
            modes: BTreeMap::new(),
        }
    }

    /// A constant 1-form.
    pub fn constant(eta: &Form<LieVec>) -> Result<Self> {
        if eta.degree() != 1 {
            return Err(Error::InvalidDegree {
                degree: eta.degree(),
                dim: eta.dim(),
            });
        }
        let lie_dim = eta.coeffs()[0].len();
        let mut out = Self::zero(eta.dim(), lie_dim);
        let coeffs = eta
            .coeffs()
            .iter()
            .map(|v| v.iter().map(|&x| c(x, 0.0)).collect())
            .collect();
        out.set_mode(&vec![0; eta.dim()], coeffs)?;
        Ok(out)
    }

    /// Sets the coefficient at `p` and its conjugate at `−p`.
    pub fn set_mode(&mut self, p: &[i64], coeffs: Vec<Vec<Complex64>>) -> Result<()> {
        if p.len() != self.m || coeffs.len() != self.m || coeffs.iter().any(|v| v.len() != self.lie_dim) {
            return Err(Error::ShapeMismatch("connection mode of wrong shape".into()));
        }
        let neg: Mode = p.iter().map(|v| -v).collect();
        if neg == p {
            if coeffs.iter().flatten().any(|z| z.im != 0.0) {
                return Err(Error::ValueKind("zero mode of a real connection must be real".into()));
            }
        } else {
            let conj = coeffs.iter().map(|v| v.iter().map(|z| z.conj()).collect()).collect();
            self.modes.insert(neg, conj);
        }
        self.modes.insert(p.to_vec(), coeffs);
        Ok(())
    }

    /// Random real connection with modes `|p|_∞ ≤ kmax` and coefficients of size `amplitude`.
    pub fn random<R: Rng + ?Sized>(rng: &mut R, m: usize, lie_dim: usize, kmax: i64, amplitude: f64) -> Self {
        let mut out = Self::zero(m, lie_dim);
        for p in cube(m, kmax) {
            let neg: Mode = p.iter().map(|v| -v).collect();
            if p < neg {
                continue;
            }
            let zero = p == neg;
            let coeffs = (0..m)
                .map(|_| {
                    (0..lie_dim)
                        .map(|_| {
                            let im = if zero { 0.0 } else { rng.random_range(-1.0..1.0) };
                            c(rng.random_range(-1.0..1.0), im) * amplitude
                        })
                        .collect()
                })
                .collect();
            out.set_mode(&p, coeffs).expect("shape checked");
        }
        out
    }

    pub fn dim(&self) -> usize {
        self.m
    }

    pub fn lie_dim(&self) -> usize {
        self.lie_dim
    }

    pub fn modes(&self) -> &BTreeMap<Mode, Vec<Vec<Complex64>>> {
        &self.modes
    }

    /// Largest `|p|_∞` present (0 for the zero connection).
    pub fn max_mode(&self) -> i64 {
        self.modes
            .keys()
            .map(|p| p.iter().map(|v| v.abs()).max().unwrap_or(0))
            .max()
            .unwrap_or(0)
    }

    /// `max |a_{−p} − conj(a_p)|`.
    pub fn realness_defect(&self) -> f64 {
        let mut worst: f64 = 0.0;
        for (p, a) in &self.modes {
            let neg: Mode = p.iter().map(|v| -v).collect();
            match self.modes.get(&neg) {
                Some(b) => {
                    for (u, v) in a.iter().flatten().zip(b.iter().flatten()) {
                        worst = worst.max((u.conj() - v).norm());
                    }
                }
                None => return f64::INFINITY,
            }
        }
        worst
    }

    pub fn scaled(&self, t: f64) -> Self {
        let mut out = self.clone();
        for a in out.modes.values_mut() {
            for z in a.iter_mut().flatten() {
                *z *= t;
            }
        }
        out
    }

    pub fn plus(&self, other: &Self) -> Result<Self> {
        if self.m != other.m || self.lie_dim != other.lie_dim {
            return Err(Error::ShapeMismatch("adding connections of different shapes".into()));
        }
        let mut out = self.clone();
        for (p, b) in &other.modes {
            let e = out
                .modes
                .entry(p.clone())
                .or_insert_with(|| vec![vec![c(0.0, 0.0); self.lie_dim]; self.m]);
            for (u, v) in e.iter_mut().flatten().zip(b.iter().flatten()) {
                *u += v;
            }
        }
        Ok(out)
    }

    /// `A(x)` in real Lie coordinates (imaginary parts cancel by realness).
    pub fn eval(&self, x: &[f64], length: f64) -> Form<LieVec> {
        let mut out = vec![LieVec::zeros(self.lie_dim); self.m];
        for (p, a) in &self.modes {
            let ph = 2.0 * std::f64::consts::PI * p.iter().zip(x).map(|(&n, &y)| n as f64 * y).sum::<f64>() / length;
            let e = c(ph.cos(), ph.sin());
            for (k, ak) in a.iter().enumerate() {
                for (al, z) in ak.iter().enumerate() {
                    out[k][al] += (z * e).re;
                }
            }
        }
        Form::from_fn(self.m, 1, |idx| out[idx[0]].clone()).expect("degree 1")
    }

    /// `ρ_*(a_{p,k})` for every wave vector.
    fn endo_coeffs(&self, rep: &GaugeRep) -> BTreeMap<Mode, Vec<CMat>> {
        self.modes
            .iter()
            .map(|(p, a)| (p.clone(), a.iter().map(|v| rep.rho_complex(v)).collect()))
            .collect()
    }
}

fn cube(m: usize, k: i64) -> Vec<Mode> {
    let mut out = vec![vec![]];
    for _ in 0..m {
        out = out
            .into_iter()
            .flat_map(|p| {
                (-k..=k).map(move |v| {
                    let mut q = p.clone();
                    q.push(v);
                    q
                })
            })
            .collect();
    }
    out
}

/// Torus size, mode cutoff and spin structure.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Truncation {
    pub length: f64,
    pub cutoff: i64,
    pub offsets: Vec<f64>,
}

impl Truncation {
    /// Trivial spin structure (`δ = 0`), `L = 1`.
    pub fn periodic(m: usize, cutoff: i64) -> Self {
        Self {
            length: 1.0,
            cutoff,
            offsets: vec![0.0; m],
        }
    }

    /// `δ = ½` on every axis, `L = 1`.
    pub fn antiperiodic(m: usize, cutoff: i64) -> Self {
        Self {
            length: 1.0,
            cutoff,
            offsets: vec![0.5; m],
        }
    }

    fn momentum(&self, n: &[i64]) -> Vec<f64> {
        n.iter()
            .zip(&self.offsets)
            .map(|(&v, d)| 2.0 * std::f64::consts::PI * (v as f64 + d) / self.length)
            .collect()
    }
}

/// The truncated operator in block-sparse form.
#[derive(Debug, Clone)]
pub struct TruncatedDirac {
    m: usize,
    trunc: Truncation,
    block: usize,
    spin_dim: usize,
    color_dim: usize,
    modes: Vec<Mode>,
    index: HashMap<Mode, usize>,
    diag: Vec<CMat>,
    couplings: Vec<CMat>,
    /// `(target, source, coupling)`.
    offdiag: Vec<(usize, usize, usize)>,
}

fn build(
    conn: &FourierConnection,
    trunc: &Truncation,
    module: &CliffordModule,
    rep: &GaugeRep,
    with_free: bool,
) -> Result<TruncatedDirac> {
    let m = module.dim();
    if conn.dim() != m || trunc.offsets.len() != m {
        return Err(Error::ShapeMismatch("connection, truncation and module dimensions differ".into()));
    }
    if conn.lie_dim() != rep.algebra().dim() {
        return Err(Error::ShapeMismatch("connection coordinates do not match the algebra".into()));
    }
    if trunc.cutoff < conn.max_mode() + 1 {
        return Err(Error::Aliasing {
            cutoff: trunc.cutoff,
            max_mode: conn.max_mode(),
        });
    }
    let (s, n) = (module.spin_dim(), rep.dim());
    let block = s * n;
    let modes = cube(m, trunc.cutoff);
    let index: HashMap<Mode, usize> = modes.iter().cloned().enumerate().map(|(i, p)| (p, i)).collect();
    let id_n = CMat::identity(n, n);
    let diag: Vec<CMat> = modes
        .iter()
        .map(|p| {
            if !with_free {
                return CMat::zeros(block, block);
            }
            trunc
                .momentum(p)
                .iter()
                .enumerate()
                .fold(CMat::zeros(block, block), |acc, (k, &q)| {
                    acc + kron(module.gamma(k), &id_n) * (I * q)
                })
        })
        .collect();
    let mut out = TruncatedDirac {
        m,
        trunc: trunc.clone(),
        block,
        spin_dim: s,
        color_dim: n,
        modes,
        index,
        diag,
        couplings: Vec::new(),
        offdiag: Vec::new(),
    };
    for (p, rho) in conn.endo_coeffs(rep) {
        let b = rho
            .iter()
            .enumerate()
            .fold(CMat::zeros(block, block), |acc, (k, r)| acc + kron(module.gamma(k), r));
        if p.iter().all(|&v| v == 0) {
            for d in out.diag.iter_mut() {
                *d += &b;
            }
            continue;
        }
        let ci = out.couplings.len();
        out.couplings.push(b);
        for (src, n0) in out.modes.iter().enumerate() {
            let tgt: Mode = n0.iter().zip(&p).map(|(a, b)| a + b).collect();
            if let Some(&t) = out.index.get(&tgt) {
                out.offdiag.push((t, src, ci));
            }
        }
    }
    Ok(out)
}

/// `D̸_A` truncated to `|n|_∞ ≤ K`.
pub fn assemble(
    conn: &FourierConnection,
    trunc: &Truncation,
    module: &CliffordModule,
    rep: &GaugeRep,
) -> Result<TruncatedDirac> {
    build(conn, trunc, module, rep, true)
}

/// The multiplication operator `K_η = Σ_k γ_k ⊗ ρ_*(η_k(x))` on the same basis.
pub fn assemble_multiplication(
    eta: &FourierConnection,
    trunc: &Truncation,
    module: &CliffordModule,
    rep: &GaugeRep,
) -> Result<TruncatedDirac> {
    build(eta, trunc, module, rep, false)
}

/// Mode-space twisted spinor: wave vector `n` ↦ `S×N` coefficient.
pub type ModeVec = BTreeMap<Mode, TwistedSpinor>;

impl TruncatedDirac {
    pub fn dim(&self) -> usize {
        self.modes.len() * self.block
    }

    pub fn base_dim(&self) -> usize {
        self.m
    }

    pub fn truncation(&self) -> &Truncation {
        &self.trunc
    }

    pub fn modes(&self) -> &[Mode] {
        &self.modes
    }

    /// Dense matrix of the operator restricted to a set of modes.
    pub fn sector_matrix(&self, sector: &[usize]) -> CMat {
        let b = self.block;
        let local: HashMap<usize, usize> = sector.iter().enumerate().map(|(i, &g)| (g, i)).collect();
        let mut h = CMat::zeros(sector.len() * b, sector.len() * b);
        for (i, &g) in sector.iter().enumerate() {
            h.view_mut((i * b, i * b), (b, b)).copy_from(&self.diag[g]);
        }
        for &(t, s, ci) in &self.offdiag {
            if let (Some(&lt), Some(&ls)) = (local.get(&t), local.get(&s)) {
                let mut v = h.view_mut((lt * b, ls * b), (b, b));
                v += &self.couplings[ci];
            }
        }
        h
    }

    pub fn matrix(&self) -> CMat {
        self.sector_matrix(&(0..self.modes.len()).collect::<Vec<_>>())
    }

    /// `‖H − H*‖_max`, evaluated block by block.
    pub fn hermiticity_defect(&self) -> f64 {
        let mut blocks: HashMap<(usize, usize), CMat> = HashMap::new();
        for &(t, s, ci) in &self.offdiag {
            let e = blocks
                .entry((t, s))
                .or_insert_with(|| CMat::zeros(self.block, self.block));
            *e += &self.couplings[ci];
        }
        let zero = CMat::zeros(self.block, self.block);
        let off = blocks
            .iter()
            .map(|(&(t, s), b)| crate::linalg::max_abs(&(b - blocks.get(&(s, t)).unwrap_or(&zero).adjoint())))
            .fold(0.0, f64::max);
        self.diag
            .iter()
            .map(crate::linalg::hermiticity_defect)
            .fold(off, f64::max)
    }

    /// Invariant sectors of the operators in `ops` (all on the same basis).
    pub fn sectors(ops: &[&TruncatedDirac]) -> Vec<Vec<usize>> {
        let n = ops[0].modes.len();
        let mut parent: Vec<usize> = (0..n).collect();
        fn find(p: &mut [usize], mut i: usize) -> usize {
            while p[i] != i {
                p[i] = p[p[i]];
                i = p[i];
            }
            i
        }
        for op in ops {
            for &(t, s, _) in &op.offdiag {
                let (a, b) = (find(&mut parent, t), find(&mut parent, s));
                if a != b {
                    parent[a.max(b)] = a.min(b);
                }
            }
        }
        let mut groups: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
        for i in 0..n {
            let r = find(&mut parent, i);
            groups.entry(r).or_default().push(i);
        }
        groups.into_values().collect()
    }

    /// Sorted eigenvalues, sector by sector.
    pub fn spectrum(&self, exec: Exec) -> Vec<f64> {
        let sectors = Self::sectors(&[self]);
        let mut all: Vec<f64> = exec
            .map_slice(&sectors, |s| crate::linalg::hermitian_eigvals(&self.sector_matrix(s)))
            .into_iter()
            .flatten()
            .collect();
        all.sort_by(f64::total_cmp);
        all
    }

    /// Matrix-free product with a dense vector.
    pub fn apply_dense(&self, x: &CVec) -> CVec {
        let b = self.block;
        let mut y = CVec::zeros(self.dim());
        for (i, d) in self.diag.iter().enumerate() {
            let r = d * x.rows(i * b, b);
            let mut yv = y.rows_mut(i * b, b);
            yv += r;
        }
        for &(t, s, ci) in &self.offdiag {
            let r = &self.couplings[ci] * x.rows(s * b, b);
            let mut yv = y.rows_mut(t * b, b);
            yv += r;
        }
        y
    }

    pub fn to_dense(&self, v: &ModeVec) -> Result<CVec> {
        let mut x = CVec::zeros(self.dim());
        for (p, psi) in v {
            let &i = self
                .index
                .get(p)
                .ok_or_else(|| Error::ShapeMismatch(format!("mode {p:?} outside the truncation")))?;
            for s in 0..self.spin_dim {
                for col in 0..self.color_dim {
                    x[i * self.block + s * self.color_dim + col] = psi[(s, col)];
                }
            }
        }
        Ok(x)
    }

    pub fn from_dense(&self, x: &CVec) -> ModeVec {
        self.modes
            .iter()
            .enumerate()
            .map(|(i, p)| {
                let psi = TwistedSpinor::from_fn(self.spin_dim, self.color_dim, |s, col| {
                    x[i * self.block + s * self.color_dim + col]
                });
                (p.clone(), psi)
            })
            .collect()
    }

    /// A sector-local vector written back on all modes.
    pub fn sector_to_modes(&self, sector: &[usize], v: &CVec) -> ModeVec {
        let b = self.block;
        sector
            .iter()
            .enumerate()
            .map(|(li, &g)| {
                let psi = TwistedSpinor::from_fn(self.spin_dim, self.color_dim, |s, col| {
                    v[li * b + s * self.color_dim + col]
                });
                (self.modes[g].clone(), psi)
            })
            .collect()
    }
}

/// Numerical kernel dimension with tolerance `tol_rel · spectral radius`.
#[derive(Debug, Clone, Serialize)]
pub struct KernelReport {
    pub dim: usize,
    pub tol: f64,
    /// Some eigenvalue lies within a factor 100 above the tolerance.
    pub ambiguous: bool,
}

pub fn kernel_dim(op: &TruncatedDirac, tol_rel: f64, exec: Exec) -> KernelReport {
    let spec = op.spectrum(exec);
    kernel_from_spectrum(&spec, tol_rel)
}

fn kernel_from_spectrum(spec: &[f64], tol_rel: f64) -> KernelReport {
    let radius = spec.iter().map(|v| v.abs()).fold(0.0, f64::max);
    let tol = tol_rel * radius.max(1e-300);
    KernelReport {
        dim: spec.iter().filter(|v| v.abs() <= tol).count(),
        ambiguous: spec.iter().any(|v| v.abs() > tol && v.abs() <= 100.0 * tol),
        tol,
    }
}

/// The affine family `D(ω + tη) = D(ω) + t K_η`, split into common sectors.
pub struct AffineFamily {
    pub base: TruncatedDirac,
    pub pert: TruncatedDirac,
    pub sectors: Vec<Vec<usize>>,
    base_blocks: Vec<CMat>,
    pert_blocks: Vec<CMat>,
}

impl AffineFamily {
    pub fn new(
        omega: &FourierConnection,
        eta: &FourierConnection,
        trunc: &Truncation,
        module: &CliffordModule,
        rep: &GaugeRep,
    ) -> Result<Self> {
        let base = assemble(omega, trunc, module, rep)?;
        let pert = assemble_multiplication(eta, trunc, module, rep)?;
        let sectors = TruncatedDirac::sectors(&[&base, &pert]);
        let base_blocks = sectors.iter().map(|s| base.sector_matrix(s)).collect();
        let pert_blocks = sectors.iter().map(|s| pert.sector_matrix(s)).collect();
        Ok(Self {
            base,
            pert,
            sectors,
            base_blocks,
            pert_blocks,
        })
    }

    pub fn sector_at(&self, sector: usize, t: f64) -> CMat {
        &self.base_blocks[sector] + &self.pert_blocks[sector] * c(t, 0.0)
    }

    pub fn pert_block(&self, sector: usize) -> &CMat {
        &self.pert_blocks[sector]
    }

    /// `‖K_η‖_op` of the truncated multiplication operator.
    pub fn k_norm(&self) -> f64 {
        self.pert_blocks
            .iter()
            .map(|k| {
                crate::linalg::hermitian_eigvals(k)
                    .into_iter()
                    .map(f64::abs)
                    .fold(0.0, f64::max)
            })
            .fold(0.0, f64::max)
    }

    /// All eigenvalues of `D(ω + tη)`.
    pub fn spectrum_at(&self, t: f64, exec: Exec) -> Vec<f64> {
        let mut all: Vec<f64> = exec
            .map(self.sectors.len(), |s| crate::linalg::hermitian_eigvals(&self.sector_at(s, t)))
            .into_iter()
            .flatten()
            .collect();
        all.sort_by(f64::total_cmp);
        all
    }
}

/// Kernel of `D(ω)` and the compressed perturbation `P K_η P`.
#[derive(Debug, Clone)]
pub struct Splitting {
    pub kernel: KernelReport,
    /// Sorted eigenvalues of `P K_η P` (one per kernel dimension).
    pub eigenvalues: Vec<f64>,
    /// Orthonormal kernel basis per sector: `(sector, vectors)`.
    pub kernel_basis: Vec<(usize, CMat)>,
}

/// First-order splitting of the kernel along `η`.
pub fn first_order_splitting(family: &AffineFamily, tol_rel: f64, exec: Exec) -> Splitting {
    let eig = exec.map(family.sectors.len(), |s| hermitian_eigh(&family.sector_at(s, 0.0)));
    let spec: Vec<f64> = eig.iter().flat_map(|(v, _)| v.iter().copied()).collect();
    let kernel = kernel_from_spectrum(&spec, tol_rel);
    let mut eigenvalues = Vec::new();
    let mut kernel_basis = Vec::new();
    for (s, (vals, vecs)) in eig.iter().enumerate() {
        let cols: Vec<usize> = (0..vals.len()).filter(|&i| vals[i].abs() <= kernel.tol).collect();
        if cols.is_empty() {
            continue;
        }
        let v = vecs.select_columns(&cols);
        let pkp = v.adjoint() * family.pert_block(s) * &v;
        eigenvalues.extend(crate::linalg::hermitian_eigvals(&hermitize(&pkp)));
        kernel_basis.push((s, v));
    }
    eigenvalues.sort_by(f64::total_cmp);
    Splitting {
        kernel,
        eigenvalues,
        kernel_basis,
    }
}

fn hermitize(a: &CMat) -> CMat {
    (a + a.adjoint()) * c(0.5, 0.0)
}

/// For even `m`: largest entry of `P K_η P` between kernel vectors of equal
/// chirality (zero when the compression is block-anti-diagonal), and the
/// largest `|⟨K_ηΨ, Ψ⟩|` over chiral kernel vectors.
pub fn chirality_block_defect(
    family: &AffineFamily,
    splitting: &Splitting,
    module: &CliffordModule,
    rep: &GaugeRep,
) -> Result<(f64, f64)> {
    let gamma = kron(module.chirality()?, &CMat::identity(rep.dim(), rep.dim()));
    let mut block_defect: f64 = 0.0;
    let mut diag: f64 = 0.0;
    for (s, v) in &splitting.kernel_basis {
        let nmodes = family.sectors[*s].len();
        let big_gamma = kron(&CMat::identity(nmodes, nmodes), &gamma);
        let g = hermitize(&(v.adjoint() * &big_gamma * v));
        let (gv, gw) = hermitian_eigh(&g);
        let w = v * gw;
        let pkp = w.adjoint() * family.pert_block(*s) * &w;
        for i in 0..gv.len() {
            diag = diag.max(pkp[(i, i)].norm());
            for j in 0..gv.len() {
                if (gv[i] > 0.0) == (gv[j] > 0.0) {
                    block_defect = block_defect.max(pkp[(i, j)].norm());
                }
            }
        }
    }
    Ok((block_defect, diag))
}

/// One tracked eigenvalue branch.
#[derive(Debug, Clone, Serialize)]
pub struct EigenBranch {
    pub id: usize,
    pub sector: usize,
    pub t: Vec<f64>,
    pub lambda: Vec<f64>,
    /// Smallest accepted eigenvector overlap along the branch.
    pub min_overlap: f64,
    /// `λ'(0)` from the grid values, when the grid allows it.
    pub derivative: Option<f64>,
    /// `⟨K_ηΨ₀, Ψ₀⟩` for the adapted branch vector at `t = 0`.
    pub hellmann_feynman: f64,
    /// `λ(0)` is a simple eigenvalue.
    pub simple: bool,
}

impl EigenBranch {
    /// `max_t (|λ(t) − λ(0)| − |t|·k_norm)`; non-positive when the Weyl bound holds.
    pub fn weyl_excess(&self, k_norm: f64) -> f64 {
        let i0 = self.t.iter().position(|&t| t == 0.0).expect("grid contains 0");
        self.t
            .iter()
            .zip(&self.lambda)
            .map(|(t, l)| (l - self.lambda[i0]).abs() - t.abs() * k_norm)
            .fold(f64::NEG_INFINITY, f64::max)
    }
}

/// Options for [`branch_track`].
#[derive(Debug, Clone, Copy)]
pub struct TrackOptions {
    /// Track only branches with `|λ(0)| ≤ window`.
    pub window: Option<f64>,
    pub overlap: f64,
    pub max_bisections: usize,
}

impl Default for TrackOptions {
    fn default() -> Self {
        Self {
            window: None,
            overlap: tol::BRANCH_OVERLAP,
            max_bisections: 8,
        }
    }
}

fn clusters(vals: &[f64]) -> Vec<Vec<usize>> {
    let mut order: Vec<usize> = (0..vals.len()).collect();
    order.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
    let mut out: Vec<Vec<usize>> = Vec::new();
    for i in order {
        let v = vals[i];
        let tol = 1e-9 * (1.0 + v.abs());
        match out.last_mut() {
            Some(last) if (v - vals[*last.last().expect("nonempty")]).abs() <= tol => last.push(i),
            _ => out.push(vec![i]),
        }
    }
    out
}

/// Rotates each degenerate cluster of `vecs` to diagonalise the compression
/// of `h`, which adapts it to the direction in which the cluster splits.
fn adapt_clusters(vals: &[f64], vecs: &mut CMat, h: &CMat) {
    for cl in clusters(vals).into_iter().filter(|c| c.len() > 1) {
        let vc = vecs.select_columns(&cl);
        let g = hermitize(&(vc.adjoint() * h * &vc));
        let off = (0..g.nrows())
            .flat_map(|i| (0..g.ncols()).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| g[(i, j)].norm())
            .fold(0.0, f64::max);
        if off <= 1e-12 * (1.0 + crate::linalg::max_abs(&g)) {
            // already adapted; rotating would only permute branches
            continue;
        }
        let (_, w) = hermitian_eigh(&g);
        let rotated = &vc * w;
        for (j, &col) in cl.iter().enumerate() {
            vecs.set_column(col, &rotated.column(j));
        }
    }
}

/// Unitary polar factor of a square matrix.
fn polar(m: &CMat) -> CMat {
    let svd = m.clone().svd(true, true);
    svd.u.expect("u requested") * svd.v_t.expect("v requested")
}

/// Rotates each degenerate cluster of `vecs` so that it aligns with `targets`.
fn align_clusters(vals: &[f64], vecs: &mut CMat, targets: &CMat) {
    for cl in clusters(vals).into_iter().filter(|c| c.len() > 1) {
        let d = cl.len();
        let vc = vecs.select_columns(&cl);
        let mproj = vc.adjoint() * targets;
        let mut order: Vec<usize> = (0..targets.ncols()).collect();
        order.sort_by(|&a, &b| mproj.column(b).norm().total_cmp(&mproj.column(a).norm()));
        let pick: Vec<usize> = order.into_iter().take(d).collect();
        if pick.len() < d {
            continue;
        }
        let md = mproj.select_columns(&pick);
        let rotated = &vc * polar(&md);
        for (k, &col) in cl.iter().enumerate() {
            vecs.set_column(col, &rotated.column(k));
        }
    }
}

struct Step {
    values: Vec<f64>,
    vectors: CMat,
    min_overlap: f64,
}

fn match_step(
    family: &AffineFamily,
    sector: usize,
    prev_vals: &[f64],
    prev: &CMat,
    t: f64,
    threshold: f64,
) -> std::result::Result<Step, f64> {
    let h = family.sector_at(sector, t);
    let (vals, mut vecs) = hermitian_eigh(&h);
    let mut prev = prev.clone();
    adapt_clusters(prev_vals, &mut prev, &h);
    align_clusters(&vals, &mut vecs, &prev);
    let ov = (prev.adjoint() * &vecs).map(|z| z.norm_sqr());
    let r = prev.ncols();
    let mut taken_row = vec![false; r];
    let mut taken_col = vec![false; vecs.ncols()];
    let mut assign = vec![0usize; r];
    let mut worst = 1.0f64;
    for _ in 0..r {
        let mut best = (0, 0, -1.0);
        for i in (0..r).filter(|&i| !taken_row[i]) {
            for j in (0..vecs.ncols()).filter(|&j| !taken_col[j]) {
                if ov[(i, j)] > best.2 {
                    best = (i, j, ov[(i, j)]);
                }
            }
        }
        let (i, j, o) = best;
        taken_row[i] = true;
        taken_col[j] = true;
        assign[i] = j;
        worst = worst.min(o);
    }
    if worst < threshold {
        return Err(worst);
    }
    Ok(Step {
        values: assign.iter().map(|&j| vals[j]).collect(),
        vectors: vecs.select_columns(&assign),
        min_overlap: worst,
    })
}

fn advance(
    family: &AffineFamily,
    sector: usize,
    from: (f64, &[f64], &CMat),
    to: f64,
    opts: &TrackOptions,
    depth: usize,
) -> Result<Step> {
    let (t0, vals0, vecs0) = from;
    match match_step(family, sector, vals0, vecs0, to, opts.overlap) {
        Ok(s) => Ok(s),
        Err(overlap) if depth >= opts.max_bisections => Err(Error::BranchMatching { t: to, overlap }),
        Err(_) => {
            let mid = 0.5 * (t0 + to);
            let a = advance(family, sector, from, mid, opts, depth + 1)?;
            let b = advance(family, sector, (mid, &a.values, &a.vectors), to, opts, depth + 1)?;
            Ok(Step {
                min_overlap: a.min_overlap.min(b.min_overlap),
                ..b
            })
        }
    }
}

fn derivative_at_zero(t: &[f64], l: &[f64]) -> Option<f64> {
    let at = |v: f64| t.iter().position(|&s| (s - v).abs() <= 1e-15 * (1.0 + v.abs())).map(|i| l[i]);
    let h = t.iter().copied().filter(|&s| s > 0.0).fold(f64::INFINITY, f64::min);
    if !h.is_finite() {
        return None;
    }
    let (p1, m1) = (at(h)?, at(-h)?);
    match (at(2.0 * h), at(-2.0 * h)) {
        (Some(p2), Some(m2)) => Some((8.0 * (p1 - m1) - (p2 - m2)) / (12.0 * h)),
        _ => Some((p1 - m1) / (2.0 * h)),
    }
}

/// Tracks eigenvalue branches of `D(ω + tη)` across `tgrid` (which must contain 0).
pub fn branch_track(family: &AffineFamily, tgrid: &[f64], opts: TrackOptions, exec: Exec) -> Result<Vec<EigenBranch>> {
    let mut grid = tgrid.to_vec();
    grid.sort_by(f64::total_cmp);
    grid.dedup();
    let i0 = grid
        .iter()
        .position(|&t| t == 0.0)
        .ok_or_else(|| Error::Degenerate("t-grid must contain 0".into()))?;
    let per_sector = exec.map(family.sectors.len(), |s| -> Result<Vec<EigenBranch>> {
        let (vals, mut vecs) = hermitian_eigh(&family.sector_at(s, 0.0));
        // adapt degenerate clusters to the first-order perturbation
        let k = family.pert_block(s);
        adapt_clusters(&vals, &mut vecs, k);
        let selected: Vec<usize> = (0..vals.len())
            .filter(|&i| opts.window.is_none_or(|w| vals[i].abs() <= w))
            .collect();
        if selected.is_empty() {
            return Ok(Vec::new());
        }
        let simple: Vec<bool> = {
            let cl = clusters(&vals);
            selected
                .iter()
                .map(|&i| cl.iter().any(|c| c.len() == 1 && c[0] == i))
                .collect()
        };
        let v0 = vecs.select_columns(&selected);
        let l0: Vec<f64> = selected.iter().map(|&i| vals[i]).collect();
        let hf: Vec<f64> = (0..v0.ncols())
            .map(|j| (v0.column(j).adjoint() * k * v0.column(j))[(0, 0)].re)
            .collect();
        let r = selected.len();
        let mut lambda = vec![vec![0.0; grid.len()]; r];
        let mut min_ov = vec![1.0f64; r];
        for j in 0..r {
            lambda[j][i0] = l0[j];
        }
        for dir in [1isize, -1] {
            let (mut cur_t, mut cur_l, mut cur_v) = (0.0, l0.clone(), v0.clone());
            let mut i = i0 as isize + dir;
            while i >= 0 && (i as usize) < grid.len() {
                let t = grid[i as usize];
                let step = advance(family, s, (cur_t, &cur_l, &cur_v), t, &opts, 0)?;
                for j in 0..r {
                    lambda[j][i as usize] = step.values[j];
                    min_ov[j] = min_ov[j].min(step.min_overlap);
                }
                cur_t = t;
                cur_l = step.values;
                cur_v = step.vectors;
                i += dir;
            }
        }
        Ok((0..r)
            .map(|j| EigenBranch {
                id: 0,
                sector: s,
                t: grid.clone(),
                derivative: derivative_at_zero(&grid, &lambda[j]),
                lambda: lambda[j].clone(),
                min_overlap: min_ov[j],
                hellmann_feynman: hf[j],
                simple: simple[j],
            })
            .collect())
    });
    let mut out = Vec::new();
    for branches in per_sector {
        out.extend(branches?);
    }
    out.sort_by(|a, b| a.lambda[i0].total_cmp(&b.lambda[i0]).then(a.sector.cmp(&b.sector)));
    for (id, b) in out.iter_mut().enumerate() {
        b.id = id;
    }
    Ok(out)
}

/// Summary verdict for a finite sample of perturbation directions.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Verdict {
    NotDecoupling,
    DecouplingConsistent,
    Vacuous,
}

#[derive(Debug, Clone, Serialize)]
pub struct DecouplingReport {
    pub kernel_dim: usize,
    /// `max |λ'(0)|` over kernel branches for each sample.
    pub max_splitting: Vec<f64>,
    pub splittings: Vec<Vec<f64>>,
    pub verdict: Verdict,
    /// Largest `|⟨K_ηΨ, Ψ⟩ + 2∫⟨η, J(Ψ)⟩|` over kernel basis vectors.
    pub pairing_residual: f64,
}

/// Decoupling verdict of `ω` against the sampled directions `etas`.
pub fn decoupling_test(
    omega: &FourierConnection,
    etas: &[FourierConnection],
    trunc: &Truncation,
    module: &CliffordModule,
    rep: &GaugeRep,
    tol: f64,
    exec: Exec,
) -> Result<DecouplingReport> {
    if etas.is_empty() {
        return Err(Error::Degenerate("no perturbation directions".into()));
    }
    let mut splittings = Vec::new();
    let mut pairing_residual: f64 = 0.0;
    let mut kernel_dim = 0;
    for eta in etas {
        let family = AffineFamily::new(omega, eta, trunc, module, rep)?;
        let sp = first_order_splitting(&family, tol::KERNEL_RELATIVE, exec);
        kernel_dim = sp.kernel.dim;
        for (s, v) in &sp.kernel_basis {
            for j in 0..v.ncols() {
                let col = v.column(j).into_owned();
                let lhs = (col.adjoint() * family.pert_block(*s) * &col)[(0, 0)].re;
                let psi = family.base.sector_to_modes(&family.sectors[*s], &col);
                let rhs = -2.0 * current_pairing(eta, &psi, trunc, module, rep)?;
                pairing_residual = pairing_residual.max((lhs - rhs).abs());
            }
        }
        splittings.push(sp.eigenvalues);
    }
    let max_splitting: Vec<f64> = splittings
        .iter()
        .map(|v| v.iter().map(|x| x.abs()).fold(0.0, f64::max))
        .collect();
    let verdict = if kernel_dim == 0 {
        Verdict::Vacuous
    } else if max_splitting.iter().any(|&v| v > tol) {
        Verdict::NotDecoupling
    } else {
        Verdict::DecouplingConsistent
    };
    Ok(DecouplingReport {
        kernel_dim,
        max_splitting,
        splittings,
        verdict,
        pairing_residual,
    })
}

/// `Ψ(x)` for a mode-space spinor.
pub fn eval_modes(psi: &ModeVec, x: &[f64], trunc: &Truncation) -> TwistedSpinor {
    let mut iter = psi.values();
    let first = iter.next().expect("nonempty mode vector");
    let mut out = TwistedSpinor::zeros(first.nrows(), first.ncols());
    let norm = trunc.length.powf(-(x.len() as f64) / 2.0);
    for (p, v) in psi {
        let ph: f64 = trunc.momentum(p).iter().zip(x).map(|(q, y)| q * y).sum();
        out += v * (c(ph.cos(), ph.sin()) * norm);
    }
    out
}

/// `∫_T ⟨η, J(Ψ)⟩` by the trapezoid rule on a grid that integrates the
/// band-limited integrand exactly.
pub fn current_pairing(
    eta: &FourierConnection,
    psi: &ModeVec,
    trunc: &Truncation,
    module: &CliffordModule,
    rep: &GaugeRep,
) -> Result<f64> {
    let m = module.dim();
    let kpsi = psi
        .keys()
        .map(|p| p.iter().map(|v| v.abs()).max().unwrap_or(0))
        .max()
        .unwrap_or(0);
    let g = (2 * kpsi + eta.max_mode() + 1) as usize;
    let h = trunc.length / g as f64;
    let w = h.powi(m as i32);
    let total = g.pow(m as u32);
    let mut sum = 0.0;
    for idx in 0..total {
        let mut rem = idx;
        let x: Vec<f64> = (0..m)
            .map(|_| {
                let v = rem % g;
                rem /= g;
                v as f64 * h
            })
            .collect();
        let j = dirac_current(&eval_modes(psi, &x, trunc), module, rep)?;
        sum += w * eta_dot_current(&eta.eval(&x, trunc.length), &j);
    }
    Ok(sum)
}

fn mv_add(a: &mut ModeVec, p: Mode, v: TwistedSpinor) {
    match a.get_mut(&p) {
        Some(e) => *e += v,
        None => {
            a.insert(p, v);
        }
    }
}

fn mv_partial(v: &ModeVec, k: usize, trunc: &Truncation) -> ModeVec {
    v.iter()
        .map(|(p, psi)| (p.clone(), psi * (I * trunc.momentum(p)[k])))
        .collect()
}

/// Multiplication by `spin ⊗ R(x)` with `R(x) = Σ_p R_p e^{2πi p·x/L}`.
fn mv_mult(v: &ModeVec, spin: &CMat, field: &BTreeMap<Mode, CMat>) -> ModeVec {
    let mut out = ModeVec::new();
    for (n, psi) in v {
        for (p, r) in field {
            let t: Mode = n.iter().zip(p).map(|(a, b)| a + b).collect();
            mv_add(&mut out, t, apply_tensor(spin, r, psi));
        }
    }
    out
}

fn mv_scaled_add(a: &mut ModeVec, s: Complex64, b: &ModeVec) {
    for (p, v) in b {
        mv_add(a, p.clone(), v * s);
    }
}

/// `‖D²v − Δv − ρ_*(F)·v‖_max` for a test vector, with `D²` through the
/// truncated operator and the right-hand side in untruncated mode algebra.
pub fn weitzenbock_exact_residual(
    conn: &FourierConnection,
    trunc: &Truncation,
    module: &CliffordModule,
    rep: &GaugeRep,
    test: &ModeVec,
) -> Result<f64> {
    let op = assemble(conn, trunc, module, rep)?;
    let x = op.to_dense(test)?;
    let d2 = op.from_dense(&op.apply_dense(&op.apply_dense(&x)));

    let m = module.dim();
    let endo = conn.endo_coeffs(rep);
    let n = rep.dim();
    let field_k = |k: usize| -> BTreeMap<Mode, CMat> { endo.iter().map(|(p, r)| (p.clone(), r[k].clone())).collect() };
    let id_s = CMat::identity(module.spin_dim(), module.spin_dim());
    let nabla = |k: usize, v: &ModeVec| -> ModeVec {
        let mut out = mv_partial(v, k, trunc);
        mv_scaled_add(&mut out, c(1.0, 0.0), &mv_mult(v, &id_s, &field_k(k)));
        out
    };
    let mut rhs = ModeVec::new();
    for k in 0..m {
        let nn = nabla(k, &nabla(k, test));
        mv_scaled_add(&mut rhs, c(-1.0, 0.0), &nn);
    }
    // F_ij = ∂_i A_j − ∂_j A_i + [A_i, A_j] in Fourier coefficients
    for i in 0..m {
        for j in (i + 1)..m {
            let mut f: BTreeMap<Mode, CMat> = BTreeMap::new();
            let mut add = |p: Mode, v: CMat| match f.get_mut(&p) {
                Some(e) => *e += v,
                None => {
                    f.insert(p, v);
                }
            };
            for (p, r) in &endo {
                let two_pi = 2.0 * std::f64::consts::PI / trunc.length;
                let (pi, pj) = (p[i] as f64 * two_pi, p[j] as f64 * two_pi);
                add(p.clone(), &r[j] * (I * pi) - &r[i] * (I * pj));
                for (q, s) in &endo {
                    let t: Mode = p.iter().zip(q).map(|(a, b)| a + b).collect();
                    add(t, &r[i] * &s[j] - &s[j] * &r[i]);
                }
            }
            let spin = module.gamma(i) * module.gamma(j);
            mv_scaled_add(&mut rhs, c(1.0, 0.0), &mv_mult(test, &spin, &f));
        }
    }
    let mut worst: f64 = 0.0;
    let zero = TwistedSpinor::zeros(module.spin_dim(), n);
    let keys: std::collections::BTreeSet<&Mode> = d2.keys().chain(rhs.keys()).collect();
    for p in keys {
        let a = d2.get(p).unwrap_or(&zero);
        let b = rhs.get(p).unwrap_or(&zero);
        worst = worst.max((a - b).norm());
    }
    Ok(worst)
}

/// A random test vector supported on `|n|_∞ ≤ k_test`.
pub fn random_test_vector<R: Rng + ?Sized>(
    rng: &mut R,
    m: usize,
    k_test: i64,
    module: &CliffordModule,
    rep: &GaugeRep,
) -> ModeVec {
    cube(m, k_test)
        .into_iter()
        .map(|p| (p, crate::linalg::random_cmat(rng, module.spin_dim(), rep.dim())))
        .collect()
}
