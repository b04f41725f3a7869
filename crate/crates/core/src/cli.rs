//! Batch driver behind the `spinlab` binary.
//!
//! Every subcommand prints one summary JSON document on stdout. With `--out DIR`
//! the summary is also written to `DIR/<command>.json`, together with CSV or
//! JSON-lines record files. Exit codes: 0 pass, 1 property violation, 2 usage
//! error.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use clap::{Parser, Subcommand};
use num_complex::Complex64;
use num_traits::ToPrimitive;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use serde_json::{json, Value};

use crate::clifford::{chiral_project, conjugation_factor, conjugation_sum, conjugation_sum_matrix, CliffordModule};
use crate::construct::{build_solution, perturbed_spinor, sample_points, surviving_chirality, Bpst, TwistorSpec};
use crate::current::{current_min_on_sphere, dim3_bilinears, dirac_current, pairing_residual};
use crate::error::Error;
use crate::exterior::{hodge_star, Form, LieVec};
use crate::fieldcalc::{divergence_residual, stress_field, stress_tensors, FdScheme};
use crate::gauge::{GaugeAlgebra, GaugeRep};
use crate::index::{
    ad_st_relation, ahat_hypersurface, bpst_index_check, chern_weil_ch, dual_curvature, exact_string, p_poly,
    positive_roots, su2_index, CharNumber,
};
use crate::linalg::{c, random_anti_hermitian, random_cmat, random_cvec, standard_normal, CMat, I};
use crate::par::{set_threads, Exec};
use crate::spectral::{
    assemble, branch_track, chirality_block_defect, decoupling_test, first_order_splitting, random_test_vector,
    weitzenbock_exact_residual, AffineFamily, EigenBranch, FourierConnection, TrackOptions, Truncation,
    TruncatedDirac,
};

/// Process exit status.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Pass = 0,
    Violation = 1,
    Usage = 2,
}

#[derive(Debug, Parser)]
#[command(name = "spinlab", version, about = "Verification laboratory for Dirac-Yang-Mills pairs")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
    /// RNG seed (overrides `seed` in the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Output directory for the summary JSON and record files.
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Worker thread cap; 1 runs every sweep sequentially.
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Plain `key = value` config file (`#` starts a comment).
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Override a config key, e.g. `--set cutoff=2` (repeatable).
    #[arg(long = "set", global = true, value_name = "KEY=VALUE")]
    pub set: Vec<String>,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Algebraic identity suites (Clifford, exterior, gauge, current, index).
    Identities,
    /// Exact characteristic-number formulas.
    Index {
        #[command(subcommand)]
        formula: IndexFormula,
    },
    /// Spectrum and kernel of a truncated twisted Dirac operator on a torus.
    Spectrum,
    /// Eigenvalue branches along an affine perturbation and the decoupling verdict.
    Perturb,
    /// Minimum of the Dirac current on the unit sphere of twisted spinors.
    CurrentScan,
    /// Residual ladder and instanton number of the BPST construction.
    VerifyBpst {
        /// Add a noise field of this amplitude to the spinor (anti-test).
        #[arg(long)]
        noise: Option<f64>,
        /// Use only the coarsest step size (no order estimate).
        #[arg(long)]
        coarse: bool,
    },
    /// Reduced-size run of every check.
    Selftest,
}

#[derive(Debug, Subcommand)]
pub enum IndexFormula {
    /// Â-genus of a degree-d hypersurface in CP^{2n+1}.
    AhatHypersurface {
        #[arg(long)]
        n: u64,
        #[arg(long)]
        d: u64,
    },
    /// The SU(2) polynomial p_j(ℓ).
    PPoly {
        #[arg(long)]
        j: u32,
        #[arg(long)]
        l: u64,
    },
    /// Index of the adjoint bundle from the standard one.
    AdSt {
        #[arg(long = "N")]
        n: u64,
        #[arg(long = "indE", allow_hyphen_values = true)]
        ind_e: String,
        #[arg(long = "indPartial", allow_hyphen_values = true)]
        ind_partial: String,
    },
    /// Index of Sym^ℓ twisting for a CharVector `a0,a1,...` (entries `p` or `p/q`).
    Su2Index {
        #[arg(long, allow_hyphen_values = true)]
        a: String,
        #[arg(long)]
        l: u64,
    },
    /// Positive integer roots of the SU(2) index polynomial.
    Roots {
        #[arg(long, allow_hyphen_values = true)]
        a: String,
    },
}

/// Merged config file and command-line overrides.
#[derive(Debug, Clone, Default)]
pub struct RunConfig {
    pub seed: u64,
    pub out: Option<PathBuf>,
    values: BTreeMap<String, String>,
}

#[derive(Debug)]
struct UsageError(String);

impl From<Error> for UsageError {
    fn from(e: Error) -> Self {
        UsageError(e.to_string())
    }
}

type CmdResult = std::result::Result<Report, UsageError>;

/// Summary document plus extra files to write under `--out`.
struct Report {
    summary: Value,
    pass: bool,
    files: Vec<(String, String)>,
}

const KNOWN_KEYS: &[&str] = &[
    "bpst.scale",
    "cutoff",
    "decoupling.samples",
    "eta.amplitude",
    "eta.axis",
    "eta.component",
    "eta.kind",
    "eta.kmax",
    "eta.value",
    "fd.ladder",
    "fd.order",
    "length",
    "m",
    "min_order",
    "noise",
    "omega.amplitude",
    "omega.kmax",
    "out",
    "points.core",
    "points.far",
    "quad.ladder",
    "rep",
    "reps",
    "restarts",
    "samples",
    "seed",
    "spin",
    "t.max",
    "t.steps",
    "threads",
    "threshold",
    "tol",
    "tol.hellmann_feynman",
    "tol.splitting",
    "window",
];

impl RunConfig {
    pub fn parse_str(text: &str) -> std::result::Result<BTreeMap<String, String>, String> {
        let mut out = BTreeMap::new();
        for (no, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (k, v) = line
                .split_once('=')
                .ok_or_else(|| format!("line {}: expected key = value", no + 1))?;
            out.insert(k.trim().to_string(), v.trim().to_string());
        }
        Ok(out)
    }

    fn from_cli(cli: &Cli) -> std::result::Result<Self, UsageError> {
        let mut values = match &cli.config {
            Some(p) => {
                let text = fs::read_to_string(p).map_err(|e| UsageError(format!("{}: {e}", p.display())))?;
                Self::parse_str(&text).map_err(|e| UsageError(format!("{}: {e}", p.display())))?
            }
            None => BTreeMap::new(),
        };
        for s in &cli.set {
            let (k, v) = s
                .split_once('=')
                .ok_or_else(|| UsageError(format!("--set expects KEY=VALUE, got {s:?}")))?;
            values.insert(k.trim().to_string(), v.trim().to_string());
        }
        if let Some(k) = values.keys().find(|k| !KNOWN_KEYS.contains(&k.as_str())) {
            return Err(UsageError(format!("unknown config key {k:?}")));
        }
        let mut cfg = Self {
            seed: 0,
            out: cli.out.clone(),
            values,
        };
        cfg.seed = match cli.seed {
            Some(s) => s,
            None => cfg.get("seed", 0u64)?,
        };
        if cfg.out.is_none() {
            cfg.out = cfg.values.get("out").map(PathBuf::from);
        }
        Ok(cfg)
    }

    fn get<T: FromStr>(&self, key: &str, default: T) -> std::result::Result<T, UsageError> {
        match self.values.get(key) {
            Some(v) => v
                .parse()
                .map_err(|_| UsageError(format!("config key {key}: cannot parse {v:?}"))),
            None => Ok(default),
        }
    }

    fn get_list<T: FromStr>(&self, key: &str, default: &str) -> std::result::Result<Vec<T>, UsageError> {
        let raw = self.values.get(key).map(String::as_str).unwrap_or(default);
        raw.split(',')
            .map(|s| s.trim())
            .filter(|s| !s.is_empty())
            .map(|s| {
                s.parse()
                    .map_err(|_| UsageError(format!("config key {key}: cannot parse {s:?}")))
            })
            .collect()
    }

    fn str(&self, key: &str, default: &str) -> String {
        self.values.get(key).cloned().unwrap_or_else(|| default.to_string())
    }
}

/// Entry point used by the binary; returns the process exit code.
pub fn run<I, T>(args: I) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { Outcome::Usage as i32 } else { 0 };
        }
    };
    let (code, text) = execute(&cli);
    if let Some(t) = text {
        // a closed pipe (e.g. `| head`) is not an error of the run
        let _ = writeln!(std::io::stdout(), "{t}");
    }
    code as i32
}

/// Runs a parsed command; returns the outcome and the summary JSON text.
pub fn execute(cli: &Cli) -> (Outcome, Option<String>) {
    let cfg = match RunConfig::from_cli(cli) {
        Ok(c) => c,
        Err(UsageError(msg)) => {
            eprintln!("spinlab: {msg}");
            return (Outcome::Usage, None);
        }
    };
    let exec = match cli.threads.or(cfg.get_opt_threads()) {
        Some(0) => {
            eprintln!("spinlab: --threads must be at least 1");
            return (Outcome::Usage, None);
        }
        Some(1) => Exec::Sequential,
        Some(n) => {
            set_threads(n);
            Exec::Parallel
        }
        None => Exec::Parallel,
    };
    let (name, result) = match &cli.command {
        Command::Identities => ("identities", cmd_identities(&cfg)),
        Command::Index { formula } => ("index", cmd_index(formula)),
        Command::Spectrum => ("spectrum", cmd_spectrum(&cfg, exec)),
        Command::Perturb => ("perturb", cmd_perturb(&cfg, exec)),
        Command::CurrentScan => ("current-scan", cmd_current_scan(&cfg, exec)),
        Command::VerifyBpst { noise, coarse } => ("verify-bpst", cmd_verify_bpst(&cfg, *noise, *coarse, exec)),
        Command::Selftest => ("selftest", cmd_selftest(&cfg, exec)),
    };
    let report = match result {
        Ok(r) => r,
        Err(UsageError(msg)) => {
            eprintln!("spinlab {name}: {msg}");
            return (Outcome::Usage, None);
        }
    };
    let text = serde_json::to_string_pretty(&report.summary).expect("JSON values serialise");
    if let Some(dir) = &cfg.out {
        if let Err(e) = write_outputs(dir, name, &text, &report.files) {
            eprintln!("spinlab {name}: cannot write to {}: {e}", dir.display());
            return (Outcome::Usage, Some(text));
        }
    }
    let code = if report.pass { Outcome::Pass } else { Outcome::Violation };
    (code, Some(text))
}

impl RunConfig {
    fn get_opt_threads(&self) -> Option<usize> {
        self.values.get("threads").and_then(|v| v.parse().ok())
    }
}

fn write_outputs(dir: &Path, name: &str, summary: &str, files: &[(String, String)]) -> std::io::Result<()> {
    fs::create_dir_all(dir)?;
    fs::write(dir.join(format!("{name}.json")), format!("{summary}\n"))?;
    for (file, body) in files {
        fs::write(dir.join(file), body)?;
    }
    Ok(())
}

// ---------------------------------------------------------------- identities

#[derive(Debug, Clone, Serialize)]
struct Suite {
    name: &'static str,
    max_residual: f64,
    tol: f64,
    cases: usize,
    pass: bool,
}

impl Suite {
    fn new(name: &'static str, max_residual: f64, tol: f64, cases: usize) -> Self {
        Self {
            name,
            max_residual,
            tol,
            cases,
            pass: max_residual <= tol,
        }
    }
}

fn random_form(rng: &mut ChaCha8Rng, m: usize, r: usize) -> Form<f64> {
    Form::from_fn(m, r, |_| standard_normal(rng)).expect("valid degree")
}

fn random_lie_one_form(rng: &mut ChaCha8Rng, m: usize, dim: usize) -> Form<LieVec> {
    Form::from_fn(m, 1, |_| LieVec::from_fn(dim, |_, _| standard_normal(rng))).expect("degree 1")
}

fn rep_catalog() -> Vec<(&'static str, GaugeRep)> {
    let su2 = GaugeAlgebra::su(2).expect("su(2)");
    let u1 = GaugeAlgebra::u(1).expect("u(1)");
    vec![
        ("su2-standard", GaugeRep::standard(&su2)),
        ("su2-adjoint", GaugeRep::adjoint(&su2)),
        ("u1-standard", GaugeRep::standard(&u1)),
    ]
}

/// The algebraic suites; `tol_override` replaces every suite tolerance.
fn identity_suites(seed: u64, samples: usize, tol_override: Option<f64>) -> Vec<Suite> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let tol = |t: f64| tol_override.unwrap_or(t);
    let mut suites = Vec::new();

    let (mut worst, mut n) = (0.0f64, 0);
    for m in 2..=8 {
        worst = worst.max(CliffordModule::new(m).expect("m ≥ 2").clifford_residual());
        n += 1;
    }
    suites.push(Suite::new("clifford-relation", worst, tol(1e-13), n));

    let (mut worst, mut n) = (0.0f64, 0);
    for m in 1..=6 {
        // matrix modules start at m = 2; the blade algebra covers m = 1
        let module = CliffordModule::new(m).ok();
        for r in 0..=m {
            for _ in 0..samples {
                let theta = random_form(&mut rng, m, r);
                let f = conjugation_factor(r, m);
                let alg = conjugation_sum(&theta).expect("same degree");
                let mut d = alg.coeffs().iter().zip(theta.coeffs()).map(|(a, b)| (a - f * b).abs()).fold(0.0, f64::max);
                if let Some(module) = &module {
                    let mat = conjugation_sum_matrix(&theta, module).expect("degree ≤ m");
                    let expect = module.form_endo(&theta).expect("degree ≤ m") * c(f, 0.0);
                    d = d.max(crate::linalg::max_abs(&(mat - expect)));
                }
                worst = worst.max(d);
                n += 1;
            }
        }
    }
    suites.push(Suite::new("conjugation-identity", worst, tol(1e-12), n));

    let (mut worst, mut n) = (0.0f64, 0);
    for m in [2, 4, 6] {
        let module = CliffordModule::new(m).expect("m ≥ 2");
        for (_, rep) in rep_catalog() {
            for k in 0..samples {
                let raw = random_cmat(&mut rng, module.spin_dim(), rep.dim());
                let psi = chiral_project(&raw, k % 2 == 0, &module).expect("even m");
                worst = worst.max(dirac_current(&psi, &module, &rep).expect("shapes").norm());
                n += 1;
            }
        }
    }
    suites.push(Suite::new("chiral-current-vanishing", worst, tol(1e-12), n));

    let (mut worst, mut n) = (0.0f64, 0);
    for m in 2..=6 {
        let module = CliffordModule::new(m).expect("m ≥ 2");
        for (_, rep) in rep_catalog() {
            for _ in 0..samples {
                let psi = random_cmat(&mut rng, module.spin_dim(), rep.dim());
                let eta = random_lie_one_form(&mut rng, m, rep.algebra().dim());
                worst = worst.max(pairing_residual(&psi, &eta, &module, &rep).expect("shapes"));
                n += 1;
            }
        }
    }
    suites.push(Suite::new("pairing-identity", worst, tol(1e-12), n));

    let mut worst = 0.0f64;
    let mut reps: Vec<GaugeRep> = rep_catalog().into_iter().map(|(_, r)| r).collect();
    reps.push(GaugeRep::standard(&GaugeAlgebra::su(3).expect("su(3)")));
    reps.push(GaugeRep::adjoint(&GaugeAlgebra::u(2).expect("u(2)")));
    reps.push(GaugeRep::sym_su2(3).expect("Sym^3"));
    for rep in &reps {
        worst = worst.max(rep.homomorphism_residual()).max(rep.anti_hermiticity_residual());
    }
    suites.push(Suite::new("representation-homomorphism", worst, tol(1e-12), reps.len()));

    let (mut worst, mut n) = (0.0f64, 0);
    for m in 1..=6 {
        for k in 0..=m {
            for _ in 0..samples.min(10) {
                let a = random_form(&mut rng, m, k);
                let s = if (k * (m - k)) % 2 == 0 { 1.0 } else { -1.0 };
                let ss = hodge_star(&hodge_star(&a));
                worst = worst.max(ss.coeffs().iter().zip(a.coeffs()).map(|(x, y)| (x - s * y).abs()).fold(0.0, f64::max));
                n += 1;
            }
        }
    }
    suites.push(Suite::new("hodge-double-star", worst, tol(1e-12), n));

    let (mut worst, mut n) = (0.0f64, 0);
    for m in [2, 4] {
        for _ in 0..samples.min(20) {
            let rank = 3;
            let f = Form::from_fn(m, 2, |_| random_anti_hermitian(&mut rng, rank)).expect("degree 2");
            for k in 1..=m / 2 {
                let a = chern_weil_ch(&f, k).expect("anti-Hermitian");
                let b = chern_weil_ch(&dual_curvature(&f), k).expect("anti-Hermitian");
                let s = if k % 2 == 0 { 1.0 } else { -1.0 };
                let scale = a.coeffs().iter().map(|v| v.abs()).fold(1.0, f64::max);
                worst = worst.max(
                    b.coeffs().iter().zip(a.coeffs()).map(|(x, y)| (x - s * y).abs()).fold(0.0, f64::max) / scale,
                );
                n += 1;
            }
        }
    }
    suites.push(Suite::new("ch-parity", worst, tol(1e-12), n));

    let su2 = GaugeAlgebra::su(2).expect("su(2)");
    let st = GaugeRep::standard(&su2);
    let cl3 = CliffordModule::new(3).expect("m = 3");
    let a = FourierConnection::random(&mut rng, 3, 3, 1, 0.5);
    let v = random_test_vector(&mut rng, 3, 1, &cl3, &st);
    let r = weitzenbock_exact_residual(&a, &Truncation::periodic(3, 3), &cl3, &st, &v).expect("valid truncation");
    suites.push(Suite::new("weitzenbock-torus", r, tol(1e-10), 1));
    suites
}

fn cmd_identities(cfg: &RunConfig) -> CmdResult {
    let samples: usize = cfg.get("samples", 100)?;
    let tol: Option<f64> = cfg.values.get("tol").map(|_| cfg.get("tol", 0.0)).transpose()?;
    let suites = identity_suites(cfg.seed, samples, tol);
    let pass = suites.iter().all(|s| s.pass);
    Ok(Report {
        summary: json!({ "command": "identities", "seed": cfg.seed, "samples": samples, "pass": pass, "suites": suites }),
        pass,
        files: vec![],
    })
}

// --------------------------------------------------------------------- index

fn parse_rational(s: &str) -> std::result::Result<CharNumber, UsageError> {
    s.trim()
        .parse::<CharNumber>()
        .map_err(|_| UsageError(format!("not a rational number: {s:?}")))
}

fn parse_char_vector(s: &str) -> std::result::Result<Vec<CharNumber>, UsageError> {
    s.split(',').map(parse_rational).collect()
}

fn exact_json(formula: &str, inputs: Value, v: &CharNumber) -> Value {
    json!({
        "formula": formula,
        "inputs": inputs,
        "exact_value": exact_string(v),
        "float_value": v.to_f64(),
    })
}

fn cmd_index(formula: &IndexFormula) -> CmdResult {
    let summary = match formula {
        IndexFormula::AhatHypersurface { n, d } => {
            exact_json("ahat-hypersurface", json!({"n": n, "d": d}), &ahat_hypersurface(*n, *d)?)
        }
        IndexFormula::PPoly { j, l } => exact_json("p-poly", json!({"j": j, "l": l}), &p_poly(*j, *l)),
        IndexFormula::AdSt { n, ind_e, ind_partial } => {
            let (e, p) = (parse_rational(ind_e)?, parse_rational(ind_partial)?);
            let inputs = json!({"N": n, "indE": exact_string(&e), "indPartial": exact_string(&p)});
            exact_json("ad-st", inputs, &ad_st_relation(*n, &e, &p)?)
        }
        IndexFormula::Su2Index { a, l } => {
            let av = parse_char_vector(a)?;
            let inputs = json!({"a": av.iter().map(exact_string).collect::<Vec<_>>(), "l": l});
            exact_json("su2-index", inputs, &su2_index(&av, *l))
        }
        IndexFormula::Roots { a } => {
            let av = parse_char_vector(a)?;
            let rep = positive_roots(&av)?;
            json!({
                "formula": "roots",
                "inputs": {"a": av.iter().map(exact_string).collect::<Vec<_>>()},
                "roots": rep.roots,
                "degree": rep.degree,
                "bound": 2 * av.len() - 1,
                "within_bound": rep.within_bound,
                "scanned_to": rep.scanned_to,
                "truncated": rep.truncated,
            })
        }
    };
    let pass = summary.get("within_bound").and_then(Value::as_bool).unwrap_or(true);
    Ok(Report {
        summary,
        pass,
        files: vec![],
    })
}

// ------------------------------------------------------------------ spectral

struct SpectralSetup {
    module: CliffordModule,
    rep: GaugeRep,
    rep_name: String,
    trunc: Truncation,
    omega: FourierConnection,
}

fn rep_by_name(name: &str) -> std::result::Result<GaugeRep, UsageError> {
    let su2 = GaugeAlgebra::su(2)?;
    Ok(match name {
        "u1" => GaugeRep::standard(&GaugeAlgebra::u(1)?),
        "u2" => GaugeRep::standard(&GaugeAlgebra::u(2)?),
        "su2" => GaugeRep::standard(&su2),
        "su2-adjoint" => GaugeRep::adjoint(&su2),
        "su3" => GaugeRep::standard(&GaugeAlgebra::su(3)?),
        other => return Err(UsageError(format!("unknown representation {other:?} (u1, u2, su2, su2-adjoint, su3)"))),
    })
}

fn spectral_setup(cfg: &RunConfig) -> std::result::Result<SpectralSetup, UsageError> {
    let m: usize = cfg.get("m", 3)?;
    let rep_name = cfg.str("rep", "u1");
    let rep = rep_by_name(&rep_name)?;
    let module = CliffordModule::new(m)?;
    let cutoff: i64 = cfg.get("cutoff", if m >= 4 { 1 } else { 4 })?;
    let length: f64 = cfg.get("length", 1.0)?;
    let mut trunc = match cfg.str("spin", "periodic").as_str() {
        "periodic" => Truncation::periodic(m, cutoff),
        "antiperiodic" => Truncation::antiperiodic(m, cutoff),
        other => return Err(UsageError(format!("spin must be periodic or antiperiodic, got {other:?}"))),
    };
    if !(length > 0.0) || cutoff < 0 {
        return Err(UsageError("length must be positive and cutoff non-negative".into()));
    }
    trunc.length = length;
    let amp: f64 = cfg.get("omega.amplitude", 0.0)?;
    let kmax: i64 = cfg.get("omega.kmax", 0)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let omega = if amp == 0.0 {
        FourierConnection::zero(m, rep.algebra().dim())
    } else {
        FourierConnection::random(&mut rng, m, rep.algebra().dim(), kmax, amp)
    };
    Ok(SpectralSetup {
        module,
        rep,
        rep_name,
        trunc,
        omega,
    })
}

#[derive(Serialize)]
struct SpectrumRow {
    index: usize,
    lambda: f64,
}

fn csv_string<T: Serialize>(rows: &[T]) -> String {
    let mut w = csv::Writer::from_writer(Vec::new());
    for r in rows {
        w.serialize(r).expect("rows serialise");
    }
    String::from_utf8(w.into_inner().expect("in-memory writer")).expect("utf-8")
}

fn cmd_spectrum(cfg: &RunConfig, exec: Exec) -> CmdResult {
    let s = spectral_setup(cfg)?;
    let op = assemble(&s.omega, &s.trunc, &s.module, &s.rep)?;
    let spec = op.spectrum(exec);
    let kernel = crate::spectral::kernel_dim(&op, crate::tol::KERNEL_RELATIVE, exec);
    let herm = op.hermiticity_defect();
    let m = s.module.dim();
    let symmetry = (m % 2 == 0).then(|| {
        let n = spec.len();
        (0..n).map(|i| (spec[i] + spec[n - 1 - i]).abs()).fold(0.0, f64::max)
    });
    let pass = herm <= 1e-12 && symmetry.is_none_or(|d| d <= 1e-10);
    let rows: Vec<SpectrumRow> = spec.iter().enumerate().map(|(index, &lambda)| SpectrumRow { index, lambda }).collect();
    let summary = json!({
        "command": "spectrum",
        "seed": cfg.seed,
        "m": m,
        "rep": s.rep_name,
        "truncation": s.trunc,
        "dim": op.dim(),
        "sectors": TruncatedDirac::sectors(&[&op]).len(),
        "hermiticity_defect": herm,
        "even_symmetry_defect": symmetry,
        "kernel_dim": kernel.dim,
        "kernel_tol": kernel.tol,
        "kernel_ambiguous": kernel.ambiguous,
        "lambda_min": spec.first(),
        "lambda_max": spec.last(),
        "pass": pass,
    });
    Ok(Report {
        summary,
        pass,
        files: vec![("spectrum.csv".into(), csv_string(&rows))],
    })
}

/// One row of the branch CSV.
#[derive(Serialize)]
pub struct BranchRow {
    pub t: f64,
    pub branch_id: usize,
    pub lambda: f64,
}

/// Branch data as CSV with columns `t,branch_id,lambda`.
pub fn branches_csv(branches: &[EigenBranch]) -> String {
    let rows: Vec<BranchRow> = branches
        .iter()
        .flat_map(|b| {
            b.t.iter().zip(&b.lambda).map(move |(&t, &lambda)| BranchRow {
                t,
                branch_id: b.id,
                lambda,
            })
        })
        .collect();
    csv_string(&rows)
}

fn eta_from_config(
    cfg: &RunConfig,
    s: &SpectralSetup,
    rng: &mut ChaCha8Rng,
) -> std::result::Result<FourierConnection, UsageError> {
    let m = s.module.dim();
    let dim = s.rep.algebra().dim();
    match cfg.str("eta.kind", "constant").as_str() {
        "constant" => {
            let axis: usize = cfg.get("eta.axis", 0)?;
            let comp: usize = cfg.get("eta.component", 0)?;
            let value: f64 = cfg.get("eta.value", 0.3)?;
            if axis >= m || comp >= dim {
                return Err(UsageError(format!("eta.axis < {m} and eta.component < {dim} required")));
            }
            // u(1): coordinate of value·i in the normalised basis
            let coords = if s.rep.algebra().n() == 1 && dim == 1 {
                s.rep.algebra().coords(&CMat::from_element(1, 1, I * value))
            } else {
                let mut v = LieVec::zeros(dim);
                v[comp] = value;
                v
            };
            let zero = LieVec::zeros(dim);
            let form = Form::from_fn(m, 1, |idx| if idx[0] == axis { coords.clone() } else { zero.clone() })?;
            Ok(FourierConnection::constant(&form)?)
        }
        "random" => {
            let kmax: i64 = cfg.get("eta.kmax", 0)?;
            let amp: f64 = cfg.get("eta.amplitude", 0.3)?;
            Ok(FourierConnection::random(rng, m, dim, kmax, amp))
        }
        other => Err(UsageError(format!("eta.kind must be constant or random, got {other:?}"))),
    }
}

fn cmd_perturb(cfg: &RunConfig, exec: Exec) -> CmdResult {
    let s = spectral_setup(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(1));
    let eta = eta_from_config(cfg, &s, &mut rng)?;
    let tmax: f64 = cfg.get("t.max", 0.2)?;
    let steps: usize = cfg.get("t.steps", 10)?;
    if steps == 0 || !(tmax > 0.0) {
        return Err(UsageError("t.steps ≥ 1 and t.max > 0 required".into()));
    }
    let grid: Vec<f64> = (-(steps as i64)..=steps as i64)
        .map(|i| tmax * i as f64 / steps as f64)
        .collect();
    let window: Option<f64> = cfg.values.get("window").map(|_| cfg.get("window", 0.0)).transpose()?;
    let hf_tol: f64 = cfg.get("tol.hellmann_feynman", 1e-6)?;
    let split_tol: f64 = cfg.get("tol.splitting", 1e-8)?;
    let n_random: usize = cfg.get("decoupling.samples", 3)?;

    let family = AffineFamily::new(&s.omega, &eta, &s.trunc, &s.module, &s.rep)?;
    let splitting = first_order_splitting(&family, crate::tol::KERNEL_RELATIVE, exec);
    let opts = TrackOptions {
        window,
        ..TrackOptions::default()
    };
    let branches = match branch_track(&family, &grid, opts, exec) {
        Ok(b) => b,
        Err(e @ Error::BranchMatching { .. }) => {
            let summary = json!({"command": "perturb", "pass": false, "error": e.to_string(),
                                 "hint": "refine the t-grid (t.steps) or reduce t.max"});
            return Ok(Report {
                summary,
                pass: false,
                files: vec![],
            });
        }
        Err(e) => return Err(e.into()),
    };
    let k_norm = family.k_norm();
    let i0 = steps;
    let weyl = branches.iter().map(|b| b.weyl_excess(k_norm)).fold(f64::NEG_INFINITY, f64::max);
    let hf = branches
        .iter()
        .filter(|b| b.simple)
        .filter_map(|b| b.derivative.map(|d| (d - b.hellmann_feynman).abs()))
        .fold(0.0, f64::max);
    let mut kernel_derivs: Vec<f64> = branches
        .iter()
        .filter(|b| b.lambda[i0].abs() <= splitting.kernel.tol)
        .filter_map(|b| b.derivative)
        .collect();
    kernel_derivs.sort_by(f64::total_cmp);
    let split_vs_branch = if kernel_derivs.len() == splitting.eigenvalues.len() {
        kernel_derivs
            .iter()
            .zip(&splitting.eigenvalues)
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max)
    } else {
        f64::INFINITY
    };
    let chirality = if s.module.dim() % 2 == 0 && splitting.kernel.dim > 0 {
        let (block, diag) = chirality_block_defect(&family, &splitting, &s.module, &s.rep)?;
        Some(json!({"same_chirality_block": block, "max_chiral_expectation": diag}))
    } else {
        None
    };
    let mut etas = vec![eta.clone()];
    for _ in 0..n_random {
        etas.push(FourierConnection::random(&mut rng, s.module.dim(), s.rep.algebra().dim(), 0, 0.3));
    }
    let dec = decoupling_test(&s.omega, &etas, &s.trunc, &s.module, &s.rep, split_tol, exec)?;

    let chir_ok = chirality
        .as_ref()
        .is_none_or(|v| v["same_chirality_block"].as_f64().is_some_and(|x| x <= 1e-10));
    let checks = json!({
        "weyl_excess": {"value": weyl, "tol": 1e-10, "pass": weyl <= 1e-10},
        "hellmann_feynman": {"value": hf, "tol": hf_tol, "pass": hf <= hf_tol},
        "splitting_vs_branch_derivatives": {"value": split_vs_branch, "tol": hf_tol, "pass": split_vs_branch <= hf_tol},
        "pairing_bridge": {"value": dec.pairing_residual, "tol": 1e-8, "pass": dec.pairing_residual <= 1e-8},
        "chirality_block": chirality,
    });
    let pass = weyl <= 1e-10 && hf <= hf_tol && split_vs_branch <= hf_tol && dec.pairing_residual <= 1e-8 && chir_ok;
    let summary = json!({
        "command": "perturb",
        "seed": cfg.seed,
        "m": s.module.dim(),
        "rep": s.rep_name,
        "truncation": s.trunc,
        "dim": family.base.dim(),
        "sectors": family.sectors.len(),
        "k_norm": k_norm,
        "kernel_dim": splitting.kernel.dim,
        "kernel_ambiguous": splitting.kernel.ambiguous,
        "splittings": splitting.eigenvalues,
        "branches": branches.len(),
        "simple_branches": branches.iter().filter(|b| b.simple).count(),
        "min_overlap": branches.iter().map(|b| b.min_overlap).fold(1.0, f64::min),
        "verdict": dec.verdict,
        "decoupling": dec,
        "checks": checks,
        "pass": pass,
    });
    Ok(Report {
        summary,
        pass,
        files: vec![("branches.csv".into(), branches_csv(&branches))],
    })
}

// -------------------------------------------------------------- current-scan

fn cmd_current_scan(cfg: &RunConfig, exec: Exec) -> CmdResult {
    let m: usize = cfg.get("m", 3)?;
    let reps: Vec<String> = cfg.get_list("reps", "su2,u1")?;
    let restarts: usize = cfg.get("restarts", 16)?;
    let threshold: f64 = cfg.get("threshold", 1e-3)?;
    let module = CliffordModule::new(m)?;
    let mut rows = Vec::new();
    let mut pass = true;
    for name in &reps {
        let rep = rep_by_name(name)?;
        let min = current_min_on_sphere(&module, &rep, restarts, cfg.seed, exec)?;
        let mut bilinear_defect = None;
        if m == 3 && rep.algebra().n() >= 2 && matches!(rep.kind(), crate::gauge::RepKind::Standard) {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
            let mut worst = 0.0f64;
            for _ in 0..20 {
                let psi = random_cmat(&mut rng, module.spin_dim(), rep.dim());
                for b in dim3_bilinears(&psi, &module, &rep)? {
                    for i in 0..9 {
                        worst = worst
                            .max((b.direct[i] - b.closed_form[i]).abs())
                            .max((b.direct[i] - b.from_current[i]).abs());
                    }
                }
            }
            bilinear_defect = Some(worst);
        }
        // the injectivity statement is a dimension-3 property
        let ok = (m != 3 || min.best > threshold) && bilinear_defect.is_none_or(|d| d <= 1e-12);
        pass &= ok;
        rows.push(json!({
            "rep": name,
            "min_current_norm": min.best,
            "per_restart": min.per_restart,
            "converged": min.converged,
            "bilinear_defect": bilinear_defect,
            "pass": ok,
        }));
    }
    Ok(Report {
        summary: json!({"command": "current-scan", "seed": cfg.seed, "m": m, "restarts": restarts,
                        "threshold": threshold, "results": rows, "pass": pass}),
        pass,
        files: vec![],
    })
}

// --------------------------------------------------------------- verify-bpst

fn cmd_verify_bpst(cfg: &RunConfig, noise: Option<f64>, coarse: bool, exec: Exec) -> CmdResult {
    let scale: f64 = cfg.get("bpst.scale", 1.0)?;
    let order: usize = cfg.get("fd.order", 4)?;
    let mut hs: Vec<f64> = cfg.get_list("fd.ladder", "2e-2,1e-2,5e-3")?;
    let n_core: usize = cfg.get("points.core", 200)?;
    let n_far: usize = cfg.get("points.far", 20)?;
    let min_order: f64 = cfg.get("min_order", order as f64 - 0.2)?;
    let quad: Vec<usize> = cfg.get_list("quad.ladder", "32,64,128")?;
    let noise = match noise {
        Some(e) => Some(e),
        None => cfg.values.get("noise").map(|_| cfg.get("noise", 0.0)).transpose()?,
    };
    if coarse {
        hs.truncate(1);
    }
    if hs.is_empty() || quad.is_empty() {
        return Err(UsageError("fd.ladder and quad.ladder must be nonempty".into()));
    }
    let bpst = Bpst::scaled(scale)?;
    let module = CliffordModule::new(4)?;
    let positive = surviving_chirality(&bpst, &module)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let spec = TwistorSpec::chiral(positive, &random_cvec(&mut rng, 4), &random_cvec(&mut rng, 4), &module)?;
    let sol = build_solution(&bpst, &spec)?;
    let psi = match noise {
        Some(e) if e != 0.0 => perturbed_spinor(&sol.psi, e),
        _ => sol.psi.clone(),
    };
    let points = sample_points(cfg.seed, n_core, n_far);

    let asd = exec
        .map_slice(&points, |x| {
            let f = bpst.curvature(x);
            let s = hodge_star(&f);
            s.coeffs().iter().zip(f.coeffs()).map(|(a, b)| (a + b).norm()).fold(0.0, f64::max)
        })
        .into_iter()
        .fold(0.0, f64::max);
    let report = crate::construct::verify_solution(
        &sol.connection,
        &sol.curvature,
        &psi,
        &points,
        &hs,
        order,
        &sol.module,
        &sol.rep,
        exec,
    )?;
    let instanton = bpst_index_check(scale, &quad, exec)?;

    let mut warnings = Vec::new();
    if hs.len() < 2 {
        warnings.push("single step size: order estimate unavailable");
    }
    let orders_ok = hs.len() < 2 || report.passes(min_order, 1e-12);
    let dirac_floor = report.levels.iter().map(|l| l.dirac).fold(f64::INFINITY, f64::min);
    let anti = noise.is_some_and(|e| e != 0.0);
    let pass = asd <= 1e-10
        && report.max_current <= 1e-12
        && orders_ok
        && instanton.magnitude_ok
        && instanton.sign_stable
        && !(anti && dirac_floor >= 1e-4);
    let records: String = report
        .records
        .iter()
        .map(|r| serde_json::to_string(r).expect("records serialise") + "\n")
        .collect();
    let summary = json!({
        "command": "verify-bpst",
        "seed": cfg.seed,
        "scale": scale,
        "surviving_chirality": if positive { "+" } else { "-" },
        "noise": noise,
        "points": points.len(),
        "asd_residual": asd,
        "stencil_order": order,
        "min_order": min_order,
        "levels": report.levels,
        "dirac_order": report.dirac_order,
        "ym_order": report.ym_order,
        "bianchi_order": report.bianchi_order,
        "max_current": report.max_current,
        "worst_point": report.worst_point,
        "instanton": {
            "integral": instanton.integral,
            "values": instanton.quadrature.values,
            "resolutions": instanton.quadrature.resolutions,
            "magnitude_ok": instanton.magnitude_ok,
            "signs": instanton.signs,
            "sign_stable": instanton.sign_stable,
            "orientation": instanton.orientation,
        },
        "warnings": warnings,
        "pass": pass,
    });
    Ok(Report {
        summary,
        pass,
        files: vec![("verify-bpst.records.jsonl".into(), records)],
    })
}

// ------------------------------------------------------------------ selftest

fn check(name: &str, value: f64, tol: f64) -> Value {
    json!({"name": name, "value": value, "tol": tol, "pass": value <= tol})
}

fn cmd_selftest(cfg: &RunConfig, exec: Exec) -> CmdResult {
    let mut checks = Vec::new();
    for s in identity_suites(cfg.seed, 10, None) {
        checks.push(check(s.name, s.max_residual, s.tol));
    }

    let two = ahat_hypersurface(1, 2)?;
    let ad = ad_st_relation(2, &CharNumber::from_integer(1.into()), &CharNumber::from_integer(0.into()))?;
    let idx_ok = exact_string(&two) == "2" && exact_string(&p_poly(1, 2)) == "-4" && exact_string(&ad) == "4";
    checks.push(check("index-exact-values", if idx_ok { 0.0 } else { 1.0 }, 0.0));

    // free T³ U(1) with η = 0.3 dx¹ ⊗ i
    let u1 = GaugeAlgebra::u(1)?;
    let rep = GaugeRep::standard(&u1);
    let cl3 = CliffordModule::new(3)?;
    let coords = u1.coords(&CMat::from_element(1, 1, Complex64::new(0.0, 0.3)));
    let form = Form::from_fn(3, 1, |idx| if idx[0] == 0 { coords.clone() } else { LieVec::zeros(1) })?;
    let eta = FourierConnection::constant(&form)?;
    let family = AffineFamily::new(&FourierConnection::zero(3, 1), &eta, &Truncation::periodic(3, 2), &cl3, &rep)?;
    let sp = first_order_splitting(&family, crate::tol::KERNEL_RELATIVE, exec);
    let split_err = if sp.eigenvalues.len() == 2 {
        (sp.eigenvalues[0] + 0.3).abs().max((sp.eigenvalues[1] - 0.3).abs())
    } else {
        f64::INFINITY
    };
    checks.push(check("u1-torus-splitting", split_err, 1e-12));

    let su2 = GaugeAlgebra::su(2)?;
    let st = GaugeRep::standard(&su2);
    let scan = current_min_on_sphere(&cl3, &st, 4, cfg.seed, exec)?;
    checks.push(json!({"name": "dim3-current-minimum", "value": scan.best, "min": 1e-3, "pass": scan.best > 1e-3}));

    let bpst = Bpst::new();
    let module = CliffordModule::new(4)?;
    let positive = surviving_chirality(&bpst, &module)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let spec = TwistorSpec::chiral(positive, &random_cvec(&mut rng, 4), &random_cvec(&mut rng, 4), &module)?;
    let sol = build_solution(&bpst, &spec)?;
    let points = sample_points(cfg.seed, 8, 2);
    let rep_v = crate::construct::verify_solution(
        &sol.connection,
        &sol.curvature,
        &sol.psi,
        &points,
        &[2e-2, 1e-2],
        4,
        &sol.module,
        &sol.rep,
        exec,
    )?;
    let worst_order = [rep_v.dirac_order, rep_v.ym_order, rep_v.bianchi_order]
        .iter()
        .map(|o| o.unwrap_or(0.0))
        .fold(f64::INFINITY, f64::min);
    checks.push(json!({"name": "bpst-residual-order", "value": worst_order, "min": 3.8, "pass": worst_order >= 3.8}));
    checks.push(check("bpst-current", rep_v.max_current, 1e-12));

    let x = [0.3, -0.2, 0.4, 0.1];
    let scheme = FdScheme::new(1e-2, 4)?;
    let st_t = stress_tensors(&sol.connection, &sol.psi, &x, scheme, &sol.module, &sol.rep)?;
    checks.push(check("ym-trace", st_t.ym_trace_residual(), 1e-12));
    checks.push(check("dirac-trace", st_t.dirac_trace_residual(), 1e-12));
    let tf = stress_field(&sol.connection, &sol.psi, scheme, &sol.module, &sol.rep);
    let div = divergence_residual(&tf, &x, scheme)?;
    checks.push(check("stress-divergence", div, 1e-5));

    let inst = bpst_index_check(1.0, &[24, 32], exec)?;
    checks.push(check("instanton-number", (inst.integral.abs() - 1.0).abs(), 1e-2));

    let pass = checks.iter().all(|c| c["pass"].as_bool() == Some(true));
    Ok(Report {
        summary: json!({"command": "selftest", "seed": cfg.seed, "checks": checks, "pass": pass}),
        pass,
        files: vec![],
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_json(args: &[&str]) -> (Outcome, Value) {
        let mut full = vec!["spinlab"];
        full.extend_from_slice(args);
        let cli = Cli::try_parse_from(full).unwrap();
        let (code, text) = execute(&cli);
        (code, text.map(|t| serde_json::from_str(&t).unwrap()).unwrap_or(Value::Null))
    }

    #[test]
    fn config_parsing() {
        let v = RunConfig::parse_str("# comment\nm = 4\nrep=su2 # trailing\n\n").unwrap();
        assert_eq!(v["m"], "4");
        assert_eq!(v["rep"], "su2");
        assert!(RunConfig::parse_str("novalue").is_err());
    }

    #[test]
    fn index_commands() {
        let (code, v) = run_json(&["index", "ahat-hypersurface", "--n", "1", "--d", "2"]);
        assert_eq!(code, Outcome::Pass);
        assert_eq!(v["exact_value"], "2");
        let (_, v) = run_json(&["index", "p-poly", "--j", "1", "--l", "2"]);
        assert_eq!(v["exact_value"], "-4");
        let (_, v) = run_json(&["index", "ad-st", "--N", "2", "--indE", "1", "--indPartial", "0"]);
        assert_eq!(v["exact_value"], "4");
        let (_, v) = run_json(&["index", "su2-index", "--a", "1/2,-3", "--l", "1"]);
        assert_eq!(v["exact_value"], "4");
        let (code, _) = run_json(&["index", "ahat-hypersurface", "--n", "0", "--d", "2"]);
        assert_eq!(code, Outcome::Usage);
    }

    #[test]
    fn usage_errors() {
        assert_eq!(run(["spinlab", "bogus"]), 2);
        let (code, _) = run_json(&["spectrum", "--set", "rep=so3"]);
        assert_eq!(code, Outcome::Usage);
        let (code, _) = run_json(&["perturb", "--set", "eta.kind=random", "--set", "eta.kmax=5", "--set", "cutoff=2"]);
        assert_eq!(code, Outcome::Usage);
    }

    #[test]
    fn identities_and_forced_failure() {
        let (code, v) = run_json(&["identities", "--set", "samples=5"]);
        assert_eq!(code, Outcome::Pass, "{v}");
        let (code, _) = run_json(&["identities", "--set", "samples=5", "--set", "tol=0"]);
        assert_eq!(code, Outcome::Violation);
        let (_, w) = run_json(&["identities", "--set", "samples=5", "--seed", "9"]);
        let verdicts = |x: &Value| x["suites"].as_array().unwrap().iter().map(|s| s["pass"].clone()).collect::<Vec<_>>();
        assert_eq!(verdicts(&v), verdicts(&w));
    }

    #[test]
    fn perturb_default_and_vacuous() {
        let (code, v) = run_json(&["perturb", "--set", "cutoff=2"]);
        assert_eq!(code, Outcome::Pass, "{v}");
        assert_eq!(v["verdict"], "not-decoupling");
        assert_eq!(v["kernel_dim"], 2);
        let (code, v) = run_json(&["perturb", "--set", "cutoff=1", "--set", "spin=antiperiodic"]);
        assert_eq!(code, Outcome::Pass, "{v}");
        assert_eq!(v["verdict"], "vacuous");
        assert_eq!(v["kernel_dim"], 0);
    }

    #[test]
    fn spectrum_free_su2() {
        let (code, v) = run_json(&["spectrum", "--set", "m=4", "--set", "rep=su2"]);
        assert_eq!(code, Outcome::Pass, "{v}");
        assert_eq!(v["kernel_dim"], 8);
    }
}
