//! End-to-end runs of the `spinlab` binary: exit codes, output files and the
//! shipped JSON schemas.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_spinlab"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("spawn spinlab")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exit code")
}

fn scratch(name: &str) -> PathBuf {
    let d = std::env::temp_dir().join(format!("spinlab-cli-{}-{name}", std::process::id()));
    let _ = std::fs::remove_dir_all(&d);
    std::fs::create_dir_all(&d).unwrap();
    d
}

fn schema(name: &str) -> Value {
    let p = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../schemas").join(format!("{name}.schema.json"));
    serde_json::from_str(&std::fs::read_to_string(&p).unwrap_or_else(|e| panic!("{}: {e}", p.display()))).unwrap()
}

/// Checks the subset of JSON Schema the shipped files use.
fn violations(s: &Value, v: &Value, path: &str) -> Vec<String> {
    let mut out = Vec::new();
    if let Some(alts) = s.get("oneOf").and_then(Value::as_array) {
        if !alts.iter().any(|a| violations(a, v, path).is_empty()) {
            out.push(format!("{path}: matches no alternative"));
        }
        return out;
    }
    if let Some(c) = s.get("const") {
        if c != v {
            out.push(format!("{path}: expected {c}, got {v}"));
        }
    }
    if let Some(e) = s.get("enum").and_then(Value::as_array) {
        if !e.contains(v) {
            out.push(format!("{path}: {v} not in enum"));
        }
    }
    if let Some(t) = s.get("type") {
        let types: Vec<&str> = match t {
            Value::String(x) => vec![x.as_str()],
            Value::Array(xs) => xs.iter().filter_map(Value::as_str).collect(),
            _ => vec![],
        };
        let ok = types.iter().any(|t| match *t {
            "number" => v.is_number(),
            "integer" => v.is_u64() || v.is_i64(),
            "string" => v.is_string(),
            "boolean" => v.is_boolean(),
            "null" => v.is_null(),
            "object" => v.is_object(),
            "array" => v.is_array(),
            _ => false,
        });
        if !ok {
            out.push(format!("{path}: type {t} does not admit {v}"));
        }
    }
    if let Some(obj) = v.as_object() {
        for k in s.get("required").and_then(Value::as_array).into_iter().flatten() {
            let k = k.as_str().unwrap();
            if !obj.contains_key(k) {
                out.push(format!("{path}: missing {k}"));
            }
        }
        if let Some(props) = s.get("properties").and_then(Value::as_object) {
            for (k, ps) in props {
                if let Some(x) = obj.get(k) {
                    out.extend(violations(ps, x, &format!("{path}.{k}")));
                }
            }
        }
    }
    if let (Some(items), Some(arr)) = (s.get("items"), v.as_array()) {
        for (i, x) in arr.iter().enumerate() {
            out.extend(violations(items, x, &format!("{path}[{i}]")));
        }
    }
    out
}

fn assert_schema(name: &str, v: &Value) {
    let errs = violations(&schema(name), v, "$");
    assert!(errs.is_empty(), "{name}: {errs:?}");
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("stdout is not JSON ({e}): {}", String::from_utf8_lossy(&o.stdout)))
}

#[test]
fn usage_errors_exit_two() {
    assert_eq!(code(&run(&[])), 2);
    assert_eq!(code(&run(&["no-such-command"])), 2);
    assert_eq!(code(&run(&["index", "su2-index"])), 2);
    assert_eq!(code(&run(&["--set", "bogus=1", "identities"])), 2);
    assert_eq!(code(&run(&["--set", "samples=many", "identities"])), 2);
    assert_eq!(code(&run(&["--config", "/nonexistent/spinlab.cfg", "identities"])), 2);
    assert_eq!(code(&run(&["--set", "rep=so5", "spectrum"])), 2);
}

#[test]
fn identities_pass_and_match_schema() {
    let dir = scratch("identities");
    let o = run(&["--seed", "5", "--set", "samples=5", "--out", dir.to_str().unwrap(), "identities"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_schema("identities", &v);
    assert_eq!(v["seed"], 5);
    let saved: Value = serde_json::from_str(&std::fs::read_to_string(dir.join("identities.json")).unwrap()).unwrap();
    assert_eq!(saved, v);
}

#[test]
fn impossible_tolerance_is_a_violation() {
    let o = run(&["--set", "samples=3", "--set", "tol=0", "identities"]);
    assert_eq!(code(&o), 1);
    assert_eq!(stdout_json(&o)["pass"], false);
}

#[test]
fn config_file_is_read() {
    let dir = scratch("config");
    let cfg = dir.join("run.cfg");
    std::fs::write(&cfg, "# small run\nsamples = 2\nseed = 11\n").unwrap();
    let o = run(&["--config", cfg.to_str().unwrap(), "identities"]);
    assert_eq!(code(&o), 0);
    assert_eq!(stdout_json(&o)["seed"], 11);
}

#[test]
fn index_values_are_exact_strings() {
    let o = run(&["index", "su2-index", "--a", "2,1/2", "--l", "1"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_schema("index", &v);
    assert_eq!(v["exact_value"], "7/2");

    let o = run(&["index", "ahat-hypersurface", "--n", "1", "--d", "2"]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert_schema("index", &v);
    assert_eq!(v["exact_value"], "2");

    let o = run(&["index", "roots", "--a", "1,-1"]);
    assert_eq!(code(&o), 0);
    assert_schema("index", &stdout_json(&o));
}

#[test]
fn spectrum_writes_csv() {
    let dir = scratch("spectrum");
    let o = run(&["--set", "cutoff=2", "--set", "rep=su2", "--out", dir.to_str().unwrap(), "spectrum"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_schema("spectrum", &v);
    let mut rdr = csv::Reader::from_path(dir.join("spectrum.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["index", "lambda"]);
    let rows = rdr.records().count();
    assert_eq!(rows as u64, v["dim"].as_u64().unwrap());
}

#[test]
fn perturb_writes_branches() {
    let dir = scratch("perturb");
    let o = run(&["--set", "cutoff=1", "--set", "t.steps=4", "--out", dir.to_str().unwrap(), "perturb"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_schema("perturb", &v);
    assert_eq!(v["kernel_dim"], 2);
    assert_eq!(v["verdict"], "not-decoupling");
    let mut rdr = csv::Reader::from_path(dir.join("branches.csv")).unwrap();
    assert_eq!(rdr.headers().unwrap().iter().collect::<Vec<_>>(), ["t", "branch_id", "lambda"]);
    let rows: Vec<csv::StringRecord> = rdr.records().map(Result::unwrap).collect();
    let dim = v["dim"].as_u64().unwrap() as usize;
    assert_eq!(rows.len() % dim, 0);
    for r in &rows {
        r[0].parse::<f64>().unwrap();
        r[1].parse::<usize>().unwrap();
        r[2].parse::<f64>().unwrap();
    }
}

#[test]
fn current_scan_passes() {
    let o = run(&["--set", "restarts=3", "--set", "reps=su2", "current-scan"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_schema("current-scan", &stdout_json(&o));
}

const SMALL_BPST: [&str; 6] = ["--set", "points.core=8", "--set", "points.far=2", "--set", "quad.ladder=24,32"];

#[test]
fn verify_bpst_passes_and_records_points() {
    let dir = scratch("bpst");
    let mut args = SMALL_BPST.to_vec();
    args.extend(["--out", dir.to_str().unwrap(), "verify-bpst"]);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let v = stdout_json(&o);
    assert_schema("verify-bpst", &v);
    assert_eq!(v["surviving_chirality"], "-");
    let text = std::fs::read_to_string(dir.join("verify-bpst.records.jsonl")).unwrap();
    let mut n = 0;
    for line in text.lines() {
        assert_schema("verify-bpst.record", &serde_json::from_str(line).unwrap());
        n += 1;
    }
    assert_eq!(n, 10 * 3);
}

#[test]
fn verify_bpst_rejects_corrupted_spinor() {
    let mut args = SMALL_BPST.to_vec();
    args.extend(["verify-bpst", "--noise", "1e-3"]);
    let o = run(&args);
    assert_eq!(code(&o), 1);
    assert_eq!(stdout_json(&o)["pass"], false);
}

#[test]
fn coarse_verify_bpst_warns() {
    let mut args = SMALL_BPST.to_vec();
    args.extend(["verify-bpst", "--coarse"]);
    let o = run(&args);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    assert!(!v["warnings"].as_array().unwrap().is_empty());
}

#[test]
fn selftest_passes() {
    let o = run(&["selftest"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_schema("selftest", &stdout_json(&o));
}
