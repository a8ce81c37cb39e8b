use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::time::Instant;

use serde_json::Value;

const SMALL: &str = r#"
[identities]
lambdas = 4
direct_lambdas = 1

[model]
m = 8
trend = [0, 4, 8]

[orbit]
steps = 2000
seeds = 2
crowding = [4, 8]
weyl_steps = 20000
"#;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_hypercyclic"))
}

fn small_config(dir: &Path) -> PathBuf {
    let p = dir.join("small.toml");
    std::fs::write(&p, SMALL).unwrap();
    p
}

fn run(config: &Path, out: &Path, args: &[&str]) -> Output {
    bin().arg("--config").arg(config).arg("--out").arg(out).args(args).output().unwrap()
}

fn manifest(out: &Path) -> Value {
    serde_json::from_str(&std::fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap()
}

fn failed_checks(m: &Value) -> Vec<String> {
    let mut v = vec![];
    for st in m["stages"].as_array().unwrap() {
        for c in st["checks"].as_array().unwrap() {
            if !c["pass"].as_bool().unwrap() {
                v.push(c["name"].as_str().unwrap().to_string());
            }
        }
    }
    v
}

#[test]
fn invalid_config_is_rejected_before_any_work() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "[series]\ntruncation = 30\nbits = 256\n").unwrap();
    let out = dir.path().join("out");
    let o = run(&cfg, &out, &["run"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("config invalid"));
    assert!(!out.join("manifest.json").exists());
}

#[test]
fn unknown_keys_are_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("typo.toml");
    std::fs::write(&cfg, "[model]\nmm = 8\n").unwrap();
    let o = run(&cfg, &dir.path().join("out"), &["run"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn print_config_reflects_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = run(&cfg, &dir.path().join("out"), &["--print-config", "build-model", "--m", "4"]);
    assert!(o.status.success());
    let text = String::from_utf8(o.stdout).unwrap();
    let v: toml::Value = toml::from_str(&text).unwrap();
    assert_eq!(v["model"]["m"].as_integer(), Some(4));
    assert_eq!(v["identities"]["direct_lambdas"].as_integer(), Some(1));
}

#[test]
fn pipeline_runs_caches_and_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let a = dir.path().join("a");
    let b = dir.path().join("b");

    let first = run(&cfg, &a, &["run"]);
    let m = manifest(&a);
    let stages = m["stages"].as_array().unwrap();
    assert_eq!(stages.len(), 6);
    assert!(stages.iter().all(|s| s["status"] == "completed"), "{}", String::from_utf8_lossy(&first.stderr));
    // The depth-agreement check of the integrability report is the one
    // known hard failure at the default tree depth.
    assert_eq!(failed_checks(&m), ["integral_depth_agreement"]);
    assert_eq!(first.status.code(), Some(2));
    for f in ["belov.json", "tree.json", "identities.csv", "identities_checks.csv", "model.json", "membership.csv"] {
        assert!(a.join(f).exists(), "{f}");
    }
    for f in ["decompose_te.json", "decompose_contraction.json", "orbit_T.csv", "orbit_V.csv", "crowding.csv", "summary.md"] {
        assert!(a.join(f).exists(), "{f}");
    }

    let t = Instant::now();
    let again = run(&cfg, &a, &["run"]);
    assert!(t.elapsed().as_secs_f64() < 1.0);
    assert_eq!(again.status.code(), Some(2));
    assert!(manifest(&a)["stages"].as_array().unwrap().iter().all(|s| s["status"] == "cached"));

    // Changing one stage's inputs reruns it and everything downstream.
    std::fs::write(&cfg, SMALL.replace("steps = 2000", "steps = 1000")).unwrap();
    run(&cfg, &a, &["run"]);
    let st: Vec<String> =
        manifest(&a)["stages"].as_array().unwrap().iter().map(|s| s["status"].as_str().unwrap().to_string()).collect();
    assert_eq!(st, ["cached", "cached", "cached", "cached", "cached", "completed"]);
    std::fs::write(&cfg, SMALL).unwrap();

    run(&cfg, &b, &["run"]);
    for f in ["identities.csv", "membership.csv", "eigen_residuals.csv", "orbit_T.csv", "orbit_V.csv", "crowding.csv"] {
        let x = std::fs::read(a.join(f)).unwrap();
        let y = std::fs::read(b.join(f)).unwrap();
        if f.starts_with("orbit") || f == "crowding.csv" {
            // `a` last ran the orbit stage at a different budget.
            continue;
        }
        assert_eq!(x, y, "{f}");
    }
    run(&cfg, &a, &["run"]);
    for f in ["orbit_T.csv", "orbit_V.csv", "crowding.csv", "model.json"] {
        assert_eq!(std::fs::read(a.join(f)).unwrap(), std::fs::read(b.join(f)).unwrap(), "{f}");
    }

    let summary = std::fs::read_to_string(b.join("summary.md")).unwrap();
    assert!(summary.contains("## Identities"));
    assert!(!summary.contains("Gap:"));
}

#[test]
fn single_stages_chain_through_files() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let out = dir.path().join("out");

    assert_eq!(run(&cfg, &out, &["belov-check", "--m-max", "6"]).status.code(), Some(0));
    let belov: Value = serde_json::from_str(&std::fs::read_to_string(out.join("belov.json")).unwrap()).unwrap();
    let recs = belov["records"].as_array().unwrap();
    assert_eq!(recs.len(), 3 + 3 * 6);
    assert!(recs.iter().all(|r| r["pass"] == true));

    let o = run(&cfg, &out, &["build-cantor", "--depth", "6"]);
    assert!(matches!(o.status.code(), Some(0 | 2)), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("tree.json").exists());

    let o = run(&cfg, &out, &["build-model", "--m", "4"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));

    let o = run(&cfg, &out, &["decompose", "--method", "te"]);
    assert_eq!(o.status.code(), Some(0));
    let d: Value = serde_json::from_str(&std::fs::read_to_string(out.join("decompose_te.json")).unwrap()).unwrap();
    assert_eq!(d["method"], "te");
    assert!(d["unitarity_defect"].as_f64().unwrap() < 1e-8);
    assert!(!out.join("decompose_contraction.json").exists());

    let o = run(&cfg, &out, &["orbit", "--matrix", "V", "--steps", "300", "--stream"]);
    assert!(matches!(o.status.code(), Some(0 | 3)), "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(out.join("orbit_V.csv")).unwrap();
    assert!(csv.starts_with("step,lognorm,p0_re,p0_im"));
    assert_eq!(csv.lines().count(), 302);

    let o = run(&cfg, &out, &["eigen-residuals"]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let e = std::fs::read_to_string(out.join("eigen_residuals.csv")).unwrap();
    assert!(e.starts_with("lambda_hex,model_eigen,model_shift,field_measured,field_predicted"));
    assert_eq!(e.lines().count(), 5);

    // A file of hex angles in place of a count.
    let lams: String = e.lines().skip(1).take(2).map(|l| l.split(',').next().unwrap().to_string() + "\n").collect();
    std::fs::write(dir.path().join("lams.txt"), lams).unwrap();
    let lam_arg = dir.path().join("lams.txt");
    let o = run(&cfg, &out, &["verify-identities", "--path", "analytic", "--lambdas", lam_arg.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = std::fs::read_to_string(out.join("identities.csv")).unwrap();
    assert!(rows.lines().skip(1).all(|l| l.contains(",analytic,")));

    let o = run(&cfg, &out, &["report"]);
    assert_eq!(o.status.code(), Some(2));
    let summary = std::fs::read_to_string(out.join("summary.md")).unwrap();
    assert!(summary.contains("orbit"));
}

#[test]
fn missing_inputs_are_execution_errors() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = small_config(dir.path());
    let o = run(&cfg, &dir.path().join("empty"), &["decompose"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&o.stderr).contains("model.json"));
}
