use std::path::Path;
use std::time::Instant;

use anyhow::Result;
use serde_json::json;

use crate::config::Config;
use crate::manifest::{file_hash, key_of, Artifact, Manifest, StageRecord, Status, STAGES};
use crate::stages::{self, Inputs, StageOutput, MODEL, TREE};

/// The config subsection a stage depends on, plus the hashes of its inputs.
fn stage_key(cfg: &Config, name: &str, manifest: &Manifest) -> Result<String> {
    let up = |stage: &str, file: &str| manifest.artifact_hash(stage, file).unwrap_or("").to_string();
    let parts = match name {
        "belov-check" => json!([name, cfg.belov]),
        "build-cantor" => json!([name, cfg.series, cfg.cantor, cfg.seed]),
        "verify-identities" => json!([name, cfg.series, cfg.identities, cfg.cantor.delta, up("build-cantor", TREE)]),
        "build-model" => json!([name, cfg.series, cfg.model, up("build-cantor", TREE)]),
        "decompose" => json!([name, cfg.decompose, up("build-model", MODEL)]),
        "orbit" => json!([name, cfg.orbit, cfg.seed, up("build-model", MODEL)]),
        other => anyhow::bail!("unknown stage {other}"),
    };
    key_of(&json!([env!("CARGO_PKG_VERSION"), parts]))
}

pub fn run_stage(cfg: &Config, name: &str, inputs: &Inputs, out: &Path) -> Result<StageOutput> {
    match name {
        "belov-check" => stages::belov(cfg, out),
        "build-cantor" => stages::cantor(cfg, out),
        "verify-identities" => stages::identities(cfg, inputs, out),
        "build-model" => stages::model(cfg, inputs, out),
        "decompose" => stages::decompose(cfg, inputs, out),
        "orbit" => stages::orbit_stage(cfg, inputs, out),
        other => anyhow::bail!("unknown stage {other}"),
    }
}

fn finish(name: &str, key: String, started: Instant, res: Result<StageOutput>, out: &Path) -> Result<(StageRecord, Option<anyhow::Error>)> {
    let wall = started.elapsed().as_secs_f64();
    Ok(match res {
        Ok(o) => {
            let artifacts = o
                .artifacts
                .iter()
                .map(|p| Ok(Artifact { path: p.clone(), sha256: file_hash(&out.join(p))? }))
                .collect::<Result<Vec<_>>>()?;
            let rec = StageRecord {
                name: name.into(),
                status: Status::Completed,
                key,
                wall_time_s: wall,
                artifacts,
                checks: o.checks,
                error: None,
            };
            (rec, None)
        }
        Err(e) => {
            let rec = StageRecord {
                name: name.into(),
                status: Status::Failed,
                key,
                wall_time_s: wall,
                artifacts: vec![],
                checks: vec![],
                error: Some(format!("{e:#}")),
            };
            (rec, Some(e))
        }
    })
}

/// Runs one stage outside the pipeline and records it in the manifest.
pub fn run_single(cfg: &Config, name: &str, inputs: &Inputs) -> Result<Manifest> {
    let out = &cfg.out;
    std::fs::create_dir_all(out)?;
    let mut manifest = Manifest::load_or_default(out)?;
    let key = stage_key(cfg, name, &manifest)?;
    let started = Instant::now();
    let res = run_stage(cfg, name, inputs, out);
    let (rec, err) = finish(name, key, started, res, out)?;
    manifest.set(rec);
    manifest.save(out)?;
    match err {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}

/// Every stage in order, reusing stages whose key and artifacts are
/// unchanged. The manifest and summary are written even when a stage fails.
pub fn run_pipeline(cfg: &Config) -> Result<Manifest> {
    cfg.validate()?;
    let out = &cfg.out;
    std::fs::create_dir_all(out)?;
    let mut manifest = Manifest::load_or_default(out)?;
    let mut hashed = cfg.clone();
    hashed.out = Default::default();
    hashed.threads = 0;
    manifest.config_hash = key_of(&hashed)?;
    let inputs = Inputs::in_dir(out);
    let mut failure = None;
    for name in STAGES {
        if failure.is_some() {
            manifest.set(StageRecord::not_run(name));
            continue;
        }
        let key = stage_key(cfg, name, &manifest)?;
        if let Some(rec) = manifest.cached(name, &key, out) {
            manifest.set(rec);
            continue;
        }
        let started = Instant::now();
        let res = run_stage(cfg, name, &inputs, out);
        let (rec, err) = finish(name, key, started, res, out)?;
        manifest.set(rec);
        manifest.save(out)?;
        failure = err.map(|e| e.context(format!("stage {name}")));
    }
    manifest.save(out)?;
    crate::report::emit_report(&manifest, out)?;
    match failure {
        Some(e) => Err(e),
        None => Ok(manifest),
    }
}
