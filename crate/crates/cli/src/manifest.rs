use std::path::Path;

use anyhow::{Context, Result};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

pub const MANIFEST: &str = "manifest.json";

pub const STAGES: [&str; 6] = ["belov-check", "build-cantor", "verify-identities", "build-model", "decompose", "orbit"];

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Status {
    NotRun,
    Completed,
    Cached,
    Failed,
}

/// Whether a failed check fails the run or only flags a trend.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Hard,
    Trend,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckOutcome {
    pub name: String,
    pub value: f64,
    pub limit: f64,
    pub pass: bool,
    pub kind: CheckKind,
    /// Artifact and column the value comes from.
    pub source: String,
}

impl CheckOutcome {
    pub fn at_most(name: &str, value: f64, limit: f64, source: &str) -> Self {
        Self { name: name.into(), value, limit, pass: value <= limit, kind: CheckKind::Hard, source: source.into() }
    }

    pub fn at_least(name: &str, value: f64, limit: f64, source: &str) -> Self {
        Self { pass: value >= limit, ..Self::at_most(name, value, limit, source) }
    }

    pub fn flag(name: &str, pass: bool, source: &str) -> Self {
        let v = if pass { 1.0 } else { 0.0 };
        Self { name: name.into(), value: v, limit: 1.0, pass, kind: CheckKind::Hard, source: source.into() }
    }

    pub fn trend(mut self) -> Self {
        self.kind = CheckKind::Trend;
        self
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Artifact {
    pub path: String,
    pub sha256: String,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub name: String,
    pub status: Status,
    /// Hash of the stage's config section and its inputs.
    pub key: String,
    pub wall_time_s: f64,
    pub artifacts: Vec<Artifact>,
    pub checks: Vec<CheckOutcome>,
    pub error: Option<String>,
}

impl StageRecord {
    pub fn not_run(name: &str) -> Self {
        Self {
            name: name.into(),
            status: Status::NotRun,
            key: String::new(),
            wall_time_s: 0.0,
            artifacts: vec![],
            checks: vec![],
            error: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub tool_version: String,
    pub config_hash: String,
    pub stages: Vec<StageRecord>,
}

impl Default for Manifest {
    fn default() -> Self {
        Self {
            tool_version: env!("CARGO_PKG_VERSION").into(),
            config_hash: String::new(),
            stages: STAGES.iter().map(|s| StageRecord::not_run(s)).collect(),
        }
    }
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

pub fn file_hash(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).with_context(|| format!("reading {}", path.display()))?;
    Ok(sha256_hex(&bytes))
}

impl Manifest {
    pub fn load(out: &Path) -> Result<Option<Self>> {
        let p = out.join(MANIFEST);
        if !p.exists() {
            return Ok(None);
        }
        let text = std::fs::read_to_string(&p)?;
        Ok(Some(serde_json::from_str(&text).with_context(|| format!("parsing {}", p.display()))?))
    }

    pub fn load_or_default(out: &Path) -> Result<Self> {
        Ok(Self::load(out)?.unwrap_or_default())
    }

    pub fn save(&self, out: &Path) -> Result<()> {
        std::fs::create_dir_all(out)?;
        std::fs::write(out.join(MANIFEST), serde_json::to_string_pretty(self)? + "\n")?;
        Ok(())
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.name == name)
    }

    pub fn set(&mut self, rec: StageRecord) {
        match self.stages.iter_mut().find(|s| s.name == rec.name) {
            Some(s) => *s = rec,
            None => self.stages.push(rec),
        }
    }

    /// A finished record for `name` under `key` whose artifacts are all
    /// present with their recorded hashes.
    pub fn cached(&self, name: &str, key: &str, out: &Path) -> Option<StageRecord> {
        let rec = self.stage(name)?;
        if rec.key != key || !matches!(rec.status, Status::Completed | Status::Cached) {
            return None;
        }
        let intact = rec.artifacts.iter().all(|a| file_hash(&out.join(&a.path)).is_ok_and(|h| h == a.sha256));
        intact.then(|| StageRecord { status: Status::Cached, ..rec.clone() })
    }

    pub fn artifact_hash(&self, stage: &str, path: &str) -> Option<&str> {
        self.stage(stage)?.artifacts.iter().find(|a| a.path == path).map(|a| a.sha256.as_str())
    }

    pub fn checks(&self) -> impl Iterator<Item = &CheckOutcome> {
        self.stages.iter().flat_map(|s| &s.checks)
    }
}

/// Hash of a serializable value, used for stage keys.
pub fn key_of<T: Serialize>(parts: &T) -> Result<String> {
    Ok(sha256_hex(serde_json::to_string(parts)?.as_bytes()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cache_requires_matching_key_and_intact_artifacts() {
        let dir = tempfile::tempdir().unwrap();
        std::fs::write(dir.path().join("a.txt"), "hello").unwrap();
        let mut m = Manifest::default();
        let rec = StageRecord {
            name: "orbit".into(),
            status: Status::Completed,
            key: "k".into(),
            wall_time_s: 1.0,
            artifacts: vec![Artifact { path: "a.txt".into(), sha256: sha256_hex(b"hello") }],
            checks: vec![],
            error: None,
        };
        m.set(rec);
        assert_eq!(m.cached("orbit", "k", dir.path()).unwrap().status, Status::Cached);
        assert!(m.cached("orbit", "other", dir.path()).is_none());
        std::fs::write(dir.path().join("a.txt"), "changed").unwrap();
        assert!(m.cached("orbit", "k", dir.path()).is_none());
    }

    #[test]
    fn default_manifest_lists_every_stage_not_run() {
        let m = Manifest::default();
        assert_eq!(m.stages.len(), 6);
        assert!(m.stages.iter().all(|s| s.status == Status::NotRun));
    }

    #[test]
    fn known_digest() {
        assert_eq!(sha256_hex(b"abc"), "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad");
    }
}
