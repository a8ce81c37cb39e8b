use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use hypercyclic::decomp::Method;
use hypercyclic::eigenfield::PathSelection;
use hypercyclic::lacunary::{tail_bound, LacunarySeries};
use serde::{Deserialize, Serialize};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    pub out: PathBuf,
    pub seed: u64,
    /// Worker threads; 0 lets rayon decide.
    pub threads: usize,
    pub series: SeriesConfig,
    pub belov: BelovConfig,
    pub cantor: CantorConfig,
    pub identities: IdentityConfig,
    pub model: ModelSection,
    pub decompose: DecomposeConfig,
    pub orbit: OrbitConfig,
}

impl Default for Config {
    fn default() -> Self {
        Self {
            out: PathBuf::from("out"),
            seed: 0,
            threads: 0,
            series: SeriesConfig::default(),
            belov: BelovConfig::default(),
            cantor: CantorConfig::default(),
            identities: IdentityConfig::default(),
            model: ModelSection::default(),
            decompose: DecomposeConfig::default(),
            orbit: OrbitConfig::default(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SeriesConfig {
    pub truncation: usize,
    pub bits: u32,
}

impl Default for SeriesConfig {
    fn default() -> Self {
        Self { truncation: 12, bits: 256 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BelovConfig {
    pub m_max: u32,
}

impl Default for BelovConfig {
    fn default() -> Self {
        Self { m_max: 20 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CantorConfig {
    pub delta: f64,
    pub resolution_log2: u32,
    pub witness_budget: usize,
    pub depth: usize,
    /// Exponent of the distance integral compared across depths.
    pub alpha: f64,
    /// Shallower depth of that comparison.
    pub compare_depth: usize,
}

impl Default for CantorConfig {
    fn default() -> Self {
        Self { delta: 1e-3, resolution_log2: 32, witness_budget: 4096, depth: 8, alpha: 2.0 / 3.0, compare_depth: 6 }
    }
}

/// `lambdas = 32` samples tree endpoints, `lambdas = "file"` reads one hex
/// angle per line.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSpec {
    Count(usize),
    File(PathBuf),
}

impl std::str::FromStr for LambdaSpec {
    type Err = std::convert::Infallible;

    fn from_str(s: &str) -> std::result::Result<Self, Self::Err> {
        Ok(s.parse().map(LambdaSpec::Count).unwrap_or_else(|_| LambdaSpec::File(s.into())))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct IdentityConfig {
    pub lambdas: LambdaSpec,
    /// analytic, direct or both.
    pub path: String,
    /// With `path = "both"`, the direct path runs on this many of the points.
    pub direct_lambdas: usize,
    pub direct_terms: usize,
    pub direct_gauss: usize,
    pub direct_coarse_gauss: usize,
    pub window_tolerance: f64,
}

impl Default for IdentityConfig {
    fn default() -> Self {
        Self {
            lambdas: LambdaSpec::Count(32),
            path: "both".into(),
            direct_lambdas: 8,
            direct_terms: 2,
            direct_gauss: 16,
            direct_coarse_gauss: 10,
            window_tolerance: 1e-4,
        }
    }
}

impl IdentityConfig {
    pub fn path(&self) -> Result<PathSelection> {
        self.path.parse().map_err(|e| anyhow::anyhow!("identities.path: {e}"))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelSection {
    pub m: usize,
    pub graded_levels: u32,
    pub gauss: usize,
    pub max_panel: f64,
    pub rank_tol: f64,
    pub membership_tol: f64,
    /// Nested sizes for the membership trend.
    pub trend: Vec<usize>,
}

impl Default for ModelSection {
    fn default() -> Self {
        Self {
            m: 64,
            graded_levels: 16,
            gauss: 3,
            max_panel: 1.0 / 1024.0,
            rank_tol: 1e-10,
            membership_tol: 1e-8,
            trend: vec![0, 8, 16, 32, 64],
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DecomposeConfig {
    pub methods: Vec<String>,
}

impl Default for DecomposeConfig {
    fn default() -> Self {
        Self { methods: vec!["te".into(), "contraction".into()] }
    }
}

impl DecomposeConfig {
    pub fn methods(&self) -> Result<Vec<Method>> {
        self.methods.iter().map(|m| m.parse().map_err(|e| anyhow::anyhow!("decompose.methods: {e}"))).collect()
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OrbitConfig {
    pub steps: usize,
    pub eps: f64,
    /// Seeds `seed, seed + 1, …`.
    pub seeds: usize,
    /// Matrices written as orbit CSVs: T and/or V.
    pub matrices: Vec<String>,
    /// Write rows while iterating instead of keeping the orbit in memory.
    pub stream: bool,
    /// Nested model sizes for the crowding table.
    pub crowding: Vec<usize>,
    pub weyl_steps: usize,
    /// Budget of the unsaturated coverage diagnostic.
    pub low_budget_steps: usize,
    pub low_budget_eps: f64,
}

impl Default for OrbitConfig {
    fn default() -> Self {
        Self {
            steps: 10_000,
            eps: 0.05,
            seeds: 5,
            matrices: vec!["T".into(), "V".into()],
            stream: true,
            crowding: vec![8, 16, 32],
            weyl_steps: 100_000,
            low_budget_steps: 256,
            low_budget_eps: 0.01,
        }
    }
}

impl OrbitConfig {
    pub fn seed_list(&self, base: u64) -> Vec<u64> {
        (0..self.seeds as u64).map(|k| base + k).collect()
    }
}

impl Config {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        match path {
            None => Ok(Self::default()),
            Some(p) => {
                let text = std::fs::read_to_string(p).with_context(|| format!("reading {}", p.display()))?;
                toml::from_str(&text).with_context(|| format!("parsing {}", p.display()))
            }
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        Ok(toml::to_string(self)?)
    }

    pub fn series(&self) -> Result<LacunarySeries> {
        Ok(LacunarySeries::standard(self.series.truncation))
    }

    /// Invariants checked before any work.
    pub fn validate(&self) -> Result<()> {
        let s = &self.series;
        if 9 * s.truncation as u64 + 53 > s.bits as u64 {
            bail!("config invalid: 9N + 53 = {} exceeds precision B = {}", 9 * s.truncation + 53, s.bits);
        }
        let tail = tail_bound(8.0, s.truncation);
        if !(self.cantor.delta > tail) {
            bail!("config invalid: delta = {} must exceed the truncation tail {tail:e}", self.cantor.delta);
        }
        let d = self.cantor.depth;
        if d == 0 || d > 16 {
            bail!("config invalid: depth {d} outside 1..=16");
        }
        if self.model.m == 0 || self.model.m > 1 << d {
            bail!("config invalid: m = {} must lie in 1..=2^d = {}", self.model.m, 1usize << d);
        }
        if self.cantor.compare_depth == 0 || self.cantor.compare_depth >= d {
            bail!("config invalid: compare_depth {} outside 1..depth", self.cantor.compare_depth);
        }
        if !(self.orbit.eps > 0.0 && self.orbit.eps <= 1.0) {
            bail!("config invalid: orbit eps {} outside (0, 1]", self.orbit.eps);
        }
        if self.orbit.crowding.iter().chain(&self.model.trend).any(|&m| m > self.model.m) {
            bail!("config invalid: trend and crowding sizes must not exceed m = {}", self.model.m);
        }
        for m in &self.orbit.matrices {
            if m != "T" && m != "V" {
                bail!("config invalid: orbit matrix {m:?}, expected T or V");
            }
        }
        self.identities.path()?;
        self.decompose.methods()?;
        Ok(())
    }
}
