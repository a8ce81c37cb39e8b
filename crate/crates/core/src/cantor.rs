//! Certified cover of the level set `F = γ⁻¹(i)`, the nested-interval
//! perfect set `K ⊆ F` built from it, distances to `K`, and the gap
//! integrals that make `dist(·, K)^{-α}` integrable.
//!
//! Lengths of tree intervals and gaps are arc lengths in radians, so the
//! circle has length `2π`. Distances to `K` are chordal.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::f64::consts::PI;

use num_bigint::BigUint;
use num_complex::Complex64;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::angle::BinaryAngle;
use crate::conjugate::HolderCertificate;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::lacunary::LacunarySeries;
use crate::laurent::LaurentPoly;
use crate::quad::Rule;

/// A function whose level set is being covered.
pub trait LevelSetTarget: Sync {
    /// The computable (possibly truncated) function.
    fn value(&self, t: &BinaryAngle) -> Complex64;
    /// Disc containing the exact function on `[lo, lo + 2^{-level}]`.
    fn enclosure(&self, lo: &BinaryAngle, level: u32) -> (Complex64, f64);
    /// Bound on `|exact − value|`.
    fn truncation_error(&self) -> f64;
    /// The function is `2^{-p}`-periodic in the angle, exactly.
    fn period_log2(&self) -> u32 {
        0
    }
    /// Hölder certificate of the exact function, if any.
    fn holder(&self) -> Option<HolderCertificate> {
        None
    }
    /// Lacunary truncation, where meaningful.
    fn truncation(&self) -> usize {
        0
    }
}

impl LevelSetTarget for LacunarySeries {
    fn value(&self, t: &BinaryAngle) -> Complex64 {
        self.gamma_unchecked(t)
    }

    fn enclosure(&self, lo: &BinaryAngle, level: u32) -> (Complex64, f64) {
        self.gamma_enclosure(lo, level)
    }

    fn truncation_error(&self) -> f64 {
        self.tail()
    }

    fn period_log2(&self) -> u32 {
        self.log2_b
    }

    fn holder(&self) -> Option<HolderCertificate> {
        Some(self.gamma_certificate())
    }

    fn truncation(&self) -> usize {
        self.truncation
    }
}

impl LevelSetTarget for LaurentPoly {
    fn value(&self, t: &BinaryAngle) -> Complex64 {
        self.eval_angle(t)
    }

    fn enclosure(&self, lo: &BinaryAngle, level: u32) -> (Complex64, f64) {
        let mid = lo.add_pow2_neg(level + 1);
        let half = (PI * 2f64.powi(-(level as i32) - 1)).sin() * 2.0;
        let lip = self.lipschitz_certificate().constant;
        (self.eval_angle(&mid), lip * half + 8.0 * f64::EPSILON * (1.0 + self.l1_norm()))
    }

    fn truncation_error(&self) -> f64 {
        0.0
    }
}

/// The constant function; a test target whose level sets are empty or full.
pub struct ConstantTarget(pub Complex64);

impl LevelSetTarget for ConstantTarget {
    fn value(&self, _: &BinaryAngle) -> Complex64 {
        self.0
    }

    fn enclosure(&self, _: &BinaryAngle, _: u32) -> (Complex64, f64) {
        (self.0, 0.0)
    }

    fn truncation_error(&self) -> f64 {
        0.0
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ArcStatus {
    /// Certified to contain no point where `|f − target| ≤ δ`, and no point
    /// of the exact level set.
    Excluded,
    /// Contains a witness with `|f_N − target| ≤ δ`.
    Candidate,
    /// Neither excluded nor witnessed within the search budget.
    Unresolved,
}

/// The dyadic arc `[lo, lo + 2^{-level}]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CoverArc {
    pub lo: BinaryAngle,
    pub level: u32,
    pub status: ArcStatus,
    pub witness: Option<BinaryAngle>,
    pub residual: Option<f64>,
}

impl CoverArc {
    fn translated(&self, offset: &BinaryAngle) -> Self {
        Self {
            lo: self.lo.wrapping_add(offset),
            level: self.level,
            status: self.status,
            witness: self.witness.map(|w| w.wrapping_add(offset)),
            residual: self.residual,
        }
    }

    /// Length in turns.
    pub fn length(&self) -> f64 {
        2f64.powi(-(self.level as i32))
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CoverConfig {
    pub delta: f64,
    /// Candidate arcs have length `2^{-resolution_log2}` turns.
    pub resolution_log2: u32,
    /// Node budget of the witness search in one candidate arc.
    pub witness_budget: usize,
    pub bits: u32,
    pub exec: Execution,
}

impl Default for CoverConfig {
    fn default() -> Self {
        Self {
            delta: 1e-3,
            resolution_log2: 32,
            witness_budget: 4096,
            bits: crate::angle::DEFAULT_BITS,
            exec: Execution::Parallel,
        }
    }
}

/// Classification of the circle into excluded, candidate and unresolved
/// arcs. The arcs tile one fundamental period `[0, 2^{-period_log2})` of the
/// target; the full circle is the union of `copies()` translates.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LevelSetCover {
    pub target: Complex64,
    pub delta: f64,
    pub truncation: usize,
    pub truncation_error: f64,
    pub resolution_log2: u32,
    pub period_log2: u32,
    pub bits: u32,
    pub arcs: Vec<CoverArc>,
}

impl LevelSetCover {
    pub fn copies(&self) -> u64 {
        1u64 << self.period_log2
    }

    fn offset(&self, k: u64) -> BinaryAngle {
        BinaryAngle::from_dyadic(k, self.period_log2, self.bits).expect("valid dyadic")
    }

    /// Every arc of the circle, in increasing order.
    pub fn all_arcs(&self) -> Vec<CoverArc> {
        let mut out = Vec::with_capacity(self.arcs.len() * self.copies() as usize);
        for k in 0..self.copies() {
            let off = self.offset(k);
            out.extend(self.arcs.iter().map(|a| a.translated(&off)));
        }
        out
    }

    /// Witnesses of all candidate arcs around the circle, sorted.
    pub fn witnesses(&self) -> Vec<BinaryAngle> {
        let base: Vec<BinaryAngle> = self.arcs.iter().filter_map(|a| a.witness).collect();
        let mut out = Vec::with_capacity(base.len() * self.copies() as usize);
        for k in 0..self.copies() {
            let off = self.offset(k);
            out.extend(base.iter().map(|w| w.wrapping_add(&off)));
        }
        out.sort();
        out
    }

    /// Number of arcs with the given status around the full circle.
    pub fn count(&self, status: ArcStatus) -> usize {
        self.arcs.iter().filter(|a| a.status == status).count() * self.copies() as usize
    }

    /// Total length (turns) of arcs with the given status.
    pub fn measure(&self, status: ArcStatus) -> f64 {
        self.arcs.iter().filter(|a| a.status == status).map(|a| a.length()).sum::<f64>() * self.copies() as f64
    }
}

fn excluded_by(target: Complex64, disc: (Complex64, f64), slack: f64) -> bool {
    (disc.0 - target).norm() - disc.1 > slack
}

fn cell_excluded<T: LevelSetTarget + ?Sized>(f: &T, target: Complex64, lo: &BinaryAngle, level: u32, delta: f64) -> bool {
    let slack = delta + f.truncation_error();
    if excluded_by(target, f.enclosure(lo, level), slack) {
        return true;
    }
    if let Some(cert) = f.holder() {
        let mid = lo.add_pow2_neg(level + 1);
        let half_chord = 2.0 * (PI * 2f64.powi(-(level as i32) - 1)).sin();
        let disc = (f.value(&mid), f.truncation_error() + cert.bound(half_chord) + 1e-14);
        return excluded_by(target, disc, slack);
    }
    false
}

enum Search {
    Found(BinaryAngle, f64),
    Exhausted,
    OutOfBudget,
}

#[derive(PartialEq, Eq, PartialOrd, Ord)]
struct Node {
    // residual bits, deeper first on ties
    key: u64,
    depth: Reverse<u32>,
    lo: BinaryAngle,
}

/// Best-first search inside one cell for a point with `|f − target| ≤ δ`.
fn find_witness<T: LevelSetTarget + ?Sized>(
    f: &T,
    target: Complex64,
    lo: BinaryAngle,
    level: u32,
    delta: f64,
    budget: usize,
    max_level: u32,
) -> Search {
    let key_of = |lo: &BinaryAngle, level: u32| {
        let r = (f.value(&lo.add_pow2_neg(level + 1)) - target).norm();
        r.to_bits()
    };
    let mut heap = BinaryHeap::new();
    heap.push(Reverse(Node { key: key_of(&lo, level), depth: Reverse(level), lo }));
    let mut visited = 0;
    while let Some(Reverse(node)) = heap.pop() {
        let level = node.depth.0;
        let r = f64::from_bits(node.key);
        if r <= delta {
            return Search::Found(node.lo.add_pow2_neg(level + 1), r);
        }
        visited += 1;
        if visited > budget {
            return Search::OutOfBudget;
        }
        if level >= max_level {
            continue;
        }
        let left = node.lo;
        let right = node.lo.add_pow2_neg(level + 1);
        for child in [left, right] {
            if !cell_excluded(f, target, &child, level + 1, delta) {
                heap.push(Reverse(Node { key: key_of(&child, level + 1), depth: Reverse(level + 1), lo: child }));
            }
        }
    }
    // every branch pruned; cells cut off at max_level are not pruned, so
    // reaching here means the whole cell is excluded
    Search::Exhausted
}

/// Classifies the circle for `f = target` without requiring a non-empty
/// result.
pub fn classify_level_set<T: LevelSetTarget + ?Sized>(f: &T, target: Complex64, cfg: &CoverConfig) -> Result<LevelSetCover> {
    if !(cfg.delta > f.truncation_error()) {
        return Err(Error::Domain(format!(
            "tolerance {} must exceed the truncation error {}",
            cfg.delta,
            f.truncation_error()
        )));
    }
    let res = cfg.resolution_log2;
    if res + 8 > cfg.bits {
        return Err(Error::Domain(format!("resolution 2^{res} needs more than {} bits", cfg.bits)));
    }
    let period = f.period_log2().min(res);
    let max_level = cfg.bits.saturating_sub(8).min(res + 96);

    let mut arcs = vec![];
    let mut cells = vec![BinaryAngle::zero(cfg.bits)?];
    for level in period..=res {
        let flags = cfg.exec.map_slice(&cells, |lo| cell_excluded(f, target, lo, level, cfg.delta));
        let mut next = vec![];
        let mut survivors = vec![];
        for (lo, excluded) in cells.iter().zip(flags) {
            if excluded {
                arcs.push(CoverArc { lo: *lo, level, status: ArcStatus::Excluded, witness: None, residual: None });
            } else if level < res {
                next.push(*lo);
                next.push(lo.add_pow2_neg(level + 1));
            } else {
                survivors.push(*lo);
            }
        }
        if level == res {
            let found = cfg.exec.map_slice(&survivors, |lo| {
                find_witness(f, target, *lo, res, cfg.delta, cfg.witness_budget, max_level)
            });
            for (lo, s) in survivors.iter().zip(found) {
                let arc = match s {
                    Search::Found(w, r) => {
                        CoverArc { lo: *lo, level, status: ArcStatus::Candidate, witness: Some(w), residual: Some(r) }
                    }
                    Search::Exhausted => {
                        CoverArc { lo: *lo, level, status: ArcStatus::Excluded, witness: None, residual: None }
                    }
                    Search::OutOfBudget => {
                        CoverArc { lo: *lo, level, status: ArcStatus::Unresolved, witness: None, residual: None }
                    }
                };
                arcs.push(arc);
            }
        }
        cells = next;
    }
    arcs.sort_by_key(|a| a.lo);
    Ok(LevelSetCover {
        target,
        delta: cfg.delta,
        truncation: f.truncation(),
        truncation_error: f.truncation_error(),
        resolution_log2: res,
        period_log2: period,
        bits: cfg.bits,
        arcs,
    })
}

/// Cover of `γ⁻¹(i)`; fails when no candidate arc is found.
pub fn cover_level_set(series: &LacunarySeries, cfg: &CoverConfig) -> Result<LevelSetCover> {
    let bits_needed = series.required_bits();
    if bits_needed > cfg.bits {
        return Err(Error::PrecisionExhausted {
            shift: series.shift(series.truncation),
            needed: bits_needed,
            bits: cfg.bits,
        });
    }
    let cover = classify_level_set(series, Complex64::new(0.0, 1.0), cfg)?;
    if cover.count(ArcStatus::Candidate) == 0 {
        return Err(Error::LevelSetEmpty { delta: cfg.delta, truncation: series.truncation });
    }
    Ok(cover)
}

const TWO_PI_HI: (u64, u64) = (628_318_530_717_959, 100_000_000_000_000);

/// Whether an arc of `d` turns is shorter than `1/n!` radians, decided
/// exactly with `2π` replaced by a rational upper bound.
pub fn arc_shorter_than_inv_factorial(d: &BinaryAngle, n: u32) -> bool {
    let mut num = BigUint::from(0u32);
    for &l in d.limbs() {
        num = (num << 64u32) + BigUint::from(l);
    }
    let limb_bits = 64 * d.limbs().len() as u32;
    let mut fact = BigUint::from(1u32);
    for k in 2..=n {
        fact *= k;
    }
    // d = num / 2^limb_bits;  d · 2π · n! < 1
    num * TWO_PI_HI.0 * fact < (BigUint::from(TWO_PI_HI.1) << limb_bits)
}

pub fn inv_factorial(n: u32) -> f64 {
    (1..=n).fold(1.0, |acc, k| acc / k as f64)
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct Interval {
    #[serde(rename = "a_hex")]
    pub a: BinaryAngle,
    #[serde(rename = "b_hex")]
    pub b: BinaryAngle,
}

impl Interval {
    /// Counter-clockwise length in radians.
    pub fn length(&self) -> f64 {
        2.0 * PI * self.a.arc_to(&self.b)
    }

    /// Whether `z` lies on the counter-clockwise arc from `a` to `b`.
    pub fn contains(&self, z: &BinaryAngle) -> bool {
        z.wrapping_sub(&self.a) <= self.b.wrapping_sub(&self.a)
    }

    /// Chordal distance from `z` to the arc.
    pub fn chord_distance(&self, z: &BinaryAngle) -> f64 {
        if self.contains(z) {
            0.0
        } else {
            z.chord(&self.a).min(z.chord(&self.b))
        }
    }
}

/// Families `{[a_ε^n, b_ε^n] : ε ∈ {0,1}^n}` for `n = 1..depth`, each in
/// lexicographic order of `ε`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CantorTree {
    pub depth: usize,
    pub levels: Vec<Vec<Interval>>,
}

/// Outcome of the exact structural checks.
#[derive(Clone, Debug, Default, Serialize, Deserialize)]
pub struct TreeCheck {
    pub nesting: bool,
    pub ordering: bool,
    pub shrinkage: bool,
    pub violations: Vec<String>,
}

impl TreeCheck {
    pub fn ok(&self) -> bool {
        self.nesting && self.ordering && self.shrinkage
    }
}

struct Builder<'a> {
    offsets: &'a [BinaryAngle],
    depth: usize,
    choice: HashMap<(usize, usize, u32), Option<(usize, usize)>>,
    calls: usize,
}

const SPLIT_OPTIONS: usize = 16;
const BUILD_BUDGET: usize = 200_000;

impl Builder<'_> {
    fn shorter(&self, i: usize, j: usize, n: u32) -> bool {
        arc_shorter_than_inv_factorial(&self.offsets[j].wrapping_sub(&self.offsets[i]), n)
    }

    /// Candidate children `(ia, j), (k, ib)` of `[ia, ib]` at level `n`. The
    /// parent is cut at a witness gap and each child reaches as far from the
    /// cut as `1/n!` allows; widest separation first.
    fn options(&self, ia: usize, ib: usize, n: u32) -> Vec<(usize, usize)> {
        if ib < ia + 3 {
            return vec![];
        }
        let need = 2usize << (self.depth - n as usize).min(40);
        let inner = ia + 1..ib;
        let jmax = ia + inner.clone().take_while(|&k| self.shorter(ia, k, n)).count();
        let kmin = ib - inner.rev().take_while(|&k| self.shorter(k, ib, n)).count();
        let mut out: Vec<(BinaryAngle, usize, usize)> = vec![];
        for g in ia + 1..ib - 1 {
            let j = g.min(jmax);
            let k = (g + 1).max(kmin);
            if j == ia || k == ib || j + 1 - ia < need || ib + 1 - k < need {
                continue;
            }
            if out.last().is_some_and(|&(_, pj, pk)| pj == j && pk == k) {
                continue;
            }
            out.push((self.offsets[k].wrapping_sub(&self.offsets[j]), j, k));
        }
        out.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)));
        out.into_iter().take(SPLIT_OPTIONS).map(|(_, j, k)| (j, k)).collect()
    }

    /// Whether `[ia, ib]` can be split through level `depth`, starting with
    /// its children at level `n`.
    fn feasible(&mut self, ia: usize, ib: usize, n: u32) -> bool {
        if n as usize > self.depth {
            return true;
        }
        if let Some(c) = self.choice.get(&(ia, ib, n)) {
            return c.is_some();
        }
        self.calls += 1;
        if self.calls > BUILD_BUDGET {
            return false;
        }
        let mut found = None;
        for (j, k) in self.options(ia, ib, n) {
            if self.feasible(ia, j, n + 1) && self.feasible(k, ib, n + 1) {
                found = Some((j, k));
                break;
            }
        }
        self.choice.insert((ia, ib, n), found);
        found.is_some()
    }

    fn levels(&self, n_total: usize) -> Vec<Vec<(usize, usize)>> {
        let mut levels = vec![];
        let mut parents = vec![(0usize, n_total - 1)];
        for n in 1..=self.depth as u32 {
            let mut next = Vec::with_capacity(parents.len() * 2);
            for &(ia, ib) in &parents {
                let (j, k) = self.choice[&(ia, ib, n)].expect("feasible split");
                next.push((ia, j));
                next.push((k, ib));
            }
            levels.push(next.clone());
            parents = next;
        }
        levels
    }
}

fn try_build(ws: &[BinaryAngle], starts: &[usize], depth: usize) -> Option<CantorTree> {
    let n = ws.len();
    for &s in starts {
        let origin = ws[s];
        let offsets: Vec<BinaryAngle> = (0..n).map(|i| ws[(s + i) % n].wrapping_sub(&origin)).collect();
        let mut b = Builder { offsets: &offsets, depth, choice: HashMap::new(), calls: 0 };
        if b.feasible(0, n - 1, 1) {
            let at = |i: usize| ws[(s + i) % n];
            let levels = b
                .levels(n)
                .into_iter()
                .map(|lv| lv.into_iter().map(|(i, j)| Interval { a: at(i), b: at(j) }).collect())
                .collect();
            return Some(CantorTree { depth, levels });
        }
    }
    None
}

const ORIGIN_ATTEMPTS: usize = 8;

/// Builds the tree from the cover's witnesses. The seed picks the origin
/// around which the circle is unrolled; origins are tried in seeded order
/// until one reaches the requested depth.
pub fn build_cantor(cover: &LevelSetCover, depth: usize, seed: u64) -> Result<CantorTree> {
    if depth == 0 {
        return Err(Error::Domain("tree depth must be at least 1".into()));
    }
    let ws = cover.witnesses();
    if ws.is_empty() {
        return Err(Error::LevelSetEmpty { delta: cover.delta, truncation: cover.truncation });
    }
    let by_count = (usize::BITS - 1 - ws.len().leading_zeros()) as usize;
    if ws.len() < 1 << (depth + 1) {
        return Err(Error::DepthUnreachable { requested: depth, feasible: by_count.saturating_sub(1) });
    }
    let mut starts: Vec<usize> = (0..ws.len()).collect();
    starts.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    starts.truncate(ORIGIN_ATTEMPTS);
    if let Some(t) = try_build(&ws, &starts, depth) {
        return Ok(t);
    }
    let feasible = (1..depth).rev().find(|&d| try_build(&ws, &starts, d).is_some()).unwrap_or(0);
    Err(Error::DepthUnreachable { requested: depth, feasible })
}

impl CantorTree {
    pub fn deepest(&self) -> &[Interval] {
        self.levels.last().map(|v| v.as_slice()).unwrap_or(&[])
    }

    fn origin(&self) -> BinaryAngle {
        self.levels[0][0].a
    }

    /// The same tree cut at a smaller depth.
    pub fn truncated(&self, depth: usize) -> Self {
        let depth = depth.min(self.depth);
        Self { depth, levels: self.levels[..depth].to_vec() }
    }

    /// Endpoints of the deepest intervals, in order. Every one of them
    /// lies in `K` because each interval keeps its endpoints in all deeper levels.
    pub fn endpoints(&self) -> Vec<BinaryAngle> {
        self.deepest().iter().flat_map(|iv| [iv.a, iv.b]).collect()
    }

    /// Exact check of nesting, ordering and shrinkage.
    pub fn check(&self) -> TreeCheck {
        let mut c = TreeCheck { nesting: true, ordering: true, shrinkage: true, violations: vec![] };
        if self.levels.len() != self.depth || self.depth == 0 {
            c.nesting = false;
            c.violations.push(format!("expected {} levels, found {}", self.depth, self.levels.len()));
            return c;
        }
        let origin = self.origin();
        for (i, lv) in self.levels.iter().enumerate() {
            let n = i + 1;
            if lv.len() != 1 << n {
                c.nesting = false;
                c.violations.push(format!("level {n} has {} intervals", lv.len()));
                continue;
            }
            if i > 0 {
                for (e, parent) in self.levels[i - 1].iter().enumerate() {
                    if lv[2 * e].a != parent.a || lv[2 * e + 1].b != parent.b {
                        c.nesting = false;
                        c.violations.push(format!("level {n}, parent {e}: endpoints not inherited"));
                    }
                }
            }
            let seq: Vec<BinaryAngle> = lv.iter().flat_map(|iv| [iv.a, iv.b]).map(|x| x.wrapping_sub(&origin)).collect();
            if let Some(p) = seq.windows(2).position(|w| w[0] >= w[1]) {
                c.ordering = false;
                c.violations.push(format!("level {n}: endpoints out of order at position {p}"));
            }
            for (e, iv) in lv.iter().enumerate() {
                if !arc_shorter_than_inv_factorial(&iv.b.wrapping_sub(&iv.a), n as u32) {
                    c.shrinkage = false;
                    c.violations.push(format!("level {n}, interval {e}: length {:e} ≥ 1/{n}!", iv.length()));
                }
            }
        }
        c
    }

    /// Total length (radians) of the level-`n` intervals.
    pub fn level_measure(&self, n: usize) -> f64 {
        self.levels[n - 1].iter().map(|iv| iv.length()).sum()
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    /// Parses and validates a tree.
    pub fn from_json(s: &str) -> Result<Self> {
        let t: Self = serde_json::from_str(s)?;
        let c = t.check();
        if !c.ok() {
            return Err(Error::Parse(format!("invalid tree: {}", c.violations.join("; "))));
        }
        Ok(t)
    }
}

/// Chordal distance from `z` to `K`, bracketed by the depth-`d`
/// representation: `lower` is the distance to the union of the deepest
/// intervals, `upper` the distance to the nearest endpoint (a point of `K`).
pub fn dist_to_k(z: &BinaryAngle, tree: &CantorTree) -> (f64, f64) {
    let ivs = tree.deepest();
    let origin = tree.origin();
    let oz = z.wrapping_sub(&origin);
    let idx = ivs.partition_point(|iv| iv.a.wrapping_sub(&origin) <= oz);
    let last = ivs.len() - 1;
    let mut lower = f64::INFINITY;
    let mut upper = f64::INFINITY;
    for i in [idx.saturating_sub(1), idx.min(last), 0, last] {
        let iv = &ivs[i];
        lower = lower.min(iv.chord_distance(z));
        upper = upper.min(z.chord(&iv.a)).min(z.chord(&iv.b));
    }
    (lower, upper)
}

/// One complementary arc of the depth-`d` representation.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct GapRow {
    /// Level at which the gap opens; 0 for the outer gap.
    pub level: usize,
    pub index: usize,
    /// Arc length in radians.
    pub length: f64,
    /// `2^α L^{1−α}/(1−α)`.
    pub closed_form: f64,
    /// Graded quadrature of the flat integrand `dist^{-α}` on a segment.
    pub flat_quadrature: f64,
    /// Graded quadrature with the chordal distance to the gap ends.
    pub chordal: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IntegrabilityReport {
    pub alpha: f64,
    pub depth: usize,
    pub gaps: Vec<GapRow>,
    pub total_closed_form: f64,
    pub total_chordal: f64,
    /// `Σ_{n=2}^{k} 2ⁿ/((n−1)!)^{1−α}` for `k = 2..=depth`.
    pub comparison_series: Vec<f64>,
    /// Total length of the level-`n` intervals, `n = 1..=depth`.
    pub level_measure: Vec<f64>,
}

const GRADED_LEVELS: u32 = 48;

/// `2 ∫_0^{L/2} s^{-α} ds` by graded quadrature.
pub fn flat_gap_integral(len: f64, alpha: f64, rule: &Rule) -> f64 {
    let (s, rest) = rule.graded(len / 2.0, GRADED_LEVELS, |u| u.powf(-alpha));
    2.0 * (s + rest.powf(1.0 - alpha) / (1.0 - alpha))
}

/// `2 ∫_0^{L/2} (2 sin(u/2))^{-α} du`: the gap integral with chordal
/// distance to the nearer end of the gap.
pub fn chordal_gap_integral(len: f64, alpha: f64, rule: &Rule) -> f64 {
    let (s, rest) = rule.graded(len / 2.0, GRADED_LEVELS, |u| (2.0 * (u / 2.0).sin()).powf(-alpha));
    // 2 sin(u/2) = u to relative 1e-30 on the innermost piece
    2.0 * (s + rest.powf(1.0 - alpha) / (1.0 - alpha))
}

pub fn gap_closed_form(len: f64, alpha: f64) -> f64 {
    2f64.powf(alpha) * len.powf(1.0 - alpha) / (1.0 - alpha)
}

pub fn integrability_report(tree: &CantorTree, alpha: f64) -> Result<IntegrabilityReport> {
    if alpha >= 1.0 {
        return Err(Error::Unsupported(format!("exponent {alpha} ≥ 1 is not integrable")));
    }
    if !(alpha > 0.0) {
        return Err(Error::Domain(format!("exponent must be positive, got {alpha}")));
    }
    let rule = Rule::new(16);
    let row = |level: usize, index: usize, from: &BinaryAngle, to: &BinaryAngle| {
        let length = 2.0 * PI * from.arc_to(to);
        GapRow {
            level,
            index,
            length,
            closed_form: gap_closed_form(length, alpha),
            flat_quadrature: flat_gap_integral(length, alpha, &rule),
            chordal: chordal_gap_integral(length, alpha, &rule),
        }
    };
    let l1 = &tree.levels[0];
    let mut gaps = vec![row(0, 0, &l1[1].b, &l1[0].a)];
    for (i, lv) in tree.levels.iter().enumerate() {
        for e in 0..lv.len() / 2 {
            gaps.push(row(i + 1, e, &lv[2 * e].b, &lv[2 * e + 1].a));
        }
    }
    let total_closed_form = gaps.iter().map(|g| g.closed_form).sum();
    let total_chordal = gaps.iter().map(|g| g.chordal).sum();
    let mut comparison_series = vec![];
    let mut acc = 0.0;
    for n in 2..=tree.depth as u32 {
        acc += 2f64.powi(n as i32) * inv_factorial(n - 1).powf(1.0 - alpha);
        comparison_series.push(acc);
    }
    let level_measure = (1..=tree.depth).map(|n| tree.level_measure(n)).collect();
    Ok(IntegrabilityReport {
        alpha,
        depth: tree.depth,
        gaps,
        total_closed_form,
        total_chordal,
        comparison_series,
        level_measure,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::sync::OnceLock;

    fn i() -> Complex64 {
        Complex64::new(0.0, 1.0)
    }

    fn small_cfg() -> CoverConfig {
        CoverConfig { resolution_log2: 16, ..CoverConfig::default() }
    }

    fn standard_cover() -> &'static LevelSetCover {
        static C: OnceLock<LevelSetCover> = OnceLock::new();
        C.get_or_init(|| cover_level_set(&LacunarySeries::default(), &CoverConfig::default()).unwrap())
    }

    #[test]
    fn constant_target_is_excluded_everywhere() {
        let c = classify_level_set(&ConstantTarget(Complex64::new(1.0, 0.0)), i(), &small_cfg()).unwrap();
        assert_eq!(c.count(ArcStatus::Candidate), 0);
        assert_eq!(c.count(ArcStatus::Unresolved), 0);
        assert!((c.measure(ArcStatus::Excluded) - 1.0).abs() < 1e-15);
    }

    #[test]
    fn identity_target_has_one_candidate_run_at_quarter() {
        let f = LaurentPoly::monomial(1, Complex64::new(1.0, 0.0));
        let cfg = small_cfg();
        let c = classify_level_set(&f, i(), &cfg).unwrap();
        let cands: Vec<_> = c.all_arcs().into_iter().filter(|a| a.status != ArcStatus::Excluded).collect();
        assert!(!cands.is_empty());
        let cell = 2f64.powi(-(cfg.resolution_log2 as i32));
        // a single contiguous run
        for w in cands.windows(2) {
            assert_eq!(w[0].lo.add_pow2_neg(cfg.resolution_log2), w[1].lo);
        }
        let lo = cands[0].lo.to_f64();
        let hi = cands.last().unwrap().lo.to_f64() + cell;
        assert!(lo <= 0.25 && 0.25 <= hi);
        // δ = 1e-3 on |z − i| is about 1.6e-4 turns either side
        assert!(hi - lo < 4e-4);
        for a in cands.iter().filter(|a| a.status == ArcStatus::Candidate) {
            assert!((f.value(&a.witness.unwrap()) - i()).norm() <= cfg.delta);
        }
    }

    #[test]
    fn delta_must_exceed_tail() {
        let s = LacunarySeries::standard(3);
        let cfg = CoverConfig { delta: s.tail() * 0.5, ..small_cfg() };
        assert!(matches!(cover_level_set(&s, &cfg), Err(Error::Domain(_))));
    }

    #[test]
    fn empty_level_set_is_an_error_for_tiny_tolerance_on_constant() {
        let c = classify_level_set(&ConstantTarget(Complex64::new(1.0, 0.0)), i(), &small_cfg()).unwrap();
        assert!(matches!(build_cantor(&c, 1, 0), Err(Error::LevelSetEmpty { .. })));
    }

    #[test]
    fn standard_cover_is_nonempty_with_valid_witnesses() {
        let c = standard_cover();
        assert!(c.count(ArcStatus::Candidate) > 0);
        let s = LacunarySeries::default();
        for a in c.arcs.iter().filter(|a| a.status == ArcStatus::Candidate) {
            let w = a.witness.unwrap();
            assert!((s.gamma_unchecked(&w) - i()).norm() <= c.delta);
            assert!(w >= a.lo && w <= a.lo.add_pow2_neg(a.level));
        }
    }

    #[test]
    fn excluded_arcs_survive_dense_sampling() {
        let c = standard_cover();
        let s = LacunarySeries::default();
        let excluded: Vec<_> = c.arcs.iter().filter(|a| a.status == ArcStatus::Excluded).collect();
        let step = (excluded.len() / 40).max(1);
        for a in excluded.iter().step_by(step) {
            for k in 0..1000u64 {
                let off = BinaryAngle::from_f64((k as f64 + 0.5) / 1000.0 * a.length(), c.bits).unwrap();
                let t = a.lo.wrapping_add(&off);
                assert!((s.gamma_unchecked(&t) - i()).norm() > c.delta);
            }
        }
    }

    fn standard_tree(depth: usize) -> CantorTree {
        build_cantor(standard_cover(), depth, 7).unwrap()
    }

    #[test]
    fn depth_one_has_two_short_intervals() {
        let t = standard_tree(1);
        assert_eq!(t.levels[0].len(), 2);
        assert!(t.check().ok());
        for iv in &t.levels[0] {
            assert!(iv.length() < 1.0);
        }
    }

    #[test]
    fn depth_eight_satisfies_structure() {
        let t = standard_tree(8);
        let c = t.check();
        assert!(c.ok(), "{:?}", c.violations);
        assert_eq!(t.deepest().len(), 256);
        for iv in t.deepest() {
            assert!(iv.length() < 1.0 / 40320.0);
        }
        for n in 1..=8 {
            assert!(t.level_measure(n) < 2f64.powi(n as i32) * inv_factorial(n as u32));
        }
    }

    #[test]
    fn seed_is_deterministic() {
        assert_eq!(standard_tree(4), standard_tree(4));
    }

    #[test]
    fn broken_trees_are_caught() {
        let mut t = standard_tree(3);
        t.levels[2][0].a = t.levels[2][0].a.add_pow2_neg(200);
        assert!(!t.check().nesting);
        let mut t = standard_tree(3);
        t.levels[1].swap(0, 1);
        assert!(!t.check().ok());
        assert!(CantorTree::from_json(&t.to_json().unwrap()).is_err());
    }

    #[test]
    fn json_round_trip() {
        let t = standard_tree(3);
        let s = t.to_json().unwrap();
        assert!(s.contains("\"a_hex\""));
        assert_eq!(CantorTree::from_json(&s).unwrap(), t);
    }

    #[test]
    fn distance_brackets() {
        let t = standard_tree(8);
        let d = inv_factorial(8);
        for iv in t.deepest().iter().step_by(17) {
            let (lo, hi) = dist_to_k(&iv.a, &t);
            assert_eq!(lo, 0.0);
            assert!(hi <= 1e-15);
            let mid = iv.a.wrapping_add(&BinaryAngle::from_f64(iv.a.arc_to(&iv.b) / 2.0, 256).unwrap());
            let (lo, hi) = dist_to_k(&mid, &t);
            assert_eq!(lo, 0.0);
            assert!(hi < d);
        }
        // brute force against all endpoints at an arbitrary point
        let z = BinaryAngle::from_ratio(3, 7, 256).unwrap();
        let (lo, hi) = dist_to_k(&z, &t);
        let brute_hi = t.endpoints().iter().map(|e| e.chord(&z)).fold(f64::INFINITY, f64::min);
        let brute_lo = t.deepest().iter().map(|iv| iv.chord_distance(&z)).fold(f64::INFINITY, f64::min);
        assert_eq!(hi, brute_hi);
        assert_eq!(lo, brute_lo);
        assert!(hi - lo <= d);
    }

    #[test]
    fn antipode_of_small_tree_is_at_distance_two() {
        let a = BinaryAngle::from_ratio(1, 10, 256).unwrap();
        let small = |k: u64| a.wrapping_add(&BinaryAngle::from_dyadic(k, 40, 256).unwrap());
        let t = CantorTree { depth: 1, levels: vec![vec![Interval { a: small(0), b: small(1) }, Interval { a: small(2), b: small(3) }]] };
        assert!(t.check().ok());
        let anti = a.wrapping_add(&BinaryAngle::from_dyadic(1, 1, 256).unwrap());
        let (lo, hi) = dist_to_k(&anti, &t);
        assert!((lo - 2.0).abs() < 1e-9 && (hi - 2.0).abs() < 1e-9);
    }

    #[test]
    fn coarse_resolution_cover_is_nonempty() {
        let cfg = CoverConfig { resolution_log2: 20, ..CoverConfig::default() };
        let c = cover_level_set(&LacunarySeries::default(), &cfg).unwrap();
        assert!(c.count(ArcStatus::Candidate) > 0);
        assert!(c.arcs.iter().all(|a| a.level <= 20));
    }

    #[test]
    fn brackets_tighten_with_depth() {
        let t8 = standard_tree(8);
        let zs: Vec<_> = (0..50u64).map(|k| BinaryAngle::from_ratio(k * 7919 + 1, 400_009, 256).unwrap()).collect();
        for d in 2..8 {
            let (a, b) = (t8.truncated(d), t8.truncated(d + 1));
            for z in zs.iter().chain(t8.endpoints().iter().step_by(31)) {
                let (l0, u0) = dist_to_k(z, &a);
                let (l1, u1) = dist_to_k(z, &b);
                assert!(u1 - l1 <= u0 - l0 + 1e-15);
                assert!(l1 >= l0 - 1e-15 && u1 <= u0 + 1e-15);
            }
        }
    }

    #[test]
    fn gap_closed_form_on_flat_geometry() {
        let rule = Rule::new(16);
        for alpha in [1.0 / 3.0, 2.0 / 3.0, 0.1, 0.9] {
            for len in [1e-6, 0.01, 1.0, 3.0] {
                let q = flat_gap_integral(len, alpha, &rule);
                let e = gap_closed_form(len, alpha);
                assert!((q - e).abs() <= 1e-12 * e, "alpha={alpha} len={len}: {q} vs {e}");
            }
        }
        // chordal distance is shorter than arc length, so the integral is larger
        assert!(chordal_gap_integral(3.0, 0.5, &rule) > gap_closed_form(3.0, 0.5));
        assert!((chordal_gap_integral(1e-4, 0.5, &rule) / gap_closed_form(1e-4, 0.5) - 1.0).abs() < 1e-8);
    }

    #[test]
    fn integrability_report_shapes() {
        let t = standard_tree(6);
        let r = integrability_report(&t, 2.0 / 3.0).unwrap();
        assert_eq!(r.gaps.len(), 64);
        assert!(r.total_closed_form.is_finite() && r.total_closed_form > 0.0);
        assert_eq!(r.comparison_series.len(), 5);
        // α → 0: integrand → 1, total → gap measure
        let r0 = integrability_report(&t, 1e-12).unwrap();
        let gap_measure = 2.0 * PI - t.level_measure(6);
        assert!((r0.total_closed_form - gap_measure).abs() < 1e-9);
        assert!(matches!(integrability_report(&t, 1.0), Err(Error::Unsupported(_))));
    }
}
