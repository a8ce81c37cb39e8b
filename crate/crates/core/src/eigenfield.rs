//! The functions `g`, `g₁`, `h`, the eigenvector field `h_λ(w) = h(w)/(λ − w)`
//! and numerical checks of the identities they satisfy on `K`:
//!
//! * `⟨h_λ, g⟩ = 1`, `⟨h_λ, g₁⟩ = λ⁻¹` and `⟨h, g₁⟩ = 0`,
//! * `w·h_λ = λh_λ − h` and `w⁻¹h_λ = λ⁻¹h_λ + λ⁻¹w⁻¹h` pointwise,
//! * continuity of `λ ↦ h_λ` in `L₂`.
//!
//! The exponent pair `(−1/3, +1/3)` is fixed.

use std::f64::consts::PI;
use std::io::Write;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::angle::BinaryAngle;
use crate::cantor::{dist_to_k, inv_factorial, CantorTree};
use crate::conjugate::unit_difference;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::grid::Grid;
use crate::lacunary::{tail_bound, LacunarySeries};
use crate::quad::Rule;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Exponent of the distance factor in `h` (and, negated, in `g`).
pub const ALPHA: f64 = 1.0 / 3.0;

/// `g`, `g₁` and `h` for a fixed set `K` and truncation of `ψ`.
#[derive(Clone, Debug)]
pub struct ConstructedFunctions {
    pub tree: CantorTree,
    pub series: LacunarySeries,
}

/// Values at one point with absolute error bars.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FunctionValues {
    pub g: Complex64,
    pub g1: Complex64,
    pub h: Complex64,
    pub psi: Complex64,
    pub g_bar: f64,
    pub h_bar: f64,
    pub psi_bar: f64,
    pub dist_lower: f64,
    pub dist_upper: f64,
}

impl ConstructedFunctions {
    pub fn new(tree: CantorTree, series: LacunarySeries) -> Self {
        Self { tree, series }
    }

    pub fn dist(&self, w: &BinaryAngle) -> (f64, f64) {
        dist_to_k(w, &self.tree)
    }

    pub fn psi(&self, w: &BinaryAngle) -> Complex64 {
        self.series.psi_unchecked(w)
    }

    /// `h(w) = ψ(w)·dist(w, K)^{1/3}`, with the distance taken as the upper
    /// end of the bracket. In the gaps of the representation the bracket is
    /// a single point; inside a deepest interval this only overestimates.
    pub fn h(&self, w: &BinaryAngle) -> Complex64 {
        self.psi(w) * self.dist(w).1.powf(ALPHA)
    }

    /// `h_λ(w) = h(w)/(λ − w)` for `λ` on the circle.
    pub fn h_lambda(&self, lambda: &BinaryAngle, w: &BinaryAngle) -> Complex64 {
        self.h(w) / unit_difference(lambda, w)
    }

    /// `g`, `g₁`, `h`, `ψ` at `w`. Fails with [`Error::SingularPoint`] when
    /// `w` lies in a deepest interval, where `g` cannot be bounded; use
    /// [`Self::eval_h`] there.
    pub fn eval(&self, w: &BinaryAngle) -> Result<FunctionValues> {
        let (lo, up) = self.dist(w);
        if !(lo > 0.0) {
            return Err(Error::SingularPoint { lower: lo, upper: up });
        }
        let (psi, psi_bar) = self.series.psi_eval(w)?;
        let g1 = -I * lo.powf(-ALPHA);
        let g = w.to_complex().conj() * g1;
        let g_bar = (lo.powf(-ALPHA) - up.powf(-ALPHA)).abs() + 4.0 * f64::EPSILON * g1.norm();
        let (h, h_bar) = self.eval_h_inner(psi, psi_bar, lo, up);
        Ok(FunctionValues { g, g1, h, psi, g_bar, h_bar, psi_bar, dist_lower: lo, dist_upper: up })
    }

    /// `h(w)` and an error bar; defined everywhere.
    pub fn eval_h(&self, w: &BinaryAngle) -> Result<(Complex64, f64)> {
        let (lo, up) = self.dist(w);
        let (psi, psi_bar) = self.series.psi_eval(w)?;
        Ok(self.eval_h_inner(psi, psi_bar, lo, up))
    }

    fn eval_h_inner(&self, psi: Complex64, psi_bar: f64, lo: f64, up: f64) -> (Complex64, f64) {
        let h = psi * up.powf(ALPHA);
        let bar = psi.norm() * (up.powf(ALPHA) - lo.powf(ALPHA)) + psi_bar * up.powf(ALPHA) + 4.0 * f64::EPSILON * h.norm();
        (h, bar)
    }
}

/// The three pairings checked on `K`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Identity {
    /// `⟨h_λ, g⟩ = 1`
    HlG,
    /// `⟨h_λ, g₁⟩ = λ⁻¹`
    HlG1,
    /// `⟨h, g₁⟩ = 0`
    HG1,
}

impl Identity {
    pub const ALL: [Identity; 3] = [Identity::HlG, Identity::HlG1, Identity::HG1];

    pub fn label(self) -> &'static str {
        match self {
            Identity::HlG => "hl_g=1",
            Identity::HlG1 => "hl_g1=1/lambda",
            Identity::HG1 => "h_g1=0",
        }
    }

    pub fn target(self, lambda: &BinaryAngle) -> Complex64 {
        match self {
            Identity::HlG => Complex64::new(1.0, 0.0),
            Identity::HlG1 => lambda.to_complex().conj(),
            Identity::HG1 => Complex64::new(0.0, 0.0),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathKind {
    Analytic,
    Direct,
}

/// Which paths [`verify_identity_m02`] runs.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PathSelection {
    Analytic,
    Direct,
    Both,
}

impl std::str::FromStr for PathSelection {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "analytic" => Ok(Self::Analytic),
            "direct" => Ok(Self::Direct),
            "both" => Ok(Self::Both),
            _ => Err(Error::Parse(format!("unknown path {s:?}"))),
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct IdentityRecord {
    pub lambda: BinaryAngle,
    pub identity: Identity,
    pub path: PathKind,
    pub target: Complex64,
    pub measured: Complex64,
    pub residual: f64,
    pub error_bar: f64,
}

impl IdentityRecord {
    fn new(lambda: BinaryAngle, identity: Identity, path: PathKind, measured: Complex64, error_bar: f64) -> Self {
        let target = identity.target(&lambda);
        Self { lambda, identity, path, target, measured, residual: (measured - target).norm(), error_bar }
    }
}

/// Analytic path: the pairings reduce to negative parts of `ψ`, which are
/// read off the series:
/// `⟨h_λ, g⟩ = iγ(λ⁻¹)`, `⟨h_λ, g₁⟩ = iλ⁻¹γ(λ⁻¹)`, `⟨h, g₁⟩ = i⟨ψ, 1⟩ = 0`.
pub fn verify_analytic(series: &LacunarySeries, lambda: &BinaryAngle) -> Result<[IdentityRecord; 3]> {
    let (g_inv, bar) = series.gamma_eval(&lambda.conj())?;
    let inv = lambda.to_complex().conj();
    let p = PathKind::Analytic;
    Ok([
        IdentityRecord::new(*lambda, Identity::HlG, p, I * g_inv, bar),
        IdentityRecord::new(*lambda, Identity::HlG1, p, I * inv * g_inv, bar + 4.0 * f64::EPSILON),
        IdentityRecord::new(*lambda, Identity::HG1, p, I * series.psi_mean(), 0.0),
    ])
}

/// Mesh and truncation for the direct path.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct DirectConfig {
    /// Terms of `ψ` integrated by quadrature; the rest are bounded.
    pub terms: usize,
    /// Gauss–Legendre points per panel; a coarser rule gives the estimate.
    pub gauss: usize,
    pub coarse_gauss: usize,
    /// Target for the analytic bound on the excluded window around `λ`.
    pub window_tolerance: f64,
    /// Refuse meshes with more nodes than this.
    pub max_nodes: usize,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for DirectConfig {
    fn default() -> Self {
        Self { terms: 2, gauss: 16, coarse_gauss: 10, window_tolerance: 1e-4, max_nodes: 1 << 25, exec: Execution::default() }
    }
}

/// Panel edges on `[start, end]`: doubling from `start` until panels reach
/// `cap`, then uniform of length at most `cap`.
fn graded_edges(start: f64, end: f64, cap: f64) -> Vec<f64> {
    let mut edges = vec![start];
    let mut x = start;
    while x < end {
        let step = x.min(cap);
        x = (x + step).min(end);
        edges.push(x);
    }
    edges
}

/// Direct path: quadrature of the pairings over the circle minus a window
/// `|θ| < ε` around `λ`, with `ψ` truncated to `cfg.terms` terms.
///
/// The pairing integrands `h_λ·ḡ`, `h_λ·ḡ₁`, `h·ḡ₁` have their distance
/// factors cancel identically, leaving `iwψ(w)/(λ−w)`, `iψ(w)/(λ−w)` and
/// `iψ(w)`. Each panel is mirrored about `λ`, so the principal value of the
/// pole is taken exactly. The error bar sums the window bound (Lipschitz
/// constant of the truncated `ψ`), the `ψ` tail (each dropped term moves a
/// pairing by at most its coefficient), the difference between the fine and
/// coarse rules, and phase rounding.
pub fn verify_direct(series: &LacunarySeries, depth: usize, lambda: &BinaryAngle, cfg: &DirectConfig) -> Result<[IdentityRecord; 3]> {
    let nd = cfg.terms.clamp(1, series.truncation);
    let coeffs: Vec<f64> = (1..=nd).map(|n| series.coefficient(n)).collect();
    let freqs: Vec<f64> = (1..=nd).map(|n| 2f64.powi(series.shift(n) as i32)).collect();
    let lam_pows: Vec<Complex64> = (1..=nd).map(|n| lambda.window_complex(series.shift(n))).collect();
    let lip: f64 = coeffs.iter().zip(&freqs).map(|(c, k)| 2.0 * c * k).sum();
    let top = *freqs.last().unwrap();
    let eps = (cfg.window_tolerance * PI / lip).min(inv_factorial(depth as u32));
    let cap = 2.0 * PI / top;
    let edges = graded_edges(eps, PI, cap);
    let panels = edges.len() - 1;
    let required = 2 * panels * (cfg.gauss + cfg.coarse_gauss);
    if required > cfg.max_nodes {
        return Err(Error::AccuracyUnattainable { required_nodes: required });
    }

    let psi_at = |theta: f64| -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        for ((c, k), lp) in coeffs.iter().zip(&freqs).zip(&lam_pows) {
            let z = lp * Complex64::cis(k * theta);
            acc += (z + z.conj()) * c;
        }
        acc
    };
    let lam_bar = lambda.to_complex().conj();
    // integrands per unit dθ/2π, both sides of λ summed
    let eval = |theta: f64| -> [Complex64; 3] {
        let mut out = [Complex64::new(0.0, 0.0); 3];
        for s in [theta, -theta] {
            let e = Complex64::cis(s);
            // 1 − e^{is} = −2i sin(s/2) e^{is/2}
            let one_minus = -2.0 * I * (s / 2.0).sin() * Complex64::cis(s / 2.0);
            let p = psi_at(s);
            out[0] += I * e * p / one_minus;
            out[1] += I * lam_bar * p / one_minus;
            out[2] += I * p;
        }
        out
    };
    let fine = Rule::new(cfg.gauss);
    let coarse = Rule::new(cfg.coarse_gauss);
    let per_panel = cfg.exec.map_range(panels, |j| {
        let (lo, hi) = (edges[j], edges[j + 1]);
        let mut f = [Complex64::new(0.0, 0.0); 3];
        let mut c = [Complex64::new(0.0, 0.0); 3];
        let mut mag = 0.0;
        for (x, w) in fine.nodes(lo, hi) {
            let v = eval(x);
            for i in 0..3 {
                f[i] += v[i] * w;
            }
            mag += (v[0].norm() + v[1].norm()) * w;
        }
        for (x, w) in coarse.nodes(lo, hi) {
            let v = eval(x);
            for i in 0..3 {
                c[i] += v[i] * w;
            }
        }
        (f, c, mag)
    });
    let mut fine_sum = [Complex64::new(0.0, 0.0); 3];
    let mut coarse_sum = [Complex64::new(0.0, 0.0); 3];
    let mut mag = 0.0;
    for (f, c, m) in per_panel {
        for i in 0..3 {
            fine_sum[i] += f[i];
            coarse_sum[i] += c[i];
        }
        mag += m;
    }
    let scale = 1.0 / (2.0 * PI);
    let psi_l = psi_at(0.0);
    // constant part of ψ inside the window, integrated exactly:
    // Re e^{iθ}/(1−e^{iθ}) = −1/2, Re 1/(1−e^{iθ}) = 1/2, odd parts cancel
    let window_exact = [I * psi_l * (-eps / (2.0 * PI)), I * lam_bar * psi_l * (eps / (2.0 * PI)), I * psi_l * (eps / PI)];
    let window_bound = [lip * eps / PI, lip * eps / PI, lip * eps * eps / PI];
    let tail = tail_bound(series.a_base, nd);
    let tail_bound = [tail, tail, 2.0 * tail * eps / PI];
    let rounding = lip * PI * f64::EPSILON + 64.0 * f64::EPSILON * mag * scale;
    let mut out = Vec::with_capacity(3);
    for (i, id) in Identity::ALL.into_iter().enumerate() {
        let value = fine_sum[i] * scale + window_exact[i];
        let quad = ((fine_sum[i] - coarse_sum[i]) * scale).norm();
        let bar = quad + window_bound[i] + tail_bound[i] + rounding;
        out.push(IdentityRecord::new(*lambda, id, PathKind::Direct, value, bar));
    }
    Ok(out.try_into().expect("three identities"))
}

/// Runs the selected paths at each `λ`.
pub fn verify_identity_m02(
    cf: &ConstructedFunctions,
    lambdas: &[BinaryAngle],
    path: PathSelection,
    cfg: &DirectConfig,
) -> Result<Vec<IdentityRecord>> {
    let mut out = vec![];
    for lambda in lambdas {
        if matches!(path, PathSelection::Analytic | PathSelection::Both) {
            out.extend(verify_analytic(&cf.series, lambda)?);
        }
        if matches!(path, PathSelection::Direct | PathSelection::Both) {
            out.extend(verify_direct(&cf.series, cf.tree.depth, lambda, cfg)?);
        }
    }
    Ok(out)
}

/// CSV with columns
/// `lambda_hex,target,measured_re,measured_im,residual,error_bar,path,target_re,target_im`.
pub fn write_identity_csv<W: Write>(records: &[IdentityRecord], w: W) -> Result<()> {
    let mut wr = csv::Writer::from_writer(w);
    wr.write_record([
        "lambda_hex", "target", "measured_re", "measured_im", "residual", "error_bar", "path", "target_re", "target_im",
    ])?;
    for r in records {
        let path = match r.path {
            PathKind::Analytic => "analytic",
            PathKind::Direct => "direct",
        };
        wr.write_record([
            r.lambda.to_hex(),
            r.identity.label().to_string(),
            format!("{:e}", r.measured.re),
            format!("{:e}", r.measured.im),
            format!("{:e}", r.residual),
            format!("{:e}", r.error_bar),
            path.to_string(),
            format!("{:e}", r.target.re),
            format!("{:e}", r.target.im),
        ])?;
    }
    wr.flush()?;
    Ok(())
}

/// Residuals of `Uh_λ = λh_λ − h` and `U⁻¹h_λ = λ⁻¹h_λ + λ⁻¹U⁻¹h`, that is
/// `w·h_λ = λh_λ − h` and `w⁻¹h_λ = λ⁻¹h_λ + λ⁻¹w⁻¹h`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ShiftResidual {
    pub forward: f64,
    pub inverse: f64,
}

/// Largest relative residual of the two pointwise identities over the
/// samples `(w, h(w))`. `λ` may be any nonzero complex number.
pub fn verify_shift_identity(lambda: Complex64, samples: &[(Complex64, Complex64)]) -> ShiftResidual {
    let mut r = ShiftResidual { forward: 0.0, inverse: 0.0 };
    let li = 1.0 / lambda;
    for &(w, h) in samples {
        let hl = h / (lambda - w);
        let lhs = w * hl;
        let rhs = lambda * hl - h;
        let scale = (lambda * hl).norm() + h.norm();
        if scale > 0.0 {
            r.forward = r.forward.max((lhs - rhs).norm() / scale);
        }
        let lhs = hl / w;
        let rhs = li * hl + li * h / w;
        let scale = (li * hl).norm() + (li * h / w).norm();
        if scale > 0.0 {
            r.inverse = r.inverse.max((lhs - rhs).norm() / scale);
        }
    }
    r
}

/// `‖Th_λ − λh_λ‖/‖h‖` on `grid`, where `T = U + S`, `U` is multiplication
/// by `w` and `S h_λ = c·h` with `c = ⟨h_λ, g⟩`, next to `|c − 1|`. The two
/// agree exactly in theory.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct EigenResidual {
    pub lambda: BinaryAngle,
    pub measured: f64,
    pub predicted: f64,
}

pub fn eigen_residual(cf: &ConstructedFunctions, lambda: &BinaryAngle, coupling: Complex64, grid: &Grid) -> EigenResidual {
    let lam = lambda.to_complex();
    let mut num = 0.0;
    let mut den = 0.0;
    for (w, &wt) in grid.nodes().iter().zip(grid.weights()) {
        let h = cf.h(w);
        let hl = h / unit_difference(lambda, w);
        let th = w.to_complex() * hl + coupling * h;
        num += (th - lam * hl).norm_sqr() * wt;
        den += h.norm_sqr() * wt;
    }
    EigenResidual { lambda: *lambda, measured: (num / den).sqrt(), predicted: (coupling - 1.0).norm() }
}

/// One row of the continuity table.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ContinuityRow {
    pub z: BinaryAngle,
    pub s: BinaryAngle,
    pub chord: f64,
    /// `‖h_z − h_s‖²` outside the two windows.
    pub norm_sq: f64,
    /// `norm_sq / chord^{4α−1}`.
    pub ratio: f64,
    /// Bound on the Hölder part of the excluded window mass.
    pub window_bound: f64,
    pub nodes: usize,
}

#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct ContinuityConfig {
    /// Window radius in radians around `z` and `s`, shared by all pairs;
    /// defaults to the smaller of `1/d!` and 1/32 of the closest pair's chord.
    pub window: Option<f64>,
    /// Geometric levels at each breakpoint.
    pub graded_levels: u32,
    /// Longest panel, in turns.
    pub max_panel: f64,
    pub gauss: usize,
    #[serde(skip)]
    pub exec: Execution,
}

impl Default for ContinuityConfig {
    fn default() -> Self {
        Self { window: None, graded_levels: 24, max_panel: 1.0 / 2048.0, gauss: 16, exec: Execution::default() }
    }
}

/// Panels on `[u0, u1]` graded towards both ends with ratio 1/2.
fn segment_panels(u0: f64, u1: f64, levels: u32, cap: f64, out: &mut Vec<(f64, f64)>) {
    let len = u1 - u0;
    if !(len > 0.0) {
        return;
    }
    let half = len / 2.0;
    let mut push = |a: f64, b: f64| {
        let pieces = ((b - a) / cap).ceil().max(1.0) as usize;
        let step = (b - a) / pieces as f64;
        for k in 0..pieces {
            out.push((a + k as f64 * step, a + (k + 1) as f64 * step));
        }
    };
    for side in [0, 1] {
        let mut hi = half;
        for _ in 0..levels {
            let lo = hi / 2.0;
            if side == 0 {
                push(u0 + lo, u0 + hi);
            } else {
                push(u1 - hi, u1 - lo);
            }
            hi = lo;
        }
        // innermost piece, one panel
        if side == 0 {
            push(u0, u0 + hi);
        } else {
            push(u1 - hi, u1);
        }
    }
}

/// `‖h_z − h_s‖²` for each pair, integrated on a mesh graded towards the
/// endpoints of the deepest intervals and the window edges. `ψ` is sampled
/// at full truncation.
pub fn continuity_modulus(cf: &ConstructedFunctions, pairs: &[(BinaryAngle, BinaryAngle)], cfg: &ContinuityConfig) -> Result<Vec<ContinuityRow>> {
    let closest = pairs.iter().map(|(z, s)| z.chord(s)).filter(|&c| c > 0.0).fold(f64::INFINITY, f64::min);
    let r = cfg.window.unwrap_or_else(|| inv_factorial(cf.tree.depth as u32).min(closest / 32.0));
    let rt = r / (2.0 * PI);
    let cert = cf.series.psi_certificate();
    let rule = Rule::new(cfg.gauss);
    let bits = cf.series.required_bits().max(pairs.first().map_or(64, |p| p.0.bits()));
    let ends = cf.tree.endpoints();
    pairs
        .iter()
        .map(|(z, s)| {
            if z == s {
                return Ok(ContinuityRow { z: *z, s: *s, chord: 0.0, norm_sq: 0.0, ratio: 0.0, window_bound: 0.0, nodes: 0 });
            }
            let su = z.arc_to(s);
            let chord = z.chord(s);
            if chord <= 2.0 * r {
                return Err(Error::Domain(format!("pair separation {chord:e} within the window radius {r:e}")));
            }
            let mut cuts = vec![0.0, 1.0, rt, 1.0 - rt, su - rt, su + rt];
            cuts.extend(ends.iter().map(|e| z.arc_to(e)));
            cuts.retain(|u| (0.0..=1.0).contains(u));
            cuts.sort_by(f64::total_cmp);
            cuts.dedup();
            let in_window = |u: f64| u < rt || u > 1.0 - rt || (u - su).abs() < rt;
            let mut panels = vec![];
            for c in cuts.windows(2) {
                if !in_window(0.5 * (c[0] + c[1])) {
                    segment_panels(c[0], c[1], cfg.graded_levels, cfg.max_panel, &mut panels);
                }
            }
            let zc = z.to_complex();
            let sc = s.to_complex();
            let parts = cfg.exec.map_slice(&panels, |&(a, b)| -> Result<f64> {
                let mut acc = 0.0;
                for (u, wt) in rule.nodes(a, b) {
                    let w = z.wrapping_add(&BinaryAngle::from_f64(u, bits)?);
                    let h = cf.h(&w);
                    let wc = w.to_complex();
                    let d = h * (sc - zc) / ((zc - wc) * (sc - wc));
                    acc += d.norm_sqr() * wt;
                }
                Ok(acc)
            });
            let mut norm_sq = 0.0;
            for p in parts {
                norm_sq += p?;
            }
            // |h(w)|²/|z−w|² ≤ C²|θ|^{-2/3} near a point of K where ψ vanishes;
            // two windows, two terms each, (a+b)² ≤ 2a²+2b²
            let window_bound = 2.0 * 2.0 * 2.0 * cert.constant.powi(2) * 3.0 * r.powf(1.0 / 3.0) / (2.0 * PI);
            let exponent = 4.0 * ALPHA - 1.0;
            Ok(ContinuityRow {
                z: *z,
                s: *s,
                chord,
                norm_sq,
                ratio: norm_sq / chord.powf(exponent),
                window_bound,
                nodes: panels.len() * cfg.gauss,
            })
        })
        .collect()
}

/// For each `j < octaves`, the pair of deepest-level endpoints whose
/// separation is closest in log scale to `base·2^{-j}`.
pub fn octave_pairs(tree: &CantorTree, base: f64, octaves: usize) -> Vec<(BinaryAngle, BinaryAngle)> {
    let ends = tree.endpoints();
    (0..octaves)
        .filter_map(|j| {
            let target = base * 0.5f64.powi(j as i32);
            let mut best: Option<(f64, (BinaryAngle, BinaryAngle))> = None;
            for (i, z) in ends.iter().enumerate() {
                for s in &ends[i + 1..] {
                    let d = (z.chord(s) / target).ln().abs();
                    if best.as_ref().is_none_or(|b| d < b.0) {
                        best = Some((d, (*z, *s)));
                    }
                }
            }
            best.map(|b| b.1)
        })
        .collect()
}

/// Quadrature grid on the whole circle: every arc between consecutive
/// deepest-level endpoints (gaps and deepest intervals alike) carries
/// Gauss panels graded towards both ends with ratio 1/2.
pub fn quadrature_grid(tree: &CantorTree, levels: u32, gauss: usize, max_panel: f64, bits: u32) -> Result<Grid> {
    let ends = tree.endpoints();
    let rule = Rule::new(gauss);
    let mut nodes = vec![];
    let mut weights = vec![];
    for (i, a) in ends.iter().enumerate() {
        let b = &ends[(i + 1) % ends.len()];
        let len = a.arc_to(b);
        let mut panels = vec![];
        segment_panels(0.0, len, levels, max_panel, &mut panels);
        for (lo, hi) in panels {
            for (u, wt) in rule.nodes(lo, hi) {
                nodes.push(a.wrapping_add(&BinaryAngle::from_f64(u, bits)?));
                weights.push(wt);
            }
        }
    }
    let mut idx: Vec<usize> = (0..nodes.len()).collect();
    idx.sort_by(|&i, &j| nodes[i].cmp(&nodes[j]));
    let total: f64 = weights.iter().sum();
    let nodes: Vec<BinaryAngle> = idx.iter().map(|&i| nodes[i]).collect();
    let weights: Vec<f64> = idx.iter().map(|&i| weights[i] / total).collect();
    Grid::new(nodes, weights)
}

/// `‖g‖²` restricted to the gaps of the depth-`d` representation, each gap
/// integrated with `levels` graded panels per end and no analytic
/// remainder, so the value increases to the gap integral as `levels` grows.
pub fn g_norm_sq(tree: &CantorTree, levels: u32) -> f64 {
    let rule = Rule::new(16);
    let mut gaps: Vec<f64> = vec![];
    let l1 = &tree.levels[0];
    gaps.push(2.0 * PI * l1[1].b.arc_to(&l1[0].a));
    for lv in &tree.levels {
        for e in 0..lv.len() / 2 {
            gaps.push(2.0 * PI * lv[2 * e].b.arc_to(&lv[2 * e + 1].a));
        }
    }
    gaps.iter()
        .map(|len| {
            let (s, _) = rule.graded(len / 2.0, levels, |u| (2.0 * (u / 2.0).sin()).powf(-2.0 * ALPHA));
            2.0 * s / (2.0 * PI)
        })
        .sum()
}
