//! Orbit statistics of the model matrices.
//!
//! A finite-dimensional operator is never hypercyclic, so everything here is a
//! trend measured at fixed budget, never a density statement.

use std::collections::HashSet;
use std::f64::consts::TAU;
use std::io::Write;

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::galerkin::GalerkinModel;
use crate::linalg::{self, CMatrix, CVector};

pub const RENORMALIZE_EVERY: usize = 64;

/// Orbit statistics. `coverage[k]` is the fraction of the `⌈1/ε⌉` phase
/// cells of the circle hit by `arg⟨Tⁿx₀, p_k⟩`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct OrbitRun {
    pub steps: usize,
    pub eps: f64,
    /// `log‖Tⁿx₀‖` for `n = 0..=steps`, empty when streamed.
    pub log_norms: Vec<f64>,
    pub cells: usize,
    pub visited: Vec<usize>,
    pub coverage: Vec<f64>,
    pub log_norm_mean: f64,
    pub log_norm_variance: f64,
    pub max_norm_drift: f64,
}

/// One orbit row handed to a streaming sink.
#[derive(Clone, Debug)]
pub struct OrbitRow<'a> {
    pub step: usize,
    pub log_norm: f64,
    pub proj: &'a [Complex64],
}

fn phase_cell(z: Complex64, cells: usize) -> usize {
    let turns = z.arg().rem_euclid(TAU) / TAU;
    ((turns * cells as f64) as usize).min(cells - 1)
}

/// Iterates `x ↦ mat·x` for `steps` steps, renormalizing every
/// [`RENORMALIZE_EVERY`] steps and carrying the scale as a log. `sink`
/// receives every row, including step 0. Log-norms are kept only if `store`.
pub fn run_orbit_streaming(
    mat: &CMatrix,
    x0: &CVector,
    steps: usize,
    directions: &[CVector],
    eps: f64,
    store: bool,
    mut sink: impl FnMut(OrbitRow<'_>) -> Result<()>,
) -> Result<OrbitRun> {
    let n = mat.nrows();
    if mat.ncols() != n || x0.len() != n || directions.iter().any(|d| d.len() != n) {
        return Err(Error::Domain("orbit dimensions do not match".into()));
    }
    if !(eps > 0.0 && eps <= 1.0) {
        return Err(Error::Domain(format!("eps {eps} outside (0, 1]")));
    }
    let x0_norm = x0.norm();
    if x0_norm == 0.0 || !x0_norm.is_finite() {
        return Err(Error::Domain("initial vector must be nonzero".into()));
    }
    let cells = (1.0 / eps).ceil() as usize;
    let mut hit: Vec<HashSet<usize>> = vec![HashSet::new(); directions.len()];
    let mut x = x0 / c64(x0_norm);
    let mut log_scale = x0_norm.ln();
    let mut proj = vec![Complex64::default(); directions.len()];
    let (mut mean, mut m2, mut drift) = (0.0, 0.0, 0.0f64);
    let mut log_norms = vec![];
    for step in 0..=steps {
        if step > 0 {
            x = mat * &x;
            if step % RENORMALIZE_EVERY == 0 {
                let s = x.norm();
                if s == 0.0 || !s.is_finite() {
                    return Err(Error::StepLimit { step });
                }
                x /= c64(s);
                log_scale += s.ln();
            }
        }
        let local = x.norm();
        if !local.is_finite() {
            return Err(Error::StepLimit { step });
        }
        let log_norm = log_scale + local.ln();
        for (k, d) in directions.iter().enumerate() {
            proj[k] = d.dotc(&x);
            if proj[k].norm() > 0.0 {
                hit[k].insert(phase_cell(proj[k], cells));
            }
        }
        let delta = log_norm - mean;
        mean += delta / (step + 1) as f64;
        m2 += delta * (log_norm - mean);
        drift = drift.max((log_norm - x0_norm.ln()).exp_m1().abs());
        if store {
            log_norms.push(log_norm);
        }
        sink(OrbitRow { step, log_norm, proj: &proj })?;
    }
    let visited: Vec<usize> = hit.iter().map(|h| h.len()).collect();
    Ok(OrbitRun {
        steps,
        eps,
        log_norms,
        cells,
        coverage: visited.iter().map(|&v| v as f64 / cells as f64).collect(),
        visited,
        log_norm_mean: mean,
        log_norm_variance: m2 / (steps + 1) as f64,
        max_norm_drift: drift,
    })
}

fn c64(x: f64) -> Complex64 {
    Complex64::new(x, 0.0)
}

pub fn run_orbit(mat: &CMatrix, x0: &CVector, steps: usize, directions: &[CVector], eps: f64) -> Result<OrbitRun> {
    run_orbit_streaming(mat, x0, steps, directions, eps, true, |_| Ok(()))
}

/// Writes `step,lognorm,p0_re,p0_im,…` rows while iterating, storing nothing.
pub fn run_orbit_csv<W: Write>(mat: &CMatrix, x0: &CVector, steps: usize, directions: &[CVector], eps: f64, w: W) -> Result<OrbitRun> {
    let mut out = csv::Writer::from_writer(w);
    let mut header = vec!["step".to_string(), "lognorm".to_string()];
    for k in 0..directions.len() {
        header.push(format!("p{k}_re"));
        header.push(format!("p{k}_im"));
    }
    out.write_record(&header)?;
    let run = run_orbit_streaming(mat, x0, steps, directions, eps, false, |row| {
        let mut rec = vec![row.step.to_string(), format!("{:e}", row.log_norm)];
        for p in row.proj {
            rec.push(format!("{:e}", p.re));
            rec.push(format!("{:e}", p.im));
        }
        out.write_record(&rec)?;
        Ok(())
    })?;
    out.flush()?;
    Ok(run)
}

/// Unit vector with independent Gaussian-like entries drawn from `rng`.
pub fn random_unit(n: usize, rng: &mut impl Rng) -> CVector {
    let v = CVector::from_fn(n, |_, _| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
    v.normalize()
}

/// Initial vector and projection directions for one seed: the first two frame
/// vectors plus one random direction.
pub fn seeded_setup(n: usize, seed: u64) -> (CVector, Vec<CVector>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let x0 = random_unit(n, &mut rng);
    let mut dirs: Vec<CVector> = (0..n.min(2)).map(|k| CVector::from_fn(n, |i, _| c64((i == k) as u8 as f64))).collect();
    dirs.push(random_unit(n, &mut rng));
    (x0, dirs)
}

/// Largest residual of a frame vector of `K_m` against the span of a random
/// `fraction` of the `h_λ`.
pub fn density_surrogate(model: &GalerkinModel, fraction: f64, seed: u64) -> Result<f64> {
    Ok(density_trend(model, &[fraction], seed)?[0])
}

/// [`density_surrogate`] for several fractions with nested subsets: each
/// subset is a prefix of one seeded permutation.
pub fn density_trend(model: &GalerkinModel, fractions: &[f64], seed: u64) -> Result<Vec<f64>> {
    let m = model.dim();
    if m < 4 {
        return Err(Error::Domain(format!("density surrogate needs m ≥ 4, got {m}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut perm: Vec<usize> = (0..m).collect();
    for i in (1..m).rev() {
        perm.swap(i, rng.gen_range(0..=i));
    }
    fractions
        .iter()
        .map(|&f| {
            if !(0.0..=1.0).contains(&f) {
                return Err(Error::Domain(format!("fraction {f} outside [0, 1]")));
            }
            let k = ((f * m as f64).round() as usize).min(m);
            if k == 0 {
                return Ok(1.0);
            }
            let sub = CMatrix::from_fn(m, k, |i, j| model.r[(i, perm[j])]);
            let (q, _) = linalg::thin_qr(&sub);
            let p = CMatrix::identity(m, m) - &q * q.adjoint();
            Ok((0..m).map(|j| p.column(j).norm()).fold(0.0, f64::max))
        })
        .collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct CrowdingRow {
    pub m: usize,
    pub condition: f64,
    pub min_separation: f64,
    /// Median over seeds, per projection.
    pub coverage: Vec<f64>,
    pub log_norm_variance: f64,
}

/// Conditioning, separation and `T`-orbit coverage at a fixed budget for a
/// sequence of models.
pub fn eigen_crowding_report(models: &[GalerkinModel], steps: usize, eps: f64, seeds: &[u64], exec: Execution) -> Result<Vec<CrowdingRow>> {
    models
        .iter()
        .map(|md| {
            let m = md.dim();
            let mut sep = f64::INFINITY;
            for (i, a) in md.lambdas.iter().enumerate() {
                for b in &md.lambdas[..i] {
                    sep = sep.min(a.chord(b));
                }
            }
            let runs = exec.map_slice(seeds, |&s| {
                let (x0, dirs) = seeded_setup(m, s);
                run_orbit(&md.t_mat, &x0, steps, &dirs, eps)
            });
            let runs: Vec<OrbitRun> = runs.into_iter().collect::<Result<_>>()?;
            let nproj = runs.first().map_or(0, |r| r.coverage.len());
            let coverage = (0..nproj).map(|k| median(runs.iter().map(|r| r.coverage[k]).collect())).collect();
            let log_norm_variance = median(runs.iter().map(|r| r.log_norm_variance).collect());
            Ok(CrowdingRow { m, condition: md.condition, min_separation: sep, coverage, log_norm_variance })
        })
        .collect()
}

pub fn median(mut v: Vec<f64>) -> f64 {
    if v.is_empty() {
        return f64::NAN;
    }
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

/// Median log-norm variance of `T`- and `V`-orbits over seeds.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct VarianceComparison {
    pub t: f64,
    pub v: f64,
}

pub fn compare_log_norm_variance(t: &CMatrix, v: &CMatrix, steps: usize, seeds: &[u64], exec: Execution) -> Result<VarianceComparison> {
    let n = t.nrows();
    let pair = exec.map_slice(seeds, |&s| -> Result<(f64, f64)> {
        let (x0, _) = seeded_setup(n, s);
        let a = run_orbit(t, &x0, steps, &[], 1.0)?;
        let b = run_orbit(v, &x0, steps, &[], 1.0)?;
        Ok((a.log_norm_variance, b.log_norm_variance))
    });
    let pair: Vec<(f64, f64)> = pair.into_iter().collect::<Result<_>>()?;
    Ok(VarianceComparison { t: median(pair.iter().map(|p| p.0).collect()), v: median(pair.iter().map(|p| p.1).collect()) })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::Rng;

    fn diag(vals: &[Complex64]) -> CMatrix {
        CMatrix::from_diagonal(&CVector::from_vec(vals.to_vec()))
    }

    #[test]
    fn identity_orbit_is_a_single_cell() {
        let x0 = CVector::from_vec(vec![c64(1.0), c64(0.5)]);
        let r = run_orbit(&CMatrix::identity(2, 2), &x0, 500, &[x0.normalize()], 0.05).unwrap();
        assert_eq!(r.visited, vec![1]);
        assert_eq!(r.coverage[0], 1.0 / 20.0);
        assert!(r.log_norm_variance < 1e-28);
    }

    #[test]
    fn weyl_rotation_covers_the_circle() {
        let lam = Complex64::from_polar(1.0, TAU * (2f64.sqrt() - 1.0));
        let x0 = CVector::from_vec(vec![c64(1.0)]);
        let r = run_orbit(&diag(&[lam]), &x0, 100_000, std::slice::from_ref(&x0), 0.05).unwrap();
        assert!(r.coverage[0] >= 0.95, "{:?}", r.coverage);
        assert!(r.max_norm_drift < 1e-10);
    }

    #[test]
    fn rational_rotation_visits_finitely_many_cells() {
        let lam = Complex64::from_polar(1.0, TAU / 5.0);
        let x0 = CVector::from_vec(vec![Complex64::from_polar(1.0, TAU * 0.003)]);
        let r = run_orbit(&diag(&[lam]), &x0, 10_000, &[CVector::from_vec(vec![c64(1.0)])], 0.01).unwrap();
        assert_eq!(r.visited, vec![5]);
    }

    #[test]
    fn growth_is_carried_in_the_log() {
        // 2^5000 overflows f64 without renormalization
        let x0 = CVector::from_vec(vec![c64(1.0)]);
        let r = run_orbit(&diag(&[c64(2.0)]), &x0, 5000, &[], 1.0).unwrap();
        assert!((r.log_norms[5000] - 5000.0 * 2f64.ln()).abs() < 1e-9);
        let r = run_orbit(&diag(&[c64(0.0)]), &x0, 100, &[], 1.0);
        assert!(matches!(r, Err(Error::StepLimit { step: 64 })));
    }

    #[test]
    fn streaming_matches_stored_rows() {
        let m = CMatrix::from_fn(3, 3, |i, j| Complex64::new((i + 2 * j) as f64 * 0.1, 0.05 * i as f64));
        let (x0, dirs) = seeded_setup(3, 4);
        let stored = run_orbit(&m, &x0, 300, &dirs, 0.1).unwrap();
        let mut buf = vec![];
        let streamed = run_orbit_csv(&m, &x0, 300, &dirs, 0.1, &mut buf).unwrap();
        assert_eq!(stored.visited, streamed.visited);
        let text = String::from_utf8(buf).unwrap();
        let mut lines = text.lines();
        assert_eq!(lines.next().unwrap(), "step,lognorm,p0_re,p0_im,p1_re,p1_im,p2_re,p2_im");
        let last = text.lines().last().unwrap();
        let ln: f64 = last.split(',').nth(1).unwrap().parse().unwrap();
        assert_eq!(ln, stored.log_norms[300]);
    }

    #[test]
    fn coverage_is_deterministic() {
        let m = CMatrix::from_fn(4, 4, |i, j| Complex64::from_polar(0.5, (i * 7 + j * 3) as f64));
        let (x0, dirs) = seeded_setup(4, 9);
        let a = run_orbit(&m, &x0, 1000, &dirs, 0.05).unwrap();
        let b = run_orbit(&m, &x0, 1000, &dirs, 0.05).unwrap();
        assert_eq!(a.visited, b.visited);
        assert_eq!(a.log_norms, b.log_norms);
    }

    #[test]
    fn rejects_bad_input() {
        let m = CMatrix::identity(2, 2);
        assert!(run_orbit(&m, &CVector::zeros(2), 10, &[], 0.1).is_err());
        assert!(run_orbit(&m, &CVector::zeros(3), 10, &[], 0.1).is_err());
        assert!(run_orbit(&m, &CVector::from_element(2, c64(1.0)), 10, &[], 0.0).is_err());
    }

    #[test]
    fn median_even_and_odd() {
        assert_eq!(median(vec![3.0, 1.0, 2.0]), 2.0);
        assert_eq!(median(vec![4.0, 1.0, 2.0, 3.0]), 2.5);
    }

    proptest! {
        #[test]
        fn unitary_orbits_keep_their_norm(seed in 0u64..1000, n in 1usize..6) {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let a = CMatrix::from_fn(n, n, |_, _| Complex64::new(rng.gen::<f64>() - 0.5, rng.gen::<f64>() - 0.5));
            let (q, _) = linalg::thin_qr(&a);
            let x0 = random_unit(n, &mut rng);
            let r = run_orbit(&q, &x0, 2000, &[], 1.0).unwrap();
            prop_assert!(r.max_norm_drift < 1e-10);
        }
    }
}
