//! Hölder certificates and the conjugate-function integral
//! `∫ w (f(w) − f(z)) / (z − w) dμ(w)`, whose value is `f_-(z)`.

use num_complex::Complex64;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::angle::BinaryAngle;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::grid::Grid;

/// A function on the circle, evaluated at exact angles.
pub trait CircleFunction {
    fn eval(&self, t: &BinaryAngle) -> Complex64;
}

/// Adapter turning a closure into a [`CircleFunction`].
pub struct FnCircle<F>(pub F);

impl<F: Fn(&BinaryAngle) -> Complex64> CircleFunction for FnCircle<F> {
    fn eval(&self, t: &BinaryAngle) -> Complex64 {
        (self.0)(t)
    }
}

/// `|f(z) − f(w)| ≤ constant · |z − w|^alpha` for all `z, w` on the circle.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HolderCertificate {
    pub alpha: f64,
    pub constant: f64,
}

impl HolderCertificate {
    pub fn bound(&self, chord: f64) -> f64 {
        self.constant * chord.powf(self.alpha)
    }
}

/// `e^{2πia} − e^{2πib}` without cancellation for nearby angles.
pub fn unit_difference(a: &BinaryAngle, b: &BinaryAngle) -> Complex64 {
    let d = a.signed_offset(b);
    let pd = std::f64::consts::PI * d;
    b.to_complex() * Complex64::new(0.0, 2.0 * pd.sin()) * Complex64::from_polar(1.0, pd)
}

/// How nodes inside the singular window `|w − z| < 1/M` are treated.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq)]
pub enum SingularRule {
    /// Re-run the trapezoid rule on the uniform grid shifted by half a cell,
    /// which moves every node out of the window. Keeps the rule exact for
    /// trigonometric polynomials of degree below `M`.
    #[default]
    ShiftedGrid,
    /// Replace the singular node's cell by a sub-quadrature on `panels`
    /// geometrically graded panels per side, accumulating at `z`; the
    /// innermost piece is bounded with the certificate.
    GradedCell { panels: u32 },
}

#[derive(Clone, Copy, Debug)]
pub struct ConjugateIntegral {
    pub value: Complex64,
    /// Nodes of the supplied grid that fell inside the singular window.
    pub singular_nodes: usize,
    /// Bound on the part of the integral not computed by quadrature.
    pub error_bound: f64,
}

fn integrand<F: CircleFunction + ?Sized>(f: &F, fz: Complex64, z: &BinaryAngle, w: &BinaryAngle) -> Complex64 {
    let denom = unit_difference(z, w);
    w.to_complex() * (f.eval(w) - fz) / denom
}

const GAUSS4_X: [f64; 4] = [-0.8611363115940526, -0.33998104358485626, 0.33998104358485626, 0.8611363115940526];
const GAUSS4_W: [f64; 4] = [0.34785484513745385, 0.6521451548258887, 0.6521451548258887, 0.34785484513745385];

/// Approximates `∫ w (f(w) − f(z)) / (z − w) dμ(w)` on `grid`.
///
/// The Hölder certificate is mandatory: it is what bounds the integrand
/// `|·| ≤ C |z − w|^{α−1}` near the singular node.
pub fn conjugate_integral<F: CircleFunction + Sync + ?Sized>(
    f: &F,
    certificate: Option<&HolderCertificate>,
    z: &BinaryAngle,
    grid: &Grid,
    rule: SingularRule,
) -> Result<ConjugateIntegral> {
    let cert = certificate.ok_or(Error::MissingCertificate)?;
    if !(cert.alpha > 0.0 && cert.alpha <= 1.0) || !(cert.constant >= 0.0) {
        return Err(Error::Domain(format!("invalid Hölder certificate {cert:?}")));
    }
    let m = grid.len();
    let eps = 1.0 / m as f64;
    let fz = f.eval(z);
    let singular: Vec<usize> = grid
        .nodes()
        .iter()
        .enumerate()
        .filter(|(_, w)| w.chord(z) < eps)
        .map(|(i, _)| i)
        .collect();

    let plain = |g: &Grid, skip: &[usize]| -> Complex64 {
        g.nodes()
            .iter()
            .zip(g.weights())
            .enumerate()
            .filter(|(i, _)| !skip.contains(i))
            .map(|(_, (w, wt))| integrand(f, fz, z, w) * *wt)
            .sum()
    };

    if singular.is_empty() {
        return Ok(ConjugateIntegral { value: plain(grid, &[]), singular_nodes: 0, error_bound: 0.0 });
    }

    match rule {
        SingularRule::ShiftedGrid => {
            let uniform = grid.weights().iter().all(|&w| w == grid.weights()[0]) && m.is_power_of_two();
            if !uniform {
                return Err(Error::GridMismatch("shifted-grid rule needs a uniform power-of-two grid".into()));
            }
            let first = grid.nodes()[0];
            let half_cell = BinaryAngle::from_dyadic(1, m.trailing_zeros() + 1, first.bits())?;
            let shift = if first.is_zero() {
                true
            } else if first == half_cell {
                false
            } else {
                return Err(Error::GridMismatch("shifted-grid rule needs nodes k/M or (k+1/2)/M".into()));
            };
            let shifted = Grid::uniform(m, shift, first.bits())?;
            let value = plain(&shifted, &[]);
            let nearest = shifted.nodes().iter().map(|w| w.chord(z)).fold(f64::INFINITY, f64::min);
            // Size of the nearest node's contribution, as a magnitude hint.
            let bar = cert.constant * nearest.powf(cert.alpha - 1.0) / m as f64;
            Ok(ConjugateIntegral { value, singular_nodes: singular.len(), error_bound: bar })
        }
        SingularRule::GradedCell { panels } => {
            let mut value = plain(grid, &singular);
            let mut bound = 0.0;
            for &j in &singular {
                let w0 = grid.nodes()[j];
                let half = grid.weights()[j] / 2.0;
                let bits = z.bits();
                // Offset of z inside the cell, signed, in turns.
                let off = z.signed_offset(&w0);
                let sides = [(half - off, 1.0), (half + off, -1.0)];
                for (len, dir) in sides {
                    if len <= 0.0 {
                        continue;
                    }
                    for k in 0..panels {
                        let hi = len * 0.5f64.powi(k as i32);
                        let lo = hi / 2.0;
                        let mid = 0.5 * (hi + lo);
                        let rad = 0.5 * (hi - lo);
                        for (x, wt) in GAUSS4_X.iter().zip(GAUSS4_W) {
                            let s = mid + rad * x;
                            let step = BinaryAngle::from_f64(s, bits)?;
                            let w = if dir > 0.0 { z.wrapping_add(&step) } else { z.wrapping_sub(&step) };
                            value += integrand(f, fz, z, &w) * (wt * rad);
                        }
                    }
                    let r = len * 0.5f64.powi(panels as i32);
                    // ∫_0^r C (2πs)^{α−1} ds
                    bound += cert.constant * (2.0 * std::f64::consts::PI).powf(cert.alpha - 1.0) * r.powf(cert.alpha)
                        / cert.alpha;
                }
            }
            Ok(ConjugateIntegral { value, singular_nodes: singular.len(), error_bound: bound })
        }
    }
}

/// Largest observed `|f(z) − f(w)| / |z − w|^α` over random pairs. Pair
/// separations are log-uniform between `2^{-24}` and `1/2` turns so that all
/// scales are probed; the result is a lower bound on the Hölder constant.
pub fn holder_ratio_sup<F: CircleFunction + Sync + ?Sized>(
    f: &F,
    alpha: f64,
    num_pairs: usize,
    seed: u64,
    bits: u32,
    exec: Execution,
) -> Result<f64> {
    if !(alpha > 0.0 && alpha <= 1.0) {
        return Err(Error::Domain(format!("Hölder exponent must lie in (0, 1], got {alpha}")));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs: Vec<(BinaryAngle, BinaryAngle)> = (0..num_pairs)
        .map(|_| {
            let t: f64 = rng.gen();
            let e: f64 = rng.gen_range(1.0..24.0);
            let s = 2f64.powf(-e);
            let a = BinaryAngle::from_f64(t, bits)?;
            let b = a.wrapping_add(&BinaryAngle::from_f64(s, bits)?);
            Ok((a, b))
        })
        .collect::<Result<_>>()?;
    let ratios = exec.map_slice(&pairs, |(a, b)| {
        let d = a.chord(b);
        (f.eval(a) - f.eval(b)).norm() / d.powf(alpha)
    });
    Ok(ratios.into_iter().fold(0.0, f64::max))
}
