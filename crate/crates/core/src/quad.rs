//! Gauss–Legendre rules and geometrically graded panels for integrands with
//! an algebraic endpoint singularity.

use std::f64::consts::PI;

/// Nodes and weights of the `n`-point Gauss–Legendre rule on `[-1, 1]`.
pub fn gauss_legendre(n: usize) -> (Vec<f64>, Vec<f64>) {
    let mut x = vec![0.0; n];
    let mut w = vec![0.0; n];
    for i in 0..n.div_ceil(2) {
        let mut z = (PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
        let mut dp = 0.0;
        for _ in 0..100 {
            let (p, d) = legendre(n, z);
            dp = d;
            let dz = p / d;
            z -= dz;
            if dz.abs() < 1e-16 {
                break;
            }
        }
        let (_, d) = legendre(n, z);
        if d != 0.0 {
            dp = d;
        }
        x[i] = -z;
        x[n - 1 - i] = z;
        let wi = 2.0 / ((1.0 - z * z) * dp * dp);
        w[i] = wi;
        w[n - 1 - i] = wi;
    }
    (x, w)
}

fn legendre(n: usize, z: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, z);
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * z * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    (p1, n as f64 * (z * p1 - p0) / (z * z - 1.0))
}

/// A fixed rule reused across many panels.
#[derive(Clone, Debug)]
pub struct Rule {
    x: Vec<f64>,
    w: Vec<f64>,
}

impl Rule {
    pub fn new(n: usize) -> Self {
        let (x, w) = gauss_legendre(n);
        Self { x, w }
    }

    /// `∫_lo^hi f`.
    pub fn integrate(&self, lo: f64, hi: f64, f: impl Fn(f64) -> f64) -> f64 {
        let mid = 0.5 * (lo + hi);
        let rad = 0.5 * (hi - lo);
        self.x.iter().zip(&self.w).map(|(x, w)| w * f(mid + rad * x)).sum::<f64>() * rad
    }

    /// Points and weights on `[lo, hi]`.
    pub fn nodes(&self, lo: f64, hi: f64) -> impl Iterator<Item = (f64, f64)> + '_ {
        let mid = 0.5 * (lo + hi);
        let rad = 0.5 * (hi - lo);
        self.x.iter().zip(&self.w).map(move |(x, w)| (mid + rad * x, w * rad))
    }

    /// `∫_0^len f(s) ds` for `f` singular at `s = 0`: panels
    /// `[len·2^{-k-1}, len·2^{-k}]` for `k < levels`. Returns the sum and
    /// the length of the untouched innermost piece `[0, len·2^{-levels}]`.
    pub fn graded(&self, len: f64, levels: u32, f: impl Fn(f64) -> f64) -> (f64, f64) {
        let mut acc = 0.0;
        let mut hi = len;
        for _ in 0..levels {
            let lo = hi / 2.0;
            acc += self.integrate(lo, hi, &f);
            hi = lo;
        }
        (acc, hi)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn weights_sum_to_two_and_polynomials_are_exact() {
        for n in [1, 2, 5, 8, 16] {
            let (x, w) = gauss_legendre(n);
            assert!((w.iter().sum::<f64>() - 2.0).abs() < 1e-14, "n={n}");
            let deg = 2 * n - 1;
            let q: f64 = x.iter().zip(&w).map(|(x, w)| w * x.powi(deg as i32 - 1)).sum();
            // ∫ x^{2n-2} = 2/(2n-1)
            assert!((q - 2.0 / deg as f64).abs() < 1e-13, "n={n}");
        }
    }

    #[test]
    fn known_two_point_rule() {
        let (x, w) = gauss_legendre(2);
        assert!((x[1] - 1.0 / 3f64.sqrt()).abs() < 1e-15);
        assert!((w[0] - 1.0).abs() < 1e-15);
    }

    #[test]
    fn graded_power_singularity() {
        let r = Rule::new(12);
        let a = 2.0 / 3.0;
        let (s, rest) = r.graded(0.7, 60, |t| t.powf(-a));
        let total = s + rest.powf(1.0 - a) / (1.0 - a);
        let exact = 0.7f64.powf(1.0 - a) / (1.0 - a);
        assert!((total - exact).abs() < 1e-13 * exact);
    }
}
