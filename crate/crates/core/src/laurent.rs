//! Finitely supported two-sided coefficient sequences on the circle.

use std::fmt;

use num_complex::Complex64;

use crate::angle::BinaryAngle;
use crate::conjugate::{CircleFunction, HolderCertificate};

/// `f(z) = Σ_{n=-N}^{N} a_n z^n`.
#[derive(Clone, PartialEq)]
pub struct LaurentPoly {
    degree: usize,
    // a_{-N}, ..., a_N
    coeffs: Vec<Complex64>,
}

impl LaurentPoly {
    pub fn zero(degree: usize) -> Self {
        Self { degree, coeffs: vec![Complex64::new(0.0, 0.0); 2 * degree + 1] }
    }

    pub fn constant(c: Complex64) -> Self {
        Self { degree: 0, coeffs: vec![c] }
    }

    pub fn monomial(n: i64, c: Complex64) -> Self {
        let mut p = Self::zero(n.unsigned_abs() as usize);
        p.set(n, c);
        p
    }

    /// Builds from `(degree, coefficient)` pairs; repeated degrees add up.
    pub fn from_terms(terms: &[(i64, Complex64)]) -> Self {
        let deg = terms.iter().map(|(n, _)| n.unsigned_abs() as usize).max().unwrap_or(0);
        let mut p = Self::zero(deg);
        for &(n, c) in terms {
            let cur = p.coeff(n);
            p.set(n, cur + c);
        }
        p
    }

    /// Degree bound `N`; coefficients outside `[-N, N]` are zero.
    pub fn degree(&self) -> usize {
        self.degree
    }

    /// Largest `|n|` with a nonzero coefficient.
    pub fn effective_degree(&self) -> usize {
        self.terms().map(|(n, _)| n.unsigned_abs() as usize).max().unwrap_or(0)
    }

    pub fn coeff(&self, n: i64) -> Complex64 {
        if n.unsigned_abs() as usize > self.degree {
            return Complex64::new(0.0, 0.0);
        }
        self.coeffs[(n + self.degree as i64) as usize]
    }

    pub fn set(&mut self, n: i64, c: Complex64) {
        let need = n.unsigned_abs() as usize;
        if need > self.degree {
            *self = self.widened(need);
        }
        let off = self.degree as i64;
        self.coeffs[(n + off) as usize] = c;
    }

    fn widened(&self, degree: usize) -> Self {
        let mut out = Self::zero(degree);
        for (n, c) in self.terms() {
            out.coeffs[(n + degree as i64) as usize] = c;
        }
        out
    }

    /// Nonzero `(n, a_n)` pairs in increasing `n`.
    pub fn terms(&self) -> impl Iterator<Item = (i64, Complex64)> + '_ {
        let off = self.degree as i64;
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| c.re != 0.0 || c.im != 0.0)
            .map(move |(i, &c)| (i as i64 - off, c))
    }

    /// Evaluates at any nonzero `z`.
    pub fn eval(&self, z: Complex64) -> Complex64 {
        let n = self.degree;
        // Horner on the non-negative part, then on the negative part in 1/z.
        let mut pos = Complex64::new(0.0, 0.0);
        for k in (0..=n).rev() {
            pos = pos * z + self.coeffs[n + k];
        }
        if n == 0 {
            return pos;
        }
        let zi = z.inv();
        let mut neg = Complex64::new(0.0, 0.0);
        for k in (1..=n).rev() {
            neg = (neg + self.coeffs[n - k]) * zi;
        }
        pos + neg
    }

    pub fn eval_angle(&self, t: &BinaryAngle) -> Complex64 {
        self.eval(t.to_complex())
    }

    /// `f_-`: keeps exactly the coefficients with `n ≤ −1`.
    pub fn negative_part(&self) -> Self {
        let mut out = self.clone();
        for n in 0..=self.degree as i64 {
            out.set(n, Complex64::new(0.0, 0.0));
        }
        out
    }

    /// Fejér sum `p_n = Σ_{|j|≤n} (1 − |j|/(n+1)) a_j z^j`.
    pub fn fejer_sum(&self, n: usize) -> Self {
        let mut out = Self::zero(n);
        for j in -(n as i64)..=n as i64 {
            let w = 1.0 - j.unsigned_abs() as f64 / (n as f64 + 1.0);
            out.set(j, self.coeff(j) * w);
        }
        out
    }

    /// `z^k · f(z)`.
    pub fn shift(&self, k: i64) -> Self {
        let terms: Vec<_> = self.terms().map(|(n, c)| (n + k, c)).collect();
        let mut p = Self::from_terms(&terms);
        if p.degree < self.degree {
            p = p.widened(self.degree);
        }
        p
    }

    pub fn scale(&self, s: Complex64) -> Self {
        Self { degree: self.degree, coeffs: self.coeffs.iter().map(|c| c * s).collect() }
    }

    pub fn add(&self, other: &Self) -> Self {
        let d = self.degree.max(other.degree);
        let mut out = Self::zero(d);
        for n in -(d as i64)..=d as i64 {
            out.set(n, self.coeff(n) + other.coeff(n));
        }
        out
    }

    pub fn l1_norm(&self) -> f64 {
        self.coeffs.iter().map(|c| c.norm()).sum()
    }

    /// `|f(z) − f(w)| ≤ (Σ |n||a_n|) · |z − w|` on the circle, since
    /// `|z^n − w^n| ≤ |n||z − w|` there.
    pub fn lipschitz_certificate(&self) -> HolderCertificate {
        let c: f64 = self.terms().map(|(n, a)| n.unsigned_abs() as f64 * a.norm()).sum();
        HolderCertificate { alpha: 1.0, constant: c }
    }

    /// Fourier coefficients `a_j`, `|j| ≤ n`, of samples on the uniform grid
    /// `z_k = e^{2πik/M}` (plain DFT; `M > 2n` avoids aliasing for
    /// trigonometric polynomials of degree `n`).
    pub fn from_uniform_samples(values: &[Complex64], n: usize) -> Self {
        let m = values.len();
        let mut out = Self::zero(n);
        for j in -(n as i64)..=n as i64 {
            let mut acc = Complex64::new(0.0, 0.0);
            for (k, v) in values.iter().enumerate() {
                // index arithmetic mod M keeps the twiddle angle exact
                let idx = ((-(j as i128) * k as i128).rem_euclid(m as i128)) as f64;
                let ang = 2.0 * std::f64::consts::PI * idx / m as f64;
                acc += v * Complex64::from_polar(1.0, ang);
            }
            out.set(j, acc / m as f64);
        }
        out
    }
}

impl CircleFunction for LaurentPoly {
    fn eval(&self, t: &BinaryAngle) -> Complex64 {
        self.eval_angle(t)
    }
}

impl fmt::Debug for LaurentPoly {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let mut first = true;
        for (n, c) in self.terms() {
            if !first {
                f.write_str(" + ")?;
            }
            first = false;
            write!(f, "({:.6}{:+.6}i)z^{}", c.re, c.im, n)?;
        }
        if first {
            f.write_str("0")?;
        }
        Ok(())
    }
}
