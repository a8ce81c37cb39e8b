//! The lacunary series `γ(z) = Σ_{n≥1} a^{1−n} z^{b^n}` with `b = 2^k`, and
//! `ψ(z) = γ(z) + γ(z⁻¹)`. With `a = 8`, `b = 512` these are the functions
//! whose level set `γ = i` carries the set `K`.

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::angle::{BinaryAngle, F64_GUARD_BITS};
use crate::conjugate::{CircleFunction, HolderCertificate};
use crate::error::{Error, Result};

pub const DEFAULT_TRUNCATION: usize = 12;

/// Truncated lacunary series `Σ_{n=1}^{N} a^{1−n} z^{2^{k n}}`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LacunarySeries {
    pub a_base: f64,
    /// `b = 2^log2_b`; a power of two so that `z^{b^n}` is a bit shift.
    pub log2_b: u32,
    pub truncation: usize,
}

impl Default for LacunarySeries {
    fn default() -> Self {
        Self::standard(DEFAULT_TRUNCATION)
    }
}

impl LacunarySeries {
    /// `a = 8`, `b = 2⁹`.
    pub fn standard(truncation: usize) -> Self {
        Self { a_base: 8.0, log2_b: 9, truncation }
    }

    pub fn new(a_base: f64, log2_b: u32, truncation: usize) -> Result<Self> {
        let b = 2f64.powi(log2_b as i32);
        if !(a_base > 1.0 && b > a_base) {
            return Err(Error::Domain(format!("need b > a > 1, got a={a_base}, b={b}")));
        }
        Ok(Self { a_base, log2_b, truncation })
    }

    pub fn b_base(&self) -> f64 {
        2f64.powi(self.log2_b as i32)
    }

    /// Coefficient `a^{1−n}`.
    pub fn coefficient(&self, n: usize) -> f64 {
        self.a_base.powi(1 - n as i32)
    }

    /// `Σ_{n>N} a^{1−n} = a^{1−N}/(a−1)`, which bounds `|γ − γ_N|`.
    pub fn tail(&self) -> f64 {
        tail_bound(self.a_base, self.truncation)
    }

    /// `Σ_{n≥1} a^{1−n}`, the value at `z = 1`.
    pub fn total_mass(&self) -> f64 {
        self.a_base / (self.a_base - 1.0)
    }

    /// Shift (in bits) applied to the angle for term `n`.
    pub fn shift(&self, n: usize) -> u32 {
        self.log2_b * n as u32
    }

    /// Bits an angle needs for every term to be evaluated exactly.
    pub fn required_bits(&self) -> u32 {
        self.shift(self.truncation) + F64_GUARD_BITS
    }

    fn check_precision(&self, t: &BinaryAngle) -> Result<()> {
        let needed = self.required_bits();
        if needed > t.bits() {
            return Err(Error::PrecisionExhausted { shift: self.shift(self.truncation), needed, bits: t.bits() });
        }
        Ok(())
    }

    /// `γ_N(z)` without the precision check.
    #[inline]
    pub fn gamma_unchecked(&self, t: &BinaryAngle) -> Complex64 {
        let mut acc = Complex64::new(0.0, 0.0);
        let mut c = 1.0;
        for n in 1..=self.truncation {
            acc += t.window_complex(self.shift(n)) * c;
            c /= self.a_base;
        }
        acc
    }

    /// `γ_N(z)` and a bound on `|γ(z) − γ_N(z)|` including rounding.
    pub fn gamma_eval(&self, t: &BinaryAngle) -> Result<(Complex64, f64)> {
        self.check_precision(t)?;
        let bound = self.tail() + self.truncation as f64 * 2f64.powi(-50);
        Ok((self.gamma_unchecked(t), bound))
    }

    /// `ψ_N(z) = γ_N(z) + γ_N(z̄)` and its error bound.
    pub fn psi_eval(&self, t: &BinaryAngle) -> Result<(Complex64, f64)> {
        let (g, e) = self.gamma_eval(t)?;
        let (gc, _) = self.gamma_eval(&t.conj())?;
        Ok((g + gc, 2.0 * e))
    }

    #[inline]
    pub fn psi_unchecked(&self, t: &BinaryAngle) -> Complex64 {
        self.gamma_unchecked(t) + self.gamma_unchecked(&t.conj())
    }

    /// Constant Fourier coefficient of `ψ`; every frequency is `±b^n`,
    /// `n ≥ 1`, so this is exactly zero.
    pub fn psi_mean(&self) -> f64 {
        0.0
    }

    /// Hölder certificate for `γ`. The series is `a · Σ a^{-n} z^{b^n}`, so
    /// the bound for `Σ a^{-n} z^{b^n}` scales by `a`.
    pub fn gamma_certificate(&self) -> HolderCertificate {
        let (alpha, c) = holder_constant(self.a_base, self.b_base()).expect("validated bases");
        HolderCertificate { alpha, constant: self.a_base * c }
    }

    pub fn psi_certificate(&self) -> HolderCertificate {
        let g = self.gamma_certificate();
        HolderCertificate { alpha: g.alpha, constant: 2.0 * g.constant }
    }

    /// Complex disc `(centre, radius)` containing `γ(z)` for every `t` in
    /// the dyadic interval `[lo, lo + 2^{-level}]`. Terms whose angle is
    /// confined to a short arc contribute their arc midpoint plus the chord
    /// to the arc end; the rest are bounded by their modulus. The series
    /// tail past `N` is added so the disc encloses the infinite sum.
    pub fn gamma_enclosure(&self, lo: &BinaryAngle, level: u32) -> (Complex64, f64) {
        let mid = lo.add_pow2_neg(level + 1);
        let mut centre = Complex64::new(0.0, 0.0);
        let mut radius = self.tail();
        let mut c = 1.0;
        for n in 1..=self.truncation {
            let shift = self.shift(n);
            if shift + 2 <= level {
                // arc width 2^{shift-level} turns, at most 1/4
                let width = 2f64.powi(shift as i32 - level as i32);
                centre += mid.window_complex(shift) * c;
                radius += c * 2.0 * (std::f64::consts::PI * width / 2.0).sin();
            } else {
                radius += c;
            }
            c /= self.a_base;
        }
        // rounding in the centre sum
        radius += self.truncation as f64 * 4.0 * f64::EPSILON;
        (centre, radius)
    }
}

/// `a^{1−N}/(a−1)`.
pub fn tail_bound(a: f64, truncation: usize) -> f64 {
    a.powi(1 - truncation as i32) / (a - 1.0)
}

/// Hölder exponent `α = log_b a` and constant
/// `C = a 2^{−α}/(b−a) + 2a(2b)^{1−α}/(a−1)` for `Σ_{n≥1} a^{-n} z^{b^n}`.
pub fn holder_constant(a: f64, b: f64) -> Result<(f64, f64)> {
    if !(a > 1.0 && b > a) {
        return Err(Error::Domain(format!("need b > a > 1, got a={a}, b={b}")));
    }
    let alpha = a.ln() / b.ln();
    let c = a * 2f64.powf(-alpha) / (b - a) + 2.0 * a * (2.0 * b).powf(1.0 - alpha) / (a - 1.0);
    Ok((alpha, c))
}

/// `γ` as a circle function (unchecked precision; callers validate once).
pub struct Gamma(pub LacunarySeries);
/// `ψ` as a circle function.
pub struct Psi(pub LacunarySeries);

impl CircleFunction for Gamma {
    fn eval(&self, t: &BinaryAngle) -> Complex64 {
        self.0.gamma_unchecked(t)
    }
}

impl CircleFunction for Psi {
    fn eval(&self, t: &BinaryAngle) -> Complex64 {
        self.0.psi_unchecked(t)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn angle(p: u64, q: u64) -> BinaryAngle {
        BinaryAngle::from_ratio(p, q, 256).unwrap()
    }

    #[test]
    fn geometric_value_at_one_and_minus_one() {
        let s = LacunarySeries::standard(22);
        for t in [angle(0, 1), angle(1, 2)] {
            let (v, e) = s.gamma_eval(&t).unwrap();
            assert!((v - Complex64::new(8.0 / 7.0, 0.0)).norm() <= e + 1e-15);
        }
    }

    #[test]
    fn gamma_at_i_brute_force() {
        // 512 · 1/4 is an integer, so every term is 1.
        let s = LacunarySeries::standard(12);
        let (v, e) = s.gamma_eval(&angle(1, 4)).unwrap();
        let brute: f64 = (1..=12).map(|n| 8f64.powi(1 - n)).sum();
        assert!((v.re - brute).abs() < 1e-15 && v.im.abs() < 1e-15);
        assert!((v.re - 8.0 / 7.0).abs() <= e);
    }

    #[test]
    fn psi_at_one() {
        let s = LacunarySeries::standard(22);
        let (v, e) = s.psi_eval(&angle(0, 1)).unwrap();
        assert!((v.re - 16.0 / 7.0).abs() <= e);
    }

    #[test]
    fn precision_gate() {
        let s = LacunarySeries::standard(23);
        assert_eq!(s.required_bits(), 260);
        assert!(matches!(s.gamma_eval(&angle(1, 3)), Err(Error::PrecisionExhausted { .. })));
        assert!(LacunarySeries::standard(22).gamma_eval(&angle(1, 3)).is_ok());
    }

    #[test]
    fn holder_constants() {
        let (alpha, c) = holder_constant(8.0, 512.0).unwrap();
        assert!((alpha - 1.0 / 3.0).abs() < 1e-15);
        let expect = 8.0 * 2f64.powf(-1.0 / 3.0) / 504.0 + 16.0 * 1024f64.powf(2.0 / 3.0) / 7.0;
        assert!((c - expect).abs() < 1e-12 * expect);
        assert!((holder_constant(2.0, 4.0).unwrap().0 - 0.5).abs() < 1e-15);
        assert!(holder_constant(4.0, 4.0).is_err());
        assert!(holder_constant(1.0, 4.0).is_err());
    }

    #[test]
    fn tail_default() {
        let s = LacunarySeries::default();
        assert!((s.tail() - 8f64.powi(-11) / 7.0).abs() < 1e-25);
        assert!(s.tail() < 1.7e-11);
    }

    proptest! {
        #[test]
        fn tail_bound_is_honest(p in 0u64..u64::MAX, q in 1u64..u64::MAX, n in 1usize..10) {
            let t = angle(p % q, q);
            let short = LacunarySeries::standard(n);
            let long = LacunarySeries::standard(20);
            let d = (short.gamma_unchecked(&t) - long.gamma_unchecked(&t)).norm();
            prop_assert!(d <= short.tail() + 1e-14);
        }

        #[test]
        fn real_coefficients_give_conjugate_symmetry(p in 0u64..u64::MAX, q in 2u64..u64::MAX) {
            let s = LacunarySeries::default();
            let t = angle(p % q, q);
            let g = s.gamma_unchecked(&t);
            let gc = s.gamma_unchecked(&t.conj());
            prop_assert!((gc - g.conj()).norm() < 1e-14);
            let psi = s.psi_unchecked(&t);
            prop_assert!(psi.im.abs() < 1e-14);
            prop_assert!((s.psi_unchecked(&t.conj()) - psi.conj()).norm() < 1e-14);
        }

        #[test]
        fn enclosure_contains_samples(p in 0u64..u64::MAX, level in 1u32..60, frac in 0.0f64..1.0) {
            let s = LacunarySeries::default();
            // dyadic cell of the given level containing p/2^64
            let lo = BinaryAngle::from_dyadic(p >> (64 - level.min(63)), level.min(63), 256).unwrap();
            let level = level.min(63);
            let (c, r) = s.gamma_enclosure(&lo, level);
            let off = BinaryAngle::from_f64(frac * 2f64.powi(-(level as i32)), 256).unwrap();
            let t = lo.wrapping_add(&off);
            prop_assert!((s.gamma_unchecked(&t) - c).norm() <= r);
        }
    }
}
