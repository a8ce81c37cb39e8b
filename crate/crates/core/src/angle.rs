//! Points of the unit circle stored as exact binary fractions.
//!
//! A [`BinaryAngle`] holds `t ∈ [0, 1)` with `B` fractional bits and stands
//! for `z = e^{2πit}`. Raising `z` to a power of two is then a left shift of
//! the fraction, which is exact. This is what makes `z^{2^{9n}}` computable
//! for `n` up to the precision budget, where a floating-point angle would
//! lose every significant digit after a few doublings.

use std::cmp::Ordering;
use std::f64::consts::PI;
use std::fmt;

use num_complex::Complex64;

use crate::error::{Error, Result};

/// Number of 64-bit limbs backing an angle; caps the precision at 512 bits.
pub const MAX_LIMBS: usize = 8;
pub const MAX_BITS: u32 = 64 * MAX_LIMBS as u32;
pub const MIN_BITS: u32 = 56;
pub const DEFAULT_BITS: u32 = 256;

/// Bits that must survive a shift for the result to be usable as an `f64`.
pub const F64_GUARD_BITS: u32 = 53;

/// Fixed-point binary fraction in `[0, 1)`.
///
/// Limb 0 holds the 64 most significant fractional bits. Bits past the
/// precision are always zero.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct BinaryAngle {
    limbs: [u64; MAX_LIMBS],
    bits: u32,
}

fn check_bits(bits: u32) -> Result<()> {
    if !(MIN_BITS..=MAX_BITS).contains(&bits) || !bits.is_multiple_of(4) {
        return Err(Error::Domain(format!(
            "angle precision must be a multiple of 4 in [{MIN_BITS}, {MAX_BITS}], got {bits}"
        )));
    }
    Ok(())
}

impl BinaryAngle {
    pub fn zero(bits: u32) -> Result<Self> {
        check_bits(bits)?;
        Ok(Self { limbs: [0; MAX_LIMBS], bits })
    }

    pub fn bits(&self) -> u32 {
        self.bits
    }

    pub fn limbs(&self) -> &[u64] {
        &self.limbs[..self.limb_count()]
    }

    fn limb_count(&self) -> usize {
        self.bits.div_ceil(64) as usize
    }

    fn mask_tail(&mut self) {
        let full = (self.bits / 64) as usize;
        let rem = self.bits % 64;
        if rem != 0 {
            self.limbs[full] &= !0u64 << (64 - rem);
            for l in &mut self.limbs[full + 1..] {
                *l = 0;
            }
        } else {
            for l in &mut self.limbs[full..] {
                *l = 0;
            }
        }
    }

    /// Exact conversion of the fractional part of `t`.
    pub fn from_f64(t: f64, bits: u32) -> Result<Self> {
        check_bits(bits)?;
        if !t.is_finite() {
            return Err(Error::Domain(format!("non-finite angle {t}")));
        }
        let frac = t - t.floor();
        let mut a = Self::zero(bits)?;
        // frac has at most 53 significant bits, so two limbs hold it exactly.
        let hi = frac * 2f64.powi(64);
        let top = hi.floor();
        a.limbs[0] = if top >= 18446744073709551615.0 { u64::MAX } else { top as u64 };
        let lo = (hi - top) * 2f64.powi(64);
        a.limbs[1] = lo as u64;
        a.mask_tail();
        Ok(a)
    }

    /// `p/q mod 1` filled bit by bit to the full precision (periodic
    /// expansion truncated, never rounded).
    pub fn from_ratio(p: u64, q: u64, bits: u32) -> Result<Self> {
        check_bits(bits)?;
        if q == 0 {
            return Err(Error::Domain("zero denominator".into()));
        }
        let mut a = Self::zero(bits)?;
        let q = q as u128;
        let mut rem = (p as u128) % q;
        for i in 0..bits as usize {
            rem <<= 1;
            if rem >= q {
                rem -= q;
                a.limbs[i / 64] |= 1u64 << (63 - (i % 64));
            }
        }
        Ok(a)
    }

    /// The dyadic rational `num / 2^level`, reduced mod 1.
    pub fn from_dyadic(num: u64, level: u32, bits: u32) -> Result<Self> {
        check_bits(bits)?;
        if level > bits {
            return Err(Error::PrecisionExhausted { shift: level, needed: level, bits });
        }
        let mut a = Self::zero(bits)?;
        for b in 0..64u32 {
            if (num >> b) & 1 == 1 && level > b {
                a.set_bit(level - b);
            }
        }
        Ok(a)
    }

    /// Sets fractional bit `pos` (1-based: bit 1 is worth 1/2).
    fn set_bit(&mut self, pos: u32) {
        let i = (pos - 1) as usize;
        self.limbs[i / 64] |= 1u64 << (63 - (i % 64));
    }

    pub fn bit(&self, pos: u32) -> bool {
        if pos == 0 || pos > self.bits {
            return false;
        }
        let i = (pos - 1) as usize;
        (self.limbs[i / 64] >> (63 - (i % 64))) & 1 == 1
    }

    pub fn is_zero(&self) -> bool {
        self.limbs.iter().all(|&l| l == 0)
    }

    /// Fractional part of `2^k · t`, i.e. the angle of `z^{2^k}`.
    ///
    /// Fails when fewer than 53 bits of the angle would remain meaningful.
    pub fn pow2(&self, k: u32) -> Result<Self> {
        let needed = k + F64_GUARD_BITS;
        if needed > self.bits {
            return Err(Error::PrecisionExhausted { shift: k, needed, bits: self.bits });
        }
        Ok(self.shl_wrapping(k))
    }

    /// Left shift with wrap mod 1 and no precision check.
    pub fn shl_wrapping(&self, k: u32) -> Self {
        let mut out = Self { limbs: [0; MAX_LIMBS], bits: self.bits };
        let limb_shift = (k / 64) as usize;
        let bit_shift = k % 64;
        for i in 0..MAX_LIMBS {
            let src = i + limb_shift;
            if src >= MAX_LIMBS {
                break;
            }
            let mut v = self.limbs[src] << bit_shift;
            if bit_shift != 0 && src + 1 < MAX_LIMBS {
                v |= self.limbs[src + 1] >> (64 - bit_shift);
            }
            out.limbs[i] = v;
        }
        out
    }

    /// The 64 bits of `frac(2^k t)` directly after the binary point.
    #[inline]
    pub fn window(&self, k: u32) -> u64 {
        let limb = (k / 64) as usize;
        let b = k % 64;
        if limb >= MAX_LIMBS {
            return 0;
        }
        let hi = self.limbs[limb] << b;
        if b == 0 || limb + 1 >= MAX_LIMBS {
            hi
        } else {
            hi | (self.limbs[limb + 1] >> (64 - b))
        }
    }

    /// `frac(2^k t)` rounded to `f64`.
    #[inline]
    pub fn window_f64(&self, k: u32) -> f64 {
        self.window(k) as f64 * 2f64.powi(-64)
    }

    /// `e^{2πi·frac(2^k t)}`.
    #[inline]
    pub fn window_complex(&self, k: u32) -> Complex64 {
        unit_from_window(self.window(k))
    }

    pub fn to_f64(&self) -> f64 {
        let mut acc = 0.0;
        let mut scale = 2f64.powi(-64);
        for &l in self.limbs() {
            acc += l as f64 * scale;
            scale *= 2f64.powi(-64);
        }
        acc
    }

    /// `e^{2πit}` in double precision.
    pub fn to_complex(&self) -> Complex64 {
        unit_from_window(self.limbs[0])
    }

    fn with_limbs(&self, limbs: [u64; MAX_LIMBS]) -> Self {
        let mut out = Self { limbs, bits: self.bits };
        out.mask_tail();
        out
    }

    /// `(self + other) mod 1`. The result carries the smaller precision.
    pub fn wrapping_add(&self, other: &Self) -> Self {
        let mut limbs = [0u64; MAX_LIMBS];
        let mut carry = 0u64;
        for i in (0..MAX_LIMBS).rev() {
            let (s1, c1) = self.limbs[i].overflowing_add(other.limbs[i]);
            let (s2, c2) = s1.overflowing_add(carry);
            limbs[i] = s2;
            carry = (c1 as u64) + (c2 as u64);
        }
        let mut out = self.with_limbs(limbs);
        out.bits = self.bits.min(other.bits);
        out.mask_tail();
        out
    }

    /// `(self − other) mod 1`.
    pub fn wrapping_sub(&self, other: &Self) -> Self {
        let mut limbs = [0u64; MAX_LIMBS];
        let mut borrow = 0u64;
        for i in (0..MAX_LIMBS).rev() {
            let (d1, b1) = self.limbs[i].overflowing_sub(other.limbs[i]);
            let (d2, b2) = d1.overflowing_sub(borrow);
            limbs[i] = d2;
            borrow = (b1 as u64) + (b2 as u64);
        }
        let mut out = self.with_limbs(limbs);
        out.bits = self.bits.min(other.bits);
        out.mask_tail();
        out
    }

    /// `(−t) mod 1`, the angle of `z̄ = z^{-1}`.
    pub fn conj(&self) -> Self {
        Self::zero(self.bits).expect("valid precision").wrapping_sub(self)
    }

    /// `t + 2^{-level} mod 1`.
    pub fn add_pow2_neg(&self, level: u32) -> Self {
        if level == 0 || level > self.bits {
            return *self;
        }
        let mut d = Self { limbs: [0; MAX_LIMBS], bits: self.bits };
        d.set_bit(level);
        self.wrapping_add(&d)
    }

    /// Whether `t < 1/q` holds exactly.
    pub fn less_than_reciprocal(&self, q: u64) -> bool {
        let mut carry: u128 = 0;
        for i in (0..MAX_LIMBS).rev() {
            let prod = self.limbs[i] as u128 * q as u128 + carry;
            carry = prod >> 64;
        }
        carry == 0
    }

    /// Chordal distance `|e^{2πis} − e^{2πit}| = 2|sin(π(s−t))|`, computed
    /// from the exact difference so it keeps relative accuracy for close
    /// points.
    pub fn chord(&self, other: &Self) -> f64 {
        2.0 * (PI * self.signed_offset(other).abs()).sin()
    }

    /// `self − other` reduced to `[−1/2, 1/2)`, rounded once to `f64`.
    pub fn signed_offset(&self, other: &Self) -> f64 {
        let d = self.wrapping_sub(other);
        if d.bit(1) {
            -d.conj().to_f64()
        } else {
            d.to_f64()
        }
    }

    /// Counter-clockwise arc length from `self` to `other`, in turns.
    pub fn arc_to(&self, other: &Self) -> f64 {
        other.wrapping_sub(self).to_f64()
    }

    /// Lowercase hexadecimal digits of the fraction, `bits/4` of them.
    pub fn to_hex(&self) -> String {
        let ndig = (self.bits / 4) as usize;
        let mut s = String::with_capacity(ndig);
        for i in 0..ndig {
            let limb = self.limbs[i / 16];
            let nib = (limb >> (60 - 4 * (i % 16))) & 0xf;
            s.push(char::from_digit(nib as u32, 16).expect("nibble"));
        }
        s
    }

    /// Inverse of [`to_hex`](Self::to_hex); precision is `4 · len`.
    pub fn from_hex(s: &str) -> Result<Self> {
        let s = s.trim();
        let bits = 4 * s.len() as u32;
        check_bits(bits)?;
        let mut a = Self::zero(bits)?;
        for (i, ch) in s.chars().enumerate() {
            let nib = ch
                .to_digit(16)
                .filter(|_| !ch.is_ascii_uppercase())
                .ok_or_else(|| Error::Parse(format!("bad hex digit {ch:?} in angle")))?;
            a.limbs[i / 16] |= (nib as u64) << (60 - 4 * (i % 16));
        }
        Ok(a)
    }
}

/// `e^{2πi u/2^64}` with the argument reduced to the first octant before
/// calling into `sin`/`cos`.
#[inline]
pub fn unit_from_window(u: u64) -> Complex64 {
    // Quadrant from the top two bits; remaining 62 bits give a fraction of a
    // quarter turn, which is converted without loss of relative accuracy.
    let quadrant = u >> 62;
    let r = u & ((1u64 << 62) - 1);
    let x = r as f64 * 2f64.powi(-62) * (PI / 2.0);
    let (s, c) = x.sin_cos();
    match quadrant {
        0 => Complex64::new(c, s),
        1 => Complex64::new(-s, c),
        2 => Complex64::new(-c, -s),
        _ => Complex64::new(s, -c),
    }
}

impl PartialOrd for BinaryAngle {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for BinaryAngle {
    fn cmp(&self, other: &Self) -> Ordering {
        self.limbs.cmp(&other.limbs)
    }
}

impl fmt::Debug for BinaryAngle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "BinaryAngle({:.17} @ {} bits)", self.to_f64(), self.bits)
    }
}

impl fmt::Display for BinaryAngle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.to_hex())
    }
}

impl serde::Serialize for BinaryAngle {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&self.to_hex())
    }
}

impl<'de> serde::Deserialize<'de> for BinaryAngle {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        let s = String::deserialize(d)?;
        BinaryAngle::from_hex(&s).map_err(serde::de::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn doubling_shifts_one_bit() {
        // 0.0111 (binary) -> 0.111
        let t = BinaryAngle::from_dyadic(0b0111, 4, 256).unwrap();
        let s = t.pow2(1).unwrap();
        assert_eq!(s, BinaryAngle::from_dyadic(0b111, 3, 256).unwrap());
    }

    #[test]
    fn one_third_times_512_is_two_thirds() {
        let bits = 256;
        let t = BinaryAngle::from_ratio(1, 3, bits).unwrap();
        let s = t.pow2(9).unwrap();
        assert!((s.to_f64() - 2.0 / 3.0).abs() <= 2f64.powi(-(bits as i32) + 9));
        // Exact: the shifted periodic fill equals the fill of 2/3 up to the
        // nine vacated trailing bits.
        let two_thirds = BinaryAngle::from_ratio(2, 3, bits).unwrap();
        let diff = two_thirds.wrapping_sub(&s);
        assert!(diff.less_than_reciprocal(1 << 40));
    }

    #[test]
    fn zero_is_fixed() {
        let z = BinaryAngle::zero(256).unwrap();
        for k in [0, 1, 9, 100, 203] {
            assert!(z.pow2(k).unwrap().is_zero());
        }
    }

    #[test]
    fn shift_beyond_budget_is_refused() {
        let t = BinaryAngle::from_ratio(1, 7, 256).unwrap();
        assert!(t.pow2(203).is_ok());
        assert!(matches!(t.pow2(204), Err(Error::PrecisionExhausted { .. })));
    }

    #[test]
    fn quarter_points() {
        let i = BinaryAngle::from_dyadic(1, 2, 256).unwrap().to_complex();
        assert!((i - Complex64::new(0.0, 1.0)).norm() < 1e-16);
        let m1 = BinaryAngle::from_dyadic(1, 1, 256).unwrap().to_complex();
        assert!((m1 + 1.0).norm() < 1e-16);
    }

    #[test]
    fn hex_round_trip_and_format() {
        let t = BinaryAngle::from_dyadic(1, 1, 64).unwrap();
        assert_eq!(t.to_hex(), "8000000000000000");
        let u = BinaryAngle::from_ratio(5, 11, 256).unwrap();
        assert_eq!(BinaryAngle::from_hex(&u.to_hex()).unwrap(), u);
        assert!(BinaryAngle::from_hex("80000000000000G0").is_err());
        assert!(BinaryAngle::from_hex("ABCDEF0123456789").is_err());
    }

    #[test]
    fn reciprocal_comparison_is_exact() {
        let t = BinaryAngle::from_ratio(1, 40320, 256).unwrap();
        // Truncated fill of 1/40320 lies just below 1/40320.
        assert!(t.less_than_reciprocal(40320));
        let u = t.add_pow2_neg(200);
        assert!(!u.less_than_reciprocal(40320) || u.to_f64() < 1.0 / 40320.0 + 1e-30);
        assert!(!BinaryAngle::from_ratio(1, 40319, 256).unwrap().less_than_reciprocal(40320));
    }

    #[test]
    fn chord_of_close_points_keeps_relative_accuracy() {
        let a = BinaryAngle::from_ratio(1, 3, 256).unwrap();
        let b = a.add_pow2_neg(120);
        let c = a.chord(&b);
        let expect = 2.0 * PI * 2f64.powi(-120);
        assert!((c / expect - 1.0).abs() < 1e-14);
    }

    proptest! {
        #[test]
        fn unit_modulus(u in any::<u64>()) {
            let z = unit_from_window(u);
            prop_assert!((z.norm() - 1.0).abs() <= 4.0 * f64::EPSILON);
        }

        #[test]
        fn shift_composes(p in 0u64..1_000_000, q in 1u64..1_000_000, j in 0u32..60, k in 0u32..60) {
            let t = BinaryAngle::from_ratio(p, q, 256).unwrap();
            prop_assert_eq!(t.pow2(j).unwrap().pow2(k).unwrap(), t.pow2(j + k).unwrap());
        }

        #[test]
        fn add_sub_inverse(p in 0u64..1_000_000, q in 1u64..1_000_000, r in 0u64..1000, s in 1u64..1000) {
            let a = BinaryAngle::from_ratio(p, q, 256).unwrap();
            let b = BinaryAngle::from_ratio(r, s, 256).unwrap();
            prop_assert_eq!(a.wrapping_add(&b).wrapping_sub(&b), a);
            prop_assert_eq!(a.conj().conj(), a);
        }

        #[test]
        fn window_matches_complex_power(p in 0u64..1_000_000, q in 1u64..1_000_000, k in 0u32..20) {
            let t = BinaryAngle::from_ratio(p, q, 256).unwrap();
            let z = t.to_complex();
            let direct = z.powu(1 << k);
            let shifted = t.window_complex(k);
            prop_assert!((direct - shifted).norm() < 1e-9);
        }
    }
}
