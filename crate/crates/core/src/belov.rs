//! Exact-rational check of the hypotheses that make `φ(x) = Σ a_n e^{iλ_n x}`
//! attain a value uncountably often on a short interval.
//!
//! All quantities are `BigRational`. The frequencies are `λ_n = 2π·c·qⁿ`;
//! wherever `2π` does not cancel it is replaced by the end of the rational
//! enclosure [`TWO_PI_LO`, `TWO_PI_HI`] that makes the check harder, so a
//! pass is a proof and a failure may be an artefact only at the 1e-14 level.

use num_bigint::BigInt;
use num_rational::BigRational;
use num_traits::{One, Signed, ToPrimitive, Zero};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const TWO_PI_LO: (i64, i64) = (628_318_530_717_958, 100_000_000_000_000);
const TWO_PI_HI: (i64, i64) = (628_318_530_717_959, 100_000_000_000_000);

fn rat(n: i64, d: i64) -> BigRational {
    BigRational::new(BigInt::from(n), BigInt::from(d))
}

pub fn two_pi_bounds() -> (BigRational, BigRational) {
    (rat(TWO_PI_LO.0, TWO_PI_LO.1), rat(TWO_PI_HI.0, TWO_PI_HI.1))
}

/// Parses `"p"`, `"p/q"` or a finite decimal such as `"0.125"`.
pub fn parse_rational(s: &str) -> Result<BigRational> {
    let s = s.trim();
    let bad = || Error::Parse(format!("not a rational number: {s:?}"));
    if let Some((p, q)) = s.split_once('/') {
        let p: BigInt = p.trim().parse().map_err(|_| bad())?;
        let q: BigInt = q.trim().parse().map_err(|_| bad())?;
        if q.is_zero() {
            return Err(bad());
        }
        return Ok(BigRational::new(p, q));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let digits = format!("{int}{frac}");
        let p: BigInt = digits.parse().map_err(|_| bad())?;
        let q = num_traits::pow(BigInt::from(10), frac.len());
        return Ok(BigRational::new(p, q));
    }
    let p: BigInt = s.parse().map_err(|_| bad())?;
    Ok(BigRational::from_integer(p))
}

mod rational_str {
    use super::*;
    use serde::{Deserializer, Serializer};

    pub fn serialize<S: Serializer>(r: &BigRational, s: S) -> std::result::Result<S::Ok, S::Error> {
        s.serialize_str(&r.to_string())
    }

    pub fn deserialize<'de, D: Deserializer<'de>>(d: D) -> std::result::Result<BigRational, D::Error> {
        let s = String::deserialize(d)?;
        parse_rational(&s).map_err(serde::de::Error::custom)
    }
}

/// Rule generating the coefficients `a_n`. Only geometric rules have the
/// closed-form tails the exact check needs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CoefficientRule {
    /// `a_n = first · ratio^{n−1}`.
    Geometric {
        #[serde(with = "rational_str")]
        first: BigRational,
        #[serde(with = "rational_str")]
        ratio: BigRational,
    },
    /// Anything else; rejected by the checker.
    Other { description: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BelovParams {
    #[serde(with = "rational_str")]
    pub alpha: BigRational,
    #[serde(with = "rational_str")]
    pub beta: BigRational,
    /// Lower bound for the frequency ratio; must exceed 2.
    #[serde(with = "rational_str")]
    pub lambda: BigRational,
    /// Lipschitz constant of the smooth part `g`.
    #[serde(with = "rational_str")]
    pub lipschitz: BigRational,
    pub coefficients: CoefficientRule,
    /// `λ_n = 2π · freq_scale · freq_ratioⁿ`.
    #[serde(with = "rational_str")]
    pub freq_scale: BigRational,
    #[serde(with = "rational_str")]
    pub freq_ratio: BigRational,
}

impl Default for BelovParams {
    /// `M = 0`, `λ = 2⁹`, `β = 7`, `α = 1/8`, `a_n = 8^{1−n}`, `λ_n = 2π·2^{9n}`.
    fn default() -> Self {
        Self {
            alpha: rat(1, 8),
            beta: rat(7, 1),
            lambda: rat(512, 1),
            lipschitz: BigRational::zero(),
            coefficients: CoefficientRule::Geometric { first: BigRational::one(), ratio: rat(1, 8) },
            freq_scale: BigRational::one(),
            freq_ratio: rat(512, 1),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Inequality {
    /// `α(1+β) ≤ 1`
    AlphaBeta,
    /// `λ_{m+1}/λ_m ≥ λ`
    FrequencyRatio,
    /// `|a_m| ≤ β Σ_{n>m} |a_n|`
    CoefficientTail,
    /// `2π(λ−1)/(λ−2)(M + Σ_{n≤m} |a_n|λ_n) ≤ α|a_{m+1}|λ_{m+1}`
    Growth,
    /// `β/(1+β) Σ|a_n|`, reported against 1
    LowerRadius,
    /// `(1−α) Σ|a_n|`, reported against 1
    UpperRadius,
}

/// One inequality instance. `margin = rhs − lhs`; the check passes iff
/// `margin ≥ 0`. The radius records compare against 1 with `pass` meaning
/// equality.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BelovRecord {
    pub inequality: Inequality,
    pub m: Option<u32>,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
    pub margin: f64,
    pub lhs_exact: String,
    pub rhs_exact: String,
    pub margin_exact: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BelovReport {
    pub m_max: u32,
    pub records: Vec<BelovRecord>,
    /// `Σ|a_n|`.
    pub coefficient_sum: String,
    /// Half-width `Δ = 2πλ/((λ−2)λ₁)` of the interval, in units of `x`.
    pub delta: String,
    pub all_pass: bool,
}

impl BelovReport {
    pub fn failures(&self) -> impl Iterator<Item = &BelovRecord> {
        self.records.iter().filter(|r| !r.pass)
    }

    pub fn record(&self, inequality: Inequality, m: Option<u32>) -> Option<&BelovRecord> {
        self.records.iter().find(|r| r.inequality == inequality && r.m == m)
    }
}

fn to_f64(r: &BigRational) -> f64 {
    r.to_f64().unwrap_or(f64::NAN)
}

fn record(inequality: Inequality, m: Option<u32>, lhs: BigRational, rhs: BigRational, pass: bool) -> BelovRecord {
    let margin = &rhs - &lhs;
    BelovRecord {
        inequality,
        m,
        lhs: to_f64(&lhs),
        rhs: to_f64(&rhs),
        pass,
        margin: to_f64(&margin),
        lhs_exact: lhs.to_string(),
        rhs_exact: rhs.to_string(),
        margin_exact: margin.to_string(),
    }
}

fn leq(inequality: Inequality, m: Option<u32>, lhs: BigRational, rhs: BigRational) -> BelovRecord {
    let pass = lhs <= rhs;
    record(inequality, m, lhs, rhs, pass)
}

/// Checks every hypothesis for `1 ≤ m ≤ m_max`.
pub fn belov_check(p: &BelovParams, m_max: u32) -> Result<BelovReport> {
    let (first, ratio) = match &p.coefficients {
        CoefficientRule::Geometric { first, ratio } => (first.abs(), ratio.abs()),
        CoefficientRule::Other { description } => {
            return Err(Error::Unsupported(format!(
                "coefficient rule {description:?}: only geometric rules have closed-form tails"
            )))
        }
    };
    let two = rat(2, 1);
    if p.lambda <= two {
        return Err(Error::Domain(format!("lambda must exceed 2, got {}", p.lambda)));
    }
    if ratio >= BigRational::one() || first.is_zero() {
        return Err(Error::Domain("coefficient series must be summable and nonzero".into()));
    }
    if !p.alpha.is_positive() || !p.beta.is_positive() || p.lipschitz.is_negative() {
        return Err(Error::Domain("alpha, beta must be positive and M non-negative".into()));
    }
    if !p.freq_scale.is_positive() || !p.freq_ratio.is_positive() {
        return Err(Error::Domain("frequencies must be positive".into()));
    }

    let one = BigRational::one();
    let (_, two_pi_hi) = two_pi_bounds();
    let a = |n: u32| &first * num_traits::pow(ratio.clone(), (n - 1) as usize);
    // λ_n / 2π
    let nu = |n: u32| &p.freq_scale * num_traits::pow(p.freq_ratio.clone(), n as usize);
    let tail_after = |m: u32| &first * num_traits::pow(ratio.clone(), m as usize) / (&one - &ratio);
    let total = &first / (&one - &ratio);
    let kappa = (&p.lambda - &one) / (&p.lambda - &two);

    let mut records = vec![leq(Inequality::AlphaBeta, None, &p.alpha * (&one + &p.beta), one.clone())];

    // Σ_{n≤m} |a_n| ν_n, accumulated
    let mut partial = BigRational::zero();
    for m in 1..=m_max {
        records.push(leq(Inequality::FrequencyRatio, Some(m), p.lambda.clone(), nu(m + 1) / nu(m)));
        records.push(leq(Inequality::CoefficientTail, Some(m), a(m), &p.beta * tail_after(m)));

        // Divided through by 2π: κ(M + 2π Σ a_n ν_n) ≤ α a_{m+1} ν_{m+1}.
        // The remaining 2π sits on the left, so take its upper bound.
        partial += a(m) * nu(m);
        let lhs = &kappa * (&p.lipschitz + &two_pi_hi * &partial);
        records.push(leq(Inequality::Growth, Some(m), lhs, &p.alpha * a(m + 1) * nu(m + 1)));
    }

    let lower = &p.beta / (&one + &p.beta) * &total;
    let upper = (&one - &p.alpha) * &total;
    let eq_lower = lower == one;
    let eq_upper = upper == one;
    records.push(record(Inequality::LowerRadius, None, lower, one.clone(), eq_lower));
    records.push(record(Inequality::UpperRadius, None, upper, one.clone(), eq_upper));

    // Δ = 2πλ/((λ−2)·2π·ν₁)
    let delta = &p.lambda / ((&p.lambda - &two) * nu(1));
    let all_pass = records.iter().all(|r| r.pass);
    Ok(BelovReport { m_max, records, coefficient_sum: total.to_string(), delta: delta.to_string(), all_pass })
}
