//! The hardness measure `m(v)` and the biased index sets built from it.
//!
//! `m(v)` is the smallest `s > 0` with `s >= |I_s(v)|`, where
//! `I_s(v) = {n : min(v_n, 1 - v_n) < 1/s}`. The minimum is always attained
//! either at an integer or at a breakpoint `s = 1/θ_n`, so scale values are
//! carried as a [`Threshold`] that remembers which of the two it is. Every
//! comparison against `1/s` is then evaluated exactly (a fused multiply-add
//! has a single rounding, so its sign is exact), and the strict inequalities
//! of the definitions hold without any tolerance.

use std::cmp::Ordering;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, PartialEq)]
pub enum ComplexityError {
    #[error("probability vector is empty")]
    Empty,
    #[error("entry {index} = {value} is not a probability")]
    OutOfRange { index: usize, value: f64 },
    #[error("scale must be positive and finite, got {0}")]
    BadScale(f64),
}

/// A positive scale `s`, stored so that `1/s` comparisons are exact.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub enum Threshold {
    /// `s` itself.
    Real(f64),
    /// `s = 1/θ` for the stored `θ > 0`.
    Reciprocal(f64),
}

#[inline]
fn sign_of_product_minus_one(a: f64, b: f64) -> Ordering {
    let r = a.mul_add(b, -1.0);
    if r < 0.0 {
        Ordering::Less
    } else if r > 0.0 {
        Ordering::Greater
    } else {
        Ordering::Equal
    }
}

impl Threshold {
    pub fn value(self) -> f64 {
        match self {
            Threshold::Real(s) => s,
            Threshold::Reciprocal(t) => 1.0 / t,
        }
    }

    /// `x < 1/s`.
    #[inline]
    pub fn below_reciprocal(self, x: f64) -> bool {
        match self {
            Threshold::Real(s) => sign_of_product_minus_one(x, s) == Ordering::Less,
            Threshold::Reciprocal(t) => x < t,
        }
    }

    /// `x <= 1/s`.
    #[inline]
    pub fn at_most_reciprocal(self, x: f64) -> bool {
        match self {
            Threshold::Real(s) => sign_of_product_minus_one(x, s) != Ordering::Greater,
            Threshold::Reciprocal(t) => x <= t,
        }
    }

    /// `s >= count`.
    pub fn covers(self, count: usize) -> bool {
        let c = count as f64;
        match self {
            Threshold::Real(s) => s >= c,
            Threshold::Reciprocal(t) => sign_of_product_minus_one(c, t) != Ordering::Greater,
        }
    }

    /// Exact ordering of the represented scales.
    pub fn cmp_exact(self, other: Threshold) -> Ordering {
        use Threshold::*;
        match (self, other) {
            (Real(a), Real(b)) => a.total_cmp(&b),
            (Reciprocal(a), Reciprocal(b)) => b.total_cmp(&a),
            // a vs 1/t  <=>  a*t vs 1
            (Real(a), Reciprocal(t)) => sign_of_product_minus_one(a, t),
            (Reciprocal(t), Real(a)) => sign_of_product_minus_one(a, t).reverse(),
        }
    }

    /// Smallest integer `k >= s`.
    pub fn ceil(self) -> usize {
        match self {
            Threshold::Real(s) => s.ceil() as usize,
            Threshold::Reciprocal(t) => {
                let mut k = (1.0 / t).ceil() as usize;
                // k >= 1/t  <=>  k*t >= 1
                while k > 0 && sign_of_product_minus_one((k - 1) as f64, t) != Ordering::Less {
                    k -= 1;
                }
                while sign_of_product_minus_one(k as f64, t) == Ordering::Less {
                    k += 1;
                }
                k
            }
        }
    }

    /// Largest integer `k` with `2k <= s`.
    pub fn floor_half(self) -> usize {
        match self {
            Threshold::Real(s) => (s / 2.0).floor() as usize,
            Threshold::Reciprocal(t) => {
                let fits = |k: usize| sign_of_product_minus_one(2.0 * k as f64, t) != Ordering::Greater;
                let mut k = (0.5 / t).floor() as usize;
                while k > 0 && !fits(k) {
                    k -= 1;
                }
                while fits(k + 1) {
                    k += 1;
                }
                k
            }
        }
    }

    fn validate(self) -> Result<Self, ComplexityError> {
        let ok = match self {
            Threshold::Real(s) => s.is_finite() && s > 0.0,
            Threshold::Reciprocal(t) => t.is_finite() && t > 0.0,
        };
        if ok {
            Ok(self)
        } else {
            Err(ComplexityError::BadScale(self.value()))
        }
    }
}

impl From<f64> for Threshold {
    fn from(s: f64) -> Self {
        Threshold::Real(s)
    }
}

impl PartialOrd for Threshold {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp_exact(*other))
    }
}

/// Entry-wise `θ = min(v, 1 - v)`.
#[derive(Debug, Clone, PartialEq)]
pub struct BiasProfile {
    pub v: Vec<f64>,
    pub theta: Vec<f64>,
}

impl BiasProfile {
    pub fn new(v: &[f64]) -> Result<Self, ComplexityError> {
        check_probabilities(v)?;
        Ok(Self {
            v: v.to_vec(),
            theta: v.iter().map(|&x| x.min(1.0 - x)).collect(),
        })
    }
}

fn check_probabilities(v: &[f64]) -> Result<(), ComplexityError> {
    if v.is_empty() {
        return Err(ComplexityError::Empty);
    }
    for (index, &value) in v.iter().enumerate() {
        if !(0.0..=1.0).contains(&value) {
            return Err(ComplexityError::OutOfRange { index, value });
        }
    }
    Ok(())
}

/// `m(v)`, the complexity of a probability vector.
///
/// Candidates are the integers `1..=N` and the breakpoints `1/θ_n`; the
/// feasible set `{s : s >= f(s)}` is an up-set, so the first feasible
/// candidate in increasing order is the minimum.
pub fn m_value(v: &[f64]) -> Result<Threshold, ComplexityError> {
    let profile = BiasProfile::new(v)?;
    let mut theta = profile.theta;
    theta.sort_by(f64::total_cmp);

    let n = theta.len();
    let mut candidates: Vec<Threshold> = (1..=n).map(|c| Threshold::Real(c as f64)).collect();
    candidates.extend(theta.iter().filter(|&&t| t > 0.0).map(|&t| Threshold::Reciprocal(t)));
    candidates.sort_by(|a, b| a.cmp_exact(*b));

    // f(s) = #{θ < 1/s}; θ is sorted so the admitted entries form a prefix.
    let count = |s: Threshold| theta.partition_point(|&t| s.below_reciprocal(t));
    let m = candidates
        .into_iter()
        .find(|&s| s.covers(count(s)))
        .expect("s = N is always feasible");
    Ok(m)
}

/// `I_s(v) = {n : min(v_n, 1 - v_n) < 1/s}`, 0-based indices.
pub fn biased_index_set(v: &[f64], s: impl Into<Threshold>) -> Result<Vec<usize>, ComplexityError> {
    let s = s.into().validate()?;
    let profile = BiasProfile::new(v)?;
    Ok(profile
        .theta
        .iter()
        .enumerate()
        .filter(|(_, &t)| s.below_reciprocal(t))
        .map(|(n, _)| n)
        .collect())
}

/// `B(v, z) = {j : v_j < 1/z}`, 0-based indices. One-sided, unlike [`biased_index_set`].
pub fn threshold_set(v: &[f64], z: impl Into<Threshold>) -> Result<Vec<usize>, ComplexityError> {
    let z = z.into().validate()?;
    check_probabilities(v)?;
    Ok(v.iter()
        .enumerate()
        .filter(|(_, &x)| z.below_reciprocal(x))
        .map(|(j, _)| j)
        .collect())
}
