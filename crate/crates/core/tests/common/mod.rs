//! Oracles shared by the integration tests. Everything here works from the
//! instance spec directly and does not call the library's own enumeration.
#![allow(dead_code)]

pub mod staged;

use hcb_core::complexity::Threshold;
use hcb_core::model::{build_instance, Action, HcbInstance, InstanceSpec, RewardFunction};
use hcb_core::rng::Stream;

pub fn dense_instance(rng: &mut Stream, n: usize) -> HcbInstance {
    let a = rng.uniform(0.05, 0.95);
    let cond = (0..2)
        .map(|_| (0..n).map(|_| rng.uniform(0.02, 0.98)).collect())
        .collect();
    let table = (0..1usize << n).map(|_| rng.uniform(0.0, 1.0)).collect();
    build_instance(InstanceSpec {
        k: 2,
        n,
        alpha: vec![1.0 - a, a],
        cond,
        reward: RewardFunction::Dense { table },
    })
    .unwrap()
}

pub fn reward_at(spec: &InstanceSpec, x: usize) -> f64 {
    match &spec.reward {
        RewardFunction::Dense { table } => table[x],
        RewardFunction::ConstantHalf => 0.5,
        RewardFunction::TargetBump { epsilon, target } => {
            if target.iter().all(|&(l, b)| (x >> l & 1) as u8 == b) {
                0.5 + epsilon
            } else {
                0.5
            }
        }
    }
}

/// `P(X = x | S = s)` under `action`, by a product over arms.
pub fn arm_law(spec: &InstanceSpec, s: usize, x: usize, action: Action) -> f64 {
    (0..spec.n)
        .map(|j| {
            let p = match action {
                Action::DoArm { j: i, x: v } if i == j => f64::from(v),
                _ => spec.cond[s][j],
            };
            if x >> j & 1 == 1 {
                p
            } else {
                1.0 - p
            }
        })
        .product()
}

/// Joint `(s, x, P)` under `action`.
pub fn joint(spec: &InstanceSpec, action: Action) -> Vec<(usize, usize, f64)> {
    let mut out = Vec::new();
    for s in 0..spec.k {
        let w = match action {
            Action::DoContext { s: forced } => {
                if forced == s {
                    1.0
                } else {
                    0.0
                }
            }
            _ => spec.alpha[s],
        };
        for x in 0..1usize << spec.n {
            out.push((s, x, w * arm_law(spec, s, x, action)));
        }
    }
    out
}

pub fn mu(spec: &InstanceSpec, action: Action) -> f64 {
    joint(spec, action)
        .into_iter()
        .map(|(_, x, p)| p * reward_at(spec, x))
        .sum()
}

/// `P(Y = 1 | S = s, X_i = v)` under `action`; `None` if the event is null.
pub fn conditional(spec: &InstanceSpec, action: Action, s: usize, i: usize, v: u8) -> Option<f64> {
    let (mut num, mut den) = (0.0, 0.0);
    for (sc, x, p) in joint(spec, action) {
        if sc == s && (x >> i & 1) as u8 == v {
            num += p * reward_at(spec, x);
            den += p;
        }
    }
    (den > 0.0).then(|| num / den)
}

/// A positive rational `num / den` with exact `u128` arithmetic.
#[derive(Debug, Clone, Copy)]
pub struct Ratio {
    pub num: u128,
    pub den: u128,
}

impl Ratio {
    pub fn int(k: u128) -> Self {
        Ratio { num: k, den: 1 }
    }

    /// `1 / θ` for `θ ∈ [1e-4, 1)`.
    pub fn recip(theta: f64) -> Self {
        let (m, e) = dyadic(theta);
        Ratio { num: 1u128 << e, den: m }
    }

    pub fn lt(self, o: Ratio) -> bool {
        self.num * o.den < o.num * self.den
    }

    pub fn eq(self, o: Ratio) -> bool {
        self.num * o.den == o.num * self.den
    }
}

/// `θ = m / 2^e` exactly.
pub fn dyadic(theta: f64) -> (u128, u32) {
    assert!((1e-4..1.0).contains(&theta), "{theta}");
    let bits = theta.to_bits();
    let m = (bits & ((1 << 52) - 1)) | (1 << 52);
    let exp = ((bits >> 52) & 0x7ff) as i32 - 1075;
    (u128::from(m), (-exp) as u32)
}

/// `θ < 1/s`, exactly.
pub fn below_reciprocal(theta: f64, s: Ratio) -> bool {
    let (m, e) = dyadic(theta);
    m * s.num < s.den << e
}

pub fn ratio_of(t: Threshold) -> Ratio {
    match t {
        Threshold::Real(s) => {
            assert_eq!(s.fract(), 0.0, "non-integer real threshold {s}");
            Ratio::int(s as u128)
        }
        Threshold::Reciprocal(theta) => Ratio::recip(theta),
    }
}

/// Minimum of `{s > 0 : s >= #{n : θ_n < 1/s}}` over a grid of step 1/64 up
/// to `N`, every integer and every breakpoint `1/θ_n`.
pub fn m_oracle(v: &[f64]) -> Ratio {
    let theta: Vec<f64> = v.iter().map(|&x| x.min(1.0 - x)).collect();
    let n = v.len() as u128;
    let mut candidates: Vec<Ratio> = (1..=64 * n).map(|i| Ratio { num: i, den: 64 }).collect();
    candidates.extend(theta.iter().map(|&t| Ratio::recip(t)));
    let mut best: Option<Ratio> = None;
    for s in candidates {
        let f = theta.iter().filter(|&&t| below_reciprocal(t, s)).count() as u128;
        let feasible = s.num >= f * s.den;
        if feasible && best.is_none_or(|b| s.lt(b)) {
            best = Some(s);
        }
    }
    best.unwrap()
}

/// Entries in `[1e-4, 1 - 1e-4]`, with a share of exact reciprocals and
/// repeated values so that ties and breakpoints coincide often.
pub fn random_probability_vector(rng: &mut Stream, max_len: u64) -> Vec<f64> {
    let n = 1 + rng.below(max_len) as usize;
    let pool: Vec<f64> = (0..3).map(|_| rng.uniform(0.0001, 0.9999)).collect();
    (0..n)
        .map(|_| match rng.below(5) {
            0 => 1.0 / (2 + rng.below(40)) as f64,
            1 => pool[rng.below(3) as usize],
            2 => rng.uniform(0.0001, 0.02),
            _ => rng.uniform(0.0001, 0.9999),
        })
        .collect()
}
