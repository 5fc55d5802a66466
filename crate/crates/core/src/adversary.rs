//! Lower-bound reward families: rewards that bump a single arm configuration
//! by `ε` so that `do(X_i = 1)` is optimal but hard to tell apart from the
//! flat reward `r_0 ≡ 1/2`.

use std::cmp::Ordering;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::agents::{run_episode, AgentError, Policy};
use crate::complexity::{m_value, ComplexityError, Threshold};
use crate::model::{build_instance, Action, HcbInstance, InstanceSpec, ModelError, RewardFunction};
use crate::rng::{Purpose, StreamKey};

#[derive(Debug, Error)]
pub enum AdversaryError {
    #[error("p must be sorted ascending with every entry <= 1/2")]
    UnsortedP,
    #[error("p and q lengths differ ({p} vs {q})")]
    Length { p: usize, q: usize },
    #[error("the isolated construction needs m(p) > 2, got {0}")]
    SmallM(f64),
    #[error("the lower bound needs N >= 4, got {0}")]
    FewArms(usize),
    #[error("T = {t} is below the required {min}")]
    ShortHorizon { t: usize, min: f64 },
    #[error("epsilon {0} is outside (0, 1/4)")]
    Epsilon(f64),
    #[error("alpha = {0} is not in (0, 1)")]
    Alpha(f64),
    #[error("member {0} is not in the family")]
    Member(usize),
    #[error("need at least 2 replications, got {0}")]
    Replications(usize),
    #[error(transparent)]
    Complexity(#[from] ComplexityError),
    #[error(transparent)]
    Model(#[from] ModelError),
    #[error(transparent)]
    Agent(#[from] AgentError),
}

/// Which arm configurations a member's bump covers.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// `x_i = 1` and `x_ℓ = 0` for the other `ℓ < ⌈m(p)⌉`.
    Isolated,
    /// `x_i = 1`.
    Coordinate,
}

impl std::fmt::Display for Shape {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Shape::Isolated => "isolated",
            Shape::Coordinate => "coordinate",
        })
    }
}

/// `r_i`: the flat reward plus `ε` on `target`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Member {
    pub index: usize,
    pub target: Vec<(usize, u8)>,
}

/// A base instance `(α, p, q)` with its bump rewards. `α = P(S = 1)`,
/// `p = P(X = 1 | S = 1)`, `q = P(X = 1 | S = 0)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AdversarialFamily {
    pub alpha: f64,
    pub p: Vec<f64>,
    pub q: Vec<f64>,
    pub m1: f64,
    pub shape: Shape,
    pub horizon: usize,
    pub epsilon: f64,
    pub members: Vec<Member>,
    pub hard_set: Vec<usize>,
}

fn check_pq(alpha: f64, p: &[f64], q: &[f64]) -> Result<(), AdversaryError> {
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(AdversaryError::Alpha(alpha));
    }
    if p.len() != q.len() {
        return Err(AdversaryError::Length {
            p: p.len(),
            q: q.len(),
        });
    }
    Ok(())
}

fn check_sorted_half(p: &[f64]) -> Result<(), AdversaryError> {
    let sorted = p.windows(2).all(|w| w[0] <= w[1]);
    if !sorted || p.iter().any(|&x| x > 0.5) {
        return Err(AdversaryError::UnsortedP);
    }
    Ok(())
}

fn isolated_m(p: &[f64]) -> Result<Threshold, AdversaryError> {
    check_sorted_half(p)?;
    let m = m_value(p)?;
    if m.cmp_exact(Threshold::Real(2.0)) != Ordering::Greater {
        return Err(AdversaryError::SmallM(m.value()));
    }
    Ok(m)
}

/// `I`: the `⌊m(p)/2⌋` indices among the first `⌈m(p)⌉` with the smallest
/// `q`, ties by index, in that order.
pub fn hard_index_set(p: &[f64], q: &[f64]) -> Result<Vec<usize>, AdversaryError> {
    if p.len() != q.len() {
        return Err(AdversaryError::Length {
            p: p.len(),
            q: q.len(),
        });
    }
    let m = isolated_m(p)?;
    let mut order: Vec<usize> = (0..m.ceil()).collect();
    order.sort_by(|&a, &b| q[a].total_cmp(&q[b]));
    order.truncate(m.floor_half());
    Ok(order)
}

fn bump_scale() -> f64 {
    1.05f64.ln().sqrt() / 4.0
}

/// The lower-bound family for horizon `T`.
pub fn build_adversarial_family(
    alpha: f64,
    p: &[f64],
    q: &[f64],
    horizon: usize,
    shape: Shape,
) -> Result<AdversarialFamily, AdversaryError> {
    check_pq(alpha, p, q)?;
    let t = horizon as f64;
    let (m1, epsilon, members, hard_set) = match shape {
        Shape::Isolated => {
            let m = isolated_m(p)?;
            if Threshold::Real(t).cmp_exact(m) == Ordering::Less {
                return Err(AdversaryError::ShortHorizon {
                    t: horizon,
                    min: m.value(),
                });
            }
            let c = m.ceil();
            let members = (0..c)
                .map(|i| Member {
                    index: i,
                    target: (0..c).map(|l| (l, u8::from(l == i))).collect(),
                })
                .collect();
            (
                m.value(),
                bump_scale() * (m.value() / t).sqrt(),
                members,
                hard_index_set(p, q)?,
            )
        }
        Shape::Coordinate => {
            if horizon == 0 {
                return Err(AdversaryError::ShortHorizon { t: 0, min: 1.0 });
            }
            let members = (0..p.len())
                .map(|i| Member {
                    index: i,
                    target: vec![(i, 1)],
                })
                .collect();
            (
                m_value(p)?.value(),
                bump_scale() / t.sqrt(),
                members,
                (0..p.len()).collect(),
            )
        }
    };
    if !(epsilon > 0.0 && epsilon < 0.25) {
        return Err(AdversaryError::Epsilon(epsilon));
    }
    Ok(AdversarialFamily {
        alpha,
        p: p.to_vec(),
        q: q.to_vec(),
        m1,
        shape,
        horizon,
        epsilon,
        members,
        hard_set,
    })
}

impl AdversarialFamily {
    fn spec(&self, reward: RewardFunction) -> InstanceSpec {
        InstanceSpec {
            k: 2,
            n: self.p.len(),
            alpha: vec![1.0 - self.alpha, self.alpha],
            cond: vec![self.q.clone(), self.p.clone()],
            reward,
        }
    }

    /// The instance under `r_0`.
    pub fn base_instance(&self) -> Result<HcbInstance, AdversaryError> {
        Ok(build_instance(self.spec(RewardFunction::ConstantHalf))?)
    }

    pub fn member(&self, i: usize) -> Result<&Member, AdversaryError> {
        self.members.iter().find(|m| m.index == i).ok_or(AdversaryError::Member(i))
    }

    /// The instance under `r_i`.
    pub fn member_instance(&self, i: usize) -> Result<HcbInstance, AdversaryError> {
        let target = self.member(i)?.target.clone();
        Ok(build_instance(self.spec(RewardFunction::TargetBump {
            epsilon: self.epsilon,
            target,
        }))?)
    }

    /// `a*_i = do(X_i = 1)`.
    pub fn optimal_action(&self, i: usize) -> Action {
        Action::DoArm { j: i, x: 1 }
    }
}

/// `P(X ∈ target | a)` in closed form for the two-context instance `(α, p, q)`.
pub fn target_probability(alpha: f64, p: &[f64], q: &[f64], target: &[(usize, u8)], action: Action) -> f64 {
    let in_context = |row: &[f64]| -> f64 {
        target
            .iter()
            .map(|&(l, bit)| {
                let v = match action {
                    Action::DoArm { j, x } if j == l => f64::from(x),
                    _ => row[l],
                };
                if bit == 1 {
                    v
                } else {
                    1.0 - v
                }
            })
            .product()
    };
    match action {
        Action::DoContext { s: 1 } => in_context(p),
        Action::DoContext { .. } => in_context(q),
        _ => alpha * in_context(p) + (1.0 - alpha) * in_context(q),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct SeparationRow {
    pub member: usize,
    pub action: Action,
    pub probability: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct SeparationReport {
    pub m1: f64,
    pub hard_set: Vec<usize>,
    pub rows: Vec<SeparationRow>,
    /// `(member, action, probability, bound)` for every failed inequality.
    pub violations: Vec<(usize, Action, f64, f64)>,
    pub pass: bool,
}

/// Evaluates `P(X ∈ X*_i | a)` for the isolated targets, every `i < ⌈m(p)⌉`
/// and every `a` with a manipulable context, and checks that
/// `do(X_i = 1)` reaches the target with probability at least `α/e` while
/// for `i ∈ I` every other action reaches it with probability at most `1/m(p)`.
pub fn verify_separation(alpha: f64, p: &[f64], q: &[f64]) -> Result<SeparationReport, AdversaryError> {
    check_pq(alpha, p, q)?;
    let m = isolated_m(p)?;
    let hard_set = hard_index_set(p, q)?;
    let c = m.ceil();
    let floor = alpha / std::f64::consts::E;

    let mut actions = vec![Action::Observe];
    for j in 0..p.len() {
        actions.push(Action::DoArm { j, x: 0 });
        actions.push(Action::DoArm { j, x: 1 });
    }
    actions.extend([Action::DoContext { s: 0 }, Action::DoContext { s: 1 }]);

    let mut rows = Vec::new();
    let mut violations = Vec::new();
    for i in 0..c {
        let target: Vec<(usize, u8)> = (0..c).map(|l| (l, u8::from(l == i))).collect();
        for &a in &actions {
            let prob = target_probability(alpha, p, q, &target, a);
            if a == (Action::DoArm { j: i, x: 1 }) {
                if prob < floor {
                    violations.push((i, a, prob, floor));
                }
            } else if hard_set.contains(&i) && !m.at_most_reciprocal(prob) {
                violations.push((i, a, prob, 1.0 / m.value()));
            }
            rows.push(SeparationRow {
                member: i,
                action: a,
                probability: prob,
            });
        }
    }
    Ok(SeparationReport {
        m1: m.value(),
        hard_set,
        pass: violations.is_empty(),
        rows,
        violations,
    })
}

/// Which case of the lower bound applies.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Regime {
    /// `m(p) >= τ_1` and `m(q) >= τ_0`.
    BothHard,
    /// Only `m(p) >= τ_1`.
    ContextOne,
    /// Only `m(q) >= τ_0`.
    ContextZero,
    /// Neither.
    Flat,
}

#[derive(Debug, Clone, Serialize)]
pub struct LowerBoundReport {
    pub regime: Regime,
    pub m_p: f64,
    pub m_q: f64,
    pub m_tilde: f64,
    pub tau0: f64,
    pub tau1: f64,
    pub q_max: f64,
    pub horizon: usize,
    pub bound: f64,
}

/// `τ_1(α) = 3e / (α (3 - e))`.
pub fn tau(weight: f64) -> f64 {
    let e = std::f64::consts::E;
    3.0 * e / (weight * (3.0 - e))
}

/// `(1/127) sqrt(m̃ / T)` with the piecewise effective hardness `m̃`.
pub fn theoretical_lower_bound(
    alpha: f64,
    p: &[f64],
    q: &[f64],
    horizon: usize,
) -> Result<LowerBoundReport, AdversaryError> {
    check_pq(alpha, p, q)?;
    if p.len() < 4 {
        return Err(AdversaryError::FewArms(p.len()));
    }
    let m_p = m_value(p)?.value();
    let m_q = m_value(q)?.value();
    let t = horizon as f64;
    if t < m_p.max(m_q) {
        return Err(AdversaryError::ShortHorizon {
            t: horizon,
            min: m_p.max(m_q),
        });
    }
    let abar = 1.0 - alpha;
    let (tau1, tau0) = (tau(alpha), tau(abar));
    let q_max = q.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let (regime, m_tilde) = match (m_p >= tau1, m_q >= tau0) {
        (true, true) => (Regime::BothHard, (m_p * alpha * alpha).max(m_q * abar * abar)),
        (true, false) => (Regime::ContextOne, m_p * alpha * alpha),
        (false, true) => (Regime::ContextZero, m_q * abar * abar),
        (false, false) => (Regime::Flat, (1.0 - q_max.max(0.5)).powi(2)),
    };
    Ok(LowerBoundReport {
        regime,
        m_p,
        m_q,
        m_tilde,
        tau0,
        tau1,
        q_max,
        horizon,
        bound: (m_tilde / t).sqrt() / 127.0,
    })
}

/// Per-round KL between the flat reward and a bumped one on a target hit:
/// `½ ln(½/(½+ε)) + ½ ln(½/(½-ε)) = -½ ln(1 - 4ε²)`.
pub fn kl_per_hit(epsilon: f64) -> Result<f64, AdversaryError> {
    if !(0.0..0.25).contains(&epsilon) {
        return Err(AdversaryError::Epsilon(epsilon));
    }
    Ok(-0.5 * (-4.0 * epsilon * epsilon).ln_1p())
}

#[derive(Debug, Clone, Serialize)]
pub struct KlEstimate {
    pub estimate: f64,
    pub stderr: f64,
    /// Mean number of rounds with `X ∈ X*_i`.
    pub mean_hits: f64,
    /// Mean number of `do(X_i = 1)` rounds.
    pub mean_optimal_pulls: f64,
}

/// Monte Carlo estimate of `KL(P_0(H_T), P_i(H_T))` as
/// `kl_per_hit(ε) · E_0[#{t : X^(t) ∈ X*_i}]`, running the policy under the
/// flat reward. Episode `r` uses streams keyed `(seed, i, r, ·)`.
pub fn estimate_history_kl<F>(
    family: &AdversarialFamily,
    i: usize,
    epsilon: f64,
    make_policy: F,
    reps: usize,
    seed: u64,
) -> Result<KlEstimate, AdversaryError>
where
    F: Fn() -> Result<Box<dyn Policy>, AgentError> + Sync,
{
    if reps < 2 {
        return Err(AdversaryError::Replications(reps));
    }
    let per_hit = kl_per_hit(epsilon)?;
    let base = family.base_instance()?;
    let member = family.member(i)?;
    let optimal = family.optimal_action(i);
    let (mut mask, mut value) = (vec![0u64; base.words()], vec![0u64; base.words()]);
    for &(l, bit) in &member.target {
        mask[l / 64] |= 1 << (l % 64);
        value[l / 64] |= u64::from(bit) << (l % 64);
    }

    let counts: Vec<(u64, u64)> = (0..reps)
        .into_par_iter()
        .map(|r| -> Result<(u64, u64), AdversaryError> {
            let mut env = StreamKey::new(seed, i as u64, r as u64, Purpose::Environment).stream();
            let mut pol = StreamKey::new(seed, i as u64, r as u64, Purpose::Policy).stream();
            let mut policy = make_policy()?;
            let ep = run_episode(&base, policy.as_mut(), family.horizon, &mut env, &mut pol)?;
            let h = &ep.history;
            let mut hits = 0;
            let mut pulls = 0;
            for t in 0..h.len() {
                let on = h.x_words(t).iter().zip(&mask).zip(&value).all(|((&w, &m), &v)| w & m == v);
                hits += u64::from(on);
                pulls += u64::from(h.action(t) == optimal);
            }
            Ok((hits, pulls))
        })
        .collect::<Result<_, _>>()?;

    let n = reps as f64;
    let mean_hits = counts.iter().map(|c| c.0 as f64).sum::<f64>() / n;
    let var = counts
        .iter()
        .map(|c| (c.0 as f64 - mean_hits).powi(2))
        .sum::<f64>()
        / (n - 1.0);
    Ok(KlEstimate {
        estimate: per_hit * mean_hits,
        stderr: per_hit * (var / n).sqrt(),
        mean_hits,
        mean_optimal_pulls: counts.iter().map(|c| c.1 as f64).sum::<f64>() / n,
    })
}
