//! The two-stage estimators: observe (and, with a manipulable context,
//! intervene on the context), then refine the conditional rewards of arms
//! that are too biased to estimate from observation alone.

use std::ops::Range;

use serde::Serialize;

use super::{AgentError, History, Policy};
use crate::complexity::{m_value, threshold_set, Threshold};
use crate::model::{argmax_canonical, Action, Mode};
use crate::rng::Stream;

/// Stage layout of a staged agent. Rounds are 0-based; remainder rounds at
/// the end are `Observe`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub struct Schedule {
    pub horizon: usize,
    pub k: usize,
    pub mode: Mode,
    pub observe_len: usize,
    /// Length of each `do(S = l)` stage; 0 without a manipulable context.
    pub context_len: usize,
    /// Budget `d` of each refine call.
    pub refine_len: usize,
}

impl Schedule {
    /// First round after all estimation stages.
    pub fn estimation_end(&self) -> usize {
        match self.mode {
            Mode::Nmc => self.observe_len,
            Mode::Mc => self.observe_len + self.k * self.context_len,
        }
    }

    /// `do(S = l)` rounds. Contexts are visited from `K - 1` down to 0.
    pub fn context_stage(&self, l: usize) -> Range<usize> {
        let start = self.observe_len + (self.k - 1 - l) * self.context_len;
        start..start + self.context_len
    }

    /// `(context, arm value)` of each refine call, in execution order.
    pub fn refine_targets(&self) -> Vec<(usize, u8)> {
        (0..self.k).rev().flat_map(|l| [(l, 1), (l, 0)]).collect()
    }

    pub fn refine_start(&self, r: usize) -> usize {
        self.estimation_end() + r * self.refine_len
    }

    /// Rounds consumed by the declared stages.
    pub fn used(&self) -> usize {
        self.refine_start(2 * self.k)
    }
}

/// One refine call: `members` share `budget` rounds starting after round `start`.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct RefinePlan {
    pub context: usize,
    pub value: u8,
    pub members: Vec<usize>,
    pub start: usize,
    pub budget: usize,
}

impl RefinePlan {
    /// False for an empty set or one larger than the budget; such blocks observe.
    pub fn executed(&self) -> bool {
        !self.members.is_empty() && self.members.len() <= self.budget
    }

    /// Rounds assigned to the `i`-th member; the last block takes the remainder.
    pub fn block(&self, i: usize) -> Range<usize> {
        let b = self.budget / self.members.len();
        let lo = self.start + i * b;
        let hi = if i + 1 == self.members.len() {
            self.start + self.budget
        } else {
            lo + b
        };
        lo..hi
    }

    pub fn action_at(&self, round: usize) -> Action {
        if !self.executed() || round < self.start || round >= self.start + self.budget {
            return Action::Observe;
        }
        let b = self.budget / self.members.len();
        let i = ((round - self.start) / b).min(self.members.len() - 1);
        Action::DoArm {
            j: self.members[i],
            x: self.value,
        }
    }
}

/// Plans `Refine(B, s, x, τ, d)`.
pub fn refine_schedule(members: &[usize], s: usize, x: u8, tau: usize, d: usize) -> RefinePlan {
    RefinePlan {
        context: s,
        value: x,
        members: members.to_vec(),
        start: tau,
        budget: d,
    }
}

/// `u_j = f_j / c_j` over each member's block, with `c_j` counting rounds in
/// the plan's context and `f_j` those that also had `Y = 1`. Zero when `c_j = 0`.
pub fn refine_estimates(plan: &RefinePlan, history: &History) -> Result<Vec<f64>, AgentError> {
    if !plan.executed() {
        return Ok(Vec::new());
    }
    let end = plan.start + plan.budget;
    if end > history.len() {
        return Err(AgentError::RefineRange {
            start: plan.start,
            end,
            len: history.len(),
        });
    }
    Ok((0..plan.members.len())
        .map(|i| {
            let (mut c, mut f) = (0u64, 0u64);
            for t in plan.block(i) {
                if history.s(t) == plan.context {
                    c += 1;
                    f += u64::from(history.y(t));
                }
            }
            ratio(f, c)
        })
        .collect())
}

#[inline]
fn ratio(num: u64, den: u64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Everything the staged agents estimate. Indices: `[context][arm][arm value]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EstimatorState {
    /// `α̂_l`; entry 0 is `1 - Σ_{l>0} α̂_l`.
    pub alpha_hat: Vec<f64>,
    /// `p̂^{(l)}_j`; for two contexts row 1 is `p̂` and row 0 is `q̂`.
    pub p_hat: Vec<Vec<f64>>,
    pub m_hat: Vec<Threshold>,
    pub mu_observe: f64,
    /// `μ̂_{do(S=l)}`; empty without a manipulable context.
    pub mu_context: Vec<f64>,
    /// `μ̂_{sljk}` as estimated before refinement.
    pub mu_stage1: Vec<Vec<[f64; 2]>>,
    /// `μ̂_{sljk}` after refinement (equal to `mu_stage1` until `final_choice`).
    pub mu: Vec<Vec<[f64; 2]>>,
    pub refine: Vec<RefinePlan>,
    /// `u` of each executed plan, aligned with its members.
    pub refined: Vec<Vec<f64>>,
    /// Per-action estimates in canonical order; filled by `final_choice`.
    pub mu_action: Vec<f64>,
}

impl EstimatorState {
    /// Whether `μ̂_{sljk}` kept its stage-1 value.
    pub fn accepted(&self, l: usize, j: usize, k: u8) -> bool {
        !self
            .refine
            .iter()
            .any(|p| p.executed() && p.context == l && p.value == k && p.members.contains(&j))
    }
}

#[derive(Default)]
struct Tally {
    rounds: u64,
    y: u64,
    c: Vec<u64>,
    x1: Vec<Vec<u64>>,
    y1: Vec<Vec<u64>>,
    y0: Vec<Vec<u64>>,
}

impl Tally {
    fn over(history: &History, rounds: Range<usize>) -> Self {
        let (n, k) = (history.n_arms(), history.n_contexts());
        let mut t = Tally {
            c: vec![0; k],
            x1: vec![vec![0; n]; k],
            y1: vec![vec![0; n]; k],
            y0: vec![vec![0; n]; k],
            ..Tally::default()
        };
        for r in rounds {
            let s = history.s(r);
            let y = history.y(r);
            t.rounds += 1;
            t.y += u64::from(y);
            t.c[s] += 1;
            let words = history.x_words(r);
            for j in 0..n {
                let bit = words[j / 64] >> (j % 64) & 1 == 1;
                if bit {
                    t.x1[s][j] += 1;
                    t.y1[s][j] += u64::from(y);
                } else {
                    t.y0[s][j] += u64::from(y);
                }
            }
        }
        t
    }

    fn p_row(&self, l: usize) -> Vec<f64> {
        self.x1[l].iter().map(|&x| ratio(x, self.c[l])).collect()
    }

    fn mu_row(&self, l: usize) -> Vec<[f64; 2]> {
        (0..self.x1[l].len())
            .map(|j| {
                let x1 = self.x1[l][j];
                [ratio(self.y0[l][j], self.c[l] - x1), ratio(self.y1[l][j], x1)]
            })
            .collect()
    }
}

/// The staged identification algorithm for any context count.
#[derive(Debug, Clone)]
pub struct StagedAgent {
    name: &'static str,
    schedule: Schedule,
    state: Option<EstimatorState>,
}

impl StagedAgent {
    pub fn new(name: &'static str, schedule: Schedule) -> Result<Self, AgentError> {
        if schedule.used() > schedule.horizon {
            return Err(AgentError::HorizonTooShort {
                policy: name.to_string(),
                t: schedule.horizon,
                min: schedule.used(),
            });
        }
        Ok(Self {
            name,
            schedule,
            state: None,
        })
    }

    pub fn schedule(&self) -> &Schedule {
        &self.schedule
    }

    fn estimate(&self, history: &History) -> EstimatorState {
        let sch = &self.schedule;
        let k = sch.k;
        let n = history.n_arms();
        let obs = Tally::over(history, 0..sch.observe_len);

        let mut alpha_hat: Vec<f64> = obs.c.iter().map(|&c| ratio(c, obs.rounds)).collect();
        alpha_hat[0] = 1.0 - alpha_hat[1..].iter().sum::<f64>();
        let mu_observe = ratio(obs.y, obs.rounds);

        let (p_hat, mu, mu_context) = match sch.mode {
            Mode::Nmc => (
                (0..k).map(|l| obs.p_row(l)).collect::<Vec<_>>(),
                (0..k).map(|l| obs.mu_row(l)).collect::<Vec<_>>(),
                Vec::new(),
            ),
            Mode::Mc => {
                let stages: Vec<Tally> =
                    (0..k).map(|l| Tally::over(history, sch.context_stage(l))).collect();
                (
                    stages.iter().enumerate().map(|(l, t)| t.p_row(l)).collect(),
                    stages.iter().enumerate().map(|(l, t)| t.mu_row(l)).collect(),
                    stages.iter().map(|t| ratio(t.y, t.rounds)).collect(),
                )
            }
        };

        let m_hat: Vec<Threshold> = p_hat
            .iter()
            .map(|row| m_value(row).expect("estimates are probabilities"))
            .collect();

        let refine = sch
            .refine_targets()
            .into_iter()
            .enumerate()
            .map(|(r, (l, value))| {
                let members = if value == 1 {
                    threshold_set(&p_hat[l], m_hat[l])
                } else {
                    let flipped: Vec<f64> = p_hat[l].iter().map(|p| 1.0 - p).collect();
                    threshold_set(&flipped, m_hat[l])
                }
                .expect("estimates are probabilities");
                refine_schedule(&members, l, value, sch.refine_start(r), sch.refine_len)
            })
            .collect();

        debug_assert_eq!(mu.len(), k);
        debug_assert!(mu.iter().all(|row| row.len() == n));
        EstimatorState {
            alpha_hat,
            p_hat,
            m_hat,
            mu_observe,
            mu_context,
            mu_stage1: mu.clone(),
            mu,
            refine,
            refined: Vec::new(),
            mu_action: Vec::new(),
        }
    }

    fn ensure_state(&mut self, history: &History) -> &mut EstimatorState {
        if self.state.is_none() {
            self.state = Some(self.estimate(history));
        }
        self.state.as_mut().unwrap()
    }
}

impl Policy for StagedAgent {
    fn name(&self) -> &str {
        self.name
    }

    fn mode(&self) -> Mode {
        self.schedule.mode
    }

    fn begin(&mut self, _n: usize, k: usize, horizon: usize) -> Result<(), AgentError> {
        if k != self.schedule.k {
            return Err(AgentError::ContextCount {
                policy: self.name.to_string(),
                expected: self.schedule.k,
                got: k,
            });
        }
        if horizon != self.schedule.horizon {
            return Err(AgentError::HorizonMismatch {
                policy: self.name.to_string(),
                expected: self.schedule.horizon,
                got: horizon,
            });
        }
        self.state = None;
        Ok(())
    }

    fn next_action(&mut self, history: &History, round: usize, _rng: &mut Stream) -> Action {
        let sch = self.schedule;
        if round < sch.observe_len {
            return Action::Observe;
        }
        let est_end = sch.estimation_end();
        if round < est_end {
            let l = sch.k - 1 - (round - sch.observe_len) / sch.context_len;
            return Action::DoContext { s: l };
        }
        if round >= sch.used() {
            return Action::Observe;
        }
        let r = (round - est_end) / sch.refine_len;
        self.ensure_state(history).refine[r].action_at(round)
    }

    fn final_choice(&mut self, history: &History, _rng: &mut Stream) -> Action {
        let n = history.n_arms();
        let mode = self.schedule.mode;
        let state = self.ensure_state(history);

        state.refined = state
            .refine
            .iter()
            .map(|plan| refine_estimates(plan, history).expect("history covers the schedule"))
            .collect();
        state.mu = state.mu_stage1.clone();
        for (plan, u) in state.refine.iter().zip(&state.refined) {
            for (&j, &value) in plan.members.iter().zip(u) {
                state.mu[plan.context][j][plan.value as usize] = value;
            }
        }

        let mut actions = vec![Action::Observe];
        let mut values = vec![state.mu_observe];
        for j in 0..n {
            for x in 0..2u8 {
                let mut v = 0.0;
                for (l, w) in state.alpha_hat.iter().enumerate() {
                    v += w * state.mu[l][j][x as usize];
                }
                actions.push(Action::DoArm { j, x });
                values.push(v);
            }
        }
        if mode == Mode::Mc {
            for (s, &v) in state.mu_context.iter().enumerate() {
                actions.push(Action::DoContext { s });
                values.push(v);
            }
        }
        let best = argmax_canonical(&values);
        state.mu_action = values;
        actions[best]
    }

    fn estimates(&self) -> Option<&EstimatorState> {
        self.state.as_ref()
    }
}

/// Two-context algorithm without context interventions: five stages of `⌊T/5⌋`.
pub fn alg_nmc(horizon: usize) -> Result<StagedAgent, AgentError> {
    if horizon < 5 {
        return Err(AgentError::HorizonTooShort {
            policy: "alg-nmc".into(),
            t: horizon,
            min: 5,
        });
    }
    let t1 = horizon / 5;
    StagedAgent::new(
        "alg-nmc",
        Schedule {
            horizon,
            k: 2,
            mode: Mode::Nmc,
            observe_len: t1,
            context_len: 0,
            refine_len: t1,
        },
    )
}

/// Two-context algorithm with context interventions: three stages of
/// `⌊T/15⌋`, then four refine stages of `⌊T/5⌋`.
pub fn alg_mc(horizon: usize) -> Result<StagedAgent, AgentError> {
    if horizon < 15 {
        return Err(AgentError::HorizonTooShort {
            policy: "alg-mc".into(),
            t: horizon,
            min: 15,
        });
    }
    let t1 = horizon / 15;
    StagedAgent::new(
        "alg-mc",
        Schedule {
            horizon,
            k: 2,
            mode: Mode::Mc,
            observe_len: t1,
            context_len: t1,
            refine_len: horizon / 5,
        },
    )
}

/// `K`-context generalization. Without context interventions: `2K + 1` stages
/// of `⌊T/(2K+1)⌋`. With them: `K + 1` stages of `L = ⌊T/(7K+1)⌋` and `2K`
/// refine stages of `3L`.
pub fn alg_k(horizon: usize, k: usize, mode: Mode) -> Result<StagedAgent, AgentError> {
    if k < 2 {
        return Err(AgentError::TooFewContexts(k));
    }
    let (name, schedule) = match mode {
        Mode::Nmc => {
            let l = horizon / (2 * k + 1);
            (
                "alg-k-nmc",
                Schedule {
                    horizon,
                    k,
                    mode,
                    observe_len: l,
                    context_len: 0,
                    refine_len: l,
                },
            )
        }
        Mode::Mc => {
            let l = horizon / (7 * k + 1);
            (
                "alg-k-mc",
                Schedule {
                    horizon,
                    k,
                    mode,
                    observe_len: l,
                    context_len: l,
                    refine_len: 3 * l,
                },
            )
        }
    };
    if schedule.observe_len == 0 {
        let min = match mode {
            Mode::Nmc => 2 * k + 1,
            Mode::Mc => 7 * k + 1,
        };
        return Err(AgentError::HorizonTooShort {
            policy: name.into(),
            t: horizon,
            min,
        });
    }
    StagedAgent::new(name, schedule)
}
