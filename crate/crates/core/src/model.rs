//! The hierarchical causal bandit: a context `S`, arms `X_1..X_N` that are
//! conditionally independent given `S`, and a Bernoulli reward `Y ~ r(X)`.

use std::fmt;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::rng::{bernoulli_threshold, Stream};

/// Largest `N` for which dense reward tables (and joint enumeration) are allowed.
pub const DENSE_MAX_ARMS: usize = 20;

#[derive(Debug, Error, PartialEq)]
pub enum ModelError {
    #[error("K and N must be at least 1 (got K={k}, N={n})")]
    EmptyDimension { k: usize, n: usize },
    #[error("alpha has length {got}, expected K={expected}")]
    AlphaLength { got: usize, expected: usize },
    #[error("alpha[{index}] = {value} must be positive")]
    AlphaEntry { index: usize, value: f64 },
    #[error("alpha sums to {0}, expected 1")]
    AlphaSum(f64),
    #[error("cond has shape mismatch at row {row}: expected {expected} entries, got {got}")]
    CondShape { row: usize, expected: usize, got: usize },
    #[error("cond has {got} rows, expected K={expected}")]
    CondRows { got: usize, expected: usize },
    #[error("cond[{row}][{col}] = {value} is not in (0, 1)")]
    CondEntry { row: usize, col: usize, value: f64 },
    #[error("dense reward tables need N <= {DENSE_MAX_ARMS}, got N={0}")]
    DenseTooLarge(usize),
    #[error("dense reward table has {got} entries, expected {expected}")]
    DenseLength { got: usize, expected: usize },
    #[error("reward value {value} at index {index} is not in [0, 1]")]
    RewardValue { index: usize, value: f64 },
    #[error("bump epsilon {0} is not in (0, 1/4)")]
    Epsilon(f64),
    #[error("target entry ({arm}, {bit}) is out of range")]
    Target { arm: usize, bit: u8 },
    #[error("action {action} is not available ({reason})")]
    InvalidAction { action: Action, reason: &'static str },
    #[error("exact enumeration needs N <= {DENSE_MAX_ARMS}, got N={0}")]
    EnumerationCap(usize),
}

/// Whether the context can be intervened on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Mode {
    Nmc,
    Mc,
}

impl fmt::Display for Mode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Mode::Nmc => "nmc",
            Mode::Mc => "mc",
        })
    }
}

impl std::str::FromStr for Mode {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "nmc" => Ok(Mode::Nmc),
            "mc" => Ok(Mode::Mc),
            other => Err(format!("unknown mode {other:?} (expected nmc or mc)")),
        }
    }
}

/// One intervention. Arm and context indices are 0-based.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Action {
    Observe,
    DoArm { j: usize, x: u8 },
    DoContext { s: usize },
}

impl fmt::Display for Action {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match *self {
            Action::Observe => write!(f, "do()"),
            Action::DoArm { j, x } => write!(f, "do(X{j}={x})"),
            Action::DoContext { s } => write!(f, "do(S={s})"),
        }
    }
}

/// Reward function `r(x) = P(Y = 1 | X = x)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RewardFunction {
    /// `table[x]` with arm `j` at bit `j` of the index.
    Dense { table: Vec<f64> },
    ConstantHalf,
    /// `1/2 + epsilon` on the cylinder set fixed by `target`, `1/2` elsewhere.
    TargetBump { epsilon: f64, target: Vec<(usize, u8)> },
}

/// One realized round.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Observation {
    pub s: usize,
    pub x: Vec<bool>,
    pub y: bool,
}

/// Raw parameters as they appear in instance files.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstanceSpec {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "N")]
    pub n: usize,
    pub alpha: Vec<f64>,
    pub cond: Vec<Vec<f64>>,
    pub reward: RewardFunction,
}

#[derive(Debug, Clone, PartialEq)]
enum RewardTable {
    Constant(u64),
    Bump {
        mask: Vec<u64>,
        value: Vec<u64>,
        hit: u64,
        miss: u64,
    },
    Dense(Vec<u64>),
}

/// A validated instance. Immutable once built.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "InstanceSpec", into = "InstanceSpec")]
pub struct HcbInstance {
    spec: InstanceSpec,
    words: usize,
    context_cdf: Vec<u64>,
    arm_thresholds: Vec<u64>,
    reward_table: RewardTable,
}

impl TryFrom<InstanceSpec> for HcbInstance {
    type Error = ModelError;
    fn try_from(spec: InstanceSpec) -> Result<Self, ModelError> {
        build_instance(spec)
    }
}

impl From<HcbInstance> for InstanceSpec {
    fn from(instance: HcbInstance) -> Self {
        instance.spec
    }
}

/// Validates a parameter bundle and precomputes sampling thresholds.
pub fn build_instance(spec: InstanceSpec) -> Result<HcbInstance, ModelError> {
    let (k, n) = (spec.k, spec.n);
    if k == 0 || n == 0 {
        return Err(ModelError::EmptyDimension { k, n });
    }
    if spec.alpha.len() != k {
        return Err(ModelError::AlphaLength {
            got: spec.alpha.len(),
            expected: k,
        });
    }
    for (index, &value) in spec.alpha.iter().enumerate() {
        if !(value > 0.0 && value <= 1.0) {
            return Err(ModelError::AlphaEntry { index, value });
        }
    }
    let total: f64 = spec.alpha.iter().sum();
    if (total - 1.0).abs() > 1e-12 {
        return Err(ModelError::AlphaSum(total));
    }
    if spec.cond.len() != k {
        return Err(ModelError::CondRows {
            got: spec.cond.len(),
            expected: k,
        });
    }
    for (row, r) in spec.cond.iter().enumerate() {
        if r.len() != n {
            return Err(ModelError::CondShape {
                row,
                expected: n,
                got: r.len(),
            });
        }
        for (col, &value) in r.iter().enumerate() {
            if !(value > 0.0 && value < 1.0) {
                return Err(ModelError::CondEntry { row, col, value });
            }
        }
    }

    let words = n.div_ceil(64);
    let reward_table = match &spec.reward {
        RewardFunction::ConstantHalf => RewardTable::Constant(bernoulli_threshold(0.5)),
        RewardFunction::TargetBump { epsilon, target } => {
            if !(*epsilon > 0.0 && *epsilon < 0.25) {
                return Err(ModelError::Epsilon(*epsilon));
            }
            let mut mask = vec![0u64; words];
            let mut value = vec![0u64; words];
            for &(arm, bit) in target {
                if arm >= n || bit > 1 {
                    return Err(ModelError::Target { arm, bit });
                }
                mask[arm / 64] |= 1 << (arm % 64);
                value[arm / 64] |= u64::from(bit) << (arm % 64);
            }
            RewardTable::Bump {
                mask,
                value,
                hit: bernoulli_threshold(0.5 + epsilon),
                miss: bernoulli_threshold(0.5),
            }
        }
        RewardFunction::Dense { table } => {
            if n > DENSE_MAX_ARMS {
                return Err(ModelError::DenseTooLarge(n));
            }
            if table.len() != 1 << n {
                return Err(ModelError::DenseLength {
                    got: table.len(),
                    expected: 1 << n,
                });
            }
            for (index, &value) in table.iter().enumerate() {
                if !(0.0..=1.0).contains(&value) {
                    return Err(ModelError::RewardValue { index, value });
                }
            }
            RewardTable::Dense(table.iter().map(|&v| bernoulli_threshold(v)).collect())
        }
    };

    let mut acc = 0.0;
    let mut context_cdf: Vec<u64> = spec
        .alpha
        .iter()
        .map(|&a| {
            acc += a;
            bernoulli_threshold(acc)
        })
        .collect();
    *context_cdf.last_mut().unwrap() = u64::MAX;

    let arm_thresholds = spec
        .cond
        .iter()
        .flat_map(|row| row.iter().map(|&p| bernoulli_threshold(p)))
        .collect();

    Ok(HcbInstance {
        spec,
        words,
        context_cdf,
        arm_thresholds,
        reward_table,
    })
}

impl HcbInstance {
    pub fn k(&self) -> usize {
        self.spec.k
    }

    pub fn n(&self) -> usize {
        self.spec.n
    }

    pub fn alpha(&self) -> &[f64] {
        &self.spec.alpha
    }

    /// `P(X_j = 1 | S = s)`.
    pub fn cond(&self, s: usize, j: usize) -> f64 {
        self.spec.cond[s][j]
    }

    pub fn cond_row(&self, s: usize) -> &[f64] {
        &self.spec.cond[s]
    }

    pub fn reward(&self) -> &RewardFunction {
        &self.spec.reward
    }

    pub fn spec(&self) -> &InstanceSpec {
        &self.spec
    }

    /// Number of `u64` words in a packed arm vector.
    pub fn words(&self) -> usize {
        self.words
    }

    /// Same instance with a different reward function.
    pub fn with_reward(&self, reward: RewardFunction) -> Result<HcbInstance, ModelError> {
        let mut spec = self.spec.clone();
        spec.reward = reward;
        build_instance(spec)
    }

    /// `r(x)` for a packed arm vector.
    pub fn reward_value(&self, x: &[u64]) -> f64 {
        match &self.spec.reward {
            RewardFunction::ConstantHalf => 0.5,
            RewardFunction::TargetBump { epsilon, .. } => {
                if self.on_target(x) {
                    0.5 + epsilon
                } else {
                    0.5
                }
            }
            RewardFunction::Dense { table } => table[x[0] as usize],
        }
    }

    fn on_target(&self, x: &[u64]) -> bool {
        match &self.reward_table {
            RewardTable::Bump { mask, value, .. } => {
                x.iter().zip(mask).zip(value).all(|((&w, &m), &v)| w & m == v)
            }
            _ => false,
        }
    }

    pub fn validate_action(&self, action: Action, mode: Mode) -> Result<(), ModelError> {
        match action {
            Action::Observe => Ok(()),
            Action::DoArm { j, x } => {
                if j >= self.n() {
                    Err(ModelError::InvalidAction {
                        action,
                        reason: "arm index out of range",
                    })
                } else if x > 1 {
                    Err(ModelError::InvalidAction {
                        action,
                        reason: "arm value must be 0 or 1",
                    })
                } else {
                    Ok(())
                }
            }
            Action::DoContext { s } => {
                if mode == Mode::Nmc {
                    Err(ModelError::InvalidAction {
                        action,
                        reason: "context is not manipulable",
                    })
                } else if s >= self.k() {
                    Err(ModelError::InvalidAction {
                        action,
                        reason: "context value out of range",
                    })
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Samples one round into `x` (packed, `words()` long) and returns `(s, y)`.
    /// The action must already be valid.
    #[inline]
    pub fn sample_packed(&self, action: Action, rng: &mut Stream, x: &mut [u64]) -> (usize, bool) {
        let s = match action {
            Action::DoContext { s } => s,
            _ if self.spec.k == 1 => 0,
            _ => {
                let u = rng.next_u64();
                self.context_cdf.iter().position(|&c| u < c).unwrap_or(self.spec.k - 1)
            }
        };
        let n = self.spec.n;
        let row = &self.arm_thresholds[s * n..(s + 1) * n];
        x.fill(0);
        for (j, &th) in row.iter().enumerate() {
            if rng.bernoulli(th) {
                x[j / 64] |= 1 << (j % 64);
            }
        }
        if let Action::DoArm { j, x: bit } = action {
            let w = &mut x[j / 64];
            *w = (*w & !(1 << (j % 64))) | (u64::from(bit) << (j % 64));
        }
        let th = match &self.reward_table {
            RewardTable::Constant(t) => *t,
            RewardTable::Bump { hit, miss, .. } => {
                if self.on_target(x) {
                    *hit
                } else {
                    *miss
                }
            }
            RewardTable::Dense(table) => table[x[0] as usize],
        };
        (s, rng.bernoulli(th))
    }

    /// `P(X_j = 1)` in context `s` under `action` (forced arms are 0 or 1).
    fn arm_prob(&self, s: usize, j: usize, action: Action) -> f64 {
        match action {
            Action::DoArm { j: forced, x } if forced == j => f64::from(x),
            _ => self.spec.cond[s][j],
        }
    }

    /// `E[r(X) | S = s]` under `action`'s arm law.
    fn mu_in_context(&self, s: usize, action: Action) -> Result<f64, ModelError> {
        match &self.spec.reward {
            RewardFunction::ConstantHalf => Ok(0.5),
            RewardFunction::TargetBump { epsilon, target } => {
                let hit: f64 = target
                    .iter()
                    .map(|&(j, bit)| {
                        let p = self.arm_prob(s, j, action);
                        if bit == 1 {
                            p
                        } else {
                            1.0 - p
                        }
                    })
                    .product();
                Ok(0.5 + epsilon * hit)
            }
            RewardFunction::Dense { table } => {
                let dist = self.arm_distribution(s, action)?;
                Ok(dist.iter().zip(table).map(|(p, r)| p * r).sum())
            }
        }
    }

    /// Law of the packed arm vector in context `s` under `action`, indexed
    /// little-endian. Requires `N <= DENSE_MAX_ARMS`.
    pub fn arm_distribution(&self, s: usize, action: Action) -> Result<Vec<f64>, ModelError> {
        let n = self.spec.n;
        if n > DENSE_MAX_ARMS {
            return Err(ModelError::EnumerationCap(n));
        }
        let mut dist = vec![0.0; 1 << n];
        dist[0] = 1.0;
        for j in 0..n {
            let p = self.arm_prob(s, j, action);
            let half = 1usize << j;
            for idx in 0..half {
                let base = dist[idx];
                dist[idx] = base * (1.0 - p);
                dist[idx + half] = base * p;
            }
        }
        Ok(dist)
    }

    /// `μ_{s,i,x} = P(Y = 1 | S = s, X_i = x)`, using conditional independence of the arms.
    pub fn conditional_mu(&self, s: usize, i: usize, x: u8) -> Result<f64, ModelError> {
        self.mu_in_context(s, Action::DoArm { j: i, x })
    }
}

/// Actions in canonical order: `Observe`, `DoArm` by `(j, x)`, then `DoContext` by `s`.
pub fn enumerate_actions(instance: &HcbInstance, mode: Mode) -> Vec<Action> {
    let mut actions = Vec::with_capacity(action_count(instance, mode));
    actions.push(Action::Observe);
    for j in 0..instance.n() {
        for x in 0..2 {
            actions.push(Action::DoArm { j, x });
        }
    }
    if mode == Mode::Mc {
        actions.extend((0..instance.k()).map(|s| Action::DoContext { s }));
    }
    actions
}

pub fn action_count(instance: &HcbInstance, mode: Mode) -> usize {
    2 * instance.n() + 1 + if mode == Mode::Mc { instance.k() } else { 0 }
}

/// Position of `action` in [`enumerate_actions`] order.
pub fn action_index(n: usize, action: Action) -> usize {
    match action {
        Action::Observe => 0,
        Action::DoArm { j, x } => 1 + 2 * j + x as usize,
        Action::DoContext { s } => 1 + 2 * n + s,
    }
}

/// Draws one round under `action`.
pub fn sample_round(
    instance: &HcbInstance,
    action: Action,
    rng: &mut Stream,
) -> Result<Observation, ModelError> {
    instance.validate_action(action, Mode::Mc)?;
    let mut words = vec![0u64; instance.words()];
    let (s, y) = instance.sample_packed(action, rng, &mut words);
    let x = (0..instance.n()).map(|j| words[j / 64] >> (j % 64) & 1 == 1).collect();
    Ok(Observation { s, x, y })
}

/// `μ_a = E[Y | A = a]`, exactly.
pub fn exact_mu(instance: &HcbInstance, action: Action) -> Result<f64, ModelError> {
    instance.validate_action(action, Mode::Mc)?;
    if let Action::DoContext { s } = action {
        return instance.mu_in_context(s, action);
    }
    let mut total = 0.0;
    for (s, &a) in instance.alpha().iter().enumerate() {
        total += a * instance.mu_in_context(s, action)?;
    }
    Ok(total)
}

/// Exact `μ` for every action in canonical order.
pub fn exact_mu_table(instance: &HcbInstance, mode: Mode) -> Result<Vec<f64>, ModelError> {
    enumerate_actions(instance, mode)
        .into_iter()
        .map(|a| exact_mu(instance, a))
        .collect()
}

/// Index of the first maximum; NaN entries never win.
pub fn argmax_canonical(values: &[f64]) -> usize {
    let mut best = 0;
    for (i, &v) in values.iter().enumerate().skip(1) {
        if v > values[best] || values[best].is_nan() {
            best = i;
        }
    }
    best
}

/// `(a*, μ*)` with ties going to the earliest action in canonical order.
pub fn optimal_action(instance: &HcbInstance, mode: Mode) -> Result<(Action, f64), ModelError> {
    let mus = exact_mu_table(instance, mode)?;
    let best = argmax_canonical(&mus);
    Ok((enumerate_actions(instance, mode)[best], mus[best]))
}

/// Full joint law of `(S, X)` under `action` as `(s, packed x, probability)`.
/// Zero-probability cells are kept, so the list has `K * 2^N` entries.
pub fn enumerate_joint(
    instance: &HcbInstance,
    action: Action,
) -> Result<Vec<(usize, u64, f64)>, ModelError> {
    instance.validate_action(action, Mode::Mc)?;
    let mut out = Vec::new();
    for s in 0..instance.k() {
        let weight = match action {
            Action::DoContext { s: forced } => f64::from(u8::from(forced == s)),
            _ => instance.alpha()[s],
        };
        let dist = instance.arm_distribution(s, action)?;
        out.extend(dist.into_iter().enumerate().map(|(x, p)| (s, x as u64, weight * p)));
    }
    Ok(out)
}
