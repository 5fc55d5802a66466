//! Policies and the episode loop.

mod history;
mod staged;
mod uniform;

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::model::{Action, HcbInstance, Mode, ModelError};
use crate::rng::{Purpose, Stream, StreamKey};

pub use history::History;
pub use staged::{
    alg_k, alg_mc, alg_nmc, refine_estimates, refine_schedule, EstimatorState, RefinePlan,
    Schedule, StagedAgent,
};
pub use uniform::{uniform_baseline, UniformAgent};

#[derive(Debug, Error, PartialEq)]
pub enum AgentError {
    #[error("{policy} needs T >= {min}, got T={t}")]
    HorizonTooShort { policy: String, t: usize, min: usize },
    #[error("{policy} was built for T={expected} but the episode has T={got}")]
    HorizonMismatch { policy: String, expected: usize, got: usize },
    #[error("{policy} expects K={expected} contexts, instance has K={got}")]
    ContextCount { policy: String, expected: usize, got: usize },
    #[error("K-context algorithms need K >= 2, got K={0}")]
    TooFewContexts(usize),
    #[error("policy {policy} emitted an invalid action at round {round}: {source}")]
    InvalidAction {
        policy: String,
        round: usize,
        #[source]
        source: ModelError,
    },
    #[error("unknown policy {0:?} (expected alg-nmc, alg-mc, alg-k-nmc, alg-k-mc or uniform)")]
    UnknownPolicy(String),
    #[error("error radius needs x >= 0 and y*t > 1 (x={x}, y={y}, t={t})")]
    Radius { x: f64, y: f64, t: f64 },
    #[error("refine block ({start}, {end}] exceeds the {len}-round history")]
    RefineRange { start: usize, end: usize, len: usize },
}

/// An identification policy: chooses an action each round from the history
/// so far, then names the action it believes is optimal.
pub trait Policy {
    fn name(&self) -> &str;

    fn mode(&self) -> Mode;

    /// Called once before round 0 with the arm count, context count and horizon.
    fn begin(&mut self, n: usize, k: usize, horizon: usize) -> Result<(), AgentError>;

    fn next_action(&mut self, history: &History, round: usize, rng: &mut Stream) -> Action;

    fn final_choice(&mut self, history: &History, rng: &mut Stream) -> Action;

    fn estimates(&self) -> Option<&EstimatorState> {
        None
    }
}

/// A finished episode.
#[derive(Debug, Clone)]
pub struct Episode {
    pub chosen: Action,
    pub history: History,
}

/// Runs `horizon` rounds of `policy` against `instance`.
pub fn run_episode(
    instance: &HcbInstance,
    policy: &mut dyn Policy,
    horizon: usize,
    env: &mut Stream,
    pol: &mut Stream,
) -> Result<Episode, AgentError> {
    policy.begin(instance.n(), instance.k(), horizon)?;
    let mode = policy.mode();
    let mut history = History::with_capacity(instance.n(), instance.k(), horizon);
    let mut x = vec![0u64; instance.words()];
    for round in 0..horizon {
        let action = policy.next_action(&history, round, pol);
        instance
            .validate_action(action, mode)
            .map_err(|source| AgentError::InvalidAction {
                policy: policy.name().to_string(),
                round,
                source,
            })?;
        let (s, y) = instance.sample_packed(action, env, &mut x);
        history.push_packed(s, &x, y, action);
    }
    let chosen = policy.final_choice(&history, pol);
    instance
        .validate_action(chosen, mode)
        .map_err(|source| AgentError::InvalidAction {
            policy: policy.name().to_string(),
            round: horizon,
            source,
        })?;
    Ok(Episode { chosen, history })
}

/// [`run_episode`] with environment and policy streams derived from one seed.
pub fn run_episode_seeded(
    instance: &HcbInstance,
    policy: &mut dyn Policy,
    horizon: usize,
    seed: u64,
) -> Result<Episode, AgentError> {
    let mut env = StreamKey::new(seed, 0, 0, Purpose::Environment).stream();
    let mut pol = StreamKey::new(seed, 0, 0, Purpose::Policy).stream();
    run_episode(instance, policy, horizon, &mut env, &mut pol)
}

/// `ε_{x,y,t} = sqrt(x ln(y t) / t)`.
pub fn error_radius(x: f64, y: f64, t: f64) -> Result<f64, AgentError> {
    if !(x >= 0.0) || !(y * t > 1.0) {
        return Err(AgentError::Radius { x, y, t });
    }
    Ok((x * (y * t).ln() / t).sqrt())
}

/// Large-`T` condition of the upper bounds: `T > c max_l m_l/α_l ln(NT)` with
/// `c = 540` for two contexts and `600(7K+1)` otherwise. `alpha[l]` pairs with
/// `m_values[l]`.
pub fn sample_size_condition(alpha: &[f64], m_values: &[f64], n: usize, t: usize) -> bool {
    let k = alpha.len();
    let c = if k <= 2 { 540.0 } else { 600.0 * (7 * k + 1) as f64 };
    let worst = alpha
        .iter()
        .zip(m_values)
        .map(|(a, m)| m / a)
        .fold(0.0, f64::max);
    let t = t as f64;
    t > c * worst * (n as f64 * t).ln()
}

/// Policy names accepted in configs and on the command line.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PolicyName {
    #[serde(rename = "alg-nmc")]
    AlgNmc,
    #[serde(rename = "alg-mc")]
    AlgMc,
    #[serde(rename = "alg-k-nmc")]
    AlgKNmc,
    #[serde(rename = "alg-k-mc")]
    AlgKMc,
    #[serde(rename = "uniform")]
    Uniform,
}

impl PolicyName {
    pub fn as_str(self) -> &'static str {
        match self {
            PolicyName::AlgNmc => "alg-nmc",
            PolicyName::AlgMc => "alg-mc",
            PolicyName::AlgKNmc => "alg-k-nmc",
            PolicyName::AlgKMc => "alg-k-mc",
            PolicyName::Uniform => "uniform",
        }
    }

    /// The mode a policy runs in; `uniform` takes it from the caller.
    pub fn mode(self, requested: Mode) -> Mode {
        match self {
            PolicyName::AlgNmc | PolicyName::AlgKNmc => Mode::Nmc,
            PolicyName::AlgMc | PolicyName::AlgKMc => Mode::Mc,
            PolicyName::Uniform => requested,
        }
    }

    /// Fresh single-episode policy.
    pub fn build(self, horizon: usize, k: usize, mode: Mode) -> Result<Box<dyn Policy>, AgentError> {
        Ok(match self {
            PolicyName::AlgNmc => Box::new(alg_nmc(horizon)?),
            PolicyName::AlgMc => Box::new(alg_mc(horizon)?),
            PolicyName::AlgKNmc => Box::new(alg_k(horizon, k, Mode::Nmc)?),
            PolicyName::AlgKMc => Box::new(alg_k(horizon, k, Mode::Mc)?),
            PolicyName::Uniform => Box::new(uniform_baseline(horizon, mode)),
        })
    }
}

impl fmt::Display for PolicyName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for PolicyName {
    type Err = AgentError;
    fn from_str(s: &str) -> Result<Self, AgentError> {
        Ok(match s {
            "alg-nmc" => PolicyName::AlgNmc,
            "alg-mc" => PolicyName::AlgMc,
            "alg-k-nmc" => PolicyName::AlgKNmc,
            "alg-k-mc" => PolicyName::AlgKMc,
            "uniform" => PolicyName::Uniform,
            other => return Err(AgentError::UnknownPolicy(other.to_string())),
        })
    }
}
