//! Hierarchical causal bandits: a simulator, best-intervention
//! identification algorithms, lower-bound constructions and a Monte Carlo
//! harness.

pub mod adversary;
pub mod agents;
pub mod complexity;
pub mod harness;
pub mod model;
pub mod rng;

use thiserror::Error;

pub use complexity::{m_value, Threshold};
pub use model::{Action, HcbInstance, InstanceSpec, Mode, RewardFunction};

#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Model(#[from] model::ModelError),
    #[error(transparent)]
    Complexity(#[from] complexity::ComplexityError),
    #[error(transparent)]
    Agent(#[from] agents::AgentError),
    #[error(transparent)]
    Adversary(#[from] adversary::AdversaryError),
    #[error(transparent)]
    Harness(#[from] harness::HarnessError),
}

pub type Result<T, E = Error> = std::result::Result<T, E>;
