//! Monte Carlo experiments: regret estimates, sweeps over `T`, instance
//! generation, concentration checks and log-log scaling fits.

mod concentration;
mod config;
mod generate;
mod regret;
mod scaling;
mod sweep;
mod verify;

use std::path::PathBuf;

use thiserror::Error;

pub use concentration::{concentration_suite, ConcentrationReport, EventResult};
pub use config::{AdversarySettings, ExperimentConfig, InstanceSource};
pub use generate::{random_instance, GeneratorSpec, RewardSpec, RowProfile};
pub use regret::{estimate_simple_regret, ActionStat, RegretReport};
pub use scaling::{fit_points, fit_scaling, ScalingFit};
pub use sweep::{family_for, sweep, to_csv, worst_member_regret, write_reports, CSV_HEADER};
pub use verify::{
    check_concentration, check_identities, check_kl_grid, check_m_oracle, check_separation, identity_errors,
    verify_lemmas, Check,
};

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error("need at least 2 replications, got {0}")]
    Replications(usize),
    #[error("T grid is empty")]
    EmptyGrid,
    #[error("T grid must be strictly ascending")]
    GridOrder,
    #[error("no algorithms configured")]
    NoAlgorithms,
    #[error("no family members to evaluate")]
    NoMembers,
    #[error("this suite needs K = 2, got K = {0}")]
    Contexts(usize),
    #[error("infeasible generator spec: {0}")]
    Infeasible(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },
    #[error("cell {algorithm} T={t}: {source}")]
    Cell {
        algorithm: String,
        t: usize,
        #[source]
        source: Box<HarnessError>,
    },
    #[error(transparent)]
    Model(#[from] crate::model::ModelError),
    #[error(transparent)]
    Complexity(#[from] crate::complexity::ComplexityError),
    #[error(transparent)]
    Agent(#[from] crate::agents::AgentError),
    #[error(transparent)]
    Adversary(#[from] crate::adversary::AdversaryError),
}

/// Reads an instance file.
pub fn load_instance(path: &std::path::Path) -> Result<crate::model::HcbInstance, HarnessError> {
    config::read_json(path)
}
