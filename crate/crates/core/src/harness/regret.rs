use std::time::{Duration, Instant};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::agents::{run_episode, AgentError, Policy};
use crate::model::{action_index, enumerate_actions, exact_mu_table, argmax_canonical, HcbInstance, Mode};
use crate::rng::{Purpose, StreamKey};

/// Exact value and empirical selection frequency of one action.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActionStat {
    pub action: String,
    pub mu: f64,
    pub count: u64,
    pub frequency: f64,
}

/// Monte Carlo estimate of the simple regret `μ* - Σ_a μ_a P(Â_T = a)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegretReport {
    pub algorithm: String,
    pub mode: Mode,
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "T")]
    pub horizon: usize,
    pub reps: usize,
    pub seed: u64,
    pub regret_hat: f64,
    pub stderr: f64,
    pub mu_star: f64,
    pub optimal_action: String,
    pub actions: Vec<ActionStat>,
    #[serde(skip)]
    pub wall_clock: Duration,
}

impl RegretReport {
    /// Builds the report from exact `μ` values and selection counts.
    pub fn from_counts(
        algorithm: &str,
        instance: &HcbInstance,
        mode: Mode,
        horizon: usize,
        seed: u64,
        counts: &[u64],
    ) -> Result<Self, HarnessError> {
        let actions = enumerate_actions(instance, mode);
        let mus = exact_mu_table(instance, mode)?;
        let best = argmax_canonical(&mus);
        let mu_star = mus[best];
        let reps: u64 = counts.iter().sum();
        let r = reps as f64;
        let (mut mean, mut second) = (0.0, 0.0);
        let stats = actions
            .iter()
            .zip(&mus)
            .zip(counts)
            .map(|((a, &mu), &count)| {
                let f = count as f64 / r;
                mean += mu * f;
                second += mu * mu * f;
                ActionStat {
                    action: a.to_string(),
                    mu,
                    count,
                    frequency: f,
                }
            })
            .collect();
        let var = (second - mean * mean).max(0.0);
        Ok(Self {
            algorithm: algorithm.to_string(),
            mode,
            n: instance.n(),
            k: instance.k(),
            horizon,
            reps: reps as usize,
            seed,
            regret_hat: mu_star - mean,
            stderr: (var / r).sqrt(),
            mu_star,
            optimal_action: actions[best].to_string(),
            actions: stats,
            wall_clock: Duration::ZERO,
        })
    }

    /// Exact `μ` in canonical action order.
    pub fn mu_values(&self) -> Vec<f64> {
        self.actions.iter().map(|a| a.mu).collect()
    }
}

/// Runs `reps` independent episodes in parallel. Episode `r` draws from the
/// streams keyed `(seed, grid, r, ·)`, so the result does not depend on the
/// number of worker threads.
pub fn estimate_simple_regret<F>(
    instance: &HcbInstance,
    make_policy: F,
    horizon: usize,
    reps: usize,
    seed: u64,
    grid: u64,
) -> Result<RegretReport, HarnessError>
where
    F: Fn() -> Result<Box<dyn Policy>, AgentError> + Sync,
{
    if reps < 2 {
        return Err(HarnessError::Replications(reps));
    }
    let started = Instant::now();
    let probe = make_policy()?;
    let mode = probe.mode();
    let name = probe.name().to_string();
    drop(probe);
    let n = instance.n();
    let size = enumerate_actions(instance, mode).len();

    let counts = (0..reps)
        .into_par_iter()
        .map(|r| -> Result<Vec<u64>, HarnessError> {
            let mut env = StreamKey::new(seed, grid, r as u64, Purpose::Environment).stream();
            let mut pol = StreamKey::new(seed, grid, r as u64, Purpose::Policy).stream();
            let mut policy = make_policy()?;
            let ep = run_episode(instance, policy.as_mut(), horizon, &mut env, &mut pol)?;
            let mut c = vec![0u64; size];
            c[action_index(n, ep.chosen)] += 1;
            Ok(c)
        })
        .try_reduce(
            || vec![0u64; size],
            |mut a, b| {
                a.iter_mut().zip(b).for_each(|(x, y)| *x += y);
                Ok(a)
            },
        )?;

    let mut report = RegretReport::from_counts(&name, instance, mode, horizon, seed, &counts)?;
    report.wall_clock = started.elapsed();
    log::debug!(
        "{} T={} reps={} regret={:.6} ({:?})",
        name,
        horizon,
        reps,
        report.regret_hat,
        report.wall_clock
    );
    Ok(report)
}
