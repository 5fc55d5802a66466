use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};

use super::config::ExperimentConfig;
use super::regret::{estimate_simple_regret, RegretReport};
use super::HarnessError;
use crate::adversary::{build_adversarial_family, AdversarialFamily, Shape};
use crate::agents::PolicyName;
use crate::model::{HcbInstance, Mode};

pub const CSV_HEADER: &str = "algorithm,mode,N,K,T,reps,regret_hat,stderr,mu_star,seed";

fn cell(
    instance: &HcbInstance,
    name: PolicyName,
    config: &ExperimentConfig,
    t: usize,
    grid: u64,
) -> Result<RegretReport, HarnessError> {
    let mode = name.mode(config.mode);
    let k = instance.k();
    estimate_simple_regret(instance, || name.build(t, k, mode), t, config.reps, config.seed, grid)
}

/// Regret of `name` on each listed member of `family`, returning the member
/// with the largest estimate (first on ties) and its report. Every member
/// sees the same replication streams.
pub fn worst_member_regret(
    family: &AdversarialFamily,
    members: &[usize],
    name: PolicyName,
    mode: Mode,
    reps: usize,
    seed: u64,
    grid: u64,
) -> Result<(usize, RegretReport), HarnessError> {
    let t = family.horizon;
    let mode = name.mode(mode);
    let mut worst: Option<(usize, RegretReport)> = None;
    for &i in members {
        let inst = family.member_instance(i)?;
        let rep = estimate_simple_regret(&inst, || name.build(t, 2, mode), t, reps, seed, grid)?;
        if worst.as_ref().is_none_or(|(_, w)| rep.regret_hat > w.regret_hat) {
            worst = Some((i, rep));
        }
    }
    worst.ok_or(HarnessError::NoMembers)
}

/// Family for horizon `t` built from a two-context instance's `(α, p, q)`.
pub fn family_for(base: &HcbInstance, shape: Shape, t: usize) -> Result<AdversarialFamily, HarnessError> {
    if base.k() != 2 {
        return Err(HarnessError::Contexts(base.k()));
    }
    Ok(build_adversarial_family(
        base.alpha()[1],
        base.cond_row(1),
        base.cond_row(0),
        t,
        shape,
    )?)
}

fn adversarial_cell(
    base: &HcbInstance,
    name: PolicyName,
    config: &ExperimentConfig,
    t: usize,
    grid: u64,
) -> Result<RegretReport, HarnessError> {
    let settings = config.adversary.as_ref().expect("adversarial cell");
    let family = family_for(base, settings.shape, t)?;
    let members = match settings.member {
        Some(i) => vec![i],
        None => family.hard_set.clone(),
    };
    let (_, rep) = worst_member_regret(&family, &members, name, config.mode, config.reps, config.seed, grid)?;
    Ok(rep)
}

/// One report per `(algorithm, T)`, algorithms outermost. Replication
/// streams depend on the position of `T` in the grid, not on the algorithm.
pub fn sweep(config: &ExperimentConfig) -> Result<Vec<RegretReport>, HarnessError> {
    config.validate()?;
    let instance = config.instance()?;
    let mut reports = Vec::new();
    for &name in &config.algorithms {
        for (g, &t) in config.t_grid.iter().enumerate() {
            let rep = if config.adversary.is_some() {
                adversarial_cell(&instance, name, config, t, g as u64)
            } else {
                cell(&instance, name, config, t, g as u64)
            }
            .map_err(|e| HarnessError::Cell {
                algorithm: name.to_string(),
                t,
                source: Box::new(e),
            })?;
            log::info!("{name} T={t} regret_hat={} stderr={}", rep.regret_hat, rep.stderr);
            reports.push(rep);
        }
    }
    if let Some(out) = &config.out {
        write_reports(&reports, out)?;
    }
    Ok(reports)
}

pub fn to_csv(reports: &[RegretReport]) -> String {
    let mut s = String::from(CSV_HEADER);
    s.push('\n');
    for r in reports {
        let _ = writeln!(
            s,
            "{},{},{},{},{},{},{},{},{},{}",
            r.algorithm, r.mode, r.n, r.k, r.horizon, r.reps, r.regret_hat, r.stderr, r.mu_star, r.seed
        );
    }
    s
}

/// Writes `sweep.csv` and `sweep.json` into `dir`, returning their paths.
pub fn write_reports(reports: &[RegretReport], dir: &Path) -> Result<(PathBuf, PathBuf), HarnessError> {
    let io = |path: &Path| {
        let path = path.to_path_buf();
        move |source| HarnessError::Io { path, source }
    };
    fs::create_dir_all(dir).map_err(io(dir))?;
    let csv = dir.join("sweep.csv");
    fs::write(&csv, to_csv(reports)).map_err(io(&csv))?;
    let json = dir.join("sweep.json");
    let mut text = serde_json::to_string_pretty(reports).map_err(|source| HarnessError::Json {
        path: json.clone(),
        source,
    })?;
    text.push('\n');
    fs::write(&json, text).map_err(io(&json))?;
    Ok((csv, json))
}
