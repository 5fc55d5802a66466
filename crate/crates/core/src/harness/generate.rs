use serde::{Deserialize, Serialize};

use super::HarnessError;
use crate::model::{build_instance, HcbInstance, InstanceSpec, RewardFunction};
use crate::rng::Stream;

/// How the entries of one conditional row are drawn.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum RowProfile {
    /// Every entry uniform in `[lo, hi)`.
    Uniform { lo: f64, hi: f64 },
    /// `count` entries at random positions equal to `value`, the rest uniform in `[lo, hi)`.
    Forced {
        count: usize,
        value: f64,
        lo: f64,
        hi: f64,
    },
}

impl RowProfile {
    fn check(&self, n: usize) -> Result<(), HarnessError> {
        let (lo, hi) = match *self {
            RowProfile::Uniform { lo, hi } => (lo, hi),
            RowProfile::Forced { count, value, lo, hi } => {
                if count > n {
                    return Err(HarnessError::Infeasible(format!("{count} forced entries with N={n}")));
                }
                if !(value > 0.0 && value < 1.0) {
                    return Err(HarnessError::Infeasible(format!("forced value {value} not in (0, 1)")));
                }
                (lo, hi)
            }
        };
        if !(lo > 0.0 && lo <= hi && hi < 1.0) {
            return Err(HarnessError::Infeasible(format!("range [{lo}, {hi}) is not inside (0, 1)")));
        }
        Ok(())
    }

    fn max_value(&self) -> f64 {
        match *self {
            RowProfile::Uniform { hi, .. } => hi,
            RowProfile::Forced { value, hi, count, .. } => {
                if count > 0 {
                    value.max(hi)
                } else {
                    hi
                }
            }
        }
    }

    fn draw(&self, n: usize, rng: &mut Stream) -> Vec<f64> {
        match *self {
            RowProfile::Uniform { lo, hi } => (0..n).map(|_| rng.uniform(lo, hi)).collect(),
            RowProfile::Forced { count, value, lo, hi } => {
                let mut row: Vec<f64> = (0..n).map(|_| rng.uniform(lo, hi)).collect();
                let mut idx: Vec<usize> = (0..n).collect();
                for i in 0..count {
                    let pick = i + rng.below((n - i) as u64) as usize;
                    idx.swap(i, pick);
                    row[idx[i]] = value;
                }
                row
            }
        }
    }
}

/// Reward family of generated instances.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "type", rename_all = "snake_case")]
pub enum RewardSpec {
    ConstantHalf,
    /// Dense table with entries uniform in `[lo, hi)`.
    Dense { lo: f64, hi: f64 },
    TargetBump { epsilon: f64, target: Vec<(usize, u8)> },
}

/// Recipe for [`random_instance`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorSpec {
    #[serde(rename = "N")]
    pub n: usize,
    #[serde(rename = "K", default = "two")]
    pub k: usize,
    /// Context weights; uniform when omitted.
    #[serde(default)]
    pub alpha: Option<Vec<f64>>,
    /// Default row recipe.
    pub profile: RowProfile,
    /// Per-context overrides, indexed by context value.
    #[serde(default)]
    pub rows: Option<Vec<RowProfile>>,
    /// Sort row `K-1` ascending and require it to stay at or below 1/2.
    #[serde(default)]
    pub sorted_p: bool,
    pub reward: RewardSpec,
}

fn two() -> usize {
    2
}

/// Draws an instance following `spec`.
pub fn random_instance(spec: &GeneratorSpec, rng: &mut Stream) -> Result<HcbInstance, HarnessError> {
    let (n, k) = (spec.n, spec.k);
    if n == 0 || k == 0 {
        return Err(HarnessError::Infeasible(format!("N={n}, K={k}")));
    }
    let profiles: Vec<&RowProfile> = match &spec.rows {
        Some(rows) if rows.len() != k => {
            return Err(HarnessError::Infeasible(format!("{} row profiles for K={k}", rows.len())))
        }
        Some(rows) => rows.iter().collect(),
        None => vec![&spec.profile; k],
    };
    for p in &profiles {
        p.check(n)?;
    }
    if spec.sorted_p && profiles[k - 1].max_value() > 0.5 {
        return Err(HarnessError::Infeasible(
            "sorted p family needs every p entry <= 1/2".into(),
        ));
    }

    let mut cond: Vec<Vec<f64>> = profiles.iter().map(|p| p.draw(n, rng)).collect();
    if spec.sorted_p {
        cond[k - 1].sort_by(f64::total_cmp);
    }
    let alpha = spec.alpha.clone().unwrap_or_else(|| vec![1.0 / k as f64; k]);
    let reward = match &spec.reward {
        RewardSpec::ConstantHalf => RewardFunction::ConstantHalf,
        RewardSpec::Dense { lo, hi } => {
            if !(0.0 <= *lo && lo <= hi && *hi <= 1.0) {
                return Err(HarnessError::Infeasible(format!("reward range [{lo}, {hi})")));
            }
            if n > crate::model::DENSE_MAX_ARMS {
                return Err(HarnessError::Infeasible(format!("dense reward with N={n}")));
            }
            RewardFunction::Dense {
                table: (0..1usize << n).map(|_| rng.uniform(*lo, *hi)).collect(),
            }
        }
        RewardSpec::TargetBump { epsilon, target } => RewardFunction::TargetBump {
            epsilon: *epsilon,
            target: target.clone(),
        },
    };
    Ok(build_instance(InstanceSpec {
        k,
        n,
        alpha,
        cond,
        reward,
    })?)
}
