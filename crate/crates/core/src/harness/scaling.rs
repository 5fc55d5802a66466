use serde::Serialize;

use super::RegretReport;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "status", rename_all = "snake_case")]
pub enum ScalingFit {
    Fit {
        slope: f64,
        intercept: f64,
        /// 95% normal-approximation interval for the slope.
        lo: f64,
        hi: f64,
        points: usize,
    },
    /// Fewer than three points with regret distinguishable from zero.
    Inconclusive { points: usize },
}

/// Least-squares slope of `ln R` on `ln T`, using points with `R > 3·stderr`.
/// Each point is `(T, R̂, stderr)`.
pub fn fit_points(points: &[(f64, f64, f64)]) -> ScalingFit {
    let usable: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(_, r, se)| r > 0.0 && r > 3.0 * se)
        .map(|&(t, r, _)| (t.ln(), r.ln()))
        .collect();
    let n = usable.len();
    if n < 3 {
        return ScalingFit::Inconclusive { points: n };
    }
    let nf = n as f64;
    let mx = usable.iter().map(|p| p.0).sum::<f64>() / nf;
    let my = usable.iter().map(|p| p.1).sum::<f64>() / nf;
    let sxx: f64 = usable.iter().map(|p| (p.0 - mx).powi(2)).sum();
    let sxy: f64 = usable.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sse: f64 = usable
        .iter()
        .map(|p| (p.1 - intercept - slope * p.0).powi(2))
        .sum();
    let se = (sse / (nf - 2.0) / sxx).sqrt();
    ScalingFit::Fit {
        slope,
        intercept,
        lo: slope - 1.96 * se,
        hi: slope + 1.96 * se,
        points: n,
    }
}

pub fn fit_scaling(series: &[RegretReport]) -> ScalingFit {
    let points: Vec<(f64, f64, f64)> = series
        .iter()
        .map(|r| (r.horizon as f64, r.regret_hat, r.stderr))
        .collect();
    fit_points(&points)
}
