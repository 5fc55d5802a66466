//! Empirical failure rates of the stage-1 concentration events.

use rayon::prelude::*;
use serde::Serialize;

use super::HarnessError;
use crate::agents::error_radius;
use crate::complexity::{m_value, threshold_set};
use crate::model::{exact_mu, Action, HcbInstance};
use crate::rng::{Purpose, StreamKey};

#[derive(Debug, Clone, Serialize)]
pub struct EventResult {
    pub name: &'static str,
    pub applicable: bool,
    pub failures: u64,
    pub reps: u64,
    pub rate: f64,
    pub bound: f64,
    /// Three binomial standard deviations at the bound.
    pub margin: f64,
    pub pass: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct ConcentrationReport {
    pub t_prime: usize,
    pub m1: f64,
    pub events: Vec<EventResult>,
    /// Replications in which both multiplicative events held.
    pub window_checked: u64,
    /// Of those, how many had `m̂_1` outside `[2 m_1 / 3, 2 m_1]`.
    pub window_exceptions: u64,
    pub pass: bool,
}

#[derive(Default, Clone, Copy)]
struct Failures {
    alpha: u64,
    e_p: u64,
    e_pbar: u64,
    observe: u64,
    p_floor: u64,
    window_checked: u64,
    window_exceptions: u64,
}

impl Failures {
    fn add(mut self, o: Failures) -> Failures {
        self.alpha += o.alpha;
        self.e_p += o.e_p;
        self.e_pbar += o.e_pbar;
        self.observe += o.observe;
        self.p_floor += o.p_floor;
        self.window_checked += o.window_checked;
        self.window_exceptions += o.window_exceptions;
        self
    }
}

fn event(name: &'static str, applicable: bool, failures: u64, reps: u64, bound: f64) -> EventResult {
    let r = reps as f64;
    let rate = failures as f64 / r;
    let margin = 3.0 * (bound * (1.0 - bound).max(0.0) / r).sqrt();
    EventResult {
        name,
        applicable,
        failures,
        reps,
        rate,
        bound,
        margin,
        pass: !applicable || rate <= bound + margin,
    }
}

/// Simulates `reps` observation stages of `T'` rounds on a two-context
/// instance and checks, with `α = P(S=1)`, `p = P(X=1|S=1)`:
///
/// * `|α̂ - α| <= ε_{3α,2,T'}` fails with rate at most `1/T'`;
/// * `p̂_i ∈ (1 ± ε_{27/(α p_i),2N,T'}) p_i` for all `i` fails at most `2/T'`,
///   likewise for `1 - p̂_i`, when `T' > 27 ln(2NT')/α`;
/// * `|μ̂_{do()} - μ_{do()}| >= ε_{3,2,T'}` happens at most `1/T'`;
/// * `p_j >= 1/(4 m_1)` outside `B(p̂, m(p̂))` fails at most `4/T'`;
/// * whenever both multiplicative events hold, `2m_1/3 <= m̂_1 <= 2m_1`
///   (counted separately; a proven consequence only when `T' > 108 m_1 ln(2NT')/α`).
pub fn concentration_suite(
    instance: &HcbInstance,
    t_prime: usize,
    reps: usize,
    seed: u64,
) -> Result<ConcentrationReport, HarnessError> {
    if instance.k() != 2 {
        return Err(HarnessError::Contexts(instance.k()));
    }
    if reps < 2 {
        return Err(HarnessError::Replications(reps));
    }
    let n = instance.n();
    let alpha = instance.alpha()[1];
    let p = instance.cond_row(1).to_vec();
    let tp = t_prime as f64;
    let nf = n as f64;
    let m1 = m_value(&p)?.value();
    let mu_obs = exact_mu(instance, Action::Observe)?;

    let eps_alpha = error_radius(3.0 * alpha, 2.0, tp)?;
    let eps_obs = error_radius(3.0, 2.0, tp)?;
    let eps_p: Vec<f64> = p
        .iter()
        .map(|&pi| error_radius(27.0 / (alpha * pi), 2.0 * nf, tp))
        .collect::<Result<_, _>>()?;
    let eps_pbar: Vec<f64> = p
        .iter()
        .map(|&pi| error_radius(27.0 / (alpha * (1.0 - pi)), 2.0 * nf, tp))
        .collect::<Result<_, _>>()?;
    let log_term = (2.0 * nf * tp).ln();
    let multiplicative_applicable = tp > 27.0 * log_term / alpha;
    let window_applicable = tp > 108.0 * m1 * log_term / alpha;
    let floor = 1.0 / (4.0 * m1);

    let totals = (0..reps)
        .into_par_iter()
        .map(|r| {
            let mut env = StreamKey::new(seed, 0, r as u64, Purpose::Environment).stream();
            let mut x = vec![0u64; instance.words()];
            let (mut c1, mut y_sum) = (0u64, 0u64);
            let mut x1 = vec![0u64; n];
            for _ in 0..t_prime {
                let (s, y) = instance.sample_packed(Action::Observe, &mut env, &mut x);
                y_sum += u64::from(y);
                if s == 1 {
                    c1 += 1;
                    for (j, cnt) in x1.iter_mut().enumerate() {
                        *cnt += x[j / 64] >> (j % 64) & 1;
                    }
                }
            }
            let alpha_hat = c1 as f64 / tp;
            let p_hat: Vec<f64> = x1
                .iter()
                .map(|&v| if c1 == 0 { 0.0 } else { v as f64 / c1 as f64 })
                .collect();

            let mut f = Failures::default();
            f.alpha = u64::from((alpha_hat - alpha).abs() > eps_alpha);
            f.observe = u64::from((y_sum as f64 / tp - mu_obs).abs() >= eps_obs);
            let in_p = (0..n).all(|i| {
                let (lo, hi) = ((1.0 - eps_p[i]) * p[i], (1.0 + eps_p[i]) * p[i]);
                (lo..=hi).contains(&p_hat[i])
            });
            let in_pbar = (0..n).all(|i| {
                let pb = 1.0 - p[i];
                let (lo, hi) = ((1.0 - eps_pbar[i]) * pb, (1.0 + eps_pbar[i]) * pb);
                (lo..=hi).contains(&(1.0 - p_hat[i]))
            });
            f.e_p = u64::from(!in_p);
            f.e_pbar = u64::from(!in_pbar);

            let m_hat = m_value(&p_hat).expect("estimates are probabilities");
            let b11 = threshold_set(&p_hat, m_hat).expect("estimates are probabilities");
            f.p_floor = u64::from((0..n).any(|j| !b11.contains(&j) && p[j] < floor));
            if in_p && in_pbar {
                f.window_checked = 1;
                let mh = m_hat.value();
                f.window_exceptions = u64::from(mh < 2.0 * m1 / 3.0 || mh > 2.0 * m1);
            }
            f
        })
        .reduce(Failures::default, Failures::add);

    let reps_u = reps as u64;
    let events = vec![
        event("alpha_hat", true, totals.alpha, reps_u, 1.0 / tp),
        event("E_p", multiplicative_applicable, totals.e_p, reps_u, 2.0 / tp),
        event("E_pbar", multiplicative_applicable, totals.e_pbar, reps_u, 2.0 / tp),
        event("mu_observe", true, totals.observe, reps_u, 1.0 / tp),
        event("p_floor", true, totals.p_floor, reps_u, 4.0 / tp),
        event("m_hat_window", window_applicable, totals.window_exceptions, reps_u, 0.0),
    ];
    let pass = events.iter().all(|e| e.pass);
    Ok(ConcentrationReport {
        t_prime,
        m1,
        events,
        window_checked: totals.window_checked,
        window_exceptions: totals.window_exceptions,
        pass,
    })
}
