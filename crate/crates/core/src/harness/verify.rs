//! Self-checks run by `hcb verify-lemmas`.

use serde::Serialize;

use super::concentration::concentration_suite;
use super::generate::{random_instance, GeneratorSpec, RewardSpec, RowProfile};
use super::HarnessError;
use crate::adversary::{kl_per_hit, verify_separation};
use crate::complexity::{m_value, Threshold};
use crate::model::{enumerate_joint, exact_mu, Action, HcbInstance};
use crate::rng::{Purpose, Stream, StreamKey};

pub const IDENTITY_TOLERANCE: f64 = 1e-12;

/// One line of the verification summary.
#[derive(Debug, Clone, Serialize)]
pub struct Check {
    pub name: &'static str,
    pub pass: bool,
    /// `key=value` pairs describing what was measured.
    pub detail: Vec<(String, String)>,
}

impl Check {
    fn new(name: &'static str, pass: bool) -> Self {
        Check {
            name,
            pass,
            detail: Vec::new(),
        }
    }

    fn with(mut self, key: &str, value: impl ToString) -> Self {
        self.detail.push((key.to_string(), value.to_string()));
        self
    }
}

/// Largest deviations from the intervention identities on one instance:
/// `do(X_i=x)` against the context mixture of `μ_{s,i,x}`, and the three
/// conditional forms of `P(Y=1 | X_i=x, S=s)` under `do()`, `do(X_i=x)`
/// and `do(S=s)` against each other.
pub fn identity_errors(instance: &HcbInstance) -> Result<(f64, f64), HarnessError> {
    let (n, k) = (instance.n(), instance.k());
    let conditional = |action: Action, s: usize, i: usize, x: u8| -> Result<Option<f64>, HarnessError> {
        let (mut num, mut den) = (0.0, 0.0);
        for (sc, packed, prob) in enumerate_joint(instance, action)? {
            if sc == s && (packed >> i & 1) as u8 == x {
                den += prob;
                num += prob * instance.reward_value(&[packed]);
            }
        }
        Ok((den > 0.0).then(|| num / den))
    };
    let (mut mix, mut forms) = (0.0f64, 0.0f64);
    for i in 0..n {
        for x in 0..2u8 {
            let arm = Action::DoArm { j: i, x };
            let mut expect = 0.0;
            for s in 0..k {
                let mu = instance.conditional_mu(s, i, x)?;
                expect += instance.alpha()[s] * mu;
                let values = [
                    conditional(Action::Observe, s, i, x)?,
                    conditional(arm, s, i, x)?,
                    conditional(Action::DoContext { s }, s, i, x)?,
                ];
                for v in values.into_iter().flatten() {
                    forms = forms.max((v - mu).abs());
                }
            }
            mix = mix.max((exact_mu(instance, arm)? - expect).abs());
        }
    }
    Ok((mix, forms))
}

/// Smallest feasible `s` by scanning every integer and every reciprocal
/// breakpoint without sorting.
fn scan_m(v: &[f64]) -> Threshold {
    let theta: Vec<f64> = v.iter().map(|&x| x.min(1.0 - x)).collect();
    let count = |s: Threshold| theta.iter().filter(|&&t| s.below_reciprocal(t)).count();
    let candidates = (1..=v.len())
        .map(|c| Threshold::Real(c as f64))
        .chain(theta.iter().filter(|&&t| t > 0.0).map(|&t| Threshold::Reciprocal(t)));
    let mut best: Option<Threshold> = None;
    for c in candidates {
        if c.covers(count(c)) && best.is_none_or(|b| c.cmp_exact(b).is_lt()) {
            best = Some(c);
        }
    }
    best.expect("s = N is always feasible")
}

fn random_vector(rng: &mut Stream, max_len: u64) -> Vec<f64> {
    let n = 1 + rng.below(max_len) as usize;
    (0..n)
        .map(|_| match rng.below(4) {
            0 => 1.0 / (1 + rng.below(8)) as f64,
            1 => rng.uniform(0.0005, 0.05),
            _ => rng.uniform(0.001, 0.999),
        })
        .collect()
}

fn stream(seed: u64, tag: u32) -> Stream {
    StreamKey::new(seed, 0, 0, Purpose::Aux(tag)).stream()
}

pub fn check_identities(seed: u64, count: usize) -> Result<Check, HarnessError> {
    let mut rng = stream(seed, 1);
    let (mut mix, mut forms) = (0.0f64, 0.0f64);
    for _ in 0..count {
        let spec = GeneratorSpec {
            n: 1 + rng.below(8) as usize,
            k: 2,
            alpha: None,
            profile: RowProfile::Uniform { lo: 0.01, hi: 0.99 },
            rows: None,
            sorted_p: false,
            reward: RewardSpec::Dense { lo: 0.01, hi: 0.99 },
        };
        let inst = random_instance(&spec, &mut rng)?;
        let (a, b) = identity_errors(&inst)?;
        mix = mix.max(a);
        forms = forms.max(b);
    }
    Ok(Check::new("intervention_identities", mix <= IDENTITY_TOLERANCE && forms <= IDENTITY_TOLERANCE)
        .with("instances", count)
        .with("max_mixture_error", mix)
        .with("max_conditional_error", forms))
}

pub fn check_m_oracle(seed: u64, count: usize) -> Result<Check, HarnessError> {
    let mut rng = stream(seed, 2);
    let (mut mismatches, mut lemma4) = (0usize, 0usize);
    for _ in 0..count {
        let mut v = random_vector(&mut rng, 32);
        let m = m_value(&v)?;
        if m.cmp_exact(scan_m(&v)).is_ne() {
            mismatches += 1;
        }
        v.iter_mut().for_each(|x| *x = x.min(0.5));
        v.sort_by(f64::total_cmp);
        let m = m_value(&v)?;
        lemma4 += v[..m.ceil().min(v.len())]
            .iter()
            .filter(|&&x| !m.at_most_reciprocal(x))
            .count();
    }
    Ok(Check::new("m_oracle", mismatches == 0 && lemma4 == 0)
        .with("vectors", count)
        .with("mismatches", mismatches)
        .with("sorted_violations", lemma4))
}

pub fn check_concentration(seed: u64, reps: usize) -> Result<Check, HarnessError> {
    let spec = GeneratorSpec {
        n: 5,
        k: 2,
        alpha: Some(vec![0.5, 0.5]),
        profile: RowProfile::Uniform { lo: 0.3, hi: 0.7 },
        rows: None,
        sorted_p: false,
        reward: RewardSpec::ConstantHalf,
    };
    let inst = random_instance(&spec, &mut stream(seed, 3))?;
    let report = concentration_suite(&inst, 2000, reps, seed)?;
    let mut check = Check::new("concentration", report.pass)
        .with("t_prime", report.t_prime)
        .with("reps", reps)
        .with("m1", report.m1);
    for e in &report.events {
        check = check.with(&format!("{}_rate", e.name), e.rate).with(
            &format!("{}_limit", e.name),
            if e.applicable { (e.bound + e.margin).to_string() } else { "n/a".into() },
        );
    }
    Ok(check
        .with("window_checked", report.window_checked)
        .with("window_exceptions", report.window_exceptions))
}

pub fn check_separation(seed: u64, count: usize) -> Result<Check, HarnessError> {
    let mut rng = stream(seed, 4);
    let mut failures = 0usize;
    for _ in 0..count {
        let n = 4 + rng.below(9) as usize;
        let alpha = rng.uniform(0.1, 0.9);
        let mut p: Vec<f64> = (0..n).map(|_| rng.uniform(0.01, 0.5)).collect();
        p.sort_by(f64::total_cmp);
        let q: Vec<f64> = (0..n).map(|_| rng.uniform(0.05, 0.95)).collect();
        if !verify_separation(alpha, &p, &q)?.pass {
            failures += 1;
        }
    }
    Ok(Check::new("separation", failures == 0)
        .with("instances", count)
        .with("failures", failures))
}

pub fn check_kl_grid(points: usize) -> Result<Check, HarnessError> {
    let mut worst = f64::NEG_INFINITY;
    for g in 0..points {
        let eps = 0.25 * g as f64 / points as f64;
        worst = worst.max(kl_per_hit(eps)? - 16.0 * eps * eps / 3.0);
    }
    Ok(Check::new("kl_per_hit", worst <= 0.0)
        .with("points", points)
        .with("max_excess", worst))
}

/// The full verification set; `quick` divides every count by ten.
pub fn verify_lemmas(seed: u64, quick: bool) -> Result<Vec<Check>, HarnessError> {
    let scale = |c: usize| if quick { (c / 10).max(2) } else { c };
    Ok(vec![
        check_identities(seed, scale(100))?,
        check_m_oracle(seed, scale(1000))?,
        check_concentration(seed, scale(20000))?,
        check_separation(seed, scale(200))?,
        check_kl_grid(1000)?,
    ])
}
