//! Acceptance suite. Each test prints one `criterion N: PASS|FAIL` line to
//! stderr, bypassing the test harness capture so the lines show up in a
//! plain `cargo test` run.

mod common;

use std::io::Write as _;
use std::time::{Duration, Instant};

use common::staged::{layout, recompute};
use common::{conditional, joint, m_oracle, random_probability_vector, ratio_of, Ratio};
use hcb_core::adversary::{
    build_adversarial_family, estimate_history_kl, kl_per_hit, theoretical_lower_bound, verify_separation, Shape,
};
use hcb_core::agents::{alg_mc, alg_nmc, run_episode_seeded, sample_size_condition, PolicyName, Policy};
use hcb_core::harness::{
    concentration_suite, family_for, fit_scaling, sweep, worst_member_regret, ExperimentConfig, GeneratorSpec,
    InstanceSource, RegretReport, RewardSpec, RowProfile, ScalingFit,
};
use hcb_core::model::{build_instance, exact_mu, Action, HcbInstance, InstanceSpec, Mode, RewardFunction};
use hcb_core::rng::Stream;
use hcb_core::m_value;

const P: [f64; 8] = [0.31, 0.33, 0.36, 0.38, 0.41, 0.44, 0.46, 0.49];
const Q: [f64; 8] = [0.62, 0.35, 0.51, 0.44, 0.68, 0.39, 0.57, 0.47];
const ALPHA: f64 = 0.5;

fn report(n: u32, title: &str, pass: bool, elapsed: Duration, detail: &str) {
    let verdict = if pass { "PASS" } else { "FAIL" };
    let _ = writeln!(
        std::io::stderr(),
        "criterion {n}: {verdict} [{title}] {detail} ({:.2}s)",
        elapsed.as_secs_f64()
    );
}

/// The regime-4 instance: both rows inside (0.3, 0.7), `p` ascending below 1/2.
fn regime4() -> HcbInstance {
    build_instance(InstanceSpec {
        k: 2,
        n: 8,
        alpha: vec![1.0 - ALPHA, ALPHA],
        cond: vec![Q.to_vec(), P.to_vec()],
        reward: RewardFunction::ConstantHalf,
    })
    .unwrap()
}

#[test]
fn criterion_1_intervention_identities() {
    let start = Instant::now();
    let mut rng = Stream::from_seed(101);
    let (mut mix, mut forms) = (0.0f64, 0.0f64);
    for _ in 0..100 {
        let n = 1 + rng.below(10) as usize;
        let inst = common::dense_instance(&mut rng, n);
        let spec = inst.spec();
        for i in 0..n {
            for x in 0..2u8 {
                let a = Action::DoArm { j: i, x };
                let m1 = conditional(spec, Action::Observe, 1, i, x).unwrap();
                let m0 = conditional(spec, Action::Observe, 0, i, x).unwrap();
                mix = mix.max((exact_mu(&inst, a).unwrap() - (spec.alpha[1] * m1 + spec.alpha[0] * m0)).abs());
                for (s, base) in [(0, m0), (1, m1)] {
                    let by_arm = conditional(spec, a, s, i, x).unwrap();
                    let by_ctx = conditional(spec, Action::DoContext { s }, s, i, x).unwrap();
                    forms = forms.max((base - by_arm).abs()).max((base - by_ctx).abs());
                }
            }
        }
    }
    let elapsed = start.elapsed();
    let pass = mix <= 1e-12 && forms <= 1e-12 && elapsed < Duration::from_secs(10);
    report(
        1,
        "intervention identities",
        pass,
        elapsed,
        &format!("instances=100 max_mixture_error={mix:e} max_conditional_error={forms:e}"),
    );
    assert!(pass);
}

#[test]
fn criterion_2_m_oracle() {
    let start = Instant::now();
    let mut rng = Stream::from_seed(202);
    let (mut mismatches, mut violations) = (0, 0);
    for _ in 0..1000 {
        let mut v = random_probability_vector(&mut rng, 32);
        if !ratio_of(m_value(&v).unwrap()).eq(m_oracle(&v)) {
            mismatches += 1;
        }
        v.iter_mut().for_each(|x| *x = x.min(0.5));
        v.sort_by(f64::total_cmp);
        let m = ratio_of(m_value(&v).unwrap());
        let c = m.num.div_ceil(m.den) as usize;
        violations += v[..c.min(v.len())].iter().filter(|&&x| Ratio::recip(x).lt(m)).count();
    }
    let elapsed = start.elapsed();
    let pass = mismatches == 0 && violations == 0 && elapsed < Duration::from_secs(5);
    report(
        2,
        "m oracle",
        pass,
        elapsed,
        &format!("vectors=1000 mismatches={mismatches} sorted_violations={violations}"),
    );
    assert!(pass);
}

#[test]
fn criterion_3_separation() {
    let start = Instant::now();
    let mut rng = Stream::from_seed(303);
    let (mut failed_reports, mut enum_error, mut violations) = (0, 0.0f64, 0);
    let mut counterexamples = Vec::new();
    for _ in 0..200 {
        let n = 4 + rng.below(9) as usize;
        let alpha = rng.uniform(0.1, 0.9);
        let mut p: Vec<f64> = (0..n).map(|_| rng.uniform(0.01, 0.4999)).collect();
        p.sort_by(f64::total_cmp);
        let q: Vec<f64> = (0..n).map(|_| rng.uniform(0.05, 0.95)).collect();
        let m = ratio_of(m_value(&p).unwrap());
        assert!(Ratio::int(2).lt(m));
        let m1 = m.num as f64 / m.den as f64;
        let c = m.num.div_ceil(m.den) as usize;
        let mut lead: Vec<usize> = (0..c).collect();
        lead.sort_by(|&a, &b| q[a].total_cmp(&q[b]));
        let hard: Vec<usize> = lead[..(m.num / (2 * m.den)) as usize].to_vec();

        let rep = verify_separation(alpha, &p, &q).unwrap();
        failed_reports += usize::from(!rep.pass);
        if !rep.pass {
            counterexamples.push(format!("m1={m1:.4} alpha={alpha:.4} violations={}", rep.violations.len()));
        }
        let spec = InstanceSpec {
            k: 2,
            n,
            alpha: vec![1.0 - alpha, alpha],
            cond: vec![q.clone(), p.clone()],
            reward: RewardFunction::ConstantHalf,
        };
        for row in &rep.rows {
            let i = row.member;
            let direct: f64 = joint(&spec, row.action)
                .into_iter()
                .filter(|&(_, x, _)| (0..c).all(|l| (x >> l & 1 == 1) == (l == i)))
                .map(|(_, _, pr)| pr)
                .sum();
            enum_error = enum_error.max((direct - row.probability).abs());
            if row.action == (Action::DoArm { j: i, x: 1 }) {
                violations += usize::from(direct < alpha / std::f64::consts::E);
            } else if hard.contains(&i) {
                violations += usize::from(direct > 1.0 / m1 + 1e-12);
            }
        }
        let members: std::collections::BTreeSet<usize> = rep.rows.iter().map(|r| r.member).collect();
        violations += usize::from(members.len() != c);
    }
    let elapsed = start.elapsed();
    let pass = failed_reports == 0 && violations == 0 && enum_error <= 1e-12 && elapsed < Duration::from_secs(30);
    report(
        3,
        "separation",
        pass,
        elapsed,
        &format!(
            "instances=200 failed_reports={failed_reports} independent_violations={violations} max_enumeration_error={enum_error:e} counterexamples=[{}]",
            counterexamples.join("; ")
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_4_concentration() {
    let start = Instant::now();
    let mut rng = Stream::from_seed(404);
    let spec = GeneratorSpec {
        n: 5,
        k: 2,
        alpha: Some(vec![0.5, 0.5]),
        profile: RowProfile::Uniform { lo: 0.3, hi: 0.7 },
        rows: None,
        sorted_p: false,
        reward: RewardSpec::ConstantHalf,
    };
    let inst = hcb_core::harness::random_instance(&spec, &mut rng).unwrap();
    let rep = concentration_suite(&inst, 2000, 20_000, 404).unwrap();
    let event = |name: &str| rep.events.iter().find(|e| e.name == name).unwrap();
    let required = ["alpha_hat", "E_p", "E_pbar", "p_floor"];
    let mut pass = required.iter().all(|&n| {
        let e = event(n);
        e.applicable && e.rate <= e.bound + e.margin
    });
    pass &= event("alpha_hat").bound == 1.0 / 2000.0;
    pass &= event("E_p").bound == 2.0 / 2000.0;
    pass &= event("p_floor").bound == 4.0 / 2000.0;
    pass &= rep.window_checked > 0 && rep.window_exceptions == 0;
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(180);
    let rates: Vec<String> = rep.events.iter().map(|e| format!("{}={}/{}", e.name, e.failures, e.reps)).collect();
    report(
        4,
        "concentration",
        pass,
        elapsed,
        &format!(
            "m1={:.4} {} window_checked={} window_exceptions={}",
            rep.m1,
            rates.join(" "),
            rep.window_checked,
            rep.window_exceptions
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_5_kl_budget() {
    let start = Instant::now();
    let horizon = 4096;
    let fam = build_adversarial_family(ALPHA, &P, &Q, horizon, Shape::Isolated).unwrap();
    let budget = 1.05f64.ln();
    let mut within = 0;
    let mut detail = Vec::new();
    for &i in &fam.hard_set {
        let kl = estimate_history_kl(&fam, i, fam.epsilon, || Ok(Box::new(alg_nmc(horizon)?) as Box<dyn Policy>), 400, 505)
            .unwrap();
        within += usize::from(kl.estimate <= budget + 3.0 * kl.stderr);
        detail.push(format!("kl[{i}]={:.3e}±{:.1e}", kl.estimate, kl.stderr));
    }
    let needed = fam.hard_set.len().div_ceil(2);
    let grid_bad = (0..1000)
        .map(|g| 0.25 * g as f64 / 1000.0)
        .filter(|&e| kl_per_hit(e).unwrap() > 16.0 * e * e / 3.0)
        .count();
    let elapsed = start.elapsed();
    let pass = within >= needed && grid_bad == 0 && elapsed < Duration::from_secs(120);
    report(
        5,
        "KL budget",
        pass,
        elapsed,
        &format!(
            "T={horizon} |I|={} within_budget={within} needed={needed} {} kl_grid_violations={grid_bad}",
            fam.hard_set.len(),
            detail.join(" ")
        ),
    );
    assert!(pass);
}

/// Worst-member regret of `name` on the coordinate family of the regime-4
/// instance at each horizon, with `reps` replications per member.
fn coordinate_series(name: PolicyName, horizons: &[usize], reps: usize, seed: u64) -> Vec<RegretReport> {
    let base = regime4();
    horizons
        .iter()
        .enumerate()
        .map(|(g, &t)| {
            let fam = family_for(&base, Shape::Coordinate, t).unwrap();
            worst_member_regret(&fam, &fam.hard_set, name, Mode::Nmc, reps, seed, g as u64).unwrap().1
        })
        .collect()
}

#[test]
fn criterion_6_lower_bound_wedge() {
    let start = Instant::now();
    let horizons = [1024, 4096, 16384];
    let series = coordinate_series(PolicyName::AlgNmc, &horizons, 400, 606);
    let mut pass = true;
    let mut detail = Vec::new();
    for rep in &series {
        let lb = theoretical_lower_bound(ALPHA, &P, &Q, rep.horizon).unwrap();
        let ok = rep.regret_hat >= lb.bound - 3.0 * rep.stderr;
        pass &= ok;
        detail.push(format!(
            "T={} regret={:.3e}±{:.1e} bound={:.3e} regime={:?}",
            rep.horizon, rep.regret_hat, rep.stderr, lb.bound, lb.regime
        ));
    }
    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(300);
    report(6, "lower-bound wedge", pass, elapsed, &detail.join("; "));
    assert!(pass);
}

#[test]
#[ignore = "long-running regime-2 variant; run with --ignored"]
fn criterion_6_regime_two_variant() {
    let start = Instant::now();
    let n = 64;
    let p = vec![0.001; n];
    let q: Vec<f64> = (0..n).map(|i| 0.3 + 0.4 * (i as f64 + 0.5) / n as f64).collect();
    let horizon = 1000;
    let base = build_instance(InstanceSpec {
        k: 2,
        n,
        alpha: vec![1.0 - ALPHA, ALPHA],
        cond: vec![q.clone(), p.clone()],
        reward: RewardFunction::ConstantHalf,
    })
    .unwrap();
    let fam = family_for(&base, Shape::Isolated, horizon).unwrap();
    let (worst, rep) = worst_member_regret(&fam, &fam.hard_set, PolicyName::AlgNmc, Mode::Nmc, 400, 616, 0).unwrap();
    let lb = theoretical_lower_bound(ALPHA, &p, &q, horizon).unwrap();
    let elapsed = start.elapsed();
    let pass = rep.regret_hat >= lb.bound - 3.0 * rep.stderr && elapsed < Duration::from_secs(600);
    report(
        6,
        "lower-bound wedge, regime 2",
        pass,
        elapsed,
        &format!(
            "N={n} T={horizon} |I|={} worst_member={worst} regret={:.3e}±{:.1e} bound={:.3e} regime={:?}",
            fam.hard_set.len(),
            rep.regret_hat,
            rep.stderr,
            lb.bound,
            lb.regime
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_7_upper_bound_and_shape() {
    let start = Instant::now();
    let horizons: Vec<usize> = (10..=16).map(|e| 1usize << e).collect();
    let nmc = coordinate_series(PolicyName::AlgNmc, &horizons, 400, 707);
    let m_p = m_value(&P).unwrap().value();
    let m_q = m_value(&Q).unwrap().value();

    let mut pass = true;
    let mut checked = Vec::new();
    for rep in &nmc {
        let t = rep.horizon;
        if sample_size_condition(&[1.0 - ALPHA, ALPHA], &[m_q, m_p], 8, t) {
            let bound = (122.0 * ((m_p * ALPHA + m_q * (1.0 - ALPHA)) * (8.0 * t as f64).ln() / t as f64).sqrt()).min(1.0);
            pass &= rep.regret_hat <= bound;
            checked.push(t);
        }
    }

    let fit = fit_scaling(&nmc);
    let shape = match &fit {
        ScalingFit::Fit { slope, .. } => (-0.8..=-0.2).contains(slope),
        ScalingFit::Inconclusive { points } => {
            *points < 3 && nmc.iter().filter(|r| r.regret_hat > 3.0 * r.stderr).count() < 3
        }
    };
    pass &= shape;

    let largest = *horizons.last().unwrap();
    let mc = coordinate_series(PolicyName::AlgMc, &[largest], 400, 717);
    let (a, b) = (&mc[0], nmc.last().unwrap());
    let combined = (a.stderr.powi(2) + b.stderr.powi(2)).sqrt();
    let mc_ok = a.regret_hat <= b.regret_hat + 3.0 * combined;
    pass &= mc_ok;

    let elapsed = start.elapsed();
    pass &= elapsed < Duration::from_secs(600);
    let series: Vec<String> = nmc.iter().map(|r| format!("{}:{:.3e}", r.horizon, r.regret_hat)).collect();
    report(
        7,
        "upper bound and sqrt(T) shape",
        pass,
        elapsed,
        &format!(
            "series=[{}] fit={fit:?} upper_bound_checked_at={checked:?} mc_at_{largest}={:.3e} nmc_at_{largest}={:.3e} combined_se={combined:.1e}",
            series.join(" "),
            a.regret_hat,
            b.regret_hat
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_8_bookkeeping() {
    let start = Instant::now();
    let mut rng = Stream::from_seed(808);
    let mut mismatches = 0usize;
    for seed in 0..50u64 {
        let n = 3 + rng.below(6) as usize;
        let mut row = || -> Vec<f64> {
            (0..n)
                .map(|_| match rng.below(3) {
                    0 => rng.uniform(0.005, 0.08),
                    1 => rng.uniform(0.92, 0.995),
                    _ => rng.uniform(0.3, 0.7),
                })
                .collect()
        };
        let cond = vec![row(), row()];
        let table = (0..1usize << n).map(|_| rng.uniform(0.1, 0.9)).collect();
        let inst = build_instance(InstanceSpec {
            k: 2,
            n,
            alpha: vec![0.45, 0.55],
            cond,
            reward: RewardFunction::Dense { table },
        })
        .unwrap();
        let mode = if seed % 2 == 0 { Mode::Nmc } else { Mode::Mc };
        let t = 300 + rng.below(3000) as usize;
        let mut agent = match mode {
            Mode::Nmc => alg_nmc(t).unwrap(),
            Mode::Mc => alg_mc(t).unwrap(),
        };
        let ep = run_episode_seeded(&inst, &mut agent, t, seed).unwrap();
        let o = recompute(&ep.history, mode, t);
        let st = agent.estimates().unwrap();
        let close = |a: f64, b: f64| (a - b).abs() <= 1e-12;
        let mut ok = ep.history.actions() == &o.expected_actions[..];
        ok &= close(st.alpha_hat[1], o.alpha1) && close(st.mu_observe, o.mu_observe);
        for l in 0..2 {
            ok &= st.p_hat[l].iter().zip(&o.p_hat[l]).all(|(a, b)| close(*a, *b));
            for j in 0..n {
                ok &= (0..2).all(|x| close(st.mu[l][j][x], o.mu[l][j][x]));
            }
        }
        ok &= st.mu_context.iter().zip(&o.mu_context).all(|(a, b)| close(*a, *b));
        ok &= st.refine.iter().zip(&o.blocks).all(|(p, b)| p.members == b.members && p.executed() == b.executed);
        ok &= st.mu_action.iter().zip(&o.values).all(|(a, b)| close(*a, *b));
        ok &= ep.chosen == o.choice;
        let (t1, _, _) = layout(mode, t);
        ok &= o.t1 == t1 && agent.schedule().observe_len == t1;
        mismatches += usize::from(!ok);
    }

    // zero denominators: a single observation round leaves one context unseen
    let flat = build_instance(InstanceSpec {
        k: 2,
        n: 3,
        alpha: vec![0.5, 0.5],
        cond: vec![vec![0.5; 3], vec![0.5; 3]],
        reward: RewardFunction::ConstantHalf,
    })
    .unwrap();
    let mut agent = alg_nmc(5).unwrap();
    let ep = run_episode_seeded(&flat, &mut agent, 5, 1).unwrap();
    let st = agent.estimates().unwrap();
    let unseen = 1 - ep.history.s(0);
    let zero_ok = st.alpha_hat[unseen] == 0.0
        && st.p_hat[unseen].iter().all(|&p| p == 0.0)
        && st.mu_stage1[unseen].iter().all(|m| *m == [0.0, 0.0]);

    let elapsed = start.elapsed();
    let pass = mismatches == 0 && zero_ok && elapsed < Duration::from_secs(30);
    report(
        8,
        "algorithm bookkeeping",
        pass,
        elapsed,
        &format!("episodes=50 mismatches={mismatches} zero_denominator_convention={zero_ok}"),
    );
    assert!(pass);
}

#[test]
fn criterion_9_determinism() {
    let start = Instant::now();
    let dir = tempfile::tempdir().unwrap();
    let config = |out: &str| ExperimentConfig {
        instance: InstanceSource::Generator(GeneratorSpec {
            n: 6,
            k: 2,
            alpha: None,
            profile: RowProfile::Uniform { lo: 0.05, hi: 0.95 },
            rows: None,
            sorted_p: false,
            reward: RewardSpec::Dense { lo: 0.2, hi: 0.8 },
        }),
        algorithms: vec![PolicyName::AlgNmc, PolicyName::AlgMc, PolicyName::Uniform],
        mode: Mode::Nmc,
        t_grid: vec![512, 2048],
        reps: 200,
        seed: 909,
        adversary: None,
        out: Some(dir.path().join(out)),
    };
    let run = |threads: usize, out: &str| {
        let pool = rayon::ThreadPoolBuilder::new().num_threads(threads).build().unwrap();
        pool.install(|| sweep(&config(out)).unwrap());
    };
    run(1, "one");
    run(4, "four");
    let read = |sub: &str, file: &str| std::fs::read(dir.path().join(sub).join(file)).unwrap();
    let csv = read("one", "sweep.csv") == read("four", "sweep.csv");
    let json = read("one", "sweep.json") == read("four", "sweep.json");
    let elapsed = start.elapsed();
    let pass = csv && json && elapsed < Duration::from_secs(60);
    report(
        9,
        "determinism",
        pass,
        elapsed,
        &format!("workers=1,4 csv_identical={csv} json_identical={json}"),
    );
    assert!(pass);
}
