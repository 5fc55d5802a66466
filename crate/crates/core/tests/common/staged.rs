//! Recomputes the two-context staged estimators from a raw history using
//! plain counting loops.

use hcb_core::agents::History;
use hcb_core::complexity::{m_value, threshold_set};
use hcb_core::model::{Action, Mode, Observation};

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug, Clone)]
pub struct Block {
    pub context: usize,
    pub value: u8,
    pub members: Vec<usize>,
    pub executed: bool,
    /// `(arm, first round, end round)`.
    pub rounds: Vec<(usize, usize, usize)>,
}

#[derive(Debug, Clone)]
pub struct Recomputed {
    pub t1: usize,
    pub alpha1: f64,
    pub p_hat: [Vec<f64>; 2],
    pub mu_stage1: [Vec<[f64; 2]>; 2],
    pub mu: [Vec<[f64; 2]>; 2],
    pub mu_observe: f64,
    pub mu_context: Vec<f64>,
    pub blocks: Vec<Block>,
    pub expected_actions: Vec<Action>,
    pub values: Vec<f64>,
    pub choice: Action,
}

struct Counts {
    c: usize,
    x1: Vec<usize>,
    y1: Vec<usize>,
    y0: Vec<usize>,
}

fn count(obs: &[Observation], l: usize, n: usize) -> Counts {
    let mut k = Counts {
        c: 0,
        x1: vec![0; n],
        y1: vec![0; n],
        y0: vec![0; n],
    };
    for o in obs.iter().filter(|o| o.s == l) {
        k.c += 1;
        for j in 0..n {
            if o.x[j] {
                k.x1[j] += 1;
                k.y1[j] += usize::from(o.y);
            } else {
                k.y0[j] += usize::from(o.y);
            }
        }
    }
    k
}

/// Stage layout `(observe, context stage, refine budget)` of the two named
/// algorithms, as multiples of the horizon.
pub fn layout(mode: Mode, horizon: usize) -> (usize, usize, usize) {
    match mode {
        Mode::Nmc => (horizon / 5, 0, horizon / 5),
        Mode::Mc => (horizon / 15, horizon / 15, horizon / 5),
    }
}

pub fn recompute(history: &History, mode: Mode, horizon: usize) -> Recomputed {
    let n = history.n_arms();
    let obs: Vec<Observation> = (0..history.len()).map(|t| history.observation(t)).collect();
    let (t1, tc, d) = layout(mode, horizon);

    let stage1 = &obs[..t1];
    let c1 = stage1.iter().filter(|o| o.s == 1).count();
    let alpha1 = ratio(c1, t1);
    let mu_observe = ratio(stage1.iter().filter(|o| o.y).count(), t1);

    // context 1 is intervened on first
    let source = |l: usize| -> &[Observation] {
        match mode {
            Mode::Nmc => stage1,
            Mode::Mc if l == 1 => &obs[t1..t1 + tc],
            Mode::Mc => &obs[t1 + tc..t1 + 2 * tc],
        }
    };
    let counts = [count(source(0), 0, n), count(source(1), 1, n)];
    let p_hat = [0, 1].map(|l| (0..n).map(|j| ratio(counts[l].x1[j], counts[l].c)).collect::<Vec<_>>());
    let mu_stage1 = [0, 1].map(|l| {
        let k = &counts[l];
        (0..n)
            .map(|j| [ratio(k.y0[j], k.c - k.x1[j]), ratio(k.y1[j], k.x1[j])])
            .collect::<Vec<_>>()
    });
    let mu_context = match mode {
        Mode::Nmc => Vec::new(),
        Mode::Mc => [0, 1]
            .map(|l| {
                let s = source(l);
                ratio(s.iter().filter(|o| o.y).count(), s.len())
            })
            .to_vec(),
    };

    let est_end = t1 + 2 * tc;
    let mut expected_actions = vec![Action::Observe; horizon];
    for (t, a) in expected_actions.iter_mut().enumerate().take(est_end).skip(t1) {
        *a = Action::DoContext {
            s: if t < t1 + tc { 1 } else { 0 },
        };
    }

    let mut mu = mu_stage1.clone();
    let mut blocks = Vec::new();
    for (r, (l, value)) in [(1usize, 1u8), (1, 0), (0, 1), (0, 0)].into_iter().enumerate() {
        let m = m_value(&p_hat[l]).unwrap();
        let members = if value == 1 {
            threshold_set(&p_hat[l], m).unwrap()
        } else {
            let flipped: Vec<f64> = p_hat[l].iter().map(|p| 1.0 - p).collect();
            threshold_set(&flipped, m).unwrap()
        };
        let start = est_end + r * d;
        let executed = !members.is_empty() && members.len() <= d;
        let mut rounds = Vec::new();
        if executed {
            let b = d / members.len();
            for (i, &j) in members.iter().enumerate() {
                let lo = start + i * b;
                let hi = if i + 1 == members.len() { start + d } else { lo + b };
                rounds.push((j, lo, hi));
                for a in &mut expected_actions[lo..hi] {
                    *a = Action::DoArm { j, x: value };
                }
                let block = &obs[lo..hi];
                let c = block.iter().filter(|o| o.s == l).count();
                let f = block.iter().filter(|o| o.s == l && o.y).count();
                mu[l][j][value as usize] = ratio(f, c);
            }
        }
        blocks.push(Block {
            context: l,
            value,
            members,
            executed,
            rounds,
        });
    }

    let mut actions = vec![Action::Observe];
    let mut values = vec![mu_observe];
    for j in 0..n {
        for x in 0..2 {
            actions.push(Action::DoArm { j, x: x as u8 });
            values.push((1.0 - alpha1) * mu[0][j][x] + alpha1 * mu[1][j][x]);
        }
    }
    for (s, &v) in mu_context.iter().enumerate() {
        actions.push(Action::DoContext { s });
        values.push(v);
    }
    let mut best = 0;
    for (i, &v) in values.iter().enumerate() {
        if v > values[best] {
            best = i;
        }
    }

    Recomputed {
        t1,
        alpha1,
        p_hat,
        mu_stage1,
        mu,
        mu_observe,
        mu_context,
        blocks,
        expected_actions,
        choice: actions[best],
        values,
    }
}
