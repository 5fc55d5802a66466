use super::{AgentError, History, Policy};
use crate::model::{action_index, argmax_canonical, Action, Mode};
use crate::rng::Stream;

/// Round-robin over the action set; picks the best empirical mean.
#[derive(Debug, Clone)]
pub struct UniformAgent {
    horizon: usize,
    mode: Mode,
    actions: Vec<Action>,
}

pub fn uniform_baseline(horizon: usize, mode: Mode) -> UniformAgent {
    UniformAgent {
        horizon,
        mode,
        actions: Vec::new(),
    }
}

impl Policy for UniformAgent {
    fn name(&self) -> &str {
        "uniform"
    }

    fn mode(&self) -> Mode {
        self.mode
    }

    fn begin(&mut self, n: usize, k: usize, horizon: usize) -> Result<(), AgentError> {
        if horizon != self.horizon {
            return Err(AgentError::HorizonMismatch {
                policy: "uniform".into(),
                expected: self.horizon,
                got: horizon,
            });
        }
        self.actions = std::iter::once(Action::Observe)
            .chain((0..n).flat_map(|j| [Action::DoArm { j, x: 0 }, Action::DoArm { j, x: 1 }]))
            .chain(
                (0..if self.mode == Mode::Mc { k } else { 0 }).map(|s| Action::DoContext { s }),
            )
            .collect();
        if horizon < self.actions.len() {
            return Err(AgentError::HorizonTooShort {
                policy: "uniform".into(),
                t: horizon,
                min: self.actions.len(),
            });
        }
        Ok(())
    }

    fn next_action(&mut self, _history: &History, round: usize, _rng: &mut Stream) -> Action {
        self.actions[round % self.actions.len()]
    }

    fn final_choice(&mut self, history: &History, _rng: &mut Stream) -> Action {
        let n = history.n_arms();
        let mut pulls = vec![0u64; self.actions.len()];
        let mut wins = vec![0u64; self.actions.len()];
        for t in 0..history.len() {
            let i = action_index(n, history.action(t));
            pulls[i] += 1;
            wins[i] += u64::from(history.y(t));
        }
        let means: Vec<f64> = pulls
            .iter()
            .zip(&wins)
            .map(|(&p, &w)| if p == 0 { 0.0 } else { w as f64 / p as f64 })
            .collect();
        self.actions[argmax_canonical(&means)]
    }
}
