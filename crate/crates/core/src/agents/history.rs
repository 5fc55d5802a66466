use serde::Serialize;

use crate::model::{Action, Observation};

/// Per-round records `(s, x, y, a)`, stored column-wise. Rounds are 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct History {
    n: usize,
    k: usize,
    words: usize,
    s: Vec<u32>,
    x: Vec<u64>,
    y: Vec<bool>,
    a: Vec<Action>,
}

impl History {
    pub fn new(n: usize, k: usize) -> Self {
        Self::with_capacity(n, k, 0)
    }

    pub fn with_capacity(n: usize, k: usize, rounds: usize) -> Self {
        let words = n.div_ceil(64);
        Self {
            n,
            k,
            words,
            s: Vec::with_capacity(rounds),
            x: Vec::with_capacity(rounds * words),
            y: Vec::with_capacity(rounds),
            a: Vec::with_capacity(rounds),
        }
    }

    pub fn n_arms(&self) -> usize {
        self.n
    }

    pub fn n_contexts(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.s.len()
    }

    pub fn is_empty(&self) -> bool {
        self.s.is_empty()
    }

    pub fn push_packed(&mut self, s: usize, x: &[u64], y: bool, a: Action) {
        debug_assert_eq!(x.len(), self.words);
        self.s.push(s as u32);
        self.x.extend_from_slice(x);
        self.y.push(y);
        self.a.push(a);
    }

    pub fn push(&mut self, obs: &Observation, a: Action) {
        let mut words = vec![0u64; self.words];
        for (j, &bit) in obs.x.iter().enumerate() {
            if bit {
                words[j / 64] |= 1 << (j % 64);
            }
        }
        self.push_packed(obs.s, &words, obs.y, a);
    }

    #[inline]
    pub fn s(&self, t: usize) -> usize {
        self.s[t] as usize
    }

    #[inline]
    pub fn y(&self, t: usize) -> bool {
        self.y[t]
    }

    #[inline]
    pub fn action(&self, t: usize) -> Action {
        self.a[t]
    }

    #[inline]
    pub fn x_words(&self, t: usize) -> &[u64] {
        &self.x[t * self.words..(t + 1) * self.words]
    }

    #[inline]
    pub fn x(&self, t: usize, j: usize) -> bool {
        self.x[t * self.words + j / 64] >> (j % 64) & 1 == 1
    }

    pub fn actions(&self) -> &[Action] {
        &self.a
    }

    pub fn observation(&self, t: usize) -> Observation {
        Observation {
            s: self.s(t),
            x: (0..self.n).map(|j| self.x(t, j)).collect(),
            y: self.y(t),
        }
    }
}
