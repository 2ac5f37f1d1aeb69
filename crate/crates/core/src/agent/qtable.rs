use rand::Rng;

use super::buffer::Transition;
use crate::error::{Error, Result};

/// Dense action-value table; unseen entries are 0.
#[derive(Debug, Clone, PartialEq)]
pub struct QTable {
    num_states: usize,
    num_actions: usize,
    values: Vec<f64>,
    pub alpha: f64,
    pub gamma: f64,
}

impl QTable {
    pub fn new(num_states: usize, num_actions: usize, alpha: f64, gamma: f64) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::Config("Q-table needs at least one state and action".into()));
        }
        if !(0.0..=1.0).contains(&alpha) || !(0.0..=1.0).contains(&gamma) {
            return Err(Error::Config(format!("alpha and gamma must lie in [0, 1], got {alpha}, {gamma}")));
        }
        Ok(QTable {
            num_states,
            num_actions,
            values: vec![0.0; num_states * num_actions],
            alpha,
            gamma,
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn get(&self, state: usize, action: usize) -> f64 {
        self.values[state * self.num_actions + action]
    }

    pub fn set(&mut self, state: usize, action: usize, value: f64) {
        self.values[state * self.num_actions + action] = value;
    }

    pub fn row(&self, state: usize) -> &[f64] {
        &self.values[state * self.num_actions..(state + 1) * self.num_actions]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn reset_values(&mut self) {
        self.values.fill(0.0);
    }

    pub fn max_value(&self, state: usize) -> f64 {
        self.row(state).iter().copied().fold(f64::NEG_INFINITY, f64::max)
    }

    /// Greedy action; ties go to the lowest index.
    pub fn greedy(&self, state: usize) -> usize {
        let row = self.row(state);
        let mut best = 0;
        for (a, &v) in row.iter().enumerate().skip(1) {
            if v > row[best] {
                best = a;
            }
        }
        best
    }

    /// ε-greedy: uniform with probability `epsilon`, greedy otherwise. Always
    /// consumes one uniform draw, plus one more when exploring.
    pub fn select_action<R: Rng + ?Sized>(&self, state: usize, epsilon: f64, rng: &mut R) -> usize {
        if rng.random::<f64>() < epsilon {
            rng.random_range(0..self.num_actions)
        } else {
            self.greedy(state)
        }
    }

    /// Sequential one-step Q-learning over the batch:
    /// `Q(s,a) += α (r + γ max_a' Q(s',a') (1 − done) − Q(s,a))`.
    pub fn update(&mut self, batch: &[&Transition], rewards: &[f64]) -> Result<()> {
        if batch.len() != rewards.len() {
            return Err(Error::LengthMismatch {
                what: "rewards",
                expected: batch.len(),
                got: rewards.len(),
            });
        }
        for (t, &r) in batch.iter().zip(rewards) {
            let bootstrap = if t.done { 0.0 } else { self.gamma * self.max_value(t.next_state_id) };
            let i = t.state_id * self.num_actions + t.action;
            self.values[i] += self.alpha * (r + bootstrap - self.values[i]);
        }
        Ok(())
    }
}

/// Linear interpolation from `start` to `end` over `horizon` steps, then flat.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct EpsilonSchedule {
    pub start: f64,
    pub end: f64,
    pub horizon: usize,
}

impl EpsilonSchedule {
    pub fn value(&self, step: usize) -> f64 {
        if self.horizon == 0 {
            return self.end;
        }
        let frac = (step as f64 / self.horizon as f64).min(1.0);
        self.start + (self.end - self.start) * frac
    }

    pub fn validate(&self) -> Result<()> {
        for v in [self.start, self.end] {
            if !(0.0..=1.0).contains(&v) {
                return Err(Error::Config(format!("epsilon {v} outside [0, 1]")));
            }
        }
        Ok(())
    }
}
