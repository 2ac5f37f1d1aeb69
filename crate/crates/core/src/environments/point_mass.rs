use rand::Rng;

use super::{EnvState, Observation, StepOutcome, TaskSpec};
use crate::error::{Error, Result};

/// `+x, −x, +y, −y, no-op`.
pub const NUM_ACTIONS: usize = 5;

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize)]
pub struct PointMassSpec {
    pub delta: f64,
    pub episode_length: usize,
    /// Bins per axis for the tabular state id.
    pub bins: usize,
}

impl Default for PointMassSpec {
    fn default() -> Self {
        PointMassSpec {
            delta: 0.05,
            episode_length: 100,
            bins: 20,
        }
    }
}

/// A point in the unit box moved by fixed displacements; positions are
/// clipped to the box. Observations are the position.
#[derive(Debug, Clone, PartialEq)]
pub struct PointMass {
    spec: PointMassSpec,
    task: Option<TaskSpec>,
}

impl PointMass {
    pub fn new(spec: PointMassSpec, task: Option<TaskSpec>) -> Result<Self> {
        if !(spec.delta > 0.0) || spec.episode_length == 0 || spec.bins == 0 {
            return Err(Error::Config(format!("invalid point-mass spec {spec:?}")));
        }
        PointMass { spec, task: None }.with_task(task)
    }

    pub fn with_task(mut self, task: Option<TaskSpec>) -> Result<Self> {
        if let Some(t) = &task {
            if t.goals.is_empty() || t.goals.iter().any(|&g| g >= self.num_states()) {
                return Err(Error::Config("point-mass goal bins out of range".into()));
            }
        }
        self.task = task;
        Ok(self)
    }

    pub fn spec(&self) -> &PointMassSpec {
        &self.spec
    }

    pub fn task(&self) -> Option<&TaskSpec> {
        self.task.as_ref()
    }

    pub fn num_states(&self) -> usize {
        self.spec.bins * self.spec.bins
    }

    pub fn bin(&self, p: [f64; 2]) -> usize {
        let b = self.spec.bins;
        let axis = |v: f64| ((v * b as f64) as usize).min(b - 1);
        axis(p[1]) * b + axis(p[0])
    }

    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> (EnvState, Observation) {
        let position = [rng.random_range(0.0..=1.0), rng.random_range(0.0..=1.0)];
        let state = EnvState::PointMass {
            position,
            velocity: [0.0, 0.0],
            steps: 0,
            done: false,
        };
        (state, position.to_vec())
    }

    pub fn step(&self, state: &EnvState, action: usize) -> Result<StepOutcome> {
        let EnvState::PointMass {
            position, steps, done, ..
        } = *state
        else {
            return Err(Error::InvalidArgument("point mass given a non-point-mass state".into()));
        };
        if done {
            return Err(Error::EpisodeFinished);
        }
        let d = self.spec.delta;
        let velocity = match action {
            0 => [d, 0.0],
            1 => [-d, 0.0],
            2 => [0.0, d],
            3 => [0.0, -d],
            4 => [0.0, 0.0],
            _ => return Err(Error::InvalidArgument(format!("point-mass action {action} out of range"))),
        };
        let next = [
            (position[0] + velocity[0]).clamp(0.0, 1.0),
            (position[1] + velocity[1]).clamp(0.0, 1.0),
        ];
        let steps = steps + 1;
        let id = self.bin(next);
        let (reward, terminated) = match &self.task {
            None => (None, false),
            Some(t) => (Some(t.reward(id)), t.terminates(id)),
        };
        let truncated = !terminated && steps >= self.spec.episode_length;
        Ok(StepOutcome {
            state: EnvState::PointMass {
                position: next,
                velocity,
                steps,
                done: terminated || truncated,
            },
            obs: next.to_vec(),
            reward,
            terminated,
            truncated,
        })
    }
}
