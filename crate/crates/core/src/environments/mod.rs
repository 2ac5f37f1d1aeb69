//! Deterministic, finite-horizon environments and sparse goal tasks.

mod grid;
mod point_mass;

use rand::Rng;

pub use grid::{load_layout, parse_layout, GridSpec, GridWorld, Layout, LayoutTag, StartMode, GRID_ACTIONS};
pub use point_mass::{PointMass, PointMassSpec};

use crate::error::{Error, Result};

pub type Observation = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum ObsMode {
    /// Indicator over free cells.
    OneHot,
    /// Position scaled to `[0, 1]²`.
    Coords,
    /// Indicator over all cells, walls included.
    Occupancy,
}

impl std::str::FromStr for ObsMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "one-hot" => Ok(ObsMode::OneHot),
            "coords" => Ok(ObsMode::Coords),
            "occupancy" => Ok(ObsMode::Occupancy),
            other => Err(Error::Config(format!("unknown observation mode `{other}`"))),
        }
    }
}

/// Sparse reward: 1 on entering any goal cell, else 0.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub struct TaskSpec {
    pub goals: Vec<usize>,
    pub terminate_on_goal: bool,
}

impl TaskSpec {
    pub fn reach(goal: usize) -> Self {
        TaskSpec {
            goals: vec![goal],
            terminate_on_goal: true,
        }
    }

    /// Reward the environment would emit for arriving at `state_id`.
    pub fn reward(&self, state_id: usize) -> f64 {
        if self.goals.contains(&state_id) {
            1.0
        } else {
            0.0
        }
    }

    pub fn terminates(&self, state_id: usize) -> bool {
        self.terminate_on_goal && self.goals.contains(&state_id)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum EnvState {
    Grid {
        cell: usize,
        steps: usize,
        done: bool,
    },
    PointMass {
        position: [f64; 2],
        velocity: [f64; 2],
        steps: usize,
        done: bool,
    },
}

impl EnvState {
    pub fn steps(&self) -> usize {
        match *self {
            EnvState::Grid { steps, .. } | EnvState::PointMass { steps, .. } => steps,
        }
    }

    pub fn is_done(&self) -> bool {
        match *self {
            EnvState::Grid { done, .. } | EnvState::PointMass { done, .. } => done,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct StepOutcome {
    pub state: EnvState,
    pub obs: Observation,
    /// `None` when no task is attached (reward-free mode).
    pub reward: Option<f64>,
    /// A goal ended the episode.
    pub terminated: bool,
    /// The time limit ended the episode.
    pub truncated: bool,
}

impl StepOutcome {
    pub fn done(&self) -> bool {
        self.terminated || self.truncated
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum Environment {
    Grid(GridWorld),
    PointMass(PointMass),
}

impl Environment {
    pub fn num_actions(&self) -> usize {
        match self {
            Environment::Grid(_) => GRID_ACTIONS.len(),
            Environment::PointMass(_) => point_mass::NUM_ACTIONS,
        }
    }

    /// Size of the state-id space used by tabular learners.
    pub fn num_states(&self) -> usize {
        match self {
            Environment::Grid(g) => g.spec().num_cells(),
            Environment::PointMass(p) => p.num_states(),
        }
    }

    pub fn obs_dim(&self) -> usize {
        match self {
            Environment::Grid(g) => g.obs_dim(),
            Environment::PointMass(_) => 2,
        }
    }

    pub fn episode_length(&self) -> usize {
        match self {
            Environment::Grid(g) => g.spec().episode_length,
            Environment::PointMass(p) => p.spec().episode_length,
        }
    }

    pub fn task(&self) -> Option<&TaskSpec> {
        match self {
            Environment::Grid(g) => g.task(),
            Environment::PointMass(p) => p.task(),
        }
    }

    /// Same dynamics with the task replaced.
    pub fn with_task(&self, task: Option<TaskSpec>) -> Result<Self> {
        Ok(match self {
            Environment::Grid(g) => Environment::Grid(g.clone().with_task(task)?),
            Environment::PointMass(p) => Environment::PointMass(p.clone().with_task(task)?),
        })
    }

    /// Draws an initial state.
    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> (EnvState, Observation) {
        match self {
            Environment::Grid(g) => g.reset(rng),
            Environment::PointMass(p) => p.reset(rng),
        }
    }

    pub fn step(&self, state: &EnvState, action: usize) -> Result<StepOutcome> {
        match self {
            Environment::Grid(g) => g.step(state, action),
            Environment::PointMass(p) => p.step(state, action),
        }
    }

    pub fn observe(&self, state: &EnvState) -> Observation {
        match (self, state) {
            (Environment::Grid(g), EnvState::Grid { cell, .. }) => g.observe_cell(*cell),
            (Environment::PointMass(_), EnvState::PointMass { position, .. }) => position.to_vec(),
            _ => panic!("state does not belong to this environment"),
        }
    }

    pub fn state_id(&self, state: &EnvState) -> usize {
        match (self, state) {
            (Environment::Grid(_), EnvState::Grid { cell, .. }) => *cell,
            (Environment::PointMass(p), EnvState::PointMass { position, .. }) => p.bin(*position),
            _ => panic!("state does not belong to this environment"),
        }
    }

    /// Every reachable state id, ascending. Grid worlds only.
    pub fn enumerate_states(&self) -> Result<Vec<usize>> {
        match self {
            Environment::Grid(g) => Ok(g.enumerate_states()),
            Environment::PointMass(_) => Err(Error::Unsupported("state enumeration needs a finite grid")),
        }
    }
}
