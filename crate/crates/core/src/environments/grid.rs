use std::collections::VecDeque;
use std::path::Path;

use rand::Rng;

use super::{EnvState, ObsMode, Observation, StepOutcome, TaskSpec};
use crate::error::{Error, Result};

/// Grid actions, in index order.
pub const GRID_ACTIONS: [&str; 4] = ["up", "down", "left", "right"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum LayoutTag {
    OpenRoom,
    FourRooms,
    Custom,
}

#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize)]
pub enum StartMode {
    Fixed(usize),
    UniformFree,
}

/// Static description of a grid. Cells are indexed `y * width + x`, row 0 at
/// the top.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GridSpec {
    pub width: usize,
    pub height: usize,
    pub walls: Vec<bool>,
    pub layout: LayoutTag,
    pub episode_length: usize,
    pub start: StartMode,
}

/// Parsed layout text: the grid plus any goal cells marked `G`.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Layout {
    pub spec: GridSpec,
    pub goals: Vec<usize>,
}

impl GridSpec {
    pub fn open_room(width: usize, height: usize, episode_length: usize) -> Self {
        GridSpec {
            width,
            height,
            walls: vec![false; width * height],
            layout: LayoutTag::OpenRoom,
            episode_length,
            start: StartMode::Fixed(0),
        }
    }

    /// An `size × size` room split by a wall cross at the middle row and
    /// column, with one doorway in each of the four wall arms. Starts in the
    /// top-left corner.
    pub fn four_rooms(size: usize, episode_length: usize) -> Result<Self> {
        if size < 5 || size % 2 == 0 {
            return Err(Error::Layout(format!("four-rooms size must be odd and >= 5, got {size}")));
        }
        let mid = size / 2;
        let near = mid / 2;
        let far = mid + 1 + (size - mid - 1) / 2;
        let mut walls = vec![false; size * size];
        for i in 0..size {
            walls[mid * size + i] = true;
            walls[i * size + mid] = true;
        }
        for (x, y) in [(mid, near), (mid, far), (near, mid), (far, mid)] {
            walls[y * size + x] = false;
        }
        let spec = GridSpec {
            width: size,
            height: size,
            walls,
            layout: LayoutTag::FourRooms,
            episode_length,
            start: StartMode::Fixed(0),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn num_cells(&self) -> usize {
        self.width * self.height
    }

    pub fn is_free(&self, cell: usize) -> bool {
        cell < self.num_cells() && !self.walls[cell]
    }

    pub fn free_cells(&self) -> Vec<usize> {
        (0..self.num_cells()).filter(|&c| self.is_free(c)).collect()
    }

    pub fn xy(&self, cell: usize) -> (usize, usize) {
        (cell % self.width, cell / self.width)
    }

    pub fn cell(&self, x: usize, y: usize) -> usize {
        y * self.width + x
    }

    /// Cell reached by `action` from `cell`; blocked moves stay put.
    pub fn move_cell(&self, cell: usize, action: usize) -> usize {
        let (x, y) = self.xy(cell);
        let target = match action {
            0 if y > 0 => Some((x, y - 1)),
            1 if y + 1 < self.height => Some((x, y + 1)),
            2 if x > 0 => Some((x - 1, y)),
            3 if x + 1 < self.width => Some((x + 1, y)),
            _ => None,
        };
        match target.map(|(x, y)| self.cell(x, y)) {
            Some(c) if self.is_free(c) => c,
            _ => cell,
        }
    }

    pub fn start_cells(&self) -> Vec<usize> {
        match self.start {
            StartMode::Fixed(c) => vec![c],
            StartMode::UniformFree => self.free_cells(),
        }
    }

    /// Cells reachable from any start cell, ascending.
    pub fn reachable_from(&self, sources: &[usize]) -> Vec<usize> {
        let mut seen = vec![false; self.num_cells()];
        let mut queue = VecDeque::new();
        for &s in sources {
            if self.is_free(s) && !seen[s] {
                seen[s] = true;
                queue.push_back(s);
            }
        }
        while let Some(c) = queue.pop_front() {
            for a in 0..GRID_ACTIONS.len() {
                let n = self.move_cell(c, a);
                if !seen[n] {
                    seen[n] = true;
                    queue.push_back(n);
                }
            }
        }
        (0..self.num_cells()).filter(|&c| seen[c]).collect()
    }

    /// Free cells whose two opposite neighbors (left/right or up/down) are
    /// both wall cells.
    pub fn doorways(&self) -> Vec<usize> {
        let wall = |x: isize, y: isize| {
            x >= 0
                && y >= 0
                && (x as usize) < self.width
                && (y as usize) < self.height
                && self.walls[self.cell(x as usize, y as usize)]
        };
        self.free_cells()
            .into_iter()
            .filter(|&c| {
                let (x, y) = self.xy(c);
                let (x, y) = (x as isize, y as isize);
                (wall(x - 1, y) && wall(x + 1, y)) || (wall(x, y - 1) && wall(x, y + 1))
            })
            .collect()
    }

    pub fn validate(&self) -> Result<()> {
        if self.width == 0 || self.height == 0 {
            return Err(Error::Layout("empty grid".into()));
        }
        if self.walls.len() != self.num_cells() {
            return Err(Error::Layout("wall mask does not match grid size".into()));
        }
        if self.episode_length == 0 {
            return Err(Error::Layout("episode_length must be >= 1".into()));
        }
        let free = self.free_cells();
        if free.is_empty() {
            return Err(Error::Layout("no free cells".into()));
        }
        if let StartMode::Fixed(c) = self.start {
            if !self.is_free(c) {
                return Err(Error::Layout(format!("start cell {c} is not free")));
            }
        }
        if self.reachable_from(&self.start_cells()) != free {
            return Err(Error::Layout("free cells are not all reachable from the start".into()));
        }
        if self.layout == LayoutTag::FourRooms && self.doorways().len() != 4 {
            return Err(Error::Layout(format!(
                "four-rooms layout needs exactly 4 doorways, found {}",
                self.doorways().len()
            )));
        }
        Ok(())
    }

    /// Renders the layout in the text format accepted by [`parse_layout`].
    pub fn to_layout_string(&self, goals: &[usize]) -> String {
        let mut s = String::with_capacity((self.width + 1) * self.height);
        for y in 0..self.height {
            for x in 0..self.width {
                let c = self.cell(x, y);
                let ch = if self.walls[c] {
                    '#'
                } else if goals.contains(&c) {
                    'G'
                } else if self.start == StartMode::Fixed(c) {
                    'S'
                } else {
                    '.'
                };
                s.push(ch);
            }
            s.push('\n');
        }
        s
    }
}

/// Parses `#` (wall), `.` (free), `S` (start) and `G` (goal) rows.
///
/// Rows must all have the same length; trailing blank lines are ignored. With
/// no `S` the start is uniform over free cells.
pub fn parse_layout(text: &str, layout: LayoutTag, episode_length: usize) -> Result<Layout> {
    let rows: Vec<&str> = text
        .lines()
        .map(|l| l.trim_end_matches('\r'))
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .skip_while(|l| l.trim().is_empty())
        .collect::<Vec<_>>()
        .into_iter()
        .rev()
        .collect();
    let height = rows.len();
    let width = rows.first().map_or(0, |r| r.chars().count());
    if height == 0 || width == 0 {
        return Err(Error::Layout("empty layout".into()));
    }
    let mut walls = Vec::with_capacity(width * height);
    let mut starts = Vec::new();
    let mut goals = Vec::new();
    for (y, row) in rows.iter().enumerate() {
        if row.chars().count() != width {
            return Err(Error::Layout(format!(
                "ragged row {}: expected {width} cells, got {}",
                y + 1,
                row.chars().count()
            )));
        }
        for (x, ch) in row.chars().enumerate() {
            let cell = y * width + x;
            match ch {
                '#' => walls.push(true),
                '.' => walls.push(false),
                'S' => {
                    walls.push(false);
                    starts.push(cell);
                }
                'G' => {
                    walls.push(false);
                    goals.push(cell);
                }
                other => {
                    return Err(Error::Layout(format!(
                        "unknown character {other:?} at row {}, column {}",
                        y + 1,
                        x + 1
                    )))
                }
            }
        }
    }
    let start = match starts.as_slice() {
        [] => StartMode::UniformFree,
        [s] => StartMode::Fixed(*s),
        _ => return Err(Error::Layout("more than one start cell".into())),
    };
    let spec = GridSpec {
        width,
        height,
        walls,
        layout,
        episode_length,
        start,
    };
    spec.validate()?;
    Ok(Layout { spec, goals })
}

pub fn load_layout(path: &Path, layout: LayoutTag, episode_length: usize) -> Result<Layout> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_layout(&text, layout, episode_length)
}

/// A grid with an observation encoding and an optional sparse task.
#[derive(Debug, Clone, PartialEq)]
pub struct GridWorld {
    spec: GridSpec,
    obs_mode: ObsMode,
    task: Option<TaskSpec>,
    free_slot: Vec<Option<usize>>,
    num_free: usize,
}

impl GridWorld {
    pub fn new(spec: GridSpec, obs_mode: ObsMode, task: Option<TaskSpec>) -> Result<Self> {
        spec.validate()?;
        let mut free_slot = vec![None; spec.num_cells()];
        let mut num_free = 0;
        for c in spec.free_cells() {
            free_slot[c] = Some(num_free);
            num_free += 1;
        }
        let world = GridWorld {
            spec,
            obs_mode,
            task: None,
            free_slot,
            num_free,
        };
        world.with_task(task)
    }

    /// Replaces the task, checking every goal is reachable from every start.
    pub fn with_task(mut self, task: Option<TaskSpec>) -> Result<Self> {
        if let Some(t) = &task {
            if t.goals.is_empty() {
                return Err(Error::Layout("task has no goal cells".into()));
            }
            for &start in &self.spec.start_cells() {
                let reach = self.spec.reachable_from(&[start]);
                if let Some(g) = t.goals.iter().find(|g| reach.binary_search(g).is_err()) {
                    return Err(Error::Layout(format!("goal cell {g} unreachable from start {start}")));
                }
            }
        }
        self.task = task;
        Ok(self)
    }

    pub fn spec(&self) -> &GridSpec {
        &self.spec
    }

    pub fn task(&self) -> Option<&TaskSpec> {
        self.task.as_ref()
    }

    pub fn obs_mode(&self) -> ObsMode {
        self.obs_mode
    }

    pub fn obs_dim(&self) -> usize {
        match self.obs_mode {
            ObsMode::OneHot => self.num_free,
            ObsMode::Coords => 2,
            ObsMode::Occupancy => self.spec.num_cells(),
        }
    }

    pub fn reset<R: Rng + ?Sized>(&self, rng: &mut R) -> (EnvState, Observation) {
        let cell = match self.spec.start {
            StartMode::Fixed(c) => c,
            StartMode::UniformFree => {
                let free = self.spec.free_cells();
                free[rng.random_range(0..free.len())]
            }
        };
        let state = EnvState::Grid {
            cell,
            steps: 0,
            done: false,
        };
        let obs = self.observe_cell(cell);
        (state, obs)
    }

    pub fn step(&self, state: &EnvState, action: usize) -> Result<StepOutcome> {
        let EnvState::Grid { cell, steps, done } = *state else {
            return Err(Error::InvalidArgument("grid world given a non-grid state".into()));
        };
        if done {
            return Err(Error::EpisodeFinished);
        }
        if action >= GRID_ACTIONS.len() {
            return Err(Error::InvalidArgument(format!("grid action {action} out of range")));
        }
        let next = self.spec.move_cell(cell, action);
        let steps = steps + 1;
        let (reward, terminated) = match &self.task {
            None => (None, false),
            Some(t) => {
                let hit = t.goals.contains(&next);
                (Some(if hit { 1.0 } else { 0.0 }), hit && t.terminate_on_goal)
            }
        };
        let truncated = !terminated && steps >= self.spec.episode_length;
        Ok(StepOutcome {
            state: EnvState::Grid {
                cell: next,
                steps,
                done: terminated || truncated,
            },
            obs: self.observe_cell(next),
            reward,
            terminated,
            truncated,
        })
    }

    pub fn observe_cell(&self, cell: usize) -> Observation {
        match self.obs_mode {
            ObsMode::OneHot => {
                let mut v = vec![0.0; self.num_free];
                if let Some(slot) = self.free_slot[cell] {
                    v[slot] = 1.0;
                }
                v
            }
            ObsMode::Coords => {
                let (x, y) = self.spec.xy(cell);
                let norm = |v: usize, n: usize| if n > 1 { v as f64 / (n - 1) as f64 } else { 0.0 };
                vec![norm(x, self.spec.width), norm(y, self.spec.height)]
            }
            ObsMode::Occupancy => {
                let mut v = vec![0.0; self.spec.num_cells()];
                v[cell] = 1.0;
                v
            }
        }
    }

    pub fn enumerate_states(&self) -> Vec<usize> {
        self.spec.reachable_from(&self.spec.start_cells())
    }
}
