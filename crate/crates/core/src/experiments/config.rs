use std::path::{Path, PathBuf};

use crate::agent::{EncoderChoice, FinetuneConfig, ReferenceSet, RewardSource, TrainLoopConfig};
use crate::entropy::{EntropyVariant, ExponentMode, MeanMode};
use crate::environments::{
    load_layout, Environment, GridSpec, GridWorld, LayoutTag, ObsMode, PointMass, PointMassSpec, StartMode, TaskSpec,
};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geometry::Backend;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnvKind {
    OpenRoom,
    FourRooms,
    PointMass,
}

/// Where the fine-tuning goal sits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum GoalSpec {
    /// Bottom-right cell, or the last bin of the point mass.
    FarCorner,
    /// Cells marked `G` in the layout file.
    Layout,
    Cell { x: usize, y: usize },
}

/// Every tunable of a run, read from a flat `key = value` file.
///
/// Blank lines and lines starting with `#` are ignored; unknown keys and
/// repeated keys are rejected.
#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub label: String,
    pub out: Option<PathBuf>,
    pub seed: Option<u64>,
    pub num_seeds: usize,
    pub env: EnvKind,
    pub layout: Option<PathBuf>,
    pub width: usize,
    pub height: usize,
    pub size: usize,
    pub episode_length: usize,
    pub obs_mode: ObsMode,
    pub point_mass_delta: f64,
    pub point_mass_bins: usize,
    pub goal: GoalSpec,
    pub train: TrainLoopConfig,
    pub finetune: FinetuneConfig,
    pub methods: Vec<String>,
    pub run_finetune: bool,
    pub decay_threshold: f64,
    pub coverage_target: f64,
    pub coverage_pass_fraction: f64,
    pub parallel: bool,
    pub bench_sizes: Vec<usize>,
    pub bench_dims: Vec<usize>,
    pub bench_k: usize,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            label: "run".into(),
            out: None,
            seed: None,
            num_seeds: 1,
            env: EnvKind::OpenRoom,
            layout: None,
            width: 10,
            height: 10,
            size: 11,
            episode_length: 100,
            obs_mode: ObsMode::Coords,
            point_mass_delta: 0.05,
            point_mass_bins: 20,
            goal: GoalSpec::FarCorner,
            train: TrainLoopConfig::default(),
            finetune: FinetuneConfig::default(),
            methods: vec!["apt".into(), "none".into()],
            run_finetune: false,
            decay_threshold: 0.25,
            coverage_target: 0.9,
            coverage_pass_fraction: 0.8,
            parallel: true,
            bench_sizes: vec![100, 1000, 10_000],
            bench_dims: vec![2, 5, 15],
            bench_k: 5,
        }
    }
}

fn parse<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("invalid value {value:?} for `{key}`")))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value {
        "true" | "yes" | "1" => Ok(true),
        "false" | "no" | "0" => Ok(false),
        _ => Err(Error::Config(format!("invalid boolean {value:?} for `{key}`"))),
    }
}

fn parse_list<T: std::str::FromStr>(key: &str, value: &str) -> Result<Vec<T>> {
    if value.trim().is_empty() {
        return Ok(Vec::new());
    }
    value.split(',').map(|v| parse(key, v.trim())).collect()
}

fn parse_opt_usize(key: &str, value: &str) -> Result<Option<usize>> {
    if value == "auto" {
        Ok(None)
    } else {
        parse(key, value).map(Some)
    }
}

fn join<T: ToString>(v: &[T]) -> String {
    v.iter().map(ToString::to_string).collect::<Vec<_>>().join(",")
}

fn opt_usize(v: Option<usize>) -> String {
    v.map_or_else(|| "auto".into(), |v| v.to_string())
}

impl RunConfig {
    /// Parses config text on top of the defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut config = RunConfig::default();
        let mut seen = std::collections::HashSet::new();
        for (n, raw) in text.lines().enumerate() {
            let line = raw.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let Some((key, value)) = line.split_once('=') else {
                return Err(Error::Config(format!("line {}: expected `key = value`, got {raw:?}", n + 1)));
            };
            let (key, value) = (key.trim(), value.trim());
            if !seen.insert(key.to_string()) {
                return Err(Error::Config(format!("line {}: duplicate key `{key}`", n + 1)));
            }
            config.set(key, value).map_err(|e| match e {
                Error::Config(m) => Error::Config(format!("line {}: {m}", n + 1)),
                other => other,
            })?;
        }
        config.validate()?;
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        RunConfig::parse(&text)
    }

    /// Sets one key from its text form.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let t = &mut self.train;
        let f = &mut self.finetune;
        match key {
            "label" => self.label = value.to_string(),
            "out" => self.out = Some(PathBuf::from(value)),
            "seed" => self.seed = Some(parse(key, value)?),
            "num_seeds" => self.num_seeds = parse(key, value)?,
            "env" => {
                self.env = match value {
                    "open-room" => EnvKind::OpenRoom,
                    "four-rooms" => EnvKind::FourRooms,
                    "point-mass" => EnvKind::PointMass,
                    _ => return Err(Error::Config(format!("unknown env {value:?}"))),
                }
            }
            "layout" => self.layout = (!value.is_empty()).then(|| PathBuf::from(value)),
            "width" => self.width = parse(key, value)?,
            "height" => self.height = parse(key, value)?,
            "size" => self.size = parse(key, value)?,
            "episode_length" => self.episode_length = parse(key, value)?,
            "obs_mode" => self.obs_mode = parse(key, value)?,
            "point_mass_delta" => self.point_mass_delta = parse(key, value)?,
            "point_mass_bins" => self.point_mass_bins = parse(key, value)?,
            "goal" => {
                self.goal = match value {
                    "far-corner" => GoalSpec::FarCorner,
                    "layout" => GoalSpec::Layout,
                    xy => {
                        let v: Vec<usize> = parse_list(key, xy)?;
                        let [x, y] = v[..] else {
                            return Err(Error::Config(format!("goal must be far-corner, layout or x,y; got {xy:?}")));
                        };
                        GoalSpec::Cell { x, y }
                    }
                }
            }
            "encoder" => t.encoder = parse(key, value)?,
            "latent_dim" => t.latent_dim = parse(key, value)?,
            "encoder_hidden" => t.encoder_hidden = parse_list(key, value)?,
            "projection_hidden" => t.projection_hidden = parse(key, value)?,
            "projection_output" => t.projection_output = parse(key, value)?,
            "k" => t.entropy.k = parse(key, value)?,
            "c" => t.entropy.c = parse(key, value)?,
            "variant" => {
                t.entropy.variant = match value {
                    "averaged" => EntropyVariant::Averaged,
                    "kth-only" => EntropyVariant::KthOnly,
                    _ => return Err(Error::Config(format!("unknown variant {value:?}"))),
                }
            }
            "exponent" => {
                t.entropy.exponent = match value {
                    "latent-dim" => ExponentMode::LatentDim,
                    "plain" => ExponentMode::Plain,
                    _ => return Err(Error::Config(format!("unknown exponent mode {value:?}"))),
                }
            }
            "backend" => t.entropy.backend = parse::<Backend>(key, value)?,
            "temperature" => {
                t.temperature = parse(key, value)?;
                f.temperature = t.temperature;
            }
            "learning_rate" => {
                t.learning_rate = parse(key, value)?;
                f.learning_rate = t.learning_rate;
            }
            "augment_sigma" => {
                t.augment.gaussian_sigma = parse(key, value)?;
                f.augment = t.augment;
            }
            "reward" => t.reward_source = parse(key, value)?,
            "reference" => t.reference = parse(key, value)?,
            "total_steps" => t.total_steps = parse(key, value)?,
            "gradient_steps" => t.gradient_steps = parse(key, value)?,
            "batch_size" => t.batch_size = parse(key, value)?,
            "min_buffer" => t.min_buffer = parse(key, value)?,
            "buffer_capacity" => t.buffer_capacity = parse(key, value)?,
            "epsilon_start" => t.epsilon_start = parse(key, value)?,
            "epsilon_end" => t.epsilon_end = parse(key, value)?,
            "epsilon_horizon" => t.epsilon_horizon = parse_opt_usize(key, value)?,
            "encoder_train_interval" => t.encoder_train_interval = parse(key, value)?,
            "alpha" => t.alpha = parse(key, value)?,
            "gamma" => t.gamma = parse(key, value)?,
            "count_beta" => t.count_beta = parse(key, value)?,
            "normalizer" => {
                t.normalizer = match value {
                    "cumulative" => MeanMode::Cumulative,
                    "ema" => MeanMode::Ema { decay: 0.99 },
                    _ => return Err(Error::Config(format!("unknown normalizer {value:?}"))),
                }
            }
            "ema_decay" => {
                let decay: f64 = parse(key, value)?;
                if let MeanMode::Ema { decay: d } = &mut t.normalizer {
                    *d = decay;
                } else {
                    return Err(Error::Config("ema_decay requires normalizer = ema (set it first)".into()));
                }
            }
            "epoch_length" => t.epoch_length = parse(key, value)?,
            "log_interval" => t.log_interval = parse(key, value)?,
            "finetune_episodes" => f.episodes = parse(key, value)?,
            "finetune_gradient_steps" => f.gradient_steps = parse(key, value)?,
            "finetune_batch_size" => f.batch_size = parse(key, value)?,
            "finetune_min_buffer" => f.min_buffer = parse(key, value)?,
            "finetune_buffer_capacity" => f.buffer_capacity = parse(key, value)?,
            "finetune_epsilon_start" => f.epsilon_start = parse(key, value)?,
            "finetune_epsilon_end" => f.epsilon_end = parse(key, value)?,
            "finetune_epsilon_horizon" => f.epsilon_horizon = parse_opt_usize(key, value)?,
            "finetune_alpha" => f.alpha = parse(key, value)?,
            "finetune_gamma" => f.gamma = parse(key, value)?,
            "reinit_table" => f.reinit_table = parse_bool(key, value)?,
            "freeze_encoder" => f.freeze_encoder = parse_bool(key, value)?,
            "reuse_buffer" => f.reuse_buffer = parse_bool(key, value)?,
            "success_window" => f.success_window = parse(key, value)?,
            "success_rate" => f.success_rate = parse(key, value)?,
            "methods" => self.methods = parse_list(key, value)?,
            "finetune" => self.run_finetune = parse_bool(key, value)?,
            "decay_threshold" => self.decay_threshold = parse(key, value)?,
            "coverage_target" => self.coverage_target = parse(key, value)?,
            "coverage_pass_fraction" => self.coverage_pass_fraction = parse(key, value)?,
            "parallel" => self.parallel = parse_bool(key, value)?,
            "bench_sizes" => self.bench_sizes = parse_list(key, value)?,
            "bench_dims" => self.bench_dims = parse_list(key, value)?,
            "bench_k" => self.bench_k = parse(key, value)?,
            _ => return Err(Error::Config(format!("unknown key `{key}`"))),
        }
        Ok(())
    }

    /// Every key with its current value, in a fixed order. Feeding these
    /// back through [`RunConfig::set`] reproduces the config.
    pub fn pairs(&self) -> Vec<(&'static str, String)> {
        let t = &self.train;
        let f = &self.finetune;
        let mut v: Vec<(&'static str, String)> = vec![("label", self.label.clone())];
        if let Some(out) = &self.out {
            v.push(("out", out.display().to_string()));
        }
        if let Some(seed) = self.seed {
            v.push(("seed", seed.to_string()));
        }
        v.push(("num_seeds", self.num_seeds.to_string()));
        v.push((
            "env",
            match self.env {
                EnvKind::OpenRoom => "open-room",
                EnvKind::FourRooms => "four-rooms",
                EnvKind::PointMass => "point-mass",
            }
            .into(),
        ));
        if let Some(layout) = &self.layout {
            v.push(("layout", layout.display().to_string()));
        }
        let variant = match t.entropy.variant {
            EntropyVariant::Averaged => "averaged",
            EntropyVariant::KthOnly => "kth-only",
        };
        let exponent = match t.entropy.exponent {
            ExponentMode::LatentDim => "latent-dim",
            ExponentMode::Plain => "plain",
        };
        let backend = match t.entropy.backend {
            Backend::BruteForce => "brute",
            Backend::KdTree => "kdtree",
            Backend::Auto => "auto",
        };
        let obs_mode = match self.obs_mode {
            ObsMode::OneHot => "one-hot",
            ObsMode::Coords => "coords",
            ObsMode::Occupancy => "occupancy",
        };
        let goal = match &self.goal {
            GoalSpec::FarCorner => "far-corner".to_string(),
            GoalSpec::Layout => "layout".to_string(),
            GoalSpec::Cell { x, y } => format!("{x},{y}"),
        };
        let encoder = match t.encoder {
            EncoderChoice::Learned => "learned",
            EncoderChoice::Identity => "identity",
            EncoderChoice::RandomProjection => "random-projection",
        };
        let reward = match t.reward_source {
            RewardSource::Apt => "apt",
            RewardSource::Count => "count",
            RewardSource::Extrinsic => "extrinsic",
            RewardSource::None => "none",
        };
        let reference = match t.reference {
            ReferenceSet::Batch => "batch",
            ReferenceSet::Buffer => "buffer",
        };
        v.extend([
            ("width", self.width.to_string()),
            ("height", self.height.to_string()),
            ("size", self.size.to_string()),
            ("episode_length", self.episode_length.to_string()),
            ("obs_mode", obs_mode.into()),
            ("point_mass_delta", self.point_mass_delta.to_string()),
            ("point_mass_bins", self.point_mass_bins.to_string()),
            ("goal", goal),
            ("encoder", encoder.into()),
            ("latent_dim", t.latent_dim.to_string()),
            ("encoder_hidden", join(&t.encoder_hidden)),
            ("projection_hidden", t.projection_hidden.to_string()),
            ("projection_output", t.projection_output.to_string()),
            ("k", t.entropy.k.to_string()),
            ("c", t.entropy.c.to_string()),
            ("variant", variant.into()),
            ("exponent", exponent.into()),
            ("backend", backend.into()),
            ("temperature", t.temperature.to_string()),
            ("learning_rate", t.learning_rate.to_string()),
            ("augment_sigma", t.augment.gaussian_sigma.to_string()),
            ("reward", reward.into()),
            ("reference", reference.into()),
            ("total_steps", t.total_steps.to_string()),
            ("gradient_steps", t.gradient_steps.to_string()),
            ("batch_size", t.batch_size.to_string()),
            ("min_buffer", t.min_buffer.to_string()),
            ("buffer_capacity", t.buffer_capacity.to_string()),
            ("epsilon_start", t.epsilon_start.to_string()),
            ("epsilon_end", t.epsilon_end.to_string()),
            ("epsilon_horizon", opt_usize(t.epsilon_horizon)),
            ("encoder_train_interval", t.encoder_train_interval.to_string()),
            ("alpha", t.alpha.to_string()),
            ("gamma", t.gamma.to_string()),
            ("count_beta", t.count_beta.to_string()),
        ]);
        match t.normalizer {
            MeanMode::Cumulative => v.push(("normalizer", "cumulative".into())),
            MeanMode::Ema { decay } => {
                v.push(("normalizer", "ema".into()));
                v.push(("ema_decay", decay.to_string()));
            }
        }
        v.extend([
            ("epoch_length", t.epoch_length.to_string()),
            ("log_interval", t.log_interval.to_string()),
            ("finetune_episodes", f.episodes.to_string()),
            ("finetune_gradient_steps", f.gradient_steps.to_string()),
            ("finetune_batch_size", f.batch_size.to_string()),
            ("finetune_min_buffer", f.min_buffer.to_string()),
            ("finetune_buffer_capacity", f.buffer_capacity.to_string()),
            ("finetune_epsilon_start", f.epsilon_start.to_string()),
            ("finetune_epsilon_end", f.epsilon_end.to_string()),
            ("finetune_epsilon_horizon", opt_usize(f.epsilon_horizon)),
            ("finetune_alpha", f.alpha.to_string()),
            ("finetune_gamma", f.gamma.to_string()),
            ("reinit_table", f.reinit_table.to_string()),
            ("freeze_encoder", f.freeze_encoder.to_string()),
            ("reuse_buffer", f.reuse_buffer.to_string()),
            ("success_window", f.success_window.to_string()),
            ("success_rate", f.success_rate.to_string()),
            ("methods", self.methods.join(",")),
            ("finetune", self.run_finetune.to_string()),
            ("decay_threshold", self.decay_threshold.to_string()),
            ("coverage_target", self.coverage_target.to_string()),
            ("coverage_pass_fraction", self.coverage_pass_fraction.to_string()),
            ("parallel", self.parallel.to_string()),
            ("bench_sizes", join(&self.bench_sizes)),
            ("bench_dims", join(&self.bench_dims)),
            ("bench_k", self.bench_k.to_string()),
        ]);
        v
    }

    /// Renders the config in the file format accepted by [`RunConfig::parse`].
    pub fn to_text(&self) -> String {
        self.pairs().into_iter().map(|(k, v)| format!("{k} = {v}\n")).collect()
    }

    /// Resolved config as a JSON object of strings.
    pub fn to_json(&self) -> serde_json::Value {
        let map = self
            .pairs()
            .into_iter()
            .map(|(k, v)| (k.to_string(), serde_json::Value::String(v)))
            .collect();
        serde_json::Value::Object(map)
    }

    pub fn execution(&self) -> Execution {
        if self.parallel {
            Execution::default()
        } else {
            Execution::Sequential
        }
    }

    /// Builds the reward-free environment and the fine-tuning task.
    pub fn environment(&self) -> Result<(Environment, TaskSpec)> {
        match self.env {
            EnvKind::PointMass => {
                let spec = PointMassSpec {
                    delta: self.point_mass_delta,
                    episode_length: self.episode_length,
                    bins: self.point_mass_bins,
                };
                let pm = PointMass::new(spec, None)?;
                let goal = match self.goal {
                    GoalSpec::FarCorner => pm.num_states() - 1,
                    GoalSpec::Cell { x, y } if x < spec.bins && y < spec.bins => y * spec.bins + x,
                    _ => return Err(Error::Config("point-mass goal must be far-corner or an in-range bin x,y".into())),
                };
                Ok((Environment::PointMass(pm), TaskSpec::reach(goal)))
            }
            EnvKind::OpenRoom | EnvKind::FourRooms => {
                let tag = if self.env == EnvKind::FourRooms {
                    LayoutTag::FourRooms
                } else {
                    LayoutTag::OpenRoom
                };
                let (spec, layout_goals) = match &self.layout {
                    Some(path) => {
                        let layout = load_layout(path, tag, self.episode_length)?;
                        (layout.spec, layout.goals)
                    }
                    None if tag == LayoutTag::FourRooms => (GridSpec::four_rooms(self.size, self.episode_length)?, vec![]),
                    None => {
                        let spec = GridSpec::open_room(self.width, self.height, self.episode_length);
                        spec.validate()?;
                        (spec, vec![])
                    }
                };
                let goals = match &self.goal {
                    GoalSpec::FarCorner => vec![far_corner(&spec)?],
                    GoalSpec::Layout if layout_goals.is_empty() => {
                        return Err(Error::Config("goal = layout but the layout marks no G cell".into()))
                    }
                    GoalSpec::Layout => layout_goals,
                    &GoalSpec::Cell { x, y } if x < spec.width && y < spec.height => vec![spec.cell(x, y)],
                    GoalSpec::Cell { x, y } => return Err(Error::Config(format!("goal ({x}, {y}) is outside the grid"))),
                };
                let task = TaskSpec {
                    goals,
                    terminate_on_goal: true,
                };
                let world = GridWorld::new(spec, self.obs_mode, None)?;
                world.clone().with_task(Some(task.clone()))?;
                Ok((Environment::Grid(world), task))
            }
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.num_seeds == 0 {
            return Err(Error::Config("num_seeds must be >= 1".into()));
        }
        if self.methods.is_empty() {
            return Err(Error::Config("methods must name at least one method".into()));
        }
        for m in &self.methods {
            crate::experiments::Method::from_name(m, self)?;
        }
        if !(0.0..=1.0).contains(&self.coverage_target) || !(0.0..=1.0).contains(&self.coverage_pass_fraction) {
            return Err(Error::Config("coverage_target and coverage_pass_fraction must lie in [0, 1]".into()));
        }
        if !(self.decay_threshold > 0.0) {
            return Err(Error::Config("decay_threshold must be > 0".into()));
        }
        if self.bench_k == 0 || self.bench_sizes.is_empty() || self.bench_dims.is_empty() {
            return Err(Error::Config("bench needs k >= 1 and non-empty sizes and dims".into()));
        }
        if self.bench_dims.contains(&0) || self.bench_sizes.iter().any(|&n| n <= self.bench_k) {
            return Err(Error::Config("bench sizes must exceed bench_k and dims must be >= 1".into()));
        }
        if let MeanMode::Ema { decay } = self.train.normalizer {
            if !(0.0..1.0).contains(&decay) {
                return Err(Error::Config("ema_decay must lie in [0, 1)".into()));
            }
        }
        self.finetune.validate()?;
        if self.train.reward_source == RewardSource::Extrinsic {
            return Err(Error::Config("reward = extrinsic is only meaningful for fine-tuning".into()));
        }
        let mut probe = self.train.clone();
        probe.total_steps = probe.total_steps.max(1);
        probe.validate()?;
        self.environment().map(|_| ())
    }

    /// The run's pretraining config with timing switched on or off.
    pub fn train_config(&self, record_timing: bool) -> TrainLoopConfig {
        TrainLoopConfig {
            record_timing,
            ..self.train.clone()
        }
    }

    pub fn finetune_config(&self, record_timing: bool) -> FinetuneConfig {
        FinetuneConfig {
            record_timing,
            ..self.finetune.clone()
        }
    }
}

/// Bottom-right cell when free, else the free cell farthest (in steps) from
/// the start cells.
pub fn far_corner(spec: &GridSpec) -> Result<usize> {
    let corner = spec.cell(spec.width - 1, spec.height - 1);
    if spec.is_free(corner) && spec.start != StartMode::Fixed(corner) {
        return Ok(corner);
    }
    let starts = spec.start_cells();
    let mut dist = vec![usize::MAX; spec.num_cells()];
    let mut queue = std::collections::VecDeque::new();
    for &s in &starts {
        dist[s] = 0;
        queue.push_back(s);
    }
    while let Some(c) = queue.pop_front() {
        for a in 0..crate::environments::GRID_ACTIONS.len() {
            let n = spec.move_cell(c, a);
            if dist[n] == usize::MAX {
                dist[n] = dist[c] + 1;
                queue.push_back(n);
            }
        }
    }
    (0..spec.num_cells())
        .filter(|&c| dist[c] != usize::MAX && dist[c] > 0)
        .max_by_key(|&c| (dist[c], c))
        .ok_or_else(|| Error::Config("grid has no cell other than the start to use as goal".into()))
}

/// Seed precedence: explicit flag, then config, then `APT_LAB_SEED`, then 0.
pub fn resolve_seed(flag: Option<u64>, config: Option<u64>, env_var: Option<&str>) -> Result<u64> {
    if let Some(s) = flag.or(config) {
        return Ok(s);
    }
    match env_var {
        Some(v) => v
            .trim()
            .parse()
            .map_err(|_| Error::Config(format!("APT_LAB_SEED must be a u64, got {v:?}"))),
        None => Ok(0),
    }
}
