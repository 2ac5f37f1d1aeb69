use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::buffer::{ReplayBuffer, Transition};
use super::counter::VisitCounter;
use super::latents::ObservationTable;
use super::qtable::{EpsilonSchedule, QTable};
use crate::entropy::{intrinsic_rewards, intrinsic_rewards_weighted, EntropyConfig, MeanMode, RewardNormalizer};
use crate::environments::Environment;
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::experiments::MetricsRecord;
use crate::representation::{
    train_step, AugmentConfig, Encoder, EncoderArch, EncoderParams, Matrix, OptimizerState, ProjectionArch,
    ProjectionParams,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum RewardSource {
    /// k-NN particle reward in latent space.
    Apt,
    /// `β / √c(s′)` visitation bonus.
    Count,
    /// Task reward from the environment (fine-tuning only).
    Extrinsic,
    /// No learning signal; the policy is a uniform random walk.
    None,
}

impl std::str::FromStr for RewardSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "apt" => Ok(RewardSource::Apt),
            "count" => Ok(RewardSource::Count),
            "extrinsic" => Ok(RewardSource::Extrinsic),
            "none" | "random" => Ok(RewardSource::None),
            other => Err(Error::Config(format!("unknown reward source `{other}`"))),
        }
    }
}

/// Which particles serve as neighbors when computing the APT reward.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "lowercase")]
pub enum ReferenceSet {
    /// The sampled mini-batch itself.
    Batch,
    /// Every next-observation currently in the replay buffer.
    Buffer,
}

impl std::str::FromStr for ReferenceSet {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "batch" => Ok(ReferenceSet::Batch),
            "buffer" => Ok(ReferenceSet::Buffer),
            other => Err(Error::Config(format!("unknown reference set `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum EncoderChoice {
    Learned,
    Identity,
    RandomProjection,
}

impl std::str::FromStr for EncoderChoice {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "learned" | "contrastive" => Ok(EncoderChoice::Learned),
            "identity" => Ok(EncoderChoice::Identity),
            "random-projection" => Ok(EncoderChoice::RandomProjection),
            other => Err(Error::Config(format!("unknown encoder `{other}`"))),
        }
    }
}

/// Everything the reward-free training loop needs.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainLoopConfig {
    pub total_steps: usize,
    pub gradient_steps: usize,
    pub batch_size: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Steps of linear ε decay; `None` means 20% of `total_steps`.
    pub epsilon_horizon: Option<usize>,
    pub min_buffer: usize,
    pub buffer_capacity: usize,
    /// Encoder is trained on every n-th update.
    pub encoder_train_interval: usize,
    pub reward_source: RewardSource,
    pub reference: ReferenceSet,
    pub encoder: EncoderChoice,
    pub entropy: EntropyConfig,
    pub normalizer: MeanMode,
    pub alpha: f64,
    pub gamma: f64,
    pub count_beta: f64,
    pub temperature: f64,
    pub learning_rate: f64,
    pub augment: AugmentConfig,
    pub encoder_hidden: Vec<usize>,
    pub latent_dim: usize,
    pub projection_hidden: usize,
    pub projection_output: usize,
    pub epoch_length: usize,
    pub log_interval: usize,
    pub record_timing: bool,
}

impl Default for TrainLoopConfig {
    fn default() -> Self {
        TrainLoopConfig {
            total_steps: 100_000,
            gradient_steps: 2,
            batch_size: 64,
            epsilon_start: 1.0,
            epsilon_end: 0.05,
            epsilon_horizon: None,
            min_buffer: 1_000,
            buffer_capacity: 100_000,
            encoder_train_interval: 100,
            reward_source: RewardSource::Apt,
            reference: ReferenceSet::Batch,
            encoder: EncoderChoice::Learned,
            entropy: EntropyConfig {
                exec: Execution::Sequential,
                ..EntropyConfig::default()
            },
            normalizer: MeanMode::Cumulative,
            alpha: 0.1,
            gamma: 0.99,
            count_beta: 0.1,
            temperature: 0.1,
            learning_rate: 1e-3,
            augment: AugmentConfig::default(),
            encoder_hidden: vec![64, 64],
            latent_dim: 5,
            projection_hidden: 128,
            projection_output: 64,
            epoch_length: 10_000,
            log_interval: 1_000,
            record_timing: true,
        }
    }
}

impl TrainLoopConfig {
    pub fn epsilon_schedule(&self) -> EpsilonSchedule {
        EpsilonSchedule {
            start: self.epsilon_start,
            end: self.epsilon_end,
            horizon: self.epsilon_horizon.unwrap_or(self.total_steps / 5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("gradient_steps", self.gradient_steps),
            ("batch_size", self.batch_size),
            ("min_buffer", self.min_buffer),
            ("buffer_capacity", self.buffer_capacity),
            ("encoder_train_interval", self.encoder_train_interval),
            ("epoch_length", self.epoch_length),
            ("log_interval", self.log_interval),
            ("latent_dim", self.latent_dim),
            ("projection_hidden", self.projection_hidden),
            ("projection_output", self.projection_output),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.encoder_hidden.contains(&0) {
            return Err(Error::Config("encoder hidden widths must be >= 1".into()));
        }
        if self.min_buffer > self.buffer_capacity {
            return Err(Error::Config(format!(
                "min_buffer {} exceeds buffer_capacity {}",
                self.min_buffer, self.buffer_capacity
            )));
        }
        self.epsilon_schedule().validate()?;
        self.entropy.validate()?;
        if self.reward_source == RewardSource::Extrinsic {
            return Err(Error::Config("pre-training is reward-free; use apt, count or none".into()));
        }
        if self.reward_source == RewardSource::Apt
            && self.reference == ReferenceSet::Batch
            && self.batch_size <= self.entropy.k
        {
            return Err(Error::Config(format!(
                "batch_size {} must exceed k = {}",
                self.batch_size, self.entropy.k
            )));
        }
        if !(self.temperature > 0.0) {
            return Err(Error::Config("temperature must be > 0".into()));
        }
        if self.count_beta < 0.0 || self.learning_rate < 0.0 {
            return Err(Error::Config("count_beta and learning_rate must be >= 0".into()));
        }
        if self.encoder == EncoderChoice::Learned && self.reward_source == RewardSource::Apt && self.batch_size < 2 {
            return Err(Error::Config("contrastive training needs batch_size >= 2".into()));
        }
        Ok(())
    }
}

/// Raw and normalized reward totals for one epoch of updates.
#[derive(Debug, Clone, Copy, PartialEq, Default, serde::Serialize)]
pub struct EpochStats {
    pub epoch: u64,
    pub rewards: u64,
    pub raw_sum: f64,
    pub normalized_sum: f64,
}

impl EpochStats {
    pub fn mean_raw(&self) -> Option<f64> {
        (self.rewards > 0).then(|| self.raw_sum / self.rewards as f64)
    }
}

/// State handed from pre-training to fine-tuning.
#[derive(Debug, Clone)]
pub struct PretrainedArtifacts {
    pub qtable: QTable,
    pub encoder: Encoder,
    pub projection: Option<ProjectionParams>,
    pub buffer: ReplayBuffer<Transition>,
    pub metrics: Vec<MetricsRecord>,
    pub epochs: Vec<EpochStats>,
    /// Indexed by state id.
    pub visited: Vec<bool>,
    pub counter: VisitCounter,
    pub normalizer: RewardNormalizer,
}

impl PretrainedArtifacts {
    pub fn unique_states_visited(&self) -> usize {
        self.visited.iter().filter(|v| **v).count()
    }

    /// Last logged coverage, if the environment is finite.
    pub fn final_coverage(&self) -> Option<f64> {
        self.metrics.last().and_then(|m| m.coverage_fraction)
    }
}

/// Independent random streams derived from one seed.
pub(crate) struct Streams {
    pub env: ChaCha8Rng,
    pub policy: ChaCha8Rng,
    pub sample: ChaCha8Rng,
    pub augment: ChaCha8Rng,
    pub init: ChaCha8Rng,
}

impl Streams {
    pub(crate) fn new(seed: u64) -> Self {
        let stream = |s: u64| {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(s);
            rng
        };
        Streams {
            env: stream(1),
            policy: stream(2),
            sample: stream(3),
            augment: stream(4),
            init: stream(5),
        }
    }
}

pub(crate) struct Coverage {
    reachable: Option<Vec<bool>>,
    total: usize,
}

impl Coverage {
    pub(crate) fn new(env: &Environment) -> Self {
        match env.enumerate_states() {
            Ok(states) => {
                let mut mask = vec![false; env.num_states()];
                for &s in &states {
                    mask[s] = true;
                }
                Coverage {
                    reachable: Some(mask),
                    total: states.len(),
                }
            }
            Err(_) => Coverage {
                reachable: None,
                total: 0,
            },
        }
    }

    pub(crate) fn fraction(&self, visited: &[bool]) -> Option<f64> {
        let mask = self.reachable.as_ref()?;
        let hit = visited.iter().zip(mask).filter(|(v, m)| **v && **m).count();
        Some(hit as f64 / self.total as f64)
    }
}

/// Running means between two metric rows.
#[derive(Default)]
pub(crate) struct Window {
    raw: f64,
    norm: f64,
    rewards: u64,
    loss: f64,
    losses: u64,
    returns: f64,
    episodes: u64,
}

impl Window {
    pub(crate) fn add_rewards(&mut self, raw: &[f64], norm: &[f64]) {
        self.raw += raw.iter().sum::<f64>();
        self.norm += norm.iter().sum::<f64>();
        self.rewards += raw.len() as u64;
    }

    pub(crate) fn add_loss(&mut self, loss: f64) {
        self.loss += loss;
        self.losses += 1;
    }

    pub(crate) fn add_return(&mut self, ret: f64) {
        self.returns += ret;
        self.episodes += 1;
    }

    pub(crate) fn take(&mut self, intrinsic: bool) -> (Option<f64>, Option<f64>, Option<f64>, Option<f64>) {
        let w = std::mem::take(self);
        let mean = |s: f64, n: u64| (n > 0).then(|| s / n as f64);
        (
            if intrinsic { mean(w.raw, w.rewards) } else { None },
            if intrinsic { mean(w.norm, w.rewards) } else { None },
            mean(w.loss, w.losses),
            mean(w.returns, w.episodes),
        )
    }
}

pub(crate) fn build_encoder(
    config: &TrainLoopConfig,
    obs_dim: usize,
    rng: &mut ChaCha8Rng,
) -> Result<(Encoder, Option<ProjectionParams>)> {
    Ok(match config.encoder {
        EncoderChoice::Identity => (Encoder::Identity { dim: obs_dim }, None),
        EncoderChoice::RandomProjection => (Encoder::random_projection(obs_dim, config.latent_dim, rng)?, None),
        EncoderChoice::Learned => {
            let arch = EncoderArch {
                input_dim: obs_dim,
                hidden: config.encoder_hidden.clone(),
                latent_dim: config.latent_dim,
            };
            let enc = EncoderParams::init(arch, rng)?;
            let proj = ProjectionParams::init(
                ProjectionArch {
                    input_dim: config.latent_dim,
                    hidden: config.projection_hidden,
                    output: config.projection_output,
                },
                rng,
            )?;
            (Encoder::Learned(enc), Some(proj))
        }
    })
}

pub(crate) fn obs_matrix(batch: &[&Transition]) -> Result<Matrix> {
    let rows: Vec<&[f64]> = batch.iter().map(|t| t.next_obs.as_slice()).collect();
    Matrix::from_rows(&rows)
}

/// Reward-free pre-training.
///
/// Acts ε-greedily on the Q-table and stores reward-free transitions. Once the
/// buffer holds `min_buffer` items, every environment step runs
/// `gradient_steps` updates: sample a batch, train the encoder on its
/// next-observations (every `encoder_train_interval` updates), score the batch
/// with the configured intrinsic reward, normalize, and apply Q-learning.
/// Intrinsic rewards are recomputed each time a transition is sampled.
pub fn pretrain(env: &Environment, config: &TrainLoopConfig, seed: u64) -> Result<PretrainedArtifacts> {
    config.validate()?;
    let env = env.with_task(None)?;
    let mut rng = Streams::new(seed);

    let (mut encoder, mut projection) = build_encoder(config, env.obs_dim(), &mut rng.init)?;
    let mut optimizer = match (&encoder, &projection) {
        (Encoder::Learned(e), Some(p)) => Some(OptimizerState::new(e, p, config.learning_rate)),
        _ => None,
    };
    let train_encoder = config.reward_source == RewardSource::Apt && optimizer.is_some();

    let mut qtable = QTable::new(env.num_states(), env.num_actions(), config.alpha, config.gamma)?;
    let mut buffer = ReplayBuffer::new(config.buffer_capacity)?;
    let mut table = ObservationTable::default();
    let mut counter = VisitCounter::new(env.num_states(), config.count_beta);
    let mut normalizer = RewardNormalizer::new(config.normalizer, 1e-8);
    let coverage = Coverage::new(&env);
    let mut visited = vec![false; env.num_states()];
    let mut epochs: Vec<EpochStats> = Vec::new();
    let mut metrics = Vec::new();
    let mut window = Window::default();
    let schedule = config.epsilon_schedule();
    let entropy = config.entropy;
    let start = Instant::now();

    let (mut state, mut obs) = env.reset(&mut rng.env);
    let mut sid = env.state_id(&state);
    visited[sid] = true;
    let mut updates: u64 = 0;

    for t in 0..config.total_steps {
        let epsilon = match config.reward_source {
            RewardSource::None => 1.0,
            _ => schedule.value(t),
        };
        let action = qtable.select_action(sid, epsilon, &mut rng.policy);
        let out = env.step(&state, action)?;
        let next_sid = env.state_id(&out.state);
        visited[next_sid] = true;
        counter.count_bonus(next_sid);

        let transition = Transition {
            obs: std::mem::take(&mut obs),
            action,
            extrinsic_reward: None,
            next_obs: out.obs.clone(),
            done: out.terminated,
            state_id: sid,
            next_state_id: next_sid,
        };
        table.insert(&transition.next_obs);
        if let Some(old) = buffer.push(transition) {
            table.remove(&old.next_obs);
        }
        if out.done() {
            let (s, o) = env.reset(&mut rng.env);
            state = s;
            obs = o;
            sid = env.state_id(&state);
            visited[sid] = true;
        } else {
            state = out.state;
            obs = out.obs;
            sid = next_sid;
        }

        let epoch = (t / config.epoch_length) as u64;
        if config.reward_source != RewardSource::None && buffer.len() >= config.min_buffer {
            for _ in 0..config.gradient_steps {
                let idx = buffer.sample_indices(config.batch_size, config.min_buffer, &mut rng.sample)?;
                let batch: Vec<&Transition> = idx.iter().map(|&i| buffer.get(i).expect("sampled index")).collect();

                if train_encoder && updates % config.encoder_train_interval as u64 == 0 {
                    let (Encoder::Learned(enc), Some(proj), Some(opt)) =
                        (&mut encoder, projection.as_mut(), optimizer.as_mut())
                    else {
                        unreachable!("learned encoder has a projection and optimizer");
                    };
                    let loss = train_step(
                        enc,
                        proj,
                        opt,
                        &obs_matrix(&batch)?,
                        config.temperature,
                        &config.augment,
                        &mut rng.augment,
                    )?;
                    table.invalidate();
                    window.add_loss(loss);
                }

                let raw = match config.reward_source {
                    RewardSource::Apt => apt_rewards(&batch, &mut table, &encoder, config.reference, &entropy)?,
                    RewardSource::Count => batch.iter().map(|t| counter.bonus(t.next_state_id)).collect(),
                    _ => unreachable!("validated reward source"),
                };
                let norm = normalizer.normalize(&raw);
                qtable.update(&batch, &norm)?;

                if epochs.last().is_none_or(|e| e.epoch != epoch) {
                    epochs.push(EpochStats {
                        epoch,
                        ..EpochStats::default()
                    });
                }
                let stats = epochs.last_mut().expect("just pushed");
                stats.rewards += raw.len() as u64;
                stats.raw_sum += raw.iter().sum::<f64>();
                stats.normalized_sum += norm.iter().sum::<f64>();
                window.add_rewards(&raw, &norm);
                updates += 1;
            }
        }

        let env_step = t + 1;
        if env_step % config.log_interval == 0 || env_step == config.total_steps {
            let (raw, norm, loss, _) = window.take(config.reward_source != RewardSource::None);
            metrics.push(MetricsRecord {
                env_step: env_step as u64,
                epoch,
                mean_raw_intrinsic_reward: raw,
                mean_normalized_reward: norm,
                coverage_fraction: coverage.fraction(&visited),
                episode_return: None,
                contrastive_loss: loss,
                unique_states_visited: visited.iter().filter(|v| **v).count() as u64,
                wall_clock_ms: if config.record_timing {
                    start.elapsed().as_millis() as u64
                } else {
                    0
                },
            });
        }
    }

    Ok(PretrainedArtifacts {
        qtable,
        encoder,
        projection,
        buffer,
        metrics,
        epochs,
        visited,
        counter,
        normalizer,
    })
}

fn apt_rewards(
    batch: &[&Transition],
    table: &mut ObservationTable,
    encoder: &Encoder,
    reference: ReferenceSet,
    entropy: &EntropyConfig,
) -> Result<Vec<f64>> {
    let groups: Vec<usize> = batch
        .iter()
        .map(|t| table.group_of(&t.next_obs).expect("buffered observation is interned"))
        .collect();
    match reference {
        ReferenceSet::Batch => {
            let latents = table.latents(&groups, encoder)?;
            intrinsic_rewards(&latents, entropy)
        }
        ReferenceSet::Buffer => {
            let (compact, reference, mult) = table.multiset(encoder)?;
            let query_groups: Vec<usize> = groups.iter().map(|&g| compact[g].expect("live group")).collect();
            let mut coords = Vec::with_capacity(query_groups.len() * reference.dim());
            for &g in &query_groups {
                coords.extend_from_slice(reference.point(g));
            }
            let queries = crate::geometry::PointSet::new(reference.dim(), coords)?;
            intrinsic_rewards_weighted(&queries, &query_groups, &reference, &mult, entropy)
        }
    }
}
