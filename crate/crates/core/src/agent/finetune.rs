use std::time::Instant;

use super::buffer::{ReplayBuffer, Transition};
use super::counter::VisitCounter;
use super::pretrain::{build_encoder, obs_matrix, Coverage, PretrainedArtifacts, Streams, TrainLoopConfig, Window};
use super::qtable::{EpsilonSchedule, QTable};
use crate::entropy::RewardNormalizer;
use crate::environments::{Environment, TaskSpec};
use crate::error::{Error, Result};
use crate::experiments::MetricsRecord;
use crate::representation::{train_step, AugmentConfig, Encoder, OptimizerState};

/// Settings for the task phase. The ε schedule is independent of
/// pre-training's.
#[derive(Debug, Clone, PartialEq)]
pub struct FinetuneConfig {
    pub episodes: usize,
    pub gradient_steps: usize,
    pub batch_size: usize,
    pub min_buffer: usize,
    pub buffer_capacity: usize,
    pub epsilon_start: f64,
    pub epsilon_end: f64,
    /// Steps of linear ε decay; `None` means 20% of the step budget.
    pub epsilon_horizon: Option<usize>,
    pub alpha: f64,
    pub gamma: f64,
    /// Zero the Q-table before training (random-head ablation).
    pub reinit_table: bool,
    pub freeze_encoder: bool,
    /// Keep the pre-training transitions, relabelled with the task reward.
    pub reuse_buffer: bool,
    pub encoder_train_interval: usize,
    pub temperature: f64,
    pub learning_rate: f64,
    pub augment: AugmentConfig,
    /// Episodes in the trailing window used for the success criterion.
    pub success_window: usize,
    pub success_rate: f64,
    pub record_timing: bool,
}

impl Default for FinetuneConfig {
    fn default() -> Self {
        FinetuneConfig {
            episodes: 300,
            gradient_steps: 2,
            batch_size: 64,
            min_buffer: 64,
            buffer_capacity: 100_000,
            epsilon_start: 0.2,
            epsilon_end: 0.05,
            epsilon_horizon: None,
            alpha: 0.1,
            gamma: 0.99,
            reinit_table: true,
            freeze_encoder: false,
            reuse_buffer: true,
            encoder_train_interval: 100,
            temperature: 0.1,
            learning_rate: 1e-3,
            augment: AugmentConfig::default(),
            success_window: 20,
            success_rate: 0.8,
            record_timing: true,
        }
    }
}

impl FinetuneConfig {
    pub fn epsilon_schedule(&self, episode_length: usize) -> EpsilonSchedule {
        EpsilonSchedule {
            start: self.epsilon_start,
            end: self.epsilon_end,
            horizon: self
                .epsilon_horizon
                .unwrap_or(self.episodes.saturating_mul(episode_length) / 5),
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, v) in [
            ("gradient_steps", self.gradient_steps),
            ("batch_size", self.batch_size),
            ("min_buffer", self.min_buffer),
            ("buffer_capacity", self.buffer_capacity),
            ("encoder_train_interval", self.encoder_train_interval),
            ("success_window", self.success_window),
        ] {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be >= 1")));
            }
        }
        if self.min_buffer > self.buffer_capacity {
            return Err(Error::Config("min_buffer exceeds buffer_capacity".into()));
        }
        if !(0.0..=1.0).contains(&self.alpha) || !(0.0..=1.0).contains(&self.gamma) {
            return Err(Error::Config("alpha and gamma must lie in [0, 1]".into()));
        }
        if !(0.0..=1.0).contains(&self.success_rate) {
            return Err(Error::Config("success_rate must lie in [0, 1]".into()));
        }
        if !(self.temperature > 0.0) || self.learning_rate < 0.0 {
            return Err(Error::Config("temperature must be > 0 and learning_rate >= 0".into()));
        }
        self.epsilon_schedule(1).validate()
    }
}

#[derive(Debug, Clone)]
pub struct FinetuneResult {
    pub episode_returns: Vec<f64>,
    pub successes: Vec<bool>,
    /// One row per episode.
    pub metrics: Vec<MetricsRecord>,
    pub qtable: QTable,
    pub encoder: Encoder,
    /// First episode (1-based) closing a window that meets the success rate.
    pub success_episode: Option<usize>,
}

/// First 1-based episode `e ≥ window` whose trailing `window` episodes succeed
/// at least `rate` of the time.
pub fn success_episode(successes: &[bool], window: usize, rate: f64) -> Option<usize> {
    if window == 0 || successes.len() < window {
        return None;
    }
    let need = (rate * window as f64 - 1e-9).ceil() as usize;
    let mut hits = successes[..window].iter().filter(|s| **s).count();
    if hits >= need {
        return Some(window);
    }
    for e in window..successes.len() {
        hits += successes[e] as usize;
        hits -= successes[e - window] as usize;
        if hits >= need {
            return Some(e + 1);
        }
    }
    None
}

impl PretrainedArtifacts {
    /// Untrained starting point for the from-scratch baseline: zero Q-table,
    /// freshly initialized encoder, empty buffer.
    pub fn scratch(env: &Environment, config: &TrainLoopConfig, seed: u64) -> Result<Self> {
        let mut rng = Streams::new(seed);
        let (encoder, projection) = build_encoder(config, env.obs_dim(), &mut rng.init)?;
        Ok(PretrainedArtifacts {
            qtable: QTable::new(env.num_states(), env.num_actions(), config.alpha, config.gamma)?,
            encoder,
            projection,
            buffer: ReplayBuffer::new(config.buffer_capacity)?,
            metrics: Vec::new(),
            epochs: Vec::new(),
            visited: vec![false; env.num_states()],
            counter: VisitCounter::new(env.num_states(), config.count_beta),
            normalizer: RewardNormalizer::default(),
        })
    }
}

/// Q-learning on the task's extrinsic reward, starting from `artifacts`.
///
/// Extrinsic rewards are used unnormalized. Unless frozen, a learned encoder
/// keeps training on sampled next-observations.
pub fn finetune(
    env: &Environment,
    artifacts: PretrainedArtifacts,
    task: &TaskSpec,
    config: &FinetuneConfig,
    seed: u64,
) -> Result<FinetuneResult> {
    config.validate()?;
    let env = env.with_task(Some(task.clone()))?;
    if artifacts.qtable.num_states() != env.num_states() || artifacts.qtable.num_actions() != env.num_actions() {
        return Err(Error::Config(format!(
            "Q-table is {}×{} but the environment has {} states and {} actions",
            artifacts.qtable.num_states(),
            artifacts.qtable.num_actions(),
            env.num_states(),
            env.num_actions()
        )));
    }
    if artifacts.encoder.input_dim() != env.obs_dim() {
        return Err(Error::DimensionMismatch {
            expected: env.obs_dim(),
            got: artifacts.encoder.input_dim(),
        });
    }

    let mut rng = Streams::new(seed.wrapping_add(0x5eed));
    let PretrainedArtifacts {
        mut qtable,
        mut encoder,
        mut projection,
        buffer: old_buffer,
        mut visited,
        ..
    } = artifacts;
    qtable.alpha = config.alpha;
    qtable.gamma = config.gamma;
    if config.reinit_table {
        qtable.reset_values();
    }

    let mut buffer = ReplayBuffer::new(config.buffer_capacity)?;
    if config.reuse_buffer {
        for mut t in old_buffer.iter().cloned() {
            t.extrinsic_reward = Some(task.reward(t.next_state_id));
            t.done = task.terminates(t.next_state_id);
            buffer.push(t);
        }
    }

    let mut optimizer = match (&encoder, &projection) {
        (Encoder::Learned(e), Some(p)) if !config.freeze_encoder => Some(OptimizerState::new(e, p, config.learning_rate)),
        _ => None,
    };

    let schedule = config.epsilon_schedule(env.episode_length());
    let coverage = Coverage::new(&env);
    let start = Instant::now();
    let mut window = Window::default();
    let mut episode_returns = Vec::with_capacity(config.episodes);
    let mut successes = Vec::with_capacity(config.episodes);
    let mut metrics = Vec::with_capacity(config.episodes);
    let mut t = 0usize;
    let mut updates = 0u64;

    for _ in 0..config.episodes {
        let (mut state, mut obs) = env.reset(&mut rng.env);
        let mut sid = env.state_id(&state);
        visited[sid] = true;
        let mut ret = 0.0;
        let mut success = false;
        loop {
            let action = qtable.select_action(sid, schedule.value(t), &mut rng.policy);
            let out = env.step(&state, action)?;
            t += 1;
            let next_sid = env.state_id(&out.state);
            visited[next_sid] = true;
            let reward = out.reward.expect("task attached");
            ret += reward;
            success |= task.goals.contains(&next_sid);
            buffer.push(Transition {
                obs: std::mem::take(&mut obs),
                action,
                extrinsic_reward: Some(reward),
                next_obs: out.obs.clone(),
                done: out.terminated,
                state_id: sid,
                next_state_id: next_sid,
            });

            if buffer.len() >= config.min_buffer {
                for _ in 0..config.gradient_steps {
                    let idx = buffer.sample_indices(config.batch_size, config.min_buffer, &mut rng.sample)?;
                    let batch: Vec<&Transition> = idx.iter().map(|&i| buffer.get(i).expect("sampled index")).collect();
                    if let (Some(opt), Encoder::Learned(enc), Some(proj)) =
                        (optimizer.as_mut(), &mut encoder, projection.as_mut())
                    {
                        if updates % config.encoder_train_interval as u64 == 0 && batch.len() >= 2 {
                            let loss = train_step(
                                enc,
                                proj,
                                opt,
                                &obs_matrix(&batch)?,
                                config.temperature,
                                &config.augment,
                                &mut rng.augment,
                            )?;
                            window.add_loss(loss);
                        }
                    }
                    let rewards: Vec<f64> = batch.iter().map(|t| t.extrinsic_reward.unwrap_or(0.0)).collect();
                    qtable.update(&batch, &rewards)?;
                    updates += 1;
                }
            }

            if out.done() {
                break;
            }
            state = out.state;
            obs = out.obs;
            sid = next_sid;
        }
        episode_returns.push(ret);
        successes.push(success);
        window.add_return(ret);
        let (_, _, loss, episode_return) = window.take(false);
        metrics.push(MetricsRecord {
            env_step: t as u64,
            epoch: (episode_returns.len() - 1) as u64,
            mean_raw_intrinsic_reward: None,
            mean_normalized_reward: None,
            coverage_fraction: coverage.fraction(&visited),
            episode_return,
            contrastive_loss: loss,
            unique_states_visited: visited.iter().filter(|v| **v).count() as u64,
            wall_clock_ms: if config.record_timing {
                start.elapsed().as_millis() as u64
            } else {
                0
            },
        });
    }

    Ok(FinetuneResult {
        success_episode: success_episode(&successes, config.success_window, config.success_rate),
        episode_returns,
        successes,
        metrics,
        qtable,
        encoder,
    })
}
