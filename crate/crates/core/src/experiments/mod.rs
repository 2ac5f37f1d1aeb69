//! Coverage and decay measurements, method comparisons, k-NN benchmarks and
//! the CSV/JSON they emit.

mod config;
mod metrics;

use std::collections::BTreeSet;
use std::fmt::Write as _;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub use config::{far_corner, resolve_seed, EnvKind, GoalSpec, RunConfig};
pub use metrics::{fmt_f64, fmt_opt, metrics_csv, write_text, MetricsRecord, METRICS_HEADER};

use crate::agent::{
    finetune, pretrain, EpochStats, FinetuneConfig, PretrainedArtifacts, RewardSource, TrainLoopConfig,
};
use crate::environments::{Environment, TaskSpec};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geometry::{Backend, PointSet, SpatialIndex};

/// Fraction of reachable states present in `visited`.
pub fn coverage<I: IntoIterator<Item = usize>>(visited: I, env: &Environment) -> Result<f64> {
    let reachable: BTreeSet<usize> = env.enumerate_states()?.into_iter().collect();
    let hit: BTreeSet<usize> = visited.into_iter().filter(|s| reachable.contains(s)).collect();
    Ok(hit.len() as f64 / reachable.len() as f64)
}

/// First and last epochs that carried rewards, and `last / first` of their
/// mean raw reward.
pub fn decay_ratio(epochs: &[EpochStats]) -> Option<(f64, f64, f64)> {
    let first = epochs.iter().find_map(EpochStats::mean_raw)?;
    let last = epochs.iter().rev().find_map(EpochStats::mean_raw)?;
    Some((first, last, last / first))
}

#[derive(Debug, Clone)]
pub struct DecayReport {
    pub epochs: Vec<EpochStats>,
    pub first_mean: f64,
    pub last_mean: f64,
    pub ratio: f64,
    pub threshold: f64,
    pub passed: bool,
    pub metrics: Vec<MetricsRecord>,
}

pub const DECAY_HEADER: &str = "epoch,rewards,mean_raw_intrinsic_reward,mean_normalized_reward";

impl DecayReport {
    pub fn trace_csv(&self) -> String {
        let mut s = format!("{DECAY_HEADER}\n");
        for e in &self.epochs {
            let _ = writeln!(
                s,
                "{},{},{},{}",
                e.epoch,
                e.rewards,
                fmt_f64(e.raw_sum / e.rewards as f64),
                fmt_f64(e.normalized_sum / e.rewards as f64)
            );
        }
        s
    }
}

/// Runs APT pre-training and compares the mean raw reward of the last epoch
/// against the first. Passes iff `last / first < threshold`.
pub fn reward_decay_experiment(
    env: &Environment,
    config: &TrainLoopConfig,
    seed: u64,
    threshold: f64,
) -> Result<DecayReport> {
    env.enumerate_states()?;
    if config.reward_source != RewardSource::Apt {
        return Err(Error::Config("the decay experiment needs reward = apt".into()));
    }
    let artifacts = pretrain(env, config, seed)?;
    let (first_mean, last_mean, ratio) = decay_ratio(&artifacts.epochs)
        .ok_or_else(|| Error::Config("run produced no reward epochs; increase total_steps".into()))?;
    Ok(DecayReport {
        passed: ratio < threshold,
        epochs: artifacts.epochs,
        first_mean,
        last_mean,
        ratio,
        threshold,
        metrics: artifacts.metrics,
    })
}

/// A named way of producing the starting point for fine-tuning.
#[derive(Debug, Clone, PartialEq)]
pub struct Method {
    pub name: String,
    /// `None` for the untrained baseline.
    pub pretrain: Option<TrainLoopConfig>,
}

impl Method {
    /// `apt`, `count`, `none` (random walk) or `scratch` (no pre-training).
    pub fn from_name(name: &str, config: &RunConfig) -> Result<Method> {
        let source = match name {
            "scratch" => {
                return Ok(Method {
                    name: name.into(),
                    pretrain: None,
                })
            }
            "apt" => RewardSource::Apt,
            "count" => RewardSource::Count,
            "none" | "random" => RewardSource::None,
            other => return Err(Error::Config(format!("unknown method `{other}`"))),
        };
        Ok(Method {
            name: name.into(),
            pretrain: Some(TrainLoopConfig {
                reward_source: source,
                ..config.train.clone()
            }),
        })
    }
}

/// One `(method, seed)` result.
#[derive(Debug, Clone, PartialEq)]
pub struct RunRow {
    pub method: String,
    pub seed: u64,
    pub final_coverage: Option<f64>,
    pub unique_states_visited: usize,
    pub decay_ratio: Option<f64>,
    pub success_episode: Option<usize>,
}

#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub row: RunRow,
    pub pretrain_metrics: Vec<MetricsRecord>,
    pub finetune_metrics: Option<Vec<MetricsRecord>>,
}

/// Per-method mean and median over seeds; `None` fields are skipped.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Aggregate {
    pub method: String,
    pub runs: usize,
    pub coverage_mean: Option<f64>,
    pub coverage_median: Option<f64>,
    pub decay_ratio_mean: Option<f64>,
    pub decay_ratio_median: Option<f64>,
    pub success_episode_mean: Option<f64>,
    pub success_episode_median: Option<f64>,
    /// Runs that reached the success criterion.
    pub solved: usize,
}

#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

#[derive(Debug, Clone)]
pub struct ComparisonSummary {
    pub seeds: Vec<u64>,
    pub runs: Vec<RunOutcome>,
    pub aggregates: Vec<Aggregate>,
}

pub const RUNS_HEADER: &str = "method,seed,final_coverage,unique_states_visited,decay_ratio,success_episode";
pub const AGGREGATE_HEADER: &str = "method,runs,coverage_mean,coverage_median,decay_ratio_mean,decay_ratio_median,\
success_episode_mean,success_episode_median,solved";

pub fn mean(values: &[f64]) -> Option<f64> {
    (!values.is_empty()).then(|| values.iter().sum::<f64>() / values.len() as f64)
}

pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let m = v.len() / 2;
    Some(if v.len() % 2 == 1 { v[m] } else { (v[m - 1] + v[m]) / 2.0 })
}

/// Aggregates for each method, in order of first appearance.
pub fn aggregate(rows: &[RunRow]) -> Vec<Aggregate> {
    let mut names: Vec<&str> = Vec::new();
    for r in rows {
        if !names.contains(&r.method.as_str()) {
            names.push(&r.method);
        }
    }
    names
        .into_iter()
        .map(|name| {
            let mine: Vec<&RunRow> = rows.iter().filter(|r| r.method == name).collect();
            let cov: Vec<f64> = mine.iter().filter_map(|r| r.final_coverage).collect();
            let dec: Vec<f64> = mine.iter().filter_map(|r| r.decay_ratio).collect();
            let suc: Vec<f64> = mine.iter().filter_map(|r| r.success_episode.map(|e| e as f64)).collect();
            Aggregate {
                method: name.to_string(),
                runs: mine.len(),
                coverage_mean: mean(&cov),
                coverage_median: median(&cov),
                decay_ratio_mean: mean(&dec),
                decay_ratio_median: median(&dec),
                success_episode_mean: mean(&suc),
                success_episode_median: median(&suc),
                solved: suc.len(),
            }
        })
        .collect()
}

impl RunRow {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{}",
            self.method,
            self.seed,
            fmt_opt(self.final_coverage),
            self.unique_states_visited,
            fmt_opt(self.decay_ratio),
            self.success_episode.map(|e| e.to_string()).unwrap_or_default()
        )
    }
}

impl Aggregate {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.method,
            self.runs,
            fmt_opt(self.coverage_mean),
            fmt_opt(self.coverage_median),
            fmt_opt(self.decay_ratio_mean),
            fmt_opt(self.decay_ratio_median),
            fmt_opt(self.success_episode_mean),
            fmt_opt(self.success_episode_median),
            self.solved
        )
    }
}

impl ComparisonSummary {
    pub fn rows(&self) -> Vec<RunRow> {
        self.runs.iter().map(|r| r.row.clone()).collect()
    }

    pub fn runs_csv(&self) -> String {
        let mut s = format!("{RUNS_HEADER}\n");
        for r in &self.runs {
            s.push_str(&r.row.csv_row());
            s.push('\n');
        }
        s
    }

    pub fn aggregate_csv(&self) -> String {
        let mut s = format!("{AGGREGATE_HEADER}\n");
        for a in &self.aggregates {
            s.push_str(&a.csv_row());
            s.push('\n');
        }
        s
    }

    pub fn row(&self, method: &str, seed: u64) -> Option<&RunRow> {
        self.runs
            .iter()
            .map(|r| &r.row)
            .find(|r| r.method == method && r.seed == seed)
    }

    /// Seeds on which `a` covers at least as much as `b`.
    pub fn coverage_wins(&self, a: &str, b: &str) -> (usize, usize) {
        let mut wins = 0;
        let mut paired = 0;
        for &seed in &self.seeds {
            if let (Some(x), Some(y)) = (self.row(a, seed), self.row(b, seed)) {
                if let (Some(cx), Some(cy)) = (x.final_coverage, y.final_coverage) {
                    paired += 1;
                    wins += (cx >= cy) as usize;
                }
            }
        }
        (wins, paired)
    }

    /// Seeds on which `a` reaches the success criterion and does so no later
    /// than `b` (an unsolved `b` counts as later).
    pub fn finetune_wins(&self, a: &str, b: &str) -> (usize, usize) {
        let mut wins = 0;
        let mut paired = 0;
        for &seed in &self.seeds {
            if let (Some(x), Some(y)) = (self.row(a, seed), self.row(b, seed)) {
                paired += 1;
                wins += match (x.success_episode, y.success_episode) {
                    (Some(ex), Some(ey)) => ex <= ey,
                    (Some(_), None) => true,
                    _ => false,
                } as usize;
            }
        }
        (wins, paired)
    }

    /// Pass/fail checks that apply to the methods present.
    pub fn checks(&self, config: &RunConfig) -> Vec<Check> {
        let has = |m: &str| self.runs.iter().any(|r| r.row.method == m);
        let mut out = Vec::new();
        if has("apt") && has("none") {
            let (wins, paired) = self.coverage_wins("apt", "none");
            let need = (config.coverage_pass_fraction * paired as f64 - 1e-9).ceil() as usize;
            out.push(Check {
                name: "apt coverage >= random-walk coverage".into(),
                passed: paired > 0 && wins >= need,
                detail: format!("{wins}/{paired} seeds, need {need}"),
            });
        }
        if has("apt") && self.runs.iter().any(|r| r.row.method == "apt" && r.row.final_coverage.is_some()) {
            let covs: Vec<f64> = self
                .runs
                .iter()
                .filter(|r| r.row.method == "apt")
                .filter_map(|r| r.row.final_coverage)
                .collect();
            let hit = covs.iter().filter(|c| **c >= config.coverage_target).count();
            out.push(Check {
                name: format!("apt coverage >= {}", config.coverage_target),
                passed: hit == covs.len(),
                detail: format!("{hit}/{} seeds", covs.len()),
            });
        }
        if has("apt") && has("scratch") && self.runs.iter().any(|r| r.finetune_metrics.is_some()) {
            let (wins, paired) = self.finetune_wins("apt", "scratch");
            out.push(Check {
                name: "apt fine-tunes no later than scratch".into(),
                passed: 2 * wins > paired,
                detail: format!("{wins}/{paired} seeds, need a majority"),
            });
        }
        out
    }
}

fn run_one(
    env: &Environment,
    task: &TaskSpec,
    method: &Method,
    seed: u64,
    finetune_config: Option<&FinetuneConfig>,
    record_timing: bool,
    scratch_base: &TrainLoopConfig,
) -> Result<RunOutcome> {
    let artifacts = match &method.pretrain {
        Some(cfg) => pretrain(
            env,
            &TrainLoopConfig {
                record_timing,
                ..cfg.clone()
            },
            seed,
        )?,
        None => PretrainedArtifacts::scratch(env, scratch_base, seed)?,
    };
    let final_coverage = match &method.pretrain {
        Some(_) => artifacts.final_coverage(),
        None => None,
    };
    let decay = decay_ratio(&artifacts.epochs).map(|(_, _, r)| r);
    let unique = artifacts.unique_states_visited();
    let pretrain_metrics = artifacts.metrics.clone();
    let (success_episode, finetune_metrics) = match finetune_config {
        Some(fc) => {
            let fc = FinetuneConfig {
                record_timing,
                ..fc.clone()
            };
            let result = finetune(env, artifacts, task, &fc, seed)?;
            (result.success_episode, Some(result.metrics))
        }
        None => (None, None),
    };
    Ok(RunOutcome {
        row: RunRow {
            method: method.name.clone(),
            seed,
            final_coverage,
            unique_states_visited: unique,
            decay_ratio: decay,
            success_episode,
        },
        pretrain_metrics,
        finetune_metrics,
    })
}

/// Runs every `(method, seed)` pair; rows are ordered method-major.
pub fn compare(config: &RunConfig, seeds: &[u64], record_timing: bool) -> Result<ComparisonSummary> {
    let (env, task) = config.environment()?;
    let methods: Vec<Method> = config
        .methods
        .iter()
        .map(|m| Method::from_name(m, config))
        .collect::<Result<_>>()?;
    let jobs: Vec<(&Method, u64)> = methods.iter().flat_map(|m| seeds.iter().map(move |&s| (m, s))).collect();
    let finetune_config = config.run_finetune.then_some(&config.finetune);
    let runs = config.execution().try_map(jobs.len(), |i| {
        let (method, seed) = jobs[i];
        run_one(&env, &task, method, seed, finetune_config, record_timing, &config.train).map_err(|e| {
            Error::RunFailed {
                method: method.name.clone(),
                seed,
                source: Box::new(e),
            }
        })
    })?;
    let rows: Vec<RunRow> = runs.iter().map(|r| r.row.clone()).collect();
    Ok(ComparisonSummary {
        seeds: seeds.to_vec(),
        aggregates: aggregate(&rows),
        runs,
    })
}

/// One cell of the k-NN timing grid.
#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub n: usize,
    pub dim: usize,
    pub k: usize,
    pub backend: Backend,
    /// Mean wall-clock microseconds per query (build included); 0 when timing
    /// is off.
    pub micros_per_query: f64,
    /// Whether this backend's neighbors equal the brute-force oracle's.
    pub agrees: bool,
}

pub const BENCH_HEADER: &str = "n,dim,k,backend,micros_per_query,agrees";

pub fn bench_csv(rows: &[BenchRow]) -> String {
    let mut s = format!("{BENCH_HEADER}\n");
    for r in rows {
        let backend = match r.backend {
            Backend::BruteForce => "brute",
            Backend::KdTree => "kdtree",
            Backend::Auto => "auto",
        };
        let _ = writeln!(
            s,
            "{},{},{},{backend},{},{}",
            r.n,
            r.dim,
            r.k,
            fmt_f64(r.micros_per_query),
            r.agrees
        );
    }
    s
}

/// Self-excluding k-NN over uniform points in the unit cube, brute force and
/// k-d tree, for every `(n, dim)`.
pub fn bench_knn(
    sizes: &[usize],
    dims: &[usize],
    k: usize,
    seed: u64,
    exec: Execution,
    record_timing: bool,
) -> Result<Vec<BenchRow>> {
    let mut rows = Vec::with_capacity(sizes.len() * dims.len() * 2);
    for &n in sizes {
        for &dim in dims {
            let mut rng = ChaCha8Rng::seed_from_u64(seed ^ ((n as u64) << 20) ^ dim as u64);
            let coords: Vec<f64> = (0..n * dim).map(|_| rng.random::<f64>()).collect();
            let points = PointSet::new(dim, coords)?;
            let mut oracle = None;
            for backend in [Backend::BruteForce, Backend::KdTree] {
                let start = Instant::now();
                let index = SpatialIndex::build(points.clone(), backend)?;
                let result = index.knn_with(&points, k, true, exec)?;
                let elapsed = start.elapsed().as_secs_f64();
                let agrees = match &oracle {
                    None => true,
                    Some(o) => *o == result,
                };
                if oracle.is_none() {
                    oracle = Some(result);
                }
                rows.push(BenchRow {
                    n,
                    dim,
                    k,
                    backend,
                    micros_per_query: if record_timing { elapsed * 1e6 / n as f64 } else { 0.0 },
                    agrees,
                });
            }
        }
    }
    Ok(rows)
}
