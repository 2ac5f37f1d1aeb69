use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::Context;
use clap::{Args, Parser, Subcommand};

use apt_lab::agent::{self, finetune, pretrain, PretrainedArtifacts};
use apt_lab::experiments::{
    bench_csv, bench_knn, compare, metrics_csv, resolve_seed, reward_decay_experiment, write_text, Check, RunConfig,
};
use apt_lab::representation::Encoder;

#[derive(Parser)]
#[command(name = "apt-lab", version, about = "Particle-entropy exploration experiments on grid worlds")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args, Clone)]
struct Common {
    /// Flat `key = value` config file.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Overrides the config seed and APT_LAB_SEED.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory (default: config `out`, else `apt-lab-out/<label>`).
    #[arg(long)]
    out: Option<PathBuf>,
    /// Write 0 in every wall-clock column.
    #[arg(long)]
    no_timing: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Reward-free pre-training; writes Q-table, encoder, metrics.
    Pretrain(Common),
    /// Fine-tune on the goal task.
    Finetune {
        #[command(flatten)]
        common: Common,
        /// Artifact directory from `pretrain`; without it pre-training runs first.
        #[arg(long, conflicts_with = "scratch")]
        artifacts: Option<PathBuf>,
        /// Start from an untrained agent.
        #[arg(long)]
        scratch: bool,
    },
    /// Intrinsic-reward decay experiment; exit 2 when the ratio misses the threshold.
    Decay(Common),
    /// Every method over `num_seeds` seeds; exit 2 when a check fails.
    Compare(Common),
    /// Brute-force vs k-d tree timing grid.
    BenchKnn(Common),
    /// Parse and validate a config, printing the resolved values as JSON.
    ValidateConfig(Common),
}

enum Outcome {
    Ok,
    CheckFailed,
}

struct Setup {
    config: RunConfig,
    seed: u64,
    out: PathBuf,
    timing: bool,
}

fn setup(common: &Common) -> anyhow::Result<Setup> {
    let config = match &common.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    let env_seed = std::env::var("APT_LAB_SEED").ok();
    let seed = resolve_seed(common.seed, config.seed, env_seed.as_deref())?;
    let out = common
        .out
        .clone()
        .or_else(|| config.out.clone())
        .unwrap_or_else(|| Path::new("apt-lab-out").join(&config.label));
    Ok(Setup {
        config,
        seed,
        out,
        timing: !common.no_timing,
    })
}

fn write_json(path: &Path, value: &serde_json::Value) -> anyhow::Result<()> {
    write_text(path, &(serde_json::to_string_pretty(value)? + "\n"))?;
    Ok(())
}

fn report(checks: &[Check]) -> Outcome {
    for c in checks {
        println!("[{}] {} ({})", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    if checks.iter().all(|c| c.passed) {
        Outcome::Ok
    } else {
        Outcome::CheckFailed
    }
}

fn run_pretrain(s: &Setup) -> anyhow::Result<Outcome> {
    let (env, _) = s.config.environment()?;
    let artifacts = pretrain(&env, &s.config.train_config(s.timing), s.seed)?;
    agent::io::save_artifacts(&s.out, &artifacts, env.obs_dim(), &s.config.to_json())?;
    println!(
        "pretrained {} steps, coverage {}, artifacts in {}",
        s.config.train.total_steps,
        artifacts.final_coverage().map_or("n/a".into(), |c| format!("{c:.4}")),
        s.out.display()
    );
    Ok(Outcome::Ok)
}

fn load_artifacts(s: &Setup, dir: &Path, env: &apt_lab::environments::Environment) -> anyhow::Result<PretrainedArtifacts> {
    let mut artifacts = PretrainedArtifacts::scratch(env, &s.config.train, s.seed)?;
    artifacts.qtable = agent::io::load_qtable(
        &dir.join("qtable.csv"),
        env.num_states(),
        env.num_actions(),
        s.config.finetune.alpha,
        s.config.finetune.gamma,
    )?;
    if s.config.finetune.reuse_buffer {
        artifacts.buffer = agent::io::load_buffer(&dir.join("buffer.csv"), env.obs_dim(), s.config.train.buffer_capacity)?;
    }
    if let Some((enc, proj)) = agent::io::load_encoder(dir)? {
        artifacts.encoder = Encoder::Learned(enc);
        artifacts.projection = Some(proj);
    }
    Ok(artifacts)
}

fn run_finetune(s: &Setup, artifacts_dir: Option<&Path>, scratch: bool) -> anyhow::Result<Outcome> {
    let (env, task) = s.config.environment()?;
    let artifacts = match (artifacts_dir, scratch) {
        (Some(dir), _) => load_artifacts(s, dir, &env).with_context(|| format!("loading {}", dir.display()))?,
        (None, true) => PretrainedArtifacts::scratch(&env, &s.config.train, s.seed)?,
        (None, false) => pretrain(&env, &s.config.train_config(s.timing), s.seed)?,
    };
    let result = finetune(&env, artifacts, &task, &s.config.finetune_config(s.timing), s.seed)?;
    write_text(&s.out.join("finetune_metrics.csv"), &metrics_csv(&result.metrics))?;
    let mut episodes = String::from("episode,return,success\n");
    for (i, (r, ok)) in result.episode_returns.iter().zip(&result.successes).enumerate() {
        episodes.push_str(&format!("{},{},{}\n", i + 1, r, ok));
    }
    write_text(&s.out.join("episodes.csv"), &episodes)?;
    write_json(
        &s.out.join("summary.json"),
        &serde_json::json!({
            "seed": s.seed,
            "episodes": result.successes.len(),
            "successes": result.successes.iter().filter(|x| **x).count(),
            "success_episode": result.success_episode,
            "config": s.config.to_json(),
        }),
    )?;
    match result.success_episode {
        Some(e) => println!("reached the success rate at episode {e}"),
        None => println!("did not reach the success rate"),
    }
    Ok(Outcome::Ok)
}

fn run_decay(s: &Setup) -> anyhow::Result<Outcome> {
    let (env, _) = s.config.environment()?;
    let report = reward_decay_experiment(&env, &s.config.train_config(s.timing), s.seed, s.config.decay_threshold)?;
    write_text(&s.out.join("decay.csv"), &report.trace_csv())?;
    write_text(&s.out.join("metrics.csv"), &metrics_csv(&report.metrics))?;
    write_json(
        &s.out.join("summary.json"),
        &serde_json::json!({
            "seed": s.seed,
            "first_epoch_mean": report.first_mean,
            "last_epoch_mean": report.last_mean,
            "ratio": report.ratio,
            "threshold": report.threshold,
            "passed": report.passed,
            "config": s.config.to_json(),
        }),
    )?;
    Ok(report_one(
        "last/first epoch mean raw reward below threshold",
        report.passed,
        format!("ratio {:.4}, threshold {}", report.ratio, report.threshold),
    ))
}

fn report_one(name: &str, passed: bool, detail: String) -> Outcome {
    report(&[Check {
        name: name.into(),
        passed,
        detail,
    }])
}

fn run_compare(s: &Setup) -> anyhow::Result<Outcome> {
    let seeds: Vec<u64> = (0..s.config.num_seeds as u64).map(|i| s.seed.wrapping_add(i)).collect();
    let summary = compare(&s.config, &seeds, s.timing)?;
    write_text(&s.out.join("runs.csv"), &summary.runs_csv())?;
    write_text(&s.out.join("aggregate.csv"), &summary.aggregate_csv())?;
    for run in &summary.runs {
        let stem = format!("{}_{}", run.row.method, run.row.seed);
        write_text(&s.out.join("runs").join(format!("{stem}_pretrain.csv")), &metrics_csv(&run.pretrain_metrics))?;
        if let Some(m) = &run.finetune_metrics {
            write_text(&s.out.join("runs").join(format!("{stem}_finetune.csv")), &metrics_csv(m))?;
        }
    }
    let checks = summary.checks(&s.config);
    write_json(
        &s.out.join("summary.json"),
        &serde_json::json!({
            "seeds": seeds,
            "aggregates": summary.aggregates,
            "checks": checks,
            "config": s.config.to_json(),
        }),
    )?;
    print!("{}", summary.aggregate_csv());
    Ok(report(&checks))
}

fn run_bench(s: &Setup) -> anyhow::Result<Outcome> {
    let c = &s.config;
    let rows = bench_knn(&c.bench_sizes, &c.bench_dims, c.bench_k, s.seed, c.execution(), s.timing)?;
    let csv = bench_csv(&rows);
    write_text(&s.out.join("bench_knn.csv"), &csv)?;
    print!("{csv}");
    let agree = rows.iter().all(|r| r.agrees);
    Ok(report_one("k-d tree matches brute force", agree, format!("{} rows", rows.len())))
}

fn run(cli: Cli) -> anyhow::Result<Outcome> {
    match cli.command {
        Command::Pretrain(c) => run_pretrain(&setup(&c)?),
        Command::Finetune {
            common,
            artifacts,
            scratch,
        } => run_finetune(&setup(&common)?, artifacts.as_deref(), scratch),
        Command::Decay(c) => run_decay(&setup(&c)?),
        Command::Compare(c) => run_compare(&setup(&c)?),
        Command::BenchKnn(c) => run_bench(&setup(&c)?),
        Command::ValidateConfig(c) => {
            let s = setup(&c)?;
            println!("{}", serde_json::to_string_pretty(&s.config.to_json())?);
            Ok(Outcome::Ok)
        }
    }
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(1) } else { ExitCode::SUCCESS };
        }
    };
    match run(cli) {
        Ok(Outcome::Ok) => ExitCode::SUCCESS,
        Ok(Outcome::CheckFailed) => ExitCode::from(2),
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::from(1)
        }
    }
}
