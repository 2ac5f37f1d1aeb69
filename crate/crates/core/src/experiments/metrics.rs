use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};

/// One row of a run's metric time series.
#[derive(Debug, Clone, PartialEq, serde::Serialize)]
pub struct MetricsRecord {
    pub env_step: u64,
    pub epoch: u64,
    pub mean_raw_intrinsic_reward: Option<f64>,
    pub mean_normalized_reward: Option<f64>,
    /// `None` where coverage is undefined (continuous environments).
    pub coverage_fraction: Option<f64>,
    /// Mean return of episodes finished since the previous row (fine-tuning).
    pub episode_return: Option<f64>,
    pub contrastive_loss: Option<f64>,
    pub unique_states_visited: u64,
    pub wall_clock_ms: u64,
}

pub const METRICS_HEADER: &str = "env_step,epoch,mean_raw_intrinsic_reward,mean_normalized_reward,\
coverage_fraction,episode_return,contrastive_loss,unique_states_visited,wall_clock_ms";

/// Empty field for `None`, shortest round-trip decimal otherwise.
pub fn fmt_opt(v: Option<f64>) -> String {
    v.map(fmt_f64).unwrap_or_default()
}

/// Locale-independent shortest round-trip formatting.
pub fn fmt_f64(v: f64) -> String {
    if v.is_nan() {
        "nan".into()
    } else {
        format!("{v}")
    }
}

impl MetricsRecord {
    pub fn csv_row(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{}",
            self.env_step,
            self.epoch,
            fmt_opt(self.mean_raw_intrinsic_reward),
            fmt_opt(self.mean_normalized_reward),
            fmt_opt(self.coverage_fraction),
            fmt_opt(self.episode_return),
            fmt_opt(self.contrastive_loss),
            self.unique_states_visited,
            self.wall_clock_ms
        )
    }
}

pub fn metrics_csv(records: &[MetricsRecord]) -> String {
    let mut s = String::new();
    writeln!(s, "{METRICS_HEADER}").expect("write to string");
    for r in records {
        writeln!(s, "{}", r.csv_row()).expect("write to string");
    }
    s
}

pub fn write_text(path: &Path, text: &str) -> Result<()> {
    if let Some(parent) = path.parent() {
        std::fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    std::fs::write(path, text).map_err(|e| Error::io(path, e))
}
