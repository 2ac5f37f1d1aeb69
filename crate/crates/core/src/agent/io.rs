//! On-disk form of pre-training artifacts.
//!
//! A directory holds `qtable.csv` (`state_id,action,value`), `buffer.csv`
//! (the replay buffer, oldest first), `encoder.ckpt` when the encoder is
//! learned, `metrics.csv`, and `config.json`.

use std::fmt::Write as _;
use std::path::Path;

use super::buffer::{ReplayBuffer, Transition};
use super::pretrain::PretrainedArtifacts;
use super::qtable::QTable;
use crate::error::{Error, Result};
use crate::experiments::{fmt_f64, metrics_csv, write_text};
use crate::representation::{checkpoint, Encoder, EncoderParams, ProjectionParams};

pub const QTABLE_HEADER: &str = "state_id,action,value";

pub fn qtable_csv(q: &QTable) -> String {
    let mut s = String::with_capacity(q.values().len() * 16);
    s.push_str(QTABLE_HEADER);
    s.push('\n');
    for state in 0..q.num_states() {
        for action in 0..q.num_actions() {
            let _ = writeln!(s, "{state},{action},{}", fmt_f64(q.get(state, action)));
        }
    }
    s
}

/// Parses a Q-table CSV into a table of the given shape. Missing entries stay 0.
pub fn parse_qtable_csv(text: &str, num_states: usize, num_actions: usize, alpha: f64, gamma: f64) -> Result<QTable> {
    let mut q = QTable::new(num_states, num_actions, alpha, gamma)?;
    let mut lines = text.lines();
    if lines.next().map(str::trim) != Some(QTABLE_HEADER) {
        return Err(Error::Checkpoint(format!("Q-table CSV must start with `{QTABLE_HEADER}`")));
    }
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Checkpoint(format!("malformed Q-table row {}: {line:?}", n + 2));
        let mut fields = line.split(',');
        let (Some(s), Some(a), Some(v), None) = (fields.next(), fields.next(), fields.next(), fields.next()) else {
            return Err(bad());
        };
        let s: usize = s.trim().parse().map_err(|_| bad())?;
        let a: usize = a.trim().parse().map_err(|_| bad())?;
        let v: f64 = v.trim().parse().map_err(|_| bad())?;
        if s >= num_states || a >= num_actions || !v.is_finite() {
            return Err(bad());
        }
        q.set(s, a, v);
    }
    Ok(q)
}

/// `state_id,action,next_state_id,done,obs_0..,next_obs_0..`, one row per
/// transition from oldest to newest. Task rewards are not stored.
pub fn buffer_csv(buffer: &ReplayBuffer, obs_dim: usize) -> String {
    let mut s = String::from("state_id,action,next_state_id,done");
    for prefix in ["obs", "next_obs"] {
        for i in 0..obs_dim {
            let _ = write!(s, ",{prefix}_{i}");
        }
    }
    s.push('\n');
    for t in buffer.iter() {
        let _ = write!(s, "{},{},{},{}", t.state_id, t.action, t.next_state_id, t.done as u8);
        for v in t.obs.iter().chain(&t.next_obs) {
            s.push(',');
            s.push_str(&fmt_f64(*v));
        }
        s.push('\n');
    }
    s
}

pub fn parse_buffer_csv(text: &str, obs_dim: usize, capacity: usize) -> Result<ReplayBuffer> {
    let mut buffer = ReplayBuffer::new(capacity)?;
    let mut lines = text.lines();
    let header = lines.next().unwrap_or_default();
    if header.split(',').count() != 4 + 2 * obs_dim || !header.starts_with("state_id,action,next_state_id,done") {
        return Err(Error::Checkpoint(format!(
            "buffer CSV header does not match observation dimension {obs_dim}"
        )));
    }
    for (n, line) in lines.enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let bad = || Error::Checkpoint(format!("malformed buffer row {}", n + 2));
        let fields: Vec<&str> = line.split(',').collect();
        if fields.len() != 4 + 2 * obs_dim {
            return Err(bad());
        }
        let int = |i: usize| fields[i].trim().parse::<usize>().map_err(|_| bad());
        let floats = |r: std::ops::Range<usize>| -> Result<Vec<f64>> {
            fields[r].iter().map(|f| f.trim().parse::<f64>().map_err(|_| bad())).collect()
        };
        let done = match fields[3].trim() {
            "0" => false,
            "1" => true,
            _ => return Err(bad()),
        };
        buffer.push(Transition {
            obs: floats(4..4 + obs_dim)?,
            action: int(1)?,
            extrinsic_reward: None,
            next_obs: floats(4 + obs_dim..4 + 2 * obs_dim)?,
            done,
            state_id: int(0)?,
            next_state_id: int(2)?,
        });
    }
    Ok(buffer)
}

pub fn load_buffer(path: &Path, obs_dim: usize, capacity: usize) -> Result<ReplayBuffer> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_buffer_csv(&text, obs_dim, capacity)
}

pub fn save_artifacts(
    dir: &Path,
    artifacts: &PretrainedArtifacts,
    obs_dim: usize,
    config_echo: &serde_json::Value,
) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_text(&dir.join("qtable.csv"), &qtable_csv(&artifacts.qtable))?;
    write_text(&dir.join("buffer.csv"), &buffer_csv(&artifacts.buffer, obs_dim))?;
    write_text(&dir.join("metrics.csv"), &metrics_csv(&artifacts.metrics))?;
    let echo = serde_json::to_string_pretty(config_echo).expect("JSON value serializes");
    write_text(&dir.join("config.json"), &(echo + "\n"))?;
    if let (Encoder::Learned(enc), Some(proj)) = (&artifacts.encoder, &artifacts.projection) {
        checkpoint::save(&dir.join("encoder.ckpt"), enc, proj)?;
    }
    Ok(())
}

pub fn load_qtable(path: &Path, num_states: usize, num_actions: usize, alpha: f64, gamma: f64) -> Result<QTable> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse_qtable_csv(&text, num_states, num_actions, alpha, gamma)
}

/// Loads `encoder.ckpt` from an artifact directory if present.
pub fn load_encoder(dir: &Path) -> Result<Option<(EncoderParams, ProjectionParams)>> {
    let path = dir.join("encoder.ckpt");
    if !path.exists() {
        return Ok(None);
    }
    checkpoint::load(&path).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn qtable_csv_round_trip() {
        let mut q = QTable::new(3, 2, 0.1, 0.99).unwrap();
        q.set(0, 1, 0.1);
        q.set(2, 0, -1.0 / 3.0);
        let text = qtable_csv(&q);
        assert!(text.starts_with("state_id,action,value\n0,0,0\n0,1,0.1\n"));
        let back = parse_qtable_csv(&text, 3, 2, 0.1, 0.99).unwrap();
        assert_eq!(back, q);
    }

    #[test]
    fn buffer_csv_round_trip_keeps_order() {
        let mut b = ReplayBuffer::new(3).unwrap();
        for i in 0..5 {
            b.push(Transition {
                obs: vec![i as f64 / 3.0, -0.5],
                action: i % 4,
                extrinsic_reward: None,
                next_obs: vec![0.1, i as f64],
                done: i == 4,
                state_id: i,
                next_state_id: i + 1,
            });
        }
        let text = buffer_csv(&b, 2);
        assert!(text.starts_with("state_id,action,next_state_id,done,obs_0,obs_1,next_obs_0,next_obs_1\n2,2,3,0,"));
        let back = parse_buffer_csv(&text, 2, 3).unwrap();
        assert!(back.iter().eq(b.iter()));
        assert!(parse_buffer_csv(&text, 3, 3).is_err());
    }

    #[test]
    fn qtable_csv_rejects_out_of_range() {
        assert!(parse_qtable_csv("state_id,action,value\n5,0,1\n", 3, 2, 0.1, 0.99).is_err());
        assert!(parse_qtable_csv("s,a,v\n", 3, 2, 0.1, 0.99).is_err());
    }
}
