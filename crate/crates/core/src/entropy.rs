//! Particle-based entropy and the k-NN intrinsic reward.
//!
//! For latents `z_1..z_n` and neighbor sets `N_k(z_i)`:
//!
//! * k-th-only estimate: `Σ_i log ‖z_i − z_i^(k)‖^e`
//! * averaged estimate: `Σ_i log(c + (1/k) Σ_{j ∈ N_k(z_i)} ‖z_i − z_j‖^e)`
//!
//! The per-particle summand of the averaged estimate is the intrinsic reward.
//! `e` is the latent dimension by default (the log-volume of the k-NN ball) or
//! 1 in plain mode. The `1/n` factor, the bias term `b(k)` and the unit-ball
//! constant `π^(d/2)/Γ(d/2 + 1)` of the full estimator are additive or
//! multiplicative constants and are not computed; [`hypersphere_volume`] is
//! provided on its own.

use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::geometry::{candidate_cmp, squared_distance, Backend, PointSet, SpatialIndex};

/// One reward per particle, aligned with the input batch.
pub type RewardBatch = Vec<f64>;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EntropyVariant {
    /// Log distance to the k-th neighbor only.
    KthOnly,
    /// Log of `c` plus the mean powered distance over all k neighbors.
    Averaged,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ExponentMode {
    /// Distances raised to the latent dimension.
    LatentDim,
    /// Exponent 1.
    Plain,
}

impl ExponentMode {
    pub fn exponent(self, dim: usize) -> f64 {
        match self {
            ExponentMode::LatentDim => dim as f64,
            ExponentMode::Plain => 1.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EntropyConfig {
    pub k: usize,
    pub c: f64,
    pub variant: EntropyVariant,
    pub exponent: ExponentMode,
    pub backend: Backend,
    pub exec: Execution,
}

impl Default for EntropyConfig {
    fn default() -> Self {
        EntropyConfig {
            k: 5,
            c: 1.0,
            variant: EntropyVariant::Averaged,
            exponent: ExponentMode::LatentDim,
            backend: Backend::Auto,
            exec: Execution::default(),
        }
    }
}

impl EntropyConfig {
    pub fn validate(&self) -> Result<()> {
        if self.k == 0 {
            return Err(Error::Config("k must be >= 1".into()));
        }
        if !(self.c >= 0.0) || !self.c.is_finite() {
            return Err(Error::Config(format!("c must be finite and >= 0, got {}", self.c)));
        }
        Ok(())
    }
}

/// Volume of a `dim`-ball: `r^d · π^(d/2) / Γ(d/2 + 1)`.
pub fn hypersphere_volume(radius: f64, dim: usize) -> Result<f64> {
    if !(radius >= 0.0) {
        return Err(Error::InvalidArgument(format!("radius must be >= 0, got {radius}")));
    }
    if dim == 0 {
        return Err(Error::InvalidArgument("dimension must be >= 1".into()));
    }
    let d = dim as f64;
    Ok(radius.powi(dim as i32) * PI.powf(d / 2.0) / gamma_half_integer_plus_one(dim))
}

/// `Γ(d/2 + 1)` for integer `d >= 0`, by the recurrence `Γ(x + 1) = xΓ(x)`
/// from `Γ(1) = 1` or `Γ(3/2) = √π / 2`.
fn gamma_half_integer_plus_one(dim: usize) -> f64 {
    let (mut x, mut g) = if dim % 2 == 0 { (1.0, 1.0) } else { (1.5, PI.sqrt() / 2.0) };
    let target = dim as f64 / 2.0 + 1.0;
    while x < target {
        g *= x;
        x += 1.0;
    }
    g
}

/// `log(c + (1/k) Σ count · d^e)` over `(distance, count)` pairs whose counts
/// sum to `k`.
///
/// The powered mean is factored as `M^e · mean((d/M)^e)` with `M` the largest
/// distance and combined with `c` in log space, so large exponents neither
/// overflow nor underflow.
pub fn log_c_plus_mean_power(neighbors: &[(f64, usize)], k: usize, exponent: f64, c: f64) -> f64 {
    let max = neighbors.iter().map(|n| n.0).fold(0.0_f64, f64::max);
    let log_mean = if max > 0.0 {
        let scaled: f64 = neighbors
            .iter()
            .map(|&(d, count)| count as f64 * (d / max).powf(exponent))
            .sum::<f64>()
            / k as f64;
        exponent * max.ln() + scaled.ln()
    } else {
        f64::NEG_INFINITY
    };
    log_add_exp(c.ln(), log_mean)
}

fn log_add_exp(a: f64, b: f64) -> f64 {
    let (hi, lo) = if a >= b { (a, b) } else { (b, a) };
    if lo == f64::NEG_INFINITY {
        return hi;
    }
    hi + (lo - hi).exp().ln_1p()
}

fn neighbor_terms(points: &PointSet, config: &EntropyConfig) -> Result<Vec<f64>> {
    config.validate()?;
    let n = points.len();
    if n <= config.k {
        return Err(Error::InvalidArgument(format!(
            "need more than k = {} particles, got {n}",
            config.k
        )));
    }
    let e = config.exponent.exponent(points.dim());
    let index = SpatialIndex::build(points.clone(), config.backend)?;
    let neighbors = index.knn_with(points, config.k, true, config.exec)?;
    let terms = neighbors
        .iter()
        .map(|nbrs| match config.variant {
            EntropyVariant::Averaged => {
                let pairs: Vec<(f64, usize)> = nbrs.iter().map(|n| (n.distance, 1)).collect();
                log_c_plus_mean_power(&pairs, config.k, e, config.c)
            }
            EntropyVariant::KthOnly => e * nbrs[config.k - 1].distance.ln(),
        })
        .collect();
    Ok(terms)
}

/// Particle entropy of `points` up to the dropped constants.
///
/// The k-th-only variant is `-inf` when some particle has a duplicate as its
/// k-th neighbor.
pub fn particle_entropy(points: &PointSet, config: &EntropyConfig) -> Result<f64> {
    Ok(neighbor_terms(points, config)?.iter().sum())
}

/// Averaged-estimator summand for every particle, neighbors taken within the
/// batch itself (self excluded).
pub fn intrinsic_rewards(latents: &PointSet, config: &EntropyConfig) -> Result<RewardBatch> {
    let config = EntropyConfig {
        variant: EntropyVariant::Averaged,
        ..*config
    };
    neighbor_terms(latents, &config)
}

/// Rewards against a reference multiset given as distinct latents with
/// multiplicities.
///
/// Query `i` is itself one member of group `query_groups[i]`; that one copy is
/// excluded from its neighbors. Since ranking equal distances differently does
/// not change the sum of the k smallest, the result equals a plain k-NN reward
/// over the expanded multiset.
pub fn intrinsic_rewards_weighted(
    queries: &PointSet,
    query_groups: &[usize],
    reference: &PointSet,
    multiplicity: &[usize],
    config: &EntropyConfig,
) -> Result<RewardBatch> {
    config.validate()?;
    if query_groups.len() != queries.len() {
        return Err(Error::LengthMismatch {
            what: "query groups",
            expected: queries.len(),
            got: query_groups.len(),
        });
    }
    if multiplicity.len() != reference.len() {
        return Err(Error::LengthMismatch {
            what: "multiplicities",
            expected: reference.len(),
            got: multiplicity.len(),
        });
    }
    if queries.dim() != reference.dim() {
        return Err(Error::DimensionMismatch {
            expected: reference.dim(),
            got: queries.dim(),
        });
    }
    let total: usize = multiplicity.iter().sum();
    if total <= config.k {
        return Err(Error::InvalidArgument(format!(
            "reference multiset of {total} cannot supply k = {} neighbors",
            config.k
        )));
    }
    if let Some(&g) = query_groups.iter().find(|&&g| g >= reference.len() || multiplicity[g] == 0) {
        return Err(Error::InvalidArgument(format!("query group {g} is not in the reference")));
    }

    let k = config.k;
    let e = config.exponent.exponent(reference.dim());
    let c = config.c;
    let rewards = config.exec.map(queries.len(), |qi| {
        let q = queries.point(qi);
        let mut cands: Vec<(f64, usize)> = reference
            .iter()
            .enumerate()
            .map(|(g, p)| (squared_distance(q, p), g))
            .collect();
        cands.sort_unstable_by(|a, b| candidate_cmp(*a, *b));
        let mut remaining = k;
        let mut pairs = Vec::with_capacity(k);
        for (d2, g) in cands {
            let available = multiplicity[g] - usize::from(g == query_groups[qi]);
            let take = available.min(remaining);
            if take > 0 {
                pairs.push((d2.sqrt(), take));
                remaining -= take;
            }
            if remaining == 0 {
                break;
            }
        }
        log_c_plus_mean_power(&pairs, k, e, c)
    });
    Ok(rewards)
}

/// How the normalizer tracks the mean.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum MeanMode {
    /// Exact mean of every raw value seen.
    Cumulative,
    /// Exponential moving average; the first value seeds it.
    Ema { decay: f64 },
}

/// Divides rewards by a running estimate of their mean.
#[derive(Debug, Clone, PartialEq)]
pub struct RewardNormalizer {
    count: u64,
    sum: f64,
    compensation: f64,
    ema: f64,
    floor: f64,
    mode: MeanMode,
}

impl Default for RewardNormalizer {
    fn default() -> Self {
        RewardNormalizer::new(MeanMode::Cumulative, 1e-8)
    }
}

impl RewardNormalizer {
    pub fn new(mode: MeanMode, floor: f64) -> Self {
        RewardNormalizer {
            count: 0,
            sum: 0.0,
            compensation: 0.0,
            ema: 0.0,
            floor,
            mode,
        }
    }

    pub fn count(&self) -> u64 {
        self.count
    }

    pub fn running_mean(&self) -> f64 {
        match self.mode {
            MeanMode::Cumulative if self.count == 0 => 0.0,
            MeanMode::Cumulative => (self.sum + self.compensation) / self.count as f64,
            MeanMode::Ema { .. } => self.ema,
        }
    }

    fn push(&mut self, x: f64) {
        // Neumaier summation.
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.compensation += (self.sum - t) + x;
        } else {
            self.compensation += (x - t) + self.sum;
        }
        self.sum = t;
        if let MeanMode::Ema { decay } = self.mode {
            self.ema = if self.count == 0 {
                x
            } else {
                decay * self.ema + (1.0 - decay) * x
            };
        }
        self.count += 1;
    }

    /// Folds the batch into the running mean, then returns each value divided
    /// by `max(mean, floor)`.
    pub fn normalize(&mut self, raw: &[f64]) -> RewardBatch {
        for &x in raw {
            self.push(x);
        }
        let denom = self.running_mean().max(self.floor);
        raw.iter().map(|x| x / denom).collect()
    }

    pub fn reset(&mut self) {
        *self = RewardNormalizer::new(self.mode, self.floor);
    }
}
