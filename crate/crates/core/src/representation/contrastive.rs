//! Contrastive objective over two augmented views of each observation.
//!
//! Views are stacked as `[keys; queries]` (rows `0..n` and `n..2n`). For an
//! anchor `a` of sample `i`, the positive is the other view of `i` and the
//! negatives are both views of every other sample:
//!
//! `ℓ_a = −s(a, pos) + log Σ_{b: sample(b) ≠ i} exp s(a, b)`,
//! `s(a, b) = h_a·h_b / τ`,
//!
//! averaged over all `2n` anchors. The positive is not part of the
//! denominator, so `ℓ_a` is not bounded below by zero.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand::SeedableRng;
use rand_distr::StandardNormal;

use super::encoder::{EncoderParams, ProjectionParams};
use super::mlp::Matrix;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AugmentConfig {
    /// Standard deviation of additive Gaussian noise.
    pub gaussian_sigma: f64,
    /// Half-width of the additive uniform shift.
    pub coord_shift: f64,
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            gaussian_sigma: 0.1,
            coord_shift: 0.0,
        }
    }
}

/// Adds `N(0, σ²)` noise and a uniform `[−shift, shift]` offset, drawn
/// independently for every coordinate of every sample.
pub fn augment<R: Rng + ?Sized>(obs: &Matrix, config: &AugmentConfig, rng: &mut R) -> Matrix {
    let mut out = obs.clone();
    let sigma = config.gaussian_sigma;
    let shift = config.coord_shift;
    if sigma == 0.0 && shift == 0.0 {
        return out;
    }
    for v in out.data_mut() {
        if sigma > 0.0 {
            *v += sigma * rng.sample::<f64, _>(StandardNormal);
        }
        if shift > 0.0 {
            *v += rng.random_range(-shift..=shift);
        }
    }
    out
}

/// Loss over stacked projections `[keys; queries]` and its gradient with
/// respect to those projections.
pub fn loss_from_projections(h: &Matrix, temperature: f64) -> Result<(f64, Matrix)> {
    if !(temperature > 0.0) {
        return Err(Error::InvalidArgument(format!("temperature must be > 0, got {temperature}")));
    }
    if h.rows() % 2 != 0 {
        return Err(Error::InvalidArgument("projection rows must pair keys with queries".into()));
    }
    let n = h.rows() / 2;
    if n < 2 {
        return Err(Error::InvalidArgument(format!("contrastive batch needs n >= 2, got {n}")));
    }
    let m = 2 * n;
    let mut sim = vec![0.0; m * m];
    for a in 0..m {
        for b in a..m {
            let s = h.row(a).iter().zip(h.row(b)).map(|(x, y)| x * y).sum::<f64>() / temperature;
            sim[a * m + b] = s;
            sim[b * m + a] = s;
        }
    }

    let scale = 1.0 / m as f64;
    let mut loss = 0.0;
    // coef[a][b] = dL / ds(a, b) for the anchor row a
    let mut coef = vec![0.0; m * m];
    for a in 0..m {
        let i = a % n;
        let pos = (a + n) % m;
        let row = &sim[a * m..(a + 1) * m];
        let max = (0..m)
            .filter(|&b| b % n != i)
            .map(|b| row[b])
            .fold(f64::NEG_INFINITY, f64::max);
        let denom: f64 = (0..m).filter(|&b| b % n != i).map(|b| (row[b] - max).exp()).sum();
        loss += -row[pos] + max + denom.ln();
        for b in (0..m).filter(|&b| b % n != i) {
            coef[a * m + b] = scale * (row[b] - max).exp() / denom;
        }
        coef[a * m + pos] -= scale;
    }
    loss *= scale;

    let mut dh = Matrix::zeros(m, h.cols());
    for a in 0..m {
        for b in 0..m {
            let g = coef[a * m + b] / temperature;
            if g == 0.0 {
                continue;
            }
            for j in 0..h.cols() {
                let ha = h.row(a)[j];
                let hb = h.row(b)[j];
                dh.row_mut(a)[j] += g * hb;
                dh.row_mut(b)[j] += g * ha;
            }
        }
    }
    Ok((loss, dh))
}

#[derive(Debug, Clone)]
pub struct ContrastiveOutput {
    pub loss: f64,
    pub encoder_grad: Vec<f64>,
    pub projection_grad: Vec<f64>,
}

/// Draws key and query views of `obs`, runs both networks and returns the
/// loss with exact gradients for every encoder and projection parameter.
pub fn contrastive_loss_and_grads<R: Rng + ?Sized>(
    encoder: &EncoderParams,
    projection: &ProjectionParams,
    obs: &Matrix,
    temperature: f64,
    augment_config: &AugmentConfig,
    rng: &mut R,
) -> Result<ContrastiveOutput> {
    if obs.rows() < 2 {
        return Err(Error::InvalidArgument(format!(
            "contrastive batch needs n >= 2, got {}",
            obs.rows()
        )));
    }
    let keys = augment(obs, augment_config, rng);
    let queries = augment(obs, augment_config, rng);
    let views = keys.vstack(&queries)?;

    let (z, enc_tape) = encoder.net.forward_tape(&views)?;
    let (h, proj_tape) = projection.net.forward_tape(&z)?;
    let (loss, dh) = loss_from_projections(&h, temperature)?;

    let mut projection_grad = vec![0.0; projection.net.num_params()];
    let dz = projection.net.backward(&proj_tape, &dh, &mut projection_grad);
    let mut encoder_grad = vec![0.0; encoder.net.num_params()];
    encoder.net.backward(&enc_tape, &dz, &mut encoder_grad);
    Ok(ContrastiveOutput {
        loss,
        encoder_grad,
        projection_grad,
    })
}

/// Adam state for the encoder and projection parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerState {
    pub learning_rate: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub epsilon: f64,
    pub step: u64,
    m_enc: Vec<f64>,
    v_enc: Vec<f64>,
    m_proj: Vec<f64>,
    v_proj: Vec<f64>,
}

impl OptimizerState {
    pub fn new(encoder: &EncoderParams, projection: &ProjectionParams, learning_rate: f64) -> Self {
        OptimizerState {
            learning_rate,
            beta1: 0.9,
            beta2: 0.999,
            epsilon: 1e-8,
            step: 0,
            m_enc: vec![0.0; encoder.net.num_params()],
            v_enc: vec![0.0; encoder.net.num_params()],
            m_proj: vec![0.0; projection.net.num_params()],
            v_proj: vec![0.0; projection.net.num_params()],
        }
    }

    fn apply(&mut self, encoder: &mut EncoderParams, projection: &mut ProjectionParams, out: &ContrastiveOutput) {
        self.step += 1;
        let t = self.step as i32;
        let bc1 = 1.0 - self.beta1.powi(t);
        let bc2 = 1.0 - self.beta2.powi(t);
        let (lr, b1, b2, eps) = (self.learning_rate, self.beta1, self.beta2, self.epsilon);
        let update = |p: &mut [f64], g: &[f64], m: &mut [f64], v: &mut [f64]| {
            for i in 0..p.len() {
                m[i] = b1 * m[i] + (1.0 - b1) * g[i];
                v[i] = b2 * v[i] + (1.0 - b2) * g[i] * g[i];
                let mhat = m[i] / bc1;
                let vhat = v[i] / bc2;
                p[i] -= lr * mhat / (vhat.sqrt() + eps);
            }
        };
        update(encoder.net.params_mut(), &out.encoder_grad, &mut self.m_enc, &mut self.v_enc);
        update(projection.net.params_mut(), &out.projection_grad, &mut self.m_proj, &mut self.v_proj);
    }
}

/// One Adam step on both networks; returns the loss before the update.
pub fn train_step<R: Rng + ?Sized>(
    encoder: &mut EncoderParams,
    projection: &mut ProjectionParams,
    optimizer: &mut OptimizerState,
    obs: &Matrix,
    temperature: f64,
    augment_config: &AugmentConfig,
    rng: &mut R,
) -> Result<f64> {
    let out = contrastive_loss_and_grads(encoder, projection, obs, temperature, augment_config, rng)?;
    optimizer.apply(encoder, projection, &out);
    Ok(out.loss)
}

/// Largest relative disagreement between analytic and central-difference
/// gradients, `|g_fd − g| / max(|g_fd|, |g|, 1e-8)`, over all parameters.
///
/// Every loss evaluation reseeds the augmentation stream with `seed`, so the
/// loss is a deterministic function of the parameters.
pub fn finite_difference_check(
    encoder: &EncoderParams,
    projection: &ProjectionParams,
    obs: &Matrix,
    temperature: f64,
    augment_config: &AugmentConfig,
    seed: u64,
    epsilon: f64,
) -> Result<f64> {
    let eval = |e: &EncoderParams, p: &ProjectionParams| -> Result<ContrastiveOutput> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        contrastive_loss_and_grads(e, p, obs, temperature, augment_config, &mut rng)
    };
    let analytic = eval(encoder, projection)?;
    let rel = |fd: f64, g: f64| (fd - g).abs() / fd.abs().max(g.abs()).max(1e-8);

    let mut worst = 0.0_f64;
    let mut enc = encoder.clone();
    for i in 0..enc.net.num_params() {
        let orig = enc.net.params()[i];
        enc.net.params_mut()[i] = orig + epsilon;
        let plus = eval(&enc, projection)?.loss;
        enc.net.params_mut()[i] = orig - epsilon;
        let minus = eval(&enc, projection)?.loss;
        enc.net.params_mut()[i] = orig;
        worst = worst.max(rel((plus - minus) / (2.0 * epsilon), analytic.encoder_grad[i]));
    }
    let mut proj = projection.clone();
    for i in 0..proj.net.num_params() {
        let orig = proj.net.params()[i];
        proj.net.params_mut()[i] = orig + epsilon;
        let plus = eval(encoder, &proj)?.loss;
        proj.net.params_mut()[i] = orig - epsilon;
        let minus = eval(encoder, &proj)?.loss;
        proj.net.params_mut()[i] = orig;
        worst = worst.max(rel((plus - minus) / (2.0 * epsilon), analytic.projection_grad[i]));
    }
    Ok(worst)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_projections_give_log_two_at_n2() {
        let h = Matrix::new(4, 3, vec![0.2, -0.1, 0.4].repeat(4)).unwrap();
        let (loss, dh) = loss_from_projections(&h, 0.1).unwrap();
        assert!((loss - 2f64.ln()).abs() < 1e-12);
        assert!(dh.data().iter().all(|g| g.is_finite()));
    }

    #[test]
    fn identical_projections_general_n() {
        for n in 2..6 {
            let h = Matrix::new(2 * n, 2, vec![1.0, 0.5].repeat(2 * n)).unwrap();
            let (loss, _) = loss_from_projections(&h, 0.5).unwrap();
            assert!((loss - (2.0 * (n as f64 - 1.0)).ln()).abs() < 1e-12);
        }
    }

    #[test]
    fn rejects_bad_inputs() {
        let h = Matrix::new(2, 2, vec![0.0; 4]).unwrap();
        assert!(loss_from_projections(&h, 0.1).is_err());
        let h4 = Matrix::new(4, 2, vec![0.0; 8]).unwrap();
        assert!(loss_from_projections(&h4, 0.0).is_err());
        assert!(loss_from_projections(&h4, -1.0).is_err());
    }

    #[test]
    fn augment_identity_when_disabled() {
        let x = Matrix::new(3, 2, vec![0.1, 0.2, 0.3, 0.4, 0.5, 0.6]).unwrap();
        let cfg = AugmentConfig {
            gaussian_sigma: 0.0,
            coord_shift: 0.0,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        assert_eq!(augment(&x, &cfg, &mut rng), x);
    }

    #[test]
    fn augment_shift_is_bounded() {
        let x = Matrix::zeros(50, 3);
        let cfg = AugmentConfig {
            gaussian_sigma: 0.0,
            coord_shift: 0.25,
        };
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let y = augment(&x, &cfg, &mut rng);
        assert!(y.data().iter().all(|v| v.abs() <= 0.25));
        assert!(y.data().iter().any(|v| *v != 0.0));
    }
}
