use rand::Rng;
use rand_distr::StandardNormal;

use super::mlp::{Layer, Matrix, Mlp};
use crate::error::{Error, Result};
use crate::geometry::PointSet;

/// Shape of the encoder: dense hidden layers with ELU, a dense layer to the
/// latent width, layer normalization, then tanh.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct EncoderArch {
    pub input_dim: usize,
    pub hidden: Vec<usize>,
    pub latent_dim: usize,
}

impl EncoderArch {
    pub fn new(input_dim: usize) -> Self {
        EncoderArch {
            input_dim,
            hidden: vec![64, 64],
            latent_dim: 5,
        }
    }

    fn layers(&self) -> Result<Vec<Layer>> {
        if self.hidden.contains(&0) || self.latent_dim == 0 || self.input_dim == 0 {
            return Err(Error::InvalidArgument(format!("degenerate encoder shape {self:?}")));
        }
        let mut layers = Vec::new();
        let mut width = self.input_dim;
        for &h in &self.hidden {
            layers.push(Layer::Dense { input: width, output: h });
            layers.push(Layer::Elu);
            width = h;
        }
        layers.push(Layer::Dense {
            input: width,
            output: self.latent_dim,
        });
        layers.push(Layer::LayerNorm { dim: self.latent_dim });
        layers.push(Layer::Tanh);
        Ok(layers)
    }
}

/// Two-layer projection head: dense, ELU, dense.
#[derive(Debug, Clone, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct ProjectionArch {
    pub input_dim: usize,
    pub hidden: usize,
    pub output: usize,
}

impl ProjectionArch {
    pub fn new(latent_dim: usize) -> Self {
        ProjectionArch {
            input_dim: latent_dim,
            hidden: 128,
            output: 64,
        }
    }

    fn layers(&self) -> Result<Vec<Layer>> {
        if self.hidden == 0 || self.output == 0 {
            return Err(Error::InvalidArgument(format!("degenerate projection shape {self:?}")));
        }
        Ok(vec![
            Layer::Dense {
                input: self.input_dim,
                output: self.hidden,
            },
            Layer::Elu,
            Layer::Dense {
                input: self.hidden,
                output: self.output,
            },
        ])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderParams {
    pub arch: EncoderArch,
    pub net: Mlp,
}

impl EncoderParams {
    pub fn init<R: Rng + ?Sized>(arch: EncoderArch, rng: &mut R) -> Result<Self> {
        let net = Mlp::init(arch.input_dim, arch.layers()?, rng)?;
        Ok(EncoderParams { arch, net })
    }

    pub fn from_params(arch: EncoderArch, params: Vec<f64>) -> Result<Self> {
        let mut net = Mlp::zeros(arch.input_dim, arch.layers()?)?;
        if params.len() != net.num_params() {
            return Err(Error::LengthMismatch {
                what: "encoder parameters",
                expected: net.num_params(),
                got: params.len(),
            });
        }
        net.params_mut().copy_from_slice(&params);
        Ok(EncoderParams { arch, net })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ProjectionParams {
    pub arch: ProjectionArch,
    pub net: Mlp,
}

impl ProjectionParams {
    pub fn init<R: Rng + ?Sized>(arch: ProjectionArch, rng: &mut R) -> Result<Self> {
        let net = Mlp::init(arch.input_dim, arch.layers()?, rng)?;
        Ok(ProjectionParams { arch, net })
    }

    pub fn from_params(arch: ProjectionArch, params: Vec<f64>) -> Result<Self> {
        let mut net = Mlp::zeros(arch.input_dim, arch.layers()?)?;
        if params.len() != net.num_params() {
            return Err(Error::LengthMismatch {
                what: "projection parameters",
                expected: net.num_params(),
                got: params.len(),
            });
        }
        net.params_mut().copy_from_slice(&params);
        Ok(ProjectionParams { arch, net })
    }
}

/// Maps observations to latent particles.
#[derive(Debug, Clone, PartialEq)]
pub enum Encoder {
    /// Latent = observation.
    Identity { dim: usize },
    /// Fixed Gaussian linear map scaled by `1/√input_dim`.
    RandomProjection {
        input_dim: usize,
        output_dim: usize,
        weights: Vec<f64>,
    },
    /// Contrastively trained network.
    Learned(EncoderParams),
}

impl Encoder {
    pub fn random_projection<R: Rng + ?Sized>(input_dim: usize, output_dim: usize, rng: &mut R) -> Result<Self> {
        if input_dim == 0 || output_dim == 0 {
            return Err(Error::InvalidArgument("random projection needs nonzero widths".into()));
        }
        let scale = 1.0 / (input_dim as f64).sqrt();
        let weights = (0..input_dim * output_dim)
            .map(|_| rng.sample::<f64, _>(StandardNormal) * scale)
            .collect();
        Ok(Encoder::RandomProjection {
            input_dim,
            output_dim,
            weights,
        })
    }

    pub fn input_dim(&self) -> usize {
        match self {
            Encoder::Identity { dim } => *dim,
            Encoder::RandomProjection { input_dim, .. } => *input_dim,
            Encoder::Learned(p) => p.arch.input_dim,
        }
    }

    pub fn latent_dim(&self) -> usize {
        match self {
            Encoder::Identity { dim } => *dim,
            Encoder::RandomProjection { output_dim, .. } => *output_dim,
            Encoder::Learned(p) => p.arch.latent_dim,
        }
    }

    pub fn learned(&self) -> Option<&EncoderParams> {
        match self {
            Encoder::Learned(p) => Some(p),
            _ => None,
        }
    }

    pub fn learned_mut(&mut self) -> Option<&mut EncoderParams> {
        match self {
            Encoder::Learned(p) => Some(p),
            _ => None,
        }
    }

    /// One latent per observation row.
    pub fn encode(&self, obs: &Matrix) -> Result<PointSet> {
        if obs.cols() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: obs.cols(),
            });
        }
        let latents = match self {
            Encoder::Identity { .. } => obs.clone(),
            Encoder::RandomProjection {
                input_dim,
                output_dim,
                weights,
            } => {
                let mut out = Matrix::zeros(obs.rows(), *output_dim);
                for r in 0..obs.rows() {
                    let x = obs.row(r);
                    for (o, y) in out.row_mut(r).iter_mut().enumerate() {
                        let w = &weights[o * input_dim..(o + 1) * input_dim];
                        *y = w.iter().zip(x).map(|(a, b)| a * b).sum();
                    }
                }
                out
            }
            Encoder::Learned(p) => p.net.forward(obs)?,
        };
        PointSet::new(self.latent_dim(), latents.into_data())
    }
}
