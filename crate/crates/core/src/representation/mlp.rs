//! A small feed-forward network with hand-written reverse-mode gradients.

use rand::Rng;

use crate::error::{Error, Result};

/// Variance floor inside layer normalization.
pub const LAYER_NORM_VAR_FLOOR: f64 = 1e-6;

/// Row-major dense matrix, one sample per row.
#[derive(Debug, Clone, PartialEq)]
pub struct Matrix {
    rows: usize,
    cols: usize,
    data: Vec<f64>,
}

impl Matrix {
    pub fn new(rows: usize, cols: usize, data: Vec<f64>) -> Result<Self> {
        if data.len() != rows * cols {
            return Err(Error::LengthMismatch {
                what: "matrix data",
                expected: rows * cols,
                got: data.len(),
            });
        }
        Ok(Matrix { rows, cols, data })
    }

    pub fn zeros(rows: usize, cols: usize) -> Self {
        Matrix {
            rows,
            cols,
            data: vec![0.0; rows * cols],
        }
    }

    pub fn from_rows<R: AsRef<[f64]>>(rows: &[R]) -> Result<Self> {
        let cols = rows.first().map_or(0, |r| r.as_ref().len());
        let mut data = Vec::with_capacity(rows.len() * cols);
        for r in rows {
            let r = r.as_ref();
            if r.len() != cols {
                return Err(Error::DimensionMismatch {
                    expected: cols,
                    got: r.len(),
                });
            }
            data.extend_from_slice(r);
        }
        Ok(Matrix {
            rows: rows.len(),
            cols,
            data,
        })
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn row_mut(&mut self, i: usize) -> &mut [f64] {
        &mut self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    pub fn data_mut(&mut self) -> &mut [f64] {
        &mut self.data
    }

    pub fn into_data(self) -> Vec<f64> {
        self.data
    }

    /// Rows of `self` followed by rows of `other`.
    pub fn vstack(&self, other: &Matrix) -> Result<Matrix> {
        if self.cols != other.cols {
            return Err(Error::DimensionMismatch {
                expected: self.cols,
                got: other.cols,
            });
        }
        let mut data = self.data.clone();
        data.extend_from_slice(&other.data);
        Matrix::new(self.rows + other.rows, self.cols, data)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Layer {
    /// `y = W x + b`, `W` stored row-major as `output × input`, then `b`.
    Dense { input: usize, output: usize },
    Elu,
    /// Per-sample normalization with learned gain and bias.
    LayerNorm { dim: usize },
    Tanh,
}

impl Layer {
    fn num_params(&self) -> usize {
        match *self {
            Layer::Dense { input, output } => output * input + output,
            Layer::LayerNorm { dim } => 2 * dim,
            Layer::Elu | Layer::Tanh => 0,
        }
    }
}

/// Per-layer values saved by the forward pass.
#[derive(Debug, Clone)]
pub struct Tape {
    inputs: Vec<Matrix>,
    outputs: Vec<Matrix>,
    ln_inv_std: Vec<Vec<f64>>,
}

/// Sequential network over a flat parameter vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Mlp {
    input_dim: usize,
    layers: Vec<Layer>,
    offsets: Vec<usize>,
    params: Vec<f64>,
}

fn elu(x: f64) -> f64 {
    if x > 0.0 {
        x
    } else {
        x.exp_m1()
    }
}

impl Mlp {
    /// Glorot-uniform dense weights, zero biases, unit layer-norm gains.
    pub fn init<R: Rng + ?Sized>(input_dim: usize, layers: Vec<Layer>, rng: &mut R) -> Result<Self> {
        let mut net = Mlp::zeros(input_dim, layers)?;
        for (layer, &off) in net.layers.iter().zip(&net.offsets) {
            match *layer {
                Layer::Dense { input, output } => {
                    let a = (6.0 / (input + output) as f64).sqrt();
                    for w in &mut net.params[off..off + input * output] {
                        *w = rng.random_range(-a..a);
                    }
                }
                Layer::LayerNorm { dim } => {
                    net.params[off..off + dim].fill(1.0);
                }
                _ => {}
            }
        }
        Ok(net)
    }

    pub fn zeros(input_dim: usize, layers: Vec<Layer>) -> Result<Self> {
        let mut width = input_dim;
        let mut offsets = Vec::with_capacity(layers.len());
        let mut total = 0;
        for layer in &layers {
            match *layer {
                Layer::Dense { input, output } => {
                    if input != width {
                        return Err(Error::DimensionMismatch {
                            expected: width,
                            got: input,
                        });
                    }
                    if output == 0 {
                        return Err(Error::InvalidArgument("zero-width layer".into()));
                    }
                    width = output;
                }
                Layer::LayerNorm { dim } if dim != width => {
                    return Err(Error::DimensionMismatch {
                        expected: width,
                        got: dim,
                    })
                }
                _ => {}
            }
            offsets.push(total);
            total += layer.num_params();
        }
        if input_dim == 0 {
            return Err(Error::InvalidArgument("zero input width".into()));
        }
        Ok(Mlp {
            input_dim,
            layers,
            offsets,
            params: vec![0.0; total],
        })
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn output_dim(&self) -> usize {
        self.layers
            .iter()
            .rev()
            .find_map(|l| match *l {
                Layer::Dense { output, .. } => Some(output),
                Layer::LayerNorm { dim } => Some(dim),
                _ => None,
            })
            .unwrap_or(self.input_dim)
    }

    pub fn layers(&self) -> &[Layer] {
        &self.layers
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn forward(&self, x: &Matrix) -> Result<Matrix> {
        Ok(self.forward_tape(x)?.0)
    }

    pub fn forward_tape(&self, x: &Matrix) -> Result<(Matrix, Tape)> {
        if x.cols() != self.input_dim {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim,
                got: x.cols(),
            });
        }
        let mut tape = Tape {
            inputs: Vec::with_capacity(self.layers.len()),
            outputs: Vec::with_capacity(self.layers.len()),
            ln_inv_std: Vec::new(),
        };
        let mut cur = x.clone();
        for (layer, &off) in self.layers.iter().zip(&self.offsets) {
            let next = match *layer {
                Layer::Dense { input, output } => {
                    let w = &self.params[off..off + input * output];
                    let b = &self.params[off + input * output..off + input * output + output];
                    let mut out = Matrix::zeros(cur.rows(), output);
                    for r in 0..cur.rows() {
                        let xr = cur.row(r);
                        for (o, y) in out.row_mut(r).iter_mut().enumerate() {
                            let wr = &w[o * input..(o + 1) * input];
                            *y = b[o] + wr.iter().zip(xr).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                    out
                }
                Layer::Elu => {
                    let mut out = cur.clone();
                    out.data_mut().iter_mut().for_each(|v| *v = elu(*v));
                    out
                }
                Layer::Tanh => {
                    let mut out = cur.clone();
                    out.data_mut().iter_mut().for_each(|v| *v = v.tanh());
                    out
                }
                Layer::LayerNorm { dim } => {
                    let gain = &self.params[off..off + dim];
                    let bias = &self.params[off + dim..off + 2 * dim];
                    let mut out = Matrix::zeros(cur.rows(), dim);
                    let mut inv = Vec::with_capacity(cur.rows());
                    for r in 0..cur.rows() {
                        let xr = cur.row(r);
                        let mean = xr.iter().sum::<f64>() / dim as f64;
                        let var = xr.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / dim as f64;
                        let inv_std = 1.0 / var.max(LAYER_NORM_VAR_FLOOR).sqrt();
                        for (j, y) in out.row_mut(r).iter_mut().enumerate() {
                            *y = gain[j] * (xr[j] - mean) * inv_std + bias[j];
                        }
                        inv.push(if var >= LAYER_NORM_VAR_FLOOR { inv_std } else { -inv_std });
                    }
                    tape.ln_inv_std.push(inv);
                    out
                }
            };
            tape.inputs.push(cur);
            cur = next;
            tape.outputs.push(cur.clone());
        }
        Ok((cur, tape))
    }

    /// Accumulates parameter gradients into `grad` and returns the gradient
    /// with respect to the network input.
    pub fn backward(&self, tape: &Tape, d_out: &Matrix, grad: &mut [f64]) -> Matrix {
        assert_eq!(grad.len(), self.params.len(), "gradient buffer shape");
        let mut d = d_out.clone();
        let mut ln_slot = tape.ln_inv_std.len();
        for (li, (layer, &off)) in self.layers.iter().zip(&self.offsets).enumerate().rev() {
            let x = &tape.inputs[li];
            d = match *layer {
                Layer::Dense { input, output } => {
                    let w = &self.params[off..off + input * output];
                    let mut dx = Matrix::zeros(x.rows(), input);
                    for r in 0..x.rows() {
                        let dy = d.row(r);
                        let xr = x.row(r);
                        for (o, &g) in dy.iter().enumerate() {
                            if g == 0.0 {
                                continue;
                            }
                            let gw = &mut grad[off + o * input..off + (o + 1) * input];
                            for (gwi, xi) in gw.iter_mut().zip(xr) {
                                *gwi += g * xi;
                            }
                            grad[off + input * output + o] += g;
                            let wr = &w[o * input..(o + 1) * input];
                            for (dxi, wi) in dx.row_mut(r).iter_mut().zip(wr) {
                                *dxi += g * wi;
                            }
                        }
                    }
                    dx
                }
                Layer::Elu => {
                    let y = &tape.outputs[li];
                    let mut dx = d.clone();
                    for ((g, xv), yv) in dx.data_mut().iter_mut().zip(x.data()).zip(y.data()) {
                        if *xv <= 0.0 {
                            *g *= yv + 1.0;
                        }
                    }
                    dx
                }
                Layer::Tanh => {
                    let y = &tape.outputs[li];
                    let mut dx = d.clone();
                    for (g, yv) in dx.data_mut().iter_mut().zip(y.data()) {
                        *g *= 1.0 - yv * yv;
                    }
                    dx
                }
                Layer::LayerNorm { dim } => {
                    ln_slot -= 1;
                    let inv_all = &tape.ln_inv_std[ln_slot];
                    let gain = &self.params[off..off + dim];
                    let mut dx = Matrix::zeros(x.rows(), dim);
                    let n = dim as f64;
                    for r in 0..x.rows() {
                        let xr = x.row(r);
                        let mean = xr.iter().sum::<f64>() / n;
                        // Sign marks whether the variance was above the floor.
                        let (inv, live_var) = (inv_all[r].abs(), inv_all[r] > 0.0);
                        let xhat: Vec<f64> = xr.iter().map(|v| (v - mean) * inv).collect();
                        let dy = d.row(r);
                        let dxhat: Vec<f64> = dy.iter().zip(gain).map(|(g, a)| g * a).collect();
                        for j in 0..dim {
                            grad[off + j] += dy[j] * xhat[j];
                            grad[off + dim + j] += dy[j];
                        }
                        let mean_dxhat = dxhat.iter().sum::<f64>() / n;
                        let mean_dxhat_xhat = if live_var {
                            dxhat.iter().zip(&xhat).map(|(a, b)| a * b).sum::<f64>() / n
                        } else {
                            0.0
                        };
                        for (j, out) in dx.row_mut(r).iter_mut().enumerate() {
                            *out = inv * (dxhat[j] - mean_dxhat - xhat[j] * mean_dxhat_xhat);
                        }
                    }
                    dx
                }
            };
        }
        d
    }
}
