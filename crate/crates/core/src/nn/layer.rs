use serde::{Deserialize, Serialize};

use super::Tensor;
use crate::error::{Error, Result};

/// One stage of a feed-forward stack.
///
/// Convolutions take `[channels, length]` inputs and compute a
/// cross-correlation (no kernel flip). Dense layers flatten whatever they
/// receive. Softmax normalizes over all elements.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LayerSpec {
    Conv1d {
        in_channels: usize,
        out_channels: usize,
        kernel_len: usize,
        stride: usize,
    },
    Dense {
        in_dim: usize,
        out_dim: usize,
    },
    Relu,
    LeakyRelu {
        slope: f64,
    },
    Softmax,
}

impl LayerSpec {
    pub fn kind_name(&self) -> &'static str {
        match self {
            LayerSpec::Conv1d { .. } => "conv1d",
            LayerSpec::Dense { .. } => "dense",
            LayerSpec::Relu => "relu",
            LayerSpec::LeakyRelu { .. } => "leaky_relu",
            LayerSpec::Softmax => "softmax",
        }
    }

    pub fn has_params(&self) -> bool {
        matches!(self, LayerSpec::Conv1d { .. } | LayerSpec::Dense { .. })
    }

    /// Weight and bias shapes, empty for parameter-free layers.
    pub fn param_shapes(&self) -> Vec<Vec<usize>> {
        match *self {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel_len,
                ..
            } => vec![vec![out_channels, in_channels, kernel_len], vec![out_channels]],
            LayerSpec::Dense { in_dim, out_dim } => vec![vec![out_dim, in_dim], vec![out_dim]],
            _ => Vec::new(),
        }
    }

    /// (fan_in, fan_out) used for weight initialization.
    pub(crate) fn fans(&self) -> (usize, usize) {
        match *self {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel_len,
                ..
            } => (in_channels * kernel_len, out_channels * kernel_len),
            LayerSpec::Dense { in_dim, out_dim } => (in_dim, out_dim),
            _ => (0, 0),
        }
    }

    pub(crate) fn validate(&self, index: usize) -> Result<()> {
        let bad = |message: &str| Error::Layer {
            index,
            kind: self.kind_name(),
            message: message.to_string(),
        };
        match *self {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel_len,
                stride,
            } => {
                if in_channels == 0 || out_channels == 0 || kernel_len == 0 || stride == 0 {
                    return Err(bad("all conv parameters must be positive"));
                }
            }
            LayerSpec::Dense { in_dim, out_dim } => {
                if in_dim == 0 || out_dim == 0 {
                    return Err(bad("dense dims must be positive"));
                }
            }
            LayerSpec::LeakyRelu { slope } => {
                if !slope.is_finite() {
                    return Err(bad("slope must be finite"));
                }
            }
            LayerSpec::Relu | LayerSpec::Softmax => {}
        }
        Ok(())
    }

    /// Output shape for a given input shape, or an error naming this layer.
    pub fn output_shape(&self, index: usize, input: &[usize]) -> Result<Vec<usize>> {
        let err = |message: String| Error::Layer {
            index,
            kind: self.kind_name(),
            message,
        };
        match *self {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel_len,
                stride,
            } => {
                if input.len() != 2 || input[0] != in_channels {
                    return Err(err(format!(
                        "expected input [{in_channels}, length], got {input:?}"
                    )));
                }
                if input[1] < kernel_len {
                    return Err(err(format!(
                        "input length {} shorter than kernel {kernel_len}",
                        input[1]
                    )));
                }
                Ok(vec![out_channels, (input[1] - kernel_len) / stride + 1])
            }
            LayerSpec::Dense { in_dim, out_dim } => {
                let n: usize = input.iter().product();
                if n != in_dim {
                    return Err(err(format!(
                        "expected {in_dim} inputs, got {n} (shape {input:?})"
                    )));
                }
                Ok(vec![out_dim])
            }
            LayerSpec::Relu | LayerSpec::LeakyRelu { .. } | LayerSpec::Softmax => Ok(input.to_vec()),
        }
    }

    /// Forward pass. `params` holds `[weight, bias]` for parametric layers.
    pub(crate) fn forward(&self, params: &[Tensor], x: &Tensor, out_shape: Vec<usize>) -> Tensor {
        match *self {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel_len,
                stride,
            } => {
                let (w, b) = (params[0].data(), params[1].data());
                let len_in = x.shape()[1];
                let len_out = out_shape[1];
                let xd = x.data();
                let mut y = vec![0.0; out_channels * len_out];
                for o in 0..out_channels {
                    let row = &mut y[o * len_out..(o + 1) * len_out];
                    row.iter_mut().for_each(|v| *v = b[o]);
                    for c in 0..in_channels {
                        let kern = &w[(o * in_channels + c) * kernel_len..][..kernel_len];
                        let xin = &xd[c * len_in..(c + 1) * len_in];
                        for (t, acc) in row.iter_mut().enumerate() {
                            let seg = &xin[t * stride..t * stride + kernel_len];
                            *acc += kern.iter().zip(seg).map(|(a, b)| a * b).sum::<f64>();
                        }
                    }
                }
                Tensor::from_parts(out_shape, y)
            }
            LayerSpec::Dense { in_dim, out_dim } => {
                let (w, b) = (params[0].data(), params[1].data());
                let xd = x.data();
                let y = (0..out_dim)
                    .map(|o| {
                        b[o] + w[o * in_dim..(o + 1) * in_dim]
                            .iter()
                            .zip(xd)
                            .map(|(a, b)| a * b)
                            .sum::<f64>()
                    })
                    .collect();
                Tensor::from_parts(out_shape, y)
            }
            LayerSpec::Relu => map(x, |v| v.max(0.0)),
            LayerSpec::LeakyRelu { slope } => map(x, |v| if v > 0.0 { v } else { slope * v }),
            LayerSpec::Softmax => Tensor::from_parts(out_shape, softmax(x.data())),
        }
    }

    /// Backward pass: accumulates parameter gradients into `grads` and
    /// returns the gradient with respect to the layer input `x`.
    pub(crate) fn backward(
        &self,
        params: &[Tensor],
        x: &Tensor,
        grad_out: &Tensor,
        grads: &mut [Tensor],
    ) -> Tensor {
        match *self {
            LayerSpec::Conv1d {
                in_channels,
                out_channels,
                kernel_len,
                stride,
            } => {
                let w = params[0].data();
                let len_in = x.shape()[1];
                let len_out = grad_out.shape()[1];
                let (xd, g) = (x.data(), grad_out.data());
                let mut dx = vec![0.0; in_channels * len_in];
                let (gw, gb) = grads.split_at_mut(1);
                let (gw, gb) = (gw[0].data_mut(), gb[0].data_mut());
                for o in 0..out_channels {
                    let grow = &g[o * len_out..(o + 1) * len_out];
                    gb[o] += grow.iter().sum::<f64>();
                    for c in 0..in_channels {
                        let base = (o * in_channels + c) * kernel_len;
                        let kern = &w[base..base + kernel_len];
                        let gk = &mut gw[base..base + kernel_len];
                        let xin = &xd[c * len_in..(c + 1) * len_in];
                        let dxin = &mut dx[c * len_in..(c + 1) * len_in];
                        for (t, &gt) in grow.iter().enumerate() {
                            if gt == 0.0 {
                                continue;
                            }
                            let start = t * stride;
                            let seg = &xin[start..start + kernel_len];
                            for (acc, &xv) in gk.iter_mut().zip(seg) {
                                *acc += gt * xv;
                            }
                            let dseg = &mut dxin[start..start + kernel_len];
                            for (acc, &kv) in dseg.iter_mut().zip(kern) {
                                *acc += gt * kv;
                            }
                        }
                    }
                }
                Tensor::from_parts(x.shape().to_vec(), dx)
            }
            LayerSpec::Dense { in_dim, out_dim } => {
                let w = params[0].data();
                let (xd, g) = (x.data(), grad_out.data());
                let mut dx = vec![0.0; in_dim];
                let (gw, gb) = grads.split_at_mut(1);
                let (gw, gb) = (gw[0].data_mut(), gb[0].data_mut());
                for o in 0..out_dim {
                    let go = g[o];
                    gb[o] += go;
                    if go == 0.0 {
                        continue;
                    }
                    let wrow = &w[o * in_dim..(o + 1) * in_dim];
                    let gwrow = &mut gw[o * in_dim..(o + 1) * in_dim];
                    for i in 0..in_dim {
                        gwrow[i] += go * xd[i];
                        dx[i] += go * wrow[i];
                    }
                }
                Tensor::from_parts(x.shape().to_vec(), dx)
            }
            LayerSpec::Relu => zip_map(x, grad_out, |v, g| if v > 0.0 { g } else { 0.0 }),
            LayerSpec::LeakyRelu { slope } => {
                zip_map(x, grad_out, |v, g| if v > 0.0 { g } else { slope * g })
            }
            LayerSpec::Softmax => {
                let y = softmax(x.data());
                let g = grad_out.data();
                let dot: f64 = y.iter().zip(g).map(|(a, b)| a * b).sum();
                let dx = y.iter().zip(g).map(|(yi, gi)| yi * (gi - dot)).collect();
                Tensor::from_parts(x.shape().to_vec(), dx)
            }
        }
    }
}

/// Numerically stable softmax (max subtraction).
pub fn softmax(x: &[f64]) -> Vec<f64> {
    let max = x.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = x.iter().map(|v| (v - max).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / sum).collect()
}

fn map(x: &Tensor, f: impl Fn(f64) -> f64) -> Tensor {
    Tensor::from_parts(x.shape().to_vec(), x.data().iter().map(|&v| f(v)).collect())
}

fn zip_map(x: &Tensor, g: &Tensor, f: impl Fn(f64, f64) -> f64) -> Tensor {
    Tensor::from_parts(
        x.shape().to_vec(),
        x.data().iter().zip(g.data()).map(|(&v, &gv)| f(v, gv)).collect(),
    )
}
