//! Fully-connected layer with identity / sigmoid / PReLU / Dice activations
//! and a hand-written backward pass.

use rand::Rng;

use super::{sigmoid, Param, EPS};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Identity,
    Sigmoid,
    PRelu,
    /// Data-adaptive activation: `p = sigmoid((z - mean) / sqrt(var + eps))`,
    /// `out = p*z + (1-p)*alpha*z`. Batch statistics during training, running
    /// statistics (momentum 0.99) at inference.
    Dice,
}

#[derive(Debug, Clone)]
pub struct DenseLayer {
    pub in_dim: usize,
    pub out_dim: usize,
    pub activation: Activation,
    /// `[in_dim, out_dim]` row-major.
    pub weight: Param,
    pub bias: Param,
    /// PReLU slopes or Dice alphas (one per output unit); empty otherwise.
    pub act_param: Param,
    /// Dice running statistics (not trained, but checkpointed).
    pub running_mean: Vec<f64>,
    pub running_var: Vec<f64>,
    pub momentum: f64,
}

/// Intermediate state captured by [`DenseLayer::forward`] for the backward pass.
#[derive(Debug, Clone)]
pub struct DenseCache {
    batch: usize,
    mode: Mode,
    input: Vec<f64>,
    z: Vec<f64>,
    out: Vec<f64>,
    /// Dice batch mean/var per unit (train mode).
    mean: Vec<f64>,
    var: Vec<f64>,
    /// Dice gate `p` per `[batch, out]` entry.
    gate: Vec<f64>,
}

impl DenseLayer {
    /// Glorot-uniform weights, zero biases, PReLU slopes 0.25, Dice alphas 0.
    pub fn new<R: Rng>(
        in_dim: usize,
        out_dim: usize,
        activation: Activation,
        init_acc: f64,
        rng: &mut R,
    ) -> Result<Self> {
        if in_dim == 0 || out_dim == 0 {
            return Err(Error::config(format!(
                "dense layer dims must be positive, got {in_dim}x{out_dim}"
            )));
        }
        let bound = (6.0 / (in_dim + out_dim) as f64).sqrt();
        let weight = Param::uniform(in_dim * out_dim, bound, init_acc, rng);
        let bias = Param::zeros(out_dim, init_acc);
        let act_param = match activation {
            Activation::PRelu => Param::constant(out_dim, 0.25, init_acc),
            Activation::Dice => Param::zeros(out_dim, init_acc),
            _ => Param::new(Vec::new(), init_acc),
        };
        let (running_mean, running_var) = match activation {
            Activation::Dice => (vec![0.0; out_dim], vec![1.0; out_dim]),
            _ => (Vec::new(), Vec::new()),
        };
        Ok(DenseLayer {
            in_dim,
            out_dim,
            activation,
            weight,
            bias,
            act_param,
            running_mean,
            running_var,
            momentum: 0.99,
        })
    }

    pub fn forward(&mut self, input: &[f64], batch: usize, mode: Mode) -> Result<(Vec<f64>, DenseCache)> {
        if input.len() != batch * self.in_dim {
            return Err(Error::shape(format!(
                "dense forward: input len {} != batch {} * in_dim {}",
                input.len(),
                batch,
                self.in_dim
            )));
        }
        let (n_in, n_out) = (self.in_dim, self.out_dim);
        let mut z = vec![0.0; batch * n_out];
        for b in 0..batch {
            let row = &input[b * n_in..(b + 1) * n_in];
            let zrow = &mut z[b * n_out..(b + 1) * n_out];
            zrow.copy_from_slice(&self.bias.value);
            for (i, &x) in row.iter().enumerate() {
                if x == 0.0 {
                    continue;
                }
                let wrow = &self.weight.value[i * n_out..(i + 1) * n_out];
                for o in 0..n_out {
                    zrow[o] += x * wrow[o];
                }
            }
        }

        let mut cache = DenseCache {
            batch,
            mode,
            input: input.to_vec(),
            z: z.clone(),
            out: Vec::new(),
            mean: Vec::new(),
            var: Vec::new(),
            gate: Vec::new(),
        };

        let out = match self.activation {
            Activation::Identity => z,
            Activation::Sigmoid => z.iter().map(|&v| sigmoid(v)).collect(),
            Activation::PRelu => {
                let s = &self.act_param.value;
                let mut out = z;
                for b in 0..batch {
                    for o in 0..n_out {
                        let v = &mut out[b * n_out + o];
                        if *v < 0.0 {
                            *v *= s[o];
                        }
                    }
                }
                out
            }
            Activation::Dice => {
                let (mean, var) = match mode {
                    Mode::Train => {
                        let mut mean = vec![0.0; n_out];
                        let mut var = vec![0.0; n_out];
                        for b in 0..batch {
                            for o in 0..n_out {
                                mean[o] += cache.z[b * n_out + o];
                            }
                        }
                        mean.iter_mut().for_each(|m| *m /= batch as f64);
                        for b in 0..batch {
                            for o in 0..n_out {
                                let d = cache.z[b * n_out + o] - mean[o];
                                var[o] += d * d;
                            }
                        }
                        var.iter_mut().for_each(|v| *v /= batch as f64);
                        for o in 0..n_out {
                            self.running_mean[o] =
                                self.momentum * self.running_mean[o] + (1.0 - self.momentum) * mean[o];
                            self.running_var[o] =
                                self.momentum * self.running_var[o] + (1.0 - self.momentum) * var[o];
                        }
                        (mean, var)
                    }
                    Mode::Infer => (self.running_mean.clone(), self.running_var.clone()),
                };
                let alpha = &self.act_param.value;
                let mut gate = vec![0.0; batch * n_out];
                let mut out = vec![0.0; batch * n_out];
                for b in 0..batch {
                    for o in 0..n_out {
                        let idx = b * n_out + o;
                        let xhat = (cache.z[idx] - mean[o]) / (var[o] + EPS).sqrt();
                        let p = sigmoid(xhat);
                        gate[idx] = p;
                        out[idx] = cache.z[idx] * (alpha[o] + (1.0 - alpha[o]) * p);
                    }
                }
                cache.mean = mean;
                cache.var = var;
                cache.gate = gate;
                out
            }
        };
        cache.out = out.clone();
        Ok((out, cache))
    }

    /// Accumulates parameter gradients and returns `d_input`.
    pub fn backward(&mut self, cache: &DenseCache, d_out: &[f64]) -> Result<Vec<f64>> {
        let (batch, n_in, n_out) = (cache.batch, self.in_dim, self.out_dim);
        if d_out.len() != batch * n_out {
            return Err(Error::shape(format!(
                "dense backward: d_out len {} != batch {} * out_dim {}",
                d_out.len(),
                batch,
                n_out
            )));
        }

        // Activation backward: d_out -> d_z.
        let mut d_z = vec![0.0; batch * n_out];
        match self.activation {
            Activation::Identity => d_z.copy_from_slice(d_out),
            Activation::Sigmoid => {
                for idx in 0..batch * n_out {
                    let y = cache.out[idx];
                    d_z[idx] = d_out[idx] * y * (1.0 - y);
                }
            }
            Activation::PRelu => {
                let slopes = &self.act_param.value;
                for b in 0..batch {
                    for o in 0..n_out {
                        let idx = b * n_out + o;
                        let z = cache.z[idx];
                        if z > 0.0 {
                            d_z[idx] = d_out[idx];
                        } else {
                            d_z[idx] = d_out[idx] * slopes[o];
                            self.act_param.grad[o] += d_out[idx] * z;
                        }
                    }
                }
            }
            Activation::Dice => {
                let alpha = &self.act_param.value;
                let n = batch as f64;
                for o in 0..n_out {
                    let a = alpha[o];
                    // d wrt the gate input xhat, plus the direct z path.
                    let mut d_xhat = vec![0.0; batch];
                    for b in 0..batch {
                        let idx = b * n_out + o;
                        let g = d_out[idx];
                        let p = cache.gate[idx];
                        let z = cache.z[idx];
                        self.act_param.grad[o] += g * z * (1.0 - p);
                        d_z[idx] += g * (a + (1.0 - a) * p);
                        d_xhat[b] = g * z * (1.0 - a) * p * (1.0 - p);
                    }
                    match cache.mode {
                        Mode::Train => {
                            // Full backward through the batch statistics.
                            let mean = cache.mean[o];
                            let inv = 1.0 / (cache.var[o] + EPS).sqrt();
                            let mut d_var = 0.0;
                            let mut sum_centered = 0.0;
                            for b in 0..batch {
                                let zc = cache.z[b * n_out + o] - mean;
                                d_var += d_xhat[b] * zc * (-0.5) * inv * inv * inv;
                                sum_centered += zc;
                            }
                            let mut d_mean = 0.0;
                            for b in 0..batch {
                                d_mean -= d_xhat[b] * inv;
                            }
                            d_mean += d_var * (-2.0 / n) * sum_centered;
                            for b in 0..batch {
                                let idx = b * n_out + o;
                                let zc = cache.z[idx] - mean;
                                d_z[idx] += d_xhat[b] * inv + d_var * 2.0 * zc / n + d_mean / n;
                            }
                        }
                        Mode::Infer => {
                            let inv = 1.0 / (self.running_var[o] + EPS).sqrt();
                            for b in 0..batch {
                                d_z[b * n_out + o] += d_xhat[b] * inv;
                            }
                        }
                    }
                }
            }
        }

        // Linear backward.
        let mut d_input = vec![0.0; batch * n_in];
        for b in 0..batch {
            let x = &cache.input[b * n_in..(b + 1) * n_in];
            let dz = &d_z[b * n_out..(b + 1) * n_out];
            for o in 0..n_out {
                self.bias.grad[o] += dz[o];
            }
            for i in 0..n_in {
                let wrow = &self.weight.value[i * n_out..(i + 1) * n_out];
                let grow = &mut self.weight.grad[i * n_out..(i + 1) * n_out];
                let mut dx = 0.0;
                for o in 0..n_out {
                    grow[o] += x[i] * dz[o];
                    dx += wrow[o] * dz[o];
                }
                d_input[b * n_in + i] = dx;
            }
        }
        Ok(d_input)
    }

    pub fn zero_grad(&mut self) {
        self.weight.zero_grad();
        self.bias.zero_grad();
        self.act_param.zero_grad();
    }

    pub fn param_count(&self) -> usize {
        self.weight.len() + self.bias.len() + self.act_param.len()
    }
}
