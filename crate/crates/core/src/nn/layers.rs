//! Layer primitives with exact forward and backward passes.
//!
//! Shapes follow a channels-last convention: temporal feature maps are
//! `[N, L, C]`, flat features `[N, F]`. Backward passes accumulate parameter
//! gradients with `+=` so multiple calls compose; `zero_grads` resets them.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::gemm::{matmul, matmul_at, matmul_bt};
use crate::nn::tensor::Tensor;

/// Forward-pass mode: batch statistics vs. running statistics.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Infer,
}

/// A learnable tensor paired with its gradient accumulator.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Param {
    pub value: Tensor,
    #[serde(skip)]
    pub grad: Tensor,
}

impl Param {
    pub fn new(value: Tensor) -> Param {
        let grad = Tensor::zeros(value.shape());
        Param { value, grad }
    }

    /// Re-allocates the gradient after deserialization (grads are not stored).
    pub fn reset_runtime_state(&mut self) {
        self.grad = Tensor::zeros(self.value.shape());
    }
}

/// 1-D convolution with zero "same" padding over the temporal axis.
///
/// Weights are `[kernel, in_ch, out_ch]`; for even kernels the extra pad
/// column goes on the left. Implemented as im2col + GEMM; the column buffer
/// from the last forward is kept for the backward pass.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Conv1d {
    pub kernel: usize,
    pub in_ch: usize,
    pub out_ch: usize,
    pub weight: Param,
    pub bias: Param,
    #[serde(skip)]
    col: Vec<f64>,
}

impl Conv1d {
    pub fn new(kernel: usize, in_ch: usize, out_ch: usize, weight: Tensor, bias: Tensor) -> Conv1d {
        debug_assert_eq!(weight.shape(), &[kernel, in_ch, out_ch]);
        debug_assert_eq!(bias.shape(), &[out_ch]);
        Conv1d {
            kernel,
            in_ch,
            out_ch,
            weight: Param::new(weight),
            bias: Param::new(bias),
            col: Vec::new(),
        }
    }

    /// Left padding: `ceil((kernel - 1) / 2)`.
    fn pad_left(&self) -> usize {
        self.kernel / 2
    }

    fn fill_col(&mut self, x: &Tensor) {
        let (batch, len) = (x.shape()[0], x.shape()[1]);
        let cin = self.in_ch;
        let pad_left = self.pad_left() as isize;
        let row_w = self.kernel * cin;
        self.col.clear();
        self.col.resize(batch * len * row_w, 0.0);
        let xd = x.data();
        for n in 0..batch {
            for t in 0..len {
                let row = (n * len + t) * row_w;
                for tap in 0..self.kernel {
                    let src = t as isize + tap as isize - pad_left;
                    if src >= 0 && (src as usize) < len {
                        let src_off = (n * len + src as usize) * cin;
                        let dst_off = row + tap * cin;
                        self.col[dst_off..dst_off + cin]
                            .copy_from_slice(&xd[src_off..src_off + cin]);
                    }
                }
            }
        }
    }

    pub fn forward(&mut self, x: &Tensor) -> Result<Tensor> {
        if x.shape().len() != 3 || x.shape()[2] != self.in_ch {
            return Err(Error::Shape(format!(
                "conv1d expects [N, L, {}], got {:?}",
                self.in_ch,
                x.shape()
            )));
        }
        let (batch, len) = (x.shape()[0], x.shape()[1]);
        self.fill_col(x);
        let rows = batch * len;
        let mut out = Tensor::zeros(&[batch, len, self.out_ch]);
        matmul(
            rows,
            self.kernel * self.in_ch,
            self.out_ch,
            &self.col,
            self.weight.value.data(),
            0.0,
            out.data_mut(),
        );
        let bias = self.bias.value.data();
        for row in out.data_mut().chunks_exact_mut(self.out_ch) {
            for (o, b) in row.iter_mut().zip(bias) {
                *o += b;
            }
        }
        Ok(out)
    }

    /// Consumes the cached column buffer from the preceding forward call.
    pub fn backward(&mut self, x: &Tensor, d_out: &Tensor) -> Tensor {
        let (batch, len) = (x.shape()[0], x.shape()[1]);
        let rows = batch * len;
        let kcin = self.kernel * self.in_ch;
        debug_assert_eq!(self.col.len(), rows * kcin);

        // d_bias[o] += sum over rows of d_out.
        let db = self.bias.grad.data_mut();
        for row in d_out.data().chunks_exact(self.out_ch) {
            for (g, d) in db.iter_mut().zip(row) {
                *g += d;
            }
        }

        // d_weight += col^T x d_out.
        matmul_at(
            kcin,
            rows,
            self.out_ch,
            &self.col,
            d_out.data(),
            1.0,
            self.weight.grad.data_mut(),
        );

        // d_col = d_out x weight^T, then scatter back onto the input.
        let mut d_col = vec![0.0; rows * kcin];
        matmul_bt(
            rows,
            self.out_ch,
            kcin,
            d_out.data(),
            self.weight.value.data(),
            0.0,
            &mut d_col,
        );

        let mut d_x = Tensor::zeros(x.shape());
        let dxd = d_x.data_mut();
        let cin = self.in_ch;
        let pad_left = self.pad_left() as isize;
        for n in 0..batch {
            for t in 0..len {
                let row = (n * len + t) * kcin;
                for tap in 0..self.kernel {
                    let src = t as isize + tap as isize - pad_left;
                    if src >= 0 && (src as usize) < len {
                        let dst_off = (n * len + src as usize) * cin;
                        let src_off = row + tap * cin;
                        for i in 0..cin {
                            dxd[dst_off + i] += d_col[src_off + i];
                        }
                    }
                }
            }
        }
        d_x
    }

    pub fn reset_runtime_state(&mut self) {
        self.weight.reset_runtime_state();
        self.bias.reset_runtime_state();
        self.col.clear();
    }
}

/// Per-channel batch normalization over all leading axes.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BatchNorm {
    pub channels: usize,
    pub gamma: Param,
    pub beta: Param,
    pub running_mean: Tensor,
    pub running_var: Tensor,
    pub eps: f64,
    pub momentum: f64,
    #[serde(skip)]
    cache: BnCache,
}

#[derive(Clone, Debug, Default)]
struct BnCache {
    xhat: Vec<f64>,
    inv_std: Vec<f64>,
    mode: Option<Mode>,
}

impl BatchNorm {
    pub const DEFAULT_EPS: f64 = 1e-3;
    pub const DEFAULT_MOMENTUM: f64 = 0.99;

    pub fn new(channels: usize) -> BatchNorm {
        BatchNorm {
            channels,
            gamma: Param::new(Tensor::filled(&[channels], 1.0)),
            beta: Param::new(Tensor::zeros(&[channels])),
            running_mean: Tensor::zeros(&[channels]),
            running_var: Tensor::filled(&[channels], 1.0),
            eps: Self::DEFAULT_EPS,
            momentum: Self::DEFAULT_MOMENTUM,
            cache: BnCache::default(),
        }
    }

    pub fn with_eps(mut self, eps: f64) -> BatchNorm {
        self.eps = eps;
        self
    }

    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<Tensor> {
        let c = self.channels;
        if x.channels() != c {
            return Err(Error::Shape(format!(
                "batch norm expects {} channels, got {:?}",
                c,
                x.shape()
            )));
        }
        let count = x.numel() / c;
        if count == 0 {
            return Err(Error::Shape("batch norm on an empty tensor".into()));
        }

        let (mean, var) = match mode {
            Mode::Train => {
                let mut mean = vec![0.0; c];
                let mut var = vec![0.0; c];
                for row in x.data().chunks_exact(c) {
                    for (m, v) in mean.iter_mut().zip(row) {
                        *m += v;
                    }
                }
                for m in &mut mean {
                    *m /= count as f64;
                }
                for row in x.data().chunks_exact(c) {
                    for ((vv, v), m) in var.iter_mut().zip(row).zip(&mean) {
                        let d = v - m;
                        *vv += d * d;
                    }
                }
                for v in &mut var {
                    *v /= count as f64;
                }
                let m = self.momentum;
                for (run, batch) in self.running_mean.data_mut().iter_mut().zip(&mean) {
                    *run = m * *run + (1.0 - m) * batch;
                }
                for (run, batch) in self.running_var.data_mut().iter_mut().zip(&var) {
                    *run = m * *run + (1.0 - m) * batch;
                }
                (mean, var)
            }
            Mode::Infer => (
                self.running_mean.data().to_vec(),
                self.running_var.data().to_vec(),
            ),
        };

        let inv_std: Vec<f64> = var.iter().map(|&v| 1.0 / (v + self.eps).sqrt()).collect();
        let mut out = Tensor::zeros(x.shape());
        let mut xhat = vec![0.0; x.numel()];
        let gamma = self.gamma.value.data();
        let beta = self.beta.value.data();
        for (row_idx, (row, out_row)) in x
            .data()
            .chunks_exact(c)
            .zip(out.data_mut().chunks_exact_mut(c))
            .enumerate()
        {
            let xh = &mut xhat[row_idx * c..(row_idx + 1) * c];
            for i in 0..c {
                let h = (row[i] - mean[i]) * inv_std[i];
                xh[i] = h;
                out_row[i] = gamma[i] * h + beta[i];
            }
        }
        self.cache = BnCache {
            xhat,
            inv_std,
            mode: Some(mode),
        };
        Ok(out)
    }

    pub fn backward(&mut self, x: &Tensor, d_out: &Tensor) -> Tensor {
        let c = self.channels;
        let count = x.numel() / c;
        let mode = self.cache.mode.expect("backward before forward");
        let xhat = &self.cache.xhat;
        let inv_std = &self.cache.inv_std;
        let gamma = self.gamma.value.data();

        let mut d_gamma = vec![0.0; c];
        let mut d_beta = vec![0.0; c];
        for (row_idx, row) in d_out.data().chunks_exact(c).enumerate() {
            let xh = &xhat[row_idx * c..(row_idx + 1) * c];
            for i in 0..c {
                d_gamma[i] += row[i] * xh[i];
                d_beta[i] += row[i];
            }
        }
        for (g, d) in self.gamma.grad.data_mut().iter_mut().zip(&d_gamma) {
            *g += d;
        }
        for (g, d) in self.beta.grad.data_mut().iter_mut().zip(&d_beta) {
            *g += d;
        }

        let mut d_x = Tensor::zeros(x.shape());
        match mode {
            Mode::Train => {
                // d_x = gamma * inv_std / count
                //       * (count * d_out - sum(d_out) - xhat * sum(d_out * xhat))
                let n = count as f64;
                for (row_idx, (d_row, dx_row)) in d_out
                    .data()
                    .chunks_exact(c)
                    .zip(d_x.data_mut().chunks_exact_mut(c))
                    .enumerate()
                {
                    let xh = &xhat[row_idx * c..(row_idx + 1) * c];
                    for i in 0..c {
                        dx_row[i] = gamma[i] * inv_std[i] / n
                            * (n * d_row[i] - d_beta[i] - xh[i] * d_gamma[i]);
                    }
                }
            }
            Mode::Infer => {
                for (d_row, dx_row) in d_out
                    .data()
                    .chunks_exact(c)
                    .zip(d_x.data_mut().chunks_exact_mut(c))
                {
                    for i in 0..c {
                        dx_row[i] = d_row[i] * gamma[i] * inv_std[i];
                    }
                }
            }
        }
        d_x
    }

    pub fn reset_runtime_state(&mut self) {
        self.gamma.reset_runtime_state();
        self.beta.reset_runtime_state();
        self.cache = BnCache::default();
    }
}

/// Fully connected affine layer on `[N, in]`.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Dense {
    pub in_dim: usize,
    pub out_dim: usize,
    pub weight: Param,
    pub bias: Param,
}

impl Dense {
    pub fn new(in_dim: usize, out_dim: usize, weight: Tensor, bias: Tensor) -> Dense {
        debug_assert_eq!(weight.shape(), &[in_dim, out_dim]);
        Dense {
            in_dim,
            out_dim,
            weight: Param::new(weight),
            bias: Param::new(bias),
        }
    }

    pub fn forward(&self, x: &Tensor) -> Result<Tensor> {
        if x.shape().len() != 2 || x.shape()[1] != self.in_dim {
            return Err(Error::Shape(format!(
                "dense expects [N, {}], got {:?}",
                self.in_dim,
                x.shape()
            )));
        }
        let n = x.shape()[0];
        let mut out = Tensor::zeros(&[n, self.out_dim]);
        matmul(
            n,
            self.in_dim,
            self.out_dim,
            x.data(),
            self.weight.value.data(),
            0.0,
            out.data_mut(),
        );
        let bias = self.bias.value.data();
        for row in out.data_mut().chunks_exact_mut(self.out_dim) {
            for (o, b) in row.iter_mut().zip(bias) {
                *o += b;
            }
        }
        Ok(out)
    }

    pub fn backward(&mut self, x: &Tensor, d_out: &Tensor) -> Tensor {
        let n = x.shape()[0];
        matmul_at(
            self.in_dim,
            n,
            self.out_dim,
            x.data(),
            d_out.data(),
            1.0,
            self.weight.grad.data_mut(),
        );
        let db = self.bias.grad.data_mut();
        for row in d_out.data().chunks_exact(self.out_dim) {
            for (g, d) in db.iter_mut().zip(row) {
                *g += d;
            }
        }
        let mut d_x = Tensor::zeros(x.shape());
        matmul_bt(
            n,
            self.out_dim,
            self.in_dim,
            d_out.data(),
            self.weight.value.data(),
            0.0,
            d_x.data_mut(),
        );
        d_x
    }

    pub fn reset_runtime_state(&mut self) {
        self.weight.reset_runtime_state();
        self.bias.reset_runtime_state();
    }
}

/// Elementwise rectifier.
pub fn relu_forward(x: &Tensor) -> Tensor {
    let mut out = x.clone();
    for v in out.data_mut() {
        if *v < 0.0 {
            *v = 0.0;
        }
    }
    out
}

/// Masks the upstream gradient by the forward output's support.
pub fn relu_backward(output: &Tensor, d_out: &Tensor) -> Tensor {
    let mut d_x = d_out.clone();
    for (g, &y) in d_x.data_mut().iter_mut().zip(output.data()) {
        if y <= 0.0 {
            *g = 0.0;
        }
    }
    d_x
}

/// Global average pooling `[N, L, C] -> [N, C]`.
pub fn gap_forward(x: &Tensor) -> Result<Tensor> {
    if x.shape().len() != 3 {
        return Err(Error::Shape(format!("gap expects [N, L, C], got {:?}", x.shape())));
    }
    let (n, l, c) = (x.shape()[0], x.shape()[1], x.shape()[2]);
    let mut out = Tensor::zeros(&[n, c]);
    let od = out.data_mut();
    for ni in 0..n {
        for t in 0..l {
            let row = &x.data()[(ni * l + t) * c..(ni * l + t + 1) * c];
            for i in 0..c {
                od[ni * c + i] += row[i];
            }
        }
    }
    for v in od.iter_mut() {
        *v /= l as f64;
    }
    Ok(out)
}

/// Spreads each channel gradient uniformly over the temporal axis.
pub fn gap_backward(input_shape: &[usize], d_out: &Tensor) -> Tensor {
    let (n, l, c) = (input_shape[0], input_shape[1], input_shape[2]);
    let mut d_x = Tensor::zeros(input_shape);
    let dd = d_x.data_mut();
    for ni in 0..n {
        let g = &d_out.data()[ni * c..(ni + 1) * c];
        for t in 0..l {
            for i in 0..c {
                dd[(ni * l + t) * c + i] = g[i] / l as f64;
            }
        }
    }
    d_x
}

/// Elementwise sum of two same-shape tensors.
pub fn add_forward(a: &Tensor, b: &Tensor) -> Result<Tensor> {
    if a.shape() != b.shape() {
        return Err(Error::Shape(format!(
            "residual add shapes differ: {:?} vs {:?}",
            a.shape(),
            b.shape()
        )));
    }
    let mut out = a.clone();
    out.add_assign(b);
    Ok(out)
}

/// Row-wise softmax over the last axis of `[N, C]`.
pub fn softmax_forward(x: &Tensor) -> Tensor {
    let c = x.channels();
    let mut out = x.clone();
    for row in out.data_mut().chunks_exact_mut(c) {
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let mut sum = 0.0;
        for v in row.iter_mut() {
            *v = (*v - max).exp();
            sum += *v;
        }
        for v in row.iter_mut() {
            *v /= sum;
        }
    }
    out
}

/// `d_z = p * (g - <g, p>)` per row, with `p` the cached softmax output.
pub fn softmax_backward(output: &Tensor, d_out: &Tensor) -> Tensor {
    let c = output.channels();
    let mut d_x = Tensor::zeros(output.shape());
    for ((p_row, g_row), dx_row) in output
        .data()
        .chunks_exact(c)
        .zip(d_out.data().chunks_exact(c))
        .zip(d_x.data_mut().chunks_exact_mut(c))
    {
        let dot: f64 = p_row.iter().zip(g_row).map(|(p, g)| p * g).sum();
        for i in 0..c {
            dx_row[i] = p_row[i] * (g_row[i] - dot);
        }
    }
    d_x
}
