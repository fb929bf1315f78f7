//! Parameterized building blocks over a [`ParamStore`].

use rand::Rng;
use rand_distr::{Distribution, Uniform};

use crate::error::Result;
use crate::graph::Var;
use crate::params::{Binding, ParamId, ParamStore};
use crate::tensor::Tensor;

/// Uniform(-a, a) with a = sqrt(6 / (fan_in + fan_out)).
pub fn xavier_uniform(shape: &[usize], fan_in: usize, fan_out: usize, rng: &mut impl Rng) -> Tensor {
    let a = (6.0 / (fan_in + fan_out) as f64).sqrt();
    uniform(shape, a, rng)
}

pub fn uniform(shape: &[usize], bound: f64, rng: &mut impl Rng) -> Tensor {
    let n: usize = shape.iter().product();
    let dist = Uniform::new_inclusive(-bound, bound).expect("finite bound");
    Tensor::new(shape, (0..n).map(|_| dist.sample(rng)).collect()).expect("length matches shape")
}

/// `y = x @ w + b` over the last axis; `w` is `[in, out]`.
#[derive(Debug, Clone)]
pub struct Linear {
    pub w: ParamId,
    pub b: Option<ParamId>,
}

impl Linear {
    pub fn new(store: &mut ParamStore, name: &str, d_in: usize, d_out: usize, bias: bool, rng: &mut impl Rng) -> Self {
        let w = store.add(format!("{name}.w"), xavier_uniform(&[d_in, d_out], d_in, d_out, rng));
        let b = bias.then(|| store.add(format!("{name}.b"), Tensor::zeros(&[d_out])));
        Self { w, b }
    }

    pub fn forward<'g>(&self, p: &Binding<'g>, x: Var<'g>) -> Result<Var<'g>> {
        let y = x.matmul(p.var(self.w))?;
        match self.b {
            Some(b) => y.add(p.var(b)),
            None => Ok(y),
        }
    }
}

/// Layer normalization over the last axis with learned gain and bias.
#[derive(Debug, Clone)]
pub struct LayerNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub eps: f64,
}

impl LayerNorm {
    pub fn new(store: &mut ParamStore, name: &str, dim: usize) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), Tensor::full(&[dim], 1.0)),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[dim])),
            eps: 1e-5,
        }
    }

    pub fn forward<'g>(&self, p: &Binding<'g>, x: Var<'g>) -> Result<Var<'g>> {
        x.layer_norm(self.eps).mul(p.var(self.gain))?.add(p.var(self.bias))
    }
}

/// Batch normalization over a channel axis with running statistics.
#[derive(Debug, Clone)]
pub struct BatchNorm {
    pub gain: ParamId,
    pub bias: ParamId,
    pub running_mean: ParamId,
    pub running_var: ParamId,
    /// Channel axis of the input.
    pub axis: usize,
    pub momentum: f64,
    pub eps: f64,
}

impl BatchNorm {
    pub fn new(store: &mut ParamStore, name: &str, channels: usize, axis: usize) -> Self {
        Self {
            gain: store.add(format!("{name}.gain"), Tensor::full(&[channels], 1.0)),
            bias: store.add(format!("{name}.bias"), Tensor::zeros(&[channels])),
            running_mean: store.add_buffer(format!("{name}.running_mean"), Tensor::zeros(&[channels])),
            running_var: store.add_buffer(format!("{name}.running_var"), Tensor::full(&[channels], 1.0)),
            axis,
            momentum: 0.1,
            eps: 1e-5,
        }
    }

    /// Shape `[C, 1, ..]` that broadcasts per-channel values against the input.
    fn channel_shape(&self, rank: usize, channels: usize) -> Vec<usize> {
        let mut s = vec![channels];
        s.extend(std::iter::repeat_n(1, rank - self.axis - 1));
        s
    }

    pub fn forward<'g>(&self, p: &Binding<'g>, x: Var<'g>, train: bool) -> Result<Var<'g>> {
        let shape = x.shape();
        let channels = shape[self.axis];
        let cs = self.channel_shape(shape.len(), channels);
        let normalized = if train {
            let (y, mean, var) = x.batch_norm_train(self.axis, self.eps)?;
            let m = self.momentum;
            let blend = |id: ParamId, batch: &[f64]| {
                let old = p.var(id).value();
                let data = old
                    .data()
                    .iter()
                    .zip(batch)
                    .map(|(o, b)| (1.0 - m) * o + m * b)
                    .collect();
                Tensor::new(&[channels], data).expect("channel count")
            };
            p.update_buffer(self.running_mean, blend(self.running_mean, &mean));
            p.update_buffer(self.running_var, blend(self.running_var, &var));
            y
        } else {
            let g = x.graph();
            let mean = p.var(self.running_mean).value().reshaped(&cs)?;
            let inv: Vec<f64> = p
                .var(self.running_var)
                .value()
                .data()
                .iter()
                .map(|v| 1.0 / (v + self.eps).sqrt())
                .collect();
            let inv = Tensor::new(&cs, inv)?;
            x.sub(g.constant(mean))?.mul(g.constant(inv))?
        };
        let gain = p.var(self.gain).reshape(&cs)?;
        let bias = p.var(self.bias).reshape(&cs)?;
        normalized.mul(gain)?.add(bias)
    }
}

/// 1-D convolution over `[batch, channels, length]`.
#[derive(Debug, Clone)]
pub struct Conv1d {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: usize,
    pub padding: usize,
}

impl Conv1d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: usize,
        stride: usize,
        padding: usize,
        rng: &mut impl Rng,
    ) -> Self {
        let w = xavier_uniform(&[c_out, c_in, kernel], c_in * kernel, c_out * kernel, rng);
        Self {
            w: store.add(format!("{name}.w"), w),
            b: store.add(format!("{name}.b"), Tensor::zeros(&[c_out])),
            stride,
            padding,
        }
    }

    pub fn forward<'g>(&self, p: &Binding<'g>, x: Var<'g>) -> Result<Var<'g>> {
        let y = x.conv1d(p.var(self.w), self.stride, self.padding)?;
        let c = y.shape()[1];
        y.add(p.var(self.b).reshape(&[c, 1])?)
    }
}

/// 2-D convolution over `[batch, channels, height, width]`.
#[derive(Debug, Clone)]
pub struct Conv2d {
    pub w: ParamId,
    pub b: ParamId,
    pub stride: (usize, usize),
    pub padding: (usize, usize),
}

impl Conv2d {
    #[allow(clippy::too_many_arguments)]
    pub fn new(
        store: &mut ParamStore,
        name: &str,
        c_in: usize,
        c_out: usize,
        kernel: (usize, usize),
        stride: (usize, usize),
        padding: (usize, usize),
        rng: &mut impl Rng,
    ) -> Self {
        let area = kernel.0 * kernel.1;
        let w = xavier_uniform(&[c_out, c_in, kernel.0, kernel.1], c_in * area, c_out * area, rng);
        Self {
            w: store.add(format!("{name}.w"), w),
            b: store.add(format!("{name}.b"), Tensor::zeros(&[c_out])),
            stride,
            padding,
        }
    }

    pub fn forward<'g>(&self, p: &Binding<'g>, x: Var<'g>) -> Result<Var<'g>> {
        let y = x.conv2d(p.var(self.w), self.stride, self.padding)?;
        let c = y.shape()[1];
        y.add(p.var(self.b).reshape(&[c, 1, 1])?)
    }
}
