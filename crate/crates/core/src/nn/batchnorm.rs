use alloc::vec;
use alloc::vec::Vec;

use super::{dims4, Mode, Parameter};
use crate::tensor::Tensor;
use crate::{Error, Result};

pub const DEFAULT_EPS: f32 = 1e-5;
pub const DEFAULT_MOMENTUM: f32 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct RunningStats {
    pub mean: Vec<f32>,
    pub var: Vec<f32>,
    /// False until the stats were either set explicitly or updated by a train-mode pass.
    pub initialized: bool,
}

/// Per-channel batch normalization over `[N, C, H, W]`.
///
/// Train mode normalizes with the biased batch variance and folds the
/// unbiased variance into the running estimate (`momentum` weights the new
/// batch). Eval mode normalizes with the running estimate.
#[derive(Debug, Clone, PartialEq)]
pub struct BatchNorm2d {
    pub gamma: Parameter,
    pub beta: Parameter,
    pub running: RunningStats,
    pub eps: f32,
    pub momentum: f32,
}

#[derive(Debug, Clone)]
pub struct BatchNormCtx {
    mode: Mode,
    shape: Vec<usize>,
    x_hat: Vec<f32>,
    inv_std: Vec<f32>,
}

impl BatchNorm2d {
    pub fn new(channels: usize) -> Self {
        BatchNorm2d {
            gamma: Parameter::new(Tensor::full(&[channels], 1.0)),
            beta: Parameter::new(Tensor::zeros(&[channels])),
            running: RunningStats {
                mean: vec![0.0; channels],
                var: vec![1.0; channels],
                initialized: false,
            },
            eps: DEFAULT_EPS,
            momentum: DEFAULT_MOMENTUM,
        }
    }

    /// Marks the running stats (mean 0, variance 1 unless already set) as usable in eval mode.
    pub fn init_running_stats(&mut self) {
        self.running.initialized = true;
    }

    pub fn channels(&self) -> usize {
        self.gamma.value.len()
    }

    /// Forward pass. Train mode updates the running statistics.
    pub fn forward(&mut self, x: &Tensor, mode: Mode) -> Result<(Tensor, BatchNormCtx)> {
        match mode {
            Mode::Eval => self.forward_eval(x),
            Mode::Train => self.forward_train(x),
        }
    }

    /// Eval-mode forward; never mutates the layer.
    pub fn forward_eval(&self, x: &Tensor) -> Result<(Tensor, BatchNormCtx)> {
        let (n, c, h, w) = self.check(x)?;
        if !self.running.initialized {
            return Err(Error::State(
                "batchnorm eval mode before running statistics exist".into(),
            ));
        }
        let inv_std: Vec<f32> = self
            .running
            .var
            .iter()
            .map(|&v| (1.0 / libm::sqrt(v as f64 + self.eps as f64)) as f32)
            .collect();
        let mean = self.running.mean.clone();
        Ok(self.normalize(x, (n, c, h, w), &mean, inv_std, Mode::Eval))
    }

    fn forward_train(&mut self, x: &Tensor) -> Result<(Tensor, BatchNormCtx)> {
        let (n, c, h, w) = self.check(x)?;
        let count = n * h * w;
        if count < 2 {
            return Err(Error::InvalidArgument(alloc::format!(
                "batchnorm train mode needs at least 2 values per channel, got {count}"
            )));
        }
        let hw = h * w;
        let mut mean = vec![0.0f32; c];
        let mut inv_std = vec![0.0f32; c];
        for ch in 0..c {
            let plane = |b: usize| &x.data()[(b * c + ch) * hw..(b * c + ch + 1) * hw];
            let mut s = 0.0f64;
            for b in 0..n {
                s += plane(b).iter().map(|&v| v as f64).sum::<f64>();
            }
            let m = s / count as f64;
            let mut ss = 0.0f64;
            for b in 0..n {
                ss += plane(b)
                    .iter()
                    .map(|&v| (v as f64 - m) * (v as f64 - m))
                    .sum::<f64>();
            }
            let var = ss / count as f64;
            mean[ch] = m as f32;
            inv_std[ch] = (1.0 / libm::sqrt(var + self.eps as f64)) as f32;

            let unbiased = ss / (count - 1) as f64;
            let mo = self.momentum as f64;
            let r = &mut self.running;
            r.mean[ch] = ((1.0 - mo) * r.mean[ch] as f64 + mo * m) as f32;
            r.var[ch] = ((1.0 - mo) * r.var[ch] as f64 + mo * unbiased) as f32;
        }
        self.running.initialized = true;
        Ok(self.normalize(x, (n, c, h, w), &mean, inv_std, Mode::Train))
    }

    fn check(&self, x: &Tensor) -> Result<(usize, usize, usize, usize)> {
        let dims = dims4("batchnorm2d", x)?;
        if dims.1 != self.channels() {
            return Err(Error::shape(
                "batchnorm2d",
                x.shape(),
                self.gamma.value.shape(),
            ));
        }
        Ok(dims)
    }

    fn normalize(
        &self,
        x: &Tensor,
        (n, c, h, w): (usize, usize, usize, usize),
        mean: &[f32],
        inv_std: Vec<f32>,
        mode: Mode,
    ) -> (Tensor, BatchNormCtx) {
        let hw = h * w;
        let mut x_hat = vec![0.0f32; x.len()];
        let mut out = vec![0.0f32; x.len()];
        for b in 0..n {
            for ch in 0..c {
                let off = (b * c + ch) * hw;
                let (g, bt) = (self.gamma.value.data()[ch], self.beta.value.data()[ch]);
                for i in off..off + hw {
                    let xh = (x.data()[i] - mean[ch]) * inv_std[ch];
                    x_hat[i] = xh;
                    out[i] = g * xh + bt;
                }
            }
        }
        (
            Tensor::new(x.shape(), out).expect("same shape as input"),
            BatchNormCtx {
                mode,
                shape: x.shape().to_vec(),
                x_hat,
                inv_std,
            },
        )
    }

    pub fn backward(&mut self, ctx: &BatchNormCtx, grad_out: &Tensor) -> Result<Tensor> {
        let (gx, gg, gb) = self.grads(ctx, grad_out)?;
        self.gamma.accumulate(&gg);
        self.beta.accumulate(&gb);
        Ok(gx)
    }

    pub fn input_grad(&self, ctx: &BatchNormCtx, grad_out: &Tensor) -> Result<Tensor> {
        Ok(self.grads(ctx, grad_out)?.0)
    }

    fn grads(&self, ctx: &BatchNormCtx, grad_out: &Tensor) -> Result<(Tensor, Vec<f32>, Vec<f32>)> {
        if grad_out.shape() != ctx.shape.as_slice() {
            return Err(Error::shape(
                "batchnorm2d_backward",
                grad_out.shape(),
                &ctx.shape,
            ));
        }
        let (n, c, h, w) = dims4("batchnorm2d_backward", grad_out)?;
        let hw = h * w;
        let count = (n * hw) as f64;
        let g = grad_out.data();
        let mut gx = vec![0.0f32; g.len()];
        let mut g_gamma = vec![0.0f32; c];
        let mut g_beta = vec![0.0f32; c];
        for ch in 0..c {
            let mut sum_g = 0.0f64;
            let mut sum_gx = 0.0f64;
            for b in 0..n {
                let off = (b * c + ch) * hw;
                for i in off..off + hw {
                    sum_g += g[i] as f64;
                    sum_gx += g[i] as f64 * ctx.x_hat[i] as f64;
                }
            }
            g_beta[ch] = sum_g as f32;
            g_gamma[ch] = sum_gx as f32;
            let scale = self.gamma.value.data()[ch] as f64 * ctx.inv_std[ch] as f64;
            let (mean_g, mean_gx) = (sum_g / count, sum_gx / count);
            for b in 0..n {
                let off = (b * c + ch) * hw;
                for i in off..off + hw {
                    gx[i] = match ctx.mode {
                        Mode::Eval => (scale * g[i] as f64) as f32,
                        Mode::Train => {
                            (scale * (g[i] as f64 - mean_g - ctx.x_hat[i] as f64 * mean_gx)) as f32
                        }
                    };
                }
            }
        }
        Ok((Tensor::new(grad_out.shape(), gx)?, g_gamma, g_beta))
    }
}
