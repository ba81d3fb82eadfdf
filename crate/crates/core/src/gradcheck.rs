//! Central finite-difference checks for every layer's backward pass.
//!
//! Each check builds a small random layer and input from a seed, takes the
//! analytic gradient of a fixed random projection `L(y) = Σ rᵢ·yᵢ`
//! (accumulated in `f64`), and compares it elementwise against
//! `(L(θ+h) − L(θ−h)) / 2h` for every input and parameter coordinate.
//! Inputs are drawn so that no perturbation crosses a relu kink or a max-pool
//! tie.

use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::nn::{
    dropout, dropout_backward, relu, relu_backward, softmax_cross_entropy, BatchNorm2d, Conv2d,
    Linear, MaxPool2d, Mode, Parameter,
};
use crate::tensor::{Init, RngSeed, Tensor};
use crate::Result;

pub const STEP: f32 = 1e-2;
pub const TOLERANCE: f64 = 1e-3;
/// Relative errors are taken against `max(|analytic|, |numeric|, FLOOR)`.
/// Forward rounding in `f32` leaves up to ~1e-4 absolute noise in a central
/// difference with `h = 1e-2`, so near-zero gradients need a floor.
pub const FLOOR: f64 = 0.1;

#[derive(Debug, Clone, PartialEq)]
pub struct Comparison {
    /// Which layer and tensor, e.g. `conv2d.weight`.
    pub name: String,
    pub checked: usize,
    pub max_rel_err: f64,
    /// `(index, analytic, numeric)` of the worst coordinate.
    pub worst: (usize, f64, f64),
}

impl Comparison {
    pub fn passes(&self, tolerance: f64) -> bool {
        self.max_rel_err < tolerance
    }
}

pub fn rel_err(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(FLOOR)
}

/// Central differences of `f` with respect to every element of `x`.
pub fn numeric_grad<F>(x: &Tensor, step: f32, mut f: F) -> Result<Vec<f64>>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    let mut probe = x.clone();
    let mut out = Vec::with_capacity(x.len());
    for i in 0..x.len() {
        let orig = x.data()[i];
        let hi = orig + step;
        let lo = orig - step;
        probe.data_mut()[i] = hi;
        let fp = f(&probe)?;
        probe.data_mut()[i] = lo;
        let fm = f(&probe)?;
        probe.data_mut()[i] = orig;
        out.push((fp - fm) / (hi as f64 - lo as f64));
    }
    Ok(out)
}

pub fn compare(name: &str, analytic: &Tensor, numeric: &[f64]) -> Comparison {
    let mut cmp = Comparison {
        name: name.into(),
        checked: numeric.len(),
        max_rel_err: 0.0,
        worst: (0, 0.0, 0.0),
    };
    for (i, (&a, &n)) in analytic.data().iter().zip(numeric).enumerate() {
        let e = rel_err(a as f64, n);
        if e > cmp.max_rel_err || i == 0 {
            cmp.max_rel_err = cmp.max_rel_err.max(e);
            cmp.worst = (i, a as f64, n);
        }
    }
    cmp
}

/// Projection weights `r` and `L(y) = Σ rᵢ·yᵢ`.
struct Projection(Tensor);

impl Projection {
    fn new(shape: &[usize], seed: RngSeed) -> Result<Self> {
        Ok(Projection(uniform(shape, -1.0, 1.0, seed)?))
    }

    fn loss(&self, y: &Tensor) -> f64 {
        y.data()
            .iter()
            .zip(self.0.data())
            .map(|(&a, &b)| a as f64 * b as f64)
            .sum()
    }
}

fn uniform(shape: &[usize], low: f32, high: f32, seed: RngSeed) -> Result<Tensor> {
    Tensor::random_init(shape, Init::Uniform { low, high }, seed)
}

fn check_param<F>(name: &str, p: &Parameter, f: F) -> Result<Comparison>
where
    F: FnMut(&Tensor) -> Result<f64>,
{
    let numeric = numeric_grad(&p.value, STEP, f)?;
    Ok(compare(name, &p.grad, &numeric))
}

/// `x [1,2,6,6]`, 3 output channels, k=5, stride 1, pad 2, nonzero bias.
pub fn conv2d(seed: RngSeed) -> Result<Vec<Comparison>> {
    conv2d_with(seed, [1, 2, 6, 6], 3, 5, 1, 2)
}

pub fn conv2d_with(
    seed: RngSeed,
    input: [usize; 4],
    out_channels: usize,
    kernel: usize,
    stride: usize,
    pad: usize,
) -> Result<Vec<Comparison>> {
    let x = uniform(&input, -1.0, 1.0, seed.fork(0))?;
    let mut conv = Conv2d::new(input[1], out_channels, kernel, stride, pad, seed.fork(1))?;
    conv.bias.value = uniform(&[out_channels], -0.5, 0.5, seed.fork(2))?;
    let (y, ctx) = conv.forward(&x)?;
    let proj = Projection::new(y.shape(), seed.fork(3))?;
    let gx = conv.backward(&ctx, &proj.0)?;

    let nx = numeric_grad(&x, STEP, |x| Ok(proj.loss(&conv.forward(x)?.0)))?;
    let mut out = alloc::vec![compare("conv2d.input", &gx, &nx)];
    let mut probe = conv.clone();
    out.push(check_param("conv2d.weight", &conv.weight, |w| {
        probe.weight.value = w.clone();
        Ok(proj.loss(&probe.forward(&x)?.0))
    })?);
    let mut probe = conv.clone();
    out.push(check_param("conv2d.bias", &conv.bias, |b| {
        probe.bias.value = b.clone();
        Ok(proj.loss(&probe.forward(&x)?.0))
    })?);
    Ok(out)
}

/// Train-mode batchnorm on `x [2,3,4,4]` with random affine parameters.
pub fn batchnorm2d(seed: RngSeed) -> Result<Vec<Comparison>> {
    let x = uniform(&[2, 3, 4, 4], -2.0, 2.0, seed.fork(0))?;
    let mut bn = BatchNorm2d::new(3);
    bn.gamma.value = uniform(&[3], 0.5, 1.5, seed.fork(1))?;
    bn.beta.value = uniform(&[3], -0.5, 0.5, seed.fork(2))?;
    let (y, ctx) = bn.forward(&x, Mode::Train)?;
    let proj = Projection::new(y.shape(), seed.fork(3))?;
    let gx = bn.backward(&ctx, &proj.0)?;

    let mut probe = bn.clone();
    let nx = numeric_grad(&x, STEP, |x| {
        Ok(proj.loss(&probe.forward(x, Mode::Train)?.0))
    })?;
    let mut out = alloc::vec![compare("batchnorm2d.input", &gx, &nx)];
    let mut probe = bn.clone();
    out.push(check_param("batchnorm2d.gamma", &bn.gamma, |g| {
        probe.gamma.value = g.clone();
        Ok(proj.loss(&probe.forward(&x, Mode::Train)?.0))
    })?);
    let mut probe = bn.clone();
    out.push(check_param("batchnorm2d.beta", &bn.beta, |b| {
        probe.beta.value = b.clone();
        Ok(proj.loss(&probe.forward(&x, Mode::Train)?.0))
    })?);
    Ok(out)
}

/// Inputs with `|x| ∈ [0.1, 1]`, well clear of the kink at 0.
pub fn relu_layer(seed: RngSeed) -> Result<Vec<Comparison>> {
    let mut rng = seed.fork(0).rng();
    let data: Vec<f32> = (0..2 * 3 * 5)
        .map(|_| {
            let m: f32 = rng.random_range(0.1..=1.0);
            if rng.random::<bool>() {
                m
            } else {
                -m
            }
        })
        .collect();
    let x = Tensor::new(&[2, 3, 5], data)?;
    let (y, ctx) = relu(&x);
    let proj = Projection::new(y.shape(), seed.fork(1))?;
    let gx = relu_backward(&ctx, &proj.0)?;
    let nx = numeric_grad(&x, STEP, |x| Ok(proj.loss(&relu(x).0)))?;
    Ok(alloc::vec![compare("relu.input", &gx, &nx)])
}

/// A shuffled grid of values 0.1 apart, so a ±h step never changes a window's maximum.
pub fn maxpool2d(seed: RngSeed) -> Result<Vec<Comparison>> {
    let n = 2 * 2 * 6 * 6;
    let mut values: Vec<f32> = (0..n).map(|i| i as f32 * 0.1 - 7.0).collect();
    values.shuffle(&mut seed.fork(0).rng());
    let x = Tensor::new(&[2, 2, 6, 6], values)?;
    let pool = MaxPool2d::default();
    let (y, ctx) = pool.forward(&x)?;
    let proj = Projection::new(y.shape(), seed.fork(1))?;
    let gx = pool.backward(&ctx, &proj.0)?;
    let nx = numeric_grad(&x, STEP, |x| Ok(proj.loss(&pool.forward(x)?.0)))?;
    Ok(alloc::vec![compare("maxpool2d.input", &gx, &nx)])
}

/// `x [3,5]` through a 5→4 layer with random bias.
pub fn linear(seed: RngSeed) -> Result<Vec<Comparison>> {
    let x = uniform(&[3, 5], -1.0, 1.0, seed.fork(0))?;
    let mut fc = Linear::new(5, 4, seed.fork(1))?;
    fc.bias.value = uniform(&[4], -0.5, 0.5, seed.fork(2))?;
    let (y, ctx) = fc.forward(&x)?;
    let proj = Projection::new(y.shape(), seed.fork(3))?;
    let gx = fc.backward(&ctx, &proj.0)?;

    let nx = numeric_grad(&x, STEP, |x| Ok(proj.loss(&fc.forward(x)?.0)))?;
    let mut out = alloc::vec![compare("linear.input", &gx, &nx)];
    let mut probe = fc.clone();
    out.push(check_param("linear.weight", &fc.weight, |w| {
        probe.weight.value = w.clone();
        Ok(proj.loss(&probe.forward(&x)?.0))
    })?);
    let mut probe = fc.clone();
    out.push(check_param("linear.bias", &fc.bias, |b| {
        probe.bias.value = b.clone();
        Ok(proj.loss(&probe.forward(&x)?.0))
    })?);
    Ok(out)
}

/// Mean cross-entropy of `[6,2]` logits against random labels.
pub fn cross_entropy(seed: RngSeed) -> Result<Vec<Comparison>> {
    let logits = uniform(&[6, 2], -3.0, 3.0, seed.fork(0))?;
    let mut rng = seed.fork(1).rng();
    let labels: Vec<usize> = (0..6).map(|_| rng.random_range(0..2)).collect();
    let (_, grad) = softmax_cross_entropy(&logits, &labels)?;
    let nx = numeric_grad(&logits, STEP, |l| {
        Ok(softmax_cross_entropy(l, &labels)?.0 as f64)
    })?;
    Ok(alloc::vec![compare(
        "softmax_cross_entropy.logits",
        &grad,
        &nx
    )])
}

/// Train-mode dropout with the mask held fixed by reseeding.
pub fn dropout_layer(seed: RngSeed) -> Result<Vec<Comparison>> {
    let x = uniform(&[4, 8], -1.0, 1.0, seed.fork(0))?;
    let mask_seed = seed.fork(1);
    let (y, ctx) = dropout(&x, 0.2, Mode::Train, &mut mask_seed.rng())?;
    let proj = Projection::new(y.shape(), seed.fork(2))?;
    let gx = dropout_backward(&ctx, &proj.0)?;
    let nx = numeric_grad(&x, STEP, |x| {
        Ok(proj.loss(&dropout(x, 0.2, Mode::Train, &mut mask_seed.rng())?.0))
    })?;
    Ok(alloc::vec![compare("dropout.input", &gx, &nx)])
}

/// Every layer check for one seed.
pub fn all_layers(seed: RngSeed) -> Result<Vec<Comparison>> {
    let mut out = conv2d(seed.fork(1))?;
    out.extend(conv2d_with(seed.fork(2), [2, 2, 7, 5], 2, 3, 2, 1)?);
    out.extend(batchnorm2d(seed.fork(3))?);
    out.extend(relu_layer(seed.fork(4))?);
    out.extend(maxpool2d(seed.fork(5))?);
    out.extend(linear(seed.fork(6))?);
    out.extend(cross_entropy(seed.fork(7))?);
    out.extend(dropout_layer(seed.fork(8))?);
    Ok(out)
}
