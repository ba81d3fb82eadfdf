//! Layers with explicit forward and backward passes.
//!
//! Every forward returns its output together with a context value holding
//! whatever the backward pass needs. Backward passes come in two flavours:
//! `backward` accumulates parameter gradients into [`Parameter::grad`] and
//! needs `&mut self`, while `input_grad` only propagates the gradient to the
//! layer input and leaves the layer untouched (used by Grad-CAM on a shared,
//! frozen model).

mod activation;
mod batchnorm;
mod conv;
mod dropout;
mod linear;
mod loss;
mod pool;

pub use activation::{relu, relu_backward, ReluCtx};
pub use batchnorm::{
    BatchNorm2d, BatchNormCtx, RunningStats, DEFAULT_EPS as DEFAULT_BN_EPS,
    DEFAULT_MOMENTUM as DEFAULT_BN_MOMENTUM,
};
pub use conv::{conv2d_naive, im2col, Conv2d, Conv2dCtx};
pub use dropout::{dropout, dropout_backward, DropoutCtx};
pub use linear::{Linear, LinearCtx};
pub use loss::{softmax, softmax_cross_entropy};
pub use pool::{MaxPool2d, MaxPoolCtx};

use crate::tensor::{Init, Tensor};
use crate::{Result, RngSeed};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Train,
    Eval,
}

/// A trainable tensor and its accumulated gradient.
#[derive(Debug, Clone, PartialEq)]
pub struct Parameter {
    pub value: Tensor,
    pub grad: Tensor,
}

impl Parameter {
    pub fn new(value: Tensor) -> Self {
        let grad = Tensor::zeros(value.shape());
        Parameter { value, grad }
    }

    pub fn init(shape: &[usize], init: Init, seed: RngSeed) -> Result<Self> {
        Ok(Self::new(Tensor::random_init(shape, init, seed)?))
    }

    pub fn zero_grad(&mut self) {
        self.grad.data_mut().fill(0.0);
    }

    pub fn len(&self) -> usize {
        self.value.len()
    }

    pub fn is_empty(&self) -> bool {
        self.value.is_empty()
    }

    pub(crate) fn accumulate(&mut self, g: &[f32]) {
        for (a, b) in self.grad.data_mut().iter_mut().zip(g) {
            *a += b;
        }
    }
}

/// `(n, c, h, w)` of a rank-4 tensor.
pub(crate) fn dims4(op: &'static str, x: &Tensor) -> Result<(usize, usize, usize, usize)> {
    match *x.shape() {
        [n, c, h, w] => Ok((n, c, h, w)),
        _ => Err(crate::Error::shape(op, x.shape(), &[0, 0, 0, 0])),
    }
}
