use alloc::vec::Vec;

use crate::tensor::Tensor;
use crate::{Error, Result};

/// Positions where the forward input was strictly positive.
#[derive(Debug, Clone)]
pub struct ReluCtx {
    shape: Vec<usize>,
    mask: Vec<bool>,
}

pub fn relu(x: &Tensor) -> (Tensor, ReluCtx) {
    let mask: Vec<bool> = x.data().iter().map(|&v| v > 0.0).collect();
    let out = x
        .data()
        .iter()
        .map(|&v| if v > 0.0 { v } else { 0.0 })
        .collect();
    (
        Tensor::new(x.shape(), out).expect("same shape"),
        ReluCtx {
            shape: x.shape().to_vec(),
            mask,
        },
    )
}

/// The subgradient at exactly zero is taken as 0.
pub fn relu_backward(ctx: &ReluCtx, grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.shape() != ctx.shape.as_slice() {
        return Err(Error::shape("relu_backward", grad_out.shape(), &ctx.shape));
    }
    let g = grad_out
        .data()
        .iter()
        .zip(&ctx.mask)
        .map(|(&g, &m)| if m { g } else { 0.0 })
        .collect();
    Tensor::new(grad_out.shape(), g)
}
