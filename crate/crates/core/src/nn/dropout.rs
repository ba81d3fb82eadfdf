use alloc::vec::Vec;

use rand::Rng;

use super::Mode;
use crate::tensor::Tensor;
use crate::{Error, Result};

/// Per-element multiplier applied in the forward pass (`0` or `1/(1-p)`);
/// empty when the pass was the identity.
#[derive(Debug, Clone)]
pub struct DropoutCtx {
    shape: Vec<usize>,
    scale: Vec<f32>,
}

/// Inverted dropout: survivors are scaled by `1/(1-p)` at train time, eval is the identity.
pub fn dropout<R: Rng + ?Sized>(
    x: &Tensor,
    p: f32,
    mode: Mode,
    rng: &mut R,
) -> Result<(Tensor, DropoutCtx)> {
    if !(0.0..1.0).contains(&p) {
        return Err(Error::InvalidArgument(alloc::format!(
            "dropout probability {p} outside [0, 1)"
        )));
    }
    let shape = x.shape().to_vec();
    if mode == Mode::Eval || p == 0.0 {
        return Ok((
            x.clone(),
            DropoutCtx {
                shape,
                scale: Vec::new(),
            },
        ));
    }
    let keep = 1.0 / (1.0 - p);
    let scale: Vec<f32> = (0..x.len())
        .map(|_| if rng.random::<f32>() < p { 0.0 } else { keep })
        .collect();
    let out = x.data().iter().zip(&scale).map(|(a, s)| a * s).collect();
    Ok((Tensor::new(&shape, out)?, DropoutCtx { shape, scale }))
}

pub fn dropout_backward(ctx: &DropoutCtx, grad_out: &Tensor) -> Result<Tensor> {
    if grad_out.shape() != ctx.shape.as_slice() {
        return Err(Error::shape(
            "dropout_backward",
            grad_out.shape(),
            &ctx.shape,
        ));
    }
    if ctx.scale.is_empty() {
        return Ok(grad_out.clone());
    }
    let g = grad_out
        .data()
        .iter()
        .zip(&ctx.scale)
        .map(|(a, s)| a * s)
        .collect();
    Tensor::new(grad_out.shape(), g)
}
