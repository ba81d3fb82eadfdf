use alloc::vec;
use alloc::vec::Vec;

use super::dims4;
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaxPool2d {
    pub kernel: usize,
    pub stride: usize,
}

/// Flat input index of each window's maximum.
#[derive(Debug, Clone)]
pub struct MaxPoolCtx {
    input_shape: Vec<usize>,
    output_shape: Vec<usize>,
    argmax: Vec<usize>,
}

impl Default for MaxPool2d {
    fn default() -> Self {
        MaxPool2d {
            kernel: 2,
            stride: 2,
        }
    }
}

impl MaxPool2d {
    pub fn output_size(&self, size: usize) -> Option<usize> {
        (size >= self.kernel && self.stride > 0).then(|| (size - self.kernel) / self.stride + 1)
    }

    /// Per-window maximum. Ties resolve to the first maximal position in row-major order.
    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, MaxPoolCtx)> {
        let (n, c, h, w) = dims4("maxpool2d", x)?;
        let (Some(ho), Some(wo)) = (self.output_size(h), self.output_size(w)) else {
            return Err(Error::InvalidArgument(alloc::format!(
                "pool kernel {} larger than input {h}x{w}",
                self.kernel
            )));
        };
        let mut out = Vec::with_capacity(n * c * ho * wo);
        let mut argmax = Vec::with_capacity(n * c * ho * wo);
        let xd = x.data();
        for plane in 0..n * c {
            let base = plane * h * w;
            for i in 0..ho {
                for j in 0..wo {
                    let mut best = base + i * self.stride * w + j * self.stride;
                    for u in 0..self.kernel {
                        for v in 0..self.kernel {
                            let idx = base + (i * self.stride + u) * w + j * self.stride + v;
                            if xd[idx] > xd[best] {
                                best = idx;
                            }
                        }
                    }
                    out.push(xd[best]);
                    argmax.push(best);
                }
            }
        }
        let output_shape = vec![n, c, ho, wo];
        Ok((
            Tensor::new(&output_shape, out)?,
            MaxPoolCtx {
                input_shape: x.shape().to_vec(),
                output_shape,
                argmax,
            },
        ))
    }

    /// Routes each upstream gradient to its window's maximum.
    pub fn backward(&self, ctx: &MaxPoolCtx, grad_out: &Tensor) -> Result<Tensor> {
        if grad_out.shape() != ctx.output_shape.as_slice() {
            return Err(Error::shape(
                "maxpool2d_backward",
                grad_out.shape(),
                &ctx.output_shape,
            ));
        }
        let mut gx = Tensor::zeros(&ctx.input_shape);
        let d = gx.data_mut();
        for (&idx, &g) in ctx.argmax.iter().zip(grad_out.data()) {
            d[idx] += g;
        }
        Ok(gx)
    }
}
