use alloc::vec;

use super::Parameter;
use crate::tensor::{gemm_nn, gemm_nt, transpose_into, Init, Tensor};
use crate::{Error, Result, RngSeed};

/// Fully connected layer `y = x·W + b` with `W: [din, dout]`.
#[derive(Debug, Clone, PartialEq)]
pub struct Linear {
    pub weight: Parameter,
    pub bias: Parameter,
}

#[derive(Debug, Clone)]
pub struct LinearCtx {
    input: Tensor,
}

impl Linear {
    pub fn new(din: usize, dout: usize, seed: RngSeed) -> Result<Self> {
        Ok(Linear {
            weight: Parameter::init(&[din, dout], Init::KaimingFanIn { fan_in: din }, seed)?,
            bias: Parameter::new(Tensor::zeros(&[dout])),
        })
    }

    pub fn from_parts(weight: Tensor, bias: Tensor) -> Result<Self> {
        match (weight.shape(), bias.shape()) {
            (&[_, dout], &[b]) if b == dout => Ok(Linear {
                weight: Parameter::new(weight),
                bias: Parameter::new(bias),
            }),
            _ => Err(Error::shape("linear", weight.shape(), bias.shape())),
        }
    }

    pub fn in_features(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn out_features(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, LinearCtx)> {
        let (din, dout) = (self.in_features(), self.out_features());
        let &[n, d] = x.shape() else {
            return Err(Error::shape("linear", x.shape(), self.weight.value.shape()));
        };
        if d != din {
            return Err(Error::shape("linear", x.shape(), self.weight.value.shape()));
        }
        let mut out = vec![0.0f32; n * dout];
        for row in out.chunks_exact_mut(dout) {
            row.copy_from_slice(self.bias.value.data());
        }
        gemm_nn(n, din, dout, x.data(), self.weight.value.data(), &mut out);
        Ok((
            Tensor::new(&[n, dout], out)?,
            LinearCtx { input: x.clone() },
        ))
    }

    /// `grad_x = g·Wᵀ`, `W.grad += xᵀ·g`, `b.grad += Σ_rows g`.
    pub fn backward(&mut self, ctx: &LinearCtx, grad_out: &Tensor) -> Result<Tensor> {
        let gx = self.input_grad(ctx, grad_out)?;
        let (din, dout) = (self.in_features(), self.out_features());
        let n = ctx.input.shape()[0];
        let mut xt = vec![0.0f32; din * n];
        transpose_into(ctx.input.data(), n, din, &mut xt);
        let mut gw = vec![0.0f32; din * dout];
        gemm_nn(din, n, dout, &xt, grad_out.data(), &mut gw);
        self.weight.accumulate(&gw);
        let mut gb = vec![0.0f64; dout];
        for row in grad_out.data().chunks_exact(dout) {
            for (a, &b) in gb.iter_mut().zip(row) {
                *a += b as f64;
            }
        }
        for (a, b) in self.bias.grad.data_mut().iter_mut().zip(gb) {
            *a += b as f32;
        }
        Ok(gx)
    }

    pub fn input_grad(&self, ctx: &LinearCtx, grad_out: &Tensor) -> Result<Tensor> {
        let (din, dout) = (self.in_features(), self.out_features());
        let n = ctx.input.shape()[0];
        if grad_out.shape() != [n, dout] {
            return Err(Error::shape(
                "linear_backward",
                grad_out.shape(),
                &[n, dout],
            ));
        }
        let mut gx = vec![0.0f32; n * din];
        gemm_nt(
            n,
            dout,
            din,
            grad_out.data(),
            self.weight.value.data(),
            &mut gx,
        );
        Tensor::new(&[n, din], gx)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identity_weights_pass_input_through() {
        let l = Linear::from_parts(Tensor::identity(3), Tensor::zeros(&[3])).unwrap();
        let x = Tensor::new(&[2, 3], vec![1.0, -2.0, 3.0, 0.5, 0.0, 9.0]).unwrap();
        assert_eq!(l.forward(&x).unwrap().0, x);
    }

    #[test]
    fn scaled_identity_with_bias() {
        let l =
            Linear::from_parts(Tensor::identity(2).scale(3.0), Tensor::full(&[2], 1.0)).unwrap();
        let x = Tensor::new(&[1, 2], vec![1.0, 2.0]).unwrap();
        assert_eq!(l.forward(&x).unwrap().0.data(), &[4.0, 7.0]);
    }

    #[test]
    fn shape_mismatch() {
        let l = Linear::new(4, 2, RngSeed(0)).unwrap();
        assert!(l.forward(&Tensor::zeros(&[1, 3])).is_err());
        let (_, ctx) = l.forward(&Tensor::zeros(&[1, 4])).unwrap();
        assert!(l.input_grad(&ctx, &Tensor::zeros(&[1, 3])).is_err());
    }
}
