use alloc::vec;
use alloc::vec::Vec;

use super::{dims4, Parameter};
use crate::tensor::{gemm_nn, gemm_nt, transpose_into, Init, Tensor};
use crate::{Error, Result, RngSeed};

/// 2-D convolution with square kernels, lowered to im2col + GEMM.
#[derive(Debug, Clone, PartialEq)]
pub struct Conv2d {
    /// `[out_channels, in_channels, kernel, kernel]`
    pub weight: Parameter,
    /// `[out_channels]`
    pub bias: Parameter,
    pub stride: usize,
    pub pad: usize,
}

/// Cached input of a convolution forward pass. The column matrix is rebuilt
/// in backward instead of being kept alive for every image of the batch.
#[derive(Debug, Clone)]
pub struct Conv2dCtx {
    input: Tensor,
}

impl Conv2d {
    pub fn new(
        in_channels: usize,
        out_channels: usize,
        kernel: usize,
        stride: usize,
        pad: usize,
        seed: RngSeed,
    ) -> Result<Self> {
        if in_channels == 0 || out_channels == 0 || kernel == 0 || stride == 0 {
            return Err(Error::InvalidArgument(
                "conv2d channels, kernel and stride must be positive".into(),
            ));
        }
        let fan_in = in_channels * kernel * kernel;
        Ok(Conv2d {
            weight: Parameter::init(
                &[out_channels, in_channels, kernel, kernel],
                Init::KaimingFanIn { fan_in },
                seed,
            )?,
            bias: Parameter::new(Tensor::zeros(&[out_channels])),
            stride,
            pad,
        })
    }

    pub fn from_parts(weight: Tensor, bias: Tensor, stride: usize, pad: usize) -> Result<Self> {
        let &[cout, _, kh, kw] = weight.shape() else {
            return Err(Error::shape("conv2d", weight.shape(), bias.shape()));
        };
        if kh != kw || bias.shape() != [cout] || stride == 0 {
            return Err(Error::shape("conv2d", weight.shape(), bias.shape()));
        }
        Ok(Conv2d {
            weight: Parameter::new(weight),
            bias: Parameter::new(bias),
            stride,
            pad,
        })
    }

    pub fn out_channels(&self) -> usize {
        self.weight.value.shape()[0]
    }

    pub fn in_channels(&self) -> usize {
        self.weight.value.shape()[1]
    }

    pub fn kernel(&self) -> usize {
        self.weight.value.shape()[2]
    }

    /// Output spatial size for an input of size `size`, if the kernel fits.
    pub fn output_size(&self, size: usize) -> Option<usize> {
        out_size(size, self.kernel(), self.stride, self.pad)
    }

    pub fn forward(&self, x: &Tensor) -> Result<(Tensor, Conv2dCtx)> {
        let (n, cin, h, w) = dims4("conv2d", x)?;
        if cin != self.in_channels() {
            return Err(Error::shape("conv2d", x.shape(), self.weight.value.shape()));
        }
        let k = self.kernel();
        let (Some(ho), Some(wo)) = (self.output_size(h), self.output_size(w)) else {
            return Err(Error::InvalidArgument(alloc::format!(
                "kernel {k} does not fit input {h}x{w} with padding {}",
                self.pad
            )));
        };
        let cout = self.out_channels();
        let kdim = cin * k * k;
        let hw = ho * wo;
        let mut out = vec![0.0f32; n * cout * hw];
        let mut cols = vec![0.0f32; kdim * hw];
        let in_stride = cin * h * w;
        for (img, dst) in out.chunks_exact_mut(cout * hw).enumerate() {
            let src = &x.data()[img * in_stride..(img + 1) * in_stride];
            im2col(src, cin, h, w, k, self.stride, self.pad, ho, wo, &mut cols);
            for (co, row) in dst.chunks_exact_mut(hw).enumerate() {
                row.fill(self.bias.value.data()[co]);
            }
            gemm_nn(cout, kdim, hw, self.weight.value.data(), &cols, dst);
        }
        Ok((
            Tensor::new(&[n, cout, ho, wo], out)?,
            Conv2dCtx { input: x.clone() },
        ))
    }

    /// Backward pass; accumulates into `weight.grad` and `bias.grad`.
    pub fn backward(&mut self, ctx: &Conv2dCtx, grad_out: &Tensor) -> Result<Tensor> {
        let (gx, gw, gb) = self.grads(ctx, grad_out, true)?;
        self.weight.accumulate(&gw);
        self.bias.accumulate(&gb);
        Ok(gx)
    }

    /// Gradient with respect to the input only.
    pub fn input_grad(&self, ctx: &Conv2dCtx, grad_out: &Tensor) -> Result<Tensor> {
        Ok(self.grads(ctx, grad_out, false)?.0)
    }

    fn grads(
        &self,
        ctx: &Conv2dCtx,
        grad_out: &Tensor,
        want_params: bool,
    ) -> Result<(Tensor, Vec<f32>, Vec<f32>)> {
        let x = &ctx.input;
        let (n, cin, h, w) = dims4("conv2d_backward", x)?;
        let k = self.kernel();
        let cout = self.out_channels();
        let (ho, wo) = (
            self.output_size(h).unwrap_or(0),
            self.output_size(w).unwrap_or(0),
        );
        if grad_out.shape() != [n, cout, ho, wo] {
            return Err(Error::shape(
                "conv2d_backward",
                grad_out.shape(),
                &[n, cout, ho, wo],
            ));
        }
        let kdim = cin * k * k;
        let hw = ho * wo;
        let mut wt = vec![0.0f32; kdim * cout];
        transpose_into(self.weight.value.data(), cout, kdim, &mut wt);

        let mut gx = vec![0.0f32; x.len()];
        let mut gw = vec![0.0f32; if want_params { cout * kdim } else { 0 }];
        let mut gb = vec![0.0f32; if want_params { cout } else { 0 }];
        let mut cols = vec![0.0f32; kdim * hw];
        let mut dcols = vec![0.0f32; kdim * hw];
        let in_stride = cin * h * w;
        for img in 0..n {
            let g = &grad_out.data()[img * cout * hw..(img + 1) * cout * hw];
            if want_params {
                let src = &x.data()[img * in_stride..(img + 1) * in_stride];
                im2col(src, cin, h, w, k, self.stride, self.pad, ho, wo, &mut cols);
                gemm_nt(cout, hw, kdim, g, &cols, &mut gw);
                for (co, row) in g.chunks_exact(hw).enumerate() {
                    gb[co] += row.iter().map(|&v| v as f64).sum::<f64>() as f32;
                }
            }
            dcols.fill(0.0);
            gemm_nn(kdim, cout, hw, &wt, g, &mut dcols);
            col2im(
                &dcols,
                cin,
                h,
                w,
                k,
                self.stride,
                self.pad,
                ho,
                wo,
                &mut gx[img * in_stride..(img + 1) * in_stride],
            );
        }
        Ok((Tensor::new(x.shape(), gx)?, gw, gb))
    }
}

fn out_size(size: usize, k: usize, stride: usize, pad: usize) -> Option<usize> {
    let padded = size + 2 * pad;
    (padded >= k).then(|| (padded - k) / stride + 1)
}

/// Unrolls one `[c, h, w]` image into a `[c·k·k, ho·wo]` column matrix.
#[allow(clippy::too_many_arguments)]
pub fn im2col(
    src: &[f32],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    cols: &mut [f32],
) {
    let hw = ho * wo;
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for u in 0..k {
            for v in 0..k {
                let row = &mut cols[((ch * k + u) * k + v) * hw..][..hw];
                for i in 0..ho {
                    let dst = &mut row[i * wo..(i + 1) * wo];
                    let y = (i * stride + u) as isize - pad as isize;
                    if y < 0 || y >= h as isize {
                        dst.fill(0.0);
                        continue;
                    }
                    let line = &plane[y as usize * w..(y as usize + 1) * w];
                    if stride == 1 {
                        // Valid output columns are those with 0 <= j + v - pad < w.
                        let lo = pad.saturating_sub(v).min(wo);
                        let hi = (w + pad).saturating_sub(v).min(wo).max(lo);
                        dst[..lo].fill(0.0);
                        dst[hi..].fill(0.0);
                        if hi > lo {
                            let start = lo + v - pad;
                            dst[lo..hi].copy_from_slice(&line[start..start + (hi - lo)]);
                        }
                    } else {
                        for (j, d) in dst.iter_mut().enumerate() {
                            let xx = (j * stride + v) as isize - pad as isize;
                            *d = if xx < 0 || xx >= w as isize {
                                0.0
                            } else {
                                line[xx as usize]
                            };
                        }
                    }
                }
            }
        }
    }
}

/// Scatter-adds a column matrix back onto a `[c, h, w]` image; adjoint of [`im2col`].
#[allow(clippy::too_many_arguments)]
fn col2im(
    cols: &[f32],
    c: usize,
    h: usize,
    w: usize,
    k: usize,
    stride: usize,
    pad: usize,
    ho: usize,
    wo: usize,
    dst: &mut [f32],
) {
    let hw = ho * wo;
    for ch in 0..c {
        let plane = &mut dst[ch * h * w..(ch + 1) * h * w];
        for u in 0..k {
            for v in 0..k {
                let row = &cols[((ch * k + u) * k + v) * hw..][..hw];
                for i in 0..ho {
                    let y = (i * stride + u) as isize - pad as isize;
                    if y < 0 || y >= h as isize {
                        continue;
                    }
                    let line = &mut plane[y as usize * w..(y as usize + 1) * w];
                    for j in 0..wo {
                        let xx = (j * stride + v) as isize - pad as isize;
                        if xx >= 0 && xx < w as isize {
                            line[xx as usize] += row[i * wo + j];
                        }
                    }
                }
            }
        }
    }
}

/// Direct nested-loop convolution, accumulated in `f64`. Reference for tests.
pub fn conv2d_naive(
    x: &Tensor,
    weight: &Tensor,
    bias: &Tensor,
    stride: usize,
    pad: usize,
) -> Result<Tensor> {
    let (n, cin, h, w) = dims4("conv2d_naive", x)?;
    let (cout, cin2, k, _) = dims4("conv2d_naive", weight)?;
    if cin != cin2 {
        return Err(Error::shape("conv2d_naive", x.shape(), weight.shape()));
    }
    let ho = out_size(h, k, stride, pad)
        .ok_or_else(|| Error::InvalidArgument("kernel too large".into()))?;
    let wo = out_size(w, k, stride, pad)
        .ok_or_else(|| Error::InvalidArgument("kernel too large".into()))?;
    let xd = x.data();
    let wd = weight.data();
    let mut out = Vec::with_capacity(n * cout * ho * wo);
    for b in 0..n {
        for co in 0..cout {
            for i in 0..ho {
                for j in 0..wo {
                    let mut acc = bias.data()[co] as f64;
                    for ci in 0..cin {
                        for u in 0..k {
                            for v in 0..k {
                                let y = (i * stride + u) as isize - pad as isize;
                                let xx = (j * stride + v) as isize - pad as isize;
                                if y < 0 || xx < 0 || y >= h as isize || xx >= w as isize {
                                    continue;
                                }
                                acc += xd[((b * cin + ci) * h + y as usize) * w + xx as usize]
                                    as f64
                                    * wd[((co * cin + ci) * k + u) * k + v] as f64;
                            }
                        }
                    }
                    out.push(acc as f32);
                }
            }
        }
    }
    Tensor::new(&[n, cout, ho, wo], out)
}
