//! Pixel-level operations on `[C, H, W]` images.

use alloc::vec::Vec;

use crate::tensor::Tensor;
use crate::{Error, Result};

fn chw(op: &'static str, t: &Tensor) -> Result<(usize, usize, usize)> {
    match *t.shape() {
        [c, h, w] => Ok((c, h, w)),
        _ => Err(Error::shape(op, t.shape(), &[0, 0, 0])),
    }
}

/// Bilinear resampling with half-pixel centres and clamped borders.
///
/// When the size is unchanged every sample lands exactly on a source pixel,
/// so the result is bit-identical to the input.
pub fn resize_bilinear(img: &Tensor, out_h: usize, out_w: usize) -> Result<Tensor> {
    let (c, h, w) = chw("resize_bilinear", img)?;
    if out_h == 0 || out_w == 0 {
        return Err(Error::InvalidArgument(
            "resize target must be non-empty".into(),
        ));
    }
    if (h, w) == (out_h, out_w) {
        return Ok(img.clone());
    }
    let taps = |src: usize, dst: usize| -> Vec<(usize, usize, f32)> {
        let scale = src as f64 / dst as f64;
        (0..dst)
            .map(|o| {
                let pos = ((o as f64 + 0.5) * scale - 0.5).clamp(0.0, (src - 1) as f64);
                let lo = libm::floor(pos) as usize;
                let hi = (lo + 1).min(src - 1);
                (lo, hi, (pos - lo as f64) as f32)
            })
            .collect()
    };
    let ys = taps(h, out_h);
    let xs = taps(w, out_w);
    let src = img.data();
    let mut out = Vec::with_capacity(c * out_h * out_w);
    for ch in 0..c {
        let plane = &src[ch * h * w..(ch + 1) * h * w];
        for &(y0, y1, fy) in &ys {
            for &(x0, x1, fx) in &xs {
                let top = plane[y0 * w + x0] * (1.0 - fx) + plane[y0 * w + x1] * fx;
                let bot = plane[y1 * w + x0] * (1.0 - fx) + plane[y1 * w + x1] * fx;
                out.push(top * (1.0 - fy) + bot * fy);
            }
        }
    }
    Tensor::new(&[c, out_h, out_w], out)
}

pub fn flip_horizontal(img: &Tensor) -> Result<Tensor> {
    let (c, h, w) = chw("flip_horizontal", img)?;
    let mut out = img.clone();
    for row in out.data_mut().chunks_exact_mut(w) {
        row.reverse();
    }
    debug_assert_eq!(out.len(), c * h * w);
    Ok(out)
}

pub fn flip_vertical(img: &Tensor) -> Result<Tensor> {
    let (c, h, w) = chw("flip_vertical", img)?;
    let src = img.data();
    let mut out = Vec::with_capacity(src.len());
    for ch in 0..c {
        for y in (0..h).rev() {
            out.extend_from_slice(&src[(ch * h + y) * w..(ch * h + y + 1) * w]);
        }
    }
    Tensor::new(img.shape(), out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::Init;
    use crate::RngSeed;

    #[test]
    fn same_size_is_identity() {
        let x = Tensor::random_init(
            &[3, 12, 12],
            Init::Uniform {
                low: 0.0,
                high: 1.0,
            },
            RngSeed(0),
        )
        .unwrap();
        assert_eq!(resize_bilinear(&x, 12, 12).unwrap(), x);
    }

    #[test]
    fn constant_image_stays_constant() {
        let x = Tensor::full(&[3, 37, 53], 128.0 / 255.0);
        let y = resize_bilinear(&x, 120, 120).unwrap();
        assert!(y.data().iter().all(|&v| (v - 128.0 / 255.0).abs() < 1e-6));
    }

    #[test]
    fn checkerboard_upsample_is_convex_combination() {
        let x = Tensor::new(&[1, 2, 2], alloc::vec![0.0, 1.0, 1.0, 0.0]).unwrap();
        let y = resize_bilinear(&x, 4, 4).unwrap();
        // Sample rows/cols map to source positions -0.25→0, 0.25, 0.75, 1.25→1.
        let expect = [
            0.0, 0.25, 0.75, 1.0, //
            0.25, 0.375, 0.625, 0.75, //
            0.75, 0.625, 0.375, 0.25, //
            1.0, 0.75, 0.25, 0.0,
        ];
        for (a, b) in y.data().iter().zip(expect) {
            assert!((a - b).abs() < 1e-6, "{a} vs {b}");
        }
        assert!(y.data().iter().all(|&v| (0.0..=1.0).contains(&v)));
    }

    #[test]
    fn flips_are_involutions() {
        let x = Tensor::random_init(
            &[3, 5, 7],
            Init::Uniform {
                low: 0.0,
                high: 1.0,
            },
            RngSeed(4),
        )
        .unwrap();
        let h = flip_horizontal(&x).unwrap();
        assert_ne!(h, x);
        assert_eq!(flip_horizontal(&h).unwrap(), x);
        assert_eq!(h.data()[0], x.data()[6]);
        let v = flip_vertical(&x).unwrap();
        assert_eq!(v.data()[0], x.data()[4 * 7]);
        assert_eq!(flip_vertical(&v).unwrap(), x);
    }
}
