//! GradCAM maps over the last conv block and red-channel overlays.

use alloc::format;
use alloc::vec::Vec;

use crate::imageops::resize_bilinear;
use crate::model::{ClassLabel, MosquitoNet};
use crate::tensor::Tensor;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Heatmap {
    /// `[H, W]` at the model input resolution, in `[0, 1]`.
    pub values: Tensor,
    pub target_class: ClassLabel,
    /// Maximum of the upsampled map before normalization.
    pub raw_max: f32,
}

/// Class activation map for `target_class` (0 or 1) on one preprocessed `[C, H, W]` image.
///
/// Channel weights are the spatial means of the target logit's gradient with
/// respect to the last block's post-relu, pre-pool activation. The relu of the
/// weighted channel sum is bilinearly upsampled to the input size and divided
/// by its maximum; an all-zero map stays all zero.
pub fn gradcam(model: &MosquitoNet, image: &Tensor, target_class: usize) -> Result<Heatmap> {
    let target = ClassLabel::from_index(target_class).ok_or_else(|| {
        Error::InvalidArgument(format!("class index {target_class} is not 0 or 1"))
    })?;
    let [c, h, w] = model.config().input_shape();
    if image.shape() != [c, h, w] {
        return Err(Error::shape("gradcam", image.shape(), &[c, h, w]));
    }
    let x = image.clone().reshape(&[1, c, h, w])?;
    let (_, trace) = model.forward_eval_traced(&x)?;
    let act = trace
        .last_block_activation
        .as_ref()
        .ok_or_else(|| Error::InvalidArgument("GradCAM needs at least one conv block".into()))?;
    let mut seed = alloc::vec![0.0; 2];
    seed[target_class] = 1.0;
    let grad = model.last_activation_grad(&trace, &Tensor::new(&[1, 2], seed)?)?;

    let (k, ah, aw) = match *act.shape() {
        [1, k, ah, aw] => (k, ah, aw),
        _ => return Err(Error::shape("gradcam", act.shape(), &[1, 0, 0, 0])),
    };
    let plane = ah * aw;
    let mut map = alloc::vec![0.0f32; plane];
    for ch in 0..k {
        let g = &grad.data()[ch * plane..(ch + 1) * plane];
        let alpha = (g.iter().map(|&v| v as f64).sum::<f64>() / plane as f64) as f32;
        if alpha == 0.0 {
            continue;
        }
        for (m, &a) in map
            .iter_mut()
            .zip(&act.data()[ch * plane..(ch + 1) * plane])
        {
            *m += alpha * a;
        }
    }
    for m in &mut map {
        *m = m.max(0.0);
    }
    let up = resize_bilinear(&Tensor::new(&[1, ah, aw], map)?, h, w)?;
    let raw_max = up.data().iter().copied().fold(0.0f32, f32::max);
    let values: Vec<f32> = if raw_max > 0.0 {
        up.data()
            .iter()
            .map(|&v| (v / raw_max).clamp(0.0, 1.0))
            .collect()
    } else {
        alloc::vec![0.0; h * w]
    };
    Ok(Heatmap {
        values: Tensor::new(&[h, w], values)?,
        target_class: target,
        raw_max,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Overlay {
    /// RGB `[3, H, W]` in `[0, 1]`.
    pub image: Tensor,
    pub alpha: f32,
}

pub const DEFAULT_ALPHA: f32 = 0.4;

/// `(1 - alpha)·image + alpha·red(heatmap)`, clamped to `[0, 1]`.
pub fn overlay(image: &Tensor, heatmap: &Heatmap, alpha: f32) -> Result<Overlay> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::InvalidArgument(format!(
            "alpha {alpha} outside [0, 1]"
        )));
    }
    let (h, w) = match *heatmap.values.shape() {
        [h, w] => (h, w),
        _ => return Err(Error::shape("overlay", heatmap.values.shape(), &[0, 0])),
    };
    if image.shape() != [3, h, w] {
        return Err(Error::shape("overlay", image.shape(), &[3, h, w]));
    }
    let plane = h * w;
    let heat = heatmap.values.data();
    let out = image
        .data()
        .iter()
        .enumerate()
        .map(|(i, &v)| {
            let red = if i < plane { heat[i] } else { 0.0 };
            ((1.0 - alpha) * v + alpha * red).clamp(0.0, 1.0)
        })
        .collect();
    Ok(Overlay {
        image: Tensor::new(&[3, h, w], out)?,
        alpha,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ModelConfig;
    use crate::tensor::Init;
    use crate::RngSeed;

    fn toy() -> MosquitoNet {
        let cfg = ModelConfig {
            height: 16,
            width: 16,
            conv_channels: alloc::vec![4, 6],
            fc_sizes: alloc::vec![8],
            ..ModelConfig::default()
        };
        MosquitoNet::build(cfg, RngSeed(11)).unwrap()
    }

    fn image(seed: u64) -> Tensor {
        Tensor::random_init(
            &[3, 16, 16],
            Init::Uniform {
                low: 0.0,
                high: 1.0,
            },
            RngSeed(seed),
        )
        .unwrap()
    }

    #[test]
    fn contract_shape_and_range() {
        let m = toy();
        for seed in 0..4 {
            for class in 0..2 {
                let hm = gradcam(&m, &image(seed), class).unwrap();
                assert_eq!(hm.values.shape(), &[16, 16]);
                assert!(hm.values.data().iter().all(|v| (0.0..=1.0).contains(v)));
                assert!(hm.raw_max >= 0.0);
                assert_eq!(hm.target_class.index(), class);
            }
        }
        assert!(gradcam(&m, &image(0), 2).is_err());
        assert!(gradcam(&m, &Tensor::zeros(&[3, 8, 8]), 0).is_err());
    }

    #[test]
    fn zero_head_gives_zero_map() {
        let mut m = toy();
        let head = m.fcs.last_mut().unwrap();
        head.weight.value = Tensor::zeros(head.weight.value.shape());
        let hm = gradcam(&m, &image(1), 1).unwrap();
        assert_eq!(hm.raw_max, 0.0);
        assert!(hm.values.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn deterministic_and_positively_homogeneous() {
        let mut m = toy();
        let x = image(2);
        let a = gradcam(&m, &x, 1).unwrap();
        assert_eq!(a, gradcam(&m, &x, 1).unwrap());
        let head = m.fcs.last_mut().unwrap();
        head.weight.value = head.weight.value.scale(3.0);
        let b = gradcam(&m, &x, 1).unwrap();
        if a.raw_max > 0.0 {
            assert!((b.raw_max / a.raw_max - 3.0).abs() < 1e-4);
        }
        for (p, q) in a.values.data().iter().zip(b.values.data()) {
            assert!((p - q).abs() < 1e-5);
        }
    }

    #[test]
    fn overlay_blend_cases() {
        let img = image(3);
        let hm = |v: f32| Heatmap {
            values: Tensor::full(&[16, 16], v),
            target_class: ClassLabel::Parasitized,
            raw_max: v,
        };
        assert_eq!(overlay(&img, &hm(0.7), 0.0).unwrap().image, img);
        let dim = overlay(&img, &hm(0.0), 0.4).unwrap().image;
        for (d, v) in dim.data().iter().zip(img.data()) {
            assert_eq!(*d, 0.6 * v);
        }
        let red = overlay(&img, &hm(1.0), 1.0).unwrap().image;
        assert!(red.data()[..256].iter().all(|&v| v == 1.0));
        assert!(red.data()[256..].iter().all(|&v| v == 0.0));
        assert!(overlay(&img, &hm(1.0), 1.5).is_err());
        assert!(overlay(&img, &hm(1.0), -0.1).is_err());
    }
}
