//! Seeded synthetic datasets for smoke runs and tests.

use std::fs;
use std::path::Path;

use mosquitonet_core::data::MemorySource;
use mosquitonet_core::{ClassLabel, RngSeed, Tensor};
use rand::Rng;

use crate::error::{Error, Result};
use crate::export::rgb_png;

/// Inclusive-exclusive pixel rectangle `[y0, y1) × [x0, x1)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BoundingBox {
    pub y0: usize,
    pub x0: usize,
    pub y1: usize,
    pub x1: usize,
}

impl BoundingBox {
    pub fn contains(&self, y: usize, x: usize) -> bool {
        (self.y0..self.y1).contains(&y) && (self.x0..self.x1).contains(&x)
    }
}

/// Stained-cell lookalikes: a pale pink disc on a light background, with a
/// dark purple ring-stage inclusion on parasitized cells. Classes alternate,
/// parasitized first.
pub fn cell_images(n: usize, size: usize, seed: RngSeed) -> MemorySource {
    let mut rng = seed.rng();
    let mut src = MemorySource::default();
    for i in 0..n {
        let label = if i % 2 == 0 {
            ClassLabel::Parasitized
        } else {
            ClassLabel::Uninfected
        };
        let s = size as f32;
        let cy = s / 2.0 + rng.random_range(-0.05..0.05) * s;
        let cx = s / 2.0 + rng.random_range(-0.05..0.05) * s;
        let r = s * rng.random_range(0.36..0.44);
        let tint: f32 = rng.random_range(-0.04..0.04);
        let dot = (
            cy + rng.random_range(-0.4..0.4) * r,
            cx + rng.random_range(-0.4..0.4) * r,
            r * rng.random_range(0.15..0.25),
        );
        let mut data = vec![0.0f32; 3 * size * size];
        for y in 0..size {
            for x in 0..size {
                let (fy, fx) = (y as f32 + 0.5, x as f32 + 0.5);
                let inside = (fy - cy).powi(2) + (fx - cx).powi(2) <= r * r;
                let mut rgb = if inside {
                    [0.86 + tint, 0.62 + tint, 0.72 + tint]
                } else {
                    [0.95, 0.93, 0.94]
                };
                if label == ClassLabel::Parasitized
                    && (fy - dot.0).powi(2) + (fx - dot.1).powi(2) <= dot.2 * dot.2
                {
                    rgb = [0.42, 0.18, 0.52];
                }
                for (c, v) in rgb.iter().enumerate() {
                    let noise: f32 = rng.random_range(-0.02..0.02);
                    data[(c * size + y) * size + x] = (v + noise).clamp(0.0, 1.0);
                }
            }
        }
        src.images
            .push(Tensor::new(&[3, size, size], data).expect("sized"));
        src.labels.push(label);
    }
    src
}

/// Dark noisy backgrounds; parasitized images carry one bright `blob × blob`
/// square at a random position. Returns the square's box for positives.
pub fn bright_blobs(
    n: usize,
    size: usize,
    blob: usize,
    seed: RngSeed,
) -> (MemorySource, Vec<Option<BoundingBox>>) {
    assert!(blob <= size, "blob larger than image");
    let mut rng = seed.rng();
    let mut src = MemorySource::default();
    let mut boxes = Vec::with_capacity(n);
    for i in 0..n {
        let label = if i % 2 == 0 {
            ClassLabel::Parasitized
        } else {
            ClassLabel::Uninfected
        };
        let mut data: Vec<f32> = (0..3 * size * size)
            .map(|_| rng.random_range(0.0..0.2))
            .collect();
        let bbox = (label == ClassLabel::Parasitized).then(|| {
            let y0 = rng.random_range(0..=size - blob);
            let x0 = rng.random_range(0..=size - blob);
            BoundingBox {
                y0,
                x0,
                y1: y0 + blob,
                x1: x0 + blob,
            }
        });
        if let Some(b) = bbox {
            for c in 0..3 {
                for y in b.y0..b.y1 {
                    for x in b.x0..b.x1 {
                        data[(c * size + y) * size + x] = rng.random_range(0.85..1.0);
                    }
                }
            }
        }
        src.images
            .push(Tensor::new(&[3, size, size], data).expect("sized"));
        src.labels.push(label);
        boxes.push(bbox);
    }
    (src, boxes)
}

/// Writes a source as `<root>/Parasitized/NNNN.png` and `<root>/Uninfected/NNNN.png`.
pub fn write_dataset(root: &Path, src: &MemorySource) -> Result<()> {
    for label in ClassLabel::ALL {
        let dir = root.join(dir_name(label));
        fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    for (i, (img, label)) in src.images.iter().zip(&src.labels).enumerate() {
        let path = root.join(dir_name(*label)).join(format!("{i:04}.png"));
        fs::write(&path, rgb_png(img)?).map_err(|e| Error::io(&path, e))?;
    }
    Ok(())
}

pub fn dir_name(label: ClassLabel) -> &'static str {
    match label {
        ClassLabel::Parasitized => "Parasitized",
        ClassLabel::Uninfected => "Uninfected",
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn cells_are_balanced_and_in_range() {
        let s = cell_images(6, 24, RngSeed(1));
        assert_eq!(
            s.labels
                .iter()
                .filter(|l| **l == ClassLabel::Parasitized)
                .count(),
            3
        );
        assert!(s
            .images
            .iter()
            .all(|t| t.shape() == [3, 24, 24] && t.data().iter().all(|v| (0.0..=1.0).contains(v))));
        assert_eq!(cell_images(6, 24, RngSeed(1)).images, s.images);
    }

    #[test]
    fn blobs_sit_inside_their_boxes() {
        let (s, boxes) = bright_blobs(4, 40, 10, RngSeed(2));
        let b = boxes[0].unwrap();
        assert!(boxes[1].is_none());
        let img = &s.images[0];
        assert!(img.data()[b.y0 * 40 + b.x0] >= 0.85);
        assert_eq!(b.y1 - b.y0, 10);
    }
}
