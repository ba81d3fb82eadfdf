//! Augmentation, stratified fold splitting, and minibatch assembly.
//!
//! Image decoding lives outside this crate; anything that can hand out
//! preprocessed `[C, H, W]` tensors implements [`SampleSource`].

use alloc::format;
use alloc::vec::Vec;

use rand::seq::SliceRandom;
use rand::Rng;

use crate::imageops::{flip_horizontal, flip_vertical};
use crate::model::ClassLabel;
use crate::tensor::Tensor;
use crate::{Error, Result, RngSeed};

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentPolicy {
    pub enabled: bool,
    pub horizontal_flip_p: f32,
    pub vertical_flip_p: f32,
    /// Multiplicative brightness factor interval.
    pub brightness: (f32, f32),
    /// Contrast factor interval, applied about the per-image mean.
    pub contrast: (f32, f32),
}

impl Default for AugmentPolicy {
    fn default() -> Self {
        AugmentPolicy {
            enabled: true,
            horizontal_flip_p: 0.5,
            vertical_flip_p: 0.5,
            brightness: (0.9, 1.1),
            contrast: (0.9, 1.1),
        }
    }
}

impl AugmentPolicy {
    pub fn disabled() -> Self {
        AugmentPolicy {
            enabled: false,
            ..Self::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        for (name, p) in [
            ("horizontal_flip_p", self.horizontal_flip_p),
            ("vertical_flip_p", self.vertical_flip_p),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::InvalidArgument(format!(
                    "{name} = {p} outside [0, 1]"
                )));
            }
        }
        for (name, (lo, hi)) in [("brightness", self.brightness), ("contrast", self.contrast)] {
            if !(lo <= 1.0 && 1.0 <= hi) {
                return Err(Error::InvalidArgument(format!(
                    "{name} interval [{lo}, {hi}] must contain 1.0"
                )));
            }
        }
        Ok(())
    }
}

fn sample_factor<R: Rng>(rng: &mut R, (lo, hi): (f32, f32)) -> f32 {
    if lo < hi {
        rng.random_range(lo..=hi)
    } else {
        lo
    }
}

/// Random flips, then brightness and contrast jitter, clamped to `[0, 1]`.
///
/// Every random decision is drawn even when its effect is disabled, so the
/// stream position does not depend on earlier outcomes.
pub fn augment(image: &Tensor, policy: &AugmentPolicy, seed: RngSeed) -> Result<Tensor> {
    if !policy.enabled {
        return Ok(image.clone());
    }
    policy.validate()?;
    let mut rng = seed.rng();
    let hflip = rng.random::<f32>() < policy.horizontal_flip_p;
    let vflip = rng.random::<f32>() < policy.vertical_flip_p;
    let brightness = sample_factor(&mut rng, policy.brightness);
    let contrast = sample_factor(&mut rng, policy.contrast);

    let mut out = image.clone();
    if hflip {
        out = flip_horizontal(&out)?;
    }
    if vflip {
        out = flip_vertical(&out)?;
    }
    if brightness != 1.0 {
        for v in out.data_mut() {
            *v = (*v * brightness).clamp(0.0, 1.0);
        }
    }
    if contrast != 1.0 {
        let mean = out.data().iter().map(|&v| v as f64).sum::<f64>() / out.len().max(1) as f64;
        let mean = mean as f32;
        for v in out.data_mut() {
            *v = ((*v - mean) * contrast + mean).clamp(0.0, 1.0);
        }
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Fold {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
}

/// Stratified k-fold split over sample labels.
///
/// Each class is shuffled and dealt round-robin across folds, continuing the
/// deal where the previous class stopped, so fold sizes differ by at most one
/// and every fold's class counts are within one of the exact proportion.
pub fn split_kfold(labels: &[ClassLabel], k: usize, seed: RngSeed) -> Result<Vec<Fold>> {
    if k < 2 {
        return Err(Error::InvalidArgument(format!(
            "k-fold needs k >= 2, got {k}"
        )));
    }
    let mut rng = seed.rng();
    let mut assignment = alloc::vec![0usize; labels.len()];
    let mut next = 0;
    for class in ClassLabel::ALL {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| labels[i] == class).collect();
        if idx.len() < k {
            return Err(Error::InvalidArgument(format!(
                "class {class} has {} samples, fewer than k = {k}",
                idx.len()
            )));
        }
        idx.shuffle(&mut rng);
        for i in idx {
            assignment[i] = next % k;
            next += 1;
        }
    }
    Ok((0..k)
        .map(|f| {
            let (validation, train) = (0..labels.len()).partition(|&i| assignment[i] == f);
            Fold { train, validation }
        })
        .collect())
}

/// Anything that yields labelled, preprocessed `[C, H, W]` images in `[0, 1]`.
pub trait SampleSource {
    fn len(&self) -> usize;
    fn label(&self, index: usize) -> ClassLabel;
    fn load(&self, index: usize) -> Result<Tensor>;

    fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Samples held in memory.
#[derive(Debug, Clone, Default)]
pub struct MemorySource {
    pub images: Vec<Tensor>,
    pub labels: Vec<ClassLabel>,
}

impl SampleSource for MemorySource {
    fn len(&self) -> usize {
        self.images.len()
    }

    fn label(&self, index: usize) -> ClassLabel {
        self.labels[index]
    }

    fn load(&self, index: usize) -> Result<Tensor> {
        self.images
            .get(index)
            .cloned()
            .ok_or_else(|| Error::Source(format!("index {index} out of range")))
    }
}

#[derive(Debug, Clone)]
pub struct Batch {
    /// `[N, C, H, W]`
    pub images: Tensor,
    pub labels: Vec<usize>,
}

impl Batch {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn stack(images: &[Tensor], labels: Vec<usize>) -> Result<Batch> {
        let first = images
            .first()
            .ok_or_else(|| Error::InvalidArgument("batch needs at least one image".into()))?;
        let shape = first.shape().to_vec();
        let mut data = Vec::with_capacity(first.len() * images.len());
        for img in images {
            if img.shape() != shape.as_slice() {
                return Err(Error::shape("batch", &shape, img.shape()));
            }
            data.extend_from_slice(img.data());
        }
        let mut full = alloc::vec![images.len()];
        full.extend_from_slice(&shape);
        Ok(Batch {
            images: Tensor::new(&full, data)?,
            labels,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BatchOptions {
    pub batch_size: usize,
    /// Shuffle seed; `None` keeps the given index order.
    pub shuffle: Option<RngSeed>,
    pub augment: Option<(AugmentPolicy, RngSeed)>,
}

/// Visiting order for one epoch. The permutation depends on `(seed, epoch)` only.
pub fn epoch_order(indices: &[usize], shuffle: Option<RngSeed>, epoch: usize) -> Vec<usize> {
    let mut order = indices.to_vec();
    if let Some(seed) = shuffle {
        order.shuffle(&mut seed.fork(epoch as u64).rng());
    }
    order
}

/// Streams one epoch of minibatches. Every index appears exactly once; the last batch may be short.
pub struct BatchIter<'a, S: SampleSource + ?Sized> {
    source: &'a S,
    order: Vec<usize>,
    pos: usize,
    batch_size: usize,
    augment: Option<(AugmentPolicy, RngSeed)>,
}

pub fn batches<'a, S: SampleSource + ?Sized>(
    source: &'a S,
    indices: &[usize],
    epoch: usize,
    opts: &BatchOptions,
) -> Result<BatchIter<'a, S>> {
    if opts.batch_size == 0 {
        return Err(Error::InvalidArgument(
            "batch_size must be at least 1".into(),
        ));
    }
    if let Some(&bad) = indices.iter().find(|&&i| i >= source.len()) {
        return Err(Error::InvalidArgument(format!(
            "sample index {bad} out of range for {} samples",
            source.len()
        )));
    }
    let augment = opts
        .augment
        .as_ref()
        .map(|(p, seed)| (p.clone(), seed.fork(epoch as u64)));
    Ok(BatchIter {
        source,
        order: epoch_order(indices, opts.shuffle, epoch),
        pos: 0,
        batch_size: opts.batch_size,
        augment,
    })
}

impl<S: SampleSource + ?Sized> BatchIter<'_, S> {
    pub fn order(&self) -> &[usize] {
        &self.order
    }

    fn load(&self, idx: usize) -> Result<Tensor> {
        let img = self.source.load(idx)?;
        match &self.augment {
            Some((policy, seed)) => augment(&img, policy, seed.fork(idx as u64)),
            None => Ok(img),
        }
    }
}

impl<S: SampleSource + ?Sized> Iterator for BatchIter<'_, S> {
    type Item = Result<Batch>;

    fn next(&mut self) -> Option<Self::Item> {
        if self.pos >= self.order.len() {
            return None;
        }
        let end = (self.pos + self.batch_size).min(self.order.len());
        let idx = &self.order[self.pos..end];
        self.pos = end;
        let images: Result<Vec<Tensor>> = idx.iter().map(|&i| self.load(i)).collect();
        let labels = idx.iter().map(|&i| self.source.label(i).index()).collect();
        Some(images.and_then(|imgs| Batch::stack(&imgs, labels)))
    }
}
