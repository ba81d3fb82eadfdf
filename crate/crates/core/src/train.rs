//! Optimizers, the reduce-on-plateau learning-rate schedule, and the
//! per-epoch training and evaluation loops.

use alloc::format;
use alloc::vec::Vec;

use rand::Rng;

use crate::data::Batch;
use crate::model::MosquitoNet;
use crate::nn::{softmax, softmax_cross_entropy, Parameter};
use crate::tensor::argmax;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerKind {
    SgdMomentum { momentum: f32 },
    Adam { beta1: f32, beta2: f32, eps: f32 },
}

impl OptimizerKind {
    pub const ADAM: OptimizerKind = OptimizerKind::Adam {
        beta1: 0.9,
        beta2: 0.999,
        eps: 1e-8,
    };
}

#[derive(Debug, Clone)]
pub struct Optimizer {
    pub kind: OptimizerKind,
    pub learning_rate: f32,
    first: Vec<Vec<f32>>,
    second: Vec<Vec<f32>>,
    steps: u64,
}

impl Optimizer {
    pub fn new(kind: OptimizerKind, learning_rate: f32) -> Self {
        Optimizer {
            kind,
            learning_rate,
            first: Vec::new(),
            second: Vec::new(),
            steps: 0,
        }
    }

    /// Adam with beta1 0.9, beta2 0.999, eps 1e-8.
    pub fn adam(learning_rate: f32) -> Self {
        Self::new(OptimizerKind::ADAM, learning_rate)
    }

    pub fn sgd(learning_rate: f32, momentum: f32) -> Self {
        Self::new(OptimizerKind::SgdMomentum { momentum }, learning_rate)
    }

    pub fn steps(&self) -> u64 {
        self.steps
    }

    /// Applies one update from the accumulated gradients. Moment buffers are
    /// created on the first call and must keep matching the parameter shapes.
    pub fn step(&mut self, params: Vec<&mut Parameter>) -> Result<()> {
        if self.first.is_empty() {
            self.first = params.iter().map(|p| alloc::vec![0.0; p.len()]).collect();
            if matches!(self.kind, OptimizerKind::Adam { .. }) {
                self.second = self.first.clone();
            }
        }
        if self.first.len() != params.len()
            || self
                .first
                .iter()
                .zip(&params)
                .any(|(m, p)| m.len() != p.len())
        {
            return Err(Error::State(
                "optimizer state does not match the parameter set".into(),
            ));
        }
        self.steps += 1;
        let lr = self.learning_rate;
        match self.kind {
            OptimizerKind::SgdMomentum { momentum } => {
                for (p, vel) in params.into_iter().zip(&mut self.first) {
                    let Parameter { value, grad } = p;
                    for ((w, &g), v) in value
                        .data_mut()
                        .iter_mut()
                        .zip(grad.data())
                        .zip(vel.iter_mut())
                    {
                        *v = momentum * *v + g;
                        *w -= lr * *v;
                    }
                }
            }
            OptimizerKind::Adam { beta1, beta2, eps } => {
                let t = self.steps as i32;
                let bc1 = 1.0 - libm::pow(beta1 as f64, t as f64);
                let bc2 = 1.0 - libm::pow(beta2 as f64, t as f64);
                let step = (lr as f64 / bc1) as f32;
                let bc2_sqrt = libm::sqrt(bc2) as f32;
                for ((p, m), v) in params
                    .into_iter()
                    .zip(&mut self.first)
                    .zip(&mut self.second)
                {
                    let Parameter { value, grad } = p;
                    for (((w, &g), m), v) in value
                        .data_mut()
                        .iter_mut()
                        .zip(grad.data())
                        .zip(m.iter_mut())
                        .zip(v.iter_mut())
                    {
                        *m = beta1 * *m + (1.0 - beta1) * g;
                        *v = beta2 * *v + (1.0 - beta2) * g * g;
                        *w -= step * *m / (libm::sqrtf(*v) / bc2_sqrt + eps);
                    }
                }
            }
        }
        Ok(())
    }
}

/// Reduce-learning-rate-on-plateau, monitoring validation loss.
#[derive(Debug, Clone, PartialEq)]
pub struct PlateauScheduler {
    pub factor: f32,
    pub patience: usize,
    pub min_delta: f64,
    pub min_lr: f32,
    lr: f32,
    best: f64,
    since_improvement: usize,
}

impl PlateauScheduler {
    /// Factor 0.1, patience 3, min_delta 1e-4, min_lr 1e-6.
    pub fn new(initial_lr: f32) -> Self {
        Self::with_params(initial_lr, 0.1, 3, 1e-4, 1e-6)
    }

    pub fn with_params(
        initial_lr: f32,
        factor: f32,
        patience: usize,
        min_delta: f64,
        min_lr: f32,
    ) -> Self {
        PlateauScheduler {
            factor,
            patience,
            min_delta,
            min_lr,
            lr: initial_lr,
            best: f64::INFINITY,
            since_improvement: 0,
        }
    }

    pub fn lr(&self) -> f32 {
        self.lr
    }

    pub fn best(&self) -> f64 {
        self.best
    }

    pub fn epochs_since_improvement(&self) -> usize {
        self.since_improvement
    }

    /// Records one validation loss and returns the learning rate for the next epoch.
    pub fn step(&mut self, val_loss: f64) -> f32 {
        if val_loss < self.best - self.min_delta {
            self.best = val_loss;
            self.since_improvement = 0;
        } else {
            self.since_improvement += 1;
            if self.since_improvement > self.patience {
                self.lr = (self.lr * self.factor).max(self.min_lr).min(self.lr);
                self.since_improvement = 0;
            }
        }
        self.lr
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EpochSummary {
    /// Batch-size-weighted mean training loss.
    pub loss: f64,
    /// Train-mode accuracy of the logits seen during the epoch.
    pub accuracy: f64,
    pub samples: usize,
}

/// One pass over `batches` with one optimizer step per batch.
///
/// `epoch` only labels diagnostics. A non-finite batch loss aborts before the
/// corresponding update is applied.
pub fn train_epoch<I, R>(
    model: &mut MosquitoNet,
    batches: I,
    optimizer: &mut Optimizer,
    dropout_rng: &mut R,
    epoch: usize,
) -> Result<EpochSummary>
where
    I: IntoIterator<Item = Result<Batch>>,
    R: Rng + ?Sized,
{
    let mut total = 0.0f64;
    let mut correct = 0usize;
    let mut samples = 0usize;
    for (bi, batch) in batches.into_iter().enumerate() {
        let batch = batch?;
        model.zero_grad();
        let (logits, trace) = model.forward_train(&batch.images, dropout_rng)?;
        let (loss, grad) = softmax_cross_entropy(&logits, &batch.labels)?;
        if !loss.is_finite() {
            return Err(Error::NonFiniteLoss { epoch, batch: bi });
        }
        model.backward(&trace, &grad)?;
        optimizer.step(model.parameters_mut())?;
        total += loss as f64 * batch.len() as f64;
        samples += batch.len();
        correct += logits
            .data()
            .chunks_exact(2)
            .zip(&batch.labels)
            .filter(|(row, &l)| argmax(row) == l)
            .count();
    }
    if samples == 0 {
        return Err(Error::InvalidArgument(format!(
            "epoch {epoch} received no batches"
        )));
    }
    Ok(EpochSummary {
        loss: total / samples as f64,
        accuracy: correct as f64 / samples as f64,
        samples,
    })
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Evaluation {
    /// Mean cross-entropy.
    pub loss: f64,
    pub predictions: Vec<usize>,
    pub truths: Vec<usize>,
    /// Probability of the parasitized class per sample.
    pub scores: Vec<f64>,
}

impl Evaluation {
    pub fn accuracy(&self) -> f64 {
        let hits = self
            .predictions
            .iter()
            .zip(&self.truths)
            .filter(|(a, b)| a == b)
            .count();
        hits as f64 / self.truths.len().max(1) as f64
    }
}

/// Eval-mode pass collecting loss, predictions and scores. Does not mutate the model.
pub fn evaluate<I>(model: &MosquitoNet, batches: I) -> Result<Evaluation>
where
    I: IntoIterator<Item = Result<Batch>>,
{
    let mut ev = Evaluation::default();
    let mut total = 0.0f64;
    for batch in batches {
        let batch = batch?;
        let logits = model.forward_eval(&batch.images)?;
        let (loss, _) = softmax_cross_entropy(&logits, &batch.labels)?;
        total += loss as f64 * batch.len() as f64;
        let probs = softmax(&logits)?;
        for row in probs.data().chunks_exact(2) {
            ev.predictions.push(argmax(row));
            ev.scores.push(row[1] as f64);
        }
        ev.truths.extend_from_slice(&batch.labels);
    }
    if ev.truths.is_empty() {
        return Err(Error::InvalidArgument(
            "evaluation received no samples".into(),
        ));
    }
    ev.loss = total / ev.truths.len() as f64;
    Ok(ev)
}
