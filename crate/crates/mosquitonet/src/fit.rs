//! Training driver: epochs with validation, plateau schedule, best-model
//! selection by validation loss, and k-fold cross-validation.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use mosquitonet_core::data::{batches, split_kfold, AugmentPolicy, BatchOptions, SampleSource};
use mosquitonet_core::metrics::{evaluate_predictions, MetricsReport};
use mosquitonet_core::train::{evaluate, train_epoch, Evaluation, Optimizer, PlateauScheduler};
use mosquitonet_core::{ModelConfig, MosquitoNet, RngSeed};

use crate::error::{Error, Result};
use crate::export::{model_id_hex, save_checkpoint};

/// Streams forked from the root seed.
pub mod streams {
    pub const INIT: u64 = 1;
    pub const SHUFFLE: u64 = 2;
    pub const AUGMENT: u64 = 3;
    pub const DROPOUT: u64 = 4;
    pub const FOLDS: u64 = 5;
    /// Fold `f` trains from `root.fork(FOLD_BASE + f)`.
    pub const FOLD_BASE: u64 = 100;
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum OptimizerChoice {
    Adam,
    Sgd,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SchedulerSettings {
    pub factor: f32,
    pub patience: usize,
    pub min_delta: f64,
    pub min_lr: f32,
}

impl Default for SchedulerSettings {
    fn default() -> Self {
        SchedulerSettings {
            factor: 0.1,
            patience: 3,
            min_delta: 1e-4,
            min_lr: 1e-6,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainSettings {
    pub epochs: usize,
    pub batch_size: usize,
    pub optimizer: OptimizerChoice,
    pub learning_rate: f32,
    /// Used by sgd only.
    pub momentum: f32,
    pub scheduler: SchedulerSettings,
    pub augment: AugmentPolicy,
    pub seed: RngSeed,
    /// Stop early once validation accuracy reaches this value.
    pub stop_at_accuracy: Option<f64>,
}

impl Default for TrainSettings {
    fn default() -> Self {
        TrainSettings {
            epochs: 30,
            batch_size: 32,
            optimizer: OptimizerChoice::Adam,
            learning_rate: 1e-3,
            momentum: 0.9,
            scheduler: SchedulerSettings::default(),
            augment: AugmentPolicy::default(),
            seed: RngSeed(0),
            stop_at_accuracy: None,
        }
    }
}

impl TrainSettings {
    fn optimizer(&self) -> Optimizer {
        match self.optimizer {
            OptimizerChoice::Adam => Optimizer::adam(self.learning_rate),
            OptimizerChoice::Sgd => Optimizer::sgd(self.learning_rate, self.momentum),
        }
    }

    fn scheduler(&self) -> PlateauScheduler {
        let s = &self.scheduler;
        PlateauScheduler::with_params(
            self.learning_rate,
            s.factor,
            s.patience,
            s.min_delta,
            s.min_lr,
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub learning_rate: f32,
    pub train_loss: f64,
    pub train_accuracy: f64,
    pub val_loss: f64,
    pub val: MetricsReport,
    pub wall_ms: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub checkpoint: Option<PathBuf>,
    pub model_id: Option<u32>,
}

fn opt(v: Option<f64>) -> String {
    v.map_or_else(|| "undefined".to_string(), |v| v.to_string())
}

impl TrainReport {
    /// One `key=value` record per epoch, then a summary record.
    pub fn to_text(&self) -> String {
        self.render(true)
    }

    /// [`TrainReport::to_text`] without the wall-clock fields.
    pub fn deterministic_text(&self) -> String {
        self.render(false)
    }

    fn render(&self, wall: bool) -> String {
        let mut s = String::new();
        for e in &self.epochs {
            let _ = write!(
                s,
                "epoch={} lr={} train_loss={} train_accuracy={} val_loss={} val_accuracy={} val_auc={}",
                e.epoch,
                e.learning_rate,
                e.train_loss,
                e.train_accuracy,
                e.val_loss,
                e.val.accuracy,
                opt(e.val.auc)
            );
            if wall {
                let _ = write!(s, " wall_ms={:.1}", e.wall_ms);
            }
            s.push('\n');
        }
        let _ = write!(
            s,
            "best_epoch={} best_val_loss={}",
            self.best_epoch, self.best_val_loss
        );
        if let Some(p) = &self.checkpoint {
            let _ = write!(s, " checkpoint={}", p.display());
        }
        if let Some(id) = self.model_id {
            let _ = write!(s, " model_id={}", model_id_hex(id));
        }
        s.push('\n');
        s
    }
}

pub struct Trained {
    /// Weights from the epoch with the lowest validation loss.
    pub model: MosquitoNet,
    pub report: TrainReport,
}

/// Eval-mode pass over `indices` in order, with metrics.
pub fn evaluate_indices<S: SampleSource + ?Sized>(
    model: &MosquitoNet,
    source: &S,
    indices: &[usize],
    batch_size: usize,
) -> Result<(Evaluation, MetricsReport)> {
    let opts = BatchOptions {
        batch_size,
        shuffle: None,
        augment: None,
    };
    let ev = evaluate(model, batches(source, indices, 0, &opts)?)?;
    let metrics = evaluate_predictions(&ev.predictions, &ev.truths, &ev.scores)?;
    Ok((ev, metrics))
}

/// Trains a fresh model on `train`, validating on `validation` after each epoch
/// (on `train` itself when `validation` is empty). The best model is written to
/// `checkpoint` once training ends.
pub fn fit<S: SampleSource + ?Sized>(
    config: &ModelConfig,
    settings: &TrainSettings,
    source: &S,
    train: &[usize],
    validation: &[usize],
    checkpoint: Option<&Path>,
) -> Result<Trained> {
    if train.is_empty() {
        return Err(Error::Dataset("no training samples".into()));
    }
    settings.augment.validate()?;
    let seed = settings.seed;
    let mut model = MosquitoNet::build(config.clone(), seed.fork(streams::INIT))?;
    let mut optimizer = settings.optimizer();
    let mut scheduler = settings.scheduler();
    let mut dropout_rng = seed.fork(streams::DROPOUT).rng();
    let opts = BatchOptions {
        batch_size: settings.batch_size,
        shuffle: Some(seed.fork(streams::SHUFFLE)),
        augment: settings
            .augment
            .enabled
            .then(|| (settings.augment.clone(), seed.fork(streams::AUGMENT))),
    };
    let val_idx = if validation.is_empty() {
        train
    } else {
        validation
    };

    let mut records = Vec::new();
    let mut best: Option<(usize, f64, MosquitoNet)> = None;
    for epoch in 0..settings.epochs {
        let start = Instant::now();
        let lr = optimizer.learning_rate;
        let summary = train_epoch(
            &mut model,
            batches(source, train, epoch, &opts)?,
            &mut optimizer,
            &mut dropout_rng,
            epoch + 1,
        )?;
        let (ev, val) = evaluate_indices(&model, source, val_idx, settings.batch_size)?;
        optimizer.learning_rate = scheduler.step(ev.loss);
        let wall_ms = start.elapsed().as_secs_f64() * 1e3;
        log::info!(
            "epoch {} lr {lr} train_loss {:.5} val_loss {:.5} val_accuracy {:.4}",
            epoch + 1,
            summary.loss,
            ev.loss,
            val.accuracy
        );
        if best.as_ref().is_none_or(|(_, l, _)| ev.loss < *l) {
            best = Some((epoch + 1, ev.loss, model.clone()));
        }
        let done = settings.stop_at_accuracy.is_some_and(|t| val.accuracy >= t);
        records.push(EpochRecord {
            epoch: epoch + 1,
            learning_rate: lr,
            train_loss: summary.loss,
            train_accuracy: summary.accuracy,
            val_loss: ev.loss,
            val,
            wall_ms,
        });
        if done {
            break;
        }
    }
    let (best_epoch, best_val_loss, best_model) = match best {
        Some(b) => b,
        None => (0, f64::NAN, model),
    };
    let model_id = checkpoint
        .map(|p| save_checkpoint(&best_model, p))
        .transpose()?;
    Ok(Trained {
        model: best_model,
        report: TrainReport {
            epochs: records,
            best_epoch,
            best_val_loss,
            checkpoint: checkpoint.map(Path::to_path_buf),
            model_id,
        },
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricSummary {
    pub name: &'static str,
    /// Absent when any fold left the metric undefined.
    pub mean: Option<f64>,
    /// Sample standard deviation (n - 1).
    pub std: Option<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct CVReport {
    /// Validation metrics of each fold's best model.
    pub folds: Vec<MetricsReport>,
    pub train_reports: Vec<TrainReport>,
    pub summary: Vec<MetricSummary>,
}

/// Mean and sample standard deviation.
pub fn mean_std(xs: &[f64]) -> (f64, f64) {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    if xs.len() < 2 {
        return (mean, 0.0);
    }
    let var = xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

pub fn summarize(folds: &[MetricsReport]) -> Vec<MetricSummary> {
    let Some(first) = folds.first() else {
        return Vec::new();
    };
    (0..first.columns().len())
        .map(|c| {
            let name = first.columns()[c].0;
            let values: Option<Vec<f64>> = folds.iter().map(|f| f.columns()[c].1).collect();
            let (mean, std) = match values {
                Some(v) => {
                    let (m, s) = mean_std(&v);
                    (Some(m), Some(s))
                }
                None => (None, None),
            };
            MetricSummary { name, mean, std }
        })
        .collect()
}

impl CVReport {
    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.summary.iter().find(|m| m.name == name)
    }

    /// One record per fold, then one per metric; wall-clock fields are omitted.
    pub fn to_text(&self) -> String {
        let mut s = String::new();
        for (i, f) in self.folds.iter().enumerate() {
            let _ = write!(s, "fold={}", i + 1);
            for (name, v) in f.columns() {
                let _ = write!(s, " {name}={}", opt(v));
            }
            s.push('\n');
        }
        for m in &self.summary {
            let _ = writeln!(
                s,
                "metric={} mean={} std={} folds={}",
                m.name,
                opt(m.mean),
                opt(m.std),
                self.folds.len()
            );
        }
        s
    }
}

/// Stratified k-fold cross-validation. Fold `f` gets a fresh model seeded from
/// `settings.seed.fork(FOLD_BASE + f)` and is scored with its best model.
/// With `checkpoint_dir`, each fold's best model is saved as `fold<N>.mqt`.
pub fn run_cross_validation<S: SampleSource + ?Sized>(
    config: &ModelConfig,
    settings: &TrainSettings,
    source: &S,
    k: usize,
    checkpoint_dir: Option<&Path>,
) -> Result<CVReport> {
    let labels: Vec<_> = (0..source.len()).map(|i| source.label(i)).collect();
    let folds = split_kfold(&labels, k, settings.seed.fork(streams::FOLDS))?;
    let mut metrics = Vec::with_capacity(k);
    let mut reports = Vec::with_capacity(k);
    for (f, fold) in folds.iter().enumerate() {
        let run = || -> Result<(MetricsReport, TrainReport)> {
            let fold_settings = TrainSettings {
                seed: settings.seed.fork(streams::FOLD_BASE + f as u64),
                ..settings.clone()
            };
            let path = checkpoint_dir.map(|d| d.join(format!("fold{}.mqt", f + 1)));
            let trained = fit(
                config,
                &fold_settings,
                source,
                &fold.train,
                &fold.validation,
                path.as_deref(),
            )?;
            let (_, m) = evaluate_indices(
                &trained.model,
                source,
                &fold.validation,
                settings.batch_size,
            )?;
            Ok((m, trained.report))
        };
        let (m, r) = run().map_err(|e| Error::Fold {
            fold: f + 1,
            source: Box::new(e),
        })?;
        log::info!("fold {}/{k}: accuracy {:.4}", f + 1, m.accuracy);
        metrics.push(m);
        reports.push(r);
    }
    Ok(CVReport {
        summary: summarize(&metrics),
        folds: metrics,
        train_reports: reports,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn mean_std_small_cases() {
        assert_eq!(mean_std(&[0.5, 0.5, 0.5]), (0.5, 0.0));
        let (m, s) = mean_std(&[1.0, 2.0, 3.0, 4.0]);
        assert_eq!(m, 2.5);
        assert!((s - (5.0f64 / 3.0).sqrt()).abs() < 1e-12);
    }

    #[test]
    fn summary_marks_missing_auc() {
        let a = MetricsReport {
            accuracy: 0.8,
            auc: Some(0.9),
            ..Default::default()
        };
        let b = MetricsReport {
            accuracy: 0.6,
            auc: None,
            ..Default::default()
        };
        let s = summarize(&[a, b]);
        assert_eq!(s[0].name, "accuracy");
        assert!((s[0].mean.unwrap() - 0.7).abs() < 1e-12);
        assert_eq!(s[1].mean, None);
    }
}
