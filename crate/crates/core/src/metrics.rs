//! Binary diagnostic metrics with parasitized (class 1) as the positive class.

use alloc::format;
use alloc::vec::Vec;

use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct ConfusionMatrix {
    pub tp: u64,
    pub tn: u64,
    pub fp: u64,
    pub fn_: u64,
}

impl ConfusionMatrix {
    pub fn total(&self) -> u64 {
        self.tp + self.tn + self.fp + self.fn_
    }

    /// Positives and negatives in the ground truth.
    pub fn class_counts(&self) -> (u64, u64) {
        (self.tp + self.fn_, self.tn + self.fp)
    }
}

pub fn confusion(predictions: &[usize], truths: &[usize]) -> Result<ConfusionMatrix> {
    if predictions.len() != truths.len() {
        return Err(Error::shape(
            "confusion",
            &[predictions.len()],
            &[truths.len()],
        ));
    }
    if predictions.is_empty() {
        return Err(Error::Domain("confusion matrix of zero samples".into()));
    }
    let mut cm = ConfusionMatrix::default();
    for (&p, &t) in predictions.iter().zip(truths) {
        match (p, t) {
            (1, 1) => cm.tp += 1,
            (0, 0) => cm.tn += 1,
            (1, 0) => cm.fp += 1,
            (0, 1) => cm.fn_ += 1,
            _ => {
                return Err(Error::InvalidArgument(format!(
                    "class indices must be 0 or 1, got prediction {p}, truth {t}"
                )))
            }
        }
    }
    Ok(cm)
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct MetricsReport {
    pub accuracy: f64,
    pub precision: f64,
    pub sensitivity: f64,
    /// `tn / (tn + fp)`.
    pub specificity: f64,
    pub f1: f64,
    pub mcc: f64,
    /// Absent until scores are supplied.
    pub auc: Option<f64>,
    /// Metrics whose denominator was zero; they are reported as 0.
    pub undefined: Vec<&'static str>,
}

impl MetricsReport {
    /// `(name, value)` in Table-1 column order: accuracy, AUC, sensitivity, specificity, F1, MCC, then precision.
    pub fn columns(&self) -> [(&'static str, Option<f64>); 7] {
        [
            ("accuracy", Some(self.accuracy)),
            ("auc", self.auc),
            ("sensitivity", Some(self.sensitivity)),
            ("specificity", Some(self.specificity)),
            ("f1", Some(self.f1)),
            ("mcc", Some(self.mcc)),
            ("precision", Some(self.precision)),
        ]
    }
}

fn ratio(num: u64, den: u64, name: &'static str, undefined: &mut Vec<&'static str>) -> f64 {
    if den == 0 {
        undefined.push(name);
        0.0
    } else {
        num as f64 / den as f64
    }
}

/// Every metric except AUC. Zero denominators give 0 and are listed in `undefined`.
pub fn compute_metrics(cm: &ConfusionMatrix) -> Result<MetricsReport> {
    let total = cm.total();
    if total == 0 {
        return Err(Error::Domain("metrics of an empty confusion matrix".into()));
    }
    let ConfusionMatrix { tp, tn, fp, fn_ } = *cm;
    let mut undefined = Vec::new();
    let accuracy = (tp + tn) as f64 / total as f64;
    let precision = ratio(tp, tp + fp, "precision", &mut undefined);
    let sensitivity = ratio(tp, tp + fn_, "sensitivity", &mut undefined);
    let specificity = ratio(tn, tn + fp, "specificity", &mut undefined);
    let f1 = if precision > 0.0 && sensitivity > 0.0 {
        2.0 / (1.0 / precision + 1.0 / sensitivity)
    } else {
        if tp + fp == 0 || tp + fn_ == 0 {
            undefined.push("f1");
        }
        0.0
    };
    let (tp, tn, fp, fn_) = (tp as f64, tn as f64, fp as f64, fn_ as f64);
    let den = (tp + fp) * (tp + fn_) * (tn + fp) * (tn + fn_);
    let mcc = if den == 0.0 {
        undefined.push("mcc");
        0.0
    } else {
        (tp * tn - fp * fn_) / libm::sqrt(den)
    };
    Ok(MetricsReport {
        accuracy,
        precision,
        sensitivity,
        specificity,
        f1,
        mcc,
        auc: None,
        undefined,
    })
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScoredSample {
    /// Probability of the positive class.
    pub score: f64,
    /// 1 for parasitized, 0 for uninfected.
    pub truth: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RocCurve {
    /// `(fpr, tpr)` from `(0, 0)` to `(1, 1)`, one point per distinct threshold.
    pub points: Vec<(f64, f64)>,
    pub auc: f64,
}

/// ROC curve swept over distinct scores (descending) and its trapezoidal area.
///
/// Tied scores form a single step, so a tie contributes half credit; the area
/// equals `P(score⁺ > score⁻) + ½·P(tie)`.
pub fn roc_auc(samples: &[ScoredSample]) -> Result<RocCurve> {
    if let Some(s) = samples
        .iter()
        .find(|s| !(0.0..=1.0).contains(&s.score) || s.truth > 1)
    {
        return Err(Error::InvalidArgument(format!(
            "scored sample out of range: score {}, truth {}",
            s.score, s.truth
        )));
    }
    let pos = samples.iter().filter(|s| s.truth == 1).count();
    let neg = samples.len() - pos;
    if pos == 0 || neg == 0 {
        return Err(Error::Domain(format!(
            "AUC undefined with {pos} positive and {neg} negative samples"
        )));
    }
    let mut order: Vec<usize> = (0..samples.len()).collect();
    // stable: equal scores keep input order
    order.sort_by(|&a, &b| samples[b].score.total_cmp(&samples[a].score));

    let mut points = alloc::vec![(0.0, 0.0)];
    let (mut tp, mut fp) = (0usize, 0usize);
    let mut auc = 0.0;
    let mut i = 0;
    while i < order.len() {
        let score = samples[order[i]].score;
        while i < order.len() && samples[order[i]].score == score {
            if samples[order[i]].truth == 1 {
                tp += 1;
            } else {
                fp += 1;
            }
            i += 1;
        }
        let point = (fp as f64 / neg as f64, tp as f64 / pos as f64);
        let prev = *points.last().expect("starts with origin");
        auc += (point.0 - prev.0) * (point.1 + prev.1) / 2.0;
        points.push(point);
    }
    Ok(RocCurve { points, auc })
}

/// Full report from hard predictions, truths and positive-class scores.
pub fn evaluate_predictions(
    predictions: &[usize],
    truths: &[usize],
    scores: &[f64],
) -> Result<MetricsReport> {
    let mut report = compute_metrics(&confusion(predictions, truths)?)?;
    if scores.len() != truths.len() {
        return Err(Error::shape(
            "evaluate_predictions",
            &[scores.len()],
            &[truths.len()],
        ));
    }
    let samples: Vec<ScoredSample> = scores
        .iter()
        .zip(truths)
        .map(|(&score, &truth)| ScoredSample { score, truth })
        .collect();
    match roc_auc(&samples) {
        Ok(roc) => report.auc = Some(roc.auc),
        Err(Error::Domain(_)) => report.undefined.push("auc"),
        Err(e) => return Err(e),
    }
    Ok(report)
}
