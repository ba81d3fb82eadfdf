use alloc::vec::Vec;

use crate::tensor::Tensor;
use crate::{Error, Result};

/// Row-wise softmax of `[N, K]` logits, computed in `f64` after max subtraction.
pub fn softmax(logits: &Tensor) -> Result<Tensor> {
    let &[_, k] = logits.shape() else {
        return Err(Error::shape("softmax", logits.shape(), &[0, 0]));
    };
    let mut out = Vec::with_capacity(logits.len());
    for row in logits.data().chunks_exact(k) {
        out.extend(softmax_row(row).into_iter().map(|p| p as f32));
    }
    Tensor::new(logits.shape(), out)
}

fn softmax_row(row: &[f32]) -> Vec<f64> {
    let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
    let exps: Vec<f64> = row.iter().map(|&v| libm::exp(v as f64 - max)).collect();
    let total: f64 = exps.iter().sum();
    exps.into_iter().map(|e| e / total).collect()
}

/// Mean cross-entropy of `[N, K]` logits against class indices, plus `∂loss/∂logits`.
pub fn softmax_cross_entropy(logits: &Tensor, labels: &[usize]) -> Result<(f32, Tensor)> {
    let &[n, k] = logits.shape() else {
        return Err(Error::shape(
            "softmax_cross_entropy",
            logits.shape(),
            &[labels.len(), 2],
        ));
    };
    if n != labels.len() || n == 0 {
        return Err(Error::shape(
            "softmax_cross_entropy",
            logits.shape(),
            &[labels.len()],
        ));
    }
    if let Some(&bad) = labels.iter().find(|&&l| l >= k) {
        return Err(Error::InvalidArgument(alloc::format!(
            "label {bad} out of range for {k} classes"
        )));
    }
    let mut loss = 0.0f64;
    let mut grad = Vec::with_capacity(n * k);
    for (row, &label) in logits.data().chunks_exact(k).zip(labels) {
        let max = row.iter().copied().fold(f32::NEG_INFINITY, f32::max) as f64;
        let lse = libm::log(row.iter().map(|&v| libm::exp(v as f64 - max)).sum::<f64>()) + max;
        loss += lse - row[label] as f64;
        for (c, &v) in row.iter().enumerate() {
            let p = libm::exp(v as f64 - lse);
            let onehot = if c == label { 1.0 } else { 0.0 };
            grad.push(((p - onehot) / n as f64) as f32);
        }
    }
    Ok(((loss / n as f64) as f32, Tensor::new(logits.shape(), grad)?))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn saturated_correct_prediction() {
        let logits = Tensor::new(&[1, 2], alloc::vec![20.0, -20.0]).unwrap();
        let (loss, _) = softmax_cross_entropy(&logits, &[0]).unwrap();
        assert!(loss < 1e-6);
    }

    #[test]
    fn uniform_logits_give_ln2() {
        let logits = Tensor::zeros(&[2, 2]);
        for label in 0..2 {
            let (loss, grad) = softmax_cross_entropy(&logits, &[label, label]).unwrap();
            assert!((loss as f64 - core::f64::consts::LN_2).abs() < 1e-6);
            assert!((grad.data()[label] + 0.25).abs() < 1e-7);
        }
    }

    #[test]
    fn label_out_of_range() {
        assert!(softmax_cross_entropy(&Tensor::zeros(&[1, 2]), &[2]).is_err());
        assert!(softmax_cross_entropy(&Tensor::zeros(&[2, 2]), &[0]).is_err());
    }

    #[test]
    fn softmax_rows_sum_to_one() {
        let logits = Tensor::new(&[2, 3], alloc::vec![1.0, 2.0, 3.0, -50.0, 50.0, 0.0]).unwrap();
        let p = softmax(&logits).unwrap();
        for row in p.data().chunks_exact(3) {
            assert!(row.iter().all(|&v| v >= 0.0));
            assert!((row.iter().map(|&v| v as f64).sum::<f64>() - 1.0).abs() < 1e-6);
        }
    }
}
