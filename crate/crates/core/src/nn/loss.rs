//! Class-weighted negative log-likelihood over log-softmax outputs.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Row-wise log-softmax, stabilized by max subtraction.
pub fn log_softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = logits.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let max = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let lse = max + row.iter().map(|v| (v - max).exp()).sum::<f64>().ln();
        for v in row {
            *v -= lse;
        }
    }
    out
}

/// Row-wise softmax probabilities.
pub fn softmax_rows(logits: &Matrix) -> Matrix {
    let mut out = log_softmax_rows(logits);
    out.map_inplace(f64::exp);
    out
}

fn check_targets(logits: &Matrix, targets: &[u32]) -> Result<()> {
    if targets.len() != logits.rows() {
        return Err(Error::shape(format!(
            "{} targets for a batch of {} rows",
            targets.len(),
            logits.rows()
        )));
    }
    let k = logits.cols();
    if let Some(&bad) = targets.iter().find(|&&t| t as usize >= k) {
        return Err(Error::data(format!(
            "target class {bad} out of range for {k} classes"
        )));
    }
    Ok(())
}

/// Mean over the batch of `class_weights[y_i] * (-log_softmax(logits_i)[y_i])`.
pub fn loss_weighted_nll(logits: &Matrix, targets: &[u32], class_weights: &[f64]) -> Result<f64> {
    check_targets(logits, targets)?;
    if class_weights.len() != logits.cols() {
        return Err(Error::shape(format!(
            "{} class weights for {} classes",
            class_weights.len(),
            logits.cols()
        )));
    }
    if class_weights.iter().any(|&w| w <= 0.0) {
        return Err(Error::config("class weights must be strictly positive"));
    }
    let logp = log_softmax_rows(logits);
    let mut total = 0.0;
    for (r, &y) in targets.iter().enumerate() {
        total += class_weights[y as usize] * (-logp.get(r, y as usize));
    }
    Ok(total / targets.len() as f64)
}

/// Loss plus its gradient with respect to the logits:
/// `(softmax - onehot) * class_weight / batch`.
pub fn loss_and_grad(
    logits: &Matrix,
    targets: &[u32],
    class_weights: &[f64],
) -> Result<(f64, Matrix)> {
    let loss = loss_weighted_nll(logits, targets, class_weights)?;
    let mut grad = softmax_rows(logits);
    let b = targets.len() as f64;
    for (r, &y) in targets.iter().enumerate() {
        let w = class_weights[y as usize] / b;
        let row = grad.row_mut(r);
        row[y as usize] -= 1.0;
        for v in row {
            *v *= w;
        }
    }
    Ok((loss, grad))
}
