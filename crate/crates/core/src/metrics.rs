//! Classification metrics and cross-client summaries.
//!
//! - weighted F1: per-class F1 averaged with weights equal to true-class
//!   support; a class with no true and no predicted positives contributes 0.
//! - one-vs-one ROC AUC: unweighted mean of pairwise AUCs over ordered class
//!   pairs, each restricted to samples of the two classes and scored by the
//!   positive class's column; ties count one half.
//! - balanced accuracy: mean per-class recall over classes that occur.
//! - summaries: per-client seed average, client mean, worst client, and the
//!   population SD across seeds of the per-seed median client score.

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// Test-set scores of one client under one seed.
#[derive(Clone, Debug)]
pub struct ClientScore {
    pub client: String,
    pub seed: u64,
    pub f1: f64,
    pub roc_auc: f64,
    pub balanced_acc: f64,
}

fn check_lengths(y_true: &[u32], y_pred: &[u32]) -> Result<usize> {
    if y_true.is_empty() {
        return Err(Error::data("metrics need at least one sample"));
    }
    if y_true.len() != y_pred.len() {
        return Err(Error::shape(format!(
            "y_true has {} labels, y_pred has {}",
            y_true.len(),
            y_pred.len()
        )));
    }
    Ok(y_true
        .iter()
        .chain(y_pred.iter())
        .map(|&y| y as usize + 1)
        .max()
        .unwrap())
}

/// Support-weighted mean of per-class F1 scores.
pub fn f1_weighted(y_true: &[u32], y_pred: &[u32]) -> Result<f64> {
    let k = check_lengths(y_true, y_pred)?;
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fn_ = vec![0usize; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        if t == p {
            tp[t as usize] += 1;
        } else {
            fp[p as usize] += 1;
            fn_[t as usize] += 1;
        }
    }
    let mut total = 0.0;
    for c in 0..k {
        let support = tp[c] + fn_[c];
        if support == 0 {
            continue;
        }
        let denom = 2 * tp[c] + fp[c] + fn_[c];
        // zero-division convention: a class never predicted correctly
        // contributes F1 = 0
        let f1 = if denom == 0 { 0.0 } else { 2.0 * tp[c] as f64 / denom as f64 };
        total += support as f64 * f1;
    }
    Ok(total / y_true.len() as f64)
}

/// Mean per-class recall; classes absent from `y_true` are excluded.
pub fn balanced_accuracy(y_true: &[u32], y_pred: &[u32]) -> Result<f64> {
    let k = check_lengths(y_true, y_pred)?;
    let mut correct = vec![0usize; k];
    let mut support = vec![0usize; k];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        support[t as usize] += 1;
        if t == p {
            correct[t as usize] += 1;
        }
    }
    let mut total = 0.0;
    let mut classes = 0usize;
    for c in 0..k {
        if support[c] > 0 {
            total += correct[c] as f64 / support[c] as f64;
            classes += 1;
        }
    }
    Ok(total / classes as f64)
}

/// AUC of one ordered pair: probability that a `pos` sample outranks a `neg`
/// sample under `scores` column `col`, ties counting one half.
fn pairwise_auc(y_true: &[u32], scores: &Matrix, pos: u32, neg: u32, col: usize) -> Option<f64> {
    let pos_scores: Vec<f64> = y_true
        .iter()
        .enumerate()
        .filter(|(_, &y)| y == pos)
        .map(|(i, _)| scores.get(i, col))
        .collect();
    let neg_scores: Vec<f64> = y_true
        .iter()
        .enumerate()
        .filter(|(_, &y)| y == neg)
        .map(|(i, _)| scores.get(i, col))
        .collect();
    if pos_scores.is_empty() || neg_scores.is_empty() {
        return None;
    }
    let mut wins = 0.0;
    for &p in &pos_scores {
        for &n in &neg_scores {
            if p > n {
                wins += 1.0;
            } else if p == n {
                wins += 0.5;
            }
        }
    }
    Some(wins / (pos_scores.len() * neg_scores.len()) as f64)
}

/// One-vs-one ROC AUC (macro over ordered class pairs).
pub fn roc_auc_ovo(y_true: &[u32], scores: &Matrix) -> Result<f64> {
    if y_true.is_empty() {
        return Err(Error::data("metrics need at least one sample"));
    }
    if y_true.len() != scores.rows() {
        return Err(Error::shape(format!(
            "{} labels for a {}-row score matrix",
            y_true.len(),
            scores.rows()
        )));
    }
    if scores.as_slice().iter().any(|v| !v.is_finite()) {
        return Err(Error::data("score matrix contains non-finite values"));
    }
    let k = scores.cols();
    let mut present = vec![false; k];
    for &y in y_true {
        if y as usize >= k {
            return Err(Error::data(format!(
                "label {y} out of range for {k} score columns"
            )));
        }
        present[y as usize] = true;
    }
    if present.iter().filter(|&&p| p).count() < 2 {
        return Err(Error::data("one-vs-one AUC needs at least 2 classes present"));
    }
    let mut total = 0.0;
    let mut pairs = 0usize;
    for a in 0..k as u32 {
        for b in 0..k as u32 {
            if a == b {
                continue;
            }
            if let Some(auc) = pairwise_auc(y_true, scores, a, b, a as usize) {
                total += auc;
                pairs += 1;
            }
        }
    }
    if pairs == 0 {
        return Err(Error::data("every class pair was empty"));
    }
    Ok(total / pairs as f64)
}

/// Summary of one score column over a set of client results.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MetricSummary {
    /// Mean over clients of the per-client seed average.
    pub mean: f64,
    /// Worst per-client seed average.
    pub worst: f64,
    /// Population SD across seeds of the per-seed median client score.
    pub seed_sd: f64,
}

/// Summaries of all three metrics.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Summary {
    pub f1: MetricSummary,
    pub roc_auc: MetricSummary,
    pub balanced_acc: MetricSummary,
}

fn median(sorted: &mut [f64]) -> f64 {
    sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let n = sorted.len();
    if n % 2 == 1 {
        sorted[n / 2]
    } else {
        (sorted[n / 2 - 1] + sorted[n / 2]) / 2.0
    }
}

fn population_sd(xs: &[f64]) -> f64 {
    let n = xs.len() as f64;
    let mean = xs.iter().sum::<f64>() / n;
    (xs.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / n).sqrt()
}

fn summarize_metric(scores: &[ClientScore], get: impl Fn(&ClientScore) -> f64) -> MetricSummary {
    // per-client seed averages, then client mean / worst
    let mut clients: Vec<&str> = scores.iter().map(|s| s.client.as_str()).collect();
    clients.sort_unstable();
    clients.dedup();
    let client_means: Vec<f64> = clients
        .iter()
        .map(|c| {
            let vals: Vec<f64> =
                scores.iter().filter(|s| s.client == *c).map(&get).collect();
            vals.iter().sum::<f64>() / vals.len() as f64
        })
        .collect();
    let mean = client_means.iter().sum::<f64>() / client_means.len() as f64;
    let worst = client_means.iter().cloned().fold(f64::INFINITY, f64::min);

    // per-seed median client score, then SD across seeds
    let mut seeds: Vec<u64> = scores.iter().map(|s| s.seed).collect();
    seeds.sort_unstable();
    seeds.dedup();
    let medians: Vec<f64> = seeds
        .iter()
        .map(|&seed| {
            let mut vals: Vec<f64> =
                scores.iter().filter(|s| s.seed == seed).map(&get).collect();
            median(&mut vals)
        })
        .collect();
    MetricSummary { mean, worst, seed_sd: population_sd(&medians) }
}

/// Summarizes scores of one (dataset, algorithm) group.
pub fn summarize(scores: &[ClientScore]) -> Result<Summary> {
    if scores.is_empty() {
        return Err(Error::data("cannot summarize an empty score set"));
    }
    Ok(Summary {
        f1: summarize_metric(scores, |s| s.f1),
        roc_auc: summarize_metric(scores, |s| s.roc_auc),
        balanced_acc: summarize_metric(scores, |s| s.balanced_acc),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfect_prediction_scores_one() {
        let y = [0, 1, 2, 1, 0];
        assert_eq!(f1_weighted(&y, &y).unwrap(), 1.0);
        assert_eq!(balanced_accuracy(&y, &y).unwrap(), 1.0);
    }

    #[test]
    fn all_wrong_binary_scores_zero() {
        let y_true = [0, 0, 1, 1];
        let y_pred = [1, 1, 0, 0];
        assert_eq!(f1_weighted(&y_true, &y_pred).unwrap(), 0.0);
        assert_eq!(balanced_accuracy(&y_true, &y_pred).unwrap(), 0.0);
    }

    #[test]
    fn f1_weighted_hand_example() {
        let f1 = f1_weighted(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap();
        let expect = (2.0 * (2.0 / 3.0) + 2.0 * 0.8) / 4.0;
        assert!((f1 - expect).abs() < 1e-15);
        assert!((f1 - 0.7333333333333334).abs() < 1e-12);
    }

    #[test]
    fn balanced_accuracy_hand_example() {
        let b = balanced_accuracy(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap();
        assert!((b - 0.75).abs() < 1e-15);
        // constant predictor on balanced binary: recalls 1 and 0
        let b = balanced_accuracy(&[0, 0, 1, 1], &[0, 0, 0, 0]).unwrap();
        assert!((b - 0.5).abs() < 1e-15);
    }

    fn binary_scores(pos: &[f64]) -> Matrix {
        let rows: Vec<Vec<f64>> = pos.iter().map(|&p| vec![1.0 - p, p]).collect();
        Matrix::from_rows(&rows).unwrap()
    }

    #[test]
    fn auc_hand_example() {
        let auc = roc_auc_ovo(&[0, 0, 1, 1], &binary_scores(&[0.1, 0.4, 0.35, 0.8])).unwrap();
        assert!((auc - 0.75).abs() < 1e-15);
    }

    #[test]
    fn auc_perfect_and_tied() {
        let auc = roc_auc_ovo(&[0, 0, 1, 1], &binary_scores(&[0.1, 0.2, 0.8, 0.9])).unwrap();
        assert_eq!(auc, 1.0);
        let auc = roc_auc_ovo(&[0, 1, 0, 1], &binary_scores(&[0.5, 0.5, 0.5, 0.5])).unwrap();
        assert_eq!(auc, 0.5);
    }

    #[test]
    fn auc_skips_empty_pairs() {
        // class 2 never occurs: pairs with it are skipped, result is the 0-1 AUC
        let scores = Matrix::from_rows(&[
            vec![0.8, 0.1, 0.1],
            vec![0.2, 0.7, 0.1],
            vec![0.3, 0.6, 0.1],
            vec![0.9, 0.05, 0.05],
        ])
        .unwrap();
        let auc = roc_auc_ovo(&[0, 1, 1, 0], &scores).unwrap();
        assert_eq!(auc, 1.0);
        // single class present: every pair empty
        assert!(roc_auc_ovo(&[0, 0], &binary_scores(&[0.2, 0.3])).is_err());
    }

    fn score(client: &str, seed: u64, v: f64) -> ClientScore {
        ClientScore { client: client.into(), seed, f1: v, roc_auc: v, balanced_acc: v }
    }

    #[test]
    fn empty_or_non_finite_inputs_are_rejected() {
        assert!(f1_weighted(&[], &[]).is_err());
        assert!(balanced_accuracy(&[], &[]).is_err());
        assert!(roc_auc_ovo(&[], &Matrix::zeros(0, 2)).is_err());
        let bad = Matrix::from_rows(&[vec![f64::NAN, 0.0], vec![0.1, 0.2]]).unwrap();
        assert!(roc_auc_ovo(&[0, 1], &bad).is_err());
    }

    #[test]
    fn summary_of_single_score_is_degenerate() {
        let s = summarize(&[score("a", 1, 0.8)]).unwrap();
        assert_eq!(s.f1.mean, 0.8);
        assert_eq!(s.f1.worst, 0.8);
        assert_eq!(s.f1.seed_sd, 0.0);
    }

    #[test]
    fn summary_mean_and_worst() {
        let s = summarize(&[score("a", 1, 0.8), score("b", 1, 0.6)]).unwrap();
        assert!((s.f1.mean - 0.7).abs() < 1e-15);
        assert_eq!(s.f1.worst, 0.6);
    }

    #[test]
    fn seed_sd_uses_population_sd_of_medians() {
        let s = summarize(&[
            score("a", 1, 0.7),
            score("b", 1, 0.7),
            score("a", 2, 0.9),
            score("b", 2, 0.9),
        ])
        .unwrap();
        assert!((s.f1.seed_sd - 0.1).abs() < 1e-15);
    }
}
