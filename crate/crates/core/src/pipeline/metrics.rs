//! Accuracy, confusion matrix, and per-class precision/recall.

use crate::error::{Error, Result};

/// Accuracy as a percentage, half-up rounded to two decimals (the reporting
/// unit of the comparison table).
pub fn accuracy(correct: usize, total: usize) -> Result<f64> {
    if total == 0 {
        return Err(Error::InvalidArgument("accuracy of zero samples".into()));
    }
    if correct > total {
        return Err(Error::InvalidArgument(format!(
            "correct {correct} exceeds total {total}"
        )));
    }
    let pct = 100.0 * correct as f64 / total as f64;
    Ok((pct * 100.0).round() / 100.0)
}

/// `k x k` counts; entry `(i, j)` is how often true class `i` was predicted
/// as class `j`.
pub fn confusion_matrix(
    predictions: &[usize],
    labels: &[usize],
    class_count: usize,
) -> Result<Vec<Vec<usize>>> {
    if predictions.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} predictions but {} labels",
            predictions.len(),
            labels.len()
        )));
    }
    let mut matrix = vec![vec![0usize; class_count]; class_count];
    for (&pred, &truth) in predictions.iter().zip(labels) {
        if pred >= class_count || truth >= class_count {
            return Err(Error::InvalidArgument(format!(
                "class value out of range: true {truth}, predicted {pred}"
            )));
        }
        matrix[truth][pred] += 1;
    }
    Ok(matrix)
}

/// Per-class `(precision, recall)`; empty denominators yield 0.
pub fn precision_recall(confusion: &[Vec<usize>]) -> Vec<(f64, f64)> {
    let k = confusion.len();
    (0..k)
        .map(|c| {
            let tp = confusion[c][c];
            let col_sum: usize = (0..k).map(|r| confusion[r][c]).sum();
            let row_sum: usize = confusion[c].iter().sum();
            let precision = if col_sum == 0 { 0.0 } else { tp as f64 / col_sum as f64 };
            let recall = if row_sum == 0 { 0.0 } else { tp as f64 / row_sum as f64 };
            (precision, recall)
        })
        .collect()
}
