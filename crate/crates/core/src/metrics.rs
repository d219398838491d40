//! Classification scores and the silhouette coefficient.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::linalg::{self, Matrix};
use crate::parallel::{self, Parallelism};

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("{truth} true labels vs {pred} predictions")]
    Length { truth: usize, pred: usize },
    #[error("label {label} out of range for {n_classes} classes")]
    LabelRange { label: usize, n_classes: usize },
    #[error("silhouette needs at least two distinct clusters")]
    SingleCluster,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassificationReport {
    pub accuracy: f64,
    pub macro_f1: f64,
    pub weighted_f1: f64,
    pub per_class_f1: Vec<f64>,
    /// `confusion[true][pred]`.
    pub confusion: Vec<Vec<usize>>,
}

/// Macro-F1 averages over all `n_classes` declared classes, including ones
/// absent from both `y_true` and `y_pred` (which score 0).
pub fn classification_report(
    y_true: &[usize],
    y_pred: &[usize],
    n_classes: usize,
) -> Result<ClassificationReport, MetricsError> {
    if y_true.len() != y_pred.len() {
        return Err(MetricsError::Length { truth: y_true.len(), pred: y_pred.len() });
    }
    if let Some(&label) = y_true.iter().chain(y_pred).find(|&&l| l >= n_classes) {
        return Err(MetricsError::LabelRange { label, n_classes });
    }
    let mut confusion = vec![vec![0usize; n_classes]; n_classes];
    for (&t, &p) in y_true.iter().zip(y_pred) {
        confusion[t][p] += 1;
    }
    let n = y_true.len();
    let correct: usize = (0..n_classes).map(|c| confusion[c][c]).sum();
    let accuracy = if n == 0 { 0.0 } else { correct as f64 / n as f64 };

    let mut per_class_f1 = Vec::with_capacity(n_classes);
    let mut support = Vec::with_capacity(n_classes);
    for c in 0..n_classes {
        let tp = confusion[c][c] as f64;
        let actual: usize = confusion[c].iter().sum();
        let predicted: usize = (0..n_classes).map(|r| confusion[r][c]).sum();
        let precision = if predicted == 0 { 0.0 } else { tp / predicted as f64 };
        let recall = if actual == 0 { 0.0 } else { tp / actual as f64 };
        let f1 = if precision + recall == 0.0 { 0.0 } else { 2.0 * precision * recall / (precision + recall) };
        per_class_f1.push(f1);
        support.push(actual);
    }
    let macro_f1 = if n_classes == 0 { 0.0 } else { per_class_f1.iter().sum::<f64>() / n_classes as f64 };
    let weighted_f1 = if n == 0 {
        0.0
    } else {
        per_class_f1.iter().zip(&support).map(|(f, &s)| f * s as f64).sum::<f64>() / n as f64
    };
    Ok(ClassificationReport { accuracy, macro_f1, weighted_f1, per_class_f1, confusion })
}

/// Mean silhouette `(b − a) / max(a, b)` under the Euclidean metric.
/// Members of singleton clusters score 0.
pub fn silhouette(features: &Matrix, labels: &[usize]) -> Result<f64, MetricsError> {
    silhouette_with(features, labels, Parallelism::default())
}

pub fn silhouette_with(features: &Matrix, labels: &[usize], par: Parallelism) -> Result<f64, MetricsError> {
    let scores = silhouette_samples(features, labels, par)?;
    Ok(scores.iter().sum::<f64>() / scores.len() as f64)
}

/// Per-sample silhouette values.
pub fn silhouette_samples(features: &Matrix, labels: &[usize], par: Parallelism) -> Result<Vec<f64>, MetricsError> {
    let n = features.rows();
    if labels.len() != n {
        return Err(MetricsError::Length { truth: labels.len(), pred: n });
    }
    let n_clusters = labels.iter().max().map_or(0, |m| m + 1);
    let mut sizes = vec![0usize; n_clusters];
    labels.iter().for_each(|&l| sizes[l] += 1);
    if sizes.iter().filter(|&&s| s > 0).count() < 2 {
        return Err(MetricsError::SingleCluster);
    }
    Ok(parallel::map_range(n, par, |i| {
        let own = labels[i];
        if sizes[own] == 1 {
            return 0.0;
        }
        let mut sums = vec![0.0; n_clusters];
        for j in 0..n {
            if j != i {
                sums[labels[j]] += linalg::squared_distance(features.row(i), features.row(j)).sqrt();
            }
        }
        let a = sums[own] / (sizes[own] - 1) as f64;
        let b = (0..n_clusters)
            .filter(|&c| c != own && sizes[c] > 0)
            .map(|c| sums[c] / sizes[c] as f64)
            .fold(f64::INFINITY, f64::min);
        let denom = a.max(b);
        if denom == 0.0 {
            0.0
        } else {
            (b - a) / denom
        }
    }))
}
