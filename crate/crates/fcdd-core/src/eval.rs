//! Evaluation metrics: sample- and pixel-level ROC-AUC, performance
//! curves over training snapshots, and tables of absolute differences
//! against reference results.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::explain::Heatmap;
use crate::{CoreError, Result};

/// Scores with parallel binary labels. Construction permits single-class
/// sets (they arise from degenerate splits); metrics reject them loudly
/// instead of defaulting to 0.5.
#[derive(Debug, Clone)]
pub struct ScoredSet {
    pub scores: Vec<f64>,
    pub labels: Vec<u8>,
}

impl ScoredSet {
    pub fn new(scores: Vec<f64>, labels: Vec<u8>) -> Result<Self> {
        if scores.is_empty() {
            return Err(CoreError::InvalidArgument("empty scored set".into()));
        }
        if scores.len() != labels.len() {
            return Err(CoreError::Shape(format!(
                "{} scores but {} labels",
                scores.len(),
                labels.len()
            )));
        }
        if scores.iter().any(|s| !s.is_finite()) {
            return Err(CoreError::NonFinite("scores".into()));
        }
        if labels.iter().any(|&l| l > 1) {
            return Err(CoreError::InvalidArgument(
                "labels must be 0 or 1".into(),
            ));
        }
        Ok(Self { scores, labels })
    }

    pub fn is_degenerate(&self) -> bool {
        let pos = self.labels.iter().filter(|&&l| l == 1).count();
        pos == 0 || pos == self.labels.len()
    }
}

/// Area under the ROC curve via the rank statistic: the probability that
/// a random anomalous sample outscores a random normal one, ties counting
/// one half. Exact, no threshold grid.
pub fn roc_auc(set: &ScoredSet) -> Result<f64> {
    let n = set.scores.len();
    let n_pos = set.labels.iter().filter(|&&l| l == 1).count();
    let n_neg = n - n_pos;
    if n_pos == 0 || n_neg == 0 {
        return Err(CoreError::Degenerate(format!(
            "ROC-AUC needs both classes, got {n_pos} anomalous of {n}"
        )));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| set.scores[a].partial_cmp(&set.scores[b]).unwrap());
    let mut ranks = vec![0.0f64; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && set.scores[order[j + 1]] == set.scores[order[i]] {
            j += 1;
        }
        let shared = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[order[k]] = shared;
        }
        i = j + 1;
    }
    let rank_sum_pos: f64 = ranks
        .iter()
        .zip(&set.labels)
        .filter(|(_, &l)| l == 1)
        .map(|(r, _)| r)
        .sum();
    let auc = (rank_sum_pos - (n_pos * (n_pos + 1)) as f64 / 2.0) / (n_pos * n_neg) as f64;
    Ok(auc)
}

fn check_pixel_pairs(heatmaps: &[Heatmap], masks: &[Array2<u8>]) -> Result<()> {
    if heatmaps.is_empty() || heatmaps.len() != masks.len() {
        return Err(CoreError::Shape(format!(
            "{} heatmaps but {} masks",
            heatmaps.len(),
            masks.len()
        )));
    }
    for (i, (hm, mask)) in heatmaps.iter().zip(masks).enumerate() {
        if hm.values.dim() != mask.dim() {
            return Err(CoreError::Shape(format!(
                "image {i}: heatmap {:?} vs mask {:?}",
                hm.values.dim(),
                mask.dim()
            )));
        }
        if mask.iter().any(|&v| v > 1) {
            return Err(CoreError::InvalidArgument(format!(
                "image {i}: mask values must be 0 or 1"
            )));
        }
    }
    Ok(())
}

/// Pixel-level ROC-AUC with every pixel of every image pooled into one
/// scored set. This is the reported segmentation number; one value per
/// class of images.
pub fn pixel_roc_auc(heatmaps: &[Heatmap], masks: &[Array2<u8>]) -> Result<f64> {
    check_pixel_pairs(heatmaps, masks)?;
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for (hm, mask) in heatmaps.iter().zip(masks) {
        scores.extend(hm.values.iter().cloned());
        labels.extend(mask.iter().cloned());
    }
    roc_auc(&ScoredSet::new(scores, labels)?)
}

/// Diagnostic variant: ROC-AUC per image, averaged over the images where
/// it is defined (both pixel classes present). Not the reported metric;
/// pooling is.
pub fn pixel_roc_auc_per_image_mean(heatmaps: &[Heatmap], masks: &[Array2<u8>]) -> Result<f64> {
    check_pixel_pairs(heatmaps, masks)?;
    let mut values = Vec::new();
    for (hm, mask) in heatmaps.iter().zip(masks) {
        let set = ScoredSet::new(
            hm.values.iter().cloned().collect(),
            mask.iter().cloned().collect(),
        )?;
        if !set.is_degenerate() {
            values.push(roc_auc(&set)?);
        }
    }
    if values.is_empty() {
        return Err(CoreError::Degenerate(
            "no image has both anomalous and normal pixels".into(),
        ));
    }
    Ok(values.iter().sum::<f64>() / values.len() as f64)
}

/// One evaluated snapshot: the metric value, or a recorded gap when the
/// snapshot could not be loaded.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HistoryPoint {
    pub epoch: usize,
    pub value: Option<f64>,
}

/// Metric-over-training curve, one point per snapshot.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PerformanceHistory {
    pub points: Vec<HistoryPoint>,
}

impl PerformanceHistory {
    /// Epochs with a defined value, for plotting.
    pub fn defined(&self) -> Vec<(usize, f64)> {
        self.points
            .iter()
            .filter_map(|p| p.value.map(|v| (p.epoch, v)))
            .collect()
    }
}

/// Evaluate a metric on each snapshot in epoch order. A snapshot whose
/// evaluation fails becomes a gap in the curve, never an interpolated
/// value.
pub fn performance_history(
    snapshots: &[(usize, PathBuf)],
    mut evaluate: impl FnMut(&Path) -> Result<f64>,
) -> Result<PerformanceHistory> {
    if snapshots.is_empty() {
        return Err(CoreError::InvalidArgument("no snapshots".into()));
    }
    for pair in snapshots.windows(2) {
        if pair[1].0 <= pair[0].0 {
            return Err(CoreError::InvalidArgument(format!(
                "snapshot epochs must be strictly increasing, got {} then {}",
                pair[0].0, pair[1].0
            )));
        }
    }
    let points = snapshots
        .iter()
        .map(|(epoch, path)| HistoryPoint {
            epoch: *epoch,
            value: evaluate(path).ok(),
        })
        .collect();
    Ok(PerformanceHistory { points })
}

/// Absolute differences between two per-class metric maps, in percent
/// points. `mean_rocauc_diff` compares the class-averaged means.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DiffStats {
    pub per_class_abs_diff: Vec<(String, f64)>,
    pub max_diff: f64,
    pub mean_diff: f64,
    pub mean_rocauc_diff: f64,
}

/// Compare our per-class results against a reference. Inputs are
/// fractions in [0, 1] under identical class keys; outputs are percent
/// points. Symmetric in its two arguments.
pub fn diff_table(
    ours: &BTreeMap<String, f64>,
    reference: &BTreeMap<String, f64>,
) -> Result<DiffStats> {
    if ours.is_empty() {
        return Err(CoreError::InvalidArgument("empty metric map".into()));
    }
    let our_keys: Vec<&String> = ours.keys().collect();
    let ref_keys: Vec<&String> = reference.keys().collect();
    if our_keys != ref_keys {
        return Err(CoreError::InvalidArgument(format!(
            "class keys differ: {our_keys:?} vs {ref_keys:?}"
        )));
    }
    for (name, &v) in ours.iter().chain(reference.iter()) {
        if !(0.0..=1.0).contains(&v) {
            return Err(CoreError::InvalidArgument(format!(
                "metric for {name} must be a fraction in [0, 1], got {v}"
            )));
        }
    }
    let per_class_abs_diff: Vec<(String, f64)> = ours
        .iter()
        .map(|(k, &a)| (k.clone(), (a - reference[k]).abs() * 100.0))
        .collect();
    let n = per_class_abs_diff.len() as f64;
    let max_diff = per_class_abs_diff
        .iter()
        .map(|(_, d)| *d)
        .fold(0.0, f64::max);
    let mean_diff = per_class_abs_diff.iter().map(|(_, d)| d).sum::<f64>() / n;
    let mean_ours = ours.values().sum::<f64>() / n;
    let mean_ref = reference.values().sum::<f64>() / n;
    Ok(DiffStats {
        per_class_abs_diff,
        max_diff,
        mean_diff,
        mean_rocauc_diff: (mean_ours - mean_ref).abs() * 100.0,
    })
}

/// Report formatting: metrics live as fractions and print as percent
/// with one decimal.
pub fn format_percent(fraction: f64) -> String {
    format!("{:.1}", fraction * 100.0)
}
