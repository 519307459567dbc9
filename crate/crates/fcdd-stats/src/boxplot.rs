use serde::Serialize;

use crate::{Result, StatsError};

/// Five-number summary plus outliers, with the raw samples retained so
/// plots can overlay the individual runs on top of the box.
#[derive(Debug, Clone, Serialize)]
pub struct BoxplotStats {
    pub q1: f64,
    pub median: f64,
    pub q3: f64,
    /// Most extreme samples still within 1.5 IQR of the box.
    pub whisker_low: f64,
    pub whisker_high: f64,
    /// Samples beyond the whiskers, ascending.
    pub outliers: Vec<f64>,
    /// The input samples, ascending.
    pub samples: Vec<f64>,
}

/// Quantile by linear interpolation between order statistics, with the
/// q-th quantile sitting at fractional position q * (n - 1).
fn quantile(sorted: &[f64], q: f64) -> f64 {
    let pos = q * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn boxplot_stats(samples: &[f64]) -> Result<BoxplotStats> {
    if samples.is_empty() {
        return Err(StatsError::InvalidArgument(
            "boxplot needs at least one sample".into(),
        ));
    }
    if samples.iter().any(|s| !s.is_finite()) {
        return Err(StatsError::InvalidArgument(
            "boxplot samples must be finite".into(),
        ));
    }
    let mut sorted = samples.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite samples"));

    let q1 = quantile(&sorted, 0.25);
    let median = quantile(&sorted, 0.50);
    let q3 = quantile(&sorted, 0.75);
    let iqr = q3 - q1;
    let fence_low = q1 - 1.5 * iqr;
    let fence_high = q3 + 1.5 * iqr;

    // Interpolated quartiles can leave no sample between a box edge and
    // its fence; the whisker then sits on the box edge itself.
    let whisker_low = sorted
        .iter()
        .copied()
        .find(|&s| s >= fence_low)
        .expect("at least one sample within the lower fence")
        .min(q1);
    let whisker_high = sorted
        .iter()
        .rev()
        .copied()
        .find(|&s| s <= fence_high)
        .expect("at least one sample within the upper fence")
        .max(q3);
    let outliers = sorted
        .iter()
        .copied()
        .filter(|&s| s < fence_low || s > fence_high)
        .collect();

    Ok(BoxplotStats {
        q1,
        median,
        q3,
        whisker_low,
        whisker_high,
        outliers,
        samples: sorted,
    })
}
