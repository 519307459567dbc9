use crate::{Result, StatsError};

#[derive(Debug, Clone)]
pub struct HolmOutcome {
    /// Step-down adjusted p-values, in the input order.
    pub adjusted: Vec<f64>,
    /// Rejection decision at the given alpha, in the input order.
    pub rejected: Vec<bool>,
}

/// Holm step-down correction for a family of p-values.
///
/// The p-values are ordered ascending; the i-th smallest (1-based) is
/// compared against alpha / (m - i + 1), and testing stops at the first
/// failure so every later hypothesis is retained. Adjusted p-values are
/// the running maximum of (m - i + 1) * p_(i), clamped to 1.
pub fn holm_adjust(p_values: &[f64], alpha: f64) -> Result<HolmOutcome> {
    if p_values.is_empty() {
        return Err(StatsError::InvalidArgument(
            "holm correction needs at least one p-value".into(),
        ));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(StatsError::InvalidArgument(format!(
            "alpha must lie in (0, 1), got {alpha}"
        )));
    }
    for (i, p) in p_values.iter().enumerate() {
        if !(0.0..=1.0).contains(p) {
            return Err(StatsError::InvalidArgument(format!(
                "p-value {i} is {p}, outside [0, 1]"
            )));
        }
    }

    let m = p_values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| p_values[a].partial_cmp(&p_values[b]).expect("finite p"));

    let mut adjusted = vec![0.0; m];
    let mut rejected = vec![false; m];
    let mut running_max = 0.0f64;
    let mut still_rejecting = true;
    for (i, &idx) in order.iter().enumerate() {
        let factor = (m - i) as f64;
        running_max = running_max.max((factor * p_values[idx]).min(1.0));
        adjusted[idx] = running_max;
        if still_rejecting && p_values[idx] <= alpha / factor {
            rejected[idx] = true;
        } else {
            still_rejecting = false;
        }
    }
    Ok(HolmOutcome { adjusted, rejected })
}
