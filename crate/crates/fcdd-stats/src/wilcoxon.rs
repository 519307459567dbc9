use statrs::distribution::{ContinuousCDF, Normal};

use crate::{Result, StatsError};

/// How zero differences are treated before ranking.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ZeroPolicy {
    /// Classic Wilcoxon: zero differences are discarded before ranking.
    Discard,
    /// Pratt: zeros participate in the ranking of |d| but are dropped from
    /// both rank sums and from the sign enumeration.
    Pratt,
}

#[derive(Debug, Clone, Copy)]
pub struct WilcoxonOptions {
    pub zero_policy: ZeroPolicy,
    /// Largest effective n for which the p-value is computed exactly over
    /// the full sign-assignment distribution. Above it a normal
    /// approximation with tie correction is used.
    pub exact_threshold: usize,
}

impl Default for WilcoxonOptions {
    fn default() -> Self {
        Self {
            zero_policy: ZeroPolicy::Discard,
            // 2^25 sign assignments is still cheap through the rank-sum
            // recurrence and covers every table size used here.
            exact_threshold: 25,
        }
    }
}

#[derive(Debug, Clone)]
pub struct WilcoxonResult {
    /// W = min(W+, W-) over the signed ranks.
    pub statistic: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    /// Number of non-zero differences that entered the test.
    pub n_effective: usize,
    /// True when every difference was zero (p is reported as 1.0).
    pub no_signal: bool,
    /// True when the p-value came from the exact distribution.
    pub exact: bool,
}

/// Two-sided Wilcoxon signed-rank test with the default options
/// (zeros discarded, exact for n <= 25).
pub fn wilcoxon_signed_rank(x: &[f64], y: &[f64]) -> Result<WilcoxonResult> {
    wilcoxon_signed_rank_with(x, y, WilcoxonOptions::default())
}

pub fn wilcoxon_signed_rank_with(
    x: &[f64],
    y: &[f64],
    opts: WilcoxonOptions,
) -> Result<WilcoxonResult> {
    if x.len() != y.len() {
        return Err(StatsError::InvalidArgument(format!(
            "paired samples differ in length: {} vs {}",
            x.len(),
            y.len()
        )));
    }
    if x.is_empty() {
        return Err(StatsError::InvalidArgument(
            "paired samples must be non-empty".into(),
        ));
    }
    let diffs: Vec<f64> = x.iter().zip(y).map(|(a, b)| a - b).collect();
    if diffs.iter().any(|d| !d.is_finite()) {
        return Err(StatsError::InvalidArgument(
            "differences must be finite".into(),
        ));
    }

    let ranks = signed_scaled_ranks(&diffs, opts.zero_policy);
    let n = ranks.len();
    if n == 0 {
        return Ok(WilcoxonResult {
            statistic: 0.0,
            p_value: 1.0,
            n_effective: 0,
            no_signal: true,
            exact: true,
        });
    }

    // Ranks are scaled by 2 so tie-averaged ranks stay integral.
    let total: u64 = ranks.iter().map(|r| r.scaled).sum();
    let w_plus: u64 = ranks.iter().filter(|r| r.positive).map(|r| r.scaled).sum();
    let w_minus = total - w_plus;
    let w_obs = w_plus.min(w_minus);

    let (p_value, exact) = if n <= opts.exact_threshold {
        (exact_two_sided_p(&ranks, w_obs), true)
    } else {
        (normal_two_sided_p(&ranks, w_obs), false)
    };

    Ok(WilcoxonResult {
        statistic: w_obs as f64 / 2.0,
        p_value,
        n_effective: n,
        no_signal: false,
        exact,
    })
}

#[derive(Debug, Clone, Copy)]
struct ScaledRank {
    /// Twice the fractional rank of |d| (integral even with averaged ties).
    scaled: u64,
    positive: bool,
}

/// Rank |d| ascending with averaged ties, scaled by 2. Under `Discard`
/// zeros are removed before ranking; under `Pratt` they occupy the lowest
/// ranks and are then dropped from the result.
fn signed_scaled_ranks(diffs: &[f64], policy: ZeroPolicy) -> Vec<ScaledRank> {
    let kept: Vec<f64> = match policy {
        ZeroPolicy::Discard => diffs.iter().copied().filter(|d| *d != 0.0).collect(),
        ZeroPolicy::Pratt => diffs.to_vec(),
    };
    let m = kept.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| {
        kept[a]
            .abs()
            .partial_cmp(&kept[b].abs())
            .expect("finite differences")
    });
    let mut out = Vec::with_capacity(m);
    let mut i = 0;
    while i < m {
        let mut j = i;
        while j + 1 < m && kept[order[j + 1]].abs() == kept[order[i]].abs() {
            j += 1;
        }
        let scaled = (i + j + 2) as u64; // 2 * average of 1-based positions
        for k in i..=j {
            let d = kept[order[k]];
            if d != 0.0 {
                out.push(ScaledRank {
                    scaled,
                    positive: d > 0.0,
                });
            }
        }
        i = j + 1;
    }
    out
}

/// Exact two-sided p-value: the fraction of the 2^n equiprobable sign
/// assignments whose min(W+, W-) is at most the observed one. Computed via
/// the subset-sum distribution of W+ rather than literal enumeration.
fn exact_two_sided_p(ranks: &[ScaledRank], w_obs: u64) -> f64 {
    let total: u64 = ranks.iter().map(|r| r.scaled).sum();
    let mut counts = vec![0u64; total as usize + 1];
    counts[0] = 1;
    let mut reach = 0usize;
    for r in ranks {
        let step = r.scaled as usize;
        reach += step;
        for s in (step..=reach).rev() {
            counts[s] += counts[s - step];
        }
    }
    let mut favorable: u64 = 0;
    for (s, c) in counts.iter().enumerate() {
        let s = s as u64;
        if s.min(total - s) <= w_obs {
            favorable += c;
        }
    }
    favorable as f64 / 2f64.powi(ranks.len() as i32)
}

/// Normal approximation with tie correction and continuity correction.
fn normal_two_sided_p(ranks: &[ScaledRank], w_obs: u64) -> f64 {
    let n = ranks.len() as f64;
    let w = w_obs as f64 / 2.0;
    let mean = n * (n + 1.0) / 4.0;
    // Tie groups over the scaled ranks: equal scaled values are one group.
    let mut sorted: Vec<u64> = ranks.iter().map(|r| r.scaled).collect();
    sorted.sort_unstable();
    let mut tie_term = 0.0;
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i;
        while j + 1 < sorted.len() && sorted[j + 1] == sorted[i] {
            j += 1;
        }
        let t = (j - i + 1) as f64;
        tie_term += t * t * t - t;
        i = j + 1;
    }
    let var = n * (n + 1.0) * (2.0 * n + 1.0) / 24.0 - tie_term / 48.0;
    if var <= 0.0 {
        return 1.0;
    }
    let z = (w - mean + 0.5) / var.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    (2.0 * normal.cdf(z)).clamp(0.0, 1.0)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn identical_samples_give_p_one_with_flag() {
        let x = [1.0, 2.0, 3.0];
        let r = wilcoxon_signed_rank(&x, &x).unwrap();
        assert_eq!(r.p_value, 1.0);
        assert!(r.no_signal);
        assert_eq!(r.n_effective, 0);
    }

    #[test]
    fn all_positive_differences_of_five() {
        let x = [2.0, 4.0, 6.0, 8.0, 10.0];
        let y = [1.0, 2.0, 3.0, 4.0, 5.0];
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        assert_eq!(r.statistic, 0.0);
        assert_eq!(r.p_value, 2.0 / 32.0);
        assert!(r.exact);
    }

    #[test]
    fn swapping_samples_preserves_p() {
        let x = [3.0, 1.0, 4.0, 1.0, 5.0, 9.0, 2.0];
        let y = [2.0, 7.0, 1.0, 8.0, 2.0, 8.0, 1.0];
        let a = wilcoxon_signed_rank(&x, &y).unwrap();
        let b = wilcoxon_signed_rank(&y, &x).unwrap();
        assert_eq!(a.p_value, b.p_value);
        assert_eq!(a.statistic, b.statistic);
    }

    #[test]
    fn tied_absolute_differences_are_averaged() {
        // d = {1, -1, 2}: |d| ranks are {1.5, 1.5, 3}
        let x = [1.0, 0.0, 3.0];
        let y = [0.0, 1.0, 1.0];
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        // W+ = 1.5 + 3 = 4.5, W- = 1.5
        assert_eq!(r.statistic, 1.5);
    }

    #[test]
    fn pratt_keeps_zeros_in_rank_base() {
        // d = {0, 1, 2}: Pratt ranks |d| as {1, 2, 3}, drops the zero.
        let x = [1.0, 2.0, 3.0];
        let y = [1.0, 1.0, 1.0];
        let opts = WilcoxonOptions {
            zero_policy: ZeroPolicy::Pratt,
            ..Default::default()
        };
        let r = wilcoxon_signed_rank_with(&x, &y, opts).unwrap();
        assert_eq!(r.n_effective, 2);
        // W+ = 2 + 3 = 5, W- = 0
        assert_eq!(r.statistic, 0.0);
    }

    #[test]
    fn large_n_uses_normal_approximation() {
        let x: Vec<f64> = (0..30).map(|i| i as f64 + if i % 3 == 0 { 0.8 } else { -0.4 }).collect();
        let y: Vec<f64> = (0..30).map(|i| i as f64).collect();
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        assert!(!r.exact);
        assert!((0.0..=1.0).contains(&r.p_value));
    }

    #[test]
    fn length_mismatch_rejected() {
        assert!(wilcoxon_signed_rank(&[1.0], &[1.0, 2.0]).is_err());
    }
}
