//! Brute-force reference implementations, kept deliberately independent of
//! the library internals: fractional ranks recomputed from scratch and the
//! exact p obtained by literally walking every sign assignment.

/// Two-sided Wilcoxon signed-rank by full enumeration. Returns (W, p).
/// Zero differences are discarded; |d| ranked ascending with averaged ties.
pub fn oracle_wilcoxon(x: &[f64], y: &[f64]) -> (f64, f64) {
    let d: Vec<f64> = x
        .iter()
        .zip(y)
        .map(|(a, b)| a - b)
        .filter(|v| *v != 0.0)
        .collect();
    let n = d.len();
    if n == 0 {
        return (0.0, 1.0);
    }
    assert!(n <= 20, "enumeration oracle is for small n");

    let mut idx: Vec<usize> = (0..n).collect();
    idx.sort_by(|&a, &b| d[a].abs().partial_cmp(&d[b].abs()).unwrap());
    let mut ranks = vec![0.0; n];
    let mut i = 0;
    while i < n {
        let mut j = i;
        while j + 1 < n && d[idx[j + 1]].abs() == d[idx[i]].abs() {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for k in i..=j {
            ranks[idx[k]] = avg;
        }
        i = j + 1;
    }

    let total: f64 = ranks.iter().sum();
    let w_plus: f64 = d
        .iter()
        .zip(&ranks)
        .filter(|(v, _)| **v > 0.0)
        .map(|(_, r)| r)
        .sum();
    let w_obs = w_plus.min(total - w_plus);

    let mut favorable: u64 = 0;
    for mask in 0u64..(1u64 << n) {
        let mut wp = 0.0;
        for (bit, r) in ranks.iter().enumerate() {
            if mask & (1 << bit) != 0 {
                wp += r;
            }
        }
        if wp.min(total - wp) <= w_obs {
            favorable += 1;
        }
    }
    (w_obs, favorable as f64 / (1u64 << n) as f64)
}
