use serde::{Deserialize, Serialize};

use crate::{Result, ScoreTable, StatsError};

/// Per-dataset fractional ranks (1 = best) and per-method averages.
///
/// Within each dataset the ranks are a permutation of `1..=m` with tied
/// scores replaced by the mean of the positions they span, so every
/// dataset's rank column sums to `m(m+1)/2`.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RankTable {
    pub methods: Vec<String>,
    pub datasets: Vec<String>,
    /// `ranks[method][dataset]`.
    pub ranks: Vec<Vec<f64>>,
    /// Mean rank of each method over all datasets.
    pub avg_rank: Vec<f64>,
}

impl RankTable {
    pub fn rank(&self, method: usize, dataset: usize) -> f64 {
        self.ranks[method][dataset]
    }
}

/// Rank methods within each dataset, higher score = better (smaller) rank.
pub fn rank_per_dataset(table: &ScoreTable) -> Result<RankTable> {
    let m = table.n_methods();
    let n = table.n_datasets();
    if m == 0 || n == 0 {
        return Err(StatsError::InvalidArgument("empty score table".into()));
    }
    let mut ranks = vec![vec![0.0; n]; m];
    for d in 0..n {
        let col = table.dataset_column(d);
        let r = fractional_ranks_desc(&col);
        for (mi, rank) in r.into_iter().enumerate() {
            ranks[mi][d] = rank;
        }
    }
    let avg_rank = ranks
        .iter()
        .map(|row| row.iter().sum::<f64>() / n as f64)
        .collect();
    Ok(RankTable {
        methods: table.methods().to_vec(),
        datasets: table.datasets().to_vec(),
        ranks,
        avg_rank,
    })
}

/// Fractional ranks of `values` in descending order: the largest value gets
/// rank 1, ties get the mean of the positions they occupy.
pub(crate) fn fractional_ranks_desc(values: &[f64]) -> Vec<f64> {
    let m = values.len();
    let mut order: Vec<usize> = (0..m).collect();
    order.sort_by(|&a, &b| values[b].partial_cmp(&values[a]).expect("non-finite score"));
    let mut ranks = vec![0.0; m];
    let mut i = 0;
    while i < m {
        let mut j = i;
        while j + 1 < m && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        // 1-based positions i+1 ..= j+1 share the averaged rank
        let rank = (i + j + 2) as f64 / 2.0;
        for k in i..=j {
            ranks[order[k]] = rank;
        }
        i = j + 1;
    }
    ranks
}
