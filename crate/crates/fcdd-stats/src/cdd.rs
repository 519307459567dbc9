use serde::Serialize;

use crate::{
    holm_adjust, rank_per_dataset, wilcoxon_signed_rank, RankTable, Result, ScoreTable, StatsError,
};

/// One pairwise comparison between two methods across all datasets.
#[derive(Debug, Clone, Serialize)]
pub struct PairwiseTest {
    pub method_a: usize,
    pub method_b: usize,
    /// Raw two-sided Wilcoxon signed-rank p-value.
    pub p_value: f64,
    /// Holm step-down adjusted p-value over all pairs.
    pub adjusted_p: f64,
    /// True when the difference survives the Holm correction.
    pub significant: bool,
}

/// Which method pairs could not be told apart at the given alpha.
#[derive(Debug, Clone, Serialize)]
pub struct SignificanceGraph {
    pub alpha: f64,
    pub tests: Vec<PairwiseTest>,
    /// Edges (a, b) with a < b between methods whose difference is NOT
    /// significant; the cliques of this graph become the diagram's bars.
    pub edges: Vec<(usize, usize)>,
}

impl SignificanceGraph {
    pub fn connected(&self, a: usize, b: usize) -> bool {
        let key = (a.min(b), a.max(b));
        self.edges.contains(&key)
    }
}

/// Everything needed to draw and to audit a critical-difference diagram.
#[derive(Debug, Clone, Serialize)]
pub struct CdDiagram {
    pub methods: Vec<String>,
    pub datasets: Vec<String>,
    /// Fractional ranks per method per dataset, `ranks[method][dataset]`.
    pub ranks: Vec<Vec<f64>>,
    /// Mean fractional rank of each method (1 = best).
    pub avg_ranks: Vec<f64>,
    pub graph: SignificanceGraph,
    /// Maximal groups (size >= 2) in which no pair differs significantly,
    /// each ascending by method index, ordered by their best average rank.
    pub cliques: Vec<Vec<usize>>,
}

impl CdDiagram {
    /// Method indices ordered best (lowest average rank) first.
    pub fn order(&self) -> Vec<usize> {
        let mut idx: Vec<usize> = (0..self.methods.len()).collect();
        idx.sort_by(|&a, &b| {
            self.avg_ranks[a]
                .partial_cmp(&self.avg_ranks[b])
                .expect("finite ranks")
                .then(a.cmp(&b))
        });
        idx
    }
}

/// Build a critical-difference diagram from a score table: rank methods per
/// dataset, run all pairwise Wilcoxon signed-rank tests on the raw scores,
/// Holm-correct the family, and group methods whose differences never reach
/// significance into maximal cliques.
pub fn cd_diagram(table: &ScoreTable, alpha: f64) -> Result<CdDiagram> {
    let m = table.n_methods();
    if m < 2 {
        return Err(StatsError::InvalidArgument(
            "critical-difference diagram needs at least two methods".into(),
        ));
    }
    if table.n_datasets() < 2 {
        return Err(StatsError::InvalidArgument(
            "critical-difference diagram needs at least two datasets".into(),
        ));
    }
    let ranks: RankTable = rank_per_dataset(table)?;

    let mut pairs = Vec::with_capacity(m * (m - 1) / 2);
    let mut raw_ps = Vec::with_capacity(m * (m - 1) / 2);
    for a in 0..m {
        for b in (a + 1)..m {
            let r = wilcoxon_signed_rank(table.method_row(a), table.method_row(b))?;
            raw_ps.push(r.p_value);
            pairs.push((a, b));
        }
    }
    let holm = holm_adjust(&raw_ps, alpha)?;

    let mut tests = Vec::with_capacity(pairs.len());
    let mut edges = Vec::new();
    let mut adjacent = vec![vec![false; m]; m];
    for (k, &(a, b)) in pairs.iter().enumerate() {
        let significant = holm.rejected[k];
        tests.push(PairwiseTest {
            method_a: a,
            method_b: b,
            p_value: raw_ps[k],
            adjusted_p: holm.adjusted[k],
            significant,
        });
        if !significant {
            edges.push((a, b));
            adjacent[a][b] = true;
            adjacent[b][a] = true;
        }
    }

    let mut cliques = maximal_cliques(&adjacent);
    cliques.retain(|c| c.len() >= 2);
    let best_rank = |c: &[usize]| {
        c.iter()
            .map(|&i| ranks.avg_rank[i])
            .fold(f64::INFINITY, f64::min)
    };
    cliques.sort_by(|x, y| {
        best_rank(x)
            .partial_cmp(&best_rank(y))
            .expect("finite ranks")
            .then_with(|| x.cmp(y))
    });

    Ok(CdDiagram {
        methods: table.methods().to_vec(),
        datasets: table.datasets().to_vec(),
        ranks: ranks.ranks.clone(),
        avg_ranks: ranks.avg_rank.clone(),
        graph: SignificanceGraph {
            alpha,
            tests,
            edges,
        },
        cliques,
    })
}

/// Bron-Kerbosch enumeration of maximal cliques, ascending vertex order so
/// the output is deterministic.
fn maximal_cliques(adjacent: &[Vec<bool>]) -> Vec<Vec<usize>> {
    let n = adjacent.len();
    let mut out = Vec::new();
    let mut r = Vec::new();
    let p: Vec<usize> = (0..n).collect();
    let x = Vec::new();
    bron_kerbosch(adjacent, &mut r, p, x, &mut out);
    out
}

fn bron_kerbosch(
    adjacent: &[Vec<bool>],
    r: &mut Vec<usize>,
    mut p: Vec<usize>,
    mut x: Vec<usize>,
    out: &mut Vec<Vec<usize>>,
) {
    if p.is_empty() && x.is_empty() {
        out.push(r.clone());
        return;
    }
    while let Some(&v) = p.first() {
        r.push(v);
        let p_next: Vec<usize> = p.iter().copied().filter(|&u| adjacent[v][u]).collect();
        let x_next: Vec<usize> = x.iter().copied().filter(|&u| adjacent[v][u]).collect();
        bron_kerbosch(adjacent, r, p_next, x_next, out);
        r.pop();
        p.remove(0);
        x.push(v);
    }
}
