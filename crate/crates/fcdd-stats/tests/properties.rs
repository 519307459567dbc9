//! Property tests for the statistics invariants: ranks depend on order
//! only, the Wilcoxon test is symmetric in its arguments, Holm only ever
//! removes rejections, and reported cliques are maximal and consistent.

use fcdd_stats::{
    boxplot_stats, cd_diagram, holm_adjust, rank_per_dataset, wilcoxon_signed_rank, ScoreTable,
};
use proptest::prelude::*;

fn score_table(m: usize, n: usize) -> impl Strategy<Value = ScoreTable> {
    proptest::collection::vec(proptest::collection::vec(0.0f64..100.0, n), m).prop_map(
        move |values| {
            ScoreTable::new(
                (0..m).map(|i| format!("m{i}")).collect(),
                (0..n).map(|i| format!("d{i}")).collect(),
                values,
            )
            .unwrap()
        },
    )
}

proptest! {
    #[test]
    fn ranks_invariant_under_increasing_transform(table in score_table(4, 6)) {
        // sqrt on [0, 1] is strictly increasing, so per-dataset order is
        // unchanged and the rank tables must match exactly.
        let transformed = ScoreTable::new(
            table.methods().to_vec(),
            table.datasets().to_vec(),
            (0..table.n_methods())
                .map(|m| {
                    table
                        .method_row(m)
                        .iter()
                        .map(|v| 100.0 * (v / 100.0).sqrt())
                        .collect()
                })
                .collect(),
        )
        .unwrap();
        let a = rank_per_dataset(&table).unwrap();
        let b = rank_per_dataset(&transformed).unwrap();
        prop_assert_eq!(a.ranks, b.ranks);
    }

    #[test]
    fn rank_columns_sum_to_m_choose_2_form(table in score_table(5, 4)) {
        let ranks = rank_per_dataset(&table).unwrap();
        let m = table.n_methods();
        for d in 0..table.n_datasets() {
            let sum: f64 = (0..m).map(|mi| ranks.rank(mi, d)).sum();
            prop_assert!((sum - (m * (m + 1)) as f64 / 2.0).abs() < 1e-9);
        }
    }

    #[test]
    fn wilcoxon_two_sided_symmetry(
        x in proptest::collection::vec(-5.0f64..5.0, 1..20),
        y in proptest::collection::vec(-5.0f64..5.0, 1..20),
    ) {
        let n = x.len().min(y.len());
        let a = wilcoxon_signed_rank(&x[..n], &y[..n]).unwrap();
        let b = wilcoxon_signed_rank(&y[..n], &x[..n]).unwrap();
        prop_assert_eq!(a.statistic, b.statistic);
        prop_assert_eq!(a.p_value, b.p_value);
    }

    #[test]
    fn wilcoxon_p_in_unit_interval(
        x in proptest::collection::vec(-5.0f64..5.0, 1..40),
        shift in -1.0f64..1.0,
    ) {
        let y: Vec<f64> = x.iter().map(|v| v + shift).collect();
        let r = wilcoxon_signed_rank(&x, &y).unwrap();
        prop_assert!((0.0..=1.0).contains(&r.p_value));
    }

    #[test]
    fn holm_rejections_subset_of_unadjusted(
        ps in proptest::collection::vec(0.0f64..=1.0, 1..12),
    ) {
        let out = holm_adjust(&ps, 0.05).unwrap();
        for (p, (&rej, &adj)) in ps.iter().zip(out.rejected.iter().zip(&out.adjusted)) {
            if rej {
                prop_assert!(*p <= 0.05);
            }
            prop_assert!(adj >= *p - 1e-15);
            prop_assert!((0.0..=1.0).contains(&adj));
        }
    }

    #[test]
    fn boxplot_summary_is_ordered(
        samples in proptest::collection::vec(-100.0f64..100.0, 1..50),
    ) {
        let s = boxplot_stats(&samples).unwrap();
        prop_assert!(s.whisker_low <= s.q1 + 1e-12);
        prop_assert!(s.q1 <= s.median);
        prop_assert!(s.median <= s.q3);
        prop_assert!(s.q3 <= s.whisker_high + 1e-12);
        let n_in = s
            .samples
            .iter()
            .filter(|&&v| v >= s.whisker_low && v <= s.whisker_high)
            .count();
        prop_assert_eq!(n_in + s.outliers.len(), samples.len());
    }

    #[test]
    fn cliques_are_pairwise_connected_and_maximal(table in score_table(4, 5)) {
        let d = cd_diagram(&table, 0.05).unwrap();
        let m = d.methods.len();
        for clique in &d.cliques {
            for (i, &a) in clique.iter().enumerate() {
                for &b in &clique[i + 1..] {
                    prop_assert!(d.graph.connected(a, b));
                }
            }
            // Maximality: no vertex outside connects to the whole clique.
            for extra in 0..m {
                if clique.contains(&extra) {
                    continue;
                }
                prop_assert!(!clique.iter().all(|&v| d.graph.connected(v, extra)));
            }
        }
        // No clique is a subset of another.
        for (i, a) in d.cliques.iter().enumerate() {
            for (j, b) in d.cliques.iter().enumerate() {
                if i != j {
                    prop_assert!(!a.iter().all(|v| b.contains(v)));
                }
            }
        }
        // Every non-significant edge appears in at least one clique.
        for &(a, b) in &d.graph.edges {
            prop_assert!(d
                .cliques
                .iter()
                .any(|c| c.contains(&a) && c.contains(&b)));
        }
    }
}
