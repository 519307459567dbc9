//! End-to-end check of the critical-difference pipeline against a
//! hand-driven reference: oracle p-values, Holm thresholds applied
//! manually, and cliques found by subset enumeration.

mod common;

use fcdd_stats::{cd_diagram, ScoreTable};

/// Three methods, twelve datasets. `near_a` and `near_b` trade wins by a
/// hair while `far` loses everything by a wide margin, so exactly the two
/// far pairs are significant and the only bar is {near_a, near_b}.
fn build_table() -> ScoreTable {
    let n = 12;
    let near_a: Vec<f64> = (0..n)
        .map(|i| 90.0 + if i % 2 == 0 { 0.2 } else { -0.1 })
        .collect();
    let near_b: Vec<f64> = (0..n).map(|_| 90.0).collect();
    let far: Vec<f64> = (0..n).map(|i| 40.0 + i as f64).collect();
    let datasets = (0..n).map(|i| format!("d{i}")).collect();
    ScoreTable::new(
        vec!["near_a".into(), "near_b".into(), "far".into()],
        datasets,
        vec![near_a, near_b, far],
    )
    .unwrap()
}

#[test]
fn separated_pair_never_shares_a_bar() {
    let table = build_table();
    let alpha = 0.05;
    let d = cd_diagram(&table, alpha).unwrap();

    // Reference p-values by literal enumeration.
    let rows: Vec<&[f64]> = (0..3).map(|m| table.method_row(m)).collect();
    let pairs = [(0usize, 1usize), (0, 2), (1, 2)];
    let oracle_ps: Vec<f64> = pairs
        .iter()
        .map(|&(a, b)| common::oracle_wilcoxon(rows[a], rows[b]).1)
        .collect();
    for (test, &p) in d.graph.tests.iter().zip(&oracle_ps) {
        assert_eq!(test.p_value, p);
    }

    // Holm by hand: sort ascending, compare against alpha / (m - i).
    let mut order: Vec<usize> = (0..3).collect();
    order.sort_by(|&a, &b| oracle_ps[a].partial_cmp(&oracle_ps[b]).unwrap());
    let mut expected_reject = [false; 3];
    for (i, &k) in order.iter().enumerate() {
        if oracle_ps[k] <= alpha / (3 - i) as f64 {
            expected_reject[k] = true;
        } else {
            break;
        }
    }
    for (test, &want) in d.graph.tests.iter().zip(&expected_reject) {
        assert_eq!(test.significant, want);
    }

    // The two lopsided pairs must separate; the close pair must not.
    assert_eq!(expected_reject, [false, true, true]);
    assert_eq!(d.graph.edges, vec![(0, 1)]);
    assert_eq!(d.cliques, vec![vec![0, 1]]);

    // Cliques double-checked by subset enumeration over all 2^3 subsets.
    let connected = |a: usize, b: usize| d.graph.connected(a, b);
    let mut brute: Vec<Vec<usize>> = Vec::new();
    for mask in 0u8..8 {
        let members: Vec<usize> = (0..3).filter(|&i| mask & (1 << i) != 0).collect();
        if members.len() < 2 {
            continue;
        }
        let is_clique = members
            .iter()
            .enumerate()
            .all(|(i, &a)| members[i + 1..].iter().all(|&b| connected(a, b)));
        if !is_clique {
            continue;
        }
        let is_maximal = (0..3).filter(|i| !members.contains(i)).all(|extra| {
            !members.iter().all(|&m| connected(m, extra))
        });
        if is_maximal {
            brute.push(members);
        }
    }
    assert_eq!(d.cliques, brute);
}
