mod common;

use anchorlab::centrality::{centrality, CentralityKind};
use anchorlab::graph::{
    all_pairs_distances, bfs_distances, coverage_check, gen_caveman, greedy_dominating_set,
    khop_closure, parse_edge_list,
};
use anchorlab::stats::{kendall, spearman, wilcoxon_signed_rank, PMethod};
use anchorlab::tasks::{roc_auc, split_link, split_pairs_community, PairCounts};
use common::*;
use proptest::prelude::*;
use std::collections::HashSet;

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn bfs_matches_floyd_warshall(n in 1usize..=64, p in 0.0f64..0.3, seed: u64) {
        let g = random_graph(n, p, seed);
        prop_assert_eq!(all_pairs_distances(&g), floyd_warshall(&g));
    }

    #[test]
    fn bfs_from_subset_matches_columns(n in 2usize..=40, p in 0.0f64..0.3, seed: u64) {
        let g = random_graph(n, p, seed);
        let full = floyd_warshall(&g);
        let anchors: Vec<usize> = (0..n).step_by(3).collect();
        let field = bfs_distances(&g, &anchors).unwrap();
        for (j, &a) in anchors.iter().enumerate() {
            for v in 0..n {
                prop_assert_eq!(field.get(v, j), full[[v, a]]);
            }
        }
    }

    #[test]
    fn khop_matches_matrix_power(n in 1usize..=24, p in 0.0f64..0.3, k in 1usize..=4, seed: u64) {
        let g = random_graph(n, p, seed);
        let closure = khop_closure(&g, k).unwrap();
        prop_assert_eq!(closure.edges().to_vec(), khop_by_matrix_power(&g, k));
    }

    #[test]
    fn greedy_dominating_set_covers(n in 1usize..=60, p in 0.0f64..0.2, k in 1usize..=3, seed: u64) {
        let g = random_graph(n, p, seed);
        let set = greedy_dominating_set(&g, k).unwrap();
        prop_assert!(coverage_check(&g, &set, k).unwrap());
        prop_assert!(set.windows(2).all(|w| w[0] < w[1]));
    }

    #[test]
    fn brandes_matches_brute_force(n in 1usize..=20, p in 0.05f64..0.5, seed: u64) {
        let g = random_graph(n, p, seed);
        let fast = centrality(&g, CentralityKind::Betweenness).unwrap().scores;
        let slow = brute_betweenness(&g);
        for (a, b) in fast.iter().zip(&slow) {
            prop_assert!((a - b).abs() < 1e-9, "{fast:?} vs {slow:?}");
        }
    }

    #[test]
    fn load_equals_betweenness_on_trees(n in 1usize..=40, seed: u64) {
        let g = random_tree(n, seed);
        let b = centrality(&g, CentralityKind::Betweenness).unwrap().scores;
        let l = centrality(&g, CentralityKind::Load).unwrap().scores;
        for (x, y) in b.iter().zip(&l) {
            prop_assert!((x - y).abs() < 1e-9);
        }
    }

    #[test]
    fn centrality_is_permutation_equivariant(n in 1usize..=25, p in 0.05f64..0.4, seed: u64) {
        let g = random_graph(n, p, seed);
        let perm = random_permutation(n, seed ^ 0xABCD);
        let h = g.relabel(&perm).unwrap();
        for kind in CentralityKind::ALL {
            let a = centrality(&g, kind).unwrap().scores;
            let b = centrality(&h, kind).unwrap().scores;
            for v in 0..n {
                prop_assert!((a[v] - b[perm[v]]).abs() < 1e-9, "{kind}");
            }
        }
    }

    #[test]
    fn auc_matches_pairwise_oracle(
        data in prop::collection::vec((0u8..6, any::<bool>()), 2..=50)
    ) {
        let scores: Vec<f64> = data.iter().map(|d| d.0 as f64 / 5.0).collect();
        let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
        let pos = labels.iter().filter(|&&l| l).count();
        prop_assume!(pos > 0 && pos < labels.len());
        let fast = roc_auc(&scores, &labels).unwrap();
        prop_assert!((fast - pairwise_auc(&scores, &labels)).abs() < 1e-12);
    }

    #[test]
    fn auc_invariant_under_monotone_maps(
        data in prop::collection::vec((-3.0f64..3.0, any::<bool>()), 2..=50)
    ) {
        let scores: Vec<f64> = data.iter().map(|d| d.0).collect();
        let labels: Vec<bool> = data.iter().map(|d| d.1).collect();
        let pos = labels.iter().filter(|&&l| l).count();
        prop_assume!(pos > 0 && pos < labels.len());
        let base = roc_auc(&scores, &labels).unwrap();
        let exp: Vec<f64> = scores.iter().map(|s| s.exp()).collect();
        let affine: Vec<f64> = scores.iter().map(|s| 3.0 * s + 7.0).collect();
        prop_assert!((roc_auc(&exp, &labels).unwrap() - base).abs() < 1e-12);
        prop_assert!((roc_auc(&affine, &labels).unwrap() - base).abs() < 1e-12);
    }

    #[test]
    fn exact_wilcoxon_matches_enumeration(
        pairs in prop::collection::vec((0u8..8, 0u8..8), 1..=10)
    ) {
        // Small integer values produce plenty of ties and zeros.
        let a: Vec<f64> = pairs.iter().map(|p| p.0 as f64).collect();
        let b: Vec<f64> = pairs.iter().map(|p| p.1 as f64).collect();
        let r = wilcoxon_signed_rank(&a, &b).unwrap();
        prop_assert!(r.p_value >= 0.0 && r.p_value <= 1.0);
        if !r.degenerate {
            prop_assert_eq!(r.method, PMethod::Exact);
            prop_assert!((r.p_value - wilcoxon_by_enumeration(&a, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn correlations_invariant_under_monotone_maps(
        pairs in prop::collection::vec((-5.0f64..5.0, -5.0f64..5.0), 3..=30)
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        let (Ok(rho), Ok(tau)) = (spearman(&x, &y), kendall(&x, &y)) else {
            return Ok(());
        };
        prop_assert!((-1.0..=1.0).contains(&rho) && (-1.0..=1.0).contains(&tau));
        let fx: Vec<f64> = x.iter().map(|v| v.exp()).collect();
        let gy: Vec<f64> = y.iter().map(|v| 2.0 * v - 1.0).collect();
        prop_assert!((spearman(&fx, &gy).unwrap() - rho).abs() < 1e-12);
        prop_assert!((kendall(&fx, &gy).unwrap() - tau).abs() < 1e-12);
    }

    #[test]
    fn caveman_edge_count(c in 2usize..=8, s in 3usize..=10) {
        let g = gen_caveman(c, s).unwrap();
        prop_assert_eq!(g.node_count(), c * s);
        prop_assert_eq!(g.edge_count(), c * s * (s - 1) / 2);
        prop_assert!(g.is_connected());
    }

    #[test]
    fn edge_list_round_trip(n in 1usize..=30, p in 0.0f64..0.4, seed: u64) {
        let g = random_graph(n, p, seed);
        let (back, drops) = parse_edge_list(&g.to_edge_list()).unwrap();
        prop_assert_eq!(drops.self_loops + drops.duplicates, 0);
        prop_assert_eq!(back.node_count(), n);
        prop_assert_eq!(back.edges(), g.edges());
    }

    #[test]
    fn link_split_partitions(n in 12usize..=40, p in 0.15f64..0.4, seed: u64) {
        let g = random_graph(n, p, seed);
        prop_assume!(g.edge_count() >= 10);
        let Ok(d) = split_link(&g, seed) else { return Ok(()); };
        let mut seen = HashSet::new();
        let mut positives = 0;
        for set in [&d.train, &d.valid, &d.test] {
            prop_assert_eq!(set.positives(), set.negatives());
            for &(u, v, label) in &set.pairs {
                prop_assert!(seen.insert((u.min(v), u.max(v))), "pair in two splits");
                prop_assert_eq!(label, g.has_edge(u, v));
                positives += label as usize;
            }
        }
        prop_assert_eq!(positives, g.edge_count());
        prop_assert_eq!(d.message_graph.edge_count(), d.train.positives());
    }

    #[test]
    fn community_split_is_disjoint_and_seeded(c in 2usize..=5, s in 4usize..=8, seed: u64) {
        let g = gen_caveman(c, s).unwrap();
        let counts = PairCounts::proportional(c * s * (s - 1) / 2 / 2);
        let a = split_pairs_community(&g, seed, counts).unwrap();
        let b = split_pairs_community(&g, seed, counts).unwrap();
        prop_assert_eq!(&a.test, &b.test);
        let mut seen = HashSet::new();
        for set in [&a.train, &a.valid, &a.test] {
            prop_assert_eq!(set.positives(), set.negatives());
            for &(u, v, _) in &set.pairs {
                prop_assert!(seen.insert((u, v)));
            }
        }
    }
}
