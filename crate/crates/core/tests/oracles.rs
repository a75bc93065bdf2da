mod common;

use std::collections::BTreeSet;

use cot_inspector_core::diagnostics::{propagate, r_depth};
use cot_inspector_core::eval::{f1, macro_average};
use cot_inspector_core::model::DependencyGraph;
use cot_inspector_core::premise::{ancestors, descendants};
use proptest::prelude::*;

#[test]
fn graph_functions_match_oracles_on_random_dags() {
    common::check_graph_oracles(100, 7).unwrap();
}

#[test]
fn score_sample_matches_confusion_counting() {
    common::check_metric_oracle(1000, 11).unwrap();
}

#[test]
fn published_macro_rows_are_reproduced() {
    for (pairs, (p, r, f)) in [(common::OURS_PR, common::OURS_MACRO), (common::BIG_BENCH_PR, common::BIG_BENCH_MACRO)] {
        let row = macro_average(&common::rows(&pairs)).unwrap();
        assert!((row.precision - p).abs() <= common::MACRO_TOLERANCE, "{row:?}");
        assert!((row.recall - r).abs() <= common::MACRO_TOLERANCE, "{row:?}");
        assert!((row.f1 - f).abs() <= common::MACRO_TOLERANCE, "{row:?}");
        // the macro F1 is a mean of per-sample F1 values, not F1 of the means
        assert!((row.f1 - f1(row.precision, row.recall)).abs() > 1e-6);
    }
}

#[test]
fn lineage_on_random_dags_matches_floyd_warshall() {
    let mut rng = common::rng(3);
    for _ in 0..20 {
        let graph = common::random_dag(&mut rng, 200);
        let core: Vec<_> = (1..graph.node_count)
            .map(|step| cot_inspector_core::model::ErrorAnnotation {
                step,
                kind: cot_inspector_core::model::ErrorKind::Factual,
                origin: cot_inspector_core::model::ErrorOrigin::Core,
                cause_steps: vec![],
            })
            .take(1)
            .collect();
        let _ = propagate(&graph, &core);
        for v in 0..graph.node_count {
            let anc = ancestors(&graph, v).unwrap();
            for a in &anc {
                assert!(descendants(&graph, *a).unwrap().contains(&v));
            }
            assert!(!anc.contains(&v));
        }
    }
}

#[test]
fn r_depth_two_node_and_unreachable_cases() {
    let mut graph = DependencyGraph::empty(3);
    graph.verifiable_nodes = BTreeSet::from([1, 2, 3]);
    graph.edges.push(cot_inspector_core::model::PremiseEdge { premise: 1, conclusion: 2, explanation: String::new() });
    let depths = r_depth(&graph, &BTreeSet::from([2]));
    assert_eq!(depths.values().copied().collect::<Vec<_>>(), vec![0, 2, 1, 0]);
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn ancestors_and_descendants_are_mutually_consistent(seed in any::<u64>()) {
        let graph = common::random_dag(&mut common::rng(seed), 60);
        for a in 0..graph.node_count {
            let desc = descendants(&graph, a).unwrap();
            for b in 0..graph.node_count {
                prop_assert_eq!(desc.contains(&b), ancestors(&graph, b).unwrap().contains(&a));
            }
        }
    }

    #[test]
    fn edges_point_backward_so_index_order_is_topological(seed in any::<u64>()) {
        let graph = common::random_dag(&mut common::rng(seed), 120);
        prop_assert!(graph.validate().is_ok());
        prop_assert!(graph.edges.iter().all(|e| e.premise < e.conclusion));
    }

    #[test]
    fn propagation_only_marks_non_core_descendants(seed in any::<u64>()) {
        let mut rng = common::rng(seed);
        let graph = common::random_dag(&mut rng, 80);
        let core = common::random_core(&mut rng, &graph);
        let core_steps: BTreeSet<u32> = core.iter().map(|e| e.step).collect();
        let mut reachable = BTreeSet::new();
        for &c in &core_steps {
            reachable.extend(descendants(&graph, c).unwrap());
        }
        let propagated: BTreeSet<u32> = propagate(&graph, &core).iter().map(|e| e.step).collect();
        let expected: BTreeSet<u32> = reachable.difference(&core_steps).copied().collect();
        prop_assert_eq!(propagated, expected);
    }
}
