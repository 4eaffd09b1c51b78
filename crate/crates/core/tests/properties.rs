#![allow(clippy::needless_range_loop)]

mod common;

use common::*;
use freqsim::controllers::{consensus_update, InnovationMode};
use freqsim::dispatch::optimal_dispatch;
use freqsim::graph::{algebraic_connectivity, check_condition, max_admissible_beta, CommGraph};
use freqsim::grid::{AreaParams, ResourceParams, TieCoupling};
use freqsim::sim::{run_scenario, ControllerConfig, LoadProfile, ScenarioConfig};
use proptest::prelude::*;

/// Graph on `n` nodes: any subset of the possible edges, so disconnected
/// graphs are included.
fn any_graph(max_n: usize) -> impl Strategy<Value = CommGraph> {
    (2..=max_n).prop_flat_map(|n| {
        let pairs: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .collect();
        proptest::collection::vec(any::<bool>(), pairs.len()).prop_map(move |mask| {
            let edges = pairs
                .iter()
                .zip(mask)
                .filter(|(_, keep)| *keep)
                .map(|(e, _)| *e);
            CommGraph::new(n, edges).unwrap()
        })
    })
}

fn connected_graph(max_n: usize) -> impl Strategy<Value = CommGraph> {
    any_graph(max_n).prop_filter("connected", CommGraph::is_connected)
}

fn costs_for(n: usize) -> impl Strategy<Value = Vec<f64>> {
    proptest::collection::vec(0.1f64..2.0, n)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    // Anchored prices plus the exact innovation always restore the balance,
    // whatever the topology or gain.
    #[test]
    fn anchored_update_balances_supply(
        (graph, costs, pm) in any_graph(8).prop_flat_map(|g| {
            let n = g.n();
            (Just(g), costs_for(n), proptest::collection::vec(-0.02f64..0.02, n))
        }),
        beta in 1e-4f64..1.0,
        load in -0.05f64..0.05,
    ) {
        let lambda: Vec<f64> = costs.iter().zip(&pm).map(|(a, p)| 2.0 * a * p).collect();
        let innovation = load - pm.iter().sum::<f64>();
        let update = consensus_update(&graph, &costs, beta, &lambda, innovation).unwrap();
        let scale = lambda.iter().map(|l| l.abs()).fold(load.abs(), f64::max) * (1.0 + 16.0 * beta);
        let total: f64 = update.control.iter().sum();
        prop_assert!((total - load).abs() <= 1e-13 * scale.max(1e-3), "{total} vs {load}");
    }

    #[test]
    fn update_commutes_with_relabeling(
        (graph, costs, lambda, perm) in any_graph(7).prop_flat_map(|g| {
            let n = g.n();
            let perm = Just((0..n).collect::<Vec<usize>>()).prop_shuffle();
            (Just(g), costs_for(n), proptest::collection::vec(-0.01f64..0.01, n), perm)
        }),
        beta in 1e-3f64..0.3,
        innovation in -0.01f64..0.01,
    ) {
        let base = consensus_update(&graph, &costs, beta, &lambda, innovation).unwrap();
        // Node i becomes node perm[i].
        let relabeled = graph.relabel(&perm).unwrap();
        let n = graph.n();
        let mut costs_p = vec![0.0; n];
        let mut lambda_p = vec![0.0; n];
        for i in 0..n {
            costs_p[perm[i]] = costs[i];
            lambda_p[perm[i]] = lambda[i];
        }
        let moved = consensus_update(&relabeled, &costs_p, beta, &lambda_p, innovation).unwrap();
        for i in 0..n {
            prop_assert!((moved.control[perm[i]] - base.control[i]).abs() <= 1e-15);
        }
    }

    #[test]
    fn adding_an_edge_never_lowers_fiedler_value(graph in any_graph(6), pick in any::<prop::sample::Index>()) {
        let n = graph.n();
        let missing: Vec<(usize, usize)> = (0..n)
            .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
            .filter(|&(i, j)| !graph.has_edge(i, j))
            .collect();
        prop_assume!(!missing.is_empty());
        let extra = missing[pick.index(missing.len())];
        let bigger = CommGraph::new(n, graph.edges().chain(std::iter::once(extra))).unwrap();
        let edges: Vec<_> = graph.edges().collect();
        let oracle_before = jacobi_eigenvalues(dense_laplacian(n, &edges))[1];
        let before = algebraic_connectivity(&graph);
        let after = algebraic_connectivity(&bigger);
        prop_assert!((before - oracle_before).abs() < 1e-10);
        prop_assert!(after >= before - 1e-12, "{before} -> {after}");
    }

    #[test]
    fn leading_eigenvalue_is_one(
        (graph, costs) in any_graph(8).prop_flat_map(|g| { let n = g.n(); (Just(g), costs_for(n)) }),
        frac in 0.01f64..1.0,
    ) {
        let beta = max_admissible_beta(&graph, &costs).unwrap().unwrap_or(1.0) * frac;
        let report = check_condition(&graph, beta, &costs).unwrap();
        prop_assert!((report.eigenvalues[0] - 1.0).abs() < 1e-12);
        let ones = report.eigenvalues.iter().filter(|e| (*e - 1.0).abs() < 1e-9).count();
        prop_assert_eq!(ones == 1, graph.is_connected());
    }

    #[test]
    fn dispatch_invariant_under_cost_scaling(
        costs in (2usize..8).prop_flat_map(costs_for),
        load in -0.01f64..0.01,
        k in 0.1f64..10.0,
    ) {
        let base = optimal_dispatch(&costs, load).unwrap();
        let scaled_costs: Vec<f64> = costs.iter().map(|a| a * k).collect();
        let scaled = optimal_dispatch(&scaled_costs, load).unwrap();
        for (u, v) in base.u_star.iter().zip(&scaled.u_star) {
            prop_assert!((u - v).abs() <= 1e-14 * load.abs().max(1e-3));
        }
        prop_assert!((scaled.lambda_star - k * base.lambda_star).abs() <= 1e-12 * base.lambda_star.abs().max(1e-6));
        let total: f64 = base.u_star.iter().sum();
        prop_assert!((total - load).abs() <= 1e-15);
    }

    // Pure consensus (no innovation) contracts the disagreement, measured in
    // the norm that symmetrizes the iteration, by at least γ per step.
    #[test]
    fn consensus_alone_contracts(
        (graph, costs, lambda) in connected_graph(7).prop_flat_map(|g| {
            let n = g.n();
            (Just(g), proptest::collection::vec(0.4f64..0.6, n), proptest::collection::vec(-1.0f64..1.0, n))
        }),
        frac in 0.2f64..0.9,
    ) {
        let beta = max_admissible_beta(&graph, &costs).unwrap().unwrap() * frac;
        let report = check_condition(&graph, beta, &costs).unwrap();
        prop_assume!(report.satisfied);
        let disagreement = |l: &[f64]| {
            let w: f64 = costs.iter().map(|a| 1.0 / (2.0 * a)).sum();
            let mean = l.iter().zip(&costs).map(|(x, a)| x / (2.0 * a)).sum::<f64>() / w;
            l.iter().zip(&costs).map(|(x, a)| (x - mean).powi(2) / (2.0 * a)).sum::<f64>().sqrt()
        };
        let next = consensus_update(&graph, &costs, beta, &lambda, 0.0).unwrap().lambda_tilde;
        let (before, after) = (disagreement(&lambda), disagreement(&next));
        prop_assert!(after <= report.gamma * before + 1e-14, "{before} -> {after}, gamma {}", report.gamma);
    }
}

fn two_area_config(tie: f64, seed: u64, slot_len: f64) -> ScenarioConfig {
    let resource = |r: f64| ResourceParams::new(0.5, 0.0, 0.0, r, 0.05, 0.4, 0.01).unwrap();
    let area = |k: usize| AreaParams {
        inertia_h: 0.0833,
        damping_d: 0.0084,
        tie_couplings: vec![TieCoupling {
            neighbor: k,
            coefficient: tie,
        }],
    };
    ScenarioConfig {
        name: "two-area".into(),
        areas: vec![area(1), area(0)],
        resources: vec![
            vec![resource(2.0), resource(2.8)],
            vec![resource(2.4), resource(3.0)],
        ],
        graphs: vec![
            CommGraph::complete(2).unwrap(),
            CommGraph::complete(2).unwrap(),
        ],
        ideal: false,
        controller: ControllerConfig::Distributed {
            beta: 0.003,
            innovation: InnovationMode::FrequencyEstimated,
        },
        slot_len,
        inner_step: 0.01,
        sample_interval: 0.1,
        horizon: 10.0 * slot_len,
        loads: vec![
            LoadProfile::RandomPiecewise {
                period: slot_len,
                bound: 0.003,
                seed,
            },
            LoadProfile::RandomPiecewise {
                period: slot_len,
                bound: 0.003,
                seed: seed + 1,
            },
        ],
        seed,
        enforce_ramp: false,
        band: 5e-4,
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(16))]

    #[test]
    fn tie_flows_cancel(tie in 0.02f64..0.5, seed in 0u64..1000, slot_len in prop::sample::select(vec![0.4, 1.0])) {
        let trace = run_scenario(&two_area_config(tie, seed, slot_len)).unwrap();
        for r in 0..trace.len() {
            let net = trace.tie_flow[0][r] + trace.tie_flow[1][r];
            prop_assert!(net.abs() <= 1e-15, "row {r}: {net}");
        }
    }
}
