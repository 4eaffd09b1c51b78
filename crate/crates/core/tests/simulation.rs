mod common;

use common::*;
use freqsim::config::parse_scenario;
use freqsim::controllers::InnovationMode;
use freqsim::graph::CommGraph;
use freqsim::grid::ResourceParams;
use freqsim::sim::{
    compare_controllers, run_multi_area, run_scenario, ControllerConfig, LoadProfile, Participation,
};
use freqsim::trace::{read_trace, write_trace};
use freqsim::Error;

fn fig3_resources() -> Vec<ResourceParams> {
    [
        (2.1, 0.051, 0.32),
        (2.9, 0.058, 0.47),
        (2.4, 0.055, 0.41),
        (2.6, 0.052, 0.36),
        (2.2, 0.059, 0.44),
    ]
    .iter()
    .map(|&(r, tg, tt)| fig3_resource(r, tg, tt))
    .collect()
}

fn distributed(innovation: InnovationMode) -> ControllerConfig {
    ControllerConfig::Distributed {
        beta: 0.003,
        innovation,
    }
}

#[test]
fn zero_load_stays_at_rest() {
    for controller in [
        distributed(InnovationMode::FrequencyEstimated),
        distributed(InnovationMode::BoundarySampled),
        ControllerConfig::Agc {
            kp: 0.1,
            ki: 0.3,
            participation: Participation::Cost,
        },
    ] {
        let config = single_area_scenario(
            fig3_resources(),
            CommGraph::ring(5).unwrap(),
            controller,
            LoadProfile::Zero,
            1.0,
            20.0,
        );
        let trace = run_scenario(&config).unwrap();
        let series = trace
            .freq_dev
            .iter()
            .chain(&trace.mech_power)
            .chain(&trace.valve_pos)
            .chain(&trace.control)
            .chain(&trace.lambda)
            .chain(&trace.tie_flow);
        for s in series {
            assert!(s.iter().all(|&v| v == 0.0));
        }
    }
}

/// No secondary action and ideal resources: only damping opposes the load,
/// so frequency settles at `−ΔP_L / D`.
#[test]
fn uncontrolled_frequency_settles_at_damping_limit() {
    let resources = vec![ResourceParams::new(0.5, 0.0, 0.0, 2.5, 0.0, 0.0, 0.01).unwrap(); 3];
    let mut config = single_area_scenario(
        resources,
        CommGraph::ring(3).unwrap(),
        ControllerConfig::Agc {
            kp: 0.0,
            ki: 0.0,
            participation: Participation::Uniform,
        },
        LoadProfile::Step {
            magnitude: 0.001,
            at: 0.0,
        },
        1.0,
        200.0,
    );
    config.ideal = true;
    let trace = run_scenario(&config).unwrap();
    let target = -0.001 / 0.0084;
    let last = *trace.freq_dev[0].last().unwrap();
    assert!(
        (last - target).abs() <= 0.005 * target.abs(),
        "{last} vs {target}"
    );
}

#[test]
fn distributed_control_restores_balance() {
    for innovation in [
        InnovationMode::FrequencyEstimated,
        InnovationMode::OracleLoad,
    ] {
        let config = single_area_scenario(
            fig3_resources(),
            CommGraph::ring(5).unwrap(),
            distributed(innovation),
            LoadProfile::Step {
                magnitude: 0.005,
                at: 0.0,
            },
            1.0,
            60.0,
        );
        let trace = run_scenario(&config).unwrap();
        let last = trace.len() - 1;
        let supply: f64 = trace.mech_power.iter().map(|s| s[last]).sum();
        assert!(
            (supply - 0.005).abs() <= 1e-6,
            "{innovation:?}: supply {supply}"
        );
        assert!(trace.freq_dev[0][last].abs() <= 1e-6);
    }
}

#[test]
fn controls_change_only_at_slot_boundaries() {
    let mut config = single_area_scenario(
        fig3_resources(),
        CommGraph::ring(5).unwrap(),
        distributed(InnovationMode::FrequencyEstimated),
        LoadProfile::RandomPiecewise {
            period: 2.0,
            bound: 0.003,
            seed: 4,
        },
        2.0,
        20.0,
    );
    config.sample_interval = 0.1;
    let trace = run_scenario(&config).unwrap();
    for r in 1..trace.len() {
        let expected_slot = ((trace.times[r] - 1e-9) / 2.0).floor().max(0.0) as usize;
        let same_slot = trace.slot[r] == trace.slot[r - 1];
        if same_slot {
            assert!(trace.control.iter().all(|u| u[r] == u[r - 1]), "row {r}");
            assert!(trace.load.iter().all(|l| l[r] == l[r - 1]), "row {r}");
        } else {
            assert!((trace.times[r] - 2.0 * trace.slot[r] as f64).abs() < 1e-9);
        }
        assert!(trace.slot[r] == expected_slot || trace.slot[r] == expected_slot + 1);
    }
    assert_eq!(*trace.slot.last().unwrap(), 9);
    assert_eq!(*trace.times.last().unwrap(), 20.0);
}

#[test]
fn longer_slots_settle_later_across_areas() {
    let base = parse_scenario(config_path("fig8.cfg")).unwrap();
    let mut slow = base.clone();
    slow.slot_len = 4.0;
    let fast_t = run_multi_area(&base)
        .unwrap()
        .metrics(5e-4)
        .settling_time
        .unwrap();
    let slow_t = run_multi_area(&slow)
        .unwrap()
        .metrics(5e-4)
        .settling_time
        .unwrap();
    assert!(slow_t > fast_t, "ΔT=4: {slow_t} s, ΔT=1: {fast_t} s");
}

#[test]
fn multi_area_entry_point_needs_ties() {
    let config = parse_scenario(config_path("fig3_step.cfg")).unwrap();
    assert!(matches!(
        run_multi_area(&config),
        Err(Error::InvalidParameter { .. })
    ));
}

#[test]
fn comparison_needs_the_same_plant() {
    let dist = parse_scenario(config_path("fig3_step.cfg")).unwrap();
    let agc = parse_scenario(config_path("fig3_agc.cfg")).unwrap();
    let cmp = compare_controllers(&dist, &agc).unwrap();
    assert_eq!(cmp.aligned.len(), cmp.left.trace.len());
    assert!(cmp
        .aligned
        .iter()
        .all(|s| s.left.len() == 1 && s.right.len() == 1));

    let other = parse_scenario(config_path("fig8.cfg")).unwrap();
    assert!(matches!(
        compare_controllers(&dist, &other),
        Err(Error::Incomparable(_))
    ));
}

#[test]
fn bundled_step_scenario_matches_reference_plant() {
    let config = parse_scenario(config_path("fig3_step.cfg")).unwrap();
    assert_eq!(config.resources[0].len(), 5);
    assert_eq!(config.areas[0].inertia_h, 0.0833);
    assert_eq!(config.areas[0].damping_d, 0.0084);
    assert_eq!(config.graphs[0], CommGraph::ring(5).unwrap());
    assert!(
        matches!(config.controller, ControllerConfig::Distributed { beta, .. } if beta == 0.003)
    );
    for r in &config.resources[0] {
        assert!((2.0..=3.0).contains(&r.droop_r));
        assert!((0.05..=0.06).contains(&r.t_g));
        assert!((0.3..=0.5).contains(&r.t_t));
    }
}

#[test]
fn trace_survives_a_round_trip() {
    let config = parse_scenario(config_path("fig5_distributed.cfg")).unwrap();
    let trace = run_scenario(&config).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("trace.csv");
    write_trace(&trace, &path).unwrap();
    let back = read_trace(&path).unwrap();

    assert_eq!(back.slot, trace.slot);
    assert_eq!(back.area_of_resource, trace.area_of_resource);
    let close = |a: f64, b: f64| {
        (a.is_nan() && b.is_nan()) || (a - b).abs() <= 1e-12 * a.abs().max(b.abs())
    };
    let pairs = [
        (&back.freq_dev, &trace.freq_dev),
        (&back.mech_power, &trace.mech_power),
        (&back.valve_pos, &trace.valve_pos),
        (&back.control, &trace.control),
        (&back.lambda, &trace.lambda),
        (&back.load, &trace.load),
        (&back.tie_flow, &trace.tie_flow),
    ];
    for (got, want) in pairs {
        for (g, w) in got.iter().zip(want) {
            assert!(g.iter().zip(w).all(|(x, y)| close(*x, *y)));
        }
    }
    assert!(back
        .times
        .iter()
        .zip(&trace.times)
        .all(|(x, y)| close(*x, *y)));
    assert!(back
        .dispatch_rel_err
        .iter()
        .zip(&trace.dispatch_rel_err)
        .all(|(x, y)| close(*x, *y)));
}
