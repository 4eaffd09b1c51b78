//! Independent reference implementations used by the integration tests.
//! Nothing here calls into the crate's numerics.

#![allow(dead_code, clippy::needless_range_loop)]

use std::path::PathBuf;

use freqsim::graph::CommGraph;
use freqsim::grid::{AreaParams, ResourceParams};
use freqsim::sim::{ControllerConfig, LoadProfile, ScenarioConfig};
use rand::Rng;

pub fn config_path(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR"))
        .join("../../configs")
        .join(name)
}

pub type Dense = Vec<Vec<f64>>;

pub fn dense_laplacian(n: usize, edges: &[(usize, usize)]) -> Dense {
    let mut l = vec![vec![0.0; n]; n];
    for &(i, j) in edges {
        l[i][j] -= 1.0;
        l[j][i] -= 1.0;
        l[i][i] += 1.0;
        l[j][j] += 1.0;
    }
    l
}

/// `I − β D^{1/2} L D^{1/2}` with `D = diag(2a)`, built from scratch.
pub fn dense_consensus(n: usize, edges: &[(usize, usize)], beta: f64, costs: &[f64]) -> Dense {
    let l = dense_laplacian(n, edges);
    let s: Vec<f64> = costs.iter().map(|a| (2.0 * a).sqrt()).collect();
    (0..n)
        .map(|i| {
            (0..n)
                .map(|j| f64::from(u8::from(i == j)) - beta * s[i] * l[i][j] * s[j])
                .collect()
        })
        .collect()
}

/// Cyclic Jacobi rotations until the off-diagonal mass vanishes. Eigenvalues
/// ascending.
pub fn jacobi_eigenvalues(mut a: Dense) -> Vec<f64> {
    let n = a.len();
    for _sweep in 0..100 {
        let off: f64 = (0..n)
            .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
            .map(|(i, j)| a[i][j] * a[i][j])
            .sum();
        if off < 1e-30 {
            break;
        }
        for p in 0..n {
            for q in p + 1..n {
                if a[p][q].abs() < 1e-300 {
                    continue;
                }
                let theta = (a[q][q] - a[p][p]) / (2.0 * a[p][q]);
                let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                let t = if theta == 0.0 { 1.0 } else { t };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                for k in 0..n {
                    let akp = a[k][p];
                    let akq = a[k][q];
                    a[k][p] = c * akp - s * akq;
                    a[k][q] = s * akp + c * akq;
                }
                for k in 0..n {
                    let apk = a[p][k];
                    let aqk = a[q][k];
                    a[p][k] = c * apk - s * aqk;
                    a[q][k] = s * apk + c * aqk;
                }
            }
        }
    }
    let mut eig: Vec<f64> = (0..n).map(|i| a[i][i]).collect();
    eig.sort_by(f64::total_cmp);
    eig
}

/// Minimizes `Σ a_i u_i²` on `Σ u_i = load` by gradient steps followed by
/// projection onto the constraint hyperplane.
pub fn projected_gradient_dispatch(costs: &[f64], load: f64) -> Vec<f64> {
    let n = costs.len() as f64;
    let a_max = costs.iter().copied().fold(0.0, f64::max);
    let step = 1.0 / (2.0 * a_max);
    let project = |u: &mut Vec<f64>| {
        let shift = (load - u.iter().sum::<f64>()) / n;
        u.iter_mut().for_each(|x| *x += shift);
    };
    let mut u = vec![load / n; costs.len()];
    for _ in 0..200_000 {
        let prev = u.clone();
        for (x, a) in u.iter_mut().zip(costs) {
            *x -= step * 2.0 * a * *x;
        }
        project(&mut u);
        let moved = u
            .iter()
            .zip(&prev)
            .map(|(x, y)| (x - y).abs())
            .fold(0.0, f64::max);
        if moved < 1e-18 {
            break;
        }
    }
    u
}

/// Random connected graph: a random spanning tree plus each remaining pair
/// with probability `p`.
pub fn random_connected_edges(rng: &mut impl Rng, n: usize, p: f64) -> Vec<(usize, usize)> {
    let mut edges = Vec::new();
    for v in 1..n {
        let parent = rng.random_range(0..v);
        edges.push((parent, v));
    }
    for i in 0..n {
        for j in i + 1..n {
            if !edges.contains(&(i, j)) && rng.random_bool(p) {
                edges.push((i, j));
            }
        }
    }
    edges
}

pub fn fig3_resource(droop_r: f64, t_g: f64, t_t: f64) -> ResourceParams {
    ResourceParams::new(0.5, 0.0, 0.0, droop_r, t_g, t_t, 0.01).unwrap()
}

/// Single-area scenario built in code.
pub fn single_area_scenario(
    resources: Vec<ResourceParams>,
    graph: CommGraph,
    controller: ControllerConfig,
    load: LoadProfile,
    slot_len: f64,
    horizon: f64,
) -> ScenarioConfig {
    ScenarioConfig {
        name: "test".into(),
        areas: vec![AreaParams::isolated(0.0833, 0.0084)],
        resources: vec![resources],
        graphs: vec![graph],
        ideal: false,
        controller,
        slot_len,
        inner_step: (slot_len / 10.0).min(0.01),
        sample_interval: slot_len,
        horizon,
        loads: vec![load],
        seed: 0,
        enforce_ramp: false,
        band: 5e-4,
    }
}

pub fn random_resources(rng: &mut impl Rng, n: usize, a_range: (f64, f64)) -> Vec<ResourceParams> {
    (0..n)
        .map(|_| {
            ResourceParams::new(
                rng.random_range(a_range.0..=a_range.1),
                0.0,
                0.0,
                rng.random_range(2.0..3.0),
                rng.random_range(0.05..0.06),
                rng.random_range(0.3..0.5),
                0.01,
            )
            .unwrap()
        })
        .collect()
}
