//! Secondary frequency controllers.
//!
//! [`DistributedController`] is the consensus-plus-global-innovation law. Each
//! resource keeps a marginal-price estimate `λ_i`, re-anchored every slot to
//! its measured output (`λ_i = 2a_i ΔP_m^i`), and updates
//!
//! ```text
//!   λ̃_i = λ_i − 2a_i β Σ_{l∈N(i)} (λ_i − λ_l) + (2a_i / n) · innovation
//!   u_i  = λ̃_i / (2a_i)
//! ```
//!
//! where the innovation is the supply/demand mismatch of the area, either
//! known exactly or estimated from two frequency samples.
//!
//! [`AgcController`] is the conventional baseline: a sampled PI loop on the
//! area control error split by participation factors.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::CommGraph;
use crate::grid::{AreaParams, ResourceParams};

/// How the global innovation term is formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum InnovationMode {
    /// Exact `ΔP_L(t+1) − ΣΔP_m(t)`.
    OracleLoad,
    /// Swing-equation estimate from slot-averaged measurements (see
    /// [`estimate_innovation_from_means`]).
    FrequencyEstimated,
    /// Swing-equation estimate from boundary samples only
    /// ([`estimate_innovation`]). Poorly damped when the slot is short
    /// relative to the primary-response oscillation.
    BoundarySampled,
}

/// Output of one consensus-plus-innovation update.
#[derive(Debug, Clone, PartialEq)]
pub struct ControlUpdate {
    pub control: Vec<f64>,
    pub lambda_tilde: Vec<f64>,
}

/// One synchronous update from the price snapshot `lambda`. Every `λ̃_i` is
/// computed from time-`t` values only.
pub fn consensus_update(
    graph: &CommGraph,
    costs: &[f64],
    beta: f64,
    lambda: &[f64],
    innovation: f64,
) -> Result<ControlUpdate> {
    let n = graph.n();
    for (context, len) in [("cost vector", costs.len()), ("price vector", lambda.len())] {
        if len != n {
            return Err(Error::DimensionMismatch {
                context,
                expected: n,
                actual: len,
            });
        }
    }
    let lambda_tilde: Vec<f64> = (0..n)
        .map(|i| updated_price(graph, costs, beta, lambda, innovation, i))
        .collect();
    let control = lambda_tilde
        .iter()
        .zip(costs)
        .map(|(l, a)| l / (2.0 * a))
        .collect();
    Ok(ControlUpdate {
        control,
        lambda_tilde,
    })
}

fn updated_price(
    graph: &CommGraph,
    costs: &[f64],
    beta: f64,
    lambda: &[f64],
    innovation: f64,
    i: usize,
) -> f64 {
    let n = graph.n() as f64;
    let a = costs[i];
    let disagreement: f64 = graph
        .neighbors(i)
        .iter()
        .map(|&l| lambda[i] - lambda[l])
        .sum();
    lambda[i] - 2.0 * a * beta * disagreement + 2.0 * a / n * innovation
}

/// Distributed consensus-plus-innovation controller for one area.
#[derive(Debug, Clone, PartialEq)]
pub struct DistributedController {
    /// Price iterates `λ_i`, anchored to `2a_i ΔP_m^i` before each update.
    pub lambda: Vec<f64>,
    pub beta: f64,
    pub mode: InnovationMode,
    graph: CommGraph,
    costs: Vec<f64>,
}

impl DistributedController {
    pub fn new(graph: CommGraph, costs: Vec<f64>, beta: f64, mode: InnovationMode) -> Result<Self> {
        if costs.len() != graph.n() {
            return Err(Error::DimensionMismatch {
                context: "resources vs graph nodes",
                expected: graph.n(),
                actual: costs.len(),
            });
        }
        if let Some((i, a)) = costs.iter().enumerate().find(|(_, a)| !(**a > 0.0)) {
            return Err(Error::param(
                format!("a[{i}]"),
                format!("a must be > 0, got {a}"),
            ));
        }
        if !(beta > 0.0) || !beta.is_finite() {
            return Err(Error::param("beta", format!("must be > 0, got {beta}")));
        }
        Ok(Self {
            lambda: vec![0.0; costs.len()],
            beta,
            mode,
            graph,
            costs,
        })
    }

    pub fn from_resources(
        graph: CommGraph,
        resources: &[ResourceParams],
        beta: f64,
        mode: InnovationMode,
    ) -> Result<Self> {
        Self::new(graph, resources.iter().map(|r| r.a).collect(), beta, mode)
    }

    pub fn graph(&self) -> &CommGraph {
        &self.graph
    }

    pub fn costs(&self) -> &[f64] {
        &self.costs
    }

    /// Re-anchors prices to measured outputs: `λ_i = 2a_i ΔP_m^i`.
    pub fn anchor(&mut self, mech_power: &[f64]) -> Result<()> {
        if mech_power.len() != self.costs.len() {
            return Err(Error::DimensionMismatch {
                context: "mechanical powers vs resources",
                expected: self.costs.len(),
                actual: mech_power.len(),
            });
        }
        for ((l, a), p) in self.lambda.iter_mut().zip(&self.costs).zip(mech_power) {
            *l = 2.0 * a * p;
        }
        Ok(())
    }

    /// Anchors to `mech_power`, then applies one update with the given
    /// innovation (pu).
    pub fn step(&mut self, mech_power: &[f64], innovation: f64) -> Result<ControlUpdate> {
        self.anchor(mech_power)?;
        consensus_update(
            &self.graph,
            &self.costs,
            self.beta,
            &self.lambda,
            innovation,
        )
    }
}

/// Estimated supply/demand mismatch `ΔP_L(t+1) − ΣΔP_m(t)` from the swing
/// equation: `−2H(Δf(t+1) − Δf(t))/ΔT − D Δf(t) − ΔP_tie(t)`.
pub fn estimate_innovation(
    area: &AreaParams,
    freq_now: f64,
    freq_next: f64,
    tie_flow: f64,
    slot_len: f64,
) -> f64 {
    -2.0 * area.inertia_h * (freq_next - freq_now) / slot_len - area.damping_d * freq_now - tie_flow
}

/// Averages of area measurements over the elapsed slot.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AreaSlotMeans {
    pub freq_dev: f64,
    pub tie_flow: f64,
    /// Mean of `ΣΔP_m` over the area's resources.
    pub supply: f64,
}

/// Estimated mismatch `ΔP_L − ΣΔP_m(t+1)` at the start of slot `t+1`.
///
/// Integrating the swing equation over the elapsed slot gives the slot's load
/// exactly in terms of slot means and the two boundary frequencies:
/// `ΔP_L = mean ΣΔP_m − D·mean Δf − mean ΔP_tie − 2H(Δf(t+1) − Δf(t))/ΔT`.
pub fn estimate_innovation_from_means(
    area: &AreaParams,
    means: &AreaSlotMeans,
    freq_prev: f64,
    freq_now: f64,
    supply_now: f64,
    slot_len: f64,
) -> f64 {
    let load = means.supply
        - 2.0 * area.inertia_h * (freq_now - freq_prev) / slot_len
        - area.damping_d * means.freq_dev
        - means.tie_flow;
    load - supply_now
}

/// Area control error sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AceSignal {
    pub area_id: usize,
    /// ACE (pu).
    pub value: f64,
    pub freq_dev_now: f64,
    pub freq_dev_prev: f64,
    pub tie_flow: f64,
}

impl AceSignal {
    /// `ACE = ΔP_tie + B Δf`.
    pub fn new(
        area_id: usize,
        bias: f64,
        freq_dev_now: f64,
        freq_dev_prev: f64,
        tie_flow: f64,
    ) -> Self {
        Self {
            area_id,
            value: tie_flow + bias * freq_dev_now,
            freq_dev_now,
            freq_dev_prev,
            tie_flow,
        }
    }
}

/// Frequency bias `B = D + Σ 1/R_i` (pu/Hz).
pub fn frequency_bias(area: &AreaParams, resources: &[ResourceParams]) -> f64 {
    area.damping_d + resources.iter().map(|r| 1.0 / r.droop_r).sum::<f64>()
}

/// Cost-proportional participation factors `α_i = a_i⁻¹ / Σ_j a_j⁻¹`.
pub fn participation_factors(costs: &[f64]) -> Result<Vec<f64>> {
    if costs.is_empty() {
        return Err(Error::param("a", "at least one resource is required"));
    }
    if let Some((i, a)) = costs
        .iter()
        .enumerate()
        .find(|(_, a)| !(**a > 0.0) || !a.is_finite())
    {
        return Err(Error::param(
            format!("a[{i}]"),
            format!("a must be > 0, got {a}"),
        ));
    }
    let total: f64 = costs.iter().map(|a| 1.0 / a).sum();
    Ok(costs.iter().map(|a| (1.0 / a) / total).collect())
}

/// Sampled ACE-PI controller with participation factors.
#[derive(Debug, Clone, PartialEq)]
pub struct AgcController {
    pub kp: f64,
    pub ki: f64,
    /// Accumulated ACE integral (pu·s).
    pub integral_acc: f64,
    pub alpha: Vec<f64>,
}

impl AgcController {
    pub fn new(kp: f64, ki: f64, alpha: Vec<f64>) -> Result<Self> {
        if !kp.is_finite() || !ki.is_finite() || kp < 0.0 || ki < 0.0 {
            return Err(Error::param(
                "agc gains",
                format!("must be finite and >= 0, got kp={kp}, ki={ki}"),
            ));
        }
        if alpha.is_empty() || alpha.iter().any(|a| !(*a >= 0.0)) {
            return Err(Error::param(
                "alpha",
                "participation factors must be non-negative",
            ));
        }
        let sum: f64 = alpha.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::param(
                "alpha",
                format!("participation factors must sum to 1, got {sum}"),
            ));
        }
        Ok(Self {
            kp,
            ki,
            integral_acc: 0.0,
            alpha,
        })
    }

    pub fn uniform(kp: f64, ki: f64, n: usize) -> Result<Self> {
        Self::new(kp, ki, vec![1.0 / n as f64; n])
    }

    /// Advances the integral by `ACE·ΔT` and returns `u_i = −α_i (kp·ACE + ki·∫ACE)`.
    pub fn step(&mut self, ace: &AceSignal, slot_len: f64) -> Vec<f64> {
        self.integral_acc += ace.value * slot_len;
        let command = -(self.kp * ace.value + self.ki * self.integral_acc);
        self.alpha.iter().map(|a| a * command).collect()
    }
}

/// Continuous-time PI approximation of the distributed law for one resource.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PiEquivalent {
    /// `T_u = ΔT + T_g + T_t` (s).
    pub t_u: f64,
    /// Proportional gain on Δf, `2H / (n T_u)`.
    pub proportional_gain: f64,
}

/// Diagnostic PI gains for each resource of an area (first-order
/// approximation of the governor/turbine lag).
pub fn pi_equivalent_gains(
    resources: &[ResourceParams],
    area: &AreaParams,
    slot_len: f64,
) -> Result<Vec<PiEquivalent>> {
    let n = resources.len() as f64;
    resources
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let t_u = slot_len + r.t_g + r.t_t;
            if !(t_u > 0.0) {
                return Err(Error::param(
                    format!("resource[{i}]"),
                    "T_u = ΔT + T_g + T_t must be > 0",
                ));
            }
            Ok(PiEquivalent {
                t_u,
                proportional_gain: 2.0 * area.inertia_h / (n * t_u),
            })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    const FIG6_COSTS: [f64; 5] = [0.4, 0.65, 0.45, 0.6, 0.5];

    #[test]
    fn agreement_is_a_fixed_point() {
        let g = CommGraph::ring(5).unwrap();
        let lambda = [0.7; 5];
        let up = consensus_update(&g, &FIG6_COSTS, 0.05, &lambda, 0.0).unwrap();
        assert_eq!(up.lambda_tilde, lambda.to_vec());
        for (u, a) in up.control.iter().zip(FIG6_COSTS) {
            assert_abs_diff_eq!(*u, 0.7 / (2.0 * a), epsilon = 1e-15);
        }
    }

    #[test]
    fn two_node_hand_evaluation() {
        let g = CommGraph::complete(2).unwrap();
        let up = consensus_update(&g, &[0.5, 0.5], 0.1, &[1.0, 2.0], -2.997).unwrap();
        assert_abs_diff_eq!(up.lambda_tilde[0], -0.3985, epsilon = 1e-12);
        assert_abs_diff_eq!(up.lambda_tilde[1], 0.4015, epsilon = 1e-12);
    }

    #[test]
    fn balance_with_anchored_prices() {
        let g = CommGraph::ring(5).unwrap();
        let mut ctrl =
            DistributedController::new(g, FIG6_COSTS.to_vec(), 0.2, InnovationMode::OracleLoad)
                .unwrap();
        let pm = [0.001, -0.002, 0.0005, 0.003, 0.0];
        let innovation = 0.004 - pm.iter().sum::<f64>();
        let up = ctrl.step(&pm, innovation).unwrap();
        assert_abs_diff_eq!(up.control.iter().sum::<f64>(), 0.004, epsilon = 1e-15);
    }

    #[test]
    fn evaluation_order_does_not_matter() {
        let g = CommGraph::new(4, [(0, 1), (1, 2), (2, 3), (0, 2)]).unwrap();
        let costs = [0.3, 0.9, 0.5, 1.2];
        let lambda = [0.1, -0.4, 0.25, 0.8];
        let forward = consensus_update(&g, &costs, 0.07, &lambda, 0.01).unwrap();
        let mut backward = vec![0.0; 4];
        for i in (0..4).rev() {
            backward[i] = updated_price(&g, &costs, 0.07, &lambda, 0.01, i);
        }
        assert_eq!(forward.lambda_tilde, backward);
    }

    #[test]
    fn rejects_dimension_mismatch() {
        let g = CommGraph::ring(4).unwrap();
        assert!(consensus_update(&g, &[0.5; 3], 0.1, &[0.0; 4], 0.0).is_err());
        assert!(
            DistributedController::new(g, vec![0.5; 5], 0.1, InnovationMode::OracleLoad).is_err()
        );
    }

    #[test]
    fn innovation_estimates() {
        let area = AreaParams::isolated(0.0833, 0.0084);
        assert_eq!(estimate_innovation(&area, 0.0, 0.0, 0.0, 4.0), 0.0);
        assert_abs_diff_eq!(
            estimate_innovation(&area, 0.0, -0.12, 0.0, 4.0),
            0.004998,
            epsilon = 1e-15
        );
        assert_abs_diff_eq!(
            estimate_innovation(&area, 0.0, -0.12, 0.002, 4.0),
            0.002998,
            epsilon = 1e-15
        );
    }

    #[test]
    fn participation() {
        let alpha = participation_factors(&FIG6_COSTS).unwrap();
        let want = [0.25183, 0.15497, 0.22385, 0.16789, 0.20146];
        for (got, want) in alpha.iter().zip(want) {
            assert_abs_diff_eq!(*got, want, epsilon = 5e-6);
        }
        assert_abs_diff_eq!(alpha.iter().sum::<f64>(), 1.0, epsilon = 1e-15);
        assert_eq!(participation_factors(&[0.3; 4]).unwrap(), vec![0.25; 4]);
        assert_eq!(participation_factors(&[2.0]).unwrap(), vec![1.0]);
        assert!(participation_factors(&[]).is_err());
    }

    #[test]
    fn agc_zero_ace_gives_zero_control() {
        let mut agc = AgcController::uniform(0.5, 2.0, 3).unwrap();
        let ace = AceSignal::new(0, 2.0, 0.0, 0.0, 0.0);
        for _ in 0..10 {
            assert_eq!(agc.step(&ace, 0.16), vec![0.0; 3]);
        }
    }

    #[test]
    fn agc_integral_accumulates() {
        let alpha = participation_factors(&FIG6_COSTS).unwrap();
        let mut agc = AgcController::new(0.0, 0.8, alpha.clone()).unwrap();
        let ace = AceSignal {
            area_id: 0,
            value: 0.01,
            freq_dev_now: 0.0,
            freq_dev_prev: 0.0,
            tie_flow: 0.0,
        };
        let mut u = Vec::new();
        for _ in 0..7 {
            u = agc.step(&ace, 0.4);
        }
        let total = -0.8 * 0.01 * 7.0 * 0.4;
        for (ui, ai) in u.iter().zip(alpha) {
            assert_abs_diff_eq!(*ui, ai * total, epsilon = 1e-15);
        }
        assert!(AgcController::new(1.0, 1.0, vec![0.5, 0.6]).is_err());
    }

    #[test]
    fn pi_gains() {
        let area = AreaParams::isolated(0.0833, 0.0084);
        let r = ResourceParams::new(0.5, 0.0, 0.0, 2.5, 0.05, 0.3, 0.01).unwrap();
        let gains = pi_equivalent_gains(&vec![r; 5], &area, 4.0).unwrap();
        assert_abs_diff_eq!(gains[0].t_u, 4.35, epsilon = 1e-12);
        assert_abs_diff_eq!(gains[0].proportional_gain, 0.1666 / 21.75, epsilon = 1e-12);
        assert_abs_diff_eq!(gains[0].proportional_gain, 0.0076598, epsilon = 1e-7);

        let ideal = ResourceParams::new(0.5, 0.0, 0.0, 2.5, 0.0, 0.0, 0.01).unwrap();
        assert!(pi_equivalent_gains(&[ideal], &area, 0.0).is_err());
    }
}
