//! Centralized economic dispatch (ground truth for the distributed
//! controller), the tracking bound, and the ramp-relaxation check.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::graph::{check_condition, CommGraph};
use crate::grid::ResourceParams;

/// Solution of `min Σ a_i u_i²  s.t.  Σ u_i = ΔP_L`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DispatchSolution {
    pub u_star: Vec<f64>,
    /// Common marginal price.
    pub lambda_star: f64,
    /// `Σ a_i u_i*²` (the constant and linear terms drop out when all `b_i` agree).
    pub total_cost: f64,
}

/// Closed form: `λ* = 2ΔP_L / Σ a_j⁻¹`, `u_i* = λ* / (2a_i)`.
pub fn optimal_dispatch(costs: &[f64], load_dev: f64) -> Result<DispatchSolution> {
    if costs.is_empty() {
        return Err(Error::param("a", "dispatch needs at least one resource"));
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
    let inv_sum: f64 = costs.iter().map(|a| 1.0 / a).sum();
    let lambda_star = 2.0 * load_dev / inv_sum;
    let u_star: Vec<f64> = costs.iter().map(|a| lambda_star / (2.0 * a)).collect();
    let total_cost = costs.iter().zip(&u_star).map(|(a, u)| a * u * u).sum();
    Ok(DispatchSolution {
        u_star,
        lambda_star,
        total_cost,
    })
}

/// Full dispatch cost `Σ (a_i u_i² + b_i u_i + c_i)`.
pub fn dispatch_cost(resources: &[ResourceParams], u: &[f64]) -> f64 {
    resources.iter().zip(u).map(|(r, u)| r.cost(*u)).sum()
}

/// Distance of a dispatch from the optimum.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DispatchGap {
    pub max_lambda_dev: f64,
    pub max_u_dev: f64,
    /// `max_i |u_i − u_i*| / |u_i*|` over resources with `u_i* ≠ 0`; `None`
    /// when the optimum is identically zero.
    pub relative_error: Option<f64>,
}

pub fn dispatch_gap(
    lambda: &[f64],
    u: &[f64],
    costs: &[f64],
    load_dev: f64,
) -> Result<DispatchGap> {
    let n = costs.len();
    for (context, len) in [("price vector", lambda.len()), ("control vector", u.len())] {
        if len != n {
            return Err(Error::DimensionMismatch {
                context,
                expected: n,
                actual: len,
            });
        }
    }
    let opt = optimal_dispatch(costs, load_dev)?;
    let max_lambda_dev = lambda
        .iter()
        .map(|l| (l - opt.lambda_star).abs())
        .fold(0.0, f64::max);
    let max_u_dev = u
        .iter()
        .zip(&opt.u_star)
        .map(|(u, s)| (u - s).abs())
        .fold(0.0, f64::max);
    let relative_error = u
        .iter()
        .zip(&opt.u_star)
        .filter(|(_, s)| **s != 0.0)
        .map(|(u, s)| (u - s).abs() / s.abs())
        .reduce(f64::max);
    Ok(DispatchGap {
        max_lambda_dev,
        max_u_dev,
        relative_error,
    })
}

/// Tracking bound `|λ_i − λ*| ≤ c ε` for loads changing by at most `ε` per slot.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct CostBound {
    pub gamma: f64,
    /// `max_i |2a_i/n − 2/Σ a_j⁻¹|`.
    pub delta: f64,
    /// `delta / (1 − gamma)`.
    pub c: f64,
    pub epsilon: f64,
}

impl CostBound {
    pub fn bound(&self) -> f64 {
        self.c * self.epsilon
    }
}

/// Per-slot price disturbance gain `max_i |2a_i/n − 2/Σ a_j⁻¹|`.
pub fn disturbance_gain(costs: &[f64]) -> f64 {
    let n = costs.len() as f64;
    let mean_price_gain = 2.0 / costs.iter().map(|a| 1.0 / a).sum::<f64>();
    costs
        .iter()
        .map(|a| (2.0 * a / n - mean_price_gain).abs())
        .fold(0.0, f64::max)
}

/// Steady state of the contraction recursion `e ← γ e + δ ε`.
pub fn compute_cost_bound(
    graph: &CommGraph,
    beta: f64,
    costs: &[f64],
    epsilon: f64,
) -> Result<CostBound> {
    if !(epsilon >= 0.0) || !epsilon.is_finite() {
        return Err(Error::param(
            "epsilon",
            format!("must be >= 0, got {epsilon}"),
        ));
    }
    let report = check_condition(graph, beta, costs)?;
    if !report.satisfied {
        return Err(Error::BoundUndefined {
            gamma: report.gamma,
        });
    }
    let delta = disturbance_gain(costs);
    Ok(CostBound {
        gamma: report.gamma,
        delta,
        c: delta / (1.0 - report.gamma),
        epsilon,
    })
}

/// Ramp-relaxation verdict for one resource.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RampCheck {
    pub resource: usize,
    /// `(2β c |N(i)| + 1/n) ε`.
    pub required: f64,
    pub limit: f64,
    /// `limit − required`.
    pub margin: f64,
    pub satisfied: bool,
}

/// Checks that the worst per-slot control move stays within each resource's
/// ramping limit, so ramping constraints can be dropped from the dispatch.
pub fn ramp_relaxation_check(
    bound: &CostBound,
    graph: &CommGraph,
    beta: f64,
    resources: &[ResourceParams],
) -> Result<Vec<RampCheck>> {
    if resources.len() != graph.n() {
        return Err(Error::DimensionMismatch {
            context: "resources vs graph nodes",
            expected: graph.n(),
            actual: resources.len(),
        });
    }
    let n = resources.len() as f64;
    Ok(resources
        .iter()
        .enumerate()
        .map(|(i, r)| {
            let required =
                (2.0 * beta * bound.c * graph.degree(i) as f64 + 1.0 / n) * bound.epsilon;
            RampCheck {
                resource: i,
                required,
                limit: r.ramp_r,
                margin: r.ramp_r - required,
                satisfied: required <= r.ramp_r,
            }
        })
        .collect())
}
