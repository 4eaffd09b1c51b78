//! Run reports as TOML documents.
//!
//! Analysis sections (spectral check, tracking bound, ramp relaxation) are
//! recomputed from the scenario; performance numbers come from the trace
//! alone, so a report can be regenerated from a saved trace.

use std::io::Write;
use std::path::Path;

use serde::Serialize;
use tempfile::NamedTempFile;

use crate::dispatch::{compute_cost_bound, ramp_relaxation_check, CostBound, RampCheck};
use crate::error::{Error, Result};
use crate::graph::{check_condition, SpectralReport};
use crate::sim::{Comparison, ControllerConfig, ScenarioConfig, SimTrace, TraceMetrics};

#[derive(Debug, Clone, Serialize)]
pub struct ScenarioDigest {
    pub name: String,
    pub seed: u64,
    pub controller: ControllerConfig,
    pub slot_len: f64,
    pub inner_step: f64,
    pub horizon: f64,
    pub n_areas: usize,
    pub n_resources: usize,
    pub ideal: bool,
    pub enforce_ramp: bool,
}

impl ScenarioDigest {
    pub fn new(config: &ScenarioConfig) -> Self {
        Self {
            name: config.name.clone(),
            seed: config.seed,
            controller: config.controller.clone(),
            slot_len: config.slot_len,
            inner_step: config.inner_step,
            horizon: config.horizon,
            n_areas: config.areas.len(),
            n_resources: config.resources.iter().map(Vec::len).sum(),
            ideal: config.ideal,
            enforce_ramp: config.enforce_ramp,
        }
    }
}

/// Consensus analysis of one area's distributed controller.
#[derive(Debug, Clone, Serialize)]
pub struct AreaAnalysis {
    pub area: usize,
    pub spectral: SpectralReport,
    /// Largest per-slot load change of this area.
    pub epsilon: f64,
    /// Present only when the spectral condition holds.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub cost_bound: Option<CostBound>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub tracking_bound: Option<f64>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub ramp_check: Vec<RampCheck>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AreaPerformance {
    pub area: usize,
    pub freq_nadir: f64,
    pub final_freq_dev: f64,
    pub final_tie_flow: f64,
    /// Final `ΣΔP_m` of the area's resources.
    pub final_supply: f64,
    pub final_load: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunReport {
    pub scenario: ScenarioDigest,
    pub metrics: TraceMetrics,
    pub area: Vec<AreaPerformance>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub analysis: Vec<AreaAnalysis>,
    #[serde(skip_serializing_if = "Vec::is_empty")]
    pub warnings: Vec<String>,
}

/// Consensus analysis for every area of a distributed-controller scenario;
/// empty for AGC.
pub fn analyze(config: &ScenarioConfig) -> Result<Vec<AreaAnalysis>> {
    let ControllerConfig::Distributed { beta, .. } = config.controller else {
        return Ok(Vec::new());
    };
    let n_slots = config.n_slots();
    (0..config.areas.len())
        .map(|j| {
            let resources = &config.resources[j];
            let costs: Vec<f64> = resources.iter().map(|r| r.a).collect();
            let graph = &config.graphs[j];
            let spectral = check_condition(graph, beta, &costs)?;
            let epsilon = config.loads[j].max_change(n_slots, config.slot_len);
            let (cost_bound, ramp_check) = if spectral.satisfied {
                let bound = compute_cost_bound(graph, beta, &costs, epsilon)?;
                let checks = ramp_relaxation_check(&bound, graph, beta, resources)?;
                (Some(bound), checks)
            } else {
                (None, Vec::new())
            };
            Ok(AreaAnalysis {
                area: j,
                spectral,
                epsilon,
                tracking_bound: cost_bound.as_ref().map(CostBound::bound),
                cost_bound,
                ramp_check,
            })
        })
        .collect()
}

/// Per-area end-of-run numbers read off the trace.
pub fn area_performance(trace: &SimTrace) -> Vec<AreaPerformance> {
    let Some(last) = trace.len().checked_sub(1) else {
        return Vec::new();
    };
    (0..trace.n_areas())
        .map(|j| {
            let nadir = trace.freq_dev[j].iter().copied().fold(0.0, |best: f64, v| {
                if v.abs() > best.abs() {
                    v
                } else {
                    best
                }
            });
            AreaPerformance {
                area: j,
                freq_nadir: nadir,
                final_freq_dev: trace.freq_dev[j][last],
                final_tie_flow: trace.tie_flow[j][last],
                final_supply: (0..trace.n_resources())
                    .filter(|&i| trace.area_of_resource[i] == j)
                    .map(|i| trace.mech_power[i][last])
                    .sum(),
                final_load: trace.load[j][last],
            }
        })
        .collect()
}

pub fn run_report(config: &ScenarioConfig, trace: &SimTrace) -> Result<RunReport> {
    Ok(RunReport {
        scenario: ScenarioDigest::new(config),
        metrics: trace.metrics(config.band),
        area: area_performance(trace),
        analysis: analyze(config)?,
        warnings: trace.warnings.clone(),
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SideSummary {
    pub scenario: ScenarioDigest,
    pub metrics: TraceMetrics,
}

#[derive(Debug, Clone, Serialize)]
pub struct ComparisonReport {
    pub left: SideSummary,
    pub right: SideSummary,
    /// Largest |Δf| gap between the runs on the left run's clock.
    pub max_abs_freq_gap: f64,
    /// `max|Δf|` of the right run over that of the left.
    pub max_abs_freq_ratio: f64,
}

pub fn comparison_report(
    left: &ScenarioConfig,
    right: &ScenarioConfig,
    cmp: &Comparison,
) -> ComparisonReport {
    let gap = cmp
        .aligned
        .iter()
        .flat_map(|s| s.left.iter().zip(&s.right).map(|(l, r)| (l - r).abs()))
        .fold(0.0, f64::max);
    ComparisonReport {
        left: SideSummary {
            scenario: ScenarioDigest::new(left),
            metrics: cmp.left.metrics.clone(),
        },
        right: SideSummary {
            scenario: ScenarioDigest::new(right),
            metrics: cmp.right.metrics.clone(),
        },
        max_abs_freq_gap: gap,
        max_abs_freq_ratio: cmp.right.trace.max_abs_freq() / cmp.left.trace.max_abs_freq(),
    }
}

/// Renders any report section as TOML.
pub fn render<T: Serialize>(report: &T) -> Result<String> {
    toml::to_string(report).map_err(|e| Error::param("report", e.to_string()))
}

/// Writes `text` to `path` atomically.
pub fn write_text(path: impl AsRef<Path>, text: &str) -> Result<()> {
    let path = path.as_ref();
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(text.as_bytes())
        .map_err(|e| Error::io(path, e))?;
    crate::trace::persist(tmp, path)
}
