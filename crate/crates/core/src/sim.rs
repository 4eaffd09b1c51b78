//! Slot-by-slot closed-loop simulation.
//!
//! Each control slot of length ΔT runs, in order:
//!
//! 1. the load of every area steps to its value for the slot;
//! 2. the frequency (and tie flow) measured at the slot boundary is broadcast;
//! 3. every controller computes the control for the slot;
//! 4. the plant is integrated over ΔT with load and control held fixed.
//!
//! With frequency-estimated innovation, the update at boundary `k` uses the
//! two most recent boundary samples, `Δf(k−1)` and `Δf(k)`.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;

use crate::controllers::{
    estimate_innovation, estimate_innovation_from_means, frequency_bias, participation_factors,
    AceSignal, AgcController, AreaSlotMeans, DistributedController, InnovationMode,
};
use crate::dispatch::dispatch_gap;
use crate::error::{Error, Result};
use crate::graph::{check_condition, CommGraph};
use crate::grid::{
    ideal_resource_mode, AreaParams, GridModel, ResourceParams, SlotIntegrator, SlotMeans,
    SystemState,
};

/// Default settling band on |Δf| (Hz).
pub const DEFAULT_BAND: f64 = 5e-4;

/// Relative tolerance for "is a multiple of ΔT" checks.
const ALIGN_TOL: f64 = 1e-9;

fn is_multiple(value: f64, unit: f64) -> bool {
    let n = (value / unit).round();
    (n * unit - value).abs() <= ALIGN_TOL * unit.max(value.abs())
}

/// Per-area load deviation over time. Values change only at slot boundaries.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum LoadProfile {
    Zero,
    /// Jumps from 0 to `magnitude` at time `at`.
    Step {
        magnitude: f64,
        at: f64,
    },
    /// Random walk: every `period` seconds (starting at t = 0) the load moves
    /// by a uniform draw from `[−bound, bound]`.
    RandomPiecewise {
        period: f64,
        bound: f64,
        seed: u64,
    },
    /// Monotone staircase: `increment` added at `start`, `start + period`, …,
    /// for `changes` changes (unbounded if `None`).
    MonotoneRamp {
        increment: f64,
        period: f64,
        start: f64,
        changes: Option<usize>,
    },
    /// Explicit samples: `values[m]` applies from `times[m]` onward; 0 before.
    Samples {
        times: Vec<f64>,
        values: Vec<f64>,
    },
}

impl LoadProfile {
    pub fn validate(&self, slot_len: f64) -> Result<()> {
        let aligned = |field: &str, t: f64| -> Result<()> {
            if !t.is_finite() || t < 0.0 || !is_multiple(t, slot_len) {
                return Err(Error::param(
                    field,
                    format!("load changes must fall on slot boundaries: {t} is not a multiple of ΔT = {slot_len}"),
                ));
            }
            Ok(())
        };
        match self {
            LoadProfile::Zero => Ok(()),
            LoadProfile::Step { magnitude, at } => {
                if !magnitude.is_finite() {
                    return Err(Error::param("load.magnitude", "must be finite"));
                }
                aligned("load.at", *at)
            }
            LoadProfile::RandomPiecewise { period, bound, .. } => {
                if !(*period > 0.0) {
                    return Err(Error::param("load.period", "must be > 0"));
                }
                if !(*bound >= 0.0) || !bound.is_finite() {
                    return Err(Error::param("load.bound", "must be >= 0"));
                }
                aligned("load.period", *period)
            }
            LoadProfile::MonotoneRamp {
                increment,
                period,
                start,
                ..
            } => {
                if !(*increment >= 0.0) || !increment.is_finite() {
                    return Err(Error::param(
                        "load.increment",
                        "a monotone ramp needs increment >= 0",
                    ));
                }
                if !(*period > 0.0) {
                    return Err(Error::param("load.period", "must be > 0"));
                }
                aligned("load.period", *period)?;
                aligned("load.start", *start)
            }
            LoadProfile::Samples { times, values } => {
                if times.len() != values.len() {
                    return Err(Error::DimensionMismatch {
                        context: "load sample times vs values",
                        expected: times.len(),
                        actual: values.len(),
                    });
                }
                if times.windows(2).any(|w| !(w[1] > w[0])) {
                    return Err(Error::param(
                        "load.times",
                        "sample times must be strictly increasing",
                    ));
                }
                if values.iter().any(|v| !v.is_finite()) {
                    return Err(Error::param("load.values", "must be finite"));
                }
                times.iter().try_for_each(|t| aligned("load.times", *t))
            }
        }
    }

    /// Load value during each of the first `n_slots` slots.
    pub fn slot_values(&self, n_slots: usize, slot_len: f64) -> Vec<f64> {
        let slot_of = |t: f64| (t / slot_len).round() as usize;
        let mut out = vec![0.0; n_slots];
        match self {
            LoadProfile::Zero => {}
            LoadProfile::Step { magnitude, at } => {
                for v in out.iter_mut().skip(slot_of(*at)) {
                    *v = *magnitude;
                }
            }
            LoadProfile::RandomPiecewise {
                period,
                bound,
                seed,
            } => {
                let every = slot_of(*period).max(1);
                let mut rng = ChaCha8Rng::seed_from_u64(*seed);
                let mut level = 0.0;
                for (k, v) in out.iter_mut().enumerate() {
                    if k % every == 0 && *bound > 0.0 {
                        level += rng.random_range(-*bound..=*bound);
                    }
                    *v = level;
                }
            }
            LoadProfile::MonotoneRamp {
                increment,
                period,
                start,
                changes,
            } => {
                let every = slot_of(*period).max(1);
                let first = slot_of(*start);
                for (k, v) in out.iter_mut().enumerate().skip(first) {
                    let mut count = (k - first) / every + 1;
                    if let Some(limit) = changes {
                        count = count.min(*limit);
                    }
                    *v = increment * count as f64;
                }
            }
            LoadProfile::Samples { times, values } => {
                for (t, value) in times.iter().zip(values) {
                    for v in out.iter_mut().skip(slot_of(*t)) {
                        *v = *value;
                    }
                }
            }
        }
        out
    }

    /// Largest per-slot change over `n_slots` slots, counting the first slot
    /// against a zero initial load.
    pub fn max_change(&self, n_slots: usize, slot_len: f64) -> f64 {
        let values = self.slot_values(n_slots, slot_len);
        let mut prev = 0.0;
        let mut worst: f64 = 0.0;
        for v in values {
            worst = worst.max((v - prev).abs());
            prev = v;
        }
        worst
    }
}

/// AGC participation-factor rule.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
#[serde(rename_all = "kebab-case")]
pub enum Participation {
    Uniform,
    /// `α_i ∝ 1/a_i`.
    Cost,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ControllerConfig {
    Distributed {
        beta: f64,
        innovation: InnovationMode,
    },
    Agc {
        kp: f64,
        ki: f64,
        participation: Participation,
    },
}

impl ControllerConfig {
    pub fn label(&self) -> &'static str {
        match self {
            ControllerConfig::Distributed { .. } => "distributed",
            ControllerConfig::Agc { .. } => "agc",
        }
    }
}

/// A complete, validated simulation scenario.
#[derive(Debug, Clone, PartialEq)]
pub struct ScenarioConfig {
    pub name: String,
    pub areas: Vec<AreaParams>,
    /// Resources of each area.
    pub resources: Vec<Vec<ResourceParams>>,
    /// Communication graph of each area (resources only talk within an area).
    pub graphs: Vec<CommGraph>,
    pub ideal: bool,
    pub controller: ControllerConfig,
    /// Control slot length ΔT (s).
    pub slot_len: f64,
    /// RK4 step (s).
    pub inner_step: f64,
    /// Spacing of recorded trace rows (s); a multiple of `inner_step`.
    pub sample_interval: f64,
    pub horizon: f64,
    pub loads: Vec<LoadProfile>,
    pub seed: u64,
    /// Clamp per-slot control moves to each resource's ramping limit.
    pub enforce_ramp: bool,
    /// Settling band on |Δf| (Hz).
    pub band: f64,
}

impl ScenarioConfig {
    pub fn model(&self) -> Result<GridModel> {
        GridModel::new(self.areas.clone(), self.resources.clone(), self.ideal)
    }

    pub fn n_slots(&self) -> usize {
        (self.horizon / self.slot_len).round() as usize
    }

    pub fn validate(&self) -> Result<()> {
        let model = self.model()?;
        for (field, v) in [
            ("slot_len", self.slot_len),
            ("horizon", self.horizon),
            ("sample_interval", self.sample_interval),
            ("band", self.band),
        ] {
            if !(v > 0.0) || !v.is_finite() {
                return Err(Error::param(field, format!("{field} must be > 0, got {v}")));
            }
        }
        crate::grid::steps_per_slot(self.slot_len, self.inner_step)?;
        if !is_multiple(self.horizon, self.slot_len) {
            return Err(Error::param(
                "horizon",
                format!(
                    "horizon {} is not a multiple of slot_len {}",
                    self.horizon, self.slot_len
                ),
            ));
        }
        if self.sample_interval > self.slot_len
            || !is_multiple(self.sample_interval, self.inner_step)
            || !is_multiple(self.slot_len, self.sample_interval)
        {
            return Err(Error::param(
                "sample_interval",
                format!(
                    "{} must be a multiple of inner_step {} and divide slot_len {}",
                    self.sample_interval, self.inner_step, self.slot_len
                ),
            ));
        }
        for (context, len) in [
            ("communication graphs", self.graphs.len()),
            ("load profiles", self.loads.len()),
        ] {
            if len != model.n_areas() {
                return Err(Error::DimensionMismatch {
                    context,
                    expected: model.n_areas(),
                    actual: len,
                });
            }
        }
        for (j, g) in self.graphs.iter().enumerate() {
            if g.n() != model.area_resources(j).len() {
                return Err(Error::DimensionMismatch {
                    context: "graph nodes vs area resources",
                    expected: model.area_resources(j).len(),
                    actual: g.n(),
                });
            }
        }
        for load in &self.loads {
            load.validate(self.slot_len)?;
        }
        match self.controller {
            ControllerConfig::Distributed { beta, .. } => {
                if !(beta > 0.0) || !beta.is_finite() {
                    return Err(Error::param(
                        "controller.beta",
                        format!("beta must be > 0, got {beta}"),
                    ));
                }
            }
            ControllerConfig::Agc { kp, ki, .. } => {
                if !(kp >= 0.0 && ki >= 0.0) || !kp.is_finite() || !ki.is_finite() {
                    return Err(Error::param(
                        "controller",
                        format!("AGC gains must be >= 0, got kp={kp}, ki={ki}"),
                    ));
                }
            }
        }
        Ok(())
    }

    /// Same plant and disturbance (controllers and ΔT may differ).
    pub fn same_plant(&self, other: &ScenarioConfig) -> std::result::Result<(), String> {
        if self.areas != other.areas {
            return Err("area parameters differ".into());
        }
        if self.resources != other.resources {
            return Err("resource parameters differ".into());
        }
        if self.ideal != other.ideal {
            return Err("ideal-resource flag differs".into());
        }
        if self.loads != other.loads {
            return Err("load profiles differ".into());
        }
        if self.horizon != other.horizon {
            return Err(format!(
                "horizons differ ({} vs {})",
                self.horizon, other.horizon
            ));
        }
        Ok(())
    }
}

/// Time-indexed record of a run. Every series has one entry per row.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SimTrace {
    pub times: Vec<f64>,
    /// Control slot each row belongs to.
    pub slot: Vec<usize>,
    /// `[area][row]` frequency deviation (Hz).
    pub freq_dev: Vec<Vec<f64>>,
    /// `[resource][row]` series, resources numbered area-major.
    pub mech_power: Vec<Vec<f64>>,
    pub valve_pos: Vec<Vec<f64>>,
    pub control: Vec<Vec<f64>>,
    pub lambda: Vec<Vec<f64>>,
    /// `[area][row]` load deviation and net tie flow (pu).
    pub load: Vec<Vec<f64>>,
    pub tie_flow: Vec<Vec<f64>>,
    /// Maximal relative deviation of the slot's controls from the optimal
    /// dispatch of their total; NaN where undefined.
    pub dispatch_rel_err: Vec<f64>,
    pub area_of_resource: Vec<usize>,
    /// Non-fatal diagnostics raised during the run (not persisted).
    pub warnings: Vec<String>,
}

impl SimTrace {
    pub fn new(n_areas: usize, area_of_resource: Vec<usize>) -> Self {
        let nr = area_of_resource.len();
        Self {
            freq_dev: vec![Vec::new(); n_areas],
            mech_power: vec![Vec::new(); nr],
            valve_pos: vec![Vec::new(); nr],
            control: vec![Vec::new(); nr],
            lambda: vec![Vec::new(); nr],
            load: vec![Vec::new(); n_areas],
            tie_flow: vec![Vec::new(); n_areas],
            area_of_resource,
            ..Default::default()
        }
    }

    pub fn len(&self) -> usize {
        self.times.len()
    }

    pub fn is_empty(&self) -> bool {
        self.times.is_empty()
    }

    pub fn n_areas(&self) -> usize {
        self.freq_dev.len()
    }

    pub fn n_resources(&self) -> usize {
        self.area_of_resource.len()
    }

    fn push(
        &mut self,
        time: f64,
        slot: usize,
        state: &SystemState,
        tie: &[f64],
        load: &[f64],
        rel_err: f64,
    ) {
        self.times.push(time);
        self.slot.push(slot);
        for (series, v) in self.freq_dev.iter_mut().zip(&state.freq_dev) {
            series.push(*v);
        }
        for i in 0..self.n_resources() {
            self.mech_power[i].push(state.mech_power[i]);
            self.valve_pos[i].push(state.valve_pos[i]);
            self.control[i].push(state.control[i]);
            self.lambda[i].push(state.lambda[i]);
        }
        for j in 0..self.n_areas() {
            self.load[j].push(load[j]);
            self.tie_flow[j].push(tie[j]);
        }
        self.dispatch_rel_err.push(rel_err);
    }

    /// Largest |Δf| over all areas at `row`.
    pub fn max_abs_freq_at(&self, row: usize) -> f64 {
        self.freq_dev
            .iter()
            .map(|s| s[row].abs())
            .fold(0.0, f64::max)
    }

    /// Time of the last row at which any area's load differs from the row
    /// before; the first row counts as a change.
    pub fn last_load_change(&self) -> f64 {
        let last = (1..self.len())
            .rev()
            .find(|&r| self.load.iter().any(|s| s[r] != s[r - 1]));
        last.map_or_else(
            || self.times.first().copied().unwrap_or(0.0),
            |r| self.times[r],
        )
    }

    /// Signed frequency deviation of largest magnitude over all areas.
    pub fn freq_nadir(&self) -> f64 {
        let mut best: f64 = 0.0;
        for series in &self.freq_dev {
            for &v in series {
                if v.abs() > best.abs() {
                    best = v;
                }
            }
        }
        best
    }

    pub fn max_abs_freq(&self) -> f64 {
        self.freq_nadir().abs()
    }

    /// Index of the first row of every slot.
    pub fn slot_rows(&self) -> Vec<usize> {
        (0..self.len())
            .filter(|&r| r == 0 || self.slot[r] != self.slot[r - 1])
            .collect()
    }

    /// `(slot start time, relative dispatch error)` per slot.
    pub fn dispatch_gap_series(&self) -> Vec<(f64, f64)> {
        self.slot_rows()
            .into_iter()
            .map(|r| (self.times[r], self.dispatch_rel_err[r]))
            .collect()
    }

    pub fn metrics(&self, band: f64) -> TraceMetrics {
        let gaps: Vec<f64> = self
            .dispatch_gap_series()
            .into_iter()
            .map(|(_, e)| e)
            .filter(|e| e.is_finite())
            .collect();
        TraceMetrics {
            band,
            settling_time: settling_time(self, band),
            freq_nadir: self.freq_nadir(),
            max_abs_tie_flow_final: self
                .tie_flow
                .iter()
                .filter_map(|s| s.last())
                .map(|v| v.abs())
                .fold(0.0, f64::max),
            dispatch_rel_err_initial: gaps.first().copied(),
            dispatch_rel_err_final: gaps.last().copied(),
            dispatch_rel_err_max: gaps.iter().copied().reduce(f64::max),
        }
    }
}

/// Summary numbers derived from a trace.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TraceMetrics {
    pub band: f64,
    pub settling_time: Option<f64>,
    pub freq_nadir: f64,
    pub max_abs_tie_flow_final: f64,
    pub dispatch_rel_err_initial: Option<f64>,
    pub dispatch_rel_err_final: Option<f64>,
    pub dispatch_rel_err_max: Option<f64>,
}

/// First time, at or after the last load change, from which |Δf| stays within
/// `band` in every area until the end of the trace. `None` if the final
/// sample is still outside the band.
pub fn settling_time(trace: &SimTrace, band: f64) -> Option<f64> {
    if trace.is_empty() {
        return None;
    }
    let last_change = trace.last_load_change();
    match (0..trace.len())
        .rev()
        .find(|&r| trace.max_abs_freq_at(r) > band)
    {
        None => Some(last_change),
        Some(r) if r + 1 == trace.len() => None,
        Some(r) => Some(trace.times[r + 1].max(last_change)),
    }
}

enum AreaController {
    Distributed(DistributedController),
    Agc { agc: AgcController, bias: f64 },
}

fn build_controllers(
    config: &ScenarioConfig,
    model: &GridModel,
    warnings: &mut Vec<String>,
) -> Result<Vec<AreaController>> {
    (0..model.n_areas())
        .map(|j| {
            let resources = model.area_resources(j);
            let costs = model.area_costs(j);
            Ok(match config.controller {
                ControllerConfig::Distributed { beta, innovation } => {
                    let graph = config.graphs[j].clone();
                    let report = check_condition(&graph, beta, &costs)?;
                    if !report.satisfied {
                        let msg = format!(
                            "area {j}: spectral condition not met (gamma = {:.6}, connected = {}); tracking bound void",
                            report.gamma, report.connected
                        );
                        log::warn!("{msg}");
                        warnings.push(msg);
                    }
                    AreaController::Distributed(DistributedController::new(graph, costs, beta, innovation)?)
                }
                ControllerConfig::Agc { kp, ki, participation } => {
                    let alpha = match participation {
                        Participation::Uniform => vec![1.0 / resources.len() as f64; resources.len()],
                        Participation::Cost => participation_factors(&costs)?,
                    };
                    AreaController::Agc {
                        agc: AgcController::new(kp, ki, alpha)?,
                        bias: frequency_bias(model.area(j), resources),
                    }
                }
            })
        })
        .collect()
}

/// Runs a single- or multi-area scenario.
pub fn run_scenario(config: &ScenarioConfig) -> Result<SimTrace> {
    config.validate()?;
    let model = config.model()?;
    let n_slots = config.n_slots();
    let na = model.n_areas();
    let nr = model.n_resources();

    let loads: Vec<Vec<f64>> = config
        .loads
        .iter()
        .map(|p| p.slot_values(n_slots, config.slot_len))
        .collect();

    let mut trace = SimTrace::new(na, (0..nr).map(|i| model.area_of(i)).collect());
    let mut controllers = build_controllers(config, &model, &mut trace.warnings)?;
    let mut integrator = SlotIntegrator::new(&model, config.slot_len, config.inner_step)?;
    let h = integrator.step_len();
    let sample_every = ((config.sample_interval / h).round() as usize).max(1);
    let costs: Vec<f64> = model.resources().iter().map(|r| r.a).collect();

    let mut state = SystemState::zeros(&model);
    let mut prev_freq = state.freq_dev.clone();
    let mut prev_tie = state.tie_flow(&model);
    let mut means: Option<SlotMeans> = None;
    let mut prev_u = vec![0.0; nr];
    let mut u = vec![0.0; nr];
    let mut load_k = vec![0.0; na];

    for k in 0..n_slots {
        let t = k as f64 * config.slot_len;
        for j in 0..na {
            load_k[j] = loads[j][k];
        }
        let freq_now = state.freq_dev.clone();
        let tie_now = state.tie_flow(&model);

        for (j, ctrl) in controllers.iter_mut().enumerate() {
            let range = model.area_range(j);
            match ctrl {
                AreaController::Distributed(dc) => {
                    let (pm, innovation) = match dc.mode {
                        InnovationMode::OracleLoad => {
                            let pm = &state.mech_power[range.clone()];
                            (pm, load_k[j] - pm.iter().sum::<f64>())
                        }
                        InnovationMode::FrequencyEstimated => {
                            let pm = &state.mech_power[range.clone()];
                            let innov = match &means {
                                None => 0.0,
                                Some(m) => estimate_innovation_from_means(
                                    model.area(j),
                                    &AreaSlotMeans {
                                        freq_dev: m.freq_dev[j],
                                        tie_flow: m.tie_flow[j],
                                        supply: m.mech_power[range.clone()].iter().sum(),
                                    },
                                    prev_freq[j],
                                    freq_now[j],
                                    pm.iter().sum(),
                                    config.slot_len,
                                ),
                            };
                            (pm, innov)
                        }
                        InnovationMode::BoundarySampled => (
                            &state.mech_power[range.clone()],
                            estimate_innovation(
                                model.area(j),
                                prev_freq[j],
                                freq_now[j],
                                prev_tie[j],
                                config.slot_len,
                            ),
                        ),
                    };
                    let update = dc.step(pm, innovation)?;
                    u[range].copy_from_slice(&update.control);
                }
                AreaController::Agc { agc, bias } => {
                    let ace = AceSignal::new(j, *bias, freq_now[j], prev_freq[j], tie_now[j]);
                    u[range].copy_from_slice(&agc.step(&ace, config.slot_len));
                }
            }
        }

        if config.enforce_ramp {
            for (i, r) in model.resources().iter().enumerate() {
                u[i] = u[i].clamp(prev_u[i] - r.ramp_r, prev_u[i] + r.ramp_r);
            }
        }

        if model.is_ideal() {
            state = ideal_resource_mode(&state, &u);
        }
        state.control.copy_from_slice(&u);
        refresh_prices(&mut state, &costs);

        let rel_err = slot_dispatch_error(&model, &u)?;
        trace.push(t, k, &state, &tie_now, &load_k, rel_err);

        prev_freq = freq_now;
        prev_tie = tie_now;
        prev_u.copy_from_slice(&u);

        integrator.advance(&mut state, &load_k, &u, k, t, |step, s| {
            if step % sample_every == 0 {
                let mut s = s.clone();
                refresh_prices(&mut s, &costs);
                let tie = s.tie_flow(&model);
                trace.push(t + step as f64 * h, k, &s, &tie, &load_k, rel_err);
            }
        })?;
        refresh_prices(&mut state, &costs);
        means = Some(integrator.slot_means());

        if k + 1 == n_slots {
            let tie = state.tie_flow(&model);
            trace.push(config.horizon, k, &state, &tie, &load_k, rel_err);
        }
    }
    Ok(trace)
}

/// Multi-area entry point: requires at least two areas joined by tie lines.
pub fn run_multi_area(config: &ScenarioConfig) -> Result<SimTrace> {
    if config.areas.len() < 2 {
        return Err(Error::param(
            "areas",
            "multi-area run needs at least two areas",
        ));
    }
    if config.model()?.n_ties() == 0 {
        return Err(Error::param(
            "ties",
            "multi-area run needs at least one tie line",
        ));
    }
    run_scenario(config)
}

fn refresh_prices(state: &mut SystemState, costs: &[f64]) {
    for ((l, a), p) in state.lambda.iter_mut().zip(costs).zip(&state.mech_power) {
        *l = 2.0 * a * p;
    }
}

// Allocation error: the slot's controls against the optimal split of the same
// per-area total, so the one-slot lag of the estimated innovation does not
// register as a dispatch error.
fn slot_dispatch_error(model: &GridModel, u: &[f64]) -> Result<f64> {
    let mut worst: Option<f64> = None;
    for j in 0..model.n_areas() {
        let range = model.area_range(j);
        let costs = model.area_costs(j);
        let prices: Vec<f64> = u[range.clone()]
            .iter()
            .zip(&costs)
            .map(|(u, a)| 2.0 * a * u)
            .collect();
        let total: f64 = u[range.clone()].iter().sum();
        let gap = dispatch_gap(&prices, &u[range], &costs, total)?;
        if let Some(e) = gap.relative_error {
            worst = Some(worst.map_or(e, |w: f64| w.max(e)));
        }
    }
    Ok(worst.unwrap_or(f64::NAN))
}

/// Run summary for one side of a comparison.
#[derive(Debug, Clone)]
pub struct ControllerRun {
    pub name: String,
    pub controller: &'static str,
    pub slot_len: f64,
    pub trace: SimTrace,
    pub metrics: TraceMetrics,
}

/// One time point of two traces sampled on the first trace's clock.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AlignedSample {
    pub time: f64,
    pub left: Vec<f64>,
    pub right: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct Comparison {
    pub left: ControllerRun,
    pub right: ControllerRun,
    /// Per-area Δf of both runs on the left run's sample times (right side
    /// held from its latest sample at or before each time).
    pub aligned: Vec<AlignedSample>,
}

/// Runs two scenarios sharing a plant and load, concurrently.
pub fn compare_controllers(left: &ScenarioConfig, right: &ScenarioConfig) -> Result<Comparison> {
    left.same_plant(right).map_err(Error::Incomparable)?;
    let (l, r) = std::thread::scope(|s| {
        let handle = s.spawn(|| run_scenario(right));
        let l = run_scenario(left);
        (l, handle.join().expect("simulation thread panicked"))
    });
    let summarize = |config: &ScenarioConfig, trace: SimTrace| {
        let metrics = trace.metrics(config.band);
        ControllerRun {
            name: config.name.clone(),
            controller: config.controller.label(),
            slot_len: config.slot_len,
            trace,
            metrics,
        }
    };
    let left_run = summarize(left, l?);
    let right_run = summarize(right, r?);
    let aligned = align(&left_run.trace, &right_run.trace);
    Ok(Comparison {
        left: left_run,
        right: right_run,
        aligned,
    })
}

fn align(left: &SimTrace, right: &SimTrace) -> Vec<AlignedSample> {
    let mut r = 0;
    left.times
        .iter()
        .enumerate()
        .map(|(row, &t)| {
            while r + 1 < right.len() && right.times[r + 1] <= t + 1e-12 {
                r += 1;
            }
            AlignedSample {
                time: t,
                left: left.freq_dev.iter().map(|s| s[row]).collect(),
                right: right.freq_dev.iter().map(|s| s[r]).collect(),
            }
        })
        .collect()
}

/// Best AGC gains found by exhaustive search.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct AgcTuning {
    pub kp: f64,
    pub ki: f64,
    pub settling_time: Option<f64>,
}

/// Grid search over `(kp, ki)` minimizing settling time at `band`; ties are
/// broken by grid order. Runs that blow up are skipped.
pub fn tune_agc(
    base: &ScenarioConfig,
    kp_grid: &[f64],
    ki_grid: &[f64],
    band: f64,
) -> Result<AgcTuning> {
    let participation = match base.controller {
        ControllerConfig::Agc { participation, .. } => participation,
        ControllerConfig::Distributed { .. } => Participation::Uniform,
    };
    let mut best: Option<AgcTuning> = None;
    for &kp in kp_grid {
        for &ki in ki_grid {
            let mut config = base.clone();
            config.controller = ControllerConfig::Agc {
                kp,
                ki,
                participation,
            };
            let settling = match run_scenario(&config) {
                Ok(trace) => settling_time(&trace, band),
                Err(Error::IntegrationBlowup { .. }) => None,
                Err(e) => return Err(e),
            };
            let better = match (&best, settling) {
                (None, _) => true,
                (Some(b), Some(s)) => b.settling_time.is_none_or(|bs| s < bs),
                (Some(_), None) => false,
            };
            if better {
                best = Some(AgcTuning {
                    kp,
                    ki,
                    settling_time: settling,
                });
            }
        }
    }
    best.ok_or_else(|| Error::param("agc grid", "empty search grid"))
}
