//! Plant dynamics: aggregate swing equation per area, a second-order
//! governor/turbine per regulation resource, and linearized tie lines between
//! areas.
//!
//! ```text
//!   dΔf_j/dt    = (ΣΔP_m − ΔP_L,j − ΔP_tie,j − D_j Δf_j) / 2H_j
//!   dΔP_m^i/dt  = −(ΔP_m^i − ΔP_g^i) / T_t^i
//!   dΔP_g^i/dt  = −Δf/(T_g^i R_i) − (ΔP_g^i − u_i) / T_g^i
//!   dΔP_jk/dt   = T_jk (Δf_j − Δf_k)
//! ```
//!
//! In ideal-resource mode the governor/turbine is bypassed (ΔP_m = ΔP_g = u)
//! and only the swing and tie-line states are integrated.

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Per-resource cost and dynamic parameters.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResourceParams {
    /// Quadratic cost coefficient (cost-units/pu²).
    pub a: f64,
    /// Linear cost coefficient (cost-units/pu).
    pub b: f64,
    /// Fixed cost (cost-units).
    pub c: f64,
    /// Droop characteristic (Hz/pu).
    pub droop_r: f64,
    /// Governor time constant (s).
    pub t_g: f64,
    /// Turbine time constant (s).
    pub t_t: f64,
    /// Ramping limit (pu per control slot).
    pub ramp_r: f64,
}

impl ResourceParams {
    pub fn new(
        a: f64,
        b: f64,
        c: f64,
        droop_r: f64,
        t_g: f64,
        t_t: f64,
        ramp_r: f64,
    ) -> Result<Self> {
        let params = Self {
            a,
            b,
            c,
            droop_r,
            t_g,
            t_t,
            ramp_r,
        };
        params.validate()?;
        Ok(params)
    }

    pub fn validate(&self) -> Result<()> {
        positive("a", self.a)?;
        finite("b", self.b)?;
        finite("c", self.c)?;
        positive("droop_r", self.droop_r)?;
        non_negative("t_g", self.t_g)?;
        non_negative("t_t", self.t_t)?;
        positive("ramp_r", self.ramp_r)?;
        Ok(())
    }

    /// Dispatch cost `a u² + b u + c` at output `u`.
    pub fn cost(&self, u: f64) -> f64 {
        self.a * u * u + self.b * u + self.c
    }
}

/// Tie-line coupling of an area to one neighbor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TieCoupling {
    pub neighbor: usize,
    /// Synchronizing coefficient (pu/Hz·s).
    pub coefficient: f64,
}

/// Aggregate physics of one control area.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AreaParams {
    /// Equivalent inertia H (pu·s).
    pub inertia_h: f64,
    /// Equivalent damping D (pu/Hz).
    pub damping_d: f64,
    #[serde(default)]
    pub tie_couplings: Vec<TieCoupling>,
}

impl AreaParams {
    pub fn isolated(inertia_h: f64, damping_d: f64) -> Self {
        Self {
            inertia_h,
            damping_d,
            tie_couplings: Vec::new(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        positive("inertia_h", self.inertia_h)?;
        non_negative("damping_d", self.damping_d)?;
        for tie in &self.tie_couplings {
            positive("tie coefficient", tie.coefficient)?;
        }
        Ok(())
    }
}

/// A tie line between two areas; positive flow runs from `from` to `to`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TieLine {
    pub from: usize,
    pub to: usize,
    pub coefficient: f64,
}

/// Validated plant: areas, their resources and the tie lines joining them.
#[derive(Debug, Clone, PartialEq)]
pub struct GridModel {
    areas: Vec<AreaParams>,
    resources: Vec<ResourceParams>,
    offsets: Vec<usize>,
    ties: Vec<TieLine>,
    ideal: bool,
}

impl GridModel {
    /// Builds a plant. `resources[j]` are the regulation resources of area `j`.
    ///
    /// With `ideal` set, every resource must have zero time constants and the
    /// governor/turbine stage is replaced by `ΔP_m = u`. Otherwise zero time
    /// constants are rejected.
    pub fn new(
        areas: Vec<AreaParams>,
        resources: Vec<Vec<ResourceParams>>,
        ideal: bool,
    ) -> Result<Self> {
        if areas.is_empty() {
            return Err(Error::param("areas", "at least one area is required"));
        }
        if resources.len() != areas.len() {
            return Err(Error::DimensionMismatch {
                context: "resource groups per area",
                expected: areas.len(),
                actual: resources.len(),
            });
        }
        for area in &areas {
            area.validate()?;
        }
        let ties = collect_ties(&areas)?;

        let mut offsets = Vec::with_capacity(areas.len() + 1);
        offsets.push(0);
        let mut flat = Vec::new();
        for (j, group) in resources.into_iter().enumerate() {
            if group.is_empty() {
                return Err(Error::param(
                    format!("area[{j}].resources"),
                    "area has no resources",
                ));
            }
            for r in group {
                r.validate()?;
                let idx = flat.len();
                if ideal && (r.t_g != 0.0 || r.t_t != 0.0) {
                    return Err(Error::param(
                        format!("resource[{idx}]"),
                        "ideal-resource mode requires t_g = t_t = 0",
                    ));
                }
                if !ideal && (r.t_g == 0.0 || r.t_t == 0.0) {
                    return Err(Error::ZeroTimeConstant { resource: idx });
                }
                flat.push(r);
            }
            offsets.push(flat.len());
        }

        Ok(Self {
            areas,
            resources: flat,
            offsets,
            ties,
            ideal,
        })
    }

    /// Single area without tie lines.
    pub fn single_area(
        area: AreaParams,
        resources: Vec<ResourceParams>,
        ideal: bool,
    ) -> Result<Self> {
        Self::new(vec![area], vec![resources], ideal)
    }

    pub fn n_areas(&self) -> usize {
        self.areas.len()
    }

    pub fn n_resources(&self) -> usize {
        self.resources.len()
    }

    pub fn n_ties(&self) -> usize {
        self.ties.len()
    }

    pub fn is_ideal(&self) -> bool {
        self.ideal
    }

    pub fn areas(&self) -> &[AreaParams] {
        &self.areas
    }

    pub fn area(&self, j: usize) -> &AreaParams {
        &self.areas[j]
    }

    /// All resources, area-major.
    pub fn resources(&self) -> &[ResourceParams] {
        &self.resources
    }

    /// Global index range of the resources of area `j`.
    pub fn area_range(&self, j: usize) -> Range<usize> {
        self.offsets[j]..self.offsets[j + 1]
    }

    pub fn area_resources(&self, j: usize) -> &[ResourceParams] {
        &self.resources[self.area_range(j)]
    }

    pub fn area_of(&self, resource: usize) -> usize {
        // offsets is sorted; the area is the last offset <= resource
        self.offsets.partition_point(|&o| o <= resource) - 1
    }

    pub fn ties(&self) -> &[TieLine] {
        &self.ties
    }

    /// Net tie flow out of each area, from per-line flows.
    pub fn area_tie_flows(&self, line_flows: &[f64]) -> Vec<f64> {
        let mut out = vec![0.0; self.n_areas()];
        accumulate_tie_flows(&self.ties, line_flows, &mut out);
        out
    }

    /// Costs `a_i` of the resources in area `j`.
    pub fn area_costs(&self, j: usize) -> Vec<f64> {
        self.area_resources(j).iter().map(|r| r.a).collect()
    }

    fn check_dims(&self, state: &SystemState, load: &[f64], controls: &[f64]) -> Result<()> {
        let checks = [
            ("area frequencies", self.n_areas(), state.freq_dev.len()),
            (
                "mechanical powers",
                self.n_resources(),
                state.mech_power.len(),
            ),
            ("valve positions", self.n_resources(), state.valve_pos.len()),
            ("tie-line flows", self.n_ties(), state.tie_line_flow.len()),
            ("area loads", self.n_areas(), load.len()),
            ("controls", self.n_resources(), controls.len()),
        ];
        for (context, expected, actual) in checks {
            if expected != actual {
                return Err(Error::DimensionMismatch {
                    context,
                    expected,
                    actual,
                });
            }
        }
        Ok(())
    }

    fn dim(&self) -> usize {
        self.n_areas() + 2 * self.n_resources() + self.n_ties()
    }

    /// Flat right-hand side over the layout `[Δf | ΔP_m | ΔP_g | ΔP_line]`.
    fn rhs(
        &self,
        y: &[f64],
        load: &[f64],
        controls: &[f64],
        tie_scratch: &mut [f64],
        dy: &mut [f64],
    ) {
        let na = self.n_areas();
        let nr = self.n_resources();
        let (freq, rest) = y.split_at(na);
        let (pm, rest) = rest.split_at(nr);
        let (pg, lines) = rest.split_at(nr);

        tie_scratch.fill(0.0);
        accumulate_tie_flows(&self.ties, lines, tie_scratch);

        let (dfreq, drest) = dy.split_at_mut(na);
        let (dpm, drest) = drest.split_at_mut(nr);
        let (dpg, dlines) = drest.split_at_mut(nr);

        for (j, area) in self.areas.iter().enumerate() {
            let supply: f64 = pm[self.offsets[j]..self.offsets[j + 1]].iter().sum();
            let two_h = 2.0 * area.inertia_h;
            dfreq[j] = (-area.damping_d * freq[j] + supply - load[j] - tie_scratch[j]) / two_h;
        }

        if self.ideal {
            dpm.fill(0.0);
            dpg.fill(0.0);
        } else {
            for j in 0..na {
                for i in self.offsets[j]..self.offsets[j + 1] {
                    let r = &self.resources[i];
                    dpm[i] = -(pm[i] - pg[i]) / r.t_t;
                    dpg[i] = -freq[j] / (r.t_g * r.droop_r) - (pg[i] - controls[i]) / r.t_g;
                }
            }
        }

        for (l, tie) in self.ties.iter().enumerate() {
            dlines[l] = tie.coefficient * (freq[tie.from] - freq[tie.to]);
        }
    }
}

fn accumulate_tie_flows(ties: &[TieLine], line_flows: &[f64], out: &mut [f64]) {
    for (tie, flow) in ties.iter().zip(line_flows) {
        out[tie.from] += flow;
        out[tie.to] -= flow;
    }
}

fn collect_ties(areas: &[AreaParams]) -> Result<Vec<TieLine>> {
    let n = areas.len();
    let mut ties = Vec::new();
    for (j, area) in areas.iter().enumerate() {
        let mut seen = Vec::new();
        for tie in &area.tie_couplings {
            let k = tie.neighbor;
            if k >= n || k == j {
                return Err(Error::param(
                    format!("area[{j}].tie_couplings"),
                    format!("invalid neighbor area {k}"),
                ));
            }
            if seen.contains(&k) {
                return Err(Error::param(
                    format!("area[{j}].tie_couplings"),
                    format!("duplicate coupling to area {k}"),
                ));
            }
            seen.push(k);
            let back = areas[k].tie_couplings.iter().find(|t| t.neighbor == j);
            match back {
                Some(b) if b.coefficient == tie.coefficient => {}
                _ => {
                    return Err(Error::param(
                        format!("area[{j}].tie_couplings"),
                        format!("coupling to area {k} is not mirrored with the same coefficient"),
                    ))
                }
            }
            if j < k {
                ties.push(TieLine {
                    from: j,
                    to: k,
                    coefficient: tie.coefficient,
                });
            }
        }
    }
    Ok(ties)
}

/// Full dynamic state at one instant.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemState {
    /// Frequency deviation per area (Hz).
    pub freq_dev: Vec<f64>,
    /// Mechanical power deviation per resource (pu).
    pub mech_power: Vec<f64>,
    /// Governor valve position per resource (pu).
    pub valve_pos: Vec<f64>,
    /// Marginal price λ_i per resource (cost-units/pu).
    pub lambda: Vec<f64>,
    /// Secondary control u_i per resource (pu).
    pub control: Vec<f64>,
    /// Flow on each tie line of the model, oriented `from -> to` (pu).
    pub tie_line_flow: Vec<f64>,
}

impl SystemState {
    pub fn zeros(model: &GridModel) -> Self {
        let nr = model.n_resources();
        Self {
            freq_dev: vec![0.0; model.n_areas()],
            mech_power: vec![0.0; nr],
            valve_pos: vec![0.0; nr],
            lambda: vec![0.0; nr],
            control: vec![0.0; nr],
            tie_line_flow: vec![0.0; model.n_ties()],
        }
    }

    /// Net tie flow out of each area (pu).
    pub fn tie_flow(&self, model: &GridModel) -> Vec<f64> {
        model.area_tie_flows(&self.tie_line_flow)
    }

    pub fn is_finite(&self) -> bool {
        [
            &self.freq_dev,
            &self.mech_power,
            &self.valve_pos,
            &self.lambda,
            &self.control,
            &self.tie_line_flow,
        ]
        .iter()
        .all(|v| v.iter().all(|x| x.is_finite()))
    }

    fn pack(&self, y: &mut Vec<f64>) {
        y.clear();
        y.extend_from_slice(&self.freq_dev);
        y.extend_from_slice(&self.mech_power);
        y.extend_from_slice(&self.valve_pos);
        y.extend_from_slice(&self.tie_line_flow);
    }

    fn unpack(&mut self, y: &[f64]) {
        let na = self.freq_dev.len();
        let nr = self.mech_power.len();
        self.freq_dev.copy_from_slice(&y[..na]);
        self.mech_power.copy_from_slice(&y[na..na + nr]);
        self.valve_pos.copy_from_slice(&y[na + nr..na + 2 * nr]);
        self.tie_line_flow.copy_from_slice(&y[na + 2 * nr..]);
    }
}

/// Time derivative of the dynamic fields of [`SystemState`].
#[derive(Debug, Clone, PartialEq)]
pub struct StateDerivative {
    pub freq_dev: Vec<f64>,
    pub mech_power: Vec<f64>,
    pub valve_pos: Vec<f64>,
    pub tie_line_flow: Vec<f64>,
}

/// Evaluates the plant right-hand side at `state` with per-area loads and
/// per-resource controls held fixed.
pub fn plant_derivatives(
    model: &GridModel,
    state: &SystemState,
    load_dev: &[f64],
    controls: &[f64],
) -> Result<StateDerivative> {
    model.check_dims(state, load_dev, controls)?;
    let mut y = Vec::with_capacity(model.dim());
    state.pack(&mut y);
    let mut dy = vec![0.0; model.dim()];
    let mut scratch = vec![0.0; model.n_areas()];
    model.rhs(&y, load_dev, controls, &mut scratch, &mut dy);

    let na = model.n_areas();
    let nr = model.n_resources();
    Ok(StateDerivative {
        freq_dev: dy[..na].to_vec(),
        mech_power: dy[na..na + nr].to_vec(),
        valve_pos: dy[na + nr..na + 2 * nr].to_vec(),
        tie_line_flow: dy[na + 2 * nr..].to_vec(),
    })
}

/// Pins every resource to its control: `ΔP_m = ΔP_g = u`.
pub fn ideal_resource_mode(state: &SystemState, controls: &[f64]) -> SystemState {
    let mut next = state.clone();
    next.mech_power.copy_from_slice(controls);
    next.valve_pos.copy_from_slice(controls);
    next.control.copy_from_slice(controls);
    next
}

/// Default inner integration step for a slot of length `slot_len`.
pub fn default_inner_step(slot_len: f64) -> f64 {
    (slot_len / 10.0).min(0.01)
}

/// Number of inner steps per slot, or an error if `slot_len` is not an
/// integer multiple of `inner_step`.
pub fn steps_per_slot(slot_len: f64, inner_step: f64) -> Result<usize> {
    if !(inner_step > 0.0) || !inner_step.is_finite() {
        return Err(Error::param(
            "inner_step",
            format!("must be > 0, got {inner_step}"),
        ));
    }
    if !(slot_len >= inner_step) || !slot_len.is_finite() {
        return Err(Error::param(
            "inner_step",
            format!("must not exceed the slot length {slot_len}, got {inner_step}"),
        ));
    }
    let n = (slot_len / inner_step).round();
    if (n * inner_step - slot_len).abs() > 1e-9 * slot_len {
        return Err(Error::param(
            "inner_step",
            format!("slot length {slot_len} is not an integer multiple of {inner_step}"),
        ));
    }
    Ok(n as usize)
}

/// Fixed-step classical RK4 integrator with reusable buffers.
#[derive(Debug)]
pub struct SlotIntegrator<'m> {
    model: &'m GridModel,
    steps: usize,
    h: f64,
    y: Vec<f64>,
    k: [Vec<f64>; 4],
    tmp: Vec<f64>,
    scratch: Vec<f64>,
    integral: Vec<f64>,
}

impl<'m> SlotIntegrator<'m> {
    pub fn new(model: &'m GridModel, slot_len: f64, inner_step: f64) -> Result<Self> {
        let steps = steps_per_slot(slot_len, inner_step)?;
        let dim = model.dim();
        Ok(Self {
            model,
            steps,
            h: slot_len / steps as f64,
            y: Vec::with_capacity(dim),
            k: [
                vec![0.0; dim],
                vec![0.0; dim],
                vec![0.0; dim],
                vec![0.0; dim],
            ],
            tmp: vec![0.0; dim],
            scratch: vec![0.0; model.n_areas()],
            integral: vec![0.0; dim],
        })
    }

    pub fn steps(&self) -> usize {
        self.steps
    }

    pub fn step_len(&self) -> f64 {
        self.h
    }

    /// Advances `state` in place by one slot. `observe(step, state)` is called
    /// after every inner step (1-based) except the last.
    pub fn advance(
        &mut self,
        state: &mut SystemState,
        load_dev: &[f64],
        controls: &[f64],
        slot: usize,
        slot_start: f64,
        mut observe: impl FnMut(usize, &SystemState),
    ) -> Result<()> {
        self.model.check_dims(state, load_dev, controls)?;
        state.control.copy_from_slice(controls);
        state.pack(&mut self.y);
        let h = self.h;
        let dim = self.y.len();
        self.integral.fill(0.0);

        for step in 1..=self.steps {
            let [k1, k2, k3, k4] = &mut self.k;
            // The running integral of y is RK4 on the augmented state (q' = y),
            // so it uses the stage states y, y2, y3, y4 with weights 1, 2, 2, 1.
            self.model
                .rhs(&self.y, load_dev, controls, &mut self.scratch, k1);
            for d in 0..dim {
                self.integral[d] += h / 6.0 * self.y[d];
                self.tmp[d] = self.y[d] + 0.5 * h * k1[d];
            }
            self.model
                .rhs(&self.tmp, load_dev, controls, &mut self.scratch, k2);
            for d in 0..dim {
                self.integral[d] += h / 3.0 * self.tmp[d];
                self.tmp[d] = self.y[d] + 0.5 * h * k2[d];
            }
            self.model
                .rhs(&self.tmp, load_dev, controls, &mut self.scratch, k3);
            for d in 0..dim {
                self.integral[d] += h / 3.0 * self.tmp[d];
                self.tmp[d] = self.y[d] + h * k3[d];
            }
            self.model
                .rhs(&self.tmp, load_dev, controls, &mut self.scratch, k4);
            for d in 0..dim {
                self.integral[d] += h / 6.0 * self.tmp[d];
                self.y[d] += h / 6.0 * (k1[d] + 2.0 * k2[d] + 2.0 * k3[d] + k4[d]);
            }
            if self.y.iter().any(|v| !v.is_finite()) {
                return Err(Error::IntegrationBlowup {
                    slot,
                    time: slot_start + step as f64 * h,
                });
            }
            if step < self.steps {
                state.unpack(&self.y);
                observe(step, state);
            }
        }
        state.unpack(&self.y);
        Ok(())
    }

    /// Time averages over the last slot advanced.
    pub fn slot_means(&self) -> SlotMeans {
        let model = self.model;
        let na = model.n_areas();
        let nr = model.n_resources();
        let slot_len = self.h * self.steps as f64;
        let mean = |range: Range<usize>| -> Vec<f64> {
            self.integral[range].iter().map(|q| q / slot_len).collect()
        };
        SlotMeans {
            freq_dev: mean(0..na),
            mech_power: mean(na..na + nr),
            tie_flow: model.area_tie_flows(&mean(na + 2 * nr..model.dim())),
        }
    }
}

/// Slot-averaged plant quantities.
#[derive(Debug, Clone, PartialEq)]
pub struct SlotMeans {
    /// Per-area mean Δf (Hz).
    pub freq_dev: Vec<f64>,
    /// Per-resource mean ΔP_m (pu).
    pub mech_power: Vec<f64>,
    /// Per-area mean net tie flow (pu).
    pub tie_flow: Vec<f64>,
}

/// Advances `state` over one control slot of length `slot_len` with loads and
/// controls held constant.
pub fn integrate_slot(
    model: &GridModel,
    state: &SystemState,
    load_dev: &[f64],
    controls: &[f64],
    slot_len: f64,
    inner_step: f64,
    slot: usize,
) -> Result<SystemState> {
    let mut integrator = SlotIntegrator::new(model, slot_len, inner_step)?;
    let mut next = state.clone();
    integrator.advance(
        &mut next,
        load_dev,
        controls,
        slot,
        slot as f64 * slot_len,
        |_, _| {},
    )?;
    Ok(next)
}

fn finite(field: &str, v: f64) -> Result<()> {
    if v.is_finite() {
        Ok(())
    } else {
        Err(Error::param(field, format!("must be finite, got {v}")))
    }
}

fn positive(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(Error::param(field, format!("{field} must be > 0, got {v}")))
    }
}

fn non_negative(field: &str, v: f64) -> Result<()> {
    if v.is_finite() && v >= 0.0 {
        Ok(())
    } else {
        Err(Error::param(
            field,
            format!("{field} must be >= 0, got {v}"),
        ))
    }
}
