//! Scenario files.
//!
//! Scenarios are TOML documents (conventionally with a `.cfg` extension).
//! Unknown keys are rejected, and every validation failure reports the line
//! of the offending entry.
//!
//! ```toml
//! name = "step"
//! seed = 7
//! slot_len = 4.0          # control slot ΔT (s)
//! horizon = 40.0          # multiple of slot_len
//! # inner_step = 0.01     # RK4 step; default min(0.01, ΔT/10)
//! # sample_interval       # trace row spacing; default inner_step
//! # band = 5e-4           # settling band (Hz)
//! # ideal = false         # bypass governor/turbine (requires t_g = t_t = 0)
//! # enforce_ramp = false  # clamp per-slot moves to ramp_r
//!
//! [controller]
//! kind = "distributed"    # or "agc" with kp, ki, participation = "uniform" | "cost"
//! beta = 0.003
//! innovation = "frequency-estimated"   # | "oracle-load" | "boundary-sampled"
//!
//! [[area]]
//! inertia_h = 0.0833
//! damping_d = 0.0084
//! graph = { kind = "ring" }            # | "complete" | "k-neighbor-ring" (k) | "edges" (edges)
//! load = { kind = "step", magnitude = 0.005, at = 0.0 }
//!
//! [area.resources]
//! count = 5
//! a = 0.5                              # scalar, list of `count` values,
//! droop_r = { uniform = [2.0, 3.0] }   # or a seeded uniform draw
//! t_g = { uniform = [0.05, 0.06] }
//! t_t = { uniform = [0.3, 0.5] }
//! ramp_r = 0.01
//!
//! # [[tie]]
//! # areas = [0, 1]
//! # coefficient = 0.1
//! ```
//!
//! Load kinds: `zero`, `step` (`magnitude`, `at`), `piecewise-constant-random`
//! (`period`, `bound`, optional `seed`), `monotone-ramp` (`increment`,
//! `period`, optional `start` and `changes`) and `from-file` (`path` to a CSV
//! with `time_s,load_pu` columns, relative to the scenario file).
//!
//! Uniform draws come from one ChaCha8 stream seeded by `seed`, consumed per
//! area, per resource, in parameter order `a, b, c, droop_r, t_g, t_t, ramp_r`.

use std::ops::Range;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Deserialize;
use toml::Spanned;

use crate::controllers::InnovationMode;
use crate::error::{Error, Result};
use crate::graph::{build_k_neighbor_ring, CommGraph};
use crate::grid::{default_inner_step, AreaParams, ResourceParams, TieCoupling};
use crate::sim::{ControllerConfig, LoadProfile, Participation, ScenarioConfig, DEFAULT_BAND};

/// Reads and validates a scenario file.
pub fn parse_scenario(path: impl AsRef<Path>) -> Result<ScenarioConfig> {
    parse_scenario_with_seed(path, None)
}

/// Like [`parse_scenario`], replacing the file's `seed` when `seed_override`
/// is set.
pub fn parse_scenario_with_seed(
    path: impl AsRef<Path>,
    seed_override: Option<u64>,
) -> Result<ScenarioConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let base = path.parent().map(Path::to_path_buf).unwrap_or_default();
    let mut config = parse_scenario_str(&text, &base, seed_override)?;
    if config.name.is_empty() {
        config.name = path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
    }
    Ok(config)
}

/// Parses scenario text; relative `from-file` paths resolve against `base_dir`.
pub fn parse_scenario_str(
    text: &str,
    base_dir: &Path,
    seed_override: Option<u64>,
) -> Result<ScenarioConfig> {
    let src = Source { text };
    let raw: RawScenario = toml::from_str(text).map_err(|e| Error::Config {
        line: e.span().map(|s| src.line(&src.key_span(s, e.message()))),
        message: e.message().trim().to_string(),
    })?;
    raw.build(&src, base_dir, seed_override)
}

struct Source<'a> {
    text: &'a str,
}

impl Source<'_> {
    fn line(&self, span: &Range<usize>) -> usize {
        let end = span.start.min(self.text.len());
        self.text.as_bytes()[..end]
            .iter()
            .filter(|&&b| b == b'\n')
            .count()
            + 1
    }

    /// Unknown-field errors point at the enclosing table; narrow the span to
    /// the line in that table that defines the offending key.
    fn key_span(&self, span: Range<usize>, message: &str) -> Range<usize> {
        let Some(key) = message
            .strip_prefix("unknown field `")
            .and_then(|rest| rest.split('`').next())
        else {
            return span;
        };
        let start = span.start.min(self.text.len());
        let mut offset = start;
        for (k, line) in self.text[start..].split_inclusive('\n').enumerate() {
            let trimmed = line.trim_start();
            if k > 0 && trimmed.starts_with('[') {
                break;
            }
            if let Some(after) = trimmed.strip_prefix(key) {
                if after.trim_start().starts_with('=') {
                    return offset..offset + line.len();
                }
            }
            offset += line.len();
        }
        span
    }

    fn err(&self, span: &Range<usize>, message: impl Into<String>) -> Error {
        Error::Config {
            line: Some(self.line(span)),
            message: message.into(),
        }
    }

    /// Attaches the line of `span` to any library error.
    fn at(&self, span: &Range<usize>) -> impl Fn(Error) -> Error + '_ {
        let span = span.clone();
        move |e| match e {
            Error::Config { .. } => e,
            Error::InvalidParameter { reason, .. } => self.err(&span, reason),
            other => self.err(&span, other.to_string()),
        }
    }
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawScenario {
    #[serde(default)]
    name: String,
    seed: u64,
    slot_len: Spanned<f64>,
    horizon: Spanned<f64>,
    inner_step: Option<Spanned<f64>>,
    sample_interval: Option<Spanned<f64>>,
    band: Option<Spanned<f64>>,
    #[serde(default)]
    ideal: bool,
    #[serde(default)]
    enforce_ramp: bool,
    controller: Spanned<RawController>,
    #[serde(rename = "area")]
    areas: Spanned<Vec<Spanned<RawArea>>>,
    #[serde(default, rename = "tie")]
    ties: Vec<Spanned<RawTie>>,
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum RawController {
    Distributed {
        beta: f64,
        #[serde(default = "default_innovation")]
        innovation: InnovationMode,
    },
    Agc {
        kp: f64,
        ki: f64,
        #[serde(default = "default_participation")]
        participation: RawParticipation,
    },
}

fn default_innovation() -> InnovationMode {
    InnovationMode::FrequencyEstimated
}

#[derive(Debug, Clone, Copy, Deserialize)]
#[serde(rename_all = "kebab-case")]
enum RawParticipation {
    Uniform,
    Cost,
}

fn default_participation() -> RawParticipation {
    RawParticipation::Uniform
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawArea {
    inertia_h: Spanned<f64>,
    damping_d: Spanned<f64>,
    resources: Spanned<RawResources>,
    graph: Option<Spanned<RawGraph>>,
    load: Option<Spanned<RawLoad>>,
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawResources {
    count: Spanned<usize>,
    a: Spanned<ParamSpec>,
    b: Option<Spanned<ParamSpec>>,
    c: Option<Spanned<ParamSpec>>,
    droop_r: Spanned<ParamSpec>,
    t_g: Option<Spanned<ParamSpec>>,
    t_t: Option<Spanned<ParamSpec>>,
    ramp_r: Spanned<ParamSpec>,
}

#[derive(Debug, Clone, Deserialize)]
#[serde(untagged)]
enum ParamSpec {
    Scalar(f64),
    List(Vec<f64>),
    Uniform(UniformSpec),
}

#[derive(Debug, Clone, Deserialize)]
#[serde(deny_unknown_fields)]
struct UniformSpec {
    uniform: [f64; 2],
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum RawGraph {
    Ring,
    Complete,
    KNeighborRing { k: usize },
    Edges { edges: Vec<[usize; 2]> },
}

#[derive(Debug, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
enum RawLoad {
    Zero,
    Step {
        magnitude: f64,
        #[serde(default)]
        at: f64,
    },
    PiecewiseConstantRandom {
        period: f64,
        bound: f64,
        seed: Option<u64>,
    },
    MonotoneRamp {
        increment: f64,
        period: f64,
        #[serde(default)]
        start: f64,
        changes: Option<usize>,
    },
    FromFile {
        path: PathBuf,
    },
}

#[derive(Debug, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawTie {
    areas: [usize; 2],
    coefficient: f64,
}

const PARAM_ORDER: [&str; 7] = ["a", "b", "c", "droop_r", "t_g", "t_t", "ramp_r"];

impl RawScenario {
    fn build(
        self,
        src: &Source,
        base_dir: &Path,
        seed_override: Option<u64>,
    ) -> Result<ScenarioConfig> {
        let seed = seed_override.unwrap_or(self.seed);
        let slot_len = *self.slot_len.get_ref();
        let horizon = *self.horizon.get_ref();
        if !(slot_len > 0.0) || !slot_len.is_finite() {
            return Err(src.err(
                &self.slot_len.span(),
                format!("slot_len must be > 0, got {slot_len}"),
            ));
        }
        if !(horizon > 0.0) || !horizon.is_finite() {
            return Err(src.err(
                &self.horizon.span(),
                format!("horizon must be > 0, got {horizon}"),
            ));
        }
        let n_slots = (horizon / slot_len).round();
        if n_slots < 1.0 || (n_slots * slot_len - horizon).abs() > 1e-9 * horizon.max(slot_len) {
            return Err(src.err(
                &self.horizon.span(),
                format!("horizon {horizon} is not a multiple of slot_len {slot_len}"),
            ));
        }
        let inner_step = self
            .inner_step
            .as_ref()
            .map_or_else(|| default_inner_step(slot_len), |s| *s.get_ref());
        let sample_interval = self
            .sample_interval
            .as_ref()
            .map_or(inner_step, |s| *s.get_ref());
        let band = self.band.as_ref().map_or(DEFAULT_BAND, |s| *s.get_ref());

        let controller = match self.controller.get_ref() {
            RawController::Distributed { beta, innovation } => ControllerConfig::Distributed {
                beta: *beta,
                innovation: *innovation,
            },
            RawController::Agc {
                kp,
                ki,
                participation,
            } => ControllerConfig::Agc {
                kp: *kp,
                ki: *ki,
                participation: match participation {
                    RawParticipation::Uniform => Participation::Uniform,
                    RawParticipation::Cost => Participation::Cost,
                },
            },
        };

        let raw_areas = self.areas.get_ref();
        if raw_areas.is_empty() {
            return Err(src.err(&self.areas.span(), "at least one [[area]] is required"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut areas = Vec::with_capacity(raw_areas.len());
        let mut resources = Vec::with_capacity(raw_areas.len());
        let mut graphs = Vec::with_capacity(raw_areas.len());
        let mut loads = Vec::with_capacity(raw_areas.len());
        for (j, spanned) in raw_areas.iter().enumerate() {
            let raw = spanned.get_ref();
            let area = AreaParams::isolated(*raw.inertia_h.get_ref(), *raw.damping_d.get_ref());
            positive(src, &raw.inertia_h, "inertia_h")?;
            if !(area.damping_d >= 0.0) || !area.damping_d.is_finite() {
                return Err(src.err(
                    &raw.damping_d.span(),
                    format!("damping_d must be >= 0, got {}", area.damping_d),
                ));
            }
            let group = build_resources(src, raw.resources.get_ref(), self.ideal, &mut rng)?;
            let n = group.len();
            let graph = match &raw.graph {
                Some(g) => build_graph(g.get_ref(), n).map_err(src.at(&g.span()))?,
                None if n >= 3 => CommGraph::ring(n).map_err(src.at(&spanned.span()))?,
                None => CommGraph::complete(n).map_err(src.at(&spanned.span()))?,
            };
            let load = match &raw.load {
                Some(l) => build_load(l.get_ref(), base_dir, seed.wrapping_add(j as u64))
                    .and_then(|p| p.validate(slot_len).map(|_| p))
                    .map_err(src.at(&l.span()))?,
                None => LoadProfile::Zero,
            };
            areas.push(area);
            resources.push(group);
            graphs.push(graph);
            loads.push(load);
        }

        for tie in &self.ties {
            let raw = tie.get_ref();
            let [from, to] = raw.areas;
            if from >= areas.len() || to >= areas.len() || from == to {
                return Err(src.err(
                    &tie.span(),
                    format!(
                        "tie areas {from} and {to} must be distinct indices below {}",
                        areas.len()
                    ),
                ));
            }
            if !(raw.coefficient > 0.0) || !raw.coefficient.is_finite() {
                return Err(src.err(
                    &tie.span(),
                    format!("tie coefficient must be > 0, got {}", raw.coefficient),
                ));
            }
            if areas[from].tie_couplings.iter().any(|t| t.neighbor == to) {
                return Err(src.err(
                    &tie.span(),
                    format!("duplicate tie between areas {from} and {to}"),
                ));
            }
            areas[from].tie_couplings.push(TieCoupling {
                neighbor: to,
                coefficient: raw.coefficient,
            });
            areas[to].tie_couplings.push(TieCoupling {
                neighbor: from,
                coefficient: raw.coefficient,
            });
        }

        let config = ScenarioConfig {
            name: self.name,
            areas,
            resources,
            graphs,
            ideal: self.ideal,
            controller,
            slot_len,
            inner_step,
            sample_interval,
            horizon,
            loads,
            seed,
            enforce_ramp: self.enforce_ramp,
            band,
        };
        config.validate().map_err(|e| {
            let span = match &e {
                Error::InvalidParameter { field, .. } => match field.as_str() {
                    "slot_len" => Some(self.slot_len.span()),
                    "inner_step" => self.inner_step.as_ref().map(Spanned::span),
                    "sample_interval" => self.sample_interval.as_ref().map(Spanned::span),
                    "band" => self.band.as_ref().map(Spanned::span),
                    f if f.starts_with("controller") => Some(self.controller.span()),
                    _ => None,
                },
                _ => None,
            }
            .or_else(|| {
                self.inner_step
                    .as_ref()
                    .map(Spanned::span)
                    .filter(|_| is_step_error(&e))
            });
            match span {
                Some(span) => src.at(&span)(e),
                None => Error::Config {
                    line: None,
                    message: e.to_string(),
                },
            }
        })?;
        Ok(config)
    }
}

fn is_step_error(e: &Error) -> bool {
    matches!(e, Error::InvalidParameter { field, .. } if field == "inner_step")
}

fn positive(src: &Source, value: &Spanned<f64>, field: &str) -> Result<()> {
    let v = *value.get_ref();
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(src.err(&value.span(), format!("{field} must be > 0, got {v}")))
    }
}

fn build_resources(
    src: &Source,
    raw: &RawResources,
    ideal: bool,
    rng: &mut ChaCha8Rng,
) -> Result<Vec<ResourceParams>> {
    let n = *raw.count.get_ref();
    if n == 0 {
        return Err(src.err(&raw.count.span(), "count must be >= 1"));
    }
    let specs: [Option<&Spanned<ParamSpec>>; 7] = [
        Some(&raw.a),
        raw.b.as_ref(),
        raw.c.as_ref(),
        Some(&raw.droop_r),
        raw.t_g.as_ref(),
        raw.t_t.as_ref(),
        Some(&raw.ramp_r),
    ];
    for (name, spec) in PARAM_ORDER.iter().zip(&specs) {
        let Some(spec) = spec else { continue };
        match spec.get_ref() {
            ParamSpec::List(values) if values.len() != n => {
                return Err(src.err(
                    &spec.span(),
                    format!("{name} lists {} values but count = {n}", values.len()),
                ));
            }
            ParamSpec::Uniform(UniformSpec { uniform: [lo, hi] })
                if !(lo < hi) || !lo.is_finite() || !hi.is_finite() =>
            {
                return Err(src.err(
                    &spec.span(),
                    format!("{name}: uniform range needs lo < hi, got [{lo}, {hi}]"),
                ));
            }
            _ => {}
        }
    }
    if !ideal && (raw.t_g.is_none() || raw.t_t.is_none()) {
        return Err(src.err(
            &raw.count.span(),
            "t_g and t_t are required unless ideal = true",
        ));
    }

    let mut out = Vec::with_capacity(n);
    for i in 0..n {
        let mut values = [0.0; 7];
        for (slot, spec) in values.iter_mut().zip(&specs) {
            if let Some(spec) = spec {
                *slot = match spec.get_ref() {
                    ParamSpec::Scalar(v) => *v,
                    ParamSpec::List(vs) => vs[i],
                    ParamSpec::Uniform(UniformSpec { uniform: [lo, hi] }) => {
                        rng.random_range(*lo..*hi)
                    }
                };
            }
        }
        let [a, b, c, droop_r, t_g, t_t, ramp_r] = values;
        let params =
            ResourceParams::new(a, b, c, droop_r, t_g, t_t, ramp_r).map_err(|e| match e {
                Error::InvalidParameter { field, reason } => {
                    let span = PARAM_ORDER
                        .iter()
                        .position(|p| *p == field)
                        .and_then(|k| specs[k])
                        .map_or(raw.count.span(), Spanned::span);
                    src.err(&span, format!("resource {i}: {reason}"))
                }
                other => src.err(&raw.count.span(), other.to_string()),
            })?;
        if ideal && (params.t_g != 0.0 || params.t_t != 0.0) {
            return Err(src.err(&raw.count.span(), "ideal = true requires t_g = t_t = 0"));
        }
        if !ideal && (params.t_g == 0.0 || params.t_t == 0.0) {
            return Err(src.err(
                &raw.count.span(),
                format!("resource {i}: zero time constant; set ideal = true for ideal resources"),
            ));
        }
        out.push(params);
    }
    Ok(out)
}

fn build_graph(raw: &RawGraph, n: usize) -> Result<CommGraph> {
    match raw {
        RawGraph::Ring => CommGraph::ring(n),
        RawGraph::Complete => CommGraph::complete(n),
        RawGraph::KNeighborRing { k } => build_k_neighbor_ring(n, *k),
        RawGraph::Edges { edges } => CommGraph::new(n, edges.iter().map(|[i, j]| (*i, *j))),
    }
}

fn build_load(raw: &RawLoad, base_dir: &Path, default_seed: u64) -> Result<LoadProfile> {
    Ok(match raw {
        RawLoad::Zero => LoadProfile::Zero,
        RawLoad::Step { magnitude, at } => LoadProfile::Step {
            magnitude: *magnitude,
            at: *at,
        },
        RawLoad::PiecewiseConstantRandom {
            period,
            bound,
            seed,
        } => LoadProfile::RandomPiecewise {
            period: *period,
            bound: *bound,
            seed: seed.unwrap_or(default_seed),
        },
        RawLoad::MonotoneRamp {
            increment,
            period,
            start,
            changes,
        } => LoadProfile::MonotoneRamp {
            increment: *increment,
            period: *period,
            start: *start,
            changes: *changes,
        },
        RawLoad::FromFile { path } => read_load_file(&base_dir.join(path))?,
    })
}

/// Reads a `time_s,load_pu` CSV into explicit samples.
pub fn read_load_file(path: &Path) -> Result<LoadProfile> {
    let mut reader = csv::Reader::from_path(path).map_err(|e| match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::param("load.path", format!("{}: {other:?}", path.display())),
    })?;
    let mut times = Vec::new();
    let mut values = Vec::new();
    for (row, record) in reader.records().enumerate() {
        let record = record?;
        let field = |k: usize| -> Result<f64> {
            record
                .get(k)
                .ok_or_else(|| {
                    Error::param(
                        "load.path",
                        format!("{} row {}: missing column {k}", path.display(), row + 1),
                    )
                })?
                .trim()
                .parse()
                .map_err(|e| {
                    Error::param(
                        "load.path",
                        format!("{} row {}: {e}", path.display(), row + 1),
                    )
                })
        };
        times.push(field(0)?);
        values.push(field(1)?);
    }
    Ok(LoadProfile::Samples { times, values })
}
