//! Distributed secondary frequency control.
//!
//! Regulation resources exchange marginal-price estimates with their
//! communication neighbors and correct them with a shared supply/demand
//! innovation, tracking the economic dispatch while restoring frequency.
//! The crate provides:
//!
//! - [`grid`]: swing-equation plant with governor/turbine resources and tie lines;
//! - [`graph`]: communication topologies and the spectral contraction check;
//! - [`controllers`]: the consensus-plus-innovation law and an AGC PI baseline;
//! - [`dispatch`]: closed-form economic dispatch, tracking bound, ramp check;
//! - [`sim`]: the slot-by-slot closed loop, traces and metrics;
//! - [`config`], [`trace`], [`report`]: scenario files, CSV traces and reports.

// Negated comparisons reject NaN along with out-of-range values; index loops
// mirror the component-wise math.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod config;
pub mod controllers;
pub mod dispatch;
pub mod error;
pub mod graph;
pub mod grid;
pub mod report;
pub mod sim;
pub mod trace;

pub use controllers::{AgcController, DistributedController, InnovationMode};
pub use dispatch::{CostBound, DispatchSolution};
pub use error::{Error, Result};
pub use graph::{CommGraph, SpectralReport};
pub use grid::{AreaParams, GridModel, ResourceParams, SystemState};
pub use sim::{ControllerConfig, LoadProfile, ScenarioConfig, SimTrace};
