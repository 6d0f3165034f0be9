// Copyright 2026 The spinmem Authors
// SPDX-License-Identifier: Apache-2.0

//! Moment-equation simulator for a spin-ensemble microwave quantum memory.
//!
//! A tunable cavity couples to `M` homogeneous spin sub-ensembles. First and
//! second moments of the cavity quadratures and collective spin components
//! are integrated under a piecewise-linear control schedule that stores a
//! cavity field, refocuses it with two adiabatic inversion pulses and
//! retrieves it.

// `!(x > 0.0)` guards deliberately reject NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod constants;
pub mod distributions;
pub mod dynamics;
pub mod error;
pub mod experiment;
pub mod fock;
pub mod metrics;
pub mod model;
pub mod oracle;
pub mod protocol;
pub mod scalar;
pub mod schedule;

pub use error::{Error, Result};
pub use model::{ControlSample, EnsembleModel, MomentState, PhysicalParams, SubEnsemble};
pub use scalar::{Field, Real};

pub type MomentState64 = MomentState<f64>;
pub type MomentState32 = MomentState<f32>;
