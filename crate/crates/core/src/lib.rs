//! Injection control for a transport pipe that must meet a stochastic
//! demand at its outlet.
//!
//! The demand follows a mean-reverting jump diffusion. Its moments are
//! available in closed form ([`moments`]), which turns the expected
//! quadratic tracking cost into a deterministic functional of the injection
//! ([`costopt`]). The pipe itself is a linear advection equation solved
//! with an upwind scheme ([`transport`]); closed-form optimal controls for
//! three information regimes live in [`control`], and [`experiments`]
//! drives scenario runs from configuration files.
//!
//! Every numerical routine is generic over [`Real`] (`f32` or `f64`); the
//! `*F64` aliases below fix the common double-precision case.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod control;
pub mod costopt;
pub mod demand;
pub mod error;
pub mod experiments;
pub mod moments;
pub mod rng;
pub mod scalar;
pub mod transport;

pub use control::{cm1_control, cm2_control, cm3_control, Plant, UpdateSchedule};
pub use costopt::{
    cumrmse_analytic, cumrmse_between, deterministic_cost, mc_cost_estimate, minimize_control,
    minimize_control_direct, sequential_update_solve, CostReport, DemandModel, Information,
    InformationLevel, InnerSolver, McCostReport, OptimizerConfig, Policy,
};
pub use demand::{
    exact_step, sample_path, sample_paths, DemandParams, DemandPath, JumpHeightLaw, JumpSpec,
    MeanFunction,
};
pub use error::{Error, Result};
pub use moments::{
    conditional_mean, conditional_variance, jump_sum_moments, moment_set, MomentSet,
};
pub use rng::StreamSeed;
pub use scalar::Real;
pub use transport::{upwind_solve, ControlSignal, FieldState, Grid};

pub type DemandParamsF64 = DemandParams<f64>;
pub type DemandPathF64 = DemandPath<f64>;
pub type MeanFunctionF64 = MeanFunction<f64>;
pub type GridF64 = Grid<f64>;
pub type ControlSignalF64 = ControlSignal<f64>;
pub type DemandModelF64 = DemandModel<f64>;
pub type CostReportF64 = CostReport<f64>;

pub type DemandParamsF32 = DemandParams<f32>;
pub type GridF32 = Grid<f32>;
pub type ControlSignalF32 = ControlSignal<f32>;
