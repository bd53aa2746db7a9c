//! Simulation and analysis of expanding T²-symmetric vacuum spacetimes in
//! areal time: periodic fields on the circle, a fourth-order method-of-lines
//! evolution, constrained initial data, averaged diagnostics, ODE oracles,
//! and fitting tools for late-time asymptotics.

pub mod analysis;
pub mod batch;
pub mod diagnostics;
pub mod evolution;
pub mod fields;
pub mod initial_data;
pub mod io;
pub mod reference_models;

pub use diagnostics::{DiagnosticsRecord, C_STAR, D_STAR};
pub use evolution::{evolve, EvolutionConfig, EvolutionError, Stepper};
pub use fields::{FieldState, FieldsError, PeriodicGrid};
pub use initial_data::{make_initial_data, InitialDataError, SamplerMode, SamplerSpec};
