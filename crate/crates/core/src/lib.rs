//! Simulation, optimisation and analysis tools for quantum repeaters that
//! multiplex in frequency using fixed-delay atomic frequency comb memories.
//!
//! - [`params`]: validated parameter sets and dB conversions
//! - [`rate`]: closed-form success probabilities and rates
//! - [`montecarlo`]: event-level simulation of the same protocol
//! - [`sweep`]: per-distance optimisation of the number of links
//! - [`afc`]: comb geometry, cavity-assisted efficiency, loss budgets
//! - [`crosstalk`]: filter-cavity leakage between spectral bins
//! - [`decoy`]: qubit fidelities and decoy-state single-photon bounds
//! - [`cli`]: the `specmux` command-line front end

pub mod afc;
pub mod cli;
pub mod config;
pub mod crosstalk;
pub mod decoy;
pub mod montecarlo;
pub mod output;
pub mod params;
pub mod rate;
pub mod sweep;

pub use params::{ParamError, ParamSpec, RepeaterParams, TimeBinQubitSpec};
pub use rate::RateBreakdown;
