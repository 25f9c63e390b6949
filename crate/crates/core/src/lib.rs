//! Circuit-level simulation of resistive crossbar arrays that execute
//! neural-network inference in the analog domain.
//!
//! The library covers the full path from a trained set of weight matrices to
//! classification metrics obtained by actually solving the electrical network:
//!
//! 1. [`config`] — simulation configuration, device/bitcell presets, and the
//!    flat key-value config file format shared by the CLI.
//! 2. [`parasitics`] — interconnect resistance/capacitance models including
//!    surface- and grain-boundary-scattering resistivity scaling.
//! 3. [`partition`] — balanced splitting of each layer's crossbar into
//!    horizontal (row) and vertical (column) partitions.
//! 4. [`circuit`] — construction of the electrical network (differential
//!    bitcell pairs, parasitic wire segments, behavioral neurons) plus
//!    conductance mapping and process-variation injection.
//! 5. [`spice`] — netlist export in SPICE syntax and the matching parser used
//!    for round-trip verification.
//! 6. [`solve`] — modified nodal analysis, sparse LU with reusable symbolic
//!    factorization, damped Newton DC solves, and backward-Euler transients.
//! 7. [`pipeline`] — dataset handling, input encoding, batched evaluation,
//!    parameter sweeps, and report serialization.
//! 8. [`timing`] — the wall-clock study harness behind the CLI's `timing`
//!    subcommand.

pub mod circuit;
pub mod config;
pub mod parasitics;
pub mod partition;
pub mod pipeline;
pub mod solve;
pub mod spice;
pub mod timing;
pub mod weights;

pub use circuit::{build_network, CircuitGraph};
pub use config::{SimConfig, Value};
pub use partition::PartitionPlan;
pub use pipeline::{evaluate, sweep, EvalMode, EvalReport};
pub use solve::{solve_dc, solve_transient, CircuitSolver, SolveError, SolveResult, TransientResult};
pub use weights::WeightMatrices;

/// Version string embedded in run manifests and netlist headers.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
