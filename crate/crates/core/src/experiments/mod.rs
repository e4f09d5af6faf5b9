//! Discrete minimization, convergence runs, gap probes and classifier sweeps.

mod config;
mod converge;
mod gap;
mod minimize;
mod sweep;

pub use config::{flags_for, ExperimentConfig, FieldSpec, GapParams, Source, SweepSpec};
pub use converge::{convergence_experiment, smooth_with_config, ConvergenceReport, ConvergenceRow, CONVERGENCE_COLUMNS};
pub use gap::{gap_probe, GapFlag, GapReport, MeshResult, GAP_DISCLAIMER};
pub use minimize::{discrete_energy, minimize, MinimizeReport, SolverParams, StepRule};
pub use sweep::{sweep, sweep_csv, sweep_header, SweepRow};
