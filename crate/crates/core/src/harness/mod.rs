//! Experiment configuration, deterministic runs, sweeps, CSV persistence and
//! the verification suite.

pub mod config;
pub mod io;
pub mod run;
pub mod sweep;
pub mod verify;

pub use config::{DiagnosticsConfig, ExperimentConfig, ProblemConfig, SweepGrid, OUT_DIR_ENV};
pub use io::{read_trace_csv, trace_header, write_sweep_csv, write_trace_csv, SWEEP_HEADER};
pub use run::{run_experiment, streams, Problem, RunOutput, RunSummary, Trace, TraceRecord, DIVERGENCE_FACTOR};
pub use sweep::{aggregate, sweep, SweepRow, SweepTable};
pub use verify::{verify, Property, VerifyReport};
