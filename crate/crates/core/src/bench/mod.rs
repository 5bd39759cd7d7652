//! Benchmark harness: experiment configs, trace files, certificates, and
//! summary reports.
//!
//! The flow is `config -> runner -> traces + report`, with `certify` as the
//! independent path that rebuilds the report from the trace files alone.
//! See the submodule docs for the config schema ([`config`]), the trace
//! format ([`trace`]), and the frozen certificate formulas
//! ([`certificates`]).

pub mod certificates;
pub mod config;
pub mod report;
pub mod runner;
pub mod trace;

pub use certificates::{CertificateOutcome, EpisodeEvidence, KNOWN_FAMILIES};
pub use config::{C1Variant, ExperimentConfig, FixtureInfo, MabSection, PmSection, FIXTURES};
pub use report::{HorizonReport, SummaryReport};
pub use runner::{certify_dir, run_experiment, RunOptions};
pub use trace::{
    parse_trace_csv, read_trace_csv, render_trace_csv, write_trace_csv, RunDescriptor,
    TraceSidecar, TRACE_FORMAT_VERSION, TRACE_HEADER,
};
