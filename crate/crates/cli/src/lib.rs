//! Batch experiments over the coop-uplink library: each run writes CSV
//! tables and a JSON manifest that reproduces them.

pub mod experiments;
pub mod manifest;
pub mod spec;

pub use experiments::{run, run_with_workers, Row, Table};
pub use manifest::{execute, replay, write_outputs, Manifest};
pub use spec::{ExperimentKind, ExperimentSpec, Sweep};
