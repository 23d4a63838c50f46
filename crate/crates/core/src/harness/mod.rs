//! Experiment configs, calibration fixtures, verification suites and result
//! emission behind the command-line tool.

pub mod config;
pub mod experiment;
pub mod fixture;
pub mod verify;

use std::path::PathBuf;

use serde::Serialize;

pub use config::{ExperimentConfig, ExperimentKind, OmegaConfig, SCHEMA_VERSION};
pub use experiment::{read_csv, run_experiment, summarize, write_csv, ExperimentSummary, GroupSummary, Row};
pub use fixture::{calibrate, CalibrationFixture, DEFAULT_MULTIPLIER};
pub use verify::{run_suite, Suite, SuiteReport, VerifyOptions};

/// One named assertion.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Check {
    pub name: String,
    pub passed: bool,
    pub detail: String,
}

impl Check {
    pub fn new(name: impl Into<String>, passed: bool, detail: impl Into<String>) -> Self {
        Self { name: name.into(), passed, detail: detail.into() }
    }

    pub fn fail(name: impl Into<String>, detail: impl Into<String>) -> Self {
        Self::new(name, false, detail)
    }
}

/// Directory holding the committed `configs/` and `fixtures/` corpora.
pub fn default_corpus_dir() -> PathBuf {
    PathBuf::from(concat!(env!("CARGO_MANIFEST_DIR"), "/../.."))
}

/// Process exit codes of the command-line tool.
pub mod exit {
    pub const PASS: i32 = 0;
    pub const ASSERTION: i32 = 1;
    pub const CONFIG: i32 = 2;
}
