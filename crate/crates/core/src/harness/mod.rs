//! Operator-side tooling: scripted shots through the simulated signal chain, CSV trace
//! export, and a line-protocol client for the controller service.

pub mod client;
pub mod shot;
pub mod trace_csv;

use std::path::PathBuf;

use thiserror::Error;

use crate::controller::{ErrorCode, StoreError};
use crate::drift::DriftError;
use crate::integrator::IntegratorError;
use crate::signal::SignalError;

pub use client::{client_send, replay_script, Client, ClientError, Transcript};
pub use shot::{
    cmrr_test, fit_reference, measure_common_mode_drift, run_shot, CmrrTest, CorrectionMode,
    ShotConfig, ShotOutput, ShotReport, Source, Thresholds, MEASURABILITY_FLOOR,
};
pub use trace_csv::{export_trace, import_trace, read_trace, write_trace, CSV_HEADER};

/// Process exit codes used by the command-line tool.
pub mod exit {
    pub const SUCCESS: i32 = 0;
    pub const FAILURE: i32 = 1;
    pub const PROTOCOL: i32 = 3;
    pub const IO: i32 = 4;
    pub const THRESHOLD: i32 = 5;
}

#[derive(Debug, Error)]
pub enum HarnessError {
    #[error(transparent)]
    Signal(#[from] SignalError),
    #[error(transparent)]
    Integrator(#[from] IntegratorError),
    #[error(transparent)]
    Drift(#[from] DriftError),
    #[error(transparent)]
    Store(#[from] StoreError),
    #[error("correction requested but no reference fit was supplied; run fit-reference first")]
    MissingReference,
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {msg}")]
    Csv {
        path: PathBuf,
        line: usize,
        msg: String,
    },
    #[error(transparent)]
    Client(#[from] ClientError),
    #[error("controller replied ERR {0}")]
    Remote(ErrorCode),
    #[error("shot failed its thresholds")]
    Threshold,
    #[error("configuration: {0}")]
    Config(String),
}

impl HarnessError {
    pub fn exit_code(&self) -> i32 {
        match self {
            HarnessError::Io { .. } | HarnessError::Csv { .. } | HarnessError::Client(_) => {
                exit::IO
            }
            HarnessError::Remote(_) => exit::PROTOCOL,
            HarnessError::Threshold => exit::THRESHOLD,
            _ => exit::FAILURE,
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        HarnessError::Io {
            path: path.into(),
            source,
        }
    }
}
