use std::fmt;

use snn_core::datasets::DatasetError;
use snn_core::topology::TopologyError;
use snn_core::training::TrainError;

/// Exit codes: 2 usage or config, 3 I/O, 4 numeric divergence.
#[derive(Debug)]
pub struct Failure {
    pub code: i32,
    pub message: String,
}

pub const USAGE: i32 = 2;
pub const IO: i32 = 3;
pub const DIVERGED: i32 = 4;

impl Failure {
    pub fn usage(message: impl Into<String>) -> Self {
        Self { code: USAGE, message: message.into() }
    }

    pub fn io(context: impl fmt::Display, err: impl fmt::Display) -> Self {
        Self { code: IO, message: format!("{context}: {err}") }
    }
}

impl fmt::Display for Failure {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.message)
    }
}

impl From<DatasetError> for Failure {
    fn from(e: DatasetError) -> Self {
        let code = if matches!(e, DatasetError::Io(_)) { IO } else { USAGE };
        Self { code, message: e.to_string() }
    }
}

impl From<TopologyError> for Failure {
    fn from(e: TopologyError) -> Self {
        let code = if matches!(e, TopologyError::Io(_)) { IO } else { USAGE };
        Self { code, message: e.to_string() }
    }
}

impl From<TrainError> for Failure {
    fn from(e: TrainError) -> Self {
        let code = match &e {
            TrainError::Io(_) => IO,
            TrainError::Diverged { .. } | TrainError::Engine(_) | TrainError::Autodiff(_) => DIVERGED,
            _ => USAGE,
        };
        Self { code, message: e.to_string() }
    }
}

pub type CliResult<T = ()> = Result<T, Failure>;
