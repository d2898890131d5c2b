//! Run configuration: one TOML file, overridden by command-line flags.

use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use snn_core::datasets::pavlov::PavlovConfig;
use snn_core::datasets::pong::PongConfig;
use snn_core::topology::RandomTopologySpec;
use snn_core::training::{PongEvalConfig, TrainConfig};

use crate::error::{CliResult, Failure};

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    #[default]
    None,
    Pavlov,
    Pong,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    pub topology: Option<PathBuf>,
    pub data: Option<PathBuf>,
    pub eval_data: Option<PathBuf>,
    pub run_dir: Option<PathBuf>,
    pub task: Task,
    pub train: TrainConfig,
    pub pong_eval: PongEvalConfig,
    pub pavlov: PavlovConfig,
    pub pong: PongConfig,
    pub random_topology: RandomTopologySpec,
}

impl RunConfig {
    pub fn load(path: Option<&Path>) -> CliResult<Self> {
        let Some(path) = path else {
            return Ok(Self::default());
        };
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path.display(), e))?;
        toml::from_str(&text).map_err(|e| Failure::usage(format!("{}: {e}", path.display())))
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("run config serializes")
    }

    /// Run directory, defaulting to `$SNN_RUN_ROOT/<task>` (or `runs/<task>`).
    pub fn resolved_run_dir(&self) -> PathBuf {
        self.run_dir.clone().unwrap_or_else(|| {
            let root = std::env::var_os("SNN_RUN_ROOT").map_or_else(|| PathBuf::from("runs"), PathBuf::from);
            let name = match self.task {
                Task::None => "run",
                Task::Pavlov => "pavlov",
                Task::Pong => "pong",
            };
            root.join(name)
        })
    }
}
