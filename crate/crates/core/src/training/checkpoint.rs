//! Single-file JSON checkpoints.

use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::TrainConfig;
use super::optim::Optimizer;
use super::TrainError;
use crate::params::{ParameterSet, SegmentKind};
use crate::rng::SeededRng;
use crate::topology::{load_topology, NetworkTopology};

pub const CHECKPOINT_FORMAT: &str = "snn-checkpoint/1";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Checkpoint {
    pub format: String,
    /// Completed epochs.
    pub epoch: usize,
    pub params: Vec<f64>,
    pub frozen: Vec<SegmentKind>,
    pub optimizer: Optimizer,
    pub rng: SeededRng,
    pub config: TrainConfig,
    pub config_hash: String,
    /// The untrained topology document the parameters index into.
    pub topology: String,
    pub topology_hash: String,
    /// Set when written by the divergence guard.
    #[serde(default)]
    pub diverged: bool,
}

impl Checkpoint {
    pub fn new(
        epoch: usize,
        params: &ParameterSet,
        optimizer: &Optimizer,
        rng: &SeededRng,
        config: &TrainConfig,
        topology: &NetworkTopology,
    ) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            epoch,
            params: params.values().to_vec(),
            frozen: params.frozen().to_vec(),
            optimizer: optimizer.clone(),
            rng: rng.clone(),
            config: config.clone(),
            config_hash: config.identity_hash(),
            topology: topology.to_json(),
            topology_hash: topology.content_hash(),
            diverged: false,
        }
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn save(&self, path: &Path) -> Result<(), TrainError> {
        std::fs::write(path, self.to_json())?;
        Ok(())
    }

    /// Parse and check that the embedded hashes match the embedded config
    /// and topology. With `force`, mismatches are ignored.
    pub fn from_json(text: &str, force: bool) -> Result<Self, TrainError> {
        let ck: Checkpoint =
            serde_json::from_str(text).map_err(|e| TrainError::Checkpoint(e.to_string()))?;
        if ck.format != CHECKPOINT_FORMAT {
            return Err(TrainError::Checkpoint(format!("unknown format {:?}", ck.format)));
        }
        if !force {
            let config_hash = ck.config.identity_hash();
            if config_hash != ck.config_hash {
                return Err(TrainError::HashMismatch {
                    what: "config",
                    expected: ck.config_hash.clone(),
                    found: config_hash,
                });
            }
            let topo_hash = ck.topology()?.content_hash();
            if topo_hash != ck.topology_hash {
                return Err(TrainError::HashMismatch {
                    what: "topology",
                    expected: ck.topology_hash.clone(),
                    found: topo_hash,
                });
            }
        }
        Ok(ck)
    }

    pub fn load(path: &Path, force: bool) -> Result<Self, TrainError> {
        Self::from_json(&std::fs::read_to_string(path)?, force)
    }

    pub fn topology(&self) -> Result<NetworkTopology, TrainError> {
        load_topology(self.topology.as_bytes()).map_err(|e| TrainError::Checkpoint(e.to_string()))
    }

    pub fn param_set(&self, topology: &NetworkTopology) -> Result<ParameterSet, TrainError> {
        let mut p = ParameterSet::from_values(topology, self.params.clone()).ok_or_else(|| {
            TrainError::Checkpoint(format!("{} stored parameters do not fit the topology", self.params.len()))
        })?;
        p.set_frozen(&self.frozen);
        Ok(p)
    }

    /// Refuse to continue against a different topology or configuration.
    pub fn ensure_compatible(
        &self,
        topology: &NetworkTopology,
        config: &TrainConfig,
        force: bool,
    ) -> Result<(), TrainError> {
        if force {
            return Ok(());
        }
        let found = topology.content_hash();
        if found != self.topology_hash {
            return Err(TrainError::HashMismatch { what: "topology", expected: self.topology_hash.clone(), found });
        }
        let found = config.identity_hash();
        if found != self.config_hash {
            return Err(TrainError::HashMismatch { what: "config", expected: self.config_hash.clone(), found });
        }
        Ok(())
    }
}
