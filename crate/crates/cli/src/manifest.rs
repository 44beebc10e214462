//! Run manifests: written next to every output so a run can be replayed.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::config::FileConfig;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    /// The file the run was started from (a config or an earlier manifest).
    pub config_path: PathBuf,
    /// Fully resolved configuration; passing this manifest to `--config`
    /// reproduces every CSV bit for bit.
    pub resolved: FileConfig,
    pub outputs: Vec<PathBuf>,
    pub wall_clock_secs: f64,
    pub version: String,
    /// Worker cap used for the run; results do not depend on it.
    #[serde(default)]
    pub threads: Option<usize>,
    /// Conditions worth noting that did not fail the run.
    #[serde(default)]
    pub notes: Vec<String>,
}
