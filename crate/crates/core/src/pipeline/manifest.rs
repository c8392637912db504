use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use super::config::RunConfig;

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct StageRecord {
    pub stage: String,
    pub counts: BTreeMap<String, u64>,
    /// Output file name → SHA-256 of its contents.
    pub outputs: BTreeMap<String, String>,
    pub elapsed_ms: f64,
}

/// Record of one invocation, written to `manifest.json` on success and failure.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub command: String,
    pub status: RunStatus,
    pub error: Option<String>,
    pub config: RunConfig,
    /// Input name → SHA-256 of the file.
    pub input_digests: BTreeMap<String, String>,
    pub stages: Vec<StageRecord>,
    pub warnings: Vec<String>,
    pub elapsed_ms: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RunStatus {
    Running,
    Ok,
    Failed,
}

impl RunManifest {
    pub fn new(command: &str, config: RunConfig) -> Self {
        RunManifest {
            command: command.to_string(),
            status: RunStatus::Running,
            error: None,
            config,
            input_digests: BTreeMap::new(),
            stages: Vec::new(),
            warnings: Vec::new(),
            elapsed_ms: 0.0,
        }
    }

    pub fn stage(&self, name: &str) -> Option<&StageRecord> {
        self.stages.iter().find(|s| s.stage == name)
    }

    /// All output digests across stages.
    pub fn output_digests(&self) -> BTreeMap<String, String> {
        self.stages.iter().flat_map(|s| s.outputs.clone()).collect()
    }
}
