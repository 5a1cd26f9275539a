use std::path::Path;

use easy_iil_core::novice::{EpsNet, NoviceConfig, NovicePolicy};
use serde::{Deserialize, Serialize};

use crate::error::{CliError, Result};
use crate::log::SCHEMA_VERSION;

/// A trained novice with enough context to roll it out again.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Checkpoint {
    pub schema_version: u64,
    pub config_hash: String,
    pub seed: u64,
    pub round: u32,
    pub novice: NoviceConfig,
    pub net: EpsNet,
}

impl Checkpoint {
    pub fn policy(&self) -> Result<NovicePolicy> {
        Ok(NovicePolicy::new(self.net.clone(), self.novice.clone())?)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let text = serde_json::to_string(self)?;
        std::fs::write(path, text).map_err(|e| CliError::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| CliError::io(path, e))?;
        let raw: serde_json::Value = serde_json::from_str(&text)?;
        let found = raw.get("schema_version").and_then(serde_json::Value::as_u64).unwrap_or(0);
        if found != SCHEMA_VERSION {
            return Err(CliError::SchemaVersionMismatch {
                found,
                expected: SCHEMA_VERSION,
            });
        }
        let ck: Self = serde_json::from_value(raw)?;
        if ck.net.params.len() != ck.novice.dims().param_count() {
            return Err(CliError::Config("checkpoint parameters do not fit its network shape".into()));
        }
        Ok(ck)
    }
}
