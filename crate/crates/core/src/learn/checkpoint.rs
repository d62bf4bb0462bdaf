//! Versioned policy checkpoints: config hash, step count, and every
//! parameter as a named flat array.

use serde::{Deserialize, Serialize};
use std::fs;
use std::io::Write;
use std::path::Path;

use super::nn::ParamStore;

pub const CHECKPOINT_VERSION: u32 = 1;

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct CheckpointParam {
    pub name: String,
    pub rows: usize,
    pub cols: usize,
    pub data: Vec<f64>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Checkpoint {
    pub version: u32,
    pub config_hash: String,
    pub step_count: u64,
    pub params: Vec<CheckpointParam>,
}

#[derive(Debug, thiserror::Error)]
pub enum CheckpointError {
    #[error("checkpoint io: {0}")]
    Io(#[from] std::io::Error),
    #[error("checkpoint parse: {0}")]
    Json(#[from] serde_json::Error),
    #[error("checkpoint version {found} unsupported (expected {CHECKPOINT_VERSION})")]
    Version { found: u32 },
    #[error("checkpoint was trained under config {found}, expected {expected}")]
    ConfigMismatch { found: String, expected: String },
    #[error("{0}")]
    Param(String),
}

impl Checkpoint {
    pub fn from_store(store: &ParamStore, config_hash: &str, step_count: u64) -> Checkpoint {
        let params = store
            .export()
            .into_iter()
            .map(|(name, rows, cols, data)| CheckpointParam { name, rows, cols, data })
            .collect();
        Checkpoint {
            version: CHECKPOINT_VERSION,
            config_hash: config_hash.to_string(),
            step_count,
            params,
        }
    }

    pub fn from_json_str(s: &str) -> Result<Checkpoint, CheckpointError> {
        let ck: Checkpoint = serde_json::from_str(s)?;
        if ck.version != CHECKPOINT_VERSION {
            return Err(CheckpointError::Version { found: ck.version });
        }
        Ok(ck)
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("checkpoint serializes")
    }

    pub fn verify_config(&self, expected_hash: &str) -> Result<(), CheckpointError> {
        if self.config_hash != expected_hash {
            return Err(CheckpointError::ConfigMismatch {
                found: self.config_hash.clone(),
                expected: expected_hash.to_string(),
            });
        }
        Ok(())
    }

    /// Loads the stored values into a store laid out by the same
    /// network constructor.
    pub fn apply(&self, store: &mut ParamStore) -> Result<(), CheckpointError> {
        let entries: Vec<(String, usize, usize, Vec<f64>)> = self
            .params
            .iter()
            .map(|p| (p.name.clone(), p.rows, p.cols, p.data.clone()))
            .collect();
        store.import(&entries).map_err(CheckpointError::Param)
    }
}

/// Writes atomically: temp file in the same directory, then rename.
pub fn save_checkpoint(
    path: &Path,
    store: &ParamStore,
    config_hash: &str,
    step_count: u64,
) -> Result<(), CheckpointError> {
    let ck = Checkpoint::from_store(store, config_hash, step_count);
    let tmp = path.with_extension("tmp");
    {
        let mut f = fs::File::create(&tmp)?;
        f.write_all(ck.to_json().as_bytes())?;
        f.write_all(b"\n")?;
        f.sync_all()?;
    }
    fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_checkpoint(path: &Path) -> Result<Checkpoint, CheckpointError> {
    let text = fs::read_to_string(path)?;
    Checkpoint::from_json_str(&text)
}
