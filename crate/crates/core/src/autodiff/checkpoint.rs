//! `hetvae-ckpt-v1` checkpoint documents.
//!
//! A checkpoint is one JSON object: the format tag, the optimizer step, every
//! parameter as `{shape, values}`, the Adam moments, and whatever metadata the
//! owning model flattens in beside them.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::autodiff::params::{Moments, ParameterStore};
use crate::error::{Error, Result};
use crate::tensor::Tensor;

pub const CHECKPOINT_FORMAT: &str = "hetvae-ckpt-v1";

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Checkpoint<M> {
    pub format: String,
    pub step: u64,
    pub parameters: BTreeMap<String, Tensor>,
    pub optimizer: BTreeMap<String, Moments>,
    #[serde(flatten)]
    pub metadata: M,
}

impl<M> Checkpoint<M> {
    pub fn new(store: &ParameterStore, metadata: M) -> Self {
        Self {
            format: CHECKPOINT_FORMAT.to_string(),
            step: store.step(),
            parameters: store.values().clone(),
            optimizer: store.all_moments().clone(),
            metadata,
        }
    }

    pub fn into_store(self) -> Result<(ParameterStore, M)> {
        if self.format != CHECKPOINT_FORMAT {
            return Err(Error::Checkpoint(format!(
                "unsupported format `{}`, expected `{CHECKPOINT_FORMAT}`",
                self.format
            )));
        }
        let store = ParameterStore::from_parts(self.parameters, self.optimizer, self.step)?;
        Ok((store, self.metadata))
    }
}

impl<M: Serialize> Checkpoint<M> {
    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string(self)?)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        fs::write(path, self.to_json()?).map_err(|e| Error::io(path, e))
    }
}

impl<M: DeserializeOwned> Checkpoint<M> {
    pub fn from_json(text: &str) -> Result<Self> {
        Ok(serde_json::from_str(text)?)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_json(&text)
    }
}
