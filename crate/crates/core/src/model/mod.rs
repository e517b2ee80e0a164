//! The variational selective autoencoder.
//!
//! [`VsaeNetwork`] holds the topology; parameters live in a separate
//! [`ParameterStore`] so the E-step can run against a frozen copy while the
//! gradient step records a fresh tape.

pub mod config;
pub mod elbo;
pub mod estep;
pub mod infer;
pub mod network;
pub mod train;

use std::path::Path;

use serde::{Deserialize, Serialize};

pub use config::{EStepLatents, Variant, VsaeConfig};
pub use elbo::{draw_elbo_noise, ElboTerms, ElboVars, UnobservedTargets};
pub use estep::Completions;
pub use network::{aggregate, select_proposals, LatentBundle, ParameterGroup, PosteriorVars, Proposal, VsaeNetwork};
pub use train::{write_history, EpochRecord, MaskedData, TrainOutcome};

use crate::autodiff::{Checkpoint, ParameterStore};
use crate::data::{DatasetSchema, NormalizationStats};
use crate::error::{Error, Result};
use crate::mask::MechanismSpec;

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct ModelMeta {
    pub config: VsaeConfig,
    pub schema: DatasetSchema,
    pub stats: NormalizationStats,
    pub mechanism: Option<MechanismSpec>,
    /// Free-form run metadata (achieved mask ratios, seeds, ...).
    #[serde(default)]
    pub run: serde_json::Value,
}

/// A network, its parameters, and everything needed to encode new data.
#[derive(Clone, Debug)]
pub struct TrainedModel {
    pub network: VsaeNetwork,
    pub store: ParameterStore,
    pub stats: NormalizationStats,
    pub mechanism: Option<MechanismSpec>,
    pub run: serde_json::Value,
}

impl TrainedModel {
    pub fn schema(&self) -> &DatasetSchema {
        &self.network.schema
    }

    pub fn config(&self) -> &VsaeConfig {
        &self.network.config
    }

    pub fn to_checkpoint(&self) -> Checkpoint<ModelMeta> {
        Checkpoint::new(
            &self.store,
            ModelMeta {
                config: self.network.config.clone(),
                schema: self.network.schema.clone(),
                stats: self.stats.clone(),
                mechanism: self.mechanism.clone(),
                run: self.run.clone(),
            },
        )
    }

    pub fn from_checkpoint(ckpt: Checkpoint<ModelMeta>) -> Result<Self> {
        let (store, meta) = ckpt.into_store()?;
        let network = VsaeNetwork::new(meta.schema, meta.config)?;
        let fresh = network.initialize(0);
        for (name, value) in fresh.iter() {
            let got = store
                .get(name)
                .map_err(|_| Error::Checkpoint(format!("missing parameter `{name}`")))?;
            if got.shape() != value.shape() {
                return Err(Error::Checkpoint(format!(
                    "parameter `{name}` has shape {:?}, expected {:?}",
                    got.shape(),
                    value.shape()
                )));
            }
        }
        if store.len() != fresh.len() {
            return Err(Error::Checkpoint(
                "checkpoint holds parameters the model does not use".into(),
            ));
        }
        Ok(Self {
            network,
            store,
            stats: meta.stats,
            mechanism: meta.mechanism,
            run: meta.run,
        })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.to_checkpoint().save(path)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_checkpoint(Checkpoint::load(path)?)
    }
}
