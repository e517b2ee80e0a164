use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::autodiff::Activation;
use crate::error::{Error, Result};

/// Model variants compared in ablations.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(try_from = "String", into = "String")]
pub enum Variant {
    #[default]
    Full,
    /// Every latent comes from the collective encoder.
    CollectiveOnly,
    /// Every latent comes from its attributive encoder, noise fills included.
    AttributiveOnly,
    /// No mask likelihood; decoders are conditioned on the input mask.
    NoMask,
    /// No unobserved-attribute term and no E-step.
    NoEm,
    /// Full model with the E-step sample count overridden.
    EmSamples(usize),
}

impl Variant {
    pub fn all_default() -> [Variant; 6] {
        [
            Variant::Full,
            Variant::CollectiveOnly,
            Variant::AttributiveOnly,
            Variant::NoMask,
            Variant::NoEm,
            Variant::EmSamples(1),
        ]
    }

    pub fn models_mask(self) -> bool {
        self != Variant::NoMask
    }

    pub fn uses_em(self) -> bool {
        self != Variant::NoEm
    }
}

impl fmt::Display for Variant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Variant::Full => f.write_str("full"),
            Variant::CollectiveOnly => f.write_str("collective-only"),
            Variant::AttributiveOnly => f.write_str("attributive-only"),
            Variant::NoMask => f.write_str("no-mask"),
            Variant::NoEm => f.write_str("no-em"),
            Variant::EmSamples(s) => write!(f, "em-s={s}"),
        }
    }
}

impl FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "full" => Variant::Full,
            "collective-only" => Variant::CollectiveOnly,
            "attributive-only" => Variant::AttributiveOnly,
            "no-mask" => Variant::NoMask,
            "no-em" => Variant::NoEm,
            _ => match s.strip_prefix("em-s=").map(str::parse::<usize>) {
                Some(Ok(n)) if n >= 1 => Variant::EmSamples(n),
                _ => {
                    return Err(Error::Config(format!(
                        "unknown variant `{s}` (expected full, collective-only, attributive-only, no-mask, no-em or em-s=<S>)"
                    )))
                }
            },
        })
    }
}

impl TryFrom<String> for Variant {
    type Error = Error;
    fn try_from(s: String) -> Result<Self> {
        s.parse()
    }
}

impl From<Variant> for String {
    fn from(v: Variant) -> Self {
        v.to_string()
    }
}

/// Where the E-step draws latents of unobserved attributes from.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EStepLatents {
    #[default]
    Prior,
    Collective,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct VsaeConfig {
    /// Latent dimension `d` per attribute.
    pub latent_dim: usize,
    pub encoder_hidden: Vec<usize>,
    pub decoder_hidden: Vec<usize>,
    pub mask_decoder_hidden: Vec<usize>,
    pub hidden_activation: Activation,
    /// Completions drawn per E-step (`S`).
    pub em_samples: usize,
    /// Reparameterized draws per ELBO evaluation.
    pub mc_samples: usize,
    /// Variance of the fixed-variance Gaussian behind the squared error.
    pub numerical_variance: f64,
    pub estep_latents: EStepLatents,
    /// Draw fresh noise for unobserved cells of every training batch.
    pub refill_noise: bool,
    pub learning_rate: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub seed: u64,
    pub variant: Variant,
}

impl Default for VsaeConfig {
    fn default() -> Self {
        Self {
            latent_dim: 4,
            encoder_hidden: vec![64, 64],
            decoder_hidden: vec![64, 64],
            mask_decoder_hidden: vec![32],
            hidden_activation: Activation::Tanh,
            em_samples: 100,
            mc_samples: 1,
            numerical_variance: 1e-3,
            estep_latents: EStepLatents::Prior,
            refill_noise: true,
            learning_rate: 1e-3,
            batch_size: 64,
            max_epochs: 500,
            patience: 20,
            seed: 0,
            variant: Variant::Full,
        }
    }
}

impl VsaeConfig {
    pub fn validate(&self) -> Result<()> {
        let fail = |m: &str| Err(Error::Config(m.to_string()));
        if self.latent_dim == 0 {
            return fail("latent_dim must be >= 1");
        }
        if self.em_samples == 0 || self.mc_samples == 0 {
            return fail("em_samples and mc_samples must be >= 1");
        }
        if self.batch_size == 0 {
            return fail("batch_size must be >= 1");
        }
        if !(self.numerical_variance > 0.0 && self.numerical_variance.is_finite()) {
            return fail("numerical_variance must be a positive finite number");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return fail("learning_rate must be a positive finite number");
        }
        if self
            .encoder_hidden
            .iter()
            .chain(&self.decoder_hidden)
            .chain(&self.mask_decoder_hidden)
            .any(|&w| w == 0)
        {
            return fail("hidden widths must be >= 1");
        }
        Ok(())
    }

    /// E-step sample count after applying an `em-s=<S>` variant.
    pub fn effective_em_samples(&self) -> usize {
        match self.variant {
            Variant::EmSamples(s) => s,
            _ => self.em_samples,
        }
    }
}
