//! Variational selective autoencoder for partially-observed heterogeneous
//! tabular data.
//!
//! Each attribute gets its own latent block. Observed attributes are encoded by
//! a per-attribute network, unobserved ones by a shared network that sees every
//! observed value plus the mask. The concatenated latents are decoded into the
//! mask and into every attribute, and training alternates between filling in
//! unobserved attributes with the current model and maximizing the bound.

pub mod autodiff;
pub mod data;
pub mod dist;
pub mod error;
pub mod eval;
pub mod harness;
pub mod mask;
pub mod model;
pub mod tensor;

pub use error::{Error, Result};
pub use tensor::Tensor;
