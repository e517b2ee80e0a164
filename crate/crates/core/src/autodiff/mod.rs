//! Tensors on a tape, MLPs, Adam and checkpoints: the numeric substrate.

pub mod checkpoint;
pub mod gradcheck;
pub mod mlp;
pub mod params;
pub mod tape;

pub use checkpoint::{Checkpoint, CHECKPOINT_FORMAT};
pub use gradcheck::{grad_check, DEFAULT_STEP};
pub use mlp::{build_mlp, Activation, Mlp, MlpSpec, OutputActivation};
pub use params::{AdamConfig, Bound, GradientMap, Moments, ParameterStore};
pub use tape::{Gradients, OpKind, Tape, Var};
