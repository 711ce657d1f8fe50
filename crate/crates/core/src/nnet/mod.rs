//! Reverse-mode autodiff over row-major frame matrices.
//!
//! A minibatch is a stack of sequences: rows are frames, and each op that
//! looks across time (splicing) receives the sequence lengths so context
//! never leaks between sequences.

mod adam;
mod gradcheck;
mod layers;
mod params;
mod tape;

pub use adam::{Adam, AdamConfig};
pub use gradcheck::{grad_check, GradCheckReport};
pub use layers::{apply_bn_updates, Affine, NormAffine, TdnnLayer, BN_EPS, BN_MOMENTUM};
pub use params::ParamStore;
pub use tape::{BnUpdate, Gradients, Tape, Var};
