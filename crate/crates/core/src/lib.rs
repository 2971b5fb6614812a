//! Hybrid visual token pipeline core.
//!
//! Images are encoded along two granularities at once: a continuous patch-feature
//! sequence from a frozen encoder, and a short discrete codebook-index sequence
//! that shares one unified vocabulary with text. A learned patch selector prunes
//! the continuous sequence down to a keeping ratio before both granularities are
//! assembled into hybrid sequences for a small causal language model, trained in
//! four freeze/unfreeze stages.
//!
//! The crate is `no_std` (with `alloc`); everything is deterministic given a
//! single seed. File formats, checkpoints on disk, and the CLI live in the
//! companion `hvt-cli` crate.

#![cfg_attr(not(test), no_std)]

extern crate alloc;

pub mod assemble;
pub mod checksum;
pub mod codebook;
pub mod corpus;
pub mod encoder;
pub mod error;
pub mod gradcheck;
pub mod labels;
pub mod lm;
pub mod loss;
pub mod math;
pub mod model;
pub mod optim;
pub mod param;
pub mod rng;
pub mod selector;
pub mod tensor;
pub mod train;
pub mod vocab;

pub use error::CoreError;
pub use param::{Parameter, Parameterized};
pub use rng::SplitRng;
pub use tensor::Tensor;

/// Crate-wide result alias.
pub type Result<T> = core::result::Result<T, CoreError>;
