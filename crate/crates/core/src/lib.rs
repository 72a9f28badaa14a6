//! A small laboratory for the competition between in-context and in-weight learning.
//!
//! A gated model `f = alpha * g + (1 - alpha) * h` mixes a tabular in-weight predictor
//! `g` with a kernel-softmax in-context predictor `h`. The gate is learned online by
//! exponentiated gradient on the linear loss `alpha * (loss_g - loss_h)`, and every
//! training run keeps a regret ledger from which the regret decompositions can be
//! checked exactly.

pub mod bounds;
pub mod datagen;
pub mod error;
pub mod example;
pub mod gating;
pub mod harness;
pub mod plot;
pub mod predictors;
pub mod rng;
pub mod simplex;

pub use error::{Error, Result};
pub use example::{ExampleSequence, LabeledPair};
pub use rng::RngSpec;
pub use simplex::{cross_entropy, l1_distance, zero_one, SimplexVector};
