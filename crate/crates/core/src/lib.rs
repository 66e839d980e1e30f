//! Subword-aware word-level neural language modeling.
//!
//! The crate is `no_std` (it needs `alloc`) and carries every numerical and
//! algorithmic piece of the toolkit:
//!
//! - [`compute`]: dense tensors recorded on a [`compute::Graph`] with exact
//!   reverse-mode gradients.
//! - [`segment`]: Liang hyphenation over TeX patterns, character splitting
//!   and externally supplied segmentations.
//! - [`vocab`]: word and subword vocabularies, corpus encoding and
//!   truncated-BPTT batch streaming.
//! - [`compose`]: the word-embedding composition models (LSTM, CNN,
//!   sum/average/attention, concatenation, direct word embedding).
//! - [`lm`]: the two-layer word-level LSTM with full or sampled softmax.
//! - [`model`], [`train`], [`search`]: the end-to-end model, the SGD
//!   recipe with validation-driven learning-rate halving, and random
//!   hyperparameter search under a parameter budget.
//! - [`analysis`]: shared-error rates, perplexity by token frequency and
//!   PCA component counts.
//!
//! File formats, the command-line front end and anything touching the OS live
//! in the companion `sublm` crate.
#![cfg_attr(not(test), no_std)]
#![forbid(unsafe_code)]

extern crate alloc;

pub mod analysis;
pub mod compose;
pub mod compute;
pub mod error;
pub mod lm;
pub mod model;
pub mod search;
pub mod segment;
pub mod train;
pub mod vocab;

pub use error::{Error, Result};
