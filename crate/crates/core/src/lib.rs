//! Document-aware abstractive multi-document summarization.
//!
//! A transformer encoder-decoder whose input encoding carries, besides the
//! usual token positions, two document-level signals: a per-document
//! positional term fused into the embeddings, and a dependency-relation
//! matrix folded into encoder self-attention. Everything runs on a dense
//! f64 tensor type with a reverse-mode differentiation tape; no external
//! numerics backends.

pub mod corpus;
pub mod dependency;
pub mod encodings;
pub mod error;
pub mod evaluation;
pub mod model;
pub mod training;
pub mod numerics;
pub mod rng;
pub mod runconfig;

pub use error::{CoreError, Result};
pub use numerics::{grad_check, GradCheckReport, Tape, Tensor, Var};
