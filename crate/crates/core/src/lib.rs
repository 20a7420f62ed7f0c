//! Deterministic compiler and verification toolkit for modality-interleaved
//! audio-language training data.
//!
//! The crate turns annotated spoken-dialogue corpora (line-delimited JSON)
//! into training sequences for a two-part speech model: a text-producing
//! backbone ("thinker") and a speech-token generator ("talker"). Around the
//! compilers sit the pieces needed to trust the output:
//!
//! - [`corpus`]: data model, JSONL ingest, validation, frame/token arithmetic
//! - [`caption`]: acoustic caption taxonomy, rendering and inverse parsing
//! - [`templates`]: slot-grammar prompt variants and the only-yes probe set
//! - [`thinker`]: sentence-level modality interleaving and loss targets
//! - [`talker`]: reference wrapping, role blocks, streaming text/speech merge
//! - [`cleaning`]: three-branch cleaning with pluggable corrector/TTS clients
//! - [`schedule`]: staged freeze/unfreeze plan, learning rates, budgets
//! - [`loss`]: masked CE, temperature-scaled KL distillation, gradient checks
//! - [`metrics`]: CER/WER, only-yes accuracy, cosine, ablation gaps
//! - [`cli`]: the `forge` command surface and run manifests
//!
//! All randomness is derived from a single 64-bit master seed through
//! per-record seeds, so outputs do not depend on worker count.

// `!(x >= 0.0)` is used on purpose so NaN fails range checks.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod caption;
pub mod cleaning;
pub mod cli;
pub mod corpus;
pub mod generator;
pub mod loss;
pub mod metrics;
pub mod schedule;
pub mod seed;
pub mod talker;
pub mod templates;
pub mod thinker;

mod error;

pub use error::{Error, Result};

/// Tool version recorded in every run manifest.
pub const VERSION: &str = env!("CARGO_PKG_VERSION");
