//! Document paraphrase generation guided by sentence-coherence graphs.
//!
//! The pipeline: raw text is segmented into short multi-sentence documents,
//! a pseudo parallel corpus is built by noising each sentence, a coherence
//! graph over the sentences is derived from a sentence-order scorer, and a
//! seq2seq model (per-sentence transformer encoder, bidirectional graph GRU,
//! copy-mechanism decoder) learns to reconstruct the original document from
//! the unordered sentence set. Decoded outputs are scored with document-level
//! diversity metrics (self-BLEU / self-TER / self-WER) and coherence metrics.
//!
//! Everything runs on an in-crate f64 autodiff tape ([`tensor`]); no external
//! ML runtime is involved.

pub mod coherence;
pub mod decoding;
pub mod diagnostics;
pub mod error;
pub mod metrics;
pub mod model;
pub mod tensor;
pub mod text;
pub mod train;

pub use error::{Error, Result};
