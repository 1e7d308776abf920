//! Video representation learning supervised by web metadata.
//!
//! A small trainable video head is fit so that per-source affine projections
//! of its output rank each video's own (frozen, precomputed) title,
//! description, tag and channel embeddings above those of other videos under
//! a cosine-distance margin loss. Around that objective the crate provides the
//! corpus model and collection filters, corpus scaling statistics, token
//! pooling, an SGD/Nesterov trainer with warmup and cosine decay, and an
//! evaluation suite (retrieval, linear probe, source ablations, synthetic
//! data).

pub(crate) mod binio;
pub mod corpus;
pub mod dataset;
pub mod embedder;
pub mod error;
pub mod evalsuite;
pub mod exec;
pub mod features;
pub mod objective;
pub mod source;
pub mod stats;
pub mod textpool;
pub mod trainer;

pub use error::{Error, Result};
pub use exec::Exec;
pub use source::Source;
