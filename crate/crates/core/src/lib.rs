//! Evidence selection and evaluation for multi-page document VQA.
//!
//! Documents are split into textual chunks (sliding windows over OCR tokens)
//! or visual patches (overlapping horizontal bands), indexed with dense or
//! multi-vector embeddings, retrieved, reranked and handed to a generator.
//! The crate also computes the answer and retrieval metrics used to evaluate
//! such pipelines.
//!
//! Numeric kernels are generic over [`scalar::Scalar`]; the aliases below fix
//! the `f32` instantiation used by encoders and the on-disk index.

pub mod backend;
pub mod chunking;
pub mod config;
pub mod corpus;
pub mod encode;
pub mod generator;
pub mod index;
pub mod layout;
pub mod metrics;
pub mod pipeline;
pub mod remote;
pub mod rerank;
pub mod scalar;
pub mod synth;
pub mod text;
pub mod visualpatch;

pub use scalar::Scalar;

pub type DenseEmbedding = encode::Embedding<f32>;
pub type MultiVectorEmbedding = encode::MultiVector<f32>;
pub type DenseIndex = index::DenseIndex<f32>;
pub type MultiVectorIndex = index::MultiVectorIndex<f32>;
pub type WeightMatrix = layout::WeightMatrix<f64>;
