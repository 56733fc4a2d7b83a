//! Dense and multi-vector embeddings, encoder contracts and mock encoders.

mod loss;
mod mining;
mod mock;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::backend::BackendError;
use crate::scalar::{l2_norm, normalize_in_place, Scalar};
use crate::visualpatch::VisualInput;

pub use loss::{mnr_loss, DEFAULT_MNR_SCALE};
pub use mining::{mine_pairs, parse_pairs, write_pairs, AnchorPositive, Candidate, DEFAULT_MINING_THRESHOLD};
pub use mock::{MockDenseEncoder, MockMultiEncoder, MOCK_DENSE_DIM};

/// Column count of the visual encoder's token embeddings.
pub const MULTI_VECTOR_WIDTH: usize = 768;
/// Row cap of a multi-vector embedding.
pub const MAX_MULTI_ROWS: usize = 2048;

#[derive(Debug, Error, PartialEq)]
pub enum EmbeddingError {
    #[error("embedding contains a non-finite value")]
    NonFinite,
    #[error("embedding is empty")]
    Empty,
    #[error("zero vector cannot be normalized")]
    ZeroNorm,
    #[error("matrix data has {len} values, expected {rows}×{cols}")]
    Shape { rows: usize, cols: usize, len: usize },
    #[error("dimension mismatch: {left} vs {right}")]
    DimensionMismatch { left: usize, right: usize },
    #[error("batch length mismatch: {queries} queries vs {positives} positives")]
    BatchMismatch { queries: usize, positives: usize },
}

/// A single fixed-width vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Embedding<S>(Vec<S>);

impl<S: Scalar> Embedding<S> {
    pub fn new(values: Vec<S>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::Empty);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        Ok(Self(values))
    }

    /// Builds a unit-norm embedding.
    pub fn normalized(mut values: Vec<S>) -> Result<Self, EmbeddingError> {
        if values.is_empty() {
            return Err(EmbeddingError::Empty);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        if !normalize_in_place(&mut values) {
            return Err(EmbeddingError::ZeroNorm);
        }
        Ok(Self(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[S] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<S> {
        self.0
    }

    pub fn norm(&self) -> S {
        l2_norm(&self.0)
    }

    pub fn cosine(&self, other: &Self) -> Result<S, EmbeddingError> {
        if self.dim() != other.dim() {
            return Err(EmbeddingError::DimensionMismatch {
                left: self.dim(),
                right: other.dim(),
            });
        }
        Ok(crate::scalar::cosine(&self.0, &other.0))
    }
}

/// Row-major `rows × cols` matrix of token embeddings.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultiVector<S> {
    rows: usize,
    cols: usize,
    data: Vec<S>,
}

impl<S: Scalar> MultiVector<S> {
    pub fn new(rows: usize, cols: usize, data: Vec<S>) -> Result<Self, EmbeddingError> {
        if rows == 0 || cols == 0 {
            return Err(EmbeddingError::Empty);
        }
        if data.len() != rows * cols {
            return Err(EmbeddingError::Shape {
                rows,
                cols,
                len: data.len(),
            });
        }
        if data.iter().any(|v| !v.is_finite()) {
            return Err(EmbeddingError::NonFinite);
        }
        Ok(Self { rows, cols, data })
    }

    pub fn from_rows(rows: Vec<Vec<S>>) -> Result<Self, EmbeddingError> {
        let cols = rows.first().map_or(0, Vec::len);
        if let Some(bad) = rows.iter().find(|r| r.len() != cols) {
            return Err(EmbeddingError::DimensionMismatch {
                left: cols,
                right: bad.len(),
            });
        }
        let n = rows.len();
        Self::new(n, cols, rows.into_iter().flatten().collect())
    }

    /// Scales every row to unit norm; zero rows are rejected.
    pub fn normalize_rows(mut self) -> Result<Self, EmbeddingError> {
        for r in self.data.chunks_mut(self.cols) {
            if !normalize_in_place(r) {
                return Err(EmbeddingError::ZeroNorm);
            }
        }
        Ok(self)
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn row(&self, i: usize) -> &[S] {
        &self.data[i * self.cols..(i + 1) * self.cols]
    }

    pub fn iter_rows(&self) -> std::slice::ChunksExact<'_, S> {
        self.data.chunks_exact(self.cols)
    }

    pub fn as_slice(&self) -> &[S] {
        &self.data
    }
}

/// Text encoder producing one vector per input. Queries and chunks go
/// through the same instance.
pub trait DenseEncoder: Send + Sync {
    fn dim(&self) -> usize;

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding<f32>>, BackendError>;

    fn embed(&self, text: &str) -> Result<Embedding<f32>, BackendError> {
        self.embed_batch(&[text])?
            .pop()
            .ok_or_else(|| BackendError::InvalidInput("encoder returned no vector".into()))
    }
}

/// Visual encoder producing token-level embeddings for image regions and
/// rendered query text.
pub trait MultiVectorEncoder: Send + Sync {
    fn width(&self) -> usize;

    fn embed_multi_batch(&self, inputs: &[VisualInput]) -> Result<Vec<MultiVector<f32>>, BackendError>;

    fn embed_multi(&self, input: &VisualInput) -> Result<MultiVector<f32>, BackendError> {
        self.embed_multi_batch(std::slice::from_ref(input))?
            .pop()
            .ok_or_else(|| BackendError::InvalidInput("encoder returned no matrix".into()))
    }
}
