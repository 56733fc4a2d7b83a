use std::collections::HashMap;

use rayon::prelude::*;

use super::{top_k, IndexError, RetrievalResult};
use crate::encode::Embedding;
use crate::scalar::{dot, l2_norm, Scalar};

/// Candidate depth of the first retrieval stage.
pub const DEFAULT_K_PRIME: usize = 20;

const UNIT_NORM_TOLERANCE: f64 = 1e-4;

/// Exhaustive single-vector index. Vectors are unit-norm; each entry carries
/// an opaque payload (JSON metadata in practice).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseIndex<S> {
    dim: usize,
    ids: Vec<String>,
    data: Vec<S>,
    norms: Vec<S>,
    payloads: Vec<String>,
    by_id: HashMap<String, usize>,
}

impl<S: Scalar> DenseIndex<S> {
    pub fn new(dim: usize) -> Self {
        Self {
            dim,
            ids: Vec::new(),
            data: Vec::new(),
            norms: Vec::new(),
            payloads: Vec::new(),
            by_id: HashMap::new(),
        }
    }

    pub fn add(&mut self, id: &str, embedding: &Embedding<S>, payload: String) -> Result<(), IndexError> {
        if embedding.dim() != self.dim {
            return Err(IndexError::DimensionMismatch {
                expected: self.dim,
                got: embedding.dim(),
            });
        }
        let norm = l2_norm(embedding.as_slice());
        if (norm.as_f64() - 1.0).abs() > UNIT_NORM_TOLERANCE {
            return Err(IndexError::NotUnitNorm {
                id: id.to_string(),
                norm: norm.as_f64(),
            });
        }
        if self.by_id.contains_key(id) {
            return Err(IndexError::DuplicateId(id.to_string()));
        }
        self.by_id.insert(id.to_string(), self.ids.len());
        self.ids.push(id.to_string());
        self.data.extend_from_slice(embedding.as_slice());
        self.norms.push(norm);
        self.payloads.push(payload);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn id(&self, i: usize) -> &str {
        &self.ids[i]
    }

    pub fn payload(&self, i: usize) -> &str {
        &self.payloads[i]
    }

    pub fn vector(&self, i: usize) -> &[S] {
        &self.data[i * self.dim..(i + 1) * self.dim]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }
}

/// Top-`k_prime` entries by exact cosine similarity; ties go to the
/// lexicographically smaller id.
pub fn search_dense<S: Scalar>(
    index: &DenseIndex<S>,
    query: &Embedding<S>,
    k_prime: usize,
) -> Result<Vec<RetrievalResult>, IndexError> {
    search_dense_where(index, query, k_prime, |_| true)
}

/// [`search_dense`] restricted to entries whose position passes `keep`.
pub fn search_dense_where<S: Scalar>(
    index: &DenseIndex<S>,
    query: &Embedding<S>,
    k_prime: usize,
    keep: impl Fn(usize) -> bool + Sync,
) -> Result<Vec<RetrievalResult>, IndexError> {
    if query.dim() != index.dim {
        return Err(IndexError::DimensionMismatch {
            expected: index.dim,
            got: query.dim(),
        });
    }
    let q = query.as_slice();
    let qn = l2_norm(q);
    let scored: Vec<(S, &str)> = (0..index.len())
        .into_par_iter()
        .filter(|&i| keep(i))
        .map(|i| {
            let denom = qn * index.norms[i];
            let s = if denom == S::zero() {
                S::zero()
            } else {
                dot(q, index.vector(i)) / denom
            };
            (s, index.ids[i].as_str())
        })
        .collect();
    Ok(top_k(scored, k_prime))
}
