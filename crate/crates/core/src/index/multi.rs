use std::collections::HashMap;

use rayon::prelude::*;

use super::{top_k, IndexError, RetrievalResult};
use crate::encode::MultiVector;
use crate::scalar::{dot, Scalar};

/// Patches retrieved by the visual path.
pub const DEFAULT_K_VISUAL: usize = 5;

/// Late-interaction score: for every query row, the best dot product with
/// any candidate row, summed over query rows.
pub fn maxsim_score<S: Scalar>(query: &MultiVector<S>, candidate: &MultiVector<S>) -> Result<S, IndexError> {
    if query.cols() != candidate.cols() {
        return Err(IndexError::DimensionMismatch {
            expected: candidate.cols(),
            got: query.cols(),
        });
    }
    Ok(query
        .iter_rows()
        .map(|q| candidate.iter_rows().map(|p| dot(q, p)).fold(S::neg_infinity(), S::max))
        .sum())
}

/// Exhaustive multi-vector index.
#[derive(Debug, Clone, PartialEq)]
pub struct MultiVectorIndex<S> {
    cols: usize,
    ids: Vec<String>,
    entries: Vec<MultiVector<S>>,
    payloads: Vec<String>,
    by_id: HashMap<String, usize>,
}

impl<S: Scalar> MultiVectorIndex<S> {
    pub fn new(cols: usize) -> Self {
        Self {
            cols,
            ids: Vec::new(),
            entries: Vec::new(),
            payloads: Vec::new(),
            by_id: HashMap::new(),
        }
    }

    pub fn add(&mut self, id: &str, embedding: MultiVector<S>, payload: String) -> Result<(), IndexError> {
        if embedding.cols() != self.cols {
            return Err(IndexError::DimensionMismatch {
                expected: self.cols,
                got: embedding.cols(),
            });
        }
        if self.by_id.contains_key(id) {
            return Err(IndexError::DuplicateId(id.to_string()));
        }
        self.by_id.insert(id.to_string(), self.ids.len());
        self.ids.push(id.to_string());
        self.entries.push(embedding);
        self.payloads.push(payload);
        Ok(())
    }

    pub fn cols(&self) -> usize {
        self.cols
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

    pub fn entry(&self, i: usize) -> &MultiVector<S> {
        &self.entries[i]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.by_id.get(id).copied()
    }
}

/// Top-`k` entries by MaxSim; ties go to the smaller id.
pub fn search_late_interaction<S: Scalar>(
    index: &MultiVectorIndex<S>,
    query: &MultiVector<S>,
    k: usize,
) -> Result<Vec<RetrievalResult>, IndexError> {
    search_late_interaction_where(index, query, k, |_| true)
}

pub fn search_late_interaction_where<S: Scalar>(
    index: &MultiVectorIndex<S>,
    query: &MultiVector<S>,
    k: usize,
    keep: impl Fn(usize) -> bool + Sync,
) -> Result<Vec<RetrievalResult>, IndexError> {
    if index.is_empty() {
        return Ok(Vec::new());
    }
    if query.cols() != index.cols {
        return Err(IndexError::DimensionMismatch {
            expected: index.cols,
            got: query.cols(),
        });
    }
    let scored = (0..index.len())
        .into_par_iter()
        .filter(|&i| keep(i))
        .map(|i| maxsim_score(query, &index.entries[i]).map(|s| (s, index.ids[i].as_str())))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(top_k(scored, k))
}
