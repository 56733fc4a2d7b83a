//! Exact vector search: dense cosine top-k and late-interaction MaxSim,
//! plus the on-disk index format.

mod dense;
mod format;
mod multi;

use std::cmp::Ordering;
use std::path::PathBuf;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::scalar::Scalar;

pub use dense::{search_dense, search_dense_where, DenseIndex, DEFAULT_K_PRIME};
pub use format::{
    decode_index, encode_index, load_index, save_index, write_index, IndexKind, IndexRef, StoredIndex, FORMAT_VERSION,
    MAGIC,
};
pub use multi::{
    maxsim_score, search_late_interaction, search_late_interaction_where, MultiVectorIndex, DEFAULT_K_VISUAL,
};

#[derive(Debug, Error)]
pub enum IndexError {
    #[error("dimension mismatch: index has {expected}, got {got}")]
    DimensionMismatch { expected: usize, got: usize },
    #[error("vector for {id:?} is not unit-norm (norm {norm})")]
    NotUnitNorm { id: String, norm: f64 },
    #[error("duplicate unit id {0:?}")]
    DuplicateId(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("not a readable index file: {0}")]
    Format(String),
    #[error("corrupt index file at byte {offset}: {what}")]
    Corrupt { offset: u64, what: String },
}

/// One ranked retrieval unit (chunk or patch).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalResult {
    pub unit_id: String,
    pub score: f64,
    /// 1-based.
    pub rank: usize,
    pub rerank_score: Option<f64>,
}

/// Orders `(score, id)` pairs by descending score, then ascending id.
fn rank_order<S: Scalar>(a: &(S, &str), b: &(S, &str)) -> Ordering {
    b.0.partial_cmp(&a.0)
        .unwrap_or_else(|| a.0.is_nan().cmp(&b.0.is_nan()))
        .then_with(|| a.1.cmp(b.1))
}

/// Top-`k` of scored ids with deterministic tie-breaks, ranked from 1.
pub(crate) fn top_k<S: Scalar>(mut scored: Vec<(S, &str)>, k: usize) -> Vec<RetrievalResult> {
    if k == 0 {
        return Vec::new();
    }
    if scored.len() > k {
        scored.select_nth_unstable_by(k - 1, rank_order);
        scored.truncate(k);
    }
    scored.sort_by(rank_order);
    scored
        .into_iter()
        .enumerate()
        .map(|(i, (s, id))| RetrievalResult {
            unit_id: id.to_string(),
            score: s.as_f64(),
            rank: i + 1,
            rerank_score: None,
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_k_tie_break_by_id() {
        let scored = vec![(0.5f32, "b"), (0.9, "z"), (0.5, "a"), (0.1, "c")];
        let r = top_k(scored.clone(), 3);
        let ids: Vec<_> = r.iter().map(|r| r.unit_id.as_str()).collect();
        assert_eq!(ids, ["z", "a", "b"]);
        assert_eq!(r.iter().map(|r| r.rank).collect::<Vec<_>>(), [1, 2, 3]);
        assert_eq!(top_k(scored.clone(), 10).len(), 4);
        assert!(top_k(scored, 0).is_empty());
    }
}
