//! Second-stage reranking of first-stage candidates.

use std::collections::HashSet;

use crate::backend::BackendError;
use crate::index::RetrievalResult;
use crate::text::lexical_tokens;

/// Chunks kept after reranking.
pub const DEFAULT_K: usize = 10;

/// Joint query/candidate relevance scorer. Higher is more relevant.
pub trait RerankScorer: Send + Sync {
    fn score(&self, query: &str, text: &str) -> Result<f64, BackendError>;

    /// One result per text; remote scorers override this to batch.
    fn score_batch(&self, query: &str, texts: &[&str]) -> Vec<Result<f64, BackendError>> {
        texts.iter().map(|t| self.score(query, t)).collect()
    }
}

/// Offline stand-in for a cross-encoder: the fraction of distinct query
/// tokens that also occur in the candidate.
#[derive(Debug, Clone, Copy, Default)]
pub struct LexicalScorer;

impl RerankScorer for LexicalScorer {
    fn score(&self, query: &str, text: &str) -> Result<f64, BackendError> {
        let q: HashSet<String> = lexical_tokens(query).collect();
        if q.is_empty() {
            return Ok(0.0);
        }
        let t: HashSet<String> = lexical_tokens(text).collect();
        Ok(q.intersection(&t).count() as f64 / q.len() as f64)
    }
}

/// Reranks `results` (already in retrieval order) and keeps the best `k`.
///
/// Sorting is by rerank score descending with ties resolved by the original
/// retrieval rank. Candidates whose text cannot be found, or whose scoring
/// fails, are dropped with a warning. Output ranks restart at 1; first-stage
/// scores are kept in `score`.
pub fn rerank_topk<'a, F>(
    results: &[RetrievalResult],
    text_of: F,
    scorer: &dyn RerankScorer,
    query: &str,
    k: usize,
) -> Vec<RetrievalResult>
where
    F: Fn(&str) -> Option<&'a str>,
{
    let mut ordered: Vec<&RetrievalResult> = results.iter().collect();
    ordered.sort_by_key(|r| r.rank);
    let mut with_text = Vec::with_capacity(ordered.len());
    for r in ordered {
        match text_of(&r.unit_id) {
            Some(t) => with_text.push((r, t)),
            None => log::warn!("rerank: no text for {}, dropped", r.unit_id),
        }
    }
    let texts: Vec<&str> = with_text.iter().map(|(_, t)| *t).collect();
    let scores = scorer.score_batch(query, &texts);
    let mut scored: Vec<(f64, &RetrievalResult)> = Vec::with_capacity(scores.len());
    for ((r, _), s) in with_text.into_iter().zip(scores) {
        match s {
            Ok(v) if v.is_finite() => scored.push((v, r)),
            Ok(v) => log::warn!("rerank: non-finite score {v} for {}, dropped", r.unit_id),
            Err(e) => log::warn!("rerank: scoring {} failed, dropped: {e}", r.unit_id),
        }
    }
    // stable sort keeps retrieval order among equal scores
    scored.sort_by(|a, b| b.0.total_cmp(&a.0));
    scored
        .into_iter()
        .take(k)
        .enumerate()
        .map(|(i, (s, r))| RetrievalResult {
            unit_id: r.unit_id.clone(),
            score: r.score,
            rank: i + 1,
            rerank_score: Some(s),
        })
        .collect()
}
