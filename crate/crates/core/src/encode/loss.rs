use super::{Embedding, EmbeddingError};
use crate::scalar::Scalar;

pub const DEFAULT_MNR_SCALE: f64 = 20.0;

/// Multiple-negatives-ranking loss value over an in-batch similarity matrix:
/// row `i` is a softmax over `scale·cos(q_i, c_j)` whose target is `j = i`.
/// Only the scalar is returned.
pub fn mnr_loss<S: Scalar>(
    queries: &[Embedding<S>],
    positives: &[Embedding<S>],
    scale: S,
) -> Result<S, EmbeddingError> {
    if queries.len() != positives.len() || queries.is_empty() {
        return Err(EmbeddingError::BatchMismatch {
            queries: queries.len(),
            positives: positives.len(),
        });
    }
    let mut total = S::zero();
    for (i, q) in queries.iter().enumerate() {
        let logits = positives
            .iter()
            .map(|c| q.cosine(c).map(|s| s * scale))
            .collect::<Result<Vec<S>, _>>()?;
        let max = logits.iter().copied().fold(S::neg_infinity(), S::max);
        let lse = max + logits.iter().map(|&l| (l - max).exp()).sum::<S>().ln();
        total = total + (lse - logits[i]);
    }
    Ok(total / S::lit(queries.len() as f64))
}
