//! Deterministic, model-free encoders.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{DenseEncoder, Embedding, MultiVector, MultiVectorEncoder, MAX_MULTI_ROWS, MULTI_VECTOR_WIDTH};
use crate::backend::BackendError;
use crate::text::{fnv1a64, lexical_tokens};
use crate::visualpatch::{VisualInput, MINI_PATCH};

pub const MOCK_DENSE_DIM: usize = 64;

fn tokens_or_whole(text: &str) -> Result<Vec<String>, BackendError> {
    let toks: Vec<String> = lexical_tokens(text).collect();
    if !toks.is_empty() {
        return Ok(toks);
    }
    let t = text.trim();
    if t.is_empty() {
        return Err(BackendError::InvalidInput("empty text".into()));
    }
    Ok(vec![t.to_string()])
}

/// Bag-of-words hashing encoder: each lexical token adds one count to bucket
/// `fnv1a64(token) mod dim`; the counts are L2-normalized.
#[derive(Debug, Clone)]
pub struct MockDenseEncoder {
    dim: usize,
}

impl MockDenseEncoder {
    pub fn new(dim: usize) -> Self {
        assert!(dim > 0, "dimension must be positive");
        Self { dim }
    }

    pub fn bucket(&self, token: &str) -> usize {
        (fnv1a64(token.as_bytes()) % self.dim as u64) as usize
    }

    fn embed_one(&self, text: &str) -> Result<Embedding<f32>, BackendError> {
        let mut v = vec![0.0f32; self.dim];
        for t in tokens_or_whole(text)? {
            v[self.bucket(&t)] += 1.0;
        }
        Embedding::normalized(v).map_err(|e| BackendError::InvalidInput(e.to_string()))
    }
}

impl Default for MockDenseEncoder {
    fn default() -> Self {
        Self::new(MOCK_DENSE_DIM)
    }
}

impl DenseEncoder for MockDenseEncoder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding<f32>>, BackendError> {
        texts.iter().map(|t| self.embed_one(t)).collect()
    }
}

/// Multi-vector mock.
///
/// Image regions yield one row per cell of a 16-pixel grid aligned to the
/// page (cells double in size until at most 2048 remain); each row is a
/// pseudo-random unit vector seeded by the page locator and the cell's page
/// position, so overlapping patches share rows. Rendered text yields one row
/// per lexical token, seeded by the token.
#[derive(Debug, Clone)]
pub struct MockMultiEncoder {
    width: usize,
}

impl MockMultiEncoder {
    pub fn new(width: usize) -> Self {
        assert!(width > 0, "width must be positive");
        Self { width }
    }

    /// The row produced for a seed; exposed so tests can plant rows.
    pub fn seeded_row(&self, seed: u64) -> Vec<f32> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        loop {
            let mut v: Vec<f32> = (0..self.width).map(|_| rng.gen_range(-1.0f32..1.0)).collect();
            if crate::scalar::normalize_in_place(&mut v) {
                return v;
            }
        }
    }

    pub fn token_seed(token: &str) -> u64 {
        fnv1a64(format!("tok:{token}").as_bytes())
    }

    fn embed_one(&self, input: &VisualInput) -> Result<MultiVector<f32>, BackendError> {
        let rows: Vec<Vec<f32>> = match input {
            VisualInput::RenderedText { text, .. } => tokens_or_whole(text)?
                .iter()
                .take(MAX_MULTI_ROWS)
                .map(|t| self.seeded_row(Self::token_seed(t)))
                .collect(),
            VisualInput::ImageRegion { region } => {
                if region.width() == 0 || region.height() == 0 {
                    return Err(BackendError::InvalidInput("empty image region".into()));
                }
                let mut cell = MINI_PATCH;
                let span = |lo: u32, hi: u32, cell: u32| (lo / cell, hi.div_ceil(cell));
                loop {
                    let (cx0, cx1) = span(region.x0, region.x1, cell);
                    let (cy0, cy1) = span(region.y0, region.y1, cell);
                    let count = (cx1 - cx0) as usize * (cy1 - cy0) as usize;
                    if count <= MAX_MULTI_ROWS {
                        let mut rows = Vec::with_capacity(count);
                        for cy in cy0..cy1 {
                            for cx in cx0..cx1 {
                                let key = format!("img:{}:{}:{cell}:{cx}:{cy}", region.image_ref, region.page_index);
                                rows.push(self.seeded_row(fnv1a64(key.as_bytes())));
                            }
                        }
                        break rows;
                    }
                    cell *= 2;
                }
            }
        };
        MultiVector::from_rows(rows).map_err(|e| BackendError::InvalidInput(e.to_string()))
    }
}

impl Default for MockMultiEncoder {
    fn default() -> Self {
        Self::new(MULTI_VECTOR_WIDTH)
    }
}

impl MultiVectorEncoder for MockMultiEncoder {
    fn width(&self) -> usize {
        self.width
    }

    fn embed_multi_batch(&self, inputs: &[VisualInput]) -> Result<Vec<MultiVector<f32>>, BackendError> {
        inputs.iter().map(|i| self.embed_one(i)).collect()
    }
}
