//! Sliding-window textual chunking and textual generator-context assembly.

use std::ops::Range;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{crop_region, BBox, Document, ImageRegionRef};
use crate::generator::{GeneratorRequest, SHORT_ANSWER_PROMPT};
use crate::layout::SimpleLabel;

#[derive(Debug, Error, PartialEq)]
pub enum ChunkParamsError {
    #[error("chunk size must be positive")]
    ZeroChunkSize,
    #[error("overlap {overlap} must be smaller than chunk size {chunk_size}")]
    OverlapTooLarge { overlap: usize, chunk_size: usize },
    #[error("tolerance must be finite and non-negative, got {0}")]
    BadTolerance(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChunkParams {
    /// Tokens per chunk.
    pub chunk_size: usize,
    /// Tokens shared between neighbouring chunks.
    pub overlap: usize,
    /// The page-final chunk may grow to `(1 + tolerance) * chunk_size` tokens.
    pub tolerance: f64,
}

impl Default for ChunkParams {
    fn default() -> Self {
        Self {
            chunk_size: 60,
            overlap: 10,
            tolerance: 0.2,
        }
    }
}

impl ChunkParams {
    pub fn new(chunk_size: usize, overlap: usize, tolerance: f64) -> Result<Self, ChunkParamsError> {
        let p = Self {
            chunk_size,
            overlap,
            tolerance,
        };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<(), ChunkParamsError> {
        if self.chunk_size == 0 {
            return Err(ChunkParamsError::ZeroChunkSize);
        }
        if self.overlap >= self.chunk_size {
            return Err(ChunkParamsError::OverlapTooLarge {
                overlap: self.overlap,
                chunk_size: self.chunk_size,
            });
        }
        if !self.tolerance.is_finite() || self.tolerance < 0.0 {
            return Err(ChunkParamsError::BadTolerance(self.tolerance));
        }
        Ok(())
    }

    /// `⌊(1+τ)·L⌋`, the longest span ever emitted.
    pub fn max_span(&self) -> usize {
        let v = (1.0 + self.tolerance) * self.chunk_size as f64;
        // 1.2 * 60 must give 72, not 71.
        (v + 1e-9).floor() as usize
    }

    pub fn step(&self) -> usize {
        self.chunk_size - self.overlap
    }
}

/// Token spans for one page of `n_tokens` tokens.
///
/// Full-size spans advance by `L − O`; as soon as the remainder from the
/// cursor fits in `⌊(1+τ)L⌋` it is emitted as the final span.
pub fn chunk_page(n_tokens: usize, params: &ChunkParams) -> Vec<Range<usize>> {
    let max = params.max_span();
    let mut spans = Vec::new();
    let mut cursor = 0;
    while cursor < n_tokens {
        if n_tokens - cursor <= max {
            spans.push(cursor..n_tokens);
            break;
        }
        spans.push(cursor..cursor + params.chunk_size);
        cursor += params.step();
    }
    spans
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum ChunkSource {
    Window,
    /// Produced from a cluster of layout regions. Tokens need not be
    /// contiguous, so their page indices are listed explicitly.
    Layout {
        cluster: usize,
        token_indices: Vec<usize>,
        token_labels: Vec<SimpleLabel>,
    },
}

/// A retrieval unit of OCR tokens from a single page.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TextChunk {
    pub chunk_id: String,
    pub doc_id: String,
    pub page_index: usize,
    /// Half-open range into the page's token list (covering range for layout chunks).
    pub token_span: (usize, usize),
    /// Tokens joined by single spaces.
    pub text: String,
    pub tokens: Vec<String>,
    pub boxes: Vec<BBox>,
    pub union_box: BBox,
    /// `None` when the union box is too thin to cover a whole pixel.
    pub crop: Option<ImageRegionRef>,
    pub source: ChunkSource,
}

pub fn chunk_id(doc_id: &str, page_index: usize, ordinal: usize) -> String {
    format!("{doc_id}#p{page_index}#c{ordinal}")
}

/// Builds a chunk from explicit token indices of one page.
pub(crate) fn make_chunk(
    doc: &Document,
    page_index: usize,
    ordinal: usize,
    indices: &[usize],
    source: ChunkSource,
) -> TextChunk {
    let page = &doc.pages[page_index];
    let tokens: Vec<String> = indices.iter().map(|&i| page.tokens[i].text.clone()).collect();
    let boxes: Vec<BBox> = indices.iter().map(|&i| page.tokens[i].bbox).collect();
    let union_box = BBox::enclosing(&boxes).unwrap_or(BBox::ZERO);
    let crop = match crop_region(doc, page_index, &union_box) {
        Ok(c) => Some(c),
        Err(e) => {
            log::debug!("{}: no crop for chunk {ordinal} on page {page_index}: {e}", doc.doc_id);
            None
        }
    };
    let start = indices.iter().copied().min().unwrap_or(0);
    let end = indices.iter().copied().max().map_or(0, |m| m + 1);
    TextChunk {
        chunk_id: chunk_id(&doc.doc_id, page_index, ordinal),
        doc_id: doc.doc_id.clone(),
        page_index,
        token_span: (start, end),
        text: tokens.join(" "),
        tokens,
        boxes,
        union_box,
        crop,
        source,
    }
}

/// Chunks every page of `doc` in page order.
pub fn chunk_document(doc: &Document, params: &ChunkParams) -> Vec<TextChunk> {
    let mut out = Vec::new();
    for (pi, page) in doc.pages.iter().enumerate() {
        for (ordinal, span) in chunk_page(page.tokens.len(), params).into_iter().enumerate() {
            let indices: Vec<usize> = span.collect();
            out.push(make_chunk(doc, pi, ordinal, &indices, ChunkSource::Window));
        }
    }
    out
}

/// Writes chunks as JSON lines (debug dump).
pub fn dump_chunks(chunks: &[TextChunk]) -> String {
    let mut s = String::new();
    for c in chunks {
        s.push_str(&serde_json::to_string(c).expect("chunk serialization"));
        s.push('\n');
    }
    s
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Placement {
    pub index: usize,
    pub x: u32,
    pub y: u32,
}

/// Placement of chunk crops on a single canvas.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct GridLayout {
    /// One placement per input crop, ordered by crop index.
    pub placements: Vec<Placement>,
    pub canvas_w: u32,
    pub canvas_h: u32,
}

fn vertical_stack(crops: &[(u32, u32)]) -> GridLayout {
    let mut y = 0;
    let placements = crops
        .iter()
        .enumerate()
        .map(|(index, &(_, h))| {
            let p = Placement { index, x: 0, y };
            y += h;
            p
        })
        .collect();
    GridLayout {
        placements,
        canvas_w: crops.iter().map(|c| c.0).max().unwrap_or(1),
        canvas_h: y,
    }
}

/// Shelf-packs crops given as `(width, height)` pixels.
///
/// Crops are sorted by height (descending) and laid out in rows capped at
/// `max(⌈√Σarea⌉, widest crop)`. Falls back to a vertical stack if that is
/// smaller, so the canvas never exceeds the stacked area.
pub fn arrange_grid(crops: &[(u32, u32)]) -> GridLayout {
    if crops.is_empty() {
        return GridLayout {
            placements: vec![],
            canvas_w: 1,
            canvas_h: 1,
        };
    }
    let total_area: u64 = crops.iter().map(|&(w, h)| u64::from(w) * u64::from(h)).sum();
    let widest = crops.iter().map(|c| c.0).max().unwrap_or(1);
    let cap = ((total_area as f64).sqrt().ceil() as u32).max(widest);

    let mut order: Vec<usize> = (0..crops.len()).collect();
    order.sort_by(|&a, &b| crops[b].1.cmp(&crops[a].1).then(a.cmp(&b)));

    let mut placements = vec![Placement { index: 0, x: 0, y: 0 }; crops.len()];
    let (mut x, mut y, mut shelf_h, mut canvas_w) = (0u32, 0u32, 0u32, 0u32);
    for i in order {
        let (w, h) = crops[i];
        if x > 0 && x + w > cap {
            y += shelf_h;
            x = 0;
            shelf_h = 0;
        }
        placements[i] = Placement { index: i, x, y };
        x += w;
        shelf_h = shelf_h.max(h);
        canvas_w = canvas_w.max(x);
    }
    let shelf = GridLayout {
        placements,
        canvas_w,
        canvas_h: y + shelf_h,
    };
    let stack = vertical_stack(crops);
    let area = |g: &GridLayout| u64::from(g.canvas_w) * u64::from(g.canvas_h);
    if area(&shelf) <= area(&stack) {
        shelf
    } else {
        stack
    }
}

/// Builds the textual generator input: question tokens with all-zero boxes,
/// then every chunk's tokens with their original boxes, in the given order.
pub fn assemble_text_context(chunks: &[TextChunk], question: &str) -> GeneratorRequest {
    let mut tokens: Vec<String> = question.split_whitespace().map(str::to_string).collect();
    let mut boxes = vec![BBox::ZERO; tokens.len()];
    for c in chunks {
        tokens.extend(c.tokens.iter().cloned());
        boxes.extend(c.boxes.iter().copied());
    }
    let crops: Vec<ImageRegionRef> = chunks.iter().filter_map(|c| c.crop.clone()).collect();
    let dims: Vec<(u32, u32)> = crops.iter().map(|c| (c.width(), c.height())).collect();
    GeneratorRequest {
        question: question.to_string(),
        prompt: Some(SHORT_ANSWER_PROMPT.to_string()),
        tokens,
        boxes,
        evidence_ids: chunks.iter().map(|c| c.chunk_id.clone()).collect(),
        evidence_texts: chunks.iter().map(|c| c.text.clone()).collect(),
        crops,
        crop_grid: Some(arrange_grid(&dims)),
        visual: None,
    }
}
