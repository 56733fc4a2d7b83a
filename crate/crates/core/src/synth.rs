//! Synthetic corpora with known answers.
//!
//! Every generated question has its answer planted verbatim in exactly one
//! window chunk of its document, and shares most of that chunk's tokens.

use std::collections::HashSet;
use std::ops::Range;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::chunking::{chunk_id, chunk_page, ChunkParams};
use crate::corpus::{BBox, Document, OcrToken, Page, QaSample};
use crate::layout::{LayoutRegion, PageRegions, RawRegion, SimpleLabel};

const SYLLABLES: [&str; 24] = [
    "ka", "lo", "mi", "ne", "ru", "sa", "ti", "vo", "ze", "pa", "qui", "dor", "len", "mar", "bis", "tel", "gan", "hor",
    "fu", "wen", "ost", "ril", "cha", "dy",
];

const TOKENS_PER_LINE: usize = 12;
const MARGIN: f64 = 0.05;
const TOKEN_W: f64 = 0.07;
const TOKEN_GAP: f64 = 0.005;
const LINE_H: f64 = 0.012;
const LINE_GAP: f64 = 0.003;

#[derive(Debug, Clone, PartialEq)]
pub struct SynthParams {
    pub n_docs: usize,
    pub pages: (usize, usize),
    pub tokens_per_page: (usize, usize),
    pub vocab_size: usize,
    /// Fraction of the target chunk's tokens copied into the question.
    pub question_overlap: f64,
    pub page_px: (u32, u32),
    pub seed: u64,
}

impl Default for SynthParams {
    fn default() -> Self {
        Self {
            n_docs: 200,
            pages: (5, 20),
            tokens_per_page: (100, 400),
            vocab_size: 5000,
            question_overlap: 0.6,
            page_px: (1000, 1400),
            seed: 7,
        }
    }
}

/// Where a question's answer was planted.
#[derive(Debug, Clone, PartialEq)]
pub struct PlantedTarget {
    pub doc_id: String,
    pub page_index: usize,
    pub chunk_id: String,
    pub chunk_span: Range<usize>,
    pub answer_token: usize,
}

#[derive(Debug, Clone, Default)]
pub struct PlantedCorpus {
    pub documents: Vec<Document>,
    pub samples: Vec<QaSample>,
    pub targets: Vec<PlantedTarget>,
    /// One paragraph region per block of text, plus filterable noise.
    pub regions: Vec<PageRegions>,
}

fn vocabulary(rng: &mut ChaCha8Rng, size: usize) -> Vec<String> {
    let mut seen = HashSet::new();
    let mut out = Vec::with_capacity(size);
    while out.len() < size {
        let n = rng.gen_range(2..=4);
        let w: String = (0..n).map(|_| *SYLLABLES.choose(rng).expect("non-empty")).collect();
        if seen.insert(w.clone()) {
            out.push(w);
        }
    }
    out
}

/// Lays `n` tokens out in lines, breaking paragraphs every 40 to 80 tokens.
/// Returns the token boxes and the paragraph token ranges.
fn lay_out(rng: &mut ChaCha8Rng, n: usize) -> (Vec<BBox>, Vec<Range<usize>>) {
    let mut boxes = Vec::with_capacity(n);
    let mut paragraphs = Vec::new();
    let mut line = 0usize;
    let mut start = 0usize;
    while start < n {
        let len = rng.gen_range(40..=80).min(n - start);
        for (j, _) in (start..start + len).enumerate() {
            let col = j % TOKENS_PER_LINE;
            if j > 0 && col == 0 {
                line += 1;
            }
            let x0 = MARGIN + col as f64 * (TOKEN_W + TOKEN_GAP);
            let y0 = MARGIN + line as f64 * (LINE_H + LINE_GAP);
            boxes.push(BBox::new(x0, y0, x0 + TOKEN_W, y0 + LINE_H).expect("box inside page"));
        }
        paragraphs.push(start..start + len);
        start += len;
        line += 2;
    }
    (boxes, paragraphs)
}

fn paragraph_regions(boxes: &[BBox], paragraphs: &[Range<usize>]) -> Vec<RawRegion> {
    let mut out = Vec::new();
    for (i, p) in paragraphs.iter().enumerate() {
        let b = BBox::enclosing(&boxes[p.clone()]).expect("non-empty paragraph");
        let padded = BBox::new(
            (b.x0 - 0.002).max(0.0),
            (b.y0 - 0.002).max(0.0),
            (b.x1 + 0.002).min(1.0),
            (b.y1 + 0.002).min(1.0),
        )
        .expect("padded box");
        out.push(RawRegion {
            bbox: padded,
            raw_label: if i == 0 { "Section-header" } else { "Text" }.to_string(),
            score: 0.9,
        });
        if i == 0 {
            // nested duplicate and speck, both removed by filtering
            let (cx, cy) = padded.center();
            out.push(RawRegion {
                bbox: BBox::new(padded.x0, padded.y0, cx, padded.y1).expect("nested box"),
                raw_label: "Picture".into(),
                score: 0.4,
            });
            out.push(RawRegion {
                bbox: BBox::new(cx, cy, cx + 0.01, cy + 0.01).expect("speck"),
                raw_label: "Footnote".into(),
                score: 0.3,
            });
        }
    }
    out
}

/// Chunk `j`'s token positions that no neighbouring chunk covers.
fn exclusive(spans: &[Range<usize>], j: usize) -> Range<usize> {
    let lo = if j > 0 {
        spans[j - 1].end.max(spans[j].start)
    } else {
        spans[j].start
    };
    let hi = if j + 1 < spans.len() {
        spans[j + 1].start.min(spans[j].end)
    } else {
        spans[j].end
    };
    lo..hi.max(lo)
}

fn answer_code(rng: &mut ChaCha8Rng, doc: usize) -> String {
    let a = rng.gen_range(b'A'..=b'Z') as char;
    let b = rng.gen_range(b'A'..=b'Z') as char;
    format!("{a}{b}-{doc:03}{:03}", rng.gen_range(0..1000))
}

/// Builds a planted-needle corpus: one question per document.
pub fn planted_corpus(params: &SynthParams, chunking: &ChunkParams) -> PlantedCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(params.seed);
    let vocab = vocabulary(&mut rng, params.vocab_size);
    let mut out = PlantedCorpus::default();
    for d in 0..params.n_docs {
        let doc_id = format!("synth{d:03}");
        let n_pages = rng.gen_range(params.pages.0..=params.pages.1);
        let mut pages = Vec::with_capacity(n_pages);
        for p in 0..n_pages {
            let n = rng.gen_range(params.tokens_per_page.0..=params.tokens_per_page.1);
            let (boxes, paragraphs) = lay_out(&mut rng, n);
            let tokens = boxes
                .into_iter()
                .map(|bbox| OcrToken {
                    text: vocab.choose(&mut rng).expect("vocabulary").clone(),
                    bbox,
                    page_index: p,
                })
                .collect::<Vec<_>>();
            let region_boxes: Vec<BBox> = tokens.iter().map(|t| t.bbox).collect();
            out.regions.push(PageRegions {
                doc_id: doc_id.clone(),
                page_index: p,
                regions: paragraph_regions(&region_boxes, &paragraphs),
            });
            pages.push(Page {
                width_px: params.page_px.0,
                height_px: params.page_px.1,
                image_ref: format!("{doc_id}/page{p}.png"),
                tokens,
            });
        }

        let page_index = rng.gen_range(0..n_pages);
        let spans = chunk_page(pages[page_index].tokens.len(), chunking);
        let candidates: Vec<usize> = (0..spans.len()).filter(|&j| !exclusive(&spans, j).is_empty()).collect();
        let j = *candidates
            .choose(&mut rng)
            .expect("every page has a chunk with exclusive tokens");
        let span = spans[j].clone();
        let answer_token = rng.gen_range(exclusive(&spans, j));
        let answer = answer_code(&mut rng, d);
        pages[page_index].tokens[answer_token].text = answer.clone();

        let others: Vec<usize> = span.clone().filter(|&i| i != answer_token).collect();
        let want = ((span.len() as f64 * params.question_overlap).ceil() as usize).min(others.len());
        let mut picked: Vec<usize> = others.choose_multiple(&mut rng, want).copied().collect();
        picked.sort_unstable();
        let words: Vec<&str> = picked
            .iter()
            .map(|&i| pages[page_index].tokens[i].text.as_str())
            .collect();
        let question = format!("which code appears with {}?", words.join(" "));

        out.targets.push(PlantedTarget {
            doc_id: doc_id.clone(),
            page_index,
            chunk_id: chunk_id(&doc_id, page_index, j),
            chunk_span: span,
            answer_token,
        });
        out.samples.push(QaSample {
            question,
            answers: vec![answer],
            answer_pages: vec![page_index],
            doc_id: doc_id.clone(),
        });
        out.documents.push(Document { doc_id, pages });
    }
    out
}

/// Three well-separated groups of four regions each.
pub fn three_blob_regions(seed: u64) -> Vec<LayoutRegion> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centers = [(0.2, 0.2), (0.8, 0.25), (0.5, 0.8)];
    let mut out = Vec::new();
    for (cx, cy) in centers {
        for _ in 0..4 {
            let x = cx + rng.gen_range(-0.04..0.04);
            let y = cy + rng.gen_range(-0.04..0.04);
            out.push(LayoutRegion {
                bbox: BBox::new(x - 0.03, y - 0.02, x + 0.03, y + 0.02).expect("blob box"),
                raw_label: "Text".into(),
                simple_label: SimpleLabel::Text,
                score: 0.9,
            });
        }
    }
    out
}
