//! Multi-page documents, OCR tokens and QA annotations.
//!
//! Boxes are normalized to `[0,1]` with the origin at the top-left corner of
//! the page. Pixel coordinates only appear in [`crop_region`].

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use thiserror::Error;

/// Page counts above this are accepted but logged.
pub const MAX_EXPECTED_PAGES: usize = 20;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}: invalid UTF-8 at byte {offset}")]
    Encoding { path: PathBuf, offset: usize },
    #[error("{path}:{line}:{column}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        column: usize,
        message: String,
    },
    #[error("{path}: invalid {field}: {reason}")]
    Validation {
        path: PathBuf,
        field: String,
        reason: String,
    },
    #[error("no documents found in {0}")]
    NoDocuments(PathBuf),
    #[error("unknown document {0:?}")]
    UnknownDocument(String),
    #[error("page {page} out of range for document {doc_id:?} with {pages} pages")]
    PageOutOfRange { doc_id: String, page: usize, pages: usize },
    #[error("crop region has zero area after rounding to pixels")]
    DegenerateRegion,
}

/// Axis-aligned box in normalized page coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "[f64; 4]", into = "[f64; 4]")]
pub struct BBox {
    pub x0: f64,
    pub y0: f64,
    pub x1: f64,
    pub y1: f64,
}

impl BBox {
    pub const ZERO: BBox = BBox {
        x0: 0.0,
        y0: 0.0,
        x1: 0.0,
        y1: 0.0,
    };
    pub const FULL: BBox = BBox {
        x0: 0.0,
        y0: 0.0,
        x1: 1.0,
        y1: 1.0,
    };

    pub fn new(x0: f64, y0: f64, x1: f64, y1: f64) -> Result<Self, String> {
        let all = [x0, y0, x1, y1];
        if all.iter().any(|v| !v.is_finite()) {
            return Err("coordinates must be finite".into());
        }
        if all.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(format!("coordinates {all:?} outside [0,1]"));
        }
        if x0 > x1 {
            return Err(format!("x0 ({x0}) > x1 ({x1})"));
        }
        if y0 > y1 {
            return Err(format!("y0 ({y0}) > y1 ({y1})"));
        }
        Ok(Self { x0, y0, x1, y1 })
    }

    pub fn width(&self) -> f64 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> f64 {
        self.y1 - self.y0
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn center(&self) -> (f64, f64) {
        ((self.x0 + self.x1) / 2.0, (self.y0 + self.y1) / 2.0)
    }

    /// Closed containment test.
    pub fn contains_point(&self, x: f64, y: f64) -> bool {
        x >= self.x0 && x <= self.x1 && y >= self.y0 && y <= self.y1
    }

    pub fn intersection_area(&self, other: &BBox) -> f64 {
        let w = self.x1.min(other.x1) - self.x0.max(other.x0);
        let h = self.y1.min(other.y1) - self.y0.max(other.y0);
        if w <= 0.0 || h <= 0.0 {
            0.0
        } else {
            w * h
        }
    }

    pub fn union(&self, other: &BBox) -> BBox {
        BBox {
            x0: self.x0.min(other.x0),
            y0: self.y0.min(other.y0),
            x1: self.x1.max(other.x1),
            y1: self.y1.max(other.y1),
        }
    }

    /// Minimal box covering every box in the iterator, `None` when empty.
    pub fn enclosing<'a>(boxes: impl IntoIterator<Item = &'a BBox>) -> Option<BBox> {
        boxes.into_iter().fold(None, |acc, b| match acc {
            None => Some(*b),
            Some(u) => Some(u.union(b)),
        })
    }
}

impl TryFrom<[f64; 4]> for BBox {
    type Error = String;

    fn try_from(v: [f64; 4]) -> Result<Self, Self::Error> {
        BBox::new(v[0], v[1], v[2], v[3])
    }
}

impl From<BBox> for [f64; 4] {
    fn from(b: BBox) -> Self {
        [b.x0, b.y0, b.x1, b.y1]
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct OcrToken {
    pub text: String,
    pub bbox: BBox,
    pub page_index: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Page {
    pub width_px: u32,
    pub height_px: u32,
    /// Opaque locator of the page image; never dereferenced by this crate.
    pub image_ref: String,
    /// OCR reading order as given by the source file.
    pub tokens: Vec<OcrToken>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Document {
    pub doc_id: String,
    pub pages: Vec<Page>,
}

impl Document {
    pub fn page_count(&self) -> usize {
        self.pages.len()
    }

    pub fn token_count(&self) -> usize {
        self.pages.iter().map(|p| p.tokens.len()).sum()
    }

    pub fn page(&self, index: usize) -> Result<&Page, CorpusError> {
        self.pages.get(index).ok_or(CorpusError::PageOutOfRange {
            doc_id: self.doc_id.clone(),
            page: index,
            pages: self.pages.len(),
        })
    }

    /// Serializes to the corpus JSON schema.
    pub fn to_json(&self) -> String {
        serde_json::to_string(&RawDocument::from(self)).expect("document serialization")
    }

    pub fn save(&self, path: &Path) -> Result<(), CorpusError> {
        fs::write(path, self.to_json()).map_err(|source| CorpusError::Io {
            path: path.to_path_buf(),
            source,
        })
    }
}

// On-disk corpus schema. Boxes stay raw arrays here so that validation errors
// can name the token they belong to.
#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawDocument {
    doc_id: String,
    pages: Vec<RawPage>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawPage {
    width_px: u32,
    height_px: u32,
    image_ref: String,
    tokens: Vec<RawToken>,
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct RawToken {
    text: String,
    #[serde(rename = "box")]
    bbox: [f64; 4],
}

impl From<&Document> for RawDocument {
    fn from(doc: &Document) -> Self {
        RawDocument {
            doc_id: doc.doc_id.clone(),
            pages: doc
                .pages
                .iter()
                .map(|p| RawPage {
                    width_px: p.width_px,
                    height_px: p.height_px,
                    image_ref: p.image_ref.clone(),
                    tokens: p
                        .tokens
                        .iter()
                        .map(|t| RawToken {
                            text: t.text.clone(),
                            bbox: t.bbox.into(),
                        })
                        .collect(),
                })
                .collect(),
        }
    }
}

fn read_utf8(path: &Path) -> Result<String, CorpusError> {
    let bytes = fs::read(path).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    String::from_utf8(bytes).map_err(|e| CorpusError::Encoding {
        path: path.to_path_buf(),
        offset: e.utf8_error().valid_up_to(),
    })
}

fn parse_error(path: &Path, e: serde_json::Error, line_offset: usize) -> CorpusError {
    CorpusError::Parse {
        path: path.to_path_buf(),
        line: e.line() + line_offset,
        column: e.column(),
        message: e.to_string(),
    }
}

/// Parses a document from its JSON text. `path` is only used in error messages.
pub fn parse_document(text: &str, path: &Path) -> Result<Document, CorpusError> {
    let raw: RawDocument = serde_json::from_str(text).map_err(|e| parse_error(path, e, 0))?;
    let invalid = |field: String, reason: String| CorpusError::Validation {
        path: path.to_path_buf(),
        field,
        reason,
    };
    if raw.doc_id.is_empty() {
        return Err(invalid("doc_id".into(), "must be non-empty".into()));
    }
    if raw.pages.is_empty() {
        return Err(invalid("pages".into(), "document has no pages".into()));
    }
    if raw.pages.len() > MAX_EXPECTED_PAGES {
        log::warn!(
            "document {:?} has {} pages (expected at most {MAX_EXPECTED_PAGES})",
            raw.doc_id,
            raw.pages.len()
        );
    }
    let mut pages = Vec::with_capacity(raw.pages.len());
    for (pi, rp) in raw.pages.into_iter().enumerate() {
        if rp.width_px == 0 || rp.height_px == 0 {
            return Err(invalid(
                format!("pages[{pi}]"),
                format!("page size {}x{} must be positive", rp.width_px, rp.height_px),
            ));
        }
        let mut tokens = Vec::with_capacity(rp.tokens.len());
        for (ti, rt) in rp.tokens.into_iter().enumerate() {
            let field = format!("pages[{pi}].tokens[{ti}]");
            if rt.text.is_empty() {
                return Err(invalid(format!("{field}.text"), "empty token text".into()));
            }
            if rt.text.contains(['\n', '\r']) {
                return Err(invalid(format!("{field}.text"), "token text contains a newline".into()));
            }
            let bbox = BBox::try_from(rt.bbox).map_err(|r| invalid(format!("{field}.box"), r))?;
            tokens.push(OcrToken {
                text: rt.text,
                bbox,
                page_index: pi,
            });
        }
        pages.push(Page {
            width_px: rp.width_px,
            height_px: rp.height_px,
            image_ref: rp.image_ref,
            tokens,
        });
    }
    Ok(Document {
        doc_id: raw.doc_id,
        pages,
    })
}

pub fn load_document(path: &Path) -> Result<Document, CorpusError> {
    parse_document(&read_utf8(path)?, path)
}

/// Every document of a corpus directory, keyed by `doc_id`.
#[derive(Debug, Clone, Default)]
pub struct Corpus {
    docs: BTreeMap<String, Document>,
}

impl Corpus {
    /// Loads every `*.json` file in `dir` (non-recursive).
    pub fn load_dir(dir: &Path) -> Result<Self, CorpusError> {
        let io = |source| CorpusError::Io {
            path: dir.to_path_buf(),
            source,
        };
        let mut paths = Vec::new();
        for entry in fs::read_dir(dir).map_err(io)? {
            let p = entry.map_err(io)?.path();
            if p.is_file() && p.extension().is_some_and(|e| e == "json") {
                paths.push(p);
            }
        }
        paths.sort();
        if paths.is_empty() {
            return Err(CorpusError::NoDocuments(dir.to_path_buf()));
        }
        let mut corpus = Corpus::default();
        for p in paths {
            let doc = load_document(&p)?;
            if corpus.docs.contains_key(&doc.doc_id) {
                return Err(CorpusError::Validation {
                    path: p,
                    field: "doc_id".into(),
                    reason: format!("duplicate doc_id {:?}", doc.doc_id),
                });
            }
            corpus.docs.insert(doc.doc_id.clone(), doc);
        }
        Ok(corpus)
    }

    pub fn from_documents(docs: impl IntoIterator<Item = Document>) -> Self {
        Corpus {
            docs: docs.into_iter().map(|d| (d.doc_id.clone(), d)).collect(),
        }
    }

    pub fn get(&self, doc_id: &str) -> Result<&Document, CorpusError> {
        self.docs
            .get(doc_id)
            .ok_or_else(|| CorpusError::UnknownDocument(doc_id.to_string()))
    }

    /// Documents in `doc_id` order.
    pub fn documents(&self) -> impl Iterator<Item = &Document> {
        self.docs.values()
    }

    pub fn len(&self) -> usize {
        self.docs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.docs.is_empty()
    }

    /// Checks that the sample's document exists and its answer pages are in range.
    pub fn check_sample(&self, sample: &QaSample) -> Result<(), CorpusError> {
        let doc = self.get(&sample.doc_id)?;
        for &p in &sample.answer_pages {
            doc.page(p)?;
        }
        Ok(())
    }
}

/// One question over one document.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QaSample {
    pub question: String,
    pub answers: Vec<String>,
    /// Ground-truth answer page(s). The file field `answer_page` may be null,
    /// an integer, or a list of integers (matched any-of).
    #[serde(
        rename = "answer_page",
        default,
        deserialize_with = "de_pages",
        serialize_with = "ser_pages"
    )]
    pub answer_pages: Vec<usize>,
    pub doc_id: String,
}

#[derive(Deserialize)]
#[serde(untagged)]
enum PageField {
    One(usize),
    Many(Vec<usize>),
}

fn de_pages<'de, D: Deserializer<'de>>(d: D) -> Result<Vec<usize>, D::Error> {
    Ok(match Option::<PageField>::deserialize(d)? {
        None => Vec::new(),
        Some(PageField::One(p)) => vec![p],
        Some(PageField::Many(v)) => v,
    })
}

fn ser_pages<S: Serializer>(pages: &[usize], s: S) -> Result<S::Ok, S::Error> {
    match pages {
        [] => s.serialize_none(),
        [p] => s.serialize_u64(*p as u64),
        many => many.serialize(s),
    }
}

/// Parses a JSON-lines QA file. Blank lines are skipped.
pub fn parse_qa(text: &str, path: &Path) -> Result<Vec<QaSample>, CorpusError> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let sample: QaSample = serde_json::from_str(line).map_err(|e| parse_error(path, e, i))?;
        if sample.answers.is_empty() {
            return Err(CorpusError::Validation {
                path: path.to_path_buf(),
                field: format!("line {}: answers", i + 1),
                reason: "at least one ground-truth answer is required".into(),
            });
        }
        out.push(sample);
    }
    Ok(out)
}

pub fn load_qa(path: &Path) -> Result<Vec<QaSample>, CorpusError> {
    parse_qa(&read_utf8(path)?, path)
}

pub fn write_qa(samples: &[QaSample], path: &Path) -> Result<(), CorpusError> {
    let mut s = String::new();
    for q in samples {
        s.push_str(&serde_json::to_string(q).expect("qa serialization"));
        s.push('\n');
    }
    fs::write(path, s).map_err(|source| CorpusError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// A pixel rectangle of a page image, by locator. No pixels are decoded.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct ImageRegionRef {
    pub image_ref: String,
    pub page_index: usize,
    pub x0: u32,
    pub y0: u32,
    pub x1: u32,
    pub y1: u32,
}

impl ImageRegionRef {
    pub fn width(&self) -> u32 {
        self.x1 - self.x0
    }

    pub fn height(&self) -> u32 {
        self.y1 - self.y0
    }
}

// Products like 0.1 * 1000 land a few ulps off an integer; snap those before
// rounding outward.
fn snap(v: f64) -> f64 {
    let r = v.round();
    if (v - r).abs() < 1e-9 {
        r
    } else {
        v
    }
}

/// Converts a normalized box to a pixel rectangle, rounding outward.
pub fn crop_region(doc: &Document, page_index: usize, bbox: &BBox) -> Result<ImageRegionRef, CorpusError> {
    let page = doc.page(page_index)?;
    let (w, h) = (f64::from(page.width_px), f64::from(page.height_px));
    let x0 = snap(bbox.x0 * w).floor() as u32;
    let y0 = snap(bbox.y0 * h).floor() as u32;
    let x1 = (snap(bbox.x1 * w).ceil() as u32).min(page.width_px);
    let y1 = (snap(bbox.y1 * h).ceil() as u32).min(page.height_px);
    if x1 <= x0 || y1 <= y0 {
        return Err(CorpusError::DegenerateRegion);
    }
    Ok(ImageRegionRef {
        image_ref: page.image_ref.clone(),
        page_index,
        x0,
        y0,
        x1,
        y1,
    })
}
