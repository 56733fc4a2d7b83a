//! Online answering: textual RAG, visual RAG and the two whole-document baselines.

use serde::{Deserialize, Serialize};

use super::{Engine, PipelineError};
use crate::chunking::{assemble_text_context, make_chunk, ChunkSource, TextChunk};
use crate::config::{ContextOrder, Scope};
use crate::corpus::{crop_region, BBox, Document};
use crate::generator::{GeneratorRequest, GeneratorResponse, VisualContext, SHORT_ANSWER_PROMPT};
use crate::index::{search_dense_where, search_late_interaction_where, RetrievalResult};
use crate::rerank::rerank_topk;
use crate::visualpatch::{merge_patches, render_query_spec, tile_minipatches, PatchSpec};

/// What was retrieved and what was handed to the generator.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RetrievalTrace {
    pub mode: String,
    pub question: String,
    pub doc_id: String,
    pub scope: Scope,
    pub context_order: ContextOrder,
    /// First-stage ranking (dense top-k′ or late-interaction top-k_vis).
    pub first_stage: Vec<RetrievalResult>,
    /// Reranked top-k; empty in visual mode.
    pub reranked: Vec<RetrievalResult>,
    /// Units in generator-context order.
    pub context_ids: Vec<String>,
    pub context_pages: Vec<usize>,
    pub context_texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Answer {
    pub answer: String,
    pub confidence: Option<f64>,
    pub trace: RetrievalTrace,
}

/// A failed answer, with the trace when retrieval got that far.
#[derive(Debug)]
pub struct AnswerError {
    pub error: PipelineError,
    pub trace: Option<Box<RetrievalTrace>>,
}

impl std::fmt::Display for AnswerError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        self.error.fmt(f)
    }
}

impl std::error::Error for AnswerError {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

impl<E: Into<PipelineError>> From<E> for AnswerError {
    fn from(e: E) -> Self {
        AnswerError {
            error: e.into(),
            trace: None,
        }
    }
}

fn with_trace(error: impl Into<PipelineError>, trace: &RetrievalTrace) -> AnswerError {
    AnswerError {
        error: error.into(),
        trace: Some(Box::new(trace.clone())),
    }
}

/// A single chunk spanning every token of a page, cropped to the full page.
fn page_chunk(doc: &Document, page_index: usize) -> TextChunk {
    let indices: Vec<usize> = (0..doc.pages[page_index].tokens.len()).collect();
    let mut c = make_chunk(doc, page_index, 0, &indices, ChunkSource::Window);
    c.chunk_id = format!("{}#p{page_index}", doc.doc_id);
    c.crop = crop_region(doc, page_index, &BBox::FULL).ok();
    c
}

impl Engine {
    pub(crate) fn check_context(&self, request: &GeneratorRequest) -> Result<(), PipelineError> {
        match self.config.max_context_tokens {
            Some(limit) if request.context_tokens() > limit => Err(PipelineError::ContextTooLong {
                tokens: request.context_tokens(),
                limit,
            }),
            _ => Ok(()),
        }
    }

    fn empty_trace(&self, mode: &str, question: &str, doc_id: &str) -> RetrievalTrace {
        RetrievalTrace {
            mode: mode.to_string(),
            question: question.to_string(),
            doc_id: doc_id.to_string(),
            scope: self.config.scope,
            context_order: self.config.context_order,
            first_stage: Vec::new(),
            reranked: Vec::new(),
            context_ids: Vec::new(),
            context_pages: Vec::new(),
            context_texts: Vec::new(),
        }
    }

    /// Dense top-k′ followed by rerank top-k: `(first_stage, reranked)`.
    pub fn retrieve_text(
        &self,
        question: &str,
        doc_id: &str,
    ) -> Result<(Vec<RetrievalResult>, Vec<RetrievalResult>), PipelineError> {
        let text = self.text.as_ref().ok_or(PipelineError::MissingIndex("dense"))?;
        if self.config.scope == Scope::PerDocument {
            self.corpus.get(doc_id)?;
        }
        let query = self.backends.encoder.embed(question)?;
        let first = match self.config.scope {
            Scope::Collection => search_dense_where(&text.index, &query, self.config.k_prime, |_| true)?,
            Scope::PerDocument => match self.text_by_doc.get(doc_id) {
                Some(member) => search_dense_where(&text.index, &query, self.config.k_prime, |i| member[i])?,
                None => Vec::new(),
            },
        };
        let text_of = |id: &str| text.index.position(id).map(|i| text.chunks[i].text.as_str());
        let reranked = rerank_topk(&first, text_of, self.backends.scorer.as_ref(), question, self.config.k);
        Ok((first, reranked))
    }

    /// Chunk behind a retrieved unit id.
    pub fn chunk_by_id(&self, id: &str) -> Option<&TextChunk> {
        let text = self.text.as_ref()?;
        text.index.position(id).map(|i| &text.chunks[i])
    }

    /// embed → dense top-k′ → rerank top-k → context → generator.
    pub fn answer_textual(&self, question: &str, doc_id: &str) -> Result<Answer, AnswerError> {
        let (first, reranked) = self.retrieve_text(question, doc_id)?;
        let mut trace = self.empty_trace("rag-text", question, doc_id);
        trace.first_stage = first;
        trace.reranked = reranked;
        if trace.reranked.is_empty() {
            return Err(with_trace(PipelineError::NoEvidence, &trace));
        }
        let mut chunks: Vec<&TextChunk> = trace
            .reranked
            .iter()
            .map(|r| self.chunk_by_id(&r.unit_id).expect("reranked ids come from the index"))
            .collect();
        if self.config.context_order == ContextOrder::Document {
            chunks.sort_by(|a, b| {
                (&a.doc_id, a.page_index, a.token_span.0).cmp(&(&b.doc_id, b.page_index, b.token_span.0))
            });
        }
        trace.context_ids = chunks.iter().map(|c| c.chunk_id.clone()).collect();
        trace.context_pages = chunks.iter().map(|c| c.page_index).collect();
        trace.context_texts = chunks.iter().map(|c| c.text.clone()).collect();

        let owned: Vec<TextChunk> = chunks.into_iter().cloned().collect();
        let request = assemble_text_context(&owned, question);
        self.check_context(&request).map_err(|e| with_trace(e, &trace))?;
        let resp = self
            .backends
            .generator
            .generate(&request)
            .map_err(|e| with_trace(e, &trace))?;
        Ok(Answer {
            answer: resp.answer,
            confidence: resp.confidence,
            trace,
        })
    }

    /// Late-interaction top-k_vis patches of the question's scope.
    pub fn retrieve_visual(&self, question: &str, doc_id: &str) -> Result<Vec<RetrievalResult>, PipelineError> {
        let visual = self
            .visual
            .as_ref()
            .ok_or(PipelineError::MissingIndex("multi-vector"))?;
        if self.config.scope == Scope::PerDocument {
            self.corpus.get(doc_id)?;
        }
        let query = self.backends.multi_encoder.embed_multi(&render_query_spec(question)?)?;
        let k = self.config.visual.k;
        Ok(match self.config.scope {
            Scope::Collection => search_late_interaction_where(&visual.index, &query, k, |_| true)?,
            Scope::PerDocument => match self.visual_by_doc.get(doc_id) {
                Some(member) => search_late_interaction_where(&visual.index, &query, k, |i| member[i])?,
                None => Vec::new(),
            },
        })
    }

    /// render → embed_multi → top-k_vis → merge → tile → generator.
    pub fn answer_visual(&self, question: &str, doc_id: &str) -> Result<Answer, AnswerError> {
        let hits = self.retrieve_visual(question, doc_id)?;
        let visual = self.visual.as_ref().expect("checked by retrieve_visual");
        let mut trace = self.empty_trace("rag-visual", question, doc_id);
        trace.first_stage = hits;
        if trace.first_stage.is_empty() {
            return Err(with_trace(PipelineError::NoEvidence, &trace));
        }
        let selected: Vec<PatchSpec> = trace
            .first_stage
            .iter()
            .map(|r| {
                let i = visual.index.position(&r.unit_id).expect("hit ids come from the index");
                visual.patches[i].clone()
            })
            .collect();
        let merged = merge_patches(&selected);
        let mut regions = Vec::with_capacity(merged.len());
        let mut texts = Vec::with_capacity(merged.len());
        for p in &merged {
            let doc = self.corpus.get(&p.doc_id).map_err(|e| with_trace(e, &trace))?;
            regions.push(p.region(doc));
            texts.push(patch_text(doc, p));
        }
        let sizes: Vec<(u32, u32)> = merged.iter().map(|p| (p.width, p.height())).collect();
        let tiling = tile_minipatches(&sizes, self.config.visual.image_tokens).map_err(|e| with_trace(e, &trace))?;
        trace.context_ids = merged.iter().map(PatchSpec::patch_id).collect();
        trace.context_pages = merged.iter().map(|p| p.page_index).collect();
        trace.context_texts = texts;

        let qtokens: Vec<String> = question.split_whitespace().map(str::to_string).collect();
        let request = GeneratorRequest {
            question: question.to_string(),
            prompt: Some(SHORT_ANSWER_PROMPT.to_string()),
            boxes: vec![BBox::ZERO; qtokens.len()],
            tokens: qtokens,
            evidence_ids: trace.context_ids.clone(),
            evidence_texts: trace.context_texts.clone(),
            crops: regions.clone(),
            crop_grid: None,
            visual: Some(VisualContext {
                patches: merged,
                regions,
                tiling,
            }),
        };
        let resp = self
            .backends
            .generator
            .generate(&request)
            .map_err(|e| with_trace(e, &trace))?;
        Ok(Answer {
            answer: resp.answer,
            confidence: resp.confidence,
            trace,
        })
    }

    /// All pages' tokens, boxes and page crops in one generator call.
    pub fn baseline_concat(&self, question: &str, doc_id: &str) -> Result<Answer, AnswerError> {
        let doc = self.corpus.get(doc_id)?;
        let pages: Vec<TextChunk> = (0..doc.pages.len()).map(|i| page_chunk(doc, i)).collect();
        let request = assemble_text_context(&pages, question);
        let mut trace = self.empty_trace("concat", question, doc_id);
        trace.context_ids = pages.iter().map(|c| c.chunk_id.clone()).collect();
        trace.context_pages = (0..pages.len()).collect();
        self.check_context(&request).map_err(|e| with_trace(e, &trace))?;
        let resp = self
            .backends
            .generator
            .generate(&request)
            .map_err(|e| with_trace(e, &trace))?;
        Ok(Answer {
            answer: resp.answer,
            confidence: resp.confidence,
            trace,
        })
    }

    /// One generator call per page; the most confident answer wins, ties to
    /// the lowest page. Pages whose call fails are skipped.
    pub fn baseline_maxconf(&self, question: &str, doc_id: &str) -> Result<Answer, AnswerError> {
        let doc = self.corpus.get(doc_id)?;
        let mut trace = self.empty_trace("maxconf", question, doc_id);
        let mut best: Option<(usize, GeneratorResponse, f64)> = None;
        let mut last_err: Option<PipelineError> = None;
        for pi in 0..doc.pages.len() {
            let chunk = page_chunk(doc, pi);
            let request = assemble_text_context(std::slice::from_ref(&chunk), question);
            let outcome = self
                .check_context(&request)
                .and_then(|_| Ok(self.backends.generator.generate(&request)?))
                .and_then(|r| match r.confidence {
                    Some(c) => Ok((r, c)),
                    None => Err(PipelineError::MissingConfidence),
                });
            match outcome {
                Ok((resp, conf)) => {
                    if best.as_ref().is_none_or(|(_, _, b)| conf > *b) {
                        best = Some((pi, resp, conf));
                    }
                }
                Err(e) => {
                    log::warn!("{doc_id}: page {pi} failed: {e}");
                    last_err = Some(e);
                }
            }
        }
        match best {
            Some((pi, resp, conf)) => {
                trace.context_ids = vec![page_chunk(doc, pi).chunk_id];
                trace.context_pages = vec![pi];
                Ok(Answer {
                    answer: resp.answer,
                    confidence: Some(conf),
                    trace,
                })
            }
            None => Err(with_trace(last_err.unwrap_or(PipelineError::NoEvidence), &trace)),
        }
    }
}

/// OCR text whose token centers fall inside the patch band.
fn patch_text(doc: &Document, patch: &PatchSpec) -> String {
    let page = &doc.pages[patch.page_index];
    let h = f64::from(page.height_px);
    let (top, bottom) = (f64::from(patch.y_top), f64::from(patch.y_bottom));
    page.tokens
        .iter()
        .filter(|t| {
            let y = t.bbox.center().1 * h;
            y >= top && y < bottom
        })
        .map(|t| t.text.as_str())
        .collect::<Vec<_>>()
        .join(" ")
}
