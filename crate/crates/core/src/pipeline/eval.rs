//! Batch evaluation and anchor-positive mining.

use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;

use super::{Answer, AnswerError, Engine, PipelineError, RetrievalTrace};
use crate::chunking::assemble_text_context;
use crate::corpus::QaSample;
use crate::encode::{mine_pairs, AnchorPositive, Candidate};
use crate::metrics::{
    accuracy, anls, chunk_score_any, retrieval_precision_any, EvalReport, SampleRecord, ANLS_THRESHOLD,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalMode {
    RagText,
    RagVisual,
    Concat,
    MaxConf,
}

impl EvalMode {
    pub const ALL: [EvalMode; 4] = [
        EvalMode::RagText,
        EvalMode::RagVisual,
        EvalMode::Concat,
        EvalMode::MaxConf,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            EvalMode::RagText => "rag-text",
            EvalMode::RagVisual => "rag-visual",
            EvalMode::Concat => "concat",
            EvalMode::MaxConf => "maxconf",
        }
    }

    fn retrieves(self) -> bool {
        matches!(self, EvalMode::RagText | EvalMode::RagVisual)
    }
}

impl fmt::Display for EvalMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EvalMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        EvalMode::ALL
            .into_iter()
            .find(|m| m.as_str() == s)
            .ok_or_else(|| format!("unknown mode {s:?} (expected rag-text, rag-visual, concat or maxconf)"))
    }
}

impl Engine {
    pub fn answer(&self, mode: EvalMode, question: &str, doc_id: &str) -> Result<Answer, AnswerError> {
        match mode {
            EvalMode::RagText => self.answer_textual(question, doc_id),
            EvalMode::RagVisual => self.answer_visual(question, doc_id),
            EvalMode::Concat => self.baseline_concat(question, doc_id),
            EvalMode::MaxConf => self.baseline_maxconf(question, doc_id),
        }
    }

    fn evaluate_sample(&self, mode: EvalMode, id: usize, sample: &QaSample) -> (SampleRecord, Option<RetrievalTrace>) {
        let outcome = self
            .corpus
            .check_sample(sample)
            .map_err(AnswerError::from)
            .and_then(|_| self.answer(mode, &sample.question, &sample.doc_id));
        let (prediction, trace, error) = match outcome {
            Ok(a) => (Some(a.answer), Some(a.trace), None),
            Err(e) => {
                log::warn!("sample {id} ({}): {}", sample.doc_id, e.error);
                (None, e.trace.map(|t| *t), Some(e.error.to_string()))
            }
        };
        let (anls_v, acc) = match &prediction {
            Some(p) => (
                anls(p, &sample.answers, ANLS_THRESHOLD),
                f64::from(accuracy(p, &sample.answers)),
            ),
            None => (0.0, 0.0),
        };
        let (pages, ids, texts) = trace
            .as_ref()
            .map(|t| {
                (
                    t.context_pages.clone(),
                    t.context_ids.clone(),
                    t.context_texts.as_slice(),
                )
            })
            .unwrap_or_default();
        let (precision, chunk_score) = if mode.retrieves() {
            (
                retrieval_precision_any(&sample.answer_pages, &pages).map(f64::from),
                Some(chunk_score_any(texts, &sample.answers)),
            )
        } else {
            (None, None)
        };
        let record = SampleRecord {
            sample_id: id,
            doc_id: sample.doc_id.clone(),
            question: sample.question.clone(),
            prediction,
            anls: anls_v,
            accuracy: acc,
            retrieval_precision: precision,
            chunk_score,
            retrieved_ids: ids,
            retrieved_pages: pages,
            error,
        };
        (record, trace)
    }
}

fn in_pool<T: Send>(workers: usize, f: impl FnOnce() -> T + Send) -> T {
    if workers == 0 {
        return f();
    }
    match rayon::ThreadPoolBuilder::new().num_threads(workers).build() {
        Ok(pool) => pool.install(f),
        Err(e) => {
            log::warn!("cannot build a {workers}-thread pool ({e}), using the global pool");
            f()
        }
    }
}

/// Evaluates every sample; also returns the per-sample traces in sample order.
pub fn run_eval_with_traces(
    engine: &Engine,
    samples: &[QaSample],
    mode: EvalMode,
) -> (EvalReport, Vec<Option<RetrievalTrace>>) {
    let results: Vec<(SampleRecord, Option<RetrievalTrace>)> = in_pool(engine.config.workers, || {
        samples
            .par_iter()
            .enumerate()
            .map(|(i, s)| engine.evaluate_sample(mode, i, s))
            .collect()
    });
    let (records, traces): (Vec<_>, Vec<_>) = results.into_iter().unzip();
    let k = match mode {
        EvalMode::RagText => Some(engine.config.k),
        EvalMode::RagVisual => Some(engine.config.visual.k),
        EvalMode::Concat | EvalMode::MaxConf => None,
    };
    (EvalReport::from_records(mode.as_str(), k, records), traces)
}

/// Per-sample failures are recorded and scored 0; the batch never aborts.
pub fn run_eval(engine: &Engine, samples: &[QaSample], mode: EvalMode) -> EvalReport {
    run_eval_with_traces(engine, samples, mode).0
}

/// Answers each sample from every reranked chunk alone and keeps the pairs
/// whose best ANLS exceeds the configured threshold.
pub fn run_mine(engine: &Engine, samples: &[QaSample]) -> Vec<AnchorPositive> {
    let retrieve = |s: &QaSample| -> Result<Vec<Candidate>, PipelineError> {
        engine.corpus.check_sample(s)?;
        let (_, reranked) = engine.retrieve_text(&s.question, &s.doc_id)?;
        Ok(reranked
            .iter()
            .filter_map(|r| engine.chunk_by_id(&r.unit_id))
            .map(|c| Candidate {
                unit_id: c.chunk_id.clone(),
                text: c.text.clone(),
            })
            .collect())
    };
    let generate = |s: &QaSample, c: &Candidate| -> Result<String, PipelineError> {
        let chunk = engine.chunk_by_id(&c.unit_id).ok_or(PipelineError::NoEvidence)?;
        let request = assemble_text_context(std::slice::from_ref(chunk), &s.question);
        engine.check_context(&request)?;
        Ok(engine.backends.generator.generate(&request)?.answer)
    };
    mine_pairs(samples, retrieve, generate, engine.config.mining_threshold)
}
