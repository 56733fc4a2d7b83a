//! Generator contract and the offline generators used for testing.

use std::collections::HashMap;

use serde::{Deserialize, Serialize};

use crate::backend::BackendError;
use crate::chunking::GridLayout;
use crate::corpus::{BBox, ImageRegionRef, QaSample};
use crate::visualpatch::{PatchSpec, Tiling};

pub const SHORT_ANSWER_PROMPT: &str = "Directly provide only a short answer to the question.";

/// Visual evidence: merged patches, their page regions and the mini-patch tiling.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VisualContext {
    pub patches: Vec<PatchSpec>,
    pub regions: Vec<ImageRegionRef>,
    pub tiling: Tiling,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorRequest {
    pub question: String,
    pub prompt: Option<String>,
    /// Question tokens followed by evidence tokens; aligned with `boxes`.
    pub tokens: Vec<String>,
    pub boxes: Vec<BBox>,
    /// Evidence units in the order they were placed in the context.
    pub evidence_ids: Vec<String>,
    /// Plain text per evidence unit. In visual mode this carries any OCR
    /// text lying inside each patch, for offline generators only.
    pub evidence_texts: Vec<String>,
    pub crops: Vec<ImageRegionRef>,
    pub crop_grid: Option<GridLayout>,
    pub visual: Option<VisualContext>,
}

impl GeneratorRequest {
    /// Number of evidence tokens (question tokens excluded).
    pub fn context_tokens(&self) -> usize {
        let q = self.question.split_whitespace().count();
        self.tokens.len().saturating_sub(q)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorResponse {
    pub answer: String,
    /// In `[0,1]`; required by the max-confidence baseline.
    #[serde(default)]
    pub confidence: Option<f64>,
}

pub trait Generator: Send + Sync {
    fn generate(&self, request: &GeneratorRequest) -> Result<GeneratorResponse, BackendError>;
}

/// Knows the gold answers and returns one iff it occurs verbatim in some
/// evidence text (confidence 1), otherwise an empty answer (confidence 0).
#[derive(Debug, Clone, Default)]
pub struct OracleGenerator {
    answers: HashMap<String, Vec<String>>,
}

impl OracleGenerator {
    pub fn new(answers: HashMap<String, Vec<String>>) -> Self {
        Self { answers }
    }

    /// Answer key built from QA samples, keyed by question text.
    pub fn from_samples(samples: &[QaSample]) -> Self {
        let mut answers: HashMap<String, Vec<String>> = HashMap::new();
        for s in samples {
            answers
                .entry(s.question.clone())
                .or_default()
                .extend(s.answers.iter().cloned());
        }
        Self { answers }
    }
}

impl Generator for OracleGenerator {
    fn generate(&self, request: &GeneratorRequest) -> Result<GeneratorResponse, BackendError> {
        let hit = self.answers.get(&request.question).and_then(|gts| {
            gts.iter()
                .find(|a| request.evidence_texts.iter().any(|t| t.contains(a.as_str())))
        });
        Ok(match hit {
            Some(a) => GeneratorResponse {
                answer: a.clone(),
                confidence: Some(1.0),
            },
            None => GeneratorResponse {
                answer: String::new(),
                confidence: Some(0.0),
            },
        })
    }
}

/// Test profile: answers with the first line of the evidence context.
#[derive(Debug, Clone, Copy, Default)]
pub struct EchoGenerator;

impl Generator for EchoGenerator {
    fn generate(&self, request: &GeneratorRequest) -> Result<GeneratorResponse, BackendError> {
        let context = request.evidence_texts.join("\n");
        Ok(GeneratorResponse {
            answer: context.lines().next().unwrap_or_default().to_string(),
            confidence: Some(1.0),
        })
    }
}
