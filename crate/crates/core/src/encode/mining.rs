//! Anchor-positive pair mining for contrastive fine-tuning of the dense encoder.

use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::QaSample;
use crate::metrics::{anls, ANLS_THRESHOLD};

/// Pairs must score strictly above this ANLS.
pub const DEFAULT_MINING_THRESHOLD: f64 = 0.8;

/// A retrieved unit offered to the generator on its own.
#[derive(Debug, Clone, PartialEq)]
pub struct Candidate {
    pub unit_id: String,
    pub text: String,
}

/// One line of the mined-pairs export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AnchorPositive {
    pub query: String,
    pub chunk_id: String,
    pub chunk_text: String,
    #[serde(rename = "anls")]
    pub achieved_anls: f64,
}

/// For each sample, answers from every retrieved candidate separately and
/// keeps the candidate with the best ANLS (earlier rank wins ties). A pair is
/// emitted only when that ANLS is strictly greater than `threshold`.
///
/// A failed generator call scores 0 for that candidate; a failed retrieval
/// skips the sample.
pub fn mine_pairs<R, G, E1, E2>(
    samples: &[QaSample],
    mut retrieve: R,
    mut generate: G,
    threshold: f64,
) -> Vec<AnchorPositive>
where
    R: FnMut(&QaSample) -> Result<Vec<Candidate>, E1>,
    G: FnMut(&QaSample, &Candidate) -> Result<String, E2>,
    E1: std::fmt::Display,
    E2: std::fmt::Display,
{
    let mut out = Vec::new();
    for sample in samples {
        let candidates = match retrieve(sample) {
            Ok(c) => c,
            Err(e) => {
                log::warn!("mining: retrieval failed for {:?}: {e}", sample.question);
                continue;
            }
        };
        let mut best: Option<(f64, &Candidate)> = None;
        for cand in &candidates {
            let score = match generate(sample, cand) {
                Ok(answer) => anls(&answer, &sample.answers, ANLS_THRESHOLD),
                Err(e) => {
                    log::warn!("mining: generator failed on {}: {e}", cand.unit_id);
                    0.0
                }
            };
            if best.is_none_or(|(b, _)| score > b) {
                best = Some((score, cand));
            }
        }
        if let Some((score, cand)) = best {
            if score > threshold {
                out.push(AnchorPositive {
                    query: sample.question.clone(),
                    chunk_id: cand.unit_id.clone(),
                    chunk_text: cand.text.clone(),
                    achieved_anls: score,
                });
            }
        }
    }
    out
}

pub fn write_pairs(pairs: &[AnchorPositive], path: &Path) -> std::io::Result<()> {
    let mut s = String::new();
    for p in pairs {
        s.push_str(&serde_json::to_string(p).map_err(std::io::Error::other)?);
        s.push('\n');
    }
    fs::write(path, s)
}

pub fn parse_pairs(text: &str) -> Result<Vec<AnchorPositive>, serde_json::Error> {
    text.lines()
        .filter(|l| !l.trim().is_empty())
        .map(serde_json::from_str)
        .collect()
}
