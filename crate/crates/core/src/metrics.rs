//! Answer and retrieval quality metrics.
//!
//! String comparisons are case-folded and whitespace-trimmed. Edit distances
//! count Unicode scalar values, not bytes.

use serde::{Deserialize, Serialize};

/// Similarities below this are truncated to zero by [`anls`].
pub const ANLS_THRESHOLD: f64 = 0.5;

fn fold(s: &str) -> Vec<char> {
    s.trim().to_lowercase().chars().collect()
}

/// Levenshtein distance over two char slices, O(min(n,m)) memory.
pub fn levenshtein(a: &[char], b: &[char]) -> usize {
    let (long, short) = if a.len() >= b.len() { (a, b) } else { (b, a) };
    if short.is_empty() {
        return long.len();
    }
    let mut prev: Vec<usize> = (0..=short.len()).collect();
    let mut cur = vec![0; short.len() + 1];
    for (i, &lc) in long.iter().enumerate() {
        cur[0] = i + 1;
        for (j, &sc) in short.iter().enumerate() {
            let sub = prev[j] + usize::from(lc != sc);
            cur[j + 1] = sub.min(prev[j + 1] + 1).min(cur[j] + 1);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    prev[short.len()]
}

fn nld_chars(a: &[char], b: &[char]) -> f64 {
    let m = a.len().max(b.len());
    if m == 0 {
        0.0
    } else {
        levenshtein(a, b) as f64 / m as f64
    }
}

/// Normalized Levenshtein distance in `[0,1]`; `nld("", "") = 0`.
pub fn nld(a: &str, b: &str) -> f64 {
    nld_chars(&fold(a), &fold(b))
}

/// Best `1 − nld` against any ground truth, zeroed below `threshold`.
pub fn anls(pred: &str, gts: &[String], threshold: f64) -> f64 {
    let s = gts.iter().map(|g| 1.0 - nld(pred, g)).fold(0.0, f64::max);
    if s >= threshold {
        s
    } else {
        0.0
    }
}

fn normalize_answer(s: &str) -> String {
    s.split_whitespace().collect::<Vec<_>>().join(" ").to_lowercase()
}

/// 1 when the prediction equals some ground truth after case folding,
/// trimming and whitespace collapsing. Punctuation is significant.
pub fn accuracy(pred: &str, gts: &[String]) -> u8 {
    let p = normalize_answer(pred);
    u8::from(gts.iter().any(|g| normalize_answer(g) == p))
}

/// 1 iff some retrieved unit comes from the ground-truth page.
pub fn retrieval_precision_at_k(gt_page: usize, retrieved_pages: &[usize]) -> u8 {
    u8::from(retrieved_pages.contains(&gt_page))
}

/// Any-of variant for samples listing several answer pages; `None` when the
/// sample has no page annotation.
pub fn retrieval_precision_any(gt_pages: &[usize], retrieved_pages: &[usize]) -> Option<u8> {
    if gt_pages.is_empty() {
        None
    } else {
        Some(u8::from(gt_pages.iter().any(|&p| retrieved_pages.contains(&p))))
    }
}

/// Best `1 − nld(answer, window)` over every character window of the chunk
/// whose length equals the answer's. A chunk shorter than the answer is
/// compared whole.
pub fn substring_sim(chunk_text: &str, answer: &str) -> f64 {
    let ans = fold(answer);
    if ans.is_empty() {
        return 0.0;
    }
    let chunk: Vec<char> = chunk_text.to_lowercase().chars().collect();
    if chunk.len() < ans.len() {
        return 1.0 - nld_chars(&ans, trim_chars(&chunk));
    }
    let mut best: f64 = 0.0;
    for window in chunk.windows(ans.len()) {
        best = best.max(1.0 - nld_chars(&ans, trim_chars(window)));
        if best == 1.0 {
            break;
        }
    }
    best
}

fn trim_chars(s: &[char]) -> &[char] {
    let start = s.iter().position(|c| !c.is_whitespace()).unwrap_or(s.len());
    let end = s.iter().rposition(|c| !c.is_whitespace()).map_or(start, |e| e + 1);
    &s[start..end]
}

/// `log2(1 + max_j substring_sim(c_j, answer))`, in `[0,1]`.
pub fn chunk_score_at_k<T: AsRef<str>>(chunks: &[T], answer: &str) -> f64 {
    let best = chunks
        .iter()
        .map(|c| substring_sim(c.as_ref(), answer))
        .fold(0.0, f64::max);
    (1.0 + best).log2()
}

/// Chunk score against the best-matching of several ground truths.
pub fn chunk_score_any<T: AsRef<str>>(chunks: &[T], answers: &[String]) -> f64 {
    answers.iter().map(|a| chunk_score_at_k(chunks, a)).fold(0.0, f64::max)
}

/// Outcome of one evaluated question.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SampleRecord {
    pub sample_id: usize,
    pub doc_id: String,
    pub question: String,
    pub prediction: Option<String>,
    pub anls: f64,
    pub accuracy: f64,
    /// `None` when the mode has no retrieval or the sample has no answer page.
    pub retrieval_precision: Option<f64>,
    pub chunk_score: Option<f64>,
    pub retrieved_ids: Vec<String>,
    pub retrieved_pages: Vec<usize>,
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub mode: String,
    /// Retrieval depth used for the retrieval metrics, when applicable.
    pub k: Option<usize>,
    pub n_samples: usize,
    pub anls: Option<f64>,
    pub accuracy: Option<f64>,
    pub retrieval_precision_at_k: Option<f64>,
    pub chunk_score_at_k: Option<f64>,
    /// Samples without a ground-truth page, left out of Retrieval Precision.
    pub n_precision_excluded: usize,
    pub n_failed: usize,
    pub records: Vec<SampleRecord>,
}

fn mean(values: impl Iterator<Item = f64>) -> Option<f64> {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    (n > 0).then(|| sum / n as f64)
}

impl EvalReport {
    /// Aggregates records; summation runs in `sample_id` order.
    pub fn from_records(mode: &str, k: Option<usize>, mut records: Vec<SampleRecord>) -> Self {
        records.sort_by_key(|r| r.sample_id);
        let retrieval_mode = k.is_some();
        EvalReport {
            mode: mode.to_string(),
            k,
            n_samples: records.len(),
            anls: mean(records.iter().map(|r| r.anls)),
            accuracy: mean(records.iter().map(|r| r.accuracy)),
            retrieval_precision_at_k: mean(records.iter().filter_map(|r| r.retrieval_precision)),
            chunk_score_at_k: mean(records.iter().filter_map(|r| r.chunk_score)),
            n_precision_excluded: if retrieval_mode {
                records.iter().filter(|r| r.retrieval_precision.is_none()).count()
            } else {
                0
            },
            n_failed: records.iter().filter(|r| r.error.is_some()).count(),
            records,
        }
    }

    /// `metric,value` summary; undefined aggregates are left empty.
    pub fn summary_csv(&self) -> String {
        let mut w = csv::Writer::from_writer(Vec::new());
        let opt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        let rows = [
            ("mode", self.mode.clone()),
            ("n_samples", self.n_samples.to_string()),
            ("anls", opt(self.anls)),
            ("accuracy", opt(self.accuracy)),
            ("retrieval_precision_at_k", opt(self.retrieval_precision_at_k)),
            ("chunk_score_at_k", opt(self.chunk_score_at_k)),
            ("n_precision_excluded", self.n_precision_excluded.to_string()),
            ("n_failed", self.n_failed.to_string()),
        ];
        w.write_record(["metric", "value"]).expect("csv write");
        for (k, v) in rows {
            w.write_record([k, v.as_str()]).expect("csv write");
        }
        String::from_utf8(w.into_inner().expect("csv flush")).expect("utf8 csv")
    }
}
