//! HTTP+JSON client for remote model backends.
//!
//! Endpoints: `/embed`, `/embed_multi`, `/rerank`, `/generate`,
//! `/detect_layout`. Retryable failures (transport errors, 429, 5xx) are
//! retried with exponential backoff.

use std::sync::OnceLock;
use std::time::Duration;

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use crate::backend::BackendError;
use crate::encode::{DenseEncoder, Embedding, MultiVector, MultiVectorEncoder};
use crate::generator::{Generator, GeneratorRequest, GeneratorResponse};
use crate::layout::RawRegion;
use crate::rerank::RerankScorer;
use crate::visualpatch::VisualInput;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedRequest {
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedResponse {
    pub vectors: Vec<Vec<f32>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedMultiRequest {
    pub inputs: Vec<VisualInput>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EmbedMultiResponse {
    /// One row-major matrix per input.
    pub matrices: Vec<Vec<Vec<f32>>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankRequest {
    pub query: String,
    pub texts: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RerankResponse {
    pub scores: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectLayoutRequest {
    pub image_ref: String,
    pub page_index: usize,
    pub width_px: u32,
    pub height_px: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectLayoutResponse {
    pub regions: Vec<RawRegion>,
}

/// Pooled blocking client bound to one base URL.
#[derive(Debug, Clone)]
pub struct HttpBackend {
    base: String,
    client: reqwest::blocking::Client,
    retries: u32,
    backoff: Duration,
}

impl HttpBackend {
    pub fn new(base: &str, retries: u32, backoff: Duration, timeout: Duration) -> Result<Self, BackendError> {
        let client = reqwest::blocking::Client::builder()
            .timeout(timeout)
            .build()
            .map_err(|e| BackendError::Transport {
                endpoint: base.to_string(),
                message: e.to_string(),
            })?;
        Ok(Self {
            base: base.trim_end_matches('/').to_string(),
            client,
            retries,
            backoff,
        })
    }

    pub fn base(&self) -> &str {
        &self.base
    }

    fn post_once<Req: Serialize, Resp: DeserializeOwned>(
        &self,
        url: &str,
        body: &Req,
    ) -> Result<Resp, (BackendError, Option<Duration>)> {
        let transport = |e: reqwest::Error| {
            (
                BackendError::Transport {
                    endpoint: url.to_string(),
                    message: e.to_string(),
                },
                None,
            )
        };
        let resp = self.client.post(url).json(body).send().map_err(transport)?;
        let status = resp.status();
        if !status.is_success() {
            let retry_after = resp
                .headers()
                .get("retry-after")
                .and_then(|v| v.to_str().ok())
                .and_then(|v| v.trim().parse::<u64>().ok())
                .map(Duration::from_secs);
            let body = resp.text().unwrap_or_default();
            return Err((
                BackendError::Status {
                    endpoint: url.to_string(),
                    status: status.as_u16(),
                    body,
                },
                retry_after,
            ));
        }
        let text = resp.text().map_err(transport)?;
        serde_json::from_str(&text).map_err(|e| {
            (
                BackendError::Protocol {
                    endpoint: url.to_string(),
                    message: e.to_string(),
                },
                None,
            )
        })
    }

    /// POSTs `body` to `path`, retrying retryable failures.
    pub fn post<Req: Serialize, Resp: DeserializeOwned>(&self, path: &str, body: &Req) -> Result<Resp, BackendError> {
        let url = format!("{}{}", self.base, path);
        let mut attempt = 0u32;
        loop {
            match self.post_once(&url, body) {
                Ok(r) => return Ok(r),
                Err((e, retry_after)) if e.is_retryable() && attempt < self.retries => {
                    let wait = self.backoff * 2u32.pow(attempt);
                    let wait = retry_after.map_or(wait, |r| r.max(wait));
                    log::warn!("{e}; retry {} of {} in {wait:?}", attempt + 1, self.retries);
                    std::thread::sleep(wait);
                    attempt += 1;
                }
                Err((e, _)) => return Err(e),
            }
        }
    }

    pub fn detect_layout(&self, request: &DetectLayoutRequest) -> Result<Vec<RawRegion>, BackendError> {
        let resp: DetectLayoutResponse = self.post("/detect_layout", request)?;
        Ok(resp.regions)
    }
}

fn protocol(backend: &HttpBackend, path: &str, message: String) -> BackendError {
    BackendError::Protocol {
        endpoint: format!("{}{}", backend.base, path),
        message,
    }
}

/// Dense encoder served over `/embed`. The dimension is learned from the
/// first response.
#[derive(Debug)]
pub struct RemoteDenseEncoder {
    http: HttpBackend,
    dim: OnceLock<usize>,
}

impl RemoteDenseEncoder {
    pub fn new(http: HttpBackend) -> Self {
        Self {
            http,
            dim: OnceLock::new(),
        }
    }
}

impl DenseEncoder for RemoteDenseEncoder {
    /// Probes the endpoint if no vector has been seen yet; 0 if that fails.
    fn dim(&self) -> usize {
        if let Some(d) = self.dim.get() {
            return *d;
        }
        match self.embed_batch(&["dimension probe"]) {
            Ok(v) => v[0].dim(),
            Err(e) => {
                log::error!("cannot determine encoder dimension: {e}");
                0
            }
        }
    }

    fn embed_batch(&self, texts: &[&str]) -> Result<Vec<Embedding<f32>>, BackendError> {
        let req = EmbedRequest {
            texts: texts.iter().map(|t| t.to_string()).collect(),
        };
        let resp: EmbedResponse = self.http.post("/embed", &req)?;
        if resp.vectors.len() != texts.len() {
            return Err(protocol(
                &self.http,
                "/embed",
                format!("{} vectors for {} texts", resp.vectors.len(), texts.len()),
            ));
        }
        let mut out = Vec::with_capacity(resp.vectors.len());
        for v in resp.vectors {
            let e = Embedding::normalized(v).map_err(|e| protocol(&self.http, "/embed", e.to_string()))?;
            let dim = *self.dim.get_or_init(|| e.dim());
            if e.dim() != dim {
                return Err(protocol(
                    &self.http,
                    "/embed",
                    format!("dimension {} after {dim}", e.dim()),
                ));
            }
            out.push(e);
        }
        Ok(out)
    }
}

#[derive(Debug)]
pub struct RemoteMultiEncoder {
    http: HttpBackend,
    width: usize,
}

impl RemoteMultiEncoder {
    pub fn new(http: HttpBackend, width: usize) -> Self {
        Self { http, width }
    }
}

impl MultiVectorEncoder for RemoteMultiEncoder {
    fn width(&self) -> usize {
        self.width
    }

    fn embed_multi_batch(&self, inputs: &[VisualInput]) -> Result<Vec<MultiVector<f32>>, BackendError> {
        let req = EmbedMultiRequest {
            inputs: inputs.to_vec(),
        };
        let resp: EmbedMultiResponse = self.http.post("/embed_multi", &req)?;
        if resp.matrices.len() != inputs.len() {
            return Err(protocol(
                &self.http,
                "/embed_multi",
                format!("{} matrices for {} inputs", resp.matrices.len(), inputs.len()),
            ));
        }
        resp.matrices
            .into_iter()
            .map(|rows| {
                let m =
                    MultiVector::from_rows(rows).map_err(|e| protocol(&self.http, "/embed_multi", e.to_string()))?;
                if m.cols() != self.width {
                    return Err(protocol(
                        &self.http,
                        "/embed_multi",
                        format!("width {} but {} configured", m.cols(), self.width),
                    ));
                }
                Ok(m)
            })
            .collect()
    }
}

#[derive(Debug)]
pub struct RemoteScorer {
    http: HttpBackend,
}

impl RemoteScorer {
    pub fn new(http: HttpBackend) -> Self {
        Self { http }
    }
}

impl RerankScorer for RemoteScorer {
    fn score(&self, query: &str, text: &str) -> Result<f64, BackendError> {
        self.score_batch(query, &[text]).pop().expect("one result per text")
    }

    fn score_batch(&self, query: &str, texts: &[&str]) -> Vec<Result<f64, BackendError>> {
        let req = RerankRequest {
            query: query.to_string(),
            texts: texts.iter().map(|t| t.to_string()).collect(),
        };
        let resp: Result<RerankResponse, _> = self.http.post("/rerank", &req);
        match resp {
            Ok(r) if r.scores.len() == texts.len() => r.scores.into_iter().map(Ok).collect(),
            Ok(r) => {
                let e = protocol(
                    &self.http,
                    "/rerank",
                    format!("{} scores for {} texts", r.scores.len(), texts.len()),
                );
                vec![Err(e); texts.len()]
            }
            Err(e) => vec![Err(e); texts.len()],
        }
    }
}

#[derive(Debug)]
pub struct RemoteGenerator {
    http: HttpBackend,
}

impl RemoteGenerator {
    pub fn new(http: HttpBackend) -> Self {
        Self { http }
    }
}

impl Generator for RemoteGenerator {
    fn generate(&self, request: &GeneratorRequest) -> Result<GeneratorResponse, BackendError> {
        let resp: GeneratorResponse = self.http.post("/generate", request)?;
        if let Some(c) = resp.confidence {
            if !(0.0..=1.0).contains(&c) {
                return Err(protocol(
                    &self.http,
                    "/generate",
                    format!("confidence {c} outside [0,1]"),
                ));
            }
        }
        Ok(resp)
    }
}
