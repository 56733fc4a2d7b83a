//! Orchestration: offline indexing, online answering, baselines, pair mining
//! and batch evaluation.

mod answer;
mod eval;

use std::collections::HashMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Duration;

use rayon::prelude::*;
use thiserror::Error;

use crate::backend::BackendError;
use crate::chunking::{chunk_document, dump_chunks, TextChunk};
use crate::config::{BackendSpec, ChunkStrategy, ConfigError, PipelineConfig};
use crate::corpus::{Corpus, CorpusError, Document, QaSample};
use crate::encode::{DenseEncoder, Embedding, MockDenseEncoder, MockMultiEncoder, MultiVectorEncoder};
use crate::generator::{EchoGenerator, Generator, OracleGenerator};
use crate::index::{load_index, save_index, DenseIndex, IndexError, MultiVectorIndex, StoredIndex};
use crate::layout::{layout_chunk_document, LabelMap, LayoutError, RawRegion, RegionTable};
use crate::remote::{
    DetectLayoutRequest, HttpBackend, RemoteDenseEncoder, RemoteGenerator, RemoteMultiEncoder, RemoteScorer,
};
use crate::rerank::{LexicalScorer, RerankScorer};
use crate::visualpatch::{segment_document, PatchError, PatchSpec, VisualInput};

pub use answer::{Answer, AnswerError, RetrievalTrace};
pub use eval::{run_eval, run_eval_with_traces, run_mine, EvalMode};

pub const DENSE_INDEX_FILE: &str = "dense.drag";
pub const MULTI_INDEX_FILE: &str = "multi.drag";
pub const CHUNKS_FILE: &str = "chunks.jsonl";

const EMBED_BATCH: usize = 32;
const PATCH_BATCH: usize = 8;

#[derive(Debug, Error)]
pub enum PipelineError {
    #[error(transparent)]
    Config(#[from] ConfigError),
    #[error(transparent)]
    Corpus(#[from] CorpusError),
    #[error(transparent)]
    Index(#[from] IndexError),
    #[error(transparent)]
    Layout(#[from] LayoutError),
    #[error(transparent)]
    Patch(#[from] PatchError),
    #[error(transparent)]
    Backend(#[from] BackendError),
    #[error("no evidence retrieved")]
    NoEvidence,
    #[error("context too long: {tokens} tokens exceeds {limit}")]
    ContextTooLong { tokens: usize, limit: usize },
    #[error("no {0} index loaded")]
    MissingIndex(&'static str),
    #[error("generator returned no confidence")]
    MissingConfidence,
    #[error("layout chunking needs a regions file or a remote layout detector")]
    NoLayoutSource,
    #[error("bad payload for index entry {id:?}: {message}")]
    Payload { id: String, message: String },
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

impl PipelineError {
    /// Process exit code: 3 for backend failures, 2 for everything else.
    pub fn exit_code(&self) -> i32 {
        match self {
            PipelineError::Backend(BackendError::InvalidInput(_)) => 2,
            PipelineError::Backend(_) | PipelineError::MissingConfidence => 3,
            _ => 2,
        }
    }

    pub(crate) fn io(path: &Path) -> impl FnOnce(std::io::Error) -> PipelineError + '_ {
        move |source| PipelineError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}

/// Page-level layout detection.
pub trait LayoutDetector: Send + Sync {
    fn detect(&self, doc: &Document, page_index: usize) -> Result<Vec<RawRegion>, BackendError>;
}

impl LayoutDetector for HttpBackend {
    fn detect(&self, doc: &Document, page_index: usize) -> Result<Vec<RawRegion>, BackendError> {
        let page = &doc.pages[page_index];
        self.detect_layout(&DetectLayoutRequest {
            image_ref: page.image_ref.clone(),
            page_index,
            width_px: page.width_px,
            height_px: page.height_px,
        })
    }
}

/// The model roles used by the pipeline.
#[derive(Clone)]
pub struct Backends {
    pub encoder: Arc<dyn DenseEncoder>,
    pub multi_encoder: Arc<dyn MultiVectorEncoder>,
    pub scorer: Arc<dyn RerankScorer>,
    pub generator: Arc<dyn Generator>,
    pub layout: Option<Arc<dyn LayoutDetector>>,
}

impl Backends {
    /// Mock encoders, lexical scorer and an oracle generator keyed by `qa`.
    pub fn offline(config: &PipelineConfig, qa: &[QaSample]) -> Self {
        Self {
            encoder: Arc::new(MockDenseEncoder::new(config.backends.mock_dense_dim)),
            multi_encoder: Arc::new(MockMultiEncoder::new(config.backends.mock_multi_width)),
            scorer: Arc::new(LexicalScorer),
            generator: Arc::new(OracleGenerator::from_samples(qa)),
            layout: None,
        }
    }

    /// Builds every role from the configuration. `qa` feeds the oracle generator.
    pub fn from_config(config: &PipelineConfig, qa: &[QaSample]) -> Result<Self, PipelineError> {
        let b = &config.backends;
        let http = |spec: &BackendSpec| -> Result<Option<HttpBackend>, PipelineError> {
            match config.remote_url(spec)? {
                None => Ok(None),
                Some(url) => Ok(Some(HttpBackend::new(
                    &url,
                    b.retries,
                    Duration::from_millis(b.backoff_ms),
                    Duration::from_secs(b.timeout_secs),
                )?)),
            }
        };
        let invalid = |role: &str, spec: &BackendSpec| {
            PipelineError::Config(ConfigError::Invalid(format!("backend {spec} cannot serve as {role}")))
        };

        let encoder: Arc<dyn DenseEncoder> = match (&b.encoder, http(&b.encoder)?) {
            (_, Some(h)) => Arc::new(RemoteDenseEncoder::new(h)),
            (BackendSpec::Mock, None) => Arc::new(MockDenseEncoder::new(b.mock_dense_dim)),
            (s, None) => return Err(invalid("encoder", s)),
        };
        let multi_encoder: Arc<dyn MultiVectorEncoder> = match (&b.multi_encoder, http(&b.multi_encoder)?) {
            (_, Some(h)) => Arc::new(RemoteMultiEncoder::new(h, b.mock_multi_width)),
            (BackendSpec::Mock, None) => Arc::new(MockMultiEncoder::new(b.mock_multi_width)),
            (s, None) => return Err(invalid("multi-vector encoder", s)),
        };
        let scorer: Arc<dyn RerankScorer> = match (&b.scorer, http(&b.scorer)?) {
            (_, Some(h)) => Arc::new(RemoteScorer::new(h)),
            (BackendSpec::Lexical | BackendSpec::Mock, None) => Arc::new(LexicalScorer),
            (s, None) => return Err(invalid("scorer", s)),
        };
        let generator: Arc<dyn Generator> = match (&b.generator, http(&b.generator)?) {
            (_, Some(h)) => Arc::new(RemoteGenerator::new(h)),
            (BackendSpec::Oracle, None) => Arc::new(OracleGenerator::from_samples(qa)),
            (BackendSpec::Echo, None) => Arc::new(EchoGenerator),
            (s, None) => return Err(invalid("generator", s)),
        };
        let layout: Option<Arc<dyn LayoutDetector>> = match &b.endpoint {
            Some(_) => http(&BackendSpec::Remote)?.map(|h| Arc::new(h) as Arc<dyn LayoutDetector>),
            None => None,
        };
        Ok(Self {
            encoder,
            multi_encoder,
            scorer,
            generator,
            layout,
        })
    }
}

/// Which indexes to build.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum IndexMode {
    Text,
    Visual,
    Both,
}

impl IndexMode {
    fn text(self) -> bool {
        matches!(self, IndexMode::Text | IndexMode::Both)
    }

    fn visual(self) -> bool {
        matches!(self, IndexMode::Visual | IndexMode::Both)
    }
}

/// Dense index over text chunks; payloads hold the serialized chunks.
#[derive(Debug, Clone)]
pub struct TextIndex {
    pub index: DenseIndex<f32>,
    pub chunks: Vec<TextChunk>,
}

/// Multi-vector index over visual patches.
#[derive(Debug, Clone)]
pub struct PatchIndex {
    pub index: MultiVectorIndex<f32>,
    pub patches: Vec<PatchSpec>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct IndexSummary {
    pub documents: usize,
    pub chunks: Option<usize>,
    pub patches: Option<usize>,
}

pub struct Engine {
    config: PipelineConfig,
    corpus: Corpus,
    backends: Backends,
    text: Option<TextIndex>,
    visual: Option<PatchIndex>,
    /// Index positions per document, for per-document retrieval.
    text_by_doc: HashMap<String, Vec<bool>>,
    visual_by_doc: HashMap<String, Vec<bool>>,
}

fn membership(doc_ids: impl Iterator<Item = String> + Clone) -> HashMap<String, Vec<bool>> {
    let ids: Vec<String> = doc_ids.collect();
    let mut out: HashMap<String, Vec<bool>> = HashMap::new();
    for (i, d) in ids.iter().enumerate() {
        out.entry(d.clone()).or_insert_with(|| vec![false; ids.len()])[i] = true;
    }
    out
}

impl Engine {
    pub fn new(config: PipelineConfig, corpus: Corpus, backends: Backends) -> Self {
        Self {
            config,
            corpus,
            backends,
            text: None,
            visual: None,
            text_by_doc: HashMap::new(),
            visual_by_doc: HashMap::new(),
        }
    }

    pub fn config(&self) -> &PipelineConfig {
        &self.config
    }

    pub fn corpus(&self) -> &Corpus {
        &self.corpus
    }

    pub fn backends(&self) -> &Backends {
        &self.backends
    }

    pub fn text_index(&self) -> Option<&TextIndex> {
        self.text.as_ref()
    }

    pub fn patch_index(&self) -> Option<&PatchIndex> {
        self.visual.as_ref()
    }

    pub fn set_text_index(&mut self, text: TextIndex) {
        self.text_by_doc = membership(text.chunks.iter().map(|c| c.doc_id.clone()));
        self.text = Some(text);
    }

    pub fn set_patch_index(&mut self, visual: PatchIndex) {
        self.visual_by_doc = membership(visual.patches.iter().map(|p| p.doc_id.clone()));
        self.visual = Some(visual);
    }

    fn region_table(&self) -> Result<Option<RegionTable>, PipelineError> {
        match &self.config.layout.regions {
            Some(path) => Ok(Some(crate::layout::load_regions(path)?)),
            None => Ok(None),
        }
    }

    fn label_map(&self) -> Result<LabelMap, PipelineError> {
        match &self.config.layout.labels {
            None => Ok(LabelMap::default()),
            Some(path) => {
                let text = fs::read_to_string(path).map_err(PipelineError::io(path))?;
                LabelMap::from_toml(&text).map_err(|e| {
                    PipelineError::Config(ConfigError::Parse {
                        path: path.clone(),
                        message: e.to_string(),
                    })
                })
            }
        }
    }

    /// Regions for every page of `doc`, from the table or the detector.
    fn regions_for(&self, doc: &Document, table: Option<&RegionTable>) -> Result<RegionTable, PipelineError> {
        if let Some(t) = table {
            return Ok(t.clone());
        }
        let detector = self.backends.layout.as_ref().ok_or(PipelineError::NoLayoutSource)?;
        let mut out = RegionTable::new();
        for pi in 0..doc.pages.len() {
            out.insert((doc.doc_id.clone(), pi), detector.detect(doc, pi)?);
        }
        Ok(out)
    }

    /// Text chunks of one document under the configured strategy.
    pub fn chunk(&self, doc: &Document) -> Result<Vec<TextChunk>, PipelineError> {
        match self.config.chunk_strategy {
            ChunkStrategy::Window => Ok(chunk_document(doc, &self.config.chunking)),
            ChunkStrategy::Layout => {
                let table = self.region_table()?;
                let regions = self.regions_for(doc, table.as_ref())?;
                Ok(layout_chunk_document(
                    doc,
                    &regions,
                    &self.label_map()?,
                    &self.config.layout.params(),
                )?)
            }
        }
    }

    /// Chunks and embeds the whole corpus, documents in parallel.
    pub fn build_text_index(&self) -> Result<TextIndex, PipelineError> {
        if self.corpus.is_empty() {
            return Err(CorpusError::NoDocuments(PathBuf::new()).into());
        }
        let table = match self.config.chunk_strategy {
            ChunkStrategy::Layout => self.region_table()?,
            ChunkStrategy::Window => None,
        };
        let labels = self.label_map()?;
        let docs: Vec<&Document> = self.corpus.documents().collect();
        let per_doc: Vec<(Vec<TextChunk>, Vec<Embedding<f32>>)> = docs
            .par_iter()
            .map(|doc| {
                let chunks = match self.config.chunk_strategy {
                    ChunkStrategy::Window => chunk_document(doc, &self.config.chunking),
                    ChunkStrategy::Layout => {
                        let regions = self.regions_for(doc, table.as_ref())?;
                        layout_chunk_document(doc, &regions, &labels, &self.config.layout.params())?
                    }
                };
                let mut vectors = Vec::with_capacity(chunks.len());
                for batch in chunks.chunks(EMBED_BATCH) {
                    let texts: Vec<&str> = batch.iter().map(|c| c.text.as_str()).collect();
                    vectors.extend(self.backends.encoder.embed_batch(&texts)?);
                }
                Ok((chunks, vectors))
            })
            .collect::<Result<_, PipelineError>>()?;

        let dim = per_doc
            .iter()
            .find_map(|(_, v)| v.first().map(Embedding::dim))
            .unwrap_or_else(|| self.backends.encoder.dim());
        let mut index = DenseIndex::new(dim);
        let mut all_chunks = Vec::new();
        for (chunks, vectors) in per_doc {
            for (c, v) in chunks.into_iter().zip(vectors) {
                let payload = serde_json::to_string(&c).expect("chunk serialization");
                index.add(&c.chunk_id, &v, payload)?;
                all_chunks.push(c);
            }
        }
        Ok(TextIndex {
            index,
            chunks: all_chunks,
        })
    }

    /// Segments and embeds every page, documents in parallel.
    pub fn build_patch_index(&self) -> Result<PatchIndex, PipelineError> {
        if self.corpus.is_empty() {
            return Err(CorpusError::NoDocuments(PathBuf::new()).into());
        }
        let params = self.config.visual.patch_params();
        let docs: Vec<&Document> = self.corpus.documents().collect();
        let per_doc: Vec<(Vec<PatchSpec>, Vec<_>)> = docs
            .par_iter()
            .map(|doc| {
                let patches = segment_document(doc, &params)?;
                let mut mats = Vec::with_capacity(patches.len());
                for batch in patches.chunks(PATCH_BATCH) {
                    let inputs: Vec<VisualInput> = batch
                        .iter()
                        .map(|p| VisualInput::ImageRegion { region: p.region(doc) })
                        .collect();
                    mats.extend(self.backends.multi_encoder.embed_multi_batch(&inputs)?);
                }
                Ok((patches, mats))
            })
            .collect::<Result<_, PipelineError>>()?;

        let mut index = MultiVectorIndex::new(self.backends.multi_encoder.width());
        let mut all = Vec::new();
        for (patches, mats) in per_doc {
            for (p, m) in patches.into_iter().zip(mats) {
                let payload = serde_json::to_string(&p).expect("patch serialization");
                index.add(&p.patch_id(), m, payload)?;
                all.push(p);
            }
        }
        Ok(PatchIndex { index, patches: all })
    }

    /// Builds the requested indexes and keeps them in the engine.
    pub fn build(&mut self, mode: IndexMode) -> Result<IndexSummary, PipelineError> {
        let mut summary = IndexSummary {
            documents: self.corpus.len(),
            ..Default::default()
        };
        if mode.text() {
            let t = self.build_text_index()?;
            summary.chunks = Some(t.chunks.len());
            self.set_text_index(t);
        }
        if mode.visual() {
            let v = self.build_patch_index()?;
            summary.patches = Some(v.patches.len());
            self.set_patch_index(v);
        }
        Ok(summary)
    }

    /// Writes the loaded indexes (and a chunk dump) into `dir`.
    pub fn save(&self, dir: &Path) -> Result<(), PipelineError> {
        fs::create_dir_all(dir).map_err(PipelineError::io(dir))?;
        if let Some(t) = &self.text {
            save_index(&t.index, &dir.join(DENSE_INDEX_FILE))?;
            let path = dir.join(CHUNKS_FILE);
            fs::write(&path, dump_chunks(&t.chunks)).map_err(PipelineError::io(&path))?;
        }
        if let Some(v) = &self.visual {
            save_index(&v.index, &dir.join(MULTI_INDEX_FILE))?;
        }
        Ok(())
    }

    /// Loads whichever index files exist in `dir`; returns what was found.
    pub fn load(&mut self, dir: &Path) -> Result<IndexMode, PipelineError> {
        if !dir.is_dir() {
            let source = std::io::Error::new(std::io::ErrorKind::NotFound, "index directory not found");
            return Err(PipelineError::Io {
                path: dir.to_path_buf(),
                source,
            });
        }
        let dense = dir.join(DENSE_INDEX_FILE);
        let multi = dir.join(MULTI_INDEX_FILE);
        if dense.exists() {
            let StoredIndex::Dense(index) = load_index(&dense)? else {
                return Err(IndexError::Format(format!("{} is not a dense index", dense.display())).into());
            };
            let chunks = (0..index.len())
                .map(|i| {
                    serde_json::from_str::<TextChunk>(index.payload(i)).map_err(|e| PipelineError::Payload {
                        id: index.id(i).to_string(),
                        message: e.to_string(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            self.set_text_index(TextIndex { index, chunks });
        }
        if multi.exists() {
            let StoredIndex::Multi(index) = load_index(&multi)? else {
                return Err(IndexError::Format(format!("{} is not a multi-vector index", multi.display())).into());
            };
            let patches = (0..index.len())
                .map(|i| {
                    serde_json::from_str::<PatchSpec>(index.payload(i)).map_err(|e| PipelineError::Payload {
                        id: index.id(i).to_string(),
                        message: e.to_string(),
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            self.set_patch_index(PatchIndex { index, patches });
        }
        match (self.text.is_some(), self.visual.is_some()) {
            (true, true) => Ok(IndexMode::Both),
            (true, false) => Ok(IndexMode::Text),
            (false, true) => Ok(IndexMode::Visual),
            (false, false) => Err(PipelineError::MissingIndex("dense or multi-vector")),
        }
    }
}

/// Loads the corpus in `corpus_dir`, builds the requested indexes and
/// writes them to `out_dir`.
pub fn run_index(
    corpus_dir: &Path,
    out_dir: &Path,
    config: &PipelineConfig,
    backends: Backends,
    mode: IndexMode,
) -> Result<IndexSummary, PipelineError> {
    let corpus = Corpus::load_dir(corpus_dir)?;
    let mut engine = Engine::new(config.clone(), corpus, backends);
    let summary = engine.build(mode)?;
    engine.save(out_dir)?;
    Ok(summary)
}
