//! Layout-region chunking: detector regions are filtered, their labels
//! simplified, their centroids clustered per page, and each cluster becomes
//! one rectangular chunk.

mod spectral;

use std::collections::{BTreeMap, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::chunking::{make_chunk, ChunkSource, TextChunk};
use crate::corpus::{BBox, Document};

pub use spectral::{
    build_graph, compact_labels, kmeans, select_clusters, silhouette, spectral_cluster, symmetric_eigen, Clustering,
    WeightMatrix, INVERSE_DISTANCE_EPS, KMEANS_RESTARTS, MAX_CLUSTERS,
};

#[derive(Debug, Error)]
pub enum LayoutError {
    #[error("n_clusters {n_clusters} out of range 2..={} for {n} points", n.saturating_sub(1))]
    ClusterCount { n_clusters: usize, n: usize },
    #[error("unknown layout label {0:?}")]
    UnknownLabel(String),
    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Parse {
        path: PathBuf,
        line: usize,
        message: String,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SimpleLabel {
    Title,
    Text,
    Figure,
    Table,
}

/// Mapping from detector labels to the four simplified categories.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelMap {
    pub labels: BTreeMap<String, SimpleLabel>,
}

fn label_key(raw: &str) -> String {
    raw.trim().to_lowercase().replace(['_', ' '], "-")
}

impl Default for LabelMap {
    /// The eleven DocLayNet classes.
    fn default() -> Self {
        use SimpleLabel::*;
        let table = [
            ("caption", Text),
            ("footnote", Text),
            ("formula", Text),
            ("list-item", Text),
            ("page-footer", Text),
            ("page-header", Text),
            ("picture", Figure),
            ("section-header", Title),
            ("table", Table),
            ("text", Text),
            ("title", Title),
        ];
        LabelMap {
            labels: table.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        }
    }
}

impl LabelMap {
    /// Parses a TOML table of `raw_label = "title" | "text" | "figure" | "table"`
    /// under a `[labels]` header.
    pub fn from_toml(text: &str) -> Result<Self, toml::de::Error> {
        let map: LabelMap = toml::from_str(text)?;
        Ok(LabelMap {
            labels: map.labels.into_iter().map(|(k, v)| (label_key(&k), v)).collect(),
        })
    }

    pub fn simplify(&self, raw: &str) -> Result<SimpleLabel, LayoutError> {
        self.labels
            .get(&label_key(raw))
            .copied()
            .ok_or_else(|| LayoutError::UnknownLabel(raw.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LayoutRegion {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub raw_label: String,
    pub simple_label: SimpleLabel,
    pub score: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawRegion {
    #[serde(rename = "box")]
    pub bbox: BBox,
    pub raw_label: String,
    pub score: f64,
}

impl RawRegion {
    pub fn resolve(&self, map: &LabelMap) -> Result<LayoutRegion, LayoutError> {
        Ok(LayoutRegion {
            bbox: self.bbox,
            raw_label: self.raw_label.clone(),
            simple_label: map.simplify(&self.raw_label)?,
            score: self.score,
        })
    }
}

/// One line of the region input file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PageRegions {
    pub doc_id: String,
    pub page_index: usize,
    pub regions: Vec<RawRegion>,
}

/// Regions per `(doc_id, page_index)`.
pub type RegionTable = HashMap<(String, usize), Vec<RawRegion>>;

pub fn parse_regions(text: &str, path: &Path) -> Result<RegionTable, LayoutError> {
    let mut table = RegionTable::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let pr: PageRegions = serde_json::from_str(line).map_err(|e| LayoutError::Parse {
            path: path.to_path_buf(),
            line: i + 1,
            message: e.to_string(),
        })?;
        table.entry((pr.doc_id, pr.page_index)).or_default().extend(pr.regions);
    }
    Ok(table)
}

pub fn load_regions(path: &Path) -> Result<RegionTable, LayoutError> {
    let text = fs::read_to_string(path).map_err(|source| LayoutError::Io {
        path: path.to_path_buf(),
        source,
    })?;
    parse_regions(&text, path)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LayoutParams {
    /// Regions smaller than this fraction of the page are noise.
    pub min_area: f64,
    /// Fraction of a region's area covered by a larger region above which it is dropped.
    pub max_nested_overlap: f64,
    pub seed: u64,
}

impl Default for LayoutParams {
    fn default() -> Self {
        Self {
            min_area: 0.001,
            max_nested_overlap: 0.5,
            seed: 0,
        }
    }
}

/// Drops regions below `min_area` and regions overlapping a strictly larger
/// region on more than `max_nested_overlap` of their own area. Input order is kept.
pub fn filter_regions(regions: &[LayoutRegion], params: &LayoutParams) -> Vec<LayoutRegion> {
    regions
        .iter()
        .filter(|r| {
            let area = r.bbox.area();
            if area < params.min_area {
                return false;
            }
            !regions
                .iter()
                .any(|o| o.bbox.area() > area && o.bbox.intersection_area(&r.bbox) > params.max_nested_overlap * area)
        })
        .cloned()
        .collect()
}

/// One chunk per cluster: the union of the cluster's regions, holding every
/// page token whose box center falls inside it (OCR order). Clusters that
/// capture no token are dropped.
pub fn regions_to_chunks(
    doc: &Document,
    page_index: usize,
    regions: &[LayoutRegion],
    labels: &[usize],
) -> Vec<TextChunk> {
    assert_eq!(regions.len(), labels.len(), "one label per region");
    let page = &doc.pages[page_index];
    let mut clusters: BTreeMap<usize, Vec<&LayoutRegion>> = BTreeMap::new();
    for (r, &l) in regions.iter().zip(labels) {
        clusters.entry(l).or_default().push(r);
    }
    let mut out = Vec::new();
    for (cluster, members) in clusters {
        let union = BBox::enclosing(members.iter().map(|r| &r.bbox)).expect("non-empty cluster");
        let mut token_indices = Vec::new();
        let mut token_labels = Vec::new();
        for (ti, tok) in page.tokens.iter().enumerate() {
            let (cx, cy) = tok.bbox.center();
            if !union.contains_point(cx, cy) {
                continue;
            }
            let label = members
                .iter()
                .find(|r| r.bbox.contains_point(cx, cy))
                .or_else(|| {
                    members.iter().min_by(|a, b| {
                        let d = |r: &LayoutRegion| {
                            let (rx, ry) = r.bbox.center();
                            (rx - cx).powi(2) + (ry - cy).powi(2)
                        };
                        d(a).total_cmp(&d(b))
                    })
                })
                .map(|r| r.simple_label)
                .expect("non-empty cluster");
            token_indices.push(ti);
            token_labels.push(label);
        }
        if token_indices.is_empty() {
            log::warn!(
                "{}: layout cluster {cluster} on page {page_index} captures no tokens, dropped",
                doc.doc_id
            );
            continue;
        }
        let ordinal = out.len();
        let indices = token_indices.clone();
        let mut chunk = make_chunk(
            doc,
            page_index,
            ordinal,
            &indices,
            ChunkSource::Layout {
                cluster,
                token_indices,
                token_labels,
            },
        );
        // A rectangular chunk covers its whole cluster area, not just the tokens.
        chunk.union_box = union;
        if let Ok(crop) = crate::corpus::crop_region(doc, page_index, &union) {
            chunk.crop = Some(crop);
        }
        out.push(chunk);
    }
    out
}

/// Layout chunks for every page of `doc` that has regions in `table`.
pub fn layout_chunk_document(
    doc: &Document,
    table: &RegionTable,
    labels: &LabelMap,
    params: &LayoutParams,
) -> Result<Vec<TextChunk>, LayoutError> {
    let mut out = Vec::new();
    for pi in 0..doc.pages.len() {
        let Some(raw) = table.get(&(doc.doc_id.clone(), pi)) else {
            log::warn!("{}: no layout regions for page {pi}", doc.doc_id);
            continue;
        };
        let regions: Vec<LayoutRegion> = raw.iter().map(|r| r.resolve(labels)).collect::<Result<_, _>>()?;
        let kept = filter_regions(&regions, params);
        if kept.is_empty() {
            continue;
        }
        let centroids: Vec<(f64, f64)> = kept.iter().map(|r| r.bbox.center()).collect();
        let clustering = select_clusters(&centroids, params.seed);
        out.extend(regions_to_chunks(doc, pi, &kept, &clustering.labels));
    }
    Ok(out)
}
