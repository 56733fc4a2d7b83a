//! Horizontal page patches, merging of retrieved patches, and 16×16
//! mini-patch tiling for the visual generator.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::{Document, ImageRegionRef};

/// Side of a mini-patch in pixels.
pub const MINI_PATCH: u32 = 16;
/// Image-token budget of the visual generator.
pub const DEFAULT_IMAGE_TOKENS: usize = 2048;

#[derive(Debug, Error, PartialEq)]
pub enum PatchError {
    #[error("page height must be positive")]
    EmptyPage,
    #[error("patch step {step} must be in 1..={patch_size}")]
    BadStep { step: u32, patch_size: u32 },
    #[error("patch size must be positive")]
    ZeroPatchSize,
    #[error("nothing to tile")]
    NoPatches,
    #[error("{patches} patches cannot fit a budget of {budget} mini-patches")]
    BudgetTooSmall { patches: usize, budget: usize },
    #[error("patch {0} has a zero dimension")]
    ZeroSizedPatch(usize),
    #[error("query text is empty")]
    EmptyQuestion,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PatchParams {
    /// Patch height in pixels.
    pub patch_size: u32,
    /// Vertical distance between consecutive patch tops.
    pub step: u32,
}

impl Default for PatchParams {
    fn default() -> Self {
        Self {
            patch_size: 512,
            step: 256,
        }
    }
}

impl PatchParams {
    pub fn validate(&self) -> Result<(), PatchError> {
        if self.patch_size == 0 {
            return Err(PatchError::ZeroPatchSize);
        }
        if self.step == 0 || self.step > self.patch_size {
            return Err(PatchError::BadStep {
                step: self.step,
                patch_size: self.patch_size,
            });
        }
        Ok(())
    }

    pub fn overlap(&self) -> u32 {
        self.patch_size - self.step
    }
}

/// A full-width horizontal band of one page.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct PatchSpec {
    pub doc_id: String,
    pub page_index: usize,
    pub y_top: u32,
    pub y_bottom: u32,
    pub width: u32,
}

impl PatchSpec {
    pub fn patch_id(&self) -> String {
        format!("{}#p{}#y{}-{}", self.doc_id, self.page_index, self.y_top, self.y_bottom)
    }

    pub fn height(&self) -> u32 {
        self.y_bottom - self.y_top
    }

    pub fn region(&self, doc: &Document) -> ImageRegionRef {
        ImageRegionRef {
            image_ref: doc.pages[self.page_index].image_ref.clone(),
            page_index: self.page_index,
            x0: 0,
            y0: self.y_top,
            x1: self.width,
            y1: self.y_bottom,
        }
    }
}

/// Vertical `[top, bottom)` intervals of the patches of a page.
///
/// Tops advance by `step`; the last patch is clipped at the page bottom.
pub fn segment_page(page_h: u32, params: &PatchParams) -> Result<Vec<(u32, u32)>, PatchError> {
    params.validate()?;
    if page_h == 0 {
        return Err(PatchError::EmptyPage);
    }
    let mut out = Vec::new();
    let mut top = 0u32;
    loop {
        let bottom = top.saturating_add(params.patch_size).min(page_h);
        out.push((top, bottom));
        if bottom == page_h {
            break;
        }
        top += params.step;
    }
    Ok(out)
}

pub fn segment_document(doc: &Document, params: &PatchParams) -> Result<Vec<PatchSpec>, PatchError> {
    let mut out = Vec::new();
    for (pi, page) in doc.pages.iter().enumerate() {
        for (y_top, y_bottom) in segment_page(page.height_px, params)? {
            out.push(PatchSpec {
                doc_id: doc.doc_id.clone(),
                page_index: pi,
                y_top,
                y_bottom,
                width: page.width_px,
            });
        }
    }
    Ok(out)
}

/// Fuses patches of the same page whose intervals overlap or touch.
/// Output is sorted by `(doc_id, page, y_top)`.
pub fn merge_patches(selected: &[PatchSpec]) -> Vec<PatchSpec> {
    let mut sorted: Vec<&PatchSpec> = selected.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.doc_id, a.page_index, a.y_top, a.y_bottom).cmp(&(&b.doc_id, b.page_index, b.y_top, b.y_bottom))
    });
    let mut out: Vec<PatchSpec> = Vec::new();
    for p in sorted {
        if let Some(last) = out.last_mut() {
            if last.doc_id == p.doc_id && last.page_index == p.page_index && p.y_top <= last.y_bottom {
                last.y_bottom = last.y_bottom.max(p.y_bottom);
                last.width = last.width.max(p.width);
                continue;
            }
        }
        out.push(p.clone());
    }
    out
}

/// Position of one 16×16 cell in the stacked generator input.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MiniPatchIndex {
    pub patch_ordinal: usize,
    /// 1-based, continuous across the stacked patches.
    pub row: u32,
    /// 1-based, restarting at every patch.
    pub col: u32,
    /// Top-left pixel of the cell inside the scaled patch.
    pub x_px: u32,
    pub y_px: u32,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tiling {
    /// Uniform scale factor applied to every patch (≤ 1).
    pub scale: f64,
    /// Scaled `(width, height)` per patch, multiples of 16.
    pub scaled: Vec<(u32, u32)>,
    pub cells: Vec<MiniPatchIndex>,
}

fn grid_at(w: u32, h: u32, scale: f64) -> (u32, u32) {
    let cells = |px: u32| ((f64::from(px) * scale / f64::from(MINI_PATCH)).round() as u32).max(1);
    (cells(h), cells(w))
}

fn total_cells(sizes: &[(u32, u32)], scale: f64) -> usize {
    sizes
        .iter()
        .map(|&(w, h)| {
            let (r, c) = grid_at(w, h, scale);
            r as usize * c as usize
        })
        .sum()
}

/// Scales patches given as `(width, height)` so their 16×16 cells fit in
/// `budget`, then indexes the cells.
///
/// Patches keep their native size when they fit; otherwise one common
/// downscale factor (the largest that fits) is applied to all of them.
pub fn tile_minipatches(sizes: &[(u32, u32)], budget: usize) -> Result<Tiling, PatchError> {
    if sizes.is_empty() {
        return Err(PatchError::NoPatches);
    }
    if let Some(i) = sizes.iter().position(|&(w, h)| w == 0 || h == 0) {
        return Err(PatchError::ZeroSizedPatch(i));
    }
    if sizes.len() > budget {
        return Err(PatchError::BudgetTooSmall {
            patches: sizes.len(),
            budget,
        });
    }
    let scale = if total_cells(sizes, 1.0) <= budget {
        1.0
    } else {
        // Cell count is non-decreasing in the scale and every patch is one
        // cell at scale 0, so bisection finds the largest feasible factor.
        let (mut lo, mut hi) = (0.0f64, 1.0f64);
        for _ in 0..64 {
            let mid = (lo + hi) / 2.0;
            if total_cells(sizes, mid) <= budget {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        lo
    };

    let mut scaled = Vec::with_capacity(sizes.len());
    let mut cells = Vec::new();
    let mut row_base = 0u32;
    for (ordinal, &(w, h)) in sizes.iter().enumerate() {
        let (rows, cols) = grid_at(w, h, scale);
        scaled.push((cols * MINI_PATCH, rows * MINI_PATCH));
        for r in 0..rows {
            for c in 0..cols {
                cells.push(MiniPatchIndex {
                    patch_ordinal: ordinal,
                    row: row_base + r + 1,
                    col: c + 1,
                    x_px: c * MINI_PATCH,
                    y_px: r * MINI_PATCH,
                });
            }
        }
        row_base += rows;
    }
    Ok(Tiling { scale, scaled, cells })
}

/// Input to a multi-vector encoder.
#[derive(Debug, Clone, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum VisualInput {
    ImageRegion {
        region: ImageRegionRef,
    },
    /// Text to be rasterized by the encoder backend.
    RenderedText {
        text: String,
        white_background: bool,
    },
}

/// The query as an image: the encoder renders the text on a white background.
pub fn render_query_spec(question: &str) -> Result<VisualInput, PatchError> {
    if question.trim().is_empty() {
        return Err(PatchError::EmptyQuestion);
    }
    Ok(VisualInput::RenderedText {
        text: question.to_string(),
        white_background: true,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn patch(page: usize, top: u32, bottom: u32) -> PatchSpec {
        PatchSpec {
            doc_id: "d".into(),
            page_index: page,
            y_top: top,
            y_bottom: bottom,
            width: 800,
        }
    }

    #[test]
    fn segment_examples() {
        let p = PatchParams::default();
        assert_eq!(segment_page(1024, &p).unwrap(), vec![(0, 512), (256, 768), (512, 1024)]);
        assert_eq!(segment_page(512, &p).unwrap(), vec![(0, 512)]);
        assert_eq!(segment_page(300, &p).unwrap(), vec![(0, 300)]);
        assert_eq!(segment_page(1000, &p).unwrap(), vec![(0, 512), (256, 768), (512, 1000)]);
        assert_eq!(segment_page(0, &p), Err(PatchError::EmptyPage));
        let bad = PatchParams {
            patch_size: 100,
            step: 101,
        };
        assert!(matches!(segment_page(10, &bad), Err(PatchError::BadStep { .. })));
    }

    #[test]
    fn merge_examples() {
        assert_eq!(
            merge_patches(&[patch(0, 256, 768), patch(0, 0, 512)]),
            vec![patch(0, 0, 768)]
        );
        assert_eq!(
            merge_patches(&[patch(2, 0, 512), patch(1, 0, 512)]),
            vec![patch(1, 0, 512), patch(2, 0, 512)]
        );
        assert_eq!(
            merge_patches(&[patch(0, 0, 512), patch(0, 0, 512)]),
            vec![patch(0, 0, 512)]
        );
        assert_eq!(
            merge_patches(&[patch(0, 0, 512), patch(0, 512, 700)]),
            vec![patch(0, 0, 700)]
        );
        assert_eq!(
            merge_patches(&[patch(0, 0, 100), patch(0, 101, 200)]),
            vec![patch(0, 0, 100), patch(0, 101, 200)]
        );
        assert!(merge_patches(&[]).is_empty());
    }

    #[test]
    fn tiling_indexing_rule() {
        // Two patches of 48 px wide and 32 px tall: 2 rows × 3 cols each.
        let t = tile_minipatches(&[(48, 32), (48, 32)], DEFAULT_IMAGE_TOKENS).unwrap();
        assert_eq!(t.scale, 1.0);
        assert_eq!(t.cells.len(), 12);
        let p0: Vec<_> = t.cells.iter().filter(|c| c.patch_ordinal == 0).collect();
        let p1: Vec<_> = t.cells.iter().filter(|c| c.patch_ordinal == 1).collect();
        assert_eq!(p0.iter().map(|c| c.row).min(), Some(1));
        assert_eq!(p0.iter().map(|c| c.row).max(), Some(2));
        assert_eq!(p1.iter().map(|c| c.row).min(), Some(3));
        assert_eq!(p1.iter().map(|c| c.row).max(), Some(4));
        assert!(p0.iter().chain(&p1).all(|c| (1..=3).contains(&c.col)));

        let t = tile_minipatches(&[(16, 16)], DEFAULT_IMAGE_TOKENS).unwrap();
        assert_eq!(
            t.cells,
            vec![MiniPatchIndex {
                patch_ordinal: 0,
                row: 1,
                col: 1,
                x_px: 0,
                y_px: 0
            }]
        );
    }

    #[test]
    fn tiling_downscales_uniformly() {
        let sizes = vec![(1700, 512); 5];
        let t = tile_minipatches(&sizes, DEFAULT_IMAGE_TOKENS).unwrap();
        assert!(t.cells.len() <= DEFAULT_IMAGE_TOKENS);
        assert!(t.scale < 1.0);
        assert!(t.scaled.windows(2).all(|w| w[0] == w[1]));
        // near-maximal use of the budget
        assert!(t.cells.len() > DEFAULT_IMAGE_TOKENS * 8 / 10, "{}", t.cells.len());
    }

    #[test]
    fn tiling_errors() {
        assert_eq!(tile_minipatches(&[], 10), Err(PatchError::NoPatches));
        assert!(matches!(
            tile_minipatches(&[(16, 16); 3], 2),
            Err(PatchError::BudgetTooSmall { .. })
        ));
        assert_eq!(tile_minipatches(&[(16, 16); 3], 3).unwrap().cells.len(), 3);
        assert_eq!(tile_minipatches(&[(0, 16)], 3), Err(PatchError::ZeroSizedPatch(0)));
    }

    #[test]
    fn query_descriptor() {
        let a = render_query_spec("what is the date?").unwrap();
        assert_eq!(
            a,
            VisualInput::RenderedText {
                text: "what is the date?".into(),
                white_background: true
            }
        );
        assert_eq!(a, render_query_spec("what is the date?").unwrap());
        assert_eq!(render_query_spec("  "), Err(PatchError::EmptyQuestion));
    }
}
