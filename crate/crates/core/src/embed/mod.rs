//! Closed-form numeric kernels from the pretraining recipe.

mod geometry;
mod tokens;
mod uniformity;

use thiserror::Error;

pub use geometry::{
    effective_batch, highres_view_config, patch_token_count, ScheduleConfig, ViewConfig,
};
pub use tokens::cls_mean_embedding;
pub use uniformity::{
    kde_uniformity_loss, kde_uniformity_loss_ambient, kde_uniformity_loss_with, koleo_loss,
    koleo_loss_with, KdeOutput, DEFAULT_KDE_BANDWIDTH,
};

#[derive(Debug, Error, PartialEq)]
pub enum EmbedError {
    #[error("batch needs at least 2 rows, got {0}")]
    DegenerateBatch(usize),
    #[error("rows {0} and {1} are identical")]
    DuplicateRows(usize, usize),
    #[error("row {row} has norm {norm}, expected a unit vector")]
    NotNormalized { row: usize, norm: f64 },
    #[error("no patch tokens to average")]
    EmptyPatchSet,
    #[error("image size {image_px} is not divisible by patch size {patch_px}")]
    NotDivisible { image_px: u32, patch_px: u32 },
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error("high-resolution scaling is only defined for the standard view config, got {0:?}")]
    NotStandardConfig(ViewConfig),
    #[error("invalid config: {0}")]
    InvalidConfig(String),
}

/// `n` embeddings of dimension `d`, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingBatch {
    n: usize,
    d: usize,
    data: Vec<f64>,
    normalized: bool,
}

impl EmbeddingBatch {
    pub fn new(n: usize, d: usize, data: Vec<f64>) -> Result<Self, EmbedError> {
        if data.len() != n * d {
            return Err(EmbedError::ShapeMismatch(format!(
                "{} values for a {n}x{d} batch",
                data.len()
            )));
        }
        Ok(EmbeddingBatch {
            n,
            d,
            data,
            normalized: false,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>]) -> Result<Self, EmbedError> {
        let d = rows.first().map_or(0, Vec::len);
        if rows.iter().any(|r| r.len() != d) {
            return Err(EmbedError::ShapeMismatch("ragged rows".into()));
        }
        Self::new(rows.len(), d, rows.concat())
    }

    /// Scales every row to unit length. Zero rows are left as they are.
    pub fn normalize(mut self) -> Self {
        for row in self.data.chunks_mut(self.d.max(1)) {
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if n > 0.0 {
                row.iter_mut().for_each(|v| *v /= n);
            }
        }
        self.normalized = true;
        self
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn is_normalized(&self) -> bool {
        self.normalized
    }

    pub fn data(&self) -> &[f64] {
        &self.data
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.data[i * self.d..(i + 1) * self.d]
    }

    /// Checks that every row is a unit vector within `tol`.
    pub fn check_unit_rows(&self, tol: f64) -> Result<(), EmbedError> {
        for i in 0..self.n {
            let norm = self.row(i).iter().map(|v| v * v).sum::<f64>().sqrt();
            if (norm - 1.0).abs() > tol {
                return Err(EmbedError::NotNormalized { row: i, norm });
            }
        }
        Ok(())
    }
}

#[inline]
pub(crate) fn sq_dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}
