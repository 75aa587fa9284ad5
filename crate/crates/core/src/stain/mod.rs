//! Colour-space mathematics for tile filtering and stain augmentation.
//!
//! * [`rgb_to_hsv`] / [`hsv_tile_filter`]: 8-bit HSV with half-degree hue,
//!   and the "enough stained pixels" acceptance rule.
//! * [`rgb_to_hed`] / [`hed_to_rgb`] / [`hed_augment`]: optical-density
//!   deconvolution into hematoxylin, eosin and DAB concentrations and the
//!   per-stain scale/shift augmentation.

mod hed;
mod hsv;

use thiserror::Error;

pub use hed::{
    hed_augment, hed_augment_with, hed_to_rgb, optical_density, rgb_to_hed, HedParams, HedPlanes,
    StainMatrix, OD_EPSILON,
};
pub use hsv::{hsv_tile_filter, hsv_tile_filter_with, rgb_to_hsv, FilterOutcome, Hsv, HsvRanges};

#[derive(Debug, Error)]
pub enum StainError {
    #[error("stain matrix is singular or has a zero row")]
    SingularMatrix,
    #[error("malformed stain matrix: {0}")]
    MatrixFormat(String),
    #[error("invalid parameters: {0}")]
    InvalidParams(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}
