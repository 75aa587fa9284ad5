//! Evaluation-time tile geometry: centre crops, resizing to the model input
//! size, and the pixel spacing that results.

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::embed::{patch_token_count, EmbedError};
use crate::slide::resample;
use crate::slide::{RgbRaster, TileImage};

/// Vision-transformer patch size the input sizes must be compatible with.
pub const MODEL_PATCH_PX: u32 = 14;

#[derive(Debug, Error, PartialEq)]
pub enum ResizeError {
    #[error("crop of {crop_px} px does not fit a {width}x{height} tile")]
    CropTooLarge { crop_px: u32, width: u32, height: u32 },
    #[error("tile is {width}x{height}; plain resize needs a square source")]
    NonSquareSource { width: u32, height: u32 },
    #[error(transparent)]
    Tokens(#[from] EmbedError),
    #[error("invalid resize request: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum ResizeStrategy {
    Resize,
    CenterCropThenResize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Interpolation {
    #[default]
    Bilinear,
    Nearest,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ResizeSpec {
    pub target_px: u32,
    pub strategy: ResizeStrategy,
    pub interpolation: Interpolation,
}

impl ResizeSpec {
    /// Standard evaluation input, 224×224.
    pub fn standard() -> Self {
        ResizeSpec {
            target_px: 224,
            strategy: ResizeStrategy::CenterCropThenResize,
            interpolation: Interpolation::Bilinear,
        }
    }

    /// High-resolution evaluation input, 392×392.
    pub fn highres() -> Self {
        ResizeSpec {
            target_px: 392,
            ..Self::standard()
        }
    }

    /// Patch tokens the model sees for this input size.
    pub fn token_count(&self) -> Result<u32, ResizeError> {
        Ok(patch_token_count(self.target_px, MODEL_PATCH_PX)?)
    }
}

/// Spacing after resizing `source_px` pixels at `source_mpp` to `target_px`.
pub fn effective_mpp_after_resize(source_px: u32, source_mpp: f64, target_px: u32) -> f64 {
    source_mpp * source_px as f64 / target_px as f64
}

/// Centred `crop_px`×`crop_px` region; offsets are floored.
pub fn center_crop(tile: &TileImage, crop_px: u32) -> Result<TileImage, ResizeError> {
    if crop_px == 0 || crop_px > tile.width_px || crop_px > tile.height_px {
        return Err(ResizeError::CropTooLarge {
            crop_px,
            width: tile.width_px,
            height: tile.height_px,
        });
    }
    let (ox, oy) = center_offsets(tile.width_px, tile.height_px, crop_px);
    let stride = tile.width_px as usize * 3;
    let row = crop_px as usize * 3;
    let mut pixels = Vec::with_capacity(row * crop_px as usize);
    for y in 0..crop_px as usize {
        let s = (oy as usize + y) * stride + ox as usize * 3;
        pixels.extend_from_slice(&tile.pixels[s..s + row]);
    }
    Ok(TileImage {
        pixels,
        width_px: crop_px,
        height_px: crop_px,
        ..tile.clone()
    })
}

pub fn center_offsets(width: u32, height: u32, crop_px: u32) -> (u32, u32) {
    ((width - crop_px) / 2, (height - crop_px) / 2)
}

/// Resizes a square tile to `target_px` and updates its spacing.
pub fn resize_square(
    tile: &TileImage,
    target_px: u32,
    interpolation: Interpolation,
) -> Result<TileImage, ResizeError> {
    if tile.width_px != tile.height_px {
        return Err(ResizeError::NonSquareSource {
            width: tile.width_px,
            height: tile.height_px,
        });
    }
    if target_px == 0 {
        return Err(ResizeError::Invalid("target size must be positive".into()));
    }
    let src_px = tile.width_px;
    let scale = src_px as f64 / target_px as f64;
    let src = RgbRaster::new(src_px, src_px, tile.pixels.clone());
    let out = match interpolation {
        Interpolation::Bilinear => resample::bilinear(&src, 0.0, 0.0, scale, target_px, target_px),
        Interpolation::Nearest => {
            let mut px = Vec::with_capacity(target_px as usize * target_px as usize * 3);
            for y in 0..target_px {
                let sy = (((y as f64 + 0.5) * scale) as u32).min(src_px - 1);
                for x in 0..target_px {
                    let sx = (((x as f64 + 0.5) * scale) as u32).min(src_px - 1);
                    px.extend_from_slice(&src.pixel(sx, sy));
                }
            }
            RgbRaster::new(target_px, target_px, px)
        }
    };
    Ok(TileImage {
        pixels: out.pixels,
        width_px: target_px,
        height_px: target_px,
        mpp: effective_mpp_after_resize(src_px, tile.mpp, target_px),
        origin_l0: tile.origin_l0,
        slide_id: tile.slide_id.clone(),
    })
}

/// Brings an evaluation tile to the model input size.
pub fn prepare_eval_tile(tile: &TileImage, spec: &ResizeSpec) -> Result<TileImage, ResizeError> {
    match spec.strategy {
        ResizeStrategy::Resize => resize_square(tile, spec.target_px, spec.interpolation),
        ResizeStrategy::CenterCropThenResize => {
            let side = tile.width_px.min(tile.height_px);
            let square = center_crop(tile, side)?;
            resize_square(&square, spec.target_px, spec.interpolation)
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tile(w: u32, h: u32, mpp: f64) -> TileImage {
        let px = (0..w * h).flat_map(|i| [(i % 256) as u8, (i / 256 % 256) as u8, 7]).collect();
        TileImage::detached(w, h, px, mpp)
    }

    #[test]
    fn effective_spacing() {
        assert_eq!(effective_mpp_after_resize(224, 0.5, 224), 0.5);
        assert_eq!(effective_mpp_after_resize(448, 0.25, 224), 0.5);
        let breakhis = effective_mpp_after_resize(460, 1.995, 224);
        assert!((breakhis - 4.0968750).abs() < 1e-6);
    }

    #[test]
    fn crop_offsets_and_errors() {
        let t = tile(700, 460, 1.0);
        assert_eq!(center_offsets(700, 460, 460), (120, 0));
        let c = center_crop(&t, 460).unwrap();
        assert_eq!((c.width_px, c.height_px), (460, 460));
        assert_eq!(c.pixel(0, 0), t.pixel(120, 0));
        assert_eq!(c.pixel(459, 459), t.pixel(579, 459));
        assert_eq!(
            center_crop(&t, 461).unwrap_err(),
            ResizeError::CropTooLarge { crop_px: 461, width: 700, height: 460 }
        );
        let sq = tile(64, 64, 1.0);
        assert_eq!(center_crop(&sq, 64).unwrap(), sq);
    }

    #[test]
    fn prepare_keeps_physical_extent() {
        let t = tile(700, 460, 0.47);
        let out = prepare_eval_tile(&t, &ResizeSpec::standard()).unwrap();
        assert_eq!((out.width_px, out.height_px), (224, 224));
        assert!((out.mpp * 224.0 - 460.0 * 0.47).abs() < 1e-12);
        assert!((out.mpp - 0.97).abs() < 0.005);
        assert!(matches!(
            prepare_eval_tile(&t, &ResizeSpec { strategy: ResizeStrategy::Resize, ..ResizeSpec::standard() }),
            Err(ResizeError::NonSquareSource { .. })
        ));
    }

    #[test]
    fn highres_input_feeds_784_tokens() {
        assert_eq!(ResizeSpec::highres().token_count().unwrap(), 784);
        assert_eq!(ResizeSpec::standard().token_count().unwrap(), 256);
    }

    #[test]
    fn nearest_and_bilinear_preserve_constants() {
        let t = TileImage::detached(50, 50, [9u8, 99, 199].repeat(2500), 1.0);
        for interp in [Interpolation::Bilinear, Interpolation::Nearest] {
            let out = resize_square(&t, 14, interp).unwrap();
            assert!(out.pixels.chunks(3).all(|p| p == [9, 99, 199]));
        }
    }
}
