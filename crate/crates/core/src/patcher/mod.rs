//! Online patching: tissue masks and uniform rejection sampling of tiles.
//!
//! A tile is proposed by drawing a spacing from [`SamplerParams::mpp_choices`]
//! and then a level-0 origin uniformly over every position where the tile's
//! footprint fits. The proposal is kept when enough of its footprint is
//! tissue according to a low-resolution [`ForegroundMask`].
//!
//! Random draws happen in a fixed order per attempt: spacing index, x, y.
//! Each draw is a single `u64` range draw so streams are identical on every
//! platform.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::grid::BoolGrid;
use crate::slide::{SlideError, SlideHandle, TileImage};
use crate::stain::rgb_to_hsv;

/// Spacing of the tissue thumbnail, µm/px.
pub const DEFAULT_MASK_MPP: f64 = 8.0;
/// Pixels at least this saturated count as tissue.
pub const FOREGROUND_MIN_SATURATION: u8 = 20;
/// Pixels at most this bright count as tissue.
pub const FOREGROUND_MAX_VALUE: u8 = 210;

#[derive(Debug, Error)]
pub enum PatchError {
    #[error(transparent)]
    Slide(#[from] SlideError),
    #[error("no tile passed the filters on slide {slide_id} after {attempts} attempts")]
    MaxAttemptsExceeded { slide_id: String, attempts: u32 },
    #[error("invalid sampler parameters: {0}")]
    InvalidParams(String),
    #[error("tile footprint at {mpp} µm/px ({footprint:.1} px) exceeds the slide ({width}x{height})")]
    TileDoesNotFit {
        mpp: f64,
        footprint: f64,
        width: u32,
        height: u32,
    },
    #[error("mask was computed for slide {mask} but used with slide {slide}")]
    MaskMismatch { mask: String, slide: String },
}

/// Tissue mask on a coarse grid.
#[derive(Debug, Clone, PartialEq)]
pub struct ForegroundMask {
    pub grid: BoolGrid,
    pub mask_mpp: f64,
    pub level0_mpp: f64,
    /// Level-0 size of the slide the mask was built from.
    pub slide_dims: (u32, u32),
    pub slide_id: String,
}

/// Background is near-white: low saturation and high value.
#[inline]
pub fn is_foreground_pixel(rgb: [u8; 3]) -> bool {
    let hsv = rgb_to_hsv(rgb);
    hsv.s >= FOREGROUND_MIN_SATURATION || hsv.v <= FOREGROUND_MAX_VALUE
}

pub fn compute_foreground_mask(
    slide: &SlideHandle,
    mask_mpp: f64,
) -> Result<ForegroundMask, PatchError> {
    let l0 = slide.level0_mpp();
    if !(mask_mpp >= l0) {
        return Err(PatchError::InvalidParams(format!(
            "mask spacing {mask_mpp} is finer than level 0 ({l0})"
        )));
    }
    let (w0, h0) = slide.dimensions();
    let w = (w0 as f64 * l0 / mask_mpp + 1e-9).floor() as u32;
    let h = (h0 as f64 * l0 / mask_mpp + 1e-9).floor() as u32;
    if w == 0 || h == 0 {
        return Err(PatchError::InvalidParams(format!(
            "slide {w0}x{h0} is smaller than one {mask_mpp} µm/px mask cell"
        )));
    }
    let thumb = slide.read_region((0, 0), mask_mpp, w, h)?;
    let bits = thumb
        .pixels
        .chunks_exact(3)
        .map(|p| is_foreground_pixel([p[0], p[1], p[2]]))
        .collect();
    Ok(ForegroundMask {
        grid: BoolGrid {
            width: w,
            height: h,
            bits,
        },
        mask_mpp,
        level0_mpp: l0,
        slide_dims: (w0, h0),
        slide_id: slide.slide_id().to_string(),
    })
}

impl ForegroundMask {
    /// Level-0 pixels per mask cell.
    pub fn cell_l0(&self) -> f64 {
        self.mask_mpp / self.level0_mpp
    }

    pub fn fraction(&self) -> f64 {
        self.grid.fraction_set()
    }

    /// Area-weighted tissue fraction of the level-0 rectangle
    /// `[x0, x1) × [y0, y1)`. Cells partly covered count by overlap area.
    pub fn fraction_in_l0_rect(&self, x0: f64, y0: f64, x1: f64, y1: f64) -> f64 {
        let cell = self.cell_l0();
        let weights = |lo: f64, hi: f64, n: u32| -> Vec<(u32, f64)> {
            let lo = (lo / cell).max(0.0);
            let hi = (hi / cell).min(n as f64);
            if hi <= lo {
                return Vec::new();
            }
            let first = lo.floor() as u32;
            let last = (hi.ceil() as u32).min(n);
            (first..last)
                .map(|i| {
                    let w = (hi.min(i as f64 + 1.0) - lo.max(i as f64)).max(0.0);
                    (i, w)
                })
                .filter(|&(_, w)| w > 0.0)
                .collect()
        };
        let xs = weights(x0, x1, self.grid.width);
        let ys = weights(y0, y1, self.grid.height);
        let wx_total: f64 = xs.iter().map(|w| w.1).sum();
        let wy_total: f64 = ys.iter().map(|w| w.1).sum();
        let total = wx_total * wy_total;
        if total <= 0.0 {
            return 0.0;
        }
        let mut fg = 0.0;
        for &(cy, wy) in &ys {
            let row = &self.grid.bits[cy as usize * self.grid.width as usize..];
            let mut acc = 0.0;
            for &(cx, wx) in &xs {
                if row[cx as usize] {
                    acc += wx;
                }
            }
            fg += acc * wy;
        }
        fg / total
    }
}

/// Tissue fraction of the footprint of a `tile_size_px` tile at `tile_mpp`
/// whose corner sits at `origin_l0`.
pub fn foreground_fraction(
    mask: &ForegroundMask,
    origin_l0: (i64, i64),
    tile_size_px: u32,
    tile_mpp: f64,
) -> Result<f64, PatchError> {
    let extent = tile_size_px as f64 * tile_mpp / mask.level0_mpp;
    let (x, y) = origin_l0;
    let (w0, h0) = mask.slide_dims;
    let tol = 1e-6;
    if x < 0 || y < 0 || x as f64 + extent > w0 as f64 + tol || y as f64 + extent > h0 as f64 + tol {
        return Err(SlideError::OutOfBounds {
            x,
            y,
            extent_w: extent,
            extent_h: extent,
            width: w0,
            height: h0,
        }
        .into());
    }
    let (x, y) = (x as f64, y as f64);
    Ok(mask.fraction_in_l0_rect(x, y, x + extent, y + extent))
}

/// Physical side length in µm of `size_px` pixels at `mpp`.
pub fn physical_extent(size_px: u32, mpp: f64) -> f64 {
    size_px as f64 * mpp
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SamplerParams {
    pub tile_size_px: u32,
    pub mpp_choices: Vec<f64>,
    pub foreground_threshold: f64,
    pub max_attempts: u32,
}

impl Default for SamplerParams {
    fn default() -> Self {
        SamplerParams {
            tile_size_px: 256,
            mpp_choices: vec![2.0, 1.0, 0.5, 0.25],
            foreground_threshold: 0.40,
            max_attempts: 1000,
        }
    }
}

impl SamplerParams {
    pub fn validate(&self) -> Result<(), PatchError> {
        if self.tile_size_px == 0 {
            return Err(PatchError::InvalidParams("tile_size_px must be positive".into()));
        }
        if self.mpp_choices.is_empty() || self.mpp_choices.iter().any(|m| !(m.is_finite() && *m > 0.0)) {
            return Err(PatchError::InvalidParams(format!(
                "mpp_choices must be non-empty and positive, got {:?}",
                self.mpp_choices
            )));
        }
        if !(self.foreground_threshold > 0.0 && self.foreground_threshold <= 1.0) {
            return Err(PatchError::InvalidParams(format!(
                "foreground_threshold must be in (0, 1], got {}",
                self.foreground_threshold
            )));
        }
        if self.max_attempts == 0 {
            return Err(PatchError::InvalidParams("max_attempts must be positive".into()));
        }
        Ok(())
    }
}

/// One drawn position, before any pixels are read.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Proposal {
    pub mpp: f64,
    pub origin_l0: (i64, i64),
    pub foreground_fraction: f64,
}

/// Draws one position (three RNG draws: spacing, x, y) and scores it.
pub fn propose<R: Rng + ?Sized>(
    mask: &ForegroundMask,
    params: &SamplerParams,
    rng: &mut R,
) -> Result<Proposal, PatchError> {
    let idx = rng.gen_range(0..params.mpp_choices.len() as u64) as usize;
    let mpp = params.mpp_choices[idx];
    let footprint = params.tile_size_px as f64 * mpp / mask.level0_mpp;
    let (w0, h0) = mask.slide_dims;
    let max_x = (w0 as f64 - footprint + 1e-6).floor();
    let max_y = (h0 as f64 - footprint + 1e-6).floor();
    if max_x < 0.0 || max_y < 0.0 {
        return Err(PatchError::TileDoesNotFit {
            mpp,
            footprint,
            width: w0,
            height: h0,
        });
    }
    let x = rng.gen_range(0..=max_x as u64) as i64;
    let y = rng.gen_range(0..=max_y as u64) as i64;
    let fg = mask.fraction_in_l0_rect(x as f64, y as f64, x as f64 + footprint, y as f64 + footprint);
    Ok(Proposal {
        mpp,
        origin_l0: (x, y),
        foreground_fraction: fg,
    })
}

/// Draws per attempt.
pub const DRAWS_PER_ATTEMPT: u32 = 3;

#[derive(Debug, Clone)]
pub struct TileCandidate {
    pub tile: TileImage,
    pub foreground_fraction: f64,
    pub attempt_count: u32,
    pub rng_draws: u32,
}

fn check_mask(slide: &SlideHandle, mask: &ForegroundMask) -> Result<(), PatchError> {
    if mask.slide_id != slide.slide_id() || mask.slide_dims != slide.dimensions() {
        return Err(PatchError::MaskMismatch {
            mask: mask.slide_id.clone(),
            slide: slide.slide_id().to_string(),
        });
    }
    Ok(())
}

/// Rejection-samples one tile whose tissue fraction reaches the threshold.
pub fn sample_tile<R: Rng + ?Sized>(
    slide: &SlideHandle,
    mask: &ForegroundMask,
    params: &SamplerParams,
    rng: &mut R,
) -> Result<TileCandidate, PatchError> {
    params.validate()?;
    check_mask(slide, mask)?;
    for attempt in 1..=params.max_attempts {
        let p = propose(mask, params, rng)?;
        if p.foreground_fraction >= params.foreground_threshold {
            let tile = slide.read_region(p.origin_l0, p.mpp, params.tile_size_px, params.tile_size_px)?;
            return Ok(TileCandidate {
                tile,
                foreground_fraction: p.foreground_fraction,
                attempt_count: attempt,
                rng_draws: attempt * DRAWS_PER_ATTEMPT,
            });
        }
    }
    Err(PatchError::MaxAttemptsExceeded {
        slide_id: slide.slide_id().to_string(),
        attempts: params.max_attempts,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::slide::RgbRaster;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn uniform_slide(rgb: [u8; 3], size: u32) -> SlideHandle {
        SlideHandle::from_raster(RgbRaster::filled(size, size, rgb), 0.25, "u", "d")
    }

    fn half_mask() -> ForegroundMask {
        // left half tissue, 8 µm cells over a 0.25 µm/px 2048 px slide
        let mut g = BoolGrid::new(64, 64);
        for y in 0..64 {
            for x in 0..32 {
                g.set(x, y, true);
            }
        }
        ForegroundMask {
            grid: g,
            mask_mpp: 8.0,
            level0_mpp: 0.25,
            slide_dims: (2048, 2048),
            slide_id: "h".into(),
        }
    }

    #[test]
    fn foreground_pixel_rule() {
        assert!(!is_foreground_pixel([255, 255, 255]));
        assert!(!is_foreground_pixel([240, 240, 238]));
        assert!(is_foreground_pixel([120, 60, 160]));
        assert!(is_foreground_pixel([128, 128, 128]));
    }

    #[test]
    fn white_and_purple_slides() {
        let white = uniform_slide([255, 255, 255], 1024);
        let m = compute_foreground_mask(&white, 8.0).unwrap();
        assert_eq!((m.grid.width, m.grid.height), (32, 32));
        assert_eq!(m.fraction(), 0.0);
        let purple = uniform_slide([120, 60, 160], 1024);
        assert_eq!(compute_foreground_mask(&purple, 8.0).unwrap().fraction(), 1.0);
    }

    #[test]
    fn fraction_inside_outside_and_straddling() {
        let m = half_mask();
        assert_eq!(foreground_fraction(&m, (0, 0), 256, 1.0).unwrap(), 1.0);
        assert_eq!(foreground_fraction(&m, (1024, 0), 256, 1.0).unwrap(), 0.0);
        // boundary at x = 1024 level-0 px; a 1024 px footprint centred on it
        assert_eq!(foreground_fraction(&m, (512, 300), 256, 1.0).unwrap(), 0.5);
        // off-grid origin still half within one cell's worth
        let f = foreground_fraction(&m, (517, 3), 256, 1.0).unwrap();
        assert!((f - 0.5).abs() <= 32.0 / 1024.0, "{f}");
        assert!(foreground_fraction(&m, (-1, 0), 256, 1.0).is_err());
        assert!(foreground_fraction(&m, (1500, 0), 256, 1.0).is_err());
    }

    #[test]
    fn physical_extents() {
        assert_eq!(physical_extent(512, 1.0), 512.0);
        assert_eq!(physical_extent(512, 0.125), 64.0);
        assert_eq!(physical_extent(256, 0.5), 128.0);
    }

    #[test]
    fn all_tissue_accepts_first_attempt() {
        let s = uniform_slide([120, 60, 160], 2048);
        let m = compute_foreground_mask(&s, 8.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let c = sample_tile(&s, &m, &SamplerParams::default(), &mut rng).unwrap();
        assert_eq!(c.attempt_count, 1);
        assert_eq!(c.rng_draws, 3);
        assert_eq!((c.tile.width_px, c.tile.height_px), (256, 256));
    }

    #[test]
    fn all_background_exhausts_attempts() {
        let s = uniform_slide([255, 255, 255], 2048);
        let m = compute_foreground_mask(&s, 8.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let err = sample_tile(&s, &m, &SamplerParams::default(), &mut rng).unwrap_err();
        assert!(matches!(err, PatchError::MaxAttemptsExceeded { attempts: 1000, .. }));
    }

    #[test]
    fn footprint_too_large_is_reported() {
        let s = uniform_slide([120, 60, 160], 1024);
        let m = compute_foreground_mask(&s, 8.0).unwrap();
        let p = SamplerParams { mpp_choices: vec![2.0], ..Default::default() };
        let err = sample_tile(&s, &m, &p, &mut ChaCha8Rng::seed_from_u64(0)).unwrap_err();
        assert!(matches!(err, PatchError::TileDoesNotFit { .. }));
    }

    #[test]
    fn param_validation() {
        let bad = [
            SamplerParams { tile_size_px: 0, ..Default::default() },
            SamplerParams { mpp_choices: vec![], ..Default::default() },
            SamplerParams { mpp_choices: vec![1.0, -1.0], ..Default::default() },
            SamplerParams { foreground_threshold: 0.0, ..Default::default() },
            SamplerParams { foreground_threshold: 1.5, ..Default::default() },
        ];
        for p in bad {
            assert!(p.validate().is_err(), "{p:?}");
        }
        assert!(SamplerParams::default().validate().is_ok());
    }

    #[test]
    fn mask_from_other_slide_is_rejected() {
        let s = uniform_slide([120, 60, 160], 2048);
        let err = sample_tile(&s, &half_mask(), &SamplerParams::default(), &mut ChaCha8Rng::seed_from_u64(0))
            .unwrap_err();
        assert!(matches!(err, PatchError::MaskMismatch { .. }));
    }
}
