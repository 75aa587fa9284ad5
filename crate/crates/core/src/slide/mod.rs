//! Pyramidal slide access.
//!
//! A slide on disk is a level-0 raster (lossless PNG) next to a JSON sidecar
//! carrying the pixel spacing and, optionally, extra pre-downsampled levels.
//! [`SlideHandle`] owns the decoded levels and is cheap to clone; all reads go
//! through [`SlideHandle::read_region`], which picks a level and resamples to
//! the requested spacing.

pub(crate) mod resample;
pub mod synthetic;

use std::fmt;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use serde::{Deserialize, Serialize};
use thiserror::Error;

pub use synthetic::{generate_synthetic_slide, write_slide_package, SyntheticSlide};

/// Relative slack used when comparing pixel spacings.
const MPP_EPS: f64 = 1e-9;

#[derive(Debug, Error)]
pub enum SlideError {
    #[error("slide file not found: {0}")]
    FileNotFound(PathBuf),
    #[error("unsupported slide format at {path}: {reason}")]
    UnsupportedFormat { path: PathBuf, reason: String },
    #[error("slide {0} has no pixel-spacing metadata and no override was given")]
    MissingMpp(PathBuf),
    #[error("region origin=({x},{y}) extent={extent_w:.3}x{extent_h:.3} level-0 px is outside the {width}x{height} slide")]
    OutOfBounds {
        x: i64,
        y: i64,
        extent_w: f64,
        extent_h: f64,
        width: u32,
        height: u32,
    },
    #[error("invalid region request: {0}")]
    InvalidRequest(String),
    #[error("failed to decode {path}: {message}")]
    Decode { path: PathBuf, message: String },
    #[error("invalid slide metadata in {path}: {message}")]
    InvalidMetadata { path: PathBuf, message: String },
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Geometry of one pyramid level.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Level {
    pub width_px: u32,
    pub height_px: u32,
    pub downsample: f64,
}

/// Sidecar record stored next to a slide raster.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SlideSidecar {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub level0_mpp: Option<f64>,
    pub width_px: u32,
    pub height_px: u32,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tissue_mask_path: Option<String>,
    /// Pre-downsampled levels beyond level 0, paths relative to the sidecar.
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub levels: Vec<SidecarLevel>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SidecarLevel {
    pub path: String,
    pub downsample: f64,
}

/// Options for [`SlideHandle::open_with`].
#[derive(Debug, Clone, Default)]
pub struct OpenOptions {
    /// Level-0 µm/px to use when the metadata has none. Ignored when the
    /// sidecar carries a spacing.
    pub mpp_override: Option<f64>,
}

/// An 8-bit RGB raster, row-major.
#[derive(Clone, PartialEq, Eq)]
pub struct RgbRaster {
    pub width: u32,
    pub height: u32,
    pub pixels: Vec<u8>,
}

impl RgbRaster {
    pub fn new(width: u32, height: u32, pixels: Vec<u8>) -> Self {
        assert_eq!(pixels.len(), width as usize * height as usize * 3);
        RgbRaster {
            width,
            height,
            pixels,
        }
    }

    pub fn filled(width: u32, height: u32, rgb: [u8; 3]) -> Self {
        let n = width as usize * height as usize;
        let mut pixels = Vec::with_capacity(n * 3);
        for _ in 0..n {
            pixels.extend_from_slice(&rgb);
        }
        RgbRaster {
            width,
            height,
            pixels,
        }
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    #[inline]
    pub fn row_stride(&self) -> usize {
        self.width as usize * 3
    }
}

impl fmt::Debug for RgbRaster {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "RgbRaster({}x{})", self.width, self.height)
    }
}

/// A tile read from a slide, with its provenance.
#[derive(Clone, PartialEq)]
pub struct TileImage {
    pub pixels: Vec<u8>,
    pub width_px: u32,
    pub height_px: u32,
    /// µm per pixel of this buffer.
    pub mpp: f64,
    /// Level-0 coordinates of the top-left corner.
    pub origin_l0: (i64, i64),
    pub slide_id: String,
}

impl TileImage {
    pub fn from_raster(raster: RgbRaster, mpp: f64, origin_l0: (i64, i64), slide_id: &str) -> Self {
        TileImage {
            pixels: raster.pixels,
            width_px: raster.width,
            height_px: raster.height,
            mpp,
            origin_l0,
            slide_id: slide_id.to_string(),
        }
    }

    /// A tile not tied to any slide position.
    pub fn detached(width_px: u32, height_px: u32, pixels: Vec<u8>, mpp: f64) -> Self {
        assert_eq!(pixels.len(), width_px as usize * height_px as usize * 3);
        TileImage {
            pixels,
            width_px,
            height_px,
            mpp,
            origin_l0: (0, 0),
            slide_id: String::new(),
        }
    }

    pub fn pixel_count(&self) -> usize {
        self.width_px as usize * self.height_px as usize
    }

    #[inline]
    pub fn pixel(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width_px as usize + x as usize) * 3;
        [self.pixels[i], self.pixels[i + 1], self.pixels[i + 2]]
    }

    /// Physical side lengths in µm.
    pub fn physical_extent(&self) -> (f64, f64) {
        (
            self.width_px as f64 * self.mpp,
            self.height_px as f64 * self.mpp,
        )
    }
}

impl fmt::Debug for TileImage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("TileImage")
            .field("size", &(self.width_px, self.height_px))
            .field("mpp", &self.mpp)
            .field("origin_l0", &self.origin_l0)
            .field("slide_id", &self.slide_id)
            .finish()
    }
}

/// An opened slide. Immutable and shareable across threads.
#[derive(Clone)]
pub struct SlideHandle {
    inner: Arc<SlideInner>,
}

struct SlideInner {
    path: PathBuf,
    slide_id: String,
    dataset_id: String,
    level0_mpp: f64,
    levels: Vec<Level>,
    rasters: Vec<RgbRaster>,
    sidecar: Option<SlideSidecar>,
}

impl fmt::Debug for SlideHandle {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("SlideHandle")
            .field("path", &self.inner.path)
            .field("dataset_id", &self.inner.dataset_id)
            .field("level0_mpp", &self.inner.level0_mpp)
            .field("levels", &self.inner.levels)
            .finish()
    }
}

/// Opens a slide with default options.
pub fn open_slide(path: impl AsRef<Path>, dataset_id: &str) -> Result<SlideHandle, SlideError> {
    SlideHandle::open(path, dataset_id)
}

/// Path of the sidecar that belongs to a raster path.
pub fn sidecar_path(raster_path: &Path) -> PathBuf {
    raster_path.with_extension("json")
}

fn decode_png(path: &Path) -> Result<RgbRaster, SlideError> {
    let img = image::open(path).map_err(|e| match e {
        image::ImageError::IoError(io) => SlideError::Io(io),
        image::ImageError::Unsupported(u) => SlideError::UnsupportedFormat {
            path: path.to_path_buf(),
            reason: u.to_string(),
        },
        other => SlideError::Decode {
            path: path.to_path_buf(),
            message: other.to_string(),
        },
    })?;
    let rgb = img.into_rgb8();
    let (w, h) = rgb.dimensions();
    Ok(RgbRaster::new(w, h, rgb.into_raw()))
}

impl SlideHandle {
    pub fn open(path: impl AsRef<Path>, dataset_id: &str) -> Result<Self, SlideError> {
        Self::open_with(path, dataset_id, &OpenOptions::default())
    }

    /// Opens either a raster path (sidecar found by swapping the extension to
    /// `.json`) or the sidecar itself.
    pub fn open_with(
        path: impl AsRef<Path>,
        dataset_id: &str,
        opts: &OpenOptions,
    ) -> Result<Self, SlideError> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(SlideError::FileNotFound(path.to_path_buf()));
        }
        let is_json = path.extension().is_some_and(|e| e.eq_ignore_ascii_case("json"));
        let (raster_path, meta_path) = if is_json {
            (path.with_extension("png"), path.to_path_buf())
        } else {
            (path.to_path_buf(), sidecar_path(path))
        };
        if !meta_path.exists() {
            return Err(SlideError::UnsupportedFormat {
                path: path.to_path_buf(),
                reason: "no pyramid metadata sidecar".into(),
            });
        }
        if !raster_path.exists() {
            return Err(SlideError::FileNotFound(raster_path));
        }
        let text = std::fs::read_to_string(&meta_path)?;
        let sidecar: SlideSidecar =
            serde_json::from_str(&text).map_err(|e| SlideError::UnsupportedFormat {
                path: meta_path.clone(),
                reason: format!("sidecar is not valid slide metadata: {e}"),
            })?;

        let level0_mpp = match (sidecar.level0_mpp, opts.mpp_override) {
            (Some(m), _) => m,
            (None, Some(m)) => m,
            (None, None) => return Err(SlideError::MissingMpp(path.to_path_buf())),
        };
        let bad_meta = |message: String| SlideError::InvalidMetadata {
            path: meta_path.clone(),
            message,
        };
        if !(level0_mpp > 0.0 && level0_mpp.is_finite()) {
            return Err(bad_meta(format!("level0_mpp must be positive, got {level0_mpp}")));
        }

        let base = decode_png(&raster_path)?;
        if (base.width, base.height) != (sidecar.width_px, sidecar.height_px) {
            return Err(bad_meta(format!(
                "sidecar says {}x{} but raster is {}x{}",
                sidecar.width_px, sidecar.height_px, base.width, base.height
            )));
        }
        let dir = meta_path.parent().unwrap_or(Path::new("."));
        let mut levels = vec![Level {
            width_px: base.width,
            height_px: base.height,
            downsample: 1.0,
        }];
        let mut rasters = vec![base];
        for lvl in &sidecar.levels {
            let r = decode_png(&dir.join(&lvl.path))?;
            let prev = levels.last().unwrap().downsample;
            if !(lvl.downsample > prev) {
                return Err(bad_meta(format!(
                    "downsample factors must strictly increase ({} after {prev})",
                    lvl.downsample
                )));
            }
            let expect_w = levels[0].width_px as f64 / lvl.downsample;
            let expect_h = levels[0].height_px as f64 / lvl.downsample;
            if (r.width as f64 - expect_w.round()).abs() > 1.0
                || (r.height as f64 - expect_h.round()).abs() > 1.0
            {
                return Err(bad_meta(format!(
                    "level {} is {}x{}, expected about {:.0}x{:.0}",
                    lvl.path, r.width, r.height, expect_w, expect_h
                )));
            }
            levels.push(Level {
                width_px: r.width,
                height_px: r.height,
                downsample: lvl.downsample,
            });
            rasters.push(r);
        }

        let slide_id = raster_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_default();
        Ok(SlideHandle {
            inner: Arc::new(SlideInner {
                path: raster_path,
                slide_id,
                dataset_id: dataset_id.to_string(),
                level0_mpp,
                levels,
                rasters,
                sidecar: Some(sidecar),
            }),
        })
    }

    /// Wraps an in-memory raster as a one-level slide.
    pub fn from_raster(
        raster: RgbRaster,
        level0_mpp: f64,
        slide_id: &str,
        dataset_id: &str,
    ) -> Self {
        assert!(level0_mpp > 0.0);
        SlideHandle {
            inner: Arc::new(SlideInner {
                path: PathBuf::new(),
                slide_id: slide_id.to_string(),
                dataset_id: dataset_id.to_string(),
                level0_mpp,
                levels: vec![Level {
                    width_px: raster.width,
                    height_px: raster.height,
                    downsample: 1.0,
                }],
                rasters: vec![raster],
                sidecar: None,
            }),
        }
    }

    pub fn path(&self) -> &Path {
        &self.inner.path
    }

    pub fn slide_id(&self) -> &str {
        &self.inner.slide_id
    }

    pub fn dataset_id(&self) -> &str {
        &self.inner.dataset_id
    }

    pub fn level0_mpp(&self) -> f64 {
        self.inner.level0_mpp
    }

    pub fn levels(&self) -> &[Level] {
        &self.inner.levels
    }

    pub fn dimensions(&self) -> (u32, u32) {
        let l = self.inner.levels[0];
        (l.width_px, l.height_px)
    }

    pub fn sidecar(&self) -> Option<&SlideSidecar> {
        self.inner.sidecar.as_ref()
    }

    /// Stored pixels of a level.
    pub fn level_raster(&self, level: usize) -> &RgbRaster {
        &self.inner.rasters[level]
    }

    /// Level-0 pixels spanned by `size_px` output pixels at `mpp`.
    pub fn footprint_l0(&self, size_px: u32, mpp: f64) -> f64 {
        size_px as f64 * mpp / self.inner.level0_mpp
    }

    /// Largest-downsample level whose spacing does not exceed `mpp`.
    pub fn best_level_for(&self, mpp: f64) -> usize {
        let l0 = self.inner.level0_mpp;
        self.inner
            .levels
            .iter()
            .rposition(|lvl| l0 * lvl.downsample <= mpp * (1.0 + MPP_EPS))
            .unwrap_or(0)
    }

    /// Reads a `width_px`×`height_px` region at `mpp` µm/px whose top-left
    /// corner sits at `origin_l0` in level-0 pixels.
    ///
    /// Integer scale factors on a grid-aligned origin are box-filtered;
    /// other factors are bilinearly sampled. When the chosen level is not
    /// aligned with the origin, lower levels are tried so that integer
    /// factors stay exact box averages.
    pub fn read_region(
        &self,
        origin_l0: (i64, i64),
        mpp: f64,
        width_px: u32,
        height_px: u32,
    ) -> Result<TileImage, SlideError> {
        let l0 = self.inner.level0_mpp;
        if !(mpp.is_finite() && mpp > 0.0) {
            return Err(SlideError::InvalidRequest(format!("mpp must be positive, got {mpp}")));
        }
        if mpp < l0 * (1.0 - MPP_EPS) {
            return Err(SlideError::InvalidRequest(format!(
                "requested {mpp} µm/px is finer than level 0 ({l0} µm/px)"
            )));
        }
        if width_px == 0 || height_px == 0 {
            return Err(SlideError::InvalidRequest("empty region".into()));
        }
        let (w0, h0) = self.dimensions();
        let extent_w = self.footprint_l0(width_px, mpp);
        let extent_h = self.footprint_l0(height_px, mpp);
        let (x, y) = origin_l0;
        let tol = 1e-6;
        if x < 0
            || y < 0
            || x as f64 + extent_w > w0 as f64 + tol
            || y as f64 + extent_h > h0 as f64 + tol
        {
            return Err(SlideError::OutOfBounds {
                x,
                y,
                extent_w,
                extent_h,
                width: w0,
                height: h0,
            });
        }

        let start = self.best_level_for(mpp);
        let mut chosen = None;
        for level in (0..=start).rev() {
            let lvl = self.inner.levels[level];
            let ratio = mpp / (l0 * lvl.downsample);
            let k = ratio.round();
            if (ratio - k).abs() > 1e-9 * ratio.max(1.0) || k < 1.0 {
                continue;
            }
            let ds = lvl.downsample;
            if ds.fract() != 0.0 {
                continue;
            }
            let ds = ds as i64;
            if x % ds != 0 || y % ds != 0 {
                continue;
            }
            let k = k as u32;
            let (lx, ly) = ((x / ds) as u32, (y / ds) as u32);
            let fits = lx as u64 + width_px as u64 * k as u64 <= lvl.width_px as u64
                && ly as u64 + height_px as u64 * k as u64 <= lvl.height_px as u64;
            if fits {
                chosen = Some((level, k, lx, ly));
                break;
            }
        }

        let raster = match chosen {
            Some((level, k, lx, ly)) => resample::box_downsample(
                &self.inner.rasters[level],
                lx,
                ly,
                k,
                width_px,
                height_px,
            ),
            None => {
                let lvl = self.inner.levels[start];
                let scale = mpp / (l0 * lvl.downsample);
                resample::bilinear(
                    &self.inner.rasters[start],
                    x as f64 / lvl.downsample,
                    y as f64 / lvl.downsample,
                    scale,
                    width_px,
                    height_px,
                )
            }
        };
        Ok(TileImage::from_raster(raster, mpp, origin_l0, &self.inner.slide_id))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn gradient(w: u32, h: u32) -> RgbRaster {
        let mut px = Vec::with_capacity((w * h * 3) as usize);
        for y in 0..h {
            for x in 0..w {
                px.extend_from_slice(&[(x * 7 % 256) as u8, (y * 13 % 256) as u8, ((x ^ y) % 256) as u8]);
            }
        }
        RgbRaster::new(w, h, px)
    }

    #[test]
    fn identity_read_copies_level0() {
        let r = gradient(600, 520);
        let s = SlideHandle::from_raster(r.clone(), 0.25, "g", "d");
        let t = s.read_region((10, 20), 0.25, 256, 256).unwrap();
        for y in 0..256 {
            for x in 0..256 {
                assert_eq!(t.pixel(x, y), r.pixel(x + 10, y + 20));
            }
        }
        assert_eq!(t.physical_extent(), (64.0, 64.0));
    }

    #[test]
    fn rejects_out_of_bounds_and_fine_mpp() {
        let s = SlideHandle::from_raster(gradient(600, 600), 0.25, "g", "d");
        assert!(matches!(
            s.read_region((-1, 0), 0.25, 256, 256),
            Err(SlideError::OutOfBounds { .. })
        ));
        assert!(matches!(
            s.read_region((100, 0), 0.5, 256, 256),
            Err(SlideError::OutOfBounds { .. })
        ));
        assert!(matches!(
            s.read_region((0, 0), 0.125, 16, 16),
            Err(SlideError::InvalidRequest(_))
        ));
        // exactly touching the far edge is fine
        s.read_region((88, 88), 0.5, 256, 256).unwrap();
    }

    #[test]
    fn fractional_scale_uses_bilinear() {
        let s = SlideHandle::from_raster(RgbRaster::filled(600, 600, [10, 20, 30]), 0.25, "g", "d");
        let t = s.read_region((3, 5), 0.375, 100, 100).unwrap();
        assert!(t.pixels.chunks(3).all(|p| p == [10, 20, 30]));
        assert_eq!(t.physical_extent(), (37.5, 37.5));
    }
}
