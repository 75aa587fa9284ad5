//! Deterministic procedural slides for tests and benchmarks.
//!
//! The generator paints H&E-like pseudo-tissue ellipses on a near-white
//! background and records the exact tissue mask next to the raster.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use image::codecs::png::{CompressionType, FilterType, PngEncoder};
use image::{ExtendedColorType, ImageEncoder};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::{sidecar_path, RgbRaster, SlideError, SlideSidecar};
use crate::grid::BoolGrid;
use crate::seed::mix64;

const EOSIN: [f64; 3] = [232.0, 150.0, 202.0];
const HEMATOXYLIN: [f64; 3] = [150.0, 82.0, 180.0];
const NUCLEUS: [f64; 3] = [72.0, 40.0, 112.0];
const BACKGROUND: [f64; 3] = [248.0, 248.0, 249.0];

/// Files written for one slide package.
#[derive(Debug, Clone)]
pub struct SyntheticSlide {
    pub raster_path: PathBuf,
    pub sidecar_path: PathBuf,
    pub mask_path: Option<PathBuf>,
}

/// Per-pixel noise in [-1, 1), independent of iteration order.
fn pixel_noise(seed: u64, x: u32, y: u32, channel: u32) -> f64 {
    let h = mix64(seed ^ mix64(((y as u64) << 34) | ((x as u64) << 2) | channel as u64));
    (h >> 11) as f64 / (1u64 << 53) as f64 * 2.0 - 1.0
}

/// Renders the raster and its exact tissue mask in memory.
pub fn render_synthetic(
    seed: u64,
    width: u32,
    height: u32,
    tissue_coverage: f64,
) -> Result<(RgbRaster, BoolGrid), SlideError> {
    if !(tissue_coverage > 0.0 && tissue_coverage < 1.0) {
        return Err(SlideError::InvalidRequest(format!(
            "tissue_coverage must be in (0, 1), got {tissue_coverage}"
        )));
    }
    if width < 512 || height < 512 {
        return Err(SlideError::InvalidRequest(format!(
            "synthetic slides must be at least 512x512, got {width}x{height}"
        )));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut mask = BoolGrid::new(width, height);
    let total = width as usize * height as usize;
    let target = (tissue_coverage * total as f64).ceil() as usize;
    let mut covered = 0usize;
    let short = width.min(height) as f64;

    while covered < target {
        let cx = rng.gen_range(0.0..width as f64);
        let cy = rng.gen_range(0.0..height as f64);
        let a = rng.gen_range(0.04..0.10) * short;
        let b = a * rng.gen_range(0.5..1.0);
        let theta = rng.gen_range(0.0..PI);
        let (s, c) = theta.sin_cos();
        let r = a.max(b);
        let x0 = (cx - r).floor().max(0.0) as u32;
        let x1 = ((cx + r).ceil() as u32).min(width - 1);
        let y0 = (cy - r).floor().max(0.0) as u32;
        let y1 = ((cy + r).ceil() as u32).min(height - 1);
        for y in y0..=y1 {
            let dy = y as f64 + 0.5 - cy;
            for x in x0..=x1 {
                let dx = x as f64 + 0.5 - cx;
                let u = (dx * c + dy * s) / a;
                let v = (-dx * s + dy * c) / b;
                if u * u + v * v <= 1.0 && !mask.get(x, y) {
                    mask.set(x, y, true);
                    covered += 1;
                }
            }
        }
    }

    // Nuclei: small dark discs inside tissue.
    let nuclei_count = covered / 900;
    let mut nucleus = BoolGrid::new(width, height);
    for _ in 0..nuclei_count {
        let cx = rng.gen_range(0.0..width as f64);
        let cy = rng.gen_range(0.0..height as f64);
        let r = rng.gen_range(2.5..6.0);
        let x0 = (cx - r).floor().max(0.0) as u32;
        let x1 = ((cx + r).ceil() as u32).min(width - 1);
        let y0 = (cy - r).floor().max(0.0) as u32;
        let y1 = ((cy + r).ceil() as u32).min(height - 1);
        for y in y0..=y1 {
            for x in x0..=x1 {
                let dx = x as f64 + 0.5 - cx;
                let dy = y as f64 + 0.5 - cy;
                if dx * dx + dy * dy <= r * r && mask.get(x, y) {
                    nucleus.set(x, y, true);
                }
            }
        }
    }

    let fx = rng.gen_range(0.002..0.01);
    let fy = rng.gen_range(0.002..0.01);
    let phase = rng.gen_range(0.0..2.0 * PI);
    let noise_seed = rng.gen::<u64>();

    let mut pixels = Vec::with_capacity(total * 3);
    for y in 0..height {
        for x in 0..width {
            let (base, amp) = if nucleus.get(x, y) {
                (NUCLEUS, 10.0)
            } else if mask.get(x, y) {
                let m = 0.5 + 0.5 * (x as f64 * fx + y as f64 * fy + phase).sin();
                let mut col = [0.0; 3];
                for ch in 0..3 {
                    col[ch] = EOSIN[ch] * (1.0 - m) + HEMATOXYLIN[ch] * m;
                }
                (col, 12.0)
            } else {
                (BACKGROUND, 3.0)
            };
            for (ch, &b) in base.iter().enumerate() {
                let v = b + amp * pixel_noise(noise_seed, x, y, ch as u32);
                pixels.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    Ok((RgbRaster::new(width, height, pixels), mask))
}

/// Encodes a raster as PNG with fixed encoder settings.
pub fn encode_png(raster: &RgbRaster) -> Result<Vec<u8>, SlideError> {
    let mut buf = Vec::new();
    PngEncoder::new_with_quality(&mut buf, CompressionType::Fast, FilterType::Sub)
        .write_image(
            &raster.pixels,
            raster.width,
            raster.height,
            ExtendedColorType::Rgb8,
        )
        .map_err(|e| SlideError::Decode {
            path: PathBuf::new(),
            message: e.to_string(),
        })?;
    Ok(buf)
}

/// Writes `raster` to `out` (PNG) with a sidecar and, when given, the packed
/// tissue mask. `level0_mpp = None` produces a package without a spacing tag.
pub fn write_slide_package(
    out: &Path,
    raster: &RgbRaster,
    level0_mpp: Option<f64>,
    mask: Option<&BoolGrid>,
    seed: Option<u64>,
) -> Result<SyntheticSlide, SlideError> {
    if let Some(dir) = out.parent() {
        if !dir.as_os_str().is_empty() {
            std::fs::create_dir_all(dir)?;
        }
    }
    std::fs::write(out, encode_png(raster)?)?;

    let mask_path = match mask {
        Some(m) => {
            let p = out.with_extension("mask");
            std::fs::write(&p, m.to_packed())?;
            Some(p)
        }
        None => None,
    };
    let sidecar = SlideSidecar {
        level0_mpp,
        width_px: raster.width,
        height_px: raster.height,
        seed,
        tissue_mask_path: mask_path
            .as_ref()
            .and_then(|p| p.file_name())
            .map(|n| n.to_string_lossy().into_owned()),
        levels: Vec::new(),
    };
    let side = sidecar_path(out);
    let mut json = serde_json::to_vec_pretty(&sidecar).expect("sidecar serializes");
    json.push(b'\n');
    std::fs::write(&side, json)?;
    Ok(SyntheticSlide {
        raster_path: out.to_path_buf(),
        sidecar_path: side,
        mask_path,
    })
}

/// Generates a procedural slide at `out` (a `.png` path). Same arguments
/// produce byte-identical files.
pub fn generate_synthetic_slide(
    seed: u64,
    width_px: u32,
    height_px: u32,
    level0_mpp: f64,
    tissue_coverage: f64,
    out: &Path,
) -> Result<SyntheticSlide, SlideError> {
    if !(level0_mpp > 0.0) {
        return Err(SlideError::InvalidRequest(format!(
            "level0_mpp must be positive, got {level0_mpp}"
        )));
    }
    let (raster, mask) = render_synthetic(seed, width_px, height_px, tissue_coverage)?;
    write_slide_package(out, &raster, Some(level0_mpp), Some(&mask), Some(seed))
}

/// Loads the ground-truth tissue mask recorded in a slide's sidecar.
pub fn load_tissue_mask(raster_path: &Path) -> Result<BoolGrid, SlideError> {
    let side = sidecar_path(raster_path);
    let sidecar: SlideSidecar = serde_json::from_slice(&std::fs::read(&side)?).map_err(|e| {
        SlideError::InvalidMetadata {
            path: side.clone(),
            message: e.to_string(),
        }
    })?;
    let name = sidecar
        .tissue_mask_path
        .ok_or_else(|| SlideError::InvalidMetadata {
            path: side.clone(),
            message: "no tissue_mask_path".into(),
        })?;
    let p = side.parent().unwrap_or(Path::new(".")).join(name);
    let data = std::fs::read(&p)?;
    Ok(BoolGrid::from_packed(sidecar.width_px, sidecar.height_px, &data)?)
}
