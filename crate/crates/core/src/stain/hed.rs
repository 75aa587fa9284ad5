use std::path::Path;
use std::sync::OnceLock;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::StainError;
use crate::par::Exec;
use crate::slide::TileImage;

/// Offset added to 8-bit intensities before taking the logarithm, so black
/// pixels map to a finite optical density.
pub const OD_EPSILON: f64 = 1.0;

const BUILTIN_MATRIX: &str = include_str!("../../data/stain_matrix_hed.txt");

type Mat3 = [[f64; 3]; 3];

/// Stain basis in optical-density space: one unit row per stain
/// (hematoxylin, eosin, DAB).
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StainMatrix {
    rows: Mat3,
    inverse: Mat3,
}

fn det3(m: &Mat3) -> f64 {
    m[0][0] * (m[1][1] * m[2][2] - m[1][2] * m[2][1]) - m[0][1] * (m[1][0] * m[2][2] - m[1][2] * m[2][0])
        + m[0][2] * (m[1][0] * m[2][1] - m[1][1] * m[2][0])
}

fn inverse3(m: &Mat3) -> Option<Mat3> {
    let det = det3(m);
    if !det.is_finite() || det.abs() < 1e-12 {
        return None;
    }
    let c = |r0: usize, r1: usize, c0: usize, c1: usize| m[r0][c0] * m[r1][c1] - m[r0][c1] * m[r1][c0];
    // transpose of the cofactor matrix
    let adj = [
        [c(1, 2, 1, 2), -c(0, 2, 1, 2), c(0, 1, 1, 2)],
        [-c(1, 2, 0, 2), c(0, 2, 0, 2), -c(0, 1, 0, 2)],
        [c(1, 2, 0, 1), -c(0, 2, 0, 1), c(0, 1, 0, 1)],
    ];
    Some(adj.map(|row| row.map(|v| v / det)))
}

fn matmul(a: &Mat3, b: &Mat3) -> Mat3 {
    let mut out = [[0.0; 3]; 3];
    for i in 0..3 {
        for j in 0..3 {
            out[i][j] = (0..3).map(|k| a[i][k] * b[k][j]).sum();
        }
    }
    out
}

#[inline]
fn row_times(v: [f64; 3], m: &Mat3) -> [f64; 3] {
    [
        v[0] * m[0][0] + v[1] * m[1][0] + v[2] * m[2][0],
        v[0] * m[0][1] + v[1] * m[1][1] + v[2] * m[2][1],
        v[0] * m[0][2] + v[1] * m[1][2] + v[2] * m[2][2],
    ]
}

impl StainMatrix {
    /// Normalizes each row to unit length and precomputes the inverse.
    pub fn from_rows(rows: Mat3) -> Result<Self, StainError> {
        let mut rows = rows;
        for row in rows.iter_mut() {
            let n = row.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !(n.is_finite() && n > 0.0) {
                return Err(StainError::SingularMatrix);
            }
            row.iter_mut().for_each(|v| *v /= n);
        }
        let inverse = inverse3(&rows).ok_or(StainError::SingularMatrix)?;
        Ok(StainMatrix { rows, inverse })
    }

    /// Parses the plain-text form: three lines of three numbers, `#` comments.
    pub fn parse(text: &str) -> Result<Self, StainError> {
        let mut rows = Vec::new();
        for (lineno, line) in text.lines().enumerate() {
            let line = line.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let vals = line
                .split_whitespace()
                .map(|t| t.parse::<f64>())
                .collect::<Result<Vec<_>, _>>()
                .map_err(|e| StainError::MatrixFormat(format!("line {}: {e}", lineno + 1)))?;
            if vals.len() != 3 {
                return Err(StainError::MatrixFormat(format!(
                    "line {}: expected 3 values, got {}",
                    lineno + 1,
                    vals.len()
                )));
            }
            rows.push([vals[0], vals[1], vals[2]]);
        }
        if rows.len() != 3 {
            return Err(StainError::MatrixFormat(format!("expected 3 rows, got {}", rows.len())));
        }
        Self::from_rows([rows[0], rows[1], rows[2]])
    }

    pub fn load(path: &Path) -> Result<Self, StainError> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// The built-in hematoxylin/eosin/DAB basis.
    pub fn hed() -> Self {
        Self::parse(BUILTIN_MATRIX).expect("built-in stain matrix is valid")
    }

    pub fn rows(&self) -> &Mat3 {
        &self.rows
    }

    pub fn inverse(&self) -> &Mat3 {
        &self.inverse
    }

    /// Row-sum condition number (∞-norm).
    pub fn condition_number(&self) -> f64 {
        let norm = |m: &Mat3| {
            m.iter()
                .map(|r| r.iter().map(|v| v.abs()).sum::<f64>())
                .fold(0.0, f64::max)
        };
        norm(&self.rows) * norm(&self.inverse)
    }
}

impl Default for StainMatrix {
    fn default() -> Self {
        Self::hed()
    }
}

#[inline]
pub fn optical_density(intensity: u8) -> f64 {
    -((intensity as f64 + OD_EPSILON) / 255.0).log10()
}

/// Inverse of [`optical_density`], rounded half up and clamped to 0..=255.
#[inline]
pub fn intensity_from_od(od: f64) -> u8 {
    intensity_table().lookup(od)
}

/// `255·10^(−od) − ε` rounds to at least `n` exactly when `od ≤ t[n]`, so
/// the conversion is a threshold search. Bins are narrower than the
/// smallest gap between thresholds, leaving one comparison per lookup.
struct IntensityTable {
    thresholds: [f64; 256],
    lo: f64,
    inv_step: f64,
    bins: Vec<u8>,
}

const INTENSITY_BIN: f64 = 5e-4;

impl IntensityTable {
    fn build() -> Self {
        let mut thresholds = [f64::INFINITY; 256];
        for (n, t) in thresholds.iter_mut().enumerate().skip(1) {
            *t = -((n as f64 - 0.5 + OD_EPSILON) / 255.0).log10();
        }
        let exact = |od: f64| (1..256).rev().find(|&n| od <= thresholds[n]).unwrap_or(0) as u8;
        let lo = thresholds[255] - INTENSITY_BIN;
        let hi = thresholds[1] + INTENSITY_BIN;
        let count = ((hi - lo) / INTENSITY_BIN).ceil() as usize + 1;
        let bins = (0..count).map(|i| exact(lo + i as f64 * INTENSITY_BIN)).collect();
        IntensityTable {
            thresholds,
            lo,
            inv_step: 1.0 / INTENSITY_BIN,
            bins,
        }
    }

    #[inline]
    fn lookup(&self, od: f64) -> u8 {
        if od.is_nan() {
            return 0;
        }
        let pos = (od - self.lo) * self.inv_step;
        if pos < 0.0 {
            return 255;
        }
        match self.bins.get(pos as usize) {
            Some(&n) if n > 0 && od > self.thresholds[n as usize] => n - 1,
            Some(&n) => n,
            None => 0,
        }
    }
}

fn intensity_table() -> &'static IntensityTable {
    static TABLE: OnceLock<IntensityTable> = OnceLock::new();
    TABLE.get_or_init(IntensityTable::build)
}

fn od_table() -> [f64; 256] {
    let mut t = [0.0; 256];
    for (i, v) in t.iter_mut().enumerate() {
        *v = optical_density(i as u8);
    }
    t
}

/// Per-pixel stain concentrations, with the provenance of the source tile.
#[derive(Debug, Clone, PartialEq)]
pub struct HedPlanes {
    pub width_px: u32,
    pub height_px: u32,
    /// (H, E, D) per pixel, row-major.
    pub data: Vec<[f64; 3]>,
    pub mpp: f64,
    pub origin_l0: (i64, i64),
    pub slide_id: String,
}

pub fn rgb_to_hed(tile: &TileImage, matrix: &StainMatrix) -> HedPlanes {
    let lut = od_table();
    let data = tile
        .pixels
        .chunks_exact(3)
        .map(|p| row_times([lut[p[0] as usize], lut[p[1] as usize], lut[p[2] as usize]], &matrix.inverse))
        .collect();
    HedPlanes {
        width_px: tile.width_px,
        height_px: tile.height_px,
        data,
        mpp: tile.mpp,
        origin_l0: tile.origin_l0,
        slide_id: tile.slide_id.clone(),
    }
}

pub fn hed_to_rgb(hed: &HedPlanes, matrix: &StainMatrix) -> TileImage {
    let mut pixels = Vec::with_capacity(hed.data.len() * 3);
    for &c in &hed.data {
        let od = row_times(c, &matrix.rows);
        pixels.extend(od.map(intensity_from_od));
    }
    TileImage {
        pixels,
        width_px: hed.width_px,
        height_px: hed.height_px,
        mpp: hed.mpp,
        origin_l0: hed.origin_l0,
        slide_id: hed.slide_id.clone(),
    }
}

/// Per-stain scale and shift applied in HED space.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HedParams {
    pub alpha: [f64; 3],
    pub beta: [f64; 3],
    pub sigma: f64,
}

impl HedParams {
    pub const DEFAULT_SIGMA: f64 = 0.05;

    pub fn identity() -> Self {
        HedParams {
            alpha: [1.0; 3],
            beta: [0.0; 3],
            sigma: 0.0,
        }
    }

    /// Draws alpha from U[1-σ, 1+σ] and beta from U[-σ, σ], in the order
    /// alpha_H, alpha_E, alpha_D, beta_H, beta_E, beta_D.
    pub fn sample<R: Rng + ?Sized>(sigma: f64, rng: &mut R) -> Result<Self, StainError> {
        if !(sigma.is_finite() && sigma >= 0.0) {
            return Err(StainError::InvalidParams(format!("sigma must be >= 0, got {sigma}")));
        }
        let draw = |rng: &mut R| {
            if sigma == 0.0 {
                0.0
            } else {
                rng.gen_range(-sigma..=sigma)
            }
        };
        let alpha = [1.0 + draw(rng), 1.0 + draw(rng), 1.0 + draw(rng)];
        let beta = [draw(rng), draw(rng), draw(rng)];
        Ok(HedParams { alpha, beta, sigma })
    }
}

/// Scales and shifts stain concentrations, then maps back to RGB.
///
/// Deconvolution, augmentation and reconstruction collapse to a single
/// affine map in optical-density space: `od' = od·(M⁻¹·diag(α)·M) + β·M`.
pub fn hed_augment(tile: &TileImage, params: &HedParams, matrix: &StainMatrix) -> TileImage {
    hed_augment_with(tile, params, matrix, Exec::Sequential)
}

pub fn hed_augment_with(
    tile: &TileImage,
    params: &HedParams,
    matrix: &StainMatrix,
    exec: Exec,
) -> TileImage {
    let mut scaled_inv = matrix.inverse;
    for row in scaled_inv.iter_mut() {
        for (j, v) in row.iter_mut().enumerate() {
            *v *= params.alpha[j];
        }
    }
    let transform = matmul(&scaled_inv, &matrix.rows);
    let shift = row_times(params.beta, &matrix.rows);
    let lut = od_table();

    let mut pixels = tile.pixels.clone();
    let row = (tile.width_px as usize * 3).max(3);
    exec.for_each_chunk_mut(&mut pixels, row * 8, |_, chunk| {
        for p in chunk.chunks_exact_mut(3) {
            let od = row_times([lut[p[0] as usize], lut[p[1] as usize], lut[p[2] as usize]], &transform);
            for c in 0..3 {
                p[c] = intensity_from_od(od[c] + shift[c]);
            }
        }
    });
    TileImage {
        pixels,
        ..tile.clone()
    }
}
