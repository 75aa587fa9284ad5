use serde::{Deserialize, Serialize};

use super::StainError;
use crate::par::Exec;
use crate::slide::TileImage;

/// 8-bit HSV: hue in half-degrees (0..=180), saturation and value in 0..=255.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct Hsv {
    pub h: u8,
    pub s: u8,
    pub v: u8,
}

/// Hexcone RGB→HSV with every channel rounded half-up, computed in integers.
#[inline]
pub fn rgb_to_hsv(rgb: [u8; 3]) -> Hsv {
    let [r, g, b] = rgb.map(i32::from);
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let s = if max == 0 {
        0
    } else {
        (510 * delta + max) / (2 * max)
    };
    let h = if delta == 0 {
        0
    } else {
        // hue in half-degrees = base + 30 * num / delta
        let (base, num) = if max == r {
            (0, g - b)
        } else if max == g {
            (60, b - r)
        } else {
            (120, r - g)
        };
        let mut n = base * delta + 30 * num;
        if n < 0 {
            n += 180 * delta;
        }
        (2 * n + delta) / (2 * delta)
    };
    Hsv {
        h: h as u8,
        s: s as u8,
        v: max as u8,
    }
}

/// Acceptance ranges of the HSV tile filter. All bounds are inclusive.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HsvRanges {
    pub h: (u8, u8),
    pub s: (u8, u8),
    pub v: (u8, u8),
    pub min_fraction: f64,
}

impl Default for HsvRanges {
    fn default() -> Self {
        HsvRanges {
            h: (90, 180),
            s: (8, 255),
            v: (103, 255),
            min_fraction: 0.60,
        }
    }
}

impl HsvRanges {
    pub fn validate(&self) -> Result<(), StainError> {
        let ok = self.h.0 <= self.h.1
            && self.h.1 <= 180
            && self.s.0 <= self.s.1
            && self.v.0 <= self.v.1
            && (0.0..=1.0).contains(&self.min_fraction);
        if ok {
            Ok(())
        } else {
            Err(StainError::InvalidParams(format!("bad HSV ranges {self:?}")))
        }
    }

    #[inline]
    pub fn contains(&self, hsv: Hsv) -> bool {
        (self.h.0..=self.h.1).contains(&hsv.h)
            && (self.s.0..=self.s.1).contains(&hsv.s)
            && (self.v.0..=self.v.1).contains(&hsv.v)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterOutcome {
    pub accept: bool,
    pub in_range_fraction: f64,
}

/// Counts pixels whose HSV falls inside `ranges` and accepts the tile when
/// the fraction reaches `ranges.min_fraction`.
pub fn hsv_tile_filter(tile: &TileImage, ranges: &HsvRanges) -> FilterOutcome {
    hsv_tile_filter_with(tile, ranges, Exec::Sequential)
}

pub fn hsv_tile_filter_with(tile: &TileImage, ranges: &HsvRanges, exec: Exec) -> FilterOutcome {
    let total = tile.pixel_count();
    if total == 0 {
        return FilterOutcome {
            accept: false,
            in_range_fraction: 0.0,
        };
    }
    let row = tile.width_px as usize * 3;
    let counts = exec.map_chunks(&tile.pixels, row * 16, |chunk| {
        chunk
            .chunks_exact(3)
            .filter(|p| ranges.contains(rgb_to_hsv([p[0], p[1], p[2]])))
            .count()
    });
    let in_range = counts.into_iter().sum::<usize>();
    let in_range_fraction = in_range as f64 / total as f64;
    FilterOutcome {
        accept: in_range_fraction >= ranges.min_fraction,
        in_range_fraction,
    }
}
