//! Boolean raster with the packed on-disk layout used for tissue masks.
//!
//! Packed layout: rows are stored top to bottom, each row padded to a whole
//! number of bytes, bits filled most-significant first.

use std::io;

#[derive(Clone, PartialEq, Eq)]
pub struct BoolGrid {
    pub width: u32,
    pub height: u32,
    pub bits: Vec<bool>,
}

impl std::fmt::Debug for BoolGrid {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(
            f,
            "BoolGrid({}x{}, {:.3} set)",
            self.width,
            self.height,
            self.fraction_set()
        )
    }
}

impl BoolGrid {
    pub fn new(width: u32, height: u32) -> Self {
        BoolGrid {
            width,
            height,
            bits: vec![false; width as usize * height as usize],
        }
    }

    #[inline]
    pub fn get(&self, x: u32, y: u32) -> bool {
        self.bits[y as usize * self.width as usize + x as usize]
    }

    #[inline]
    pub fn set(&mut self, x: u32, y: u32, v: bool) {
        let w = self.width as usize;
        self.bits[y as usize * w + x as usize] = v;
    }

    pub fn count_set(&self) -> usize {
        self.bits.iter().filter(|&&b| b).count()
    }

    pub fn fraction_set(&self) -> f64 {
        if self.bits.is_empty() {
            0.0
        } else {
            self.count_set() as f64 / self.bits.len() as f64
        }
    }

    pub fn packed_row_bytes(width: u32) -> usize {
        (width as usize).div_ceil(8)
    }

    pub fn to_packed(&self) -> Vec<u8> {
        let rb = Self::packed_row_bytes(self.width);
        let mut out = vec![0u8; rb * self.height as usize];
        for (y, row) in self.bits.chunks(self.width.max(1) as usize).enumerate() {
            for (x, &b) in row.iter().enumerate() {
                if b {
                    out[y * rb + x / 8] |= 0x80 >> (x % 8);
                }
            }
        }
        out
    }

    pub fn from_packed(width: u32, height: u32, data: &[u8]) -> io::Result<Self> {
        let rb = Self::packed_row_bytes(width);
        if data.len() != rb * height as usize {
            return Err(io::Error::new(
                io::ErrorKind::InvalidData,
                format!(
                    "packed mask has {} bytes, expected {} for {width}x{height}",
                    data.len(),
                    rb * height as usize
                ),
            ));
        }
        let mut g = BoolGrid::new(width, height);
        for y in 0..height as usize {
            for x in 0..width as usize {
                g.bits[y * width as usize + x] = data[y * rb + x / 8] & (0x80 >> (x % 8)) != 0;
            }
        }
        Ok(g)
    }
}
