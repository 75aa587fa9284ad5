use super::RgbRaster;

/// Averages `k`×`k` source blocks starting at (`x0`, `y0`). Rounds half up.
pub(crate) fn box_downsample(
    src: &RgbRaster,
    x0: u32,
    y0: u32,
    k: u32,
    out_w: u32,
    out_h: u32,
) -> RgbRaster {
    let stride = src.row_stride();
    let row_len = out_w as usize * 3;
    let mut out = vec![0u8; row_len * out_h as usize];
    if k == 1 {
        for oy in 0..out_h as usize {
            let s = (y0 as usize + oy) * stride + x0 as usize * 3;
            out[oy * row_len..(oy + 1) * row_len].copy_from_slice(&src.pixels[s..s + row_len]);
        }
        return RgbRaster::new(out_w, out_h, out);
    }

    let area = k * k;
    let half = area / 2;
    let k = k as usize;
    // Column sums over the k source rows, then k-wide horizontal sums.
    let span = row_len * k;
    let mut cols = vec![0u32; span];
    for oy in 0..out_h as usize {
        cols.iter_mut().for_each(|a| *a = 0);
        for dy in 0..k {
            let row = (y0 as usize + oy * k + dy) * stride + x0 as usize * 3;
            for (a, &p) in cols.iter_mut().zip(&src.pixels[row..row + span]) {
                *a += p as u32;
            }
        }
        let dst = &mut out[oy * row_len..(oy + 1) * row_len];
        for (ox, block) in cols.chunks_exact(3 * k).enumerate() {
            let (mut r, mut g, mut b) = (0u32, 0u32, 0u32);
            for p in block.chunks_exact(3) {
                r += p[0];
                g += p[1];
                b += p[2];
            }
            dst[ox * 3] = ((r + half) / area) as u8;
            dst[ox * 3 + 1] = ((g + half) / area) as u8;
            dst[ox * 3 + 2] = ((b + half) / area) as u8;
        }
    }
    RgbRaster::new(out_w, out_h, out)
}

/// Samples output pixel centres from `src` with bilinear interpolation.
/// (`fx`, `fy`) is the top-left corner in source pixels and `scale` the
/// number of source pixels per output pixel.
pub(crate) fn bilinear(
    src: &RgbRaster,
    fx: f64,
    fy: f64,
    scale: f64,
    out_w: u32,
    out_h: u32,
) -> RgbRaster {
    let max_x = (src.width - 1) as f64;
    let max_y = (src.height - 1) as f64;
    let stride = src.row_stride();
    let mut out = Vec::with_capacity(out_w as usize * out_h as usize * 3);

    let cols: Vec<(usize, usize, f64)> = (0..out_w)
        .map(|ox| {
            let sx = (fx + (ox as f64 + 0.5) * scale - 0.5).clamp(0.0, max_x);
            let x0 = sx.floor();
            let x1 = (x0 + 1.0).min(max_x);
            (x0 as usize, x1 as usize, sx - x0)
        })
        .collect();

    for oy in 0..out_h {
        let sy = (fy + (oy as f64 + 0.5) * scale - 0.5).clamp(0.0, max_y);
        let y0 = sy.floor();
        let y1 = (y0 + 1.0).min(max_y);
        let wy = sy - y0;
        let r0 = y0 as usize * stride;
        let r1 = y1 as usize * stride;
        for &(x0, x1, wx) in &cols {
            for c in 0..3 {
                let p00 = src.pixels[r0 + x0 * 3 + c] as f64;
                let p01 = src.pixels[r0 + x1 * 3 + c] as f64;
                let p10 = src.pixels[r1 + x0 * 3 + c] as f64;
                let p11 = src.pixels[r1 + x1 * 3 + c] as f64;
                let top = p00 + (p01 - p00) * wx;
                let bot = p10 + (p11 - p10) * wx;
                let v = top + (bot - top) * wy;
                out.push(v.round().clamp(0.0, 255.0) as u8);
            }
        }
    }
    RgbRaster::new(out_w, out_h, out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn box_of_constant_is_constant() {
        let src = RgbRaster::filled(64, 64, [3, 200, 77]);
        let out = box_downsample(&src, 8, 4, 4, 8, 10);
        assert!(out.pixels.chunks(3).all(|p| p == [3, 200, 77]));
    }

    #[test]
    fn box_rounds_half_up() {
        // 2x2 block with values 0,1,0,1 averages to 0.5 -> 1
        let mut px = vec![0u8; 2 * 2 * 3];
        px[3] = 1;
        px[9] = 1;
        let src = RgbRaster::new(2, 2, px);
        let out = box_downsample(&src, 0, 0, 2, 1, 1);
        assert_eq!(out.pixels, vec![1, 0, 0]);
    }

    #[test]
    fn bilinear_unit_scale_is_copy() {
        let px: Vec<u8> = (0..16 * 16 * 3).map(|i| (i % 251) as u8).collect();
        let src = RgbRaster::new(16, 16, px);
        let out = bilinear(&src, 2.0, 3.0, 1.0, 8, 8);
        for y in 0..8 {
            for x in 0..8 {
                assert_eq!(out.pixel(x, y), src.pixel(x + 2, y + 3));
            }
        }
    }
}
