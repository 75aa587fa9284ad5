mod common;

use common::{scratch, sha256_hex};
use histotile::patcher::{compute_foreground_mask, DEFAULT_MASK_MPP};
use histotile::slide::synthetic::load_tissue_mask;
use histotile::slide::{generate_synthetic_slide, open_slide, write_slide_package, RgbRaster, SlideError};

#[test]
fn generator_metadata_round_trips_and_mask_agrees() {
    let dir = scratch("big");
    let path = dir.join("s.png");
    generate_synthetic_slide(3, 4096, 4096, 0.25, 0.5, &path).unwrap();
    let slide = open_slide(&path, "synthetic").unwrap();
    let l0 = slide.levels()[0];
    assert_eq!((l0.width_px, l0.height_px, l0.downsample), (4096, 4096, 1.0));
    assert_eq!(slide.level0_mpp(), 0.25);
    assert_eq!(slide.slide_id(), "s");

    let truth = load_tissue_mask(&path).unwrap();
    let cover = truth.fraction_set();
    assert!((0.45..=0.55).contains(&cover), "coverage {cover}");

    // The ground truth is per level-0 pixel; compare per 8 µm cell by majority.
    let mask = compute_foreground_mask(&slide, DEFAULT_MASK_MPP).unwrap();
    let cell = (DEFAULT_MASK_MPP / 0.25) as u32;
    let mut agree = 0;
    for cy in 0..mask.grid.height {
        for cx in 0..mask.grid.width {
            let mut inside = 0;
            for y in cy * cell..(cy + 1) * cell {
                for x in cx * cell..(cx + 1) * cell {
                    inside += truth.get(x, y) as u32;
                }
            }
            let majority = 2 * inside >= cell * cell;
            agree += (majority == mask.grid.get(cx, cy)) as usize;
        }
    }
    let total = (mask.grid.width * mask.grid.height) as usize;
    assert!(agree as f64 >= 0.95 * total as f64, "{agree}/{total} cells agree");
}

#[test]
fn same_seed_same_bytes() {
    let dir = scratch("det");
    let a = generate_synthetic_slide(7, 1024, 768, 0.5, 0.3, &dir.join("a.png")).unwrap();
    let b = generate_synthetic_slide(7, 1024, 768, 0.5, 0.3, &dir.join("b.png")).unwrap();
    let c = generate_synthetic_slide(8, 1024, 768, 0.5, 0.3, &dir.join("c.png")).unwrap();
    let read = |p: &std::path::Path| sha256_hex(&std::fs::read(p).unwrap());
    assert_eq!(read(&a.raster_path), read(&b.raster_path));
    assert_eq!(read(a.mask_path.as_ref().unwrap()), read(b.mask_path.as_ref().unwrap()));
    assert_ne!(read(&a.raster_path), read(&c.raster_path));
    assert!(generate_synthetic_slide(7, 1024, 1024, 0.25, 0.0, &dir.join("z.png")).is_err());
}

#[test]
fn open_errors() {
    let dir = scratch("errors");
    assert!(matches!(open_slide(dir.join("none.png"), "d"), Err(SlideError::FileNotFound(_))));

    let raster = RgbRaster::filled(512, 512, [200, 100, 150]);
    write_slide_package(&dir.join("bare.png"), &raster, None, None, None).unwrap();
    assert!(matches!(open_slide(dir.join("bare.png"), "d"), Err(SlideError::MissingMpp(_))));

    std::fs::write(dir.join("junk.png"), b"not a png").unwrap();
    std::fs::write(dir.join("junk.json"), b"{\"level0_mpp\":0.25,\"width_px\":1,\"height_px\":1}").unwrap();
    assert!(open_slide(dir.join("junk.png"), "d").is_err());
}

#[test]
fn double_spacing_read_matches_box_oracle() {
    let dir = scratch("box");
    let path = dir.join("s.png");
    generate_synthetic_slide(5, 1024, 1024, 0.25, 0.5, &path).unwrap();
    let slide = open_slide(&path, "d").unwrap();
    let src = slide.level_raster(0);

    let identity = slide.read_region((0, 0), 0.25, 256, 256).unwrap();
    for y in 0..256 {
        let row = &src.pixels[(y * 1024 * 3) as usize..(y * 1024 * 3 + 256 * 3) as usize];
        assert_eq!(&identity.pixels[(y * 256 * 3) as usize..((y + 1) * 256 * 3) as usize], row);
    }

    for origin in [(0i64, 0i64), (100, 300), (512, 512)] {
        let tile = slide.read_region(origin, 0.5, 256, 256).unwrap();
        let mut worst = 0i32;
        for ty in 0..256u32 {
            for tx in 0..256u32 {
                let got = tile.pixel(tx, ty);
                for c in 0..3 {
                    let mut sum = 0.0;
                    for dy in 0..2 {
                        for dx in 0..2 {
                            let sx = origin.0 as u32 + 2 * tx + dx;
                            let sy = origin.1 as u32 + 2 * ty + dy;
                            sum += src.pixel(sx, sy)[c] as f64;
                        }
                    }
                    let want = (sum / 4.0).round() as i32;
                    worst = worst.max((got[c] as i32 - want).abs());
                }
            }
        }
        assert!(worst <= 1, "origin {origin:?}: max error {worst}");
    }
    assert!(matches!(slide.read_region((-1, 0), 0.5, 256, 256), Err(SlideError::OutOfBounds { .. })));
}
