#![allow(dead_code)]

use std::path::{Path, PathBuf};
use std::sync::OnceLock;

use histotile::server::{ManifestEntry, StreamConfig};
use histotile::slide::generate_synthetic_slide;
use sha2::{Digest, Sha256};

/// Scratch directory private to this test binary.
pub fn scratch(name: &str) -> PathBuf {
    let exe = std::env::current_exe().unwrap();
    let stem = exe.file_stem().unwrap().to_string_lossy().into_owned();
    let dir = Path::new(env!("CARGO_TARGET_TMPDIR")).join(stem).join(name);
    let _ = std::fs::remove_dir_all(&dir);
    std::fs::create_dir_all(&dir).unwrap();
    dir
}

pub fn sha256_hex(bytes: &[u8]) -> String {
    Sha256::digest(bytes).iter().map(|b| format!("{b:02x}")).collect()
}

/// Four 2048 px synthetic slides at 0.25 µm/px, two per dataset ("A", "B").
pub fn small_slides() -> &'static [ManifestEntry] {
    static SLIDES: OnceLock<Vec<ManifestEntry>> = OnceLock::new();
    SLIDES.get_or_init(|| {
        let dir = scratch("small-slides");
        let mut out = Vec::new();
        for (i, ds) in ["A", "A", "B", "B"].iter().enumerate() {
            let path = dir.join(format!("{ds}{i}.png"));
            generate_synthetic_slide(100 + i as u64, 2048, 2048, 0.25, 0.5, &path).unwrap();
            out.push(ManifestEntry {
                path,
                dataset: ds.to_string(),
                mpp: None,
            });
        }
        out
    })
}

/// A quick configuration for 2048 px slides: 64 px tiles at three spacings.
pub fn small_config(seed: u64) -> StreamConfig {
    let mut c = StreamConfig {
        seed,
        batch_size: 4,
        ..StreamConfig::default()
    };
    c.sampler.tile_size_px = 64;
    c.sampler.mpp_choices = vec![1.0, 0.5, 0.25];
    c
}
