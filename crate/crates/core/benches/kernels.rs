use std::hint::black_box;

use criterion::{criterion_group, criterion_main, BenchmarkId, Criterion};
use histotile::embed::{kde_uniformity_loss_with, EmbeddingBatch};
use histotile::eval::{kshot_protocol, KShotSpec, LabeledEmbeddings, ProbeConfig, Split};
use histotile::server::{DatasetManifest, ManifestEntry, Pipeline, StreamConfig};
use histotile::slide::generate_synthetic_slide;
use histotile::stain::{hed_augment_with, hsv_tile_filter_with, HedParams, HsvRanges, StainMatrix};
use histotile::{Exec, TileImage};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const MODES: [(&str, Exec); 2] = [("sequential", Exec::Sequential), ("parallel", Exec::Parallel)];

fn random_tile(px: u32) -> TileImage {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let pixels = (0..px * px * 3).map(|_| rng.gen()).collect();
    TileImage::detached(px, px, pixels, 0.5)
}

fn kde(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let (n, d) = (256, 128);
    let batch = EmbeddingBatch::new(n, d, (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect())
        .unwrap()
        .normalize();
    let mut group = c.benchmark_group("kde_256x128");
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| kde_uniformity_loss_with(black_box(&batch), 2.0, exec).unwrap()));
    }
    group.finish();
}

fn stain(c: &mut Criterion) {
    let tile = random_tile(512);
    let ranges = HsvRanges::default();
    let matrix = StainMatrix::hed();
    let params = HedParams::sample(0.05, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
    let mut group = c.benchmark_group("stain_512px");
    for (name, exec) in MODES {
        group.bench_with_input(BenchmarkId::new("hsv_filter", name), &exec, |b, &exec| {
            b.iter(|| hsv_tile_filter_with(black_box(&tile), &ranges, exec))
        });
        group.bench_with_input(BenchmarkId::new("hed_augment", name), &exec, |b, &exec| {
            b.iter(|| hed_augment_with(black_box(&tile), &params, &matrix, exec))
        });
    }
    group.finish();
}

fn batches(c: &mut Criterion) {
    let dir = tempfile::tempdir().unwrap();
    let entries = (0..2)
        .map(|i| {
            let path = dir.path().join(format!("s{i}.png"));
            generate_synthetic_slide(40 + i, 4096, 4096, 0.25, 0.5, &path).unwrap();
            ManifestEntry {
                path,
                dataset: format!("d{i}"),
                mpp: None,
            }
        })
        .collect();
    let manifest = DatasetManifest::from_entries(entries).unwrap();
    let mut group = c.benchmark_group("batch_of_12");
    group.sample_size(10);
    for (name, exec) in MODES {
        let pipeline = Pipeline::new(StreamConfig::default(), &manifest, exec).unwrap();
        let mut start = 0;
        group.bench_function(name, |b| {
            b.iter(|| {
                start += 12;
                pipeline.generate_range(0, start, 12).unwrap()
            })
        });
    }
    group.finish();
}

fn kshot(c: &mut Criterion) {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let d = 64;
    let n = 600;
    let x = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    let labels = (0..n).map(|i| (i % 3) as u32).collect();
    let splits = (0..n).map(|i| if i % 4 == 0 { Split::Test } else { Split::Train }).collect();
    let data = LabeledEmbeddings::classification(x, d, labels, splits).unwrap();
    let spec = KShotSpec { k: 10, runs: 50, seed: 0 };
    let probe = ProbeConfig {
        max_epochs: 200,
        ..ProbeConfig::default()
    };
    let mut group = c.benchmark_group("kshot_50_runs");
    group.sample_size(10);
    for (name, exec) in MODES {
        group.bench_function(name, |b| b.iter(|| kshot_protocol(&data, &spec, &probe, exec).unwrap()));
    }
    group.finish();
}

criterion_group!(benches, kde, stain, batches, kshot);
criterion_main!(benches);
