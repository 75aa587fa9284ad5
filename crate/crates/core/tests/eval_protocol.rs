mod common;

use common::scratch;
use histotile::eval::io::{load_embeddings, save_embeddings, write_report, Report, TaskResult};
use histotile::eval::{build_kshot_split, kshot_protocol, KShotSpec, LabeledEmbeddings, MajorityClass, ProbeConfig, Split};
use histotile::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Gaussian-ish blobs around well separated class centres. Features are
/// rounded through f32 so they survive the embedding file unchanged.
fn blobs(classes: u32, per_class: usize, d: usize, spread: f64, seed: u64) -> LabeledEmbeddings {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|_| (0..d).map(|_| rng.gen_range(-4.0..4.0)).collect())
        .collect();
    let (mut x, mut labels, mut splits) = (Vec::new(), Vec::new(), Vec::new());
    for c in 0..classes {
        for i in 0..per_class {
            for k in 0..d {
                let noise: f64 = (0..4).map(|_| rng.gen_range(-1.0..1.0)).sum::<f64>() * spread;
                x.push((centres[c as usize][k] + noise) as f32 as f64);
            }
            labels.push(c);
            splits.push(if i % 3 == 0 { Split::Test } else { Split::Train });
        }
    }
    LabeledEmbeddings::classification(x, d, labels, splits).unwrap()
}

#[test]
fn majority_baseline_scores_chance() {
    for classes in [2u32, 3, 5] {
        let data = blobs(classes, 45, 6, 0.5, classes as u64);
        let spec = KShotSpec { k: 10, runs: 50, seed: 1 };
        let r = kshot_protocol(&data, &spec, &MajorityClass, Exec::Sequential).unwrap();
        let chance = 1.0 / classes as f64;
        assert!((r.mean - chance).abs() <= 3.0 * r.std_of_mean + 1e-12, "{classes}: {}", r.mean);
    }
}

#[test]
fn separable_set_scores_high_and_repeats() {
    let data = blobs(2, 90, 8, 0.3, 11);
    let spec = KShotSpec { k: 10, runs: 50, seed: 4 };
    let probe = ProbeConfig::default();
    let a = kshot_protocol(&data, &spec, &probe, Exec::Parallel).unwrap();
    assert!(a.mean > 0.95, "mean {}", a.mean);
    assert_eq!(a.runs, 50);
    let b = kshot_protocol(&data, &spec, &probe, Exec::Sequential).unwrap();
    assert_eq!((a.mean, a.std_of_mean), (b.mean, b.std_of_mean));
    let y = data.labels.as_ref().unwrap();
    let other = KShotSpec { seed: 5, ..spec };
    assert_ne!(build_kshot_split(y, &spec, 0).unwrap(), build_kshot_split(y, &other, 0).unwrap());
}

#[test]
fn missing_splits_is_an_error() {
    let mut data = blobs(2, 20, 3, 0.3, 2);
    data.splits = None;
    assert!(kshot_protocol(&data, &KShotSpec::default(), &MajorityClass, Exec::Sequential).is_err());
}

#[test]
fn files_round_trip_into_a_report() {
    let dir = scratch("report");
    let data = blobs(3, 30, 5, 0.4, 9);
    let path = dir.join("emb.bin");
    save_embeddings(&path, &data).unwrap();
    let back = load_embeddings(&path).unwrap();
    assert_eq!(back, data);

    let spec = KShotSpec { k: 5, runs: 8, seed: 0 };
    let r = kshot_protocol(&back, &spec, &ProbeConfig::default(), Exec::default()).unwrap();
    let mut report = Report::new();
    report.insert(
        "blobs-pc5".into(),
        TaskResult {
            metric: "balanced_accuracy".into(),
            mean: r.mean,
            std_of_mean: r.std_of_mean,
            runs: r.runs,
        },
    );
    let out = dir.join("report.json");
    write_report(&out, &report).unwrap();
    let parsed: Report = serde_json::from_slice(&std::fs::read(&out).unwrap()).unwrap();
    assert_eq!(parsed, report);
}
