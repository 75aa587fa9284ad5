use histotile::embed::{kde_uniformity_loss, kde_uniformity_loss_ambient, koleo_loss, EmbedError, EmbeddingBatch};
use histotile::Exec;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn random_unit(n: usize, d: usize, seed: u64) -> EmbeddingBatch {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let data = (0..n * d).map(|_| rng.gen_range(-1.0..1.0)).collect();
    EmbeddingBatch::new(n, d, data).unwrap().normalize()
}

#[test]
fn kde_gradient_matches_central_differences() {
    let (n, d, h) = (8, 16, 1e-5);
    let batch = random_unit(n, d, 21);
    let out = kde_uniformity_loss(&batch, 2.0).unwrap();
    let mut base = batch.data().to_vec();
    let mut worst = 0.0f64;
    for k in 0..n * d {
        let orig = base[k];
        base[k] = orig + h;
        let up = kde_uniformity_loss_ambient(&EmbeddingBatch::new(n, d, base.clone()).unwrap(), 2.0, Exec::Sequential)
            .unwrap()
            .loss;
        base[k] = orig - h;
        let down = kde_uniformity_loss_ambient(&EmbeddingBatch::new(n, d, base.clone()).unwrap(), 2.0, Exec::Sequential)
            .unwrap()
            .loss;
        base[k] = orig;
        worst = worst.max(((up - down) / (2.0 * h) - out.grad[k]).abs());
    }
    let norm = out.grad.iter().map(|g| g * g).sum::<f64>().sqrt();
    assert!(worst / norm <= 1e-5, "relative error {}", worst / norm);
}

#[test]
fn uniform_spread_beats_clustered() {
    let spread = random_unit(32, 4, 1);
    let clustered = {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data = (0..32)
            .flat_map(|_| [1.0, rng.gen_range(-0.1..0.1), rng.gen_range(-0.1..0.1), 0.0])
            .collect();
        EmbeddingBatch::new(32, 4, data).unwrap().normalize()
    };
    let a = kde_uniformity_loss(&spread, 2.0).unwrap().loss;
    let b = kde_uniformity_loss(&clustered, 2.0).unwrap().loss;
    assert!(a < b);
    assert!(koleo_loss(&spread).unwrap() < koleo_loss(&clustered).unwrap());
}

#[test]
fn unnormalized_rows_are_rejected() {
    let batch = EmbeddingBatch::new(2, 2, vec![1.0, 0.0, 0.0, 2.0]).unwrap();
    assert!(matches!(kde_uniformity_loss(&batch, 2.0), Err(EmbedError::NotNormalized { row: 1, .. })));
}
