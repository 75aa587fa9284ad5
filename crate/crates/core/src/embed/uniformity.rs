use super::{sq_dist, EmbedError, EmbeddingBatch};
use crate::par::Exec;

pub const DEFAULT_KDE_BANDWIDTH: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub struct KdeOutput {
    pub loss: f64,
    /// Gradient with respect to each embedding, `n × d` row-major, in
    /// ambient coordinates.
    pub grad: Vec<f64>,
}

/// Gaussian-kernel uniformity loss over distinct pairs:
///
/// `log( 2/(n(n-1)) · Σ_{i<j} exp(-t‖z_i − z_j‖²) )`
///
/// Rows must be unit vectors (checked to 1e-6).
pub fn kde_uniformity_loss(batch: &EmbeddingBatch, t: f64) -> Result<KdeOutput, EmbedError> {
    kde_uniformity_loss_with(batch, t, Exec::default())
}

pub fn kde_uniformity_loss_with(
    batch: &EmbeddingBatch,
    t: f64,
    exec: Exec,
) -> Result<KdeOutput, EmbedError> {
    if batch.n() < 2 {
        return Err(EmbedError::DegenerateBatch(batch.n()));
    }
    batch.check_unit_rows(1e-6)?;
    kde_core(batch, t, exec)
}

/// Same value and gradient without the unit-row check, for evaluating the
/// loss off the sphere (finite differences, unconstrained optimizers).
pub fn kde_uniformity_loss_ambient(
    batch: &EmbeddingBatch,
    t: f64,
    exec: Exec,
) -> Result<KdeOutput, EmbedError> {
    if batch.n() < 2 {
        return Err(EmbedError::DegenerateBatch(batch.n()));
    }
    kde_core(batch, t, exec)
}

fn kde_core(batch: &EmbeddingBatch, t: f64, exec: Exec) -> Result<KdeOutput, EmbedError> {
    if !(t.is_finite() && t > 0.0) {
        return Err(EmbedError::InvalidConfig(format!("bandwidth must be positive, got {t}")));
    }
    let n = batch.n();
    let d = batch.d();
    let pairs = (n * (n - 1) / 2) as f64;

    // Largest exponent over i<j, for a stable log-sum-exp.
    let row_max = exec.map_range(n - 1, |i| {
        let zi = batch.row(i);
        ((i + 1)..n)
            .map(|j| -t * sq_dist(zi, batch.row(j)))
            .fold(f64::NEG_INFINITY, f64::max)
    });
    let m = row_max.iter().copied().fold(f64::NEG_INFINITY, f64::max);

    let row_sum = exec.map_range(n - 1, |i| {
        let zi = batch.row(i);
        ((i + 1)..n)
            .map(|j| (-t * sq_dist(zi, batch.row(j)) - m).exp())
            .sum::<f64>()
    });
    let s: f64 = row_sum.iter().sum();
    let loss = m + s.ln() - pairs.ln();

    // dL/dz_i = Σ_{j≠i} w_ij · (-2t)(z_i - z_j), with w_ij = exp(x_ij - m) / s
    let grad_rows = exec.map_range(n, |i| {
        let zi = batch.row(i);
        let mut g = vec![0.0; d];
        for j in (0..n).filter(|&j| j != i) {
            let zj = batch.row(j);
            let w = (-t * sq_dist(zi, zj) - m).exp() / s;
            let c = -2.0 * t * w;
            for k in 0..d {
                g[k] += c * (zi[k] - zj[k]);
            }
        }
        g
    });
    Ok(KdeOutput {
        loss,
        grad: grad_rows.concat(),
    })
}

/// Nearest-neighbour entropy estimate `-(1/n) Σ_i log min_{j≠i} ‖z_i − z_j‖`.
pub fn koleo_loss(batch: &EmbeddingBatch) -> Result<f64, EmbedError> {
    koleo_loss_with(batch, Exec::default())
}

pub fn koleo_loss_with(batch: &EmbeddingBatch, exec: Exec) -> Result<f64, EmbedError> {
    let n = batch.n();
    if n < 2 {
        return Err(EmbedError::DegenerateBatch(n));
    }
    let nearest = exec.map_range(n, |i| {
        let zi = batch.row(i);
        let mut best = (f64::INFINITY, usize::MAX);
        for j in (0..n).filter(|&j| j != i) {
            let d2 = sq_dist(zi, batch.row(j));
            if d2 < best.0 {
                best = (d2, j);
            }
        }
        best
    });
    let mut acc = 0.0;
    for (i, &(d2, j)) in nearest.iter().enumerate() {
        if d2 == 0.0 {
            return Err(EmbedError::DuplicateRows(i.min(j), i.max(j)));
        }
        acc += 0.5 * d2.ln();
    }
    Ok(-acc / n as f64)
}
