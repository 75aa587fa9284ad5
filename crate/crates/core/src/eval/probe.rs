use serde::{Deserialize, Serialize};

use super::EvalError;

/// Full-batch gradient descent settings for the multinomial logistic probe.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ProbeConfig {
    pub lr: f64,
    pub max_epochs: u32,
    pub l2: f64,
    /// Training stops once the gradient norm falls below this.
    pub grad_tol: f64,
}

impl Default for ProbeConfig {
    fn default() -> Self {
        ProbeConfig {
            lr: 0.1,
            max_epochs: 3000,
            l2: 1e-4,
            grad_tol: 1e-6,
        }
    }
}

/// Multinomial logistic regression on frozen embeddings.
#[derive(Debug, Clone, PartialEq)]
pub struct LinearProbe {
    pub n_classes: usize,
    pub d: usize,
    /// `n_classes × d`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub epochs_run: u32,
    pub final_grad_norm: f64,
}

fn softmax_in_place(z: &mut [f64]) {
    let m = z.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let mut s = 0.0;
    for v in z.iter_mut() {
        *v = (*v - m).exp();
        s += *v;
    }
    z.iter_mut().for_each(|v| *v /= s);
}

/// Trains from zero weights; the result is fully determined by the inputs.
pub fn train_linear_probe(
    x: &[f64],
    y: &[u32],
    d: usize,
    cfg: &ProbeConfig,
) -> Result<LinearProbe, EvalError> {
    let n = y.len();
    if n == 0 || d == 0 {
        return Err(EvalError::EmptyInput);
    }
    if x.len() != n * d {
        return Err(EvalError::ShapeMismatch(format!("{} features for {n}x{d}", x.len())));
    }
    let n_classes = *y.iter().max().unwrap() as usize + 1;
    let mut distinct: Vec<u32> = y.to_vec();
    distinct.sort_unstable();
    distinct.dedup();
    if distinct.len() < 2 {
        return Err(EvalError::DegenerateInput("training set has a single class".into()));
    }
    let constant = (0..d).all(|j| (1..n).all(|i| x[i * d + j] == x[j]));
    if constant {
        return Err(EvalError::DegenerateInput(
            "features are constant across examples".into(),
        ));
    }

    let c = n_classes;
    let mut w = vec![0.0; c * d];
    let mut b = vec![0.0; c];
    let mut gw = vec![0.0; c * d];
    let mut gb = vec![0.0; c];
    let mut z = vec![0.0; c];
    let mut epochs_run = 0;
    let mut grad_norm = f64::INFINITY;

    for epoch in 0..cfg.max_epochs {
        gw.iter_mut().for_each(|v| *v = 0.0);
        gb.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..n {
            let xi = &x[i * d..(i + 1) * d];
            for k in 0..c {
                z[k] = b[k] + w[k * d..(k + 1) * d].iter().zip(xi).map(|(a, b)| a * b).sum::<f64>();
            }
            softmax_in_place(&mut z);
            z[y[i] as usize] -= 1.0;
            for k in 0..c {
                let r = z[k] / n as f64;
                gb[k] += r;
                for (g, v) in gw[k * d..(k + 1) * d].iter_mut().zip(xi) {
                    *g += r * v;
                }
            }
        }
        for (g, v) in gw.iter_mut().zip(&w) {
            *g += cfg.l2 * v;
        }
        grad_norm = (gw.iter().chain(&gb).map(|v| v * v).sum::<f64>()).sqrt();
        epochs_run = epoch;
        if grad_norm < cfg.grad_tol {
            break;
        }
        for (v, g) in w.iter_mut().zip(&gw) {
            *v -= cfg.lr * g;
        }
        for (v, g) in b.iter_mut().zip(&gb) {
            *v -= cfg.lr * g;
        }
        epochs_run = epoch + 1;
    }
    Ok(LinearProbe {
        n_classes,
        d,
        weights: w,
        bias: b,
        epochs_run,
        final_grad_norm: grad_norm,
    })
}

impl LinearProbe {
    /// Arg-max class per row; ties go to the lower class index.
    pub fn predict(&self, x: &[f64]) -> Vec<u32> {
        x.chunks_exact(self.d)
            .map(|xi| {
                let mut best = (f64::NEG_INFINITY, 0u32);
                for k in 0..self.n_classes {
                    let s = self.bias[k]
                        + self.weights[k * self.d..(k + 1) * self.d]
                            .iter()
                            .zip(xi)
                            .map(|(a, b)| a * b)
                            .sum::<f64>();
                    if s > best.0 {
                        best = (s, k as u32);
                    }
                }
                best.1
            })
            .collect()
    }
}

/// Something that can be fit on a few labelled embeddings and then label
/// the test set. Implemented by the linear probe and by trivial baselines.
pub trait Probe: Sync {
    fn fit_predict(
        &self,
        train_x: &[f64],
        train_y: &[u32],
        d: usize,
        test_x: &[f64],
    ) -> Result<Vec<u32>, EvalError>;
}

impl Probe for ProbeConfig {
    fn fit_predict(
        &self,
        train_x: &[f64],
        train_y: &[u32],
        d: usize,
        test_x: &[f64],
    ) -> Result<Vec<u32>, EvalError> {
        Ok(train_linear_probe(train_x, train_y, d, self)?.predict(test_x))
    }
}

/// Predicts the most frequent training class (lowest label on ties).
#[derive(Debug, Clone, Copy, Default)]
pub struct MajorityClass;

impl Probe for MajorityClass {
    fn fit_predict(
        &self,
        _train_x: &[f64],
        train_y: &[u32],
        d: usize,
        test_x: &[f64],
    ) -> Result<Vec<u32>, EvalError> {
        if train_y.is_empty() || d == 0 {
            return Err(EvalError::EmptyInput);
        }
        let mut counts = std::collections::BTreeMap::<u32, usize>::new();
        for &c in train_y {
            *counts.entry(c).or_default() += 1;
        }
        let top = counts
            .iter()
            .fold((0u32, 0usize), |best, (&c, &k)| if k > best.1 { (c, k) } else { best })
            .0;
        Ok(vec![top; test_x.len() / d])
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn separable() -> (Vec<f64>, Vec<u32>) {
        let pts = [
            ([1.0, 2.0], 0),
            ([1.5, 1.2], 0),
            ([2.0, 2.5], 0),
            ([0.5, 1.0], 0),
            ([-1.0, -1.5], 1),
            ([-2.0, -0.5], 1),
            ([-0.7, -2.2], 1),
            ([-1.4, -1.0], 1),
        ];
        (
            pts.iter().flat_map(|p| p.0).collect(),
            pts.iter().map(|p| p.1).collect(),
        )
    }

    #[test]
    fn separable_toy_set_is_fit_perfectly() {
        let (x, y) = separable();
        let probe = train_linear_probe(&x, &y, 2, &ProbeConfig::default()).unwrap();
        assert_eq!(probe.predict(&x), y);
    }

    #[test]
    fn degenerate_inputs() {
        let (x, _) = separable();
        assert!(matches!(
            train_linear_probe(&x, &[0; 8], 2, &ProbeConfig::default()),
            Err(EvalError::DegenerateInput(_))
        ));
        assert!(matches!(
            train_linear_probe(&[3.0; 16], &[0, 1, 0, 1, 0, 1, 0, 1], 2, &ProbeConfig::default()),
            Err(EvalError::DegenerateInput(_))
        ));
    }

    #[test]
    fn duplicated_columns_predict_the_same() {
        let (x, y) = separable();
        let dup: Vec<f64> = x.chunks(2).flat_map(|r| [r[0], r[1], r[0], r[1]]).collect();
        let a = train_linear_probe(&x, &y, 2, &ProbeConfig::default()).unwrap();
        let b = train_linear_probe(&dup, &y, 4, &ProbeConfig::default()).unwrap();
        assert!(b.weights.iter().all(|w| w.is_finite()));
        let grid: Vec<f64> = (-10..=10)
            .flat_map(|i| (-10..=10).map(move |j| [i as f64 * 0.3, j as f64 * 0.3]))
            .flatten()
            .collect();
        let grid_dup: Vec<f64> = grid.chunks(2).flat_map(|r| [r[0], r[1], r[0], r[1]]).collect();
        let pa = a.predict(&grid);
        let pb = b.predict(&grid_dup);
        let agree = pa.iter().zip(&pb).filter(|(p, q)| p == q).count();
        assert!(agree as f64 / pa.len() as f64 > 0.97, "{agree}/{}", pa.len());
        assert_eq!(a.predict(&x), b.predict(&dup));
    }

    #[test]
    fn majority_baseline() {
        let p = MajorityClass.fit_predict(&[0.0; 3], &[2, 1, 2], 1, &[0.0; 4]).unwrap();
        assert_eq!(p, vec![2; 4]);
        let tie = MajorityClass.fit_predict(&[0.0; 4], &[1, 0, 1, 0], 1, &[0.0; 2]).unwrap();
        assert_eq!(tie, vec![0; 2]);
    }
}
