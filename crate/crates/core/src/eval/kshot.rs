use std::collections::BTreeMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use super::metrics::balanced_accuracy;
use super::probe::Probe;
use super::{EvalError, LabeledEmbeddings, Split};
use crate::par::Exec;
use crate::seed::substream;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct KShotSpec {
    /// Training examples per class.
    pub k: usize,
    pub runs: usize,
    pub seed: u64,
}

impl Default for KShotSpec {
    fn default() -> Self {
        KShotSpec {
            k: 10,
            runs: 50,
            seed: 0,
        }
    }
}

/// Picks `k` indices per class without replacement. The draw for a given
/// `(spec.seed, run_index)` is fixed; classes are visited in ascending
/// label order and each class is a partial Fisher-Yates shuffle of its
/// indices in ascending order.
pub fn build_kshot_split(y: &[u32], spec: &KShotSpec, run_index: u64) -> Result<Vec<usize>, EvalError> {
    if spec.k == 0 || spec.runs == 0 {
        return Err(EvalError::InvalidSpec(format!("k and runs must be positive: {spec:?}")));
    }
    let mut by_class: BTreeMap<u32, Vec<usize>> = BTreeMap::new();
    for (i, &c) in y.iter().enumerate() {
        by_class.entry(c).or_default().push(i);
    }
    if by_class.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if let Some((&class, idx)) = by_class.iter().find(|(_, v)| v.len() < spec.k) {
        return Err(EvalError::InsufficientClassExamples {
            class,
            have: idx.len(),
            need: spec.k,
        });
    }
    let mut rng = substream(spec.seed, run_index);
    let mut out = Vec::with_capacity(spec.k * by_class.len());
    for (_, mut idx) in by_class {
        let len = idx.len();
        for i in 0..spec.k {
            let j = i + rng.gen_range(0..(len - i) as u64) as usize;
            idx.swap(i, j);
        }
        out.extend_from_slice(&idx[..spec.k]);
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KShotReport {
    pub mean: f64,
    /// Sample standard deviation of the per-run scores divided by √runs.
    pub std_of_mean: f64,
    pub runs: usize,
    /// Set when only one run was made, so `std_of_mean` is reported as 0.
    pub single_run: bool,
    pub scores: Vec<f64>,
}

impl KShotReport {
    pub fn from_scores(scores: Vec<f64>) -> Self {
        let runs = scores.len();
        let mean = scores.iter().sum::<f64>() / runs as f64;
        let std_of_mean = if runs < 2 {
            0.0
        } else {
            let var = scores.iter().map(|s| (s - mean) * (s - mean)).sum::<f64>() / (runs - 1) as f64;
            (var / runs as f64).sqrt()
        };
        KShotReport {
            mean,
            std_of_mean,
            runs,
            single_run: runs == 1,
            scores,
        }
    }
}

/// Repeated few-shot evaluation: for each run, draw a k-shot training set
/// from the train split, fit `probe`, and score balanced accuracy on the
/// fixed test split.
pub fn kshot_protocol<P: Probe>(
    data: &LabeledEmbeddings,
    spec: &KShotSpec,
    probe: &P,
    exec: Exec,
) -> Result<KShotReport, EvalError> {
    let labels = data.labels.as_ref().ok_or(EvalError::MissingField("labels"))?;
    let splits = data.splits.as_ref().ok_or(EvalError::MissingField("splits"))?;
    let pool: Vec<usize> = (0..data.n).filter(|&i| splits[i] == Split::Train).collect();
    let test: Vec<usize> = (0..data.n).filter(|&i| splits[i] == Split::Test).collect();
    if pool.is_empty() || test.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    let pool_y: Vec<u32> = pool.iter().map(|&i| labels[i]).collect();
    let test_x = data.gather(&test);
    let test_y: Vec<u32> = test.iter().map(|&i| labels[i]).collect();

    let scores = exec.map_range(spec.runs, |run| -> Result<f64, EvalError> {
        let picked = build_kshot_split(&pool_y, spec, run as u64)?;
        let rows: Vec<usize> = picked.iter().map(|&p| pool[p]).collect();
        let train_x = data.gather(&rows);
        let train_y: Vec<u32> = rows.iter().map(|&i| labels[i]).collect();
        let pred = probe.fit_predict(&train_x, &train_y, data.d, &test_x)?;
        balanced_accuracy(&test_y, &pred)
    });
    let scores = scores.into_iter().collect::<Result<Vec<_>, _>>()?;
    Ok(KShotReport::from_scores(scores))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn twenty_indices_for_two_classes() {
        let y: Vec<u32> = (0..100).map(|i| (i % 2) as u32).collect();
        let spec = KShotSpec { k: 10, runs: 50, seed: 3 };
        let idx = build_kshot_split(&y, &spec, 0).unwrap();
        assert_eq!(idx.len(), 20);
        assert_eq!(idx.iter().filter(|&&i| y[i] == 0).count(), 10);
        let mut u = idx.clone();
        u.sort_unstable();
        u.dedup();
        assert_eq!(u.len(), 20);
        assert_eq!(idx, build_kshot_split(&y, &spec, 0).unwrap());
        assert_ne!(idx, build_kshot_split(&y, &spec, 1).unwrap());
    }

    #[test]
    fn too_few_examples() {
        let mut y = vec![0u32; 30];
        y.extend([1u32; 5]);
        assert_eq!(
            build_kshot_split(&y, &KShotSpec::default(), 0).unwrap_err(),
            EvalError::InsufficientClassExamples { class: 1, have: 5, need: 10 }
        );
    }

    #[test]
    fn single_run_reports_zero_spread() {
        let r = KShotReport::from_scores(vec![0.7]);
        assert!(r.single_run);
        assert_eq!(r.std_of_mean, 0.0);
        let r = KShotReport::from_scores(vec![0.5, 0.7]);
        assert!((r.std_of_mean - 0.1).abs() < 1e-12);
    }
}
