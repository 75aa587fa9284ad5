use std::collections::BTreeMap;

use super::EvalError;

/// Mean per-class recall over the classes present in `y_true`.
pub fn balanced_accuracy(y_true: &[u32], y_pred: &[u32]) -> Result<f64, EvalError> {
    if y_true.is_empty() {
        return Err(EvalError::EmptyInput);
    }
    if y_true.len() != y_pred.len() {
        return Err(EvalError::LengthMismatch(y_true.len(), y_pred.len()));
    }
    // class -> (support, hits)
    let mut per_class: BTreeMap<u32, (u64, u64)> = BTreeMap::new();
    for (&t, &p) in y_true.iter().zip(y_pred) {
        let e = per_class.entry(t).or_default();
        e.0 += 1;
        if t == p {
            e.1 += 1;
        }
    }
    let sum: f64 = per_class
        .values()
        .map(|&(support, hits)| hits as f64 / support as f64)
        .sum();
    Ok(sum / per_class.len() as f64)
}

/// A dense label image.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LabelMask {
    pub width: u32,
    pub height: u32,
    pub labels: Vec<u32>,
}

impl LabelMask {
    pub fn new(width: u32, height: u32, labels: Vec<u32>) -> Result<Self, EvalError> {
        if labels.len() != width as usize * height as usize {
            return Err(EvalError::ShapeMismatch(format!(
                "{} labels for a {width}x{height} mask",
                labels.len()
            )));
        }
        Ok(LabelMask {
            width,
            height,
            labels,
        })
    }
}

/// Mean Dice over the non-background classes. Classes absent from both
/// masks are skipped; if every class is skipped the score is undefined and
/// [`EvalError::NoScorableClasses`] is returned.
pub fn dice_no_background(
    pred: &LabelMask,
    truth: &LabelMask,
    n_classes: u32,
    background_label: u32,
) -> Result<f64, EvalError> {
    if (pred.width, pred.height) != (truth.width, truth.height) {
        return Err(EvalError::ShapeMismatch(format!(
            "prediction is {}x{}, truth is {}x{}",
            pred.width, pred.height, truth.width, truth.height
        )));
    }
    let c = n_classes as usize;
    let mut inter = vec![0u64; c];
    let mut p_count = vec![0u64; c];
    let mut t_count = vec![0u64; c];
    for (&p, &t) in pred.labels.iter().zip(&truth.labels) {
        if p >= n_classes || t >= n_classes {
            return Err(EvalError::LabelOutOfRange(p.max(t), n_classes));
        }
        p_count[p as usize] += 1;
        t_count[t as usize] += 1;
        if p == t {
            inter[p as usize] += 1;
        }
    }
    let mut sum = 0.0;
    let mut scored = 0usize;
    for k in (0..c).filter(|&k| k as u32 != background_label) {
        let denom = p_count[k] + t_count[k];
        if denom == 0 {
            continue;
        }
        sum += 2.0 * inter[k] as f64 / denom as f64;
        scored += 1;
    }
    if scored == 0 {
        return Err(EvalError::NoScorableClasses);
    }
    Ok(sum / scored as f64)
}

/// Per-column Pearson correlation between `pred` and `target` (both `n × g`
/// row-major, all samples pooled), averaged over the `g` columns.
///
/// A constant prediction column has correlation 0 with its target.
pub fn pearson_mean(pred: &[f64], target: &[f64], g: usize) -> Result<f64, EvalError> {
    if g == 0 || pred.len() != target.len() || pred.len() % g != 0 {
        return Err(EvalError::ShapeMismatch(format!(
            "pred has {} values, target {}, genes {g}",
            pred.len(),
            target.len()
        )));
    }
    let n = pred.len() / g;
    if n < 2 {
        return Err(EvalError::EmptyInput);
    }
    let mut total = 0.0;
    for gene in 0..g {
        fn col(m: &[f64], n: usize, g: usize, gene: usize) -> impl Iterator<Item = f64> + '_ {
            (0..n).map(move |i| m[i * g + gene])
        }
        let mp = col(pred, n, g, gene).sum::<f64>() / n as f64;
        let mt = col(target, n, g, gene).sum::<f64>() / n as f64;
        let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
        for (p, t) in col(pred, n, g, gene).zip(col(target, n, g, gene)) {
            let (dp, dt) = (p - mp, t - mt);
            sxy += dp * dt;
            sxx += dp * dp;
            syy += dt * dt;
        }
        if syy == 0.0 {
            return Err(EvalError::ZeroVariance(gene));
        }
        if sxx > 0.0 {
            total += sxy / (sxx.sqrt() * syy.sqrt());
        }
    }
    Ok(total / g as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn balanced_accuracy_examples() {
        assert_eq!(balanced_accuracy(&[0, 0, 1, 1], &[0, 1, 1, 1]).unwrap(), 0.75);
        assert_eq!(balanced_accuracy(&[0, 1, 2, 2], &[0, 1, 2, 2]).unwrap(), 1.0);
        assert_eq!(balanced_accuracy(&[0, 0, 1, 1, 1], &[1; 5]).unwrap(), 0.5);
        assert_eq!(balanced_accuracy(&[], &[]).unwrap_err(), EvalError::EmptyInput);
        assert!(balanced_accuracy(&[0], &[0, 1]).is_err());
    }

    #[test]
    fn dice_examples() {
        let truth = LabelMask::new(2, 2, vec![1, 1, 0, 0]).unwrap();
        let pred = LabelMask::new(2, 2, vec![1, 0, 0, 0]).unwrap();
        assert_eq!(dice_no_background(&pred, &truth, 2, 0).unwrap(), 2.0 / 3.0);

        let multi = LabelMask::new(3, 2, vec![0, 1, 2, 3, 3, 1]).unwrap();
        assert_eq!(dice_no_background(&multi, &multi, 4, 0).unwrap(), 1.0);

        let bg = LabelMask::new(2, 2, vec![0; 4]).unwrap();
        assert_eq!(dice_no_background(&bg, &truth, 2, 0).unwrap(), 0.0);
        assert_eq!(dice_no_background(&bg, &bg, 2, 0).unwrap_err(), EvalError::NoScorableClasses);

        let other = LabelMask::new(4, 1, vec![0; 4]).unwrap();
        assert!(matches!(
            dice_no_background(&other, &truth, 2, 0),
            Err(EvalError::ShapeMismatch(_))
        ));
    }

    #[test]
    fn pearson_examples() {
        let t = [1.0, 5.0, 2.0, 3.0, 3.0, 9.0];
        assert!((pearson_mean(&t, &t, 2).unwrap() - 1.0).abs() < 1e-12);
        let neg: Vec<f64> = t.iter().map(|v| -v).collect();
        assert!((pearson_mean(&neg, &t, 2).unwrap() + 1.0).abs() < 1e-12);
        assert!((pearson_mean(&[2.0, 4.0, 6.0], &[1.0, 2.0, 3.0], 1).unwrap() - 1.0).abs() < 1e-12);
        assert_eq!(
            pearson_mean(&[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0], 1).unwrap_err(),
            EvalError::ZeroVariance(0)
        );
        assert_eq!(pearson_mean(&[7.0; 3], &[1.0, 2.0, 3.0], 1).unwrap(), 0.0);
    }
}
