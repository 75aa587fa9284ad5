use super::EmbedError;

/// Concatenates the class token with the column mean of the patch tokens.
/// `patch_tokens` is `m × d` row-major with `d = cls.len()`.
pub fn cls_mean_embedding(cls: &[f64], patch_tokens: &[f64]) -> Result<Vec<f64>, EmbedError> {
    let d = cls.len();
    if d == 0 {
        return Err(EmbedError::ShapeMismatch("empty class token".into()));
    }
    if patch_tokens.is_empty() {
        return Err(EmbedError::EmptyPatchSet);
    }
    if patch_tokens.len() % d != 0 {
        return Err(EmbedError::ShapeMismatch(format!(
            "{} patch values are not a multiple of d={d}",
            patch_tokens.len()
        )));
    }
    let m = patch_tokens.len() / d;
    let mut out = Vec::with_capacity(2 * d);
    out.extend_from_slice(cls);
    let mut mean = vec![0.0; d];
    for row in patch_tokens.chunks_exact(d) {
        for (acc, v) in mean.iter_mut().zip(row) {
            *acc += v;
        }
    }
    out.extend(mean.into_iter().map(|s| s / m as f64));
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn small_cases() {
        assert_eq!(
            cls_mean_embedding(&[1.0, 0.0], &[0.0, 0.0, 2.0, 2.0]).unwrap(),
            vec![1.0, 0.0, 1.0, 1.0]
        );
        assert_eq!(
            cls_mean_embedding(&[1.0, 2.0], &[5.0, -3.0]).unwrap(),
            vec![1.0, 2.0, 5.0, -3.0]
        );
        assert_eq!(cls_mean_embedding(&[1.0], &[]).unwrap_err(), EmbedError::EmptyPatchSet);
        assert!(cls_mean_embedding(&[1.0, 2.0], &[1.0, 2.0, 3.0]).is_err());
    }

    proptest! {
        #[test]
        fn permutation_invariant_and_linear(
            rows in proptest::collection::vec(proptest::collection::vec(-10.0f64..10.0, 3), 1..12),
            cls in proptest::collection::vec(-10.0f64..10.0, 3),
            alpha in -4.0f64..4.0,
            rot in 0usize..12,
        ) {
            let flat: Vec<f64> = rows.concat();
            let base = cls_mean_embedding(&cls, &flat).unwrap();
            prop_assert_eq!(base.len(), 6);

            let mut shuffled = rows.clone();
            let k = rot % shuffled.len();
            shuffled.rotate_left(k);
            let perm = cls_mean_embedding(&cls, &shuffled.concat()).unwrap();
            for (a, b) in base.iter().zip(&perm) {
                prop_assert!((a - b).abs() <= 1e-9);
            }

            let scaled_cls: Vec<f64> = cls.iter().map(|v| v * alpha).collect();
            let scaled: Vec<f64> = flat.iter().map(|v| v * alpha).collect();
            let lin = cls_mean_embedding(&scaled_cls, &scaled).unwrap();
            for (a, b) in base.iter().zip(&lin) {
                prop_assert!((a * alpha - b).abs() <= 1e-9);
            }
        }
    }
}
