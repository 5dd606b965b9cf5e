use crate::error::{Error, Result};

/// Mean squared error over ground-truth variance, per dimension, averaged
/// over dimensions. Rows are samples.
pub fn nmse(pred: &[Vec<f64>], truth: &[Vec<f64>]) -> Result<f64> {
    if pred.len() != truth.len() || truth.is_empty() {
        return Err(Error::InvalidArgument(format!(
            "nmse needs matching nonempty sets ({} vs {})",
            pred.len(),
            truth.len()
        )));
    }
    let d = truth[0].len();
    let n = truth.len() as f64;
    let mut total = 0.0;
    for k in 0..d {
        let mean = truth.iter().map(|t| t[k]).sum::<f64>() / n;
        let var = truth.iter().map(|t| (t[k] - mean).powi(2)).sum::<f64>() / n;
        if var <= 0.0 {
            return Err(Error::ZeroVariance { dim: k });
        }
        let mse = pred.iter().zip(truth).map(|(p, t)| (p[k] - t[k]).powi(2)).sum::<f64>() / n;
        total += mse / var;
    }
    Ok(total / d as f64)
}

/// Scalar-series NMSE.
pub fn nmse_1d(pred: &[f64], truth: &[f64]) -> Result<f64> {
    let p: Vec<Vec<f64>> = pred.iter().map(|&v| vec![v]).collect();
    let t: Vec<Vec<f64>> = truth.iter().map(|&v| vec![v]).collect();
    nmse(&p, &t)
}

pub const MIN_ACTION_NORM: f64 = 1e-8;

/// `Σ w_t (1 − cos(â_t, a_t)) / Σ w_t` with `w_t = ‖a_t‖`; ground-truth
/// vectors shorter than [`MIN_ACTION_NORM`] are skipped.
pub fn weighted_cosine_distance(pred: &[[f64; 3]], truth: &[[f64; 3]]) -> f64 {
    let mut num = 0.0;
    let mut den = 0.0;
    for (p, t) in pred.iter().zip(truth) {
        let nt = norm3(t);
        if nt < MIN_ACTION_NORM {
            continue;
        }
        let np = norm3(p);
        let cos = if np > 0.0 { dot3(p, t) / (np * nt) } else { 0.0 };
        num += nt * (1.0 - cos.clamp(-1.0, 1.0));
        den += nt;
    }
    if den > 0.0 {
        num / den
    } else {
        0.0
    }
}

fn dot3(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

fn norm3(a: &[f64; 3]) -> f64 {
    dot3(a, a).sqrt()
}

/// Linear (`0..3`) or angular (`3..6`) part of an action.
pub fn part(a: &[f64; 6], angular: bool) -> [f64; 3] {
    let o = if angular { 3 } else { 0 };
    [a[o], a[o + 1], a[o + 2]]
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn nmse_examples() {
        let y = vec![vec![1.0, 5.0], vec![2.0, 3.0], vec![4.0, 4.0]];
        assert_eq!(nmse(&y, &y).unwrap(), 0.0);
        let mean = vec![vec![7.0 / 3.0, 4.0]; 3];
        assert!((nmse(&mean, &y).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            nmse(&y, &[vec![1.0, 1.0], vec![2.0, 1.0], vec![3.0, 1.0]]),
            Err(Error::ZeroVariance { dim: 1 })
        ));
    }

    #[test]
    fn wcd_extremes() {
        let a = [[1.0, 2.0, 3.0], [0.0, -1.0, 0.5]];
        let neg: Vec<[f64; 3]> = a.iter().map(|v| [-v[0], -v[1], -v[2]]).collect();
        assert!(weighted_cosine_distance(&a, &a).abs() < 1e-15);
        assert!((weighted_cosine_distance(&neg, &a) - 2.0).abs() < 1e-15);
    }

    #[test]
    fn wcd_of_random_directions_is_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        let mut v = || [rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0)];
        let p: Vec<[f64; 3]> = (0..100_000).map(|_| v()).collect();
        let t: Vec<[f64; 3]> = (0..100_000).map(|_| v()).collect();
        assert!((weighted_cosine_distance(&p, &t) - 1.0).abs() < 0.01);
    }

    proptest! {
        #[test]
        fn wcd_ignores_positive_prediction_scale(
            p in prop::collection::vec(prop::array::uniform3(-1.0..1.0f64), 1..30),
            t in prop::collection::vec(prop::array::uniform3(-1.0..1.0f64), 30),
            k in 1e-3..1e3f64,
        ) {
            let scaled: Vec<[f64; 3]> = p.iter().map(|v| [v[0] * k, v[1] * k, v[2] * k]).collect();
            let a = weighted_cosine_distance(&p, &t);
            let b = weighted_cosine_distance(&scaled, &t);
            prop_assert!((a - b).abs() < 1e-9);
            prop_assert!((0.0..=2.0).contains(&a));
        }
    }
}
