use crate::data::Label;
use crate::error::{Error, Result};

/// ROC AUC with abnormal as the positive class: the probability that a random
/// abnormal row scores above a random normal row, ties counting one half.
///
/// Computed from average ranks (Mann–Whitney U).
pub fn auc(scores: &[f64], labels: &[Label]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::NonFinite("score".into()));
    }
    let n_abnormal = labels.iter().filter(|l| l.is_abnormal()).count();
    let n_normal = labels.len() - n_abnormal;
    if n_abnormal == 0 || n_normal == 0 {
        return Err(Error::InvalidBatch(
            "AUC needs both normal and abnormal rows".into(),
        ));
    }
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && scores[order[j]] == scores[order[i]] {
            j += 1;
        }
        // ranks i+1..=j share their average
        let avg = (i + 1 + j) as f64 / 2.0;
        for &k in &order[i..j] {
            if labels[k].is_abnormal() {
                rank_sum += avg;
            }
        }
        i = j;
    }
    let na = n_abnormal as f64;
    let u = rank_sum - na * (na + 1.0) / 2.0;
    Ok(u / (na * n_normal as f64))
}

/// Fraction of rows classified correctly when `score > threshold` means
/// abnormal. NaN for empty input.
pub fn accuracy(scores: &[f64], labels: &[Label], threshold: f64) -> f64 {
    let correct = scores
        .iter()
        .zip(labels)
        .filter(|(s, l)| (**s > threshold) == l.is_abnormal())
        .count();
    correct as f64 / scores.len().min(labels.len()) as f64
}

/// Linear-interpolation quantile (`q ∈ [0, 1]`) of unsorted values.
pub fn quantile(values: &[f64], q: f64) -> Result<f64> {
    if values.is_empty() {
        return Err(Error::InvalidBatch("quantile of empty set".into()));
    }
    if !(0.0..=1.0).contains(&q) {
        return Err(Error::Domain(format!("quantile level {q} outside [0, 1]")));
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let pos = q * (v.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    Ok(v[lo] + (v[hi] - v[lo]) * frac)
}

pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    if values.len() < 2 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1.0);
    (mean, var.sqrt())
}

#[cfg(test)]
mod tests {
    use super::*;
    use Label::{Abnormal as A, Normal as N};

    #[test]
    fn separated_and_tied() {
        assert_eq!(auc(&[0.1, 0.2, 0.8, 0.9], &[N, N, A, A]).unwrap(), 1.0);
        assert_eq!(auc(&[0.9, 0.8, 0.1, 0.2], &[N, N, A, A]).unwrap(), 0.0);
        assert_eq!(auc(&[1.0; 4], &[N, A, N, A]).unwrap(), 0.5);
    }

    #[test]
    fn six_point_case() {
        // abnormal scores 0.4, 0.7, 0.7; normal 0.1, 0.4, 0.7
        // pairs: 0.4 beats 0.1, ties 0.4 → 1.5; each 0.7 beats 0.1, 0.4, ties 0.7 → 2.5
        let s = [0.4, 0.1, 0.7, 0.4, 0.7, 0.7];
        let l = [A, N, A, N, A, N];
        assert!((auc(&s, &l).unwrap() - 6.5 / 9.0).abs() < 1e-12);
    }

    #[test]
    fn single_class_rejected() {
        assert!(auc(&[0.1, 0.2], &[N, N]).is_err());
        assert!(auc(&[0.1], &[N, A]).is_err());
    }

    #[test]
    fn accuracy_cases() {
        assert_eq!(accuracy(&[-1.0, -1.0, 1.0, 1.0], &[N, N, A, A], 0.0), 1.0);
        assert_eq!(accuracy(&[1.0, 1.0, -1.0, -1.0], &[N, N, A, A], 0.0), 0.0);
        // one normal scored positive: 3 of 4 correct
        assert_eq!(accuracy(&[-0.5, 0.2, 0.3, 0.9], &[N, N, A, A], 0.0), 0.75);
        // exactly on the threshold counts as normal
        assert_eq!(accuracy(&[0.0], &[N], 0.0), 1.0);
    }

    #[test]
    fn quantile_linear() {
        let v = [3.0, 1.0, 2.0, 4.0];
        assert_eq!(quantile(&v, 0.0).unwrap(), 1.0);
        assert_eq!(quantile(&v, 1.0).unwrap(), 4.0);
        assert_eq!(quantile(&v, 0.5).unwrap(), 2.5);
        assert!((quantile(&v, 0.9).unwrap() - 3.7).abs() < 1e-12);
        assert!(quantile(&[], 0.5).is_err());
        assert!(quantile(&v, 1.5).is_err());
    }

    #[test]
    fn mean_std_sample() {
        let (m, s) = mean_std(&[1.0, 2.0, 3.0]);
        assert_eq!(m, 2.0);
        assert_eq!(s, 1.0);
        assert_eq!(mean_std(&[5.0]), (5.0, 0.0));
    }
}
