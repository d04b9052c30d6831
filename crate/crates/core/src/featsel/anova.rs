//! One-way ANOVA F statistic per feature.

use super::{check_supervised_labels, FeatureMatrix};
use crate::error::{Error, Result};
use crate::nncore::NUM_CLASSES;

/// `F = (SSB / (C - 1)) / (SSW / (N - C))` for every column, where `C` counts
/// the classes present. A constant feature scores 0; a feature that is
/// constant within every class but not overall scores `+inf`.
pub fn anova_f(x: &FeatureMatrix, y: &[usize]) -> Result<Vec<f64>> {
    check_supervised_labels(y, x.n_samples())?;
    let mut sizes = [0usize; NUM_CLASSES];
    for &l in y {
        sizes[l] += 1;
    }
    let n = y.len();
    let c = sizes.iter().filter(|&&s| s > 0).count();
    if n <= c {
        return Err(Error::Validation(format!("anova needs more samples ({n}) than classes ({c})")));
    }

    let mut scores = Vec::with_capacity(x.n_features());
    for col in x.values.columns() {
        let mut sums = [0.0; NUM_CLASSES];
        let mut first: [Option<f64>; NUM_CLASSES] = [None; NUM_CLASSES];
        let mut constant = [true; NUM_CLASSES];
        for (&v, &l) in col.iter().zip(y) {
            sums[l] += v;
            match first[l] {
                None => first[l] = Some(v),
                Some(f) if f != v => constant[l] = false,
                _ => {}
            }
        }
        let grand = sums.iter().sum::<f64>() / n as f64;
        let means: Vec<f64> = (0..NUM_CLASSES)
            .map(|k| if sizes[k] > 0 { sums[k] / sizes[k] as f64 } else { 0.0 })
            .collect();
        let mut ssw = 0.0;
        for (&v, &l) in col.iter().zip(y) {
            if !constant[l] {
                ssw += (v - means[l]).powi(2);
            }
        }
        let overall_constant = col.iter().all(|&v| v == col[0]);
        let ssb: f64 = if overall_constant {
            0.0
        } else {
            (0..NUM_CLASSES).map(|k| sizes[k] as f64 * (means[k] - grand).powi(2)).sum()
        };
        let score = if ssb == 0.0 {
            0.0
        } else if ssw == 0.0 {
            f64::INFINITY
        } else {
            (ssb / (c - 1) as f64) / (ssw / (n - c) as f64)
        };
        scores.push(score);
    }
    Ok(scores)
}
