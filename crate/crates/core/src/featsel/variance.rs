use super::FeatureMatrix;

/// Population variance of every column; exactly 0 for constant columns.
pub fn population_variances(x: &FeatureMatrix) -> Vec<f64> {
    let n = x.n_samples() as f64;
    x.values
        .columns()
        .into_iter()
        .map(|col| {
            if col.iter().all(|&v| v == col[0]) {
                return 0.0;
            }
            let mean = col.sum() / n;
            col.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n
        })
        .collect()
}

/// Keeps a feature iff its population variance exceeds `tau`.
pub fn variance_threshold(x: &FeatureMatrix, tau: f64) -> Vec<bool> {
    population_variances(x).into_iter().map(|v| v > tau).collect()
}
