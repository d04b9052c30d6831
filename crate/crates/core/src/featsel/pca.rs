//! PCA through an eigendecomposition of the sample covariance.

use nalgebra::{DMatrix, SymmetricEigen};
use ndarray::{Array1, Array2, ArrayView2, Axis};

use super::FeatureMatrix;
use crate::error::{dim_check, Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct PcaModel {
    pub feature_names: Vec<String>,
    pub mean: Array1<f64>,
    /// `(n_components, n_features)`, orthonormal rows.
    pub components: Array2<f64>,
    /// Sample-covariance eigenvalues of the kept components, descending.
    pub explained_variance: Array1<f64>,
    pub explained_variance_ratio: Array1<f64>,
}

/// Fits the top `n_components` principal axes. Each axis is signed so its
/// largest-magnitude entry is positive.
pub fn pca_fit(x: &FeatureMatrix, n_components: usize) -> Result<PcaModel> {
    let (n, f) = x.values.dim();
    if n_components == 0 || n_components > n.min(f) {
        return Err(Error::Validation(format!(
            "n_components {n_components} outside 1..={} for a {n}x{f} matrix",
            n.min(f)
        )));
    }
    let mean = x.values.mean_axis(Axis(0)).expect("n_samples >= 2");
    let centered = &x.values - &mean;
    let cov = centered.t().dot(&centered) / (n as f64 - 1.0);
    let total_variance = cov.diag().sum();

    let eig = SymmetricEigen::new(DMatrix::from_fn(f, f, |i, j| cov[[i, j]]));
    let mut order: Vec<usize> = (0..f).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));

    let mut components = Array2::zeros((n_components, f));
    let mut explained = Array1::zeros(n_components);
    for (row, &k) in order.iter().take(n_components).enumerate() {
        let v = eig.eigenvectors.column(k);
        let pivot = (0..f).fold(0, |best, j| if v[j].abs() > v[best].abs() { j } else { best });
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for j in 0..f {
            components[[row, j]] = sign * v[j];
        }
        explained[row] = eig.eigenvalues[k].max(0.0);
    }
    let ratio = if total_variance > 0.0 {
        explained.mapv(|v| v / total_variance)
    } else {
        Array1::zeros(n_components)
    };
    Ok(PcaModel {
        feature_names: x.names.clone(),
        mean,
        components,
        explained_variance: explained,
        explained_variance_ratio: ratio,
    })
}

impl PcaModel {
    pub fn n_components(&self) -> usize {
        self.components.nrows()
    }

    /// Projects rows `(n, n_features)` onto the components.
    pub fn transform(&self, rows: ArrayView2<f64>) -> Result<Array2<f64>> {
        dim_check("pca input features", self.mean.len(), rows.ncols())?;
        Ok((&rows - &self.mean).dot(&self.components.t()))
    }

    /// Maps component scores back to feature space.
    pub fn inverse_transform(&self, scores: ArrayView2<f64>) -> Result<Array2<f64>> {
        dim_check("pca components", self.n_components(), scores.ncols())?;
        Ok(scores.dot(&self.components) + &self.mean)
    }

    /// Contribution of each original feature to the kept components:
    /// `sum_c ratio_c * components[c][f]^2`.
    pub fn feature_scores(&self) -> Vec<f64> {
        (0..self.mean.len())
            .map(|j| {
                (0..self.n_components())
                    .map(|c| self.explained_variance_ratio[c] * self.components[[c, j]].powi(2))
                    .sum()
            })
            .collect()
    }

    pub fn component_names(&self) -> Vec<String> {
        (1..=self.n_components()).map(|i| format!("pc{i:02}")).collect()
    }
}
