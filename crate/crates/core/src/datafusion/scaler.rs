//! Per-feature standardization fitted on training rows.

use ndarray::{Array1, Array2, ArrayView2, Axis};
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaler {
    pub names: Vec<String>,
    pub mean: Vec<f64>,
    /// Population standard deviation, strictly positive.
    pub std: Vec<f64>,
}

/// Fits means and population standard deviations on `rows` `(n, F)`.
pub fn fit_scaler(rows: ArrayView2<f64>, names: &[String]) -> Result<Scaler> {
    dim_check("scaler feature names", rows.ncols(), names.len())?;
    let n = rows.nrows();
    if n < 2 {
        return Err(Error::Validation(format!("scaler needs at least 2 training rows, got {n}")));
    }
    if rows.iter().any(|v| !v.is_finite()) {
        return Err(Error::Numeric("scaler input contains non-finite values".into()));
    }
    let mean: Array1<f64> = rows.mean_axis(Axis(0)).expect("n >= 2");
    let mut var = Array1::<f64>::zeros(rows.ncols());
    for row in rows.rows() {
        for ((v, x), m) in var.iter_mut().zip(row).zip(&mean) {
            *v += (x - m) * (x - m);
        }
    }
    let std: Vec<f64> = var.iter().map(|v| (v / n as f64).sqrt()).collect();
    let flat: Vec<&str> = names.iter().zip(&std).filter(|(_, s)| !(**s > 0.0)).map(|(n, _)| n.as_str()).collect();
    if !flat.is_empty() {
        return Err(Error::Validation(format!("zero-variance features cannot be standardized: {}", flat.join(", "))));
    }
    Ok(Scaler { names: names.to_vec(), mean: mean.to_vec(), std })
}

impl Scaler {
    pub fn n_features(&self) -> usize {
        self.mean.len()
    }

    /// `z = (x - mean) / std`
    pub fn apply(&self, rows: ArrayView2<f64>) -> Result<Array2<f64>> {
        dim_check("scaler input features", self.n_features(), rows.ncols())?;
        let mut out = rows.to_owned();
        for mut row in out.rows_mut() {
            for ((x, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *x = (*x - m) / s;
            }
        }
        Ok(out)
    }

    /// `x = z * std + mean`
    pub fn invert(&self, rows: ArrayView2<f64>) -> Result<Array2<f64>> {
        dim_check("scaler input features", self.n_features(), rows.ncols())?;
        let mut out = rows.to_owned();
        for mut row in out.rows_mut() {
            for ((z, m), s) in row.iter_mut().zip(&self.mean).zip(&self.std) {
                *z = *z * s + m;
            }
        }
        Ok(out)
    }
}

/// Same as [`Scaler::apply`].
pub fn apply_scaler(scaler: &Scaler, rows: ArrayView2<f64>) -> Result<Array2<f64>> {
    scaler.apply(rows)
}
