//! Pairwise Pearson correlation between feature columns.

use std::io::Write;
use std::path::Path;

use ndarray::{Array2, ArrayView2, Axis};

use super::stream::csv_write;
use crate::error::{dim_check, Error, Result};
use crate::svg::{heatmap, HeatmapStyle};

#[derive(Debug, Clone, PartialEq)]
pub struct CorrelationMatrix {
    pub names: Vec<String>,
    /// `(F, F)`, symmetric with a unit diagonal.
    pub values: Array2<f64>,
}

/// Pearson correlation of every column pair of `rows` `(n, F)`. A constant
/// column correlates 0 with every other column; the diagonal is exactly 1.
pub fn correlation_matrix(rows: ArrayView2<f64>, names: &[String]) -> Result<CorrelationMatrix> {
    dim_check("correlation feature names", rows.ncols(), names.len())?;
    let n = rows.nrows();
    if n < 2 {
        return Err(Error::Validation(format!("correlation needs at least 2 rows, got {n}")));
    }
    let f = rows.ncols();
    let mean = rows.mean_axis(Axis(0)).expect("n >= 2");
    let centered = &rows - &mean;
    let cross = centered.t().dot(&centered);
    let norms: Vec<f64> = (0..f).map(|j| cross[[j, j]].sqrt()).collect();
    let mut values = Array2::zeros((f, f));
    for i in 0..f {
        values[[i, i]] = 1.0;
        for j in 0..i {
            let r = if norms[i] > 0.0 && norms[j] > 0.0 {
                (cross[[i, j]] / (norms[i] * norms[j])).clamp(-1.0, 1.0)
            } else {
                0.0
            };
            values[[i, j]] = r;
            values[[j, i]] = r;
        }
    }
    Ok(CorrelationMatrix { names: names.to_vec(), values })
}

impl CorrelationMatrix {
    /// Square CSV: header `feature,<names...>`, one row per feature.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec!["feature".to_string()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).map_err(csv_write)?;
        for (name, row) in self.names.iter().zip(self.values.rows()) {
            let mut rec = vec![name.clone()];
            rec.extend(row.iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_write)?;
        }
        w.flush().map_err(|e| Error::Validation(format!("csv flush failed: {e}")))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    pub fn to_svg(&self) -> String {
        heatmap(&self.values.view(), &self.names, &self.names, "Feature correlation", HeatmapStyle::Diverging)
    }

    pub fn save_svg(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_svg()).map_err(|e| Error::io(path, e))
    }
}
