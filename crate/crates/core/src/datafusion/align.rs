//! Bucket-mean downsampling and alignment onto the fNIRS clock.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use log::warn;
use ndarray::Array2;

use super::stream::{csv_write, parse_cell, LabelTrack, Stream, TIMESTAMP_COLUMN};
use crate::nncore::NUM_CLASSES;
use crate::error::{Error, Result};

/// Output of [`downsample_with_skew`].
#[derive(Debug, Clone, PartialEq)]
pub struct Resampled {
    /// `(n_targets, n_channels)`
    pub values: Array2<f64>,
    /// Largest distance between a target and a source sample used for it.
    pub skew: Vec<f64>,
    /// Targets whose bucket was empty and fell back to the nearest sample.
    pub fallbacks: usize,
}

/// Mean spacing of sorted timestamps.
pub fn mean_period(timestamps: &[f64]) -> Result<f64> {
    if timestamps.len() < 2 {
        return Err(Error::Validation("need at least two timestamps to infer a period".into()));
    }
    Ok((timestamps[timestamps.len() - 1] - timestamps[0]) / (timestamps.len() - 1) as f64)
}

/// For each target `t` with period `P` (the mean target spacing), the mean of
/// the source samples in `[t - P/2, t + P/2)`, or the nearest sample when
/// that bucket is empty.
pub fn downsample(stream: &Stream, targets: &[f64]) -> Result<Array2<f64>> {
    Ok(downsample_with_skew(stream, targets)?.values)
}

pub fn downsample_with_skew(stream: &Stream, targets: &[f64]) -> Result<Resampled> {
    let period = mean_period(targets)?;
    if targets.windows(2).any(|w| w[1] <= w[0]) {
        return Err(Error::Validation("target timestamps must be strictly increasing".into()));
    }
    let (first, last) = (targets[0], targets[targets.len() - 1]);
    if first < stream.first_time() || last > stream.last_time() {
        return Err(Error::Range(format!(
            "targets [{first}, {last}] fall outside the {} stream's coverage [{}, {}]",
            stream.schema.modality.name(),
            stream.first_time(),
            stream.last_time()
        )));
    }
    let src = &stream.timestamps;
    let nc = stream.values.ncols();
    let mut values = Array2::zeros((targets.len(), nc));
    let mut skew = Vec::with_capacity(targets.len());
    let mut fallbacks = 0;
    let (mut lo, mut hi) = (0usize, 0usize);
    for (i, &t) in targets.iter().enumerate() {
        let (a, b) = (t - period / 2.0, t + period / 2.0);
        while lo < src.len() && src[lo] < a {
            lo += 1;
        }
        hi = hi.max(lo);
        while hi < src.len() && src[hi] < b {
            hi += 1;
        }
        let mut out = values.row_mut(i);
        if hi > lo {
            for r in lo..hi {
                for (o, v) in out.iter_mut().zip(stream.values.row(r)) {
                    *o += v;
                }
            }
            let n = (hi - lo) as f64;
            out.mapv_inplace(|s| s / n);
            skew.push((t - src[lo]).max(src[hi - 1] - t));
        } else {
            // src[lo - 1] < a <= b <= src[lo]; coverage guarantees one side exists
            let nearest = match (lo.checked_sub(1), (lo < src.len()).then_some(lo)) {
                (Some(p), Some(n)) => {
                    if t - src[p] <= src[n] - t {
                        p
                    } else {
                        n
                    }
                }
                (Some(p), None) => p,
                (None, Some(n)) => n,
                (None, None) => unreachable!("streams are non-empty"),
            };
            out.assign(&stream.values.row(nearest));
            skew.push((src[nearest] - t).abs());
            fallbacks += 1;
        }
    }
    Ok(Resampled { values, skew, fallbacks })
}

/// Rows on the fNIRS clock with named feature columns.
#[derive(Debug, Clone, PartialEq)]
pub struct AlignedDataset {
    pub timestamps: Vec<f64>,
    /// `(n_rows, n_features)`
    pub features: Array2<f64>,
    pub names: Vec<String>,
    pub labels: Vec<usize>,
    pub block_ids: Vec<usize>,
    pub session_id: usize,
}

impl AlignedDataset {
    pub fn n_rows(&self) -> usize {
        self.timestamps.len()
    }

    /// CSV with columns `timestamp_s,label,block_id,<features...>`.
    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![TIMESTAMP_COLUMN.to_string(), "label".into(), "block_id".into()];
        header.extend(self.names.iter().cloned());
        w.write_record(&header).map_err(csv_write)?;
        for i in 0..self.n_rows() {
            let mut rec = vec![self.timestamps[i].to_string(), self.labels[i].to_string(), self.block_ids[i].to_string()];
            rec.extend(self.features.row(i).iter().map(|v| v.to_string()));
            w.write_record(&rec).map_err(csv_write)?;
        }
        w.flush().map_err(|e| Error::Validation(format!("csv flush failed: {e}")))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }

    /// Reads the format written by [`AlignedDataset::write_csv`].
    pub fn read_csv<R: std::io::Read>(input: R, path: &Path, session_id: usize) -> Result<Self> {
        let mut reader = csv::Reader::from_reader(input);
        let header_err = |msg: String| Error::Header {
            path: path.to_path_buf(),
            msg,
        };
        let headers = reader.headers().map_err(|e| header_err(e.to_string()))?.clone();
        let cols: Vec<&str> = headers.iter().map(str::trim).collect();
        if cols.len() < 4 || cols[..3] != [TIMESTAMP_COLUMN, "label", "block_id"] {
            return Err(header_err(format!("expected {TIMESTAMP_COLUMN},label,block_id followed by feature columns")));
        }
        let names: Vec<String> = cols[3..].iter().map(|s| s.to_string()).collect();
        let mut seen = HashSet::new();
        if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
            return Err(header_err(format!("duplicate column {dup:?}")));
        }
        let parse_err = |line: u64, msg: String| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg,
        };
        let (mut ts, mut labels, mut blocks, mut flat) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
        for record in reader.records() {
            let record = record.map_err(|e| parse_err(e.position().map_or(0, |p| p.line()), e.to_string()))?;
            let line = record.position().map_or(0, |p| p.line());
            let t = parse_cell(path, line, TIMESTAMP_COLUMN, &record[0])?;
            if t.is_nan() || ts.last().is_some_and(|&p| t <= p) {
                return Err(parse_err(line, format!("timestamp {:?} missing or not increasing", &record[0])));
            }
            let label: usize = record[1].trim().parse().map_err(|_| parse_err(line, format!("label {:?} is not an integer", &record[1])))?;
            if label >= NUM_CLASSES {
                return Err(parse_err(line, format!("label {label} outside 0..{NUM_CLASSES}")));
            }
            let block: usize = record[2].trim().parse().map_err(|_| parse_err(line, format!("block_id {:?} is not an integer", &record[2])))?;
            for (j, cell) in record.iter().skip(3).enumerate() {
                let v = parse_cell(path, line, &names[j], cell)?;
                if v.is_nan() {
                    return Err(parse_err(line, format!("missing value in column {}", names[j])));
                }
                flat.push(v);
            }
            ts.push(t);
            labels.push(label);
            blocks.push(block);
        }
        if ts.is_empty() {
            return Err(parse_err(1, "no records".into()));
        }
        Ok(Self {
            features: Array2::from_shape_vec((ts.len(), names.len()), flat).expect("row lengths checked by csv"),
            timestamps: ts,
            names,
            labels,
            block_ids: blocks,
            session_id,
        })
    }

    pub fn load_csv(path: &Path, session_id: usize) -> Result<Self> {
        let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
        Self::read_csv(std::io::BufReader::new(file), path, session_id)
    }
}

/// Aligns the three streams on the fNIRS clock restricted to the interval
/// all of them cover. Eye and driving data are bucket-mean downsampled onto
/// that clock. Rows outside every label interval, rows with a missing value
/// and rows whose resampled value came from further than half a period away
/// are dropped. Columns are the selected fNIRS channels (in stream order),
/// then eye, then driving.
pub fn align(fnirs: &Stream, eye: &Stream, driving: &Stream, labels: &LabelTrack, selected_fnirs: &[String]) -> Result<AlignedDataset> {
    let chosen: HashSet<&str> = selected_fnirs.iter().map(String::as_str).collect();
    if let Some(missing) = selected_fnirs.iter().find(|n| fnirs.channel_index(n).is_none()) {
        return Err(Error::Validation(format!("selected fNIRS channel {missing:?} not in stream")));
    }
    if chosen.len() != selected_fnirs.len() {
        return Err(Error::Validation("selected fNIRS channels contain duplicates".into()));
    }
    let fnirs_cols: Vec<usize> = (0..fnirs.schema.channels.len()).filter(|&j| chosen.contains(fnirs.schema.channels[j].as_str())).collect();

    let lo = fnirs.first_time().max(eye.first_time()).max(driving.first_time());
    let hi = fnirs.last_time().min(eye.last_time()).min(driving.last_time());
    let master_idx: Vec<usize> = (0..fnirs.len()).filter(|&i| fnirs.timestamps[i] >= lo && fnirs.timestamps[i] <= hi).collect();
    if lo > hi || master_idx.len() < 2 {
        return Err(Error::Range(format!("streams share no usable time interval (intersection [{lo}, {hi}])")));
    }
    let master: Vec<f64> = master_idx.iter().map(|&i| fnirs.timestamps[i]).collect();
    let period = mean_period(&master)?;
    let eye_rs = downsample_with_skew(eye, &master)?;
    let drv_rs = downsample_with_skew(driving, &master)?;

    let mut names: Vec<String> = fnirs_cols.iter().map(|&j| fnirs.schema.channels[j].clone()).collect();
    names.extend(eye.schema.channels.iter().cloned());
    names.extend(driving.schema.channels.iter().cloned());
    let mut seen = HashSet::new();
    if let Some(dup) = names.iter().find(|n| !seen.insert(n.as_str())) {
        return Err(Error::Validation(format!("feature name {dup:?} appears in more than one stream")));
    }

    let nf = names.len();
    let (mut ts, mut flat, mut labs, mut blocks) = (Vec::new(), Vec::new(), Vec::new(), Vec::new());
    let (mut missing, mut skewed) = (0usize, 0usize);
    let mut row = Vec::with_capacity(nf);
    for (k, (&i, &t)) in master_idx.iter().zip(&master).enumerate() {
        let Some(iv) = labels.at(t) else { continue };
        if eye_rs.skew[k] > period / 2.0 * (1.0 + 1e-9) || drv_rs.skew[k] > period / 2.0 * (1.0 + 1e-9) {
            skewed += 1;
            continue;
        }
        row.clear();
        row.extend(fnirs_cols.iter().map(|&j| fnirs.values[[i, j]]));
        row.extend(eye_rs.values.row(k).iter());
        row.extend(drv_rs.values.row(k).iter());
        if row.iter().any(|v| v.is_nan()) {
            missing += 1;
            continue;
        }
        ts.push(t);
        flat.extend_from_slice(&row);
        labs.push(iv.level);
        blocks.push(iv.block_id);
    }
    if missing > 0 {
        warn!("alignment dropped {missing} rows with missing values");
    }
    if skewed > 0 {
        warn!("alignment dropped {skewed} rows whose nearest eye/driving sample lies beyond half a period");
    }
    if ts.is_empty() {
        return Err(Error::Range("no aligned rows fall inside a label interval".into()));
    }
    Ok(AlignedDataset {
        features: Array2::from_shape_vec((ts.len(), nf), flat).expect("row width fixed"),
        timestamps: ts,
        names,
        labels: labs,
        block_ids: blocks,
        session_id: 0,
    })
}
