//! Stream schemas, records and the CSV formats for streams and label tracks.

use std::io::{Read, Write};
use std::path::Path;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{dim_check, Error, Result};
use crate::nncore::NUM_CLASSES;

pub const FNIRS_CHANNELS: usize = 204;
pub const TIMESTAMP_COLUMN: &str = "timestamp_s";

pub const DRIVING_CHANNELS: [&str; 10] = [
    "car_speed",
    "angular_velocity_x",
    "angular_velocity_y",
    "angular_velocity_z",
    "linear_acceleration_x",
    "linear_acceleration_y",
    "linear_acceleration_z",
    "steering_wheel_angle",
    "throttle",
    "brake",
];

pub const DEFAULT_EYE_CHANNELS: [&str; 4] = ["pupil_diameter_left", "pupil_diameter_right", "gaze_x", "gaze_y"];

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Fnirs,
    Eye,
    Driving,
}

impl Modality {
    pub fn name(self) -> &'static str {
        match self {
            Modality::Fnirs => "fnirs",
            Modality::Eye => "eye",
            Modality::Driving => "driving",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StreamSchema {
    pub modality: Modality,
    pub channels: Vec<String>,
}

/// `ch001_O2, ch001_R, ch002_O2, ...`: 102 sites with an oxygenation and a
/// deoxygenation channel each.
pub fn fnirs_channel_names() -> Vec<String> {
    (1..=FNIRS_CHANNELS / 2)
        .flat_map(|i| [format!("ch{i:03}_O2"), format!("ch{i:03}_R")])
        .collect()
}

impl StreamSchema {
    pub fn fnirs() -> Self {
        Self {
            modality: Modality::Fnirs,
            channels: fnirs_channel_names(),
        }
    }

    pub fn driving() -> Self {
        Self {
            modality: Modality::Driving,
            channels: DRIVING_CHANNELS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn eye(channels: &[String]) -> Result<Self> {
        let s = Self {
            modality: Modality::Eye,
            channels: channels.to_vec(),
        };
        s.validate()?;
        Ok(s)
    }

    pub fn eye_default() -> Self {
        Self {
            modality: Modality::Eye,
            channels: DEFAULT_EYE_CHANNELS.iter().map(|s| s.to_string()).collect(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let mut seen = std::collections::HashSet::new();
        if let Some(dup) = self.channels.iter().find(|c| !seen.insert(c.as_str())) {
            return Err(Error::Validation(format!("{} stream: duplicate channel {dup:?}", self.modality.name())));
        }
        match self.modality {
            Modality::Fnirs => {
                if self.channels.len() != FNIRS_CHANNELS {
                    return Err(Error::Validation(format!(
                        "fnirs stream needs exactly {FNIRS_CHANNELS} channels, got {}",
                        self.channels.len()
                    )));
                }
                if let Some(bad) = self.channels.iter().find(|c| !(c.ends_with("O2") || c.ends_with('R'))) {
                    return Err(Error::Validation(format!("fnirs channel {bad:?} must end in O2 or R")));
                }
            }
            Modality::Driving => {
                if self.channels.iter().map(String::as_str).ne(DRIVING_CHANNELS) {
                    return Err(Error::Validation(format!("driving stream channels must be {}", DRIVING_CHANNELS.join(","))));
                }
            }
            Modality::Eye => {
                if self.channels.is_empty() {
                    return Err(Error::Validation("eye stream needs at least one channel".into()));
                }
            }
        }
        if self.channels.iter().any(|c| c == TIMESTAMP_COLUMN) {
            return Err(Error::Validation(format!("channel may not be named {TIMESTAMP_COLUMN}")));
        }
        Ok(())
    }
}

/// A sampled multichannel stream. Missing cells are NaN.
#[derive(Debug, Clone, PartialEq)]
pub struct Stream {
    pub schema: StreamSchema,
    pub timestamps: Vec<f64>,
    /// `(n_records, n_channels)`
    pub values: Array2<f64>,
}

impl Stream {
    pub fn new(schema: StreamSchema, timestamps: Vec<f64>, values: Array2<f64>) -> Result<Self> {
        schema.validate()?;
        dim_check("stream records", timestamps.len(), values.nrows())?;
        dim_check("stream channels", schema.channels.len(), values.ncols())?;
        if timestamps.is_empty() {
            return Err(Error::Validation(format!("{} stream has no records", schema.modality.name())));
        }
        if let Some(i) = timestamps.iter().position(|t| !t.is_finite()) {
            return Err(Error::Validation(format!("{} stream: non-finite timestamp at record {i}", schema.modality.name())));
        }
        if let Some(i) = timestamps.windows(2).position(|w| w[1] <= w[0]) {
            return Err(Error::Validation(format!(
                "{} stream: timestamps not strictly increasing at record {}",
                schema.modality.name(),
                i + 1
            )));
        }
        if values.iter().any(|v| v.is_infinite()) {
            return Err(Error::Validation(format!("{} stream: infinite value", schema.modality.name())));
        }
        Ok(Self {
            schema,
            timestamps,
            values,
        })
    }

    pub fn len(&self) -> usize {
        self.timestamps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.timestamps.is_empty()
    }

    pub fn first_time(&self) -> f64 {
        self.timestamps[0]
    }

    pub fn last_time(&self) -> f64 {
        self.timestamps[self.len() - 1]
    }

    pub fn channel_index(&self, name: &str) -> Option<usize> {
        self.schema.channels.iter().position(|c| c == name)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        let mut header = vec![TIMESTAMP_COLUMN.to_string()];
        header.extend(self.schema.channels.iter().cloned());
        w.write_record(&header).map_err(csv_write)?;
        let mut record = Vec::with_capacity(header.len());
        for (t, row) in self.timestamps.iter().zip(self.values.rows()) {
            record.clear();
            record.push(t.to_string());
            record.extend(row.iter().map(|v| if v.is_nan() { String::new() } else { v.to_string() }));
            w.write_record(&record).map_err(csv_write)?;
        }
        w.flush().map_err(|e| Error::Validation(format!("csv flush failed: {e}")))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

pub(crate) fn csv_write(e: csv::Error) -> Error {
    Error::Validation(format!("csv write failed: {e}"))
}

pub(crate) fn parse_cell(path: &Path, line: u64, column: &str, cell: &str) -> Result<f64> {
    let cell = cell.trim();
    if cell.is_empty() || cell.eq_ignore_ascii_case("nan") {
        return Ok(f64::NAN);
    }
    match cell.parse::<f64>() {
        Ok(v) if v.is_finite() => Ok(v),
        _ => Err(Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("column {column}: {cell:?} is not a finite number"),
        }),
    }
}

/// Parses a stream CSV whose header must be `timestamp_s` followed by the
/// schema's channels in order. Empty cells are missing values.
pub fn read_stream<R: Read>(input: R, path: &Path, schema: &StreamSchema) -> Result<Stream> {
    schema.validate()?;
    let mut reader = csv::ReaderBuilder::new().has_headers(true).from_reader(input);
    let header_err = |msg: String| Error::Header {
        path: path.to_path_buf(),
        msg,
    };
    let headers = reader.headers().map_err(|e| header_err(e.to_string()))?.clone();
    let names: Vec<&str> = headers.iter().map(str::trim).collect();
    if names.first() != Some(&TIMESTAMP_COLUMN) {
        return Err(header_err(format!("first column must be {TIMESTAMP_COLUMN}")));
    }
    let found = &names[1..];
    if let Some(missing) = schema.channels.iter().find(|c| !found.contains(&c.as_str())) {
        return Err(header_err(format!("missing column {missing:?}")));
    }
    if found.len() != schema.channels.len() || found.iter().zip(&schema.channels).any(|(a, b)| a != b) {
        return Err(header_err(format!("expected columns {TIMESTAMP_COLUMN},{}", schema.channels.join(","))));
    }

    let nc = schema.channels.len();
    let mut timestamps = Vec::new();
    let mut flat = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let t = parse_cell(path, line, TIMESTAMP_COLUMN, &record[0])?;
        if t.is_nan() {
            return Err(Error::Parse {
                path: path.to_path_buf(),
                line,
                msg: "missing timestamp".into(),
            });
        }
        if let Some(&prev) = timestamps.last() {
            if t <= prev {
                return Err(Error::Parse {
                    path: path.to_path_buf(),
                    line,
                    msg: format!("timestamp {t} does not increase (previous {prev})"),
                });
            }
        }
        timestamps.push(t);
        for (j, cell) in record.iter().skip(1).enumerate() {
            flat.push(parse_cell(path, line, &schema.channels[j], cell)?);
        }
    }
    if timestamps.is_empty() {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            msg: "no records".into(),
        });
    }
    let values = Array2::from_shape_vec((timestamps.len(), nc), flat).expect("row lengths checked by csv");
    Stream::new(schema.clone(), timestamps, values)
}

pub fn load_stream(path: &Path, schema: &StreamSchema) -> Result<Stream> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_stream(std::io::BufReader::new(file), path, schema)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LabelInterval {
    pub start_s: f64,
    pub end_s: f64,
    pub level: usize,
    pub block_id: usize,
}

/// Ordered, non-overlapping `[start, end)` intervals of constant n-back level.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LabelTrack {
    pub intervals: Vec<LabelInterval>,
}

impl LabelTrack {
    pub fn new(intervals: Vec<LabelInterval>) -> Result<Self> {
        for (i, iv) in intervals.iter().enumerate() {
            if !(iv.start_s.is_finite() && iv.end_s.is_finite() && iv.start_s < iv.end_s) {
                return Err(Error::Validation(format!("label interval {i}: start must precede end")));
            }
            if iv.level >= NUM_CLASSES {
                return Err(Error::Validation(format!("label interval {i}: level {} outside 0..{NUM_CLASSES}", iv.level)));
            }
            if i > 0 && intervals[i - 1].end_s > iv.start_s {
                return Err(Error::Validation(format!("label interval {i} overlaps or precedes its predecessor")));
            }
        }
        Ok(Self { intervals })
    }

    /// Interval containing `t`, if any.
    pub fn at(&self, t: f64) -> Option<&LabelInterval> {
        let i = self.intervals.partition_point(|iv| iv.end_s <= t);
        self.intervals.get(i).filter(|iv| iv.start_s <= t)
    }

    pub fn write_csv<W: Write>(&self, out: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(out);
        w.write_record(["start_s", "end_s", "level", "block_id"]).map_err(csv_write)?;
        for iv in &self.intervals {
            w.write_record([iv.start_s.to_string(), iv.end_s.to_string(), iv.level.to_string(), iv.block_id.to_string()])
                .map_err(csv_write)?;
        }
        w.flush().map_err(|e| Error::Validation(format!("csv flush failed: {e}")))
    }

    pub fn save_csv(&self, path: &Path) -> Result<()> {
        let file = std::fs::File::create(path).map_err(|e| Error::io(path, e))?;
        self.write_csv(std::io::BufWriter::new(file))
    }
}

pub fn load_labels(path: &Path) -> Result<LabelTrack> {
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let mut reader = csv::Reader::from_reader(std::io::BufReader::new(file));
    let headers = reader
        .headers()
        .map_err(|e| Error::Header {
            path: path.to_path_buf(),
            msg: e.to_string(),
        })?
        .clone();
    let expected = ["start_s", "end_s", "level", "block_id"];
    if headers.iter().map(str::trim).ne(expected) {
        return Err(Error::Header {
            path: path.to_path_buf(),
            msg: format!("expected columns {}", expected.join(",")),
        });
    }
    let mut intervals = Vec::new();
    for record in reader.records() {
        let record = record.map_err(|e| Error::Parse {
            path: path.to_path_buf(),
            line: e.position().map_or(0, |p| p.line()),
            msg: e.to_string(),
        })?;
        let line = record.position().map_or(0, |p| p.line());
        let bad = |col: &str| Error::Parse {
            path: path.to_path_buf(),
            line,
            msg: format!("column {col}: invalid value"),
        };
        let num = |i: usize, col: &str| record[i].trim().parse::<f64>().ok().filter(|v| v.is_finite()).ok_or_else(|| bad(col));
        let int = |i: usize, col: &str| record[i].trim().parse::<usize>().map_err(|_| bad(col));
        intervals.push(LabelInterval {
            start_s: num(0, "start_s")?,
            end_s: num(1, "end_s")?,
            level: int(2, "level")?,
            block_id: int(3, "block_id")?,
        });
    }
    LabelTrack::new(intervals).map_err(|e| Error::Parse {
        path: path.to_path_buf(),
        line: 0,
        msg: e.to_string(),
    })
}
