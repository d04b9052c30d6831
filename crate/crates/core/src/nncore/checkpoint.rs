//! Plain-text checkpoints.
//!
//! ```text
//! cogload-checkpoint
//! format_version 1
//! kernel 3
//! conv_channels 16 32
//! hidden 64
//! rnn_layers 2
//! num_classes 3
//! input_channels 20
//! seed 42
//! tensor conv1.weight 960
//! <one value per line>
//! ...
//! end
//! ```
//!
//! Values are written in Rust's shortest round-trip decimal form, so a
//! load reproduces every parameter bit for bit.

use std::fmt::Write as _;
use std::path::Path;

use super::model::{ModelParams, CONV1_OUT, CONV2_OUT, HIDDEN, KERNEL, NUM_CLASSES, RNN_LAYERS};
use crate::error::{Error, Result};

pub const MAGIC: &str = "cogload-checkpoint";
pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct Checkpoint {
    pub params: ModelParams,
    pub seed: u64,
}

pub fn to_string(params: &ModelParams, seed: u64) -> String {
    let mut out = String::new();
    let _ = writeln!(out, "{MAGIC}");
    let _ = writeln!(out, "format_version {FORMAT_VERSION}");
    let _ = writeln!(out, "kernel {KERNEL}");
    let _ = writeln!(out, "conv_channels {CONV1_OUT} {CONV2_OUT}");
    let _ = writeln!(out, "hidden {HIDDEN}");
    let _ = writeln!(out, "rnn_layers {RNN_LAYERS}");
    let _ = writeln!(out, "num_classes {NUM_CLASSES}");
    let _ = writeln!(out, "input_channels {}", params.input_channels);
    let _ = writeln!(out, "seed {seed}");
    for (name, values) in params.tensors() {
        let _ = writeln!(out, "tensor {name} {}", values.len());
        for v in values {
            let _ = writeln!(out, "{v}");
        }
    }
    out.push_str("end\n");
    out
}

pub fn save(path: &Path, params: &ModelParams, seed: u64) -> Result<()> {
    std::fs::write(path, to_string(params, seed)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<Checkpoint> {
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    parse(&text, path)
}

pub fn parse(text: &str, path: &Path) -> Result<Checkpoint> {
    let mut lines = text.lines().enumerate().map(|(i, l)| (i as u64 + 1, l.trim()));
    let err = |line: u64, msg: String| Error::Parse {
        path: path.to_path_buf(),
        line,
        msg,
    };
    let mut next = |what: &str| lines.next().ok_or_else(|| err(0, format!("unexpected end of file, expected {what}")));

    let (line, magic) = next("magic")?;
    if magic != MAGIC {
        return Err(err(line, format!("not a checkpoint (first line {magic:?})")));
    }
    let mut header = |key: &str| -> Result<(u64, Vec<String>)> {
        let (line, text) = next(key)?;
        let mut parts = text.split_whitespace();
        if parts.next() != Some(key) {
            return Err(err(line, format!("expected `{key}`")));
        }
        Ok((line, parts.map(str::to_owned).collect()))
    };
    let mut expect = |key: &str, want: &[usize]| -> Result<()> {
        let (line, vals) = header(key)?;
        let got: Vec<usize> = vals
            .iter()
            .map(|v| v.parse().map_err(|_| err(line, format!("bad integer {v:?}"))))
            .collect::<Result<_>>()?;
        if got != want {
            return Err(err(line, format!("{key} {got:?} differs from the built-in architecture {want:?}")));
        }
        Ok(())
    };
    expect("format_version", &[FORMAT_VERSION as usize])?;
    expect("kernel", &[KERNEL])?;
    expect("conv_channels", &[CONV1_OUT, CONV2_OUT])?;
    expect("hidden", &[HIDDEN])?;
    expect("rnn_layers", &[RNN_LAYERS])?;
    expect("num_classes", &[NUM_CLASSES])?;

    let (line, vals) = header("input_channels")?;
    let input_channels: usize = single(&vals).ok_or_else(|| err(line, "bad input_channels".into()))?;
    if input_channels == 0 {
        return Err(err(line, "input_channels must be positive".into()));
    }
    let (line, vals) = header("seed")?;
    let seed: u64 = single(&vals).ok_or_else(|| err(line, "bad seed".into()))?;

    let mut params = ModelParams::zeros(input_channels);
    for (name, values) in params.tensors_mut() {
        let (line, text) = next("tensor header")?;
        let parts: Vec<&str> = text.split_whitespace().collect();
        if parts.len() != 3 || parts[0] != "tensor" || parts[1] != name {
            return Err(err(line, format!("expected tensor header for {name}")));
        }
        if parts[2].parse::<usize>().ok() != Some(values.len()) {
            return Err(err(line, format!("{name}: expected {} values", values.len())));
        }
        for v in values.iter_mut() {
            let (line, text) = next("value")?;
            *v = text
                .parse::<f64>()
                .ok()
                .filter(|x| x.is_finite())
                .ok_or_else(|| err(line, format!("bad value {text:?} in {name}")))?;
        }
    }
    let (line, text) = next("end")?;
    if text != "end" {
        return Err(err(line, "expected `end`".into()));
    }
    Ok(Checkpoint { params, seed })
}

fn single<T: std::str::FromStr>(vals: &[String]) -> Option<T> {
    match vals {
        [v] => v.parse().ok(),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn round_trip_is_bit_exact() {
        let mut params = ModelParams::init(3, 77);
        params.dense.bias[1] = -0.0;
        params.conv1.bias[0] = 1e-300;
        let text = to_string(&params, 77);
        let back = parse(&text, Path::new("mem")).unwrap();
        assert_eq!(back.seed, 77);
        for ((_, a), (_, b)) in params.tensors().iter().zip(back.params.tensors().iter()) {
            for (x, y) in a.iter().zip(b.iter()) {
                assert_eq!(x.to_bits(), y.to_bits());
            }
        }
        assert_eq!(to_string(&back.params, back.seed), text);
    }

    #[test]
    fn rejects_foreign_architecture() {
        let text = to_string(&ModelParams::init(2, 0), 0).replace("hidden 64", "hidden 32");
        let err = parse(&text, Path::new("ck.txt")).unwrap_err();
        assert!(err.to_string().contains("hidden"), "{err}");
    }

    #[test]
    fn rejects_truncation_and_bad_values() {
        let text = to_string(&ModelParams::init(2, 0), 0);
        let truncated: String = text.lines().take(40).map(|l| format!("{l}\n")).collect();
        assert!(parse(&truncated, Path::new("ck")).is_err());
        let corrupted = text.replacen("\n0.", "\nNaN0.", 1);
        assert!(parse(&corrupted, Path::new("ck")).is_err());
    }
}
