//! Deterministic synthetic sessions shaped like the recorded streams, with a
//! controllable class effect and a known list of informative channels.

use std::collections::BTreeSet;
use std::f64::consts::TAU;
use std::path::{Path, PathBuf};

use ndarray::Array2;
use rand::seq::index;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::datafusion::{
    fnirs_channel_names, LabelInterval, LabelTrack, Stream, StreamSchema, DEFAULT_EYE_CHANNELS, DRIVING_CHANNELS, FNIRS_CHANNELS,
};
use crate::error::{Error, Result};
use crate::featsel::FeatureMatrix;
use crate::nncore::NUM_CLASSES;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Rates {
    pub fnirs: f64,
    pub eye: f64,
    pub driving: f64,
}

impl Default for Rates {
    fn default() -> Self {
        Self {
            fnirs: 8.0,
            eye: 120.0,
            driving: 60.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScheduledBlock {
    pub level: usize,
    pub duration_s: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SynthConfig {
    pub seed: u64,
    pub rates: Rates,
    pub block_schedule: Vec<ScheduledBlock>,
    pub n_informative_fnirs: usize,
    /// Separation of neighbouring class means in noise standard deviations.
    pub effect_size: f64,
    pub noise_sigma: f64,
    /// Amplitude of the slow sinusoidal drift on informative fNIRS
    /// channels, in noise standard deviations.
    pub drift_amplitude: f64,
    pub sessions: usize,
    pub eye_channels: Vec<String>,
    /// Eye class effect relative to the fNIRS effect.
    pub eye_effect_ratio: f64,
    /// Speed and throttle class effect relative to the fNIRS effect.
    pub driving_effect_ratio: f64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        Self {
            seed: 0,
            rates: Rates::default(),
            block_schedule: [0, 1, 2, 2, 1, 0]
                .into_iter()
                .map(|level| ScheduledBlock { level, duration_s: 40.0 })
                .collect(),
            n_informative_fnirs: 10,
            effect_size: 1.0,
            noise_sigma: 1.0,
            drift_amplitude: 0.5,
            sessions: 3,
            eye_channels: DEFAULT_EYE_CHANNELS.iter().map(|s| s.to_string()).collect(),
            eye_effect_ratio: 0.03,
            driving_effect_ratio: 0.05,
        }
    }
}

impl SynthConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Validation(format!("synth config: {m}")));
        for (name, r) in [("fnirs", self.rates.fnirs), ("eye", self.rates.eye), ("driving", self.rates.driving)] {
            if !(r > 0.0 && r.is_finite()) {
                return bad(format!("rate for {name} must be positive, got {r}"));
            }
        }
        if self.block_schedule.is_empty() {
            return bad("block schedule is empty".into());
        }
        if let Some(b) = self.block_schedule.iter().find(|b| b.level >= NUM_CLASSES || !(b.duration_s > 0.0 && b.duration_s.is_finite())) {
            return bad(format!("invalid block {b:?}: level must be below {NUM_CLASSES} and duration positive"));
        }
        if self.n_informative_fnirs > FNIRS_CHANNELS {
            return bad(format!("n_informative_fnirs {} exceeds {FNIRS_CHANNELS}", self.n_informative_fnirs));
        }
        for (name, v) in [
            ("effect_size", self.effect_size),
            ("drift_amplitude", self.drift_amplitude),
            ("eye_effect_ratio", self.eye_effect_ratio),
            ("driving_effect_ratio", self.driving_effect_ratio),
        ] {
            if !(v >= 0.0 && v.is_finite()) {
                return bad(format!("{name} must be non-negative, got {v}"));
            }
        }
        if !(self.noise_sigma > 0.0 && self.noise_sigma.is_finite()) {
            return bad(format!("noise_sigma must be positive, got {}", self.noise_sigma));
        }
        if self.sessions == 0 {
            return bad("sessions must be at least 1".into());
        }
        StreamSchema::eye(&self.eye_channels)?;
        Ok(())
    }

    pub fn duration_s(&self) -> f64 {
        self.block_schedule.iter().map(|b| b.duration_s).sum()
    }

    /// The fNIRS channels carrying a class effect. Depends only on the seed
    /// and the count, so every session shares them.
    pub fn informative_fnirs(&self) -> Vec<String> {
        let names = fnirs_channel_names();
        let mut rng = stream_rng(self.seed, u64::MAX);
        let mut picked: Vec<usize> = index::sample(&mut rng, FNIRS_CHANNELS, self.n_informative_fnirs).into_vec();
        picked.sort_unstable();
        picked.into_iter().map(|i| names[i].clone()).collect()
    }

    /// Every channel whose class-conditional mean differs between levels.
    pub fn ground_truth(&self) -> Vec<String> {
        if self.effect_size == 0.0 {
            return Vec::new();
        }
        let mut out = self.informative_fnirs();
        if self.eye_effect_ratio > 0.0 {
            out.extend(self.eye_channels.iter().filter(|c| eye_kind(c) == EyeKind::Pupil).cloned());
        }
        if self.driving_effect_ratio > 0.0 {
            out.extend(DRIVING_CHANNELS.iter().filter(|c| driving_base(c).2).map(|c| c.to_string()));
        }
        out
    }

    /// Label intervals of one session, block ids offset by the session.
    pub fn label_track(&self, session: usize) -> LabelTrack {
        let n = self.block_schedule.len();
        let mut t = 0.0;
        let intervals = self
            .block_schedule
            .iter()
            .enumerate()
            .map(|(b, blk)| {
                let iv = LabelInterval {
                    start_s: t,
                    end_s: t + blk.duration_s,
                    level: blk.level,
                    block_id: session * n + b,
                };
                t += blk.duration_s;
                iv
            })
            .collect();
        LabelTrack::new(intervals).expect("validated schedule tiles the session")
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthSession {
    pub index: usize,
    pub fnirs: Stream,
    pub eye: Stream,
    pub driving: Stream,
    pub labels: LabelTrack,
    pub ground_truth: Vec<String>,
}

fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Independent ChaCha8 stream per `(seed, purpose)`.
fn stream_rng(seed: u64, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(splitmix64(seed));
    rng.set_stream(purpose);
    rng
}

const STREAM_FNIRS: u64 = 0;
const STREAM_EYE: u64 = 1;
const STREAM_DRIVING: u64 = 2;
const STREAM_DRIFT: u64 = 3;

fn purpose(session: usize, which: u64) -> u64 {
    ((session as u64) << 8) | which
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum EyeKind {
    Pupil,
    Other,
}

fn eye_kind(name: &str) -> EyeKind {
    if name.starts_with("pupil") {
        EyeKind::Pupil
    } else {
        EyeKind::Other
    }
}

/// `(mean, sigma, class dependent)` for each driving channel.
fn driving_base(name: &str) -> (f64, f64, bool) {
    match name {
        "car_speed" => (20.0, 1.5, true),
        "throttle" => (0.4, 0.1, true),
        "brake" => (0.05, 0.05, false),
        "steering_wheel_angle" => (0.0, 5.0, false),
        n if n.starts_with("angular_velocity") => (0.0, 0.05, false),
        _ => (0.0, 0.3, false),
    }
}

fn sample_times(rate: f64, duration: f64) -> Vec<f64> {
    let n = (duration * rate - 1e-9).ceil().max(1.0) as usize;
    (0..n).map(|i| i as f64 / rate).collect()
}

fn level_per_sample(labels: &LabelTrack, times: &[f64]) -> Vec<f64> {
    times.iter().map(|&t| labels.at(t).map_or(0.0, |iv| iv.level as f64)).collect()
}

/// One session: deterministic in `(cfg.seed, index)`.
pub fn generate_session(cfg: &SynthConfig, index: usize) -> Result<SynthSession> {
    cfg.validate()?;
    let duration = cfg.duration_s();
    let labels = cfg.label_track(index);
    let sigma = cfg.noise_sigma;

    // fNIRS: informative channels get a class mean plus drift
    let times = sample_times(cfg.rates.fnirs, duration);
    let levels = level_per_sample(&labels, &times);
    let informative: BTreeSet<String> = cfg.informative_fnirs().into_iter().collect();
    let names = fnirs_channel_names();
    let mut drift_rng = stream_rng(cfg.seed, purpose(index, STREAM_DRIFT));
    let drifts: Vec<Option<(f64, f64)>> = names
        .iter()
        .map(|n| {
            informative.contains(n).then(|| {
                let period = drift_rng.random_range(30.0..120.0);
                let phase = drift_rng.random_range(0.0..TAU);
                (period, phase)
            })
        })
        .collect();
    let mut rng = stream_rng(cfg.seed, purpose(index, STREAM_FNIRS));
    let mut values = Array2::zeros((times.len(), FNIRS_CHANNELS));
    for (i, (&t, &lv)) in times.iter().zip(&levels).enumerate() {
        for (j, drift) in drifts.iter().enumerate() {
            let noise: f64 = StandardNormal.sample(&mut rng);
            let mean = match drift {
                Some((period, phase)) => {
                    lv * cfg.effect_size * sigma + cfg.drift_amplitude * sigma * (TAU * t / period + phase).sin()
                }
                None => 0.0,
            };
            values[[i, j]] = mean + sigma * noise;
        }
    }
    let fnirs = Stream::new(StreamSchema::fnirs(), times, values)?;

    // eye: pupils carry a small class effect, gaze does not
    let times = sample_times(cfg.rates.eye, duration);
    let levels = level_per_sample(&labels, &times);
    let mut rng = stream_rng(cfg.seed, purpose(index, STREAM_EYE));
    let kinds: Vec<EyeKind> = cfg.eye_channels.iter().map(|c| eye_kind(c)).collect();
    let mut values = Array2::zeros((times.len(), kinds.len()));
    for (i, &lv) in levels.iter().enumerate() {
        for (j, kind) in kinds.iter().enumerate() {
            let noise: f64 = StandardNormal.sample(&mut rng);
            values[[i, j]] = match kind {
                EyeKind::Pupil => {
                    let s = 0.3;
                    3.5 + lv * cfg.effect_size * cfg.eye_effect_ratio * s + s * noise
                }
                EyeKind::Other => noise,
            };
        }
    }
    let eye = Stream::new(StreamSchema::eye(&cfg.eye_channels)?, times, values)?;

    // driving: speed and throttle drop with load, brake is unaffected
    let times = sample_times(cfg.rates.driving, duration);
    let levels = level_per_sample(&labels, &times);
    let mut rng = stream_rng(cfg.seed, purpose(index, STREAM_DRIVING));
    let base: Vec<(f64, f64, bool)> = DRIVING_CHANNELS.iter().map(|c| driving_base(c)).collect();
    let mut values = Array2::zeros((times.len(), base.len()));
    for (i, &lv) in levels.iter().enumerate() {
        for (j, &(mean, s, dependent)) in base.iter().enumerate() {
            let noise: f64 = StandardNormal.sample(&mut rng);
            let shift = if dependent { -lv * cfg.effect_size * cfg.driving_effect_ratio * s } else { 0.0 };
            values[[i, j]] = mean + shift + s * noise;
        }
    }
    let driving = Stream::new(StreamSchema::driving(), times, values)?;

    Ok(SynthSession {
        index,
        fnirs,
        eye,
        driving,
        labels,
        ground_truth: cfg.ground_truth(),
    })
}

/// Sessions `0..cfg.sessions`, generated in parallel.
pub fn generate_dataset(cfg: &SynthConfig) -> Result<Vec<SynthSession>> {
    cfg.validate()?;
    (0..cfg.sessions).into_par_iter().map(|i| generate_session(cfg, i)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SynthManifest {
    pub config: SynthConfig,
    pub seed: u64,
    pub ground_truth: Vec<String>,
    pub sessions: Vec<String>,
}

pub const MANIFEST_FILE: &str = "manifest.json";

pub fn session_dir_name(index: usize) -> String {
    format!("session_{index:02}")
}

/// Writes `session_XX/{fnirs,eye,driving,labels}.csv` for each session and
/// `manifest.json` under `dir`. Returns every file written.
pub fn write_dataset(dir: &Path, cfg: &SynthConfig, sessions: &[SynthSession]) -> Result<Vec<PathBuf>> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut written = Vec::new();
    for s in sessions {
        let sub = dir.join(session_dir_name(s.index));
        std::fs::create_dir_all(&sub).map_err(|e| Error::io(&sub, e))?;
        for (name, stream) in [("fnirs.csv", &s.fnirs), ("eye.csv", &s.eye), ("driving.csv", &s.driving)] {
            let p = sub.join(name);
            stream.save_csv(&p)?;
            written.push(p);
        }
        let p = sub.join("labels.csv");
        s.labels.save_csv(&p)?;
        written.push(p);
    }
    let manifest = SynthManifest {
        config: cfg.clone(),
        seed: cfg.seed,
        ground_truth: cfg.ground_truth(),
        sessions: sessions.iter().map(|s| session_dir_name(s.index)).collect(),
    };
    let p = dir.join(MANIFEST_FILE);
    let text = serde_json::to_string_pretty(&manifest).map_err(|e| Error::Validation(format!("manifest serialization: {e}")))?;
    std::fs::write(&p, text + "\n").map_err(|e| Error::io(&p, e))?;
    written.push(p);
    Ok(written)
}

pub fn load_manifest(dir: &Path) -> Result<SynthManifest> {
    let p = dir.join(MANIFEST_FILE);
    let text = std::fs::read_to_string(&p).map_err(|e| Error::io(&p, e))?;
    serde_json::from_str(&text).map_err(|e| Error::Parse {
        path: p,
        line: e.line() as u64,
        msg: e.to_string(),
    })
}

/// Flat tabular problem: `n_informative` features whose class means are
/// `level * effect` apart, plus `n_noise` pure-noise features, all with unit
/// noise. Features are named `x00, x01, ...`; informative ones sit at
/// seed-chosen positions. Labels cycle through the three classes.
pub fn generate_tabular(n_samples: usize, n_informative: usize, n_noise: usize, effect: f64, seed: u64) -> Result<(FeatureMatrix, Vec<usize>, Vec<String>)> {
    if n_samples < NUM_CLASSES {
        return Err(Error::Validation(format!("need at least {NUM_CLASSES} samples, got {n_samples}")));
    }
    if !(effect >= 0.0 && effect.is_finite()) {
        return Err(Error::Validation(format!("effect must be non-negative, got {effect}")));
    }
    let nf = n_informative + n_noise;
    let width = (nf.max(1) - 1).to_string().len().max(2);
    let names: Vec<String> = (0..nf).map(|j| format!("x{j:0width$}")).collect();
    let mut rng = stream_rng(seed, u64::MAX - 1);
    let mut informative: Vec<usize> = index::sample(&mut rng, nf, n_informative).into_vec();
    informative.sort_unstable();
    let mut is_inf = vec![false; nf];
    for &j in &informative {
        is_inf[j] = true;
    }
    let labels: Vec<usize> = (0..n_samples).map(|i| i % NUM_CLASSES).collect();
    let mut rng = stream_rng(seed, u64::MAX - 2);
    let mut values = Array2::zeros((n_samples, nf));
    for (i, &y) in labels.iter().enumerate() {
        for j in 0..nf {
            let noise: f64 = StandardNormal.sample(&mut rng);
            values[[i, j]] = if is_inf[j] { y as f64 * effect } else { 0.0 } + noise;
        }
    }
    let truth = informative.into_iter().map(|j| names[j].clone()).collect();
    Ok((FeatureMatrix::new(values, names)?, labels, truth))
}
