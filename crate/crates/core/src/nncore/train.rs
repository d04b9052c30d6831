use log::debug;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::{adam_step, AdamState, DEFAULT_LR};
use super::model::{batch_loss, model_backward, ModelParams, SampleBatch};
use crate::error::{dim_check, Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub lr: f64,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            epochs: 1000,
            batch_size: 32,
            lr: DEFAULT_LR,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::Config("train.epochs must be at least 1".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("train.batch_size must be at least 1".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("train.lr must be positive, got {}", self.lr)));
        }
        Ok(())
    }
}

#[derive(Debug, Clone)]
pub struct FitResult {
    pub params: ModelParams,
    /// Mean loss over the full training set before the first update.
    pub initial_loss: f64,
    /// Sample-weighted mean minibatch loss of every epoch.
    pub epoch_losses: Vec<f64>,
}

/// Minibatch Adam training. Each epoch reshuffles the sample order with a
/// ChaCha8 stream seeded from `cfg.seed`, so reruns are bit-identical.
pub fn fit(train: &SampleBatch, cfg: &TrainConfig, params: ModelParams) -> Result<FitResult> {
    cfg.validate()?;
    params.validate()?;
    dim_check("training input channels", params.input_channels, train.channels())?;
    let mut params = params;
    let mut state = AdamState::for_model(&params, cfg.lr);
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let n = train.len();

    let initial_loss = dataset_loss(train, &params, cfg.batch_size)?;
    if !initial_loss.is_finite() {
        return Err(Error::Divergence {
            epoch: 0,
            loss: initial_loss,
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    let mut epoch_losses = Vec::with_capacity(cfg.epochs);
    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut total = 0.0;
        for chunk in order.chunks(cfg.batch_size) {
            let batch = train.select(chunk);
            let (loss, grads) = model_backward(&batch, &params)?;
            if !loss.is_finite() {
                return Err(Error::Divergence { epoch, loss });
            }
            total += loss * chunk.len() as f64;
            adam_step(&mut params, &grads, &mut state)?;
        }
        let mean = total / n as f64;
        debug!("epoch {epoch}: loss {mean:.6}");
        epoch_losses.push(mean);
    }
    Ok(FitResult {
        params,
        initial_loss,
        epoch_losses,
    })
}

/// Mean loss over all samples, evaluated in chunks of `chunk` samples.
pub fn dataset_loss(data: &SampleBatch, params: &ModelParams, chunk: usize) -> Result<f64> {
    let idx: Vec<usize> = (0..data.len()).collect();
    let mut total = 0.0;
    for part in idx.chunks(chunk.max(1)) {
        total += batch_loss(&data.select(part), params)? * part.len() as f64;
    }
    Ok(total / data.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::Array3;
    use rand::Rng;

    fn separable(seed: u64, n: usize) -> SampleBatch {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let labels: Vec<usize> = (0..n).map(|i| i % 3).collect();
        let data = Array3::from_shape_fn((n, 2, 8), |(i, c, _)| {
            let shift = if c == 0 { labels[i] as f64 * 2.0 } else { 0.0 };
            shift + rng.random_range(-0.5..0.5)
        });
        SampleBatch::new(data, labels).unwrap()
    }

    #[test]
    fn rejects_zero_epochs() {
        let cfg = TrainConfig {
            epochs: 0,
            ..TrainConfig::default()
        };
        let data = separable(1, 6);
        assert!(matches!(fit(&data, &cfg, ModelParams::init(2, 0)), Err(Error::Config(_))));
    }

    #[test]
    fn loss_decreases_and_reruns_match() {
        let data = separable(2, 30);
        let cfg = TrainConfig {
            epochs: 10,
            batch_size: 8,
            lr: 1e-3,
            seed: 5,
        };
        let a = fit(&data, &cfg, ModelParams::init(2, 3)).unwrap();
        let b = fit(&data, &cfg, ModelParams::init(2, 3)).unwrap();
        assert_eq!(a.epoch_losses.len(), 10);
        assert!(*a.epoch_losses.last().unwrap() < a.initial_loss);
        assert_eq!(
            a.epoch_losses.iter().map(|v| v.to_bits()).collect::<Vec<_>>(),
            b.epoch_losses.iter().map(|v| v.to_bits()).collect::<Vec<_>>()
        );
        assert_eq!(a.params, b.params);
    }

    #[test]
    fn divergence_is_reported() {
        let data = separable(3, 6);
        let mut params = ModelParams::init(2, 0);
        params.dense.weight.fill(1e308);
        params.dense.bias.fill(0.0);
        let cfg = TrainConfig {
            epochs: 2,
            ..TrainConfig::default()
        };
        let err = fit(&data, &cfg, params).unwrap_err();
        assert!(matches!(err, Error::Divergence { .. }), "{err}");
    }
}
