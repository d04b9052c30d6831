mod common;

use cogload::nncore::{model_backward, model_forward, ModelParams, SampleBatch};
use common::{rel_error, tanh_inplace, ScalarModel};
use ndarray::Array3;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

fn tiny_case(seed: u64, channels: usize, time: usize) -> (ModelParams, SampleBatch) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let params = ModelParams::init(channels, seed ^ 0xabcd);
    let data = Array3::from_shape_fn((2, channels, time), |_| rng.random_range(-2.0..2.0));
    let labels = vec![rng.random_range(0..3), rng.random_range(0..3)];
    (params, SampleBatch::new(data, labels).unwrap())
}

#[test]
fn scalar_forward_agrees_with_batched_forward() {
    for seed in 0..4 {
        let (params, batch) = tiny_case(seed, 3, 9);
        let oracle = ScalarModel::new(&batch);
        let logits = model_forward(batch.data.view(), &params).unwrap();
        let loss = cogload::nncore::cross_entropy(logits.view(), &batch.labels).unwrap().0;
        let reference = oracle.loss(&ScalarModel::flatten(&params));
        assert!((loss - reference).abs() < 1e-13, "{loss} vs {reference}");
    }
}

#[test]
fn lane_path_matches_scalar_loss_for_every_stage() {
    let (params, batch) = tiny_case(3, 3, 8);
    let oracle = ScalarModel::new(&batch);
    let flat = ScalarModel::flatten(&params);
    let reference = oracle.loss(&flat);
    let mut start = 0;
    for (name, t) in params.tensors() {
        for i in [start, start + t.len() / 2, start + t.len() - 1] {
            let got = oracle.lane_loss(&flat, i);
            assert!((got - reference).abs() < 1e-13, "{name} index {i}: {got} vs {reference}");
        }
        start += t.len();
    }
}

#[test]
fn vector_tanh_tracks_std() {
    let xs: Vec<f64> = (-4000..=4000).map(|k| k as f64 * 0.005).chain([1e-9, -1e-300, 0.0, 30.0, -800.0]).collect();
    let mut ys = xs.clone();
    tanh_inplace(&mut ys);
    for (x, y) in xs.iter().zip(&ys) {
        assert!((x.tanh() - y).abs() <= 4e-16, "tanh({x}) = {y}, std {}", x.tanh());
    }
}

#[test]
fn tiny_model_gradients_match_central_differences() {
    let (params, batch) = tiny_case(101, 2, 6);
    let (_, grads) = model_backward(&batch, &params).unwrap();
    let analytic = ScalarModel::flatten(&grads);
    let oracle = ScalarModel::new(&batch);
    let fd = oracle.central_differences(&ScalarModel::flatten(&params), 1e-3, 4);
    let mut worst = (0.0, 0);
    for (i, (&a, &n)) in analytic.iter().zip(&fd.numeric).enumerate() {
        let e = rel_error(a, n, 1e-7);
        if e > worst.0 {
            worst = (e, i);
        }
    }
    let (e, i) = worst;
    assert!(e <= 1e-4, "worst relative error {e:e} at parameter {i}: analytic {} vs numeric {}", analytic[i], fd.numeric[i]);
}
