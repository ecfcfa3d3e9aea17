// Shared network checks for the core and acceptance suites.
#![allow(dead_code)]

use prunevolve_core::net::{BatchNorm, Conv2d, Dense, Layer, Mode, Network};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

pub fn normal_vec(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    (0..n).map(|_| rng.random::<f64>() * 2.0 - 1.0).collect()
}

pub fn randomize_bn(net: &mut Network, rng: &mut ChaCha8Rng) {
    for layer in &mut net.layers {
        if let Layer::BatchNorm(b) = layer {
            for k in 0..b.gamma.len() {
                b.gamma[k] = 0.5 + rng.random::<f64>();
                b.beta[k] = rng.random::<f64>() - 0.5;
                b.running_mean[k] = rng.random::<f64>() - 0.5;
                b.running_var[k] = 0.5 + rng.random::<f64>();
            }
        }
    }
}

/// Conv, batch-norm on maps and features, ReLU, pooling, flatten and dense.
pub fn every_kind(rng: &mut ChaCha8Rng, stride: usize) -> Network {
    let conv = Conv2d::init(2, 3, 3, stride, rng);
    let probe = Network::new(
        vec![2, 9, 9],
        vec![Layer::Conv2d(conv.clone()), Layer::MaxPool2, Layer::Flatten],
    )
    .unwrap();
    let flat = probe.output_len();
    let mut net = Network::new(
        vec![2, 9, 9],
        vec![
            Layer::Conv2d(conv),
            Layer::BatchNorm(BatchNorm::new(3)),
            Layer::Relu,
            Layer::MaxPool2,
            Layer::Flatten,
            Layer::Dense(Dense::init(flat, 5, rng)),
            Layer::BatchNorm(BatchNorm::new(5)),
            Layer::Relu,
            Layer::Dense(Dense::init(5, 3, rng)),
        ],
    )
    .unwrap();
    randomize_bn(&mut net, rng);
    net
}

fn loss(net: &Network, x: &[f64], n: usize, labels: &[usize], mode: Mode) -> f64 {
    let pass = net.forward(x, n, mode).unwrap();
    net.backward(&pass, labels).unwrap().0
}

/// Worst relative error between backprop and central differences.
pub fn gradient_error(net: &Network, mode: Mode, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let n = 4;
    let d: usize = net.input_shape.iter().product();
    let x = normal_vec(&mut rng, n * d);
    let labels: Vec<usize> = (0..n).map(|i| i % 3 + 1).collect();
    let pass = net.forward(&x, n, mode).unwrap();
    let (_, grads) = net.backward(&pass, &labels).unwrap();
    let eps = 1e-4;
    let mut worst = 0.0f64;
    for (pi, g) in grads.iter().enumerate() {
        for i in 0..g.len() {
            let mut plus = net.clone();
            plus.params_mut()[pi][i] += eps;
            let mut minus = net.clone();
            minus.params_mut()[pi][i] -= eps;
            let numeric = (loss(&plus, &x, n, &labels, mode) - loss(&minus, &x, n, &labels, mode))
                / (2.0 * eps);
            let scale = g[i].abs().max(numeric.abs()).max(1e-6);
            worst = worst.max((g[i] - numeric).abs() / scale);
        }
    }
    worst
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| (x - y).abs())
        .fold(0.0, f64::max)
}

/// Worst output difference between a pruned network and the masked original
/// over 100 random inputs.
pub fn masking_error(net: &Network, layer: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let channels = net.channels(layer).unwrap();
    let mut keep: Vec<bool> = (0..channels).map(|_| rng.random_bool(0.5)).collect();
    keep[rng.random_range(0..channels)] = true;
    let pruned = net.prune_channels(layer, &keep).unwrap();
    let d: usize = net.input_shape.iter().product();
    let mut worst = 0.0f64;
    for _ in 0..100 {
        let x = normal_vec(&mut rng, d);
        let masked = net.forward_masked(&x, 1, Mode::Eval, layer, &keep).unwrap();
        let small = pruned.forward(&x, 1, Mode::Eval).unwrap();
        worst = worst.max(max_abs_diff(masked.logits(), small.logits()));
    }
    worst
}
