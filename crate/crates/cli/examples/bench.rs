//! Hyperparameter probe for the MNIST-shaped surrogate (shared class means).
use binq_core::pq::derive_seed;
use binq_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

fn class_means(task_seed: u64, gamma: f64) -> Vec<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(task_seed);
    (0..10)
        .map(|_| (0..784).map(|_| 0.5 + gamma * (rng.gen::<f64>() - 0.5)).collect())
        .collect()
}

fn surrogate(means: &[Vec<f64>], split_seed: u64, n: usize, sigma: f64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(split_seed);
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 10;
        let x: Vec<f64> = means[class]
            .iter()
            .map(|&m| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                let v: f64 = (m + sigma * noise).clamp(0.0, 1.0);
                (v * 255.0).round() / 255.0
            })
            .collect();
        inputs.push(x);
        let mut t = vec![0.0; 10];
        t[class] = 1.0;
        targets.push(t);
    }
    Dataset { inputs, targets, classes: 10 }
}

fn main() {
    for &(gamma, sigma) in &[(0.12, 0.25), (0.15, 0.25), (0.20, 0.25)] {
        let means = class_means(derive_seed(1, 99), gamma);
        let train = surrogate(&means, derive_seed(1, 100), 10_000, sigma);
        let test = surrogate(&means, derive_seed(1, 101), 2_000, sigma);
        for &lr in &[0.1] {
            let net = init_network(&[784, 128, 64, 10], 1).unwrap();
            let cfg = TrainConfig {
                learning_rate: lr,
                batch_size: 32,
                epochs: 30,
                alpha0: 0.0,
                barrier_c: 1.0,
                seed: 1,
                regularized_layers: vec![],
            };
            let (trained, trace) = train_regularized(&net, &train, None, &cfg).unwrap();
            let err = evaluate(&trained, &test).unwrap();
            println!(
                "gamma {gamma} sigma {sigma} lr {lr}: err {err:.4} (loss e1 {:.4} -> e15 {:.4})",
                trace.epochs[0].data_loss,
                trace.epochs[29].data_loss
            );
        }
    }
}
