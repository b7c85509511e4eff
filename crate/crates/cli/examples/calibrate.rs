//! Scratch calibration harness for the desk-scale experiment defaults.

use std::time::Instant;

use binq_core::pq::derive_seed;
use binq_core::*;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

/// MNIST-shaped surrogate: 784 features in [0,1] quantized to u8, 10
/// classes as noisy blobs around seeded class means.
fn surrogate(seed: u64, n: usize, gamma: f64, sigma: f64) -> Dataset {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let means: Vec<Vec<f64>> = (0..10)
        .map(|_| (0..784).map(|_| 0.5 + gamma * (rng.gen::<f64>() - 0.5)).collect())
        .collect();
    let mut inputs = Vec::with_capacity(n);
    let mut targets = Vec::with_capacity(n);
    for i in 0..n {
        let class = i % 10;
        let x: Vec<f64> = means[class]
            .iter()
            .map(|&m| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                let v = (m + sigma * noise).clamp(0.0, 1.0);
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
    let args: Vec<String> = std::env::args().collect();
    let gamma: f64 = args.get(1).and_then(|s| s.parse().ok()).unwrap_or(0.12);
    let sigma: f64 = args.get(2).and_then(|s| s.parse().ok()).unwrap_or(0.25);
    let seed: u64 = args.get(3).and_then(|s| s.parse().ok()).unwrap_or(1);

    println!("gamma {gamma} sigma {sigma} seed {seed}");
    let train = surrogate(derive_seed(seed, 100), 10_000, gamma, sigma);
    let test = surrogate(derive_seed(seed, 101), 2_000, gamma, sigma);

    let sizes = [784, 128, 64, 10];
    let t0 = Instant::now();

    // Baseline.
    let base_cfg = TrainConfig {
        learning_rate: 0.1,
        batch_size: 32,
        epochs: 30,
        alpha0: 0.0,
        barrier_c: 1.0,
        seed,
        regularized_layers: vec![],
    };
    let net = init_network(&sizes, seed).unwrap();
    let (baseline, trace) = train_regularized(&net, &train, Some(&test), &base_cfg).unwrap();
    let base_err = evaluate(&baseline, &test).unwrap();
    println!(
        "baseline: err {base_err:.4} (epoch1 {:.4}, epoch10 {:.4}) in {:.1}s",
        trace.epochs[0].test_error.unwrap(),
        trace.epochs[9].test_error.unwrap(),
        t0.elapsed().as_secs_f64()
    );

    // Post-hoc harden layer 0 / layers 0-1 of the baseline.
    for layers in [vec![0usize], vec![0, 1]] {
        let mut h = baseline.clone();
        harden_layers(&mut h, &layers).unwrap();
        let e = evaluate(&h, &test).unwrap();
        println!("post-hoc harden {layers:?}: err {e:.4} (delta {:+.4})", e - base_err);
    }

    // Regularized last-two-layers run.
    let t1 = Instant::now();
    let reg_cfg = TrainConfig {
        alpha0: 1e-5,
        barrier_c: 1.001,
        regularized_layers: vec![1, 2],
        ..base_cfg.clone()
    };
    let (reg, rtrace) = train_regularized(&net, &train, Some(&test), &reg_cfg).unwrap();
    for row in rtrace.epochs.iter().filter(|r| r.epoch % 5 == 0) {
        println!(
            "reg epoch {:2}: err {:.4} alpha {:.5} progress {:?}",
            row.epoch,
            row.test_error.unwrap(),
            row.alpha,
            row.progress.iter().map(|p| (p * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        );
    }
    println!("reg training took {:.1}s", t1.elapsed().as_secs_f64());

    let reg_err = evaluate(&reg, &test).unwrap();
    let mut hardened = reg.clone();
    harden_layers(&mut hardened, &[1, 2]).unwrap();
    let hard_err = evaluate(&hardened, &test).unwrap();
    println!("reg err {reg_err:.4}; hardened{{1,2}} err {hard_err:.4} (delta vs baseline {:+.4})", hard_err - base_err);

    // Output-layer-only regularize+harden (criterion 3a analog).
    let out_cfg = TrainConfig {
        alpha0: 1e-5,
        barrier_c: 1.001,
        regularized_layers: vec![2],
        ..base_cfg.clone()
    };
    let (reg_out, _) = train_regularized(&net, &train, Some(&test), &out_cfg).unwrap();
    let mut reg_out_h = reg_out.clone();
    harden_layers(&mut reg_out_h, &[2]).unwrap();
    let out_err = evaluate(&reg_out_h, &test).unwrap();
    println!("reg+harden {{2}} only: err {out_err:.4} (delta vs baseline {:+.4})", out_err - base_err);

    // Sweep comparison on layer set {1, 2}.
    println!("--- sweep rows (layers 1+2) ---");
    for (name, model, binary) in [("plain", &baseline, false), ("binary", &hardened, true)] {
        for s in [2usize] {
            for k in [4usize, 8, 16] {
                let specs: Vec<LayerQuantSpec> = [1usize, 2]
                    .iter()
                    .map(|&layer| LayerQuantSpec { layer, s, k, binary_codebook: binary })
                    .collect();
                let (compressed, per_layer, _) = quantize_network(model, &specs, seed).unwrap();
                let set = RateAccount::aggregate(&[per_layer[1], per_layer[2]]);
                let err = evaluate(&compressed.to_network().unwrap(), &test).unwrap();
                println!(
                    "{name} s={s} k={k}: set rate {:.2}, err {err:.4} (delta vs base {:+.4})",
                    set.measured_rate,
                    err - base_err
                );
            }
        }
    }
    println!("total {:.1}s", t0.elapsed().as_secs_f64());
}
