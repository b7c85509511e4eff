//! Binarization penalty, barrier schedule, hardening, and the regularized
//! training loop.
//!
//! The penalty on a weight is `|w - 1| * |w + 1| = |w^2 - 1|`: zero exactly
//! on {-1, +1}, growing away from them. Scaled by a factor `alpha` that is
//! multiplied by a constant each mini-batch, it pulls selected layers
//! toward binary values without trapping early training.

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::WeightMatrix;
use crate::nn::{
    backward_into, data_loss, evaluate, forward, sgd_step, Dataset, Gradients, Network,
    TrainConfig,
};

/// Closeness threshold used when the training trace reports per-layer
/// binarization progress.
pub const TRACE_PROGRESS_EPS: f64 = 0.1;

/// Multiplicative barrier schedule on the penalty weight.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BarrierState {
    pub alpha: f64,
    pub c: f64,
    pub iteration: u64,
}

impl BarrierState {
    pub fn new(alpha0: f64, c: f64) -> Self {
        Self {
            alpha: alpha0,
            c,
            iteration: 0,
        }
    }
}

/// One barrier update: `alpha <- alpha * c`.
pub fn barrier_step(state: BarrierState) -> BarrierState {
    BarrierState {
        alpha: state.alpha * state.c,
        c: state.c,
        iteration: state.iteration + 1,
    }
}

/// The regularized cost split into its two terms.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RegularizedCost {
    pub data_term: f64,
    pub penalty_term: f64,
    pub alpha: f64,
}

impl RegularizedCost {
    pub fn total(&self) -> f64 {
        self.data_term + self.alpha * self.penalty_term
    }
}

/// Sum over entries of `|w^2 - 1|`; zero iff every entry is exactly +-1.
pub fn penalty(w: &WeightMatrix) -> f64 {
    w.values().iter().map(|&v| (v * v - 1.0).abs()).sum()
}

/// Entry-wise derivative of `|w^2 - 1|`: `-2w` inside the unit interval,
/// `+2w` outside, zero at |w| = 1 (the attractors).
pub fn penalty_gradient(w: &WeightMatrix) -> WeightMatrix {
    let values = w
        .values()
        .iter()
        .map(|&v| {
            let a = v.abs();
            if a < 1.0 {
                -2.0 * v
            } else if a > 1.0 {
                2.0 * v
            } else {
                0.0
            }
        })
        .collect();
    WeightMatrix::new(w.rows(), w.cols(), values).expect("same shape")
}

/// Fraction of entries within `eps` of +1 or -1.
pub fn binarization_progress(w: &WeightMatrix, eps: f64) -> f64 {
    assert!(eps > 0.0, "eps must be positive");
    let near = w
        .values()
        .iter()
        .filter(|&&v| (v - 1.0).abs().min((v + 1.0).abs()) <= eps)
        .count();
    near as f64 / w.values().len() as f64
}

/// Projects every entry onto {-1, +1} by sign; zero maps to +1.
pub fn harden(w: &WeightMatrix) -> WeightMatrix {
    let values = w
        .values()
        .iter()
        .map(|&v| if v < 0.0 { -1.0 } else { 1.0 })
        .collect();
    WeightMatrix::new(w.rows(), w.cols(), values).expect("same shape")
}

/// Hardens the listed layers of a network in place.
pub fn harden_layers(net: &mut Network, layers: &[usize]) -> Result<()> {
    for &idx in layers {
        if idx >= net.num_layers() {
            return Err(Error::InvalidConfig(format!(
                "harden layer {idx} out of range for {} layers",
                net.num_layers()
            )));
        }
    }
    for &idx in layers {
        let layer = &mut net.layers_mut()[idx];
        layer.weights = harden(&layer.weights);
    }
    Ok(())
}

/// Per-epoch record of the training trace.
#[derive(Debug, Clone)]
pub struct EpochStats {
    pub epoch: usize,
    /// Mean per-example data loss over the epoch.
    pub data_loss: f64,
    /// Penalty summed over the regularized layers at end of epoch.
    pub penalty: f64,
    /// Barrier weight at end of epoch.
    pub alpha: f64,
    /// Error on the evaluation set, when one was supplied.
    pub test_error: Option<f64>,
    /// Binarization progress (eps = 0.1) for every layer.
    pub progress: Vec<f64>,
}

/// Full training trace, one row per epoch.
#[derive(Debug, Clone, Default)]
pub struct TrainTrace {
    pub epochs: Vec<EpochStats>,
}

/// Mini-batch SGD on `data_term + alpha * penalty`, the penalty restricted
/// to the configured layers, with `alpha` following the barrier schedule
/// once per mini-batch.
///
/// With `alpha0 = 0` and `c = 1` this is plain unregularized training: the
/// penalty never contributes and the trajectory is bit-identical.
pub fn train_regularized(
    net: &Network,
    data: &Dataset,
    eval_data: Option<&Dataset>,
    cfg: &TrainConfig,
) -> Result<(Network, TrainTrace)> {
    cfg.validate(net)?;
    if data.is_empty() {
        return Err(Error::EmptyInput("cannot train on empty dataset".into()));
    }
    if data.inputs[0].len() != net.input_dim() || data.classes != net.output_dim() {
        return Err(Error::ShapeMismatch(format!(
            "dataset {}d/{} classes vs network {}d/{} outputs",
            data.inputs[0].len(),
            data.classes,
            net.input_dim(),
            net.output_dim()
        )));
    }

    let mut net = net.clone();
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut barrier = BarrierState::new(cfg.alpha0, cfg.barrier_c);
    let mut trace = TrainTrace::default();
    let mut order: Vec<usize> = (0..data.len()).collect();
    let mut batch_grads = Gradients::zeros_like(&net);

    for epoch in 1..=cfg.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss_sum = 0.0;

        for batch in order.chunks(cfg.batch_size) {
            batch_grads.zero();
            for &i in batch {
                let acts = forward(&net, &data.inputs[i])?;
                let loss = data_loss(acts.output(), &data.targets[i])?;
                if !loss.is_finite() {
                    return Err(Error::TrainingDiverged {
                        epoch,
                        detail: "non-finite data loss".into(),
                    });
                }
                epoch_loss_sum += loss;
                backward_into(&net, &acts, &data.targets[i], &mut batch_grads)?;
            }
            batch_grads.scale(1.0 / batch.len() as f64);

            if barrier.alpha != 0.0 {
                for &idx in &cfg.regularized_layers {
                    let pg = penalty_gradient(&net.layers()[idx].weights);
                    for (g, p) in batch_grads.weights[idx]
                        .values_mut()
                        .iter_mut()
                        .zip(pg.values())
                    {
                        *g += barrier.alpha * p;
                    }
                }
            }

            sgd_step(&mut net, &batch_grads, cfg.learning_rate)
                .map_err(|e| match e {
                    Error::NumericOverflow(d) => Error::TrainingDiverged { epoch, detail: d },
                    other => other,
                })?;
            barrier = barrier_step(barrier);
        }

        let penalty_sum: f64 = cfg
            .regularized_layers
            .iter()
            .map(|&idx| penalty(&net.layers()[idx].weights))
            .sum();
        if !penalty_sum.is_finite() {
            return Err(Error::TrainingDiverged {
                epoch,
                detail: "non-finite penalty".into(),
            });
        }
        let test_error = match eval_data {
            Some(d) => Some(evaluate(&net, d)?),
            None => None,
        };
        trace.epochs.push(EpochStats {
            epoch,
            data_loss: epoch_loss_sum / data.len() as f64,
            penalty: penalty_sum,
            alpha: barrier.alpha,
            test_error,
            progress: net
                .layers()
                .iter()
                .map(|l| binarization_progress(&l.weights, TRACE_PROGRESS_EPS))
                .collect(),
        });
    }

    Ok((net, trace))
}
