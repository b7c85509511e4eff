//! Training, binarization, and product-quantization compression of small
//! dense networks.
//!
//! The pipeline this crate implements: train a fully-connected network
//! under an extra penalty that attracts selected layers' weights to
//! {-1, +1}, harden those layers to exact signs, compress layers with
//! per-segment k-means codebooks, and account for the resulting storage
//! precisely, both by formula and by serialized payload bits.

pub mod data;
pub mod error;
pub mod matrix;
pub mod nn;
pub mod pq;
pub mod regularizer;
pub mod store;

pub use error::{Error, Result};
pub use matrix::WeightMatrix;
pub use nn::{
    argmax, backward, backward_into, data_loss, evaluate, forward, init_network, sgd_step,
    Activation, Activations, Dataset, Gradients, Layer, Network, TrainConfig,
};
pub use pq::{
    compression_rate, kmeans, partition, quantize_layer, quantize_network, reconstruct,
    Codebook, CompressedLayer, CompressedNetwork, KmeansParams, KmeansResult, LayerQuantSpec,
    LayerWeights, QuantizedLayer, RateAccount,
};
pub use regularizer::{
    barrier_step, binarization_progress, harden, harden_layers, penalty, penalty_gradient,
    train_regularized, BarrierState, EpochStats, RegularizedCost, TrainTrace,
};
pub use store::{
    bias_size_bits, load_dense, load_model, measured_size_bits, save_dense, save_model,
};
