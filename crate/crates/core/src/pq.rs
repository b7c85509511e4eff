//! Product quantization of weight matrices: column-wise partitioning,
//! per-segment k-means codebooks, reconstruction, and compression-rate
//! accounting for float and binary codebooks.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::matrix::WeightMatrix;
use crate::nn::{Activation, Layer, Network};

/// Bits per weight of an uncompressed float matrix.
pub const DENSE_BITS_PER_WEIGHT: u64 = 32;

/// Stable per-subtask seed derivation so segment and layer work can run
/// in any order without changing results.
pub fn derive_seed(base: u64, index: u64) -> u64 {
    base.wrapping_add(0x9e37_79b9_7f4a_7c15u64.wrapping_mul(index.wrapping_add(1)))
}

/// Index width in bits: `ceil(log2 k)`, zero for a single centroid.
pub fn bits_per_index(k: usize) -> u32 {
    if k <= 1 {
        0
    } else {
        (k - 1).ilog2() + 1
    }
}

/// The k centroids of one segment, each of width `dim = n / s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Codebook {
    pub dim: usize,
    pub centroids: Vec<Vec<f64>>,
}

impl Codebook {
    pub fn k(&self) -> usize {
        self.centroids.len()
    }
}

/// Lloyd/k-means++ parameters.
#[derive(Debug, Clone, Copy)]
pub struct KmeansParams {
    pub max_iter: usize,
    pub tol: f64,
    /// Independent k-means++ starts; the run with the lowest final
    /// objective wins (ties to the earliest start). Each start derives
    /// its own seed, so results stay deterministic.
    pub attempts: usize,
}

impl Default for KmeansParams {
    fn default() -> Self {
        Self {
            max_iter: 100,
            tol: 1e-6,
            attempts: 8,
        }
    }
}

/// Outcome of one k-means run. `objective_history` holds the clustering
/// cost recorded after each assignment pass, which Lloyd guarantees to be
/// non-increasing.
#[derive(Debug, Clone)]
pub struct KmeansResult {
    pub codebook: Codebook,
    pub assignments: Vec<usize>,
    pub objective: f64,
    pub objective_history: Vec<f64>,
}

#[inline]
fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum()
}

fn mean_point(points: &[Vec<f64>]) -> Vec<f64> {
    let dim = points[0].len();
    let mut mean = vec![0.0; dim];
    for p in points {
        for (m, v) in mean.iter_mut().zip(p) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= points.len() as f64;
    }
    mean
}

/// Nearest centroid per point, ties to the lowest index.
fn assign_points(points: &[Vec<f64>], centroids: &[Vec<f64>]) -> Vec<usize> {
    points
        .iter()
        .map(|p| {
            let mut best = 0;
            let mut best_d = squared_distance(p, &centroids[0]);
            for (j, c) in centroids.iter().enumerate().skip(1) {
                let d = squared_distance(p, c);
                if d < best_d {
                    best_d = d;
                    best = j;
                }
            }
            best
        })
        .collect()
}

fn clustering_cost(points: &[Vec<f64>], centroids: &[Vec<f64>], assignments: &[usize]) -> f64 {
    points
        .iter()
        .zip(assignments)
        .map(|(p, &a)| squared_distance(p, &centroids[a]))
        .sum()
}

/// k-means++ seeding. When fewer distinct points than centroids remain,
/// the surplus centroids are set to the mean of all points.
fn kmeans_plus_plus(points: &[Vec<f64>], k: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let mut centroids: Vec<Vec<f64>> = Vec::with_capacity(k);
    centroids.push(points[rng.gen_range(0..points.len())].clone());

    let mut dist2: Vec<f64> = points
        .iter()
        .map(|p| squared_distance(p, &centroids[0]))
        .collect();

    while centroids.len() < k {
        let total: f64 = dist2.iter().sum();
        if total <= 0.0 {
            // Every point coincides with a centroid; pad with the mean.
            let mean = mean_point(points);
            while centroids.len() < k {
                centroids.push(mean.clone());
            }
            break;
        }
        let mut u = rng.gen::<f64>() * total;
        let mut chosen = points.len() - 1;
        for (i, &d) in dist2.iter().enumerate() {
            if u < d {
                chosen = i;
                break;
            }
            u -= d;
        }
        let c = points[chosen].clone();
        for (d, p) in dist2.iter_mut().zip(points) {
            let nd = squared_distance(p, &c);
            if nd < *d {
                *d = nd;
            }
        }
        centroids.push(c);
    }
    centroids
}

/// Moves each empty cluster onto the point currently farthest from its
/// centroid (ties to the lowest point index). Clusters that cannot gain a
/// point (zero cost everywhere) keep their centroid and stay empty.
fn repair_empty_clusters(
    points: &[Vec<f64>],
    centroids: &mut [Vec<f64>],
    assignments: &mut [usize],
) {
    let k = centroids.len();
    let mut counts = vec![0usize; k];
    for &a in assignments.iter() {
        counts[a] += 1;
    }
    for e in 0..k {
        if counts[e] > 0 {
            continue;
        }
        let mut far = 0usize;
        let mut far_d = -1.0;
        for (z, p) in points.iter().enumerate() {
            if counts[assignments[z]] <= 1 {
                continue; // stealing would just move the hole
            }
            let d = squared_distance(p, &centroids[assignments[z]]);
            if d > far_d {
                far_d = d;
                far = z;
            }
        }
        if far_d > 0.0 {
            counts[assignments[far]] -= 1;
            centroids[e] = points[far].clone();
            assignments[far] = e;
            counts[e] = 1;
        }
    }
}

/// Lloyd's algorithm from k-means++ seeding, deterministic per seed.
/// Runs `params.attempts` independent starts and keeps the best.
pub fn kmeans(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    params: KmeansParams,
) -> Result<KmeansResult> {
    if k == 0 {
        return Err(Error::InvalidK("k must be at least 1".into()));
    }
    if points.is_empty() {
        return Err(Error::EmptyInput("k-means needs at least one point".into()));
    }
    let dim = points[0].len();
    if points.iter().any(|p| p.len() != dim) {
        return Err(Error::ShapeMismatch("ragged k-means points".into()));
    }

    let attempts = params.attempts.max(1);
    let mut best: Option<KmeansResult> = None;
    for attempt in 0..attempts {
        let result = kmeans_single_run(points, k, derive_seed(seed, attempt as u64), params);
        if best.as_ref().is_none_or(|b| result.objective < b.objective) {
            best = Some(result);
        }
        if best.as_ref().unwrap().objective == 0.0 {
            break;
        }
    }
    Ok(best.unwrap())
}

fn kmeans_single_run(
    points: &[Vec<f64>],
    k: usize,
    seed: u64,
    params: KmeansParams,
) -> KmeansResult {
    let dim = points[0].len();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids = kmeans_plus_plus(points, k, &mut rng);
    let mut assignments;
    let mut history = Vec::new();
    let mut prev = f64::INFINITY;

    loop {
        assignments = assign_points(points, &centroids);
        repair_empty_clusters(points, &mut centroids, &mut assignments);
        let obj = clustering_cost(points, &centroids, &assignments);
        assert!(
            obj <= prev * (1.0 + 1e-12) + 1e-12,
            "Lloyd objective increased: {prev} -> {obj}"
        );
        history.push(obj);
        if obj == 0.0
            || history.len() >= params.max_iter
            || (prev.is_finite() && prev - obj <= params.tol * prev)
        {
            break;
        }
        prev = obj;

        // Update step: means of the assigned points; empty clusters keep
        // their centroid.
        let mut sums = vec![vec![0.0; dim]; k];
        let mut counts = vec![0usize; k];
        for (p, &a) in points.iter().zip(&assignments) {
            counts[a] += 1;
            for (s, v) in sums[a].iter_mut().zip(p) {
                *s += v;
            }
        }
        for (j, count) in counts.iter().enumerate() {
            if *count > 0 {
                for (c, s) in centroids[j].iter_mut().zip(&sums[j]) {
                    *c = s / *count as f64;
                }
            }
        }
    }

    let objective = *history.last().unwrap();
    KmeansResult {
        codebook: Codebook {
            dim,
            centroids,
        },
        assignments,
        objective,
        objective_history: history,
    }
}

/// A product-quantized matrix: `s` per-segment codebooks plus an `m x s`
/// table of centroid indices, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct QuantizedLayer {
    pub m: usize,
    pub n: usize,
    pub s: usize,
    pub k: usize,
    pub codebooks: Vec<Codebook>,
    pub assignments: Vec<u32>,
    pub binary_codebook: bool,
}

impl QuantizedLayer {
    pub fn validate(&self) -> Result<()> {
        if self.s == 0 || !self.n.is_multiple_of(self.s) {
            return Err(Error::CorruptModel(format!(
                "width {} not divisible into {} segments",
                self.n, self.s
            )));
        }
        let dim = self.n / self.s;
        if self.codebooks.len() != self.s {
            return Err(Error::CorruptModel("segment/codebook count mismatch".into()));
        }
        for cb in &self.codebooks {
            if cb.k() != self.k || cb.dim != dim {
                return Err(Error::CorruptModel("codebook shape mismatch".into()));
            }
            if cb.centroids.iter().any(|c| c.len() != dim) {
                return Err(Error::CorruptModel("centroid width mismatch".into()));
            }
            if self.binary_codebook
                && cb
                    .centroids
                    .iter()
                    .any(|c| c.iter().any(|&v| v != 1.0 && v != -1.0))
            {
                return Err(Error::CorruptModel(
                    "binary codebook holds non-binary entries".into(),
                ));
            }
        }
        if self.assignments.len() != self.m * self.s {
            return Err(Error::CorruptModel("assignment table size mismatch".into()));
        }
        if self.assignments.iter().any(|&a| a as usize >= self.k) {
            return Err(Error::CorruptModel("assignment index out of range".into()));
        }
        Ok(())
    }

    /// Bits needed for the index table at `ceil(log2 k)` per entry.
    pub fn index_bits(&self) -> u64 {
        self.m as u64 * self.s as u64 * bits_per_index(self.k) as u64
    }

    /// Bits needed for the codebooks: 32 per entry, or 1 when binary.
    pub fn codebook_bits(&self) -> u64 {
        let entries = self.k as u64 * self.n as u64;
        if self.binary_codebook {
            entries
        } else {
            entries * DENSE_BITS_PER_WEIGHT
        }
    }
}

/// Splits `W` column-wise into `s` equal-width sub-matrices.
pub fn partition(w: &WeightMatrix, s: usize) -> Result<Vec<WeightMatrix>> {
    if s == 0 || !w.cols().is_multiple_of(s) {
        return Err(Error::IndivisibleWidth {
            width: w.cols(),
            segments: s,
        });
    }
    let dim = w.cols() / s;
    let mut parts = Vec::with_capacity(s);
    for i in 0..s {
        let mut values = Vec::with_capacity(w.rows() * dim);
        for row in 0..w.rows() {
            let r = w.row(row);
            values.extend_from_slice(&r[i * dim..(i + 1) * dim]);
        }
        parts.push(WeightMatrix::new(w.rows(), dim, values)?);
    }
    Ok(parts)
}

/// Quantizes one matrix: k-means per segment, then hardened centroids when
/// a binary codebook is requested.
pub fn quantize_layer(
    w: &WeightMatrix,
    s: usize,
    k: usize,
    seed: u64,
    binary_codebook: bool,
) -> Result<QuantizedLayer> {
    let segments = partition(w, s)?;
    let mut codebooks = Vec::with_capacity(s);
    let mut per_segment_assignments = Vec::with_capacity(s);
    for (i, seg) in segments.iter().enumerate() {
        let points: Vec<Vec<f64>> = (0..seg.rows()).map(|z| seg.row(z).to_vec()).collect();
        let result = kmeans(&points, k, derive_seed(seed, i as u64), KmeansParams::default())?;
        let mut codebook = result.codebook;
        if binary_codebook {
            for c in &mut codebook.centroids {
                for v in c.iter_mut() {
                    *v = if *v < 0.0 { -1.0 } else { 1.0 };
                }
            }
        }
        codebooks.push(codebook);
        per_segment_assignments.push(result.assignments);
    }

    let mut assignments = Vec::with_capacity(w.rows() * s);
    for z in 0..w.rows() {
        for seg in &per_segment_assignments {
            assignments.push(seg[z] as u32);
        }
    }
    let q = QuantizedLayer {
        m: w.rows(),
        n: w.cols(),
        s,
        k,
        codebooks,
        assignments,
        binary_codebook,
    };
    q.validate()?;
    Ok(q)
}

/// Rebuilds the dense matrix: row `z` of segment `i` becomes the centroid
/// its index points at.
pub fn reconstruct(q: &QuantizedLayer) -> Result<WeightMatrix> {
    q.validate().map_err(|_| {
        Error::CorruptModel("cannot reconstruct from invalid quantized layer".into())
    })?;
    let dim = q.n / q.s;
    let mut values = vec![0.0; q.m * q.n];
    for z in 0..q.m {
        for i in 0..q.s {
            let idx = q.assignments[z * q.s + i] as usize;
            let centroid = &q.codebooks[i].centroids[idx];
            let start = z * q.n + i * dim;
            values[start..start + dim].copy_from_slice(centroid);
        }
    }
    WeightMatrix::new(q.m, q.n, values)
}

/// The printed compression-rate formulas.
///
/// Plain codebooks:  `32mn / (log2(k) m s + 32 k n)`.
/// Binary codebooks: `32mn / (k n + log2(k) m s)`.
pub fn compression_rate(
    m: usize,
    n: usize,
    s: usize,
    k: usize,
    binary_codebook: bool,
) -> Result<f64> {
    if k < 2 {
        return Err(Error::InvalidK(format!(
            "compression rate needs k >= 2, got {k}"
        )));
    }
    if s == 0 || !n.is_multiple_of(s) {
        return Err(Error::IndivisibleWidth {
            width: n,
            segments: s,
        });
    }
    let (m, n, s, k) = (m as f64, n as f64, s as f64, k as f64);
    let original = 32.0 * m * n;
    let index = k.log2() * m * s;
    let denom = if binary_codebook {
        k * n + index
    } else {
        32.0 * k * n + index
    };
    Ok(original / denom)
}

/// Bit accounting for one layer or an aggregate of layers. All counts
/// cover weights only; biases are tracked by the store separately.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RateAccount {
    pub original_bits: u64,
    pub index_bits: u64,
    pub codebook_bits: u64,
    /// Bits of weights kept dense (uncompressed layers in an aggregate).
    pub dense_bits: u64,
    /// Rate from the printed formula (exact log2), 1.0 for dense layers.
    pub formula_rate: f64,
    /// Rate from actual payload bits at `ceil(log2 k)` per index.
    pub measured_rate: f64,
}

impl RateAccount {
    pub fn dense(m: usize, n: usize) -> Self {
        let bits = DENSE_BITS_PER_WEIGHT * m as u64 * n as u64;
        Self {
            original_bits: bits,
            index_bits: 0,
            codebook_bits: 0,
            dense_bits: bits,
            formula_rate: 1.0,
            measured_rate: 1.0,
        }
    }

    pub fn quantized(q: &QuantizedLayer) -> Result<Self> {
        let original_bits = DENSE_BITS_PER_WEIGHT * q.m as u64 * q.n as u64;
        let index_bits = q.index_bits();
        let codebook_bits = q.codebook_bits();
        let formula_rate = compression_rate(q.m, q.n, q.s, q.k, q.binary_codebook)?;
        Ok(Self {
            original_bits,
            index_bits,
            codebook_bits,
            dense_bits: 0,
            formula_rate,
            measured_rate: original_bits as f64 / (index_bits + codebook_bits) as f64,
        })
    }

    pub fn compressed_bits(&self) -> u64 {
        self.index_bits + self.codebook_bits + self.dense_bits
    }

    /// Aggregates accounts by summing bit pools; the formula rate of the
    /// aggregate divides original bits by the sum of formula denominators.
    pub fn aggregate(accounts: &[RateAccount]) -> Self {
        let original_bits: u64 = accounts.iter().map(|a| a.original_bits).sum();
        let index_bits: u64 = accounts.iter().map(|a| a.index_bits).sum();
        let codebook_bits: u64 = accounts.iter().map(|a| a.codebook_bits).sum();
        let dense_bits: u64 = accounts.iter().map(|a| a.dense_bits).sum();
        let formula_denom: f64 = accounts
            .iter()
            .map(|a| a.original_bits as f64 / a.formula_rate)
            .sum();
        let measured = (index_bits + codebook_bits + dense_bits) as f64;
        Self {
            original_bits,
            index_bits,
            codebook_bits,
            dense_bits,
            formula_rate: original_bits as f64 / formula_denom,
            measured_rate: original_bits as f64 / measured,
        }
    }
}

/// Weights of one stored layer: dense or product-quantized.
#[derive(Debug, Clone, PartialEq)]
pub enum LayerWeights {
    Dense(WeightMatrix),
    Quantized(QuantizedLayer),
}

/// A layer in a compressed model; bias and activation are never quantized.
#[derive(Debug, Clone, PartialEq)]
pub struct CompressedLayer {
    pub weights: LayerWeights,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl CompressedLayer {
    pub fn dims(&self) -> (usize, usize) {
        match &self.weights {
            LayerWeights::Dense(w) => (w.rows(), w.cols()),
            LayerWeights::Quantized(q) => (q.m, q.n),
        }
    }
}

/// A network whose layers may individually be dense or quantized.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct CompressedNetwork {
    pub layers: Vec<CompressedLayer>,
}

impl CompressedNetwork {
    pub fn from_network(net: &Network) -> Self {
        Self {
            layers: net
                .layers()
                .iter()
                .map(|l| CompressedLayer {
                    weights: LayerWeights::Dense(l.weights.clone()),
                    bias: l.bias.clone(),
                    activation: l.activation,
                })
                .collect(),
        }
    }

    /// Densifies every layer, reconstructing quantized ones.
    pub fn to_network(&self) -> Result<Network> {
        let mut layers = Vec::with_capacity(self.layers.len());
        for cl in &self.layers {
            let weights = match &cl.weights {
                LayerWeights::Dense(w) => w.clone(),
                LayerWeights::Quantized(q) => reconstruct(q)?,
            };
            layers.push(Layer::new(weights, cl.bias.clone(), cl.activation)?);
        }
        Network::new(layers)
    }

    /// Per-layer and whole-model rate accounts.
    pub fn rate_accounts(&self) -> Result<(Vec<RateAccount>, RateAccount)> {
        let mut per_layer = Vec::with_capacity(self.layers.len());
        for cl in &self.layers {
            per_layer.push(match &cl.weights {
                LayerWeights::Dense(w) => RateAccount::dense(w.rows(), w.cols()),
                LayerWeights::Quantized(q) => RateAccount::quantized(q)?,
            });
        }
        let whole = RateAccount::aggregate(&per_layer);
        Ok((per_layer, whole))
    }
}

/// Which layers to quantize and how.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LayerQuantSpec {
    pub layer: usize,
    pub s: usize,
    pub k: usize,
    pub binary_codebook: bool,
}

/// Quantizes the selected layers of a network, leaving the rest dense.
/// Layer work is seeded per layer index so results do not depend on spec
/// order.
pub fn quantize_network(
    net: &Network,
    specs: &[LayerQuantSpec],
    seed: u64,
) -> Result<(CompressedNetwork, Vec<RateAccount>, RateAccount)> {
    let mut seen = vec![false; net.num_layers()];
    for spec in specs {
        if spec.layer >= net.num_layers() {
            return Err(Error::InvalidConfig(format!(
                "quantization layer {} out of range for {} layers",
                spec.layer,
                net.num_layers()
            )));
        }
        if seen[spec.layer] {
            return Err(Error::InvalidConfig(format!(
                "duplicate quantization spec for layer {}",
                spec.layer
            )));
        }
        seen[spec.layer] = true;
    }

    let mut compressed = CompressedNetwork::from_network(net);
    for spec in specs {
        let layer = &net.layers()[spec.layer];
        if spec.k < 2 {
            return Err(Error::InvalidK(format!(
                "layer {}: quantization needs k >= 2, got {}",
                spec.layer, spec.k
            )));
        }
        let q = quantize_layer(
            &layer.weights,
            spec.s,
            spec.k,
            derive_seed(seed, spec.layer as u64),
            spec.binary_codebook,
        )?;
        compressed.layers[spec.layer].weights = LayerWeights::Quantized(q);
    }
    let (per_layer, whole) = compressed.rate_accounts()?;
    Ok((compressed, per_layer, whole))
}

/// Hardened-matrix entries farther than `eps` from both +1 and -1; used to
/// warn when a binary codebook is requested for a layer that is not
/// actually near-binary.
pub fn far_from_binary_count(w: &WeightMatrix, eps: f64) -> usize {
    w.values()
        .iter()
        .filter(|&&v| (v - 1.0).abs().min((v + 1.0).abs()) > eps)
        .count()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn seeded_matrix(rows: usize, cols: usize, seed: u64) -> WeightMatrix {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let values = (0..rows * cols).map(|_| rng.gen_range(-2.0..2.0)).collect();
        WeightMatrix::new(rows, cols, values).unwrap()
    }

    #[test]
    fn partition_identity_and_split() {
        let w = WeightMatrix::new(2, 4, vec![1., 2., 3., 4., 5., 6., 7., 8.]).unwrap();

        let whole = partition(&w, 1).unwrap();
        assert_eq!(whole.len(), 1);
        assert_eq!(whole[0], w);

        let halves = partition(&w, 2).unwrap();
        assert_eq!(halves[0].values(), &[1., 2., 5., 6.]);
        assert_eq!(halves[1].values(), &[3., 4., 7., 8.]);

        assert!(matches!(
            partition(&w, 3),
            Err(Error::IndivisibleWidth { width: 4, segments: 3 })
        ));
    }

    #[test]
    fn partition_concatenate_round_trip() {
        for seed in 0..10u64 {
            let w = seeded_matrix(5, 12, seed);
            for s in [1, 2, 3, 4, 6, 12] {
                let parts = partition(&w, s).unwrap();
                let dim = w.cols() / s;
                for row in 0..w.rows() {
                    let mut rebuilt = Vec::new();
                    for p in &parts {
                        rebuilt.extend_from_slice(p.row(row));
                    }
                    assert_eq!(rebuilt, w.row(row));
                    assert_eq!(parts[0].cols(), dim);
                }
            }
        }
    }

    #[test]
    fn kmeans_duplicated_rows_reach_zero_objective() {
        let points = vec![
            vec![0.0, 0.0],
            vec![0.0, 0.0],
            vec![4.0, 4.0],
            vec![4.0, 4.0],
        ];
        let result = kmeans(&points, 2, 1, KmeansParams::default()).unwrap();
        assert_eq!(result.objective, 0.0);
        let mut centroids = result.codebook.centroids.clone();
        centroids.sort_by(|a, b| a[0].partial_cmp(&b[0]).unwrap());
        assert_eq!(centroids, vec![vec![0.0, 0.0], vec![4.0, 4.0]]);
    }

    #[test]
    fn kmeans_k_equal_distinct_rows_is_lossless() {
        let points = vec![
            vec![1.0, 0.0],
            vec![0.0, 1.0],
            vec![1.0, 0.0],
            vec![-3.0, 2.0],
        ];
        let result = kmeans(&points, 3, 7, KmeansParams::default()).unwrap();
        assert_eq!(result.objective, 0.0);
    }

    #[test]
    fn kmeans_pads_surplus_centroids_with_mean() {
        let points = vec![vec![2.0, -1.0], vec![2.0, -1.0]];
        let result = kmeans(&points, 3, 0, KmeansParams::default()).unwrap();
        assert_eq!(result.objective, 0.0);
        assert_eq!(result.codebook.k(), 3);
        for c in &result.codebook.centroids {
            assert_eq!(c, &vec![2.0, -1.0]);
        }
    }

    #[test]
    fn kmeans_objective_history_non_increasing() {
        for seed in 0..20u64 {
            let m = seeded_matrix(30, 3, seed);
            let points: Vec<Vec<f64>> = (0..m.rows()).map(|z| m.row(z).to_vec()).collect();
            let result = kmeans(&points, 4, seed, KmeansParams::default()).unwrap();
            for w in result.objective_history.windows(2) {
                assert!(w[1] <= w[0] * (1.0 + 1e-12) + 1e-12);
            }
        }
    }

    #[test]
    fn kmeans_rejects_bad_input() {
        assert!(matches!(
            kmeans(&[vec![1.0]], 0, 0, KmeansParams::default()),
            Err(Error::InvalidK(_))
        ));
        assert!(matches!(
            kmeans(&[], 1, 0, KmeansParams::default()),
            Err(Error::EmptyInput(_))
        ));
    }

    #[test]
    fn quantize_two_distinct_rows_reconstructs_exactly() {
        let row_a = [0.5, -1.0, 2.0, 0.25];
        let row_b = [-0.75, 1.5, 0.0, 3.0];
        let mut values = Vec::new();
        for z in 0..6 {
            values.extend_from_slice(if z % 2 == 0 { &row_a } else { &row_b });
        }
        let w = WeightMatrix::new(6, 4, values).unwrap();
        for s in [1, 2, 4] {
            let q = quantize_layer(&w, s, 2, 99, false).unwrap();
            assert_eq!(reconstruct(&q).unwrap(), w);
        }
    }

    #[test]
    fn quantize_k1_maps_every_row_to_segment_mean() {
        let w = WeightMatrix::new(2, 2, vec![1.0, 3.0, 3.0, 5.0]).unwrap();
        let q = quantize_layer(&w, 1, 1, 0, false).unwrap();
        let rec = reconstruct(&q).unwrap();
        assert_eq!(rec.row(0), &[2.0, 4.0]);
        assert_eq!(rec.row(1), &[2.0, 4.0]);

        let qb = quantize_layer(&w, 1, 1, 0, true).unwrap();
        let recb = reconstruct(&qb).unwrap();
        assert_eq!(recb.row(0), &[1.0, 1.0]);
    }

    #[test]
    fn reconstruction_error_equals_sum_of_objectives() {
        let w = seeded_matrix(8, 8, 3);
        let s = 2;
        let k = 4;
        let seed = 5;
        let q = quantize_layer(&w, s, k, seed, false).unwrap();
        let rec = reconstruct(&q).unwrap();
        let recon_err: f64 = w
            .values()
            .iter()
            .zip(rec.values())
            .map(|(a, b)| (a - b) * (a - b))
            .sum();

        // Recompute the per-segment objectives independently.
        let mut total = 0.0;
        for (i, seg) in partition(&w, s).unwrap().iter().enumerate() {
            let points: Vec<Vec<f64>> = (0..seg.rows()).map(|z| seg.row(z).to_vec()).collect();
            let result = kmeans(&points, k, derive_seed(seed, i as u64), KmeansParams::default())
                .unwrap();
            total += result.objective;
        }
        assert!((recon_err - total).abs() < 1e-9, "{recon_err} vs {total}");
    }

    #[test]
    fn requantizing_a_reconstruction_adds_no_error() {
        for seed in [1u64, 9, 77] {
            let w = seeded_matrix(10, 6, seed);
            let q = quantize_layer(&w, 3, 3, seed, false).unwrap();
            let rec = reconstruct(&q).unwrap();
            let q2 = quantize_layer(&rec, 3, 3, seed, false).unwrap();
            let rec2 = reconstruct(&q2).unwrap();
            let extra: f64 = rec
                .values()
                .iter()
                .zip(rec2.values())
                .map(|(a, b)| (a - b) * (a - b))
                .sum();
            assert!(extra < 1e-18, "seed {seed}: extra error {extra}");
        }
    }

    #[test]
    fn reconstruct_shapes_match_over_random_layers() {
        for seed in 0..15u64 {
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            let m = rng.gen_range(1..12);
            let dim = rng.gen_range(1..5);
            let s = rng.gen_range(1..4);
            let n = dim * s;
            let k = rng.gen_range(1..5);
            let w = seeded_matrix(m, n, seed + 1000);
            let q = quantize_layer(&w, s, k, seed, seed % 2 == 0).unwrap();
            let rec = reconstruct(&q).unwrap();
            assert_eq!((rec.rows(), rec.cols()), (q.m, q.n));
        }
    }

    #[test]
    fn reconstruct_rejects_out_of_range_index() {
        let w = seeded_matrix(4, 4, 0);
        let mut q = quantize_layer(&w, 2, 2, 0, false).unwrap();
        q.assignments[3] = 9;
        assert!(matches!(reconstruct(&q), Err(Error::CorruptModel(_))));
    }

    #[test]
    fn binary_codebooks_hold_only_signs() {
        let w = seeded_matrix(6, 6, 8);
        let q = quantize_layer(&w, 2, 3, 4, true).unwrap();
        for cb in &q.codebooks {
            for c in &cb.centroids {
                assert!(c.iter().all(|&v| v == 1.0 || v == -1.0));
            }
        }
    }

    #[test]
    fn compression_rate_spot_values() {
        let plain = compression_rate(512, 256, 4, 16, false).unwrap();
        assert!((plain - 4194304.0 / 139264.0).abs() < 1e-9);

        let binary = compression_rate(512, 256, 4, 16, true).unwrap();
        assert!((binary - 4194304.0 / 12288.0).abs() < 1e-9);

        assert!(matches!(
            compression_rate(512, 256, 4, 1, false),
            Err(Error::InvalidK(_))
        ));
        assert!(matches!(
            compression_rate(512, 256, 3, 4, false),
            Err(Error::IndivisibleWidth { .. })
        ));
    }

    #[test]
    fn compression_rate_strictly_decreases_in_k() {
        for &binary in &[false, true] {
            let mut prev = f64::INFINITY;
            for k in [2, 4, 8, 16, 32] {
                let r = compression_rate(512, 256, 4, k, binary).unwrap();
                assert!(r < prev, "k={k} binary={binary}: {r} !< {prev}");
                prev = r;
            }
        }
    }

    #[test]
    fn measured_equals_formula_for_power_of_two_k() {
        let w = seeded_matrix(16, 8, 2);
        for &binary in &[false, true] {
            for (s, k) in [(2, 2), (2, 4), (4, 8), (8, 16)] {
                let q = quantize_layer(&w, s, k, 3, binary).unwrap();
                let account = RateAccount::quantized(&q).unwrap();
                assert!(
                    (account.formula_rate - account.measured_rate).abs() < 1e-9,
                    "s={s} k={k} binary={binary}"
                );
            }
        }
    }

    #[test]
    fn quantize_network_empty_selection_is_rate_one() {
        let net = crate::nn::init_network(&[6, 4, 2], 0).unwrap();
        let (compressed, per_layer, whole) = quantize_network(&net, &[], 0).unwrap();
        assert_eq!(whole.measured_rate, 1.0);
        assert_eq!(whole.formula_rate, 1.0);
        assert_eq!(per_layer.len(), 2);
        assert_eq!(compressed.to_network().unwrap(), net);
    }

    #[test]
    fn quantize_network_formula_rate_matches_direct_evaluation() {
        let net = crate::nn::init_network(&[6, 4, 4], 1).unwrap();
        let specs = [
            LayerQuantSpec { layer: 0, s: 4, k: 2, binary_codebook: false },
            LayerQuantSpec { layer: 1, s: 4, k: 2, binary_codebook: false },
        ];
        let (_, per_layer, _) = quantize_network(&net, &specs, 9).unwrap();
        for (spec, account) in specs.iter().zip(&per_layer) {
            let (m, n) = match spec.layer {
                0 => (6, 4),
                _ => (4, 4),
            };
            let expected = compression_rate(m, n, spec.s, spec.k, false).unwrap();
            assert!((account.formula_rate - expected).abs() < 1e-12);
        }
    }

    #[test]
    fn quantized_network_still_evaluates() {
        let net = crate::nn::init_network(&[6, 4, 2], 3).unwrap();
        let specs = [LayerQuantSpec { layer: 1, s: 2, k: 2, binary_codebook: false }];
        let (compressed, _, _) = quantize_network(&net, &specs, 0).unwrap();
        let rec = compressed.to_network().unwrap();
        let data = crate::data::synth_dataset(0, 50, 6, 2, 3.0);
        let err = crate::nn::evaluate(&rec, &data).unwrap();
        assert!((0.0..=1.0).contains(&err));
    }

    #[test]
    fn quantize_network_validates_selection() {
        let net = crate::nn::init_network(&[6, 4, 2], 3).unwrap();
        let bad_layer = [LayerQuantSpec { layer: 5, s: 2, k: 2, binary_codebook: false }];
        assert!(matches!(
            quantize_network(&net, &bad_layer, 0),
            Err(Error::InvalidConfig(_))
        ));
        let dup = [
            LayerQuantSpec { layer: 1, s: 2, k: 2, binary_codebook: false },
            LayerQuantSpec { layer: 1, s: 2, k: 4, binary_codebook: false },
        ];
        assert!(matches!(
            quantize_network(&net, &dup, 0),
            Err(Error::InvalidConfig(_))
        ));
        let indivisible = [LayerQuantSpec { layer: 0, s: 3, k: 2, binary_codebook: false }];
        assert!(matches!(
            quantize_network(&net, &indivisible, 0),
            Err(Error::IndivisibleWidth { .. })
        ));
    }

    #[test]
    fn far_from_binary_counts_loose_entries() {
        let w = WeightMatrix::new(1, 4, vec![1.05, -0.95, 0.5, 0.0]).unwrap();
        assert_eq!(far_from_binary_count(&w, 0.1), 2);
    }
}
