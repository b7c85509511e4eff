//! Experiment configuration: a TOML file with sections, every scalar
//! overridable from the command line.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

use binq_core::pq::derive_seed;
use binq_core::{data, Dataset, TrainConfig};

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub experiment: ExperimentSection,
    pub model: ModelSection,
    #[serde(default)]
    pub train: TrainSection,
    pub data: DataSection,
    #[serde(default)]
    pub sweep: SweepSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ExperimentSection {
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct ModelSection {
    pub layer_sizes: Vec<usize>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct TrainSection {
    #[serde(default = "default_learning_rate")]
    pub learning_rate: f64,
    #[serde(default = "default_batch_size")]
    pub batch_size: usize,
    #[serde(default = "default_epochs")]
    pub epochs: usize,
    #[serde(default)]
    pub alpha0: f64,
    #[serde(default = "default_barrier_c")]
    pub barrier_c: f64,
    #[serde(default)]
    pub regularized_layers: Vec<usize>,
    /// Layers hardened to exact +-1 after training.
    #[serde(default)]
    pub harden_layers: Vec<usize>,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            learning_rate: default_learning_rate(),
            batch_size: default_batch_size(),
            epochs: default_epochs(),
            alpha0: 0.0,
            barrier_c: default_barrier_c(),
            regularized_layers: Vec::new(),
            harden_layers: Vec::new(),
        }
    }
}

fn default_learning_rate() -> f64 {
    0.1
}
fn default_batch_size() -> usize {
    32
}
fn default_epochs() -> usize {
    30
}
fn default_barrier_c() -> f64 {
    1.001
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "lowercase")]
pub enum DataSection {
    Mnist {
        train_images: PathBuf,
        train_labels: PathBuf,
        test_images: PathBuf,
        test_labels: PathBuf,
        #[serde(default)]
        train_limit: usize,
        #[serde(default)]
        test_limit: usize,
        #[serde(default = "default_classes")]
        classes: usize,
    },
    Synthetic {
        examples: usize,
        test_examples: usize,
        dims: usize,
        classes: usize,
        separation: f64,
    },
}

fn default_classes() -> usize {
    10
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
pub struct SweepSection {
    #[serde(default)]
    pub grid: Vec<GridEntry>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct GridEntry {
    pub layers: Vec<usize>,
    pub s_values: Vec<usize>,
    pub k_values: Vec<usize>,
    #[serde(default)]
    pub binary: bool,
}

/// Command-line overrides applied on top of the config file.
#[derive(Debug, Clone, Default, clap::Args)]
pub struct Overrides {
    /// Override [experiment] seed
    #[arg(long)]
    pub seed: Option<u64>,
    /// Override [experiment] output_dir
    #[arg(long)]
    pub output_dir: Option<PathBuf>,
    /// Override [train] learning_rate
    #[arg(long)]
    pub learning_rate: Option<f64>,
    /// Override [train] batch_size
    #[arg(long)]
    pub batch_size: Option<usize>,
    /// Override [train] epochs
    #[arg(long)]
    pub epochs: Option<usize>,
    /// Override [train] alpha0
    #[arg(long)]
    pub alpha0: Option<f64>,
    /// Override [train] barrier_c
    #[arg(long)]
    pub barrier_c: Option<f64>,
    /// Override [train] regularized_layers (comma-separated)
    #[arg(long, value_delimiter = ',')]
    pub regularized_layers: Option<Vec<usize>>,
    /// Override [train] harden_layers (comma-separated)
    #[arg(long, value_delimiter = ',')]
    pub harden_layers: Option<Vec<usize>>,
}

impl ExperimentConfig {
    pub fn load(path: &Path, overrides: &Overrides) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        let mut cfg: ExperimentConfig =
            toml::from_str(&text).with_context(|| format!("parsing config {}", path.display()))?;
        cfg.apply(overrides);
        cfg.validate()?;
        Ok(cfg)
    }

    fn apply(&mut self, o: &Overrides) {
        if let Some(seed) = o.seed {
            self.experiment.seed = seed;
        }
        if let Some(dir) = &o.output_dir {
            self.experiment.output_dir = dir.clone();
        }
        if let Some(v) = o.learning_rate {
            self.train.learning_rate = v;
        }
        if let Some(v) = o.batch_size {
            self.train.batch_size = v;
        }
        if let Some(v) = o.epochs {
            self.train.epochs = v;
        }
        if let Some(v) = o.alpha0 {
            self.train.alpha0 = v;
        }
        if let Some(v) = o.barrier_c {
            self.train.barrier_c = v;
        }
        if let Some(v) = &o.regularized_layers {
            self.train.regularized_layers = v.clone();
        }
        if let Some(v) = &o.harden_layers {
            self.train.harden_layers = v.clone();
        }
    }

    /// Cross-field validation; runs before any work starts.
    pub fn validate(&self) -> Result<()> {
        let sizes = &self.model.layer_sizes;
        if sizes.len() < 3 {
            bail!("model.layer_sizes needs at least 3 entries (input, hidden, output)");
        }
        if sizes.contains(&0) {
            bail!("model.layer_sizes entries must be positive");
        }
        let num_layers = sizes.len() - 1;
        let classes = self.classes();
        if *sizes.last().unwrap() != classes {
            bail!(
                "output layer size {} does not match {} data classes",
                sizes.last().unwrap(),
                classes
            );
        }
        let input_dim = self.input_dim();
        if sizes[0] != input_dim {
            bail!(
                "input layer size {} does not match data dimension {}",
                sizes[0],
                input_dim
            );
        }
        if self.train.learning_rate <= 0.0 {
            bail!("train.learning_rate must be positive");
        }
        if self.train.batch_size == 0 || self.train.epochs == 0 {
            bail!("train.batch_size and train.epochs must be positive");
        }
        if self.train.alpha0 < 0.0 {
            bail!("train.alpha0 must be non-negative");
        }
        if self.train.barrier_c < 1.0 {
            bail!("train.barrier_c must be at least 1");
        }
        for &idx in self
            .train
            .regularized_layers
            .iter()
            .chain(&self.train.harden_layers)
        {
            if idx >= num_layers {
                bail!("layer index {idx} out of range: network has {num_layers} layers");
            }
        }
        for entry in &self.sweep.grid {
            if entry.layers.is_empty() {
                bail!("sweep grid entry must list at least one layer");
            }
            for &idx in &entry.layers {
                if idx >= num_layers {
                    bail!("sweep layer index {idx} out of range: network has {num_layers} layers");
                }
            }
            if entry.s_values.is_empty() || entry.k_values.is_empty() {
                bail!("sweep grid entry needs s_values and k_values");
            }
            if entry.k_values.iter().any(|&k| k < 2) {
                bail!("sweep k values must be at least 2");
            }
            if entry.s_values.contains(&0) {
                bail!("sweep s values must be positive");
            }
        }
        if let DataSection::Synthetic { classes, dims, .. } = &self.data {
            if *classes < 2 {
                bail!("synthetic data needs at least 2 classes");
            }
            if *dims == 0 {
                bail!("synthetic data needs at least 1 dimension");
            }
        }
        Ok(())
    }

    pub fn classes(&self) -> usize {
        match &self.data {
            DataSection::Mnist { classes, .. } => *classes,
            DataSection::Synthetic { classes, .. } => *classes,
        }
    }

    pub fn input_dim(&self) -> usize {
        match &self.data {
            DataSection::Mnist { .. } => self.model.layer_sizes[0],
            DataSection::Synthetic { dims, .. } => *dims,
        }
    }

    pub fn train_config(&self) -> TrainConfig {
        let mut regularized = self.train.regularized_layers.clone();
        regularized.sort_unstable();
        regularized.dedup();
        TrainConfig {
            learning_rate: self.train.learning_rate,
            batch_size: self.train.batch_size,
            epochs: self.train.epochs,
            alpha0: self.train.alpha0,
            barrier_c: self.train.barrier_c,
            seed: self.experiment.seed,
            regularized_layers: regularized,
        }
    }

    /// Loads the train and test splits this config points at.
    pub fn load_datasets(&self) -> Result<(Dataset, Dataset)> {
        match &self.data {
            DataSection::Mnist {
                train_images,
                train_labels,
                test_images,
                test_labels,
                train_limit,
                test_limit,
                classes,
            } => {
                let train = load_idx_dataset(train_images, train_labels, *train_limit, *classes)?;
                let test = load_idx_dataset(test_images, test_labels, *test_limit, *classes)?;
                Ok((train, test))
            }
            DataSection::Synthetic {
                examples,
                test_examples,
                dims,
                classes,
                separation,
            } => {
                let seed = self.experiment.seed;
                let train =
                    data::synth_dataset(derive_seed(seed, 0), *examples, *dims, *classes, *separation);
                let test = data::synth_dataset(
                    derive_seed(seed, 1),
                    *test_examples,
                    *dims,
                    *classes,
                    *separation,
                );
                Ok((train, test))
            }
        }
    }
}

fn load_idx_dataset(
    images_path: &Path,
    labels_path: &Path,
    limit: usize,
    classes: usize,
) -> Result<Dataset> {
    let mut images = data::load_idx_images_from_path(images_path)
        .with_context(|| format!("loading images {}", images_path.display()))?;
    let mut labels = data::load_idx_labels_from_path(labels_path)
        .with_context(|| format!("loading labels {}", labels_path.display()))?;
    if limit > 0 {
        images.truncate(limit);
        labels.truncate(limit);
    }
    Ok(data::dataset_from_parts(images, &labels, classes)?)
}
