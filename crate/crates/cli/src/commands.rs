//! Subcommand implementations. Every command writes its artifacts plus a
//! JSON summary under the experiment output directory and is byte-for-byte
//! reproducible from (config, seed).

use std::path::{Path, PathBuf};

use anyhow::{Context, Result};
use serde::Serialize;

use binq_core::pq::far_from_binary_count;
use binq_core::regularizer::TRACE_PROGRESS_EPS;
use binq_core::{
    binarization_progress, evaluate, harden_layers, init_network, load_dense, load_model,
    measured_size_bits, quantize_network, save_dense, save_model, train_regularized,
    bias_size_bits, Dataset, LayerQuantSpec, LayerWeights, Network,
    RateAccount, TrainTrace,
};

use crate::config::ExperimentConfig;
use crate::report::{layer_set_label, write_json, write_sweep_csv, write_trace_csv, SweepRow};

/// Marks configuration and usage mistakes so main can exit with code 1.
#[derive(Debug)]
pub struct UsageError(pub String);

impl std::fmt::Display for UsageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}", self.0)
    }
}

impl std::error::Error for UsageError {}

pub fn usage_error(msg: impl Into<String>) -> anyhow::Error {
    anyhow::Error::new(UsageError(msg.into()))
}

fn ensure_output_dir(cfg: &ExperimentConfig) -> Result<PathBuf> {
    let dir = cfg.experiment.output_dir.clone();
    std::fs::create_dir_all(&dir)
        .with_context(|| format!("creating output dir {}", dir.display()))?;
    Ok(dir)
}

/// Trains per config and hardens the configured layers. This is the one
/// model-producing pipeline, shared by `train` and `sweep` so their
/// reported baselines agree exactly.
fn train_pipeline(
    cfg: &ExperimentConfig,
    train: &Dataset,
    test: &Dataset,
) -> Result<(Network, TrainTrace, f64, f64)> {
    let net = init_network(&cfg.model.layer_sizes, cfg.experiment.seed)?;
    let (mut trained, trace) = train_regularized(&net, train, Some(test), &cfg.train_config())?;
    let error_before_harden = evaluate(&trained, test)?;
    if !cfg.train.harden_layers.is_empty() {
        harden_layers(&mut trained, &cfg.train.harden_layers)?;
    }
    let final_error = evaluate(&trained, test)?;
    Ok((trained, trace, error_before_harden, final_error))
}

#[derive(Serialize)]
struct TrainSummary<'a> {
    command: &'static str,
    seed: u64,
    layer_sizes: &'a [usize],
    learning_rate: f64,
    batch_size: usize,
    epochs: usize,
    alpha0: f64,
    barrier_c: f64,
    regularized_layers: &'a [usize],
    harden_layers: &'a [usize],
    final_train_loss: f64,
    final_penalty: f64,
    final_alpha: f64,
    test_error_before_harden: f64,
    test_error: f64,
    progress: Vec<f64>,
    model_path: String,
    trace_path: String,
}

pub fn cmd_train(cfg: &ExperimentConfig) -> Result<()> {
    let dir = ensure_output_dir(cfg)?;
    let (train, test) = cfg.load_datasets()?;
    let (model, trace, before_harden, final_error) = train_pipeline(cfg, &train, &test)?;

    let model_path = dir.join("model.bqm");
    std::fs::write(&model_path, save_dense(&model)?)?;
    let trace_path = dir.join("trace.csv");
    write_trace_csv(&trace_path, &trace, model.num_layers())?;

    let last = trace.epochs.last().expect("at least one epoch");
    let summary = TrainSummary {
        command: "train",
        seed: cfg.experiment.seed,
        layer_sizes: &cfg.model.layer_sizes,
        learning_rate: cfg.train.learning_rate,
        batch_size: cfg.train.batch_size,
        epochs: cfg.train.epochs,
        alpha0: cfg.train.alpha0,
        barrier_c: cfg.train.barrier_c,
        regularized_layers: &cfg.train.regularized_layers,
        harden_layers: &cfg.train.harden_layers,
        final_train_loss: last.data_loss,
        final_penalty: last.penalty,
        final_alpha: last.alpha,
        test_error_before_harden: before_harden,
        test_error: final_error,
        progress: model
            .layers()
            .iter()
            .map(|l| binarization_progress(&l.weights, TRACE_PROGRESS_EPS))
            .collect(),
        model_path: model_path.display().to_string(),
        trace_path: trace_path.display().to_string(),
    };
    write_json(&dir.join("train_summary.json"), &summary)?;

    println!(
        "trained {} epochs: train loss {:.6}, test error {:.4}{}",
        cfg.train.epochs,
        last.data_loss,
        final_error,
        if cfg.train.harden_layers.is_empty() {
            String::new()
        } else {
            format!(
                " (before hardening {:.4}, hardened layers {})",
                before_harden,
                layer_set_label(&cfg.train.harden_layers)
            )
        }
    );
    println!("model: {}", model_path.display());
    Ok(())
}

#[derive(Serialize)]
struct BinarizeSummary {
    command: &'static str,
    model_in: String,
    model_out: String,
    layers: Vec<usize>,
    test_error_before: f64,
    test_error_after: f64,
    progress_before: Vec<f64>,
}

pub fn cmd_binarize(
    cfg: &ExperimentConfig,
    model_path: &Path,
    layers: &[usize],
    output: &Path,
) -> Result<()> {
    let dir = ensure_output_dir(cfg)?;
    let bytes = std::fs::read(model_path)
        .with_context(|| format!("reading model {}", model_path.display()))?;
    let mut net = load_dense(&bytes)?;
    for &idx in layers {
        if idx >= net.num_layers() {
            return Err(usage_error(format!(
                "layer {idx} out of range: model has {} layers",
                net.num_layers()
            )));
        }
    }
    let (_, test) = cfg.load_datasets()?;
    let before = evaluate(&net, &test)?;
    let progress_before = net
        .layers()
        .iter()
        .map(|l| binarization_progress(&l.weights, TRACE_PROGRESS_EPS))
        .collect();
    harden_layers(&mut net, layers)?;
    let after = evaluate(&net, &test)?;
    std::fs::write(output, save_dense(&net)?)?;

    let summary = BinarizeSummary {
        command: "binarize",
        model_in: model_path.display().to_string(),
        model_out: output.display().to_string(),
        layers: layers.to_vec(),
        test_error_before: before,
        test_error_after: after,
        progress_before,
    };
    write_json(&dir.join("binarize_summary.json"), &summary)?;
    println!(
        "hardened layers [{}]: test error {before:.4} -> {after:.4}",
        layer_set_label(layers)
    );
    Ok(())
}

#[derive(Serialize)]
struct LayerRateOut {
    layer: usize,
    quantized: bool,
    original_bits: u64,
    index_bits: u64,
    codebook_bits: u64,
    formula_rate: f64,
    measured_rate: f64,
}

#[derive(Serialize)]
struct CompressSummary {
    command: &'static str,
    model_in: String,
    model_out: String,
    layers: Vec<usize>,
    s: usize,
    k: usize,
    binary: bool,
    seed: u64,
    per_layer: Vec<LayerRateOut>,
    layer_set_formula_rate: f64,
    layer_set_measured_rate: f64,
    whole_model_formula_rate: f64,
    whole_model_measured_rate: f64,
    weight_payload_bits: u64,
    bias_payload_bits: u64,
    test_error: f64,
    binary_warnings: Vec<String>,
}

#[allow(clippy::too_many_arguments)]
pub fn cmd_compress(
    cfg: &ExperimentConfig,
    model_path: &Path,
    layers: &[usize],
    s: usize,
    k: usize,
    binary: bool,
    output: &Path,
) -> Result<()> {
    let dir = ensure_output_dir(cfg)?;
    let bytes = std::fs::read(model_path)
        .with_context(|| format!("reading model {}", model_path.display()))?;
    let net = load_dense(&bytes)?;
    let seed = cfg.experiment.seed;

    let mut sorted_layers = layers.to_vec();
    sorted_layers.sort_unstable();
    sorted_layers.dedup();
    for &idx in &sorted_layers {
        if idx >= net.num_layers() {
            return Err(usage_error(format!(
                "layer {idx} out of range: model has {} layers",
                net.num_layers()
            )));
        }
        let width = net.layers()[idx].out_dim();
        if s == 0 || width % s != 0 {
            return Err(usage_error(format!(
                "layer {idx}: width {width} not divisible into {s} segments"
            )));
        }
    }
    if !sorted_layers.is_empty() && k < 2 {
        return Err(usage_error(format!("clusters must be at least 2, got {k}")));
    }

    // Binary codebooks on layers that are not near-binary are allowed but
    // worth flagging.
    let mut binary_warnings = Vec::new();
    if binary {
        for &idx in &sorted_layers {
            let far = far_from_binary_count(&net.layers()[idx].weights, 0.1);
            if far > 0 {
                let msg = format!(
                    "layer {idx}: {far} of {} entries farther than 0.1 from +-1",
                    net.layers()[idx].weights.values().len()
                );
                eprintln!("warning: {msg}");
                binary_warnings.push(msg);
            }
        }
    }

    let specs: Vec<LayerQuantSpec> = sorted_layers
        .iter()
        .map(|&layer| LayerQuantSpec {
            layer,
            s,
            k,
            binary_codebook: binary,
        })
        .collect();
    let (compressed, per_layer, whole) = quantize_network(&net, &specs, seed)?;
    let (_, test) = cfg.load_datasets()?;
    let test_error = evaluate(&compressed.to_network()?, &test)?;
    std::fs::write(output, save_model(&compressed)?)?;

    let set_accounts: Vec<RateAccount> = sorted_layers
        .iter()
        .map(|&idx| per_layer[idx])
        .collect();
    let set_rate = if set_accounts.is_empty() {
        RateAccount::dense(1, 1)
    } else {
        RateAccount::aggregate(&set_accounts)
    };

    let summary = CompressSummary {
        command: "compress",
        model_in: model_path.display().to_string(),
        model_out: output.display().to_string(),
        layers: sorted_layers.clone(),
        s,
        k,
        binary,
        seed,
        per_layer: per_layer
            .iter()
            .enumerate()
            .map(|(i, a)| LayerRateOut {
                layer: i,
                quantized: matches!(compressed.layers[i].weights, LayerWeights::Quantized(_)),
                original_bits: a.original_bits,
                index_bits: a.index_bits,
                codebook_bits: a.codebook_bits,
                formula_rate: a.formula_rate,
                measured_rate: a.measured_rate,
            })
            .collect(),
        layer_set_formula_rate: set_rate.formula_rate,
        layer_set_measured_rate: set_rate.measured_rate,
        whole_model_formula_rate: whole.formula_rate,
        whole_model_measured_rate: whole.measured_rate,
        weight_payload_bits: measured_size_bits(&compressed),
        bias_payload_bits: bias_size_bits(&compressed),
        test_error,
        binary_warnings,
    };
    write_json(&dir.join("compress_summary.json"), &summary)?;

    for (i, account) in per_layer.iter().enumerate() {
        if matches!(compressed.layers[i].weights, LayerWeights::Quantized(_)) {
            println!(
                "layer {i}: formula rate {:.4}, measured rate {:.4}",
                account.formula_rate, account.measured_rate
            );
        }
    }
    println!(
        "layer set [{}]: formula rate {:.4}, measured rate {:.4}; whole model measured {:.4}",
        layer_set_label(&sorted_layers),
        set_rate.formula_rate,
        set_rate.measured_rate,
        whole.measured_rate
    );
    println!("test error after compression: {test_error:.4}");
    Ok(())
}

#[derive(Serialize)]
struct SweepSummary {
    command: &'static str,
    seed: u64,
    baseline_error: f64,
    csv_path: String,
    rows: Vec<SweepRow>,
}

pub fn cmd_sweep(cfg: &ExperimentConfig) -> Result<()> {
    if cfg.sweep.grid.is_empty() {
        return Err(usage_error("sweep requires at least one [[sweep.grid]] entry"));
    }
    let dir = ensure_output_dir(cfg)?;
    let (train, test) = cfg.load_datasets()?;
    let (base, _, _, baseline_error) = train_pipeline(cfg, &train, &test)?;

    let mut rows = vec![SweepRow::baseline(baseline_error)];
    for entry in &cfg.sweep.grid {
        let mut layers = entry.layers.clone();
        layers.sort_unstable();
        layers.dedup();
        let label = layer_set_label(&layers);
        let mut s_values = entry.s_values.clone();
        s_values.sort_unstable();
        s_values.dedup();
        let mut k_values = entry.k_values.clone();
        k_values.sort_unstable();
        k_values.dedup();

        for &s in &s_values {
            for &k in &k_values {
                rows.push(sweep_row(cfg, &base, &test, &layers, &label, s, k, entry.binary, baseline_error));
            }
        }
    }

    let csv_path = dir.join("sweep.csv");
    write_sweep_csv(&csv_path, &rows)?;
    let summary = SweepSummary {
        command: "sweep",
        seed: cfg.experiment.seed,
        baseline_error,
        csv_path: csv_path.display().to_string(),
        rows,
    };
    write_json(&dir.join("sweep_summary.json"), &summary)?;

    println!("baseline test error {baseline_error:.4}");
    for row in &summary.rows[1..] {
        match (row.measured_rate, row.test_error) {
            (Some(rate), Some(err)) => println!(
                "layers [{}] s={} k={} binary={}: rate {:.2}, error {:.4} ({:+.4})",
                row.layer_set,
                row.s,
                row.k,
                row.binary,
                rate,
                err,
                row.delta_error.unwrap_or(0.0)
            ),
            _ => println!(
                "layers [{}] s={} k={} binary={}: skipped ({})",
                row.layer_set, row.s, row.k, row.binary, row.error
            ),
        }
    }
    println!("report: {}", csv_path.display());
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn sweep_row(
    cfg: &ExperimentConfig,
    base: &Network,
    test: &Dataset,
    layers: &[usize],
    label: &str,
    s: usize,
    k: usize,
    binary: bool,
    baseline_error: f64,
) -> SweepRow {
    let mut row = SweepRow {
        layer_set: label.to_string(),
        s,
        k,
        binary,
        formula_rate: None,
        measured_rate: None,
        whole_model_rate: None,
        test_error: None,
        delta_error: None,
        error: String::new(),
    };
    for &idx in layers {
        let width = base.layers()[idx].out_dim();
        if !width.is_multiple_of(s) {
            row.error = format!("layer {idx}: width {width} not divisible into {s} segments");
            return row;
        }
    }
    let specs: Vec<LayerQuantSpec> = layers
        .iter()
        .map(|&layer| LayerQuantSpec {
            layer,
            s,
            k,
            binary_codebook: binary,
        })
        .collect();
    match run_sweep_quantization(cfg, base, test, &specs, layers) {
        Ok((set_rate, whole_rate, err)) => {
            row.formula_rate = Some(set_rate.formula_rate);
            row.measured_rate = Some(set_rate.measured_rate);
            row.whole_model_rate = Some(whole_rate.measured_rate);
            row.test_error = Some(err);
            row.delta_error = Some(err - baseline_error);
        }
        Err(e) => row.error = e.to_string(),
    }
    row
}

fn run_sweep_quantization(
    cfg: &ExperimentConfig,
    base: &Network,
    test: &Dataset,
    specs: &[LayerQuantSpec],
    layers: &[usize],
) -> Result<(RateAccount, RateAccount, f64)> {
    let (compressed, per_layer, whole) = quantize_network(base, specs, cfg.experiment.seed)?;
    let set_accounts: Vec<RateAccount> = layers.iter().map(|&idx| per_layer[idx]).collect();
    let set_rate = RateAccount::aggregate(&set_accounts);
    let err = evaluate(&compressed.to_network()?, test)?;
    Ok((set_rate, whole, err))
}

#[derive(Serialize)]
struct EvalSummary {
    command: &'static str,
    model: String,
    split: String,
    examples: usize,
    test_error: f64,
}

pub fn cmd_eval(cfg: &ExperimentConfig, model_path: &Path, split: &str) -> Result<()> {
    let dir = ensure_output_dir(cfg)?;
    let bytes = std::fs::read(model_path)
        .with_context(|| format!("reading model {}", model_path.display()))?;
    let model = load_model(&bytes)?;
    let net = model.to_network()?;
    let (train, test) = cfg.load_datasets()?;
    let data = match split {
        "train" => &train,
        "test" => &test,
        other => return Err(usage_error(format!("unknown split {other:?}"))),
    };
    let err = evaluate(&net, data)?;
    let summary = EvalSummary {
        command: "eval",
        model: model_path.display().to_string(),
        split: split.to_string(),
        examples: data.len(),
        test_error: err,
    };
    write_json(&dir.join("eval_summary.json"), &summary)?;
    println!("{split} error: {err:.4} over {} examples", data.len());
    Ok(())
}

#[derive(Serialize)]
struct InspectLayer {
    layer: usize,
    kind: String,
    m: usize,
    n: usize,
    activation: String,
    s: Option<usize>,
    k: Option<usize>,
    binary_codebook: Option<bool>,
    weight_bits: u64,
    bias_bits: u64,
    binarization_progress: Option<f64>,
}

#[derive(Serialize)]
struct InspectSummary {
    command: &'static str,
    model: String,
    layers: Vec<InspectLayer>,
    weight_payload_bits: u64,
    bias_payload_bits: u64,
    whole_model_formula_rate: f64,
    whole_model_measured_rate: f64,
}

pub fn cmd_inspect(model_path: &Path, json: bool) -> Result<()> {
    let bytes = std::fs::read(model_path)
        .with_context(|| format!("reading model {}", model_path.display()))?;
    let model = load_model(&bytes)?;
    let (_, whole) = model.rate_accounts()?;
    let layers = model
        .layers
        .iter()
        .enumerate()
        .map(|(i, layer)| {
            let (m, n) = layer.dims();
            let activation = format!("{:?}", layer.activation).to_lowercase();
            match &layer.weights {
                LayerWeights::Dense(w) => InspectLayer {
                    layer: i,
                    kind: "dense".into(),
                    m,
                    n,
                    activation,
                    s: None,
                    k: None,
                    binary_codebook: None,
                    weight_bits: 32 * (m * n) as u64,
                    bias_bits: 32 * n as u64,
                    binarization_progress: Some(binarization_progress(w, TRACE_PROGRESS_EPS)),
                },
                LayerWeights::Quantized(q) => InspectLayer {
                    layer: i,
                    kind: "quantized".into(),
                    m,
                    n,
                    activation,
                    s: Some(q.s),
                    k: Some(q.k),
                    binary_codebook: Some(q.binary_codebook),
                    weight_bits: q.index_bits() + q.codebook_bits(),
                    bias_bits: 32 * n as u64,
                    binarization_progress: None,
                },
            }
        })
        .collect::<Vec<_>>();

    let summary = InspectSummary {
        command: "inspect",
        model: model_path.display().to_string(),
        layers,
        weight_payload_bits: measured_size_bits(&model),
        bias_payload_bits: bias_size_bits(&model),
        whole_model_formula_rate: whole.formula_rate,
        whole_model_measured_rate: whole.measured_rate,
    };

    if json {
        let mut text = serde_json::to_string_pretty(&summary)?;
        text.push('\n');
        print!("{text}");
    } else {
        println!("model: {}", summary.model);
        for l in &summary.layers {
            match l.kind.as_str() {
                "dense" => println!(
                    "  layer {}: dense {}x{} {} ({} weight bits, progress {:.3})",
                    l.layer,
                    l.m,
                    l.n,
                    l.activation,
                    l.weight_bits,
                    l.binarization_progress.unwrap_or(0.0)
                ),
                _ => println!(
                    "  layer {}: quantized {}x{} {} (s={} k={} binary={} -> {} weight bits)",
                    l.layer,
                    l.m,
                    l.n,
                    l.activation,
                    l.s.unwrap_or(0),
                    l.k.unwrap_or(0),
                    l.binary_codebook.unwrap_or(false),
                    l.weight_bits
                ),
            }
        }
        println!(
            "weight payload {} bits, bias payload {} bits, whole-model measured rate {:.4}",
            summary.weight_payload_bits, summary.bias_payload_bits,
            summary.whole_model_measured_rate
        );
    }
    Ok(())
}

/// Exit-code classification: configuration and usage mistakes exit 1,
/// everything else (I/O, divergence, corrupt files) exits 2.
pub fn exit_code_for(err: &anyhow::Error) -> i32 {
    if err.downcast_ref::<UsageError>().is_some() {
        return 1;
    }
    if let Some(core) = err.downcast_ref::<binq_core::Error>() {
        return match core {
            binq_core::Error::InvalidConfig(_)
            | binq_core::Error::InvalidArchitecture(_)
            | binq_core::Error::InvalidK(_)
            | binq_core::Error::IndivisibleWidth { .. }
            | binq_core::Error::InvalidLabel { .. } => 1,
            _ => 2,
        };
    }
    2
}
