//! CSV and JSON report emission. Output is deterministic: fixed column
//! orders, shortest round-trip float formatting, no timestamps.

use std::path::Path;

use anyhow::{Context, Result};
use serde::Serialize;

use binq_core::TrainTrace;

/// Per-epoch trace: one-line header, then one row per epoch with the
/// binarization progress of every layer.
pub fn write_trace_csv(path: &Path, trace: &TrainTrace, num_layers: usize) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating trace {}", path.display()))?;
    let mut header = vec![
        "epoch".to_string(),
        "data_loss".to_string(),
        "penalty".to_string(),
        "alpha".to_string(),
        "test_error".to_string(),
    ];
    for i in 0..num_layers {
        header.push(format!("progress_{i}"));
    }
    w.write_record(&header)?;
    for row in &trace.epochs {
        let mut record = vec![
            row.epoch.to_string(),
            row.data_loss.to_string(),
            row.penalty.to_string(),
            row.alpha.to_string(),
            row.test_error.map(|e| e.to_string()).unwrap_or_default(),
        ];
        for p in &row.progress {
            record.push(p.to_string());
        }
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}

/// One sweep result; rates cover the quantized layer set (the dense rest
/// of the model is reported in the JSON summary).
#[derive(Debug, Clone, Serialize)]
pub struct SweepRow {
    pub layer_set: String,
    pub s: usize,
    pub k: usize,
    pub binary: bool,
    pub formula_rate: Option<f64>,
    pub measured_rate: Option<f64>,
    pub whole_model_rate: Option<f64>,
    pub test_error: Option<f64>,
    pub delta_error: Option<f64>,
    pub error: String,
}

impl SweepRow {
    pub fn baseline(test_error: f64) -> Self {
        Self {
            layer_set: "baseline".into(),
            s: 0,
            k: 0,
            binary: false,
            formula_rate: Some(1.0),
            measured_rate: Some(1.0),
            whole_model_rate: Some(1.0),
            test_error: Some(test_error),
            delta_error: Some(0.0),
            error: String::new(),
        }
    }
}

pub fn write_sweep_csv(path: &Path, rows: &[SweepRow]) -> Result<()> {
    let mut w = csv::Writer::from_path(path)
        .with_context(|| format!("creating sweep report {}", path.display()))?;
    w.write_record([
        "layer_set",
        "s",
        "k",
        "binary",
        "formula_rate",
        "measured_rate",
        "whole_model_rate",
        "test_error",
        "delta_error",
        "error",
    ])?;
    let fmt = |v: Option<f64>| v.map(|x| x.to_string()).unwrap_or_default();
    for row in rows {
        w.write_record([
            row.layer_set.clone(),
            row.s.to_string(),
            row.k.to_string(),
            row.binary.to_string(),
            fmt(row.formula_rate),
            fmt(row.measured_rate),
            fmt(row.whole_model_rate),
            fmt(row.test_error),
            fmt(row.delta_error),
            row.error.clone(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

/// Pretty JSON with a trailing newline.
pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value)?;
    text.push('\n');
    std::fs::write(path, text).with_context(|| format!("writing {}", path.display()))?;
    Ok(())
}

/// Formats a layer set like `1+2` for CSV cells and logs.
pub fn layer_set_label(layers: &[usize]) -> String {
    layers
        .iter()
        .map(|l| l.to_string())
        .collect::<Vec<_>>()
        .join("+")
}
