//! Bit-exact model serialization.
//!
//! Layout (all integers little-endian):
//!
//! ```text
//! file  := magic "BQM1" | layer_count u32 | chunk*
//! chunk := kind u8 (0 dense, 1 quantized) | activation u8 (0 relu, 1 sigmoid, 2 identity) | body
//! dense body := m u32 | n u32
//!             | weights m*n f32, row-major
//!             | bias n f32
//! quantized body := m u32 | n u32 | s u32 | k u32 | flags u8 (bit 0: binary codebook)
//!             | codebooks: plain -> k*(n/s) f32 per segment, segment then centroid order
//!                          binary -> same order bit-packed 1 bit/entry (+1 -> 1, -1 -> 0)
//!             | indices: m*s entries, row-major, ceil(log2 k) bits each
//!             | bias n f32
//! ```
//!
//! Bit-packed streams are LSB-first within each byte and zero-padded to a
//! byte boundary per stream. Weights are stored as 32-bit IEEE-754 floats;
//! biases are never quantized but are always serialized.

use crate::error::{Error, Result};
use crate::matrix::WeightMatrix;
use crate::nn::{Activation, Network};
use crate::pq::{bits_per_index, Codebook, CompressedLayer, CompressedNetwork, LayerWeights, QuantizedLayer};

pub const MAGIC: &[u8; 4] = b"BQM1";

const KIND_DENSE: u8 = 0;
const KIND_QUANTIZED: u8 = 1;

fn activation_tag(a: Activation) -> u8 {
    match a {
        Activation::Relu => 0,
        Activation::Sigmoid => 1,
        Activation::Identity => 2,
    }
}

fn activation_from_tag(tag: u8) -> Result<Activation> {
    match tag {
        0 => Ok(Activation::Relu),
        1 => Ok(Activation::Sigmoid),
        2 => Ok(Activation::Identity),
        other => Err(Error::CorruptFile(format!("unknown activation tag {other}"))),
    }
}

struct BitWriter {
    bytes: Vec<u8>,
    current: u8,
    used: u8,
}

impl BitWriter {
    fn new() -> Self {
        Self {
            bytes: Vec::new(),
            current: 0,
            used: 0,
        }
    }

    fn push(&mut self, value: u64, bits: u32) {
        for b in 0..bits {
            let bit = ((value >> b) & 1) as u8;
            self.current |= bit << self.used;
            self.used += 1;
            if self.used == 8 {
                self.bytes.push(self.current);
                self.current = 0;
                self.used = 0;
            }
        }
    }

    fn finish(mut self) -> Vec<u8> {
        if self.used > 0 {
            self.bytes.push(self.current);
        }
        self.bytes
    }
}

struct BitReader<'a> {
    bytes: &'a [u8],
    bit: usize,
}

impl<'a> BitReader<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, bit: 0 }
    }

    fn read(&mut self, bits: u32) -> Result<u64> {
        let mut value = 0u64;
        for b in 0..bits {
            let byte = self.bit / 8;
            if byte >= self.bytes.len() {
                return Err(Error::CorruptFile("bit stream exhausted".into()));
            }
            let bit = (self.bytes[byte] >> (self.bit % 8)) & 1;
            value |= (bit as u64) << b;
            self.bit += 1;
        }
        Ok(value)
    }
}

struct Cursor<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Cursor<'a> {
    fn new(bytes: &'a [u8]) -> Self {
        Self { bytes, pos: 0 }
    }

    fn take(&mut self, len: usize) -> Result<&'a [u8]> {
        let end = self
            .pos
            .checked_add(len)
            .ok_or_else(|| Error::CorruptFile("length overflow".into()))?;
        if end > self.bytes.len() {
            return Err(Error::CorruptFile("truncated stream".into()));
        }
        let slice = &self.bytes[self.pos..end];
        self.pos = end;
        Ok(slice)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u32(&mut self) -> Result<u32> {
        let b = self.take(4)?;
        Ok(u32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn f32(&mut self) -> Result<f32> {
        let b = self.take(4)?;
        Ok(f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
    }

    fn remaining(&self) -> usize {
        self.bytes.len() - self.pos
    }
}

fn push_f32(out: &mut Vec<u8>, v: f64) {
    out.extend_from_slice(&(v as f32).to_le_bytes());
}

fn read_f64_values(cur: &mut Cursor, count: usize, context: &str) -> Result<Vec<f64>> {
    let mut values = Vec::with_capacity(count);
    for _ in 0..count {
        let v = cur.f32()? as f64;
        if !v.is_finite() {
            return Err(Error::CorruptFile(format!("non-finite value in {context}")));
        }
        values.push(v);
    }
    Ok(values)
}

fn checked_dims(m: u32, n: u32) -> Result<(usize, usize)> {
    let count = (m as u64)
        .checked_mul(n as u64)
        .ok_or_else(|| Error::CorruptFile("dimension overflow".into()))?;
    if count == 0 {
        return Err(Error::CorruptFile("zero-sized layer".into()));
    }
    if count > (1 << 32) {
        return Err(Error::CorruptFile("dimension overflow".into()));
    }
    Ok((m as usize, n as usize))
}

fn write_layer(out: &mut Vec<u8>, layer: &CompressedLayer) -> Result<()> {
    match &layer.weights {
        LayerWeights::Dense(w) => {
            w.ensure_finite("dense layer weights")?;
            out.push(KIND_DENSE);
            out.push(activation_tag(layer.activation));
            out.extend_from_slice(&(w.rows() as u32).to_le_bytes());
            out.extend_from_slice(&(w.cols() as u32).to_le_bytes());
            for &v in w.values() {
                push_f32(out, v);
            }
        }
        LayerWeights::Quantized(q) => {
            q.validate()?;
            out.push(KIND_QUANTIZED);
            out.push(activation_tag(layer.activation));
            out.extend_from_slice(&(q.m as u32).to_le_bytes());
            out.extend_from_slice(&(q.n as u32).to_le_bytes());
            out.extend_from_slice(&(q.s as u32).to_le_bytes());
            out.extend_from_slice(&(q.k as u32).to_le_bytes());
            out.push(u8::from(q.binary_codebook));

            if q.binary_codebook {
                let mut bits = BitWriter::new();
                for cb in &q.codebooks {
                    for c in &cb.centroids {
                        for &v in c {
                            bits.push(u64::from(v == 1.0), 1);
                        }
                    }
                }
                out.extend_from_slice(&bits.finish());
            } else {
                for cb in &q.codebooks {
                    for c in &cb.centroids {
                        for &v in c {
                            if !v.is_finite() {
                                return Err(Error::NumericOverflow(
                                    "non-finite codebook entry".into(),
                                ));
                            }
                            push_f32(out, v);
                        }
                    }
                }
            }

            let width = bits_per_index(q.k);
            let mut bits = BitWriter::new();
            for &a in &q.assignments {
                bits.push(a as u64, width);
            }
            out.extend_from_slice(&bits.finish());
        }
    }
    let (_, n) = layer.dims();
    if layer.bias.len() != n {
        return Err(Error::ShapeMismatch(format!(
            "bias length {} vs layer width {n}",
            layer.bias.len()
        )));
    }
    for &b in &layer.bias {
        if !b.is_finite() {
            return Err(Error::NumericOverflow("non-finite bias entry".into()));
        }
        push_f32(out, b);
    }
    Ok(())
}

fn read_layer(cur: &mut Cursor) -> Result<CompressedLayer> {
    let kind = cur.u8()?;
    let activation = activation_from_tag(cur.u8()?)?;
    let weights = match kind {
        KIND_DENSE => {
            let (m, n) = checked_dims(cur.u32()?, cur.u32()?)?;
            let values = read_f64_values(cur, m * n, "dense weights")?;
            LayerWeights::Dense(
                WeightMatrix::new(m, n, values).map_err(|e| Error::CorruptFile(e.to_string()))?,
            )
        }
        KIND_QUANTIZED => {
            let (m, n) = checked_dims(cur.u32()?, cur.u32()?)?;
            let s = cur.u32()? as usize;
            let k = cur.u32()? as usize;
            let flags = cur.u8()?;
            if flags > 1 {
                return Err(Error::CorruptFile(format!("unknown flags {flags:#x}")));
            }
            let binary_codebook = flags == 1;
            if s == 0 || n % s != 0 {
                return Err(Error::CorruptFile(format!(
                    "width {n} not divisible into {s} segments"
                )));
            }
            if k == 0 {
                return Err(Error::CorruptFile("zero clusters".into()));
            }
            let dim = n / s;
            let entries = s
                .checked_mul(k)
                .and_then(|v| v.checked_mul(dim))
                .ok_or_else(|| Error::CorruptFile("dimension overflow".into()))?;

            let mut codebooks = Vec::with_capacity(s);
            if binary_codebook {
                let bytes = cur.take(entries.div_ceil(8))?;
                let mut bits = BitReader::new(bytes);
                for _ in 0..s {
                    let mut centroids = Vec::with_capacity(k);
                    for _ in 0..k {
                        let mut c = Vec::with_capacity(dim);
                        for _ in 0..dim {
                            c.push(if bits.read(1)? == 1 { 1.0 } else { -1.0 });
                        }
                        centroids.push(c);
                    }
                    codebooks.push(Codebook { dim, centroids });
                }
            } else {
                for _ in 0..s {
                    let mut centroids = Vec::with_capacity(k);
                    for _ in 0..k {
                        centroids.push(read_f64_values(cur, dim, "codebook")?);
                    }
                    codebooks.push(Codebook { dim, centroids });
                }
            }

            let width = bits_per_index(k);
            let index_bytes = (m * s * width as usize).div_ceil(8);
            let bytes = cur.take(index_bytes)?;
            let mut bits = BitReader::new(bytes);
            let mut assignments = Vec::with_capacity(m * s);
            for _ in 0..m * s {
                let a = bits.read(width)? as usize;
                if a >= k {
                    return Err(Error::CorruptFile(format!(
                        "assignment index {a} out of range for k = {k}"
                    )));
                }
                assignments.push(a as u32);
            }

            let q = QuantizedLayer {
                m,
                n,
                s,
                k,
                codebooks,
                assignments,
                binary_codebook,
            };
            q.validate().map_err(|e| Error::CorruptFile(e.to_string()))?;
            LayerWeights::Quantized(q)
        }
        other => return Err(Error::CorruptFile(format!("unknown layer kind {other}"))),
    };

    let n = match &weights {
        LayerWeights::Dense(w) => w.cols(),
        LayerWeights::Quantized(q) => q.n,
    };
    let bias = read_f64_values(cur, n, "bias")?;
    Ok(CompressedLayer {
        weights,
        bias,
        activation,
    })
}

/// Serializes a model (dense and/or quantized layers) to bytes.
pub fn save_model(model: &CompressedNetwork) -> Result<Vec<u8>> {
    let mut out = Vec::new();
    out.extend_from_slice(MAGIC);
    out.extend_from_slice(&(model.layers.len() as u32).to_le_bytes());
    for layer in &model.layers {
        write_layer(&mut out, layer)?;
    }
    Ok(out)
}

/// Parses a model from bytes; trailing bytes are rejected.
pub fn load_model(bytes: &[u8]) -> Result<CompressedNetwork> {
    let mut cur = Cursor::new(bytes);
    let magic = cur.take(4)?;
    if magic != MAGIC {
        return Err(Error::CorruptFile("bad magic".into()));
    }
    let count = cur.u32()? as usize;
    let mut layers = Vec::new();
    for _ in 0..count {
        layers.push(read_layer(&mut cur)?);
    }
    if cur.remaining() != 0 {
        return Err(Error::CorruptFile(format!(
            "{} trailing bytes",
            cur.remaining()
        )));
    }
    Ok(CompressedNetwork { layers })
}

/// Serializes an all-dense network.
pub fn save_dense(net: &Network) -> Result<Vec<u8>> {
    save_model(&CompressedNetwork::from_network(net))
}

/// Parses an all-dense network; quantized chunks are an error here.
pub fn load_dense(bytes: &[u8]) -> Result<Network> {
    let model = load_model(bytes)?;
    if model
        .layers
        .iter()
        .any(|l| matches!(l.weights, LayerWeights::Quantized(_)))
    {
        return Err(Error::CorruptFile(
            "expected a dense model, found quantized layers".into(),
        ));
    }
    model.to_network()
}

/// Weight payload bits, excluding headers, padding, and biases. Dense
/// layers count 32 bits per weight; quantized layers count index plus
/// codebook bits.
pub fn measured_size_bits(model: &CompressedNetwork) -> u64 {
    model
        .layers
        .iter()
        .map(|l| match &l.weights {
            LayerWeights::Dense(w) => 32 * w.rows() as u64 * w.cols() as u64,
            LayerWeights::Quantized(q) => q.index_bits() + q.codebook_bits(),
        })
        .sum()
}

/// Bias payload bits, reported separately from the weight payload.
pub fn bias_size_bits(model: &CompressedNetwork) -> u64 {
    model.layers.iter().map(|l| 32 * l.bias.len() as u64).sum()
}
