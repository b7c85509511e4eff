//! Dataset ingestion: IDX image/label files (the MNIST container format,
//! optionally gzipped) and seeded synthetic class blobs for fast tests.

use std::io::Read;
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

use crate::error::{Error, Result};
use crate::nn::Dataset;

const IMAGES_MAGIC: u32 = 0x0000_0803;
const LABELS_MAGIC: u32 = 0x0000_0801;

fn read_be_u32(bytes: &[u8], pos: usize) -> Result<u32> {
    let end = pos
        .checked_add(4)
        .ok_or_else(|| Error::MalformedIdx("offset overflow".into()))?;
    if end > bytes.len() {
        return Err(Error::MalformedIdx("truncated header".into()));
    }
    Ok(u32::from_be_bytes([
        bytes[pos],
        bytes[pos + 1],
        bytes[pos + 2],
        bytes[pos + 3],
    ]))
}

/// Parses an IDX image file into flat pixel vectors scaled to [0, 1].
pub fn load_idx_images(bytes: &[u8]) -> Result<Vec<Vec<f64>>> {
    let magic = read_be_u32(bytes, 0)?;
    if magic != IMAGES_MAGIC {
        return Err(Error::MalformedIdx(format!(
            "image magic {magic:#010x}, expected {IMAGES_MAGIC:#010x}"
        )));
    }
    let count = read_be_u32(bytes, 4)? as usize;
    let rows = read_be_u32(bytes, 8)? as usize;
    let cols = read_be_u32(bytes, 12)? as usize;
    let pixels = rows
        .checked_mul(cols)
        .and_then(|p| p.checked_mul(count))
        .ok_or_else(|| Error::MalformedIdx("size overflow".into()))?;
    let payload = &bytes[16.min(bytes.len())..];
    if payload.len() != pixels {
        return Err(Error::MalformedIdx(format!(
            "payload holds {} bytes, header declares {pixels}",
            payload.len()
        )));
    }
    let dim = rows * cols;
    Ok(payload
        .chunks(dim.max(1))
        .take(count)
        .map(|img| img.iter().map(|&p| p as f64 / 255.0).collect())
        .collect())
}

/// Parses an IDX label file into class indices.
pub fn load_idx_labels(bytes: &[u8]) -> Result<Vec<usize>> {
    let magic = read_be_u32(bytes, 0)?;
    if magic != LABELS_MAGIC {
        return Err(Error::MalformedIdx(format!(
            "label magic {magic:#010x}, expected {LABELS_MAGIC:#010x}"
        )));
    }
    let count = read_be_u32(bytes, 4)? as usize;
    let payload = &bytes[8.min(bytes.len())..];
    if payload.len() != count {
        return Err(Error::MalformedIdx(format!(
            "payload holds {} labels, header declares {count}",
            payload.len()
        )));
    }
    Ok(payload.iter().map(|&l| l as usize).collect())
}

/// Reads a file, transparently gunzipping when it starts with the gzip
/// magic bytes 0x1f 0x8b.
pub fn read_maybe_gzipped(path: &Path) -> Result<Vec<u8>> {
    let raw = std::fs::read(path)?;
    if raw.len() >= 2 && raw[0] == 0x1f && raw[1] == 0x8b {
        let mut decoded = Vec::new();
        flate2::read::GzDecoder::new(&raw[..])
            .read_to_end(&mut decoded)
            .map_err(|e| Error::MalformedIdx(format!("gzip: {e}")))?;
        Ok(decoded)
    } else {
        Ok(raw)
    }
}

pub fn load_idx_images_from_path(path: &Path) -> Result<Vec<Vec<f64>>> {
    load_idx_images(&read_maybe_gzipped(path)?)
}

pub fn load_idx_labels_from_path(path: &Path) -> Result<Vec<usize>> {
    load_idx_labels(&read_maybe_gzipped(path)?)
}

/// Unit basis vector encoding of class labels.
pub fn to_one_hot(labels: &[usize], classes: usize) -> Result<Vec<Vec<f64>>> {
    labels
        .iter()
        .map(|&l| {
            if l >= classes {
                return Err(Error::InvalidLabel { label: l, classes });
            }
            let mut v = vec![0.0; classes];
            v[l] = 1.0;
            Ok(v)
        })
        .collect()
}

/// Assembles a classification dataset from images and labels.
pub fn dataset_from_parts(
    images: Vec<Vec<f64>>,
    labels: &[usize],
    classes: usize,
) -> Result<Dataset> {
    if images.len() != labels.len() {
        return Err(Error::ShapeMismatch(format!(
            "{} images vs {} labels",
            images.len(),
            labels.len()
        )));
    }
    let targets = to_one_hot(labels, classes)?;
    Dataset::new(images, targets, classes)
}

/// Seeded Gaussian class blobs: one unit-variance blob per class, class
/// means pairwise `separation` apart (exactly so while classes <= dims),
/// labels assigned round-robin. Identical seeds give identical datasets.
pub fn synth_dataset(
    seed: u64,
    examples: usize,
    dims: usize,
    classes: usize,
    separation: f64,
) -> Dataset {
    assert!(classes >= 2, "need at least two classes");
    assert!(dims >= 1, "need at least one dimension");

    let scale = separation / 2f64.sqrt();
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|c| {
            let mut mean = vec![0.0; dims];
            mean[c % dims] = scale * (1.0 + (c / dims) as f64);
            mean
        })
        .collect();

    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut inputs = Vec::with_capacity(examples);
    let mut targets = Vec::with_capacity(examples);
    for i in 0..examples {
        let class = i % classes;
        let x: Vec<f64> = means[class]
            .iter()
            .map(|&m| {
                let noise: f64 = StandardNormal.sample(&mut rng);
                m + noise
            })
            .collect();
        inputs.push(x);
        let mut t = vec![0.0; classes];
        t[class] = 1.0;
        targets.push(t);
    }
    Dataset {
        inputs,
        targets,
        classes,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Independent IDX encoders used as the parser oracle.
    pub fn encode_idx_images(images: &[Vec<u8>], rows: usize, cols: usize) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&IMAGES_MAGIC.to_be_bytes());
        out.extend_from_slice(&(images.len() as u32).to_be_bytes());
        out.extend_from_slice(&(rows as u32).to_be_bytes());
        out.extend_from_slice(&(cols as u32).to_be_bytes());
        for img in images {
            out.extend_from_slice(img);
        }
        out
    }

    pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&LABELS_MAGIC.to_be_bytes());
        out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
        out.extend_from_slice(labels);
        out
    }

    #[test]
    fn parses_single_all_zero_image() {
        let bytes = encode_idx_images(&[vec![0u8; 4]], 2, 2);
        let images = load_idx_images(&bytes).unwrap();
        assert_eq!(images, vec![vec![0.0; 4]]);
    }

    #[test]
    fn pixel_scaling_and_flattening() {
        let bytes = encode_idx_images(&[vec![0, 51, 102, 255]], 2, 2);
        let images = load_idx_images(&bytes).unwrap();
        assert_eq!(images[0].len(), 4);
        assert_eq!(images[0][0], 0.0);
        assert!((images[0][1] - 0.2).abs() < 1e-12);
        assert_eq!(images[0][3], 1.0);
        assert!(images[0].iter().all(|&p| (0.0..=1.0).contains(&p)));
    }

    #[test]
    fn parses_labels() {
        let bytes = encode_idx_labels(&[3, 0, 9]);
        assert_eq!(load_idx_labels(&bytes).unwrap(), vec![3, 0, 9]);
    }

    #[test]
    fn rejects_wrong_magic_and_size_mismatch() {
        let images = encode_idx_images(&[vec![0u8; 4]], 2, 2);
        assert!(matches!(
            load_idx_labels(&images),
            Err(Error::MalformedIdx(_))
        ));

        let mut short = images.clone();
        short.pop();
        assert!(matches!(
            load_idx_images(&short),
            Err(Error::MalformedIdx(_))
        ));

        let mut long = images;
        long.push(7);
        assert!(matches!(
            load_idx_images(&long),
            Err(Error::MalformedIdx(_))
        ));
    }

    #[test]
    fn fuzzed_inputs_never_read_out_of_bounds() {
        // Truncations and byte mutations must return cleanly (Ok or Err),
        // and every truncation must be rejected.
        let base = encode_idx_images(
            &(0..7).map(|i| vec![i as u8; 9]).collect::<Vec<_>>(),
            3,
            3,
        );
        for cut in 0..base.len() {
            assert!(load_idx_images(&base[..cut]).is_err(), "cut {cut}");
        }
        let mut state = 0xabcdef99u64;
        for _ in 0..1000 {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            let pos = (state >> 16) as usize % base.len();
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1);
            let val = (state >> 24) as u8;
            let mut mutant = base.clone();
            mutant[pos] = val;
            let _ = load_idx_images(&mutant);
            let _ = load_idx_labels(&mutant);
        }
    }

    #[test]
    fn gzip_round_trip() {
        use flate2::write::GzEncoder;
        use flate2::Compression;
        use std::io::Write;

        let bytes = encode_idx_labels(&[1, 2, 3]);
        let mut enc = GzEncoder::new(Vec::new(), Compression::default());
        enc.write_all(&bytes).unwrap();
        let gz = enc.finish().unwrap();

        let dir = std::env::temp_dir().join("binq-core-gz-test");
        std::fs::create_dir_all(&dir).unwrap();
        let path = dir.join("labels.gz");
        std::fs::write(&path, &gz).unwrap();
        assert_eq!(load_idx_labels_from_path(&path).unwrap(), vec![1, 2, 3]);

        let plain_path = dir.join("labels.idx");
        std::fs::write(&plain_path, &bytes).unwrap();
        assert_eq!(load_idx_labels_from_path(&plain_path).unwrap(), vec![1, 2, 3]);
    }

    #[test]
    fn one_hot_examples() {
        let t = to_one_hot(&[3], 10).unwrap();
        assert_eq!(t[0][3], 1.0);
        assert_eq!(t[0].iter().sum::<f64>(), 1.0);

        for l in 0..10 {
            let t = to_one_hot(&[l], 10).unwrap();
            assert_eq!(crate::nn::argmax(&t[0]), l);
        }

        assert!(matches!(
            to_one_hot(&[10], 10),
            Err(Error::InvalidLabel { label: 10, classes: 10 })
        ));
    }

    #[test]
    fn synth_is_deterministic_and_balanced() {
        let a = synth_dataset(5, 100, 3, 4, 2.0);
        let b = synth_dataset(5, 100, 3, 4, 2.0);
        assert_eq!(a.inputs, b.inputs);
        assert_eq!(a.targets, b.targets);

        let c = synth_dataset(6, 100, 3, 4, 2.0);
        assert_ne!(a.inputs, c.inputs);

        for class in 0..4 {
            let count = a
                .targets
                .iter()
                .filter(|t| crate::nn::argmax(t) == class)
                .count();
            assert_eq!(count, 25);
        }
    }

    #[test]
    fn zero_separation_gives_identical_class_distributions() {
        // With separation 0 the class means coincide, so inputs carry no
        // class information; all means are exactly zero.
        let d = synth_dataset(1, 50, 4, 5, 0.0);
        assert_eq!(d.classes, 5);
        // No structural difference: per-class empirical means are close.
        let mean_of = |class: usize| -> Vec<f64> {
            let rows: Vec<&Vec<f64>> = d
                .inputs
                .iter()
                .zip(&d.targets)
                .filter(|(_, t)| crate::nn::argmax(t) == class)
                .map(|(x, _)| x)
                .collect();
            (0..4)
                .map(|j| rows.iter().map(|r| r[j]).sum::<f64>() / rows.len() as f64)
                .collect()
        };
        for class in 0..5 {
            for v in mean_of(class) {
                assert!(v.abs() < 1.0);
            }
        }
    }

    #[test]
    fn separated_blobs_are_trainable() {
        use crate::nn::{evaluate, init_network, TrainConfig};
        use crate::regularizer::train_regularized;

        let train = synth_dataset(3, 200, 2, 2, 10.0);
        let test = synth_dataset(4, 100, 2, 2, 10.0);
        let net = init_network(&[2, 8, 2], 0).unwrap();
        let cfg = TrainConfig {
            learning_rate: 0.1,
            batch_size: 16,
            epochs: 30,
            alpha0: 0.0,
            barrier_c: 1.0,
            seed: 0,
            regularized_layers: vec![],
        };
        let (trained, _) = train_regularized(&net, &train, None, &cfg).unwrap();
        let err = evaluate(&trained, &test).unwrap();
        assert!(err <= 0.02, "error {err}");
    }
}
