//! IDX ingestion and preparation of amplitude-embedding features.
//!
//! Expected layout under a dataset root:
//!
//! ```text
//! <root>/<name>/train-images-idx3-ubyte[.gz]
//! <root>/<name>/train-labels-idx1-ubyte[.gz]
//! <root>/<name>/t10k-images-idx3-ubyte[.gz]
//! <root>/<name>/t10k-labels-idx1-ubyte[.gz]
//! ```

use std::fmt;
use std::io::Read;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flate2::read::GzDecoder;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

const IMAGE_MAGIC: u32 = 0x0000_0803;
const LABEL_MAGIC: u32 = 0x0000_0801;

/// Decoded contents of one IDX file.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum IdxData {
    Images {
        count: usize,
        rows: usize,
        cols: usize,
        pixels: Vec<u8>,
    },
    Labels(Vec<u8>),
}

fn parse_err(offset: usize, message: impl Into<String>) -> Error {
    Error::Parse {
        offset,
        message: message.into(),
    }
}

fn read_u32(bytes: &[u8], offset: usize) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| parse_err(offset.min(bytes.len()), "truncated header"))
}

/// Parses an unsigned-byte IDX payload with a 3-d image or 1-d label header.
pub fn parse_idx(bytes: &[u8]) -> Result<IdxData> {
    if bytes.is_empty() {
        return Err(parse_err(0, "empty input"));
    }
    let magic = read_u32(bytes, 0)?;
    let n_dims = match magic {
        IMAGE_MAGIC => 3,
        LABEL_MAGIC => 1,
        other => return Err(parse_err(0, format!("bad magic 0x{other:08x}"))),
    };
    let dims = (0..n_dims)
        .map(|d| read_u32(bytes, 4 + 4 * d).map(|v| v as usize))
        .collect::<Result<Vec<_>>>()?;
    let header = 4 + 4 * n_dims;
    let expected = dims
        .iter()
        .try_fold(1usize, |acc, &d| acc.checked_mul(d))
        .ok_or_else(|| parse_err(4, "dimension product overflows"))?;
    let payload = &bytes[header..];
    if payload.len() < expected {
        return Err(parse_err(
            bytes.len(),
            format!("truncated payload: expected {expected} bytes, found {}", payload.len()),
        ));
    }
    if payload.len() > expected {
        return Err(parse_err(
            header + expected,
            format!("{} trailing bytes after payload", payload.len() - expected),
        ));
    }
    Ok(match n_dims {
        3 => IdxData::Images {
            count: dims[0],
            rows: dims[1],
            cols: dims[2],
            pixels: payload.to_vec(),
        },
        _ => IdxData::Labels(payload.to_vec()),
    })
}

/// Reads and parses an IDX file, decompressing it if it starts with the gzip
/// magic bytes.
pub fn read_idx_file(path: &Path) -> Result<IdxData> {
    let raw = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    let bytes = if raw.starts_with(&[0x1f, 0x8b]) {
        let mut out = Vec::new();
        GzDecoder::new(raw.as_slice())
            .read_to_end(&mut out)
            .map_err(|e| Error::io(path, e))?;
        out
    } else {
        raw
    };
    parse_idx(&bytes).map_err(|e| match e {
        Error::Parse { offset, message } => Error::Parse {
            offset,
            message: format!("{}: {message}", path.display()),
        },
        other => other,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn prefix(self) -> &'static str {
        match self {
            Split::Train => "train",
            Split::Test => "t10k",
        }
    }
}

/// Grayscale images with one label each.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RawDataset {
    pub rows: usize,
    pub cols: usize,
    /// Row-major, `rows * cols` bytes per image.
    pub pixels: Vec<u8>,
    pub labels: Vec<u8>,
}

impl RawDataset {
    pub fn new(rows: usize, cols: usize, pixels: Vec<u8>, labels: Vec<u8>) -> Result<Self> {
        if rows == 0 || cols == 0 {
            return Err(Error::usage("images must have at least one pixel"));
        }
        if pixels.len() != rows * cols * labels.len() {
            return Err(Error::usage(format!(
                "{} labels but {} pixels of {rows}x{cols} images",
                labels.len(),
                pixels.len()
            )));
        }
        Ok(Self {
            rows,
            cols,
            pixels,
            labels,
        })
    }

    pub fn from_idx(images: IdxData, labels: IdxData) -> Result<Self> {
        match (images, labels) {
            (
                IdxData::Images {
                    count,
                    rows,
                    cols,
                    pixels,
                },
                IdxData::Labels(labels),
            ) => {
                if count != labels.len() {
                    return Err(Error::usage(format!(
                        "{count} images but {} labels",
                        labels.len()
                    )));
                }
                Self::new(rows, cols, pixels, labels)
            }
            _ => Err(Error::usage("expected an image file and a label file")),
        }
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image(&self, i: usize) -> &[u8] {
        let size = self.rows * self.cols;
        &self.pixels[i * size..(i + 1) * size]
    }
}

fn idx_path(dir: &Path, stem: &str) -> Result<PathBuf> {
    let plain = dir.join(stem);
    if plain.is_file() {
        return Ok(plain);
    }
    let gz = dir.join(format!("{stem}.gz"));
    if gz.is_file() {
        return Ok(gz);
    }
    Err(Error::io(
        &plain,
        std::io::Error::new(std::io::ErrorKind::NotFound, "IDX file not found (also tried .gz)"),
    ))
}

/// Loads one split of the dataset called `name` under `root`.
pub fn load_split(root: &Path, name: &str, split: Split) -> Result<RawDataset> {
    let dir = root.join(name);
    let images = read_idx_file(&idx_path(&dir, &format!("{}-images-idx3-ubyte", split.prefix()))?)?;
    let labels = read_idx_file(&idx_path(&dir, &format!("{}-labels-idx1-ubyte", split.prefix()))?)?;
    RawDataset::from_idx(images, labels)
}

/// Resampling filter used to shrink or grow images.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum ResizeFilter {
    /// Bilinear interpolation with corner-aligned sampling.
    Bilinear,
    /// Separable triangle filter whose support widens with the downscale
    /// factor, so every input pixel contributes. Equal to `Bilinear` with
    /// pixel-centre sampling when upsampling.
    #[default]
    Antialiased,
}

impl fmt::Display for ResizeFilter {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            ResizeFilter::Bilinear => "bilinear",
            ResizeFilter::Antialiased => "antialiased",
        })
    }
}

impl FromStr for ResizeFilter {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "bilinear" => Ok(ResizeFilter::Bilinear),
            "antialiased" => Ok(ResizeFilter::Antialiased),
            other => Err(Error::usage(format!(
                "unknown resize filter '{other}' (expected bilinear or antialiased)"
            ))),
        }
    }
}

/// Corner-aligned bilinear resize: output pixel `(i, j)` samples the input at
/// `(i·(h−1)/(side−1), j·(w−1)/(side−1))`.
pub fn resize_bilinear(image: &[f64], h: usize, w: usize, side: usize) -> Result<Vec<f64>> {
    check_resize(image, h, w, side)?;
    let coord = |k: usize, n: usize| -> f64 {
        if side == 1 || n == 1 {
            0.0
        } else {
            k as f64 * (n - 1) as f64 / (side - 1) as f64
        }
    };
    let mut out = Vec::with_capacity(side * side);
    for i in 0..side {
        let y = coord(i, h);
        let y0 = (y.floor() as usize).min(h - 1);
        let y1 = (y0 + 1).min(h - 1);
        let fy = y - y0 as f64;
        for j in 0..side {
            let x = coord(j, w);
            let x0 = (x.floor() as usize).min(w - 1);
            let x1 = (x0 + 1).min(w - 1);
            let fx = x - x0 as f64;
            let top = image[y0 * w + x0] * (1.0 - fx) + image[y0 * w + x1] * fx;
            let bottom = image[y1 * w + x0] * (1.0 - fx) + image[y1 * w + x1] * fx;
            out.push(top * (1.0 - fy) + bottom * fy);
        }
    }
    Ok(out)
}

/// Normalized triangle-filter weights mapping `n_in` samples to `n_out`.
fn triangle_weights(n_in: usize, n_out: usize) -> Vec<(usize, Vec<f64>)> {
    let scale = n_in as f64 / n_out as f64;
    let support = scale.max(1.0);
    (0..n_out)
        .map(|o| {
            let center = (o as f64 + 0.5) * scale;
            let lo = ((center - support).floor().max(0.0)) as usize;
            let hi = ((center + support).ceil() as usize).min(n_in);
            let mut weights: Vec<f64> = (lo..hi)
                .map(|k| (1.0 - ((k as f64 + 0.5 - center) / support).abs()).max(0.0))
                .collect();
            let total: f64 = weights.iter().sum();
            weights.iter_mut().for_each(|w| *w /= total);
            (lo, weights)
        })
        .collect()
}

/// Separable antialiased resize (see [`ResizeFilter::Antialiased`]).
pub fn resize_antialiased(image: &[f64], h: usize, w: usize, side: usize) -> Result<Vec<f64>> {
    check_resize(image, h, w, side)?;
    let wx = triangle_weights(w, side);
    let wy = triangle_weights(h, side);
    let mut rows = vec![0.0; h * side];
    for r in 0..h {
        for (j, (lo, ws)) in wx.iter().enumerate() {
            rows[r * side + j] = ws
                .iter()
                .enumerate()
                .map(|(k, wt)| wt * image[r * w + lo + k])
                .sum();
        }
    }
    let mut out = vec![0.0; side * side];
    for (i, (lo, ws)) in wy.iter().enumerate() {
        for j in 0..side {
            out[i * side + j] = ws
                .iter()
                .enumerate()
                .map(|(k, wt)| wt * rows[(lo + k) * side + j])
                .sum();
        }
    }
    Ok(out)
}

fn check_resize(image: &[f64], h: usize, w: usize, side: usize) -> Result<()> {
    if side == 0 {
        return Err(Error::usage("resize side must be positive"));
    }
    if h == 0 || w == 0 || image.len() != h * w {
        return Err(Error::usage(format!(
            "image of {} pixels is not {h}x{w}",
            image.len()
        )));
    }
    Ok(())
}

pub fn resize(filter: ResizeFilter, image: &[f64], h: usize, w: usize, side: usize) -> Result<Vec<f64>> {
    match filter {
        ResizeFilter::Bilinear => resize_bilinear(image, h, w, side),
        ResizeFilter::Antialiased => resize_antialiased(image, h, w, side),
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PrepareConfig {
    pub n_qubits: usize,
    pub n_classes: usize,
    pub seed: u64,
    pub filter: ResizeFilter,
}

impl PrepareConfig {
    pub fn new(n_qubits: usize, n_classes: usize, seed: u64) -> Self {
        Self {
            n_qubits,
            n_classes,
            seed,
            filter: ResizeFilter::default(),
        }
    }
}

/// Unit-norm feature vectors with labels in `[0, n_classes)`.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    features: Vec<Vec<f64>>,
    labels: Vec<usize>,
    n_classes: usize,
}

impl Dataset {
    /// Validates lengths, norms and labels.
    pub fn new(features: Vec<Vec<f64>>, labels: Vec<usize>, n_classes: usize) -> Result<Self> {
        if features.len() != labels.len() {
            return Err(Error::usage(format!(
                "{} feature vectors but {} labels",
                features.len(),
                labels.len()
            )));
        }
        let dim = features.first().map_or(0, Vec::len);
        for (i, (f, &y)) in features.iter().zip(&labels).enumerate() {
            if f.len() != dim {
                return Err(Error::usage(format!(
                    "sample {i} has {} features, expected {dim}",
                    f.len()
                )));
            }
            crate::circuit::check_unit_norm(f)
                .map_err(|e| Error::usage(format!("sample {i}: {e}")))?;
            if y >= n_classes {
                return Err(Error::usage(format!(
                    "sample {i} has label {y} outside [0, {n_classes})"
                )));
            }
        }
        Ok(Self {
            features,
            labels,
            n_classes,
        })
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.features.first().map_or(0, Vec::len)
    }

    pub fn n_classes(&self) -> usize {
        self.n_classes
    }

    pub fn features(&self) -> &[Vec<f64>] {
        &self.features
    }

    pub fn labels(&self) -> &[usize] {
        &self.labels
    }

    pub fn sample(&self, i: usize) -> (&[f64], usize) {
        (&self.features[i], self.labels[i])
    }

    /// The first `n` samples (all of them if `n` exceeds the length).
    pub fn take(&self, n: usize) -> Self {
        let n = n.min(self.len());
        Self {
            features: self.features[..n].to_vec(),
            labels: self.labels[..n].to_vec(),
            n_classes: self.n_classes,
        }
    }

    /// Per-class counts.
    pub fn histogram(&self) -> Vec<usize> {
        let mut h = vec![0; self.n_classes];
        for &y in &self.labels {
            h[y] += 1;
        }
        h
    }
}

/// `x / ‖x‖₂`, or `e₀` for the zero vector.
pub fn l2_normalize(x: &[f64]) -> Vec<f64> {
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm == 0.0 {
        let mut e0 = vec![0.0; x.len()];
        e0[0] = 1.0;
        return e0;
    }
    x.iter().map(|v| v / norm).collect()
}

/// Filters to labels `< n_classes`, resizes to `2^(n/2)` per side, flattens
/// row-major, scales to `[0, 1]`, normalizes, and shuffles by seed.
pub fn prepare(raw: &RawDataset, config: &PrepareConfig) -> Result<Dataset> {
    let n = config.n_qubits;
    if n == 0 || n % 2 != 0 {
        return Err(Error::usage(format!(
            "image datasets need an even, positive qubit count, got {n}"
        )));
    }
    if config.n_classes == 0 || config.n_classes > n {
        return Err(Error::usage(format!(
            "n_classes must be in 1..={n}, got {}",
            config.n_classes
        )));
    }
    let side = 1usize << (n / 2);
    let mut samples = Vec::new();
    for i in 0..raw.len() {
        let label = raw.labels[i] as usize;
        if label >= config.n_classes {
            continue;
        }
        let image: Vec<f64> = raw.image(i).iter().map(|&p| p as f64).collect();
        let small = resize(config.filter, &image, raw.rows, raw.cols, side)?;
        let scaled: Vec<f64> = small.iter().map(|p| p / 255.0).collect();
        samples.push((l2_normalize(&scaled), label));
    }
    if samples.is_empty() {
        return Err(Error::usage(format!(
            "no samples with label < {}",
            config.n_classes
        )));
    }
    samples.shuffle(&mut ChaCha8Rng::seed_from_u64(config.seed));
    let (features, labels) = samples.into_iter().unzip();
    Ok(Dataset {
        features,
        labels,
        n_classes: config.n_classes,
    })
}
