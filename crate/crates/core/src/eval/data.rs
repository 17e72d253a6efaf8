use std::fs;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::autodiff::Tensor;
use crate::error::{Error, Result};

pub const IDX_IMAGE_MAGIC: u32 = 0x0000_0803;
pub const IDX_LABEL_MAGIC: u32 = 0x0000_0801;

/// Labelled feature matrix, one sample per row.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    x: Tensor<f64>,
    y: Vec<usize>,
    classes: usize,
}

impl Dataset {
    pub fn new(x: Tensor<f64>, y: Vec<usize>, classes: usize) -> Result<Self> {
        let (n, _) = x.dims2()?;
        if n != y.len() {
            return Err(Error::Dimension {
                op: "dataset",
                lhs: x.shape().to_vec(),
                rhs: vec![y.len()],
            });
        }
        if let Some(&bad) = y.iter().find(|&&c| c >= classes) {
            return Err(Error::Index(format!("label {bad} with {classes} classes")));
        }
        Ok(Self { x, y, classes })
    }

    pub fn len(&self) -> usize {
        self.y.len()
    }

    pub fn is_empty(&self) -> bool {
        self.y.is_empty()
    }

    pub fn dim(&self) -> usize {
        self.x.cols()
    }

    pub fn classes(&self) -> usize {
        self.classes
    }

    pub fn x(&self) -> &Tensor<f64> {
        &self.x
    }

    pub fn y(&self) -> &[usize] {
        &self.y
    }

    /// Rows `idx` as a batch.
    pub fn batch(&self, idx: &[usize]) -> Result<(Tensor<f64>, Vec<usize>)> {
        Ok((
            self.x.gather_rows(idx)?,
            idx.iter().map(|&i| self.y[i]).collect(),
        ))
    }

    pub fn subset(&self, idx: &[usize]) -> Result<Self> {
        let (x, y) = self.batch(idx)?;
        Self::new(x, y, self.classes)
    }

    /// First `n` rows and the rest.
    pub fn split_at(&self, n: usize) -> Result<(Self, Self)> {
        let n = n.min(self.len());
        let head: Vec<usize> = (0..n).collect();
        let tail: Vec<usize> = (n..self.len()).collect();
        Ok((self.subset(&head)?, self.subset(&tail)?))
    }

    /// Fraction of rows whose arg-max score equals the label.
    pub fn accuracy(&self, logits: &Tensor<f64>) -> f64 {
        if self.is_empty() {
            return 0.0;
        }
        let hits = logits
            .argmax_rows()
            .iter()
            .zip(&self.y)
            .filter(|(p, y)| p == y)
            .count();
        hits as f64 / self.len() as f64
    }
}

/// A training split and a held-out split.
#[derive(Clone, Debug, PartialEq)]
pub struct Splits {
    pub train: Dataset,
    pub valid: Dataset,
}

impl Splits {
    /// `train_fraction` of the rows (rounded) go to `train`, in order.
    pub fn from_fraction(data: &Dataset, train_fraction: f64) -> Result<Self> {
        if !(train_fraction > 0.0 && train_fraction < 1.0) {
            return Err(Error::Parameter(format!(
                "train fraction {train_fraction} outside (0, 1)"
            )));
        }
        let n = (data.len() as f64 * train_fraction).round() as usize;
        let (train, valid) = data.split_at(n)?;
        if train.is_empty() || valid.is_empty() {
            return Err(Error::Parameter(format!(
                "{} rows cannot be split",
                data.len()
            )));
        }
        Ok(Self { train, valid })
    }

    /// Search-time split: the training set halved into weight and
    /// architecture folds.
    pub fn search_halves(&self) -> Result<Self> {
        Self::from_fraction(&self.train, 0.5)
    }
}

/// Where a dataset comes from.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSpec {
    /// Gaussian clusters with unit spread, centres `separation` apart.
    Blobs {
        n: usize,
        classes: usize,
        dim: usize,
        separation: f64,
    },
    /// Interleaved 2-D spiral arms, one per class.
    Spirals {
        n: usize,
        classes: usize,
        turns: f64,
        noise: f64,
    },
    /// Images and labels in IDX files; `limit` keeps the first rows.
    IdxFiles {
        images: PathBuf,
        labels: PathBuf,
        #[serde(default)]
        limit: Option<usize>,
    },
}

impl Default for DatasetSpec {
    fn default() -> Self {
        DatasetSpec::Spirals {
            n: 3000,
            classes: 3,
            turns: 1.0,
            noise: 0.04,
        }
    }
}

/// Builds a dataset. Synthetic rows are emitted in shuffled order so that
/// any prefix split is class-balanced in expectation.
pub fn make_dataset<R: Rng + ?Sized>(spec: &DatasetSpec, rng: &mut R) -> Result<Dataset> {
    match spec {
        DatasetSpec::Blobs {
            n,
            classes,
            dim,
            separation,
        } => blobs(*n, *classes, *dim, *separation, rng),
        DatasetSpec::Spirals {
            n,
            classes,
            turns,
            noise,
        } => spirals(*n, *classes, *turns, *noise, rng),
        DatasetSpec::IdxFiles {
            images,
            labels,
            limit,
        } => idx_dataset(images, labels, *limit),
    }
}

fn check_synthetic(n: usize, classes: usize) -> Result<()> {
    if n == 0 || classes < 2 {
        return Err(Error::Config(format!(
            "synthetic data needs n ≥ 1 and ≥ 2 classes, got {n}, {classes}"
        )));
    }
    Ok(())
}

fn normal<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    StandardNormal.sample(rng)
}

fn blobs<R: Rng + ?Sized>(
    n: usize,
    classes: usize,
    dim: usize,
    separation: f64,
    rng: &mut R,
) -> Result<Dataset> {
    check_synthetic(n, classes)?;
    if dim == 0 || !(separation >= 0.0) {
        return Err(Error::Config(
            "blobs need dim ≥ 1 and separation ≥ 0".into(),
        ));
    }
    // Scaled simplex vertices are pairwise `separation` apart; with fewer
    // dimensions than classes the centres are random directions instead.
    let centres: Vec<Vec<f64>> = (0..classes)
        .map(|c| {
            if dim >= classes {
                (0..dim)
                    .map(|j| {
                        if j == c {
                            separation / 2f64.sqrt()
                        } else {
                            0.0
                        }
                    })
                    .collect()
            } else {
                let v: Vec<f64> = (0..dim).map(|_| normal(rng)).collect();
                let norm = v.iter().map(|a| a * a).sum::<f64>().sqrt().max(1e-12);
                v.iter().map(|a| a / norm * separation).collect()
            }
        })
        .collect();
    let mut x = Vec::with_capacity(n * dim);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let c = rng.random_range(0..classes);
        x.extend(centres[c].iter().map(|m| m + normal(rng)));
        y.push(c);
    }
    Dataset::new(Tensor::new(vec![n, dim], x)?, y, classes)
}

fn spirals<R: Rng + ?Sized>(
    n: usize,
    classes: usize,
    turns: f64,
    noise: f64,
    rng: &mut R,
) -> Result<Dataset> {
    check_synthetic(n, classes)?;
    if !(turns > 0.0 && noise >= 0.0) {
        return Err(Error::Config("spirals need turns > 0 and noise ≥ 0".into()));
    }
    let tau = std::f64::consts::TAU;
    let mut x = Vec::with_capacity(n * 2);
    let mut y = Vec::with_capacity(n);
    for _ in 0..n {
        let c = rng.random_range(0..classes);
        let t: f64 = rng.random_range(0.05..1.0);
        let angle = turns * tau * t + tau * c as f64 / classes as f64;
        x.push(t * angle.cos() + noise * normal(rng));
        x.push(t * angle.sin() + noise * normal(rng));
        y.push(c);
    }
    Dataset::new(Tensor::new(vec![n, 2], x)?, y, classes)
}

fn read_u32(bytes: &[u8], offset: usize, what: &str) -> Result<u32> {
    bytes
        .get(offset..offset + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::parse(format!("offset {offset}"), format!("truncated {what}")))
}

/// Parses an IDX image file into (count, rows, cols, pixels).
pub fn parse_idx_images(bytes: &[u8]) -> Result<(usize, usize, usize, Vec<u8>)> {
    let magic = read_u32(bytes, 0, "magic number")?;
    if magic != IDX_IMAGE_MAGIC {
        return Err(Error::parse(
            "offset 0",
            format!("bad image magic {magic:#010x}, expected {IDX_IMAGE_MAGIC:#010x}"),
        ));
    }
    let n = read_u32(bytes, 4, "image count")? as usize;
    let rows = read_u32(bytes, 8, "row count")? as usize;
    let cols = read_u32(bytes, 12, "column count")? as usize;
    let need = n * rows * cols;
    let body = &bytes[16..];
    if body.len() < need {
        return Err(Error::parse(
            format!("offset {}", 16 + body.len()),
            format!("truncated pixel data: {} of {need} bytes", body.len()),
        ));
    }
    Ok((n, rows, cols, body[..need].to_vec()))
}

pub fn parse_idx_labels(bytes: &[u8]) -> Result<Vec<u8>> {
    let magic = read_u32(bytes, 0, "magic number")?;
    if magic != IDX_LABEL_MAGIC {
        return Err(Error::parse(
            "offset 0",
            format!("bad label magic {magic:#010x}, expected {IDX_LABEL_MAGIC:#010x}"),
        ));
    }
    let n = read_u32(bytes, 4, "label count")? as usize;
    let body = &bytes[8..];
    if body.len() < n {
        return Err(Error::parse(
            format!("offset {}", 8 + body.len()),
            format!("truncated labels: {} of {n} bytes", body.len()),
        ));
    }
    Ok(body[..n].to_vec())
}

pub fn encode_idx_images(rows: usize, cols: usize, pixels: &[u8]) -> Result<Vec<u8>> {
    if rows == 0 || cols == 0 || !pixels.len().is_multiple_of(rows * cols) {
        return Err(Error::Shape {
            shape: vec![rows, cols],
            len: pixels.len(),
        });
    }
    let n = pixels.len() / (rows * cols);
    let mut out = Vec::with_capacity(16 + pixels.len());
    for v in [IDX_IMAGE_MAGIC, n as u32, rows as u32, cols as u32] {
        out.extend_from_slice(&v.to_be_bytes());
    }
    out.extend_from_slice(pixels);
    Ok(out)
}

pub fn encode_idx_labels(labels: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(8 + labels.len());
    out.extend_from_slice(&IDX_LABEL_MAGIC.to_be_bytes());
    out.extend_from_slice(&(labels.len() as u32).to_be_bytes());
    out.extend_from_slice(labels);
    out
}

fn idx_dataset(images: &Path, labels: &Path, limit: Option<usize>) -> Result<Dataset> {
    let (n, rows, cols, pixels) = parse_idx_images(&fs::read(images)?)?;
    let lab = parse_idx_labels(&fs::read(labels)?)?;
    if lab.len() != n {
        return Err(Error::Validation(format!(
            "{n} images but {} labels",
            lab.len()
        )));
    }
    let keep = limit.map_or(n, |l| l.min(n));
    let d = rows * cols;
    let x: Vec<f64> = pixels[..keep * d]
        .iter()
        .map(|&p| p as f64 / 255.0)
        .collect();
    let y: Vec<usize> = lab[..keep].iter().map(|&c| c as usize).collect();
    let classes = y.iter().copied().max().map_or(1, |m| m + 1).max(2);
    Dataset::new(Tensor::new(vec![keep, d], x)?, y, classes)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn idx_round_trip() {
        let pixels: Vec<u8> = (0..2 * 3 * 4).map(|i| (i * 7) as u8).collect();
        let bytes = encode_idx_images(3, 4, &pixels).unwrap();
        assert_eq!(parse_idx_images(&bytes).unwrap(), (2, 3, 4, pixels));
        let labels = vec![3u8, 1];
        assert_eq!(
            parse_idx_labels(&encode_idx_labels(&labels)).unwrap(),
            labels
        );
    }

    #[test]
    fn idx_errors_carry_offsets() {
        let mut bytes = encode_idx_images(2, 2, &[1, 2, 3, 4]).unwrap();
        bytes[3] = 0x01;
        let err = parse_idx_images(&bytes).unwrap_err().to_string();
        assert!(err.contains("offset 0"), "{err}");
        let bytes = encode_idx_images(2, 2, &[1, 2, 3, 4]).unwrap();
        let err = parse_idx_images(&bytes[..18]).unwrap_err().to_string();
        assert!(err.contains("offset 18"), "{err}");
    }

    #[test]
    fn synthetic_sets_are_seeded() {
        let spec = DatasetSpec::default();
        let a = make_dataset(&spec, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        let b = make_dataset(&spec, &mut ChaCha8Rng::seed_from_u64(4)).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.dim(), 2);
        assert_eq!(a.classes(), 3);
    }

    #[test]
    fn splits() {
        let spec = DatasetSpec::Blobs {
            n: 100,
            classes: 2,
            dim: 3,
            separation: 4.0,
        };
        let d = make_dataset(&spec, &mut ChaCha8Rng::seed_from_u64(0)).unwrap();
        let s = Splits::from_fraction(&d, 0.8).unwrap();
        assert_eq!((s.train.len(), s.valid.len()), (80, 20));
        let h = s.search_halves().unwrap();
        assert_eq!((h.train.len(), h.valid.len()), (40, 40));
        assert_eq!(h.train.x().row(0), d.x().row(0));
    }
}
