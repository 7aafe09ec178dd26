use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::idx::IdxData;
use crate::data::{Sample, SequenceDataset, Split};
use crate::error::{check_dim, Error, Result};
use crate::math::Vector;

/// A fixed pixel order: position `k` of the sequence reads pixel
/// `permutation[k]` of the row-major image.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct PermutationSpec {
    pub seed: Option<u64>,
    pub permutation: Vec<usize>,
}

impl PermutationSpec {
    pub fn identity(len: usize) -> Self {
        PermutationSpec {
            seed: None,
            permutation: (0..len).collect(),
        }
    }

    /// Seeded Fisher–Yates shuffle (ChaCha8, so identical on every platform).
    pub fn from_seed(seed: u64, len: usize) -> Self {
        let mut permutation: Vec<usize> = (0..len).collect();
        permutation.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
        PermutationSpec {
            seed: Some(seed),
            permutation,
        }
    }

    pub fn len(&self) -> usize {
        self.permutation.len()
    }

    pub fn is_empty(&self) -> bool {
        self.permutation.is_empty()
    }

    pub fn is_bijection(&self) -> bool {
        let mut seen = vec![false; self.permutation.len()];
        for &p in &self.permutation {
            if p >= seen.len() || seen[p] {
                return false;
            }
            seen[p] = true;
        }
        true
    }

    pub fn inverse(&self) -> PermutationSpec {
        let mut inv = vec![0; self.permutation.len()];
        for (k, &p) in self.permutation.iter().enumerate() {
            inv[p] = k;
        }
        PermutationSpec {
            seed: self.seed,
            permutation: inv,
        }
    }
}

/// Row-major (left-to-right, top-to-bottom) pixel sequence, optionally
/// reordered by a fixed permutation. Each element is a 1-dimensional input.
pub fn sequentialize(
    image: &[f64],
    rows: usize,
    cols: usize,
    perm: Option<&PermutationSpec>,
) -> Result<Vec<Vector>> {
    check_dim("sequentialize: image size", rows * cols, image.len())?;
    match perm {
        None => Ok(image.iter().map(|&p| Vector::from(vec![p])).collect()),
        Some(perm) => {
            check_dim("sequentialize: permutation length", image.len(), perm.len())?;
            if !perm.is_bijection() {
                return Err(Error::Config("pixel permutation is not a bijection".into()));
            }
            Ok(perm.permutation.iter().map(|&k| Vector::from(vec![image[k]])).collect())
        }
    }
}

/// Inverse of [`sequentialize`]: recovers the row-major pixels.
pub fn unsequentialize(seq: &[Vector], perm: Option<&PermutationSpec>) -> Vec<f64> {
    let flat: Vec<f64> = seq.iter().map(|x| x[0]).collect();
    match perm {
        None => flat,
        Some(perm) => {
            let mut out = vec![0.0; flat.len()];
            for (k, &p) in perm.permutation.iter().enumerate() {
                out[p] = flat[k];
            }
            out
        }
    }
}

/// Average-pools non-overlapping `factor × factor` blocks (28×28 → 14×14 for factor 2).
pub fn downscale(image: &[f64], rows: usize, cols: usize, factor: usize) -> Result<(Vec<f64>, usize, usize)> {
    check_dim("downscale: image size", rows * cols, image.len())?;
    if factor == 0 || !rows.is_multiple_of(factor) || !cols.is_multiple_of(factor) {
        return Err(Error::Config(format!(
            "downscale factor {factor} must divide image size {rows}x{cols}"
        )));
    }
    let (r2, c2) = (rows / factor, cols / factor);
    let mut out = vec![0.0; r2 * c2];
    let norm = (factor * factor) as f64;
    for i in 0..rows {
        for j in 0..cols {
            out[(i / factor) * c2 + j / factor] += image[i * cols + j] / norm;
        }
    }
    Ok((out, r2, c2))
}

/// Builds a pixel-sequence dataset from selected images.
pub fn image_dataset(
    data: &IdxData,
    indices: &[usize],
    perm: Option<&PermutationSpec>,
    downscale_factor: usize,
    name: &str,
    split: Split,
) -> Result<SequenceDataset> {
    let (rows, cols) = (data.images.rows, data.images.cols);
    let factor = downscale_factor.max(1);
    let seq_len = (rows / factor) * (cols / factor);
    let mut samples = Vec::with_capacity(indices.len());
    for &idx in indices {
        let img = &data.images.pixels[idx];
        let inputs = if factor == 1 {
            sequentialize(img, rows, cols, perm)?
        } else {
            let (small, r2, c2) = downscale(img, rows, cols, factor)?;
            sequentialize(&small, r2, c2, perm)?
        };
        samples.push(Sample {
            inputs,
            label: usize::from(data.labels[idx]),
            source_index: idx,
        });
    }
    Ok(SequenceDataset {
        name: name.to_string(),
        split,
        samples,
        input_dim: 1,
        seq_len,
        class_count: 10,
    })
}

/// Split sizes for the image tasks. `None` limits keep the whole split.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct MnistSplitSizes {
    /// Held out from the end of the shuffled training file.
    pub valid: usize,
    pub train_limit: Option<usize>,
    pub valid_limit: Option<usize>,
    pub test_limit: Option<usize>,
}

impl Default for MnistSplitSizes {
    fn default() -> Self {
        MnistSplitSizes {
            valid: 10_000,
            train_limit: None,
            valid_limit: None,
            test_limit: None,
        }
    }
}

/// Indices of the training-file images that go to train and to validation:
/// a seeded shuffle, first `total − valid` train, last `valid` validation.
pub fn mnist_split_indices(total: usize, valid: usize, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if valid >= total {
        return Err(Error::Config(format!(
            "validation size {valid} must be below the training file size {total}"
        )));
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let valid_idx = order.split_off(total - valid);
    Ok((order, valid_idx))
}

/// Train/validation from a seeded shuffle of the training file (first part
/// train, last `sizes.valid` validation), test from the test file.
pub fn mnist_splits(
    train_file: &IdxData,
    test_file: &IdxData,
    sizes: &MnistSplitSizes,
    seed: u64,
    perm: Option<&PermutationSpec>,
    downscale_factor: usize,
) -> Result<(SequenceDataset, SequenceDataset, SequenceDataset)> {
    let (train_idx, valid_idx) = mnist_split_indices(train_file.labels.len(), sizes.valid, seed)?;
    let limit = |xs: &[usize], l: Option<usize>| xs[..l.map_or(xs.len(), |l| l.min(xs.len()))].to_vec();
    let train_idx = limit(&train_idx, sizes.train_limit);
    let valid_idx = limit(&valid_idx, sizes.valid_limit);
    let test_idx: Vec<usize> = (0..test_file.labels.len()).collect();
    let test_idx = limit(&test_idx, sizes.test_limit);
    let name = if perm.is_some() { "psmnist" } else { "smnist" };
    Ok((
        image_dataset(train_file, &train_idx, perm, downscale_factor, name, Split::Train)?,
        image_dataset(train_file, &valid_idx, perm, downscale_factor, name, Split::Valid)?,
        image_dataset(test_file, &test_idx, perm, downscale_factor, name, Split::Test)?,
    ))
}
