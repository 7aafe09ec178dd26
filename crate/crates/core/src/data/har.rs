//! Inertial-sensor windows in the UCI HAR layout:
//!
//! ```text
//! <dir>/train/Inertial Signals/body_acc_x_train.txt   (one 128-value window per row)
//! ...
//! <dir>/train/y_train.txt                             (labels 1..=6, one per row)
//! <dir>/test/...
//! ```

use std::fs;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Sample, SequenceDataset, Split};
use crate::error::{Error, Result};
use crate::math::Vector;

pub const HAR_CHANNELS: usize = 9;
pub const HAR_WINDOW: usize = 128;

const CHANNEL_STEMS: [&str; HAR_CHANNELS] = [
    "body_acc_x",
    "body_acc_y",
    "body_acc_z",
    "body_gyro_x",
    "body_gyro_y",
    "body_gyro_z",
    "total_acc_x",
    "total_acc_y",
    "total_acc_z",
];

/// Walking, upstairs and downstairs (1..=3) are dynamic; sitting, standing
/// and laying (4..=6) are static.
pub fn har_label_to_binary(activity: u8) -> Result<usize> {
    match activity {
        1..=3 => Ok(1),
        4..=6 => Ok(0),
        other => Err(Error::Domain(format!("activity label {other} outside 1..=6"))),
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct HarSplits {
    pub train: SequenceDataset,
    pub valid: SequenceDataset,
    pub test: SequenceDataset,
    /// Per-channel train-split mean and standard deviation used for normalization.
    pub channel_mean: Vec<f64>,
    pub channel_std: Vec<f64>,
}

fn format_err(path: &Path, offset: usize, message: String) -> Error {
    Error::Format {
        offset: offset as u64,
        message: format!("{}: {message}", path.display()),
    }
}

fn read_text(path: &Path) -> Result<String> {
    if !path.exists() {
        return Err(format_err(path, 0, "missing channel file".into()));
    }
    fs::read_to_string(path).map_err(|e| Error::io(path, e))
}

/// Rows of whitespace-separated values; every row must hold `width` values.
fn read_rows(path: &Path, width: usize) -> Result<Vec<Vec<f64>>> {
    let text = read_text(path)?;
    let mut rows = Vec::new();
    let mut offset = 0;
    for line in text.split_inclusive('\n') {
        let start = offset;
        offset += line.len();
        if line.trim().is_empty() {
            continue;
        }
        let row: Vec<f64> = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>()
                    .ok()
                    .filter(|v| v.is_finite())
                    .ok_or_else(|| format_err(path, start, format!("bad value '{tok}'")))
            })
            .collect::<Result<_>>()?;
        if row.len() != width {
            return Err(format_err(
                path,
                start,
                format!("window of length {} (expected {width})", row.len()),
            ));
        }
        rows.push(row);
    }
    Ok(rows)
}

fn split_dir(dir: &Path, part: &str) -> PathBuf {
    dir.join(part)
}

/// `[sample][t][channel]`.
type Windows = Vec<Vec<Vec<f64>>>;

/// Raw windows and activity labels for one part.
fn read_part(dir: &Path, part: &str) -> Result<(Windows, Vec<u8>)> {
    let base = split_dir(dir, part);
    let label_path = base.join(format!("y_{part}.txt"));
    let labels: Vec<u8> = read_rows(&label_path, 1)?
        .into_iter()
        .enumerate()
        .map(|(k, r)| {
            let v = r[0];
            if v.fract() == 0.0 && (1.0..=6.0).contains(&v) {
                Ok(v as u8)
            } else {
                Err(format_err(&label_path, 0, format!("row {}: label {v} outside 1..=6", k + 1)))
            }
        })
        .collect::<Result<_>>()?;
    let mut windows = vec![vec![vec![0.0; HAR_CHANNELS]; HAR_WINDOW]; labels.len()];
    for (c, stem) in CHANNEL_STEMS.iter().enumerate() {
        let path = base.join("Inertial Signals").join(format!("{stem}_{part}.txt"));
        let rows = read_rows(&path, HAR_WINDOW)?;
        if rows.len() != labels.len() {
            return Err(format_err(
                &path,
                0,
                format!("{} windows but {} labels", rows.len(), labels.len()),
            ));
        }
        for (w, row) in windows.iter_mut().zip(rows) {
            for (t, v) in row.into_iter().enumerate() {
                w[t][c] = v;
            }
        }
    }
    Ok((windows, labels))
}

fn to_dataset(
    windows: &[Vec<Vec<f64>>],
    labels: &[u8],
    indices: &[usize],
    mean: &[f64],
    std: &[f64],
    split: Split,
) -> Result<SequenceDataset> {
    let samples = indices
        .iter()
        .map(|&k| {
            let inputs = windows[k]
                .iter()
                .map(|step| {
                    Vector::from(
                        step.iter()
                            .zip(mean.iter().zip(std))
                            .map(|(v, (m, s))| (v - m) / s)
                            .collect::<Vec<_>>(),
                    )
                })
                .collect();
            Ok(Sample {
                inputs,
                label: har_label_to_binary(labels[k])?,
                source_index: k,
            })
        })
        .collect::<Result<_>>()?;
    Ok(SequenceDataset {
        name: "har".into(),
        split,
        samples,
        input_dim: HAR_CHANNELS,
        seq_len: HAR_WINDOW,
        class_count: 2,
    })
}

/// Loads both parts, splits the original training part into train and
/// validation (validation gets `N − ⌊0.8 N⌋` windows), and z-scores every
/// channel with train-split statistics.
pub fn load_har(dir: &Path, seed: u64) -> Result<HarSplits> {
    let (train_windows, train_labels) = read_part(dir, "train")?;
    let (test_windows, test_labels) = read_part(dir, "test")?;
    let total = train_labels.len();
    let n_train = total * 4 / 5;
    if n_train == 0 {
        return Err(Error::InsufficientData { needed: 2, found: total });
    }
    let mut order: Vec<usize> = (0..total).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let (train_idx, valid_idx) = order.split_at(n_train);

    let mut mean = vec![0.0; HAR_CHANNELS];
    let mut sq = [0.0; HAR_CHANNELS];
    let count = (train_idx.len() * HAR_WINDOW) as f64;
    for &k in train_idx {
        for step in &train_windows[k] {
            for (m, v) in mean.iter_mut().zip(step) {
                *m += v;
            }
        }
    }
    mean.iter_mut().for_each(|m| *m /= count);
    for &k in train_idx {
        for step in &train_windows[k] {
            for c in 0..HAR_CHANNELS {
                sq[c] += (step[c] - mean[c]).powi(2);
            }
        }
    }
    let std: Vec<f64> = sq.iter().map(|s| (s / count).sqrt()).collect();
    if let Some(c) = std.iter().position(|&s| s == 0.0) {
        return Err(Error::Domain(format!("channel {} is constant on the train split", CHANNEL_STEMS[c])));
    }

    let test_idx: Vec<usize> = (0..test_labels.len()).collect();
    Ok(HarSplits {
        train: to_dataset(&train_windows, &train_labels, train_idx, &mean, &std, Split::Train)?,
        valid: to_dataset(&train_windows, &train_labels, valid_idx, &mean, &std, Split::Valid)?,
        test: to_dataset(&test_windows, &test_labels, &test_idx, &mean, &std, Split::Test)?,
        channel_mean: mean,
        channel_std: std,
    })
}

/// Writes a synthetic data set in the layout [`load_har`] reads. Test helper.
#[doc(hidden)]
pub fn write_har_fixture(dir: &Path, train: usize, test: usize, seed: u64) -> Result<()> {
    use rand::Rng;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for (part, count) in [("train", train), ("test", test)] {
        let base = split_dir(dir, part);
        let sig = base.join("Inertial Signals");
        fs::create_dir_all(&sig).map_err(|e| Error::io(&sig, e))?;
        let labels: Vec<u8> = (0..count).map(|_| rng.gen_range(1..=6)).collect();
        let text: String = labels.iter().map(|l| format!("{l}\n")).collect();
        let path = base.join(format!("y_{part}.txt"));
        fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        for (c, stem) in CHANNEL_STEMS.iter().enumerate() {
            let mut text = String::new();
            for &l in &labels {
                let amp = if l <= 3 { 1.0 } else { 0.1 };
                let row: Vec<String> = (0..HAR_WINDOW)
                    .map(|t| {
                        let v = amp * ((t as f64) * 0.2 + c as f64).sin() + rng.gen_range(-0.05..0.05) + c as f64;
                        format!("{v:e}")
                    })
                    .collect();
                text.push_str(&row.join(" "));
                text.push('\n');
            }
            let path = sig.join(format!("{stem}_{part}.txt"));
            fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
        }
    }
    Ok(())
}
