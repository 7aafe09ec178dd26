use std::fmt;
use std::str::FromStr;

use rand::Rng;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::data::{Sample, SequenceDataset, Split};
use crate::error::{Error, Result};
use crate::math::Vector;

/// Alphabet size of the copy task.
pub const COPY_SYMBOLS: usize = 4;
pub const MIN_SEQ_LEN: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum SyntheticTask {
    /// A one-hot symbol at `t = 0`, then blanks; the label is the symbol.
    /// Inputs have `COPY_SYMBOLS + 1` channels, the last one flags a blank.
    Copy,
    /// Channel 0 holds uniform values, channel 1 marks one position in each
    /// half; the label is 1 when the two marked values sum above 1.
    Adding,
}

impl SyntheticTask {
    pub fn input_dim(self) -> usize {
        match self {
            SyntheticTask::Copy => COPY_SYMBOLS + 1,
            SyntheticTask::Adding => 2,
        }
    }

    pub fn class_count(self) -> usize {
        match self {
            SyntheticTask::Copy => COPY_SYMBOLS,
            SyntheticTask::Adding => 2,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SyntheticTask::Copy => "copy",
            SyntheticTask::Adding => "adding",
        }
    }
}

impl fmt::Display for SyntheticTask {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for SyntheticTask {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "copy" => Ok(SyntheticTask::Copy),
            "adding" => Ok(SyntheticTask::Adding),
            other => Err(Error::Config(format!("unknown synthetic task '{other}' (copy|adding)"))),
        }
    }
}

fn copy_sample(rng: &mut ChaCha8Rng, seq_len: usize, index: usize) -> Sample {
    let symbol = rng.gen_range(0..COPY_SYMBOLS);
    let mut inputs = Vec::with_capacity(seq_len);
    let mut first = Vector::zeros(COPY_SYMBOLS + 1);
    first[symbol] = 1.0;
    inputs.push(first);
    for _ in 1..seq_len {
        let mut blank = Vector::zeros(COPY_SYMBOLS + 1);
        blank[COPY_SYMBOLS] = 1.0;
        inputs.push(blank);
    }
    Sample {
        inputs,
        label: symbol,
        source_index: index,
    }
}

fn adding_sample(rng: &mut ChaCha8Rng, seq_len: usize, index: usize) -> Sample {
    let half = seq_len / 2;
    let a = rng.gen_range(0..half);
    let b = rng.gen_range(half..seq_len);
    let values: Vec<f64> = (0..seq_len).map(|_| rng.gen::<f64>()).collect();
    let inputs = values
        .iter()
        .enumerate()
        .map(|(t, &v)| Vector::from(vec![v, if t == a || t == b { 1.0 } else { 0.0 }]))
        .collect();
    Sample {
        inputs,
        label: usize::from(values[a] + values[b] > 1.0),
        source_index: index,
    }
}

/// Seeded long-range task; identical arguments give identical bytes.
pub fn synthetic_longrange(
    task: SyntheticTask,
    seq_len: usize,
    count: usize,
    seed: u64,
    split: Split,
) -> Result<SequenceDataset> {
    if seq_len < MIN_SEQ_LEN {
        return Err(Error::Config(format!(
            "synthetic sequence length {seq_len} below the minimum {MIN_SEQ_LEN}"
        )));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let samples = (0..count)
        .map(|k| match task {
            SyntheticTask::Copy => copy_sample(&mut rng, seq_len, k),
            SyntheticTask::Adding => adding_sample(&mut rng, seq_len, k),
        })
        .collect();
    Ok(SequenceDataset {
        name: task.as_str().into(),
        split,
        samples,
        input_dim: task.input_dim(),
        seq_len,
        class_count: task.class_count(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn adding_label_is_the_marked_sum() {
        let ds = synthetic_longrange(SyntheticTask::Adding, 50, 200, 3, Split::Train).unwrap();
        ds.validate().unwrap();
        for s in &ds.samples {
            let marked: Vec<f64> = s.inputs.iter().filter(|x| x[1] == 1.0).map(|x| x[0]).collect();
            assert_eq!(marked.len(), 2);
            assert_eq!(s.label, usize::from(marked[0] + marked[1] > 1.0));
        }
        let positives = ds.samples.iter().filter(|s| s.label == 1).count();
        assert!((60..140).contains(&positives));
    }

    #[test]
    fn copy_label_is_the_first_symbol() {
        let ds = synthetic_longrange(SyntheticTask::Copy, 10, 50, 3, Split::Train).unwrap();
        ds.validate().unwrap();
        for s in &ds.samples {
            assert_eq!(s.inputs[0][s.label], 1.0);
            assert!(s.inputs[1..].iter().all(|x| x[COPY_SYMBOLS] == 1.0));
        }
    }

    #[test]
    fn same_seed_same_bytes() {
        for task in [SyntheticTask::Copy, SyntheticTask::Adding] {
            let a = synthetic_longrange(task, 20, 30, 9, Split::Valid).unwrap();
            let b = synthetic_longrange(task, 20, 30, 9, Split::Valid).unwrap();
            assert_eq!(a.to_bytes(), b.to_bytes());
            let c = synthetic_longrange(task, 20, 30, 10, Split::Valid).unwrap();
            assert_ne!(a.to_bytes(), c.to_bytes());
        }
    }

    #[test]
    fn short_sequences_are_rejected() {
        assert!(synthetic_longrange(SyntheticTask::Adding, 9, 1, 0, Split::Train).is_err());
    }
}
