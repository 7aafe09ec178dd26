use std::path::Path;

use polyrnn::data::idx::load_idx;
use polyrnn::data::{
    load_har, mnist_splits, synthetic_longrange, MnistSplitSizes, PermutationSpec, SequenceDataset, Split,
    SyntheticTask,
};
use polyrnn::{Error, Result};

use crate::args::{DataArgs, Task};

pub const DEFAULT_SYNTHETIC_LEN: usize = 100;
pub const SYNTHETIC_COUNTS: (usize, usize, usize) = (1000, 200, 200);
pub const MNIST_VALID: usize = 10_000;

pub struct TaskData {
    pub train: SequenceDataset,
    pub valid: SequenceDataset,
    pub test: SequenceDataset,
}

impl TaskData {
    pub fn seq_len(&self) -> usize {
        self.train.seq_len
    }

    pub fn input_dim(&self) -> usize {
        self.train.input_dim
    }

    pub fn classes(&self) -> usize {
        self.train.class_count
    }

    pub fn split(&self, split: Split) -> &SequenceDataset {
        match split {
            Split::Train => &self.train,
            Split::Valid => &self.valid,
            Split::Test => &self.test,
        }
    }
}

fn data_dir(args: &DataArgs) -> Result<&Path> {
    args.data_dir
        .as_deref()
        .ok_or_else(|| Error::Config(format!("--data-dir is required for task {}", args.task.as_str())))
}

fn limit(ds: SequenceDataset, count: Option<usize>) -> SequenceDataset {
    match count {
        Some(c) if c < ds.len() => ds.take(c),
        _ => ds,
    }
}

pub fn load(args: &DataArgs) -> Result<TaskData> {
    let data = match args.task {
        Task::Copy | Task::Adding => {
            let kind = if args.task == Task::Copy { SyntheticTask::Copy } else { SyntheticTask::Adding };
            let len = args.seq_len.unwrap_or(DEFAULT_SYNTHETIC_LEN);
            let (tr, va, te) = SYNTHETIC_COUNTS;
            let s = args.data_seed.wrapping_mul(3);
            TaskData {
                train: synthetic_longrange(kind, len, args.train_count.unwrap_or(tr), s, Split::Train)?,
                valid: synthetic_longrange(kind, len, args.valid_count.unwrap_or(va), s + 1, Split::Valid)?,
                test: synthetic_longrange(kind, len, args.test_count.unwrap_or(te), s + 2, Split::Test)?,
            }
        }
        Task::Smnist | Task::Psmnist => {
            let dir = data_dir(args)?;
            let train_file = load_idx(&dir.join("train-images-idx3-ubyte"), &dir.join("train-labels-idx1-ubyte"))?;
            let test_file = load_idx(&dir.join("t10k-images-idx3-ubyte"), &dir.join("t10k-labels-idx1-ubyte"))?;
            let factor = args.downscale.max(1);
            let pixels = (train_file.images.rows / factor) * (train_file.images.cols / factor);
            let perm = (args.task == Task::Psmnist).then(|| PermutationSpec::from_seed(args.perm_seed, pixels));
            let sizes = MnistSplitSizes {
                valid: MNIST_VALID,
                train_limit: args.train_count,
                valid_limit: args.valid_count,
                test_limit: args.test_count,
            };
            let (train, valid, test) =
                mnist_splits(&train_file, &test_file, &sizes, args.data_seed, perm.as_ref(), factor)?;
            TaskData { train, valid, test }
        }
        Task::Har => {
            let h = load_har(data_dir(args)?, args.data_seed)?;
            TaskData {
                train: limit(h.train, args.train_count),
                valid: limit(h.valid, args.valid_count),
                test: limit(h.test, args.test_count),
            }
        }
    };
    if let Some(t) = args.seq_len {
        if t != data.seq_len() {
            return Err(Error::Config(format!(
                "--T {t} does not match task {} (sequence length {})",
                args.task.as_str(),
                data.seq_len()
            )));
        }
    }
    Ok(data)
}
