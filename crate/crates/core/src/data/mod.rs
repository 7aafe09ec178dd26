//! Sequence-classification datasets: IDX images turned into pixel
//! sequences, windowed inertial-sensor recordings, and synthetic
//! long-range tasks.

mod har;
pub mod idx;
mod image;
mod synthetic;

use std::fmt;
use std::fs;
use std::path::Path;

use crate::error::{Error, Result};
use crate::math::Vector;

pub use har::{har_label_to_binary, load_har, write_har_fixture, HarSplits, HAR_CHANNELS, HAR_WINDOW};
pub use image::{
    downscale, image_dataset, mnist_split_indices, mnist_splits, sequentialize, unsequentialize, MnistSplitSizes,
    PermutationSpec,
};
pub use synthetic::{synthetic_longrange, SyntheticTask, COPY_SYMBOLS};

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Split {
    Train,
    Valid,
    Test,
}

impl fmt::Display for Split {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Split::Train => "train",
            Split::Valid => "valid",
            Split::Test => "test",
        })
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct Sample {
    pub inputs: Vec<Vector>,
    pub label: usize,
    /// Position in the source collection, for overlap checks.
    pub source_index: usize,
}

#[derive(Clone, Debug, PartialEq)]
pub struct SequenceDataset {
    pub name: String,
    pub split: Split,
    pub samples: Vec<Sample>,
    pub input_dim: usize,
    pub seq_len: usize,
    pub class_count: usize,
}

impl SequenceDataset {
    pub fn len(&self) -> usize {
        self.samples.len()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    /// Checks lengths, input dimensions, labels and finiteness.
    pub fn validate(&self) -> Result<()> {
        for (k, s) in self.samples.iter().enumerate() {
            if s.inputs.len() != self.seq_len {
                return Err(Error::Integrity(format!(
                    "{} sample {k}: length {} != {}",
                    self.name,
                    s.inputs.len(),
                    self.seq_len
                )));
            }
            if s.label >= self.class_count {
                return Err(Error::Integrity(format!(
                    "{} sample {k}: label {} >= {}",
                    self.name, s.label, self.class_count
                )));
            }
            if s.inputs.iter().any(|x| x.len() != self.input_dim || !x.is_finite()) {
                return Err(Error::Integrity(format!(
                    "{} sample {k}: input of wrong dimension or non-finite",
                    self.name
                )));
            }
        }
        Ok(())
    }

    pub fn take(&self, count: usize) -> SequenceDataset {
        SequenceDataset {
            samples: self.samples.iter().take(count).cloned().collect(),
            ..self.clone_empty()
        }
    }

    fn clone_empty(&self) -> SequenceDataset {
        SequenceDataset {
            name: self.name.clone(),
            split: self.split,
            samples: Vec::new(),
            input_dim: self.input_dim,
            seq_len: self.seq_len,
            class_count: self.class_count,
        }
    }

    /// `key=value` manifest describing the dataset.
    pub fn manifest(&self) -> String {
        let mut counts = vec![0usize; self.class_count];
        for s in &self.samples {
            counts[s.label] += 1;
        }
        let counts: Vec<String> = counts.iter().map(usize::to_string).collect();
        format!(
            "name={}\nsplit={}\ncount={}\ninput_dim={}\nseq_len={}\nclass_count={}\nclass_histogram={}\n",
            self.name,
            self.split,
            self.samples.len(),
            self.input_dim,
            self.seq_len,
            self.class_count,
            counts.join(",")
        )
    }

    pub fn write_manifest(&self, path: &Path) -> Result<()> {
        fs::write(path, self.manifest()).map_err(|e| Error::io(path, e))
    }

    /// Little-endian serialization of every label and input value, used to
    /// compare datasets byte for byte.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for s in &self.samples {
            out.extend_from_slice(&(s.label as u64).to_le_bytes());
            for x in &s.inputs {
                for v in x.iter() {
                    out.extend_from_slice(&v.to_le_bytes());
                }
            }
        }
        out
    }
}
