use std::fmt;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::bptt::{forward_sequence, input_gradient_norms};
use crate::data::SequenceDataset;
use crate::diagnostics::GradProfile;
use crate::error::{Error, Result};
use crate::math::Vector;
use crate::training::model::{batch_loss_and_grad, evaluate, ModelBundle};
use crate::training::optim::{clip_global_norm, lr_at_epoch, RmsProp};

#[derive(Clone, Debug, PartialEq)]
pub struct TrainConfig {
    pub learning_rate: f64,
    pub clip_norm: f64,
    pub batch_size: usize,
    pub epochs: usize,
    /// 0-based epoch indices at which the learning rate halves.
    pub lr_milestones: Vec<usize>,
    pub seed: u64,
    /// Epochs (0 = before training) at which a gradient profile is recorded.
    pub profile_epochs: Vec<usize>,
    /// Validation sequences averaged per profile.
    pub profile_batch: usize,
    pub train_alpha: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            learning_rate: 1e-3,
            clip_norm: 1.0,
            batch_size: 100,
            epochs: 200,
            lr_milestones: vec![100, 150],
            seed: 0,
            profile_epochs: vec![0, 1, 5, 10],
            profile_batch: 32,
            train_alpha: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0) || !(self.clip_norm > 0.0) || self.batch_size == 0 {
            return Err(Error::Config(
                "learning rate, clip norm and batch size must be positive".into(),
            ));
        }
        if self.lr_milestones.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Config("learning-rate milestones must be increasing".into()));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct EpochRecord {
    /// 1-based.
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
    pub lr: f64,
}

#[derive(Clone, Debug)]
pub struct TrainOutcome {
    pub log: Vec<EpochRecord>,
    /// Model with the lowest validation loss (the initial model if no epoch ran).
    pub best: ModelBundle,
    /// 1-based epoch of `best`, 0 for the initial model.
    pub best_epoch: usize,
    pub last: ModelBundle,
    pub profiles: Vec<GradProfile>,
}

/// Training stopped on a non-finite value; the partial outcome is kept.
#[derive(Debug)]
pub struct TrainAbort {
    pub error: Error,
    pub partial: Box<TrainOutcome>,
}

impl fmt::Display for TrainAbort {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{} (after {} completed epochs)", self.error, self.partial.log.len())
    }
}

impl std::error::Error for TrainAbort {
    fn source(&self) -> Option<&(dyn std::error::Error + 'static)> {
        Some(&self.error)
    }
}

pub fn log_to_csv(log: &[EpochRecord]) -> String {
    let mut out = String::from("epoch,train_loss,val_loss,val_acc,lr\n");
    for r in log {
        out.push_str(&format!(
            "{},{},{},{},{}\n",
            r.epoch, r.train_loss, r.val_loss, r.val_acc, r.lr
        ));
    }
    out
}

/// Index into `log` of the lowest validation loss; earliest wins ties.
pub fn select_best(log: &[EpochRecord]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (k, r) in log.iter().enumerate() {
        if r.val_loss.is_nan() {
            continue;
        }
        match best {
            Some(b) if log[b].val_loss <= r.val_loss => {}
            _ => best = Some(k),
        }
    }
    best
}

/// Mean input-gradient profile over the first `count` sequences of `data`.
pub fn mean_profile(model: &ModelBundle, data: &SequenceDataset, count: usize) -> Result<GradProfile> {
    let h0 = Vector::zeros(model.cell.hidden_dim());
    let mut profiles = Vec::new();
    for sample in data.samples.iter().take(count.max(1)) {
        let traj = forward_sequence(&model.cell, &h0, &sample.inputs)?;
        profiles.push(input_gradient_norms(&model.cell, &traj, &model.head, sample.label)?);
    }
    GradProfile::mean(&profiles)
}

fn attach(error: Error, epoch: usize, batch: usize) -> Error {
    if error.is_divergence() {
        Error::TrainingDivergence {
            epoch,
            batch,
            source: Box::new(error),
        }
    } else {
        error
    }
}

/// Minibatch RMSprop with global-norm clipping and a halving schedule.
/// Deterministic for a given `config.seed`.
pub fn train(
    model: ModelBundle,
    train_set: &SequenceDataset,
    valid_set: &SequenceDataset,
    config: &TrainConfig,
) -> std::result::Result<TrainOutcome, TrainAbort> {
    let mut outcome = TrainOutcome {
        log: Vec::new(),
        best: model.clone(),
        best_epoch: 0,
        last: model,
        profiles: Vec::new(),
    };
    macro_rules! bail {
        ($e:expr) => {
            return Err(TrainAbort {
                error: $e,
                partial: Box::new(outcome),
            })
        };
    }
    if let Err(e) = config.validate().and_then(|_| outcome.last.validate()) {
        bail!(e);
    }
    let mut opt = RmsProp::new(&outcome.last);
    opt.update_alpha = config.train_alpha;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let mut order: Vec<usize> = (0..train_set.samples.len()).collect();
    let mut best_val = f64::INFINITY;

    let record_profile = |model: &ModelBundle, epoch: usize| -> Result<GradProfile> {
        let mut p = mean_profile(model, valid_set, config.profile_batch)?;
        p.meta.epoch = Some(epoch);
        p.meta.seed = Some(config.seed);
        Ok(p)
    };
    if config.profile_epochs.contains(&0) && !valid_set.samples.is_empty() {
        match record_profile(&outcome.last, 0) {
            Ok(p) => outcome.profiles.push(p),
            Err(e) => bail!(attach(e, 0, 0)),
        }
    }

    for epoch in 0..config.epochs {
        let lr = lr_at_epoch(config.learning_rate, epoch, &config.lr_milestones);
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        let mut seen = 0usize;
        for (batch_idx, chunk) in order.chunks(config.batch_size).enumerate() {
            let samples: Vec<_> = chunk.iter().map(|&i| &train_set.samples[i]).collect();
            let mut result = match batch_loss_and_grad(&outcome.last, &samples) {
                Ok(r) => r,
                Err(e) => bail!(attach(e, epoch + 1, batch_idx + 1)),
            };
            if !result.mean_loss.is_finite() {
                bail!(attach(Error::Divergence { step: 0 }, epoch + 1, batch_idx + 1));
            }
            clip_global_norm(&mut result.grads, config.clip_norm);
            if let Err(e) = opt.step(&mut outcome.last, &result.grads, lr) {
                bail!(attach(e, epoch + 1, batch_idx + 1));
            }
            loss_sum += result.mean_loss * samples.len() as f64;
            seen += samples.len();
        }
        let (val_loss, val_acc) = match evaluate(&outcome.last, valid_set) {
            Ok(v) => v,
            Err(e) => bail!(attach(e, epoch + 1, 0)),
        };
        outcome.log.push(EpochRecord {
            epoch: epoch + 1,
            train_loss: if seen > 0 { loss_sum / seen as f64 } else { f64::NAN },
            val_loss,
            val_acc,
            lr,
        });
        if val_loss < best_val {
            best_val = val_loss;
            outcome.best = outcome.last.clone();
            outcome.best_epoch = epoch + 1;
        }
        if config.profile_epochs.contains(&(epoch + 1)) && !valid_set.samples.is_empty() {
            match record_profile(&outcome.last, epoch + 1) {
                Ok(p) => outcome.profiles.push(p),
                Err(e) => bail!(attach(e, epoch + 1, 0)),
            }
        }
    }
    Ok(outcome)
}

/// Result of one run inside [`train_alpha_grid`].
#[derive(Debug)]
pub struct GridRun {
    pub alpha_multiplier: f64,
    pub result: std::result::Result<TrainOutcome, TrainAbort>,
}

impl GridRun {
    pub fn best_val_loss(&self) -> f64 {
        match &self.result {
            Ok(o) => select_best(&o.log).map_or(f64::INFINITY, |k| o.log[k].val_loss),
            Err(_) => f64::INFINITY,
        }
    }
}

/// Trains one model per `α = k/T` multiplier and returns all runs plus the
/// index of the run with the lowest validation loss.
pub fn train_alpha_grid(
    multipliers: &[f64],
    mut build: impl FnMut(f64) -> Result<ModelBundle>,
    train_set: &SequenceDataset,
    valid_set: &SequenceDataset,
    config: &TrainConfig,
) -> Result<(Vec<GridRun>, Option<usize>)> {
    let mut runs = Vec::with_capacity(multipliers.len());
    for &k in multipliers {
        let model = build(k)?;
        runs.push(GridRun {
            alpha_multiplier: k,
            result: train(model, train_set, valid_set, config),
        });
    }
    let best = runs
        .iter()
        .enumerate()
        .filter(|(_, r)| r.best_val_loss().is_finite())
        .min_by(|a, b| a.1.best_val_loss().total_cmp(&b.1.best_val_loss()))
        .map(|(k, _)| k);
    Ok((runs, best))
}
