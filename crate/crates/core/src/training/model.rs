use crate::bptt::{accumulate_params, backward_sequence, forward_sequence};
use crate::cells::{ArrayView, CellParams};
use crate::data::{Sample, SequenceDataset};
use crate::error::{check_dim, Result};
use crate::head::{argmax, ClassifierHead};
use crate::math::Vector;

/// A recurrent cell followed by a linear softmax head on the final state.
#[derive(Clone, Debug, PartialEq)]
pub struct ModelBundle {
    pub cell: CellParams,
    pub head: ClassifierHead,
}

impl ModelBundle {
    pub fn validate(&self) -> Result<()> {
        self.cell.validate()?;
        check_dim("head weight rows", self.head.classes(), self.head.weight.rows())?;
        check_dim("head weight cols", self.cell.hidden_dim(), self.head.weight.cols())?;
        Ok(())
    }

    pub fn zeros_like(&self) -> ModelBundle {
        ModelBundle {
            cell: self.cell.zeros_like(),
            head: ClassifierHead::zeros(self.head.classes(), self.head.weight.cols()),
        }
    }

    /// Cell arrays followed by `head.weight` and `head.bias`.
    pub fn arrays(&self) -> Vec<ArrayView<'_>> {
        let mut out = self.cell.arrays();
        out.push(ArrayView {
            name: "head.weight",
            shape: vec![self.head.weight.rows(), self.head.weight.cols()],
            data: self.head.weight.as_slice(),
        });
        out.push(ArrayView {
            name: "head.bias",
            shape: vec![self.head.bias.len()],
            data: self.head.bias.as_slice(),
        });
        out
    }

    pub fn arrays_mut(&mut self) -> Vec<(&'static str, &mut [f64])> {
        let mut out = self.cell.arrays_mut();
        out.push(("head.weight", self.head.weight.as_mut_slice()));
        out.push(("head.bias", self.head.bias.as_mut_slice()));
        out
    }

    pub fn global_norm(&self) -> f64 {
        self.arrays()
            .iter()
            .flat_map(|a| a.data.iter())
            .map(|v| v * v)
            .sum::<f64>()
            .sqrt()
    }

    pub fn scale(&mut self, s: f64) {
        for (_, data) in self.arrays_mut() {
            data.iter_mut().for_each(|v| *v *= s);
        }
    }

    pub fn predict(&self, inputs: &[Vector]) -> Result<usize> {
        let h0 = Vector::zeros(self.cell.hidden_dim());
        let traj = forward_sequence(&self.cell, &h0, inputs)?;
        self.head.predict(traj.final_state())
    }
}

#[derive(Clone, Debug)]
pub struct BatchResult {
    pub mean_loss: f64,
    pub correct: usize,
    /// Gradients of the mean loss over the batch.
    pub grads: ModelBundle,
}

/// Mean cross-entropy over `samples` and its gradient. Per-sequence
/// gradients are summed in index order.
pub fn batch_loss_and_grad(model: &ModelBundle, samples: &[&Sample]) -> Result<BatchResult> {
    let mut grads = model.zeros_like();
    let mut total = 0.0;
    let mut correct = 0;
    let h0 = Vector::zeros(model.cell.hidden_dim());
    for sample in samples {
        let traj = forward_sequence(&model.cell, &h0, &sample.inputs)?;
        let out = model.head.loss_and_grad(traj.final_state(), sample.label)?;
        total += out.loss;
        if argmax(out.probs.as_slice()) == sample.label {
            correct += 1;
        }
        let g = backward_sequence(&model.cell, &traj, &out.dl_dh)?;
        accumulate_params(&mut grads.cell, &g.params);
        grads.head.weight.add_assign(&out.d_weight);
        grads.head.bias.add_assign(&out.d_bias);
    }
    let k = samples.len().max(1) as f64;
    grads.scale(1.0 / k);
    Ok(BatchResult {
        mean_loss: total / k,
        correct,
        grads,
    })
}

/// Mean loss and accuracy without gradients.
pub fn evaluate(model: &ModelBundle, data: &SequenceDataset) -> Result<(f64, f64)> {
    if data.samples.is_empty() {
        return Ok((f64::NAN, f64::NAN));
    }
    let h0 = Vector::zeros(model.cell.hidden_dim());
    let mut total = 0.0;
    let mut correct = 0usize;
    for sample in &data.samples {
        let traj = forward_sequence(&model.cell, &h0, &sample.inputs)?;
        let out = model.head.loss_and_grad(traj.final_state(), sample.label)?;
        total += out.loss;
        if argmax(out.probs.as_slice()) == sample.label {
            correct += 1;
        }
    }
    let k = data.samples.len() as f64;
    Ok((total / k, correct as f64 / k))
}
