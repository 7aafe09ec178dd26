//! Linear softmax classifier applied to the final hidden state.

use crate::error::{check_dim, Error, Result};
use crate::math::{Matrix, Vector};

#[derive(Clone, Debug, PartialEq)]
pub struct ClassifierHead {
    pub weight: Matrix,
    pub bias: Vector,
}

#[derive(Clone, Debug)]
pub struct HeadOutput {
    pub loss: f64,
    pub probs: Vector,
    pub dl_dh: Vector,
    pub d_weight: Matrix,
    pub d_bias: Vector,
}

impl ClassifierHead {
    pub fn zeros(classes: usize, n: usize) -> Self {
        ClassifierHead {
            weight: Matrix::zeros(classes, n),
            bias: Vector::zeros(classes),
        }
    }

    pub fn classes(&self) -> usize {
        self.bias.len()
    }

    pub fn logits(&self, h: &Vector) -> Result<Vector> {
        let mut z = self.weight.matvec(h)?;
        z.add_assign(&self.bias);
        Ok(z)
    }

    pub fn predict(&self, h: &Vector) -> Result<usize> {
        let z = self.logits(h)?;
        Ok(argmax(z.as_slice()))
    }

    /// Softmax cross-entropy of `target` and its exact gradients.
    pub fn loss_and_grad(&self, h: &Vector, target: usize) -> Result<HeadOutput> {
        if target >= self.classes() {
            return Err(Error::Domain(format!(
                "target class {target} out of range for {} classes",
                self.classes()
            )));
        }
        check_dim("head: hidden state", self.weight.cols(), h.len())?;
        let z = self.logits(h)?;
        let max = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let exps = z.map(|v| (v - max).exp());
        let total: f64 = exps.iter().sum();
        let probs = exps.scale(1.0 / total);
        let loss = -(z[target] - max - total.ln());

        let mut d_logits = probs.clone();
        d_logits[target] -= 1.0;
        let dl_dh = self.weight.matvec_t(&d_logits)?;
        let mut d_weight = Matrix::zeros(self.weight.rows(), self.weight.cols());
        d_weight.add_outer(d_logits.as_slice(), h.as_slice());
        Ok(HeadOutput {
            loss,
            probs,
            dl_dh,
            d_weight,
            d_bias: d_logits,
        })
    }
}

pub(crate) fn argmax(xs: &[f64]) -> usize {
    let mut best = 0;
    for (i, &x) in xs.iter().enumerate() {
        if x > xs[best] {
            best = i;
        }
    }
    best
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn uniform_logits_give_log_classes() {
        for c in [2, 3, 10] {
            let head = ClassifierHead::zeros(c, 4);
            let out = head.loss_and_grad(&Vector::filled(4, 0.3), 1).unwrap();
            assert!((out.loss - (c as f64).ln()).abs() < 1e-14);
        }
    }

    #[test]
    fn confident_correct_prediction_has_near_zero_loss() {
        let mut head = ClassifierHead::zeros(3, 1);
        head.bias = Vector::from(vec![0.0, 60.0, 0.0]);
        let out = head.loss_and_grad(&Vector::zeros(1), 1).unwrap();
        assert!(out.loss < 1e-20);
        assert!(head.loss_and_grad(&Vector::zeros(1), 3).is_err());
    }

    #[test]
    fn gradients_match_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let (n, c) = (4, 3);
        let mut head = ClassifierHead::zeros(c, n);
        head.weight.as_mut_slice().iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        head.bias.as_mut_slice().iter_mut().for_each(|x| *x = rng.gen_range(-1.0..1.0));
        let h = Vector::from((0..n).map(|_| rng.gen_range(-1.0..1.0)).collect::<Vec<_>>());
        let target = 2;
        let out = head.loss_and_grad(&h, target).unwrap();
        let eps = 1e-6;
        let loss = |hd: &ClassifierHead, hv: &Vector| hd.loss_and_grad(hv, target).unwrap().loss;

        for k in 0..n {
            let mut hp = h.clone();
            let mut hm = h.clone();
            hp[k] += eps;
            hm[k] -= eps;
            let fd = (loss(&head, &hp) - loss(&head, &hm)) / (2.0 * eps);
            assert!((fd - out.dl_dh[k]).abs() < 1e-6);
        }
        for idx in 0..n * c {
            let mut hp = head.clone();
            let mut hm = head.clone();
            hp.weight.as_mut_slice()[idx] += eps;
            hm.weight.as_mut_slice()[idx] -= eps;
            let fd = (loss(&hp, &h) - loss(&hm, &h)) / (2.0 * eps);
            assert!((fd - out.d_weight.as_slice()[idx]).abs() < 1e-6);
        }
        for k in 0..c {
            let mut hp = head.clone();
            let mut hm = head.clone();
            hp.bias[k] += eps;
            hm.bias[k] -= eps;
            let fd = (loss(&hp, &h) - loss(&hm, &h)) / (2.0 * eps);
            assert!((fd - out.d_bias[k]).abs() < 1e-6);
        }
    }
}
