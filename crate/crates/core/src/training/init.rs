use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::cells::{CellKind, CellParams};
use crate::error::{Error, Result};
use crate::head::ClassifierHead;
use crate::training::model::ModelBundle;

#[derive(Clone, Debug, PartialEq)]
pub struct InitSpec {
    /// `α = k / T`.
    pub alpha_multiplier: f64,
    /// Weights with fan-in `m` are drawn from `N(0, (coeff/√m)²)`.
    pub weight_std_coeff: f64,
    /// Added to the forget-gate bias (gated: `b_f`, GRU: `−b_z`).
    pub forget_bias: Option<f64>,
    pub seed: u64,
}

impl Default for InitSpec {
    fn default() -> Self {
        InitSpec {
            alpha_multiplier: 1.0,
            weight_std_coeff: 0.1,
            forget_bias: None,
            seed: 0,
        }
    }
}

/// Shape of the model to build.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ModelShape {
    pub cell: CellKind,
    pub rate_r: f64,
    pub hidden: usize,
    pub input_dim: usize,
    pub seq_len: usize,
    pub classes: usize,
}

pub fn resolve_alpha(alpha_multiplier: f64, seq_len: usize) -> Result<f64> {
    let alpha = alpha_multiplier / seq_len as f64;
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::Config(format!(
            "alpha = {alpha_multiplier}/{seq_len} = {alpha} is outside (0, 1)"
        )));
    }
    Ok(alpha)
}

fn fill_normal(data: &mut [f64], std: f64, rng: &mut ChaCha8Rng) -> Result<()> {
    if std == 0.0 {
        data.fill(0.0);
        return Ok(());
    }
    let dist = Normal::new(0.0, std).map_err(|e| Error::Config(format!("weight std {std}: {e}")))?;
    for v in data.iter_mut() {
        *v = dist.sample(rng);
    }
    Ok(())
}

/// Random model: recurrent matrices `N(0, (c/√n)²)`, input matrices
/// `N(0, (c/√d)²)`, head `N(0, (c/√n)²)`, zero biases unless a forget bias
/// is set, `α = k/T` for the leaky cell.
pub fn initialize(shape: &ModelShape, spec: &InitSpec) -> Result<ModelBundle> {
    if shape.hidden == 0 || shape.input_dim == 0 || shape.classes < 2 {
        return Err(Error::Config(format!(
            "model needs hidden >= 1, input_dim >= 1 and classes >= 2 (got {}, {}, {})",
            shape.hidden, shape.input_dim, shape.classes
        )));
    }
    let mut cell = CellParams::zeros(shape.cell, shape.hidden, shape.input_dim, shape.rate_r);
    let mut rng = ChaCha8Rng::seed_from_u64(spec.seed);
    let rec_std = spec.weight_std_coeff / (shape.hidden as f64).sqrt();
    let in_std = spec.weight_std_coeff / (shape.input_dim as f64).sqrt();
    let alpha = match shape.cell {
        CellKind::Leaky => Some(resolve_alpha(spec.alpha_multiplier, shape.seq_len)?),
        _ => None,
    };
    for (name, data) in cell.arrays_mut() {
        match name {
            "alpha" => data[0] = alpha.expect("leaky cell"),
            n if n.starts_with('u') => fill_normal(data, rec_std, &mut rng)?,
            n if n.starts_with('w') => fill_normal(data, in_std, &mut rng)?,
            _ => data.fill(0.0),
        }
    }
    if let Some(fb) = spec.forget_bias {
        match &mut cell {
            CellParams::Gated(p) => p.b_f.as_mut_slice().fill(fb),
            CellParams::Gru(p) => p.b_z.as_mut_slice().fill(-fb),
            CellParams::Leaky(_) => {}
        }
    }
    let mut head = ClassifierHead::zeros(shape.classes, shape.hidden);
    fill_normal(head.weight.as_mut_slice(), rec_std, &mut rng)?;
    let model = ModelBundle { cell, head };
    model.validate()?;
    Ok(model)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn shape(cell: CellKind, hidden: usize, seq_len: usize) -> ModelShape {
        ModelShape {
            cell,
            rate_r: 0.0,
            hidden,
            input_dim: 1,
            seq_len,
            classes: 10,
        }
    }

    #[test]
    fn alpha_from_sequence_length() {
        let m = initialize(&shape(CellKind::Leaky, 8, 784), &InitSpec::default()).unwrap();
        assert_eq!(m.cell.alpha(), Some(1.0 / 784.0));
        assert!((1.0f64 / 784.0 - 0.001276).abs() < 1e-6);
        let spec = InitSpec {
            alpha_multiplier: 25.0,
            ..InitSpec::default()
        };
        let m = initialize(&shape(CellKind::Leaky, 8, 128), &spec).unwrap();
        assert!((m.cell.alpha().unwrap() - 0.1953).abs() < 1e-4);
        let bad = InitSpec {
            alpha_multiplier: 200.0,
            ..InitSpec::default()
        };
        assert!(initialize(&shape(CellKind::Leaky, 8, 128), &bad).is_err());
    }

    #[test]
    fn recurrent_std_scales_with_width() {
        let m = initialize(&shape(CellKind::Leaky, 128, 784), &InitSpec::default()).unwrap();
        let u = m.cell.arrays().into_iter().find(|a| a.name == "u").unwrap();
        let k = u.data.len() as f64;
        let mean = u.data.iter().sum::<f64>() / k;
        let std = (u.data.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / k).sqrt();
        let target = 0.1 / 128f64.sqrt();
        assert!((target - 0.008839).abs() < 1e-6);
        assert!((std - target).abs() / target < 0.02, "std {std}");
    }

    #[test]
    fn deterministic_and_zero_biases() {
        let spec = InitSpec {
            seed: 7,
            ..InitSpec::default()
        };
        let a = initialize(&shape(CellKind::Gru, 6, 50), &spec).unwrap();
        let b = initialize(&shape(CellKind::Gru, 6, 50), &spec).unwrap();
        assert_eq!(a, b);
        for view in a.arrays() {
            if view.name.starts_with('b') || view.name == "head.bias" {
                assert!(view.data.iter().all(|&v| v == 0.0));
            }
        }
    }

    #[test]
    fn forget_bias_option() {
        let spec = InitSpec {
            forget_bias: Some(3.0),
            ..InitSpec::default()
        };
        let g = initialize(&shape(CellKind::Gated, 4, 20), &spec).unwrap();
        let CellParams::Gated(p) = &g.cell else { panic!() };
        assert!(p.b_f.iter().all(|&v| v == 3.0));
        let r = initialize(&shape(CellKind::Gru, 4, 20), &spec).unwrap();
        let CellParams::Gru(p) = &r.cell else { panic!() };
        assert!(p.b_z.iter().all(|&v| v == -3.0));
    }
}
