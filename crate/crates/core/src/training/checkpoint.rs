//! Plain-text checkpoint container.
//!
//! ```text
//! polyrnn-checkpoint 1
//! cell leaky
//! rate_r 2
//! array alpha 1
//! 0.0012755102040816326
//! array u 2 2
//! 0.1 -0.2
//! 0.3 0.4
//! ...
//! end
//! ```
//!
//! Values use Rust's shortest round-trip float formatting, so loading a
//! saved model reproduces every parameter bit for bit. Matrices are written
//! one row per line.

use std::fs;
use std::path::Path;

use crate::cells::{CellKind, CellParams};
use crate::error::{Error, Result};
use crate::head::ClassifierHead;
use crate::training::model::ModelBundle;

const MAGIC: &str = "polyrnn-checkpoint 1";

pub fn to_text(model: &ModelBundle) -> String {
    let mut out = String::new();
    out.push_str(MAGIC);
    out.push('\n');
    out.push_str(&format!("cell {}\n", model.cell.kind()));
    out.push_str(&format!("rate_r {:?}\n", model.cell.rate_r()));
    for view in model.arrays() {
        let dims: Vec<String> = view.shape.iter().map(usize::to_string).collect();
        out.push_str(&format!("array {} {}\n", view.name, dims.join(" ")));
        let row_len = if view.shape.len() == 2 { view.shape[1].max(1) } else { view.data.len().max(1) };
        for row in view.data.chunks(row_len) {
            let vals: Vec<String> = row.iter().map(|v| format!("{v:?}")).collect();
            out.push_str(&vals.join(" "));
            out.push('\n');
        }
    }
    out.push_str("end\n");
    out
}

struct RawArray {
    name: String,
    shape: Vec<usize>,
    data: Vec<f64>,
}

pub fn from_text(text: &str) -> Result<ModelBundle> {
    let err = |line: usize, message: String| Error::Parse {
        context: "checkpoint".into(),
        line,
        message,
    };
    let mut lines = text.lines().enumerate().map(|(i, l)| (i + 1, l.trim()));
    match lines.next() {
        Some((_, l)) if l == MAGIC => {}
        _ => return Err(err(1, format!("missing '{MAGIC}' header"))),
    }
    let mut kind: Option<CellKind> = None;
    let mut rate_r: Option<f64> = None;
    let mut arrays: Vec<RawArray> = Vec::new();
    let mut ended = false;
    while let Some((no, line)) = lines.next() {
        if line.is_empty() {
            continue;
        }
        let mut parts = line.split_whitespace();
        match parts.next() {
            Some("cell") => {
                let v = parts.next().ok_or_else(|| err(no, "missing cell kind".into()))?;
                kind = Some(v.parse().map_err(|e: Error| err(no, e.to_string()))?);
            }
            Some("rate_r") => {
                let v = parts.next().ok_or_else(|| err(no, "missing rate".into()))?;
                rate_r = Some(v.parse().map_err(|_| err(no, format!("bad rate '{v}'")))?);
            }
            Some("array") => {
                let name = parts.next().ok_or_else(|| err(no, "missing array name".into()))?;
                let shape: Vec<usize> = parts
                    .map(|d| d.parse().map_err(|_| err(no, format!("bad dimension '{d}'"))))
                    .collect::<Result<_>>()?;
                if shape.is_empty() || shape.len() > 2 {
                    return Err(err(no, format!("array {name} must have 1 or 2 dimensions")));
                }
                let total: usize = shape.iter().product();
                let mut data = Vec::with_capacity(total);
                while data.len() < total {
                    let (vno, vline) = lines
                        .next()
                        .ok_or_else(|| err(no, format!("array {name} truncated")))?;
                    for tok in vline.split_whitespace() {
                        data.push(
                            tok.parse::<f64>()
                                .map_err(|_| err(vno, format!("bad value '{tok}'")))?,
                        );
                    }
                }
                if data.len() != total {
                    return Err(err(no, format!("array {name}: expected {total} values, got {}", data.len())));
                }
                arrays.push(RawArray {
                    name: name.to_string(),
                    shape,
                    data,
                });
            }
            Some("end") => {
                ended = true;
                break;
            }
            Some(other) => return Err(err(no, format!("unexpected record '{other}'"))),
            None => {}
        }
    }
    if !ended {
        return Err(err(0, "missing 'end' marker".into()));
    }
    let kind = kind.ok_or_else(|| err(0, "missing cell kind".into()))?;
    let rate_r = rate_r.ok_or_else(|| err(0, "missing rate_r".into()))?;

    let find = |name: &str| arrays.iter().find(|a| a.name == name);
    let u = find("u").ok_or_else(|| err(0, "missing array u".into()))?;
    let w = find("w").ok_or_else(|| err(0, "missing array w".into()))?;
    let hw = find("head.weight").ok_or_else(|| err(0, "missing array head.weight".into()))?;
    if u.shape.len() != 2 || w.shape.len() != 2 || hw.shape.len() != 2 {
        return Err(err(0, "u, w and head.weight must be matrices".into()));
    }
    let (n, d, classes) = (u.shape[0], w.shape[1], hw.shape[0]);
    let mut model = ModelBundle {
        cell: CellParams::zeros(kind, n, d, rate_r),
        head: ClassifierHead::zeros(classes, n),
    };
    let expected: Vec<(&'static str, Vec<usize>)> =
        model.arrays().into_iter().map(|a| (a.name, a.shape)).collect();
    if expected.len() != arrays.len() {
        return Err(err(0, format!("expected {} arrays, found {}", expected.len(), arrays.len())));
    }
    for ((name, data), (_, shape)) in model.arrays_mut().into_iter().zip(&expected) {
        let raw = arrays
            .iter()
            .find(|a| a.name == name)
            .ok_or_else(|| err(0, format!("missing array {name}")))?;
        if &raw.shape != shape {
            return Err(err(0, format!("array {name}: shape {:?}, expected {shape:?}", raw.shape)));
        }
        data.copy_from_slice(&raw.data);
    }
    model.validate()?;
    Ok(model)
}

pub fn save(model: &ModelBundle, path: &Path) -> Result<()> {
    fs::write(path, to_text(model)).map_err(|e| Error::io(path, e))
}

pub fn load(path: &Path) -> Result<ModelBundle> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    from_text(&text)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::training::init::{initialize, InitSpec, ModelShape};
    use proptest::prelude::*;

    fn shape(cell: CellKind) -> ModelShape {
        ModelShape {
            cell,
            rate_r: 2.0,
            hidden: 3,
            input_dim: 2,
            seq_len: 10,
            classes: 4,
        }
    }

    #[test]
    fn format_layout() {
        let model = initialize(&shape(CellKind::Leaky), &InitSpec::default()).unwrap();
        let text = to_text(&model);
        assert!(text.starts_with("polyrnn-checkpoint 1\ncell leaky\nrate_r 2.0\narray alpha 1\n0.1\narray u 3 3\n"));
        assert!(text.ends_with("end\n"));
    }

    #[test]
    fn corrupt_checkpoints_are_rejected() {
        let model = initialize(&shape(CellKind::Gated), &InitSpec::default()).unwrap();
        let text = to_text(&model);
        assert!(from_text(&text.replace("polyrnn-checkpoint 1", "junk")).is_err());
        assert!(from_text(&text.replace("end\n", "")).is_err());
        assert!(from_text(&text.replace("array b_i 3", "array b_i 4")).is_err());
        let truncated: String = text.lines().take(8).map(|l| format!("{l}\n")).collect();
        assert!(from_text(&truncated).is_err());
    }

    proptest! {
        #[test]
        fn round_trip_is_bit_exact(seed in any::<u64>(), kind in 0usize..3, scale in -300i32..300) {
            let kind = CellKind::ALL[kind];
            let mut model = initialize(&shape(kind), &InitSpec { seed, ..InitSpec::default() }).unwrap();
            // push some values to extreme magnitudes
            model.head.bias[0] = 10f64.powi(scale);
            model.head.bias[1] = -f64::MIN_POSITIVE;
            let back = from_text(&to_text(&model)).unwrap();
            for (a, b) in model.arrays().iter().zip(back.arrays()) {
                prop_assert_eq!(a.name, b.name);
                prop_assert!(a.data.iter().zip(b.data).all(|(x, y)| x.to_bits() == y.to_bits()));
            }
            prop_assert_eq!(back.cell.rate_r().to_bits(), model.cell.rate_r().to_bits());
        }
    }
}
