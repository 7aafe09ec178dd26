//! Decay-regime fits for per-timestep input-gradient norms.
//!
//! A profile holds `‖∂L/∂x_t‖` for `t = 1..=T`. Two least-squares models
//! are fitted to `ln‖∂L/∂x_t‖`:
//!
//! * exponential: against backward time `T − t`
//! * polynomial: against `ln(T − t + 1)`
//!
//! Zero norms are dropped before fitting and counted.

use std::fmt;
use std::fs;
use std::io::Write;
use std::path::Path;
use std::str::FromStr;

use crate::cells::CellKind;
use crate::error::{Error, Result};

/// Minimum r² for a positive classification.
pub const CLASSIFY_THRESHOLD: f64 = 0.9;
pub const DEFAULT_WINDOW_FRACTION: f64 = 0.25;

#[derive(Clone, Debug, PartialEq, Default)]
pub struct ProfileMeta {
    pub cell: Option<CellKind>,
    pub rate_r: Option<f64>,
    pub epoch: Option<usize>,
    pub seed: Option<u64>,
}

impl ProfileMeta {
    pub fn for_cell(cell: CellKind, rate_r: f64) -> Self {
        ProfileMeta {
            cell: Some(cell),
            rate_r: Some(rate_r),
            epoch: None,
            seed: None,
        }
    }

    pub fn to_key_values(&self) -> String {
        let mut out = String::new();
        if let Some(c) = self.cell {
            out.push_str(&format!("cell={c}\n"));
        }
        if let Some(r) = self.rate_r {
            out.push_str(&format!("rate_r={r}\n"));
        }
        if let Some(e) = self.epoch {
            out.push_str(&format!("epoch={e}\n"));
        }
        if let Some(s) = self.seed {
            out.push_str(&format!("seed={s}\n"));
        }
        out
    }

    pub fn from_key_values(text: &str) -> Result<Self> {
        let mut meta = ProfileMeta::default();
        for (line_no, line) in text.lines().enumerate() {
            let line = line.trim();
            if line.is_empty() || line.starts_with('#') {
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
                context: "profile meta".into(),
                line: line_no + 1,
                message: format!("expected key=value, got '{line}'"),
            })?;
            let bad = |what: &str| Error::Parse {
                context: "profile meta".into(),
                line: line_no + 1,
                message: format!("invalid {what} '{value}'"),
            };
            match key.trim() {
                "cell" => meta.cell = Some(value.trim().parse().map_err(|_| bad("cell"))?),
                "rate_r" => meta.rate_r = Some(value.trim().parse().map_err(|_| bad("rate_r"))?),
                "epoch" => meta.epoch = Some(value.trim().parse().map_err(|_| bad("epoch"))?),
                "seed" => meta.seed = Some(value.trim().parse().map_err(|_| bad("seed"))?),
                _ => {}
            }
        }
        Ok(meta)
    }
}

/// `norms[k]` is `‖∂L/∂x_{k+1}‖`.
#[derive(Clone, Debug, PartialEq)]
pub struct GradProfile {
    pub norms: Vec<f64>,
    pub meta: ProfileMeta,
}

impl GradProfile {
    pub fn new(norms: Vec<f64>, meta: ProfileMeta) -> Self {
        GradProfile { norms, meta }
    }

    pub fn len(&self) -> usize {
        self.norms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.norms.is_empty()
    }

    /// Elementwise mean of equally long profiles; metadata taken from the first.
    pub fn mean(profiles: &[GradProfile]) -> Result<GradProfile> {
        let first = profiles
            .first()
            .ok_or_else(|| Error::Domain("cannot average zero profiles".into()))?;
        let mut acc = vec![0.0; first.len()];
        for p in profiles {
            if p.len() != acc.len() {
                return Err(Error::Dimension {
                    context: "GradProfile::mean",
                    expected: acc.len(),
                    actual: p.len(),
                });
            }
            for (a, v) in acc.iter_mut().zip(&p.norms) {
                *a += v;
            }
        }
        let k = profiles.len() as f64;
        acc.iter_mut().for_each(|a| *a /= k);
        Ok(GradProfile::new(acc, first.meta.clone()))
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("t,norm\n");
        for (k, v) in self.norms.iter().enumerate() {
            out.push_str(&format!("{},{}\n", k + 1, v));
        }
        out
    }

    pub fn from_csv(text: &str) -> Result<Self> {
        let parse_err = |line: usize, message: String| Error::Parse {
            context: "gradient profile CSV".into(),
            line,
            message,
        };
        let mut lines = text.lines().enumerate();
        match lines.next() {
            Some((_, header)) if header.trim() == "t,norm" => {}
            Some((_, header)) => {
                return Err(parse_err(1, format!("expected header 't,norm', got '{header}'")))
            }
            None => return Err(parse_err(1, "empty file".into())),
        }
        let mut norms = Vec::new();
        for (idx, line) in lines {
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let (t, v) = line
                .split_once(',')
                .ok_or_else(|| parse_err(idx + 1, format!("expected 't,norm', got '{line}'")))?;
            let t: usize = t
                .trim()
                .parse()
                .map_err(|_| parse_err(idx + 1, format!("bad timestep '{t}'")))?;
            if t != norms.len() + 1 {
                return Err(parse_err(
                    idx + 1,
                    format!("timestep {t} out of order (expected {})", norms.len() + 1),
                ));
            }
            let v: f64 = v
                .trim()
                .parse()
                .map_err(|_| parse_err(idx + 1, format!("bad norm '{v}'")))?;
            if !(v >= 0.0) || !v.is_finite() {
                return Err(parse_err(idx + 1, format!("norm must be finite and >= 0, got {v}")));
            }
            norms.push(v);
        }
        Ok(GradProfile::new(norms, ProfileMeta::default()))
    }

    /// Writes `<stem>.csv` and the `<stem>.meta` sidecar.
    pub fn save(&self, dir: &Path, stem: &str) -> Result<()> {
        let csv = dir.join(format!("{stem}.csv"));
        fs::write(&csv, self.to_csv()).map_err(|e| Error::io(&csv, e))?;
        let meta = dir.join(format!("{stem}.meta"));
        fs::write(&meta, self.meta.to_key_values()).map_err(|e| Error::io(&meta, e))?;
        Ok(())
    }

    /// Reads a profile CSV and, if present, its `.meta` sidecar.
    pub fn load(csv_path: &Path) -> Result<Self> {
        let text = fs::read_to_string(csv_path).map_err(|e| Error::io(csv_path, e))?;
        let mut profile = GradProfile::from_csv(&text)?;
        let meta_path = csv_path.with_extension("meta");
        if meta_path.exists() {
            let text = fs::read_to_string(&meta_path).map_err(|e| Error::io(&meta_path, e))?;
            profile.meta = ProfileMeta::from_key_values(&text)?;
        }
        Ok(profile)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum DecayModel {
    Exponential,
    Polynomial,
    Neither,
}

impl DecayModel {
    pub fn as_str(self) -> &'static str {
        match self {
            DecayModel::Exponential => "exponential",
            DecayModel::Polynomial => "polynomial",
            DecayModel::Neither => "neither",
        }
    }
}

impl fmt::Display for DecayModel {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Which timesteps enter a fit.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum FitWindow {
    /// The earliest `fraction` of timesteps (`t = 1..=ceil(fraction·T)`).
    EarliestFraction(f64),
    /// Half-open range of 0-based profile indices.
    Range { start: usize, end: usize },
    Full,
}

impl Default for FitWindow {
    fn default() -> Self {
        FitWindow::EarliestFraction(DEFAULT_WINDOW_FRACTION)
    }
}

impl FitWindow {
    pub fn resolve(&self, len: usize) -> Result<(usize, usize)> {
        let (start, end) = match *self {
            FitWindow::EarliestFraction(f) => {
                if !(f > 0.0 && f <= 1.0) {
                    return Err(Error::Config(format!("window fraction must be in (0, 1], got {f}")));
                }
                (0, ((len as f64) * f).ceil() as usize)
            }
            FitWindow::Range { start, end } => (start, end),
            FitWindow::Full => (0, len),
        };
        if start >= end || end > len {
            return Err(Error::Config(format!(
                "fit window {start}..{end} invalid for a profile of length {len}"
            )));
        }
        Ok((start, end))
    }
}

impl FromStr for FitWindow {
    type Err = Error;

    /// `full`, a fraction such as `0.25`, or an index range `a..b`.
    fn from_str(s: &str) -> Result<Self> {
        let s = s.trim();
        if s == "full" {
            return Ok(FitWindow::Full);
        }
        if let Some((a, b)) = s.split_once("..") {
            let start = a.trim().parse().map_err(|_| Error::Config(format!("bad window '{s}'")))?;
            let end = b.trim().parse().map_err(|_| Error::Config(format!("bad window '{s}'")))?;
            return Ok(FitWindow::Range { start, end });
        }
        let f: f64 = s.parse().map_err(|_| Error::Config(format!("bad window '{s}'")))?;
        Ok(FitWindow::EarliestFraction(f))
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DecayFit {
    pub model: DecayModel,
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    /// 0-based half-open index range the fit was asked to cover.
    pub window: (usize, usize),
    pub excluded_zeros: usize,
    /// Set when the log-norms have no variance; `r_squared` is then 0.
    pub degenerate: bool,
}

struct LineFit {
    slope: f64,
    intercept: f64,
    r_squared: f64,
    degenerate: bool,
}

fn least_squares(xs: &[f64], ys: &[f64]) -> LineFit {
    let k = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / k;
    let my = ys.iter().sum::<f64>() / k;
    let mut sxx = 0.0;
    let mut sxy = 0.0;
    let mut syy = 0.0;
    for (&x, &y) in xs.iter().zip(ys) {
        let dx = x - mx;
        let dy = y - my;
        sxx += dx * dx;
        sxy += dx * dy;
        syy += dy * dy;
    }
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let intercept = my - slope * mx;
    // relative cutoff so that exactly constant data in floating point counts as flat
    let degenerate = syy <= 1e-24 * (1.0 + my * my) * k;
    let r_squared = if degenerate {
        0.0
    } else {
        let ss_res: f64 = xs
            .iter()
            .zip(ys)
            .map(|(&x, &y)| {
                let e = y - (intercept + slope * x);
                e * e
            })
            .sum();
        (1.0 - ss_res / syy).clamp(0.0, 1.0)
    };
    LineFit {
        slope,
        intercept,
        r_squared,
        degenerate,
    }
}

fn fit_with(
    profile: &GradProfile,
    window: FitWindow,
    model: DecayModel,
    regressor: impl Fn(f64) -> f64,
) -> Result<DecayFit> {
    let (start, end) = window.resolve(profile.len())?;
    let t_final = profile.len() as f64;
    let mut xs = Vec::with_capacity(end - start);
    let mut ys = Vec::with_capacity(end - start);
    let mut excluded = 0;
    for k in start..end {
        let v = profile.norms[k];
        if v > 0.0 {
            let t = (k + 1) as f64;
            xs.push(regressor(t_final - t));
            ys.push(v.ln());
        } else {
            excluded += 1;
        }
    }
    if xs.len() < 3 {
        return Err(Error::InsufficientData {
            needed: 3,
            found: xs.len(),
        });
    }
    let line = least_squares(&xs, &ys);
    Ok(DecayFit {
        model,
        slope: line.slope,
        intercept: line.intercept,
        r_squared: line.r_squared,
        window: (start, end),
        excluded_zeros: excluded,
        degenerate: line.degenerate,
    })
}

/// `ln‖∂L/∂x_t‖` against backward time `T − t`; a negative slope is decay.
pub fn fit_exponential(profile: &GradProfile, window: FitWindow) -> Result<DecayFit> {
    fit_with(profile, window, DecayModel::Exponential, |back| back)
}

/// `ln‖∂L/∂x_t‖` against `ln(T − t + 1)`; the slope is the power-law exponent.
pub fn fit_polynomial(profile: &GradProfile, window: FitWindow) -> Result<DecayFit> {
    fit_with(profile, window, DecayModel::Polynomial, |back| (back + 1.0).ln())
}

#[derive(Clone, Debug)]
pub struct Classification {
    pub model: DecayModel,
    pub exponential: DecayFit,
    pub polynomial: DecayFit,
}

/// The better-fitting model if its r² reaches [`CLASSIFY_THRESHOLD`],
/// otherwise [`DecayModel::Neither`].
pub fn classify_decay(profile: &GradProfile, window: FitWindow) -> Result<Classification> {
    if profile.is_empty() {
        return Err(Error::InsufficientData { needed: 3, found: 0 });
    }
    let exponential = fit_exponential(profile, window)?;
    let polynomial = fit_polynomial(profile, window)?;
    let best = if polynomial.r_squared > exponential.r_squared {
        &polynomial
    } else {
        &exponential
    };
    let model = if best.r_squared >= CLASSIFY_THRESHOLD {
        best.model
    } else {
        DecayModel::Neither
    };
    Ok(Classification {
        model,
        exponential,
        polynomial,
    })
}

impl Classification {
    /// Human-readable summary, also used as `fit.txt` by the CLI.
    pub fn summary(&self) -> String {
        let mut out = Vec::new();
        let fmt_fit = |f: &DecayFit| {
            format!(
                "{} slope={} r_squared={} window={}..{} excluded_zeros={}{}",
                f.model,
                f.slope,
                f.r_squared,
                f.window.0 + 1,
                f.window.1,
                f.excluded_zeros,
                if f.degenerate { " degenerate" } else { "" }
            )
        };
        writeln!(out, "{}", fmt_fit(&self.exponential)).ok();
        writeln!(out, "{}", fmt_fit(&self.polynomial)).ok();
        writeln!(out, "classification={}", self.model).ok();
        String::from_utf8(out).expect("ascii")
    }
}
