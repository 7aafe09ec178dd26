use std::fmt::Display;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use polyrnn::data::Split;
use polyrnn::diagnostics::{classify_decay, FitWindow, GradProfile};
use polyrnn::ode::{characteristic_time, poly_decay_sensitivity, poly_decay_solution, run_oracle_suite, OracleGrid};
use polyrnn::training::checkpoint;
use polyrnn::training::{
    initialize, log_to_csv, mean_profile, resolve_alpha, train, InitSpec, ModelBundle, ModelShape, TrainConfig,
};
use polyrnn::{Error, Result};

use crate::args::{DataArgs, FitArgs, ModelArgs, OdeArgs, ProfileArgs, SplitArg, TrainArgs};
use crate::tasks::{self, TaskData};

/// Exit status of a command that ran to completion.
pub const OK: u8 = 0;
pub const DIVERGED: u8 = 3;

/// Resolved settings written next to every run's outputs.
#[derive(Default)]
struct Provenance(Vec<(String, String)>);

impl Provenance {
    fn set(&mut self, key: &str, value: impl Display) {
        self.0.push((key.to_string(), value.to_string()));
    }

    fn render(&self) -> String {
        self.0.iter().map(|(k, v)| format!("{k}={v}\n")).collect()
    }

    fn write(&self, dir: &Path) -> Result<()> {
        write_file(&dir.join("config.txt"), &self.render())
    }

    fn data(&mut self, d: &DataArgs) {
        self.set("task", d.task.as_str());
        self.set("data_dir", d.data_dir.as_ref().map_or(String::new(), |p| p.display().to_string()));
        self.set("downscale", d.downscale);
        self.set("perm_seed", d.perm_seed);
        self.set("data_seed", d.data_seed);
    }

    fn sizes(&mut self, data: &TaskData) {
        self.set("T", data.seq_len());
        self.set("input_dim", data.input_dim());
        self.set("classes", data.classes());
        self.set("train_count", data.train.len());
        self.set("valid_count", data.valid.len());
        self.set("test_count", data.test.len());
    }

    fn model(&mut self, m: &ModelArgs) {
        self.set("cell", m.cell);
        self.set("r", m.rate_r);
        self.set("hidden", m.hidden);
        self.set("alpha_mult", m.alpha_mult);
        self.set("init_std", m.init_std);
        self.set("forget_bias", m.forget_bias.map_or(String::new(), |v| v.to_string()));
    }
}

fn write_file(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn create_dir(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))
}

fn parse_list<T: FromStr>(flag: &str, s: &str) -> Result<Vec<T>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| Error::Config(format!("--{flag}: cannot parse '{t}'"))))
        .collect()
}

fn check_model_args(m: &ModelArgs) -> Result<()> {
    if !(m.rate_r >= 0.0 && m.rate_r.is_finite()) {
        return Err(Error::Config(format!("--r must be >= 0, got {}", m.rate_r)));
    }
    if !(m.init_std > 0.0) {
        return Err(Error::Config(format!("--init-std must be positive, got {}", m.init_std)));
    }
    Ok(())
}

fn build_model(m: &ModelArgs, data: &TaskData, seed: u64) -> Result<ModelBundle> {
    let shape = ModelShape {
        cell: m.cell,
        rate_r: m.rate_r,
        hidden: m.hidden,
        input_dim: data.input_dim(),
        seq_len: data.seq_len(),
        classes: data.classes(),
    };
    let spec = InitSpec {
        alpha_multiplier: m.alpha_mult,
        weight_std_coeff: m.init_std,
        forget_bias: m.forget_bias,
        seed,
    };
    initialize(&shape, &spec)
}

pub fn cmd_train(args: &TrainArgs) -> Result<u8> {
    check_model_args(&args.model)?;
    let config = TrainConfig {
        learning_rate: args.lr,
        clip_norm: args.clip,
        batch_size: args.batch_size,
        epochs: args.epochs,
        lr_milestones: parse_list("milestones", &args.milestones)?,
        seed: args.seed,
        profile_epochs: parse_list("profile-epochs", &args.profile_epochs)?,
        profile_batch: args.profile_batch,
        train_alpha: !args.fixed_alpha,
    };
    config.validate()?;
    let data = tasks::load(&args.data)?;
    let model = build_model(&args.model, &data, args.seed)?;

    let mut prov = Provenance::default();
    prov.set("command", "train");
    prov.data(&args.data);
    prov.sizes(&data);
    prov.model(&args.model);
    if let Some(alpha) = model.cell.alpha() {
        prov.set("alpha", alpha);
        println!("alpha={alpha}");
    }
    prov.set("epochs", config.epochs);
    prov.set("batch_size", config.batch_size);
    prov.set("lr", config.learning_rate);
    prov.set("clip", config.clip_norm);
    prov.set("milestones", &args.milestones);
    prov.set("seed", config.seed);
    prov.set("profile_epochs", &args.profile_epochs);
    prov.set("profile_batch", config.profile_batch);
    prov.set("train_alpha", config.train_alpha);
    create_dir(&args.out)?;
    prov.write(&args.out)?;

    let (outcome, failure) = match train(model, &data.train, &data.valid, &config) {
        Ok(o) => (o, None),
        Err(abort) => (*abort.partial, Some(abort.error)),
    };
    write_file(&args.out.join("train_log.csv"), &log_to_csv(&outcome.log))?;
    for p in &outcome.profiles {
        p.save(&args.out, &format!("profile_epoch{}", p.meta.epoch.unwrap_or(0)))?;
    }
    for r in &outcome.log {
        println!(
            "epoch {} train_loss {:.6} val_loss {:.6} val_acc {:.4} lr {}",
            r.epoch, r.train_loss, r.val_loss, r.val_acc, r.lr
        );
    }
    if let Some(error) = failure {
        if error.is_divergence() {
            eprintln!("error: {error}");
            eprintln!("partial log written to {}", args.out.join("train_log.csv").display());
            write_file(&args.out.join("summary.txt"), &format!("status=diverged\nerror={error}\n"))?;
            return Ok(DIVERGED);
        }
        return Err(error);
    }
    checkpoint::save(&outcome.best, &args.out.join("best.ckpt"))?;
    checkpoint::save(&outcome.last, &args.out.join("last.ckpt"))?;
    let (test_loss, test_acc) = polyrnn::training::evaluate(&outcome.best, &data.test)?;
    let mut summary = format!(
        "status=ok\nbest_epoch={}\ntest_loss={test_loss}\ntest_acc={test_acc}\n",
        outcome.best_epoch
    );
    if let Some(alpha) = outcome.best.cell.alpha() {
        summary.push_str(&format!("best_alpha={alpha}\n"));
    }
    write_file(&args.out.join("summary.txt"), &summary)?;
    println!("best_epoch={} test_acc={test_acc:.4}", outcome.best_epoch);
    Ok(OK)
}

fn to_split(s: SplitArg) -> Split {
    match s {
        SplitArg::Train => Split::Train,
        SplitArg::Valid => Split::Valid,
        SplitArg::Test => Split::Test,
    }
}

pub fn cmd_grad_profile(args: &ProfileArgs) -> Result<u8> {
    let window: FitWindow = args.window.parse()?;
    if args.count == 0 || args.seeds == 0 {
        return Err(Error::Config("--count and --seeds must be positive".into()));
    }
    let data = tasks::load(&args.data)?;
    let batch = data.split(to_split(args.split));
    let mut prov = Provenance::default();
    prov.set("command", "grad-profile");
    prov.data(&args.data);
    prov.sizes(&data);

    let mut profiles = Vec::new();
    match (&args.checkpoint, args.init_only) {
        (Some(path), _) => {
            let model = checkpoint::load(path)?;
            prov.set("checkpoint", path.display());
            prov.set("cell", model.cell.kind());
            prov.set("r", model.cell.rate_r());
            profiles.push(mean_profile(&model, batch, args.count)?);
        }
        (None, true) => {
            check_model_args(&args.model)?;
            prov.model(&args.model);
            if args.model.cell == polyrnn::cells::CellKind::Leaky {
                prov.set("alpha", resolve_alpha(args.model.alpha_mult, data.seq_len())?);
            }
            for seed in args.seed..args.seed + args.seeds {
                let model = build_model(&args.model, &data, seed)?;
                profiles.push(mean_profile(&model, batch, args.count)?);
            }
        }
        (None, false) => {
            return Err(Error::Config("pass --checkpoint <file> or --init-only".into()));
        }
    }
    prov.set("split", to_split(args.split));
    prov.set("count", args.count.min(batch.len()));
    prov.set("seed", args.seed);
    prov.set("seeds", args.seeds);
    prov.set("window", &args.window);

    let mut profile = GradProfile::mean(&profiles)?;
    profile.meta.seed = Some(args.seed);
    let fit = classify_decay(&profile, window)?;
    create_dir(&args.out)?;
    prov.write(&args.out)?;
    profile.save(&args.out, "profile")?;
    write_file(&args.out.join("fit.txt"), &fit.summary())?;
    print!("{}", fit.summary());
    Ok(OK)
}

pub fn cmd_ode_check(args: &OdeArgs) -> Result<u8> {
    if args.rate_r.is_some() || args.h0.is_some() || args.dt.is_some() {
        let (r, h0, dt) = (args.rate_r.unwrap_or(1.0), args.h0.unwrap_or(1.0), args.dt.unwrap_or(1.0));
        let solution = poly_decay_solution(h0, r, dt)?;
        let sensitivity = poly_decay_sensitivity(h0, r, dt)?;
        println!("r={r} h0={h0} dt={dt}");
        println!("solution={solution}");
        println!("sensitivity={sensitivity}");
        return Ok(OK);
    }
    let report = run_oracle_suite(&OracleGrid::default())?;
    let mut csv = String::from("rate_r,h0,dt,closed_form,euler,rel_error\n");
    for row in &report.euler_rows {
        csv.push_str(&format!(
            "{},{},{},{},{},{}\n",
            row.rate_r, row.h0, row.dt, row.closed_form, row.euler, row.rel_error
        ));
    }
    create_dir(&args.out)?;
    let mut prov = Provenance::default();
    prov.set("command", "ode-check");
    prov.set("grid", "default");
    prov.write(&args.out)?;
    write_file(&args.out.join("ode_errors.csv"), &csv)?;
    println!("{:<46} {:>11} {:<40} result", "check", "worst", "bound");
    for c in &report.checks {
        println!(
            "{:<46} {:>11.3e} {:<40} {}",
            c.name,
            c.worst,
            c.bound,
            if c.passed { "PASS" } else { "FAIL" }
        );
    }
    let tau = characteristic_time(1.0 - (-1.0f64).exp())?;
    println!("characteristic_time(1-e^-1)={tau}");
    if report.all_passed() {
        Ok(OK)
    } else {
        eprintln!("error: ODE oracle checks failed");
        Ok(DIVERGED)
    }
}

pub fn cmd_fit_decay(args: &FitArgs) -> Result<u8> {
    let window: FitWindow = args.window.parse()?;
    let profile = GradProfile::load(&args.csv)?;
    let fit = classify_decay(&profile, window)?;
    print!("{}", fit.summary());
    Ok(OK)
}
