#![allow(clippy::neg_cmp_op_on_partial_ord)]

mod args;
mod commands;
mod tasks;

use std::ffi::OsString;
use std::fs;
use std::process::ExitCode;

use clap::Parser;
use polyrnn::Error;

use args::{Cli, Command, SWITCHES};

const EXIT_USAGE: u8 = 1;
const EXIT_DATA: u8 = 2;

fn exit_code(error: &Error) -> u8 {
    match error {
        Error::Config(_) | Error::Domain(_) | Error::Dimension { .. } => EXIT_USAGE,
        e if e.is_divergence() => commands::DIVERGED,
        _ => EXIT_DATA,
    }
}

/// Value of `--config` among the raw arguments, if any.
fn config_path(argv: &[OsString]) -> Option<OsString> {
    let mut it = argv.iter();
    while let Some(a) = it.next() {
        let s = a.to_string_lossy();
        if s == "--config" {
            return it.next().cloned();
        }
        if let Some(v) = s.strip_prefix("--config=") {
            return Some(v.into());
        }
    }
    None
}

/// Turns `key=value` lines into flags. Keys are flag names with `_` or `-`.
fn config_flags(text: &str) -> Result<Vec<OsString>, Error> {
    let mut flags = Vec::new();
    for (no, line) in text.lines().enumerate() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| Error::Parse {
            context: "config file".into(),
            line: no + 1,
            message: format!("expected key=value, got '{line}'"),
        })?;
        let key = key.trim().replace('_', "-");
        let value = value.trim();
        if SWITCHES.contains(&key.as_str()) {
            match value {
                "true" => flags.push(format!("--{key}").into()),
                "false" => {}
                _ => {
                    return Err(Error::Config(format!(
                        "config line {}: {key} takes true or false",
                        no + 1
                    )))
                }
            }
        } else {
            flags.push(format!("--{key}={value}").into());
        }
    }
    Ok(flags)
}

/// Inserts config-file flags right after the subcommand so that explicit
/// flags, which come later, take precedence.
fn merge_config(argv: Vec<OsString>) -> Result<Vec<OsString>, Error> {
    let Some(path) = config_path(&argv) else {
        return Ok(argv);
    };
    if argv.len() < 2 {
        return Ok(argv);
    }
    let text = fs::read_to_string(&path).map_err(|e| Error::io(&path, e))?;
    let mut merged = argv[..2].to_vec();
    merged.extend(config_flags(&text)?);
    merged.extend_from_slice(&argv[2..]);
    Ok(merged)
}

fn run() -> Result<u8, Error> {
    let argv = merge_config(std::env::args_os().collect())?;
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_USAGE } else { 0 };
            e.print().ok();
            return Ok(code);
        }
    };
    match &cli.command {
        Command::Train(a) => commands::cmd_train(a),
        Command::GradProfile(a) => commands::cmd_grad_profile(a),
        Command::OdeCheck(a) => commands::cmd_ode_check(a),
        Command::FitDecay(a) => commands::cmd_fit_decay(a),
    }
}

fn main() -> ExitCode {
    match run() {
        Ok(code) => ExitCode::from(code),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(exit_code(&e))
        }
    }
}
