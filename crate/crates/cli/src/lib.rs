//! Command-line driver for `fundgap`: argument and config handling, dispatch
//! to the numerical library, and JSON reports with an evidence chain.
//!
//! Exit codes: 0 when every check passes, 2 when an inequality check fails,
//! 1 on errors (bad input, solver failure).

pub mod args;
pub mod commands;
pub mod config;
pub mod report;

use std::ffi::OsString;
use std::time::Instant;

use anyhow::{Context, Result};
use clap::Parser;

use args::{Cli, Command, ModuliVerb};
use commands::Artifacts;
use report::Report;

/// Result of one invocation, without touching stdout or stderr.
#[derive(Debug)]
pub struct Outcome {
    pub code: i32,
    pub report: Option<Report>,
    /// Text for stdout: the report when no `--out` is given, or help text.
    pub stdout: String,
    pub stderr: String,
}

fn inputs(cmd: &Command) -> serde_json::Value {
    // externally tagged; keep only the payload
    match serde_json::to_value(cmd).expect("arguments serialize") {
        serde_json::Value::Object(m) => {
            let inner = m.into_iter().next().map(|(_, v)| v).unwrap_or_default();
            match inner {
                serde_json::Value::Object(m) if m.len() == 1 && matches!(cmd, Command::Moduli(_)) => {
                    m.into_iter().next().map(|(_, v)| v).unwrap_or_default()
                }
                other => other,
            }
        }
        other => other,
    }
}

/// Runs the parsed command and returns its report.
pub fn execute(cli: &Cli) -> Result<Report> {
    let start = Instant::now();
    let name = cli.command.name();
    let mut report = Report::new(name, inputs(&cli.command));
    let csv_dir = cli
        .csv_dir
        .clone()
        .or_else(|| cli.out.as_ref().and_then(|p| p.parent().map(|d| d.to_path_buf())));
    let mut art = Artifacts::new(csv_dir);
    let r = &mut report;
    match &cli.command {
        Command::Gap1d(a) => commands::gap1d_cmd(a, &mut art, r),
        Command::Gapnd(a) => commands::gapnd_cmd(a, &mut art, r),
        Command::Prufer(a) => commands::prufer_cmd(a, &mut art, r),
        Command::Moduli(v) => match v {
            ModuliVerb::Convexity(a) => commands::convexity_cmd(a, &mut art, r),
            ModuliVerb::Logconc(a) => commands::logconc_cmd(a, &mut art, r),
            ModuliVerb::Continuity(a) => commands::continuity_cmd(a, &mut art, r),
            ModuliVerb::Contraction(a) => commands::contraction_cmd(a, &mut art, r),
        },
        Command::EvolvePsi(a) => commands::evolve_psi_cmd(a, &mut art, r),
        Command::HeatDrift(a) => commands::heat_drift_cmd(a, &mut art, r),
        Command::GapDecay(a) => commands::gap_decay_cmd(a, &mut art, r),
        Command::Verify(a) => commands::verify_cmd(a, &mut art, r),
    }
    .with_context(|| name.to_string())?;
    report.settle();
    report.artifacts = art.written;
    if cli.timing {
        report.wall_time_s = Some(start.elapsed().as_secs_f64());
    }
    Ok(report)
}

/// Full invocation: config splicing, parsing, execution and `--out`.
pub fn run<I, T>(argv: I) -> Outcome
where
    I: IntoIterator<Item = T>,
    T: Into<OsString>,
{
    let argv: Vec<OsString> = argv.into_iter().map(Into::into).collect();
    let fail = |msg: String| Outcome {
        code: 1,
        report: None,
        stdout: String::new(),
        stderr: msg,
    };
    let argv = match config::apply(argv) {
        Ok(a) => a,
        Err(e) => return fail(format!("error: {e:#}\n")),
    };
    let cli = match Cli::try_parse_from(argv) {
        Ok(c) => c,
        Err(e) => {
            let text = e.render().to_string();
            return if e.use_stderr() {
                fail(text)
            } else {
                Outcome {
                    code: 0,
                    report: None,
                    stdout: text,
                    stderr: String::new(),
                }
            };
        }
    };
    let report = match execute(&cli) {
        Ok(r) => r,
        Err(e) => return fail(format!("error: {e:#}\n")),
    };
    let json = report.to_json();
    let stdout = match &cli.out {
        Some(path) => {
            if let Err(e) = std::fs::write(path, &json) {
                return fail(format!("error: out: cannot write {}: {e}\n", path.display()));
            }
            String::new()
        }
        None => json,
    };
    Outcome {
        code: report.exit_code(),
        report: Some(report),
        stdout,
        stderr: String::new(),
    }
}
