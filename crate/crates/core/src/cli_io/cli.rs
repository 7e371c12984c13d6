//! Command-line front end.
//!
//! Exit codes: 0 success, 1 usage/config/IO error, 2 divergence,
//! 3 failed scenario checks (with `--check`) or a failed scenario precondition.

use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand};
use serde_json::json;

use crate::diagnostics::{RunMetadata, TrajectoryLog};
use crate::error::{Error, Result};
use crate::experiments::{run_scenario, ScenarioReport, SCENARIOS};
use crate::optimize::{initialize, run_from};
use crate::problem::construct_target_from_spec;

use super::config::{parse_config_with, ConfigDocument, Overrides, CUSTOM_SCENARIO};
use super::output::{write_csv, write_json, write_json_value, write_table_csv};
use super::plot::{emit_plot, PlotKind};

pub const EXIT_OK: i32 = 0;
pub const EXIT_ERROR: i32 = 1;
pub const EXIT_DIVERGENCE: i32 = 2;
pub const EXIT_CHECK_FAILED: i32 = 3;

#[derive(Debug, Parser)]
#[command(name = "specflow", version, about = "Spectral gradient methods on low-rank factorization")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Run a scenario (or a single custom run) and write its outputs.
    Run {
        /// key=value config file; omitted keys take their defaults.
        #[arg(long)]
        config: Option<PathBuf>,
        /// Overrides the config's `scenario`.
        #[arg(long)]
        scenario: Option<String>,
        /// Overrides the config's `seed`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides the config's `out_dir`.
        #[arg(long)]
        out: Option<PathBuf>,
        /// Exit with status 3 if any scenario check fails.
        #[arg(long)]
        check: bool,
    },
    /// List scenario names with one-line descriptions.
    ListScenarios,
    /// Render an SVG plot from one or more JSON logs.
    Plot {
        /// spectrum, sqrt_modes, loss, drift or nth_root.
        #[arg(long)]
        kind: String,
        /// JSON log written by `run`; repeat to overlay runs.
        #[arg(long = "in", required = true)]
        input: Vec<PathBuf>,
        #[arg(long)]
        out: PathBuf,
    },
}

/// Parses `args` (program name first) and executes the command.
pub fn main_with_args<I, T>(args: I, stdout: &mut dyn Write, stderr: &mut dyn Write) -> i32
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(c) => c,
        Err(e) => {
            let code = if e.use_stderr() { EXIT_ERROR } else { EXIT_OK };
            let text = e.render().to_string();
            let _ = if e.use_stderr() { write!(stderr, "{text}") } else { write!(stdout, "{text}") };
            return code;
        }
    };
    let result = match cli.command {
        Command::Run { config, scenario, seed, out, check } => {
            cmd_run(config.as_deref(), Overrides { scenario, seed, out_dir: out }, check, stdout)
        }
        Command::ListScenarios => cmd_list(stdout).map(|_| EXIT_OK),
        Command::Plot { kind, input, out } => cmd_plot(&kind, &input, &out, stdout).map(|_| EXIT_OK),
    };
    match result {
        Ok(code) => code,
        Err(e) => {
            let _ = writeln!(stderr, "error: {e}");
            exit_code(&e)
        }
    }
}

pub fn exit_code(e: &Error) -> i32 {
    if e.is_divergence() {
        EXIT_DIVERGENCE
    } else if matches!(e, Error::Scenario(_)) {
        EXIT_CHECK_FAILED
    } else {
        EXIT_ERROR
    }
}

fn io_write(e: std::io::Error) -> Error {
    Error::Io { path: PathBuf::from("<stdout>"), source: e }
}

fn cmd_list(stdout: &mut dyn Write) -> Result<()> {
    for s in SCENARIOS {
        writeln!(stdout, "{}\t{}", s.name, s.description).map_err(io_write)?;
    }
    writeln!(stdout, "{CUSTOM_SCENARIO}\tsingle run built from the config's run keys").map_err(io_write)
}

fn cmd_plot(kind: &str, inputs: &[PathBuf], out: &Path, stdout: &mut dyn Write) -> Result<()> {
    let kind = PlotKind::parse(kind).ok_or_else(|| {
        let known: Vec<_> = PlotKind::ALL.iter().map(|k| k.name()).collect();
        Error::InvalidArgument(format!("unknown plot kind `{kind}`; known: {}", known.join(", ")))
    })?;
    let logs = inputs.iter().map(|p| super::output::read_json(p)).collect::<Result<Vec<_>>>()?;
    emit_plot(&logs, kind, out)?;
    writeln!(stdout, "wrote {}", out.display()).map_err(io_write)
}

/// File-name-safe form of a run label.
pub fn file_stem(label: &str) -> String {
    label.chars().map(|c| if c.is_ascii_alphanumeric() || "._=-".contains(c) { c } else { '_' }).collect()
}

fn cmd_run(config: Option<&Path>, overrides: Overrides, check: bool, stdout: &mut dyn Write) -> Result<i32> {
    let text = match config {
        Some(p) => std::fs::read_to_string(p).map_err(|source| Error::Io { path: p.to_path_buf(), source })?,
        None => String::new(),
    };
    let doc = parse_config_with(&text, &overrides)?;
    let dir = doc.out_dir.join(&doc.scenario);
    std::fs::create_dir_all(&dir).map_err(|source| Error::Io { path: dir.clone(), source })?;
    std::fs::write(dir.join("config.txt"), doc.render()).map_err(|source| Error::Io { path: dir.join("config.txt"), source })?;

    let report = if doc.scenario == CUSTOM_SCENARIO {
        match run_custom(&doc) {
            Err(Error::DivergedRun { step, log }) => {
                write_log(&log, &dir, doc.plots)?;
                return Err(Error::DivergedRun { step, log });
            }
            other => other?,
        }
    } else {
        run_scenario(&doc.scenario, &doc.options)?
    };
    write_report(&report, &dir, doc.plots)?;
    for c in &report.checks {
        writeln!(stdout, "{} {} :: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail).map_err(io_write)?;
    }
    writeln!(stdout, "outputs in {}", dir.display()).map_err(io_write)?;
    Ok(if check && !report.passed() { EXIT_CHECK_FAILED } else { EXIT_OK })
}

fn run_custom(doc: &ConfigDocument) -> Result<ScenarioReport> {
    let (config, spec) = doc.custom.as_ref().ok_or_else(|| Error::invalid("custom scenario without run settings"))?;
    let target = construct_target_from_spec(spec)?;
    let mut meta = RunMetadata::new(config.method.name(), config);
    meta.scenario = Some(CUSTOM_SCENARIO.to_string());
    meta.target = Some(spec.clone());
    let result = run_from(initialize(config, &target)?, config, &target, meta)?;
    let last = result.log.final_record().expect("step 0 is always logged");
    let summary = json!({
        "method": config.method.name(),
        "stop": result.stop,
        "final_step": last.step,
        "final_loss": last.loss,
        "steps_to_stop_loss": result.steps_to_stop_loss,
        "final_singular_values": last.product_singular_values,
    });
    Ok(ScenarioReport {
        name: CUSTOM_SCENARIO.to_string(),
        seed: config.seed,
        logs: vec![result.log],
        tables: vec![],
        summary,
        checks: vec![],
    })
}

fn write_log(log: &TrajectoryLog, dir: &Path, plots: bool) -> Result<()> {
    let stem = file_stem(&log.metadata.label);
    write_csv(log, &dir.join(format!("{stem}.csv")))?;
    write_json(log, &dir.join(format!("{stem}.json")))?;
    if plots && !log.records.is_empty() {
        emit_plot(std::slice::from_ref(log), PlotKind::Spectrum, &dir.join(format!("{stem}_spectrum.svg")))?;
        if log.records[0].core.is_some() {
            emit_plot(std::slice::from_ref(log), PlotKind::SqrtModes, &dir.join(format!("{stem}_sqrt_modes.svg")))?;
        }
        if log.metadata.config.depth > 2 {
            emit_plot(std::slice::from_ref(log), PlotKind::NthRoot, &dir.join(format!("{stem}_nth_root.svg")))?;
        }
    }
    Ok(())
}

fn write_report(report: &ScenarioReport, dir: &Path, plots: bool) -> Result<()> {
    for log in &report.logs {
        write_log(log, dir, plots)?;
    }
    for table in &report.tables {
        write_table_csv(table, &dir.join(format!("{}.csv", file_stem(&table.label))))?;
    }
    let summary = json!({
        "scenario": report.name,
        "seed": report.seed,
        "passed": report.passed(),
        "checks": report.checks,
        "summary": report.summary,
    });
    write_json_value(&summary, &dir.join("summary.json"))?;
    let plotted: Vec<TrajectoryLog> = report.logs.iter().filter(|l| !l.records.is_empty()).cloned().collect();
    if plots && !plotted.is_empty() {
        emit_plot(&plotted, PlotKind::Loss, &dir.join("loss.svg"))?;
        let drift: Vec<TrajectoryLog> =
            plotted.iter().filter(|l| l.records.iter().all(|r| r.balancedness_drift.is_some())).cloned().collect();
        if !drift.is_empty() {
            emit_plot(&drift, PlotKind::Drift, &dir.join("drift.svg"))?;
        }
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn run_args(args: &[&str]) -> (i32, String, String) {
        let (mut out, mut err) = (Vec::new(), Vec::new());
        let code = main_with_args(std::iter::once("specflow").chain(args.iter().copied()), &mut out, &mut err);
        (code, String::from_utf8(out).unwrap(), String::from_utf8(err).unwrap())
    }

    #[test]
    fn help_and_usage_errors() {
        assert_eq!(run_args(&["--help"]).0, EXIT_OK);
        assert_eq!(run_args(&["bogus"]).0, EXIT_ERROR);
        assert_eq!(run_args(&["plot", "--kind", "loss"]).0, EXIT_ERROR);
    }

    #[test]
    fn list_includes_every_scenario() {
        let (code, out, _) = run_args(&["list-scenarios"]);
        assert_eq!(code, EXIT_OK);
        for s in SCENARIOS {
            assert!(out.lines().any(|l| l.starts_with(s.name)), "{}", s.name);
        }
    }

    #[test]
    fn file_stems_are_safe() {
        assert_eq!(file_stem("mu=0.3"), "mu=0.3");
        assert_eq!(file_stem("a b/c"), "a_b_c");
    }

    #[test]
    fn exit_code_mapping() {
        assert_eq!(exit_code(&Error::Divergence { step: 3 }), EXIT_DIVERGENCE);
        assert_eq!(exit_code(&Error::Scenario("x".into())), EXIT_CHECK_FAILED);
        assert_eq!(exit_code(&Error::invalid("x")), EXIT_ERROR);
    }
}
