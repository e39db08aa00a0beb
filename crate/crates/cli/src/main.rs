//! `transfn`: run transfunction analyses described by a JSON scenario file.
//!
//! Exit status: 0 on success, 1 when `--strict` is set and a check fails,
//! 2 on unreadable or malformed input.

mod analysis;
mod error;
mod scenario;

use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Parser, ValueEnum};

use analysis::{object_checks, run_analysis, RunReport, Settings, Status};
use error::CliError;
use scenario::{Scenario, World};

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
enum Command {
    Localize,
    Approx,
    Graphs,
    Markov,
    Popdyn,
    /// Every analysis in the scenario plus the invariant suite on every object.
    Verify,
}

impl Command {
    fn name(self) -> &'static str {
        match self {
            Command::Localize => "localize",
            Command::Approx => "approx",
            Command::Graphs => "graphs",
            Command::Markov => "markov",
            Command::Popdyn => "popdyn",
            Command::Verify => "verify",
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "transfn", version, about = "Localization, approximation and transport analyses for transfunctions")]
struct Cli {
    #[arg(value_enum)]
    command: Command,

    /// Scenario file (JSON).
    scenario: PathBuf,

    /// Smallest probe radius; defaults to the grid resolution of each domain.
    #[arg(long)]
    delta_min: Option<f64>,

    /// Seed for sampling-based checks.
    #[arg(long, default_value_t = 0)]
    seed: u64,

    /// Trials per sampling-based check.
    #[arg(long, default_value_t = 200)]
    trials: usize,

    /// Exit with status 1 if any check fails.
    #[arg(long)]
    strict: bool,

    /// Directory for CSV and JSON reports.
    #[arg(long, default_value = "transfn-out")]
    out: PathBuf,
}

fn load(path: &PathBuf) -> Result<World, CliError> {
    let shown = path.display().to_string();
    let text = fs::read_to_string(path).map_err(|source| CliError::Read { path: shown.clone(), source })?;
    let scenario = Scenario::parse(&text).map_err(|e| CliError::Input {
        path: shown.clone(),
        line: e.line(),
        message: format!("column {}: {}", e.column(), strip_position(&e.to_string())),
    })?;
    scenario.resolve().map_err(|a| CliError::Input { path: shown, line: a.line_in(&text), message: a.message })
}

/// serde_json appends " at line L column C"; the position is reported separately.
fn strip_position(msg: &str) -> &str {
    msg.rfind(" at line ").map_or(msg, |i| &msg[..i])
}

fn run(cli: &Cli) -> Result<RunReport, CliError> {
    let world = load(&cli.scenario)?;
    let settings = Settings { seed: cli.seed, trials: cli.trials, delta_min: cli.delta_min, out: cli.out.clone() };
    let selected: Vec<_> = world
        .analyses
        .iter()
        .filter(|a| cli.command == Command::Verify || a.kind() == cli.command.name())
        .collect();
    if selected.is_empty() {
        return Err(CliError::Input {
            path: cli.scenario.display().to_string(),
            line: 1,
            message: format!("scenario has no `{}` analyses", cli.command.name()),
        });
    }
    fs::create_dir_all(&cli.out)
        .map_err(|e| CliError::Output { path: cli.out.display().to_string(), message: e.to_string() })?;

    let mut reports = Vec::new();
    for a in selected {
        reports.push(run_analysis(&world, a, &settings)?);
    }
    if cli.command == Command::Verify {
        reports.extend(object_checks(&world, &settings));
    }
    let name = if world.name.is_empty() {
        cli.scenario.file_stem().map(|s| s.to_string_lossy().into_owned()).unwrap_or_default()
    } else {
        world.name.clone()
    };
    let report = RunReport::new(&name, cli.command.name(), &settings, reports);

    let path = cli.out.join(format!("{}_report.json", cli.command.name()));
    let fail = |message: String| CliError::Output { path: path.display().to_string(), message };
    let mut body = serde_json::to_string_pretty(&report).map_err(|e| fail(e.to_string()))?;
    body.push('\n');
    fs::write(&path, body).map_err(|e| fail(e.to_string()))?;
    Ok(report)
}

fn print(report: &RunReport, out: &Path) {
    let stdout = std::io::stdout();
    let mut w = stdout.lock();
    for a in &report.analyses {
        for c in &a.checks {
            let tag = match c.status {
                Status::Pass => "PASS",
                Status::Fail => "FAIL",
                Status::Flagged => "FLAG",
            };
            let _ = writeln!(w, "{tag} {}({}) {}: {}", a.kind, a.target, c.name, c.detail);
        }
    }
    let s = &report.summary;
    let _ = writeln!(
        w,
        "{}: {} passed, {} failed, {} flagged; reports in {}",
        report.command,
        s.passed,
        s.failed,
        s.flagged,
        out.display()
    );
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(&cli) {
        Ok(report) => {
            print(&report, &cli.out);
            if cli.strict && report.summary.failed > 0 {
                ExitCode::from(1)
            } else {
                ExitCode::SUCCESS
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
