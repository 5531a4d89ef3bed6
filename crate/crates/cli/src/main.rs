//! `pwampc`: synthesis, simulation, comparison, table export and friction
//! identification from the command line.
//!
//! Every command writes into the output directory (`--out`, or
//! `PWAMPC_OUT`, or `./pwampc-out`) and prints a `key = value` report.
//! Failures print one line on stderr,
//! `error: code=<n> kind=<kind> message="<text>"`, and exit with the code
//! of their family.

mod commands;
mod overrides;
mod plot;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use overrides::{Overrides, DESIGN_KEYS, IDENTIFY_KEYS, SCENARIO_KEYS, TABLE_KEYS};

#[derive(Debug, Parser)]
#[command(name = "pwampc", version, about = "Integral MPC for piecewise-affine friction plants")]
struct Cli {
    /// Output directory.
    #[arg(long, global = true, env = "PWAMPC_OUT", default_value = "pwampc-out")]
    out: PathBuf,
    /// Worker threads for batch runs.
    #[arg(long, global = true, default_value_t = 1)]
    jobs: usize,
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Args)]
struct Common {
    /// `key=value` tuning override; repeatable.
    #[arg(long = "override", value_name = "KEY=VALUE")]
    overrides: Vec<String>,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Synthesize terminal ingredients and write controller.json.
    Design {
        /// Model file (TOML); the identified model when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run one scenario: trace.csv, metrics.txt and plot.svg.
    Simulate {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Controller kind (mpc-lqr, mpc-robust, pid) or a controller file.
        #[arg(long)]
        controller: Option<String>,
        /// Model the controller is synthesized on (TOML).
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Run one scenario under several controllers and tabulate metrics.
    Compare {
        #[arg(long)]
        scenario: Option<PathBuf>,
        /// Repeatable or comma separated; defaults to mpc-lqr,mpc-robust.
        #[arg(long)]
        controller: Vec<String>,
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
    /// Enumerate the explicit control law of a controller file.
    ExportTable {
        #[arg(long)]
        controller: PathBuf,
        #[command(flatten)]
        common: Common,
    },
    /// Estimate breakaway voltages of a nonlinear plant with a sine sweep.
    Identify {
        /// Nonlinear plant file (TOML); the default plant when omitted.
        #[arg(long)]
        model: Option<PathBuf>,
        #[command(flatten)]
        common: Common,
    },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Failure {
    pub code: u8,
    pub kind: &'static str,
    pub message: String,
}

impl Failure {
    pub fn io(message: String) -> Self {
        Self {
            code: 3,
            kind: "io",
            message,
        }
    }
}

impl From<pwampc::Error> for Failure {
    fn from(e: pwampc::Error) -> Self {
        use pwampc::Error as E;
        let code = match &e {
            E::Io(_) => 3,
            E::Invalid(_) | E::Dimension(_) | E::Format(_) => 4,
            E::NotStabilizable(_) => 10,
            E::Unstable(_) => 11,
            E::Numeric(_) => 12,
            E::HinfInfeasible { .. } => 13,
            E::EmptyTerminalSet(_) => 14,
            E::InvariantSetNotConverged { .. } => 15,
            E::SimulationFault { .. } => 20,
            E::IdentificationFailed(_) => 21,
        };
        Self {
            code,
            kind: e.kind(),
            message: e.to_string(),
        }
    }
}

fn execute(cli: &Cli) -> Result<String, Failure> {
    let out = &cli.out;
    if cli.jobs == 0 {
        return Err(pwampc::Error::Invalid("--jobs must be at least 1".into()).into());
    }
    match &cli.command {
        Command::Design { model, common } => {
            let ov = Overrides::parse(&common.overrides, DESIGN_KEYS)?;
            commands::design(model.as_deref(), &ov, out)
        }
        Command::Simulate {
            scenario,
            controller,
            model,
            common,
        } => {
            let ov = Overrides::parse(&common.overrides, SCENARIO_KEYS)?;
            commands::simulate(scenario.as_deref(), controller.as_deref(), model.as_deref(), &ov, out)
        }
        Command::Compare {
            scenario,
            controller,
            model,
            common,
        } => {
            let ov = Overrides::parse(&common.overrides, SCENARIO_KEYS)?;
            commands::compare(scenario.as_deref(), controller, model.as_deref(), &ov, out, cli.jobs)
        }
        Command::ExportTable { controller, common } => {
            let ov = Overrides::parse(&common.overrides, TABLE_KEYS)?;
            commands::export_table(controller, &ov, out)
        }
        Command::Identify { model, common } => {
            let ov = Overrides::parse(&common.overrides, IDENTIFY_KEYS)?;
            commands::identify(model.as_deref(), &ov, out)
        }
    }
}

fn report(f: &Failure) -> ExitCode {
    let message = f.message.replace('\\', "\\\\").replace('"', "\\\"").replace('\n', " ");
    eprintln!("error: code={} kind={} message=\"{message}\"", f.code, f.kind);
    ExitCode::from(f.code)
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(c) => c,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                print!("{e}");
                return ExitCode::SUCCESS;
            }
            let text = e.to_string();
            let first = text.lines().next().unwrap_or("usage error").trim_start_matches("error: ");
            return report(&Failure {
                code: 2,
                kind: "usage",
                message: first.to_string(),
            });
        }
    };
    match execute(&cli) {
        Ok(text) => {
            print!("{text}");
            ExitCode::SUCCESS
        }
        Err(f) => report(&f),
    }
}
