//! `srcbf`: simulate a safety-filtered unicycle avoiding a moving obstacle.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use srcbf::commands::{self, LoadArgs, RunArgs, SweepArgs, ValidateArgs};

#[derive(Parser)]
#[command(
    name = "srcbf",
    version,
    about = "Safety-filtered unicycle simulator (robust control barrier backstepping)",
    propagate_version = true
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct CommonArgs {
    /// Scenario file path, or a bundled scenario name
    /// (paper_robust, paper_standard).
    #[arg(long, value_name = "PATH|NAME")]
    config: String,

    /// Override a scenario field by dotted path, e.g.
    /// --set avoidance.m=0.5 (repeatable).
    #[arg(long = "set", value_name = "KEY=VALUE")]
    sets: Vec<String>,

    /// Shorthand for --set run.dt=...
    #[arg(long)]
    dt: Option<f64>,

    /// Shorthand for --set run.horizon=...
    #[arg(long)]
    horizon: Option<f64>,

    /// Suppress progress output on stdout.
    #[arg(long, short)]
    quiet: bool,
}

#[derive(Args)]
struct OutArgs {
    /// Output directory (created if absent).
    #[arg(long, default_value = "out")]
    out: PathBuf,

    /// Overwrite existing output files.
    #[arg(long)]
    force: bool,
}

#[derive(Subcommand)]
enum Command {
    /// Run one scenario and write trajectory.csv, summary.toml, and
    /// resolved_scenario.toml.
    Run {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run the scenario in both filter modes against the same obstacle and
    /// write compare.csv plus compare_summary.toml.
    Compare {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        out: OutArgs,
    },
    /// Run the scenario once per value of a swept parameter and write an
    /// aggregated sweep.toml.
    Sweep {
        #[command(flatten)]
        common: CommonArgs,
        #[command(flatten)]
        out: OutArgs,
        /// Dotted config path to sweep, e.g. avoidance.m.
        #[arg(long, value_name = "KEY")]
        param: String,
        /// Comma-separated numeric values, e.g. 0.5,1.0,1.5.
        #[arg(long, value_name = "V1,V2,...", value_delimiter = ',', required = true)]
        values: Vec<f64>,
    },
    /// Parse and validate a scenario, printing the resolved configuration.
    Validate {
        #[command(flatten)]
        common: CommonArgs,
    },
}

fn load_args(common: &CommonArgs) -> LoadArgs {
    LoadArgs {
        config: common.config.clone(),
        sets: common.sets.clone(),
        dt: common.dt,
        horizon: common.horizon,
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match &cli.command {
        Command::Run { common, out } => commands::cmd_run(&RunArgs {
            load: load_args(common),
            out: out.out.clone(),
            force: out.force,
            quiet: common.quiet,
        }),
        Command::Compare { common, out } => commands::cmd_compare(&RunArgs {
            load: load_args(common),
            out: out.out.clone(),
            force: out.force,
            quiet: common.quiet,
        }),
        Command::Sweep {
            common,
            out,
            param,
            values,
        } => commands::cmd_sweep(&SweepArgs {
            run: RunArgs {
                load: load_args(common),
                out: out.out.clone(),
                force: out.force,
                quiet: common.quiet,
            },
            param: param.clone(),
            values: values.clone(),
        }),
        Command::Validate { common } => commands::cmd_validate(&ValidateArgs {
            load: load_args(common),
            quiet: common.quiet,
        }),
    };

    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
