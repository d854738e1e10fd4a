//! Subcommand implementations and exit-code policy.

use std::path::PathBuf;

use crate::config::{ConfigError, ScenarioConfig};
use crate::output::{self, OutputError, SweepDoc, SweepRow};
use srcbf_core::sim::{detect_events, metrics, run, FilterMode, Scenario, SimError};

/// Exit codes: 0 success, 2 configuration/validation problems, 3 chain
/// setup failures, 1 everything else (I/O).
#[derive(Debug)]
pub enum CliError {
    Config(ConfigError),
    Sim(SimError),
    Output(OutputError),
}

impl std::fmt::Display for CliError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            CliError::Config(e) => write!(f, "{e}"),
            CliError::Sim(e) => write!(f, "{e}"),
            CliError::Output(e) => write!(f, "{e}"),
        }
    }
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) => 2,
            // Scenario numbers passed config validation, so a Params error
            // here is still a user-input problem; chain construction and
            // runtime failures are setup errors.
            CliError::Sim(SimError::Params(_)) => 2,
            CliError::Sim(_) => 3,
            CliError::Output(OutputError::Exists { .. }) => 2,
            CliError::Output(_) => 1,
        }
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::Config(e)
    }
}

impl From<SimError> for CliError {
    fn from(e: SimError) -> Self {
        CliError::Sim(e)
    }
}

impl From<OutputError> for CliError {
    fn from(e: OutputError) -> Self {
        CliError::Output(e)
    }
}

/// Flags shared by every subcommand that loads a scenario.
pub struct LoadArgs {
    pub config: String,
    pub sets: Vec<String>,
    pub dt: Option<f64>,
    pub horizon: Option<f64>,
}

impl LoadArgs {
    /// `--dt` and `--horizon` are sugar for `--set run.*=...`, applied
    /// after the explicit sets so they win.
    fn overrides(&self) -> Vec<String> {
        let mut all = self.sets.clone();
        if let Some(dt) = self.dt {
            all.push(format!("run.dt={dt}"));
        }
        if let Some(h) = self.horizon {
            all.push(format!("run.horizon={h}"));
        }
        all
    }

    pub fn load(&self) -> Result<ScenarioConfig, CliError> {
        Ok(ScenarioConfig::load(&self.config, &self.overrides())?)
    }
}

pub struct RunArgs {
    pub load: LoadArgs,
    pub out: PathBuf,
    pub force: bool,
    pub quiet: bool,
}

pub fn cmd_run(args: &RunArgs) -> Result<(), CliError> {
    let config = args.load.load()?;
    let scenario = config.to_scenario()?;
    let log = run(&scenario)?;
    let events = detect_events(&log);
    let stats = metrics(&log, &scenario);

    let csv = output::trajectory_csv(&log);
    let summary = output::summary_toml(&args.load.config, &scenario, &log, &events, &stats);
    output::write_file(&args.out, "trajectory.csv", &csv, args.force)?;
    output::write_file(&args.out, "summary.toml", &summary, args.force)?;
    output::write_file(
        &args.out,
        "resolved_scenario.toml",
        &config.to_toml(),
        args.force,
    )?;

    if !args.quiet {
        println!(
            "run complete: {} steps, min distance {:.4}, collision {}",
            log.steps.len(),
            events.min_distance,
            events
                .collision_time
                .map(|t| format!("at t = {t:.3}"))
                .unwrap_or_else(|| "none".into()),
        );
        println!("wrote {}", args.out.join("trajectory.csv").display());
        println!("wrote {}", args.out.join("summary.toml").display());
        println!("wrote {}", args.out.join("resolved_scenario.toml").display());
    }
    Ok(())
}

pub fn cmd_compare(args: &RunArgs) -> Result<(), CliError> {
    let config = args.load.load()?;
    let base = config.to_scenario()?;

    let standard = Scenario {
        mode: FilterMode::Standard,
        ..base.clone()
    };
    let robust = Scenario {
        mode: FilterMode::Robust,
        ..base
    };
    let std_log = run(&standard)?;
    let rob_log = run(&robust)?;
    let std_events = detect_events(&std_log);
    let rob_events = detect_events(&rob_log);
    let std_metrics = metrics(&std_log, &standard);
    let rob_metrics = metrics(&rob_log, &robust);

    let csv = output::compare_csv(&std_log, &rob_log);
    let summary = output::compare_summary_toml(
        &args.load.config,
        (&std_events, &std_metrics),
        (&rob_events, &rob_metrics),
    );
    output::write_file(&args.out, "compare.csv", &csv, args.force)?;
    output::write_file(&args.out, "compare_summary.toml", &summary, args.force)?;

    if !args.quiet {
        println!(
            "standard: min distance {:.4}, collision {}",
            std_events.min_distance,
            std_events
                .collision_time
                .map(|t| format!("at t = {t:.3}"))
                .unwrap_or_else(|| "none".into()),
        );
        println!(
            "robust:   min distance {:.4}, collision {}",
            rob_events.min_distance,
            rob_events
                .collision_time
                .map(|t| format!("at t = {t:.3}"))
                .unwrap_or_else(|| "none".into()),
        );
        println!("wrote {}", args.out.join("compare.csv").display());
        println!("wrote {}", args.out.join("compare_summary.toml").display());
    }
    Ok(())
}

pub struct SweepArgs {
    pub run: RunArgs,
    pub param: String,
    pub values: Vec<f64>,
}

pub fn cmd_sweep(args: &SweepArgs) -> Result<(), CliError> {
    if args.values.is_empty() {
        return Err(CliError::Config(ConfigError::BadOverride {
            spec: format!("--param {} --values <empty>", args.param),
            message: "sweep needs at least one value".into(),
        }));
    }

    // Validate the base config once up front so a broken scenario fails the
    // whole sweep rather than every row.
    args.run.load.load()?;

    // One independent run per value; failures land in the table.
    let results: Vec<Result<(f64, srcbf_core::sim::EventReport, srcbf_core::sim::Metrics), (f64, String)>> =
        std::thread::scope(|scope| {
            let handles: Vec<_> = args
                .values
                .iter()
                .map(|&value| {
                    let load = &args.run.load;
                    let param = &args.param;
                    scope.spawn(move || {
                        let mut sets = load.overrides();
                        sets.push(format!("{param}={value}"));
                        let config = ScenarioConfig::load(&load.config, &sets)
                            .map_err(|e| (value, e.to_string()))?;
                        let scenario = config.to_scenario().map_err(|e| (value, e.to_string()))?;
                        let log = run(&scenario).map_err(|e| (value, e.to_string()))?;
                        let events = detect_events(&log);
                        let stats = metrics(&log, &scenario);
                        Ok((value, events, stats))
                    })
                })
                .collect();
            handles
                .into_iter()
                .map(|h| h.join().expect("sweep worker panicked"))
                .collect()
        });

    let rows: Vec<SweepRow> = results
        .into_iter()
        .map(|res| match res {
            Ok((value, events, stats)) => SweepRow {
                value,
                status: "ok".into(),
                error: None,
                min_distance: Some(events.min_distance),
                override_duration: Some(stats.override_duration),
                first_override_time: events.first_override_time,
                collision_time: events.collision_time,
                resume_time: events.resume_time,
            },
            Err((value, message)) => SweepRow {
                value,
                status: "error".into(),
                error: Some(message),
                min_distance: None,
                override_duration: None,
                first_override_time: None,
                collision_time: None,
                resume_time: None,
            },
        })
        .collect();

    let doc = SweepDoc {
        schema_version: output::SUMMARY_SCHEMA_VERSION,
        scenario: &args.run.load.config,
        parameter: &args.param,
        runs: rows,
    };
    output::write_file(
        &args.run.out,
        "sweep.toml",
        &output::sweep_toml(&doc),
        args.run.force,
    )?;

    if !args.run.quiet {
        println!(
            "swept {} over {} values; wrote {}",
            args.param,
            args.values.len(),
            args.run.out.join("sweep.toml").display()
        );
    }
    Ok(())
}

pub struct ValidateArgs {
    pub load: LoadArgs,
    pub quiet: bool,
}

pub fn cmd_validate(args: &ValidateArgs) -> Result<(), CliError> {
    let config = args.load.load()?;
    if !args.quiet {
        println!("ok: {}", args.load.config);
        print!("{}", config.to_toml());
    }
    Ok(())
}
