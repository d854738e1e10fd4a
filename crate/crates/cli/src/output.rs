//! Run artifacts: trajectory CSV, structured summaries, comparison and
//! sweep tables.
//!
//! All floats are written with Rust's shortest round-trip formatting (`.`
//! decimal separator); flags are `0`/`1`; every file ends with a newline.

use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};

use serde::Serialize;

use srcbf_core::sim::{EventReport, Metrics, Scenario, TrajectoryLog};

pub const SUMMARY_SCHEMA_VERSION: u32 = 1;

/// Exact column set of `trajectory.csv`, in order.
pub const CSV_HEADER: &str = "t,x,y,v,theta,x_d,y_d,u_v_nom,u_theta_nom,u_v,u_theta,h1,h2,eta,override,singular,distance";

#[derive(Debug)]
pub enum OutputError {
    Io { path: PathBuf, source: io::Error },
    /// Refusing to overwrite without `--force`.
    Exists { path: PathBuf },
}

impl std::fmt::Display for OutputError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            OutputError::Io { path, source } => {
                write!(f, "cannot write {}: {source}", path.display())
            }
            OutputError::Exists { path } => write!(
                f,
                "{} already exists (pass --force to overwrite)",
                path.display()
            ),
        }
    }
}

impl std::error::Error for OutputError {}

/// Create `dir` if needed and write `content` to `dir/name`, refusing to
/// clobber existing files unless `force` is set.
pub fn write_file(dir: &Path, name: &str, content: &str, force: bool) -> Result<PathBuf, OutputError> {
    fs::create_dir_all(dir).map_err(|source| OutputError::Io {
        path: dir.to_path_buf(),
        source,
    })?;
    let path = dir.join(name);
    if !force && path.exists() {
        return Err(OutputError::Exists { path });
    }
    fs::write(&path, content).map_err(|source| OutputError::Io {
        path: path.clone(),
        source,
    })?;
    Ok(path)
}

fn flag(b: bool) -> u8 {
    if b {
        1
    } else {
        0
    }
}

/// Render a full trajectory log as CSV (header plus one row per step).
pub fn trajectory_csv(log: &TrajectoryLog) -> String {
    let mut out = String::with_capacity(64 * (log.steps.len() + 1));
    out.push_str(CSV_HEADER);
    out.push('\n');
    for r in &log.steps {
        let s = &r.state;
        writeln!(
            out,
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.t,
            s.x,
            s.y,
            s.v,
            s.theta,
            s.obstacle_x,
            s.obstacle_y,
            r.u_nom[0],
            r.u_nom[1],
            r.u[0],
            r.u[1],
            r.h1,
            r.h2,
            r.eta,
            flag(r.overridden),
            flag(r.singular),
            s.separation(),
        )
        .expect("string write cannot fail");
    }
    out
}

/// Combined standard-versus-robust CSV on the shared time grid. Column
/// groups are prefixed `std_` and `rob_`.
pub fn compare_csv(standard: &TrajectoryLog, robust: &TrajectoryLog) -> String {
    assert_eq!(
        standard.steps.len(),
        robust.steps.len(),
        "comparison runs share the grid"
    );
    let cols: Vec<&str> = CSV_HEADER.split(',').skip(1).collect();
    let mut out = String::new();
    out.push('t');
    for prefix in ["std_", "rob_"] {
        for c in &cols {
            out.push(',');
            out.push_str(prefix);
            out.push_str(c);
        }
    }
    out.push('\n');

    let row_fields = |log: &TrajectoryLog, k: usize| -> String {
        let r = &log.steps[k];
        let s = &r.state;
        format!(
            "{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            s.x,
            s.y,
            s.v,
            s.theta,
            s.obstacle_x,
            s.obstacle_y,
            r.u_nom[0],
            r.u_nom[1],
            r.u[0],
            r.u[1],
            r.h1,
            r.h2,
            r.eta,
            flag(r.overridden),
            flag(r.singular),
            s.separation(),
        )
    };

    for k in 0..standard.steps.len() {
        writeln!(
            out,
            "{},{},{}",
            standard.steps[k].t,
            row_fields(standard, k),
            row_fields(robust, k),
        )
        .expect("string write cannot fail");
    }
    out
}

#[derive(Serialize)]
struct SummaryDoc<'a> {
    schema_version: u32,
    run: RunInfo<'a>,
    events: EventsDoc,
    metrics: MetricsDoc,
}

#[derive(Serialize)]
struct RunInfo<'a> {
    scenario: &'a str,
    filter_mode: &'a str,
    horizon: f64,
    dt: f64,
    steps: usize,
    scenario_hash: String,
}

#[derive(Serialize)]
struct EventsDoc {
    #[serde(skip_serializing_if = "Option::is_none")]
    first_override_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    collision_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    resume_time: Option<f64>,
    min_h1: f64,
    min_h2: f64,
    min_distance: f64,
}

#[derive(Serialize)]
struct MetricsDoc {
    min_distance: f64,
    mean_distance: f64,
    min_h1: f64,
    min_h2: f64,
    override_duration: f64,
    max_correction: f64,
    floor_violations_h1: usize,
    floor_violations_h2: usize,
}

impl From<&EventReport> for EventsDoc {
    fn from(e: &EventReport) -> Self {
        EventsDoc {
            first_override_time: e.first_override_time,
            collision_time: e.collision_time,
            resume_time: e.resume_time,
            min_h1: e.min_h1,
            min_h2: e.min_h2,
            min_distance: e.min_distance,
        }
    }
}

impl From<&Metrics> for MetricsDoc {
    fn from(m: &Metrics) -> Self {
        MetricsDoc {
            min_distance: m.min_distance,
            mean_distance: m.mean_distance,
            min_h1: m.min_h1,
            min_h2: m.min_h2,
            override_duration: m.override_duration,
            max_correction: m.max_correction,
            floor_violations_h1: m.floor_violations[0],
            floor_violations_h2: m.floor_violations[1],
        }
    }
}

fn mode_name(scenario: &Scenario) -> &'static str {
    match scenario.mode {
        srcbf_core::sim::FilterMode::Standard => "standard",
        srcbf_core::sim::FilterMode::Robust => "robust",
    }
}

/// Render `summary.toml` for one run.
pub fn summary_toml(
    scenario_name: &str,
    scenario: &Scenario,
    log: &TrajectoryLog,
    events: &EventReport,
    metrics: &Metrics,
) -> String {
    let doc = SummaryDoc {
        schema_version: SUMMARY_SCHEMA_VERSION,
        run: RunInfo {
            scenario: scenario_name,
            filter_mode: mode_name(scenario),
            horizon: scenario.horizon,
            dt: scenario.dt,
            steps: log.steps.len(),
            scenario_hash: format!("{:016x}", log.scenario_hash),
        },
        events: events.into(),
        metrics: metrics.into(),
    };
    toml::to_string_pretty(&doc).expect("summary serializes")
}

#[derive(Serialize)]
struct CompareDoc<'a> {
    schema_version: u32,
    scenario: &'a str,
    standard: AgentDoc,
    robust: AgentDoc,
}

#[derive(Serialize)]
struct AgentDoc {
    events: EventsDoc,
    metrics: MetricsDoc,
}

/// Render the comparison summary for `compare`.
pub fn compare_summary_toml(
    scenario_name: &str,
    standard: (&EventReport, &Metrics),
    robust: (&EventReport, &Metrics),
) -> String {
    let doc = CompareDoc {
        schema_version: SUMMARY_SCHEMA_VERSION,
        scenario: scenario_name,
        standard: AgentDoc {
            events: standard.0.into(),
            metrics: standard.1.into(),
        },
        robust: AgentDoc {
            events: robust.0.into(),
            metrics: robust.1.into(),
        },
    };
    toml::to_string_pretty(&doc).expect("summary serializes")
}

#[derive(Serialize)]
pub struct SweepDoc<'a> {
    pub schema_version: u32,
    pub scenario: &'a str,
    pub parameter: &'a str,
    pub runs: Vec<SweepRow>,
}

#[derive(Serialize)]
pub struct SweepRow {
    pub value: f64,
    pub status: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub min_distance: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub override_duration: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub first_override_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub collision_time: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub resume_time: Option<f64>,
}

pub fn sweep_toml(doc: &SweepDoc) -> String {
    toml::to_string_pretty(doc).expect("sweep table serializes")
}
