//! Scenario files: TOML schema, validation, overrides, and the bundled
//! scenarios.
//!
//! A scenario file looks like:
//!
//! ```toml
//! schema_version = 1
//!
//! [agent]
//! x = 0.0
//! y = 0.0
//! v = 0.0
//! theta = 0.0
//!
//! [obstacle]
//! x = 2.0
//! y = -3.0
//! theta = 1.5707963267948966
//!
//! [obstacle.profile]
//! kind = "steering_wave"    # static | constant | steering_wave | tabulated
//! speed = 1.0
//! amplitude = 2.0
//! frequency = 2.0
//!
//! [avoidance]
//! r = 2.0
//! m = 1.0
//! c1 = 3.0
//! c2 = 1.0
//! eps1 = 0.01               # default 0.01
//! eps2 = 0.01               # default 0.01
//!
//! [nominal]
//! k1 = 1.0                  # defaults shown
//! k2 = 1.0
//! v_ref = 1.0
//! theta_ref = 0.0
//!
//! [run]
//! horizon = 10.0
//! dt = 0.001                # default 0.001
//! filter_mode = "robust"    # standard | robust
//! ```
//!
//! Unknown keys are rejected so typos fail loudly. `--set a.b.c=value`
//! overrides are applied to the parsed tree before validation, so they are
//! checked exactly like file contents.

use std::fmt;
use std::path::Path;

use serde::{Deserialize, Serialize};

use srcbf_core::sim::{FilterMode, NominalParams, Scenario};
use srcbf_core::unicycle::{
    AvoidanceParams, ObstaclePose, ObstacleProfile, TabulatedProfile, UnicycleError,
};

/// Config path for a library parameter name, so validation errors point at
/// the key the user actually wrote.
fn config_path(name: &str) -> &str {
    match name {
        "safety_radius" => "avoidance.r",
        "disturbance_bound" => "avoidance.m",
        "c1" => "avoidance.c1",
        "c2" => "avoidance.c2",
        "eps1" => "avoidance.eps1",
        "eps2" => "avoidance.eps2",
        "k1" => "nominal.k1",
        "k2" => "nominal.k2",
        "v_ref" => "nominal.v_ref",
        "theta_ref" => "nominal.theta_ref",
        "x" => "agent.x",
        "y" => "agent.y",
        "v" => "agent.v",
        "theta" => "agent.theta",
        "horizon" => "run.horizon",
        "dt" => "run.dt",
        _ => "scenario",
    }
}

pub const SCHEMA_VERSION: u32 = 1;

pub const BUILTIN_SCENARIOS: &[(&str, &str)] = &[
    ("paper_robust", include_str!("../scenarios/paper_robust.toml")),
    ("paper_standard", include_str!("../scenarios/paper_standard.toml")),
];

#[derive(Debug)]
pub enum ConfigError {
    Io { path: String, source: std::io::Error },
    Parse { path: String, message: String },
    /// Field-level validation failure; `field` is the dotted path.
    Invalid { field: String, message: String },
    UnknownScenario { name: String },
    BadOverride { spec: String, message: String },
}

impl fmt::Display for ConfigError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            ConfigError::Io { path, source } => write!(f, "cannot read {path}: {source}"),
            ConfigError::Parse { path, message } => write!(f, "{path}: {message}"),
            ConfigError::Invalid { field, message } => write!(f, "field `{field}`: {message}"),
            ConfigError::UnknownScenario { name } => write!(
                f,
                "no scenario file or bundled scenario named `{name}` (bundled: paper_robust, paper_standard)"
            ),
            ConfigError::BadOverride { spec, message } => {
                write!(f, "bad --set override `{spec}`: {message}")
            }
        }
    }
}

impl std::error::Error for ConfigError {}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ScenarioConfig {
    #[serde(default = "default_schema_version")]
    pub schema_version: u32,
    #[serde(default)]
    pub agent: AgentSection,
    pub obstacle: ObstacleSection,
    pub avoidance: AvoidanceSection,
    #[serde(default)]
    pub nominal: NominalSection,
    pub run: RunSection,
}

fn default_schema_version() -> u32 {
    SCHEMA_VERSION
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AgentSection {
    #[serde(default)]
    pub x: f64,
    #[serde(default)]
    pub y: f64,
    #[serde(default)]
    pub v: f64,
    #[serde(default)]
    pub theta: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ObstacleSection {
    pub x: f64,
    pub y: f64,
    #[serde(default)]
    pub theta: f64,
    #[serde(default)]
    pub profile: ProfileSection,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields, tag = "kind", rename_all = "snake_case")]
pub enum ProfileSection {
    Static,
    Constant {
        speed: f64,
        #[serde(default)]
        turn_rate: f64,
    },
    SteeringWave {
        speed: f64,
        amplitude: f64,
        frequency: f64,
    },
    Tabulated {
        /// Rows of `[t, speed, turn_rate]`, strictly increasing in `t`.
        points: Vec<[f64; 3]>,
    },
}

impl Default for ProfileSection {
    fn default() -> Self {
        ProfileSection::Static
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AvoidanceSection {
    pub r: f64,
    pub m: f64,
    pub c1: f64,
    pub c2: f64,
    #[serde(default = "default_eps")]
    pub eps1: f64,
    #[serde(default = "default_eps")]
    pub eps2: f64,
}

fn default_eps() -> f64 {
    0.01
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NominalSection {
    #[serde(default = "default_one")]
    pub k1: f64,
    #[serde(default = "default_one")]
    pub k2: f64,
    #[serde(default = "default_one")]
    pub v_ref: f64,
    #[serde(default)]
    pub theta_ref: f64,
}

fn default_one() -> f64 {
    1.0
}

impl Default for NominalSection {
    fn default() -> Self {
        NominalSection {
            k1: 1.0,
            k2: 1.0,
            v_ref: 1.0,
            theta_ref: 0.0,
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunSection {
    pub horizon: f64,
    #[serde(default = "default_dt")]
    pub dt: f64,
    pub filter_mode: FilterModeSection,
}

fn default_dt() -> f64 {
    1e-3
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FilterModeSection {
    Standard,
    Robust,
}

impl ScenarioConfig {
    /// Load from a path, or fall back to a bundled scenario of that name.
    pub fn load(name_or_path: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let path = Path::new(name_or_path);
        let (label, text) = if path.is_file() {
            let text = std::fs::read_to_string(path).map_err(|source| ConfigError::Io {
                path: name_or_path.to_string(),
                source,
            })?;
            (name_or_path.to_string(), text)
        } else if let Some((name, text)) = BUILTIN_SCENARIOS
            .iter()
            .find(|(name, _)| *name == name_or_path)
        {
            (format!("<bundled {name}>"), text.to_string())
        } else {
            return Err(ConfigError::UnknownScenario {
                name: name_or_path.to_string(),
            });
        };
        Self::parse(&label, &text, overrides)
    }

    /// Parse TOML text, apply dotted-path overrides, then deserialize and
    /// validate.
    pub fn parse(label: &str, text: &str, overrides: &[String]) -> Result<Self, ConfigError> {
        let mut tree: toml::Value = toml::from_str(text).map_err(|e| ConfigError::Parse {
            path: label.to_string(),
            message: e.to_string(),
        })?;
        for spec in overrides {
            apply_override(&mut tree, spec)?;
        }
        let config: ScenarioConfig =
            tree.try_into().map_err(|e: toml::de::Error| ConfigError::Parse {
                path: label.to_string(),
                message: e.to_string(),
            })?;
        config.validate()?;
        Ok(config)
    }

    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.schema_version != SCHEMA_VERSION {
            return Err(ConfigError::Invalid {
                field: "schema_version".into(),
                message: format!("unsupported version {} (expected {SCHEMA_VERSION})", self.schema_version),
            });
        }
        // Defer numeric range checks to the scenario types themselves so the
        // CLI and library enforce identical rules; translate parameter names
        // back to config paths for the error message.
        let scenario = self.to_scenario()?;
        scenario.validate().map_err(|e| ConfigError::Invalid {
            field: match &e {
                UnicycleError::BadParam { name, .. } => config_path(name).into(),
                _ => "scenario".into(),
            },
            message: e.to_string(),
        })?;
        Ok(())
    }

    pub fn to_scenario(&self) -> Result<Scenario, ConfigError> {
        let profile = match &self.obstacle.profile {
            ProfileSection::Static => ObstacleProfile::Static,
            ProfileSection::Constant { speed, turn_rate } => ObstacleProfile::Constant {
                speed: *speed,
                turn_rate: *turn_rate,
            },
            ProfileSection::SteeringWave {
                speed,
                amplitude,
                frequency,
            } => ObstacleProfile::SteeringWave {
                speed: *speed,
                amplitude: *amplitude,
                frequency: *frequency,
            },
            ProfileSection::Tabulated { points } => ObstacleProfile::Tabulated(
                TabulatedProfile::new(points.clone()).map_err(|e| ConfigError::Invalid {
                    field: "obstacle.profile.points".into(),
                    message: e.to_string(),
                })?,
            ),
        };
        Ok(Scenario {
            agent: [self.agent.x, self.agent.y, self.agent.v, self.agent.theta],
            obstacle: ObstaclePose {
                x: self.obstacle.x,
                y: self.obstacle.y,
                theta: self.obstacle.theta,
            },
            profile,
            avoidance: AvoidanceParams {
                safety_radius: self.avoidance.r,
                disturbance_bound: self.avoidance.m,
                c1: self.avoidance.c1,
                c2: self.avoidance.c2,
                eps1: self.avoidance.eps1,
                eps2: self.avoidance.eps2,
            },
            nominal: NominalParams {
                k1: self.nominal.k1,
                k2: self.nominal.k2,
                v_ref: self.nominal.v_ref,
                theta_ref: self.nominal.theta_ref,
            },
            horizon: self.run.horizon,
            dt: self.run.dt,
            mode: match self.run.filter_mode {
                FilterModeSection::Standard => FilterMode::Standard,
                FilterModeSection::Robust => FilterMode::Robust,
            },
        })
    }

    /// Serialize with every default resolved, for the emitted
    /// `resolved_scenario.toml` round-trip artifact.
    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serializes")
    }
}

/// Apply one `--set a.b.c=value` override onto the parsed TOML tree. The
/// value side is parsed as TOML, so strings need quotes only when they
/// aren't bare words.
fn apply_override(tree: &mut toml::Value, spec: &str) -> Result<(), ConfigError> {
    let err = |message: &str| ConfigError::BadOverride {
        spec: spec.to_string(),
        message: message.to_string(),
    };
    let (path, raw_value) = spec.split_once('=').ok_or_else(|| err("expected KEY=VALUE"))?;
    let path = path.trim();
    if path.is_empty() {
        return Err(err("empty key path"));
    }
    let value = parse_override_value(raw_value.trim());

    let mut node = tree;
    let segments: Vec<&str> = path.split('.').collect();
    for (i, seg) in segments.iter().enumerate() {
        if seg.is_empty() {
            return Err(err("empty path segment"));
        }
        let table = node
            .as_table_mut()
            .ok_or_else(|| err(&format!("`{}` is not a table", segments[..i].join("."))))?;
        if i + 1 == segments.len() {
            table.insert(seg.to_string(), value);
            return Ok(());
        }
        node = table
            .entry(seg.to_string())
            .or_insert_with(|| toml::Value::Table(Default::default()));
    }
    unreachable!("loop returns on the last segment");
}

/// Interpret the override value: TOML scalar if it parses as one, bare
/// string otherwise (so `filter_mode=robust` works without quotes).
fn parse_override_value(raw: &str) -> toml::Value {
    let wrapped = format!("v = {raw}");
    if let Ok(toml::Value::Table(mut t)) = toml::from_str::<toml::Value>(&wrapped) {
        if let Some(v) = t.remove("v") {
            return v;
        }
    }
    toml::Value::String(raw.to_string())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bundled_scenarios_parse_and_validate() {
        for (name, _) in BUILTIN_SCENARIOS {
            let config = ScenarioConfig::load(name, &[]).unwrap();
            let scenario = config.to_scenario().unwrap();
            assert_eq!(scenario.avoidance.safety_radius, 2.0);
            assert_eq!(scenario.avoidance.c1, 3.0);
            assert_eq!(scenario.dt, 1e-3);
            assert_eq!(scenario.horizon, 10.0);
        }
    }

    #[test]
    fn bundled_modes_differ_only_in_filter_mode() {
        let robust = ScenarioConfig::load("paper_robust", &[])
            .unwrap()
            .to_scenario()
            .unwrap();
        let standard = ScenarioConfig::load("paper_standard", &[])
            .unwrap()
            .to_scenario()
            .unwrap();
        assert_eq!(robust.mode, FilterMode::Robust);
        assert_eq!(standard.mode, FilterMode::Standard);
        let mut aligned = standard.clone();
        aligned.mode = FilterMode::Robust;
        assert_eq!(robust, aligned);
    }

    #[test]
    fn missing_required_field_names_the_path() {
        let text = "[obstacle]\nx = 2.0\ny = -3.0\n[run]\nhorizon = 10.0\nfilter_mode = \"robust\"\n";
        let err = ScenarioConfig::parse("t", text, &[]).unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("avoidance"), "message was: {msg}");
    }

    #[test]
    fn unknown_keys_are_rejected() {
        let (_, text) = BUILTIN_SCENARIOS[0];
        let doctored = format!("{text}\n[extra]\nanswer = 42\n");
        let err = ScenarioConfig::parse("t", &doctored, &[]).unwrap_err();
        assert!(err.to_string().contains("extra"));
    }

    #[test]
    fn overrides_apply_before_validation() {
        let config =
            ScenarioConfig::load("paper_robust", &["avoidance.m=0.5".into()]).unwrap();
        assert_eq!(config.avoidance.m, 0.5);

        // Bad value is caught by the same validation as file contents.
        let err = ScenarioConfig::load("paper_robust", &["avoidance.r=-1".into()]).unwrap_err();
        assert!(matches!(err, ConfigError::Invalid { .. }));

        // Strings work bare and quoted.
        let a = ScenarioConfig::load("paper_robust", &["run.filter_mode=standard".into()])
            .unwrap();
        assert_eq!(a.run.filter_mode, FilterModeSection::Standard);
        let b =
            ScenarioConfig::load("paper_robust", &["run.filter_mode=\"standard\"".into()])
                .unwrap();
        assert_eq!(b.run.filter_mode, FilterModeSection::Standard);
    }

    #[test]
    fn bad_override_reports_spec() {
        let err = ScenarioConfig::load("paper_robust", &["no_equals_sign".into()]).unwrap_err();
        assert!(err.to_string().contains("no_equals_sign"));
    }

    #[test]
    fn resolved_config_round_trips() {
        let config = ScenarioConfig::load("paper_robust", &[]).unwrap();
        let emitted = config.to_toml();
        let reparsed = ScenarioConfig::parse("round-trip", &emitted, &[]).unwrap();
        assert_eq!(
            config.to_scenario().unwrap(),
            reparsed.to_scenario().unwrap()
        );
        assert_eq!(
            config.to_scenario().unwrap().canonical_hash(),
            reparsed.to_scenario().unwrap().canonical_hash()
        );
    }

    #[test]
    fn tabulated_profile_parses() {
        let text = r#"
[obstacle]
x = 2.0
y = -3.0
[obstacle.profile]
kind = "tabulated"
points = [[0.0, 1.0, 0.0], [1.0, 0.5, 2.0]]
[avoidance]
r = 2.0
m = 1.0
c1 = 3.0
c2 = 1.0
[run]
horizon = 1.0
filter_mode = "robust"
"#;
        let config = ScenarioConfig::parse("t", text, &[]).unwrap();
        let scenario = config.to_scenario().unwrap();
        assert!(matches!(
            scenario.profile,
            ObstacleProfile::Tabulated(_)
        ));
    }
}
