//! JSON request and response bodies shared by the HTTP service and its
//! client.

use serde::{Deserialize, Serialize};

use crate::config::ConfigError;
use crate::plate::Vec3;
use crate::scenarios::Scenario;
use crate::simulation::{Progress, RunResult, ScenarioConfig};
use crate::sweep::{SweepOptions, SweepReport};
use crate::verify::{CylinderOptions, HeatOptions, VerifyReport};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ErrorKind {
    Config,
    Solver,
    NotFound,
    Cancelled,
    Conflict,
    Internal,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ApiError {
    pub kind: ErrorKind,
    pub message: String,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub config_errors: Vec<ConfigError>,
}

impl ApiError {
    pub fn new(kind: ErrorKind, message: impl Into<String>) -> Self {
        ApiError {
            kind,
            message: message.into(),
            config_errors: Vec::new(),
        }
    }
}

impl From<&Error> for ApiError {
    fn from(e: &Error) -> Self {
        let kind = match e {
            Error::Cancelled => ErrorKind::Cancelled,
            Error::UnknownScenario(_) => ErrorKind::NotFound,
            e if e.is_config_error() => ErrorKind::Config,
            Error::Io(_) => ErrorKind::Internal,
            _ => ErrorKind::Solver,
        };
        let config_errors = match e {
            Error::Config(list) => list.clone(),
            _ => Vec::new(),
        };
        ApiError {
            kind,
            message: e.to_string(),
            config_errors,
        }
    }
}

impl std::fmt::Display for ApiError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.message)
    }
}

impl std::error::Error for ApiError {}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioList {
    pub scenarios: Vec<String>,
}

/// Either a builtin name or a full configuration, plus per-run overrides.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ScenarioSpec {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub scenario: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<ScenarioConfig>,
    /// Use the publication-scale refinement for a builtin scenario.
    #[serde(default)]
    pub paper_scale: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub refine: Option<u32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tau: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub epsilon: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub t_max: Option<f64>,
}

impl ScenarioSpec {
    pub fn builtin(name: &str) -> Self {
        ScenarioSpec {
            scenario: Some(name.to_string()),
            ..Default::default()
        }
    }

    pub fn from_config(config: ScenarioConfig) -> Self {
        ScenarioSpec {
            config: Some(config),
            ..Default::default()
        }
    }

    /// The configuration with overrides applied and validated.
    pub fn resolve(&self) -> Result<ScenarioConfig> {
        let mut cfg = match (&self.scenario, &self.config) {
            (Some(_), Some(_)) => {
                return Err(Error::InvalidInput(
                    "give either a scenario name or a configuration, not both".into(),
                ))
            }
            (None, None) => {
                return Err(Error::InvalidInput(
                    "a scenario name or a configuration is required".into(),
                ))
            }
            (Some(name), None) => {
                let s: Scenario = name.parse()?;
                if self.paper_scale {
                    s.paper_config()
                } else {
                    s.config()
                }
            }
            (None, Some(c)) => c.clone(),
        };
        if let Some(r) = self.refine {
            cfg.mesh.refinements = r;
        }
        if let Some(t) = self.tau {
            cfg.time.tau = t;
        }
        if let Some(e) = self.epsilon {
            cfg.penalty.epsilon = e;
        }
        if let Some(t) = self.t_max {
            cfg.time.t_max = t;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RunRequest {
    #[serde(flatten)]
    pub spec: ScenarioSpec,
    /// Directory on the service host for snapshots and diagnostics.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub out_dir: Option<String>,
    #[serde(default)]
    pub heat_only: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepRequest {
    #[serde(flatten)]
    pub spec: ScenarioSpec,
    #[serde(flatten)]
    pub options: SweepOptions,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct VerifyRequest {
    #[serde(default)]
    pub heat: HeatOptions,
    #[serde(default)]
    pub cylinder: CylinderOptions,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobKind {
    Run,
    Sweep,
    Verify,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum JobState {
    Running,
    Completed,
    Failed,
    Cancelled,
}

impl JobState {
    pub fn is_finished(self) -> bool {
        self != JobState::Running
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobCreated {
    pub id: u64,
    pub kind: JobKind,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct JobStatus {
    pub id: u64,
    pub kind: JobKind,
    pub state: JobState,
    /// Sweep runs report the current `j`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub sweep_j: Option<i32>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub progress: Option<Progress>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<ApiError>,
}

/// Final state of a run without the per-step tables.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunSummary {
    pub scenario: String,
    pub steps: usize,
    pub time: f64,
    pub stationary_at: Option<usize>,
    pub final_energy: Option<f64>,
    pub max_defect: f64,
    pub max_penetration: f64,
    pub descent_failures: usize,
    pub constraint_failures: usize,
    pub positions: Vec<Vec3>,
    pub theta: Vec<f64>,
    pub out_dir: Option<String>,
    pub warnings: Vec<String>,
}

impl RunSummary {
    pub fn from_result(scenario: &str, res: &RunResult, out_dir: Option<String>) -> Self {
        let d = &res.diagnostics;
        RunSummary {
            scenario: scenario.to_string(),
            steps: res.steps,
            time: res.time,
            stationary_at: res.stationary_at,
            final_energy: d.rows.last().map(|r| r.energy),
            max_defect: d.rows.iter().map(|r| r.defect).fold(0.0, f64::max),
            max_penetration: d.rows.iter().map(|r| r.penetration).fold(0.0, f64::max),
            descent_failures: d.descent_failures(),
            constraint_failures: d.constraint_failures(),
            positions: res.state.y.positions(),
            theta: res.theta.clone(),
            out_dir,
            warnings: res.warnings.clone(),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum JobOutput {
    Run(RunSummary),
    Sweep(SweepReport),
    Verify(VerifyReport),
}
