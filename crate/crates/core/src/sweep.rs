//! Penalty sweep on a scenario with a planar obstacle: one run per
//! `ε = 4·10⁻ʲ`, reporting the stationary cut along `x₂ = 0`.

use std::sync::atomic::AtomicBool;
use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::plate::{Obstacle, Vec3};
use crate::simulation::{midline_cut, run, ProgressFn, RunOptions, ScenarioConfig};
use crate::{Error, Result};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepOptions {
    pub j_min: i32,
    pub j_max: i32,
    /// One time step for every run; `None` keeps the scenario's.
    pub tau: Option<f64>,
    /// Position of the cut.
    pub x2: f64,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions {
            j_min: 5,
            j_max: 8,
            tau: None,
            x2: 0.0,
        }
    }
}

pub fn sweep_epsilon_value(j: i32) -> f64 {
    4.0 * 10f64.powi(-j)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepEntry {
    pub j: i32,
    pub epsilon: f64,
    pub tau: f64,
    pub steps: usize,
    pub stationary_at: Option<usize>,
    pub final_time: f64,
    /// Largest height of `y` above the obstacle plane over the whole run.
    pub max_penetration: f64,
    /// Height of the cut at its largest `x₁`.
    pub tip_height: f64,
    /// `(x₁, y₃)` along the cut at the final step.
    pub cut: Vec<[f64; 2]>,
    pub descent_failures: usize,
    pub constraint_failures: usize,
    pub warnings: Vec<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub scenario: String,
    pub mesh_width: f64,
    pub entries: Vec<SweepEntry>,
}

impl SweepReport {
    /// Tip heights ordered by decreasing `ε` are non-increasing.
    pub fn tips_monotone(&self) -> bool {
        let mut e: Vec<&SweepEntry> = self.entries.iter().collect();
        e.sort_by(|a, b| b.epsilon.total_cmp(&a.epsilon));
        e.windows(2).all(|w| w[0].tip_height >= w[1].tip_height)
    }
}

/// Runs `config` once per `j` with only `ε` (and optionally `τ`) changed.
/// `progress` receives the index of the run and its progress.
pub fn sweep_epsilon(
    config: &ScenarioConfig,
    options: &SweepOptions,
    cancel: Option<Arc<AtomicBool>>,
    mut progress: Option<Box<dyn FnMut(i32) -> Option<ProgressFn> + Send>>,
) -> Result<SweepReport> {
    if options.j_min > options.j_max {
        return Err(Error::InvalidInput(format!(
            "empty j range {}..{}",
            options.j_min, options.j_max
        )));
    }
    let Obstacle::HalfSpace { .. } = config.obstacle else {
        return Err(Error::InvalidInput(
            "the penalty sweep needs a half-space obstacle".into(),
        ));
    };
    let mesh = config.mesh.build()?;
    let flat: Vec<Vec3> = mesh.nodes().iter().map(|p| [p[0], p[1], 0.0]).collect();
    if midline_cut(&mesh, &flat, options.x2).is_empty() {
        return Err(Error::InvalidInput(format!(
            "no mesh line at x2 = {}",
            options.x2
        )));
    }
    let mut entries = Vec::new();
    for j in options.j_min..=options.j_max {
        let mut cfg = config.clone();
        cfg.penalty.epsilon = sweep_epsilon_value(j);
        if let Some(tau) = options.tau {
            cfg.time.tau = tau;
        }
        cfg.output.snapshot_times.clear();
        let res = run(
            &cfg,
            RunOptions {
                cancel: cancel.clone(),
                progress: progress.as_mut().and_then(|p| p(j)),
                ..Default::default()
            },
        )?;
        let positions = res.state.y.positions();
        let cut: Vec<[f64; 2]> = midline_cut(&mesh, &positions, options.x2)
            .into_iter()
            .map(|(x1, p)| [x1, p[2]])
            .collect();
        let d = &res.diagnostics;
        entries.push(SweepEntry {
            j,
            epsilon: cfg.penalty.epsilon,
            tau: cfg.time.tau,
            steps: res.steps,
            stationary_at: res.stationary_at,
            final_time: res.time,
            max_penetration: d.rows.iter().map(|r| r.penetration).fold(0.0, f64::max),
            tip_height: cut.last().map_or(f64::NAN, |p| p[1]),
            cut,
            descent_failures: d.descent_failures(),
            constraint_failures: d.constraint_failures(),
            warnings: res.warnings,
        });
    }
    Ok(SweepReport {
        scenario: config.name.clone(),
        mesh_width: config.mesh.spacing(),
        entries,
    })
}
