//! Oracle checks: manufactured heat solution and the clamped cylinder.

use std::collections::BTreeMap;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::heat::{verify_manufactured, ConvergenceReport};
use crate::mesh::{Axis, EdgeSelector, Rect};
use crate::plate::{Obstacle, SolverKind};
use crate::simulation::{
    midline_cut, run, BoundaryConfig, Material, MeshRecipe, OutputConfig, PenaltyConfig, RunOptions,
    ScenarioConfig, SupportConfig, TimeConfig,
};
use crate::Result;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CylinderOptions {
    /// Target curvature ᾱθ, 1/mm.
    pub kappa: f64,
    pub length: f64,
    pub width: f64,
    /// Elements along the strip; the width gets `cells_x · width / length`.
    pub refinements: u32,
    pub tau: f64,
    pub epsilon: f64,
    pub t_max: f64,
    pub stationary_tol: f64,
}

impl Default for CylinderOptions {
    fn default() -> Self {
        CylinderOptions {
            kappa: 1.25,
            length: 2.0,
            width: 0.25,
            refinements: 6,
            tau: 0.01,
            epsilon: 1e-4,
            t_max: 200.0,
            stationary_tol: 1e-5,
        }
    }
}

/// Strip `(0, L) × (0, w)` clamped at `x₁ = 0`, held at the temperature
/// `κ/ᾱ` by Dirichlet data on the whole boundary after a 1 s ramp.
pub fn cylinder_config(o: &CylinderOptions) -> ScenarioConfig {
    let alpha_bar = 0.1;
    let mut materials = BTreeMap::new();
    materials.insert(
        "default".to_string(),
        Material {
            mu_bar: 2000.0,
            alpha_bar,
            diffusivity: 10.0,
        },
    );
    ScenarioConfig {
        name: "cylinder".into(),
        mesh: MeshRecipe {
            domain: Rect::new([0.0, 0.0], [o.length, o.width]),
            reference_length: o.length,
            refinements: o.refinements,
            regions: vec![],
        },
        materials,
        boundary: BoundaryConfig {
            dirichlet: Some(EdgeSelector::All),
            theta_dirichlet: o.kappa / alpha_bar,
            ramp: 1.0,
            ..Default::default()
        },
        sources: vec![],
        support: SupportConfig {
            clamp: Some(EdgeSelector::line(Axis::X1, 0.0)),
            ..Default::default()
        },
        obstacle: Obstacle::None,
        time: TimeConfig {
            tau: o.tau,
            t_max: o.t_max,
            stationary_tol: o.stationary_tol,
            stationary_after: 1.5,
            stop_at_stationary: true,
            characteristic_time: 1.0,
            characteristic_length: o.length,
        },
        penalty: PenaltyConfig {
            epsilon: o.epsilon,
            subiterations: 0,
            solver: SolverKind::NullSpace,
        },
        output: OutputConfig::default(),
    }
}

/// Algebraic least-squares circle through planar points; returns the
/// curvature `1/R`.
pub fn fit_curvature(points: &[[f64; 2]]) -> f64 {
    let n = points.len();
    let mut a = DMatrix::zeros(n, 3);
    let mut b = DVector::zeros(n);
    for (i, p) in points.iter().enumerate() {
        a[(i, 0)] = p[0];
        a[(i, 1)] = p[1];
        a[(i, 2)] = 1.0;
        b[i] = -(p[0] * p[0] + p[1] * p[1]);
    }
    let svd = a.svd(true, true);
    // Collinear points leave the system rank deficient: zero curvature.
    if svd.singular_values.min() <= 1e-10 * svd.singular_values.max() {
        return 0.0;
    }
    let Ok(sol) = svd.solve(&b, 0.0) else {
        return 0.0;
    };
    let (d, e, f) = (sol[0], sol[1], sol[2]);
    let r2 = 0.25 * (d * d + e * e) - f;
    if r2 > 0.0 {
        1.0 / r2.sqrt()
    } else {
        0.0
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CylinderReport {
    pub kappa_target: f64,
    pub kappa_fit: f64,
    pub relative_error: f64,
    /// Highest midline point and `(1 - cos κL)/κ`.
    pub max_z: f64,
    pub max_z_exact: f64,
    pub steps: usize,
    pub stationary_at: Option<usize>,
    pub max_defect: f64,
    pub descent_failures: usize,
    pub constraint_failures: usize,
    pub worst_constraint_ratio: f64,
    /// Functional values at the end of each step.
    pub functional: Vec<f64>,
}

pub fn verify_cylinder(o: &CylinderOptions) -> Result<CylinderReport> {
    let cfg = cylinder_config(o);
    let res = run(&cfg, RunOptions::default())?;
    let mesh = cfg.mesh.build()?;
    let positions = res.state.y.positions();
    let cut = midline_cut(&mesh, &positions, 0.5 * o.width);
    let pts: Vec<[f64; 2]> = cut.iter().map(|(_, p)| [p[0], p[2]]).collect();
    let kappa_fit = fit_curvature(&pts);
    let max_z = pts.iter().map(|p| p[1]).fold(f64::NEG_INFINITY, f64::max);
    let d = &res.diagnostics;
    Ok(CylinderReport {
        kappa_target: o.kappa,
        kappa_fit,
        relative_error: (kappa_fit - o.kappa).abs() / o.kappa,
        max_z,
        max_z_exact: (1.0 - (o.kappa * o.length).cos()) / o.kappa,
        steps: res.steps,
        stationary_at: res.stationary_at,
        max_defect: d.rows.iter().map(|r| r.defect).fold(0.0, f64::max),
        descent_failures: d.descent_failures(),
        constraint_failures: d.constraint_failures(),
        worst_constraint_ratio: d.worst_constraint_ratio(),
        functional: d.rows.iter().map(|r| r.functional).collect(),
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct HeatOptions {
    pub refinements: Vec<u32>,
    pub tau_over_h2: f64,
    pub t_end: f64,
    pub fine_refinement: u32,
    pub taus: Vec<f64>,
    pub temporal_t_end: f64,
}

impl Default for HeatOptions {
    fn default() -> Self {
        HeatOptions {
            refinements: vec![3, 4, 5, 6],
            tau_over_h2: 0.1,
            t_end: 0.1,
            fine_refinement: 7,
            taus: vec![0.1, 0.05, 0.025, 0.0125],
            temporal_t_end: 1.0,
        }
    }
}

pub fn verify_heat(o: &HeatOptions) -> Result<ConvergenceReport> {
    verify_manufactured(
        &o.refinements,
        o.tau_over_h2,
        o.t_end,
        o.fine_refinement,
        &o.taus,
        o.temporal_t_end,
    )
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct VerifyReport {
    pub heat: ConvergenceReport,
    pub cylinder: CylinderReport,
}

impl VerifyReport {
    pub fn heat_ok(&self) -> bool {
        self.heat.spatial_orders.last().is_some_and(|o| *o >= 1.9)
            && self.heat.temporal_orders.iter().all(|o| (o - 1.0).abs() <= 0.15)
    }

    pub fn cylinder_ok(&self) -> bool {
        self.cylinder.relative_error <= 0.05
    }
}
