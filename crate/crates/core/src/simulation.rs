//! Scenario description, effective parameters and the coupled time loop.

use std::collections::BTreeMap;
use std::path::PathBuf;
use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{mpsc, Arc};

use serde::{Deserialize, Serialize};

use crate::heat::{assemble_heat_system, indicator_load, HeatCoefficients, HeatData, HeatSolver};
use crate::mesh::{
    build_region_mesh, tag_boundary, BoundaryTag, EdgeSelector, Point2, QuadMesh, Rect, Region, RegionSpec,
};
use crate::plate::{
    isometry_defect, max_penetration, nodal_isometry_defect, norm3, project_obstacle, sub3, FixMask,
    Obstacle, PlateField, PlateMaterial, PlateSolver, SolverKind, StepOutput, Vec3,
};
use crate::{output, Error, Result};

/// Thickness-averaged coefficients of one material region.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Material {
    /// Bending coefficient, MPa.
    pub mu_bar: f64,
    /// Expansion mismatch per unit thickness, 1/(mm·°C).
    pub alpha_bar: f64,
    /// κ̄/σ̄, mm²/s.
    pub diffusivity: f64,
}

/// Layer data in the units they are usually tabulated in.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RawMaterial {
    /// Thermal expansion, 1/°C.
    pub alpha: f64,
    /// Bilayer thickness, mm.
    pub thickness: f64,
    /// First Lamé parameter, MPa.
    pub lambda: f64,
    /// Shear modulus, MPa.
    pub mu: f64,
    /// Thermal conductivity, W/(m·°C).
    pub conductivity: f64,
    /// Volumetric heat capacity ρc_v, J/(m³·°C).
    pub heat_capacity: f64,
    /// Heat transfer coefficient, W/(mm²·°C).
    pub heat_transfer: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct EffectiveParameters {
    pub material: Material,
    /// η̄/σ̄, mm/s.
    pub robin_velocity: f64,
}

pub fn effective_parameters(raw: &RawMaterial) -> Result<EffectiveParameters> {
    let RawMaterial {
        alpha,
        thickness,
        lambda,
        mu,
        conductivity,
        heat_capacity,
        heat_transfer,
    } = *raw;
    if !(thickness > 0.0) {
        return Err(Error::NonPositive {
            name: "thickness",
            value: thickness,
        });
    }
    if !(2.0 * mu + lambda > 0.0) {
        return Err(Error::NonPositive {
            name: "2 mu + lambda",
            value: 2.0 * mu + lambda,
        });
    }
    if !(heat_capacity > 0.0) {
        return Err(Error::NonPositive {
            name: "heat_capacity",
            value: heat_capacity,
        });
    }
    Ok(EffectiveParameters {
        material: Material {
            mu_bar: mu + lambda * mu / (2.0 * mu + lambda),
            alpha_bar: 3.0 * alpha / thickness,
            // m²/s -> mm²/s
            diffusivity: conductivity / heat_capacity * 1e6,
        },
        // W/(mm²·°C) = 1e6 W/(m²·°C); m/s -> mm/s
        robin_velocity: heat_transfer * 1e9 / heat_capacity,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeshRecipe {
    /// Bounding rectangle; cells outside every region are dropped.
    pub domain: Rect,
    /// Target spacing is `reference_length / 2^refinements` on both axes.
    pub reference_length: f64,
    pub refinements: u32,
    pub regions: Vec<Region>,
}

impl MeshRecipe {
    pub fn spacing(&self) -> f64 {
        self.reference_length / (1u64 << self.refinements.min(62)) as f64
    }

    pub fn build(&self) -> Result<QuadMesh> {
        if self.refinements > 12 {
            return Err(Error::InvalidInput(format!(
                "refinement level {} is too large",
                self.refinements
            )));
        }
        let h = self.spacing();
        build_region_mesh(
            self.domain,
            &RegionSpec {
                regions: self.regions.clone(),
            },
            [h, h],
        )
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BoundaryConfig {
    pub dirichlet: Option<EdgeSelector>,
    /// Final Dirichlet temperature, °C.
    pub theta_dirichlet: f64,
    /// Linear ramp time of the Dirichlet data, s; 0 applies it at once.
    pub ramp: f64,
    pub robin: Option<EdgeSelector>,
    /// Ambient temperature, °C.
    pub theta_ext: f64,
    /// η̄/σ̄, mm/s.
    pub robin_velocity: f64,
}

impl Default for BoundaryConfig {
    fn default() -> Self {
        BoundaryConfig {
            dirichlet: None,
            theta_dirichlet: 0.0,
            ramp: 0.0,
            robin: None,
            theta_ext: 0.0,
            robin_velocity: 0.0,
        }
    }
}

impl BoundaryConfig {
    pub fn dirichlet_at(&self, t: f64) -> f64 {
        if self.ramp > 0.0 {
            self.theta_dirichlet * (t / self.ramp).min(1.0)
        } else {
            self.theta_dirichlet
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "shape", rename_all = "snake_case")]
pub enum SourceShape {
    Disk { center: Point2, radius: f64 },
    Rect { rect: Rect },
}

impl SourceShape {
    pub fn contains(&self, p: Point2) -> bool {
        match self {
            SourceShape::Disk { center, radius } => {
                let (dx, dy) = (p[0] - center[0], p[1] - center[1]);
                dx * dx + dy * dy <= radius * radius
            }
            SourceShape::Rect { rect } => rect.contains(p),
        }
    }
}

/// Volumetric heating `rate` (°C/s, already divided by σ̄) on the elements
/// whose centroid lies in `shape`, active while `t ≤ until`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct HeatSource {
    pub name: String,
    pub shape: SourceShape,
    pub rate: f64,
    pub until: Option<f64>,
}

impl HeatSource {
    fn active(&self, t: f64, tau: f64) -> bool {
        self.until.is_none_or(|u| t <= u + 1e-9 * tau)
    }
}

/// Mechanical boundary data. Clamped nodes keep value and gradient; the
/// element containing `fix_element_at` keeps its vertex positions.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SupportConfig {
    pub clamp: Option<EdgeSelector>,
    pub clamp_regions: Vec<String>,
    pub fix_element_at: Option<Point2>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TimeConfig {
    pub tau: f64,
    pub t_max: f64,
    pub stationary_tol: f64,
    /// Stationarity is only tested from this time on.
    pub stationary_after: f64,
    pub stop_at_stationary: bool,
    /// Scales entering the τ–ε consistency warning.
    pub characteristic_time: f64,
    pub characteristic_length: f64,
}

impl Default for TimeConfig {
    fn default() -> Self {
        TimeConfig {
            tau: 1e-2,
            t_max: 1.0,
            stationary_tol: 1e-5,
            stationary_after: 0.0,
            stop_at_stationary: false,
            characteristic_time: 1.0,
            characteristic_length: 1.0,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PenaltyConfig {
    pub epsilon: f64,
    /// Extra re-solves of the plate step with a re-projected split variable.
    pub subiterations: u32,
    pub solver: SolverKind,
}

impl Default for PenaltyConfig {
    fn default() -> Self {
        PenaltyConfig {
            epsilon: 4e-6,
            subiterations: 0,
            solver: SolverKind::NullSpace,
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct OutputConfig {
    /// Snapshot cadence in steps; `None` means `⌈t_max/τ/50⌉`.
    pub snapshot_every: Option<usize>,
    /// Extra snapshot times, s.
    pub snapshot_times: Vec<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub name: String,
    pub mesh: MeshRecipe,
    pub materials: BTreeMap<String, Material>,
    pub boundary: BoundaryConfig,
    pub sources: Vec<HeatSource>,
    pub support: SupportConfig,
    pub obstacle: Obstacle,
    pub time: TimeConfig,
    pub penalty: PenaltyConfig,
    pub output: OutputConfig,
}

/// A validation problem: `[section].key` and a message.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Issue {
    pub key: String,
    pub message: String,
}

fn issue(key: &str, message: impl Into<String>) -> Issue {
    Issue {
        key: key.to_string(),
        message: message.into(),
    }
}

impl ScenarioConfig {
    pub fn num_steps(&self) -> usize {
        if self.time.t_max <= 0.0 {
            0
        } else {
            (self.time.t_max / self.time.tau - 1e-9).ceil() as usize
        }
    }

    pub fn snapshot_every(&self) -> usize {
        self.output
            .snapshot_every
            .unwrap_or_else(|| self.num_steps().div_ceil(50))
            .max(1)
    }

    /// Value checks that do not need the mesh.
    pub fn issues(&self) -> Vec<Issue> {
        let mut out = Vec::new();
        let pos = |v: f64| v > 0.0 && v.is_finite();
        let nonneg = |v: f64| v >= 0.0 && v.is_finite();
        if !pos(self.time.tau) {
            out.push(issue(
                "[time].tau",
                format!("must be positive, got {}", self.time.tau),
            ));
        }
        if !nonneg(self.time.t_max) {
            out.push(issue(
                "[time].t_max",
                format!("must be non-negative, got {}", self.time.t_max),
            ));
        }
        if !pos(self.time.stationary_tol) {
            out.push(issue("[time].stationary_tol", "must be positive"));
        }
        if !nonneg(self.time.stationary_after) {
            out.push(issue("[time].stationary_after", "must be non-negative"));
        }
        if !pos(self.time.characteristic_time) {
            out.push(issue("[time].characteristic_time", "must be positive"));
        }
        if !pos(self.time.characteristic_length) {
            out.push(issue("[time].characteristic_length", "must be positive"));
        }
        if !pos(self.penalty.epsilon) {
            out.push(issue(
                "[penalty].epsilon",
                format!("must be positive, got {}", self.penalty.epsilon),
            ));
        }
        if !pos(self.mesh.reference_length) {
            out.push(issue("[mesh].reference_length", "must be positive"));
        }
        if self.mesh.refinements > 12 {
            out.push(issue("[mesh].refinements", "must be at most 12"));
        }
        if self.materials.is_empty() {
            out.push(issue("[material]", "no material section"));
        }
        for (name, m) in &self.materials {
            let key = |k: &str| format!("[material.{name}].{k}");
            if !pos(m.mu_bar) {
                out.push(issue(&key("mu_bar"), "must be positive"));
            }
            if !pos(m.diffusivity) {
                out.push(issue(&key("diffusivity"), "must be positive"));
            }
            if !m.alpha_bar.is_finite() {
                out.push(issue(&key("alpha_bar"), "must be finite"));
            }
        }
        let names: Vec<&str> = if self.mesh.regions.is_empty() {
            vec!["default"]
        } else {
            self.mesh.regions.iter().map(|r| r.name.as_str()).collect()
        };
        for n in &names {
            if !self.materials.contains_key(*n) {
                out.push(issue(&format!("[material.{n}]"), "region has no material"));
            }
        }
        for r in &self.support.clamp_regions {
            if !names.contains(&r.as_str()) {
                out.push(issue("[support].clamp_regions", format!("unknown region `{r}`")));
            }
        }
        if !nonneg(self.boundary.ramp) {
            out.push(issue("[boundary].ramp", "must be non-negative"));
        }
        if !nonneg(self.boundary.robin_velocity) {
            out.push(issue("[boundary].robin_velocity", "must be non-negative"));
        }
        if !self.boundary.theta_dirichlet.is_finite() || !self.boundary.theta_ext.is_finite() {
            out.push(issue("[boundary]", "temperatures must be finite"));
        }
        for s in &self.sources {
            if !s.rate.is_finite() {
                out.push(issue(&format!("[source.{}].rate", s.name), "must be finite"));
            }
            if let SourceShape::Disk { radius, .. } = s.shape {
                if !pos(radius) {
                    out.push(issue(&format!("[source.{}].radius", s.name), "must be positive"));
                }
            }
        }
        if let Err(e) = self.obstacle.validate() {
            out.push(issue("[obstacle]", e.to_string()));
        }
        if self.output.snapshot_every == Some(0) {
            out.push(issue("[output].snapshot_every", "must be positive"));
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        let issues = self.issues();
        if issues.is_empty() {
            Ok(())
        } else {
            Err(Error::Config(
                issues
                    .into_iter()
                    .map(|i| crate::config::ConfigError {
                        line: 0,
                        key: i.key,
                        message: i.message,
                    })
                    .collect(),
            ))
        }
    }

    pub fn min_mu_bar(&self) -> f64 {
        self.materials
            .values()
            .map(|m| m.mu_bar)
            .fold(f64::INFINITY, f64::min)
    }

    /// Warning text when `τ² > 0.01·T²μ₀ε/ℓ⁴` with μ₀ the smallest bending
    /// coefficient.
    pub fn tau_epsilon_warning(&self) -> Option<String> {
        let t = &self.time;
        let bound = t.characteristic_time.powi(2) * self.min_mu_bar() * self.penalty.epsilon
            / t.characteristic_length.powi(4);
        let tau2 = t.tau * t.tau;
        (tau2 > 0.01 * bound).then(|| {
            format!(
                "time step too large for the penalty: tau^2 = {tau2:e} s^2 exceeds 0.01 T^2 mu0 eps / l^4 = {:e} s^2",
                0.01 * bound
            )
        })
    }
}

/// Everything derived from a config before time stepping: mesh with boundary
/// tags, per-element coefficients, DOF masks and source loads.
pub struct Model {
    pub config: ScenarioConfig,
    pub mesh: Arc<QuadMesh>,
    pub mu_bar: Vec<f64>,
    pub alpha_bar: Vec<f64>,
    pub diffusivity: Vec<f64>,
    pub fix: Vec<FixMask>,
    /// Unit-rate loads of the configured sources.
    pub source_loads: Vec<Vec<f64>>,
    pub warnings: Vec<String>,
}

impl Model {
    pub fn build(config: &ScenarioConfig) -> Result<Model> {
        config.validate()?;
        let mut warnings = Vec::new();
        let mesh = config.mesh.build()?;
        let mut predicates = Vec::new();
        if let Some(sel) = &config.boundary.dirichlet {
            predicates.push((BoundaryTag::Dirichlet, sel.clone()));
        }
        if let Some(sel) = &config.boundary.robin {
            predicates.push((BoundaryTag::Robin, sel.clone()));
        }
        let (mesh, tag_warnings) = tag_boundary(mesh, &predicates);
        warnings.extend(tag_warnings);

        let ne = mesh.num_elements();
        let (mut mu_bar, mut alpha_bar, mut diffusivity) = (
            Vec::with_capacity(ne),
            Vec::with_capacity(ne),
            Vec::with_capacity(ne),
        );
        for e in 0..ne {
            let name = mesh.element_region_name(e);
            let m = config
                .materials
                .get(name)
                .ok_or_else(|| Error::MissingMaterial(name.to_string()))?;
            mu_bar.push(m.mu_bar);
            alpha_bar.push(m.alpha_bar);
            diffusivity.push(m.diffusivity);
        }
        for name in config.materials.keys() {
            if mesh.region_id(name).is_none() {
                warnings.push(format!("material `{name}` is not used by any region"));
            }
        }

        let mut fix = vec![FixMask::Free; mesh.num_nodes()];
        if let Some(sel) = &config.support.clamp {
            let edges: Vec<usize> = mesh.boundary_edges().filter(|&e| sel.matches(&mesh, e)).collect();
            if edges.is_empty() {
                warnings.push("clamp selector matches no boundary edge".into());
            }
            for n in mesh.nodes_on_edges(edges) {
                fix[n] = FixMask::All;
            }
        }
        for r in &config.support.clamp_regions {
            let id = mesh
                .region_id(r)
                .ok_or_else(|| Error::InvalidInput(format!("unknown region `{r}`")))?;
            for n in mesh.nodes_in_region(id) {
                fix[n] = FixMask::All;
            }
        }
        if let Some(p) = config.support.fix_element_at {
            let e = mesh
                .locate(p)
                .ok_or_else(|| Error::InvalidInput(format!("no element contains the fixed point {p:?}")))?;
            for &n in &mesh.elements()[e] {
                if fix[n] == FixMask::Free {
                    fix[n] = FixMask::ValuesOnly;
                }
            }
        }
        if fix.iter().all(|f| *f == FixMask::Free) {
            warnings.push("no mechanical support: rigid motions are controlled by the penalty only".into());
        }

        let source_loads = config
            .sources
            .iter()
            .map(|s| indicator_load(&mesh, |p| s.shape.contains(p), 1.0))
            .collect::<Vec<_>>();
        for (s, load) in config.sources.iter().zip(&source_loads) {
            if load.iter().all(|v| *v == 0.0) {
                warnings.push(format!("source `{}` covers no element centroid", s.name));
            }
        }
        if let Some(w) = config.tau_epsilon_warning() {
            warnings.push(w);
        }
        Ok(Model {
            config: config.clone(),
            mesh: Arc::new(mesh),
            mu_bar,
            alpha_bar,
            diffusivity,
            fix,
            source_loads,
            warnings,
        })
    }

    fn source_load(&self, t: f64) -> Vec<f64> {
        let tau = self.config.time.tau;
        let mut f = Vec::new();
        for (s, load) in self.config.sources.iter().zip(&self.source_loads) {
            if s.active(t, tau) && s.rate != 0.0 {
                if f.is_empty() {
                    f = vec![0.0; load.len()];
                }
                for (dst, l) in f.iter_mut().zip(load) {
                    *dst += s.rate * l;
                }
            }
        }
        f
    }

    fn active_sources(&self, t: f64) -> Vec<bool> {
        let tau = self.config.time.tau;
        self.config.sources.iter().map(|s| s.active(t, tau)).collect()
    }
}

/// One row of the per-step record.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiagnosticsRow {
    pub step: usize,
    pub time: f64,
    pub energy: f64,
    pub functional: f64,
    pub defect: f64,
    pub penetration: f64,
    pub stationarity: f64,
    pub theta_min: f64,
    pub theta_max: f64,
}

/// Descent and constraint data of one plate solve.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct StepCheck {
    pub step: usize,
    pub functional_before: f64,
    pub functional_after: f64,
    pub constraint_residual: f64,
    pub velocity_norm: f64,
    pub degenerate_nodes: usize,
    pub descent_ok: bool,
    pub constraint_ok: bool,
}

impl StepCheck {
    fn from_output(step: usize, out: &StepOutput) -> Self {
        StepCheck {
            step,
            functional_before: out.functional_before,
            functional_after: out.functional_after,
            constraint_residual: out.constraint_residual,
            velocity_norm: out.velocity_norm,
            degenerate_nodes: out.degenerate_nodes,
            descent_ok: out.descent_ok(),
            constraint_ok: out.constraint_ok(),
        }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct Diagnostics {
    pub rows: Vec<DiagnosticsRow>,
    pub checks: Vec<StepCheck>,
}

impl Diagnostics {
    pub fn push(&mut self, row: DiagnosticsRow) {
        debug_assert!(self.rows.last().is_none_or(|r| r.time < row.time));
        self.rows.push(row);
    }

    pub fn descent_failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.descent_ok).count()
    }

    pub fn constraint_failures(&self) -> usize {
        self.checks.iter().filter(|c| !c.constraint_ok).count()
    }

    /// Largest `‖Bv‖∞ / (1 + ‖v‖∞)` over all solves.
    pub fn worst_constraint_ratio(&self) -> f64 {
        self.checks
            .iter()
            .map(|c| c.constraint_residual / (1.0 + c.velocity_norm))
            .fold(0.0, f64::max)
    }
}

/// Immutable nodal fields at one time level.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Snapshot {
    pub step: usize,
    pub time: f64,
    pub positions: Vec<Vec3>,
    pub theta: Vec<f64>,
    pub defect: Vec<f64>,
    /// `|s - y|` per node.
    pub gap: Vec<f64>,
}

impl Snapshot {
    fn capture(step: usize, time: f64, y: &PlateField, s: &[Vec3], theta: &[f64]) -> Self {
        let positions = y.positions();
        let gap = positions
            .iter()
            .zip(s)
            .map(|(p, q)| norm3(sub3(*q, *p)))
            .collect();
        Snapshot {
            step,
            time,
            defect: (0..y.num_nodes()).map(|i| nodal_isometry_defect(y, i)).collect(),
            positions,
            theta: theta.to_vec(),
            gap,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitState {
    pub y: PlateField,
    pub s: Vec<Vec3>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Progress {
    pub step: usize,
    pub total_steps: usize,
    pub time: f64,
    pub energy: f64,
    pub stationarity: f64,
}

pub type ProgressFn = Box<dyn FnMut(&Progress) + Send>;

/// Per-run switches that are not part of the physical scenario.
#[derive(Default)]
pub struct RunOptions {
    /// Write snapshots and `diagnostics.csv` here.
    pub out_dir: Option<PathBuf>,
    /// Skip the plate step; the heat trajectory is unaffected.
    pub heat_only: bool,
    /// Keep every snapshot in the result (they are always written when
    /// `out_dir` is set).
    pub keep_snapshots: bool,
    pub cancel: Option<Arc<AtomicBool>>,
    pub progress: Option<ProgressFn>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub state: SplitState,
    pub theta: Vec<f64>,
    pub time: f64,
    pub steps: usize,
    pub stationary_at: Option<usize>,
    pub diagnostics: Diagnostics,
    pub snapshots: Vec<Snapshot>,
    pub warnings: Vec<String>,
}

/// The coupled stepper: heat step, then plate step, with shared state.
pub struct Simulation {
    model: Model,
    heat: HeatSolver,
    plate: PlateSolver,
    state: SplitState,
    theta: Vec<f64>,
    step: usize,
    load: Vec<f64>,
    load_active: Vec<bool>,
}

impl Simulation {
    pub fn new(config: &ScenarioConfig) -> Result<Self> {
        Self::from_model(Model::build(config)?)
    }

    pub fn from_model(model: Model) -> Result<Self> {
        let config = &model.config;
        let mesh = model.mesh.clone();
        let system = assemble_heat_system(
            &mesh,
            &HeatCoefficients {
                diffusivity: model.diffusivity.clone(),
                robin_velocity: config.boundary.robin_velocity,
            },
        )?;
        let heat = HeatSolver::new(system, config.time.tau)?;
        let plate = PlateSolver::new(
            mesh.clone(),
            &PlateMaterial {
                mu_bar: model.mu_bar.clone(),
                alpha_bar: model.alpha_bar.clone(),
            },
            model.fix.clone(),
            config.penalty.epsilon,
            config.penalty.solver,
        )?;
        let y = PlateField::flat(&mesh);
        for i in 0..y.num_nodes() {
            let p = y.position(i);
            if config.obstacle.penetration(p) > 0.0 {
                return Err(Error::ObstacleViolated { node: i, position: p });
            }
        }
        let s = project_obstacle(&y, &config.obstacle);
        Ok(Simulation {
            heat,
            plate,
            state: SplitState { y, s },
            theta: vec![0.0; mesh.num_nodes()],
            step: 0,
            load: Vec::new(),
            load_active: vec![false; config.sources.len()],
            model,
        })
    }

    pub fn model(&self) -> &Model {
        &self.model
    }

    pub fn config(&self) -> &ScenarioConfig {
        &self.model.config
    }

    pub fn mesh(&self) -> &Arc<QuadMesh> {
        &self.model.mesh
    }

    pub fn plate(&self) -> &PlateSolver {
        &self.plate
    }

    pub fn state(&self) -> &SplitState {
        &self.state
    }

    pub fn theta(&self) -> &[f64] {
        &self.theta
    }

    pub fn step_index(&self) -> usize {
        self.step
    }

    pub fn time(&self) -> f64 {
        self.step as f64 * self.model.config.time.tau
    }

    pub fn snapshot(&self) -> Snapshot {
        Snapshot::capture(self.step, self.time(), &self.state.y, &self.state.s, &self.theta)
    }

    /// Advances one time level and returns its diagnostics row and, unless
    /// `heat_only`, the checks of every plate solve in it.
    pub fn advance(&mut self, heat_only: bool) -> Result<(DiagnosticsRow, Vec<StepCheck>)> {
        let k = self.step + 1;
        self.advance_inner(heat_only).map_err(|e| e.at_step(k))
    }

    fn advance_inner(&mut self, heat_only: bool) -> Result<(DiagnosticsRow, Vec<StepCheck>)> {
        let cfg = &self.model.config;
        let tau = cfg.time.tau;
        let k = self.step + 1;
        let t = k as f64 * tau;
        let active = self.model.active_sources(t);
        if active != self.load_active {
            self.load = self.model.source_load(t);
            self.load_active = active;
        }
        let data = HeatData {
            theta_dirichlet: cfg.boundary.dirichlet_at(t),
            theta_ext: cfg.boundary.theta_ext,
            source: &self.load,
        };
        let theta_next = self.heat.step(&self.theta, &data)?;
        let mut checks = Vec::new();
        let (next, functional) = if heat_only {
            let f = self
                .plate
                .functional(&self.state.y, &self.state.y, &self.state.s, &theta_next);
            (self.state.clone(), f)
        } else {
            let y = &self.state.y;
            let mut out = self
                .plate
                .step(y, &self.state.s, &theta_next, tau, &cfg.obstacle)?;
            checks.push(StepCheck::from_output(k, &out));
            for _ in 0..cfg.penalty.subiterations {
                let s_m = out.s.clone();
                out = self.plate.step(y, &s_m, &theta_next, tau, &cfg.obstacle)?;
                checks.push(StepCheck::from_output(k, &out));
            }
            for c in &checks {
                if !c.descent_ok {
                    log::warn!(
                        "step {k}: functional increased from {} to {}",
                        c.functional_before,
                        c.functional_after
                    );
                }
                if !c.constraint_ok {
                    log::warn!("step {k}: constraint residual {:e}", c.constraint_residual);
                }
            }
            let f = out.functional_after;
            (SplitState { y: out.y, s: out.s }, f)
        };
        if !next.y.is_finite() {
            return Err(Error::Solver("non-finite deformation".into()));
        }
        let diff: Vec<f64> = next
            .y
            .dofs()
            .iter()
            .zip(self.state.y.dofs())
            .map(|(a, b)| a - b)
            .collect();
        let stationarity = self.plate.stationarity_norm(&diff);
        let row = DiagnosticsRow {
            step: k,
            time: t,
            energy: self.plate.bending_energy(&next.y, &theta_next),
            functional,
            defect: isometry_defect(&next.y),
            penetration: max_penetration(&next.y, &cfg.obstacle),
            stationarity,
            theta_min: theta_next.iter().copied().fold(f64::INFINITY, f64::min),
            theta_max: theta_next.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        };
        self.state = next;
        self.theta = theta_next;
        self.step = k;
        Ok((row, checks))
    }

    /// Runs to `t_max` or to stationarity.
    pub fn run(mut self, mut options: RunOptions) -> Result<RunResult> {
        let cfg = self.model.config.clone();
        let total = cfg.num_steps();
        let every = cfg.snapshot_every();
        let tau = cfg.time.tau;
        let wanted_step = |t: f64| (t / tau).round() as usize;
        let extra: Vec<usize> = cfg
            .output
            .snapshot_times
            .iter()
            .map(|&t| wanted_step(t))
            .collect();

        let writer = options
            .out_dir
            .clone()
            .map(|dir| SnapshotWriter::spawn(dir, self.mesh().clone()));
        let mut snapshots = Vec::new();
        let mut emit = |snap: Snapshot, keep: bool, writer: &Option<SnapshotWriter>| -> Result<()> {
            let snap = Arc::new(snap);
            if let Some(w) = writer {
                w.send(snap.clone())?;
            }
            if keep {
                snapshots.push(Arc::try_unwrap(snap).unwrap_or_else(|a| (*a).clone()));
            }
            Ok(())
        };
        let keep_all = options.keep_snapshots;
        let wants = |k: usize| k % every == 0 || extra.contains(&k);
        emit(self.snapshot(), keep_all || extra.contains(&0), &writer)?;

        let mut diagnostics = Diagnostics::default();
        let mut stationary_at = None;
        let mut last_emitted = 0;
        let mut outcome = Ok(());
        while self.step < total {
            if options.cancel.as_ref().is_some_and(|c| c.load(Ordering::Relaxed)) {
                outcome = Err(Error::Cancelled);
                break;
            }
            let (row, checks) = match self.advance(options.heat_only) {
                Ok(v) => v,
                Err(e) => {
                    outcome = Err(e);
                    break;
                }
            };
            diagnostics.push(row);
            diagnostics.checks.extend(checks);
            let k = self.step;
            let stationary = !options.heat_only
                && row.time >= cfg.time.stationary_after - 1e-9 * tau
                && row.stationarity <= cfg.time.stationary_tol;
            if stationary && stationary_at.is_none() {
                stationary_at = Some(k);
            }
            let done = k == total || (stationary && cfg.time.stop_at_stationary);
            if wants(k) || done {
                emit(self.snapshot(), keep_all || extra.contains(&k) || done, &writer)?;
                last_emitted = k;
            }
            if let Some(p) = options.progress.as_mut() {
                p(&Progress {
                    step: k,
                    total_steps: total,
                    time: row.time,
                    energy: row.energy,
                    stationarity: row.stationarity,
                });
            }
            if done {
                break;
            }
        }
        if outcome.is_err() && last_emitted != self.step {
            emit(self.snapshot(), true, &writer)?;
        }
        if let Some(w) = writer {
            let dir = w.dir.clone();
            w.finish()?;
            output::write_diagnostics(&diagnostics, &dir.join("diagnostics.csv"))?;
        }
        outcome?;
        let time = self.time();
        Ok(RunResult {
            state: self.state,
            theta: self.theta,
            time,
            steps: self.step,
            stationary_at,
            diagnostics,
            snapshots,
            warnings: self.model.warnings,
        })
    }
}

/// Single background worker that writes snapshot files in order.
struct SnapshotWriter {
    dir: PathBuf,
    tx: Option<mpsc::Sender<Arc<Snapshot>>>,
    handle: Option<std::thread::JoinHandle<Result<()>>>,
}

impl SnapshotWriter {
    fn spawn(dir: PathBuf, mesh: Arc<QuadMesh>) -> Self {
        let (tx, rx) = mpsc::channel::<Arc<Snapshot>>();
        let worker_dir = dir.clone();
        let handle = std::thread::spawn(move || -> Result<()> {
            std::fs::create_dir_all(&worker_dir)?;
            for snap in rx {
                output::write_snapshot(&snap, &mesh, &worker_dir)?;
            }
            Ok(())
        });
        SnapshotWriter {
            dir,
            tx: Some(tx),
            handle: Some(handle),
        }
    }

    fn send(&self, snap: Arc<Snapshot>) -> Result<()> {
        if let Some(tx) = &self.tx {
            if tx.send(snap).is_err() {
                // The worker stopped early; its error surfaces in `finish`.
                return Ok(());
            }
        }
        Ok(())
    }

    fn finish(mut self) -> Result<()> {
        drop(self.tx.take());
        match self.handle.take().map(|h| h.join()) {
            Some(Ok(r)) => r,
            Some(Err(_)) => Err(Error::Io(std::io::Error::other("snapshot writer panicked"))),
            None => Ok(()),
        }
    }
}

pub fn run(config: &ScenarioConfig, options: RunOptions) -> Result<RunResult> {
    Simulation::new(config)?.run(options)
}

/// Nodes on the line `x2 = value`, sorted by `x1`, with their positions.
pub fn midline_cut(mesh: &QuadMesh, positions: &[Vec3], x2: f64) -> Vec<(f64, Vec3)> {
    let tol = 1e-9 * mesh.bounding_box().height().max(1.0);
    let mut out: Vec<(f64, Vec3)> = mesh
        .nodes()
        .iter()
        .enumerate()
        .filter(|(_, p)| (p[1] - x2).abs() <= tol)
        .map(|(i, p)| (p[0], positions[i]))
        .collect();
    out.sort_by(|a, b| a.0.total_cmp(&b.0));
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::Axis;

    fn strip_config() -> ScenarioConfig {
        let mut materials = BTreeMap::new();
        materials.insert(
            "default".to_string(),
            Material {
                mu_bar: 2000.0,
                alpha_bar: 0.1,
                diffusivity: 1.0,
            },
        );
        ScenarioConfig {
            name: "strip".into(),
            mesh: MeshRecipe {
                domain: Rect::new([0.0, 0.0], [1.0, 0.25]),
                reference_length: 1.0,
                refinements: 3,
                regions: vec![],
            },
            materials,
            boundary: BoundaryConfig::default(),
            sources: vec![],
            support: SupportConfig {
                clamp: Some(EdgeSelector::line(Axis::X1, 0.0)),
                ..Default::default()
            },
            obstacle: Obstacle::None,
            time: TimeConfig {
                tau: 0.01,
                t_max: 0.1,
                ..Default::default()
            },
            penalty: PenaltyConfig::default(),
            output: OutputConfig::default(),
        }
    }

    #[test]
    fn effective_parameters_of_the_reference_polymer() {
        let raw = RawMaterial {
            alpha: 0.5e-4,
            thickness: 1.5e-3,
            lambda: 1.5e3,
            mu: 1.5e3,
            conductivity: 0.1,
            heat_capacity: 1e6,
            heat_transfer: 2e-3,
        };
        let p = effective_parameters(&raw).unwrap();
        assert!((p.material.alpha_bar - 0.1).abs() < 1e-15);
        assert_eq!(p.material.mu_bar, 2000.0);
        assert!((p.material.diffusivity - 0.1).abs() < 1e-15);
        assert!((p.robin_velocity - 2.0).abs() < 1e-12);
        let p = effective_parameters(&RawMaterial { lambda: 0.0, ..raw }).unwrap();
        assert_eq!(p.material.mu_bar, 1500.0);
        let neg = effective_parameters(&RawMaterial {
            alpha: -0.5e-4,
            ..raw
        })
        .unwrap();
        assert!((neg.material.alpha_bar + 0.1).abs() < 1e-15);
        assert!(effective_parameters(&RawMaterial {
            thickness: 0.0,
            ..raw
        })
        .is_err());
        assert!(effective_parameters(&RawMaterial {
            lambda: -3000.0,
            ..raw
        })
        .is_err());
    }

    #[test]
    fn zero_data_keeps_the_plate_flat() {
        let mut cfg = strip_config();
        cfg.time.t_max = 0.1;
        let res = run(&cfg, RunOptions::default()).unwrap();
        assert_eq!(res.steps, 10);
        assert_eq!(res.diagnostics.rows.len(), 10);
        for r in &res.diagnostics.rows {
            assert!(r.energy.abs() < 1e-12, "{}", r.energy);
            assert!(r.defect < 1e-14);
            assert_eq!(r.theta_max, 0.0);
        }
        assert!(res.state.y.positions().iter().all(|p| p[2].abs() < 1e-14));
    }

    #[test]
    fn invalid_values_are_reported_together() {
        let mut cfg = strip_config();
        cfg.time.tau = -1.0;
        cfg.penalty.epsilon = 0.0;
        let keys: Vec<String> = cfg.issues().into_iter().map(|i| i.key).collect();
        assert!(keys.contains(&"[time].tau".to_string()));
        assert!(keys.contains(&"[penalty].epsilon".to_string()));
        assert!(matches!(Model::build(&cfg), Err(Error::Config(_))));
    }

    #[test]
    fn missing_material_is_rejected() {
        let mut cfg = strip_config();
        cfg.mesh.regions = vec![Region {
            name: "hinge".into(),
            rect: Rect::new([0.0, 0.0], [1.0, 0.25]),
        }];
        assert!(cfg.issues().iter().any(|i| i.key == "[material.hinge]"));
    }

    #[test]
    fn initial_obstacle_violation_is_rejected() {
        let mut cfg = strip_config();
        cfg.obstacle = Obstacle::HalfSpace { height: -0.1 };
        assert!(matches!(
            Simulation::new(&cfg),
            Err(Error::ObstacleViolated { .. })
        ));
    }

    #[test]
    fn tau_epsilon_warning_threshold() {
        let mut cfg = strip_config();
        cfg.time.characteristic_time = 10.0;
        cfg.time.characteristic_length = 2.0;
        cfg.time.tau = 3e-3;
        cfg.penalty.epsilon = 4e-6;
        assert!(cfg.tau_epsilon_warning().is_none());
        cfg.penalty.epsilon = 4e-9;
        assert!(cfg.tau_epsilon_warning().is_some());
    }

    #[test]
    fn snapshot_cadence_and_times() {
        let mut cfg = strip_config();
        cfg.time.t_max = 1.0;
        assert_eq!(cfg.num_steps(), 100);
        assert_eq!(cfg.snapshot_every(), 2);
        cfg.output.snapshot_every = Some(40);
        cfg.output.snapshot_times = vec![0.25];
        let res = run(
            &cfg,
            RunOptions {
                heat_only: true,
                ..Default::default()
            },
        )
        .unwrap();
        let steps: Vec<usize> = res.snapshots.iter().map(|s| s.step).collect();
        assert_eq!(steps, vec![25, 100]);
    }

    #[test]
    fn sources_switch_off() {
        let mut cfg = strip_config();
        cfg.sources.push(HeatSource {
            name: "all".into(),
            shape: SourceShape::Rect {
                rect: Rect::new([0.0, 0.0], [1.0, 0.25]),
            },
            rate: 10.0,
            until: Some(0.05),
        });
        let res = run(
            &cfg,
            RunOptions {
                heat_only: true,
                ..Default::default()
            },
        )
        .unwrap();
        // Insulated and uniformly heated: θ = rate·t while on, constant after.
        let rows = &res.diagnostics.rows;
        assert!((rows[4].theta_max - 0.5).abs() < 1e-12);
        assert!((rows[9].theta_min - 0.5).abs() < 1e-12);
    }

    #[test]
    fn cancellation_stops_the_run() {
        let cfg = strip_config();
        let flag = Arc::new(AtomicBool::new(true));
        let err = run(
            &cfg,
            RunOptions {
                cancel: Some(flag),
                ..Default::default()
            },
        )
        .unwrap_err();
        assert!(matches!(err, Error::Cancelled));
    }
}
