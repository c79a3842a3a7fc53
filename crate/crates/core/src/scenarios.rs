//! Built-in scenarios at desk-scale resolution.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::mesh::{Axis, EdgeSelector, LineSelector, Rect, Region};
use crate::plate::{Obstacle, SolverKind};
use crate::simulation::{
    BoundaryConfig, HeatSource, Material, MeshRecipe, OutputConfig, PenaltyConfig, ScenarioConfig,
    SourceShape, SupportConfig, TimeConfig,
};
use crate::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Scenario {
    Switch,
    DogearA,
    DogearB,
    Box,
    Airfoil,
    Capsule,
}

impl Scenario {
    pub const ALL: [Scenario; 6] = [
        Scenario::Switch,
        Scenario::DogearA,
        Scenario::DogearB,
        Scenario::Box,
        Scenario::Airfoil,
        Scenario::Capsule,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            Scenario::Switch => "switch",
            Scenario::DogearA => "dogear_a",
            Scenario::DogearB => "dogear_b",
            Scenario::Box => "box",
            Scenario::Airfoil => "airfoil",
            Scenario::Capsule => "capsule",
        }
    }

    /// Refinement level used for the published figures.
    pub fn paper_refinements(self) -> u32 {
        match self {
            Scenario::Switch | Scenario::DogearA | Scenario::DogearB | Scenario::Capsule => 6,
            Scenario::Box | Scenario::Airfoil => 4,
        }
    }

    pub fn desk_refinements(self) -> u32 {
        match self {
            Scenario::Switch | Scenario::DogearA | Scenario::DogearB => 5,
            Scenario::Box | Scenario::Airfoil => 3,
            Scenario::Capsule => 4,
        }
    }

    pub fn config(self) -> ScenarioConfig {
        match self {
            Scenario::Switch => switch(),
            Scenario::DogearA => dogear(0.1, "dogear_a"),
            Scenario::DogearB => dogear(1.0, "dogear_b"),
            Scenario::Box => self_assembling_box(),
            Scenario::Airfoil => airfoil(),
            Scenario::Capsule => capsule(),
        }
    }

    pub fn paper_config(self) -> ScenarioConfig {
        let mut c = self.config();
        c.mesh.refinements = self.paper_refinements();
        c
    }
}

impl fmt::Display for Scenario {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Scenario {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Scenario::ALL
            .into_iter()
            .find(|k| k.as_str() == s)
            .ok_or_else(|| Error::UnknownScenario(s.to_string()))
    }
}

pub fn builtin_scenario(name: &str) -> Result<ScenarioConfig> {
    Ok(name.parse::<Scenario>()?.config())
}

pub const BILAYER: Material = Material {
    mu_bar: 2000.0,
    alpha_bar: 0.1,
    diffusivity: 0.1,
};

fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Rect {
    Rect::new([x0, y0], [x1, y1])
}

fn region(name: &str, r: Rect) -> Region {
    Region {
        name: name.to_string(),
        rect: r,
    }
}

fn within(axis: Axis, value: f64, lo: f64, hi: f64) -> LineSelector {
    LineSelector {
        axis,
        value,
        range: Some([lo, hi]),
    }
}

/// Width of the switch hinge, mm.
pub const SWITCH_HINGE_WIDTH: f64 = PI / 40.0;
/// Width of the box and airfoil hinges, mm.
pub const FOLD_HINGE_WIDTH: f64 = PI / 48.0;

fn switch() -> ScenarioConfig {
    let x_h = -1.0 + SWITCH_HINGE_WIDTH;
    let mut materials = BTreeMap::new();
    materials.insert("hinge".to_string(), BILAYER);
    materials.insert(
        "plate".to_string(),
        Material {
            alpha_bar: 0.0,
            ..BILAYER
        },
    );
    ScenarioConfig {
        name: "switch".into(),
        mesh: MeshRecipe {
            domain: rect(-1.0, -1.0, 1.0, 1.0),
            reference_length: 2.0,
            refinements: Scenario::Switch.desk_refinements(),
            regions: vec![
                region("hinge", rect(-1.0, -1.0, x_h, 1.0)),
                region("plate", rect(x_h, -1.0, 1.0, 1.0)),
            ],
        },
        materials,
        boundary: BoundaryConfig {
            dirichlet: Some(EdgeSelector::line(Axis::X1, -1.0)),
            theta_dirichlet: 100.0,
            ramp: 5.0,
            ..Default::default()
        },
        sources: vec![],
        support: SupportConfig {
            clamp: Some(EdgeSelector::line(Axis::X1, -1.0)),
            ..Default::default()
        },
        obstacle: Obstacle::HalfSpace { height: 0.5 },
        time: TimeConfig {
            tau: 3e-3,
            t_max: 300.0,
            stationary_tol: 1e-5,
            stationary_after: 5.0,
            stop_at_stationary: true,
            characteristic_time: 10.0,
            characteristic_length: 2.0,
        },
        penalty: PenaltyConfig {
            epsilon: 4e-6,
            subiterations: 0,
            solver: SolverKind::NullSpace,
        },
        output: OutputConfig {
            snapshot_every: None,
            snapshot_times: vec![0.9, 2.1, 2.4, 4.8, 7.2],
        },
    }
}

fn dogear(diffusivity: f64, name: &str) -> ScenarioConfig {
    let mut materials = BTreeMap::new();
    materials.insert(
        "bilayer".to_string(),
        Material {
            diffusivity,
            ..BILAYER
        },
    );
    // Snapshot times t·κ̄/σ̄ for t = 1, 2.5, 16.
    let scale = diffusivity;
    ScenarioConfig {
        name: name.into(),
        mesh: MeshRecipe {
            domain: rect(-1.0, -1.0, 1.0, 1.0),
            reference_length: 2.0,
            refinements: Scenario::DogearA.desk_refinements(),
            regions: vec![region("bilayer", rect(-1.0, -1.0, 1.0, 1.0))],
        },
        materials,
        boundary: BoundaryConfig {
            robin: Some(EdgeSelector::Lines(vec![
                LineSelector {
                    axis: Axis::X1,
                    value: 1.0,
                    range: None,
                },
                LineSelector {
                    axis: Axis::X2,
                    value: -1.0,
                    range: None,
                },
                LineSelector {
                    axis: Axis::X2,
                    value: 1.0,
                    range: None,
                },
            ])),
            theta_ext: 50.0,
            robin_velocity: 2.0,
            ..Default::default()
        },
        sources: vec![],
        support: SupportConfig {
            clamp: Some(EdgeSelector::line(Axis::X1, -1.0)),
            ..Default::default()
        },
        obstacle: Obstacle::None,
        time: TimeConfig {
            tau: 5e-3,
            t_max: 16.0 * scale,
            stationary_tol: 1e-5,
            stationary_after: 0.0,
            stop_at_stationary: false,
            characteristic_time: 1.0,
            characteristic_length: 2.0,
        },
        penalty: PenaltyConfig {
            epsilon: 4e-5,
            subiterations: 0,
            solver: SolverKind::NullSpace,
        },
        output: OutputConfig {
            snapshot_every: None,
            snapshot_times: vec![1.0 * scale, 2.5 * scale, 16.0 * scale],
        },
    }
}

/// Hinge material shared by the box and the airfoil.
fn fold_hinge(alpha_bar: f64, diffusivity: f64) -> Material {
    Material {
        mu_bar: 2000.0,
        alpha_bar,
        diffusivity,
    }
}

fn rigid_plate(diffusivity: f64) -> Material {
    Material {
        mu_bar: 40000.0,
        alpha_bar: 0.0,
        diffusivity,
    }
}

/// Regions of the unfolded box: the central unit square, four side plates
/// behind hinges, and a lid behind the north plate.
pub fn box_regions() -> Vec<Region> {
    let w = FOLD_HINGE_WIDTH;
    vec![
        region("center", rect(0.0, 0.0, 1.0, 1.0)),
        region("hinge_e", rect(1.0, 0.0, 1.0 + w, 1.0)),
        region("plate_e", rect(1.0 + w, 0.0, 2.0 + w, 1.0)),
        region("hinge_w", rect(-w, 0.0, 0.0, 1.0)),
        region("plate_w", rect(-1.0 - w, 0.0, -w, 1.0)),
        region("hinge_s", rect(0.0, -w, 1.0, 0.0)),
        region("plate_s", rect(0.0, -1.0 - w, 1.0, -w)),
        region("hinge_n", rect(0.0, 1.0, 1.0, 1.0 + w)),
        region("plate_n", rect(0.0, 1.0 + w, 1.0, 2.0 + w)),
        region("hinge_lid", rect(0.0, 2.0 + w, 1.0, 2.0 + 2.0 * w)),
        region("lid", rect(0.0, 2.0 + 2.0 * w, 1.0, 3.0 + 2.0 * w)),
    ]
}

fn self_assembling_box() -> ScenarioConfig {
    let w = FOLD_HINGE_WIDTH;
    let diffusivity = 10.0;
    let regions = box_regions();
    let materials = regions
        .iter()
        .map(|r| {
            let m = if r.name.starts_with("hinge") {
                fold_hinge(0.3, diffusivity)
            } else {
                rigid_plate(diffusivity)
            };
            (r.name.clone(), m)
        })
        .collect();
    ScenarioConfig {
        name: "box".into(),
        mesh: MeshRecipe {
            domain: rect(-1.0 - w, -1.0 - w, 2.0 + w, 3.0 + 2.0 * w),
            reference_length: 1.0,
            refinements: Scenario::Box.desk_refinements(),
            regions,
        },
        materials,
        boundary: BoundaryConfig::default(),
        sources: vec![HeatSource {
            name: "heater".into(),
            shape: SourceShape::Disk {
                center: [0.5, 0.5],
                radius: 0.25,
            },
            rate: 75.0,
            until: Some(19.0),
        }],
        support: SupportConfig {
            clamp_regions: vec!["center".into()],
            ..Default::default()
        },
        obstacle: Obstacle::None,
        time: TimeConfig {
            tau: 0.5,
            t_max: 30.0,
            stationary_tol: 1e-5,
            stationary_after: 0.0,
            stop_at_stationary: false,
            characteristic_time: 10.0,
            characteristic_length: 1.0,
        },
        penalty: PenaltyConfig {
            epsilon: 1e-3,
            subiterations: 0,
            solver: SolverKind::NullSpace,
        },
        output: OutputConfig {
            snapshot_every: None,
            snapshot_times: vec![5.0, 10.0, 19.0, 25.0, 30.0],
        },
    }
}

/// Five unit plates in a row joined by four hinges; the middle plate is
/// `plate_2`. Hinge `i` joins plates `i` and `i + 1`.
pub fn airfoil_regions() -> Vec<Region> {
    let w = FOLD_HINGE_WIDTH;
    let mut out = Vec::new();
    let mut x = 0.0;
    for i in 0..5 {
        out.push(region(&format!("plate_{i}"), rect(x, 0.0, x + 1.0, 1.0)));
        x += 1.0;
        if i < 4 {
            out.push(region(&format!("hinge_{i}"), rect(x, 0.0, x + w, 1.0)));
            x += w;
        }
    }
    out
}

/// Fold directions of the airfoil hinges: the inner pair lifts the outer
/// plates, the outer pair turns the tips back down.
pub const AIRFOIL_HINGE_SIGNS: [f64; 4] = [-1.0, 1.0, 1.0, -1.0];

fn airfoil() -> ScenarioConfig {
    let w = FOLD_HINGE_WIDTH;
    let diffusivity = 0.1;
    let regions = airfoil_regions();
    let mut materials = BTreeMap::new();
    let mut dirichlet = Vec::new();
    for r in &regions {
        let m = match r.name.strip_prefix("hinge_") {
            Some(i) => {
                let i: usize = i.parse().expect("hinge index");
                dirichlet.push(within(Axis::X2, 0.0, r.rect.lower[0], r.rect.upper[0]));
                dirichlet.push(within(Axis::X2, 1.0, r.rect.lower[0], r.rect.upper[0]));
                fold_hinge(0.3 * AIRFOIL_HINGE_SIGNS[i], diffusivity)
            }
            None => rigid_plate(diffusivity),
        };
        materials.insert(r.name.clone(), m);
    }
    ScenarioConfig {
        name: "airfoil".into(),
        mesh: MeshRecipe {
            domain: rect(0.0, 0.0, 5.0 + 4.0 * w, 1.0),
            reference_length: 1.0,
            refinements: Scenario::Airfoil.desk_refinements(),
            regions,
        },
        materials,
        boundary: BoundaryConfig {
            dirichlet: Some(EdgeSelector::Lines(dirichlet)),
            theta_dirichlet: 60.0,
            ..Default::default()
        },
        sources: vec![],
        support: SupportConfig {
            clamp_regions: vec!["plate_2".into()],
            ..Default::default()
        },
        obstacle: Obstacle::None,
        time: TimeConfig {
            tau: 0.5,
            t_max: 500.0,
            stationary_tol: 1e-5,
            stationary_after: 0.0,
            stop_at_stationary: false,
            characteristic_time: 10.0,
            characteristic_length: 1.0,
        },
        penalty: PenaltyConfig {
            epsilon: 1e-3,
            subiterations: 0,
            solver: SolverKind::NullSpace,
        },
        output: OutputConfig {
            snapshot_every: None,
            snapshot_times: vec![2.5, 500.0],
        },
    }
}

/// Cross of five unit squares: the center and four petals.
pub fn capsule_regions() -> Vec<Region> {
    vec![
        region("center", rect(0.0, 0.0, 1.0, 1.0)),
        region("petal_e", rect(1.0, 0.0, 2.0, 1.0)),
        region("petal_w", rect(-1.0, 0.0, 0.0, 1.0)),
        region("petal_n", rect(0.0, 1.0, 1.0, 2.0)),
        region("petal_s", rect(0.0, -1.0, 1.0, 0.0)),
    ]
}

pub const CAPSULE_SPHERES: [[f64; 3]; 5] = [
    [0.28, 0.28, 0.25],
    [0.72, 0.28, 0.25],
    [0.28, 0.72, 0.25],
    [0.72, 0.72, 0.25],
    [0.5, 0.5, 0.5],
];

fn capsule() -> ScenarioConfig {
    let regions = capsule_regions();
    let materials = regions.iter().map(|r| (r.name.clone(), BILAYER)).collect();
    ScenarioConfig {
        name: "capsule".into(),
        mesh: MeshRecipe {
            domain: rect(-1.0, -1.0, 2.0, 2.0),
            reference_length: 1.0,
            refinements: Scenario::Capsule.desk_refinements(),
            regions,
        },
        materials,
        boundary: BoundaryConfig {
            robin: Some(EdgeSelector::All),
            theta_ext: 100.0,
            robin_velocity: 2.0,
            ..Default::default()
        },
        sources: vec![],
        support: SupportConfig {
            fix_element_at: Some([0.5, 0.5]),
            ..Default::default()
        },
        obstacle: Obstacle::SphereUnion {
            centers: CAPSULE_SPHERES.to_vec(),
            radius: 0.24,
        },
        time: TimeConfig {
            tau: 2.5e-4,
            t_max: 1.0,
            stationary_tol: 1e-5,
            stationary_after: 0.0,
            stop_at_stationary: false,
            characteristic_time: 1.0,
            characteristic_length: 1.0,
        },
        penalty: PenaltyConfig {
            epsilon: 5e-8,
            subiterations: 0,
            solver: SolverKind::NullSpace,
        },
        output: OutputConfig {
            snapshot_every: None,
            snapshot_times: vec![0.5, 1.0],
        },
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::BoundaryTag;
    use crate::plate::FixMask;
    use crate::simulation::Model;

    #[test]
    fn every_builtin_builds() {
        for s in Scenario::ALL {
            let cfg = s.config();
            assert_eq!(cfg.name, s.as_str());
            assert!(cfg.issues().is_empty(), "{s}: {:?}", cfg.issues());
            let model = Model::build(&cfg).unwrap_or_else(|e| panic!("{s}: {e}"));
            assert!(model.mesh.num_elements() > 0);
        }
        assert!(matches!(
            "nope".parse::<Scenario>(),
            Err(Error::UnknownScenario(_))
        ));
    }

    #[test]
    fn switch_layout() {
        let cfg = Scenario::Switch.config();
        assert_eq!(cfg.boundary.dirichlet_at(2.5), 50.0);
        assert_eq!(cfg.boundary.dirichlet_at(7.0), 100.0);
        assert_eq!(cfg.obstacle, Obstacle::HalfSpace { height: 0.5 });
        assert!(cfg.materials.values().all(|m| m.mu_bar == 2000.0));
        assert_eq!(cfg.materials["hinge"].alpha_bar, 0.1);
        assert_eq!(cfg.materials["plate"].alpha_bar, 0.0);
        let model = Model::build(&cfg).unwrap();
        let mesh = &model.mesh;
        let hinge = mesh.region_id("hinge").unwrap();
        let width: f64 = (0..mesh.num_elements())
            .filter(|&e| mesh.region_tags()[e] == hinge)
            .map(|e| mesh.element_area(e))
            .sum::<f64>()
            / 2.0;
        assert!((width - SWITCH_HINGE_WIDTH).abs() < 1e-12);
        for (i, p) in mesh.nodes().iter().enumerate() {
            assert_eq!(model.fix[i] == FixMask::All, p[0] == -1.0);
        }
        let dirichlet = mesh.edges_with_tag(BoundaryTag::Dirichlet).count();
        assert_eq!(dirichlet, 32);
        assert!(model.warnings.is_empty(), "{:?}", model.warnings);
    }

    #[test]
    fn box_layout() {
        let cfg = Scenario::Box.config();
        for (name, m) in &cfg.materials {
            if name.starts_with("hinge") {
                assert_eq!(m.mu_bar * 20.0, 40000.0);
            } else {
                assert_eq!(m.mu_bar, 40000.0);
                assert_eq!(m.alpha_bar, 0.0);
            }
            assert_eq!(m.diffusivity, 10.0);
        }
        let model = Model::build(&cfg).unwrap();
        let area = model.mesh.domain_area();
        assert!((area - (6.0 + 5.0 * FOLD_HINGE_WIDTH)).abs() < 1e-12);
        let center = model.mesh.region_id("center").unwrap();
        for n in model.mesh.nodes_in_region(center) {
            assert_eq!(model.fix[n], FixMask::All);
        }
    }

    #[test]
    fn capsule_fixes_one_element() {
        let model = Model::build(&Scenario::Capsule.config()).unwrap();
        let fixed = model.fix.iter().filter(|f| **f == FixMask::ValuesOnly).count();
        assert_eq!(fixed, 4);
        assert_eq!(model.fix.iter().filter(|f| **f == FixMask::All).count(), 0);
        assert!(model.mesh.edges_with_tag(BoundaryTag::Robin).count() > 0);
        assert_eq!(model.mesh.edges_with_tag(BoundaryTag::Insulated).count(), 0);
    }

    #[test]
    fn airfoil_heats_hinge_ends_only() {
        let model = Model::build(&Scenario::Airfoil.config()).unwrap();
        let mesh = &model.mesh;
        let hinge_ids: Vec<usize> = (0..4)
            .map(|i| mesh.region_id(&format!("hinge_{i}")).unwrap())
            .collect();
        for e in mesh.edges_with_tag(BoundaryTag::Dirichlet) {
            let el = mesh.edges()[e].elements[0];
            assert!(hinge_ids.contains(&mesh.region_tags()[el]));
        }
        assert!(mesh.edges_with_tag(BoundaryTag::Dirichlet).count() >= 8);
    }

    #[test]
    fn dogear_snapshot_times_scale_with_diffusivity() {
        let a = Scenario::DogearA.config();
        let b = Scenario::DogearB.config();
        for (ta, tb) in a.output.snapshot_times.iter().zip(&b.output.snapshot_times) {
            assert!((10.0 * ta - tb).abs() < 1e-12);
        }
        assert_eq!(a.materials["bilayer"].diffusivity, 0.1);
        assert_eq!(b.materials["bilayer"].diffusivity, 1.0);
    }
}
