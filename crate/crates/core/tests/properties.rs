use std::sync::Arc;

use proptest::prelude::*;

use bilayer_core::config::{parse_config_str, serialize_config};
use bilayer_core::dkq::{assemble_bending_matrix, scalar_dof};
use bilayer_core::heat::{assemble_heat_system, HeatCoefficients, HeatData, HeatSolver};
use bilayer_core::mesh::{build_rectangle_mesh, tag_boundary, BoundaryTag, EdgeSelector};
use bilayer_core::plate::{
    build_constraints, dot3, FixMask, Obstacle, PlateField, PlateMaterial, PlateSolver, SolverKind, Vec3,
};
use bilayer_core::scenarios::Scenario;
use bilayer_core::simulation::Simulation;

fn rotation(axis: Vec3, angle: f64) -> [[f64; 3]; 3] {
    let n = dot3(axis, axis).sqrt();
    let [x, y, z] = [axis[0] / n, axis[1] / n, axis[2] / n];
    let (s, c) = angle.sin_cos();
    let t = 1.0 - c;
    [
        [t * x * x + c, t * x * y - s * z, t * x * z + s * y],
        [t * x * y + s * z, t * y * y + c, t * y * z - s * x],
        [t * x * z - s * y, t * y * z + s * x, t * z * z + c],
    ]
}

fn apply(q: &[[f64; 3]; 3], p: Vec3, shift: Vec3) -> Vec3 {
    std::array::from_fn(|r| dot3(q[r], p) + shift[r])
}

fn axis() -> impl Strategy<Value = Vec3> {
    [-1.0..1.0f64, -1.0..1.0f64, -1.0..1.0f64].prop_filter("nonzero axis", |a| dot3(*a, *a) > 1e-2)
}

/// Strip `(0, 2) × (0, 1)` clamped at `x₁ = 0`.
fn strip_solver(alpha: f64, kind: SolverKind) -> PlateSolver {
    let mesh = Arc::new(build_rectangle_mesh([0.0, 0.0], [2.0, 1.0], 2).unwrap());
    let ne = mesh.num_elements();
    let fix = mesh
        .nodes()
        .iter()
        .map(|p| if p[0] == 0.0 { FixMask::All } else { FixMask::Free })
        .collect();
    let mat = PlateMaterial {
        mu_bar: vec![2.0; ne],
        alpha_bar: vec![alpha; ne],
    };
    PlateSolver::new(mesh, &mat, fix, 1e-3, kind).unwrap()
}

/// A bent state reached by a few steps from the flat strip.
fn bent_state(solver: &mut PlateSolver, theta: &[f64], steps: usize) -> PlateField {
    let mut y = PlateField::flat(solver.mesh());
    for _ in 0..steps {
        let s = y.positions();
        y = solver.step(&y, &s, theta, 0.05, &Obstacle::None).unwrap().y;
    }
    y
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(24))]

    #[test]
    fn refined_meshes_tile_the_rectangle(
        x0 in -5.0..5.0f64, y0 in -5.0..5.0f64,
        w in 0.1..4.0f64, h in 0.1..4.0f64,
        r in 0u32..5,
    ) {
        let mesh = build_rectangle_mesh([x0, y0], [x0 + w, y0 + h], r).unwrap();
        let area: f64 = (0..mesh.num_elements()).map(|e| mesh.element_area(e)).sum();
        prop_assert!((area - w * h).abs() <= 1e-12 * w * h);
        let boundary = mesh.boundary_edges().count();
        let interior = mesh.edges().len() - boundary;
        prop_assert_eq!(4 * mesh.num_elements(), 2 * interior + boundary);
        prop_assert!(mesh.validate().is_ok());
    }

    #[test]
    fn bending_matrix_is_exact_on_quadratics(
        a in -2.0..2.0f64, b in -2.0..2.0f64, c in -2.0..2.0f64,
        d in -1.0..1.0f64, e in -1.0..1.0f64,
        w in 0.5..3.0f64, h in 0.5..3.0f64, mu in 0.1..10.0f64,
        r in 0u32..4,
    ) {
        // w(x) = a x² + b x y + c y² + d x + e y
        let mesh = build_rectangle_mesh([-0.3, 0.2], [-0.3 + w, 0.2 + h], r).unwrap();
        let kb = assemble_bending_matrix(&mesh, &vec![mu; mesh.num_elements()]).unwrap();
        let mut x = vec![0.0; 3 * mesh.num_nodes()];
        for (i, p) in mesh.nodes().iter().enumerate() {
            let (px, py) = (p[0], p[1]);
            x[scalar_dof(i, 0)] = a * px * px + b * px * py + c * py * py + d * px + e * py;
            x[scalar_dof(i, 1)] = 2.0 * a * px + b * py + d;
            x[scalar_dof(i, 2)] = b * px + 2.0 * c * py + e;
        }
        let exact = mu * w * h * (4.0 * a * a + 2.0 * b * b + 4.0 * c * c);
        let got = kb.quadratic_form(&x);
        prop_assert!((got - exact).abs() <= 1e-10 * exact.max(1e-12), "{got} vs {exact}");
    }

    #[test]
    fn robin_heating_stays_nonnegative(
        theta_ext in 0.0..100.0f64,
        diffusivity in 0.01..10.0f64,
        velocity in 0.1..5.0f64,
        tau in 1e-4..0.5f64,
    ) {
        let mesh = build_rectangle_mesh([-1.0, -1.0], [1.0, 1.0], 3).unwrap();
        let (mesh, _) = tag_boundary(mesh, &[(BoundaryTag::Robin, EdgeSelector::All)]);
        let coeffs = HeatCoefficients {
            diffusivity: vec![diffusivity; mesh.num_elements()],
            robin_velocity: velocity,
        };
        let solver = HeatSolver::new(assemble_heat_system(&mesh, &coeffs).unwrap(), tau).unwrap();
        let data = HeatData { theta_dirichlet: 0.0, theta_ext, source: &[] };
        let mut theta = vec![0.0; mesh.num_nodes()];
        for _ in 0..20 {
            theta = solver.step(&theta, &data).unwrap();
            prop_assert!(theta.iter().all(|t| *t >= -1e-10));
        }
    }

    #[test]
    fn heat_is_invariant_under_diffusive_time_scaling(
        theta_ext in 1.0..100.0f64,
        scale in 2.0..20.0f64,
        tau in 1e-3..2e-2f64,
    ) {
        // Dividing diffusivity and Robin velocity by `scale` and stretching
        // the step by the same factor leaves the discrete trajectory fixed.
        let mut fast = Scenario::DogearB.config();
        fast.mesh.refinements = 3;
        fast.boundary.theta_ext = theta_ext;
        fast.time.tau = tau;
        fast.time.t_max = 20.0 * tau;
        let mut slow = fast.clone();
        for m in slow.materials.values_mut() {
            m.diffusivity /= scale;
        }
        slow.boundary.robin_velocity /= scale;
        slow.time.tau = tau * scale;
        slow.time.t_max = 20.0 * tau * scale;
        let mut a = Simulation::new(&fast).unwrap();
        let mut b = Simulation::new(&slow).unwrap();
        for _ in 0..20 {
            a.advance(true).unwrap();
            b.advance(true).unwrap();
        }
        let top = a.theta().iter().fold(0.0f64, |m, t| m.max(t.abs()));
        prop_assert!(top > 0.0);
        for (x, y) in a.theta().iter().zip(b.theta()) {
            prop_assert!((x - y).abs() <= 1e-10 * top);
        }
    }

    #[test]
    fn plate_step_commutes_with_rotations(
        ax in axis(), angle in -3.0..3.0f64,
        shift in [-2.0..2.0f64, -2.0..2.0f64, -2.0..2.0f64],
    ) {
        let mut solver = strip_solver(0.5, SolverKind::NullSpace);
        let mesh = solver.mesh().clone();
        let theta: Vec<f64> = mesh.nodes().iter().map(|p| 1.0 + 0.5 * p[0] - 0.3 * p[1]).collect();
        let y = bent_state(&mut solver, &theta, 3);
        let s = y.positions();
        let q = rotation(ax, angle);
        let out = solver.step(&y, &s, &theta, 0.02, &Obstacle::None).unwrap();
        let yq = y.transformed(&q, shift);
        let sq: Vec<Vec3> = s.iter().map(|p| apply(&q, *p, shift)).collect();
        let out_q = solver.step(&yq, &sq, &theta, 0.02, &Obstacle::None).unwrap();
        let expected = out.y.transformed(&q, shift);
        for (a, b) in out_q.y.dofs().iter().zip(expected.dofs()) {
            prop_assert!((a - b).abs() <= 1e-8, "{a} vs {b}");
        }
    }

    #[test]
    fn steps_keep_constraints_descent_and_clamps(
        t0 in 0.0..50.0f64, gx in -20.0..20.0f64, gy in -20.0..20.0f64,
        tau in 1e-3..0.1f64, alpha in -0.5..0.5f64,
        saddle in any::<bool>(),
    ) {
        let kind = if saddle { SolverKind::SaddlePoint } else { SolverKind::NullSpace };
        let mut solver = strip_solver(alpha, kind);
        let mesh = solver.mesh().clone();
        let theta: Vec<f64> = mesh.nodes().iter().map(|p| t0 + gx * p[0] + gy * p[1]).collect();
        let mut y = PlateField::flat(&mesh);
        let clamped = y.clone();
        for _ in 0..3 {
            let s = y.positions();
            let out = solver.step(&y, &s, &theta, tau, &Obstacle::None).unwrap();
            prop_assert!(out.constraint_ok(), "residual {}", out.constraint_residual);
            prop_assert!(out.descent_ok(), "change {}", out.functional_change);
            let bv = build_constraints(&y, solver.fix()).mul_vec(&out.increment);
            let scale = out.increment.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            prop_assert!(bv.iter().all(|v| v.abs() <= 1e-10 * (1.0 + scale / tau) * tau));
            for (z, f) in solver.fix().iter().enumerate() {
                if *f == FixMask::All {
                    for m in 0..9 {
                        prop_assert_eq!(out.y.dofs()[9 * z + m], clamped.dofs()[9 * z + m]);
                    }
                }
            }
            y = out.y;
        }
    }

    #[test]
    fn constant_shifts_against_the_stationarity_threshold(
        c in [-1e-3..1e-3f64, -1e-3..1e-3f64, -1e-3..1e-3f64],
    ) {
        let solver = strip_solver(0.1, SolverKind::NullSpace);
        let y = PlateField::flat(solver.mesh());
        let shifted = y.transformed(&rotation([0.0, 0.0, 1.0], 0.0), c);
        // The strip has area 2; a shift has no Hessian part.
        let size = dot3(c, c).sqrt() * 2f64.sqrt();
        prop_assume!(size > 1e-9);
        prop_assert!(!solver.check_stationary(&shifted, &y, 0.5 * size));
        prop_assert!(solver.check_stationary(&shifted, &y, 2.0 * size));
        prop_assert!((solver.stationarity_norm(&diff(&shifted, &y)) - size).abs() <= 1e-9 * size);
    }

    #[test]
    fn configs_round_trip_with_overrides(
        which in 0usize..6,
        tau in 1e-5..1.0f64,
        epsilon in 1e-9..1e-2f64,
        t_max in 1.0..1000.0f64,
        refinements in 1u32..7,
    ) {
        let mut cfg = Scenario::ALL[which].config();
        cfg.time.tau = tau;
        cfg.time.t_max = t_max;
        cfg.penalty.epsilon = epsilon;
        cfg.mesh.refinements = refinements;
        let text = serialize_config(&cfg);
        let back = parse_config_str(&text).map_err(|e| TestCaseError::fail(format!("{e:?}")))?;
        prop_assert_eq!(back, cfg);
    }
}

fn diff(a: &PlateField, b: &PlateField) -> Vec<f64> {
    a.dofs().iter().zip(b.dofs()).map(|(x, y)| x - y).collect()
}

#[test]
fn simulation_reruns_are_identical() {
    let mut cfg = Scenario::Switch.config();
    cfg.mesh.refinements = 3;
    cfg.time.t_max = 0.06;
    let run = || {
        let mut sim = Simulation::new(&cfg).unwrap();
        (0..cfg.num_steps())
            .map(|_| sim.advance(false).unwrap().0)
            .collect::<Vec<_>>()
    };
    let (a, b) = (run(), run());
    assert_eq!(a.len(), 20);
    for (x, y) in a.iter().zip(&b) {
        assert_eq!(format!("{x:?}"), format!("{y:?}"));
    }
}
