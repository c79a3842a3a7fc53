//! Backward-Euler Q1 solver for the surface heat equation on the flat domain.
//!
//! All coefficients are divided by the heat capacity: the stiffness carries the
//! diffusivity (mm²/s), the Robin terms a transfer velocity (mm/s), and sources
//! are rates in °C/s.

use crate::error::{Error, Result};
use crate::mesh::{BoundaryTag, Point2, QuadMesh};
use crate::quadrature::gauss_2d;
use crate::sparse::{Cholesky, CscMatrix, TripletBuilder};

const Q1_SIGNS: [[f64; 2]; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];

fn q1_values(p: Point2) -> [f64; 4] {
    let mut n = [0.0; 4];
    for a in 0..4 {
        n[a] = 0.25 * (1.0 + Q1_SIGNS[a][0] * p[0]) * (1.0 + Q1_SIGNS[a][1] * p[1]);
    }
    n
}

fn q1_ref_gradients(p: Point2) -> [[f64; 2]; 4] {
    let mut g = [[0.0; 2]; 4];
    for a in 0..4 {
        let [sx, sy] = Q1_SIGNS[a];
        g[a] = [0.25 * sx * (1.0 + sy * p[1]), 0.25 * sy * (1.0 + sx * p[0])];
    }
    g
}

/// Bilinear map of element `e` at a reference point: physical point, Jacobian
/// determinant and physical shape gradients.
fn q1_geometry(mesh: &QuadMesh, e: usize, p: Point2) -> (Point2, f64, [[f64; 2]; 4]) {
    let el = mesh.elements()[e];
    let n = q1_values(p);
    let dn = q1_ref_gradients(p);
    let mut x = [0.0; 2];
    let mut j = [[0.0; 2]; 2];
    for a in 0..4 {
        let xa = mesh.nodes()[el[a]];
        for r in 0..2 {
            x[r] += n[a] * xa[r];
            for c in 0..2 {
                j[r][c] += xa[r] * dn[a][c];
            }
        }
    }
    let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
    let inv = [[j[1][1] / det, -j[0][1] / det], [-j[1][0] / det, j[0][0] / det]];
    let mut g = [[0.0; 2]; 4];
    for a in 0..4 {
        // ∇N = J⁻ᵀ ∇̂N
        g[a] = [
            inv[0][0] * dn[a][0] + inv[1][0] * dn[a][1],
            inv[0][1] * dn[a][0] + inv[1][1] * dn[a][1],
        ];
    }
    (x, det, g)
}

/// Per-element diffusivity and the Robin transfer velocity.
#[derive(Clone, Debug, PartialEq)]
pub struct HeatCoefficients {
    pub diffusivity: Vec<f64>,
    pub robin_velocity: f64,
}

/// Boundary and source data evaluated at the new time level.
#[derive(Clone, Copy, Debug)]
pub struct HeatData<'a> {
    pub theta_dirichlet: f64,
    pub theta_ext: f64,
    /// Assembled source load; empty for no source.
    pub source: &'a [f64],
}

impl HeatData<'_> {
    pub const ZERO: HeatData<'static> = HeatData {
        theta_dirichlet: 0.0,
        theta_ext: 0.0,
        source: &[],
    };
}

#[derive(Clone, Debug)]
pub struct HeatSystem {
    pub mass: CscMatrix,
    pub stiffness: CscMatrix,
    pub robin: CscMatrix,
    /// Robin load for unit ambient temperature.
    pub robin_load: Vec<f64>,
    dirichlet: Vec<bool>,
}

impl HeatSystem {
    pub fn num_nodes(&self) -> usize {
        self.dirichlet.len()
    }

    pub fn dirichlet_nodes(&self) -> impl Iterator<Item = usize> + '_ {
        self.dirichlet
            .iter()
            .enumerate()
            .filter(|(_, &d)| d)
            .map(|(i, _)| i)
    }

    pub fn is_dirichlet(&self, node: usize) -> bool {
        self.dirichlet[node]
    }

    /// `(K + R) θ - r θ_ext - f`, with Dirichlet rows zeroed.
    pub fn stationary_residual(&self, theta: &[f64], data: &HeatData) -> Vec<f64> {
        let k = self.stiffness.mul_vec(theta);
        let r = self.robin.mul_vec(theta);
        (0..theta.len())
            .map(|i| {
                if self.dirichlet[i] {
                    0.0
                } else {
                    let f = data.source.get(i).copied().unwrap_or(0.0);
                    k[i] + r[i] - data.theta_ext * self.robin_load[i] - f
                }
            })
            .collect()
    }
}

/// Mass, stiffness and Robin matrices with 2×2 Gauss quadrature.
pub fn assemble_heat_system(mesh: &QuadMesh, coeffs: &HeatCoefficients) -> Result<HeatSystem> {
    if coeffs.diffusivity.len() != mesh.num_elements() {
        return Err(Error::MissingMaterial(format!(
            "diffusivity given for {} of {} elements",
            coeffs.diffusivity.len(),
            mesh.num_elements()
        )));
    }
    if let Some(&bad) = coeffs.diffusivity.iter().find(|&&d| !(d > 0.0 && d.is_finite())) {
        return Err(Error::NonPositive {
            name: "diffusivity",
            value: bad,
        });
    }
    let has_robin = mesh.edges_with_tag(BoundaryTag::Robin).next().is_some();
    if has_robin && !(coeffs.robin_velocity > 0.0 && coeffs.robin_velocity.is_finite()) {
        return Err(Error::NonPositive {
            name: "robin_velocity",
            value: coeffs.robin_velocity,
        });
    }
    let n = mesh.num_nodes();
    let mut mass = TripletBuilder::with_capacity(n, n, 16 * mesh.num_elements());
    let mut stiff = TripletBuilder::with_capacity(n, n, 16 * mesh.num_elements());
    let rule = gauss_2d(2);
    for (e, el) in mesh.elements().iter().enumerate() {
        let mut me = [[0.0; 4]; 4];
        let mut ke = [[0.0; 4]; 4];
        for &(xi, eta, w) in &rule {
            let (_, det, g) = q1_geometry(mesh, e, [xi, eta]);
            let nv = q1_values([xi, eta]);
            for a in 0..4 {
                for b in 0..4 {
                    me[a][b] += w * det * nv[a] * nv[b];
                    ke[a][b] += w * det * coeffs.diffusivity[e] * (g[a][0] * g[b][0] + g[a][1] * g[b][1]);
                }
            }
        }
        for a in 0..4 {
            for b in 0..4 {
                mass.push(el[a], el[b], me[a][b]);
                stiff.push(el[a], el[b], ke[a][b]);
            }
        }
    }
    let mut robin = TripletBuilder::new(n, n);
    let mut robin_load = vec![0.0; n];
    for edge in mesh.edges_with_tag(BoundaryTag::Robin) {
        let [a, b] = mesh.edges()[edge].nodes;
        let c = coeffs.robin_velocity * mesh.edge_length(edge);
        robin.push(a, a, c / 3.0);
        robin.push(b, b, c / 3.0);
        robin.push(a, b, c / 6.0);
        robin.push(b, a, c / 6.0);
        robin_load[a] += 0.5 * c;
        robin_load[b] += 0.5 * c;
    }
    let mut dirichlet = vec![false; n];
    for node in mesh.nodes_on_edges(mesh.edges_with_tag(BoundaryTag::Dirichlet)) {
        dirichlet[node] = true;
    }
    Ok(HeatSystem {
        mass: mass.build(),
        stiffness: stiff.build(),
        robin: robin.build(),
        robin_load,
        dirichlet,
    })
}

/// Load vector of a source rate that is constant on the elements whose
/// centroid satisfies `inside`: each such element adds `rate·|T|/4` to its
/// vertices.
pub fn indicator_load(mesh: &QuadMesh, inside: impl Fn(Point2) -> bool, rate: f64) -> Vec<f64> {
    let mut f = vec![0.0; mesh.num_nodes()];
    for (e, el) in mesh.elements().iter().enumerate() {
        if inside(mesh.element_centroid(e)) {
            let w = 0.25 * rate * mesh.element_area(e);
            for &n in el {
                f[n] += w;
            }
        }
    }
    f
}

/// Consistent load `∫ f φ` of a smooth source, 3×3 Gauss.
pub fn function_load(mesh: &QuadMesh, f: impl Fn(Point2) -> f64) -> Vec<f64> {
    let mut out = vec![0.0; mesh.num_nodes()];
    let rule = gauss_2d(3);
    for (e, el) in mesh.elements().iter().enumerate() {
        for &(xi, eta, w) in &rule {
            let (x, det, _) = q1_geometry(mesh, e, [xi, eta]);
            let nv = q1_values([xi, eta]);
            let fx = f(x);
            for a in 0..4 {
                out[el[a]] += w * det * fx * nv[a];
            }
        }
    }
    out
}

/// `‖θh - θ‖_{L²}` with 3×3 Gauss.
pub fn l2_error(mesh: &QuadMesh, theta: &[f64], exact: impl Fn(Point2) -> f64) -> f64 {
    let rule = gauss_2d(3);
    let mut sum = 0.0;
    for (e, el) in mesh.elements().iter().enumerate() {
        for &(xi, eta, w) in &rule {
            let (x, det, _) = q1_geometry(mesh, e, [xi, eta]);
            let nv = q1_values([xi, eta]);
            let th: f64 = (0..4).map(|a| nv[a] * theta[el[a]]).sum();
            sum += w * det * (th - exact(x)).powi(2);
        }
    }
    sum.sqrt()
}

/// Backward-Euler stepper; the reduced matrix `M/τ + K + R` on non-Dirichlet
/// nodes is factored once.
pub struct HeatSolver {
    system: HeatSystem,
    tau: f64,
    free_index: Vec<Option<usize>>,
    free_nodes: Vec<usize>,
    lhs: CscMatrix,
    factor: Cholesky,
}

impl HeatSolver {
    pub fn new(system: HeatSystem, tau: f64) -> Result<Self> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::NonPositive {
                name: "tau",
                value: tau,
            });
        }
        let n = system.num_nodes();
        let mut free_index = vec![None; n];
        let mut free_nodes = Vec::new();
        for i in 0..n {
            if !system.dirichlet[i] {
                free_index[i] = Some(free_nodes.len());
                free_nodes.push(i);
            }
        }
        let full = system
            .mass
            .linear_combination(1.0 / tau, &system.stiffness, 1.0)
            .linear_combination(1.0, &system.robin, 1.0);
        let nf = free_nodes.len();
        let reduced = full.submatrix(&free_index, &free_index, nf, nf);
        let factor = Cholesky::new(&reduced)?;
        Ok(HeatSolver {
            system,
            tau,
            free_index,
            free_nodes,
            lhs: full,
            factor,
        })
    }

    pub fn system(&self) -> &HeatSystem {
        &self.system
    }

    pub fn tau(&self) -> f64 {
        self.tau
    }

    /// One implicit step from `theta` to the next time level.
    pub fn step(&self, theta: &[f64], data: &HeatData) -> Result<Vec<f64>> {
        let n = self.system.num_nodes();
        if theta.len() != n || !(data.source.is_empty() || data.source.len() == n) {
            return Err(Error::InvalidInput(
                "temperature field does not match the mesh".into(),
            ));
        }
        let mt = self.system.mass.mul_vec(theta);
        // Lifted Dirichlet trace.
        let mut lift = vec![0.0; n];
        for i in self.system.dirichlet_nodes() {
            lift[i] = data.theta_dirichlet;
        }
        let a_lift = self.lhs.mul_vec(&lift);
        let mut rhs = vec![0.0; self.free_nodes.len()];
        for (k, &i) in self.free_nodes.iter().enumerate() {
            let f = data.source.get(i).copied().unwrap_or(0.0);
            rhs[k] = mt[i] / self.tau + data.theta_ext * self.system.robin_load[i] + f - a_lift[i];
        }
        let sol = self.factor.solve(&rhs);
        let mut out = lift;
        for (i, slot) in self.free_index.iter().enumerate() {
            if let Some(k) = slot {
                out[i] = sol[*k];
            }
        }
        if let Some(i) = out.iter().position(|v| !v.is_finite()) {
            return Err(Error::Solver(format!("non-finite temperature at node {i}")));
        }
        Ok(out)
    }
}

/// One backward-Euler step without reusing a factorization.
pub fn heat_step(system: &HeatSystem, theta: &[f64], tau: f64, data: &HeatData) -> Result<Vec<f64>> {
    HeatSolver::new(system.clone(), tau)?.step(theta, data)
}

/// Spatial and temporal errors of the manufactured solution
/// `θ = e^{-t} cos(πx₁/2) cos(πx₂/2)` on (-1, 1)² with unit diffusivity.
#[derive(Clone, Debug, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct ConvergenceReport {
    pub spatial_h: Vec<f64>,
    pub spatial_errors: Vec<f64>,
    pub spatial_orders: Vec<f64>,
    pub temporal_tau: Vec<f64>,
    pub temporal_errors: Vec<f64>,
    pub temporal_orders: Vec<f64>,
}

fn manufactured_exact(x: Point2, t: f64) -> f64 {
    use std::f64::consts::FRAC_PI_2;
    (-t).exp() * (FRAC_PI_2 * x[0]).cos() * (FRAC_PI_2 * x[1]).cos()
}

/// Runs the manufactured problem to `t_end` and returns the final L² error.
pub fn manufactured_error(refinements: u32, tau: f64, t_end: f64) -> Result<f64> {
    use crate::mesh::{build_rectangle_mesh, tag_boundary, EdgeSelector};
    let mesh = build_rectangle_mesh([-1.0, -1.0], [1.0, 1.0], refinements)?;
    let (mesh, _) = tag_boundary(mesh, &[(BoundaryTag::Dirichlet, EdgeSelector::All)]);
    let coeffs = HeatCoefficients {
        diffusivity: vec![1.0; mesh.num_elements()],
        robin_velocity: 0.0,
    };
    let solver = HeatSolver::new(assemble_heat_system(&mesh, &coeffs)?, tau)?;
    // f = ∂tθ - Δθ = (π²/2 - 1) θ
    let shape_load = function_load(&mesh, |x| manufactured_exact(x, 0.0));
    let factor = std::f64::consts::PI.powi(2) / 2.0 - 1.0;
    let mut theta: Vec<f64> = mesh.nodes().iter().map(|&x| manufactured_exact(x, 0.0)).collect();
    let steps = (t_end / tau).round() as usize;
    let mut source = vec![0.0; mesh.num_nodes()];
    for k in 1..=steps {
        let t = k as f64 * tau;
        let s = factor * (-t).exp();
        for (dst, src) in source.iter_mut().zip(&shape_load) {
            *dst = s * src;
        }
        let data = HeatData {
            theta_dirichlet: 0.0,
            theta_ext: 0.0,
            source: &source,
        };
        theta = solver.step(&theta, &data)?;
    }
    let t = steps as f64 * tau;
    Ok(l2_error(&mesh, &theta, |x| manufactured_exact(x, t)))
}

fn orders(h: &[f64], e: &[f64]) -> Vec<f64> {
    h.windows(2)
        .zip(e.windows(2))
        .map(|(h, e)| (e[0] / e[1]).ln() / (h[0] / h[1]).ln())
        .collect()
}

/// Spatial study over `refinements` with `τ = c·h²` up to `t_end`, and a
/// temporal study over `taus` on a fixed fine mesh up to `temporal_t_end`.
/// The temporal run needs a horizon long enough for the time error to
/// dominate the spatial one.
pub fn verify_manufactured(
    refinements: &[u32],
    tau_over_h2: f64,
    t_end: f64,
    fine_refinement: u32,
    taus: &[f64],
    temporal_t_end: f64,
) -> Result<ConvergenceReport> {
    let mut spatial_h = Vec::new();
    let mut spatial_errors = Vec::new();
    for &r in refinements {
        let h = 2.0 / (1u64 << r) as f64;
        let tau = tau_over_h2 * h * h;
        // Align the final time with the step size.
        let steps = (t_end / tau).ceil();
        spatial_errors.push(manufactured_error(r, t_end / steps, t_end)?);
        spatial_h.push(h);
    }
    let mut temporal_errors = Vec::new();
    for &tau in taus {
        temporal_errors.push(manufactured_error(fine_refinement, tau, temporal_t_end)?);
    }
    Ok(ConvergenceReport {
        spatial_orders: orders(&spatial_h, &spatial_errors),
        temporal_orders: orders(taus, &temporal_errors),
        spatial_h,
        spatial_errors,
        temporal_tau: taus.to_vec(),
        temporal_errors,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{build_rectangle_mesh, tag_boundary, Axis, EdgeSelector};

    fn coeffs(mesh: &QuadMesh, d: f64, eta: f64) -> HeatCoefficients {
        HeatCoefficients {
            diffusivity: vec![d; mesh.num_elements()],
            robin_velocity: eta,
        }
    }

    #[test]
    fn stiffness_rows_sum_to_zero_and_mass_to_area() {
        let m = build_rectangle_mesh([0.0, 0.0], [1.0, 1.0], 0).unwrap();
        let s = assemble_heat_system(&m, &coeffs(&m, 1.0, 0.0)).unwrap();
        let ones = vec![1.0; 4];
        assert!(s.stiffness.mul_vec(&ones).iter().all(|v| v.abs() < 1e-15));
        let m2 = build_rectangle_mesh([-1.0, -1.0], [1.0, 2.0], 3).unwrap();
        let s2 = assemble_heat_system(&m2, &coeffs(&m2, 0.3, 0.0)).unwrap();
        let total: f64 = s2.mass.mul_vec(&vec![1.0; m2.num_nodes()]).iter().sum();
        assert!((total - 6.0).abs() < 1e-12);
    }

    #[test]
    fn robin_edge_mass_total() {
        // One edge of length 2 with transfer velocity 2.
        let m = build_rectangle_mesh([-1.0, -1.0], [1.0, 1.0], 0).unwrap();
        let (m, _) = tag_boundary(m, &[(BoundaryTag::Robin, EdgeSelector::line(Axis::X1, 1.0))]);
        let s = assemble_heat_system(&m, &coeffs(&m, 1.0, 2.0)).unwrap();
        let total: f64 = s.robin.mul_vec(&[1.0; 4]).iter().sum();
        assert!((total - 4.0).abs() < 1e-14);
    }

    #[test]
    fn zero_data_stays_zero() {
        let m = build_rectangle_mesh([-1.0, -1.0], [1.0, 1.0], 2).unwrap();
        let (m, _) = tag_boundary(m, &[(BoundaryTag::Dirichlet, EdgeSelector::line(Axis::X1, -1.0))]);
        let s = assemble_heat_system(&m, &coeffs(&m, 0.1, 0.0)).unwrap();
        let th = heat_step(&s, &vec![0.0; m.num_nodes()], 0.1, &HeatData::ZERO).unwrap();
        assert!(th.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn insulated_constant_is_preserved() {
        let m = build_rectangle_mesh([-1.0, -1.0], [1.0, 1.0], 3).unwrap();
        let s = assemble_heat_system(&m, &coeffs(&m, 0.1, 0.0)).unwrap();
        let solver = HeatSolver::new(s, 0.05).unwrap();
        let mut th = vec![7.5; m.num_nodes()];
        for _ in 0..20 {
            th = solver.step(&th, &HeatData::ZERO).unwrap();
        }
        assert!(th.iter().all(|v| (v - 7.5).abs() < 1e-12));
    }

    fn dense_solve(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
        let n = b.len();
        for c in 0..n {
            let p = (c..n)
                .max_by(|&i, &j| a[i][c].abs().total_cmp(&a[j][c].abs()))
                .unwrap();
            a.swap(c, p);
            b.swap(c, p);
            for r in c + 1..n {
                let f = a[r][c] / a[c][c];
                for k in c..n {
                    a[r][k] -= f * a[c][k];
                }
                b[r] -= f * b[c];
            }
        }
        let mut x = vec![0.0; n];
        for r in (0..n).rev() {
            let s: f64 = (r + 1..n).map(|k| a[r][k] * x[k]).sum();
            x[r] = (b[r] - s) / a[r][r];
        }
        x
    }

    #[test]
    fn robin_heating_converges_monotonically() {
        // Coefficients chosen so that M/τ + K + R is an M-matrix; consistent
        // mass gives no monotonicity otherwise.
        let m = build_rectangle_mesh([-1.0, -1.0], [1.0, 1.0], 1).unwrap();
        let (m, _) = tag_boundary(m, &[(BoundaryTag::Robin, EdgeSelector::All)]);
        let s = assemble_heat_system(&m, &coeffs(&m, 4.0, 2.0)).unwrap();
        let tau = 1.0;
        let solver = HeatSolver::new(s.clone(), tau).unwrap();
        let data = HeatData {
            theta_dirichlet: 0.0,
            theta_ext: 100.0,
            source: &[],
        };
        // Oracle: the same backward-Euler recursion by dense elimination.
        let n = m.num_nodes();
        let (md, kd, rd) = (s.mass.to_dense(), s.stiffness.to_dense(), s.robin.to_dense());
        let a: Vec<Vec<f64>> = (0..n)
            .map(|i| (0..n).map(|j| md[i][j] / tau + kd[i][j] + rd[i][j]).collect())
            .collect();
        let mut th = vec![0.0; n];
        let mut oracle = vec![0.0; n];
        for _ in 0..60 {
            let next = solver.step(&th, &data).unwrap();
            assert!(next.iter().zip(&th).all(|(a, b)| *a >= *b - 1e-12));
            th = next;
            let mt: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| md[i][j] * oracle[j]).sum::<f64>() / tau)
                .collect();
            let rhs: Vec<f64> = (0..n).map(|i| mt[i] + 100.0 * s.robin_load[i]).collect();
            oracle = dense_solve(a.clone(), rhs);
        }
        assert!(th.iter().zip(&oracle).all(|(a, b)| (a - b).abs() < 1e-9));
        assert!(th.iter().all(|v| (v - 100.0).abs() < 1.0));
    }

    #[test]
    fn fixed_point_is_independent_of_tau() {
        let m = build_rectangle_mesh([0.0, 0.0], [2.0, 1.0], 3).unwrap();
        let (m, _) = tag_boundary(
            m,
            &[
                (BoundaryTag::Dirichlet, EdgeSelector::line(Axis::X1, 0.0)),
                (BoundaryTag::Robin, EdgeSelector::line(Axis::X1, 2.0)),
            ],
        );
        let s = assemble_heat_system(&m, &coeffs(&m, 0.7, 1.5)).unwrap();
        let src = indicator_load(&m, |p| p[1] > 0.5, 3.0);
        let data = HeatData {
            theta_dirichlet: 10.0,
            theta_ext: 40.0,
            source: &src,
        };
        let mut finals = Vec::new();
        for tau in [0.5, 5.0] {
            let solver = HeatSolver::new(s.clone(), tau).unwrap();
            let mut th = vec![0.0; m.num_nodes()];
            for _ in 0..3000 {
                th = solver.step(&th, &data).unwrap();
            }
            let r = s.stationary_residual(&th, &data);
            let scale = s.robin_load.iter().map(|v| v * 40.0).fold(1.0f64, f64::max);
            assert!(r.iter().all(|v| v.abs() < 1e-10 * scale));
            for i in s.dirichlet_nodes() {
                assert_eq!(th[i], 10.0);
            }
            finals.push(th);
        }
        assert!(finals[0]
            .iter()
            .zip(&finals[1])
            .all(|(a, b)| (a - b).abs() < 1e-9));
    }

    #[test]
    fn constant_exact_solution_has_no_error() {
        let m = build_rectangle_mesh([-1.0, -1.0], [1.0, 1.0], 2).unwrap();
        let (m, _) = tag_boundary(m, &[(BoundaryTag::Dirichlet, EdgeSelector::All)]);
        let s = assemble_heat_system(&m, &coeffs(&m, 1.0, 0.0)).unwrap();
        let data = HeatData {
            theta_dirichlet: 3.0,
            theta_ext: 0.0,
            source: &[],
        };
        let th = heat_step(&s, &vec![3.0; m.num_nodes()], 0.01, &data).unwrap();
        assert!(l2_error(&m, &th, |_| 3.0) < 1e-13);
    }

    #[test]
    fn rejects_bad_input() {
        let m = build_rectangle_mesh([0.0, 0.0], [1.0, 1.0], 1).unwrap();
        assert!(assemble_heat_system(&m, &coeffs(&m, -1.0, 0.0)).is_err());
        assert!(matches!(
            assemble_heat_system(
                &m,
                &HeatCoefficients {
                    diffusivity: vec![1.0],
                    robin_velocity: 0.0
                }
            ),
            Err(Error::MissingMaterial(_))
        ));
        let s = assemble_heat_system(&m, &coeffs(&m, 1.0, 0.0)).unwrap();
        assert!(HeatSolver::new(s, 0.0).is_err());
    }
}
