//! Discrete Kirchhoff quadrilateral: reduced-cubic shape functions, the
//! discrete gradient into [Q2]², the discrete Hessian and Laplacian, the
//! bending matrix and the vertex-lumped inner product.
//!
//! Local scalar DOFs are ordered `3a + d` for vertex `a` (counterclockwise from
//! the lower-left corner) and `d` in (value, ∂₁, ∂₂). The nine Q2 points are
//! the four vertices, the midpoints of edges `a → a+1`, and the center.

use std::sync::OnceLock;

use nalgebra::{DMatrix, SMatrix};

use crate::error::{Error, Result};
use crate::mesh::{Point2, QuadMesh, Rect};
use crate::quadrature::gauss_2d;
use crate::sparse::{CscMatrix, TripletBuilder};

pub const VERTICES: [Point2; 4] = [[-1.0, -1.0], [1.0, -1.0], [1.0, 1.0], [-1.0, 1.0]];
pub const Q2_POINTS: [Point2; 9] = [
    [-1.0, -1.0],
    [1.0, -1.0],
    [1.0, 1.0],
    [-1.0, 1.0],
    [0.0, -1.0],
    [1.0, 0.0],
    [0.0, 1.0],
    [-1.0, 0.0],
    [0.0, 0.0],
];
const EDGE_NORMALS: [Point2; 4] = [[0.0, -1.0], [1.0, 0.0], [0.0, 1.0], [-1.0, 0.0]];

pub type Local12 = [f64; 12];
pub type Map18 = [[f64; 12]; 18];

/// Coefficients of the 12 reference shape functions over the monomials
/// `ξ^i η^j`, stored at index `i + 4j`.
#[derive(Clone, Debug)]
pub struct DkqBasis {
    coeffs: [[f64; 16]; 12],
    gradient_map: Map18,
}

fn pow(x: f64, k: usize) -> f64 {
    match k {
        0 => 1.0,
        1 => x,
        2 => x * x,
        _ => x * x * x,
    }
}

fn dpow(x: f64, k: usize) -> f64 {
    match k {
        0 => 0.0,
        1 => 1.0,
        2 => 2.0 * x,
        _ => 3.0 * x * x,
    }
}

fn d2pow(x: f64, k: usize) -> f64 {
    match k {
        0 | 1 => 0.0,
        2 => 2.0,
        _ => 6.0 * x,
    }
}

/// Values of the 16 monomials and their first derivatives at a point.
fn monomial_rows(p: Point2) -> ([f64; 16], [f64; 16], [f64; 16]) {
    let (mut v, mut dx, mut dy) = ([0.0; 16], [0.0; 16], [0.0; 16]);
    for j in 0..4 {
        for i in 0..4 {
            let m = i + 4 * j;
            v[m] = pow(p[0], i) * pow(p[1], j);
            dx[m] = dpow(p[0], i) * pow(p[1], j);
            dy[m] = pow(p[0], i) * dpow(p[1], j);
        }
    }
    (v, dx, dy)
}

impl DkqBasis {
    /// Solves for the shape functions. Besides the 12 duality and 4 edge
    /// conditions the system carries `c₃₃ = 0`: the four edge rows are linearly
    /// dependent on bicubics, and the remaining kernel is spanned by the bubble
    /// `ξη(1-ξ²)(1-η²)`, whose gradient vanishes at every Q2 point. The
    /// overdetermined 17×16 system is solved in the least-squares sense and its
    /// residual checked.
    pub fn build() -> Result<Self> {
        let mut a = DMatrix::<f64>::zeros(17, 16);
        for (k, &p) in VERTICES.iter().enumerate() {
            let (v, dx, dy) = monomial_rows(p);
            for m in 0..16 {
                a[(3 * k, m)] = v[m];
                a[(3 * k + 1, m)] = dx[m];
                a[(3 * k + 2, m)] = dy[m];
            }
        }
        for e in 0..4 {
            let n = EDGE_NORMALS[e];
            let (_, mx, my) = monomial_rows(Q2_POINTS[4 + e]);
            let (_, ax, ay) = monomial_rows(VERTICES[e]);
            let (_, bx, by) = monomial_rows(VERTICES[(e + 1) % 4]);
            for m in 0..16 {
                let mid = mx[m] * n[0] + my[m] * n[1];
                let avg = 0.5 * ((ax[m] + bx[m]) * n[0] + (ay[m] + by[m]) * n[1]);
                a[(12 + e, m)] = mid - avg;
            }
        }
        a[(16, 15)] = 1.0;

        let mut rhs = DMatrix::<f64>::zeros(17, 12);
        for k in 0..12 {
            rhs[(k, k)] = 1.0;
        }
        let svd = a.clone().svd(true, true);
        let smin = svd.singular_values.min();
        let smax = svd.singular_values.max();
        if smin <= 1e-12 * smax {
            return Err(Error::SingularBasis(smin / smax));
        }
        let c = svd
            .solve(&rhs, 1e-14 * smax)
            .map_err(|e| Error::Solver(e.to_string()))?;
        let residual = (&a * &c - &rhs).amax();
        if residual > 1e-11 {
            return Err(Error::SingularBasis(residual));
        }
        let mut coeffs = [[0.0; 16]; 12];
        for k in 0..12 {
            for m in 0..16 {
                coeffs[k][m] = c[(m, k)];
            }
        }
        let mut basis = DkqBasis {
            coeffs,
            gradient_map: [[0.0; 12]; 18],
        };
        basis.gradient_map = basis.build_gradient_map();
        Ok(basis)
    }

    fn build_gradient_map(&self) -> Map18 {
        let mut g = [[0.0; 12]; 18];
        for a in 0..4 {
            g[2 * a][3 * a + 1] = 1.0;
            g[2 * a + 1][3 * a + 2] = 1.0;
        }
        for e in 0..4 {
            let p = 4 + e;
            for k in 0..12 {
                let grad = self.gradient(k, Q2_POINTS[p]);
                g[2 * p][k] = grad[0];
                g[2 * p + 1][k] = grad[1];
            }
        }
        for c in 0..2 {
            for k in 0..12 {
                g[16 + c][k] = 0.25 * (0..4).map(|a| g[2 * a + c][k]).sum::<f64>();
            }
        }
        g
    }

    pub fn coefficients(&self, k: usize) -> &[f64; 16] {
        &self.coeffs[k]
    }

    pub fn value(&self, k: usize, p: Point2) -> f64 {
        let (v, _, _) = monomial_rows(p);
        v.iter().zip(&self.coeffs[k]).map(|(a, b)| a * b).sum()
    }

    pub fn gradient(&self, k: usize, p: Point2) -> [f64; 2] {
        let (_, dx, dy) = monomial_rows(p);
        let c = &self.coeffs[k];
        [
            dx.iter().zip(c).map(|(a, b)| a * b).sum(),
            dy.iter().zip(c).map(|(a, b)| a * b).sum(),
        ]
    }

    /// Second derivatives `[∂ξξ, ∂ξη, ∂ηη]` of shape function `k`.
    pub fn hessian(&self, k: usize, p: Point2) -> [f64; 3] {
        let c = &self.coeffs[k];
        let mut h = [0.0; 3];
        for j in 0..4 {
            for i in 0..4 {
                let m = i + 4 * j;
                h[0] += c[m] * d2pow(p[0], i) * pow(p[1], j);
                h[1] += c[m] * dpow(p[0], i) * dpow(p[1], j);
                h[2] += c[m] * pow(p[0], i) * d2pow(p[1], j);
            }
        }
        h
    }

    /// The 18×12 discrete-gradient map on the reference square; row `2p + c`
    /// is component `c` at Q2 point `p`.
    pub fn reference_gradient_map(&self) -> &Map18 {
        &self.gradient_map
    }
}

/// The shared reference basis.
pub fn basis() -> &'static DkqBasis {
    static BASIS: OnceLock<DkqBasis> = OnceLock::new();
    BASIS.get_or_init(|| DkqBasis::build().expect("DKQ reference basis must be well posed"))
}

/// One-dimensional quadratic Lagrange basis on nodes -1, 0, 1.
fn lagrange(s: f64) -> [f64; 3] {
    [0.5 * s * (s - 1.0), 1.0 - s * s, 0.5 * s * (s + 1.0)]
}

fn dlagrange(s: f64) -> [f64; 3] {
    [s - 0.5, -2.0 * s, s + 0.5]
}

fn lagrange_index(v: f64) -> usize {
    if v < -0.5 {
        0
    } else if v > 0.5 {
        2
    } else {
        1
    }
}

/// Q2 basis values at `p` in the ordering of [`Q2_POINTS`].
pub fn q2_values(p: Point2) -> [f64; 9] {
    let (lx, ly) = (lagrange(p[0]), lagrange(p[1]));
    let mut out = [0.0; 9];
    for (k, q) in Q2_POINTS.iter().enumerate() {
        out[k] = lx[lagrange_index(q[0])] * ly[lagrange_index(q[1])];
    }
    out
}

/// Reference derivatives `(∂ξ, ∂η)` of the Q2 basis at `p`.
pub fn q2_gradients(p: Point2) -> [[f64; 2]; 9] {
    let (lx, ly) = (lagrange(p[0]), lagrange(p[1]));
    let (dx, dy) = (dlagrange(p[0]), dlagrange(p[1]));
    let mut out = [[0.0; 2]; 9];
    for (k, q) in Q2_POINTS.iter().enumerate() {
        let (i, j) = (lagrange_index(q[0]), lagrange_index(q[1]));
        out[k] = [dx[i] * ly[j], lx[i] * dy[j]];
    }
    out
}

/// An axis-aligned rectangular element `[x0, x0+hx] × [y0, y0+hy]`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct RectElement {
    pub origin: Point2,
    pub hx: f64,
    pub hy: f64,
}

impl RectElement {
    pub fn new(rect: Rect) -> Self {
        RectElement {
            origin: rect.lower,
            hx: rect.width(),
            hy: rect.height(),
        }
    }

    /// Geometry of mesh element `e`; only rectangles are supported.
    pub fn of(mesh: &QuadMesh, e: usize) -> Result<Self> {
        mesh.element_rect(e)
            .map(RectElement::new)
            .ok_or(Error::UnsupportedElement(e))
    }

    pub fn area(&self) -> f64 {
        self.hx * self.hy
    }

    pub fn to_reference(&self, x: Point2) -> Point2 {
        [
            2.0 * (x[0] - self.origin[0]) / self.hx - 1.0,
            2.0 * (x[1] - self.origin[1]) / self.hy - 1.0,
        ]
    }

    pub fn to_physical(&self, p: Point2) -> Point2 {
        [
            self.origin[0] + 0.5 * (p[0] + 1.0) * self.hx,
            self.origin[1] + 0.5 * (p[1] + 1.0) * self.hy,
        ]
    }

    /// Factors converting physical DOFs to reference DOFs.
    fn dof_scale(&self) -> Local12 {
        let mut s = [0.0; 12];
        for a in 0..4 {
            s[3 * a] = 1.0;
            s[3 * a + 1] = 0.5 * self.hx;
            s[3 * a + 2] = 0.5 * self.hy;
        }
        s
    }

    fn inv_jac(&self) -> [f64; 2] {
        [2.0 / self.hx, 2.0 / self.hy]
    }

    /// Local DOFs of a function given by value and gradient.
    pub fn interpolate(&self, f: impl Fn(Point2) -> (f64, [f64; 2])) -> Local12 {
        let mut d = [0.0; 12];
        for (a, v) in VERTICES.iter().enumerate() {
            let (val, g) = f(self.to_physical(*v));
            d[3 * a] = val;
            d[3 * a + 1] = g[0];
            d[3 * a + 2] = g[1];
        }
        d
    }

    /// Value of the reduced-cubic representative at reference point `p`.
    pub fn representative(&self, dofs: &Local12, p: Point2) -> f64 {
        let b = basis();
        let s = self.dof_scale();
        (0..12).map(|k| dofs[k] * s[k] * b.value(k, p)).sum()
    }

    /// Physical gradient of the representative at reference point `p`.
    pub fn representative_gradient(&self, dofs: &Local12, p: Point2) -> [f64; 2] {
        let b = basis();
        let s = self.dof_scale();
        let j = self.inv_jac();
        let mut g = [0.0; 2];
        for k in 0..12 {
            let gk = b.gradient(k, p);
            g[0] += dofs[k] * s[k] * gk[0] * j[0];
            g[1] += dofs[k] * s[k] * gk[1] * j[1];
        }
        g
    }

    /// Physical Hessian `[∂11, ∂12, ∂22]` of the representative.
    pub fn representative_hessian(&self, dofs: &Local12, p: Point2) -> [f64; 3] {
        let b = basis();
        let s = self.dof_scale();
        let j = self.inv_jac();
        let mut h = [0.0; 3];
        for k in 0..12 {
            let hk = b.hessian(k, p);
            h[0] += dofs[k] * s[k] * hk[0] * j[0] * j[0];
            h[1] += dofs[k] * s[k] * hk[1] * j[0] * j[1];
            h[2] += dofs[k] * s[k] * hk[2] * j[1] * j[1];
        }
        h
    }

    /// Discrete gradient map in physical coordinates.
    pub fn gradient_map(&self) -> Map18 {
        let g = basis().reference_gradient_map();
        let s = self.dof_scale();
        let j = self.inv_jac();
        let mut out = [[0.0; 12]; 18];
        for r in 0..18 {
            for k in 0..12 {
                out[r][k] = j[r % 2] * g[r][k] * s[k];
            }
        }
        out
    }

    /// Q2 coefficients of `∇h w`, layout `2p + component`.
    pub fn discrete_gradient(&self, dofs: &Local12) -> [f64; 18] {
        let g = self.gradient_map();
        let mut out = [0.0; 18];
        for r in 0..18 {
            out[r] = (0..12).map(|k| g[r][k] * dofs[k]).sum();
        }
        out
    }

    /// Rows of `D²h` at reference point `p`, entry `(i, j)` at index `2i + j`,
    /// meaning `∂_j` of the `i`-th component of `∇h w`.
    pub fn hessian_rows(&self, p: Point2) -> [Local12; 4] {
        self.hessian_rows_with(&self.gradient_map(), p)
    }

    fn hessian_rows_with(&self, g: &Map18, p: Point2) -> [Local12; 4] {
        let dq = q2_gradients(p);
        let jac = self.inv_jac();
        let mut rows = [[0.0; 12]; 4];
        for i in 0..2 {
            for j in 0..2 {
                let row = &mut rows[2 * i + j];
                for (q, d) in dq.iter().enumerate() {
                    let c = d[j] * jac[j];
                    if c == 0.0 {
                        continue;
                    }
                    for k in 0..12 {
                        row[k] += c * g[2 * q + i][k];
                    }
                }
            }
        }
        rows
    }

    /// Row of `Δh = tr D²h` at reference point `p`.
    pub fn laplacian_row(&self, p: Point2) -> Local12 {
        let r = self.hessian_rows(p);
        let mut out = [0.0; 12];
        for k in 0..12 {
            out[k] = r[0][k] + r[3][k];
        }
        out
    }

    /// `Δh` rows at the four vertices.
    pub fn vertex_laplacian_rows(&self) -> [Local12; 4] {
        let g = self.gradient_map();
        let mut out = [[0.0; 12]; 4];
        for (a, v) in VERTICES.iter().enumerate() {
            let r = self.hessian_rows_with(&g, *v);
            for k in 0..12 {
                out[a][k] = r[0][k] + r[3][k];
            }
        }
        out
    }

    /// `∫_T D²h φ_k : D²h φ_l` with unit coefficient, 3×3 Gauss.
    pub fn bending_matrix(&self) -> SMatrix<f64, 12, 12> {
        let g = self.gradient_map();
        let det = 0.25 * self.hx * self.hy;
        let mut k = SMatrix::<f64, 12, 12>::zeros();
        for (xi, eta, w) in gauss_2d(3) {
            let rows = self.hessian_rows_with(&g, [xi, eta]);
            for row in rows.iter() {
                let r = SMatrix::<f64, 12, 1>::from_column_slice(row);
                k += (w * det) * r * r.transpose();
            }
        }
        k
    }

    /// Consistent mass matrix of the representative (4×4 Gauss).
    pub fn representative_mass(&self) -> SMatrix<f64, 12, 12> {
        let b = basis();
        let s = self.dof_scale();
        let det = 0.25 * self.hx * self.hy;
        let mut m = SMatrix::<f64, 12, 12>::zeros();
        for (xi, eta, w) in gauss_2d(4) {
            let mut phi = SMatrix::<f64, 12, 1>::zeros();
            for k in 0..12 {
                phi[k] = s[k] * b.value(k, [xi, eta]);
            }
            m += (w * det) * phi * phi.transpose();
        }
        m
    }
}

/// Scalar DKQ DOF of `node` and derivative slot `d`.
pub fn scalar_dof(node: usize, d: usize) -> usize {
    3 * node + d
}

/// Global scalar DOF indices of element `e`.
pub fn element_scalar_dofs(mesh: &QuadMesh, e: usize) -> [usize; 12] {
    let el = mesh.elements()[e];
    let mut out = [0; 12];
    for a in 0..4 {
        for d in 0..3 {
            out[3 * a + d] = scalar_dof(el[a], d);
        }
    }
    out
}

/// Geometry of every element; fails on the first non-rectangle.
pub fn element_geometries(mesh: &QuadMesh) -> Result<Vec<RectElement>> {
    (0..mesh.num_elements())
        .map(|e| RectElement::of(mesh, e))
        .collect()
}

/// `(μ̄ D²h ·, D²h ·)` on the scalar space (3 DOFs per node, `3·node + d`).
pub fn assemble_bending_matrix(mesh: &QuadMesh, mu_bar: &[f64]) -> Result<CscMatrix> {
    if mu_bar.len() != mesh.num_elements() {
        return Err(Error::InvalidInput(format!(
            "expected {} element coefficients, got {}",
            mesh.num_elements(),
            mu_bar.len()
        )));
    }
    if let Some(&bad) = mu_bar.iter().find(|&&m| !(m > 0.0 && m.is_finite())) {
        return Err(Error::NonPositive {
            name: "mu_bar",
            value: bad,
        });
    }
    let n = 3 * mesh.num_nodes();
    let mut t = TripletBuilder::with_capacity(n, n, 144 * mesh.num_elements());
    let mut cache: Vec<(RectElement, SMatrix<f64, 12, 12>)> = Vec::new();
    for e in 0..mesh.num_elements() {
        let geo = RectElement::of(mesh, e)?;
        // Element matrices depend only on the side lengths.
        let ke = match cache.iter().find(|(g, _)| g.hx == geo.hx && g.hy == geo.hy) {
            Some((_, k)) => *k,
            None => {
                let k = geo.bending_matrix();
                cache.push((geo, k));
                k
            }
        };
        let dofs = element_scalar_dofs(mesh, e);
        for a in 0..12 {
            for b in 0..12 {
                t.push(dofs[a], dofs[b], mu_bar[e] * ke[(a, b)]);
            }
        }
    }
    Ok(t.build())
}

/// Vertex-lumped inner product `Σ_T |T|/4 Σ_z φ|_T(z) ψ|_T(z)`, with the fields
/// given as per-element corner evaluations `(element, corner) → value`.
pub fn lumped_inner_product(
    mesh: &QuadMesh,
    phi: impl Fn(usize, usize) -> f64,
    psi: impl Fn(usize, usize) -> f64,
) -> f64 {
    (0..mesh.num_elements())
        .map(|e| {
            let w = 0.25 * mesh.element_area(e);
            (0..4).map(|a| w * phi(e, a) * psi(e, a)).sum::<f64>()
        })
        .sum()
}

/// Diagonal of the lumped mass on nodal fields.
pub fn lumped_mass(mesh: &QuadMesh) -> Vec<f64> {
    let mut m = vec![0.0; mesh.num_nodes()];
    for (e, el) in mesh.elements().iter().enumerate() {
        let w = 0.25 * mesh.element_area(e);
        for &n in el {
            m[n] += w;
        }
    }
    m
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::build_rectangle_mesh;

    const UNIT: RectElement = RectElement {
        origin: [-1.0, -1.0],
        hx: 2.0,
        hy: 2.0,
    };

    type Poly = fn(Point2) -> (f64, [f64; 2]);

    fn quadratics() -> Vec<(Poly, [f64; 3])> {
        // (value & gradient, Hessian [11, 12, 22])
        vec![
            (|_| (1.0, [0.0, 0.0]), [0.0, 0.0, 0.0]),
            (|p| (p[0], [1.0, 0.0]), [0.0, 0.0, 0.0]),
            (|p| (p[1], [0.0, 1.0]), [0.0, 0.0, 0.0]),
            (|p| (p[0] * p[0], [2.0 * p[0], 0.0]), [2.0, 0.0, 0.0]),
            (|p| (p[0] * p[1], [p[1], p[0]]), [0.0, 1.0, 0.0]),
            (|p| (p[1] * p[1], [0.0, 2.0 * p[1]]), [0.0, 0.0, 2.0]),
        ]
    }

    #[test]
    fn duality() {
        let b = basis();
        for k in 0..12 {
            for (a, v) in VERTICES.iter().enumerate() {
                let g = b.gradient(k, *v);
                let vals = [b.value(k, *v), g[0], g[1]];
                for d in 0..3 {
                    let expect = if 3 * a + d == k { 1.0 } else { 0.0 };
                    assert!((vals[d] - expect).abs() < 1e-12, "k={k} a={a} d={d}");
                }
            }
        }
    }

    #[test]
    fn edge_midpoint_constraints() {
        let b = basis();
        for k in 0..12 {
            for e in 0..4 {
                let n = EDGE_NORMALS[e];
                let gm = b.gradient(k, Q2_POINTS[4 + e]);
                let g1 = b.gradient(k, VERTICES[e]);
                let g2 = b.gradient(k, VERTICES[(e + 1) % 4]);
                let lhs = gm[0] * n[0] + gm[1] * n[1];
                let rhs = 0.5 * ((g1[0] + g2[0]) * n[0] + (g1[1] + g2[1]) * n[1]);
                assert!((lhs - rhs).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn value_dofs_partition_unity() {
        let b = basis();
        for &(x, y) in &[(0.3, -0.7), (-1.0, 0.5), (0.0, 0.0), (0.99, 0.12)] {
            let s: f64 = (0..4).map(|a| b.value(3 * a, [x, y])).sum();
            assert!((s - 1.0).abs() < 1e-13);
        }
    }

    #[test]
    fn reproduces_quadratics_pointwise() {
        for (f, _) in quadratics() {
            let d = UNIT.interpolate(f);
            for i in 0..5 {
                for j in 0..5 {
                    let p = [-1.0 + 0.5 * i as f64, -1.0 + 0.5 * j as f64];
                    assert!((UNIT.representative(&d, p) - f(p).0).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn discrete_gradient_exact_on_quadratics() {
        let geo = RectElement {
            origin: [0.3, -0.2],
            hx: 0.5,
            hy: 0.125,
        };
        for (f, _) in quadratics() {
            let d = geo.interpolate(f);
            let g = geo.discrete_gradient(&d);
            for (p, q) in Q2_POINTS.iter().enumerate() {
                let exact = f(geo.to_physical(*q)).1;
                assert!((g[2 * p] - exact[0]).abs() < 1e-12);
                assert!((g[2 * p + 1] - exact[1]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn discrete_gradient_of_cubic_averages_at_center() {
        let d = UNIT.interpolate(|p| (p[0].powi(3), [3.0 * p[0] * p[0], 0.0]));
        let g = UNIT.discrete_gradient(&d);
        assert!((g[16] - 3.0).abs() < 1e-13);
        assert!(g[17].abs() < 1e-13);
    }

    #[test]
    fn hessian_exact_on_quadratics() {
        for (f, h) in quadratics() {
            let d = UNIT.interpolate(f);
            for (xi, eta, _) in gauss_2d(3) {
                let r = UNIT.hessian_rows([xi, eta]);
                let val = |row: &Local12| (0..12).map(|k| row[k] * d[k]).sum::<f64>();
                assert!((val(&r[0]) - h[0]).abs() < 1e-12);
                assert!((val(&r[1]) - h[1]).abs() < 1e-12);
                assert!((val(&r[2]) - h[1]).abs() < 1e-12);
                assert!((val(&r[3]) - h[2]).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn laplacian_of_cubic_at_center_matches_q2_interpolant() {
        // Oracle: the Q2 field has vertex gradients (3, 0), midpoint gradients
        // from the representative and center value 3; differentiate it by hand.
        let d = UNIT.interpolate(|p| (p[0].powi(3), [3.0 * p[0] * p[0], 0.0]));
        let g = UNIT.discrete_gradient(&d);
        // ∂ξ of the Q2 interpolant at the center only sees the points (±1, 0).
        let expect = 0.5 * (g[2 * 5] - g[2 * 7]) + 0.5 * (g[2 * 6 + 1] - g[2 * 4 + 1]);
        let row = UNIT.laplacian_row([0.0, 0.0]);
        let got: f64 = (0..12).map(|k| row[k] * d[k]).sum();
        assert!((got - expect).abs() < 1e-13);
        // By symmetry the midpoint gradients on x = ±1 agree, so Δh vanishes.
        assert!(got.abs() < 1e-13);
    }

    #[test]
    fn bending_energy_of_x_squared() {
        let d = UNIT.interpolate(|p| (p[0] * p[0], [2.0 * p[0], 0.0]));
        let k = UNIT.bending_matrix();
        let v = SMatrix::<f64, 12, 1>::from_column_slice(&d);
        let e = (v.transpose() * k * v)[(0, 0)];
        assert!((e - 16.0).abs() < 1e-12);
    }

    #[test]
    fn bending_matrix_patch_test() {
        let m = build_rectangle_mesh([0.0, 0.0], [2.0, 1.0], 2).unwrap();
        let mu = vec![1.5; m.num_elements()];
        let a = assemble_bending_matrix(&m, &mu).unwrap();
        assert!(a.asymmetry() < 1e-10);
        // w = x² + 3xy - y² + affine: |D²w|² = 4 + 2·9 + 4 = 26.
        let f = |p: Point2| {
            (
                p[0] * p[0] + 3.0 * p[0] * p[1] - p[1] * p[1] + p[0] - 2.0,
                [2.0 * p[0] + 3.0 * p[1] + 1.0, 3.0 * p[0] - 2.0 * p[1]],
            )
        };
        let mut w = vec![0.0; 3 * m.num_nodes()];
        for (i, p) in m.nodes().iter().enumerate() {
            let (v, g) = f(*p);
            w[3 * i] = v;
            w[3 * i + 1] = g[0];
            w[3 * i + 2] = g[1];
        }
        let e = a.quadratic_form(&w);
        let exact = 1.5 * 26.0 * 2.0;
        assert!((e - exact).abs() < 1e-10 * exact);

        let mut affine = vec![0.0; 3 * m.num_nodes()];
        for (i, p) in m.nodes().iter().enumerate() {
            affine[3 * i] = 2.0 * p[0] - p[1] + 0.5;
            affine[3 * i + 1] = 2.0;
            affine[3 * i + 2] = -1.0;
        }
        assert!(a.mul_vec(&affine).iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn mu_scaling_is_linear() {
        let m = build_rectangle_mesh([0.0, 0.0], [1.0, 1.0], 1).unwrap();
        let a1 = assemble_bending_matrix(&m, &vec![1.0; 4]).unwrap();
        let a2 = assemble_bending_matrix(&m, &vec![2.0; 4]).unwrap();
        assert_eq!(a1.scaled(2.0), a2);
        assert!(matches!(
            assemble_bending_matrix(&m, &[1.0, 0.0, 1.0, 1.0]),
            Err(Error::NonPositive { .. })
        ));
    }

    #[test]
    fn lumped_products() {
        let m = build_rectangle_mesh([-1.0, -1.0], [1.0, 1.0], 0).unwrap();
        let one = lumped_inner_product(&m, |_, _| 1.0, |_, _| 1.0);
        assert!((one - 4.0).abs() < 1e-15);
        let x = |e: usize, a: usize| m.nodes()[m.elements()[e][a]][0];
        assert!((lumped_inner_product(&m, x, x) - 4.0).abs() < 1e-15);
    }

    #[test]
    fn lumped_mass_sums_to_area() {
        let m = build_rectangle_mesh([0.0, 0.0], [3.0, 1.0], 3).unwrap();
        assert!((lumped_mass(&m).iter().sum::<f64>() - 3.0).abs() < 1e-12);
    }
}
