//! One semi-implicit plate update: a linear solve for the increment in the
//! nodal tangent space of the isometry constraint, followed by the nodewise
//! obstacle projection of the split variable.
//!
//! Plate DOFs are node-major, 9 per node: `(y₁, y₂, y₃, ∂₁y₁, ∂₁y₂, ∂₁y₃,
//! ∂₂y₁, ∂₂y₂, ∂₂y₃)`, i.e. slot `9·node + 3·d + c` for derivative `d` of
//! component `c`.

use std::sync::Arc;

use nalgebra::{Matrix3, SMatrix};
use serde::{Deserialize, Serialize};

use crate::dkq::{element_geometries, Local12, RectElement};
use crate::error::{Error, Result};
use crate::mesh::QuadMesh;
use crate::quadrature::gauss_2d;
use crate::sparse::{Cholesky, CscMatrix, SparseLu, TripletBuilder};

pub const NODE_DOFS: usize = 9;

pub fn plate_dof(node: usize, d: usize, c: usize) -> usize {
    NODE_DOFS * node + 3 * d + c
}

pub type Vec3 = [f64; 3];

pub fn cross(a: Vec3, b: Vec3) -> Vec3 {
    [
        a[1] * b[2] - a[2] * b[1],
        a[2] * b[0] - a[0] * b[2],
        a[0] * b[1] - a[1] * b[0],
    ]
}

pub fn dot3(a: Vec3, b: Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub fn sub3(a: Vec3, b: Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub fn norm3(a: Vec3) -> f64 {
    dot3(a, a).sqrt()
}

/// Deformation `y` with nodal values and gradients.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateField {
    dofs: Vec<f64>,
}

impl PlateField {
    pub fn from_dofs(dofs: Vec<f64>) -> Self {
        assert_eq!(dofs.len() % NODE_DOFS, 0);
        PlateField { dofs }
    }

    /// `y = (x, 0)`, `∇y = [e₁, e₂]`.
    pub fn flat(mesh: &QuadMesh) -> Self {
        let mut dofs = vec![0.0; NODE_DOFS * mesh.num_nodes()];
        for (i, p) in mesh.nodes().iter().enumerate() {
            dofs[plate_dof(i, 0, 0)] = p[0];
            dofs[plate_dof(i, 0, 1)] = p[1];
            dofs[plate_dof(i, 1, 0)] = 1.0;
            dofs[plate_dof(i, 2, 1)] = 1.0;
        }
        PlateField { dofs }
    }

    /// Interpolates a smooth deformation given by value and the two partial
    /// derivatives.
    pub fn interpolate(mesh: &QuadMesh, f: impl Fn([f64; 2]) -> (Vec3, Vec3, Vec3)) -> Self {
        let mut dofs = vec![0.0; NODE_DOFS * mesh.num_nodes()];
        for (i, p) in mesh.nodes().iter().enumerate() {
            let (y, d1, d2) = f(*p);
            for c in 0..3 {
                dofs[plate_dof(i, 0, c)] = y[c];
                dofs[plate_dof(i, 1, c)] = d1[c];
                dofs[plate_dof(i, 2, c)] = d2[c];
            }
        }
        PlateField { dofs }
    }

    pub fn dofs(&self) -> &[f64] {
        &self.dofs
    }

    pub fn dofs_mut(&mut self) -> &mut [f64] {
        &mut self.dofs
    }

    pub fn num_nodes(&self) -> usize {
        self.dofs.len() / NODE_DOFS
    }

    pub fn position(&self, node: usize) -> Vec3 {
        let b = NODE_DOFS * node;
        [self.dofs[b], self.dofs[b + 1], self.dofs[b + 2]]
    }

    /// Columns `∂₁y`, `∂₂y` at a node.
    pub fn gradient(&self, node: usize) -> [Vec3; 2] {
        let b = NODE_DOFS * node;
        [
            [self.dofs[b + 3], self.dofs[b + 4], self.dofs[b + 5]],
            [self.dofs[b + 6], self.dofs[b + 7], self.dofs[b + 8]],
        ]
    }

    pub fn positions(&self) -> Vec<Vec3> {
        (0..self.num_nodes()).map(|i| self.position(i)).collect()
    }

    /// Local scalar DOFs of component `c` on element `e`.
    pub fn element_component(&self, mesh: &QuadMesh, e: usize, c: usize) -> Local12 {
        let el = mesh.elements()[e];
        let mut out = [0.0; 12];
        for a in 0..4 {
            for d in 0..3 {
                out[3 * a + d] = self.dofs[plate_dof(el[a], d, c)];
            }
        }
        out
    }

    pub fn is_finite(&self) -> bool {
        self.dofs.iter().all(|v| v.is_finite())
    }

    /// Applies `x ↦ Q x + shift` to values and `Q` to gradients.
    pub fn transformed(&self, q: &[[f64; 3]; 3], shift: Vec3) -> Self {
        let mut out = self.clone();
        for i in 0..self.num_nodes() {
            for d in 0..3 {
                let v: Vec3 = std::array::from_fn(|c| self.dofs[plate_dof(i, d, c)]);
                for r in 0..3 {
                    let t = if d == 0 { shift[r] } else { 0.0 };
                    out.dofs[plate_dof(i, d, r)] = dot3(q[r], v) + t;
                }
            }
        }
        out
    }
}

/// Nodewise isometry defect `‖GᵀG - I‖_F`.
pub fn nodal_isometry_defect(y: &PlateField, node: usize) -> f64 {
    let [a1, a2] = y.gradient(node);
    let g11 = dot3(a1, a1) - 1.0;
    let g22 = dot3(a2, a2) - 1.0;
    let g12 = dot3(a1, a2);
    (g11 * g11 + g22 * g22 + 2.0 * g12 * g12).sqrt()
}

pub fn isometry_defect(y: &PlateField) -> f64 {
    (0..y.num_nodes())
        .map(|i| nodal_isometry_defect(y, i))
        .fold(0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Obstacle {
    None,
    /// Admissible set `y₃ ≤ height`.
    HalfSpace {
        height: f64,
    },
    /// Admissible set: outside every ball.
    SphereUnion {
        centers: Vec<Vec3>,
        radius: f64,
    },
}

impl Obstacle {
    pub fn validate(&self) -> Result<()> {
        match self {
            Obstacle::None => Ok(()),
            Obstacle::HalfSpace { height } if height.is_finite() => Ok(()),
            Obstacle::HalfSpace { height } => Err(Error::InvalidInput(format!(
                "obstacle height {height} is not finite"
            ))),
            Obstacle::SphereUnion { centers, radius } => {
                if centers.is_empty() {
                    return Err(Error::InvalidInput(
                        "sphere obstacle needs at least one center".into(),
                    ));
                }
                if !(*radius > 0.0 && radius.is_finite()) {
                    return Err(Error::NonPositive {
                        name: "obstacle radius",
                        value: *radius,
                    });
                }
                Ok(())
            }
        }
    }

    /// Nodewise projection onto the admissible set.
    pub fn project(&self, p: Vec3) -> Vec3 {
        match self {
            Obstacle::None => p,
            Obstacle::HalfSpace { height } => [p[0], p[1], p[2].min(*height)],
            Obstacle::SphereUnion { centers, radius } => {
                // Closest violated sphere, measured by distance to its center.
                let mut best: Option<(f64, Vec3)> = None;
                for c in centers {
                    let d = norm3(sub3(p, *c));
                    if d < *radius && best.is_none_or(|(bd, _)| d < bd) {
                        best = Some((d, *c));
                    }
                }
                match best {
                    None => p,
                    Some((d, c)) => {
                        let dir = if d > 0.0 {
                            let v = sub3(p, c);
                            [v[0] / d, v[1] / d, v[2] / d]
                        } else {
                            [0.0, 0.0, 1.0]
                        };
                        [
                            c[0] + radius * dir[0],
                            c[1] + radius * dir[1],
                            c[2] + radius * dir[2],
                        ]
                    }
                }
            }
        }
    }

    /// How far `p` lies inside the forbidden region (0 when admissible).
    pub fn penetration(&self, p: Vec3) -> f64 {
        match self {
            Obstacle::None => 0.0,
            Obstacle::HalfSpace { height } => (p[2] - height).max(0.0),
            Obstacle::SphereUnion { centers, radius } => centers
                .iter()
                .map(|c| radius - norm3(sub3(p, *c)))
                .fold(0.0, f64::max),
        }
    }

    pub fn transformed(&self, q: &[[f64; 3]; 3], shift: Vec3) -> Option<Obstacle> {
        match self {
            Obstacle::None => Some(Obstacle::None),
            Obstacle::SphereUnion { centers, radius } => Some(Obstacle::SphereUnion {
                centers: centers
                    .iter()
                    .map(|c| std::array::from_fn(|r| dot3(q[r], *c) + shift[r]))
                    .collect(),
                radius: *radius,
            }),
            // A rotated half-space is no longer of this form.
            Obstacle::HalfSpace { .. } => None,
        }
    }
}

pub fn project_obstacle(y: &PlateField, obstacle: &Obstacle) -> Vec<Vec3> {
    (0..y.num_nodes())
        .map(|i| obstacle.project(y.position(i)))
        .collect()
}

pub fn max_penetration(y: &PlateField, obstacle: &Obstacle) -> f64 {
    (0..y.num_nodes())
        .map(|i| obstacle.penetration(y.position(i)))
        .fold(0.0, f64::max)
}

/// Which DOFs of a node are held at their current values.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FixMask {
    Free,
    ValuesOnly,
    All,
}

/// Per-element bending modulus and effective thermal coefficient.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PlateMaterial {
    pub mu_bar: Vec<f64>,
    pub alpha_bar: Vec<f64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SolverKind {
    /// Reduced SPD system on a nodal basis of the tangent space.
    #[default]
    NullSpace,
    /// Symmetric saddle-point system with nodal multipliers.
    SaddlePoint,
}

impl SolverKind {
    pub fn as_str(self) -> &'static str {
        match self {
            SolverKind::NullSpace => "null_space",
            SolverKind::SaddlePoint => "saddle_point",
        }
    }
}

impl std::str::FromStr for SolverKind {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "null_space" => Ok(SolverKind::NullSpace),
            "saddle_point" => Ok(SolverKind::SaddlePoint),
            other => Err(format!(
                "unknown solver `{other}` (expected null_space or saddle_point)"
            )),
        }
    }
}

/// Rows of the linearized isometry condition at a node acting on
/// `(∂₁v, ∂₂v)`: entries (1,1), (2,2) and (1,2) of `∇vᵀG + Gᵀ∇v`.
pub fn nodal_constraint_block(grad: [Vec3; 2]) -> [[f64; 6]; 3] {
    let [a1, a2] = grad;
    let mut b = [[0.0; 6]; 3];
    for c in 0..3 {
        b[0][c] = a1[c];
        b[1][3 + c] = a2[c];
        b[2][c] = a2[c];
        b[2][3 + c] = a1[c];
    }
    b
}

/// Orthonormal bases of the row space and the null space of a nodal block.
#[derive(Clone, Debug, PartialEq)]
pub struct NodalSpaces {
    pub rows: Vec<[f64; 6]>,
    pub null: Vec<[f64; 6]>,
    /// Smallest singular value of the block.
    pub sigma_min: f64,
}

impl NodalSpaces {
    pub fn degenerate(&self) -> bool {
        self.rows.len() < 3
    }
}

fn dot6(a: &[f64; 6], b: &[f64; 6]) -> f64 {
    (0..6).map(|k| a[k] * b[k]).sum()
}

/// Gram-Schmidt with pivoting on the largest remaining norm; vectors whose
/// residual falls below `tol` are dropped.
fn orthonormalize(candidates: &[[f64; 6]], basis: &mut Vec<[f64; 6]>, limit: usize, tol: f64) {
    let mut rest: Vec<[f64; 6]> = candidates.to_vec();
    while basis.len() < limit && !rest.is_empty() {
        for v in rest.iter_mut() {
            for q in basis.iter() {
                // Two passes keep orthogonality at round-off level.
                for _ in 0..2 {
                    let p = dot6(v, q);
                    for k in 0..6 {
                        v[k] -= p * q[k];
                    }
                }
            }
        }
        let (idx, norm) = rest
            .iter()
            .enumerate()
            .map(|(i, v)| (i, dot6(v, v).sqrt()))
            .fold((0, -1.0), |best, cur| if cur.1 > best.1 { cur } else { best });
        if norm <= tol {
            break;
        }
        let v = rest.swap_remove(idx);
        basis.push(std::array::from_fn(|k| v[k] / norm));
        // Subsequent candidates are re-orthogonalized against the full basis.
        let last = *basis.last().unwrap();
        for w in rest.iter_mut() {
            let p = dot6(w, &last);
            for k in 0..6 {
                w[k] -= p * last[k];
            }
        }
    }
}

/// Rank-revealing decomposition of the nodal constraint; singular values below
/// `1e-8` relative to the largest are treated as zero.
pub fn nodal_spaces(grad: [Vec3; 2]) -> NodalSpaces {
    let b = nodal_constraint_block(grad);
    let mut gram = Matrix3::zeros();
    for i in 0..3 {
        for j in 0..3 {
            gram[(i, j)] = dot6(&b[i], &b[j]);
        }
    }
    let eig = gram.symmetric_eigenvalues();
    let smax = eig.max().max(0.0).sqrt();
    let smin = eig.min().max(0.0).sqrt();
    let tol = 1e-8 * smax.max(f64::MIN_POSITIVE);
    let rank = eig.iter().filter(|&&l| l.max(0.0).sqrt() >= tol).count();
    let mut rows = Vec::with_capacity(3);
    orthonormalize(&b, &mut rows, rank, tol);
    let mut basis = rows.clone();
    let units: Vec<[f64; 6]> = (0..6)
        .map(|k| std::array::from_fn(|j| if j == k { 1.0 } else { 0.0 }))
        .collect();
    orthonormalize(&units, &mut basis, 6, 1e-12);
    let null = basis[rows.len()..].to_vec();
    NodalSpaces {
        rows,
        null,
        sigma_min: smin,
    }
}

/// Stacked constraint rows over all plate DOFs: three raw rows per node whose
/// gradients are not held fixed.
pub fn build_constraints(y: &PlateField, fix: &[FixMask]) -> CscMatrix {
    let n = y.num_nodes();
    let mut rows = 0;
    let mut t = TripletBuilder::new(3 * n, NODE_DOFS * n);
    for z in 0..n {
        if fix[z] == FixMask::All {
            continue;
        }
        let b = nodal_constraint_block(y.gradient(z));
        for r in 0..3 {
            for k in 0..6 {
                if b[r][k] != 0.0 {
                    t.push(rows + r, NODE_DOFS * z + 3 + k, b[r][k]);
                }
            }
        }
        rows += 3;
    }
    let full = t.build();
    let row_map: Vec<Option<usize>> = (0..3 * n).map(|r| (r < rows).then_some(r)).collect();
    let col_map: Vec<Option<usize>> = (0..NODE_DOFS * n).map(Some).collect();
    full.submatrix(&row_map, &col_map, rows, NODE_DOFS * n)
}

/// `max_z ‖B_z (∂₁v, ∂₂v)‖∞` for the nodes whose gradients are free.
pub fn constraint_residual(y: &PlateField, fix: &[FixMask], v: &[f64]) -> f64 {
    let mut worst = 0.0f64;
    for z in 0..y.num_nodes() {
        if fix[z] == FixMask::All {
            continue;
        }
        let b = nodal_constraint_block(y.gradient(z));
        let g: [f64; 6] = std::array::from_fn(|k| v[NODE_DOFS * z + 3 + k]);
        for row in &b {
            worst = worst.max(dot6(row, &g).abs());
        }
    }
    worst
}

/// Node-to-node adjacency through shared elements, sorted, including the node
/// itself.
#[derive(Clone, Debug)]
pub struct Adjacency {
    offsets: Vec<usize>,
    neighbors: Vec<usize>,
}

impl Adjacency {
    pub fn from_mesh(mesh: &QuadMesh) -> Self {
        let mut lists: Vec<Vec<usize>> = vec![Vec::new(); mesh.num_nodes()];
        for el in mesh.elements() {
            for &a in el {
                lists[a].extend_from_slice(el);
            }
        }
        let mut offsets = vec![0];
        let mut neighbors = Vec::new();
        for mut l in lists {
            l.sort_unstable();
            l.dedup();
            neighbors.extend_from_slice(&l);
            offsets.push(neighbors.len());
        }
        Adjacency { offsets, neighbors }
    }

    pub fn num_nodes(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn neighbors(&self, i: usize) -> &[usize] {
        &self.neighbors[self.offsets[i]..self.offsets[i + 1]]
    }

    pub fn range(&self, i: usize) -> std::ops::Range<usize> {
        self.offsets[i]..self.offsets[i + 1]
    }

    pub fn position(&self, i: usize, j: usize) -> usize {
        let r = self.range(i);
        self.offsets[i]
            + self.neighbors[r]
                .binary_search(&j)
                .expect("nodes are not adjacent")
    }

    pub fn len(&self) -> usize {
        self.neighbors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.neighbors.is_empty()
    }
}

type Block3 = [[f64; 3]; 3];

/// Matrices shared by all elements with the same side lengths.
#[derive(Clone, Debug)]
struct ElementData {
    hx: f64,
    hy: f64,
    vertex_laplacians: [Local12; 4],
    bending: SMatrix<f64, 12, 12>,
    mass: SMatrix<f64, 12, 12>,
    /// `D²h` rows at the 3×3 Gauss points with weights times the Jacobian.
    hessian_rows: Vec<(f64, [Local12; 4])>,
}

impl ElementData {
    fn new(g: &RectElement) -> Self {
        let det = 0.25 * g.hx * g.hy;
        ElementData {
            hx: g.hx,
            hy: g.hy,
            vertex_laplacians: g.vertex_laplacian_rows(),
            bending: g.bending_matrix(),
            mass: g.representative_mass(),
            hessian_rows: gauss_2d(3)
                .into_iter()
                .map(|(xi, eta, w)| (w * det, g.hessian_rows([xi, eta])))
                .collect(),
        }
    }
}

/// Scalar DKQ matrix stored as 3×3 node blocks over the adjacency.
#[derive(Clone, Debug)]
struct BlockMatrix {
    blocks: Vec<Block3>,
}

impl BlockMatrix {
    fn assemble(mesh: &QuadMesh, adj: &Adjacency, elements: &[SMatrix<f64, 12, 12>], coeff: &[f64]) -> Self {
        let mut blocks = vec![[[0.0; 3]; 3]; adj.len()];
        for (e, el) in mesh.elements().iter().enumerate() {
            let ke = &elements[e];
            for a in 0..4 {
                for b in 0..4 {
                    let blk = &mut blocks[adj.position(el[a], el[b])];
                    for d in 0..3 {
                        for f in 0..3 {
                            blk[d][f] += coeff[e] * ke[(3 * a + d, 3 * b + f)];
                        }
                    }
                }
            }
        }
        BlockMatrix { blocks }
    }

    /// Applies the matrix to every component of a plate field.
    fn apply_plate(&self, adj: &Adjacency, y: &[f64]) -> Vec<f64> {
        let n = adj.num_nodes();
        let mut out = vec![0.0; NODE_DOFS * n];
        for i in 0..n {
            for k in adj.range(i) {
                let j = adj.neighbors[k];
                let blk = &self.blocks[k];
                for d in 0..3 {
                    for f in 0..3 {
                        let v = blk[d][f];
                        if v == 0.0 {
                            continue;
                        }
                        for c in 0..3 {
                            out[plate_dof(i, d, c)] += v * y[plate_dof(j, f, c)];
                        }
                    }
                }
            }
        }
        out
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Per-step results.
#[derive(Clone, Debug)]
pub struct StepOutput {
    pub y: PlateField,
    pub s: Vec<Vec3>,
    /// Increment `y^{k+1} - y^k`.
    pub increment: Vec<f64>,
    pub functional_before: f64,
    pub functional_after: f64,
    pub functional_change: f64,
    /// `‖B v‖∞` with `v = increment / τ`.
    pub constraint_residual: f64,
    pub velocity_norm: f64,
    pub degenerate_nodes: usize,
}

impl StepOutput {
    pub fn descent_ok(&self) -> bool {
        self.functional_change <= 1e-12 * self.functional_before.abs().max(1e-300)
    }

    pub fn constraint_ok(&self) -> bool {
        self.constraint_residual <= 1e-10 * (1.0 + self.velocity_norm)
    }
}

/// Run-constant data of the plate step: bending matrices, lumped mass, the
/// vertex Laplacian rows and the fixed-DOF pattern.
pub struct PlateSolver {
    mesh: Arc<QuadMesh>,
    geometry: Vec<RectElement>,
    kinds: Vec<ElementData>,
    kind_of: Vec<usize>,
    adjacency: Adjacency,
    bending: BlockMatrix,
    lumped: Vec<f64>,
    mu_bar: Vec<f64>,
    alpha_bar: Vec<f64>,
    fix: Vec<FixMask>,
    epsilon: f64,
    kind: SolverKind,
    factor: Option<Cholesky>,
}

impl PlateSolver {
    pub fn new(
        mesh: Arc<QuadMesh>,
        material: &PlateMaterial,
        fix: Vec<FixMask>,
        epsilon: f64,
        kind: SolverKind,
    ) -> Result<Self> {
        let ne = mesh.num_elements();
        if material.mu_bar.len() != ne || material.alpha_bar.len() != ne {
            return Err(Error::MissingMaterial(format!(
                "plate coefficients given for {} of {ne} elements",
                material.mu_bar.len().min(material.alpha_bar.len())
            )));
        }
        if let Some(&bad) = material.mu_bar.iter().find(|&&m| !(m > 0.0 && m.is_finite())) {
            return Err(Error::NonPositive {
                name: "mu_bar",
                value: bad,
            });
        }
        if material.alpha_bar.iter().any(|a| !a.is_finite()) {
            return Err(Error::InvalidInput("alpha_bar must be finite".into()));
        }
        if !(epsilon > 0.0 && epsilon.is_finite()) {
            return Err(Error::NonPositive {
                name: "epsilon",
                value: epsilon,
            });
        }
        if fix.len() != mesh.num_nodes() {
            return Err(Error::InvalidInput("fix mask does not match the mesh".into()));
        }
        let geometry = element_geometries(&mesh)?;
        // Element data depends only on the side lengths.
        let mut kinds: Vec<ElementData> = Vec::new();
        let mut kind_of = Vec::with_capacity(ne);
        for g in &geometry {
            let idx = match kinds.iter().position(|k| k.hx == g.hx && k.hy == g.hy) {
                Some(i) => i,
                None => {
                    kinds.push(ElementData::new(g));
                    kinds.len() - 1
                }
            };
            kind_of.push(idx);
        }
        let bend_e: Vec<SMatrix<f64, 12, 12>> = kind_of.iter().map(|&k| kinds[k].bending).collect();
        let adjacency = Adjacency::from_mesh(&mesh);
        let bending = BlockMatrix::assemble(&mesh, &adjacency, &bend_e, &material.mu_bar);
        let lumped = crate::dkq::lumped_mass(&mesh);
        Ok(PlateSolver {
            mesh,
            geometry,
            kinds,
            kind_of,
            adjacency,
            bending,
            lumped,
            mu_bar: material.mu_bar.clone(),
            alpha_bar: material.alpha_bar.clone(),
            fix,
            epsilon,
            kind,
            factor: None,
        })
    }

    pub fn mesh(&self) -> &Arc<QuadMesh> {
        &self.mesh
    }

    pub fn fix(&self) -> &[FixMask] {
        &self.fix
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn kind(&self) -> SolverKind {
        self.kind
    }

    pub fn set_kind(&mut self, kind: SolverKind) {
        self.kind = kind;
    }

    pub fn geometry(&self) -> &[RectElement] {
        &self.geometry
    }

    /// Coupling load `(μ̄ Δh w · (∂₁y × ∂₂y), ᾱθ)_h` over all plate DOFs.
    pub fn coupling_load(&self, y: &PlateField, theta: &[f64]) -> Vec<f64> {
        let mesh = &self.mesh;
        let mut f = vec![0.0; y.dofs().len()];
        let normals: Vec<Vec3> = (0..y.num_nodes())
            .map(|z| {
                let [a1, a2] = y.gradient(z);
                cross(a1, a2)
            })
            .collect();
        for (e, el) in mesh.elements().iter().enumerate() {
            let coef = self.mu_bar[e] * self.alpha_bar[e];
            if coef == 0.0 {
                continue;
            }
            let w = 0.25 * self.geometry[e].area();
            for a in 0..4 {
                let z = el[a];
                let s = w * coef * theta[z];
                if s == 0.0 {
                    continue;
                }
                let b = normals[z];
                let lap = &self.kinds[self.kind_of[e]].vertex_laplacians[a];
                for (k, &l) in lap.iter().enumerate() {
                    let node = el[k / 3];
                    let d = k % 3;
                    for c in 0..3 {
                        f[plate_dof(node, d, c)] += s * l * b[c];
                    }
                }
            }
        }
        f
    }

    /// `(μ̄, (ᾱθ)²)_h`
    pub fn thermal_constant(&self, theta: &[f64]) -> f64 {
        let mesh = &self.mesh;
        let mut sum = 0.0;
        for (e, el) in mesh.elements().iter().enumerate() {
            let w = 0.25 * self.geometry[e].area() * self.mu_bar[e];
            for &z in el {
                let at = self.alpha_bar[e] * theta[z];
                sum += w * at * at;
            }
        }
        sum
    }

    /// `yᵀ A_b y` with the bending modulus.
    pub fn bending_quadratic(&self, y: &[f64]) -> f64 {
        dot(y, &self.bending.apply_plate(&self.adjacency, y))
    }

    /// `(μ̄D²h y, D²h y)` summed at the quadrature points, which avoids the
    /// cancellation of `yᵀA_b y` for nearly affine `y`.
    fn hessian_square(&self, y: &PlateField) -> f64 {
        let mut sum = 0.0;
        for e in 0..self.mesh.num_elements() {
            let kind = &self.kinds[self.kind_of[e]];
            let mut local_sum = 0.0;
            for c in 0..3 {
                let local = y.element_component(&self.mesh, e, c);
                for (w, rows) in &kind.hessian_rows {
                    for row in rows {
                        let v: f64 = (0..12).map(|k| row[k] * local[k]).sum();
                        local_sum += w * v * v;
                    }
                }
            }
            sum += self.mu_bar[e] * local_sum;
        }
        sum
    }

    /// Discrete bending energy
    /// `1/12 (μ̄D²h y, D²h y) - 2/12 (μ̄ᾱθ, Δh y·b)_h + 2/12 (μ̄, (ᾱθ)²)_h`.
    pub fn bending_energy(&self, y: &PlateField, theta: &[f64]) -> f64 {
        let f = self.coupling_load(y, theta);
        (self.hessian_square(y) - 2.0 * dot(y.dofs(), &f) + 2.0 * self.thermal_constant(theta)) / 12.0
    }

    fn penalty(&self, y: &[f64], s: &[Vec3]) -> f64 {
        let mut sum = 0.0;
        for (z, m) in self.lumped.iter().enumerate() {
            for c in 0..3 {
                let d = y[plate_dof(z, 0, c)] - s[z][c];
                sum += m * d * d;
            }
        }
        sum / self.epsilon
    }

    /// Semi-implicit functional with frozen normal field (through `load`) and
    /// split variable `s`.
    fn functional_with(&self, y: &[f64], s: &[Vec3], load: &[f64], thermal: f64) -> f64 {
        (0.5 * self.bending_quadratic(y) + 0.5 * self.penalty(y, s) - dot(y, load) + thermal) / 6.0
    }

    /// Semi-implicit functional `J[y; y_k, s, θ]`.
    pub fn functional(&self, y: &PlateField, y_k: &PlateField, s: &[Vec3], theta: &[f64]) -> f64 {
        let load = self.coupling_load(y_k, theta);
        self.functional_with(y.dofs(), s, &load, self.thermal_constant(theta))
    }

    /// `S x` with `S = A_b + ε⁻¹ M`.
    fn apply_system(&self, x: &[f64]) -> Vec<f64> {
        let mut out = self.bending.apply_plate(&self.adjacency, x);
        for (z, m) in self.lumped.iter().enumerate() {
            for c in 0..3 {
                out[plate_dof(z, 0, c)] += m / self.epsilon * x[plate_dof(z, 0, c)];
            }
        }
        out
    }

    /// Tangent basis per node: columns over the 9 nodal DOFs.
    fn tangent_bases(&self, y: &PlateField) -> (Vec<Vec<[f64; 9]>>, Vec<NodalSpaces>) {
        let n = y.num_nodes();
        let mut bases = Vec::with_capacity(n);
        let mut spaces = Vec::with_capacity(n);
        for z in 0..n {
            let sp = if self.fix[z] == FixMask::All {
                NodalSpaces {
                    rows: Vec::new(),
                    null: Vec::new(),
                    sigma_min: 1.0,
                }
            } else {
                nodal_spaces(y.gradient(z))
            };
            let mut cols: Vec<[f64; 9]> = Vec::new();
            match self.fix[z] {
                FixMask::All => {}
                mask => {
                    if mask == FixMask::Free {
                        for c in 0..3 {
                            let mut col = [0.0; 9];
                            col[c] = 1.0;
                            cols.push(col);
                        }
                    }
                    for v in &sp.null {
                        let mut col = [0.0; 9];
                        col[3..].copy_from_slice(v);
                        cols.push(col);
                    }
                }
            }
            bases.push(cols);
            spaces.push(sp);
        }
        (bases, spaces)
    }

    fn node_system_block(&self, k: usize, i: usize, j: usize) -> [[f64; 9]; 9] {
        let kb = &self.bending.blocks[k];
        let mut s = [[0.0; 9]; 9];
        for d in 0..3 {
            for f in 0..3 {
                for c in 0..3 {
                    s[3 * d + c][3 * f + c] = kb[d][f];
                }
            }
        }
        if i == j {
            let m = self.lumped[i] / self.epsilon;
            for c in 0..3 {
                s[c][c] += m;
            }
        }
        s
    }

    /// Reduced SPD system `TᵀST q = Tᵀr`.
    fn solve_null_space(&mut self, bases: &[Vec<[f64; 9]>], r: &[f64]) -> Result<Vec<f64>> {
        let n = bases.len();
        let mut offsets = vec![0usize; n + 1];
        for z in 0..n {
            offsets[z + 1] = offsets[z] + bases[z].len();
        }
        let dim = offsets[n];
        let mut col_ptr = vec![0usize; dim + 1];
        let mut row_idx = Vec::with_capacity(36 * self.adjacency.len());
        let mut values = Vec::with_capacity(36 * self.adjacency.len());
        let mut st = [[0.0; 9]; 6];
        for j in 0..n {
            let tj = &bases[j];
            if tj.is_empty() {
                continue;
            }
            let start = row_idx.len();
            let mut col_len = 0;
            // Column b of the reduced block column j lands at
            // start + b * col_len + (row offset among the neighbors).
            for k in self.adjacency.range(j) {
                col_len += bases[self.adjacency.neighbors[k]].len();
            }
            row_idx.resize(start + tj.len() * col_len, 0);
            values.resize(start + tj.len() * col_len, 0.0);
            let mut row_off = 0;
            for k in self.adjacency.range(j) {
                let i = self.adjacency.neighbors[k];
                let ti = &bases[i];
                if ti.is_empty() {
                    continue;
                }
                // S_ij = K_ij ⊗ I₃ with K_ij the transpose of the stored (j, i) block.
                let kb = &self.bending.blocks[k];
                for (b, t) in tj.iter().enumerate() {
                    let col = &mut st[b];
                    for d in 0..3 {
                        for c in 0..3 {
                            col[3 * d + c] = kb[0][d] * t[c] + kb[1][d] * t[3 + c] + kb[2][d] * t[6 + c];
                        }
                    }
                    if i == j {
                        let m = self.lumped[i] / self.epsilon;
                        for c in 0..3 {
                            col[c] += m * t[c];
                        }
                    }
                }
                for b in 0..tj.len() {
                    let base = start + b * col_len + row_off;
                    for (a, tv) in ti.iter().enumerate() {
                        row_idx[base + a] = offsets[i] + a;
                        values[base + a] = (0..9).map(|m| tv[m] * st[b][m]).sum::<f64>();
                    }
                }
                row_off += ti.len();
            }
            for b in 0..tj.len() {
                col_ptr[offsets[j] + b + 1] = start + (b + 1) * col_len;
            }
        }
        let reduced = CscMatrix::from_raw(dim, dim, col_ptr, row_idx, values);
        match self.factor.as_mut() {
            Some(f) => f.refactor(&reduced)?,
            None => self.factor = Some(Cholesky::new(&reduced)?),
        }
        let mut rhs = vec![0.0; dim];
        for z in 0..n {
            for (a, t) in bases[z].iter().enumerate() {
                rhs[offsets[z] + a] = (0..9).map(|m| t[m] * r[NODE_DOFS * z + m]).sum();
            }
        }
        let q = self.factor.as_ref().unwrap().solve(&rhs);
        let mut u = vec![0.0; r.len()];
        for z in 0..n {
            for (a, t) in bases[z].iter().enumerate() {
                let qa = q[offsets[z] + a];
                for m in 0..9 {
                    u[NODE_DOFS * z + m] += t[m] * qa;
                }
            }
        }
        Ok(u)
    }

    /// Saddle-point system over the non-fixed DOFs with nodal multipliers.
    fn solve_saddle_point(&self, spaces: &[NodalSpaces], r: &[f64]) -> Result<Vec<f64>> {
        let n = spaces.len();
        let mut index = vec![None; NODE_DOFS * n];
        let mut count = 0;
        for z in 0..n {
            let first = match self.fix[z] {
                FixMask::Free => 0,
                FixMask::ValuesOnly => 3,
                FixMask::All => continue,
            };
            for m in first..9 {
                index[NODE_DOFS * z + m] = Some(count);
                count += 1;
            }
        }
        let mut rows = 0;
        let mut mult_offsets = vec![0usize; n];
        for z in 0..n {
            mult_offsets[z] = count + rows;
            if self.fix[z] != FixMask::All {
                rows += spaces[z].rows.len();
            }
        }
        let dim = count + rows;
        let mut t = TripletBuilder::new(dim, dim);
        for i in 0..n {
            for k in self.adjacency.range(i) {
                let j = self.adjacency.neighbors[k];
                let s = self.node_system_block(k, i, j);
                for a in 0..9 {
                    let Some(ra) = index[NODE_DOFS * i + a] else {
                        continue;
                    };
                    for b in 0..9 {
                        if s[a][b] == 0.0 {
                            continue;
                        }
                        if let Some(cb) = index[NODE_DOFS * j + b] {
                            t.push(ra, cb, s[a][b]);
                        }
                    }
                }
            }
        }
        for z in 0..n {
            if self.fix[z] == FixMask::All {
                continue;
            }
            for (l, row) in spaces[z].rows.iter().enumerate() {
                let m = mult_offsets[z] + l;
                for k in 0..6 {
                    if let Some(c) = index[NODE_DOFS * z + 3 + k] {
                        if row[k] != 0.0 {
                            t.push(m, c, row[k]);
                            t.push(c, m, row[k]);
                        }
                    }
                }
            }
        }
        let kkt = t.build();
        let mut rhs = vec![0.0; dim];
        for (g, slot) in index.iter().enumerate() {
            if let Some(i) = slot {
                rhs[*i] = r[g];
            }
        }
        let sol = SparseLu::new(&kkt)
            .map_err(|e| Error::Solver(format!("{e}; {rows} constraint rows on {count} unknowns")))?
            .solve(&rhs);
        let mut u = vec![0.0; r.len()];
        for (g, slot) in index.iter().enumerate() {
            if let Some(i) = slot {
                u[g] = sol[*i];
            }
        }
        Ok(u)
    }

    /// One plate update with time step `tau`.
    pub fn step(
        &mut self,
        y: &PlateField,
        s: &[Vec3],
        theta: &[f64],
        tau: f64,
        obstacle: &Obstacle,
    ) -> Result<StepOutput> {
        if !(tau > 0.0 && tau.is_finite()) {
            return Err(Error::NonPositive {
                name: "tau",
                value: tau,
            });
        }
        let n = self.mesh.num_nodes();
        if y.num_nodes() != n || s.len() != n || theta.len() != n {
            return Err(Error::InvalidInput("plate state does not match the mesh".into()));
        }
        let load = self.coupling_load(y, theta);
        let thermal = self.thermal_constant(theta);
        // r = f + ε⁻¹ M s - S y
        let mut r = self.apply_system(y.dofs());
        for v in r.iter_mut() {
            *v = -*v;
        }
        for (i, f) in load.iter().enumerate() {
            r[i] += f;
        }
        for (z, m) in self.lumped.iter().enumerate() {
            for c in 0..3 {
                r[plate_dof(z, 0, c)] += m / self.epsilon * s[z][c];
            }
        }
        let (bases, spaces) = self.tangent_bases(y);
        let degenerate_nodes = spaces
            .iter()
            .zip(&self.fix)
            .filter(|(sp, f)| **f != FixMask::All && sp.degenerate())
            .count();
        if degenerate_nodes > 0 {
            log::warn!("{degenerate_nodes} node(s) with rank-deficient deformation gradient");
        }
        let u = match self.kind {
            SolverKind::NullSpace => self.solve_null_space(&bases, &r)?,
            SolverKind::SaddlePoint => self.solve_saddle_point(&spaces, &r)?,
        };
        if let Some(i) = u.iter().position(|v| !v.is_finite()) {
            return Err(Error::Solver(format!("non-finite increment at DOF {i}")));
        }
        let mut next = y.clone();
        for (dst, du) in next.dofs.iter_mut().zip(&u) {
            *dst += du;
        }
        let v: Vec<f64> = u.iter().map(|x| x / tau).collect();
        let constraint_residual = constraint_residual(y, &self.fix, &v);
        let velocity_norm = v.iter().fold(0.0f64, |m, x| m.max(x.abs()));
        let functional_before = self.functional_with(y.dofs(), s, &load, thermal);
        // J is quadratic, so the change is `½uᵀSu - uᵀr`; evaluating it this
        // way avoids subtracting two large sums near stationarity.
        let su = self.apply_system(&u);
        let functional_change = (0.5 * dot(&u, &su) - dot(&u, &r)) / 6.0;
        let s_next = project_obstacle(&next, obstacle);
        Ok(StepOutput {
            y: next,
            s: s_next,
            increment: u,
            functional_before,
            functional_after: functional_before + functional_change,
            functional_change,
            constraint_residual,
            velocity_norm,
            degenerate_nodes,
        })
    }

    /// `‖Δ‖_{L²}` of the reduced-cubic representative plus `‖D²h Δ‖_{L²}` for a
    /// plate-DOF difference `Δ`.
    pub fn stationarity_norm(&self, diff: &[f64]) -> f64 {
        let field = PlateField::from_dofs(diff.to_vec());
        let (mut l2, mut h2) = (0.0, 0.0);
        for e in 0..self.mesh.num_elements() {
            let kind = &self.kinds[self.kind_of[e]];
            for c in 0..3 {
                let local = field.element_component(&self.mesh, e, c);
                let d = SMatrix::<f64, 12, 1>::from_column_slice(&local);
                l2 += (d.transpose() * kind.mass * d)[(0, 0)];
                for (w, rows) in &kind.hessian_rows {
                    for row in rows {
                        let v: f64 = (0..12).map(|k| row[k] * local[k]).sum();
                        h2 += w * v * v;
                    }
                }
            }
        }
        l2.max(0.0).sqrt() + h2.sqrt()
    }

    /// Stationarity test on two consecutive iterates.
    pub fn check_stationary(&self, y_next: &PlateField, y_prev: &PlateField, tol: f64) -> bool {
        let diff: Vec<f64> = y_next
            .dofs()
            .iter()
            .zip(y_prev.dofs())
            .map(|(a, b)| a - b)
            .collect();
        self.stationarity_norm(&diff) <= tol
    }
}
