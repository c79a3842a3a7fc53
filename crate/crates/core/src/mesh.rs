//! Quadrilateral meshes of rectangular and composite parametric domains.
//!
//! Every mesh produced here is a (possibly trimmed) tensor-product grid: the
//! domain is a union of axis-aligned rectangles, mesh lines pass through every
//! region interface, and each grid segment between two interfaces is split into
//! equal parts no longer than the target spacing. Node, edge and element
//! numbering is a deterministic function of the construction order.

use std::collections::BTreeMap;
use std::fmt;
use std::io::Write;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub type Point2 = [f64; 2];

/// Relative tolerance used to merge grid coordinates and match predicates.
const GEOM_TOL: f64 = 1e-10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BoundaryTag {
    Dirichlet,
    Robin,
    Insulated,
}

impl BoundaryTag {
    pub fn as_str(self) -> &'static str {
        match self {
            BoundaryTag::Dirichlet => "dirichlet",
            BoundaryTag::Robin => "robin",
            BoundaryTag::Insulated => "insulated",
        }
    }
}

/// Axis-aligned rectangle `[lower, upper]`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Rect {
    pub lower: Point2,
    pub upper: Point2,
}

impl Rect {
    pub fn new(lower: Point2, upper: Point2) -> Self {
        Rect { lower, upper }
    }

    pub fn width(&self) -> f64 {
        self.upper[0] - self.lower[0]
    }

    pub fn height(&self) -> f64 {
        self.upper[1] - self.lower[1]
    }

    pub fn area(&self) -> f64 {
        self.width() * self.height()
    }

    pub fn contains(&self, p: Point2) -> bool {
        p[0] >= self.lower[0] && p[0] <= self.upper[0] && p[1] >= self.lower[1] && p[1] <= self.upper[1]
    }

    pub fn center(&self) -> Point2 {
        [
            0.5 * (self.lower[0] + self.upper[0]),
            0.5 * (self.lower[1] + self.upper[1]),
        ]
    }

    fn check(&self) -> Result<()> {
        let ok = |v: f64| v.is_finite();
        if !(ok(self.lower[0]) && ok(self.lower[1]) && ok(self.upper[0]) && ok(self.upper[1]))
            || self.width() <= 0.0
            || self.height() <= 0.0
        {
            return Err(Error::DegenerateRectangle {
                lower: self.lower,
                upper: self.upper,
            });
        }
        Ok(())
    }
}

/// A named material region.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub name: String,
    pub rect: Rect,
}

/// Named rectangles, each carrying a material region id (its position in the list).
///
/// The union of the rectangles is the parametric domain; rectangles may only
/// share edges.
#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct RegionSpec {
    pub regions: Vec<Region>,
}

impl RegionSpec {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with(mut self, name: impl Into<String>, rect: Rect) -> Self {
        self.regions.push(Region {
            name: name.into(),
            rect,
        });
        self
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Edge {
    /// End points, oriented counterclockwise with respect to `elements[0]`.
    pub nodes: [usize; 2],
    pub elements: [usize; 2],
    /// Number of adjacent elements (1 on the boundary, 2 inside).
    pub valence: u8,
}

impl Edge {
    pub fn is_boundary(&self) -> bool {
        self.valence == 1
    }
}

#[derive(Clone, Debug)]
pub struct QuadMesh {
    nodes: Vec<Point2>,
    elements: Vec<[usize; 4]>,
    edges: Vec<Edge>,
    element_edges: Vec<[usize; 4]>,
    boundary_tags: BTreeMap<usize, BoundaryTag>,
    region_tags: Vec<usize>,
    region_names: Vec<String>,
}

impl QuadMesh {
    /// Assembles a mesh from raw connectivity, derives the edge table, tags every
    /// boundary edge `insulated` and validates all invariants.
    pub fn from_parts(
        nodes: Vec<Point2>,
        elements: Vec<[usize; 4]>,
        region_tags: Vec<usize>,
        region_names: Vec<String>,
    ) -> Result<Self> {
        if region_tags.len() != elements.len() {
            return Err(Error::InvalidMesh("region tags do not cover all elements".into()));
        }
        if let Some(&r) = region_tags.iter().find(|&&r| r >= region_names.len()) {
            return Err(Error::InvalidMesh(format!("region id {r} has no name")));
        }
        let (edges, element_edges) = build_edges(nodes.len(), &elements)?;
        let boundary_tags = edges
            .iter()
            .enumerate()
            .filter(|(_, e)| e.is_boundary())
            .map(|(i, _)| (i, BoundaryTag::Insulated))
            .collect();
        let mesh = QuadMesh {
            nodes,
            elements,
            edges,
            element_edges,
            boundary_tags,
            region_tags,
            region_names,
        };
        mesh.validate()?;
        Ok(mesh)
    }

    pub fn nodes(&self) -> &[Point2] {
        &self.nodes
    }

    pub fn elements(&self) -> &[[usize; 4]] {
        &self.elements
    }

    pub fn edges(&self) -> &[Edge] {
        &self.edges
    }

    pub fn element_edges(&self) -> &[[usize; 4]] {
        &self.element_edges
    }

    pub fn num_nodes(&self) -> usize {
        self.nodes.len()
    }

    pub fn num_elements(&self) -> usize {
        self.elements.len()
    }

    pub fn boundary_tags(&self) -> &BTreeMap<usize, BoundaryTag> {
        &self.boundary_tags
    }

    pub fn boundary_tag(&self, edge: usize) -> Option<BoundaryTag> {
        self.boundary_tags.get(&edge).copied()
    }

    pub fn region_tags(&self) -> &[usize] {
        &self.region_tags
    }

    pub fn region_names(&self) -> &[String] {
        &self.region_names
    }

    pub fn region_id(&self, name: &str) -> Option<usize> {
        self.region_names.iter().position(|n| n == name)
    }

    pub fn element_region_name(&self, element: usize) -> &str {
        &self.region_names[self.region_tags[element]]
    }

    pub fn boundary_edges(&self) -> impl Iterator<Item = usize> + '_ {
        self.boundary_tags.keys().copied()
    }

    pub fn edges_with_tag(&self, tag: BoundaryTag) -> impl Iterator<Item = usize> + '_ {
        self.boundary_tags
            .iter()
            .filter(move |(_, t)| **t == tag)
            .map(|(e, _)| *e)
    }

    pub fn edge_midpoint(&self, edge: usize) -> Point2 {
        let [a, b] = self.edges[edge].nodes;
        let (pa, pb) = (self.nodes[a], self.nodes[b]);
        [0.5 * (pa[0] + pb[0]), 0.5 * (pa[1] + pb[1])]
    }

    pub fn edge_length(&self, edge: usize) -> f64 {
        let [a, b] = self.edges[edge].nodes;
        let (pa, pb) = (self.nodes[a], self.nodes[b]);
        ((pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2)).sqrt()
    }

    /// Outward unit normal of a boundary edge (counterclockwise orientation).
    pub fn edge_normal(&self, edge: usize) -> Point2 {
        let [a, b] = self.edges[edge].nodes;
        let (pa, pb) = (self.nodes[a], self.nodes[b]);
        let (dx, dy) = (pb[0] - pa[0], pb[1] - pa[1]);
        let len = (dx * dx + dy * dy).sqrt();
        [dy / len, -dx / len]
    }

    pub fn element_centroid(&self, element: usize) -> Point2 {
        let mut c = [0.0; 2];
        for &n in &self.elements[element] {
            c[0] += 0.25 * self.nodes[n][0];
            c[1] += 0.25 * self.nodes[n][1];
        }
        c
    }

    pub fn element_area(&self, element: usize) -> f64 {
        let p: Vec<Point2> = self.elements[element].iter().map(|&n| self.nodes[n]).collect();
        let mut a = 0.0;
        for i in 0..4 {
            let (p0, p1) = (p[i], p[(i + 1) % 4]);
            a += p0[0] * p1[1] - p1[0] * p0[1];
        }
        0.5 * a
    }

    /// Returns the element as a rectangle if it is axis aligned with its first
    /// node at the lower left corner.
    pub fn element_rect(&self, element: usize) -> Option<Rect> {
        let [n0, n1, n2, n3] = self.elements[element];
        let (p0, p1, p2, p3) = (self.nodes[n0], self.nodes[n1], self.nodes[n2], self.nodes[n3]);
        let hx = p1[0] - p0[0];
        let hy = p3[1] - p0[1];
        let scale = hx.abs().max(hy.abs());
        let close = |a: f64, b: f64| (a - b).abs() <= GEOM_TOL * scale;
        let ok = hx > 0.0
            && hy > 0.0
            && close(p1[1], p0[1])
            && close(p3[0], p0[0])
            && close(p2[0], p1[0])
            && close(p2[1], p3[1]);
        ok.then(|| Rect::new(p0, p2))
    }

    pub fn bounding_box(&self) -> Rect {
        let mut lower = [f64::INFINITY; 2];
        let mut upper = [f64::NEG_INFINITY; 2];
        for p in &self.nodes {
            for k in 0..2 {
                lower[k] = lower[k].min(p[k]);
                upper[k] = upper[k].max(p[k]);
            }
        }
        Rect::new(lower, upper)
    }

    /// Largest element extent along each axis.
    pub fn max_spacing(&self) -> [f64; 2] {
        let mut h = [0.0f64; 2];
        for el in &self.elements {
            let mut lo = [f64::INFINITY; 2];
            let mut hi = [f64::NEG_INFINITY; 2];
            for &n in el {
                for k in 0..2 {
                    lo[k] = lo[k].min(self.nodes[n][k]);
                    hi[k] = hi[k].max(self.nodes[n][k]);
                }
            }
            for k in 0..2 {
                h[k] = h[k].max(hi[k] - lo[k]);
            }
        }
        h
    }

    /// Largest element diameter.
    pub fn mesh_size(&self) -> f64 {
        let [hx, hy] = self.max_spacing();
        hx.max(hy)
    }

    pub fn domain_area(&self) -> f64 {
        (0..self.elements.len()).map(|e| self.element_area(e)).sum()
    }

    /// Nodes lying on any edge with the given tag.
    pub fn nodes_on_edges(&self, edges: impl IntoIterator<Item = usize>) -> Vec<usize> {
        let mut on = vec![false; self.nodes.len()];
        for e in edges {
            for &n in &self.edges[e].nodes {
                on[n] = true;
            }
        }
        on.iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect()
    }

    /// Nodes belonging to elements of the given region.
    pub fn nodes_in_region(&self, region: usize) -> Vec<usize> {
        let mut on = vec![false; self.nodes.len()];
        for (e, el) in self.elements.iter().enumerate() {
            if self.region_tags[e] == region {
                for &n in el {
                    on[n] = true;
                }
            }
        }
        on.iter()
            .enumerate()
            .filter(|(_, &b)| b)
            .map(|(i, _)| i)
            .collect()
    }

    /// First element (in index order) whose closure contains `p`.
    pub fn locate(&self, p: Point2) -> Option<usize> {
        (0..self.elements.len()).find(|&e| match self.element_rect(e) {
            Some(r) => {
                let tol = GEOM_TOL * r.width().max(r.height());
                p[0] >= r.lower[0] - tol
                    && p[0] <= r.upper[0] + tol
                    && p[1] >= r.lower[1] - tol
                    && p[1] <= r.upper[1] + tol
            }
            None => false,
        })
    }

    /// Node closest to `p`.
    pub fn nearest_node(&self, p: Point2) -> usize {
        let d2 = |q: &Point2| (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2);
        let mut best = 0;
        for (i, q) in self.nodes.iter().enumerate() {
            if d2(q) < d2(&self.nodes[best]) {
                best = i;
            }
        }
        best
    }

    /// Checks orientation, conformity and tag coverage.
    pub fn validate(&self) -> Result<()> {
        for (e, el) in self.elements.iter().enumerate() {
            if el.iter().any(|&n| n >= self.nodes.len()) {
                return Err(Error::InvalidMesh(format!(
                    "element {e} references a missing node"
                )));
            }
            for i in 0..4 {
                let p = self.nodes[el[i]];
                let next = self.nodes[el[(i + 1) % 4]];
                let prev = self.nodes[el[(i + 3) % 4]];
                let det = (next[0] - p[0]) * (prev[1] - p[1]) - (next[1] - p[1]) * (prev[0] - p[0]);
                if !(det > 0.0) {
                    return Err(Error::InvalidMesh(format!(
                        "element {e} has non-positive Jacobian at corner {i}"
                    )));
                }
            }
        }
        // A hanging node sits strictly inside an edge that only one element sees.
        let boundary: Vec<usize> = (0..self.edges.len())
            .filter(|&i| self.edges[i].is_boundary())
            .collect();
        let mut used = vec![false; self.nodes.len()];
        for el in &self.elements {
            for &n in el {
                used[n] = true;
            }
        }
        for &e in &boundary {
            let [a, b] = self.edges[e].nodes;
            let (pa, pb) = (self.nodes[a], self.nodes[b]);
            let len2 = (pb[0] - pa[0]).powi(2) + (pb[1] - pa[1]).powi(2);
            for (n, p) in self.nodes.iter().enumerate() {
                if n == a || n == b || !used[n] {
                    continue;
                }
                let t = ((p[0] - pa[0]) * (pb[0] - pa[0]) + (p[1] - pa[1]) * (pb[1] - pa[1])) / len2;
                if t <= GEOM_TOL || t >= 1.0 - GEOM_TOL {
                    continue;
                }
                let q = [pa[0] + t * (pb[0] - pa[0]), pa[1] + t * (pb[1] - pa[1])];
                if (q[0] - p[0]).powi(2) + (q[1] - p[1]).powi(2) <= GEOM_TOL * GEOM_TOL * len2 {
                    return Err(Error::InvalidMesh(format!("hanging node {n} on edge {e}")));
                }
            }
        }
        if self.boundary_tags.len() != boundary.len()
            || boundary.iter().any(|e| !self.boundary_tags.contains_key(e))
        {
            return Err(Error::InvalidMesh(
                "boundary tags do not partition the boundary".into(),
            ));
        }
        Ok(())
    }

    /// Plain-text listing: a `nodes elements` header, then `index x y` per node
    /// and `index n0 n1 n2 n3` per element.
    pub fn write_dump<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{} {}", self.nodes.len(), self.elements.len())?;
        for (i, p) in self.nodes.iter().enumerate() {
            writeln!(w, "{i} {:?} {:?}", p[0], p[1])?;
        }
        for (i, el) in self.elements.iter().enumerate() {
            writeln!(w, "{i} {} {} {} {}", el[0], el[1], el[2], el[3])?;
        }
        Ok(())
    }
}

fn build_edges(num_nodes: usize, elements: &[[usize; 4]]) -> Result<(Vec<Edge>, Vec<[usize; 4]>)> {
    let mut lookup: BTreeMap<(usize, usize), usize> = BTreeMap::new();
    let mut edges: Vec<Edge> = Vec::new();
    let mut element_edges = Vec::with_capacity(elements.len());
    for (e, el) in elements.iter().enumerate() {
        let mut local = [0usize; 4];
        for i in 0..4 {
            let (a, b) = (el[i], el[(i + 1) % 4]);
            if a >= num_nodes || b >= num_nodes {
                return Err(Error::InvalidMesh(format!(
                    "element {e} references a missing node"
                )));
            }
            if a == b {
                return Err(Error::InvalidMesh(format!("element {e} has a collapsed edge")));
            }
            let key = (a.min(b), a.max(b));
            let idx = match lookup.get(&key) {
                Some(&idx) => {
                    let edge = &mut edges[idx];
                    if edge.valence >= 2 {
                        return Err(Error::InvalidMesh(format!(
                            "edge ({a}, {b}) shared by more than two elements"
                        )));
                    }
                    if edge.nodes != [b, a] {
                        return Err(Error::InvalidMesh(format!(
                            "inconsistent orientation across edge ({a}, {b})"
                        )));
                    }
                    edge.elements[1] = e;
                    edge.valence = 2;
                    idx
                }
                None => {
                    edges.push(Edge {
                        nodes: [a, b],
                        elements: [e, e],
                        valence: 1,
                    });
                    lookup.insert(key, edges.len() - 1);
                    edges.len() - 1
                }
            };
            local[i] = idx;
        }
        element_edges.push(local);
    }
    Ok((edges, element_edges))
}

/// Builds a conforming grid from per-axis coordinates, keeping the cells for
/// which `classify` returns a region id.
fn tensor_mesh(
    xs: &[f64],
    ys: &[f64],
    region_names: Vec<String>,
    mut classify: impl FnMut(Point2) -> Result<Option<usize>>,
) -> Result<QuadMesh> {
    let (nx, ny) = (xs.len() - 1, ys.len() - 1);
    let mut cell_region = vec![None; nx * ny];
    let mut node_used = vec![false; (nx + 1) * (ny + 1)];
    let grid = |i: usize, j: usize| j * (nx + 1) + i;
    for j in 0..ny {
        for i in 0..nx {
            let c = [0.5 * (xs[i] + xs[i + 1]), 0.5 * (ys[j] + ys[j + 1])];
            if let Some(r) = classify(c)? {
                cell_region[j * nx + i] = Some(r);
                for (a, b) in [(i, j), (i + 1, j), (i + 1, j + 1), (i, j + 1)] {
                    node_used[grid(a, b)] = true;
                }
            }
        }
    }
    let mut renumber = vec![usize::MAX; node_used.len()];
    let mut nodes = Vec::new();
    for j in 0..=ny {
        for i in 0..=nx {
            if node_used[grid(i, j)] {
                renumber[grid(i, j)] = nodes.len();
                nodes.push([xs[i], ys[j]]);
            }
        }
    }
    let mut elements = Vec::new();
    let mut region_tags = Vec::new();
    for j in 0..ny {
        for i in 0..nx {
            if let Some(r) = cell_region[j * nx + i] {
                elements.push([
                    renumber[grid(i, j)],
                    renumber[grid(i + 1, j)],
                    renumber[grid(i + 1, j + 1)],
                    renumber[grid(i, j + 1)],
                ]);
                region_tags.push(r);
            }
        }
    }
    if elements.is_empty() {
        return Err(Error::InvalidMesh("mesh has no elements".into()));
    }
    QuadMesh::from_parts(nodes, elements, region_tags, region_names)
}

fn uniform_coords(lo: f64, hi: f64, n: usize) -> Vec<f64> {
    (0..=n)
        .map(|i| {
            if i == n {
                hi
            } else {
                lo + (hi - lo) * i as f64 / n as f64
            }
        })
        .collect()
}

/// Uniformly refined rectangle: `4^refinements` congruent elements.
pub fn build_rectangle_mesh(lower: Point2, upper: Point2, refinements: u32) -> Result<QuadMesh> {
    Rect::new(lower, upper).check()?;
    if refinements > 12 {
        return Err(Error::InvalidInput(format!(
            "refinement level {refinements} is too large"
        )));
    }
    let n = 1usize << refinements;
    let xs = uniform_coords(lower[0], upper[0], n);
    let ys = uniform_coords(lower[1], upper[1], n);
    tensor_mesh(&xs, &ys, vec!["default".to_string()], |_| Ok(Some(0)))
}

/// Breakpoints along one axis: domain ends plus region interfaces, each gap
/// split into `ceil(len / h)` equal parts.
fn graded_axis(lo: f64, hi: f64, interfaces: &[f64], h: f64, axis: &str) -> Result<Vec<f64>> {
    let scale = (hi - lo).abs();
    let tol = GEOM_TOL * scale;
    let mut pts = vec![lo, hi];
    for &v in interfaces {
        if v < lo - tol || v > hi + tol {
            return Err(Error::RegionNotAlignable(format!(
                "{axis} = {v} lies outside the mesh extent [{lo}, {hi}]"
            )));
        }
        pts.push(v.clamp(lo, hi));
    }
    pts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let mut merged: Vec<f64> = Vec::new();
    for v in pts {
        match merged.last() {
            Some(&last) if (v - last).abs() <= tol => {}
            Some(&last) if v - last < 1e-6 * h => {
                return Err(Error::RegionNotAlignable(format!(
                    "{axis} interfaces {last} and {v} are closer than the mesh can resolve"
                )));
            }
            _ => merged.push(v),
        }
    }
    let mut coords = vec![merged[0]];
    for w in merged.windows(2) {
        let n = ((w[1] - w[0]) / h - 1e-9).ceil().max(1.0) as usize;
        let seg = uniform_coords(w[0], w[1], n);
        coords.extend_from_slice(&seg[1..]);
    }
    Ok(coords)
}

/// Rebuilds `mesh` with grid lines inserted at every region interface and tags
/// each element with the region containing it. Cells outside every region are
/// dropped, so the resulting domain is the union of the regions.
pub fn snap_region_mesh(mesh: &QuadMesh, regions: &RegionSpec) -> Result<QuadMesh> {
    if regions.is_empty() {
        let names = vec!["default".to_string()];
        return QuadMesh::from_parts(
            mesh.nodes.clone(),
            mesh.elements.clone(),
            vec![0; mesh.elements.len()],
            names,
        )
        .map(|m| m.with_tags_from(mesh));
    }
    let bbox = mesh.bounding_box();
    let h = mesh.max_spacing();
    build_region_mesh(bbox, regions, h)
}

/// Region-aligned mesh of `extent` with target spacing `h` along each axis.
pub fn build_region_mesh(extent: Rect, regions: &RegionSpec, h: [f64; 2]) -> Result<QuadMesh> {
    extent.check()?;
    if !(h[0] > 0.0 && h[1] > 0.0) {
        return Err(Error::InvalidInput("mesh spacing must be positive".into()));
    }
    let mut names: Vec<String> = Vec::new();
    for r in &regions.regions {
        r.rect.check()?;
        if names.contains(&r.name) {
            return Err(Error::InvalidInput(format!("duplicate region name `{}`", r.name)));
        }
        names.push(r.name.clone());
    }
    if names.is_empty() {
        names.push("default".into());
    }
    let xi: Vec<f64> = regions
        .regions
        .iter()
        .flat_map(|r| [r.rect.lower[0], r.rect.upper[0]])
        .collect();
    let yi: Vec<f64> = regions
        .regions
        .iter()
        .flat_map(|r| [r.rect.lower[1], r.rect.upper[1]])
        .collect();
    let xs = graded_axis(extent.lower[0], extent.upper[0], &xi, h[0], "x1")?;
    let ys = graded_axis(extent.lower[1], extent.upper[1], &yi, h[1], "x2")?;
    let mut hits = vec![0usize; regions.regions.len()];
    let mesh = tensor_mesh(&xs, &ys, names, |c| {
        if regions.regions.is_empty() {
            return Ok(Some(0));
        }
        let mut found: Option<usize> = None;
        for (id, r) in regions.regions.iter().enumerate() {
            if r.rect.contains(c) {
                if let Some(prev) = found {
                    return Err(Error::OverlappingRegions(
                        regions.regions[prev].name.clone(),
                        r.name.clone(),
                    ));
                }
                found = Some(id);
            }
        }
        if let Some(id) = found {
            hits[id] += 1;
        }
        Ok(found)
    })?;
    if let Some(id) = hits.iter().position(|&n| n == 0) {
        return Err(Error::RegionNotAlignable(format!(
            "region `{}` contains no grid cell",
            regions.regions[id].name
        )));
    }
    Ok(mesh)
}

impl QuadMesh {
    fn with_tags_from(mut self, other: &QuadMesh) -> Self {
        if self.edges.len() == other.edges.len() {
            self.boundary_tags = other.boundary_tags.clone();
        }
        self
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Axis {
    X1,
    X2,
}

impl Axis {
    fn index(self) -> usize {
        match self {
            Axis::X1 => 0,
            Axis::X2 => 1,
        }
    }

    fn other(self) -> Axis {
        match self {
            Axis::X1 => Axis::X2,
            Axis::X2 => Axis::X1,
        }
    }

    fn name(self) -> &'static str {
        match self {
            Axis::X1 => "x1",
            Axis::X2 => "x2",
        }
    }
}

/// Edges lying on the line `axis = value`, optionally restricted to midpoints
/// whose other coordinate is in `range`.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LineSelector {
    pub axis: Axis,
    pub value: f64,
    pub range: Option<[f64; 2]>,
}

/// Geometric predicate on boundary edges.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum EdgeSelector {
    All,
    Lines(Vec<LineSelector>),
}

impl EdgeSelector {
    pub fn line(axis: Axis, value: f64) -> Self {
        EdgeSelector::Lines(vec![LineSelector {
            axis,
            value,
            range: None,
        }])
    }

    pub fn matches(&self, mesh: &QuadMesh, edge: usize) -> bool {
        match self {
            EdgeSelector::All => true,
            EdgeSelector::Lines(lines) => {
                let [a, b] = mesh.edges[edge].nodes;
                let (pa, pb) = (mesh.nodes[a], mesh.nodes[b]);
                let scale = mesh.edge_length(edge).max(1e-300);
                let tol = 1e-8 * scale;
                lines.iter().any(|l| {
                    let k = l.axis.index();
                    let on_line = (pa[k] - l.value).abs() <= tol && (pb[k] - l.value).abs() <= tol;
                    let in_range = match l.range {
                        None => true,
                        Some([lo, hi]) => {
                            let m = 0.5 * (pa[l.axis.other().index()] + pb[l.axis.other().index()]);
                            m >= lo - tol && m <= hi + tol
                        }
                    };
                    on_line && in_range
                })
            }
        }
    }
}

impl fmt::Display for EdgeSelector {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            EdgeSelector::All => write!(f, "all"),
            EdgeSelector::Lines(lines) => {
                for (i, l) in lines.iter().enumerate() {
                    if i > 0 {
                        write!(f, "; ")?;
                    }
                    write!(f, "{} = {:?}", l.axis.name(), l.value)?;
                    if let Some([lo, hi]) = l.range {
                        write!(f, " within {:?} {:?}", lo, hi)?;
                    }
                }
                Ok(())
            }
        }
    }
}

impl FromStr for EdgeSelector {
    type Err = String;

    /// `all`, or `;`-separated clauses `x1 = v` / `x2 = v [within lo hi]`.
    fn from_str(s: &str) -> Result<Self, String> {
        let s = s.trim();
        if s == "all" {
            return Ok(EdgeSelector::All);
        }
        let mut lines = Vec::new();
        for clause in s.split(';') {
            let clause = clause.trim();
            let (lhs, rhs) = clause
                .split_once('=')
                .ok_or_else(|| format!("expected `x1 = v` or `x2 = v`, got `{clause}`"))?;
            let axis = match lhs.trim() {
                "x1" => Axis::X1,
                "x2" => Axis::X2,
                other => return Err(format!("unknown axis `{other}`")),
            };
            let mut words = rhs.split_whitespace();
            let value = parse_f64(words.next().ok_or("missing coordinate")?)?;
            let range = match words.next() {
                None => None,
                Some("within") => {
                    let lo = parse_f64(words.next().ok_or("missing range start")?)?;
                    let hi = parse_f64(words.next().ok_or("missing range end")?)?;
                    Some([lo, hi])
                }
                Some(w) => return Err(format!("unexpected `{w}` in edge selector")),
            };
            if let Some(w) = words.next() {
                return Err(format!("unexpected `{w}` in edge selector"));
            }
            lines.push(LineSelector { axis, value, range });
        }
        Ok(EdgeSelector::Lines(lines))
    }
}

fn parse_f64(s: &str) -> Result<f64, String> {
    s.parse::<f64>().map_err(|_| format!("`{s}` is not a number"))
}

/// Assigns boundary tags by ordered predicates; unmatched edges become
/// `insulated`. When several predicates match an edge, the first wins and a
/// warning is returned.
pub fn tag_boundary(
    mut mesh: QuadMesh,
    predicates: &[(BoundaryTag, EdgeSelector)],
) -> (QuadMesh, Vec<String>) {
    let mut warnings = Vec::new();
    let boundary: Vec<usize> = mesh.boundary_edges().collect();
    for e in boundary {
        let matches: Vec<BoundaryTag> = predicates
            .iter()
            .filter(|(_, sel)| sel.matches(&mesh, e))
            .map(|(t, _)| *t)
            .collect();
        let tag = matches.first().copied().unwrap_or(BoundaryTag::Insulated);
        if matches.len() > 1 {
            let msg = format!(
                "boundary edge {e} at {:?} matched {} predicates; using `{}`",
                mesh.edge_midpoint(e),
                matches.len(),
                tag.as_str()
            );
            log::warn!("{msg}");
            warnings.push(msg);
        }
        mesh.boundary_tags.insert(e, tag);
    }
    (mesh, warnings)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn base_case_single_element() {
        let m = build_rectangle_mesh([-1.0, -1.0], [1.0, 1.0], 0).unwrap();
        assert_eq!(m.num_elements(), 1);
        assert_eq!(m.num_nodes(), 4);
        assert_eq!(m.boundary_edges().count(), 4);
    }

    #[test]
    fn six_refinements_match_paper_mesh() {
        let m = build_rectangle_mesh([-1.0, -1.0], [1.0, 1.0], 6).unwrap();
        assert_eq!(m.num_elements(), 4096);
        assert_eq!(m.num_nodes(), 65 * 65);
        let [hx, hy] = m.max_spacing();
        assert!((hx - 2.0 / 64.0).abs() < 1e-14 && (hy - 2.0 / 64.0).abs() < 1e-14);
    }

    #[test]
    fn one_refinement_quadruples() {
        let m = build_rectangle_mesh([0.0, 0.0], [1.0, 1.0], 1).unwrap();
        assert_eq!(m.num_elements(), 4);
        assert_eq!(m.num_nodes(), 9);
    }

    #[test]
    fn degenerate_rectangle_rejected() {
        let err = build_rectangle_mesh([0.0, 0.0], [0.0, 1.0], 2).unwrap_err();
        assert!(matches!(err, Error::DegenerateRectangle { .. }));
        assert!(build_rectangle_mesh([0.0, 1.0], [1.0, 0.5], 0).is_err());
    }

    #[test]
    fn edge_table_consistency() {
        for r in 0..4 {
            let m = build_rectangle_mesh([0.0, 0.0], [2.0, 1.0], r).unwrap();
            let interior = m.edges().iter().filter(|e| !e.is_boundary()).count();
            let boundary = m.edges().iter().filter(|e| e.is_boundary()).count();
            assert_eq!(4 * m.num_elements(), 2 * interior + boundary);
        }
    }

    #[test]
    fn refinement_preserves_area() {
        for r in 0..6 {
            let m = build_rectangle_mesh([-0.3, 0.1], [1.7, 2.2], r).unwrap();
            assert!((m.domain_area() - 2.0 * 2.1).abs() < 1e-12);
        }
    }

    #[test]
    fn hinge_strip_is_snapped() {
        let w = std::f64::consts::PI / 40.0;
        let base = build_rectangle_mesh([-1.0, -1.0], [1.0, 1.0], 4).unwrap();
        let regions = RegionSpec::new()
            .with("hinge", Rect::new([-1.0, -1.0], [-1.0 + w, 1.0]))
            .with("plate", Rect::new([-1.0 + w, -1.0], [1.0, 1.0]));
        let m = snap_region_mesh(&base, &regions).unwrap();
        let hinge = m.region_id("hinge").unwrap();
        for e in 0..m.num_elements() {
            let r = m.element_rect(e).unwrap();
            if m.region_tags()[e] == hinge {
                assert!(r.upper[0] <= -1.0 + w + 1e-14);
            } else {
                assert!(r.lower[0] >= -1.0 + w - 1e-14);
            }
        }
        // An interface node line sits exactly at the hinge edge.
        assert!(m.nodes().iter().any(|p| p[0] == -1.0 + w));
        assert!((m.domain_area() - 4.0).abs() < 1e-12);
        let [hx, _] = m.max_spacing();
        assert!(hx <= 2.0 / 16.0 + 1e-12);
    }

    #[test]
    fn no_regions_tags_default() {
        let base = build_rectangle_mesh([0.0, 0.0], [1.0, 1.0], 2).unwrap();
        let m = snap_region_mesh(&base, &RegionSpec::new()).unwrap();
        assert_eq!(m.region_names(), ["default".to_string()]);
        assert!(m.region_tags().iter().all(|&r| r == 0));
    }

    #[test]
    fn overlapping_regions_rejected() {
        let base = build_rectangle_mesh([0.0, 0.0], [1.0, 1.0], 2).unwrap();
        let regions = RegionSpec::new()
            .with("a", Rect::new([0.0, 0.0], [0.75, 1.0]))
            .with("b", Rect::new([0.5, 0.0], [1.0, 1.0]));
        assert!(matches!(
            snap_region_mesh(&base, &regions),
            Err(Error::OverlappingRegions(..))
        ));
    }

    #[test]
    fn region_outside_extent_rejected() {
        let base = build_rectangle_mesh([0.0, 0.0], [1.0, 1.0], 2).unwrap();
        let regions = RegionSpec::new().with("a", Rect::new([0.0, 0.0], [1.5, 1.0]));
        assert!(matches!(
            snap_region_mesh(&base, &regions),
            Err(Error::RegionNotAlignable(_))
        ));
    }

    #[test]
    fn clamp_one_side() {
        let m = build_rectangle_mesh([-1.0, -1.0], [1.0, 1.0], 1).unwrap();
        let (m, warnings) = tag_boundary(m, &[(BoundaryTag::Dirichlet, EdgeSelector::line(Axis::X1, -1.0))]);
        assert!(warnings.is_empty());
        assert_eq!(m.edges_with_tag(BoundaryTag::Dirichlet).count(), 2);
        assert_eq!(m.edges_with_tag(BoundaryTag::Insulated).count(), 6);
    }

    #[test]
    fn robin_everywhere_and_empty_predicates() {
        let m = build_rectangle_mesh([-1.0, -1.0], [1.0, 1.0], 2).unwrap();
        let (robin, _) = tag_boundary(m.clone(), &[(BoundaryTag::Robin, EdgeSelector::All)]);
        assert_eq!(robin.edges_with_tag(BoundaryTag::Robin).count(), 16);
        let (free, _) = tag_boundary(m, &[]);
        assert_eq!(free.edges_with_tag(BoundaryTag::Insulated).count(), 16);
    }

    #[test]
    fn overlapping_predicates_warn() {
        let m = build_rectangle_mesh([0.0, 0.0], [1.0, 1.0], 1).unwrap();
        let (m, warnings) = tag_boundary(
            m,
            &[
                (BoundaryTag::Dirichlet, EdgeSelector::line(Axis::X1, 0.0)),
                (BoundaryTag::Robin, EdgeSelector::All),
            ],
        );
        assert_eq!(warnings.len(), 2);
        assert_eq!(m.edges_with_tag(BoundaryTag::Dirichlet).count(), 2);
        assert_eq!(m.edges_with_tag(BoundaryTag::Robin).count(), 6);
    }

    #[test]
    fn selector_text_round_trip() {
        for text in ["all", "x1 = -1.0", "x2 = 0.0 within 1.0 1.0654; x1 = 3.5"] {
            let sel: EdgeSelector = text.parse().unwrap();
            let again: EdgeSelector = sel.to_string().parse().unwrap();
            assert_eq!(sel, again);
        }
        assert!("x3 = 1".parse::<EdgeSelector>().is_err());
    }

    #[test]
    fn hanging_node_detected() {
        // Left element spans the full height, right side is split in two.
        let nodes = vec![
            [0.0, 0.0],
            [1.0, 0.0],
            [1.0, 1.0],
            [0.0, 1.0],
            [2.0, 0.0],
            [2.0, 0.5],
            [1.0, 0.5],
            [2.0, 1.0],
        ];
        let elements = vec![[0, 1, 2, 3], [1, 4, 5, 6], [6, 5, 7, 2]];
        let err = QuadMesh::from_parts(nodes, elements, vec![0; 3], vec!["d".into()]).unwrap_err();
        assert!(err.to_string().contains("hanging"));
    }

    #[test]
    fn dump_format() {
        let m = build_rectangle_mesh([0.0, 0.0], [1.0, 1.0], 0).unwrap();
        let mut buf = Vec::new();
        m.write_dump(&mut buf).unwrap();
        let text = String::from_utf8(buf).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "4 1");
        assert_eq!(lines[1], "0 0.0 0.0");
        assert_eq!(lines[5], "0 0 1 3 2");
    }
}
