//! Interval meshes and triangulations with marked red refinement, facet
//! connectivity and size functions.
//!
//! Both mesh kinds are immutable after construction; `refine` returns a new
//! mesh carrying parent indices into the old one. 2d refinement is red
//! (quadrisection) with hanging nodes; integration facets on a hanging edge
//! are the fine-side sub-edges, each adjacent to the coarse neighbor cell.

use crate::{vec2_norm, vec2_sub, Error, Pt, Result};
use std::collections::HashMap;
use std::io::{BufRead, Write};
use std::sync::Arc;

/// Per-cell refinement flags.
#[derive(Debug, Clone)]
pub struct RefinementMarks(pub Vec<bool>);

impl RefinementMarks {
    pub fn all(n: usize) -> Self {
        RefinementMarks(vec![true; n])
    }
    pub fn none(n: usize) -> Self {
        RefinementMarks(vec![false; n])
    }
}

/// One integration facet. For 1d meshes facets are points (`a == b`,
/// `measure == 1`); for 2d they are straight edge segments, sub-edges of a
/// coarse edge when a hanging node splits it.
#[derive(Debug, Clone)]
pub struct Facet {
    /// Cell owning the normal direction.
    pub minus: usize,
    /// Neighbor cell; `None` on the domain boundary.
    pub plus: Option<usize>,
    /// Unit normal pointing out of `minus`.
    pub normal: [f64; 2],
    pub a: Pt,
    pub b: Pt,
    /// Length of the facet (1 for point facets).
    pub measure: f64,
    /// Mean of the diameters of the adjacent cells.
    pub h_e: f64,
}

impl Facet {
    pub fn is_boundary(&self) -> bool {
        self.plus.is_none()
    }
    pub fn point_at(&self, t: f64) -> Pt {
        [
            self.a[0] + t * (self.b[0] - self.a[0]),
            self.a[1] + t * (self.b[1] - self.a[1]),
        ]
    }
}

/// 1d partition of an interval into cells between sorted vertices.
#[derive(Debug, Clone)]
pub struct IntervalMesh {
    pub vertices: Vec<f64>,
}

impl IntervalMesh {
    pub fn new(vertices: Vec<f64>) -> Result<Self> {
        if vertices.len() < 2 {
            return Err(Error::InvalidArgument("interval mesh needs >= 2 vertices".into()));
        }
        if !vertices.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::InvalidArgument("vertices must be strictly increasing".into()));
        }
        Ok(IntervalMesh { vertices })
    }

    pub fn n_cells(&self) -> usize {
        self.vertices.len() - 1
    }

    pub fn cell_width(&self, k: usize) -> f64 {
        self.vertices[k + 1] - self.vertices[k]
    }

    /// Largest relative deviation of cell widths from their mean.
    pub fn nonuniformity(&self) -> f64 {
        let n = self.n_cells();
        let mean = (self.vertices[n] - self.vertices[0]) / n as f64;
        (0..n)
            .map(|k| (self.cell_width(k) - mean).abs() / mean)
            .fold(0.0, f64::max)
    }
}

/// 2d triangulation with positive cell orientation; `edge_midpoint` keeps
/// every midpoint vertex ever created so hanging edges can be resolved and
/// re-refinement reuses the existing vertex.
#[derive(Debug, Clone)]
pub struct TriMesh {
    pub vertices: Vec<Pt>,
    pub cells: Vec<[usize; 3]>,
    pub cell_level: Vec<u32>,
    edge_midpoint: HashMap<(usize, usize), usize>,
    midpoint_parent: HashMap<usize, (usize, usize)>,
}

fn sorted_pair(i: usize, j: usize) -> (usize, usize) {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

impl TriMesh {
    pub fn new(vertices: Vec<Pt>, cells: Vec<[usize; 3]>) -> Result<Self> {
        let mesh = TriMesh {
            vertices,
            cell_level: vec![0; cells.len()],
            cells,
            edge_midpoint: HashMap::new(),
            midpoint_parent: HashMap::new(),
        };
        for (k, c) in mesh.cells.iter().enumerate() {
            if c.iter().any(|&v| v >= mesh.vertices.len()) {
                return Err(Error::InvalidArgument(format!("cell {k} references missing vertex")));
            }
            if mesh.signed_area(k) <= 0.0 {
                return Err(Error::InvalidArgument(format!(
                    "cell {k} is degenerate or negatively oriented"
                )));
            }
        }
        Ok(mesh)
    }

    fn signed_area(&self, k: usize) -> f64 {
        let [a, b, c] = self.cells[k].map(|v| self.vertices[v]);
        0.5 * ((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0]))
    }
}

/// Unified mesh handle used by spaces, assembly and estimators.
#[derive(Debug, Clone)]
pub enum Mesh {
    Interval(IntervalMesh),
    Tri(TriMesh),
}

impl Mesh {
    pub fn dim(&self) -> usize {
        match self {
            Mesh::Interval(_) => 1,
            Mesh::Tri(_) => 2,
        }
    }

    pub fn n_cells(&self) -> usize {
        match self {
            Mesh::Interval(m) => m.n_cells(),
            Mesh::Tri(m) => m.cells.len(),
        }
    }

    pub fn n_vertices(&self) -> usize {
        match self {
            Mesh::Interval(m) => m.vertices.len(),
            Mesh::Tri(m) => m.vertices.len(),
        }
    }

    /// Diameter of cell `k`.
    pub fn cell_diam(&self, k: usize) -> f64 {
        match self {
            Mesh::Interval(m) => m.cell_width(k),
            Mesh::Tri(m) => {
                let [a, b, c] = m.cells[k].map(|v| m.vertices[v]);
                vec2_norm(vec2_sub(b, a))
                    .max(vec2_norm(vec2_sub(c, b)))
                    .max(vec2_norm(vec2_sub(a, c)))
            }
        }
    }

    /// Measure (length/area) of cell `k`.
    pub fn cell_measure(&self, k: usize) -> f64 {
        match self {
            Mesh::Interval(m) => m.cell_width(k),
            Mesh::Tri(m) => m.signed_area(k),
        }
    }

    /// Radius of the inscribed ball of cell `k`.
    pub fn cell_inradius(&self, k: usize) -> f64 {
        match self {
            Mesh::Interval(m) => 0.5 * m.cell_width(k),
            Mesh::Tri(m) => {
                let [a, b, c] = m.cells[k].map(|v| m.vertices[v]);
                let per = vec2_norm(vec2_sub(b, a))
                    + vec2_norm(vec2_sub(c, b))
                    + vec2_norm(vec2_sub(a, c));
                2.0 * m.signed_area(k) / per
            }
        }
    }

    /// Map reference coordinates (interval [0,1] / unit triangle) to physical.
    pub fn ref_to_phys(&self, k: usize, xi: Pt) -> Pt {
        match self {
            Mesh::Interval(m) => [m.vertices[k] + xi[0] * m.cell_width(k), 0.0],
            Mesh::Tri(m) => {
                let [a, b, c] = m.cells[k].map(|v| m.vertices[v]);
                [
                    a[0] + xi[0] * (b[0] - a[0]) + xi[1] * (c[0] - a[0]),
                    a[1] + xi[0] * (b[1] - a[1]) + xi[1] * (c[1] - a[1]),
                ]
            }
        }
    }

    /// Inverse of `ref_to_phys`; exact up to roundoff for the affine maps used.
    pub fn phys_to_ref(&self, k: usize, x: Pt) -> Pt {
        match self {
            Mesh::Interval(m) => [(x[0] - m.vertices[k]) / m.cell_width(k), 0.0],
            Mesh::Tri(m) => {
                let [a, b, c] = m.cells[k].map(|v| m.vertices[v]);
                let (j00, j01) = (b[0] - a[0], c[0] - a[0]);
                let (j10, j11) = (b[1] - a[1], c[1] - a[1]);
                let det = j00 * j11 - j01 * j10;
                let (dx, dy) = (x[0] - a[0], x[1] - a[1]);
                [(j11 * dx - j01 * dy) / det, (-j10 * dx + j00 * dy) / det]
            }
        }
    }

    /// Jacobian of `ref_to_phys` (column-major [dxi, deta]).
    pub fn jacobian(&self, k: usize) -> [[f64; 2]; 2] {
        match self {
            Mesh::Interval(m) => [[m.cell_width(k), 0.0], [0.0, 1.0]],
            Mesh::Tri(m) => {
                let [a, b, c] = m.cells[k].map(|v| m.vertices[v]);
                [[b[0] - a[0], b[1] - a[1]], [c[0] - a[0], c[1] - a[1]]]
            }
        }
    }

    /// Gradient transform: maps a reference gradient to a physical one
    /// (multiplication with J^{-T}).
    pub fn grad_to_phys(&self, k: usize, g: [f64; 2]) -> [f64; 2] {
        match self {
            Mesh::Interval(m) => [g[0] / m.cell_width(k), 0.0],
            Mesh::Tri(_) => {
                // jacobian() returns rows (b-a), (c-a), i.e. A^T of the
                // affine map x = A xi + a
                let j = self.jacobian(k);
                let det = j[0][0] * j[1][1] - j[0][1] * j[1][0];
                [
                    (j[1][1] * g[0] - j[0][1] * g[1]) / det,
                    (-j[1][0] * g[0] + j[0][0] * g[1]) / det,
                ]
            }
        }
    }

    pub fn vertex(&self, v: usize) -> Pt {
        match self {
            Mesh::Interval(m) => [m.vertices[v], 0.0],
            Mesh::Tri(m) => m.vertices[v],
        }
    }

    pub fn cell_vertices(&self, k: usize) -> Vec<usize> {
        match self {
            Mesh::Interval(_) => vec![k, k + 1],
            Mesh::Tri(m) => m.cells[k].to_vec(),
        }
    }

    /// Enumerate all integration facets.
    pub fn facets(&self) -> Vec<Facet> {
        match self {
            Mesh::Interval(m) => {
                let n = m.n_cells();
                let mut out = Vec::with_capacity(n + 1);
                // left boundary
                out.push(Facet {
                    minus: 0,
                    plus: None,
                    normal: [-1.0, 0.0],
                    a: [m.vertices[0], 0.0],
                    b: [m.vertices[0], 0.0],
                    measure: 1.0,
                    h_e: m.cell_width(0),
                });
                for v in 1..n {
                    out.push(Facet {
                        minus: v - 1,
                        plus: Some(v),
                        normal: [1.0, 0.0],
                        a: [m.vertices[v], 0.0],
                        b: [m.vertices[v], 0.0],
                        measure: 1.0,
                        h_e: 0.5 * (m.cell_width(v - 1) + m.cell_width(v)),
                    });
                }
                out.push(Facet {
                    minus: n - 1,
                    plus: None,
                    normal: [1.0, 0.0],
                    a: [m.vertices[n], 0.0],
                    b: [m.vertices[n], 0.0],
                    measure: 1.0,
                    h_e: m.cell_width(n - 1),
                });
                out
            }
            Mesh::Tri(m) => self.tri_facets(m),
        }
    }

    fn tri_facets(&self, m: &TriMesh) -> Vec<Facet> {
        // sorted vertex pair -> cells listing that edge
        let mut edge_cells: HashMap<(usize, usize), Vec<usize>> = HashMap::new();
        for (k, c) in m.cells.iter().enumerate() {
            for e in 0..3 {
                edge_cells
                    .entry(sorted_pair(c[e], c[(e + 1) % 3]))
                    .or_default()
                    .push(k);
            }
        }
        let is_hanging_coarse_edge = |pair: (usize, usize)| -> Option<usize> {
            let &mid = m.edge_midpoint.get(&pair)?;
            let lo = edge_cells.contains_key(&sorted_pair(pair.0, mid));
            let hi = edge_cells.contains_key(&sorted_pair(mid, pair.1));
            (lo && hi).then_some(mid)
        };
        // A single-sided edge is a hanging sub-edge when one endpoint is the
        // recorded midpoint of a coarse edge that itself is a leaf edge.
        let sub_edge_of = |pair: (usize, usize)| -> Option<(usize, usize)> {
            for (end, mid) in [(pair.0, pair.1), (pair.1, pair.0)] {
                if let Some(&(p0, p1)) = m.midpoint_parent.get(&mid) {
                    if (end == p0 || end == p1) && edge_cells.get(&(p0, p1)).map(Vec::len) == Some(1)
                    {
                        return Some((p0, p1));
                    }
                }
            }
            None
        };

        let mut keys: Vec<(usize, usize)> = edge_cells.keys().copied().collect();
        keys.sort_unstable();

        let mut out = Vec::new();
        for pair in keys {
            let cells = &edge_cells[&pair];
            match cells.len() {
                2 => {
                    let (minus, plus) = (cells[0].min(cells[1]), cells[0].max(cells[1]));
                    out.push(self.make_tri_facet(m, minus, Some(plus), pair));
                }
                1 => {
                    let owner = cells[0];
                    if let Some(mid) = is_hanging_coarse_edge(pair) {
                        // Emit the two fine sub-edges against the coarse cell.
                        for sub in [sorted_pair(pair.0, mid), sorted_pair(mid, pair.1)] {
                            let fine = edge_cells[&sub][0];
                            out.push(self.make_tri_facet(m, fine, Some(owner), sub));
                        }
                    } else if sub_edge_of(pair).is_some() {
                        // handled when scanning its coarse parent edge
                    } else {
                        out.push(self.make_tri_facet(m, owner, None, pair));
                    }
                }
                _ => unreachable!("edge shared by more than two cells"),
            }
        }
        out
    }

    fn make_tri_facet(
        &self,
        m: &TriMesh,
        minus: usize,
        plus: Option<usize>,
        pair: (usize, usize),
    ) -> Facet {
        // Traverse the minus cell's boundary counterclockwise to orient the
        // outward normal. The facet endpoints may be a sub-edge of the cell
        // edge, so only the direction is taken from the traversal.
        let c = m.cells[minus];
        let (mut pa, mut pb) = (m.vertices[pair.0], m.vertices[pair.1]);
        let dir_along = |va: Pt, vb: Pt| vec2_sub(vb, va);
        let mut tangent = dir_along(pa, pb);
        for e in 0..3 {
            let (i, j) = (c[e], c[(e + 1) % 3]);
            let (vi, vj) = (m.vertices[i], m.vertices[j]);
            let t = dir_along(vi, vj);
            let cross = t[0] * tangent[1] - t[1] * tangent[0];
            let dot = t[0] * tangent[0] + t[1] * tangent[1];
            if cross.abs() <= 1e-12 * vec2_norm(t) * vec2_norm(tangent) {
                // parallel edge of the cell: does the facet lie on it?
                let off = vec2_sub(pa, vi);
                let c2 = t[0] * off[1] - t[1] * off[0];
                if c2.abs() <= 1e-12 * vec2_norm(t).powi(2) {
                    if dot < 0.0 {
                        std::mem::swap(&mut pa, &mut pb);
                        tangent = dir_along(pa, pb);
                    }
                    break;
                }
            }
        }
        let len = vec2_norm(tangent);
        let normal = [tangent[1] / len, -tangent[0] / len];
        let h_e = match plus {
            Some(p) => 0.5 * (self.cell_diam(minus) + self.cell_diam(p)),
            None => self.cell_diam(minus),
        };
        Facet { minus, plus, normal, a: pa, b: pb, measure: len, h_e }
    }

    /// Refine marked cells; returns the new mesh and the parent cell index of
    /// every new cell. In 2d the mark set is first closed so no edge ends up
    /// with more than one hanging level.
    pub fn refine(&self, marks: &RefinementMarks) -> Result<(Mesh, Vec<usize>)> {
        if marks.0.len() != self.n_cells() {
            return Err(Error::InvalidArgument(format!(
                "marks length {} != cell count {}",
                marks.0.len(),
                self.n_cells()
            )));
        }
        match self {
            Mesh::Interval(m) => {
                let mut vertices = Vec::with_capacity(m.vertices.len() + m.n_cells());
                let mut parents = Vec::new();
                for k in 0..m.n_cells() {
                    vertices.push(m.vertices[k]);
                    if marks.0[k] {
                        vertices.push(0.5 * (m.vertices[k] + m.vertices[k + 1]));
                        parents.push(k);
                    }
                    parents.push(k);
                }
                vertices.push(*m.vertices.last().unwrap());
                Ok((Mesh::Interval(IntervalMesh::new(vertices)?), parents))
            }
            Mesh::Tri(m) => {
                let marks = self.close_marks(m, marks.0.clone());
                let mut vertices = m.vertices.clone();
                let mut edge_midpoint = m.edge_midpoint.clone();
                let mut midpoint_parent = m.midpoint_parent.clone();
                let mut mid = |i: usize, j: usize, vertices: &mut Vec<Pt>| -> usize {
                    let key = sorted_pair(i, j);
                    *edge_midpoint.entry(key).or_insert_with(|| {
                        let (a, b) = (vertices[key.0], vertices[key.1]);
                        vertices.push([0.5 * (a[0] + b[0]), 0.5 * (a[1] + b[1])]);
                        midpoint_parent.insert(vertices.len() - 1, key);
                        vertices.len() - 1
                    })
                };
                let mut cells = Vec::new();
                let mut cell_level = Vec::new();
                let mut parents = Vec::new();
                for (k, c) in m.cells.iter().enumerate() {
                    if marks[k] {
                        let m01 = mid(c[0], c[1], &mut vertices);
                        let m12 = mid(c[1], c[2], &mut vertices);
                        let m20 = mid(c[2], c[0], &mut vertices);
                        for child in [
                            [c[0], m01, m20],
                            [m01, c[1], m12],
                            [m20, m12, c[2]],
                            [m01, m12, m20],
                        ] {
                            cells.push(child);
                            cell_level.push(m.cell_level[k] + 1);
                            parents.push(k);
                        }
                    } else {
                        cells.push(*c);
                        cell_level.push(m.cell_level[k]);
                        parents.push(k);
                    }
                }
                let mut out = TriMesh::new(vertices, cells)?;
                out.cell_level = cell_level;
                out.edge_midpoint = edge_midpoint;
                out.midpoint_parent = midpoint_parent;
                Ok((Mesh::Tri(out), parents))
            }
        }
    }

    /// Closure marking: marking a cell must not leave a facet with more than
    /// one level difference, so coarser facet neighbors of marked cells are
    /// marked too, to a fixpoint.
    fn close_marks(&self, m: &TriMesh, mut marks: Vec<bool>) -> Vec<bool> {
        let facets = self.facets();
        loop {
            let mut changed = false;
            for f in &facets {
                let Some(plus) = f.plus else { continue };
                for (k, other) in [(f.minus, plus), (plus, f.minus)] {
                    let lk = m.cell_level[k] + marks[k] as u32;
                    let lo = m.cell_level[other] + marks[other] as u32;
                    if lk > lo + 1 && !marks[other] {
                        marks[other] = true;
                        changed = true;
                    }
                }
            }
            if !changed {
                return marks;
            }
        }
    }

    /// (min h_K, max h_K, max h_K / rho_K)
    pub fn shape_report(&self) -> (f64, f64, f64) {
        let mut h_min = f64::INFINITY;
        let mut h_max: f64 = 0.0;
        let mut ratio: f64 = 0.0;
        for k in 0..self.n_cells() {
            let h = self.cell_diam(k);
            h_min = h_min.min(h);
            h_max = h_max.max(h);
            ratio = ratio.max(h / self.cell_inradius(k));
        }
        (h_min, h_max, ratio)
    }

    pub fn into_arc(self) -> Arc<Mesh> {
        Arc::new(self)
    }
}

/// `n` equal cells spanning `[a, b]`.
pub fn uniform_interval(a: f64, b: f64, n: usize) -> Result<Mesh> {
    if n == 0 || a >= b {
        return Err(Error::InvalidArgument(format!(
            "uniform_interval requires a < b and n >= 1, got ({a}, {b}, {n})"
        )));
    }
    let vertices = (0..=n).map(|i| a + (b - a) * i as f64 / n as f64).collect();
    Ok(Mesh::Interval(IntervalMesh::new(vertices)?))
}

/// Structured triangulation of the rectangle `[x0,x1] x [y0,y1]` with
/// `nx` by `ny` squares, each split along the same diagonal.
pub fn structured_rect(x0: f64, x1: f64, y0: f64, y1: f64, nx: usize, ny: usize) -> Result<Mesh> {
    if nx == 0 || ny == 0 || x0 >= x1 || y0 >= y1 {
        return Err(Error::InvalidArgument("degenerate rectangle grid".into()));
    }
    let mut vertices = Vec::with_capacity((nx + 1) * (ny + 1));
    for j in 0..=ny {
        for i in 0..=nx {
            vertices.push([
                x0 + (x1 - x0) * i as f64 / nx as f64,
                y0 + (y1 - y0) * j as f64 / ny as f64,
            ]);
        }
    }
    let idx = |i: usize, j: usize| j * (nx + 1) + i;
    let mut cells = Vec::with_capacity(2 * nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            cells.push([idx(i, j), idx(i + 1, j), idx(i + 1, j + 1)]);
            cells.push([idx(i, j), idx(i + 1, j + 1), idx(i, j + 1)]);
        }
    }
    Ok(Mesh::Tri(TriMesh::new(vertices, cells)?))
}

/// Structured triangulation of the L-shaped domain
/// `(-1,1)^2 \ [0,1] x [-1,0]` with `n` divisions per unit edge.
pub fn structured_lshape(n: usize) -> Result<Mesh> {
    if n == 0 {
        return Err(Error::InvalidArgument("lshape needs n >= 1".into()));
    }
    let full = structured_rect(-1.0, 1.0, -1.0, 1.0, 2 * n, 2 * n)?;
    let Mesh::Tri(m) = full else { unreachable!() };
    let keep: Vec<[usize; 3]> = m
        .cells
        .iter()
        .filter(|c| {
            let b = c
                .iter()
                .fold([0.0, 0.0], |acc, &v| [acc[0] + m.vertices[v][0] / 3.0, acc[1] + m.vertices[v][1] / 3.0]);
            !(b[0] > 0.0 && b[1] < 0.0)
        })
        .copied()
        .collect();
    // drop unused vertices to keep the vertex list tight
    let mut used = vec![false; m.vertices.len()];
    for c in &keep {
        for &v in c {
            used[v] = true;
        }
    }
    let mut remap = vec![usize::MAX; m.vertices.len()];
    let mut vertices = Vec::new();
    for (v, &u) in used.iter().enumerate() {
        if u {
            remap[v] = vertices.len();
            vertices.push(m.vertices[v]);
        }
    }
    let cells = keep.iter().map(|c| c.map(|v| remap[v])).collect();
    Ok(Mesh::Tri(TriMesh::new(vertices, cells)?))
}

/// Deterministically jitter interior vertices by `amplitude * local h` using
/// the given seed; boundary vertices stay put.
pub fn jitter_interior(mesh: &Mesh, amplitude: f64, seed: u64) -> Result<Mesh> {
    use rand::{Rng, SeedableRng};
    let Mesh::Tri(m) = mesh else {
        return Err(Error::Unsupported("jitter only applies to triangulations".into()));
    };
    // vertices on any boundary edge are fixed
    let mut edge_count: HashMap<(usize, usize), usize> = HashMap::new();
    for c in &m.cells {
        for e in 0..3 {
            *edge_count.entry(sorted_pair(c[e], c[(e + 1) % 3])).or_default() += 1;
        }
    }
    let mut on_boundary = vec![false; m.vertices.len()];
    for (&(i, j), &cnt) in &edge_count {
        if cnt == 1 {
            on_boundary[i] = true;
            on_boundary[j] = true;
        }
    }
    // local length scale: shortest incident edge
    let mut local_h = vec![f64::INFINITY; m.vertices.len()];
    for &(i, j) in edge_count.keys() {
        let len = vec2_norm(vec2_sub(m.vertices[j], m.vertices[i]));
        local_h[i] = local_h[i].min(len);
        local_h[j] = local_h[j].min(len);
    }
    let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
    let mut vertices = m.vertices.clone();
    for (v, pt) in vertices.iter_mut().enumerate() {
        let (dx, dy): (f64, f64) = (rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
        if !on_boundary[v] {
            pt[0] += amplitude * local_h[v] * dx;
            pt[1] += amplitude * local_h[v] * dy;
        }
    }
    Ok(Mesh::Tri(TriMesh::new(vertices, m.cells.clone())?))
}

/// Read a macro grid in the text format: `vertices N`, N lines `x y`,
/// `cells M`, M lines `i j k` (0-based).
pub fn read_macro_grid<R: BufRead>(reader: R) -> Result<Mesh> {
    let mut lines = reader
        .lines()
        .collect::<std::io::Result<Vec<_>>>()?
        .into_iter()
        .map(|l| l.trim().to_string())
        .filter(|l| !l.is_empty() && !l.starts_with('#'));
    let header = |line: Option<String>, kw: &str| -> Result<usize> {
        let line = line.ok_or_else(|| Error::Parse(format!("expected `{kw} N`")))?;
        let mut it = line.split_whitespace();
        if it.next() != Some(kw) {
            return Err(Error::Parse(format!("expected `{kw} N`, got `{line}`")));
        }
        it.next()
            .and_then(|s| s.parse().ok())
            .ok_or_else(|| Error::Parse(format!("bad count in `{line}`")))
    };
    let nv = header(lines.next(), "vertices")?;
    let mut vertices = Vec::with_capacity(nv);
    for _ in 0..nv {
        let line = lines.next().ok_or_else(|| Error::Parse("missing vertex line".into()))?;
        let vals: Vec<f64> = line.split_whitespace().filter_map(|s| s.parse().ok()).collect();
        if vals.len() != 2 {
            return Err(Error::Parse(format!("bad vertex line `{line}`")));
        }
        vertices.push([vals[0], vals[1]]);
    }
    let nc = header(lines.next(), "cells")?;
    let mut cells = Vec::with_capacity(nc);
    for _ in 0..nc {
        let line = lines.next().ok_or_else(|| Error::Parse("missing cell line".into()))?;
        let vals: Vec<usize> = line.split_whitespace().filter_map(|s| s.parse().ok()).collect();
        if vals.len() != 3 {
            return Err(Error::Parse(format!("bad cell line `{line}`")));
        }
        cells.push([vals[0], vals[1], vals[2]]);
    }
    Ok(Mesh::Tri(TriMesh::new(vertices, cells)?))
}

/// Write a triangulation in the macro grid text format.
pub fn write_macro_grid<W: Write>(mesh: &Mesh, mut w: W) -> Result<()> {
    let Mesh::Tri(m) = mesh else {
        return Err(Error::Unsupported("macro grid format is 2d only".into()));
    };
    writeln!(w, "vertices {}", m.vertices.len())?;
    for v in &m.vertices {
        writeln!(w, "{:.17e} {:.17e}", v[0], v[1])?;
    }
    writeln!(w, "cells {}", m.cells.len())?;
    for c in &m.cells {
        writeln!(w, "{} {} {}", c[0], c[1], c[2])?;
    }
    Ok(())
}
