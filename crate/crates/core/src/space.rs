//! Polynomial spaces on cells, nodal interpolation, and the field kinds that
//! post-processing produces: plain coefficient fields, piecewise polynomials
//! on a per-cell sub-partition, and weighted combinations of both.

use crate::mesh::Mesh;
use crate::{Error, Pt, Result};
use nalgebra::DMatrix;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Continuity {
    Discontinuous,
    /// Lagrange dofs shared at cell endpoints; 1d only. Realizes a continuous
    /// finite element method with weakly enforced boundary data.
    VertexContinuous,
}

/// Lagrange basis on the reference cell (equispaced nodes), stored as
/// monomial coefficients.
#[derive(Debug, Clone)]
pub struct RefBasis {
    pub dim: usize,
    pub degree: usize,
    nodes: Vec<Pt>,
    exps: Vec<(i32, i32)>,
    /// row i = monomial coefficients of basis function i
    coeff: DMatrix<f64>,
}

impl RefBasis {
    pub fn new(dim: usize, degree: usize) -> Result<Self> {
        if degree < 1 || degree > 10 {
            return Err(Error::InvalidArgument(format!("unsupported degree {degree}")));
        }
        let p = degree;
        let (nodes, exps): (Vec<Pt>, Vec<(i32, i32)>) = match dim {
            1 => (
                (0..=p).map(|i| [i as f64 / p as f64, 0.0]).collect(),
                (0..=p).map(|a| (a as i32, 0)).collect(),
            ),
            2 => {
                let mut nodes = Vec::new();
                let mut exps = Vec::new();
                for j in 0..=p {
                    for i in 0..=(p - j) {
                        nodes.push([i as f64 / p as f64, j as f64 / p as f64]);
                    }
                }
                for b in 0..=p {
                    for a in 0..=(p - b) {
                        exps.push((a as i32, b as i32));
                    }
                }
                (nodes, exps)
            }
            _ => return Err(Error::Unsupported(format!("dimension {dim}"))),
        };
        let n = nodes.len();
        let vt = DMatrix::from_fn(n, n, |j, k| {
            let (a, b) = exps[j];
            powi(nodes[k][0], a) * powi(nodes[k][1], b)
        });
        let coeff = vt
            .try_inverse()
            .ok_or_else(|| Error::SingularFactor("Lagrange Vandermonde".into()))?;
        Ok(RefBasis { dim, degree, nodes, exps, coeff })
    }

    pub fn n_basis(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[Pt] {
        &self.nodes
    }

    pub fn value(&self, i: usize, xi: Pt) -> f64 {
        let mut s = 0.0;
        for (j, &(a, b)) in self.exps.iter().enumerate() {
            s += self.coeff[(i, j)] * powi(xi[0], a) * powi(xi[1], b);
        }
        s
    }

    pub fn grad_ref(&self, i: usize, xi: Pt) -> [f64; 2] {
        let mut g = [0.0, 0.0];
        for (j, &(a, b)) in self.exps.iter().enumerate() {
            let c = self.coeff[(i, j)];
            if a > 0 {
                g[0] += c * a as f64 * powi(xi[0], a - 1) * powi(xi[1], b);
            }
            if b > 0 {
                g[1] += c * powi(xi[0], a) * b as f64 * powi(xi[1], b - 1);
            }
        }
        g
    }

    pub fn hess_ref(&self, i: usize, xi: Pt) -> [[f64; 2]; 2] {
        let mut h = [[0.0; 2]; 2];
        for (j, &(a, b)) in self.exps.iter().enumerate() {
            let c = self.coeff[(i, j)];
            let (af, bf) = (a as f64, b as f64);
            if a > 1 {
                h[0][0] += c * af * (af - 1.0) * powi(xi[0], a - 2) * powi(xi[1], b);
            }
            if a > 0 && b > 0 {
                let v = c * af * bf * powi(xi[0], a - 1) * powi(xi[1], b - 1);
                h[0][1] += v;
                h[1][0] += v;
            }
            if b > 1 {
                h[1][1] += c * powi(xi[0], a) * bf * (bf - 1.0) * powi(xi[1], b - 2);
            }
        }
        h
    }
}

fn powi(x: f64, e: i32) -> f64 {
    match e {
        0 => 1.0,
        1 => x,
        _ => x.powi(e),
    }
}

/// Piecewise polynomial space of total degree `p` on a mesh.
#[derive(Debug)]
pub struct PolySpace {
    pub mesh: Arc<Mesh>,
    pub degree: usize,
    pub continuity: Continuity,
    pub basis: RefBasis,
    cell_dofs: Vec<Vec<usize>>,
    n_dofs: usize,
}

impl PolySpace {
    pub fn new(mesh: Arc<Mesh>, degree: usize, continuity: Continuity) -> Result<Self> {
        if mesh.n_cells() == 0 {
            return Err(Error::InvalidArgument("empty mesh".into()));
        }
        let basis = RefBasis::new(mesh.dim(), degree)?;
        let nb = basis.n_basis();
        let n_cells = mesh.n_cells();
        let (cell_dofs, n_dofs) = match continuity {
            Continuity::Discontinuous => {
                let dofs = (0..n_cells).map(|k| (k * nb..(k + 1) * nb).collect()).collect();
                (dofs, n_cells * nb)
            }
            Continuity::VertexContinuous => {
                if mesh.dim() != 1 {
                    return Err(Error::Unsupported(
                        "vertex-continuous spaces are 1d only".into(),
                    ));
                }
                // vertices first, then cell-interior nodes
                let n_vert = n_cells + 1;
                let mut dofs = Vec::with_capacity(n_cells);
                for k in 0..n_cells {
                    let mut d = Vec::with_capacity(nb);
                    d.push(k);
                    for l in 1..nb - 1 {
                        d.push(n_vert + k * (nb - 2) + l - 1);
                    }
                    if nb > 1 {
                        d.push(k + 1);
                    }
                    dofs.push(d);
                }
                (dofs, n_vert + n_cells * (nb - 2))
            }
        };
        Ok(PolySpace { mesh, degree, continuity, basis, cell_dofs, n_dofs })
    }

    pub fn n_dofs(&self) -> usize {
        self.n_dofs
    }

    pub fn cell_dofs(&self, k: usize) -> &[usize] {
        &self.cell_dofs[k]
    }

    /// Physical coordinates of the Lagrange node `l` of cell `k`.
    pub fn node_position(&self, k: usize, l: usize) -> Pt {
        self.mesh.ref_to_phys(k, self.basis.nodes()[l])
    }
}

/// Evaluation interface shared by all field kinds. Points are physical
/// coordinates lying in the closure of the stated cell, so facet traces are
/// taken by passing the same point with both adjacent cells.
pub trait Field: Send + Sync {
    fn mesh(&self) -> &Arc<Mesh>;
    fn max_degree(&self) -> usize;
    fn value(&self, cell: usize, x: Pt) -> f64;
    fn grad(&self, cell: usize, x: Pt) -> [f64; 2];
    fn hessian(&self, cell: usize, x: Pt) -> [[f64; 2]; 2];
    /// Interior breakpoints of the field inside `cell`, in local [0,1]
    /// coordinates (1d sub-partitions only; empty for smooth-per-cell fields).
    fn breakpoints(&self, _cell: usize) -> Vec<f64> {
        Vec::new()
    }
}

/// Coefficient vector over a `PolySpace`.
#[derive(Debug, Clone)]
pub struct DiscreteField {
    pub space: Arc<PolySpace>,
    pub coeffs: Vec<f64>,
}

impl DiscreteField {
    pub fn new(space: Arc<PolySpace>, coeffs: Vec<f64>) -> Result<Self> {
        if coeffs.len() != space.n_dofs() {
            return Err(Error::InvalidArgument(format!(
                "coefficient length {} != dof count {}",
                coeffs.len(),
                space.n_dofs()
            )));
        }
        Ok(DiscreteField { space, coeffs })
    }

    pub fn zero(space: Arc<PolySpace>) -> Self {
        let n = space.n_dofs();
        DiscreteField { space, coeffs: vec![0.0; n] }
    }

    /// Local coefficients of cell `k` in reference-node order.
    pub fn cell_coeffs(&self, k: usize) -> Vec<f64> {
        self.space.cell_dofs(k).iter().map(|&d| self.coeffs[d]).collect()
    }
}

impl Field for DiscreteField {
    fn mesh(&self) -> &Arc<Mesh> {
        &self.space.mesh
    }
    fn max_degree(&self) -> usize {
        self.space.degree
    }
    fn value(&self, cell: usize, x: Pt) -> f64 {
        let xi = self.space.mesh.phys_to_ref(cell, x);
        let dofs = self.space.cell_dofs(cell);
        (0..dofs.len()).map(|l| self.coeffs[dofs[l]] * self.space.basis.value(l, xi)).sum()
    }
    fn grad(&self, cell: usize, x: Pt) -> [f64; 2] {
        let xi = self.space.mesh.phys_to_ref(cell, x);
        let dofs = self.space.cell_dofs(cell);
        let mut g = [0.0, 0.0];
        for (l, &d) in dofs.iter().enumerate() {
            let gr = self.space.basis.grad_ref(l, xi);
            g[0] += self.coeffs[d] * gr[0];
            g[1] += self.coeffs[d] * gr[1];
        }
        self.space.mesh.grad_to_phys(cell, g)
    }
    fn hessian(&self, cell: usize, x: Pt) -> [[f64; 2]; 2] {
        let xi = self.space.mesh.phys_to_ref(cell, x);
        let dofs = self.space.cell_dofs(cell);
        let mut h = [[0.0; 2]; 2];
        for (l, &d) in dofs.iter().enumerate() {
            let hr = self.space.basis.hess_ref(l, xi);
            for a in 0..2 {
                for b in 0..2 {
                    h[a][b] += self.coeffs[d] * hr[a][b];
                }
            }
        }
        // H_phys = J^{-T} H_ref J^{-1} for affine cells
        let jinv_t_row = |g: [f64; 2]| self.space.mesh.grad_to_phys(cell, g);
        let c0 = jinv_t_row([h[0][0], h[1][0]]);
        let c1 = jinv_t_row([h[0][1], h[1][1]]);
        let r0 = jinv_t_row([c0[0], c1[0]]);
        let r1 = jinv_t_row([c0[1], c1[1]]);
        [r0, r1]
    }
}

/// Per-cell piecewise polynomial on an internal breakpoint sub-partition
/// (the SIAC output). Coefficients are monomial in the sub-cell-local
/// coordinate tau in [0,1].
#[derive(Debug, Clone)]
pub struct SubdividedPolyField {
    pub mesh: Arc<Mesh>,
    pub degree: usize,
    /// smoothness class across internal breakpoints (C^m)
    pub continuity_class: usize,
    cells: Vec<SubdividedCell>,
}

#[derive(Debug, Clone)]
pub struct SubdividedCell {
    /// local breakpoints, 0 = b_0 < ... < b_s = 1
    pub breaks: Vec<f64>,
    /// per sub-cell monomial coefficients
    pub coeffs: Vec<Vec<f64>>,
}

impl SubdividedPolyField {
    pub fn new(
        mesh: Arc<Mesh>,
        degree: usize,
        continuity_class: usize,
        cells: Vec<SubdividedCell>,
    ) -> Result<Self> {
        if mesh.dim() != 1 {
            return Err(Error::Unsupported("sub-partition fields are 1d".into()));
        }
        if cells.len() != mesh.n_cells() {
            return Err(Error::InvalidArgument("cell data does not match mesh".into()));
        }
        for (k, c) in cells.iter().enumerate() {
            let ok = c.breaks.len() >= 2
                && c.breaks.first() == Some(&0.0)
                && c.breaks.last() == Some(&1.0)
                && c.breaks.windows(2).all(|w| w[0] < w[1])
                && c.coeffs.len() == c.breaks.len() - 1;
            if !ok {
                return Err(Error::InvalidArgument(format!("bad sub-partition in cell {k}")));
            }
        }
        Ok(SubdividedPolyField { mesh, degree, continuity_class, cells })
    }

    fn locate(&self, cell: usize, x: Pt) -> (usize, f64, f64) {
        let xi = self.mesh.phys_to_ref(cell, x)[0];
        let breaks = &self.cells[cell].breaks;
        let mut i = breaks.partition_point(|&b| b <= xi);
        i = i.clamp(1, breaks.len() - 1) - 1;
        let width = breaks[i + 1] - breaks[i];
        let tau = ((xi - breaks[i]) / width).clamp(0.0, 1.0);
        (i, tau, width)
    }

    pub fn cell_data(&self, cell: usize) -> &SubdividedCell {
        &self.cells[cell]
    }
}

impl Field for SubdividedPolyField {
    fn mesh(&self) -> &Arc<Mesh> {
        &self.mesh
    }
    fn max_degree(&self) -> usize {
        self.degree
    }
    fn value(&self, cell: usize, x: Pt) -> f64 {
        let (i, tau, _) = self.locate(cell, x);
        horner(&self.cells[cell].coeffs[i], tau)
    }
    fn grad(&self, cell: usize, x: Pt) -> [f64; 2] {
        let (i, tau, width) = self.locate(cell, x);
        let d = horner_deriv(&self.cells[cell].coeffs[i], tau);
        [d / (width * self.mesh.cell_diam(cell)), 0.0]
    }
    fn hessian(&self, cell: usize, x: Pt) -> [[f64; 2]; 2] {
        let (i, tau, width) = self.locate(cell, x);
        let d2 = horner_deriv2(&self.cells[cell].coeffs[i], tau);
        let scale = width * self.mesh.cell_diam(cell);
        [[d2 / (scale * scale), 0.0], [0.0, 0.0]]
    }
    fn breakpoints(&self, cell: usize) -> Vec<f64> {
        let b = &self.cells[cell].breaks;
        b[1..b.len() - 1].to_vec()
    }
}

fn horner(c: &[f64], x: f64) -> f64 {
    c.iter().rev().fold(0.0, |acc, &ci| acc * x + ci)
}

fn horner_deriv(c: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for j in (1..c.len()).rev() {
        acc = acc * x + j as f64 * c[j];
    }
    acc
}

fn horner_deriv2(c: &[f64], x: f64) -> f64 {
    let mut acc = 0.0;
    for j in (2..c.len()).rev() {
        acc = acc * x + (j * (j - 1)) as f64 * c[j];
    }
    acc
}

/// Formal linear combination of fields sharing one mesh.
#[derive(Clone)]
pub struct CompositeField {
    terms: Vec<(f64, Arc<dyn Field>)>,
}

impl CompositeField {
    pub fn new(terms: Vec<(f64, Arc<dyn Field>)>) -> Result<Self> {
        if terms.is_empty() {
            return Err(Error::InvalidArgument("composite field needs terms".into()));
        }
        let mesh = terms[0].1.mesh().clone();
        for (_, f) in &terms {
            if !Arc::ptr_eq(f.mesh(), &mesh) {
                return Err(Error::InvalidArgument("composite members must share the mesh".into()));
            }
        }
        Ok(CompositeField { terms })
    }

    pub fn terms(&self) -> &[(f64, Arc<dyn Field>)] {
        &self.terms
    }
}

impl Field for CompositeField {
    fn mesh(&self) -> &Arc<Mesh> {
        self.terms[0].1.mesh()
    }
    fn max_degree(&self) -> usize {
        self.terms.iter().map(|(_, f)| f.max_degree()).max().unwrap_or(0)
    }
    fn value(&self, cell: usize, x: Pt) -> f64 {
        self.terms.iter().map(|(w, f)| w * f.value(cell, x)).sum()
    }
    fn grad(&self, cell: usize, x: Pt) -> [f64; 2] {
        let mut g = [0.0, 0.0];
        for (w, f) in &self.terms {
            let gf = f.grad(cell, x);
            g[0] += w * gf[0];
            g[1] += w * gf[1];
        }
        g
    }
    fn hessian(&self, cell: usize, x: Pt) -> [[f64; 2]; 2] {
        let mut h = [[0.0; 2]; 2];
        for (w, f) in &self.terms {
            let hf = f.hessian(cell, x);
            for a in 0..2 {
                for b in 0..2 {
                    h[a][b] += w * hf[a][b];
                }
            }
        }
        h
    }
    fn breakpoints(&self, cell: usize) -> Vec<f64> {
        let mut all: Vec<f64> = self.terms.iter().flat_map(|(_, f)| f.breakpoints(cell)).collect();
        all.sort_by(|a, b| a.partial_cmp(b).unwrap());
        all.dedup_by(|a, b| (*a - *b).abs() < 1e-14);
        all
    }
}

/// Nodal (Lagrange) interpolation of a function into the space.
pub fn interpolate<F: Fn(Pt) -> f64>(f: F, space: &Arc<PolySpace>) -> DiscreteField {
    let mut coeffs = vec![0.0; space.n_dofs()];
    for k in 0..space.mesh.n_cells() {
        for (l, &d) in space.cell_dofs(k).iter().enumerate() {
            coeffs[d] = f(space.node_position(k, l));
        }
    }
    DiscreteField { space: space.clone(), coeffs }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::{structured_rect, uniform_interval};

    fn space_1d(n: usize, p: usize, cont: Continuity) -> Arc<PolySpace> {
        let mesh = uniform_interval(0.0, 1.0, n).unwrap().into_arc();
        Arc::new(PolySpace::new(mesh, p, cont).unwrap())
    }

    #[test]
    fn partition_of_unity() {
        for dim in [1, 2] {
            for p in 1..=3 {
                let basis = RefBasis::new(dim, p).unwrap();
                let pts: Vec<Pt> = if dim == 1 {
                    vec![[0.0, 0.0], [0.3, 0.0], [0.77, 0.0], [1.0, 0.0]]
                } else {
                    vec![[0.2, 0.1], [0.0, 0.0], [0.3, 0.55], [1.0 / 3.0, 1.0 / 3.0]]
                };
                for xi in pts {
                    let s: f64 = (0..basis.n_basis()).map(|i| basis.value(i, xi)).sum();
                    assert!((s - 1.0).abs() < 1e-13, "dim {dim} p {p}");
                }
            }
        }
    }

    #[test]
    fn interpolation_reproduces_polynomials() {
        for p in 1..=3usize {
            let space = space_1d(4, p, Continuity::Discontinuous);
            let f = |x: Pt| (1.0 + x[0]).powi(p as i32);
            let u = interpolate(f, &space);
            for k in 0..4 {
                for t in [0.1, 0.5, 0.9] {
                    let x = space.mesh.ref_to_phys(k, [t, 0.0]);
                    assert!((u.value(k, x) - f(x)).abs() < 1e-12);
                }
            }
        }
    }

    #[test]
    fn interpolation_error_scaling() {
        // u = x^{p+1}: interpolation error ~ O(h^{p+1}), ratio ~ 2^{p+1}
        for p in 1..=3usize {
            let err = |n: usize| -> f64 {
                let space = space_1d(n, p, Continuity::Discontinuous);
                let f = |x: Pt| x[0].powi(p as i32 + 1);
                let u = interpolate(f, &space);
                let mut e: f64 = 0.0;
                for k in 0..n {
                    for t in 0..20 {
                        let x = space.mesh.ref_to_phys(k, [t as f64 / 19.0, 0.0]);
                        e = e.max((u.value(k, x) - f(x)).abs());
                    }
                }
                e
            };
            let ratio = err(8) / err(16);
            let expect = 2f64.powi(p as i32 + 1);
            assert!(
                (ratio - expect).abs() < 0.2 * expect,
                "p={p}: ratio {ratio} vs {expect}"
            );
        }
    }

    #[test]
    fn interpolate_zero_gives_zero() {
        let space = space_1d(5, 2, Continuity::VertexContinuous);
        let u = interpolate(|_| 0.0, &space);
        assert!(u.coeffs.iter().all(|&c| c == 0.0));
    }

    #[test]
    fn gradient_of_x_squared() {
        let space = space_1d(1, 2, Continuity::Discontinuous);
        let u = interpolate(|x| x[0] * x[0], &space);
        let g = u.grad(0, [0.5, 0.0]);
        assert!((g[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_field_everywhere() {
        let mesh = structured_rect(0.0, 1.0, 0.0, 1.0, 2, 2).unwrap().into_arc();
        let space = Arc::new(PolySpace::new(mesh, 2, Continuity::Discontinuous).unwrap());
        let u = interpolate(|_| 1.0, &space);
        for k in 0..space.mesh.n_cells() {
            let x = space.mesh.ref_to_phys(k, [0.25, 0.4]);
            assert!((u.value(k, x) - 1.0).abs() < 1e-13);
            let g = u.grad(k, x);
            assert!(g[0].abs() < 1e-12 && g[1].abs() < 1e-12);
        }
    }

    #[test]
    fn composite_cancellation() {
        let space = space_1d(3, 2, Continuity::Discontinuous);
        let u = Arc::new(interpolate(|x| x[0] * x[0] + 1.0, &space));
        let c = CompositeField::new(vec![(1.0, u.clone() as Arc<dyn Field>), (-1.0, u)]).unwrap();
        for k in 0..3 {
            let x = space.mesh.ref_to_phys(k, [0.3, 0.0]);
            assert_eq!(c.value(k, x), 0.0);
        }
    }

    #[test]
    fn vertex_continuous_dof_sharing() {
        let space = space_1d(4, 3, Continuity::VertexContinuous);
        // 5 vertices + 4 cells * 2 interior nodes
        assert_eq!(space.n_dofs(), 13);
        assert_eq!(space.cell_dofs(0)[3], space.cell_dofs(1)[0]);
    }

    #[test]
    fn vertex_continuous_rejected_in_2d() {
        let mesh = structured_rect(0.0, 1.0, 0.0, 1.0, 1, 1).unwrap().into_arc();
        assert!(PolySpace::new(mesh, 1, Continuity::VertexContinuous).is_err());
    }

    #[test]
    fn subdivided_field_eval_and_breakpoints() {
        let mesh = uniform_interval(0.0, 1.0, 2).unwrap().into_arc();
        // cell 0: two sub-cells, tau and 1+tau; cell 1: single poly 3
        let cells = vec![
            SubdividedCell { breaks: vec![0.0, 0.5, 1.0], coeffs: vec![vec![0.0, 1.0], vec![1.0, 1.0]] },
            SubdividedCell { breaks: vec![0.0, 1.0], coeffs: vec![vec![3.0]] },
        ];
        let f = SubdividedPolyField::new(mesh.clone(), 1, 0, cells).unwrap();
        assert!((f.value(0, [0.125, 0.0]) - 0.5).abs() < 1e-14);
        assert!((f.value(0, [0.375, 0.0]) - 1.5).abs() < 1e-14);
        assert!((f.value(1, [0.7, 0.0]) - 3.0).abs() < 1e-14);
        assert_eq!(f.breakpoints(0), vec![0.5]);
        // gradient: dtau/dx = 1/(0.5 * 0.5) = 4
        assert!((f.grad(0, [0.1, 0.0])[0] - 4.0).abs() < 1e-12);
    }

    #[test]
    fn hessian_of_quadratic_on_triangle() {
        let mesh = structured_rect(0.0, 2.0, 0.0, 1.0, 1, 1).unwrap().into_arc();
        let space = Arc::new(PolySpace::new(mesh, 2, Continuity::Discontinuous).unwrap());
        let u = interpolate(|x| 3.0 * x[0] * x[0] + 2.0 * x[0] * x[1] - x[1] * x[1], &space);
        for k in 0..2 {
            let x = space.mesh.ref_to_phys(k, [0.21, 0.37]);
            let g = u.grad(k, x);
            assert!((g[0] - (6.0 * x[0] + 2.0 * x[1])).abs() < 1e-10);
            assert!((g[1] - (2.0 * x[0] - 2.0 * x[1])).abs() < 1e-10);
            let h = u.hessian(k, x);
            assert!((h[0][0] - 6.0).abs() < 1e-10);
            assert!((h[0][1] - 2.0).abs() < 1e-10);
            assert!((h[1][0] - 2.0).abs() < 1e-10);
            assert!((h[1][1] + 2.0).abs() < 1e-10);
        }
    }
}
