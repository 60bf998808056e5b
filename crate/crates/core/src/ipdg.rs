//! Interior-penalty bilinear form: sparse assembly, load vector with weak
//! Dirichlet data (symmetric Nitsche terms), application of the form to
//! arbitrary piecewise-smooth fields, and the linear solver.

use crate::mesh::{Facet, Mesh};
use crate::quadrature::{cell_rule, interval_rule};
use crate::space::{Field, PolySpace};
use crate::{vec2_dot, Error, Pt, Result};
use rayon::prelude::*;
use std::sync::Arc;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PenaltyMode {
    /// sigma_e = c p^2 / h_e
    Standard,
    /// sigma_e = c p^2 / h_e^2
    Hyper,
}

/// Jump penalization; the coefficient below is the full multiplier of the
/// [u][v] facet term (it absorbs the 1/h_e of the bilinear form).
#[derive(Debug, Clone, Copy)]
pub struct PenaltySpec {
    pub mode: PenaltyMode,
    pub c: f64,
}

impl PenaltySpec {
    pub fn standard() -> Self {
        PenaltySpec { mode: PenaltyMode::Standard, c: 10.0 }
    }
    pub fn hyper() -> Self {
        PenaltySpec { mode: PenaltyMode::Hyper, c: 10.0 }
    }
    pub fn with_constant(mode: PenaltyMode, c: f64) -> Result<Self> {
        if c <= 0.0 {
            return Err(Error::InvalidArgument("penalty constant must be positive".into()));
        }
        Ok(PenaltySpec { mode, c })
    }
    pub fn coefficient(&self, p: usize, h_e: f64) -> f64 {
        let base = self.c * (p * p) as f64;
        match self.mode {
            PenaltyMode::Standard => base / h_e,
            PenaltyMode::Hyper => base / (h_e * h_e),
        }
    }
}

type MatFn = dyn Fn(Pt) -> [[f64; 2]; 2] + Send + Sync;
type GradMatFn = dyn Fn(Pt) -> [[[f64; 2]; 2]; 2] + Send + Sync;
type ScalarFn = dyn Fn(Pt) -> f64 + Send + Sync;

/// Diffusion tensor D(x); uniformly SPD, checked at quadrature samples.
#[derive(Clone)]
pub struct DiffusionSpec {
    eval: Arc<MatFn>,
    grad: Option<Arc<GradMatFn>>,
    scalar: Option<Arc<ScalarFn>>,
}

impl DiffusionSpec {
    pub fn constant(c: f64) -> Self {
        DiffusionSpec {
            eval: Arc::new(move |_| [[c, 0.0], [0.0, c]]),
            grad: Some(Arc::new(|_| [[[0.0; 2]; 2]; 2])),
            scalar: Some(Arc::new(move |_| c)),
        }
    }

    /// Scalar diffusion d(x) I.
    pub fn scalar<F>(d: F) -> Self
    where
        F: Fn(Pt) -> f64 + Send + Sync + 'static,
    {
        let d = Arc::new(d);
        let d2 = d.clone();
        DiffusionSpec {
            eval: Arc::new(move |x| {
                let v = d(x);
                [[v, 0.0], [0.0, v]]
            }),
            grad: None,
            scalar: Some(d2),
        }
    }

    /// Scalar diffusion with analytic gradient of d.
    pub fn scalar_with_grad<F, G>(d: F, grad_d: G) -> Self
    where
        F: Fn(Pt) -> f64 + Send + Sync + 'static,
        G: Fn(Pt) -> [f64; 2] + Send + Sync + 'static,
    {
        let d = Arc::new(d);
        let d2 = d.clone();
        DiffusionSpec {
            eval: Arc::new(move |x| {
                let v = d(x);
                [[v, 0.0], [0.0, v]]
            }),
            grad: Some(Arc::new(move |x| {
                let g = grad_d(x);
                [[[g[0], 0.0], [0.0, g[0]]], [[g[1], 0.0], [0.0, g[1]]]]
            })),
            scalar: Some(d2),
        }
    }

    pub fn matrix(&self, x: Pt) -> [[f64; 2]; 2] {
        (self.eval)(x)
    }

    /// d(x) when the tensor was built from a scalar coefficient.
    pub fn scalar_part(&self) -> Option<&Arc<ScalarFn>> {
        self.scalar.as_ref()
    }

    pub fn apply(&self, x: Pt, v: [f64; 2]) -> [f64; 2] {
        let d = (self.eval)(x);
        [d[0][0] * v[0] + d[0][1] * v[1], d[1][0] * v[0] + d[1][1] * v[1]]
    }

    /// div(D grad w) at x from the chain rule; dD falls back to central
    /// differences with step 1e-6 h when no analytic gradient is available.
    pub fn div_flux(&self, x: Pt, grad_w: [f64; 2], hess_w: [[f64; 2]; 2], h: f64) -> f64 {
        let dgrad = match &self.grad {
            Some(g) => g(x),
            None => {
                let step = 1e-6 * h;
                let mut out = [[[0.0; 2]; 2]; 2];
                for j in 0..2 {
                    let mut xp = x;
                    let mut xm = x;
                    xp[j] += step;
                    xm[j] -= step;
                    let (dp, dm) = ((self.eval)(xp), (self.eval)(xm));
                    for a in 0..2 {
                        for b in 0..2 {
                            out[j][a][b] = (dp[a][b] - dm[a][b]) / (2.0 * step);
                        }
                    }
                }
                out
            }
        };
        let d = (self.eval)(x);
        let mut s = 0.0;
        for j in 0..2 {
            // (d_j D grad w)_j
            s += dgrad[j][j][0] * grad_w[0] + dgrad[j][j][1] * grad_w[1];
            for k in 0..2 {
                s += d[j][k] * hess_w[j][k];
            }
        }
        s
    }

    fn spd_check(&self, x: Pt) -> Result<()> {
        let d = (self.eval)(x);
        let scale = d[0][0].abs().max(d[1][1].abs()).max(d[0][1].abs()).max(1e-300);
        let sym = (d[0][1] - d[1][0]).abs() <= 1e-10 * scale;
        let pd = d[0][0] > 0.0 && d[0][0] * d[1][1] - d[0][1] * d[1][0] > 0.0;
        if sym && pd {
            Ok(())
        } else {
            Err(Error::NonSpdDiffusion(x[0], x[1]))
        }
    }
}

/// Symmetric sparse matrix in CSR form, assembled from coordinate entries.
#[derive(Debug, Clone)]
pub struct SparseOperator {
    pub n: usize,
    pub row_ptr: Vec<usize>,
    pub col_idx: Vec<usize>,
    pub vals: Vec<f64>,
}

impl SparseOperator {
    pub fn from_coo(n: usize, mut entries: Vec<(usize, usize, f64)>) -> Self {
        entries.sort_unstable_by_key(|&(i, j, _)| (i, j));
        let mut row_ptr = vec![0usize; n + 1];
        let mut col_idx = Vec::new();
        let mut vals = Vec::new();
        let mut last = None;
        for (i, j, v) in entries {
            if last == Some((i, j)) {
                *vals.last_mut().unwrap() += v;
            } else {
                col_idx.push(j);
                vals.push(v);
                row_ptr[i + 1] += 1;
                last = Some((i, j));
            }
        }
        for i in 0..n {
            row_ptr[i + 1] += row_ptr[i];
        }
        SparseOperator { n, row_ptr, col_idx, vals }
    }

    pub fn nnz(&self) -> usize {
        self.vals.len()
    }

    pub fn matvec(&self, x: &[f64], y: &mut [f64]) {
        for i in 0..self.n {
            let mut s = 0.0;
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                s += self.vals[k] * x[self.col_idx[k]];
            }
            y[i] = s;
        }
    }

    pub fn diag(&self) -> Vec<f64> {
        let mut d = vec![0.0; self.n];
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col_idx[k] == i {
                    d[i] = self.vals[k];
                }
            }
        }
        d
    }

    pub fn max_abs(&self) -> f64 {
        self.vals.iter().fold(0.0f64, |m, v| m.max(v.abs()))
    }

    /// max |A_ij - A_ji|, for the symmetry invariant.
    pub fn max_asymmetry(&self) -> f64 {
        let at = |i: usize, j: usize| -> f64 {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                if self.col_idx[k] == j {
                    return self.vals[k];
                }
            }
            0.0
        };
        let mut worst = 0.0f64;
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                let j = self.col_idx[k];
                worst = worst.max((self.vals[k] - at(j, i)).abs());
            }
        }
        worst
    }

    /// Coordinate text dump, one `i j value` per line.
    pub fn dump_coo<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        for i in 0..self.n {
            for k in self.row_ptr[i]..self.row_ptr[i + 1] {
                writeln!(w, "{} {} {:.16e}", i, self.col_idx[k], self.vals[k])?;
            }
        }
        Ok(())
    }
}

/// Quadrature controls for assembly; `quad_extra` raises every exactness
/// degree, which the convergence drivers use when integrating non-polynomial
/// data to tolerances below the discretization error.
#[derive(Debug, Clone, Copy, Default)]
pub struct AssemblyOpts {
    pub quad_extra: usize,
}

/// Physical quadrature for one cell: reference points with physical weights,
/// splitting 1d cells at the given local breakpoints.
pub fn cell_points(
    mesh: &Mesh,
    cell: usize,
    breaks: &[f64],
    exactness: usize,
) -> Result<Vec<(Pt, f64)>> {
    match mesh.dim() {
        1 => {
            let rule = interval_rule(exactness)?;
            let h = mesh.cell_diam(cell);
            let mut cuts = vec![0.0];
            cuts.extend(breaks.iter().copied().filter(|&b| b > 1e-14 && b < 1.0 - 1e-14));
            cuts.push(1.0);
            let mut out = Vec::with_capacity(rule.points.len() * (cuts.len() - 1));
            for pair in cuts.windows(2) {
                let (a, b) = (pair[0], pair[1]);
                for (p, &w) in rule.points.iter().zip(&rule.weights) {
                    out.push(([a + p[0] * (b - a), 0.0], w * (b - a) * h));
                }
            }
            Ok(out)
        }
        _ => {
            let rule = cell_rule(2, exactness)?;
            let scale = 2.0 * mesh.cell_measure(cell);
            Ok(rule
                .points
                .iter()
                .zip(&rule.weights)
                .map(|(&p, &w)| (p, w * scale))
                .collect())
        }
    }
}

/// Physical quadrature points and weights on a facet (point facets give a
/// single unit-weight point).
pub fn facet_points(facet: &Facet, exactness: usize) -> Result<Vec<(Pt, f64)>> {
    if facet.a == facet.b {
        return Ok(vec![(facet.a, 1.0)]);
    }
    let rule = interval_rule(exactness)?;
    Ok(rule
        .points
        .iter()
        .zip(&rule.weights)
        .map(|(p, &w)| (facet.point_at(p[0]), w * facet.measure))
        .collect())
}

struct SideBasis {
    vals: Vec<f64>,
    grads: Vec<[f64; 2]>,
}

fn side_basis(space: &PolySpace, cell: usize, x: Pt) -> SideBasis {
    let xi = space.mesh.phys_to_ref(cell, x);
    let nb = space.basis.n_basis();
    let mut vals = Vec::with_capacity(nb);
    let mut grads = Vec::with_capacity(nb);
    for l in 0..nb {
        vals.push(space.basis.value(l, xi));
        grads.push(space.mesh.grad_to_phys(cell, space.basis.grad_ref(l, xi)));
    }
    SideBasis { vals, grads }
}

/// Assemble the interior-penalty stiffness matrix.
pub fn assemble_matrix(
    space: &PolySpace,
    d: &DiffusionSpec,
    pen: &PenaltySpec,
    opts: AssemblyOpts,
) -> Result<SparseOperator> {
    let mesh = &space.mesh;
    let p = space.degree;
    let nb = space.basis.n_basis();
    let cell_exact = 2 * p + 2 + opts.quad_extra;
    let facet_exact = 2 * p + 1 + opts.quad_extra;

    // cell terms, basis tables shared across cells via the common rule
    let rule = cell_rule(mesh.dim(), cell_exact)?;
    let tab: Vec<(Vec<f64>, Vec<[f64; 2]>)> = rule
        .points
        .iter()
        .map(|&xi| {
            let vals = (0..nb).map(|l| space.basis.value(l, xi)).collect();
            let grads = (0..nb).map(|l| space.basis.grad_ref(l, xi)).collect();
            (vals, grads)
        })
        .collect();

    let cell_local: Vec<Result<Vec<(usize, usize, f64)>>> = (0..mesh.n_cells())
        .into_par_iter()
        .map(|k| {
            let dofs = space.cell_dofs(k);
            let scale = match mesh.dim() {
                1 => mesh.cell_measure(k),
                _ => 2.0 * mesh.cell_measure(k),
            };
            let mut local = vec![0.0; nb * nb];
            for (q, (_vals, grads_ref)) in tab.iter().enumerate() {
                let x = mesh.ref_to_phys(k, rule.points[q]);
                d.spd_check(x)?;
                let w = rule.weights[q] * scale;
                let grads: Vec<[f64; 2]> =
                    grads_ref.iter().map(|&g| mesh.grad_to_phys(k, g)).collect();
                let dg: Vec<[f64; 2]> = grads.iter().map(|&g| d.apply(x, g)).collect();
                for i in 0..nb {
                    for j in 0..nb {
                        local[i * nb + j] += w * vec2_dot(dg[i], grads[j]);
                    }
                }
            }
            let mut out = Vec::with_capacity(nb * nb);
            for i in 0..nb {
                for j in 0..nb {
                    out.push((dofs[i], dofs[j], local[i * nb + j]));
                }
            }
            Ok(out)
        })
        .collect();

    let facets = mesh.facets();
    let facet_local: Vec<Result<Vec<(usize, usize, f64)>>> = facets
        .par_iter()
        .map(|f| {
            let pts = facet_points(f, facet_exact)?;
            let sigma_c = pen.coefficient(p, f.h_e);
            let wavg = if f.is_boundary() { 1.0 } else { 0.5 };
            let mut sides = vec![(f.minus, f.normal)];
            if let Some(plus) = f.plus {
                sides.push((plus, [-f.normal[0], -f.normal[1]]));
            }
            let ns = sides.len();
            let ndof = ns * nb;
            let mut local = vec![0.0; ndof * ndof];
            for (x, w) in pts {
                let bases: Vec<SideBasis> =
                    sides.iter().map(|&(c, _)| side_basis(space, c, x)).collect();
                // per stacked dof: jump vector and averaged flux
                let mut jump = vec![[0.0; 2]; ndof];
                let mut flux = vec![[0.0; 2]; ndof];
                for (s, &(_, n)) in sides.iter().enumerate() {
                    for l in 0..nb {
                        let a = s * nb + l;
                        jump[a] = [bases[s].vals[l] * n[0], bases[s].vals[l] * n[1]];
                        let dfl = d.apply(x, bases[s].grads[l]);
                        flux[a] = [wavg * dfl[0], wavg * dfl[1]];
                    }
                }
                for a in 0..ndof {
                    for b in 0..ndof {
                        local[a * ndof + b] += w
                            * (-vec2_dot(jump[a], flux[b]) - vec2_dot(jump[b], flux[a])
                                + sigma_c * vec2_dot(jump[a], jump[b]));
                    }
                }
            }
            let mut stacked = Vec::with_capacity(ndof);
            for &(c, _) in &sides {
                stacked.extend_from_slice(space.cell_dofs(c));
            }
            let mut out = Vec::with_capacity(ndof * ndof);
            for a in 0..ndof {
                for b in 0..ndof {
                    out.push((stacked[a], stacked[b], local[a * ndof + b]));
                }
            }
            Ok(out)
        })
        .collect();

    let mut entries = Vec::new();
    for chunk in cell_local.into_iter().chain(facet_local) {
        entries.extend(chunk?);
    }
    Ok(SparseOperator::from_coo(space.n_dofs(), entries))
}

/// Load vector: volume forcing plus symmetric-Nitsche boundary terms for the
/// Dirichlet data g.
pub fn assemble_load<F, G>(
    space: &PolySpace,
    f: F,
    g: G,
    d: &DiffusionSpec,
    pen: &PenaltySpec,
    opts: AssemblyOpts,
) -> Result<Vec<f64>>
where
    F: Fn(Pt) -> f64 + Send + Sync,
    G: Fn(Pt) -> f64 + Send + Sync,
{
    let mesh = &space.mesh;
    let p = space.degree;
    let nb = space.basis.n_basis();
    let mut out = vec![0.0; space.n_dofs()];

    let cell_exact = 2 * p + 2 + opts.quad_extra;
    for k in 0..mesh.n_cells() {
        let dofs = space.cell_dofs(k);
        for (xi, w) in cell_points(mesh, k, &[], cell_exact)? {
            let x = mesh.ref_to_phys(k, xi);
            let fv = f(x);
            for l in 0..nb {
                out[dofs[l]] += w * fv * space.basis.value(l, xi);
            }
        }
    }

    let facet_exact = 2 * p + 1 + opts.quad_extra;
    for facet in mesh.facets().iter().filter(|f| f.is_boundary()) {
        let sigma_c = pen.coefficient(p, facet.h_e);
        let dofs = space.cell_dofs(facet.minus);
        for (x, w) in facet_points(facet, facet_exact)? {
            let gv = g(x);
            let sb = side_basis(space, facet.minus, x);
            for l in 0..nb {
                let dfl = d.apply(x, sb.grads[l]);
                out[dofs[l]] +=
                    w * gv * (-vec2_dot(facet.normal, dfl) + sigma_c * sb.vals[l]);
            }
        }
    }
    Ok(out)
}

/// Entries A_h(w, phi_i) of the bilinear form applied to an arbitrary
/// piecewise-smooth field; quadrature respects the field's sub-partition.
pub fn apply_form(
    w: &dyn Field,
    space: &PolySpace,
    d: &DiffusionSpec,
    pen: &PenaltySpec,
    opts: AssemblyOpts,
) -> Result<Vec<f64>> {
    let mesh = &space.mesh;
    let p = space.degree;
    let nb = space.basis.n_basis();
    let degw = w.max_degree();
    let cell_exact = degw + p + 2 + opts.quad_extra;
    let facet_exact = degw + p + 1 + opts.quad_extra;

    let cell_parts: Vec<Result<Vec<(usize, f64)>>> = (0..mesh.n_cells())
        .into_par_iter()
        .map(|k| {
            let dofs = space.cell_dofs(k);
            let mut acc = vec![0.0; nb];
            for (xi, wq) in cell_points(mesh, k, &w.breakpoints(k), cell_exact)? {
                let x = mesh.ref_to_phys(k, xi);
                let flux = d.apply(x, w.grad(k, x));
                for l in 0..nb {
                    let g = mesh.grad_to_phys(k, space.basis.grad_ref(l, xi));
                    acc[l] += wq * vec2_dot(flux, g);
                }
            }
            Ok(dofs.iter().copied().zip(acc).collect())
        })
        .collect();

    let facets = mesh.facets();
    let facet_parts: Vec<Result<Vec<(usize, f64)>>> = facets
        .par_iter()
        .map(|f| {
            let sigma_c = pen.coefficient(p, f.h_e);
            let wavg = if f.is_boundary() { 1.0 } else { 0.5 };
            let mut sides = vec![(f.minus, f.normal)];
            if let Some(plus) = f.plus {
                sides.push((plus, [-f.normal[0], -f.normal[1]]));
            }
            let mut acc: Vec<(usize, f64)> = Vec::new();
            for &(c, _) in &sides {
                for &dof in space.cell_dofs(c) {
                    acc.push((dof, 0.0));
                }
            }
            for (x, wq) in facet_points(f, facet_exact)? {
                // traces of w from every side
                let mut jump_w = [0.0; 2];
                let mut flux_w = [0.0; 2];
                for &(c, n) in &sides {
                    let wv = w.value(c, x);
                    jump_w[0] += wv * n[0];
                    jump_w[1] += wv * n[1];
                    let fl = d.apply(x, w.grad(c, x));
                    flux_w[0] += wavg * fl[0];
                    flux_w[1] += wavg * fl[1];
                }
                for (s, &(c, n)) in sides.iter().enumerate() {
                    let sb = side_basis(space, c, x);
                    for l in 0..nb {
                        let jump_phi = [sb.vals[l] * n[0], sb.vals[l] * n[1]];
                        let flux_phi = {
                            let fl = d.apply(x, sb.grads[l]);
                            [wavg * fl[0], wavg * fl[1]]
                        };
                        acc[s * nb + l].1 += wq
                            * (-vec2_dot(jump_phi, flux_w) - vec2_dot(jump_w, flux_phi)
                                + sigma_c * vec2_dot(jump_w, jump_phi));
                    }
                }
            }
            Ok(acc)
        })
        .collect();

    let mut out = vec![0.0; space.n_dofs()];
    for chunk in cell_parts.into_iter().chain(facet_parts) {
        for (dof, v) in chunk? {
            out[dof] += v;
        }
    }
    Ok(out)
}

/// Threshold below which a sparse direct factorization is used.
pub const DIRECT_LIMIT: usize = 200_000;

enum FactorKind {
    Direct(faer::sparse::linalg::solvers::Llt<usize, f64>),
    Cg { diag_inv: Vec<f64>, tol: f64 },
}

/// Reusable factorization (or preconditioner) of an assembled operator.
pub struct Factorized {
    a: Arc<SparseOperator>,
    kind: FactorKind,
}

#[derive(Debug, Clone)]
pub struct SolveInfo {
    pub x: Vec<f64>,
    pub rel_residual: f64,
    pub iterations: usize,
}

impl Factorized {
    pub fn new(a: Arc<SparseOperator>, tol: f64) -> Result<Self> {
        let kind = if a.n <= DIRECT_LIMIT {
            // the CSR of a symmetric matrix is also its CSC
            let sym = faer::sparse::SymbolicSparseColMatRef::new_checked(
                a.n,
                a.n,
                &a.row_ptr,
                None,
                &a.col_idx,
            );
            let mat = faer::sparse::SparseColMatRef::new(sym, &a.vals);
            let symbolic = faer::sparse::linalg::solvers::SymbolicLlt::try_new(sym, faer::Side::Lower)
                .map_err(|e| Error::SingularFactor(format!("{e:?}")))?;
            let llt = faer::sparse::linalg::solvers::Llt::try_new_with_symbolic(
                symbolic,
                mat,
                faer::Side::Lower,
            )
            .map_err(|e| Error::SingularFactor(format!("{e:?}")))?;
            FactorKind::Direct(llt)
        } else {
            let diag = a.diag();
            if diag.iter().any(|&v| v <= 0.0) {
                return Err(Error::SingularFactor("non-positive diagonal".into()));
            }
            FactorKind::Cg { diag_inv: diag.iter().map(|v| 1.0 / v).collect(), tol }
        };
        Ok(Factorized { a, kind })
    }

    pub fn operator(&self) -> &Arc<SparseOperator> {
        &self.a
    }

    pub fn solve(&self, b: &[f64]) -> Result<SolveInfo> {
        let n = self.a.n;
        assert_eq!(b.len(), n);
        let b_norm = norm2(b);
        if b_norm == 0.0 {
            return Ok(SolveInfo { x: vec![0.0; n], rel_residual: 0.0, iterations: 0 });
        }
        match &self.kind {
            FactorKind::Direct(llt) => {
                use faer::linalg::solvers::Solve;
                let mut x = b.to_vec();
                let rhs = faer::MatMut::from_column_major_slice_mut(&mut x, n, 1);
                llt.solve_in_place(rhs);
                let mut r = vec![0.0; n];
                self.a.matvec(&x, &mut r);
                for i in 0..n {
                    r[i] -= b[i];
                }
                Ok(SolveInfo { x, rel_residual: norm2(&r) / b_norm, iterations: 0 })
            }
            FactorKind::Cg { diag_inv, tol } => self.cg(b, diag_inv, *tol, b_norm),
        }
    }

    fn cg(&self, b: &[f64], diag_inv: &[f64], tol: f64, b_norm: f64) -> Result<SolveInfo> {
        let n = self.a.n;
        let max_iter = 50_000;
        let mut x = vec![0.0; n];
        let mut r = b.to_vec();
        let mut z: Vec<f64> = r.iter().zip(diag_inv).map(|(ri, di)| ri * di).collect();
        let mut p = z.clone();
        let mut rz: f64 = dot(&r, &z);
        let mut q = vec![0.0; n];
        for it in 0..max_iter {
            self.a.matvec(&p, &mut q);
            let alpha = rz / dot(&p, &q);
            for i in 0..n {
                x[i] += alpha * p[i];
                r[i] -= alpha * q[i];
            }
            let rel = norm2(&r) / b_norm;
            if rel <= tol {
                return Ok(SolveInfo { x, rel_residual: rel, iterations: it + 1 });
            }
            for i in 0..n {
                z[i] = r[i] * diag_inv[i];
            }
            let rz_new = dot(&r, &z);
            let beta = rz_new / rz;
            rz = rz_new;
            for i in 0..n {
                p[i] = z[i] + beta * p[i];
            }
        }
        Err(Error::CgNoConvergence { iterations: max_iter, residual: norm2(&r) / b_norm })
    }
}

/// One-shot solve; factorize explicitly via [`Factorized`] to reuse the
/// decomposition for the Ritz projection right-hand side.
pub fn solve(a: &SparseOperator, b: &[f64], tol: f64) -> Result<SolveInfo> {
    Factorized::new(Arc::new(a.clone()), tol)?.solve(b)
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm2(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::uniform_interval;
    use crate::space::{interpolate, Continuity, DiscreteField, PolySpace};
    use rand::{Rng, SeedableRng};

    fn space_1d(n: usize, p: usize, cont: Continuity) -> Arc<PolySpace> {
        let mesh = uniform_interval(0.0, 1.0, n).unwrap().into_arc();
        Arc::new(PolySpace::new(mesh, p, cont).unwrap())
    }

    #[test]
    fn coo_compression_sums_duplicates() {
        let a = SparseOperator::from_coo(
            3,
            vec![(0, 0, 1.0), (0, 0, 2.0), (2, 1, 4.0), (1, 1, 1.0), (2, 1, -1.0)],
        );
        assert_eq!(a.nnz(), 3);
        let mut y = vec![0.0; 3];
        a.matvec(&[1.0, 1.0, 1.0], &mut y);
        assert_eq!(y, vec![3.0, 1.0, 3.0]);
    }

    #[test]
    fn penalty_block_hand_assembly() {
        // 1d, D=1, p=1, n=2 cells on (0,1), DG: the penalty part of the
        // interior facet couples the two adjacent endpoint dofs with
        // +-sigma_c, sigma_c = 10 p^2 / h_e = 10/0.5 = 20.
        let space = space_1d(2, 1, Continuity::Discontinuous);
        let pen = PenaltySpec::standard();
        let a_full = assemble_matrix(
            &space,
            &DiffusionSpec::constant(1.0),
            &pen,
            AssemblyOpts::default(),
        )
        .unwrap();
        // dofs: cell0 {0,1}, cell1 {2,3}; interior facet at x=0.5 joins dof 1 and 2.
        // Extract penalty entries by subtracting the sigma=0 limit. The form
        // is linear in sigma, so difference of two assemblies isolates it.
        let pen_eps = PenaltySpec::with_constant(PenaltyMode::Standard, 1e-30).unwrap();
        let a_nopen = assemble_matrix(
            &space,
            &DiffusionSpec::constant(1.0),
            &pen_eps,
            AssemblyOpts::default(),
        )
        .unwrap();
        let dense = |a: &SparseOperator, i: usize, j: usize| -> f64 {
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                if a.col_idx[k] == j {
                    return a.vals[k];
                }
            }
            0.0
        };
        let sig = 20.0;
        for (i, j, expect) in [(1, 1, sig), (2, 2, sig), (1, 2, -sig), (2, 1, -sig)] {
            let got = dense(&a_full, i, j) - dense(&a_nopen, i, j);
            assert!((got - expect).abs() < 1e-9, "({i},{j}): {got} vs {expect}");
        }
    }

    #[test]
    fn matrix_symmetry() {
        let space = space_1d(5, 2, Continuity::Discontinuous);
        let d = DiffusionSpec::scalar(|x| 1.0 + 0.5 * x[0] * x[0]);
        let a =
            assemble_matrix(&space, &d, &PenaltySpec::standard(), AssemblyOpts::default())
                .unwrap();
        assert!(a.max_asymmetry() <= 1e-10 * a.max_abs());
    }

    #[test]
    fn continuous_space_interior_jumps_vanish() {
        // for a vertex-continuous space the interior penalty entries cancel:
        // the matrix must agree with the classic stiffness matrix away from
        // the boundary rows
        let space = space_1d(4, 1, Continuity::VertexContinuous);
        let a = assemble_matrix(
            &space,
            &DiffusionSpec::constant(1.0),
            &PenaltySpec::standard(),
            AssemblyOpts::default(),
        )
        .unwrap();
        let h = 0.25;
        let dense = |i: usize, j: usize| -> f64 {
            for k in a.row_ptr[i]..a.row_ptr[i + 1] {
                if a.col_idx[k] == j {
                    return a.vals[k];
                }
            }
            0.0
        };
        // interior-vertex diagonals are the classic 2/h; couplings between
        // interior dofs are -1/h (entries touching boundary dofs pick up
        // Nitsche terms and are excluded)
        for i in 1..4 {
            assert!((dense(i, i) - 2.0 / h).abs() < 1e-9);
        }
        for (i, j) in [(1, 2), (2, 1), (2, 3), (3, 2)] {
            assert!((dense(i, j) + 1.0 / h).abs() < 1e-9);
        }
    }

    #[test]
    fn zero_data_zero_load() {
        let space = space_1d(4, 2, Continuity::Discontinuous);
        let b = assemble_load(
            &space,
            |_| 0.0,
            |_| 0.0,
            &DiffusionSpec::constant(1.0),
            &PenaltySpec::standard(),
            AssemblyOpts::default(),
        )
        .unwrap();
        assert!(b.iter().all(|&v| v == 0.0));
    }

    #[test]
    fn unit_forcing_row_sums() {
        // p=1 continuous hats, f=1: interior vertex entries are h
        let space = space_1d(5, 1, Continuity::VertexContinuous);
        let b = assemble_load(
            &space,
            |_| 1.0,
            |_| 0.0,
            &DiffusionSpec::constant(1.0),
            &PenaltySpec::standard(),
            AssemblyOpts::default(),
        )
        .unwrap();
        for i in 1..5 {
            assert!((b[i] - 0.2).abs() < 1e-13);
        }
    }

    #[test]
    fn boundary_data_only_touches_boundary_rows() {
        let space = space_1d(6, 2, Continuity::Discontinuous);
        let b = assemble_load(
            &space,
            |_| 0.0,
            |_| 3.0,
            &DiffusionSpec::constant(1.0),
            &PenaltySpec::standard(),
            AssemblyOpts::default(),
        )
        .unwrap();
        // only the first and last cells carry boundary facets
        for (i, v) in b.iter().enumerate() {
            let cell = i / 3;
            if cell != 0 && cell != 5 {
                assert_eq!(*v, 0.0, "dof {i}");
            }
        }
        assert!(b[0].abs() > 0.0 && b[17].abs() > 0.0);
    }

    #[test]
    fn apply_form_consistent_with_matrix() {
        for cont in [Continuity::Discontinuous, Continuity::VertexContinuous] {
            let space = space_1d(4, 2, cont);
            let d = DiffusionSpec::constant(1.0);
            let pen = PenaltySpec::standard();
            let a = assemble_matrix(&space, &d, &pen, AssemblyOpts::default()).unwrap();
            let u = interpolate(|x| x[0] * x[0] - 0.3 * x[0] + 1.0, &space);
            let via_form = apply_form(&u, &space, &d, &pen, AssemblyOpts::default()).unwrap();
            let mut via_mat = vec![0.0; space.n_dofs()];
            a.matvec(&u.coeffs, &mut via_mat);
            let scale = via_mat.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            for (x, y) in via_form.iter().zip(&via_mat) {
                assert!((x - y).abs() <= 1e-11 * scale, "{x} vs {y}");
            }
        }
    }

    #[test]
    fn apply_form_penalty_vanishes_for_conforming_zero_trace() {
        // w continuous with w = 0 on the boundary: penalty terms vanish,
        // so the result is independent of sigma
        let space = space_1d(5, 2, Continuity::VertexContinuous);
        let d = DiffusionSpec::constant(1.0);
        let w = interpolate(|x| x[0] * (1.0 - x[0]), &space);
        let r1 =
            apply_form(&w, &space, &d, &PenaltySpec::standard(), AssemblyOpts::default())
                .unwrap();
        let big = PenaltySpec::with_constant(PenaltyMode::Standard, 1e6).unwrap();
        let r2 = apply_form(&w, &space, &d, &big, AssemblyOpts::default()).unwrap();
        let scale = r1.iter().fold(1.0f64, |m, v| m.max(v.abs()));
        for (a, b) in r1.iter().zip(&r2) {
            assert!((a - b).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn hyper_vs_standard_scaling() {
        let space = space_1d(4, 2, Continuity::Discontinuous);
        let d = DiffusionSpec::constant(1.0);
        let a_std = assemble_matrix(&space, &d, &PenaltySpec::standard(), AssemblyOpts::default())
            .unwrap();
        let a_hyp =
            assemble_matrix(&space, &d, &PenaltySpec::hyper(), AssemblyOpts::default()).unwrap();
        // difference is the penalty part scaled by (1/h_e - 1): with uniform
        // h = 0.25 the hyper matrix equals standard + 3 * penalty_part
        let pen_part = |a: &SparseOperator, b: &SparseOperator| -> Vec<f64> {
            a.vals.iter().zip(&b.vals).map(|(x, y)| y - x).collect()
        };
        let diff = pen_part(&a_std, &a_hyp);
        // reassemble with sigma scaled by 3 = (1/h - 1) on the penalty only:
        // check diff equals 3x the penalty part extracted via tiny sigma
        let eps = PenaltySpec::with_constant(PenaltyMode::Standard, 1e-30).unwrap();
        let a_eps = assemble_matrix(&space, &d, &eps, AssemblyOpts::default()).unwrap();
        let pen_std = pen_part(&a_eps, &a_std);
        let scale = a_std.max_abs();
        for (d, p) in diff.iter().zip(&pen_std) {
            assert!((d - 3.0 * p).abs() <= 1e-9 * scale);
        }
    }

    #[test]
    fn solve_identity_and_zero() {
        let a = SparseOperator::from_coo(3, vec![(0, 0, 1.0), (1, 1, 1.0), (2, 2, 1.0)]);
        let s = solve(&a, &[1.0, -2.0, 3.0], 1e-12).unwrap();
        assert!(s.x.iter().zip(&[1.0, -2.0, 3.0]).all(|(x, y)| (x - y).abs() < 1e-14));
        let z = solve(&a, &[0.0; 3], 1e-12).unwrap();
        assert_eq!(z.x, vec![0.0; 3]);
    }

    #[test]
    fn poisson_p1_matches_fd_oracle_at_interior_vertices() {
        // -u'' = 1, u(0)=u(1)=0: the FD system with the same interior stencil
        // has vertex values x(1-x)/2 exactly; the weak-BC discrete solution
        // must agree at interior vertices to solver accuracy.
        let n = 8;
        let space = space_1d(n, 1, Continuity::VertexContinuous);
        let d = DiffusionSpec::constant(1.0);
        let pen = PenaltySpec::standard();
        let a = assemble_matrix(&space, &d, &pen, AssemblyOpts::default()).unwrap();
        let b = assemble_load(&space, |_| 1.0, |_| 0.0, &d, &pen, AssemblyOpts::default())
            .unwrap();
        let s = solve(&a, &b, 1e-12).unwrap();
        for i in 1..n {
            let x = i as f64 / n as f64;
            assert!(
                (s.x[i] - 0.5 * x * (1.0 - x)).abs() < 1e-10,
                "vertex {i}: {} vs {}",
                s.x[i],
                0.5 * x * (1.0 - x)
            );
        }
        // galerkin consistency: residual of the linear system
        assert!(s.rel_residual < 1e-10);
    }

    #[test]
    fn rayleigh_quotient_positive() {
        let space = space_1d(6, 2, Continuity::Discontinuous);
        let a = assemble_matrix(
            &space,
            &DiffusionSpec::constant(1.0),
            &PenaltySpec::standard(),
            AssemblyOpts::default(),
        )
        .unwrap();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(7);
        let mut y = vec![0.0; a.n];
        for _ in 0..100 {
            let x: Vec<f64> = (0..a.n).map(|_| rng.gen_range(-1.0..1.0)).collect();
            a.matvec(&x, &mut y);
            assert!(dot(&x, &y) > 0.0);
        }
    }

    #[test]
    fn non_spd_diffusion_rejected() {
        let space = space_1d(3, 1, Continuity::Discontinuous);
        let d = DiffusionSpec::scalar(|x| 0.5 - x[0]); // negative for x > 0.5
        let r = assemble_matrix(&space, &d, &PenaltySpec::standard(), AssemblyOpts::default());
        assert!(matches!(r, Err(Error::NonSpdDiffusion(_, _))));
    }

    #[test]
    fn cg_agrees_with_direct() {
        let space = space_1d(12, 2, Continuity::Discontinuous);
        let d = DiffusionSpec::constant(1.0);
        let pen = PenaltySpec::standard();
        let a = Arc::new(
            assemble_matrix(&space, &d, &pen, AssemblyOpts::default()).unwrap(),
        );
        let b = assemble_load(&space, |x| x[0].sin(), |_| 0.0, &d, &pen, AssemblyOpts::default())
            .unwrap();
        let direct = Factorized::new(a.clone(), 1e-12).unwrap().solve(&b).unwrap();
        // force the CG path
        let f = Factorized {
            a: a.clone(),
            kind: FactorKind::Cg {
                diag_inv: a.diag().iter().map(|v| 1.0 / v).collect(),
                tol: 1e-13,
            },
        };
        let cg = f.solve(&b).unwrap();
        let scale = direct.x.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        for (x, y) in direct.x.iter().zip(&cg.x) {
            assert!((x - y).abs() <= 1e-8 * scale);
        }
        let field = DiscreteField::new(space, cg.x).unwrap();
        assert!(field.coeffs.len() > 0);
    }
}
