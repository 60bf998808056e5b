//! Error norms of (u - w) for an analytic u and a piecewise-smooth field w:
//! L2, broken H1 seminorm, dG norm (seminorm plus scaled jumps over all
//! edges), and the energy norm induced by the bilinear form, all by
//! quadrature on the field's sub-partition.

use crate::ipdg::{cell_points, facet_points, DiffusionSpec, PenaltySpec};
use crate::space::Field;
use crate::{vec2_dot, Pt, Result};
use std::sync::Arc;

type ValueFn = dyn Fn(Pt) -> f64 + Send + Sync;
type GradFn = dyn Fn(Pt) -> [f64; 2] + Send + Sync;

/// Analytic solution with gradient, used as the reference in norms and as
/// Dirichlet data on the boundary.
#[derive(Clone)]
pub struct ExactSolution {
    pub value: Arc<ValueFn>,
    pub gradient: Arc<GradFn>,
}

impl ExactSolution {
    pub fn new<F, G>(value: F, gradient: G) -> Self
    where
        F: Fn(Pt) -> f64 + Send + Sync + 'static,
        G: Fn(Pt) -> [f64; 2] + Send + Sync + 'static,
    {
        ExactSolution { value: Arc::new(value), gradient: Arc::new(gradient) }
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ErrorNorms {
    pub l2: f64,
    /// broken H1 seminorm of the error
    pub h1: f64,
    pub dg: f64,
    /// sqrt of A_h(u - w, u - w)
    pub energy: f64,
}

pub fn error_norms(
    exact: &ExactSolution,
    field: &dyn Field,
    d: &DiffusionSpec,
    pen: &PenaltySpec,
    penalty_degree: usize,
    quad_extra: usize,
) -> Result<ErrorNorms> {
    let mesh = field.mesh().clone();
    let cell_exact = 2 * field.max_degree() + 2 + quad_extra;
    let facet_exact = 2 * field.max_degree() + 1 + quad_extra;

    let mut l2_sq = 0.0;
    let mut h1_sq = 0.0;
    let mut energy = 0.0;
    for k in 0..mesh.n_cells() {
        for (xi, w) in cell_points(&mesh, k, &field.breakpoints(k), cell_exact)? {
            let x = mesh.ref_to_phys(k, xi);
            let ev = (exact.value)(x) - field.value(k, x);
            let eg = (exact.gradient)(x);
            let fg = field.grad(k, x);
            let gv = [eg[0] - fg[0], eg[1] - fg[1]];
            l2_sq += w * ev * ev;
            h1_sq += w * vec2_dot(gv, gv);
            energy += w * vec2_dot(d.apply(x, gv), gv);
        }
    }

    let mut jump_sq = 0.0;
    for facet in mesh.facets() {
        let sigma_c = pen.coefficient(penalty_degree, facet.h_e);
        let wavg = if facet.is_boundary() { 1.0 } else { 0.5 };
        let mut sides = vec![(facet.minus, facet.normal)];
        if let Some(plus) = facet.plus {
            sides.push((plus, [-facet.normal[0], -facet.normal[1]]));
        }
        for (x, w) in facet_points(&facet, facet_exact)? {
            let mut jump_v = [0.0; 2];
            let mut flux_v = [0.0; 2];
            for &(c, n) in &sides {
                let ev = (exact.value)(x) - field.value(c, x);
                jump_v[0] += ev * n[0];
                jump_v[1] += ev * n[1];
                let eg = (exact.gradient)(x);
                let fg = field.grad(c, x);
                let dfl = d.apply(x, [eg[0] - fg[0], eg[1] - fg[1]]);
                flux_v[0] += wavg * dfl[0];
                flux_v[1] += wavg * dfl[1];
            }
            let j2 = vec2_dot(jump_v, jump_v);
            jump_sq += w * j2 / facet.h_e;
            energy += w * (-2.0 * vec2_dot(jump_v, flux_v) + sigma_c * j2);
        }
    }

    Ok(ErrorNorms {
        l2: l2_sq.sqrt(),
        h1: h1_sq.sqrt(),
        dg: (h1_sq + jump_sq).sqrt(),
        energy: energy.max(0.0).sqrt(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mesh::uniform_interval;
    use crate::space::{interpolate, Continuity, PolySpace};

    fn exact_poly(p: i32) -> ExactSolution {
        ExactSolution::new(
            move |x: Pt| x[0].powi(p),
            move |x: Pt| [p as f64 * x[0].powi(p - 1), 0.0],
        )
    }

    #[test]
    fn interpolant_of_polynomial_has_zero_error() {
        for p in 1..=3usize {
            let mesh = uniform_interval(0.0, 1.0, 5).unwrap().into_arc();
            let space = Arc::new(PolySpace::new(mesh, p, Continuity::Discontinuous).unwrap());
            let exact = exact_poly(p as i32);
            let u = interpolate(|x| (exact.value)(x), &space);
            let n = error_norms(
                &exact,
                &u,
                &DiffusionSpec::constant(1.0),
                &PenaltySpec::standard(),
                p,
                2,
            )
            .unwrap();
            assert!(n.l2 < 1e-12 && n.h1 < 1e-11 && n.dg < 1e-10 && n.energy < 1e-9, "p={p}");
        }
    }

    #[test]
    fn jump_terms_vanish_for_continuous_field() {
        let mesh = uniform_interval(0.0, 1.0, 8).unwrap().into_arc();
        let space = Arc::new(PolySpace::new(mesh, 2, Continuity::VertexContinuous).unwrap());
        // continuous field matching the exact boundary values: dg == h1
        let exact = ExactSolution::new(|x| (x[0] * (1.0 - x[0])).sin(), |x| {
            [(1.0 - 2.0 * x[0]) * (x[0] * (1.0 - x[0])).cos(), 0.0]
        });
        let u = interpolate(|x| (exact.value)(x), &space);
        let n = error_norms(
            &exact,
            &u,
            &DiffusionSpec::constant(1.0),
            &PenaltySpec::standard(),
            2,
            2,
        )
        .unwrap();
        assert!((n.dg - n.h1).abs() <= 1e-12 * n.h1.max(1e-300) + 1e-14);
    }

    #[test]
    fn l2_error_ratio_matches_order() {
        // u = sin(6 pi x)^2 cos(4.5 pi x), p = 2: halving h divides the L2
        // interpolation error by about 2^3
        let u = |x: Pt| (6.0 * std::f64::consts::PI * x[0]).sin().powi(2)
            * (4.5 * std::f64::consts::PI * x[0]).cos();
        let du = |x: Pt| {
            let pi = std::f64::consts::PI;
            let (s6, c6) = (6.0 * pi * x[0]).sin_cos();
            let (s45, c45) = (4.5 * pi * x[0]).sin_cos();
            [12.0 * pi * s6 * c6 * c45 - 4.5 * pi * s6 * s6 * s45, 0.0]
        };
        let exact = ExactSolution::new(u, du);
        let err = |n: usize| -> f64 {
            let mesh = uniform_interval(0.0, 1.0, n).unwrap().into_arc();
            let space = Arc::new(PolySpace::new(mesh, 2, Continuity::Discontinuous).unwrap());
            let uf = interpolate(|x| (exact.value)(x), &space);
            error_norms(
                &exact,
                &uf,
                &DiffusionSpec::constant(1.0),
                &PenaltySpec::standard(),
                2,
                4,
            )
            .unwrap()
            .l2
        };
        let ratio = err(20) / err(40);
        assert!((ratio.log2() - 3.0).abs() < 0.35, "eoc {}", ratio.log2());
    }
}
