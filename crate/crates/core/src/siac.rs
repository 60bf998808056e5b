//! B-spline convolution post-processing of 1d fields on uniform meshes.
//!
//! The kernel is a linear combination of 2r+1 shifted B-splines of order
//! m+1 whose weights satisfy the 2r moment (polynomial reproduction)
//! conditions. Convolution of the piecewise degree-p input with the kernel
//! is carried out exactly: on every evaluation cell the result is a
//! piecewise polynomial of degree p+m+1 with breakpoints at the images of
//! the kernel knots, recovered by sampling at Chebyshev points with
//! per-piece Gauss quadrature. Near the boundary the input is extended by
//! odd reflection about the boundary data.

use crate::mesh::Mesh;
use crate::quadrature::gauss_legendre_01;
use crate::space::{DiscreteField, SubdividedCell, SubdividedPolyField};
use crate::{Error, Result};
use nalgebra::{DMatrix, DVector};
use rayon::prelude::*;

/// Centered B-spline of the given order (order 1 = box on [-1/2, 1/2]),
/// evaluated through the recurrence relation.
pub fn bspline_eval(order: usize, x: f64) -> f64 {
    assert!(order >= 1);
    if order == 1 {
        // half-open support so the recurrence does not double-count at knots
        return if (-0.5..0.5).contains(&x) { 1.0 } else { 0.0 };
    }
    let half = order as f64 / 2.0;
    if x < -half || x > half {
        return 0.0;
    }
    ((x + half) * bspline_eval(order - 1, x + 0.5) + (half - x) * bspline_eval(order - 1, x - 0.5))
        / (order - 1) as f64
}

/// Moments of the shifted B-spline: integral of psi(x - gamma) x^j, by Gauss
/// quadrature on each knot interval.
fn shifted_moment(order: usize, gamma: f64, j: usize, points_per_knot: usize) -> f64 {
    let (nodes, weights) = gauss_legendre_01(points_per_knot);
    let half = order as f64 / 2.0;
    let mut total = 0.0;
    for i in 0..order {
        let a = gamma - half + i as f64;
        for (t, w) in nodes.iter().zip(&weights) {
            let x = a + t;
            total += w * bspline_eval(order, x - gamma) * x.powi(j as i32);
        }
    }
    total
}

/// Kernel weights c_gamma solving the (2r+1)x(2r+1) moment system
/// M c = e_0 with M_{j,gamma} = integral psi^{(m+1)}(x - gamma) x^j dx.
pub fn kernel_coefficients(r: usize, m: usize) -> Result<Vec<f64>> {
    let n = 2 * r + 1;
    let order = m + 1;
    // integrand degree m + j; generous point count keeps moments exact
    let pts = (m + 2 * r) / 2 + 3;
    let mat = DMatrix::from_fn(n, n, |j, col| {
        let gamma = col as f64 - r as f64;
        shifted_moment(order, gamma, j, pts)
    });
    let mut rhs = DVector::zeros(n);
    rhs[0] = 1.0;
    let sol = mat.lu().solve(&rhs).ok_or(Error::SingularMomentMatrix { r, m })?;
    Ok(sol.iter().copied().collect())
}

/// Convolution kernel: half-width count r, smoothness index m, physical
/// scaling H, and the moment-condition weights.
#[derive(Debug, Clone)]
pub struct KernelSpec {
    pub r: usize,
    pub m: usize,
    pub scaling: f64,
    pub coeffs: Vec<f64>,
}

impl KernelSpec {
    pub fn new(r: usize, m: usize, scaling: f64) -> Result<Self> {
        if scaling <= 0.0 {
            return Err(Error::InvalidArgument("kernel scaling must be positive".into()));
        }
        Ok(KernelSpec { r, m, scaling, coeffs: kernel_coefficients(r, m)? })
    }

    /// Kernel value at t (unscaled coordinates).
    pub fn eval(&self, t: f64) -> f64 {
        let order = self.m + 1;
        self.coeffs
            .iter()
            .enumerate()
            .map(|(col, c)| c * bspline_eval(order, t - (col as f64 - self.r as f64)))
            .sum()
    }

    /// Support radius in unscaled coordinates: r + (m+1)/2.
    pub fn support_radius(&self) -> f64 {
        self.r as f64 + (self.m + 1) as f64 / 2.0
    }

    /// Interior breakpoints the kernel knots induce on an evaluation cell,
    /// in local (0,1) coordinates.
    fn cell_breakpoints(&self) -> Vec<f64> {
        let order = self.m + 1;
        let mut fr: Vec<f64> = Vec::new();
        for i in 0..=order {
            let knot = i as f64 - order as f64 / 2.0;
            let f = knot - knot.floor();
            if f > 1e-12 && f < 1.0 - 1e-12 && !fr.iter().any(|&g| (g - f).abs() < 1e-12) {
                fr.push(f);
            }
        }
        fr.sort_by(|a, b| a.partial_cmp(b).unwrap());
        fr
    }
}

/// The kernel used throughout the experiments: continuous B-spline (m = 1)
/// with r = ceil((p+1)/2), scaled by the element size.
pub fn default_kernel(p: usize, h: f64) -> Result<KernelSpec> {
    if p < 1 {
        return Err(Error::InvalidArgument("degree must be >= 1".into()));
    }
    KernelSpec::new((p + 1).div_ceil(2), 1, h)
}

/// Odd-reflection boundary extension about the Dirichlet values:
/// u~(a - s) = 2 g(a) - u_h(a + s), and likewise at b.
#[derive(Debug, Clone, Copy)]
pub struct MirrorExtension {
    pub g_left: f64,
    pub g_right: f64,
}

impl MirrorExtension {
    pub fn new(g_left: f64, g_right: f64) -> Self {
        MirrorExtension { g_left, g_right }
    }
    pub fn homogeneous() -> Self {
        MirrorExtension { g_left: 0.0, g_right: 0.0 }
    }
}

struct Convolver<'a> {
    u_h: &'a DiscreteField,
    mirror: MirrorExtension,
    n: isize,
    a: f64,
    h: f64,
}

impl Convolver<'_> {
    /// Value of the mirrored extension at lattice coordinate c = j + xi.
    fn extended_value(&self, c: f64) -> f64 {
        let j = c.floor() as isize;
        let xi = c - j as f64;
        if j < 0 {
            let jj = -1 - j;
            assert!(jj < self.n, "kernel support exceeds the domain");
            2.0 * self.mirror.g_left - self.cell_value(jj, 1.0 - xi)
        } else if j >= self.n {
            let jj = 2 * self.n - 1 - j;
            assert!(jj >= 0, "kernel support exceeds the domain");
            2.0 * self.mirror.g_right - self.cell_value(jj, 1.0 - xi)
        } else {
            self.cell_value(j, xi)
        }
    }

    fn cell_value(&self, j: isize, xi: f64) -> f64 {
        let x = self.a + (j as f64 + xi) * self.h;
        use crate::space::Field;
        self.u_h.value(j as usize, [x, 0.0])
    }
}

/// Pointwise exact convolution at lattice coordinate `lat` = k + xi.
fn convolve_at(spec: &KernelSpec, conv: &Convolver, lat: f64) -> f64 {
    let order = spec.m + 1;
    let half = order as f64 / 2.0;
    let p = conv.u_h.space.degree;
    let gauss_n = (p + spec.m + 2) / 2 + 1;
    let (nodes, weights) = gauss_legendre_01(gauss_n);
    let mut total = 0.0;
    for (col, &c_gamma) in spec.coeffs.iter().enumerate() {
        let gamma = col as f64 - spec.r as f64;
        for i in 0..order {
            let t0 = -half + i as f64;
            let t1 = t0 + 1.0;
            // split where the argument of the extension crosses the lattice:
            // s in (lat - gamma) + Z
            let s_base = lat - gamma;
            let mut cuts = vec![t0, t1];
            let mut s = s_base + (t0 - s_base).ceil();
            while s < t1 {
                if s > t0 + 1e-14 && s < t1 - 1e-14 {
                    cuts.push(s);
                }
                s += 1.0;
            }
            cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
            for pair in cuts.windows(2) {
                let (lo, hi) = (pair[0], pair[1]);
                if hi - lo < 1e-15 {
                    continue;
                }
                for (t, w) in nodes.iter().zip(&weights) {
                    let s = lo + t * (hi - lo);
                    total += c_gamma
                        * w
                        * (hi - lo)
                        * bspline_eval(order, s - gamma)
                        * conv.extended_value(lat - gamma - s);
                }
            }
        }
    }
    total
}

fn chebyshev_points(n: usize) -> Vec<f64> {
    (0..n)
        .map(|s| 0.5 * (1.0 - (std::f64::consts::PI * (2 * s + 1) as f64 / (2 * n) as f64).cos()))
        .collect()
}

/// Values at Chebyshev points -> monomial coefficients on [0,1].
struct MonomialFit {
    inv: DMatrix<f64>,
    points: Vec<f64>,
}

impl MonomialFit {
    fn new(degree: usize) -> Self {
        let n = degree + 1;
        let points = chebyshev_points(n);
        let v = DMatrix::from_fn(n, n, |s, j| points[s].powi(j as i32));
        MonomialFit { inv: v.try_inverse().expect("Chebyshev Vandermonde"), points }
    }
    fn fit(&self, values: &[f64]) -> Vec<f64> {
        let v = DVector::from_column_slice(values);
        (&self.inv * v).iter().copied().collect()
    }
}

/// Translation-invariant interior stencil: maps the stacked local
/// coefficients of the 2w+1 neighbor cells to the sub-cell monomial
/// coefficients of the filtered field on the center cell.
struct Stencil {
    width: isize,
    /// per sub-cell: (degree+1) x ((2w+1)(p+1)) matrix
    blocks: Vec<DMatrix<f64>>,
}

fn build_stencil(spec: &KernelSpec, p: usize) -> Result<Stencil> {
    use crate::space::{Continuity, PolySpace};
    use std::sync::Arc;
    let width = spec.support_radius().ceil() as isize + 1;
    let ncells = (2 * width + 1) as usize;
    let mesh = crate::mesh::uniform_interval(0.0, ncells as f64, ncells)?.into_arc();
    let space = Arc::new(PolySpace::new(mesh.clone(), p, Continuity::Discontinuous)?);
    let nb = p + 1;
    let degree = p + spec.m + 1;
    let fit = MonomialFit::new(degree);
    let breaks = spec.cell_breakpoints();
    let mut cuts = vec![0.0];
    cuts.extend(breaks.iter().copied());
    cuts.push(1.0);
    let nsub = cuts.len() - 1;
    let unit_spec = KernelSpec { scaling: 1.0, ..spec.clone() };

    let mut blocks = vec![DMatrix::zeros(degree + 1, ncells * nb); nsub];
    let center = width;
    for cell in 0..ncells {
        for l in 0..nb {
            let mut u = DiscreteField::zero(space.clone());
            u.coeffs[cell * nb + l] = 1.0;
            let conv = Convolver {
                u_h: &u,
                mirror: MirrorExtension::homogeneous(),
                n: ncells as isize,
                a: 0.0,
                h: 1.0,
            };
            for (sub, pair) in cuts.windows(2).enumerate() {
                let vals: Vec<f64> = fit
                    .points
                    .iter()
                    .map(|&t| {
                        convolve_at(
                            &unit_spec,
                            &conv,
                            center as f64 + pair[0] + t * (pair[1] - pair[0]),
                        )
                    })
                    .collect();
                let coeffs = fit.fit(&vals);
                let col = cell * nb + l;
                for (row, &c) in coeffs.iter().enumerate() {
                    blocks[sub][(row, col)] = c;
                }
            }
        }
    }
    Ok(Stencil { width, blocks })
}

/// Convolve a 1d field with the kernel, producing the filtered field as an
/// exact piecewise polynomial of degree p+m+1 (continuity class C^m).
///
/// Interior cells go through the precomputed translation-invariant stencil;
/// cells whose kernel support touches the boundary fall back to direct
/// quadrature against the mirrored extension.
pub fn convolve(
    u_h: &DiscreteField,
    spec: &KernelSpec,
    mirror: MirrorExtension,
) -> Result<SubdividedPolyField> {
    let mesh = u_h.space.mesh.clone();
    let Mesh::Interval(im) = mesh.as_ref() else {
        return Err(Error::Unsupported("SIAC convolution is 1d".into()));
    };
    if im.nonuniformity() > 1e-12 {
        return Err(Error::Unsupported("SIAC convolution requires a uniform mesh".into()));
    }
    let n = im.n_cells();
    let a = im.vertices[0];
    let h = (im.vertices[n] - a) / n as f64;
    if (spec.scaling / h - 1.0).abs() > 1e-10 {
        return Err(Error::Unsupported(format!(
            "kernel scaling {} must equal the mesh width {h}",
            spec.scaling
        )));
    }
    let reach = spec.support_radius().ceil() as isize;
    if reach as usize >= n {
        return Err(Error::Unsupported("kernel support exceeds the domain".into()));
    }

    let p = u_h.space.degree;
    let degree = p + spec.m + 1;
    let breaks = spec.cell_breakpoints();
    let mut cuts = vec![0.0];
    cuts.extend(breaks.iter().copied());
    cuts.push(1.0);

    let stencil = build_stencil(spec, p)?;
    let w = stencil.width;
    let fit = MonomialFit::new(degree);
    let conv = Convolver { u_h, mirror, n: n as isize, a, h };
    let unit_spec = KernelSpec { scaling: 1.0, ..spec.clone() };

    let cells: Vec<SubdividedCell> = (0..n)
        .into_par_iter()
        .map(|k| {
            let interior = (k as isize) >= w && (k as isize) + w < n as isize;
            let coeffs: Vec<Vec<f64>> = if interior {
                let nb = p + 1;
                let mut stacked = DVector::zeros((2 * w as usize + 1) * nb);
                for (o, j) in ((k as isize - w)..=(k as isize + w)).enumerate() {
                    let local = u_h.cell_coeffs(j as usize);
                    for l in 0..nb {
                        stacked[o * nb + l] = local[l];
                    }
                }
                stencil.blocks.iter().map(|b| (b * &stacked).iter().copied().collect()).collect()
            } else {
                cuts.windows(2)
                    .map(|pair| {
                        let vals: Vec<f64> = fit
                            .points
                            .iter()
                            .map(|&t| {
                                convolve_at(
                                    &unit_spec,
                                    &conv,
                                    k as f64 + pair[0] + t * (pair[1] - pair[0]),
                                )
                            })
                            .collect();
                        fit.fit(&vals)
                    })
                    .collect()
            };
            SubdividedCell { breaks: cuts.clone(), coeffs }
        })
        .collect();

    SubdividedPolyField::new(mesh, degree, spec.m, cells)
}

/// Continuous convolution of an analytic polynomial (monomial coefficients)
/// with the scaled kernel, by exact per-knot quadrature. Used to check the
/// reproduction property independently of any mesh.
pub fn convolve_polynomial(spec: &KernelSpec, poly: &[f64], x: f64) -> f64 {
    let order = spec.m + 1;
    let half = order as f64 / 2.0;
    let deg = poly.len().saturating_sub(1);
    let gauss_n = (spec.m + deg) / 2 + 2;
    let (nodes, weights) = gauss_legendre_01(gauss_n);
    let mut total = 0.0;
    for (col, &c_gamma) in spec.coeffs.iter().enumerate() {
        let gamma = col as f64 - spec.r as f64;
        for i in 0..order {
            let t0 = gamma - half + i as f64;
            for (t, w) in nodes.iter().zip(&weights) {
                let s = t0 + t;
                let arg = x - spec.scaling * s;
                let val: f64 = poly.iter().rev().fold(0.0, |acc, &c| acc * arg + c);
                total += c_gamma * w * bspline_eval(order, s - gamma) * val;
            }
        }
    }
    total
}
