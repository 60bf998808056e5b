//! Gauss-Legendre rules on the unit interval and collapsed product rules on
//! the reference triangle, with certified polynomial exactness.

use crate::{Error, Pt, Result};

/// Quadrature rule on a reference cell (interval [0,1] or the unit triangle
/// with vertices (0,0), (1,0), (0,1)).
#[derive(Debug, Clone)]
pub struct QuadratureRule {
    pub points: Vec<Pt>,
    pub weights: Vec<f64>,
    pub exactness: usize,
}

const MAX_EXACTNESS: usize = 120;

/// Legendre polynomial value and derivative at `x` (on [-1,1]).
fn legendre(k: usize, x: f64) -> (f64, f64) {
    let (mut p0, mut p1) = (1.0, x);
    if k == 0 {
        return (1.0, 0.0);
    }
    for j in 2..=k {
        let p2 = ((2 * j - 1) as f64 * x * p1 - (j - 1) as f64 * p0) / j as f64;
        p0 = p1;
        p1 = p2;
    }
    let dp = k as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, dp)
}

/// `k`-point Gauss-Legendre nodes and weights on [0,1].
pub fn gauss_legendre_01(k: usize) -> (Vec<f64>, Vec<f64>) {
    assert!(k >= 1);
    let mut nodes = vec![0.0; k];
    let mut weights = vec![0.0; k];
    for i in 0..(k + 1) / 2 {
        let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (k as f64 + 0.5)).cos();
        for _ in 0..100 {
            let (p, dp) = legendre(k, x);
            let dx = p / dp;
            x -= dx;
            if dx.abs() < 1e-16 {
                break;
            }
        }
        let (_, dp) = legendre(k, x);
        let w = 2.0 / ((1.0 - x * x) * dp * dp);
        nodes[i] = 0.5 * (1.0 - x);
        weights[i] = 0.5 * w;
        nodes[k - 1 - i] = 0.5 * (1.0 + x);
        weights[k - 1 - i] = 0.5 * w;
    }
    (nodes, weights)
}

/// Rule on [0,1] integrating polynomials up to `degree` exactly.
pub fn interval_rule(degree: usize) -> Result<QuadratureRule> {
    if degree > MAX_EXACTNESS {
        return Err(Error::Unsupported(format!("quadrature exactness {degree} too large")));
    }
    let k = degree / 2 + 1;
    let (nodes, weights) = gauss_legendre_01(k);
    Ok(QuadratureRule {
        points: nodes.iter().map(|&x| [x, 0.0]).collect(),
        weights,
        exactness: 2 * k - 1,
    })
}

/// Collapsed product rule on the reference triangle, exact for total degree
/// `degree`. The Duffy map x = xi, y = eta (1 - xi) carries Jacobian
/// (1 - xi), so the xi direction needs one extra degree.
pub fn triangle_rule(degree: usize) -> Result<QuadratureRule> {
    if degree > MAX_EXACTNESS {
        return Err(Error::Unsupported(format!("quadrature exactness {degree} too large")));
    }
    let kx = (degree + 1) / 2 + 1; // exact through degree+1
    let ky = degree / 2 + 1; // exact through degree
    let (nx, wx) = gauss_legendre_01(kx);
    let (ny, wy) = gauss_legendre_01(ky);
    let mut points = Vec::with_capacity(kx * ky);
    let mut weights = Vec::with_capacity(kx * ky);
    for (&xi, &wxi) in nx.iter().zip(&wx) {
        for (&eta, &weta) in ny.iter().zip(&wy) {
            points.push([xi, eta * (1.0 - xi)]);
            weights.push(wxi * weta * (1.0 - xi));
        }
    }
    Ok(QuadratureRule { points, weights, exactness: degree })
}

/// Reference-cell rule for the given dimension.
pub fn cell_rule(dim: usize, degree: usize) -> Result<QuadratureRule> {
    match dim {
        1 => interval_rule(degree),
        2 => triangle_rule(degree),
        _ => Err(Error::Unsupported(format!("dimension {dim}"))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|i| i as f64).product()
    }

    /// Analytic integral of x^a y^b over the reference triangle.
    fn tri_monomial(a: usize, b: usize) -> f64 {
        factorial(a) * factorial(b) / factorial(a + b + 2)
    }

    #[test]
    fn one_point_gauss_integrates_x() {
        let r = interval_rule(1).unwrap();
        let integral: f64 =
            r.points.iter().zip(&r.weights).map(|(p, w)| p[0] * w).sum();
        assert!((integral - 0.5).abs() < 1e-15);
    }

    #[test]
    fn interval_monomial_exactness() {
        for degree in 0..=30 {
            let r = interval_rule(degree).unwrap();
            for j in 0..=r.exactness {
                let num: f64 =
                    r.points.iter().zip(&r.weights).map(|(p, w)| p[0].powi(j as i32) * w).sum();
                let exact = 1.0 / (j + 1) as f64;
                assert!(
                    (num - exact).abs() <= 1e-13 * exact.abs().max(1.0),
                    "degree {degree} monomial {j}"
                );
            }
        }
    }

    #[test]
    fn triangle_weights_sum_to_half() {
        for degree in 0..=12 {
            let r = triangle_rule(degree).unwrap();
            let s: f64 = r.weights.iter().sum();
            assert!((s - 0.5).abs() < 1e-14, "degree {degree}");
        }
    }

    #[test]
    fn triangle_monomial_exactness() {
        for degree in 0..=10 {
            let r = triangle_rule(degree).unwrap();
            for a in 0..=degree {
                for b in 0..=(degree - a) {
                    let num: f64 = r
                        .points
                        .iter()
                        .zip(&r.weights)
                        .map(|(p, w)| p[0].powi(a as i32) * p[1].powi(b as i32) * w)
                        .sum();
                    let exact = tri_monomial(a, b);
                    assert!(
                        (num - exact).abs() <= 1e-13 * exact.max(1.0),
                        "degree {degree} monomial x^{a} y^{b}: {num} vs {exact}"
                    );
                }
            }
        }
    }

    #[test]
    fn degree4_triangle_x2y2() {
        let r = triangle_rule(4).unwrap();
        let num: f64 = r
            .points
            .iter()
            .zip(&r.weights)
            .map(|(p, w)| p[0] * p[0] * p[1] * p[1] * w)
            .sum();
        assert!((num - 1.0 / 180.0).abs() < 1e-15);
    }

    #[test]
    fn oversized_degree_rejected() {
        assert!(interval_rule(500).is_err());
        assert!(triangle_rule(500).is_err());
    }
}
