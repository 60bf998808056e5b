//! Elliptic interior-penalty DG solver with post-processing and adaptive
//! error control.
//!
//! The crate solves -div(D grad u) = f with weak Dirichlet data on interval
//! meshes (1d) and triangulations (2d), post-processes the discrete solution
//! with either a B-spline convolution filter (`siac`) or superconvergent
//! patch recovery (`spr`), and forms the improved reconstruction
//! u** = u* - R u* + u_h where R is the Ritz projection onto the discrete
//! space (`ortho`). Residual indicators for both u_h and u** drive the
//! adaptive loop in `adapt`; `bench` holds the problem catalog, convergence
//! and adaptivity drivers and the CSV/plot-data emitters used by the CLI.

pub mod adapt;
pub mod bench;
pub mod estimate;
pub mod ipdg;
pub mod mesh;
pub mod norms;
pub mod ortho;
pub mod problem;
pub mod quadrature;
pub mod siac;
pub mod space;
pub mod spr;

use thiserror::Error;

/// Point in physical coordinates. 1d geometry uses `[x, 0.0]`.
pub type Pt = [f64; 2];

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("unsupported feature: {0}")]
    Unsupported(String),
    #[error("diffusion tensor not SPD at sample point ({0}, {1})")]
    NonSpdDiffusion(f64, f64),
    #[error("matrix factorization failed: {0}")]
    SingularFactor(String),
    #[error("CG did not converge in {iterations} iterations (relative residual {residual:.3e})")]
    CgNoConvergence { iterations: usize, residual: f64 },
    #[error("moment matrix for kernel (r={r}, m={m}) is singular")]
    SingularMomentMatrix { r: usize, m: usize },
    #[error("patch for node {node} is rank deficient after adding a second layer")]
    RankDeficientPatch { node: usize },
    #[error("unknown problem `{0}`; available: {1}")]
    UnknownProblem(String, String),
    #[error("io error: {0}")]
    Io(#[from] std::io::Error),
    #[error("parse error: {0}")]
    Parse(String),
}

pub type Result<T> = std::result::Result<T, Error>;

pub(crate) fn vec2_norm(v: [f64; 2]) -> f64 {
    v[0].hypot(v[1])
}

pub(crate) fn vec2_sub(a: Pt, b: Pt) -> [f64; 2] {
    [a[0] - b[0], a[1] - b[1]]
}

pub(crate) fn vec2_dot(a: [f64; 2], b: [f64; 2]) -> f64 {
    a[0] * b[0] + a[1] * b[1]
}
