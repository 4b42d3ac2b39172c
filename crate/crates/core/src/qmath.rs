//! Complex scalars, two-component spinors, and the periodic quadrature rule
//! used as the numerical oracle for every integral over the pair angle.

use std::f64::consts::{FRAC_1_SQRT_2, TAU};

use serde::{Deserialize, Serialize};

use crate::Error;

/// Default node count for [`QuadratureRule::uniform`] callers that have no
/// reason to pick their own.
pub const DEFAULT_NODES: usize = 256;

/// Reduce an angle to `[0, 2π)`.
pub fn normalize_angle(theta: f64) -> f64 {
    let r = theta.rem_euclid(TAU);
    // rem_euclid can round up to exactly TAU for tiny negative inputs
    if r >= TAU {
        0.0
    } else {
        r
    }
}

/// Reduce a line orientation to `[0, π)`.
pub fn normalize_line(theta: f64) -> f64 {
    let r = theta.rem_euclid(std::f64::consts::PI);
    if r >= std::f64::consts::PI {
        0.0
    } else {
        r
    }
}

pub use num_complex::Complex64 as Complex;

/// Closeness test used by every tolerance check on complex values.
pub trait ComplexExt {
    /// `|self - other|`.
    fn dist(self, other: Complex) -> f64;
}

impl ComplexExt for Complex {
    fn dist(self, other: Complex) -> f64 {
        (self - other).norm()
    }
}

/// Two-component spinor in the fixed z-quantization basis.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Spinor2 {
    pub c0: Complex,
    pub c1: Complex,
}

impl Spinor2 {
    pub const fn new(c0: Complex, c1: Complex) -> Self {
        Self { c0, c1 }
    }

    /// `(a, b)/√2`.
    pub fn halved(a: Complex, b: Complex) -> Self {
        Self::new(a.scale(FRAC_1_SQRT_2), b.scale(FRAC_1_SQRT_2))
    }

    pub fn norm_sqr(&self) -> f64 {
        self.c0.norm_sqr() + self.c1.norm_sqr()
    }

    pub fn scale(&self, k: Complex) -> Self {
        Self::new(self.c0 * k, self.c1 * k)
    }

    pub fn dist(&self, other: &Spinor2) -> f64 {
        self.c0.dist(other.c0).max(self.c1.dist(other.c1))
    }
}

/// `⟨bra|ket⟩ = conj(bra.c0)·ket.c0 + conj(bra.c1)·ket.c1`.
pub fn inner(bra: &Spinor2, ket: &Spinor2) -> Complex {
    bra.c0.conj() * ket.c0 + bra.c1.conj() * ket.c1
}

/// Dense 2×2 complex matrix, row-major.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mat2H {
    pub m: [[Complex; 2]; 2],
}

impl Mat2H {
    pub fn entry(&self, row: usize, col: usize) -> Complex {
        self.m[row][col]
    }

    pub fn apply(&self, v: &Spinor2) -> Spinor2 {
        Spinor2::new(
            self.m[0][0] * v.c0 + self.m[0][1] * v.c1,
            self.m[1][0] * v.c0 + self.m[1][1] * v.c1,
        )
    }

    pub fn trace(&self) -> Complex {
        self.m[0][0] + self.m[1][1]
    }

    pub fn is_hermitian(&self, tol: f64) -> bool {
        self.m[0][0].im.abs() <= tol
            && self.m[1][1].im.abs() <= tol
            && self.m[0][1].dist(self.m[1][0].conj()) <= tol
    }

    pub fn dist(&self, other: &Mat2H) -> f64 {
        let mut d: f64 = 0.0;
        for r in 0..2 {
            for c in 0..2 {
                d = d.max(self.m[r][c].dist(other.m[r][c]));
            }
        }
        d
    }
}

/// Spin operator `½(cos θ σx + sin θ σy)`.
pub fn sigma_theta(theta: f64) -> Mat2H {
    let (s, c) = theta.sin_cos();
    // σx = [[0,1],[1,0]], σy = [[0,-i],[i,0]]
    let off_upper = Complex::new(0.5 * c, -0.5 * s);
    Mat2H {
        m: [
            [Complex::ZERO, off_upper],
            [off_upper.conj(), Complex::ZERO],
        ],
    }
}

/// Composite trapezoid rule on uniform nodes over one period.
///
/// For integrands that are trigonometric polynomials of degree below
/// `node_count / 2` the rule is exact up to roundoff.
#[derive(Clone, Debug, PartialEq)]
pub struct QuadratureRule {
    nodes: Vec<f64>,
    weights: Vec<f64>,
}

impl QuadratureRule {
    pub fn uniform(node_count: usize) -> Result<Self, Error> {
        if node_count == 0 {
            return Err(Error::EmptyQuadrature);
        }
        let h = TAU / node_count as f64;
        let nodes = (0..node_count).map(|k| k as f64 * h).collect();
        Ok(Self {
            nodes,
            weights: vec![h; node_count],
        })
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn nodes(&self) -> &[f64] {
        &self.nodes
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }
}

impl Default for QuadratureRule {
    fn default() -> Self {
        Self::uniform(DEFAULT_NODES).expect("nonzero default node count")
    }
}

/// `Σ wₖ f(θₖ)` over the rule.
pub fn integrate_periodic<F>(f: F, rule: &QuadratureRule) -> Result<Complex, Error>
where
    F: Fn(f64) -> Complex,
{
    if rule.node_count() == 0 {
        return Err(Error::EmptyQuadrature);
    }
    Ok(rule
        .nodes
        .iter()
        .zip(&rule.weights)
        .map(|(&t, &w)| f(t).scale(w))
        .sum())
}

/// Real-valued convenience wrapper around [`integrate_periodic`].
pub fn integrate_periodic_real<F>(f: F, rule: &QuadratureRule) -> Result<f64, Error>
where
    F: Fn(f64) -> f64,
{
    integrate_periodic(|t| Complex::from(f(t)), rule).map(|z| z.re)
}
