//! Fixed quadrature rules on triangles and straight edges.
//!
//! Triangle rules are the symmetric, positive-weight rules shipped with
//! `fenris-quadrature`, re-expressed on the unit reference triangle
//! `(0,0), (1,0), (0,1)` in barycentric form.

use std::sync::OnceLock;

use fenris_quadrature::{polyquad, univariate};

use crate::error::{Error, Result};

/// Exactness degree of the default triangle rule.
pub const TRIANGLE_DEGREE: usize = 14;
/// Number of Gauss points used on edges (exact to degree 11).
pub const EDGE_POINTS: usize = 6;

#[derive(Debug, Clone)]
pub struct QuadratureRule {
    /// Barycentric coordinates `(λ0, λ1, λ2)` of each point.
    pub points: Vec<[f64; 3]>,
    /// Weights on the reference triangle; they sum to its area `1/2`.
    pub weights: Vec<f64>,
    pub exactness_degree: usize,
}

impl QuadratureRule {
    /// Smallest tabulated symmetric rule with at least the requested exactness.
    pub fn triangle(degree: usize) -> Result<Self> {
        let (weights, points) = polyquad::triangle(degree)
            .map_err(|_| Error::Quadrature(format!("no triangle rule of degree {degree}")))?;
        // polyquad's reference triangle is (-1,-1), (1,-1), (-1,1) with area 2.
        let points = points
            .iter()
            .map(|p| {
                let l1 = 0.5 * (p[0] + 1.0);
                let l2 = 0.5 * (p[1] + 1.0);
                [1.0 - l1 - l2, l1, l2]
            })
            .collect();
        let weights = weights.iter().map(|w| 0.25 * w).collect();
        Ok(Self {
            points,
            weights,
            exactness_degree: degree,
        })
    }

    pub fn len(&self) -> usize {
        self.weights.len()
    }

    pub fn is_empty(&self) -> bool {
        self.weights.is_empty()
    }

    /// Physical points and weights on the triangle `vertices`.
    pub fn mapped(&self, vertices: &[[f64; 2]; 3]) -> Result<Vec<([f64; 2], f64)>> {
        let jac = 2.0 * signed_area(vertices).abs();
        if !(jac > 0.0) {
            return Err(Error::DegenerateTriangle);
        }
        Ok(self
            .points
            .iter()
            .zip(&self.weights)
            .map(|(l, &w)| (barycentric_to_cartesian(vertices, l), w * jac))
            .collect())
    }
}

/// Shared default triangle rule.
pub fn default_triangle_rule() -> &'static QuadratureRule {
    static RULE: OnceLock<QuadratureRule> = OnceLock::new();
    RULE.get_or_init(|| QuadratureRule::triangle(TRIANGLE_DEGREE).expect("tabulated rule"))
}

/// Gauss–Legendre rule on `[0, 1]`: `(nodes, weights)`.
pub fn gauss_unit(n_points: usize) -> (Vec<f64>, Vec<f64>) {
    let (w, x) = univariate::gauss(n_points);
    (
        x.iter().map(|p| 0.5 * (p[0] + 1.0)).collect(),
        w.iter().map(|w| 0.5 * w).collect(),
    )
}

/// Shared default edge rule on `[0, 1]`.
pub fn default_edge_rule() -> &'static (Vec<f64>, Vec<f64>) {
    static RULE: OnceLock<(Vec<f64>, Vec<f64>)> = OnceLock::new();
    RULE.get_or_init(|| gauss_unit(EDGE_POINTS))
}

pub fn signed_area(v: &[[f64; 2]; 3]) -> f64 {
    0.5 * ((v[1][0] - v[0][0]) * (v[2][1] - v[0][1]) - (v[2][0] - v[0][0]) * (v[1][1] - v[0][1]))
}

pub fn barycentric_to_cartesian(v: &[[f64; 2]; 3], l: &[f64; 3]) -> [f64; 2] {
    [
        l[0] * v[0][0] + l[1] * v[1][0] + l[2] * v[2][0],
        l[0] * v[0][1] + l[1] * v[1][1] + l[2] * v[2][1],
    ]
}

/// `∫_T f dx` with the given rule.
pub fn integrate_triangle(f: impl Fn([f64; 2]) -> f64, vertices: &[[f64; 2]; 3], rule: &QuadratureRule) -> Result<f64> {
    Ok(rule.mapped(vertices)?.iter().map(|&(p, w)| w * f(p)).sum())
}

/// `∫_E f ds` over the straight segment `a → b` with `n_points` Gauss points.
/// `f` receives the physical point and the arclength parameter `s`.
pub fn integrate_edge(f: impl Fn([f64; 2], f64) -> f64, a: [f64; 2], b: [f64; 2], n_points: usize) -> Result<f64> {
    if n_points == 0 {
        return Err(Error::Quadrature("edge rule needs at least one point".into()));
    }
    let len = ((b[0] - a[0]).powi(2) + (b[1] - a[1]).powi(2)).sqrt();
    if !(len > 0.0) {
        return Err(Error::ZeroLengthEdge);
    }
    let (nodes, weights) = gauss_unit(n_points);
    Ok(nodes
        .iter()
        .zip(&weights)
        .map(|(&t, &w)| {
            let p = [a[0] + t * (b[0] - a[0]), a[1] + t * (b[1] - a[1])];
            w * len * f(p, t * len)
        })
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    const REF: [[f64; 2]; 3] = [[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]];

    fn factorial(n: usize) -> f64 {
        (1..=n).map(|k| k as f64).product()
    }

    #[test]
    fn reference_integrals() {
        let rule = default_triangle_rule();
        let one = integrate_triangle(|_| 1.0, &REF, rule).unwrap();
        assert!((one - 0.5).abs() < 1e-15);
        let lin = integrate_triangle(|p| p[0] + p[1], &REF, rule).unwrap();
        assert!((lin - 1.0 / 3.0).abs() < 1e-15);
        let x2y2 = integrate_triangle(|p| p[0].powi(2) * p[1].powi(2), &REF, rule).unwrap();
        assert!((x2y2 - 1.0 / 180.0).abs() < 1e-16);
    }

    #[test]
    fn all_monomials_up_to_exactness_degree() {
        let rule = default_triangle_rule();
        assert!(rule.exactness_degree >= 12);
        let wsum: f64 = rule.weights.iter().sum();
        assert!((wsum - 0.5).abs() < 1e-14);
        assert!(rule.weights.iter().all(|&w| w > 0.0));
        for k in 0..=rule.exactness_degree {
            for j in 0..=k {
                let i = k - j;
                // ∫_ref x^i y^j = i! j! / (i + j + 2)!
                let exact = factorial(i) * factorial(j) / factorial(i + j + 2);
                let q = integrate_triangle(|p| p[0].powi(i as i32) * p[1].powi(j as i32), &REF, rule).unwrap();
                assert!(((q - exact) / exact).abs() < 1e-13, "x^{i} y^{j}: {q} vs {exact}");
            }
        }
    }

    #[test]
    fn degenerate_triangle_is_rejected() {
        let flat = [[0.0, 0.0], [1.0, 1.0], [2.0, 2.0]];
        assert!(matches!(
            integrate_triangle(|_| 1.0, &flat, default_triangle_rule()),
            Err(Error::DegenerateTriangle)
        ));
    }

    #[test]
    fn edge_rules() {
        let len2 = integrate_edge(|_, _| 1.0, [0.0, 0.0], [0.0, 2.0], 1).unwrap();
        assert!((len2 - 2.0).abs() < 1e-15);
        let s2 = integrate_edge(|_, s| s * s, [0.0, 0.0], [1.0, 0.0], 2).unwrap();
        assert!((s2 - 1.0 / 3.0).abs() < 1e-15);
        // degree 7 along an oblique edge, 4 points: exact
        let (a, b) = ([0.2, -0.4], [1.1, 0.8]);
        let len = ((0.9f64).powi(2) + (1.2f64).powi(2)).sqrt();
        let p = |s: f64| 1.0 - 2.0 * s + 0.5 * s.powi(3) + 0.25 * s.powi(7);
        let anti = |s: f64| s - s * s + 0.125 * s.powi(4) + s.powi(8) / 32.0;
        let q = integrate_edge(|_, s| p(s), a, b, 4).unwrap();
        let exact = anti(len) - anti(0.0);
        assert!(((q - exact) / exact).abs() < 1e-13);
        assert!(matches!(
            integrate_edge(|_, _| 1.0, a, a, 3),
            Err(Error::ZeroLengthEdge)
        ));
    }
}
