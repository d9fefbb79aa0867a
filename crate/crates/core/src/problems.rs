//! Benchmark problems on `(−1, 1)²`.

use std::sync::Arc;

use nalgebra::Matrix2;

use crate::forms::{CoefficientField, MatrixFn, ScalarFn};
use crate::spaces::TrialSpace;

pub type GradientFn = Arc<dyn Fn([f64; 2]) -> [f64; 2] + Send + Sync>;

#[derive(Clone)]
pub struct ExactSolution {
    pub u: ScalarFn,
    pub grad: GradientFn,
    pub hessian: MatrixFn,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BoundaryData {
    Homogeneous,
    /// Boundary trace DOFs are taken from the exact solution.
    LiftFromExact,
}

#[derive(Clone)]
pub struct ProblemSpec {
    pub name: String,
    pub coefficient: CoefficientField,
    pub f: ScalarFn,
    pub exact: Option<ExactSolution>,
    pub boundary: BoundaryData,
    pub trial: TrialSpace,
    /// Whether `A` is polynomial on every element of every NVB refinement of
    /// the initial mesh.
    pub mesh_aligned: bool,
    pub notes: String,
}

impl std::fmt::Debug for ProblemSpec {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ProblemSpec")
            .field("name", &self.name)
            .field("boundary", &self.boundary)
            .field("trial", &self.trial)
            .field("mesh_aligned", &self.mesh_aligned)
            .finish_non_exhaustive()
    }
}

/// Sign with `sign(0) = 0`.
pub fn sign(x: f64) -> f64 {
    if x > 0.0 {
        1.0
    } else if x < 0.0 {
        -1.0
    } else {
        0.0
    }
}

fn quadrant_coefficient(p: [f64; 2]) -> Matrix2<f64> {
    let s = sign(p[0] * p[1]);
    Matrix2::new(2.0, s, s, 2.0)
}

/// `φ(t) = t e^{1−|t|} − t`
pub fn phi(t: f64) -> f64 {
    t * (1.0 - t.abs()).exp() - t
}

pub fn phi_d1(t: f64) -> f64 {
    (1.0 - t.abs()) * (1.0 - t.abs()).exp() - 1.0
}

pub fn phi_d2(t: f64) -> f64 {
    -sign(t) * (2.0 - t.abs()) * (1.0 - t.abs()).exp()
}

/// Smooth product solution with a quadrant-wise constant coefficient.
pub fn problem_61() -> ProblemSpec {
    let u: ScalarFn = Arc::new(|p| phi(p[0]) * phi(p[1]));
    let grad: GradientFn = Arc::new(|p| [phi_d1(p[0]) * phi(p[1]), phi(p[0]) * phi_d1(p[1])]);
    let hessian: MatrixFn = Arc::new(|p| {
        let (x, y) = (p[0], p[1]);
        let xy = phi_d1(x) * phi_d1(y);
        Matrix2::new(phi_d2(x) * phi(y), xy, xy, phi(x) * phi_d2(y))
    });
    let f: ScalarFn = Arc::new(|p| {
        let (x, y) = (p[0], p[1]);
        let s = sign(x * y);
        2.0 * phi_d2(x) * phi(y) + 2.0 * s * phi_d1(x) * phi_d1(y) + 2.0 * phi(x) * phi_d2(y)
    });
    ProblemSpec {
        name: "61".into(),
        coefficient: CoefficientField::new(quadrant_coefficient, Some(0)),
        f,
        exact: Some(ExactSolution { u, grad, hessian }),
        boundary: BoundaryData::Homogeneous,
        trial: TrialSpace::Standard,
        mesh_aligned: true,
        notes: "smooth solution, A piecewise constant on quadrants".into(),
    }
}

pub const SINGULAR_EXPONENT: f64 = 5.0 / 3.0;

/// `u = r^{5/3}` with inhomogeneous boundary data.
pub fn problem_62() -> ProblemSpec {
    const ALPHA: f64 = SINGULAR_EXPONENT;
    let u: ScalarFn = Arc::new(|p| (p[0] * p[0] + p[1] * p[1]).powf(0.5 * ALPHA));
    let grad: GradientFn = Arc::new(|p| {
        let r2 = p[0] * p[0] + p[1] * p[1];
        if r2 == 0.0 {
            return [0.0, 0.0];
        }
        let c = ALPHA * r2.powf(0.5 * ALPHA - 1.0);
        [c * p[0], c * p[1]]
    });
    let hessian: MatrixFn = Arc::new(hessian_62);
    let f: ScalarFn = Arc::new(|p| {
        let h = hessian_62(p);
        let s = sign(p[0] * p[1]);
        2.0 * (h[(0, 0)] + h[(1, 1)]) + 2.0 * s * h[(0, 1)]
    });
    ProblemSpec {
        name: "62".into(),
        coefficient: CoefficientField::new(quadrant_coefficient, Some(0)),
        f,
        exact: Some(ExactSolution { u, grad, hessian }),
        boundary: BoundaryData::LiftFromExact,
        trial: TrialSpace::Standard,
        mesh_aligned: true,
        notes: "u in H^(8/3-delta), singular Hessian at the origin".into(),
    }
}

fn hessian_62(p: [f64; 2]) -> Matrix2<f64> {
    const ALPHA: f64 = SINGULAR_EXPONENT;
    let r2 = p[0] * p[0] + p[1] * p[1];
    if r2 == 0.0 {
        return Matrix2::from_element(f64::INFINITY);
    }
    let a = ALPHA * r2.powf(0.5 * ALPHA - 1.0);
    let b = ALPHA * (ALPHA - 2.0) * r2.powf(0.5 * ALPHA - 2.0);
    Matrix2::new(
        a + b * p[0] * p[0],
        b * p[0] * p[1],
        b * p[0] * p[1],
        a + b * p[1] * p[1],
    )
}

/// Ring profile of the off-diagonal coefficient. On the circles the outer
/// branch is used.
pub fn ring_profile(r: f64) -> f64 {
    if r < 1.0 / 3.0 {
        1.0
    } else if r < 2.0 / 3.0 {
        -1.0
    } else {
        0.0
    }
}

/// Unknown solution, `f = 1`, coefficient discontinuous across circles.
pub fn problem_63() -> ProblemSpec {
    let a = |p: [f64; 2]| {
        let r = (p[0] * p[0] + p[1] * p[1]).sqrt();
        let off = ring_profile(r) * sign(p[0] * p[1]);
        Matrix2::new(2.0, off, off, 2.0)
    };
    ProblemSpec {
        name: "63".into(),
        coefficient: CoefficientField::new(a, None),
        f: Arc::new(|_| 1.0),
        exact: None,
        boundary: BoundaryData::Homogeneous,
        trial: TrialSpace::Standard,
        mesh_aligned: false,
        notes: "no exact solution; A discontinuous across r = 1/3 and r = 2/3, not mesh aligned".into(),
    }
}

/// Same data as [`problem_61`] on the augmented trial space.
pub fn problem_64() -> ProblemSpec {
    ProblemSpec {
        name: "64".into(),
        trial: TrialSpace::Augmented,
        notes: "smooth solution on the augmented trial space".into(),
        ..problem_61()
    }
}

pub fn problem_by_name(name: &str) -> Option<ProblemSpec> {
    match name {
        "61" => Some(problem_61()),
        "62" => Some(problem_62()),
        "63" => Some(problem_63()),
        "64" => Some(problem_64()),
        _ => None,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn phi_derivatives_match_finite_differences() {
        for &t in &[-0.8, -0.3, 0.2, 0.7] {
            let h = 1e-5;
            let d1 = (phi(t + h) - phi(t - h)) / (2.0 * h);
            let d2 = (phi_d1(t + h) - phi_d1(t - h)) / (2.0 * h);
            assert!((d1 - phi_d1(t)).abs() < 1e-8);
            assert!((d2 - phi_d2(t)).abs() < 1e-8);
        }
    }

    #[test]
    fn point_values() {
        let p = problem_61();
        let v = (p.exact.as_ref().unwrap().u)([0.5, 0.5]);
        let expected = (0.5 * 0.5f64.exp() - 0.5).powi(2);
        assert!((v - expected).abs() < 1e-15);
        assert!((v - 0.106).abs() < 1e-3);
        let q = problem_62();
        assert!(((q.exact.as_ref().unwrap().u)([1.0, 1.0]) - 2f64.powf(5.0 / 6.0)).abs() < 1e-14);
        let r = problem_63();
        assert_eq!(r.coefficient.eval([0.1, 0.1])[(0, 1)], 1.0);
        assert_eq!(r.coefficient.eval([0.9, 0.9]), Matrix2::identity() * 2.0);
    }
}
