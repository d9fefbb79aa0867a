//! Bivariate polynomials, symmetric matrix polynomials and the two
//! differential operators the ultraweak forms need: the Hessian `D²` and
//! its formal adjoint `div Div`.
//!
//! Coefficients are stored densely in graded order: all monomials of total
//! degree 0, then degree 1, and so on. Within a degree `k` the monomial
//! `x^(k-j) y^j` sits at offset `j`.

use std::ops::{Add, Mul, Sub};

use nalgebra::Matrix2;

/// Number of monomials of total degree at most `degree`.
pub const fn dim(degree: usize) -> usize {
    (degree + 1) * (degree + 2) / 2
}

/// Graded index of the monomial `x^i y^j`.
pub const fn monomial_index(i: usize, j: usize) -> usize {
    let k = i + j;
    k * (k + 1) / 2 + j
}

/// Exponents `(i, j)` of the monomial at a graded index.
pub fn monomial_exponents(index: usize) -> (usize, usize) {
    let mut k = 0;
    while dim(k) <= index {
        k += 1;
    }
    let j = index + k + 1 - dim(k);
    (k - j, j)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Poly2 {
    degree: usize,
    coeffs: Vec<f64>,
}

impl Poly2 {
    pub fn zero(degree: usize) -> Self {
        Self {
            degree,
            coeffs: vec![0.0; dim(degree)],
        }
    }

    pub fn constant(c: f64) -> Self {
        Self {
            degree: 0,
            coeffs: vec![c],
        }
    }

    /// `coeff * x^i y^j`
    pub fn monomial(i: usize, j: usize, coeff: f64) -> Self {
        let mut p = Self::zero(i + j);
        p.coeffs[monomial_index(i, j)] = coeff;
        p
    }

    /// Build from `(i, j, coeff)` triples; repeated exponents accumulate.
    pub fn from_terms(terms: &[(usize, usize, f64)]) -> Self {
        let degree = terms.iter().map(|&(i, j, _)| i + j).max().unwrap_or(0);
        let mut p = Self::zero(degree);
        for &(i, j, c) in terms {
            p.coeffs[monomial_index(i, j)] += c;
        }
        p
    }

    pub fn from_coeffs(degree: usize, coeffs: Vec<f64>) -> Self {
        assert_eq!(coeffs.len(), dim(degree), "coefficient count must match degree");
        Self { degree, coeffs }
    }

    /// Declared degree (an upper bound on the true degree).
    pub fn degree(&self) -> usize {
        self.degree
    }

    pub fn coeffs(&self) -> &[f64] {
        &self.coeffs
    }

    pub fn coeff(&self, i: usize, j: usize) -> f64 {
        if i + j > self.degree {
            0.0
        } else {
            self.coeffs[monomial_index(i, j)]
        }
    }

    /// Nonzero terms as `(i, j, coeff)`.
    pub fn terms(&self) -> impl Iterator<Item = (usize, usize, f64)> + '_ {
        self.coeffs
            .iter()
            .enumerate()
            .filter(|(_, c)| **c != 0.0)
            .map(|(idx, &c)| {
                let (i, j) = monomial_exponents(idx);
                (i, j, c)
            })
    }

    pub fn eval(&self, x: f64, y: f64) -> f64 {
        let n = self.degree + 1;
        let mut xp = vec![1.0; n];
        let mut yp = vec![1.0; n];
        for k in 1..n {
            xp[k] = xp[k - 1] * x;
            yp[k] = yp[k - 1] * y;
        }
        let mut acc = 0.0;
        let mut idx = 0;
        for k in 0..n {
            for j in 0..=k {
                acc += self.coeffs[idx] * xp[k - j] * yp[j];
                idx += 1;
            }
        }
        acc
    }

    pub fn dx(&self) -> Self {
        let degree = self.degree.saturating_sub(1);
        let mut p = Self::zero(degree);
        for (i, j, c) in self.terms() {
            if i > 0 {
                p.coeffs[monomial_index(i - 1, j)] += c * i as f64;
            }
        }
        p
    }

    pub fn dy(&self) -> Self {
        let degree = self.degree.saturating_sub(1);
        let mut p = Self::zero(degree);
        for (i, j, c) in self.terms() {
            if j > 0 {
                p.coeffs[monomial_index(i, j - 1)] += c * j as f64;
            }
        }
        p
    }

    pub fn scale(&self, s: f64) -> Self {
        Self {
            degree: self.degree,
            coeffs: self.coeffs.iter().map(|c| c * s).collect(),
        }
    }

    /// Symbolic Hessian `[[∂xx, ∂xy], [∂xy, ∂yy]]`.
    pub fn hessian(&self) -> SymMatPoly {
        let px = self.dx();
        SymMatPoly {
            xx: px.dx(),
            xy: px.dy(),
            yy: self.dy().dy(),
        }
    }

    /// Laplacian `∂xx + ∂yy`.
    pub fn laplacian(&self) -> Self {
        &self.dx().dx() + &self.dy().dy()
    }

    /// Max-norm of the coefficient difference, for tests.
    pub fn max_coeff_diff(&self, other: &Self) -> f64 {
        let d = self.degree.max(other.degree);
        (0..dim(d))
            .map(|idx| {
                let (i, j) = monomial_exponents(idx);
                (self.coeff(i, j) - other.coeff(i, j)).abs()
            })
            .fold(0.0, f64::max)
    }
}

impl Add for &Poly2 {
    type Output = Poly2;
    fn add(self, rhs: &Poly2) -> Poly2 {
        let degree = self.degree.max(rhs.degree);
        let mut p = Poly2::zero(degree);
        for (k, c) in self.coeffs.iter().enumerate() {
            p.coeffs[k] += c;
        }
        for (k, c) in rhs.coeffs.iter().enumerate() {
            p.coeffs[k] += c;
        }
        p
    }
}

impl Sub for &Poly2 {
    type Output = Poly2;
    fn sub(self, rhs: &Poly2) -> Poly2 {
        self + &rhs.scale(-1.0)
    }
}

impl Mul for &Poly2 {
    type Output = Poly2;
    fn mul(self, rhs: &Poly2) -> Poly2 {
        let mut p = Poly2::zero(self.degree + rhs.degree);
        for (i, j, a) in self.terms() {
            for (k, l, b) in rhs.terms() {
                p.coeffs[monomial_index(i + k, j + l)] += a * b;
            }
        }
        p
    }
}

/// Exact Hessian of a polynomial at a point.
pub fn eval_hessian(p: &Poly2, point: [f64; 2]) -> Matrix2<f64> {
    p.hessian().eval(point)
}

/// Symmetric 2×2 matrix whose entries are polynomials. The off-diagonal
/// entry `xy` occupies both `(1,2)` and `(2,1)`.
#[derive(Debug, Clone, PartialEq)]
pub struct SymMatPoly {
    pub xx: Poly2,
    pub xy: Poly2,
    pub yy: Poly2,
}

impl SymMatPoly {
    pub fn new(xx: Poly2, xy: Poly2, yy: Poly2) -> Self {
        Self { xx, xy, yy }
    }

    /// `v · I`
    pub fn scalar_identity(v: &Poly2) -> Self {
        Self {
            xx: v.clone(),
            xy: Poly2::zero(0),
            yy: v.clone(),
        }
    }

    pub fn degree(&self) -> usize {
        self.xx.degree().max(self.xy.degree()).max(self.yy.degree())
    }

    pub fn eval(&self, point: [f64; 2]) -> Matrix2<f64> {
        let [x, y] = point;
        let off = self.xy.eval(x, y);
        Matrix2::new(self.xx.eval(x, y), off, off, self.yy.eval(x, y))
    }

    /// Row-wise divergence `Div Q = (∂x Qxx + ∂y Qxy, ∂x Qxy + ∂y Qyy)`.
    pub fn div(&self) -> [Poly2; 2] {
        [&self.xx.dx() + &self.xy.dy(), &self.xy.dx() + &self.yy.dy()]
    }

    /// `div Div Q = ∂xx Qxx + 2 ∂xy Qxy + ∂yy Qyy`
    pub fn divdiv(&self) -> Poly2 {
        let a = self.xx.dx().dx();
        let b = self.xy.dx().dy().scale(2.0);
        let c = self.yy.dy().dy();
        &(&a + &b) + &c
    }
}

pub fn divdiv(q: &SymMatPoly) -> Poly2 {
    q.divdiv()
}
