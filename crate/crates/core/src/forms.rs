//! Element matrices of the ultraweak form
//!
//! `b(u, v) = −⟨u, div Div Q⟩ + ⟨M, A v + Q⟩ + ⟨û, Q⟩_∂T`
//!
//! with load `F(v) = ⟨f, v⟩`, the test-norm Gram matrix, the least-squares
//! coupling `c`, the Cordes-constant checker and the Fortin moment check.
//!
//! Trial columns of every element matrix are ordered `[u (1 or 3), M (3),
//! trace (9)]`; test rows are `[scalar P^p, adapted matrix P⁴]`.

use std::sync::Arc;

use nalgebra::{DMatrix, DVector, Matrix2, SymmetricEigen};

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::polyspace::{dim, SymMatPoly};
use crate::quadrature::{default_edge_rule, default_triangle_rule, TRIANGLE_DEGREE};
use crate::spaces::{
    edge_dof_positions, edge_trace_basis, monomials, ElementGeometry, TestBasis, TrialSpace, COMPONENT_WEIGHT,
    MATRIX_TEST_DEGREE, N_MATRIX_TEST, N_TRACE_LOCAL,
};

pub type MatrixFn = Arc<dyn Fn([f64; 2]) -> Matrix2<f64> + Send + Sync>;
pub type ScalarFn = Arc<dyn Fn([f64; 2]) -> f64 + Send + Sync>;

/// Highest scalar test degree the fixed quadrature integrates exactly.
pub const MAX_TEST_DEGREE: usize = TRIANGLE_DEGREE / 2;

#[derive(Clone)]
pub struct CoefficientField {
    pub a: MatrixFn,
    /// Degree of `A` on each element when it is a mesh-aligned piecewise
    /// polynomial; `None` otherwise.
    pub piecewise_degree: Option<usize>,
}

impl CoefficientField {
    pub fn new(a: impl Fn([f64; 2]) -> Matrix2<f64> + Send + Sync + 'static, piecewise_degree: Option<usize>) -> Self {
        Self {
            a: Arc::new(a),
            piecewise_degree,
        }
    }

    pub fn constant(a: Matrix2<f64>) -> Self {
        Self::new(move |_| a, Some(0))
    }

    pub fn eval(&self, p: [f64; 2]) -> Matrix2<f64> {
        (self.a)(p)
    }

    /// `A : E_c` for the trial basis `E11, E12 + E21, E22`.
    pub fn against_basis(&self, p: [f64; 2]) -> [f64; 3] {
        let a = self.eval(p);
        [a[(0, 0)], a[(0, 1)] + a[(1, 0)], a[(1, 1)]]
    }
}

impl std::fmt::Debug for CoefficientField {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("CoefficientField")
            .field("piecewise_degree", &self.piecewise_degree)
            .finish_non_exhaustive()
    }
}

/// Quadrature points of one element with local monomials tabulated.
struct ElementQuadrature {
    points: Vec<[f64; 2]>,
    weights: Vec<f64>,
    degree: usize,
    /// Row `q` holds all local monomials of degree ≤ `degree` at point `q`.
    mono: DMatrix<f64>,
}

impl ElementQuadrature {
    fn new(geometry: &ElementGeometry, degree: usize) -> Result<Self> {
        let mapped = default_triangle_rule().mapped(&geometry.vertices)?;
        let n = dim(degree);
        let mut mono = DMatrix::zeros(mapped.len(), n);
        let mut buf = vec![0.0; n];
        for (q, (p, _)) in mapped.iter().enumerate() {
            monomials(degree, geometry.to_local(*p), &mut buf);
            for (j, &m) in buf.iter().enumerate() {
                mono[(q, j)] = m;
            }
        }
        Ok(Self {
            points: mapped.iter().map(|(p, _)| *p).collect(),
            weights: mapped.iter().map(|(_, w)| *w).collect(),
            degree,
            mono,
        })
    }

    /// `∫ m_i m_j` over all local monomials of degree ≤ `self.degree`.
    fn monomial_gram(&self) -> DMatrix<f64> {
        let n = dim(self.degree);
        let mut g = DMatrix::zeros(n, n);
        for q in 0..self.points.len() {
            let row = self.mono.row(q);
            let w = self.weights[q];
            for i in 0..n {
                let wi = w * row[i];
                for j in i..n {
                    g[(i, j)] += wi * row[j];
                }
            }
        }
        g.fill_lower_triangle_with_upper_triangle();
        g
    }
}

/// All element matrices for one triangle.
#[derive(Debug, Clone)]
pub struct LocalSystem {
    pub basis: TestBasis,
    pub trial: TrialSpace,
    /// Scalar-test Gram, `∫ v δv`.
    pub gram_scalar: DMatrix<f64>,
    /// Matrix-test Gram, `∫ Q : δQ + ∫ div Div Q div Div δQ`.
    pub gram_matrix: DMatrix<f64>,
    /// `B_T`, rows `[scalar; matrix]`, columns `[u, M, trace]`.
    pub b: DMatrix<f64>,
    /// `F_T` on the scalar rows; zero on the matrix rows.
    pub load: DVector<f64>,
    /// `∫ (A:E_c)(A:E_d)` over the `M` basis.
    pub a_gram: DMatrix<f64>,
    /// `∫ f (A:E_c)`.
    pub a_load: DVector<f64>,
}

impl LocalSystem {
    pub fn new(
        geometry: ElementGeometry,
        trial: TrialSpace,
        test_degree: usize,
        coefficient: &CoefficientField,
        f: &(dyn Fn([f64; 2]) -> f64 + Sync),
    ) -> Result<Self> {
        if test_degree > MAX_TEST_DEGREE {
            return Err(Error::InvalidConfig(format!(
                "scalar test degree {test_degree} exceeds {MAX_TEST_DEGREE}"
            )));
        }
        let basis = TestBasis::new(geometry, test_degree);
        let quad = ElementQuadrature::new(&basis.geometry, MATRIX_TEST_DEGREE.max(test_degree))?;
        let mono_gram = quad.monomial_gram();

        let sdim = basis.scalar_dim();
        let udim = trial.u_dim();
        let ncols = trial.field_dim() + N_TRACE_LOCAL;
        let m_col = udim;
        let t_col = udim + 3;

        let gram_scalar = mono_gram.view((0, 0), (sdim, sdim)).into_owned();
        let gram_matrix = matrix_gram(&basis, &mono_gram);

        let mut b = DMatrix::zeros(sdim + N_MATRIX_TEST, ncols);
        let mut load = DVector::zeros(sdim + N_MATRIX_TEST);
        let mut a_gram = DMatrix::zeros(3, 3);
        let mut a_load = DVector::zeros(3);

        // scalar tests: ⟨M, A v⟩ and ⟨f, v⟩; also the least-squares data terms
        for (q, &p) in quad.points.iter().enumerate() {
            let w = quad.weights[q];
            let ae = coefficient.against_basis(p);
            let fv = f(p);
            for i in 0..sdim {
                let v = w * quad.mono[(q, i)];
                for c in 0..3 {
                    b[(i, m_col + c)] += ae[c] * v;
                }
                load[i] += fv * v;
            }
            for c in 0..3 {
                for d in 0..3 {
                    a_gram[(c, d)] += w * ae[c] * ae[d];
                }
                a_load[c] += w * fv * ae[c];
            }
        }

        // matrix tests: −⟨u, div Div Q⟩ and ⟨M, Q⟩
        let raw_mean = raw_component_integrals(&mono_gram);
        for k in 0..N_MATRIX_TEST {
            let row = sdim + k;
            for j in 0..udim {
                let mut s = 0.0;
                for t in 0..dim(2) {
                    s += basis.divdiv[(t, k)] * mono_gram[(j, t)];
                }
                b[(row, j)] = -s;
            }
            for c in 0..3 {
                let mut s = 0.0;
                for (r, &tr) in basis.transform.column(k).iter().enumerate() {
                    s += tr * raw_mean[(c, r)];
                }
                b[(row, m_col + c)] = COMPONENT_WEIGHT[c] * s;
            }
        }

        // matrix tests: ⟨û, Q⟩_∂T
        let pairing = trace_pairing_matrix(&basis);
        for k in 0..N_MATRIX_TEST {
            for j in 0..N_TRACE_LOCAL {
                b[(sdim + k, t_col + j)] = pairing[(k, j)];
            }
        }

        Ok(Self {
            basis,
            trial,
            gram_scalar,
            gram_matrix,
            b,
            load,
            a_gram,
            a_load,
        })
    }

    pub fn scalar_dim(&self) -> usize {
        self.basis.scalar_dim()
    }

    pub fn trial_dim(&self) -> usize {
        self.b.ncols()
    }

    /// Block-diagonal V-norm Gram.
    pub fn gram(&self) -> DMatrix<f64> {
        let s = self.scalar_dim();
        let n = s + N_MATRIX_TEST;
        let mut g = DMatrix::zeros(n, n);
        g.view_mut((0, 0), (s, s)).copy_from(&self.gram_scalar);
        g.view_mut((s, s), (N_MATRIX_TEST, N_MATRIX_TEST))
            .copy_from(&self.gram_matrix);
        g
    }

    /// Least-squares coupling `C_T`: matrix-test rows of `B_T`.
    pub fn c(&self) -> DMatrix<f64> {
        self.b.rows(self.scalar_dim(), N_MATRIX_TEST).into_owned()
    }

    /// `C_T` for the matrix tests of the trial blocks, as an independent
    /// assembly with `A = 0`.
    pub fn c_without_coefficient(geometry: ElementGeometry, trial: TrialSpace) -> Result<DMatrix<f64>> {
        let zero = CoefficientField::constant(Matrix2::zeros());
        let sys = Self::new(geometry, trial, 0, &zero, &|_| 0.0)?;
        Ok(sys.b.rows(sys.scalar_dim(), N_MATRIX_TEST).into_owned())
    }
}

/// `∫ m_r` of every raw matrix basis member grouped by component: entry
/// `(c, r)` is nonzero only for members of component `c`.
fn raw_component_integrals(mono_gram: &DMatrix<f64>) -> DMatrix<f64> {
    let n4 = dim(MATRIX_TEST_DEGREE);
    let mut out = DMatrix::zeros(3, N_MATRIX_TEST);
    for c in 0..3 {
        for m in 0..n4 {
            // m_0 = 1, so column 0 of the monomial Gram holds ∫ m
            out[(c, c * n4 + m)] = mono_gram[(m, 0)];
        }
    }
    out
}

/// Adapted matrix Gram `Tᵀ G_raw T + Dᵀ G_2 D`.
fn matrix_gram(basis: &TestBasis, mono_gram: &DMatrix<f64>) -> DMatrix<f64> {
    let n4 = dim(MATRIX_TEST_DEGREE);
    let mut raw = DMatrix::zeros(N_MATRIX_TEST, N_MATRIX_TEST);
    for c in 0..3 {
        let block = mono_gram.view((0, 0), (n4, n4)) * COMPONENT_WEIGHT[c];
        raw.view_mut((c * n4, c * n4), (n4, n4)).copy_from(&block);
    }
    let t = &basis.transform;
    let g2 = mono_gram.view((0, 0), (dim(2), dim(2)));
    let d = &basis.divdiv;
    let mut g = t.transpose() * raw * t + d.transpose() * g2 * d;
    g = (&g + g.transpose()) * 0.5;
    g
}

/// `⟨û_j, Q_k⟩_∂T` for every adapted matrix test `k` and local trace DOF `j`.
pub fn trace_pairing_matrix(basis: &TestBasis) -> DMatrix<f64> {
    let mut raw = DMatrix::zeros(N_MATRIX_TEST, N_TRACE_LOCAL);
    let (nodes, weights) = default_edge_rule();
    for k in 0..3 {
        let edge = basis.geometry.edge(k);
        let pos = edge_dof_positions(k);
        let [nx, ny] = edge.normal;
        let [tx, ty] = edge.tangent;
        for (&sigma, &w) in nodes.iter().zip(weights) {
            let w = w * edge.length;
            let p = edge.point(sigma);
            let (q, div) = basis.raw_matrix_values(p);
            let tb = edge_trace_basis(&edge, sigma);
            for r in 0..N_MATRIX_TEST {
                let [q11, q12, q22] = q[r];
                if q11 == 0.0 && q12 == 0.0 && q22 == 0.0 {
                    continue;
                }
                let qn = [q11 * nx + q12 * ny, q12 * nx + q22 * ny];
                let n_qn = nx * qn[0] + ny * qn[1];
                let t_qn = tx * qn[0] + ty * qn[1];
                let n_div = nx * div[r][0] + ny * div[r][1];
                for (b, &j) in tb.iter().zip(&pos) {
                    raw[(r, j)] += w * (n_div * b[0] - n_qn * b[1] - t_qn * b[2]);
                }
            }
        }
    }
    basis.transform.transpose() * raw
}

/// `∮_∂T (n·Div Q) v − (n·Qn) ∂n v − (t·Qn) ∂t v ds` for a physical matrix
/// polynomial `Q` and the trace given by 9 Cartesian vertex DOFs.
pub fn trace_pairing_element(trace_dofs: &[f64; 9], q: &SymMatPoly, vertices: &[[f64; 2]; 3]) -> Result<f64> {
    let geom = ElementGeometry::new(*vertices)?;
    let div = q.div();
    let (nodes, weights) = default_edge_rule();
    let mut acc = 0.0;
    for k in 0..3 {
        let edge = geom.edge(k);
        let pos = edge_dof_positions(k);
        let [nx, ny] = edge.normal;
        let [tx, ty] = edge.tangent;
        for (&sigma, &w) in nodes.iter().zip(weights) {
            let p = edge.point(sigma);
            let qm = q.eval(p);
            let qn = qm * nalgebra::Vector2::new(nx, ny);
            let n_qn = nx * qn[0] + ny * qn[1];
            let t_qn = tx * qn[0] + ty * qn[1];
            let n_div = nx * div[0].eval(p[0], p[1]) + ny * div[1].eval(p[0], p[1]);
            let tb = edge_trace_basis(&edge, sigma);
            let mut tr = [0.0; 3];
            for (b, &j) in tb.iter().zip(&pos) {
                for c in 0..3 {
                    tr[c] += b[c] * trace_dofs[j];
                }
            }
            acc += w * edge.length * (n_div * tr[0] - n_qn * tr[1] - t_qn * tr[2]);
        }
    }
    Ok(acc)
}

/// Coefficients of a physical matrix polynomial of degree ≤ 4 in the adapted
/// test basis, by L² projection (exact on `P⁴_sym`).
pub fn project_to_matrix_basis(basis: &TestBasis, q: &SymMatPoly) -> Result<DVector<f64>> {
    let mapped = default_triangle_rule().mapped(&basis.geometry.vertices)?;
    let mut gram = DMatrix::zeros(N_MATRIX_TEST, N_MATRIX_TEST);
    let mut rhs = DVector::zeros(N_MATRIX_TEST);
    for (p, w) in mapped {
        let (vals, _) = basis.matrix_values(p);
        let qm = q.eval(p);
        let target = [qm[(0, 0)], qm[(0, 1)], qm[(1, 1)]];
        for i in 0..N_MATRIX_TEST {
            rhs[i] += w * frobenius(&vals[i], &target);
            for j in 0..N_MATRIX_TEST {
                gram[(i, j)] += w * frobenius(&vals[i], &vals[j]);
            }
        }
    }
    gram.cholesky()
        .map(|c| c.solve(&rhs))
        .ok_or_else(|| Error::Invariant("matrix test basis L² Gram not SPD".into()))
}

fn frobenius(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    a[0] * b[0] + 2.0 * a[1] * b[1] + a[2] * b[2]
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CordesReport {
    /// `min (tr A)² / ‖A‖_F² − 1` over the samples, clamped to `(0, 1]`.
    pub epsilon: f64,
    /// Sample point attaining the minimum.
    pub argmin: [f64; 2],
    pub lambda_min: f64,
    pub lambda_max: f64,
    pub ellipticity_ok: bool,
}

/// Sampled Cordes constant and ellipticity bounds of `A`.
pub fn cordes_epsilon(coefficient: &CoefficientField, samples: &[[f64; 2]]) -> Result<CordesReport> {
    if samples.is_empty() {
        return Err(Error::InvalidConfig("no sample points for the Cordes check".into()));
    }
    let mut eps = f64::INFINITY;
    let mut argmin = samples[0];
    let mut lambda_min = f64::INFINITY;
    let mut lambda_max = f64::NEG_INFINITY;
    for &p in samples {
        let a = coefficient.eval(p);
        let sym = (a + a.transpose()) * 0.5;
        let tr = sym.trace();
        let frob2 = sym.norm_squared();
        let e = if frob2 > 0.0 {
            tr * tr / frob2 - 1.0
        } else {
            f64::NEG_INFINITY
        };
        if e < eps {
            eps = e;
            argmin = p;
        }
        let ev = SymmetricEigen::new(sym).eigenvalues;
        lambda_min = lambda_min.min(ev.min());
        lambda_max = lambda_max.max(ev.max());
    }
    if !(eps > 0.0) {
        return Err(Error::CordesViolated(eps));
    }
    Ok(CordesReport {
        epsilon: eps.min(1.0),
        argmin,
        lambda_min,
        lambda_max,
        ellipticity_ok: lambda_min > 0.0 && lambda_max.is_finite(),
    })
}

/// Quadrature points of every element, used as Cordes samples.
pub fn mesh_sample_points(mesh: &Mesh) -> Result<Vec<[f64; 2]>> {
    let rule = default_triangle_rule();
    let mut out = Vec::with_capacity(mesh.n_triangles() * rule.len());
    for t in 0..mesh.n_triangles() {
        out.extend(rule.mapped(&mesh.triangle_coords(t))?.into_iter().map(|(p, _)| p));
    }
    Ok(out)
}

#[derive(Debug, Clone)]
pub struct FortinCheck {
    /// Relative residuals of the trace, `M` and `P²` moment families.
    pub residuals: [f64; 3],
    /// `‖ΠQ‖_{divDiv,T} / ‖Q‖_{divDiv,T}` (1 for `Q = 0`).
    pub bound_ratio: f64,
    /// Rank of the 18 moment constraints on `P⁴_sym`.
    pub constraint_rank: usize,
    /// `ΠQ` in the adapted test basis.
    pub coefficients: DVector<f64>,
}

/// Constrain `ΠQ ∈ P⁴_sym(T)` to reproduce the trace, `P⁰_sym` and
/// `div Div`-against-`P²` moments of `Q`, and among those pick the one
/// closest to `Q` in `H(div Div, T)`.
pub fn verify_fortin_moments(vertices: &[[f64; 2]; 3], q: &SymMatPoly) -> Result<FortinCheck> {
    let geometry = ElementGeometry::new(*vertices)?;
    let basis = TestBasis::new(geometry, 0);
    let quad = ElementQuadrature::new(&basis.geometry, MATRIX_TEST_DEGREE)?;
    let mono_gram = quad.monomial_gram();
    let gram = matrix_gram(&basis, &mono_gram);

    let n = N_MATRIX_TEST;
    let n_moments = N_TRACE_LOCAL + 3 + dim(2);
    let mut a = DMatrix::zeros(n_moments, n);
    let mut d = DVector::zeros(n_moments);

    let pairing = trace_pairing_matrix(&basis);
    let raw_mean = raw_component_integrals(&mono_gram);
    for k in 0..n {
        for j in 0..N_TRACE_LOCAL {
            a[(j, k)] = pairing[(k, j)];
        }
        for c in 0..3 {
            let s: f64 = basis
                .transform
                .column(k)
                .iter()
                .enumerate()
                .map(|(r, &t)| t * raw_mean[(c, r)])
                .sum();
            a[(N_TRACE_LOCAL + c, k)] = COMPONENT_WEIGHT[c] * s;
        }
        for t in 0..dim(2) {
            let s: f64 = (0..dim(2)).map(|s| basis.divdiv[(s, k)] * mono_gram[(t, s)]).sum();
            a[(N_TRACE_LOCAL + 3 + t, k)] = s;
        }
    }

    // right-hand sides and the objective's linear term from Q itself
    for j in 0..N_TRACE_LOCAL {
        let mut e = [0.0; 9];
        e[j] = 1.0;
        d[j] = trace_pairing_element(&e, q, vertices)?;
    }
    let dd_q = q.divdiv();
    let mut lin = DVector::zeros(n);
    let mut q_norm2 = 0.0;
    for (idx, &p) in quad.points.iter().enumerate() {
        let w = quad.weights[idx];
        let qm = q.eval(p);
        let qv = [qm[(0, 0)], qm[(0, 1)], qm[(1, 1)]];
        let ddq = dd_q.eval(p[0], p[1]);
        for c in 0..3 {
            d[N_TRACE_LOCAL + c] += w * COMPONENT_WEIGHT[c] * qv[c];
        }
        for t in 0..dim(2) {
            d[N_TRACE_LOCAL + 3 + t] += w * quad.mono[(idx, t)] * ddq;
        }
        let (vals, _) = basis.matrix_values(p);
        for k in 0..n {
            let ddk: f64 = (0..dim(2)).map(|t| basis.divdiv[(t, k)] * quad.mono[(idx, t)]).sum();
            lin[k] += w * (frobenius(&vals[k], &qv) + ddk * ddq);
        }
        q_norm2 += w * (frobenius(&qv, &qv) + ddq * ddq);
    }

    // drop the redundant moment combinations before the saddle-point solve
    let svd = a.clone().svd(true, true);
    let (u, vt) = (svd.u.as_ref().expect("u"), svd.v_t.as_ref().expect("v_t"));
    let smax = svd.singular_values.max();
    let keep: Vec<usize> = (0..svd.singular_values.len())
        .filter(|&i| svd.singular_values[i] > 1e-10 * smax)
        .collect();
    let r = keep.len();
    let mut kkt = DMatrix::zeros(n + r, n + r);
    let mut rhs = DVector::zeros(n + r);
    kkt.view_mut((0, 0), (n, n)).copy_from(&gram);
    rhs.rows_mut(0, n).copy_from(&lin);
    for (row, &i) in keep.iter().enumerate() {
        let s = svd.singular_values[i];
        for k in 0..n {
            kkt[(n + row, k)] = vt[(i, k)];
            kkt[(k, n + row)] = vt[(i, k)];
        }
        rhs[n + row] = u.column(i).dot(&d) / s;
    }
    let sol = kkt
        .lu()
        .solve(&rhs)
        .ok_or_else(|| Error::InfeasibleMoments(f64::INFINITY))?;
    let coefficients = sol.rows(0, n).into_owned();

    let achieved = &a * &coefficients;
    let family = |lo: usize, len: usize| {
        let diff = (achieved.rows(lo, len) - d.rows(lo, len)).norm();
        let scale = d
            .rows(lo, len)
            .norm()
            .max(a.rows(lo, len).norm() * coefficients.norm())
            .max(f64::MIN_POSITIVE);
        diff / scale
    };
    let residuals = [
        family(0, N_TRACE_LOCAL),
        family(N_TRACE_LOCAL, 3),
        family(N_TRACE_LOCAL + 3, dim(2)),
    ];
    let worst = residuals.iter().cloned().fold(0.0, f64::max);
    if !(worst < 1e-8) {
        return Err(Error::InfeasibleMoments(worst));
    }
    let pi_norm2 = coefficients.dot(&(&gram * &coefficients));
    let bound_ratio = if q_norm2 > 0.0 {
        (pi_norm2 / q_norm2).sqrt()
    } else {
        1.0
    };
    Ok(FortinCheck {
        residuals,
        bound_ratio,
        constraint_rank: r,
        coefficients,
    })
}
