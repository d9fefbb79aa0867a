//! Global assembly and solution of the DPG and DPG–least-squares schemes.
//!
//! Each element contributes a Schur complement `Bᵀ G⁻¹ B` (or its
//! least-squares counterpart) over its trial DOFs; the resulting normal
//! equations are SPD. Global unknowns are ordered fields first
//! (element-major), free trace coordinates last.

use std::io::Write;

use faer::prelude::Solve;
use faer::sparse::{SparseColMat, Triplet};
use faer::{Col, Side};
use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;

use crate::adapt::lift_boundary_data;
use crate::error::{Error, Result};
use crate::forms::LocalSystem;
use crate::mesh::Mesh;
use crate::problems::{BoundaryData, ExactSolution, ProblemSpec};
use crate::quadrature::default_triangle_rule;
use crate::spaces::{monomials, DofSlot, ElementGeometry, TraceSpace, TrialSpace, N_MATRIX_TEST, N_TRACE_LOCAL};

/// Iterative refinement steps after the sparse Cholesky solve.
const REFINEMENT_STEPS: usize = 2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    Dpg,
    DpgLsq,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::Dpg => "dpg",
            Method::DpgLsq => "dpg-lsq",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SolveConfig {
    pub method: Method,
    pub trial: TrialSpace,
    pub test_degree: usize,
}

impl SolveConfig {
    pub fn new(method: Method, trial: TrialSpace) -> Self {
        Self {
            method,
            trial,
            test_degree: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Factorization {
    Cholesky,
    ConjugateGradient,
}

impl Factorization {
    pub fn as_str(self) -> &'static str {
        match self {
            Factorization::Cholesky => "cholesky",
            Factorization::ConjugateGradient => "cg",
        }
    }
}

#[derive(Debug, Clone)]
pub struct SolveDiagnostics {
    pub ndof: usize,
    pub n_field_dofs: usize,
    pub n_trace_dofs: usize,
    /// Stored entries of the lower triangle.
    pub nnz: usize,
    pub factorization: Factorization,
    pub cg_iterations: usize,
    /// `‖K x − b‖ / ‖b‖` of the assembled system, after symmetric
    /// diagonal scaling to unit diagonal.
    pub relative_residual: f64,
    /// The scalar test degree is below the degree of a piecewise polynomial
    /// `A`, or `A` is not mesh-aligned.
    pub variational_crime: bool,
}

#[derive(Debug, Clone)]
pub struct Solution {
    pub method: Method,
    pub trial: TrialSpace,
    pub test_degree: usize,
    /// Element-major `[u (u_dim), M11, M12, M22]` per element; `u` in the
    /// element's scaled local monomials.
    pub fields: Vec<f64>,
    /// Free trace coordinates.
    pub trace_free: Vec<f64>,
    /// Cartesian `(v, ∂x v, ∂y v)` at every vertex, lift included.
    pub vertex_traces: Vec<[f64; 3]>,
    /// Per-element residual representers `r_T = G_T⁻¹ (F_T − B_T x_T)`
    /// (matrix-test block only for the least-squares method).
    pub representers: Option<Vec<DVector<f64>>>,
    /// `r_Tᵀ G_T r_T` per element.
    pub residual_sq: Vec<f64>,
    pub diagnostics: SolveDiagnostics,
}

impl Solution {
    pub fn n_elements(&self) -> usize {
        self.fields.len() / self.trial.field_dim()
    }

    pub fn u_coeffs(&self, t: usize) -> &[f64] {
        let fd = self.trial.field_dim();
        &self.fields[t * fd..t * fd + self.trial.u_dim()]
    }

    pub fn m(&self, t: usize) -> [f64; 3] {
        let fd = self.trial.field_dim();
        let o = t * fd + self.trial.u_dim();
        [self.fields[o], self.fields[o + 1], self.fields[o + 2]]
    }

    /// `u_h` on element `t` at a physical point.
    pub fn u_at(&self, geometry: &ElementGeometry, t: usize, p: [f64; 2]) -> f64 {
        let c = self.u_coeffs(t);
        let mut m = [0.0; 3];
        monomials(self.trial.u_degree(), geometry.to_local(p), &mut m);
        c.iter().zip(&m).map(|(a, b)| a * b).sum()
    }

    /// Physical gradient of `u_h` on element `t`.
    pub fn u_gradient(&self, geometry: &ElementGeometry, t: usize) -> [f64; 2] {
        let c = self.u_coeffs(t);
        if c.len() < 3 {
            [0.0, 0.0]
        } else {
            [c[1] / geometry.diameter, c[2] / geometry.diameter]
        }
    }

    /// Solution dump: one row per element (centroid, `u_h` and its gradient
    /// there, `M_h`) and one row per vertex (trace value and gradient).
    pub fn write_csv(&self, mesh: &Mesh, mut w: impl Write) -> Result<()> {
        writeln!(w, "record,id,x,y,u,u_x,u_y,m11,m12,m22")?;
        for t in 0..mesh.n_triangles() {
            let g = ElementGeometry::from_mesh(mesh, t)?;
            let c = g.centroid;
            let du = self.u_gradient(&g, t);
            let m = self.m(t);
            writeln!(
                w,
                "element,{t},{:e},{:e},{:e},{:e},{:e},{:e},{:e},{:e}",
                c[0],
                c[1],
                self.u_at(&g, t, c),
                du[0],
                du[1],
                m[0],
                m[1],
                m[2]
            )?;
        }
        for (v, tr) in self.vertex_traces.iter().enumerate() {
            let p = mesh.coords(v);
            writeln!(
                w,
                "vertex,{v},{:e},{:e},{:e},{:e},{:e},,,",
                p[0], p[1], tr[0], tr[1], tr[2]
            )?;
        }
        Ok(())
    }
}

/// Cholesky of `G` and the Schur complement `Bᵀ G⁻¹ B` with its load
/// `Bᵀ G⁻¹ F`.
pub fn element_schur(
    b: &DMatrix<f64>,
    gram: &DMatrix<f64>,
    load: &DVector<f64>,
) -> Result<(DMatrix<f64>, DVector<f64>, Cholesky<f64, Dyn>)> {
    let chol = gram.clone().cholesky().ok_or(Error::GramNotSpd(usize::MAX))?;
    let l = chol.l();
    let w = l.solve_lower_triangular(b).ok_or(Error::GramNotSpd(usize::MAX))?;
    let z = l.solve_lower_triangular(load).ok_or(Error::GramNotSpd(usize::MAX))?;
    let mut s = w.transpose() * &w;
    s = (&s + s.transpose()) * 0.5;
    let g = w.transpose() * z;
    Ok((s, g, chol))
}

/// Element stiffness and load of either method.
pub fn element_stiffness(sys: &LocalSystem, method: Method) -> Result<(DMatrix<f64>, DVector<f64>)> {
    let sdim = sys.scalar_dim();
    let c = sys.c();
    let zero = DVector::zeros(N_MATRIX_TEST);
    let (mut s, mut g, _) = element_schur(&c, &sys.gram_matrix, &zero)?;
    let m_col = sys.trial.u_dim();
    match method {
        Method::Dpg => {
            let bs = sys.b.rows(0, sdim).into_owned();
            let fs = sys.load.rows(0, sdim).into_owned();
            let (ss, gs, _) = element_schur(&bs, &sys.gram_scalar, &fs)?;
            s += ss;
            g += gs;
        }
        Method::DpgLsq => {
            for i in 0..3 {
                for j in 0..3 {
                    s[(m_col + i, m_col + j)] += sys.a_gram[(i, j)];
                }
                g[m_col + i] += sys.a_load[i];
            }
        }
    }
    Ok((s, g))
}

/// Residual `F − B x` on an element for either method and its representer
/// in the (method's) test space.
pub fn element_residual(sys: &LocalSystem, method: Method, x: &DVector<f64>) -> Result<(DVector<f64>, f64)> {
    let sdim = sys.scalar_dim();
    let mut rep = DVector::zeros(sdim + N_MATRIX_TEST);
    let mut eta2 = 0.0;
    let c = sys.c();
    let rm = -(&c * x);
    let chol_m = sys
        .gram_matrix
        .clone()
        .cholesky()
        .ok_or(Error::GramNotSpd(usize::MAX))?;
    let zm = chol_m.solve(&rm);
    eta2 += rm.dot(&zm);
    rep.rows_mut(sdim, N_MATRIX_TEST).copy_from(&zm);
    if method == Method::Dpg {
        let bs = sys.b.rows(0, sdim);
        let rs = sys.load.rows(0, sdim) - bs * x;
        let chol_s = sys
            .gram_scalar
            .clone()
            .cholesky()
            .ok_or(Error::GramNotSpd(usize::MAX))?;
        let zs = chol_s.solve(&rs);
        eta2 += rs.dot(&zs);
        rep.rows_mut(0, sdim).copy_from(&zs);
    }
    Ok((rep, eta2.max(0.0)))
}

/// Local-to-global map of one element: each local column is a combination
/// of global unknowns plus a fixed (lifted) value.
struct ElementMap {
    columns: Vec<Vec<(usize, f64)>>,
    fixed: DVector<f64>,
}

fn element_map(mesh: &Mesh, t: usize, trial: TrialSpace, traces: &TraceSpace, fixed: &[[f64; 3]]) -> ElementMap {
    let fd = trial.field_dim();
    let n_fields = mesh.n_triangles() * fd;
    let mut columns = Vec::with_capacity(fd + N_TRACE_LOCAL);
    let mut fixed_loc = DVector::zeros(fd + N_TRACE_LOCAL);
    for i in 0..fd {
        columns.push(vec![(t * fd + i, 1.0)]);
    }
    for (k, &v) in mesh.triangles[t].vertices.iter().enumerate() {
        let vt = &traces.vertices[v];
        for c in 0..3 {
            let mut col = Vec::new();
            for m in 0..3 {
                let a = vt.frame[(c, m)];
                if a == 0.0 {
                    continue;
                }
                match vt.slots[m] {
                    DofSlot::Free(i) => col.push((n_fields + i, a)),
                    DofSlot::Fixed => fixed_loc[fd + 3 * k + c] += a * fixed[v][m],
                }
            }
            columns.push(col);
        }
    }
    ElementMap {
        columns,
        fixed: fixed_loc,
    }
}

fn local_system(problem: &ProblemSpec, mesh: &Mesh, t: usize, cfg: &SolveConfig) -> Result<LocalSystem> {
    let geom = ElementGeometry::from_mesh(mesh, t)?;
    let f = problem.f.clone();
    LocalSystem::new(geom, cfg.trial, cfg.test_degree, &problem.coefficient, &move |p| f(p)).map_err(|e| match e {
        Error::GramNotSpd(_) => Error::GramNotSpd(t),
        e => e,
    })
}

/// Fixed trace coordinates: zero, or lifted from the exact solution.
pub fn boundary_values(problem: &ProblemSpec, mesh: &Mesh, traces: &TraceSpace) -> Result<Vec<[f64; 3]>> {
    match problem.boundary {
        BoundaryData::Homogeneous => Ok(vec![[0.0; 3]; mesh.n_vertices()]),
        BoundaryData::LiftFromExact => {
            let exact = problem
                .exact
                .as_ref()
                .ok_or_else(|| Error::InvalidConfig("lifted boundary data needs an exact solution".into()))?;
            lift_boundary_data(exact, mesh, traces)
        }
    }
}

pub fn solve(problem: &ProblemSpec, mesh: &Mesh, cfg: &SolveConfig) -> Result<Solution> {
    let traces = TraceSpace::new(mesh)?;
    let fixed = boundary_values(problem, mesh, &traces)?;
    let nt = mesh.n_triangles();
    let fd = cfg.trial.field_dim();
    let n_fields = nt * fd;
    let n = n_fields + traces.n_free();

    let contributions: Vec<(ElementMap, DMatrix<f64>, DVector<f64>)> = (0..nt)
        .into_par_iter()
        .map(|t| {
            let sys = local_system(problem, mesh, t, cfg)?;
            let (s, g) = element_stiffness(&sys, cfg.method).map_err(|_| Error::GramNotSpd(t))?;
            Ok((element_map(mesh, t, cfg.trial, &traces, &fixed), s, g))
        })
        .collect::<Result<_>>()?;

    let mut triplets = Vec::new();
    let mut rhs = vec![0.0; n];
    for (map, s, g) in &contributions {
        let g_eff = g - s * &map.fixed;
        for (i, ci) in map.columns.iter().enumerate() {
            for &(gi, ai) in ci {
                rhs[gi] += ai * g_eff[i];
                for (j, cj) in map.columns.iter().enumerate() {
                    let sij = s[(i, j)];
                    if sij == 0.0 {
                        continue;
                    }
                    for &(gj, aj) in cj {
                        if gi >= gj {
                            triplets.push(Triplet::new(gi, gj, ai * aj * sij));
                        }
                    }
                }
            }
        }
    }
    drop(contributions);

    // symmetric diagonal scaling: the unknowns differ in scale by powers of h
    let mut diag = vec![0.0; n];
    for tr in &triplets {
        if tr.row == tr.col {
            diag[tr.row] += tr.val;
        }
    }
    if let Some(i) = diag.iter().position(|&d| !(d > 0.0)) {
        return Err(Error::SingularSystem(format!(
            "nonpositive diagonal at unknown {i} ({nt} elements, {n} unknowns)"
        )));
    }
    let scale: Vec<f64> = diag.iter().map(|d| 1.0 / d.sqrt()).collect();
    for tr in triplets.iter_mut() {
        tr.val *= scale[tr.row] * scale[tr.col];
    }
    let rhs: Vec<f64> = rhs.iter().zip(&scale).map(|(b, s)| b * s).collect();

    let mat = SparseColMat::<usize, f64>::try_new_from_triplets(n, n, &triplets)
        .map_err(|e| Error::SingularSystem(format!("assembly failed: {e:?}")))?;
    drop(triplets);
    let nnz = mat.compute_nnz();

    let (y, factorization, cg_iterations) = match mat.sp_cholesky(Side::Lower) {
        Ok(llt) => {
            let b = Col::<f64>::from_fn(n, |i| rhs[i]);
            let sol = llt.solve(&b);
            let mut y: Vec<f64> = (0..n).map(|i| sol[i]).collect();
            for _ in 0..REFINEMENT_STEPS {
                let ky = sym_lower_matvec(&mat, &y);
                let r = Col::<f64>::from_fn(n, |i| rhs[i] - ky[i]);
                let dy = llt.solve(&r);
                for i in 0..n {
                    y[i] += dy[i];
                }
            }
            (y, Factorization::Cholesky, 0)
        }
        Err(_) => {
            let (y, it) = conjugate_gradient(&mat, &rhs, 1e-12, 20 * n + 1000).ok_or_else(|| {
                Error::SingularSystem(format!("Cholesky and CG both failed ({nt} elements, {n} unknowns)"))
            })?;
            (y, Factorization::ConjugateGradient, it)
        }
    };
    let ky = sym_lower_matvec(&mat, &y);
    let rnorm: f64 = ky.iter().zip(&rhs).map(|(a, b)| (a - b) * (a - b)).sum::<f64>().sqrt();
    let bnorm: f64 = rhs.iter().map(|b| b * b).sum::<f64>().sqrt();
    let relative_residual = if bnorm > 0.0 { rnorm / bnorm } else { rnorm };
    let x: Vec<f64> = y.iter().zip(&scale).map(|(y, s)| y * s).collect();

    let fields = x[..n_fields].to_vec();
    let trace_free = x[n_fields..].to_vec();
    let vertex_traces = traces.expand(&trace_free, &fixed);

    // residual representers, recomputing the element systems
    let post: Vec<(DVector<f64>, f64)> = (0..nt)
        .into_par_iter()
        .map(|t| {
            let sys = local_system(problem, mesh, t, cfg)?;
            let mut xl = DVector::zeros(fd + N_TRACE_LOCAL);
            for i in 0..fd {
                xl[i] = fields[t * fd + i];
            }
            for (k, &v) in mesh.triangles[t].vertices.iter().enumerate() {
                for c in 0..3 {
                    xl[fd + 3 * k + c] = vertex_traces[v][c];
                }
            }
            element_residual(&sys, cfg.method, &xl).map_err(|_| Error::GramNotSpd(t))
        })
        .collect::<Result<_>>()?;
    let (representers, residual_sq): (Vec<_>, Vec<_>) = post.into_iter().unzip();

    let variational_crime = match (problem.mesh_aligned, problem.coefficient.piecewise_degree) {
        (true, Some(q)) => cfg.method == Method::Dpg && q > cfg.test_degree,
        _ => true,
    };

    Ok(Solution {
        method: cfg.method,
        trial: cfg.trial,
        test_degree: cfg.test_degree,
        fields,
        trace_free,
        vertex_traces,
        representers: Some(representers),
        residual_sq,
        diagnostics: SolveDiagnostics {
            ndof: n,
            n_field_dofs: n_fields,
            n_trace_dofs: traces.n_free(),
            nnz,
            factorization,
            cg_iterations,
            relative_residual,
            variational_crime,
        },
    })
}

pub fn solve_dpg(problem: &ProblemSpec, mesh: &Mesh, trial: TrialSpace, test_degree: usize) -> Result<Solution> {
    solve(
        problem,
        mesh,
        &SolveConfig {
            method: Method::Dpg,
            trial,
            test_degree,
        },
    )
}

pub fn solve_dpg_lsq(problem: &ProblemSpec, mesh: &Mesh, trial: TrialSpace) -> Result<Solution> {
    solve(problem, mesh, &SolveConfig::new(Method::DpgLsq, trial))
}

/// `y = K x` for `K` stored as its lower triangle.
fn sym_lower_matvec(mat: &SparseColMat<usize, f64>, x: &[f64]) -> Vec<f64> {
    let r = mat.as_ref();
    let col_ptr = r.symbolic().col_ptr();
    let row_idx = r.symbolic().row_idx();
    let val = r.val();
    let mut y = vec![0.0; x.len()];
    for j in 0..x.len() {
        for idx in col_ptr[j]..col_ptr[j + 1] {
            let i = row_idx[idx];
            let v = val[idx];
            y[i] += v * x[j];
            if i != j {
                y[j] += v * x[i];
            }
        }
    }
    y
}

/// Jacobi-preconditioned conjugate gradients on the lower-stored SPD matrix.
fn conjugate_gradient(
    mat: &SparseColMat<usize, f64>,
    b: &[f64],
    tol: f64,
    max_iter: usize,
) -> Option<(Vec<f64>, usize)> {
    let n = b.len();
    let r0 = mat.as_ref();
    let col_ptr = r0.symbolic().col_ptr();
    let row_idx = r0.symbolic().row_idx();
    let val = r0.val();
    let mut diag = vec![0.0; n];
    for j in 0..n {
        for idx in col_ptr[j]..col_ptr[j + 1] {
            if row_idx[idx] == j {
                diag[j] += val[idx];
            }
        }
    }
    if diag.iter().any(|&d| !(d > 0.0)) {
        return None;
    }
    let dot = |a: &[f64], b: &[f64]| a.iter().zip(b).map(|(x, y)| x * y).sum::<f64>();
    let bnorm = dot(b, b).sqrt();
    let mut x = vec![0.0; n];
    if bnorm == 0.0 {
        return Some((x, 0));
    }
    let mut r = b.to_vec();
    let mut z: Vec<f64> = r.iter().zip(&diag).map(|(r, d)| r / d).collect();
    let mut p = z.clone();
    let mut rz = dot(&r, &z);
    for it in 1..=max_iter {
        let ap = sym_lower_matvec(mat, &p);
        let pap = dot(&p, &ap);
        if !(pap > 0.0) {
            return None;
        }
        let alpha = rz / pap;
        for i in 0..n {
            x[i] += alpha * p[i];
            r[i] -= alpha * ap[i];
        }
        if dot(&r, &r).sqrt() <= tol * bnorm {
            return Some((x, it));
        }
        for i in 0..n {
            z[i] = r[i] / diag[i];
        }
        let rz_new = dot(&r, &z);
        let beta = rz_new / rz;
        rz = rz_new;
        for i in 0..n {
            p[i] = z[i] + beta * p[i];
        }
    }
    None
}

/// `(‖u − u_h‖, ‖D²u − M_h‖)` over the mesh (Frobenius norm for `M`).
pub fn field_errors(sol: &Solution, mesh: &Mesh, exact: &ExactSolution) -> Result<(f64, f64)> {
    let rule = default_triangle_rule();
    let parts: Vec<(f64, f64)> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let geom = ElementGeometry::from_mesh(mesh, t)?;
            let m = sol.m(t);
            let mut eu = 0.0;
            let mut em = 0.0;
            for (p, w) in rule.mapped(&geom.vertices)? {
                let du = (exact.u)(p) - sol.u_at(&geom, t, p);
                let h = (exact.hessian)(p);
                let d = [h[(0, 0)] - m[0], 0.5 * (h[(0, 1)] + h[(1, 0)]) - m[1], h[(1, 1)] - m[2]];
                eu += w * du * du;
                em += w * (d[0] * d[0] + 2.0 * d[1] * d[1] + d[2] * d[2]);
            }
            Ok((eu, em))
        })
        .collect::<Result<_>>()?;
    let (eu, em) = parts.iter().fold((0.0, 0.0), |a, b| (a.0 + b.0, a.1 + b.1));
    Ok((eu.sqrt(), em.sqrt()))
}

/// Largest relative entrywise gap between the DPG element stiffness and the
/// least-squares one, over all elements.
pub fn stiffness_identity_defect(problem: &ProblemSpec, mesh: &Mesh, trial: TrialSpace) -> Result<f64> {
    let cfg = SolveConfig::new(Method::Dpg, trial);
    let defects: Vec<f64> = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let sys = local_system(problem, mesh, t, &cfg)?;
            let (sd, gd) = element_stiffness(&sys, Method::Dpg)?;
            let (sl, gl) = element_stiffness(&sys, Method::DpgLsq)?;
            let scale = sd.amax().max(f64::MIN_POSITIVE);
            let gscale = gd.amax().max(f64::MIN_POSITIVE);
            Ok(((sd - sl).amax() / scale).max((gd - gl).amax() / gscale))
        })
        .collect::<Result<_>>()?;
    Ok(defects.into_iter().fold(0.0, f64::max))
}
