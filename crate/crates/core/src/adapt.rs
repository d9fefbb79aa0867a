//! Error estimators, Dörfler marking, boundary lifting and the adaptive loop.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::mesh::Mesh;
use crate::problems::{ExactSolution, ProblemSpec};
use crate::quadrature::default_triangle_rule;
use crate::solver::{field_errors, solve, Solution, SolveConfig};
use crate::spaces::{DofSlot, TraceSpace};

#[derive(Debug, Clone, Default)]
pub struct Indicators {
    /// Dual norm of the discrete residual, squared, per element.
    pub residual: Vec<f64>,
    /// `‖A:M_h − f‖²_T` per element.
    pub data: Vec<f64>,
}

impl Indicators {
    pub fn len(&self) -> usize {
        self.residual.len()
    }

    pub fn is_empty(&self) -> bool {
        self.residual.is_empty()
    }

    pub fn local(&self, t: usize) -> f64 {
        self.residual[t] + self.data[t]
    }

    pub fn local_all(&self) -> Vec<f64> {
        (0..self.len()).map(|t| self.local(t)).collect()
    }

    pub fn eta_residual(&self) -> f64 {
        self.residual.iter().sum::<f64>().sqrt()
    }

    pub fn eta_data(&self) -> f64 {
        self.data.iter().sum::<f64>().sqrt()
    }

    pub fn eta_total(&self) -> f64 {
        (self.residual.iter().sum::<f64>() + self.data.iter().sum::<f64>()).sqrt()
    }
}

/// Residual part from the stored representers plus the data misfit.
pub fn estimate(sol: &Solution, problem: &ProblemSpec, mesh: &Mesh) -> Result<Indicators> {
    if sol.representers.is_none() {
        return Err(Error::MissingRepresenters);
    }
    let rule = default_triangle_rule();
    let data = (0..mesh.n_triangles())
        .into_par_iter()
        .map(|t| {
            let m = sol.m(t);
            let mut acc = 0.0;
            for (p, w) in rule.mapped(&mesh.triangle_coords(t))? {
                let ae = problem.coefficient.against_basis(p);
                let r = ae[0] * m[0] + ae[1] * m[1] + ae[2] * m[2] - (problem.f)(p);
                acc += w * r * r;
            }
            Ok(acc)
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Indicators {
        residual: sol.residual_sq.clone(),
        data,
    })
}

/// Smallest greedy set whose indicators carry a `theta` fraction of the total.
pub fn doerfler_mark(local: &[f64], theta: f64) -> Vec<usize> {
    if theta >= 1.0 {
        return (0..local.len()).collect();
    }
    let total: f64 = local.iter().sum();
    let mut order: Vec<usize> = (0..local.len()).collect();
    order.sort_by(|&a, &b| local[b].total_cmp(&local[a]).then(a.cmp(&b)));
    let mut marked = Vec::new();
    let mut acc = 0.0;
    for t in order {
        if acc >= theta * total {
            break;
        }
        acc += local[t];
        marked.push(t);
    }
    marked.sort_unstable();
    marked
}

/// Fixed trace coordinates from the exact solution: value and gradient in
/// each boundary vertex's frame. Interior entries are zero.
pub fn lift_boundary_data(exact: &ExactSolution, mesh: &Mesh, traces: &TraceSpace) -> Result<Vec<[f64; 3]>> {
    let mut out = vec![[0.0; 3]; mesh.n_vertices()];
    for (v, vt) in traces.vertices.iter().enumerate() {
        if vt.slots.iter().all(|s| matches!(s, DofSlot::Free(_))) {
            continue;
        }
        let p = mesh.coords(v);
        let g = (exact.grad)(p);
        let cart = [(exact.u)(p), g[0], g[1]];
        if cart.iter().any(|c| !c.is_finite()) {
            return Err(Error::NonFiniteBoundaryData(v));
        }
        out[v] = vt.from_cartesian(cart);
    }
    Ok(out)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AdaptiveConfig {
    pub theta: f64,
    /// Stop before solving a mesh with more elements than this.
    pub max_elements: usize,
    /// Stop before solving a mesh whose trial dimension exceeds this.
    pub max_dofs: Option<usize>,
    pub max_levels: Option<usize>,
}

impl Default for AdaptiveConfig {
    fn default() -> Self {
        Self {
            theta: 0.5,
            max_elements: 50_000,
            max_dofs: None,
            max_levels: None,
        }
    }
}

/// Everything known about one level of an adaptive or uniform run.
pub struct LevelResult<'a> {
    pub level: usize,
    pub mesh: &'a Mesh,
    pub solution: &'a Solution,
    pub indicators: &'a Indicators,
    pub errors: Option<(f64, f64)>,
    /// Elements marked for the next level (empty on the last level).
    pub marked: &'a [usize],
}

/// Trial dimension a mesh would have, without assembling anything.
pub fn trial_dimension(mesh: &Mesh, cfg: &SolveConfig) -> Result<usize> {
    Ok(mesh.n_triangles() * cfg.trial.field_dim() + TraceSpace::new(mesh)?.n_free())
}

/// Solve, estimate, mark, refine until the budget is reached. The visitor
/// sees every level.
pub fn adaptive_solve(
    problem: &ProblemSpec,
    initial: Mesh,
    cfg: &SolveConfig,
    adaptive: &AdaptiveConfig,
    mut visit: impl FnMut(&LevelResult) -> Result<()>,
) -> Result<Mesh> {
    if !(adaptive.theta > 0.0 && adaptive.theta <= 1.0) {
        return Err(Error::InvalidConfig(format!("theta {} outside (0, 1]", adaptive.theta)));
    }
    let mut mesh = initial;
    let mut level = 0;
    loop {
        let sol = solve(problem, &mesh, cfg)?;
        let ind = estimate(&sol, problem, &mesh)?;
        let errors = problem
            .exact
            .as_ref()
            .map(|e| field_errors(&sol, &mesh, e))
            .transpose()?;
        let last_level = adaptive.max_levels.is_some_and(|m| level >= m);
        let marked = if last_level {
            Vec::new()
        } else {
            doerfler_mark(&ind.local_all(), adaptive.theta)
        };
        let next = if marked.is_empty() {
            None
        } else {
            Some(mesh.refine_nvb(&marked)?)
        };
        let within_budget = next.as_ref().map_or(Ok(false), |m| -> Result<bool> {
            Ok(m.n_triangles() <= adaptive.max_elements
                && adaptive
                    .max_dofs
                    .map_or(Ok(true), |d| trial_dimension(m, cfg).map(|n| n <= d))?)
        })?;
        let shown: &[usize] = if within_budget { &marked } else { &[] };
        visit(&LevelResult {
            level,
            mesh: &mesh,
            solution: &sol,
            indicators: &ind,
            errors,
            marked: shown,
        })?;
        match next {
            Some(m) if within_budget => {
                mesh = m;
                level += 1;
            }
            _ => return Ok(mesh),
        }
    }
}

/// Distance of the element centroid from a point.
pub fn centroid_distance(mesh: &Mesh, t: usize, p: [f64; 2]) -> f64 {
    let c = mesh.centroid(t);
    ((c[0] - p[0]).powi(2) + (c[1] - p[1]).powi(2)).sqrt()
}
