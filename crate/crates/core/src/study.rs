//! Convergence studies: uniform or adaptive refinement sequences, per-level
//! tables with empirical orders of convergence, and run output on disk.

use std::fmt::Write as _;
use std::fs;
use std::io::BufWriter;
use std::path::Path;

use crate::adapt::{adaptive_solve, AdaptiveConfig, LevelResult};
use crate::error::{Error, Result};
use crate::forms::{cordes_epsilon, mesh_sample_points, CordesReport};
use crate::mesh::Mesh;
use crate::problems::ProblemSpec;
use crate::quadrature::{EDGE_POINTS, TRIANGLE_DEGREE};
use crate::solver::{Factorization, SolveConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Refinement {
    Uniform,
    Adaptive { theta: f64 },
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StudyConfig {
    pub solve: SolveConfig,
    pub refinement: Refinement,
    /// Refinement steps after the initial mesh.
    pub max_levels: Option<usize>,
    pub max_elements: usize,
    pub max_dofs: Option<usize>,
}

impl StudyConfig {
    pub fn new(solve: SolveConfig, refinement: Refinement) -> Self {
        Self {
            solve,
            refinement,
            max_levels: None,
            max_elements: AdaptiveConfig::default().max_elements,
            max_dofs: None,
        }
    }

    /// Uniform refinement through level `levels`.
    pub fn uniform(solve: SolveConfig, levels: usize) -> Self {
        Self {
            max_levels: Some(levels),
            ..Self::new(solve, Refinement::Uniform)
        }
    }

    pub fn theta(&self) -> f64 {
        match self.refinement {
            Refinement::Uniform => 1.0,
            Refinement::Adaptive { theta } => theta,
        }
    }

    fn adaptive(&self) -> AdaptiveConfig {
        AdaptiveConfig {
            theta: self.theta(),
            max_elements: self.max_elements,
            max_dofs: self.max_dofs,
            max_levels: self.max_levels,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LevelRecord {
    pub level: usize,
    pub nelem: usize,
    pub ndof: usize,
    pub hmax: f64,
    pub err_u: Option<f64>,
    pub err_m: Option<f64>,
    pub eta_res: f64,
    pub eta_data: f64,
    pub eta_total: f64,
    pub theta: f64,
    pub method: &'static str,
    pub factorization: Factorization,
    pub relative_residual: f64,
    pub n_marked: usize,
}

impl LevelRecord {
    /// `(err_u² + err_M²)^{1/2}` when an exact solution is known.
    pub fn err_fields(&self) -> Option<f64> {
        Some((self.err_u?.powi(2) + self.err_m?.powi(2)).sqrt())
    }
}

/// Which mesh-size proxy an order of convergence refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EocBasis {
    H,
    /// `ndof^{-1/2}`
    Ndof,
}

/// Order of convergence between two levels.
pub fn eoc(a: &LevelRecord, b: &LevelRecord, ea: f64, eb: f64, basis: EocBasis) -> Option<f64> {
    let ratio = match basis {
        EocBasis::H => a.hmax / b.hmax,
        EocBasis::Ndof => (b.ndof as f64 / a.ndof as f64).sqrt(),
    };
    if ea > 0.0 && eb > 0.0 && ratio > 1.0 {
        Some((ea / eb).ln() / ratio.ln())
    } else {
        None
    }
}

/// Order of convergence over the last `steps` level steps (secant through
/// levels `L − steps` and `L`).
pub fn eoc_last(
    records: &[LevelRecord],
    steps: usize,
    value: impl Fn(&LevelRecord) -> Option<f64>,
    basis: EocBasis,
) -> Option<f64> {
    if records.len() <= steps {
        return None;
    }
    let b = records.last()?;
    let a = &records[records.len() - 1 - steps];
    eoc(a, b, value(a)?, value(b)?, basis)
}

/// Run a study; `visit` sees every level before its record is stored.
pub fn run_convergence(
    problem: &ProblemSpec,
    cfg: &StudyConfig,
    mut visit: impl FnMut(&LevelResult, &LevelRecord) -> Result<()>,
) -> Result<Vec<LevelRecord>> {
    let mut records = Vec::new();
    adaptive_solve(
        problem,
        Mesh::initial_square_mesh(),
        &cfg.solve,
        &cfg.adaptive(),
        |lr| {
            let d = &lr.solution.diagnostics;
            let rec = LevelRecord {
                level: lr.level,
                nelem: lr.mesh.n_triangles(),
                ndof: d.ndof,
                hmax: lr.mesh.h_max(),
                err_u: lr.errors.map(|e| e.0),
                err_m: lr.errors.map(|e| e.1),
                eta_res: lr.indicators.eta_residual(),
                eta_data: lr.indicators.eta_data(),
                eta_total: lr.indicators.eta_total(),
                theta: cfg.theta(),
                method: cfg.solve.method.as_str(),
                factorization: d.factorization,
                relative_residual: d.relative_residual,
                n_marked: lr.marked.len(),
            };
            visit(lr, &rec)?;
            records.push(rec);
            Ok(())
        },
    )?;
    Ok(records)
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| format!("{x:e}")).unwrap_or_default()
}

/// Per-level table with EOC columns against the previous level.
pub fn table_csv(records: &[LevelRecord]) -> String {
    let mut s = String::from(
        "level,nelem,ndof,err_u,err_M,eta_res,eta_data,eta_total,theta,method,\
         hmax,eoc_u_h,eoc_M_h,eoc_eta_h,eoc_u_ndof,eoc_M_ndof,eoc_eta_ndof\n",
    );
    for (i, r) in records.iter().enumerate() {
        let prev = i.checked_sub(1).map(|j| &records[j]);
        let rate = |f: fn(&LevelRecord) -> Option<f64>, basis| prev.and_then(|p| eoc(p, r, f(p)?, f(r)?, basis));
        let _ = writeln!(
            s,
            "{},{},{},{},{},{:e},{:e},{:e},{},{},{:e},{},{},{},{},{},{}",
            r.level,
            r.nelem,
            r.ndof,
            opt(r.err_u),
            opt(r.err_m),
            r.eta_res,
            r.eta_data,
            r.eta_total,
            r.theta,
            r.method,
            r.hmax,
            opt(rate(|r| r.err_u, EocBasis::H)),
            opt(rate(|r| r.err_m, EocBasis::H)),
            opt(rate(|r| Some(r.eta_total), EocBasis::H)),
            opt(rate(|r| r.err_u, EocBasis::Ndof)),
            opt(rate(|r| r.err_m, EocBasis::Ndof)),
            opt(rate(|r| Some(r.eta_total), EocBasis::Ndof)),
        );
    }
    s
}

/// Cordes constant sampled on the quadrature points of the twice uniformly
/// refined initial mesh.
pub fn problem_cordes(problem: &ProblemSpec) -> Result<CordesReport> {
    let mesh = Mesh::initial_square_mesh().uniform_refine().uniform_refine();
    cordes_epsilon(&problem.coefficient, &mesh_sample_points(&mesh)?)
}

/// Run a study and write `table.csv`, `mesh_L.txt`, `solution_L.csv` and
/// `meta.txt` (flat `key=value`) into `out`.
pub fn run_to_directory(problem: &ProblemSpec, cfg: &StudyConfig, out: &Path) -> Result<Vec<LevelRecord>> {
    let cordes = problem_cordes(problem)?;
    if !cordes.ellipticity_ok {
        return Err(Error::Invariant(format!(
            "coefficient not uniformly elliptic (sampled lambda_min {:e})",
            cordes.lambda_min
        )));
    }
    fs::create_dir_all(out)?;
    let mut crime = false;
    let records = run_convergence(problem, cfg, |lr, _| {
        crime |= lr.solution.diagnostics.variational_crime;
        fs::write(out.join(format!("mesh_{}.txt", lr.level)), lr.mesh.to_text())?;
        let file = fs::File::create(out.join(format!("solution_{}.csv", lr.level)))?;
        lr.solution.write_csv(lr.mesh, BufWriter::new(file))
    })?;
    fs::write(out.join("table.csv"), table_csv(&records))?;
    fs::write(out.join("meta.txt"), meta_text(problem, cfg, &cordes, crime, &records))?;
    Ok(records)
}

fn meta_text(
    problem: &ProblemSpec,
    cfg: &StudyConfig,
    cordes: &CordesReport,
    crime: bool,
    records: &[LevelRecord],
) -> String {
    let mut s = String::new();
    let mut kv = |k: &str, v: String| {
        let _ = writeln!(s, "{k}={v}");
    };
    kv("problem", problem.name.clone());
    kv("notes", problem.notes.clone());
    kv("method", cfg.solve.method.as_str().into());
    kv("trial", cfg.solve.trial.as_str().into());
    kv("test_degree", cfg.solve.test_degree.to_string());
    match cfg.refinement {
        Refinement::Uniform => kv("refine", "uniform".into()),
        Refinement::Adaptive { theta } => {
            kv("refine", "adaptive".into());
            kv("marking", "doerfler".into());
            kv("theta", theta.to_string());
        }
    }
    kv(
        "max_levels",
        cfg.max_levels.map(|l| l.to_string()).unwrap_or_else(|| "none".into()),
    );
    kv("max_elements", cfg.max_elements.to_string());
    kv(
        "max_dofs",
        cfg.max_dofs.map(|d| d.to_string()).unwrap_or_else(|| "none".into()),
    );
    kv("cordes_epsilon", format!("{:e}", cordes.epsilon));
    kv(
        "cordes_argmin",
        format!("{:e} {:e}", cordes.argmin[0], cordes.argmin[1]),
    );
    kv("lambda_min", format!("{:e}", cordes.lambda_min));
    kv("lambda_max", format!("{:e}", cordes.lambda_max));
    kv("mesh_aligned", problem.mesh_aligned.to_string());
    kv("variational_crime", crime.to_string());
    kv("triangle_quadrature_degree", TRIANGLE_DEGREE.to_string());
    kv("edge_quadrature_points", EDGE_POINTS.to_string());
    kv("levels_computed", records.len().to_string());
    if let Some(last) = records.last() {
        kv("final_nelem", last.nelem.to_string());
        kv("final_ndof", last.ndof.to_string());
    }
    s
}
