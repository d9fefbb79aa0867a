use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{bail, Context};
use clap::{Parser, Subcommand, ValueEnum};
use dpg_nondiv::problems::problem_by_name;
use dpg_nondiv::solver::{Method, SolveConfig};
use dpg_nondiv::spaces::TrialSpace;
use dpg_nondiv::study::{run_to_directory, Refinement, StudyConfig};

#[derive(Parser)]
#[command(name = "dpg-nondiv", version, about = "Ultraweak DPG solvers for A:D²u = f")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a convergence study and write tables, meshes and solutions.
    Run(RunArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum MethodArg {
    Dpg,
    DpgLsq,
}

#[derive(Clone, Copy, ValueEnum)]
enum RefineArg {
    Uniform,
    Adaptive,
}

#[derive(Clone, Copy, ValueEnum)]
enum TrialArg {
    Std,
    Augmented,
}

#[derive(clap::Args)]
struct RunArgs {
    /// Benchmark problem: 61, 62, 63 or 64.
    #[arg(long)]
    problem: String,
    #[arg(long, value_enum, default_value = "dpg")]
    method: MethodArg,
    #[arg(long, value_enum, default_value = "uniform")]
    refine: RefineArg,
    /// Dörfler bulk parameter for adaptive refinement.
    #[arg(long, default_value_t = 0.5)]
    theta: f64,
    /// Refinement steps after the initial mesh.
    #[arg(long, conflicts_with = "max_dofs")]
    levels: Option<usize>,
    /// Stop before a mesh whose trial dimension exceeds this.
    #[arg(long)]
    max_dofs: Option<usize>,
    #[arg(long, default_value_t = 50_000)]
    max_elements: usize,
    /// Trial space; defaults to the problem's own choice.
    #[arg(long, value_enum)]
    trial: Option<TrialArg>,
    /// Polynomial degree of the scalar test functions.
    #[arg(long, default_value_t = 0)]
    test_degree: usize,
    #[arg(long)]
    out: PathBuf,
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let problem = match problem_by_name(&args.problem) {
        Some(p) => p,
        None => bail!("unknown problem {:?} (expected 61, 62, 63 or 64)", args.problem),
    };
    let method = match args.method {
        MethodArg::Dpg => Method::Dpg,
        MethodArg::DpgLsq => Method::DpgLsq,
    };
    let trial = match args.trial {
        Some(TrialArg::Std) => TrialSpace::Standard,
        Some(TrialArg::Augmented) => TrialSpace::Augmented,
        None => problem.trial,
    };
    let refinement = match args.refine {
        RefineArg::Uniform => Refinement::Uniform,
        RefineArg::Adaptive => Refinement::Adaptive { theta: args.theta },
    };
    let mut cfg = StudyConfig::new(
        SolveConfig {
            method,
            trial,
            test_degree: args.test_degree,
        },
        refinement,
    );
    cfg.max_elements = args.max_elements;
    cfg.max_dofs = args.max_dofs;
    cfg.max_levels = match (args.levels, args.max_dofs, args.refine) {
        (Some(l), _, _) => Some(l),
        (None, None, RefineArg::Uniform) => Some(5),
        _ => None,
    };

    let records =
        run_to_directory(&problem, &cfg, &args.out).with_context(|| format!("problem {} failed", problem.name))?;
    for r in &records {
        let err = |e: Option<f64>| e.map(|e| format!("{e:.3e}")).unwrap_or_else(|| "-".into());
        println!(
            "level {:>2}  nelem {:>6}  ndof {:>7}  err_u {}  err_M {}  eta {:.3e}",
            r.level,
            r.nelem,
            r.ndof,
            err(r.err_u),
            err(r.err_m),
            r.eta_total
        );
    }
    println!("wrote {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::Run(args) => run(args),
    };
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
