use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{anyhow, Context};
use clap::{Parser, Subcommand};

use sdbc::control::Regularization;
use sdbc::experiment::{run_experiment, ExperimentConfig};
use sdbc::fem::ElementKind;
use sdbc::optimizer::SolveMethod;

#[derive(Parser)]
#[command(name = "sdbc", version, about = "Dirichlet boundary control of Stokes flow")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run a convergence study for one of the benchmark examples.
    Run(RunArgs),
}

#[derive(clap::Args)]
struct RunArgs {
    #[arg(long, value_parser = clap::value_parser!(u8).range(1..=3))]
    example: u8,
    #[arg(long, default_value = "h12", value_parser = parse_reg)]
    reg: Regularization,
    #[arg(long, default_value = "mini", value_parser = parse_element)]
    element: ElementKind,
    /// Defaults to 1e-3 for example 1 and 1 otherwise.
    #[arg(long)]
    alpha: Option<f64>,
    /// Inclusive range `a..b` of study levels.
    #[arg(long, value_parser = parse_levels)]
    levels: Option<[usize; 2]>,
    #[arg(long)]
    reference: Option<usize>,
    #[arg(long)]
    out: PathBuf,
    /// Example 1 with Taylor–Hood elements, adding L²(Ω) errors of state and adjoint.
    #[arg(long)]
    table2: bool,
    /// Write VTK and control CSV files for every level.
    #[arg(long)]
    fields: bool,
    #[arg(long)]
    cg_tol: Option<f64>,
    #[arg(long)]
    max_iter: Option<usize>,
    /// Use the L² projection of the target instead of its nodal interpolant.
    #[arg(long)]
    project_target: bool,
    /// Solve study levels with the assembled optimality system.
    #[arg(long)]
    big: bool,
}

fn parse_reg(s: &str) -> Result<Regularization, String> {
    s.parse()
}

fn parse_element(s: &str) -> Result<ElementKind, String> {
    match s {
        "mini" => Ok(ElementKind::Mini),
        "th2" => Ok(ElementKind::Th2),
        "th3" => Ok(ElementKind::Th3),
        other => Err(format!("unknown element `{other}` (expected mini, th2 or th3)")),
    }
}

fn parse_levels(s: &str) -> Result<[usize; 2], String> {
    let (a, b) = s.split_once("..").ok_or_else(|| format!("expected `a..b`, got `{s}`"))?;
    let a = a.trim().parse().map_err(|e| format!("bad level `{a}`: {e}"))?;
    let b = b.trim().trim_start_matches('=').parse().map_err(|e| format!("bad level `{b}`: {e}"))?;
    Ok([a, b])
}

fn configure_threads() -> anyhow::Result<()> {
    if let Ok(v) = std::env::var("SDBC_THREADS") {
        let n: usize = v.parse().map_err(|_| anyhow!("SDBC_THREADS must be a positive integer, got `{v}`"))?;
        rayon::ThreadPoolBuilder::new()
            .num_threads(n.max(1))
            .build_global()
            .context("thread pool")?;
    }
    Ok(())
}

fn run(args: RunArgs) -> anyhow::Result<()> {
    let mut config = ExperimentConfig::for_example(args.example, args.reg).context("config")?;
    config.element = args.element;
    if args.table2 {
        if args.example != 1 {
            return Err(anyhow!("config: --table2 applies to example 1"));
        }
        if args.element == ElementKind::Mini {
            config.element = ElementKind::Th2;
        }
        config.table2 = true;
        config.levels = [1, 3];
        config.reference_level = 5;
    }
    if let Some(a) = args.alpha {
        config.alpha = a;
    }
    if let Some(r) = args.reference {
        config.reference_level = r;
        if args.levels.is_none() && !args.table2 {
            config.levels = [2.min(r.saturating_sub(2)), r.saturating_sub(2)];
        }
    }
    if let Some(l) = args.levels {
        config.levels = l;
    }
    if let Some(t) = args.cg_tol {
        config.solver.cg_tolerance = t;
    }
    if let Some(m) = args.max_iter {
        config.solver.max_iterations = m;
    }
    if args.big {
        config.solver.study_method = SolveMethod::Big;
    }
    config.export_fields = args.fields;
    config.project_target = args.project_target;
    config.out_dir = Some(args.out.clone());
    config.validate().context("config")?;

    let out = run_experiment(&config).context("run")?;
    print!("{}", out.report.to_csv());
    let r = &out.report.reference;
    println!(
        "reference level {}: F(0) = {:.6}, F = {:.6}, J = {:.6}, lambda = {:.6e}",
        r.level, r.f0, r.f, r.j, r.lambda
    );
    if let Some(l0) = r.lambda0 {
        println!("lambda0 = {l0:.6e}, corner residuals = {:?}", r.corner_residuals);
    }
    println!("outputs written to {}", args.out.display());
    Ok(())
}

fn main() -> ExitCode {
    faer::set_global_parallelism(faer::Par::Seq);
    let cli = Cli::parse();
    let result = configure_threads().context("setup").and_then(|_| match cli.command {
        Command::Run(args) => run(args),
    });
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
