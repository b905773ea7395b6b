use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use nsnewton::bench::{
    load_problem, run_benchmark, run_single, write_rows_csv, BenchConfig, BenchError, ProblemKind, ProblemSpec,
    SolverKind, LASSO_RESIDUAL_DEFINITION, SLBQP_RESIDUAL_DEFINITION,
};
use nsnewton::checks;

#[derive(Parser)]
#[command(name = "nsnewton", version, about = "Generalized Newton solvers for SLBQP and Lasso")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Solve a random or LIBSVM-built SLBQP.
    SolveSlbqp(SolveArgs),
    /// Solve a random or LIBSVM Lasso problem.
    SolveLasso(SolveArgs),
    /// Run a benchmark described by a JSON config file.
    Bench(BenchArgs),
    /// Run the randomized invariant suites.
    Check(CheckArgs),
}

#[derive(Clone, Copy, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Clone, Copy, ValueEnum)]
enum SolverArg {
    Cnfb,
    Cnal,
    Fista,
    Grnmw,
    Grnmwm,
}

impl From<SolverArg> for SolverKind {
    fn from(s: SolverArg) -> Self {
        match s {
            SolverArg::Cnfb => SolverKind::Cnfb,
            SolverArg::Cnal => SolverKind::Cnal,
            SolverArg::Fista => SolverKind::Fista,
            SolverArg::Grnmw => SolverKind::Grnmw,
            SolverArg::Grnmwm => SolverKind::Grnmwm,
        }
    }
}

#[derive(Args)]
struct SolveArgs {
    /// Number of variables of a generated instance.
    #[arg(long, conflicts_with = "file")]
    n: Option<usize>,
    /// Rows of a generated Lasso design (default n / 5).
    #[arg(long)]
    m: Option<usize>,
    /// Rank of Q as a fraction of n for generated SLBQPs.
    #[arg(long)]
    rank_frac: Option<f64>,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// LIBSVM input file.
    #[arg(long)]
    file: Option<PathBuf>,
    /// Lasso weight relative to ||A^T b||_inf.
    #[arg(long)]
    lambda_c: Option<f64>,
    /// SVM box bound for LIBSVM-built SLBQPs.
    #[arg(long)]
    c_reg: Option<f64>,
    #[arg(long, value_enum)]
    solver: Option<SolverArg>,
    #[arg(long, default_value_t = 1e-6)]
    tol: f64,
    #[arg(long, default_value_t = 200)]
    max_iter: usize,
    #[arg(long, value_enum, default_value = "json")]
    out: Format,
    /// Include the per-iteration record and the solution in JSON output.
    #[arg(long)]
    trace: bool,
}

#[derive(Args)]
struct BenchArgs {
    /// JSON benchmark configuration.
    #[arg(long)]
    config: PathBuf,
    #[arg(long, value_enum, default_value = "json")]
    out: Format,
    /// Run rows on separate threads.
    #[arg(long)]
    parallel: bool,
}

#[derive(Args)]
struct CheckArgs {
    #[arg(long, default_value_t = 200)]
    samples: usize,
    #[arg(long, default_value_t = 0)]
    seed: u64,
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let result = match cli.command {
        Command::SolveSlbqp(args) => solve(ProblemKind::Slbqp, args),
        Command::SolveLasso(args) => solve(ProblemKind::Lasso, args),
        Command::Bench(args) => bench(args),
        Command::Check(args) => Ok(check(args)),
    };
    match result {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
    }
}

fn solve(kind: ProblemKind, args: SolveArgs) -> Result<bool, BenchError> {
    let spec = ProblemSpec {
        kind,
        n: args.n,
        m: args.m,
        rank_frac: args.rank_frac,
        seed: Some(args.seed),
        file: args.file,
        lambda_c: args.lambda_c,
        c_reg: args.c_reg,
    };
    let solver = args.solver.map(SolverKind::from).unwrap_or(match kind {
        ProblemKind::Slbqp => SolverKind::Cnfb,
        ProblemKind::Lasso => SolverKind::Cnal,
    });
    let problem = load_problem(&spec)?;
    let outcome = run_single(&spec.id(), &problem, solver, args.tol, args.max_iter)?;
    let definition = match kind {
        ProblemKind::Slbqp => SLBQP_RESIDUAL_DEFINITION,
        ProblemKind::Lasso => LASSO_RESIDUAL_DEFINITION,
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match args.out {
        Format::Json => {
            let mut doc = serde_json::json!({ "residual_definition": definition, "row": outcome.row });
            if args.trace {
                doc["trace"] = outcome.trace;
                doc["x"] = serde_json::json!(outcome.x.as_slice());
            }
            serde_json::to_writer_pretty(&mut out, &doc)?;
            writeln!(out)?;
        }
        Format::Csv => {
            writeln!(out, "# {definition}")?;
            write_rows_csv(std::slice::from_ref(&outcome.row), &mut out)?;
        }
    }
    Ok(outcome.row.converged())
}

fn bench(args: BenchArgs) -> Result<bool, BenchError> {
    let text = std::fs::read_to_string(&args.config)?;
    let mut config: BenchConfig = serde_json::from_str(&text)?;
    config.parallel |= args.parallel;
    let report = run_benchmark(&config)?;
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    match args.out {
        Format::Json => {
            report.write_json(&mut out)?;
            writeln!(out)?;
        }
        Format::Csv => {
            for d in &report.residual_definitions {
                writeln!(out, "# {d}")?;
            }
            report.write_csv(&mut out)?;
        }
    }
    Ok(report.all_converged())
}

fn check(args: CheckArgs) -> bool {
    let results = checks::run_all(args.samples, args.seed);
    for c in &results {
        println!(
            "{} {:<38} samples={:<5} worst={:.3e}",
            if c.passed { "PASS" } else { "FAIL" },
            c.name,
            c.samples,
            c.worst
        );
    }
    results.iter().all(|c| c.passed)
}
