use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use dgieti_cli::output::write_outputs;
use dgieti_cli::{run, CliError, Command, Overrides, RunConfig};

#[derive(Parser)]
#[command(
    name = "dgieti",
    version,
    about = "Multipatch dG IgA solver with a dual-primal tearing-and-interconnecting method"
)]
struct Cli {
    #[command(subcommand)]
    command: Sub,
}

#[derive(Subcommand)]
enum Sub {
    /// Solve once and report iterations, condition estimate and errors.
    Solve(Common),
    /// Condition numbers over refinement levels.
    KappaStudy(Common),
    /// Condition numbers for growing neighbor mesh ratios on a two-patch domain.
    RatioStudy(Common),
    /// Errors and observed orders over refinement levels.
    Convergence(Common),
}

#[derive(Args)]
struct Common {
    /// JSON run configuration.
    #[arg(long)]
    config: PathBuf,
    /// Output directory for results.csv and report.json.
    #[arg(long)]
    out: PathBuf,
    /// Also compute the dense spectrum of the preconditioned operator.
    #[arg(long)]
    oracle: bool,
    /// Penalty parameter.
    #[arg(long, allow_negative_numbers = true)]
    delta: Option<f64>,
    /// Relative PCG tolerance.
    #[arg(long, allow_negative_numbers = true)]
    tol: Option<f64>,
}

fn execute(command: Command, args: &Common) -> Result<Option<String>, CliError> {
    let mut cfg = RunConfig::from_file(&args.config)?;
    Overrides { delta: args.delta, tol: args.tol, oracle: args.oracle }.apply(&mut cfg)?;
    let out = run(command, &cfg)?;
    write_outputs(&args.out, &out.table, &out.report)?;
    print!("{}", out.table.to_csv()?);
    Ok(out.failure)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let (command, args) = match &cli.command {
        Sub::Solve(a) => (Command::Solve, a),
        Sub::KappaStudy(a) => (Command::KappaStudy, a),
        Sub::RatioStudy(a) => (Command::RatioStudy, a),
        Sub::Convergence(a) => (Command::Convergence, a),
    };
    match execute(command, args) {
        Ok(None) => ExitCode::SUCCESS,
        Ok(Some(failure)) => {
            eprintln!("error: {failure}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
