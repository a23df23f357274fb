use std::path::PathBuf;
use std::process::ExitCode;
use std::time::Instant;

use clap::{Parser, Subcommand};
use optiloop_cli::{run, run_paper_suite, Artifacts, CliError, Command, ExperimentConfig};

#[derive(Parser)]
#[command(
    name = "optiloop",
    version,
    about = "Recursive photonic loop simulator"
)]
struct Cli {
    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Invert a matrix on the loop (tiled when larger than 4x4).
    Invert(Args),
    /// A ± B with A held in the weight bank.
    Add(Args),
    /// A·B with A held in the weight bank.
    Multiply(Args),
    /// Fredholm integral equation of the second kind.
    SolveIe(Args),
    /// Linear 2nd-order boundary-value problem.
    SolveOde(Args),
    /// Poisson equation on the unit square.
    SolvePde(Args),
    /// Parameter sweep over values and seeds.
    Sweep(Args),
    /// Built-in experiment suite.
    PaperSuite(SuiteArgs),
}

#[derive(clap::Args)]
struct Common {
    /// Override the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory [default: config `output`, else `out`].
    #[arg(long, env = "OPTILOOP_OUT_DIR")]
    out: Option<PathBuf>,
    /// Zero noise, exact weights, unity gain.
    #[arg(long)]
    ideal: bool,
}

#[derive(clap::Args)]
struct Args {
    /// Experiment config (JSON).
    #[arg(long)]
    config: PathBuf,
    /// Add oracle columns to the solution CSV.
    #[arg(long)]
    diagnostics: bool,
    #[command(flatten)]
    common: Common,
}

#[derive(clap::Args)]
struct SuiteArgs {
    #[command(flatten)]
    common: Common,
}

fn execute(cli: Cli) -> Result<(Artifacts, PathBuf), CliError> {
    let (command, args) = match cli.command {
        Cmd::PaperSuite(s) => {
            let art = run_paper_suite(s.common.seed.unwrap_or(0), s.common.ideal)?;
            return Ok((art, s.common.out.unwrap_or_else(|| "out".into())));
        }
        Cmd::Invert(a) => (Command::Invert, a),
        Cmd::Add(a) => (Command::Add, a),
        Cmd::Multiply(a) => (Command::Multiply, a),
        Cmd::SolveIe(a) => (Command::SolveIe, a),
        Cmd::SolveOde(a) => (Command::SolveOde, a),
        Cmd::SolvePde(a) => (Command::SolvePde, a),
        Cmd::Sweep(a) => (Command::Sweep, a),
    };
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if args.common.seed.is_some() {
        cfg.seed = args.common.seed;
    }
    if args.common.ideal {
        cfg.force_ideal();
    }
    cfg.diagnostics |= args.diagnostics;
    let out = args
        .common
        .out
        .or_else(|| cfg.output.clone())
        .unwrap_or_else(|| "out".into());
    Ok((run(&cfg, command)?, out))
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let start = Instant::now();
    let result = execute(cli).and_then(|(mut art, dir)| {
        art.line(format!(
            "wall_clock_s: {:.3}",
            start.elapsed().as_secs_f64()
        ));
        let written = art.write(&dir)?;
        Ok((art, written))
    });
    match result {
        Ok((art, written)) => {
            for line in &art.summary {
                println!("{line}");
            }
            for path in written {
                println!("wrote {}", path.display());
            }
            ExitCode::SUCCESS
        }
        Err(e) => {
            let report = serde_json::json!({ "category": e.category(), "message": e.to_string() });
            eprintln!("{report}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
