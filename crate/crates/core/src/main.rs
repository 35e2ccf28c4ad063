use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use nalgebra::DVector;

use sparse_mpc::cli::{cmd_discretize, cmd_simulate, cmd_solve, cmd_sweep, EXIT_CONFIG};
use sparse_mpc::condense::NormP;
use sparse_mpc::config::{load_config_with, Overrides};

#[derive(Parser)]
#[command(name = "sparse-mpc", version, about = "Sparse MPC under emulated fixed-point arithmetic")]
struct Args {
    #[command(subcommand)]
    command: Command,

    /// Run configuration (TOML).
    #[arg(long, global = true)]
    config: Option<PathBuf>,
    /// Output CSV path.
    #[arg(long, global = true)]
    out: Option<PathBuf>,
    #[arg(long, global = true)]
    word_width: Option<u32>,
    #[arg(long, global = true)]
    frac_width: Option<u32>,
    #[arg(long, global = true)]
    sigma: Option<f64>,
    #[arg(long, global = true, value_enum)]
    norm: Option<Norm>,
    #[arg(long, global = true)]
    steps: Option<usize>,
    /// Worker threads for `sweep`.
    #[arg(long, global = true)]
    jobs: Option<usize>,
}

#[derive(Subcommand)]
enum Command {
    /// Run one closed loop and write its trace.
    Simulate,
    /// Run the configured (word width, fraction width, sigma) grid and write a summary.
    Sweep,
    /// Solve a single MPC instance.
    Solve {
        /// Comma-separated state; defaults to the configured initial state.
        #[arg(long, value_delimiter = ',', allow_hyphen_values = true)]
        state: Option<Vec<f64>>,
    },
    /// Print the discretized plant matrices.
    Discretize,
}

#[derive(Clone, Copy, ValueEnum)]
enum Norm {
    L0,
    L1,
}

fn main() -> ExitCode {
    let args = Args::parse();
    let Some(path) = &args.config else {
        eprintln!("error: --config PATH is required");
        return ExitCode::from(EXIT_CONFIG as u8);
    };
    let overrides = Overrides {
        out: args.out.clone(),
        word_width: args.word_width,
        frac_width: args.frac_width,
        sigma: args.sigma,
        norm: args.norm.map(|n| match n {
            Norm::L0 => NormP::L0,
            Norm::L1 => NormP::L1,
        }),
        steps: args.steps,
        jobs: args.jobs,
    };
    let cfg = match load_config_with(path, &overrides) {
        Ok(c) => c,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG as u8);
        }
    };
    let level = match cfg.verbosity {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();

    let mut stdout = std::io::stdout().lock();
    let result = match &args.command {
        Command::Simulate => cmd_simulate(&cfg, &mut stdout),
        Command::Sweep => cmd_sweep(&cfg, &mut stdout),
        Command::Solve { state } => {
            let x = state.as_ref().map(|s| DVector::from_column_slice(s));
            cmd_solve(&cfg, x.as_ref(), &mut stdout)
        }
        Command::Discretize => cmd_discretize(&cfg, &mut stdout),
    };
    match result {
        Ok(code) => ExitCode::from(code as u8),
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code() as u8)
        }
    }
}
