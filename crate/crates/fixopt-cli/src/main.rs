use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use fixopt_cli::{
    gradcheck, parse_trace, render_report, run_experiment, trace_stats, ExperimentConfig,
    ExperimentKind, ExperimentMode,
};

#[derive(Parser)]
#[command(
    name = "fixopt",
    about = "Optimization of objectives at fixed points of contracting systems"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment and write its dataset, trace, and summary.
    Run {
        /// crn, nn, or scalar-certified
        experiment: ExperimentKind,
        /// Species (crn) or nodes (nn)
        #[arg(long)]
        n: Option<usize>,
        /// Instances in the parallel combination
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        /// Step size (empirical mode)
        #[arg(long)]
        eps: Option<f64>,
        /// Threshold gain (empirical mode)
        #[arg(long)]
        delta: Option<f64>,
        /// Outer iterations
        #[arg(long)]
        iters: Option<usize>,
        /// empirical or certified
        #[arg(long)]
        mode: Option<ExperimentMode>,
        /// Record a deep-solved objective every this many iterations
        #[arg(long)]
        stride: Option<usize>,
        /// Output directory (default runs/<experiment>)
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Summarize a trace CSV.
    Report { trace: PathBuf },
    /// Print the max relative error between the adjoint and finite-difference
    /// gradients on one seeded instance.
    Gradcheck {
        /// crn, nn, or scalar-certified
        experiment: ExperimentKind,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
    },
}

fn main() -> ExitCode {
    match dispatch(Cli::parse()) {
        Ok(code) => code,
        Err(err) => {
            eprintln!("error: {err}");
            ExitCode::from(2)
        }
    }
}

fn dispatch(cli: Cli) -> Result<ExitCode, fixopt_cli::CliError> {
    match cli.command {
        Command::Run {
            experiment,
            n,
            m,
            seed,
            eps,
            delta,
            iters,
            mode,
            stride,
            out,
        } => {
            let mut config = ExperimentConfig::defaults(experiment);
            if let Some(n) = n {
                config.size = n;
            }
            if let Some(m) = m {
                config.instances = m;
            }
            if let Some(seed) = seed {
                config.seed = seed;
            }
            if let Some(eps) = eps {
                config.epsilon = eps;
            }
            if let Some(delta) = delta {
                config.delta = delta;
            }
            if let Some(iters) = iters {
                config.iterations = iters;
            }
            if let Some(mode) = mode {
                config.mode = mode;
            }
            if let Some(stride) = stride {
                config.objective_stride = stride;
            }
            if let Some(out) = out {
                config.out_dir = out;
            }
            let summary = run_experiment(&config)?;
            println!(
                "{}: {} rows, objective {} -> {}, trace {}",
                summary.kind,
                summary.rows,
                summary.initial_objective,
                summary.final_objective,
                summary.trace_path.display()
            );
            if summary.completed() {
                Ok(ExitCode::SUCCESS)
            } else {
                eprintln!("run stopped early: {:?}", summary.stop);
                Ok(ExitCode::from(1))
            }
        }
        Command::Report { trace } => {
            let rows = parse_trace(&trace)?;
            print!("{}", render_report(&trace_stats(&rows)));
            Ok(ExitCode::SUCCESS)
        }
        Command::Gradcheck {
            experiment,
            n,
            m,
            seed,
        } => {
            let (default_n, default_m) = match experiment {
                ExperimentKind::Crn => (5, 3),
                ExperimentKind::Nn => (8, 3),
                ExperimentKind::ScalarCertified => (1, 1),
            };
            let error = gradcheck(
                experiment,
                n.unwrap_or(default_n),
                m.unwrap_or(default_m),
                seed.unwrap_or(1),
            )?;
            println!("max relative gradient error: {error:e}");
            Ok(ExitCode::SUCCESS)
        }
    }
}
