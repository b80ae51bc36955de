mod commands;
mod error;

use std::io::Write;
use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use tensorview::prune::Rational;

#[derive(Debug, Parser)]
#[command(
    name = "tensorview",
    version,
    about = "Factorize, verify, prune and account CNN kernels"
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum DecomposeScheme {
    Dp,
    Pd,
    Pdp,
    Shift,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum ReportScheme {
    Baseline,
    Dp,
    Pd,
    Pdp,
    Shift,
    Pruned,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum StrategyArg {
    Even,
    Uneven,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Factorize a [ci, co, k, k] kernel and write the factor directory.
    Decompose {
        #[arg(long, value_enum)]
        scheme: DecomposeScheme,
        /// CPD rank (pdp) or number of kept terms (shift).
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value_t = 1)]
        restarts: usize,
        #[arg(long, default_value_t = 1e-10)]
        tol: f64,
        #[arg(long = "max-iters", default_value_t = 500)]
        max_iters: usize,
    },
    /// Compare a factored pipeline with direct convolution on its kernel.
    Verify {
        #[arg(long)]
        factors: PathBuf,
        /// [channels, height, width] feature map.
        #[arg(long)]
        input: PathBuf,
        #[arg(long, default_value_t = 1)]
        stride: usize,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
    /// Prune the intermediate channels of a PW-shift-PW module.
    Prune {
        #[arg(long)]
        module: PathBuf,
        /// Pruning ratio as p/q.
        #[arg(long)]
        phi: Rational,
        #[arg(long, value_enum)]
        strategy: StrategyArg,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Parameter counts and compression rate of a model descriptor.
    Report {
        /// Descriptor file, or builtin:vgg16 / builtin:shiftresnet20.
        #[arg(long)]
        model: String,
        /// Defaults to pruned when --phi is given, baseline otherwise.
        #[arg(long, value_enum)]
        scheme: Option<ReportScheme>,
        #[arg(long)]
        rank: Option<usize>,
        #[arg(long)]
        phi: Option<Rational>,
    },
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { 1 } else { 0 });
        }
    };
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    let result = match cli.command {
        Command::Decompose {
            scheme,
            rank,
            input,
            out: dir,
            seed,
            restarts,
            tol,
            max_iters,
        } => commands::decompose(
            &mut out,
            commands::DecomposeArgs {
                scheme,
                rank,
                input,
                out: dir,
                als: tensorview::AlsOptions {
                    max_iters,
                    tol,
                    seed,
                    restarts,
                },
            },
        ),
        Command::Verify {
            factors,
            input,
            stride,
            tolerance,
        } => commands::verify(&mut out, &factors, &input, stride, tolerance),
        Command::Prune {
            module,
            phi,
            strategy,
            out: dir,
            report,
        } => commands::prune(&mut out, &module, phi, strategy, &dir, report.as_deref()),
        Command::Report {
            model,
            scheme,
            rank,
            phi,
        } => commands::report(&mut out, &model, scheme, rank, phi),
    };
    let _ = out.flush();
    match result {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
