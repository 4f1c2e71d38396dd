use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand, ValueEnum};
use radonseis::io::ExperimentConfig;
use radonseis::FilterMethod;
use radonseis_cli::commands::{cmd_filter, cmd_forward, cmd_invert, cmd_roundtrip, RunContext};
use radonseis_cli::selftest::run_selftest;
use radonseis_cli::VERSION;

const EXIT_NUMERICAL: u8 = 1;
const EXIT_CONFIG: u8 = 2;

#[derive(Parser, Debug)]
#[command(name = "radonseis", version = VERSION, about = "Seismic-type Radon transforms: forward, filter, invert")]
struct Cli {
    #[command(subcommand)]
    command: Command,

    /// Experiment configuration (JSON). Required by every command except selftest.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Output directory.
    #[arg(long, global = true, default_value = "out")]
    out: PathBuf,

    /// Worker threads (default: all hardware threads).
    #[arg(long, global = true)]
    threads: Option<usize>,

    /// Seed for randomized samples.
    #[arg(long, global = true, default_value_t = 42)]
    seed: u64,
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    FiniteDifference,
    ExactDy,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Sample the transform of the configured phantom on the sinogram grid.
    Forward,
    /// Apply d^n/du^n to a sinogram file.
    Filter {
        /// Raw sinogram (default: the configured sinogram file in --out).
        #[arg(long)]
        input: Option<PathBuf>,
        /// Override the configured filter method.
        #[arg(long, value_enum)]
        method: Option<Method>,
    },
    /// Reconstruct from a sinogram file and report errors against the phantom.
    Invert {
        /// Sinogram to invert (default: the filtered file in --out if present,
        /// else the raw one, which is then filtered first).
        #[arg(long)]
        input: Option<PathBuf>,
    },
    /// Forward, filter and invert in one go.
    Roundtrip,
    /// Run the built-in analytic and property checks.
    Selftest,
}

fn load_config(path: Option<&PathBuf>) -> Result<ExperimentConfig, ExitCode> {
    let Some(path) = path else {
        eprintln!("error: --config <path> is required for this command");
        return Err(ExitCode::from(EXIT_CONFIG));
    };
    ExperimentConfig::from_path(path).map_err(|e| {
        eprintln!("error: {}: {e}", path.display());
        ExitCode::from(EXIT_CONFIG)
    })
}

fn run(cli: Cli) -> Result<(), ExitCode> {
    if let Some(k) = cli.threads {
        rayon::ThreadPoolBuilder::new()
            .num_threads(k)
            .build_global()
            .map_err(|e| {
                eprintln!("error: thread pool: {e}");
                ExitCode::from(EXIT_CONFIG)
            })?;
    }
    if let Command::Selftest = cli.command {
        let checks = run_selftest(cli.seed);
        let mut failed = 0;
        for c in &checks {
            println!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
            failed += usize::from(!c.passed);
        }
        println!("selftest: {}/{} passed (seed {})", checks.len() - failed, checks.len(), cli.seed);
        return if failed == 0 { Ok(()) } else { Err(ExitCode::from(EXIT_NUMERICAL)) };
    }
    let cfg = load_config(cli.config.as_ref())?;
    let ctx = RunContext {
        out_dir: cli.out,
        version: VERSION.to_string(),
        seed: cli.seed,
    };
    let result = match cli.command {
        Command::Forward => cmd_forward(&cfg, &ctx),
        Command::Filter { input, method } => {
            let method = method.map(|m| match m {
                Method::FiniteDifference => FilterMethod::FiniteDifference,
                Method::ExactDy => FilterMethod::ExactDy,
            });
            cmd_filter(&cfg, &ctx, input.as_deref(), method)
        }
        Command::Invert { input } => cmd_invert(&cfg, &ctx, input.as_deref()),
        Command::Roundtrip => cmd_roundtrip(&cfg, &ctx).map(|(w, _)| w),
        Command::Selftest => unreachable!("handled above"),
    };
    match result {
        Ok(written) => {
            for p in written.paths {
                println!("{}", p.display());
            }
            Ok(())
        }
        Err(e) => {
            eprintln!("error: {e}");
            Err(ExitCode::from(if e.is_config() { EXIT_CONFIG } else { EXIT_NUMERICAL }))
        }
    }
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(code) => code,
    }
}
