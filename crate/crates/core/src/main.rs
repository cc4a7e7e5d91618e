use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use qsi::harness::{report, run_experiment, RunConfig, Strategy};
use qsi::QsiError;

/// Quantile set inversion by sequential Gaussian-process design.
#[derive(Parser)]
#[command(name = "qsi", version)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run the experiment described by a configuration file.
    Run {
        #[arg(long)]
        config: PathBuf,
    },
    /// Run a built-in problem with its published settings.
    Bench {
        #[arg(long)]
        problem: String,
        #[arg(long)]
        strategy: String,
        #[arg(long, default_value_t = 1)]
        reps: usize,
        #[arg(long, default_value_t = 30)]
        budget: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Output directory (defaults to `results/<problem>_<strategy>_<seed>`).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Smaller discretizations for a quick check.
        #[arg(long)]
        smoke: bool,
        /// Record wall-clock time per iteration.
        #[arg(long)]
        timing: bool,
    },
    /// Summarize the record files of a finished run.
    Report {
        #[arg(long = "in")]
        input: PathBuf,
        #[arg(long)]
        out: PathBuf,
    },
}

fn configure_threads() -> Result<(), QsiError> {
    if let Ok(v) = std::env::var("QSI_THREADS") {
        let n: usize = v
            .parse()
            .map_err(|_| QsiError::Config(format!("QSI_THREADS must be a positive integer, got `{v}`")))?;
        if n == 0 {
            return Err(QsiError::Config("QSI_THREADS must be positive".into()));
        }
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .map_err(|e| QsiError::Config(e.to_string()))?;
    }
    Ok(())
}

fn execute(cli: Cli) -> Result<(), QsiError> {
    configure_threads()?;
    let config = match cli.command {
        Command::Report { input, out } => {
            let rows = report(&input, &out)?;
            println!("wrote {rows} summary rows to {}", out.display());
            return Ok(());
        }
        Command::Run { config } => RunConfig::from_file(&config)?,
        Command::Bench {
            problem,
            strategy,
            reps,
            budget,
            seed,
            out,
            smoke,
            timing,
        } => {
            let strategy: Strategy = strategy.parse()?;
            let mut c = RunConfig::for_problem(&problem, strategy)?;
            if smoke {
                c = c.into_smoke();
            }
            c.repetitions = reps;
            c.budget = budget;
            c.seed = seed;
            c.timing = timing;
            c.output = out.unwrap_or_else(|| {
                PathBuf::from("results").join(format!("{problem}_{}_{seed}", strategy.to_string().replace(':', "-")))
            });
            c.validate()?;
            c
        }
    };
    let outcome = run_experiment(&config)?;
    println!(
        "{} records written to {}",
        outcome.records.len(),
        config.output.join("records.csv").display()
    );
    if !outcome.failures.is_empty() {
        return Err(QsiError::Evaluation(format!(
            "{} repetition(s) aborted: {:?}",
            outcome.failures.len(),
            outcome.failures
        )));
    }
    Ok(())
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match execute(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e @ QsiError::Config(_)) => {
            eprintln!("error: {e}");
            ExitCode::from(2)
        }
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(3)
        }
    }
}
