use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};

use cotune::harness::{
    compare_strategies, figure_configs, gradcheck_suite, load_config, resolve_out_dir, run_experiment, run_sweep,
    HarnessError, RunOptions,
};

#[derive(Parser)]
#[command(name = "cotune", version, about = "Co-tune simulator and controller parameters across domains")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Run an experiment config.
    Run {
        config: PathBuf,
        /// Output directory (COTUNE_OUT takes precedence).
        #[arg(long)]
        out: Option<PathBuf>,
        /// Run this single seed instead of the configured list.
        #[arg(long)]
        seed_override: Option<u64>,
        #[arg(long)]
        quiet: bool,
    },
    /// Summarize results.csv in a directory.
    Compare { dir: PathBuf },
    /// Finite-difference checks of autodiff and model gradients.
    Gradcheck {
        #[arg(long, default_value_t = 20)]
        seeds: u64,
    },
    /// Run the shipped configs for a figure: fig5a, fig5b, fig5d or fig8.
    Reproduce {
        figure: String,
        #[arg(long)]
        out: Option<PathBuf>,
        #[arg(long)]
        quiet: bool,
    },
}

fn run(cli: Cli) -> Result<(), HarnessError> {
    match cli.command {
        Command::Run { config, out, seed_override, quiet } => {
            let mut cfg = load_config(&config)?;
            if let Some(seed) = seed_override {
                cfg.run.seeds = vec![seed];
            }
            let dir = resolve_out_dir(&cfg, out.as_deref());
            let outcome = run_experiment(&cfg, &dir, RunOptions { quiet })?;
            let summary = compare_strategies(&outcome.out_dir)?;
            if !quiet {
                print!("{}", summary.to_table());
            }
            println!("wrote {}", outcome.out_dir.display());
        }
        Command::Compare { dir } => print!("{}", compare_strategies(&dir)?.to_table()),
        Command::Gradcheck { seeds } => {
            let report = gradcheck_suite(seeds);
            print!("{report}");
            if !report.passed() {
                return Err(HarnessError::Validation(vec!["gradient check failed".into()]));
            }
        }
        Command::Reproduce { figure, out, quiet } => {
            let configs = figure_configs(&figure)?;
            let dir = std::env::var_os(cotune::harness::OUT_ENV)
                .filter(|v| !v.is_empty())
                .map(PathBuf::from)
                .or(out)
                .unwrap_or_else(|| PathBuf::from("results").join(&figure));
            let summaries = run_sweep(&configs, &dir, RunOptions { quiet })?;
            for s in &summaries {
                print!("{}\n", s.to_table());
            }
            println!("wrote {}", dir.display());
        }
    }
    Ok(())
}

fn main() -> ExitCode {
    match run(Cli::parse()) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            if e.is_validation() {
                ExitCode::from(1)
            } else {
                ExitCode::from(2)
            }
        }
    }
}
