//! `rrm`: prepare contaminated datasets, train baseline and re-weighted
//! classifiers, run the verification suites and tabulate results.

mod config;
mod error;
mod inject;
mod output;
mod report;
mod train;
mod verify;

use std::path::PathBuf;
use std::process::ExitCode;

use clap::{Parser, Subcommand};
use rrm_core::trainer::Mode;
use rrm_core::verify::SuiteSizes;

use config::{resolve_output, ExperimentConfig};
use error::{CliError, CliResult};

#[derive(Parser)]
#[command(name = "rrm", version = output::VERSION, about = "Loss re-weighting experiments under label contamination")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Load the source data, inject label noise and write the dataset cache.
    Inject {
        #[arg(short, long)]
        config: PathBuf,
        /// Contamination seed, overriding `contamination.seed`.
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Train one model per seed on the cached dataset.
    Train {
        #[arg(short, long)]
        config: PathBuf,
        /// Train this single seed instead of `train.seeds`.
        #[arg(long)]
        seed: Option<u64>,
        /// Overrides `train.mode` (erm, rrm or arrm).
        #[arg(long)]
        mode: Option<Mode>,
        /// Comma-separated FGSM radii for the post-training test-set attack,
        /// overriding `evaluation.epsilon_test`.
        #[arg(long, value_delimiter = ',')]
        epsilon_test: Option<Vec<f64>>,
    },
    /// Run the randomized oracle, KKT, relaxation, gradient and FGSM suites.
    Verify {
        #[arg(long, default_value_t = verify::DEFAULT_SEED)]
        seed: u64,
        /// Write the full JSON report here.
        #[arg(long)]
        report: Option<PathBuf>,
    },
    /// Tabulate finished runs and export weight-evolution counts.
    Report {
        /// Mode directories (with aggregate.json) or seed directories.
        #[arg(required = true)]
        runs: Vec<PathBuf>,
        /// Output directory for the CSV exports.
        #[arg(long, default_value = "report")]
        out: PathBuf,
    },
}

fn load_config(path: &PathBuf, apply: impl FnOnce(&mut ExperimentConfig)) -> CliResult<ExperimentConfig> {
    let mut cfg = ExperimentConfig::load(path)?;
    apply(&mut cfg);
    cfg.validate()?;
    Ok(cfg)
}

fn run(cli: Cli) -> CliResult<()> {
    match cli.command {
        Command::Inject { config, seed } => {
            let cfg = load_config(&config, |c| {
                if let Some(s) = seed {
                    c.contamination.seed = s;
                }
            })?;
            let r = inject::cmd_inject(&cfg)?;
            println!(
                "contaminated {} of {} samples (rate {}, seed {})",
                r.contaminated, r.samples, cfg.contamination.rate, cfg.contamination.seed
            );
            println!("wrote {}", r.train_path.display());
            if let Some(p) = r.test_path {
                println!("wrote {}", p.display());
            }
            Ok(())
        }
        Command::Train {
            config,
            seed,
            mode,
            epsilon_test,
        } => {
            let cfg = load_config(&config, |c| {
                if let Some(s) = seed {
                    c.train.seeds = vec![s];
                }
                if let Some(m) = mode {
                    c.train.mode = m;
                }
                if let Some(e) = epsilon_test {
                    c.evaluation.epsilon_test = e;
                }
            })?;
            let report = train::cmd_train(&cfg)?;
            for o in &report.outcomes {
                match &o.result {
                    Ok(s) => println!(
                        "seed {}: test {:.2}% at peak validation (iteration {}), max {:.2}%, in {}",
                        o.seed,
                        100.0 * s.result.test_at_peak_validation,
                        s.result.peak_iteration,
                        100.0 * s.result.max_test,
                        o.dir.display()
                    ),
                    Err(e) => eprintln!("seed {}: failed: {e}", o.seed),
                }
            }
            if let Some(t) = report.aggregate.test_at_peak_validation {
                println!(
                    "{} over {} seed(s): {:.2} ± {:.2}%",
                    report.aggregate.mode,
                    report.aggregate.seeds.len(),
                    100.0 * t.mean,
                    100.0 * t.std
                );
            }
            for a in &report.aggregate.attack {
                println!(
                    "  eps_test {:.2}: {:.2} ± {:.2}%",
                    a.epsilon,
                    100.0 * a.accuracy.mean,
                    100.0 * a.accuracy.std
                );
            }
            println!("wrote {}", report.aggregate_path.display());
            match report.first_error() {
                Some(e) => Err(CliError::SeedsFailed {
                    code: e.exit_code(),
                    message: e.to_string(),
                }),
                None => Ok(()),
            }
        }
        Command::Verify { seed, report } => {
            verify::cmd_verify(seed, SuiteSizes::default(), report.as_deref())?;
            println!("all suites passed (seed {seed})");
            Ok(())
        }
        Command::Report { runs, out } => {
            let out = resolve_output(&out);
            let r = report::cmd_report(&runs, &out)?;
            print!("{}", r.text);
            for f in r.files {
                println!("wrote {}", f.display());
            }
            Ok(())
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(e.exit_code())
        }
    }
}
