use blocktri::harness::{emit, run, ConfigError, ExperimentConfig, ExperimentKind, Format, Overrides};
use clap::Parser;
use std::path::PathBuf;
use std::process::ExitCode;

/// Runs random block tridiagonal experiments and writes CSV/JSON results.
#[derive(Debug, Parser)]
#[command(name = "blocktri", version)]
struct Cli {
    /// TOML config; flags override its fields.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long, value_enum)]
    experiment: Option<ExperimentKind>,
    /// Number of blocks.
    #[arg(long)]
    n: Option<usize>,
    /// Block size.
    #[arg(long)]
    ell: Option<usize>,
    #[arg(long, allow_hyphen_values = true)]
    z_re: Option<f64>,
    #[arg(long, allow_hyphen_values = true)]
    z_im: Option<f64>,
    /// real-gaussian, complex-gaussian, real-uniform or smoothed-rademacher[:C].
    #[arg(long)]
    law: Option<String>,
    #[arg(long)]
    trials: Option<u64>,
    #[arg(long)]
    seed: Option<u64>,
    /// Output prefix; results go to stdout as JSON when absent.
    #[arg(long)]
    out: Option<PathBuf>,
    #[arg(long)]
    tol: Option<f64>,
    #[arg(long)]
    max_dense: Option<usize>,
    #[arg(long)]
    workers: Option<usize>,
    #[arg(long, value_enum, default_value = "both")]
    format: Format,
}

const EXIT_IO: u8 = 1;
const EXIT_CONFIG: u8 = 2;
const EXIT_PARTIAL: u8 = 3;

fn resolve(cli: Cli) -> Result<(ExperimentConfig, Format), ConfigError> {
    let base = cli.config.as_deref().map(ExperimentConfig::load).transpose()?;
    let overrides = Overrides {
        experiment: cli.experiment,
        n: cli.n,
        ell: cli.ell,
        z_re: cli.z_re,
        z_im: cli.z_im,
        law: cli.law,
        trials: cli.trials,
        seed: cli.seed,
        out: cli.out,
        tol: cli.tol,
        max_dense: cli.max_dense,
        workers: cli.workers,
    };
    Ok((overrides.resolve(base)?, cli.format))
}

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return if e.use_stderr() { ExitCode::from(EXIT_CONFIG) } else { ExitCode::SUCCESS };
        }
    };
    let (cfg, format) = match resolve(cli) {
        Ok(v) => v,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let record = match run(&cfg) {
        Ok(r) => r,
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_CONFIG);
        }
    };
    let written = match &cfg.out {
        Some(prefix) => emit(&record, prefix, format),
        None => blocktri::harness::output::write_json(&record, std::io::stdout()).map(|_| Vec::new()),
    };
    match written {
        Ok(paths) => {
            for p in paths {
                eprintln!("wrote {}", p.display());
            }
        }
        Err(e) => {
            eprintln!("error: {e}");
            return ExitCode::from(EXIT_IO);
        }
    }
    for (k, v) in &record.summary {
        eprintln!("{k} = {v}");
    }
    if record.failed_trials > 0 {
        eprintln!("{} of {} trials failed", record.failed_trials, record.trials.len());
        return ExitCode::from(EXIT_PARTIAL);
    }
    ExitCode::SUCCESS
}
