//! `cepstra-cca`: periodograms, cepstral fits, cepstral CCA and the
//! replicate error study from the command line.
//!
//! Every run writes `manifest.json` next to its outputs; `replay` re-runs a
//! manifest and reproduces the outputs exactly.

use std::fmt;
use std::path::PathBuf;
use std::process::ExitCode;

use anyhow::{Context, Result};
use cepstra_cca::cca::{CcaError, CcaOptions};
use cepstra_cca::cepstral::{CepstralError, FitOptions};
use cepstra_cca::dataset::DatasetError;
use cepstra_cca::simulate::{SimulationDesign, SimulationError};
use cepstra_cca::spectral::SpectralError;
use clap::{Args, Parser, Subcommand};

mod config;
mod run;

use config::{Band, Command, Manifest, RunConfig, SimulationSettings};

pub const THREADS_ENV: &str = "CEPSTRA_CCA_THREADS";

/// Bad arguments or inputs (exit code 2).
#[derive(Debug)]
pub struct InputError(pub String);

impl fmt::Display for InputError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl std::error::Error for InputError {}

/// A published setting was not reproduced within tolerance (exit code 4).
#[derive(Debug)]
pub struct ReproductionError(pub String);

impl fmt::Display for ReproductionError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "outside the published tolerance: {}", self.0)
    }
}

impl std::error::Error for ReproductionError {}

#[derive(Parser)]
#[command(name = "cepstra-cca", version, about = "Cepstral canonical correlation analysis")]
struct Cli {
    /// Worker threads (default: all cores). CEPSTRA_CCA_THREADS takes precedence.
    #[arg(long, global = true)]
    threads: Option<usize>,

    #[command(subcommand)]
    command: Cmd,
}

#[derive(Subcommand)]
enum Cmd {
    /// Periodograms, bias-adjusted log-periodograms and fitted log-spectra.
    Spectra {
        #[arg(long)]
        series: PathBuf,
        #[command(flatten)]
        order: OrderArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Per-subject cepstral coefficients and fit diagnostics.
    Fit {
        #[arg(long)]
        series: PathBuf,
        #[command(flatten)]
        order: OrderArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Canonical correlations between log-spectra and outcomes.
    Cca {
        #[arg(long)]
        series: PathBuf,
        #[arg(long)]
        outcomes: PathBuf,
        /// Scale outcomes to unit variance first.
        #[arg(long)]
        standardize: bool,
        #[command(flatten)]
        order: OrderArgs,
        #[command(flatten)]
        grid: GridArgs,
        #[command(flatten)]
        fit: FitArgs,
        /// Relative eigenvalue cutoff for the cepstral covariance pseudo-inverse.
        #[arg(long, default_value_t = CcaOptions::default().rank_tolerance)]
        rank_tol: f64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Replicate error study on the random-spectrum design.
    Simulate {
        #[arg(long, default_value_t = SimulationDesign::default().n_subjects)]
        n: usize,
        #[arg(long, default_value_t = SimulationDesign::default().series_len)]
        t: usize,
        #[arg(long, default_value_t = SimulationDesign::default().replicates)]
        replicates: usize,
        #[arg(long, default_value_t = SimulationDesign::default().seed)]
        seed: u64,
        /// Synthesis grid length as a multiple of T.
        #[arg(long, default_value_t = SimulationDesign::default().oversampling)]
        oversampling: usize,
        /// Remove all cepstrum-outcome correlation.
        #[arg(long)]
        null: bool,
        /// Also write per-replicate squared errors.
        #[arg(long)]
        dump_replicates: bool,
        /// Exit with code 4 unless every metric matches its published value.
        #[arg(long)]
        check: bool,
        #[command(flatten)]
        order: OrderArgs,
        #[command(flatten)]
        fit: FitArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-run the configuration recorded in a manifest.
    Replay {
        #[arg(long)]
        manifest: PathBuf,
        /// Write outputs here instead of the recorded directory.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

#[derive(Args)]
struct OrderArgs {
    /// Fixed truncation order.
    #[arg(long, conflicts_with = "k_range")]
    k: Option<usize>,
    /// Select the order by AIC over `a:b`.
    #[arg(long, value_parser = parse_range)]
    k_range: Option<(usize, usize)>,
}

#[derive(Args)]
struct GridArgs {
    /// Points on the evaluation grid (at least 16).
    #[arg(long, default_value_t = 512)]
    grid: usize,
    /// Grid over `[0, 0.5]` or the mirrored band `[0, 1]`.
    #[arg(long, value_enum, default_value_t = Band::Half)]
    band: Band,
    /// Samples per second; adds Hz columns next to cycles per sample.
    #[arg(long)]
    sampling_rate: Option<f64>,
}

impl Default for GridArgs {
    fn default() -> Self {
        Self {
            grid: 512,
            band: Band::Half,
            sampling_rate: None,
        }
    }
}

#[derive(Args)]
struct FitArgs {
    #[arg(long, default_value_t = FitOptions::default().max_iterations)]
    max_iter: usize,
    /// Score norm tolerance per retained frequency.
    #[arg(long, default_value_t = FitOptions::default().score_tolerance)]
    score_tol: f64,
    /// Relative decrease of the negative log-likelihood treated as converged.
    #[arg(long, default_value_t = FitOptions::default().nll_tolerance)]
    nll_tol: f64,
}

impl From<FitArgs> for FitOptions {
    fn from(a: FitArgs) -> Self {
        FitOptions {
            max_iterations: a.max_iter,
            score_tolerance: a.score_tol,
            nll_tolerance: a.nll_tol,
        }
    }
}

fn parse_range(s: &str) -> Result<(usize, usize), String> {
    let (a, b) = s
        .split_once(':')
        .ok_or_else(|| format!("expected a:b, got {s:?}"))?;
    let lo = a.trim().parse().map_err(|e| format!("{a:?}: {e}"))?;
    let hi = b.trim().parse().map_err(|e| format!("{b:?}: {e}"))?;
    if lo == 0 || lo > hi {
        return Err(format!("need 1 <= a <= b, got {lo}:{hi}"));
    }
    Ok((lo, hi))
}

fn base_config(command: Command, out: PathBuf, order: OrderArgs, fit: FitArgs) -> RunConfig {
    RunConfig {
        command,
        series: None,
        outcomes: None,
        out,
        k: order.k,
        k_range: order.k_range,
        fit: fit.into(),
        cca: CcaOptions::default(),
        standardize: false,
        sampling_rate: None,
        seed: None,
        grid: GridArgs::default().grid,
        band: Band::Half,
        simulation: None,
    }
}

fn with_grid(mut config: RunConfig, grid: GridArgs) -> RunConfig {
    config.grid = grid.grid;
    config.band = grid.band;
    config.sampling_rate = grid.sampling_rate;
    config
}

fn into_config(cmd: Cmd) -> Result<RunConfig> {
    Ok(match cmd {
        Cmd::Spectra {
            series,
            order,
            grid,
            fit,
            out,
        } => RunConfig {
            series: Some(series),
            ..with_grid(base_config(Command::Spectra, out, order, fit), grid)
        },
        Cmd::Fit {
            series,
            order,
            fit,
            out,
        } => RunConfig {
            series: Some(series),
            ..base_config(Command::Fit, out, order, fit)
        },
        Cmd::Cca {
            series,
            outcomes,
            standardize,
            order,
            grid,
            fit,
            rank_tol,
            out,
        } => RunConfig {
            series: Some(series),
            outcomes: Some(outcomes),
            standardize,
            cca: CcaOptions {
                rank_tolerance: rank_tol,
            },
            ..with_grid(base_config(Command::Cca, out, order, fit), grid)
        },
        Cmd::Simulate {
            n,
            t,
            replicates,
            seed,
            oversampling,
            null,
            dump_replicates,
            check,
            order,
            fit,
            out,
        } => RunConfig {
            seed: Some(seed),
            simulation: Some(SimulationSettings {
                n_subjects: n,
                series_len: t,
                replicates,
                oversampling,
                null,
                dump_replicates,
                check,
            }),
            ..base_config(Command::Simulate, out, order, fit)
        },
        Cmd::Replay { manifest, out } => {
            let text = std::fs::read_to_string(&manifest).map_err(|e| {
                InputError(format!("cannot read manifest {}: {e}", manifest.display()))
            })?;
            let manifest: Manifest = serde_json::from_str(&text)
                .map_err(|e| InputError(format!("invalid manifest {}: {e}", manifest.display())))?;
            let mut config = manifest.config;
            if let Some(out) = out {
                config.out = out;
            }
            config
        }
    })
}

fn thread_count(flag: Option<usize>) -> Result<Option<usize>> {
    match std::env::var(THREADS_ENV) {
        Ok(v) => {
            let n: usize = v
                .trim()
                .parse()
                .map_err(|_| InputError(format!("{THREADS_ENV}={v:?} is not a thread count")))?;
            Ok(Some(n))
        }
        Err(_) => Ok(flag),
    }
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<InputError>() || cause.is::<DatasetError>() || cause.is::<SpectralError>() {
            return 2;
        }
        if cause.is::<ReproductionError>() {
            return 4;
        }
        if let Some(e) = cause.downcast_ref::<SimulationError>() {
            return match e {
                SimulationError::InvalidDesign(_) => 2,
                SimulationError::TooManyFailures { .. } => 4,
                SimulationError::Csv(_) => 1,
            };
        }
        if let Some(e) = cause.downcast_ref::<CepstralError>() {
            return match e {
                CepstralError::Spectral(_) => 2,
                _ => 3,
            };
        }
        if cause.is::<CcaError>() {
            return 3;
        }
    }
    1
}

fn real_main() -> Result<()> {
    let cli = Cli::parse();
    if let Some(n) = thread_count(cli.threads)? {
        rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build_global()
            .context("cannot configure the thread pool")?;
    }
    let config = into_config(cli.command)?;
    let outputs = run::execute(&config)?;
    eprintln!(
        "wrote {} files to {}",
        outputs.len(),
        config.out.display()
    );
    Ok(())
}

fn main() -> ExitCode {
    match real_main() {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
