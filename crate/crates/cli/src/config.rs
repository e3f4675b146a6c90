use std::path::PathBuf;

use cepstra_cca::cca::CcaOptions;
use cepstra_cca::cepstral::FitOptions;
use serde::{Deserialize, Serialize};

use crate::InputError;

pub const MIN_GRID: usize = 16;
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Command {
    Spectra,
    Fit,
    Cca,
    Simulate,
}

/// Frequency range covered by evaluation grids.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum Band {
    /// `[0, 0.5]`
    Half,
    /// `[0, 1]`, the mirrored band.
    Full,
}

impl Band {
    pub fn grid(self, points: usize) -> Vec<f64> {
        let upper = match self {
            Band::Half => 0.5,
            Band::Full => 1.0,
        };
        (0..points)
            .map(|i| upper * i as f64 / (points - 1) as f64)
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationSettings {
    pub n_subjects: usize,
    pub series_len: usize,
    pub replicates: usize,
    pub oversampling: usize,
    /// Drop every cross-correlation between cepstra and outcomes.
    pub null: bool,
    pub dump_replicates: bool,
    /// Fail with exit code 4 when a published setting is not reproduced.
    pub check: bool,
}

/// Every effective option of a run. Written next to the outputs so the run
/// can be replayed exactly.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunConfig {
    pub command: Command,
    pub series: Option<PathBuf>,
    pub outcomes: Option<PathBuf>,
    pub out: PathBuf,
    pub k: Option<usize>,
    pub k_range: Option<(usize, usize)>,
    pub fit: FitOptions,
    pub cca: CcaOptions,
    pub standardize: bool,
    pub sampling_rate: Option<f64>,
    pub seed: Option<u64>,
    pub grid: usize,
    pub band: Band,
    pub simulation: Option<SimulationSettings>,
}

impl RunConfig {
    pub fn validate(&self) -> Result<(), InputError> {
        if self.grid < MIN_GRID {
            return Err(InputError(format!(
                "grid resolution {} is below the minimum of {MIN_GRID}",
                self.grid
            )));
        }
        if self.k.is_some() && self.k_range.is_some() {
            return Err(InputError("--k and --k-range are mutually exclusive".into()));
        }
        if self.k == Some(0) {
            return Err(InputError("--k must be at least 1".into()));
        }
        if let Some((lo, hi)) = self.k_range {
            if lo == 0 || lo > hi {
                return Err(InputError(format!("invalid k-range {lo}:{hi}")));
            }
        }
        if let Some(rate) = self.sampling_rate {
            if !(rate > 0.0 && rate.is_finite()) {
                return Err(InputError(format!("sampling rate must be positive, got {rate}")));
            }
        }
        self.fit
            .validate()
            .map_err(|e| InputError(e.to_string()))?;
        if !(self.cca.rank_tolerance > 0.0) {
            return Err(InputError("rank tolerance must be positive".into()));
        }
        let needs_series = self.command != Command::Simulate;
        for (path, needed) in [
            (&self.series, needs_series),
            (&self.outcomes, self.command == Command::Cca),
        ] {
            match path {
                Some(p) if !p.exists() => {
                    return Err(InputError(format!("input file {} does not exist", p.display())))
                }
                None if needed => return Err(InputError("missing required input path".into())),
                _ => {}
            }
        }
        if self.command == Command::Simulate && self.simulation.is_none() {
            return Err(InputError("simulate needs design settings".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub program: String,
    pub version: String,
    pub config: RunConfig,
    pub outputs: Vec<String>,
}

impl Manifest {
    pub fn new(config: RunConfig, outputs: Vec<String>) -> Self {
        Self {
            program: env!("CARGO_PKG_NAME").to_string(),
            version: env!("CARGO_PKG_VERSION").to_string(),
            config,
            outputs,
        }
    }
}
