//! Random-spectrum panel generator with known canonical structure, and a
//! replicate harness that measures how well the estimator recovers it.
//!
//! Each subject draws latent cepstral offsets `xi_j` jointly with outcomes
//! `Z_j`; its log-spectrum is `F_j = base + xi_j` in the cosine basis. A
//! conditionally Gaussian series with spectral density `exp(F_j)` is then
//! produced by spectral synthesis on an oversampled Fourier grid.

use std::f64::consts::PI;
use std::io::Write;
use std::ops::RangeInclusive;
use std::sync::Arc;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cca::{self, CcaOptions, CcaResult, CovarianceBundle};
use crate::cepstral::{self, reconstruct_log_spectrum, FitOptions};
use crate::dataset::{OutcomeMatrix, TimeSeriesPanel};
use crate::spectral::{self, PeriodogramSet};

/// Largest tolerated fraction of failed replicates.
pub const MAX_FAILURE_RATE: f64 = 0.05;

#[derive(Debug, Error)]
pub enum SimulationError {
    #[error("invalid simulation design: {0}")]
    InvalidDesign(String),
    #[error("{failed} of {replicates} replicates failed (limit {:.0}%)", MAX_FAILURE_RATE * 100.0)]
    TooManyFailures {
        failed: usize,
        replicates: usize,
        report: Box<SimulationReport>,
    },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CrossCorrelation {
    /// Index of the latent cepstral offset `xi_k`.
    pub latent: usize,
    /// Index of the outcome `Z_p` (0-based).
    pub outcome: usize,
    pub value: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationDesign {
    pub n_subjects: usize,
    pub series_len: usize,
    pub replicates: usize,
    /// Fixed cepstrum added to the latent offsets; its length sets how many
    /// offsets are drawn.
    pub base_cepstrum: Vec<f64>,
    pub latent_sd: f64,
    pub outcome_variances: Vec<f64>,
    pub cross_correlations: Vec<CrossCorrelation>,
    pub seed: u64,
    /// Synthesis grid length as a multiple of the series length.
    pub oversampling: usize,
}

impl Default for SimulationDesign {
    fn default() -> Self {
        Self {
            n_subjects: 100,
            series_len: 100,
            replicates: 500,
            base_cepstrum: vec![5.0, 1.0, 0.0, 0.0],
            latent_sd: 2.0,
            outcome_variances: vec![4.0, 4.0, 4.0],
            cross_correlations: vec![
                CrossCorrelation {
                    latent: 2,
                    outcome: 0,
                    value: 0.5,
                },
                CrossCorrelation {
                    latent: 3,
                    outcome: 1,
                    value: 0.25,
                },
            ],
            seed: 42,
            oversampling: 1,
        }
    }
}

impl SimulationDesign {
    pub fn n_latent(&self) -> usize {
        self.base_cepstrum.len()
    }

    pub fn n_outcomes(&self) -> usize {
        self.outcome_variances.len()
    }

    /// Same design with every cross-correlation removed.
    pub fn null(&self) -> Self {
        Self {
            cross_correlations: Vec::new(),
            ..self.clone()
        }
    }

    /// Covariance of `(xi_0..xi_{K-1}, Z_1..Z_P)`.
    pub fn joint_covariance(&self) -> DMatrix<f64> {
        let k = self.n_latent();
        let p = self.n_outcomes();
        let mut cov = DMatrix::zeros(k + p, k + p);
        for i in 0..k {
            cov[(i, i)] = self.latent_sd * self.latent_sd;
        }
        for (i, v) in self.outcome_variances.iter().enumerate() {
            cov[(k + i, k + i)] = *v;
        }
        for c in &self.cross_correlations {
            let value = c.value * self.latent_sd * self.outcome_variances[c.outcome].sqrt();
            cov[(c.latent, k + c.outcome)] = value;
            cov[(k + c.outcome, c.latent)] = value;
        }
        cov
    }

    pub fn validate(&self) -> Result<(), SimulationError> {
        let bad = |m: String| Err(SimulationError::InvalidDesign(m));
        if self.n_subjects < 2 || self.n_subjects < self.n_outcomes() + 1 {
            return bad(format!("N={} is too small", self.n_subjects));
        }
        if self.series_len < TimeSeriesPanel::MIN_LEN {
            return bad(format!("T={} is too short", self.series_len));
        }
        if self.replicates == 0 || self.oversampling == 0 {
            return bad("replicates and oversampling must be positive".into());
        }
        if self.base_cepstrum.is_empty() || self.outcome_variances.is_empty() {
            return bad("need at least one latent coefficient and one outcome".into());
        }
        if !(self.latent_sd > 0.0) || self.outcome_variances.iter().any(|v| !(*v > 0.0)) {
            return bad("variances must be positive".into());
        }
        for c in &self.cross_correlations {
            if c.latent >= self.n_latent() || c.outcome >= self.n_outcomes() {
                return bad(format!("cross-correlation index out of range: {c:?}"));
            }
            if !(c.value.abs() <= 1.0) {
                return bad(format!("correlation {} outside [-1, 1]", c.value));
            }
        }
        if Cholesky::new(self.joint_covariance()).is_none() {
            return bad("joint covariance of latent offsets and outcomes is not positive definite".into());
        }
        Ok(())
    }

    /// Exact moments of the latent cepstrum and outcomes.
    pub fn population_bundle(&self) -> Result<CovarianceBundle, SimulationError> {
        self.validate()?;
        let k = self.n_latent();
        let cov = self.joint_covariance();
        CovarianceBundle::from_parts(
            cov.view((0, 0), (k, k)).into_owned(),
            cov.view((0, k), (k, self.n_outcomes())).into_owned(),
            cov.view((k, k), (self.n_outcomes(), self.n_outcomes()))
                .into_owned(),
            CcaOptions::default().rank_tolerance,
        )
        .map_err(|e| SimulationError::InvalidDesign(e.to_string()))
    }

    /// Population canonical correlations and weights implied by the design.
    pub fn population_cca(&self) -> Result<CcaResult, SimulationError> {
        let bundle = self.population_bundle()?;
        cca::cepstral_cca(&bundle, &CcaOptions::default())
            .map_err(|e| SimulationError::InvalidDesign(e.to_string()))
    }
}

/// Draws `(xi_j, Z_j)` from the design's joint Gaussian.
#[derive(Debug, Clone)]
pub struct SubjectSampler {
    base: Vec<f64>,
    chol: Cholesky<f64, Dyn>,
    n_latent: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct SubjectDraw {
    pub latent: Vec<f64>,
    /// `base_cepstrum + latent`.
    pub cepstrum: Vec<f64>,
    pub outcomes: Vec<f64>,
}

impl SubjectSampler {
    pub fn new(design: &SimulationDesign) -> Result<Self, SimulationError> {
        design.validate()?;
        let chol = Cholesky::new(design.joint_covariance()).ok_or_else(|| {
            SimulationError::InvalidDesign("joint covariance is not positive definite".into())
        })?;
        Ok(Self {
            base: design.base_cepstrum.clone(),
            chol,
            n_latent: design.n_latent(),
        })
    }

    pub fn draw<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> SubjectDraw {
        let dim = self.chol.l_dirty().nrows();
        let e = DVector::from_fn(dim, |_, _| StandardNormal.sample(rng));
        let x = self.chol.l() * e;
        let latent: Vec<f64> = x.rows(0, self.n_latent).iter().copied().collect();
        let cepstrum = self.base.iter().zip(&latent).map(|(b, l)| b + l).collect();
        SubjectDraw {
            latent,
            cepstrum,
            outcomes: x.rows(self.n_latent, dim - self.n_latent).iter().copied().collect(),
        }
    }
}

pub fn draw_subject<R: rand::Rng + ?Sized>(
    design: &SimulationDesign,
    rng: &mut R,
) -> Result<SubjectDraw, SimulationError> {
    Ok(SubjectSampler::new(design)?.draw(rng))
}

/// Gaussian series with spectral density `exp(F)` for a cosine-series
/// log-spectrum `F`, built as a circulant process on a grid of length
/// `T' = oversampling * T`:
///
/// ```text
/// X_t = sum_{l=1}^{floor((T'-1)/2)} exp(F(l/T')/2) sqrt(2/T') (a_l cos(2 pi l t/T') + b_l sin(2 pi l t/T'))
///       + exp(F(0)/2) a_0 / sqrt(T')  [+ exp(F(1/2)/2) (-1)^t a_N / sqrt(T') for even T']
/// ```
///
/// with independent standard normal coefficients. The first `T` samples of
/// the grid's middle window are returned. With `oversampling == 1` the
/// periodogram ordinates are exactly `exp(F(l/T)) * chi2_2 / 2` and
/// independent across `l`.
#[derive(Clone)]
pub struct SpectralSynthesizer {
    len: usize,
    grid_len: usize,
    fft: Arc<dyn Fft<f64>>,
}

impl SpectralSynthesizer {
    pub fn new(len: usize, oversampling: usize) -> Self {
        let grid_len = len * oversampling.max(1);
        let fft = FftPlanner::new().plan_fft_inverse(grid_len);
        Self { len, grid_len, fft }
    }

    pub fn generate<R: rand::Rng + ?Sized>(&self, cepstrum: &[f64], rng: &mut R) -> Vec<f64> {
        let g = self.grid_len;
        let half = g / 2;
        let freqs: Vec<f64> = (0..=half).map(|l| l as f64 / g as f64).collect();
        let log_spec = reconstruct_log_spectrum(cepstrum, &freqs);
        let root = (1.0 / g as f64).sqrt();
        let mut buf = vec![Complex::new(0.0, 0.0); g];
        for (l, f) in log_spec.iter().enumerate() {
            let amp = (0.5 * f).exp() * root;
            if l == 0 || 2 * l == g {
                let a: f64 = StandardNormal.sample(rng);
                buf[l] = Complex::new(amp * a, 0.0);
            } else {
                let a: f64 = StandardNormal.sample(rng);
                let b: f64 = StandardNormal.sample(rng);
                // sqrt(2) amp (a cos(x) + b sin(x)) = Re[sqrt(2) amp (a - ib) e^{ix}]
                let amp = amp * std::f64::consts::SQRT_2;
                buf[l] = Complex::new(amp * a, -amp * b);
            }
        }
        self.fft.process(&mut buf);
        let start = (g - self.len) / 2;
        buf[start..start + self.len].iter().map(|c| c.re).collect()
    }
}

pub fn synthesize_series<R: rand::Rng + ?Sized>(
    cepstrum: &[f64],
    len: usize,
    oversampling: usize,
    rng: &mut R,
) -> Vec<f64> {
    SpectralSynthesizer::new(len, oversampling).generate(cepstrum, rng)
}

/// One simulated data set.
#[derive(Debug, Clone)]
pub struct SimulatedPanel {
    pub panel: TimeSeriesPanel,
    pub outcomes: OutcomeMatrix,
    pub cepstra: Vec<Vec<f64>>,
}

pub fn simulate_panel<R: rand::Rng + ?Sized>(
    design: &SimulationDesign,
    rng: &mut R,
) -> Result<SimulatedPanel, SimulationError> {
    let sampler = SubjectSampler::new(design)?;
    let synth = SpectralSynthesizer::new(design.series_len, design.oversampling);
    Ok(simulate_with(design, &sampler, &synth, rng))
}

fn simulate_with<R: rand::Rng + ?Sized>(
    design: &SimulationDesign,
    sampler: &SubjectSampler,
    synth: &SpectralSynthesizer,
    rng: &mut R,
) -> SimulatedPanel {
    let n = design.n_subjects;
    let p = design.n_outcomes();
    let mut series = Vec::with_capacity(n);
    let mut cepstra = Vec::with_capacity(n);
    let mut z = DMatrix::zeros(n, p);
    for j in 0..n {
        let draw = sampler.draw(rng);
        series.push(synth.generate(&draw.cepstrum, rng));
        for (c, v) in draw.outcomes.iter().enumerate() {
            z[(j, c)] = *v;
        }
        cepstra.push(draw.cepstrum);
    }
    let subjects: Vec<String> = (1..=n).map(|j| format!("s{j}")).collect();
    let panel = TimeSeriesPanel::new(subjects.clone(), series)
        .expect("synthesized series are finite and equal length");
    let names = (1..=p).map(|c| format!("z{c}")).collect();
    let outcomes = OutcomeMatrix::new(subjects, names, z).expect("finite outcomes");
    SimulatedPanel {
        panel,
        outcomes,
        cepstra,
    }
}

/// Seeded generator for replicate `index`: the master seed picks the key and
/// the replicate index picks the stream.
pub fn replicate_rng(seed: u64, index: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(index);
    rng
}

/// Squared errors of one estimate. Correlation `q` is compared with the
/// truth for every `q` in the truth (missing estimates count as zero);
/// weights are compared for the first [`WEIGHT_PAIRS`] pairs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ErrorMetrics {
    pub log_spectral_weights: Vec<f64>,
    pub outcome_weights: Vec<f64>,
    pub correlations: Vec<f64>,
}

pub const WEIGHT_PAIRS: usize = 2;

impl ErrorMetrics {
    /// Values in report order: weight functions, outcome weights,
    /// correlations.
    pub fn values(&self) -> Vec<f64> {
        self.log_spectral_weights
            .iter()
            .chain(&self.outcome_weights)
            .chain(&self.correlations)
            .copied()
            .collect()
    }
}

/// Reference weights and correlations to score an estimate against.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Truth {
    pub correlations: Vec<f64>,
    pub cepstral_weights: Vec<Vec<f64>>,
    pub outcome_weights: Vec<Vec<f64>>,
}

impl From<&CcaResult> for Truth {
    fn from(r: &CcaResult) -> Self {
        Self {
            correlations: r.correlations.clone(),
            cepstral_weights: r.cepstral_weights.clone(),
            outcome_weights: r.outcome_weights.clone(),
        }
    }
}

fn sq_dist(a: &[f64], b: &[f64], sign: f64) -> f64 {
    a.iter().zip(b).map(|(x, y)| (sign * x - y).powi(2)).sum()
}

/// Squared errors against `truth`. Log-spectral weight functions are
/// compared as vectors of values on `grid`; each estimated pair
/// `(A_q, B_q)` is sign-flipped jointly when that lowers its combined error.
pub fn squared_errors(estimate: &CcaResult, truth: &Truth, grid: &[f64]) -> Option<ErrorMetrics> {
    if estimate.n_pairs() < WEIGHT_PAIRS || truth.cepstral_weights.len() < WEIGHT_PAIRS {
        return None;
    }
    let mut a_err = Vec::with_capacity(WEIGHT_PAIRS);
    let mut b_err = Vec::with_capacity(WEIGHT_PAIRS);
    for q in 0..WEIGHT_PAIRS {
        let a_hat = reconstruct_log_spectrum(&estimate.cepstral_weights[q], grid);
        let a_true = reconstruct_log_spectrum(&truth.cepstral_weights[q], grid);
        let b_hat = &estimate.outcome_weights[q];
        let b_true = &truth.outcome_weights[q];
        let best = [1.0, -1.0]
            .into_iter()
            .map(|s| (sq_dist(&a_hat, &a_true, s), sq_dist(b_hat, b_true, s)))
            .min_by(|x, y| (x.0 + x.1).total_cmp(&(y.0 + y.1)))
            .expect("two candidates");
        a_err.push(best.0);
        b_err.push(best.1);
    }
    let correlations = truth
        .correlations
        .iter()
        .enumerate()
        .map(|(q, rho)| (estimate.correlations.get(q).copied().unwrap_or(0.0) - rho).powi(2))
        .collect();
    Some(ErrorMetrics {
        log_spectral_weights: a_err,
        outcome_weights: b_err,
        correlations,
    })
}

/// How the truncation order is chosen in each replicate.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum OrderMode {
    /// Minimize the AIC-type criterion over the range (default: `1..=min(30, m)`).
    Aic(Option<RangeInclusive<usize>>),
    Fixed(usize),
}

impl Default for OrderMode {
    fn default() -> Self {
        OrderMode::Aic(None)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StudyOptions {
    pub order: OrderMode,
    pub fit: FitOptions,
    pub cca: CcaOptions,
}

impl Default for StudyOptions {
    fn default() -> Self {
        Self {
            order: OrderMode::default(),
            fit: FitOptions::default(),
            cca: CcaOptions::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub name: String,
    /// Mean squared error times 100.
    pub mean: f64,
    /// Standard deviation of the squared error times 100.
    pub sd: f64,
    /// Monte Carlo standard error of `mean` (times 100).
    pub std_error: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicateRecord {
    pub index: usize,
    pub order: usize,
    pub correlations: Vec<f64>,
    /// Raw (unscaled) squared errors in metric order.
    pub errors: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimulationReport {
    pub design: SimulationDesign,
    pub options: StudyOptions,
    pub metrics: Vec<MetricSummary>,
    pub replicates: Vec<ReplicateRecord>,
    pub failures: Vec<(usize, String)>,
}

impl SimulationReport {
    pub fn metric(&self, name: &str) -> Option<&MetricSummary> {
        self.metrics.iter().find(|m| m.name == name)
    }

    pub fn failure_rate(&self) -> f64 {
        self.failures.len() as f64 / self.design.replicates as f64
    }

    /// Replicates per selected order, ascending by order.
    pub fn order_counts(&self) -> Vec<(usize, usize)> {
        let mut counts = std::collections::BTreeMap::new();
        for r in &self.replicates {
            *counts.entry(r.order).or_insert(0) += 1;
        }
        counts.into_iter().collect()
    }
}

/// Metric names in report order for a design with `n_corr` correlations.
pub fn metric_names(n_corr: usize) -> Vec<String> {
    let mut names: Vec<String> = (1..=WEIGHT_PAIRS).map(|q| format!("A{q}")).collect();
    names.extend((1..=WEIGHT_PAIRS).map(|q| format!("B{q}")));
    names.extend((1..=n_corr).map(|q| format!("rho{q}")));
    names
}

/// Runs one replicate: simulate, estimate, and score against `truth`.
pub fn run_replicate(
    design: &SimulationDesign,
    options: &StudyOptions,
    truth: &Truth,
    index: usize,
) -> Result<ReplicateRecord, String> {
    let sampler = SubjectSampler::new(design).map_err(|e| e.to_string())?;
    let synth = SpectralSynthesizer::new(design.series_len, design.oversampling);
    run_replicate_with(design, options, truth, &sampler, &synth, index)
}

fn run_replicate_with(
    design: &SimulationDesign,
    options: &StudyOptions,
    truth: &Truth,
    sampler: &SubjectSampler,
    synth: &SpectralSynthesizer,
    index: usize,
) -> Result<ReplicateRecord, String> {
    let mut rng = replicate_rng(design.seed, index as u64);
    let sim = simulate_with(design, sampler, synth, &mut rng);
    let pgram = spectral::periodogram(&sim.panel);
    let fits = fit_for_mode(&pgram, options).map_err(|e| e.to_string())?;
    let fhat = fits.coefficients();
    let bundle = cca::covariances(&fhat, &sim.outcomes, &options.cca).map_err(|e| e.to_string())?;
    let result = cca::cepstral_cca(&bundle, &options.cca).map_err(|e| e.to_string())?;
    let grid = spectral::fourier_frequencies(design.series_len);
    let errors = squared_errors(&result, truth, &grid)
        .ok_or_else(|| format!("only {} canonical pair(s) estimated", result.n_pairs()))?;
    Ok(ReplicateRecord {
        index,
        order: fits.order,
        correlations: result.correlations,
        errors: errors.values(),
    })
}

fn fit_for_mode(
    p: &PeriodogramSet,
    options: &StudyOptions,
) -> Result<cepstral::CepstralFitSet, cepstral::CepstralError> {
    match &options.order {
        OrderMode::Aic(range) => {
            let range = range
                .clone()
                .unwrap_or_else(|| cepstral::default_order_range(p.series_len()));
            Ok(cepstral::select_order(p, range, &options.fit)?.fits)
        }
        OrderMode::Fixed(k) => {
            let fits = cepstral::fit_panel(p, *k, &options.fit)?;
            if !fits.all_converged() {
                return Err(cepstral::CepstralError::NoCleanOrder { lo: *k, hi: *k });
            }
            Ok(fits)
        }
    }
}

fn mean_sd(values: &[f64]) -> (f64, f64) {
    let n = values.len() as f64;
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n;
    let sd = if values.len() > 1 {
        (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
    } else {
        0.0
    };
    (mean, sd)
}

/// Runs every replicate of `design` and summarizes squared errors.
/// Replicates are independent and seeded by index, so the report does not
/// depend on scheduling.
pub fn run_study(
    design: &SimulationDesign,
    options: &StudyOptions,
) -> Result<SimulationReport, SimulationError> {
    design.validate()?;
    options
        .fit
        .validate()
        .map_err(|e| SimulationError::InvalidDesign(e.to_string()))?;
    let truth = Truth::from(&design.population_cca()?);
    let sampler = SubjectSampler::new(design)?;
    let synth = SpectralSynthesizer::new(design.series_len, design.oversampling);

    let outcomes: Vec<Result<ReplicateRecord, String>> = (0..design.replicates)
        .into_par_iter()
        .map(|r| run_replicate_with(design, options, &truth, &sampler, &synth, r))
        .collect();

    let mut replicates = Vec::new();
    let mut failures = Vec::new();
    for (r, outcome) in outcomes.into_iter().enumerate() {
        match outcome {
            Ok(rec) => replicates.push(rec),
            Err(msg) => failures.push((r, msg)),
        }
    }

    let names = metric_names(truth.correlations.len());
    let metrics = names
        .into_iter()
        .enumerate()
        .map(|(i, name)| {
            let column: Vec<f64> = replicates.iter().map(|r| r.errors[i] * 100.0).collect();
            let (mean, sd) = mean_sd(&column);
            MetricSummary {
                name,
                mean,
                sd,
                std_error: sd / (column.len() as f64).sqrt(),
            }
        })
        .collect();

    let report = SimulationReport {
        design: design.clone(),
        options: options.clone(),
        metrics,
        replicates,
        failures,
    };
    if report.failure_rate() > MAX_FAILURE_RATE {
        return Err(SimulationError::TooManyFailures {
            failed: report.failures.len(),
            replicates: design.replicates,
            report: Box::new(report),
        });
    }
    Ok(report)
}

/// Published mean (sd) of squared errors x 100 for the cepstral estimator,
/// in [`metric_names`] order (A1, A2, B1, B2, rho1, rho2, rho3).
pub fn published_reference(n_subjects: usize, series_len: usize) -> Option<[(f64, f64); 7]> {
    Some(match (n_subjects, series_len) {
        (100, 100) => [
            (0.27, 0.75),
            (0.79, 2.47),
            (1.28, 2.19),
            (3.32, 3.67),
            (0.57, 0.66),
            (0.85, 1.07),
            (1.81, 1.62),
        ],
        (100, 50) => [
            (0.57, 1.11),
            (1.67, 3.50),
            (1.30, 2.08),
            (3.45, 3.67),
            (0.58, 0.68),
            (0.84, 1.02),
            (1.93, 1.68),
        ],
        (100, 30) => [
            (0.87, 0.83),
            (1.61, 2.38),
            (1.42, 2.21),
            (3.75, 4.03),
            (0.54, 0.64),
            (0.84, 1.09),
            (1.97, 1.67),
        ],
        (50, 100) => [
            (0.65, 2.47),
            (0.98, 2.89),
            (2.54, 3.32),
            (5.64, 4.94),
            (1.46, 1.68),
            (1.85, 2.19),
            (3.02, 2.74),
        ],
        (50, 50) => [
            (1.13, 2.48),
            (1.93, 3.71),
            (2.56, 3.38),
            (5.79, 4.92),
            (1.48, 1.70),
            (1.93, 2.18),
            (3.25, 2.89),
        ],
        (50, 30) => [
            (1.39, 1.71),
            (1.84, 2.38),
            (2.67, 3.33),
            (5.85, 4.95),
            (1.40, 1.73),
            (1.99, 2.20),
            (3.26, 2.94),
        ],
        _ => return None,
    })
}

/// Largest accepted `|mean - published| / published`.
pub const REFERENCE_RELATIVE_TOLERANCE: f64 = 0.4;
/// Largest accepted `|mean - published|` in Monte Carlo standard errors.
pub const REFERENCE_STD_ERRORS: f64 = 3.0;

/// One metric of a report compared with its published value.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReferenceCheck {
    pub name: String,
    pub mean: f64,
    pub std_error: f64,
    pub published: f64,
    pub relative_difference: f64,
    /// `|mean - published|` in units of `std_error`.
    pub std_errors: f64,
}

impl ReferenceCheck {
    pub fn within_relative(&self) -> bool {
        self.relative_difference.abs() <= REFERENCE_RELATIVE_TOLERANCE
    }

    pub fn within_std_errors(&self) -> bool {
        self.std_errors <= REFERENCE_STD_ERRORS
    }

    /// Both tolerances hold.
    pub fn passed(&self) -> bool {
        self.within_relative() && self.within_std_errors()
    }
}

/// Compares every metric with the published mean, when the design matches a
/// published setting.
pub fn check_against_published(report: &SimulationReport) -> Option<Vec<ReferenceCheck>> {
    if report.metrics.len() != 7 {
        return None;
    }
    let reference = published_reference(report.design.n_subjects, report.design.series_len)?;
    Some(
        report
            .metrics
            .iter()
            .zip(reference)
            .map(|(m, (published, _))| {
                let diff = m.mean - published;
                ReferenceCheck {
                    name: m.name.clone(),
                    mean: m.mean,
                    std_error: m.std_error,
                    published,
                    relative_difference: diff / published,
                    std_errors: if m.std_error > 0.0 {
                        diff.abs() / m.std_error
                    } else if diff == 0.0 {
                        0.0
                    } else {
                        f64::INFINITY
                    },
                }
            })
            .collect(),
    )
}

/// `metric,mean,sd` rows; published reference columns are appended when the
/// design matches one of the published settings.
pub fn write_report_table<W: Write>(
    report: &SimulationReport,
    writer: W,
) -> Result<(), SimulationError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let reference = published_reference(report.design.n_subjects, report.design.series_len);
    match check_against_published(report).zip(reference) {
        Some((checks, reference)) => {
            wtr.write_record([
                "metric",
                "mean",
                "sd",
                "std_error",
                "published_mean",
                "published_sd",
                "relative_difference",
                "std_errors",
                "within_tolerance",
            ])?;
            for ((m, c), (pm, psd)) in report.metrics.iter().zip(&checks).zip(reference) {
                wtr.write_record([
                    m.name.clone(),
                    m.mean.to_string(),
                    m.sd.to_string(),
                    m.std_error.to_string(),
                    pm.to_string(),
                    psd.to_string(),
                    c.relative_difference.to_string(),
                    c.std_errors.to_string(),
                    c.passed().to_string(),
                ])?;
            }
        }
        None => {
            wtr.write_record(["metric", "mean", "sd", "std_error"])?;
            for m in &report.metrics {
                wtr.write_record([
                    m.name.clone(),
                    m.mean.to_string(),
                    m.sd.to_string(),
                    m.std_error.to_string(),
                ])?;
            }
        }
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// One row per replicate with its selected order and raw squared errors.
pub fn write_replicate_errors<W: Write>(
    report: &SimulationReport,
    writer: W,
) -> Result<(), SimulationError> {
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["replicate".to_string(), "order".to_string()];
    header.extend(report.metrics.iter().map(|m| m.name.clone()));
    wtr.write_record(&header)?;
    for r in &report.replicates {
        let mut row = vec![r.index.to_string(), r.order.to_string()];
        row.extend(r.errors.iter().map(|e| e.to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `integral_0^1 exp(F(w)) dw` by the midpoint rule; the variance of a
/// series with log-spectrum `F`.
pub fn integrated_spectrum(cepstrum: &[f64], points: usize) -> f64 {
    let grid: Vec<f64> = (0..points)
        .map(|i| (i as f64 + 0.5) / points as f64)
        .collect();
    reconstruct_log_spectrum(cepstrum, &grid)
        .iter()
        .map(|f| f.exp())
        .sum::<f64>()
        / points as f64
}

/// `integral_0^1 exp(F(w)) cos(2 pi w lag) dw`, the autocovariance at `lag`.
pub fn autocovariance(cepstrum: &[f64], lag: usize, points: usize) -> f64 {
    let grid: Vec<f64> = (0..points)
        .map(|i| (i as f64 + 0.5) / points as f64)
        .collect();
    reconstruct_log_spectrum(cepstrum, &grid)
        .iter()
        .zip(&grid)
        .map(|(f, w)| f.exp() * (2.0 * PI * w * lag as f64).cos())
        .sum::<f64>()
        / points as f64
}
