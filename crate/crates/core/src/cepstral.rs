//! Maximum Whittle-likelihood estimation of truncated cepstral coefficients.
//!
//! A log-spectrum truncated at order `K` is
//! `F(w) = f0 + sum_{k=1}^{K-1} f_k sqrt2 cos(2 pi k w)`. Under the Whittle
//! approximation the periodogram ordinates are independent exponentials with
//! mean `exp(F(l/T))`, giving the negative log-likelihood
//!
//! ```text
//! L(f) = sum_l ( Y_l exp(-C_l' f) + C_l' f )
//! ```
//!
//! with score `U(f) = sum_l (1 - Y_l exp(-C_l' f)) C_l` and constant
//! expected information `J = sum_l C_l C_l'`. Fisher scoring iterates
//! `f <- f - J^{-1} U(f)` starting from the log-periodogram least-squares
//! fit. `J` does not depend on `f` or on the data, so [`WhittleModel`]
//! factors it once per `(T, K)`.

use std::f64::consts::{PI, SQRT_2};
use std::io::Write;
use std::ops::RangeInclusive;

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::spectral::{self, cosine_design, CosineDesign, PeriodogramSet, SpectralError};

/// Exponents are clamped to this magnitude before `exp`.
pub const EXPONENT_CLAMP: f64 = 700.0;
const MAX_STEP_HALVINGS: usize = 30;
/// Upper end of the default order search range.
pub const DEFAULT_MAX_ORDER: usize = 30;

const POLISH_STEP: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CepstralError {
    #[error("cosine design is rank deficient (K={0})")]
    DesignRank(usize),
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error("no order in {lo}..={hi} produced converged fits for every subject")]
    NoCleanOrder { lo: usize, hi: usize },
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FitOptions {
    pub max_iterations: usize,
    /// Score-norm threshold per retained frequency; the fit stops once
    /// `||U||_2 <= score_tolerance * m`.
    pub score_tolerance: f64,
    /// Relative likelihood-change threshold; the fit stops once
    /// `|dL| <= nll_tolerance * (1 + |L|)`.
    pub nll_tolerance: f64,
}

impl Default for FitOptions {
    fn default() -> Self {
        Self {
            max_iterations: 100,
            score_tolerance: 1e-8,
            nll_tolerance: 1e-10,
        }
    }
}

impl FitOptions {
    pub fn validate(&self) -> Result<(), CepstralError> {
        if self.max_iterations == 0
            || !(self.score_tolerance > 0.0)
            || !(self.nll_tolerance > 0.0)
        {
            return Err(CepstralError::Dimension(format!(
                "fit options must be positive: {self:?}"
            )));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CepstralFit {
    pub coefficients: Vec<f64>,
    pub nll: f64,
    pub iterations: usize,
    pub converged: bool,
    pub score_norm: f64,
    /// Set when any exponent hit [`EXPONENT_CLAMP`] during the fit.
    pub clamped: bool,
}

/// Cosine design with its information matrix factored once.
#[derive(Debug, Clone)]
pub struct WhittleModel {
    design: CosineDesign,
    information: DMatrix<f64>,
    chol: Cholesky<f64, Dyn>,
}

impl WhittleModel {
    pub fn new(len: usize, order: usize) -> Result<Self, CepstralError> {
        Self::from_design(cosine_design(len, order)?)
    }

    pub fn from_design(design: CosineDesign) -> Result<Self, CepstralError> {
        let information = fisher_information(&design)?;
        let chol = Cholesky::new(information.clone())
            .ok_or(CepstralError::DesignRank(design.order()))?;
        Ok(Self {
            design,
            information,
            chol,
        })
    }

    pub fn design(&self) -> &CosineDesign {
        &self.design
    }

    pub fn order(&self) -> usize {
        self.design.order()
    }

    pub fn information(&self) -> &DMatrix<f64> {
        &self.information
    }

    fn check(&self, f: &[f64], y: &[f64]) -> Result<(), CepstralError> {
        if f.len() != self.order() {
            return Err(CepstralError::Dimension(format!(
                "{} coefficients for order {}",
                f.len(),
                self.order()
            )));
        }
        self.check_row(y)
    }

    fn check_row(&self, y: &[f64]) -> Result<(), CepstralError> {
        if y.len() != self.design.n_frequencies() {
            return Err(CepstralError::Dimension(format!(
                "periodogram row has {} ordinates, design has {}",
                y.len(),
                self.design.n_frequencies()
            )));
        }
        Ok(())
    }

    /// `(L(f), any exponent clamped)`.
    fn nll_unchecked(&self, f: &[f64], y: &[f64]) -> (f64, bool) {
        let eta = self.design.predictor(f);
        let mut clamped = false;
        let value = eta
            .iter()
            .zip(y)
            .map(|(&e, &yl)| {
                let (x, c) = clamp_exponent(-e);
                clamped |= c;
                yl * x.exp() + e
            })
            .sum();
        (value, clamped)
    }

    fn score_unchecked(&self, f: &[f64], y: &[f64]) -> (DVector<f64>, bool) {
        let eta = self.design.predictor(f);
        let mut clamped = false;
        let weights = DVector::from_iterator(
            eta.len(),
            eta.iter().zip(y).map(|(&e, &yl)| {
                let (x, c) = clamp_exponent(-e);
                clamped |= c;
                1.0 - yl * x.exp()
            }),
        );
        (self.design.matrix().tr_mul(&weights), clamped)
    }

    pub fn nll(&self, f: &[f64], y: &[f64]) -> Result<f64, CepstralError> {
        self.check(f, y)?;
        Ok(self.nll_unchecked(f, y).0)
    }

    pub fn score(&self, f: &[f64], y: &[f64]) -> Result<Vec<f64>, CepstralError> {
        self.check(f, y)?;
        Ok(self.score_unchecked(f, y).0.as_slice().to_vec())
    }

    /// Least-squares regression of `log(max(Y, floor)) + gamma` on the design.
    pub fn init_least_squares(&self, y: &[f64], floor: f64) -> Result<Vec<f64>, CepstralError> {
        self.check_row(y)?;
        let logs = DVector::from_vec(spectral::adjusted_log_row(y, floor)?);
        let rhs = self.design.matrix().tr_mul(&logs);
        Ok(self.chol.solve(&rhs).as_slice().to_vec())
    }

    /// Fisher scoring from the least-squares start, halving steps that
    /// would increase the likelihood.
    pub fn fit(&self, y: &[f64], opts: &FitOptions) -> Result<CepstralFit, CepstralError> {
        opts.validate()?;
        let start = self.init_least_squares(y, spectral::default_log_floor(y))?;
        Ok(self.fit_from(start, y, opts))
    }

    fn fit_from(&self, start: Vec<f64>, y: &[f64], opts: &FitOptions) -> CepstralFit {
        let m = self.design.n_frequencies() as f64;
        let score_tol = opts.score_tolerance * m;

        let mut f = DVector::from_vec(start);
        let (mut nll, mut clamped) = self.nll_unchecked(f.as_slice(), y);
        let mut converged = false;
        let mut iterations = 0;

        while iterations < opts.max_iterations {
            iterations += 1;
            let (u, c) = self.score_unchecked(f.as_slice(), y);
            clamped |= c;
            let step = self.chol.solve(&u);
            if u.norm() <= score_tol {
                // one more step from inside the quadratic basin costs one
                // evaluation and squares the remaining error
                self.polish(&mut f, &mut nll, &step, y);
                converged = true;
                break;
            }

            let mut scale = 1.0;
            let mut accepted = None;
            for _ in 0..=MAX_STEP_HALVINGS {
                let cand = &f - &step * scale;
                let (value, c) = self.nll_unchecked(cand.as_slice(), y);
                clamped |= c;
                if value.is_finite() && value <= nll {
                    accepted = Some((cand, value));
                    break;
                }
                scale *= 0.5;
            }
            let Some((cand, value)) = accepted else {
                break;
            };
            let change = nll - value;
            f = cand;
            nll = value;
            if change <= opts.nll_tolerance * (1.0 + nll.abs()) {
                let (u, _) = self.score_unchecked(f.as_slice(), y);
                let step = self.chol.solve(&u);
                self.polish(&mut f, &mut nll, &step, y);
                converged = true;
                break;
            }
        }

        let (u, c) = self.score_unchecked(f.as_slice(), y);
        CepstralFit {
            coefficients: f.as_slice().to_vec(),
            nll,
            iterations,
            converged,
            score_norm: u.norm(),
            clamped: clamped || c,
        }
    }

    fn polish(&self, f: &mut DVector<f64>, nll: &mut f64, step: &DVector<f64>, y: &[f64]) {
        let cand = &*f - step;
        let (value, _) = self.nll_unchecked(cand.as_slice(), y);
        // below this step size the likelihood change is lost in rounding
        let negligible = step.amax() <= POLISH_STEP;
        if value.is_finite() && (value <= *nll || negligible) {
            *f = cand;
            *nll = value;
        }
    }
}

fn clamp_exponent(x: f64) -> (f64, bool) {
    if x > EXPONENT_CLAMP {
        (EXPONENT_CLAMP, true)
    } else if x < -EXPONENT_CLAMP {
        (-EXPONENT_CLAMP, true)
    } else {
        (x, false)
    }
}

/// Negative log-Whittle likelihood of truncated cepstral coefficients `f`.
pub fn whittle_nll(f: &[f64], y: &[f64], design: &CosineDesign) -> Result<f64, CepstralError> {
    check_dims(f, y, design)?;
    let eta = design.predictor(f);
    Ok(eta
        .iter()
        .zip(y)
        .map(|(&e, &yl)| yl * clamp_exponent(-e).0.exp() + e)
        .sum())
}

/// Gradient of [`whittle_nll`] with respect to `f`.
pub fn whittle_score(f: &[f64], y: &[f64], design: &CosineDesign) -> Result<Vec<f64>, CepstralError> {
    check_dims(f, y, design)?;
    let eta = design.predictor(f);
    let w = DVector::from_iterator(
        eta.len(),
        eta.iter()
            .zip(y)
            .map(|(&e, &yl)| 1.0 - yl * clamp_exponent(-e).0.exp()),
    );
    Ok(design.matrix().tr_mul(&w).as_slice().to_vec())
}

fn check_dims(f: &[f64], y: &[f64], design: &CosineDesign) -> Result<(), CepstralError> {
    if f.len() != design.order() || y.len() != design.n_frequencies() {
        return Err(CepstralError::Dimension(format!(
            "f has {} entries and y has {}; design is {}x{}",
            f.len(),
            y.len(),
            design.n_frequencies(),
            design.order()
        )));
    }
    Ok(())
}

/// `J = sum_l C_l C_l'`, the negated expected Hessian. Positive definite
/// whenever the design has full column rank.
pub fn fisher_information(design: &CosineDesign) -> Result<DMatrix<f64>, CepstralError> {
    let c = design.matrix();
    let j = c.tr_mul(c);
    if Cholesky::new(j.clone()).is_none() {
        return Err(CepstralError::DesignRank(design.order()));
    }
    Ok(j)
}

pub fn init_least_squares(
    y: &[f64],
    design: &CosineDesign,
    floor: f64,
) -> Result<Vec<f64>, CepstralError> {
    WhittleModel::from_design(design.clone())?.init_least_squares(y, floor)
}

pub fn fit_cepstrum(
    y: &[f64],
    design: &CosineDesign,
    opts: &FitOptions,
) -> Result<CepstralFit, CepstralError> {
    WhittleModel::from_design(design.clone())?.fit(y, opts)
}

/// `F(w) = f0 + sum_k f_k sqrt2 cos(2 pi k w)` on each grid point.
pub fn reconstruct_log_spectrum(f: &[f64], grid: &[f64]) -> Vec<f64> {
    grid.iter()
        .map(|&w| {
            f.iter()
                .enumerate()
                .map(|(k, &c)| {
                    if k == 0 {
                        c
                    } else {
                        c * SQRT_2 * (2.0 * PI * w * k as f64).cos()
                    }
                })
                .sum()
        })
        .collect()
}

/// Fitted cepstra for every subject of a panel at one truncation order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CepstralFitSet {
    pub order: usize,
    pub subjects: Vec<String>,
    pub fits: Vec<CepstralFit>,
}

impl CepstralFitSet {
    /// `N x K` matrix of coefficients, one row per subject.
    pub fn coefficients(&self) -> DMatrix<f64> {
        DMatrix::from_fn(self.fits.len(), self.order, |j, k| {
            self.fits[j].coefficients[k]
        })
    }

    pub fn total_nll(&self) -> f64 {
        self.fits.iter().map(|f| f.nll).sum()
    }

    pub fn all_converged(&self) -> bool {
        self.fits.iter().all(|f| f.converged)
    }

    pub fn n_failed(&self) -> usize {
        self.fits.iter().filter(|f| !f.converged).count()
    }
}

pub fn fit_panel(
    p: &PeriodogramSet,
    order: usize,
    opts: &FitOptions,
) -> Result<CepstralFitSet, CepstralError> {
    let model = WhittleModel::new(p.series_len(), order)?;
    fit_panel_with(&model, p, opts)
}

pub fn fit_panel_with(
    model: &WhittleModel,
    p: &PeriodogramSet,
    opts: &FitOptions,
) -> Result<CepstralFitSet, CepstralError> {
    let fits = p
        .rows()
        .par_iter()
        .map(|y| model.fit(y, opts))
        .collect::<Result<Vec<_>, _>>()?;
    Ok(CepstralFitSet {
        order: model.order(),
        subjects: p.subjects().to_vec(),
        fits,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AicEntry {
    pub order: usize,
    /// `sum_j L_jk(f_j) + 2 N k`.
    pub aic: f64,
    /// Subjects whose fit did not converge at this order; nonzero excludes
    /// the order from selection.
    pub n_failed: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OrderSelection {
    pub selected: usize,
    pub table: Vec<AicEntry>,
    pub fits: CepstralFitSet,
}

pub fn default_order_range(len: usize) -> RangeInclusive<usize> {
    1..=DEFAULT_MAX_ORDER.min(spectral::max_order(len))
}

/// Chooses the panel-wide order minimizing `sum_j L_jk + 2 N k`, breaking
/// ties toward the smaller order. Orders with any non-converged subject are
/// reported but skipped.
pub fn select_order(
    p: &PeriodogramSet,
    orders: RangeInclusive<usize>,
    opts: &FitOptions,
) -> Result<OrderSelection, CepstralError> {
    let (lo, hi) = (*orders.start(), *orders.end());
    let max = spectral::max_order(p.series_len());
    if lo == 0 || lo > hi || hi > max {
        return Err(SpectralError::Order {
            order: if lo == 0 { lo } else { hi },
            len: p.series_len(),
            max,
        }
        .into());
    }
    let n = p.n_subjects() as f64;
    let mut table = Vec::with_capacity(hi - lo + 1);
    let mut best: Option<(f64, CepstralFitSet)> = None;
    for k in orders {
        let fits = fit_panel(p, k, opts)?;
        let aic = fits.total_nll() + 2.0 * n * k as f64;
        let n_failed = fits.n_failed();
        table.push(AicEntry {
            order: k,
            aic,
            n_failed,
        });
        if n_failed == 0 && best.as_ref().is_none_or(|(b, _)| aic < *b) {
            best = Some((aic, fits));
        }
    }
    let (_, fits) = best.ok_or(CepstralError::NoCleanOrder { lo, hi })?;
    Ok(OrderSelection {
        selected: fits.order,
        table,
        fits,
    })
}

pub fn write_coefficients<W: Write>(fits: &CepstralFitSet, writer: W) -> Result<(), CepstralError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["subject", "k", "coefficient"])?;
    for (subject, fit) in fits.subjects.iter().zip(&fits.fits) {
        for (k, c) in fit.coefficients.iter().enumerate() {
            wtr.write_record([subject.clone(), k.to_string(), c.to_string()])?;
        }
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_diagnostics<W: Write>(fits: &CepstralFitSet, writer: W) -> Result<(), CepstralError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["subject", "converged", "iterations", "nll", "score_norm"])?;
    for (subject, fit) in fits.subjects.iter().zip(&fits.fits) {
        wtr.write_record([
            subject.clone(),
            fit.converged.to_string(),
            fit.iterations.to_string(),
            fit.nll.to_string(),
            fit.score_norm.to_string(),
        ])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Fitted log-spectra on `grid` in long form:
/// `subject,omega[,omega_hz],log_spectrum`.
pub fn write_log_spectra<W: Write>(
    fits: &CepstralFitSet,
    grid: &[f64],
    sampling_rate: Option<f64>,
    writer: W,
) -> Result<(), CepstralError> {
    let mut wtr = csv::Writer::from_writer(writer);
    if sampling_rate.is_some() {
        wtr.write_record(["subject", "omega", "omega_hz", "log_spectrum"])?;
    } else {
        wtr.write_record(["subject", "omega", "log_spectrum"])?;
    }
    for (subject, fit) in fits.subjects.iter().zip(&fits.fits) {
        let values = reconstruct_log_spectrum(&fit.coefficients, grid);
        for (w, v) in grid.iter().zip(values) {
            match sampling_rate {
                Some(rate) => wtr.write_record([
                    subject.clone(),
                    w.to_string(),
                    (w * rate).to_string(),
                    v.to_string(),
                ])?,
                None => wtr.write_record([subject.clone(), w.to_string(), v.to_string()])?,
            }
        }
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_aic_table<W: Write>(table: &[AicEntry], writer: W) -> Result<(), CepstralError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["k", "aic"])?;
    for e in table {
        wtr.write_record([e.order.to_string(), e.aic.to_string()])?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}
