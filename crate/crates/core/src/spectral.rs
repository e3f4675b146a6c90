//! Periodograms and the cosine design shared by cepstral fitting and CCA.
//!
//! Frequencies are in cycles per sample. Only the Fourier indices
//! `l = 1..floor((T-1)/2)` are retained: the zero frequency carries the
//! (nuisance) mean and the Nyquist index of an even-length series is
//! dropped.

use std::f64::consts::{PI, SQRT_2};
use std::io::Write;

use nalgebra::DMatrix;
use rayon::prelude::*;
use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::TimeSeriesPanel;
use crate::EULER_GAMMA;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("truncation order K={order} must be in 1..={max} for series length {len}")]
    Order { order: usize, len: usize, max: usize },
    #[error("series length {0} is too short; need at least 4 samples")]
    Length(usize),
    #[error("log floor must be positive, got {0}")]
    Floor(f64),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

/// Number of retained Fourier frequencies for a series of length `len`.
pub fn n_frequencies(len: usize) -> usize {
    len.saturating_sub(1) / 2
}

/// Fourier frequencies `l / len` for `l = 1..floor((len-1)/2)`.
pub fn fourier_frequencies(len: usize) -> Vec<f64> {
    (1..=n_frequencies(len))
        .map(|l| l as f64 / len as f64)
        .collect()
}

/// Raw periodograms `Y_jl = |sum_t X_jt exp(-2 pi i l t / T)|^2 / T`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PeriodogramSet {
    len: usize,
    subjects: Vec<String>,
    freqs: Vec<f64>,
    values: Vec<Vec<f64>>,
}

impl PeriodogramSet {
    /// Wraps precomputed periodogram rows; each row must have
    /// `floor((len-1)/2)` non-negative finite entries.
    pub fn from_rows(len: usize, subjects: Vec<String>, values: Vec<Vec<f64>>) -> Self {
        let m = n_frequencies(len);
        assert_eq!(subjects.len(), values.len(), "one subject id per row");
        for row in &values {
            assert_eq!(row.len(), m, "periodogram row length");
            assert!(
                row.iter().all(|y| y.is_finite() && *y >= 0.0),
                "periodogram values must be finite and non-negative"
            );
        }
        Self {
            len,
            subjects,
            freqs: fourier_frequencies(len),
            values,
        }
    }

    pub fn series_len(&self) -> usize {
        self.len
    }

    pub fn n_subjects(&self) -> usize {
        self.values.len()
    }

    pub fn n_frequencies(&self) -> usize {
        self.freqs.len()
    }

    pub fn subjects(&self) -> &[String] {
        &self.subjects
    }

    pub fn freqs(&self) -> &[f64] {
        &self.freqs
    }

    pub fn row(&self, j: usize) -> &[f64] {
        &self.values[j]
    }

    pub fn rows(&self) -> &[Vec<f64>] {
        &self.values
    }
}

/// Periodogram of a single series over the retained Fourier frequencies.
pub fn periodogram_row(x: &[f64]) -> Vec<f64> {
    let len = x.len();
    let m = n_frequencies(len);
    if m == 0 {
        return Vec::new();
    }
    let fft = FftPlanner::<f64>::new().plan_fft_forward(len);
    let mut buf: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    fft.process(&mut buf);
    buf[1..=m]
        .iter()
        .map(|c| c.norm_sqr() / len as f64)
        .collect()
}

pub fn periodogram(panel: &TimeSeriesPanel) -> PeriodogramSet {
    let rows: Vec<&[f64]> = panel.rows().collect();
    let values = rows.par_iter().map(|x| periodogram_row(x)).collect();
    PeriodogramSet {
        len: panel.len(),
        subjects: panel.subjects().to_vec(),
        freqs: fourier_frequencies(panel.len()),
        values,
    }
}

/// The `m x K` matrix whose `l`-th row is
/// `C_l = (1, sqrt2 cos(2 pi l/T), ..., sqrt2 cos(2 pi l (K-1)/T))`.
#[derive(Debug, Clone, PartialEq)]
pub struct CosineDesign {
    len: usize,
    matrix: DMatrix<f64>,
}

impl CosineDesign {
    pub fn series_len(&self) -> usize {
        self.len
    }

    pub fn order(&self) -> usize {
        self.matrix.ncols()
    }

    pub fn n_frequencies(&self) -> usize {
        self.matrix.nrows()
    }

    pub fn matrix(&self) -> &DMatrix<f64> {
        &self.matrix
    }

    /// Linear predictor `C_l' f` at every retained frequency.
    pub fn predictor(&self, f: &[f64]) -> Vec<f64> {
        debug_assert_eq!(f.len(), self.order());
        (0..self.n_frequencies())
            .map(|l| {
                self.matrix
                    .row(l)
                    .iter()
                    .zip(f)
                    .map(|(c, b)| c * b)
                    .sum()
            })
            .collect()
    }
}

pub fn max_order(len: usize) -> usize {
    n_frequencies(len)
}

pub fn cosine_design(len: usize, order: usize) -> Result<CosineDesign, SpectralError> {
    let max = max_order(len);
    if order == 0 || order > max {
        return Err(SpectralError::Order { order, len, max });
    }
    let matrix = DMatrix::from_fn(max, order, |row, k| {
        if k == 0 {
            1.0
        } else {
            let l = (row + 1) as f64;
            SQRT_2 * (2.0 * PI * l * k as f64 / len as f64).cos()
        }
    });
    Ok(CosineDesign { len, matrix })
}

/// Default floor for [`adjusted_log_periodogram`]: `1e-12 * max(1, mean(y))`.
pub fn default_log_floor(y: &[f64]) -> f64 {
    let mean = if y.is_empty() {
        0.0
    } else {
        y.iter().sum::<f64>() / y.len() as f64
    };
    1e-12 * mean.max(1.0)
}

/// `log(max(y, floor)) + gamma` for one periodogram row.
pub fn adjusted_log_row(y: &[f64], floor: f64) -> Result<Vec<f64>, SpectralError> {
    if !(floor > 0.0) {
        return Err(SpectralError::Floor(floor));
    }
    Ok(y.iter().map(|v| v.max(floor).ln() + EULER_GAMMA).collect())
}

/// Bias-adjusted log-periodogram for every subject.
pub fn adjusted_log_periodogram(
    p: &PeriodogramSet,
    floor: f64,
) -> Result<Vec<Vec<f64>>, SpectralError> {
    p.rows().iter().map(|y| adjusted_log_row(y, floor)).collect()
}

/// Writes `subject,freq,value` (plus `freq_hz` after `freq` when a sampling
/// rate is given).
pub fn write_periodogram<W: Write>(
    p: &PeriodogramSet,
    rows: &[Vec<f64>],
    sampling_rate: Option<f64>,
    writer: W,
) -> Result<(), SpectralError> {
    let mut wtr = csv::Writer::from_writer(writer);
    if sampling_rate.is_some() {
        wtr.write_record(["subject", "freq", "freq_hz", "value"])?;
    } else {
        wtr.write_record(["subject", "freq", "value"])?;
    }
    for (subject, row) in p.subjects().iter().zip(rows) {
        for (freq, value) in p.freqs().iter().zip(row) {
            match sampling_rate {
                Some(rate) => wtr.write_record([
                    subject.clone(),
                    freq.to_string(),
                    (freq * rate).to_string(),
                    value.to_string(),
                ])?,
                None => {
                    wtr.write_record([subject.clone(), freq.to_string(), value.to_string()])?
                }
            }
        }
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}
