//! Plug-in canonical correlation analysis between truncated cepstra and
//! static outcomes.
//!
//! With `Gf`, `Gfz`, `Gz` the cepstral covariance, cross-covariance and
//! outcome covariance, the `q`-th canonical pair comes from the `q`-th
//! largest eigenpair `(eta_q, v_q)` of the symmetric `P x P` matrix
//!
//! ```text
//! Gz^{-1/2} Gfz' Gf^- Gfz Gz^{-1/2}
//! ```
//!
//! where `Gf^-` is the Moore–Penrose inverse. Then `rho_q = sqrt(eta_q)`,
//! `B_q = Gz^{-1/2} v_q` and `a_q = Gf^- Gfz B_q / rho_q`.

use std::io::Write;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::cepstral::reconstruct_log_spectrum;
use crate::dataset::OutcomeMatrix;

/// Outcome covariances with a larger condition number are rejected.
pub const MAX_OUTCOME_CONDITION: f64 = 1e12;
/// Canonical correlations below this are reported but flagged.
pub const IDENTIFIED_THRESHOLD: f64 = 1e-8;
const REPEATED_GAP: f64 = 1e-10;
const EIGEN_SLACK: f64 = 1e-6;

#[derive(Debug, Error)]
pub enum CcaError {
    #[error(
        "outcome covariance is numerically singular (condition {condition:.3e}); \
         standardize the outcomes or drop collinear variables"
    )]
    SingularOutcome { condition: f64 },
    #[error("matrix error: {0}")]
    Matrix(String),
    #[error("no canonical pairs: cepstral covariance has rank 0")]
    DegenerateCca,
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("canonical eigenvalue {0} lies outside [0, 1]")]
    EigenvalueRange(f64),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CcaOptions {
    /// Eigenvalues of the cepstral covariance below `rank_tolerance * max`
    /// are treated as zero in its generalized inverse.
    pub rank_tolerance: f64,
}

impl Default for CcaOptions {
    fn default() -> Self {
        Self {
            rank_tolerance: 1e-10,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CovarianceBundle {
    pub gamma_f: DMatrix<f64>,
    pub gamma_fz: DMatrix<f64>,
    pub gamma_z: DMatrix<f64>,
    pub mean_f: DVector<f64>,
    pub mean_z: DVector<f64>,
    pub rank_f: usize,
}

impl CovarianceBundle {
    /// Builds a bundle from known (e.g. population) moments.
    pub fn from_parts(
        gamma_f: DMatrix<f64>,
        gamma_fz: DMatrix<f64>,
        gamma_z: DMatrix<f64>,
        rank_tolerance: f64,
    ) -> Result<Self, CcaError> {
        let k = gamma_f.nrows();
        let p = gamma_z.nrows();
        if !gamma_f.is_square() || !gamma_z.is_square() || gamma_fz.shape() != (k, p) {
            return Err(CcaError::Dimension(format!(
                "gamma_f {:?}, gamma_fz {:?}, gamma_z {:?}",
                gamma_f.shape(),
                gamma_fz.shape(),
                gamma_z.shape()
            )));
        }
        check_symmetric(&gamma_f, "gamma_f")?;
        check_symmetric(&gamma_z, "gamma_z")?;
        check_condition(&gamma_z)?;
        let rank_f = numerical_rank(&gamma_f, rank_tolerance);
        Ok(Self {
            gamma_f,
            gamma_fz,
            gamma_z,
            mean_f: DVector::zeros(k),
            mean_z: DVector::zeros(p),
            rank_f,
        })
    }

    pub fn order(&self) -> usize {
        self.gamma_f.nrows()
    }

    pub fn n_outcomes(&self) -> usize {
        self.gamma_z.nrows()
    }
}

fn asymmetry(m: &DMatrix<f64>) -> f64 {
    (m - m.transpose()).amax()
}

fn check_symmetric(m: &DMatrix<f64>, name: &str) -> Result<(), CcaError> {
    let scale = m.amax().max(1.0);
    if asymmetry(m) > 1e-10 * scale {
        return Err(CcaError::Matrix(format!("{name} is not symmetric")));
    }
    Ok(())
}

fn check_condition(gamma_z: &DMatrix<f64>) -> Result<(), CcaError> {
    let eig = SymmetricEigen::new(gamma_z.clone());
    let (lo, hi) = (eig.eigenvalues.min(), eig.eigenvalues.max());
    let condition = if lo > 0.0 { hi / lo } else { f64::INFINITY };
    if !(condition <= MAX_OUTCOME_CONDITION) {
        return Err(CcaError::SingularOutcome { condition });
    }
    Ok(())
}

fn numerical_rank(m: &DMatrix<f64>, rel_tol: f64) -> usize {
    let sv = m.singular_values();
    let max = sv.max();
    if max <= 0.0 {
        return 0;
    }
    sv.iter().filter(|s| **s > rel_tol * max).count()
}

/// Column means and the `N-1` denominator cross-product of centered columns.
fn centered(x: &DMatrix<f64>) -> (DVector<f64>, DMatrix<f64>) {
    let n = x.nrows() as f64;
    let mean = DVector::from_iterator(x.ncols(), x.column_iter().map(|c| c.sum() / n));
    let mut c = x.clone();
    for (mut col, m) in c.column_iter_mut().zip(mean.iter()) {
        col.add_scalar_mut(-m);
    }
    (mean, c)
}

/// Sample moments of fitted cepstra (`N x K`) and outcomes (`N x P`).
pub fn covariances(
    fhat: &DMatrix<f64>,
    z: &OutcomeMatrix,
    opts: &CcaOptions,
) -> Result<CovarianceBundle, CcaError> {
    let n = fhat.nrows();
    let p = z.n_outcomes();
    if z.n_subjects() != n {
        return Err(CcaError::Dimension(format!(
            "{n} cepstra but {} outcome rows",
            z.n_subjects()
        )));
    }
    if n < 2 || n < p + 1 {
        return Err(CcaError::Dimension(format!(
            "need N >= max(2, P+1); have N={n}, P={p}"
        )));
    }
    let denom = (n - 1) as f64;
    let (mean_f, cf) = centered(fhat);
    let (mean_z, cz) = centered(z.values());
    let mut gamma_f = cf.tr_mul(&cf) / denom;
    let gamma_fz = cf.tr_mul(&cz) / denom;
    let mut gamma_z = cz.tr_mul(&cz) / denom;
    symmetrize(&mut gamma_f);
    symmetrize(&mut gamma_z);
    check_condition(&gamma_z)?;
    let rank_f = numerical_rank(&gamma_f, opts.rank_tolerance);
    Ok(CovarianceBundle {
        gamma_f,
        gamma_fz,
        gamma_z,
        mean_f,
        mean_z,
        rank_f,
    })
}

fn symmetrize(m: &mut DMatrix<f64>) {
    let t = m.transpose();
    *m += t;
    *m *= 0.5;
}

/// `R` with `R m R = I` for a symmetric positive definite `m`.
pub fn sym_inverse_sqrt(m: &DMatrix<f64>) -> Result<DMatrix<f64>, CcaError> {
    if !m.is_square() {
        return Err(CcaError::Matrix("matrix is not square".into()));
    }
    check_symmetric(m, "matrix")?;
    let eig = SymmetricEigen::new(m.clone());
    if eig.eigenvalues.iter().any(|l| !(*l > 0.0)) {
        return Err(CcaError::Matrix("matrix is not positive definite".into()));
    }
    let d = eig.eigenvalues.map(|l| 1.0 / l.sqrt());
    let v = &eig.eigenvectors;
    let mut r = v * DMatrix::from_diagonal(&d) * v.transpose();
    symmetrize(&mut r);
    Ok(r)
}

/// Moore–Penrose inverse of a symmetric PSD matrix via its eigen
/// decomposition, with eigenvalues below `rel_tol * max` zeroed. Returns the
/// inverse and the retained rank.
pub fn pseudo_inverse(m: &DMatrix<f64>, rel_tol: f64) -> (DMatrix<f64>, usize) {
    let mut sym = m.clone();
    symmetrize(&mut sym);
    let eig = SymmetricEigen::new(sym);
    let max = eig.eigenvalues.iter().cloned().fold(0.0, f64::max);
    let cutoff = rel_tol * max;
    let mut rank = 0;
    let d = eig.eigenvalues.map(|l| {
        if max > 0.0 && l > cutoff {
            rank += 1;
            1.0 / l
        } else {
            0.0
        }
    });
    let v = &eig.eigenvectors;
    let mut inv = v * DMatrix::from_diagonal(&d) * v.transpose();
    symmetrize(&mut inv);
    (inv, rank)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CcaResult {
    /// Canonical correlations, descending.
    pub correlations: Vec<f64>,
    /// Eigenvalues before clipping to `[0, 1]`.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors `v_q` (length `P`).
    pub eigenvectors: Vec<Vec<f64>>,
    /// Rows `a_q` (length `K`).
    pub cepstral_weights: Vec<Vec<f64>>,
    /// Rows `B_q` (length `P`).
    pub outcome_weights: Vec<Vec<f64>>,
    /// False when `rho_q` is below [`IDENTIFIED_THRESHOLD`]; the cepstral
    /// weight is then returned as zeros.
    pub identified: Vec<bool>,
    /// True when `eta_q` is within `1e-10` of a neighbouring eigenvalue, so
    /// only the spanned subspace is determined.
    pub repeated: Vec<bool>,
    pub rank_f: usize,
    pub options: CcaOptions,
}

impl CcaResult {
    pub fn n_pairs(&self) -> usize {
        self.correlations.len()
    }
}

pub fn cepstral_cca(bundle: &CovarianceBundle, opts: &CcaOptions) -> Result<CcaResult, CcaError> {
    let p = bundle.n_outcomes();
    let z_isqrt = sym_inverse_sqrt(&bundle.gamma_z)?;
    let (f_pinv, rank_f) = pseudo_inverse(&bundle.gamma_f, opts.rank_tolerance);
    let q_pairs = p.min(rank_f);
    if q_pairs == 0 {
        return Err(CcaError::DegenerateCca);
    }

    // a_q = rho_q^{-1} * lift * v_q
    let lift = &f_pinv * &bundle.gamma_fz * &z_isqrt;
    let mut m = z_isqrt.clone() * bundle.gamma_fz.tr_mul(&lift);
    symmetrize(&mut m);
    let eig = SymmetricEigen::new(m);

    let mut order: Vec<usize> = (0..p).collect();
    order.sort_by(|&i, &j| eig.eigenvalues[j].total_cmp(&eig.eigenvalues[i]).then(i.cmp(&j)));
    let sorted: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();

    let mut result = CcaResult {
        correlations: Vec::with_capacity(q_pairs),
        eigenvalues: Vec::with_capacity(q_pairs),
        eigenvectors: Vec::with_capacity(q_pairs),
        cepstral_weights: Vec::with_capacity(q_pairs),
        outcome_weights: Vec::with_capacity(q_pairs),
        identified: Vec::with_capacity(q_pairs),
        repeated: Vec::with_capacity(q_pairs),
        rank_f,
        options: *opts,
    };
    for (q, &idx) in order.iter().take(q_pairs).enumerate() {
        let eta = sorted[q];
        if eta < -EIGEN_SLACK || eta > 1.0 + EIGEN_SLACK {
            return Err(CcaError::EigenvalueRange(eta));
        }
        let rho = eta.clamp(0.0, 1.0).sqrt();
        let mut v: DVector<f64> = eig.eigenvectors.column(idx).into_owned();
        let mut b = &z_isqrt * &v;
        let identified = rho >= IDENTIFIED_THRESHOLD;
        let mut a = if identified {
            &lift * &v / rho
        } else {
            DVector::zeros(bundle.order())
        };
        let lead = b.iamax();
        if b[lead] < 0.0 {
            v.neg_mut();
            b.neg_mut();
            a.neg_mut();
        }
        let repeated = (q > 0 && (sorted[q - 1] - eta).abs() < REPEATED_GAP)
            || (q + 1 < p && (eta - sorted[q + 1]).abs() < REPEATED_GAP);

        result.correlations.push(rho);
        result.eigenvalues.push(eta);
        result.eigenvectors.push(v.as_slice().to_vec());
        result.cepstral_weights.push(a.as_slice().to_vec());
        result.outcome_weights.push(b.as_slice().to_vec());
        result.identified.push(identified);
        result.repeated.push(repeated);
    }
    Ok(result)
}

/// `A_q(w) = a_q0 + sum_k a_qk sqrt2 cos(2 pi k w)`.
pub fn log_spectral_weight(a: &[f64], grid: &[f64]) -> Vec<f64> {
    reconstruct_log_spectrum(a, grid)
}

/// Per-subject canonical variables computed on mean-centered data.
#[derive(Debug, Clone, PartialEq)]
pub struct CanonicalScores {
    /// `N x Q` scores `a_q'(f_j - fbar)`.
    pub cepstral: DMatrix<f64>,
    /// `N x Q` scores `B_q'(Z_j - Zbar)`.
    pub outcome: DMatrix<f64>,
}

pub fn canonical_scores(
    result: &CcaResult,
    fhat: &DMatrix<f64>,
    z: &OutcomeMatrix,
) -> Result<CanonicalScores, CcaError> {
    let q = result.n_pairs();
    let k = result.cepstral_weights.first().map_or(0, Vec::len);
    let p = result.outcome_weights.first().map_or(0, Vec::len);
    if fhat.ncols() != k || z.n_outcomes() != p || fhat.nrows() != z.n_subjects() {
        return Err(CcaError::Dimension(format!(
            "weights are {k}/{p} wide; data is {}x{} and {}x{}",
            fhat.nrows(),
            fhat.ncols(),
            z.n_subjects(),
            z.n_outcomes()
        )));
    }
    let (_, cf) = centered(fhat);
    let (_, cz) = centered(z.values());
    let a = DMatrix::from_fn(k, q, |i, j| result.cepstral_weights[j][i]);
    let b = DMatrix::from_fn(p, q, |i, j| result.outcome_weights[j][i]);
    Ok(CanonicalScores {
        cepstral: cf * a,
        outcome: cz * b,
    })
}

/// Evenly spaced grid of `points` frequencies covering `[0, 0.5]`.
pub fn half_band_grid(points: usize) -> Vec<f64> {
    assert!(points >= 2, "grid needs at least two points");
    (0..points)
        .map(|i| 0.5 * i as f64 / (points - 1) as f64)
        .collect()
}

/// `q,k,weight` rows for the cepstral weights.
pub fn write_cepstral_weights<W: Write>(result: &CcaResult, writer: W) -> Result<(), CcaError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["q", "k", "weight"])?;
    for (q, a) in result.cepstral_weights.iter().enumerate() {
        for (k, w) in a.iter().enumerate() {
            wtr.write_record([(q + 1).to_string(), k.to_string(), w.to_string()])?;
        }
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `q,variable,weight` rows for the outcome weights.
pub fn write_outcome_weights<W: Write>(
    result: &CcaResult,
    names: &[String],
    writer: W,
) -> Result<(), CcaError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["q", "variable", "weight"])?;
    for (q, b) in result.outcome_weights.iter().enumerate() {
        for (name, w) in names.iter().zip(b) {
            wtr.write_record([(q + 1).to_string(), name.clone(), w.to_string()])?;
        }
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// `omega,value` (or `omega,omega_hz,value` given a sampling rate).
pub fn write_grid<W: Write>(
    grid: &[f64],
    values: &[f64],
    sampling_rate: Option<f64>,
    writer: W,
) -> Result<(), CcaError> {
    let mut wtr = csv::Writer::from_writer(writer);
    match sampling_rate {
        Some(rate) => {
            wtr.write_record(["omega", "omega_hz", "value"])?;
            for (w, v) in grid.iter().zip(values) {
                wtr.write_record([w.to_string(), (w * rate).to_string(), v.to_string()])?;
            }
        }
        None => {
            wtr.write_record(["omega", "value"])?;
            for (w, v) in grid.iter().zip(values) {
                wtr.write_record([w.to_string(), v.to_string()])?;
            }
        }
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

/// Weight functions on `grid`, one column per pair:
/// `omega[,omega_hz],A1,...,AQ`.
pub fn write_weight_functions<W: Write>(
    result: &CcaResult,
    grid: &[f64],
    sampling_rate: Option<f64>,
    writer: W,
) -> Result<(), CcaError> {
    let columns: Vec<Vec<f64>> = result
        .cepstral_weights
        .iter()
        .map(|a| log_spectral_weight(a, grid))
        .collect();
    let mut wtr = csv::Writer::from_writer(writer);
    let mut header = vec!["omega".to_string()];
    if sampling_rate.is_some() {
        header.push("omega_hz".into());
    }
    header.extend((1..=columns.len()).map(|q| format!("A{q}")));
    wtr.write_record(&header)?;
    for (i, w) in grid.iter().enumerate() {
        let mut row = vec![w.to_string()];
        if let Some(rate) = sampling_rate {
            row.push((w * rate).to_string());
        }
        row.extend(columns.iter().map(|c| c[i].to_string()));
        wtr.write_record(&row)?;
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

pub fn write_scores<W: Write>(
    scores: &CanonicalScores,
    subjects: &[String],
    writer: W,
) -> Result<(), CcaError> {
    let mut wtr = csv::Writer::from_writer(writer);
    wtr.write_record(["subject", "q", "cepstral_score", "outcome_score"])?;
    for (j, subject) in subjects.iter().enumerate() {
        for q in 0..scores.cepstral.ncols() {
            wtr.write_record([
                subject.clone(),
                (q + 1).to_string(),
                scores.cepstral[(j, q)].to_string(),
                scores.outcome[(j, q)].to_string(),
            ])?;
        }
    }
    wtr.flush().map_err(csv::Error::from)?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;
    use rand_distr::{Distribution, StandardNormal};

    fn normal_matrix(rng: &mut ChaCha8Rng, r: usize, c: usize) -> DMatrix<f64> {
        DMatrix::from_fn(r, c, |_, _| StandardNormal.sample(rng))
    }

    fn assert_close(a: &DMatrix<f64>, b: &DMatrix<f64>, tol: f64) {
        assert_eq!(a.shape(), b.shape());
        let err = (a - b).amax();
        assert!(err <= tol, "max abs diff {err:e} > {tol:e}");
    }

    #[test]
    fn identical_rows_give_zero_covariance() {
        let fhat = DMatrix::from_row_slice(2, 2, &[1.0, 2.0, 1.0, 2.0]);
        let z = OutcomeMatrix::from_matrix(DMatrix::from_column_slice(2, 1, &[0.0, 1.0])).unwrap();
        let b = covariances(&fhat, &z, &CcaOptions::default()).unwrap();
        assert_eq!(b.gamma_f.amax(), 0.0);
        assert_eq!(b.rank_f, 0);
        assert!(matches!(
            cepstral_cca(&b, &CcaOptions::default()),
            Err(CcaError::DegenerateCca)
        ));
    }

    #[test]
    fn shared_column_cross_covariance_is_variance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let z = normal_matrix(&mut rng, 30, 2);
        let mut fhat = normal_matrix(&mut rng, 30, 3);
        fhat.set_column(1, &z.column(0));
        let zm = OutcomeMatrix::from_matrix(z).unwrap();
        let b = covariances(&fhat, &zm, &CcaOptions::default()).unwrap();
        assert!((b.gamma_fz[(1, 0)] - b.gamma_z[(0, 0)]).abs() < 1e-14);
        assert!((b.gamma_fz[(1, 0)] - b.gamma_f[(1, 1)]).abs() < 1e-14);
    }

    #[test]
    fn singular_outcomes_rejected() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let mut z = normal_matrix(&mut rng, 20, 2);
        let c0 = z.column(0).clone_owned();
        z.set_column(1, &(c0 * 3.0));
        let zm = OutcomeMatrix::from_matrix(z).unwrap();
        let fhat = normal_matrix(&mut rng, 20, 2);
        assert!(matches!(
            covariances(&fhat, &zm, &CcaOptions::default()),
            Err(CcaError::SingularOutcome { .. })
        ));
    }

    #[test]
    fn too_few_subjects_rejected() {
        let z = OutcomeMatrix::from_matrix(DMatrix::identity(3, 3)).unwrap();
        let fhat = DMatrix::zeros(3, 2);
        assert!(matches!(
            covariances(&fhat, &z, &CcaOptions::default()),
            Err(CcaError::Dimension(_))
        ));
    }

    #[test]
    fn inverse_sqrt_cases() {
        let i = DMatrix::<f64>::identity(3, 3);
        assert_close(&sym_inverse_sqrt(&i).unwrap(), &i, 1e-15);
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![4.0, 9.0]));
        let r = sym_inverse_sqrt(&d).unwrap();
        assert_close(
            &r,
            &DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 1.0 / 3.0])),
            1e-15,
        );
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let g = normal_matrix(&mut rng, 5, 5);
        let m = &g * g.transpose() + DMatrix::identity(5, 5) * 0.1;
        let r = sym_inverse_sqrt(&m).unwrap();
        assert!(asymmetry(&r) < 1e-12);
        assert_close(&(&r * &m * &r), &DMatrix::identity(5, 5), 1e-10);
        let not_pd = DMatrix::from_diagonal(&DVector::from_vec(vec![1.0, -1.0]));
        assert!(matches!(sym_inverse_sqrt(&not_pd), Err(CcaError::Matrix(_))));
    }

    #[test]
    fn pseudo_inverse_cases() {
        let d = DMatrix::from_diagonal(&DVector::from_vec(vec![2.0, 0.0]));
        let (pinv, rank) = pseudo_inverse(&d, 1e-10);
        assert_eq!(rank, 1);
        assert_close(
            &pinv,
            &DMatrix::from_diagonal(&DVector::from_vec(vec![0.5, 0.0])),
            1e-15,
        );

        let mut rng = ChaCha8Rng::seed_from_u64(8);
        let g = normal_matrix(&mut rng, 4, 4);
        let m = &g * g.transpose() + DMatrix::identity(4, 4);
        let (pinv, rank) = pseudo_inverse(&m, 1e-10);
        assert_eq!(rank, 4);
        assert_close(&pinv, &m.clone().try_inverse().unwrap(), 1e-10);
    }

    #[test]
    fn pseudo_inverse_rank_deficient_identities() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for (n, r) in [(6usize, 3usize), (5, 1), (8, 7)] {
            let g = normal_matrix(&mut rng, n, r);
            let m = &g * g.transpose();
            let (x, rank) = pseudo_inverse(&m, 1e-10);
            assert_eq!(rank, r);
            let spec = |e: DMatrix<f64>| e.singular_values().max();
            assert!(spec(&m * &x * &m - &m) < 1e-8);
            assert!(spec(&x * &m * &x - &x) < 1e-8);
            assert!(spec((&m * &x).transpose() - &m * &x) < 1e-8);
            assert!(spec((&x * &m).transpose() - &x * &m) < 1e-8);
        }
    }

    #[test]
    fn scalar_cca_is_absolute_correlation() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        let x = normal_matrix(&mut rng, 40, 1);
        let noise = normal_matrix(&mut rng, 40, 1);
        let z = -&x * 0.7 + noise;
        let zm = OutcomeMatrix::from_matrix(z.clone()).unwrap();
        let b = covariances(&x, &zm, &CcaOptions::default()).unwrap();
        let r = cepstral_cca(&b, &CcaOptions::default()).unwrap();
        let cor = b.gamma_fz[(0, 0)] / (b.gamma_f[(0, 0)] * b.gamma_z[(0, 0)]).sqrt();
        assert!((r.correlations[0] - cor.abs()).abs() < 1e-12);
        assert!(r.outcome_weights[0][0] > 0.0);
        assert!(r.cepstral_weights[0][0] < 0.0);

        let same = OutcomeMatrix::from_matrix(x.clone()).unwrap();
        let b = covariances(&x, &same, &CcaOptions::default()).unwrap();
        let r = cepstral_cca(&b, &CcaOptions::default()).unwrap();
        assert!((r.correlations[0] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn perfect_linear_association() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let fhat = normal_matrix(&mut rng, 60, 4);
        let mut z = normal_matrix(&mut rng, 60, 3);
        let lin = fhat.column(2) * 2.5 + DVector::from_element(60, 1.0);
        z.set_column(1, &lin);
        let zm = OutcomeMatrix::from_matrix(z).unwrap();
        let b = covariances(&fhat, &zm, &CcaOptions::default()).unwrap();
        let r = cepstral_cca(&b, &CcaOptions::default()).unwrap();
        assert!((r.correlations[0] - 1.0).abs() < 1e-8);
        let s = canonical_scores(&r, &fhat, &zm).unwrap();
        let diff = (s.cepstral.column(0) - s.outcome.column(0)).amax();
        assert!(diff < 1e-8);
    }

    #[test]
    fn normalization_and_orthogonality() {
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        let fhat = normal_matrix(&mut rng, 80, 5);
        let mix = normal_matrix(&mut rng, 5, 3);
        let z = &fhat * mix * 0.3 + normal_matrix(&mut rng, 80, 3);
        let zm = OutcomeMatrix::from_matrix(z).unwrap();
        let opts = CcaOptions::default();
        let b = covariances(&fhat, &zm, &opts).unwrap();
        let r = cepstral_cca(&b, &opts).unwrap();
        assert_eq!(r.n_pairs(), 3);
        for w in r.correlations.windows(2) {
            assert!(w[0] >= w[1]);
        }
        for q in 0..3 {
            let a = DVector::from_vec(r.cepstral_weights[q].clone());
            let bq = DVector::from_vec(r.outcome_weights[q].clone());
            assert!(((a.transpose() * &b.gamma_f * &a)[0] - 1.0).abs() < 1e-8);
            assert!(((bq.transpose() * &b.gamma_z * &bq)[0] - 1.0).abs() < 1e-8);
        }
        let s = canonical_scores(&r, &fhat, &zm).unwrap();
        let n1 = 79.0;
        for q in 0..3 {
            let va = s.cepstral.column(q).norm_squared() / n1;
            let vb = s.outcome.column(q).norm_squared() / n1;
            assert!((va - 1.0).abs() < 1e-6 && (vb - 1.0).abs() < 1e-6);
            let cor = s.cepstral.column(q).dot(&s.outcome.column(q)) / n1;
            assert!((cor - r.correlations[q]).abs() < 1e-8);
            for q2 in 0..3 {
                if q2 != q {
                    assert!(s.cepstral.column(q).dot(&s.cepstral.column(q2)).abs() / n1 < 1e-6);
                    assert!(s.outcome.column(q).dot(&s.outcome.column(q2)).abs() / n1 < 1e-6);
                    assert!(s.cepstral.column(q).dot(&s.outcome.column(q2)).abs() / n1 < 1e-6);
                }
            }
        }
    }

    #[test]
    fn rank_deficient_cepstra_limit_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        let base = normal_matrix(&mut rng, 50, 1);
        let fhat = DMatrix::from_fn(50, 3, |j, k| base[j] * (k + 1) as f64);
        let zm = OutcomeMatrix::from_matrix(normal_matrix(&mut rng, 50, 2)).unwrap();
        let b = covariances(&fhat, &zm, &CcaOptions::default()).unwrap();
        assert_eq!(b.rank_f, 1);
        let r = cepstral_cca(&b, &CcaOptions::default()).unwrap();
        assert_eq!(r.n_pairs(), 1);
    }

    #[test]
    fn zero_correlation_pairs_are_flagged() {
        let gf = DMatrix::identity(2, 2);
        let gfz = DMatrix::from_row_slice(2, 2, &[0.5, 0.0, 0.0, 0.0]);
        let gz = DMatrix::identity(2, 2);
        let b = CovarianceBundle::from_parts(gf, gfz, gz, 1e-10).unwrap();
        let r = cepstral_cca(&b, &CcaOptions::default()).unwrap();
        assert_eq!(r.identified, vec![true, false]);
        assert!(r.cepstral_weights[1].iter().all(|v| *v == 0.0));
        assert!((r.correlations[0] - 0.5).abs() < 1e-14);
    }

    #[test]
    fn repeated_eigenvalues_are_flagged() {
        let gf = DMatrix::identity(3, 3);
        let gfz = DMatrix::from_row_slice(3, 2, &[0.3, 0.0, 0.0, 0.3, 0.0, 0.0]);
        let gz = DMatrix::identity(2, 2);
        let b = CovarianceBundle::from_parts(gf, gfz, gz, 1e-10).unwrap();
        let r = cepstral_cca(&b, &CcaOptions::default()).unwrap();
        assert_eq!(r.repeated, vec![true, true]);
    }

    #[test]
    fn weight_functions_match_closed_forms() {
        let grid = half_band_grid(33);
        let a1 = log_spectral_weight(&[0.0, 0.0, 0.5, 0.0], &grid);
        let a2 = log_spectral_weight(&[0.0, 0.0, 0.0, 0.5], &grid);
        for ((w, x1), x2) in grid.iter().zip(&a1).zip(&a2) {
            let pi = std::f64::consts::PI;
            assert!((x1 - (4.0 * pi * w).cos() / 2f64.sqrt()).abs() < 1e-14);
            assert!((x2 - (6.0 * pi * w).cos() / 2f64.sqrt()).abs() < 1e-14);
        }
        assert!(log_spectral_weight(&[1.0, 0.0, 0.0], &grid)
            .iter()
            .all(|v| *v == 1.0));
    }

    #[test]
    fn tiny_scores_by_hand() {
        // f = (1, 2, 6), z = (0, 1, 5): means 3 and 2.
        let fhat = DMatrix::from_column_slice(3, 1, &[1.0, 2.0, 6.0]);
        let zm = OutcomeMatrix::from_matrix(DMatrix::from_column_slice(3, 1, &[0.0, 1.0, 5.0]))
            .unwrap();
        let b = covariances(&fhat, &zm, &CcaOptions::default()).unwrap();
        // var f = (4+1+9)/2 = 7, var z = (4+1+9)/2 = 7, cov = (4+1+9)/2 = 7
        assert!((b.gamma_f[(0, 0)] - 7.0).abs() < 1e-14);
        assert!((b.gamma_fz[(0, 0)] - 7.0).abs() < 1e-14);
        let r = cepstral_cca(&b, &CcaOptions::default()).unwrap();
        assert!((r.correlations[0] - 1.0).abs() < 1e-12);
        let s = canonical_scores(&r, &fhat, &zm).unwrap();
        let scale = 7f64.sqrt();
        let expected = [-2.0 / scale, -1.0 / scale, 3.0 / scale];
        for j in 0..3 {
            assert!((s.cepstral[(j, 0)] - expected[j]).abs() < 1e-12);
            assert!((s.outcome[(j, 0)] - expected[j]).abs() < 1e-12);
        }
    }
}
