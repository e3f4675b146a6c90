//! Reference computations the acceptance suite checks `cepstra-cca` against.
//! They share no code with the library.

use nalgebra::DMatrix;

/// Canonical correlation analysis by the QR/SVD route: center both blocks,
/// take thin QR factors `X = Qx Rx`, `Y = Qy Ry`, and read the correlations
/// off the singular values of `Qx' Qy`.
#[derive(Debug, Clone)]
pub struct TextbookCca {
    /// Descending.
    pub correlations: Vec<f64>,
    /// `K x Q`; columns have unit sample variance (`N-1` denominator).
    pub x_weights: DMatrix<f64>,
    /// `P x Q`.
    pub y_weights: DMatrix<f64>,
}

fn center(m: &DMatrix<f64>) -> DMatrix<f64> {
    let n = m.nrows() as f64;
    let mut c = m.clone();
    for mut col in c.column_iter_mut() {
        let mean = col.sum() / n;
        col.add_scalar_mut(-mean);
    }
    c
}

/// Both blocks must have full column rank and more rows than columns.
pub fn textbook_cca(x: &DMatrix<f64>, y: &DMatrix<f64>) -> TextbookCca {
    assert_eq!(x.nrows(), y.nrows());
    let scale = ((x.nrows() - 1) as f64).sqrt();
    let qr_x = center(x).qr();
    let qr_y = center(y).qr();
    let (qx, rx) = (qr_x.q(), qr_x.r());
    let (qy, ry) = (qr_y.q(), qr_y.r());
    let svd = (qx.transpose() * qy).svd(true, true);
    let u = svd.u.expect("left vectors");
    let v_t = svd.v_t.expect("right vectors");

    let q = x.ncols().min(y.ncols());
    let mut order: Vec<usize> = (0..svd.singular_values.len()).collect();
    order.sort_by(|&i, &j| svd.singular_values[j].total_cmp(&svd.singular_values[i]));
    order.truncate(q);

    let u_sorted = DMatrix::from_fn(u.nrows(), q, |r, c| u[(r, order[c])]);
    let v_sorted = DMatrix::from_fn(v_t.ncols(), q, |r, c| v_t[(order[c], r)]);
    let x_weights = rx
        .solve_upper_triangular(&u_sorted)
        .expect("x block has full rank")
        * scale;
    let y_weights = ry
        .solve_upper_triangular(&v_sorted)
        .expect("y block has full rank")
        * scale;
    TextbookCca {
        correlations: order
            .iter()
            .map(|&i| svd.singular_values[i].min(1.0))
            .collect(),
        x_weights,
        y_weights,
    }
}

/// `integral_0^1 exp(F(w)) dw` for `F(w) = f0 + sum_k f_k sqrt2 cos(2 pi k w)`
/// by the composite trapezoid rule.
pub fn integrated_exp_log_spectrum(cepstrum: &[f64], intervals: usize) -> f64 {
    let log_spectrum = |w: f64| {
        cepstrum
            .iter()
            .enumerate()
            .map(|(k, c)| {
                if k == 0 {
                    *c
                } else {
                    c * std::f64::consts::SQRT_2 * (2.0 * std::f64::consts::PI * k as f64 * w).cos()
                }
            })
            .sum::<f64>()
    };
    let h = 1.0 / intervals as f64;
    let inner: f64 = (1..intervals).map(|i| log_spectrum(i as f64 * h).exp()).sum();
    h * (inner + 0.5 * (log_spectrum(0.0).exp() + log_spectrum(1.0).exp()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn perfectly_related_blocks() {
        let x = DMatrix::from_row_slice(5, 1, &[1.0, 2.0, 4.0, 3.0, 7.0]);
        let y = x.map(|v| 3.0 - 2.0 * v);
        let r = textbook_cca(&x, &y);
        assert!((r.correlations[0] - 1.0).abs() < 1e-12);
        // unit sample variance
        let sd = {
            let c = center(&x);
            (c.norm_squared() / 4.0).sqrt()
        };
        assert!((r.x_weights[(0, 0)].abs() - 1.0 / sd).abs() < 1e-12);
    }

    #[test]
    fn trapezoid_of_constant_and_cosine() {
        assert!((integrated_exp_log_spectrum(&[0.0], 10) - 1.0).abs() < 1e-14);
        // I0(sqrt2) for F = sqrt2 cos(2 pi w)
        let i0 = 1.566_082_929_756_350_6;
        assert!((integrated_exp_log_spectrum(&[0.0, 1.0], 200) - i0).abs() < 1e-9);
    }
}
