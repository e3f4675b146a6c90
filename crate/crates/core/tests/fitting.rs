use cepstra_cca::cepstral::{
    fit_cepstrum, reconstruct_log_spectrum, select_order, FitOptions, WhittleModel,
};
use cepstra_cca::simulate::{replicate_rng, SimulationDesign, SpectralSynthesizer};
use cepstra_cca::spectral::{
    cosine_design, fourier_frequencies, n_frequencies, periodogram, periodogram_row,
    PeriodogramSet,
};
use cepstra_cca::dataset::TimeSeriesPanel;
use nalgebra::DVector;
use rand_distr::{Distribution, Exp1};

fn sample_exp<R: rand::Rng>(rng: &mut R) -> f64 {
    Exp1.sample(rng)
}

#[test]
fn white_noise_cepstrum_is_near_zero() {
    let len = 256;
    let model = WhittleModel::new(len, 3).unwrap();
    let synth = SpectralSynthesizer::new(len, 1);
    let mut rng = replicate_rng(21, 0);
    let reps = 200;
    let mut mean = [0.0; 3];
    for _ in 0..reps {
        let y = periodogram_row(&synth.generate(&[0.0], &mut rng));
        let fit = model.fit(&y, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        for (m, c) in mean.iter_mut().zip(&fit.coefficients) {
            *m += c / reps as f64;
        }
    }
    // per-fit sd is about 1/sqrt(127); 200 fits give roughly 0.006
    for m in mean {
        assert!(m.abs() < 0.03, "{mean:?}");
    }
}

#[test]
fn simulated_subject_log_spectrum_is_recovered() {
    let design = SimulationDesign::default();
    let len = design.series_len;
    let cepstrum = [5.0, 1.0, 1.5, -1.0];
    let synth = SpectralSynthesizer::new(len, design.oversampling);
    let model = WhittleModel::new(len, 4).unwrap();
    let freqs = fourier_frequencies(len);
    let truth = reconstruct_log_spectrum(&cepstrum, &freqs);
    let reps = 200;
    let mut rng = replicate_rng(22, 0);
    let mut bias = vec![0.0; freqs.len()];
    let mut sq = vec![0.0; freqs.len()];
    for _ in 0..reps {
        let y = periodogram_row(&synth.generate(&cepstrum, &mut rng));
        let fit = model.fit(&y, &FitOptions::default()).unwrap();
        for (i, v) in reconstruct_log_spectrum(&fit.coefficients, &freqs).iter().enumerate() {
            let e = v - truth[i];
            bias[i] += e / reps as f64;
            sq[i] += e * e / reps as f64;
        }
    }
    for i in 0..freqs.len() {
        let se = ((sq[i] - bias[i] * bias[i]) / reps as f64).sqrt();
        assert!(bias[i].abs() < 4.0 * se + 0.02, "w={} bias {} se {se}", freqs[i], bias[i]);
        assert!(sq[i] < 0.2, "w={} mse {}", freqs[i], sq[i]);
    }
}

#[test]
fn converged_fit_is_a_scoring_fixed_point() {
    let mut rng = replicate_rng(23, 0);
    let len = 120;
    let m = n_frequencies(len);
    for k in 1..=6 {
        let y: Vec<f64> = (0..m).map(|_| sample_exp(&mut rng)).collect();
        let model = WhittleModel::new(len, k).unwrap();
        let fit = model.fit(&y, &FitOptions::default()).unwrap();
        assert!(fit.converged);
        let u = DVector::from_vec(model.score(&fit.coefficients, &y).unwrap());
        let step = model.information().clone().cholesky().unwrap().solve(&u);
        assert!(step.norm() < 1e-6, "K={k}: step {}", step.norm());
        assert!((fit.score_norm - u.norm()).abs() < 1e-12);
    }
}

#[test]
fn single_coefficient_fit_is_log_mean() {
    let mut rng = replicate_rng(24, 0);
    for len in [5usize, 16, 101, 512] {
        let m = n_frequencies(len);
        let y: Vec<f64> = (0..m).map(|_| 3.0 * sample_exp(&mut rng) + 1e-3).collect();
        let fit = fit_cepstrum(&y, &cosine_design(len, 1).unwrap(), &FitOptions::default()).unwrap();
        let closed = (y.iter().sum::<f64>() / m as f64).ln();
        assert!((fit.coefficients[0] - closed).abs() < 1e-10);
    }
}

#[test]
fn iteration_limit_reports_nonconvergence() {
    let len = 64;
    let y: Vec<f64> = (1..=n_frequencies(len)).map(|l| (l as f64).powi(6)).collect();
    let opts = FitOptions {
        max_iterations: 1,
        ..FitOptions::default()
    };
    let fit = fit_cepstrum(&y, &cosine_design(len, 5).unwrap(), &opts).unwrap();
    assert!(!fit.converged);
    assert_eq!(fit.iterations, 1);
}

#[test]
fn aic_prefers_low_order_for_flat_spectra() {
    let len = 128;
    let synth = SpectralSynthesizer::new(len, 1);
    let mut rng = replicate_rng(25, 0);
    let series: Vec<Vec<f64>> = (0..60).map(|_| synth.generate(&[2.0], &mut rng)).collect();
    let ids = (0..60).map(|j| format!("s{j}")).collect();
    let p = periodogram(&TimeSeriesPanel::new(ids, series).unwrap());
    let sel = select_order(&p, 1..=10, &FitOptions::default()).unwrap();
    assert!(sel.selected <= 2, "selected {}", sel.selected);
}

#[test]
fn periodogram_set_feeds_fits() {
    let p = PeriodogramSet::from_rows(10, vec!["a".into(), "b".into()], vec![vec![1.0; 4], vec![2.0; 4]]);
    let fits = cepstra_cca::cepstral::fit_panel(&p, 2, &FitOptions::default()).unwrap();
    assert!(fits.all_converged());
    let c = fits.coefficients();
    assert!((c[(1, 0)] - c[(0, 0)] - 2f64.ln()).abs() < 1e-10);
    assert!(c[(0, 1)].abs() < 1e-10);
}
