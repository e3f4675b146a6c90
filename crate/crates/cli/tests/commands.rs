use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use cepstra_cca::dataset::{self, OutcomeMatrix, TimeSeriesPanel};
use cepstra_cca::simulate::{replicate_rng, simulate_panel, SimulationDesign, SpectralSynthesizer};
use nalgebra::DMatrix;
use tempfile::TempDir;

fn bin() -> Command {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_cepstra-cca"));
    cmd.env_remove("CEPSTRA_CCA_THREADS");
    cmd
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn path(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Writes a panel from the random-spectrum design and returns the paths of
/// the series and outcome CSVs.
fn write_inputs(dir: &Path, n: usize, len: usize) -> (PathBuf, PathBuf) {
    let design = SimulationDesign {
        n_subjects: n,
        series_len: len,
        ..SimulationDesign::default()
    };
    let sim = simulate_panel(&design, &mut replicate_rng(5, 0)).unwrap();
    let series = dir.join("series.csv");
    let outcomes = dir.join("outcomes.csv");
    dataset::write_panel(&sim.panel, fs::File::create(&series).unwrap()).unwrap();
    dataset::write_outcomes(&sim.outcomes, fs::File::create(&outcomes).unwrap()).unwrap();
    (series, outcomes)
}

/// Series-only panel of `n` subjects.
fn write_series(dir: &Path, n: usize, len: usize) -> PathBuf {
    let synth = SpectralSynthesizer::new(len, 1);
    let mut rng = replicate_rng(6, 0);
    let series: Vec<Vec<f64>> = (0..n)
        .map(|j| synth.generate(&[1.0, 0.8 * j as f64, -0.3], &mut rng))
        .collect();
    let panel = TimeSeriesPanel::new((1..=n).map(|j| format!("subject{j}")).collect(), series).unwrap();
    let path = dir.join("series.csv");
    dataset::write_panel(&panel, fs::File::create(&path).unwrap()).unwrap();
    path
}

fn read_csv(path: &Path) -> Vec<Vec<String>> {
    fs::read_to_string(path)
        .unwrap()
        .lines()
        .map(|l| l.split(',').map(str::to_string).collect())
        .collect()
}

#[test]
fn missing_series_names_the_path() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("no_such_series.csv");
    let out = run(&["spectra", "--series", path(&missing), "--out", path(&dir.path().join("o"))]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("no_such_series.csv"), "{stderr}");
}

#[test]
fn spectra_writes_periodograms_and_even_log_spectra() {
    let dir = TempDir::new().unwrap();
    let series = write_series(dir.path(), 2, 64);
    let out_dir = dir.path().join("spectra");
    let out = run(&[
        "spectra",
        "--series",
        path(&series),
        "--k",
        "4",
        "--band",
        "full",
        "--grid",
        "65",
        "--out",
        path(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in ["periodogram.csv", "log_periodogram.csv", "log_spectra.csv", "manifest.json"] {
        assert!(out_dir.join(f).exists(), "{f}");
    }
    let rows = read_csv(&out_dir.join("log_spectra.csv"));
    assert_eq!(rows[0], ["subject", "omega", "log_spectrum"]);
    assert_eq!(rows.len(), 1 + 2 * 65);
    for subject in rows[1..].chunks(65) {
        let values: Vec<f64> = subject.iter().map(|r| r[2].parse().unwrap()).collect();
        for i in 0..65 {
            assert!((values[i] - values[64 - i]).abs() < 1e-9);
        }
    }
    let pgram = read_csv(&out_dir.join("periodogram.csv"));
    assert_eq!(pgram.len(), 1 + 2 * 31);
}

#[test]
fn k_range_adds_aic_table() {
    let dir = TempDir::new().unwrap();
    let (series, _) = write_inputs(dir.path(), 8, 64);
    let out_dir = dir.path().join("spectra");
    let out = run(&[
        "spectra",
        "--series",
        path(&series),
        "--k-range",
        "1:10",
        "--sampling-rate",
        "2",
        "--out",
        path(&out_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let aic = read_csv(&out_dir.join("aic.csv"));
    assert_eq!(aic[0], ["k", "aic"]);
    assert_eq!(aic.len(), 11);
    let pgram = read_csv(&out_dir.join("periodogram.csv"));
    assert_eq!(pgram[0], ["subject", "freq", "freq_hz", "value"]);
    let (f, hz): (f64, f64) = (pgram[1][1].parse().unwrap(), pgram[1][2].parse().unwrap());
    assert!((hz - 2.0 * f).abs() < 1e-15);
}

#[test]
fn order_beyond_series_length_is_input_error() {
    let dir = TempDir::new().unwrap();
    let series = write_series(dir.path(), 3, 20);
    let out = run(&["fit", "--series", path(&series), "--k", "10", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    let out = run(&["spectra", "--series", path(&series), "--grid", "8", "--out", path(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn outcome_equal_to_a_cepstral_score_gives_unit_correlation() {
    let dir = TempDir::new().unwrap();
    let (series, _) = write_inputs(dir.path(), 40, 64);
    let fit_dir = dir.path().join("fit");
    let out = run(&["fit", "--series", path(&series), "--k", "3", "--out", path(&fit_dir)]);
    assert!(out.status.success());

    // z_j = 2 f_j1 - f_j2 from the fitted coefficients
    let coef = read_csv(&fit_dir.join("coefficients.csv"));
    let mut z = vec![0.0; 40];
    let mut ids = Vec::new();
    for row in &coef[1..] {
        let k: usize = row[1].parse().unwrap();
        let c: f64 = row[2].parse().unwrap();
        if k == 0 {
            ids.push(row[0].clone());
        }
        let j = ids.len() - 1;
        z[j] += match k {
            1 => 2.0 * c,
            2 => -c,
            _ => 0.0,
        };
    }
    let outcomes = OutcomeMatrix::new(ids, vec!["score".into()], DMatrix::from_vec(40, 1, z)).unwrap();
    let z_path = dir.path().join("z.csv");
    dataset::write_outcomes(&outcomes, fs::File::create(&z_path).unwrap()).unwrap();

    let cca_dir = dir.path().join("cca");
    let out = run(&[
        "cca",
        "--series",
        path(&series),
        "--outcomes",
        path(&z_path),
        "--k",
        "3",
        "--out",
        path(&cca_dir),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    let json: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(cca_dir.join("cca.json")).unwrap()).unwrap();
    let rho = json["result"]["correlations"][0].as_f64().unwrap();
    assert!((rho - 1.0).abs() < 1e-9, "{rho}");
}

#[test]
fn cca_outputs_are_byte_identical_and_replayable() {
    let dir = TempDir::new().unwrap();
    let (series, outcomes) = write_inputs(dir.path(), 60, 50);
    let args = |out: &Path| {
        vec![
            "--threads".to_string(),
            "1".into(),
            "cca".into(),
            "--series".into(),
            path(&series).into(),
            "--outcomes".into(),
            path(&outcomes).into(),
            "--standardize".into(),
            "--k-range".into(),
            "1:8".into(),
            "--grid".into(),
            "64".into(),
            "--out".into(),
            path(out).into(),
        ]
    };
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(bin().args(args(&a)).output().unwrap().status.success());
    assert!(bin().args(args(&b)).output().unwrap().status.success());
    let files = [
        "cca.json",
        "cepstral_weights.csv",
        "outcome_weights.csv",
        "weight_functions.csv",
        "scores.csv",
        "coefficients.csv",
        "diagnostics.csv",
        "aic.csv",
    ];
    for f in files {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }

    let c = dir.path().join("c");
    let out = run(&[
        "replay",
        "--manifest",
        path(&a.join("manifest.json")),
        "--out",
        path(&c),
    ]);
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    for f in files {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(c.join(f)).unwrap(), "{f}");
    }
    let rows = read_csv(&a.join("weight_functions.csv"));
    assert_eq!(rows[0], ["omega", "A1", "A2", "A3"]);
    assert_eq!(rows.len(), 65);
}

#[test]
fn simulate_smoke_run_is_deterministic() {
    let dir = TempDir::new().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let sim = |out: &Path, threads: &str| {
        bin()
            .env("CEPSTRA_CCA_THREADS", threads)
            .args([
                "--threads",
                "4",
                "simulate",
                "--replicates",
                "10",
                "--n",
                "50",
                "--t",
                "30",
                "--seed",
                "7",
                "--dump-replicates",
                "--out",
                path(out),
            ])
            .output()
            .unwrap()
    };
    let start = std::time::Instant::now();
    assert!(sim(&a, "1").status.success());
    assert!(start.elapsed().as_secs() < 60);
    assert!(sim(&b, "2").status.success());
    for f in ["report.json", "table.csv", "replicates.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
    // manifests differ only in the output directory
    let manifest = |d: &Path| {
        let mut v: serde_json::Value =
            serde_json::from_str(&fs::read_to_string(d.join("manifest.json")).unwrap()).unwrap();
        v["config"]["out"] = serde_json::Value::Null;
        v
    };
    assert_eq!(manifest(&a), manifest(&b));
    let table = read_csv(&a.join("table.csv"));
    assert_eq!(table[0][4], "published_mean");
    assert_eq!(table.len(), 8);
}

#[test]
fn degenerate_outcomes_fail_with_input_or_numerical_code() {
    let dir = TempDir::new().unwrap();
    let (series, outcomes) = write_inputs(dir.path(), 20, 40);
    // replace the outcomes with a constant column
    let z = dataset::load_outcomes(&outcomes).unwrap();
    let constant = OutcomeMatrix::new(
        z.subjects().to_vec(),
        vec!["flat".into()],
        DMatrix::from_element(20, 1, 3.0),
    )
    .unwrap();
    let flat = dir.path().join("flat.csv");
    dataset::write_outcomes(&constant, fs::File::create(&flat).unwrap()).unwrap();
    let base = ["cca", "--series", path(&series), "--outcomes", path(&flat), "--k", "2"];

    let out = bin().args(base).args(["--out", path(&dir.path().join("x"))]).output().unwrap();
    assert_eq!(out.status.code(), Some(3));
    let out = bin()
        .args(base)
        .args(["--standardize", "--out", path(&dir.path().join("y"))])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("flat"));
}

#[test]
fn check_flag_requires_published_setting() {
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "simulate",
        "--replicates",
        "2",
        "--n",
        "20",
        "--t",
        "20",
        "--check",
        "--out",
        path(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
}
