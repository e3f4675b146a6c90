use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::Path;

use anyhow::{Context, Result};
use cepstra_cca::cca::{self, CcaResult};
use cepstra_cca::cepstral::{self, AicEntry, CepstralFitSet};
use cepstra_cca::dataset::{self, OutcomeMatrix};
use cepstra_cca::simulate::{self, OrderMode, SimulationDesign, SimulationError, StudyOptions};
use cepstra_cca::spectral::{self, PeriodogramSet};
use serde::Serialize;

use crate::config::{Command, Manifest, RunConfig, MANIFEST_FILE};
use crate::{InputError, ReproductionError};

/// Collects output files written into the run directory.
struct Outputs<'a> {
    dir: &'a Path,
    names: Vec<String>,
}

impl<'a> Outputs<'a> {
    fn new(dir: &'a Path) -> Result<Self> {
        fs::create_dir_all(dir)
            .with_context(|| format!("cannot create output directory {}", dir.display()))?;
        Ok(Self {
            dir,
            names: Vec::new(),
        })
    }

    fn write<F>(&mut self, name: &str, body: F) -> Result<()>
    where
        F: FnOnce(&mut BufWriter<File>) -> Result<()>,
    {
        let path = self.dir.join(name);
        let file =
            File::create(&path).with_context(|| format!("cannot create {}", path.display()))?;
        let mut w = BufWriter::new(file);
        body(&mut w)?;
        w.flush()
            .with_context(|| format!("cannot write {}", path.display()))?;
        self.names.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        self.write(name, |w| {
            serde_json::to_writer_pretty(&mut *w, value)?;
            writeln!(w)?;
            Ok(())
        })
    }

    fn finish(mut self, config: &RunConfig) -> Result<Vec<String>> {
        let names = self.names.clone();
        let manifest = Manifest::new(config.clone(), names);
        self.json(MANIFEST_FILE, &manifest)?;
        Ok(self.names)
    }
}

pub fn execute(config: &RunConfig) -> Result<Vec<String>> {
    config.validate()?;
    match config.command {
        Command::Spectra => spectra(config),
        Command::Fit => fit(config),
        Command::Cca => run_cca(config),
        Command::Simulate => run_simulate(config),
    }
}

fn check_orders(config: &RunConfig, len: usize) -> Result<(), InputError> {
    let max = spectral::max_order(len);
    let hi = match (config.k, config.k_range) {
        (Some(k), _) => k,
        (_, Some((_, hi))) => hi,
        _ => return Ok(()),
    };
    if hi > max {
        return Err(InputError(format!(
            "order {hi} exceeds the largest order {max} for series length {len}"
        )));
    }
    Ok(())
}

struct Fitted {
    fits: CepstralFitSet,
    aic: Option<Vec<AicEntry>>,
}

fn fit_orders(config: &RunConfig, p: &PeriodogramSet, default_aic: bool) -> Result<Option<Fitted>> {
    check_orders(config, p.series_len())?;
    let range = match (config.k, config.k_range) {
        (Some(k), _) => {
            let fits = cepstral::fit_panel(p, k, &config.fit)?;
            if !fits.all_converged() {
                eprintln!(
                    "warning: {} of {} fits did not converge at K={k}",
                    fits.n_failed(),
                    fits.fits.len()
                );
            }
            return Ok(Some(Fitted { fits, aic: None }));
        }
        (_, Some((lo, hi))) => lo..=hi,
        _ if default_aic => cepstral::default_order_range(p.series_len()),
        _ => return Ok(None),
    };
    let selection = cepstral::select_order(p, range, &config.fit)?;
    Ok(Some(Fitted {
        fits: selection.fits,
        aic: Some(selection.table),
    }))
}

fn write_fits(out: &mut Outputs, fitted: &Fitted) -> Result<()> {
    out.write("coefficients.csv", |w| {
        Ok(cepstral::write_coefficients(&fitted.fits, w)?)
    })?;
    out.write("diagnostics.csv", |w| {
        Ok(cepstral::write_diagnostics(&fitted.fits, w)?)
    })?;
    if let Some(table) = &fitted.aic {
        out.write("aic.csv", |w| Ok(cepstral::write_aic_table(table, w)?))?;
    }
    Ok(())
}

fn series_path(config: &RunConfig) -> &Path {
    config.series.as_deref().expect("validated")
}

fn spectra(config: &RunConfig) -> Result<Vec<String>> {
    let panel = dataset::load_series(series_path(config))?;
    let p = spectral::periodogram(&panel);
    let adjusted = p
        .rows()
        .iter()
        .map(|y| spectral::adjusted_log_row(y, spectral::default_log_floor(y)))
        .collect::<Result<Vec<_>, _>>()?;
    let fitted = fit_orders(config, &p, false)?;

    let mut out = Outputs::new(&config.out)?;
    out.write("periodogram.csv", |w| {
        Ok(spectral::write_periodogram(&p, p.rows(), config.sampling_rate, w)?)
    })?;
    out.write("log_periodogram.csv", |w| {
        Ok(spectral::write_periodogram(&p, &adjusted, config.sampling_rate, w)?)
    })?;
    if let Some(fitted) = &fitted {
        let grid = config.band.grid(config.grid);
        out.write("log_spectra.csv", |w| {
            Ok(cepstral::write_log_spectra(&fitted.fits, &grid, config.sampling_rate, w)?)
        })?;
        if let Some(table) = &fitted.aic {
            out.write("aic.csv", |w| Ok(cepstral::write_aic_table(table, w)?))?;
        }
        println!("K = {}", fitted.fits.order);
    }
    out.finish(config)
}

fn fit(config: &RunConfig) -> Result<Vec<String>> {
    let panel = dataset::load_series(series_path(config))?;
    let p = spectral::periodogram(&panel);
    let fitted = fit_orders(config, &p, true)?.expect("default order range");
    let mut out = Outputs::new(&config.out)?;
    write_fits(&mut out, &fitted)?;
    println!(
        "K = {} ({} of {} fits converged)",
        fitted.fits.order,
        fitted.fits.fits.len() - fitted.fits.n_failed(),
        fitted.fits.fits.len()
    );
    out.finish(config)
}

#[derive(Serialize)]
struct CcaSummary<'a> {
    order: usize,
    n_subjects: usize,
    variables: &'a [String],
    standardized: bool,
    result: &'a CcaResult,
}

fn run_cca(config: &RunConfig) -> Result<Vec<String>> {
    let outcomes_path = config.outcomes.as_deref().expect("validated");
    let (panel, z) = dataset::load_panel(series_path(config), outcomes_path)?;
    let z: OutcomeMatrix = if config.standardize {
        dataset::standardize_outcomes(&z)?
    } else {
        z
    };
    let p = spectral::periodogram(&panel);
    let fitted = fit_orders(config, &p, true)?.expect("default order range");
    let fhat = fitted.fits.coefficients();
    let bundle = cca::covariances(&fhat, &z, &config.cca)?;
    let result = cca::cepstral_cca(&bundle, &config.cca)?;
    let scores = cca::canonical_scores(&result, &fhat, &z)?;
    let grid = config.band.grid(config.grid);

    let mut out = Outputs::new(&config.out)?;
    out.json(
        "cca.json",
        &CcaSummary {
            order: fitted.fits.order,
            n_subjects: panel.n_subjects(),
            variables: z.variable_names(),
            standardized: z.is_standardized(),
            result: &result,
        },
    )?;
    out.write("cepstral_weights.csv", |w| {
        Ok(cca::write_cepstral_weights(&result, w)?)
    })?;
    out.write("outcome_weights.csv", |w| {
        Ok(cca::write_outcome_weights(&result, z.variable_names(), w)?)
    })?;
    out.write("weight_functions.csv", |w| {
        Ok(cca::write_weight_functions(&result, &grid, config.sampling_rate, w)?)
    })?;
    out.write("scores.csv", |w| {
        Ok(cca::write_scores(&scores, panel.subjects(), w)?)
    })?;
    write_fits(&mut out, &fitted)?;

    println!("K = {}", fitted.fits.order);
    for (q, rho) in result.correlations.iter().enumerate() {
        println!("rho{} = {rho:.6}", q + 1);
    }
    out.finish(config)
}

fn run_simulate(config: &RunConfig) -> Result<Vec<String>> {
    let settings = config.simulation.as_ref().expect("validated");
    let base = SimulationDesign::default();
    let mut design = SimulationDesign {
        n_subjects: settings.n_subjects,
        series_len: settings.series_len,
        replicates: settings.replicates,
        oversampling: settings.oversampling,
        seed: config.seed.unwrap_or(base.seed),
        ..base
    };
    if settings.null {
        design = design.null();
    }
    design
        .validate()
        .map_err(|e| InputError(e.to_string()))?;
    check_orders(config, design.series_len)?;
    let options = StudyOptions {
        order: match (config.k, config.k_range) {
            (Some(k), _) => OrderMode::Fixed(k),
            (_, Some((lo, hi))) => OrderMode::Aic(Some(lo..=hi)),
            _ => OrderMode::Aic(None),
        },
        fit: config.fit,
        cca: config.cca,
    };

    let (report, failure) = match simulate::run_study(&design, &options) {
        Ok(report) => (report, None),
        Err(SimulationError::TooManyFailures {
            failed,
            replicates,
            report,
        }) => {
            let err = SimulationError::TooManyFailures {
                failed,
                replicates,
                report: report.clone(),
            };
            (*report, Some(err))
        }
        Err(e) => return Err(e.into()),
    };

    let mut out = Outputs::new(&config.out)?;
    out.json("report.json", &report)?;
    out.write("table.csv", |w| Ok(simulate::write_report_table(&report, w)?))?;
    if settings.dump_replicates {
        out.write("replicates.csv", |w| {
            Ok(simulate::write_replicate_errors(&report, w)?)
        })?;
    }
    let names = out.finish(config)?;

    for m in &report.metrics {
        println!(
            "{:>5} {:>10.4} (sd {:.4}, se {:.4})",
            m.name, m.mean, m.sd, m.std_error
        );
    }
    for (k, count) in report.order_counts() {
        println!("K = {k}: {count} replicates");
    }
    if let Some(err) = failure {
        return Err(err.into());
    }
    if settings.check {
        match simulate::check_against_published(&report) {
            Some(checks) => {
                let failed: Vec<String> = checks
                    .iter()
                    .filter(|c| !c.passed())
                    .map(|c| c.name.clone())
                    .collect();
                if !failed.is_empty() {
                    return Err(ReproductionError(failed.join(", ")).into());
                }
            }
            None => {
                return Err(InputError(format!(
                    "no published reference for N={} T={}",
                    design.n_subjects, design.series_len
                ))
                .into())
            }
        }
    }
    Ok(names)
}
