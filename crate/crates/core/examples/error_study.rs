//! Runs the replicate error study for one (N, T) setting and prints the
//! summary next to the published values.
//!
//! cargo run --release --example error_study -- 100 100 500

use std::time::Instant;

use cepstra_cca::simulate::{published_reference, run_study, SimulationDesign, StudyOptions};

fn main() {
    let args: Vec<usize> = std::env::args()
        .skip(1)
        .map(|a| a.parse().expect("integer argument"))
        .collect();
    let design = SimulationDesign {
        n_subjects: *args.first().unwrap_or(&100),
        series_len: *args.get(1).unwrap_or(&100),
        replicates: *args.get(2).unwrap_or(&100),
        oversampling: *args.get(3).unwrap_or(&SimulationDesign::default().oversampling),
        ..SimulationDesign::default()
    };
    let start = Instant::now();
    let report = run_study(&design, &StudyOptions::default()).expect("study");
    let reference = published_reference(design.n_subjects, design.series_len);
    println!(
        "N={} T={} replicates={} failures={} ({:.1?})",
        design.n_subjects,
        design.series_len,
        design.replicates,
        report.failures.len(),
        start.elapsed()
    );
    for (i, m) in report.metrics.iter().enumerate() {
        let published = reference.map(|r| format!("{:.2} ({:.2})", r[i].0, r[i].1));
        println!(
            "{:>5}  {:>6.3} ({:>6.3}) se {:.3}   published {}",
            m.name,
            m.mean,
            m.sd,
            m.std_error,
            published.unwrap_or_default()
        );
    }
    println!("selected orders: {:?}", report.order_counts());
}
