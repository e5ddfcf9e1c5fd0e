//! Generate data, train a base classifier, sample counts, train the
//! surrogate and compare the three certifiers on the test set.
//!
//! `cargo run --release --example full_pipeline -- [sigma] [test_limit]`

use std::time::Instant;

use certsmooth::config::RunConfig;
use certsmooth::evaluation::{
    average_certified_radius, estimation_report, median_relative_error, run_certification, summary_table,
    EstimationReport, Method,
};
use certsmooth::model::Network;

fn main() -> certsmooth::error::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = RunConfig::default();
    if let Some(s) = args.next() {
        cfg.smoothing.sigma = s.parse().expect("sigma");
    }
    let limit: usize = args.next().map(|s| s.parse().expect("limit")).unwrap_or(usize::MAX);
    cfg.validate()?;

    let t = Instant::now();
    let (train, test) = cfg.data.generate()?;
    let test = &test[..limit.min(test.len())];
    let base = cfg.train_base(&train, cfg.data.num_classes)?;
    println!(
        "base: final loss {:.4} ({:.1}s)",
        base.report.epoch_losses.last().unwrap(),
        t.elapsed().as_secs_f64()
    );

    let t = Instant::now();
    let counts = cfg.sample_counts(&base.network, &train)?;
    println!("sampled {} records at N = {} ({:.1}s)", counts.records.len(), counts.header.n_total, t.elapsed().as_secs_f64());

    let t = Instant::now();
    let sur = cfg.train_surrogate(&counts, &train)?;
    println!(
        "surrogate: final JS {:.5} ({:.1}s)",
        sur.report.epoch_losses.last().unwrap(),
        t.elapsed().as_secs_f64()
    );

    let params = cfg.smoothing_params()?;
    let mut logs = Vec::new();
    for method in [Method::Mc, Method::Surrogate, Method::Baseline] {
        let t = Instant::now();
        let log = run_certification(&base.network, Some::<&Network>(&sur.network), test, &params, method)?;
        println!("{method}: ACR {:.4} ({:.1}s)", average_certified_radius(&log), t.elapsed().as_secs_f64());
        logs.push(log);
    }
    let named: Vec<(&str, _)> = vec![("mc", &logs[0]), ("surrogate", &logs[1]), ("baseline", &logs[2])];
    print!("{}", summary_table(&named, &[0.0, 0.25, 0.5, 0.75, 1.0]));
    let report = estimation_report("mlp", &logs[0], &logs[1], 0.25)?;
    print!("{}", EstimationReport::to_tsv(&[report]));
    if let Some(m) = median_relative_error(&logs[0], &logs[1], 0.25)? {
        println!("median relative radius error: {:.1}%", 100.0 * m);
    }
    Ok(())
}
