//! Radius error of the surrogate certifier relative to Monte Carlo, split
//! into under- and over-estimates. Reads two certification logs written by
//! `certsmooth certify`.
//!
//! `cargo run --example estimation_report -- <mc.tsv> <surrogate.tsv> [r_min]`

use certsmooth::evaluation::{estimation_report, median_relative_error, CertificationLog, EstimationReport};

fn main() -> certsmooth::Result<()> {
    let args: Vec<String> = std::env::args().skip(1).collect();
    if args.len() < 2 {
        eprintln!("usage: estimation_report <mc.tsv> <surrogate.tsv> [r_min]");
        std::process::exit(1);
    }
    let r_min: f64 = args.get(2).map(|s| s.parse().expect("r_min")).unwrap_or(0.25);
    let reference = CertificationLog::load(&args[0])?;
    let predicted = CertificationLog::load(&args[1])?;

    let report = estimation_report("mlp", &reference, &predicted, r_min)?;
    print!("{}", EstimationReport::to_tsv(&[report]));
    match median_relative_error(&reference, &predicted, r_min)? {
        Some(m) => println!("median relative error: {:.2}%", 100.0 * m),
        None => println!("no eligible pairs at r_min = {r_min}"),
    }
    Ok(())
}
