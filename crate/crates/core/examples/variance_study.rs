//! Spread of sampled class frequencies against the binomial model.
//!
//! `cargo run --release --example variance_study -- [n] [resamples]`

use certsmooth::config::RunConfig;
use certsmooth::evaluation::variance_study;

fn main() -> certsmooth::Result<()> {
    let mut args = std::env::args().skip(1);
    let n: u64 = args.next().map(|s| s.parse().expect("n")).unwrap_or(2_000);
    let resamples: usize = args.next().map(|s| s.parse().expect("resamples")).unwrap_or(30);
    let mut cfg = RunConfig::default();
    cfg.smoothing.sigma = 0.5;
    cfg.data.train_size = 800;
    cfg.base.train.epochs = 20;

    let (train, test) = cfg.data.generate()?;
    let base = cfg.train_base(&train, cfg.data.num_classes)?.network;
    let study = variance_study(&base, &test[..30], cfg.smoothing.sigma, n, resamples, cfg.seed)?;

    for (c, v) in study.per_class_mean_variance().iter().enumerate() {
        println!("class {c}: mean sample variance {v:.6}");
    }
    println!("normalized variance: {:.4}%", study.normalized_variance_pct());
    let (frac, cells) = study.fraction_within(3.0, 0.05, 0.95);
    println!("{:.1}% of {cells} ambiguous cells within 3x of p(1-p)/N", 100.0 * frac);
    Ok(())
}
