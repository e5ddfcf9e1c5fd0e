//! Train a small base classifier, sample class counts under noise and fit
//! the count surrogate to them.
//!
//! `cargo run --release --example train_surrogate -- [sigma] [sample_n]`

use certsmooth::config::RunConfig;
use certsmooth::numerics::{js_divergence, SimplexVector};
use certsmooth::surrogate::build_counts_dataset;

fn main() -> certsmooth::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = RunConfig::default();
    cfg.smoothing.sigma = args.next().map(|s| s.parse().expect("sigma")).unwrap_or(0.5);
    cfg.surrogate.sample_n = args.next().map(|s| s.parse().expect("sample_n")).unwrap_or(2_000);
    cfg.data.train_size = 800;
    cfg.data.test_size = 200;
    cfg.base.train.epochs = 30;
    cfg.surrogate.train.epochs = 80;
    cfg.validate()?;

    let (train, test) = cfg.data.generate()?;
    let base = cfg.train_base(&train, cfg.data.num_classes)?.network;
    let counts = cfg.sample_counts(&base, &train)?;
    let fit = cfg.train_surrogate(&counts, &train)?;
    let losses = &fit.report.epoch_losses;
    println!("surrogate JS: epoch 1 {:.5}, last {:.5}", losses[0], losses.last().unwrap());

    // held-out check against fresh counts on the test split
    let held_out = build_counts_dataset(&base, &test, cfg.smoothing.sigma, cfg.surrogate.sample_n, cfg.seed + 1)?;
    let mut total = 0.0;
    for (e, rec) in test.iter().zip(&held_out.records) {
        let target = SimplexVector::from_counts(&rec.counts)?;
        total += js_divergence(&target, &fit.network.forward(&e.features)?)?;
    }
    println!("held-out mean JS: {:.5} (ln 2 = {:.5})", total / test.len() as f64, std::f64::consts::LN_2);
    Ok(())
}
