//! Certify the same inputs with Monte Carlo sampling and with the trained
//! surrogate, side by side.
//!
//! `cargo run --release --example accelerated_certify -- [sigma] [count]`

use std::time::Instant;

use certsmooth::config::RunConfig;
use certsmooth::smoothing::certify_mc;
use certsmooth::surrogate::accelerated_certify;

fn main() -> certsmooth::Result<()> {
    let mut args = std::env::args().skip(1);
    let mut cfg = RunConfig::default();
    cfg.smoothing.sigma = args.next().map(|s| s.parse().expect("sigma")).unwrap_or(0.25);
    let count: usize = args.next().map(|s| s.parse().expect("count")).unwrap_or(15);
    cfg.data.train_size = 1000;
    cfg.base.train.epochs = 30;
    cfg.surrogate.sample_n = 2_000;
    cfg.surrogate.train.epochs = 100;

    let (train, test) = cfg.data.generate()?;
    let base = cfg.train_base(&train, cfg.data.num_classes)?.network;
    let sur = cfg.train_surrogate(&cfg.sample_counts(&base, &train)?, &train)?.network;
    let params = cfg.smoothing_params()?;

    println!("id\tlabel\tmc\tmc_r\tmc_ms\tsur\tsur_r\tsur_ms\tabstain");
    for e in test.iter().take(count) {
        let p = params.for_example(e.id);
        let t = Instant::now();
        let mc = certify_mc(&base, &e.features, &p)?;
        let mc_ms = t.elapsed().as_secs_f64() * 1e3;
        let t = Instant::now();
        let fast = accelerated_certify(&base, &sur, &e.features, &p)?;
        let sur_ms = t.elapsed().as_secs_f64() * 1e3;
        let show = |d: certsmooth::smoothing::Decision| d.class().map_or("-".to_string(), |c| c.to_string());
        println!(
            "{}\t{}\t{}\t{:.3}\t{mc_ms:.2}\t{}\t{:.3}\t{sur_ms:.3}\t{:?}",
            e.id,
            e.label,
            show(mc.decision),
            mc.radius,
            show(fast.decision),
            fast.radius,
            fast.abstain_reason
        );
    }
    Ok(())
}
