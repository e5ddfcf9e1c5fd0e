//! Median per-input latency of both certifiers across sample sizes.
//!
//! `cargo run --release --example timing_sweep -- [reps]`

use certsmooth::config::RunConfig;
use certsmooth::evaluation::{bench, BenchConfig};

fn main() -> certsmooth::Result<()> {
    let reps: usize = std::env::args().nth(1).map(|s| s.parse().expect("reps")).unwrap_or(20);
    let mut cfg = RunConfig::default();
    cfg.data.train_size = 600;
    cfg.base.train.epochs = 10;
    cfg.surrogate.sample_n = 500;
    cfg.surrogate.train.epochs = 20;

    let (train, test) = cfg.data.generate()?;
    let base = cfg.train_base(&train, cfg.data.num_classes)?.network;
    let sur = cfg.train_surrogate(&cfg.sample_counts(&base, &train)?, &train)?.network;

    let bench_cfg = BenchConfig { reps, ..Default::default() };
    let table = bench(&base, &sur, &test[..10], &cfg.smoothing_params()?, &bench_cfg)?;
    print!("{}", table.to_tsv());
    Ok(())
}
