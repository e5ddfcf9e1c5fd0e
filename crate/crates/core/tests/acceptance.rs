//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each,
//! and exits nonzero if any failed.

mod common;

use std::collections::HashMap;
use std::fs;
use std::path::Path;
use std::time::{Duration, Instant};

use certsmooth::cli::run_from;
use certsmooth::config::RunConfig;
use certsmooth::data::LabeledExample;
use certsmooth::evaluation::{
    average_certified_radius, bench, estimation_report, median_relative_error, run_certification, variance_study,
    BenchConfig, CertificationLog, Method,
};
use certsmooth::model::{analytic_gradient, Head, Loss, Network};
use certsmooth::numerics::{argmax, clopper_pearson_lower, gaussian_cdf, gaussian_quantile};
use certsmooth::smoothing::{predict, Decision};
use certsmooth::surrogate::{accelerated_certify, reconstruct_counts};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Binomial, Distribution};

const SIGMAS: [f64; 2] = [0.25, 0.5];

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict { pass, detail: detail.into() }
}

/// Everything the default desk-scale run produces for one noise level.
struct Pipeline {
    cfg: RunConfig,
    test: Vec<LabeledExample>,
    base: Network,
    surrogate: Network,
    mc: CertificationLog,
    sur: CertificationLog,
    baseline: CertificationLog,
    elapsed: Duration,
}

fn run_pipeline(sigma: f64) -> Pipeline {
    let start = Instant::now();
    let mut cfg = RunConfig::default();
    cfg.smoothing.sigma = sigma;
    let (train, test) = cfg.data.generate().unwrap();
    let base = cfg.train_base(&train, cfg.data.num_classes).unwrap().network;
    let counts = cfg.sample_counts(&base, &train).unwrap();
    let surrogate = cfg.train_surrogate(&counts, &train).unwrap().network;
    let params = cfg.smoothing_params().unwrap();
    let certify = |m| run_certification(&base, Some(&surrogate), &test, &params, m).unwrap();
    let (mc, sur, baseline) = (certify(Method::Mc), certify(Method::Surrogate), certify(Method::Baseline));
    Pipeline { cfg, test, base, surrogate, mc, sur, baseline, elapsed: start.elapsed() }
}

fn criterion_1() -> Verdict {
    let start = Instant::now();
    let mut worst = 0.0f64;
    for n in [10u64, 100, 1000, 100_000] {
        for alpha in [0.05, 0.01, 0.001] {
            for k in [0, 1, n / 2, n - 1, n] {
                let got = clopper_pearson_lower(k, n, alpha).unwrap();
                worst = worst.max((got - common::cp_lower(k, n, alpha)).abs());
            }
        }
    }
    let mut round_trip = 0.0f64;
    for i in 0..=12_000 {
        let x = -6.0 + i as f64 * 1e-3;
        let back = gaussian_quantile(gaussian_cdf(x).unwrap()).unwrap();
        round_trip = round_trip.max((back - x).abs());
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-9 && round_trip <= 1e-8 && secs < 30.0,
        format!("max |CP - oracle| = {worst:.2e}, max Φ round-trip error = {round_trip:.2e}, {secs:.1}s"),
    )
}

fn criterion_2() -> Verdict {
    let start = Instant::now();
    let mut worst_margin = f64::INFINITY;
    let mut cells = Vec::new();
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    for n in [100u64, 10_000] {
        for p in [0.6, 0.9, 0.99] {
            for alpha in [0.05, 0.001] {
                let dist = Binomial::new(n, p).unwrap();
                let mut cache: HashMap<u64, f64> = HashMap::new();
                let draws = 10_000;
                let covered = (0..draws)
                    .filter(|_| {
                        let k = dist.sample(&mut rng);
                        let lo = *cache.entry(k).or_insert_with(|| clopper_pearson_lower(k, n, alpha).unwrap());
                        lo <= p
                    })
                    .count();
                let coverage = covered as f64 / draws as f64;
                worst_margin = worst_margin.min(coverage - (1.0 - alpha - 0.01));
                cells.push(format!("{coverage:.4}"));
            }
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst_margin >= 0.0 && secs < 60.0,
        format!("coverage per cell [{}], worst margin {worst_margin:+.4}, {secs:.1}s", cells.join(" ")),
    )
}

fn criterion_3() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst = 0.0f64;
    let trials = 20;
    for t in 0..trials {
        let d = rng.random_range(2..7);
        let k = rng.random_range(2..6);
        let mut dims = vec![d];
        for _ in 0..rng.random_range(1..3) {
            dims.push(rng.random_range(3..9));
        }
        dims.push(k);
        let net = Network::new(&dims, Head::SimplexPredictor, 1000 + t).unwrap();
        let x: Vec<f64> = (0..d).map(|_| rng.random_range(-2.0..2.0)).collect();
        let raw: Vec<f64> = (0..k).map(|_| rng.random_range(0.02..1.0)).collect();
        let total: f64 = raw.iter().sum();
        let target: Vec<f64> = raw.iter().map(|v| v / total).collect();
        for loss in [Loss::CrossEntropy, Loss::JensenShannon] {
            let analytic = analytic_gradient(&net, &x, &target, loss).unwrap().flatten();
            let numeric = common::numeric_gradient(&net, &x, &target, loss, 1e-5);
            worst = worst.max(common::max_relative_error(&analytic, &numeric, 1e-6));
        }
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst < 1e-4 && secs < 30.0,
        format!("{trials} random nets x 2 losses, max relative error {worst:.2e}, {secs:.1}s"),
    )
}

fn criterion_4(runs: &[Pipeline]) -> Verdict {
    let mut certified = 0;
    let mut violations = 0;
    let mut inputs = 0;
    for run in runs {
        let params = run.cfg.smoothing_params().unwrap();
        for (e, row) in run.test.iter().zip(&run.sur.rows) {
            inputs += 1;
            let p = params.for_example(e.id);
            let out = accelerated_certify(&run.base, &run.surrogate, &e.features, &p).unwrap();
            if out.decision != row.decision || out.radius != row.radius {
                violations += 1;
            }
            if let Decision::Class(c) = out.decision {
                certified += 1;
                let predicted = predict(&run.base, &e.features, &p).unwrap();
                let top = argmax(&reconstruct_counts(run.surrogate.forward(&e.features).unwrap().as_slice(), p.n));
                let radius = p.sigma * gaussian_quantile(out.p_a_lower).unwrap();
                if predicted != Decision::Class(c) || top != c || out.p_a_lower <= 0.5 || out.radius != radius {
                    violations += 1;
                }
            } else if out.radius != 0.0 {
                violations += 1;
            }
        }
    }
    verdict(
        violations == 0 && inputs >= 500,
        format!("{inputs} inputs, {certified} certified, {violations} violations"),
    )
}

fn criterion_5(runs: &[Pipeline]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    let mut total = Duration::ZERO;
    for run in runs {
        let (mc, sur, base) = (
            average_certified_radius(&run.mc),
            average_certified_radius(&run.sur),
            average_certified_radius(&run.baseline),
        );
        pass &= sur >= 0.8 * mc && sur > base;
        total += run.elapsed;
        parts.push(format!(
            "σ={}: ACR mc {mc:.3} / surrogate {sur:.3} / baseline {base:.3} (ratio {:.3})",
            run.cfg.smoothing.sigma,
            sur / mc
        ));
    }
    pass &= total < Duration::from_secs(600);
    verdict(pass, format!("{}; pipelines {:.0}s", parts.join("; "), total.as_secs_f64()))
}

fn criterion_6(run: &Pipeline) -> Verdict {
    let params = run.cfg.smoothing_params().unwrap();
    let cfg = BenchConfig::default();
    let table = bench(&run.base, &run.surrogate, &run.test[..20], &params, &cfg).unwrap();
    let ms = |m, n| table.get(m, n).unwrap().median.as_secs_f64() * 1e3;
    let sur: Vec<f64> = cfg.n_sweep.iter().map(|&n| ms(Method::Surrogate, n)).collect();
    let spread = sur.iter().cloned().fold(0.0, f64::max) / sur.iter().cloned().fold(f64::INFINITY, f64::min);
    let mc_ratio = ms(Method::Mc, 100_000) / ms(Method::Mc, 1_000);
    let single_pass = table
        .rows
        .iter()
        .filter(|r| r.method == Method::Surrogate)
        .all(|r| r.forwards_per_cert == 1.0);
    let flagged = table.rows.iter().any(|r| r.below_resolution);
    verdict(
        spread <= 2.0 && mc_ratio >= 50.0 && single_pass && !flagged,
        format!(
            "surrogate ms {:?} (max/min {spread:.2}), mc N=1e5/N=1e3 = {mc_ratio:.1}, one forward per call: {single_pass}",
            sur.iter().map(|v| (v * 1000.0).round() / 1000.0).collect::<Vec<_>>()
        ),
    )
}

fn criterion_7(runs: &[Pipeline]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for run in runs {
        let sigma = run.cfg.smoothing.sigma;
        let study = variance_study(&run.base, &run.test[..50], sigma, 10_000, 50, run.cfg.seed).unwrap();
        let (frac, cells) = study.fraction_within(3.0, 0.05, 0.95);
        pass &= cells > 0 && frac >= 0.95;
        parts.push(format!(
            "σ={sigma}: {:.1}% of {cells} cells within 3x, normalized variance {:.3}%",
            100.0 * frac,
            study.normalized_variance_pct()
        ));
    }
    verdict(pass, parts.join("; "))
}

fn criterion_8(runs: &[Pipeline]) -> Verdict {
    let mut pass = true;
    let mut parts = Vec::new();
    for run in runs {
        let rep = estimation_report("mlp", &run.mc, &run.sur, 0.25).unwrap();
        let cols = rep.columns();
        let partition = rep.under.count + rep.over.count + rep.ties == rep.eligible;
        let median = median_relative_error(&run.mc, &run.sur, 0.25).unwrap();
        pass &= cols.len() == 10 && cols.iter().all(|v| v.is_finite()) && partition;
        pass &= median.is_some_and(|m| m <= 0.25);
        parts.push(format!(
            "σ={}: {} eligible (under {:.1}% / over {:.1}% / tie {:.1}%), median relative error {:.1}%",
            run.cfg.smoothing.sigma,
            rep.eligible,
            rep.under.share_pct,
            rep.over.share_pct,
            rep.tie_pct(),
            100.0 * median.unwrap_or(f64::NAN)
        ));
    }
    verdict(pass, parts.join("; "))
}

fn cli_pipeline(dir: &Path) {
    let out = dir.to_str().unwrap();
    for args in [
        vec!["gen-data"],
        vec!["train-base"],
        vec!["sample"],
        vec!["train-surrogate"],
        vec!["certify", "--method", "mc", "--no-time"],
        vec!["certify", "--method", "surrogate", "--no-time"],
        vec!["certify", "--method", "baseline", "--no-time"],
    ] {
        let mut all = vec!["certsmooth", "--threads", "1", "--seed", "7", "--out", out];
        all.extend(args);
        run_from(all).unwrap();
    }
}

fn criterion_9() -> Verdict {
    let start = Instant::now();
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    cli_pipeline(a.path());
    cli_pipeline(b.path());
    let files = [
        "counts_s0.25.csds",
        "cert_mc_s0.25.tsv",
        "cert_surrogate_s0.25.tsv",
        "cert_baseline_s0.25.tsv",
        "base_s0.25.csnw",
        "surrogate_s0.25.csnw",
    ];
    let differing: Vec<&str> = files
        .iter()
        .copied()
        .filter(|f| fs::read(a.path().join(f)).unwrap() != fs::read(b.path().join(f)).unwrap())
        .collect();
    verdict(
        differing.is_empty(),
        format!(
            "{} artifacts compared, differing: {:?}, {:.0}s",
            files.len(),
            differing,
            start.elapsed().as_secs_f64()
        ),
    )
}

fn main() {
    let mut results: Vec<(u8, &str, Verdict)> = Vec::new();
    let mut report = |id, name, v: Verdict| {
        println!("[{}] {id} {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
        results.push((id, name, v));
    };

    report(1, "statistical-kernel oracle equivalence", criterion_1());
    report(2, "Clopper-Pearson coverage", criterion_2());
    report(3, "gradient correctness", criterion_3());
    let runs: Vec<Pipeline> = SIGMAS.iter().map(|&s| run_pipeline(s)).collect();
    report(4, "accelerated certification soundness", criterion_4(&runs));
    report(5, "ACR trend", criterion_5(&runs));
    report(6, "complexity", criterion_6(&runs[0]));
    report(7, "sampling variance", criterion_7(&runs));
    report(8, "estimation report", criterion_8(&runs));
    report(9, "determinism", criterion_9());

    let failed: Vec<u8> = results.iter().filter(|(_, _, v)| !v.pass).map(|(id, _, _)| *id).collect();
    println!("acceptance: {}/{} criteria passed", results.len() - failed.len(), results.len());
    if !failed.is_empty() {
        std::process::exit(1);
    }
}
