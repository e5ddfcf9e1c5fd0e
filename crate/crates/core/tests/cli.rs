use std::fs;
use std::path::Path;
use std::process::Command;

use certsmooth::cli::run_from;
use certsmooth::evaluation::{average_certified_radius, CertificationLog};
use certsmooth::Error;

const SMALL: &str = r#"
[data]
train_size = 200
test_size = 40
[base.train]
epochs = 20
[surrogate]
sample_n = 1000
hidden = [32]
[surrogate.train]
epochs = 20
[smoothing]
n = 2000
"#;

fn setup() -> (tempfile::TempDir, String) {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("small.toml");
    fs::write(&cfg, SMALL).unwrap();
    (dir, cfg.to_str().unwrap().to_string())
}

fn run(cfg: &str, out: &Path, args: &[&str]) -> certsmooth::Result<()> {
    let mut all = vec!["certsmooth", "--config", cfg, "--out", out.to_str().unwrap()];
    all.extend_from_slice(args);
    run_from(all)
}

fn bin(cfg: &str, out: &Path, args: &[&str]) -> std::process::Output {
    Command::new(env!("CARGO_BIN_EXE_certsmooth"))
        .args(["--config", cfg, "--out", out.to_str().unwrap()])
        .args(args)
        .env_remove("CERTSMOOTH_SEED")
        .output()
        .unwrap()
}

#[test]
fn full_pipeline_produces_every_artifact() {
    let (dir, cfg) = setup();
    let out = dir.path().join("run");
    for args in [
        vec!["gen-data"],
        vec!["train-base"],
        vec!["sample"],
        vec!["train-surrogate"],
        vec!["certify", "--method", "mc"],
        vec!["certify", "--method", "surrogate"],
        vec!["certify", "--method", "baseline"],
        vec!["evaluate"],
        vec!["certify", "--method", "surrogate", "--limit", "25", "--force"],
        vec!["variance", "--limit", "3", "--resamples", "5"],
        vec!["bench", "--sweep", "100,1000", "--limit", "2"],
    ] {
        run(&cfg, &out, &args).unwrap_or_else(|e| panic!("{args:?}: {e}"));
    }
    let train = fs::read_to_string(out.join("train.csld")).unwrap();
    assert_eq!(train.lines().count(), 201);
    assert!(train.lines().skip(1).all(|l| l.split(',').nth(1).unwrap().parse::<usize>().unwrap() < 4));
    let mc = CertificationLog::load(out.join("cert_mc_s0.25.tsv")).unwrap();
    assert_eq!(mc.len(), 40);
    assert!(average_certified_radius(&mc) > 0.0);
    assert_eq!(CertificationLog::load(out.join("cert_surrogate_s0.25.tsv")).unwrap().len(), 25);
    for f in ["summary_s0.25.tsv", "estimation_s0.25.tsv", "variance_s0.25.tsv", "bench_s0.25.tsv"] {
        assert!(out.join(f).exists(), "{f}");
    }
}

#[test]
fn mc_at_one_hundred_samples_equals_baseline() {
    let (dir, cfg) = setup();
    let out = dir.path().join("run");
    for args in [vec!["gen-data"], vec!["train-base"]] {
        run(&cfg, &out, &args).unwrap();
    }
    run(&cfg, &out, &["certify", "--method", "baseline", "--limit", "30"]).unwrap();
    run(&cfg, &out, &["certify", "--method", "mc", "--n", "100", "--limit", "30"]).unwrap();
    let a = CertificationLog::load(out.join("cert_baseline_s0.25.tsv")).unwrap();
    let b = CertificationLog::load(out.join("cert_mc_s0.25.tsv")).unwrap();
    assert_eq!(a.params, b.params);
    for (x, y) in a.rows.iter().zip(&b.rows) {
        assert_eq!((x.example_id, x.decision, x.radius, x.correct), (y.example_id, y.decision, y.radius, y.correct));
    }
}

#[test]
fn outputs_are_not_overwritten_without_force() {
    let (dir, cfg) = setup();
    let out = dir.path().join("run");
    run(&cfg, &out, &["gen-data"]).unwrap();
    let first = fs::read(out.join("test.csld")).unwrap();
    assert!(matches!(run(&cfg, &out, &["gen-data"]), Err(Error::WouldOverwrite(_))));
    run(&cfg, &out, &["gen-data", "--force"]).unwrap();
    assert_eq!(fs::read(out.join("test.csld")).unwrap(), first);
}

#[test]
fn certify_does_not_touch_its_inputs() {
    let (dir, cfg) = setup();
    let out = dir.path().join("run");
    for args in [vec!["gen-data"], vec!["train-base"]] {
        run(&cfg, &out, &args).unwrap();
    }
    let snapshot = |p: &str| fs::read(out.join(p)).unwrap();
    let (test, base) = (snapshot("test.csld"), snapshot("base_s0.25.csnw"));
    run(&cfg, &out, &["certify", "--limit", "5", "--no-time"]).unwrap();
    assert_eq!(snapshot("test.csld"), test);
    assert_eq!(snapshot("base_s0.25.csnw"), base);
    let log = fs::read_to_string(out.join("cert_mc_s0.25.tsv")).unwrap();
    assert!(log.lines().skip(2).all(|l| l.split('\t').nth(5) == Some("0.000")));
}

#[test]
fn sample_resumes_from_a_partial_file() {
    let (dir, cfg) = setup();
    let out = dir.path().join("run");
    for args in [vec!["gen-data"], vec!["train-base"], vec!["sample"]] {
        run(&cfg, &out, &args).unwrap();
    }
    let path = out.join("counts_s0.25.csds");
    let full = fs::read_to_string(&path).unwrap();
    let cut: String = full.lines().take(57).map(|l| format!("{l}\n")).collect();
    fs::write(&path, cut).unwrap();
    assert!(matches!(run(&cfg, &out, &["sample"]), Err(Error::WouldOverwrite(_))));
    run(&cfg, &out, &["sample", "--resume"]).unwrap();
    assert_eq!(fs::read_to_string(&path).unwrap(), full);
}

#[test]
fn exit_codes_are_categorized() {
    let (dir, cfg) = setup();
    let out = dir.path().join("run");

    let missing = bin(&cfg, &out, &["train-base"]);
    assert_eq!(missing.status.code(), Some(2), "{}", String::from_utf8_lossy(&missing.stderr));

    assert_eq!(bin(&cfg, &out, &["gen-data"]).status.code(), Some(0));
    fs::write(out.join("base_s0.25.csnw"), b"not a network").unwrap();
    let corrupt = bin(&cfg, &out, &["certify", "--limit", "2"]);
    assert_eq!(corrupt.status.code(), Some(3), "{}", String::from_utf8_lossy(&corrupt.stderr));

    let diverging = dir.path().join("diverge.toml");
    fs::write(&diverging, format!("{SMALL}\n[base.train]\nlearning_rate = 1e306\nbatch_size = 1\nepochs = 3\n").replacen("[base.train]\nepochs = 20\n", "", 1)).unwrap();
    let div = bin(diverging.to_str().unwrap(), &out, &["train-base", "--force"]);
    assert_eq!(div.status.code(), Some(4), "{}", String::from_utf8_lossy(&div.stderr));

    let bad = dir.path().join("bad.toml");
    fs::write(&bad, "[smoothing]\nsigmaa = 1.0\n").unwrap();
    assert_eq!(bin(bad.to_str().unwrap(), &out, &["gen-data"]).status.code(), Some(1));
    assert_eq!(bin(&cfg, &out, &["certify", "--method", "fast"]).status.code(), Some(1));
}

#[test]
fn stanza_reports_seed_overrides_and_config_hash() {
    let (dir, cfg) = setup();
    let out = dir.path().join("run");
    let stanza = |envseed: Option<&str>, extra: &[&str]| {
        let mut cmd = Command::new(env!("CARGO_BIN_EXE_certsmooth"));
        cmd.args(["--config", &cfg, "--out", out.to_str().unwrap(), "gen-data", "--force"]).args(extra);
        match envseed {
            Some(s) => cmd.env("CERTSMOOTH_SEED", s),
            None => cmd.env_remove("CERTSMOOTH_SEED"),
        };
        let o = cmd.output().unwrap();
        assert!(o.status.success());
        let err = String::from_utf8(o.stderr).unwrap();
        err.lines().find(|l| l.starts_with("# config_hash=")).unwrap().to_string()
    };
    let plain = stanza(None, &[]);
    assert!(plain.contains(" seed=0 "));
    assert_eq!(plain, stanza(None, &[]));
    let env = stanza(Some("17"), &[]);
    assert!(env.contains(" seed=17 "));
    assert_ne!(plain.split(' ').nth(1), env.split(' ').nth(1));
    assert!(stanza(Some("17"), &["--seed", "5"]).contains(" seed=5 "));
    // the output directory is not part of the hash
    let moved = Command::new(env!("CARGO_BIN_EXE_certsmooth"))
        .args(["--config", &cfg, "--out", dir.path().join("other").to_str().unwrap(), "gen-data"])
        .env_remove("CERTSMOOTH_SEED")
        .output()
        .unwrap();
    let moved = String::from_utf8(moved.stderr).unwrap();
    assert!(moved.contains(plain.split(' ').next().unwrap()));
}
