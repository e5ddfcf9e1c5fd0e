//! The `certsmooth` command line.
//!
//! Every artifact lives in one run directory under a fixed name, with a
//! `s<sigma>` tag on everything that depends on the noise level:
//!
//! | command           | reads                          | writes                     |
//! |-------------------|--------------------------------|----------------------------|
//! | `gen-data`        |                                | `train.csld`, `test.csld`  |
//! | `train-base`      | `train.csld`                   | `base_<tag>.csnw`          |
//! | `sample`          | `train.csld`, base             | `counts_<tag>.csds`        |
//! | `train-surrogate` | `train.csld`, counts           | `surrogate_<tag>.csnw`     |
//! | `certify`         | `test.csld`, base (surrogate)  | `cert_<method>_<tag>.tsv`  |
//! | `evaluate`        | certification logs             | `summary_<tag>.tsv`, `estimation_<tag>.tsv` |
//! | `bench`           | `test.csld`, base, surrogate   | `bench_<tag>.tsv`          |
//! | `variance`        | `test.csld`, base              | `variance_<tag>.tsv`       |

use std::ffi::OsString;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand};

use crate::config::RunConfig;
use crate::data::{load_examples, save_examples, LabeledExample};
use crate::error::{Error, Result};
use crate::evaluation::{
    bench, estimation_report, run_certification, summary_table, variance_study, BenchConfig, CertificationLog,
    EstimationReport, Method,
};
use crate::model::{load_weights, save_weights, Network};
use crate::surrogate::{build_counts_dataset_to_file, CountsDataset};

/// Radii at which `evaluate` reports certified accuracy.
pub const REPORT_RADII: [f64; 5] = [0.0, 0.25, 0.5, 0.75, 1.0];

#[derive(Debug, Parser)]
#[command(name = "certsmooth", version, about = "Randomized-smoothing certification with a learned surrogate")]
pub struct Cli {
    #[command(flatten)]
    pub global: GlobalArgs,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Args)]
pub struct GlobalArgs {
    /// TOML run configuration; defaults apply when omitted.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Run directory (overrides `paths.out_dir`).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Noise standard deviation.
    #[arg(long, global = true)]
    pub sigma: Option<f64>,
    /// Noisy samples: per certification for `certify`/`variance`, per
    /// training input for `sample`.
    #[arg(long, global = true)]
    pub n: Option<u64>,
    /// Selection samples for the smoothed prediction.
    #[arg(long, global = true)]
    pub n0: Option<u64>,
    /// Failure probability.
    #[arg(long, global = true)]
    pub alpha: Option<f64>,
    /// Master seed (beats `CERTSMOOTH_SEED`, which beats the config file).
    #[arg(long, global = true)]
    pub seed: Option<u64>,
    /// Worker threads; 0 uses every core.
    #[arg(long, global = true, default_value_t = 0)]
    pub threads: usize,
    /// Overwrite existing outputs.
    #[arg(long, global = true)]
    pub force: bool,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Write the synthetic train/test split.
    GenData,
    /// Train the base classifier with Gaussian noise augmentation.
    TrainBase,
    /// Sample class counts for every training input.
    Sample {
        /// Continue an interrupted run from its checkpoint file.
        #[arg(long)]
        resume: bool,
    },
    /// Train the surrogate on the sampled counts.
    TrainSurrogate,
    /// Certify the test set.
    Certify {
        #[arg(long, default_value = "mc", value_parser = parse_method)]
        method: Method,
        /// Certify only the first LIMIT test inputs.
        #[arg(long)]
        limit: Option<usize>,
        /// Write 0 for every time_ms so logs compare byte for byte.
        #[arg(long)]
        no_time: bool,
    },
    /// Certified accuracy, ACR and the estimation report from saved logs.
    Evaluate {
        /// Smallest radius for the estimation report.
        #[arg(long, default_value_t = 0.25)]
        r_min: f64,
    },
    /// Time both certifiers across a sweep of N.
    Bench {
        #[arg(long, value_delimiter = ',', default_values_t = [100u64, 1_000, 10_000, 100_000])]
        sweep: Vec<u64>,
        #[arg(long, default_value_t = 20)]
        reps: usize,
        /// Test inputs cycled through the timed repetitions.
        #[arg(long, default_value_t = 20)]
        limit: usize,
    },
    /// Resample class counts to measure their spread.
    Variance {
        #[arg(long, default_value_t = 50)]
        resamples: usize,
        /// Test inputs to study.
        #[arg(long, default_value_t = 50)]
        limit: usize,
    },
}

impl Command {
    pub fn name(&self) -> &'static str {
        match self {
            Command::GenData => "gen-data",
            Command::TrainBase => "train-base",
            Command::Sample { .. } => "sample",
            Command::TrainSurrogate => "train-surrogate",
            Command::Certify { .. } => "certify",
            Command::Evaluate { .. } => "evaluate",
            Command::Bench { .. } => "bench",
            Command::Variance { .. } => "variance",
        }
    }
}

fn parse_method(s: &str) -> std::result::Result<Method, String> {
    s.parse().map_err(|e: Error| e.to_string())
}

/// Process exit code for an error.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::MissingArtifact(_) => 2,
        Error::Format { .. } => 3,
        Error::TrainingDiverged { .. } => 4,
        _ => 1,
    }
}

/// Artifact locations of one run.
#[derive(Debug, Clone)]
pub struct Artifacts {
    pub dir: PathBuf,
    pub tag: String,
}

impl Artifacts {
    pub fn new(dir: impl Into<PathBuf>, cfg: &RunConfig) -> Self {
        Self { dir: dir.into(), tag: cfg.sigma_tag() }
    }

    pub fn train(&self) -> PathBuf {
        self.dir.join("train.csld")
    }
    pub fn test(&self) -> PathBuf {
        self.dir.join("test.csld")
    }
    pub fn base(&self) -> PathBuf {
        self.dir.join(format!("base_{}.csnw", self.tag))
    }
    pub fn counts(&self) -> PathBuf {
        self.dir.join(format!("counts_{}.csds", self.tag))
    }
    pub fn surrogate(&self) -> PathBuf {
        self.dir.join(format!("surrogate_{}.csnw", self.tag))
    }
    pub fn cert_log(&self, method: Method) -> PathBuf {
        self.dir.join(format!("cert_{method}_{}.tsv", self.tag))
    }
    pub fn summary(&self) -> PathBuf {
        self.dir.join(format!("summary_{}.tsv", self.tag))
    }
    pub fn estimation(&self) -> PathBuf {
        self.dir.join(format!("estimation_{}.tsv", self.tag))
    }
    pub fn bench(&self) -> PathBuf {
        self.dir.join(format!("bench_{}.tsv", self.tag))
    }
    pub fn variance(&self) -> PathBuf {
        self.dir.join(format!("variance_{}.tsv", self.tag))
    }
}

/// Config file, then `CERTSMOOTH_SEED`, then flags.
pub fn resolve_config(global: &GlobalArgs) -> Result<RunConfig> {
    let mut cfg = match &global.config {
        Some(path) => RunConfig::load(path)?,
        None => RunConfig::default(),
    };
    cfg.apply_env()?;
    if let Some(seed) = global.seed {
        cfg.seed = seed;
    }
    if let Some(sigma) = global.sigma {
        cfg.smoothing.sigma = sigma;
    }
    if let Some(n0) = global.n0 {
        cfg.smoothing.n0 = n0;
    }
    if let Some(alpha) = global.alpha {
        cfg.smoothing.alpha = alpha;
    }
    if let Some(out) = &global.out {
        cfg.paths.out_dir = out.clone();
    }
    cfg.validate()?;
    Ok(cfg)
}

fn guard(path: &Path, force: bool) -> Result<()> {
    if path.exists() && !force {
        return Err(Error::WouldOverwrite(path.to_path_buf()));
    }
    Ok(())
}

fn reproducibility_stanza(command: &str, cfg: &RunConfig, threads: usize) -> String {
    format!(
        "# certsmooth {} command={command}\n# config_hash={} seed={} data_seed={} sigma={} n={} n0={} alpha={} threads={threads}",
        env!("CARGO_PKG_VERSION"),
        cfg.config_hash(),
        cfg.seed,
        cfg.data.seed,
        cfg.smoothing.sigma,
        cfg.smoothing.n,
        cfg.smoothing.n0,
        cfg.smoothing.alpha,
    )
}

fn load_split(path: &Path, cfg: &RunConfig) -> Result<Vec<LabeledExample>> {
    let (examples, k) = load_examples(path)?;
    if k != cfg.data.num_classes {
        return Err(Error::Config(format!(
            "{} has k = {k}, config says {}",
            path.display(),
            cfg.data.num_classes
        )));
    }
    Ok(examples)
}

/// Parses `args` (including the program name) and runs the command.
pub fn run_from<I, T>(args: I) -> Result<()>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = Cli::try_parse_from(args).map_err(|e| Error::invalid(e.to_string()))?;
    execute(&cli)
}

pub fn execute(cli: &Cli) -> Result<()> {
    let g = &cli.global;
    let mut cfg = resolve_config(g)?;
    // `--n` names the per-command sample budget
    if let Some(n) = g.n {
        match cli.command {
            Command::Sample { .. } => cfg.surrogate.sample_n = n,
            _ => cfg.smoothing.n = n,
        }
        cfg.validate()?;
    }
    eprintln!("{}", reproducibility_stanza(cli.command.name(), &cfg, g.threads));
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(g.threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    pool.install(|| dispatch(&cli.command, &cfg, g.force))
}

fn dispatch(command: &Command, cfg: &RunConfig, force: bool) -> Result<()> {
    let art = Artifacts::new(&cfg.paths.out_dir, cfg);
    match command {
        Command::GenData => {
            std::fs::create_dir_all(&art.dir)?;
            guard(&art.train(), force)?;
            guard(&art.test(), force)?;
            let (train, test) = cfg.data.generate()?;
            save_examples(art.train(), &train, cfg.data.num_classes)?;
            save_examples(art.test(), &test, cfg.data.num_classes)?;
            log::info!("wrote {} train and {} test examples", train.len(), test.len());
        }
        Command::TrainBase => {
            guard(&art.base(), force)?;
            let train = load_split(&art.train(), cfg)?;
            let outcome = cfg.train_base(&train, cfg.data.num_classes)?;
            log::info!("base final loss {:?}", outcome.report.epoch_losses.last());
            save_weights(&outcome.network, art.base())?;
        }
        Command::Sample { resume } => {
            if !resume {
                guard(&art.counts(), force)?;
            }
            let train = load_split(&art.train(), cfg)?;
            let f = load_weights(art.base())?;
            let ds = build_counts_dataset_to_file(
                &f,
                &train,
                cfg.smoothing.sigma,
                cfg.surrogate.sample_n,
                cfg.seed,
                art.counts(),
                *resume,
            )?;
            log::info!("counts dataset has {} records", ds.records.len());
        }
        Command::TrainSurrogate => {
            guard(&art.surrogate(), force)?;
            let train = load_split(&art.train(), cfg)?;
            let ds = CountsDataset::load(art.counts())?;
            if ds.header.sigma != cfg.smoothing.sigma {
                return Err(Error::Config(format!(
                    "counts were sampled at sigma {}, config says {}",
                    ds.header.sigma, cfg.smoothing.sigma
                )));
            }
            let outcome = cfg.train_surrogate(&ds, &train)?;
            log::info!("surrogate final loss {:?}", outcome.report.epoch_losses.last());
            save_weights(&outcome.network, art.surrogate())?;
        }
        Command::Certify { method, limit, no_time } => {
            let out = art.cert_log(*method);
            guard(&out, force)?;
            let test = load_split(&art.test(), cfg)?;
            let test = &test[..limit.unwrap_or(test.len()).min(test.len())];
            let f = load_weights(art.base())?;
            let h = match method {
                Method::Surrogate => Some(load_weights(art.surrogate())?),
                _ => None,
            };
            let mut log = run_certification(&f, h.as_ref(), test, &cfg.smoothing_params()?, *method)?;
            if *no_time {
                log = log.without_timings();
            }
            log.save(&out)?;
        }
        Command::Evaluate { r_min } => {
            guard(&art.summary(), force)?;
            guard(&art.estimation(), force)?;
            let mut logs = Vec::new();
            for m in [Method::Mc, Method::Surrogate, Method::Baseline] {
                match CertificationLog::load(art.cert_log(m)) {
                    Ok(log) => logs.push((m, log)),
                    Err(Error::MissingArtifact(_)) => {}
                    Err(e) => return Err(e),
                }
            }
            if logs.is_empty() {
                return Err(Error::MissingArtifact(art.cert_log(Method::Mc)));
            }
            let named: Vec<(&str, &CertificationLog)> = logs.iter().map(|(m, l)| (m.name(), l)).collect();
            let summary = summary_table(&named, &REPORT_RADII);
            print!("{summary}");
            std::fs::write(art.summary(), summary)?;
            let find = |m: Method| logs.iter().find(|(x, _)| *x == m).map(|(_, l)| l);
            if let (Some(mc), Some(sur)) = (find(Method::Mc), find(Method::Surrogate)) {
                let report = estimation_report(&art.tag, mc, sur, *r_min)?;
                let table = EstimationReport::to_tsv(&[report]);
                print!("{table}");
                std::fs::write(art.estimation(), table)?;
            }
        }
        Command::Bench { sweep, reps, limit } => {
            guard(&art.bench(), force)?;
            let test = load_split(&art.test(), cfg)?;
            let test = &test[..(*limit).clamp(1, test.len())];
            let f = load_weights(art.base())?;
            let h: Network = load_weights(art.surrogate())?;
            let bcfg = BenchConfig { n_sweep: sweep.clone(), reps: *reps, ..BenchConfig::default() };
            let table = bench(&f, &h, test, &cfg.smoothing_params()?, &bcfg)?;
            let text = table.to_tsv();
            print!("{text}");
            std::fs::write(art.bench(), text)?;
        }
        Command::Variance { resamples, limit } => {
            guard(&art.variance(), force)?;
            let test = load_split(&art.test(), cfg)?;
            let test = &test[..(*limit).clamp(1, test.len())];
            let f = load_weights(art.base())?;
            let study = variance_study(&f, test, cfg.smoothing.sigma, cfg.smoothing.n, *resamples, cfg.seed)?;
            println!("normalized variance: {:.4}% of N", study.normalized_variance_pct());
            std::fs::write(art.variance(), study.to_tsv())?;
        }
    }
    Ok(())
}

/// Entry point of the binary: parses `std::env::args`, runs, and maps the
/// outcome to an exit code.
pub fn main() -> i32 {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            let code = if e.use_stderr() { 1 } else { 0 };
            let _ = e.print();
            return code;
        }
    };
    match execute(&cli) {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            exit_code(&e)
        }
    }
}
