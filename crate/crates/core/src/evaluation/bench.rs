use std::fmt::Write as _;
use std::time::{Duration, Instant};

use super::Method;
use crate::data::LabeledExample;
use crate::error::{Error, Result};
use crate::model::{BaseClassifier, Network};
use crate::smoothing::{certify_mc, SmoothingParams};
use crate::surrogate::accelerated_certify;

#[derive(Debug, Clone, PartialEq)]
pub struct BenchConfig {
    /// Values of `N`, ascending.
    pub n_sweep: Vec<u64>,
    /// Timed certifications per cell.
    pub reps: usize,
    /// Untimed certifications run before each cell.
    pub warmup: usize,
    pub methods: Vec<Method>,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            n_sweep: vec![100, 1_000, 10_000, 100_000],
            reps: 20,
            warmup: 2,
            methods: vec![Method::Mc, Method::Surrogate],
        }
    }
}

impl BenchConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_sweep.is_empty() || !self.n_sweep.windows(2).all(|w| w[0] < w[1]) {
            return Err(Error::invalid("n_sweep must be nonempty and strictly ascending"));
        }
        if self.reps < 20 {
            return Err(Error::invalid(format!("need at least 20 timed repetitions, got {}", self.reps)));
        }
        if self.methods.contains(&Method::Baseline) {
            return Err(Error::invalid("baseline is mc at N = 100; sweep mc instead"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchRow {
    pub method: Method,
    pub n: u64,
    pub median: Duration,
    pub reps: usize,
    /// The median is too close to the timer resolution to be trusted.
    pub below_resolution: bool,
    /// Surrogate forward passes per timed certification (0 for Monte Carlo).
    pub forwards_per_cert: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct BenchTable {
    pub timer_resolution: Duration,
    pub rows: Vec<BenchRow>,
}

pub const BENCH_HEADER: &str = "method\tn\tmedian_ms\treps\tbelow_resolution\tforwards_per_cert";

impl BenchTable {
    pub fn get(&self, method: Method, n: u64) -> Option<&BenchRow> {
        self.rows.iter().find(|r| r.method == method && r.n == n)
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from(BENCH_HEADER);
        s.push('\n');
        for r in &self.rows {
            writeln!(
                s,
                "{}\t{}\t{:.6}\t{}\t{}\t{}",
                r.method,
                r.n,
                r.median.as_secs_f64() * 1e3,
                r.reps,
                r.below_resolution as u8,
                r.forwards_per_cert
            )
            .unwrap();
        }
        writeln!(s, "# timer_resolution_ns {}", self.timer_resolution.as_nanos()).unwrap();
        s
    }
}

/// Smallest nonzero step observed between consecutive clock reads.
pub fn timer_resolution() -> Duration {
    let mut best = Duration::MAX;
    for _ in 0..1000 {
        let a = Instant::now();
        let mut b = Instant::now();
        while b == a {
            b = Instant::now();
        }
        best = best.min(b - a);
    }
    best
}

fn median(mut xs: Vec<Duration>) -> Duration {
    xs.sort();
    let m = xs.len() / 2;
    if xs.len() % 2 == 1 {
        xs[m]
    } else {
        (xs[m - 1] + xs[m]) / 2
    }
}

/// Median certification latency per `(method, N)`.
///
/// Timed sections run on a dedicated one-thread pool so that cells are
/// comparable regardless of the machine. Only the certify call is timed.
pub fn bench<F: BaseClassifier + ?Sized>(
    f: &F,
    h: &Network,
    examples: &[LabeledExample],
    params: &SmoothingParams,
    cfg: &BenchConfig,
) -> Result<BenchTable> {
    cfg.validate()?;
    if examples.is_empty() {
        return Err(Error::invalid("bench needs at least one example"));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .map_err(|e| Error::Config(format!("cannot build timing pool: {e}")))?;
    let resolution = timer_resolution();

    let certify_once = |method: Method, n: u64, i: usize| -> Result<Duration> {
        let e = &examples[i % examples.len()];
        let p = SmoothingParams { n, ..params.for_example(e.id) };
        let outcome = match method {
            Method::Surrogate => accelerated_certify(f, h, &e.features, &p)?,
            _ => certify_mc(f, &e.features, &p)?,
        };
        Ok(outcome.elapsed)
    };

    let mut rows = Vec::new();
    for &method in &cfg.methods {
        for &n in &cfg.n_sweep {
            if n < params.n0 {
                return Err(Error::invalid(format!("sweep value {n} is below n0 = {}", params.n0)));
            }
            let (times, forwards) = pool.install(|| -> Result<_> {
                for i in 0..cfg.warmup {
                    certify_once(method, n, i)?;
                }
                let before = h.forward_calls();
                let times = (0..cfg.reps).map(|i| certify_once(method, n, i)).collect::<Result<Vec<_>>>()?;
                Ok((times, h.forward_calls() - before))
            })?;
            let med = median(times);
            rows.push(BenchRow {
                method,
                n,
                median: med,
                reps: cfg.reps,
                below_resolution: med < resolution * 10,
                forwards_per_cert: forwards as f64 / cfg.reps as f64,
            });
        }
    }
    Ok(BenchTable { timer_resolution: resolution, rows })
}
