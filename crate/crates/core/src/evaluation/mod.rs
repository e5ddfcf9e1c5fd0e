//! Certification runs and the analyses built on them: certified accuracy,
//! ACR, estimation error, sampling variance and timing.

mod bench;
mod estimation;
mod variance;

pub use bench::{bench, timer_resolution, BenchConfig, BenchRow, BenchTable};
pub use estimation::{eligible_pairs, estimation_report, median_relative_error, EstimationReport, SplitStats};
pub use variance::{variance_study, VarianceCell, VarianceStudy};

use std::fmt::{self, Write as _};
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;

use crate::data::LabeledExample;
use crate::error::{Error, Result};
use crate::model::{BaseClassifier, DistributionModel};
use crate::smoothing::{certify_mc, CertOutcome, Decision, SmoothingParams};
use crate::surrogate::accelerated_certify;

/// Sample count of the low-budget Monte Carlo baseline.
pub const BASELINE_N: u64 = 100;

pub const LOG_HEADER: &str = "idx\tlabel\tpredict\tradius\tcorrect\ttime_ms\tmethod";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    /// Monte Carlo certification at the configured `N`.
    Mc,
    /// Surrogate-accelerated certification.
    Surrogate,
    /// Monte Carlo certification with [`BASELINE_N`] samples.
    Baseline,
}

impl Method {
    pub fn name(self) -> &'static str {
        match self {
            Method::Mc => "mc",
            Method::Surrogate => "surrogate",
            Method::Baseline => "baseline",
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mc" => Ok(Method::Mc),
            "surrogate" => Ok(Method::Surrogate),
            "baseline" => Ok(Method::Baseline),
            other => Err(Error::invalid(format!("unknown method `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CertRow {
    pub example_id: u64,
    pub label: usize,
    pub decision: Decision,
    pub radius: f64,
    pub correct: bool,
    pub elapsed_ms: f64,
    pub method: Method,
}

impl CertRow {
    pub fn from_outcome(example: &LabeledExample, outcome: &CertOutcome, method: Method) -> Self {
        Self {
            example_id: example.id,
            label: example.label,
            decision: outcome.decision,
            radius: outcome.radius,
            correct: outcome.decision == Decision::Class(example.label),
            elapsed_ms: outcome.elapsed.as_secs_f64() * 1e3,
            method,
        }
    }

    /// Radius credited towards ACR: the radius when correct, else 0.
    pub fn credited_radius(&self) -> f64 {
        if self.correct {
            self.radius
        } else {
            0.0
        }
    }
}

/// Per-example results of one certification run.
///
/// The TSV form has the header [`LOG_HEADER`], then a `#` line holding the
/// smoothing parameters, then one row per example. `predict` is `-1` for an
/// abstention.
#[derive(Debug, Clone, PartialEq)]
pub struct CertificationLog {
    pub params: Option<SmoothingParams>,
    pub rows: Vec<CertRow>,
}

impl CertificationLog {
    pub fn new(params: Option<SmoothingParams>, rows: Vec<CertRow>) -> Self {
        Self { params, rows }
    }

    pub fn len(&self) -> usize {
        self.rows.len()
    }

    pub fn is_empty(&self) -> bool {
        self.rows.is_empty()
    }

    /// Overwrites every elapsed time with 0 so that logs compare byte for byte.
    pub fn without_timings(mut self) -> Self {
        self.rows.iter_mut().for_each(|r| r.elapsed_ms = 0.0);
        self
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from(LOG_HEADER);
        s.push('\n');
        if let Some(p) = &self.params {
            writeln!(s, "# sigma={} n={} n0={} alpha={} seed={}", p.sigma, p.n, p.n0, p.alpha, p.seed).unwrap();
        }
        for r in &self.rows {
            let predict = match r.decision {
                Decision::Class(c) => c as i64,
                Decision::Abstain => -1,
            };
            writeln!(
                s,
                "{}\t{}\t{}\t{}\t{}\t{:.3}\t{}",
                r.example_id, r.label, predict, r.radius, r.correct as u8, r.elapsed_ms, r.method
            )
            .unwrap();
        }
        s
    }

    pub fn parse_tsv(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        if lines.next() != Some(LOG_HEADER) {
            return Err(Error::format("header", format!("expected `{LOG_HEADER}`")));
        }
        let mut params = None;
        let mut rows = Vec::new();
        for (i, line) in lines.enumerate() {
            let line_no = i + 2;
            if let Some(rest) = line.strip_prefix('#') {
                params = Some(parse_params(rest, line_no)?);
                continue;
            }
            rows.push(parse_row(line, line_no)?);
        }
        Ok(Self { params, rows })
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_tsv())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Self::parse_tsv(&fs::read_to_string(path)?)
    }
}

fn parse_params(rest: &str, line_no: usize) -> Result<SmoothingParams> {
    let fields: Vec<&str> = rest.split_whitespace().collect();
    let get = |key: &str| -> Result<&str> {
        let prefix = format!("{key}=");
        fields
            .iter()
            .find_map(|f| f.strip_prefix(prefix.as_str()))
            .ok_or_else(|| Error::format(format!("line {line_no}: {key}"), "missing"))
    };
    let num = |key: &str| -> Result<f64> {
        get(key)?
            .parse()
            .map_err(|_| Error::format(format!("line {line_no}: {key}"), "not a number"))
    };
    let int = |key: &str| -> Result<u64> {
        get(key)?
            .parse()
            .map_err(|_| Error::format(format!("line {line_no}: {key}"), "not an integer"))
    };
    Ok(SmoothingParams {
        sigma: num("sigma")?,
        n: int("n")?,
        n0: int("n0")?,
        alpha: num("alpha")?,
        seed: int("seed")?,
    })
}

fn parse_row(line: &str, line_no: usize) -> Result<CertRow> {
    let cols: Vec<&str> = line.split('\t').collect();
    if cols.len() != 7 {
        return Err(Error::format(format!("line {line_no}"), format!("{} columns, expected 7", cols.len())));
    }
    let bad = |name: &str| Error::format(format!("line {line_no}: {name}"), format!("cannot parse `{}`", line));
    let predict: i64 = cols[2].parse().map_err(|_| bad("predict"))?;
    let decision = match predict {
        -1 => Decision::Abstain,
        c if c >= 0 => Decision::Class(c as usize),
        _ => return Err(bad("predict")),
    };
    let radius: f64 = cols[3].parse().map_err(|_| bad("radius"))?;
    if !(radius >= 0.0) {
        return Err(Error::format(format!("line {line_no}: radius"), "negative radius"));
    }
    let correct = match cols[4] {
        "1" => true,
        "0" => false,
        _ => return Err(bad("correct")),
    };
    let row = CertRow {
        example_id: cols[0].parse().map_err(|_| bad("idx"))?,
        label: cols[1].parse().map_err(|_| bad("label"))?,
        decision,
        radius,
        correct,
        elapsed_ms: cols[5].parse().map_err(|_| bad("time_ms"))?,
        method: cols[6].parse().map_err(|_| bad("method"))?,
    };
    if row.correct != (row.decision == Decision::Class(row.label)) {
        return Err(Error::format(format!("line {line_no}: correct"), "inconsistent with predict and label"));
    }
    Ok(row)
}

/// Certifies every example with `method`. Each example gets its own seed
/// stream, so rows do not depend on how examples are scheduled.
///
/// `h` is required for [`Method::Surrogate`] and ignored otherwise.
pub fn run_certification<F, H>(
    f: &F,
    h: Option<&H>,
    examples: &[LabeledExample],
    params: &SmoothingParams,
    method: Method,
) -> Result<CertificationLog>
where
    F: BaseClassifier + ?Sized,
    H: DistributionModel + Sync + ?Sized,
{
    let params = match method {
        Method::Baseline => SmoothingParams {
            n: BASELINE_N,
            n0: params.n0.min(BASELINE_N),
            ..*params
        },
        _ => *params,
    };
    params.validate()?;
    let h = match (method, h) {
        (Method::Surrogate, None) => return Err(Error::Config("surrogate certification needs a surrogate model".into())),
        (_, h) => h,
    };
    let rows = examples
        .par_iter()
        .map(|e| {
            let p = params.for_example(e.id);
            let outcome = match method {
                Method::Surrogate => accelerated_certify(f, h.expect("checked above"), &e.features, &p)?,
                Method::Mc | Method::Baseline => certify_mc(f, &e.features, &p)?,
            };
            Ok(CertRow::from_outcome(e, &outcome, method))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(CertificationLog::new(Some(params), rows))
}

/// Fraction of rows that are correct with radius at least `r`; 0 for an
/// empty log.
pub fn certified_accuracy(log: &CertificationLog, r: f64) -> f64 {
    if log.is_empty() {
        return 0.0;
    }
    let hits = log.rows.iter().filter(|row| row.correct && row.radius >= r).count();
    hits as f64 / log.len() as f64
}

/// Mean credited radius; abstentions and misclassifications count as 0.
pub fn average_certified_radius(log: &CertificationLog) -> f64 {
    if log.is_empty() {
        return 0.0;
    }
    log.rows.iter().map(CertRow::credited_radius).sum::<f64>() / log.len() as f64
}

/// Certified accuracy at each radius plus ACR, one row per log, as TSV.
pub fn summary_table(logs: &[(&str, &CertificationLog)], radii: &[f64]) -> String {
    let mut s = String::from("method");
    for r in radii {
        write!(s, "\tacc@{r}").unwrap();
    }
    s.push_str("\tacr\trows\n");
    for (name, log) in logs {
        s.push_str(name);
        for &r in radii {
            write!(s, "\t{:.4}", certified_accuracy(log, r)).unwrap();
        }
        writeln!(s, "\t{:.4}\t{}", average_certified_radius(log), log.len()).unwrap();
    }
    s
}
