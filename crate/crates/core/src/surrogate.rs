//! Accelerated certification with a learned class-count surrogate.
//!
//! Monte Carlo class counts are sampled once per training input, normalized,
//! and used as Jensen-Shannon targets for a network `h`. At certification
//! time `h(x)` stands in for the `N`-sample estimation pass: its output is
//! scaled to `N` integer counts and fed to the same Clopper-Pearson bound.
//! The smoothed prediction itself still comes from a small `n0`-sample
//! Monte Carlo pass, and a radius is only issued when the two agree.

use std::collections::{HashMap, HashSet};
use std::fmt::Write as _;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::Path;
use std::time::Instant;

use rayon::prelude::*;

use crate::data::{header_value, parse_field, LabeledExample};
use crate::error::{Error, Result};
use crate::model::{self, BaseClassifier, DistributionModel, Head, Loss, Network, TrainConfig, TrainOutcome, TrainingData};
use crate::numerics::argmax;
use crate::rng::{derive_seed, stream};
use crate::smoothing::{self, sample_counts, AbstainReason, CertOutcome, Decision, SmoothingParams};

pub const COUNTS_MAGIC: &str = "CSDS";
pub const COUNTS_VERSION: u32 = 1;

/// Examples sampled concurrently between checkpoint flushes.
const CHECKPOINT_CHUNK: usize = 32;

#[derive(Debug, Clone, PartialEq)]
pub struct CountsRecord {
    pub example_id: u64,
    pub label: usize,
    pub counts: Vec<u64>,
}

impl CountsRecord {
    pub fn n_total(&self) -> u64 {
        self.counts.iter().sum()
    }

    /// Counts divided by their total.
    pub fn normalized(&self) -> Vec<f64> {
        let total = self.n_total() as f64;
        self.counts.iter().map(|&c| c as f64 / total).collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CountsHeader {
    pub format_version: u32,
    pub num_classes: usize,
    pub n_total: u64,
    pub sigma: f64,
    pub master_seed: u64,
}

impl CountsHeader {
    fn line(&self) -> String {
        format!(
            "{COUNTS_MAGIC} {} k={} N={} sigma={} seed={}\n",
            self.format_version, self.num_classes, self.n_total, self.sigma, self.master_seed
        )
    }

    fn parse(line: &str) -> Result<Self> {
        let fields: Vec<&str> = line.split_whitespace().collect();
        if fields.first() != Some(&COUNTS_MAGIC) {
            return Err(Error::format("magic", "not a counts dataset"));
        }
        let format_version: u32 = parse_field(fields.get(1).copied(), "version")?;
        if format_version != COUNTS_VERSION {
            return Err(Error::format(
                "version",
                format!("unsupported version {format_version}, expected {COUNTS_VERSION}"),
            ));
        }
        Ok(Self {
            format_version,
            num_classes: header_value(&fields, "k")?,
            n_total: header_value(&fields, "N")?,
            sigma: header_value(&fields, "sigma")?,
            master_seed: header_value(&fields, "seed")?,
        })
    }
}

/// Sampled training set `{x_i, C_i}` (inputs are joined by example id).
#[derive(Debug, Clone, PartialEq)]
pub struct CountsDataset {
    pub header: CountsHeader,
    pub records: Vec<CountsRecord>,
}

fn record_line(r: &CountsRecord) -> String {
    let mut s = format!("{},{}", r.example_id, r.label);
    for c in &r.counts {
        write!(s, ",{c}").unwrap();
    }
    s.push('\n');
    s
}

fn parse_record(line: &str, line_no: usize, header: &CountsHeader) -> Result<CountsRecord> {
    let field = |what: &str| format!("line {line_no}: {what}");
    let mut parts = line.split(',');
    let example_id = parse_field(parts.next(), &field("id"))?;
    let label: usize = parse_field(parts.next(), &field("label"))?;
    let counts = parts
        .map(|p| p.parse::<u64>().map_err(|e| Error::format(field("counts"), e.to_string())))
        .collect::<Result<Vec<_>>>()?;
    let record = CountsRecord { example_id, label, counts };
    if record.counts.len() != header.num_classes {
        return Err(Error::format(
            field("counts"),
            format!("{} classes, header says k = {}", record.counts.len(), header.num_classes),
        ));
    }
    if record.n_total() != header.n_total {
        return Err(Error::format(
            field("counts"),
            format!("counts sum to {}, header says N = {}", record.n_total(), header.n_total),
        ));
    }
    if label >= header.num_classes {
        return Err(Error::format(field("label"), format!("{label} >= k")));
    }
    Ok(record)
}

impl CountsDataset {
    pub fn validate(&self) -> Result<()> {
        let mut seen = HashSet::new();
        for r in &self.records {
            if r.counts.len() != self.header.num_classes || r.n_total() != self.header.n_total {
                return Err(Error::format(
                    format!("record {}", r.example_id),
                    "does not match header k / N",
                ));
            }
            if !seen.insert(r.example_id) {
                return Err(Error::format(format!("record {}", r.example_id), "duplicate example id"));
            }
        }
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let mut s = self.header.line();
        for r in &self.records {
            s.push_str(&record_line(r));
        }
        s
    }

    pub fn parse(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let header = CountsHeader::parse(lines.next().ok_or_else(|| Error::format("header", "empty file"))?)?;
        let records = lines
            .enumerate()
            .map(|(i, line)| parse_record(line, i + 2, &header))
            .collect::<Result<Vec<_>>>()?;
        let ds = Self { header, records };
        ds.validate()?;
        Ok(ds)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_text())?;
        Ok(())
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        if !path.exists() {
            return Err(Error::MissingArtifact(path.to_path_buf()));
        }
        Self::parse(&fs::read_to_string(path)?)
    }
}

/// Seed of the counts stream for one example.
pub fn dataset_stream_seed(master_seed: u64, example_id: u64) -> u64 {
    derive_seed(master_seed, &[example_id, stream::DATASET])
}

fn check_examples(examples: &[LabeledExample]) -> Result<()> {
    if examples.is_empty() {
        return Err(Error::invalid("no examples to sample"));
    }
    let mut seen = HashSet::new();
    for e in examples {
        if !seen.insert(e.id) {
            return Err(Error::invalid(format!("duplicate example id {}", e.id)));
        }
    }
    Ok(())
}

fn sample_records<F: BaseClassifier + ?Sized>(
    f: &F,
    examples: &[LabeledExample],
    sigma: f64,
    n: u64,
    seed: u64,
) -> Result<Vec<CountsRecord>> {
    examples
        .par_iter()
        .map(|e| {
            Ok(CountsRecord {
                example_id: e.id,
                label: e.label,
                counts: sample_counts(f, &e.features, sigma, n, dataset_stream_seed(seed, e.id))?,
            })
        })
        .collect()
}

/// One Monte Carlo count vector per example, in input order.
pub fn build_counts_dataset<F: BaseClassifier + ?Sized>(
    f: &F,
    examples: &[LabeledExample],
    sigma: f64,
    n: u64,
    seed: u64,
) -> Result<CountsDataset> {
    check_examples(examples)?;
    Ok(CountsDataset {
        header: CountsHeader {
            format_version: COUNTS_VERSION,
            num_classes: f.num_classes(),
            n_total: n,
            sigma,
            master_seed: seed,
        },
        records: sample_records(f, examples, sigma, n, seed)?,
    })
}

/// Streams records into `out` in chunks, flushing after each one. Records
/// for the first `skip` examples are assumed already written.
fn stream_records<F: BaseClassifier + ?Sized, W: Write>(
    f: &F,
    examples: &[LabeledExample],
    sigma: f64,
    n: u64,
    seed: u64,
    skip: usize,
    out: &mut W,
) -> Result<Vec<CountsRecord>> {
    let mut last_completed = skip.checked_sub(1).map(|i| examples[i].id);
    let mut written = Vec::new();
    for chunk in examples[skip..].chunks(CHECKPOINT_CHUNK) {
        let records = sample_records(f, chunk, sigma, n, seed)?;
        for r in records {
            out.write_all(record_line(&r).as_bytes())
                .and_then(|_| out.flush())
                .map_err(|source| Error::Checkpoint { last_completed, source })?;
            last_completed = Some(r.example_id);
            written.push(r);
        }
    }
    Ok(written)
}

/// File-backed [`build_counts_dataset`] with checkpointing.
///
/// With `resume`, an existing file whose header matches is kept and only the
/// examples after its last complete record are sampled. A torn final line is
/// discarded. The finished file is identical to an uninterrupted run.
pub fn build_counts_dataset_to_file<F: BaseClassifier + ?Sized>(
    f: &F,
    examples: &[LabeledExample],
    sigma: f64,
    n: u64,
    seed: u64,
    path: impl AsRef<Path>,
    resume: bool,
) -> Result<CountsDataset> {
    check_examples(examples)?;
    let path = path.as_ref();
    let header = CountsHeader {
        format_version: COUNTS_VERSION,
        num_classes: f.num_classes(),
        n_total: n,
        sigma,
        master_seed: seed,
    };

    let mut done = Vec::new();
    if resume && path.exists() {
        let text = fs::read_to_string(path)?;
        let complete = match text.rfind('\n') {
            Some(i) => &text[..=i],
            None => "",
        };
        let mut lines = complete.lines();
        if let Some(first) = lines.next() {
            let existing = CountsHeader::parse(first)?;
            if existing != header {
                return Err(Error::format(
                    "header",
                    "checkpoint was written with different k / N / sigma / seed",
                ));
            }
            for (i, line) in lines.enumerate() {
                let r = parse_record(line, i + 2, &header)?;
                let expected = examples.get(done.len()).map(|e| e.id);
                if expected != Some(r.example_id) {
                    return Err(Error::format(
                        format!("line {}", i + 2),
                        format!("checkpoint record {} does not follow input order", r.example_id),
                    ));
                }
                done.push(r);
            }
        }
        fs::write(path, if done.is_empty() && complete.is_empty() { header.line() } else { complete.to_string() })?;
    } else {
        fs::write(path, header.line())?;
    }

    let mut file = OpenOptions::new().append(true).open(path)?;
    let skip = done.len();
    let fresh = stream_records(f, examples, sigma, n, seed, skip, &mut file)?;
    done.extend(fresh);
    Ok(CountsDataset { header, records: done })
}

/// Joins counts records with their inputs.
pub fn surrogate_training_data(dataset: &CountsDataset, examples: &[LabeledExample]) -> Result<TrainingData> {
    dataset.validate()?;
    if dataset.records.is_empty() {
        return Err(Error::invalid("counts dataset is empty"));
    }
    let by_id: HashMap<u64, &LabeledExample> = examples.iter().map(|e| (e.id, e)).collect();
    let mut inputs = Vec::with_capacity(dataset.records.len());
    let mut targets = Vec::with_capacity(dataset.records.len());
    for r in &dataset.records {
        let e = by_id
            .get(&r.example_id)
            .ok_or_else(|| Error::invalid(format!("no input for counts record {}", r.example_id)))?;
        inputs.push(e.features.clone());
        targets.push(r.normalized());
    }
    TrainingData::new(inputs, targets)
}

/// Trains `h` on normalized counts with the Jensen-Shannon loss.
///
/// `hidden` lists hidden-layer widths; input and output widths come from the
/// data.
pub fn train_surrogate(
    dataset: &CountsDataset,
    examples: &[LabeledExample],
    hidden: &[usize],
    cfg: &TrainConfig,
) -> Result<TrainOutcome> {
    let data = surrogate_training_data(dataset, examples)?;
    let mut dims = vec![data.input_dim()];
    dims.extend_from_slice(hidden);
    dims.push(data.num_classes());
    let net = Network::new(&dims, Head::SimplexPredictor, cfg.seed)?;
    model::train(net, &data, Loss::JensenShannon, cfg)
}

/// Integer counts summing to exactly `n`, proportional to `probs`.
///
/// Largest-remainder rounding: floors first, then the leftover units go to
/// the largest fractional parts, lowest index first on ties.
pub fn reconstruct_counts(probs: &[f64], n: u64) -> Vec<u64> {
    let total: f64 = probs.iter().sum();
    let scaled: Vec<f64> = probs.iter().map(|p| p / total * n as f64).collect();
    let mut counts: Vec<u64> = scaled.iter().map(|s| (s.floor() as u64).min(n)).collect();
    let assigned: u64 = counts.iter().sum();
    if assigned > n {
        // only reachable through float overshoot; take units back from the largest
        let mut excess = assigned - n;
        while excess > 0 {
            let i = argmax(&counts);
            counts[i] -= 1;
            excess -= 1;
        }
        return counts;
    }
    let mut order: Vec<usize> = (0..probs.len()).collect();
    order.sort_by(|&a, &b| {
        let fa = scaled[a] - scaled[a].floor();
        let fb = scaled[b] - scaled[b].floor();
        fb.total_cmp(&fa).then(a.cmp(&b))
    });
    for &i in order.iter().cycle().take((n - assigned) as usize) {
        counts[i] += 1;
    }
    counts
}

/// Certification with a single surrogate forward pass in place of the
/// `N`-sample estimation pass.
///
/// Abstains when the `n0`-sample prediction abstains, when the surrogate's
/// top class disagrees with it, or when the lower bound is not above 1/2.
pub fn accelerated_certify<F, H>(f: &F, h: &H, x: &[f64], params: &SmoothingParams) -> Result<CertOutcome>
where
    F: BaseClassifier + ?Sized,
    H: DistributionModel + ?Sized,
{
    params.validate()?;
    if f.num_classes() != h.num_classes() {
        return Err(Error::Config(format!(
            "base classifier has {} classes, surrogate has {}",
            f.num_classes(),
            h.num_classes()
        )));
    }
    if f.input_dim() != h.input_dim() {
        return Err(Error::Config(format!(
            "base classifier takes {} features, surrogate takes {}",
            f.input_dim(),
            h.input_dim()
        )));
    }
    let start = Instant::now();
    let predicted = smoothing::predict(f, x, params)?;
    let dist = h.predict_distribution(x)?;
    let counts = reconstruct_counts(dist.as_slice(), params.n);
    let top = argmax(&counts);
    let outcome = match predicted {
        Decision::Abstain => smoothing::abstain_with(AbstainReason::SelectionInconclusive),
        Decision::Class(c) if c != top => smoothing::abstain_with(AbstainReason::Disagreement),
        Decision::Class(c) => smoothing::certify_top_count(c, counts[c], params.n, params.sigma, params.alpha)?,
    };
    Ok(smoothing::finish(outcome, start))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::ConstantClassifier;
    use crate::numerics::SimplexVector;

    struct Fixed(Vec<f64>);

    impl DistributionModel for Fixed {
        fn input_dim(&self) -> usize {
            2
        }
        fn num_classes(&self) -> usize {
            self.0.len()
        }
        fn predict_distribution(&self, _x: &[f64]) -> Result<SimplexVector> {
            SimplexVector::new(self.0.clone())
        }
    }

    fn examples(n: u64) -> Vec<LabeledExample> {
        (0..n)
            .map(|id| LabeledExample { id, features: vec![id as f64, 0.0], label: (id % 3) as usize })
            .collect()
    }

    #[test]
    fn reconstruction_sums_to_n() {
        assert_eq!(reconstruct_counts(&[0.25; 4], 10), vec![3, 3, 2, 2]);
        assert_eq!(reconstruct_counts(&[1.0, 0.0], 7), vec![7, 0]);
        assert_eq!(reconstruct_counts(&[0.333, 0.333, 0.334], 100), vec![33, 33, 34]);
        assert_eq!(reconstruct_counts(&[0.1; 10], 1000).iter().sum::<u64>(), 1000);
    }

    #[test]
    fn uniform_surrogate_abstains() {
        let f = ConstantClassifier { input_dim: 2, num_classes: 10, class: 0 };
        let h = Fixed(vec![0.1; 10]);
        let p = SmoothingParams::new(0.5, 100_000, 100, 0.001, 3).unwrap();
        let out = accelerated_certify(&f, &h, &[0.0, 0.0], &p).unwrap();
        assert_eq!(out.decision, Decision::Abstain);
        assert_eq!(out.abstain_reason, Some(AbstainReason::LowConfidence));
        assert!(out.p_a_lower < 0.2);
    }

    #[test]
    fn disagreement_abstains_with_zero_radius() {
        let f = ConstantClassifier { input_dim: 2, num_classes: 3, class: 0 };
        let h = Fixed(vec![0.05, 0.9, 0.05]);
        let p = SmoothingParams::new(0.5, 1000, 100, 0.001, 3).unwrap();
        let out = accelerated_certify(&f, &h, &[0.0, 0.0], &p).unwrap();
        assert_eq!(out.decision, Decision::Abstain);
        assert_eq!(out.radius, 0.0);
        assert_eq!(out.abstain_reason, Some(AbstainReason::Disagreement));
    }

    #[test]
    fn one_hot_surrogate_matches_constant_mc() {
        let f = ConstantClassifier { input_dim: 2, num_classes: 3, class: 2 };
        let h = Fixed(vec![0.0, 0.0, 1.0]);
        let p = SmoothingParams::new(0.5, 100_000, 100, 0.001, 3).unwrap();
        let fast = accelerated_certify(&f, &h, &[0.0, 0.0], &p).unwrap();
        let slow = smoothing::certify_mc(&f, &[0.0, 0.0], &p).unwrap();
        assert_eq!(fast.decision, Decision::Class(2));
        assert_eq!(fast.radius, slow.radius);
    }

    #[test]
    fn class_count_mismatch_is_a_config_error() {
        let f = ConstantClassifier { input_dim: 2, num_classes: 3, class: 0 };
        let h = Fixed(vec![0.5, 0.5]);
        let p = SmoothingParams::new(0.5, 100, 100, 0.001, 3).unwrap();
        assert!(matches!(accelerated_certify(&f, &h, &[0.0, 0.0], &p), Err(Error::Config(_))));
    }

    #[test]
    fn dataset_text_round_trip_and_validation() {
        let f = ConstantClassifier { input_dim: 2, num_classes: 3, class: 1 };
        let ds = build_counts_dataset(&f, &examples(5), 0.25, 200, 9).unwrap();
        assert!(ds.records.iter().all(|r| r.counts == vec![0, 200, 0]));
        let text = ds.to_text();
        assert!(text.starts_with("CSDS 1 k=3 N=200 sigma=0.25 seed=9\n"));
        assert_eq!(CountsDataset::parse(&text).unwrap(), ds);

        assert!(CountsDataset::parse("CSDS 1 k=2 N=10 sigma=0.5 seed=1\n0,0,4,5\n").is_err());
        assert!(CountsDataset::parse("CSDS 1 k=2 N=10 sigma=0.5 seed=1\n0,0,4,6\n0,1,5,5\n").is_err());
        assert!(CountsDataset::parse("CSDS 2 k=2 N=10 sigma=0.5 seed=1\n").is_err());
        assert!(build_counts_dataset(&f, &[], 0.25, 10, 0).is_err());
    }

    struct FailAfter {
        budget: usize,
    }

    impl Write for FailAfter {
        fn write(&mut self, buf: &[u8]) -> std::io::Result<usize> {
            if buf.len() > self.budget {
                return Err(std::io::Error::other("disk full"));
            }
            self.budget -= buf.len();
            Ok(buf.len())
        }
        fn flush(&mut self) -> std::io::Result<()> {
            Ok(())
        }
    }

    #[test]
    fn write_failure_reports_last_completed_id() {
        let f = ConstantClassifier { input_dim: 2, num_classes: 3, class: 1 };
        let line_len = "0,0,0,10,0\n".len();
        let mut sink = FailAfter { budget: 3 * line_len };
        let err = stream_records(&f, &examples(6), 0.5, 10, 1, 0, &mut sink).unwrap_err();
        assert!(matches!(err, Error::Checkpoint { last_completed: Some(2), .. }), "{err}");
    }
}
