//! Labeled example sets and the synthetic generators that stand in for an
//! image benchmark.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};

/// A feature vector with its class.
#[derive(Debug, Clone, PartialEq)]
pub struct LabeledExample {
    pub id: u64,
    pub features: Vec<f64>,
    pub label: usize,
}

/// Synthetic task family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum Generator {
    /// `k` isotropic unit-variance Gaussian blobs whose centres sit on
    /// scaled coordinate axes, `separation` apart pairwise.
    Blobs,
    /// Concentric spherical shells, class `c` at radius `(c + 1) * separation`.
    Shells,
}

impl Generator {
    pub fn name(self) -> &'static str {
        match self {
            Generator::Blobs => "blobs",
            Generator::Shells => "shells",
        }
    }
}

impl FromStr for Generator {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "blobs" => Ok(Generator::Blobs),
            "shells" => Ok(Generator::Shells),
            other => Err(Error::Config(format!("unknown generator `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SyntheticSpec {
    pub generator: Generator,
    pub dim: usize,
    pub num_classes: usize,
    pub separation: f64,
    pub train_size: usize,
    pub test_size: usize,
    pub seed: u64,
}

impl Default for SyntheticSpec {
    fn default() -> Self {
        Self {
            generator: Generator::Blobs,
            dim: 16,
            num_classes: 4,
            separation: 3.0,
            train_size: 2000,
            test_size: 500,
            seed: 0,
        }
    }
}

impl SyntheticSpec {
    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 || self.num_classes < 2 {
            return Err(Error::Config("need dim >= 1 and num_classes >= 2".into()));
        }
        if self.generator == Generator::Blobs && self.num_classes > self.dim {
            return Err(Error::Config(format!(
                "blobs place one centre per axis: num_classes {} exceeds dim {}",
                self.num_classes, self.dim
            )));
        }
        if !(self.separation > 0.0 && self.separation.is_finite()) {
            return Err(Error::Config("separation must be positive".into()));
        }
        if self.train_size == 0 || self.test_size == 0 {
            return Err(Error::Config("train and test sizes must be positive".into()));
        }
        Ok(())
    }

    /// Deterministic `(train, test)` split. Test ids continue after the
    /// training ids so every example in a run has a unique id.
    pub fn generate(&self) -> Result<(Vec<LabeledExample>, Vec<LabeledExample>)> {
        self.validate()?;
        let train = (0..self.train_size as u64).map(|id| self.example(id)).collect();
        let test = (self.train_size as u64..(self.train_size + self.test_size) as u64)
            .map(|id| self.example(id))
            .collect();
        Ok((train, test))
    }

    fn example(&self, id: u64) -> LabeledExample {
        let mut rng = stream_rng(self.seed, &[stream::DATA_GEN, id]);
        let label = rng.random_range(0..self.num_classes);
        let mut features: Vec<f64> = (0..self.dim).map(|_| StandardNormal.sample(&mut rng)).collect();
        match self.generator {
            Generator::Blobs => {
                features[label] += self.separation / std::f64::consts::SQRT_2;
            }
            Generator::Shells => {
                let norm = features.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
                let radial: f64 = StandardNormal.sample(&mut rng);
                let radius = (label + 1) as f64 * self.separation + 0.1 * self.separation * radial;
                features.iter_mut().for_each(|v| *v *= radius / norm);
            }
        }
        LabeledExample { id, features, label }
    }
}

/// Header line of a labeled example file.
const LABELED_MAGIC: &str = "CSLD";
const LABELED_VERSION: u32 = 1;

/// `CSLD 1 d=<d> k=<k>` followed by `id,label,x0,...,x(d-1)` lines.
pub fn write_examples(examples: &[LabeledExample], num_classes: usize) -> Result<String> {
    let d = examples.first().map(|e| e.features.len()).unwrap_or(0);
    let mut out = format!("{LABELED_MAGIC} {LABELED_VERSION} d={d} k={num_classes}\n");
    for e in examples {
        if e.features.len() != d {
            return Err(Error::invalid(format!("example {} has dim {}", e.id, e.features.len())));
        }
        write!(out, "{},{}", e.id, e.label).unwrap();
        for v in &e.features {
            write!(out, ",{v:?}").unwrap();
        }
        out.push('\n');
    }
    Ok(out)
}

pub fn save_examples(path: impl AsRef<Path>, examples: &[LabeledExample], num_classes: usize) -> Result<()> {
    fs::write(path, write_examples(examples, num_classes)?)?;
    Ok(())
}

/// Parsed example file: `(examples, num_classes)`.
pub fn parse_examples(text: &str) -> Result<(Vec<LabeledExample>, usize)> {
    let mut lines = text.lines();
    let header = lines.next().ok_or_else(|| Error::format("header", "empty file"))?;
    let fields: Vec<&str> = header.split_whitespace().collect();
    if fields.first() != Some(&LABELED_MAGIC) {
        return Err(Error::format("magic", "not a labeled example file"));
    }
    if fields.get(1) != Some(&"1") {
        return Err(Error::format("version", format!("unsupported version in `{header}`")));
    }
    let d: usize = header_value(&fields, "d")?;
    let k: usize = header_value(&fields, "k")?;
    let mut examples = Vec::new();
    for (line_no, line) in lines.enumerate() {
        let field = |what: &str| format!("line {}: {what}", line_no + 2);
        let mut parts = line.split(',');
        let id = parse_field(parts.next(), &field("id"))?;
        let label: usize = parse_field(parts.next(), &field("label"))?;
        if label >= k {
            return Err(Error::format(field("label"), format!("{label} >= k = {k}")));
        }
        let features = parts
            .map(|p| p.parse::<f64>().map_err(|e| Error::format(field("features"), e.to_string())))
            .collect::<Result<Vec<_>>>()?;
        if features.len() != d {
            return Err(Error::format(field("features"), format!("{} values, expected {d}", features.len())));
        }
        examples.push(LabeledExample { id, features, label });
    }
    Ok((examples, k))
}

pub fn load_examples(path: impl AsRef<Path>) -> Result<(Vec<LabeledExample>, usize)> {
    let path = path.as_ref();
    if !path.exists() {
        return Err(Error::MissingArtifact(path.to_path_buf()));
    }
    parse_examples(&fs::read_to_string(path)?)
}

pub(crate) fn header_value<T: FromStr>(fields: &[&str], key: &str) -> Result<T> {
    let prefix = format!("{key}=");
    let raw = fields
        .iter()
        .find_map(|f| f.strip_prefix(prefix.as_str()))
        .ok_or_else(|| Error::format(key, "missing from header"))?;
    raw.parse()
        .map_err(|_| Error::format(key, format!("cannot parse `{raw}`")))
}

pub(crate) fn parse_field<T: FromStr>(raw: Option<&str>, field: &str) -> Result<T> {
    let raw = raw.ok_or_else(|| Error::format(field, "missing"))?;
    raw.trim()
        .parse()
        .map_err(|_| Error::format(field, format!("cannot parse `{raw}`")))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn generation_is_deterministic() {
        let spec = SyntheticSpec { train_size: 50, test_size: 20, ..Default::default() };
        let a = spec.generate().unwrap();
        let b = spec.generate().unwrap();
        assert_eq!(a, b);
        assert_eq!(a.0.len(), 50);
        assert_eq!(a.1[0].id, 50);
        let other = SyntheticSpec { seed: 1, ..spec }.generate().unwrap();
        assert_ne!(a.0, other.0);
    }

    #[test]
    fn labels_in_range() {
        let spec = SyntheticSpec { train_size: 1000, test_size: 1, ..Default::default() };
        let (train, _) = spec.generate().unwrap();
        assert!(train.iter().all(|e| e.label < 4 && e.features.len() == 16));
        for c in 0..4 {
            assert!(train.iter().any(|e| e.label == c));
        }
    }

    #[test]
    fn shells_have_class_dependent_radius() {
        let spec = SyntheticSpec {
            generator: Generator::Shells,
            separation: 2.0,
            train_size: 400,
            test_size: 1,
            ..Default::default()
        };
        let (train, _) = spec.generate().unwrap();
        for e in &train {
            let r = e.features.iter().map(|v| v * v).sum::<f64>().sqrt();
            let expect = 2.0 * (e.label + 1) as f64;
            assert!((r - expect).abs() < 1.0, "radius {r} for class {}", e.label);
        }
    }

    #[test]
    fn file_round_trip() {
        let spec = SyntheticSpec { train_size: 10, test_size: 1, ..Default::default() };
        let (train, _) = spec.generate().unwrap();
        let text = write_examples(&train, 4).unwrap();
        let (back, k) = parse_examples(&text).unwrap();
        assert_eq!(k, 4);
        assert_eq!(back, train);
        assert!(parse_examples("XXXX 1 d=2 k=2\n").is_err());
        assert!(parse_examples("CSLD 1 d=2 k=2\n0,5,1.0,2.0\n").is_err());
        assert!(parse_examples("CSLD 1 d=2 k=2\n0,1,1.0\n").is_err());
    }

    #[test]
    fn invalid_specs() {
        assert!(SyntheticSpec { num_classes: 20, ..Default::default() }.validate().is_err());
        assert!(SyntheticSpec { separation: 0.0, ..Default::default() }.validate().is_err());
        assert!("moons".parse::<Generator>().is_err());
    }
}
