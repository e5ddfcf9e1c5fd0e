use std::fmt::Write as _;

use rayon::prelude::*;

use crate::data::LabeledExample;
use crate::error::{Error, Result};
use crate::model::BaseClassifier;
use crate::rng::{derive_seed, stream};
use crate::smoothing::sample_counts;

/// Resampled count statistics for one `(example, class)` pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VarianceCell {
    pub example_id: u64,
    pub class: usize,
    /// Mean count over resamples divided by `n`.
    pub p_hat: f64,
    /// Sample variance (`n - 1` denominator) of the count across resamples.
    pub empirical_variance: f64,
    /// `n * p_hat * (1 - p_hat)`.
    pub binomial_variance: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct VarianceStudy {
    pub n: u64,
    pub resamples: usize,
    pub cells: Vec<VarianceCell>,
}

impl VarianceStudy {
    pub fn num_classes(&self) -> usize {
        self.cells.iter().map(|c| c.class + 1).max().unwrap_or(0)
    }

    /// Empirical count variance per class, averaged over examples.
    pub fn per_class_mean_variance(&self) -> Vec<f64> {
        let k = self.num_classes();
        let mut sums = vec![0.0; k];
        let mut counts = vec![0usize; k];
        for c in &self.cells {
            sums[c.class] += c.empirical_variance;
            counts[c.class] += 1;
        }
        sums.iter().zip(&counts).map(|(s, &n)| s / n.max(1) as f64).collect()
    }

    /// Mean per-class variance as a percentage of `n`.
    pub fn normalized_variance_pct(&self) -> f64 {
        let v = self.per_class_mean_variance();
        if v.is_empty() {
            return 0.0;
        }
        100.0 * v.iter().sum::<f64>() / v.len() as f64 / self.n as f64
    }

    /// Among cells with `p_hat` in `[p_lo, p_hi]`, the fraction whose
    /// empirical variance lies within a factor `factor` of the binomial
    /// variance, and the number of such cells.
    pub fn fraction_within(&self, factor: f64, p_lo: f64, p_hi: f64) -> (f64, usize) {
        let cells: Vec<_> = self.cells.iter().filter(|c| c.p_hat >= p_lo && c.p_hat <= p_hi).collect();
        if cells.is_empty() {
            return (0.0, 0);
        }
        let ok = cells
            .iter()
            .filter(|c| c.empirical_variance <= factor * c.binomial_variance && c.binomial_variance <= factor * c.empirical_variance)
            .count();
        (ok as f64 / cells.len() as f64, cells.len())
    }

    pub fn to_tsv(&self) -> String {
        let mut s = String::from("idx\tclass\tp_hat\tempirical_variance\tbinomial_variance\n");
        for c in &self.cells {
            writeln!(
                s,
                "{}\t{}\t{:.6}\t{:.4}\t{:.4}",
                c.example_id, c.class, c.p_hat, c.empirical_variance, c.binomial_variance
            )
            .unwrap();
        }
        for (class, v) in self.per_class_mean_variance().iter().enumerate() {
            writeln!(s, "# class {class} mean_variance {v:.4}").unwrap();
        }
        writeln!(s, "# normalized_variance_pct {:.6}", self.normalized_variance_pct()).unwrap();
        s
    }
}

/// Seed of resample `r` for one example.
pub(crate) fn resample_seed(seed: u64, example_id: u64, r: usize) -> u64 {
    derive_seed(seed, &[example_id, stream::RESAMPLE, r as u64])
}

/// Draws `resamples` independent count vectors of size `n` per example and
/// reports their spread against the binomial model.
pub fn variance_study<F: BaseClassifier + ?Sized>(
    f: &F,
    examples: &[LabeledExample],
    sigma: f64,
    n: u64,
    resamples: usize,
    seed: u64,
) -> Result<VarianceStudy> {
    if resamples < 2 {
        return Err(Error::invalid("variance study needs at least 2 resamples"));
    }
    if examples.is_empty() {
        return Err(Error::invalid("variance study needs at least one example"));
    }
    let per_example = examples
        .par_iter()
        .map(|e| {
            let draws = (0..resamples)
                .map(|r| sample_counts(f, &e.features, sigma, n, resample_seed(seed, e.id, r)))
                .collect::<Result<Vec<_>>>()?;
            Ok(cells_for(e.id, &draws, n))
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(VarianceStudy {
        n,
        resamples,
        cells: per_example.into_iter().flatten().collect(),
    })
}

fn cells_for(example_id: u64, draws: &[Vec<u64>], n: u64) -> Vec<VarianceCell> {
    let r = draws.len() as f64;
    (0..draws[0].len())
        .map(|class| {
            let mean = draws.iter().map(|d| d[class] as f64).sum::<f64>() / r;
            let var = draws.iter().map(|d| (d[class] as f64 - mean).powi(2)).sum::<f64>() / (r - 1.0);
            let p_hat = mean / n as f64;
            VarianceCell {
                example_id,
                class,
                p_hat,
                empirical_variance: var,
                binomial_variance: n as f64 * p_hat * (1.0 - p_hat),
            }
        })
        .collect()
}
