//! Monte Carlo randomized smoothing.
//!
//! The smoothed classifier returns the class the base classifier most often
//! predicts under isotropic Gaussian input noise. [`certify_mc`] turns noisy
//! class counts into a one-sided Clopper-Pearson lower bound `p_A` and an
//! L2 radius `sigma * Φ⁻¹(p_A)`.

use std::time::{Duration, Instant};

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::BaseClassifier;
use crate::numerics::{
    argmax, binomial_two_sided_pvalue, clamp_for_quantile, clopper_pearson_lower, gaussian_quantile,
};
use crate::rng::{derive_seed, stream, stream_rng};

/// Noisy samples drawn from one counter-derived stream. Changing this value
/// changes every sampled count vector.
pub const SAMPLE_BATCH: u64 = 1024;

/// Tunables of a certification call.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SmoothingParams {
    /// Noise standard deviation in feature units.
    pub sigma: f64,
    /// Samples for the estimation pass.
    pub n: u64,
    /// Samples for the selection pass.
    pub n0: u64,
    /// Failure probability, used unadjusted by both the selection test and
    /// the confidence bound.
    pub alpha: f64,
    pub seed: u64,
}

impl SmoothingParams {
    pub fn new(sigma: f64, n: u64, n0: u64, alpha: f64, seed: u64) -> Result<Self> {
        let p = Self { sigma, n, n0, alpha, seed };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::invalid(format!("sigma must be positive, got {}", self.sigma)));
        }
        if self.n0 == 0 || self.n < self.n0 {
            return Err(Error::invalid(format!(
                "need n >= n0 >= 1, got n = {}, n0 = {}",
                self.n, self.n0
            )));
        }
        if !(self.alpha > 0.0 && self.alpha < 1.0) {
            return Err(Error::invalid(format!("alpha must lie in (0, 1), got {}", self.alpha)));
        }
        Ok(())
    }

    /// Parameters whose streams are private to one example.
    pub fn for_example(&self, example_id: u64) -> Self {
        Self {
            seed: derive_seed(self.seed, &[example_id]),
            ..*self
        }
    }

    pub fn with_n(&self, n: u64) -> Self {
        Self { n, ..*self }
    }

    pub fn selection_seed(&self) -> u64 {
        derive_seed(self.seed, &[stream::SELECTION])
    }

    pub fn estimation_seed(&self) -> u64 {
        derive_seed(self.seed, &[stream::ESTIMATION])
    }
}

/// Outcome of PREDICT or of a certification.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Decision {
    Class(usize),
    Abstain,
}

impl Decision {
    pub fn class(self) -> Option<usize> {
        match self {
            Decision::Class(c) => Some(c),
            Decision::Abstain => None,
        }
    }

    pub fn is_abstain(self) -> bool {
        matches!(self, Decision::Abstain)
    }
}

/// Why a certifier declined to return a radius.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum AbstainReason {
    /// The selection test could not separate the top two classes.
    SelectionInconclusive,
    /// The surrogate's top class differs from the smoothed prediction.
    Disagreement,
    /// The lower bound on the top-class probability is not above 1/2.
    LowConfidence,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CertOutcome {
    pub decision: Decision,
    /// Certified L2 radius; 0 when abstaining.
    pub radius: f64,
    /// Lower confidence bound on the top-class probability (0 when it was
    /// never computed).
    pub p_a_lower: f64,
    pub abstain_reason: Option<AbstainReason>,
    pub elapsed: Duration,
}

impl CertOutcome {
    fn abstain(reason: AbstainReason, p_a_lower: f64) -> Self {
        Self {
            decision: Decision::Abstain,
            radius: 0.0,
            p_a_lower,
            abstain_reason: Some(reason),
            elapsed: Duration::ZERO,
        }
    }

    fn timed(mut self, start: Instant) -> Self {
        self.elapsed = start.elapsed();
        self
    }
}

fn check_input<F: BaseClassifier + ?Sized>(f: &F, x: &[f64]) -> Result<()> {
    if x.len() != f.input_dim() {
        return Err(Error::DimensionMismatch {
            expected: f.input_dim(),
            got: x.len(),
        });
    }
    Ok(())
}

fn count_batch<F: BaseClassifier + ?Sized>(
    f: &F,
    x: &[f64],
    sigma: f64,
    len: usize,
    seed: u64,
    batch: u64,
) -> Result<Vec<u64>> {
    let d = x.len();
    let mut rng = stream_rng(seed, &[batch]);
    let mut noisy = Vec::with_capacity(len * d);
    for _ in 0..len {
        noisy.extend(x.iter().map(|&xi| {
            let e: f64 = StandardNormal.sample(&mut rng);
            xi + sigma * e
        }));
    }
    let mut classes = vec![0usize; len];
    f.classify_batch(&noisy, &mut classes)?;
    let mut counts = vec![0u64; f.num_classes()];
    for c in classes {
        *counts
            .get_mut(c)
            .ok_or_else(|| Error::invalid(format!("classifier returned class {c} out of range")))? += 1;
    }
    Ok(counts)
}

/// Counts of `f(x + e)` over `n` draws `e ~ N(0, sigma^2 I)`.
///
/// Draws are split into batches of [`SAMPLE_BATCH`], each with its own
/// stream keyed by `(seed, batch index)`. Batches may run on any worker; the
/// summed counts do not depend on scheduling.
pub fn sample_counts<F: BaseClassifier + ?Sized>(
    f: &F,
    x: &[f64],
    sigma: f64,
    n: u64,
    seed: u64,
) -> Result<Vec<u64>> {
    check_input(f, x)?;
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::invalid(format!("sigma must be positive, got {sigma}")));
    }
    let k = f.num_classes();
    let batches = n.div_ceil(SAMPLE_BATCH);
    (0..batches)
        .into_par_iter()
        .map(|b| {
            let len = SAMPLE_BATCH.min(n - b * SAMPLE_BATCH) as usize;
            count_batch(f, x, sigma, len, seed, b)
        })
        .try_reduce(
            || vec![0u64; k],
            |mut acc, part| {
                acc.iter_mut().zip(part).for_each(|(a, p)| *a += p);
                Ok(acc)
            },
        )
}

/// Top class and runner-up, lowest index first on ties.
pub fn top_two(counts: &[u64]) -> (usize, Option<usize>) {
    let first = argmax(counts);
    let second = (0..counts.len())
        .filter(|&c| c != first)
        .fold(None, |best: Option<usize>, c| match best {
            Some(b) if counts[b] >= counts[c] => Some(b),
            _ => Some(c),
        });
    (first, second)
}

/// PREDICT's decision rule on a count vector: return the top class if the
/// two-sided binomial test of top vs runner-up rejects at level `alpha`.
pub fn predict_from_counts(counts: &[u64], alpha: f64) -> Result<Decision> {
    let (a, b) = top_two(counts);
    let n_a = counts[a];
    let n_b = b.map(|b| counts[b]).unwrap_or(0);
    if n_a + n_b == 0 {
        return Err(Error::invalid("empty count vector"));
    }
    if binomial_two_sided_pvalue(n_a, n_b)? <= alpha {
        Ok(Decision::Class(a))
    } else {
        Ok(Decision::Abstain)
    }
}

/// Smoothed prediction from `params.n0` noisy samples on the selection
/// stream.
pub fn predict<F: BaseClassifier + ?Sized>(f: &F, x: &[f64], params: &SmoothingParams) -> Result<Decision> {
    params.validate()?;
    let counts = sample_counts(f, x, params.sigma, params.n0, params.selection_seed())?;
    predict_from_counts(&counts, params.alpha)
}

/// `sigma * Φ⁻¹(p_a_lower)`, with the probability clamped away from 1.
pub fn radius_from_lower(p_a_lower: f64, sigma: f64) -> Result<f64> {
    if !(0.0..=1.0).contains(&p_a_lower) {
        return Err(Error::invalid(format!("p_a_lower = {p_a_lower} outside [0, 1]")));
    }
    Ok(sigma * gaussian_quantile(clamp_for_quantile(p_a_lower))?)
}

/// Two-sided radius `sigma/2 (Φ⁻¹(p_A) - Φ⁻¹(p_B))` for a lower bound on
/// the top class and an upper bound on the runner-up.
pub fn radius_two_sided(p_a_lower: f64, p_b_upper: f64, sigma: f64) -> Result<f64> {
    for (name, p) in [("p_a_lower", p_a_lower), ("p_b_upper", p_b_upper)] {
        if !(p > 0.0 && p < 1.0) {
            return Err(Error::invalid(format!("{name} = {p} outside (0, 1)")));
        }
    }
    if p_a_lower < p_b_upper {
        return Err(Error::invalid(format!(
            "p_a_lower = {p_a_lower} below p_b_upper = {p_b_upper}"
        )));
    }
    Ok(0.5 * sigma * (gaussian_quantile(p_a_lower)? - gaussian_quantile(p_b_upper)?))
}

/// Final step shared by both certifiers: bound the top class's count and
/// certify only when the bound exceeds 1/2.
pub(crate) fn certify_top_count(class: usize, top_count: u64, n: u64, sigma: f64, alpha: f64) -> Result<CertOutcome> {
    let p_a_lower = clopper_pearson_lower(top_count, n, alpha)?;
    if p_a_lower > 0.5 {
        Ok(CertOutcome {
            decision: Decision::Class(class),
            radius: radius_from_lower(p_a_lower, sigma)?,
            p_a_lower,
            abstain_reason: None,
            elapsed: Duration::ZERO,
        })
    } else {
        Ok(CertOutcome::abstain(AbstainReason::LowConfidence, p_a_lower))
    }
}

/// CERTIFY from already-sampled selection and estimation counts.
pub fn certify_from_counts(selection: &[u64], estimation: &[u64], sigma: f64, alpha: f64) -> Result<CertOutcome> {
    if selection.len() != estimation.len() {
        return Err(Error::DimensionMismatch {
            expected: selection.len(),
            got: estimation.len(),
        });
    }
    let n: u64 = estimation.iter().sum();
    let class = argmax(selection);
    certify_top_count(class, estimation[class], n, sigma, alpha)
}

/// Monte Carlo certification: pick the top class from `n0` selection
/// samples, then bound its probability from `n` fresh estimation samples.
pub fn certify_mc<F: BaseClassifier + ?Sized>(f: &F, x: &[f64], params: &SmoothingParams) -> Result<CertOutcome> {
    params.validate()?;
    let start = Instant::now();
    let selection = sample_counts(f, x, params.sigma, params.n0, params.selection_seed())?;
    let estimation = sample_counts(f, x, params.sigma, params.n, params.estimation_seed())?;
    Ok(certify_from_counts(&selection, &estimation, params.sigma, params.alpha)?.timed(start))
}

/// Shared by the accelerated certifier, which must stamp its own timing.
pub(crate) fn finish(outcome: CertOutcome, start: Instant) -> CertOutcome {
    outcome.timed(start)
}

pub(crate) fn abstain_with(reason: AbstainReason) -> CertOutcome {
    CertOutcome::abstain(reason, 0.0)
}
