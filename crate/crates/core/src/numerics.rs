//! Statistical and information-theoretic kernels used by the certifiers.
//!
//! Everything here is a pure function of its arguments. The binomial
//! machinery works on log-probabilities (Loader's saddle-point form of the
//! pmf) and only ever sums the tail lying away from the mean, so a single
//! tail evaluation costs `O(sqrt(n))` terms rather than `O(n)`.

use std::f64::consts::{FRAC_1_SQRT_2, LN_2, PI};

use crate::error::{Error, Result};

/// Smallest distance from {0, 1} a probability is clamped to before it is
/// handed to [`gaussian_quantile`].
pub const QUANTILE_CLAMP: f64 = 1e-12;

/// Number of bisection steps used to invert the binomial tail.
const BISECTION_STEPS: usize = 60;

/// Tolerance on the sum of a [`SimplexVector`].
pub const SIMPLEX_TOL: f64 = 1e-9;

/// A real number in `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd)]
pub struct Probability(f64);

impl Probability {
    pub fn new(value: f64) -> Result<Self> {
        if (0.0..=1.0).contains(&value) {
            Ok(Self(value))
        } else {
            Err(Error::invalid(format!("probability {value} outside [0, 1]")))
        }
    }

    pub fn value(self) -> f64 {
        self.0
    }
}

/// A probability vector over `k` classes.
#[derive(Debug, Clone, PartialEq)]
pub struct SimplexVector(Vec<f64>);

impl SimplexVector {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::invalid("empty simplex vector"));
        }
        if let Some(bad) = probs.iter().find(|p| !p.is_finite() || **p < 0.0) {
            return Err(Error::invalid(format!("simplex entry {bad} is negative or non-finite")));
        }
        let sum: f64 = probs.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL {
            return Err(Error::invalid(format!("simplex entries sum to {sum}")));
        }
        Ok(Self(probs))
    }

    /// Normalizes a count vector. Fails when every count is zero.
    pub fn from_counts(counts: &[u64]) -> Result<Self> {
        let total: u64 = counts.iter().sum();
        if total == 0 {
            return Err(Error::invalid("cannot normalize an all-zero count vector"));
        }
        let total = total as f64;
        Ok(Self(counts.iter().map(|&c| c as f64 / total).collect()))
    }

    /// Wraps a vector the caller already knows to be a valid distribution
    /// (softmax output).
    pub(crate) fn from_trusted(probs: Vec<f64>) -> Self {
        debug_assert!((probs.iter().sum::<f64>() - 1.0).abs() <= SIMPLEX_TOL);
        Self(probs)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_vec(self) -> Vec<f64> {
        self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Index of the largest entry, lowest index on ties.
    pub fn argmax(&self) -> usize {
        argmax(&self.0)
    }
}

/// Index of the maximum, ties resolved to the lowest index.
pub fn argmax<T: PartialOrd + Copy>(values: &[T]) -> usize {
    let mut best = 0;
    for (i, v) in values.iter().enumerate().skip(1) {
        if *v > values[best] {
            best = i;
        }
    }
    best
}

// ---------------------------------------------------------------------------
// Gaussian
// ---------------------------------------------------------------------------

const FRAC_2_SQRT_PI: f64 = std::f64::consts::FRAC_2_SQRT_PI;
const INV_SQRT_2PI: f64 = 0.398_942_280_401_432_7;

/// Complementary error function for `z >= 0`.
///
/// Below 2.5 the everywhere-positive series
/// `erf(z) = 2/sqrt(pi) e^{-z^2} sum z (2z^2)^n / (2n+1)!!` is used; above it
/// the Laplace continued fraction, evaluated with modified Lentz.
fn erfc_nonneg(z: f64) -> f64 {
    debug_assert!(z >= 0.0);
    if z < 2.5 {
        let two_z2 = 2.0 * z * z;
        let mut term = z;
        let mut sum = z;
        let mut n = 0.0;
        loop {
            n += 1.0;
            term *= two_z2 / (2.0 * n + 1.0);
            sum += term;
            if term <= sum * 1e-17 {
                break;
            }
        }
        1.0 - FRAC_2_SQRT_PI * (-z * z).exp() * sum
    } else if z > 27.3 {
        0.0
    } else {
        // erfc(z) = e^{-z^2}/sqrt(pi) / (z + (1/2)/(z + 1/(z + (3/2)/(z + ...))))
        const TINY: f64 = 1e-300;
        let mut f = z;
        let mut c = z;
        let mut d = 0.0;
        for n in 1..2000 {
            let a = n as f64 * 0.5;
            d = z + a * d;
            if d.abs() < TINY {
                d = TINY;
            }
            c = z + a / c;
            if c.abs() < TINY {
                c = TINY;
            }
            d = 1.0 / d;
            let delta = c * d;
            f *= delta;
            if (delta - 1.0).abs() < 1e-16 {
                break;
            }
        }
        (-z * z).exp() / (PI.sqrt() * f)
    }
}

fn check_finite(x: f64, what: &str) -> Result<()> {
    if x.is_finite() {
        Ok(())
    } else {
        Err(Error::invalid(format!("{what} must be finite, got {x}")))
    }
}

fn cdf_unchecked(x: f64) -> f64 {
    if x < 0.0 {
        0.5 * erfc_nonneg(-x * FRAC_1_SQRT_2)
    } else {
        1.0 - 0.5 * erfc_nonneg(x * FRAC_1_SQRT_2)
    }
}

/// Upper tail `1 - Φ(x)`, accurate in relative terms for large `x`.
fn sf_unchecked(x: f64) -> f64 {
    cdf_unchecked(-x)
}

/// Standard normal density.
pub fn gaussian_pdf(x: f64) -> f64 {
    INV_SQRT_2PI * (-0.5 * x * x).exp()
}

/// Standard normal CDF Φ(x).
pub fn gaussian_cdf(x: f64) -> Result<f64> {
    check_finite(x, "x")?;
    Ok(cdf_unchecked(x))
}

/// Upper tail `1 - Φ(x)` without cancellation for large positive `x`.
pub fn gaussian_sf(x: f64) -> Result<f64> {
    check_finite(x, "x")?;
    Ok(sf_unchecked(x))
}

/// Inverse standard normal CDF Φ⁻¹(p) for `0 < p < 1`.
///
/// Acklam's rational approximation (relative error ~1e-9) followed by one
/// Newton step against [`gaussian_cdf`]; the step runs on the tail that does
/// not cancel.
pub fn gaussian_quantile(p: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) {
        return Err(Error::Domain(format!("quantile requires 0 < p < 1, got {p}")));
    }
    if p == 0.5 {
        return Ok(0.0);
    }

    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    let tail = |q: f64| {
        let r = (-2.0 * q.ln()).sqrt();
        (((((C[0] * r + C[1]) * r + C[2]) * r + C[3]) * r + C[4]) * r + C[5])
            / ((((D[0] * r + D[1]) * r + D[2]) * r + D[3]) * r + 1.0)
    };

    let mut z = if p < P_LOW {
        tail(p)
    } else if p > 1.0 - P_LOW {
        -tail(1.0 - p)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };

    let density = gaussian_pdf(z);
    if density > 0.0 {
        if p <= 0.5 {
            z -= (cdf_unchecked(z) - p) / density;
        } else {
            z += (sf_unchecked(z) - (1.0 - p)) / density;
        }
    }
    Ok(z)
}

/// Clamps `p` into `[QUANTILE_CLAMP, 1 - QUANTILE_CLAMP]`.
pub fn clamp_for_quantile(p: f64) -> f64 {
    p.clamp(QUANTILE_CLAMP, 1.0 - QUANTILE_CLAMP)
}

// ---------------------------------------------------------------------------
// Binomial
// ---------------------------------------------------------------------------

/// ln(2π)
const LN_2PI: f64 = 1.837_877_066_409_345_5;

/// Stirling-formula error `ln(n!) - ln(sqrt(2πn) (n/e)^n)` for integer `n >= 1`.
fn stirlerr(n: u64) -> f64 {
    const S0: f64 = 1.0 / 12.0;
    const S1: f64 = 1.0 / 360.0;
    const S2: f64 = 1.0 / 1260.0;
    const S3: f64 = 1.0 / 1680.0;
    const S4: f64 = 1.0 / 1188.0;
    if n <= 15 {
        let nf = n as f64;
        let ln_fact: f64 = (2..=n).map(|i| (i as f64).ln()).sum();
        ln_fact - (nf + 0.5) * nf.ln() + nf - 0.5 * LN_2PI
    } else {
        let nf = n as f64;
        let nn = nf * nf;
        (S0 - (S1 - (S2 - (S3 - S4 / nn) / nn) / nn) / nn) / nf
    }
}

/// Deviance term `x ln(x/np) + np - x`, evaluated by series when `x ≈ np`.
fn bd0(x: f64, np: f64) -> f64 {
    if (x - np).abs() < 0.1 * (x + np) {
        let mut v = (x - np) / (x + np);
        let mut s = (x - np) * v;
        let mut ej = 2.0 * x * v;
        v *= v;
        for j in 1..1000 {
            ej *= v;
            let s1 = s + ej / (2 * j + 1) as f64;
            if s1 == s {
                return s1;
            }
            s = s1;
        }
        s
    } else {
        x * (x / np).ln() + np - x
    }
}

/// `ln P(X = k)` for `X ~ Binomial(n, p)`, with `q = 1 - p` supplied.
fn log_pmf_raw(k: u64, n: u64, p: f64, q: f64) -> f64 {
    if p == 0.0 {
        return if k == 0 { 0.0 } else { f64::NEG_INFINITY };
    }
    if q == 0.0 {
        return if k == n { 0.0 } else { f64::NEG_INFINITY };
    }
    if k == 0 {
        return n as f64 * if p < 0.1 { (-p).ln_1p() } else { q.ln() };
    }
    if k == n {
        return n as f64 * if q < 0.1 { (-q).ln_1p() } else { p.ln() };
    }
    let (kf, nf) = (k as f64, n as f64);
    let lc = stirlerr(n) - stirlerr(k) - stirlerr(n - k) - bd0(kf, nf * p) - bd0(nf - kf, nf * q);
    let lf = LN_2PI + kf.ln() + (-kf / nf).ln_1p();
    lc - 0.5 * lf
}

fn check_binomial(k: u64, n: u64, p: f64) -> Result<()> {
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds n = {n}")));
    }
    if !(0.0..=1.0).contains(&p) {
        return Err(Error::invalid(format!("p = {p} outside [0, 1]")));
    }
    Ok(())
}

/// `ln P(X = k)` for `X ~ Binomial(n, p)`.
pub fn binomial_log_pmf(k: u64, n: u64, p: f64) -> Result<f64> {
    check_binomial(k, n, p)?;
    Ok(log_pmf_raw(k, n, p, 1.0 - p))
}

/// `sum_{j >= from} P(X = j)`, valid when `from` is at or above the mode so
/// the terms decrease.
fn sum_upward(from: u64, n: u64, p: f64, q: f64) -> f64 {
    let log_first = log_pmf_raw(from, n, p, q);
    if log_first < -745.0 {
        return 0.0;
    }
    let odds = p / q;
    let mut term = log_first.exp();
    let mut sum = term;
    let mut j = from;
    while j < n {
        term *= (n - j) as f64 / (j + 1) as f64 * odds;
        sum += term;
        j += 1;
        if term <= sum * 1e-17 {
            break;
        }
    }
    sum
}

/// `sum_{j <= from} P(X = j)`, valid when `from` is at or below the mode.
fn sum_downward(from: u64, n: u64, p: f64, q: f64) -> f64 {
    let log_first = log_pmf_raw(from, n, p, q);
    if log_first < -745.0 {
        return 0.0;
    }
    let odds = q / p;
    let mut term = log_first.exp();
    let mut sum = term;
    let mut j = from;
    while j > 0 {
        term *= j as f64 / (n - j + 1) as f64 * odds;
        sum += term;
        j -= 1;
        if term <= sum * 1e-17 {
            break;
        }
    }
    sum
}

/// `P(X >= k)`, no argument checks.
fn upper_tail_raw(k: u64, n: u64, p: f64) -> f64 {
    if k == 0 {
        return 1.0;
    }
    let q = 1.0 - p;
    if p == 0.0 {
        return 0.0;
    }
    if q == 0.0 {
        return 1.0;
    }
    if k as f64 > n as f64 * p {
        sum_upward(k, n, p, q).min(1.0)
    } else {
        (1.0 - sum_downward(k - 1, n, p, q)).max(0.0)
    }
}

/// `P(X <= k)` for `X ~ Binomial(n, p)`.
pub fn binomial_cdf(k: u64, n: u64, p: f64) -> Result<f64> {
    check_binomial(k, n, p)?;
    if k == n {
        return Ok(1.0);
    }
    let q = 1.0 - p;
    if p == 0.0 {
        return Ok(1.0);
    }
    if q == 0.0 {
        return Ok(0.0);
    }
    if (k as f64) < n as f64 * p {
        Ok(sum_downward(k, n, p, q).min(1.0))
    } else {
        Ok((1.0 - sum_upward(k + 1, n, p, q)).max(0.0))
    }
}

/// `P(X >= k)` for `X ~ Binomial(n, p)`.
pub fn binomial_sf(k: u64, n: u64, p: f64) -> Result<f64> {
    check_binomial(k, n, p)?;
    Ok(upper_tail_raw(k, n, p))
}

/// One-sided `(1 - alpha)` Clopper-Pearson lower confidence bound on a
/// binomial proportion after `k` successes in `n` trials.
///
/// Returns the root of `P(X >= k | n, p) = alpha`, found by bisection on the
/// exact tail. The lower end of the final bracket is returned, so the tail
/// probability at the result never exceeds `alpha`.
pub fn clopper_pearson_lower(k: u64, n: u64, alpha: f64) -> Result<f64> {
    if n == 0 {
        return Err(Error::invalid("n must be at least 1"));
    }
    if k > n {
        return Err(Error::invalid(format!("k = {k} exceeds n = {n}")));
    }
    if !(alpha > 0.0 && alpha < 1.0) {
        return Err(Error::invalid(format!("alpha = {alpha} outside (0, 1)")));
    }
    if k == 0 {
        return Ok(0.0);
    }
    let (mut lo, mut hi) = (0.0_f64, 1.0_f64);
    for _ in 0..BISECTION_STEPS {
        let mid = 0.5 * (lo + hi);
        if upper_tail_raw(k, n, mid) > alpha {
            hi = mid;
        } else {
            lo = mid;
        }
    }
    Ok(lo)
}

/// Two-sided exact binomial test of `H0: p = 1/2` for a split `(k_a, k_b)`.
///
/// Because the null is symmetric, the p-value is `min(1, 2 P(X >= max))` with
/// `X ~ Binomial(k_a + k_b, 1/2)`.
pub fn binomial_two_sided_pvalue(k_a: u64, k_b: u64) -> Result<f64> {
    let n = k_a
        .checked_add(k_b)
        .ok_or_else(|| Error::invalid("count overflow"))?;
    if n == 0 {
        return Err(Error::invalid("both counts are zero"));
    }
    let hi = k_a.max(k_b);
    if 2 * hi == n {
        return Ok(1.0);
    }
    // P(X >= hi) at p = 1/2 is tiny for lopsided splits; double it in log space.
    let tail = sum_upward(hi, n, 0.5, 0.5);
    Ok((2.0 * tail).min(1.0))
}

// ---------------------------------------------------------------------------
// Divergences
// ---------------------------------------------------------------------------

/// Jensen-Shannon divergence on raw slices, natural log, `0 ln 0 = 0`.
pub(crate) fn js_divergence_raw(p: &[f64], q: &[f64]) -> f64 {
    let mut acc = 0.0;
    for (&a, &b) in p.iter().zip(q) {
        let m = a + b;
        if a > 0.0 {
            acc += a * (2.0 * a / m).ln();
        }
        if b > 0.0 {
            acc += b * (2.0 * b / m).ln();
        }
    }
    (0.5 * acc).clamp(0.0, LN_2)
}

/// Jensen-Shannon divergence `JS(p || q)` with natural logarithm; lies in
/// `[0, ln 2]`.
pub fn js_divergence(p: &SimplexVector, q: &SimplexVector) -> Result<f64> {
    if p.len() != q.len() {
        return Err(Error::DimensionMismatch {
            expected: p.len(),
            got: q.len(),
        });
    }
    Ok(js_divergence_raw(p.as_slice(), q.as_slice()))
}
