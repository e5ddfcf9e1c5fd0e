use std::collections::HashMap;
use std::fmt::Write as _;

use super::{CertRow, CertificationLog};
use crate::error::{Error, Result};

/// Statistics of one side of the estimation split.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct SplitStats {
    /// Pairs in this split.
    pub count: usize,
    /// Mean of `100 |r_pred - r_ref| / r_ref`.
    pub percentage_error: f64,
    /// Mean reference (Monte Carlo) radius over the split.
    pub ground_acr: f64,
    /// Share of eligible pairs in this split, in percent.
    pub share_pct: f64,
    /// Mean of `|r_pred - r_ref|`.
    pub mean_error: f64,
    /// Population variance of `|r_pred - r_ref|`.
    pub error_variance: f64,
}

/// Under/over-estimation of surrogate radii relative to Monte Carlo radii.
#[derive(Debug, Clone, PartialEq)]
pub struct EstimationReport {
    pub model: String,
    pub r_min: f64,
    /// Pairs where both certifiers returned a radius of at least `r_min`.
    pub eligible: usize,
    pub under: SplitStats,
    pub over: SplitStats,
    /// Pairs with identical radii, reported but not part of either split.
    pub ties: usize,
}

pub const REPORT_HEADER: &str = "model\tpercentage_error_under\tground_acr_under\tunderestimation_pct\tmean_error_under\terror_variance_under\tpercentage_error_over\tground_acr_over\toverestimation_pct\tmean_error_over\terror_variance_over\ttie_pct\teligible";

impl EstimationReport {
    pub fn tie_pct(&self) -> f64 {
        pct(self.ties, self.eligible)
    }

    /// The ten report columns in table order.
    pub fn columns(&self) -> [f64; 10] {
        let (u, o) = (&self.under, &self.over);
        [
            u.percentage_error,
            u.ground_acr,
            u.share_pct,
            u.mean_error,
            u.error_variance,
            o.percentage_error,
            o.ground_acr,
            o.share_pct,
            o.mean_error,
            o.error_variance,
        ]
    }

    pub fn to_tsv(reports: &[EstimationReport]) -> String {
        let mut s = String::from(REPORT_HEADER);
        s.push('\n');
        for r in reports {
            s.push_str(&r.model);
            for v in r.columns() {
                write!(s, "\t{v:.4}").unwrap();
            }
            writeln!(s, "\t{:.4}\t{}", r.tie_pct(), r.eligible).unwrap();
        }
        s
    }
}

fn pct(part: usize, whole: usize) -> f64 {
    if whole == 0 {
        0.0
    } else {
        100.0 * part as f64 / whole as f64
    }
}

fn paired<'a>(reference: &'a CertificationLog, predicted: &'a CertificationLog) -> Result<Vec<(&'a CertRow, &'a CertRow)>> {
    let by_id: HashMap<u64, &CertRow> = predicted.rows.iter().map(|r| (r.example_id, r)).collect();
    if by_id.len() != predicted.len() || by_id.len() != reference.len() {
        return Err(Error::invalid("logs must cover the same examples, each once"));
    }
    reference
        .rows
        .iter()
        .map(|r| {
            by_id
                .get(&r.example_id)
                .map(|p| (r, *p))
                .ok_or_else(|| Error::invalid(format!("example {} missing from the surrogate log", r.example_id)))
        })
        .collect()
}

/// `(r_ref, r_pred)` for pairs where neither side abstained and both radii
/// are at least `r_min`.
pub fn eligible_pairs(reference: &CertificationLog, predicted: &CertificationLog, r_min: f64) -> Result<Vec<(f64, f64)>> {
    Ok(paired(reference, predicted)?
        .into_iter()
        .filter(|(r, p)| !r.decision.is_abstain() && !p.decision.is_abstain())
        .filter(|(r, p)| r.radius >= r_min && p.radius >= r_min)
        .map(|(r, p)| (r.radius, p.radius))
        .collect())
}

fn split_stats(pairs: &[(f64, f64)], eligible: usize) -> SplitStats {
    if pairs.is_empty() {
        return SplitStats::default();
    }
    let n = pairs.len() as f64;
    let errors: Vec<f64> = pairs.iter().map(|(r, p)| (p - r).abs()).collect();
    let mean_error = errors.iter().sum::<f64>() / n;
    SplitStats {
        count: pairs.len(),
        percentage_error: pairs.iter().map(|(r, p)| 100.0 * (p - r).abs() / r).sum::<f64>() / n,
        ground_acr: pairs.iter().map(|(r, _)| r).sum::<f64>() / n,
        share_pct: pct(pairs.len(), eligible),
        mean_error,
        error_variance: errors.iter().map(|e| (e - mean_error).powi(2)).sum::<f64>() / n,
    }
}

/// Compares surrogate radii (`predicted`) against Monte Carlo radii
/// (`reference`), paired by example id.
pub fn estimation_report(
    model: &str,
    reference: &CertificationLog,
    predicted: &CertificationLog,
    r_min: f64,
) -> Result<EstimationReport> {
    if !(r_min >= 0.0) {
        return Err(Error::invalid("r_min must be nonnegative"));
    }
    let pairs = eligible_pairs(reference, predicted, r_min)?;
    let under: Vec<_> = pairs.iter().copied().filter(|(r, p)| p < r).collect();
    let over: Vec<_> = pairs.iter().copied().filter(|(r, p)| p > r).collect();
    Ok(EstimationReport {
        model: model.to_string(),
        r_min,
        eligible: pairs.len(),
        under: split_stats(&under, pairs.len()),
        over: split_stats(&over, pairs.len()),
        ties: pairs.len() - under.len() - over.len(),
    })
}

/// Median of `|r_pred - r_ref| / r_ref` over the eligible pairs, as a
/// fraction. `None` when no pair is eligible.
pub fn median_relative_error(reference: &CertificationLog, predicted: &CertificationLog, r_min: f64) -> Result<Option<f64>> {
    let mut rel: Vec<f64> = eligible_pairs(reference, predicted, r_min)?
        .into_iter()
        .map(|(r, p)| (p - r).abs() / r)
        .collect();
    if rel.is_empty() {
        return Ok(None);
    }
    rel.sort_by(f64::total_cmp);
    let m = rel.len() / 2;
    Ok(Some(if rel.len() % 2 == 1 { rel[m] } else { 0.5 * (rel[m - 1] + rel[m]) }))
}
