//! Ground-truth metrics. Only the report phase calls into this module.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// ROC-AUC as the Mann-Whitney statistic: the fraction of
/// (anomaly, normal) pairs ranked correctly, ties counting one half.
/// Computed from average ranks in `O(n log n)`.
pub fn roc_auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!(
            "{} scores for {} labels",
            scores.len(),
            labels.len()
        )));
    }
    if scores.iter().any(|s| s.is_nan()) {
        return Err(Error::Validation("score vector contains NaN".into()));
    }
    let positives = labels.iter().filter(|&&l| l == 1).count();
    let negatives = labels.iter().filter(|&&l| l == 0).count();
    if positives + negatives != labels.len() {
        return Err(Error::Validation("labels must be 0 or 1".into()));
    }
    if positives == 0 || negatives == 0 {
        return Err(Error::Validation(
            "AUC needs at least one anomaly and one normal node".into(),
        ));
    }

    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[a].total_cmp(&scores[b]));
    let mut positive_rank_sum = 0.0;
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && scores[order[end]] == scores[order[start]] {
            end += 1;
        }
        // ranks start..end (0-based) share their average, 1-based
        let avg_rank = (start + end + 1) as f64 / 2.0;
        let tied_positives = order[start..end].iter().filter(|&&i| labels[i] == 1).count();
        positive_rank_sum += avg_rank * tied_positives as f64;
        start = end;
    }
    let p = positives as f64;
    let u = positive_rank_sum - p * (p + 1.0) / 2.0;
    Ok(u / (p * negatives as f64))
}

fn check_aucs(aucs: &[f64]) -> Result<()> {
    if aucs.is_empty() {
        return Err(Error::Validation("empty AUC list".into()));
    }
    if aucs.iter().any(|a| !a.is_finite()) {
        return Err(Error::Validation("AUC list contains NaN or infinity".into()));
    }
    Ok(())
}

fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

/// Median; the mean of the two central values for even lengths.
pub fn median(values: &[f64]) -> Result<f64> {
    check_aucs(values)?;
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let mid = v.len() / 2;
    Ok(if v.len() % 2 == 1 {
        v[mid]
    } else {
        0.5 * (v[mid - 1] + v[mid])
    })
}

/// `(max - min) / max`.
pub fn performance_variation(aucs: &[f64]) -> Result<f64> {
    check_aucs(aucs)?;
    let max = max_of(aucs);
    if max <= 0.0 {
        return Err(Error::Validation("maximum AUC must be positive".into()));
    }
    Ok((max - min_of(aucs)) / max)
}

fn relative_gain(csm_auc: f64, reference: f64) -> Result<f64> {
    if reference == 0.0 {
        return Err(Error::Validation("reference AUC is zero".into()));
    }
    Ok((csm_auc - reference) / reference)
}

pub fn gain_over_min(csm_auc: f64, aucs: &[f64]) -> Result<f64> {
    check_aucs(aucs)?;
    relative_gain(csm_auc, min_of(aucs))
}

pub fn gain_over_median(csm_auc: f64, aucs: &[f64]) -> Result<f64> {
    relative_gain(csm_auc, median(aucs)?)
}

pub fn gain_over_max(csm_auc: f64, aucs: &[f64]) -> Result<f64> {
    check_aucs(aucs)?;
    relative_gain(csm_auc, max_of(aucs))
}

/// Product-moment correlation of two equally long, non-constant series.
pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    if x.len() != y.len() || x.len() < 2 {
        return Err(Error::Validation(format!(
            "pearson needs two series of equal length >= 2, got {} and {}",
            x.len(),
            y.len()
        )));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        return Err(Error::Validation("pearson is undefined for a constant series".into()));
    }
    Ok((sxy / (sxx.sqrt() * syy.sqrt())).clamp(-1.0, 1.0))
}

/// Ground-truth view of one search run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SweepSummary {
    pub aucs: Vec<f64>,
    pub max_auc: f64,
    pub min_auc: f64,
    pub median_auc: f64,
    /// AUC of the internally selected configuration.
    pub csm_auc: f64,
    pub variation: f64,
    pub gain_min: f64,
    pub gain_median: f64,
    pub gain_max: f64,
}

impl SweepSummary {
    pub fn new(csm_auc: f64, aucs: Vec<f64>) -> Result<Self> {
        check_aucs(&aucs)?;
        let (min_auc, max_auc) = (min_of(&aucs), max_of(&aucs));
        if !(min_auc..=max_auc).contains(&csm_auc) {
            return Err(Error::Contract(format!(
                "selected AUC {csm_auc} outside sweep range [{min_auc}, {max_auc}]"
            )));
        }
        Ok(SweepSummary {
            max_auc,
            min_auc,
            median_auc: median(&aucs)?,
            csm_auc,
            variation: performance_variation(&aucs)?,
            gain_min: gain_over_min(csm_auc, &aucs)?,
            gain_median: gain_over_median(csm_auc, &aucs)?,
            gain_max: gain_over_max(csm_auc, &aucs)?,
            aucs,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn auc_examples() {
        assert_eq!(roc_auc(&[0.9, 0.8, 0.2, 0.1], &[1, 1, 0, 0]).unwrap(), 1.0);
        assert_eq!(roc_auc(&[0.5, 0.5], &[1, 0]).unwrap(), 0.5);
        assert_eq!(roc_auc(&[0.9, 0.8, 0.3, 0.4], &[1, 0, 1, 0]).unwrap(), 0.5);
    }

    #[test]
    fn auc_errors() {
        assert!(roc_auc(&[0.1, 0.2], &[1, 1]).is_err());
        assert!(roc_auc(&[0.1], &[1, 0]).is_err());
        assert!(roc_auc(&[0.1, 0.2], &[1, 2]).is_err());
    }

    #[test]
    fn variation_and_gains() {
        assert!((performance_variation(&[0.8, 0.6]).unwrap() - 0.25).abs() < 1e-15);
        assert_eq!(performance_variation(&[0.7, 0.7, 0.7]).unwrap(), 0.0);
        assert!(performance_variation(&[]).is_err());

        let aucs = [0.5, 0.6, 0.7];
        assert_eq!(gain_over_min(0.5, &aucs).unwrap(), 0.0);
        assert!((gain_over_median(0.66, &aucs).unwrap() - 0.10).abs() < 1e-12);
        assert!(gain_over_max(0.6, &aucs).unwrap() < 0.0);
        assert!(gain_over_min(0.5, &[0.0, 0.5]).is_err());
    }

    #[test]
    fn even_median_averages_centre() {
        assert_eq!(median(&[0.4, 0.8, 0.6, 0.5]).unwrap(), 0.55);
    }

    #[test]
    fn pearson_examples() {
        assert!((pearson(&[1.0, 2.0, 3.0], &[2.0, 4.0, 6.0]).unwrap() - 1.0).abs() < 1e-15);
        assert!((pearson(&[1.0, 2.0, 3.0], &[6.0, 4.0, 2.0]).unwrap() + 1.0).abs() < 1e-15);
        let r = pearson(&[1.0, 2.0, 3.0], &[1.0, 1.0, 2.0]).unwrap();
        assert!((r - 3f64.sqrt() / 2.0).abs() < 1e-12);
        assert!(pearson(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]).is_err());
        assert!(pearson(&[1.0], &[1.0]).is_err());
    }

    #[test]
    fn summary_single_trial_is_degenerate() {
        let s = SweepSummary::new(0.7, vec![0.7]).unwrap();
        assert_eq!((s.min_auc, s.median_auc, s.max_auc), (0.7, 0.7, 0.7));
        assert_eq!((s.gain_min, s.gain_median, s.gain_max, s.variation), (0.0, 0.0, 0.0, 0.0));
        assert!(SweepSummary::new(0.9, vec![0.5, 0.7]).is_err());
    }
}
