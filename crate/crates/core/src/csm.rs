//! Contrast Score Margin: a label-free rating of an anomaly score vector.
//!
//! The `k` highest scores form the pseudo-anomalous set `O`. The
//! [`CsmVariant::Original`] margin contrasts `O` with the next `k` scores
//! and carries a `1/k` factor under the root; the [`CsmVariant::Improved`]
//! margin contrasts `O` with all remaining `n - k` scores:
//!
//! ```text
//! original: (mu_O - mu_I) / sqrt((var_O + var_I) / k)
//! improved: (mu_O - mu_R) / sqrt(var_O + var_R)
//! ```
//!
//! Variances are population variances. A zero denominator yields an
//! ordered sentinel ([`Margin::PosInf`] / [`Margin::NegInf`], or zero when
//! the numerator vanishes too) instead of a floating-point division.

use std::cmp::Ordering;
use std::fmt;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Exp, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CsmVariant {
    Original,
    Improved,
}

impl fmt::Display for CsmVariant {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            CsmVariant::Original => "original",
            CsmVariant::Improved => "improved",
        })
    }
}

impl std::str::FromStr for CsmVariant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "original" => Ok(CsmVariant::Original),
            "improved" => Ok(CsmVariant::Improved),
            other => Err(Error::Validation(format!("unknown CSM variant {other:?}"))),
        }
    }
}

/// Totally ordered margin value: `NegInf < Finite(_) < PosInf`.
#[derive(Debug, Clone, Copy)]
pub enum Margin {
    NegInf,
    Finite(f64),
    PosInf,
}

impl Margin {
    pub fn finite(self) -> Option<f64> {
        match self {
            Margin::Finite(v) => Some(v),
            _ => None,
        }
    }

    pub fn is_finite(self) -> bool {
        matches!(self, Margin::Finite(_))
    }

    /// `f64` view; sentinels map to the infinities.
    pub fn to_f64(self) -> f64 {
        match self {
            Margin::NegInf => f64::NEG_INFINITY,
            Margin::Finite(v) => v,
            Margin::PosInf => f64::INFINITY,
        }
    }

    fn rank(self) -> u8 {
        match self {
            Margin::NegInf => 0,
            Margin::Finite(_) => 1,
            Margin::PosInf => 2,
        }
    }
}

impl PartialEq for Margin {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Margin {}

impl PartialOrd for Margin {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Margin {
    fn cmp(&self, other: &Self) -> Ordering {
        match (self, other) {
            (Margin::Finite(a), Margin::Finite(b)) => a.total_cmp(b),
            _ => self.rank().cmp(&other.rank()),
        }
    }
}

impl fmt::Display for Margin {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Margin::NegInf => f.write_str("-inf"),
            Margin::Finite(v) => write!(f, "{v}"),
            Margin::PosInf => f.write_str("inf"),
        }
    }
}

impl std::str::FromStr for Margin {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "inf" => Ok(Margin::PosInf),
            "-inf" => Ok(Margin::NegInf),
            other => other
                .parse::<f64>()
                .ok()
                .filter(|v| v.is_finite())
                .map(Margin::Finite)
                .ok_or_else(|| Error::Validation(format!("bad margin value {other:?}"))),
        }
    }
}

impl Serialize for Margin {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        match self {
            Margin::Finite(v) => s.serialize_f64(*v),
            other => s.serialize_str(&other.to_string()),
        }
    }
}

impl<'de> Deserialize<'de> for Margin {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Text(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Margin::Finite(v)),
            Raw::Text(t) => t.parse().map_err(serde::de::Error::custom),
        }
    }
}

/// All components behind one margin evaluation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CsmReport {
    pub k: usize,
    pub mu_top: f64,
    pub var_top: f64,
    pub mu_rest: f64,
    pub var_rest: f64,
    pub value: Margin,
    pub variant: CsmVariant,
    pub degenerate: bool,
}

/// Indices of the `k` largest scores, largest first; ties go to the
/// smaller node id.
pub fn top_k_indices(scores: &[f64], k: usize) -> Vec<usize> {
    let mut order = ranked(scores);
    order.truncate(k);
    order
}

/// All indices by descending score, ties by ascending id.
fn ranked(scores: &[f64]) -> Vec<usize> {
    let mut order: Vec<usize> = (0..scores.len()).collect();
    order.sort_by(|&a, &b| scores[b].total_cmp(&scores[a]).then(a.cmp(&b)));
    order
}

fn mean_var(values: impl Iterator<Item = f64> + Clone) -> (f64, f64) {
    let (count, sum) = values.clone().fold((0usize, 0.0), |(c, s), v| (c + 1, s + v));
    let mean = sum / count as f64;
    let var = values.map(|v| (v - mean) * (v - mean)).sum::<f64>() / count as f64;
    (mean, var)
}

fn check_scores(scores: &[f64]) -> Result<()> {
    if scores.iter().any(|v| !v.is_finite()) {
        return Err(Error::Validation("score vector contains NaN or infinity".into()));
    }
    Ok(())
}

fn margin(numerator: f64, denominator_sq: f64) -> (Margin, bool) {
    if denominator_sq > 0.0 {
        return (Margin::Finite(numerator / denominator_sq.sqrt()), false);
    }
    let value = if numerator > 0.0 {
        Margin::PosInf
    } else if numerator < 0.0 {
        Margin::NegInf
    } else {
        Margin::Finite(0.0)
    };
    (value, true)
}

/// Margin between the top `k` and the next `k` scores. Requires
/// `1 <= k <= n / 2`.
pub fn csm_original(scores: &[f64], k: usize) -> Result<CsmReport> {
    check_scores(scores)?;
    let n = scores.len();
    if k == 0 || k > n / 2 {
        return Err(Error::Validation(format!(
            "original CSM needs 1 <= k <= {} for n = {n}, got k = {k}",
            n / 2
        )));
    }
    let order = ranked(scores);
    let (mu_top, var_top) = mean_var(order[..k].iter().map(|&i| scores[i]));
    let (mu_rest, var_rest) = mean_var(order[k..2 * k].iter().map(|&i| scores[i]));
    let (value, degenerate) = margin(mu_top - mu_rest, (var_top + var_rest) / k as f64);
    Ok(CsmReport {
        k,
        mu_top,
        var_top,
        mu_rest,
        var_rest,
        value,
        variant: CsmVariant::Original,
        degenerate,
    })
}

/// Margin between the top `k` scores and all the others. Requires
/// `1 <= k < n`.
pub fn csm_improved(scores: &[f64], k: usize) -> Result<CsmReport> {
    check_scores(scores)?;
    let n = scores.len();
    if k == 0 || k >= n {
        return Err(Error::Validation(format!(
            "improved CSM needs 1 <= k < n = {n}, got k = {k}"
        )));
    }
    let order = ranked(scores);
    let (mu_top, var_top) = mean_var(order[..k].iter().map(|&i| scores[i]));
    let (mu_rest, var_rest) = mean_var(order[k..].iter().map(|&i| scores[i]));
    let (value, degenerate) = margin(mu_top - mu_rest, var_top + var_rest);
    Ok(CsmReport {
        k,
        mu_top,
        var_top,
        mu_rest,
        var_rest,
        value,
        variant: CsmVariant::Improved,
        degenerate,
    })
}

pub fn csm(scores: &[f64], k: usize, variant: CsmVariant) -> Result<CsmReport> {
    match variant {
        CsmVariant::Original => csm_original(scores, k),
        CsmVariant::Improved => csm_improved(scores, k),
    }
}

/// `max(1, round(ratio * n))` for an assumed anomaly ratio in `(0, 0.5)`.
pub fn choose_k(n: usize, assumed_ratio: f64) -> Result<usize> {
    if !(assumed_ratio > 0.0 && assumed_ratio < 0.5) {
        return Err(Error::Validation(format!(
            "assumed anomaly ratio {assumed_ratio} outside (0, 0.5)"
        )));
    }
    Ok(((assumed_ratio * n as f64).round() as usize).max(1))
}

/// A distribution with known first two moments.
pub trait MomentSampler {
    fn mean(&self) -> f64;
    fn std_dev(&self) -> f64;
    fn sample(&self, rng: &mut dyn RngCore) -> f64;
}

#[derive(Debug, Clone, Copy)]
pub struct NormalSampler {
    pub mean: f64,
    pub std_dev: f64,
}

impl MomentSampler for NormalSampler {
    fn mean(&self) -> f64 {
        self.mean
    }
    fn std_dev(&self) -> f64 {
        self.std_dev
    }
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        Normal::new(self.mean, self.std_dev)
            .expect("finite normal parameters")
            .sample(rng)
    }
}

#[derive(Debug, Clone, Copy)]
pub struct UniformSampler {
    pub low: f64,
    pub high: f64,
}

impl MomentSampler for UniformSampler {
    fn mean(&self) -> f64 {
        0.5 * (self.low + self.high)
    }
    fn std_dev(&self) -> f64 {
        (self.high - self.low) / 12f64.sqrt()
    }
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        self.low + (self.high - self.low) * rng.random::<f64>()
    }
}

#[derive(Debug, Clone, Copy)]
pub struct ExponentialSampler {
    pub rate: f64,
}

impl MomentSampler for ExponentialSampler {
    fn mean(&self) -> f64 {
        1.0 / self.rate
    }
    fn std_dev(&self) -> f64 {
        1.0 / self.rate
    }
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        Exp::new(self.rate).expect("positive rate").sample(rng)
    }
}

/// Equal-weight mixture of `N(-offset, s^2)` and `N(offset, s^2)`.
#[derive(Debug, Clone, Copy)]
pub struct BimodalSampler {
    pub offset: f64,
    pub component_std: f64,
}

impl MomentSampler for BimodalSampler {
    fn mean(&self) -> f64 {
        0.0
    }
    fn std_dev(&self) -> f64 {
        (self.offset * self.offset + self.component_std * self.component_std).sqrt()
    }
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let centre = if rng.random::<bool>() { self.offset } else { -self.offset };
        Normal::new(centre, self.component_std)
            .expect("finite normal parameters")
            .sample(rng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CantelliOutcome {
    /// Observed frequency of `x <= mu - a * sigma`.
    pub empirical: f64,
    /// `1 / (1 + a^2)`.
    pub bound: f64,
    pub trials: usize,
}

impl CantelliOutcome {
    /// Bound plus three binomial standard errors.
    pub fn slack_bound(&self) -> f64 {
        self.bound + 3.0 * (self.bound * (1.0 - self.bound) / self.trials as f64).sqrt()
    }

    pub fn holds(&self) -> bool {
        self.empirical <= self.slack_bound()
    }
}

/// Monte-Carlo estimate of the lower tail `P(x <= mu - a sigma)` against the
/// one-sided Chebyshev (Cantelli) bound.
pub fn cantelli_check(
    sampler: &dyn MomentSampler,
    a: f64,
    trials: usize,
    seed: u64,
) -> Result<CantelliOutcome> {
    if !(a >= 0.0 && a.is_finite()) {
        return Err(Error::Validation(format!("tail multiplier a = {a} must be >= 0")));
    }
    if trials < 10_000 {
        return Err(Error::Validation(format!("{trials} trials; need at least 10^4")));
    }
    let sigma = sampler.std_dev();
    if !(sigma > 0.0 && sigma.is_finite()) {
        return Err(Error::Validation("sampler has zero or undefined variance".into()));
    }
    let threshold = sampler.mean() - a * sigma;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let hits = (0..trials)
        .filter(|_| sampler.sample(&mut rng) <= threshold)
        .count();
    Ok(CantelliOutcome {
        empirical: hits as f64 / trials as f64,
        bound: 1.0 / (1.0 + a * a),
        trials,
    })
}
