//! Configuration search maximizing the internal margin `T`.
//!
//! [`grid_search`] evaluates every configuration of a
//! [`HyperparameterSpace`]; [`smbo_search`] evaluates a budgeted subset chosen
//! by expected improvement under a Gaussian-process surrogate. Both consume a
//! [`TrialEvaluator`], so the search logic is independent of any detector.

mod evaluator;
mod gp;
mod grid;
mod smbo;
mod space;

use std::cmp::Ordering;
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::csm::{CsmReport, Margin};
use crate::detectors::ScoreVector;
use crate::error::{Error, Result};

pub use evaluator::{DetectorEvaluator, TrialCache, TrialKey, UnderfitRule};
pub use gp::{expected_improvement, GaussianProcess, GpSettings, SurrogateState};
pub use grid::grid_search;
pub use smbo::{smbo_search, SmboSettings};
pub use space::{Dimension, DimensionKind, HyperparameterSpace};

/// One value per dimension, in dimension order.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct Configuration(Vec<(String, f64)>);

impl Configuration {
    pub fn new(entries: Vec<(String, f64)>) -> Self {
        Configuration(entries)
    }

    pub fn get(&self, name: &str) -> Option<f64> {
        self.0.iter().find(|(n, _)| n == name).map(|&(_, v)| v)
    }

    pub fn names(&self) -> impl Iterator<Item = &str> {
        self.0.iter().map(|(n, _)| n.as_str())
    }

    pub fn values(&self) -> impl Iterator<Item = f64> + '_ {
        self.0.iter().map(|&(_, v)| v)
    }

    pub fn entries(&self) -> &[(String, f64)] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

/// `alpha=0.5,K=3`
impl fmt::Display for Configuration {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        for (i, (name, value)) in self.0.iter().enumerate() {
            if i > 0 {
                f.write_str(",")?;
            }
            write!(f, "{name}={value}")?;
        }
        Ok(())
    }
}

impl PartialEq for Configuration {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Configuration {}

impl PartialOrd for Configuration {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Lexicographic by value in dimension order, then by names.
impl Ord for Configuration {
    fn cmp(&self, other: &Self) -> Ordering {
        for ((na, va), (nb, vb)) in self.0.iter().zip(&other.0) {
            let ord = va.total_cmp(vb).then_with(|| na.cmp(nb));
            if ord != Ordering::Equal {
                return ord;
            }
        }
        self.0.len().cmp(&other.0.len())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    FailedNan,
    FailedOom,
    FailedUnderfit,
    /// Exceeded the per-trial wall-clock budget.
    FailedOor,
}

impl TrialStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            TrialStatus::Ok => "ok",
            TrialStatus::FailedNan => "failed_nan",
            TrialStatus::FailedOom => "failed_oom",
            TrialStatus::FailedUnderfit => "failed_underfit",
            TrialStatus::FailedOor => "failed_oor",
        }
    }
}

impl fmt::Display for TrialStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// One evaluated configuration. `t_value` is present iff `status` is ok;
/// `auc` stays empty until the report phase.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialRecord {
    pub config: Configuration,
    pub seed: u64,
    pub status: TrialStatus,
    pub scores: Option<ScoreVector>,
    pub csm: Option<CsmReport>,
    pub t_value: Option<Margin>,
    pub auc: Option<f64>,
    pub final_loss: Option<f64>,
    pub message: Option<String>,
}

impl TrialRecord {
    pub fn ok(config: Configuration, seed: u64, scores: ScoreVector, report: CsmReport) -> Self {
        TrialRecord {
            config,
            seed,
            status: TrialStatus::Ok,
            scores: Some(scores),
            t_value: Some(report.value),
            csm: Some(report),
            auc: None,
            final_loss: None,
            message: None,
        }
    }

    /// A trial rated directly by `t` (no score vector), as mock objectives do.
    pub fn rated(config: Configuration, seed: u64, t: Margin) -> Self {
        TrialRecord {
            config,
            seed,
            status: TrialStatus::Ok,
            scores: None,
            csm: None,
            t_value: Some(t),
            auc: None,
            final_loss: None,
            message: None,
        }
    }

    pub fn failed(config: Configuration, seed: u64, status: TrialStatus, message: String) -> Self {
        debug_assert_ne!(status, TrialStatus::Ok);
        TrialRecord {
            config,
            seed,
            status,
            scores: None,
            csm: None,
            t_value: None,
            auc: None,
            final_loss: None,
            message: Some(message),
        }
    }

    pub fn is_ok(&self) -> bool {
        self.status == TrialStatus::Ok
    }
}

/// Trains and rates one configuration. Must be deterministic in
/// `(config, seed)`.
pub trait TrialEvaluator: Sync {
    fn evaluate(&self, config: &Configuration, seed: u64) -> TrialRecord;
}

impl<F> TrialEvaluator for F
where
    F: Fn(&Configuration, u64) -> TrialRecord + Sync,
{
    fn evaluate(&self, config: &Configuration, seed: u64) -> TrialRecord {
        self(config, seed)
    }
}

/// Result of one search run. `trials` are in evaluation order for SMBO and
/// in space order for grid search.
#[derive(Debug, Clone, PartialEq)]
pub struct SearchOutcome {
    pub best: Configuration,
    pub best_t: Margin,
    pub trials: Vec<TrialRecord>,
}

impl SearchOutcome {
    pub fn best_trial(&self) -> &TrialRecord {
        self.trials
            .iter()
            .find(|t| t.is_ok() && t.config == self.best)
            .expect("best configuration is among the ok trials")
    }
}

/// Index of the ok trial with the largest `T`; ties go to the
/// lexicographically smallest configuration.
pub fn select_best(trials: &[TrialRecord]) -> Option<usize> {
    let mut best: Option<usize> = None;
    for (i, trial) in trials.iter().enumerate() {
        let Some(t) = trial.t_value else { continue };
        best = match best {
            None => Some(i),
            Some(b) => {
                let bt = trials[b].t_value.expect("ok trial has T");
                match t.cmp(&bt) {
                    Ordering::Greater => Some(i),
                    Ordering::Equal if trial.config < trials[b].config => Some(i),
                    _ => Some(b),
                }
            }
        };
    }
    best
}

pub(crate) fn finish(trials: Vec<TrialRecord>) -> Result<SearchOutcome> {
    let idx = select_best(&trials).ok_or_else(|| {
        Error::Search(format!("all {} trials failed", trials.len()))
    })?;
    Ok(SearchOutcome {
        best: trials[idx].config.clone(),
        best_t: trials[idx].t_value.expect("ok trial has T"),
        trials,
    })
}
