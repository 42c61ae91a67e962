//! Self-supervised detectors whose loss trade-offs are the objects of search.
//!
//! * [`generative`]: GCN autoencoder reconstructing attributes and structure.
//! * [`contrastive`]: ego-net contrast with node-node and node-subgraph terms.
//!
//! Both are pure functions of `(graph, spec)`; all randomness flows from
//! `spec.seed`.

pub mod contrastive;
pub mod generative;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::AttributedGraph;
use crate::hpo::Configuration;
use crate::tensor::{Matrix, Parameter};

pub use contrastive::{sample_egonet, ContrastiveObjective};
pub use generative::GenerativeObjective;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DetectorKind {
    GenerativeAe,
    ContrastiveEgonet,
}

impl DetectorKind {
    /// Hyperparameter names the detector consumes, in space order.
    pub fn dimension_names(self) -> &'static [&'static str] {
        match self {
            DetectorKind::GenerativeAe => &["alpha"],
            DetectorKind::ContrastiveEgonet => &["alpha", "K"],
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            DetectorKind::GenerativeAe => "generative_ae",
            DetectorKind::ContrastiveEgonet => "contrastive_egonet",
        }
    }
}

impl fmt::Display for DetectorKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for DetectorKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "generative_ae" => Ok(DetectorKind::GenerativeAe),
            "contrastive_egonet" => Ok(DetectorKind::ContrastiveEgonet),
            other => Err(Error::Validation(format!("unknown detector kind {other:?}"))),
        }
    }
}

/// Settings that are fixed during a search (not searched hyperparameters).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainingParams {
    pub epochs: usize,
    pub learning_rate: f64,
    pub hidden_dim: usize,
    pub embed_dim: usize,
    /// Scoring rounds for the contrastive detector.
    pub rounds: usize,
    /// Largest graph the generative detector accepts (dense `n x n` decoder).
    pub max_nodes: usize,
    /// Contrastive target nodes per optimizer step; 0 means all nodes.
    pub batch_size: usize,
}

impl Default for TrainingParams {
    fn default() -> Self {
        TrainingParams {
            epochs: 100,
            learning_rate: 1e-3,
            hidden_dim: 64,
            embed_dim: 32,
            rounds: 16,
            max_nodes: 5000,
            batch_size: 0,
        }
    }
}

impl TrainingParams {
    pub fn validate(&self) -> Result<()> {
        if self.hidden_dim == 0 || self.embed_dim == 0 {
            return Err(Error::Validation("hidden_dim and embed_dim must be positive".into()));
        }
        if self.rounds == 0 {
            return Err(Error::Validation("rounds must be at least 1".into()));
        }
        if !(self.learning_rate >= 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Validation("learning_rate must be finite and >= 0".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectorSpec {
    pub kind: DetectorKind,
    pub hyperparameters: Configuration,
    pub training: TrainingParams,
    pub seed: u64,
}

impl DetectorSpec {
    pub fn new(
        kind: DetectorKind,
        hyperparameters: Configuration,
        training: TrainingParams,
        seed: u64,
    ) -> Result<Self> {
        let spec = DetectorSpec {
            kind,
            hyperparameters,
            training,
            seed,
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        let names: Vec<&str> = self.hyperparameters.names().collect();
        if names != self.kind.dimension_names() {
            return Err(Error::Validation(format!(
                "{} expects hyperparameters {:?}, got {:?}",
                self.kind,
                self.kind.dimension_names(),
                names
            )));
        }
        let alpha = self.alpha();
        if !(0.0..=1.0).contains(&alpha) {
            return Err(Error::Validation(format!("alpha = {alpha} outside [0, 1]")));
        }
        if self.kind == DetectorKind::ContrastiveEgonet {
            let k = self.hyperparameters.get("K").expect("checked above");
            if k.fract() != 0.0 || k < 2.0 {
                return Err(Error::Validation(format!("K = {k} must be an integer >= 2")));
            }
        }
        self.training.validate()
    }

    pub fn alpha(&self) -> f64 {
        self.hyperparameters.get("alpha").unwrap_or(f64::NAN)
    }

    /// Ego-net size (contrastive only).
    pub fn egonet_size(&self) -> Option<usize> {
        self.hyperparameters.get("K").map(|k| k as usize)
    }
}

/// One anomaly score per node; higher means more anomalous.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct ScoreVector(Vec<f64>);

impl ScoreVector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("score of node {i} is {}", values[i])));
        }
        Ok(ScoreVector(values))
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }
}

impl TryFrom<Vec<f64>> for ScoreVector {
    type Error = Error;
    fn try_from(v: Vec<f64>) -> Result<Self> {
        ScoreVector::new(v)
    }
}

impl From<ScoreVector> for Vec<f64> {
    fn from(s: ScoreVector) -> Self {
        s.0
    }
}

/// Final per-node score from per-round raw scores: their arithmetic mean.
/// A single round passes through unchanged.
pub fn finalize_rounds(rounds: &[Vec<f64>]) -> Result<ScoreVector> {
    let first = rounds
        .first()
        .ok_or_else(|| Error::Validation("no scoring rounds".into()))?;
    let n = first.len();
    if rounds.iter().any(|r| r.len() != n) {
        return Err(Error::Shape("scoring rounds differ in length".into()));
    }
    let r = rounds.len() as f64;
    let mean = (0..n)
        .map(|i| rounds.iter().map(|round| round[i]).sum::<f64>() / r)
        .collect();
    ScoreVector::new(mean)
}

/// Result of one training run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutput {
    pub scores: ScoreVector,
    /// Training loss per epoch.
    pub loss_history: Vec<f64>,
}

/// A loss over trainable parameters with fixed inputs, exposing exact
/// gradients. Used by training loops and by gradient checks.
pub trait Differentiable {
    fn parameters(&self) -> &[Parameter];
    fn parameters_mut(&mut self) -> &mut [Parameter];
    fn loss(&self) -> Result<f64>;
    /// Loss and one gradient per parameter, in parameter order.
    fn loss_and_gradients(&self) -> Result<(f64, Vec<Matrix>)>;
}

/// Trains the detector named by `spec.kind` and scores every node.
pub fn train(g: &AttributedGraph, spec: &DetectorSpec) -> Result<TrainOutput> {
    spec.validate()?;
    match spec.kind {
        DetectorKind::GenerativeAe => generative::train_generative(g, spec),
        DetectorKind::ContrastiveEgonet => contrastive::train_contrastive(g, spec),
    }
}

pub(crate) fn check_loss(loss: f64, epoch: usize) -> Result<()> {
    if loss.is_finite() {
        Ok(())
    } else {
        Err(Error::NonFinite(format!("training loss is {loss} at epoch {epoch}")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finalize_is_identity_for_one_round() {
        let s = finalize_rounds(&[vec![0.3, 1.5]]).unwrap();
        assert_eq!(s.as_slice(), &[0.3, 1.5]);
    }

    #[test]
    fn finalize_averages_rounds() {
        let s = finalize_rounds(&[vec![1.0, 3.0], vec![3.0, 5.0]]).unwrap();
        assert_eq!(s.as_slice(), &[2.0, 4.0]);
    }

    #[test]
    fn finalize_rejects_nan() {
        assert!(finalize_rounds(&[vec![1.0, f64::NAN]]).is_err());
        assert!(ScoreVector::new(vec![f64::INFINITY]).is_err());
        assert!(serde_json::from_str::<ScoreVector>("[1.0, 2.0]").is_ok());
    }

    #[test]
    fn spec_validation() {
        let ok = Configuration::new(vec![("alpha".into(), 0.5), ("K".into(), 3.0)]);
        let t = TrainingParams::default();
        assert!(DetectorSpec::new(DetectorKind::ContrastiveEgonet, ok.clone(), t, 0).is_ok());
        assert!(DetectorSpec::new(DetectorKind::GenerativeAe, ok, t, 0).is_err());
        let bad_alpha = Configuration::new(vec![("alpha".into(), 1.5)]);
        assert!(DetectorSpec::new(DetectorKind::GenerativeAe, bad_alpha, t, 0).is_err());
        let bad_k = Configuration::new(vec![("alpha".into(), 0.5), ("K".into(), 2.5)]);
        assert!(DetectorSpec::new(DetectorKind::ContrastiveEgonet, bad_k, t, 0).is_err());
    }
}
