use std::collections::HashMap;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::{Duration, Instant};

use crate::csm::{csm, CsmVariant};
use crate::detectors::{train, DetectorKind, DetectorSpec, TrainOutput, TrainingParams};
use crate::error::{Error, Result};
use crate::graph::AttributedGraph;

use super::{Configuration, TrialEvaluator, TrialRecord, TrialStatus};

/// Identity of one training run.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct TrialKey {
    pub graph_hash: String,
    pub kind: DetectorKind,
    pub config: String,
    pub seed: u64,
    pub training: String,
}

type Cached = std::result::Result<TrainOutput, (TrialStatus, String)>;

/// Training results shared across searches that differ only in how score
/// vectors are rated (`k`, variant). Cheap to clone; clones share storage.
#[derive(Debug, Clone, Default)]
pub struct TrialCache {
    entries: Arc<Mutex<HashMap<TrialKey, Cached>>>,
    hits: Arc<AtomicUsize>,
    misses: Arc<AtomicUsize>,
}

impl TrialCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn len(&self) -> usize {
        self.entries.lock().expect("cache lock").len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn hits(&self) -> usize {
        self.hits.load(Ordering::Relaxed)
    }

    pub fn misses(&self) -> usize {
        self.misses.load(Ordering::Relaxed)
    }

    fn get_or_train(&self, key: TrialKey, run: impl FnOnce() -> Cached) -> Cached {
        if let Some(hit) = self.entries.lock().expect("cache lock").get(&key) {
            self.hits.fetch_add(1, Ordering::Relaxed);
            return hit.clone();
        }
        self.misses.fetch_add(1, Ordering::Relaxed);
        let value = run();
        self.entries
            .lock()
            .expect("cache lock")
            .entry(key)
            .or_insert(value)
            .clone()
    }
}

/// Loss plateau test: a run whose loss moved by less than `tolerance` over
/// its final `window` epochs is marked underfit. Runs shorter than the
/// window are never flagged.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct UnderfitRule {
    pub window: usize,
    pub tolerance: f64,
}

impl Default for UnderfitRule {
    fn default() -> Self {
        UnderfitRule {
            window: 400,
            tolerance: 1e-2,
        }
    }
}

impl UnderfitRule {
    pub fn is_underfit(&self, losses: &[f64]) -> bool {
        if self.window == 0 || losses.len() <= self.window {
            return false;
        }
        let last = losses[losses.len() - 1];
        let start = losses[losses.len() - 1 - self.window];
        (last - start).abs() < self.tolerance
    }
}

/// Trains a detector on an unlabeled graph and rates its scores with the
/// margin. Refuses labeled graphs.
pub struct DetectorEvaluator<'g> {
    graph: &'g AttributedGraph,
    graph_hash: String,
    kind: DetectorKind,
    training: TrainingParams,
    k: usize,
    variant: CsmVariant,
    underfit: UnderfitRule,
    time_budget: Option<Duration>,
    cache: Option<TrialCache>,
}

impl<'g> DetectorEvaluator<'g> {
    pub fn new(
        graph: &'g AttributedGraph,
        kind: DetectorKind,
        training: TrainingParams,
        k: usize,
        variant: CsmVariant,
    ) -> Result<Self> {
        if graph.has_labels() {
            return Err(Error::Contract(
                "search must run on a label-stripped graph".into(),
            ));
        }
        training.validate()?;
        let n = graph.node_count();
        let k_ok = match variant {
            CsmVariant::Original => k >= 1 && 2 * k <= n,
            CsmVariant::Improved => k >= 1 && k < n,
        };
        if !k_ok {
            return Err(Error::Validation(format!(
                "k = {k} invalid for the {variant} margin on {n} nodes"
            )));
        }
        Ok(DetectorEvaluator {
            graph,
            graph_hash: graph.content_hash(),
            kind,
            training,
            k,
            variant,
            underfit: UnderfitRule::default(),
            time_budget: None,
            cache: None,
        })
    }

    pub fn with_cache(mut self, cache: TrialCache) -> Self {
        self.cache = Some(cache);
        self
    }

    pub fn with_underfit_rule(mut self, rule: UnderfitRule) -> Self {
        self.underfit = rule;
        self
    }

    /// Marks trials that train longer than `budget` as out of resources.
    pub fn with_time_budget(mut self, budget: Option<Duration>) -> Self {
        self.time_budget = budget;
        self
    }

    pub fn k(&self) -> usize {
        self.k
    }

    fn run(&self, config: &Configuration, seed: u64) -> Cached {
        let spec = DetectorSpec::new(self.kind, config.clone(), self.training, seed)
            .map_err(|e| (TrialStatus::FailedNan, e.to_string()))?;
        if let Some(k) = spec.egonet_size() {
            if k >= self.graph.node_count() {
                return Err((
                    TrialStatus::FailedOom,
                    format!("K = {k} not below n = {}", self.graph.node_count()),
                ));
            }
        }
        let start = Instant::now();
        let out = train(self.graph, &spec).map_err(|e| {
            let status = match e {
                Error::Capacity(_) => TrialStatus::FailedOom,
                _ => TrialStatus::FailedNan,
            };
            (status, e.to_string())
        })?;
        if let Some(budget) = self.time_budget {
            let elapsed = start.elapsed();
            if elapsed > budget {
                return Err((
                    TrialStatus::FailedOor,
                    format!("training took {elapsed:?}, budget {budget:?}"),
                ));
            }
        }
        Ok(out)
    }
}

impl TrialEvaluator for DetectorEvaluator<'_> {
    fn evaluate(&self, config: &Configuration, seed: u64) -> TrialRecord {
        let result = match &self.cache {
            Some(cache) => {
                let key = TrialKey {
                    graph_hash: self.graph_hash.clone(),
                    kind: self.kind,
                    config: config.to_string(),
                    seed,
                    training: format!("{:?}", self.training),
                };
                cache.get_or_train(key, || self.run(config, seed))
            }
            None => self.run(config, seed),
        };
        let out = match result {
            Ok(out) => out,
            Err((status, message)) => return TrialRecord::failed(config.clone(), seed, status, message),
        };
        let final_loss = out.loss_history.last().copied();
        if self.underfit.is_underfit(&out.loss_history) {
            let mut rec = TrialRecord::failed(
                config.clone(),
                seed,
                TrialStatus::FailedUnderfit,
                format!(
                    "loss moved less than {} over the last {} epochs",
                    self.underfit.tolerance, self.underfit.window
                ),
            );
            rec.final_loss = final_loss;
            return rec;
        }
        match csm(out.scores.as_slice(), self.k, self.variant) {
            Ok(report) => {
                let mut rec = TrialRecord::ok(config.clone(), seed, out.scores, report);
                rec.final_loss = final_loss;
                rec
            }
            Err(e) => TrialRecord::failed(config.clone(), seed, TrialStatus::FailedNan, e.to_string()),
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{generate_synthetic, SyntheticSpec};
    use crate::hpo::HyperparameterSpace;

    fn small_training() -> TrainingParams {
        TrainingParams {
            epochs: 3,
            hidden_dim: 4,
            embed_dim: 4,
            rounds: 2,
            ..TrainingParams::default()
        }
    }

    #[test]
    fn underfit_rule() {
        let rule = UnderfitRule {
            window: 3,
            tolerance: 0.1,
        };
        assert!(!rule.is_underfit(&[1.0, 1.0, 1.0]));
        assert!(rule.is_underfit(&[1.0, 1.0, 1.0, 1.05]));
        assert!(!rule.is_underfit(&[2.0, 1.5, 1.2, 1.0]));
    }

    #[test]
    fn refuses_labeled_graph_and_bad_k() {
        let g = generate_synthetic(&SyntheticSpec::new(20, 3, 2, 0.3, 0.05, 1)).unwrap();
        let t = small_training();
        assert!(DetectorEvaluator::new(&g, DetectorKind::GenerativeAe, t, 11, CsmVariant::Original).is_err());
        assert!(DetectorEvaluator::new(&g, DetectorKind::GenerativeAe, t, 10, CsmVariant::Original).is_ok());
        assert!(DetectorEvaluator::new(&g, DetectorKind::GenerativeAe, t, 20, CsmVariant::Improved).is_err());
        let labeled = g.clone().with_labels(crate::graph::Labels::new(vec![0; 20]).unwrap()).unwrap();
        assert!(DetectorEvaluator::new(&labeled, DetectorKind::GenerativeAe, t, 2, CsmVariant::Improved).is_err());
    }

    #[test]
    fn cache_reuses_training_across_k() {
        let g = generate_synthetic(&SyntheticSpec::new(20, 3, 2, 0.3, 0.05, 1)).unwrap();
        let cache = TrialCache::new();
        let space = HyperparameterSpace::generative_default();
        let c = space.config_at(3);
        let a = DetectorEvaluator::new(&g, DetectorKind::GenerativeAe, small_training(), 2, CsmVariant::Improved)
            .unwrap()
            .with_cache(cache.clone());
        let b = DetectorEvaluator::new(&g, DetectorKind::GenerativeAe, small_training(), 5, CsmVariant::Improved)
            .unwrap()
            .with_cache(cache.clone());
        let ra = a.evaluate(&c, 9);
        let rb = b.evaluate(&c, 9);
        assert_eq!(ra.scores, rb.scores);
        assert_eq!((cache.misses(), cache.hits()), (1, 1));
        assert_ne!(ra.t_value, rb.t_value);
    }

    #[test]
    fn oversized_generative_is_oom() {
        let g = generate_synthetic(&SyntheticSpec::new(20, 3, 2, 0.3, 0.05, 1)).unwrap();
        let t = TrainingParams {
            max_nodes: 10,
            ..small_training()
        };
        let e = DetectorEvaluator::new(&g, DetectorKind::GenerativeAe, t, 2, CsmVariant::Improved).unwrap();
        let rec = e.evaluate(&HyperparameterSpace::generative_default().config_at(0), 0);
        assert_eq!(rec.status, TrialStatus::FailedOom);
        assert!(rec.t_value.is_none());
    }

    #[test]
    fn zero_time_budget_marks_out_of_resources() {
        let g = generate_synthetic(&SyntheticSpec::new(20, 3, 2, 0.3, 0.05, 1)).unwrap();
        let e = DetectorEvaluator::new(&g, DetectorKind::GenerativeAe, small_training(), 2, CsmVariant::Improved)
            .unwrap()
            .with_time_budget(Some(Duration::ZERO));
        let rec = e.evaluate(&HyperparameterSpace::generative_default().config_at(0), 0);
        assert_eq!(rec.status, TrialStatus::FailedOor);
    }
}
