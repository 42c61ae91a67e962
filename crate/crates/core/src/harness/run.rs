use std::time::Duration;

use serde::{Deserialize, Serialize};

use crate::csm::{choose_k, CsmVariant, Margin};
use crate::detectors::DetectorKind;
use crate::error::{Error, Result};
use crate::graph::{
    generate_synthetic, load_graph, load_graph_mapped, AttributedGraph, IdMap, Labels,
};
use crate::hpo::{
    grid_search, smbo_search, DetectorEvaluator, HyperparameterSpace, SearchOutcome, TrialCache,
};
use crate::inject::{inject_with_manifest, InjectionManifest};
use crate::metrics::{roc_auc, SweepSummary};

use super::config::{DatasetSource, ExperimentConfig, SearchMode};

/// Phase boundaries reported to a [`PhaseObserver`].
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Phase {
    /// Training, rating and search for one seed. Labels are out of reach.
    Search { seed: u64 },
    /// Ground truth is joined for one seed.
    Report { seed: u64 },
}

pub trait PhaseObserver {
    fn on_phase(&self, phase: Phase);
}

/// Observer that ignores every phase.
pub struct Silent;

impl PhaseObserver for Silent {
    fn on_phase(&self, _: Phase) {}
}

/// A label-stripped graph with its ground truth held apart.
#[derive(Debug, Clone)]
pub struct PreparedData {
    pub graph: AttributedGraph,
    pub labels: Labels,
    pub injection: Option<InjectionManifest>,
}

impl PreparedData {
    /// Splits a labeled graph into the searchable graph and its labels.
    pub fn from_labeled(g: &AttributedGraph, injection: Option<InjectionManifest>) -> Result<Self> {
        let (graph, labels) = g.split_labels();
        let labels = labels.ok_or_else(|| Error::Validation("graph carries no labels".into()))?;
        Ok(PreparedData {
            graph,
            labels,
            injection,
        })
    }
}

/// Builds or loads the dataset named by `cfg` and plants anomalies if asked.
pub fn prepare_dataset(cfg: &ExperimentConfig) -> Result<PreparedData> {
    let base = match &cfg.dataset {
        DatasetSource::Synthetic(spec) => generate_synthetic(spec)?,
        DatasetSource::Files {
            edges,
            attributes,
            labels,
            id_map,
        } => match id_map {
            Some(map) => load_graph_mapped(edges, attributes, labels.as_deref(), &IdMap::load(map)?)?,
            None => load_graph(edges, attributes, labels.as_deref())?,
        },
    };
    match &cfg.injection {
        Some(inj) => {
            let (labeled, manifest) = inject_with_manifest(&base, &inj.plan()?)?;
            PreparedData::from_labeled(&labeled, Some(manifest))
        }
        None => PreparedData::from_labeled(&base, None),
    }
}

/// One seed's search with ground truth joined.
#[derive(Debug, Clone, PartialEq)]
pub struct SeedResult {
    pub seed: u64,
    pub outcome: SearchOutcome,
    pub summary: SweepSummary,
}

/// Per-metric arithmetic mean over seeds.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Aggregate {
    pub csm_auc: f64,
    pub min_auc: f64,
    pub median_auc: f64,
    pub max_auc: f64,
    pub variation: f64,
    pub gain_min: f64,
    pub gain_median: f64,
    pub gain_max: f64,
}

impl Aggregate {
    pub fn mean_of(summaries: &[&SweepSummary]) -> Result<Self> {
        if summaries.is_empty() {
            return Err(Error::Validation("nothing to aggregate".into()));
        }
        let m = |f: fn(&SweepSummary) -> f64| {
            summaries.iter().map(|s| f(s)).sum::<f64>() / summaries.len() as f64
        };
        Ok(Aggregate {
            csm_auc: m(|s| s.csm_auc),
            min_auc: m(|s| s.min_auc),
            median_auc: m(|s| s.median_auc),
            max_auc: m(|s| s.max_auc),
            variation: m(|s| s.variation),
            gain_min: m(|s| s.gain_min),
            gain_median: m(|s| s.gain_median),
            gain_max: m(|s| s.gain_max),
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentResult {
    pub config: ExperimentConfig,
    pub k: usize,
    pub node_count: usize,
    pub graph_hash: String,
    pub seeds: Vec<SeedResult>,
    pub aggregate: Aggregate,
    pub injection: Option<InjectionManifest>,
}

/// Evaluator for `cfg` on the label-stripped `graph` with margin size `k`.
pub fn evaluator_for<'g>(
    cfg: &ExperimentConfig,
    graph: &'g AttributedGraph,
    k: usize,
    variant: CsmVariant,
    cache: &TrialCache,
) -> Result<DetectorEvaluator<'g>> {
    Ok(
        DetectorEvaluator::new(graph, cfg.detector, cfg.training, k, variant)?
            .with_cache(cache.clone())
            .with_time_budget(cfg.trial_time_budget_secs.map(Duration::from_secs_f64)),
    )
}

/// Runs the configured searcher for one seed.
pub fn search_phase(
    cfg: &ExperimentConfig,
    evaluator: &DetectorEvaluator<'_>,
    space: &HyperparameterSpace,
    seed: u64,
) -> Result<SearchOutcome> {
    match cfg.search {
        SearchMode::Grid => grid_search(evaluator, space, seed),
        SearchMode::Smbo => smbo_search(evaluator, space, &cfg.smbo, seed),
    }
}

/// Joins ground truth: AUC for every ok trial and the sweep summary.
/// This is the only place labels are read.
pub fn report_phase(mut outcome: SearchOutcome, labels: &Labels, seed: u64) -> Result<SeedResult> {
    let truth = labels.read();
    for trial in &mut outcome.trials {
        if let Some(scores) = &trial.scores {
            trial.auc = Some(roc_auc(scores.as_slice(), truth)?);
        }
    }
    let aucs: Vec<f64> = outcome.trials.iter().filter_map(|t| t.auc).collect();
    let csm_auc = outcome
        .best_trial()
        .auc
        .ok_or_else(|| Error::Contract("selected trial has no scores".into()))?;
    Ok(SeedResult {
        seed,
        summary: SweepSummary::new(csm_auc, aucs)?,
        outcome,
    })
}

pub fn run_experiment(cfg: &ExperimentConfig) -> Result<ExperimentResult> {
    let data = prepare_dataset(cfg)?;
    run_prepared(cfg, &data, &TrialCache::new(), &Silent)
}

/// Search then report, seed by seed, on already prepared data.
pub fn run_prepared(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    cache: &TrialCache,
    observer: &dyn PhaseObserver,
) -> Result<ExperimentResult> {
    cfg.validate()?;
    let n = data.graph.node_count();
    let k = choose_k(n, cfg.anomaly_ratio)?;
    let space = cfg.space()?;
    let evaluator = evaluator_for(cfg, &data.graph, k, cfg.variant, cache)?;
    let mut seeds = Vec::with_capacity(cfg.seeds.len());
    for &seed in &cfg.seeds {
        observer.on_phase(Phase::Search { seed });
        let outcome = search_phase(cfg, &evaluator, &space, seed)?;
        observer.on_phase(Phase::Report { seed });
        seeds.push(report_phase(outcome, &data.labels, seed)?);
    }
    let aggregate = Aggregate::mean_of(&seeds.iter().map(|s| &s.summary).collect::<Vec<_>>())?;
    Ok(ExperimentResult {
        config: cfg.clone(),
        k,
        node_count: n,
        graph_hash: data.graph.content_hash(),
        seeds,
        aggregate,
        injection: data.injection.clone(),
    })
}

impl ExperimentResult {
    pub fn detector(&self) -> DetectorKind {
        self.config.detector
    }

    /// Mean selected `T` over seeds, or `None` when any seed's best is an
    /// infinite sentinel.
    pub fn mean_best_t(&self) -> Option<f64> {
        let ts: Option<Vec<f64>> = self
            .seeds
            .iter()
            .map(|s| Margin::finite(s.outcome.best_t))
            .collect();
        ts.map(|v| v.iter().sum::<f64>() / v.len() as f64)
    }

    pub fn trial_count(&self) -> usize {
        self.seeds.iter().map(|s| s.outcome.trials.len()).sum()
    }

    pub fn failed_trials(&self) -> usize {
        self.seeds
            .iter()
            .flat_map(|s| &s.outcome.trials)
            .filter(|t| !t.is_ok())
            .count()
    }
}
