//! Sweeps built on top of a single experiment: margin size, grid
//! granularity, and a cross-detector diagnostic.

use serde::{Deserialize, Serialize};

use crate::csm::{choose_k, Margin};
use crate::error::{Error, Result};
use crate::hpo::{grid_search, HyperparameterSpace, TrialCache};
use crate::metrics::pearson;

use super::config::ExperimentConfig;
use super::run::{evaluator_for, report_phase, run_prepared, search_phase, PreparedData, Silent};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSensitivityRow {
    pub ratio: f64,
    pub k: usize,
    pub seed: u64,
    pub best_config: String,
    pub best_t: Margin,
    pub csm_auc: f64,
    pub min_auc: f64,
    pub max_auc: f64,
}

/// Re-selects with each assumed ratio. Trials come from `cache`, so the
/// detectors are trained once and only the rating changes.
pub fn k_sensitivity(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    ratios: &[f64],
    cache: &TrialCache,
) -> Result<Vec<KSensitivityRow>> {
    if ratios.is_empty() {
        return Err(Error::Validation("no ratios given".into()));
    }
    let space = cfg.space()?;
    let n = data.graph.node_count();
    let mut rows = Vec::new();
    for &ratio in ratios {
        let k = choose_k(n, ratio)?;
        let evaluator = evaluator_for(cfg, &data.graph, k, cfg.variant, cache)?;
        for &seed in &cfg.seeds {
            let outcome = search_phase(cfg, &evaluator, &space, seed)?;
            let res = report_phase(outcome, &data.labels, seed)?;
            rows.push(KSensitivityRow {
                ratio,
                k,
                seed,
                best_config: res.outcome.best.to_string(),
                best_t: res.outcome.best_t,
                csm_auc: res.summary.csm_auc,
                min_auc: res.summary.min_auc,
                max_auc: res.summary.max_auc,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GranularityRow {
    pub level: String,
    pub seed: u64,
    pub configurations: usize,
    pub best_config: String,
    pub best_t: Margin,
    pub csm_auc: f64,
}

/// Grid search over each level in turn. Each level must be contained in the
/// next, so the selected `T` can only grow from level to level.
pub fn granularity_sweep(
    cfg: &ExperimentConfig,
    data: &PreparedData,
    levels: &[(String, HyperparameterSpace)],
    cache: &TrialCache,
) -> Result<Vec<GranularityRow>> {
    if levels.is_empty() {
        return Err(Error::Validation("no granularity levels given".into()));
    }
    for pair in levels.windows(2) {
        if !pair[0].1.is_subset_of(&pair[1].1) {
            return Err(Error::Validation(format!(
                "granularity level {} is not contained in level {}",
                pair[0].0, pair[1].0
            )));
        }
    }
    let k = choose_k(data.graph.node_count(), cfg.anomaly_ratio)?;
    let evaluator = evaluator_for(cfg, &data.graph, k, cfg.variant, cache)?;
    let mut rows = Vec::new();
    for (label, space) in levels {
        for &seed in &cfg.seeds {
            let outcome = grid_search(&evaluator, space, seed)?;
            let res = report_phase(outcome, &data.labels, seed)?;
            rows.push(GranularityRow {
                level: label.clone(),
                seed,
                configurations: space.size(),
                best_config: res.outcome.best.to_string(),
                best_t: res.outcome.best_t,
                csm_auc: res.summary.csm_auc,
            });
        }
    }
    Ok(rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossRow {
    pub name: String,
    pub detector: String,
    /// Seed-mean selected `T`; `None` when a seed selected an infinite margin.
    pub best_t: Option<f64>,
    pub csm_auc: f64,
}

/// Correlation between selected `T` and achieved AUC across detectors.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CrossStudy {
    pub rows: Vec<CrossRow>,
    /// `None` when undefined (constant or infinite `T`, or constant AUC).
    pub pearson: Option<f64>,
}

impl CrossStudy {
    pub const CAVEAT: &'static str =
        "diagnostic only: margins are not comparable across detectors and do not predict which detector performs best";

    pub fn from_rows(rows: Vec<CrossRow>) -> Result<Self> {
        if rows.len() < 3 {
            return Err(Error::Validation(format!(
                "cross-detector study needs at least 3 entries, got {}",
                rows.len()
            )));
        }
        let ts: Option<Vec<f64>> = rows.iter().map(|r| r.best_t).collect();
        let aucs: Vec<f64> = rows.iter().map(|r| r.csm_auc).collect();
        let pearson = ts.and_then(|t| pearson(&t, &aucs).ok());
        Ok(CrossStudy { rows, pearson })
    }

    pub fn pearson_text(&self) -> String {
        self.pearson.map_or_else(|| "undefined".to_string(), |r| format!("{r}"))
    }
}

/// Runs every config on the same dataset and correlates selected `T` with
/// AUC. All configs must describe the same graph and ground truth.
pub fn cross_detector_study(cfgs: &[ExperimentConfig]) -> Result<CrossStudy> {
    if cfgs.len() < 3 {
        return Err(Error::Validation(format!(
            "cross-detector study needs at least 3 configs, got {}",
            cfgs.len()
        )));
    }
    let data = super::run::prepare_dataset(&cfgs[0])?;
    let mut rows = Vec::with_capacity(cfgs.len());
    for cfg in cfgs {
        if cfg.dataset != cfgs[0].dataset || cfg.injection != cfgs[0].injection {
            return Err(Error::Validation(format!(
                "config {} uses a different dataset",
                cfg.name
            )));
        }
        let result = run_prepared(cfg, &data, &TrialCache::new(), &Silent)?;
        rows.push(CrossRow {
            name: cfg.name.clone(),
            detector: cfg.detector.to_string(),
            best_t: result.mean_best_t(),
            csm_auc: result.aggregate.csm_auc,
        });
    }
    CrossStudy::from_rows(rows)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(t: Option<f64>, auc: f64) -> CrossRow {
        CrossRow {
            name: "x".into(),
            detector: "d".into(),
            best_t: t,
            csm_auc: auc,
        }
    }

    #[test]
    fn cross_study_correlation() {
        let s = CrossStudy::from_rows(vec![row(Some(1.0), 2.0), row(Some(2.0), 4.0), row(Some(3.0), 6.0)]).unwrap();
        assert!((s.pearson.unwrap() - 1.0).abs() < 1e-12);

        let dup = CrossStudy::from_rows(vec![row(Some(1.0), 0.6), row(Some(1.0), 0.6), row(Some(2.0), 0.8)]).unwrap();
        assert!(dup.pearson.unwrap().is_finite());

        let flat = CrossStudy::from_rows(vec![row(Some(1.0), 0.6), row(Some(1.0), 0.7), row(Some(1.0), 0.8)]).unwrap();
        assert_eq!(flat.pearson_text(), "undefined");

        let inf = CrossStudy::from_rows(vec![row(None, 0.6), row(Some(1.0), 0.7), row(Some(2.0), 0.8)]).unwrap();
        assert!(inf.pearson.is_none());

        assert!(CrossStudy::from_rows(vec![row(Some(1.0), 0.5)]).is_err());
    }
}
