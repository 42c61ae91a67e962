use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::csm::CsmVariant;
use crate::detectors::{DetectorKind, TrainingParams};
use crate::error::{Error, Result};
use crate::graph::SyntheticSpec;
use crate::hpo::{Dimension, HyperparameterSpace, SmboSettings};
use crate::inject::InjectionPlan;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SearchMode {
    Grid,
    Smbo,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    Files {
        edges: PathBuf,
        attributes: PathBuf,
        /// Ground truth; omit when an injection plan supplies it.
        #[serde(default)]
        labels: Option<PathBuf>,
        /// CSV `external_id,internal_id` for non-integer node ids.
        #[serde(default)]
        id_map: Option<PathBuf>,
    },
}

/// Anomalies to plant before searching.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InjectionConfig {
    /// Total anomalies, split between cliques and attribute swaps.
    pub anomalies: usize,
    #[serde(default = "default_clique_size")]
    pub clique_size: usize,
    #[serde(default = "default_candidate_pool")]
    pub candidate_pool: usize,
    #[serde(default)]
    pub seed: u64,
}

fn default_clique_size() -> usize {
    InjectionPlan::DEFAULT_CLIQUE_SIZE
}

fn default_candidate_pool() -> usize {
    InjectionPlan::DEFAULT_CANDIDATE_POOL
}

impl InjectionConfig {
    pub fn plan(&self) -> Result<InjectionPlan> {
        InjectionPlan::balanced(self.anomalies, self.clique_size, self.candidate_pool, self.seed)
    }
}

/// One experiment, as read from a TOML file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default = "default_name")]
    pub name: String,
    pub detector: DetectorKind,
    #[serde(default = "default_search")]
    pub search: SearchMode,
    #[serde(default = "default_variant")]
    pub variant: CsmVariant,
    /// Assumed anomaly ratio; sets `k = max(1, round(ratio * n))`.
    pub anomaly_ratio: f64,
    pub seeds: Vec<u64>,
    /// Free-form grid label echoed into reports.
    #[serde(default)]
    pub granularity: Option<String>,
    #[serde(default = "default_output")]
    pub output_dir: PathBuf,
    /// Per-trial wall-clock budget; slower trials are marked out of resources.
    #[serde(default)]
    pub trial_time_budget_secs: Option<f64>,
    pub dataset: DatasetSource,
    #[serde(default)]
    pub injection: Option<InjectionConfig>,
    #[serde(default)]
    pub training: TrainingParams,
    #[serde(default)]
    pub smbo: SmboSettings,
    /// Search grid; the detector's default grid when empty.
    #[serde(default)]
    pub grid: Vec<Dimension>,
}

fn default_name() -> String {
    "experiment".into()
}

fn default_search() -> SearchMode {
    SearchMode::Grid
}

fn default_variant() -> CsmVariant {
    CsmVariant::Improved
}

fn default_output() -> PathBuf {
    PathBuf::from("out")
}

impl ExperimentConfig {
    /// Parses and validates; every failure is a [`Error::Config`].
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: ExperimentConfig =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Reads a config file. Relative dataset paths resolve against the
    /// file's directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let mut cfg = Self::from_toml_str(&text)
            .map_err(|e| Error::Config(format!("{}: {}", path.display(), strip_prefix(&e))))?;
        if let Some(base) = path.parent() {
            cfg.resolve_paths(base);
        }
        Ok(cfg)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let fix = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        if let DatasetSource::Files {
            edges,
            attributes,
            labels,
            id_map,
        } = &mut self.dataset
        {
            fix(edges);
            fix(attributes);
            if let Some(l) = labels {
                fix(l);
            }
            if let Some(m) = id_map {
                fix(m);
            }
        }
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn validate(&self) -> Result<()> {
        self.check().map_err(|e| match e {
            Error::Config(m) => Error::Config(m),
            other => Error::Config(strip_prefix(&other)),
        })
    }

    fn check(&self) -> Result<()> {
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds must not be empty".into()));
        }
        let mut seen = self.seeds.clone();
        seen.sort_unstable();
        seen.dedup();
        if seen.len() != self.seeds.len() {
            return Err(Error::Config("seeds must be distinct".into()));
        }
        if !(self.anomaly_ratio > 0.0 && self.anomaly_ratio < 0.5) {
            return Err(Error::Config(format!(
                "anomaly_ratio {} outside (0, 0.5)",
                self.anomaly_ratio
            )));
        }
        if let Some(b) = self.trial_time_budget_secs {
            if !(b > 0.0 && b.is_finite()) {
                return Err(Error::Config("trial_time_budget_secs must be positive".into()));
            }
        }
        self.training.validate()?;
        let space = self.space()?;
        if self.search == SearchMode::Smbo {
            self.smbo.validate_for(space.size())?;
        }
        match &self.dataset {
            DatasetSource::Synthetic(spec) => {
                spec.validate()?;
                if self.injection.is_none() {
                    return Err(Error::Config(
                        "a synthetic dataset needs an [injection] section for ground truth".into(),
                    ));
                }
            }
            DatasetSource::Files { labels, .. } => {
                if labels.is_some() == self.injection.is_some() {
                    return Err(Error::Config(
                        "a file dataset needs exactly one of dataset.labels or [injection]".into(),
                    ));
                }
            }
        }
        if let Some(inj) = &self.injection {
            inj.plan()?;
        }
        if self.detector == DetectorKind::ContrastiveEgonet {
            let max_k = space
                .dimensions()
                .iter()
                .find(|d| d.name == "K")
                .and_then(|d| d.values.last().copied())
                .unwrap_or(0.0);
            if let DatasetSource::Synthetic(spec) = &self.dataset {
                if max_k as usize >= spec.n {
                    return Err(Error::Config(format!("K = {max_k} not below n = {}", spec.n)));
                }
            }
        }
        Ok(())
    }

    /// The search space: the `grid` section, or the detector's default.
    pub fn space(&self) -> Result<HyperparameterSpace> {
        let space = if self.grid.is_empty() {
            match self.detector {
                DetectorKind::GenerativeAe => HyperparameterSpace::generative_default(),
                DetectorKind::ContrastiveEgonet => HyperparameterSpace::contrastive_default(),
            }
        } else {
            HyperparameterSpace::new(self.grid.clone())?
        };
        let names: Vec<&str> = space.dimensions().iter().map(|d| d.name.as_str()).collect();
        if names != self.detector.dimension_names() {
            return Err(Error::Config(format!(
                "grid dimensions {names:?} do not match {} ({:?})",
                self.detector,
                self.detector.dimension_names()
            )));
        }
        if let Some(alpha) = space.dimensions().iter().find(|d| d.name == "alpha") {
            if alpha.values.iter().any(|a| !(0.0..=1.0).contains(a)) {
                return Err(Error::Config("alpha values must lie in [0, 1]".into()));
            }
        }
        if let Some(k) = space.dimensions().iter().find(|d| d.name == "K") {
            if k.values.iter().any(|&v| v < 2.0 || v.fract() != 0.0) {
                return Err(Error::Config("K values must be integers >= 2".into()));
            }
        }
        Ok(space)
    }
}

fn strip_prefix(e: &Error) -> String {
    match e {
        Error::Config(m) | Error::Validation(m) | Error::Capacity(m) => m.clone(),
        other => other.to_string(),
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    const MINIMAL: &str = r#"
        detector = "generative_ae"
        anomaly_ratio = 0.05
        seeds = [0, 1]

        [dataset]
        kind = "synthetic"
        n = 60
        d = 4
        communities = 3
        intra_p = 0.2
        inter_p = 0.01
        seed = 1

        [injection]
        anomalies = 6
        clique_size = 3
    "#;

    #[test]
    fn minimal_config_uses_defaults() {
        let cfg = ExperimentConfig::from_toml_str(MINIMAL).unwrap();
        assert_eq!(cfg.search, SearchMode::Grid);
        assert_eq!(cfg.variant, CsmVariant::Improved);
        assert_eq!(cfg.space().unwrap().size(), 12);
        assert_eq!(cfg.training, TrainingParams::default());
        let again = ExperimentConfig::from_toml_str(&cfg.to_toml().unwrap()).unwrap();
        assert_eq!(again, cfg);
    }

    #[test]
    fn custom_grid() {
        let text = format!(
            "{MINIMAL}\n[[grid]]\nname = \"alpha\"\nkind = \"real\"\nvalues = [0.25, 0.75]\n"
        );
        let cfg = ExperimentConfig::from_toml_str(&text).unwrap();
        assert_eq!(cfg.space().unwrap().size(), 2);
    }

    #[test]
    fn invalid_configs_are_config_errors() {
        let cases = [
            MINIMAL.replace("seeds = [0, 1]", "seeds = []"),
            MINIMAL.replace("anomaly_ratio = 0.05", "anomaly_ratio = 0.5"),
            MINIMAL.replace("generative_ae", "isolation_forest"),
            MINIMAL.replace("intra_p = 0.2", "intra_p = 1.5"),
            MINIMAL.replace("[injection]\n        anomalies = 6", "[injection]\n        anomalies = 2"),
            MINIMAL.replace("seed = 1", "seed = 1\n        colour = 3"),
            MINIMAL.replace("kind = \"synthetic\"", "kind = \"files\"\n        edges = \"e\"\n        attributes = \"a\"\n        labelz = \"l\""),
            format!("{MINIMAL}\n[[grid]]\nname = \"K\"\nkind = \"integer\"\nvalues = [2]\n"),
            format!("{MINIMAL}\n[[grid]]\nname = \"alpha\"\nkind = \"real\"\nvalues = []\n"),
        ];
        for (i, text) in cases.iter().enumerate() {
            let err = ExperimentConfig::from_toml_str(text).unwrap_err();
            assert!(matches!(err, Error::Config(_)), "case {i}: {err:?}");
        }
    }

    #[test]
    fn smbo_budget_checked_against_grid() {
        let text = MINIMAL.replace(
            "detector = \"generative_ae\"",
            "detector = \"generative_ae\"\nsearch = \"smbo\"",
        ) + "\n[smbo]\nbudget = 40\n";
        assert!(matches!(ExperimentConfig::from_toml_str(&text), Err(Error::Config(_))));
    }
}
