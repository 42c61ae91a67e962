use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::csm::Margin;
use crate::error::{Error, Result};

use super::{finish, GpSettings, HyperparameterSpace, SearchOutcome, SurrogateState, TrialEvaluator, TrialRecord};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SmboSettings {
    /// Uniformly sampled configurations evaluated before the surrogate.
    pub init: usize,
    /// Total evaluations, including the initial ones.
    pub budget: usize,
    /// Unevaluated candidates scored by EI per iteration.
    pub pool_size: usize,
    pub gp: GpSettings,
}

impl Default for SmboSettings {
    fn default() -> Self {
        SmboSettings {
            init: 5,
            budget: 15,
            pool_size: 20,
            gp: GpSettings::default(),
        }
    }
}

impl SmboSettings {
    pub fn validate_for(&self, space_size: usize) -> Result<()> {
        if self.init < 2 {
            return Err(Error::Validation("SMBO needs at least two initial points".into()));
        }
        if self.budget < self.init {
            return Err(Error::Validation(format!(
                "SMBO budget {} below initial sample {}",
                self.budget, self.init
            )));
        }
        if self.pool_size < 1 {
            return Err(Error::Validation("SMBO pool size must be at least 1".into()));
        }
        if self.budget > space_size {
            return Err(Error::Validation(format!(
                "SMBO budget {} exceeds the {space_size} configurations",
                self.budget
            )));
        }
        self.gp.validate()
    }
}

/// Surrogate targets for evaluated trials. Infinite margins and failed
/// trials are mapped three ranges beyond the finite extremes so the GP stays
/// finite while still ranking them.
fn surrogate_targets(trials: &[TrialRecord]) -> Vec<f64> {
    let finite: Vec<f64> = trials
        .iter()
        .filter_map(|t| t.t_value.and_then(Margin::finite))
        .collect();
    let (lo, hi) = if finite.is_empty() {
        (0.0, 0.0)
    } else {
        let lo = finite.iter().copied().fold(f64::INFINITY, f64::min);
        let hi = finite.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        (lo, hi)
    };
    let range = if hi > lo { hi - lo } else { 1.0 };
    trials
        .iter()
        .map(|t| match t.t_value {
            Some(Margin::Finite(v)) => v,
            Some(Margin::PosInf) => hi + 3.0 * range,
            Some(Margin::NegInf) | None => lo - 3.0 * range,
        })
        .collect()
}

/// Sequential model-based search: `init` random configurations, then one
/// EI-maximizing configuration per iteration until `budget` evaluations.
/// Never re-evaluates a configuration.
pub fn smbo_search<E: TrialEvaluator + ?Sized>(
    evaluator: &E,
    space: &HyperparameterSpace,
    settings: &SmboSettings,
    seed: u64,
) -> Result<SearchOutcome> {
    let m = space.size();
    settings.validate_for(m)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut evaluated = vec![false; m];

    let initial: Vec<usize> = index::sample(&mut rng, m, settings.init).into_vec();
    let mut trials: Vec<TrialRecord> = initial
        .par_iter()
        .map(|&i| evaluator.evaluate(&space.config_at(i), seed))
        .collect();
    for &i in &initial {
        evaluated[i] = true;
    }

    while trials.len() < settings.budget {
        let targets = surrogate_targets(&trials);
        let pairs = trials
            .iter()
            .zip(targets)
            .map(|(t, y)| (t.config.clone(), y))
            .collect();
        let state = SurrogateState::fit(space, pairs, settings.gp)?;

        let remaining: Vec<usize> = (0..m).filter(|&i| !evaluated[i]).collect();
        let mut pool: Vec<usize> = if settings.pool_size >= remaining.len() {
            remaining
        } else {
            index::sample(&mut rng, remaining.len(), settings.pool_size)
                .into_iter()
                .map(|j| remaining[j])
                .collect()
        };
        pool.sort_unstable();
        let scored: Vec<(usize, f64)> = pool
            .par_iter()
            .map(|&i| Ok((i, state.expected_improvement(space, &space.config_at(i))?)))
            .collect::<Result<_>>()?;
        // first maximum in space order: ties go to the smaller configuration
        let (pick, _) = scored
            .into_iter()
            .fold(None, |best: Option<(usize, f64)>, (i, ei)| match best {
                Some((_, b)) if b >= ei => best,
                _ => Some((i, ei)),
            })
            .expect("pool is non-empty while budget <= M");
        evaluated[pick] = true;
        trials.push(evaluator.evaluate(&space.config_at(pick), seed));
    }
    finish(trials)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::hpo::{grid_search, Configuration, Dimension, TrialStatus};

    fn bowl(c: &Configuration, s: u64) -> TrialRecord {
        let a = c.get("alpha").unwrap();
        let k = c.get("K").unwrap();
        TrialRecord::rated(c.clone(), s, Margin::Finite(10.0 - 8.0 * (a - 0.7).powi(2) - (k - 4.0).powi(2)))
    }

    #[test]
    fn budget_is_exact_and_configs_unique() {
        let space = HyperparameterSpace::contrastive_default();
        let settings = SmboSettings::default();
        let out = smbo_search(&bowl, &space, &settings, 11).unwrap();
        assert_eq!(out.trials.len(), settings.budget);
        let mut idx: Vec<usize> = out.trials.iter().map(|t| space.index_of(&t.config).unwrap()).collect();
        idx.sort_unstable();
        idx.dedup();
        assert_eq!(idx.len(), settings.budget);
    }

    #[test]
    fn full_budget_matches_grid() {
        let space = HyperparameterSpace::contrastive_default();
        let settings = SmboSettings {
            budget: space.size(),
            pool_size: space.size(),
            ..SmboSettings::default()
        };
        let smbo = smbo_search(&bowl, &space, &settings, 2).unwrap();
        let grid = grid_search(&bowl, &space, 2).unwrap();
        assert_eq!(smbo.best_t, grid.best_t);
        assert_eq!(smbo.best, grid.best);
    }

    #[test]
    fn deterministic_per_seed() {
        let space = HyperparameterSpace::contrastive_default();
        let s = SmboSettings::default();
        let a = smbo_search(&bowl, &space, &s, 5).unwrap();
        let b = smbo_search(&bowl, &space, &s, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn settings_are_validated() {
        let space = HyperparameterSpace::contrastive_default();
        let bad = [
            SmboSettings { init: 1, ..SmboSettings::default() },
            SmboSettings { budget: 3, ..SmboSettings::default() },
            SmboSettings { pool_size: 0, ..SmboSettings::default() },
            SmboSettings { budget: 53, ..SmboSettings::default() },
        ];
        for s in bad {
            assert!(smbo_search(&bowl, &space, &s, 0).is_err(), "{s:?}");
        }
    }

    #[test]
    fn failed_and_infinite_targets_stay_finite() {
        let space = HyperparameterSpace::new(vec![Dimension::real("alpha", vec![0.0, 0.5, 1.0])]).unwrap();
        let trials = vec![
            TrialRecord::rated(space.config_at(0), 0, Margin::Finite(1.0)),
            TrialRecord::rated(space.config_at(1), 0, Margin::Finite(3.0)),
            TrialRecord::rated(space.config_at(2), 0, Margin::PosInf),
            TrialRecord::failed(space.config_at(2), 0, TrialStatus::FailedNan, String::new()),
        ];
        assert_eq!(surrogate_targets(&trials), vec![1.0, 3.0, 9.0, -5.0]);
    }
}
