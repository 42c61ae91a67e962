use rayon::prelude::*;

use crate::error::Result;

use super::{finish, HyperparameterSpace, SearchOutcome, TrialEvaluator};

/// Evaluates every configuration of `space` once with `seed` (in parallel)
/// and returns the best by `T`. Trials come back in space order.
pub fn grid_search<E: TrialEvaluator + ?Sized>(
    evaluator: &E,
    space: &HyperparameterSpace,
    seed: u64,
) -> Result<SearchOutcome> {
    let trials = space
        .configurations()
        .into_par_iter()
        .map(|config| evaluator.evaluate(&config, seed))
        .collect();
    finish(trials)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::csm::Margin;
    use crate::error::Error;
    use crate::hpo::{Configuration, Dimension, TrialRecord, TrialStatus};

    fn alpha_space(values: Vec<f64>) -> HyperparameterSpace {
        HyperparameterSpace::new(vec![Dimension::real("alpha", values)]).unwrap()
    }

    #[test]
    fn single_configuration_space() {
        let space = alpha_space(vec![0.3]);
        let eval = |c: &Configuration, s: u64| TrialRecord::rated(c.clone(), s, Margin::Finite(-4.0));
        let out = grid_search(&eval, &space, 0).unwrap();
        assert_eq!(out.best, space.config_at(0));
        assert_eq!(out.trials.len(), 1);
    }

    #[test]
    fn planted_unimodal_peak() {
        let space = alpha_space(vec![0.0, 0.5, 1.0]);
        let eval = |c: &Configuration, s: u64| {
            let a = c.get("alpha").unwrap();
            TrialRecord::rated(c.clone(), s, Margin::Finite(1.0 - (a - 0.5).powi(2)))
        };
        let out = grid_search(&eval, &space, 0).unwrap();
        assert_eq!(out.best.get("alpha"), Some(0.5));
    }

    #[test]
    fn default_contrastive_grid_runs_52_trials() {
        let space = HyperparameterSpace::contrastive_default();
        let eval = |c: &Configuration, s: u64| TrialRecord::rated(c.clone(), s, Margin::Finite(0.0));
        let out = grid_search(&eval, &space, 3).unwrap();
        assert_eq!(out.trials.len(), 52);
        assert_eq!(out.best, space.config_at(0));
        assert!(out.trials.iter().all(|t| t.seed == 3));
    }

    #[test]
    fn failures_are_kept_but_not_selected() {
        let space = alpha_space(vec![0.0, 1.0]);
        let eval = |c: &Configuration, s: u64| {
            if c.get("alpha") == Some(1.0) {
                TrialRecord::failed(c.clone(), s, TrialStatus::FailedNan, "nan loss".into())
            } else {
                TrialRecord::rated(c.clone(), s, Margin::Finite(-1.0))
            }
        };
        let out = grid_search(&eval, &space, 0).unwrap();
        assert_eq!(out.trials.len(), 2);
        assert_eq!(out.best.get("alpha"), Some(0.0));

        let all_fail = |c: &Configuration, s: u64| {
            TrialRecord::failed(c.clone(), s, TrialStatus::FailedOom, "too big".into())
        };
        assert!(matches!(grid_search(&all_fail, &space, 0), Err(Error::Search(_))));
    }
}
