use std::collections::BTreeMap;

use gadsel::csm::{choose_k, Margin};
use gadsel::harness::report::{write_outputs, MANIFEST_FILE, SUMMARY_FILE, SUMMARY_HEADER, TRIALS_FILE};
use gadsel::harness::{
    cross_detector_study, granularity_sweep, k_sensitivity, prepare_dataset, run_prepared,
    ExperimentConfig, Silent,
};
use gadsel::hpo::{HyperparameterSpace, TrialCache};
use gadsel::Error;

fn config(detector: &str, seeds: &str, grid: &str) -> ExperimentConfig {
    ExperimentConfig::from_toml_str(&format!(
        r#"
        detector = "{detector}"
        anomaly_ratio = 0.1
        seeds = {seeds}

        [dataset]
        kind = "synthetic"
        n = 60
        d = 4
        communities = 3
        intra_p = 0.25
        inter_p = 0.01
        seed = 11

        [injection]
        anomalies = 6
        clique_size = 3
        candidate_pool = 10
        seed = 2

        [training]
        epochs = 8
        hidden_dim = 8
        embed_dim = 4
        rounds = 2
        learning_rate = 0.01
        {grid}
        "#
    ))
    .unwrap()
}

fn csv_rows(path: &std::path::Path) -> (Vec<String>, Vec<Vec<String>>) {
    let mut r = csv::Reader::from_path(path).unwrap();
    let header = r.headers().unwrap().iter().map(str::to_string).collect();
    let rows = r
        .records()
        .map(|rec| rec.unwrap().iter().map(str::to_string).collect())
        .collect();
    (header, rows)
}

#[test]
fn single_configuration_is_degenerate() {
    let cfg = config(
        "generative_ae",
        "[5]",
        "[[grid]]\nname = \"alpha\"\nkind = \"real\"\nvalues = [0.5]",
    );
    let data = prepare_dataset(&cfg).unwrap();
    let r = run_prepared(&cfg, &data, &TrialCache::new(), &Silent).unwrap();
    let s = &r.seeds[0].summary;
    assert_eq!(s.aucs.len(), 1);
    assert_eq!(s.csm_auc, s.min_auc);
    assert_eq!(s.csm_auc, s.median_auc);
    assert_eq!(s.csm_auc, s.max_auc);
    assert_eq!((s.gain_min, s.gain_median, s.gain_max, s.variation), (0.0, 0.0, 0.0, 0.0));
}

#[test]
fn contrastive_grid_accounting_and_report_arithmetic() {
    let cfg = config("contrastive_egonet", "[0, 1, 2, 3, 4]", "");
    let data = prepare_dataset(&cfg).unwrap();
    let r = run_prepared(&cfg, &data, &TrialCache::new(), &Silent).unwrap();
    assert_eq!(r.trial_count(), 5 * 52);
    for s in &r.seeds {
        assert_eq!(s.outcome.trials.len(), 52);
    }

    let dir = tempfile::tempdir().unwrap();
    write_outputs(&r, dir.path()).unwrap();
    let (header, trials) = csv_rows(&dir.path().join(TRIALS_FILE));
    assert_eq!(
        header,
        ["detector", "seed", "alpha", "K", "status", "t_value", "auc", "final_loss"]
    );
    assert_eq!(trials.len(), 260);

    let (header, summary) = csv_rows(&dir.path().join(SUMMARY_FILE));
    assert_eq!(header, SUMMARY_HEADER);
    assert_eq!(summary.len(), 6);
    assert_eq!(summary[5][1], "mean");

    // recompute each seed row from the trial rows
    let mut by_seed: BTreeMap<String, Vec<f64>> = BTreeMap::new();
    for t in &trials {
        if t[4] == "ok" {
            by_seed.entry(t[1].clone()).or_default().push(t[6].parse().unwrap());
        }
    }
    let col = |row: &[String], name: &str| -> f64 {
        row[SUMMARY_HEADER.iter().position(|h| *h == name).unwrap()].parse().unwrap()
    };
    let mut means = [0.0; 8];
    for row in &summary[..5] {
        let mut aucs = by_seed[&row[1]].clone();
        aucs.sort_by(f64::total_cmp);
        let (min, max) = (aucs[0], *aucs.last().unwrap());
        let mid = aucs.len() / 2;
        let median = if aucs.len() % 2 == 1 {
            aucs[mid]
        } else {
            (aucs[mid - 1] + aucs[mid]) / 2.0
        };
        let csm = col(row, "csm_auc");
        assert!(min <= csm && csm <= max);
        let expect = [
            csm,
            min,
            median,
            max,
            (max - min) / max,
            (csm - min) / min,
            (csm - median) / median,
            (csm - max) / max,
        ];
        let names = ["csm_auc", "min_auc", "median_auc", "max_auc", "variation", "gain_min", "gain_median", "gain_max"];
        for (i, (name, want)) in names.iter().zip(expect).enumerate() {
            assert_eq!(col(row, name), want, "{name} seed {}", row[1]);
            means[i] += want / 5.0;
        }
    }
    let names = ["csm_auc", "min_auc", "median_auc", "max_auc", "variation", "gain_min", "gain_median", "gain_max"];
    for (name, want) in names.iter().zip(means) {
        assert!((col(&summary[5], name) - want).abs() < 1e-12, "mean {name}");
    }

    let manifest: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(dir.path().join(MANIFEST_FILE)).unwrap()).unwrap();
    assert_eq!(manifest["seeds"], serde_json::json!([0, 1, 2, 3, 4]));
    assert_eq!(manifest["trials"], 260);
    assert_eq!(manifest["k"], 6);
    assert!(manifest["version"].is_string());
    assert!(manifest["injection_policy"].as_str().unwrap().contains("shared"));
}

#[test]
fn k_sensitivity_reuses_trained_detectors() {
    let cfg = config("generative_ae", "[0, 1]", "");
    let data = prepare_dataset(&cfg).unwrap();
    let cache = TrialCache::new();
    let ratios = [0.05, 0.1, 0.15];
    let rows = k_sensitivity(&cfg, &data, &ratios, &cache).unwrap();
    assert_eq!(rows.len(), 6);
    // 12 configurations x 2 seeds trained once; every later ratio hits
    assert_eq!(cache.misses(), 24);
    assert_eq!(cache.hits(), 48);

    let baseline = run_prepared(&cfg, &data, &TrialCache::new(), &Silent).unwrap();
    for seed in [0, 1] {
        let row = rows.iter().find(|r| r.ratio == 0.1 && r.seed == seed).unwrap();
        let s = baseline.seeds.iter().find(|s| s.seed == seed).unwrap();
        assert_eq!(row.k, choose_k(60, 0.1).unwrap());
        assert_eq!(row.best_config, s.outcome.best.to_string());
        assert_eq!(row.csm_auc, s.summary.csm_auc);
        // the trained detectors do not depend on k: the sweep range is shared
        for r in rows.iter().filter(|r| r.seed == seed) {
            assert_eq!((r.min_auc, r.max_auc), (s.summary.min_auc, s.summary.max_auc));
        }
    }
    assert!(k_sensitivity(&cfg, &data, &[0.6], &cache).is_err());
}

#[test]
fn granularity_levels_give_nondecreasing_margin() {
    let cfg = config("contrastive_egonet", "[0]", "");
    let data = prepare_dataset(&cfg).unwrap();
    let levels: Vec<(String, HyperparameterSpace)> = (1..=4)
        .map(|l| (format!("level{l}"), HyperparameterSpace::contrastive_granularity(l).unwrap()))
        .collect();
    let rows = granularity_sweep(&cfg, &data, &levels, &TrialCache::new()).unwrap();
    assert_eq!(rows.len(), 4);
    assert_eq!(
        rows.iter().map(|r| r.configurations).collect::<Vec<_>>(),
        [12, 52, 92, 258]
    );
    for pair in rows.windows(2) {
        assert!(pair[1].best_t >= pair[0].best_t, "{pair:?}");
    }

    let same = vec![levels[0].clone(), levels[0].clone()];
    let rows = granularity_sweep(&cfg, &data, &same, &TrialCache::new()).unwrap();
    assert_eq!(rows[0].best_config, rows[1].best_config);
    assert_eq!(rows[0].best_t, rows[1].best_t);
    assert_eq!(rows[0].csm_auc, rows[1].csm_auc);

    let reversed = vec![levels[1].clone(), levels[0].clone()];
    assert!(matches!(
        granularity_sweep(&cfg, &data, &reversed, &TrialCache::new()),
        Err(Error::Validation(_))
    ));
}

#[test]
fn granularity_grids_match_published_lists() {
    let alpha = |level: u8| -> Vec<f64> {
        HyperparameterSpace::contrastive_granularity(level).unwrap().dimensions()[0].values.clone()
    };
    let k = |level: u8| -> Vec<f64> {
        HyperparameterSpace::contrastive_granularity(level).unwrap().dimensions()[1].values.clone()
    };
    assert_eq!(alpha(1), [0.0, 0.2, 0.4, 0.6, 0.8, 1.0]);
    assert_eq!(k(1), [2.0, 4.0]);
    assert_eq!(alpha(2), [0.0, 0.01, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99, 1.0]);
    assert_eq!(k(2), [2.0, 3.0, 4.0, 5.0]);
    assert_eq!(
        alpha(3),
        [
            0.0, 0.01, 0.05, 0.1, 0.15, 0.2, 0.25, 0.3, 0.35, 0.4, 0.45, 0.5, 0.55, 0.6, 0.65, 0.7,
            0.75, 0.8, 0.85, 0.9, 0.95, 0.99, 1.0
        ]
    );
    assert_eq!(k(3), [2.0, 3.0, 4.0, 5.0]);
    assert_eq!(
        alpha(4),
        [
            0.0, 0.01, 0.025, 0.05, 0.075, 0.1, 0.125, 0.15, 0.175, 0.2, 0.225, 0.25, 0.275, 0.3,
            0.325, 0.35, 0.375, 0.4, 0.425, 0.45, 0.475, 0.5, 0.525, 0.55, 0.575, 0.6, 0.625, 0.65,
            0.675, 0.7, 0.725, 0.75, 0.775, 0.8, 0.825, 0.85, 0.875, 0.9, 0.925, 0.95, 0.975, 0.99,
            1.0
        ]
    );
    assert_eq!(k(4), [2.0, 3.0, 4.0, 5.0, 6.0, 7.0]);
    assert_eq!(
        HyperparameterSpace::generative_default().dimensions()[0].values,
        [0.01, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.99, 1.0]
    );
}

#[test]
fn cross_study_over_three_configs() {
    let grid_a = "[[grid]]\nname = \"alpha\"\nkind = \"real\"\nvalues = [0.2, 0.8]";
    let grid_c = "[[grid]]\nname = \"alpha\"\nkind = \"real\"\nvalues = [0.5]\n[[grid]]\nname = \"K\"\nkind = \"integer\"\nvalues = [2, 3]";
    let mut a = config("generative_ae", "[0]", grid_a);
    a.name = "gen-coarse".into();
    let mut b = config("generative_ae", "[0]", "");
    b.name = "gen-full".into();
    let mut c = config("contrastive_egonet", "[0]", grid_c);
    c.name = "contrastive".into();
    let study = cross_detector_study(&[a.clone(), b.clone(), c]).unwrap();
    assert_eq!(study.rows.len(), 3);
    if study.rows.iter().all(|r| r.best_t.is_some()) {
        let r = study.pearson.expect("defined for finite, varying margins");
        assert!((-1.0..=1.0).contains(&r));
    }
    assert!(cross_detector_study(&[a.clone(), b.clone()]).is_err());

    let mut other = b.clone();
    other.injection.as_mut().unwrap().seed = 99;
    assert!(matches!(cross_detector_study(&[a, b, other]), Err(Error::Validation(_))));
}

#[test]
fn all_failed_trials_is_a_search_error() {
    let mut cfg = config("generative_ae", "[0]", "");
    cfg.training.max_nodes = 10;
    let data = prepare_dataset(&cfg).unwrap();
    match run_prepared(&cfg, &data, &TrialCache::new(), &Silent) {
        Err(Error::Search(_)) => {}
        other => panic!("expected a search error, got {other:?}"),
    }
}

#[test]
fn smbo_mode_runs_budget_trials() {
    let mut cfg = config("contrastive_egonet", "[0, 1]", "");
    cfg.search = gadsel::harness::SearchMode::Smbo;
    cfg.validate().unwrap();
    let data = prepare_dataset(&cfg).unwrap();
    let r = run_prepared(&cfg, &data, &TrialCache::new(), &Silent).unwrap();
    assert_eq!(r.trial_count(), 2 * 15);
    for s in &r.seeds {
        let best = s.outcome.best_trial();
        assert!(s.outcome.trials.iter().all(|t| t.t_value.unwrap_or(Margin::NegInf) <= best.t_value.unwrap()));
    }
}

#[test]
fn shipped_configs_are_valid() {
    let dir = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let mut count = 0;
    for entry in std::fs::read_dir(&dir).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_some_and(|e| e == "toml") {
            let cfg = ExperimentConfig::load(&path).unwrap_or_else(|e| panic!("{}: {e}", path.display()));
            cfg.space().unwrap();
            count += 1;
        }
    }
    assert!(count >= 3);
}
