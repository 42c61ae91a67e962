//! CSV and JSON emission. Rows are sorted before writing so identical runs
//! produce identical bytes.

use std::path::Path;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::inject::InjectionManifest;

use super::config::ExperimentConfig;
use super::run::ExperimentResult;
use super::studies::{CrossStudy, GranularityRow, KSensitivityRow};

pub const TRIALS_FILE: &str = "trials.csv";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const MANIFEST_FILE: &str = "manifest.json";

pub const SUMMARY_HEADER: [&str; 13] = [
    "detector",
    "seed",
    "k",
    "variant",
    "best_config",
    "csm_auc",
    "min_auc",
    "median_auc",
    "max_auc",
    "variation",
    "gain_min",
    "gain_median",
    "gain_max",
];

fn csv_err(path: &Path, e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Validation(format!("{}: {other:?}", path.display())),
    }
}

fn write_rows(path: &Path, header: &[String], rows: &[Vec<String>]) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_err(path, e))?;
    w.write_record(header).map_err(|e| csv_err(path, e))?;
    for row in rows {
        w.write_record(row).map_err(|e| csv_err(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

fn opt<T: ToString>(v: Option<T>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

/// One row per trial: config columns, status, `T`, AUC.
pub fn write_trials_csv(result: &ExperimentResult, path: &Path) -> Result<()> {
    let space = result.config.space()?;
    let mut header = strings(&["detector", "seed"]);
    header.extend(space.dimensions().iter().map(|d| d.name.clone()));
    header.extend(strings(&["status", "t_value", "auc", "final_loss"]));

    let mut trials: Vec<_> = result
        .seeds
        .iter()
        .flat_map(|s| &s.outcome.trials)
        .collect();
    trials.sort_by(|a, b| a.seed.cmp(&b.seed).then_with(|| a.config.cmp(&b.config)));
    let rows: Vec<Vec<String>> = trials
        .into_iter()
        .map(|t| {
            let mut row = vec![result.detector().to_string(), t.seed.to_string()];
            row.extend(t.config.values().map(|v| v.to_string()));
            row.push(t.status.to_string());
            row.push(opt(t.t_value));
            row.push(opt(t.auc));
            row.push(opt(t.final_loss));
            row
        })
        .collect();
    write_rows(path, &header, &rows)
}

/// One row per seed plus a `mean` row.
pub fn write_summary_csv(result: &ExperimentResult, path: &Path) -> Result<()> {
    let det = result.detector().to_string();
    let k = result.k.to_string();
    let variant = result.config.variant.to_string();
    let mut rows: Vec<Vec<String>> = result
        .seeds
        .iter()
        .map(|s| {
            let m = &s.summary;
            vec![
                det.clone(),
                s.seed.to_string(),
                k.clone(),
                variant.clone(),
                s.outcome.best.to_string(),
                m.csm_auc.to_string(),
                m.min_auc.to_string(),
                m.median_auc.to_string(),
                m.max_auc.to_string(),
                m.variation.to_string(),
                m.gain_min.to_string(),
                m.gain_median.to_string(),
                m.gain_max.to_string(),
            ]
        })
        .collect();
    rows.sort_by_key(|r| r[1].parse::<u64>().unwrap_or(u64::MAX));
    let a = &result.aggregate;
    rows.push(vec![
        det,
        "mean".into(),
        k,
        variant,
        String::new(),
        a.csm_auc.to_string(),
        a.min_auc.to_string(),
        a.median_auc.to_string(),
        a.max_auc.to_string(),
        a.variation.to_string(),
        a.gain_min.to_string(),
        a.gain_median.to_string(),
        a.gain_max.to_string(),
    ]);
    write_rows(path, &strings(&SUMMARY_HEADER), &rows)
}

#[derive(Serialize)]
struct Manifest<'a> {
    tool: &'static str,
    version: &'static str,
    config: &'a ExperimentConfig,
    seeds: &'a [u64],
    k: usize,
    node_count: usize,
    graph_hash: &'a str,
    /// How the seeds relate to the injected anomalies.
    injection_policy: &'static str,
    injection: Option<&'a InjectionManifest>,
    trials: usize,
    failed_trials: usize,
}

pub fn write_manifest(result: &ExperimentResult, path: &Path) -> Result<()> {
    let manifest = Manifest {
        tool: env!("CARGO_PKG_NAME"),
        version: env!("CARGO_PKG_VERSION"),
        config: &result.config,
        seeds: &result.config.seeds,
        k: result.k,
        node_count: result.node_count,
        graph_hash: &result.graph_hash,
        injection_policy: "one injected graph shared by all seeds",
        injection: result.injection.as_ref(),
        trials: result.trial_count(),
        failed_trials: result.failed_trials(),
    };
    write_json(&manifest, path)
}

pub fn write_json<T: Serialize>(value: &T, path: &Path) -> Result<()> {
    let body = serde_json::to_string_pretty(value)
        .map_err(|e| Error::Validation(format!("json serialization: {e}")))?;
    std::fs::write(path, body + "\n").map_err(|e| Error::io(path, e))
}

/// Writes `trials.csv`, `summary.csv` and `manifest.json` into `dir`.
pub fn write_outputs(result: &ExperimentResult, dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    write_trials_csv(result, &dir.join(TRIALS_FILE))?;
    write_summary_csv(result, &dir.join(SUMMARY_FILE))?;
    write_manifest(result, &dir.join(MANIFEST_FILE))
}

pub fn write_k_sensitivity_csv(rows: &[KSensitivityRow], path: &Path) -> Result<()> {
    let header = strings(&["ratio", "k", "seed", "best_config", "best_t", "csm_auc", "min_auc", "max_auc"]);
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.ratio.to_string(),
                r.k.to_string(),
                r.seed.to_string(),
                r.best_config.clone(),
                r.best_t.to_string(),
                r.csm_auc.to_string(),
                r.min_auc.to_string(),
                r.max_auc.to_string(),
            ]
        })
        .collect();
    write_rows(path, &header, &body)
}

pub fn write_granularity_csv(rows: &[GranularityRow], path: &Path) -> Result<()> {
    let header = strings(&["level", "seed", "configurations", "best_config", "best_t", "csm_auc"]);
    let body: Vec<Vec<String>> = rows
        .iter()
        .map(|r| {
            vec![
                r.level.clone(),
                r.seed.to_string(),
                r.configurations.to_string(),
                r.best_config.clone(),
                r.best_t.to_string(),
                r.csm_auc.to_string(),
            ]
        })
        .collect();
    write_rows(path, &header, &body)
}

pub fn write_cross_csv(study: &CrossStudy, path: &Path) -> Result<()> {
    let header = strings(&["name", "detector", "best_t", "csm_auc"]);
    let mut body: Vec<Vec<String>> = study
        .rows
        .iter()
        .map(|r| {
            vec![
                r.name.clone(),
                r.detector.clone(),
                r.best_t.map_or_else(|| "inf".into(), |t| t.to_string()),
                r.csm_auc.to_string(),
            ]
        })
        .collect();
    body.push(vec![
        "pearson".into(),
        CrossStudy::CAVEAT.into(),
        study.pearson_text(),
        String::new(),
    ]);
    write_rows(path, &header, &body)
}

/// Renders a `summary.csv` as an aligned text table.
pub fn render_summary(path: &Path) -> Result<String> {
    let mut r = csv::Reader::from_path(path).map_err(|e| csv_err(path, e))?;
    let header: Vec<String> = r
        .headers()
        .map_err(|e| csv_err(path, e))?
        .iter()
        .map(str::to_string)
        .collect();
    if header != SUMMARY_HEADER {
        return Err(Error::Parse {
            path: path.to_path_buf(),
            line: 1,
            message: "not a summary file".into(),
        });
    }
    let mut rows = vec![header.clone()];
    for rec in r.records() {
        let rec = rec.map_err(|e| csv_err(path, e))?;
        rows.push(
            rec.iter()
                .enumerate()
                .map(|(i, f)| match (i, f.parse::<f64>()) {
                    (5.., Ok(v)) => format!("{v:.4}"),
                    _ => f.to_string(),
                })
                .collect(),
        );
    }
    let widths: Vec<usize> = (0..header.len())
        .map(|c| rows.iter().map(|r| r[c].len()).max().unwrap_or(0))
        .collect();
    let mut out = String::new();
    for row in &rows {
        let line: Vec<String> = row
            .iter()
            .zip(&widths)
            .map(|(cell, &w)| format!("{cell:<w$}"))
            .collect();
        out.push_str(line.join("  ").trim_end());
        out.push('\n');
    }
    Ok(out)
}
