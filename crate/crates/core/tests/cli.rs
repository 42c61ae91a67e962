use std::path::Path;
use std::process::{Command, Output};

fn gadsel(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_gadsel"))
        .args(args)
        .output()
        .expect("run gadsel")
}

fn write_config(dir: &Path, extra: &str) -> String {
    let path = dir.join("exp.toml");
    std::fs::write(
        &path,
        format!(
            r#"
detector = "generative_ae"
anomaly_ratio = 0.1
seeds = [0, 1]
output_dir = "out"

[dataset]
kind = "synthetic"
n = 50
d = 4
communities = 2
intra_p = 0.25
inter_p = 0.02
seed = 3

[injection]
anomalies = 6
clique_size = 3
candidate_pool = 10

[training]
epochs = 6
hidden_dim = 8
embed_dim = 4

[[grid]]
name = "alpha"
kind = "real"
values = [0.2, 0.5, 0.8]
{extra}
"#
        ),
    )
    .unwrap();
    path.to_str().unwrap().to_string()
}

#[test]
fn sweep_writes_reports_and_report_renders_them() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let out = dir.path().join("run");
    let o = gadsel(&["sweep", "-c", &cfg, "-o", out.to_str().unwrap()]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    for f in ["trials.csv", "summary.csv", "manifest.json"] {
        assert!(out.join(f).is_file(), "{f}");
    }
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert!(stdout.contains("6 trials (0 failed)"), "{stdout}");

    let o = gadsel(&["report", out.join("summary.csv").to_str().unwrap()]);
    assert!(o.status.success());
    let table = String::from_utf8_lossy(&o.stdout);
    assert_eq!(table.lines().count(), 4);
    assert!(table.lines().next().unwrap().starts_with("detector"));

    // output_dir in the config is relative to the working directory
    let o = Command::new(env!("CARGO_BIN_EXE_gadsel"))
        .args(["smbo", "-c", &cfg])
        .current_dir(dir.path())
        .output()
        .unwrap();
    // budget 15 exceeds the 3-point grid
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn config_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad.toml");
    std::fs::write(&bad, "detector = \"generative_ae\"\nanomaly_ratio = 0.7\nseeds = [0]\n").unwrap();
    let o = gadsel(&["sweep", "-c", bad.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("config error"));

    let missing = dir.path().join("missing.toml");
    assert_eq!(gadsel(&["sweep", "-c", missing.to_str().unwrap()]).status.code(), Some(2));

    let cfg = write_config(dir.path(), "");
    let o = gadsel(&["granularity", "-c", &cfg, "--levels", "1,9"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn all_failed_trials_exit_with_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "");
    let text = std::fs::read_to_string(&cfg)
        .unwrap()
        .replace("embed_dim = 4", "embed_dim = 4\nmax_nodes = 10");
    std::fs::write(&cfg, text).unwrap();
    let out = dir.path().join("run");
    let o = gadsel(&["sweep", "-c", &cfg, "-o", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", String::from_utf8_lossy(&o.stderr));
}

#[test]
fn inject_then_sweep_from_files() {
    let dir = tempfile::tempdir().unwrap();
    let edges = dir.path().join("edges.txt");
    let attrs = dir.path().join("attributes.csv");
    let mut e = String::new();
    for i in 0..40 {
        e.push_str(&format!("{} {}\n", i, (i + 1) % 40));
        e.push_str(&format!("{} {}\n", i, (i + 7) % 40));
    }
    std::fs::write(&edges, e).unwrap();
    let a: String = (0..40)
        .map(|i| format!("{},{},{}\n", (i % 5) as f64 * 0.3, (i % 3) as f64, 1.0 - (i % 7) as f64 * 0.1))
        .collect();
    std::fs::write(&attrs, a).unwrap();

    let planted = dir.path().join("planted");
    let o = gadsel(&[
        "inject",
        "--edges",
        edges.to_str().unwrap(),
        "--attributes",
        attrs.to_str().unwrap(),
        "--anomalies",
        "6",
        "--clique-size",
        "3",
        "--candidate-pool",
        "10",
        "--seed",
        "4",
        "-o",
        planted.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let labels = std::fs::read_to_string(planted.join("labels.txt")).unwrap();
    assert_eq!(labels.lines().filter(|l| l.trim() == "1").count(), 6);
    assert!(planted.join("injection.json").is_file());

    let cfg = planted.join("exp.toml");
    std::fs::write(
        &cfg,
        r#"
detector = "contrastive_egonet"
anomaly_ratio = 0.15
seeds = [0]

[dataset]
kind = "files"
edges = "edges.txt"
attributes = "attributes.csv"
labels = "labels.txt"

[training]
epochs = 4
embed_dim = 4
rounds = 2

[[grid]]
name = "alpha"
kind = "real"
values = [0.0, 1.0]

[[grid]]
name = "K"
kind = "integer"
values = [2, 3]
"#,
    )
    .unwrap();
    let out = dir.path().join("ksens");
    let o = gadsel(&[
        "ksens",
        "-c",
        cfg.to_str().unwrap(),
        "-o",
        out.to_str().unwrap(),
        "--ratios",
        "0.1,0.15,0.2",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let rows = std::fs::read_to_string(out.join("ksens.csv")).unwrap();
    assert_eq!(rows.lines().count(), 4);
}
