use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};

use gadsel::graph::{load_graph, write_graph};
use gadsel::harness::report::{
    write_cross_csv, write_granularity_csv, write_json, write_k_sensitivity_csv,
};
use gadsel::harness::{
    cross_detector_study, granularity_sweep, k_sensitivity, prepare_dataset, render_summary,
    run_prepared, write_outputs, ExperimentConfig, SearchMode, Silent,
};
use gadsel::hpo::{HyperparameterSpace, TrialCache};
use gadsel::inject::{inject_with_manifest, InjectionPlan};
use gadsel::Error;

#[derive(Parser)]
#[command(name = "gadsel", version, about = "Label-free hyperparameter selection for graph anomaly detectors")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct ConfigArgs {
    /// Experiment config (TOML)
    #[arg(short, long)]
    config: PathBuf,
    /// Output directory; overrides `output_dir`
    #[arg(short, long)]
    out: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Plant clique and attribute-swap anomalies into an unlabeled graph
    Inject {
        #[arg(long)]
        edges: PathBuf,
        #[arg(long)]
        attributes: PathBuf,
        /// Total anomalies to plant
        #[arg(long)]
        anomalies: usize,
        #[arg(long, default_value_t = InjectionPlan::DEFAULT_CLIQUE_SIZE)]
        clique_size: usize,
        #[arg(long, default_value_t = InjectionPlan::DEFAULT_CANDIDATE_POOL)]
        candidate_pool: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        /// Directory for edges.txt, attributes.csv, labels.txt, injection.json
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Grid search over the configured space
    Sweep(ConfigArgs),
    /// GP-guided search with the configured budget
    Smbo(ConfigArgs),
    /// Selection under several assumed anomaly ratios
    Ksens {
        #[command(flatten)]
        args: ConfigArgs,
        /// Comma-separated ratios in (0, 0.5)
        #[arg(long, value_delimiter = ',', required = true)]
        ratios: Vec<f64>,
    },
    /// Selection over nested contrastive grids (levels 1 to 4)
    Granularity {
        #[command(flatten)]
        args: ConfigArgs,
        #[arg(long, value_delimiter = ',', default_value = "1,2,3,4")]
        levels: Vec<u8>,
    },
    /// Correlate selected margins with AUC across at least three configs
    Cross {
        /// One config per detector; repeat the flag
        #[arg(short, long = "config", required = true)]
        configs: Vec<PathBuf>,
        #[arg(short, long)]
        out: PathBuf,
    },
    /// Print a summary.csv as a table
    Report {
        summary: PathBuf,
    },
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::from(match e {
                Error::Config(_) => 2,
                Error::Search(_) => 3,
                _ => 1,
            })
        }
    }
}

fn load(args: &ConfigArgs, mode: Option<SearchMode>) -> Result<(ExperimentConfig, PathBuf), Error> {
    let mut cfg = ExperimentConfig::load(&args.config)?;
    if let Some(mode) = mode {
        cfg.search = mode;
        cfg.validate()?;
    }
    let out = args.out.clone().unwrap_or_else(|| cfg.output_dir.clone());
    Ok((cfg, out))
}

fn create_dir(dir: &Path) -> Result<(), Error> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn run(command: Command) -> Result<(), Error> {
    match command {
        Command::Inject {
            edges,
            attributes,
            anomalies,
            clique_size,
            candidate_pool,
            seed,
            out,
        } => {
            let g = load_graph(&edges, &attributes, None)?;
            let plan = InjectionPlan::balanced(anomalies, clique_size, candidate_pool, seed)?;
            let (labeled, manifest) = inject_with_manifest(&g, &plan)?;
            create_dir(&out)?;
            write_graph(
                &labeled,
                &out.join("edges.txt"),
                &out.join("attributes.csv"),
                Some(&out.join("labels.txt")),
            )?;
            manifest.write_json(&out.join("injection.json"))?;
            println!(
                "planted {} anomalies ({} in {} cliques, {} swapped) into {} nodes -> {}",
                manifest.anomaly_count,
                plan.structural_count(),
                plan.clique_count,
                plan.contextual_count,
                manifest.node_count,
                out.display()
            );
        }
        Command::Sweep(args) => experiment(&args, SearchMode::Grid)?,
        Command::Smbo(args) => experiment(&args, SearchMode::Smbo)?,
        Command::Ksens { args, ratios } => {
            let (cfg, out) = load(&args, None)?;
            let data = prepare_dataset(&cfg)?;
            let rows = k_sensitivity(&cfg, &data, &ratios, &TrialCache::new())?;
            create_dir(&out)?;
            write_k_sensitivity_csv(&rows, &out.join("ksens.csv"))?;
            for r in &rows {
                println!("ratio {:<6} k {:<4} seed {:<4} auc {:.4}  {}", r.ratio, r.k, r.seed, r.csm_auc, r.best_config);
            }
        }
        Command::Granularity { args, levels } => {
            let (cfg, out) = load(&args, None)?;
            let spaces = levels
                .iter()
                .map(|&l| Ok((format!("level{l}"), HyperparameterSpace::contrastive_granularity(l)?)))
                .collect::<Result<Vec<_>, Error>>()
                .map_err(|e| Error::Config(e.to_string()))?;
            let data = prepare_dataset(&cfg)?;
            let rows = granularity_sweep(&cfg, &data, &spaces, &TrialCache::new())?;
            create_dir(&out)?;
            write_granularity_csv(&rows, &out.join("granularity.csv"))?;
            for r in &rows {
                println!("{:<7} seed {:<4} T {:<22} auc {:.4}  {}", r.level, r.seed, r.best_t.to_string(), r.csm_auc, r.best_config);
            }
        }
        Command::Cross { configs, out } => {
            let cfgs = configs
                .iter()
                .map(|p| ExperimentConfig::load(p))
                .collect::<Result<Vec<_>, _>>()?;
            let study = cross_detector_study(&cfgs)?;
            create_dir(&out)?;
            write_cross_csv(&study, &out.join("cross.csv"))?;
            write_json(&study, &out.join("cross.json"))?;
            for r in &study.rows {
                let t = r.best_t.map_or_else(|| "inf".to_string(), |t| format!("{t:.4}"));
                println!("{:<24} {:<20} T {:<10} auc {:.4}", r.name, r.detector, t, r.csm_auc);
            }
            println!("pearson r = {} ({})", study.pearson_text(), gadsel::harness::CrossStudy::CAVEAT);
        }
        Command::Report { summary } => print!("{}", render_summary(&summary)?),
    }
    Ok(())
}

fn experiment(args: &ConfigArgs, mode: SearchMode) -> Result<(), Error> {
    let (cfg, out) = load(args, Some(mode))?;
    let data = prepare_dataset(&cfg)?;
    let result = run_prepared(&cfg, &data, &TrialCache::new(), &Silent)?;
    write_outputs(&result, &out)?;
    print!("{}", render_summary(&out.join(gadsel::harness::report::SUMMARY_FILE))?);
    println!(
        "{} trials ({} failed) -> {}",
        result.trial_count(),
        result.failed_trials(),
        out.display()
    );
    Ok(())
}
