use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rpspectral::dataset::{generate_synthetic, CsvOptions, DataMatrix, LabelColumn, SyntheticKind, SyntheticSpec};
use rpspectral::rptree::ProjectionStrategy;
use rpspectral_harness::config::{DatasetSource, ExperimentConfig, Method, DEFAULT_SUBSAMPLE};
use rpspectral_harness::report::{read_results, report, report_outcome, summarize, Summary};
use rpspectral_harness::sweep::{report_sweep, sweep, Grid};
use rpspectral_harness::{mine_pairs, run_experiment, run_pipeline, HarnessError};

#[derive(Parser, Debug)]
#[command(name = "rpspectral", version, about = "Deep spectral clustering with rpTree or k-nn pair mining")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Write a synthetic dataset to CSV.
    Generate {
        #[arg(long, default_value = "blobs")]
        kind: SyntheticKind,
        #[arg(long, default_value_t = 300)]
        n: usize,
        #[arg(long, default_value_t = 0.5)]
        noise: f64,
        #[arg(long, default_value_t = 3)]
        centers: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long)]
        out: PathBuf,
    },
    /// Mine training pairs and write them with their counts.
    Pairs {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        run_index: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// One pipeline run.
    Run {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long, default_value_t = 0)]
        run_index: usize,
        #[arg(long)]
        out: PathBuf,
    },
    /// `runs` seeded pipeline runs with a summary.
    Experiment {
        #[command(flatten)]
        cfg: ConfigArgs,
        #[arg(long)]
        out: PathBuf,
    },
    /// One experiment per grid value.
    Sweep {
        #[command(flatten)]
        cfg: ConfigArgs,
        /// Comma-separated leaf sizes.
        #[arg(long, value_delimiter = ',', group = "grid")]
        leaf_sizes: Vec<usize>,
        /// Comma-separated strategies (random, best-of-N, pca).
        #[arg(long, value_delimiter = ',', group = "grid")]
        strategies: Vec<ProjectionStrategy>,
        /// Comma-separated k values for the k-nn baseline.
        #[arg(long, value_delimiter = ',', group = "grid")]
        ks: Vec<usize>,
        #[arg(long)]
        out: PathBuf,
    },
    /// Re-render summary and plot files from an existing results.json.
    Report {
        #[arg(long)]
        results: PathBuf,
        /// Defaults to the directory holding the results file.
        #[arg(long)]
        out: Option<PathBuf>,
    },
}

/// Experiment settings; flags override values from `--config`.
#[derive(Args, Debug, Default)]
struct ConfigArgs {
    /// JSON experiment configuration.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Synthetic dataset kind (blobs, moons, circles, aniso-blobs).
    #[arg(long, conflicts_with = "csv")]
    synthetic: Option<SyntheticKind>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    noise: Option<f64>,
    #[arg(long)]
    centers: Option<usize>,
    #[arg(long)]
    data_seed: Option<u64>,
    /// CSV dataset with a label column.
    #[arg(long)]
    csv: Option<PathBuf>,
    /// Label column name or zero-based index.
    #[arg(long)]
    label_column: Option<String>,
    #[arg(long)]
    delimiter: Option<char>,
    #[arg(long)]
    no_header: bool,
    /// Stratified subsample size for CSV data (0 keeps every row).
    #[arg(long)]
    subsample: Option<usize>,
    /// knn-k2, knn or rptree.
    #[arg(long)]
    method: Option<String>,
    #[arg(long)]
    k: Option<usize>,
    #[arg(long)]
    leaf_size: Option<usize>,
    #[arg(long)]
    strategy: Option<ProjectionStrategy>,
    #[arg(long)]
    runs: Option<usize>,
    /// Cluster count; defaults to the number of classes.
    #[arg(long)]
    clusters: Option<usize>,
    #[arg(long)]
    base_seed: Option<u64>,
    #[arg(long)]
    siamese_epochs: Option<usize>,
    #[arg(long)]
    siamese_batch: Option<usize>,
    #[arg(long)]
    spectral_steps: Option<usize>,
    #[arg(long)]
    spectral_batch: Option<usize>,
}

fn config_error(msg: impl Into<String>) -> HarnessError {
    HarnessError::Config(msg.into())
}

impl ConfigArgs {
    fn dataset(&self, current: Option<DatasetSource>) -> Result<DatasetSource, HarnessError> {
        if let Some(kind) = self.synthetic {
            let old = match current {
                Some(DatasetSource::Synthetic(s)) => Some(s),
                _ => None,
            };
            return Ok(DatasetSource::Synthetic(SyntheticSpec {
                kind,
                n: self.n.or(old.as_ref().map(|s| s.n)).unwrap_or(300),
                noise: self.noise.or(old.as_ref().map(|s| s.noise)).unwrap_or(0.5),
                centers: self.centers.or(old.as_ref().map(|s| s.centers)).unwrap_or(3),
                seed: self.data_seed.or(old.as_ref().map(|s| s.seed)).unwrap_or(0),
            }));
        }
        if let Some(path) = &self.csv {
            let mut options = CsvOptions::default();
            if let Some(col) = &self.label_column {
                options.label_column = match col.parse() {
                    Ok(i) => LabelColumn::Index(i),
                    Err(_) => LabelColumn::Name(col.clone()),
                };
            }
            if let Some(d) = self.delimiter {
                options.delimiter = d;
            }
            options.has_header = !self.no_header;
            return Ok(DatasetSource::Csv {
                path: path.clone(),
                options,
                subsample: match self.subsample {
                    Some(0) => None,
                    Some(s) => Some(s),
                    None => Some(DEFAULT_SUBSAMPLE),
                },
                subsample_seed: self.data_seed.unwrap_or(0),
            });
        }
        match current {
            Some(DatasetSource::Synthetic(mut s)) => {
                s.n = self.n.unwrap_or(s.n);
                s.noise = self.noise.unwrap_or(s.noise);
                s.centers = self.centers.unwrap_or(s.centers);
                s.seed = self.data_seed.unwrap_or(s.seed);
                Ok(DatasetSource::Synthetic(s))
            }
            Some(csv) => Ok(csv),
            None => Err(config_error("no dataset: pass --config, --synthetic or --csv")),
        }
    }

    fn method(&self, current: Option<Method>) -> Result<Method, HarnessError> {
        let (cur_leaf, cur_strategy) = match current {
            Some(Method::RpTree { leaf_size, strategy }) => (leaf_size, strategy),
            _ => (20, ProjectionStrategy::Random),
        };
        let name = match (&self.method, current) {
            (Some(m), _) => m.as_str(),
            (None, Some(Method::KnnK2)) => "knn-k2",
            (None, Some(Method::Knn { .. })) => "knn",
            (None, _) => "rptree",
        };
        match name {
            "knn-k2" => Ok(Method::KnnK2),
            "knn" => {
                let k = self.k.or(current.and_then(|m| m.knn_k()));
                Ok(Method::Knn {
                    k: k.ok_or_else(|| config_error("--method knn needs --k"))?,
                })
            }
            "rptree" => Ok(Method::RpTree {
                leaf_size: self.leaf_size.unwrap_or(cur_leaf),
                strategy: self.strategy.unwrap_or(cur_strategy),
            }),
            other => Err(config_error(format!("unknown method {other:?}"))),
        }
    }

    fn build(&self) -> Result<ExperimentConfig, HarnessError> {
        let file = self.config.as_deref().map(ExperimentConfig::from_json_file).transpose()?;
        let dataset = self.dataset(file.as_ref().map(|f| f.dataset.clone()))?;
        let method = self.method(file.as_ref().map(|f| f.method))?;
        let cluster_count = match (self.clusters, &file, &dataset) {
            (Some(g), _, _) => g,
            (None, Some(f), _) => f.cluster_count,
            (None, None, DatasetSource::Synthetic(s)) => s.kind.cluster_count(s.centers),
            (None, None, csv) => csv.load()?.1.class_count(),
        };
        let mut cfg = match file {
            Some(f) => ExperimentConfig {
                dataset,
                method,
                cluster_count,
                ..f
            },
            None => ExperimentConfig::new(dataset, method, cluster_count),
        };
        if let Some(r) = self.runs {
            cfg.runs = r;
        }
        if let Some(s) = self.base_seed {
            cfg.base_seed = s;
        }
        if let Some(e) = self.siamese_epochs {
            cfg.siamese.epochs = e;
        }
        if let Some(b) = self.siamese_batch {
            cfg.siamese.batch_size = b;
        }
        if let Some(s) = self.spectral_steps {
            cfg.spectral.total_steps = s;
        }
        if let Some(b) = self.spectral_batch {
            cfg.spectral.batch_size = b;
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn print_summary(label: &str, s: &Summary) {
    println!(
        "{label}: runs={} mean_ari={:.4} std_ari={:.4} mean_total_pairs={:.1}",
        s.runs, s.mean_ari, s.std_ari, s.mean_total_pairs
    );
}

fn write_dataset(path: &Path, data: &DataMatrix<f64>, labels: &[usize]) -> Result<(), HarnessError> {
    let csv_err = |source| HarnessError::Csv {
        path: path.to_owned(),
        source,
    };
    let mut w = csv::Writer::from_path(path).map_err(csv_err)?;
    let mut header: Vec<String> = (0..data.dim()).map(|j| format!("x{j}")).collect();
    header.push("class".into());
    w.write_record(&header).map_err(csv_err)?;
    for (i, &label) in labels.iter().enumerate() {
        let mut row: Vec<String> = data.row(i).iter().map(|v| v.to_string()).collect();
        row.push(label.to_string());
        w.write_record(&row).map_err(csv_err)?;
    }
    w.flush().map_err(|source| HarnessError::Io {
        path: path.to_owned(),
        source,
    })
}

fn write_json(path: &Path, value: &impl serde::Serialize) -> Result<(), HarnessError> {
    let text = serde_json::to_string_pretty(value).expect("plain data serializes");
    std::fs::write(path, text).map_err(|source| HarnessError::Io {
        path: path.to_owned(),
        source,
    })
}

fn create_dir(dir: &Path) -> Result<(), HarnessError> {
    std::fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_owned(),
        source,
    })
}

/// Returns `true` when every run succeeded.
fn execute(command: Command) -> Result<bool, HarnessError> {
    match command {
        Command::Generate {
            kind,
            n,
            noise,
            centers,
            seed,
            out,
        } => {
            let spec = SyntheticSpec {
                kind,
                n,
                noise,
                centers,
                seed,
            };
            let (data, labels) = generate_synthetic::<f64>(&spec)?;
            write_dataset(&out, &data, labels.as_slice())?;
            println!("wrote {} points to {}", data.n(), out.display());
            Ok(true)
        }
        Command::Pairs { cfg, run_index, out } => {
            let cfg = cfg.build()?;
            let (data, _) = cfg.dataset.load()?;
            let pairs = mine_pairs(&cfg.method, &data, cfg.run_seed(run_index))?;
            create_dir(&out)?;
            pairs
                .write_csv(&out)
                .map_err(|e| HarnessError::stage(rpspectral_harness::Stage::Pairing, e))?;
            let counts = pairs.counts();
            write_json(&out.join("counts.json"), &counts)?;
            for w in &pairs.warnings {
                eprintln!("warning: {w}");
            }
            println!(
                "{}: positive={} negative={} total={} raw_positive={}",
                cfg.method, counts.positive_count, counts.negative_count, counts.total_count, pairs.raw_positive_count
            );
            Ok(true)
        }
        Command::Run { cfg, run_index, out } => {
            let cfg = cfg.build()?;
            let result = run_pipeline(&cfg, run_index)?;
            report(std::slice::from_ref(&result), &out)?;
            match result.ari.value() {
                Some(v) => println!("{} run {run_index}: ari={v:.4}", result.method),
                None => println!("{} run {run_index}: ari undefined", result.method),
            }
            Ok(true)
        }
        Command::Experiment { cfg, out } => {
            let cfg = cfg.build()?;
            let outcome = run_experiment(&cfg)?;
            report_outcome(&outcome, &out)?;
            if !outcome.results.is_empty() {
                print_summary(&cfg.method.to_string(), &summarize(&outcome.results)?);
            }
            for f in &outcome.failures {
                eprintln!("run {} (seed {}) failed: {}", f.run_index, f.seed, f.error);
            }
            Ok(outcome.is_complete())
        }
        Command::Sweep {
            cfg,
            leaf_sizes,
            strategies,
            ks,
            out,
        } => {
            let cfg = cfg.build()?;
            let grid = if !leaf_sizes.is_empty() {
                Grid::LeafSize(leaf_sizes)
            } else if !strategies.is_empty() {
                Grid::Strategy(strategies)
            } else {
                Grid::K(ks)
            };
            let points = sweep(&cfg, &grid)?;
            for (label, s) in report_sweep(&points, &out)? {
                print_summary(&label, &s);
            }
            let mut complete = true;
            for p in &points {
                for f in &p.outcome.failures {
                    complete = false;
                    eprintln!("{} run {} failed: {}", p.label, f.run_index, f.error);
                }
            }
            Ok(complete)
        }
        Command::Report { results, out } => {
            let records = read_results(&results)?;
            let dir = out.unwrap_or_else(|| results.parent().map(Path::to_path_buf).unwrap_or_default());
            report(&records, &dir)?;
            print_summary(&records[0].method, &summarize(&records)?);
            Ok(true)
        }
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    match execute(cli.command) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::from(1),
        Err(e) => {
            eprintln!("error: {e}");
            match e {
                HarnessError::Config(_) | HarnessError::BadGrid => ExitCode::from(2),
                _ => ExitCode::from(1),
            }
        }
    }
}
