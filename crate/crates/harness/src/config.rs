//! Experiment configuration, loadable from JSON.

use std::fmt;
use std::path::{Path, PathBuf};

use rpspectral::clustering::KmeansConfig;
use rpspectral::dataset::{
    generate_synthetic, load_csv, standardize, stratified_subsample, subset, CsvOptions, DataMatrix, LabelVector,
    SyntheticSpec,
};
use rpspectral::rptree::ProjectionStrategy;
use rpspectral::siamese::SiameseConfig;
use rpspectral::spectralnet::SpectralConfig;
use serde::{Deserialize, Serialize};

use crate::error::HarnessError;

/// Default subsample for oversized CSV datasets.
pub const DEFAULT_SUBSAMPLE: usize = 2000;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "source", rename_all = "kebab-case")]
pub enum DatasetSource {
    Synthetic(SyntheticSpec),
    Csv {
        path: PathBuf,
        #[serde(default)]
        options: CsvOptions,
        /// Stratified subsample size; `None` keeps every row.
        #[serde(default)]
        subsample: Option<usize>,
        #[serde(default)]
        subsample_seed: u64,
    },
}

impl DatasetSource {
    /// Loads (or generates) the points and ground-truth labels, standardized per column.
    pub fn load(&self) -> Result<(DataMatrix<f64>, LabelVector), HarnessError> {
        let (data, labels) = match self {
            DatasetSource::Synthetic(spec) => generate_synthetic(spec)?,
            DatasetSource::Csv {
                path,
                options,
                subsample,
                subsample_seed,
            } => {
                let (data, labels) = load_csv(path, options)?;
                match subsample {
                    Some(target) if *target < data.n() => {
                        let keep = stratified_subsample(&labels, *target, *subsample_seed);
                        subset(&data, &labels, &keep)?
                    }
                    _ => (data, labels),
                }
            }
        };
        Ok((standardize(&data), labels))
    }

    pub fn describe(&self) -> String {
        match self {
            DatasetSource::Synthetic(s) => format!("{:?}(n={}, noise={})", s.kind, s.n, s.noise).to_lowercase(),
            DatasetSource::Csv { path, .. } => path.display().to_string(),
        }
    }
}

/// How training pairs are mined.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum Method {
    /// The k-nn baseline at its customary `k = 2`.
    KnnK2,
    Knn { k: usize },
    RpTree { leaf_size: usize, strategy: ProjectionStrategy },
}

impl Method {
    pub fn knn_k(&self) -> Option<usize> {
        match *self {
            Method::KnnK2 => Some(2),
            Method::Knn { k } => Some(k),
            Method::RpTree { .. } => None,
        }
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Method::KnnK2 => write!(f, "knn-k2"),
            Method::Knn { k } => write!(f, "knn-k{k}"),
            Method::RpTree { leaf_size, strategy } => write!(f, "rptree-n{leaf_size}-{}", strategy.label()),
        }
    }
}

fn default_runs() -> usize {
    10
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExperimentConfig {
    pub dataset: DatasetSource,
    pub method: Method,
    #[serde(default = "default_runs")]
    pub runs: usize,
    /// Number of clusters `g`; also the embedding dimension.
    pub cluster_count: usize,
    /// Seeds and output sizes in the nested configs are overwritten per run.
    #[serde(default)]
    pub siamese: SiameseConfig,
    #[serde(default)]
    pub spectral: SpectralConfig,
    #[serde(default)]
    pub kmeans: KmeansConfig,
    #[serde(default)]
    pub base_seed: u64,
}

impl ExperimentConfig {
    pub fn new(dataset: DatasetSource, method: Method, cluster_count: usize) -> Self {
        Self {
            dataset,
            method,
            runs: default_runs(),
            cluster_count,
            siamese: SiameseConfig::default(),
            spectral: SpectralConfig::default(),
            kmeans: KmeansConfig::default(),
            base_seed: 0,
        }
    }

    pub fn from_json_file(path: &Path) -> Result<Self, HarnessError> {
        let text = std::fs::read_to_string(path).map_err(|source| HarnessError::Io {
            path: path.to_owned(),
            source,
        })?;
        serde_json::from_str(&text).map_err(|e| HarnessError::Config(format!("{}: {e}", path.display())))
    }

    /// Checks everything that can be checked without loading the data.
    pub fn validate(&self) -> Result<(), HarnessError> {
        let bad = |m: String| Err(HarnessError::Config(m));
        if self.runs == 0 {
            return bad("runs must be at least 1".into());
        }
        if self.cluster_count == 0 {
            return bad("cluster_count must be at least 1".into());
        }
        match self.method {
            Method::Knn { k: 0 } => return bad("k must be at least 1".into()),
            Method::RpTree { leaf_size: 0, .. } => return bad("leaf_size must be at least 1".into()),
            Method::RpTree { strategy, .. } => {
                strategy.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
            }
            _ => {}
        }
        self.siamese.validate().map_err(|e| HarnessError::Config(e.to_string()))?;
        self.spectral_for_run(self.base_seed)
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        self.kmeans_for_run(self.base_seed)
            .validate()
            .map_err(|e| HarnessError::Config(e.to_string()))?;
        Ok(())
    }

    pub fn run_seed(&self, run_index: usize) -> u64 {
        self.base_seed.wrapping_add(run_index as u64)
    }

    pub fn siamese_for_run(&self, seed: u64) -> SiameseConfig {
        SiameseConfig {
            seed,
            ..self.siamese.clone()
        }
    }

    pub fn spectral_for_run(&self, seed: u64) -> SpectralConfig {
        SpectralConfig {
            seed,
            embedding_dim: self.cluster_count,
            ..self.spectral.clone()
        }
    }

    pub fn kmeans_for_run(&self, seed: u64) -> KmeansConfig {
        KmeansConfig {
            seed,
            k: self.cluster_count,
            ..self.kmeans.clone()
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rpspectral::dataset::SyntheticKind;

    fn blobs() -> DatasetSource {
        DatasetSource::Synthetic(SyntheticSpec {
            kind: SyntheticKind::Blobs,
            n: 60,
            noise: 0.3,
            centers: 3,
            seed: 1,
        })
    }

    #[test]
    fn json_round_trip_with_defaults() {
        let text = r#"{
            "dataset": {"source": "synthetic", "kind": "moons", "n": 100, "noise": 0.05, "seed": 3},
            "method": {"kind": "rp-tree", "leaf_size": 20, "strategy": {"kind": "best-of-n", "n_try": 3}},
            "cluster_count": 2
        }"#;
        let cfg: ExperimentConfig = serde_json::from_str(text).unwrap();
        assert_eq!(cfg.runs, 10);
        assert_eq!(cfg.siamese, SiameseConfig::default());
        assert_eq!(cfg.method.to_string(), "rptree-n20-best-of-3");
        let again: ExperimentConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(cfg, again);
        cfg.validate().unwrap();
    }

    #[test]
    fn per_run_overrides() {
        let mut cfg = ExperimentConfig::new(blobs(), Method::KnnK2, 3);
        cfg.base_seed = 40;
        assert_eq!(cfg.run_seed(2), 42);
        let s = cfg.spectral_for_run(42);
        assert_eq!((s.seed, s.embedding_dim), (42, 3));
        assert_eq!(cfg.kmeans_for_run(42).k, 3);
    }

    #[test]
    fn rejects_bad_values() {
        let mut cfg = ExperimentConfig::new(blobs(), Method::Knn { k: 0 }, 3);
        assert!(matches!(cfg.validate(), Err(HarnessError::Config(_))));
        cfg.method = Method::KnnK2;
        cfg.runs = 0;
        assert!(cfg.validate().is_err());
        cfg.runs = 1;
        cfg.spectral.total_steps = 7;
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn loads_standardized_synthetic() {
        let (data, labels) = blobs().load().unwrap();
        assert_eq!((data.n(), labels.class_count()), (60, 3));
        let mean: f64 = data.points().column(0).sum() / 60.0;
        assert!(mean.abs() < 1e-10);
    }
}
