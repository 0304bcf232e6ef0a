//! One seeded pass through the pipeline, and repeated runs of it.

use std::time::Instant;

use rayon::prelude::*;
use rpspectral::clustering::{ari_score, kmeans, AriScore};
use rpspectral::dataset::{DataMatrix, LabelVector};
use rpspectral::pairing::{knn_pairs, rptree_pairs, PairCounts, PairSet};
use rpspectral::rptree::{build_tree, RpTreeConfig};
use rpspectral::seeding::{stream_rng, Stream};
use rpspectral::siamese::{train_siamese, AffinityModel};
use rpspectral::spectralnet::train_spectralnet;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Method};
use crate::error::{HarnessError, Stage};

/// Wall-clock seconds per stage. Diagnostics only.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct StageDurations {
    pub pairing: f64,
    pub siamese: f64,
    pub sigma: f64,
    pub spectral: f64,
    pub embedding: f64,
    pub kmeans: f64,
    pub scoring: f64,
}

impl StageDurations {
    pub fn total(&self) -> f64 {
        self.pairing + self.siamese + self.sigma + self.spectral + self.embedding + self.kmeans + self.scoring
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunResult {
    pub run_index: usize,
    pub seed: u64,
    pub method: String,
    pub ari: AriScore,
    pub pair_counts: PairCounts,
    pub raw_positive_count: usize,
    pub sigma: f64,
    pub siamese_final_loss: Option<f64>,
    pub spectral_final_loss: Option<f64>,
    /// Largest `‖YᵀY − mI‖_F / m` seen after any orthogonalization step.
    pub max_ortho_residual: f64,
    pub warnings: Vec<String>,
    pub durations: StageDurations,
    pub config: ExperimentConfig,
}

/// Per-run outputs that are not part of the serialized record.
#[derive(Debug, Clone)]
pub struct RunOutputs {
    pub predicted: LabelVector,
    pub ortho_residuals: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunFailure {
    pub run_index: usize,
    pub seed: u64,
    pub error: String,
}

#[derive(Debug, Clone, Default)]
pub struct ExperimentOutcome {
    /// Successful runs in run-index order.
    pub results: Vec<RunResult>,
    pub failures: Vec<RunFailure>,
}

impl ExperimentOutcome {
    pub fn is_complete(&self) -> bool {
        self.failures.is_empty()
    }
}

fn timed<R>(slot: &mut f64, f: impl FnOnce() -> R) -> R {
    let start = Instant::now();
    let out = f();
    *slot = start.elapsed().as_secs_f64();
    out
}

/// Mines training pairs for `method` using the pair and tree streams of `seed`.
pub fn mine_pairs(method: &Method, data: &DataMatrix<f64>, seed: u64) -> Result<PairSet, HarnessError> {
    let mut rng = stream_rng(seed, Stream::Pairs);
    match *method {
        Method::KnnK2 | Method::Knn { .. } => {
            let k = method.knn_k().expect("k-nn method");
            knn_pairs(data, k, &mut rng).map_err(|e| HarnessError::stage(Stage::Pairing, e))
        }
        Method::RpTree { leaf_size, strategy } => {
            let tree = build_tree(data, &RpTreeConfig::new(leaf_size, strategy, seed))
                .map_err(|e| HarnessError::stage(Stage::Pairing, e))?;
            Ok(rptree_pairs(&tree, &mut rng))
        }
    }
}

/// Loads the configured dataset and performs run `run_index`.
pub fn run_pipeline(config: &ExperimentConfig, run_index: usize) -> Result<RunResult, HarnessError> {
    config.validate()?;
    let (data, labels) = config.dataset.load()?;
    run_pipeline_on(config, &data, &labels, run_index).map(|(r, _)| r)
}

/// Runs every stage on already loaded data with seed `base_seed + run_index`.
pub fn run_pipeline_on(
    config: &ExperimentConfig,
    data: &DataMatrix<f64>,
    truth: &LabelVector,
    run_index: usize,
) -> Result<(RunResult, RunOutputs), HarnessError> {
    let seed = config.run_seed(run_index);
    let mut durations = StageDurations::default();

    let pairs = timed(&mut durations.pairing, || mine_pairs(&config.method, data, seed))?;

    let siamese = timed(&mut durations.siamese, || {
        train_siamese(data, &pairs, &config.siamese_for_run(seed))
    })
    .map_err(|e| HarnessError::stage(Stage::Siamese, e))?;
    let siamese_final_loss = siamese.loss_history.last().copied();

    let affinity = timed(&mut durations.sigma, || {
        AffinityModel::from_training(siamese.network, data, &pairs)
    })
    .map_err(|e| HarnessError::stage(Stage::Sigma, e))?;

    let spectral = timed(&mut durations.spectral, || {
        train_spectralnet(data, &affinity, &config.spectral_for_run(seed))
    })
    .map_err(|e| HarnessError::stage(Stage::Spectral, e))?;

    let embedding = timed(&mut durations.embedding, || spectral.model.embed(data))
        .map_err(|e| HarnessError::stage(Stage::Embedding, e))?;

    let clusters = timed(&mut durations.kmeans, || kmeans(&embedding, &config.kmeans_for_run(seed)))
        .map_err(|e| HarnessError::stage(Stage::Kmeans, e))?;

    let ari = timed(&mut durations.scoring, || {
        ari_score(truth.as_slice(), clusters.labels.as_slice())
    })
    .map_err(|e| HarnessError::stage(Stage::Scoring, e))?;

    let max_ortho_residual = spectral.ortho_residuals.iter().copied().fold(0.0, f64::max);
    let result = RunResult {
        run_index,
        seed,
        method: config.method.to_string(),
        ari,
        pair_counts: pairs.counts(),
        raw_positive_count: pairs.raw_positive_count,
        sigma: affinity.sigma,
        siamese_final_loss,
        spectral_final_loss: spectral.loss_history.last().copied(),
        max_ortho_residual,
        warnings: pairs.warnings.clone(),
        durations,
        config: config.clone(),
    };
    let outputs = RunOutputs {
        predicted: clusters.labels,
        ortho_residuals: spectral.ortho_residuals,
    };
    Ok((result, outputs))
}

/// Performs `config.runs` independent runs concurrently. Individual failures are recorded
/// without stopping the remaining runs; results keep run-index order.
pub fn run_experiment(config: &ExperimentConfig) -> Result<ExperimentOutcome, HarnessError> {
    config.validate()?;
    let (data, labels) = config.dataset.load()?;
    Ok(run_experiment_on(config, &data, &labels))
}

pub fn run_experiment_on(config: &ExperimentConfig, data: &DataMatrix<f64>, labels: &LabelVector) -> ExperimentOutcome {
    let attempts: Vec<_> = (0..config.runs)
        .into_par_iter()
        .map(|i| run_pipeline_on(config, data, labels, i).map(|(r, _)| r))
        .collect();
    let mut outcome = ExperimentOutcome::default();
    for (run_index, attempt) in attempts.into_iter().enumerate() {
        match attempt {
            Ok(r) => outcome.results.push(r),
            Err(e) => outcome.failures.push(RunFailure {
                run_index,
                seed: config.run_seed(run_index),
                error: e.to_string(),
            }),
        }
    }
    outcome
}
