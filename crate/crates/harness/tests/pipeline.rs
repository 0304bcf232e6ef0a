//! Pipeline, experiment and report behaviour on small synthetic data.

use std::fs;

use rpspectral::clustering::AriScore;
use rpspectral::dataset::{SyntheticKind, SyntheticSpec};
use rpspectral::rptree::ProjectionStrategy;
use rpspectral_harness::report::{mean_std, FAILURES_FILE, PLOTDATA_FILE, RESULTS_FILE, SUMMARY_FILE};
use rpspectral_harness::{
    read_results, report, report_outcome, report_sweep, run_experiment, run_pipeline, summarize, sweep,
    DatasetSource, ExperimentConfig, Grid, HarnessError, Method, RunResult, Stage, StageDurations,
};

fn blobs(n: usize) -> DatasetSource {
    DatasetSource::Synthetic(SyntheticSpec {
        kind: SyntheticKind::Blobs,
        n,
        noise: 0.5,
        centers: 3,
        seed: 0,
    })
}

fn quick(method: Method, runs: usize) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::new(blobs(300), method, 3);
    cfg.runs = runs;
    cfg.siamese.epochs = 2;
    cfg.siamese.hidden_layers = vec![32, 32];
    cfg.siamese.output_dim = 8;
    cfg.spectral.total_steps = 200;
    cfg.spectral.hidden_layers = vec![32, 32];
    cfg.kmeans.restarts = 3;
    cfg
}

fn rptree() -> Method {
    Method::RpTree {
        leaf_size: 20,
        strategy: ProjectionStrategy::Random,
    }
}

fn without_durations(mut r: RunResult) -> RunResult {
    r.durations = StageDurations::default();
    r
}

#[test]
fn blob_run_produces_a_scored_record() {
    let r = run_pipeline(&quick(rptree(), 1), 0).unwrap();
    assert!(matches!(r.ari, AriScore::Defined(_)));
    assert!(r.pair_counts.positive_count <= 300 * 19 / 2);
    assert!(r.pair_counts.negative_count > 0);
    assert!(r.max_ortho_residual <= 1e-6);
    assert!(r.sigma > 0.0);
    assert_eq!(r.method, "rptree-n20-random");
}

#[test]
fn runs_are_reproducible() {
    let cfg = quick(Method::KnnK2, 1);
    let a = without_durations(run_pipeline(&cfg, 3).unwrap());
    let b = without_durations(run_pipeline(&cfg, 3).unwrap());
    assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
    assert_eq!(a.seed, 3);
}

#[test]
fn oversized_k_fails_in_the_pairing_stage() {
    let err = run_pipeline(&quick(Method::Knn { k: 500 }, 1), 0).unwrap_err();
    assert!(matches!(err, HarnessError::Stage { stage: Stage::Pairing, .. }), "{err}");
    assert!(err.to_string().starts_with("pairing stage failed"));
}

#[test]
fn failed_runs_are_recorded() {
    let outcome = run_experiment(&quick(Method::Knn { k: 500 }, 2)).unwrap();
    assert!(!outcome.is_complete());
    assert_eq!(outcome.failures.len(), 2);
    assert_eq!(outcome.failures[1].seed, 1);
    let dir = tempfile::tempdir().unwrap();
    assert!(report_outcome(&outcome, dir.path()).unwrap().is_none());
    assert!(dir.path().join(FAILURES_FILE).exists());
}

#[test]
fn invalid_configs_are_rejected_before_running() {
    let mut cfg = quick(Method::KnnK2, 0);
    assert!(matches!(run_experiment(&cfg), Err(HarnessError::Config(_))));
    cfg.runs = 1;
    cfg.spectral.total_steps = 3;
    assert!(matches!(run_pipeline(&cfg, 0), Err(HarnessError::Config(_))));
}

#[test]
fn reports_round_trip() {
    let outcome = run_experiment(&quick(Method::KnnK2, 3)).unwrap();
    assert!(outcome.is_complete());
    let dir = tempfile::tempdir().unwrap();
    let files = report(&outcome.results, dir.path()).unwrap();
    let written = fs::read(&files.results).unwrap();

    let back = read_results(&files.results).unwrap();
    assert_eq!(back, outcome.results);
    let again = tempfile::tempdir().unwrap();
    let files2 = report(&back, again.path()).unwrap();
    assert_eq!(fs::read(&files2.results).unwrap(), written);
    assert_eq!(fs::read(&files2.summary).unwrap(), fs::read(&files.summary).unwrap());

    let summary = summarize(&back).unwrap();
    let aris: Vec<f64> = back.iter().map(|r| r.ari.value().unwrap()).collect();
    let mean = aris.iter().sum::<f64>() / aris.len() as f64;
    assert!((summary.mean_ari - mean).abs() < 1e-12);
    assert!((summary.std_ari - mean_std(&aris).1).abs() < 1e-12);

    let plot = fs::read_to_string(dir.path().join(PLOTDATA_FILE)).unwrap();
    assert_eq!(plot.lines().count(), 1 + 4 * 3);
    assert!(plot.starts_with("run,metric,value"));
    let summary_csv = fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap();
    assert_eq!(summary_csv.lines().count(), 2);
}

#[test]
fn unwritable_report_directory_is_an_io_error() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let r = run_pipeline(&quick(Method::KnnK2, 1), 0).unwrap();
    let err = report(&[r], &blocker.join("sub")).unwrap_err();
    assert!(matches!(err, HarnessError::Io { .. }), "{err}");
    assert!(!blocker.join(RESULTS_FILE).exists());
}

#[test]
fn sweeps_cover_every_grid_value() {
    let mut base = quick(rptree(), 1);
    base.dataset = blobs(120);
    assert!(matches!(sweep(&base, &Grid::LeafSize(vec![])), Err(HarnessError::BadGrid)));
    let points = sweep(&base, &Grid::LeafSize(vec![10, 30])).unwrap();
    assert_eq!(points.len(), 2);
    let dir = tempfile::tempdir().unwrap();
    let rows = report_sweep(&points, dir.path()).unwrap();
    assert_eq!(rows.iter().map(|(l, _)| l.as_str()).collect::<Vec<_>>(), ["n0=10", "n0=30"]);
    assert!(dir.path().join("n0=30").join(RESULTS_FILE).exists());
    assert!(rows[0].1.mean_positive_pairs <= rows[1].1.mean_positive_pairs);
}
