//! Result files: `results.json`, `summary.csv` and long-format `plotdata.csv`.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::HarnessError;
use crate::pipeline::{ExperimentOutcome, RunFailure, RunResult};

pub const RESULTS_FILE: &str = "results.json";
pub const SUMMARY_FILE: &str = "summary.csv";
pub const PLOTDATA_FILE: &str = "plotdata.csv";
pub const FAILURES_FILE: &str = "failures.json";

/// Mean and population standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (f64::NAN, f64::NAN);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub method: String,
    pub runs: usize,
    /// Runs whose ARI is undefined; excluded from the ARI statistics.
    pub undefined_ari: usize,
    pub mean_ari: f64,
    pub std_ari: f64,
    pub mean_total_pairs: f64,
    pub std_total_pairs: f64,
    pub mean_positive_pairs: f64,
}

pub fn summarize(results: &[RunResult]) -> Result<Summary, HarnessError> {
    let first = results.first().ok_or(HarnessError::NoResults)?;
    let aris: Vec<f64> = results.iter().filter_map(|r| r.ari.value()).collect();
    let totals: Vec<f64> = results.iter().map(|r| r.pair_counts.total_count as f64).collect();
    let positives: Vec<f64> = results.iter().map(|r| r.pair_counts.positive_count as f64).collect();
    let (mean_ari, std_ari) = mean_std(&aris);
    let (mean_total_pairs, std_total_pairs) = mean_std(&totals);
    Ok(Summary {
        method: first.method.clone(),
        runs: results.len(),
        undefined_ari: results.len() - aris.len(),
        mean_ari,
        std_ari,
        mean_total_pairs,
        std_total_pairs,
        mean_positive_pairs: mean_std(&positives).0,
    })
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> HarnessError + '_ {
    move |source| HarnessError::Io {
        path: path.to_owned(),
        source,
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> HarnessError + '_ {
    move |source| HarnessError::Csv {
        path: path.to_owned(),
        source,
    }
}

pub fn results_to_json(results: &[RunResult]) -> String {
    serde_json::to_string_pretty(results).expect("run results always serialize")
}

pub fn read_results(path: &Path) -> Result<Vec<RunResult>, HarnessError> {
    let text = fs::read_to_string(path).map_err(io_err(path))?;
    serde_json::from_str(&text).map_err(|source| HarnessError::Json {
        path: path.to_owned(),
        source,
    })
}

/// Writes `summary.csv` rows, one per labelled group.
pub fn write_summaries(path: &Path, rows: &[(String, Summary)]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record([
        "group",
        "method",
        "runs",
        "undefined_ari",
        "mean_ari",
        "std_ari",
        "mean_total_pairs",
        "std_total_pairs",
        "mean_positive_pairs",
    ])
    .map_err(csv_err(path))?;
    for (group, s) in rows {
        w.write_record([
            group.clone(),
            s.method.clone(),
            s.runs.to_string(),
            s.undefined_ari.to_string(),
            s.mean_ari.to_string(),
            s.std_ari.to_string(),
            s.mean_total_pairs.to_string(),
            s.std_total_pairs.to_string(),
            s.mean_positive_pairs.to_string(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

fn write_plotdata(path: &Path, results: &[RunResult]) -> Result<(), HarnessError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["run", "metric", "value"]).map_err(csv_err(path))?;
    for r in results {
        let run = r.run_index.to_string();
        let ari = r.ari.value().map_or_else(|| "NaN".to_owned(), |v| v.to_string());
        let rows = [
            ("ari", ari),
            ("positive_pairs", r.pair_counts.positive_count.to_string()),
            ("negative_pairs", r.pair_counts.negative_count.to_string()),
            ("total_pairs", r.pair_counts.total_count.to_string()),
        ];
        for (metric, value) in rows {
            w.write_record([run.as_str(), metric, value.as_str()]).map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

/// Files written by [`report`].
#[derive(Debug, Clone)]
pub struct ReportFiles {
    pub results: PathBuf,
    pub summary: PathBuf,
    pub plotdata: PathBuf,
}

/// Writes the three report files for `results` into `dir`, creating it if needed.
pub fn report(results: &[RunResult], dir: &Path) -> Result<ReportFiles, HarnessError> {
    let summary = summarize(results)?;
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    let files = ReportFiles {
        results: dir.join(RESULTS_FILE),
        summary: dir.join(SUMMARY_FILE),
        plotdata: dir.join(PLOTDATA_FILE),
    };
    fs::write(&files.results, results_to_json(results)).map_err(io_err(&files.results))?;
    write_summaries(&files.summary, &[(summary.method.clone(), summary)])?;
    write_plotdata(&files.plotdata, results)?;
    Ok(files)
}

/// [`report`] plus `failures.json` when any run failed.
pub fn report_outcome(outcome: &ExperimentOutcome, dir: &Path) -> Result<Option<ReportFiles>, HarnessError> {
    fs::create_dir_all(dir).map_err(io_err(dir))?;
    if !outcome.failures.is_empty() {
        let path = dir.join(FAILURES_FILE);
        let text = serde_json::to_string_pretty::<Vec<RunFailure>>(&outcome.failures).expect("failures serialize");
        fs::write(&path, text).map_err(io_err(&path))?;
    }
    if outcome.results.is_empty() {
        return Ok(None);
    }
    report(&outcome.results, dir).map(Some)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn population_std() {
        let (m, s) = mean_std(&[1.0, 3.0]);
        assert_eq!((m, s), (2.0, 1.0));
        assert!(mean_std(&[]).0.is_nan());
    }

    #[test]
    fn empty_results_are_rejected() {
        assert!(matches!(summarize(&[]), Err(HarnessError::NoResults)));
    }
}
