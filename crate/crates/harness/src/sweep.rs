//! Parameter sweeps: one experiment per grid value, all sharing the base configuration and
//! seeds so grid points differ only in the swept parameter.

use std::fs;
use std::path::Path;

use rpspectral::rptree::ProjectionStrategy;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, Method};
use crate::error::HarnessError;
use crate::pipeline::{run_experiment_on, ExperimentOutcome};
use crate::report::{report_outcome, summarize, write_summaries, Summary};

/// Leaf size used when a strategy sweep starts from a k-nn base method.
pub const DEFAULT_LEAF_SIZE: usize = 20;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "parameter", content = "values", rename_all = "kebab-case")]
pub enum Grid {
    LeafSize(Vec<usize>),
    Strategy(Vec<ProjectionStrategy>),
    K(Vec<usize>),
}

impl Grid {
    pub fn len(&self) -> usize {
        match self {
            Grid::LeafSize(v) => v.len(),
            Grid::Strategy(v) => v.len(),
            Grid::K(v) => v.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// The configurations of every grid point with their labels.
    pub fn expand(&self, base: &ExperimentConfig) -> Vec<(String, ExperimentConfig)> {
        let (base_leaf, base_strategy) = match base.method {
            Method::RpTree { leaf_size, strategy } => (leaf_size, strategy),
            _ => (DEFAULT_LEAF_SIZE, ProjectionStrategy::Random),
        };
        let with = |method| ExperimentConfig {
            method,
            ..base.clone()
        };
        match self {
            Grid::LeafSize(v) => v
                .iter()
                .map(|&leaf_size| {
                    let m = Method::RpTree {
                        leaf_size,
                        strategy: base_strategy,
                    };
                    (format!("n0={leaf_size}"), with(m))
                })
                .collect(),
            Grid::Strategy(v) => v
                .iter()
                .map(|&strategy| {
                    let m = Method::RpTree {
                        leaf_size: base_leaf,
                        strategy,
                    };
                    (strategy.label(), with(m))
                })
                .collect(),
            Grid::K(v) => v.iter().map(|&k| (format!("k={k}"), with(Method::Knn { k }))).collect(),
        }
    }
}

#[derive(Debug, Clone)]
pub struct SweepPoint {
    pub label: String,
    pub config: ExperimentConfig,
    pub outcome: ExperimentOutcome,
}

pub fn sweep(base: &ExperimentConfig, grid: &Grid) -> Result<Vec<SweepPoint>, HarnessError> {
    if grid.is_empty() {
        return Err(HarnessError::BadGrid);
    }
    let points = grid.expand(base);
    for (_, cfg) in &points {
        cfg.validate()?;
    }
    let (data, labels) = base.dataset.load()?;
    Ok(points
        .into_iter()
        .map(|(label, config)| {
            let outcome = run_experiment_on(&config, &data, &labels);
            SweepPoint {
                label,
                config,
                outcome,
            }
        })
        .collect())
}

/// Writes one report directory per grid point plus a combined `summary.csv` keyed by grid
/// value.
pub fn report_sweep(points: &[SweepPoint], dir: &Path) -> Result<Vec<(String, Summary)>, HarnessError> {
    fs::create_dir_all(dir).map_err(|source| HarnessError::Io {
        path: dir.to_owned(),
        source,
    })?;
    let mut rows = Vec::new();
    for p in points {
        report_outcome(&p.outcome, &dir.join(&p.label))?;
        if !p.outcome.results.is_empty() {
            rows.push((p.label.clone(), summarize(&p.outcome.results)?));
        }
    }
    write_summaries(&dir.join(crate::report::SUMMARY_FILE), &rows)?;
    Ok(rows)
}
