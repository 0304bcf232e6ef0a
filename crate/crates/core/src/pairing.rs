//! Positive/negative training pairs for the Siamese network.
//!
//! Two sources: the exact k-nearest-neighbour graph (positives are each point's `k`
//! neighbours, negatives `k` random non-neighbours), and random projection tree leaves
//! (positives are all within-leaf pairs, negatives pair a leaf with one other random leaf).
//! Pairs are unordered `(i, j)` with `i < j` and deduplicated.

use std::collections::HashSet;
use std::io::Write;
use std::path::Path;

use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DataMatrix;
use crate::rptree::RpTree;
use crate::scalar::Scalar;
use crate::seeding::StageRng;

#[derive(Debug, Error)]
pub enum PairingError {
    #[error("k = {k} must be in 1..n (n = {n})")]
    KTooLarge { k: usize, n: usize },
    #[error("{path}: {source}")]
    Io {
        path: std::path::PathBuf,
        #[source]
        source: std::io::Error,
    },
}

/// Unordered index pair stored with `.0 < .1`.
pub type Pair = (usize, usize);

fn ordered(i: usize, j: usize) -> Pair {
    if i < j {
        (i, j)
    } else {
        (j, i)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum PairSource {
    Knn { k: usize },
    RpTree { leaf_size: usize },
}

#[derive(Debug, Clone, PartialEq)]
pub struct PairSet {
    pub positives: Vec<Pair>,
    pub negatives: Vec<Pair>,
    pub source: PairSource,
    /// Positive count before merging duplicates (`n × k` for k-nn; ordered count for trees).
    pub raw_positive_count: usize,
    pub warnings: Vec<String>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairCounts {
    pub positive_count: usize,
    pub negative_count: usize,
    pub total_count: usize,
}

impl PairSet {
    pub fn counts(&self) -> PairCounts {
        count_pairs(self)
    }

    /// Writes `positives.csv` and `negatives.csv` (header `i,j`) into `dir`.
    pub fn write_csv(&self, dir: &Path) -> Result<(), PairingError> {
        for (name, pairs) in [("positives.csv", &self.positives), ("negatives.csv", &self.negatives)] {
            let path = dir.join(name);
            let io = |source| PairingError::Io {
                path: path.clone(),
                source,
            };
            let mut out = std::io::BufWriter::new(std::fs::File::create(&path).map_err(io)?);
            writeln!(out, "i,j").map_err(io)?;
            for (i, j) in pairs {
                writeln!(out, "{i},{j}").map_err(io)?;
            }
            out.flush().map_err(io)?;
        }
        Ok(())
    }
}

pub fn count_pairs(pairs: &PairSet) -> PairCounts {
    PairCounts {
        positive_count: pairs.positives.len(),
        negative_count: pairs.negatives.len(),
        total_count: pairs.positives.len() + pairs.negatives.len(),
    }
}

fn sorted_unique(mut pairs: Vec<Pair>) -> Vec<Pair> {
    pairs.sort_unstable();
    pairs.dedup();
    pairs
}

/// Exact brute-force `k` nearest neighbours of every point by squared Euclidean distance,
/// ties broken toward the lower index.
pub fn nearest_neighbors<T: Scalar>(data: &DataMatrix<T>, k: usize) -> Result<Vec<Vec<usize>>, PairingError> {
    let n = data.n();
    if k == 0 || k >= n {
        return Err(PairingError::KTooLarge { k, n });
    }
    let points = data.points();
    let mut out = Vec::with_capacity(n);
    let mut dist: Vec<(T, usize)> = Vec::with_capacity(n);
    for i in 0..n {
        let xi = points.row(i);
        dist.clear();
        for j in (0..n).filter(|&j| j != i) {
            // Direct differences keep ties exact for duplicated points.
            let d = xi
                .iter()
                .zip(points.row(j))
                .map(|(&a, &b)| (a - b) * (a - b))
                .sum::<T>();
            dist.push((d, j));
        }
        let cmp = |a: &(T, usize), b: &(T, usize)| a.0.partial_cmp(&b.0).unwrap().then(a.1.cmp(&b.1));
        dist.select_nth_unstable_by(k - 1, cmp);
        let mut nearest = dist[..k].to_vec();
        nearest.sort_by(cmp);
        out.push(nearest.into_iter().map(|(_, j)| j).collect());
    }
    Ok(out)
}

/// k-nn graph pairs: each point's `k` nearest neighbours are positives and `k` points drawn
/// uniformly without replacement from the points that are neither its neighbours nor have
/// it as a neighbour are negatives.
pub fn knn_pairs<T: Scalar>(data: &DataMatrix<T>, k: usize, rng: &mut StageRng) -> Result<PairSet, PairingError> {
    let n = data.n();
    let neighbors = nearest_neighbors(data, k)?;
    let mut linked: Vec<HashSet<usize>> = vec![HashSet::new(); n];
    let mut positives = Vec::with_capacity(n * k);
    for (i, nbrs) in neighbors.iter().enumerate() {
        for &j in nbrs {
            positives.push(ordered(i, j));
            linked[i].insert(j);
            linked[j].insert(i);
        }
    }
    let raw_positive_count = positives.len();

    let mut warnings = Vec::new();
    let mut negatives = Vec::with_capacity(n * k);
    for (i, links) in linked.iter().enumerate() {
        let candidates: Vec<usize> = (0..n).filter(|&j| j != i && !links.contains(&j)).collect();
        let take = k.min(candidates.len());
        if take < k {
            warnings.push(format!(
                "point {i}: only {take} negative candidates for k = {k}"
            ));
        }
        for c in index::sample(rng, candidates.len(), take) {
            negatives.push(ordered(i, candidates[c]));
        }
    }
    Ok(PairSet {
        positives: sorted_unique(positives),
        negatives: sorted_unique(negatives),
        source: PairSource::Knn { k },
        raw_positive_count,
        warnings,
    })
}

/// Tree-leaf pairs: all within-leaf pairs are positives; each leaf is paired with one other
/// leaf chosen uniformly and all cross pairs are negatives.
pub fn rptree_pairs<T: Scalar>(tree: &RpTree<T>, rng: &mut StageRng) -> PairSet {
    leaf_pairs(&tree.leaves(), tree.leaf_size(), rng)
}

/// [`rptree_pairs`] over an explicit list of disjoint leaves.
pub fn leaf_pairs(leaves: &[&[usize]], leaf_size: usize, rng: &mut StageRng) -> PairSet {
    let mut positives = Vec::new();
    let mut raw_positive_count = 0;
    for leaf in leaves {
        raw_positive_count += leaf.len() * leaf.len().saturating_sub(1);
        for (a, &i) in leaf.iter().enumerate() {
            for &j in &leaf[a + 1..] {
                positives.push(ordered(i, j));
            }
        }
    }

    let mut negatives = Vec::new();
    let mut warnings = Vec::new();
    if leaves.len() < 2 {
        warnings.push("tree has a single leaf; no negative pairs".to_owned());
    } else {
        for (x, wx) in leaves.iter().enumerate() {
            // Uniform over the other leaves.
            let mut y = rng.random_range(0..leaves.len() - 1);
            if y >= x {
                y += 1;
            }
            for &i in wx.iter() {
                for &j in leaves[y] {
                    negatives.push(ordered(i, j));
                }
            }
        }
    }
    PairSet {
        positives: sorted_unique(positives),
        negatives: sorted_unique(negatives),
        source: PairSource::RpTree { leaf_size },
        raw_positive_count,
        warnings,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct ExpectedPairCounts {
    pub knn_positive: u64,
    pub rptree_positive: u64,
}

/// Closed-form positive-pair estimates: `n·k` for the k-nn graph and `n₀² · n/n₀ = n·n₀`
/// for tree leaves.
pub fn expected_pair_counts(n: u64, k: u64, leaf_size: u64) -> ExpectedPairCounts {
    ExpectedPairCounts {
        knn_positive: n * k,
        rptree_positive: n * leaf_size,
    }
}
