//! Random projection trees.
//!
//! A node holding more than `leaf_size` points is split by projecting its points onto a
//! direction and cutting the projected range at a random fraction in `[1/4, 3/4)`. The
//! direction comes from a [`ProjectionStrategy`]. Leaves are the point groups used for
//! positive-pair mining in [`crate::pairing`].

use ndarray::{Array1, Array2, ArrayView1};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};
use thiserror::Error;

use crate::dataset::DataMatrix;
use crate::scalar::Scalar;
use crate::seeding::{stream_rng, StageRng, Stream};

/// Lower and upper fraction of the projected range the split threshold is drawn from.
pub const SPLIT_BAND: (f64, f64) = (0.25, 0.75);

const PCA_MAX_ITERATIONS: usize = 100;
const PCA_TOLERANCE: f64 = 1e-9;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum RpTreeError {
    #[error("covariance of the point subset is all zero; no principal direction")]
    DegenerateGeometry,
    #[error("all projected values coincide after {attempts} attempts")]
    DegenerateSplit { attempts: usize },
    #[error("need at least {needed} points, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("invalid tree configuration: {0}")]
    BadConfig(String),
}

/// A direction on the unit sphere `S^{D-1}`.
#[derive(Debug, Clone, PartialEq)]
pub struct UnitVector<T>(Array1<T>);

impl<T: Scalar> UnitVector<T> {
    /// Normalizes `v`; `None` for the zero vector or non-finite input.
    pub fn normalize(v: Array1<T>) -> Option<Self> {
        let norm = v.dot(&v).sqrt();
        if norm > T::zero() && norm.is_finite() {
            Some(Self(v.mapv(|c| c / norm)))
        } else {
            None
        }
    }

    /// Uniform draw from the sphere via a normalized standard-normal sample.
    pub fn random(dim: usize, rng: &mut StageRng) -> Self {
        loop {
            let v = Array1::from_shape_fn(dim, |_| {
                let z: f64 = StandardNormal.sample(rng);
                T::lit(z)
            });
            if let Some(u) = Self::normalize(v) {
                return u;
            }
        }
    }

    pub fn components(&self) -> &Array1<T> {
        &self.0
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn norm(&self) -> T {
        self.0.dot(&self.0).sqrt()
    }

    pub fn project(&self, point: ArrayView1<'_, T>) -> T {
        self.0.dot(&point)
    }
}

/// How split directions are chosen.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case")]
pub enum ProjectionStrategy {
    /// One uniform direction.
    Random,
    /// The highest projected variance among `n_try` uniform directions.
    BestOfN { n_try: usize },
    /// First principal component of the node's points.
    Pca,
}

impl ProjectionStrategy {
    pub fn validate(&self) -> Result<(), RpTreeError> {
        match self {
            ProjectionStrategy::BestOfN { n_try: 0 } => {
                Err(RpTreeError::BadConfig("n_try must be at least 1".into()))
            }
            _ => Ok(()),
        }
    }

    /// Short stable label: `random`, `best-of-3`, `pca`.
    pub fn label(&self) -> String {
        match self {
            ProjectionStrategy::Random => "random".into(),
            ProjectionStrategy::BestOfN { n_try } => format!("best-of-{n_try}"),
            ProjectionStrategy::Pca => "pca".into(),
        }
    }
}

impl std::str::FromStr for ProjectionStrategy {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "random" => Ok(Self::Random),
            "pca" => Ok(Self::Pca),
            other => other
                .strip_prefix("best-of-")
                .and_then(|n| n.parse().ok())
                .filter(|&n_try: &usize| n_try >= 1)
                .map(|n_try| Self::BestOfN { n_try })
                .ok_or_else(|| format!("unknown projection strategy {other:?}")),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RpTreeConfig {
    pub leaf_size: usize,
    pub strategy: ProjectionStrategy,
    pub seed: u64,
    #[serde(default = "default_retries")]
    pub max_split_retries: usize,
}

fn default_retries() -> usize {
    3
}

impl RpTreeConfig {
    pub fn new(leaf_size: usize, strategy: ProjectionStrategy, seed: u64) -> Self {
        Self {
            leaf_size,
            strategy,
            seed,
            max_split_retries: default_retries(),
        }
    }

    pub fn validate(&self) -> Result<(), RpTreeError> {
        if self.leaf_size == 0 {
            return Err(RpTreeError::BadConfig("leaf size must be at least 1".into()));
        }
        self.strategy.validate()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum RpTreeNode<T> {
    Internal {
        direction: UnitVector<T>,
        threshold: T,
        /// Min and max projected value of the node's points along `direction`.
        range: (T, T),
        left: Box<RpTreeNode<T>>,
        right: Box<RpTreeNode<T>>,
    },
    Leaf {
        indices: Vec<usize>,
        /// Set when the node could not be split and may exceed the leaf size.
        degenerate: bool,
    },
}

impl<T: Scalar> RpTreeNode<T> {
    fn visit_leaves<'a>(&'a self, out: &mut Vec<&'a [usize]>) {
        match self {
            RpTreeNode::Leaf { indices, .. } => out.push(indices),
            RpTreeNode::Internal { left, right, .. } => {
                left.visit_leaves(out);
                right.visit_leaves(out);
            }
        }
    }

    fn to_json(&self) -> Value {
        match self {
            RpTreeNode::Leaf {
                indices,
                degenerate,
            } => json!({ "leaf": indices, "degenerate": degenerate }),
            RpTreeNode::Internal {
                direction,
                threshold,
                range,
                left,
                right,
            } => json!({
                "direction": direction.components().iter().map(|c| c.as_f64()).collect::<Vec<_>>(),
                "threshold": threshold.as_f64(),
                "range": [range.0.as_f64(), range.1.as_f64()],
                "left": left.to_json(),
                "right": right.to_json(),
            }),
        }
    }

    /// Every internal node, pre-order.
    pub fn internal_nodes(&self) -> Vec<&RpTreeNode<T>> {
        let mut out = Vec::new();
        let mut stack = vec![self];
        while let Some(node) = stack.pop() {
            if let RpTreeNode::Internal { left, right, .. } = node {
                out.push(node);
                stack.push(right);
                stack.push(left);
            }
        }
        out
    }

    pub fn depth(&self) -> usize {
        match self {
            RpTreeNode::Leaf { .. } => 0,
            RpTreeNode::Internal { left, right, .. } => 1 + left.depth().max(right.depth()),
        }
    }
}

/// A built tree over a dataset of `n` points.
#[derive(Debug, Clone, PartialEq)]
pub struct RpTree<T> {
    root: RpTreeNode<T>,
    n: usize,
    leaf_size: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LeafStats {
    pub count: usize,
    pub min: usize,
    pub max: usize,
    pub mean: f64,
    pub degenerate: usize,
}

impl<T: Scalar> RpTree<T> {
    pub fn root(&self) -> &RpTreeNode<T> {
        &self.root
    }

    pub fn n(&self) -> usize {
        self.n
    }

    pub fn leaf_size(&self) -> usize {
        self.leaf_size
    }

    /// Leaf index sets, left to right.
    pub fn leaves(&self) -> Vec<&[usize]> {
        let mut out = Vec::new();
        self.root.visit_leaves(&mut out);
        out
    }

    /// Leaf flags in the same order as [`RpTree::leaves`].
    pub fn leaf_flags(&self) -> Vec<bool> {
        let mut flags = Vec::new();
        let mut stack = vec![&self.root];
        while let Some(node) = stack.pop() {
            match node {
                RpTreeNode::Leaf { degenerate, .. } => flags.push(*degenerate),
                RpTreeNode::Internal { left, right, .. } => {
                    stack.push(right);
                    stack.push(left);
                }
            }
        }
        flags
    }

    pub fn leaf_size_stats(&self) -> LeafStats {
        let leaves = self.leaves();
        let sizes: Vec<usize> = leaves.iter().map(|l| l.len()).collect();
        let total: usize = sizes.iter().sum();
        LeafStats {
            count: sizes.len(),
            min: sizes.iter().copied().min().unwrap_or(0),
            max: sizes.iter().copied().max().unwrap_or(0),
            mean: total as f64 / sizes.len() as f64,
            degenerate: self.leaf_flags().iter().filter(|&&d| d).count(),
        }
    }

    /// Nested JSON dump of the tree: directions, thresholds and leaf indices.
    pub fn to_json(&self) -> Value {
        json!({ "n": self.n, "leaf_size": self.leaf_size, "root": self.root.to_json() })
    }
}

/// A chosen direction and, for scored strategies, every candidate with its projected variance.
#[derive(Debug, Clone)]
pub struct DirectionChoice<T> {
    pub direction: UnitVector<T>,
    pub candidates: Vec<(UnitVector<T>, T)>,
}

fn projections<T: Scalar>(data: &DataMatrix<T>, indices: &[usize], dir: &UnitVector<T>) -> Vec<T> {
    indices.iter().map(|&i| dir.project(data.row(i))).collect()
}

/// Population variance of the projections of `indices` onto `dir`.
pub fn projected_variance<T: Scalar>(data: &DataMatrix<T>, indices: &[usize], dir: &UnitVector<T>) -> T {
    let p = projections(data, indices, dir);
    let n = T::from_count(p.len());
    let mean = p.iter().copied().sum::<T>() / n;
    p.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n
}

/// Chooses a split direction for the points named by `indices`.
pub fn choose_direction<T: Scalar>(
    data: &DataMatrix<T>,
    indices: &[usize],
    strategy: ProjectionStrategy,
    rng: &mut StageRng,
) -> Result<UnitVector<T>, RpTreeError> {
    choose_direction_scored(data, indices, strategy, rng).map(|c| c.direction)
}

/// As [`choose_direction`], additionally returning the scored candidates for `BestOfN`.
pub fn choose_direction_scored<T: Scalar>(
    data: &DataMatrix<T>,
    indices: &[usize],
    strategy: ProjectionStrategy,
    rng: &mut StageRng,
) -> Result<DirectionChoice<T>, RpTreeError> {
    strategy.validate()?;
    let dim = data.dim();
    match strategy {
        ProjectionStrategy::Random => Ok(DirectionChoice {
            direction: UnitVector::random(dim, rng),
            candidates: Vec::new(),
        }),
        ProjectionStrategy::BestOfN { n_try } => {
            if indices.len() < 2 {
                return Err(RpTreeError::TooFewPoints {
                    needed: 2,
                    got: indices.len(),
                });
            }
            let candidates: Vec<(UnitVector<T>, T)> = (0..n_try)
                .map(|_| {
                    let d = UnitVector::random(dim, rng);
                    let score = projected_variance(data, indices, &d);
                    (d, score)
                })
                .collect();
            // Strictly greater keeps the earliest candidate on ties.
            let mut best = 0;
            for (i, (_, score)) in candidates.iter().enumerate() {
                if *score > candidates[best].1 {
                    best = i;
                }
            }
            Ok(DirectionChoice {
                direction: candidates[best].0.clone(),
                candidates,
            })
        }
        ProjectionStrategy::Pca => {
            if indices.len() < 2 {
                return Err(RpTreeError::TooFewPoints {
                    needed: 2,
                    got: indices.len(),
                });
            }
            Ok(DirectionChoice {
                direction: principal_direction(data, indices)?,
                candidates: Vec::new(),
            })
        }
    }
}

/// First principal component by power iteration on the subset covariance, with the first
/// nonzero component made positive.
pub fn principal_direction<T: Scalar>(
    data: &DataMatrix<T>,
    indices: &[usize],
) -> Result<UnitVector<T>, RpTreeError> {
    let dim = data.dim();
    let n = T::from_count(indices.len());
    let mut mean = Array1::<T>::zeros(dim);
    for &i in indices {
        mean += &data.row(i);
    }
    mean.mapv_inplace(|v| v / n);
    let mut cov = Array2::<T>::zeros((dim, dim));
    for &i in indices {
        let c = &data.row(i) - &mean;
        for a in 0..dim {
            for b in a..dim {
                cov[[a, b]] += c[a] * c[b];
            }
        }
    }
    for a in 0..dim {
        for b in a..dim {
            let v = cov[[a, b]] / n;
            cov[[a, b]] = v;
            cov[[b, a]] = v;
        }
    }
    if cov.iter().all(|&v| v == T::zero()) {
        return Err(RpTreeError::DegenerateGeometry);
    }

    // Start from the covariance column with the largest diagonal entry.
    let start = (0..dim)
        .max_by(|&a, &b| cov[[a, a]].partial_cmp(&cov[[b, b]]).unwrap().then(b.cmp(&a)))
        .unwrap_or(0);
    let mut v = UnitVector::normalize(cov.column(start).to_owned())
        .ok_or(RpTreeError::DegenerateGeometry)?;
    let tol = T::lit(PCA_TOLERANCE);
    for _ in 0..PCA_MAX_ITERATIONS {
        let next = match UnitVector::normalize(cov.dot(v.components())) {
            Some(next) => next,
            None => break,
        };
        let delta = (next.components() - v.components()).mapv(|d| d * d).sum().sqrt();
        v = next;
        if delta < tol {
            break;
        }
    }

    let comps = v.components();
    let scale = comps.iter().fold(T::zero(), |m, c| m.max(c.abs()));
    let cutoff = scale * T::lit(1e-12);
    let flip = comps
        .iter()
        .find(|c| c.abs() > cutoff)
        .is_some_and(|c| *c < T::zero());
    if flip {
        v = UnitVector(comps.mapv(|c| -c));
    }
    Ok(v)
}

/// Result of a successful split.
#[derive(Debug, Clone, PartialEq)]
pub struct Split<T> {
    pub left: Vec<usize>,
    pub right: Vec<usize>,
    pub threshold: T,
    pub direction: UnitVector<T>,
    pub range: (T, T),
}

fn try_split<T: Scalar>(
    data: &DataMatrix<T>,
    indices: &[usize],
    direction: &UnitVector<T>,
    rng: &mut StageRng,
) -> Option<Split<T>> {
    let proj = projections(data, indices, direction);
    let lo = proj.iter().copied().fold(T::infinity(), T::min);
    let hi = proj.iter().copied().fold(T::neg_infinity(), T::max);
    if !(hi > lo) {
        return None;
    }
    let beta = T::lit(rng.random_range(SPLIT_BAND.0..SPLIT_BAND.1));
    let threshold = lo + beta * (hi - lo);
    let (mut left, mut right) = (Vec::new(), Vec::new());
    for (&i, &p) in indices.iter().zip(&proj) {
        if p <= threshold {
            left.push(i);
        } else {
            right.push(i);
        }
    }
    if left.is_empty() || right.is_empty() {
        return None;
    }
    Some(Split {
        left,
        right,
        threshold,
        direction: direction.clone(),
        range: (lo, hi),
    })
}

/// Splits `indices` along `direction` at `lo + β(hi − lo)`, `β ~ U[1/4, 3/4)`. When the
/// projection is degenerate, up to `max_retries` fresh uniform directions are tried.
pub fn split_node<T: Scalar>(
    data: &DataMatrix<T>,
    indices: &[usize],
    direction: &UnitVector<T>,
    max_retries: usize,
    rng: &mut StageRng,
) -> Result<Split<T>, RpTreeError> {
    if indices.len() < 2 {
        return Err(RpTreeError::TooFewPoints {
            needed: 2,
            got: indices.len(),
        });
    }
    if let Some(split) = try_split(data, indices, direction, rng) {
        return Ok(split);
    }
    for _ in 0..max_retries {
        let fresh = UnitVector::random(data.dim(), rng);
        if let Some(split) = try_split(data, indices, &fresh, rng) {
            return Ok(split);
        }
    }
    Err(RpTreeError::DegenerateSplit {
        attempts: max_retries + 1,
    })
}

/// Builds a tree: every node with more than `leaf_size` points is split; nodes that cannot
/// be split become leaves flagged degenerate.
pub fn build_tree<T: Scalar>(data: &DataMatrix<T>, config: &RpTreeConfig) -> Result<RpTree<T>, RpTreeError> {
    config.validate()?;
    let mut rng = stream_rng(config.seed, Stream::Tree);
    let root = build_node(data, (0..data.n()).collect(), config, &mut rng);
    Ok(RpTree {
        root,
        n: data.n(),
        leaf_size: config.leaf_size,
    })
}

fn build_node<T: Scalar>(
    data: &DataMatrix<T>,
    indices: Vec<usize>,
    config: &RpTreeConfig,
    rng: &mut StageRng,
) -> RpTreeNode<T> {
    if indices.len() <= config.leaf_size {
        return RpTreeNode::Leaf {
            indices,
            degenerate: false,
        };
    }
    let degenerate = |indices| RpTreeNode::Leaf {
        indices,
        degenerate: true,
    };
    let direction = match choose_direction(data, &indices, config.strategy, rng) {
        Ok(d) => d,
        Err(_) => return degenerate(indices),
    };
    match split_node(data, &indices, &direction, config.max_split_retries, rng) {
        Ok(split) => {
            let left = build_node(data, split.left, config, rng);
            let right = build_node(data, split.right, config, rng);
            RpTreeNode::Internal {
                direction: split.direction,
                threshold: split.threshold,
                range: split.range,
                left: Box::new(left),
                right: Box::new(right),
            }
        }
        Err(_) => degenerate(indices),
    }
}
