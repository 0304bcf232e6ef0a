//! Final cluster assignment and scoring: seeded k-means, pair-confusion counting, the
//! pair-counting adjusted Rand index, and a dense eigen-decomposition spectral clustering
//! used as a reference.

use std::collections::HashMap;

use ndarray::{Array1, Array2, ArrayView1, Axis};
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::{DataMatrix, LabelVector};
use crate::linalg::symmetric_eigen;
use crate::scalar::Scalar;
use crate::seeding::{stream_rng, StageRng, Stream};
use crate::siamese::{heat_kernel_affinity, pairwise_distances, select_sigma, SiameseError};

/// Largest input the dense reference clustering accepts.
pub const ORACLE_MAX_POINTS: usize = 2000;
const EIGEN_TOLERANCE: f64 = 1e-10;
const EIGEN_MAX_SWEEPS: usize = 100;

#[derive(Debug, Error)]
pub enum ClusteringError {
    #[error("k = {k} exceeds the number of points {n}")]
    KTooLarge { k: usize, n: usize },
    #[error("invalid k-means configuration: {0}")]
    BadConfig(String),
    #[error("label vectors have lengths {left} and {right}")]
    LengthMismatch { left: usize, right: usize },
    #[error("at least two points are needed, got {0}")]
    TooFewPoints(usize),
    #[error("adjusted Rand index is undefined for these partitions")]
    DegeneratePartition,
    #[error("{n} points exceed the dense eigensolver budget of {max}")]
    TooLarge { n: usize, max: usize },
    #[error(transparent)]
    Affinity(#[from] SiameseError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct KmeansConfig {
    pub k: usize,
    pub max_iterations: usize,
    /// Convergence threshold on the largest center displacement.
    pub tolerance: f64,
    pub restarts: usize,
    pub seed: u64,
}

impl Default for KmeansConfig {
    fn default() -> Self {
        Self::new(1, 0)
    }
}

impl KmeansConfig {
    pub fn new(k: usize, seed: u64) -> Self {
        Self {
            k,
            max_iterations: 300,
            tolerance: 1e-6,
            restarts: 10,
            seed,
        }
    }

    pub fn validate(&self) -> Result<(), ClusteringError> {
        if self.k == 0 || self.restarts == 0 || self.max_iterations == 0 {
            return Err(ClusteringError::BadConfig(
                "k, restarts and max_iterations must be positive".into(),
            ));
        }
        if !(self.tolerance >= 0.0) {
            return Err(ClusteringError::BadConfig("tolerance must be nonnegative".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KmeansResult<T> {
    /// Canonical labels, numbered by first appearance.
    pub labels: LabelVector,
    /// Row `c` is the center of label `c`.
    pub centers: Array2<T>,
    /// Within-cluster sum of squared distances.
    pub inertia: T,
    /// Lloyd iterations of the winning restart.
    pub iterations: usize,
}

fn sq_dist<T: Scalar>(a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> T {
    a.iter().zip(b.iter()).map(|(&x, &y)| (x - y) * (x - y)).sum()
}

/// Index of the nearest center, ties to the lower index.
fn nearest<T: Scalar>(point: ArrayView1<'_, T>, centers: &Array2<T>) -> (usize, T) {
    let mut best = (0, sq_dist(point, centers.row(0)));
    for c in 1..centers.nrows() {
        let d = sq_dist(point, centers.row(c));
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

/// Distance-squared weighted seeding.
fn seed_centers<T: Scalar>(y: &Array2<T>, k: usize, rng: &mut StageRng) -> Array2<T> {
    let n = y.nrows();
    let mut centers = Array2::zeros((k, y.ncols()));
    let first = rng.random_range(0..n);
    centers.row_mut(0).assign(&y.row(first));
    let mut d2: Vec<T> = (0..n).map(|i| sq_dist(y.row(i), y.row(first))).collect();
    for c in 1..k {
        let total: T = d2.iter().copied().sum();
        let pick = if total > T::zero() {
            let target = T::lit(rng.random::<f64>()) * total;
            let mut acc = T::zero();
            let mut chosen = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > T::zero() && acc > target {
                    chosen = Some(i);
                    break;
                }
            }
            // Rounding can leave the target unreached; fall back to the last weighted point.
            chosen.unwrap_or_else(|| d2.iter().rposition(|&w| w > T::zero()).unwrap_or(0))
        } else {
            0
        };
        centers.row_mut(c).assign(&y.row(pick));
        for (i, d) in d2.iter_mut().enumerate() {
            let nd = sq_dist(y.row(i), y.row(pick));
            if nd < *d {
                *d = nd;
            }
        }
    }
    centers
}

struct LloydRun<T> {
    assignment: Vec<usize>,
    centers: Array2<T>,
    inertia: T,
    iterations: usize,
}

fn lloyd<T: Scalar>(y: &Array2<T>, mut centers: Array2<T>, config: &KmeansConfig) -> LloydRun<T> {
    let (n, dim) = y.dim();
    let k = centers.nrows();
    let tol = T::lit(config.tolerance);
    let mut assignment = vec![0usize; n];
    let mut dists = vec![T::zero(); n];
    let mut iterations = 0;
    loop {
        for i in 0..n {
            let (c, d) = nearest(y.row(i), &centers);
            assignment[i] = c;
            dists[i] = d;
        }
        if iterations == config.max_iterations {
            break;
        }
        iterations += 1;

        let mut sums = Array2::<T>::zeros((k, dim));
        let mut counts = vec![0usize; k];
        for i in 0..n {
            let c = assignment[i];
            counts[c] += 1;
            let mut row = sums.row_mut(c);
            row += &y.row(i);
        }
        let mut updated = centers.clone();
        for c in 0..k {
            if counts[c] > 0 {
                let mean = sums.row(c).mapv(|v| v / T::from_count(counts[c]));
                updated.row_mut(c).assign(&mean);
            } else {
                // Re-seed an empty cluster at the point farthest from its center.
                let mut far = 0;
                for i in 1..n {
                    if dists[i] > dists[far] {
                        far = i;
                    }
                }
                updated.row_mut(c).assign(&y.row(far));
                dists[far] = T::zero();
            }
        }
        let shift = (0..k)
            .map(|c| sq_dist(updated.row(c), centers.row(c)).sqrt())
            .fold(T::zero(), T::max);
        centers = updated;
        if shift <= tol {
            for i in 0..n {
                let (c, d) = nearest(y.row(i), &centers);
                assignment[i] = c;
                dists[i] = d;
            }
            break;
        }
    }
    let inertia = dists.iter().copied().sum();
    LloydRun {
        assignment,
        centers,
        inertia,
        iterations,
    }
}

/// Best of `restarts` seeded Lloyd runs by inertia; ties keep the earlier restart.
pub fn kmeans<T: Scalar>(y: &Array2<T>, config: &KmeansConfig) -> Result<KmeansResult<T>, ClusteringError> {
    config.validate()?;
    let n = y.nrows();
    if config.k > n {
        return Err(ClusteringError::KTooLarge { k: config.k, n });
    }
    let mut rng = stream_rng(config.seed, Stream::Kmeans);
    let mut best: Option<LloydRun<T>> = None;
    for _ in 0..config.restarts {
        let centers = seed_centers(y, config.k, &mut rng);
        let run = lloyd(y, centers, config);
        if best.as_ref().is_none_or(|b| run.inertia < b.inertia) {
            best = Some(run);
        }
    }
    let best = best.expect("restarts ≥ 1");

    let labels = LabelVector::canonical(&best.assignment);
    let mut order: Vec<usize> = Vec::with_capacity(config.k);
    for &c in &best.assignment {
        if !order.contains(&c) {
            order.push(c);
        }
    }
    order.extend((0..config.k).filter(|c| !best.assignment.contains(c)));
    let centers = best.centers.select(Axis(0), &order);
    Ok(KmeansResult {
        labels,
        centers,
        inertia: best.inertia,
        iterations: best.iterations,
    })
}

/// Counts over all unordered pairs. `n10`: same cluster in the reference only;
/// `n01`: same cluster in the prediction only.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct PairConfusion {
    pub n11: u64,
    pub n00: u64,
    pub n10: u64,
    pub n01: u64,
}

impl PairConfusion {
    pub fn total(&self) -> u64 {
        self.n11 + self.n00 + self.n10 + self.n01
    }
}

fn choose2(c: u64) -> u64 {
    c * c.saturating_sub(1) / 2
}

struct Contingency {
    n: usize,
    cells: HashMap<(usize, usize), u64>,
    rows: HashMap<usize, u64>,
    cols: HashMap<usize, u64>,
}

fn contingency(truth: &[usize], predicted: &[usize]) -> Result<Contingency, ClusteringError> {
    if truth.len() != predicted.len() {
        return Err(ClusteringError::LengthMismatch {
            left: truth.len(),
            right: predicted.len(),
        });
    }
    if truth.len() < 2 {
        return Err(ClusteringError::TooFewPoints(truth.len()));
    }
    let mut table = Contingency {
        n: truth.len(),
        cells: HashMap::new(),
        rows: HashMap::new(),
        cols: HashMap::new(),
    };
    for (&t, &l) in truth.iter().zip(predicted) {
        *table.cells.entry((t, l)).or_default() += 1;
        *table.rows.entry(t).or_default() += 1;
        *table.cols.entry(l).or_default() += 1;
    }
    Ok(table)
}

/// Pair-confusion counts from the contingency table of the two labelings.
pub fn pair_confusion(truth: &[usize], predicted: &[usize]) -> Result<PairConfusion, ClusteringError> {
    let table = contingency(truth, predicted)?;
    let n11: u64 = table.cells.values().map(|&c| choose2(c)).sum();
    let same_truth: u64 = table.rows.values().map(|&c| choose2(c)).sum();
    let same_pred: u64 = table.cols.values().map(|&c| choose2(c)).sum();
    let n10 = same_truth - n11;
    let n01 = same_pred - n11;
    let n00 = choose2(table.n as u64) - n11 - n10 - n01;
    Ok(PairConfusion { n11, n00, n10, n01 })
}

/// Adjusted Rand index in its pair-confusion form
/// `2(n00·n11 − n01·n10) / ((n00+n01)(n01+n11) + (n00+n10)(n10+n11))`.
pub fn ari_from_confusion(c: &PairConfusion) -> Result<f64, ClusteringError> {
    let (n11, n00, n10, n01) = (c.n11 as i128, c.n00 as i128, c.n10 as i128, c.n01 as i128);
    let numerator = 2 * (n00 * n11 - n01 * n10);
    let denominator = (n00 + n01) * (n01 + n11) + (n00 + n10) * (n10 + n11);
    if denominator == 0 {
        return Err(ClusteringError::DegeneratePartition);
    }
    if numerator == denominator {
        return Ok(1.0);
    }
    Ok(numerator as f64 / denominator as f64)
}

pub fn ari(truth: &[usize], predicted: &[usize]) -> Result<f64, ClusteringError> {
    ari_from_confusion(&pair_confusion(truth, predicted)?)
}

/// An ARI that may be undefined for degenerate partitions.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "value", rename_all = "lowercase")]
pub enum AriScore {
    Defined(f64),
    Undefined,
}

impl AriScore {
    pub fn value(self) -> Option<f64> {
        match self {
            AriScore::Defined(v) => Some(v),
            AriScore::Undefined => None,
        }
    }
}

/// Like [`ari`], mapping a zero denominator to [`AriScore::Undefined`].
pub fn ari_score(truth: &[usize], predicted: &[usize]) -> Result<AriScore, ClusteringError> {
    match ari(truth, predicted) {
        Ok(v) => Ok(AriScore::Defined(v)),
        Err(ClusteringError::DegeneratePartition) => Ok(AriScore::Undefined),
        Err(e) => Err(e),
    }
}

/// The contingency-table adjusted index with expected-index correction; `None` when its
/// denominator vanishes. A diagnostic cross-check for [`ari`].
pub fn hubert_arabie_ari(truth: &[usize], predicted: &[usize]) -> Result<Option<f64>, ClusteringError> {
    let table = contingency(truth, predicted)?;
    let index = table.cells.values().map(|&c| choose2(c)).sum::<u64>() as f64;
    let a = table.rows.values().map(|&c| choose2(c)).sum::<u64>() as f64;
    let b = table.cols.values().map(|&c| choose2(c)).sum::<u64>() as f64;
    let expected = a * b / choose2(table.n as u64) as f64;
    let max_index = 0.5 * (a + b);
    let denominator = max_index - expected;
    if denominator == 0.0 {
        return Ok(None);
    }
    Ok(Some((index - expected) / denominator))
}

#[derive(Debug, Clone)]
pub struct OracleResult<T> {
    pub labels: LabelVector,
    /// The `g` smallest Laplacian eigenvalues, ascending.
    pub eigenvalues: Array1<T>,
    pub sigma: T,
    /// Largest absolute Laplacian row sum before the eigensolve.
    pub max_row_sum: T,
}

/// Dense spectral clustering: heat-kernel affinity on raw distances, unnormalized Laplacian,
/// the `g` eigenvectors of smallest eigenvalue, then k-means on their rows. `sigma` defaults
/// to the median pairwise distance.
pub fn spectral_oracle<T: Scalar>(
    data: &DataMatrix<T>,
    g: usize,
    sigma: Option<T>,
    seed: u64,
) -> Result<OracleResult<T>, ClusteringError> {
    let n = data.n();
    if n > ORACLE_MAX_POINTS {
        return Err(ClusteringError::TooLarge {
            n,
            max: ORACLE_MAX_POINTS,
        });
    }
    if g == 0 || g > n {
        return Err(ClusteringError::KTooLarge { k: g, n });
    }
    let dist = pairwise_distances(data.points());
    let sigma = match sigma {
        Some(s) => s,
        None => {
            let upper: Vec<T> = (0..n)
                .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
                .map(|(i, j)| dist[[i, j]])
                .collect();
            select_sigma(&upper)?
        }
    };
    let affinity = heat_kernel_affinity(&dist, sigma)?;
    let w = affinity.values();
    let degree = w.sum_axis(Axis(1));
    let mut lap = -w.clone();
    for i in 0..n {
        lap[[i, i]] += degree[i];
    }
    let max_row_sum = lap
        .sum_axis(Axis(1))
        .iter()
        .map(|v| v.abs())
        .fold(T::zero(), T::max);

    let eig = symmetric_eigen(&lap, T::lit(EIGEN_TOLERANCE), EIGEN_MAX_SWEEPS);
    let embedding = eig.eigenvectors.slice(ndarray::s![.., ..g]).to_owned();
    let clusters = kmeans(&embedding, &KmeansConfig::new(g, seed))?;
    Ok(OracleResult {
        labels: clusters.labels,
        eigenvalues: eig.eigenvalues.slice(ndarray::s![..g]).to_owned(),
        sigma,
        max_row_sum,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::seeding::seeded_rng;
    use ndarray::array;
    use rand_distr::{Distribution, StandardNormal};

    fn enumerate(t: &[usize], l: &[usize]) -> PairConfusion {
        let mut c = PairConfusion { n11: 0, n00: 0, n10: 0, n01: 0 };
        for i in 0..t.len() {
            for j in i + 1..t.len() {
                match (t[i] == t[j], l[i] == l[j]) {
                    (true, true) => c.n11 += 1,
                    (false, false) => c.n00 += 1,
                    (true, false) => c.n10 += 1,
                    (false, true) => c.n01 += 1,
                }
            }
        }
        c
    }

    fn two_blobs(per: usize, seed: u64) -> (Array2<f64>, Vec<usize>) {
        let mut rng = seeded_rng(seed);
        let mut pts = Array2::zeros((2 * per, 2));
        let mut labels = Vec::new();
        for i in 0..2 * per {
            let cx = if i < per { 0.0 } else { 100.0 };
            let dx: f64 = StandardNormal.sample(&mut rng);
            let dy: f64 = StandardNormal.sample(&mut rng);
            pts[[i, 0]] = cx + 0.3 * dx;
            pts[[i, 1]] = 0.3 * dy;
            labels.push(usize::from(i >= per));
        }
        (pts, labels)
    }

    #[test]
    fn hand_confusions() {
        let c = pair_confusion(&[0, 0, 1, 1], &[0, 0, 1, 1]).unwrap();
        assert_eq!(c, PairConfusion { n11: 2, n00: 4, n10: 0, n01: 0 });
        let c = pair_confusion(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap();
        assert_eq!(c, PairConfusion { n11: 0, n00: 2, n10: 2, n01: 2 });
        assert_eq!(ari(&[0, 0, 1, 1], &[0, 1, 0, 1]).unwrap(), -0.5);
        assert_eq!(ari(&[0, 0, 1, 1], &[5, 5, 2, 2]).unwrap(), 1.0);
    }

    #[test]
    fn confusion_matches_enumeration() {
        let mut rng = seeded_rng(11);
        for _ in 0..100 {
            let n = rng.random_range(2..=12);
            let t: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
            let l: Vec<usize> = (0..n).map(|_| rng.random_range(0..4)).collect();
            let c = pair_confusion(&t, &l).unwrap();
            assert_eq!(c, enumerate(&t, &l));
            assert_eq!(c.total() as usize, n * (n - 1) / 2);
        }
    }

    #[test]
    fn ari_agrees_with_contingency_form() {
        let mut rng = seeded_rng(5);
        for _ in 0..200 {
            let n = rng.random_range(2..=30);
            let t: Vec<usize> = (0..n).map(|_| rng.random_range(0..3)).collect();
            let l: Vec<usize> = (0..n).map(|_| rng.random_range(0..5)).collect();
            match (ari(&t, &l), hubert_arabie_ari(&t, &l).unwrap()) {
                (Ok(a), Some(h)) => assert!((a - h).abs() < 1e-12, "{a} vs {h}"),
                (Err(ClusteringError::DegeneratePartition), None) => {}
                other => panic!("disagreement on definedness: {other:?}"),
            }
        }
    }

    #[test]
    fn degenerate_partitions_are_undefined() {
        assert!(matches!(ari(&[0, 0, 0], &[1, 1, 1]), Err(ClusteringError::DegeneratePartition)));
        assert!(matches!(ari(&[0, 1, 2], &[0, 1, 2]), Err(ClusteringError::DegeneratePartition)));
        assert_eq!(ari_score(&[0, 1, 2], &[0, 1, 2]).unwrap(), AriScore::Undefined);
        assert!(matches!(ari(&[0], &[0]), Err(ClusteringError::TooFewPoints(1))));
        assert!(matches!(
            ari(&[0, 1], &[0]),
            Err(ClusteringError::LengthMismatch { left: 2, right: 1 })
        ));
    }

    #[test]
    fn kmeans_single_cluster() {
        let y = array![[0.0f64, 1.0], [2.0, 3.0], [4.0, 5.0]];
        let r = kmeans(&y, &KmeansConfig::new(1, 0)).unwrap();
        assert_eq!(r.labels.as_slice(), &[0, 0, 0]);
        assert!((r.centers[[0, 0]] - 2.0).abs() < 1e-12);
    }

    #[test]
    fn kmeans_separates_distant_blobs() {
        let (y, truth) = two_blobs(25, 2);
        let r = kmeans(&y, &KmeansConfig::new(2, 9)).unwrap();
        assert_eq!(ari(&truth, r.labels.as_slice()).unwrap(), 1.0);
        let again = kmeans(&y, &KmeansConfig::new(2, 9)).unwrap();
        assert_eq!(r, again);
    }

    #[test]
    fn kmeans_rejects_large_k() {
        let y = array![[0.0f64], [1.0]];
        assert!(matches!(
            kmeans(&y, &KmeansConfig::new(3, 0)),
            Err(ClusteringError::KTooLarge { k: 3, n: 2 })
        ));
    }

    #[test]
    fn kmeans_with_duplicate_points() {
        let y = array![[1.0f64], [1.0], [1.0], [5.0]];
        let r = kmeans(&y, &KmeansConfig::new(3, 4)).unwrap();
        assert_eq!(r.labels.len(), 4);
        assert!(r.inertia.abs() < 1e-12);
    }

    #[test]
    fn oracle_recovers_two_blobs() {
        let (y, truth) = two_blobs(20, 7);
        let data = DataMatrix::new(y).unwrap();
        let r = spectral_oracle(&data, 2, None, 0).unwrap();
        assert_eq!(ari(&truth, r.labels.as_slice()).unwrap(), 1.0);
        assert!(r.max_row_sum < 1e-10);
        assert!(r.eigenvalues[0] >= -1e-8);
    }

    #[test]
    fn oracle_with_g_equal_n() {
        let data = DataMatrix::new(array![[0.0f64, 0.0], [1.0, 0.0], [0.0, 3.0]]).unwrap();
        let r = spectral_oracle(&data, 3, Some(1.0), 0).unwrap();
        assert_eq!(r.labels.class_count(), 3);
    }
}
