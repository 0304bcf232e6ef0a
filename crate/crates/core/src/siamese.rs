//! Siamese twin training with the contrastive loss, and heat-kernel affinities from the
//! learned distances.

use ndarray::{Array1, Array2, ArrayView1};
use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DataMatrix;
use crate::neuralnet::{Activation, Checkpoint, Mlp, NetError, OptimizerState};
use crate::pairing::{Pair, PairSet, PairSource};
use crate::scalar::Scalar;
use crate::seeding::{stream_rng, Stream};

/// Floor on the embedding distance when differentiating the negative-pair hinge.
pub const DISTANCE_FLOOR: f64 = 1e-12;

#[derive(Debug, Error)]
pub enum SiameseError {
    #[error("pair set is empty")]
    EmptyPairSet,
    #[error("pair set has no {0} pairs")]
    MissingPolarity(&'static str),
    #[error("point index {index} out of range for {n} points")]
    IndexOutOfRange { index: usize, n: usize },
    #[error("no distances supplied")]
    NoDistances,
    #[error("all distances are zero")]
    AllZeroDistances,
    #[error("sigma must be positive and finite, got {0}")]
    BadSigma(f64),
    #[error("invalid siamese configuration: {0}")]
    BadConfig(String),
    #[error("affinity input must be a square symmetric matrix with zero diagonal")]
    BadDistances,
    #[error(transparent)]
    Net(#[from] NetError),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SiameseConfig {
    /// Contrastive margin `c`.
    pub margin: f64,
    pub epochs: usize,
    /// Pairs per mini-batch, half positive and half negative.
    pub batch_size: usize,
    pub seed: u64,
    pub hidden_layers: Vec<usize>,
    pub output_dim: usize,
    pub learning_rate: f64,
    pub activation: Activation,
    /// Optional cap on mini-batches per epoch.
    pub max_batches_per_epoch: Option<usize>,
}

impl Default for SiameseConfig {
    fn default() -> Self {
        Self {
            margin: 1.0,
            epochs: 10,
            batch_size: 128,
            seed: 0,
            hidden_layers: vec![128, 128],
            output_dim: 32,
            learning_rate: 1e-3,
            activation: Activation::Relu,
            max_batches_per_epoch: None,
        }
    }
}

impl SiameseConfig {
    pub fn validate(&self) -> Result<(), SiameseError> {
        if self.batch_size < 2 {
            return Err(SiameseError::BadConfig("batch size must be at least 2".into()));
        }
        if !(self.margin > 0.0) {
            return Err(SiameseError::BadConfig("margin must be positive".into()));
        }
        if self.epochs == 0 {
            return Err(SiameseError::BadConfig("need at least one epoch".into()));
        }
        if !(self.learning_rate > 0.0) {
            return Err(SiameseError::BadConfig("learning rate must be positive".into()));
        }
        Ok(())
    }

    /// Layer widths for input dimension `dim`.
    pub fn architecture(&self, dim: usize) -> Vec<usize> {
        std::iter::once(dim)
            .chain(self.hidden_layers.iter().copied())
            .chain(std::iter::once(self.output_dim))
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ContrastiveLoss<T> {
    pub loss: T,
    pub grad_z1: Array1<T>,
    pub grad_z2: Array1<T>,
}

/// `‖z₁ − z₂‖²` for positive pairs, `max(c − ‖z₁ − z₂‖, 0)` for negative pairs.
pub fn contrastive_loss<T: Scalar>(
    z1: ArrayView1<'_, T>,
    z2: ArrayView1<'_, T>,
    is_positive: bool,
    margin: T,
) -> Result<ContrastiveLoss<T>, SiameseError> {
    if z1.len() != z2.len() {
        return Err(NetError::ShapeMismatch {
            expected: format!("{}", z1.len()),
            found: format!("{}", z2.len()),
        }
        .into());
    }
    let diff = &z1 - &z2;
    let sq = diff.dot(&diff);
    if is_positive {
        let two = T::lit(2.0);
        return Ok(ContrastiveLoss {
            loss: sq,
            grad_z1: diff.mapv(|d| two * d),
            grad_z2: diff.mapv(|d| -two * d),
        });
    }
    let dist = sq.sqrt();
    if dist >= margin {
        return Ok(ContrastiveLoss {
            loss: T::zero(),
            grad_z1: Array1::zeros(diff.len()),
            grad_z2: Array1::zeros(diff.len()),
        });
    }
    let guarded = dist.max(T::lit(DISTANCE_FLOOR));
    Ok(ContrastiveLoss {
        loss: margin - dist,
        grad_z1: diff.mapv(|d| -d / guarded),
        grad_z2: diff.mapv(|d| d / guarded),
    })
}

#[derive(Debug, Clone)]
pub struct SiameseTraining<T> {
    pub network: Mlp<T>,
    /// Mean mini-batch loss per epoch.
    pub loss_history: Vec<T>,
}

fn check_pairs(pairs: &[Pair], n: usize) -> Result<(), SiameseError> {
    match pairs.iter().flat_map(|&(i, j)| [i, j]).find(|&i| i >= n) {
        Some(index) => Err(SiameseError::IndexOutOfRange { index, n }),
        None => Ok(()),
    }
}

/// Trains one shared-weight network on balanced mini-batches. An epoch walks the larger
/// polarity once in shuffled order; each batch is filled with as many pairs of the smaller
/// polarity, drawn with replacement.
pub fn train_siamese<T: Scalar>(
    data: &DataMatrix<T>,
    pairs: &PairSet,
    config: &SiameseConfig,
) -> Result<SiameseTraining<T>, SiameseError> {
    config.validate()?;
    if pairs.positives.is_empty() && pairs.negatives.is_empty() {
        return Err(SiameseError::EmptyPairSet);
    }
    if pairs.positives.is_empty() {
        return Err(SiameseError::MissingPolarity("positive"));
    }
    if pairs.negatives.is_empty() {
        return Err(SiameseError::MissingPolarity("negative"));
    }
    check_pairs(&pairs.positives, data.n())?;
    check_pairs(&pairs.negatives, data.n())?;

    let mut init_rng = stream_rng(config.seed, Stream::SiameseInit);
    let mut net = Mlp::init_with_rng(&config.architecture(data.dim()), config.activation, &mut init_rng)?;
    let mut opt = OptimizerState::adam(&net, T::lit(config.learning_rate));
    let mut rng = stream_rng(config.seed, Stream::SiameseBatches);
    let margin = T::lit(config.margin);

    let half = (config.batch_size / 2).max(1);
    let positives_major = pairs.positives.len() >= pairs.negatives.len();
    let (major, minor) = if positives_major {
        (&pairs.positives, &pairs.negatives)
    } else {
        (&pairs.negatives, &pairs.positives)
    };
    let mut batches = major.len().div_ceil(half);
    if let Some(cap) = config.max_batches_per_epoch {
        batches = batches.min(cap.max(1));
    }

    let mut order: Vec<usize> = (0..major.len()).collect();
    let mut history = Vec::with_capacity(config.epochs);
    for _ in 0..config.epochs {
        order.shuffle(&mut rng);
        let mut epoch_loss = T::zero();
        for b in 0..batches {
            let chunk = &order[b * half..((b + 1) * half).min(order.len())];
            let mut batch: Vec<(Pair, bool)> = Vec::with_capacity(2 * chunk.len());
            for &i in chunk {
                batch.push((major[i], positives_major));
            }
            for _ in 0..chunk.len() {
                batch.push((minor[rng.random_range(0..minor.len())], !positives_major));
            }
            epoch_loss += siamese_step(&mut net, &mut opt, data, &batch, margin)?;
        }
        history.push(epoch_loss / T::from_count(batches));
    }
    Ok(SiameseTraining {
        network: net,
        loss_history: history,
    })
}

fn siamese_step<T: Scalar>(
    net: &mut Mlp<T>,
    opt: &mut OptimizerState<T>,
    data: &DataMatrix<T>,
    batch: &[(Pair, bool)],
    margin: T,
) -> Result<T, SiameseError> {
    let left: Vec<usize> = batch.iter().map(|((i, _), _)| *i).collect();
    let right: Vec<usize> = batch.iter().map(|((_, j), _)| *j).collect();
    let (z1, cache1) = net.forward(&data.gather(&left))?;
    let (z2, cache2) = net.forward(&data.gather(&right))?;
    let scale = T::one() / T::from_count(batch.len());
    let mut g1 = Array2::zeros(z1.raw_dim());
    let mut g2 = Array2::zeros(z2.raw_dim());
    let mut total = T::zero();
    for (r, (_, positive)) in batch.iter().enumerate() {
        let l = contrastive_loss(z1.row(r), z2.row(r), *positive, margin)?;
        total += l.loss;
        g1.row_mut(r).assign(&l.grad_z1.mapv(|v| v * scale));
        g2.row_mut(r).assign(&l.grad_z2.mapv(|v| v * scale));
    }
    let (mut grads, _) = net.backward(&cache1, &g1)?;
    let (grads2, _) = net.backward(&cache2, &g2)?;
    grads.add_assign(&grads2);
    net.apply_update(&grads, opt)?;
    Ok(total * scale)
}

/// `‖N(x_i) − N(x_j)‖` for every requested pair.
pub fn siamese_distances<T: Scalar>(
    net: &Mlp<T>,
    data: &DataMatrix<T>,
    pairs: &[Pair],
) -> Result<Vec<T>, SiameseError> {
    check_pairs(pairs, data.n())?;
    let z = net.predict(data.points())?;
    Ok(pairs
        .iter()
        .map(|&(i, j)| euclidean(z.row(i), z.row(j)))
        .collect())
}

pub(crate) fn euclidean<T: Scalar>(a: ArrayView1<'_, T>, b: ArrayView1<'_, T>) -> T {
    a.iter()
        .zip(b.iter())
        .map(|(&x, &y)| (x - y) * (x - y))
        .sum::<T>()
        .sqrt()
}

/// Pairwise Euclidean distances between the rows of `points`. Exactly symmetric with a
/// zero diagonal.
pub fn pairwise_distances<T: Scalar>(points: &Array2<T>) -> Array2<T> {
    let m = points.nrows();
    let mut d = Array2::zeros((m, m));
    for i in 0..m {
        for j in i + 1..m {
            let v = euclidean(points.row(i), points.row(j));
            d[[i, j]] = v;
            d[[j, i]] = v;
        }
    }
    d
}

/// Median of `distances` (mean of the middle two for even counts); the smallest nonzero
/// distance when the median is zero.
pub fn select_sigma<T: Scalar>(distances: &[T]) -> Result<T, SiameseError> {
    if distances.is_empty() {
        return Err(SiameseError::NoDistances);
    }
    let mut sorted = distances.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("distances are finite"));
    let mid = sorted.len() / 2;
    let median = if sorted.len().is_multiple_of(2) {
        (sorted[mid - 1] + sorted[mid]) / T::lit(2.0)
    } else {
        sorted[mid]
    };
    if median > T::zero() {
        return Ok(median);
    }
    sorted
        .into_iter()
        .find(|&d| d > T::zero())
        .ok_or(SiameseError::AllZeroDistances)
}

/// Symmetric affinities in `[0, 1]` with a zero diagonal.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityBatch<T> {
    values: Array2<T>,
}

impl<T: Scalar> AffinityBatch<T> {
    /// Validates symmetry (1e-12), the zero diagonal and the `[0, 1]` range.
    pub fn new(values: Array2<T>) -> Result<Self, SiameseError> {
        let (r, c) = values.dim();
        if r != c {
            return Err(SiameseError::BadDistances);
        }
        let tol = T::lit(1e-12);
        for i in 0..r {
            if values[[i, i]] != T::zero() {
                return Err(SiameseError::BadDistances);
            }
            for j in 0..r {
                let v = values[[i, j]];
                if !(v >= T::zero() && v <= T::one()) || (v - values[[j, i]]).abs() > tol {
                    return Err(SiameseError::BadDistances);
                }
            }
        }
        Ok(Self { values })
    }

    pub fn values(&self) -> &Array2<T> {
        &self.values
    }

    pub fn size(&self) -> usize {
        self.values.nrows()
    }
}

/// `a_ij = exp(−d_ij² / 2σ²)` off the diagonal, `0` on it.
pub fn heat_kernel_affinity<T: Scalar>(distances: &Array2<T>, sigma: T) -> Result<AffinityBatch<T>, SiameseError> {
    if !(sigma > T::zero()) || !sigma.is_finite() {
        return Err(SiameseError::BadSigma(sigma.as_f64()));
    }
    let (r, c) = distances.dim();
    if r != c {
        return Err(SiameseError::BadDistances);
    }
    let denom = T::lit(2.0) * sigma * sigma;
    let mut values = distances.mapv(|d| (-(d * d) / denom).exp());
    for i in 0..r {
        values[[i, i]] = T::zero();
    }
    AffinityBatch::new(values)
}

/// A frozen Siamese network plus its kernel bandwidth.
#[derive(Debug, Clone, PartialEq)]
pub struct AffinityModel<T> {
    pub network: Mlp<T>,
    pub sigma: T,
    pub source: PairSource,
}

impl<T: Scalar> AffinityModel<T> {
    /// Freezes a trained network, picking `σ` as the median learned distance over the
    /// positive training pairs.
    pub fn from_training(
        network: Mlp<T>,
        data: &DataMatrix<T>,
        pairs: &PairSet,
    ) -> Result<Self, SiameseError> {
        let distances = siamese_distances(&network, data, &pairs.positives)?;
        let sigma = select_sigma(&distances)?;
        Ok(Self {
            network,
            sigma,
            source: pairs.source,
        })
    }

    /// Dense heat-kernel affinities between the rows of `points`.
    pub fn batch_affinity(&self, points: &Array2<T>) -> Result<AffinityBatch<T>, SiameseError> {
        let z = self.network.predict(points)?;
        heat_kernel_affinity(&pairwise_distances(&z), self.sigma)
    }

    pub fn to_json(&self) -> Result<String, SiameseError> {
        let record = AffinityRecord {
            network: self.network.to_checkpoint(),
            sigma: self.sigma,
            source: self.source,
        };
        serde_json::to_string(&record).map_err(|e| NetError::from(e).into())
    }

    pub fn from_json(text: &str) -> Result<Self, SiameseError> {
        let record: AffinityRecord<T> = serde_json::from_str(text).map_err(NetError::from)?;
        if !(record.sigma > T::zero()) {
            return Err(SiameseError::BadSigma(record.sigma.as_f64()));
        }
        Ok(Self {
            network: Mlp::from_checkpoint(&record.network)?,
            sigma: record.sigma,
            source: record.source,
        })
    }
}

/// Siamese checkpoint with its `σ` and pair-source sidecar.
#[derive(Debug, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct AffinityRecord<T> {
    network: Checkpoint<T>,
    sigma: T,
    source: PairSource,
}

#[cfg(test)]
mod tests {
    use super::*;
    use ndarray::array;

    #[test]
    fn contrastive_hand_values() {
        let z = array![0.3, -0.2];
        let pos = contrastive_loss(z.view(), z.view(), true, 1.0).unwrap();
        assert_eq!(pos.loss, 0.0);

        let a = array![0.0f64, 0.0];
        let b = array![0.4, 0.0];
        let neg = contrastive_loss(a.view(), b.view(), false, 1.0).unwrap();
        assert!((neg.loss - 0.6).abs() < 1e-15);

        let far = array![1.5, 0.0];
        assert_eq!(contrastive_loss(a.view(), far.view(), false, 1.0).unwrap().loss, 0.0);

        // Zero distance on a negative pair costs exactly the margin, with zero gradient.
        let at_zero = contrastive_loss(a.view(), a.view(), false, 0.7).unwrap();
        assert_eq!(at_zero.loss, 0.7);
        assert!(at_zero.grad_z1.iter().all(|&g| g == 0.0));
    }

    #[test]
    fn contrastive_swap_invariance() {
        let a = array![0.1, 0.25, -0.7];
        let b = array![0.4, -0.05, -0.2];
        for positive in [true, false] {
            let ab = contrastive_loss(a.view(), b.view(), positive, 1.0).unwrap();
            let ba = contrastive_loss(b.view(), a.view(), positive, 1.0).unwrap();
            assert_eq!(ab.loss, ba.loss);
            assert_eq!(ab.grad_z1, ba.grad_z2);
        }
    }

    #[test]
    fn contrastive_shape_mismatch() {
        let a = array![0.1, 0.2];
        let b = array![0.1];
        assert!(contrastive_loss(a.view(), b.view(), true, 1.0).is_err());
    }

    #[test]
    fn sigma_selection() {
        assert_eq!(select_sigma(&[1.0, 2.0, 3.0]).unwrap(), 2.0);
        assert_eq!(select_sigma(&[3.0, 1.0, 4.0, 2.0]).unwrap(), 2.5);
        assert_eq!(select_sigma(&[0.7; 5]).unwrap(), 0.7);
        assert_eq!(select_sigma(&[0.0, 0.0, 0.0, 0.5]).unwrap(), 0.5);
        assert!(matches!(select_sigma(&[0.0f64; 3]), Err(SiameseError::AllZeroDistances)));
        assert!(matches!(select_sigma::<f64>(&[]), Err(SiameseError::NoDistances)));
    }

    #[test]
    fn heat_kernel_values() {
        let sigma = 0.8f64;
        let d = array![
            [0.0, 0.0, sigma * 2f64.sqrt()],
            [0.0, 0.0, 1.0],
            [sigma * 2f64.sqrt(), 1.0, 0.0]
        ];
        let a = heat_kernel_affinity(&d, sigma).unwrap();
        let v = a.values();
        assert_eq!(v[[0, 1]], 1.0);
        assert_eq!(v[[0, 0]], 0.0);
        assert!((v[[0, 2]] - (-1.0f64).exp()).abs() < 1e-12);
        assert!((v[[0, 2]] - 0.367879).abs() < 1e-6);
        assert!(matches!(heat_kernel_affinity(&d, 0.0), Err(SiameseError::BadSigma(_))));
    }

    #[test]
    fn heat_kernel_is_monotone() {
        // Points on a line: row 0 of the affinity must strictly decrease with distance.
        let line = Array2::from_shape_fn((40, 1), |(i, _)| i as f64 * 0.1);
        let a = heat_kernel_affinity(&pairwise_distances(&line), 1.3).unwrap();
        let row: Vec<f64> = a.values().row(0).iter().skip(1).copied().collect();
        for w in row.windows(2) {
            assert!(w[0] > w[1]);
        }
        assert!(a.values().iter().all(|&v| (0.0..=1.0).contains(&v)));
        assert_eq!(a.values(), &a.values().t().to_owned());
    }
}
