//! Spectral embedding network trained with the affinity-weighted spread loss under an
//! output orthogonality constraint.
//!
//! Training alternates two step types on different random batches. The orthogonalization
//! step recomputes a whitening map `√m · L⁻ᵀ` from the Cholesky factor of the batch Gram
//! matrix so that the batch outputs satisfy `YᵀY = m·I`. The gradient step keeps that map
//! fixed, applies it as the last layer and descends on
//! `(1/m²) Σ_ij a_ij ‖y_i − y_j‖²` with affinities from the frozen Siamese network.

use ndarray::{Array2, Axis};
use rand::seq::{index, SliceRandom};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::dataset::DataMatrix;
use crate::linalg::{cholesky, invert_lower};
use crate::neuralnet::{Activation, Checkpoint, Mlp, NetError, OptimizerState};
use crate::scalar::Scalar;
use crate::seeding::{stream_rng, StageRng, Stream};
use crate::siamese::{AffinityBatch, AffinityModel, SiameseError};

/// Pivots below this fraction of the largest Gram diagonal count as a failed factorization.
const PIVOT_TOLERANCE: f64 = 1e-12;
const MIN_ABS_DETERMINANT: f64 = 1e-30;

#[derive(Debug, Error)]
pub enum SpectralError {
    #[error("batch of {m} points cannot be orthogonalized in {g} dimensions")]
    BatchTooSmall { m: usize, g: usize },
    #[error("Gram matrix is singular even after jitter")]
    SingularGram,
    #[error("invalid spectral configuration: {0}")]
    BadConfig(String),
    #[error("shape mismatch: {0}")]
    ShapeMismatch(String),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Siamese(#[from] SiameseError),
}

/// Right-multiplied whitening transform for raw network outputs.
#[derive(Debug, Clone, PartialEq)]
pub struct OrthoMap<T> {
    transform: Array2<T>,
    source_batch_size: usize,
}

impl<T: Scalar> OrthoMap<T> {
    pub fn transform(&self) -> &Array2<T> {
        &self.transform
    }

    pub fn source_batch_size(&self) -> usize {
        self.source_batch_size
    }

    pub fn dim(&self) -> usize {
        self.transform.nrows()
    }

    /// Determinant; the transform is upper triangular.
    pub fn determinant(&self) -> T {
        (0..self.dim())
            .map(|i| self.transform[[i, i]])
            .fold(T::one(), |acc, d| acc * d)
    }

    pub fn apply(&self, raw: &Array2<T>) -> Array2<T> {
        raw.dot(&self.transform)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SpectralConfig {
    pub batch_size: usize,
    /// Orthogonalization plus gradient steps; must be even.
    pub total_steps: usize,
    pub embedding_dim: usize,
    pub seed: u64,
    pub hidden_layers: Vec<usize>,
    pub learning_rate: f64,
    pub activation: Activation,
    /// Relative diagonal jitter used once when the Gram factorization fails.
    pub jitter: f64,
}

impl Default for SpectralConfig {
    fn default() -> Self {
        Self {
            batch_size: 64,
            total_steps: 1024,
            embedding_dim: 2,
            seed: 0,
            hidden_layers: vec![128, 128],
            learning_rate: 1e-3,
            activation: Activation::Relu,
            jitter: 1e-6,
        }
    }
}

impl SpectralConfig {
    pub fn validate(&self) -> Result<(), SpectralError> {
        if self.embedding_dim == 0 {
            return Err(SpectralError::BadConfig("embedding dimension must be positive".into()));
        }
        if self.batch_size < self.embedding_dim {
            return Err(SpectralError::BatchTooSmall {
                m: self.batch_size,
                g: self.embedding_dim,
            });
        }
        if self.total_steps == 0 || !self.total_steps.is_multiple_of(2) {
            return Err(SpectralError::BadConfig(format!(
                "total steps must be positive and even, got {}",
                self.total_steps
            )));
        }
        if !(self.jitter >= 0.0) || !(self.learning_rate > 0.0) {
            return Err(SpectralError::BadConfig("jitter ≥ 0 and learning rate > 0 required".into()));
        }
        Ok(())
    }

    pub fn architecture(&self, dim: usize) -> Vec<usize> {
        std::iter::once(dim)
            .chain(self.hidden_layers.iter().copied())
            .chain(std::iter::once(self.embedding_dim))
            .collect()
    }
}

/// `‖YᵀY − m·I‖_F`.
pub fn orthogonality_residual<T: Scalar>(y: &Array2<T>) -> T {
    let m = T::from_count(y.nrows());
    let gram = y.t().dot(y);
    gram.indexed_iter()
        .map(|((r, c), &v)| {
            let d = if r == c { v - m } else { v };
            d * d
        })
        .sum::<T>()
        .sqrt()
}

/// Whitens `raw` (m × g) so that `YᵀY = m·I`.
pub fn orthogonalize<T: Scalar>(raw: &Array2<T>, jitter: T) -> Result<(Array2<T>, OrthoMap<T>), SpectralError> {
    let (m, g) = raw.dim();
    if m < g || g == 0 {
        return Err(SpectralError::BatchTooSmall { m, g });
    }
    let mut gram = raw.t().dot(raw);
    let tol = T::lit(PIVOT_TOLERANCE);
    let l = match cholesky(&gram, tol) {
        Some(l) => l,
        None => {
            let trace = (0..g).map(|i| gram[[i, i]]).sum::<T>();
            let bump = jitter * trace / T::from_count(g);
            for i in 0..g {
                gram[[i, i]] += bump;
            }
            cholesky(&gram, tol).ok_or(SpectralError::SingularGram)?
        }
    };
    let scale = T::from_count(m).sqrt();
    let transform = invert_lower(&l).t().mapv(|v| v * scale);
    let map = OrthoMap {
        transform,
        source_batch_size: m,
    };
    let det = map.determinant();
    if !(det.abs() > T::lit(MIN_ABS_DETERMINANT)) || !det.is_finite() {
        return Err(SpectralError::SingularGram);
    }
    Ok((map.apply(raw), map))
}

fn check_loss_shapes<T: Scalar>(a: &AffinityBatch<T>, y: &Array2<T>) -> Result<(), SpectralError> {
    if a.size() != y.nrows() {
        return Err(SpectralError::ShapeMismatch(format!(
            "affinity {}x{} vs {} embedding rows",
            a.size(),
            a.size(),
            y.nrows()
        )));
    }
    Ok(())
}

/// `(1/m²) Σ_ij a_ij ‖y_i − y_j‖²` by the explicit double sum, with its gradient in `Y`.
pub fn spectral_loss<T: Scalar>(a: &AffinityBatch<T>, y: &Array2<T>) -> Result<(T, Array2<T>), SpectralError> {
    check_loss_shapes(a, y)?;
    let m = y.nrows();
    let w = a.values();
    let inv_m2 = T::one() / T::from_count(m * m);
    let mut loss = T::zero();
    let mut grad = Array2::<T>::zeros(y.raw_dim());
    let two = T::lit(2.0);
    for i in 0..m {
        for j in 0..m {
            let aij = w[[i, j]];
            if aij == T::zero() {
                continue;
            }
            let mut sq = T::zero();
            for k in 0..y.ncols() {
                let d = y[[i, k]] - y[[j, k]];
                sq += d * d;
                let g = two * aij * d * inv_m2;
                grad[[i, k]] += g;
                grad[[j, k]] -= g;
            }
            loss += aij * sq;
        }
    }
    Ok((loss * inv_m2, grad))
}

/// The same loss as `(2/m²)·tr(Yᵀ(D − A)Y)` for symmetric `A`.
pub fn spectral_loss_trace<T: Scalar>(a: &AffinityBatch<T>, y: &Array2<T>) -> Result<T, SpectralError> {
    check_loss_shapes(a, y)?;
    let m = y.nrows();
    let w = a.values();
    let degree = w.sum_axis(Axis(1));
    let mut lap = -w.clone();
    for i in 0..m {
        lap[[i, i]] += degree[i];
    }
    let form = y.t().dot(&lap.dot(y));
    let trace = (0..y.ncols()).map(|k| form[[k, k]]).sum::<T>();
    Ok(T::lit(2.0) * trace / T::from_count(m * m))
}

/// Draws batches uniformly without replacement. When `n ≥ 2m` the two batches of one
/// alternation come from the same shuffled permutation and are disjoint.
struct BatchSampler {
    n: usize,
    m: usize,
    perm: Vec<usize>,
    cursor: usize,
    rng: StageRng,
}

impl BatchSampler {
    fn new(n: usize, m: usize, rng: StageRng) -> Self {
        let mut s = Self {
            n,
            m,
            perm: (0..n).collect(),
            cursor: n,
            rng,
        };
        s.reshuffle_if_needed(2 * m);
        s
    }

    fn reshuffle_if_needed(&mut self, need: usize) {
        if self.cursor + need > self.n {
            self.perm.shuffle(&mut self.rng);
            self.cursor = 0;
        }
    }

    fn take(&mut self) -> Vec<usize> {
        let b = self.perm[self.cursor..self.cursor + self.m].to_vec();
        self.cursor += self.m;
        b
    }

    fn pair(&mut self) -> (Vec<usize>, Vec<usize>) {
        if self.n >= 2 * self.m {
            self.reshuffle_if_needed(2 * self.m);
            let a = self.take();
            (a, self.take())
        } else {
            (self.single(), self.single())
        }
    }

    fn single(&mut self) -> Vec<usize> {
        index::sample(&mut self.rng, self.n, self.m).into_vec()
    }
}

/// A trained embedding network together with its final whitening map.
#[derive(Debug, Clone, PartialEq)]
pub struct SpectralModel<T> {
    pub network: Mlp<T>,
    pub ortho: OrthoMap<T>,
}

#[derive(Debug, Clone)]
pub struct SpectralTraining<T> {
    pub model: SpectralModel<T>,
    /// Loss of every gradient step.
    pub loss_history: Vec<T>,
    /// `‖YᵀY − mI‖_F / m` after every orthogonalization step, including the final one.
    pub ortho_residuals: Vec<T>,
    /// Batch the final map was computed on.
    pub final_batch: Vec<usize>,
}

pub fn train_spectralnet<T: Scalar>(
    data: &DataMatrix<T>,
    affinity: &AffinityModel<T>,
    config: &SpectralConfig,
) -> Result<SpectralTraining<T>, SpectralError> {
    config.validate()?;
    let m = config.batch_size.min(data.n());
    if m < config.embedding_dim {
        return Err(SpectralError::BatchTooSmall {
            m,
            g: config.embedding_dim,
        });
    }
    let mut init_rng = stream_rng(config.seed, Stream::SpectralInit);
    let mut net = Mlp::init_with_rng(&config.architecture(data.dim()), config.activation, &mut init_rng)?;
    let mut opt = OptimizerState::adam(&net, T::lit(config.learning_rate));
    let mut sampler = BatchSampler::new(data.n(), m, stream_rng(config.seed, Stream::SpectralBatches));
    let jitter = T::lit(config.jitter);
    let m_t = T::from_count(m);

    let mut losses = Vec::with_capacity(config.total_steps / 2);
    let mut residuals = Vec::with_capacity(config.total_steps / 2 + 1);
    for _ in 0..config.total_steps / 2 {
        let (ortho_batch, grad_batch) = sampler.pair();

        let raw = net.predict(&data.gather(&ortho_batch))?;
        let (y, map) = orthogonalize(&raw, jitter)?;
        residuals.push(orthogonality_residual(&y) / m_t);

        let points = data.gather(&grad_batch);
        let a = affinity.batch_affinity(&points)?;
        let (raw, cache) = net.forward(&points)?;
        let y = map.apply(&raw);
        let (loss, grad_y) = spectral_loss(&a, &y)?;
        let grad_raw = grad_y.dot(&map.transform().t());
        let (grads, _) = net.backward(&cache, &grad_raw)?;
        net.apply_update(&grads, &mut opt)?;
        losses.push(loss);
    }

    let (final_batch, _) = sampler.pair();
    let raw = net.predict(&data.gather(&final_batch))?;
    let (y, ortho) = orthogonalize(&raw, jitter)?;
    residuals.push(orthogonality_residual(&y) / m_t);

    Ok(SpectralTraining {
        model: SpectralModel { network: net, ortho },
        loss_history: losses,
        ortho_residuals: residuals,
        final_batch,
    })
}

impl<T: Scalar> SpectralModel<T> {
    /// `forward(X) · map` for every point.
    pub fn embed(&self, data: &DataMatrix<T>) -> Result<Array2<T>, SpectralError> {
        if data.dim() != self.network.input_dim() {
            return Err(SpectralError::ShapeMismatch(format!(
                "model expects {} features, data has {}",
                self.network.input_dim(),
                data.dim()
            )));
        }
        Ok(self.ortho.apply(&self.network.predict(data.points())?))
    }

    pub fn to_json(&self, config: &SpectralConfig) -> Result<String, SpectralError> {
        let record = SpectralRecord {
            network: self.network.to_checkpoint(),
            ortho_dim: self.ortho.dim(),
            ortho_batch_size: self.ortho.source_batch_size,
            ortho: self.ortho.transform.iter().copied().collect(),
            config: config.clone(),
        };
        serde_json::to_string(&record).map_err(|e| NetError::from(e).into())
    }

    pub fn from_json(text: &str) -> Result<(Self, SpectralConfig), SpectralError> {
        let r: SpectralRecord<T> = serde_json::from_str(text).map_err(NetError::from)?;
        let transform = Array2::from_shape_vec((r.ortho_dim, r.ortho_dim), r.ortho)
            .map_err(|e| SpectralError::ShapeMismatch(e.to_string()))?;
        let network = Mlp::from_checkpoint(&r.network)?;
        if network.output_dim() != r.ortho_dim {
            return Err(SpectralError::ShapeMismatch("ortho map vs network output".into()));
        }
        Ok((
            Self {
                network,
                ortho: OrthoMap {
                    transform,
                    source_batch_size: r.ortho_batch_size,
                },
            },
            r.config,
        ))
    }
}

/// Spectral checkpoint: network, whitening map and the training configuration.
#[derive(Debug, Serialize, Deserialize)]
#[serde(bound = "T: Scalar")]
struct SpectralRecord<T> {
    network: Checkpoint<T>,
    ortho_dim: usize,
    ortho_batch_size: usize,
    ortho: Vec<T>,
    config: SpectralConfig,
}
