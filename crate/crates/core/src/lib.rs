//! Deep spectral clustering with random-projection-tree pair mining.
//!
//! The pipeline builds positive and negative training pairs (from a k-nearest-neighbour
//! graph or from the leaves of a random projection tree), trains a Siamese network on them
//! to learn an affinity, trains a spectral embedding network under an orthogonality
//! constraint against that affinity, and assigns clusters by k-means in the embedding.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the `*64` and `*32`
//! aliases below fix the precision.

pub mod clustering;
pub mod dataset;
pub mod linalg;
pub mod neuralnet;
pub mod pairing;
pub mod rptree;
pub mod scalar;
pub mod seeding;
pub mod siamese;
pub mod spectralnet;

use thiserror::Error;

pub use clustering::{
    ari, ari_score, hubert_arabie_ari, kmeans, pair_confusion, spectral_oracle, AriScore, ClusteringError,
    KmeansConfig, KmeansResult, OracleResult, PairConfusion,
};
pub use dataset::{
    generate_synthetic, load_csv, standardize, stratified_subsample, CsvOptions, DataMatrix, DatasetError,
    LabelColumn, LabelVector, SyntheticKind, SyntheticSpec,
};
pub use neuralnet::{Activation, Mlp, NetError};
pub use pairing::{count_pairs, knn_pairs, rptree_pairs, PairCounts, PairSet, PairSource, PairingError};
pub use rptree::{build_tree, ProjectionStrategy, RpTree, RpTreeConfig, RpTreeError};
pub use scalar::Scalar;
pub use seeding::{stream_rng, Stream};
pub use siamese::{train_siamese, AffinityModel, SiameseConfig, SiameseError};
pub use spectralnet::{train_spectralnet, SpectralConfig, SpectralError, SpectralModel};

pub type DataMatrix64 = DataMatrix<f64>;
pub type DataMatrix32 = DataMatrix<f32>;
pub type RpTree64 = RpTree<f64>;
pub type RpTree32 = RpTree<f32>;
pub type Mlp64 = Mlp<f64>;
pub type Mlp32 = Mlp<f32>;
pub type AffinityModel64 = AffinityModel<f64>;
pub type AffinityModel32 = AffinityModel<f32>;
pub type SpectralModel64 = SpectralModel<f64>;
pub type SpectralModel32 = SpectralModel<f32>;

/// Any failure raised by the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Dataset(#[from] DatasetError),
    #[error(transparent)]
    RpTree(#[from] RpTreeError),
    #[error(transparent)]
    Pairing(#[from] PairingError),
    #[error(transparent)]
    Net(#[from] NetError),
    #[error(transparent)]
    Siamese(#[from] SiameseError),
    #[error(transparent)]
    Spectral(#[from] SpectralError),
    #[error(transparent)]
    Clustering(#[from] ClusteringError),
}
