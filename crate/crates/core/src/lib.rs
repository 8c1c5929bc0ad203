//! Mutual Information Divergence: Gaussian cross-mutual-information between
//! paired embeddings, its point-wise form, the reference baselines and the
//! evaluation harness.

pub mod baselines;
pub mod error;
pub mod evalstats;
pub mod gaussmi;
pub mod harness;
pub mod matstat;
pub mod store;

pub use error::{Error, Result};
pub use gaussmi::{
    fit_reference, fit_reference_matrices, mid, mid_via_kl, mutual_information, pmi,
    EpsilonPreset, GaussianJointModel, PairBatch, ScoreReport, DEFAULT_EPSILON, FOIL_EPSILON,
};
pub use matstat::{Matrix, RegularizedGaussian};
pub use store::{EmbeddingSet, Manifest, Modality};
