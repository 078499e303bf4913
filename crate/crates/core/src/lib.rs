//! Multimodal recommendation benchmarking: interaction ingestion and
//! filtering, train/validation/test splitting, binary feature storage,
//! modality fusion, BPR-trained recommenders, top-K evaluation and an
//! experiment runner.
//!
//! Numeric code is generic over [`Scalar`] (`f32` or `f64`); the aliases
//! below name the common instantiations.

pub mod data;
pub mod error;
pub mod eval;
pub mod features;
pub mod fusion;
pub mod ingest;
pub mod linalg;
pub mod models;
pub mod rng;
pub mod runner;
pub mod scalar;
pub mod split;
pub mod synthetic;

pub use data::{FeatureMatrix, IndexMap, InteractionMatrix, InteractionSet, ItemMetadata, Modality, SplitBundle};
pub use error::{Error, Result};
pub use eval::{evaluate, metrics_at_k, rank_topk, MetricReport, Target};
pub use models::{BprHyperParams, ModelKind, Recommender};
pub use scalar::Scalar;

pub type Matrix64 = linalg::Matrix<f64>;
pub type Matrix32 = linalg::Matrix<f32>;
pub type MfParams64 = models::MfParams<f64>;
pub type MfParams32 = models::MfParams<f32>;
pub type MmProjections64 = models::MmProjections<f64>;
pub type ItemKnn64 = models::ItemKnn<f64>;
pub type VbprScorer64 = models::VbprScorer<f64>;
pub type TrainedModel64 = models::TrainedModel<f64>;
pub type TrainedModel32 = models::TrainedModel<f32>;
