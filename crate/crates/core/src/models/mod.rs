//! Recommenders: item-based kNN and the BPR-trained latent factor family.

pub mod bpr;
pub mod graph;
pub mod knn;
pub mod lightgcn;
pub mod mf;
pub mod persist;
pub mod vbpr;

pub use bpr::{BprHyperParams, BprModel, TrainingTrace, Triple, TripleSampler};
pub use graph::{build_item_graph, build_item_graph_late, train_frozen_graph_rec, FrozenGraphRec, ItemGraph};
pub use knn::{fit_itemknn, ItemKnn};
pub use lightgcn::{train_lightgcn, LightGcn};
pub use mf::{train_bprmf, MatrixFactorization};
pub use vbpr::{train_vbpr_m, MmProjections, Vbpr, VbprParams, VbprScorer};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{dot, Matrix};
use crate::scalar::Scalar;

/// Anything that can score every item for a user.
pub trait Recommender<T: Scalar>: Send + Sync {
    fn num_users(&self) -> usize;
    fn num_items(&self) -> usize;
    fn score_all(&self, user: usize) -> Result<Vec<T>>;
}

/// Final user/item embeddings and item bias: `score = b_i + p_u · q_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MfParams<T> {
    pub user_emb: Matrix<T>,
    pub item_emb: Matrix<T>,
    pub item_bias: Vec<T>,
}

impl<T: Scalar> MfParams<T> {
    pub fn squared_norm(&self) -> T {
        self.user_emb.squared_norm()
            + self.item_emb.squared_norm()
            + crate::linalg::squared_norm(&self.item_bias)
    }
}

impl<T: Scalar> Recommender<T> for MfParams<T> {
    fn num_users(&self) -> usize {
        self.user_emb.rows()
    }

    fn num_items(&self) -> usize {
        self.item_emb.rows()
    }

    fn score_all(&self, user: usize) -> Result<Vec<T>> {
        if user >= self.num_users() {
            return Err(Error::UnknownUser(user));
        }
        let p = self.user_emb.row(user);
        finite_scores(
            (0..self.num_items())
                .map(|i| self.item_bias[i] + dot(p, self.item_emb.row(i)))
                .collect(),
        )
    }
}

pub(crate) fn finite_scores<T: Scalar>(scores: Vec<T>) -> Result<Vec<T>> {
    match scores.iter().position(|s| !s.is_finite()) {
        Some(k) => Err(Error::NonFinite(format!("score of item {k}"))),
        None => Ok(scores),
    }
}

impl<T: Scalar, R: Recommender<T> + ?Sized> Recommender<T> for Box<R> {
    fn num_users(&self) -> usize {
        (**self).num_users()
    }

    fn num_items(&self) -> usize {
        (**self).num_items()
    }

    fn score_all(&self, user: usize) -> Result<Vec<T>> {
        (**self).score_all(user)
    }
}

/// The model zoo.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelKind {
    #[serde(rename = "itemknn")]
    ItemKnn,
    Bprmf,
    Vbpr,
    #[serde(rename = "lightgcn")]
    LightGcn,
    /// Simplified frozen multimodal item-graph model.
    FrozenGraph,
}

impl ModelKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ModelKind::ItemKnn => "itemknn",
            ModelKind::Bprmf => "bprmf",
            ModelKind::Vbpr => "vbpr",
            ModelKind::LightGcn => "lightgcn",
            ModelKind::FrozenGraph => "frozen_graph",
        }
    }

    /// Whether the model consumes item content features.
    pub fn is_multimodal(self) -> bool {
        matches!(self, ModelKind::Vbpr | ModelKind::FrozenGraph)
    }

    /// Whether the model is trained with the BPR learning-rate/reg grid.
    pub fn uses_grid(self) -> bool {
        !matches!(self, ModelKind::ItemKnn)
    }
}

impl std::fmt::Display for ModelKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for ModelKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        [
            ModelKind::ItemKnn,
            ModelKind::Bprmf,
            ModelKind::Vbpr,
            ModelKind::LightGcn,
            ModelKind::FrozenGraph,
        ]
        .into_iter()
        .find(|k| k.as_str() == s)
        .ok_or_else(|| Error::Config(format!("unknown model kind {s:?}")))
    }
}

/// A trained model of any kind.
#[derive(Debug, Clone, PartialEq)]
pub enum TrainedModel<T> {
    ItemKnn(ItemKnn<T>),
    Factors { kind: ModelKind, params: MfParams<T> },
    Vbpr(VbprScorer<T>),
}

impl<T: Scalar> TrainedModel<T> {
    pub fn kind(&self) -> ModelKind {
        match self {
            TrainedModel::ItemKnn(_) => ModelKind::ItemKnn,
            TrainedModel::Factors { kind, .. } => *kind,
            TrainedModel::Vbpr(_) => ModelKind::Vbpr,
        }
    }
}

impl<T: Scalar> Recommender<T> for TrainedModel<T> {
    fn num_users(&self) -> usize {
        match self {
            TrainedModel::ItemKnn(m) => m.num_users(),
            TrainedModel::Factors { params, .. } => params.num_users(),
            TrainedModel::Vbpr(m) => m.num_users(),
        }
    }

    fn num_items(&self) -> usize {
        match self {
            TrainedModel::ItemKnn(m) => m.num_items(),
            TrainedModel::Factors { params, .. } => params.num_items(),
            TrainedModel::Vbpr(m) => m.num_items(),
        }
    }

    fn score_all(&self, user: usize) -> Result<Vec<T>> {
        match self {
            TrainedModel::ItemKnn(m) => m.score_all(user),
            TrainedModel::Factors { params, .. } => params.score_all(user),
            TrainedModel::Vbpr(m) => m.score_all(user),
        }
    }
}
