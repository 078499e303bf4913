//! Frozen item-item similarity graph and the graph-smoothed factor model.
//!
//! `FrozenGraphRec` is a simplified stand-in for graph-refined multimodal
//! recommenders: the kNN graph over item content is computed once and never
//! updated, and item representations are `h = q + Σ_{g=1..G} Ĝ^g q`.

use super::bpr::{self, BprHyperParams, BprModel, Factors, TrainingTrace};
use super::MfParams;
use crate::data::{FeatureMatrix, InteractionMatrix};
use crate::error::{Error, Result};
use crate::fusion::{late_fuse, LateFusion};
use crate::linalg::{axpy, cosine, dot, Matrix};
use crate::scalar::Scalar;

/// Row-normalized top-k cosine neighbours, no self loops.
#[derive(Debug, Clone, PartialEq)]
pub struct ItemGraph {
    k: usize,
    rows: Vec<Vec<(usize, f64)>>,
}

impl ItemGraph {
    /// Graph with no edges.
    pub fn empty(num_items: usize, k: usize) -> Self {
        Self {
            k,
            rows: vec![Vec::new(); num_items],
        }
    }

    /// Build from explicit rows; weights are normalized to sum to one.
    pub fn from_rows(k: usize, rows: Vec<Vec<(usize, f64)>>) -> Result<Self> {
        let n = rows.len();
        let mut out = Vec::with_capacity(n);
        for (i, row) in rows.into_iter().enumerate() {
            if row.len() > k {
                return Err(Error::Config(format!("item {i} has more than {k} neighbours")));
            }
            if row.iter().any(|&(j, w)| j == i || j >= n || w.is_nan() || w <= 0.0) {
                return Err(Error::Config(format!("item {i} has an invalid edge")));
            }
            out.push(normalize(row));
        }
        Ok(Self { k, rows: out })
    }

    pub fn k(&self) -> usize {
        self.k
    }

    pub fn num_items(&self) -> usize {
        self.rows.len()
    }

    pub fn neighbors(&self, item: usize) -> &[(usize, f64)] {
        &self.rows[item]
    }

    pub fn num_edges(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Dense `Ĝ`, for inspection and testing.
    pub fn to_dense(&self) -> Vec<Vec<f64>> {
        let n = self.rows.len();
        let mut m = vec![vec![0.0; n]; n];
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                m[i][j] = w;
            }
        }
        m
    }
}

fn normalize(row: Vec<(usize, f64)>) -> Vec<(usize, f64)> {
    let total: f64 = row.iter().map(|&(_, w)| w).sum();
    row.into_iter().map(|(j, w)| (j, w / total)).collect()
}

/// Keep the `k` strictly positive similarities, highest first, ties by index.
fn top_k(i: usize, sims: impl Iterator<Item = (usize, f64)>, k: usize) -> Vec<(usize, f64)> {
    let mut cands: Vec<(usize, f64)> = sims.filter(|&(j, s)| j != i && s > 0.0).collect();
    cands.sort_by(|a, b| b.1.total_cmp(&a.1).then(a.0.cmp(&b.0)));
    cands.truncate(k);
    normalize(cands)
}

fn cosine_rows(features: &FeatureMatrix) -> Vec<Vec<f64>> {
    let m: Matrix<f64> = features.to_matrix();
    let n = m.rows();
    (0..n)
        .map(|i| (0..n).map(|j| if i == j { 0.0 } else { cosine(m.row(i), m.row(j)) }).collect())
        .collect()
}

/// Top-`k` cosine graph over (fused) item features.
pub fn build_item_graph(features: &FeatureMatrix, k: usize) -> ItemGraph {
    let sims = cosine_rows(features);
    ItemGraph {
        k,
        rows: sims
            .iter()
            .enumerate()
            .map(|(i, row)| top_k(i, row.iter().copied().enumerate(), k))
            .collect(),
    }
}

/// Per-modality cosine similarities, combined by late fusion before the
/// top-`k` selection. Blocks must be row-aligned.
pub fn build_item_graph_late(blocks: &[FeatureMatrix], k: usize, method: LateFusion) -> Result<ItemGraph> {
    let first = blocks.first().ok_or(Error::EmptyModalities)?;
    if let Some(b) = blocks.iter().find(|b| b.len() != first.len()) {
        return Err(Error::DimMismatch {
            expected: first.len(),
            found: b.len(),
        });
    }
    let per: Vec<Vec<Vec<f64>>> = blocks.iter().map(cosine_rows).collect();
    let n = first.len();
    let mut rows = Vec::with_capacity(n);
    for i in 0..n {
        let fused: Vec<(usize, f64)> = (0..n)
            .map(|j| {
                let scores: Vec<f64> = per.iter().map(|s| s[i][j]).collect();
                late_fuse(&scores, method).map(|s| (j, s))
            })
            .collect::<Result<_>>()?;
        rows.push(top_k(i, fused.into_iter(), k));
    }
    Ok(ItemGraph { k, rows })
}

#[derive(Debug, Clone, PartialEq)]
pub struct FrozenGraphRec<T> {
    pub(crate) factors: Factors<T>,
    rows: Vec<Vec<(usize, T)>>,
    layers: usize,
    smoothed: Matrix<T>,
}

impl<T: Scalar> FrozenGraphRec<T> {
    pub fn new(num_users: usize, graph: &ItemGraph, hp: &BprHyperParams, layers: usize) -> Self {
        let factors = Factors::init(num_users, graph.num_items(), hp, true);
        let mut model = Self {
            smoothed: factors.item.clone(),
            factors,
            rows: graph
                .rows
                .iter()
                .map(|r| r.iter().map(|&(j, w)| (j, T::of(w))).collect())
                .collect(),
            layers,
        };
        model.refresh();
        model
    }

    fn forward(&self, x: &Matrix<T>) -> Matrix<T> {
        let mut out = Matrix::zeros(x.rows(), x.cols());
        for (i, row) in self.rows.iter().enumerate() {
            let o = out.row_mut(i);
            for &(j, w) in row {
                axpy(w, x.row(j), o);
            }
        }
        out
    }

    fn backward(&self, y: &Matrix<T>) -> Matrix<T> {
        let mut out = Matrix::zeros(y.rows(), y.cols());
        for (i, row) in self.rows.iter().enumerate() {
            for &(j, w) in row {
                axpy(w, y.row(i), out.row_mut(j));
            }
        }
        out
    }

    /// `x + Σ_{g=1..G} op^g x`.
    fn smooth(&self, x: &Matrix<T>, op: impl Fn(&Matrix<T>) -> Matrix<T>) -> Matrix<T> {
        let mut total = x.clone();
        let mut cur = x.clone();
        for _ in 0..self.layers {
            cur = op(&cur);
            axpy(T::one(), cur.as_slice(), total.as_mut_slice());
        }
        total
    }

    /// Graph-smoothed item representations for arbitrary base embeddings.
    pub fn smooth_items(&self, base: &Matrix<T>) -> Matrix<T> {
        self.smooth(base, |x| self.forward(x))
    }

    pub fn params(&self) -> MfParams<T> {
        MfParams {
            user_emb: self.factors.user.clone(),
            item_emb: self.smoothed.clone(),
            item_bias: self.factors.bias.clone().unwrap_or_default(),
        }
    }
}

impl<T: Scalar> BprModel<T> for FrozenGraphRec<T> {
    fn num_users(&self) -> usize {
        self.factors.user.rows()
    }

    fn num_items(&self) -> usize {
        self.factors.item.rows()
    }

    fn block_names(&self) -> Vec<String> {
        self.factors.names()
    }

    fn blocks(&self) -> Vec<&[T]> {
        self.factors.blocks()
    }

    fn blocks_mut(&mut self) -> Vec<&mut [T]> {
        self.factors.blocks_mut()
    }

    fn refresh(&mut self) {
        self.smoothed = self.smooth_items(&self.factors.item);
    }

    fn score(&self, user: usize, item: usize) -> T {
        self.factors.bias_of(item) + dot(self.factors.user.row(user), self.smoothed.row(item))
    }

    fn penalty(&self, user: usize, pos: usize, neg: usize) -> T {
        self.factors.penalty(user, pos, neg)
    }

    fn grad_buffers(&self) -> Vec<Vec<T>> {
        let mut g = self.factors.raw_buffers();
        g.extend(self.factors.scratch_buffers());
        g
    }

    fn accumulate(&self, grads: &mut [Vec<T>], u: usize, i: usize, j: usize, dx: T, lambda: T) {
        let f = &self.factors;
        f.accumulate(
            grads,
            f.block_count(),
            f.user.row(u),
            self.smoothed.row(i),
            self.smoothed.row(j),
            (u, i, j),
            dx,
            lambda,
        );
    }

    fn finalize(&self, grads: &mut [Vec<T>], _triples: usize, _lambda: T) {
        let n = self.factors.block_count();
        let (raw, scratch) = grads.split_at_mut(n);
        let gi = Matrix::from_vec(self.num_items(), self.factors.dim(), std::mem::take(&mut scratch[1]));
        let back = self.smooth(&gi, |y| self.backward(y));
        self.factors.absorb(raw, &scratch[0], back.as_slice());
    }
}

pub fn train_frozen_graph_rec<T: Scalar>(
    train: &InteractionMatrix,
    graph: &ItemGraph,
    hp: &BprHyperParams,
    graph_layers: usize,
) -> Result<MfParams<T>> {
    Ok(train_frozen_graph_rec_traced(train, graph, hp, graph_layers)?.0)
}

pub fn train_frozen_graph_rec_traced<T: Scalar>(
    train: &InteractionMatrix,
    graph: &ItemGraph,
    hp: &BprHyperParams,
    graph_layers: usize,
) -> Result<(MfParams<T>, TrainingTrace<T>)> {
    hp.validate()?;
    if graph.num_items() != train.num_items() {
        return Err(Error::DimMismatch {
            expected: train.num_items(),
            found: graph.num_items(),
        });
    }
    let mut model = FrozenGraphRec::new(train.num_users(), graph, hp, graph_layers);
    let trace = bpr::fit(&mut model, train, hp)?;
    Ok((model.params(), trace))
}
