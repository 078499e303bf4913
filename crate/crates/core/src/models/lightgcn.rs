//! LightGCN: linear propagation over the normalized user-item graph,
//! `e^(l+1) = Â e^(l)` with `Â = D^-1/2 A D^-1/2`; the final embedding is the
//! mean of layers `0..=L`. No bias, no transforms, no non-linearities.

use super::bpr::{self, BprHyperParams, BprModel, Factors, TrainingTrace};
use super::MfParams;
use crate::data::InteractionMatrix;
use crate::error::Result;
use crate::linalg::{axpy, dot, Matrix};
use crate::scalar::Scalar;

/// Symmetric normalized bipartite adjacency, stored from both sides.
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedAdjacency<T> {
    /// Per user: (item, weight).
    user_side: Vec<Vec<(usize, T)>>,
    /// Per item: (user, weight).
    item_side: Vec<Vec<(usize, T)>>,
}

impl<T: Scalar> NormalizedAdjacency<T> {
    pub fn new(train: &InteractionMatrix) -> Self {
        let inv_sqrt = |deg: usize| T::one() / T::of_usize(deg).sqrt();
        let weight = |u: usize, i: usize| {
            inv_sqrt(train.user_items(u).len()) * inv_sqrt(train.item_users(i).len())
        };
        Self {
            user_side: (0..train.num_users())
                .map(|u| train.user_items(u).iter().map(|&i| (i, weight(u, i))).collect())
                .collect(),
            item_side: (0..train.num_items())
                .map(|i| train.item_users(i).iter().map(|&u| (u, weight(u, i))).collect())
                .collect(),
        }
    }

    /// One application of `Â` to stacked (users, items).
    pub fn apply(&self, users: &Matrix<T>, items: &Matrix<T>) -> (Matrix<T>, Matrix<T>) {
        let d = users.cols();
        let mut next_users = Matrix::zeros(users.rows(), d);
        let mut next_items = Matrix::zeros(items.rows(), d);
        for (u, nbrs) in self.user_side.iter().enumerate() {
            let out = next_users.row_mut(u);
            for &(i, w) in nbrs {
                axpy(w, items.row(i), out);
            }
        }
        for (i, nbrs) in self.item_side.iter().enumerate() {
            let out = next_items.row_mut(i);
            for &(u, w) in nbrs {
                axpy(w, users.row(u), out);
            }
        }
        (next_users, next_items)
    }

    /// Mean over layers `0..=layers` of `Â^l (users, items)`.
    pub fn layer_mean(&self, users: &Matrix<T>, items: &Matrix<T>, layers: usize) -> (Matrix<T>, Matrix<T>) {
        let mut sum_u = users.clone();
        let mut sum_i = items.clone();
        let (mut cur_u, mut cur_i) = (users.clone(), items.clone());
        for _ in 0..layers {
            let (nu, ni) = self.apply(&cur_u, &cur_i);
            axpy(T::one(), nu.as_slice(), sum_u.as_mut_slice());
            axpy(T::one(), ni.as_slice(), sum_i.as_mut_slice());
            cur_u = nu;
            cur_i = ni;
        }
        let inv = T::one() / T::of_usize(layers + 1);
        sum_u.as_mut_slice().iter_mut().for_each(|v| *v = *v * inv);
        sum_i.as_mut_slice().iter_mut().for_each(|v| *v = *v * inv);
        (sum_u, sum_i)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LightGcn<T> {
    pub(crate) factors: Factors<T>,
    adjacency: NormalizedAdjacency<T>,
    layers: usize,
    final_users: Matrix<T>,
    final_items: Matrix<T>,
}

impl<T: Scalar> LightGcn<T> {
    pub fn new(train: &InteractionMatrix, hp: &BprHyperParams, layers: usize) -> Self {
        let factors = Factors::init(train.num_users(), train.num_items(), hp, false);
        let mut model = Self {
            final_users: factors.user.clone(),
            final_items: factors.item.clone(),
            factors,
            adjacency: NormalizedAdjacency::new(train),
            layers,
        };
        model.refresh();
        model
    }

    pub fn adjacency(&self) -> &NormalizedAdjacency<T> {
        &self.adjacency
    }

    /// Final (propagated) embeddings with a zero bias.
    pub fn params(&self) -> MfParams<T> {
        MfParams {
            user_emb: self.final_users.clone(),
            item_emb: self.final_items.clone(),
            item_bias: vec![T::zero(); self.final_items.rows()],
        }
    }

    /// Layer-0 embeddings.
    pub fn base_embeddings(&self) -> (&Matrix<T>, &Matrix<T>) {
        (&self.factors.user, &self.factors.item)
    }
}

impl<T: Scalar> BprModel<T> for LightGcn<T> {
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
        let (u, i) = self
            .adjacency
            .layer_mean(&self.factors.user, &self.factors.item, self.layers);
        self.final_users = u;
        self.final_items = i;
    }

    fn score(&self, user: usize, item: usize) -> T {
        T::zero() + dot(self.final_users.row(user), self.final_items.row(item))
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
        self.factors.accumulate(
            grads,
            2,
            self.final_users.row(u),
            self.final_items.row(i),
            self.final_items.row(j),
            (u, i, j),
            dx,
            lambda,
        );
    }

    fn finalize(&self, grads: &mut [Vec<T>], _triples: usize, _lambda: T) {
        let d = self.factors.dim();
        let (raw, scratch) = grads.split_at_mut(2);
        let gu = Matrix::from_vec(self.num_users(), d, std::mem::take(&mut scratch[0]));
        let gi = Matrix::from_vec(self.num_items(), d, std::mem::take(&mut scratch[1]));
        // Â is symmetric, so the backward pass is the same layer mean.
        let (bu, bi) = self.adjacency.layer_mean(&gu, &gi, self.layers);
        self.factors.absorb(raw, bu.as_slice(), bi.as_slice());
    }
}

pub fn train_lightgcn<T: Scalar>(train: &InteractionMatrix, hp: &BprHyperParams, layers: usize) -> Result<MfParams<T>> {
    Ok(train_lightgcn_traced(train, hp, layers)?.0)
}

pub fn train_lightgcn_traced<T: Scalar>(
    train: &InteractionMatrix,
    hp: &BprHyperParams,
    layers: usize,
) -> Result<(MfParams<T>, TrainingTrace<T>)> {
    hp.validate()?;
    let mut model = LightGcn::new(train, hp, layers);
    let trace = bpr::fit(&mut model, train, hp)?;
    Ok((model.params(), trace))
}
