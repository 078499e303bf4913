//! Matrix factorization trained with BPR.

use super::bpr::{self, BprHyperParams, BprModel, Factors, TrainingTrace};
use super::MfParams;
use crate::data::InteractionMatrix;
use crate::error::Result;
use crate::linalg::dot;
use crate::scalar::Scalar;

/// `x_ui = b_i + p_u · q_i`.
#[derive(Debug, Clone, PartialEq)]
pub struct MatrixFactorization<T> {
    pub(crate) factors: Factors<T>,
}

impl<T: Scalar> MatrixFactorization<T> {
    pub fn new(num_users: usize, num_items: usize, hp: &BprHyperParams) -> Self {
        Self::with_bias(num_users, num_items, hp, true)
    }

    /// Without the item bias the model is LightGCN with zero layers.
    pub fn with_bias(num_users: usize, num_items: usize, hp: &BprHyperParams, bias: bool) -> Self {
        Self {
            factors: Factors::init(num_users, num_items, hp, bias),
        }
    }

    pub fn params(&self) -> MfParams<T> {
        MfParams {
            user_emb: self.factors.user.clone(),
            item_emb: self.factors.item.clone(),
            item_bias: self
                .factors
                .bias
                .clone()
                .unwrap_or_else(|| vec![T::zero(); self.factors.item.rows()]),
        }
    }
}

impl<T: Scalar> BprModel<T> for MatrixFactorization<T> {
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

    fn refresh(&mut self) {}

    fn score(&self, user: usize, item: usize) -> T {
        self.factors.bias_of(item) + dot(self.factors.user.row(user), self.factors.item.row(item))
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
            f.item.row(i),
            f.item.row(j),
            (u, i, j),
            dx,
            lambda,
        );
    }

    fn finalize(&self, grads: &mut [Vec<T>], _triples: usize, _lambda: T) {
        let n = self.factors.block_count();
        let (raw, scratch) = grads.split_at_mut(n);
        self.factors.absorb(raw, &scratch[0], &scratch[1]);
    }
}

pub fn train_bprmf<T: Scalar>(train: &InteractionMatrix, hp: &BprHyperParams) -> Result<MfParams<T>> {
    Ok(train_bprmf_traced(train, hp)?.0)
}

pub fn train_bprmf_traced<T: Scalar>(
    train: &InteractionMatrix,
    hp: &BprHyperParams,
) -> Result<(MfParams<T>, TrainingTrace<T>)> {
    hp.validate()?;
    let mut model = MatrixFactorization::new(train.num_users(), train.num_items(), hp);
    let trace = bpr::fit(&mut model, train, hp)?;
    Ok((model.params(), trace))
}
