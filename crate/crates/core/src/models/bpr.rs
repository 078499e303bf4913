//! Pairwise ranking harness shared by every latent-factor model.
//!
//! A model exposes its trainable blocks as flat slices, a scoring function
//! over its current (refreshed) representations, and the gradient of
//! `dloss/dx * x_uij + lambda * penalty(u, i, j)` accumulated triple by
//! triple. Propagation-based models accumulate score gradients into scratch
//! buffers for their final representations and push them back onto the raw
//! parameters in `finalize`.
//!
//! Sampling: a user is drawn uniformly among users with at least one training
//! item, a positive uniformly from that user's items, and a negative
//! uniformly (by rejection) from the remaining items. Each mini-batch has its
//! own PRNG stream keyed by (seed, epoch, batch), so runs are reproducible
//! bit for bit.

use rand::RngCore;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::InteractionMatrix;
use crate::error::{Error, Result};
use crate::linalg::Matrix;
use crate::rng::{self, fnv1a};
use crate::scalar::{sigmoid, softplus, Scalar};

const SAMPLE_STREAM: u64 = 0x0042_5052; // "BPR"
const INIT_STREAM: u64 = 0x494e_4954; // "INIT"

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BprHyperParams {
    pub latent_dim: usize,
    pub learning_rate: f64,
    /// Weight of the L2 regularizer.
    pub reg: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub seed: u64,
    /// Standard deviation of the Gaussian initialization.
    pub init_std: f64,
}

impl Default for BprHyperParams {
    fn default() -> Self {
        Self {
            latent_dim: 64,
            learning_rate: 0.001,
            reg: 1e-5,
            epochs: 200,
            batch_size: 1024,
            seed: 42,
            init_std: 0.01,
        }
    }
}

impl BprHyperParams {
    pub fn validate(&self) -> Result<()> {
        let bad = |what: &str| Err(Error::Config(format!("{what} must be positive")));
        if self.latent_dim == 0 {
            return bad("latent_dim");
        }
        if !self.learning_rate.is_finite() || self.learning_rate < 0.0 {
            return Err(Error::Config("learning_rate must be finite and non-negative".into()));
        }
        if !self.reg.is_finite() || self.reg < 0.0 {
            return Err(Error::Config("reg must be finite and non-negative".into()));
        }
        if self.epochs == 0 {
            return bad("epochs");
        }
        if self.batch_size == 0 {
            return bad("batch_size");
        }
        if self.init_std.is_nan() || self.init_std < 0.0 {
            return Err(Error::Config("init_std must be non-negative".into()));
        }
        Ok(())
    }
}

/// A model trainable with the BPR objective.
pub trait BprModel<T: Scalar>: Send {
    fn num_users(&self) -> usize;
    fn num_items(&self) -> usize;
    fn block_names(&self) -> Vec<String>;
    fn blocks(&self) -> Vec<&[T]>;
    fn blocks_mut(&mut self) -> Vec<&mut [T]>;
    /// Recompute derived representations from the raw parameters.
    fn refresh(&mut self);
    fn score(&self, user: usize, item: usize) -> T;
    /// Regularizer of one triple, before scaling by lambda.
    fn penalty(&self, user: usize, pos: usize, neg: usize) -> T;
    /// Zeroed buffers: one per block, in `blocks()` order, then scratch.
    fn grad_buffers(&self) -> Vec<Vec<T>>;
    fn accumulate(&self, grads: &mut [Vec<T>], user: usize, pos: usize, neg: usize, dloss_dx: T, lambda: T);
    /// Complete a batch of `triples` accumulated triples.
    fn finalize(&self, grads: &mut [Vec<T>], triples: usize, lambda: T);
}

pub type Triple = (usize, usize, usize);

/// `-ln σ(x_ui - x_uj) + λ·penalty` on the model's current representations.
pub fn triple_loss<T: Scalar, M: BprModel<T> + ?Sized>(model: &M, (u, i, j): Triple, lambda: T) -> T {
    let x = model.score(u, i) - model.score(u, j);
    softplus(-x) + lambda * model.penalty(u, i, j)
}

pub fn batch_loss<T: Scalar, M: BprModel<T> + ?Sized>(model: &M, triples: &[Triple], lambda: T) -> T {
    triples
        .iter()
        .fold(T::zero(), |acc, &t| acc + triple_loss(model, t, lambda))
}

/// Analytic gradient of `batch_loss`, one vector per trainable block.
pub fn batch_gradient<T: Scalar, M: BprModel<T> + ?Sized>(model: &M, triples: &[Triple], lambda: T) -> Vec<Vec<T>> {
    let mut grads = model.grad_buffers();
    for &(u, i, j) in triples {
        let x = model.score(u, i) - model.score(u, j);
        model.accumulate(&mut grads, u, i, j, -sigmoid(-x), lambda);
    }
    model.finalize(&mut grads, triples.len(), lambda);
    grads.truncate(model.blocks().len());
    grads
}

/// Gaussian initialization of one block; the stream depends only on the
/// seed and the block name so shared blocks start equal across models.
pub fn init_block<T: Scalar>(rows: usize, cols: usize, name: &str, hp: &BprHyperParams) -> Matrix<T> {
    let mut stream = rng::stream(hp.seed, &[INIT_STREAM, fnv1a(name.as_bytes())]);
    let normal = Normal::new(0.0, hp.init_std).expect("validated std");
    Matrix::from_vec(
        rows,
        cols,
        (0..rows * cols).map(|_| T::of(normal.sample(&mut stream))).collect(),
    )
}

fn bounded(stream: &mut impl RngCore, n: usize) -> usize {
    ((u128::from(stream.next_u64()) * n as u128) >> 64) as usize
}

/// Draws (user, positive, negative) triples from a training matrix.
#[derive(Debug, Clone)]
pub struct TripleSampler<'a> {
    train: &'a InteractionMatrix,
    users: Vec<usize>,
}

impl<'a> TripleSampler<'a> {
    pub fn new(train: &'a InteractionMatrix) -> Result<Self> {
        let n_items = train.num_items();
        let mut users = Vec::new();
        for u in 0..train.num_users() {
            let deg = train.user_items(u).len();
            if deg == 0 {
                continue;
            }
            if deg == n_items {
                return Err(Error::Degenerate(format!(
                    "user {u} interacted with every item; no negative to sample"
                )));
            }
            users.push(u);
        }
        if users.is_empty() {
            return Err(Error::Degenerate("no user has training interactions".into()));
        }
        Ok(Self { train, users })
    }

    pub fn sample(&self, stream: &mut impl RngCore) -> Triple {
        let u = self.users[bounded(stream, self.users.len())];
        let items = self.train.user_items(u);
        let i = items[bounded(stream, items.len())];
        loop {
            let j = bounded(stream, self.train.num_items());
            if !self.train.contains(u, j) {
                return (u, i, j);
            }
        }
    }

    /// The triples of one mini-batch.
    pub fn batch(&self, seed: u64, epoch: usize, batch: usize, size: usize) -> Vec<Triple> {
        let mut stream = rng::stream(seed, &[SAMPLE_STREAM, epoch as u64, batch as u64]);
        (0..size).map(|_| self.sample(&mut stream)).collect()
    }
}

/// Mean training loss per epoch.
#[derive(Debug, Clone, PartialEq)]
pub struct TrainingTrace<T> {
    pub epoch_loss: Vec<T>,
}

/// Mini-batch SGD over `|train|` sampled triples per epoch.
pub fn fit<T: Scalar, M: BprModel<T> + ?Sized>(
    model: &mut M,
    train: &InteractionMatrix,
    hp: &BprHyperParams,
) -> Result<TrainingTrace<T>> {
    hp.validate()?;
    if train.num_users() != model.num_users() || train.num_items() != model.num_items() {
        return Err(Error::DimMismatch {
            expected: model.num_users() * model.num_items(),
            found: train.num_users() * train.num_items(),
        });
    }
    let sampler = TripleSampler::new(train)?;
    let per_epoch = train.nnz();
    let lr = T::of(hp.learning_rate);
    let lambda = T::of(hp.reg);
    let mut trace = TrainingTrace { epoch_loss: Vec::with_capacity(hp.epochs) };
    model.refresh();
    for epoch in 0..hp.epochs {
        let mut total = T::zero();
        let mut done = 0;
        let mut batch = 0;
        while done < per_epoch {
            let size = hp.batch_size.min(per_epoch - done);
            let triples = sampler.batch(hp.seed, epoch, batch, size);
            let mut grads = model.grad_buffers();
            for &(u, i, j) in &triples {
                let x = model.score(u, i) - model.score(u, j);
                total = total + softplus(-x) + lambda * model.penalty(u, i, j);
                model.accumulate(&mut grads, u, i, j, -sigmoid(-x), lambda);
            }
            model.finalize(&mut grads, triples.len(), lambda);
            for (block, g) in model.blocks_mut().into_iter().zip(&grads) {
                for (p, &d) in block.iter_mut().zip(g) {
                    *p = *p - lr * d;
                }
            }
            model.refresh();
            done += size;
            batch += 1;
        }
        for (name, block) in model.block_names().iter().zip(model.blocks()) {
            if block.iter().any(|v| !v.is_finite()) {
                return Err(Error::NonFinite(format!("{name} after epoch {epoch}")));
            }
        }
        trace.epoch_loss.push(total / T::of_usize(per_epoch.max(1)));
    }
    Ok(trace)
}

/// Latent factors shared by the models: user/item embeddings and an
/// optional item bias. Gradient buffer layout: the raw blocks, then scratch
/// buffers holding score gradients w.r.t. the final user/item representations.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct Factors<T> {
    pub user: Matrix<T>,
    pub item: Matrix<T>,
    pub bias: Option<Vec<T>>,
}

impl<T: Scalar> Factors<T> {
    pub fn init(num_users: usize, num_items: usize, hp: &BprHyperParams, with_bias: bool) -> Self {
        Self {
            user: init_block(num_users, hp.latent_dim, "user_emb", hp),
            item: init_block(num_items, hp.latent_dim, "item_emb", hp),
            bias: with_bias.then(|| vec![T::zero(); num_items]),
        }
    }

    pub fn dim(&self) -> usize {
        self.user.cols()
    }

    pub fn names(&self) -> Vec<String> {
        let mut n = vec!["user_emb".to_string(), "item_emb".to_string()];
        if self.bias.is_some() {
            n.push("item_bias".into());
        }
        n
    }

    pub fn blocks(&self) -> Vec<&[T]> {
        let mut b = vec![self.user.as_slice(), self.item.as_slice()];
        if let Some(bias) = &self.bias {
            b.push(bias);
        }
        b
    }

    pub fn blocks_mut(&mut self) -> Vec<&mut [T]> {
        let mut b = vec![self.user.as_mut_slice(), self.item.as_mut_slice()];
        if let Some(bias) = &mut self.bias {
            b.push(bias);
        }
        b
    }

    pub fn block_count(&self) -> usize {
        2 + usize::from(self.bias.is_some())
    }

    pub fn raw_buffers(&self) -> Vec<Vec<T>> {
        self.blocks().iter().map(|b| vec![T::zero(); b.len()]).collect()
    }

    /// Scratch for gradients w.r.t. final user and item representations.
    pub fn scratch_buffers(&self) -> [Vec<T>; 2] {
        [
            vec![T::zero(); self.user.as_slice().len()],
            vec![T::zero(); self.item.as_slice().len()],
        ]
    }

    pub fn bias_of(&self, item: usize) -> T {
        self.bias.as_ref().map_or(T::zero(), |b| b[item])
    }

    pub fn penalty(&self, u: usize, i: usize, j: usize) -> T {
        let mut p = crate::linalg::squared_norm(self.user.row(u))
            + crate::linalg::squared_norm(self.item.row(i))
            + crate::linalg::squared_norm(self.item.row(j));
        if let Some(b) = &self.bias {
            p = p + b[i] * b[i] + b[j] * b[j];
        }
        p
    }

    /// Score gradients for `x = b_i - b_j + f_u·(f_i - f_j)` given final
    /// representations, plus the L2 terms on the raw factors.
    #[allow(clippy::too_many_arguments)]
    pub fn accumulate(
        &self,
        grads: &mut [Vec<T>],
        scratch_at: usize,
        final_user: &[T],
        final_pos: &[T],
        final_neg: &[T],
        (u, i, j): Triple,
        dx: T,
        lambda: T,
    ) {
        let d = self.dim();
        let two_l = lambda + lambda;
        {
            let (head, scratch) = grads.split_at_mut(scratch_at);
            let (su, si) = scratch.split_at_mut(1);
            let su = &mut su[0][u * d..(u + 1) * d];
            for k in 0..d {
                su[k] = su[k] + dx * (final_pos[k] - final_neg[k]);
            }
            let si = &mut si[0];
            for k in 0..d {
                si[i * d + k] = si[i * d + k] + dx * final_user[k];
            }
            for k in 0..d {
                si[j * d + k] = si[j * d + k] - dx * final_user[k];
            }
            let gu = &mut head[0][u * d..(u + 1) * d];
            for (g, &p) in gu.iter_mut().zip(self.user.row(u)) {
                *g = *g + two_l * p;
            }
            let gi = &mut head[1];
            for (k, &p) in self.item.row(i).iter().enumerate() {
                gi[i * d + k] = gi[i * d + k] + two_l * p;
            }
            for (k, &p) in self.item.row(j).iter().enumerate() {
                gi[j * d + k] = gi[j * d + k] + two_l * p;
            }
            if let Some(b) = &self.bias {
                let gb = &mut head[2];
                gb[i] = gb[i] + dx + two_l * b[i];
                gb[j] = gb[j] - dx + two_l * b[j];
            }
        }
    }

    /// Add already back-propagated scratch gradients onto the raw blocks.
    pub fn absorb(&self, grads: &mut [Vec<T>], user_grad: &[T], item_grad: &[T]) {
        for (g, &s) in grads[0].iter_mut().zip(user_grad) {
            *g = *g + s;
        }
        for (g, &s) in grads[1].iter_mut().zip(item_grad) {
            *g = *g + s;
        }
    }
}
