//! Item-based k-nearest-neighbour recommender over binary interaction columns.

use super::{finite_scores, Recommender};
use crate::data::InteractionMatrix;
use crate::error::{Error, Result};
use crate::scalar::Scalar;

/// `score(u, i) = Σ_{j ∈ train(u)} sim_k(i, j)` where `sim_k` keeps the
/// `k` most similar items of `i` (cosine, no shrinkage).
#[derive(Debug, Clone, PartialEq)]
pub struct ItemKnn<T> {
    neighbors: Vec<Vec<(usize, T)>>,
    train: InteractionMatrix,
    k: usize,
}

/// Cosine similarity of two item columns; 0 when either is empty.
pub fn column_cosine<T: Scalar>(train: &InteractionMatrix, a: usize, b: usize) -> T {
    let (ca, cb) = (train.item_users(a), train.item_users(b));
    if ca.is_empty() || cb.is_empty() {
        return T::zero();
    }
    let (mut x, mut y, mut common) = (0, 0, 0usize);
    while x < ca.len() && y < cb.len() {
        match ca[x].cmp(&cb[y]) {
            std::cmp::Ordering::Less => x += 1,
            std::cmp::Ordering::Greater => y += 1,
            std::cmp::Ordering::Equal => {
                common += 1;
                x += 1;
                y += 1;
            }
        }
    }
    T::of_usize(common) / (T::of_usize(ca.len()) * T::of_usize(cb.len())).sqrt()
}

pub fn fit_itemknn<T: Scalar>(train: &InteractionMatrix, k_neighbors: usize) -> Result<ItemKnn<T>> {
    if train.nnz() == 0 {
        return Err(Error::Degenerate("empty training matrix".into()));
    }
    let n = train.num_items();
    let mut counts = vec![0usize; n];
    let mut touched = Vec::new();
    let mut neighbors = Vec::with_capacity(n);
    for i in 0..n {
        for &u in train.item_users(i) {
            for &j in train.user_items(u) {
                if j != i {
                    if counts[j] == 0 {
                        touched.push(j);
                    }
                    counts[j] += 1;
                }
            }
        }
        let ni = T::of_usize(train.item_users(i).len());
        let mut row: Vec<(usize, T)> = touched
            .iter()
            .map(|&j| {
                let nj = T::of_usize(train.item_users(j).len());
                (j, T::of_usize(counts[j]) / (ni * nj).sqrt())
            })
            .collect();
        row.sort_by(|a, b| {
            b.1.partial_cmp(&a.1)
                .unwrap_or(std::cmp::Ordering::Equal)
                .then(a.0.cmp(&b.0))
        });
        row.truncate(k_neighbors);
        for &j in &touched {
            counts[j] = 0;
        }
        touched.clear();
        neighbors.push(row);
    }
    Ok(ItemKnn {
        neighbors,
        train: train.clone(),
        k: k_neighbors,
    })
}

impl<T: Scalar> ItemKnn<T> {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn neighbors(&self, item: usize) -> &[(usize, T)] {
        &self.neighbors[item]
    }

    /// Pruned similarity matrix as dense rows.
    pub fn to_dense(&self) -> Vec<Vec<T>> {
        let n = self.neighbors.len();
        let mut m = vec![vec![T::zero(); n]; n];
        for (i, row) in self.neighbors.iter().enumerate() {
            for &(j, s) in row {
                m[i][j] = s;
            }
        }
        m
    }

    /// Rebuild from a persisted pruned similarity matrix and the training data.
    pub fn from_dense(similarity: &[Vec<T>], train: InteractionMatrix, k: usize) -> Result<Self> {
        if similarity.len() != train.num_items() {
            return Err(Error::DimMismatch {
                expected: train.num_items(),
                found: similarity.len(),
            });
        }
        let neighbors = similarity
            .iter()
            .map(|row| {
                let mut r: Vec<(usize, T)> = row
                    .iter()
                    .enumerate()
                    .filter(|(_, &s)| s != T::zero())
                    .map(|(j, &s)| (j, s))
                    .collect();
                r.sort_by(|a, b| {
                    b.1.partial_cmp(&a.1)
                        .unwrap_or(std::cmp::Ordering::Equal)
                        .then(a.0.cmp(&b.0))
                });
                r
            })
            .collect();
        Ok(Self { neighbors, train, k })
    }
}

impl<T: Scalar> Recommender<T> for ItemKnn<T> {
    fn num_users(&self) -> usize {
        self.train.num_users()
    }

    fn num_items(&self) -> usize {
        self.train.num_items()
    }

    fn score_all(&self, user: usize) -> Result<Vec<T>> {
        if user >= self.num_users() {
            return Err(Error::UnknownUser(user));
        }
        finite_scores(
            self.neighbors
                .iter()
                .map(|row| {
                    row.iter()
                        .filter(|(j, _)| self.train.contains(user, *j))
                        .fold(T::zero(), |acc, &(_, s)| acc + s)
                })
                .collect(),
        )
    }
}
