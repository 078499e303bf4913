//! Top-K ranking with train-item masking, and Recall/nDCG/HR at K.
//!
//! Definitions (binary relevance, ranks start at 1):
//! - recall = hits / |relevant|
//! - hr = 1 if hits > 0 else 0
//! - ndcg = DCG / IDCG, DCG = Σ_{hit ranks r} 1 / log2(r + 1),
//!   IDCG = Σ_{r = 1..min(K, |relevant|)} 1 / log2(r + 1)

use std::cmp::Ordering;
use std::collections::HashSet;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{InteractionMatrix, SplitBundle};
use crate::error::{Error, Result};
use crate::models::Recommender;
use crate::scalar::Scalar;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Target {
    Validation,
    Test,
}

impl std::str::FromStr for Target {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "validation" => Ok(Target::Validation),
            "test" => Ok(Target::Test),
            other => Err(Error::Config(format!("unknown evaluation target {other:?}"))),
        }
    }
}

/// Descending by score, ties by ascending item index.
fn by_score<T: Scalar>(scores: &[T]) -> impl Fn(&usize, &usize) -> Ordering + '_ {
    move |&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(Ordering::Equal)
            .then(a.cmp(&b))
    }
}

/// The `k` best items not in `exclude` (a sorted or unsorted index list).
pub fn rank_topk<T: Scalar>(scores: &[T], exclude: &[usize], k: usize) -> Result<Vec<usize>> {
    let excluded: HashSet<usize> = exclude.iter().copied().collect();
    let mut cands: Vec<usize> = (0..scores.len()).filter(|i| !excluded.contains(i)).collect();
    if k == 0 || cands.len() < k {
        return Err(Error::InsufficientItems {
            available: cands.len(),
            k,
        });
    }
    let cmp = by_score(scores);
    if cands.len() > k {
        cands.select_nth_unstable_by(k - 1, &cmp);
        cands.truncate(k);
    }
    cands.sort_by(&cmp);
    Ok(cands)
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
pub struct Metrics {
    pub recall: f64,
    pub ndcg: f64,
    pub hr: f64,
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// Metrics of one ranked list; only its first `k` entries count.
pub fn metrics_at_k(topk: &[usize], relevant: &HashSet<usize>, k: usize) -> Metrics {
    if relevant.is_empty() {
        return Metrics::default();
    }
    let mut hits = 0usize;
    let mut dcg = 0.0;
    for (r, item) in topk.iter().take(k).enumerate() {
        if relevant.contains(item) {
            hits += 1;
            dcg += discount(r + 1);
        }
    }
    let idcg: f64 = (1..=k.min(relevant.len())).map(discount).sum();
    Metrics {
        recall: hits as f64 / relevant.len() as f64,
        ndcg: if idcg > 0.0 { dcg / idcg } else { 0.0 },
        hr: if hits > 0 { 1.0 } else { 0.0 },
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    #[serde(rename = "model")]
    pub model_name: String,
    pub extractor_tag: String,
    #[serde(rename = "K")]
    pub k: usize,
    pub recall: f64,
    pub ndcg: f64,
    pub hr: f64,
    pub num_evaluated_users: usize,
    pub seed: u64,
    #[serde(skip)]
    pub num_skipped_users: usize,
}

impl MetricReport {
    pub fn tagged(mut self, model: impl Into<String>, extractor_tag: impl Into<String>, seed: u64) -> Self {
        self.model_name = model.into();
        self.extractor_tag = extractor_tag.into();
        self.seed = seed;
        self
    }

    pub fn metric(&self, name: &str) -> Option<f64> {
        match name {
            "recall" => Some(self.recall),
            "ndcg" => Some(self.ndcg),
            "hr" => Some(self.hr),
            _ => None,
        }
    }
}

/// Average per-user metrics over users with at least one target item.
/// Users with fewer than `k` unmasked candidates are skipped and counted.
pub fn evaluate_matrices<T: Scalar, R: Recommender<T> + ?Sized>(
    model: &R,
    train: &InteractionMatrix,
    target: &InteractionMatrix,
    k: usize,
) -> Result<MetricReport> {
    let users: Vec<usize> = (0..target.num_users())
        .filter(|&u| !target.user_items(u).is_empty())
        .collect();
    let per_user: Vec<Result<Option<Metrics>>> = users
        .par_iter()
        .map(|&u| {
            let scores = model.score_all(u)?;
            match rank_topk(&scores, train.user_items(u), k) {
                Ok(top) => {
                    let relevant: HashSet<usize> = target.user_items(u).iter().copied().collect();
                    Ok(Some(metrics_at_k(&top, &relevant, k)))
                }
                Err(Error::InsufficientItems { .. }) => Ok(None),
                Err(e) => Err(e),
            }
        })
        .collect();
    let mut sum = Metrics::default();
    let mut evaluated = 0usize;
    let mut skipped = 0usize;
    for m in per_user {
        match m? {
            Some(m) => {
                sum.recall += m.recall;
                sum.ndcg += m.ndcg;
                sum.hr += m.hr;
                evaluated += 1;
            }
            None => skipped += 1,
        }
    }
    let n = evaluated.max(1) as f64;
    Ok(MetricReport {
        model_name: String::new(),
        extractor_tag: String::new(),
        k,
        recall: sum.recall / n,
        ndcg: sum.ndcg / n,
        hr: sum.hr / n,
        num_evaluated_users: evaluated,
        seed: 0,
        num_skipped_users: skipped,
    })
}

pub fn evaluate<T: Scalar, R: Recommender<T> + ?Sized>(
    model: &R,
    bundle: &SplitBundle,
    target: Target,
    k: usize,
) -> Result<MetricReport> {
    let (nu, ni) = (bundle.index.num_users(), bundle.index.num_items());
    if model.num_users() != nu || model.num_items() != ni {
        return Err(Error::DimMismatch {
            expected: nu * ni,
            found: model.num_users() * model.num_items(),
        });
    }
    let train = InteractionMatrix::from_pairs(nu, ni, &bundle.index.encode(&bundle.train)?);
    let set = match target {
        Target::Validation => &bundle.validation,
        Target::Test => &bundle.test,
    };
    let target = InteractionMatrix::from_pairs(nu, ni, &bundle.index.encode(set)?);
    let mut report = evaluate_matrices(model, &train, &target, k)?;
    report.seed = bundle.seed;
    Ok(report)
}
