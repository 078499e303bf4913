#![allow(dead_code)]

use std::collections::HashSet;
use std::path::PathBuf;

use mmrec_core::data::{FeatureMatrix, InteractionMatrix, Modality};
use mmrec_core::models::bpr::{batch_gradient, batch_loss, BprModel, Triple};
use rand::rngs::StdRng;
use rand::{Rng, SeedableRng};

pub fn fixture(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic").join(name)
}

pub fn rng(seed: u64) -> StdRng {
    StdRng::seed_from_u64(seed)
}

/// Metrics straight from the definitions: each candidate's rank is counted
/// from pairwise score comparisons, no sorting involved.
pub fn brute_force_metrics(scores: &[f64], exclude: &HashSet<usize>, relevant: &HashSet<usize>, k: usize) -> (f64, f64, f64) {
    let candidates: Vec<usize> = (0..scores.len()).filter(|i| !exclude.contains(i)).collect();
    let rank = |i: usize| {
        1 + candidates
            .iter()
            .filter(|&&j| scores[j] > scores[i] || (scores[j] == scores[i] && j < i))
            .count()
    };
    let mut hits = 0;
    let mut dcg = 0.0;
    for &i in &candidates {
        let r = rank(i);
        if r <= k && relevant.contains(&i) {
            hits += 1;
            dcg += 1.0 / ((r + 1) as f64).log2();
        }
    }
    let ideal = k.min(relevant.len());
    let mut idcg = 0.0;
    for r in 1..=ideal {
        idcg += 1.0 / ((r + 1) as f64).log2();
    }
    (
        hits as f64 / relevant.len() as f64,
        dcg / idcg,
        if hits > 0 { 1.0 } else { 0.0 },
    )
}

pub fn random_features(rng: &mut StdRng, modality: Modality, rows: usize, dim: usize) -> FeatureMatrix {
    let values = (0..rows * dim).map(|_| rng.random_range(-1.0f32..1.0)).collect();
    FeatureMatrix::new(modality, dim, (0..rows).map(|r| format!("i{r}")).collect(), values).unwrap()
}

/// Random interaction matrix where every user has at least one item and at
/// least one non-item.
pub fn random_train(rng: &mut StdRng, users: usize, items: usize, density: f64) -> InteractionMatrix {
    let mut pairs = Vec::new();
    for u in 0..users {
        let anchor = rng.random_range(0..items);
        for i in 0..items {
            if i == anchor || (rng.random_bool(density) && i != (anchor + 1) % items) {
                pairs.push((u, i));
            }
        }
    }
    InteractionMatrix::from_pairs(users, items, &pairs)
}

pub fn randomize<M: BprModel<f64>>(model: &mut M, rng: &mut StdRng, scale: f64) {
    for block in model.blocks_mut() {
        for v in block.iter_mut() {
            *v = rng.random_range(-scale..scale);
        }
    }
    model.refresh();
}

pub struct GradCheck {
    pub max_rel: f64,
    pub entries: usize,
    pub worst_block: String,
}

/// Relative error between analytic and central-difference gradients. Entries
/// with both magnitudes below `floor` are compared on the absolute scale
/// `floor`, where finite differences are dominated by rounding.
pub fn relative_error(a: f64, n: f64, floor: f64) -> f64 {
    (a - n).abs() / a.abs().max(n.abs()).max(floor)
}

pub fn gradient_check<M: BprModel<f64>>(model: &mut M, triples: &[Triple], lambda: f64, h: f64, floor: f64) -> GradCheck {
    let analytic = batch_gradient(model, triples, lambda);
    let names = model.block_names();
    let mut out = GradCheck {
        max_rel: 0.0,
        entries: 0,
        worst_block: String::new(),
    };
    for (b, grad) in analytic.iter().enumerate() {
        for (e, &g) in grad.iter().enumerate() {
            let orig = model.blocks()[b][e];
            model.blocks_mut()[b][e] = orig + h;
            model.refresh();
            let plus = batch_loss(model, triples, lambda);
            model.blocks_mut()[b][e] = orig - h;
            model.refresh();
            let minus = batch_loss(model, triples, lambda);
            model.blocks_mut()[b][e] = orig;
            model.refresh();
            let numeric = (plus - minus) / (2.0 * h);
            let rel = relative_error(g, numeric, floor);
            out.entries += 1;
            if rel > out.max_rel {
                out.max_rel = rel;
                out.worst_block = names[b].clone();
            }
        }
    }
    out
}

pub fn random_triples(rng: &mut StdRng, train: &InteractionMatrix, n: usize) -> Vec<Triple> {
    (0..n)
        .map(|_| loop {
            let u = rng.random_range(0..train.num_users());
            let pos = train.user_items(u);
            if pos.is_empty() {
                continue;
            }
            let i = pos[rng.random_range(0..pos.len())];
            let j = rng.random_range(0..train.num_items());
            if !train.contains(u, j) {
                break (u, i, j);
            }
        })
        .collect()
}
