//! Small planted-class dataset for tests, fixtures and demos.
//!
//! Every item belongs to one of `classes` latent classes and every user to a
//! preferred class. Users mostly consume items of their class, so content
//! features carrying the class are informative while interaction data per
//! item stays sparse.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::index::sample;
use rand::Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, InteractionSet, Modality};
use crate::error::{Error, Result};
use crate::features::write_features;
use crate::rng;
use crate::split::write_atomic;

const USERS: u64 = 1;
const FEATURES: u64 = 2;
const NOISE: u64 = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SyntheticConfig {
    pub users: usize,
    pub items: usize,
    pub classes: usize,
    pub min_per_user: usize,
    pub max_per_user: usize,
    /// Probability that an interaction is drawn from the user's class.
    pub in_class: f64,
    pub visual_dim: usize,
    pub textual_dim: usize,
    /// Noise added on top of the class indicator.
    pub noise_std: f64,
    /// Extra items with broken metadata, removed by the pre-filter.
    pub invalid_items: usize,
    pub seed: u64,
}

impl Default for SyntheticConfig {
    fn default() -> Self {
        Self {
            users: 300,
            items: 120,
            classes: 4,
            min_per_user: 3,
            max_per_user: 6,
            in_class: 0.9,
            visual_dim: 8,
            textual_dim: 6,
            noise_std: 0.1,
            invalid_items: 6,
            seed: 7,
        }
    }
}

pub fn item_token(i: usize) -> String {
    format!("i{i:04}")
}

pub fn user_token(u: usize) -> String {
    format!("u{u:04}")
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticData {
    pub interactions: InteractionSet,
    pub item_class: Vec<usize>,
    pub user_class: Vec<usize>,
    /// Class indicator plus Gaussian noise.
    pub informative: Vec<FeatureMatrix>,
    /// Features with the same energy and no class information.
    pub noise: Vec<FeatureMatrix>,
}

impl SyntheticConfig {
    fn validate(&self) -> Result<()> {
        let ok = self.users > 0
            && self.classes > 0
            && self.items >= self.classes
            && self.min_per_user >= 1
            && self.min_per_user <= self.max_per_user
            && self.max_per_user < self.items / self.classes
            && (0.0..=1.0).contains(&self.in_class)
            && self.visual_dim >= self.classes
            && self.textual_dim >= self.classes
            && self.noise_std >= 0.0;
        if ok {
            Ok(())
        } else {
            Err(Error::Config(format!("inconsistent synthetic config {self:?}")))
        }
    }
}

fn feature_block(
    cfg: &SyntheticConfig,
    modality: Modality,
    dim: usize,
    item_class: &[usize],
    informative: bool,
) -> Result<FeatureMatrix> {
    let label = if informative { FEATURES } else { NOISE };
    let mut stream = rng::stream(cfg.seed, &[label, u64::from(modality.code())]);
    // match the expected squared row norm of the informative variant
    let std = if informative {
        cfg.noise_std
    } else {
        ((1.0 + dim as f64 * cfg.noise_std * cfg.noise_std) / dim as f64).sqrt()
    };
    let normal = Normal::new(0.0, std).map_err(|e| Error::Config(e.to_string()))?;
    // the textual block stores the class in a different slot than the visual one
    let shift = usize::from(modality.code());
    let mut values = Vec::with_capacity(item_class.len() * dim);
    for &c in item_class {
        for k in 0..dim {
            let indicator = if informative && k == (c + shift) % cfg.classes { 1.0 } else { 0.0 };
            values.push((indicator + normal.sample(&mut stream)) as f32);
        }
    }
    FeatureMatrix::new(modality, dim, (0..item_class.len()).map(item_token).collect(), values)
}

pub fn generate(cfg: &SyntheticConfig) -> Result<SyntheticData> {
    cfg.validate()?;
    let item_class: Vec<usize> = (0..cfg.items).map(|i| i % cfg.classes).collect();
    let members: Vec<Vec<usize>> = (0..cfg.classes)
        .map(|c| (0..cfg.items).filter(|&i| item_class[i] == c).collect())
        .collect();
    let mut user_class = Vec::with_capacity(cfg.users);
    let mut interactions = InteractionSet::new();
    for u in 0..cfg.users {
        let mut s = rng::stream(cfg.seed, &[USERS, u as u64]);
        let class = s.random_range(0..cfg.classes);
        user_class.push(class);
        let n = s.random_range(cfg.min_per_user..=cfg.max_per_user);
        let in_class = (0..n).filter(|_| s.random_bool(cfg.in_class)).count();
        let own = &members[class];
        let mut chosen: Vec<usize> = sample(&mut s, own.len(), in_class).into_iter().map(|k| own[k]).collect();
        let others: Vec<usize> = (0..cfg.items).filter(|&i| item_class[i] != class).collect();
        let extra = (n - in_class).min(others.len());
        chosen.extend(sample(&mut s, others.len(), extra).into_iter().map(|k| others[k]));
        for i in chosen {
            interactions.insert(user_token(u), item_token(i))?;
        }
        if cfg.invalid_items > 0 && s.random_bool(0.2) {
            let bad = cfg.items + s.random_range(0..cfg.invalid_items);
            interactions.insert(user_token(u), item_token(bad))?;
        }
    }
    let block = |m, dim, informative| feature_block(cfg, m, dim, &item_class, informative);
    Ok(SyntheticData {
        informative: vec![
            block(Modality::Visual, cfg.visual_dim, true)?,
            block(Modality::Textual, cfg.textual_dim, true)?,
        ],
        noise: vec![
            block(Modality::Visual, cfg.visual_dim, false)?,
            block(Modality::Textual, cfg.textual_dim, false)?,
        ],
        interactions,
        item_class,
        user_class,
    })
}

/// Metadata lines: valid items get an image URL and a description; the
/// trailing invalid items alternate between a missing URL, a non-URL and a
/// "nan" description.
pub fn metadata_jsonl(cfg: &SyntheticConfig) -> String {
    let mut out = String::new();
    for i in 0..cfg.items + cfg.invalid_items {
        let token = item_token(i);
        let value = if i < cfg.items {
            serde_json::json!({
                "asin": token,
                "imUrl": format!("https://images.example.com/{token}.jpg"),
                "description": format!("synthetic item {token}"),
            })
        } else {
            match (i - cfg.items) % 3 {
                0 => serde_json::json!({"asin": token, "description": "no picture"}),
                1 => serde_json::json!({"asin": token, "imUrl": "not a url", "description": "bad picture"}),
                _ => serde_json::json!({"asin": token, "imUrl": format!("https://images.example.com/{token}.jpg"), "description": "nan"}),
            }
        };
        writeln!(out, "{value}").expect("write to string");
    }
    out
}

/// File names produced by [`write_dataset`].
#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticFiles {
    pub interactions: PathBuf,
    pub metadata: PathBuf,
    /// `(tag, modality, path)`; tags are `class` and `noise`.
    pub features: Vec<(String, Modality, PathBuf)>,
}

pub fn write_dataset(cfg: &SyntheticConfig, dir: impl AsRef<Path>) -> Result<SyntheticFiles> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let data = generate(cfg)?;
    let mut tsv = String::new();
    for (u, i) in data.interactions.iter() {
        writeln!(tsv, "{u}\t{i}").expect("write to string");
    }
    let interactions = dir.join("interactions.tsv");
    write_atomic(&interactions, tsv.as_bytes())?;
    let metadata = dir.join("metadata.jsonl");
    write_atomic(&metadata, metadata_jsonl(cfg).as_bytes())?;
    let mut features = Vec::new();
    for (tag, blocks) in [("class", &data.informative), ("noise", &data.noise)] {
        for b in blocks {
            let path = dir.join(format!("{tag}_{}.mmfe", b.modality()));
            write_features(b, &path)?;
            features.push((tag.to_string(), b.modality(), path));
        }
    }
    Ok(SyntheticFiles {
        interactions,
        metadata,
        features,
    })
}
