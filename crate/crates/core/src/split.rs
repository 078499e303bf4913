//! Per-user random holdout, train-anchored indexing and feature remapping.

use std::collections::HashSet;
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::RngCore;
use serde::{Deserialize, Serialize};

use crate::data::{FeatureMatrix, IndexMap, InteractionSet, SplitBundle};
use crate::error::{Error, Result};
use crate::rng;

const SPLIT_STREAM: u64 = 0x0053_504c_4954; // "SPLIT"

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SplitConfig {
    pub test_ratio: f64,
    pub val_ratio_of_train: f64,
    pub seed: u64,
    pub min_train_per_user: usize,
}

impl Default for SplitConfig {
    fn default() -> Self {
        Self {
            test_ratio: 0.2,
            val_ratio_of_train: 0.1,
            seed: 42,
            min_train_per_user: 1,
        }
    }
}

impl SplitConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.test_ratio > 0.0 && self.test_ratio < 1.0) {
            return Err(Error::Config(format!("test_ratio {} not in (0, 1)", self.test_ratio)));
        }
        if !(self.val_ratio_of_train >= 0.0 && self.val_ratio_of_train < 1.0) {
            return Err(Error::Config(format!(
                "val_ratio_of_train {} not in [0, 1)",
                self.val_ratio_of_train
            )));
        }
        Ok(())
    }

    /// (test, validation) holdout sizes for a user with `n` interactions.
    pub fn holdout_sizes(&self, n: usize) -> (usize, usize) {
        let keep = self.min_train_per_user;
        let test = round_half_up(n as f64 * self.test_ratio).min(n.saturating_sub(keep));
        let rest = n - test;
        let val = round_half_up(rest as f64 * self.val_ratio_of_train).min(rest.saturating_sub(keep));
        (test, val)
    }
}

fn round_half_up(x: f64) -> usize {
    (x + 0.5).floor() as usize
}

/// Fisher-Yates with multiply-shift bounded draws from the stream.
fn shuffle<T>(items: &mut [T], rng: &mut impl RngCore) {
    for i in (1..items.len()).rev() {
        let j = ((u128::from(rng.next_u64()) * (i as u128 + 1)) >> 64) as usize;
        items.swap(i, j);
    }
}

/// Holdout before cold-start purging; exposed for conservation checks.
pub fn raw_split(
    interactions: &InteractionSet,
    cfg: &SplitConfig,
) -> Result<(InteractionSet, InteractionSet, InteractionSet)> {
    cfg.validate()?;
    let mut train = InteractionSet::new();
    let mut val = InteractionSet::new();
    let mut test = InteractionSet::new();
    for (user, mut items) in interactions.by_user() {
        let (n_test, n_val) = cfg.holdout_sizes(items.len());
        let mut stream = rng::token_stream(cfg.seed, SPLIT_STREAM, user);
        shuffle(&mut items, &mut stream);
        for (k, item) in items.into_iter().enumerate() {
            let target = if k < n_test {
                &mut test
            } else if k < n_test + n_val {
                &mut val
            } else {
                &mut train
            };
            target.insert(user, item)?;
        }
    }
    Ok((train, val, test))
}

pub fn split(interactions: &InteractionSet, cfg: &SplitConfig) -> Result<SplitBundle> {
    if interactions.is_empty() {
        return Err(Error::Degenerate("no interactions to split".into()));
    }
    let (train, val, test) = raw_split(interactions, cfg)?;
    if train.is_empty() {
        return Err(Error::Degenerate("training set is empty".into()));
    }
    let index = IndexMap::from_training(&train);
    let known = |u: &str, i: &str| index.user(u).is_some() && index.item(i).is_some();
    let validation = val.filtered(known);
    let test = test.filtered(known);
    Ok(SplitBundle {
        train,
        validation,
        test,
        index,
        seed: cfg.seed,
    })
}

/// Reorder feature rows so row `k` belongs to the item with dense index `k`.
pub fn remap_features(features: &FeatureMatrix, index: &IndexMap) -> Result<FeatureMatrix> {
    let dim = features.dim();
    let mut values = Vec::with_capacity(index.num_items() * dim);
    for token in index.items() {
        let row = features
            .row_of(token)
            .ok_or_else(|| Error::MissingFeatureRow(token.clone()))?;
        values.extend_from_slice(row);
    }
    FeatureMatrix::new(features.modality(), dim, index.items().to_vec(), values)
}

#[derive(Serialize, Deserialize)]
struct SplitMeta {
    seed: u64,
}

/// Persist as `train.tsv`, `validation.tsv`, `test.tsv` (dense indices),
/// `users.tsv` / `items.tsv` (token, index) and `split.json`.
pub fn save_bundle(bundle: &SplitBundle, dir: impl AsRef<Path>) -> Result<()> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    for (name, set) in [
        ("train.tsv", &bundle.train),
        ("validation.tsv", &bundle.validation),
        ("test.tsv", &bundle.test),
    ] {
        let mut buf = String::new();
        for (u, i) in bundle.index.encode(set)? {
            buf.push_str(&format!("{u}\t{i}\n"));
        }
        write_atomic(&dir.join(name), buf.as_bytes())?;
    }
    for (name, tokens) in [("users.tsv", bundle.index.users()), ("items.tsv", bundle.index.items())] {
        let mut buf = String::new();
        for (k, t) in tokens.iter().enumerate() {
            buf.push_str(&format!("{t}\t{k}\n"));
        }
        write_atomic(&dir.join(name), buf.as_bytes())?;
    }
    let meta = serde_json::to_string(&SplitMeta { seed: bundle.seed }).expect("plain struct serializes");
    write_atomic(&dir.join("split.json"), meta.as_bytes())
}

pub fn load_bundle(dir: impl AsRef<Path>) -> Result<SplitBundle> {
    let dir = dir.as_ref();
    let read = |name: &str| {
        let p = dir.join(name);
        fs::read_to_string(&p).map_err(|e| Error::io(&p, e))
    };
    let tokens = |text: String| -> Result<Vec<String>> {
        let mut out = Vec::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
            let (tok, idx) = line.split_once('\t').ok_or_else(|| Error::Malformed {
                line: n + 1,
                reason: "expected token<TAB>index".into(),
            })?;
            if idx.trim().parse::<usize>().ok() != Some(out.len()) {
                return Err(Error::Malformed {
                    line: n + 1,
                    reason: "indices must be contiguous from 0".into(),
                });
            }
            out.push(tok.to_owned());
        }
        Ok(out)
    };
    let index = IndexMap::from_tokens(tokens(read("users.tsv")?)?, tokens(read("items.tsv")?)?)?;
    let decode = |text: String| -> Result<InteractionSet> {
        let mut set = InteractionSet::new();
        for (n, line) in text.lines().enumerate().filter(|(_, l)| !l.is_empty()) {
            let bad = || Error::Malformed {
                line: n + 1,
                reason: format!("bad dense pair {line:?}"),
            };
            let (u, i) = line.split_once('\t').ok_or_else(bad)?;
            let u: usize = u.trim().parse().map_err(|_| bad())?;
            let i: usize = i.trim().parse().map_err(|_| bad())?;
            let (Some(ut), Some(it)) = (index.user_token(u), index.item_token(i)) else {
                return Err(bad());
            };
            set.insert(ut, it)?;
        }
        Ok(set)
    };
    let meta: SplitMeta =
        serde_json::from_str(&read("split.json")?).map_err(|e| Error::Config(format!("split.json: {e}")))?;
    Ok(SplitBundle {
        train: decode(read("train.tsv")?)?,
        validation: decode(read("validation.tsv")?)?,
        test: decode(read("test.tsv")?)?,
        index,
        seed: meta.seed,
    })
}

/// Write to a sibling temp file and rename over the target.
pub fn write_atomic(path: &Path, bytes: &[u8]) -> Result<()> {
    let dir = match path.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let mut tmp = tempfile::NamedTempFile::new_in(dir).map_err(|e| Error::io(dir, e))?;
    tmp.write_all(bytes).map_err(|e| Error::io(path, e))?;
    #[cfg(unix)]
    {
        use std::os::unix::fs::PermissionsExt;
        tmp.as_file()
            .set_permissions(fs::Permissions::from_mode(0o644))
            .map_err(|e| Error::io(path, e))?;
    }
    tmp.persist(path).map_err(|e| Error::io(path, e.error))?;
    Ok(())
}

/// Items that are indexed but never appear in a training interaction; always
/// empty for a train-anchored index, kept as a sanity helper.
pub fn uncovered_tokens(bundle: &SplitBundle) -> Vec<String> {
    let seen: HashSet<&str> = bundle.train.items().into_iter().collect();
    bundle
        .index
        .items()
        .iter()
        .filter(|t| !seen.contains(t.as_str()))
        .cloned()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::Modality;

    fn user_with(n: usize) -> InteractionSet {
        InteractionSet::from_pairs((0..n).map(|i| ("u".to_string(), format!("i{i}")))).unwrap()
    }

    #[test]
    fn ten_interactions_default_ratios() {
        let cfg = SplitConfig::default();
        assert_eq!(cfg.holdout_sizes(10), (2, 1));
        let (train, val, test) = raw_split(&user_with(10), &cfg).unwrap();
        assert_eq!((train.len(), val.len(), test.len()), (7, 1, 2));
    }

    #[test]
    fn single_interaction_stays_in_train() {
        let cfg = SplitConfig::default();
        assert_eq!(cfg.holdout_sizes(1), (0, 0));
        let b = split(&user_with(1), &cfg).unwrap();
        assert_eq!((b.train.len(), b.validation.len(), b.test.len()), (1, 0, 0));
    }

    #[test]
    fn cap_keeps_min_train() {
        let cfg = SplitConfig {
            test_ratio: 0.9,
            min_train_per_user: 2,
            ..Default::default()
        };
        assert_eq!(cfg.holdout_sizes(4), (2, 0));
    }

    #[test]
    fn same_seed_same_bundle() {
        let data = InteractionSet::from_pairs(
            (0..40).map(|k| (format!("u{}", k % 5), format!("i{}", (k * 7) % 13))),
        )
        .unwrap();
        let cfg = SplitConfig::default();
        assert_eq!(split(&data, &cfg).unwrap(), split(&data, &cfg).unwrap());
        let other = SplitConfig { seed: 7, ..cfg };
        assert_ne!(split(&data, &cfg).unwrap().test, split(&data, &other).unwrap().test);
    }

    #[test]
    fn empty_input_is_degenerate() {
        assert!(matches!(
            split(&InteractionSet::new(), &SplitConfig::default()),
            Err(Error::Degenerate(_))
        ));
    }

    #[test]
    fn invalid_ratios_rejected() {
        let cfg = SplitConfig {
            test_ratio: 1.0,
            ..Default::default()
        };
        assert!(matches!(split(&user_with(3), &cfg), Err(Error::Config(_))));
    }

    fn fm(ids: &[&str], values: Vec<f32>) -> FeatureMatrix {
        FeatureMatrix::new(Modality::Visual, 2, ids.iter().map(|s| s.to_string()).collect(), values).unwrap()
    }

    #[test]
    fn remap_permutes_rows() {
        let f = fm(&["i2", "i1"], vec![2.0, 2.5, 1.0, 1.5]);
        let index = IndexMap::from_tokens(vec!["u".into()], vec!["i1".into(), "i2".into()]).unwrap();
        let r = remap_features(&f, &index).unwrap();
        assert_eq!(r.row_ids(), ["i1", "i2"]);
        assert_eq!(r.values(), &[1.0, 1.5, 2.0, 2.5]);
    }

    #[test]
    fn remap_identity_is_bitwise_and_idempotent() {
        let f = fm(&["a", "b"], vec![0.1, -0.0, f32::MIN_POSITIVE, 3.25]);
        let index = IndexMap::from_tokens(vec!["u".into()], vec!["a".into(), "b".into()]).unwrap();
        let once = remap_features(&f, &index).unwrap();
        assert_eq!(once, f);
        assert_eq!(remap_features(&once, &index).unwrap(), once);
    }

    #[test]
    fn remap_missing_row() {
        let f = fm(&["i1"], vec![0.0, 0.0]);
        let index = IndexMap::from_tokens(vec![], vec!["i1".into(), "i3".into()]).unwrap();
        assert!(matches!(remap_features(&f, &index), Err(Error::MissingFeatureRow(t)) if t == "i3"));
    }

    #[test]
    fn bundle_persistence_round_trip() {
        let data = InteractionSet::from_pairs(
            (0..30).map(|k| (format!("u{}", k % 4), format!("i{}", (k * 5) % 11))),
        )
        .unwrap();
        let b = split(&data, &SplitConfig::default()).unwrap();
        let dir = tempfile::tempdir().unwrap();
        save_bundle(&b, dir.path()).unwrap();
        assert_eq!(load_bundle(dir.path()).unwrap(), b);
        assert!(uncovered_tokens(&b).is_empty());
    }
}
