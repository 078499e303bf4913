//! Shared data model: modalities, interactions, item metadata, feature
//! blocks, dense indexing and split bundles.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Content channel a feature block was extracted from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Modality {
    Visual,
    Textual,
    Audio,
    /// Output of an extractor that embeds image and text in one space.
    VisualTextual,
}

impl Modality {
    pub const ALL: [Modality; 4] = [
        Modality::Visual,
        Modality::Textual,
        Modality::Audio,
        Modality::VisualTextual,
    ];

    pub fn code(self) -> u8 {
        match self {
            Modality::Visual => 0,
            Modality::Textual => 1,
            Modality::Audio => 2,
            Modality::VisualTextual => 3,
        }
    }

    pub fn from_code(code: u8) -> Result<Self> {
        Modality::ALL
            .into_iter()
            .find(|m| m.code() == code)
            .ok_or(Error::BadModality(code))
    }

    pub fn name(self) -> &'static str {
        match self {
            Modality::Visual => "visual",
            Modality::Textual => "textual",
            Modality::Audio => "audio",
            Modality::VisualTextual => "visual_textual",
        }
    }
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Modality {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Modality::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Config(format!("unknown modality {s:?}")))
    }
}

/// Deduplicated implicit feedback, kept in first-appearance order.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct InteractionSet {
    entries: Vec<(String, String)>,
    seen: HashSet<(String, String)>,
}

impl InteractionSet {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn from_pairs<U, I>(pairs: impl IntoIterator<Item = (U, I)>) -> Result<Self>
    where
        U: Into<String>,
        I: Into<String>,
    {
        let mut set = Self::new();
        for (u, i) in pairs {
            set.insert(u, i)?;
        }
        Ok(set)
    }

    /// Returns `false` when the pair was already present.
    pub fn insert(&mut self, user: impl Into<String>, item: impl Into<String>) -> Result<bool> {
        let (user, item) = (user.into(), item.into());
        if user.is_empty() || item.is_empty() {
            return Err(Error::EmptyToken { user, item });
        }
        let key = (user, item);
        if self.seen.contains(&key) {
            return Ok(false);
        }
        self.seen.insert(key.clone());
        self.entries.push(key);
        Ok(true)
    }

    pub fn entries(&self) -> &[(String, String)] {
        &self.entries
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.entries.iter().map(|(u, i)| (u.as_str(), i.as_str()))
    }

    pub fn contains(&self, user: &str, item: &str) -> bool {
        self.seen.contains(&(user.to_owned(), item.to_owned()))
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    /// Distinct users in first-appearance order.
    pub fn users(&self) -> Vec<&str> {
        first_appearance(self.entries.iter().map(|(u, _)| u.as_str()))
    }

    /// Distinct items in first-appearance order.
    pub fn items(&self) -> Vec<&str> {
        first_appearance(self.entries.iter().map(|(_, i)| i.as_str()))
    }

    pub fn num_users(&self) -> usize {
        self.users().len()
    }

    pub fn num_items(&self) -> usize {
        self.items().len()
    }

    /// Per-user adjacency lists; users and their items in first-appearance order.
    pub fn by_user(&self) -> Vec<(&str, Vec<&str>)> {
        let mut pos: HashMap<&str, usize> = HashMap::new();
        let mut out: Vec<(&str, Vec<&str>)> = Vec::new();
        for (u, i) in self.iter() {
            let k = *pos.entry(u).or_insert_with(|| {
                out.push((u, Vec::new()));
                out.len() - 1
            });
            out[k].1.push(i);
        }
        out
    }

    /// Keep only the entries accepted by `keep`.
    pub fn filtered(&self, mut keep: impl FnMut(&str, &str) -> bool) -> Self {
        let mut out = Self::new();
        for (u, i) in self.iter() {
            if keep(u, i) {
                out.entries.push((u.to_owned(), i.to_owned()));
                out.seen.insert((u.to_owned(), i.to_owned()));
            }
        }
        out
    }
}

fn first_appearance<'a>(tokens: impl Iterator<Item = &'a str>) -> Vec<&'a str> {
    let mut seen = HashSet::new();
    tokens.filter(|t| seen.insert(*t)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ItemMetadata {
    pub item_token: String,
    pub image_url: Option<String>,
    pub description: Option<String>,
    pub extra: BTreeMap<String, String>,
}

/// Dense per-modality item features. Values are `f32`, row-major.
#[derive(Debug, Clone)]
pub struct FeatureMatrix {
    modality: Modality,
    dim: usize,
    row_ids: Vec<String>,
    values: Vec<f32>,
    lookup: HashMap<String, usize>,
}

impl FeatureMatrix {
    pub fn new(modality: Modality, dim: usize, row_ids: Vec<String>, values: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidFeatures("dim must be positive".into()));
        }
        if values.len() != row_ids.len() * dim {
            return Err(Error::InvalidFeatures(format!(
                "{} values for {} rows of dim {dim}",
                values.len(),
                row_ids.len()
            )));
        }
        if let Some(pos) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::InvalidFeatures(format!(
                "non-finite value in row {:?}",
                row_ids[pos / dim]
            )));
        }
        let mut lookup = HashMap::with_capacity(row_ids.len());
        for (k, id) in row_ids.iter().enumerate() {
            if lookup.insert(id.clone(), k).is_some() {
                return Err(Error::InvalidFeatures(format!("duplicate row id {id:?}")));
            }
        }
        Ok(Self {
            modality,
            dim,
            row_ids,
            values,
            lookup,
        })
    }

    pub fn modality(&self) -> Modality {
        self.modality
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.row_ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.row_ids.is_empty()
    }

    pub fn row_ids(&self) -> &[String] {
        &self.row_ids
    }

    pub fn values(&self) -> &[f32] {
        &self.values
    }

    pub fn row(&self, k: usize) -> &[f32] {
        &self.values[k * self.dim..(k + 1) * self.dim]
    }

    pub fn position(&self, id: &str) -> Option<usize> {
        self.lookup.get(id).copied()
    }

    pub fn row_of(&self, id: &str) -> Option<&[f32]> {
        self.position(id).map(|k| self.row(k))
    }

    pub fn with_modality(mut self, modality: Modality) -> Self {
        self.modality = modality;
        self
    }

    /// Promote to a dense matrix of the training scalar type.
    pub fn to_matrix<T: crate::Scalar>(&self) -> crate::linalg::Matrix<T> {
        crate::linalg::Matrix::from_vec(
            self.len(),
            self.dim,
            self.values.iter().map(|&v| T::of(f64::from(v))).collect(),
        )
    }
}

/// Bitwise equality of values, identical ids and order.
impl PartialEq for FeatureMatrix {
    fn eq(&self, other: &Self) -> bool {
        self.modality == other.modality
            && self.dim == other.dim
            && self.row_ids == other.row_ids
            && self.values.len() == other.values.len()
            && self
                .values
                .iter()
                .zip(&other.values)
                .all(|(a, b)| a.to_bits() == b.to_bits())
    }
}

/// Bijection between raw tokens and contiguous dense indices.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct IndexMap {
    user_fwd: HashMap<String, usize>,
    user_rev: Vec<String>,
    item_fwd: HashMap<String, usize>,
    item_rev: Vec<String>,
}

impl IndexMap {
    /// Indices follow first appearance over the lexicographically sorted
    /// training pairs, so the result does not depend on input order.
    pub fn from_training(train: &InteractionSet) -> Self {
        let mut pairs: Vec<(&str, &str)> = train.iter().collect();
        pairs.sort_unstable();
        let mut map = Self::default();
        for (u, i) in pairs {
            map.add_user(u);
            map.add_item(i);
        }
        map
    }

    /// Build from explicit token lists; position is the dense index.
    pub fn from_tokens(users: Vec<String>, items: Vec<String>) -> Result<Self> {
        let mut map = Self::default();
        for u in users {
            if !map.add_user(&u) {
                return Err(Error::Config(format!("duplicate user token {u:?}")));
            }
        }
        for i in items {
            if !map.add_item(&i) {
                return Err(Error::DuplicateItem(i));
            }
        }
        Ok(map)
    }

    fn add_user(&mut self, u: &str) -> bool {
        if self.user_fwd.contains_key(u) {
            return false;
        }
        self.user_fwd.insert(u.to_owned(), self.user_rev.len());
        self.user_rev.push(u.to_owned());
        true
    }

    fn add_item(&mut self, i: &str) -> bool {
        if self.item_fwd.contains_key(i) {
            return false;
        }
        self.item_fwd.insert(i.to_owned(), self.item_rev.len());
        self.item_rev.push(i.to_owned());
        true
    }

    pub fn user(&self, token: &str) -> Option<usize> {
        self.user_fwd.get(token).copied()
    }

    pub fn item(&self, token: &str) -> Option<usize> {
        self.item_fwd.get(token).copied()
    }

    pub fn user_token(&self, k: usize) -> Option<&str> {
        self.user_rev.get(k).map(String::as_str)
    }

    pub fn item_token(&self, k: usize) -> Option<&str> {
        self.item_rev.get(k).map(String::as_str)
    }

    pub fn users(&self) -> &[String] {
        &self.user_rev
    }

    pub fn items(&self) -> &[String] {
        &self.item_rev
    }

    pub fn num_users(&self) -> usize {
        self.user_rev.len()
    }

    pub fn num_items(&self) -> usize {
        self.item_rev.len()
    }

    /// Dense (user, item) pairs; fails on the first unknown token.
    pub fn encode(&self, set: &InteractionSet) -> Result<Vec<(usize, usize)>> {
        set.iter()
            .map(|(u, i)| {
                let du = self.user(u).ok_or_else(|| Error::UnknownToken(u.to_owned()))?;
                let di = self.item(i).ok_or_else(|| Error::UnknownToken(i.to_owned()))?;
                Ok((du, di))
            })
            .collect()
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SplitBundle {
    pub train: InteractionSet,
    pub validation: InteractionSet,
    pub test: InteractionSet,
    pub index: IndexMap,
    pub seed: u64,
}

/// Binary user×item matrix with row (user) and column (item) access.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InteractionMatrix {
    num_users: usize,
    num_items: usize,
    rows: Vec<Vec<usize>>,
    cols: Vec<Vec<usize>>,
}

impl InteractionMatrix {
    pub fn from_pairs(num_users: usize, num_items: usize, pairs: &[(usize, usize)]) -> Self {
        let mut rows = vec![Vec::new(); num_users];
        let mut cols = vec![Vec::new(); num_items];
        for &(u, i) in pairs {
            assert!(u < num_users && i < num_items, "pair ({u}, {i}) out of bounds");
            rows[u].push(i);
            cols[i].push(u);
        }
        for r in rows.iter_mut().chain(cols.iter_mut()) {
            r.sort_unstable();
            r.dedup();
        }
        Self {
            num_users,
            num_items,
            rows,
            cols,
        }
    }

    pub fn num_users(&self) -> usize {
        self.num_users
    }

    pub fn num_items(&self) -> usize {
        self.num_items
    }

    pub fn nnz(&self) -> usize {
        self.rows.iter().map(Vec::len).sum()
    }

    /// Sorted item indices of a user's row.
    pub fn user_items(&self, u: usize) -> &[usize] {
        &self.rows[u]
    }

    /// Sorted user indices of an item's column.
    pub fn item_users(&self, i: usize) -> &[usize] {
        &self.cols[i]
    }

    pub fn contains(&self, u: usize, i: usize) -> bool {
        self.rows[u].binary_search(&i).is_ok()
    }

    pub fn pairs(&self) -> impl Iterator<Item = (usize, usize)> + '_ {
        self.rows
            .iter()
            .enumerate()
            .flat_map(|(u, items)| items.iter().map(move |&i| (u, i)))
    }

    pub fn to_dense(&self) -> Vec<Vec<u8>> {
        let mut out = vec![vec![0u8; self.num_items]; self.num_users];
        for (u, i) in self.pairs() {
            out[u][i] = 1;
        }
        out
    }
}

pub fn build_interaction_matrix(train: &InteractionSet, index: &IndexMap) -> Result<InteractionMatrix> {
    let pairs = index.encode(train)?;
    Ok(InteractionMatrix::from_pairs(
        index.num_users(),
        index.num_items(),
        &pairs,
    ))
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ValidationReport {
    /// Indexed items lacking a row in a declared modality.
    pub missing_features: Vec<(Modality, String)>,
    /// Feature rows whose id is not an indexed item.
    pub orphan_rows: Vec<(Modality, String)>,
    /// (user, item, "train/test" etc.) pairs present in two splits.
    pub overlaps: Vec<(String, String, &'static str)>,
}

impl ValidationReport {
    pub fn is_valid(&self) -> bool {
        self.missing_features.is_empty() && self.orphan_rows.is_empty() && self.overlaps.is_empty()
    }
}

pub fn validate_bundle(bundle: &SplitBundle, features: &[FeatureMatrix]) -> ValidationReport {
    let mut report = ValidationReport::default();
    for fm in features {
        for item in bundle.index.items() {
            if fm.position(item).is_none() {
                report.missing_features.push((fm.modality(), item.clone()));
            }
        }
        for id in fm.row_ids() {
            if bundle.index.item(id).is_none() {
                report.orphan_rows.push((fm.modality(), id.clone()));
            }
        }
    }
    let pairs: [(&InteractionSet, &InteractionSet, &'static str); 3] = [
        (&bundle.train, &bundle.validation, "train/validation"),
        (&bundle.train, &bundle.test, "train/test"),
        (&bundle.validation, &bundle.test, "validation/test"),
    ];
    for (a, b, label) in pairs {
        for (u, i) in b.iter() {
            if a.contains(u, i) {
                report.overlaps.push((u.to_owned(), i.to_owned(), label));
            }
        }
    }
    report
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(pairs: &[(&str, &str)]) -> InteractionSet {
        InteractionSet::from_pairs(pairs.iter().copied()).unwrap()
    }

    #[test]
    fn interaction_matrix_from_definition() {
        let train = set(&[("A", "x"), ("A", "y"), ("B", "x")]);
        let index = IndexMap::from_training(&train);
        let m = build_interaction_matrix(&train, &index).unwrap();
        assert_eq!(m.to_dense(), vec![vec![1, 1], vec![1, 0]]);
    }

    #[test]
    fn empty_train_gives_zero_matrix() {
        let index = IndexMap::from_tokens(vec!["A".into()], vec!["x".into(), "y".into()]).unwrap();
        let m = build_interaction_matrix(&InteractionSet::new(), &index).unwrap();
        assert_eq!(m.to_dense(), vec![vec![0, 0]]);
        assert_eq!(m.nnz(), 0);
    }

    #[test]
    fn unknown_token_is_reported() {
        let index = IndexMap::from_training(&set(&[("A", "x")]));
        let err = build_interaction_matrix(&set(&[("A", "zz")]), &index).unwrap_err();
        assert!(matches!(err, Error::UnknownToken(t) if t == "zz"));
    }

    #[test]
    fn dedup_is_idempotent() {
        let pairs = [("u1", "i1"), ("u1", "i2"), ("u1", "i1")];
        let mut s = set(&pairs);
        let before = (s.len(), s.num_users(), s.num_items());
        for (u, i) in pairs {
            s.insert(u, i).unwrap();
        }
        assert_eq!(before, (2, 1, 2));
        assert_eq!((s.len(), s.num_users(), s.num_items()), before);
    }

    #[test]
    fn empty_tokens_are_rejected() {
        assert!(matches!(
            InteractionSet::new().insert("", "x"),
            Err(Error::EmptyToken { .. })
        ));
    }

    #[test]
    fn index_is_deterministic_and_contiguous() {
        let a = set(&[("b", "y"), ("a", "z"), ("a", "x")]);
        let b = set(&[("a", "x"), ("a", "z"), ("b", "y")]);
        let ia = IndexMap::from_training(&a);
        assert_eq!(ia, IndexMap::from_training(&b));
        assert_eq!(ia.users(), ["a", "b"]);
        // sorted pairs: (a,x) (a,z) (b,y)
        assert_eq!(ia.items(), ["x", "z", "y"]);
        for (k, t) in ia.items().iter().enumerate() {
            assert_eq!(ia.item(t), Some(k));
        }
    }

    #[test]
    fn row_and_column_sums_match_counts() {
        let train = set(&[("A", "x"), ("A", "y"), ("B", "x"), ("C", "y"), ("C", "z")]);
        let index = IndexMap::from_training(&train);
        let m = build_interaction_matrix(&train, &index).unwrap();
        for (u, items) in train.by_user() {
            assert_eq!(m.user_items(index.user(u).unwrap()).len(), items.len());
        }
        for it in train.items() {
            let count = train.iter().filter(|(_, i)| *i == it).count();
            assert_eq!(m.item_users(index.item(it).unwrap()).len(), count);
        }
    }

    fn bundle() -> SplitBundle {
        let train = set(&[("A", "x"), ("A", "y"), ("B", "x")]);
        let index = IndexMap::from_training(&train);
        SplitBundle {
            train,
            validation: InteractionSet::new(),
            test: set(&[("B", "y")]),
            index,
            seed: 0,
        }
    }

    fn features(ids: &[&str]) -> FeatureMatrix {
        FeatureMatrix::new(
            Modality::Visual,
            2,
            ids.iter().map(|s| s.to_string()).collect(),
            vec![0.5; ids.len() * 2],
        )
        .unwrap()
    }

    #[test]
    fn aligned_bundle_is_valid() {
        let r = validate_bundle(&bundle(), &[features(&["x", "y"])]);
        assert!(r.is_valid());
    }

    #[test]
    fn missing_feature_row_is_listed() {
        let r = validate_bundle(&bundle(), &[features(&["x"])]);
        assert!(!r.is_valid());
        assert_eq!(r.missing_features, vec![(Modality::Visual, "y".to_string())]);
    }

    #[test]
    fn overlap_is_listed() {
        let mut b = bundle();
        b.test.insert("A", "x").unwrap();
        let r = validate_bundle(&b, &[features(&["x", "y"])]);
        assert!(!r.is_valid());
        assert_eq!(r.overlaps, vec![("A".to_string(), "x".to_string(), "train/test")]);
    }

    #[test]
    fn feature_matrix_rejects_nan_and_duplicates() {
        assert!(FeatureMatrix::new(Modality::Textual, 1, vec!["a".into()], vec![f32::NAN]).is_err());
        assert!(FeatureMatrix::new(Modality::Textual, 1, vec!["a".into(), "a".into()], vec![0.0, 1.0]).is_err());
    }
}
