//! Raw interaction/metadata parsing and the item pre-filter.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs::File;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde_json::Value;

use crate::data::{InteractionSet, ItemMetadata};
use crate::error::{Error, Result};

/// `user<TAB>item[<TAB>...]`, no header. Extra columns are ignored.
pub fn parse_interactions(path: impl AsRef<Path>) -> Result<InteractionSet> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_interactions(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_interactions(reader: impl BufRead) -> Result<InteractionSet> {
    let mut set = InteractionSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let mut fields = line.split('\t');
        let (Some(user), Some(item)) = (fields.next(), fields.next()) else {
            return Err(Error::Malformed {
                line: n + 1,
                reason: "expected at least two tab-separated fields".into(),
            });
        };
        let (user, item) = (user.trim(), item.trim());
        if user.is_empty() || item.is_empty() {
            return Err(Error::Malformed {
                line: n + 1,
                reason: "empty user or item token".into(),
            });
        }
        set.insert(user, item)?;
    }
    Ok(set)
}

/// JSON-lines with `item` (or the Amazon dump's `asin`), optional `imUrl`
/// and `description`. Other keys land in `extra`.
pub fn parse_item_metadata(path: impl AsRef<Path>) -> Result<Vec<ItemMetadata>> {
    let path = path.as_ref();
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_item_metadata(BufReader::new(file)).map_err(|e| match e {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    })
}

pub fn read_item_metadata(reader: impl BufRead) -> Result<Vec<ItemMetadata>> {
    let mut out = Vec::new();
    let mut seen = HashSet::new();
    for (n, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io("<reader>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let malformed = |reason: String| Error::Malformed { line: n + 1, reason };
        let value: Value = serde_json::from_str(&line).map_err(|e| malformed(e.to_string()))?;
        let Value::Object(obj) = value else {
            return Err(malformed("expected a JSON object".into()));
        };
        let token = match obj.get("item").or_else(|| obj.get("asin")) {
            Some(Value::String(s)) if !s.is_empty() => s.clone(),
            Some(Value::Number(n)) => n.to_string(),
            _ => return Err(malformed("missing item identifier".into())),
        };
        if !seen.insert(token.clone()) {
            return Err(Error::DuplicateItem(token));
        }
        let mut meta = ItemMetadata {
            item_token: token,
            ..Default::default()
        };
        let mut extra = BTreeMap::new();
        for (k, v) in obj {
            match k.as_str() {
                "item" | "asin" => {}
                "imUrl" => meta.image_url = text_of(&v),
                "description" => meta.description = text_of(&v),
                _ => {
                    extra.insert(k, text_of(&v).unwrap_or_default());
                }
            }
        }
        meta.extra = extra;
        out.push(meta);
    }
    Ok(out)
}

fn text_of(v: &Value) -> Option<String> {
    match v {
        Value::Null => None,
        Value::String(s) => Some(s.clone()),
        other => Some(other.to_string()),
    }
}

/// Default URL oracle: an absolute http(s) URL with a host. No network access.
pub fn syntactic_url_check(url: &str) -> bool {
    match url::Url::parse(url.trim()) {
        Ok(u) => matches!(u.scheme(), "http" | "https") && u.host_str().is_some_and(|h| !h.is_empty()),
        Err(_) => false,
    }
}

/// Empty, whitespace-only or a literal NaN.
pub fn description_is_invalid(desc: Option<&str>) -> bool {
    match desc.map(str::trim) {
        None => true,
        Some(d) => d.is_empty() || d.eq_ignore_ascii_case("nan"),
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct FilterReport {
    pub items_removed_missing_visual: usize,
    pub items_removed_missing_textual: usize,
    /// Items seen in interactions but absent from the metadata.
    pub items_removed_no_metadata: usize,
    /// Distinct removed items (an item may fail several checks).
    pub items_removed: usize,
    pub interactions_dropped: usize,
    pub items_before: usize,
    pub items_after: usize,
    pub users_before: usize,
    pub users_after: usize,
}

/// Remove items lacking a valid image URL or description, together with all
/// of their interactions. Users left with no interactions disappear.
pub fn prefilter(
    interactions: &InteractionSet,
    metadata: &[ItemMetadata],
    url_validity: impl Fn(&str) -> bool,
) -> (InteractionSet, FilterReport) {
    let meta: HashMap<&str, &ItemMetadata> =
        metadata.iter().map(|m| (m.item_token.as_str(), m)).collect();
    let items = interactions.items();
    let mut report = FilterReport {
        items_before: items.len(),
        users_before: interactions.num_users(),
        ..Default::default()
    };
    let mut removed: HashSet<&str> = HashSet::new();
    for &item in &items {
        let Some(m) = meta.get(item) else {
            report.items_removed_no_metadata += 1;
            removed.insert(item);
            continue;
        };
        let bad_visual = match m.image_url.as_deref() {
            None => true,
            Some(u) => u.trim().is_empty() || !url_validity(item),
        };
        let bad_textual = description_is_invalid(m.description.as_deref());
        if bad_visual {
            report.items_removed_missing_visual += 1;
        }
        if bad_textual {
            report.items_removed_missing_textual += 1;
        }
        if bad_visual || bad_textual {
            removed.insert(item);
        }
    }
    let kept = interactions.filtered(|_, i| !removed.contains(i));
    report.items_removed = removed.len();
    report.interactions_dropped = interactions.len() - kept.len();
    report.items_after = kept.num_items();
    report.users_after = kept.num_users();
    (kept, report)
}

/// Builds the default oracle from metadata: syntactic check of each item's URL.
pub fn syntactic_oracle(metadata: &[ItemMetadata]) -> impl Fn(&str) -> bool + '_ {
    let urls: HashMap<&str, &str> = metadata
        .iter()
        .filter_map(|m| m.image_url.as_deref().map(|u| (m.item_token.as_str(), u)))
        .collect();
    move |item| urls.get(item).is_some_and(|u| syntactic_url_check(u))
}

/// Iteratively drop users and items with fewer than `min_user` / `min_item`
/// interactions until both constraints hold.
pub fn k_core(interactions: &InteractionSet, min_user: usize, min_item: usize) -> InteractionSet {
    let mut current = interactions.clone();
    loop {
        let mut user_deg: HashMap<&str, usize> = HashMap::new();
        let mut item_deg: HashMap<&str, usize> = HashMap::new();
        for (u, i) in current.iter() {
            *user_deg.entry(u).or_default() += 1;
            *item_deg.entry(i).or_default() += 1;
        }
        let next = current.filtered(|u, i| user_deg[u] >= min_user && item_deg[i] >= min_item);
        if next.len() == current.len() {
            return next;
        }
        current = next;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn meta(item: &str, url: Option<&str>, desc: Option<&str>) -> ItemMetadata {
        ItemMetadata {
            item_token: item.into(),
            image_url: url.map(Into::into),
            description: desc.map(Into::into),
            extra: BTreeMap::new(),
        }
    }

    #[test]
    fn parses_and_dedups_tsv() {
        let s = read_interactions("u1\ti1\n u1\ti2\n".as_bytes()).unwrap();
        assert_eq!((s.num_users(), s.num_items(), s.len()), (1, 2, 2));
        let s = read_interactions("u1\ti1\t5\t123\nu1\ti1\n".as_bytes()).unwrap();
        assert_eq!(s.len(), 1);
    }

    #[test]
    fn short_line_is_malformed() {
        let err = read_interactions("u1\ti1\nu1\n".as_bytes()).unwrap_err();
        assert!(matches!(err, Error::Malformed { line: 2, .. }));
    }

    #[test]
    fn parses_metadata_records() {
        let text = r#"{"item":"i1","imUrl":"http://a","description":"d"}
{"item":"i2"}
"#;
        let m = read_item_metadata(text.as_bytes()).unwrap();
        assert_eq!(m[0], meta("i1", Some("http://a"), Some("d")));
        assert_eq!(m[1], meta("i2", None, None));
    }

    #[test]
    fn duplicate_metadata_item_is_rejected() {
        let text = "{\"item\":\"i1\"}\n{\"item\":\"i1\"}\n";
        assert!(matches!(
            read_item_metadata(text.as_bytes()),
            Err(Error::DuplicateItem(t)) if t == "i1"
        ));
        assert!(matches!(
            read_item_metadata("not json\n".as_bytes()),
            Err(Error::Malformed { line: 1, .. })
        ));
    }

    fn fixture() -> (InteractionSet, Vec<ItemMetadata>) {
        let inter = InteractionSet::from_pairs([
            ("u1", "a"),
            ("u1", "b"),
            ("u2", "b"),
            ("u2", "c"),
            ("u3", "a"),
        ])
        .unwrap();
        let metadata = vec![
            meta("a", Some("http://x/a.jpg"), Some("fine")),
            meta("b", Some("http://x/b.jpg"), Some("   ")),
            meta("c", Some("http://x/c.jpg"), Some("ok")),
        ];
        (inter, metadata)
    }

    #[test]
    fn empty_description_removes_item_and_its_interactions() {
        let (inter, metadata) = fixture();
        let (kept, report) = prefilter(&inter, &metadata, |_| true);
        assert_eq!(kept.num_items(), 2);
        assert_eq!(kept.len(), 3);
        assert_eq!(report.interactions_dropped, 2);
        assert_eq!(report.items_removed_missing_textual, 1);
        assert_eq!(report.items_after, report.items_before - report.items_removed);
    }

    #[test]
    fn all_valid_is_identity() {
        let (inter, mut metadata) = fixture();
        metadata[1].description = Some("now valid".into());
        let (kept, report) = prefilter(&inter, &metadata, |_| true);
        assert_eq!(kept, inter);
        assert_eq!(report.items_removed, 0);
        assert_eq!(report.interactions_dropped, 0);
        assert_eq!(report.users_after, report.users_before);
    }

    #[test]
    fn all_urls_invalid_annihilates() {
        let (inter, metadata) = fixture();
        let (kept, report) = prefilter(&inter, &metadata, |_| false);
        assert!(kept.is_empty());
        assert_eq!(report.users_after, 0);
        assert_eq!(report.interactions_dropped, inter.len());
    }

    #[test]
    fn nan_descriptions_and_missing_metadata() {
        assert!(description_is_invalid(Some("NaN")));
        assert!(description_is_invalid(Some(" nan ")));
        assert!(!description_is_invalid(Some("banana")));
        let inter = InteractionSet::from_pairs([("u", "a"), ("u", "ghost")]).unwrap();
        let (kept, report) = prefilter(&inter, &[meta("a", Some("http://x"), Some("d"))], |_| true);
        assert_eq!(kept.len(), 1);
        assert_eq!(report.items_removed_no_metadata, 1);
    }

    #[test]
    fn prefilter_is_idempotent() {
        let (inter, metadata) = fixture();
        let oracle = syntactic_oracle(&metadata);
        let (once, _) = prefilter(&inter, &metadata, &oracle);
        let (twice, report) = prefilter(&once, &metadata, &oracle);
        assert_eq!(once, twice);
        assert_eq!(report.interactions_dropped, 0);
    }

    #[test]
    fn url_syntax() {
        assert!(syntactic_url_check("http://ecx.images-amazon.com/images/I/51.jpg"));
        assert!(!syntactic_url_check("not a url"));
        assert!(!syntactic_url_check("ftp://host/x"));
    }

    #[test]
    fn k_core_removes_light_nodes() {
        let inter = InteractionSet::from_pairs([("u1", "a"), ("u1", "b"), ("u2", "a"), ("u2", "b"), ("u3", "c")]).unwrap();
        let core = k_core(&inter, 2, 2);
        assert_eq!(core.len(), 4);
        assert!(!core.contains("u3", "c"));
    }
}
