//! Domain types shared by every stage of the pipeline.
//!
//! All types are immutable once built; constructors enforce the invariants so
//! downstream code never re-validates.

use std::collections::{BTreeMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

macro_rules! string_id {
    ($(#[$meta:meta])* $name:ident, allow_ws = $allow_ws:expr) => {
        $(#[$meta])*
        #[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
        #[serde(try_from = "String", into = "String")]
        pub struct $name(String);

        impl $name {
            pub fn new(value: impl Into<String>) -> Result<Self> {
                let value = value.into();
                if value.is_empty() {
                    return Err(Error::InvalidId(value, "empty"));
                }
                if !$allow_ws && value.chars().any(char::is_whitespace) {
                    return Err(Error::InvalidId(value, "contains whitespace"));
                }
                Ok(Self(value))
            }

            pub fn as_str(&self) -> &str {
                &self.0
            }
        }

        impl TryFrom<String> for $name {
            type Error = Error;
            fn try_from(value: String) -> Result<Self> {
                Self::new(value)
            }
        }

        impl TryFrom<&str> for $name {
            type Error = Error;
            fn try_from(value: &str) -> Result<Self> {
                Self::new(value)
            }
        }

        impl From<$name> for String {
            fn from(id: $name) -> String {
                id.0
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(&self.0)
            }
        }

        impl std::borrow::Borrow<str> for $name {
            fn borrow(&self) -> &str {
                &self.0
            }
        }
    };
}

string_id!(
    /// Identifier of a retrievable item (a video or a caption).
    ItemId,
    allow_ws = false
);
string_id!(
    /// Identifier of a query.
    QueryId,
    allow_ws = true
);

/// Retrieval direction. Query and candidate modalities swap between the two.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "lowercase")]
pub enum Direction {
    /// Text query, video candidates.
    #[default]
    T2v,
    /// Video query, caption candidates.
    V2t,
}

impl Direction {
    pub fn as_str(self) -> &'static str {
        match self {
            Direction::T2v => "t2v",
            Direction::V2t => "v2t",
        }
    }
}

impl fmt::Display for Direction {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl std::str::FromStr for Direction {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "t2v" => Ok(Direction::T2v),
            "v2t" => Ok(Direction::V2t),
            other => Err(Error::Config(format!("unknown direction {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Entry {
    pub item: ItemId,
    pub score: Option<f64>,
}

/// One retriever's ordered candidates for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct RankedList {
    retriever_tag: String,
    query: QueryId,
    entries: Vec<Entry>,
}

impl RankedList {
    /// Builds a list, rejecting duplicate items, partially scored entries and
    /// scores that increase with position.
    pub fn new(retriever_tag: impl Into<String>, query: QueryId, entries: Vec<Entry>) -> Result<Self> {
        let retriever_tag = retriever_tag.into();
        let mut seen = HashSet::with_capacity(entries.len());
        for e in &entries {
            if !seen.insert(e.item.as_str()) {
                return Err(Error::DuplicateItem {
                    query: query.to_string(),
                    item: e.item.to_string(),
                });
            }
        }
        let scored = entries.iter().filter(|e| e.score.is_some()).count();
        if scored != 0 && scored != entries.len() {
            return Err(Error::InvalidList(format!(
                "query {query}: scores present on {scored} of {} entries",
                entries.len()
            )));
        }
        for pair in entries.windows(2) {
            if let (Some(a), Some(b)) = (pair[0].score, pair[1].score) {
                if b > a || b.is_nan() || a.is_nan() {
                    return Err(Error::InvalidList(format!(
                        "query {query}: scores increase from {a} ({}) to {b} ({})",
                        pair[0].item, pair[1].item
                    )));
                }
            }
        }
        Ok(Self {
            retriever_tag,
            query,
            entries,
        })
    }

    /// Builds an unscored list from items in rank order.
    pub fn from_items(retriever_tag: impl Into<String>, query: QueryId, items: Vec<ItemId>) -> Result<Self> {
        let entries = items.into_iter().map(|item| Entry { item, score: None }).collect();
        Self::new(retriever_tag, query, entries)
    }

    pub fn retriever_tag(&self) -> &str {
        &self.retriever_tag
    }

    pub fn query(&self) -> &QueryId {
        &self.query
    }

    pub fn entries(&self) -> &[Entry] {
        &self.entries
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = &ItemId> {
        self.entries.iter().map(|e| &e.item)
    }

    /// Keeps the first `depth` entries.
    pub fn truncated(&self, depth: usize) -> RankedList {
        RankedList {
            retriever_tag: self.retriever_tag.clone(),
            query: self.query.clone(),
            entries: self.entries.iter().take(depth).cloned().collect(),
        }
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> RankedList {
        self.retriever_tag = tag.into();
        self
    }
}

/// Dense per-query similarity scores from one retriever.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoreMatrix {
    retriever_tag: String,
    rows: BTreeMap<QueryId, BTreeMap<ItemId, f64>>,
}

impl ScoreMatrix {
    pub fn new(retriever_tag: impl Into<String>, rows: BTreeMap<QueryId, BTreeMap<ItemId, f64>>) -> Result<Self> {
        for (q, row) in &rows {
            if row.is_empty() {
                return Err(Error::EmptyRow(q.to_string()));
            }
            if let Some((item, _)) = row.iter().find(|(_, s)| !s.is_finite()) {
                return Err(Error::NonFinite {
                    query: q.to_string(),
                    item: item.to_string(),
                });
            }
        }
        Ok(Self {
            retriever_tag: retriever_tag.into(),
            rows,
        })
    }

    /// Treats each scored ranked list as one row of a matrix.
    pub fn from_ranked_lists<'a>(
        retriever_tag: impl Into<String>,
        lists: impl IntoIterator<Item = &'a RankedList>,
    ) -> Result<Self> {
        let mut rows = BTreeMap::new();
        for list in lists {
            let mut row = BTreeMap::new();
            for e in list.entries() {
                let score = e.score.ok_or_else(|| {
                    Error::InvalidList(format!("query {}: list has no scores", list.query()))
                })?;
                row.insert(e.item.clone(), score);
            }
            rows.insert(list.query().clone(), row);
        }
        Self::new(retriever_tag, rows)
    }

    pub fn retriever_tag(&self) -> &str {
        &self.retriever_tag
    }

    pub fn row(&self, query: &QueryId) -> Option<&BTreeMap<ItemId, f64>> {
        self.rows.get(query)
    }

    pub fn rows(&self) -> &BTreeMap<QueryId, BTreeMap<ItemId, f64>> {
        &self.rows
    }

    pub fn queries(&self) -> impl Iterator<Item = &QueryId> {
        self.rows.keys()
    }

    pub fn with_tag(mut self, tag: impl Into<String>) -> ScoreMatrix {
        self.retriever_tag = tag.into();
        self
    }
}

/// Orders scored items best first, breaking ties by ascending item id.
pub(crate) fn sort_by_score_desc<T>(items: &mut [(T, f64)])
where
    T: AsRef<str>,
{
    items.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.as_ref().cmp(b.0.as_ref())));
}

impl AsRef<str> for ItemId {
    fn as_ref(&self) -> &str {
        &self.0
    }
}

/// The `depth` highest-scoring items of one matrix row, score-descending.
pub fn ranked_from_scores(m: &ScoreMatrix, query: &QueryId, depth: usize) -> Result<RankedList> {
    let row = m.row(query).ok_or_else(|| Error::UnknownQuery(query.to_string()))?;
    let mut scored: Vec<(ItemId, f64)> = row.iter().map(|(i, s)| (i.clone(), *s)).collect();
    sort_by_score_desc(&mut scored);
    scored.truncate(depth);
    let entries = scored
        .into_iter()
        .map(|(item, s)| Entry { item, score: Some(s) })
        .collect();
    RankedList::new(m.retriever_tag(), query.clone(), entries)
}

/// One position of an assembled candidate sequence with its provenance.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Slot {
    pub item: ItemId,
    pub source_tag: String,
    /// 1-based rank of the item in its source list.
    pub source_rank: usize,
}

/// The interleaved, duplicate-preserving sequence handed to the reranker.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CandidateSequence {
    query: QueryId,
    slots: Vec<Slot>,
}

impl CandidateSequence {
    pub fn new(query: QueryId, slots: Vec<Slot>) -> Self {
        Self { query, slots }
    }

    pub fn query(&self) -> &QueryId {
        &self.query
    }

    pub fn slots(&self) -> &[Slot] {
        &self.slots
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn items(&self) -> impl Iterator<Item = &ItemId> {
        self.slots.iter().map(|s| &s.item)
    }

    /// Number of slots holding `item`.
    pub fn multiplicity(&self, item: &ItemId) -> usize {
        self.slots.iter().filter(|s| &s.item == item).count()
    }

    pub fn contains(&self, item: &ItemId) -> bool {
        self.slots.iter().any(|s| &s.item == item)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PermutationStatus {
    Clean,
    Repaired,
    IdentityFallback,
}

impl PermutationStatus {
    pub fn as_str(self) -> &'static str {
        match self {
            PermutationStatus::Clean => "clean",
            PermutationStatus::Repaired => "repaired",
            PermutationStatus::IdentityFallback => "identity_fallback",
        }
    }
}

impl fmt::Display for PermutationStatus {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A bijection on `1..=size`, stored as 1-based slot labels best first.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Permutation {
    order: Vec<usize>,
    status: PermutationStatus,
}

impl Permutation {
    pub fn new(order: Vec<usize>, status: PermutationStatus) -> Result<Self> {
        let size = order.len();
        let mut seen = vec![false; size];
        for &i in &order {
            if i == 0 || i > size || std::mem::replace(&mut seen[i - 1], true) {
                return Err(Error::NotAPermutation { order, size });
            }
        }
        Ok(Self { order, status })
    }

    pub fn identity(size: usize, status: PermutationStatus) -> Self {
        Self {
            order: (1..=size).collect(),
            status,
        }
    }

    pub fn order(&self) -> &[usize] {
        &self.order
    }

    pub fn size(&self) -> usize {
        self.order.len()
    }

    pub fn status(&self) -> PermutationStatus {
        self.status
    }

    pub fn is_identity(&self) -> bool {
        self.order.iter().enumerate().all(|(i, &o)| o == i + 1)
    }

    /// Renders the order as a bracketed array, e.g. `[3, 1, 2]`.
    pub fn render(&self) -> String {
        let parts: Vec<String> = self.order.iter().map(ToString::to_string).collect();
        format!("[{}]", parts.join(", "))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q(s: &str) -> QueryId {
        QueryId::new(s).unwrap()
    }
    fn i(s: &str) -> ItemId {
        ItemId::new(s).unwrap()
    }

    fn matrix(row: &[(&str, f64)]) -> ScoreMatrix {
        let row = row.iter().map(|(k, v)| (i(k), *v)).collect();
        ScoreMatrix::new("m", [(q("q1"), row)].into_iter().collect()).unwrap()
    }

    #[test]
    fn item_ids_reject_empty_and_whitespace() {
        assert!(ItemId::new("").is_err());
        assert!(ItemId::new("a b").is_err());
        assert!(ItemId::new("vid7").is_ok());
        assert!(QueryId::new("").is_err());
    }

    #[test]
    fn ranked_list_invariants() {
        let dup = vec![
            Entry { item: i("a"), score: None },
            Entry { item: i("a"), score: None },
        ];
        assert!(matches!(RankedList::new("t", q("q"), dup), Err(Error::DuplicateItem { .. })));

        let partial = vec![
            Entry { item: i("a"), score: Some(1.0) },
            Entry { item: i("b"), score: None },
        ];
        assert!(RankedList::new("t", q("q"), partial).is_err());

        let increasing = vec![
            Entry { item: i("a"), score: Some(0.1) },
            Entry { item: i("b"), score: Some(0.2) },
        ];
        assert!(RankedList::new("t", q("q"), increasing).is_err());
    }

    #[test]
    fn ranked_from_scores_orders_and_clamps() {
        let m = matrix(&[("a", 0.2), ("b", 0.9), ("c", 0.5)]);
        let l = ranked_from_scores(&m, &q("q1"), 2).unwrap();
        let got: Vec<_> = l.entries().iter().map(|e| (e.item.as_str(), e.score.unwrap())).collect();
        assert_eq!(got, vec![("b", 0.9), ("c", 0.5)]);

        let l = ranked_from_scores(&m, &q("q1"), 10).unwrap();
        assert_eq!(l.len(), 3);

        assert!(matches!(ranked_from_scores(&m, &q("zz"), 1), Err(Error::UnknownQuery(_))));
    }

    #[test]
    fn ranked_from_scores_breaks_ties_by_item_id() {
        let m = matrix(&[("b", 0.5), ("a", 0.5)]);
        let l = ranked_from_scores(&m, &q("q1"), 2).unwrap();
        let got: Vec<_> = l.items().map(ItemId::as_str).collect();
        assert_eq!(got, vec!["a", "b"]);
    }

    #[test]
    fn score_matrix_rejects_bad_rows() {
        let empty = [(q("q1"), BTreeMap::new())].into_iter().collect();
        assert!(matches!(ScoreMatrix::new("m", empty), Err(Error::EmptyRow(_))));
        let nan = [(q("q1"), [(i("a"), f64::NAN)].into_iter().collect())].into_iter().collect();
        assert!(matches!(ScoreMatrix::new("m", nan), Err(Error::NonFinite { .. })));
    }

    #[test]
    fn permutation_rejects_non_bijections() {
        assert!(Permutation::new(vec![1, 1], PermutationStatus::Clean).is_err());
        assert!(Permutation::new(vec![0, 1], PermutationStatus::Clean).is_err());
        assert!(Permutation::new(vec![1, 3], PermutationStatus::Clean).is_err());
        let p = Permutation::new(vec![3, 1, 2], PermutationStatus::Clean).unwrap();
        assert_eq!(p.render(), "[3, 1, 2]");
        assert!(Permutation::identity(4, PermutationStatus::Clean).is_identity());
    }

    #[test]
    fn multiplicity_counts_slots() {
        let slots = ["a", "c", "b", "a"]
            .iter()
            .enumerate()
            .map(|(n, s)| Slot { item: i(s), source_tag: "t".into(), source_rank: n + 1 })
            .collect();
        let seq = CandidateSequence::new(q("q"), slots);
        assert_eq!(seq.multiplicity(&i("a")), 2);
        assert_eq!(seq.multiplicity(&i("z")), 0);
    }
}
