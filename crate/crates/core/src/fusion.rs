//! Classical fusion baselines: CombSUM over min-max normalized scores,
//! CombMNZ, and Reciprocal Rank Fusion.
//!
//! Per-item contributions are summed in ascending order of value, so the
//! fused score does not depend on the order the sources are supplied in.
//! Ties in the fused score break by ascending item id.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{ranked_from_scores, sort_by_score_desc, Entry, ItemId, QueryId, RankedList, ScoreMatrix};

pub const DEFAULT_RRF_K: f64 = 60.0;
pub const DEFAULT_DEPTH_POOL: usize = 100;

/// Non-negative weight per retriever tag.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(transparent)]
pub struct FusionWeights(BTreeMap<String, f64>);

impl FusionWeights {
    pub fn new(weights: BTreeMap<String, f64>) -> Result<Self> {
        if let Some((tag, w)) = weights.iter().find(|(_, w)| !w.is_finite() || **w < 0.0) {
            return Err(Error::Config(format!("weight for {tag:?} must be a non-negative number, got {w}")));
        }
        if !weights.values().any(|w| *w > 0.0) {
            return Err(Error::Config("at least one fusion weight must be positive".into()));
        }
        Ok(Self(weights))
    }

    pub fn uniform<S: AsRef<str>>(tags: impl IntoIterator<Item = S>) -> Self {
        Self(tags.into_iter().map(|t| (t.as_ref().to_string(), 1.0)).collect())
    }

    pub fn get(&self, tag: &str) -> Option<f64> {
        self.0.get(tag).copied()
    }

    pub fn as_map(&self) -> &BTreeMap<String, f64> {
        &self.0
    }
}

impl FromStr for FusionWeights {
    type Err = Error;

    /// Parses `tag=w,tag=w`.
    fn from_str(s: &str) -> Result<Self> {
        let mut map = BTreeMap::new();
        for part in s.split(',').map(str::trim).filter(|p| !p.is_empty()) {
            let (tag, w) = part
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("weight {part:?} is not tag=value")))?;
            let w: f64 = w
                .trim()
                .parse()
                .map_err(|_| Error::Config(format!("weight {part:?} has a non-numeric value")))?;
            map.insert(tag.trim().to_string(), w);
        }
        Self::new(map)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RrfConfig {
    #[serde(default = "default_rrf_k")]
    pub k: f64,
}

fn default_rrf_k() -> f64 {
    DEFAULT_RRF_K
}

impl Default for RrfConfig {
    fn default() -> Self {
        Self { k: DEFAULT_RRF_K }
    }
}

impl RrfConfig {
    pub fn new(k: f64) -> Result<Self> {
        if !(k.is_finite() && k > 0.0) {
            return Err(Error::Config(format!("RRF k must be positive, got {k}")));
        }
        Ok(Self { k })
    }
}

/// CombMNZ hit counting: an item counts as retrieved by a source when it is
/// in that source's top `depth_pool` for the query.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct MnzConfig {
    pub depth_pool: usize,
}

impl Default for MnzConfig {
    fn default() -> Self {
        Self {
            depth_pool: DEFAULT_DEPTH_POOL,
        }
    }
}

/// Maps each score to `(s - min) / (max - min)`; a constant row maps to 0.
pub fn minmax_normalize(row: &BTreeMap<ItemId, f64>) -> BTreeMap<ItemId, f64> {
    let (min, max) = row
        .values()
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &s| (lo.min(s), hi.max(s)));
    let range = max - min;
    row.iter()
        .map(|(item, &s)| {
            let v = if range > 0.0 { (s - min) / range } else { 0.0 };
            (item.clone(), v)
        })
        .collect()
}

fn order_independent_sum(mut terms: Vec<f64>) -> f64 {
    terms.sort_by(f64::total_cmp);
    terms.into_iter().sum()
}

fn top_depth(tag: &str, query: &QueryId, scores: HashMap<&ItemId, Vec<f64>>, depth: usize) -> Result<RankedList> {
    let mut fused: Vec<(&ItemId, f64)> = scores
        .into_iter()
        .map(|(item, terms)| (item, order_independent_sum(terms)))
        .collect();
    sort_by_score_desc(&mut fused);
    fused.truncate(depth);
    let entries = fused
        .into_iter()
        .map(|(item, s)| Entry {
            item: item.clone(),
            score: Some(s),
        })
        .collect();
    RankedList::new(tag, query.clone(), entries)
}

fn weighted_terms<'a>(
    matrices: &'a [ScoreMatrix],
    weights: &FusionWeights,
    query: &QueryId,
) -> Result<HashMap<&'a ItemId, Vec<f64>>> {
    if matrices.is_empty() {
        return Err(Error::NoLists);
    }
    let mut terms: HashMap<&ItemId, Vec<f64>> = HashMap::new();
    for m in matrices {
        let row = m.row(query).ok_or_else(|| Error::UnknownQuery(query.to_string()))?;
        let w = weights
            .get(m.retriever_tag())
            .ok_or_else(|| Error::MissingWeight(m.retriever_tag().to_string()))?;
        for (item, norm) in minmax_normalize(row) {
            // keys of the normalized map mirror the row, so borrow from the row
            let (key, _) = row.get_key_value(&item).expect("normalized key comes from row");
            terms.entry(key).or_default().push(w * norm);
        }
    }
    Ok(terms)
}

/// Weighted sum of per-source min-max normalized scores. Items absent from a
/// source's row contribute 0 for that source.
pub fn comb_sum(matrices: &[ScoreMatrix], weights: &FusionWeights, query: &QueryId, depth: usize) -> Result<RankedList> {
    let terms = weighted_terms(matrices, weights, query)?;
    top_depth("combsum", query, terms, depth)
}

/// CombSUM multiplied by the number of sources that retrieved the item.
pub fn comb_mnz(
    matrices: &[ScoreMatrix],
    weights: &FusionWeights,
    query: &QueryId,
    depth: usize,
    cfg: &MnzConfig,
) -> Result<RankedList> {
    let terms = weighted_terms(matrices, weights, query)?;
    let mut hits: HashMap<ItemId, usize> = HashMap::new();
    for m in matrices {
        for item in ranked_from_scores(m, query, cfg.depth_pool)?.items() {
            *hits.entry(item.clone()).or_default() += 1;
        }
    }
    let terms = terms
        .into_iter()
        .map(|(item, t)| {
            let h = hits.get(item).copied().unwrap_or(0) as f64;
            (item, vec![h * order_independent_sum(t)])
        })
        .collect();
    top_depth("combmnz", query, terms, depth)
}

/// Reciprocal Rank Fusion: `sum over lists of 1 / (k + rank)`, ranks 1-based.
pub fn rrf(lists: &[RankedList], cfg: &RrfConfig, depth: usize) -> Result<RankedList> {
    let first = lists.first().ok_or(Error::NoLists)?;
    if let Some(other) = lists.iter().find(|l| l.query() != first.query()) {
        return Err(Error::MixedQueries(first.query().to_string(), other.query().to_string()));
    }
    let mut terms: HashMap<&ItemId, Vec<f64>> = HashMap::new();
    for list in lists {
        for (pos, item) in list.items().enumerate() {
            terms.entry(item).or_default().push(1.0 / (cfg.k + (pos + 1) as f64));
        }
    }
    top_depth("rrf", first.query(), terms, depth)
}

/// Every tag referenced by the matrices, for building uniform weights.
pub fn matrix_tags(matrices: &[ScoreMatrix]) -> Vec<&str> {
    let mut seen = HashSet::new();
    matrices
        .iter()
        .map(ScoreMatrix::retriever_tag)
        .filter(|t| seen.insert(*t))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn q() -> QueryId {
        QueryId::new("q").unwrap()
    }

    fn row(pairs: &[(&str, f64)]) -> BTreeMap<ItemId, f64> {
        pairs.iter().map(|(k, v)| (ItemId::new(*k).unwrap(), *v)).collect()
    }

    fn matrix(tag: &str, pairs: &[(&str, f64)]) -> ScoreMatrix {
        ScoreMatrix::new(tag, [(q(), row(pairs))].into_iter().collect()).unwrap()
    }

    fn list(tag: &str, items: &[&str]) -> RankedList {
        RankedList::from_items(tag, q(), items.iter().map(|s| ItemId::new(*s).unwrap()).collect()).unwrap()
    }

    fn ranked(l: &RankedList) -> Vec<(&str, f64)> {
        l.entries().iter().map(|e| (e.item.as_str(), e.score.unwrap())).collect()
    }

    #[test]
    fn minmax_examples() {
        assert_eq!(minmax_normalize(&row(&[("a", 2.0), ("b", 4.0), ("c", 3.0)])), row(&[("a", 0.0), ("b", 1.0), ("c", 0.5)]));
        assert_eq!(minmax_normalize(&row(&[("a", 5.0), ("b", 5.0)])), row(&[("a", 0.0), ("b", 0.0)]));
        assert_eq!(minmax_normalize(&row(&[("a", 7.0)])), row(&[("a", 0.0)]));
    }

    #[test]
    fn comb_sum_symmetric_sources_tie_by_id() {
        let ms = [matrix("m1", &[("a", 1.0), ("b", 0.0)]), matrix("m2", &[("a", 0.0), ("b", 1.0)])];
        let out = comb_sum(&ms, &FusionWeights::uniform(["m1", "m2"]), &q(), 2).unwrap();
        assert_eq!(ranked(&out), [("a", 1.0), ("b", 1.0)]);
        assert_eq!(out.retriever_tag(), "combsum");
    }

    #[test]
    fn comb_sum_single_source_matches_score_order() {
        let m = matrix("m1", &[("a", 0.3), ("b", 0.9), ("c", -2.0), ("d", 0.3)]);
        let fused = comb_sum(std::slice::from_ref(&m), &FusionWeights::uniform(["m1"]), &q(), 4).unwrap();
        let direct = ranked_from_scores(&m, &q(), 4).unwrap();
        assert!(fused.items().eq(direct.items()));
    }

    #[test]
    fn zero_weight_source_is_ignored() {
        let m1 = matrix("m1", &[("a", 0.1), ("b", 0.7), ("c", 0.4)]);
        let m2 = matrix("m2", &[("a", 0.9), ("b", 0.0), ("c", 0.5)]);
        let w: FusionWeights = "m1=2,m2=0".parse().unwrap();
        let fused = comb_sum(&[m1.clone(), m2], &w, &q(), 3).unwrap();
        let alone = ranked_from_scores(&m1, &q(), 3).unwrap();
        assert!(fused.items().eq(alone.items()));
    }

    #[test]
    fn weights_validation() {
        assert!("a=-1".parse::<FusionWeights>().is_err());
        assert!("a=0".parse::<FusionWeights>().is_err());
        assert!("a".parse::<FusionWeights>().is_err());
        let ms = [matrix("m1", &[("a", 1.0)])];
        assert!(matches!(
            comb_sum(&ms, &FusionWeights::uniform(["other"]), &q(), 1),
            Err(Error::MissingWeight(_))
        ));
        assert!(matches!(
            comb_sum(&ms, &FusionWeights::uniform(["m1"]), &QueryId::new("zz").unwrap(), 1),
            Err(Error::UnknownQuery(_))
        ));
    }

    #[test]
    fn comb_mnz_multiplies_by_hits() {
        // b sits in m1 and m2 only; a in all three
        let ms = [
            matrix("m1", &[("a", 0.0), ("b", 1.0), ("c", 0.5)]),
            matrix("m2", &[("a", 1.0), ("b", 0.6), ("d", 0.0)]),
            matrix("m3", &[("a", 1.0), ("c", 0.0)]),
        ];
        let w = FusionWeights::uniform(["m1", "m2", "m3"]);
        let sum = comb_sum(&ms, &w, &q(), 10).unwrap();
        let mnz = comb_mnz(&ms, &w, &q(), 10, &MnzConfig::default()).unwrap();
        let sum: HashMap<_, _> = ranked(&sum).into_iter().collect();
        let mnz: HashMap<_, _> = ranked(&mnz).into_iter().collect();
        assert!((sum["b"] - 1.6).abs() < 1e-12);
        assert!((mnz["b"] - 3.2).abs() < 1e-12);
        assert!((mnz["a"] - 3.0 * sum["a"]).abs() < 1e-12);
        assert!((mnz["d"] - sum["d"]).abs() < 1e-12);
    }

    #[test]
    fn comb_mnz_depth_pool_limits_hits() {
        let ms = [
            matrix("m1", &[("a", 0.9), ("b", 0.8), ("c", 0.1)]),
            matrix("m2", &[("a", 0.1), ("b", 0.8), ("c", 0.9)]),
        ];
        let w = FusionWeights::uniform(["m1", "m2"]);
        let mnz = comb_mnz(&ms, &w, &q(), 3, &MnzConfig { depth_pool: 1 }).unwrap();
        let got: HashMap<_, _> = ranked(&mnz).into_iter().collect();
        // b is never in a top-1, so its hit count is zero
        assert_eq!(got["b"], 0.0);
        assert!((got["a"] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn rrf_examples() {
        let out = rrf(&[list("x", &["a", "b"]), list("y", &["a", "c"])], &RrfConfig::default(), 3).unwrap();
        let got = ranked(&out);
        assert_eq!(got[0].0, "a");
        assert!((got[0].1 - 2.0 / 61.0).abs() < 1e-15);
        assert!((got[0].1 - 0.032787).abs() < 1e-6);

        // consensus at rank 2 beats a single rank-1 vote
        let out = rrf(&[list("x", &["s", "c"]), list("y", &["t", "c"])], &RrfConfig::default(), 3).unwrap();
        assert_eq!(ranked(&out)[0].0, "c");
        assert!((ranked(&out)[0].1 - 2.0 / 62.0).abs() < 1e-15);
        assert!(ranked(&out)[1].1 < ranked(&out)[0].1);
    }

    #[test]
    fn rrf_single_list_preserves_order() {
        for k in [0.5, 1.0, 60.0, 1e6] {
            let l = list("x", &["d", "a", "c", "b"]);
            let out = rrf(std::slice::from_ref(&l), &RrfConfig::new(k).unwrap(), 4).unwrap();
            assert!(out.items().eq(l.items()));
        }
        assert!(RrfConfig::new(0.0).is_err());
    }

    #[test]
    fn rrf_rejects_mixed_queries() {
        let other = RankedList::from_items("z", QueryId::new("other").unwrap(), vec![]).unwrap();
        assert!(rrf(&[list("x", &["a"]), other], &RrfConfig::default(), 1).is_err());
    }
}
