//! Duplicate-aware Recall@K and experiment orchestration.
//!
//! A reranked sequence may hold the same item more than once; only its
//! highest-ranked instance counts. A query scores a hit at cutoff `c` when
//! any gold item is among the first `c` distinct items.

mod experiment;
mod report;

use std::collections::{BTreeMap, BTreeSet, HashSet};

use serde::{Deserialize, Serialize};

pub use experiment::{
    fingerprint, load_sources, run_experiment, run_pipeline, AssemblyOptions, ExperimentConfig, LoadedSource, Method, PipelineOutput,
    QueryRun, SourceKind, SourceSpec,
};
pub use report::{emit_report, render_sweep_csv, render_table, ReportFormat};

use crate::error::{Error, Result};
use crate::types::{Direction, ItemId, PermutationStatus, QueryId};

pub const DEFAULT_CUTOFFS: [usize; 3] = [1, 5, 10];

/// First occurrence of each item, order preserved.
pub fn dedup_ranked<'a>(items: impl IntoIterator<Item = &'a ItemId>) -> Vec<ItemId> {
    let mut seen = HashSet::new();
    items
        .into_iter()
        .filter(|i| seen.insert(*i))
        .cloned()
        .collect()
}

/// 1-based position of the first gold item, if any.
pub fn hit_rank(ranked: &[ItemId], gold: &BTreeSet<ItemId>) -> Option<usize> {
    ranked.iter().position(|i| gold.contains(i)).map(|p| p + 1)
}

/// `{cutoff: 1 if a gold item is in the first cutoff items else 0}`.
pub fn recall_at(ranked: &[ItemId], gold: &BTreeSet<ItemId>, cutoffs: &[usize]) -> Result<BTreeMap<usize, u8>> {
    if gold.is_empty() {
        return Err(Error::Config("gold set is empty".into()));
    }
    let hit = hit_rank(ranked, gold);
    Ok(cutoffs
        .iter()
        .map(|&c| (c, u8::from(hit.is_some_and(|h| h <= c))))
        .collect())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct QueryOutcome {
    pub hit_rank: Option<usize>,
    pub latency_ms: Option<f64>,
    pub status: Option<PermutationStatus>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub name: String,
    pub dataset: String,
    pub method: String,
    pub direction: Direction,
    pub cutoffs: Vec<usize>,
    pub per_query: BTreeMap<QueryId, QueryOutcome>,
    pub aggregate: BTreeMap<usize, f64>,
    pub mean_latency_ms: Option<f64>,
    pub p50_latency_ms: Option<f64>,
    pub p95_latency_ms: Option<f64>,
    pub config_fingerprint: String,
    /// Queries present in the ranking but absent from the gold table.
    #[serde(default)]
    pub unknown_queries: Vec<QueryId>,
}

/// Labels carried into a report.
#[derive(Debug, Clone, Default)]
pub struct ReportMeta {
    pub name: String,
    pub dataset: String,
    pub method: String,
    pub direction: Direction,
    pub config_fingerprint: String,
}

/// Scores one ranking per query against the gold table. Every gold query is
/// evaluated; a query without a ranking is a miss.
pub fn score(
    rankings: &BTreeMap<QueryId, QueryOutcomeInput>,
    gold: &BTreeMap<QueryId, BTreeSet<ItemId>>,
    cutoffs: &[usize],
    meta: ReportMeta,
) -> Result<EvalReport> {
    validate_cutoffs(cutoffs)?;
    let mut per_query = BTreeMap::new();
    for (q, g) in gold {
        let outcome = match rankings.get(q) {
            Some(input) => {
                let ranked = dedup_ranked(&input.ranked);
                QueryOutcome {
                    hit_rank: hit_rank(&ranked, g),
                    latency_ms: input.latency_ms,
                    status: input.status,
                    error: input.error.clone(),
                }
            }
            None => QueryOutcome {
                hit_rank: None,
                latency_ms: None,
                status: None,
                error: Some("no ranking for query".into()),
            },
        };
        per_query.insert(q.clone(), outcome);
    }

    let n = per_query.len().max(1) as f64;
    let aggregate = cutoffs
        .iter()
        .map(|&c| {
            let hits = per_query.values().filter(|o| o.hit_rank.is_some_and(|h| h <= c)).count();
            (c, hits as f64 / n)
        })
        .collect();

    let mut lat: Vec<f64> = per_query.values().filter_map(|o| o.latency_ms).collect();
    lat.sort_by(f64::total_cmp);
    let mean = (!lat.is_empty()).then(|| lat.iter().sum::<f64>() / lat.len() as f64);

    let unknown_queries = rankings.keys().filter(|q| !gold.contains_key(*q)).cloned().collect();

    Ok(EvalReport {
        name: meta.name,
        dataset: meta.dataset,
        method: meta.method,
        direction: meta.direction,
        cutoffs: cutoffs.to_vec(),
        per_query,
        aggregate,
        mean_latency_ms: mean,
        p50_latency_ms: percentile(&lat, 50.0),
        p95_latency_ms: percentile(&lat, 95.0),
        config_fingerprint: meta.config_fingerprint,
        unknown_queries,
    })
}

/// What the pipeline produced for one query, before scoring.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct QueryOutcomeInput {
    pub ranked: Vec<ItemId>,
    pub latency_ms: Option<f64>,
    pub status: Option<PermutationStatus>,
    pub error: Option<String>,
}

pub(crate) fn validate_cutoffs(cutoffs: &[usize]) -> Result<()> {
    if cutoffs.is_empty() || cutoffs.contains(&0) || cutoffs.windows(2).any(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "recall cutoffs must be positive and strictly ascending, got {cutoffs:?}"
        )));
    }
    Ok(())
}

/// Nearest-rank percentile of sorted values.
fn percentile(sorted: &[f64], p: f64) -> Option<f64> {
    if sorted.is_empty() {
        return None;
    }
    let rank = ((p / 100.0) * sorted.len() as f64).ceil() as usize;
    Some(sorted[rank.clamp(1, sorted.len()) - 1])
}

#[cfg(test)]
mod tests {
    use super::*;

    fn ids(items: &[&str]) -> Vec<ItemId> {
        items.iter().map(|s| ItemId::new(*s).unwrap()).collect()
    }

    fn gold(items: &[&str]) -> BTreeSet<ItemId> {
        ids(items).into_iter().collect()
    }

    #[test]
    fn dedup_examples() {
        assert_eq!(dedup_ranked(&ids(&["b", "a", "c", "a"])), ids(&["b", "a", "c"]));
        assert_eq!(dedup_ranked(&ids(&["x", "y"])), ids(&["x", "y"]));
        assert_eq!(dedup_ranked(&ids(&["a", "a", "a"])), ids(&["a"]));
    }

    #[test]
    fn recall_examples() {
        let r = recall_at(&ids(&["b", "a"]), &gold(&["a"]), &[1, 2]).unwrap();
        assert_eq!(r, BTreeMap::from([(1, 0), (2, 1)]));
        let r = recall_at(&ids(&["b", "c"]), &gold(&["a"]), &[1, 5, 10]).unwrap();
        assert!(r.values().all(|v| *v == 0));
        let r = recall_at(&ids(&["a", "b"]), &gold(&["a"]), &[1, 5]).unwrap();
        assert_eq!(r[&1], 1);
        assert!(recall_at(&ids(&["a"]), &BTreeSet::new(), &[1]).is_err());
    }

    #[test]
    fn highest_instance_counts() {
        let ranked = dedup_ranked(&ids(&["b", "a", "c", "a"]));
        let r = recall_at(&ranked, &gold(&["a"]), &[1, 2]).unwrap();
        assert_eq!(r[&2], 1);
        assert_eq!(hit_rank(&ranked, &gold(&["a"])), Some(2));
    }

    #[test]
    fn score_aggregates_over_gold_queries() {
        let q = |s: &str| QueryId::new(s).unwrap();
        let gold_table = BTreeMap::from([(q("q1"), gold(&["a"])), (q("q2"), gold(&["z"])), (q("q3"), gold(&["c"]))]);
        let rankings = BTreeMap::from([
            (q("q1"), QueryOutcomeInput { ranked: ids(&["a", "b"]), latency_ms: Some(10.0), ..Default::default() }),
            (q("q2"), QueryOutcomeInput { ranked: ids(&["a", "b"]), latency_ms: Some(30.0), ..Default::default() }),
            (q("extra"), QueryOutcomeInput { ranked: ids(&["a"]), ..Default::default() }),
        ]);
        let rep = score(&rankings, &gold_table, &[1, 5], ReportMeta::default()).unwrap();
        assert_eq!(rep.aggregate[&1], 1.0 / 3.0);
        assert_eq!(rep.per_query.len(), 3);
        assert!(rep.per_query[&q("q3")].error.is_some());
        assert_eq!(rep.unknown_queries, vec![q("extra")]);
        assert_eq!(rep.mean_latency_ms, Some(20.0));
        assert_eq!(rep.p50_latency_ms, Some(10.0));
        assert_eq!(rep.p95_latency_ms, Some(30.0));
        assert!(score(&rankings, &gold_table, &[5, 1], ReportMeta::default()).is_err());
    }
}
