//! Candidate assembly: truncate each retriever's list to `ceil(K / M)`,
//! interleave the truncated lists round-robin and cut the result to `K`.
//!
//! Duplicates are kept by default. An item returned by several retrievers
//! appears once per list, and that multiplicity is the consensus signal the
//! reranker sees.

use std::collections::HashSet;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::types::{CandidateSequence, ItemId, RankedList, Slot};

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssemblyConfig {
    /// Target sequence length.
    pub k: usize,
    #[serde(default = "default_true")]
    pub keep_duplicates: bool,
    /// Within-round visiting order of the retrievers, by tag.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority_order: Option<Vec<String>>,
}

fn default_true() -> bool {
    true
}

impl AssemblyConfig {
    pub fn new(k: usize) -> Self {
        Self {
            k,
            keep_duplicates: true,
            priority_order: None,
        }
    }

    pub fn without_duplicates(mut self) -> Self {
        self.keep_duplicates = false;
        self
    }

    pub fn with_priority(mut self, tags: Vec<String>) -> Self {
        self.priority_order = Some(tags);
        self
    }
}

/// `ceil(k / m)`.
pub fn per_list_depth(k: usize, m: usize) -> usize {
    assert!(k >= 1 && m >= 1, "per_list_depth needs k >= 1 and m >= 1");
    k.div_ceil(m)
}

pub fn round_robin(lists: &[RankedList], cfg: &AssemblyConfig) -> Result<CandidateSequence> {
    let first = lists.first().ok_or(Error::NoLists)?;
    if cfg.k == 0 {
        return Err(Error::Config("K must be at least 1".into()));
    }
    if let Some(other) = lists.iter().find(|l| l.query() != first.query()) {
        return Err(Error::MixedQueries(first.query().to_string(), other.query().to_string()));
    }

    let visit = visiting_order(lists, cfg.priority_order.as_deref())?;
    let depth = per_list_depth(cfg.k, lists.len());

    let mut slots = Vec::with_capacity(cfg.k);
    let mut emitted: HashSet<&ItemId> = HashSet::new();
    'rounds: for round in 0..depth {
        for &li in &visit {
            let list = &lists[li];
            let Some(entry) = list.entries().get(round) else {
                continue;
            };
            if !cfg.keep_duplicates && !emitted.insert(&entry.item) {
                continue;
            }
            slots.push(Slot {
                item: entry.item.clone(),
                source_tag: list.retriever_tag().to_string(),
                source_rank: round + 1,
            });
            if slots.len() == cfg.k {
                break 'rounds;
            }
        }
    }
    Ok(CandidateSequence::new(first.query().clone(), slots))
}

fn visiting_order(lists: &[RankedList], priority: Option<&[String]>) -> Result<Vec<usize>> {
    let Some(priority) = priority else {
        return Ok((0..lists.len()).collect());
    };
    let bad = || {
        let tags: Vec<&str> = lists.iter().map(RankedList::retriever_tag).collect();
        Error::Config(format!("priority order {priority:?} is not a permutation of retriever tags {tags:?}"))
    };
    if priority.len() != lists.len() {
        return Err(bad());
    }
    let mut used = vec![false; lists.len()];
    let mut order = Vec::with_capacity(lists.len());
    for tag in priority {
        let idx = lists
            .iter()
            .enumerate()
            .position(|(i, l)| !used[i] && l.retriever_tag() == tag)
            .ok_or_else(bad)?;
        used[idx] = true;
        order.push(idx);
    }
    Ok(order)
}

/// Number of slots of `seq` holding `item`.
pub fn multiplicity(seq: &CandidateSequence, item: &ItemId) -> usize {
    seq.multiplicity(item)
}
