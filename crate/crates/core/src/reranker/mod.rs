//! List-wise reranking: one request per query carrying the serialized query
//! and all K candidate slots, answered by a permutation of the slot labels.
//!
//! A failing or unparseable reply never aborts a run. It degrades to the
//! identity permutation and the status says so.

mod backend;
mod parse;
mod prompt;

use std::collections::BTreeMap;
use std::io::Write;
use std::time::{Duration, Instant};

use serde::{Deserialize, Serialize};
use serde_json::json;

pub use backend::{
    make_backend, mock_oracle, reply_content, Backend, BackendConfig, BackendError, BackendKind, HttpBackend,
    IdentityBackend, MockOracle, ENV_API_KEY, ENV_ENDPOINT, ENV_MODEL,
};
pub use parse::parse_permutation;
pub use prompt::{
    build_prompt, chat_request, content_parts, default_template_id, template_ids, CandidateContent, CandidatePart,
    ImageMode, PromptBundle,
};

use crate::error::{Error, Result};
use crate::types::{CandidateSequence, Permutation, PermutationStatus, QueryId, Slot};

#[derive(Debug, Clone, PartialEq)]
pub struct RerankResult {
    pub permutation: Permutation,
    pub raw_reply: String,
    pub latency: Duration,
    pub backend_tag: String,
    /// Set when the backend never produced a reply.
    pub error: Option<String>,
    pub attempts: u32,
}

impl RerankResult {
    pub fn status(&self) -> PermutationStatus {
        self.permutation.status()
    }
}

/// Sends `bundle` to `backend`, retrying transient failures with exponential
/// backoff, and parses the reply.
pub fn rerank(bundle: &PromptBundle, backend: &dyn Backend, cfg: &BackendConfig) -> RerankResult {
    let k = bundle.k();
    let backend_tag = backend.tag();
    if k == 0 {
        return RerankResult {
            permutation: Permutation::identity(0, PermutationStatus::Clean),
            raw_reply: String::new(),
            latency: Duration::ZERO,
            backend_tag,
            error: None,
            attempts: 0,
        };
    }

    let start = Instant::now();
    let mut attempt = 0;
    loop {
        attempt += 1;
        match backend.complete(bundle, cfg) {
            Ok(reply) => {
                return RerankResult {
                    permutation: parse_permutation(&reply, k),
                    raw_reply: reply,
                    latency: start.elapsed(),
                    backend_tag,
                    error: None,
                    attempts: attempt,
                }
            }
            Err(e) if e.is_retryable() && attempt <= cfg.max_retries => {
                log::warn!("query {}: attempt {attempt} failed: {e}", bundle.query);
                std::thread::sleep(cfg.backoff(attempt - 1));
            }
            Err(e) => {
                log::warn!("query {}: giving up after {attempt} attempt(s): {e}", bundle.query);
                return RerankResult {
                    permutation: Permutation::identity(k, PermutationStatus::IdentityFallback),
                    raw_reply: format!("error: {e}"),
                    latency: start.elapsed(),
                    backend_tag,
                    error: Some(e.to_string()),
                    attempts: attempt,
                };
            }
        }
    }
}

/// Reorders the candidate slots: output slot `j` is input slot `order[j]`.
pub fn apply(seq: &CandidateSequence, perm: &Permutation) -> Result<Vec<Slot>> {
    if seq.len() != perm.size() {
        return Err(Error::SizeMismatch {
            perm: perm.size(),
            seq: seq.len(),
        });
    }
    Ok(perm.order().iter().map(|&i| seq.slots()[i - 1].clone()).collect())
}

/// One JSON-lines transcript record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TranscriptRecord {
    pub query: QueryId,
    pub backend: String,
    pub model: String,
    pub request: serde_json::Value,
    pub reply: String,
    pub status: PermutationStatus,
    pub order: Vec<usize>,
    pub latency_ms: f64,
    pub attempts: u32,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Reranks many bundles with at most `cfg.max_in_flight` concurrent requests.
/// Results are keyed by query, so completion order does not matter.
pub fn rerank_all(
    bundles: &[PromptBundle],
    backend: &dyn Backend,
    cfg: &BackendConfig,
    transcript: Option<&mut dyn Write>,
    record_latency: bool,
) -> Result<BTreeMap<QueryId, RerankResult>> {
    use rayon::prelude::*;

    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.max_in_flight.max(1))
        .build()
        .map_err(|e| Error::Config(format!("cannot start rerank workers: {e}")))?;
    let results: Vec<(QueryId, RerankResult)> = pool.install(|| {
        bundles
            .par_iter()
            .map(|b| {
                let mut r = rerank(b, backend, cfg);
                if !record_latency {
                    r.latency = Duration::ZERO;
                }
                (b.query.clone(), r)
            })
            .collect()
    });
    let results: BTreeMap<QueryId, RerankResult> = results.into_iter().collect();

    if let Some(out) = transcript {
        let mode = if backend.sends_images() {
            ImageMode::Inline {
                quality: cfg.jpeg_quality,
            }
        } else {
            ImageMode::Reference
        };
        let mut ordered: Vec<&PromptBundle> = bundles.iter().collect();
        ordered.sort_by(|a, b| a.query.cmp(&b.query));
        for b in ordered {
            let r = &results[&b.query];
            let rec = TranscriptRecord {
                query: b.query.clone(),
                backend: r.backend_tag.clone(),
                model: cfg.model_id.clone(),
                request: chat_request(b, &cfg.model_id, cfg.temperature, mode).unwrap_or_else(|e| json!({"error": e.to_string()})),
                reply: r.raw_reply.clone(),
                status: r.status(),
                order: r.permutation.order().to_vec(),
                latency_ms: r.latency.as_secs_f64() * 1e3,
                attempts: r.attempts,
                error: r.error.clone(),
            };
            let line = serde_json::to_string(&rec)?;
            writeln!(out, "{line}").map_err(|e| Error::io("<transcript>", e))?;
        }
    }
    Ok(results)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::types::ItemId;
    use std::collections::HashMap;
    use std::sync::atomic::{AtomicU32, Ordering};

    fn q() -> QueryId {
        QueryId::new("q").unwrap()
    }

    fn seq(items: &[&str]) -> CandidateSequence {
        let slots = items
            .iter()
            .enumerate()
            .map(|(n, s)| Slot {
                item: ItemId::new(*s).unwrap(),
                source_tag: "t".into(),
                source_rank: n + 1,
            })
            .collect();
        CandidateSequence::new(q(), slots)
    }

    fn text_bundle(items: &[&str]) -> PromptBundle {
        PromptBundle {
            query: q(),
            direction: crate::types::Direction::V2t,
            query_text: None,
            query_image: None,
            query_subtitle: None,
            candidates: items
                .iter()
                .enumerate()
                .map(|(i, s)| CandidatePart {
                    label: i + 1,
                    item: ItemId::new(*s).unwrap(),
                    content: CandidateContent::Text(format!("caption {s}")),
                })
                .collect(),
            instruction: "v2t-v1".into(),
        }
    }

    fn names(slots: &[Slot]) -> Vec<&str> {
        slots.iter().map(|s| s.item.as_str()).collect()
    }

    #[test]
    fn apply_examples() {
        let s = seq(&["a", "c", "b", "a"]);
        let p = Permutation::new(vec![3, 1, 2, 4], PermutationStatus::Clean).unwrap();
        assert_eq!(names(&apply(&s, &p).unwrap()), ["b", "a", "c", "a"]);

        let id = Permutation::identity(4, PermutationStatus::Clean);
        assert_eq!(apply(&s, &id).unwrap(), s.slots());

        let two = seq(&["a", "b"]);
        let rev = Permutation::new(vec![2, 1], PermutationStatus::Clean).unwrap();
        assert_eq!(names(&apply(&two, &rev).unwrap()), ["b", "a"]);

        assert!(matches!(apply(&two, &id), Err(Error::SizeMismatch { .. })));
    }

    fn rel(pairs: &[(&str, f64)]) -> HashMap<(QueryId, ItemId), f64> {
        pairs.iter().map(|(i, r)| ((q(), ItemId::new(*i).unwrap()), *r)).collect()
    }

    #[test]
    fn mock_oracle_examples() {
        assert_eq!(mock_oracle(&text_bundle(&["b", "a", "c"]), &rel(&[("a", 1.0)])), "[2, 1, 3]");
        assert_eq!(mock_oracle(&text_bundle(&["b", "a", "c", "d"]), &rel(&[])), "[1, 2, 3, 4]");
        assert!(mock_oracle(&text_bundle(&["a", "c", "b", "a"]), &rel(&[("a", 1.0)])).starts_with("[1, 4,"));
        // duplicates stay adjacent even among ties
        assert_eq!(mock_oracle(&text_bundle(&["a", "c", "b", "a"]), &rel(&[])), "[1, 4, 2, 3]");
    }

    #[test]
    fn mock_rerank_puts_gold_first() {
        let bundle = text_bundle(&["x", "y", "gold", "y"]);
        let oracle = MockOracle::new(rel(&[("gold", 1.0)]));
        let r = rerank(&bundle, &oracle, &BackendConfig::of_kind(BackendKind::Mock));
        assert_eq!(r.permutation.order()[0], 3);
        assert_eq!(r.status(), PermutationStatus::Clean);
    }

    struct Flaky {
        calls: AtomicU32,
        fail_first: u32,
        error: fn() -> BackendError,
    }

    impl Backend for Flaky {
        fn tag(&self) -> String {
            "flaky".into()
        }
        fn complete(&self, bundle: &PromptBundle, cfg: &BackendConfig) -> std::result::Result<String, BackendError> {
            let n = self.calls.fetch_add(1, Ordering::SeqCst);
            if n < self.fail_first {
                Err((self.error)())
            } else {
                IdentityBackend.complete(bundle, cfg)
            }
        }
    }

    fn fast_cfg() -> BackendConfig {
        BackendConfig {
            backoff_secs: 0.0,
            ..BackendConfig::of_kind(BackendKind::Mock)
        }
    }

    #[test]
    fn transient_failures_are_retried() {
        let b = Flaky {
            calls: AtomicU32::new(0),
            fail_first: 2,
            error: || BackendError::Transport("reset".into()),
        };
        let r = rerank(&text_bundle(&["a", "b"]), &b, &fast_cfg());
        assert_eq!(r.attempts, 3);
        assert_eq!(r.status(), PermutationStatus::Clean);
    }

    #[test]
    fn exhausted_retries_fall_back_to_identity() {
        let b = Flaky {
            calls: AtomicU32::new(0),
            fail_first: u32::MAX,
            error: || BackendError::Http {
                status: 503,
                body: "busy".into(),
            },
        };
        let r = rerank(&text_bundle(&["a", "b", "c"]), &b, &fast_cfg());
        assert_eq!(r.attempts, 3);
        assert_eq!(r.status(), PermutationStatus::IdentityFallback);
        assert!(r.permutation.is_identity());
        assert!(r.raw_reply.contains("503"));
        assert!(r.error.is_some());
    }

    #[test]
    fn client_errors_are_not_retried() {
        let b = Flaky {
            calls: AtomicU32::new(0),
            fail_first: u32::MAX,
            error: || BackendError::Http {
                status: 400,
                body: "bad".into(),
            },
        };
        let r = rerank(&text_bundle(&["a", "b"]), &b, &fast_cfg());
        assert_eq!(r.attempts, 1);
        assert_eq!(r.status(), PermutationStatus::IdentityFallback);
    }

    #[test]
    fn single_candidate_always_one() {
        struct Junk;
        impl Backend for Junk {
            fn tag(&self) -> String {
                "junk".into()
            }
            fn complete(&self, _: &PromptBundle, _: &BackendConfig) -> std::result::Result<String, BackendError> {
                Ok("[5, 9, 2]".into())
            }
        }
        let r = rerank(&text_bundle(&["a"]), &Junk, &fast_cfg());
        assert_eq!(r.permutation.order(), &[1]);
    }

    #[test]
    fn driver_collects_by_query_and_writes_transcripts() {
        let mut bundles = Vec::new();
        for n in 0..10 {
            let mut b = text_bundle(&["a", "b", "c"]);
            b.query = QueryId::new(format!("q{n:02}")).unwrap();
            bundles.push(b);
        }
        let mut log = Vec::new();
        let out = rerank_all(&bundles, &IdentityBackend, &fast_cfg(), Some(&mut log), false).unwrap();
        assert_eq!(out.len(), 10);
        assert!(out.values().all(|r| r.latency == Duration::ZERO && r.permutation.is_identity()));
        let text = String::from_utf8(log).unwrap();
        let recs: Vec<TranscriptRecord> = text.lines().map(|l| serde_json::from_str(l).unwrap()).collect();
        assert_eq!(recs.len(), 10);
        assert_eq!(recs[0].query.as_str(), "q00");
        assert_eq!(recs[9].order, vec![1, 2, 3]);
    }
}
