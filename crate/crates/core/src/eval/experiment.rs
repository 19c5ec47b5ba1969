use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Arc;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{score, EvalReport, QueryOutcomeInput, ReportMeta, DEFAULT_CUTOFFS};
use crate::assembly::{round_robin, AssemblyConfig};
use crate::corpus::{load_score_matrix, CorpusManifest};
use crate::error::{Error, Result};
use crate::fusion::{comb_mnz, comb_sum, rrf, FusionWeights, MnzConfig, RrfConfig, DEFAULT_DEPTH_POOL};
use crate::reranker::{apply, build_prompt, make_backend, rerank_all, BackendConfig, PromptBundle, RerankResult};
use crate::runfile::{load_run_file, Run};
use crate::sgrid::{build_video_grid, GridSpec, SGrid};
use crate::types::{
    ranked_from_scores, CandidateSequence, Direction, Entry, ItemId, PermutationStatus, QueryId, RankedList, ScoreMatrix,
};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SourceKind {
    /// Whitespace-separated run file.
    Run,
    /// JSON score matrix.
    Scores,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SourceSpec {
    pub path: PathBuf,
    /// Overrides the tag found in the file.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub tag: Option<String>,
    /// Inferred from the extension when absent: `.json` is a score matrix.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub kind: Option<SourceKind>,
}

impl SourceSpec {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        Self {
            path: path.into(),
            tag: None,
            kind: None,
        }
    }

    pub fn kind(&self) -> SourceKind {
        self.kind.unwrap_or_else(|| {
            let json = self
                .path
                .extension()
                .is_some_and(|e| e.eq_ignore_ascii_case("json"));
            if json {
                SourceKind::Scores
            } else {
                SourceKind::Run
            }
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum LoadedSource {
    Run { tag: String, run: Run },
    Scores(ScoreMatrix),
}

impl LoadedSource {
    pub fn tag(&self) -> &str {
        match self {
            LoadedSource::Run { tag, .. } => tag,
            LoadedSource::Scores(m) => m.retriever_tag(),
        }
    }

    pub fn queries(&self) -> Vec<&QueryId> {
        match self {
            LoadedSource::Run { run, .. } => run.keys().collect(),
            LoadedSource::Scores(m) => m.queries().collect(),
        }
    }

    /// The source's list for `query`, cut to `depth`; `None` when the
    /// source has nothing for the query.
    pub fn list(&self, query: &QueryId, depth: usize) -> Result<Option<RankedList>> {
        match self {
            LoadedSource::Run { tag, run } => Ok(run.get(query).map(|l| l.truncated(depth).with_tag(tag.clone()))),
            LoadedSource::Scores(m) => match m.row(query) {
                Some(_) => ranked_from_scores(m, query, depth).map(Some),
                None => Ok(None),
            },
        }
    }

    pub fn to_matrix(&self) -> Result<ScoreMatrix> {
        match self {
            LoadedSource::Run { tag, run } => ScoreMatrix::from_ranked_lists(tag.clone(), run.values()),
            LoadedSource::Scores(m) => Ok(m.clone()),
        }
    }
}

pub fn load_sources(specs: &[SourceSpec]) -> Result<Vec<LoadedSource>> {
    let sources = specs
        .iter()
        .map(|spec| {
            Ok(match spec.kind() {
                SourceKind::Run => {
                    let run = load_run_file(&spec.path)?;
                    let tag = match (&spec.tag, run.values().next()) {
                        (Some(t), _) => t.clone(),
                        (None, Some(l)) => l.retriever_tag().to_string(),
                        (None, None) => file_stem(&spec.path),
                    };
                    LoadedSource::Run { tag, run }
                }
                SourceKind::Scores => {
                    let m = load_score_matrix(&spec.path)?;
                    LoadedSource::Scores(match &spec.tag {
                        Some(t) => m.with_tag(t.clone()),
                        None => m,
                    })
                }
            })
        })
        .collect::<Result<Vec<_>>>()?;
    let mut seen = BTreeSet::new();
    for s in &sources {
        if !seen.insert(s.tag()) {
            return Err(Error::Config(format!("two sources share the tag {:?}", s.tag())));
        }
    }
    Ok(sources)
}

fn file_stem(path: &Path) -> String {
    path.file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_else(|| "run".into())
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// The single first-stage list, cut to K.
    #[default]
    None,
    Rrf,
    Combsum,
    Combmnz,
    /// Round-robin assembly followed by list-wise reranking.
    Vic,
}

impl Method {
    pub fn as_str(self) -> &'static str {
        match self {
            Method::None => "none",
            Method::Rrf => "rrf",
            Method::Combsum => "combsum",
            Method::Combmnz => "combmnz",
            Method::Vic => "vic",
        }
    }
}

impl std::str::FromStr for Method {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        serde_json::from_value(serde_json::Value::String(s.to_ascii_lowercase()))
            .map_err(|_| Error::Config(format!("unknown method {s:?}")))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct AssemblyOptions {
    #[serde(default = "default_true")]
    pub keep_duplicates: bool,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub priority_order: Option<Vec<String>>,
}

impl Default for AssemblyOptions {
    fn default() -> Self {
        Self {
            keep_duplicates: true,
            priority_order: None,
        }
    }
}

fn default_true() -> bool {
    true
}

fn default_cutoffs() -> Vec<usize> {
    DEFAULT_CUTOFFS.to_vec()
}

fn default_depth_pool() -> usize {
    DEFAULT_DEPTH_POOL
}

/// Everything one experiment needs. Serialized canonically for the report
/// fingerprint.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ExperimentConfig {
    #[serde(default)]
    pub name: String,
    #[serde(default)]
    pub dataset: String,
    #[serde(default)]
    pub direction: Direction,
    /// Candidate count; 14 for text-to-video and 20 for video-to-text when
    /// absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub k: Option<usize>,
    #[serde(default)]
    pub assembly: AssemblyOptions,
    #[serde(default)]
    pub method: Method,
    #[serde(default)]
    pub sources: Vec<SourceSpec>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub backend: Option<BackendConfig>,
    #[serde(default)]
    pub grid: GridSpec,
    #[serde(default = "default_cutoffs")]
    pub recall_cutoffs: Vec<usize>,
    #[serde(default)]
    pub rrf: RrfConfig,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub weights: Option<BTreeMap<String, f64>>,
    #[serde(default = "default_depth_pool")]
    pub depth_pool: usize,
    /// Precomputed grids (`<item>.sgrid.jpg` + sidecar). Grids are built
    /// from the manifest frames when absent.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub grids_dir: Option<PathBuf>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub manifest: Option<PathBuf>,
    /// Zeroes latencies so repeated runs are byte-identical.
    #[serde(default = "default_true")]
    pub record_latency: bool,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            name: String::new(),
            dataset: String::new(),
            direction: Direction::default(),
            k: None,
            assembly: AssemblyOptions::default(),
            method: Method::default(),
            sources: Vec::new(),
            backend: None,
            grid: GridSpec::default(),
            recall_cutoffs: default_cutoffs(),
            rrf: RrfConfig::default(),
            weights: None,
            depth_pool: DEFAULT_DEPTH_POOL,
            grids_dir: None,
            manifest: None,
            record_latency: true,
        }
    }
}

impl ExperimentConfig {
    pub fn k(&self) -> usize {
        self.k.unwrap_or(match self.direction {
            Direction::T2v => 14,
            Direction::V2t => 20,
        })
    }

    pub fn assembly_config(&self) -> AssemblyConfig {
        AssemblyConfig {
            k: self.k(),
            keep_duplicates: self.assembly.keep_duplicates,
            priority_order: self.assembly.priority_order.clone(),
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.k() == 0 {
            return Err(Error::Config("K must be at least 1".into()));
        }
        if self.sources.is_empty() {
            return Err(Error::NoLists);
        }
        if self.method == Method::None && self.sources.len() != 1 {
            return Err(Error::Config(format!(
                "method none takes exactly one source, got {}",
                self.sources.len()
            )));
        }
        if self.depth_pool == 0 {
            return Err(Error::Config("depth_pool must be at least 1".into()));
        }
        super::validate_cutoffs(&self.recall_cutoffs)?;
        RrfConfig::new(self.rrf.k)?;
        self.grid.validate()?;
        if let Some(w) = &self.weights {
            FusionWeights::new(w.clone())?;
        }
        match (&self.backend, self.method) {
            (Some(b), _) => b.validate()?,
            (None, Method::Vic) => return Err(Error::Config("method vic needs a backend".into())),
            _ => {}
        }
        Ok(())
    }
}

/// Hex SHA-256 of the canonical JSON form of `cfg`. Object keys are sorted
/// and the API key is never serialized.
pub fn fingerprint(cfg: &ExperimentConfig) -> Result<String> {
    // serde_json::Value keeps object keys in a BTreeMap, which makes the
    // rendering canonical.
    let value = serde_json::to_value(cfg)?;
    let text = serde_json::to_string(&value)?;
    let digest = Sha256::digest(text.as_bytes());
    Ok(hex::encode(digest))
}

/// What the pipeline did for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryRun {
    /// Final order; may contain duplicates.
    pub ranked: Vec<ItemId>,
    /// Fused scores aligned with `ranked`, for the score-based methods.
    pub scores: Option<Vec<f64>>,
    pub candidates: Option<CandidateSequence>,
    pub rerank: Option<RerankResult>,
    /// Sources that had nothing for the query.
    pub missing_in: Vec<String>,
    pub error: Option<String>,
}

impl QueryRun {
    fn failed(error: String) -> Self {
        Self {
            ranked: Vec::new(),
            scores: None,
            candidates: None,
            rerank: None,
            missing_in: Vec::new(),
            error: Some(error),
        }
    }

    pub fn status(&self) -> Option<PermutationStatus> {
        match (&self.rerank, &self.candidates) {
            (Some(r), _) => Some(r.status()),
            (None, Some(_)) => Some(PermutationStatus::IdentityFallback),
            (None, None) => None,
        }
    }

    pub fn outcome(&self) -> QueryOutcomeInput {
        let latency_ms = self
            .rerank
            .as_ref()
            .map(|r| r.latency.as_secs_f64() * 1e3);
        QueryOutcomeInput {
            ranked: self.ranked.clone(),
            latency_ms,
            status: self.status(),
            error: self
                .error
                .clone()
                .or_else(|| self.rerank.as_ref().and_then(|r| r.error.clone())),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineOutput {
    pub method: Method,
    pub per_query: BTreeMap<QueryId, QueryRun>,
}

impl PipelineOutput {
    /// Final rankings as run lists tagged with the method name. Queries
    /// that produced nothing are left out.
    pub fn to_run(&self) -> Result<Run> {
        let mut run = Run::new();
        for (q, r) in &self.per_query {
            if r.ranked.is_empty() {
                continue;
            }
            let list = match &r.scores {
                Some(scores) => {
                    let entries = r
                        .ranked
                        .iter()
                        .zip(scores)
                        .map(|(item, &s)| Entry {
                            item: item.clone(),
                            score: Some(s),
                        })
                        .collect();
                    RankedList::new(self.method.as_str(), q.clone(), entries)?
                }
                None => RankedList::from_items(self.method.as_str(), q.clone(), super::dedup_ranked(&r.ranked))?,
            };
            run.insert(q.clone(), list);
        }
        Ok(run)
    }

    pub fn outcomes(&self) -> BTreeMap<QueryId, QueryOutcomeInput> {
        self.per_query.iter().map(|(q, r)| (q.clone(), r.outcome())).collect()
    }

    /// True when every reranked query failed at the transport level.
    pub fn all_failed(&self) -> bool {
        let reranked: Vec<&RerankResult> = self.per_query.values().filter_map(|r| r.rerank.as_ref()).collect();
        !reranked.is_empty() && reranked.iter().all(|r| r.error.is_some())
    }
}

/// Runs `cfg.method` for `queries`, or for every query any source knows
/// when `queries` is `None`. Per-query problems are recorded, not raised.
pub fn run_pipeline(
    cfg: &ExperimentConfig,
    sources: &[LoadedSource],
    manifest: Option<&CorpusManifest>,
    queries: Option<&[QueryId]>,
    transcript: Option<&mut dyn Write>,
) -> Result<PipelineOutput> {
    cfg.validate()?;
    let queries: Vec<QueryId> = match queries {
        Some(q) => q.to_vec(),
        None => sources
            .iter()
            .flat_map(|s| s.queries())
            .cloned()
            .collect::<BTreeSet<_>>()
            .into_iter()
            .collect(),
    };
    let k = cfg.k();
    let per_query = match cfg.method {
        Method::None | Method::Rrf => {
            let depth = match cfg.method {
                Method::None => k,
                _ => cfg.depth_pool,
            };
            let rrf_cfg = cfg.rrf;
            queries
                .iter()
                .map(|q| {
                    let run = gather(sources, q, depth).and_then(|(lists, missing)| {
                        let fused = match cfg.method {
                            Method::None => lists.into_iter().next().ok_or(Error::NoLists)?,
                            _ => rrf(&lists, &rrf_cfg, k)?,
                        };
                        Ok(baseline_run(fused, missing))
                    });
                    (q.clone(), run.unwrap_or_else(|e| QueryRun::failed(e.to_string())))
                })
                .collect()
        }
        Method::Combsum | Method::Combmnz => {
            let matrices = sources.iter().map(LoadedSource::to_matrix).collect::<Result<Vec<_>>>()?;
            let weights = match &cfg.weights {
                Some(w) => FusionWeights::new(w.clone())?,
                None => FusionWeights::uniform(sources.iter().map(LoadedSource::tag)),
            };
            let mnz = MnzConfig {
                depth_pool: cfg.depth_pool,
            };
            queries
                .iter()
                .map(|q| {
                    let missing = matrices
                        .iter()
                        .filter(|m| m.row(q).is_none())
                        .map(|m| m.retriever_tag().to_string())
                        .collect();
                    let fused = match cfg.method {
                        Method::Combsum => comb_sum(&matrices, &weights, q, k),
                        _ => comb_mnz(&matrices, &weights, q, k, &mnz),
                    };
                    let run = fused
                        .map(|l| baseline_run(l, missing))
                        .unwrap_or_else(|e| QueryRun::failed(e.to_string()));
                    (q.clone(), run)
                })
                .collect()
        }
        Method::Vic => vic_pipeline(cfg, sources, manifest, &queries, transcript)?,
    };
    Ok(PipelineOutput {
        method: cfg.method,
        per_query,
    })
}

fn baseline_run(list: RankedList, missing_in: Vec<String>) -> QueryRun {
    QueryRun {
        ranked: list.items().cloned().collect(),
        scores: list.entries().iter().map(|e| e.score).collect(),
        candidates: None,
        rerank: None,
        missing_in,
        error: None,
    }
}

/// One list per source; an absent query contributes an empty list.
fn gather(sources: &[LoadedSource], query: &QueryId, depth: usize) -> Result<(Vec<RankedList>, Vec<String>)> {
    let mut lists = Vec::with_capacity(sources.len());
    let mut missing = Vec::new();
    for s in sources {
        match s.list(query, depth)? {
            Some(l) => lists.push(l),
            None => {
                missing.push(s.tag().to_string());
                lists.push(RankedList::new(s.tag(), query.clone(), Vec::new())?);
            }
        }
    }
    if missing.len() == sources.len() {
        log::warn!("query {query} is absent from every source");
    }
    Ok((lists, missing))
}

fn vic_pipeline(
    cfg: &ExperimentConfig,
    sources: &[LoadedSource],
    manifest: Option<&CorpusManifest>,
    queries: &[QueryId],
    transcript: Option<&mut dyn Write>,
) -> Result<BTreeMap<QueryId, QueryRun>> {
    let manifest = manifest.ok_or_else(|| Error::Config("method vic needs a corpus manifest".into()))?;
    let backend_cfg = cfg
        .backend
        .as_ref()
        .ok_or_else(|| Error::Config("method vic needs a backend".into()))?;
    let assembly = cfg.assembly_config();
    let k = cfg.k();

    let mut runs: BTreeMap<QueryId, QueryRun> = BTreeMap::new();
    for q in queries {
        let run = gather(sources, q, k).and_then(|(lists, missing)| {
            let seq = round_robin(&lists, &assembly)?;
            Ok(QueryRun {
                ranked: seq.items().cloned().collect(),
                scores: None,
                candidates: Some(seq),
                rerank: None,
                missing_in: missing,
                error: None,
            })
        });
        runs.insert(q.clone(), run.unwrap_or_else(|e| QueryRun::failed(e.to_string())));
    }

    let needed: BTreeSet<ItemId> = match cfg.direction {
        Direction::T2v => runs
            .values()
            .filter_map(|r| r.candidates.as_ref())
            .flat_map(|s| s.items().cloned())
            .collect(),
        Direction::V2t => queries.iter().filter_map(|q| ItemId::new(q.as_str()).ok()).collect(),
    };
    let (grids, grid_errors) = load_grids(cfg, manifest, &needed);

    let mut bundles: Vec<PromptBundle> = Vec::new();
    for (q, run) in runs.iter_mut() {
        let Some(seq) = &run.candidates else { continue };
        if seq.is_empty() {
            run.error.get_or_insert_with(|| "no candidates".into());
            continue;
        }
        match build_prompt(q, seq, manifest, &grids, cfg.direction, backend_cfg.template.as_deref()) {
            Ok(b) => bundles.push(b),
            Err(e) => {
                let detail = match &e {
                    Error::Unresolvable(id) => grid_errors
                        .get(id.as_str())
                        .map(|g| format!("{e}: {g}"))
                        .unwrap_or_else(|| e.to_string()),
                    _ => e.to_string(),
                };
                run.error = Some(detail);
            }
        }
    }

    let backend = make_backend(backend_cfg, manifest).map_err(|e| Error::Config(e.to_string()))?;
    let results = rerank_all(&bundles, backend.as_ref(), backend_cfg, transcript, cfg.record_latency)?;
    for (q, result) in results {
        let run = runs.get_mut(&q).expect("bundle for an unknown query");
        let seq = run.candidates.as_ref().expect("bundle without candidates");
        run.ranked = apply(seq, &result.permutation)?.into_iter().map(|s| s.item).collect();
        run.rerank = Some(result);
    }
    Ok(runs)
}

/// Loads or builds the grid of every needed item in parallel. Failures are
/// returned by item and surface as per-query errors.
fn load_grids(
    cfg: &ExperimentConfig,
    manifest: &CorpusManifest,
    needed: &BTreeSet<ItemId>,
) -> (HashMap<ItemId, Arc<SGrid>>, HashMap<String, String>) {
    let built: Vec<(ItemId, Result<SGrid>)> = needed
        .par_iter()
        .map(|item| {
            let grid = match &cfg.grids_dir {
                Some(dir) => SGrid::load(dir, item),
                None => build_video_grid(manifest, item, &cfg.grid),
            };
            (item.clone(), grid)
        })
        .collect();
    let mut grids = HashMap::new();
    let mut errors = HashMap::new();
    for (item, g) in built {
        match g {
            Ok(g) => {
                grids.insert(item, Arc::new(g));
            }
            Err(e) => {
                log::warn!("no grid for {item}: {e}");
                errors.insert(item.to_string(), e.to_string());
            }
        }
    }
    (grids, errors)
}

/// Loads sources, runs the pipeline over the gold queries and scores it.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    manifest: &CorpusManifest,
    transcript: Option<&mut dyn Write>,
) -> Result<(EvalReport, PipelineOutput)> {
    cfg.validate()?;
    manifest.validate_gold()?;
    let sources = load_sources(&cfg.sources)?;
    let queries: Vec<QueryId> = manifest.gold.keys().cloned().collect();
    let output = run_pipeline(cfg, &sources, Some(manifest), Some(&queries), transcript)?;
    let meta = ReportMeta {
        name: cfg.name.clone(),
        dataset: cfg.dataset.clone(),
        method: cfg.method.as_str().to_string(),
        direction: cfg.direction,
        config_fingerprint: fingerprint(cfg)?,
    };
    let report = score(&output.outcomes(), &manifest.gold, &cfg.recall_cutoffs, meta)?;
    Ok((report, output))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::reranker::BackendKind;

    fn q(s: &str) -> QueryId {
        QueryId::new(s).unwrap()
    }

    fn list(tag: &str, query: &str, items: &[&str]) -> RankedList {
        RankedList::from_items(tag, q(query), items.iter().map(|s| ItemId::new(*s).unwrap()).collect()).unwrap()
    }

    fn run_source(tag: &str, lists: Vec<RankedList>) -> LoadedSource {
        LoadedSource::Run {
            tag: tag.into(),
            run: lists.into_iter().map(|l| (l.query().clone(), l)).collect(),
        }
    }

    fn text_manifest() -> CorpusManifest {
        CorpusManifest::from_json(
            r#"{"videos": {}, "captions": {"q1": "a caption", "a": "A", "b": "B", "c": "C"},
                "gold": {"q1": ["c"]}}"#,
        )
        .unwrap()
    }

    #[test]
    fn kind_follows_extension() {
        assert_eq!(SourceSpec::new("x.json").kind(), SourceKind::Scores);
        assert_eq!(SourceSpec::new("x.run").kind(), SourceKind::Run);
        assert_eq!(SourceSpec::new("x.txt").kind(), SourceKind::Run);
    }

    #[test]
    fn default_k_depends_on_direction() {
        let mut cfg = ExperimentConfig::default();
        assert_eq!(cfg.k(), 14);
        cfg.direction = Direction::V2t;
        assert_eq!(cfg.k(), 20);
        cfg.k = Some(5);
        assert_eq!(cfg.k(), 5);
    }

    #[test]
    fn fingerprint_ignores_api_key_and_tracks_k() {
        let mut cfg = ExperimentConfig {
            backend: Some(BackendConfig::of_kind(BackendKind::Mock)),
            ..Default::default()
        };
        let a = fingerprint(&cfg).unwrap();
        cfg.backend.as_mut().unwrap().api_key = Some("secret".into());
        assert_eq!(fingerprint(&cfg).unwrap(), a);
        assert!(!serde_json::to_string(&cfg).unwrap().contains("secret"));
        cfg.k = Some(3);
        assert_ne!(fingerprint(&cfg).unwrap(), a);
        assert_eq!(a.len(), 64);
    }

    #[test]
    fn config_rejects_unknown_fields() {
        assert!(serde_json::from_str::<ExperimentConfig>(r#"{"kk": 3}"#).is_err());
        let cfg: ExperimentConfig = serde_json::from_str(r#"{"k": 3, "method": "rrf"}"#).unwrap();
        assert_eq!(cfg.method, Method::Rrf);
        assert_eq!(cfg.recall_cutoffs, vec![1, 5, 10]);
    }

    #[test]
    fn none_method_cuts_to_k() {
        let src = run_source("r", vec![list("r", "q1", &["a", "b", "c"])]);
        let cfg = ExperimentConfig {
            k: Some(2),
            sources: vec![SourceSpec::new("unused")],
            ..Default::default()
        };
        let out = run_pipeline(&cfg, &[src], None, None, None).unwrap();
        assert_eq!(out.per_query[&q("q1")].ranked.len(), 2);
    }

    #[test]
    fn vic_with_text_candidates_and_mock() {
        let a = run_source("r1", vec![list("r1", "q1", &["a", "b"])]);
        let b = run_source("r2", vec![list("r2", "q1", &["c", "a"])]);
        let cfg = ExperimentConfig {
            direction: Direction::V2t,
            k: Some(4),
            method: Method::Vic,
            sources: vec![SourceSpec::new("1"), SourceSpec::new("2")],
            backend: Some(BackendConfig::of_kind(BackendKind::Mock)),
            ..Default::default()
        };
        // v2t needs the query grid; without one the query is flagged.
        let out = run_pipeline(&cfg, &[a, b], Some(&text_manifest()), None, None).unwrap();
        let r = &out.per_query[&q("q1")];
        assert!(r.error.as_deref().unwrap().contains("q1"));
        assert_eq!(r.status(), Some(PermutationStatus::IdentityFallback));
        assert_eq!(r.ranked.len(), 4);
    }

    #[test]
    fn missing_source_query_is_flagged() {
        let a = run_source("r1", vec![list("r1", "q1", &["a"])]);
        let b = run_source("r2", vec![list("r2", "q2", &["b"])]);
        let cfg = ExperimentConfig {
            k: Some(2),
            method: Method::Rrf,
            sources: vec![SourceSpec::new("1"), SourceSpec::new("2")],
            ..Default::default()
        };
        let out = run_pipeline(&cfg, &[a, b], None, None, None).unwrap();
        assert_eq!(out.per_query[&q("q1")].missing_in, vec!["r2".to_string()]);
        assert_eq!(out.per_query[&q("q2")].missing_in, vec!["r1".to_string()]);
    }

    #[test]
    fn scored_run_lists_fuse_by_combsum() {
        let entries = |xs: &[(&str, f64)]| {
            xs.iter()
                .map(|(i, s)| Entry {
                    item: ItemId::new(*i).unwrap(),
                    score: Some(*s),
                })
                .collect::<Vec<_>>()
        };
        let a = run_source("r1", vec![RankedList::new("r1", q("q"), entries(&[("x", 1.0), ("y", 0.0)])).unwrap()]);
        let b = run_source("r2", vec![RankedList::new("r2", q("q"), entries(&[("y", 1.0), ("x", 0.5)])).unwrap()]);
        let cfg = ExperimentConfig {
            k: Some(2),
            method: Method::Combsum,
            sources: vec![SourceSpec::new("1"), SourceSpec::new("2")],
            ..Default::default()
        };
        let out = run_pipeline(&cfg, &[a, b], None, None, None).unwrap();
        let x = ItemId::new("x").unwrap();
        assert_eq!(out.per_query[&q("q")].ranked[0], x);
    }
}
