//! The `vic` command line. Every subcommand returns an exit code:
//! 0 success, 1 partial or runtime failure, 2 usage or config error.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Display;
use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use rayon::prelude::*;
use serde_json::{json, Value};
use sha2::{Digest, Sha256};

use crate::corpus::CorpusManifest;
use crate::eval::{
    emit_report, load_sources, render_sweep_csv, render_table, run_experiment, run_pipeline, score, EvalReport,
    ExperimentConfig, Method, PipelineOutput, QueryOutcomeInput, ReportFormat, ReportMeta,
};
use crate::runfile::{load_run_file, render_run, write_run_file};
use crate::sgrid::{build_video_grid, GridSpec, ResizeFilter, DEFAULT_JPEG_QUALITY};
use crate::types::{Direction, ItemId};

pub const EXIT_OK: u8 = 0;
pub const EXIT_PARTIAL: u8 = 1;
pub const EXIT_USAGE: u8 = 2;

#[derive(Debug, Parser)]
#[command(name = "vic", version, about = "Duplicate-aware fusion and list-wise multimodal reranking")]
pub struct Cli {
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Build S-Grid images for the videos of a manifest.
    #[command(subcommand)]
    Sgrid(SgridCommand),
    /// Fuse first-stage lists with a score-based baseline.
    Fuse(FuseArgs),
    /// Assemble candidates round-robin and rerank them list-wise.
    Rerank(RerankArgs),
    /// Score a run file against the gold table of a manifest.
    Eval(EvalArgs),
    /// Run one experiment per value of an ablation axis.
    Sweep(SweepArgs),
}

#[derive(Debug, Subcommand)]
pub enum SgridCommand {
    Build(SgridArgs),
}

#[derive(Debug, Args)]
pub struct SgridArgs {
    #[arg(long)]
    pub manifest: PathBuf,
    #[arg(long, default_value_t = 3)]
    pub grid_size: u32,
    /// Canvas size, `N` for a square or `HxW`.
    #[arg(long, default_value = "1024")]
    pub canvas: String,
    #[arg(long, value_enum, default_value = "bilinear")]
    pub filter: FilterArg,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, default_value_t = DEFAULT_JPEG_QUALITY)]
    pub quality: u8,
    /// Build the remaining videos after a failure.
    #[arg(long)]
    pub keep_going: bool,
    #[arg(long)]
    pub jobs: Option<usize>,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum FilterArg {
    Nearest,
    Bilinear,
    CatmullRom,
    Lanczos3,
}

impl From<FilterArg> for ResizeFilter {
    fn from(f: FilterArg) -> Self {
        match f {
            FilterArg::Nearest => ResizeFilter::Nearest,
            FilterArg::Bilinear => ResizeFilter::Bilinear,
            FilterArg::CatmullRom => ResizeFilter::CatmullRom,
            FilterArg::Lanczos3 => ResizeFilter::Lanczos3,
        }
    }
}

/// Input lists and config layering shared by `fuse` and `rerank`.
#[derive(Debug, Args)]
pub struct SourceArgs {
    /// Run files, one per retriever.
    #[arg(long, num_args = 1..)]
    pub runs: Vec<PathBuf>,
    /// JSON score matrices, one per retriever.
    #[arg(long, num_args = 1..)]
    pub scores: Vec<PathBuf>,
    /// Base experiment config (JSON).
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Override a config leaf, e.g. `--set backend.max_retries=4`.
    #[arg(long = "set", value_name = "PATH=VALUE")]
    pub overrides: Vec<String>,
    /// Output run file; standard output when absent.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Args)]
pub struct FuseArgs {
    /// rrf, combsum or combmnz.
    #[arg(long)]
    pub method: String,
    #[command(flatten)]
    pub sources: SourceArgs,
    /// Per-source weights, `tag=w,...`; uniform when absent.
    #[arg(long)]
    pub weights: Option<String>,
    #[arg(long)]
    pub rrf_k: Option<f64>,
    /// Length of the fused output lists.
    #[arg(long, default_value_t = 100)]
    pub depth: usize,
    /// Per-source depth read for RRF and counted as a hit by CombMNZ.
    #[arg(long)]
    pub depth_pool: Option<usize>,
}

#[derive(Debug, Args)]
pub struct RerankArgs {
    #[arg(long, value_enum)]
    pub direction: Option<DirectionArg>,
    /// Candidates per query.
    #[arg(long = "K", alias = "k")]
    pub k: Option<usize>,
    #[command(flatten)]
    pub sources: SourceArgs,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// Directory of prebuilt grids; built from the manifest frames when absent.
    #[arg(long)]
    pub grids: Option<PathBuf>,
    #[arg(long)]
    pub grid_size: Option<u32>,
    #[arg(long, value_enum)]
    pub backend: Option<BackendArg>,
    #[arg(long)]
    pub endpoint: Option<String>,
    #[arg(long)]
    pub model: Option<String>,
    #[arg(long)]
    pub template: Option<String>,
    /// Drop repeated items during assembly.
    #[arg(long)]
    pub no_duplicates: bool,
    /// Within-round retriever order, `tag,tag,...`.
    #[arg(long)]
    pub priority: Option<String>,
    /// Append one JSON line per request to this file.
    #[arg(long)]
    pub log_transcripts: Option<PathBuf>,
    /// Concurrent requests and grid builds.
    #[arg(long)]
    pub jobs: Option<usize>,
    /// Record zero latencies so reruns are byte-identical.
    #[arg(long)]
    pub no_timestamps: bool,
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum DirectionArg {
    T2v,
    V2t,
}

impl From<DirectionArg> for Direction {
    fn from(d: DirectionArg) -> Self {
        match d {
            DirectionArg::T2v => Direction::T2v,
            DirectionArg::V2t => Direction::V2t,
        }
    }
}

#[derive(Debug, Clone, Copy, clap::ValueEnum)]
pub enum BackendArg {
    Http,
    Mock,
    Identity,
}

impl BackendArg {
    fn as_str(self) -> &'static str {
        match self {
            BackendArg::Http => "http",
            BackendArg::Mock => "mock",
            BackendArg::Identity => "identity",
        }
    }
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[arg(long)]
    pub run: PathBuf,
    /// Manifest holding the gold table.
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    #[arg(long, default_value = "1,5,10")]
    pub cutoffs: String,
    /// Format written to standard output.
    #[arg(long, default_value = "table")]
    pub format: String,
    /// Also write the JSON report here.
    #[arg(long)]
    pub out: Option<PathBuf>,
    #[arg(long)]
    pub name: Option<String>,
    #[arg(long)]
    pub dataset: Option<String>,
}

#[derive(Debug, Args)]
pub struct SweepArgs {
    #[arg(long)]
    pub config: PathBuf,
    #[arg(long = "set", value_name = "PATH=VALUE")]
    pub overrides: Vec<String>,
    #[arg(long)]
    pub manifest: Option<PathBuf>,
    /// grid-size, K or backend-model.
    #[arg(long)]
    pub axis: String,
    /// Comma-separated axis values.
    #[arg(long, default_value = "")]
    pub values: String,
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long)]
    pub no_timestamps: bool,
}

/// A failed subcommand and the exit code it maps to.
#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

fn usage(e: impl Display) -> Failure {
    Failure {
        code: EXIT_USAGE,
        message: e.to_string(),
    }
}

fn runtime(e: impl Display) -> Failure {
    Failure {
        code: EXIT_PARTIAL,
        message: e.to_string(),
    }
}

type CmdResult = std::result::Result<u8, Failure>;

/// Parses `args` (program name first) and runs the subcommand.
pub fn run<I, T>(args: I) -> ExitCode
where
    I: IntoIterator<Item = T>,
    T: Into<std::ffi::OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) => {
            let _ = e.print();
            return ExitCode::from(if e.use_stderr() { EXIT_USAGE } else { EXIT_OK });
        }
    };
    let result = match cli.command {
        Command::Sgrid(SgridCommand::Build(a)) => cmd_sgrid(&a),
        Command::Fuse(a) => cmd_fuse(&a),
        Command::Rerank(a) => cmd_rerank(&a),
        Command::Eval(a) => cmd_eval(&a),
        Command::Sweep(a) => cmd_sweep(&a),
    };
    match result {
        Ok(code) => ExitCode::from(code),
        Err(f) => {
            eprintln!("error: {}", f.message);
            ExitCode::from(f.code)
        }
    }
}

/// `N` or `HxW`.
pub fn parse_canvas(s: &str) -> Option<(u32, u32)> {
    match s.split_once(['x', 'X']) {
        Some((h, w)) => Some((h.trim().parse().ok()?, w.trim().parse().ok()?)),
        None => {
            let n = s.trim().parse().ok()?;
            Some((n, n))
        }
    }
}

fn thread_pool(jobs: Option<usize>) -> std::result::Result<rayon::ThreadPool, Failure> {
    let mut b = rayon::ThreadPoolBuilder::new();
    if let Some(j) = jobs {
        if j == 0 {
            return Err(usage("--jobs must be at least 1"));
        }
        b = b.num_threads(j);
    }
    b.build().map_err(runtime)
}

pub fn cmd_sgrid(a: &SgridArgs) -> CmdResult {
    let (h, w) = parse_canvas(&a.canvas).ok_or_else(|| usage(format!("bad --canvas {:?}", a.canvas)))?;
    let mut spec = GridSpec::new(a.grid_size, h, w).map_err(usage)?;
    spec.filter = a.filter.into();
    if !(1..=100).contains(&a.quality) {
        return Err(usage("--quality must be within 1..=100"));
    }
    let (manifest, missing) = CorpusManifest::load_lenient(&a.manifest).map_err(usage)?;
    let missing: BTreeSet<ItemId> = missing.into_iter().map(|(id, _)| id).collect();
    if !missing.is_empty() && !a.keep_going {
        for id in &missing {
            eprintln!("sgrid: frames of {id} not found");
        }
        return Err(runtime(format!(
            "{} video(s) have missing frames; pass --keep-going to build the rest",
            missing.len()
        )));
    }
    fs::create_dir_all(&a.out).map_err(|e| usage(format!("cannot create {}: {e}", a.out.display())))?;

    let pool = thread_pool(a.jobs)?;
    let items: Vec<&ItemId> = manifest.videos.keys().filter(|id| !missing.contains(*id)).collect();
    let total = manifest.videos.len();
    let results: Vec<(ItemId, crate::Result<()>)> = pool.install(|| {
        items
            .par_iter()
            .map(|id| {
                let r = build_video_grid(&manifest, id, &spec).and_then(|g| g.write(&a.out, a.quality));
                ((*id).clone(), r)
            })
            .collect()
    });
    let mut failed: Vec<String> = missing.iter().map(|id| format!("{id}: frames not found")).collect();
    for (id, r) in &results {
        if let Err(e) = r {
            failed.push(format!("{id}: {e}"));
        }
    }
    for f in &failed {
        eprintln!("sgrid: failed {f}");
    }
    eprintln!(
        "sgrid: built {} of {} grids, {} failed",
        total - failed.len(),
        total,
        failed.len()
    );
    Ok(if failed.is_empty() { EXIT_OK } else { EXIT_PARTIAL })
}

/// Sets `path` (dot-separated) in `root`, creating objects on the way.
pub fn set_path(root: &mut Value, path: &str, value: Value) -> crate::Result<()> {
    let mut cur = root;
    let mut parts = path.split('.').peekable();
    while let Some(part) = parts.next() {
        if part.is_empty() {
            return Err(crate::Error::Config(format!("bad config path {path:?}")));
        }
        if !cur.is_object() {
            if cur.is_null() {
                *cur = json!({});
            } else {
                return Err(crate::Error::Config(format!("{path:?} descends into a non-object")));
            }
        }
        let obj = cur.as_object_mut().expect("checked above");
        if parts.peek().is_none() {
            obj.insert(part.to_string(), value);
            return Ok(());
        }
        cur = obj.entry(part.to_string()).or_insert_with(|| json!({}));
    }
    Ok(())
}

/// Applies `PATH=VALUE` overrides; values parse as JSON when they can and
/// are taken as strings otherwise.
pub fn apply_overrides(root: &mut Value, overrides: &[String]) -> crate::Result<()> {
    for o in overrides {
        let (path, raw) = o
            .split_once('=')
            .ok_or_else(|| crate::Error::Config(format!("override {o:?} is not PATH=VALUE")))?;
        let value = serde_json::from_str(raw).unwrap_or_else(|_| Value::String(raw.to_string()));
        set_path(root, path.trim(), value)?;
    }
    Ok(())
}

fn read_config(path: Option<&Path>) -> std::result::Result<Value, Failure> {
    match path {
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| usage(format!("cannot read {}: {e}", p.display())))?;
            let v: Value = serde_json::from_str(&text).map_err(|e| usage(format!("{}: {e}", p.display())))?;
            if !v.is_object() {
                return Err(usage(format!("{} is not a JSON object", p.display())));
            }
            Ok(v)
        }
        None => Ok(json!({})),
    }
}

fn source_values(s: &SourceArgs) -> Option<Value> {
    if s.runs.is_empty() && s.scores.is_empty() {
        return None;
    }
    let runs = s.runs.iter().map(|p| json!({"path": p, "kind": "run"}));
    let scores = s.scores.iter().map(|p| json!({"path": p, "kind": "scores"}));
    Some(Value::Array(runs.chain(scores).collect()))
}

/// Layers: config file, then flags, then `--set` overrides.
fn resolve_config(
    config: Option<&Path>,
    flags: Vec<(&str, Value)>,
    overrides: &[String],
) -> std::result::Result<ExperimentConfig, Failure> {
    let mut root = read_config(config)?;
    for (path, value) in flags {
        set_path(&mut root, path, value).map_err(usage)?;
    }
    apply_overrides(&mut root, overrides).map_err(usage)?;
    let mut cfg: ExperimentConfig = serde_json::from_value(root).map_err(|e| usage(format!("config: {e}")))?;
    if let Some(b) = cfg.backend.as_mut() {
        b.fill_from_env();
    }
    Ok(cfg)
}

fn write_output(out: Option<&Path>, output: &PipelineOutput) -> std::result::Result<(), Failure> {
    let run = output.to_run().map_err(runtime)?;
    match out {
        Some(p) => write_run_file(p, &run).map_err(runtime),
        None => io::stdout()
            .write_all(render_run(run.values()).as_bytes())
            .map_err(runtime),
    }
}

/// Reports per-query problems on standard error; true if there were any.
fn report_problems(output: &PipelineOutput) -> bool {
    let mut any = false;
    for (q, r) in &output.per_query {
        if !r.missing_in.is_empty() {
            log::warn!("query {q} is missing from: {}", r.missing_in.join(", "));
        }
        if let Some(e) = &r.error {
            eprintln!("query {q}: {e}");
            any = true;
        }
    }
    any
}

pub fn cmd_fuse(a: &FuseArgs) -> CmdResult {
    let method = match a.method.to_ascii_lowercase().as_str() {
        "rrf" => Method::Rrf,
        "combsum" => Method::Combsum,
        "combmnz" => Method::Combmnz,
        "vic" => {
            return Err(usage(
                "vic is not a score fusion formula; use `vic rerank` to assemble and rerank candidates",
            ))
        }
        other => return Err(usage(format!("unknown fusion method {other:?}; expected rrf, combsum or combmnz"))),
    };
    let mut flags = vec![("method", json!(method.as_str())), ("k", json!(a.depth))];
    if let Some(s) = source_values(&a.sources) {
        flags.push(("sources", s));
    }
    if let Some(w) = &a.weights {
        let w: crate::fusion::FusionWeights = w.parse().map_err(usage)?;
        flags.push(("weights", json!(w.as_map())));
    }
    if let Some(k) = a.rrf_k {
        flags.push(("rrf.k", json!(k)));
    }
    if let Some(d) = a.depth_pool {
        flags.push(("depth_pool", json!(d)));
    }
    let cfg = resolve_config(a.sources.config.as_deref(), flags, &a.sources.overrides)?;
    cfg.validate().map_err(usage)?;
    let sources = load_sources(&cfg.sources).map_err(usage)?;
    if let Some(w) = &cfg.weights {
        for s in &sources {
            if !w.contains_key(s.tag()) {
                return Err(usage(format!("no weight for source {:?}", s.tag())));
            }
        }
    }
    let output = run_pipeline(&cfg, &sources, None, None, None).map_err(runtime)?;
    let problems = report_problems(&output);
    write_output(a.sources.out.as_deref(), &output)?;
    Ok(if problems { EXIT_PARTIAL } else { EXIT_OK })
}

pub fn cmd_rerank(a: &RerankArgs) -> CmdResult {
    let mut flags: Vec<(&str, Value)> = vec![("method", json!("vic"))];
    if let Some(d) = a.direction {
        flags.push(("direction", json!(Direction::from(d).as_str())));
    }
    if let Some(k) = a.k {
        flags.push(("k", json!(k)));
    }
    if let Some(s) = source_values(&a.sources) {
        flags.push(("sources", s));
    }
    if let Some(m) = &a.manifest {
        flags.push(("manifest", json!(m)));
    }
    if let Some(g) = &a.grids {
        flags.push(("grids_dir", json!(g)));
    }
    if let Some(s) = a.grid_size {
        flags.push(("grid.s", json!(s)));
    }
    if let Some(b) = a.backend {
        flags.push(("backend.kind", json!(b.as_str())));
    }
    if let Some(e) = &a.endpoint {
        flags.push(("backend.endpoint_url", json!(e)));
    }
    if let Some(m) = &a.model {
        flags.push(("backend.model_id", json!(m)));
    }
    if let Some(t) = &a.template {
        flags.push(("backend.template", json!(t)));
    }
    if let Some(j) = a.jobs {
        flags.push(("backend.max_in_flight", json!(j)));
    }
    if a.no_duplicates {
        flags.push(("assembly.keep_duplicates", json!(false)));
    }
    if let Some(p) = &a.priority {
        let tags: Vec<&str> = p.split(',').map(str::trim).filter(|t| !t.is_empty()).collect();
        flags.push(("assembly.priority_order", json!(tags)));
    }
    if a.no_timestamps {
        flags.push(("record_latency", json!(false)));
    }
    let mut cfg = resolve_config(a.sources.config.as_deref(), flags, &a.sources.overrides)?;
    if cfg.backend.is_none() {
        let mut b = crate::reranker::BackendConfig::default();
        b.fill_from_env();
        cfg.backend = Some(b);
    }
    cfg.validate().map_err(usage)?;
    let manifest = load_manifest(cfg.manifest.as_deref())?;
    let sources = load_sources(&cfg.sources).map_err(usage)?;

    let pool = thread_pool(a.jobs)?;
    let mut transcript = match &a.log_transcripts {
        Some(p) => Some(io::BufWriter::new(
            fs::File::create(p).map_err(|e| usage(format!("cannot create {}: {e}", p.display())))?,
        )),
        None => None,
    };
    let output = pool
        .install(|| {
            run_pipeline(
                &cfg,
                &sources,
                Some(&manifest),
                None,
                transcript.as_mut().map(|w| w as &mut dyn Write),
            )
        })
        .map_err(runtime)?;
    if let Some(mut w) = transcript {
        w.flush().map_err(runtime)?;
    }
    let problems = report_problems(&output);
    write_output(a.sources.out.as_deref(), &output)?;
    summarize_statuses(&output);
    if output.all_failed() {
        eprintln!("rerank: the backend failed on every query; outputs keep the assembled order");
        return Ok(EXIT_PARTIAL);
    }
    Ok(if problems { EXIT_PARTIAL } else { EXIT_OK })
}

fn summarize_statuses(output: &PipelineOutput) {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in output.per_query.values() {
        let key = r.status().map(|s| s.as_str()).unwrap_or("failed");
        *counts.entry(key).or_default() += 1;
    }
    let parts: Vec<String> = counts.iter().map(|(k, v)| format!("{k}={v}")).collect();
    eprintln!("rerank: {} queries, {}", output.per_query.len(), parts.join(" "));
}

fn load_manifest(path: Option<&Path>) -> std::result::Result<CorpusManifest, Failure> {
    let path = path.ok_or_else(|| usage("a corpus manifest is required (--manifest)"))?;
    let (manifest, missing) = CorpusManifest::load_lenient(path).map_err(usage)?;
    for (id, p) in missing {
        log::warn!("frames of {id} not found at {}", p.display());
    }
    Ok(manifest)
}

fn parse_list<T: std::str::FromStr>(s: &str, what: &str) -> std::result::Result<Vec<T>, Failure> {
    s.split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(|v| v.parse().map_err(|_| usage(format!("bad {what} value {v:?}"))))
        .collect()
}

pub fn cmd_eval(a: &EvalArgs) -> CmdResult {
    let format: ReportFormat = a.format.parse().map_err(usage)?;
    let cutoffs: Vec<usize> = parse_list(&a.cutoffs, "cutoff")?;
    let manifest_path = a
        .manifest
        .as_deref()
        .ok_or_else(|| usage("no gold table: pass --manifest"))?;
    let (manifest, _) = CorpusManifest::load_lenient(manifest_path).map_err(usage)?;
    if manifest.gold.is_empty() {
        return Err(usage(format!("{} has no gold entries", manifest_path.display())));
    }
    let text = fs::read(&a.run).map_err(|e| usage(format!("cannot read {}: {e}", a.run.display())))?;
    let run = load_run_file(&a.run).map_err(usage)?;
    let method = run
        .values()
        .next()
        .map(|l| l.retriever_tag().to_string())
        .unwrap_or_default();
    let rankings: BTreeMap<_, _> = run
        .iter()
        .map(|(q, l)| {
            let input = QueryOutcomeInput {
                ranked: l.items().cloned().collect(),
                ..Default::default()
            };
            (q.clone(), input)
        })
        .collect();
    let fp_input = json!({"cutoffs": cutoffs, "run_sha256": hex::encode(Sha256::digest(&text))});
    let meta = ReportMeta {
        name: a.name.clone().unwrap_or_default(),
        dataset: a.dataset.clone().unwrap_or_default(),
        method,
        direction: Direction::default(),
        config_fingerprint: hex::encode(Sha256::digest(fp_input.to_string().as_bytes())),
    };
    let report = score(&rankings, &manifest.gold, &cutoffs, meta).map_err(usage)?;
    if let Some(p) = &a.out {
        let json = emit_report(&report, ReportFormat::Json).map_err(runtime)?;
        fs::write(p, json).map_err(|e| runtime(format!("cannot write {}: {e}", p.display())))?;
    }
    let rendered = emit_report(&report, format).map_err(runtime)?;
    io::stdout().write_all(rendered.as_bytes()).map_err(runtime)?;
    if !report.unknown_queries.is_empty() {
        eprintln!(
            "eval: {} run queries have no gold entry: {}",
            report.unknown_queries.len(),
            report.unknown_queries.iter().map(|q| q.as_str()).collect::<Vec<_>>().join(", ")
        );
        return Ok(EXIT_PARTIAL);
    }
    Ok(EXIT_OK)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepAxis {
    GridSize,
    K,
    BackendModel,
}

impl std::str::FromStr for SweepAxis {
    type Err = String;
    fn from_str(s: &str) -> std::result::Result<Self, String> {
        match s {
            "grid-size" => Ok(SweepAxis::GridSize),
            "K" | "k" => Ok(SweepAxis::K),
            "backend-model" => Ok(SweepAxis::BackendModel),
            other => Err(format!("unknown sweep axis {other:?}; expected grid-size, K or backend-model")),
        }
    }
}

impl SweepAxis {
    fn name(self) -> &'static str {
        match self {
            SweepAxis::GridSize => "grid-size",
            SweepAxis::K => "K",
            SweepAxis::BackendModel => "backend-model",
        }
    }

    /// Applies one axis value to a copy of the base config.
    pub fn apply(self, base: &ExperimentConfig, value: &str) -> crate::Result<ExperimentConfig> {
        let bad = || crate::Error::Config(format!("bad {} value {value:?}", self.name()));
        let mut cfg = base.clone();
        match self {
            SweepAxis::GridSize => {
                cfg.grid.s = value.parse().map_err(|_| bad())?;
                // prebuilt grids have a fixed size, so build them per point
                cfg.grids_dir = None;
            }
            SweepAxis::K => cfg.k = Some(value.parse().map_err(|_| bad())?),
            SweepAxis::BackendModel => {
                let b = cfg
                    .backend
                    .as_mut()
                    .ok_or_else(|| crate::Error::Config("backend-model sweep needs a backend".into()))?;
                b.model_id = value.to_string();
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn file_safe(s: &str) -> String {
    s.chars()
        .map(|c| if c.is_ascii_alphanumeric() || matches!(c, '.' | '_' | '-') { c } else { '_' })
        .collect()
}

pub fn cmd_sweep(a: &SweepArgs) -> CmdResult {
    let axis: SweepAxis = a.axis.parse().map_err(usage)?;
    let values: Vec<String> = a
        .values
        .split(',')
        .map(str::trim)
        .filter(|v| !v.is_empty())
        .map(str::to_string)
        .collect();
    if values.is_empty() {
        return Err(usage(format!("sweep axis {} has no values", axis.name())));
    }
    let mut flags = Vec::new();
    if let Some(m) = &a.manifest {
        flags.push(("manifest", json!(m)));
    }
    if a.no_timestamps {
        flags.push(("record_latency", json!(false)));
    }
    let base = resolve_config(Some(&a.config), flags, &a.overrides)?;
    let points: Vec<(String, ExperimentConfig)> = values
        .iter()
        .map(|v| axis.apply(&base, v).map(|c| (v.clone(), c)).map_err(usage))
        .collect::<std::result::Result<_, _>>()?;
    let manifest = load_manifest(base.manifest.as_deref())?;
    fs::create_dir_all(&a.out).map_err(|e| usage(format!("cannot create {}: {e}", a.out.display())))?;

    let mut reports: Vec<(String, EvalReport)> = Vec::new();
    let mut partial = false;
    for (value, cfg) in points {
        let stem = format!("{}-{}", file_safe(axis.name()), file_safe(&value));
        let (report, output) = run_experiment(&cfg, &manifest, None).map_err(runtime)?;
        partial |= report_problems(&output);
        let json = emit_report(&report, ReportFormat::Json).map_err(runtime)?;
        let report_path = a.out.join(format!("{stem}.report.json"));
        fs::write(&report_path, json).map_err(|e| runtime(format!("cannot write {}: {e}", report_path.display())))?;
        write_run_file(a.out.join(format!("{stem}.run")), &output.to_run().map_err(runtime)?).map_err(runtime)?;
        eprintln!("sweep: {}={value} done", axis.name());
        reports.push((value, report));
    }
    let csv = render_sweep_csv(axis.name(), &reports);
    let csv_path = a.out.join("sweep.csv");
    fs::write(&csv_path, csv).map_err(|e| runtime(format!("cannot write {}: {e}", csv_path.display())))?;
    let table: Vec<EvalReport> = reports.into_iter().map(|(_, r)| r).collect();
    io::stdout().write_all(render_table(&table).as_bytes()).map_err(runtime)?;
    Ok(if partial { EXIT_PARTIAL } else { EXIT_OK })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn canvas_forms() {
        assert_eq!(parse_canvas("1024"), Some((1024, 1024)));
        assert_eq!(parse_canvas("480x640"), Some((480, 640)));
        assert_eq!(parse_canvas("x"), None);
        assert_eq!(parse_canvas("-3"), None);
    }

    #[test]
    fn dotted_overrides_win() {
        let mut v = json!({"k": 14, "backend": {"kind": "mock"}});
        apply_overrides(
            &mut v,
            &["k=20".into(), "backend.model_id=m-1".into(), "grid.s=2".into()],
        )
        .unwrap();
        assert_eq!(v, json!({"k": 20, "backend": {"kind": "mock", "model_id": "m-1"}, "grid": {"s": 2}}));
        assert!(apply_overrides(&mut v, &["k".into()]).is_err());
        assert!(apply_overrides(&mut v, &["k.x=1".into()]).is_err());
    }

    #[test]
    fn sweep_axes() {
        assert_eq!("grid-size".parse::<SweepAxis>(), Ok(SweepAxis::GridSize));
        assert!("depth".parse::<SweepAxis>().is_err());
        let base = ExperimentConfig {
            sources: vec![crate::eval::SourceSpec::new("a.run")],
            grids_dir: Some("g".into()),
            ..Default::default()
        };
        let c = SweepAxis::GridSize.apply(&base, "2").unwrap();
        assert_eq!((c.grid.s, c.grids_dir), (2, None));
        assert_eq!(SweepAxis::K.apply(&base, "30").unwrap().k, Some(30));
        assert!(SweepAxis::K.apply(&base, "zero").is_err());
        assert!(SweepAxis::BackendModel.apply(&base, "m").is_err());
    }

    #[test]
    fn file_safe_names() {
        assert_eq!(file_safe("org/model:7b"), "org_model_7b");
    }
}
