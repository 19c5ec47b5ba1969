//! Synthetic corpus shared by the integration and acceptance tests.
//!
//! Query `qNNNN` has the single gold video `vNNNN`. Each retriever returns
//! a list of `DEPTH` videos drawn from a per-query pool of hard negatives
//! plus random fillers, and places the gold item at rank 1 with
//! probability `p_top1`, somewhere in ranks 2..=DEPTH with the remaining
//! `p_found - p_top1`, and nowhere otherwise.

#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use image::{Rgb, RgbImage};
use rand::rngs::StdRng;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};

pub const DEPTH: usize = 20;
pub const FRAMES_PER_VIDEO: usize = 4;

#[derive(Debug, Clone, Copy)]
pub struct RetrieverSpec {
    pub tag: &'static str,
    pub p_top1: f64,
    pub p_found: f64,
}

pub const RETRIEVERS: [RetrieverSpec; 3] = [
    RetrieverSpec { tag: "r1", p_top1: 0.55, p_found: 0.85 },
    RetrieverSpec { tag: "r2", p_top1: 0.45, p_found: 0.80 },
    RetrieverSpec { tag: "r3", p_top1: 0.35, p_found: 0.75 },
];

pub struct Corpus {
    pub dir: PathBuf,
    pub manifest: PathBuf,
    pub runs: Vec<PathBuf>,
    /// `lists[r][q]`: item ids of retriever `r` for query `q`, best first.
    pub lists: Vec<Vec<Vec<String>>>,
    pub n: usize,
}

pub fn qid(i: usize) -> String {
    format!("q{i:04}")
}

pub fn vid(i: usize) -> String {
    format!("v{i:04}")
}

/// Writes a corpus of `n` queries and videos under `dir`.
pub fn generate(dir: &Path, n: usize, seed: u64) -> Corpus {
    let mut rng = StdRng::seed_from_u64(seed);
    fs::create_dir_all(dir).unwrap();

    let mut videos = serde_json::Map::new();
    let mut captions = serde_json::Map::new();
    let mut gold = serde_json::Map::new();
    for i in 0..n {
        let frames = dir.join("frames").join(vid(i));
        fs::create_dir_all(&frames).unwrap();
        for f in 0..FRAMES_PER_VIDEO {
            let color = Rgb([(i * 37 % 256) as u8, (f * 60) as u8, (i * 11 % 256) as u8]);
            RgbImage::from_pixel(8, 8, color)
                .save(frames.join(format!("frame_{f}.png")))
                .unwrap();
        }
        videos.insert(
            vid(i),
            serde_json::json!({"frames_path": format!("frames/{}", vid(i)), "subtitle": format!("speech {i}")}),
        );
        captions.insert(qid(i), format!("a clip described as number {i}").into());
        captions.insert(vid(i), format!("caption of video {i}").into());
        gold.insert(qid(i), serde_json::json!([vid(i)]));
    }
    let manifest = dir.join("manifest.json");
    let doc = serde_json::json!({"videos": videos, "captions": captions, "gold": gold});
    fs::write(&manifest, serde_json::to_string_pretty(&doc).unwrap()).unwrap();

    let mut lists = vec![Vec::with_capacity(n); RETRIEVERS.len()];
    for q in 0..n {
        let mut others: Vec<usize> = (0..n).filter(|&v| v != q).collect();
        others.shuffle(&mut rng);
        let hard: Vec<usize> = others[..8.min(others.len())].to_vec();
        for (r, spec) in RETRIEVERS.iter().enumerate() {
            let mut pool: Vec<usize> = hard.clone();
            pool.shuffle(&mut rng);
            pool.truncate(5);
            let mut fill: Vec<usize> = others.iter().copied().filter(|v| !pool.contains(v)).collect();
            fill.shuffle(&mut rng);
            pool.extend(fill);
            pool.shuffle(&mut rng);
            let mut items: Vec<String> = pool.into_iter().take(DEPTH).map(vid).collect();
            let u: f64 = rng.gen();
            if u < spec.p_top1 {
                items.insert(0, vid(q));
            } else if u < spec.p_found {
                let at = rng.gen_range(1..DEPTH).min(items.len());
                items.insert(at, vid(q));
            }
            items.truncate(DEPTH);
            lists[r].push(items);
        }
    }

    let runs = RETRIEVERS
        .iter()
        .enumerate()
        .map(|(r, spec)| {
            let mut text = String::new();
            for (q, items) in lists[r].iter().enumerate() {
                for (pos, item) in items.iter().enumerate() {
                    let score = 1.0 - 0.01 * pos as f64;
                    writeln!(text, "{} Q0 {} {} {:.4} {}", qid(q), item, pos + 1, score, spec.tag).unwrap();
                }
            }
            let path = dir.join(format!("{}.run", spec.tag));
            fs::write(&path, text).unwrap();
            path
        })
        .collect();

    Corpus {
        dir: dir.to_path_buf(),
        manifest,
        runs,
        lists,
        n,
    }
}

/// Plain round-robin over truncated lists, written independently of the
/// library: `ceil(k / m)` items per list, rounds in list order, cut to `k`.
pub fn reference_candidates(lists: &[&[String]], k: usize, keep_duplicates: bool) -> Vec<String> {
    let m = lists.len();
    let depth = k / m + usize::from(!k.is_multiple_of(m));
    let mut stream = Vec::new();
    for round in 0..depth {
        for l in lists {
            if round < l.len() {
                stream.push(l[round].clone());
            }
        }
    }
    if keep_duplicates {
        stream.truncate(k);
        return stream;
    }
    let mut out: Vec<String> = Vec::new();
    for item in stream {
        if !out.contains(&item) {
            out.push(item);
        }
        if out.len() == k {
            break;
        }
    }
    out
}

/// Fraction of queries whose gold video appears among the candidates.
pub fn candidate_ceiling(corpus: &Corpus, retrievers: &[usize], k: usize, keep_duplicates: bool) -> f64 {
    let hits = (0..corpus.n)
        .filter(|&q| {
            let lists: Vec<&[String]> = retrievers.iter().map(|&r| corpus.lists[r][q].as_slice()).collect();
            reference_candidates(&lists, k, keep_duplicates).contains(&vid(q))
        })
        .count();
    hits as f64 / corpus.n as f64
}

pub fn vic(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vic"))
        .args(args)
        .env_remove("VIC_ENDPOINT_URL")
        .env_remove("VIC_API_KEY")
        .env_remove("VIC_MODEL")
        .output()
        .expect("failed to run the vic binary")
}

pub fn code(out: &Output) -> i32 {
    out.status.code().unwrap_or(-1)
}

pub fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Reads the aggregate recall of a JSON report.
pub fn aggregate(report: &serde_json::Value) -> Vec<(String, f64)> {
    report["aggregate"]
        .as_object()
        .unwrap()
        .iter()
        .map(|(k, v)| (k.clone(), v.as_f64().unwrap()))
        .collect()
}
