//! Score matrices and the corpus manifest.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::Value;

use crate::error::{Error, Result};
use crate::types::{ItemId, QueryId, ScoreMatrix};

/// Loads `{query_id: {item_id: score}}`. The retriever tag is the file stem.
pub fn load_score_matrix(path: impl AsRef<Path>) -> Result<ScoreMatrix> {
    let path = path.as_ref();
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let tag = path
        .file_stem()
        .map(|s| s.to_string_lossy().into_owned())
        .unwrap_or_default();
    parse_score_matrix(&text, tag).map_err(|e| match e {
        Error::Serde(source) => Error::json(path, source),
        other => other,
    })
}

pub fn parse_score_matrix(text: &str, tag: impl Into<String>) -> Result<ScoreMatrix> {
    let raw: BTreeMap<String, BTreeMap<String, Value>> = serde_json::from_str(text)?;
    let mut rows = BTreeMap::new();
    for (q, row) in raw {
        let query = QueryId::new(q)?;
        let mut parsed = BTreeMap::new();
        for (item, v) in row {
            let score = match &v {
                Value::Number(n) => n.as_f64(),
                // JSON has no NaN/Infinity literals; accept them (and numbers) as strings
                Value::String(s) => s.trim().parse::<f64>().ok(),
                _ => None,
            };
            let score = score.filter(|s| s.is_finite()).ok_or_else(|| Error::NonFinite {
                query: query.to_string(),
                item: item.clone(),
            })?;
            parsed.insert(ItemId::new(item)?, score);
        }
        rows.insert(query, parsed);
    }
    ScoreMatrix::new(tag, rows)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct VideoEntry {
    pub frames_path: PathBuf,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub subtitle: Option<String>,
}

/// Videos with their frame directories, caption texts and per-query gold sets.
///
/// Relative frame paths are resolved against the manifest's directory.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CorpusManifest {
    #[serde(default)]
    pub videos: BTreeMap<ItemId, VideoEntry>,
    #[serde(default)]
    pub captions: BTreeMap<ItemId, String>,
    #[serde(default)]
    pub gold: BTreeMap<QueryId, BTreeSet<ItemId>>,
}

impl CorpusManifest {
    /// Loads and validates the manifest; any missing frame path is an error.
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let (manifest, missing) = Self::load_lenient(path)?;
        match missing.into_iter().next() {
            Some((_, p)) => Err(Error::MissingPath(p)),
            None => Ok(manifest),
        }
    }

    /// Loads the manifest and reports videos whose frame path is missing
    /// instead of failing on them.
    pub fn load_lenient(path: impl AsRef<Path>) -> Result<(Self, Vec<(ItemId, PathBuf)>)> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut manifest: CorpusManifest = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for v in manifest.videos.values_mut() {
            if v.frames_path.is_relative() {
                v.frames_path = base.join(&v.frames_path);
            }
        }
        manifest.validate_gold()?;
        let missing = manifest.missing_paths();
        Ok((manifest, missing))
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let manifest: CorpusManifest = serde_json::from_str(text)?;
        manifest.validate_gold()?;
        Ok(manifest)
    }

    pub fn validate_gold(&self) -> Result<()> {
        if let Some((q, _)) = self.gold.iter().find(|(_, g)| g.is_empty()) {
            return Err(Error::Config(format!("gold set for query {q} is empty")));
        }
        Ok(())
    }

    pub fn missing_paths(&self) -> Vec<(ItemId, PathBuf)> {
        self.videos
            .iter()
            .filter(|(_, v)| !v.frames_path.exists())
            .map(|(id, v)| (id.clone(), v.frames_path.clone()))
            .collect()
    }

    pub fn gold_for(&self, query: &QueryId) -> Option<&BTreeSet<ItemId>> {
        self.gold.get(query)
    }

    pub fn subtitle(&self, video: &str) -> Option<&str> {
        self.videos.get(video).and_then(|v| v.subtitle.as_deref())
    }

    pub fn caption(&self, id: &str) -> Option<&str> {
        self.captions.get(id).map(String::as_str)
    }

    /// True when the id names a known video or caption.
    pub fn knows(&self, id: &str) -> bool {
        self.videos.contains_key(id) || self.captions.contains_key(id)
    }
}
