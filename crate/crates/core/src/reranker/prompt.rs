//! List-wise prompt construction and its chat-completion wire form.

use std::collections::HashMap;
use std::sync::Arc;

use base64::Engine as _;
use serde_json::{json, Value};

use crate::corpus::CorpusManifest;
use crate::error::{Error, Result};
use crate::sgrid::SGrid;
use crate::types::{CandidateSequence, Direction, ItemId, QueryId};

struct Template {
    id: &'static str,
    text: &'static str,
}

const TEMPLATES: &[Template] = &[
    Template {
        id: "t2v-v1",
        text: include_str!("../../assets/prompts/t2v-v1.txt"),
    },
    Template {
        id: "v2t-v1",
        text: include_str!("../../assets/prompts/v2t-v1.txt"),
    },
];

pub fn default_template_id(direction: Direction) -> &'static str {
    match direction {
        Direction::T2v => "t2v-v1",
        Direction::V2t => "v2t-v1",
    }
}

pub fn template_ids() -> impl Iterator<Item = &'static str> {
    TEMPLATES.iter().map(|t| t.id)
}

/// `(preamble, closing instruction)` of a template.
fn template_parts(id: &str) -> Result<(&'static str, &'static str)> {
    let t = TEMPLATES
        .iter()
        .find(|t| t.id == id)
        .ok_or_else(|| Error::Config(format!("unknown prompt template {id:?}")))?;
    let (pre, post) = t
        .text
        .split_once("\n---\n")
        .expect("prompt templates have a --- separator");
    Ok((pre.trim(), post.trim()))
}

#[derive(Debug, Clone, PartialEq)]
pub enum CandidateContent {
    Grid { grid: Arc<SGrid>, subtitle: Option<String> },
    Text(String),
}

#[derive(Debug, Clone, PartialEq)]
pub struct CandidatePart {
    /// 1-based position in the candidate sequence.
    pub label: usize,
    pub item: ItemId,
    pub content: CandidateContent,
}

/// Everything sent to the model for one query.
#[derive(Debug, Clone, PartialEq)]
pub struct PromptBundle {
    pub query: QueryId,
    pub direction: Direction,
    pub query_text: Option<String>,
    pub query_image: Option<Arc<SGrid>>,
    pub query_subtitle: Option<String>,
    pub candidates: Vec<CandidatePart>,
    /// Prompt template id.
    pub instruction: String,
}

impl PromptBundle {
    pub fn k(&self) -> usize {
        self.candidates.len()
    }

    pub fn validate(&self) -> Result<()> {
        let mismatch = |what: &str| Err(Error::Config(format!("{} prompt for {}: {what}", self.direction, self.query)));
        match self.direction {
            Direction::T2v => {
                if self.query_text.is_none() {
                    return mismatch("missing query text");
                }
                if self.candidates.iter().any(|c| !matches!(c.content, CandidateContent::Grid { .. })) {
                    return mismatch("text candidate in a video ranking");
                }
            }
            Direction::V2t => {
                if self.query_image.is_none() {
                    return mismatch("missing query grid");
                }
                if self.candidates.iter().any(|c| !matches!(c.content, CandidateContent::Text(_))) {
                    return mismatch("video candidate in a caption ranking");
                }
            }
        }
        if self.candidates.iter().enumerate().any(|(i, c)| c.label != i + 1) {
            return mismatch("labels are not 1..K in order");
        }
        template_parts(&self.instruction).map(|_| ())
    }

    /// Grid dimension shown to the model, taken from the first grid present.
    fn grid_dim(&self) -> u32 {
        self.query_image
            .as_ref()
            .map(|g| g.s)
            .or_else(|| {
                self.candidates.iter().find_map(|c| match &c.content {
                    CandidateContent::Grid { grid, .. } => Some(grid.s),
                    CandidateContent::Text(_) => None,
                })
            })
            .unwrap_or(crate::sgrid::DEFAULT_GRID_SIZE)
    }
}

/// Serializes the query and every slot of `seq`. Duplicate slots each get
/// their own label and repeat the same content.
pub fn build_prompt(
    query: &QueryId,
    seq: &CandidateSequence,
    manifest: &CorpusManifest,
    grids: &HashMap<ItemId, Arc<SGrid>>,
    direction: Direction,
    template: Option<&str>,
) -> Result<PromptBundle> {
    let instruction = template.unwrap_or(default_template_id(direction)).to_string();
    let mut bundle = PromptBundle {
        query: query.clone(),
        direction,
        query_text: None,
        query_image: None,
        query_subtitle: None,
        candidates: Vec::with_capacity(seq.len()),
        instruction,
    };

    match direction {
        Direction::T2v => {
            let text = manifest
                .caption(query.as_str())
                .ok_or_else(|| Error::Unresolvable(query.to_string()))?;
            bundle.query_text = Some(text.to_string());
        }
        Direction::V2t => {
            let grid = ItemId::new(query.as_str())
                .ok()
                .and_then(|id| grids.get(&id))
                .ok_or_else(|| Error::Unresolvable(query.to_string()))?;
            bundle.query_subtitle = grid
                .subtitle
                .clone()
                .or_else(|| manifest.subtitle(query.as_str()).map(str::to_string));
            bundle.query_image = Some(Arc::clone(grid));
        }
    }

    for (i, slot) in seq.slots().iter().enumerate() {
        let content = match direction {
            Direction::T2v => {
                let grid = grids
                    .get(&slot.item)
                    .ok_or_else(|| Error::Unresolvable(slot.item.to_string()))?;
                let subtitle = grid
                    .subtitle
                    .clone()
                    .or_else(|| manifest.subtitle(slot.item.as_str()).map(str::to_string));
                CandidateContent::Grid {
                    grid: Arc::clone(grid),
                    subtitle,
                }
            }
            Direction::V2t => CandidateContent::Text(
                manifest
                    .caption(slot.item.as_str())
                    .ok_or_else(|| Error::Unresolvable(slot.item.to_string()))?
                    .to_string(),
            ),
        };
        bundle.candidates.push(CandidatePart {
            label: i + 1,
            item: slot.item.clone(),
            content,
        });
    }
    bundle.validate()?;
    Ok(bundle)
}

/// How image parts are written into a rendered request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageMode {
    /// Inline base64 JPEG data URLs at the given quality.
    Inline { quality: u8 },
    /// A placeholder naming the item, for transcripts without payloads.
    Reference,
}

fn text_part(text: impl Into<String>) -> Value {
    json!({"type": "text", "text": text.into()})
}

fn image_part(grid: &SGrid, mode: ImageMode) -> Result<Value> {
    Ok(match mode {
        ImageMode::Inline { quality } => {
            let b64 = base64::engine::general_purpose::STANDARD.encode(grid.to_jpeg(quality)?);
            json!({"type": "image_url", "image_url": {"url": format!("data:image/jpeg;base64,{b64}")}})
        }
        ImageMode::Reference => json!({"type": "image_ref", "item": grid.item.as_str()}),
    })
}

/// The user-message content parts, in prompt order.
pub fn content_parts(bundle: &PromptBundle, mode: ImageMode) -> Result<Vec<Value>> {
    let (preamble, closing) = template_parts(&bundle.instruction)?;
    let fill = |s: &str| {
        s.replace("{K}", &bundle.k().to_string())
            .replace("{S}", &bundle.grid_dim().to_string())
    };
    let mut parts = vec![text_part(fill(preamble))];

    if let Some(text) = &bundle.query_text {
        parts.push(text_part(format!("Query: {text}")));
    }
    if let Some(grid) = &bundle.query_image {
        parts.push(text_part("Query video:"));
        parts.push(image_part(grid, mode)?);
        if let Some(sub) = &bundle.query_subtitle {
            parts.push(text_part(format!("Query subtitle: {sub}")));
        }
    }

    for c in &bundle.candidates {
        match &c.content {
            CandidateContent::Grid { grid, subtitle } => {
                parts.push(text_part(format!("[{}]", c.label)));
                parts.push(image_part(grid, mode)?);
                if let Some(sub) = subtitle {
                    parts.push(text_part(format!("Subtitle [{}]: {sub}", c.label)));
                }
            }
            CandidateContent::Text(text) => parts.push(text_part(format!("[{}] {text}", c.label))),
        }
    }
    parts.push(text_part(fill(closing)));
    Ok(parts)
}

/// A chat-completion request body carrying the whole bundle in one user
/// message.
pub fn chat_request(bundle: &PromptBundle, model: &str, temperature: f64, mode: ImageMode) -> Result<Value> {
    Ok(json!({
        "model": model,
        "temperature": temperature,
        "messages": [{"role": "user", "content": content_parts(bundle, mode)?}],
    }))
}
