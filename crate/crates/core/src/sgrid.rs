//! S-Grid serialization: `s * s` uniformly sampled frames of a video, each
//! resized to one cell and tiled row-major onto a single canvas, optionally
//! paired with a subtitle string.
//!
//! Frames come from a directory of decoded images; container decoding is left
//! to whatever implements [`FrameProvider`].

use std::cmp::Ordering;
use std::fs;
use std::io::Cursor;
use std::path::{Path, PathBuf};

use image::codecs::jpeg::JpegEncoder;
use image::imageops::{self, FilterType};
use image::RgbImage;
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusManifest;
use crate::error::{Error, Result};
use crate::types::ItemId;

pub const DEFAULT_GRID_SIZE: u32 = 3;
pub const DEFAULT_CANVAS: u32 = 1024;
pub const DEFAULT_JPEG_QUALITY: u8 = 90;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum ResizeFilter {
    Nearest,
    #[default]
    Bilinear,
    CatmullRom,
    Lanczos3,
}

impl From<ResizeFilter> for FilterType {
    fn from(f: ResizeFilter) -> Self {
        match f {
            ResizeFilter::Nearest => FilterType::Nearest,
            ResizeFilter::Bilinear => FilterType::Triangle,
            ResizeFilter::CatmullRom => FilterType::CatmullRom,
            ResizeFilter::Lanczos3 => FilterType::Lanczos3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    /// Grid dimension; the grid holds `s * s` cells.
    #[serde(default = "default_s")]
    pub s: u32,
    #[serde(default = "default_canvas")]
    pub canvas_h: u32,
    #[serde(default = "default_canvas")]
    pub canvas_w: u32,
    #[serde(default)]
    pub filter: ResizeFilter,
}

fn default_s() -> u32 {
    DEFAULT_GRID_SIZE
}

fn default_canvas() -> u32 {
    DEFAULT_CANVAS
}

impl Default for GridSpec {
    fn default() -> Self {
        Self {
            s: DEFAULT_GRID_SIZE,
            canvas_h: DEFAULT_CANVAS,
            canvas_w: DEFAULT_CANVAS,
            filter: ResizeFilter::default(),
        }
    }
}

impl GridSpec {
    pub fn new(s: u32, canvas_h: u32, canvas_w: u32) -> Result<Self> {
        let spec = Self {
            s,
            canvas_h,
            canvas_w,
            filter: ResizeFilter::default(),
        };
        spec.validate()?;
        Ok(spec)
    }

    pub fn validate(&self) -> Result<()> {
        if self.s == 0 || self.canvas_h < self.s || self.canvas_w < self.s {
            return Err(Error::Config(format!(
                "grid {0}x{0} does not fit a {1}x{2} canvas",
                self.s, self.canvas_h, self.canvas_w
            )));
        }
        Ok(())
    }

    /// `(cell_h, cell_w)`.
    pub fn cell(&self) -> (u32, u32) {
        (self.canvas_h / self.s, self.canvas_w / self.s)
    }
}

/// Zero-based frame indices for an `s * s` grid over `frame_count` frames.
///
/// For `s >= 2` index `i` (1-based) is `floor((i - 1) * F / (s^2 - 1))`,
/// clamped to `F - 1`. A 1x1 grid takes the middle frame `floor(F / 2)`.
pub fn select_indices(frame_count: usize, s: u32) -> Vec<usize> {
    assert!(frame_count >= 1 && s >= 1, "select_indices needs F >= 1 and s >= 1");
    let cells = (s as usize) * (s as usize);
    if cells == 1 {
        return vec![frame_count / 2];
    }
    let last = frame_count - 1;
    (0..cells)
        .map(|i| ((i * frame_count) / (cells - 1)).min(last))
        .collect()
}

/// Random access to the decoded frames of one video, in temporal order.
pub trait FrameProvider {
    fn item(&self) -> &ItemId;
    fn frame_count(&self) -> usize;
    fn frame(&self, index: usize) -> Result<RgbImage>;
}

/// Fully decoded frames held in memory.
#[derive(Debug, Clone)]
pub struct FrameSource {
    pub item: ItemId,
    pub frames: Vec<RgbImage>,
}

impl FrameSource {
    pub fn new(item: ItemId, frames: Vec<RgbImage>) -> Result<Self> {
        if frames.is_empty() {
            return Err(Error::Config(format!("video {item} has no frames")));
        }
        Ok(Self { item, frames })
    }
}

impl FrameProvider for FrameSource {
    fn item(&self) -> &ItemId {
        &self.item
    }

    fn frame_count(&self) -> usize {
        self.frames.len()
    }

    fn frame(&self, index: usize) -> Result<RgbImage> {
        Ok(self.frames[index].clone())
    }
}

/// A frame directory decoded lazily, one file per requested index.
#[derive(Debug, Clone)]
pub struct FrameDir {
    item: ItemId,
    paths: Vec<PathBuf>,
}

impl FrameDir {
    pub fn open(item: ItemId, dir: impl AsRef<Path>) -> Result<Self> {
        let paths = list_frame_files(dir.as_ref())?;
        Ok(Self { item, paths })
    }

    pub fn paths(&self) -> &[PathBuf] {
        &self.paths
    }
}

impl FrameProvider for FrameDir {
    fn item(&self) -> &ItemId {
        &self.item
    }

    fn frame_count(&self) -> usize {
        self.paths.len()
    }

    fn frame(&self, index: usize) -> Result<RgbImage> {
        decode(&self.paths[index])
    }
}

fn decode(path: &Path) -> Result<RgbImage> {
    image::open(path)
        .map(|img| img.to_rgb8())
        .map_err(|source| Error::Image {
            path: path.to_path_buf(),
            source,
        })
}

fn is_frame_file(path: &Path) -> bool {
    path.extension()
        .and_then(|e| e.to_str())
        .map(|e| matches!(e.to_ascii_lowercase().as_str(), "jpg" | "jpeg" | "png"))
        .unwrap_or(false)
}

/// Image files of `dir` in natural filename order.
pub fn list_frame_files(dir: &Path) -> Result<Vec<PathBuf>> {
    let mut paths = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        if path.is_file() && is_frame_file(&path) {
            paths.push(path);
        }
    }
    if paths.is_empty() {
        return Err(Error::NoFrames(dir.to_path_buf()));
    }
    paths.sort_by(|a, b| {
        let a = a.file_name().map(|n| n.to_string_lossy()).unwrap_or_default();
        let b = b.file_name().map(|n| n.to_string_lossy()).unwrap_or_default();
        natural_cmp(&a, &b)
    });
    Ok(paths)
}

/// Decodes every frame of a directory.
pub fn load_frames(item: ItemId, dir: impl AsRef<Path>) -> Result<FrameSource> {
    let frames = list_frame_files(dir.as_ref())?
        .iter()
        .map(|p| decode(p))
        .collect::<Result<Vec<_>>>()?;
    FrameSource::new(item, frames)
}

/// Compares strings treating embedded digit runs as numbers, so `f_2`
/// sorts before `f_10`.
pub fn natural_cmp(a: &str, b: &str) -> Ordering {
    let (mut a, mut b) = (a, b);
    loop {
        match (a.is_empty(), b.is_empty()) {
            (true, true) => return Ordering::Equal,
            (true, false) => return Ordering::Less,
            (false, true) => return Ordering::Greater,
            _ => {}
        }
        let a_digit = a.starts_with(|c: char| c.is_ascii_digit());
        let b_digit = b.starts_with(|c: char| c.is_ascii_digit());
        let (ca, ra) = split_chunk(a, a_digit);
        let (cb, rb) = split_chunk(b, b_digit);
        let ord = if a_digit && b_digit {
            let ta = ca.trim_start_matches('0');
            let tb = cb.trim_start_matches('0');
            ta.len().cmp(&tb.len()).then_with(|| ta.cmp(tb)).then_with(|| ca.len().cmp(&cb.len()))
        } else {
            ca.cmp(cb)
        };
        if ord != Ordering::Equal {
            return ord;
        }
        a = ra;
        b = rb;
    }
}

fn split_chunk(s: &str, digits: bool) -> (&str, &str) {
    let end = s
        .find(|c: char| c.is_ascii_digit() != digits)
        .unwrap_or(s.len());
    s.split_at(end)
}

#[derive(Debug, Clone, PartialEq)]
pub struct SGrid {
    pub item: ItemId,
    pub s: u32,
    pub frame_count: usize,
    pub indices: Vec<usize>,
    pub canvas: RgbImage,
    pub subtitle: Option<String>,
}

/// Sidecar written next to each grid image.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SGridSidecar {
    pub item: ItemId,
    pub s: u32,
    pub frame_count: usize,
    pub indices: Vec<usize>,
    pub canvas_w: u32,
    pub canvas_h: u32,
    pub subtitle: Option<String>,
}

pub fn compose_grid(src: &dyn FrameProvider, spec: &GridSpec) -> Result<SGrid> {
    spec.validate()?;
    let frame_count = src.frame_count();
    if frame_count == 0 {
        return Err(Error::Config(format!("video {} has no frames", src.item())));
    }
    let (cell_h, cell_w) = spec.cell();
    let indices = select_indices(frame_count, spec.s);
    let mut canvas = RgbImage::new(cell_w * spec.s, cell_h * spec.s);
    let filter: FilterType = spec.filter.into();

    let mut last: Option<(usize, RgbImage)> = None;
    for (pos, &idx) in indices.iter().enumerate() {
        // consecutive repeats are common for short videos
        let cell = match &last {
            Some((prev, img)) if *prev == idx => img.clone(),
            _ => {
                let frame = src.frame(idx)?;
                let cell = if frame.dimensions() == (cell_w, cell_h) {
                    frame
                } else {
                    imageops::resize(&frame, cell_w, cell_h, filter)
                };
                last = Some((idx, cell.clone()));
                cell
            }
        };
        let row = pos as u32 / spec.s;
        let col = pos as u32 % spec.s;
        imageops::replace(&mut canvas, &cell, (col * cell_w) as i64, (row * cell_h) as i64);
    }

    Ok(SGrid {
        item: src.item().clone(),
        s: spec.s,
        frame_count,
        indices,
        canvas,
        subtitle: None,
    })
}

impl SGrid {
    pub fn with_subtitle(mut self, subtitle: Option<String>) -> Self {
        self.subtitle = subtitle;
        self
    }

    pub fn to_jpeg(&self, quality: u8) -> Result<Vec<u8>> {
        let mut buf = Cursor::new(Vec::new());
        JpegEncoder::new_with_quality(&mut buf, quality).encode_image(&self.canvas)?;
        Ok(buf.into_inner())
    }

    pub fn sidecar(&self) -> SGridSidecar {
        SGridSidecar {
            item: self.item.clone(),
            s: self.s,
            frame_count: self.frame_count,
            indices: self.indices.clone(),
            canvas_w: self.canvas.width(),
            canvas_h: self.canvas.height(),
            subtitle: self.subtitle.clone(),
        }
    }

    pub fn image_path(dir: &Path, item: &ItemId) -> PathBuf {
        dir.join(format!("{item}.sgrid.jpg"))
    }

    pub fn sidecar_path(dir: &Path, item: &ItemId) -> PathBuf {
        dir.join(format!("{item}.sgrid.json"))
    }

    /// Writes `<item>.sgrid.jpg` and `<item>.sgrid.json` into `dir`.
    pub fn write(&self, dir: &Path, quality: u8) -> Result<()> {
        let img = Self::image_path(dir, &self.item);
        fs::write(&img, self.to_jpeg(quality)?).map_err(|e| Error::io(&img, e))?;
        let side = Self::sidecar_path(dir, &self.item);
        let json = serde_json::to_string_pretty(&self.sidecar())?;
        fs::write(&side, json + "\n").map_err(|e| Error::io(&side, e))
    }

    /// Reads a grid previously written by [`SGrid::write`].
    pub fn load(dir: &Path, item: &ItemId) -> Result<Self> {
        let side = Self::sidecar_path(dir, item);
        let text = fs::read_to_string(&side).map_err(|e| Error::io(&side, e))?;
        let meta: SGridSidecar = serde_json::from_str(&text).map_err(|e| Error::json(&side, e))?;
        let canvas = decode(&Self::image_path(dir, item))?;
        Ok(Self {
            item: meta.item,
            s: meta.s,
            frame_count: meta.frame_count,
            indices: meta.indices,
            canvas,
            subtitle: meta.subtitle,
        })
    }
}

/// Composes the grid of a manifest video, decoding only the sampled frames,
/// and attaches its subtitle.
pub fn build_video_grid(manifest: &CorpusManifest, item: &ItemId, spec: &GridSpec) -> Result<SGrid> {
    let video = manifest
        .videos
        .get(item)
        .ok_or_else(|| Error::Unresolvable(item.to_string()))?;
    let frames = FrameDir::open(item.clone(), &video.frames_path)?;
    Ok(compose_grid(&frames, spec)?.with_subtitle(video.subtitle.clone()))
}
