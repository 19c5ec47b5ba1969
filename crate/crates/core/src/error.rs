use std::path::PathBuf;

use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid identifier {0:?}: {1}")]
    InvalidId(String, &'static str),

    #[error("{path}:{line}: {message}")]
    Malformed {
        path: PathBuf,
        line: usize,
        message: String,
    },

    #[error("duplicate item {item} in list for query {query}")]
    DuplicateItem { query: String, item: String },

    #[error("run file mixes retriever tags {first:?} and {other:?}")]
    NonUniformTag { first: String, other: String },

    #[error("invalid ranked list: {0}")]
    InvalidList(String),

    #[error("non-finite score for query {query}, item {item}")]
    NonFinite { query: String, item: String },

    #[error("empty score row for query {0}")]
    EmptyRow(String),

    #[error("unknown query {0}")]
    UnknownQuery(String),

    #[error("ranked lists belong to different queries ({0} and {1})")]
    MixedQueries(String, String),

    #[error("no ranked lists supplied")]
    NoLists,

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("missing fusion weight for retriever {0:?}")]
    MissingWeight(String),

    #[error("not a permutation of 1..{size}: {order:?}")]
    NotAPermutation { order: Vec<usize>, size: usize },

    #[error("permutation of size {perm} cannot reorder a sequence of length {seq}")]
    SizeMismatch { perm: usize, seq: usize },

    #[error("cannot resolve item {0} for prompt building")]
    Unresolvable(String),

    #[error("frame directory {0} holds no image files")]
    NoFrames(PathBuf),

    #[error("manifest path {0} does not exist")]
    MissingPath(PathBuf),

    #[error("image error for {path}: {source}")]
    Image {
        path: PathBuf,
        #[source]
        source: image::ImageError,
    },

    #[error(transparent)]
    ImageEncode(#[from] image::ImageError),

    #[error("{path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: PathBuf,
        #[source]
        source: serde_json::Error,
    },

    #[error(transparent)]
    Serde(#[from] serde_json::Error),
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn json(path: impl Into<PathBuf>, source: serde_json::Error) -> Self {
        Error::Json {
            path: path.into(),
            source,
        }
    }
}
