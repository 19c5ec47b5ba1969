//! Candidate assembly, score fusion, S-Grid video serialization and
//! list-wise reranking for cross-modal retrieval, plus the evaluation
//! harness that ties them together.

pub mod assembly;
pub mod cli;
pub mod corpus;
pub mod error;
pub mod eval;
pub mod fusion;
pub mod reranker;
pub mod runfile;
pub mod sgrid;
pub mod types;

pub use error::{Error, Result};
