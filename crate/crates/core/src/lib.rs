//! Measures how well model embeddings reproduce human typicality judgments.
//!
//! Exemplars are scored by cosine similarity to a category prototype and the
//! scores are rank-correlated with human ratings, per category and model.

pub mod config;
pub mod datastore;
pub mod error;
pub mod fixture;
pub mod model;
pub mod pipeline;
pub mod prototype;
pub mod report;
pub mod stats;

pub use config::{ClipApproach, RunConfig, StabilityConfig, TextPrototype};
pub use datastore::EmbeddingStore;
pub use error::{Error, Result};
pub use model::{
    CategoryAlignment, CombinedFit, EmbeddingRecord, ExemplarKey, LogitKey, LogitTable, Modality,
    ModelSummary, RatingsTable, RecordKind, TypicalityScores, ValidationReport, Vector, Violation,
    ViolationCode,
};
pub use pipeline::{CombinedGrid, EvaluationRun, ModelEvaluation, PairEvaluation, Warning};
pub use prototype::{cosine_similarity, PrototypeStrategy};
pub use stats::{spearman, StabilityReport};
