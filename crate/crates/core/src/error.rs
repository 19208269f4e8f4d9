use std::path::PathBuf;

/// Errors produced anywhere in the harness.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("cannot read {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("parse error at line {line}: {message}")]
    Parse { line: u64, message: String },

    #[error("schema error: {0}")]
    Schema(String),

    #[error("typicality {value} for {category}/{exemplar} is outside [0, 1]")]
    Range {
        category: String,
        exemplar: String,
        value: f64,
    },

    #[error("unknown model `{0}`")]
    UnknownModel(String),

    #[error("dimension mismatch: expected {expected}, found {found}")]
    DimMismatch { expected: usize, found: usize },

    #[error("zero vector has no direction")]
    ZeroVector,

    #[error("empty input")]
    EmptyInput,

    #[error("non-finite value in input")]
    NonFinite,

    #[error("category `{category}` has no category-label embedding")]
    MissingLabelEmbedding { category: String },

    #[error("category `{category}` has no logits")]
    MissingLogits { category: String },

    #[error("exemplar `{exemplar}` has no image representation")]
    MissingImagePart { exemplar: String },

    #[error("category `{category}` has {found} usable exemplars, need at least {required}")]
    TooFewExemplars {
        category: String,
        found: usize,
        required: usize,
    },

    #[error("length mismatch: {left} vs {right}")]
    LengthMismatch { left: usize, right: usize },

    #[error("constant sequence has no ranking")]
    DegenerateInput,

    #[error("zero variance")]
    ZeroVariance,

    #[error("predictors are collinear (|r| = {correlation})")]
    CollinearPredictors { correlation: f64 },

    #[error("{found} observations, need at least {required}")]
    TooFewObservations { found: usize, required: usize },

    #[error("exemplar `{exemplar}` has no image vectors")]
    NoImages { exemplar: String },

    #[error("model `{model}` has no evaluable categories")]
    NoEvaluableCategories { model: String },

    #[error("models share no evaluable category")]
    NoCommonCategories,

    #[error("model `{model}` has no {modality} embeddings")]
    MissingModality { model: String, modality: String },

    #[error("config error: {0}")]
    Config(String),
}

impl Error {
    /// Stable snake_case reason code, used when an error is downgraded to a
    /// warning and the affected category is skipped.
    pub fn code(&self) -> &'static str {
        match self {
            Error::Io { .. } => "io",
            Error::Parse { .. } => "parse",
            Error::Schema(_) => "schema",
            Error::Range { .. } => "range",
            Error::UnknownModel(_) => "unknown_model",
            Error::DimMismatch { .. } => "dim_mismatch",
            Error::ZeroVector => "zero_vector",
            Error::EmptyInput => "empty_input",
            Error::NonFinite => "non_finite",
            Error::MissingLabelEmbedding { .. } => "missing_label_embedding",
            Error::MissingLogits { .. } => "missing_logits",
            Error::MissingImagePart { .. } => "missing_image_part",
            Error::TooFewExemplars { .. } => "too_few_exemplars",
            Error::LengthMismatch { .. } => "length_mismatch",
            Error::DegenerateInput => "degenerate_input",
            Error::ZeroVariance => "zero_variance",
            Error::CollinearPredictors { .. } => "collinear_predictors",
            Error::TooFewObservations { .. } => "too_few_observations",
            Error::NoImages { .. } => "no_images",
            Error::NoEvaluableCategories { .. } => "no_evaluable_categories",
            Error::NoCommonCategories => "no_common_categories",
            Error::MissingModality { .. } => "missing_modality",
            Error::Config(_) => "config",
        }
    }

    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }
}

pub type Result<T> = std::result::Result<T, Error>;
