//! Domain types shared by the loaders, the scoring code and the pipeline.
//!
//! Everything here is an immutable value once constructed. Types that carry
//! invariants (`Vector`, `ExemplarKey`, `RatingsTable`, `LogitTable`) keep
//! their fields private and check on construction.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Minimum number of exemplars a category needs before any rank correlation
/// over it means anything.
pub const MIN_EXEMPLARS: usize = 3;

/// A finite, non-empty embedding vector.
#[derive(Debug, Clone, PartialEq)]
pub struct Vector(Vec<f64>);

impl Vector {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::EmptyInput);
        }
        if values.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(Vector(values))
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    /// Multiplies every coordinate by `factor`.
    pub fn scaled(&self, factor: f64) -> Result<Vector> {
        Vector::new(self.0.iter().map(|v| v * factor).collect())
    }
}

impl AsRef<[f64]> for Vector {
    fn as_ref(&self) -> &[f64] {
        &self.0
    }
}

/// `(category, exemplar)` pair. Both parts are whitespace-trimmed; case is
/// preserved and comparison is byte equality.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize)]
pub struct ExemplarKey {
    category: String,
    exemplar: String,
}

impl ExemplarKey {
    pub fn new(category: impl AsRef<str>, exemplar: impl AsRef<str>) -> Self {
        ExemplarKey {
            category: category.as_ref().trim().to_owned(),
            exemplar: exemplar.as_ref().trim().to_owned(),
        }
    }

    /// Key for a category-label record (empty exemplar).
    pub fn label(category: impl AsRef<str>) -> Self {
        ExemplarKey::new(category, "")
    }

    pub fn category(&self) -> &str {
        &self.category
    }

    pub fn exemplar(&self) -> &str {
        &self.exemplar
    }
}

impl fmt::Display for ExemplarKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        if self.exemplar.is_empty() {
            write!(f, "{}", self.category)
        } else {
            write!(f, "{}/{}", self.category, self.exemplar)
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Modality {
    Text,
    Image,
}

impl fmt::Display for Modality {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Modality::Text => "text",
            Modality::Image => "image",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RecordKind {
    Exemplar,
    CategoryLabel,
}

/// One embedding as read from disk. The vector is kept raw here so that a
/// malformed record can still be reported by [`validate_embedding_set`].
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingRecord {
    pub model_id: String,
    pub modality: Modality,
    pub kind: RecordKind,
    pub key: ExemplarKey,
    pub image_id: Option<String>,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum ViolationCode {
    EmptyModelId,
    EmptyCategory,
    MissingExemplar,
    UnexpectedExemplar,
    MissingImageId,
    UnexpectedImageId,
    EmptyVector,
    NonFiniteValue,
    DimMismatch,
    DuplicateRecord,
}

impl ViolationCode {
    pub fn as_str(self) -> &'static str {
        match self {
            ViolationCode::EmptyModelId => "empty model id",
            ViolationCode::EmptyCategory => "empty category",
            ViolationCode::MissingExemplar => "missing exemplar",
            ViolationCode::UnexpectedExemplar => "unexpected exemplar",
            ViolationCode::MissingImageId => "missing image id",
            ViolationCode::UnexpectedImageId => "unexpected image id",
            ViolationCode::EmptyVector => "empty vector",
            ViolationCode::NonFiniteValue => "non-finite value",
            ViolationCode::DimMismatch => "dim mismatch",
            ViolationCode::DuplicateRecord => "duplicate record",
        }
    }
}

impl fmt::Display for ViolationCode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Violation {
    /// Zero-based position of the offending record.
    pub index: usize,
    pub code: ViolationCode,
    pub detail: String,
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "record {}: {}", self.index, self.code)?;
        if !self.detail.is_empty() {
            write!(f, " ({})", self.detail)?;
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ValidationReport {
    pub violations: Vec<Violation>,
}

impl ValidationReport {
    pub fn is_ok(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks every record-level and set-level invariant. Never fails: every
/// broken rule becomes a [`Violation`].
pub fn validate_embedding_set(records: &[EmbeddingRecord]) -> ValidationReport {
    let mut violations = Vec::new();
    let mut dims: HashMap<&str, usize> = HashMap::new();
    let mut seen = HashSet::new();
    let mut push = |index, code, detail: String| {
        violations.push(Violation {
            index,
            code,
            detail,
        })
    };

    for (index, rec) in records.iter().enumerate() {
        if rec.model_id.trim().is_empty() {
            push(index, ViolationCode::EmptyModelId, String::new());
        }
        if rec.key.category().is_empty() {
            push(index, ViolationCode::EmptyCategory, String::new());
        }
        match rec.kind {
            RecordKind::Exemplar if rec.key.exemplar().is_empty() => {
                push(index, ViolationCode::MissingExemplar, String::new())
            }
            RecordKind::CategoryLabel if !rec.key.exemplar().is_empty() => push(
                index,
                ViolationCode::UnexpectedExemplar,
                rec.key.exemplar().to_owned(),
            ),
            _ => {}
        }
        let wants_image_id = rec.modality == Modality::Image && rec.kind == RecordKind::Exemplar;
        match (&rec.image_id, wants_image_id) {
            (None, true) => push(index, ViolationCode::MissingImageId, rec.key.to_string()),
            (Some(id), false) => push(index, ViolationCode::UnexpectedImageId, id.clone()),
            (Some(id), true) if id.trim().is_empty() => {
                push(index, ViolationCode::MissingImageId, rec.key.to_string())
            }
            _ => {}
        }

        if rec.vector.is_empty() {
            push(index, ViolationCode::EmptyVector, String::new());
        } else {
            if let Some(pos) = rec.vector.iter().position(|v| !v.is_finite()) {
                push(
                    index,
                    ViolationCode::NonFiniteValue,
                    format!("coordinate {pos}"),
                );
            }
            let expected = *dims
                .entry(rec.model_id.as_str())
                .or_insert(rec.vector.len());
            if expected != rec.vector.len() {
                push(
                    index,
                    ViolationCode::DimMismatch,
                    format!(
                        "model {} expects {expected}, got {}",
                        rec.model_id,
                        rec.vector.len()
                    ),
                );
            }
        }

        let identity = (
            rec.model_id.as_str(),
            rec.modality,
            rec.kind,
            &rec.key,
            rec.image_id.as_deref(),
        );
        if !seen.insert(identity) {
            push(index, ViolationCode::DuplicateRecord, rec.key.to_string());
        }
    }

    ValidationReport { violations }
}

/// Human typicality norms: production proportions in `[0, 1]`, higher is
/// more typical.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct RatingsTable {
    categories: BTreeMap<String, BTreeMap<String, f64>>,
}

impl RatingsTable {
    pub fn from_entries<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (ExemplarKey, f64)>,
    {
        let mut categories: BTreeMap<String, BTreeMap<String, f64>> = BTreeMap::new();
        for (key, value) in entries {
            if key.category().is_empty() || key.exemplar().is_empty() {
                return Err(Error::Schema(format!(
                    "empty category or exemplar in `{key}`"
                )));
            }
            if !(0.0..=1.0).contains(&value) {
                return Err(Error::Range {
                    category: key.category().to_owned(),
                    exemplar: key.exemplar().to_owned(),
                    value,
                });
            }
            let slot = categories.entry(key.category().to_owned()).or_default();
            if slot.insert(key.exemplar().to_owned(), value).is_some() {
                return Err(Error::Schema(format!("duplicate rating for {key}")));
            }
        }
        if let Some((category, exemplars)) =
            categories.iter().find(|(_, ex)| ex.len() < MIN_EXEMPLARS)
        {
            return Err(Error::Schema(format!(
                "too few exemplars: category `{category}` has {}, need {MIN_EXEMPLARS}",
                exemplars.len()
            )));
        }
        Ok(RatingsTable { categories })
    }

    pub fn categories(&self) -> impl Iterator<Item = &str> {
        self.categories.keys().map(String::as_str)
    }

    pub fn category(&self, name: &str) -> Option<&BTreeMap<String, f64>> {
        self.categories.get(name)
    }

    pub fn get(&self, key: &ExemplarKey) -> Option<f64> {
        self.categories
            .get(key.category())?
            .get(key.exemplar())
            .copied()
    }

    pub fn len(&self) -> usize {
        self.categories.values().map(BTreeMap::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.categories.is_empty()
    }

    pub fn entries(&self) -> impl Iterator<Item = (ExemplarKey, f64)> + '_ {
        self.categories
            .iter()
            .flat_map(|(c, ex)| ex.iter().map(move |(e, v)| (ExemplarKey::new(c, e), *v)))
    }
}

#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct LogitKey {
    pub model_id: String,
    pub key: ExemplarKey,
    pub image_id: String,
}

/// Image/category-name alignment logits from a multimodal model.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct LogitTable {
    entries: BTreeMap<LogitKey, f64>,
}

impl LogitTable {
    pub fn from_entries<I>(entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (LogitKey, f64)>,
    {
        let mut map = BTreeMap::new();
        for (key, logit) in entries {
            if !logit.is_finite() {
                return Err(Error::Schema(format!(
                    "non-finite logit for {} image {}",
                    key.key, key.image_id
                )));
            }
            if key.image_id.trim().is_empty() {
                return Err(Error::Schema(format!("empty image id for {}", key.key)));
            }
            let label = format!("{} image {}", key.key, key.image_id);
            if map.insert(key, logit).is_some() {
                return Err(Error::Schema(format!("duplicate logit for {label}")));
            }
        }
        Ok(LogitTable { entries: map })
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn has_model(&self, model_id: &str) -> bool {
        self.entries.keys().any(|k| k.model_id == model_id)
    }

    pub fn categories(&self, model_id: &str) -> Vec<String> {
        let mut out: Vec<String> = self
            .entries
            .keys()
            .filter(|k| k.model_id == model_id)
            .map(|k| k.key.category().to_owned())
            .collect();
        out.dedup();
        out
    }

    /// Logits of one category grouped per exemplar, each list in image-id
    /// order.
    pub fn exemplar_logits(&self, model_id: &str, category: &str) -> BTreeMap<String, Vec<f64>> {
        let mut out: BTreeMap<String, Vec<f64>> = BTreeMap::new();
        for (k, v) in &self.entries {
            if k.model_id == model_id && k.key.category() == category {
                out.entry(k.key.exemplar().to_owned()).or_default().push(*v);
            }
        }
        out
    }

    pub fn iter(&self) -> impl Iterator<Item = (&LogitKey, f64)> {
        self.entries.iter().map(|(k, v)| (k, *v))
    }
}

/// Model-predicted typicality for each exemplar of one category.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypicalityScores {
    pub category: String,
    pub scores: BTreeMap<String, f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CategoryAlignment {
    pub category: String,
    pub rho: f64,
    pub n_exemplars: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelSummary {
    pub model_id: String,
    pub mean_rho: f64,
    pub stdev_rho: f64,
    pub n_categories: usize,
}

/// Standardized two-predictor fit for one category.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CombinedFit {
    pub category: String,
    pub beta_language: f64,
    pub beta_vision: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub rho_predicted: f64,
}
