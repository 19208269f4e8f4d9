//! Prototype construction and cosine-based typicality scoring.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{TypicalityScores, Vector, MIN_EXEMPLARS};

/// Dimension at which dot products switch to compensated summation.
const COMPENSATED_DIM: usize = 1024;

/// How a category's prototype and exemplar representations are formed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum PrototypeStrategy {
    /// Prototype is the mean of the exemplar representations.
    MeanOfExemplars,
    /// Prototype is the embedding of the category name.
    CategoryLabel,
    /// Exemplar = text ++ image part; prototype = label ++ mean of image parts.
    Appended,
    /// Score is the mean image/category logit; no vectors involved.
    CrossModal,
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    if a.len() < COMPENSATED_DIM {
        return a.iter().zip(b).map(|(x, y)| x * y).sum();
    }
    // Neumaier summation
    let mut sum = 0.0f64;
    let mut comp = 0.0f64;
    for (x, y) in a.iter().zip(b) {
        let term = x * y;
        let t = sum + term;
        if sum.abs() >= term.abs() {
            comp += (sum - t) + term;
        } else {
            comp += (term - t) + sum;
        }
        sum = t;
    }
    sum + comp
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine of the angle between `a` and `b`, clamped to `[-1, 1]`.
pub fn cosine_similarity(a: &Vector, b: &Vector) -> Result<f64> {
    if a.dim() != b.dim() {
        return Err(Error::DimMismatch {
            expected: a.dim(),
            found: b.dim(),
        });
    }
    let (a, b) = (a.as_slice(), b.as_slice());
    let denom = norm(a) * norm(b);
    if denom == 0.0 {
        return Err(Error::ZeroVector);
    }
    Ok((dot(a, b) / denom).clamp(-1.0, 1.0))
}

/// Coordinatewise arithmetic mean of raw (un-normalized) vectors.
pub fn average_vector<'a, I>(vectors: I) -> Result<Vector>
where
    I: IntoIterator<Item = &'a Vector>,
{
    let mut iter = vectors.into_iter();
    let first = iter.next().ok_or(Error::EmptyInput)?;
    let mut sum = first.as_slice().to_vec();
    let mut count = 1usize;
    for v in iter {
        if v.dim() != sum.len() {
            return Err(Error::DimMismatch {
                expected: sum.len(),
                found: v.dim(),
            });
        }
        for (acc, x) in sum.iter_mut().zip(v.as_slice()) {
            *acc += x;
        }
        count += 1;
    }
    let n = count as f64;
    Vector::new(sum.into_iter().map(|s| s / n).collect())
}

/// Mean of per-exemplar representations. Each exemplar counts once, however
/// many images went into its own representation.
pub fn mean_prototype(exemplars: &BTreeMap<String, Vector>) -> Result<Vector> {
    average_vector(exemplars.values())
}

/// Text coordinates followed by image coordinates.
pub fn appended_representation(text: &Vector, image: &Vector) -> Vector {
    let mut values = Vec::with_capacity(text.dim() + image.dim());
    values.extend_from_slice(text.as_slice());
    values.extend_from_slice(image.as_slice());
    // both parts are already finite and non-empty
    Vector::new(values).expect("concatenation of valid vectors")
}

/// Everything a strategy might need to score one category. Only the fields
/// the chosen strategy uses have to be filled in.
#[derive(Debug, Clone, Default)]
pub struct CategoryInputs {
    pub category: String,
    /// Primary exemplar representations (text or averaged image vectors).
    pub exemplars: BTreeMap<String, Vector>,
    /// Averaged image vectors, used as the second block by `Appended`.
    pub image_parts: BTreeMap<String, Vector>,
    /// Category-name embedding.
    pub label: Option<Vector>,
    /// Per-exemplar logits, used by `CrossModal`.
    pub logits: Option<BTreeMap<String, Vec<f64>>>,
}

impl CategoryInputs {
    pub fn new(category: impl Into<String>) -> Self {
        CategoryInputs {
            category: category.into(),
            ..Default::default()
        }
    }

    pub fn with_exemplars(mut self, exemplars: BTreeMap<String, Vector>) -> Self {
        self.exemplars = exemplars;
        self
    }

    pub fn with_image_parts(mut self, parts: BTreeMap<String, Vector>) -> Self {
        self.image_parts = parts;
        self
    }

    pub fn with_label(mut self, label: Vector) -> Self {
        self.label = Some(label);
        self
    }

    pub fn with_logits(mut self, logits: BTreeMap<String, Vec<f64>>) -> Self {
        self.logits = Some(logits);
        self
    }
}

fn require_exemplars(category: &str, found: usize) -> Result<()> {
    if found < MIN_EXEMPLARS {
        return Err(Error::TooFewExemplars {
            category: category.to_owned(),
            found,
            required: MIN_EXEMPLARS,
        });
    }
    Ok(())
}

fn cosine_scores(
    category: &str,
    reps: &BTreeMap<String, Vector>,
    prototype: &Vector,
) -> Result<TypicalityScores> {
    let scores = reps
        .iter()
        .map(|(name, v)| Ok((name.clone(), cosine_similarity(v, prototype)?)))
        .collect::<Result<BTreeMap<_, _>>>()?;
    Ok(TypicalityScores {
        category: category.to_owned(),
        scores,
    })
}

/// Scores every exemplar of a category; higher means more typical.
pub fn typicality_scores(
    strategy: PrototypeStrategy,
    inputs: &CategoryInputs,
) -> Result<TypicalityScores> {
    let category = inputs.category.as_str();
    let missing_label = || Error::MissingLabelEmbedding {
        category: category.to_owned(),
    };
    match strategy {
        PrototypeStrategy::MeanOfExemplars => {
            require_exemplars(category, inputs.exemplars.len())?;
            let prototype = mean_prototype(&inputs.exemplars)?;
            cosine_scores(category, &inputs.exemplars, &prototype)
        }
        PrototypeStrategy::CategoryLabel => {
            require_exemplars(category, inputs.exemplars.len())?;
            let label = inputs.label.as_ref().ok_or_else(missing_label)?;
            cosine_scores(category, &inputs.exemplars, label)
        }
        PrototypeStrategy::Appended => {
            require_exemplars(category, inputs.exemplars.len())?;
            let label = inputs.label.as_ref().ok_or_else(missing_label)?;
            let mut image_parts = BTreeMap::new();
            let mut reps = BTreeMap::new();
            for (name, text) in &inputs.exemplars {
                let image =
                    inputs
                        .image_parts
                        .get(name)
                        .ok_or_else(|| Error::MissingImagePart {
                            exemplar: name.clone(),
                        })?;
                reps.insert(name.clone(), appended_representation(text, image));
                image_parts.insert(name.clone(), image.clone());
            }
            let prototype = appended_representation(label, &mean_prototype(&image_parts)?);
            cosine_scores(category, &reps, &prototype)
        }
        PrototypeStrategy::CrossModal => {
            let logits = inputs.logits.as_ref().ok_or_else(|| Error::MissingLogits {
                category: category.to_owned(),
            })?;
            require_exemplars(category, logits.len())?;
            let mut scores = BTreeMap::new();
            for (name, values) in logits {
                if values.is_empty() {
                    return Err(Error::MissingLogits {
                        category: category.to_owned(),
                    });
                }
                let mean = values.iter().sum::<f64>() / values.len() as f64;
                if !mean.is_finite() {
                    return Err(Error::NonFinite);
                }
                scores.insert(name.clone(), mean);
            }
            Ok(TypicalityScores {
                category: category.to_owned(),
                scores,
            })
        }
    }
}
