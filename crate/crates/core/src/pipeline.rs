//! Evaluation orchestration: single-model alignment, the language x vision
//! combined grid, the multimodal approaches, and the stability study.
//!
//! Per-category work fans out over rayon. Results are collected in input
//! order and merged into ordered maps, so output never depends on
//! scheduling.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::path::Path;

use rayon::prelude::*;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::config::{ClipApproach, RunConfig, TextPrototype};
use crate::datastore::{load_embeddings, load_logits, load_ratings, EmbeddingStore};
use crate::error::{Error, Result};
use crate::model::{
    CategoryAlignment, CombinedFit, LogitTable, Modality, ModelSummary, RatingsTable,
    TypicalityScores, Vector, MIN_EXEMPLARS,
};
use crate::prototype::{average_vector, typicality_scores, CategoryInputs, PrototypeStrategy};
use crate::stats::{
    ols2_standardized, single_image_stability, spearman, summarize, StabilityReport,
    MIN_FIT_OBSERVATIONS,
};

/// A skipped unit of work and why it was skipped.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub struct Warning {
    /// What was skipped, e.g. `text:minilm/Bird`.
    pub scope: String,
    /// Stable snake_case reason code.
    pub code: String,
    pub detail: String,
}

impl Warning {
    pub fn new(
        scope: impl Into<String>,
        code: impl Into<String>,
        detail: impl Into<String>,
    ) -> Self {
        Warning {
            scope: scope.into(),
            code: code.into(),
            detail: detail.into(),
        }
    }

    fn from_error(scope: impl Into<String>, err: &Error) -> Self {
        Warning::new(scope, err.code(), err.to_string())
    }
}

impl fmt::Display for Warning {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.scope, self.code, self.detail)
    }
}

/// Alignment of one model (or one multimodal approach) across categories.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ModelEvaluation {
    pub model_id: String,
    pub alignments: Vec<CategoryAlignment>,
    /// Scores of every category that produced an alignment.
    pub scores: BTreeMap<String, TypicalityScores>,
    pub summary: ModelSummary,
    pub warnings: Vec<Warning>,
}

/// Builds per-category inputs restricted to rated exemplars, recording what
/// was dropped on either side.
struct CategoryPlan {
    category: String,
    inputs: Result<CategoryInputs>,
    warnings: Vec<Warning>,
}

fn overlap_warnings(
    scope: &str,
    embedded: &BTreeSet<String>,
    rated: &BTreeMap<String, f64>,
) -> Vec<Warning> {
    let unrated: Vec<&str> = embedded
        .iter()
        .filter(|e| !rated.contains_key(*e))
        .map(String::as_str)
        .collect();
    let unembedded: Vec<&str> = rated
        .keys()
        .filter(|e| !embedded.contains(*e))
        .map(String::as_str)
        .collect();
    let mut out = Vec::new();
    if !unrated.is_empty() {
        log::warn!("{scope}: dropping unrated exemplars {unrated:?}");
        out.push(Warning::new(scope, "unrated_exemplars", unrated.join(",")));
    }
    if !unembedded.is_empty() {
        log::warn!("{scope}: dropping exemplars without embeddings {unembedded:?}");
        out.push(Warning::new(
            scope,
            "missing_exemplars",
            unembedded.join(","),
        ));
    }
    out
}

fn scope(kind: &str, model_id: &str, category: &str) -> String {
    format!("{kind}:{model_id}/{category}")
}

type Scored = (TypicalityScores, CategoryAlignment);

/// Scores every planned category, correlates with the human norms, and
/// summarizes. Categories that fail are skipped with a warning.
fn evaluate_plans(
    kind: &str,
    model_id: &str,
    summary_id: &str,
    ratings: &RatingsTable,
    strategy: PrototypeStrategy,
    plans: Vec<CategoryPlan>,
) -> Result<ModelEvaluation> {
    let outcomes: Vec<(String, Vec<Warning>, Result<Scored>)> = plans
        .into_par_iter()
        .map(|plan| {
            let result = plan.inputs.and_then(|inputs| {
                let scores = typicality_scores(strategy, &inputs)?;
                let alignment = align(&scores, ratings)?;
                Ok((scores, alignment))
            });
            (plan.category, plan.warnings, result)
        })
        .collect();

    let mut warnings = Vec::new();
    let mut alignments = Vec::new();
    let mut scores = BTreeMap::new();
    for (category, mut w, result) in outcomes {
        warnings.append(&mut w);
        match result {
            Ok((s, a)) => {
                alignments.push(a);
                scores.insert(category, s);
            }
            Err(e) => {
                let scope = scope(kind, model_id, &category);
                log::warn!("{scope}: skipped: {e}");
                warnings.push(Warning::from_error(scope, &e));
            }
        }
    }
    if alignments.is_empty() {
        return Err(Error::NoEvaluableCategories {
            model: model_id.to_owned(),
        });
    }
    let rhos: Vec<f64> = alignments.iter().map(|a| a.rho).collect();
    let summary = summarize(summary_id, &rhos)?;
    Ok(ModelEvaluation {
        model_id: summary_id.to_owned(),
        alignments,
        scores,
        summary,
        warnings,
    })
}

/// Spearman rho between model scores and human ratings over the exemplars
/// both cover.
pub fn align(scores: &TypicalityScores, ratings: &RatingsTable) -> Result<CategoryAlignment> {
    let human = ratings
        .category(&scores.category)
        .ok_or_else(|| Error::TooFewExemplars {
            category: scores.category.clone(),
            found: 0,
            required: MIN_EXEMPLARS,
        })?;
    let (model, people): (Vec<f64>, Vec<f64>) = scores
        .scores
        .iter()
        .filter_map(|(name, s)| human.get(name).map(|h| (*s, *h)))
        .unzip();
    if model.len() < MIN_EXEMPLARS {
        return Err(Error::TooFewExemplars {
            category: scores.category.clone(),
            found: model.len(),
            required: MIN_EXEMPLARS,
        });
    }
    Ok(CategoryAlignment {
        category: scores.category.clone(),
        rho: spearman(&model, &people)?,
        n_exemplars: model.len(),
    })
}

fn rated_text(
    store: &EmbeddingStore,
    model_id: &str,
    category: &str,
    rated: &BTreeMap<String, f64>,
) -> Result<(BTreeMap<String, Vector>, BTreeSet<String>)> {
    let all = store.text_exemplars(model_id, category)?;
    let embedded = all.keys().cloned().collect();
    let kept = all
        .into_iter()
        .filter(|(name, _)| rated.contains_key(name))
        .map(|(name, v)| (name, v.clone()))
        .collect();
    Ok((kept, embedded))
}

fn rated_image_averages(
    store: &EmbeddingStore,
    model_id: &str,
    category: &str,
    rated: &BTreeMap<String, f64>,
) -> Result<(BTreeMap<String, Vector>, BTreeSet<String>)> {
    let all = store.image_exemplars(model_id, category)?;
    let embedded = all.keys().cloned().collect();
    let kept = all
        .into_iter()
        .filter(|(name, _)| rated.contains_key(name))
        .map(|(name, imgs)| Ok((name, average_vector(imgs)?)))
        .collect::<Result<_>>()?;
    Ok((kept, embedded))
}

/// Categories a model covers in `modality`, intersected with the rated
/// categories. Rated categories the model lacks produce warnings.
fn shared_categories(
    kind: &str,
    model_id: &str,
    covered: BTreeSet<String>,
    ratings: &RatingsTable,
    warnings: &mut Vec<Warning>,
) -> Vec<String> {
    let mut out = Vec::new();
    for category in ratings.categories() {
        if covered.contains(category) {
            out.push(category.to_owned());
        } else {
            warnings.push(Warning::new(
                scope(kind, model_id, category),
                "missing_category",
                "no embeddings for this category",
            ));
        }
    }
    out
}

fn with_leading_warnings(mut eval: ModelEvaluation, mut leading: Vec<Warning>) -> ModelEvaluation {
    leading.append(&mut eval.warnings);
    eval.warnings = leading;
    eval
}

/// Alignment of a text model, with the prototype taken as the mean exemplar
/// vector or the category-label embedding.
pub fn evaluate_text_model(
    store: &EmbeddingStore,
    ratings: &RatingsTable,
    model_id: &str,
    prototype: TextPrototype,
) -> Result<ModelEvaluation> {
    let kind = "text";
    if !store.has_modality(model_id, Modality::Text)? {
        return Err(Error::MissingModality {
            model: model_id.to_owned(),
            modality: "text".into(),
        });
    }
    let mut leading = Vec::new();
    let covered = store.categories(model_id, Modality::Text)?;
    let categories = shared_categories(kind, model_id, covered, ratings, &mut leading);
    let plans = categories
        .into_iter()
        .map(|category| {
            let rated = ratings
                .category(&category)
                .expect("shared category is rated");
            let scope = scope(kind, model_id, &category);
            let mut warnings = Vec::new();
            let inputs =
                rated_text(store, model_id, &category, rated).and_then(|(kept, embedded)| {
                    warnings = overlap_warnings(&scope, &embedded, rated);
                    let mut inputs = CategoryInputs::new(&category).with_exemplars(kept);
                    if prototype == TextPrototype::Label {
                        if let Some(label) =
                            store.label_vector(model_id, Modality::Text, &category)?
                        {
                            inputs = inputs.with_label(label.clone());
                        }
                    }
                    Ok(inputs)
                });
            CategoryPlan {
                category,
                inputs,
                warnings,
            }
        })
        .collect();
    let eval = evaluate_plans(
        kind,
        model_id,
        model_id,
        ratings,
        prototype.strategy(),
        plans,
    )?;
    Ok(with_leading_warnings(eval, leading))
}

/// Alignment of a vision model: exemplar = mean of its image vectors,
/// prototype = mean of exemplar vectors.
pub fn evaluate_vision_model(
    store: &EmbeddingStore,
    ratings: &RatingsTable,
    model_id: &str,
) -> Result<ModelEvaluation> {
    let kind = "vision";
    if !store.has_modality(model_id, Modality::Image)? {
        return Err(Error::MissingModality {
            model: model_id.to_owned(),
            modality: "image".into(),
        });
    }
    let mut leading = Vec::new();
    let covered = store.categories(model_id, Modality::Image)?;
    let categories = shared_categories(kind, model_id, covered, ratings, &mut leading);
    let plans = categories
        .into_iter()
        .map(|category| {
            let rated = ratings
                .category(&category)
                .expect("shared category is rated");
            let scope = scope(kind, model_id, &category);
            let mut warnings = Vec::new();
            let inputs =
                rated_image_averages(store, model_id, &category, rated).map(|(kept, embedded)| {
                    warnings = overlap_warnings(&scope, &embedded, rated);
                    CategoryInputs::new(&category).with_exemplars(kept)
                });
            CategoryPlan {
                category,
                inputs,
                warnings,
            }
        })
        .collect();
    let eval = evaluate_plans(
        kind,
        model_id,
        model_id,
        ratings,
        PrototypeStrategy::MeanOfExemplars,
        plans,
    )?;
    Ok(with_leading_warnings(eval, leading))
}

/// Per-category combined fits for one (language, vision) pair.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PairEvaluation {
    pub language: String,
    pub vision: String,
    pub fits: Vec<CombinedFit>,
    /// Mean of `rho_predicted` over fitted categories; `None` when every
    /// category was skipped.
    pub mean_rho: Option<f64>,
    pub warnings: Vec<Warning>,
}

fn fit_category(
    category: &str,
    language: &TypicalityScores,
    vision: &TypicalityScores,
    human: &BTreeMap<String, f64>,
) -> Result<CombinedFit> {
    let mut y = Vec::new();
    let mut x1 = Vec::new();
    let mut x2 = Vec::new();
    for (name, l) in &language.scores {
        if let (Some(v), Some(h)) = (vision.scores.get(name), human.get(name)) {
            y.push(*h);
            x1.push(*l);
            x2.push(*v);
        }
    }
    if y.len() < MIN_FIT_OBSERVATIONS {
        return Err(Error::TooFewExemplars {
            category: category.to_owned(),
            found: y.len(),
            required: MIN_FIT_OBSERVATIONS,
        });
    }
    let fit = ols2_standardized(&y, &x1, &x2)?;
    let rho_predicted = spearman(&fit.fitted, &y)?;
    Ok(CombinedFit {
        category: category.to_owned(),
        beta_language: fit.beta1,
        beta_vision: fit.beta2,
        intercept: fit.intercept,
        r_squared: fit.r_squared,
        rho_predicted,
    })
}

/// Fits human typicality on the language and vision scores of every
/// category both models could score.
pub fn evaluate_combined_pair(
    language: &ModelEvaluation,
    vision: &ModelEvaluation,
    ratings: &RatingsTable,
) -> Result<PairEvaluation> {
    let common: Vec<&String> = language
        .scores
        .keys()
        .filter(|c| vision.scores.contains_key(*c))
        .collect();
    if common.is_empty() {
        return Err(Error::NoCommonCategories);
    }
    let pair_scope = format!("pair:{}+{}", language.model_id, vision.model_id);
    let mut warnings = Vec::new();
    for c in language.scores.keys().chain(vision.scores.keys()) {
        if !(language.scores.contains_key(c) && vision.scores.contains_key(c)) {
            warnings.push(Warning::new(
                format!("{pair_scope}/{c}"),
                "category_not_shared",
                "scored by only one model of the pair",
            ));
        }
    }
    warnings.sort();
    warnings.dedup();

    let outcomes: Vec<(&String, Result<CombinedFit>)> = common
        .into_par_iter()
        .map(|c| {
            let human = ratings.category(c).ok_or_else(|| Error::TooFewExemplars {
                category: c.clone(),
                found: 0,
                required: MIN_FIT_OBSERVATIONS,
            });
            let fit =
                human.and_then(|h| fit_category(c, &language.scores[c], &vision.scores[c], h));
            (c, fit)
        })
        .collect();

    let mut fits = Vec::new();
    for (category, outcome) in outcomes {
        match outcome {
            Ok(fit) => fits.push(fit),
            Err(e) => {
                let scope = format!("{pair_scope}/{category}");
                log::warn!("{scope}: skipped: {e}");
                warnings.push(Warning::from_error(scope, &e));
            }
        }
    }
    let mean_rho = if fits.is_empty() {
        None
    } else {
        Some(fits.iter().map(|f| f.rho_predicted).sum::<f64>() / fits.len() as f64)
    };
    Ok(PairEvaluation {
        language: language.model_id.clone(),
        vision: vision.model_id.clone(),
        fits,
        mean_rho,
        warnings,
    })
}

/// Every (language, vision) pair. Cells whose models could not be evaluated
/// carry warnings and no value.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CombinedGrid {
    pub language_models: Vec<String>,
    pub vision_models: Vec<String>,
    /// Row-major: one entry per (language, vision) pair.
    pub cells: Vec<PairEvaluation>,
}

impl CombinedGrid {
    pub fn cell(&self, language: &str, vision: &str) -> Option<&PairEvaluation> {
        self.cells
            .iter()
            .find(|c| c.language == language && c.vision == vision)
    }

    pub fn is_empty(&self) -> bool {
        self.cells.is_empty()
    }
}

fn failed_cell(language: &str, vision: &str, warnings: Vec<Warning>) -> PairEvaluation {
    PairEvaluation {
        language: language.to_owned(),
        vision: vision.to_owned(),
        fits: Vec::new(),
        mean_rho: None,
        warnings,
    }
}

/// Builds the grid from already-evaluated models.
pub fn grid_from_evaluations(
    language: &[(String, Result<ModelEvaluation>)],
    vision: &[(String, Result<ModelEvaluation>)],
    ratings: &RatingsTable,
) -> CombinedGrid {
    let pairs: Vec<(usize, usize)> = (0..language.len())
        .flat_map(|l| (0..vision.len()).map(move |v| (l, v)))
        .collect();
    let cells = pairs
        .into_par_iter()
        .map(|(l, v)| {
            let (lang_id, lang) = &language[l];
            let (vis_id, vis) = &vision[v];
            let scope = format!("pair:{lang_id}+{vis_id}");
            match (lang, vis) {
                (Ok(lang), Ok(vis)) => {
                    evaluate_combined_pair(lang, vis, ratings).unwrap_or_else(|e| {
                        failed_cell(lang_id, vis_id, vec![Warning::from_error(scope, &e)])
                    })
                }
                (lang, vis) => {
                    let warnings = [lang, vis]
                        .into_iter()
                        .filter_map(|r| r.as_ref().err())
                        .map(|e| Warning::from_error(scope.clone(), e))
                        .collect();
                    failed_cell(lang_id, vis_id, warnings)
                }
            }
        })
        .collect();
    CombinedGrid {
        language_models: language.iter().map(|(id, _)| id.clone()).collect(),
        vision_models: vision.iter().map(|(id, _)| id.clone()).collect(),
        cells,
    }
}

/// Evaluates every listed model, then every pair.
pub fn combined_grid(
    store: &EmbeddingStore,
    ratings: &RatingsTable,
    language_models: &[String],
    vision_models: &[String],
    prototype: TextPrototype,
) -> CombinedGrid {
    let language: Vec<(String, Result<ModelEvaluation>)> = language_models
        .iter()
        .map(|m| (m.clone(), evaluate_text_model(store, ratings, m, prototype)))
        .collect();
    let vision: Vec<(String, Result<ModelEvaluation>)> = vision_models
        .iter()
        .map(|m| (m.clone(), evaluate_vision_model(store, ratings, m)))
        .collect();
    grid_from_evaluations(&language, &vision, ratings)
}

fn require_modality(store: &EmbeddingStore, model_id: &str, modality: Modality) -> Result<()> {
    if store.has_modality(model_id, modality)? {
        Ok(())
    } else {
        Err(Error::MissingModality {
            model: model_id.to_owned(),
            modality: modality.to_string(),
        })
    }
}

/// Alignment of a multimodal model under one of the four approaches. The
/// summary's `model_id` is the approach name.
pub fn evaluate_clip(
    store: Option<&EmbeddingStore>,
    ratings: &RatingsTable,
    logits: Option<&LogitTable>,
    model_id: &str,
    approach: ClipApproach,
) -> Result<ModelEvaluation> {
    let kind = format!("clip-{approach}");
    let mut leading = Vec::new();

    if approach == ClipApproach::CrossModality {
        let logits = logits.ok_or_else(|| Error::MissingLogits {
            category: String::new(),
        })?;
        if !logits.has_model(model_id) {
            return Err(Error::MissingLogits {
                category: String::new(),
            });
        }
        let covered = logits.categories(model_id).into_iter().collect();
        let categories = shared_categories(&kind, model_id, covered, ratings, &mut leading);
        let plans = categories
            .into_iter()
            .map(|category| {
                let rated = ratings
                    .category(&category)
                    .expect("shared category is rated");
                let all = logits.exemplar_logits(model_id, &category);
                let embedded: BTreeSet<String> = all.keys().cloned().collect();
                let warnings =
                    overlap_warnings(&scope(&kind, model_id, &category), &embedded, rated);
                let kept = all
                    .into_iter()
                    .filter(|(n, _)| rated.contains_key(n))
                    .collect();
                CategoryPlan {
                    inputs: Ok(CategoryInputs::new(&category).with_logits(kept)),
                    category,
                    warnings,
                }
            })
            .collect();
        let eval = evaluate_plans(
            &kind,
            model_id,
            approach.as_str(),
            ratings,
            PrototypeStrategy::CrossModal,
            plans,
        )?;
        return Ok(with_leading_warnings(eval, leading));
    }

    let store = store.ok_or_else(|| Error::UnknownModel(model_id.to_owned()))?;
    let (covered, strategy) = match approach {
        ClipApproach::Category => {
            require_modality(store, model_id, Modality::Text)?;
            (
                store.categories(model_id, Modality::Text)?,
                PrototypeStrategy::CategoryLabel,
            )
        }
        ClipApproach::Mean => {
            require_modality(store, model_id, Modality::Image)?;
            (
                store.categories(model_id, Modality::Image)?,
                PrototypeStrategy::MeanOfExemplars,
            )
        }
        ClipApproach::Appended => {
            require_modality(store, model_id, Modality::Text)?;
            require_modality(store, model_id, Modality::Image)?;
            let text = store.categories(model_id, Modality::Text)?;
            let image = store.categories(model_id, Modality::Image)?;
            (
                text.intersection(&image).cloned().collect(),
                PrototypeStrategy::Appended,
            )
        }
        ClipApproach::CrossModality => unreachable!("handled above"),
    };
    let categories = shared_categories(&kind, model_id, covered, ratings, &mut leading);
    let plans = categories
        .into_iter()
        .map(|category| {
            let rated = ratings
                .category(&category)
                .expect("shared category is rated");
            let scope = scope(&kind, model_id, &category);
            let mut warnings = Vec::new();
            let inputs = clip_inputs(
                store,
                model_id,
                &category,
                rated,
                approach,
                &scope,
                &mut warnings,
            );
            CategoryPlan {
                category,
                inputs,
                warnings,
            }
        })
        .collect();
    let eval = evaluate_plans(&kind, model_id, approach.as_str(), ratings, strategy, plans)?;
    Ok(with_leading_warnings(eval, leading))
}

fn clip_inputs(
    store: &EmbeddingStore,
    model_id: &str,
    category: &str,
    rated: &BTreeMap<String, f64>,
    approach: ClipApproach,
    scope: &str,
    warnings: &mut Vec<Warning>,
) -> Result<CategoryInputs> {
    let label = || -> Result<Vector> {
        store
            .label_vector(model_id, Modality::Text, category)?
            .cloned()
            .ok_or_else(|| Error::MissingLabelEmbedding {
                category: category.to_owned(),
            })
    };
    let inputs = CategoryInputs::new(category);
    match approach {
        ClipApproach::Category => {
            let (kept, embedded) = rated_text(store, model_id, category, rated)?;
            warnings.extend(overlap_warnings(scope, &embedded, rated));
            Ok(inputs.with_exemplars(kept).with_label(label()?))
        }
        ClipApproach::Mean => {
            let (kept, embedded) = rated_image_averages(store, model_id, category, rated)?;
            warnings.extend(overlap_warnings(scope, &embedded, rated));
            Ok(inputs.with_exemplars(kept))
        }
        ClipApproach::Appended => {
            let (text, text_embedded) = rated_text(store, model_id, category, rated)?;
            let (image, image_embedded) = rated_image_averages(store, model_id, category, rated)?;
            // an exemplar needs both halves
            let both: BTreeSet<String> = text_embedded
                .intersection(&image_embedded)
                .cloned()
                .collect();
            warnings.extend(overlap_warnings(scope, &both, rated));
            let text = text
                .into_iter()
                .filter(|(n, _)| image.contains_key(n))
                .collect();
            Ok(inputs
                .with_exemplars(text)
                .with_image_parts(image)
                .with_label(label()?))
        }
        ClipApproach::CrossModality => unreachable!("logit path does not use embeddings"),
    }
}

/// Stability study for the configured (model, category).
pub fn run_stability(
    store: &EmbeddingStore,
    ratings: &RatingsTable,
    model_id: &str,
    category: &str,
    trials: usize,
    seed: u64,
) -> Result<StabilityReport> {
    let rated = ratings
        .category(category)
        .ok_or_else(|| Error::TooFewExemplars {
            category: category.to_owned(),
            found: 0,
            required: MIN_EXEMPLARS,
        })?;
    let images: BTreeMap<String, Vec<Vector>> = store
        .image_exemplars(model_id, category)?
        .into_iter()
        .map(|(name, imgs)| (name, imgs.into_iter().cloned().collect()))
        .collect();
    if images.is_empty() {
        return Err(Error::MissingModality {
            model: model_id.to_owned(),
            modality: "image".into(),
        });
    }
    single_image_stability(&images, rated, trials, seed).map_err(|e| match e {
        Error::TooFewExemplars {
            found, required, ..
        } => Error::TooFewExemplars {
            category: category.to_owned(),
            found,
            required,
        },
        other => other,
    })
}

/// Loaded inputs plus their content digests.
pub struct Inputs {
    pub store: Option<EmbeddingStore>,
    pub ratings: RatingsTable,
    pub logits: Option<LogitTable>,
    /// File name -> hex SHA-256 of its bytes.
    pub digests: BTreeMap<String, String>,
}

pub fn file_digest(path: &Path) -> Result<String> {
    let bytes = std::fs::read(path).map_err(|e| Error::Io {
        path: path.to_owned(),
        source: e,
    })?;
    Ok(hex::encode(Sha256::digest(&bytes)))
}

fn digest_key(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

pub fn load_inputs(config: &RunConfig) -> Result<Inputs> {
    config.validate()?;
    let mut digests = BTreeMap::new();
    let ratings = load_ratings(&config.ratings_path)?;
    digests.insert(
        digest_key(&config.ratings_path),
        file_digest(&config.ratings_path)?,
    );
    let store = match &config.embeddings_path {
        Some(p) if config.needs_embeddings() => {
            let store = load_embeddings(p)?;
            digests.insert(digest_key(p), file_digest(p)?);
            Some(store)
        }
        _ => None,
    };
    let logits = match &config.logits_path {
        Some(p) if config.needs_logits() => {
            let table = load_logits(p)?;
            digests.insert(digest_key(p), file_digest(p)?);
            Some(table)
        }
        _ => None,
    };
    Ok(Inputs {
        store,
        ratings,
        logits,
        digests,
    })
}

/// Everything one `eval` produces.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct EvaluationRun {
    pub run_id: String,
    pub seed: u64,
    pub config_snapshot: String,
    pub input_digests: BTreeMap<String, String>,
    pub text: Vec<ModelEvaluation>,
    pub vision: Vec<ModelEvaluation>,
    pub grid: CombinedGrid,
    pub clip: Vec<ModelEvaluation>,
    pub warnings: Vec<Warning>,
}

impl EvaluationRun {
    pub fn text_summaries(&self) -> Vec<ModelSummary> {
        self.text.iter().map(|e| e.summary.clone()).collect()
    }

    pub fn vision_summaries(&self) -> Vec<ModelSummary> {
        self.vision.iter().map(|e| e.summary.clone()).collect()
    }

    pub fn clip_summaries(&self) -> Vec<ModelSummary> {
        self.clip.iter().map(|e| e.summary.clone()).collect()
    }
}

fn check_known(store: Option<&EmbeddingStore>, ids: &[String]) -> Result<()> {
    if let Some(store) = store {
        if let Some(missing) = ids.iter().find(|m| !store.has_model(m)) {
            return Err(Error::Config(format!(
                "model `{missing}` not in embeddings file"
            )));
        }
    }
    Ok(())
}

/// Runs every evaluation the config enables. Models or approaches with no
/// evaluable category become warnings; any other failure aborts the run.
pub fn run_all(config: &RunConfig) -> Result<EvaluationRun> {
    let inputs = load_inputs(config)?;
    run_with_inputs(config, &inputs)
}

pub fn run_with_inputs(config: &RunConfig, inputs: &Inputs) -> Result<EvaluationRun> {
    let store = inputs.store.as_ref();
    let ratings = &inputs.ratings;
    check_known(store, &config.text_models)?;
    check_known(store, &config.vision_models)?;

    let text: Vec<(String, Result<ModelEvaluation>)> = config
        .text_models
        .iter()
        .map(|m| {
            let store = store.expect("validated config has embeddings");
            (
                m.clone(),
                evaluate_text_model(store, ratings, m, config.text_prototype),
            )
        })
        .collect();
    let vision: Vec<(String, Result<ModelEvaluation>)> = config
        .vision_models
        .iter()
        .map(|m| {
            let store = store.expect("validated config has embeddings");
            (m.clone(), evaluate_vision_model(store, ratings, m))
        })
        .collect();

    let mut warnings = Vec::new();
    let mut keep =
        |kind: &str, evals: &[(String, Result<ModelEvaluation>)]| -> Result<Vec<ModelEvaluation>> {
            let mut out = Vec::new();
            for (id, r) in evals {
                match r {
                    Ok(e) => {
                        warnings.extend(e.warnings.iter().cloned());
                        out.push(e.clone());
                    }
                    Err(e @ Error::NoEvaluableCategories { .. }) => {
                        warnings.push(Warning::from_error(format!("{kind}:{id}"), e))
                    }
                    Err(e) => return Err(Error::Config(format!("{kind} model `{id}`: {e}"))),
                }
            }
            Ok(out)
        };
    let text_ok = keep("text", &text)?;
    let vision_ok = keep("vision", &vision)?;

    let grid = if text.is_empty() || vision.is_empty() {
        CombinedGrid {
            language_models: Vec::new(),
            vision_models: Vec::new(),
            cells: Vec::new(),
        }
    } else {
        grid_from_evaluations(&text, &vision, ratings)
    };
    for cell in &grid.cells {
        warnings.extend(cell.warnings.iter().cloned());
    }

    let mut clip = Vec::new();
    if let Some(model_id) = &config.clip_model {
        let mut approaches = config.clip_approaches.clone();
        approaches.sort();
        approaches.dedup();
        for approach in approaches {
            match evaluate_clip(store, ratings, inputs.logits.as_ref(), model_id, approach) {
                Ok(e) => {
                    warnings.extend(e.warnings.iter().cloned());
                    clip.push(e);
                }
                Err(e @ Error::NoEvaluableCategories { .. }) => warnings.push(Warning::from_error(
                    format!("clip-{approach}:{model_id}"),
                    &e,
                )),
                Err(e) => return Err(Error::Config(format!("clip approach {approach}: {e}"))),
            }
        }
    }

    let config_snapshot = config.snapshot();
    let mut hasher = Sha256::new();
    hasher.update(config_snapshot.as_bytes());
    for (name, digest) in &inputs.digests {
        hasher.update(name.as_bytes());
        hasher.update(digest.as_bytes());
    }
    let run_id = hex::encode(hasher.finalize())[..16].to_owned();

    Ok(EvaluationRun {
        run_id,
        seed: config.seed,
        config_snapshot,
        input_digests: inputs.digests.clone(),
        text: text_ok,
        vision: vision_ok,
        grid,
        clip,
        warnings,
    })
}
