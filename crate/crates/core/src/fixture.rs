//! Seeded synthetic inputs with a planted typicality gradient.
//!
//! For each model and category a prototype `p ~ N(0, I)` is drawn. Exemplar
//! `r` (1-based human rank, 1 = most typical) is `p + (r / E) * sigma * n`
//! with `n ~ N(0, I)`; each of its images adds a further
//! `image_jitter * sigma * eta`. Human typicality is `1 - (r - 1) / E`, so
//! low noise means model scores track the ratings.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::datastore::{write_embedding_records, write_logits, write_ratings, EmbeddingStore};
use crate::error::Result;
use crate::model::{
    EmbeddingRecord, ExemplarKey, LogitKey, LogitTable, Modality, RatingsTable, RecordKind, Vector,
};
use crate::prototype::cosine_similarity;
use crate::stats::trial_rng;

pub const LOGIT_SCALE: f64 = 10.0;

#[derive(Debug, Clone, PartialEq)]
pub struct PlantedFixture {
    pub categories: usize,
    pub exemplars: usize,
    pub images: usize,
    pub dim: usize,
    pub sigma: f64,
    pub image_jitter: f64,
    pub seed: u64,
    pub text_models: Vec<String>,
    pub vision_models: Vec<String>,
    /// Gets text exemplars, labels, images, and logits.
    pub clip_model: Option<String>,
}

impl Default for PlantedFixture {
    fn default() -> Self {
        PlantedFixture {
            categories: 27,
            exemplars: 10,
            images: 8,
            dim: 128,
            sigma: 0.1,
            image_jitter: 0.05,
            seed: 0,
            text_models: vec!["text-a".into()],
            vision_models: vec!["vision-a".into()],
            clip_model: None,
        }
    }
}

/// Everything a fixture generates.
#[derive(Debug, Clone)]
pub struct FixtureData {
    pub records: Vec<EmbeddingRecord>,
    pub ratings: RatingsTable,
    pub logits: LogitTable,
}

/// Paths written by [`PlantedFixture::write`].
#[derive(Debug, Clone)]
pub struct FixturePaths {
    pub embeddings: PathBuf,
    pub ratings: PathBuf,
    pub logits: PathBuf,
}

pub fn category_name(i: usize) -> String {
    format!("cat{i:02}")
}

pub fn exemplar_name(rank: usize) -> String {
    format!("ex{rank:02}")
}

pub fn image_name(i: usize) -> String {
    format!("img{i:02}")
}

fn gaussian(rng: &mut ChaCha8Rng, dim: usize) -> Vec<f64> {
    (0..dim)
        .map(|_| rng.sample::<f64, _>(StandardNormal))
        .collect()
}

fn axpy(base: &[f64], scale: f64, noise: &[f64]) -> Vec<f64> {
    base.iter().zip(noise).map(|(b, n)| b + scale * n).collect()
}

struct Generated {
    label: Vec<f64>,
    text: Vec<Vec<f64>>,
    images: Vec<Vec<Vec<f64>>>,
}

impl PlantedFixture {
    pub fn typicality(&self, rank: usize) -> f64 {
        1.0 - (rank as f64 - 1.0) / self.exemplars as f64
    }

    fn models(&self) -> Vec<(String, bool, bool)> {
        let mut out: Vec<(String, bool, bool)> = Vec::new();
        for m in &self.text_models {
            out.push((m.clone(), true, false));
        }
        for m in &self.vision_models {
            out.push((m.clone(), false, true));
        }
        if let Some(m) = &self.clip_model {
            out.push((m.clone(), true, true));
        }
        out
    }

    fn generate_category(&self, model_idx: usize, cat_idx: usize) -> Generated {
        let mut rng = trial_rng(self.seed, ((model_idx as u64) << 32) | cat_idx as u64);
        let label = gaussian(&mut rng, self.dim);
        let mut text = Vec::with_capacity(self.exemplars);
        let mut images = Vec::with_capacity(self.exemplars);
        for rank in 1..=self.exemplars {
            let noise = gaussian(&mut rng, self.dim);
            let e = axpy(
                &label,
                rank as f64 / self.exemplars as f64 * self.sigma,
                &noise,
            );
            let imgs = (0..self.images)
                .map(|_| {
                    let eta = gaussian(&mut rng, self.dim);
                    axpy(&e, self.image_jitter * self.sigma, &eta)
                })
                .collect();
            text.push(e);
            images.push(imgs);
        }
        Generated {
            label,
            text,
            images,
        }
    }

    pub fn generate(&self) -> Result<FixtureData> {
        let mut records = Vec::new();
        let mut logits = Vec::new();
        let clip = self.clip_model.as_deref();
        for (model_idx, (model, with_text, with_images)) in self.models().into_iter().enumerate() {
            for c in 0..self.categories {
                let category = category_name(c);
                let g = self.generate_category(model_idx, c);
                let label_vec = Vector::new(g.label.clone())?;
                if with_text {
                    records.push(EmbeddingRecord {
                        model_id: model.clone(),
                        modality: Modality::Text,
                        kind: RecordKind::CategoryLabel,
                        key: ExemplarKey::label(&category),
                        image_id: None,
                        vector: g.label.clone(),
                    });
                }
                for (i, (text, imgs)) in g.text.into_iter().zip(g.images).enumerate() {
                    let key = ExemplarKey::new(&category, exemplar_name(i + 1));
                    if with_images {
                        for (j, img) in imgs.into_iter().enumerate() {
                            if clip == Some(model.as_str()) {
                                let logit = LOGIT_SCALE
                                    * cosine_similarity(&Vector::new(img.clone())?, &label_vec)?;
                                logits.push((
                                    LogitKey {
                                        model_id: model.clone(),
                                        key: key.clone(),
                                        image_id: image_name(j),
                                    },
                                    logit,
                                ));
                            }
                            records.push(EmbeddingRecord {
                                model_id: model.clone(),
                                modality: Modality::Image,
                                kind: RecordKind::Exemplar,
                                key: key.clone(),
                                image_id: Some(image_name(j)),
                                vector: img,
                            });
                        }
                    }
                    if with_text {
                        records.push(EmbeddingRecord {
                            model_id: model.clone(),
                            modality: Modality::Text,
                            kind: RecordKind::Exemplar,
                            key,
                            image_id: None,
                            vector: text,
                        });
                    }
                }
            }
        }
        let ratings = RatingsTable::from_entries(
            (0..self.categories)
                .flat_map(|c| {
                    (1..=self.exemplars)
                        .map(move |r| (ExemplarKey::new(category_name(c), exemplar_name(r)), r))
                })
                .map(|(k, r)| (k, self.typicality(r))),
        )?;
        Ok(FixtureData {
            records,
            ratings,
            logits: LogitTable::from_entries(logits)?,
        })
    }

    pub fn store(&self) -> Result<(EmbeddingStore, RatingsTable)> {
        let data = self.generate()?;
        Ok((EmbeddingStore::from_records(data.records)?, data.ratings))
    }

    /// Writes `embeddings.jsonl`, `ratings.csv` and `logits.csv` into `dir`.
    pub fn write(&self, dir: &Path) -> Result<FixturePaths> {
        std::fs::create_dir_all(dir).map_err(|e| crate::error::Error::io(dir, e))?;
        let data = self.generate()?;
        let paths = FixturePaths {
            embeddings: dir.join("embeddings.jsonl"),
            ratings: dir.join("ratings.csv"),
            logits: dir.join("logits.csv"),
        };
        write_embedding_records(&data.records, &paths.embeddings)?;
        write_ratings(&data.ratings, &paths.ratings)?;
        write_logits(&data.logits, &paths.logits)?;
        Ok(paths)
    }
}

/// Human ratings keyed by exemplar name for one category.
pub fn ratings_by_name(ratings: &RatingsTable, category: &str) -> BTreeMap<String, f64> {
    ratings.category(category).cloned().unwrap_or_default()
}
