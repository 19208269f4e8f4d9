//! Loading and indexing of the three input files: embeddings (JSON lines),
//! human ratings (CSV) and multimodal logits (CSV).

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::model::{
    validate_embedding_set, EmbeddingRecord, ExemplarKey, LogitKey, LogitTable, Modality,
    RatingsTable, RecordKind, Vector,
};

pub const RATINGS_HEADER: [&str; 3] = ["category", "exemplar", "typicality"];
pub const LOGITS_HEADER: [&str; 5] = ["model", "category", "exemplar", "image_id", "logit"];

/// One line of the embeddings file.
#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct WireRecord {
    model: String,
    modality: Modality,
    kind: RecordKind,
    category: String,
    exemplar: Option<String>,
    image_id: Option<String>,
    vector: Vec<f64>,
}

impl From<WireRecord> for EmbeddingRecord {
    fn from(w: WireRecord) -> Self {
        EmbeddingRecord {
            model_id: w.model.trim().to_owned(),
            modality: w.modality,
            kind: w.kind,
            key: ExemplarKey::new(&w.category, w.exemplar.as_deref().unwrap_or("")),
            image_id: w.image_id.map(|s| s.trim().to_owned()),
            vector: w.vector,
        }
    }
}

impl From<&EmbeddingRecord> for WireRecord {
    fn from(r: &EmbeddingRecord) -> Self {
        WireRecord {
            model: r.model_id.clone(),
            modality: r.modality,
            kind: r.kind,
            category: r.key.category().to_owned(),
            exemplar: match r.kind {
                RecordKind::Exemplar => Some(r.key.exemplar().to_owned()),
                RecordKind::CategoryLabel => None,
            },
            image_id: r.image_id.clone(),
            vector: r.vector.clone(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
struct ModelEmbeddings {
    dim: usize,
    text: BTreeMap<ExemplarKey, Vector>,
    // key -> image_id -> vector, so iteration is already image-id sorted
    images: BTreeMap<ExemplarKey, BTreeMap<String, Vector>>,
    labels: BTreeMap<(Modality, String), Vector>,
}

/// Read-only index over validated embedding records.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    models: BTreeMap<String, ModelEmbeddings>,
}

impl EmbeddingStore {
    /// Validates and indexes `records`. Any violation is a `Schema` error
    /// listing every broken rule.
    pub fn from_records(records: Vec<EmbeddingRecord>) -> Result<Self> {
        if records.is_empty() {
            return Err(Error::Schema("no records".into()));
        }
        let report = validate_embedding_set(&records);
        if !report.is_ok() {
            let lines: Vec<String> = report.violations.iter().map(|v| v.to_string()).collect();
            return Err(Error::Schema(lines.join("; ")));
        }

        let mut models: BTreeMap<String, ModelEmbeddings> = BTreeMap::new();
        for rec in records {
            let vector = Vector::new(rec.vector)?;
            let entry = models.entry(rec.model_id).or_default();
            entry.dim = vector.dim();
            match (rec.kind, rec.modality) {
                (RecordKind::CategoryLabel, modality) => {
                    entry
                        .labels
                        .insert((modality, rec.key.category().to_owned()), vector);
                }
                (RecordKind::Exemplar, Modality::Text) => {
                    entry.text.insert(rec.key, vector);
                }
                (RecordKind::Exemplar, Modality::Image) => {
                    let image_id = rec.image_id.expect("validated image record has an id");
                    entry
                        .images
                        .entry(rec.key)
                        .or_default()
                        .insert(image_id, vector);
                }
            }
        }
        Ok(EmbeddingStore { models })
    }

    pub fn model_ids(&self) -> impl Iterator<Item = &str> {
        self.models.keys().map(String::as_str)
    }

    pub fn has_model(&self, model_id: &str) -> bool {
        self.models.contains_key(model_id)
    }

    fn model(&self, model_id: &str) -> Result<&ModelEmbeddings> {
        self.models
            .get(model_id)
            .ok_or_else(|| Error::UnknownModel(model_id.to_owned()))
    }

    pub fn dim(&self, model_id: &str) -> Result<usize> {
        Ok(self.model(model_id)?.dim)
    }

    pub fn record_count(&self) -> usize {
        self.models
            .values()
            .map(|m| {
                m.text.len() + m.labels.len() + m.images.values().map(BTreeMap::len).sum::<usize>()
            })
            .sum()
    }

    pub fn has_modality(&self, model_id: &str, modality: Modality) -> Result<bool> {
        let m = self.model(model_id)?;
        Ok(match modality {
            Modality::Text => !m.text.is_empty(),
            Modality::Image => !m.images.is_empty(),
        })
    }

    /// Categories with at least one exemplar record of `modality`.
    pub fn categories(&self, model_id: &str, modality: Modality) -> Result<BTreeSet<String>> {
        let m = self.model(model_id)?;
        let keys: Box<dyn Iterator<Item = &ExemplarKey>> = match modality {
            Modality::Text => Box::new(m.text.keys()),
            Modality::Image => Box::new(m.images.keys()),
        };
        Ok(keys.map(|k| k.category().to_owned()).collect())
    }

    pub fn text_vector(&self, model_id: &str, key: &ExemplarKey) -> Result<Option<&Vector>> {
        Ok(self.model(model_id)?.text.get(key))
    }

    pub fn label_vector(
        &self,
        model_id: &str,
        modality: Modality,
        category: &str,
    ) -> Result<Option<&Vector>> {
        Ok(self
            .model(model_id)?
            .labels
            .get(&(modality, category.to_owned())))
    }

    /// Text exemplar vectors of one category, keyed by exemplar name.
    pub fn text_exemplars(
        &self,
        model_id: &str,
        category: &str,
    ) -> Result<BTreeMap<String, &Vector>> {
        Ok(self
            .model(model_id)?
            .text
            .iter()
            .filter(|(k, _)| k.category() == category)
            .map(|(k, v)| (k.exemplar().to_owned(), v))
            .collect())
    }

    /// Image vectors of one category, keyed by exemplar, each list sorted by
    /// image id.
    pub fn image_exemplars(
        &self,
        model_id: &str,
        category: &str,
    ) -> Result<BTreeMap<String, Vec<&Vector>>> {
        Ok(self
            .model(model_id)?
            .images
            .iter()
            .filter(|(k, _)| k.category() == category)
            .map(|(k, imgs)| (k.exemplar().to_owned(), imgs.values().collect()))
            .collect())
    }

    /// Flattens the store back into records: per model, labels, text
    /// exemplars, then images, each in key order.
    pub fn to_records(&self) -> Vec<EmbeddingRecord> {
        let mut out = Vec::with_capacity(self.record_count());
        for (model_id, m) in &self.models {
            for ((modality, category), v) in &m.labels {
                out.push(EmbeddingRecord {
                    model_id: model_id.clone(),
                    modality: *modality,
                    kind: RecordKind::CategoryLabel,
                    key: ExemplarKey::label(category),
                    image_id: None,
                    vector: v.as_slice().to_vec(),
                });
            }
            for (key, v) in &m.text {
                out.push(EmbeddingRecord {
                    model_id: model_id.clone(),
                    modality: Modality::Text,
                    kind: RecordKind::Exemplar,
                    key: key.clone(),
                    image_id: None,
                    vector: v.as_slice().to_vec(),
                });
            }
            for (key, imgs) in &m.images {
                for (image_id, v) in imgs {
                    out.push(EmbeddingRecord {
                        model_id: model_id.clone(),
                        modality: Modality::Image,
                        kind: RecordKind::Exemplar,
                        key: key.clone(),
                        image_id: Some(image_id.clone()),
                        vector: v.as_slice().to_vec(),
                    });
                }
            }
        }
        out
    }
}

/// All vectors of one exemplar's images, ordered by image id. Empty when the
/// exemplar has no images.
pub fn exemplar_image_vectors<'a>(
    store: &'a EmbeddingStore,
    model_id: &str,
    key: &ExemplarKey,
) -> Result<Vec<&'a Vector>> {
    Ok(store
        .model(model_id)?
        .images
        .get(key)
        .map(|imgs| imgs.values().collect())
        .unwrap_or_default())
}

fn open(path: &Path) -> Result<File> {
    File::open(path).map_err(|e| Error::io(path, e))
}

/// Parses JSON-lines records without validating them as a set.
pub fn read_embedding_records(path: &Path) -> Result<Vec<EmbeddingRecord>> {
    let reader = BufReader::new(open(path)?);
    let mut records = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line = line.map_err(|e| Error::io(path, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let wire: WireRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: idx as u64 + 1,
            message: e.to_string(),
        })?;
        records.push(wire.into());
    }
    Ok(records)
}

pub fn load_embeddings(path: &Path) -> Result<EmbeddingStore> {
    let records = read_embedding_records(path)?;
    EmbeddingStore::from_records(records)
}

pub fn write_embedding_records(records: &[EmbeddingRecord], path: &Path) -> Result<()> {
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut out = BufWriter::new(file);
    for rec in records {
        let line = serde_json::to_string(&WireRecord::from(rec))
            .map_err(|e| Error::Schema(e.to_string()))?;
        writeln!(out, "{line}").map_err(|e| Error::io(path, e))?;
    }
    out.flush().map_err(|e| Error::io(path, e))
}

pub fn write_embeddings(store: &EmbeddingStore, path: &Path) -> Result<()> {
    write_embedding_records(&store.to_records(), path)
}

fn csv_reader(path: &Path, header: &[&str]) -> Result<csv::Reader<File>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(true)
        .trim(csv::Trim::All)
        .from_reader(open(path)?);
    let found = reader.headers().map_err(|e| csv_error(path, e))?;
    if found.iter().ne(header.iter().copied()) {
        return Err(Error::Parse {
            line: 1,
            message: format!(
                "expected header `{}`, found `{}`",
                header.join(","),
                found.iter().collect::<Vec<_>>().join(",")
            ),
        });
    }
    Ok(reader)
}

fn csv_error(path: &Path, e: csv::Error) -> Error {
    let line = e.position().map(|p| p.line()).unwrap_or(0);
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::io(path, io),
        other => Error::Parse {
            line,
            message: format!("{other:?}"),
        },
    }
}

fn parse_number(field: &str, line: u64, what: &str) -> Result<f64> {
    field.parse::<f64>().map_err(|_| Error::Parse {
        line,
        message: format!("{what} `{field}` is not a number"),
    })
}

pub fn load_ratings(path: &Path) -> Result<RatingsTable> {
    let mut reader = csv_reader(path, &RATINGS_HEADER)?;
    let mut entries = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let value = parse_number(&row[2], line, "typicality")?;
        entries.push((ExemplarKey::new(&row[0], &row[1]), value));
    }
    RatingsTable::from_entries(entries)
}

pub fn write_ratings(table: &RatingsTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(RATINGS_HEADER)
        .map_err(|e| csv_error(path, e))?;
    for (key, value) in table.entries() {
        w.write_record([key.category(), key.exemplar(), &value.to_string()])
            .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}

pub fn load_logits(path: &Path) -> Result<LogitTable> {
    let mut reader = csv_reader(path, &LOGITS_HEADER)?;
    let mut entries = Vec::new();
    for row in reader.records() {
        let row = row.map_err(|e| csv_error(path, e))?;
        let line = row.position().map(|p| p.line()).unwrap_or(0);
        let logit = parse_number(&row[4], line, "logit")?;
        let key = LogitKey {
            model_id: row[0].to_owned(),
            key: ExemplarKey::new(&row[1], &row[2]),
            image_id: row[3].to_owned(),
        };
        entries.push((key, logit));
    }
    LogitTable::from_entries(entries)
}

pub fn write_logits(table: &LogitTable, path: &Path) -> Result<()> {
    let mut w = csv::Writer::from_path(path).map_err(|e| csv_error(path, e))?;
    w.write_record(LOGITS_HEADER)
        .map_err(|e| csv_error(path, e))?;
    for (k, logit) in table.iter() {
        w.write_record([
            k.model_id.as_str(),
            k.key.category(),
            k.key.exemplar(),
            k.image_id.as_str(),
            &logit.to_string(),
        ])
        .map_err(|e| csv_error(path, e))?;
    }
    w.flush().map_err(|e| Error::io(path, e))
}
