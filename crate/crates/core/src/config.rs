//! Run configuration, read from a TOML file.
//!
//! ```toml
//! embeddings_path = "embeddings.jsonl"
//! ratings_path = "ratings.csv"
//! logits_path = "logits.csv"
//! text_models = ["minilm"]
//! vision_models = ["alexnet"]
//! clip_model = "clip-vit-l-14"
//! clip_approaches = ["category", "mean", "appended", "cross_modality"]
//! text_prototype = "mean"
//! output_dir = "results"
//! seed = 7
//!
//! [stability]
//! model_id = "vgg19"
//! category = "Bird"
//! trials = 100
//! ```
//!
//! Relative paths are resolved against the directory holding the config file.

use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::prototype::PrototypeStrategy;

pub const DEFAULT_TRIALS: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TextPrototype {
    #[default]
    Mean,
    Label,
}

impl TextPrototype {
    pub fn strategy(self) -> PrototypeStrategy {
        match self {
            TextPrototype::Mean => PrototypeStrategy::MeanOfExemplars,
            TextPrototype::Label => PrototypeStrategy::CategoryLabel,
        }
    }
}

impl std::str::FromStr for TextPrototype {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(TextPrototype::Mean),
            "label" => Ok(TextPrototype::Label),
            other => Err(Error::Config(format!("unknown text prototype `{other}`"))),
        }
    }
}

/// The four ways a multimodal model is scored.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ClipApproach {
    Category,
    Mean,
    Appended,
    CrossModality,
}

impl ClipApproach {
    pub const ALL: [ClipApproach; 4] = [
        ClipApproach::Category,
        ClipApproach::Mean,
        ClipApproach::Appended,
        ClipApproach::CrossModality,
    ];

    pub fn as_str(self) -> &'static str {
        match self {
            ClipApproach::Category => "category",
            ClipApproach::Mean => "mean",
            ClipApproach::Appended => "appended",
            ClipApproach::CrossModality => "cross_modality",
        }
    }
}

impl fmt::Display for ClipApproach {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StabilityConfig {
    pub model_id: String,
    pub category: String,
    #[serde(default = "default_trials")]
    pub trials: usize,
    /// Falls back to the top-level seed when absent.
    #[serde(default)]
    pub seed: Option<u64>,
}

fn default_trials() -> usize {
    DEFAULT_TRIALS
}

fn default_output_dir() -> PathBuf {
    PathBuf::from("results")
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub embeddings_path: Option<PathBuf>,
    pub ratings_path: PathBuf,
    #[serde(default)]
    pub logits_path: Option<PathBuf>,
    #[serde(default)]
    pub supercategories_path: Option<PathBuf>,
    #[serde(default)]
    pub text_models: Vec<String>,
    #[serde(default)]
    pub vision_models: Vec<String>,
    #[serde(default)]
    pub clip_model: Option<String>,
    #[serde(default)]
    pub clip_approaches: Vec<ClipApproach>,
    #[serde(default)]
    pub text_prototype: TextPrototype,
    #[serde(default)]
    pub stability: Option<StabilityConfig>,
    #[serde(default = "default_output_dir", skip_serializing)]
    pub output_dir: PathBuf,
    #[serde(default)]
    pub seed: u64,
    /// Directory relative paths were resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

impl RunConfig {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    /// Reads `path` and resolves relative paths against its directory.
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut config = RunConfig::from_toml(&text)?;
        let base = path.parent().unwrap_or_else(|| Path::new(""));
        config.resolve_paths(base);
        Ok(config)
    }

    pub fn resolve_paths(&mut self, base: &Path) {
        self.base_dir = Some(base.to_owned());
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.ratings_path);
        join(&mut self.output_dir);
        for p in [
            &mut self.embeddings_path,
            &mut self.logits_path,
            &mut self.supercategories_path,
        ]
        .into_iter()
        .flatten()
        {
            join(p);
        }
    }

    pub fn needs_embeddings(&self) -> bool {
        !self.text_models.is_empty()
            || !self.vision_models.is_empty()
            || self.stability.is_some()
            || self
                .clip_approaches
                .iter()
                .any(|a| *a != ClipApproach::CrossModality)
    }

    pub fn needs_logits(&self) -> bool {
        self.clip_approaches.contains(&ClipApproach::CrossModality)
    }

    pub fn stability_seed(&self) -> Option<u64> {
        self.stability.as_ref().map(|s| s.seed.unwrap_or(self.seed))
    }

    pub fn validate(&self) -> Result<()> {
        if self.ratings_path.as_os_str().is_empty() {
            return Err(Error::Config("ratings_path is empty".into()));
        }
        if self.needs_embeddings()
            && self
                .embeddings_path
                .as_ref()
                .map_or(true, |p| p.as_os_str().is_empty())
        {
            return Err(Error::Config("embeddings_path is required".into()));
        }
        if self.needs_logits() && self.logits_path.is_none() {
            return Err(Error::Config(
                "cross_modality approach requires logits_path".into(),
            ));
        }
        if !self.clip_approaches.is_empty() && self.clip_model.is_none() {
            return Err(Error::Config("clip_approaches require clip_model".into()));
        }
        if let Some(s) = &self.stability {
            if s.trials == 0 {
                return Err(Error::Config("stability.trials must be at least 1".into()));
            }
        }
        Ok(())
    }

    /// TOML rendering used in run manifests. Paths are shown relative to the
    /// config file and `output_dir` is omitted, so the same run started from
    /// another directory or written elsewhere records the same configuration.
    pub fn snapshot(&self) -> String {
        let mut c = self.clone();
        if let Some(base) = &self.base_dir {
            let strip = |p: &mut PathBuf| {
                if let Ok(rel) = p.strip_prefix(base) {
                    *p = rel.to_owned();
                }
            };
            strip(&mut c.ratings_path);
            for p in [
                &mut c.embeddings_path,
                &mut c.logits_path,
                &mut c.supercategories_path,
            ]
            .into_iter()
            .flatten()
            {
                strip(p);
            }
        }
        toml::to_string(&c).expect("config serializes")
    }
}
