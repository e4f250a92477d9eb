//! Optional run configuration file (TOML). Tables and dotted keys are
//! equivalent, so `umap.n_neighbors = 20` and a `[umap]` table both work.
//! Unknown keys are rejected. Command-line flags override file values.
//!
//! ```toml
//! [preprocess]
//! lemmatize = false
//! ngram_range = [1, 1]
//! min_term_count = 1
//! stopwords_file = "stopwords.txt"
//!
//! umap.n_neighbors = 20
//! umap.seed = 7
//! hdbscan.min_cluster_size = 50
//! topics.min_topic_size = 50
//! metrics.window = 110
//! llm.max_requests_per_minute = 60
//! ```

use std::path::{Path, PathBuf};
use std::time::Duration;

use serde::Deserialize;
use thiserror::Error;

use crate::hdbscan::HdbscanParams;
use crate::llm_extract::EndpointConfig;
use crate::preprocess::{load_contractions, load_stopwords, PreprocessError, PreprocessSettings};
use crate::topics::PipelineConfig;
use crate::umap::{LayoutConfig, UmapError};

#[derive(Debug, Error)]
pub enum ConfigError {
    #[error("cannot read {path}: {message}")]
    Io { path: String, message: String },
    #[error("invalid config: {0}")]
    Parse(String),
    #[error("invalid setting {key}: {message}")]
    Invalid { key: &'static str, message: String },
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Umap(#[from] UmapError),
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    #[serde(default)]
    pub preprocess: PreprocessSection,
    #[serde(default)]
    pub umap: UmapSection,
    #[serde(default)]
    pub hdbscan: HdbscanSection,
    #[serde(default)]
    pub topics: TopicsSection,
    #[serde(default)]
    pub metrics: MetricsSection,
    #[serde(default)]
    pub llm: LlmSection,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PreprocessSection {
    pub lowercase: Option<bool>,
    pub strip_urls: Option<bool>,
    pub strip_mentions_hashtags: Option<bool>,
    pub alphabetic_only: Option<bool>,
    pub expand_contractions: Option<bool>,
    pub lemmatize: Option<bool>,
    pub ngram_range: Option<(usize, usize)>,
    pub min_term_count: Option<usize>,
    pub stopwords_file: Option<PathBuf>,
    pub contractions_file: Option<PathBuf>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct UmapSection {
    pub n_neighbors: Option<usize>,
    pub out_dim: Option<usize>,
    pub epochs: Option<usize>,
    pub min_dist: Option<f64>,
    pub spread: Option<f64>,
    pub negative_sample_rate: Option<usize>,
    pub learning_rate: Option<f64>,
    pub seed: Option<u64>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct HdbscanSection {
    pub min_cluster_size: Option<usize>,
    pub min_samples: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TopicsSection {
    pub min_topic_size: Option<usize>,
    pub top_n_words: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MetricsSection {
    pub top_n: Option<usize>,
    pub rbo_p: Option<f64>,
    pub window: Option<usize>,
}

#[derive(Debug, Clone, Default, PartialEq, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LlmSection {
    pub endpoint: Option<String>,
    pub model: Option<String>,
    pub temperature: Option<f64>,
    pub max_attempts: Option<u32>,
    pub backoff_base_secs: Option<f64>,
    pub backoff_factor: Option<u32>,
    pub max_requests_per_minute: Option<u32>,
    pub concurrency: Option<usize>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self, ConfigError> {
        toml::from_str(text).map_err(|e| ConfigError::Parse(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self, ConfigError> {
        let text = std::fs::read_to_string(path).map_err(|e| ConfigError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        Self::parse(&text)
    }

    pub fn preprocess_settings(&self) -> Result<PreprocessSettings, ConfigError> {
        let p = &self.preprocess;
        let mut s = PreprocessSettings::default();
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = p.$f { s.$f = v; })* };
        }
        set!(
            lowercase,
            strip_urls,
            strip_mentions_hashtags,
            alphabetic_only,
            expand_contractions,
            lemmatize,
            ngram_range,
            min_term_count
        );
        if let Some(path) = &p.stopwords_file {
            s.stopwords = load_stopwords(path)?.into_iter().collect();
        }
        if let Some(path) = &p.contractions_file {
            s.contractions = load_contractions(path)?.into_iter().collect();
        }
        s.validate()?;
        Ok(s)
    }

    /// Pipeline settings from the file, unvalidated flags applied by the caller.
    pub fn pipeline(&self) -> Result<PipelineConfig, ConfigError> {
        let mut cfg = PipelineConfig {
            preprocess: self.preprocess_settings()?,
            ..PipelineConfig::default()
        };
        let u = &self.umap;
        let layout: &mut LayoutConfig = &mut cfg.umap;
        macro_rules! set {
            ($($f:ident),*) => { $(if let Some(v) = u.$f { layout.$f = v; })* };
        }
        set!(out_dim, epochs, min_dist, spread, negative_sample_rate, learning_rate, seed);
        if let Some(k) = u.n_neighbors {
            cfg.n_neighbors = k;
        }
        cfg.hdbscan = HdbscanParams {
            min_cluster_size: self
                .hdbscan
                .min_cluster_size
                .unwrap_or(cfg.hdbscan.min_cluster_size),
            min_samples: self.hdbscan.min_samples.or(cfg.hdbscan.min_samples),
        };
        if let Some(m) = self.topics.min_topic_size {
            cfg.min_topic_size = m;
        }
        if let Some(n) = self.topics.top_n_words {
            cfg.top_n_words = n;
        }
        Ok(cfg)
    }

    pub fn endpoint(&self) -> Result<EndpointConfig, ConfigError> {
        let l = &self.llm;
        let mut e = EndpointConfig::default();
        if let Some(m) = &l.model {
            e.model = m.clone();
        }
        if let Some(t) = l.temperature {
            e.temperature = t;
        }
        if let Some(a) = l.max_attempts {
            e.max_attempts = a;
        }
        if let Some(b) = l.backoff_base_secs {
            e.backoff_base = Duration::try_from_secs_f64(b).map_err(|err| ConfigError::Invalid {
                key: "llm.backoff_base_secs",
                message: err.to_string(),
            })?;
        }
        if let Some(f) = l.backoff_factor {
            e.backoff_factor = f;
        }
        if let Some(r) = l.max_requests_per_minute {
            e.max_requests_per_minute = Some(r);
        }
        if let Some(c) = l.concurrency {
            e.concurrency = c;
        }
        Ok(e)
    }
}

/// Checks the pipeline settings before any data is loaded.
pub fn validate_pipeline(cfg: &PipelineConfig) -> Result<(), ConfigError> {
    cfg.preprocess.validate()?;
    cfg.umap.validate()?;
    let invalid = |key, message: &str| ConfigError::Invalid {
        key,
        message: message.to_string(),
    };
    if cfg.n_neighbors == 0 {
        return Err(invalid("n_neighbors", "must be at least 1"));
    }
    if cfg.hdbscan.min_cluster_size < 2 {
        return Err(invalid("min_cluster_size", "must be at least 2"));
    }
    if cfg.hdbscan.min_samples == Some(0) {
        return Err(invalid("min_samples", "must be at least 1"));
    }
    if cfg.min_topic_size == 0 {
        return Err(invalid("min_topic_size", "must be at least 1"));
    }
    if cfg.top_n_words == 0 {
        return Err(invalid("top_n_words", "must be at least 1"));
    }
    Ok(())
}
