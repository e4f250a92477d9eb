//! Topic representations: classic TF-IDF, class-based TF-IDF over clusters,
//! its per-time-slice variant, and the fitted [`TopicModel`].
//!
//! All logarithms are natural.
//!
//! * classic: `W[t,d] = tf[t,d] · ln((1 + N) / df[t])`
//! * class-based: `W[t,c] = tf[t,c] · ln((1 + A) / tf[t])`, with `A` the mean
//!   token count per class and `tf[t]` the count of `t` over all classes
//! * dynamic: `W[t,c,i] = tf[t,c,i] · ln((1 + A) / tf[t])`, `A` and `tf[t]` taken
//!   from the all-time fit

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::corpus::Corpus;
use crate::embedding::EmbeddingMatrix;
use crate::hdbscan::{hdbscan, HdbscanError, HdbscanParams};
use crate::preprocess::{
    build_vocabulary, count_matrix, CountMatrix, Grouping, PreprocessError, PreprocessSettings,
    RowKind, Vocabulary,
};
use crate::umap::{reduce, LayoutConfig, UmapError};

pub const MODEL_FORMAT: &str = "topicforge-model";
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum TopicError {
    #[error("embedding rows ({embeddings}) do not match corpus size ({corpus})")]
    SizeMismatch { corpus: usize, embeddings: usize },
    #[error("expected a {expected:?} count matrix")]
    RowKind { expected: RowKind },
    #[error("class-based weighting needs at least one class")]
    NoClasses,
    #[error("unknown topic id {0}")]
    UnknownTopic(i64),
    #[error("slice {slice} has {found} classes, expected {expected}")]
    SliceShape {
        slice: usize,
        found: usize,
        expected: usize,
    },
    #[error("corpus does not match the model's training corpus: {0}")]
    CorpusMismatch(String),
    #[error(transparent)]
    Preprocess(#[from] PreprocessError),
    #[error(transparent)]
    Umap(#[from] UmapError),
    #[error(transparent)]
    Hdbscan(#[from] HdbscanError),
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
    #[error("malformed model file: {0}")]
    Format(String),
}

/// Sparse weight rows: `(column, weight)` pairs sorted by column.
pub type SparseRows = Vec<Vec<(usize, f64)>>;

#[derive(Debug, Clone, PartialEq)]
pub struct TfidfWeights {
    pub weights: SparseRows,
    pub n_documents: usize,
    pub document_frequency: Vec<u64>,
}

impl TfidfWeights {
    pub fn get(&self, doc: usize, term: usize) -> f64 {
        lookup(&self.weights[doc], term)
    }
}

fn lookup(row: &[(usize, f64)], col: usize) -> f64 {
    row.binary_search_by_key(&col, |&(c, _)| c)
        .map(|i| row[i].1)
        .unwrap_or(0.0)
}

pub fn classic_tfidf(cm: &CountMatrix) -> Result<TfidfWeights, TopicError> {
    if cm.row_kind() != RowKind::PerDocument {
        return Err(TopicError::RowKind {
            expected: RowKind::PerDocument,
        });
    }
    let n = cm.n_rows() as f64;
    let df = cm.document_frequencies();
    let weights = cm
        .rows()
        .map(|row| {
            row.iter()
                .map(|&(t, tf)| (t, tf as f64 * ((1.0 + n) / df[t] as f64).ln()))
                .collect()
        })
        .collect();
    Ok(TfidfWeights {
        weights,
        n_documents: cm.n_rows(),
        document_frequency: df,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ClassTfidf {
    pub weights: SparseRows,
    /// `A`: total token count divided by the number of classes.
    pub average_words: f64,
    /// `tf[t]`: count of each term summed over all classes.
    pub term_totals: Vec<u64>,
}

impl ClassTfidf {
    pub fn n_classes(&self) -> usize {
        self.weights.len()
    }

    pub fn n_terms(&self) -> usize {
        self.term_totals.len()
    }

    pub fn get(&self, class: usize, term: usize) -> f64 {
        lookup(&self.weights[class], term)
    }

    pub fn row(&self, class: usize) -> &[(usize, f64)] {
        &self.weights[class]
    }

    /// The shared inverse-class-frequency factor `ln((1 + A) / tf[t])`.
    pub fn idf(&self, term: usize) -> f64 {
        ((1.0 + self.average_words) / self.term_totals[term] as f64).ln()
    }

    pub fn dense_row(&self, class: usize) -> Vec<f64> {
        let mut out = vec![0.0; self.n_terms()];
        for &(t, w) in &self.weights[class] {
            out[t] = w;
        }
        out
    }
}

fn weigh_rows(cm: &CountMatrix, average_words: f64, term_totals: &[u64]) -> SparseRows {
    cm.rows()
        .map(|row| {
            row.iter()
                .map(|&(t, tf)| {
                    let idf = ((1.0 + average_words) / term_totals[t] as f64).ln();
                    (t, tf as f64 * idf)
                })
                .collect()
        })
        .collect()
}

pub fn class_tfidf(cm: &CountMatrix) -> Result<ClassTfidf, TopicError> {
    if cm.row_kind() != RowKind::PerClass {
        return Err(TopicError::RowKind {
            expected: RowKind::PerClass,
        });
    }
    if cm.n_rows() == 0 {
        return Err(TopicError::NoClasses);
    }
    let average_words = cm.total() as f64 / cm.n_rows() as f64;
    let term_totals = cm.column_sums();
    Ok(ClassTfidf {
        weights: weigh_rows(cm, average_words, &term_totals),
        average_words,
        term_totals,
    })
}

/// Per-slice class weights sharing the global `A` and `tf[t]`.
#[derive(Debug, Clone, PartialEq)]
pub struct DynamicTopicMatrix {
    pub slice_labels: Vec<String>,
    /// `slices[i][c]` is the sparse weight row of class `c` in slice `i`.
    pub slices: Vec<SparseRows>,
    /// Raw per-slice counts `tf[t,c,i]`.
    pub counts: Vec<CountMatrix>,
}

impl DynamicTopicMatrix {
    pub fn n_slices(&self) -> usize {
        self.slices.len()
    }

    pub fn get(&self, term: usize, class: usize, slice: usize) -> f64 {
        lookup(&self.slices[slice][class], term)
    }

    /// Whether any document of `class` falls in `slice`.
    pub fn has_documents(&self, class: usize, slice: usize) -> bool {
        !self.counts[slice].row(class).is_empty()
    }
}

pub fn dynamic_class_tfidf(
    slices: Vec<(String, CountMatrix)>,
    global: &ClassTfidf,
) -> Result<DynamicTopicMatrix, TopicError> {
    let mut out = DynamicTopicMatrix {
        slice_labels: Vec::with_capacity(slices.len()),
        slices: Vec::with_capacity(slices.len()),
        counts: Vec::with_capacity(slices.len()),
    };
    for (i, (label, cm)) in slices.into_iter().enumerate() {
        if cm.row_kind() != RowKind::PerClass {
            return Err(TopicError::RowKind {
                expected: RowKind::PerClass,
            });
        }
        if cm.n_rows() != global.n_classes() || cm.n_cols() != global.n_terms() {
            return Err(TopicError::SliceShape {
                slice: i,
                found: cm.n_rows(),
                expected: global.n_classes(),
            });
        }
        out.slices
            .push(weigh_rows(&cm, global.average_words, &global.term_totals));
        out.slice_labels.push(label);
        out.counts.push(cm);
    }
    Ok(out)
}

/// `k` highest-weighted terms of a sparse row, descending, ties by term.
pub fn rank_terms(row: &[(usize, f64)], vocab: &Vocabulary, k: usize) -> Vec<(String, f64)> {
    let mut ranked: Vec<(&str, f64)> = row.iter().map(|&(t, w)| (vocab.term(t), w)).collect();
    ranked.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(b.0)));
    ranked
        .into_iter()
        .take(k)
        .map(|(t, w)| (t.to_string(), w))
        .collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct PipelineConfig {
    pub preprocess: PreprocessSettings,
    pub n_neighbors: usize,
    pub umap: LayoutConfig,
    pub hdbscan: HdbscanParams,
    pub min_topic_size: usize,
    pub top_n_words: usize,
}

impl Default for PipelineConfig {
    fn default() -> Self {
        PipelineConfig {
            preprocess: PreprocessSettings::default(),
            n_neighbors: 20,
            umap: LayoutConfig::default(),
            hdbscan: HdbscanParams::default(),
            min_topic_size: 50,
            top_n_words: 10,
        }
    }
}

/// Hyperparameters recorded alongside a fitted model.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitSummary {
    pub n_neighbors: usize,
    pub umap_out_dim: usize,
    pub umap_epochs: usize,
    pub min_cluster_size: usize,
    pub min_samples: Option<usize>,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicModel {
    pub doc_ids: Vec<String>,
    /// Topic id per document, `-1` for noise.
    pub labels: Vec<i64>,
    pub sizes: Vec<usize>,
    pub min_topic_size: usize,
    pub vocabulary: Vocabulary,
    pub class_counts: CountMatrix,
    pub class_tfidf: ClassTfidf,
    pub top_words: Vec<Vec<(String, f64)>>,
    pub preprocess: PreprocessSettings,
    pub fit: Option<FitSummary>,
}

#[derive(Serialize, Deserialize)]
struct ModelFile {
    format: String,
    version: u32,
    model: TopicModel,
}

impl TopicModel {
    pub fn n_topics(&self) -> usize {
        self.sizes.len()
    }

    /// Topic ids sorted by decreasing size (ids are already assigned that way).
    pub fn topics_by_size(&self) -> Vec<usize> {
        let mut ids: Vec<usize> = (0..self.n_topics()).collect();
        ids.sort_by(|&a, &b| self.sizes[b].cmp(&self.sizes[a]).then(a.cmp(&b)));
        ids
    }

    /// Builds the representation for precomputed cluster labels. Clusters
    /// smaller than `min_topic_size` become noise; the rest are renumbered by
    /// decreasing size.
    pub fn from_assignments(
        doc_ids: Vec<String>,
        tokens: &[Vec<String>],
        cluster_labels: &[i64],
        preprocess: PreprocessSettings,
        min_topic_size: usize,
        top_n_words: usize,
    ) -> Result<TopicModel, TopicError> {
        assert_eq!(tokens.len(), cluster_labels.len());
        assert_eq!(doc_ids.len(), cluster_labels.len());
        let labels = merge_small_clusters(cluster_labels, min_topic_size);
        let n_topics = labels.iter().filter(|&&l| l >= 0).map(|&l| l as usize + 1).max().unwrap_or(0);
        let mut sizes = vec![0usize; n_topics];
        for &l in labels.iter().filter(|&&l| l >= 0) {
            sizes[l as usize] += 1;
        }

        let member_tokens: Vec<Vec<String>> = tokens
            .iter()
            .zip(&labels)
            .filter(|(_, &l)| l >= 0)
            .map(|(t, _)| t.clone())
            .collect();
        let vocabulary = if n_topics == 0 {
            Vocabulary::from_terms(Vec::new(), preprocess.ngram_range, preprocess.min_term_count)
        } else {
            match build_vocabulary(&member_tokens, preprocess.ngram_range, preprocess.min_term_count) {
                Ok(v) => v,
                Err(PreprocessError::EmptyVocabulary) => Vocabulary::from_terms(
                    Vec::new(),
                    preprocess.ngram_range,
                    preprocess.min_term_count,
                ),
                Err(e) => return Err(e.into()),
            }
        };
        let grouping = Grouping {
            n_classes: n_topics,
            labels: labels
                .iter()
                .map(|&l| (l >= 0).then_some(l as usize))
                .collect(),
        };
        let class_counts = count_matrix(tokens, &vocabulary, Some(&grouping))?;
        let class_tfidf = if n_topics == 0 {
            ClassTfidf {
                weights: Vec::new(),
                average_words: 0.0,
                term_totals: vec![0; vocabulary.len()],
            }
        } else {
            class_tfidf(&class_counts)?
        };
        let top_words = (0..n_topics)
            .map(|c| rank_terms(class_tfidf.row(c), &vocabulary, top_n_words))
            .collect();
        Ok(TopicModel {
            doc_ids,
            labels,
            sizes,
            min_topic_size,
            vocabulary,
            class_counts,
            class_tfidf,
            top_words,
            preprocess,
            fit: None,
        })
    }

    pub fn top_words(&self, topic: i64, k: usize) -> Result<Vec<(String, f64)>, TopicError> {
        if topic < 0 || topic as usize >= self.n_topics() {
            return Err(TopicError::UnknownTopic(topic));
        }
        Ok(rank_terms(
            self.class_tfidf.row(topic as usize),
            &self.vocabulary,
            k,
        ))
    }

    /// Re-tokenizes the training corpus with the model's preprocessing settings.
    pub fn tokenize_corpus(&self, corpus: &Corpus) -> Result<Vec<Vec<String>>, TopicError> {
        self.check_corpus(corpus)?;
        let pre = self.preprocess.preprocessor();
        Ok(corpus.iter().map(|d| pre.tokens(&d.combined_text())).collect())
    }

    fn check_corpus(&self, corpus: &Corpus) -> Result<(), TopicError> {
        if corpus.len() != self.doc_ids.len() {
            return Err(TopicError::CorpusMismatch(format!(
                "{} documents, model has {}",
                corpus.len(),
                self.doc_ids.len()
            )));
        }
        if let Some((i, d)) = corpus
            .iter()
            .enumerate()
            .find(|(i, d)| d.id != self.doc_ids[*i])
        {
            return Err(TopicError::CorpusMismatch(format!(
                "row {i} has id `{}`, model expects `{}`",
                d.id, self.doc_ids[i]
            )));
        }
        Ok(())
    }

    /// Yearly slices of the topic-term weights over the training corpus.
    pub fn dynamic_by_year(&self, corpus: &Corpus) -> Result<DynamicTopicMatrix, TopicError> {
        let tokens = self.tokenize_corpus(corpus)?;
        let years: Vec<u16> = corpus.iter().map(|d| d.date.year).collect();
        let mut distinct: Vec<u16> = years
            .iter()
            .zip(&self.labels)
            .filter(|(_, &l)| l >= 0)
            .map(|(&y, _)| y)
            .collect();
        distinct.sort_unstable();
        distinct.dedup();
        let mut slices = Vec::with_capacity(distinct.len());
        for &year in &distinct {
            let grouping = Grouping {
                n_classes: self.n_topics(),
                labels: self
                    .labels
                    .iter()
                    .zip(&years)
                    .map(|(&l, &y)| (l >= 0 && y == year).then_some(l as usize))
                    .collect(),
            };
            slices.push((
                year.to_string(),
                count_matrix(&tokens, &self.vocabulary, Some(&grouping))?,
            ));
        }
        dynamic_class_tfidf(slices, &self.class_tfidf)
    }

    pub fn to_json(&self) -> String {
        let file = ModelFile {
            format: MODEL_FORMAT.to_string(),
            version: MODEL_VERSION,
            model: self.clone(),
        };
        serde_json::to_string_pretty(&file).expect("model serializes") + "\n"
    }

    pub fn from_json(text: &str) -> Result<TopicModel, TopicError> {
        let file: ModelFile =
            serde_json::from_str(text).map_err(|e| TopicError::Format(e.to_string()))?;
        if file.format != MODEL_FORMAT {
            return Err(TopicError::Format(format!("unexpected format `{}`", file.format)));
        }
        if file.version != MODEL_VERSION {
            return Err(TopicError::Format(format!(
                "unsupported version {}",
                file.version
            )));
        }
        let m = file.model;
        if m.labels.len() != m.doc_ids.len()
            || m.class_tfidf.n_classes() != m.sizes.len()
            || m.top_words.len() != m.sizes.len()
            || m.class_tfidf.n_terms() != m.vocabulary.len()
        {
            return Err(TopicError::Format("inconsistent dimensions".into()));
        }
        Ok(m)
    }

    pub fn save(&self, path: &Path) -> Result<(), TopicError> {
        std::fs::write(path, self.to_json()).map_err(|e| TopicError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })
    }

    pub fn load(path: &Path) -> Result<TopicModel, TopicError> {
        let text = std::fs::read_to_string(path).map_err(|e| TopicError::Io {
            path: path.display().to_string(),
            message: e.to_string(),
        })?;
        TopicModel::from_json(&text)
    }
}

/// Drops clusters below `min_size` to noise and renumbers the survivors by
/// decreasing size (ties keep the original order).
pub fn merge_small_clusters(labels: &[i64], min_size: usize) -> Vec<i64> {
    let mut sizes: BTreeMap<i64, usize> = BTreeMap::new();
    for &l in labels.iter().filter(|&&l| l >= 0) {
        *sizes.entry(l).or_insert(0) += 1;
    }
    let mut kept: Vec<(i64, usize)> = sizes.into_iter().filter(|&(_, s)| s >= min_size).collect();
    kept.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    let remap: BTreeMap<i64, i64> = kept
        .iter()
        .enumerate()
        .map(|(new, &(old, _))| (old, new as i64))
        .collect();
    labels
        .iter()
        .map(|l| remap.get(l).copied().unwrap_or(-1))
        .collect()
}

/// Reduce → cluster → drop small clusters → class-based TF-IDF → top words.
pub fn fit_topic_model(
    corpus: &Corpus,
    embeddings: &EmbeddingMatrix,
    cfg: &PipelineConfig,
) -> Result<TopicModel, TopicError> {
    if corpus.len() != embeddings.n() {
        return Err(TopicError::SizeMismatch {
            corpus: corpus.len(),
            embeddings: embeddings.n(),
        });
    }
    cfg.preprocess.validate()?;
    cfg.umap.validate()?;
    let n = corpus.len();
    let mcs = cfg.hdbscan.min_cluster_size;

    let cluster_labels = if n < 2 * mcs.max(1) || n < 3 {
        log::info!("{n} documents cannot hold two clusters of {mcs}; everything is noise");
        vec![-1; n]
    } else {
        let k = cfg.n_neighbors.min(n - 1);
        let reduced = reduce(embeddings, k, &cfg.umap)?;
        hdbscan(&reduced, &cfg.hdbscan)?.labels
    };

    let pre = cfg.preprocess.preprocessor();
    let tokens: Vec<Vec<String>> = corpus.iter().map(|d| pre.tokens(&d.combined_text())).collect();
    let mut model = TopicModel::from_assignments(
        corpus.iter().map(|d| d.id.clone()).collect(),
        &tokens,
        &cluster_labels,
        cfg.preprocess.clone(),
        cfg.min_topic_size,
        cfg.top_n_words,
    )?;
    if model.n_topics() == 0 {
        log::warn!("no topics found; every document is noise");
    }
    model.fit = Some(FitSummary {
        n_neighbors: cfg.n_neighbors,
        umap_out_dim: cfg.umap.out_dim,
        umap_epochs: cfg.umap.epochs,
        min_cluster_size: mcs,
        min_samples: cfg.hdbscan.min_samples,
        seed: cfg.umap.seed,
    });
    Ok(model)
}
