//! Post-fit analytics over a [`TopicModel`]: similarity matrix, topic
//! hierarchy, 2D topic map, word-score and word-cloud exports, and per-slice
//! topic words. Everything here is deterministic for a fixed model.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::Path;

use nalgebra::{DMatrix, SymmetricEigen};
use thiserror::Error;

use crate::embedding::EmbeddingMatrix;
use crate::topics::{rank_terms, DynamicTopicMatrix, TopicModel};
use crate::preprocess::Vocabulary;
use crate::umap::{fuzzy_graph, optimize_layout_from, LayoutConfig, UmapError};

pub const DEFAULT_REPORT_TOPICS: usize = 8;
pub const DEFAULT_REPORT_WORDS: usize = 5;

#[derive(Debug, Error)]
pub enum AnalysisError {
    #[error("need at least 2 topics, got {0}")]
    TooFewTopics(usize),
    #[error("requested {requested} topics but the model has {available}")]
    TopN { requested: usize, available: usize },
    #[error("unknown topic id {0}")]
    UnknownTopic(i64),
    #[error("no frequencies to export")]
    EmptyFrequencies,
    #[error("embedding rows ({embeddings}) do not match model documents ({documents})")]
    SizeMismatch { documents: usize, embeddings: usize },
    #[error(transparent)]
    Umap(#[from] UmapError),
    #[error("cannot write {path}: {message}")]
    Io { path: String, message: String },
}

fn io_err(path: &Path) -> impl Fn(std::io::Error) -> AnalysisError + '_ {
    move |e| AnalysisError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn csv_err(path: &Path) -> impl Fn(csv::Error) -> AnalysisError + '_ {
    move |e| AnalysisError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    }
}

fn cosine(u: &[f64], v: &[f64]) -> f64 {
    let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
    let nu: f64 = u.iter().map(|a| a * a).sum();
    let nv: f64 = v.iter().map(|a| a * a).sum();
    if nu == 0.0 || nv == 0.0 {
        return 0.0;
    }
    (dot / (nu * nv).sqrt()).clamp(-1.0, 1.0)
}

/// Pairwise cosine similarity of topic weight rows; row/column `i` is topic `i`.
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityMatrix {
    pub values: Vec<Vec<f64>>,
}

impl SimilarityMatrix {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.values[i][j]
    }
}

pub fn topic_similarity_matrix(tm: &TopicModel) -> Result<SimilarityMatrix, AnalysisError> {
    let t = tm.n_topics();
    if t < 2 {
        return Err(AnalysisError::TooFewTopics(t));
    }
    let rows: Vec<Vec<f64>> = (0..t).map(|c| tm.class_tfidf.dense_row(c)).collect();
    Ok(SimilarityMatrix {
        values: similarity_of_rows(&rows),
    })
}

fn similarity_of_rows(rows: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let t = rows.len();
    let mut values = vec![vec![0.0; t]; t];
    for i in 0..t {
        values[i][i] = 1.0;
        for j in i + 1..t {
            let s = cosine(&rows[i], &rows[j]);
            values[i][j] = s;
            values[j][i] = s;
        }
    }
    values
}

/// One agglomeration step. Nodes `0..leaves.len()` are leaves; the merge at
/// step `s` creates node `leaves.len() + s`.
#[derive(Debug, Clone, PartialEq)]
pub struct Merge {
    pub left: usize,
    pub right: usize,
    pub height: f64,
    pub size: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicTree {
    /// Topic id of each leaf node.
    pub leaves: Vec<usize>,
    pub merges: Vec<Merge>,
}

/// Average-linkage clustering of the `top_n` largest topics under cosine distance.
pub fn hierarchical_topic_tree(tm: &TopicModel, top_n: usize) -> Result<TopicTree, AnalysisError> {
    if top_n < 2 {
        return Err(AnalysisError::TooFewTopics(top_n));
    }
    if top_n > tm.n_topics() {
        return Err(AnalysisError::TopN {
            requested: top_n,
            available: tm.n_topics(),
        });
    }
    let leaves: Vec<usize> = tm.topics_by_size().into_iter().take(top_n).collect();
    let rows: Vec<Vec<f64>> = leaves.iter().map(|&c| tm.class_tfidf.dense_row(c)).collect();
    let sim = similarity_of_rows(&rows);
    let dist: Vec<Vec<f64>> = sim
        .iter()
        .map(|r| r.iter().map(|s| 1.0 - s).collect())
        .collect();
    Ok(TopicTree {
        leaves,
        merges: average_linkage(&dist),
    })
}

/// Average linkage with Lance–Williams updates. Ties go to the pair with the
/// smallest `(i, j)` among active nodes in creation order.
pub fn average_linkage(dist: &[Vec<f64>]) -> Vec<Merge> {
    let n = dist.len();
    let mut d: Vec<Vec<f64>> = dist.to_vec();
    // active slot -> (node id, size)
    let mut active: Vec<Option<(usize, usize)>> = (0..n).map(|i| Some((i, 1))).collect();
    let mut merges = Vec::with_capacity(n.saturating_sub(1));
    for step in 0..n.saturating_sub(1) {
        let mut best: Option<(usize, usize, f64)> = None;
        for i in 0..n {
            if active[i].is_none() {
                continue;
            }
            for j in i + 1..n {
                if active[j].is_none() {
                    continue;
                }
                if best.is_none_or(|(_, _, h)| d[i][j] < h) {
                    best = Some((i, j, d[i][j]));
                }
            }
        }
        let (i, j, h) = best.expect("two active clusters");
        let (ni_id, ni) = active[i].unwrap();
        let (nj_id, nj) = active[j].unwrap();
        for k in 0..n {
            if active[k].is_some() && k != i && k != j {
                let v = (ni as f64 * d[i][k] + nj as f64 * d[j][k]) / (ni + nj) as f64;
                d[i][k] = v;
                d[k][i] = v;
            }
        }
        let (left, right) = if ni_id < nj_id { (ni_id, nj_id) } else { (nj_id, ni_id) };
        merges.push(Merge {
            left,
            right,
            height: h,
            size: ni + nj,
        });
        active[i] = Some((n + step, ni + nj));
        active[j] = None;
    }
    merges
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScatterPoint {
    pub topic: usize,
    pub x: f64,
    pub y: f64,
    pub size: usize,
    pub label: String,
}

/// `"<id>_<w1>_<w2>_<w3>"` from the topic's top words.
pub fn topic_label(tm: &TopicModel, topic: usize) -> String {
    let mut label = topic.to_string();
    for (w, _) in tm.top_words[topic].iter().take(3) {
        label.push('_');
        label.push_str(&w.replace(' ', "-"));
    }
    label
}

/// 2D map of topic centroids. Up to three topics are placed by an exact PCA
/// projection; larger sets run the UMAP layout from a PCA start.
pub fn topic_scatter_2d(
    tm: &TopicModel,
    embeddings: &EmbeddingMatrix,
    seed: u64,
) -> Result<Vec<ScatterPoint>, AnalysisError> {
    if embeddings.n() != tm.labels.len() {
        return Err(AnalysisError::SizeMismatch {
            documents: tm.labels.len(),
            embeddings: embeddings.n(),
        });
    }
    let t = tm.n_topics();
    let d = embeddings.d();
    let mut centroids = vec![vec![0.0f64; d]; t];
    for (row, &label) in embeddings.rows().zip(&tm.labels) {
        if label >= 0 {
            for (c, &v) in centroids[label as usize].iter_mut().zip(row) {
                *c += v as f64;
            }
        }
    }
    for (c, &size) in centroids.iter_mut().zip(&tm.sizes) {
        c.iter_mut().for_each(|v| *v /= size as f64);
    }

    let mut coords = pca_2d(&centroids);
    if t >= 4 {
        let scale = coords
            .iter()
            .flatten()
            .fold(0.0f64, |m, v| m.max(v.abs()));
        if scale > 0.0 {
            coords.iter_mut().flatten().for_each(|v| *v *= 10.0 / scale);
        }
        let flat: Vec<f32> = centroids.iter().flatten().map(|&v| v as f32).collect();
        let m = EmbeddingMatrix::new(t, d, flat).map_err(|e| UmapError::Config(e.to_string()))?;
        let g = fuzzy_graph(&m, 15.min(t - 1))?;
        let cfg = LayoutConfig {
            out_dim: 2,
            seed,
            ..LayoutConfig::default()
        };
        coords = optimize_layout_from(coords, &g, &cfg)?;
    }
    Ok((0..t)
        .map(|c| ScatterPoint {
            topic: c,
            x: coords[c][0],
            y: coords[c][1],
            size: tm.sizes[c],
            label: topic_label(tm, c),
        })
        .collect())
}

/// Projection onto the two leading principal axes. Each axis is signed so its
/// largest-magnitude coordinate is positive.
pub fn pca_2d(points: &[Vec<f64>]) -> Vec<Vec<f64>> {
    let n = points.len();
    if n == 0 {
        return Vec::new();
    }
    let d = points[0].len();
    let mean: Vec<f64> = (0..d)
        .map(|j| points.iter().map(|p| p[j]).sum::<f64>() / n as f64)
        .collect();
    let centered: Vec<Vec<f64>> = points
        .iter()
        .map(|p| p.iter().zip(&mean).map(|(a, m)| a - m).collect())
        .collect();
    let gram: DMatrix<f64> = DMatrix::from_fn(n, n, |i, j| {
        centered[i].iter().zip(&centered[j]).map(|(a, b)| a * b).sum::<f64>()
    });
    let eig = SymmetricEigen::new(gram);
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]).then(a.cmp(&b)));
    let mut out = vec![vec![0.0; 2]; n];
    for (axis, &k) in order.iter().take(2).enumerate() {
        let lambda = eig.eigenvalues[k].max(0.0);
        let v = eig.eigenvectors.column(k);
        let pivot = (0..n)
            .max_by(|&a, &b| v[a].abs().total_cmp(&v[b].abs()).then(b.cmp(&a)))
            .unwrap();
        let sign = if v[pivot] < 0.0 { -1.0 } else { 1.0 };
        for i in 0..n {
            out[i][axis] = sign * v[i] * lambda.sqrt();
        }
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicWordScores {
    pub topic: usize,
    pub size: usize,
    /// Words with scores divided by the topic's top score; negatives become 0.
    pub words: Vec<(String, f64)>,
}

pub fn word_scores_report(
    tm: &TopicModel,
    top_k_topics: usize,
    words_per_topic: usize,
) -> Vec<TopicWordScores> {
    tm.topics_by_size()
        .into_iter()
        .take(top_k_topics)
        .map(|c| {
            let ranked = rank_terms(tm.class_tfidf.row(c), &tm.vocabulary, words_per_topic);
            let max = ranked.first().map_or(0.0, |r| r.1);
            let words = ranked
                .into_iter()
                .map(|(w, s)| {
                    let v = if max > 0.0 { (s / max).max(0.0) } else { 0.0 };
                    (w, v)
                })
                .collect();
            TopicWordScores {
                topic: c,
                size: tm.sizes[c],
                words,
            }
        })
        .collect()
}

/// Rows of a word-cloud table: descending weight scaled to a maximum of 100,
/// ties in lexicographic order.
pub fn wordcloud_rows(frequencies: &BTreeMap<String, u64>) -> Result<Vec<(String, f64)>, AnalysisError> {
    let max = frequencies.values().copied().max().ok_or(AnalysisError::EmptyFrequencies)?;
    if max == 0 {
        return Err(AnalysisError::EmptyFrequencies);
    }
    let mut rows: Vec<(String, f64)> = frequencies
        .iter()
        .map(|(t, &c)| (t.clone(), 100.0 * c as f64 / max as f64))
        .collect();
    rows.sort_by(|a, b| b.1.total_cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    Ok(rows)
}

pub fn wordcloud_export(frequencies: &BTreeMap<String, u64>, path: &Path) -> Result<(), AnalysisError> {
    let rows = wordcloud_rows(frequencies)?;
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["term", "weight"]).map_err(csv_err(path))?;
    for (t, v) in rows {
        w.write_record([t, v.to_string()]).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Token frequencies over a set of tokenized documents.
pub fn term_frequencies<'a, I>(docs: I) -> BTreeMap<String, u64>
where
    I: IntoIterator<Item = &'a Vec<String>>,
{
    let mut out = BTreeMap::new();
    for t in docs.into_iter().flatten() {
        *out.entry(t.clone()).or_insert(0) += 1;
    }
    out
}

#[derive(Debug, Clone, PartialEq)]
pub struct SliceWords {
    pub slice: String,
    pub words: Vec<(String, f64)>,
}

/// Per-slice top-`k` words of one topic. Slices where the topic has no
/// documents give an empty list.
pub fn dynamic_report(
    dtm: &DynamicTopicMatrix,
    vocab: &Vocabulary,
    topic: i64,
    k: usize,
) -> Result<Vec<SliceWords>, AnalysisError> {
    let n_classes = dtm.slices.first().map_or(0, Vec::len);
    if topic < 0 || topic as usize >= n_classes {
        return Err(AnalysisError::UnknownTopic(topic));
    }
    Ok(dtm
        .slice_labels
        .iter()
        .zip(&dtm.slices)
        .map(|(label, rows)| SliceWords {
            slice: label.clone(),
            words: rank_terms(&rows[topic as usize], vocab, k),
        })
        .collect())
}

pub fn write_scatter_csv(points: &[ScatterPoint], path: &Path) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["topic", "x", "y", "size", "label"]).map_err(csv_err(path))?;
    for p in points {
        w.write_record([
            p.topic.to_string(),
            p.x.to_string(),
            p.y.to_string(),
            p.size.to_string(),
            p.label.clone(),
        ])
        .map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

pub fn write_similarity_csv(m: &SimilarityMatrix, path: &Path) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    let header: Vec<String> = std::iter::once("topic".to_string())
        .chain((0..m.len()).map(|i| i.to_string()))
        .collect();
    w.write_record(&header).map_err(csv_err(path))?;
    for (i, row) in m.values.iter().enumerate() {
        let rec: Vec<String> = std::iter::once(i.to_string())
            .chain(row.iter().map(f64::to_string))
            .collect();
        w.write_record(&rec).map_err(csv_err(path))?;
    }
    w.flush().map_err(io_err(path))
}

/// Merge list with `left`/`right` as node ids; leaf nodes are also listed
/// with their topic ids in `leaf_topics`.
pub fn write_tree_csv(tree: &TopicTree, path: &Path) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["node", "left", "right", "height", "size", "leaf_topics"])
        .map_err(csv_err(path))?;
    let n = tree.leaves.len();
    let mut members: Vec<Vec<usize>> = tree.leaves.iter().map(|&t| vec![t]).collect();
    for (s, m) in tree.merges.iter().enumerate() {
        let mut joined = members[m.left].clone();
        joined.extend(&members[m.right]);
        let topics: Vec<String> = joined.iter().map(usize::to_string).collect();
        w.write_record([
            (n + s).to_string(),
            m.left.to_string(),
            m.right.to_string(),
            m.height.to_string(),
            m.size.to_string(),
            topics.join(" "),
        ])
        .map_err(csv_err(path))?;
        members.push(joined);
    }
    w.flush().map_err(io_err(path))
}

pub fn write_word_scores_csv(report: &[TopicWordScores], path: &Path) -> Result<(), AnalysisError> {
    let mut w = csv::Writer::from_path(path).map_err(csv_err(path))?;
    w.write_record(["topic", "size", "rank", "word", "score"]).map_err(csv_err(path))?;
    for t in report {
        for (rank, (word, score)) in t.words.iter().enumerate() {
            w.write_record([
                t.topic.to_string(),
                t.size.to_string(),
                (rank + 1).to_string(),
                word.clone(),
                score.to_string(),
            ])
            .map_err(csv_err(path))?;
        }
    }
    w.flush().map_err(io_err(path))
}

pub fn write_dynamic_csv(
    topic: usize,
    report: &[SliceWords],
    out: &mut impl Write,
) -> Result<(), std::io::Error> {
    let mut w = csv::Writer::from_writer(out);
    for s in report {
        for (rank, (word, weight)) in s.words.iter().enumerate() {
            w.write_record([
                topic.to_string(),
                s.slice.clone(),
                (rank + 1).to_string(),
                word.clone(),
                weight.to_string(),
            ])?;
        }
    }
    w.flush()
}
