//! Topic-quality metrics: topic diversity, rank-biased overlap, NPMI and Cv
//! coherence over boolean sliding windows.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use thiserror::Error;

pub const DEFAULT_RBO_P: f64 = 0.9;
pub const DEFAULT_WINDOW: usize = 110;
pub const DEFAULT_TOP_N: usize = 10;
const JOINT_EPS: f64 = 1e-12;

#[derive(Debug, Error, PartialEq)]
pub enum MetricsError {
    #[error("no topics given")]
    NoTopics,
    #[error("topic {topic} has {len} words, need at least 2")]
    TooFewWords { topic: usize, len: usize },
    #[error("topic {topic} has {found} words, expected {expected}")]
    Ragged {
        topic: usize,
        expected: usize,
        found: usize,
    },
    #[error("topic {topic} repeats `{word}`")]
    Duplicate { topic: usize, word: String },
    #[error("persistence must lie in (0, 1), got {0}")]
    Persistence(f64),
    #[error("ranked lists must be nonempty and of equal length ({0} vs {1})")]
    LengthMismatch(usize, usize),
    #[error("inverted RBO needs at least 2 topics, got {0}")]
    TooFewTopics(usize),
    #[error("window size must be at least 1")]
    WindowSize,
    #[error("corpus yields no windows")]
    NoWindows,
    #[error("i/o error on {path}: {message}")]
    Io { path: String, message: String },
}

/// Ranked topic word lists of uniform length `k ≥ 2`, no repeats within a list.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicWordLists {
    topics: Vec<Vec<String>>,
}

impl TopicWordLists {
    pub fn new(topics: Vec<Vec<String>>) -> Result<Self, MetricsError> {
        let first = topics.first().ok_or(MetricsError::NoTopics)?.len();
        for (i, t) in topics.iter().enumerate() {
            if t.len() < 2 {
                return Err(MetricsError::TooFewWords {
                    topic: i,
                    len: t.len(),
                });
            }
            if t.len() != first {
                return Err(MetricsError::Ragged {
                    topic: i,
                    expected: first,
                    found: t.len(),
                });
            }
            let mut seen = HashSet::new();
            if let Some(w) = t.iter().find(|w| !seen.insert(w.as_str())) {
                return Err(MetricsError::Duplicate {
                    topic: i,
                    word: w.clone(),
                });
            }
        }
        Ok(TopicWordLists { topics })
    }

    /// Cuts every list to `min(k, shortest list)` words.
    pub fn truncated(mut topics: Vec<Vec<String>>, k: usize) -> Result<Self, MetricsError> {
        let k = topics.iter().map(Vec::len).min().unwrap_or(0).min(k);
        for t in &mut topics {
            t.truncate(k);
        }
        Self::new(topics)
    }

    pub fn k(&self) -> usize {
        self.topics[0].len()
    }

    pub fn len(&self) -> usize {
        self.topics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }

    pub fn topics(&self) -> &[Vec<String>] {
        &self.topics
    }

    pub fn vocabulary(&self) -> Vec<String> {
        let mut v: Vec<String> = self.topics.iter().flatten().cloned().collect();
        v.sort();
        v.dedup();
        v
    }
}

/// One topic per line, words separated by whitespace; blank lines skipped.
/// Lines are cut to `top_n` words.
pub fn read_topics_file(path: &Path, top_n: usize) -> Result<TopicWordLists, MetricsError> {
    let text = std::fs::read_to_string(path).map_err(|e| MetricsError::Io {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_topics(&text, top_n)
}

pub fn parse_topics(text: &str, top_n: usize) -> Result<TopicWordLists, MetricsError> {
    let topics = text
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.split_whitespace().take(top_n).map(str::to_string).collect())
        .collect();
    TopicWordLists::new(topics)
}

pub fn topic_diversity(t: &TopicWordLists) -> f64 {
    let unique: HashSet<&str> = t.topics.iter().flatten().map(String::as_str).collect();
    unique.len() as f64 / (t.k() * t.len()) as f64
}

pub fn rbo<S: AsRef<str>>(s: &[S], t: &[S], p: f64) -> Result<f64, MetricsError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(MetricsError::Persistence(p));
    }
    if s.is_empty() || s.len() != t.len() {
        return Err(MetricsError::LengthMismatch(s.len(), t.len()));
    }
    let mut seen_s = HashSet::new();
    let mut seen_t = HashSet::new();
    let mut overlap = 0usize;
    let (mut num, mut den, mut weight) = (0.0, 0.0, 1.0);
    for (d, (a, b)) in s.iter().zip(t).enumerate() {
        let (a, b) = (a.as_ref(), b.as_ref());
        if a == b {
            overlap += 1;
        } else {
            overlap += seen_t.contains(a) as usize + seen_s.contains(b) as usize;
        }
        seen_s.insert(a);
        seen_t.insert(b);
        num += weight * overlap as f64 / (d + 1) as f64;
        den += weight;
        weight *= p;
    }
    Ok(num / den)
}

pub fn inverted_rbo(t: &TopicWordLists, p: f64) -> Result<f64, MetricsError> {
    let n = t.len();
    if n < 2 {
        return Err(MetricsError::TooFewTopics(n));
    }
    let mut sum = 0.0;
    for i in 0..n {
        for j in i + 1..n {
            sum += rbo(&t.topics[i], &t.topics[j], p)?;
        }
    }
    Ok(1.0 - sum / (n * (n - 1) / 2) as f64)
}

/// Boolean sliding-window counts over a set of tracked terms.
#[derive(Debug, Clone, PartialEq)]
pub struct WindowStats {
    window_size: usize,
    total: u64,
    terms: Vec<String>,
    index: HashMap<String, usize>,
    counts: Vec<u64>,
    pairs: HashMap<(usize, usize), u64>,
}

impl WindowStats {
    pub fn window_size(&self) -> usize {
        self.window_size
    }

    pub fn total_windows(&self) -> u64 {
        self.total
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    /// Windows containing `w`; 0 for untracked terms.
    pub fn count(&self, w: &str) -> u64 {
        self.index.get(w).map_or(0, |&i| self.counts[i])
    }

    /// Windows containing both terms; for `a == b` this is `count(a)`.
    pub fn pair_count(&self, a: &str, b: &str) -> u64 {
        match (self.index.get(a), self.index.get(b)) {
            (Some(&i), Some(&j)) if i == j => self.counts[i],
            (Some(&i), Some(&j)) => self.pairs.get(&(i.min(j), i.max(j))).copied().unwrap_or(0),
            _ => 0,
        }
    }
}

/// Counts windows of `window_size` consecutive tokens (stride 1). A document
/// shorter than the window is one window; an empty document yields none.
///
/// With `targets`, only those terms are tracked. A target made of several
/// space-separated words is present in a window when a contiguous occurrence
/// lies entirely inside it. Without `targets`, every distinct token is tracked.
pub fn window_stats<S: AsRef<str>>(
    docs: &[Vec<S>],
    window_size: usize,
    targets: Option<&[String]>,
) -> Result<WindowStats, MetricsError> {
    if window_size == 0 {
        return Err(MetricsError::WindowSize);
    }
    let mut terms: Vec<String> = match targets {
        Some(t) => t.to_vec(),
        None => docs
            .iter()
            .flatten()
            .map(|w| w.as_ref().to_string())
            .collect(),
    };
    terms.sort();
    terms.dedup();
    let index: HashMap<String, usize> = terms
        .iter()
        .enumerate()
        .map(|(i, t)| (t.clone(), i))
        .collect();
    let patterns: Vec<Vec<&str>> = terms.iter().map(|t| t.split(' ').collect()).collect();
    let mut by_head: HashMap<&str, Vec<usize>> = HashMap::new();
    for (i, p) in patterns.iter().enumerate() {
        by_head.entry(p[0]).or_default().push(i);
    }

    let mut stats = WindowStats {
        window_size,
        total: 0,
        counts: vec![0; terms.len()],
        terms: terms.clone(),
        index,
        pairs: HashMap::new(),
    };
    for doc in docs {
        let words: Vec<&str> = doc.iter().map(AsRef::as_ref).collect();
        if words.is_empty() {
            continue;
        }
        // Occurrences indexed by end position (exclusive).
        let mut ending_at: Vec<Vec<(usize, usize)>> = vec![Vec::new(); words.len() + 1];
        for (start, w) in words.iter().enumerate() {
            for &term in by_head.get(w).into_iter().flatten() {
                let pat = &patterns[term];
                let end = start + pat.len();
                if end <= words.len() && words[start..end] == pat[..] {
                    ending_at[end].push((term, start));
                }
            }
        }
        let span = window_size.min(words.len());
        let n_windows = words.len() - span + 1;
        let mut live: HashMap<usize, usize> = HashMap::new();
        let mut inside: Vec<Vec<(usize, usize)>> = vec![Vec::new(); words.len()];
        for end in 1..=span {
            for &(term, start) in &ending_at[end] {
                *live.entry(term).or_insert(0) += 1;
                inside[start].push((term, start));
            }
        }
        for s in 0..n_windows {
            if s > 0 {
                for &(term, _) in &inside[s - 1] {
                    let c = live.get_mut(&term).expect("live occurrence");
                    *c -= 1;
                    if *c == 0 {
                        live.remove(&term);
                    }
                }
                for &(term, start) in ending_at[s + span].iter().filter(|o| o.1 >= s) {
                    *live.entry(term).or_insert(0) += 1;
                    inside[start].push((term, start));
                }
            }
            stats.total += 1;
            let mut present: Vec<usize> = live.keys().copied().collect();
            present.sort_unstable();
            for (a, &i) in present.iter().enumerate() {
                stats.counts[i] += 1;
                for &j in &present[a + 1..] {
                    *stats.pairs.entry((i, j)).or_insert(0) += 1;
                }
            }
        }
    }
    if stats.total == 0 {
        return Err(MetricsError::NoWindows);
    }
    Ok(stats)
}

/// NPMI of two tracked terms. Pairs never seen together score −1; a pair
/// present in every window scores 1.
pub fn npmi(w: &WindowStats, a: &str, b: &str) -> f64 {
    let n = w.total_windows() as f64;
    let joint = w.pair_count(a, b);
    if joint == 0 {
        return -1.0;
    }
    if joint == w.total_windows() {
        return 1.0;
    }
    let pij = joint as f64 / n + JOINT_EPS;
    let pi = w.count(a) as f64 / n;
    let pj = w.count(b) as f64 / n;
    ((pij / (pi * pj)).ln() / -pij.ln()).clamp(-1.0, 1.0)
}

/// Mean pairwise NPMI for each topic.
pub fn npmi_per_topic(t: &TopicWordLists, w: &WindowStats) -> Vec<f64> {
    t.topics
        .iter()
        .map(|words| {
            let mut sum = 0.0;
            let mut n = 0usize;
            for i in 0..words.len() {
                for j in i + 1..words.len() {
                    sum += npmi(w, &words[i], &words[j]);
                    n += 1;
                }
            }
            sum / n as f64
        })
        .collect()
}

pub fn coherence_npmi(t: &TopicWordLists, w: &WindowStats) -> f64 {
    mean(&npmi_per_topic(t, w))
}

pub fn cv_per_topic(t: &TopicWordLists, w: &WindowStats) -> Vec<f64> {
    t.topics
        .iter()
        .map(|words| {
            let k = words.len();
            let vectors: Vec<Vec<f64>> = (0..k)
                .map(|i| {
                    (0..k)
                        .map(|m| if i == m { 1.0 } else { npmi(w, &words[i], &words[m]) })
                        .collect()
                })
                .collect();
            let total: Vec<f64> = (0..k).map(|m| vectors.iter().map(|v| v[m]).sum()).collect();
            let scores: Vec<f64> = vectors
                .iter()
                .map(|v| cosine(v, &total).max(0.0))
                .collect();
            mean(&scores)
        })
        .collect()
}

pub fn coherence_cv(t: &TopicWordLists, w: &WindowStats) -> f64 {
    mean(&cv_per_topic(t, w))
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

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct MetricReport {
    pub n_topics: usize,
    pub k: usize,
    pub td: f64,
    /// `None` with fewer than 2 topics.
    pub inverted_rbo: Option<f64>,
    pub npmi: Option<f64>,
    pub cv: Option<f64>,
}

pub fn evaluate(
    t: &TopicWordLists,
    stats: Option<&WindowStats>,
    p: f64,
) -> Result<MetricReport, MetricsError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(MetricsError::Persistence(p));
    }
    Ok(MetricReport {
        n_topics: t.len(),
        k: t.k(),
        td: topic_diversity(t),
        inverted_rbo: (t.len() >= 2).then(|| inverted_rbo(t, p)).transpose()?,
        npmi: stats.map(|w| coherence_npmi(t, w)),
        cv: stats.map(|w| coherence_cv(t, w)),
    })
}
