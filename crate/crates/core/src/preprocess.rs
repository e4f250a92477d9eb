//! Text normalization, n-gram tokenization, vocabulary construction and sparse
//! term-count matrices.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};
use thiserror::Error;

const BUILTIN_STOPWORDS: &str = include_str!("../data/stopwords.txt");
const BUILTIN_CONTRACTIONS: &str = include_str!("../data/contractions.tsv");

#[derive(Debug, Error)]
pub enum PreprocessError {
    #[error("vocabulary is empty: no term reaches the minimum count")]
    EmptyVocabulary,
    #[error("invalid n-gram range ({0}, {1}); need 1 <= lo <= hi <= 3")]
    NgramRange(usize, usize),
    #[error("min_term_count must be at least 1")]
    MinTermCount,
    #[error("row {row}: class label {label} outside 0..{n_classes}")]
    UnknownClass {
        row: usize,
        label: usize,
        n_classes: usize,
    },
    #[error("{rows} documents but {labels} class labels")]
    LabelCount { rows: usize, labels: usize },
    #[error("cannot read {path}: {message}")]
    Table { path: String, message: String },
}

pub fn builtin_stopwords() -> HashSet<String> {
    parse_word_list(BUILTIN_STOPWORDS)
}

pub fn builtin_contractions() -> HashMap<String, String> {
    parse_contractions(BUILTIN_CONTRACTIONS).expect("built-in contraction table is well formed")
}

fn parse_word_list(text: &str) -> HashSet<String> {
    text.lines()
        .map(|l| l.trim().to_lowercase())
        .filter(|l| !l.is_empty() && !l.starts_with('#'))
        .collect()
}

fn parse_contractions(text: &str) -> Result<HashMap<String, String>, String> {
    let mut table = HashMap::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let (from, to) = line
            .split_once('\t')
            .ok_or_else(|| format!("line {}: expected a tab-separated pair", i + 1))?;
        table.insert(from.trim().to_lowercase(), to.trim().to_string());
    }
    Ok(table)
}

/// Stopword file: one word per line.
pub fn load_stopwords(path: &Path) -> Result<HashSet<String>, PreprocessError> {
    let text = std::fs::read_to_string(path).map_err(|e| PreprocessError::Table {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    Ok(parse_word_list(&text))
}

/// Contraction file: `contraction<TAB>expansion` per line.
pub fn load_contractions(path: &Path) -> Result<HashMap<String, String>, PreprocessError> {
    let text = std::fs::read_to_string(path).map_err(|e| PreprocessError::Table {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    parse_contractions(&text).map_err(|message| PreprocessError::Table {
        path: path.display().to_string(),
        message,
    })
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Normalizer {
    pub lowercase: bool,
    pub strip_urls: bool,
    pub strip_mentions_hashtags: bool,
    pub alphabetic_only: bool,
    pub expand_contractions: bool,
    pub contractions: HashMap<String, String>,
    pub stopwords: HashSet<String>,
}

impl Default for Normalizer {
    fn default() -> Self {
        Normalizer {
            lowercase: true,
            strip_urls: true,
            strip_mentions_hashtags: true,
            alphabetic_only: true,
            expand_contractions: true,
            contractions: builtin_contractions(),
            stopwords: builtin_stopwords(),
        }
    }
}

impl Normalizer {
    /// Every transformation disabled; only whitespace is collapsed.
    pub fn passthrough() -> Self {
        Normalizer {
            lowercase: false,
            strip_urls: false,
            strip_mentions_hashtags: false,
            alphabetic_only: false,
            expand_contractions: false,
            contractions: HashMap::new(),
            stopwords: HashSet::new(),
        }
    }
}

fn is_url(token: &str) -> bool {
    let t = token.to_ascii_lowercase();
    t.starts_with("http://") || t.starts_with("https://") || t.starts_with("www.")
}

fn is_apostrophe(c: char) -> bool {
    c == '\'' || c == '\u{2019}'
}

fn expand_contractions(s: &str, table: &HashMap<String, String>) -> String {
    let mut out = String::with_capacity(s.len());
    let mut word = String::new();
    let flush = |word: &mut String, out: &mut String| {
        if word.is_empty() {
            return;
        }
        let key: String = word
            .chars()
            .map(|c| if is_apostrophe(c) { '\'' } else { c })
            .collect::<String>()
            .to_lowercase();
        match table.get(&key) {
            Some(expansion) => out.push_str(expansion),
            None => out.push_str(word),
        }
        word.clear();
    };
    for c in s.chars() {
        if c.is_alphabetic() || is_apostrophe(c) {
            word.push(c);
        } else {
            flush(&mut word, &mut out);
            out.push(c);
        }
    }
    flush(&mut word, &mut out);
    out
}

/// Applies, in order: lowercase, URL strip, mention/hashtag strip, contraction
/// expansion, non-alphabetic removal, whitespace collapse.
pub fn normalize_text(s: &str, n: &Normalizer) -> String {
    let mut text = if n.lowercase {
        s.to_lowercase()
    } else {
        s.to_string()
    };
    if n.strip_urls || n.strip_mentions_hashtags {
        text = text
            .split_whitespace()
            .filter(|tok| !(n.strip_urls && is_url(tok)))
            .filter(|tok| !(n.strip_mentions_hashtags && (tok.starts_with('@') || tok.starts_with('#'))))
            .collect::<Vec<_>>()
            .join(" ");
    }
    if n.expand_contractions {
        text = expand_contractions(&text, &n.contractions);
    }
    if n.alphabetic_only {
        text = text
            .chars()
            .map(|c| if c.is_alphabetic() { c } else { ' ' })
            .collect();
    }
    text.split_whitespace().collect::<Vec<_>>().join(" ")
}

/// Rule-based suffix stripping standing in for dictionary lemmatization.
/// Stems shorter than `MIN_STEM` characters are left alone.
pub fn strip_suffix(word: &str) -> String {
    const MIN_STEM: usize = 3;
    let len = word.chars().count();
    let stem_ok = |suffix_len: usize| len >= suffix_len + MIN_STEM;
    if word.ends_with("ing") && stem_ok(3) {
        return word[..word.len() - 3].to_string();
    }
    if word.ends_with("ed") && stem_ok(2) {
        return word[..word.len() - 2].to_string();
    }
    if word.ends_with("es") && stem_ok(2) {
        let stem = &word[..word.len() - 2];
        if ["s", "x", "z", "ch", "sh"].iter().any(|s| stem.ends_with(s)) {
            return stem.to_string();
        }
    }
    if word.ends_with('s')
        && !word.ends_with("ss")
        && !word.ends_with("us")
        && !word.ends_with("is")
        && stem_ok(1)
    {
        return word[..word.len() - 1].to_string();
    }
    word.to_string()
}

/// Whitespace split, stopword removal, then n-grams of each length in
/// `lo..=hi`, shorter n-grams first, each length in document order.
pub fn tokenize(s: &str, stopwords: &HashSet<String>, ngram_range: (usize, usize)) -> Vec<String> {
    let words: Vec<&str> = s
        .split_whitespace()
        .filter(|w| !stopwords.contains(*w))
        .collect();
    ngrams(&words, ngram_range)
}

fn ngrams(words: &[&str], (lo, hi): (usize, usize)) -> Vec<String> {
    let mut out = Vec::new();
    for n in lo..=hi {
        if n == 0 || n > words.len() {
            continue;
        }
        out.extend(words.windows(n).map(|w| w.join(" ")));
    }
    out
}

/// Full per-document text pipeline: normalize, optionally strip suffixes, tokenize.
#[derive(Debug, Clone)]
pub struct Preprocessor {
    pub normalizer: Normalizer,
    pub lemmatize: bool,
    pub ngram_range: (usize, usize),
}

impl Default for Preprocessor {
    fn default() -> Self {
        Preprocessor {
            normalizer: Normalizer::default(),
            lemmatize: false,
            ngram_range: (1, 1),
        }
    }
}

impl Preprocessor {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        check_ngram_range(self.ngram_range)
    }

    /// Normalized, stopword-free word sequence (the unit sliding windows run over).
    pub fn words(&self, text: &str) -> Vec<String> {
        let normalized = normalize_text(text, &self.normalizer);
        normalized
            .split_whitespace()
            .map(|w| {
                if self.lemmatize {
                    strip_suffix(w)
                } else {
                    w.to_string()
                }
            })
            .filter(|w| !self.normalizer.stopwords.contains(w))
            .collect()
    }

    pub fn tokens(&self, text: &str) -> Vec<String> {
        let words = self.words(text);
        let refs: Vec<&str> = words.iter().map(String::as_str).collect();
        ngrams(&refs, self.ngram_range)
    }
}

/// Serializable preprocessing configuration. Tables are stored inline in sorted
/// order so that persisted models are byte-stable.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct PreprocessSettings {
    pub lowercase: bool,
    pub strip_urls: bool,
    pub strip_mentions_hashtags: bool,
    pub alphabetic_only: bool,
    pub expand_contractions: bool,
    pub lemmatize: bool,
    pub ngram_range: (usize, usize),
    pub min_term_count: usize,
    pub stopwords: BTreeSet<String>,
    pub contractions: BTreeMap<String, String>,
}

impl Default for PreprocessSettings {
    fn default() -> Self {
        PreprocessSettings {
            lowercase: true,
            strip_urls: true,
            strip_mentions_hashtags: true,
            alphabetic_only: true,
            expand_contractions: true,
            lemmatize: false,
            ngram_range: (1, 1),
            min_term_count: 1,
            stopwords: builtin_stopwords().into_iter().collect(),
            contractions: builtin_contractions().into_iter().collect(),
        }
    }
}

impl PreprocessSettings {
    pub fn validate(&self) -> Result<(), PreprocessError> {
        check_ngram_range(self.ngram_range)?;
        if self.min_term_count < 1 {
            return Err(PreprocessError::MinTermCount);
        }
        Ok(())
    }

    pub fn preprocessor(&self) -> Preprocessor {
        Preprocessor {
            normalizer: Normalizer {
                lowercase: self.lowercase,
                strip_urls: self.strip_urls,
                strip_mentions_hashtags: self.strip_mentions_hashtags,
                alphabetic_only: self.alphabetic_only,
                expand_contractions: self.expand_contractions,
                contractions: self.contractions.clone().into_iter().collect(),
                stopwords: self.stopwords.iter().cloned().collect(),
            },
            lemmatize: self.lemmatize,
            ngram_range: self.ngram_range,
        }
    }
}

fn check_ngram_range((lo, hi): (usize, usize)) -> Result<(), PreprocessError> {
    if lo < 1 || lo > hi || hi > 3 {
        return Err(PreprocessError::NgramRange(lo, hi));
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
#[serde(from = "VocabularyRepr", into = "VocabularyRepr")]
pub struct Vocabulary {
    terms: Vec<String>,
    index: HashMap<String, usize>,
    ngram_range: (usize, usize),
    min_term_count: usize,
}

impl Vocabulary {
    pub fn from_terms(
        mut terms: Vec<String>,
        ngram_range: (usize, usize),
        min_term_count: usize,
    ) -> Self {
        terms.sort();
        terms.dedup();
        let index = terms
            .iter()
            .enumerate()
            .map(|(i, t)| (t.clone(), i))
            .collect();
        Vocabulary {
            terms,
            index,
            ngram_range,
            min_term_count,
        }
    }

    pub fn terms(&self) -> &[String] {
        &self.terms
    }

    pub fn len(&self) -> usize {
        self.terms.len()
    }

    pub fn is_empty(&self) -> bool {
        self.terms.is_empty()
    }

    pub fn index_of(&self, term: &str) -> Option<usize> {
        self.index.get(term).copied()
    }

    pub fn term(&self, col: usize) -> &str {
        &self.terms[col]
    }

    pub fn ngram_range(&self) -> (usize, usize) {
        self.ngram_range
    }

    pub fn min_term_count(&self) -> usize {
        self.min_term_count
    }
}

#[derive(Serialize, Deserialize)]
struct VocabularyRepr {
    terms: Vec<String>,
    ngram_range: (usize, usize),
    min_term_count: usize,
}

impl From<VocabularyRepr> for Vocabulary {
    fn from(r: VocabularyRepr) -> Self {
        Vocabulary::from_terms(r.terms, r.ngram_range, r.min_term_count)
    }
}

impl From<Vocabulary> for VocabularyRepr {
    fn from(v: Vocabulary) -> Self {
        VocabularyRepr {
            terms: v.terms,
            ngram_range: v.ngram_range,
            min_term_count: v.min_term_count,
        }
    }
}

/// Terms whose total count across all documents is at least `min_term_count`,
/// sorted lexicographically.
pub fn build_vocabulary(
    docs: &[Vec<String>],
    ngram_range: (usize, usize),
    min_term_count: usize,
) -> Result<Vocabulary, PreprocessError> {
    check_ngram_range(ngram_range)?;
    if min_term_count < 1 {
        return Err(PreprocessError::MinTermCount);
    }
    let mut counts: HashMap<&str, usize> = HashMap::new();
    for doc in docs {
        for tok in doc {
            *counts.entry(tok.as_str()).or_insert(0) += 1;
        }
    }
    let terms: Vec<String> = counts
        .into_iter()
        .filter(|&(_, c)| c >= min_term_count)
        .map(|(t, _)| t.to_string())
        .collect();
    if terms.is_empty() {
        return Err(PreprocessError::EmptyVocabulary);
    }
    Ok(Vocabulary::from_terms(terms, ngram_range, min_term_count))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RowKind {
    PerDocument,
    PerClass,
}

/// Sparse nonnegative counts. Each row holds `(column, count)` pairs sorted by column.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CountMatrix {
    rows: Vec<Vec<(usize, u64)>>,
    n_cols: usize,
    row_kind: RowKind,
}

impl CountMatrix {
    pub fn from_rows(rows: Vec<Vec<(usize, u64)>>, n_cols: usize, row_kind: RowKind) -> Self {
        let rows = rows
            .into_iter()
            .map(|row| {
                let mut acc: BTreeMap<usize, u64> = BTreeMap::new();
                for (c, v) in row {
                    assert!(c < n_cols, "column {c} out of range {n_cols}");
                    *acc.entry(c).or_insert(0) += v;
                }
                acc.into_iter().filter(|&(_, v)| v > 0).collect()
            })
            .collect();
        CountMatrix {
            rows,
            n_cols,
            row_kind,
        }
    }

    pub fn n_rows(&self) -> usize {
        self.rows.len()
    }

    pub fn n_cols(&self) -> usize {
        self.n_cols
    }

    pub fn row_kind(&self) -> RowKind {
        self.row_kind
    }

    pub fn row(&self, r: usize) -> &[(usize, u64)] {
        &self.rows[r]
    }

    pub fn rows(&self) -> impl Iterator<Item = &[(usize, u64)]> {
        self.rows.iter().map(Vec::as_slice)
    }

    pub fn get(&self, r: usize, c: usize) -> u64 {
        self.rows[r]
            .binary_search_by_key(&c, |&(col, _)| col)
            .map(|i| self.rows[r][i].1)
            .unwrap_or(0)
    }

    pub fn row_sum(&self, r: usize) -> u64 {
        self.rows[r].iter().map(|&(_, v)| v).sum()
    }

    pub fn total(&self) -> u64 {
        self.rows.iter().flatten().map(|&(_, v)| v).sum()
    }

    /// Column sums (`tf_t` across all rows).
    pub fn column_sums(&self) -> Vec<u64> {
        let mut sums = vec![0u64; self.n_cols];
        for &(c, v) in self.rows.iter().flatten() {
            sums[c] += v;
        }
        sums
    }

    /// Number of rows with a nonzero entry per column (`df_t`).
    pub fn document_frequencies(&self) -> Vec<u64> {
        let mut df = vec![0u64; self.n_cols];
        for &(c, _) in self.rows.iter().flatten() {
            df[c] += 1;
        }
        df
    }

    pub fn to_dense(&self) -> Vec<Vec<u64>> {
        self.rows
            .iter()
            .map(|row| {
                let mut dense = vec![0; self.n_cols];
                for &(c, v) in row {
                    dense[c] = v;
                }
                dense
            })
            .collect()
    }
}

/// Class assignment for per-class aggregation; `None` rows are left out.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Grouping {
    pub n_classes: usize,
    pub labels: Vec<Option<usize>>,
}

/// Per-document counts, or per-class counts where class row `c` is the
/// column-wise sum of its member documents.
pub fn count_matrix(
    docs: &[Vec<String>],
    vocab: &Vocabulary,
    grouping: Option<&Grouping>,
) -> Result<CountMatrix, PreprocessError> {
    let doc_row = |doc: &Vec<String>| -> Vec<(usize, u64)> {
        doc.iter()
            .filter_map(|t| vocab.index_of(t))
            .map(|c| (c, 1))
            .collect()
    };
    match grouping {
        None => Ok(CountMatrix::from_rows(
            docs.iter().map(doc_row).collect(),
            vocab.len(),
            RowKind::PerDocument,
        )),
        Some(g) => {
            if g.labels.len() != docs.len() {
                return Err(PreprocessError::LabelCount {
                    rows: docs.len(),
                    labels: g.labels.len(),
                });
            }
            let mut rows: Vec<Vec<(usize, u64)>> = vec![Vec::new(); g.n_classes];
            for (row, (doc, label)) in docs.iter().zip(&g.labels).enumerate() {
                let Some(label) = *label else { continue };
                if label >= g.n_classes {
                    return Err(PreprocessError::UnknownClass {
                        row,
                        label,
                        n_classes: g.n_classes,
                    });
                }
                rows[label].extend(doc_row(doc));
            }
            Ok(CountMatrix::from_rows(rows, vocab.len(), RowKind::PerClass))
        }
    }
}
