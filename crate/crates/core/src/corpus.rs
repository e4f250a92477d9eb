//! Abstract corpora: loading, validation, keyword filtering and yearly summaries.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum CorpusError {
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("parse error at line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("line {line}: missing required field `{field}`")]
    MissingField { line: usize, field: String },
    #[error("duplicate document id `{0}`")]
    DuplicateId(String),
    #[error("line {line}: invalid document: {message}")]
    Invalid { line: usize, message: String },
    #[error("unknown corpus format `{0}` (expected jsonl or csv)")]
    UnknownFormat(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Pubmed,
    Biorxiv,
    Medrxiv,
    Arxiv,
    Acm,
    Other,
}

impl Source {
    pub fn as_str(&self) -> &'static str {
        match self {
            Source::Pubmed => "pubmed",
            Source::Biorxiv => "biorxiv",
            Source::Medrxiv => "medrxiv",
            Source::Arxiv => "arxiv",
            Source::Acm => "acm",
            Source::Other => "other",
        }
    }
}

impl FromStr for Source {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.trim().to_ascii_lowercase().as_str() {
            "pubmed" => Ok(Source::Pubmed),
            "biorxiv" => Ok(Source::Biorxiv),
            "medrxiv" => Ok(Source::Medrxiv),
            "arxiv" => Ok(Source::Arxiv),
            "acm" => Ok(Source::Acm),
            "other" | "" => Ok(Source::Other),
            other => Err(format!("unknown source `{other}`")),
        }
    }
}

/// Calendar date with year granularity guaranteed; month and day are optional.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct DocDate {
    pub year: u16,
    pub month: Option<u8>,
    pub day: Option<u8>,
}

impl DocDate {
    pub fn year(year: u16) -> Self {
        DocDate {
            year,
            month: None,
            day: None,
        }
    }
}

impl FromStr for DocDate {
    type Err = String;

    /// Accepts `YYYY`, `YYYY-MM` or `YYYY-MM-DD`.
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        let s = s.trim();
        let parts: Vec<&str> = s.split('-').collect();
        if parts.is_empty() || parts.len() > 3 || parts[0].len() != 4 {
            return Err(format!("invalid date `{s}`"));
        }
        let year: u16 = parts[0]
            .parse()
            .map_err(|_| format!("invalid year in `{s}`"))?;
        if !(1900..=2100).contains(&year) {
            return Err(format!("year {year} outside [1900, 2100]"));
        }
        let month = match parts.get(1) {
            Some(m) => {
                let m: u8 = m.parse().map_err(|_| format!("invalid month in `{s}`"))?;
                if !(1..=12).contains(&m) {
                    return Err(format!("month {m} out of range"));
                }
                Some(m)
            }
            None => None,
        };
        let day = match parts.get(2) {
            Some(d) => {
                let d: u8 = d.parse().map_err(|_| format!("invalid day in `{s}`"))?;
                if !(1..=31).contains(&d) {
                    return Err(format!("day {d} out of range"));
                }
                Some(d)
            }
            None => None,
        };
        Ok(DocDate { year, month, day })
    }
}

impl fmt::Display for DocDate {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{:04}", self.year)?;
        if let Some(m) = self.month {
            write!(f, "-{m:02}")?;
            if let Some(d) = self.day {
                write!(f, "-{d:02}")?;
            }
        }
        Ok(())
    }
}

impl Serialize for DocDate {
    fn serialize<S: serde::Serializer>(&self, serializer: S) -> Result<S::Ok, S::Error> {
        serializer.collect_str(self)
    }
}

impl<'de> Deserialize<'de> for DocDate {
    fn deserialize<D: serde::Deserializer<'de>>(deserializer: D) -> Result<Self, D::Error> {
        let s = String::deserialize(deserializer)?;
        s.parse().map_err(serde::de::Error::custom)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Document {
    pub id: String,
    pub title: String,
    #[serde(rename = "abstract")]
    pub abstract_text: String,
    pub date: DocDate,
    pub source: Source,
}

impl Document {
    /// Title and abstract joined the way every downstream stage sees them.
    pub fn combined_text(&self) -> String {
        match (self.title.is_empty(), self.abstract_text.is_empty()) {
            (false, false) => format!("{}. {}", self.title, self.abstract_text),
            (false, true) => self.title.clone(),
            _ => self.abstract_text.clone(),
        }
    }

    fn validate(&self) -> Result<(), String> {
        if self.id.trim().is_empty() {
            return Err("empty id".into());
        }
        if self.title.trim().is_empty() && self.abstract_text.trim().is_empty() {
            return Err(format!("document `{}` has empty title and abstract", self.id));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CorpusFormat {
    Jsonl,
    Csv,
}

impl FromStr for CorpusFormat {
    type Err = CorpusError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "jsonl" => Ok(CorpusFormat::Jsonl),
            "csv" => Ok(CorpusFormat::Csv),
            other => Err(CorpusError::UnknownFormat(other.to_string())),
        }
    }
}

/// Ordered document collection. Row `i` of every derived matrix refers to `documents[i]`.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Corpus {
    documents: Vec<Document>,
}

impl Corpus {
    /// Builds a corpus, enforcing id uniqueness and per-document validity.
    pub fn new(documents: Vec<Document>) -> Result<Self, CorpusError> {
        let mut seen = HashSet::with_capacity(documents.len());
        for (i, doc) in documents.iter().enumerate() {
            doc.validate().map_err(|message| CorpusError::Invalid {
                line: i + 1,
                message,
            })?;
            if !seen.insert(doc.id.as_str()) {
                return Err(CorpusError::DuplicateId(doc.id.clone()));
            }
        }
        Ok(Corpus { documents })
    }

    pub fn documents(&self) -> &[Document] {
        &self.documents
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, i: usize) -> Option<&Document> {
        self.documents.get(i)
    }

    pub fn iter(&self) -> std::slice::Iter<'_, Document> {
        self.documents.iter()
    }
}

#[derive(Debug, Deserialize)]
struct RawRecord {
    id: Option<String>,
    title: Option<String>,
    #[serde(rename = "abstract")]
    abstract_text: Option<String>,
    date: Option<serde_json::Value>,
    source: Option<String>,
}

impl RawRecord {
    fn into_document(self, line: usize) -> Result<Document, CorpusError> {
        let missing = |field: &str| CorpusError::MissingField {
            line,
            field: field.to_string(),
        };
        let id = self.id.ok_or_else(|| missing("id"))?;
        let title = self.title.ok_or_else(|| missing("title"))?;
        let abstract_text = self.abstract_text.ok_or_else(|| missing("abstract"))?;
        let date = match self.date.ok_or_else(|| missing("date"))? {
            serde_json::Value::String(s) => s,
            serde_json::Value::Number(n) => n.to_string(),
            other => {
                return Err(CorpusError::Invalid {
                    line,
                    message: format!("date must be a string, got {other}"),
                })
            }
        };
        let date = date
            .parse::<DocDate>()
            .map_err(|message| CorpusError::Invalid { line, message })?;
        let source = self
            .source
            .as_deref()
            .unwrap_or("other")
            .parse::<Source>()
            .map_err(|message| CorpusError::Invalid { line, message })?;
        Ok(Document {
            id,
            title,
            abstract_text,
            date,
            source,
        })
    }
}

fn io_err(path: &Path) -> impl FnOnce(std::io::Error) -> CorpusError + '_ {
    move |source| CorpusError::Io {
        path: path.display().to_string(),
        source,
    }
}

pub fn load_corpus(path: &Path, format: CorpusFormat) -> Result<Corpus, CorpusError> {
    let file = File::open(path).map_err(io_err(path))?;
    let documents = match format {
        CorpusFormat::Jsonl => read_jsonl(BufReader::new(file), path)?,
        CorpusFormat::Csv => read_csv(file)?,
    };
    Corpus::new(documents)
}

fn read_jsonl<R: BufRead>(reader: R, path: &Path) -> Result<Vec<Document>, CorpusError> {
    let mut docs = Vec::new();
    for (i, line) in reader.lines().enumerate() {
        let line_no = i + 1;
        let line = line.map_err(io_err(path))?;
        if line.trim().is_empty() {
            continue;
        }
        let raw: RawRecord = serde_json::from_str(&line).map_err(|e| CorpusError::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        docs.push(raw.into_document(line_no)?);
    }
    Ok(docs)
}

fn read_csv<R: std::io::Read>(reader: R) -> Result<Vec<Document>, CorpusError> {
    let mut rdr = csv::ReaderBuilder::new().has_headers(true).from_reader(reader);
    let headers = rdr
        .headers()
        .map_err(|e| CorpusError::Parse {
            line: 1,
            message: e.to_string(),
        })?
        .clone();
    let col = |name: &str| headers.iter().position(|h| h.trim() == name);
    let required = ["id", "title", "abstract", "date"];
    let mut idx = [0usize; 4];
    for (slot, name) in idx.iter_mut().zip(required) {
        *slot = col(name).ok_or_else(|| CorpusError::MissingField {
            line: 1,
            field: name.to_string(),
        })?;
    }
    let source_col = col("source");

    let mut docs = Vec::new();
    for (i, record) in rdr.records().enumerate() {
        let line = i + 2;
        let record = record.map_err(|e| CorpusError::Parse {
            line,
            message: e.to_string(),
        })?;
        let field = |c: usize| record.get(c).map(str::to_string);
        let raw = RawRecord {
            id: field(idx[0]),
            title: field(idx[1]),
            abstract_text: field(idx[2]),
            date: field(idx[3]).map(serde_json::Value::String),
            source: source_col.and_then(field),
        };
        docs.push(raw.into_document(line)?);
    }
    Ok(docs)
}

pub fn save_corpus(corpus: &Corpus, path: &Path, format: CorpusFormat) -> Result<(), CorpusError> {
    let file = File::create(path).map_err(io_err(path))?;
    let mut out = BufWriter::new(file);
    match format {
        CorpusFormat::Jsonl => {
            for doc in corpus.iter() {
                let line = serde_json::to_string(doc).expect("document serializes");
                writeln!(out, "{line}").map_err(io_err(path))?;
            }
        }
        CorpusFormat::Csv => {
            let mut w = csv::Writer::from_writer(&mut out);
            w.write_record(["id", "title", "abstract", "date", "source"])
                .map_err(|e| csv_io(path, e))?;
            for doc in corpus.iter() {
                w.write_record([
                    doc.id.as_str(),
                    doc.title.as_str(),
                    doc.abstract_text.as_str(),
                    &doc.date.to_string(),
                    doc.source.as_str(),
                ])
                .map_err(|e| csv_io(path, e))?;
            }
            w.flush().map_err(io_err(path))?;
        }
    }
    out.flush().map_err(io_err(path))
}

fn csv_io(path: &Path, e: csv::Error) -> CorpusError {
    CorpusError::Io {
        path: path.display().to_string(),
        source: std::io::Error::other(e.to_string()),
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MatchMode {
    Any,
    All,
}

impl FromStr for MatchMode {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "any" => Ok(MatchMode::Any),
            "all" => Ok(MatchMode::All),
            other => Err(format!("unknown match mode `{other}`")),
        }
    }
}

/// Case-insensitive substring query over title and abstract.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct KeywordQuery {
    keywords: Vec<String>,
    mode: MatchMode,
}

impl KeywordQuery {
    pub fn new<I, S>(keywords: I, mode: MatchMode) -> Result<Self, String>
    where
        I: IntoIterator<Item = S>,
        S: AsRef<str>,
    {
        let keywords: Vec<String> = keywords
            .into_iter()
            .map(|k| k.as_ref().trim().to_lowercase())
            .filter(|k| !k.is_empty())
            .collect();
        if keywords.is_empty() {
            return Err("keyword query needs at least one phrase".into());
        }
        Ok(KeywordQuery { keywords, mode })
    }

    /// One phrase per line; blank lines and `#` comments are skipped.
    pub fn from_file(path: &Path, mode: MatchMode) -> Result<Self, String> {
        let text = std::fs::read_to_string(path)
            .map_err(|e| format!("cannot read {}: {e}", path.display()))?;
        let phrases = text
            .lines()
            .map(str::trim)
            .filter(|l| !l.is_empty() && !l.starts_with('#'));
        KeywordQuery::new(phrases, mode)
    }

    pub fn keywords(&self) -> &[String] {
        &self.keywords
    }

    pub fn mode(&self) -> MatchMode {
        self.mode
    }

    pub fn matches(&self, doc: &Document) -> bool {
        let title = doc.title.to_lowercase();
        let abstract_text = doc.abstract_text.to_lowercase();
        let hit = |k: &String| title.contains(k.as_str()) || abstract_text.contains(k.as_str());
        match self.mode {
            MatchMode::Any => self.keywords.iter().any(hit),
            MatchMode::All => self.keywords.iter().all(hit),
        }
    }
}

pub fn filter_by_keywords(corpus: &Corpus, query: &KeywordQuery) -> Corpus {
    Corpus {
        documents: corpus
            .iter()
            .filter(|d| query.matches(d))
            .cloned()
            .collect(),
    }
}

pub fn year_histogram(corpus: &Corpus) -> BTreeMap<u16, usize> {
    let mut hist = BTreeMap::new();
    for doc in corpus.iter() {
        *hist.entry(doc.date.year).or_insert(0) += 1;
    }
    hist
}
