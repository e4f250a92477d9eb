//! Command-line interface.
//!
//! Exit codes: 0 success, 2 usage or validation failure, 3 data mismatch,
//! 4 missing credentials or transport failure.

use std::collections::BTreeMap;
use std::ffi::OsString;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use thiserror::Error;

use crate::analysis::{
    dynamic_report, hierarchical_topic_tree, term_frequencies, topic_scatter_2d,
    topic_similarity_matrix, wordcloud_export, word_scores_report, write_dynamic_csv,
    write_scatter_csv, write_similarity_csv, write_tree_csv, write_word_scores_csv, AnalysisError,
};
use crate::config::{validate_pipeline, ConfigError, RunConfig};
use crate::corpus::{
    filter_by_keywords, load_corpus, save_corpus, year_histogram, Corpus, CorpusError,
    CorpusFormat, KeywordQuery, MatchMode,
};
use crate::embedding::{read_embeddings, EmbeddingError};
use crate::llm_extract::{
    aggregate_model_frequencies, extract_models, write_results_csv, ChatPromptTemplate, Clock,
    FakeClock, LiveTransport, LlmError, ReplayTransport, SystemClock, Transport,
};
use crate::metrics::{
    evaluate, read_topics_file, window_stats, MetricReport, MetricsError, TopicWordLists,
    DEFAULT_RBO_P, DEFAULT_TOP_N, DEFAULT_WINDOW,
};
use crate::preprocess::Preprocessor;
use crate::topics::{fit_topic_model, TopicError, TopicModel};

pub const DEFAULT_ENDPOINT: &str = "https://api.openai.com/v1/chat/completions";

pub const EXIT_USAGE: u8 = 2;
pub const EXIT_MISMATCH: u8 = 3;
pub const EXIT_TRANSPORT: u8 = 4;

#[derive(Debug, Error)]
#[error("{message}")]
pub struct CliError {
    pub code: u8,
    pub message: String,
}

impl CliError {
    fn usage(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_USAGE,
            message: message.into(),
        }
    }

    fn mismatch(message: impl Into<String>) -> Self {
        CliError {
            code: EXIT_MISMATCH,
            message: message.into(),
        }
    }

    fn io(path: &Path, e: impl std::fmt::Display) -> Self {
        CliError::usage(format!("{}: {e}", path.display()))
    }
}

impl From<CorpusError> for CliError {
    fn from(e: CorpusError) -> Self {
        CliError::usage(e.to_string())
    }
}

impl From<EmbeddingError> for CliError {
    fn from(e: EmbeddingError) -> Self {
        CliError::usage(e.to_string())
    }
}

impl From<ConfigError> for CliError {
    fn from(e: ConfigError) -> Self {
        CliError::usage(e.to_string())
    }
}

impl From<MetricsError> for CliError {
    fn from(e: MetricsError) -> Self {
        CliError::usage(e.to_string())
    }
}

impl From<TopicError> for CliError {
    fn from(e: TopicError) -> Self {
        match e {
            TopicError::SizeMismatch { .. } | TopicError::CorpusMismatch(_) => {
                CliError::mismatch(e.to_string())
            }
            _ => CliError::usage(e.to_string()),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        match e {
            AnalysisError::SizeMismatch { .. } => CliError::mismatch(e.to_string()),
            _ => CliError::usage(e.to_string()),
        }
    }
}

impl From<LlmError> for CliError {
    fn from(e: LlmError) -> Self {
        let code = match e {
            LlmError::MissingCredentials => EXIT_TRANSPORT,
            LlmError::UnknownDocument(_) => EXIT_MISMATCH,
            _ => EXIT_USAGE,
        };
        CliError {
            code,
            message: e.to_string(),
        }
    }
}

#[derive(Debug, Parser)]
#[command(name = "topicforge", version, about = "Topic discovery for research-abstract corpora")]
pub struct Cli {
    /// TOML config file; flags take precedence over its values.
    #[arg(long, global = true)]
    pub config: Option<PathBuf>,
    /// Increase log verbosity (-v info, -vv debug).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    pub verbose: u8,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Load, optionally keyword-filter, and save a canonical corpus.
    Ingest(IngestArgs),
    /// Fit a topic model from a corpus and its document embeddings.
    Fit(FitArgs),
    /// Score topic word lists: TD, Inv. RBO, NPMI, Cv.
    Evaluate(EvaluateArgs),
    /// Write CSV exports for a fitted model.
    Analyze(AnalyzeArgs),
    /// Extract ML model mentions with a chat-completions endpoint.
    ExtractModels(ExtractArgs),
}

fn parse_format(s: &str) -> Result<CorpusFormat, String> {
    s.parse().map_err(|e: CorpusError| e.to_string())
}

fn parse_mode(s: &str) -> Result<MatchMode, String> {
    s.parse()
}

fn format_for(path: &Path, explicit: Option<CorpusFormat>) -> CorpusFormat {
    explicit.unwrap_or_else(|| {
        match path.extension().and_then(|e| e.to_str()) {
            Some(e) if e.eq_ignore_ascii_case("csv") => CorpusFormat::Csv,
            _ => CorpusFormat::Jsonl,
        }
    })
}

#[derive(Debug, Args)]
pub struct IngestArgs {
    #[arg(long)]
    pub input: PathBuf,
    /// jsonl or csv
    #[arg(long, value_parser = parse_format)]
    pub format: CorpusFormat,
    /// Keyword file, one keyword per line.
    #[arg(long)]
    pub keywords: Option<PathBuf>,
    /// any or all
    #[arg(long, value_parser = parse_mode, default_value = "any")]
    pub mode: MatchMode,
    #[arg(long)]
    pub out: PathBuf,
    /// Output format; inferred from the extension when omitted.
    #[arg(long, value_parser = parse_format)]
    pub out_format: Option<CorpusFormat>,
}

#[derive(Debug, Args)]
pub struct FitArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_parser = parse_format)]
    pub corpus_format: Option<CorpusFormat>,
    #[arg(long)]
    pub embeddings: PathBuf,
    #[arg(long)]
    pub min_topic_size: Option<usize>,
    #[arg(long)]
    pub min_cluster_size: Option<usize>,
    #[arg(long)]
    pub min_samples: Option<usize>,
    #[arg(long)]
    pub n_neighbors: Option<usize>,
    #[arg(long)]
    pub seed: Option<u64>,
    #[arg(long)]
    pub out: PathBuf,
}

#[derive(Debug, Args)]
pub struct EvaluateArgs {
    #[arg(long)]
    pub model: Option<PathBuf>,
    /// Topic file: one topic per line, words separated by spaces. Repeatable.
    #[arg(long)]
    pub topics_file: Vec<PathBuf>,
    /// Reference corpus for NPMI and Cv.
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_parser = parse_format)]
    pub corpus_format: Option<CorpusFormat>,
    #[arg(long)]
    pub top_n: Option<usize>,
    #[arg(long)]
    pub rbo_p: Option<f64>,
    #[arg(long)]
    pub window: Option<usize>,
    /// Report TD and Inv. RBO only.
    #[arg(long)]
    pub no_coherence: bool,
}

#[derive(Debug, Args)]
pub struct AnalyzeArgs {
    #[arg(long)]
    pub model: PathBuf,
    #[arg(long)]
    pub out_dir: PathBuf,
    /// similarity.csv: topic-by-topic cosine similarity.
    #[arg(long)]
    pub similarity: bool,
    /// tree.csv: average-linkage merge list of the largest topics.
    #[arg(long)]
    pub tree: bool,
    #[arg(long, default_value_t = 50)]
    pub top: usize,
    /// scatter.csv: 2D topic map (needs --embeddings).
    #[arg(long)]
    pub scatter: bool,
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// word_scores.csv: normalized word scores of the largest topics.
    #[arg(long)]
    pub word_scores: bool,
    #[arg(long, default_value_t = 8)]
    pub topics: usize,
    #[arg(long, default_value_t = 5)]
    pub words: usize,
    /// dynamic.csv: per-year topic words (needs --corpus).
    #[arg(long)]
    pub dynamic: bool,
    /// Slice dynamic topics by publication year (the only slicing offered).
    #[arg(long)]
    pub by_year: bool,
    /// wordcloud_<year>.csv: per-year term frequencies (needs --corpus).
    #[arg(long)]
    pub wordclouds: bool,
    #[arg(long)]
    pub corpus: Option<PathBuf>,
    #[arg(long, value_parser = parse_format)]
    pub corpus_format: Option<CorpusFormat>,
}

#[derive(Debug, Args)]
#[command(group(clap::ArgGroup::new("transport").required(true).args(["replay", "live"])))]
pub struct ExtractArgs {
    #[arg(long)]
    pub corpus: PathBuf,
    #[arg(long, value_parser = parse_format)]
    pub corpus_format: Option<CorpusFormat>,
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Answer requests from a replay fixture (no network, no sleeping).
    #[arg(long)]
    pub replay: Option<PathBuf>,
    /// Call the endpoint; reads the key from TOPICFORGE_API_KEY.
    #[arg(long)]
    pub live: bool,
    /// Per-document results CSV.
    #[arg(long)]
    pub out: PathBuf,
    /// Directory for per-year model frequency files; defaults to the directory of --out.
    #[arg(long)]
    pub freq_dir: Option<PathBuf>,
    #[arg(long)]
    pub llm_model: Option<String>,
    #[arg(long)]
    pub max_requests_per_minute: Option<u32>,
    #[arg(long)]
    pub concurrency: Option<usize>,
}

/// Parses `args` (program name first) and runs the command, writing reports to `out`.
pub fn run<I, T>(args: I, out: &mut dyn Write) -> Result<(), CliError>
where
    I: IntoIterator<Item = T>,
    T: Into<OsString> + Clone,
{
    let cli = match Cli::try_parse_from(args) {
        Ok(cli) => cli,
        Err(e) if !e.use_stderr() => {
            write!(out, "{e}").map_err(|e| CliError::usage(e.to_string()))?;
            return Ok(());
        }
        Err(e) => return Err(CliError::usage(e.render().to_string())),
    };
    let level = match cli.verbose {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        _ => log::LevelFilter::Debug,
    };
    let _ = env_logger::Builder::new().filter_level(level).try_init();
    let config = match &cli.config {
        Some(p) => RunConfig::load(p)?,
        None => RunConfig::default(),
    };
    match cli.command {
        Command::Ingest(a) => ingest(a, out),
        Command::Fit(a) => fit(a, &config, out),
        Command::Evaluate(a) => evaluate_cmd(a, &config, out),
        Command::Analyze(a) => analyze(a, out),
        Command::ExtractModels(a) => extract(a, &config, out),
    }
}

/// Process entry point: runs with the real arguments and maps errors to exit codes.
pub fn main_exit() -> ExitCode {
    let stdout = std::io::stdout();
    let mut lock = stdout.lock();
    match run(std::env::args_os(), &mut lock) {
        Ok(()) => ExitCode::SUCCESS,
        Err(e) => {
            let msg = e.message.trim_end();
            if msg.starts_with("error:") {
                eprintln!("{msg}");
            } else {
                eprintln!("error: {msg}");
            }
            ExitCode::from(e.code)
        }
    }
}

fn emit(out: &mut dyn Write, text: std::fmt::Arguments) -> Result<(), CliError> {
    out.write_fmt(text)
        .map_err(|e| CliError::usage(format!("cannot write output: {e}")))
}

fn ingest(a: IngestArgs, out: &mut dyn Write) -> Result<(), CliError> {
    let mut corpus = load_corpus(&a.input, a.format)?;
    if let Some(k) = &a.keywords {
        let q = KeywordQuery::from_file(k, a.mode).map_err(CliError::usage)?;
        corpus = filter_by_keywords(&corpus, &q);
    }
    save_corpus(&corpus, &a.out, format_for(&a.out, a.out_format))?;
    emit(out, format_args!("documents\t{}\n", corpus.len()))?;
    emit(out, format_args!("year\tcount\n"))?;
    for (y, c) in year_histogram(&corpus) {
        emit(out, format_args!("{y}\t{c}\n"))?;
    }
    Ok(())
}

fn fit(a: FitArgs, config: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = config.pipeline()?;
    if let Some(v) = a.min_topic_size {
        cfg.min_topic_size = v;
    }
    if let Some(v) = a.min_cluster_size {
        cfg.hdbscan.min_cluster_size = v;
    }
    if let Some(v) = a.min_samples {
        cfg.hdbscan.min_samples = Some(v);
    }
    if let Some(v) = a.n_neighbors {
        cfg.n_neighbors = v;
    }
    if let Some(v) = a.seed {
        cfg.umap.seed = v;
    }
    validate_pipeline(&cfg)?;
    let corpus = load_corpus(&a.corpus, format_for(&a.corpus, a.corpus_format))?;
    let embeddings = read_embeddings(&a.embeddings)?;
    let model = fit_topic_model(&corpus, &embeddings, &cfg)?;
    model.save(&a.out)?;
    let noise = model.labels.iter().filter(|&&l| l < 0).count();
    emit(out, format_args!("topics\t{}\nnoise\t{noise}\n", model.n_topics()))?;
    emit(out, format_args!("topic\tsize\twords\n"))?;
    for c in 0..model.n_topics() {
        let words: Vec<&str> = model.top_words[c].iter().take(5).map(|w| w.0.as_str()).collect();
        emit(out, format_args!("{c}\t{}\t{}\n", model.sizes[c], words.join(" ")))?;
    }
    Ok(())
}

fn model_topic_lists(model: &TopicModel, top_n: usize) -> Result<TopicWordLists, CliError> {
    let lists: Vec<Vec<String>> = (0..model.n_topics())
        .map(|c| Ok(model.top_words(c as i64, top_n)?.into_iter().map(|w| w.0).collect()))
        .collect::<Result<_, TopicError>>()?;
    Ok(TopicWordLists::truncated(lists, top_n)?)
}

fn corpus_words(corpus: &Corpus, pre: &Preprocessor) -> Vec<Vec<String>> {
    corpus.iter().map(|d| pre.words(&d.combined_text())).collect()
}

fn fmt_metric(v: Option<f64>) -> String {
    v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.4}"))
}

fn evaluate_cmd(a: EvaluateArgs, config: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    if a.model.is_none() && a.topics_file.is_empty() {
        return Err(CliError::usage("give --model or at least one --topics-file"));
    }
    let top_n = a.top_n.or(config.metrics.top_n).unwrap_or(DEFAULT_TOP_N);
    let p = a.rbo_p.or(config.metrics.rbo_p).unwrap_or(DEFAULT_RBO_P);
    let window = a.window.or(config.metrics.window).unwrap_or(DEFAULT_WINDOW);
    if top_n < 2 {
        return Err(CliError::usage("--top-n must be at least 2"));
    }
    if !(p > 0.0 && p < 1.0) {
        return Err(CliError::usage("--rbo-p must lie in (0, 1)"));
    }
    if window == 0 {
        return Err(CliError::usage("--window must be at least 1"));
    }
    let coherence = !a.no_coherence;
    if coherence && a.corpus.is_none() {
        return Err(CliError::usage(
            "coherence needs a reference corpus: pass --corpus or --no-coherence",
        ));
    }
    let corpus = match &a.corpus {
        Some(path) => Some(load_corpus(path, format_for(path, a.corpus_format))?),
        None => None,
    };

    // (row name, topics, preprocessor for the reference windows)
    let mut rows: Vec<(String, TopicWordLists, Preprocessor)> = Vec::new();
    if let Some(path) = &a.model {
        let model = TopicModel::load(path)?;
        if let Some(c) = &corpus {
            model.tokenize_corpus(c)?;
        }
        rows.push((
            display_name(path),
            model_topic_lists(&model, top_n)?,
            model.preprocess.preprocessor(),
        ));
    }
    let file_pre = config.preprocess_settings()?.preprocessor();
    for path in &a.topics_file {
        rows.push((display_name(path), read_topics_file(path, top_n)?, file_pre.clone()));
    }

    let mut reports: Vec<(String, MetricReport)> = Vec::new();
    for (name, topics, pre) in &rows {
        let stats = match (&corpus, coherence) {
            (Some(c), true) => {
                let targets = topics.vocabulary();
                Some(window_stats(&corpus_words(c, pre), window, Some(&targets))?)
            }
            _ => None,
        };
        reports.push((name.clone(), evaluate(topics, stats.as_ref(), p)?));
    }
    write_metric_table(&reports, out)
}

fn display_name(path: &Path) -> String {
    path.file_name()
        .map(|n| n.to_string_lossy().into_owned())
        .unwrap_or_else(|| path.display().to_string())
}

/// Fixed column order: TD, Inv. RBO, NPMI, Cv.
pub fn write_metric_table(rows: &[(String, MetricReport)], out: &mut dyn Write) -> Result<(), CliError> {
    let width = rows.iter().map(|r| r.0.len()).max().unwrap_or(0).max(6);
    emit(
        out,
        format_args!(
            "{:<width$}  {:>6}  {:>3}  {:>8}  {:>8}  {:>8}  {:>8}\n",
            "source", "topics", "k", "TD", "Inv. RBO", "NPMI", "Cv"
        ),
    )?;
    for (name, r) in rows {
        emit(
            out,
            format_args!(
                "{:<width$}  {:>6}  {:>3}  {:>8}  {:>8}  {:>8}  {:>8}\n",
                name,
                r.n_topics,
                r.k,
                fmt_metric(Some(r.td)),
                fmt_metric(r.inverted_rbo),
                fmt_metric(r.npmi),
                fmt_metric(r.cv)
            ),
        )?;
    }
    Ok(())
}

fn need_corpus(a: &AnalyzeArgs, flag: &str) -> Result<Corpus, CliError> {
    let path = a
        .corpus
        .as_ref()
        .ok_or_else(|| CliError::usage(format!("{flag} needs --corpus")))?;
    Ok(load_corpus(path, format_for(path, a.corpus_format))?)
}

fn analyze(a: AnalyzeArgs, out: &mut dyn Write) -> Result<(), CliError> {
    if !(a.similarity || a.tree || a.scatter || a.word_scores || a.dynamic || a.wordclouds) {
        return Err(CliError::usage(
            "choose at least one of --similarity, --tree, --scatter, --word-scores, --dynamic, --wordclouds",
        ));
    }
    if a.by_year && !a.dynamic {
        return Err(CliError::usage("--by-year only applies to --dynamic"));
    }
    let model = TopicModel::load(&a.model)?;
    std::fs::create_dir_all(&a.out_dir).map_err(|e| CliError::io(&a.out_dir, e))?;
    let path = |name: &str| a.out_dir.join(name);
    let mut written: Vec<PathBuf> = Vec::new();

    if a.similarity {
        let p = path("similarity.csv");
        write_similarity_csv(&topic_similarity_matrix(&model)?, &p)?;
        written.push(p);
    }
    if a.tree {
        let top = a.top.min(model.n_topics());
        if top < a.top {
            log::warn!("model has {} topics; tree uses all of them", model.n_topics());
        }
        let p = path("tree.csv");
        write_tree_csv(&hierarchical_topic_tree(&model, top)?, &p)?;
        written.push(p);
    }
    if a.scatter {
        let emb_path = a
            .embeddings
            .as_ref()
            .ok_or_else(|| CliError::usage("--scatter needs --embeddings"))?;
        let emb = read_embeddings(emb_path)?;
        let seed = model.fit.as_ref().map_or(42, |f| f.seed);
        let p = path("scatter.csv");
        write_scatter_csv(&topic_scatter_2d(&model, &emb, seed)?, &p)?;
        written.push(p);
    }
    if a.word_scores {
        let p = path("word_scores.csv");
        write_word_scores_csv(&word_scores_report(&model, a.topics, a.words), &p)?;
        written.push(p);
    }
    if a.dynamic {
        let corpus = need_corpus(&a, "--dynamic")?;
        let dtm = model.dynamic_by_year(&corpus)?;
        let p = path("dynamic.csv");
        let mut buf: Vec<u8> = b"topic,slice,rank,word,weight\n".to_vec();
        for c in 0..model.n_topics() {
            let report = dynamic_report(&dtm, &model.vocabulary, c as i64, 10)?;
            write_dynamic_csv(c, &report, &mut buf).map_err(|e| CliError::io(&p, e))?;
        }
        std::fs::write(&p, buf).map_err(|e| CliError::io(&p, e))?;
        written.push(p);
    }
    if a.wordclouds {
        let corpus = need_corpus(&a, "--wordclouds")?;
        let tokens = model.tokenize_corpus(&corpus)?;
        let mut by_year: BTreeMap<u16, Vec<&Vec<String>>> = BTreeMap::new();
        for (d, t) in corpus.iter().zip(&tokens) {
            by_year.entry(d.date.year).or_default().push(t);
        }
        for (year, docs) in by_year {
            let freqs = term_frequencies(docs);
            if freqs.is_empty() {
                continue;
            }
            let p = path(&format!("wordcloud_{year}.csv"));
            wordcloud_export(&freqs, &p)?;
            written.push(p);
        }
    }
    for p in written {
        emit(out, format_args!("wrote {}\n", p.display()))?;
    }
    Ok(())
}

fn extract(a: ExtractArgs, config: &RunConfig, out: &mut dyn Write) -> Result<(), CliError> {
    let mut cfg = config.endpoint()?;
    if let Some(m) = &a.llm_model {
        cfg.model = m.clone();
    }
    if let Some(r) = a.max_requests_per_minute {
        cfg.max_requests_per_minute = Some(r);
    }
    if let Some(c) = a.concurrency {
        cfg.concurrency = c;
    }
    cfg.validate()?;
    let endpoint = a
        .endpoint
        .clone()
        .or_else(|| config.llm.endpoint.clone())
        .unwrap_or_else(|| DEFAULT_ENDPOINT.to_string());
    let (transport, clock): (Box<dyn Transport>, Box<dyn Clock>) = match &a.replay {
        Some(fixture) => (
            Box::new(ReplayTransport::from_path(fixture)?),
            Box::new(FakeClock::default()),
        ),
        None => (
            Box::new(LiveTransport::from_env(endpoint)?),
            Box::new(SystemClock::default()),
        ),
    };
    let corpus = load_corpus(&a.corpus, format_for(&a.corpus, a.corpus_format))?;
    let results = extract_models(
        &corpus,
        &ChatPromptTemplate::default(),
        &cfg,
        transport.as_ref(),
        clock.as_ref(),
    )?;

    let mut buf = Vec::new();
    write_results_csv(&results, &mut buf).map_err(|e| CliError::io(&a.out, e))?;
    std::fs::write(&a.out, buf).map_err(|e| CliError::io(&a.out, e))?;

    let freq_dir = a.freq_dir.clone().unwrap_or_else(|| {
        a.out
            .parent()
            .map(Path::to_path_buf)
            .unwrap_or_else(|| PathBuf::from("."))
    });
    std::fs::create_dir_all(&freq_dir).map_err(|e| CliError::io(&freq_dir, e))?;
    let agg = aggregate_model_frequencies(&results, &corpus)?;
    for (year, freqs) in &agg {
        let p = freq_dir.join(format!("models_{year}.csv"));
        wordcloud_export(freqs, &p)?;
    }

    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for r in &results {
        *counts.entry(r.status.as_str()).or_insert(0) += 1;
    }
    emit(out, format_args!("documents\t{}\n", results.len()))?;
    for (status, n) in counts {
        emit(out, format_args!("{status}\t{n}\n"))?;
    }
    emit(out, format_args!("years\t{}\n", agg.len()))?;
    if results.iter().all(|r| r.status == crate::llm_extract::ExtractionStatus::TransportError)
        && !results.is_empty()
    {
        return Err(CliError {
            code: EXIT_TRANSPORT,
            message: "every request failed at the transport level".into(),
        });
    }
    Ok(())
}
