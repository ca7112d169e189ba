//! End-to-end update run: configuration, stage orchestration, run reports
//! and rendering of the published tables.
//!
//! An update runs four stages in order: corpus, preclinical, trials,
//! topics. Each stage failure is recorded in the run report and the
//! remaining stages still run. The output tree is re-rendered at the end.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::fs;
use std::path::{Path, PathBuf};

use chrono::{DateTime, Datelike, NaiveDate, Utc};
use serde::{Deserialize, Serialize};

use crate::corpus::{self, CorpusStore, Document, RawRecord, Source};
use crate::dictionary::{self, DrugDictionary};
use crate::error::{Error, Result};
use crate::io::{self, Table};
use crate::preclinical::{self, AssayFinding, AssayKeyword, Extractor};
use crate::preprocess::{
    self, build_vocab_and_bows, fit_phrases, tokenize, Lemmatizer, PhraseModel, TextPreprocessor, VocabConfig,
};
use crate::topics::{self, DocTopicAssignment, LdaConfig, LdaModel};
use crate::trials::{self, Category, TermRule, TrialClassification, TrialClassifier, TrialStore};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Paths {
    pub corpus_store: PathBuf,
    pub trial_store: PathBuf,
    /// Directory of JSONL corpus exports read on every update.
    pub corpus_inbox: PathBuf,
    /// Directory of CSV or JSONL trial exports read on every update.
    pub trials_inbox: PathBuf,
    /// Compiled dictionary TSV.
    pub dictionary: PathBuf,
    /// Source lists compiled by `dict-build`.
    pub dictionary_sources: Vec<PathBuf>,
    pub dictionary_blacklist: Option<PathBuf>,
    pub stopwords: Option<PathBuf>,
    pub lemma_exceptions: Option<PathBuf>,
    pub non_drug_words: Option<PathBuf>,
    pub vaccine_terms: Option<PathBuf>,
    pub vaccine_expansions: Option<PathBuf>,
    pub vaccine_blacklist: Option<PathBuf>,
    pub biologic_terms: Option<PathBuf>,
    pub biologic_expansions: Option<PathBuf>,
    pub biologic_blacklist: Option<PathBuf>,
    pub topic_labels: Option<PathBuf>,
    pub models: PathBuf,
    pub output: PathBuf,
}

impl Default for Paths {
    fn default() -> Self {
        Paths {
            corpus_store: "store/corpus".into(),
            trial_store: "store/trials".into(),
            corpus_inbox: "inbox/corpus".into(),
            trials_inbox: "inbox/trials".into(),
            dictionary: "dictionary/compiled.tsv".into(),
            dictionary_sources: Vec::new(),
            dictionary_blacklist: None,
            stopwords: None,
            lemma_exceptions: None,
            non_drug_words: None,
            vaccine_terms: None,
            vaccine_expansions: None,
            vaccine_blacklist: None,
            biologic_terms: None,
            biologic_expansions: None,
            biologic_blacklist: None,
            topic_labels: None,
            models: "models".into(),
            output: "output".into(),
        }
    }
}

impl Paths {
    fn resolve(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        for p in [
            &mut self.corpus_store,
            &mut self.trial_store,
            &mut self.corpus_inbox,
            &mut self.trials_inbox,
            &mut self.dictionary,
            &mut self.models,
            &mut self.output,
        ] {
            join(p);
        }
        self.dictionary_sources.iter_mut().for_each(join);
        self.optional_files_mut().into_iter().flatten().for_each(join);
    }

    fn optional_files_mut(&mut self) -> [&mut Option<PathBuf>; 11] {
        [
            &mut self.dictionary_blacklist,
            &mut self.stopwords,
            &mut self.lemma_exceptions,
            &mut self.non_drug_words,
            &mut self.vaccine_terms,
            &mut self.vaccine_expansions,
            &mut self.vaccine_blacklist,
            &mut self.biologic_terms,
            &mut self.biologic_expansions,
            &mut self.biologic_blacklist,
            &mut self.topic_labels,
        ]
    }

    /// Input files that must exist when configured.
    fn configured_inputs(&self) -> Vec<&Path> {
        let optional = [
            &self.dictionary_blacklist,
            &self.stopwords,
            &self.lemma_exceptions,
            &self.non_drug_words,
            &self.vaccine_terms,
            &self.vaccine_expansions,
            &self.vaccine_blacklist,
            &self.biologic_terms,
            &self.biologic_expansions,
            &self.biologic_blacklist,
            &self.topic_labels,
        ];
        optional
            .into_iter()
            .flatten()
            .map(PathBuf::as_path)
            .chain(self.dictionary_sources.iter().map(PathBuf::as_path))
            .collect()
    }

    pub fn findings_file(&self) -> PathBuf {
        self.corpus_store.join("findings.jsonl")
    }

    pub fn classifications_file(&self) -> PathBuf {
        self.trial_store.join("classifications.jsonl")
    }

    pub fn model_file(&self) -> PathBuf {
        self.models.join("lda.json")
    }

    pub fn phrases_file(&self) -> PathBuf {
        self.models.join("phrases.json")
    }

    pub fn topic_state_file(&self) -> PathBuf {
        self.models.join("topic_state.json")
    }

    pub fn assignments_file(&self) -> PathBuf {
        self.models.join("assignments.jsonl")
    }

    pub fn tables_dir(&self) -> PathBuf {
        self.output.join("tables")
    }

    pub fn reports_dir(&self) -> PathBuf {
        self.output.join("reports")
    }

    pub fn lock_file(&self) -> PathBuf {
        self.output.join("update.lock")
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TopicSchedule {
    /// Infer new documents only; retrain on request.
    DailyInfer,
    /// Also retrain at the first update of each calendar month.
    MonthlyRetrain,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExtractionConfig {
    pub keywords: Vec<AssayKeyword>,
}

impl Default for ExtractionConfig {
    fn default() -> Self {
        ExtractionConfig {
            keywords: AssayKeyword::ALL.to_vec(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TopicsConfig {
    pub schedule: TopicSchedule,
    pub k_grid: Vec<usize>,
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub inference_iterations: usize,
    pub seed: u64,
    pub top_n: usize,
    pub top_papers: usize,
    pub phrase_min_count: u64,
    pub phrase_threshold: f64,
    pub min_df: usize,
    pub max_df: f64,
}

impl Default for TopicsConfig {
    fn default() -> Self {
        let lda = LdaConfig::default();
        TopicsConfig {
            schedule: TopicSchedule::MonthlyRetrain,
            k_grid: topics::DEFAULT_K_GRID.to_vec(),
            alpha: lda.alpha,
            beta: lda.beta,
            iterations: lda.iterations,
            inference_iterations: lda.inference_iterations,
            seed: lda.seed,
            top_n: lda.top_n,
            top_papers: topics::TOP_PAPERS,
            phrase_min_count: 5,
            phrase_threshold: 10.0,
            min_df: VocabConfig::default().min_df,
            max_df: VocabConfig::default().max_df,
        }
    }
}

impl TopicsConfig {
    pub fn lda(&self) -> LdaConfig {
        LdaConfig {
            alpha: self.alpha,
            beta: self.beta,
            iterations: self.iterations,
            inference_iterations: self.inference_iterations,
            seed: self.seed,
            top_n: self.top_n,
            ..LdaConfig::default()
        }
    }

    pub fn vocab(&self) -> VocabConfig {
        VocabConfig {
            min_df: self.min_df,
            max_df: self.max_df,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvalConfig {
    pub sample_size: usize,
    pub seed: u64,
}

impl Default for EvalConfig {
    fn default() -> Self {
        EvalConfig {
            sample_size: 25,
            seed: topics::DEFAULT_SEED,
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PipelineConfig {
    pub paths: Paths,
    pub extraction: ExtractionConfig,
    pub topics: TopicsConfig,
    pub eval: EvalConfig,
}

impl PipelineConfig {
    /// Parses a TOML config; relative paths are resolved against `base`.
    pub fn from_toml(text: &str, base: &Path) -> Result<Self> {
        let mut config: PipelineConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        config.paths.resolve(base);
        Ok(config)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = io::read_to_string(path)?;
        let base = path.parent().unwrap_or(Path::new("."));
        PipelineConfig::from_toml(&text, base)
    }

    /// Defaults with paths under `base`.
    pub fn with_base(base: &Path) -> Self {
        let mut config = PipelineConfig::default();
        config.paths.resolve(base);
        config
    }

    pub fn validate(&self) -> Result<()> {
        for p in self.paths.configured_inputs() {
            if !p.is_file() {
                return Err(Error::Config(format!("configured file {} does not exist", p.display())));
            }
        }
        let t = &self.topics;
        if t.k_grid.is_empty() {
            return Err(Error::EmptyGrid);
        }
        if let Some(&k) = t.k_grid.iter().find(|&&k| k < 2) {
            return Err(Error::TooFewTopics(k));
        }
        if t.top_n < 2 {
            return Err(Error::TopN(t.top_n));
        }
        if t.beta.is_nan() || t.beta <= 0.0 || t.alpha.is_some_and(|a| a.is_nan() || a <= 0.0) {
            return Err(Error::Config("alpha and beta must be positive".into()));
        }
        if t.iterations == 0 || t.inference_iterations == 0 {
            return Err(Error::Config("iteration counts must be positive".into()));
        }
        if !(t.max_df > 0.0 && t.max_df <= 1.0) {
            return Err(Error::Config(format!("max_df must be in (0, 1], got {}", t.max_df)));
        }
        if self.extraction.keywords.is_empty() {
            return Err(Error::Config("no assay keywords configured".into()));
        }
        Ok(())
    }
}

/// Held for the duration of an update; removes the lock file on drop.
#[derive(Debug)]
pub struct UpdateLock {
    path: PathBuf,
}

impl UpdateLock {
    pub fn acquire(path: &Path) -> Result<Self> {
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
        }
        match fs::OpenOptions::new().write(true).create_new(true).open(path) {
            Ok(_) => Ok(UpdateLock {
                path: path.to_path_buf(),
            }),
            Err(e) if e.kind() == std::io::ErrorKind::AlreadyExists => Err(Error::Locked(path.to_path_buf())),
            Err(e) => Err(Error::io(path, e)),
        }
    }
}

impl Drop for UpdateLock {
    fn drop(&mut self) {
        let _ = fs::remove_file(&self.path);
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicState {
    pub last_retrain: NaiveDate,
    pub k: usize,
    pub curve: Vec<(usize, f64)>,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RunReport {
    pub run_at: Option<DateTime<Utc>>,
    pub docs_added: usize,
    pub docs_skipped_duplicate: usize,
    pub records_skipped: usize,
    pub trials_added: usize,
    pub findings_added: usize,
    /// Documents whose findings were extracted in this run.
    pub docs_extracted: usize,
    pub docs_inferred: usize,
    pub topics_refreshed: bool,
    pub errors: Vec<String>,
}

impl RunReport {
    pub fn is_success(&self) -> bool {
        self.errors.is_empty()
    }

    pub fn table(&self) -> Table {
        let mut t = Table::new(["field", "value"]);
        let rows = [
            ("docs_added", self.docs_added.to_string()),
            ("docs_skipped_duplicate", self.docs_skipped_duplicate.to_string()),
            ("records_skipped", self.records_skipped.to_string()),
            ("trials_added", self.trials_added.to_string()),
            ("findings_added", self.findings_added.to_string()),
            ("docs_extracted", self.docs_extracted.to_string()),
            ("docs_inferred", self.docs_inferred.to_string()),
            ("topics_refreshed", self.topics_refreshed.to_string()),
            ("errors", self.errors.len().to_string()),
        ];
        for (k, v) in rows {
            t.push(vec![k.into(), v]);
        }
        t
    }
}

#[derive(Debug, Clone, Copy)]
pub struct UpdateOptions {
    pub now: DateTime<Utc>,
    pub force_retrain: bool,
}

impl UpdateOptions {
    pub fn now() -> Self {
        UpdateOptions {
            now: Utc::now(),
            force_retrain: false,
        }
    }
}

/// Files in `dir` with one of the given extensions, sorted by name. A
/// missing directory has no files.
pub fn inbox_files(dir: &Path, extensions: &[&str]) -> Result<Vec<PathBuf>> {
    if !dir.exists() {
        return Ok(Vec::new());
    }
    let mut files = Vec::new();
    for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
        let path = entry.map_err(|e| Error::io(dir, e))?.path();
        let ext = path.extension().and_then(|e| e.to_str()).unwrap_or("");
        if path.is_file() && extensions.iter().any(|x| ext.eq_ignore_ascii_case(x)) {
            files.push(path);
        }
    }
    files.sort();
    Ok(files)
}

/// Source implied by a file name such as `pubmed-2021-01.jsonl`.
pub fn source_from_file_name(path: &Path) -> Source {
    path.file_stem()
        .and_then(|s| s.to_str())
        .and_then(|s| s.split(['-', '_', '.']).next())
        .and_then(|s| s.parse().ok())
        .unwrap_or(Source::Other)
}

/// Normalizes the records of JSONL files into documents. Records without
/// a source take `default_source`, or else the one implied by the file name.
pub fn read_corpus_files(
    files: &[PathBuf],
    default_source: Option<Source>,
    today: NaiveDate,
) -> Result<corpus::Ingested> {
    let mut out = corpus::Ingested::default();
    for file in files {
        let records: Vec<RawRecord> = io::read_jsonl(file)?;
        let source = default_source.unwrap_or_else(|| source_from_file_name(file));
        let ingested = corpus::ingest_records(&records, source, today);
        for s in &ingested.skipped {
            log::warn!("{}: record {} skipped: {}", file.display(), s.index, s.reason);
        }
        out.documents.extend(ingested.documents);
        out.skipped.extend(ingested.skipped);
    }
    Ok(out)
}

/// Tokens used for topic modeling: title followed by abstract.
pub fn topic_tokens(doc: &Document) -> Vec<String> {
    let mut tokens = tokenize(&doc.title_norm());
    tokens.extend(tokenize(&doc.abstract_norm));
    tokens
}

/// Configured inputs and stores of one pipeline instance.
#[derive(Debug, Clone)]
pub struct Workspace {
    pub config: PipelineConfig,
}

/// Everything the renderer reads.
#[derive(Debug, Clone, Default)]
pub struct State {
    pub corpus: CorpusStore,
    pub findings: Vec<AssayFinding>,
    pub trials: TrialStore,
    pub classifications: Vec<TrialClassification>,
    pub model: Option<LdaModel>,
    pub topic_state: Option<TopicState>,
    pub assignments: Vec<DocTopicAssignment>,
    pub labels: BTreeMap<usize, String>,
    pub stopwords: HashSet<String>,
}

fn read_json_opt<T: serde::de::DeserializeOwned>(path: &Path) -> Result<Option<T>> {
    if !path.exists() {
        return Ok(None);
    }
    let text = io::read_to_string(path)?;
    serde_json::from_str(&text).map(Some).map_err(|source| Error::Json {
        path: path.to_path_buf(),
        line: source.line(),
        source,
    })
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut bytes = serde_json::to_vec_pretty(value).expect("serializable value");
    bytes.push(b'\n');
    io::write_atomic(path, &bytes)
}

impl Workspace {
    pub fn new(config: PipelineConfig) -> Result<Self> {
        config.validate()?;
        Ok(Workspace { config })
    }

    pub fn paths(&self) -> &Paths {
        &self.config.paths
    }

    /// The compiled dictionary if present, else one compiled from the
    /// configured sources, else an empty dictionary.
    pub fn dictionary(&self) -> Result<DrugDictionary> {
        let p = self.paths();
        if p.dictionary.is_file() {
            let text = io::read_to_string(&p.dictionary)?;
            return DrugDictionary::from_compiled_tsv(&text, &p.dictionary);
        }
        if !p.dictionary_sources.is_empty() {
            return Ok(self.build_dictionary()?.0);
        }
        log::warn!("no dictionary at {}; drug matching is disabled", p.dictionary.display());
        Ok(DrugDictionary::default())
    }

    pub fn build_dictionary(&self) -> Result<(DrugDictionary, dictionary::CompileReport)> {
        let p = self.paths();
        let mut terms = Vec::new();
        for source in &p.dictionary_sources {
            terms.extend(dictionary::load_source_tsv(source)?);
        }
        let (dict, mut report) = dictionary::compile_dictionary(&terms);
        match &p.dictionary_blacklist {
            Some(path) => {
                let words = dictionary::load_word_list(path)?;
                let (dict, filtered) = dictionary::apply_blacklist(&dict, &words);
                report.dropped.extend(filtered.dropped);
                Ok((dict, report))
            }
            None => Ok((dict, report)),
        }
    }

    pub fn stopwords(&self) -> Result<HashSet<String>> {
        match &self.paths().stopwords {
            Some(p) => preprocess::load_stopwords(p),
            None => Ok(preprocess::bundled_stopwords()),
        }
    }

    pub fn text_preprocessor(&self) -> Result<TextPreprocessor> {
        let mut lemmatizer = Lemmatizer::default();
        if let Some(p) = &self.paths().lemma_exceptions {
            lemmatizer.extend_from_table(&io::read_to_string(p)?);
        }
        Ok(TextPreprocessor {
            stopwords: self.stopwords()?,
            lemmatizer,
        })
    }

    pub fn classifier<'d>(&self, dict: &'d DrugDictionary) -> Result<TrialClassifier<'d>> {
        let p = self.paths();
        let mut c = TrialClassifier::new(dict);
        if let Some(path) = &p.non_drug_words {
            c.non_drug = dictionary::load_word_list(path)?.into_iter().collect();
        }
        if let Some(terms) = &p.vaccine_terms {
            c.vaccine = TermRule::load(terms, p.vaccine_expansions.as_deref(), p.vaccine_blacklist.as_deref())?;
        }
        if let Some(terms) = &p.biologic_terms {
            c.biologic = TermRule::load(terms, p.biologic_expansions.as_deref(), p.biologic_blacklist.as_deref())?;
        }
        Ok(c)
    }

    pub fn load_state(&self) -> Result<State> {
        let p = self.paths();
        let model = if p.model_file().exists() {
            Some(LdaModel::load(&p.model_file())?)
        } else {
            None
        };
        Ok(State {
            corpus: CorpusStore::load(&p.corpus_store)?,
            findings: io::read_jsonl_or_empty(&p.findings_file())?,
            trials: TrialStore::load(&p.trial_store)?,
            classifications: io::read_jsonl_or_empty(&p.classifications_file())?,
            model,
            topic_state: read_json_opt(&p.topic_state_file())?,
            assignments: io::read_jsonl_or_empty(&p.assignments_file())?,
            labels: match &p.topic_labels {
                Some(path) => topics::load_labels(path)?,
                None => BTreeMap::new(),
            },
            stopwords: self.stopwords()?,
        })
    }

    /// Merges the corpus inbox into the store and returns the new documents.
    pub fn ingest_corpus(&self, now: DateTime<Utc>, report: &mut RunReport) -> Result<Vec<Document>> {
        let p = self.paths();
        let files = inbox_files(&p.corpus_inbox, &["jsonl", "json"])?;
        let ingested = read_corpus_files(&files, None, now.date_naive())?;
        self.merge_documents(ingested, now, report)
    }

    pub fn merge_documents(
        &self,
        ingested: corpus::Ingested,
        now: DateTime<Utc>,
        report: &mut RunReport,
    ) -> Result<Vec<Document>> {
        let p = self.paths();
        let store = CorpusStore::load(&p.corpus_store)?;
        let offered = ingested.documents.len();
        let (store, delta) = corpus::merge_incremental(store, ingested.documents, now);
        store.check_invariants()?;
        // An update without new documents leaves the store untouched; the
        // run report still records what was offered.
        if !delta.is_empty() || !p.corpus_store.join(corpus::DOCUMENTS_FILE).exists() {
            store.save(&p.corpus_store)?;
        }
        report.docs_added += delta.len();
        report.docs_skipped_duplicate += offered - delta.len();
        report.records_skipped += ingested.skipped.len();
        Ok(delta)
    }

    /// Runs extraction on `docs` and appends the findings to the store.
    pub fn extract(
        &self,
        dict: &DrugDictionary,
        docs: &[Document],
        report: &mut RunReport,
    ) -> Result<Vec<AssayFinding>> {
        let extractor = Extractor::new(dict).with_keywords(self.config.extraction.keywords.clone());
        let candidates = extractor.filter_assay_abstracts(docs);
        let found = extractor.extract_all(&candidates);
        report.docs_extracted += docs.len();
        report.findings_added += found.len();
        if !found.is_empty() {
            let path = self.paths().findings_file();
            let mut all: Vec<AssayFinding> = io::read_jsonl_or_empty(&path)?;
            all.extend(found.iter().cloned());
            io::write_jsonl_atomic(&path, &all)?;
        }
        Ok(found)
    }

    /// Merges the trial inbox and classifies the new trials.
    pub fn ingest_trials(&self, dict: &DrugDictionary, report: &mut RunReport) -> Result<()> {
        let files = inbox_files(&self.paths().trials_inbox, &["csv", "jsonl", "json"])?;
        self.ingest_trial_files(dict, &files, report)
    }

    pub fn ingest_trial_files(&self, dict: &DrugDictionary, files: &[PathBuf], report: &mut RunReport) -> Result<()> {
        let p = self.paths();
        let mut records = Vec::new();
        for file in files {
            records.extend(trials::load_trials_file(file)?);
        }
        let ingested = trials::ingest_trials(&records);
        report.records_skipped += ingested.skipped.len();
        let mut store = TrialStore::load(&p.trial_store)?;
        let added = store.merge(ingested.trials);
        report.trials_added += added.len();
        if added.is_empty() {
            return Ok(());
        }
        let classifier = self.classifier(dict)?;
        let mut classifications: Vec<TrialClassification> = io::read_jsonl_or_empty(&p.classifications_file())?;
        classifications.extend(classifier.classify_all(&added));
        store.save(&p.trial_store)?;
        io::write_jsonl_atomic(&p.classifications_file(), &classifications)
    }

    /// Fits phrases, vocabulary and a grid-searched model on the whole
    /// corpus, then assigns every document. Returns `false` when the corpus
    /// has nothing to train on.
    pub fn retrain_topics(&self, k_grid: &[usize], today: NaiveDate, report: &mut RunReport) -> Result<bool> {
        let p = self.paths();
        let cfg = &self.config.topics;
        let store = CorpusStore::load(&p.corpus_store)?;
        let raw: Vec<Vec<String>> = store.documents.iter().map(topic_tokens).collect();
        let phrases = match fit_phrases(&raw, cfg.phrase_min_count, cfg.phrase_threshold) {
            Ok(m) => m,
            Err(Error::EmptyCorpus) => {
                log::info!("corpus is empty; topic training skipped");
                return Ok(false);
            }
            Err(e) => return Err(e),
        };
        let pre = self.text_preprocessor()?;
        let docs: Vec<(String, Vec<String>)> = store
            .documents
            .iter()
            .zip(&raw)
            .map(|(d, toks)| (d.doc_id.clone(), pre.process(&phrases, toks)))
            .collect();
        let bows = build_vocab_and_bows(&docs, cfg.vocab());
        let trainable: Vec<_> = bows.bags.iter().filter(|b| !b.is_empty()).cloned().collect();
        if trainable.is_empty() {
            log::info!("no document has in-vocabulary tokens; topic training skipped");
            return Ok(false);
        }
        let grid = topics::grid_search_k(&trainable, &bows.vocab, k_grid, &cfg.lda())?;
        let assignments = topics::infer_all(&grid.best, &bows.bags, cfg.inference_iterations);
        grid.best.save(&p.model_file())?;
        write_json(&p.phrases_file(), &phrases)?;
        write_json(
            &p.topic_state_file(),
            &TopicState {
                last_retrain: today,
                k: grid.best.k,
                curve: grid.curve,
            },
        )?;
        io::write_jsonl_atomic(&p.assignments_file(), &assignments)?;
        report.topics_refreshed = true;
        report.docs_inferred += assignments.len();
        Ok(true)
    }

    /// Assigns `docs` with the current model and appends the assignments.
    /// Without a model this does nothing.
    pub fn infer_topics(&self, docs: &[Document], report: &mut RunReport) -> Result<Vec<DocTopicAssignment>> {
        let p = self.paths();
        if docs.is_empty() || !p.model_file().exists() {
            return Ok(Vec::new());
        }
        let model = LdaModel::load(&p.model_file())?;
        let phrases: PhraseModel = read_json_opt(&p.phrases_file())?.unwrap_or_else(PhraseModel::empty);
        let pre = self.text_preprocessor()?;
        let bags: Vec<_> = docs
            .iter()
            .map(|d| model.vocab.bag(&d.doc_id, &pre.process(&phrases, &topic_tokens(d))))
            .collect();
        let new = topics::infer_all(&model, &bags, self.config.topics.inference_iterations);
        let mut all: Vec<DocTopicAssignment> = io::read_jsonl_or_empty(&p.assignments_file())?;
        let fresh: HashSet<&str> = new.iter().map(|a| a.doc_id.as_str()).collect();
        all.retain(|a| !fresh.contains(a.doc_id.as_str()));
        all.extend(new.iter().cloned());
        io::write_jsonl_atomic(&p.assignments_file(), &all)?;
        report.docs_inferred += new.len();
        Ok(new)
    }

    /// Whether the schedule calls for retraining on `today`.
    pub fn retrain_due(&self, today: NaiveDate) -> Result<bool> {
        if self.config.topics.schedule == TopicSchedule::DailyInfer {
            return Ok(false);
        }
        let state: Option<TopicState> = read_json_opt(&self.paths().topic_state_file())?;
        Ok(match state {
            None => true,
            Some(s) => (s.last_retrain.year(), s.last_retrain.month()) != (today.year(), today.month()),
        })
    }

    /// One idempotent update run. Holds the lock file for its duration.
    pub fn run_update(&self, options: UpdateOptions) -> Result<RunReport> {
        let _lock = UpdateLock::acquire(&self.paths().lock_file())?;
        let now = options.now;
        let today = now.date_naive();
        let mut report = RunReport {
            run_at: Some(now),
            ..RunReport::default()
        };
        let record = |report: &mut RunReport, stage: &str, e: Error| {
            log::error!("{stage} stage failed: {e}");
            report.errors.push(format!("{stage}: {e}"));
        };

        let delta = match self.ingest_corpus(now, &mut report) {
            Ok(d) => d,
            Err(e) => {
                record(&mut report, "corpus", e);
                Vec::new()
            }
        };

        let dict = match self.dictionary() {
            Ok(d) => Some(d),
            Err(e) => {
                record(&mut report, "dictionary", e);
                None
            }
        };
        if let Some(dict) = &dict {
            if let Err(e) = self.extract(dict, &delta, &mut report) {
                record(&mut report, "preclinical", e);
            }
            if let Err(e) = self.ingest_trials(dict, &mut report) {
                record(&mut report, "trials", e);
            }
        }

        let topics_result = (|| -> Result<()> {
            let retrained = if options.force_retrain || self.retrain_due(today)? {
                self.retrain_topics(&self.config.topics.k_grid, today, &mut report)?
            } else {
                false
            };
            if !retrained {
                self.infer_topics(&delta, &mut report)?;
            }
            Ok(())
        })();
        if let Err(e) = topics_result {
            record(&mut report, "topics", e);
        }

        match self.load_state() {
            Ok(state) => {
                if let Err(e) = render_outputs(&state, self.config.topics.top_papers, &self.paths().tables_dir()) {
                    record(&mut report, "render", e);
                }
            }
            Err(e) => record(&mut report, "render", e),
        }

        let name = format!("run-{}.json", now.format("%Y%m%dT%H%M%S%.3fZ"));
        write_json(&self.paths().reports_dir().join(name), &report)?;
        Ok(report)
    }

    pub fn render(&self) -> Result<Vec<PathBuf>> {
        let state = self.load_state()?;
        render_outputs(&state, self.config.topics.top_papers, &self.paths().tables_dir())
    }
}

fn doc_titles(corpus: &CorpusStore) -> HashMap<&str, &str> {
    corpus
        .documents
        .iter()
        .map(|d| (d.doc_id.as_str(), d.title.as_str()))
        .collect()
}

/// Every published table, keyed by file stem.
pub fn build_tables(state: &State, top_papers: usize) -> BTreeMap<&'static str, Table> {
    let mut tables = BTreeMap::new();

    let mut monthly = Table::new(["month", "documents"]);
    for (month, n) in corpus::monthly_counts(&state.corpus) {
        monthly.push(vec![month.to_string(), n.to_string()]);
    }
    tables.insert("monthly_counts", monthly);

    tables.insert(
        "trial_drug_counts",
        trials::counts_table(["drug", "trials"], &trials::drug_trial_counts(&state.classifications)),
    );
    tables.insert(
        "trial_classifications",
        trials::classification_table(&state.classifications),
    );
    for (name, cat) in [
        ("term_frequencies_vaccine", Category::Vaccine),
        ("term_frequencies_biologic", Category::Biologic),
    ] {
        let tf = trials::term_frequencies(&state.trials.trials, &state.classifications, cat, &state.stopwords);
        tables.insert(name, trials::counts_table(["term", "count"], &tf));
    }

    tables.insert("assay_summary", preclinical::summary_table(&state.findings));
    tables.insert("assay_findings", preclinical::findings_table(&state.findings));

    let (reports, recs) = match &state.model {
        Some(model) => {
            let reports = topics::topic_reports(model, &state.assignments, &state.labels);
            let kept = topics::filter_small_topics(&state.assignments, model.k);
            (
                reports,
                topics::recommend_top_papers(&state.assignments, &kept, top_papers),
            )
        }
        None => (Vec::new(), BTreeMap::new()),
    };
    tables.insert("topic_keywords", topics::topics_table(&reports));

    let titles = doc_titles(&state.corpus);
    let mut rec_table = Table::new(["topic_id", "label", "rank", "doc_id", "title", "weight"]);
    for (topic, list) in &recs {
        let label = state.labels.get(topic).cloned().unwrap_or_default();
        for (rank, r) in list.iter().enumerate() {
            rec_table.push(vec![
                topic.to_string(),
                label.clone(),
                (rank + 1).to_string(),
                r.doc_id.clone(),
                titles.get(r.doc_id.as_str()).copied().unwrap_or("").to_string(),
                format!("{:.6}", r.weight),
            ]);
        }
    }
    tables.insert("topic_recommendations", rec_table);

    let curve = state.topic_state.as_ref().map(|s| s.curve.as_slice()).unwrap_or(&[]);
    tables.insert("topic_coherence", topics::coherence_table(curve));
    tables
}

/// Writes every table as TSV and Markdown into `dir`. Files are written to
/// a staging directory that then replaces `dir`, so readers never see a
/// partial set.
pub fn render_outputs(state: &State, top_papers: usize, dir: &Path) -> Result<Vec<PathBuf>> {
    let parent = dir.parent().unwrap_or(Path::new("."));
    let name = dir
        .file_name()
        .ok_or_else(|| Error::Config(format!("bad output directory {}", dir.display())))?
        .to_string_lossy()
        .into_owned();
    fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    let staging = parent.join(format!(".{name}.staging"));
    if staging.exists() {
        fs::remove_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;
    }
    fs::create_dir_all(&staging).map_err(|e| Error::io(&staging, e))?;

    let mut written = Vec::new();
    for (stem, table) in build_tables(state, top_papers) {
        for (ext, body) in [("tsv", table.to_tsv()), ("md", table.to_markdown())] {
            let file = format!("{stem}.{ext}");
            let path = staging.join(&file);
            fs::write(&path, body).map_err(|e| Error::io(&path, e))?;
            written.push(dir.join(file));
        }
    }

    let old = parent.join(format!(".{name}.old"));
    if old.exists() {
        fs::remove_dir_all(&old).map_err(|e| Error::io(&old, e))?;
    }
    if dir.exists() {
        fs::rename(dir, &old).map_err(|e| Error::io(dir, e))?;
    }
    fs::rename(&staging, dir).map_err(|e| Error::io(dir, e))?;
    if old.exists() {
        fs::remove_dir_all(&old).map_err(|e| Error::io(&old, e))?;
    }
    Ok(written)
}
