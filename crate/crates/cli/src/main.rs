use std::collections::BTreeSet;
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use chrono::{DateTime, Utc};
use clap::{Parser, Subcommand};

use litmine::corpus::{self, CorpusStore, Source};
use litmine::eval;
use litmine::io::{self, Table};
use litmine::pipeline::{self, PipelineConfig, RunReport, UpdateOptions, Workspace};
use litmine::preclinical::{self, Extractor};
use litmine::topics;
use litmine::trials;

const DEFAULT_CONFIG: &str = "litmine.toml";

#[derive(Debug, Parser)]
#[command(name = "litmine", version, about = "Literature and clinical-trial mining pipeline")]
struct Cli {
    /// Pipeline configuration (TOML). Defaults to ./litmine.toml when present.
    #[arg(long, global = true)]
    config: Option<PathBuf>,

    /// Override the output directory.
    #[arg(long, global = true)]
    output: Option<PathBuf>,

    /// Override the topic-model seed.
    #[arg(long, global = true)]
    seed: Option<u64>,

    /// More log output (repeatable).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Debug, Subcommand)]
enum Command {
    /// Merge JSONL corpus exports into the document store.
    Ingest {
        /// Files to ingest; defaults to the configured inbox.
        files: Vec<PathBuf>,
        /// Source for records without one.
        #[arg(long)]
        source: Option<Source>,
    },
    /// Re-apply deduplication to the document store.
    Dedup,
    /// Compile the drug dictionary from the configured source lists.
    DictBuild {
        /// Extra source lists (canonical, alias, source columns).
        #[arg(long = "source")]
        sources: Vec<PathBuf>,
        #[arg(long)]
        blacklist: Option<PathBuf>,
    },
    /// Extract assay findings from every stored document.
    Extract {
        /// Write the findings table here instead of stdout.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Merge and classify clinical-trial exports.
    Trials {
        /// Files to ingest; defaults to the configured inbox.
        files: Vec<PathBuf>,
    },
    /// Train the topic model by grid search and assign every document.
    TopicsTrain {
        /// Comma-separated topic counts, e.g. 5,10,15.
        #[arg(long, value_delimiter = ',')]
        k_grid: Option<Vec<usize>>,
    },
    /// Assign every stored document with the current topic model.
    TopicsInfer,
    /// Print the top papers of each kept topic.
    Recommend {
        #[arg(long)]
        top: Option<usize>,
    },
    /// Score extraction against a gold-standard file.
    Eval {
        /// JSONL gold labels.
        #[arg(long)]
        gold: PathBuf,
        /// Also write the metrics as JSON here.
        #[arg(long)]
        json: Option<PathBuf>,
    },
    /// Draw a reproducible document sample for gold labeling.
    Sample {
        #[arg(long)]
        n: Option<usize>,
    },
    /// Run the full update: corpus, preclinical, trials, topics, render.
    Update {
        #[arg(long)]
        force_retrain: bool,
        /// Pretend the run happens at this RFC 3339 time.
        #[arg(long, hide = true)]
        now: Option<DateTime<Utc>>,
    },
    /// Re-render all output tables.
    Render,
}

fn load_config(cli: &Cli) -> Result<PipelineConfig> {
    let mut config = match &cli.config {
        Some(path) => PipelineConfig::load(path).with_context(|| format!("loading {}", path.display()))?,
        None if Path::new(DEFAULT_CONFIG).is_file() => PipelineConfig::load(Path::new(DEFAULT_CONFIG))?,
        None => PipelineConfig::with_base(Path::new(".")),
    };
    if let Some(out) = &cli.output {
        config.paths.output = out.clone();
    }
    if let Some(seed) = cli.seed {
        config.topics.seed = seed;
    }
    Ok(config)
}

fn print_table(table: &Table) {
    print!("{}", table.to_tsv());
}

fn run(cli: Cli) -> Result<ExitCode> {
    let mut config = load_config(&cli)?;
    if let Command::DictBuild { sources, blacklist } = &cli.command {
        config.paths.dictionary_sources.extend(sources.iter().cloned());
        if blacklist.is_some() {
            config.paths.dictionary_blacklist = blacklist.clone();
        }
    }
    let ws = Workspace::new(config)?;
    let paths = ws.paths().clone();
    let now = Utc::now();

    match cli.command {
        Command::Ingest { files, source } => {
            let files = if files.is_empty() {
                pipeline::inbox_files(&paths.corpus_inbox, &["jsonl", "json"])?
            } else {
                files
            };
            let ingested = pipeline::read_corpus_files(&files, source, now.date_naive())?;
            let mut report = RunReport::default();
            let delta = ws.merge_documents(ingested, now, &mut report)?;
            println!(
                "added {} documents ({} duplicates, {} records skipped)",
                delta.len(),
                report.docs_skipped_duplicate,
                report.records_skipped
            );
        }
        Command::Dedup => {
            let mut store = CorpusStore::load(&paths.corpus_store)?;
            let before = store.len();
            store.documents = corpus::deduplicate(std::mem::take(&mut store.documents));
            store.save(&paths.corpus_store)?;
            println!(
                "removed {} duplicates, {} documents remain",
                before - store.len(),
                store.len()
            );
        }
        Command::DictBuild { .. } => {
            if paths.dictionary_sources.is_empty() {
                bail!("no dictionary sources configured; pass --source");
            }
            let (dict, report) = ws.build_dictionary()?;
            io::write_atomic(&paths.dictionary, dict.to_tsv().as_bytes())?;
            for d in &report.dropped {
                log::info!("dropped '{}': {:?}", d.term, d.reason);
            }
            println!(
                "{} surfaces written to {} ({} dropped)",
                dict.len(),
                paths.dictionary.display(),
                report.dropped.len()
            );
        }
        Command::Extract { out } => {
            let dict = ws.dictionary()?;
            let store = CorpusStore::load(&paths.corpus_store)?;
            let extractor = Extractor::new(&dict).with_keywords(ws.config.extraction.keywords.clone());
            let findings = extractor.extract_all(&extractor.filter_assay_abstracts(&store.documents));
            io::write_jsonl_atomic(&paths.findings_file(), &findings)?;
            let table = preclinical::findings_table(&findings);
            match out {
                Some(path) => io::write_atomic(&path, table.to_tsv().as_bytes())?,
                None => print_table(&table),
            }
        }
        Command::Trials { files } => {
            let dict = ws.dictionary()?;
            let mut report = RunReport::default();
            if files.is_empty() {
                ws.ingest_trials(&dict, &mut report)?;
            } else {
                ws.ingest_trial_files(&dict, &files, &mut report)?;
            }
            let classifications: Vec<trials::TrialClassification> =
                io::read_jsonl_or_empty(&paths.classifications_file())?;
            eprintln!("added {} trials", report.trials_added);
            print_table(&trials::counts_table(
                ["drug", "trials"],
                &trials::drug_trial_counts(&classifications),
            ));
        }
        Command::TopicsTrain { k_grid } => {
            let grid = k_grid.unwrap_or_else(|| ws.config.topics.k_grid.clone());
            let mut report = RunReport::default();
            if !ws.retrain_topics(&grid, now.date_naive(), &mut report)? {
                bail!("the corpus has no documents to train on");
            }
            let state = ws.load_state()?;
            if let Some(ts) = &state.topic_state {
                print_table(&topics::coherence_table(&ts.curve));
                eprintln!("selected K={}; model written to {}", ts.k, paths.model_file().display());
            }
        }
        Command::TopicsInfer => {
            if !paths.model_file().exists() {
                bail!(
                    "no topic model at {}; run topics-train first",
                    paths.model_file().display()
                );
            }
            let store = CorpusStore::load(&paths.corpus_store)?;
            let mut report = RunReport::default();
            ws.infer_topics(&store.documents, &mut report)?;
            println!("assigned {} documents", report.docs_inferred);
        }
        Command::Recommend { top } => {
            let state = ws.load_state()?;
            let Some(model) = &state.model else {
                bail!(
                    "no topic model at {}; run topics-train first",
                    paths.model_file().display()
                );
            };
            let kept = topics::filter_small_topics(&state.assignments, model.k);
            let recs =
                topics::recommend_top_papers(&state.assignments, &kept, top.unwrap_or(ws.config.topics.top_papers));
            print_table(&topics::recommendations_table(&recs));
        }
        Command::Eval { gold, json } => {
            let labels = eval::load_gold(&gold)?;
            let dict = ws.dictionary()?;
            let store = CorpusStore::load(&paths.corpus_store)?;
            let wanted: BTreeSet<&str> = labels.iter().map(|g| g.doc_id.as_str()).collect();
            let docs: Vec<_> = store
                .documents
                .iter()
                .filter(|d| wanted.contains(d.doc_id.as_str()))
                .collect();
            if docs.len() < wanted.len() {
                log::warn!("{} gold documents are not in the store", wanted.len() - docs.len());
            }
            let extractor = Extractor::new(&dict).with_keywords(ws.config.extraction.keywords.clone());
            let score = eval::score(&extractor.extract_all(&docs), &labels);
            print!("{}", eval::metrics_table(&score).to_markdown());
            let body = serde_json::to_string_pretty(&score)?;
            match json {
                Some(path) => io::write_atomic(&path, body.as_bytes())?,
                None => println!("{body}"),
            }
        }
        Command::Sample { n } => {
            let store = CorpusStore::load(&paths.corpus_store)?;
            let n = n.unwrap_or(ws.config.eval.sample_size);
            for id in eval::sample_docs(&store, n, ws.config.eval.seed)? {
                println!("{id}");
            }
        }
        Command::Update { force_retrain, now } => {
            let report = ws.run_update(UpdateOptions {
                now: now.unwrap_or_else(Utc::now),
                force_retrain,
            })?;
            print_table(&report.table());
            for e in &report.errors {
                eprintln!("error: {e}");
            }
            if !report.is_success() {
                return Ok(ExitCode::FAILURE);
            }
        }
        Command::Render => {
            let files = ws.render()?;
            println!("rendered {} files into {}", files.len(), paths.tables_dir().display());
        }
    }
    Ok(ExitCode::SUCCESS)
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    let level = match cli.verbose {
        0 => "warn",
        1 => "info",
        _ => "debug",
    };
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or(level)).init();
    match run(cli) {
        Ok(code) => code,
        Err(e) => {
            eprintln!("error: {e:#}");
            ExitCode::FAILURE
        }
    }
}
