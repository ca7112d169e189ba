//! Clinical-trial ingestion and rule-based classification into drug,
//! vaccine and biologic trials.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fmt;
use std::path::Path;

use chrono::NaiveDate;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{normalize_text, parse_date, SkippedRecord};
use crate::dictionary::DrugDictionary;
use crate::error::{Error, Result};
use crate::io::{self, Table};
use crate::preprocess::tokenize;

const BUNDLED_NON_DRUG: &str = include_str!("../data/non_drug_words.txt");
const BUNDLED_VACCINE_TERMS: &str = include_str!("../data/vaccine_terms.txt");
const BUNDLED_VACCINE_EXPANSIONS: &str = include_str!("../data/vaccine_expansions.txt");
const BUNDLED_VACCINE_BLACKLIST: &str = include_str!("../data/vaccine_blacklist.txt");
const BUNDLED_BIOLOGIC_TERMS: &str = include_str!("../data/biologic_terms.txt");
const BUNDLED_BIOLOGIC_EXPANSIONS: &str = include_str!("../data/biologic_expansions.txt");
const BUNDLED_BIOLOGIC_BLACKLIST: &str = include_str!("../data/biologic_blacklist.txt");

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Trial {
    pub trial_id: String,
    pub title: String,
    /// Normalized description; the title when the record has none.
    pub description_norm: String,
    pub date_registered: Option<NaiveDate>,
    pub phase: Option<String>,
}

/// A trial record with its fields located by column alias.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct RawTrial {
    pub trial_id: Option<String>,
    pub title: Option<String>,
    pub description: Option<String>,
    pub date: Option<String>,
    pub phase: Option<String>,
}

const ID_KEYS: &[&str] = &["trial_id", "trialid", "id", "nct_id", "registry_id"];
const TITLE_KEYS: &[&str] = &["title", "public_title", "scientific_title", "brief_title"];
const DESCRIPTION_KEYS: &[&str] = &[
    "description",
    "abstract",
    "summary",
    "brief_summary",
    "detailed_description",
];
const DATE_KEYS: &[&str] = &["date", "date_registered", "registration_date", "date_registration"];
const PHASE_KEYS: &[&str] = &["phase"];

fn normalize_key(key: &str) -> String {
    key.trim()
        .to_lowercase()
        .chars()
        .map(|c| if c == ' ' || c == '-' { '_' } else { c })
        .collect()
}

impl RawTrial {
    /// Builds a record from (column, value) pairs. Column names are matched
    /// case-insensitively against known aliases; other columns are ignored.
    pub fn from_fields<'a>(fields: impl IntoIterator<Item = (&'a str, String)>) -> Self {
        let map: HashMap<String, String> = fields
            .into_iter()
            .map(|(k, v)| (normalize_key(k), v))
            .filter(|(_, v)| !v.trim().is_empty())
            .collect();
        let pick = |keys: &[&str]| keys.iter().find_map(|k| map.get(*k).cloned());
        RawTrial {
            trial_id: pick(ID_KEYS).map(|s| s.trim().to_string()),
            title: pick(TITLE_KEYS),
            description: pick(DESCRIPTION_KEYS),
            date: pick(DATE_KEYS),
            phase: pick(PHASE_KEYS).map(|s| s.trim().to_string()),
        }
    }
}

pub fn parse_trials_csv(text: &str, path: &Path) -> Result<Vec<RawTrial>> {
    let mut reader = csv::ReaderBuilder::new().flexible(true).from_reader(text.as_bytes());
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let headers = reader.headers().map_err(csv_err)?.clone();
    reader
        .records()
        .map(|row| {
            let row = row.map_err(csv_err)?;
            Ok(RawTrial::from_fields(
                headers.iter().zip(row.iter()).map(|(h, v)| (h, v.to_string())),
            ))
        })
        .collect()
}

pub fn parse_trials_jsonl(text: &str, path: &Path) -> Result<Vec<RawTrial>> {
    let mut out = Vec::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let value: serde_json::Map<String, serde_json::Value> =
            serde_json::from_str(line).map_err(|source| Error::Json {
                path: path.to_path_buf(),
                line: i + 1,
                source,
            })?;
        out.push(RawTrial::from_fields(value.iter().filter_map(|(k, v)| {
            let s = match v {
                serde_json::Value::String(s) => s.clone(),
                serde_json::Value::Number(n) => n.to_string(),
                _ => return None,
            };
            Some((k.as_str(), s))
        })));
    }
    Ok(out)
}

/// Reads a `.csv` or JSONL export, chosen by file extension.
pub fn load_trials_file(path: &Path) -> Result<Vec<RawTrial>> {
    let text = io::read_to_string(path)?;
    match path.extension().and_then(|e| e.to_str()) {
        Some(ext) if ext.eq_ignore_ascii_case("csv") => parse_trials_csv(&text, path),
        _ => parse_trials_jsonl(&text, path),
    }
}

#[derive(Debug, Clone, Default)]
pub struct TrialIngest {
    pub trials: Vec<Trial>,
    pub skipped: Vec<SkippedRecord>,
}

/// Normalizes records and keeps the first record per trial id. Records
/// without an id are skip-listed.
pub fn ingest_trials(records: &[RawTrial]) -> TrialIngest {
    let mut out = TrialIngest::default();
    let mut seen = HashSet::new();
    for (index, r) in records.iter().enumerate() {
        let Some(id) = r.trial_id.clone().filter(|id| !id.is_empty()) else {
            out.skipped.push(SkippedRecord {
                index,
                reason: "record has no trial_id".into(),
            });
            continue;
        };
        if !seen.insert(id.clone()) {
            continue;
        }
        let title = r.title.as_deref().unwrap_or("").trim().to_string();
        let description = r.description.as_deref().unwrap_or(&title);
        out.trials.push(Trial {
            trial_id: id,
            description_norm: normalize_text(description),
            title,
            date_registered: r.date.as_deref().and_then(parse_date),
            phase: r.phase.clone(),
        });
    }
    out
}

pub const TRIALS_FILE: &str = "trials.jsonl";

#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrialStore {
    pub trials: Vec<Trial>,
}

impl TrialStore {
    pub fn load(dir: &Path) -> Result<Self> {
        Ok(TrialStore {
            trials: io::read_jsonl_or_empty(&dir.join(TRIALS_FILE))?,
        })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        io::write_jsonl_atomic(&dir.join(TRIALS_FILE), &self.trials)
    }

    pub fn len(&self) -> usize {
        self.trials.len()
    }

    pub fn is_empty(&self) -> bool {
        self.trials.is_empty()
    }

    /// Appends trials with unseen ids and returns the ones added.
    pub fn merge(&mut self, new: Vec<Trial>) -> Vec<Trial> {
        let mut ids: HashSet<String> = self.trials.iter().map(|t| t.trial_id.clone()).collect();
        let added: Vec<Trial> = new.into_iter().filter(|t| ids.insert(t.trial_id.clone())).collect();
        self.trials.extend(added.iter().cloned());
        added
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Category {
    Drug,
    Vaccine,
    Biologic,
}

impl Category {
    pub const ALL: [Category; 3] = [Category::Drug, Category::Vaccine, Category::Biologic];

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Drug => "drug",
            Category::Vaccine => "vaccine",
            Category::Biologic => "biologic",
        }
    }
}

impl fmt::Display for Category {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

/// Reduces a token to the stem shared by its derivatives
/// ("vaccines", "vaccinated", "vaccination" → "vaccin").
pub fn derivative_stem(token: &str) -> String {
    if let Some(base) = token.strip_suffix("ies") {
        if base.len() >= 3 {
            return format!("{base}y");
        }
    }
    const SUFFIXES: [&str; 11] = [
        "ations", "ation", "ating", "ated", "ates", "ate", "ing", "ed", "es", "e", "s",
    ];
    for suffix in SUFFIXES {
        if let Some(base) = token.strip_suffix(suffix) {
            if base.chars().count() >= 4 && !base.ends_with('s') {
                return base.to_string();
            }
        }
    }
    token.to_string()
}

#[derive(Debug, Clone, PartialEq, Eq)]
enum PatternToken {
    Stem(String),
    Exact(String),
}

/// Keyword rule: keyword phrases matched by stem, extra forms matched
/// verbatim, and a blacklist of phrases that veto the rule.
#[derive(Debug, Clone)]
pub struct TermRule {
    patterns: Vec<Vec<PatternToken>>,
    blacklist: Vec<Vec<PatternToken>>,
}

fn stem_pattern(phrase: &str) -> Vec<PatternToken> {
    tokenize(&normalize_text(phrase))
        .iter()
        .map(|t| PatternToken::Stem(derivative_stem(t)))
        .collect()
}

impl TermRule {
    pub fn new<S: AsRef<str>>(keywords: &[S], expansions: &[S], blacklist: &[S]) -> Self {
        let mut patterns: Vec<Vec<PatternToken>> = keywords.iter().map(|k| stem_pattern(k.as_ref())).collect();
        patterns.extend(expansions.iter().map(|e| {
            tokenize(&normalize_text(e.as_ref()))
                .into_iter()
                .map(PatternToken::Exact)
                .collect()
        }));
        patterns.retain(|p| !p.is_empty());
        let mut blacklist: Vec<Vec<PatternToken>> = blacklist.iter().map(|b| stem_pattern(b.as_ref())).collect();
        blacklist.retain(|p| !p.is_empty());
        TermRule { patterns, blacklist }
    }

    fn from_lists(terms: &str, expansions: &str, blacklist: &str) -> Self {
        let lines = |s| io::list_lines(s).collect::<Vec<_>>();
        TermRule::new(&lines(terms), &lines(expansions), &lines(blacklist))
    }

    pub fn bundled_vaccine() -> Self {
        TermRule::from_lists(
            BUNDLED_VACCINE_TERMS,
            BUNDLED_VACCINE_EXPANSIONS,
            BUNDLED_VACCINE_BLACKLIST,
        )
    }

    pub fn bundled_biologic() -> Self {
        TermRule::from_lists(
            BUNDLED_BIOLOGIC_TERMS,
            BUNDLED_BIOLOGIC_EXPANSIONS,
            BUNDLED_BIOLOGIC_BLACKLIST,
        )
    }

    pub fn load(terms: &Path, expansions: Option<&Path>, blacklist: Option<&Path>) -> Result<Self> {
        let read = |p: Option<&Path>| p.map(io::read_to_string).transpose().map(Option::unwrap_or_default);
        Ok(TermRule::from_lists(
            &io::read_to_string(terms)?,
            &read(expansions)?,
            &read(blacklist)?,
        ))
    }

    fn matches_at(pattern: &[PatternToken], tokens: &[String], stems: &[String], at: usize) -> bool {
        at + pattern.len() <= tokens.len()
            && pattern.iter().enumerate().all(|(j, p)| match p {
                PatternToken::Stem(s) => &stems[at + j] == s,
                PatternToken::Exact(s) => &tokens[at + j] == s,
            })
    }

    fn longest_at(patterns: &[Vec<PatternToken>], tokens: &[String], stems: &[String], at: usize) -> usize {
        patterns
            .iter()
            .filter(|p| Self::matches_at(p, tokens, stems, at))
            .map(Vec::len)
            .max()
            .unwrap_or(0)
    }

    /// Matched phrases in text order (leftmost-longest, deduplicated), or
    /// nothing when a blacklist phrase occurs.
    pub fn witnesses(&self, tokens: &[String]) -> Vec<String> {
        let stems: Vec<String> = tokens.iter().map(|t| derivative_stem(t)).collect();
        if (0..tokens.len()).any(|i| Self::longest_at(&self.blacklist, tokens, &stems, i) > 0) {
            return Vec::new();
        }
        let mut out: Vec<String> = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            match Self::longest_at(&self.patterns, tokens, &stems, i) {
                0 => i += 1,
                len => {
                    let phrase = tokens[i..i + len].join(" ");
                    if !out.contains(&phrase) {
                        out.push(phrase);
                    }
                    i += len;
                }
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TrialClassification {
    pub trial_id: String,
    pub categories: BTreeSet<Category>,
    /// Matched phrases per category, in text order.
    pub witnesses: BTreeMap<Category, Vec<String>>,
    /// Canonical names of the matched drugs.
    pub drugs: BTreeSet<String>,
}

#[derive(Debug, Clone)]
pub struct TrialClassifier<'d> {
    pub dictionary: &'d DrugDictionary,
    pub non_drug: HashSet<String>,
    pub vaccine: TermRule,
    pub biologic: TermRule,
}

pub fn bundled_non_drug_words() -> HashSet<String> {
    io::list_lines(BUNDLED_NON_DRUG).map(str::to_string).collect()
}

impl<'d> TrialClassifier<'d> {
    pub fn new(dictionary: &'d DrugDictionary) -> Self {
        TrialClassifier {
            dictionary,
            non_drug: bundled_non_drug_words(),
            vaccine: TermRule::bundled_vaccine(),
            biologic: TermRule::bundled_biologic(),
        }
    }

    pub fn classify(&self, trial: &Trial) -> TrialClassification {
        let tokens = tokenize(&trial.description_norm);
        let mut witnesses: BTreeMap<Category, Vec<String>> = BTreeMap::new();
        let mut drugs = BTreeSet::new();
        for m in self.dictionary.match_terms(&tokens) {
            if self.non_drug.contains(&m.surface) || self.non_drug.contains(&m.canonical) {
                continue;
            }
            let phrase = tokens[m.token_start..m.token_end].join(" ");
            let list = witnesses.entry(Category::Drug).or_default();
            if !list.contains(&phrase) {
                list.push(phrase);
            }
            drugs.insert(m.canonical);
        }
        for (category, rule) in [(Category::Vaccine, &self.vaccine), (Category::Biologic, &self.biologic)] {
            let found = rule.witnesses(&tokens);
            if !found.is_empty() {
                witnesses.insert(category, found);
            }
        }
        TrialClassification {
            trial_id: trial.trial_id.clone(),
            categories: witnesses.keys().copied().collect(),
            witnesses,
            drugs,
        }
    }

    pub fn classify_all(&self, trials: &[Trial]) -> Vec<TrialClassification> {
        trials.par_iter().map(|t| self.classify(t)).collect()
    }
}

/// Trials per canonical drug, counting each (trial, drug) pair once.
/// Sorted by descending count, ties alphabetical.
pub fn drug_trial_counts(classifications: &[TrialClassification]) -> Vec<(String, usize)> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for c in classifications {
        for d in &c.drugs {
            *counts.entry(d).or_default() += 1;
        }
    }
    sort_counts(counts.into_iter().map(|(k, v)| (k.to_string(), v)).collect())
}

fn sort_counts(mut counts: Vec<(String, usize)>) -> Vec<(String, usize)> {
    counts.sort_by(|a, b| b.1.cmp(&a.1).then_with(|| a.0.cmp(&b.0)));
    counts
}

/// Token frequencies over the descriptions of trials in `category`, with
/// stopwords and tokens lacking a letter removed. Descending, ties
/// alphabetical.
pub fn term_frequencies(
    trials: &[Trial],
    classifications: &[TrialClassification],
    category: Category,
    stopwords: &HashSet<String>,
) -> Vec<(String, usize)> {
    let members: HashSet<&str> = classifications
        .iter()
        .filter(|c| c.categories.contains(&category))
        .map(|c| c.trial_id.as_str())
        .collect();
    let mut counts: HashMap<String, usize> = HashMap::new();
    for trial in trials.iter().filter(|t| members.contains(t.trial_id.as_str())) {
        for token in tokenize(&trial.description_norm) {
            if !stopwords.contains(&token) && token.chars().any(char::is_alphabetic) {
                *counts.entry(token).or_default() += 1;
            }
        }
    }
    sort_counts(counts.into_iter().collect())
}

pub fn counts_table(header: [&str; 2], counts: &[(String, usize)]) -> Table {
    let mut table = Table::new(header);
    for (k, v) in counts {
        table.push(vec![k.clone(), v.to_string()]);
    }
    table
}

pub fn classification_table(classifications: &[TrialClassification]) -> Table {
    let mut table = Table::new([
        "trial_id",
        "categories",
        "drug_witnesses",
        "vaccine_witnesses",
        "biologic_witnesses",
    ]);
    for c in classifications {
        let cats: Vec<&str> = c.categories.iter().map(|c| c.as_str()).collect();
        let w = |cat| c.witnesses.get(&cat).map(|v| v.join("; ")).unwrap_or_default();
        table.push(vec![
            c.trial_id.clone(),
            cats.join(","),
            w(Category::Drug),
            w(Category::Vaccine),
            w(Category::Biologic),
        ]);
    }
    table
}
