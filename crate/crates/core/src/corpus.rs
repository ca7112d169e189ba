//! Abstract ingestion, normalization, three-pass deduplication and the
//! append-only document store.

use std::collections::{BTreeMap, HashSet};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use chrono::{DateTime, Datelike, NaiveDate, Utc};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io;

/// Lowercases and collapses every whitespace run (tabs and newlines
/// included) to a single space, trimming both ends.
pub fn normalize_text(raw: &str) -> String {
    let lower = raw.to_lowercase();
    let mut out = String::with_capacity(lower.len());
    for word in lower.split_whitespace() {
        if !out.is_empty() {
            out.push(' ');
        }
        out.push_str(word);
    }
    out
}

const DOI_PREFIXES: &[&str] = &[
    "https://doi.org/",
    "http://doi.org/",
    "https://dx.doi.org/",
    "http://dx.doi.org/",
    "doi:",
];

/// Lowercases a DOI and strips resolver / scheme prefixes. Blank input
/// yields `None`.
pub fn normalize_doi(raw: &str) -> Option<String> {
    let mut doi = normalize_text(raw);
    loop {
        let before = doi.len();
        for prefix in DOI_PREFIXES {
            if let Some(rest) = doi.strip_prefix(prefix) {
                doi = rest.trim_start().to_string();
            }
        }
        if doi.len() == before {
            break;
        }
    }
    (!doi.is_empty()).then_some(doi)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Source {
    Pubmed,
    Preprint,
    Dimensions,
    Other,
}

impl Source {
    pub const ALL: [Source; 4] = [Source::Pubmed, Source::Preprint, Source::Dimensions, Source::Other];

    pub fn as_str(self) -> &'static str {
        match self {
            Source::Pubmed => "pubmed",
            Source::Preprint => "preprint",
            Source::Dimensions => "dimensions",
            Source::Other => "other",
        }
    }
}

impl fmt::Display for Source {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Source {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match normalize_text(s).as_str() {
            "pubmed" => Ok(Source::Pubmed),
            "preprint" | "biorxiv" | "medrxiv" | "arxiv" => Ok(Source::Preprint),
            "dimensions" | "dimensions.ai" => Ok(Source::Dimensions),
            "other" => Ok(Source::Other),
            other => Err(Error::Config(format!("unknown source '{other}'"))),
        }
    }
}

/// One line of an input JSONL file. Unknown keys are ignored.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RawRecord {
    #[serde(default)]
    pub doi: Option<String>,
    #[serde(default)]
    pub title: Option<String>,
    #[serde(default, rename = "abstract")]
    pub abstract_text: Option<String>,
    #[serde(default)]
    pub source: Option<String>,
    #[serde(default)]
    pub date: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Document {
    pub doc_id: String,
    pub doi: Option<String>,
    pub title: String,
    pub abstract_raw: String,
    pub abstract_norm: String,
    pub source: Source,
    pub date_published: Option<NaiveDate>,
    pub date_ingested: NaiveDate,
}

impl Document {
    pub fn title_norm(&self) -> String {
        normalize_text(&self.title)
    }
}

/// Parses `YYYY-MM-DD`, `YYYY/MM/DD`, `YYYY-MM`, `YYYY` or an RFC 3339
/// timestamp. Anything else is treated as unknown.
pub fn parse_date(raw: &str) -> Option<NaiveDate> {
    let s = raw.trim();
    if s.is_empty() {
        return None;
    }
    for fmt in ["%Y-%m-%d", "%Y/%m/%d"] {
        if let Ok(d) = NaiveDate::parse_from_str(s, fmt) {
            return Some(d);
        }
    }
    if let Ok(ts) = DateTime::parse_from_rfc3339(s) {
        return Some(ts.date_naive());
    }
    if s.len() >= 10 {
        if let Ok(d) = NaiveDate::parse_from_str(&s[..10], "%Y-%m-%d") {
            return Some(d);
        }
    }
    let parts: Vec<&str> = s.split(['-', '/']).collect();
    match parts.as_slice() {
        [y, m] => NaiveDate::from_ymd_opt(y.parse().ok()?, m.parse().ok()?, 1),
        [y] if y.len() == 4 => NaiveDate::from_ymd_opt(y.parse().ok()?, 1, 1),
        _ => None,
    }
}

/// Stable identifier: the normalized DOI when present, otherwise a hash of
/// the normalized title.
pub fn derive_doc_id(doi: Option<&str>, title_norm: &str) -> String {
    match doi {
        Some(doi) => doi.to_string(),
        None => {
            let digest = Sha256::digest(title_norm.as_bytes());
            format!("title:{}", &hex::encode(digest)[..16])
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SkippedRecord {
    pub index: usize,
    pub reason: String,
}

#[derive(Debug, Clone, Default)]
pub struct Ingested {
    pub documents: Vec<Document>,
    pub skipped: Vec<SkippedRecord>,
}

/// Turns raw records into normalized documents. `default_source` is used
/// when a record carries no (recognized) `source` field. Records with
/// neither a DOI nor a title are reported in the skip list.
pub fn ingest_records(records: &[RawRecord], default_source: Source, ingested_on: NaiveDate) -> Ingested {
    let mut out = Ingested::default();
    for (index, record) in records.iter().enumerate() {
        let doi = record.doi.as_deref().and_then(normalize_doi);
        let title = record.title.as_deref().unwrap_or("").trim().to_string();
        let title_norm = normalize_text(&title);
        if doi.is_none() && title_norm.is_empty() {
            out.skipped.push(SkippedRecord {
                index,
                reason: "record has neither doi nor title".into(),
            });
            continue;
        }
        let abstract_raw = record.abstract_text.clone().unwrap_or_default();
        let source = record
            .source
            .as_deref()
            .and_then(|s| s.parse().ok())
            .unwrap_or(default_source);
        out.documents.push(Document {
            doc_id: derive_doc_id(doi.as_deref(), &title_norm),
            abstract_norm: normalize_text(&abstract_raw),
            doi,
            title,
            abstract_raw,
            source,
            date_published: record.date.as_deref().and_then(parse_date),
            date_ingested: ingested_on,
        });
    }
    out
}

fn doi_key(doc: &Document) -> Option<String> {
    doc.doi.clone().filter(|d| !d.is_empty())
}

fn title_key(doc: &Document) -> Option<String> {
    Some(doc.title_norm()).filter(|t| !t.is_empty())
}

fn abstract_key(doc: &Document) -> Option<String> {
    Some(doc.abstract_norm.clone()).filter(|a| !a.is_empty())
}

/// The three comparison keys, in pass order. Empty keys never match.
pub const DEDUP_KEYS: [fn(&Document) -> Option<String>; 3] = [doi_key, title_key, abstract_key];

/// Removes duplicates in three sequential passes (DOI, then title, then
/// abstract). The first occurrence wins and input order is preserved.
pub fn deduplicate(docs: Vec<Document>) -> Vec<Document> {
    let mut docs = docs;
    for key in DEDUP_KEYS {
        let mut seen = HashSet::new();
        docs.retain(|doc| match key(doc) {
            Some(k) => seen.insert(k),
            None => true,
        });
    }
    docs
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct RunCounts {
    pub added: usize,
    pub skipped_duplicate: usize,
}

/// Update metadata kept next to the document store.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct UpdateLedger {
    pub last_run: Option<DateTime<Utc>>,
    /// Latest publication date seen per source; never decreases.
    pub high_water: BTreeMap<Source, NaiveDate>,
    /// Per run date; counts only ever grow.
    pub counts: BTreeMap<NaiveDate, RunCounts>,
}

impl UpdateLedger {
    pub fn record(&mut self, at: DateTime<Utc>, delta: &[Document], skipped: usize) {
        self.last_run = Some(match self.last_run {
            Some(prev) if prev > at => prev,
            _ => at,
        });
        let entry = self.counts.entry(at.date_naive()).or_default();
        entry.added += delta.len();
        entry.skipped_duplicate += skipped;
        for doc in delta {
            if let Some(date) = doc.date_published {
                let mark = self.high_water.entry(doc.source).or_insert(date);
                if date > *mark {
                    *mark = date;
                }
            }
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct CorpusStore {
    pub documents: Vec<Document>,
    pub ledger: UpdateLedger,
}

pub const DOCUMENTS_FILE: &str = "documents.jsonl";
pub const LEDGER_FILE: &str = "ledger.json";

impl CorpusStore {
    /// Loads a store directory; a missing directory is an empty store.
    pub fn load(dir: &Path) -> Result<Self> {
        let documents = io::read_jsonl_or_empty(&dir.join(DOCUMENTS_FILE))?;
        let ledger_path = dir.join(LEDGER_FILE);
        let ledger = if ledger_path.exists() {
            let text = io::read_to_string(&ledger_path)?;
            serde_json::from_str(&text).map_err(|source| Error::Json {
                path: ledger_path,
                line: 1,
                source,
            })?
        } else {
            UpdateLedger::default()
        };
        Ok(CorpusStore { documents, ledger })
    }

    pub fn save(&self, dir: &Path) -> Result<()> {
        io::write_jsonl_atomic(&dir.join(DOCUMENTS_FILE), &self.documents)?;
        let ledger = serde_json::to_vec_pretty(&self.ledger).expect("serializable ledger");
        io::write_atomic(&dir.join(LEDGER_FILE), &ledger)
    }

    pub fn len(&self) -> usize {
        self.documents.len()
    }

    pub fn is_empty(&self) -> bool {
        self.documents.is_empty()
    }

    pub fn get(&self, doc_id: &str) -> Option<&Document> {
        self.documents.iter().find(|d| d.doc_id == doc_id)
    }

    /// Checks the pairwise-uniqueness invariants.
    pub fn check_invariants(&self) -> Result<()> {
        let mut ids = HashSet::new();
        for doc in &self.documents {
            if !ids.insert(doc.doc_id.as_str()) {
                return Err(Error::Invariant(format!("duplicate doc_id {}", doc.doc_id)));
            }
        }
        for key in DEDUP_KEYS {
            let mut seen = HashSet::new();
            for doc in &self.documents {
                if let Some(k) = key(doc) {
                    if !seen.insert(k.clone()) {
                        return Err(Error::Invariant(format!("duplicate key '{k}'")));
                    }
                }
            }
        }
        Ok(())
    }
}

/// Appends the documents of `new_docs` that do not duplicate anything in the
/// store (under the three-pass rule) and returns them as the delta.
pub fn merge_incremental(
    mut store: CorpusStore,
    new_docs: Vec<Document>,
    at: DateTime<Utc>,
) -> (CorpusStore, Vec<Document>) {
    let offered = new_docs.len();
    let stored = store.documents.len();
    let mut combined = std::mem::take(&mut store.documents);
    combined.extend(new_docs);
    let mut survivors = deduplicate(combined);
    let delta = survivors.split_off(stored);
    store.documents = survivors;
    store.documents.extend(delta.iter().cloned());
    store.ledger.record(at, &delta, offered - delta.len());
    (store, delta)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum MonthKey {
    Month { year: i32, month: u32 },
    Unknown,
}

impl fmt::Display for MonthKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MonthKey::Month { year, month } => write!(f, "{year:04}-{month:02}"),
            MonthKey::Unknown => f.write_str("unknown"),
        }
    }
}

/// Documents per publication month, ascending, with undated documents in a
/// trailing `unknown` bucket.
pub fn monthly_counts(store: &CorpusStore) -> Vec<(MonthKey, usize)> {
    let mut counts: BTreeMap<MonthKey, usize> = BTreeMap::new();
    for doc in &store.documents {
        let key = match doc.date_published {
            Some(d) => MonthKey::Month {
                year: d.year(),
                month: d.month(),
            },
            None => MonthKey::Unknown,
        };
        *counts.entry(key).or_default() += 1;
    }
    counts.into_iter().collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn day() -> NaiveDate {
        NaiveDate::from_ymd_opt(2021, 1, 15).unwrap()
    }

    fn doc(doi: Option<&str>, title: &str, abs: &str) -> Document {
        let title_norm = normalize_text(title);
        let doi = doi.and_then(normalize_doi);
        Document {
            doc_id: derive_doc_id(doi.as_deref(), &title_norm),
            doi,
            title: title.into(),
            abstract_raw: abs.into(),
            abstract_norm: normalize_text(abs),
            source: Source::Other,
            date_published: None,
            date_ingested: day(),
        }
    }

    #[test]
    fn normalize_examples() {
        assert_eq!(normalize_text("EC50\t of  Drug"), "ec50 of drug");
        assert_eq!(normalize_text(""), "");
        assert_eq!(normalize_text("SARS-CoV-2 OR COVID-19"), "sars-cov-2 or covid-19");
        assert_eq!(normalize_text("  a\n\r\nb  "), "a b");
    }

    #[test]
    fn doi_prefixes_are_stripped() {
        let cases = [
            ("10.1/x", Some("10.1/x")),
            ("HTTPS://DOI.ORG/10.1/X", Some("10.1/x")),
            (
                "http://dx.doi.org/10.1016/J.CELL.2020.02.052",
                Some("10.1016/j.cell.2020.02.052"),
            ),
            ("https://dx.doi.org/10.2/y", Some("10.2/y")),
            ("doi:10.3/Z", Some("10.3/z")),
            ("DOI: 10.4/w", Some("10.4/w")),
            ("  10.5/v  ", Some("10.5/v")),
            ("http://doi.org/10.6/u", Some("10.6/u")),
            ("", None),
            ("   ", None),
        ];
        for (raw, want) in cases {
            assert_eq!(normalize_doi(raw).as_deref(), want, "input {raw:?}");
        }
    }

    #[test]
    fn ingest_examples() {
        let records = vec![
            RawRecord {
                doi: Some("10.1/x".into()),
                title: Some("T".into()),
                abstract_text: Some("A".into()),
                ..Default::default()
            },
            RawRecord {
                doi: Some("HTTPS://DOI.ORG/10.1/X".into()),
                ..Default::default()
            },
            RawRecord::default(),
            RawRecord {
                title: Some("Only A Title".into()),
                source: Some("PubMed".into()),
                date: Some("2020-03".into()),
                ..Default::default()
            },
        ];
        let out = ingest_records(&records, Source::Preprint, day());
        assert_eq!(out.documents.len(), 3);
        assert_eq!(out.documents[0].doi.as_deref(), Some("10.1/x"));
        assert_eq!(out.documents[0].doc_id, "10.1/x");
        assert_eq!(out.documents[0].source, Source::Preprint);
        assert_eq!(out.documents[1].doi.as_deref(), Some("10.1/x"));
        assert_eq!(out.skipped.len(), 1);
        assert_eq!(out.skipped[0].index, 2);
        let titled = &out.documents[2];
        assert!(titled.doc_id.starts_with("title:"));
        assert_eq!(titled.source, Source::Pubmed);
        assert_eq!(titled.date_published, NaiveDate::from_ymd_opt(2020, 3, 1));
        // stable across runs
        assert_eq!(titled.doc_id, derive_doc_id(None, "only a title"));
    }

    #[test]
    fn raw_record_ignores_unknown_fields() {
        let rec: RawRecord =
            serde_json::from_str(r#"{"doi":"10.1/a","abstract":"x","journal":"J","year":2020}"#).unwrap();
        assert_eq!(rec.abstract_text.as_deref(), Some("x"));
    }

    #[test]
    fn date_formats() {
        assert_eq!(parse_date("2020-03-04"), NaiveDate::from_ymd_opt(2020, 3, 4));
        assert_eq!(parse_date("2020/03/04"), NaiveDate::from_ymd_opt(2020, 3, 4));
        assert_eq!(parse_date("2020-03-04T10:00:00Z"), NaiveDate::from_ymd_opt(2020, 3, 4));
        assert_eq!(parse_date("2020"), NaiveDate::from_ymd_opt(2020, 1, 1));
        assert_eq!(parse_date("March 2020"), None);
    }

    #[test]
    fn dedup_same_doi_keeps_first() {
        let a = doc(Some("10.1/x"), "first", "a");
        let b = doc(Some("doi:10.1/X"), "second", "b");
        let out = deduplicate(vec![a.clone(), b]);
        assert_eq!(out, vec![a]);
    }

    #[test]
    fn dedup_title_pass() {
        let a = doc(Some("x"), "alpha", "1");
        let b = doc(Some("y"), "T", "2");
        let c = doc(Some("z"), "t", "3");
        let out = deduplicate(vec![a.clone(), b.clone(), c]);
        assert_eq!(out, vec![a, b]);
    }

    #[test]
    fn empty_keys_never_match() {
        let a = doc(Some("10.1/a"), "", "");
        let b = doc(Some("10.1/b"), "", "");
        assert_eq!(deduplicate(vec![a, b]).len(), 2);
    }

    #[test]
    fn merge_examples() {
        let at = Utc::now();
        let base = vec![doc(Some("1"), "a", "x"), doc(Some("2"), "b", "y")];
        let (store, delta) = merge_incremental(CorpusStore::default(), base.clone(), at);
        assert_eq!(delta.len(), 2);

        let (same, delta) = merge_incremental(store.clone(), vec![], at);
        assert!(delta.is_empty());
        assert_eq!(same.documents, store.documents);

        let (same, delta) = merge_incremental(store.clone(), base.clone(), at);
        assert!(delta.is_empty());
        assert_eq!(same.documents, store.documents);

        let mut incoming = vec![
            doc(Some("3"), "c", "z1"),
            doc(Some("1"), "dup by doi", "q"),
            doc(Some("4"), "d", "z2"),
            doc(Some("9"), "B", "w"),
            doc(Some("5"), "e", "z3"),
        ];
        incoming.rotate_left(1);
        let (after, delta) = merge_incremental(store.clone(), incoming.clone(), at);
        assert_eq!(delta.len(), 3);
        assert_eq!(after.len(), store.len() + delta.len());
        after.check_invariants().unwrap();
        let counts = after.ledger.counts[&at.date_naive()];
        assert_eq!(counts.added, 5);
        assert_eq!(counts.skipped_duplicate, 2);
    }

    #[test]
    fn ledger_high_water_never_decreases() {
        let at = Utc::now();
        let mut newer = doc(Some("1"), "a", "x");
        newer.date_published = NaiveDate::from_ymd_opt(2020, 5, 1);
        let mut older = doc(Some("2"), "b", "y");
        older.date_published = NaiveDate::from_ymd_opt(2020, 1, 1);
        let (store, _) = merge_incremental(CorpusStore::default(), vec![newer], at);
        let (store, _) = merge_incremental(store, vec![older], at);
        assert_eq!(
            store.ledger.high_water[&Source::Other],
            NaiveDate::from_ymd_opt(2020, 5, 1).unwrap()
        );
    }

    #[test]
    fn monthly_counts_examples() {
        assert!(monthly_counts(&CorpusStore::default()).is_empty());
        let mut docs = Vec::new();
        for (i, m) in [3, 3, 4, 3].iter().enumerate() {
            let mut d = doc(Some(&i.to_string()), &format!("t{i}"), "");
            d.date_published = NaiveDate::from_ymd_opt(2020, *m, 10);
            docs.push(d);
        }
        docs.push(doc(Some("u"), "undated", ""));
        let store = CorpusStore {
            documents: docs,
            ..Default::default()
        };
        let counts = monthly_counts(&store);
        let rendered: Vec<(String, usize)> = counts.iter().map(|(k, c)| (k.to_string(), *c)).collect();
        assert_eq!(
            rendered,
            vec![("2020-03".into(), 3), ("2020-04".into(), 1), ("unknown".into(), 1)]
        );
        assert_eq!(counts.iter().map(|(_, c)| c).sum::<usize>(), store.len());
    }

    #[test]
    fn store_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let (store, _) = merge_incremental(CorpusStore::default(), vec![doc(Some("1"), "a", "x")], Utc::now());
        store.save(dir.path()).unwrap();
        assert_eq!(CorpusStore::load(dir.path()).unwrap(), store);
        assert_eq!(
            CorpusStore::load(&dir.path().join("missing")).unwrap(),
            CorpusStore::default()
        );
    }

    proptest! {
        #[test]
        fn normalize_is_idempotent_and_lowercase(s in "\\PC{0,40}") {
            let once = normalize_text(&s);
            prop_assert_eq!(normalize_text(&once), once.clone());
            prop_assert!(!once.contains('\t'));
            prop_assert!(!once.contains("  "));
            prop_assert_eq!(once.trim(), once.as_str());
            prop_assert_eq!(once.to_lowercase(), once.clone());
        }

        #[test]
        fn dedup_idempotent_and_order_preserving(
            keys in proptest::collection::vec((0u8..4, 0u8..4, 0u8..4), 0..20)
        ) {
            let docs: Vec<Document> = keys
                .iter()
                .map(|(d, t, a)| doc(Some(&format!("10.1/{d}")), &format!("t{t}"), &format!("a{a}")))
                .collect();
            let once = deduplicate(docs.clone());
            prop_assert_eq!(deduplicate(once.clone()), once.clone());
            let mut positions = once
                .iter()
                .map(|d| docs.iter().position(|x| std::ptr::eq(x, d) || x == d).unwrap());
            let mut last = None;
            for p in positions.by_ref() {
                prop_assert!(last.is_none_or(|l| p > l));
                last = Some(p);
            }
        }
    }
}
