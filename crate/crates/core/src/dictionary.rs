//! Drug-name dictionary: compilation from source term lists, blacklist
//! filtering, and leftmost-longest matching over token sequences.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fmt;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::normalize_text;
use crate::error::{Error, Result};
use crate::io;

pub const MIN_TERM_CHARS: usize = 5;
pub const MAX_TERM_CHARS: usize = 75;
pub const MAX_TERM_TOKENS: usize = 3;

/// Upstream term list. Variant order is the canonical-name priority.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TermSource {
    Drugbank,
    Fda,
    Chembl,
    User,
}

impl TermSource {
    pub fn as_str(self) -> &'static str {
        match self {
            TermSource::Drugbank => "drugbank",
            TermSource::Fda => "fda",
            TermSource::Chembl => "chembl",
            TermSource::User => "user",
        }
    }
}

impl fmt::Display for TermSource {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for TermSource {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "drugbank" => Ok(TermSource::Drugbank),
            "fda" => Ok(TermSource::Fda),
            "chembl" => Ok(TermSource::Chembl),
            "user" | "" => Ok(TermSource::User),
            other => Err(Error::Config(format!("unknown term source '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermEntry {
    pub surface: String,
    pub canonical: String,
    pub source: TermSource,
}

/// A drug name and its aliases as listed by one source.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SourceTerm {
    pub name: String,
    pub aliases: Vec<String>,
    pub source: TermSource,
}

impl SourceTerm {
    pub fn new(name: &str, aliases: &[&str], source: TermSource) -> Self {
        SourceTerm {
            name: name.into(),
            aliases: aliases.iter().map(|a| a.to_string()).collect(),
            source,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum DropReason {
    TooShort(usize),
    TooLong(usize),
    TooManyTokens(usize),
    /// The canonical name was itself dropped.
    CanonicalDropped(String),
    Blacklisted,
}

impl fmt::Display for DropReason {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            DropReason::TooShort(n) => write!(f, "too short ({n} chars)"),
            DropReason::TooLong(n) => write!(f, "too long ({n} chars)"),
            DropReason::TooManyTokens(n) => write!(f, "too many tokens ({n})"),
            DropReason::CanonicalDropped(c) => write!(f, "canonical '{c}' dropped"),
            DropReason::Blacklisted => f.write_str("blacklisted"),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DroppedTerm {
    pub term: String,
    pub reason: DropReason,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct CompileReport {
    pub dropped: Vec<DroppedTerm>,
}

/// Checks the per-surface length and token-count bounds.
pub fn check_surface(surface: &str) -> Option<DropReason> {
    let chars = surface.chars().count();
    let tokens = surface.split(' ').count();
    if chars < MIN_TERM_CHARS {
        Some(DropReason::TooShort(chars))
    } else if chars > MAX_TERM_CHARS {
        Some(DropReason::TooLong(chars))
    } else if tokens > MAX_TERM_TOKENS {
        Some(DropReason::TooManyTokens(tokens))
    } else {
        None
    }
}

/// Exact token-sequence lookup with leftmost-longest selection.
#[derive(Debug, Clone, Default)]
pub struct PhraseIndex<T> {
    phrases: HashMap<Vec<String>, T>,
    max_len: usize,
}

impl<T> PhraseIndex<T> {
    pub fn new() -> Self {
        PhraseIndex {
            phrases: HashMap::new(),
            max_len: 0,
        }
    }

    /// Inserts a space-separated phrase. The first insertion of a phrase wins.
    pub fn insert(&mut self, phrase: &str, value: T) {
        let tokens: Vec<String> = phrase.split_whitespace().map(str::to_string).collect();
        if tokens.is_empty() {
            return;
        }
        self.max_len = self.max_len.max(tokens.len());
        self.phrases.entry(tokens).or_insert(value);
    }

    pub fn len(&self) -> usize {
        self.phrases.len()
    }

    pub fn is_empty(&self) -> bool {
        self.phrases.is_empty()
    }

    /// Non-overlapping matches as `(start, end, value)`, scanning left to
    /// right and preferring the longest phrase at each start position.
    pub fn find_iter<'a, S: AsRef<str>>(&'a self, tokens: &'a [S]) -> Vec<(usize, usize, &'a T)> {
        let mut out = Vec::new();
        let mut key: Vec<String> = Vec::with_capacity(self.max_len);
        let mut i = 0;
        while i < tokens.len() {
            let longest = tokens.len() - i;
            let mut hit = None;
            for len in (1..=self.max_len.min(longest)).rev() {
                key.clear();
                key.extend(tokens[i..i + len].iter().map(|t| t.as_ref().to_string()));
                if let Some(value) = self.phrases.get(&key) {
                    hit = Some((len, value));
                    break;
                }
            }
            match hit {
                Some((len, value)) => {
                    out.push((i, i + len, value));
                    i += len;
                }
                None => i += 1,
            }
        }
        out
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TermMatch {
    pub surface: String,
    pub canonical: String,
    pub token_start: usize,
    pub token_end: usize,
}

/// Compiled dictionary; immutable once built.
#[derive(Debug, Clone, Default)]
pub struct DrugDictionary {
    entries: BTreeMap<String, TermEntry>,
    blacklist: BTreeSet<String>,
    index: PhraseIndex<String>,
}

impl PartialEq for DrugDictionary {
    fn eq(&self, other: &Self) -> bool {
        self.entries == other.entries && self.blacklist == other.blacklist
    }
}

impl DrugDictionary {
    fn from_parts(entries: BTreeMap<String, TermEntry>, blacklist: BTreeSet<String>) -> Self {
        let mut index = PhraseIndex::new();
        for surface in entries.keys() {
            index.insert(surface, surface.clone());
        }
        DrugDictionary {
            entries,
            blacklist,
            index,
        }
    }

    pub fn entries(&self) -> impl Iterator<Item = &TermEntry> {
        self.entries.values()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn get(&self, surface: &str) -> Option<&TermEntry> {
        self.entries.get(surface)
    }

    pub fn blacklist(&self) -> &BTreeSet<String> {
        &self.blacklist
    }

    /// All non-overlapping dictionary matches, leftmost-longest, sorted by
    /// start token. Tokens must already be normalized.
    pub fn match_terms<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<TermMatch> {
        self.index
            .find_iter(tokens)
            .into_iter()
            .map(|(start, end, surface)| TermMatch {
                surface: surface.clone(),
                canonical: self.entries[surface].canonical.clone(),
                token_start: start,
                token_end: end,
            })
            .collect()
    }

    /// Rows of the audit TSV: surface, canonical, source.
    pub fn to_tsv(&self) -> String {
        let mut table = io::Table::new(["surface", "canonical", "source"]);
        for e in self.entries.values() {
            table.push(vec![e.surface.clone(), e.canonical.clone(), e.source.to_string()]);
        }
        table.to_tsv()
    }

    /// Reads a compiled dictionary written by [`DrugDictionary::to_tsv`].
    pub fn from_compiled_tsv(text: &str, path: &Path) -> Result<Self> {
        let mut entries = BTreeMap::new();
        for (n, line) in text.lines().enumerate() {
            if line.trim().is_empty() || (n == 0 && line.starts_with("surface\t")) {
                continue;
            }
            let cols: Vec<&str> = line.split('\t').collect();
            if cols.len() < 3 {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    message: format!("line {}: expected 3 columns", n + 1),
                });
            }
            let surface = normalize_text(cols[0]);
            entries.insert(
                surface.clone(),
                TermEntry {
                    surface,
                    canonical: normalize_text(cols[1]),
                    source: cols[2].parse()?,
                },
            );
        }
        Ok(Self::from_parts(entries, BTreeSet::new()))
    }

    pub fn check_invariants(&self) -> Result<()> {
        for e in self.entries.values() {
            if let Some(reason) = check_surface(&e.surface) {
                return Err(Error::Invariant(format!("entry '{}': {reason}", e.surface)));
            }
            if self.blacklist.contains(&e.surface) {
                return Err(Error::Invariant(format!("entry '{}' is blacklisted", e.surface)));
            }
            if !self.entries.contains_key(&e.canonical) {
                return Err(Error::Invariant(format!(
                    "canonical '{}' of '{}' is not an entry",
                    e.canonical, e.surface
                )));
            }
        }
        Ok(())
    }
}

/// Normalizes, filters and merges source term lists.
///
/// Sources are processed in priority order (drugbank, fda, chembl, user);
/// the first claim on a surface form wins. A name whose canonical surface
/// already belongs to an earlier concept is merged into that concept.
pub fn compile_dictionary(source_lists: &[SourceTerm]) -> (DrugDictionary, CompileReport) {
    let mut ordered: Vec<&SourceTerm> = source_lists.iter().collect();
    ordered.sort_by_key(|t| t.source);

    let mut report = CompileReport::default();
    let mut entries: BTreeMap<String, TermEntry> = BTreeMap::new();
    for term in ordered {
        let name = normalize_text(&term.name);
        if let Some(reason) = check_surface(&name) {
            report.dropped.push(DroppedTerm {
                term: name.clone(),
                reason,
            });
            for alias in &term.aliases {
                let alias = normalize_text(alias);
                if alias != name {
                    report.dropped.push(DroppedTerm {
                        term: alias,
                        reason: DropReason::CanonicalDropped(name.clone()),
                    });
                }
            }
            continue;
        }
        let canonical = match entries.get(&name) {
            Some(existing) => existing.canonical.clone(),
            None => {
                entries.insert(
                    name.clone(),
                    TermEntry {
                        surface: name.clone(),
                        canonical: name.clone(),
                        source: term.source,
                    },
                );
                name.clone()
            }
        };
        for alias in &term.aliases {
            let alias = normalize_text(alias);
            if alias.is_empty() || entries.contains_key(&alias) {
                continue;
            }
            if let Some(reason) = check_surface(&alias) {
                report.dropped.push(DroppedTerm { term: alias, reason });
                continue;
            }
            entries.insert(
                alias.clone(),
                TermEntry {
                    surface: alias,
                    canonical: canonical.clone(),
                    source: term.source,
                },
            );
        }
    }
    (DrugDictionary::from_parts(entries, BTreeSet::new()), report)
}

/// Removes blacklisted surfaces. Blacklisting a canonical name removes the
/// whole concept, aliases included.
pub fn apply_blacklist<S: AsRef<str>>(dict: &DrugDictionary, filter_terms: &[S]) -> (DrugDictionary, CompileReport) {
    let mut blacklist = dict.blacklist.clone();
    blacklist.extend(
        filter_terms
            .iter()
            .map(|t| normalize_text(t.as_ref()))
            .filter(|t| !t.is_empty()),
    );
    let dead_concepts: BTreeSet<&str> = dict
        .entries
        .values()
        .filter(|e| e.surface == e.canonical && blacklist.contains(&e.surface))
        .map(|e| e.canonical.as_str())
        .collect();

    let mut report = CompileReport::default();
    let mut entries = BTreeMap::new();
    for (surface, entry) in &dict.entries {
        if blacklist.contains(surface) {
            report.dropped.push(DroppedTerm {
                term: surface.clone(),
                reason: DropReason::Blacklisted,
            });
        } else if dead_concepts.contains(entry.canonical.as_str()) {
            report.dropped.push(DroppedTerm {
                term: surface.clone(),
                reason: DropReason::CanonicalDropped(entry.canonical.clone()),
            });
        } else {
            entries.insert(surface.clone(), entry.clone());
        }
    }
    (DrugDictionary::from_parts(entries, blacklist), report)
}

/// Parses a source list TSV: `canonical, alias, source` with one row per
/// alias. A header row starting with `canonical` is skipped.
pub fn parse_source_tsv(text: &str, path: &Path) -> Result<Vec<SourceTerm>> {
    let mut grouped: Vec<SourceTerm> = Vec::new();
    let mut position: HashMap<(String, TermSource), usize> = HashMap::new();
    for (n, line) in text.lines().enumerate() {
        let line = line.trim_end_matches('\r');
        if line.trim().is_empty() || line.starts_with('#') {
            continue;
        }
        let cols: Vec<&str> = line.split('\t').collect();
        if n == 0 && cols[0].trim().eq_ignore_ascii_case("canonical") {
            continue;
        }
        if cols.len() < 2 {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("line {}: expected canonical<TAB>alias[<TAB>source]", n + 1),
            });
        }
        let canonical = cols[0].trim().to_string();
        let alias = cols[1].trim().to_string();
        let source: TermSource = cols.get(2).copied().unwrap_or("user").parse()?;
        let key = (normalize_text(&canonical), source);
        let idx = *position.entry(key).or_insert_with(|| {
            grouped.push(SourceTerm {
                name: canonical.clone(),
                aliases: Vec::new(),
                source,
            });
            grouped.len() - 1
        });
        if normalize_text(&alias) != normalize_text(&canonical) {
            grouped[idx].aliases.push(alias);
        }
    }
    Ok(grouped)
}

pub fn load_source_tsv(path: &Path) -> Result<Vec<SourceTerm>> {
    parse_source_tsv(&io::read_to_string(path)?, path)
}

/// One normalized term per non-blank line.
pub fn load_word_list(path: &Path) -> Result<Vec<String>> {
    Ok(io::list_lines(&io::read_to_string(path)?).map(normalize_text).collect())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_string).collect()
    }

    fn dict(names: &[&str]) -> DrugDictionary {
        let terms: Vec<SourceTerm> = names
            .iter()
            .map(|n| SourceTerm::new(n, &[], TermSource::Drugbank))
            .collect();
        compile_dictionary(&terms).0
    }

    #[test]
    fn length_and_ngram_rules() {
        let (d, report) = compile_dictionary(&[
            SourceTerm::new("Remdesivir", &[], TermSource::Drugbank),
            SourceTerm::new("abc", &[], TermSource::Fda),
            SourceTerm::new("Interferon Beta", &[], TermSource::Chembl),
            SourceTerm::new("one two three four", &[], TermSource::User),
            SourceTerm::new(&"x".repeat(76), &[], TermSource::User),
            SourceTerm::new(&"y".repeat(75), &[], TermSource::User),
        ]);
        assert!(d.get("remdesivir").is_some());
        assert!(d.get("interferon beta").is_some());
        assert!(d.get(&"y".repeat(75)).is_some());
        assert_eq!(d.len(), 3);
        let reasons: Vec<_> = report.dropped.iter().map(|t| t.reason.clone()).collect();
        assert_eq!(
            reasons,
            vec![
                DropReason::TooShort(3),
                DropReason::TooManyTokens(4),
                DropReason::TooLong(76)
            ]
        );
        d.check_invariants().unwrap();
    }

    #[test]
    fn aliases_map_to_canonical_and_priority_wins() {
        let (d, _) = compile_dictionary(&[
            SourceTerm::new("hydroxychloroquine sulfate", &["plaquenil"], TermSource::Fda),
            SourceTerm::new("Hydroxychloroquine", &["Plaquenil", "HCQ"], TermSource::Drugbank),
        ]);
        let plaquenil = d.get("plaquenil").unwrap();
        assert_eq!(plaquenil.canonical, "hydroxychloroquine");
        assert_eq!(plaquenil.source, TermSource::Drugbank);
        assert!(d.get("hcq").is_none());
        assert_eq!(
            d.get("hydroxychloroquine sulfate").unwrap().canonical,
            "hydroxychloroquine sulfate"
        );
        d.check_invariants().unwrap();
    }

    #[test]
    fn name_claimed_as_alias_merges_into_existing_concept() {
        let (d, _) = compile_dictionary(&[
            SourceTerm::new("lopinavir", &["kaletra"], TermSource::Drugbank),
            SourceTerm::new("kaletra", &["aluvia"], TermSource::Fda),
        ]);
        assert_eq!(d.get("aluvia").unwrap().canonical, "lopinavir");
        d.check_invariants().unwrap();
    }

    #[test]
    fn blacklist_behaviour() {
        // Five entries: two concepts, one with two aliases, one with one.
        let (d, _) = compile_dictionary(&[
            SourceTerm::new("heparin", &["heparin sodium", "liquaemin"], TermSource::Drugbank),
            SourceTerm::new("water", &["aqua purificata"], TermSource::Drugbank),
        ]);
        assert_eq!(d.len(), 5);

        let (same, report) = apply_blacklist(&d, &["glucose"]);
        assert_eq!(same.entries, d.entries);
        assert!(report.dropped.is_empty());

        let (minus_alias, _) = apply_blacklist(&d, &["Liquaemin"]);
        assert_eq!(minus_alias.len(), d.len() - 1);
        assert_eq!(minus_alias.get("heparin sodium").unwrap().canonical, "heparin");

        // Canonical hit: the concept disappears with its aliases.
        let (no_water, report) = apply_blacklist(&d, &["water"]);
        assert!(no_water.get("water").is_none());
        assert!(no_water.get("aqua purificata").is_none());
        assert_eq!(no_water.len(), 3);
        assert_eq!(report.dropped.len(), 2);
        no_water.check_invariants().unwrap();
        assert!(no_water.blacklist().contains("water"));
    }

    #[test]
    fn bigram_beats_unigram() {
        let d = dict(&["chloroquine", "chloroquine phosphate", "phosphate"]);
        let m = d.match_terms(&toks("chloroquine phosphate dosing"));
        assert_eq!(m.len(), 1);
        assert_eq!(m[0].surface, "chloroquine phosphate");
        assert_eq!((m[0].token_start, m[0].token_end), (0, 2));
    }

    #[test]
    fn interferon_bigrams() {
        let d = dict(&["interferon beta", "interferon alpha"]);
        let m = d.match_terms(&toks("interferon beta plus interferon alpha"));
        let surfaces: Vec<&str> = m.iter().map(|x| x.surface.as_str()).collect();
        assert_eq!(surfaces, vec!["interferon beta", "interferon alpha"]);
    }

    #[test]
    fn token_boundaries_only() {
        let d = dict(&["placebo", "aceon"]);
        assert!(d.match_terms(&toks("a placebos arm")).is_empty());
        assert!(d.match_terms(&toks("no drugs here")).is_empty());
    }

    #[test]
    fn source_tsv_parsing() {
        let text = "canonical\talias\tsource\nRemdesivir\tRemdesivir\tdrugbank\nRemdesivir\tGS-5734\tdrugbank\nFavipiravir\tAvigan\tfda\n";
        let terms = parse_source_tsv(text, Path::new("x.tsv")).unwrap();
        assert_eq!(terms.len(), 2);
        assert_eq!(terms[0].aliases, vec!["GS-5734".to_string()]);
        assert_eq!(terms[1].source, TermSource::Fda);
        let (d, _) = compile_dictionary(&terms);
        let back = DrugDictionary::from_compiled_tsv(&d.to_tsv(), Path::new("c.tsv")).unwrap();
        assert_eq!(back.entries, d.entries);
    }

    /// Brute force: enumerate every (start, len) alignment that hits the
    /// term list, then greedily take the leftmost, longest, non-overlapping.
    fn oracle(tokens: &[String], terms: &[String]) -> Vec<(usize, usize)> {
        let mut alignments = Vec::new();
        for start in 0..tokens.len() {
            for end in start + 1..=tokens.len() {
                let joined = tokens[start..end].join(" ");
                if terms.contains(&joined) {
                    alignments.push((start, end));
                }
            }
        }
        let mut chosen = Vec::new();
        let mut cursor = 0;
        loop {
            let best = alignments
                .iter()
                .filter(|(s, _)| *s >= cursor)
                .min_by(|a, b| a.0.cmp(&b.0).then(b.1.cmp(&a.1)));
            match best {
                Some(&(s, e)) => {
                    chosen.push((s, e));
                    cursor = e;
                }
                None => break,
            }
        }
        chosen
    }

    proptest! {
        #[test]
        fn leftmost_longest_matches_oracle(
            tokens in proptest::collection::vec(prop::sample::select(vec!["aaaaa", "bbbbb", "ccccc", "ddddd"]), 0..=15),
            terms in proptest::collection::vec(proptest::collection::vec(prop::sample::select(vec!["aaaaa", "bbbbb", "ccccc", "ddddd"]), 1..=3), 1..=10),
        ) {
            let tokens: Vec<String> = tokens.into_iter().map(str::to_string).collect();
            let terms: Vec<String> = terms.iter().map(|t| t.join(" ")).collect();
            let refs: Vec<&str> = terms.iter().map(String::as_str).collect();
            let d = dict(&refs);
            let got: Vec<(usize, usize)> = d.match_terms(&tokens).iter().map(|m| (m.token_start, m.token_end)).collect();
            prop_assert_eq!(&got, &oracle(&tokens, &terms));
            for w in got.windows(2) {
                prop_assert!(w[0].1 <= w[1].0);
            }
            for m in d.match_terms(&tokens) {
                prop_assert_eq!(tokens[m.token_start..m.token_end].join(" "), m.surface);
            }
        }

        #[test]
        fn compiled_entries_respect_bounds(names in proptest::collection::vec("[a-z]{1,30}( [a-z]{1,30}){0,4}", 0..20),
                                          black in proptest::collection::vec("[a-z]{1,30}", 0..5)) {
            let terms: Vec<SourceTerm> = names.iter().map(|n| SourceTerm::new(n, &[], TermSource::User)).collect();
            let (d, _) = compile_dictionary(&terms);
            d.check_invariants().unwrap();
            let (filtered, _) = apply_blacklist(&d, &black);
            filtered.check_invariants().unwrap();
            for e in filtered.entries() {
                prop_assert!(!filtered.blacklist().contains(&e.surface));
            }
        }
    }
}
