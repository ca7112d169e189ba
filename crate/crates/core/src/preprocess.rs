//! Sentence splitting, tokenization, collocation phrases, lemmatization and
//! bag-of-words construction.

use std::collections::{BTreeMap, HashMap, HashSet};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::io;

const BUNDLED_STOPWORDS: &str = include_str!("../data/stopwords.txt");
const BUNDLED_LEMMA_EXCEPTIONS: &str = include_str!("../data/lemma_exceptions.tsv");
const BUNDLED_ABBREVIATIONS: &str = include_str!("../data/abbreviations.txt");

pub const PHRASE_JOINER: char = '_';

/// A sentence of a normalized abstract. `char_span` holds byte offsets
/// into the source text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Sentence {
    pub text: String,
    pub tokens: Vec<String>,
    pub char_span: (usize, usize),
}

fn abbreviations() -> &'static HashSet<&'static str> {
    static SET: std::sync::OnceLock<HashSet<&'static str>> = std::sync::OnceLock::new();
    SET.get_or_init(|| io::list_lines(BUNDLED_ABBREVIATIONS).collect())
}

/// Splits normalized text on `.`, `!` or `?` followed by a space. Periods
/// ending a known abbreviation ("e.g.", "et al.", "fig.") do not split, and
/// decimals never do since their period is followed by a digit.
pub fn split_sentences(text: &str) -> Vec<Sentence> {
    let bytes = text.as_bytes();
    let mut spans = Vec::new();
    let mut start = 0;
    for (pos, ch) in text.char_indices() {
        if !matches!(ch, '.' | '!' | '?') || bytes.get(pos + 1) != Some(&b' ') {
            continue;
        }
        if ch == '.' {
            let word_start = text[..pos].rfind(' ').map_or(0, |i| i + 1);
            let word = text[word_start..=pos].trim_start_matches(|c: char| !c.is_alphanumeric());
            if abbreviations().contains(word) {
                continue;
            }
        }
        spans.push((start, pos + 1));
        start = pos + 1;
    }
    spans.push((start, text.len()));

    spans
        .into_iter()
        .filter_map(|(s, e)| {
            let raw = &text[s..e];
            let lead = raw.len() - raw.trim_start().len();
            let trail = raw.len() - raw.trim_end().len();
            let (s, e) = (s + lead, e - trail);
            (s < e).then(|| {
                let body = &text[s..e];
                Sentence {
                    text: body.to_string(),
                    tokens: tokenize(body),
                    char_span: (s, e),
                }
            })
        })
        .collect()
}

/// Leading characters kept when they prefix a number: signs and comparators.
const NUMERIC_PREFIX: &[char] = &['<', '>', '≤', '≥', '≈', '~', '-', '+', '−', '±', '='];

fn starts_numeric(s: &str) -> bool {
    let rest = s.trim_start_matches(NUMERIC_PREFIX);
    let mut chars = rest.chars();
    match chars.next() {
        Some(c) if c.is_ascii_digit() => true,
        Some('.') => chars.next().is_some_and(|c| c.is_ascii_digit()),
        _ => false,
    }
}

/// Splits on whitespace and trims punctuation from both ends of each piece.
/// Interior characters (hyphens, decimal points, `=`, `/`) are untouched;
/// a sign or comparator directly before a number is kept.
pub fn tokenize(text: &str) -> Vec<String> {
    text.split_whitespace()
        .filter_map(|piece| {
            let trimmed = piece.trim_end_matches(|c: char| !c.is_alphanumeric());
            let mut rest = trimmed;
            while let Some(c) = rest.chars().next() {
                if c.is_alphanumeric() || starts_numeric(rest) {
                    break;
                }
                rest = &rest[c.len_utf8()..];
            }
            (!rest.is_empty()).then(|| rest.to_string())
        })
        .collect()
}

/// Collocation model for bigrams and trigrams.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(from = "PhraseModelRepr", into = "PhraseModelRepr")]
pub struct PhraseModel {
    pub bigrams: HashMap<(String, String), f64>,
    pub trigrams: HashMap<(String, String, String), f64>,
    pub threshold: f64,
    pub min_count: u64,
}

#[derive(Serialize, Deserialize)]
struct PhraseModelRepr {
    threshold: f64,
    min_count: u64,
    bigrams: Vec<(String, String, f64)>,
    trigrams: Vec<(String, String, String, f64)>,
}

impl From<PhraseModel> for PhraseModelRepr {
    fn from(m: PhraseModel) -> Self {
        let mut bigrams: Vec<_> = m.bigrams.into_iter().map(|((a, b), s)| (a, b, s)).collect();
        bigrams.sort_by(|x, y| (&x.0, &x.1).cmp(&(&y.0, &y.1)));
        let mut trigrams: Vec<_> = m.trigrams.into_iter().map(|((a, b, c), s)| (a, b, c, s)).collect();
        trigrams.sort_by(|x, y| (&x.0, &x.1, &x.2).cmp(&(&y.0, &y.1, &y.2)));
        PhraseModelRepr {
            threshold: m.threshold,
            min_count: m.min_count,
            bigrams,
            trigrams,
        }
    }
}

impl From<PhraseModelRepr> for PhraseModel {
    fn from(r: PhraseModelRepr) -> Self {
        PhraseModel {
            bigrams: r.bigrams.into_iter().map(|(a, b, s)| ((a, b), s)).collect(),
            trigrams: r.trigrams.into_iter().map(|(a, b, c, s)| ((a, b, c), s)).collect(),
            threshold: r.threshold,
            min_count: r.min_count,
        }
    }
}

pub const DEFAULT_PHRASE_MIN_COUNT: u64 = 5;
pub const DEFAULT_PHRASE_THRESHOLD: f64 = 10.0;

/// `(count(a,b) - min_count) * vocab_size / (count(a) * count(b))`
pub fn collocation_score(pair_count: u64, count_a: u64, count_b: u64, min_count: u64, vocab_size: usize) -> f64 {
    (pair_count as f64 - min_count as f64) * vocab_size as f64 / (count_a as f64 * count_b as f64)
}

/// Scores adjacent unit pairs; a unit is one token or an already merged run.
fn score_pairs<'a>(
    docs: &'a [Vec<Vec<&'a str>>],
    min_count: u64,
    threshold: f64,
    want_len: usize,
) -> Vec<(Vec<&'a str>, f64)> {
    let mut unit_counts: HashMap<&[&str], u64> = HashMap::new();
    let mut pair_counts: HashMap<(&[&str], &[&str]), u64> = HashMap::new();
    for doc in docs {
        for unit in doc {
            *unit_counts.entry(unit.as_slice()).or_default() += 1;
        }
        for w in doc.windows(2) {
            if w[0].len() + w[1].len() == want_len {
                *pair_counts.entry((w[0].as_slice(), w[1].as_slice())).or_default() += 1;
            }
        }
    }
    let vocab_size = unit_counts.len();
    let mut kept = Vec::new();
    for ((a, b), count) in pair_counts {
        if count < min_count {
            continue;
        }
        let score = collocation_score(count, unit_counts[a], unit_counts[b], min_count, vocab_size);
        if score >= threshold {
            let joined: Vec<&str> = a.iter().chain(b.iter()).copied().collect();
            kept.push((joined, score));
        }
    }
    kept
}

/// Learns bigrams from the corpus, then trigrams from a second pass over
/// the bigram-merged text.
pub fn fit_phrases<S: AsRef<str>>(corpus: &[Vec<S>], min_count: u64, threshold: f64) -> Result<PhraseModel> {
    if corpus.iter().all(|d| d.is_empty()) {
        return Err(Error::EmptyCorpus);
    }
    let unigram_docs: Vec<Vec<Vec<&str>>> = corpus
        .iter()
        .map(|d| d.iter().map(|t| vec![t.as_ref()]).collect())
        .collect();
    let mut model = PhraseModel {
        bigrams: HashMap::new(),
        trigrams: HashMap::new(),
        threshold,
        min_count,
    };
    for (pair, score) in score_pairs(&unigram_docs, min_count, threshold, 2) {
        model.bigrams.insert((pair[0].to_string(), pair[1].to_string()), score);
    }

    let merged_docs: Vec<Vec<Vec<&str>>> = corpus
        .iter()
        .map(|doc| {
            let mut units = Vec::new();
            let mut i = 0;
            while i < doc.len() {
                if i + 1 < doc.len() && model.has_bigram(doc[i].as_ref(), doc[i + 1].as_ref()) {
                    units.push(vec![doc[i].as_ref(), doc[i + 1].as_ref()]);
                    i += 2;
                } else {
                    units.push(vec![doc[i].as_ref()]);
                    i += 1;
                }
            }
            units
        })
        .collect();
    for (triple, score) in score_pairs(&merged_docs, min_count, threshold, 3) {
        model.trigrams.insert(
            (triple[0].to_string(), triple[1].to_string(), triple[2].to_string()),
            score,
        );
    }
    Ok(model)
}

impl PhraseModel {
    pub fn empty() -> Self {
        PhraseModel {
            bigrams: HashMap::new(),
            trigrams: HashMap::new(),
            threshold: DEFAULT_PHRASE_THRESHOLD,
            min_count: DEFAULT_PHRASE_MIN_COUNT,
        }
    }

    fn has_bigram(&self, a: &str, b: &str) -> bool {
        // HashMap<(String, String), _> cannot be queried by (&str, &str).
        self.bigrams.contains_key(&(a.to_string(), b.to_string()))
    }

    fn has_trigram(&self, a: &str, b: &str, c: &str) -> bool {
        self.trigrams
            .contains_key(&(a.to_string(), b.to_string(), c.to_string()))
    }

    /// Merges retained phrases with `_`, greedily left to right, trying the
    /// trigram before the bigram at each position.
    pub fn apply<S: AsRef<str>>(&self, tokens: &[S]) -> Vec<String> {
        let mut out = Vec::with_capacity(tokens.len());
        let mut i = 0;
        let t = |k: usize| tokens[k].as_ref();
        while i < tokens.len() {
            if i + 2 < tokens.len() && self.has_trigram(t(i), t(i + 1), t(i + 2)) {
                out.push(format!(
                    "{}{PHRASE_JOINER}{}{PHRASE_JOINER}{}",
                    t(i),
                    t(i + 1),
                    t(i + 2)
                ));
                i += 3;
            } else if i + 1 < tokens.len() && self.has_bigram(t(i), t(i + 1)) {
                out.push(format!("{}{PHRASE_JOINER}{}", t(i), t(i + 1)));
                i += 2;
            } else {
                out.push(t(i).to_string());
                i += 1;
            }
        }
        out
    }
}

pub fn apply_phrases<S: AsRef<str>>(model: &PhraseModel, tokens: &[S]) -> Vec<String> {
    model.apply(tokens)
}

pub fn bundled_stopwords() -> HashSet<String> {
    io::list_lines(BUNDLED_STOPWORDS).map(str::to_string).collect()
}

pub fn load_stopwords(path: &Path) -> Result<HashSet<String>> {
    Ok(io::list_lines(&io::read_to_string(path)?)
        .map(|w| w.to_lowercase())
        .collect())
}

fn is_vowel(word: &[u8], i: usize) -> bool {
    match word[i] {
        b'a' | b'e' | b'i' | b'o' | b'u' => true,
        b'y' => i > 0 && !is_vowel(word, i - 1),
        _ => false,
    }
}

/// Number of vowel-consonant sequences in the stem.
fn measure(word: &[u8]) -> usize {
    let mut m = 0;
    let mut prev_vowel = false;
    for i in 0..word.len() {
        let v = is_vowel(word, i);
        if prev_vowel && !v {
            m += 1;
        }
        prev_vowel = v;
    }
    m
}

fn ends_cvc(word: &[u8]) -> bool {
    let n = word.len();
    n >= 3
        && !is_vowel(word, n - 3)
        && is_vowel(word, n - 2)
        && !is_vowel(word, n - 1)
        && !matches!(word[n - 1], b'w' | b'x' | b'y')
}

fn has_vowel(word: &[u8]) -> bool {
    (0..word.len()).any(|i| is_vowel(word, i))
}

/// Rule and exception-table lemmatizer.
#[derive(Debug, Clone)]
pub struct Lemmatizer {
    exceptions: HashMap<String, String>,
}

impl Default for Lemmatizer {
    fn default() -> Self {
        Lemmatizer::from_table(BUNDLED_LEMMA_EXCEPTIONS)
    }
}

impl Lemmatizer {
    /// Parses a `surface<TAB>lemma` table.
    pub fn from_table(text: &str) -> Self {
        let exceptions = io::list_lines(text)
            .filter_map(|line| {
                let (surface, lemma) = line.split_once('\t')?;
                Some((surface.trim().to_lowercase(), lemma.trim().to_lowercase()))
            })
            .collect();
        Lemmatizer { exceptions }
    }

    pub fn load(path: &Path) -> Result<Self> {
        Ok(Lemmatizer::from_table(&io::read_to_string(path)?))
    }

    /// Adds the entries of another table, overriding bundled ones.
    pub fn extend_from_table(&mut self, text: &str) {
        self.exceptions.extend(Lemmatizer::from_table(text).exceptions);
    }

    fn plural(word: &str) -> Option<String> {
        let n = word.len();
        if let Some(stem) = word.strip_suffix("sses") {
            return Some(format!("{stem}ss"));
        }
        if n > 4 {
            if let Some(stem) = word.strip_suffix("ies") {
                return Some(format!("{stem}y"));
            }
        }
        for suffix in ["xes", "ches", "shes"] {
            if let Some(stem) = word.strip_suffix(suffix) {
                return Some(format!("{stem}{}", &suffix[..suffix.len() - 2]));
            }
        }
        if n > 3 && word.ends_with('s') && !word.ends_with("ss") && !word.ends_with("us") && !word.ends_with("is") {
            return Some(word[..n - 1].to_string());
        }
        None
    }

    /// Repairs a stem left behind by dropping "-ed" / "-ing".
    fn repair(stem: &str) -> String {
        let b = stem.as_bytes();
        let n = b.len();
        if n >= 2 && b[n - 1] == b[n - 2] && !is_vowel(b, n - 1) && !matches!(b[n - 1], b'l' | b's' | b'z') {
            return stem[..n - 1].to_string();
        }
        if measure(b) == 1 && ends_cvc(b) {
            return format!("{stem}e");
        }
        if stem.ends_with('s') && Self::plural(stem).is_some() {
            return format!("{stem}e");
        }
        stem.to_string()
    }

    fn verbal(word: &str) -> Option<String> {
        if word.len() > 4 {
            if let Some(stem) = word.strip_suffix("ied") {
                return Some(format!("{stem}y"));
            }
        }
        if word.ends_with("eed") {
            return None;
        }
        let stem = word.strip_suffix("ed").or_else(|| word.strip_suffix("ing"))?;
        (stem.len() >= 2 && has_vowel(stem.as_bytes())).then(|| Self::repair(stem))
    }

    fn apply_rules(&self, token: &str) -> String {
        if let Some(lemma) = self.exceptions.get(token) {
            return lemma.clone();
        }
        if !token.bytes().all(|b| b.is_ascii_lowercase()) {
            return token.to_string();
        }
        Self::plural(token)
            .or_else(|| Self::verbal(token))
            .unwrap_or_else(|| token.to_string())
    }

    /// Lemma of a single token. Tokens with digits, phrase joiners or other
    /// non-letters pass through unchanged. A rule result that the rules
    /// would change again is rejected in favour of the input, which keeps
    /// the mapping idempotent.
    pub fn lemmatize(&self, token: &str) -> String {
        let lemma = self.apply_rules(token);
        if self.apply_rules(&lemma) == lemma {
            lemma
        } else {
            token.to_string()
        }
    }
}

/// Drops stopwords, lemmatizes, then drops lemmas shorter than three
/// characters unless they contain a digit.
pub fn lemmatize_and_filter<S: AsRef<str>>(
    tokens: &[S],
    stopwords: &HashSet<String>,
    lemmatizer: &Lemmatizer,
) -> Vec<String> {
    tokens
        .iter()
        .map(AsRef::as_ref)
        .filter(|t| !stopwords.contains(*t))
        .map(|t| lemmatizer.lemmatize(t))
        .filter(|l| l.chars().count() >= 3 || l.chars().any(|c| c.is_ascii_digit()))
        .collect()
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(from = "Vec<String>", into = "Vec<String>")]
pub struct Vocab {
    tokens: Vec<String>,
    index: HashMap<String, usize>,
}

impl From<Vec<String>> for Vocab {
    fn from(tokens: Vec<String>) -> Self {
        Vocab::from_tokens(tokens)
    }
}

impl From<Vocab> for Vec<String> {
    fn from(v: Vocab) -> Self {
        v.tokens
    }
}

impl Vocab {
    pub fn from_tokens(mut tokens: Vec<String>) -> Self {
        tokens.sort();
        tokens.dedup();
        let index = tokens.iter().enumerate().map(|(i, t)| (t.clone(), i)).collect();
        Vocab { tokens, index }
    }

    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    pub fn tokens(&self) -> &[String] {
        &self.tokens
    }

    pub fn index_of(&self, token: &str) -> Option<usize> {
        self.index.get(token).copied()
    }

    pub fn token(&self, index: usize) -> &str {
        &self.tokens[index]
    }

    /// Bag of words restricted to this vocabulary.
    pub fn bag<S: AsRef<str>>(&self, doc_id: &str, tokens: &[S]) -> BagOfWords {
        let mut counts = BTreeMap::new();
        for t in tokens {
            if let Some(i) = self.index_of(t.as_ref()) {
                *counts.entry(i).or_insert(0u32) += 1;
            }
        }
        BagOfWords {
            doc_id: doc_id.to_string(),
            counts,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct BagOfWords {
    pub doc_id: String,
    pub counts: BTreeMap<usize, u32>,
}

impl BagOfWords {
    pub fn total(&self) -> u64 {
        self.counts.values().map(|&c| c as u64).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.counts.is_empty()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VocabConfig {
    /// Minimum number of documents a token must appear in.
    pub min_df: usize,
    /// Maximum fraction of documents a token may appear in.
    pub max_df: f64,
}

impl Default for VocabConfig {
    fn default() -> Self {
        VocabConfig { min_df: 2, max_df: 0.6 }
    }
}

#[derive(Debug, Clone, Default)]
pub struct BowCorpus {
    pub vocab: Vocab,
    pub bags: Vec<BagOfWords>,
    /// Documents whose bag came out empty.
    pub empty: Vec<String>,
}

pub fn build_vocab_and_bows<S: AsRef<str>>(docs: &[(String, Vec<S>)], config: VocabConfig) -> BowCorpus {
    let mut df: HashMap<&str, usize> = HashMap::new();
    for (_, tokens) in docs {
        let distinct: HashSet<&str> = tokens.iter().map(AsRef::as_ref).collect();
        for t in distinct {
            *df.entry(t).or_default() += 1;
        }
    }
    let n = docs.len() as f64;
    let vocab = Vocab::from_tokens(
        df.into_iter()
            .filter(|&(_, d)| d >= config.min_df && d as f64 <= config.max_df * n)
            .map(|(t, _)| t.to_string())
            .collect(),
    );
    let bags: Vec<BagOfWords> = docs.iter().map(|(id, toks)| vocab.bag(id, toks)).collect();
    let empty = bags.iter().filter(|b| b.is_empty()).map(|b| b.doc_id.clone()).collect();
    BowCorpus { vocab, bags, empty }
}

/// Stopwords, lemmatizer and phrase model bundled for topic preprocessing.
#[derive(Debug, Clone)]
pub struct TextPreprocessor {
    pub stopwords: HashSet<String>,
    pub lemmatizer: Lemmatizer,
}

impl Default for TextPreprocessor {
    fn default() -> Self {
        TextPreprocessor {
            stopwords: bundled_stopwords(),
            lemmatizer: Lemmatizer::default(),
        }
    }
}

impl TextPreprocessor {
    /// Phrase merging followed by stopword removal and lemmatization.
    pub fn process(&self, phrases: &PhraseModel, tokens: &[String]) -> Vec<String> {
        lemmatize_and_filter(&phrases.apply(tokens), &self.stopwords, &self.lemmatizer)
    }
}
