//! Assay-value extraction from abstracts.
//!
//! Abstracts mentioning EC50, IC50 or CC50 are split into sentences and
//! matched against the drug dictionary. A value is attached to each keyword
//! hit by one of two rules:
//!
//! * rule 1: the numeric token closest to the keyword (ties go right);
//! * rule 2: when the sentence has no number, the closest noun chunk.
//!
//! A finding is *direct* when the drug and the keyword share a sentence and
//! *indirect* when the drug comes from the nearest other sentence.

use std::cmp::Ordering;
use std::collections::{HashMap, HashSet};
use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::corpus::Document;
use crate::dictionary::{DrugDictionary, TermMatch};
use crate::error::{Error, Result};
use crate::io::{self, Table};
use crate::preprocess::{split_sentences, tokenize, Sentence};

const BUNDLED_CHUNK_LEXICON: &str = include_str!("../data/chunk_lexicon.tsv");

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub enum AssayKeyword {
    #[serde(rename = "EC50")]
    Ec50,
    #[serde(rename = "IC50")]
    Ic50,
    #[serde(rename = "CC50")]
    Cc50,
}

impl AssayKeyword {
    pub const ALL: [AssayKeyword; 3] = [AssayKeyword::Ec50, AssayKeyword::Ic50, AssayKeyword::Cc50];

    pub fn as_str(self) -> &'static str {
        match self {
            AssayKeyword::Ec50 => "EC50",
            AssayKeyword::Ic50 => "IC50",
            AssayKeyword::Cc50 => "CC50",
        }
    }

    fn token(self) -> &'static str {
        match self {
            AssayKeyword::Ec50 => "ec50",
            AssayKeyword::Ic50 => "ic50",
            AssayKeyword::Cc50 => "cc50",
        }
    }

    /// Whole-token match that also accepts a plural `s` or any
    /// non-alphanumeric continuation ("ic50s", "ic50=1.2", "ic50/ec50").
    pub fn matches_token(self, token: &str) -> bool {
        match token.strip_prefix(self.token()) {
            Some("") | Some("s") => true,
            Some(rest) => rest.chars().next().is_some_and(|c| !c.is_alphanumeric()),
            None => false,
        }
    }

    pub fn find_in(keywords: &[AssayKeyword], token: &str) -> Option<AssayKeyword> {
        keywords.iter().copied().find(|k| k.matches_token(token))
    }
}

impl fmt::Display for AssayKeyword {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for AssayKeyword {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_lowercase().as_str() {
            "ec50" => Ok(AssayKeyword::Ec50),
            "ic50" => Ok(AssayKeyword::Ic50),
            "cc50" => Ok(AssayKeyword::Cc50),
            other => Err(Error::Config(format!("unknown assay keyword '{other}'"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct AssayKeywordHit {
    pub keyword: AssayKeyword,
    pub sentence_index: usize,
    pub token_index: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Comparator {
    Lt,
    Gt,
    Le,
    Ge,
    Approx,
}

impl Comparator {
    pub fn symbol(self) -> &'static str {
        match self {
            Comparator::Lt => "<",
            Comparator::Gt => ">",
            Comparator::Le => "≤",
            Comparator::Ge => "≥",
            Comparator::Approx => "≈",
        }
    }
}

/// Micromolar conversion for a recognized unit: `None` when the unit is a
/// mass concentration that needs a molecular weight.
fn unit_scale(unit: &str) -> Option<Option<UnitScale>> {
    let scale = match unit {
        "um" | "µm" | "μm" | "micromolar" | "micro" => Some(UnitScale::Micro),
        "nm" | "nanomolar" | "nano" => Some(UnitScale::Nano),
        "mm" | "millimolar" => Some(UnitScale::Milli),
        "ng/ml" | "ug/ml" | "µg/ml" | "μg/ml" | "mg/ml" => None,
        _ => return None,
    };
    Some(scale)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum UnitScale {
    Nano,
    Micro,
    Milli,
}

impl UnitScale {
    fn to_micromolar(self, value: f64) -> f64 {
        match self {
            UnitScale::Nano => value / 1000.0,
            UnitScale::Micro => value,
            UnitScale::Milli => value * 1000.0,
        }
    }
}

pub fn is_unit(token: &str) -> bool {
    unit_scale(token).is_some()
}

/// Value in micromolar when the unit is a recognized molar unit.
pub fn to_micromolar(value: f64, unit: Option<&str>) -> Option<f64> {
    let scale = unit_scale(unit?)??;
    Some(scale.to_micromolar(value))
}

#[derive(Debug, Clone, PartialEq)]
pub struct NumericToken {
    pub value: f64,
    /// The number as written, comparator included, "key=" prefix removed.
    pub raw: String,
    pub comparator: Option<Comparator>,
    pub attached_unit: Option<String>,
}

fn take_digits(s: &str) -> usize {
    s.bytes().take_while(u8::is_ascii_digit).count()
}

/// Length of the numeric literal at the start of `s`: digits with an
/// optional fraction (or thousands groups) and exponent.
fn number_len(s: &str) -> usize {
    let b = s.as_bytes();
    let mut i = take_digits(s);
    // 1,000 / 12,500,000
    if (1..=3).contains(&i) {
        let mut j = i;
        while b.get(j) == Some(&b',') && take_digits(&s[j + 1..]) == 3 && !b.get(j + 4).is_some_and(u8::is_ascii_digit)
        {
            j += 4;
        }
        i = j;
    }
    if b.get(i) == Some(&b'.') {
        let frac = take_digits(&s[i + 1..]);
        if frac > 0 {
            i += 1 + frac;
        } else if i == 0 {
            return 0;
        }
    }
    if i == 0 {
        return 0;
    }
    if matches!(b.get(i), Some(b'e') | Some(b'E')) {
        let mut j = i + 1;
        if matches!(b.get(j), Some(b'+') | Some(b'-')) {
            j += 1;
        }
        let exp = take_digits(&s[j..]);
        if exp > 0 {
            i = j + exp;
        }
    }
    i
}

/// Parses a numeric token: optional comparator, optional sign, a decimal
/// or scientific literal, and optionally an attached unit ("10nm"). A
/// "key=value" token yields its right-hand side.
pub fn parse_numeric(token: &str) -> Option<NumericToken> {
    let mut s = token;
    if let Some((left, right)) = token.rsplit_once('=') {
        if !left.is_empty() && !left.ends_with(['<', '>']) {
            s = right;
        }
    }
    let start = s;
    let mut comparator = None;
    loop {
        let c = s.chars().next()?;
        let next = match c {
            '<' => Some(Comparator::Lt),
            '>' => Some(Comparator::Gt),
            '≤' => Some(Comparator::Le),
            '≥' => Some(Comparator::Ge),
            '≈' | '~' => Some(Comparator::Approx),
            '=' | '±' => None,
            _ => break,
        };
        comparator = match (comparator, next, c) {
            (Some(Comparator::Lt), None, '=') => Some(Comparator::Le),
            (Some(Comparator::Gt), None, '=') => Some(Comparator::Ge),
            (prev, None, _) => prev,
            (_, n, _) => n,
        };
        s = &s[c.len_utf8()..];
    }
    let (negative, body) = if let Some(rest) = s.strip_prefix('-') {
        (true, rest)
    } else if let Some(rest) = s.strip_prefix('−') {
        (true, rest)
    } else {
        (false, s.strip_prefix('+').unwrap_or(s))
    };
    let len = number_len(body);
    if len == 0 {
        return None;
    }
    let literal = body[..len].replace(',', "");
    let mut value: f64 = literal.parse().ok()?;
    if negative {
        value = -value;
    }
    let rest = &body[len..];
    let attached_unit = if rest.is_empty() {
        None
    } else if is_unit(rest) {
        Some(rest.to_string())
    } else {
        return None;
    };
    let raw_end = start.len() - rest.len();
    Some(NumericToken {
        value,
        raw: start[..raw_end].to_string(),
        comparator,
        attached_unit,
    })
}

#[derive(Debug, Clone, PartialEq)]
pub struct Rule1Hit {
    pub value: f64,
    pub value_raw: String,
    pub comparator: Option<Comparator>,
    pub value_index: usize,
    pub unit: Option<String>,
}

/// Prefers the smaller distance, then the candidate to the right.
fn closer(a: (usize, bool), b: (usize, bool)) -> Ordering {
    a.0.cmp(&b.0).then(b.1.cmp(&a.1))
}

/// Rule 1: the numeric token nearest to the keyword, ties broken toward
/// the right. The unit is the attached unit or the first unit token within
/// two tokens after the value.
pub fn rule1_extract<S: AsRef<str>>(tokens: &[S], keyword_index: usize) -> Option<Rule1Hit> {
    let (index, number) = tokens
        .iter()
        .enumerate()
        .filter_map(|(i, t)| parse_numeric(t.as_ref()).map(|n| (i, n)))
        .min_by(|(i, _), (j, _)| {
            closer(
                (i.abs_diff(keyword_index), *i > keyword_index),
                (j.abs_diff(keyword_index), *j > keyword_index),
            )
        })?;
    let unit = number.attached_unit.clone().or_else(|| {
        tokens
            .iter()
            .skip(index + 1)
            .take(2)
            .map(AsRef::as_ref)
            .find(|t| is_unit(t))
            .map(str::to_string)
    });
    Some(Rule1Hit {
        value: number.value,
        value_raw: number.raw,
        comparator: number.comparator,
        value_index: index,
        unit,
    })
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct NounChunk {
    pub start: usize,
    /// Exclusive.
    pub end: usize,
    pub head_index: usize,
    pub text: String,
}

impl NounChunk {
    pub fn contains(&self, index: usize) -> bool {
        (self.start..self.end).contains(&index)
    }

    /// Token gap to `index`; zero when the chunk contains it.
    pub fn gap(&self, index: usize) -> usize {
        if index < self.start {
            self.start - index
        } else if index >= self.end {
            index - (self.end - 1)
        } else {
            0
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum WordClass {
    Determiner,
    Modifier,
    Nominal,
    Other,
}

/// Lexicon and suffix-heuristic noun chunker.
#[derive(Debug, Clone)]
pub struct NounChunker {
    lexicon: HashMap<String, WordClass>,
}

impl Default for NounChunker {
    fn default() -> Self {
        NounChunker::from_lexicon(BUNDLED_CHUNK_LEXICON)
    }
}

const MODIFIER_SUFFIXES: &[&str] = &["ous", "ive", "ible", "able", "ful", "less", "ary", "ical", "ic"];

impl NounChunker {
    /// Parses `word<TAB>class` lines with class one of det, mod, other.
    pub fn from_lexicon(text: &str) -> Self {
        let lexicon = io::list_lines(text)
            .filter_map(|line| {
                let (word, class) = line.split_once('\t')?;
                let class = match class.trim() {
                    "det" => WordClass::Determiner,
                    "mod" => WordClass::Modifier,
                    "other" => WordClass::Other,
                    "nom" => WordClass::Nominal,
                    _ => return None,
                };
                Some((word.trim().to_string(), class))
            })
            .collect();
        NounChunker { lexicon }
    }

    fn classify(&self, token: &str, is_drug: bool) -> WordClass {
        if is_drug || token.chars().any(|c| c.is_ascii_digit()) || is_unit(token) {
            return WordClass::Nominal;
        }
        if let Some(class) = self.lexicon.get(token) {
            return *class;
        }
        let n = token.chars().count();
        if n > 4 && token.ends_with("ly") {
            return WordClass::Other;
        }
        if n > 4 && MODIFIER_SUFFIXES.iter().any(|s| token.ends_with(s)) {
            return WordClass::Modifier;
        }
        if n > 4 && (token.ends_with("ed") || token.ends_with("ing")) {
            return WordClass::Modifier;
        }
        WordClass::Nominal
    }

    /// Maximal runs of `[determiner] modifier* nominal+`. Tokens covered by
    /// a dictionary match count as nominal.
    pub fn chunks<S: AsRef<str>>(&self, tokens: &[S], drugs: &[TermMatch]) -> Vec<NounChunk> {
        let in_drug = |i: usize| drugs.iter().any(|m| (m.token_start..m.token_end).contains(&i));
        let mut classes: Vec<WordClass> = tokens
            .iter()
            .enumerate()
            .map(|(i, t)| self.classify(t.as_ref(), in_drug(i)))
            .collect();
        // A participle right after a nominal is read as the verb.
        for i in 1..tokens.len() {
            let t = tokens[i].as_ref();
            if classes[i] == WordClass::Modifier
                && classes[i - 1] == WordClass::Nominal
                && t.ends_with("ed")
                && !self.lexicon.contains_key(t)
            {
                classes[i] = WordClass::Other;
            }
        }
        let mut out = Vec::new();
        let mut i = 0;
        while i < tokens.len() {
            let mut j = i;
            if classes[j] == WordClass::Determiner {
                j += 1;
            }
            while j < tokens.len() && classes[j] == WordClass::Modifier {
                j += 1;
            }
            let mut k = j;
            while k < tokens.len() && classes[k] == WordClass::Nominal {
                k += 1;
            }
            if k > j {
                out.push(NounChunk {
                    start: i,
                    end: k,
                    head_index: k - 1,
                    text: tokens[i..k].iter().map(AsRef::as_ref).collect::<Vec<_>>().join(" "),
                });
                i = k;
            } else {
                i += 1;
            }
        }
        out
    }
}

/// Rule 2: the chunk nearest to the keyword by token gap, ignoring chunks
/// that contain the keyword; ties broken toward the right.
pub fn rule2_extract(chunks: &[NounChunk], keyword_index: usize) -> Option<&NounChunk> {
    chunks.iter().filter(|c| !c.contains(keyword_index)).min_by(|a, b| {
        closer(
            (a.gap(keyword_index), a.start > keyword_index),
            (b.gap(keyword_index), b.start > keyword_index),
        )
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Correlation {
    Direct,
    Indirect,
}

impl Correlation {
    pub fn as_str(self) -> &'static str {
        match self {
            Correlation::Direct => "direct",
            Correlation::Indirect => "indirect",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Rule {
    Rule1,
    Rule2,
}

impl Rule {
    pub fn as_str(self) -> &'static str {
        match self {
            Rule::Rule1 => "rule1",
            Rule::Rule2 => "rule2",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AssayFinding {
    pub doc_id: String,
    pub doi: Option<String>,
    pub drug_canonical: String,
    pub drug_surface: String,
    pub keyword: AssayKeyword,
    pub value: Option<f64>,
    pub value_raw: Option<String>,
    pub comparator: Option<Comparator>,
    pub unit: Option<String>,
    pub value_um: Option<f64>,
    /// Rule 2 output.
    pub chunk_text: Option<String>,
    pub correlation: Correlation,
    /// The sentence holding the keyword (and, for direct findings, the drug).
    pub evidence_sentence: String,
    pub sentence_index: usize,
    pub keyword_index: usize,
    /// Token index of the value (rule 1) or chunk head (rule 2).
    pub value_index: usize,
    /// Sentence the drug was taken from; differs for indirect findings.
    pub drug_sentence_index: usize,
    pub rule_used: Rule,
}

enum Extracted {
    Number(Rule1Hit),
    Chunk(NounChunk),
}

/// Dictionary-driven assay-value extractor.
#[derive(Debug, Clone)]
pub struct Extractor<'d> {
    pub dictionary: &'d DrugDictionary,
    pub keywords: Vec<AssayKeyword>,
    pub chunker: NounChunker,
}

struct SentenceInfo {
    sentence: Sentence,
    drugs: Vec<TermMatch>,
    hits: Vec<(usize, AssayKeyword)>,
}

impl<'d> Extractor<'d> {
    pub fn new(dictionary: &'d DrugDictionary) -> Self {
        Extractor {
            dictionary,
            keywords: AssayKeyword::ALL.to_vec(),
            chunker: NounChunker::default(),
        }
    }

    pub fn with_keywords(mut self, keywords: Vec<AssayKeyword>) -> Self {
        self.keywords = keywords;
        self
    }

    pub fn mentions_keyword(&self, text_norm: &str) -> bool {
        tokenize(text_norm)
            .iter()
            .any(|t| AssayKeyword::find_in(&self.keywords, t).is_some())
    }

    /// Documents whose normalized abstract contains a keyword token.
    pub fn filter_assay_abstracts<'a>(&self, docs: &'a [Document]) -> Vec<&'a Document> {
        docs.iter()
            .filter(|d| self.mentions_keyword(&d.abstract_norm))
            .collect()
    }

    fn extract_value(&self, info: &SentenceInfo, keyword_index: usize) -> Option<Extracted> {
        if let Some(hit) = rule1_extract(&info.sentence.tokens, keyword_index) {
            return Some(Extracted::Number(hit));
        }
        let chunks = self.chunker.chunks(&info.sentence.tokens, &info.drugs);
        rule2_extract(&chunks, keyword_index).cloned().map(Extracted::Chunk)
    }

    pub fn extract_findings(&self, doc: &Document) -> Vec<AssayFinding> {
        let infos: Vec<SentenceInfo> = split_sentences(&doc.abstract_norm)
            .into_iter()
            .map(|sentence| {
                let drugs = self.dictionary.match_terms(&sentence.tokens);
                let hits = sentence
                    .tokens
                    .iter()
                    .enumerate()
                    .filter_map(|(i, t)| AssayKeyword::find_in(&self.keywords, t).map(|k| (i, k)))
                    .filter(|(i, _)| !drugs.iter().any(|m| (m.token_start..m.token_end).contains(i)))
                    .collect();
                SentenceInfo { sentence, drugs, hits }
            })
            .collect();

        let mut findings = Vec::new();
        let mut seen: HashSet<(String, AssayKeyword, String)> = HashSet::new();
        for (si, info) in infos.iter().enumerate() {
            for &(ki, keyword) in &info.hits {
                let (drug, drug_si, correlation) = if info.drugs.is_empty() {
                    let nearest = infos
                        .iter()
                        .enumerate()
                        .filter(|(j, other)| *j != si && !other.drugs.is_empty())
                        .min_by_key(|(j, _)| (j.abs_diff(si), *j));
                    match nearest {
                        Some((j, other)) => (&other.drugs[0], j, Correlation::Indirect),
                        None => continue,
                    }
                } else {
                    let drug = info
                        .drugs
                        .iter()
                        .min_by_key(|m| (span_gap(m, ki), m.token_start))
                        .expect("non-empty");
                    (drug, si, Correlation::Direct)
                };
                let Some(extracted) = self.extract_value(info, ki) else {
                    continue;
                };
                let mut finding = AssayFinding {
                    doc_id: doc.doc_id.clone(),
                    doi: doc.doi.clone(),
                    drug_canonical: drug.canonical.clone(),
                    drug_surface: drug.surface.clone(),
                    keyword,
                    value: None,
                    value_raw: None,
                    comparator: None,
                    unit: None,
                    value_um: None,
                    chunk_text: None,
                    correlation,
                    evidence_sentence: info.sentence.text.clone(),
                    sentence_index: si,
                    keyword_index: ki,
                    value_index: 0,
                    drug_sentence_index: drug_si,
                    rule_used: Rule::Rule1,
                };
                let value_key = match extracted {
                    Extracted::Number(hit) => {
                        finding.value_um = to_micromolar(hit.value, hit.unit.as_deref());
                        finding.value = Some(hit.value);
                        finding.value_raw = Some(hit.value_raw);
                        finding.comparator = hit.comparator;
                        finding.unit = hit.unit;
                        finding.value_index = hit.value_index;
                        format!("v:{}", hit.value.to_bits())
                    }
                    Extracted::Chunk(chunk) => {
                        finding.rule_used = Rule::Rule2;
                        finding.value_index = chunk.head_index;
                        let key = format!("c:{}", chunk.text);
                        finding.chunk_text = Some(chunk.text);
                        key
                    }
                };
                if seen.insert((finding.drug_canonical.clone(), keyword, value_key)) {
                    findings.push(finding);
                }
            }
        }
        findings
    }

    /// Findings for many documents, in input order. Documents are processed
    /// in parallel.
    pub fn extract_all(&self, docs: &[&Document]) -> Vec<AssayFinding> {
        use rayon::prelude::*;
        docs.par_iter()
            .map(|d| self.extract_findings(d))
            .collect::<Vec<_>>()
            .into_iter()
            .flatten()
            .collect()
    }
}

fn span_gap(m: &TermMatch, index: usize) -> usize {
    if index < m.token_start {
        m.token_start - index
    } else if index >= m.token_end {
        index + 1 - m.token_end
    } else {
        0
    }
}

/// One row of the summary table (drug, assay, value, unit).
#[derive(Debug, Clone, PartialEq)]
pub struct AssayRow {
    pub drug: String,
    pub assay: AssayKeyword,
    pub value: Option<f64>,
    pub value_raw: String,
    pub unit: Option<String>,
    pub value_um: Option<f64>,
}

/// Sorts findings ascending by value normalized to micromolar. Values in
/// unrecognized units follow, then chunk-only findings. The sort is stable.
pub fn tabulate_findings(findings: &[AssayFinding]) -> Vec<AssayRow> {
    let mut rows: Vec<AssayRow> = findings
        .iter()
        .map(|f| AssayRow {
            drug: f.drug_canonical.clone(),
            assay: f.keyword,
            value: f.value,
            value_raw: f.value_raw.clone().or_else(|| f.chunk_text.clone()).unwrap_or_default(),
            unit: f.unit.clone(),
            value_um: f.value_um,
        })
        .collect();
    let key = |r: &AssayRow| match (r.value_um, r.value) {
        (Some(um), _) => (0, um),
        (None, Some(v)) => (1, v),
        (None, None) => (2, 0.0),
    };
    rows.sort_by(|a, b| {
        let (ca, va) = key(a);
        let (cb, vb) = key(b);
        ca.cmp(&cb).then(va.total_cmp(&vb))
    });
    rows
}

fn fmt_opt_f64(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

pub fn summary_table(findings: &[AssayFinding]) -> Table {
    let mut table = Table::new(["drug", "assay", "value", "unit", "value_um"]);
    for row in tabulate_findings(findings) {
        table.push(vec![
            row.drug,
            row.assay.to_string(),
            row.value_raw,
            row.unit.unwrap_or_default(),
            fmt_opt_f64(row.value_um),
        ]);
    }
    table
}

pub const FINDINGS_COLUMNS: [&str; 11] = [
    "doc_id",
    "doi",
    "drug",
    "assay",
    "value_raw",
    "unit_raw",
    "value_um",
    "correlation",
    "rule",
    "evidence_sentence",
    "chunk_text",
];

/// Full findings table, ordered by document id then position in the text.
pub fn findings_table(findings: &[AssayFinding]) -> Table {
    let mut sorted: Vec<&AssayFinding> = findings.iter().collect();
    sorted.sort_by(|a, b| {
        (&a.doc_id, a.sentence_index, a.keyword_index).cmp(&(&b.doc_id, b.sentence_index, b.keyword_index))
    });
    let mut table = Table::new(FINDINGS_COLUMNS);
    for f in sorted {
        table.push(vec![
            f.doc_id.clone(),
            f.doi.clone().unwrap_or_default(),
            f.drug_canonical.clone(),
            f.keyword.to_string(),
            f.value_raw.clone().unwrap_or_default(),
            f.unit.clone().unwrap_or_default(),
            fmt_opt_f64(f.value_um),
            f.correlation.as_str().into(),
            f.rule_used.as_str().into(),
            f.evidence_sentence.clone(),
            f.chunk_text.clone().unwrap_or_default(),
        ]);
    }
    table
}
