//! Gold-standard sampling and precision / recall / F1 scoring of assay
//! findings.

use std::collections::{HashMap, HashSet};
use std::path::Path;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::corpus::CorpusStore;
use crate::error::{Error, Result};
use crate::io::{self, Table};
use crate::preclinical::{to_micromolar, AssayFinding, AssayKeyword};

pub const VALUE_TOLERANCE: f64 = 1e-6;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldItem {
    pub drug: String,
    pub assay: AssayKeyword,
    #[serde(default)]
    pub value: Option<f64>,
    #[serde(default)]
    pub unit: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GoldLabel {
    pub doc_id: String,
    pub items: Vec<GoldItem>,
}

pub fn load_gold(path: &Path) -> Result<Vec<GoldLabel>> {
    let labels: Vec<GoldLabel> = io::read_jsonl(path)?;
    for label in &labels {
        for (i, a) in label.items.iter().enumerate() {
            if label.items[..i].contains(a) {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    message: format!("duplicate gold item for {} in {}", a.drug, label.doc_id),
                });
            }
        }
    }
    Ok(labels)
}

/// Uniform sample of `n` document ids without replacement, returned in
/// store order.
pub fn sample_docs(store: &CorpusStore, n: usize, seed: u64) -> Result<Vec<String>> {
    if n > store.len() {
        return Err(Error::SampleTooLarge {
            requested: n,
            available: store.len(),
        });
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut picked = rand::seq::index::sample(&mut rng, store.len(), n).into_vec();
    picked.sort_unstable();
    Ok(picked.into_iter().map(|i| store.documents[i].doc_id.clone()).collect())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Metrics {
    pub n_correct: usize,
    pub n_extracted: usize,
    pub n_possible: usize,
    pub precision: f64,
    pub recall: f64,
    pub f1: f64,
}

fn ratio(num: usize, den: usize) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

impl Metrics {
    pub fn from_counts(n_correct: usize, n_extracted: usize, n_possible: usize) -> Self {
        let precision = ratio(n_correct, n_extracted);
        let recall = ratio(n_correct, n_possible);
        Metrics {
            n_correct,
            n_extracted,
            n_possible,
            precision,
            recall,
            f1: f1(precision, recall),
        }
    }
}

pub fn f1(precision: f64, recall: f64) -> f64 {
    if precision + recall == 0.0 {
        0.0
    } else {
        2.0 * precision * recall / (precision + recall)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Score {
    /// Drug, assay and (when gold has one) value must all agree.
    pub strict: Metrics,
    /// Drug name only.
    pub drug_only: Metrics,
}

fn norm_unit(unit: &str) -> String {
    unit.trim().to_lowercase().replace(['µ', 'μ'], "u")
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= VALUE_TOLERANCE * a.abs().max(b.abs())
}

fn norm_drug(name: &str) -> String {
    name.trim().to_lowercase()
}

/// Whether a prediction satisfies a gold item on drug, assay and value.
/// Values in convertible units are compared in micromolar; other units
/// must agree as strings.
pub fn matches_gold(pred: &AssayFinding, gold: &GoldItem) -> bool {
    if norm_drug(&pred.drug_canonical) != norm_drug(&gold.drug) || pred.keyword != gold.assay {
        return false;
    }
    let Some(gv) = gold.value else {
        return true;
    };
    let Some(pv) = pred.value else {
        return false;
    };
    let Some(gu) = gold.unit.as_deref() else {
        return close(pv, gv);
    };
    let gu = norm_unit(gu);
    let pu = pred.unit.as_deref().map(norm_unit);
    match (
        to_micromolar(gv, Some(&gu)),
        pu.as_deref().and_then(|u| to_micromolar(pv, Some(u))),
    ) {
        (Some(g), Some(p)) => close(p, g),
        _ => pu.as_deref() == Some(gu.as_str()) && close(pv, gv),
    }
}

fn greedy_count(
    predictions: &[&AssayFinding],
    gold: &HashMap<&str, &GoldLabel>,
    matches: impl Fn(&AssayFinding, &GoldItem) -> bool,
) -> usize {
    let mut used: HashSet<(&str, usize)> = HashSet::new();
    let mut correct = 0;
    for pred in predictions {
        let Some(label) = gold.get(pred.doc_id.as_str()) else {
            continue;
        };
        let hit = label
            .items
            .iter()
            .enumerate()
            .find(|(i, item)| !used.contains(&(label.doc_id.as_str(), *i)) && matches(pred, item));
        if let Some((i, _)) = hit {
            used.insert((label.doc_id.as_str(), i));
            correct += 1;
        }
    }
    correct
}

/// Scores predictions against gold labels. Predictions for documents
/// without a gold label are ignored. Within a document, predictions are
/// matched greedily in text order and each gold item is used at most once.
pub fn score(predictions: &[AssayFinding], gold: &[GoldLabel]) -> Score {
    let by_doc: HashMap<&str, &GoldLabel> = gold.iter().map(|g| (g.doc_id.as_str(), g)).collect();
    let mut preds: Vec<&AssayFinding> = predictions
        .iter()
        .filter(|p| by_doc.contains_key(p.doc_id.as_str()))
        .collect();
    preds.sort_by(|a, b| {
        (&a.doc_id, a.sentence_index, a.keyword_index).cmp(&(&b.doc_id, b.sentence_index, b.keyword_index))
    });
    let n_possible = gold.iter().map(|g| g.items.len()).sum();
    let strict = greedy_count(&preds, &by_doc, matches_gold);
    let loose = greedy_count(&preds, &by_doc, |p, g| {
        norm_drug(&p.drug_canonical) == norm_drug(&g.drug)
    });
    Score {
        strict: Metrics::from_counts(strict, preds.len(), n_possible),
        drug_only: Metrics::from_counts(loose, preds.len(), n_possible),
    }
}

pub fn metrics_table(score: &Score) -> Table {
    let mut table = Table::new([
        "metric",
        "correct",
        "extracted",
        "possible",
        "precision",
        "recall",
        "f1",
    ]);
    for (name, m) in [("strict", score.strict), ("drug_only", score.drug_only)] {
        table.push(vec![
            name.into(),
            m.n_correct.to_string(),
            m.n_extracted.to_string(),
            m.n_possible.to_string(),
            format!("{:.3}", m.precision),
            format!("{:.3}", m.recall),
            format!("{:.3}", m.f1),
        ]);
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::{Document, Source};
    use crate::preclinical::{Correlation, Rule};
    use chrono::NaiveDate;
    use proptest::prelude::*;

    fn pred(
        doc: &str,
        drug: &str,
        kw: AssayKeyword,
        value: Option<f64>,
        unit: Option<&str>,
        pos: usize,
    ) -> AssayFinding {
        AssayFinding {
            doc_id: doc.into(),
            doi: None,
            drug_canonical: drug.into(),
            drug_surface: drug.into(),
            keyword: kw,
            value,
            value_raw: value.map(|v| v.to_string()),
            comparator: None,
            unit: unit.map(str::to_string),
            value_um: value.and_then(|v| to_micromolar(v, unit)),
            chunk_text: None,
            correlation: Correlation::Direct,
            evidence_sentence: String::new(),
            sentence_index: pos,
            keyword_index: 0,
            value_index: 0,
            drug_sentence_index: pos,
            rule_used: Rule::Rule1,
        }
    }

    fn item(drug: &str, kw: AssayKeyword, value: Option<f64>, unit: Option<&str>) -> GoldItem {
        GoldItem {
            drug: drug.into(),
            assay: kw,
            value,
            unit: unit.map(str::to_string),
        }
    }

    use AssayKeyword::*;

    #[test]
    fn eight_of_ten_with_eleven_gold() {
        let gold_items: Vec<GoldItem> = (0..11)
            .map(|i| item(&format!("drug{i}"), Ec50, Some(i as f64 + 1.0), Some("um")))
            .collect();
        let gold = vec![GoldLabel {
            doc_id: "d".into(),
            items: gold_items,
        }];
        let mut preds: Vec<AssayFinding> = (0..8)
            .map(|i| pred("d", &format!("drug{i}"), Ec50, Some(i as f64 + 1.0), Some("um"), i))
            .collect();
        preds.push(pred("d", "drug8", Ic50, Some(9.0), Some("um"), 8));
        preds.push(pred("d", "drug9", Ec50, Some(99.0), Some("um"), 9));
        let s = score(&preds, &gold);
        assert_eq!(
            (s.strict.n_correct, s.strict.n_extracted, s.strict.n_possible),
            (8, 10, 11)
        );
        assert!((s.strict.precision - 0.8).abs() < 1e-12);
        assert!((s.strict.recall - 8.0 / 11.0).abs() < 1e-12);
        assert_eq!(s.drug_only.n_correct, 10);
    }

    #[test]
    fn perfect_and_empty() {
        let gold = vec![GoldLabel {
            doc_id: "d".into(),
            items: vec![item("x", Ic50, None, None)],
        }];
        let s = score(&[pred("d", "x", Ic50, Some(1.0), Some("um"), 0)], &gold);
        assert_eq!((s.strict.precision, s.strict.recall, s.strict.f1), (1.0, 1.0, 1.0));
        let s = score(&[], &[]);
        assert_eq!((s.strict.precision, s.strict.recall, s.strict.f1), (0.0, 0.0, 0.0));
    }

    #[test]
    fn table_consistency_identity() {
        assert!((f1(0.808, 0.689) - 0.743).abs() < 1e-3);
    }

    #[test]
    fn units_and_values() {
        let g = item("nafamostat", Ic50, Some(10.0), Some("nM"));
        assert!(matches_gold(
            &pred("d", "nafamostat", Ic50, Some(0.01), Some("um"), 0),
            &g
        ));
        assert!(matches_gold(
            &pred("d", "Nafamostat", Ic50, Some(10.0), Some("nm"), 0),
            &g
        ));
        assert!(!matches_gold(
            &pred("d", "nafamostat", Ic50, Some(10.0), Some("um"), 0),
            &g
        ));
        assert!(!matches_gold(&pred("d", "nafamostat", Ic50, None, None, 0), &g));
        let mass = item("x", Ec50, Some(2.5), Some("µg/ml"));
        assert!(matches_gold(&pred("d", "x", Ec50, Some(2.5), Some("ug/ml"), 0), &mass));
        assert!(!matches_gold(&pred("d", "x", Ec50, Some(2.5), Some("ng/ml"), 0), &mass));
        let unitless = item("x", Ec50, Some(2.5), None);
        assert!(matches_gold(
            &pred("d", "x", Ec50, Some(2.5000001), Some("um"), 0),
            &unitless
        ));
    }

    #[test]
    fn predictions_outside_gold_are_ignored_and_matching_is_injective() {
        let gold = vec![GoldLabel {
            doc_id: "d".into(),
            items: vec![item("x", Ic50, None, None)],
        }];
        let preds = vec![
            pred("d", "x", Ic50, Some(1.0), None, 0),
            pred("d", "x", Ic50, Some(2.0), None, 1),
            pred("other", "x", Ic50, Some(1.0), None, 0),
        ];
        let s = score(&preds, &gold);
        assert_eq!(
            (s.strict.n_correct, s.strict.n_extracted, s.strict.n_possible),
            (1, 2, 1)
        );
    }

    fn store(n: usize) -> CorpusStore {
        let documents = (0..n)
            .map(|i| Document {
                doc_id: format!("10.1/{i:04}"),
                doi: Some(format!("10.1/{i:04}")),
                title: format!("t{i}"),
                abstract_raw: String::new(),
                abstract_norm: String::new(),
                source: Source::Pubmed,
                date_published: None,
                date_ingested: NaiveDate::from_ymd_opt(2021, 1, 1).unwrap(),
            })
            .collect();
        CorpusStore {
            documents,
            ..CorpusStore::default()
        }
    }

    #[test]
    fn sampling() {
        let s = store(1000);
        let a = sample_docs(&s, 25, 7).unwrap();
        assert_eq!(a.iter().collect::<HashSet<_>>().len(), 25);
        assert_eq!(a, sample_docs(&s, 25, 7).unwrap());
        let small = store(5);
        assert_eq!(sample_docs(&small, 5, 1).unwrap().len(), 5);
        assert!(matches!(
            sample_docs(&small, 6, 1),
            Err(Error::SampleTooLarge {
                requested: 6,
                available: 5
            })
        ));
    }

    #[test]
    fn gold_file() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("gold.jsonl");
        std::fs::write(
            &p,
            "{\"doc_id\":\"d\",\"items\":[{\"drug\":\"x\",\"assay\":\"IC50\",\"value\":0.5,\"unit\":\"um\"}]}\n",
        )
        .unwrap();
        assert_eq!(load_gold(&p).unwrap()[0].items[0].value, Some(0.5));
        std::fs::write(
            &p,
            "{\"doc_id\":\"d\",\"items\":[{\"drug\":\"x\",\"assay\":\"IC50\"},{\"drug\":\"x\",\"assay\":\"IC50\"}]}\n",
        )
        .unwrap();
        assert!(load_gold(&p).is_err());
    }

    proptest! {
        #[test]
        fn metric_invariants(
            gold_spec in proptest::collection::vec((0usize..3, 0usize..4), 0..12),
            pred_spec in proptest::collection::vec((0usize..3, 0usize..4), 0..12),
        ) {
            let drugs = ["a", "b", "c", "d"];
            let mut gold: Vec<GoldLabel> = (0..3).map(|d| GoldLabel { doc_id: d.to_string(), items: vec![] }).collect();
            for (d, x) in gold_spec {
                let it = item(drugs[x], Ec50, None, None);
                if !gold[d].items.contains(&it) {
                    gold[d].items.push(it);
                }
            }
            let preds: Vec<AssayFinding> = pred_spec.iter().enumerate()
                .map(|(i, &(d, x))| pred(&d.to_string(), drugs[x], Ec50, Some(1.0), None, i))
                .collect();
            let s = score(&preds, &gold);
            for m in [s.strict, s.drug_only] {
                prop_assert!(m.n_correct <= m.n_extracted.min(m.n_possible));
                if m.precision + m.recall > 0.0 {
                    prop_assert!((m.f1 - 2.0 * m.precision * m.recall / (m.precision + m.recall)).abs() < 1e-9);
                }
            }
            // recount: per doc, correct = size of multiset intersection
            let mut want = 0;
            for g in &gold {
                for x in drugs {
                    let gc = g.items.iter().filter(|i| i.drug == x).count();
                    let pc = preds.iter().filter(|p| p.doc_id == g.doc_id && p.drug_canonical == x).count();
                    want += gc.min(pc);
                }
            }
            prop_assert_eq!(s.strict.n_correct, want);
            let mut shuffled = preds.clone();
            shuffled.reverse();
            prop_assert_eq!(score(&shuffled, &gold), s);
        }
    }
}
