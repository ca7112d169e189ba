//! LDA topic model trained by collapsed Gibbs sampling, with UMass
//! coherence, a topic-count grid search, document assignment, small-topic
//! filtering and per-topic paper recommendations.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::io::{self, Table};
use crate::preprocess::{BagOfWords, Vocab};

pub const MODEL_FORMAT_VERSION: u32 = 1;
pub const DEFAULT_K_GRID: [usize; 10] = [5, 10, 15, 20, 25, 30, 35, 40, 45, 50];
pub const DEFAULT_SEED: u64 = 20200601;
pub const TOP_WORDS: usize = 10;
pub const TOP_PAPERS: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct LdaConfig {
    /// Symmetric document-topic prior; `None` means 1/K.
    pub alpha: Option<f64>,
    pub beta: f64,
    pub iterations: usize,
    pub inference_iterations: usize,
    pub seed: u64,
    /// Number of top words per topic scored by coherence.
    pub top_n: usize,
    /// Verify count conservation after every sweep.
    pub check_invariants: bool,
}

impl Default for LdaConfig {
    fn default() -> Self {
        LdaConfig {
            alpha: None,
            beta: 0.01,
            iterations: 1000,
            inference_iterations: 100,
            seed: DEFAULT_SEED,
            top_n: TOP_WORDS,
            check_invariants: cfg!(debug_assertions),
        }
    }
}

impl LdaConfig {
    pub fn alpha_for(&self, k: usize) -> f64 {
        self.alpha.unwrap_or(1.0 / k as f64)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdaModel {
    pub version: u32,
    pub k: usize,
    pub vocab: Vocab,
    /// Row-major K × V topic-word probabilities.
    pub topic_word: Vec<f64>,
    pub alpha: f64,
    pub beta: f64,
    pub seed: u64,
    pub iterations: usize,
}

impl LdaModel {
    pub fn vocab_len(&self) -> usize {
        self.vocab.len()
    }

    pub fn row(&self, topic: usize) -> &[f64] {
        let v = self.vocab_len();
        &self.topic_word[topic * v..(topic + 1) * v]
    }

    /// Word indices of a topic by descending probability, ties by index.
    pub fn top_word_ids(&self, topic: usize, n: usize) -> Vec<usize> {
        let row = self.row(topic);
        let mut ids: Vec<usize> = (0..row.len()).collect();
        ids.sort_by(|&a, &b| row[b].total_cmp(&row[a]).then(a.cmp(&b)));
        ids.truncate(n);
        ids
    }

    pub fn top_words(&self, topic: usize, n: usize) -> Vec<String> {
        self.top_word_ids(topic, n)
            .into_iter()
            .map(|w| self.vocab.token(w).to_string())
            .collect()
    }

    pub fn check_invariants(&self) -> Result<()> {
        if self.k < 2 {
            return Err(Error::TooFewTopics(self.k));
        }
        if self.topic_word.len() != self.k * self.vocab_len() {
            return Err(Error::Invariant("topic_word shape does not match K × V".into()));
        }
        for t in 0..self.k {
            let row = self.row(t);
            if row.iter().any(|&p| p.is_nan() || p < 0.0) {
                return Err(Error::Invariant(format!("topic {t} has a negative or NaN probability")));
            }
            let sum: f64 = row.iter().sum();
            if (sum - 1.0).abs() > 1e-9 {
                return Err(Error::Invariant(format!("topic {t} sums to {sum}")));
            }
        }
        Ok(())
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let json = serde_json::to_vec_pretty(self).expect("model serializes");
        io::write_atomic(path, &json)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = io::read_to_string(path)?;
        let model: LdaModel = serde_json::from_str(&text).map_err(|source| Error::Json {
            path: path.to_path_buf(),
            line: source.line(),
            source,
        })?;
        if model.version != MODEL_FORMAT_VERSION {
            return Err(Error::Format {
                path: path.to_path_buf(),
                message: format!("unsupported model version {}", model.version),
            });
        }
        model.check_invariants()?;
        Ok(model)
    }
}

fn normalize(values: &mut [f64]) {
    let sum: f64 = values.iter().sum();
    for v in values.iter_mut() {
        *v /= sum;
    }
}

/// Draws an index with probability proportional to `weights`.
fn sample(rng: &mut ChaCha8Rng, weights: &[f64]) -> usize {
    let total: f64 = weights.iter().sum();
    let mut u = rng.gen::<f64>() * total;
    for (i, &w) in weights.iter().enumerate() {
        if u < w {
            return i;
        }
        u -= w;
    }
    weights.len() - 1
}

fn check_bags(bags: &[BagOfWords], v: usize) -> Result<()> {
    if bags.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    for bag in bags {
        if bag.is_empty() {
            return Err(Error::EmptyBag {
                doc_id: bag.doc_id.clone(),
            });
        }
        if let Some((&w, _)) = bag.counts.iter().next_back().filter(|(&w, _)| w >= v) {
            return Err(Error::Invariant(format!(
                "document {} references word {w} outside a vocabulary of {v}",
                bag.doc_id
            )));
        }
    }
    Ok(())
}

/// Trains an LDA model with `config.iterations` Gibbs sweeps.
pub fn train_lda(bags: &[BagOfWords], vocab: &Vocab, k: usize, config: &LdaConfig) -> Result<LdaModel> {
    if k < 2 {
        return Err(Error::TooFewTopics(k));
    }
    let v = vocab.len();
    check_bags(bags, v)?;
    let alpha = config.alpha_for(k);
    let beta = config.beta;
    let vbeta = v as f64 * beta;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let docs: Vec<Vec<usize>> = bags
        .iter()
        .map(|b| {
            b.counts
                .iter()
                .flat_map(|(&w, &c)| std::iter::repeat_n(w, c as usize))
                .collect()
        })
        .collect();
    let total_tokens: usize = docs.iter().map(Vec::len).sum();

    let mut n_dk = vec![0u32; docs.len() * k];
    let mut n_kw = vec![0u32; k * v];
    let mut n_k = vec![0u32; k];
    let mut z: Vec<Vec<usize>> = docs
        .iter()
        .enumerate()
        .map(|(d, words)| {
            words
                .iter()
                .map(|&w| {
                    let t = rng.gen_range(0..k);
                    n_dk[d * k + t] += 1;
                    n_kw[t * v + w] += 1;
                    n_k[t] += 1;
                    t
                })
                .collect()
        })
        .collect();

    let mut weights = vec![0.0; k];
    for sweep in 0..config.iterations {
        for (d, words) in docs.iter().enumerate() {
            for (i, &w) in words.iter().enumerate() {
                let old = z[d][i];
                n_dk[d * k + old] -= 1;
                n_kw[old * v + w] -= 1;
                n_k[old] -= 1;
                for t in 0..k {
                    weights[t] =
                        (n_dk[d * k + t] as f64 + alpha) * (n_kw[t * v + w] as f64 + beta) / (n_k[t] as f64 + vbeta);
                }
                let new = sample(&mut rng, &weights);
                z[d][i] = new;
                n_dk[d * k + new] += 1;
                n_kw[new * v + w] += 1;
                n_k[new] += 1;
            }
        }
        if config.check_invariants {
            let by_topic: usize = n_k.iter().map(|&c| c as usize).sum();
            let by_word: usize = n_kw.iter().map(|&c| c as usize).sum();
            let by_doc: usize = n_dk.iter().map(|&c| c as usize).sum();
            if by_topic != total_tokens || by_word != total_tokens || by_doc != total_tokens {
                return Err(Error::Invariant(format!(
                    "count conservation failed after sweep {sweep}: {by_topic}/{by_word}/{by_doc} vs {total_tokens}"
                )));
            }
        }
    }

    let mut topic_word = vec![0.0; k * v];
    for t in 0..k {
        let row = &mut topic_word[t * v..(t + 1) * v];
        for (w, p) in row.iter_mut().enumerate() {
            *p = (n_kw[t * v + w] as f64 + beta) / (n_k[t] as f64 + vbeta);
        }
        normalize(row);
    }
    log::debug!("trained LDA with K={k} on {} docs, {total_tokens} tokens", docs.len());
    Ok(LdaModel {
        version: MODEL_FORMAT_VERSION,
        k,
        vocab: vocab.clone(),
        topic_word,
        alpha,
        beta,
        seed: config.seed,
        iterations: config.iterations,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DocTopicAssignment {
    pub doc_id: String,
    pub distribution: Vec<f64>,
    pub top_topic: usize,
    pub weight: f64,
    /// Set when the document had no in-vocabulary tokens.
    #[serde(default)]
    pub empty: bool,
}

impl DocTopicAssignment {
    fn from_distribution(doc_id: &str, distribution: Vec<f64>, empty: bool) -> Self {
        let top_topic = distribution
            .iter()
            .enumerate()
            .fold(0, |best, (t, &p)| if p > distribution[best] { t } else { best });
        DocTopicAssignment {
            doc_id: doc_id.to_string(),
            weight: distribution[top_topic],
            top_topic,
            distribution,
            empty,
        }
    }
}

fn doc_seed(seed: u64, doc_id: &str) -> u64 {
    let digest = Sha256::digest(doc_id.as_bytes());
    let mut bytes = [0u8; 8];
    bytes.copy_from_slice(&digest[..8]);
    seed ^ u64::from_le_bytes(bytes)
}

/// Topic distribution of one document with the topic-word matrix held
/// fixed. The sampler is seeded from the model seed and the doc id, so the
/// result does not depend on which other documents are inferred.
pub fn infer_doc_topics(model: &LdaModel, bag: &BagOfWords, iterations: usize) -> DocTopicAssignment {
    let k = model.k;
    let v = model.vocab_len();
    let words: Vec<usize> = bag
        .counts
        .iter()
        .filter(|(&w, _)| w < v)
        .flat_map(|(&w, &c)| std::iter::repeat_n(w, c as usize))
        .collect();
    if words.is_empty() {
        return DocTopicAssignment::from_distribution(&bag.doc_id, vec![1.0 / k as f64; k], true);
    }
    let mut rng = ChaCha8Rng::seed_from_u64(doc_seed(model.seed, &bag.doc_id));
    let mut n_k = vec![0u32; k];
    let mut z: Vec<usize> = words
        .iter()
        .map(|_| {
            let t = rng.gen_range(0..k);
            n_k[t] += 1;
            t
        })
        .collect();
    let mut weights = vec![0.0; k];
    for _ in 0..iterations {
        for (i, &w) in words.iter().enumerate() {
            n_k[z[i]] -= 1;
            for t in 0..k {
                weights[t] = (n_k[t] as f64 + model.alpha) * model.topic_word[t * v + w];
            }
            z[i] = sample(&mut rng, &weights);
            n_k[z[i]] += 1;
        }
    }
    let mut distribution: Vec<f64> = n_k.iter().map(|&c| c as f64 + model.alpha).collect();
    normalize(&mut distribution);
    DocTopicAssignment::from_distribution(&bag.doc_id, distribution, false)
}

pub fn infer_all(model: &LdaModel, bags: &[BagOfWords], iterations: usize) -> Vec<DocTopicAssignment> {
    bags.par_iter()
        .map(|b| infer_doc_topics(model, b, iterations))
        .collect()
}

/// Mean UMass coherence over all topics. For each topic's top words
/// w_1..w_n (descending probability) this sums, over pairs i < j,
/// log((D(w_i, w_j) + 1) / D(w_i)), where D counts documents containing the
/// word (or both words) and w_i is the higher-ranked word of the pair.
pub fn coherence_umass(model: &LdaModel, bags: &[BagOfWords], top_n: usize) -> Result<f64> {
    if top_n < 2 {
        return Err(Error::TopN(top_n));
    }
    let tops: Vec<Vec<usize>> = (0..model.k).map(|t| model.top_word_ids(t, top_n)).collect();
    let wanted: HashSet<usize> = tops.iter().flatten().copied().collect();
    let mut docs_of: HashMap<usize, Vec<usize>> = HashMap::new();
    for (d, bag) in bags.iter().enumerate() {
        for w in bag.counts.keys().filter(|w| wanted.contains(w)) {
            docs_of.entry(*w).or_default().push(d);
        }
    }
    let df = |w: usize| docs_of.get(&w).map_or(0, Vec::len);
    let co_df = |a: usize, b: usize| {
        let (Some(x), Some(y)) = (docs_of.get(&a), docs_of.get(&b)) else {
            return 0;
        };
        // both sorted ascending
        let (mut i, mut j, mut n) = (0, 0, 0);
        while i < x.len() && j < y.len() {
            match x[i].cmp(&y[j]) {
                std::cmp::Ordering::Less => i += 1,
                std::cmp::Ordering::Greater => j += 1,
                std::cmp::Ordering::Equal => {
                    n += 1;
                    i += 1;
                    j += 1;
                }
            }
        }
        n
    };
    let mut total = 0.0;
    for words in &tops {
        for (i, &wi) in words.iter().enumerate() {
            let di = df(wi);
            if di == 0 {
                return Err(Error::ZeroDocFrequency(model.vocab.token(wi).to_string()));
            }
            for &wj in &words[i + 1..] {
                total += ((co_df(wi, wj) as f64 + 1.0) / di as f64).ln();
            }
        }
    }
    Ok(total / model.k as f64)
}

#[derive(Debug, Clone)]
pub struct GridSearch {
    pub best: LdaModel,
    /// (K, coherence) in grid order.
    pub curve: Vec<(usize, f64)>,
}

impl GridSearch {
    pub fn best_k(&self) -> usize {
        self.best.k
    }
}

/// Index of the maximum coherence; ties go to the smaller K.
pub fn argmax_curve(curve: &[(usize, f64)]) -> Option<usize> {
    (0..curve.len()).reduce(|best, i| {
        let (kb, cb) = curve[best];
        let (ki, ci) = curve[i];
        if ci > cb || (ci == cb && ki < kb) {
            i
        } else {
            best
        }
    })
}

/// Trains one model per K (concurrently, each with the configured seed) and
/// keeps the most coherent.
pub fn grid_search_k(bags: &[BagOfWords], vocab: &Vocab, k_grid: &[usize], config: &LdaConfig) -> Result<GridSearch> {
    if k_grid.is_empty() {
        return Err(Error::EmptyGrid);
    }
    let results: Vec<(LdaModel, f64)> = k_grid
        .par_iter()
        .map(|&k| {
            let model = train_lda(bags, vocab, k, config)?;
            let coherence = coherence_umass(&model, bags, config.top_n)?;
            log::info!("K={k}: coherence {coherence:.4}");
            Ok((model, coherence))
        })
        .collect::<Result<_>>()?;
    let curve: Vec<(usize, f64)> = results.iter().map(|(m, c)| (m.k, *c)).collect();
    let best = argmax_curve(&curve).expect("non-empty grid");
    let best = results.into_iter().nth(best).expect("index in range").0;
    Ok(GridSearch { best, curve })
}

/// Document count per top topic, ignoring documents flagged empty.
pub fn topic_counts(assignments: &[DocTopicAssignment], k: usize) -> Vec<usize> {
    let mut counts = vec![0; k];
    for a in assignments.iter().filter(|a| !a.empty) {
        counts[a.top_topic] += 1;
    }
    counts
}

/// Topics holding at least a fifth of the average papers per topic.
/// Documents flagged empty do not count toward N.
pub fn filter_small_topics(assignments: &[DocTopicAssignment], k: usize) -> BTreeSet<usize> {
    let counts = topic_counts(assignments, k);
    kept_topics(&counts)
}

/// Kept topics for given per-topic counts: count >= (N / K) / 5, computed
/// exactly in integers.
pub fn kept_topics(counts: &[usize]) -> BTreeSet<usize> {
    let n: usize = counts.iter().sum();
    let k = counts.len();
    (0..k).filter(|&t| counts[t] * 5 * k >= n).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Recommendation {
    pub doc_id: String,
    pub weight: f64,
}

/// Per kept topic, its documents by descending weight (ties by doc id),
/// truncated to `top`.
pub fn recommend_top_papers(
    assignments: &[DocTopicAssignment],
    kept: &BTreeSet<usize>,
    top: usize,
) -> BTreeMap<usize, Vec<Recommendation>> {
    let mut out: BTreeMap<usize, Vec<&DocTopicAssignment>> = kept.iter().map(|&t| (t, Vec::new())).collect();
    for a in assignments.iter().filter(|a| !a.empty) {
        if let Some(list) = out.get_mut(&a.top_topic) {
            list.push(a);
        }
    }
    out.into_iter()
        .map(|(t, mut list)| {
            list.sort_by(|a, b| b.weight.total_cmp(&a.weight).then_with(|| a.doc_id.cmp(&b.doc_id)));
            let recs = list
                .into_iter()
                .take(top)
                .map(|a| Recommendation {
                    doc_id: a.doc_id.clone(),
                    weight: a.weight,
                })
                .collect();
            (t, recs)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicReport {
    pub topic_id: usize,
    pub top_words: Vec<String>,
    pub label: Option<String>,
    pub paper_count: usize,
    pub kept: bool,
}

pub fn topic_reports(
    model: &LdaModel,
    assignments: &[DocTopicAssignment],
    labels: &BTreeMap<usize, String>,
) -> Vec<TopicReport> {
    let counts = topic_counts(assignments, model.k);
    let kept = kept_topics(&counts);
    (0..model.k)
        .map(|t| TopicReport {
            topic_id: t,
            top_words: model.top_words(t, TOP_WORDS),
            label: labels.get(&t).cloned(),
            paper_count: counts[t],
            kept: kept.contains(&t),
        })
        .collect()
}

/// Parses a `topic_id<TAB>label` file; a non-numeric first row is a header.
pub fn parse_labels(text: &str, path: &Path) -> Result<BTreeMap<usize, String>> {
    let mut labels = BTreeMap::new();
    for (i, line) in io::list_lines(text).enumerate() {
        let (id, label) = line.split_once('\t').ok_or_else(|| Error::Format {
            path: path.to_path_buf(),
            message: format!("expected topic_id<TAB>label, got '{line}'"),
        })?;
        match id.trim().parse::<usize>() {
            Ok(id) => {
                labels.insert(id, label.trim().to_string());
            }
            Err(_) if i == 0 => {}
            Err(_) => {
                return Err(Error::Format {
                    path: path.to_path_buf(),
                    message: format!("bad topic id '{id}'"),
                })
            }
        }
    }
    Ok(labels)
}

pub fn load_labels(path: &Path) -> Result<BTreeMap<usize, String>> {
    parse_labels(&io::read_to_string(path)?, path)
}

pub fn topics_table(reports: &[TopicReport]) -> Table {
    let mut table = Table::new(["topic_id", "label", "paper_count", "kept", "top_words"]);
    for r in reports {
        table.push(vec![
            r.topic_id.to_string(),
            r.label.clone().unwrap_or_default(),
            r.paper_count.to_string(),
            r.kept.to_string(),
            r.top_words.join(" "),
        ]);
    }
    table
}

pub fn recommendations_table(recs: &BTreeMap<usize, Vec<Recommendation>>) -> Table {
    let mut table = Table::new(["topic_id", "rank", "doc_id", "weight"]);
    for (t, list) in recs {
        for (rank, r) in list.iter().enumerate() {
            table.push(vec![
                t.to_string(),
                (rank + 1).to_string(),
                r.doc_id.clone(),
                format!("{:.6}", r.weight),
            ]);
        }
    }
    table
}

pub fn coherence_table(curve: &[(usize, f64)]) -> Table {
    let mut table = Table::new(["k", "coherence"]);
    for (k, c) in curve {
        table.push(vec![k.to_string(), format!("{c:.6}")]);
    }
    table
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn bag(id: &str, words: &[(usize, u32)]) -> BagOfWords {
        BagOfWords {
            doc_id: id.into(),
            counts: words.iter().copied().collect(),
        }
    }

    fn vocab(words: &[&str]) -> Vocab {
        Vocab::from_tokens(words.iter().map(|s| s.to_string()).collect())
    }

    fn quick(iterations: usize) -> LdaConfig {
        LdaConfig {
            iterations,
            check_invariants: true,
            ..LdaConfig::default()
        }
    }

    #[test]
    fn disjoint_two_doc_corpus_separates() {
        let v = vocab(&["a", "b", "c", "d"]);
        let bags = vec![bag("x", &[(0, 20), (1, 20)]), bag("y", &[(2, 20), (3, 20)])];
        let m = train_lda(&bags, &v, 2, &quick(200)).unwrap();
        m.check_invariants().unwrap();
        for t in 0..2 {
            let row = m.row(t);
            let first = row[0] + row[1];
            let second = row[2] + row[3];
            assert!(first.max(second) > 0.9, "topic {t}: {row:?}");
        }
        assert_ne!(m.row(0)[0] > 0.25, m.row(1)[0] > 0.25);
    }

    #[test]
    fn training_is_deterministic() {
        let v = vocab(&["a", "b", "c", "d", "e"]);
        let bags = vec![
            bag("1", &[(0, 3), (1, 2), (4, 1)]),
            bag("2", &[(2, 2), (3, 4)]),
            bag("3", &[(0, 1), (3, 1), (4, 5)]),
        ];
        let a = train_lda(&bags, &v, 3, &quick(50)).unwrap();
        let b = train_lda(&bags, &v, 3, &quick(50)).unwrap();
        assert_eq!(a.topic_word, b.topic_word);
        let other = train_lda(&bags, &v, 3, &LdaConfig { seed: 7, ..quick(50) }).unwrap();
        other.check_invariants().unwrap();
    }

    #[test]
    fn training_errors() {
        let v = vocab(&["a"]);
        assert!(matches!(train_lda(&[], &v, 2, &quick(1)), Err(Error::EmptyCorpus)));
        let err = train_lda(&[bag("ok", &[(0, 1)]), bag("bad", &[])], &v, 2, &quick(1)).unwrap_err();
        assert!(matches!(&err, Error::EmptyBag { doc_id } if doc_id == "bad"));
        assert!(matches!(
            train_lda(&[bag("ok", &[(0, 1)])], &v, 1, &quick(1)),
            Err(Error::TooFewTopics(1))
        ));
    }

    fn fixed_model(rows: &[&[f64]], words: &[&str]) -> LdaModel {
        LdaModel {
            version: MODEL_FORMAT_VERSION,
            k: rows.len(),
            vocab: vocab(words),
            topic_word: rows.iter().flat_map(|r| r.iter().copied()).collect(),
            alpha: 1.0 / rows.len() as f64,
            beta: 0.01,
            seed: 1,
            iterations: 0,
        }
    }

    #[test]
    fn coherence_hand_computation() {
        // words a b c; docs {a,b}, {a}, {b,c}
        let bags = vec![
            bag("1", &[(0, 1), (1, 1)]),
            bag("2", &[(0, 1)]),
            bag("3", &[(1, 1), (2, 1)]),
        ];
        // topic 0 ranks a > b, topic 1 ranks c > b
        let m = fixed_model(&[&[0.6, 0.3, 0.1], &[0.1, 0.3, 0.6]], &["a", "b", "c"]);
        // D(a)=2, D(c)=1, D(a,b)=1, D(c,b)=1
        let want = ((2.0f64 / 2.0).ln() + (2.0f64 / 1.0).ln()) / 2.0;
        let got = coherence_umass(&m, &bags, 2).unwrap();
        assert!((got - want).abs() < 1e-12, "{got} vs {want}");
        assert_eq!(got, coherence_umass(&m.clone(), &bags, 2).unwrap());
        assert!(matches!(coherence_umass(&m, &bags, 1), Err(Error::TopN(1))));
    }

    #[test]
    fn coherence_always_cooccurring_pair_is_positive() {
        let bags = vec![bag("1", &[(0, 1), (1, 1)]), bag("2", &[(0, 2), (1, 1)])];
        let m = fixed_model(&[&[0.7, 0.3], &[0.4, 0.6]], &["a", "b"]);
        let c = coherence_umass(&m, &bags, 2).unwrap();
        assert!((c - (3.0f64 / 2.0).ln()).abs() < 1e-12);
    }

    #[test]
    fn coherence_zero_df() {
        let bags = vec![bag("1", &[(0, 1)])];
        let m = fixed_model(&[&[0.5, 0.5], &[0.5, 0.5]], &["a", "b"]);
        assert!(matches!(coherence_umass(&m, &bags, 2), Err(Error::ZeroDocFrequency(w)) if w == "b"));
    }

    #[test]
    fn inference_examples() {
        let m = fixed_model(
            &[&[0.45, 0.45, 0.05, 0.05], &[0.05, 0.05, 0.45, 0.45]],
            &["a", "b", "c", "d"],
        );
        let a = infer_doc_topics(&m, &bag("doc", &[(0, 5), (1, 5)]), 100);
        assert_eq!(a.top_topic, 0);
        assert!(a.weight > 0.5);
        assert!((a.distribution.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        assert_eq!(a, infer_doc_topics(&m, &bag("doc", &[(0, 5), (1, 5)]), 100));

        let e = infer_doc_topics(&m, &bag("empty", &[]), 100);
        assert!(e.empty);
        assert_eq!(e.distribution, vec![0.5, 0.5]);
        assert_eq!(e.weight, 0.5);
        // out-of-vocabulary ids are restricted away
        assert!(infer_doc_topics(&m, &bag("oov", &[(9, 3)]), 100).empty);
    }

    #[test]
    fn argmax_ties_prefer_smaller_k() {
        assert_eq!(argmax_curve(&[(5, -1.0), (2, -1.0), (3, -2.0)]), Some(1));
        assert_eq!(argmax_curve(&[(2, -3.0), (3, -1.0)]), Some(1));
        assert_eq!(argmax_curve(&[]), None);
    }

    #[test]
    fn single_k_grid() {
        let v = vocab(&["a", "b", "c", "d"]);
        let bags = vec![bag("x", &[(0, 4), (1, 4)]), bag("y", &[(2, 4), (3, 4)])];
        let g = grid_search_k(&bags, &v, &[2], &quick(20)).unwrap();
        assert_eq!(g.best_k(), 2);
        assert_eq!(g.curve.len(), 1);
        assert!(matches!(
            grid_search_k(&bags, &v, &[], &quick(1)),
            Err(Error::EmptyGrid)
        ));
    }

    fn assignment(id: &str, topic: usize, weight: f64) -> DocTopicAssignment {
        DocTopicAssignment {
            doc_id: id.into(),
            distribution: Vec::new(),
            top_topic: topic,
            weight,
            empty: false,
        }
    }

    #[test]
    fn filter_examples() {
        // N=300, K=30: average 10, cutoff 2
        let mut counts = vec![10; 30];
        counts[0] = 1;
        counts[1] = 2;
        counts[2] = 19;
        let kept = kept_topics(&counts);
        assert!(!kept.contains(&0));
        assert!(kept.contains(&1));
        assert_eq!(kept.len(), 29);
        assert_eq!(kept_topics(&[4, 4, 4]).len(), 3);
        let a = vec![assignment("a", 0, 0.9), assignment("b", 1, 0.9)];
        assert_eq!(filter_small_topics(&a, 2).len(), 2);
    }

    #[test]
    fn recommend_examples() {
        let a = vec![
            assignment("c", 0, 0.5),
            assignment("a", 0, 0.9),
            assignment("b", 0, 0.5),
            assignment("z", 1, 0.99),
        ];
        let kept: BTreeSet<usize> = [0].into();
        let recs = recommend_top_papers(&a, &kept, 10);
        let ids: Vec<&str> = recs[&0].iter().map(|r| r.doc_id.as_str()).collect();
        assert_eq!(ids, vec!["a", "b", "c"]);
        assert!(!recs.contains_key(&1));
        assert_eq!(recommend_top_papers(&a, &kept, 2)[&0].len(), 2);
    }

    #[test]
    fn labels_parse() {
        let l = parse_labels("topic_id\tlabel\n3\tPPE\n0\tAI\n", Path::new("x")).unwrap();
        assert_eq!(l[&3], "PPE");
        assert_eq!(l[&0], "AI");
        assert!(parse_labels("3 PPE\n", Path::new("x")).is_err());
    }

    #[test]
    fn model_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("model.json");
        let m = fixed_model(&[&[0.5, 0.5], &[0.25, 0.75]], &["a", "b"]);
        m.save(&path).unwrap();
        assert_eq!(LdaModel::load(&path).unwrap(), m);
    }

    proptest! {
        #[test]
        fn filter_is_monotone(counts in proptest::collection::vec(0usize..30, 2..12), t in 0usize..12, drop in 1usize..30) {
            let t = t % counts.len();
            let before = kept_topics(&counts).contains(&t);
            let mut smaller = counts.clone();
            smaller[t] = smaller[t].saturating_sub(drop);
            let after = kept_topics(&smaller).contains(&t);
            prop_assert!(!(after && !before));
        }

        #[test]
        fn kept_matches_real_arithmetic(counts in proptest::collection::vec(0usize..50, 1..40)) {
            let n: usize = counts.iter().sum();
            let avg = n as f64 / counts.len() as f64;
            let kept = kept_topics(&counts);
            for (t, &c) in counts.iter().enumerate() {
                // compare against rationals scaled to avoid float boundary noise
                let exact = (c * 5 * counts.len()) >= n;
                prop_assert_eq!(kept.contains(&t), exact);
                if (c as f64 - avg / 5.0).abs() > 1e-9 {
                    prop_assert_eq!(exact, c as f64 >= avg / 5.0);
                }
            }
        }

        #[test]
        fn small_models_are_normalized_and_conserve_counts(
            docs in proptest::collection::vec(proptest::collection::btree_map(0usize..6, 1u32..4, 1..5), 1..6),
            k in 2usize..5,
            seed in any::<u64>(),
        ) {
            let v = vocab(&["a", "b", "c", "d", "e", "f"]);
            let bags: Vec<BagOfWords> = docs.into_iter().enumerate()
                .map(|(i, counts)| BagOfWords { doc_id: i.to_string(), counts })
                .collect();
            let cfg = LdaConfig { seed, iterations: 10, check_invariants: true, ..LdaConfig::default() };
            let m = train_lda(&bags, &v, k, &cfg).unwrap();
            prop_assert!(m.check_invariants().is_ok());
            for b in &bags {
                let a = infer_doc_topics(&m, b, 10);
                prop_assert!((a.distribution.iter().sum::<f64>() - 1.0).abs() < 1e-9);
                prop_assert_eq!(a.weight, a.distribution[a.top_topic]);
            }
        }
    }
}
