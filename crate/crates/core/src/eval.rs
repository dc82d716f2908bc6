//! Relevance judgments, ranking metrics and significance statistics.
//!
//! Gains are binary. NDCG uses the discount `1 / log2(rank + 1)` with ranks
//! starting at 1 and is normalized by the ideal DCG at the same cutoff.
//! Topics without any relevant entity are excluded from aggregates and
//! listed separately. Topics with relevant entities that are absent from a
//! run score zero on every measure.
//!
//! IDF is `ln(N / df)` with `N` the number of entity profiles and `df` the
//! number of profiles containing the term (no smoothing).

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::io::{BufRead, Write};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::retrieval::RankedList;
use crate::text::{extract_topic_query, CategoryPath, Corpus, TokenId, Vocabulary};

/// Default NDCG cutoff.
pub const DEFAULT_CUTOFF: usize = 100;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Split {
    Test,
    Validation,
}

impl std::str::FromStr for Split {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "test" => Ok(Split::Test),
            "validation" => Ok(Split::Validation),
            other => Err(Error::Config(format!("unknown split {other:?}"))),
        }
    }
}

impl std::fmt::Display for Split {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Split::Test => "test",
            Split::Validation => "validation",
        })
    }
}

/// Textual queries keyed by topic id, in file order.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TopicSet {
    pub split: Split,
    topics: Vec<(String, String)>,
}

impl TopicSet {
    pub fn new(split: Split, topics: Vec<(String, String)>) -> Result<Self> {
        let mut seen = HashSet::new();
        for (id, _) in &topics {
            if !seen.insert(id.as_str()) {
                return Err(Error::Config(format!("duplicate topic id {id:?}")));
            }
        }
        Ok(TopicSet { split, topics })
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &str)> {
        self.topics.iter().map(|(id, q)| (id.as_str(), q.as_str()))
    }

    pub fn len(&self) -> usize {
        self.topics.len()
    }

    pub fn is_empty(&self) -> bool {
        self.topics.is_empty()
    }

    /// Encode every query, dropping out-of-vocabulary words.
    pub fn encode(&self, vocab: &Vocabulary) -> Vec<(String, Vec<TokenId>)> {
        self.topics.iter().map(|(id, q)| (id.clone(), vocab.encode_text(q))).collect()
    }

    /// Read TSV: a header row `split \t <test|validation>` followed by
    /// `topic_id \t query` rows.
    pub fn read_tsv<R: BufRead>(input: R, source: &str) -> Result<Self> {
        let mut lines = input.lines().enumerate();
        let split = loop {
            match lines.next() {
                None => return Err(Error::parse(source, 1, "missing split header")),
                Some((lineno, line)) => {
                    let line = line.map_err(|e| Error::io(source, e))?;
                    if line.trim().is_empty() {
                        continue;
                    }
                    let mut fields = line.splitn(2, '\t');
                    if fields.next() != Some("split") {
                        return Err(Error::parse(source, lineno + 1, "header must be `split<TAB><name>`"));
                    }
                    let name = fields.next().unwrap_or("").trim();
                    break name
                        .parse::<Split>()
                        .map_err(|e| Error::parse(source, lineno + 1, e.to_string()))?;
                }
            }
        };
        let mut topics = Vec::new();
        for (lineno, line) in lines {
            let line = line.map_err(|e| Error::io(source, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let (id, query) = line
                .split_once('\t')
                .ok_or_else(|| Error::parse(source, lineno + 1, "expected `topic_id<TAB>query`"))?;
            topics.push((id.to_string(), query.to_string()));
        }
        TopicSet::new(split, topics).map_err(|e| Error::parse(source, 0, e.to_string()))
    }

    pub fn write_tsv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "split\t{}", self.split)?;
        for (id, q) in &self.topics {
            writeln!(out, "{id}\t{q}")?;
        }
        Ok(())
    }
}

/// Topics and judgments derived from category paths.
#[derive(Debug, Clone, PartialEq)]
pub struct CategoryTopics {
    pub topics: TopicSet,
    pub qrels: Qrels,
    /// Paths with fewer than two levels.
    pub skipped: Vec<Vec<String>>,
}

/// Turn each category of at least two levels into a topic with id
/// `{prefix}{index}` (index in input order); its entities are relevant.
pub fn topics_from_categories(categories: &[CategoryPath], split: Split, prefix: &str) -> Result<CategoryTopics> {
    let mut topics = Vec::new();
    let mut qrels = Qrels::new();
    let mut skipped = Vec::new();
    for (i, category) in categories.iter().enumerate() {
        match extract_topic_query(&category.path) {
            Ok(query) => {
                let id = format!("{prefix}{i}");
                for entity in &category.entity_ids {
                    qrels.insert(id.clone(), entity.clone(), true);
                }
                topics.push((id, query));
            }
            Err(Error::ShallowCategory(path)) => skipped.push(path),
            Err(e) => return Err(e),
        }
    }
    Ok(CategoryTopics {
        topics: TopicSet::new(split, topics)?,
        qrels,
        skipped,
    })
}

/// Binary relevance judgments.
#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct Qrels {
    judgments: BTreeMap<String, BTreeMap<String, bool>>,
}

impl Qrels {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, topic: impl Into<String>, entity: impl Into<String>, relevant: bool) {
        self.judgments.entry(topic.into()).or_default().insert(entity.into(), relevant);
    }

    pub fn is_relevant(&self, topic: &str, entity: &str) -> bool {
        self.judgments
            .get(topic)
            .and_then(|j| j.get(entity))
            .copied()
            .unwrap_or(false)
    }

    pub fn relevant(&self, topic: &str) -> BTreeSet<&str> {
        self.judgments
            .get(topic)
            .map(|j| j.iter().filter(|(_, &r)| r).map(|(e, _)| e.as_str()).collect())
            .unwrap_or_default()
    }

    pub fn num_relevant(&self, topic: &str) -> usize {
        self.judgments
            .get(topic)
            .map(|j| j.values().filter(|&&r| r).count())
            .unwrap_or(0)
    }

    /// Judged topics in sorted order.
    pub fn topics(&self) -> impl Iterator<Item = &str> {
        self.judgments.keys().map(String::as_str)
    }

    /// Keep only the listed topics.
    pub fn restrict<'a>(&self, topics: impl IntoIterator<Item = &'a str>) -> Qrels {
        let keep: HashSet<&str> = topics.into_iter().collect();
        Qrels {
            judgments: self
                .judgments
                .iter()
                .filter(|(t, _)| keep.contains(t.as_str()))
                .map(|(t, j)| (t.clone(), j.clone()))
                .collect(),
        }
    }

    /// Read TREC qrels: `topic_id 0 entity_id grade` with grade 0 or 1.
    pub fn read_trec<R: BufRead>(input: R, source: &str) -> Result<Self> {
        let mut qrels = Qrels::new();
        for (lineno, line) in input.lines().enumerate() {
            let line = line.map_err(|e| Error::io(source, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let fields: Vec<&str> = line.split_whitespace().collect();
            if fields.len() != 4 {
                return Err(Error::parse(source, lineno + 1, format!("expected 4 fields, found {}", fields.len())));
            }
            let relevant = match fields[3] {
                "0" => false,
                "1" => true,
                g => return Err(Error::parse(source, lineno + 1, format!("grade must be 0 or 1, found {g:?}"))),
            };
            qrels.insert(fields[0], fields[2], relevant);
        }
        Ok(qrels)
    }

    pub fn write_trec<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        for (topic, judged) in &self.judgments {
            for (entity, &rel) in judged {
                writeln!(out, "{topic} 0 {entity} {}", u8::from(rel))?;
            }
        }
        Ok(())
    }
}

fn discount(rank: usize) -> f64 {
    1.0 / ((rank + 1) as f64).log2()
}

/// NDCG at `cutoff`; `None` when the topic has no relevant entity.
pub fn ndcg(ranked: &RankedList, qrels: &Qrels, cutoff: usize) -> Option<f64> {
    let relevant = qrels.relevant(&ranked.topic_id);
    if relevant.is_empty() {
        return None;
    }
    let dcg: f64 = ranked
        .ids()
        .take(cutoff)
        .enumerate()
        .filter(|(_, id)| relevant.contains(id))
        .map(|(i, _)| discount(i + 1))
        .sum();
    let ideal: f64 = (1..=relevant.len().min(cutoff)).map(discount).sum();
    Some(dcg / ideal)
}

/// Fraction of the top `k` entries that are relevant; the denominator is
/// always `k`.
pub fn precision_at_k(ranked: &RankedList, qrels: &Qrels, k: usize) -> f64 {
    assert!(k >= 1, "precision cutoff must be positive");
    let hits = ranked
        .ids()
        .take(k)
        .filter(|id| qrels.is_relevant(&ranked.topic_id, id))
        .count();
    hits as f64 / k as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TopicMetrics {
    pub topic_id: String,
    pub ndcg: f64,
    pub p5: f64,
    pub p10: f64,
}

/// Per-topic and mean NDCG, P@5 and P@10 for a run.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricReport {
    pub run_tag: String,
    pub cutoff: usize,
    pub per_topic: Vec<TopicMetrics>,
    /// Topics in the run or qrels with no relevant entity.
    pub excluded_topics: Vec<String>,
    /// Judged topics with relevant entities that the run does not contain.
    pub missing_topics: Vec<String>,
    pub mean_ndcg: f64,
    pub mean_p5: f64,
    pub mean_p10: f64,
}

impl MetricReport {
    pub fn ndcg_by_topic(&self) -> HashMap<&str, f64> {
        self.per_topic.iter().map(|m| (m.topic_id.as_str(), m.ndcg)).collect()
    }

    /// Per-topic CSV: `topic_id,ndcg,p5,p10`.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "topic_id,ndcg@{},p@5,p@10", self.cutoff)?;
        for m in &self.per_topic {
            writeln!(out, "{},{:.6},{:.6},{:.6}", m.topic_id, m.ndcg, m.p5, m.p10)?;
        }
        Ok(())
    }
}

fn mean(values: impl Iterator<Item = f64>) -> f64 {
    let (sum, n) = values.fold((0.0, 0usize), |(s, n), v| (s + v, n + 1));
    if n == 0 {
        0.0
    } else {
        sum / n as f64
    }
}

/// Evaluate a run against `qrels`.
///
/// The evaluated topics are the judged topics with at least one relevant
/// entity, in sorted order.
pub fn evaluate(run: &[RankedList], qrels: &Qrels, cutoff: usize, run_tag: &str) -> MetricReport {
    let by_topic: HashMap<&str, &RankedList> = run.iter().map(|l| (l.topic_id.as_str(), l)).collect();
    let mut per_topic = Vec::new();
    let mut missing = Vec::new();
    let mut excluded: BTreeSet<String> = BTreeSet::new();
    for topic in qrels.topics() {
        if qrels.num_relevant(topic) == 0 {
            excluded.insert(topic.to_string());
            continue;
        }
        let metrics = match by_topic.get(topic) {
            Some(list) => TopicMetrics {
                topic_id: topic.to_string(),
                ndcg: ndcg(list, qrels, cutoff).expect("topic has relevant entities"),
                p5: precision_at_k(list, qrels, 5),
                p10: precision_at_k(list, qrels, 10),
            },
            None => {
                missing.push(topic.to_string());
                TopicMetrics {
                    topic_id: topic.to_string(),
                    ndcg: 0.0,
                    p5: 0.0,
                    p10: 0.0,
                }
            }
        };
        per_topic.push(metrics);
    }
    for list in run {
        if qrels.num_relevant(&list.topic_id) == 0 {
            excluded.insert(list.topic_id.clone());
        }
    }
    MetricReport {
        run_tag: run_tag.to_string(),
        cutoff,
        mean_ndcg: mean(per_topic.iter().map(|m| m.ndcg)),
        mean_p5: mean(per_topic.iter().map(|m| m.p5)),
        mean_p10: mean(per_topic.iter().map(|m| m.p10)),
        per_topic,
        excluded_topics: excluded.into_iter().collect(),
        missing_topics: missing,
    }
}

/// Result of a two-sided paired t-test.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum TTest {
    Defined { t: f64, p: f64, df: usize },
    /// The differences have zero variance; no p-value exists.
    Degenerate { mean_difference: f64 },
}

impl TTest {
    pub fn p_value(&self) -> Option<f64> {
        match self {
            TTest::Defined { p, .. } => Some(*p),
            TTest::Degenerate { .. } => None,
        }
    }

    pub fn marker(&self) -> &'static str {
        self.p_value().map_or("", significance_marker)
    }
}

/// `***` for p < 0.01, `**` for p < 0.05, `*` for p < 0.1.
pub fn significance_marker(p: f64) -> &'static str {
    if p < 0.01 {
        "***"
    } else if p < 0.05 {
        "**"
    } else if p < 0.1 {
        "*"
    } else {
        ""
    }
}

/// Two-sided paired Student's t-test on `a − b` with `n − 1` degrees of freedom.
pub fn paired_t_test(a: &[f64], b: &[f64]) -> Result<TTest> {
    if a.len() != b.len() {
        return Err(Error::DimensionMismatch {
            expected: a.len(),
            actual: b.len(),
        });
    }
    let n = a.len();
    if n < 2 {
        return Err(Error::Undefined("paired t-test needs at least two pairs".into()));
    }
    let diffs: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let mean_difference = diffs.iter().sum::<f64>() / n as f64;
    let var = diffs.iter().map(|d| (d - mean_difference).powi(2)).sum::<f64>() / (n - 1) as f64;
    if var == 0.0 {
        return Ok(TTest::Degenerate { mean_difference });
    }
    let t = mean_difference / (var / n as f64).sqrt();
    let df = n - 1;
    let dist = StudentsT::new(0.0, 1.0, df as f64).expect("positive degrees of freedom");
    let p = (2.0 * dist.cdf(-t.abs())).min(1.0);
    Ok(TTest::Defined { t, p, df })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Correlations {
    pub spearman: f64,
    pub pearson: f64,
}

fn pearson_unchecked(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (a, b) in x.iter().zip(y) {
        sxy += (a - mx) * (b - my);
        sxx += (a - mx) * (a - mx);
        syy += (b - my) * (b - my);
    }
    if sxx == 0.0 || syy == 0.0 {
        None
    } else {
        Some(sxy / (sxx * syy).sqrt())
    }
}

/// Ranks starting at 1, ties receiving the average of their positions.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut i = 0;
    while i < order.len() {
        let mut j = i;
        while j + 1 < order.len() && values[order[j + 1]] == values[order[i]] {
            j += 1;
        }
        let avg = (i + j) as f64 / 2.0 + 1.0;
        for &k in &order[i..=j] {
            ranks[k] = avg;
        }
        i = j + 1;
    }
    ranks
}

fn check_pairs(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::DimensionMismatch {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::Undefined("correlation needs at least three pairs".into()));
    }
    Ok(())
}

pub fn pearson(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pairs(x, y)?;
    pearson_unchecked(x, y).ok_or_else(|| Error::Undefined("constant sequence".into()))
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pairs(x, y)?;
    pearson_unchecked(&average_ranks(x), &average_ranks(y))
        .ok_or_else(|| Error::Undefined("constant sequence".into()))
}

pub fn correlations(x: &[f64], y: &[f64]) -> Result<Correlations> {
    Ok(Correlations {
        spearman: spearman(x, y)?,
        pearson: pearson(x, y)?,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CorrelationKind {
    Spearman,
    Pearson,
}

/// Two-sided permutation test for a correlation coefficient.
///
/// `y` is shuffled `iterations` times; the p-value is
/// `(#{|r_perm| ≥ |r_obs|} + 1) / (iterations + 1)`.
pub fn permutation_test(x: &[f64], y: &[f64], kind: CorrelationKind, iterations: usize, seed: u64) -> Result<f64> {
    if iterations < 1000 {
        return Err(Error::Config(format!("permutation test needs at least 1000 iterations, got {iterations}")));
    }
    check_pairs(x, y)?;
    let (xs, mut ys) = match kind {
        CorrelationKind::Pearson => (x.to_vec(), y.to_vec()),
        CorrelationKind::Spearman => (average_ranks(x), average_ranks(y)),
    };
    let observed = pearson_unchecked(&xs, &ys)
        .ok_or_else(|| Error::Undefined("constant sequence".into()))?
        .abs();
    let tolerance = 1e-12;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut extreme = 0usize;
    for _ in 0..iterations {
        ys.shuffle(&mut rng);
        let r = pearson_unchecked(&xs, &ys).expect("permutation preserves variance");
        if r.abs() >= observed - tolerance {
            extreme += 1;
        }
    }
    Ok((extreme + 1) as f64 / (iterations + 1) as f64)
}

/// Average IDF of the query terms that occur in the profile of at least one
/// relevant entity; `None` when no query term matches.
pub fn idf_match_analysis<'a>(
    corpus: &Corpus,
    topics: impl IntoIterator<Item = (&'a str, &'a [TokenId])>,
    qrels: &Qrels,
) -> Vec<(String, Option<f64>)> {
    let profiles: Vec<HashSet<TokenId>> = (0..corpus.num_entities())
        .map(|e| {
            corpus
                .entity_documents(e)
                .iter()
                .flat_map(|&d| corpus.documents()[d].tokens.iter().copied())
                .collect()
        })
        .collect();
    let mut df: HashMap<TokenId, usize> = HashMap::new();
    for profile in &profiles {
        for &t in profile {
            *df.entry(t).or_default() += 1;
        }
    }
    let n = profiles.len() as f64;
    topics
        .into_iter()
        .map(|(topic, query)| {
            let relevant: Vec<usize> = qrels
                .relevant(topic)
                .into_iter()
                .filter_map(|e| corpus.entity_index(e))
                .collect();
            let mut unique = HashSet::new();
            let idfs: Vec<f64> = query
                .iter()
                .filter(|t| unique.insert(**t))
                .filter(|t| relevant.iter().any(|&e| profiles[e].contains(t)))
                .map(|t| (n / df[t] as f64).ln())
                .collect();
            let avg = if idfs.is_empty() {
                None
            } else {
                Some(idfs.iter().sum::<f64>() / idfs.len() as f64)
            };
            (topic.to_string(), avg)
        })
        .collect()
}

/// Correlation between per-topic average matched IDF and the per-topic NDCG
/// difference `a − b`, with permutation-test p-values.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdfCorrelationReport {
    pub topics: usize,
    pub correlations: Correlations,
    pub spearman_p: f64,
    pub pearson_p: f64,
}

pub fn idf_delta_correlation(
    idf: &[(String, Option<f64>)],
    ndcg_a: &HashMap<&str, f64>,
    ndcg_b: &HashMap<&str, f64>,
    iterations: usize,
    seed: u64,
) -> Result<IdfCorrelationReport> {
    let mut xs = Vec::new();
    let mut ys = Vec::new();
    for (topic, value) in idf {
        if let (Some(v), Some(a), Some(b)) = (value, ndcg_a.get(topic.as_str()), ndcg_b.get(topic.as_str())) {
            xs.push(*v);
            ys.push(a - b);
        }
    }
    Ok(IdfCorrelationReport {
        topics: xs.len(),
        correlations: correlations(&xs, &ys)?,
        spearman_p: permutation_test(&xs, &ys, CorrelationKind::Spearman, iterations, seed)?,
        pearson_p: permutation_test(&xs, &ys, CorrelationKind::Pearson, iterations, seed)?,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    fn list(topic: &str, ids: &[&str]) -> RankedList {
        RankedList {
            topic_id: topic.into(),
            entries: ids.iter().enumerate().map(|(i, id)| (id.to_string(), -(i as f64))).collect(),
        }
    }

    fn qrels(topic: &str, relevant: &[&str]) -> Qrels {
        let mut q = Qrels::new();
        for r in relevant {
            q.insert(topic, *r, true);
        }
        q
    }

    #[test]
    fn ndcg_fixtures() {
        let q = qrels("t", &["a", "c"]);
        let v = ndcg(&list("t", &["a", "b", "c"]), &q, 10).unwrap();
        let expected = (1.0 + 1.0 / 4f64.log2()) / (1.0 + 1.0 / 3f64.log2());
        assert_abs_diff_eq!(v, expected, epsilon = 1e-12);
        assert_abs_diff_eq!(v, 0.9197, epsilon = 1e-4);
        assert_eq!(ndcg(&list("t", &["c", "a", "b"]), &q, 10), Some(1.0));
        assert_eq!(ndcg(&list("t", &["b", "d", "a"]), &q, 2), Some(0.0));
        assert_eq!(ndcg(&list("u", &["a"]), &q, 10), None);
    }

    #[test]
    fn precision_fixtures() {
        let q = qrels("t", &["a", "c"]);
        assert_eq!(precision_at_k(&list("t", &["a", "b", "c", "d", "e", "f"]), &q, 5), 0.4);
        assert_eq!(precision_at_k(&list("t", &["a", "b", "c"]), &qrels("t", &["a"]), 5), 0.2);
        let all: Vec<String> = (0..10).map(|i| format!("e{i}")).collect();
        let refs: Vec<&str> = all.iter().map(String::as_str).collect();
        assert_eq!(precision_at_k(&list("t", &refs), &qrels("t", &refs), 10), 1.0);
    }

    #[test]
    fn evaluate_handles_missing_and_unjudged_topics() {
        let mut q = qrels("t1", &["a"]);
        q.insert("t2", "b", true);
        q.insert("t3", "a", false);
        let run = vec![list("t1", &["a", "b"]), list("t9", &["a"])];
        let report = evaluate(&run, &q, 100, "x");
        assert_eq!(report.per_topic.len(), 2);
        assert_eq!(report.missing_topics, vec!["t2"]);
        assert_eq!(report.excluded_topics, vec!["t3", "t9"]);
        assert_eq!(report.mean_ndcg, 0.5);
    }

    #[test]
    fn t_test_textbook() {
        // differences [1, 1, 1, -1]: mean 0.5, sd 1, t = 1, df = 3
        let a = [2.0, 3.0, 4.0, 0.0];
        let b = [1.0, 2.0, 3.0, 1.0];
        let TTest::Defined { t, p, df } = paired_t_test(&a, &b).unwrap() else {
            panic!("expected defined test");
        };
        assert_abs_diff_eq!(t, 1.0, epsilon = 1e-12);
        assert_eq!(df, 3);
        // closed-form t CDF for three degrees of freedom
        let cdf = 0.5 + ((1.0 / 3f64.sqrt()) / (1.0 + 1.0 / 3.0) + (1.0 / 3f64.sqrt()).atan()) / std::f64::consts::PI;
        assert_abs_diff_eq!(p, 2.0 * (1.0 - cdf), epsilon = 1e-10);
        assert_abs_diff_eq!(p, 0.391, epsilon = 1e-3);

        let TTest::Defined { t: t2, p: p2, .. } = paired_t_test(&b, &a).unwrap() else {
            panic!("expected defined test");
        };
        assert_eq!(t2, -t);
        assert_eq!(p2, p);
        assert!(matches!(paired_t_test(&a, &a).unwrap(), TTest::Degenerate { .. }));
    }

    #[test]
    fn markers() {
        assert_eq!(significance_marker(0.005), "***");
        assert_eq!(significance_marker(0.03), "**");
        assert_eq!(significance_marker(0.07), "*");
        assert_eq!(significance_marker(0.2), "");
    }

    #[test]
    fn correlation_fixtures() {
        let x = [1.0, 2.0, 3.0, 4.0, 5.0];
        let lin: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let c = correlations(&x, &lin).unwrap();
        assert_abs_diff_eq!(c.pearson, 1.0, epsilon = 1e-12);
        assert_abs_diff_eq!(c.spearman, 1.0, epsilon = 1e-12);
        let cube: Vec<f64> = x.iter().map(|v| -v * v * v).collect();
        let c = correlations(&x, &cube).unwrap();
        assert!(c.pearson > -1.0 && c.pearson < 0.0);
        assert_abs_diff_eq!(c.spearman, -1.0, epsilon = 1e-12);
        assert!(correlations(&x, &[1.0; 5]).is_err());
        assert!(correlations(&x[..2], &lin[..2]).is_err());
    }

    #[test]
    fn average_ranks_ties() {
        assert_eq!(average_ranks(&[3.0, 1.0, 3.0, 2.0]), vec![3.5, 1.0, 3.5, 2.0]);
    }

    #[test]
    fn topics_tsv() {
        let text = "split\tvalidation\nq1\tred shoes\nq2\tblue hat\n";
        let topics = TopicSet::read_tsv(text.as_bytes(), "mem").unwrap();
        assert_eq!(topics.split, Split::Validation);
        assert_eq!(topics.len(), 2);
        let mut out = Vec::new();
        topics.write_tsv(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
        assert!(TopicSet::read_tsv("q1\tx\n".as_bytes(), "mem").is_err());
        assert!(TopicSet::read_tsv("split\ttest\nq\ta\nq\tb\n".as_bytes(), "mem").is_err());
    }

    #[test]
    fn qrels_trec() {
        let text = "t1 0 a 1\nt1 0 b 0\nt2 0 a 1\n";
        let q = Qrels::read_trec(text.as_bytes(), "mem").unwrap();
        assert!(q.is_relevant("t1", "a") && q.is_relevant("t2", "a"));
        assert!(!q.is_relevant("t1", "b"));
        let mut out = Vec::new();
        q.write_trec(&mut out).unwrap();
        assert_eq!(String::from_utf8(out).unwrap(), text);
        assert!(Qrels::read_trec("t1 0 a 2\n".as_bytes(), "mem").is_err());
    }
}
