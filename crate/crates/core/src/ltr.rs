//! Linear learning to rank: query-independent features, PageRank, pairwise
//! hinge-loss SGD, cross-validated feature fusion and approximately ideal
//! retrieval vectors.
//!
//! The pairwise ranker is trained with Pegasos-style SGD: at step `t` a
//! relevant and a non-relevant example of the same topic are drawn, the
//! weights shrink by `1 − η_t C` and, if the pair margin is below one, move
//! by `η_t (x⁺ − x⁻)`, with `η_t = 1 / (C t)`. Before training, each topic's
//! non-relevant examples are resampled with replacement to match its number
//! of relevant ones.

use std::collections::HashMap;
use std::io::{BufRead, Write};

use ndarray::{Array1, Array2, ArrayView2};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::eval::{ndcg, paired_t_test, precision_at_k, Qrels, TTest};
use crate::model::{project, ModelParams};
use crate::qlm::EntityLanguageModel;
use crate::retrieval::{CosineIndex, RankedList};
use crate::text::TokenId;

/// Related-product graphs, in feature order.
pub const GRAPH_KINDS: [&str; 4] = ["also_bought", "also_viewed", "bought_together", "buy_after_viewing"];

/// Number of query-independent features.
pub const QI_FEATURES: usize = 7;

pub const QI_FEATURE_NAMES: [&str; QI_FEATURES] = [
    "price",
    "description_length",
    "reciprocal_sales_rank",
    "pagerank_also_bought",
    "pagerank_also_viewed",
    "pagerank_bought_together",
    "pagerank_buy_after_viewing",
];

pub const DEFAULT_DAMPING: f64 = 0.85;
pub const DEFAULT_PAGERANK_ITERATIONS: usize = 200;

/// PageRank by power iteration with uniform teleportation. Dangling nodes
/// spread their mass uniformly. Stops when the L1 change drops below 1e-10
/// or after `max_iterations`.
pub fn pagerank(num_nodes: usize, edges: &[(usize, usize)], damping: f64, max_iterations: usize) -> Result<Vec<f64>> {
    if !(damping > 0.0 && damping < 1.0) {
        return Err(Error::Config(format!("damping must lie in (0, 1), got {damping}")));
    }
    if num_nodes == 0 {
        return Ok(Vec::new());
    }
    let mut out_degree = vec![0usize; num_nodes];
    for &(src, dst) in edges {
        if src >= num_nodes || dst >= num_nodes {
            return Err(Error::Config(format!("edge ({src}, {dst}) outside {num_nodes} nodes")));
        }
        out_degree[src] += 1;
    }
    let n = num_nodes as f64;
    let mut rank = vec![1.0 / n; num_nodes];
    let mut next = vec![0.0; num_nodes];
    for _ in 0..max_iterations {
        let dangling: f64 = rank.iter().zip(&out_degree).filter(|(_, &d)| d == 0).map(|(r, _)| r).sum();
        let base = (1.0 - damping) / n + damping * dangling / n;
        next.fill(base);
        for &(src, dst) in edges {
            next[dst] += damping * rank[src] / out_degree[src] as f64;
        }
        let change: f64 = rank.iter().zip(&next).map(|(a, b)| (a - b).abs()).sum();
        std::mem::swap(&mut rank, &mut next);
        if change < 1e-10 {
            break;
        }
    }
    Ok(rank)
}

/// Per-entity attributes from the QI attribute file.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct QiAttributes {
    pub entity_id: String,
    #[serde(default)]
    pub price: Option<f64>,
    #[serde(default)]
    pub sales_rank: Option<u64>,
    #[serde(default)]
    pub description_length: Option<u64>,
}

pub fn read_qi_attributes<R: BufRead>(input: R, source: &str) -> Result<Vec<QiAttributes>> {
    crate::text::read_jsonl(input, source)
}

/// Read a `src \t dst` edge list.
pub fn read_edge_list<R: BufRead>(input: R, source: &str) -> Result<Vec<(String, String)>> {
    let mut edges = Vec::new();
    for (lineno, line) in input.lines().enumerate() {
        let line = line.map_err(|e| Error::io(source, e))?;
        if line.trim().is_empty() {
            continue;
        }
        let (src, dst) = line
            .split_once('\t')
            .ok_or_else(|| Error::parse(source, lineno + 1, "expected `src<TAB>dst`"))?;
        edges.push((src.trim().to_string(), dst.trim().to_string()));
    }
    Ok(edges)
}

/// Query-independent features for every entity, with presence flags.
#[derive(Debug, Clone, PartialEq)]
pub struct QiTable {
    pub values: Vec<[f64; QI_FEATURES]>,
    pub present: Vec<[bool; QI_FEATURES]>,
}

impl QiTable {
    /// Assemble from optional attributes and up to four related-product
    /// graphs (in [`GRAPH_KINDS`] order). Missing values are imputed as 0.
    /// Edges naming unknown entities are ignored.
    pub fn build(
        entity_ids: &[String],
        attributes: &[QiAttributes],
        graphs: &[Option<Vec<(String, String)>>; 4],
    ) -> Result<Self> {
        let index: HashMap<&str, usize> = entity_ids.iter().enumerate().map(|(i, e)| (e.as_str(), i)).collect();
        let mut values = vec![[0.0; QI_FEATURES]; entity_ids.len()];
        let mut present = vec![[false; QI_FEATURES]; entity_ids.len()];
        for attr in attributes {
            let Some(&i) = index.get(attr.entity_id.as_str()) else {
                continue;
            };
            if let Some(p) = attr.price {
                values[i][0] = p;
                present[i][0] = true;
            }
            if let Some(len) = attr.description_length {
                values[i][1] = len as f64;
                present[i][1] = true;
            }
            if let Some(rank) = attr.sales_rank.filter(|&r| r > 0) {
                values[i][2] = 1.0 / rank as f64;
                present[i][2] = true;
            }
        }
        for (g, graph) in graphs.iter().enumerate() {
            let Some(edges) = graph else { continue };
            let resolved: Vec<(usize, usize)> = edges
                .iter()
                .filter_map(|(s, d)| Some((*index.get(s.as_str())?, *index.get(d.as_str())?)))
                .collect();
            let scores = pagerank(entity_ids.len(), &resolved, DEFAULT_DAMPING, DEFAULT_PAGERANK_ITERATIONS)?;
            for (i, s) in scores.into_iter().enumerate() {
                values[i][3 + g] = s;
                present[i][3 + g] = true;
            }
        }
        Ok(QiTable { values, present })
    }

    /// A table with every feature missing.
    pub fn empty(num_entities: usize) -> Self {
        QiTable {
            values: vec![[0.0; QI_FEATURES]; num_entities],
            present: vec![[false; QI_FEATURES]; num_entities],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum FeatureBlock {
    Qi,
    Qlm,
    Lse,
}

/// A combination of feature blocks.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSet(pub Vec<FeatureBlock>);

impl FeatureSet {
    pub fn name(&self) -> String {
        self.0
            .iter()
            .map(|b| match b {
                FeatureBlock::Qi => "QI",
                FeatureBlock::Qlm => "QLM",
                FeatureBlock::Lse => "LSE",
            })
            .collect::<Vec<_>>()
            .join(" + ")
    }

    pub fn contains(&self, block: FeatureBlock) -> bool {
        self.0.contains(&block)
    }

    /// The four combinations compared in the fusion experiment.
    pub fn fusion_rows() -> Vec<FeatureSet> {
        use FeatureBlock::*;
        vec![
            FeatureSet(vec![Qi]),
            FeatureSet(vec![Qi, Qlm]),
            FeatureSet(vec![Qi, Lse]),
            FeatureSet(vec![Qi, Qlm, Lse]),
        ]
    }
}

/// Features of one (topic, entity) pair.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureRow {
    pub entity: usize,
    pub label: bool,
    pub qi: [f64; QI_FEATURES],
    pub qi_present: [bool; QI_FEATURES],
    /// Log query likelihood.
    pub qlm: f64,
    pub qlm_present: bool,
    /// Cosine similarity between the projected query and the entity.
    pub lse: f64,
    pub lse_present: bool,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TopicFeatures {
    pub topic_id: String,
    pub rows: Vec<FeatureRow>,
}

/// Feature rows for every topic over all candidate entities.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureTable {
    pub entity_ids: Vec<String>,
    pub topics: Vec<TopicFeatures>,
}

/// Build feature rows for every topic and every entity.
///
/// A query with no scorable QLM term or no in-vocabulary LSE term gets 0 for
/// that feature and a cleared presence flag. Infinite QLM scores (possible
/// only without smoothing) are floored one unit below the topic's lowest
/// finite score.
pub fn build_features(
    topics: &[(String, Vec<TokenId>)],
    qrels: &Qrels,
    entity_ids: &[String],
    qlm: &EntityLanguageModel,
    lse: &ModelParams,
    qi: &QiTable,
) -> Result<FeatureTable> {
    let num_entities = entity_ids.len();
    if qlm.num_entities() != num_entities || lse.dims().num_entities != num_entities || qi.values.len() != num_entities {
        return Err(Error::Config("sub-models disagree on the number of entities".into()));
    }
    let index = CosineIndex::new(lse.entity_embeddings.view(), entity_ids)?;
    let mut out = Vec::with_capacity(topics.len());
    for (topic, query) in topics {
        let terms = qlm.scorable_terms(query);
        let mut qlm_scores: Vec<Option<f64>> = if terms.is_empty() {
            vec![None; num_entities]
        } else {
            (0..num_entities).map(|e| Some(qlm.score(e, &terms))).collect()
        };
        let floor = qlm_scores
            .iter()
            .flatten()
            .copied()
            .filter(|s| s.is_finite())
            .fold(f64::INFINITY, f64::min);
        for s in qlm_scores.iter_mut() {
            if let Some(v) = s {
                if !v.is_finite() {
                    *s = floor.is_finite().then_some(floor - 1.0);
                }
            }
        }
        let lse_scores = if query.is_empty() {
            None
        } else {
            let f = project(lse, query)?;
            Some(index.scores(f.view())?)
        };
        let rows = (0..num_entities)
            .map(|e| FeatureRow {
                entity: e,
                label: qrels.is_relevant(topic, &entity_ids[e]),
                qi: qi.values[e],
                qi_present: qi.present[e],
                qlm: qlm_scores[e].unwrap_or(0.0),
                qlm_present: qlm_scores[e].is_some(),
                lse: lse_scores.as_ref().map_or(0.0, |s| s[e]),
                lse_present: lse_scores.is_some(),
            })
            .collect();
        out.push(TopicFeatures {
            topic_id: topic.clone(),
            rows,
        });
    }
    Ok(FeatureTable {
        entity_ids: entity_ids.to_vec(),
        topics: out,
    })
}

impl FeatureTable {
    /// QI attributes missing for at least one entity; these get an extra
    /// presence-indicator column.
    fn qi_indicator_columns(&self) -> Vec<usize> {
        (0..QI_FEATURES)
            .filter(|&j| self.topics.iter().flat_map(|t| &t.rows).any(|r| !r.qi_present[j]))
            .collect()
    }

    /// Column names of the design matrix for `set`.
    pub fn column_names(&self, set: &FeatureSet) -> Vec<String> {
        let mut names = Vec::new();
        for block in &set.0 {
            match block {
                FeatureBlock::Qi => {
                    names.extend(QI_FEATURE_NAMES.iter().map(|s| s.to_string()));
                    names.extend(self.qi_indicator_columns().iter().map(|&j| format!("{}_present", QI_FEATURE_NAMES[j])));
                }
                FeatureBlock::Qlm => names.push("qlm".into()),
                FeatureBlock::Lse => names.push("lse".into()),
            }
        }
        names
    }

    /// Design matrix rows for `set`, one per (topic, entity), in table order.
    pub fn design_rows(&self, set: &FeatureSet, topic: usize) -> Vec<Vec<f64>> {
        let indicators = self.qi_indicator_columns();
        self.topics[topic]
            .rows
            .iter()
            .map(|r| {
                let mut x = Vec::new();
                for block in &set.0 {
                    match block {
                        FeatureBlock::Qi => {
                            x.extend_from_slice(&r.qi);
                            x.extend(indicators.iter().map(|&j| f64::from(u8::from(r.qi_present[j]))));
                        }
                        FeatureBlock::Qlm => x.push(r.qlm),
                        FeatureBlock::Lse => x.push(r.lse),
                    }
                }
                x
            })
            .collect()
    }
}

/// Z-score standardization fitted on training rows. Constant columns map to 0.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Standardizer {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl Standardizer {
    pub fn fit<'a>(rows: impl IntoIterator<Item = &'a [f64]>, dim: usize) -> Self {
        let mut n = 0usize;
        let mut sum = vec![0.0; dim];
        let mut sq = vec![0.0; dim];
        let rows: Vec<&[f64]> = rows.into_iter().collect();
        for r in &rows {
            n += 1;
            for j in 0..dim {
                sum[j] += r[j];
            }
        }
        let mean: Vec<f64> = sum.iter().map(|s| if n == 0 { 0.0 } else { s / n as f64 }).collect();
        for r in &rows {
            for j in 0..dim {
                sq[j] += (r[j] - mean[j]).powi(2);
            }
        }
        let scale = sq
            .iter()
            .map(|s| {
                let sd = if n == 0 { 0.0 } else { (s / n as f64).sqrt() };
                if sd > 0.0 { 1.0 / sd } else { 0.0 }
            })
            .collect();
        Standardizer { mean, scale }
    }

    pub fn apply(&self, row: &[f64]) -> Vec<f64> {
        row.iter()
            .zip(self.mean.iter().zip(&self.scale))
            .map(|(v, (m, s))| (v - m) * s)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RankSvmConfig {
    /// Regularization strength.
    pub c: f64,
    /// Number of sampled pairs.
    pub iterations: usize,
    pub seed: u64,
}

impl Default for RankSvmConfig {
    fn default() -> Self {
        RankSvmConfig {
            c: 1.0,
            iterations: 100_000,
            seed: 1,
        }
    }
}

/// A training example for the pairwise ranker. Pairs are only formed within
/// the same group.
#[derive(Debug, Clone, PartialEq)]
pub struct RankingExample {
    pub group: usize,
    pub features: Vec<f64>,
    pub label: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearRanker {
    pub weights: Vec<f64>,
    pub config: RankSvmConfig,
}

impl LinearRanker {
    pub fn score(&self, features: &[f64]) -> f64 {
        self.weights.iter().zip(features).map(|(w, x)| w * x).sum()
    }
}

/// Train a linear pairwise ranker with hinge loss and L2 regularization.
pub fn train_ranksvm(examples: &[RankingExample], config: &RankSvmConfig) -> Result<LinearRanker> {
    if !(config.c > 0.0) || config.iterations == 0 {
        return Err(Error::Config("RankSVM needs c > 0 and at least one iteration".into()));
    }
    let dim = examples.first().map_or(0, |e| e.features.len());
    if examples.iter().any(|e| e.features.len() != dim) {
        return Err(Error::Config("examples differ in feature dimensionality".into()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);

    let mut groups: HashMap<usize, (Vec<usize>, Vec<usize>)> = HashMap::new();
    for (i, e) in examples.iter().enumerate() {
        let entry = groups.entry(e.group).or_default();
        if e.label { entry.0.push(i) } else { entry.1.push(i) }
    }
    let mut group_ids: Vec<usize> = groups.keys().copied().collect();
    group_ids.sort_unstable();

    // balanced (positive, sampled negatives) per usable group
    let mut pools: Vec<(Vec<usize>, Vec<usize>)> = Vec::new();
    for g in group_ids {
        let (pos, neg) = &groups[&g];
        if pos.is_empty() || neg.is_empty() {
            continue;
        }
        let sampled: Vec<usize> = (0..pos.len()).map(|_| neg[rng.random_range(0..neg.len())]).collect();
        pools.push((pos.clone(), sampled));
    }
    if pools.is_empty() {
        return Err(Error::SingleClass);
    }
    let cumulative: Vec<usize> = pools
        .iter()
        .scan(0, |acc, (p, _)| {
            *acc += p.len();
            Some(*acc)
        })
        .collect();
    let total = *cumulative.last().expect("nonempty");

    let mut w = vec![0.0; dim];
    let mut diff = vec![0.0; dim];
    for t in 1..=config.iterations {
        let draw = rng.random_range(0..total);
        let g = cumulative.partition_point(|&end| end <= draw);
        let (pos, neg) = &pools[g];
        let p = &examples[pos[rng.random_range(0..pos.len())]].features;
        let n = &examples[neg[rng.random_range(0..neg.len())]].features;
        for j in 0..dim {
            diff[j] = p[j] - n[j];
        }
        let eta = 1.0 / (config.c * t as f64);
        let margin: f64 = w.iter().zip(&diff).map(|(a, b)| a * b).sum();
        let shrink = 1.0 - eta * config.c;
        for wj in w.iter_mut() {
            *wj *= shrink;
        }
        if margin < 1.0 {
            for (wj, dj) in w.iter_mut().zip(&diff) {
                *wj += eta * dj;
            }
        }
    }
    Ok(LinearRanker {
        weights: w,
        config: *config,
    })
}

/// Assign topics to `folds` folds after a seeded shuffle; returns the fold of
/// each topic.
pub fn fold_partition(num_topics: usize, folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds == 0 || num_topics < folds {
        return Err(Error::TooFewTopics { folds, topics: num_topics });
    }
    let mut order: Vec<usize> = (0..num_topics).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let mut assignment = vec![0; num_topics];
    for (pos, &topic) in order.iter().enumerate() {
        assignment[topic] = pos % folds;
    }
    Ok(assignment)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionTopicResult {
    pub topic_id: String,
    pub ndcg: f64,
    pub p5: f64,
    pub p10: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionRow {
    pub feature_set: String,
    pub ndcg: f64,
    pub p5: f64,
    pub p10: f64,
    pub per_topic: Vec<FusionTopicResult>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SignificanceTest {
    pub system: String,
    pub baseline: String,
    pub ndcg: TTest,
    pub p5: TTest,
    pub p10: TTest,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionReport {
    pub folds: usize,
    pub cutoff: usize,
    pub rows: Vec<FusionRow>,
    pub significance: Option<SignificanceTest>,
}

impl FusionReport {
    pub fn row(&self, name: &str) -> Option<&FusionRow> {
        self.rows.iter().find(|r| r.feature_set == name)
    }

    /// CSV with one row per feature set and significance markers on the
    /// tested system's row.
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "feature_set,ndcg@{},p@5,p@10,ndcg_sig,p@5_sig,p@10_sig", self.cutoff)?;
        for row in &self.rows {
            let (a, b, c) = match &self.significance {
                Some(s) if s.system == row.feature_set => (s.ndcg.marker(), s.p5.marker(), s.p10.marker()),
                _ => ("", "", ""),
            };
            writeln!(out, "{},{:.6},{:.6},{:.6},{a},{b},{c}", row.feature_set, row.ndcg, row.p5, row.p10)?;
        }
        Ok(())
    }
}

fn metrics_for(list: &RankedList, qrels: &Qrels, cutoff: usize) -> FusionTopicResult {
    FusionTopicResult {
        topic_id: list.topic_id.clone(),
        ndcg: ndcg(list, qrels, cutoff).unwrap_or(0.0),
        p5: precision_at_k(list, qrels, 5),
        p10: precision_at_k(list, qrels, 10),
    }
}

/// Topic-level k-fold cross validation of a linear ranker over each feature
/// set. Only topics with at least one relevant entity take part.
///
/// When both `QI + QLM + LSE` and `QI + QLM` are among the sets, a paired
/// t-test between them is reported.
pub fn cross_validated_fusion(
    table: &FeatureTable,
    qrels: &Qrels,
    sets: &[FeatureSet],
    folds: usize,
    config: &RankSvmConfig,
    cutoff: usize,
) -> Result<FusionReport> {
    let topics: Vec<usize> = (0..table.topics.len())
        .filter(|&t| qrels.num_relevant(&table.topics[t].topic_id) > 0)
        .collect();
    let assignment = fold_partition(topics.len(), folds, config.seed)?;

    let mut rows = Vec::with_capacity(sets.len());
    for set in sets {
        let design: Vec<Vec<Vec<f64>>> = topics.iter().map(|&t| table.design_rows(set, t)).collect();
        let dim = table.column_names(set).len();
        let mut per_topic: Vec<Option<FusionTopicResult>> = vec![None; topics.len()];
        for fold in 0..folds {
            let train: Vec<usize> = (0..topics.len()).filter(|&i| assignment[i] != fold).collect();
            let test: Vec<usize> = (0..topics.len()).filter(|&i| assignment[i] == fold).collect();
            debug_assert!(train.iter().all(|i| !test.contains(i)));

            let scaler = Standardizer::fit(train.iter().flat_map(|&i| design[i].iter().map(Vec::as_slice)), dim);
            let examples: Vec<RankingExample> = train
                .iter()
                .flat_map(|&i| {
                    let topic = &table.topics[topics[i]];
                    design[i].iter().zip(&topic.rows).map(move |(x, r)| (i, x, r.label))
                })
                .map(|(i, x, label)| RankingExample {
                    group: i,
                    features: scaler.apply(x),
                    label,
                })
                .collect();
            let ranker = train_ranksvm(&examples, &RankSvmConfig { seed: config.seed.wrapping_add(fold as u64), ..*config })?;
            for &i in &test {
                let topic = &table.topics[topics[i]];
                let scored = design[i]
                    .iter()
                    .zip(&topic.rows)
                    .map(|(x, r)| (table.entity_ids[r.entity].clone(), ranker.score(&scaler.apply(x))))
                    .collect();
                let list = RankedList::from_scores(topic.topic_id.clone(), scored);
                per_topic[i] = Some(metrics_for(&list, qrels, cutoff));
            }
        }
        let per_topic: Vec<FusionTopicResult> = per_topic.into_iter().map(|r| r.expect("every topic is tested once")).collect();
        let n = per_topic.len() as f64;
        rows.push(FusionRow {
            feature_set: set.name(),
            ndcg: per_topic.iter().map(|r| r.ndcg).sum::<f64>() / n,
            p5: per_topic.iter().map(|r| r.p5).sum::<f64>() / n,
            p10: per_topic.iter().map(|r| r.p10).sum::<f64>() / n,
            per_topic,
        });
    }

    let system = FeatureSet(vec![FeatureBlock::Qi, FeatureBlock::Qlm, FeatureBlock::Lse]).name();
    let baseline = FeatureSet(vec![FeatureBlock::Qi, FeatureBlock::Qlm]).name();
    let significance = match (
        rows.iter().find(|r| r.feature_set == system),
        rows.iter().find(|r| r.feature_set == baseline),
    ) {
        (Some(a), Some(b)) => {
            let col = |r: &FusionRow, f: fn(&FusionTopicResult) -> f64| r.per_topic.iter().map(f).collect::<Vec<_>>();
            Some(SignificanceTest {
                system: system.clone(),
                baseline: baseline.clone(),
                ndcg: paired_t_test(&col(a, |r| r.ndcg), &col(b, |r| r.ndcg))?,
                p5: paired_t_test(&col(a, |r| r.p5), &col(b, |r| r.p5))?,
                p10: paired_t_test(&col(a, |r| r.p10), &col(b, |r| r.p10))?,
            })
        }
        _ => None,
    };
    Ok(FusionReport {
        folds,
        cutoff,
        rows,
        significance,
    })
}

/// Approximately ideal retrieval vector of one topic.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdealVector {
    pub topic_id: String,
    pub vector: Vec<f64>,
}

/// L2-normalized rows; zero rows stay zero.
pub fn normalize_rows(matrix: ArrayView2<'_, f64>) -> Array2<f64> {
    let mut out = matrix.to_owned();
    for mut row in out.rows_mut() {
        let norm = row.dot(&row).sqrt();
        if norm > 0.0 {
            row /= norm;
        }
    }
    out
}

/// Fit a per-topic pairwise ranker over normalized entity representations;
/// the weight vector approximates the ideal retrieval direction. Topics with
/// fewer than two relevant entities are skipped (`None`).
pub fn ideal_vector(
    topic_id: &str,
    qrels: &Qrels,
    entity_ids: &[String],
    entity_matrix: ArrayView2<'_, f64>,
    config: &RankSvmConfig,
) -> Result<Option<IdealVector>> {
    if qrels.num_relevant(topic_id) < 2 {
        return Ok(None);
    }
    let normalized = normalize_rows(entity_matrix);
    let examples: Vec<RankingExample> = normalized
        .rows()
        .into_iter()
        .zip(entity_ids)
        .map(|(row, id)| RankingExample {
            group: 0,
            features: row.to_vec(),
            label: qrels.is_relevant(topic_id, id),
        })
        .collect();
    let ranker = train_ranksvm(&examples, config)?;
    Ok(Some(IdealVector {
        topic_id: topic_id.to_string(),
        vector: ranker.weights,
    }))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdealTopicResult {
    pub topic_id: String,
    pub relevant: usize,
    pub ideal_ndcg: f64,
    pub projected_ndcg: f64,
    pub vector: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdealReport {
    pub cutoff: usize,
    pub topics: Vec<IdealTopicResult>,
    /// Topics skipped because they have fewer than two relevant entities.
    pub skipped: Vec<String>,
    pub mean_ideal_ndcg: f64,
    pub mean_projected_ndcg: f64,
}

impl IdealReport {
    pub fn write_csv<W: Write>(&self, mut out: W) -> std::io::Result<()> {
        writeln!(out, "topic_id,relevant,ideal_ndcg,projected_ndcg")?;
        for t in &self.topics {
            writeln!(out, "{},{},{:.6},{:.6}", t.topic_id, t.relevant, t.ideal_ndcg, t.projected_ndcg)?;
        }
        Ok(())
    }
}

/// Compare the NDCG of approximately ideal vectors with that of the projected
/// queries, topic by topic. Projected queries with no in-vocabulary term
/// score zero.
pub fn ideal_vector_analysis(
    params: &ModelParams,
    entity_ids: &[String],
    topics: &[(String, Vec<TokenId>)],
    qrels: &Qrels,
    config: &RankSvmConfig,
    cutoff: usize,
) -> Result<IdealReport> {
    let index = CosineIndex::new(params.entity_embeddings.view(), entity_ids)?;
    let mut results = Vec::new();
    let mut skipped = Vec::new();
    for (topic, query) in topics {
        let Some(ideal) = ideal_vector(topic, qrels, entity_ids, params.entity_embeddings.view(), config)? else {
            skipped.push(topic.clone());
            continue;
        };
        let ideal_list = index.rank(topic, Array1::from(ideal.vector.clone()).view())?;
        let projected_ndcg = if query.is_empty() {
            0.0
        } else {
            let f = project(params, query)?;
            ndcg(&index.rank(topic, f.view())?, qrels, cutoff).unwrap_or(0.0)
        };
        results.push(IdealTopicResult {
            topic_id: topic.clone(),
            relevant: qrels.num_relevant(topic),
            ideal_ndcg: ndcg(&ideal_list, qrels, cutoff).unwrap_or(0.0),
            projected_ndcg,
            vector: ideal.vector,
        });
    }
    let n = results.len().max(1) as f64;
    Ok(IdealReport {
        cutoff,
        mean_ideal_ndcg: results.iter().map(|r| r.ideal_ndcg).sum::<f64>() / n,
        mean_projected_ndcg: results.iter().map(|r| r.projected_ndcg).sum::<f64>() / n,
        topics: results,
        skipped,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_abs_diff_eq;

    #[test]
    fn pagerank_symmetric_graphs() {
        let complete: Vec<(usize, usize)> = (0..4).flat_map(|i| (0..4).filter(move |&j| j != i).map(move |j| (i, j))).collect();
        for s in pagerank(4, &complete, 0.85, 200).unwrap() {
            assert_abs_diff_eq!(s, 0.25, epsilon = 1e-12);
        }
        for s in pagerank(2, &[(0, 1), (1, 0)], 0.85, 200).unwrap() {
            assert_abs_diff_eq!(s, 0.5, epsilon = 1e-12);
        }
        assert_eq!(pagerank(3, &[], 0.85, 200).unwrap(), vec![1.0 / 3.0; 3]);
        assert!(pagerank(3, &[], 1.0, 200).is_err());
        assert!(pagerank(3, &[(0, 5)], 0.85, 200).is_err());
    }

    #[test]
    fn qi_table_imputes_missing() {
        let ids: Vec<String> = vec!["a".into(), "b".into()];
        let attrs = vec![QiAttributes { entity_id: "a".into(), price: Some(9.5), sales_rank: Some(4), description_length: None }];
        let graphs = [Some(vec![("a".to_string(), "b".to_string())]), None, None, None];
        let table = QiTable::build(&ids, &attrs, &graphs).unwrap();
        assert_eq!(table.values[0][0], 9.5);
        assert_eq!(table.values[0][2], 0.25);
        assert!(!table.present[0][1]);
        assert!(!table.present[1][0]);
        assert!(table.present[1][3] && !table.present[1][4]);
        assert!(table.values[1][3] > table.values[0][3]);
    }

    #[test]
    fn standardizer_handles_constant_columns() {
        let rows = [vec![1.0, 5.0], vec![3.0, 5.0]];
        let s = Standardizer::fit(rows.iter().map(Vec::as_slice), 2);
        assert_eq!(s.apply(&[3.0, 5.0]), vec![1.0, 0.0]);
        assert_eq!(s.apply(&[1.0, 7.0]), vec![-1.0, 0.0]);
    }

    #[test]
    fn separable_one_dimensional_ranker() {
        let examples: Vec<RankingExample> = (0..20)
            .map(|i| RankingExample { group: 0, features: vec![if i < 5 { 1.0 } else { -1.0 }], label: i < 5 })
            .collect();
        let r = train_ranksvm(&examples, &RankSvmConfig { iterations: 1000, ..Default::default() }).unwrap();
        assert!(r.weights[0] > 0.0);
    }

    #[test]
    fn single_class_is_rejected() {
        let examples = vec![RankingExample { group: 0, features: vec![1.0], label: true }];
        assert!(matches!(train_ranksvm(&examples, &RankSvmConfig::default()), Err(Error::SingleClass)));
        // both classes overall, but never within one group
        let examples = vec![
            RankingExample { group: 0, features: vec![1.0], label: true },
            RankingExample { group: 1, features: vec![0.0], label: false },
        ];
        assert!(matches!(train_ranksvm(&examples, &RankSvmConfig::default()), Err(Error::SingleClass)));
    }

    #[test]
    fn folds_partition_topics() {
        let a = fold_partition(23, 10, 3).unwrap();
        for f in 0..10 {
            let size = a.iter().filter(|&&x| x == f).count();
            assert!(size == 2 || size == 3);
        }
        assert_eq!(a, fold_partition(23, 10, 3).unwrap());
        assert!(matches!(fold_partition(9, 10, 3), Err(Error::TooFewTopics { folds: 10, topics: 9 })));
    }

    #[test]
    fn ideal_vector_separable_cluster() {
        let ids: Vec<String> = (0..5).map(|i| format!("e{i}")).collect();
        let m = ndarray::array![[1.0, 0.1], [0.9, -0.1], [-1.0, 0.0], [-0.8, 0.3], [-1.0, -0.2]];
        let mut q = Qrels::new();
        q.insert("t", "e0", true);
        q.insert("t", "e1", true);
        let v = ideal_vector("t", &q, &ids, m.view(), &RankSvmConfig::default()).unwrap().unwrap();
        assert!(v.vector[0] > 0.0);
        let index = CosineIndex::new(m.view(), &ids).unwrap();
        let list = index.rank("t", Array1::from(v.vector).view()).unwrap();
        assert_eq!(ndcg(&list, &q, 100), Some(1.0));

        let mut single = Qrels::new();
        single.insert("t", "e0", true);
        assert!(ideal_vector("t", &single, &ids, m.view(), &RankSvmConfig::default()).unwrap().is_none());
    }
}
