//! `lse`: build vocabularies, train latent entity models, produce and
//! evaluate rankings, and run the fusion and ideal-vector analyses.

mod manifest;

use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{bail, Context, Result};
use clap::{Args, Parser, Subcommand};
use log::{info, warn};
use rayon::prelude::*;
use serde::Serialize;
use serde_json::json;

use lse::eval::{
    evaluate, idf_delta_correlation, idf_match_analysis, paired_t_test, topics_from_categories, MetricReport, Qrels,
    Split, TTest, TopicSet, DEFAULT_CUTOFF,
};
use lse::gradcheck::{gradient_check, random_problem, GradCheckReport};
use lse::ltr::{
    build_features, cross_validated_fusion, ideal_vector_analysis, read_edge_list, read_qi_attributes, FeatureSet,
    QiTable, RankSvmConfig, GRAPH_KINDS,
};
use lse::model::{Dims, ModelParams};
use lse::persist::{load_model, save_model, ModelHeader, ModelMeta, FORMAT_VERSION};
use lse::qlm::{self, sweep_lambda};
use lse::retrieval::{rank_entities, read_run, write_run, RankedList, DEFAULT_TOP_K};
use lse::text::{
    build_vocabulary, encode_corpus, read_jsonl, CategoryPath, Corpus, RawDocument, Vocabulary,
    MAX_VOCABULARY_SIZE,
};
use lse::train::{train, write_epoch_log, TrainConfig};

use manifest::{MissingInput, Recorder};

#[derive(Parser)]
#[command(name = "lse", version, about = "Latent semantic entity models for product search")]
struct Cli {
    #[command(flatten)]
    global: Global,
    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct Global {
    /// Seed for every random choice; overrides the seed in a config file.
    #[arg(long, global = true)]
    seed: Option<u64>,
    /// Worker threads. Outputs do not depend on this value.
    #[arg(long, global = true, default_value_t = 1)]
    threads: usize,
    /// Root for relative input paths.
    #[arg(long, global = true, env = "LSE_DATA_DIR")]
    data_dir: Option<PathBuf>,
}

#[derive(Subcommand)]
enum Command {
    /// Build the vocabulary from a JSON-lines corpus.
    BuildVocab {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = MAX_VOCABULARY_SIZE)]
        max_size: usize,
    },
    /// Turn category paths into topics and judgments.
    ExtractTopics {
        #[arg(long)]
        categories: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value = "test")]
        split: Split,
        /// Topic id prefix.
        #[arg(long, default_value = "c")]
        prefix: String,
    },
    /// Train a latent entity model.
    Train(TrainArgs),
    /// Rank entities for each topic with a trained model.
    Rank {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        topics: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        top_k: usize,
        #[arg(long, default_value = "lse")]
        tag: String,
    },
    /// Rank entities with the query-likelihood baseline.
    Qlm {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        topics: PathBuf,
        #[arg(long)]
        out: PathBuf,
        /// Jelinek-Mercer weight of the corpus model.
        #[arg(long, default_value_t = 0.5)]
        lambda: f64,
        #[arg(long, default_value_t = DEFAULT_TOP_K)]
        top_k: usize,
        #[arg(long, default_value = "qlm")]
        tag: String,
    },
    /// Evaluate a run against judgments, optionally testing it against a baseline run.
    Eval {
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long)]
        baseline: Option<PathBuf>,
        #[arg(long, default_value_t = DEFAULT_CUTOFF)]
        cutoff: usize,
    },
    /// Sweep the QLM smoothing weight over 0, 0.05, ..., 1 on validation topics.
    SweepLambda {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        topics: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = DEFAULT_CUTOFF)]
        cutoff: usize,
    },
    /// Cross-validated fusion of query-independent, QLM and LSE features.
    Fuse(FuseArgs),
    /// Approximate ideal retrieval vectors and compare them with projected queries.
    IdealVector {
        #[arg(long)]
        model: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        topics: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[command(flatten)]
        svm: SvmArgs,
        #[arg(long, default_value_t = DEFAULT_CUTOFF)]
        cutoff: usize,
    },
    /// Correlate the IDF of matched query terms with per-topic NDCG differences.
    IdfCorrelation {
        #[arg(long)]
        corpus: PathBuf,
        #[arg(long)]
        vocab: PathBuf,
        #[arg(long)]
        topics: PathBuf,
        #[arg(long)]
        qrels: PathBuf,
        /// Run whose NDCG is the minuend.
        #[arg(long)]
        run_a: PathBuf,
        #[arg(long)]
        run_b: PathBuf,
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10_000)]
        iterations: usize,
        #[arg(long, default_value_t = DEFAULT_CUTOFF)]
        cutoff: usize,
    },
    /// Compare analytic gradients with finite differences on random models.
    GradCheck {
        #[arg(long)]
        out: PathBuf,
        #[arg(long, default_value_t = 10)]
        models: u64,
        #[arg(long, default_value_t = 5)]
        entities: usize,
        #[arg(long, default_value_t = 4)]
        word_dim: usize,
        #[arg(long, default_value_t = 3)]
        entity_dim: usize,
        #[arg(long, default_value_t = 9)]
        vocab_size: usize,
        #[arg(long, default_value_t = 2)]
        n: usize,
        #[arg(long, default_value_t = 2)]
        z: usize,
        #[arg(long, default_value_t = 8)]
        batch: usize,
        #[arg(long, default_value_t = 1e-5)]
        eps: f64,
        #[arg(long, default_value_t = 1e-4)]
        tolerance: f64,
    },
}

#[derive(Args, Serialize)]
struct TrainArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// TOML file with training hyperparameters; flags override it.
    #[arg(long)]
    config: Option<PathBuf>,
    #[arg(long)]
    validation_topics: Option<PathBuf>,
    #[arg(long)]
    validation_qrels: Option<PathBuf>,
    #[arg(long)]
    e_v: Option<usize>,
    #[arg(long)]
    e_e: Option<usize>,
    #[arg(long)]
    n: Option<usize>,
    #[arg(long)]
    z: Option<usize>,
    #[arg(long)]
    m: Option<usize>,
    #[arg(long)]
    lambda: Option<f64>,
    #[arg(long)]
    epochs: Option<usize>,
}

#[derive(Args, Clone, Copy, Serialize)]
struct SvmArgs {
    /// Regularization strength of the pairwise ranker.
    #[arg(long, default_value_t = 1.0)]
    c: f64,
    /// Sampled training pairs.
    #[arg(long, default_value_t = 100_000)]
    pairs: usize,
}

#[derive(Args)]
struct FuseArgs {
    #[arg(long)]
    corpus: PathBuf,
    #[arg(long)]
    vocab: PathBuf,
    #[arg(long)]
    model: PathBuf,
    #[arg(long)]
    topics: PathBuf,
    #[arg(long)]
    qrels: PathBuf,
    #[arg(long)]
    out: PathBuf,
    /// JSON-lines entity attributes (price, sales rank, description length).
    #[arg(long)]
    qi_attributes: Option<PathBuf>,
    /// Directory holding `<graph>.tsv` edge lists; absent files are skipped.
    #[arg(long)]
    graph_dir: Option<PathBuf>,
    #[arg(long, default_value_t = 0.5)]
    lambda: f64,
    #[arg(long, default_value_t = 10)]
    folds: usize,
    #[command(flatten)]
    svm: SvmArgs,
    #[arg(long, default_value_t = DEFAULT_CUTOFF)]
    cutoff: usize,
}

const DEFAULT_SEED: u64 = 1;

fn open(path: &Path) -> Result<BufReader<File>> {
    Ok(BufReader::new(File::open(path).with_context(|| format!("opening {}", path.display()))?))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path).with_context(|| format!("creating {}", path.display()))?))
}

fn source(path: &Path) -> String {
    path.display().to_string()
}

fn read_corpus(path: &Path) -> Result<Vec<RawDocument>> {
    Ok(read_jsonl(open(path)?, &source(path))?)
}

fn read_vocab(path: &Path) -> Result<Vocabulary> {
    Ok(Vocabulary::read_tsv(open(path)?, &source(path))?)
}

fn read_topics(path: &Path) -> Result<TopicSet> {
    Ok(TopicSet::read_tsv(open(path)?, &source(path))?)
}

fn read_qrels(path: &Path) -> Result<Qrels> {
    Ok(Qrels::read_trec(open(path)?, &source(path))?)
}

fn load_corpus(path: &Path, vocab: &Vocabulary) -> Result<Corpus> {
    let corpus = encode_corpus(&read_corpus(path)?, vocab)?;
    info!(
        "{} documents, {} entities, {} tokens ({} out of vocabulary)",
        corpus.documents().len(),
        corpus.num_entities(),
        corpus.total_tokens(),
        corpus.dropped_tokens()
    );
    Ok(corpus)
}

/// Load a model and make sure it was trained with `vocab`.
fn load_checked_model(path: &Path, vocab: &Vocabulary) -> Result<(ModelHeader, ModelParams)> {
    let (header, params) = load_model(path)?;
    let hash = vocab.content_hash();
    if header.vocab_hash != hash {
        bail!("model {} was trained with vocabulary {}, not {hash}", path.display(), header.vocab_hash);
    }
    Ok((header, params))
}

fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut out = create(path)?;
    serde_json::to_writer_pretty(&mut out, value)?;
    out.write_all(b"\n")?;
    out.flush()?;
    Ok(())
}

fn prepare_out(dir: &Path) -> Result<()> {
    fs::create_dir_all(dir).with_context(|| format!("creating output directory {}", dir.display()))
}

#[derive(Serialize)]
struct SkippedTopic {
    topic_id: String,
    reason: String,
}

fn write_run_file(path: &Path, lists: &[RankedList], tag: &str, top_k: usize) -> Result<()> {
    let mut out = create(path)?;
    write_run(&mut out, lists, tag, top_k)?;
    out.flush()?;
    Ok(())
}

/// Collect per-topic results, moving all-out-of-vocabulary topics to the
/// skipped list.
fn split_skipped(results: Vec<lse::Result<RankedList>>) -> Result<(Vec<RankedList>, Vec<SkippedTopic>)> {
    let mut lists = Vec::new();
    let mut skipped = Vec::new();
    for r in results {
        match r {
            Ok(list) => lists.push(list),
            Err(lse::Error::AllOutOfVocabulary(topic)) => {
                warn!("topic {topic}: no query word is in the vocabulary; skipped");
                skipped.push(SkippedTopic {
                    topic_id: topic,
                    reason: "no query word in vocabulary".into(),
                });
            }
            Err(e) => return Err(e.into()),
        }
    }
    Ok((lists, skipped))
}

fn cmd_build_vocab(rec: &mut Recorder, corpus: &Path, out: &Path, max_size: usize) -> Result<serde_json::Value> {
    let corpus = rec.input("corpus", corpus)?;
    let docs = read_corpus(&corpus)?;
    let vocab = build_vocabulary(&docs, max_size)?;
    info!("vocabulary of {} tokens from {} documents", vocab.len(), docs.len());
    prepare_out(out)?;
    let mut w = create(&out.join("vocabulary.tsv"))?;
    vocab.write_tsv(&mut w)?;
    w.flush()?;
    Ok(json!({ "max_size": max_size, "size": vocab.len(), "sha256": vocab.content_hash() }))
}

fn cmd_extract_topics(rec: &mut Recorder, categories: &Path, out: &Path, split: Split, prefix: &str) -> Result<serde_json::Value> {
    let path = rec.input("categories", categories)?;
    let categories: Vec<CategoryPath> = read_jsonl(open(&path)?, &source(&path))?;
    let built = topics_from_categories(&categories, split, prefix)?;
    info!("{} topics, {} shallow categories skipped", built.topics.len(), built.skipped.len());
    prepare_out(out)?;
    let mut w = create(&out.join("topics.tsv"))?;
    built.topics.write_tsv(&mut w)?;
    w.flush()?;
    let mut w = create(&out.join("qrels.txt"))?;
    built.qrels.write_trec(&mut w)?;
    w.flush()?;
    write_json(&out.join("skipped_categories.json"), &built.skipped)?;
    Ok(json!({ "split": split.to_string(), "prefix": prefix }))
}

fn cmd_train(rec: &mut Recorder, args: &TrainArgs, seed: Option<u64>) -> Result<(serde_json::Value, u64)> {
    let corpus_path = rec.input("corpus", &args.corpus)?;
    let vocab_path = rec.input("vocabulary", &args.vocab)?;
    let mut config = match rec.optional_input("config", args.config.as_deref())? {
        Some(p) => TrainConfig::from_toml(&fs::read_to_string(&p)?)?,
        None => TrainConfig::default(),
    };
    macro_rules! set {
        ($($field:ident),*) => { $( if let Some(v) = args.$field { config.$field = v; } )* };
    }
    set!(e_v, e_e, n, z, m, lambda, epochs);
    if let Some(s) = seed {
        config.seed = s;
    }
    config.validate()?;

    let vocab = read_vocab(&vocab_path)?;
    let corpus = load_corpus(&corpus_path, &vocab)?;
    let (validation, qrels) = match (&args.validation_topics, &args.validation_qrels) {
        (Some(t), Some(q)) => {
            let t = rec.input("validation topics", t)?;
            let q = rec.input("validation qrels", q)?;
            (read_topics(&t)?.encode(&vocab), read_qrels(&q)?)
        }
        (None, None) => (Vec::new(), Qrels::new()),
        _ => bail!("--validation-topics and --validation-qrels go together"),
    };

    let outcome = train(&corpus, vocab.len(), &validation, &qrels, &config)?;
    prepare_out(&args.out)?;
    let header = ModelHeader {
        format_version: FORMAT_VERSION,
        dims: outcome.params.dims(),
        vocab_hash: vocab.content_hash(),
        entity_ids: corpus.entities().to_vec(),
        config: serde_json::to_value(&config)?,
    };
    save_model(&args.out.join("model.lse"), &header, &outcome.params)?;
    write_json(&args.out.join("model.meta.json"), &ModelMeta::new(&header, &outcome.params, Some(outcome.best_epoch)))?;
    let mut log = create(&args.out.join("epochs.csv"))?;
    write_epoch_log(&mut log, &outcome.log)?;
    log.flush()?;
    fs::write(args.out.join("config.toml"), config.to_toml())?;
    info!("kept epoch {} of {}", outcome.best_epoch, config.epochs);
    Ok((serde_json::to_value(&config)?, config.seed))
}

fn cmd_rank(
    rec: &mut Recorder,
    model: &Path,
    vocab: &Path,
    topics: &Path,
    out: &Path,
    top_k: usize,
    tag: &str,
) -> Result<serde_json::Value> {
    let model = rec.input("model", model)?;
    let vocab = read_vocab(&rec.input("vocabulary", vocab)?)?;
    let topics = read_topics(&rec.input("topics", topics)?)?.encode(&vocab);
    let (header, params) = load_checked_model(&model, &vocab)?;
    let results: Vec<_> = topics
        .par_iter()
        .map(|(t, q)| rank_entities(&params, &header.entity_ids, t, q))
        .collect();
    let (lists, skipped) = split_skipped(results)?;
    prepare_out(out)?;
    write_run_file(&out.join("run.txt"), &lists, tag, top_k)?;
    write_json(&out.join("skipped_topics.json"), &skipped)?;
    Ok(json!({ "top_k": top_k, "tag": tag }))
}

#[allow(clippy::too_many_arguments)]
fn cmd_qlm(
    rec: &mut Recorder,
    corpus: &Path,
    vocab: &Path,
    topics: &Path,
    out: &Path,
    lambda: f64,
    top_k: usize,
    tag: &str,
) -> Result<serde_json::Value> {
    let corpus_path = rec.input("corpus", corpus)?;
    let vocab = read_vocab(&rec.input("vocabulary", vocab)?)?;
    let topics = read_topics(&rec.input("topics", topics)?)?.encode(&vocab);
    let corpus = load_corpus(&corpus_path, &vocab)?;
    let model = qlm::estimate(&corpus, lambda)?;
    let results: Vec<_> = topics
        .par_iter()
        .map(|(t, q)| model.rank(corpus.entities(), t, q))
        .collect();
    let (lists, skipped) = split_skipped(results)?;
    prepare_out(out)?;
    write_run_file(&out.join("run.txt"), &lists, tag, top_k)?;
    write_json(&out.join("skipped_topics.json"), &skipped)?;
    Ok(json!({ "lambda": lambda, "top_k": top_k, "tag": tag }))
}

fn run_tag(path: &Path) -> String {
    path.file_stem().map_or_else(|| "run".into(), |s| s.to_string_lossy().into_owned())
}

fn evaluate_run(path: &Path, qrels: &Qrels, cutoff: usize) -> Result<MetricReport> {
    let run = read_run(open(path)?, &source(path))?;
    Ok(evaluate(&run, qrels, cutoff, &run_tag(path)))
}

#[derive(Serialize)]
struct Significance {
    baseline: String,
    ndcg: TTest,
    ndcg_marker: &'static str,
    p5: TTest,
    p5_marker: &'static str,
    p10: TTest,
    p10_marker: &'static str,
}

#[derive(Serialize)]
struct EvalSummary<'a> {
    run_tag: &'a str,
    cutoff: usize,
    topics: usize,
    mean_ndcg: f64,
    mean_p5: f64,
    mean_p10: f64,
    excluded_topics: &'a [String],
    missing_topics: &'a [String],
    significance: Option<Significance>,
}

fn cmd_eval(
    rec: &mut Recorder,
    run: &Path,
    qrels: &Path,
    out: &Path,
    baseline: Option<&Path>,
    cutoff: usize,
) -> Result<serde_json::Value> {
    let run = rec.input("run", run)?;
    let qrels = read_qrels(&rec.input("qrels", qrels)?)?;
    let baseline = rec.optional_input("baseline run", baseline)?;
    let report = evaluate_run(&run, &qrels, cutoff)?;
    let significance = match &baseline {
        Some(path) => {
            let base = evaluate_run(path, &qrels, cutoff)?;
            let column = |r: &MetricReport, f: fn(&lse::eval::TopicMetrics) -> f64| -> Vec<f64> {
                r.per_topic.iter().map(f).collect()
            };
            let ids = |r: &MetricReport| r.per_topic.iter().map(|t| t.topic_id.clone()).collect::<Vec<_>>();
            if ids(&report) != ids(&base) {
                bail!("run and baseline do not cover the same judged topics");
            }
            let test = |f: fn(&lse::eval::TopicMetrics) -> f64| paired_t_test(&column(&report, f), &column(&base, f));
            let (ndcg, p5, p10) = (test(|t| t.ndcg)?, test(|t| t.p5)?, test(|t| t.p10)?);
            Some(Significance {
                baseline: base.run_tag.clone(),
                ndcg_marker: ndcg.marker(),
                ndcg,
                p5_marker: p5.marker(),
                p5,
                p10_marker: p10.marker(),
                p10,
            })
        }
        None => None,
    };
    info!("{}: NDCG@{cutoff} {:.4}, P@5 {:.4}, P@10 {:.4}", report.run_tag, report.mean_ndcg, report.mean_p5, report.mean_p10);
    prepare_out(out)?;
    let mut w = create(&out.join("per_topic.csv"))?;
    report.write_csv(&mut w)?;
    w.flush()?;
    write_json(
        &out.join("summary.json"),
        &EvalSummary {
            run_tag: &report.run_tag,
            cutoff,
            topics: report.per_topic.len(),
            mean_ndcg: report.mean_ndcg,
            mean_p5: report.mean_p5,
            mean_p10: report.mean_p10,
            excluded_topics: &report.excluded_topics,
            missing_topics: &report.missing_topics,
            significance,
        },
    )?;
    Ok(json!({ "cutoff": cutoff }))
}

fn cmd_sweep(
    rec: &mut Recorder,
    corpus: &Path,
    vocab: &Path,
    topics: &Path,
    qrels: &Path,
    out: &Path,
    cutoff: usize,
) -> Result<serde_json::Value> {
    let corpus_path = rec.input("corpus", corpus)?;
    let vocab = read_vocab(&rec.input("vocabulary", vocab)?)?;
    let topics = read_topics(&rec.input("topics", topics)?)?.encode(&vocab);
    let qrels = read_qrels(&rec.input("qrels", qrels)?)?;
    let corpus = load_corpus(&corpus_path, &vocab)?;
    let model = qlm::estimate(&corpus, 0.0)?;
    let sweep = sweep_lambda(&model, corpus.entities(), &topics, &qrels, cutoff)?;
    info!("best lambda {} (NDCG {:.4})", sweep.best_lambda, sweep.best_ndcg);
    prepare_out(out)?;
    let mut w = create(&out.join("sweep.csv"))?;
    writeln!(w, "lambda,ndcg@{cutoff}")?;
    for (lambda, ndcg) in &sweep.grid {
        writeln!(w, "{lambda:.2},{ndcg:.6}")?;
    }
    w.flush()?;
    write_json(&out.join("best.json"), &json!({ "lambda": sweep.best_lambda, "ndcg": sweep.best_ndcg }))?;
    Ok(json!({ "cutoff": cutoff }))
}

fn cmd_fuse(rec: &mut Recorder, args: &FuseArgs, seed: u64) -> Result<serde_json::Value> {
    let corpus_path = rec.input("corpus", &args.corpus)?;
    let vocab = read_vocab(&rec.input("vocabulary", &args.vocab)?)?;
    let model_path = rec.input("model", &args.model)?;
    let topics = read_topics(&rec.input("topics", &args.topics)?)?.encode(&vocab);
    let qrels = read_qrels(&rec.input("qrels", &args.qrels)?)?;
    let corpus = load_corpus(&corpus_path, &vocab)?;
    let (header, params) = load_checked_model(&model_path, &vocab)?;
    if header.entity_ids != corpus.entities() {
        bail!("model entities do not match the corpus entities");
    }

    let attributes = match rec.optional_input("qi attributes", args.qi_attributes.as_deref())? {
        Some(p) => read_qi_attributes(open(&p)?, &source(&p))?,
        None => Vec::new(),
    };
    let mut graphs: [Option<Vec<(String, String)>>; 4] = Default::default();
    if let Some(dir) = &args.graph_dir {
        for (slot, kind) in graphs.iter_mut().zip(GRAPH_KINDS) {
            let file = dir.join(format!("{kind}.tsv"));
            if !rec.resolve(&file).is_file() {
                info!("no {kind} graph at {}", file.display());
                continue;
            }
            let p = rec.input(kind, &file)?;
            *slot = Some(read_edge_list(open(&p)?, &source(&p))?);
        }
    }
    let qi = QiTable::build(corpus.entities(), &attributes, &graphs)?;
    let lm = qlm::estimate(&corpus, args.lambda)?;
    let table = build_features(&topics, &qrels, corpus.entities(), &lm, &params, &qi)?;
    let svm = RankSvmConfig { c: args.svm.c, iterations: args.svm.pairs, seed };
    let report = cross_validated_fusion(&table, &qrels, &FeatureSet::fusion_rows(), args.folds, &svm, args.cutoff)?;
    for row in &report.rows {
        info!("{}: NDCG {:.4}", row.feature_set, row.ndcg);
    }
    prepare_out(&args.out)?;
    let mut w = create(&args.out.join("fusion.csv"))?;
    report.write_csv(&mut w)?;
    w.flush()?;
    write_json(&args.out.join("fusion.json"), &report)?;
    Ok(json!({
        "lambda": args.lambda,
        "folds": args.folds,
        "svm": args.svm,
        "cutoff": args.cutoff,
        "graph_dir": args.graph_dir,
    }))
}

#[allow(clippy::too_many_arguments)]
fn cmd_ideal(
    rec: &mut Recorder,
    model: &Path,
    vocab: &Path,
    topics: &Path,
    qrels: &Path,
    out: &Path,
    svm: SvmArgs,
    cutoff: usize,
    seed: u64,
) -> Result<serde_json::Value> {
    let model = rec.input("model", model)?;
    let vocab = read_vocab(&rec.input("vocabulary", vocab)?)?;
    let topics = read_topics(&rec.input("topics", topics)?)?.encode(&vocab);
    let qrels = read_qrels(&rec.input("qrels", qrels)?)?;
    let (header, params) = load_checked_model(&model, &vocab)?;
    let config = RankSvmConfig { c: svm.c, iterations: svm.pairs, seed };
    let report = ideal_vector_analysis(&params, &header.entity_ids, &topics, &qrels, &config, cutoff)?;
    info!(
        "ideal NDCG {:.4} vs projected {:.4} over {} topics; {} topics with fewer than two relevant entities skipped",
        report.mean_ideal_ndcg,
        report.mean_projected_ndcg,
        report.topics.len(),
        report.skipped.len()
    );
    prepare_out(out)?;
    let mut w = create(&out.join("ideal.csv"))?;
    report.write_csv(&mut w)?;
    w.flush()?;
    write_json(
        &out.join("ideal.json"),
        &json!({
            "cutoff": report.cutoff,
            "mean_ideal_ndcg": report.mean_ideal_ndcg,
            "mean_projected_ndcg": report.mean_projected_ndcg,
            "topics": report.topics.len(),
            "skipped": report.skipped.iter().map(|t| json!({ "topic_id": t, "reason": "fewer than two relevant entities" })).collect::<Vec<_>>(),
        }),
    )?;
    let mut w = create(&out.join("vectors.jsonl"))?;
    for t in &report.topics {
        serde_json::to_writer(&mut w, &json!({ "topic_id": t.topic_id, "vector": t.vector }))?;
        writeln!(w)?;
    }
    w.flush()?;
    Ok(json!({ "svm": svm, "cutoff": cutoff }))
}

#[allow(clippy::too_many_arguments)]
fn cmd_idf(
    rec: &mut Recorder,
    corpus: &Path,
    vocab: &Path,
    topics: &Path,
    qrels: &Path,
    run_a: &Path,
    run_b: &Path,
    out: &Path,
    iterations: usize,
    cutoff: usize,
    seed: u64,
) -> Result<serde_json::Value> {
    let corpus_path = rec.input("corpus", corpus)?;
    let vocab = read_vocab(&rec.input("vocabulary", vocab)?)?;
    let topics = read_topics(&rec.input("topics", topics)?)?.encode(&vocab);
    let qrels = read_qrels(&rec.input("qrels", qrels)?)?;
    let run_a = rec.input("run a", run_a)?;
    let run_b = rec.input("run b", run_b)?;
    let corpus = load_corpus(&corpus_path, &vocab)?;
    let a = evaluate_run(&run_a, &qrels, cutoff)?;
    let b = evaluate_run(&run_b, &qrels, cutoff)?;
    let (ndcg_a, ndcg_b) = (a.ndcg_by_topic(), b.ndcg_by_topic());
    let idf = idf_match_analysis(&corpus, topics.iter().map(|(t, q)| (t.as_str(), q.as_slice())), &qrels);
    let report = idf_delta_correlation(&idf, &ndcg_a, &ndcg_b, iterations, seed)?;
    prepare_out(out)?;
    let mut w = create(&out.join("idf.csv"))?;
    writeln!(w, "topic_id,matched_idf,ndcg_a,ndcg_b")?;
    for (topic, value) in &idf {
        let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
        writeln!(
            w,
            "{topic},{},{},{}",
            fmt(*value),
            fmt(ndcg_a.get(topic.as_str()).copied()),
            fmt(ndcg_b.get(topic.as_str()).copied())
        )?;
    }
    w.flush()?;
    write_json(&out.join("correlation.json"), &report)?;
    Ok(json!({ "iterations": iterations, "cutoff": cutoff }))
}

#[derive(Serialize)]
struct GradCheckEntry {
    seed: u64,
    lambda: f64,
    report: GradCheckReport,
}

#[allow(clippy::too_many_arguments)]
fn cmd_grad_check(
    out: &Path,
    models: u64,
    dims: Dims,
    n: usize,
    z: usize,
    batch: usize,
    eps: f64,
    tolerance: f64,
    seed: u64,
) -> Result<serde_json::Value> {
    dims.validate()?;
    let mut entries = Vec::new();
    for i in 0..models {
        for lambda in [0.0, 0.01] {
            let (params, b) = random_problem(dims, n, z, batch, seed.wrapping_add(i));
            entries.push(GradCheckEntry { seed: seed.wrapping_add(i), lambda, report: gradient_check(&params, &b, lambda, eps) });
        }
    }
    let worst = entries.iter().map(|e| e.report.max()).fold(0.0, f64::max);
    let pass = worst < tolerance;
    if pass {
        info!("max relative error {worst:.3e} below {tolerance:e}");
    } else {
        warn!("max relative error {worst:.3e} exceeds {tolerance:e}");
    }
    prepare_out(out)?;
    write_json(
        &out.join("gradcheck.json"),
        &json!({ "max_relative_error": worst, "tolerance": tolerance, "pass": pass, "checks": entries }),
    )?;
    Ok(json!({ "dims": dims, "n": n, "z": z, "batch": batch, "eps": eps, "models": models }))
}

fn run(cli: Cli) -> Result<()> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(cli.global.threads.max(1))
        .build_global()
        .context("configuring worker threads")?;
    let seed = cli.global.seed;
    let data_dir = cli.global.data_dir;
    let name = match &cli.command {
        Command::BuildVocab { .. } => "build-vocab",
        Command::ExtractTopics { .. } => "extract-topics",
        Command::Train(_) => "train",
        Command::Rank { .. } => "rank",
        Command::Qlm { .. } => "qlm",
        Command::Eval { .. } => "eval",
        Command::SweepLambda { .. } => "sweep-lambda",
        Command::Fuse(_) => "fuse",
        Command::IdealVector { .. } => "ideal-vector",
        Command::IdfCorrelation { .. } => "idf-correlation",
        Command::GradCheck { .. } => "grad-check",
    };
    let mut rec = Recorder::new(name, data_dir);
    let seeded = seed.unwrap_or(DEFAULT_SEED);
    let (out, config, used_seed) = match &cli.command {
        Command::BuildVocab { corpus, out, max_size } => (out, cmd_build_vocab(&mut rec, corpus, out, *max_size)?, None),
        Command::ExtractTopics { categories, out, split, prefix } => {
            (out, cmd_extract_topics(&mut rec, categories, out, *split, prefix)?, None)
        }
        Command::Train(args) => {
            let (config, s) = cmd_train(&mut rec, args, seed)?;
            (&args.out, config, Some(s))
        }
        Command::Rank { model, vocab, topics, out, top_k, tag } => {
            (out, cmd_rank(&mut rec, model, vocab, topics, out, *top_k, tag)?, None)
        }
        Command::Qlm { corpus, vocab, topics, out, lambda, top_k, tag } => {
            (out, cmd_qlm(&mut rec, corpus, vocab, topics, out, *lambda, *top_k, tag)?, None)
        }
        Command::Eval { run, qrels, out, baseline, cutoff } => {
            (out, cmd_eval(&mut rec, run, qrels, out, baseline.as_deref(), *cutoff)?, None)
        }
        Command::SweepLambda { corpus, vocab, topics, qrels, out, cutoff } => {
            (out, cmd_sweep(&mut rec, corpus, vocab, topics, qrels, out, *cutoff)?, None)
        }
        Command::Fuse(args) => (&args.out, cmd_fuse(&mut rec, args, seeded)?, Some(seeded)),
        Command::IdealVector { model, vocab, topics, qrels, out, svm, cutoff } => {
            (out, cmd_ideal(&mut rec, model, vocab, topics, qrels, out, *svm, *cutoff, seeded)?, Some(seeded))
        }
        Command::IdfCorrelation { corpus, vocab, topics, qrels, run_a, run_b, out, iterations, cutoff } => (
            out,
            cmd_idf(&mut rec, corpus, vocab, topics, qrels, run_a, run_b, out, *iterations, *cutoff, seeded)?,
            Some(seeded),
        ),
        Command::GradCheck { out, models, entities, word_dim, entity_dim, vocab_size, n, z, batch, eps, tolerance } => {
            let dims = Dims { word_dim: *word_dim, entity_dim: *entity_dim, vocab_size: *vocab_size, num_entities: *entities };
            (out, cmd_grad_check(out, *models, dims, *n, *z, *batch, *eps, *tolerance, seeded)?, Some(seeded))
        }
    };
    rec.finish(out, config, used_seed)
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("info")).init();
    let cli = Cli::parse();
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            if err.downcast_ref::<MissingInput>().is_some() {
                ExitCode::from(2)
            } else {
                ExitCode::FAILURE
            }
        }
    }
}
