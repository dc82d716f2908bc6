use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use lse::eval::Qrels;
use lse::retrieval::read_run;
use lse::synth::{fusion_benchmark, separable_benchmark, FusionConfig, SeparableConfig};
use lse::text::RawDocument;
use serde_json::Value;

fn lse(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lse"))
        .args(args)
        .env_remove("LSE_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = lse(args);
    assert!(out.status.success(), "lse {args:?} failed:\n{}", String::from_utf8_lossy(&out.stderr));
    out
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_corpus(path: &Path, docs: &[RawDocument]) {
    let mut f = fs::File::create(path).unwrap();
    for d in docs {
        serde_json::to_writer(&mut f, d).unwrap();
        writeln!(f).unwrap();
    }
}

fn write_topics(path: &Path, split: &str, topics: &[(String, String)]) {
    let mut text = format!("split\t{split}\n");
    for (id, q) in topics {
        text.push_str(&format!("{id}\t{q}\n"));
    }
    fs::write(path, text).unwrap();
}

fn write_qrels(path: &Path, qrels: &Qrels) {
    let mut buf = Vec::new();
    qrels.write_trec(&mut buf).unwrap();
    fs::write(path, buf).unwrap();
}

fn manifest(dir: &Path) -> Value {
    serde_json::from_slice(&fs::read(dir.join("manifest.json")).unwrap()).unwrap()
}

struct Fixture {
    _dir: tempfile::TempDir,
    root: PathBuf,
}

impl Fixture {
    fn new() -> Self {
        let dir = tempfile::tempdir().unwrap();
        let root = dir.path().to_path_buf();
        let bench = separable_benchmark(&SeparableConfig::default()).unwrap();
        write_corpus(&root.join("corpus.jsonl"), &bench.documents);
        let mut topics = bench.topics.clone();
        topics.push(("oov".into(), "nothing known here".into()));
        write_topics(&root.join("topics.tsv"), "test", &topics);
        write_qrels(&root.join("qrels.txt"), &bench.qrels);
        fs::write(root.join("train.toml"), "e_v = 16\ne_e = 8\nn = 3\nz = 3\nm = 32\nepochs = 4\nvalidation = \"last-epoch\"\n")
            .unwrap();
        Fixture { _dir: dir, root }
    }

    fn path(&self, name: &str) -> PathBuf {
        self.root.join(name)
    }

    fn vocab(&self) -> PathBuf {
        let out = self.path("vocab");
        if !out.join("vocabulary.tsv").exists() {
            ok(&["build-vocab", "--corpus", p(&self.path("corpus.jsonl")), "--out", p(&out)]);
        }
        out.join("vocabulary.tsv")
    }

    fn model(&self) -> PathBuf {
        let out = self.path("model");
        if !out.join("model.lse").exists() {
            let vocab = self.vocab();
            ok(&[
                "train",
                "--corpus",
                p(&self.path("corpus.jsonl")),
                "--vocab",
                p(&vocab),
                "--config",
                p(&self.path("train.toml")),
                "--out",
                p(&out),
                "--seed",
                "3",
            ]);
        }
        out.join("model.lse")
    }
}

#[test]
fn build_vocab_defaults_and_determinism() {
    let fx = Fixture::new();
    let vocab = fx.vocab();
    let m = manifest(&fx.path("vocab"));
    assert_eq!(m["command"], "build-vocab");
    assert_eq!(m["config"]["max_size"], 65536);
    let digest = m["inputs"][0]["sha256"].as_str().unwrap();
    assert_eq!(digest.len(), 64);

    let again = fx.path("vocab2");
    ok(&["build-vocab", "--corpus", p(&fx.path("corpus.jsonl")), "--out", p(&again)]);
    assert_eq!(fs::read(&vocab).unwrap(), fs::read(again.join("vocabulary.tsv")).unwrap());
}

#[test]
fn missing_input_exits_with_code_two() {
    let fx = Fixture::new();
    let out = lse(&["build-vocab", "--corpus", p(&fx.path("absent.jsonl")), "--out", p(&fx.path("v"))]);
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("absent.jsonl"));
    assert!(!fx.path("v").join("manifest.json").exists());
}

#[test]
fn data_dir_resolves_relative_inputs() {
    let fx = Fixture::new();
    let out = Command::new(env!("CARGO_BIN_EXE_lse"))
        .args(["build-vocab", "--corpus", "corpus.jsonl", "--out", p(&fx.path("v"))])
        .env("LSE_DATA_DIR", &fx.root)
        .output()
        .unwrap();
    assert!(out.status.success(), "{}", String::from_utf8_lossy(&out.stderr));
    assert!(fx.path("v/vocabulary.tsv").exists());
}

#[test]
fn malformed_record_is_named() {
    let fx = Fixture::new();
    fs::write(fx.path("bad.jsonl"), "{\"doc_id\": \"a\", \"entity_id\": \"x\", \"text\": \"ok\"}\nnot json\n").unwrap();
    let out = lse(&["build-vocab", "--corpus", p(&fx.path("bad.jsonl")), "--out", p(&fx.path("v"))]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bad.jsonl:2"));
}

#[test]
fn training_is_reproducible_and_flags_override_config() {
    let fx = Fixture::new();
    let model = fx.model();
    let vocab = fx.vocab();
    let again = fx.path("model2");
    ok(&[
        "train",
        "--corpus",
        p(&fx.path("corpus.jsonl")),
        "--vocab",
        p(&vocab),
        "--config",
        p(&fx.path("train.toml")),
        "--out",
        p(&again),
        "--seed",
        "3",
    ]);
    assert_eq!(fs::read(&model).unwrap(), fs::read(again.join("model.lse")).unwrap());
    assert!(!fs::read(fx.path("model/epochs.csv")).unwrap().is_empty());

    let m = manifest(&fx.path("model"));
    assert_eq!(m["seed"], 3);
    assert_eq!(m["config"]["e_v"], 16);
    assert_eq!(m["inputs"].as_array().unwrap().len(), 3);

    let flagged = fx.path("model3");
    ok(&[
        "train",
        "--corpus",
        p(&fx.path("corpus.jsonl")),
        "--vocab",
        p(&vocab),
        "--config",
        p(&fx.path("train.toml")),
        "--epochs",
        "2",
        "--out",
        p(&flagged),
    ]);
    let m = manifest(&flagged);
    assert_eq!(m["config"]["epochs"], 2);
    assert_eq!(m["config"]["e_v"], 16);
}

#[test]
fn training_defaults_echo_reference_hyperparameters() {
    let fx = Fixture::new();
    let vocab = fx.vocab();
    let out = fx.path("default-model");
    ok(&["train", "--corpus", p(&fx.path("corpus.jsonl")), "--vocab", p(&vocab), "--out", p(&out)]);
    let config = &manifest(&out)["config"];
    assert_eq!(config["e_v"], 300);
    assert_eq!(config["z"], 10);
    assert_eq!(config["m"], 4096);
    assert_eq!(config["lambda"], 0.01);
    assert_eq!(config["epochs"], 15);
    let meta: Value = serde_json::from_slice(&fs::read(out.join("model.meta.json")).unwrap()).unwrap();
    assert_eq!(meta["dims"]["word_dim"], 300);
}

#[test]
fn rank_and_qlm_write_strict_runs_and_skip_oov_topics() {
    let fx = Fixture::new();
    let model = fx.model();
    let vocab = fx.vocab();
    for (cmd, out) in [("rank", fx.path("rank")), ("qlm", fx.path("qlm"))] {
        let topics = fx.path("topics.tsv");
        let mut args = vec![cmd, "--vocab", p(&vocab), "--topics", p(&topics), "--out", p(&out)];
        let model_arg = p(&model).to_string();
        let corpus_arg = p(&fx.path("corpus.jsonl")).to_string();
        if cmd == "rank" {
            args.extend(["--model", &model_arg]);
        } else {
            args.extend(["--corpus", &corpus_arg]);
        }
        ok(&args);
        let runs = read_run(fs::read(out.join("run.txt")).unwrap().as_slice(), "run").unwrap();
        assert_eq!(runs.len(), 12);
        assert!(runs.iter().all(|r| r.len() == 8));
        let skipped: Value = serde_json::from_slice(&fs::read(out.join("skipped_topics.json")).unwrap()).unwrap();
        assert_eq!(skipped[0]["topic_id"], "oov");
    }
}

#[test]
fn eval_reproduces_fixture_value() {
    let fx = Fixture::new();
    fs::write(fx.path("fixture.run"), "t Q0 a 1 3 x\nt Q0 b 2 2 x\nt Q0 c 3 1 x\n").unwrap();
    fs::write(fx.path("fixture.qrels"), "t 0 a 1\nt 0 b 0\nt 0 c 1\n").unwrap();
    let out = fx.path("eval");
    ok(&["eval", "--run", p(&fx.path("fixture.run")), "--qrels", p(&fx.path("fixture.qrels")), "--out", p(&out)]);
    let summary: Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    let expected = (1.0 + 1.0 / 4f64.log2()) / (1.0 + 1.0 / 3f64.log2());
    assert_eq!(summary["mean_ndcg"].as_f64().unwrap(), expected);
    assert!(fs::read_to_string(out.join("per_topic.csv")).unwrap().starts_with("topic_id"));
}

#[test]
fn eval_with_baseline_reports_significance() {
    let fx = Fixture::new();
    let model = fx.model();
    let vocab = fx.vocab();
    ok(&["rank", "--model", p(&model), "--vocab", p(&vocab), "--topics", p(&fx.path("topics.tsv")), "--out", p(&fx.path("r"))]);
    ok(&["qlm", "--corpus", p(&fx.path("corpus.jsonl")), "--vocab", p(&vocab), "--topics", p(&fx.path("topics.tsv")), "--out", p(&fx.path("q"))]);
    let out = fx.path("cmp");
    ok(&[
        "eval",
        "--run",
        p(&fx.path("r/run.txt")),
        "--baseline",
        p(&fx.path("q/run.txt")),
        "--qrels",
        p(&fx.path("qrels.txt")),
        "--out",
        p(&out),
    ]);
    let summary: Value = serde_json::from_slice(&fs::read(out.join("summary.json")).unwrap()).unwrap();
    assert!(summary["significance"]["ndcg"]["status"].is_string());
}

#[test]
fn sweep_emits_21_rows() {
    let fx = Fixture::new();
    let vocab = fx.vocab();
    let out = fx.path("sweep");
    ok(&[
        "sweep-lambda",
        "--corpus",
        p(&fx.path("corpus.jsonl")),
        "--vocab",
        p(&vocab),
        "--topics",
        p(&fx.path("topics.tsv")),
        "--qrels",
        p(&fx.path("qrels.txt")),
        "--out",
        p(&out),
    ]);
    let csv = fs::read_to_string(out.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 22);
    assert!(csv.lines().nth(1).unwrap().starts_with("0.00,"));
    assert!(csv.lines().last().unwrap().starts_with("1.00,"));
}

#[test]
fn ideal_vector_skips_single_relevant_topics() {
    let fx = Fixture::new();
    let model = fx.model();
    let vocab = fx.vocab();
    let out = fx.path("ideal");
    let (topics, qrels) = (fx.path("topics.tsv"), fx.path("qrels.txt"));
    let args = [
        "ideal-vector",
        "--model",
        p(&model),
        "--vocab",
        p(&vocab),
        "--topics",
        p(&topics),
        "--qrels",
        p(&qrels),
        "--pairs",
        "20000",
        "--out",
        p(&out),
    ];
    ok(&args);
    let report: Value = serde_json::from_slice(&fs::read(out.join("ideal.json")).unwrap()).unwrap();
    assert_eq!(report["topics"], 4);
    let skipped: Vec<&str> = report["skipped"].as_array().unwrap().iter().map(|s| s["topic_id"].as_str().unwrap()).collect();
    assert_eq!(skipped, vec!["s0", "s1", "s2", "s3", "s4", "s5", "s6", "s7", "oov"]);
    assert_eq!(fs::read_to_string(out.join("vectors.jsonl")).unwrap().lines().count(), 4);
    let first = fs::read(out.join("ideal.csv")).unwrap();
    ok(&args);
    assert_eq!(first, fs::read(out.join("ideal.csv")).unwrap());
}

#[test]
fn fusion_over_qi_attributes_and_graphs() {
    let dir = tempfile::tempdir().unwrap();
    let root = dir.path();
    let bench = fusion_benchmark(&FusionConfig::default()).unwrap();
    write_corpus(&root.join("corpus.jsonl"), &bench.benchmark.documents);
    write_topics(&root.join("topics.tsv"), "test", &bench.benchmark.topics);
    write_qrels(&root.join("qrels.txt"), &bench.benchmark.qrels);
    let mut attrs = fs::File::create(root.join("qi.jsonl")).unwrap();
    for a in &bench.qi_attributes {
        serde_json::to_writer(&mut attrs, a).unwrap();
        writeln!(attrs).unwrap();
    }
    fs::create_dir(root.join("graphs")).unwrap();
    let edges: String = bench.graphs[0].as_ref().unwrap().iter().map(|(a, b)| format!("{a}\t{b}\n")).collect();
    fs::write(root.join("graphs/also_bought.tsv"), edges).unwrap();
    fs::write(root.join("train.toml"), "e_v = 16\ne_e = 8\nn = 3\nz = 3\nm = 64\nepochs = 2\nvalidation = \"last-epoch\"\n").unwrap();

    ok(&["build-vocab", "--corpus", p(&root.join("corpus.jsonl")), "--out", p(&root.join("v"))]);
    let vocab = root.join("v/vocabulary.tsv");
    ok(&[
        "train",
        "--corpus",
        p(&root.join("corpus.jsonl")),
        "--vocab",
        p(&vocab),
        "--config",
        p(&root.join("train.toml")),
        "--out",
        p(&root.join("m")),
    ]);
    let out = root.join("fuse");
    ok(&[
        "fuse",
        "--corpus",
        p(&root.join("corpus.jsonl")),
        "--vocab",
        p(&vocab),
        "--model",
        p(&root.join("m/model.lse")),
        "--topics",
        p(&root.join("topics.tsv")),
        "--qrels",
        p(&root.join("qrels.txt")),
        "--qi-attributes",
        p(&root.join("qi.jsonl")),
        "--graph-dir",
        p(&root.join("graphs")),
        "--pairs",
        "20000",
        "--out",
        p(&out),
    ]);
    let csv = fs::read_to_string(out.join("fusion.csv")).unwrap();
    let rows: Vec<&str> = csv.lines().map(|l| l.split(',').next().unwrap()).collect();
    assert_eq!(rows, vec!["feature_set", "QI", "QI + QLM", "QI + LSE", "QI + QLM + LSE"]);
    let roles: Vec<String> = manifest(&out)["inputs"]
        .as_array()
        .unwrap()
        .iter()
        .map(|i| i["role"].as_str().unwrap().to_string())
        .collect();
    assert!(roles.contains(&"also_bought".to_string()));
    assert!(!roles.contains(&"also_viewed".to_string()));
}

#[test]
fn extract_topics_from_categories() {
    let dir = tempfile::tempdir().unwrap();
    let cats = dir.path().join("cats.jsonl");
    fs::write(
        &cats,
        "{\"path\": [\"Electronics\", \"Camera & Photo\", \"Digital Camera Lenses\"], \"entity_ids\": [\"a\", \"b\"]}\n\
         {\"path\": [\"Toys\"], \"entity_ids\": [\"c\"]}\n",
    )
    .unwrap();
    let out = dir.path().join("topics");
    ok(&["extract-topics", "--categories", p(&cats), "--out", p(&out), "--split", "validation"]);
    assert_eq!(fs::read_to_string(out.join("topics.tsv")).unwrap(), "split\tvalidation\nc0\tcamera photo digital lenses\n");
    assert_eq!(fs::read_to_string(out.join("qrels.txt")).unwrap(), "c0 0 a 1\nc0 0 b 1\n");
}

#[test]
fn grad_check_reports_pass() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gc");
    ok(&["grad-check", "--out", p(&out), "--seed", "9"]);
    let report: Value = serde_json::from_slice(&fs::read(out.join("gradcheck.json")).unwrap()).unwrap();
    assert_eq!(report["pass"], true);
    assert_eq!(report["checks"].as_array().unwrap().len(), 20);
    assert_eq!(manifest(&out)["seed"], 9);
}

#[test]
fn threads_do_not_change_outputs() {
    let fx = Fixture::new();
    let model = fx.model();
    let vocab = fx.vocab();
    let run = |threads: &str, out: &Path| {
        ok(&[
            "rank",
            "--model",
            p(&model),
            "--vocab",
            p(&vocab),
            "--topics",
            p(&fx.path("topics.tsv")),
            "--out",
            p(out),
            "--threads",
            threads,
        ]);
        fs::read(out.join("run.txt")).unwrap()
    };
    assert_eq!(run("1", &fx.path("t1")), run("4", &fx.path("t4")));
}
