use lse::eval::{average_ranks, ndcg, pearson, spearman, Qrels};
use lse::ltr::{fold_partition, pagerank, LinearRanker, RankSvmConfig};
use lse::model::{init_params, project, Dims};
use lse::qlm;
use lse::retrieval::{cosine, read_run, write_run, CosineIndex, RankedList};
use lse::text::{build_vocabulary, encode_corpus, tokenize, RawDocument, TokenId};
use ndarray::Array1;
use proptest::prelude::*;

fn text_strategy() -> impl Strategy<Value = String> {
    proptest::collection::vec(
        prop_oneof![
            "[a-zA-Z]{1,8}",
            "[0-9]{1,4}([.,-][0-9]{1,3})?",
            Just("<num>".to_string()),
            Just("the".to_string()),
            "[ .,;!?()'&/-]{1,3}",
            "[äöüéß]{1,3}",
        ],
        0..25,
    )
    .prop_map(|parts| parts.join(" "))
}

fn docs_strategy() -> impl Strategy<Value = Vec<RawDocument>> {
    proptest::collection::vec(("[a-e]{1,3}( [a-e]{1,3}){0,12}", 0usize..4), 1..12).prop_map(|docs| {
        docs.into_iter()
            .enumerate()
            .map(|(i, (text, e))| RawDocument { doc_id: format!("d{i}"), entity_id: format!("x{e}"), text })
            .collect()
    })
}

fn small_dims() -> Dims {
    Dims { word_dim: 5, entity_dim: 4, vocab_size: 10, num_entities: 6 }
}

proptest! {
    #[test]
    fn tokenize_is_idempotent(text in text_strategy()) {
        let once = tokenize(&text);
        prop_assert_eq!(tokenize(&once.join(" ")), once);
    }

    #[test]
    fn truncated_vocabulary_is_a_prefix(docs in docs_strategy(), k in 1usize..20) {
        if let Ok(full) = build_vocabulary(&docs, 65536) {
            let cut = build_vocabulary(&docs, k).unwrap();
            let expected: Vec<&str> = full.tokens().take(k).collect();
            prop_assert_eq!(cut.tokens().collect::<Vec<_>>(), expected);
        }
    }

    #[test]
    fn encoding_accounts_for_every_token(docs in docs_strategy(), k in 1usize..8) {
        if let Ok(vocab) = build_vocabulary(&docs, k) {
            let corpus = encode_corpus(&docs, &vocab).unwrap();
            let raw: usize = docs.iter().map(|d| tokenize(&d.text).len()).sum();
            prop_assert_eq!(corpus.total_tokens() + corpus.dropped_tokens(), raw);
        }
    }

    #[test]
    fn projection_ignores_word_order(tokens in proptest::collection::vec(0u16..10, 1..8), seed in 0u64..50) {
        let params = init_params(small_dims(), seed).unwrap();
        let mut reversed = tokens.clone();
        reversed.reverse();
        let a = project(&params, &tokens).unwrap();
        let b = project(&params, &reversed).unwrap();
        for (x, y) in a.iter().zip(&b) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn repeated_tokens_weigh_proportionally(a in 0u16..10, b in 0u16..10, seed in 0u64..50) {
        let params = init_params(small_dims(), seed).unwrap();
        let f = project(&params, &[a, a, b]).unwrap();
        let avg = (params.word_embeddings.column(a as usize).to_owned() * 2.0 + params.word_embeddings.column(b as usize)) / 3.0;
        let expected = (params.transform.dot(&avg) + &params.bias).mapv(f64::tanh);
        for (x, y) in f.iter().zip(&expected) {
            prop_assert!((x - y).abs() < 1e-12);
        }
    }

    #[test]
    fn cosine_is_symmetric_and_bounded(
        a in proptest::collection::vec(-10.0f64..10.0, 4),
        b in proptest::collection::vec(-10.0f64..10.0, 4),
    ) {
        let (a, b) = (Array1::from(a), Array1::from(b));
        let ab = cosine(a.view(), b.view()).unwrap();
        prop_assert_eq!(ab, cosine(b.view(), a.view()).unwrap());
        prop_assert!(ab.abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn ranking_ignores_query_scale(seed in 0u64..50, scale in 0.01f64..100.0) {
        let params = init_params(small_dims(), seed).unwrap();
        let ids: Vec<String> = (0..6).map(|i| format!("x{i}")).collect();
        let index = CosineIndex::new(params.entity_embeddings.view(), &ids).unwrap();
        let q = project(&params, &[1, 2, 3]).unwrap();
        let a = index.rank("t", q.view()).unwrap();
        let b = index.rank("t", (&q * scale).view()).unwrap();
        prop_assert_eq!(a.ids().collect::<Vec<_>>(), b.ids().collect::<Vec<_>>());
    }

    #[test]
    fn smoothed_probabilities_are_bounded_and_monotone(docs in docs_strategy(), l1 in 0.0f64..=1.0, l2 in 0.0f64..=1.0) {
        if let Ok(vocab) = build_vocabulary(&docs, 65536) {
            let corpus = encode_corpus(&docs, &vocab).unwrap();
            let model = qlm::estimate(&corpus, 0.5).unwrap();
            for e in 0..corpus.num_entities() {
                for t in 0..vocab.len() as TokenId {
                    let p = model.smoothed_prob(e, t, l1);
                    prop_assert!((0.0..=1.0).contains(&p));
                    // linear in λ: moving towards the corpus model by the sign of the gap
                    let gap = model.corpus_prob(t) - model.entity_prob(e, t);
                    let q = model.smoothed_prob(e, t, l2);
                    if l2 > l1 {
                        prop_assert!((q - p) * gap >= -1e-15);
                    }
                }
            }
        }
    }

    #[test]
    fn ndcg_depends_only_on_order(scores in proptest::collection::vec(-5.0f64..5.0, 3..15), rel in proptest::collection::vec(any::<bool>(), 15)) {
        let ids: Vec<String> = (0..scores.len()).map(|i| format!("x{i:02}")).collect();
        let mut qrels = Qrels::new();
        for (i, id) in ids.iter().enumerate() {
            qrels.insert("t", id.clone(), rel[i]);
        }
        let list = RankedList::from_scores("t", ids.iter().cloned().zip(scores.iter().copied()).collect());
        let shifted = RankedList::from_scores("t", ids.iter().cloned().zip(scores.iter().map(|s| 3.0 * s + 7.0)).collect());
        let a = ndcg(&list, &qrels, 100);
        prop_assert_eq!(a, ndcg(&shifted, &qrels, 100));
        if let Some(v) = a {
            prop_assert!((0.0..=1.0 + 1e-12).contains(&v));
        }
    }

    #[test]
    fn correlations_respect_transforms(
        pairs in proptest::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 4..30),
        scale in 0.1f64..10.0,
        shift in -5.0f64..5.0,
    ) {
        let x: Vec<f64> = pairs.iter().map(|p| p.0).collect();
        let y: Vec<f64> = pairs.iter().map(|p| p.1).collect();
        if let (Ok(p), Ok(s)) = (pearson(&x, &y), spearman(&x, &y)) {
            let affine: Vec<f64> = x.iter().map(|v| scale * v + shift).collect();
            prop_assert!((pearson(&affine, &y).unwrap() - p).abs() < 1e-9);
            let cubed: Vec<f64> = x.iter().map(|v| v * v * v).collect();
            prop_assert!((spearman(&cubed, &y).unwrap() - s).abs() < 1e-9);
            prop_assert!(p.abs() <= 1.0 + 1e-12 && s.abs() <= 1.0 + 1e-12);
        }
    }

    #[test]
    fn average_ranks_sum_to_triangle(values in proptest::collection::vec(0u8..5, 1..30)) {
        let v: Vec<f64> = values.iter().map(|&x| x as f64).collect();
        let n = v.len() as f64;
        prop_assert!((average_ranks(&v).iter().sum::<f64>() - n * (n + 1.0) / 2.0).abs() < 1e-9);
    }

    #[test]
    fn pagerank_is_a_distribution(n in 1usize..30, edges in proptest::collection::vec((0usize..30, 0usize..30), 0..80)) {
        let edges: Vec<(usize, usize)> = edges.into_iter().filter(|&(a, b)| a < n && b < n).collect();
        let scores = pagerank(n, &edges, 0.85, 200).unwrap();
        prop_assert!((scores.iter().sum::<f64>() - 1.0).abs() < 1e-9);
        prop_assert!(scores.iter().all(|&s| s > 0.0));
    }

    #[test]
    fn ranker_order_ignores_weight_scale(
        w in proptest::collection::vec(-3.0f64..3.0, 3),
        rows in proptest::collection::vec(proptest::collection::vec(-3.0f64..3.0, 3), 2..20),
        c in 0.01f64..100.0,
    ) {
        let order = |ranker: &LinearRanker| {
            let scored: Vec<(String, f64)> = rows.iter().enumerate().map(|(i, r)| (format!("x{i:02}"), ranker.score(r))).collect();
            RankedList::from_scores("t", scored).ids().map(str::to_string).collect::<Vec<_>>()
        };
        let a = LinearRanker { weights: w.clone(), config: RankSvmConfig::default() };
        let b = LinearRanker { weights: w.iter().map(|v| v * c).collect(), config: RankSvmConfig::default() };
        prop_assert_eq!(order(&a), order(&b));
    }

    #[test]
    fn folds_are_a_partition(topics in 1usize..60, folds in 1usize..12, seed in any::<u64>()) {
        match fold_partition(topics, folds, seed) {
            Ok(assignment) => {
                prop_assert_eq!(assignment.len(), topics);
                prop_assert!(assignment.iter().all(|&f| f < folds));
                for f in 0..folds {
                    let size = assignment.iter().filter(|&&a| a == f).count();
                    prop_assert!(size == topics / folds || size == topics / folds + 1);
                }
            }
            Err(_) => prop_assert!(topics < folds),
        }
    }

    #[test]
    fn run_files_roundtrip(scores in proptest::collection::vec(-1e6f64..1e6, 1..40)) {
        let list = RankedList::from_scores("t1", scores.iter().enumerate().map(|(i, s)| (format!("x{i}"), *s)).collect());
        let mut buf = Vec::new();
        write_run(&mut buf, std::slice::from_ref(&list), "tag", 100).unwrap();
        let parsed = read_run(&buf[..], "mem").unwrap();
        prop_assert_eq!(parsed.len(), 1);
        prop_assert_eq!(parsed[0].ids().collect::<Vec<_>>(), list.ids().collect::<Vec<_>>());
    }
}
