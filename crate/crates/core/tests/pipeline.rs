mod common;

use klustree_core::cluster::Heuristic;
use klustree_core::graph::{Graph, Triple};
use klustree_core::pipeline::{
    run_pipeline, run_pipeline_on_answers, Method, PipelineConfig, PipelineError,
};
use klustree_core::search::{enumerate_answer_trees, AnswerSet, KeywordQuery};
use serde_json::Value;

use common::fixture;

fn q(list: &str) -> KeywordQuery {
    KeywordQuery::parse_list(list).unwrap()
}

#[test]
fn document_json_shape() {
    let g = fixture("mini_imdb_extended.tsv");
    let out = run_pipeline(&PipelineConfig::default(), &g, &q("Carter,Depp")).unwrap();
    let v: Value = serde_json::to_value(&out.document).unwrap();

    assert_eq!(v["query"], serde_json::json!(["Carter", "Depp"]));
    assert_eq!(v["method"], "lm");
    assert_eq!(v["heuristic"], "best");
    assert!(v["k"].as_u64().unwrap() >= 2);
    assert!(v["ch"].is_number());
    let clusters = v["clusters"].as_array().unwrap();
    assert_eq!(clusters.len() as u64, v["k"].as_u64().unwrap());
    for (pos, c) in clusters.iter().enumerate() {
        assert_eq!(c["rank_position"].as_u64().unwrap(), pos as u64 + 1);
        assert!(c["representative"]["edges"].is_array());
        assert!(!c["trees"].as_array().unwrap().is_empty());
    }
    for h in ["best", "worst", "avg", "size"] {
        assert!(v["rankings"][h].is_array(), "{h}");
    }
    let edge = &v["trees"][0]["edges"][0];
    assert!(edge["s"].is_string() && edge["p"].is_string() && edge["o"].is_string());
}

#[test]
fn every_tree_lands_in_exactly_one_cluster() {
    let g = fixture("mini_imdb_extended.tsv");
    for method in [Method::Lm, Method::Iso, Method::Ted] {
        let cfg = PipelineConfig {
            method,
            ..PipelineConfig::default()
        };
        let doc = run_pipeline(&cfg, &g, &q("Carter,Depp")).unwrap().document;
        let mut all: Vec<usize> = doc.clusters.iter().flat_map(|c| c.trees.clone()).collect();
        all.sort();
        assert_eq!(all, (0..doc.trees.len()).collect::<Vec<_>>(), "{method}");
        for c in &doc.clusters {
            let best = c.trees.iter().map(|&i| doc.trees[i].rank).min().unwrap();
            assert_eq!(c.representative.rank, best);
        }
    }
}

#[test]
fn heuristics_reorder_the_same_clusters() {
    let g = fixture("mini_imdb_extended.tsv");
    let doc = run_pipeline(&PipelineConfig::default(), &g, &q("Carter,Depp"))
        .unwrap()
        .document;
    for h in Heuristic::ALL {
        let cfg = PipelineConfig {
            heuristic: h,
            ..PipelineConfig::default()
        };
        let direct = run_pipeline(&cfg, &g, &q("Carter,Depp")).unwrap().document;
        assert_eq!(doc.with_heuristic(h), direct, "{h}");
        assert_eq!(direct.order(), doc.rankings[&h]);
    }
    // Best-first puts the cluster holding rank 1 on top.
    let top = &doc.clusters[0];
    assert!(top.trees.iter().any(|&i| doc.trees[i].rank == 1));
}

#[test]
fn imported_answers_cluster_like_searched_ones() {
    let g = fixture("mini_imdb_extended.tsv");
    let query = q("Carter,Depp");
    let cfg = PipelineConfig::default();
    let searched = run_pipeline(&cfg, &g, &query).unwrap();

    let mut trees = enumerate_answer_trees(&g, &query, 25).unwrap();
    trees.reverse();
    let set = AnswerSet { query, trees };
    let json = serde_json::to_string(&set).unwrap();
    let imported = run_pipeline_on_answers(&cfg, &g, serde_json::from_str(&json).unwrap()).unwrap();
    assert_eq!(imported.document, searched.document);
}

#[test]
fn small_answer_lists() {
    let g = fixture("mini_imdb.tsv");
    let doc = run_pipeline(&PipelineConfig::default(), &g, &q("Carter,Depp"))
        .unwrap()
        .document;
    assert_eq!(doc.k, 1);
    assert_eq!(doc.clusters.len(), 1);
    assert!(serde_json::to_value(&doc).unwrap()["ch"].is_null());

    let g = Graph::from_triples([
        Triple::new("Ann", "knows", "Bob"),
        Triple::new("Ann", "worksAt", "Acme"),
        Triple::new("Bob", "worksAt", "Acme"),
    ])
    .unwrap();
    let doc = run_pipeline(&PipelineConfig::default(), &g, &q("Ann,Bob"))
        .unwrap()
        .document;
    assert_eq!(doc.trees.len(), 2);
    assert_eq!(doc.k, 2);
}

#[test]
fn errors_name_their_stage() {
    let g = fixture("mini_imdb.tsv");
    let err = run_pipeline(&PipelineConfig::default(), &g, &q("Carter,Gandalf")).unwrap_err();
    assert_eq!(err.stage(), "search");

    let bad = PipelineConfig {
        k_min: 9,
        k_max: 3,
        ..PipelineConfig::default()
    };
    assert!(matches!(
        run_pipeline(&bad, &g, &q("Carter,Depp")),
        Err(PipelineError::Config(_))
    ));

    let mut lm = PipelineConfig::default();
    lm.lm.lambda = 1.5;
    let err = run_pipeline(&lm, &g, &q("Carter,Depp")).unwrap_err();
    assert_eq!(err.stage(), "language-models");
}

#[test]
fn judgment_pairs_carry_both_trees() {
    let g = fixture("mini_imdb_extended.tsv");
    let cfg = PipelineConfig {
        seed: 3,
        ..PipelineConfig::default()
    };
    let out = run_pipeline(&cfg, &g, &q("Carter,Depp")).unwrap();
    let views = out.pair_views().unwrap();
    let k = out.document.k;
    let cross = views
        .iter()
        .filter(|v| v.clusters.0 != v.clusters.1)
        .count();
    assert_eq!(cross, k * (k - 1) / 2);
    for v in &views {
        assert_eq!(v.trees[0], out.document.trees[v.a]);
        assert_eq!(v.trees[1], out.document.trees[v.b]);
    }
    let json = serde_json::to_value(&views).unwrap();
    assert!(json[0]["origin"].is_string());
}

#[test]
fn config_round_trips_through_json() {
    let cfg = PipelineConfig {
        method: Method::Iso,
        heuristic: Heuristic::Average,
        seed: 11,
        ..PipelineConfig::default()
    };
    let text = serde_json::to_string(&cfg).unwrap();
    assert!(text.contains("\"isomorphism\""));
    assert_eq!(serde_json::from_str::<PipelineConfig>(&text).unwrap(), cfg);
    let partial: PipelineConfig = serde_json::from_str(r#"{"method":"iso","top_n":10}"#).unwrap();
    assert_eq!(partial.method, Method::Iso);
    assert_eq!(partial.top_n, 10);
    assert_eq!(partial.k_max, 15);
}
