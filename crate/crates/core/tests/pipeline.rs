//! End-to-end offline pipeline on a small synthetic corpus.

use facetrank_core::corpus::{synth_corpus, time_split, Namespace, SynthConfig};
use facetrank_core::entity_graph::build_graph;
use facetrank_core::evaluation::{replay, ReplayConfig};
use facetrank_core::graph_embed::{train_graph_embeddings, EmbedConfig, PoolMode};
use facetrank_core::neural::TrainConfig;
use facetrank_core::ranker::{train_ranker, EmbeddingTables, Feature, FeatureSchema, RankingModel};
use facetrank_core::semantic_match::{export_embeddings, train_dssm, DssmConfig};

fn config() -> SynthConfig {
    SynthConfig {
        members: 300,
        sessions: 400,
        ..SynthConfig::default()
    }
}

#[test]
fn unsupervised_embeddings_feed_a_ranker_that_beats_chance() {
    let corpus = synth_corpus(&config(), 4).unwrap();
    let (train_all, test) = time_split(&corpus.sessions, 0.8).unwrap();
    let (train, valid) = time_split(&train_all, 0.9).unwrap();
    let embed = EmbedConfig {
        dim: 8,
        epochs: 100,
        ..EmbedConfig::default()
    };
    let tables: EmbeddingTables = Namespace::ALL
        .iter()
        .map(|&ns| (ns, train_graph_embeddings(&build_graph(&corpus.profiles, ns), &embed).unwrap().concat))
        .collect();
    assert!(tables.values().all(|t| t.dim() == 16));
    let schema = FeatureSchema::syntactic_with_emb_dot();
    let train_config = TrainConfig {
        hidden_layers: vec![16, 16],
        epochs: 5,
        ..TrainConfig::default()
    };
    let model = train_ranker(&train, &valid, &corpus.profiles, &tables, &schema, &train_config).unwrap();
    let metrics = replay(|q, m| model.score(q, m, &tables), &test, &corpus.profiles, &ReplayConfig::default()).unwrap();
    assert!(metrics.auc.unwrap() > 0.7, "{}", metrics.to_table());

    let reloaded = RankingModel::from_text(&model.to_text()).unwrap();
    let again = replay(|q, m| reloaded.score(q, m, &tables), &test, &corpus.profiles, &ReplayConfig::default()).unwrap();
    assert!((again.auc.unwrap() - metrics.auc.unwrap()).abs() < 1e-6);
}

#[test]
fn supervised_embeddings_add_signal_to_syntactic_features() {
    let corpus = synth_corpus(&config(), 9).unwrap();
    let (train, test) = time_split(&corpus.sessions, 0.8).unwrap();
    let dssm = train_dssm(
        &train,
        &corpus.profiles,
        &DssmConfig {
            hidden: vec![16],
            output_dim: 8,
            epochs: 3,
            ..DssmConfig::default()
        },
    )
    .unwrap();
    let tables = export_embeddings(&dssm).unwrap();
    let mut features = FeatureSchema::syntactic().features().to_vec();
    features.extend(Namespace::ALL.iter().map(|&ns| Feature::EmbCosine(ns)));
    let auc = |schema: &FeatureSchema| {
        let train_config = TrainConfig {
            hidden_layers: vec![32, 32],
            epochs: 10,
            ..TrainConfig::default()
        };
        let model = train_ranker(&train, &Default::default(), &corpus.profiles, &tables, schema, &train_config).unwrap();
        replay(|q, m| model.score(q, m, &tables), &test, &corpus.profiles, &ReplayConfig::default())
            .unwrap()
            .auc
            .unwrap()
    };
    let with = auc(&FeatureSchema::new(features, PoolMode::Max).unwrap());
    let without = auc(&FeatureSchema::syntactic());
    assert!(with > without && with > 0.65, "with {with} without {without}");
}
