use proptest::prelude::*;

use super::*;
use crate::corpus::{EntityId, Namespace};
use crate::graph_embed::{EmbeddingKind, EmbeddingTable, PoolMode};
use crate::neural::{pairwise_forward, pairwise_loss, Activation, PairwiseKind};

fn imp(member_id: u64, label: u8, position: u32) -> Impression {
    Impression {
        member_id,
        label,
        position,
    }
}

fn session(id: u64, labels: &[u8]) -> Session {
    Session {
        session_id: id,
        timestamp: id as i64,
        query: Query::new("rust developer", [1, 2], [10], []),
        impressions: labels.iter().enumerate().map(|(p, &l)| imp(100 + p as u64, l, p as u32)).collect(),
    }
}

fn tables() -> EmbeddingTables {
    let mut out = EmbeddingTables::new();
    for (ns, base) in [(Namespace::Skill, 0u64), (Namespace::Title, 10), (Namespace::Company, 20)] {
        let mut t = EmbeddingTable::new(ns, 2, EmbeddingKind::Concat);
        for k in 0..5u64 {
            t.insert(EntityId::new(ns, base + k), vec![k as f64 * 0.5 - 1.0, 0.25 * (base + k) as f64]).unwrap();
        }
        out.insert(ns, t);
    }
    out
}

fn profiles() -> ProfileStore {
    (0..12u64)
        .map(|i| {
            MemberProfile::new(
                100 + i,
                [i % 5, (i + 1) % 5],
                [10 + i % 3],
                if i % 4 == 0 { vec![] } else { vec![20 + i % 5] },
                if i % 2 == 0 { "rust engineer" } else { "java developer" },
            )
        })
        .collect::<Result<_>>()
        .unwrap()
}

fn full_schema() -> FeatureSchema {
    let mut f = FeatureSchema::syntactic_with_emb_dot().features().to_vec();
    f.push(Feature::EmbCosine(Namespace::Skill));
    f.push(Feature::EmbHadamard {
        namespace: Namespace::Title,
        dim: 2,
    });
    f.push(Feature::Coverage(Namespace::Company));
    FeatureSchema::new(f, PoolMode::Mean).unwrap()
}

fn small_config(objective: Objective) -> TrainConfig {
    TrainConfig {
        objective,
        hidden_layers: vec![8, 8],
        epochs: 5,
        batch_size: 2,
        ..TrainConfig::default()
    }
}

fn store(sessions: Vec<Session>) -> SessionStore {
    sessions.into_iter().collect::<Result<_>>().unwrap()
}

#[test]
fn mine_pairs_examples() {
    assert_eq!(mine_pairs(&session(1, &[1, 0, 0])).len(), 2);
    let pairs = mine_pairs(&session(1, &[1, 1, 0, 0]));
    let pos: Vec<(u32, u32)> = pairs.iter().map(|(p, n)| (p.position, n.position)).collect();
    assert_eq!(pos, vec![(0, 2), (0, 3), (1, 2), (1, 3)]);
    assert!(mine_pairs(&session(1, &[1, 1])).is_empty());
    // Ordering follows positions, not storage order.
    let mut s = session(2, &[0, 1, 0]);
    s.impressions.reverse();
    let pos: Vec<(u32, u32)> = mine_pairs(&s).iter().map(|(p, n)| (p.position, n.position)).collect();
    assert_eq!(pos, vec![(1, 0), (1, 2)]);
}

#[test]
fn feature_examples() {
    let schema = full_schema();
    let tables = tables();
    let q = Query::new("", [1, 2], [], []);
    let m = MemberProfile::new(1, [2, 3], [], [], "");
    let f = assemble_features(&schema, &q, &m, &tables).unwrap();
    assert_eq!(f.len(), schema.width());
    assert_eq!(f[0], 1.0 / 3.0);
    // Title and company facets are empty on both sides.
    assert_eq!(f[1], 0.0);
    assert_eq!(f[2], 0.0);

    let same = MemberProfile::new(2, [1, 2], [], [], "");
    let idx = schema.features().iter().position(|f| *f == Feature::EmbCosine(Namespace::Skill)).unwrap();
    let f = assemble_features(&schema, &q, &same, &tables).unwrap();
    assert!((f[idx] - 1.0).abs() < 1e-15);

    let empty = MemberProfile::new(3, [], [], [], "");
    let f = assemble_features(&FeatureSchema::new(vec![Feature::EmbDot(Namespace::Skill), Feature::Coverage(Namespace::Skill)], PoolMode::Mean).unwrap(), &q, &empty, &tables).unwrap();
    assert_eq!(f, vec![0.0, 0.0]);
}

#[test]
fn keyword_overlap_uses_trigrams() {
    let schema = FeatureSchema::new(vec![Feature::KeywordTrigramOverlap], PoolMode::Mean).unwrap();
    let t = tables();
    let q = Query::new("Java", [1], [], []);
    let f = |headline: &str| assemble_features(&schema, &q, &MemberProfile::new(1, [], [], [], headline), &t).unwrap()[0];
    assert_eq!(f("java"), 1.0);
    assert_eq!(f("python"), 0.0);
    // {#ja, jav, ava, va#} against {#ja, jav, ava, vas, asc, ...}
    let javascript = ["#ja", "jav", "ava", "vas", "asc", "scr", "cri", "rip", "ipt", "pt#"];
    let expected = 3.0 / (4 + javascript.len() - 3) as f64;
    assert!((f("javascript") - expected).abs() < 1e-15);
}

#[test]
fn missing_member_and_table_are_errors() {
    let schema = FeatureSchema::syntactic_with_emb_dot();
    let q = Query::new("", [1], [], []);
    assert!(matches!(
        assemble_member_features(&schema, &q, 999, &profiles(), &tables()),
        Err(Error::UnknownMember(999))
    ));
    let mut partial = tables();
    partial.remove(&Namespace::Title);
    assert!(schema.check_tables(&partial).is_err());
    assert!(assemble_features(&schema, &q, profiles().get(100).unwrap(), &partial).is_err());
}

#[test]
fn schema_names_round_trip() {
    let schema = full_schema();
    let parsed = FeatureSchema::parse_names(&schema.names(), PoolMode::Mean).unwrap();
    assert_eq!(parsed, schema);
    assert!(schema.names().starts_with("skill_jaccard,title_jaccard,company_jaccard,keyword_trigram_overlap,emb_dot:skill"));
    assert_eq!(schema.width(), 4 + 3 + 1 + 2 + 1);
    assert!(FeatureSchema::parse_names("emb_dot:planet", PoolMode::Mean).is_err());
    assert!(FeatureSchema::parse_names("skill_jaccard,skill_jaccard", PoolMode::Mean).is_err());
    assert!(FeatureSchema::parse_names("emb_hadamard:skill:0", PoolMode::Mean).is_err());
}

#[test]
fn score_is_forward_of_features() {
    let schema = full_schema();
    let net = MlpModel::new(schema.width(), &[5, 3], Activation::Tanh, 4);
    let model = RankingModel::new(schema.clone(), net.clone(), Objective::Pointwise, 4, 0).unwrap();
    let q = Query::new("rust", [1, 3], [11], [21]);
    for m in profiles().iter() {
        let direct = net.score(&assemble_features(&schema, &q, m, &tables()).unwrap()).unwrap();
        assert_eq!(model.score(&q, m, &tables()).unwrap().to_bits(), direct.to_bits());
    }
    let zero = RankingModel::new(schema.clone(), MlpModel::zeros(schema.width(), &[5], Activation::Relu), Objective::Pointwise, 0, 0).unwrap();
    for m in profiles().iter() {
        assert_eq!(zero.score(&q, m, &tables()).unwrap(), 0.0);
    }
    assert!(RankingModel::new(schema, MlpModel::zeros(2, &[5], Activation::Relu), Objective::Pointwise, 0, 0).is_err());
}

#[test]
fn zero_epochs_returns_initialized_model() {
    let train = store(vec![session(1, &[1, 0, 0, 1]), session(2, &[0, 1, 0])]);
    let schema = full_schema();
    let config = TrainConfig {
        epochs: 0,
        ..small_config(Objective::Pointwise)
    };
    let model = train_ranker(&train, &SessionStore::new(), &profiles(), &tables(), &schema, &config).unwrap();
    let fresh = MlpModel::new(schema.width(), &[8, 8], Activation::Relu, stage_seed(1, "ranker-init"));
    assert_eq!(model.net, fresh);
    assert_eq!(model.epochs_run, 0);
}

#[test]
fn pairwise_without_pairs_is_an_error() {
    let train = store(vec![session(1, &[1, 1]), session(2, &[0, 0, 0])]);
    let config = small_config(Objective::Pairwise(PairwiseKind::Hinge));
    let err = train_ranker(&train, &SessionStore::new(), &profiles(), &tables(), &full_schema(), &config);
    assert!(matches!(err, Err(Error::Degenerate(_))));
    assert!(train_ranker(&train, &SessionStore::new(), &profiles(), &tables(), &full_schema(), &small_config(Objective::Pointwise)).is_ok());
    assert!(train_ranker(&SessionStore::new(), &SessionStore::new(), &profiles(), &tables(), &full_schema(), &small_config(Objective::Pointwise)).is_err());
}

fn learnable_sessions(n: u64) -> SessionStore {
    // Members whose skills overlap the facet are positive.
    let p = profiles();
    let q = Query::new("rust developer", [1, 2], [10], []);
    store(
        (0..n)
            .map(|sid| Session {
                session_id: sid,
                timestamp: sid as i64,
                query: q.clone(),
                impressions: p
                    .iter()
                    .enumerate()
                    .filter(|(i, _)| (*i as u64 + sid) % 3 != 0)
                    .map(|(pos, m)| {
                        let hit = m.entities(Namespace::Skill).iter().any(|e| e.id == 1 || e.id == 2);
                        imp(m.member_id, hit as u8, pos as u32)
                    })
                    .collect(),
            })
            .collect(),
    )
}

#[test]
fn training_is_deterministic_and_reduces_loss() {
    let train = learnable_sessions(12);
    let valid = learnable_sessions(3);
    let schema = full_schema();
    for objective in [Objective::Pointwise, Objective::Pairwise(PairwiseKind::Hinge), Objective::Pairwise(PairwiseKind::Logistic)] {
        let config = TrainConfig {
            epochs: 30,
            learning_rate: 0.05,
            early_stop_patience: 0,
            dropout_rate: 0.1,
            ..small_config(objective)
        };
        let (a, log) = train_ranker_logged(&train, &valid, &profiles(), &tables(), &schema, &config).unwrap();
        let (b, _) = train_ranker_logged(&train, &valid, &profiles(), &tables(), &schema, &config).unwrap();
        assert_eq!(a.to_text(), b.to_text());
        assert_eq!(log.train_loss.len(), 30);
        assert!(log.valid_loss.last().unwrap() < &log.valid_loss[0], "{objective}: {:?}", log.valid_loss);
    }
}

#[test]
fn early_stopping_returns_best_validation_parameters() {
    let train = learnable_sessions(12);
    let valid = learnable_sessions(3);
    let schema = full_schema();
    let config = TrainConfig {
        epochs: 40,
        learning_rate: 0.2,
        early_stop_patience: 2,
        ..small_config(Objective::Pairwise(PairwiseKind::Hinge))
    };
    let (model, log) = train_ranker_logged(&train, &valid, &profiles(), &tables(), &schema, &config).unwrap();
    let examples = session_examples(&valid, &profiles(), &tables(), &schema).unwrap();
    let (loss, count) = objective_loss(&model.net, &examples, model.objective).unwrap();
    let best = log.valid_loss.iter().copied().fold(f64::INFINITY, f64::min);
    assert!((loss / count as f64) <= best + 1e-12);
    assert!(model.epochs_run <= 40);
}

#[test]
fn pairwise_loss_matches_brute_force_over_mined_pairs() {
    let sessions = learnable_sessions(4);
    let schema = full_schema();
    let net = MlpModel::new(schema.width(), &[6, 4], Activation::Tanh, 9);
    let examples = session_examples(&sessions, &profiles(), &tables(), &schema).unwrap();
    for kind in [PairwiseKind::Hinge, PairwiseKind::Logistic] {
        let (total, count) = objective_loss(&net, &examples, Objective::Pairwise(kind)).unwrap();
        let (mut brute, mut pairs) = (0.0, 0);
        for s in sessions.iter() {
            for (p, n) in mine_pairs(s) {
                let xp = assemble_member_features(&schema, &s.query, p.member_id, &profiles(), &tables()).unwrap();
                let xn = assemble_member_features(&schema, &s.query, n.member_id, &profiles(), &tables()).unwrap();
                brute += pairwise_loss(pairwise_forward(&net, &xp, &xn).unwrap(), kind).0;
                pairs += 1;
            }
        }
        assert_eq!(count, pairs);
        assert!((total - brute).abs() < 1e-10 * brute.max(1.0), "{total} vs {brute}");
    }
}

#[test]
fn model_text_round_trip() {
    let train = learnable_sessions(6);
    let model = train_ranker(&train, &SessionStore::new(), &profiles(), &tables(), &full_schema(), &small_config(Objective::Pairwise(PairwiseKind::Logistic))).unwrap();
    let text = model.to_text();
    assert!(text.starts_with("ranker v1\nobjective pairwise_logistic\npooling mean\n"));
    let back = RankingModel::from_text(&text).unwrap();
    assert_eq!(back.to_text(), text);
    assert_eq!(RankingModel::from_text(&back.to_text()).unwrap(), back);
    assert_eq!((&back.schema, back.objective, back.seed, back.epochs_run), (&model.schema, model.objective, model.seed, model.epochs_run));
    for (a, b) in back.net.flatten().iter().zip(model.net.flatten()) {
        assert!((a - b).abs() <= 1e-8 * b.abs());
    }
    assert!(RankingModel::from_text(&text.replacen("ranker v1", "ranker v2", 1)).is_err());
    assert!(RankingModel::from_text(&format!("{text}junk\n")).is_err());
}

proptest! {
    #[test]
    fn pair_count_is_product(labels in prop::collection::vec(0u8..2, 1..12)) {
        let s = session(1, &labels);
        let p = labels.iter().filter(|&&l| l == 1).count();
        prop_assert_eq!(mine_pairs(&s).len(), p * (labels.len() - p));
    }

    #[test]
    fn features_ignore_entity_order(mut skills in prop::collection::vec(0u64..6, 0..5), seed in any::<u64>()) {
        let schema = full_schema();
        let q = Query::new("rust", [1, 4], [11], [22]);
        let a = MemberProfile::new(1, skills.clone(), [12], [21], "rust");
        skills.reverse();
        let shift = (seed % 3) as usize % skills.len().max(1);
        skills.rotate_left(shift);
        let b = MemberProfile::new(1, skills, [12], [21], "rust");
        prop_assert_eq!(
            assemble_features(&schema, &q, &a, &tables()).unwrap(),
            assemble_features(&schema, &q, &b, &tables()).unwrap()
        );
    }
}
