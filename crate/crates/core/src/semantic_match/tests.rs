use std::collections::BTreeSet;

use proptest::prelude::*;

use super::*;
use crate::corpus::{Impression, Session};
use crate::graph_embed::{EmbeddingKind, Similarity};
use crate::neural::{finite_difference_check, probe_indices};
use crate::ranker::{assemble_features, EmbeddingTables, FeatureSchema};
use crate::{Error, Result};

fn set(items: &[&str]) -> BTreeSet<String> {
    items.iter().map(|s| s.to_string()).collect()
}

#[test]
fn word_hash_examples() {
    assert_eq!(word_hash("java"), vec!["#ja", "jav", "ava", "va#"]);
    assert_eq!(word_hash("ab"), vec!["#ab", "ab#"]);
    assert_eq!(word_hash("a"), vec!["#a#"]);
    assert!(word_hash("").is_empty());
    assert!(word_hash("  \t ").is_empty());
    assert_eq!(word_hash("Java  JAVA"), [word_hash("java"), word_hash("java")].concat());
}

proptest! {
    #[test]
    fn single_token_yields_length_trigrams(token in "[a-zA-Z0-9]{1,20}") {
        let t = word_hash(&token);
        prop_assert_eq!(t.len(), token.chars().count());
        prop_assert!(t.iter().all(|g| g.chars().count() == 3));
    }
}

fn tiny_layout() -> InputLayout {
    InputLayout::new(
        TrigramVocabulary::from_texts(["java rust", "go"]),
        vec![
            EntityVocabulary::new(Namespace::Skill, [EntityId::skill(3), EntityId::skill(1)]),
            EntityVocabulary::new(Namespace::Title, [EntityId::title(7)]),
            EntityVocabulary::new(Namespace::Company, [EntityId::company(2), EntityId::company(5)]),
        ],
    )
    .unwrap()
}

#[test]
fn vocabulary_is_dense_and_sorted() {
    let layout = tiny_layout();
    let trigrams: BTreeSet<String> = layout.trigrams.trigrams().map(str::to_string).collect();
    assert_eq!(trigrams, set(&["#ja", "jav", "ava", "va#", "#ru", "rus", "ust", "st#", "#go", "go#"]));
    let idx: Vec<usize> = layout.trigrams.trigrams().map(|t| layout.trigrams.get(t).unwrap()).collect();
    assert_eq!(idx, (0..10).collect::<Vec<_>>());
    assert_eq!(layout.width(), 10 + 2 + 1 + 2);
    assert_eq!(layout.offset(Namespace::Skill), 10);
    assert_eq!(layout.offset(Namespace::Title), 12);
    assert_eq!(layout.offset(Namespace::Company), 13);
    assert_eq!(layout.vocabulary(Namespace::Skill).get(&EntityId::skill(1)), Some(0));
}

#[test]
fn build_input_examples() {
    let layout = tiny_layout();
    let q = Query::new("java", [3], [], []);
    let x = layout.query_input(&q);
    let trigram_part: Vec<_> = x.entries.iter().filter(|(i, _)| *i < 10).collect();
    let entity_part: Vec<_> = x.entries.iter().filter(|(i, _)| *i >= 10).collect();
    assert_eq!(trigram_part.len(), 4);
    assert_eq!(entity_part, vec![&(11, 1.0)]);
    assert!(layout.query_input(&Query::default()).is_empty());
    // Unknown entities and trigrams contribute nothing.
    let unknown = Query::new("zzz", [99], [8], []);
    assert!(layout.query_input(&unknown).is_empty());
    // Repeated tokens count.
    let x = layout.query_input(&Query::new("go go", [], [], []));
    assert!(x.entries.iter().all(|&(_, v)| v == 2.0));
}

fn config(hidden: Vec<usize>, out: usize, similarity: Similarity) -> DssmConfig {
    DssmConfig {
        hidden,
        output_dim: out,
        similarity,
        ..DssmConfig::default()
    }
}

#[test]
fn forward_examples() {
    let layout = tiny_layout();
    let q = layout.query_input(&Query::new("java", [3], [7], []));
    let d = layout.member_input(&MemberProfile::new(1, [1], [7], [5], "rust go"));
    let zero = DssmModel::zeros(layout.clone(), &config(vec![4], 3, Similarity::Cosine)).unwrap();
    let (qv, dv, s) = zero.forward(&q, &d).unwrap();
    assert_eq!(qv, vec![0.0; 3]);
    assert_eq!(dv, vec![0.0; 3]);
    assert_eq!(s, 0.0);

    let mut twin = DssmModel::new(layout.clone(), &config(vec![4], 3, Similarity::Cosine)).unwrap();
    twin.document = twin.query.clone();
    let (_, _, s) = twin.forward(&q, &q).unwrap();
    assert!((s - 1.0).abs() < 1e-12);

    let bad = SparseInput {
        entries: vec![(layout.width(), 1.0)],
    };
    assert!(matches!(zero.forward(&bad, &d), Err(Error::Shape(_))));
}

#[test]
fn dot_similarity_scales_with_one_arm() {
    // Dot is linear in each arm's output.
    let layout = tiny_layout();
    let m = DssmModel::new(layout.clone(), &config(vec![4], 3, Similarity::Dot)).unwrap();
    let q = layout.query_input(&Query::new("java", [3], [], []));
    let d = layout.member_input(&MemberProfile::new(1, [1], [7], [], "rust"));
    let (qv, dv, s) = m.forward(&q, &d).unwrap();
    let scaled: Vec<f64> = qv.iter().map(|v| 2.5 * v).collect();
    assert!((crate::graph_embed::dot(&scaled, &dv) - 2.5 * s).abs() < 1e-12);
}

#[test]
fn config_guards() {
    let layout = tiny_layout();
    let bad = DssmConfig {
        negatives: 0,
        ..DssmConfig::default()
    };
    assert!(matches!(DssmModel::new(layout.clone(), &bad), Err(Error::Config(_))));
    assert!(DssmConfig {
        similarity: Similarity::Hadamard,
        ..DssmConfig::default()
    }
    .validate()
    .is_err());
    let docs = [&SparseInput::default()];
    let m = DssmModel::zeros(layout, &config(vec![2], 2, Similarity::Cosine)).unwrap();
    assert!(dssm_loss(&m, &SparseInput::default(), &docs).is_err());
}

#[test]
fn full_loss_gradient_check() {
    let layout = tiny_layout();
    let q = layout.query_input(&Query::new("java go", [3, 1], [7], [2]));
    let docs: Vec<SparseInput> = vec![
        layout.member_input(&MemberProfile::new(1, [3], [7], [2], "java")),
        layout.member_input(&MemberProfile::new(2, [1], [], [5], "rust go")),
        layout.member_input(&MemberProfile::new(3, [], [7], [], "go java rust")),
        layout.member_input(&MemberProfile::new(4, [1, 3], [], [2, 5], "")),
    ];
    let refs: Vec<&SparseInput> = docs.iter().collect();
    for similarity in [Similarity::Cosine, Similarity::Dot] {
        for seed in 0..3 {
            let cfg = DssmConfig {
                gamma: 3.0,
                seed,
                ..config(vec![6, 5], 4, similarity)
            };
            let model = DssmModel::new(layout.clone(), &cfg).unwrap();
            let (_, grads) = dssm_loss(&model, &q, &refs).unwrap();
            let params = model.flatten();
            let analytic = grads.flatten();
            assert_eq!(params.len(), analytic.len());
            let idx = probe_indices(params.len(), None, seed);
            let err = finite_difference_check(&params, &analytic, &idx, |p| {
                let mut probe = model.clone();
                probe.assign(p).unwrap();
                dssm_loss(&probe, &q, &refs).unwrap().0
            });
            assert!(err < 1e-4, "{similarity} seed {seed}: {err}");
        }
    }
}

#[test]
fn cosine_output_is_bounded() {
    let layout = tiny_layout();
    let model = DssmModel::new(layout.clone(), &config(vec![5], 3, Similarity::Cosine)).unwrap();
    let texts = ["java", "rust go", "", "go go go java", "unknown"];
    for a in texts {
        for b in texts {
            let q = layout.query_input(&Query::new(a, [1], [], []));
            let d = layout.member_input(&MemberProfile::new(1, [3], [7], [], b));
            let (_, _, s) = model.forward(&q, &d).unwrap();
            assert!((-1.0..=1.0).contains(&s), "{s}");
        }
    }
}

fn corpus() -> (SessionStore, ProfileStore) {
    // Two groups: members 0..6 speak "java" with skill 1, members 6..12 speak
    // "rust" with skill 2; queries accept their own group.
    let profiles: ProfileStore = (0..12u64)
        .map(|m| {
            let (skill, word) = if m < 6 { (1, "java dev") } else { (2, "rust dev") };
            MemberProfile::new(m, [skill, 10 + m % 3], [20 + (m < 6) as u64], [], word)
        })
        .collect::<Result<_>>()
        .unwrap();
    let sessions: SessionStore = (0..40u64)
        .map(|s| {
            let group = s % 2;
            let q = if group == 0 { Query::new("java", [1], [], []) } else { Query::new("rust", [2], [], []) };
            let shown: Vec<u64> = (0..6).map(|k| (s * 5 + k * 7) % 12).collect::<BTreeSet<_>>().into_iter().collect();
            Session {
                session_id: s,
                timestamp: s as i64,
                query: q,
                impressions: shown
                    .iter()
                    .enumerate()
                    .map(|(p, &m)| Impression {
                        member_id: m,
                        label: ((m < 6) == (group == 0)) as u8,
                        position: p as u32,
                    })
                    .collect(),
            }
        })
        .collect::<Result<_>>()
        .unwrap();
    (sessions, profiles)
}

fn small_training() -> DssmConfig {
    DssmConfig {
        hidden: vec![16],
        output_dim: 8,
        epochs: 15,
        batch_size: 4,
        learning_rate: 0.1,
        ..DssmConfig::default()
    }
}

#[test]
fn training_separates_groups_and_is_deterministic() {
    let (sessions, profiles) = corpus();
    let cfg = small_training();
    let (model, log) = train_dssm_logged(&sessions, &profiles, &cfg).unwrap();
    let (again, _) = train_dssm_logged(&sessions, &profiles, &cfg).unwrap();
    assert_eq!(model.to_text(), again.to_text());
    assert_eq!(log.epoch_loss.len(), 15);
    assert!(log.epoch_loss.last().unwrap() < &log.epoch_loss[0]);
    let (mut pos, mut neg) = (Vec::new(), Vec::new());
    for s in sessions.iter() {
        let q = model.layout.query_input(&s.query);
        for imp in &s.impressions {
            let d = model.layout.member_input(profiles.get(imp.member_id).unwrap());
            let sim = model.forward(&q, &d).unwrap().2;
            if imp.label == 1 { pos.push(sim) } else { neg.push(sim) }
        }
    }
    let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
    assert!(mean(&pos) > mean(&neg) + 0.5, "{} vs {}", mean(&pos), mean(&neg));
}

#[test]
fn training_requires_positives() {
    let (sessions, profiles) = corpus();
    let negatives_only: SessionStore = sessions
        .iter()
        .map(|s| {
            let mut s = s.clone();
            s.impressions.iter_mut().for_each(|i| i.label = 0);
            s
        })
        .collect::<Result<_>>()
        .unwrap();
    assert!(matches!(train_dssm(&negatives_only, &profiles, &small_training()), Err(Error::Degenerate(_))));
    let missing = ProfileStore::new();
    assert!(matches!(train_dssm(&sessions, &missing, &small_training()), Err(Error::UnresolvedImpression { .. })));
}

#[test]
fn vocabulary_comes_from_training_split_only() {
    let (sessions, mut profiles) = corpus();
    profiles.insert(MemberProfile::new(500, [42], [], [], "cobol")).unwrap();
    let layout = InputLayout::from_training(&sessions, &profiles);
    assert!(layout.trigrams.get("#co").is_none());
    assert!(layout.vocabulary(Namespace::Skill).get(&EntityId::skill(42)).is_none());
    assert!(layout.trigrams.get("#ja").is_some());
}

#[test]
fn export_matches_query_arm_on_one_hot_inputs() {
    let (sessions, profiles) = corpus();
    let model = train_dssm(&sessions, &profiles, &small_training()).unwrap();
    let tables = export_embeddings(&model).unwrap();
    for (ns, table) in &tables {
        assert_eq!(table.kind(), EmbeddingKind::Supervised);
        assert_eq!(table.dim(), 8);
        assert_eq!(table.len(), model.layout.vocabulary(*ns).len());
        for (id, v) in table.iter() {
            let input = model.layout.entity_input(id).unwrap();
            let (q, _, _) = model.forward(&input, &input).unwrap();
            assert_eq!(q.iter().map(|x| x.to_bits()).collect::<Vec<_>>(), v.iter().map(|x| x.to_bits()).collect::<Vec<_>>());
        }
    }
    let zero = DssmModel::zeros(model.layout.clone(), &small_training()).unwrap();
    for table in export_embeddings(&zero).unwrap().values() {
        assert!(table.iter().all(|(_, v)| v.iter().all(|x| *x == 0.0)));
    }
    // Supervised tables plug into feature assembly unchanged.
    let exported: EmbeddingTables = tables;
    let schema = FeatureSchema::syntactic_with_emb_dot();
    let s = sessions.iter().next().unwrap();
    let f = assemble_features(&schema, &s.query, profiles.get(0).unwrap(), &exported).unwrap();
    assert_eq!(f.len(), schema.width());
}

#[test]
fn identical_columns_give_identical_embeddings() {
    let layout = tiny_layout();
    let mut model = DssmModel::new(layout.clone(), &config(vec![3], 2, Similarity::Cosine)).unwrap();
    let (a, b) = (layout.offset(Namespace::Company), layout.offset(Namespace::Company) + 1);
    let first = &mut model.query.layers_mut()[0];
    for o in 0..first.outputs {
        let w = first.weights[o * first.inputs + a];
        first.weights[o * first.inputs + b] = w;
    }
    let t = export_embeddings(&model).unwrap();
    let c = &t[&Namespace::Company];
    assert_eq!(c.get(&EntityId::company(2)), c.get(&EntityId::company(5)));
}

#[test]
fn model_text_round_trip() {
    let (sessions, profiles) = corpus();
    let model = train_dssm(&sessions, &profiles, &DssmConfig { epochs: 2, ..small_training() }).unwrap();
    let text = model.to_text();
    let back = DssmModel::from_text(&text).unwrap();
    assert_eq!(back.to_text(), text);
    assert_eq!(back.layout, model.layout);
    for (a, b) in back.flatten().iter().zip(model.flatten()) {
        assert!((a - b).abs() <= 1e-8 * b.abs());
    }
    assert!(DssmModel::from_text(&text.replacen("dssm v1", "dssm v0", 1)).is_err());
    assert!(DssmModel::from_text(&text.replacen("similarity cosine", "similarity hadamard", 1)).is_err());
}
