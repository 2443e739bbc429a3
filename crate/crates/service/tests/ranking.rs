mod common;

use facetrank_core::corpus::{Impression, Query, Session};
use facetrank_core::evaluation::rank_session;
use facetrank_core::neural::{Activation, MlpModel, Objective};
use facetrank_core::ranker::{FeatureSchema, RankingModel};
use facetrank_service::{
    retrieve, second_pass_rank, Candidate, InvertedIndex, SearchRequest, SearchService, ServiceError, Snapshot,
};

fn snapshot(seed: u64) -> Snapshot {
    let tables = common::tables(8, 3, seed);
    let index = InvertedIndex::build(&common::profiles(60, 8, seed), &tables, &common::schema()).unwrap();
    Snapshot::new(index, common::model(seed), tables).unwrap()
}

#[test]
fn scores_match_offline_scoring_bit_for_bit() {
    for seed in 0..5 {
        let snap = snapshot(seed);
        let profiles = common::profiles(60, 8, seed);
        let q = Query::new("data engineer", [1, 2], [3], []);
        let candidates = retrieve(&snap.index, &q, 1000).unwrap();
        assert!(!candidates.is_empty());
        let ranked = second_pass_rank(&candidates, &q, &snap.model, &snap.index, &snap.tables).unwrap();
        for r in &ranked {
            let offline = snap.model.score(&q, profiles.get(r.member_id).unwrap(), &snap.tables).unwrap();
            assert_eq!(r.score.to_bits(), offline.to_bits());
        }
        // Same order as offline replay over a session of the same candidates.
        let session = Session {
            session_id: 1,
            timestamp: 0,
            query: q.clone(),
            impressions: candidates
                .iter()
                .enumerate()
                .map(|(p, c)| Impression {
                    member_id: c.member_id,
                    label: 0,
                    position: p as u32,
                })
                .collect(),
        };
        let offline = rank_session(&session, &profiles, &|q, m| snap.model.score(q, m, &snap.tables)).unwrap();
        let online: Vec<u64> = ranked.iter().map(|r| r.member_id).collect();
        assert_eq!(online, offline.iter().map(|o| o.0).collect::<Vec<_>>());
    }
}

#[test]
fn second_pass_examples() {
    let snap = snapshot(3);
    let q = Query::new("", [1], [], []);
    let one = [Candidate {
        member_id: snap.index.members().next().unwrap(),
        first_pass_score: 0.25,
    }];
    let r = second_pass_rank(&one, &q, &snap.model, &snap.index, &snap.tables).unwrap();
    assert_eq!(r.len(), 1);
    assert_eq!(r[0].first_pass_score, 0.25);

    let schema = common::schema();
    let zero = RankingModel::new(schema.clone(), MlpModel::zeros(schema.width(), &[3], Activation::Relu), Objective::Pointwise, 0, 0).unwrap();
    let all: Vec<Candidate> = snap.index.members().collect::<Vec<_>>().into_iter().rev().map(|m| Candidate { member_id: m, first_pass_score: 0.0 }).collect();
    let r = second_pass_rank(&all, &q, &zero, &snap.index, &snap.tables).unwrap();
    assert!(r.windows(2).all(|w| w[0].member_id < w[1].member_id));

    let other = FeatureSchema::new(schema.features().to_vec(), facetrank_core::graph_embed::PoolMode::Max).unwrap();
    let mismatched = RankingModel::new(other.clone(), MlpModel::zeros(other.width(), &[3], Activation::Relu), Objective::Pointwise, 0, 0).unwrap();
    assert!(second_pass_rank(&all, &q, &mismatched, &snap.index, &snap.tables).is_err());
    assert!(Snapshot::new(snap.index.clone(), mismatched, snap.tables.clone()).is_err());
}

#[test]
fn handle_search_examples() {
    let service = SearchService::new(snapshot(4));
    let req = |q: Query, k: usize| SearchRequest { query: q, k };
    let r = service.handle_search(&req(Query::new("engineer", [], [], []), 25)).unwrap();
    assert_eq!(r.results.len(), 25);
    assert!(r.results.windows(2).all(|w| w[0].score >= w[1].score));
    assert!(r.results.iter().all(|x| x.score.is_finite() && x.first_pass_score.is_finite()));

    let narrow = Query::new("", [1], [2], []);
    let cands = retrieve(&service.snapshot().index, &narrow, 1000).unwrap();
    let r = service.handle_search(&req(narrow, 1000)).unwrap();
    assert_eq!(r.results.len(), cands.len());

    let r = service.handle_search(&req(Query::new("", [77], [], []), 5)).unwrap();
    assert!(r.results.is_empty());

    let err = service.handle_search(&req(Query::default(), 5)).unwrap_err();
    assert!(matches!(err, ServiceError::BadRequest(_)));
}

#[test]
fn budget_limits_second_pass_candidates() {
    let service = SearchService::new(snapshot(4).with_retrieval_budget(3));
    let r = service.handle_search(&SearchRequest { query: Query::new("engineer", [], [], []), k: 25 }).unwrap();
    assert_eq!(r.results.len(), 3);
}

#[test]
fn reload_swaps_snapshots() {
    let service = SearchService::new(snapshot(1));
    let held = service.snapshot();
    service.reload(snapshot(2));
    assert_eq!(held.model.seed, 1);
    assert_eq!(service.snapshot().model.seed, 2);
}

#[test]
fn request_parsing() {
    let r = SearchRequest::from_json(br#"{"keywords":"java","facet_skills":[1,2],"facet_titles":[],"facet_companies":[9],"k":5}"#).unwrap();
    assert_eq!(r.k, 5);
    assert_eq!(r.query, Query::new("java", [1, 2], [], [9]));
    for bad in [
        &br#"{"keywords":"java"}"#[..],
        br#"{"k":0,"keywords":"x"}"#,
        br#"{"k":2,"facet_skills":[-1]}"#,
        br#"{"k":2,"facet_skills":"1"}"#,
        br#"{"k":2,"keywords":3}"#,
        br#"{"k":2,"facet_skill":[1]}"#,
        br#"[1,2]"#,
        br#"{"k":2,"#,
    ] {
        assert!(matches!(SearchRequest::from_json(bad), Err(ServiceError::BadRequest(_))), "{}", String::from_utf8_lossy(bad));
    }
}
