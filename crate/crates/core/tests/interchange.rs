use facetrank_core::corpus::{
    load_profiles, load_sessions, read_profiles, read_sessions, save_profiles, save_sessions, write_profiles,
    write_sessions, Impression, MemberProfile, Namespace, ProfileStore, Query, Session, SessionStore,
};
use facetrank_core::entity_graph::{build_graph, WeightedGraph};
use facetrank_core::graph_embed::{EmbeddingKind, EmbeddingTable};
use facetrank_core::corpus::EntityId;
use proptest::prelude::*;

fn ids() -> impl Strategy<Value = Vec<u64>> {
    prop::collection::vec(0u64..50, 0..5)
}

fn profiles() -> impl Strategy<Value = ProfileStore> {
    prop::collection::btree_map(0u64..1000, (ids(), ids(), ids(), "[a-z \\\"\\\\é]{0,12}"), 0..12).prop_map(|m| {
        m.into_iter()
            .map(|(id, (s, t, c, h))| MemberProfile::new(id, s, t, c, h))
            .collect::<facetrank_core::Result<_>>()
            .unwrap()
    })
}

fn sessions() -> impl Strategy<Value = SessionStore> {
    let session = (any::<i64>(), "[a-z][a-z ]{0,9}", ids(), ids(), ids(), prop::collection::btree_map(0u64..500, 0u8..2, 1..8));
    prop::collection::btree_map(0u64..1000, session, 0..8).prop_map(|m| {
        m.into_iter()
            .map(|(sid, (ts, kw, s, t, c, imps))| Session {
                session_id: sid,
                timestamp: ts,
                query: Query::new(kw, s, t, c),
                impressions: imps
                    .into_iter()
                    .enumerate()
                    .map(|(p, (member_id, label))| Impression {
                        member_id,
                        label,
                        position: p as u32,
                    })
                    .collect(),
            })
            .collect::<facetrank_core::Result<_>>()
            .unwrap()
    })
}

proptest! {
    #[test]
    fn profile_files_round_trip(store in profiles()) {
        let mut buf = Vec::new();
        write_profiles(&store, &mut buf).unwrap();
        prop_assert_eq!(&read_profiles(buf.as_slice()).unwrap(), &store);
        prop_assert_eq!(buf.iter().filter(|&&b| b == b'\n').count(), store.len());
    }

    #[test]
    fn session_files_round_trip(store in sessions()) {
        let mut buf = Vec::new();
        write_sessions(&store, &mut buf).unwrap();
        let back = read_sessions(buf.as_slice()).unwrap();
        prop_assert_eq!(&back, &store);
        let mut again = Vec::new();
        write_sessions(&back, &mut again).unwrap();
        prop_assert_eq!(buf, again);
    }

    #[test]
    fn edge_lists_round_trip(store in profiles()) {
        for ns in Namespace::ALL {
            let g = build_graph(&store, ns);
            let text = g.to_edge_list();
            let back = WeightedGraph::read_edge_list(ns, text.as_bytes()).unwrap();
            prop_assert_eq!(back.to_edge_list(), text);
            prop_assert!(back.edges().eq(g.edges()));
        }
    }

    #[test]
    fn embedding_files_are_stable(rows in prop::collection::btree_map(0u64..100, prop::collection::vec(-1e6f64..1e6, 3), 0..10)) {
        let mut t = EmbeddingTable::new(Namespace::Company, 3, EmbeddingKind::FirstOrder);
        for (id, v) in &rows {
            t.insert(EntityId::company(*id), v.clone()).unwrap();
        }
        let text = t.to_text();
        let back = EmbeddingTable::read_text(Namespace::Company, text.as_bytes()).unwrap();
        prop_assert_eq!(back.to_text(), text);
        for (id, v) in &rows {
            let got = back.get(&EntityId::company(*id)).unwrap();
            for (a, b) in got.iter().zip(v) {
                prop_assert!((a - b).abs() <= 1e-8 * b.abs().max(1e-300));
            }
        }
    }
}

#[test]
fn files_on_disk_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let profiles: ProfileStore = [MemberProfile::new(3, [1, 2], [4], [], "rust dev")].into_iter().collect::<facetrank_core::Result<_>>().unwrap();
    let sessions: SessionStore = [Session {
        session_id: 9,
        timestamp: -5,
        query: Query::new("rust", [1], [], []),
        impressions: vec![Impression { member_id: 3, label: 1, position: 0 }],
    }]
    .into_iter()
    .collect::<facetrank_core::Result<_>>()
    .unwrap();
    let (p, s) = (dir.path().join("p.jsonl"), dir.path().join("s.jsonl"));
    save_profiles(&profiles, &p).unwrap();
    save_sessions(&sessions, &s).unwrap();
    assert_eq!(load_profiles(&p).unwrap(), profiles);
    assert_eq!(load_sessions(&s).unwrap(), sessions);
    let missing = load_profiles(dir.path().join("nope.jsonl")).unwrap_err().to_string();
    assert!(missing.contains("nope.jsonl"), "{missing}");
}
