#![allow(dead_code)]

use facetrank_core::corpus::{EntityId, MemberProfile, Namespace, ProfileStore};
use facetrank_core::graph_embed::{EmbeddingKind, EmbeddingTable, PoolMode};
use facetrank_core::neural::{Activation, MlpModel, Objective, PairwiseKind};
use facetrank_core::ranker::{EmbeddingTables, Feature, FeatureSchema, RankingModel};
use facetrank_core::seed::rng;
use rand::Rng;

pub fn schema() -> FeatureSchema {
    let mut f = FeatureSchema::syntactic_with_emb_dot().features().to_vec();
    f.push(Feature::EmbCosine(Namespace::Title));
    f.push(Feature::Coverage(Namespace::Skill));
    FeatureSchema::new(f, PoolMode::Mean).unwrap()
}

/// `members` profiles over `entities` ids per namespace, with some empty bags.
pub fn profiles(members: u64, entities: u64, seed: u64) -> ProfileStore {
    let mut r = rng(seed);
    let bag = |r: &mut facetrank_core::seed::Rng| -> Vec<u64> {
        let n = r.gen_range(0..4);
        (0..n).map(|_| r.gen_range(0..entities)).collect()
    };
    (0..members)
        .map(|m| {
            let s = bag(&mut r);
            let t = bag(&mut r);
            let c = bag(&mut r);
            MemberProfile::new(m * 3 + 1, s, t, c, if m % 2 == 0 { "data engineer" } else { "web designer" })
        })
        .collect::<facetrank_core::Result<_>>()
        .unwrap()
}

pub fn tables(entities: u64, dim: usize, seed: u64) -> EmbeddingTables {
    let mut r = rng(seed);
    Namespace::ALL
        .iter()
        .map(|&ns| {
            let mut t = EmbeddingTable::new(ns, dim, EmbeddingKind::Concat);
            // Leave the last id without a vector.
            for id in 0..entities.saturating_sub(1) {
                t.insert(EntityId::new(ns, id), (0..dim).map(|_| r.gen_range(-1.0..1.0)).collect()).unwrap();
            }
            (ns, t)
        })
        .collect()
}

pub fn model(seed: u64) -> RankingModel {
    let s = schema();
    let net = MlpModel::new(s.width(), &[6, 4], Activation::Tanh, seed);
    RankingModel::new(s, net, Objective::Pairwise(PairwiseKind::Hinge), seed, 0).unwrap()
}
