//! Seeded synthetic corpus with a latent-cluster relevance oracle.
//!
//! Entities of every namespace are partitioned into `clusters` groups. Each
//! member has a home cluster and draws each entity (and headline word) from it
//! with probability `1 - label_noise`, otherwise from a different cluster.
//! Each query draws its facets and keywords from a single cluster, and an
//! impression is labeled positive with probability `p_match` when the member's
//! home cluster equals the query cluster and `p_mismatch` otherwise.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::Rng as _;

use super::{EntityId, Impression, MemberProfile, Namespace, ProfileStore, Query, Session, SessionStore};
use crate::error::{Error, Result};
use crate::seed::{rng, Rng};

#[derive(Debug, Clone, PartialEq)]
pub struct SynthConfig {
    pub clusters: usize,
    pub skills_per_cluster: usize,
    pub titles_per_cluster: usize,
    pub companies_per_cluster: usize,
    pub members: usize,
    pub sessions: usize,
    pub impressions_per_session: usize,
    pub label_noise: f64,
    pub p_match: f64,
    pub p_mismatch: f64,
    pub skills_per_member: usize,
    pub titles_per_member: usize,
    pub companies_per_member: usize,
    pub query_skills: usize,
    pub query_titles: usize,
    pub query_companies: usize,
    pub words_per_cluster: usize,
    pub headline_words: usize,
    pub query_words: usize,
    /// Probability that a query carries keywords at all.
    pub keyword_probability: f64,
    pub start_timestamp: i64,
}

impl Default for SynthConfig {
    fn default() -> Self {
        SynthConfig {
            clusters: 2,
            skills_per_cluster: 40,
            titles_per_cluster: 12,
            companies_per_cluster: 16,
            members: 1000,
            sessions: 2000,
            impressions_per_session: 10,
            label_noise: 0.1,
            p_match: 0.8,
            p_mismatch: 0.05,
            skills_per_member: 4,
            titles_per_member: 2,
            companies_per_member: 2,
            query_skills: 2,
            query_titles: 1,
            query_companies: 1,
            words_per_cluster: 20,
            headline_words: 3,
            query_words: 1,
            keyword_probability: 0.5,
            start_timestamp: 1_500_000_000,
        }
    }
}

impl SynthConfig {
    fn entities_per_cluster(&self, ns: Namespace) -> usize {
        match ns {
            Namespace::Skill => self.skills_per_cluster,
            Namespace::Title => self.titles_per_cluster,
            Namespace::Company => self.companies_per_cluster,
        }
    }

    fn per_member(&self, ns: Namespace) -> usize {
        match ns {
            Namespace::Skill => self.skills_per_member,
            Namespace::Title => self.titles_per_member,
            Namespace::Company => self.companies_per_member,
        }
    }

    fn per_query(&self, ns: Namespace) -> usize {
        match ns {
            Namespace::Skill => self.query_skills,
            Namespace::Title => self.query_titles,
            Namespace::Company => self.query_companies,
        }
    }

    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("clusters", self.clusters),
            ("skills_per_cluster", self.skills_per_cluster),
            ("titles_per_cluster", self.titles_per_cluster),
            ("companies_per_cluster", self.companies_per_cluster),
            ("members", self.members),
            ("sessions", self.sessions),
            ("impressions_per_session", self.impressions_per_session),
            ("words_per_cluster", self.words_per_cluster),
        ];
        for (name, v) in positive {
            if v == 0 {
                return Err(Error::Config(format!("{name} must be positive")));
            }
        }
        if self.query_skills + self.query_titles + self.query_companies == 0 {
            return Err(Error::Config("queries need at least one facet".into()));
        }
        if self.impressions_per_session > self.members {
            return Err(Error::Config(
                "impressions_per_session exceeds the member count".into(),
            ));
        }
        for ns in Namespace::ALL {
            if self.per_query(ns) > self.entities_per_cluster(ns) {
                return Err(Error::Config(format!(
                    "query {ns} facets exceed entities per cluster"
                )));
            }
        }
        for (name, p) in [
            ("label_noise", self.label_noise),
            ("p_match", self.p_match),
            ("p_mismatch", self.p_mismatch),
            ("keyword_probability", self.keyword_probability),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1]")));
            }
        }
        Ok(())
    }

    /// Entity id of the `k`-th entity of `cluster`.
    pub fn entity(&self, ns: Namespace, cluster: usize, k: usize) -> EntityId {
        EntityId::new(ns, (cluster * self.entities_per_cluster(ns) + k) as u64)
    }
}

/// Latent structure behind a synthetic corpus.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthOracle {
    pub member_cluster: BTreeMap<u64, usize>,
    pub session_cluster: BTreeMap<u64, usize>,
    pub entity_cluster: BTreeMap<EntityId, usize>,
    pub cluster_words: Vec<Vec<String>>,
    pub p_match: f64,
    pub p_mismatch: f64,
}

impl SynthOracle {
    /// Label probability of showing `member` in `session`.
    pub fn label_probability(&self, session_id: u64, member_id: u64) -> Option<f64> {
        let q = self.session_cluster.get(&session_id)?;
        let m = self.member_cluster.get(&member_id)?;
        Some(if q == m { self.p_match } else { self.p_mismatch })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SynthCorpus {
    pub profiles: ProfileStore,
    pub sessions: SessionStore,
    pub oracle: SynthOracle,
}

pub fn synth_corpus(config: &SynthConfig, seed: u64) -> Result<SynthCorpus> {
    config.validate()?;
    let mut rng = rng(seed);
    let cluster_words = make_words(config, &mut rng);

    let mut entity_cluster = BTreeMap::new();
    for ns in Namespace::ALL {
        for c in 0..config.clusters {
            for k in 0..config.entities_per_cluster(ns) {
                entity_cluster.insert(config.entity(ns, c, k), c);
            }
        }
    }

    let mut profiles = ProfileStore::new();
    let mut member_cluster = BTreeMap::new();
    for m in 0..config.members {
        let member_id = m as u64;
        let home = rng.gen_range(0..config.clusters);
        member_cluster.insert(member_id, home);
        let mut bags: Vec<BTreeSet<u64>> = Vec::with_capacity(3);
        for ns in Namespace::ALL {
            bags.push(draw_member_bag(config, ns, home, &mut rng));
        }
        let words: Vec<&str> = (0..config.headline_words)
            .map(|_| {
                let c = noisy_cluster(config, home, &mut rng);
                cluster_words[c][rng.gen_range(0..cluster_words[c].len())].as_str()
            })
            .collect();
        let [skills, titles, companies]: [BTreeSet<u64>; 3] = bags.try_into().expect("three namespaces");
        profiles.insert(MemberProfile::new(member_id, skills, titles, companies, words.join(" ")))?;
    }

    let member_ids: Vec<u64> = (0..config.members as u64).collect();
    let mut sessions = SessionStore::new();
    let mut session_cluster = BTreeMap::new();
    let mut timestamp = config.start_timestamp;
    for s in 0..config.sessions {
        let session_id = s as u64;
        let cluster = rng.gen_range(0..config.clusters);
        session_cluster.insert(session_id, cluster);

        let mut facets: Vec<Vec<u64>> = Vec::with_capacity(3);
        for ns in Namespace::ALL {
            let mut pool: Vec<usize> = (0..config.entities_per_cluster(ns)).collect();
            pool.shuffle(&mut rng);
            facets.push(
                pool.into_iter()
                    .take(config.per_query(ns))
                    .map(|k| config.entity(ns, cluster, k).id)
                    .collect(),
            );
        }
        let keywords = if config.query_words > 0 && rng.gen_bool(config.keyword_probability) {
            let words = &cluster_words[cluster];
            (0..config.query_words)
                .map(|_| words[rng.gen_range(0..words.len())].as_str())
                .collect::<Vec<_>>()
                .join(" ")
        } else {
            String::new()
        };
        let [fs, ft, fc]: [Vec<u64>; 3] = facets.try_into().expect("three namespaces");
        let query = Query::new(keywords, fs, ft, fc);

        let shown: Vec<u64> = member_ids
            .choose_multiple(&mut rng, config.impressions_per_session)
            .copied()
            .collect();
        let impressions = shown
            .into_iter()
            .enumerate()
            .map(|(pos, member_id)| {
                let p = if member_cluster[&member_id] == cluster {
                    config.p_match
                } else {
                    config.p_mismatch
                };
                Impression {
                    member_id,
                    label: u8::from(rng.gen_bool(p)),
                    position: pos as u32,
                }
            })
            .collect();

        timestamp += rng.gen_range(1..=600);
        sessions.insert(Session {
            session_id,
            timestamp,
            query,
            impressions,
        })?;
    }

    Ok(SynthCorpus {
        profiles,
        sessions,
        oracle: SynthOracle {
            member_cluster,
            session_cluster,
            entity_cluster,
            cluster_words,
            p_match: config.p_match,
            p_mismatch: config.p_mismatch,
        },
    })
}

fn noisy_cluster(config: &SynthConfig, home: usize, rng: &mut Rng) -> usize {
    if config.clusters > 1 && config.label_noise > 0.0 && rng.gen_bool(config.label_noise) {
        let other = rng.gen_range(0..config.clusters - 1);
        if other >= home {
            other + 1
        } else {
            other
        }
    } else {
        home
    }
}

fn draw_member_bag(config: &SynthConfig, ns: Namespace, home: usize, rng: &mut Rng) -> BTreeSet<u64> {
    let target = config.per_member(ns);
    let mut bag = BTreeSet::new();
    let mut attempts = 0;
    while bag.len() < target && attempts < 20 * target {
        attempts += 1;
        let c = noisy_cluster(config, home, rng);
        let k = rng.gen_range(0..config.entities_per_cluster(ns));
        bag.insert(config.entity(ns, c, k).id);
    }
    bag
}

fn make_words(config: &SynthConfig, rng: &mut Rng) -> Vec<Vec<String>> {
    const CONSONANTS: &[u8] = b"bcdfghjklmnprstvz";
    const VOWELS: &[u8] = b"aeiou";
    let mut seen = BTreeSet::new();
    let mut clusters = Vec::with_capacity(config.clusters);
    for _ in 0..config.clusters {
        let mut words = Vec::with_capacity(config.words_per_cluster);
        while words.len() < config.words_per_cluster {
            let syllables = rng.gen_range(2..=3);
            let mut w = String::new();
            for _ in 0..syllables {
                w.push(CONSONANTS[rng.gen_range(0..CONSONANTS.len())] as char);
                w.push(VOWELS[rng.gen_range(0..VOWELS.len())] as char);
            }
            if seen.insert(w.clone()) {
                words.push(w);
            }
        }
        clusters.push(words);
    }
    clusters
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small() -> SynthConfig {
        SynthConfig {
            members: 200,
            sessions: 300,
            ..SynthConfig::default()
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = synth_corpus(&small(), 7).unwrap();
        let b = synth_corpus(&small(), 7).unwrap();
        assert_eq!(a, b);
        let c = synth_corpus(&small(), 8).unwrap();
        assert_ne!(a.sessions, c.sessions);
    }

    #[test]
    fn noiseless_members_stay_home() {
        let config = SynthConfig {
            label_noise: 0.0,
            ..small()
        };
        let corpus = synth_corpus(&config, 3).unwrap();
        for p in corpus.profiles.iter() {
            let home = corpus.oracle.member_cluster[&p.member_id];
            for ns in Namespace::ALL {
                for e in p.entities(ns) {
                    assert_eq!(corpus.oracle.entity_cluster[e], home);
                }
            }
        }
    }

    #[test]
    fn non_positive_counts_rejected() {
        for config in [
            SynthConfig { members: 0, ..small() },
            SynthConfig { clusters: 0, ..small() },
            SynthConfig { impressions_per_session: 0, ..small() },
        ] {
            assert!(synth_corpus(&config, 1).is_err());
        }
    }

    #[test]
    fn sessions_satisfy_invariants() {
        let corpus = synth_corpus(&small(), 11).unwrap();
        for s in corpus.sessions.iter() {
            s.validate().unwrap();
            assert_eq!(s.impressions.len(), small().impressions_per_session);
        }
    }
}
