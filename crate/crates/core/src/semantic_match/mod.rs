//! Two-arm semantic matching model over word-hashed text and entity ids.
//!
//! Both arms read the same sparse input layout (trigram counts, then skill,
//! title and company indicators) and project it through tanh layers into a
//! shared space. Exported query-arm outputs on one-hot entity inputs serve as
//! supervised entity embeddings.

mod model;
#[cfg(test)]
mod tests;

use std::collections::{BTreeMap, BTreeSet};

use crate::corpus::{EntityId, MemberProfile, Namespace, ProfileStore, Query, SessionStore};

pub use model::{
    dssm_loss, export_embeddings, train_dssm, train_dssm_logged, Arm, DssmConfig, DssmGradients, DssmModel,
    DssmTrainLog,
};

/// Lowercased, whitespace-split, `#`-padded character trigrams (word hashing).
pub fn word_hash(text: &str) -> Vec<String> {
    let mut out = Vec::new();
    for token in text.split_whitespace() {
        let padded: Vec<char> = std::iter::once('#')
            .chain(token.chars().flat_map(char::to_lowercase))
            .chain(std::iter::once('#'))
            .collect();
        out.extend(padded.windows(3).map(|w| w.iter().collect::<String>()));
    }
    out
}

/// Dense trigram indices `0..len` in lexicographic order.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct TrigramVocabulary {
    index: BTreeMap<String, usize>,
}

impl TrigramVocabulary {
    pub fn from_texts<'a>(texts: impl IntoIterator<Item = &'a str>) -> Self {
        let set: BTreeSet<String> = texts.into_iter().flat_map(word_hash).collect();
        Self::from_sorted(set)
    }

    fn from_sorted(set: BTreeSet<String>) -> Self {
        TrigramVocabulary {
            index: set.into_iter().enumerate().map(|(i, t)| (t, i)).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, trigram: &str) -> Option<usize> {
        self.index.get(trigram).copied()
    }

    pub fn trigrams(&self) -> impl Iterator<Item = &str> {
        self.index.keys().map(String::as_str)
    }
}

/// Dense entity indices `0..len` in id order, for one namespace.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EntityVocabulary {
    namespace: Namespace,
    index: BTreeMap<EntityId, usize>,
}

impl EntityVocabulary {
    pub fn new(namespace: Namespace, ids: impl IntoIterator<Item = EntityId>) -> Self {
        let set: BTreeSet<EntityId> = ids.into_iter().filter(|e| e.namespace == namespace).collect();
        EntityVocabulary {
            namespace,
            index: set.into_iter().enumerate().map(|(i, e)| (e, i)).collect(),
        }
    }

    pub fn namespace(&self) -> Namespace {
        self.namespace
    }

    pub fn len(&self) -> usize {
        self.index.len()
    }

    pub fn is_empty(&self) -> bool {
        self.index.is_empty()
    }

    pub fn get(&self, id: &EntityId) -> Option<usize> {
        self.index.get(id).copied()
    }

    pub fn ids(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.index.keys().copied()
    }
}

/// Sparse input vector: strictly increasing indices with nonzero values.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct SparseInput {
    pub entries: Vec<(usize, f64)>,
}

impl SparseInput {
    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_dense(&self, width: usize) -> Vec<f64> {
        let mut out = vec![0.0; width];
        for &(i, v) in &self.entries {
            out[i] = v;
        }
        out
    }
}

/// Input layout shared by both arms: trigrams, then skills, titles, companies.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct InputLayout {
    pub trigrams: TrigramVocabulary,
    /// In [`Namespace::ALL`] order.
    pub entities: Vec<EntityVocabulary>,
}

impl InputLayout {
    pub fn new(trigrams: TrigramVocabulary, entities: Vec<EntityVocabulary>) -> crate::Result<Self> {
        let order: Vec<Namespace> = entities.iter().map(|v| v.namespace).collect();
        if order != Namespace::ALL {
            return Err(crate::Error::Config("entity vocabularies must cover skill, title, company in order".into()));
        }
        Ok(InputLayout { trigrams, entities })
    }

    /// Vocabularies from the training split only: query keywords and facets
    /// plus headline and entities of every impressed member.
    pub fn from_training(sessions: &SessionStore, profiles: &ProfileStore) -> Self {
        let mut texts: Vec<&str> = Vec::new();
        let mut ids: BTreeSet<EntityId> = BTreeSet::new();
        let mut seen = BTreeSet::new();
        for s in sessions.iter() {
            texts.push(&s.query.keywords);
            for ns in Namespace::ALL {
                ids.extend(s.query.facets(ns).iter().copied());
            }
            for imp in &s.impressions {
                if !seen.insert(imp.member_id) {
                    continue;
                }
                if let Some(m) = profiles.get(imp.member_id) {
                    texts.push(&m.headline);
                    for ns in Namespace::ALL {
                        ids.extend(m.entities(ns).iter().copied());
                    }
                }
            }
        }
        InputLayout {
            trigrams: TrigramVocabulary::from_texts(texts),
            entities: Namespace::ALL
                .iter()
                .map(|&ns| EntityVocabulary::new(ns, ids.iter().copied()))
                .collect(),
        }
    }

    pub fn width(&self) -> usize {
        self.trigrams.len() + self.entities.iter().map(EntityVocabulary::len).sum::<usize>()
    }

    /// Offset of the first indicator of `namespace`.
    pub fn offset(&self, namespace: Namespace) -> usize {
        let mut at = self.trigrams.len();
        for v in &self.entities {
            if v.namespace == namespace {
                return at;
            }
            at += v.len();
        }
        unreachable!("layout covers every namespace")
    }

    pub fn vocabulary(&self, namespace: Namespace) -> &EntityVocabulary {
        self.entities
            .iter()
            .find(|v| v.namespace == namespace)
            .expect("layout covers every namespace")
    }

    /// Trigram counts (unknown trigrams dropped) and indicators of known entities.
    pub fn build_input<'a>(&self, text: &str, bag: impl Fn(Namespace) -> &'a BTreeSet<EntityId>) -> SparseInput {
        let mut counts: BTreeMap<usize, f64> = BTreeMap::new();
        for t in word_hash(text) {
            if let Some(i) = self.trigrams.get(&t) {
                *counts.entry(i).or_insert(0.0) += 1.0;
            }
        }
        for v in &self.entities {
            let base = self.offset(v.namespace);
            for id in bag(v.namespace) {
                if let Some(i) = v.get(id) {
                    counts.insert(base + i, 1.0);
                }
            }
        }
        SparseInput {
            entries: counts.into_iter().collect(),
        }
    }

    pub fn query_input(&self, query: &Query) -> SparseInput {
        self.build_input(&query.keywords, |ns| query.facets(ns))
    }

    pub fn member_input(&self, member: &MemberProfile) -> SparseInput {
        self.build_input(&member.headline, |ns| member.entities(ns))
    }

    /// One-hot input of a single known entity.
    pub fn entity_input(&self, id: EntityId) -> Option<SparseInput> {
        let i = self.vocabulary(id.namespace).get(&id)?;
        Some(SparseInput {
            entries: vec![(self.offset(id.namespace) + i, 1.0)],
        })
    }
}
