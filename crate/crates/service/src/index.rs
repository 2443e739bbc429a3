use std::collections::BTreeMap;

use facetrank_core::corpus::{EntityId, MemberProfile, Namespace, ProfileStore, Query};
use facetrank_core::ranker::{EmbeddingTables, FeatureSchema, MemberView, QueryView};
use facetrank_core::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct ForwardEntry {
    pub profile: MemberProfile,
    /// Pooled member embeddings and headline trigrams, computed offline.
    pub view: MemberView,
}

/// Posting lists per entity plus a forward index of member features.
#[derive(Debug, Clone, PartialEq)]
pub struct InvertedIndex {
    schema: FeatureSchema,
    postings: BTreeMap<EntityId, Vec<u64>>,
    forward: BTreeMap<u64, ForwardEntry>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Candidate {
    pub member_id: u64,
    pub first_pass_score: f64,
}

impl InvertedIndex {
    /// Postings from profile entity sets; member views pooled under `schema`.
    pub fn build(profiles: &ProfileStore, tables: &EmbeddingTables, schema: &FeatureSchema) -> Result<Self> {
        schema.check_tables(tables)?;
        let mut postings: BTreeMap<EntityId, Vec<u64>> = BTreeMap::new();
        let mut forward = BTreeMap::new();
        // Profiles iterate in member_id order, so postings come out sorted.
        for p in profiles.iter() {
            for ns in Namespace::ALL {
                for e in p.entities(ns) {
                    postings.entry(*e).or_default().push(p.member_id);
                }
            }
            forward.insert(
                p.member_id,
                ForwardEntry {
                    profile: p.clone(),
                    view: MemberView::new(schema, p, tables)?,
                },
            );
        }
        Ok(InvertedIndex {
            schema: schema.clone(),
            postings,
            forward,
        })
    }

    pub fn schema(&self) -> &FeatureSchema {
        &self.schema
    }

    pub fn postings(&self, entity: &EntityId) -> &[u64] {
        self.postings.get(entity).map(Vec::as_slice).unwrap_or(&[])
    }

    pub fn entry(&self, member_id: u64) -> Option<&ForwardEntry> {
        self.forward.get(&member_id)
    }

    pub fn len(&self) -> usize {
        self.forward.len()
    }

    pub fn is_empty(&self) -> bool {
        self.forward.is_empty()
    }

    pub fn members(&self) -> impl Iterator<Item = u64> + '_ {
        self.forward.keys().copied()
    }
}

/// Members holding at least one facet id of every nonempty facet namespace,
/// scored by the summed per-namespace match fraction, best `limit` first
/// (ties by ascending member id). A query without facets keeps every member
/// at score 0.
pub fn retrieve(index: &InvertedIndex, query: &Query, limit: usize) -> Result<Vec<Candidate>> {
    if limit == 0 {
        return Err(Error::Config("retrieval limit must be at least 1".into()));
    }
    if !query.is_constrained() {
        return Err(Error::Config("query has neither keywords nor facets".into()));
    }
    let mut scored: Vec<Candidate> = if query.has_facets() {
        let mut acc: Option<BTreeMap<u64, f64>> = None;
        for ns in Namespace::ALL {
            let facet = query.facets(ns);
            if facet.is_empty() {
                continue;
            }
            let mut matched: BTreeMap<u64, usize> = BTreeMap::new();
            for e in facet {
                for &m in index.postings(e) {
                    *matched.entry(m).or_insert(0) += 1;
                }
            }
            let n = facet.len() as f64;
            acc = Some(match acc {
                None => matched.into_iter().map(|(m, c)| (m, c as f64 / n)).collect(),
                Some(prev) => prev
                    .into_iter()
                    .filter_map(|(m, s)| matched.get(&m).map(|&c| (m, s + c as f64 / n)))
                    .collect(),
            });
        }
        acc.unwrap_or_default()
            .into_iter()
            .map(|(member_id, first_pass_score)| Candidate {
                member_id,
                first_pass_score,
            })
            .collect()
    } else {
        index
            .members()
            .map(|member_id| Candidate {
                member_id,
                first_pass_score: 0.0,
            })
            .collect()
    };
    scored.sort_by(|a, b| b.first_pass_score.total_cmp(&a.first_pass_score).then(a.member_id.cmp(&b.member_id)));
    scored.truncate(limit);
    Ok(scored)
}

/// Per-namespace pooled facet vectors; the zero vector for an empty facet.
pub fn query_embedding(query: &Query, tables: &EmbeddingTables, schema: &FeatureSchema) -> Result<BTreeMap<Namespace, Vec<f64>>> {
    let view = QueryView::new(schema, query, tables)?;
    Ok(view.pooled.into_iter().map(|(ns, p)| (ns, p.vector)).collect())
}
