use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::corpus::{MemberProfile, Namespace, ProfileStore, Query};
use crate::graph_embed::{cosine, dot, pool, EmbeddingTable, PoolMode, Pooled};
use crate::semantic_match::word_hash;
use crate::{Error, Result};

/// Embedding tables keyed by the namespace they cover.
pub type EmbeddingTables = BTreeMap<Namespace, EmbeddingTable>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum Feature {
    Jaccard(Namespace),
    KeywordTrigramOverlap,
    EmbDot(Namespace),
    EmbCosine(Namespace),
    EmbHadamard { namespace: Namespace, dim: usize },
    /// 1 when the member's bag has at least one embedded entity.
    Coverage(Namespace),
}

impl Feature {
    pub fn width(&self) -> usize {
        match self {
            Feature::EmbHadamard { dim, .. } => *dim,
            _ => 1,
        }
    }

    fn embedding_namespace(&self) -> Option<Namespace> {
        match *self {
            Feature::EmbDot(ns) | Feature::EmbCosine(ns) | Feature::Coverage(ns) => Some(ns),
            Feature::EmbHadamard { namespace, .. } => Some(namespace),
            Feature::Jaccard(_) | Feature::KeywordTrigramOverlap => None,
        }
    }
}

impl fmt::Display for Feature {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Feature::Jaccard(ns) => write!(f, "{ns}_jaccard"),
            Feature::KeywordTrigramOverlap => f.write_str("keyword_trigram_overlap"),
            Feature::EmbDot(ns) => write!(f, "emb_dot:{ns}"),
            Feature::EmbCosine(ns) => write!(f, "emb_cosine:{ns}"),
            Feature::EmbHadamard { namespace, dim } => write!(f, "emb_hadamard:{namespace}:{dim}"),
            Feature::Coverage(ns) => write!(f, "coverage:{ns}"),
        }
    }
}

impl FromStr for Feature {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let bad = || Error::Config(format!("unknown feature `{s}`"));
        if s == "keyword_trigram_overlap" {
            return Ok(Feature::KeywordTrigramOverlap);
        }
        if let Some(ns) = s.strip_suffix("_jaccard") {
            return Ok(Feature::Jaccard(ns.parse().map_err(|_| bad())?));
        }
        let parts: Vec<&str> = s.split(':').collect();
        let ns = |i: usize| -> Result<Namespace> { parts.get(i).ok_or_else(bad)?.parse().map_err(|_| bad()) };
        match (parts[0], parts.len()) {
            ("emb_dot", 2) => Ok(Feature::EmbDot(ns(1)?)),
            ("emb_cosine", 2) => Ok(Feature::EmbCosine(ns(1)?)),
            ("coverage", 2) => Ok(Feature::Coverage(ns(1)?)),
            ("emb_hadamard", 3) => {
                let dim: usize = parts[2].parse().map_err(|_| bad())?;
                if dim == 0 {
                    return Err(bad());
                }
                Ok(Feature::EmbHadamard { namespace: ns(1)?, dim })
            }
            _ => Err(bad()),
        }
    }
}

/// Ordered feature list shared by every example a model scores.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FeatureSchema {
    features: Vec<Feature>,
    pooling: PoolMode,
}

impl FeatureSchema {
    pub fn new(features: Vec<Feature>, pooling: PoolMode) -> Result<Self> {
        if features.is_empty() {
            return Err(Error::Config("feature schema is empty".into()));
        }
        let distinct: BTreeSet<&Feature> = features.iter().collect();
        if distinct.len() != features.len() {
            return Err(Error::Config("feature schema repeats a feature".into()));
        }
        Ok(FeatureSchema { features, pooling })
    }

    /// Facet Jaccard per namespace plus keyword/headline trigram overlap.
    pub fn syntactic() -> Self {
        let mut f: Vec<Feature> = Namespace::ALL.iter().map(|&ns| Feature::Jaccard(ns)).collect();
        f.push(Feature::KeywordTrigramOverlap);
        FeatureSchema {
            features: f,
            pooling: PoolMode::Mean,
        }
    }

    /// [`FeatureSchema::syntactic`] followed by `emb_dot` for each namespace.
    pub fn syntactic_with_emb_dot() -> Self {
        let mut s = Self::syntactic();
        s.features.extend(Namespace::ALL.iter().map(|&ns| Feature::EmbDot(ns)));
        s
    }

    pub fn features(&self) -> &[Feature] {
        &self.features
    }

    pub fn pooling(&self) -> PoolMode {
        self.pooling
    }

    pub fn width(&self) -> usize {
        self.features.iter().map(Feature::width).sum()
    }

    /// Namespaces whose embedding tables the schema reads.
    pub fn embedding_namespaces(&self) -> BTreeSet<Namespace> {
        self.features.iter().filter_map(Feature::embedding_namespace).collect()
    }

    pub fn names(&self) -> String {
        self.features.iter().map(|f| f.to_string()).collect::<Vec<_>>().join(",")
    }

    pub fn parse_names(names: &str, pooling: PoolMode) -> Result<Self> {
        Self::new(names.split(',').map(|n| n.trim().parse()).collect::<Result<_>>()?, pooling)
    }

    /// Checks that `tables` cover the schema's namespaces at the right widths.
    pub fn check_tables(&self, tables: &EmbeddingTables) -> Result<()> {
        for f in &self.features {
            let Some(ns) = f.embedding_namespace() else { continue };
            let table = tables
                .get(&ns)
                .ok_or_else(|| Error::Config(format!("feature {f} needs a {ns} embedding table")))?;
            if table.namespace() != ns {
                return Err(Error::Config(format!("table registered for {ns} holds {} vectors", table.namespace())));
            }
            if let Feature::EmbHadamard { dim, .. } = f {
                if table.dim() != *dim {
                    return Err(Error::Shape(format!("feature {f} against a table of dim {}", table.dim())));
                }
            }
        }
        Ok(())
    }
}

/// Per-member inputs to feature assembly; the search service stores these in
/// its forward index so that online and offline scoring share one code path.
#[derive(Debug, Clone, PartialEq)]
pub struct MemberView {
    pub pooled: BTreeMap<Namespace, Pooled>,
    pub headline_trigrams: BTreeSet<String>,
}

/// Per-query inputs to feature assembly, computed once per query.
#[derive(Debug, Clone, PartialEq)]
pub struct QueryView {
    pub pooled: BTreeMap<Namespace, Pooled>,
    pub keyword_trigrams: BTreeSet<String>,
}

fn pooled_bags<'a>(
    namespaces: &BTreeSet<Namespace>,
    bag: impl Fn(Namespace) -> &'a BTreeSet<crate::corpus::EntityId>,
    tables: &EmbeddingTables,
    mode: PoolMode,
) -> Result<BTreeMap<Namespace, Pooled>> {
    namespaces
        .iter()
        .map(|&ns| {
            let table = tables
                .get(&ns)
                .ok_or_else(|| Error::Config(format!("missing {ns} embedding table")))?;
            Ok((ns, pool(bag(ns), table, mode)))
        })
        .collect()
}

fn trigram_set(text: &str) -> BTreeSet<String> {
    word_hash(text).into_iter().collect()
}

impl MemberView {
    pub fn new(schema: &FeatureSchema, member: &MemberProfile, tables: &EmbeddingTables) -> Result<Self> {
        Ok(MemberView {
            pooled: pooled_bags(&schema.embedding_namespaces(), |ns| member.entities(ns), tables, schema.pooling)?,
            headline_trigrams: trigram_set(&member.headline),
        })
    }
}

impl QueryView {
    pub fn new(schema: &FeatureSchema, query: &Query, tables: &EmbeddingTables) -> Result<Self> {
        Ok(QueryView {
            pooled: pooled_bags(&schema.embedding_namespaces(), |ns| query.facets(ns), tables, schema.pooling)?,
            keyword_trigrams: trigram_set(&query.keywords),
        })
    }
}

/// `|a ∩ b| / |a ∪ b|`, 0 when both are empty.
pub fn jaccard<T: Ord>(a: &BTreeSet<T>, b: &BTreeSet<T>) -> f64 {
    let inter = a.intersection(b).count();
    let union = a.len() + b.len() - inter;
    if union == 0 {
        0.0
    } else {
        inter as f64 / union as f64
    }
}

fn pooled(view: &BTreeMap<Namespace, Pooled>, ns: Namespace) -> Result<&Pooled> {
    view.get(&ns)
        .ok_or_else(|| Error::Config(format!("view lacks a pooled {ns} vector")))
}

/// Feature vector from precomputed views.
pub fn assemble_from_views(
    schema: &FeatureSchema,
    query: &Query,
    query_view: &QueryView,
    member: &MemberProfile,
    member_view: &MemberView,
) -> Result<Vec<f64>> {
    let mut out = Vec::with_capacity(schema.width());
    for f in &schema.features {
        match *f {
            Feature::Jaccard(ns) => out.push(jaccard(query.facets(ns), member.entities(ns))),
            Feature::KeywordTrigramOverlap => {
                out.push(jaccard(&query_view.keyword_trigrams, &member_view.headline_trigrams))
            }
            Feature::EmbDot(ns) => {
                out.push(dot(&pooled(&member_view.pooled, ns)?.vector, &pooled(&query_view.pooled, ns)?.vector))
            }
            Feature::EmbCosine(ns) => {
                out.push(cosine(&pooled(&member_view.pooled, ns)?.vector, &pooled(&query_view.pooled, ns)?.vector))
            }
            Feature::EmbHadamard { namespace, dim } => {
                let m = &pooled(&member_view.pooled, namespace)?.vector;
                let q = &pooled(&query_view.pooled, namespace)?.vector;
                if m.len() != dim || q.len() != dim {
                    return Err(Error::Shape(format!("feature {f} against vectors of dim {}", m.len())));
                }
                out.extend(m.iter().zip(q).map(|(a, b)| a * b));
            }
            Feature::Coverage(ns) => {
                out.push(if pooled(&member_view.pooled, ns)?.coverage > 0.0 { 1.0 } else { 0.0 })
            }
        }
    }
    if out.iter().any(|v| !v.is_finite()) {
        return Err(Error::NonFinite("feature"));
    }
    Ok(out)
}

pub fn assemble_features(
    schema: &FeatureSchema,
    query: &Query,
    member: &MemberProfile,
    tables: &EmbeddingTables,
) -> Result<Vec<f64>> {
    let qv = QueryView::new(schema, query, tables)?;
    let mv = MemberView::new(schema, member, tables)?;
    assemble_from_views(schema, query, &qv, member, &mv)
}

/// [`assemble_features`] for a member looked up by id.
pub fn assemble_member_features(
    schema: &FeatureSchema,
    query: &Query,
    member_id: u64,
    profiles: &ProfileStore,
    tables: &EmbeddingTables,
) -> Result<Vec<f64>> {
    assemble_features(schema, query, profiles.require(member_id)?, tables)
}
