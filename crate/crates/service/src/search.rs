use std::sync::{Arc, RwLock};

use facetrank_core::corpus::Query;
use facetrank_core::ranker::{assemble_from_views, EmbeddingTables, QueryView, RankingModel};
use facetrank_core::Error;
use serde_json::{json, Map, Value};

use crate::index::{retrieve, Candidate, InvertedIndex};
use crate::DEFAULT_RETRIEVAL_BUDGET;

#[derive(Debug, thiserror::Error, PartialEq)]
pub enum ServiceError {
    #[error("{0}")]
    BadRequest(String),
    #[error("{0}")]
    Internal(String),
}

impl From<Error> for ServiceError {
    fn from(e: Error) -> Self {
        match e {
            Error::Config(m) => ServiceError::BadRequest(m),
            other => ServiceError::Internal(other.to_string()),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SearchRequest {
    pub query: Query,
    pub k: usize,
}

const REQUEST_FIELDS: [&str; 5] = ["keywords", "facet_skills", "facet_titles", "facet_companies", "k"];

fn id_list(obj: &Map<String, Value>, field: &str) -> Result<Vec<u64>, ServiceError> {
    match obj.get(field) {
        None => Ok(Vec::new()),
        Some(Value::Array(items)) => items
            .iter()
            .map(|v| {
                v.as_u64()
                    .ok_or_else(|| ServiceError::BadRequest(format!("`{field}` must hold non-negative integer ids")))
            })
            .collect(),
        Some(_) => Err(ServiceError::BadRequest(format!("`{field}` must be an array"))),
    }
}

impl SearchRequest {
    /// Parses `{keywords, facet_skills, facet_titles, facet_companies, k}`;
    /// every field is optional except `k`, and unknown fields are rejected.
    pub fn from_json(body: &[u8]) -> Result<Self, ServiceError> {
        let value: Value =
            serde_json::from_slice(body).map_err(|e| ServiceError::BadRequest(format!("malformed JSON: {e}")))?;
        let obj = value
            .as_object()
            .ok_or_else(|| ServiceError::BadRequest("request body must be a JSON object".into()))?;
        if let Some(extra) = obj.keys().find(|k| !REQUEST_FIELDS.contains(&k.as_str())) {
            return Err(ServiceError::BadRequest(format!("unknown field `{extra}`")));
        }
        let keywords = match obj.get("keywords") {
            None => String::new(),
            Some(Value::String(s)) => s.clone(),
            Some(_) => return Err(ServiceError::BadRequest("`keywords` must be a string".into())),
        };
        let k = obj
            .get("k")
            .ok_or_else(|| ServiceError::BadRequest("missing field `k`".into()))?
            .as_u64()
            .filter(|&k| k >= 1)
            .ok_or_else(|| ServiceError::BadRequest("`k` must be a positive integer".into()))?;
        Ok(SearchRequest {
            query: Query::new(
                keywords,
                id_list(obj, "facet_skills")?,
                id_list(obj, "facet_titles")?,
                id_list(obj, "facet_companies")?,
            ),
            k: usize::try_from(k).unwrap_or(usize::MAX),
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SearchResult {
    pub member_id: u64,
    pub score: f64,
    pub first_pass_score: f64,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct SearchResponse {
    pub results: Vec<SearchResult>,
}

impl SearchResponse {
    pub fn to_json(&self) -> Value {
        json!({
            "results": self.results.iter().map(|r| json!({
                "member_id": r.member_id,
                "score": r.score,
                "first_pass_score": r.first_pass_score,
            })).collect::<Vec<_>>()
        })
    }
}

/// Scores candidates with `model` from forward-index member views and an
/// online query view, best first with ties by ascending member id.
pub fn second_pass_rank(
    candidates: &[Candidate],
    query: &Query,
    model: &RankingModel,
    index: &InvertedIndex,
    tables: &EmbeddingTables,
) -> Result<Vec<SearchResult>, Error> {
    let stored = index.schema();
    if stored.pooling() != model.schema.pooling()
        || !model.schema.embedding_namespaces().is_subset(&stored.embedding_namespaces())
    {
        return Err(Error::Shape(format!(
            "model schema `{}` is incompatible with the index schema `{}`",
            model.schema.names(),
            stored.names()
        )));
    }
    let query_view = QueryView::new(&model.schema, query, tables)?;
    let mut out = Vec::with_capacity(candidates.len());
    for c in candidates {
        let entry = index.entry(c.member_id).ok_or(Error::UnknownMember(c.member_id))?;
        let features = assemble_from_views(&model.schema, query, &query_view, &entry.profile, &entry.view)?;
        let score = model.score_features(&features)?;
        if !score.is_finite() {
            return Err(Error::NonFinite("second-pass score"));
        }
        out.push(SearchResult {
            member_id: c.member_id,
            score,
            first_pass_score: c.first_pass_score,
        });
    }
    out.sort_by(|a, b| b.score.total_cmp(&a.score).then(a.member_id.cmp(&b.member_id)));
    Ok(out)
}

/// Immutable state a request is served from.
#[derive(Debug, Clone)]
pub struct Snapshot {
    pub index: InvertedIndex,
    pub model: RankingModel,
    pub tables: EmbeddingTables,
    pub retrieval_budget: usize,
}

impl Snapshot {
    pub fn new(index: InvertedIndex, model: RankingModel, tables: EmbeddingTables) -> Result<Self, Error> {
        if index.schema() != &model.schema {
            return Err(Error::Shape(format!(
                "model schema `{}` differs from the index schema `{}`",
                model.schema.names(),
                index.schema().names()
            )));
        }
        model.schema.check_tables(&tables)?;
        Ok(Snapshot {
            index,
            model,
            tables,
            retrieval_budget: DEFAULT_RETRIEVAL_BUDGET,
        })
    }

    pub fn with_retrieval_budget(mut self, budget: usize) -> Self {
        self.retrieval_budget = budget.max(1);
        self
    }
}

/// Serves requests from the current snapshot; [`SearchService::reload`]
/// swaps snapshots atomically with respect to in-flight requests.
#[derive(Debug)]
pub struct SearchService {
    current: RwLock<Arc<Snapshot>>,
}

impl SearchService {
    pub fn new(snapshot: Snapshot) -> Self {
        SearchService {
            current: RwLock::new(Arc::new(snapshot)),
        }
    }

    pub fn snapshot(&self) -> Arc<Snapshot> {
        Arc::clone(&self.current.read().unwrap_or_else(|e| e.into_inner()))
    }

    pub fn reload(&self, snapshot: Snapshot) {
        *self.current.write().unwrap_or_else(|e| e.into_inner()) = Arc::new(snapshot);
    }

    pub fn handle_search(&self, request: &SearchRequest) -> Result<SearchResponse, ServiceError> {
        let snap = self.snapshot();
        let candidates = retrieve(&snap.index, &request.query, snap.retrieval_budget)?;
        let mut results = second_pass_rank(&candidates, &request.query, &snap.model, &snap.index, &snap.tables)?;
        results.truncate(request.k);
        Ok(SearchResponse { results })
    }
}
