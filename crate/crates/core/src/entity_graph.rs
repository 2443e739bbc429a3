//! Weighted entity co-occurrence graphs built from member profiles.
//!
//! Vertices are the entities of one namespace; the weight of an undirected
//! edge counts the members whose profile holds both endpoints.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};

use crate::corpus::{EntityId, Namespace, ProfileStore};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WeightedGraph {
    namespace: Namespace,
    vertices: BTreeSet<EntityId>,
    /// Keyed by `(a, b)` with `a < b`.
    edges: BTreeMap<(EntityId, EntityId), u64>,
    degree: BTreeMap<EntityId, u64>,
    total_weight: u64,
}

fn ordered(a: EntityId, b: EntityId) -> (EntityId, EntityId) {
    if a <= b {
        (a, b)
    } else {
        (b, a)
    }
}

impl WeightedGraph {
    pub fn new(namespace: Namespace) -> Self {
        WeightedGraph {
            namespace,
            vertices: BTreeSet::new(),
            edges: BTreeMap::new(),
            degree: BTreeMap::new(),
            total_weight: 0,
        }
    }

    /// Builds a graph from an explicit vertex set and edge list.
    pub fn from_edges(
        namespace: Namespace,
        vertices: impl IntoIterator<Item = EntityId>,
        edges: impl IntoIterator<Item = (EntityId, EntityId, u64)>,
    ) -> Result<Self> {
        let mut g = WeightedGraph::new(namespace);
        for v in vertices {
            g.add_vertex(v)?;
        }
        for (a, b, w) in edges {
            g.add_edge(a, b, w)?;
        }
        Ok(g)
    }

    pub fn add_vertex(&mut self, v: EntityId) -> Result<()> {
        if v.namespace != self.namespace {
            return Err(Error::InvalidRecord(format!(
                "vertex {v} does not belong to namespace {}",
                self.namespace
            )));
        }
        self.vertices.insert(v);
        self.degree.entry(v).or_insert(0);
        Ok(())
    }

    /// Adds `weight` to the undirected edge `{a, b}`; self-loops and zero weights are rejected.
    pub fn add_edge(&mut self, a: EntityId, b: EntityId, weight: u64) -> Result<()> {
        if a == b {
            return Err(Error::InvalidRecord(format!("self-loop on {a}")));
        }
        if weight == 0 {
            return Err(Error::InvalidRecord(format!("zero weight on ({a}, {b})")));
        }
        self.add_vertex(a)?;
        self.add_vertex(b)?;
        *self.edges.entry(ordered(a, b)).or_insert(0) += weight;
        *self.degree.get_mut(&a).expect("vertex added") += weight;
        *self.degree.get_mut(&b).expect("vertex added") += weight;
        self.total_weight += weight;
        Ok(())
    }

    pub fn namespace(&self) -> Namespace {
        self.namespace
    }

    pub fn vertices(&self) -> impl ExactSizeIterator<Item = EntityId> + '_ {
        self.vertices.iter().copied()
    }

    pub fn vertex_count(&self) -> usize {
        self.vertices.len()
    }

    pub fn contains(&self, v: EntityId) -> bool {
        self.vertices.contains(&v)
    }

    /// Edges as `(a, b, w)` with `a < b`, sorted.
    pub fn edges(&self) -> impl ExactSizeIterator<Item = (EntityId, EntityId, u64)> + '_ {
        self.edges.iter().map(|(&(a, b), &w)| (a, b, w))
    }

    pub fn edge_count(&self) -> usize {
        self.edges.len()
    }

    /// Weight of `{a, b}`, zero when absent. Symmetric in its arguments.
    pub fn weight(&self, a: EntityId, b: EntityId) -> u64 {
        self.edges.get(&ordered(a, b)).copied().unwrap_or(0)
    }

    /// Total edge weight `W`.
    pub fn total_weight(&self) -> u64 {
        self.total_weight
    }

    /// Weighted degree `W_i`, or `None` for an unknown vertex.
    pub fn weighted_degree(&self, v: EntityId) -> Option<u64> {
        self.degree.get(&v).copied()
    }

    /// Vertices without incident edges.
    pub fn isolated(&self) -> Vec<EntityId> {
        self.degree
            .iter()
            .filter(|(_, &d)| d == 0)
            .map(|(&v, _)| v)
            .collect()
    }

    /// Copy of the graph with isolated vertices removed.
    pub fn without_isolated(&self) -> WeightedGraph {
        let mut g = self.clone();
        for v in self.isolated() {
            g.vertices.remove(&v);
            g.degree.remove(&v);
        }
        g
    }

    /// Neighbors of `v` with edge weights, ascending by neighbor id.
    pub fn neighbors(&self, v: EntityId) -> Vec<(EntityId, u64)> {
        let mut out: Vec<(EntityId, u64)> = self
            .edges
            .iter()
            .filter_map(|(&(a, b), &w)| {
                if a == v {
                    Some((b, w))
                } else if b == v {
                    Some((a, w))
                } else {
                    None
                }
            })
            .collect();
        out.sort();
        out
    }

    /// Text export: `a b w` per edge, sorted by `(a, b)`.
    pub fn to_edge_list(&self) -> String {
        let mut out = String::new();
        for (a, b, w) in self.edges() {
            let _ = writeln!(out, "{} {} {}", a.id, b.id, w);
        }
        out
    }

    pub fn read_edge_list(namespace: Namespace, reader: impl Read) -> Result<Self> {
        let mut g = WeightedGraph::new(namespace);
        for (idx, line) in BufReader::new(reader).lines().enumerate() {
            let line_no = idx + 1;
            let line = line.map_err(|e| Error::io("<graph>", e))?;
            let line = line.trim();
            if line.is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let mut next = |field: &str| -> Result<u64> {
                parts
                    .next()
                    .ok_or_else(|| Error::malformed(line_no, field, "missing"))?
                    .parse::<u64>()
                    .map_err(|e| Error::malformed(line_no, field, e.to_string()))
            };
            let a = next("a")?;
            let b = next("b")?;
            let w = next("w")?;
            if parts.next().is_some() {
                return Err(Error::malformed(line_no, "w", "trailing tokens"));
            }
            g.add_edge(EntityId::new(namespace, a), EntityId::new(namespace, b), w)
                .map_err(|e| Error::malformed(line_no, "edge", e.to_string()))?;
        }
        Ok(g)
    }
}

/// Co-occurrence graph of `namespace` entities over all profiles.
pub fn build_graph(profiles: &ProfileStore, namespace: Namespace) -> WeightedGraph {
    build_graph_with_threshold(profiles, namespace, 1)
}

/// As [`build_graph`], dropping edges shared by fewer than `min_count` members.
pub fn build_graph_with_threshold(profiles: &ProfileStore, namespace: Namespace, min_count: u64) -> WeightedGraph {
    let mut counts: BTreeMap<(EntityId, EntityId), u64> = BTreeMap::new();
    let mut g = WeightedGraph::new(namespace);
    for p in profiles.iter() {
        let bag: Vec<EntityId> = p.entities(namespace).iter().copied().collect();
        for (i, &a) in bag.iter().enumerate() {
            g.add_vertex(a).expect("profile sets are namespace-homogeneous");
            for &b in &bag[i + 1..] {
                *counts.entry((a, b)).or_insert(0) += 1;
            }
        }
    }
    for ((a, b), w) in counts {
        if w >= min_count.max(1) {
            g.add_edge(a, b, w).expect("distinct endpoints, positive weight");
        }
    }
    g
}

/// `p̂1(i, j) = w_ij / W` over stored edges.
pub fn empirical_first_order(graph: &WeightedGraph) -> Result<BTreeMap<(EntityId, EntityId), f64>> {
    if graph.edge_count() == 0 {
        return Err(Error::EmptyGraph);
    }
    let total = graph.total_weight() as f64;
    Ok(graph
        .edges()
        .map(|(a, b, w)| ((a, b), w as f64 / total))
        .collect())
}

/// `p̂2(j | v) = w_vj / W_v` over the neighbors of `v`.
pub fn empirical_second_order(graph: &WeightedGraph, v: EntityId) -> Result<BTreeMap<EntityId, f64>> {
    let degree = graph.weighted_degree(v).ok_or(Error::UnknownVertex(v))?;
    if degree == 0 {
        return Err(Error::IsolatedVertices(vec![v]));
    }
    Ok(graph
        .neighbors(v)
        .into_iter()
        .map(|(j, w)| (j, w as f64 / degree as f64))
        .collect())
}

/// Vertex importance `λ_v`, taken as the weighted degree.
pub fn vertex_importance(graph: &WeightedGraph, v: EntityId) -> Result<f64> {
    graph
        .weighted_degree(v)
        .map(|d| d as f64)
        .ok_or(Error::UnknownVertex(v))
}
