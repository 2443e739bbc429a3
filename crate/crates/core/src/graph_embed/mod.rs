//! First- and second-order proximity embeddings of entity graphs.
//!
//! First order: `p1(i, j) = σ(u_i·u_j) / Z` over the stored edges, fitted by
//! minimizing `KL(p̂1 ‖ p1)`. Second order: `p2(j | i) = softmax_j(u'_j·u_i)`
//! over all vertices, fitted by minimizing `Σ_i λ_i KL(p̂2(·|i) ‖ p2(·|i))`
//! with `λ_i` the weighted degree.
//!
//! Two optimizers are provided. `exact` runs full-batch gradient descent on the
//! normalized objectives with step halving whenever the objective would
//! increase; it is the reference path. `sampled` runs LINE-style SGD on the
//! negative-sampling surrogate, with noise drawn ∝ `W_i^0.75`.

mod pooling;
mod table;

use std::collections::BTreeMap;
use std::fmt;
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::Rng as _;

pub use pooling::{cosine, dot, pool, similarity, PoolMode, Pooled, Similarity};
pub use table::{concat_embeddings, fmt_float, EmbeddingKind, EmbeddingTable};

use crate::corpus::EntityId;
use crate::entity_graph::WeightedGraph;
use crate::error::{Error, Result};
use crate::seed::{rng, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbedMode {
    Exact,
    Sampled,
}

impl fmt::Display for EmbedMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            EmbedMode::Exact => "exact",
            EmbedMode::Sampled => "sampled",
        })
    }
}

impl FromStr for EmbedMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "exact" => Ok(EmbedMode::Exact),
            "sampled" => Ok(EmbedMode::Sampled),
            other => Err(Error::Config(format!("unknown embedding mode `{other}`"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EmbedConfig {
    pub dim: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    pub mode: EmbedMode,
    pub negatives_per_edge: usize,
    pub seed: u64,
    /// Half-width of the uniform initialization; `None` means `0.5 / dim`.
    pub init_scale: Option<f64>,
    /// Exact mode: halve the step and retry whenever the objective would increase.
    pub line_search: bool,
    /// Exact mode: step multiplier applied after every accepted step.
    pub step_growth: f64,
}

impl Default for EmbedConfig {
    fn default() -> Self {
        EmbedConfig {
            dim: 50,
            learning_rate: 1.0,
            epochs: 300,
            mode: EmbedMode::Exact,
            negatives_per_edge: 5,
            seed: 1,
            init_scale: None,
            line_search: true,
            step_growth: 1.2,
        }
    }
}

impl EmbedConfig {
    /// Defaults for the negative-sampling optimizer.
    pub fn sampled() -> Self {
        EmbedConfig {
            learning_rate: 0.025,
            epochs: 200,
            mode: EmbedMode::Sampled,
            ..EmbedConfig::default()
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.dim == 0 {
            return Err(Error::Config("embedding dim must be at least 1".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if !(self.step_growth >= 1.0 && self.step_growth.is_finite()) {
            return Err(Error::Config("step growth must be at least 1".into()));
        }
        if self.mode == EmbedMode::Sampled && self.negatives_per_edge == 0 {
            return Err(Error::Config("sampled mode needs at least one negative per edge".into()));
        }
        if let Some(s) = self.init_scale {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Config("init scale must be non-negative".into()));
            }
        }
        Ok(())
    }

    fn init_half_width(&self) -> f64 {
        self.init_scale.unwrap_or(0.5 / self.dim as f64)
    }
}

/// Dense, index-addressed form of a graph used by the optimizers.
#[derive(Debug, Clone)]
pub struct IndexedGraph {
    pub ids: Vec<EntityId>,
    index: BTreeMap<EntityId, usize>,
    /// `(i, j, w)` with `i < j`.
    pub edges: Vec<(usize, usize, f64)>,
    /// Directed adjacency: both orientations of each undirected edge.
    pub adjacency: Vec<Vec<(usize, f64)>>,
    pub degree: Vec<f64>,
    pub total_weight: f64,
}

impl IndexedGraph {
    pub fn new(graph: &WeightedGraph) -> Self {
        let ids: Vec<EntityId> = graph.vertices().collect();
        let index: BTreeMap<EntityId, usize> = ids.iter().enumerate().map(|(i, v)| (*v, i)).collect();
        let mut adjacency = vec![Vec::new(); ids.len()];
        let mut degree = vec![0.0; ids.len()];
        let edges: Vec<(usize, usize, f64)> = graph
            .edges()
            .map(|(a, b, w)| {
                let (i, j, w) = (index[&a], index[&b], w as f64);
                adjacency[i].push((j, w));
                adjacency[j].push((i, w));
                degree[i] += w;
                degree[j] += w;
                (i, j, w)
            })
            .collect();
        for adj in &mut adjacency {
            adj.sort_by_key(|(j, _)| *j);
        }
        IndexedGraph {
            ids,
            index,
            edges,
            adjacency,
            degree,
            total_weight: graph.total_weight() as f64,
        }
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn index_of(&self, v: EntityId) -> Option<usize> {
        self.index.get(&v).copied()
    }

    fn isolated(&self) -> Vec<EntityId> {
        self.degree
            .iter()
            .zip(&self.ids)
            .filter(|(d, _)| **d == 0.0)
            .map(|(_, v)| *v)
            .collect()
    }

    /// Flattens a table into row-major parameters in vertex order.
    pub fn flatten(&self, table: &EmbeddingTable) -> Result<Vec<f64>> {
        let mut out = Vec::with_capacity(self.len() * table.dim());
        for v in &self.ids {
            out.extend_from_slice(table.require(*v)?);
        }
        Ok(out)
    }

    pub fn unflatten(&self, params: &[f64], dim: usize, kind: EmbeddingKind) -> EmbeddingTable {
        let namespace = self.ids.first().map(|v| v.namespace).unwrap_or(crate::corpus::Namespace::Skill);
        let mut table = EmbeddingTable::new(namespace, dim, kind);
        for (i, v) in self.ids.iter().enumerate() {
            table
                .insert(*v, params[i * dim..(i + 1) * dim].to_vec())
                .expect("row has table dim");
        }
        table
    }
}

/// A differentiable objective over a flat parameter vector.
pub trait Objective {
    fn value(&self, params: &[f64]) -> f64;
    fn value_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>);
}

pub(crate) fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

pub(crate) fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if m == f64::NEG_INFINITY {
        return m;
    }
    m + xs.iter().map(|x| (x - m).exp()).sum::<f64>().ln()
}

/// `O1 = KL(p̂1 ‖ p1)` with parameters laid out as `n × dim`.
pub struct FirstOrderProblem<'g> {
    graph: &'g IndexedGraph,
    dim: usize,
}

impl<'g> FirstOrderProblem<'g> {
    pub fn new(graph: &'g IndexedGraph, dim: usize) -> Result<Self> {
        if graph.edges.is_empty() {
            return Err(Error::EmptyGraph);
        }
        Ok(FirstOrderProblem { graph, dim })
    }

    fn log_sigmoids(&self, params: &[f64]) -> (Vec<f64>, Vec<f64>) {
        let d = self.dim;
        let scores: Vec<f64> = self
            .graph
            .edges
            .iter()
            .map(|&(i, j, _)| dot(&params[i * d..(i + 1) * d], &params[j * d..(j + 1) * d]))
            .collect();
        let log_sig = scores.iter().map(|s| -softplus(-s)).collect();
        (scores, log_sig)
    }

    fn value_from(&self, log_sig: &[f64]) -> f64 {
        let total = self.graph.total_weight;
        let log_z = log_sum_exp(log_sig);
        let kl: f64 = self
            .graph
            .edges
            .iter()
            .zip(log_sig)
            .map(|(&(_, _, w), ls)| {
                let p_hat = w / total;
                p_hat * (p_hat.ln() - (ls - log_z))
            })
            .sum();
        kl.max(0.0)
    }
}

impl Objective for FirstOrderProblem<'_> {
    fn value(&self, params: &[f64]) -> f64 {
        let (_, log_sig) = self.log_sigmoids(params);
        self.value_from(&log_sig)
    }

    fn value_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let d = self.dim;
        let (scores, log_sig) = self.log_sigmoids(params);
        let value = self.value_from(&log_sig);
        let log_z = log_sum_exp(&log_sig);
        let total = self.graph.total_weight;
        let mut grad = vec![0.0; params.len()];
        for ((&(i, j, w), s), ls) in self.graph.edges.iter().zip(&scores).zip(&log_sig) {
            // dO1/ds = (1 - σ(s)) (p1 - p̂1)
            let g = (1.0 - sigmoid(*s)) * ((ls - log_z).exp() - w / total);
            for k in 0..d {
                grad[i * d + k] += g * params[j * d + k];
                grad[j * d + k] += g * params[i * d + k];
            }
        }
        (value, grad)
    }
}

/// `O2 = Σ_i λ_i KL(p̂2(·|i) ‖ p2(·|i))` with parameters `[vertex rows; context rows]`.
pub struct SecondOrderProblem<'g> {
    graph: &'g IndexedGraph,
    dim: usize,
    importance: Vec<f64>,
}

impl<'g> SecondOrderProblem<'g> {
    pub fn new(graph: &'g IndexedGraph, dim: usize) -> Result<Self> {
        let importance = graph.degree.clone();
        Self::with_importance(graph, dim, importance)
    }

    /// Uses explicit per-vertex importances instead of weighted degrees.
    pub fn with_importance(graph: &'g IndexedGraph, dim: usize, importance: Vec<f64>) -> Result<Self> {
        if graph.edges.is_empty() {
            return Err(Error::EmptyGraph);
        }
        let isolated = graph.isolated();
        if !isolated.is_empty() {
            return Err(Error::IsolatedVertices(isolated));
        }
        if importance.len() != graph.len() {
            return Err(Error::Shape("one importance per vertex required".into()));
        }
        Ok(SecondOrderProblem {
            graph,
            dim,
            importance,
        })
    }

    pub fn total_importance(&self) -> f64 {
        self.importance.iter().sum()
    }

    fn logits(&self, params: &[f64], i: usize, out: &mut [f64]) {
        let d = self.dim;
        let n = self.graph.len();
        let u = &params[i * d..(i + 1) * d];
        for (k, o) in out.iter_mut().enumerate() {
            let c = &params[(n + k) * d..(n + k + 1) * d];
            *o = dot(u, c);
        }
    }

    fn eval(&self, params: &[f64], mut grad: Option<&mut [f64]>) -> f64 {
        let d = self.dim;
        let n = self.graph.len();
        let mut logits = vec![0.0; n];
        let mut value = 0.0;
        for i in 0..n {
            self.logits(params, i, &mut logits);
            let lse = log_sum_exp(&logits);
            let lambda = self.importance[i];
            let degree = self.graph.degree[i];
            let mut kl = 0.0;
            for &(j, w) in &self.graph.adjacency[i] {
                let p_hat = w / degree;
                kl += p_hat * (p_hat.ln() - (logits[j] - lse));
            }
            value += lambda * kl.max(0.0);
            if let Some(grad) = grad.as_deref_mut() {
                // dO2/ds_ik = λ_i (p2(k|i) - p̂2(k|i))
                let mut g: Vec<f64> = logits.iter().map(|s| lambda * (s - lse).exp()).collect();
                for &(j, w) in &self.graph.adjacency[i] {
                    g[j] -= lambda * w / degree;
                }
                for (k, gk) in g.iter().enumerate() {
                    for t in 0..d {
                        grad[i * d + t] += gk * params[(n + k) * d + t];
                        grad[(n + k) * d + t] += gk * params[i * d + t];
                    }
                }
            }
        }
        value
    }
}

impl Objective for SecondOrderProblem<'_> {
    fn value(&self, params: &[f64]) -> f64 {
        self.eval(params, None)
    }

    fn value_and_gradient(&self, params: &[f64]) -> (f64, Vec<f64>) {
        let mut grad = vec![0.0; params.len()];
        let value = self.eval(params, Some(&mut grad));
        (value, grad)
    }
}

pub fn first_order_objective(graph: &WeightedGraph, table: &EmbeddingTable) -> Result<f64> {
    let indexed = IndexedGraph::new(graph);
    let problem = FirstOrderProblem::new(&indexed, table.dim())?;
    Ok(problem.value(&indexed.flatten(table)?))
}

pub fn second_order_objective(
    graph: &WeightedGraph,
    vertex_table: &EmbeddingTable,
    context_table: &EmbeddingTable,
) -> Result<f64> {
    let indexed = IndexedGraph::new(graph);
    second_order_objective_indexed(&indexed, vertex_table, context_table, None)
}

/// As [`second_order_objective`] with explicit importances per vertex.
pub fn second_order_objective_with_importance(
    graph: &WeightedGraph,
    vertex_table: &EmbeddingTable,
    context_table: &EmbeddingTable,
    importance: impl Fn(EntityId) -> f64,
) -> Result<f64> {
    let indexed = IndexedGraph::new(graph);
    let lambda = indexed.ids.iter().map(|v| importance(*v)).collect();
    second_order_objective_indexed(&indexed, vertex_table, context_table, Some(lambda))
}

fn second_order_objective_indexed(
    indexed: &IndexedGraph,
    vertex_table: &EmbeddingTable,
    context_table: &EmbeddingTable,
    importance: Option<Vec<f64>>,
) -> Result<f64> {
    if vertex_table.dim() != context_table.dim() {
        return Err(Error::Shape("vertex and context tables differ in dim".into()));
    }
    let problem = match importance {
        Some(lambda) => SecondOrderProblem::with_importance(indexed, vertex_table.dim(), lambda)?,
        None => SecondOrderProblem::new(indexed, vertex_table.dim())?,
    };
    let mut params = indexed.flatten(vertex_table)?;
    params.extend(indexed.flatten(context_table)?);
    Ok(problem.value(&params))
}

/// Predicted context distribution `p2(·|v)` over every vertex of the graph.
pub fn second_order_distribution(
    graph: &WeightedGraph,
    vertex_table: &EmbeddingTable,
    context_table: &EmbeddingTable,
    v: EntityId,
) -> Result<BTreeMap<EntityId, f64>> {
    let u = vertex_table.require(v)?;
    let logits = graph
        .vertices()
        .map(|k| Ok((k, dot(u, context_table.require(k)?))))
        .collect::<Result<Vec<_>>>()?;
    let values: Vec<f64> = logits.iter().map(|(_, s)| *s).collect();
    let lse = log_sum_exp(&values);
    Ok(logits.into_iter().map(|(k, s)| (k, (s - lse).exp())).collect())
}

/// Objective values after initialization and after every accepted step.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct TrainTrace {
    pub objective: Vec<f64>,
    pub rejected_steps: usize,
}

fn init_params(n: usize, config: &EmbedConfig, rng: &mut Rng) -> Vec<f64> {
    let a = config.init_half_width();
    (0..n * config.dim)
        .map(|_| if a > 0.0 { rng.gen_range(-a..=a) } else { 0.0 })
        .collect()
}

/// Full-batch descent. `step_scale` rescales the gradient so the learning rate
/// acts on a unit-mass objective.
fn descend(problem: &dyn Objective, params: &mut Vec<f64>, config: &EmbedConfig, step_scale: f64) -> TrainTrace {
    let mut lr = config.learning_rate;
    let (mut value, mut grad) = problem.value_and_gradient(params);
    let mut trace = TrainTrace {
        objective: vec![value],
        rejected_steps: 0,
    };
    let mut candidate = vec![0.0; params.len()];
    'epochs: for _ in 0..config.epochs {
        loop {
            for ((c, p), g) in candidate.iter_mut().zip(params.iter()).zip(&grad) {
                *c = p - lr * step_scale * g;
            }
            let next = problem.value(&candidate);
            if !config.line_search || (next.is_finite() && next <= value) {
                std::mem::swap(params, &mut candidate);
                lr *= config.step_growth;
                break;
            }
            trace.rejected_steps += 1;
            lr *= 0.5;
            if lr < 1e-14 {
                break 'epochs;
            }
        }
        (value, grad) = problem.value_and_gradient(params);
        trace.objective.push(value);
    }
    trace
}

pub fn train_first_order(graph: &WeightedGraph, config: &EmbedConfig) -> Result<EmbeddingTable> {
    Ok(train_first_order_traced(graph, config)?.0)
}

pub fn train_first_order_traced(graph: &WeightedGraph, config: &EmbedConfig) -> Result<(EmbeddingTable, TrainTrace)> {
    config.validate()?;
    let indexed = IndexedGraph::new(graph);
    let problem = FirstOrderProblem::new(&indexed, config.dim)?;
    let mut rng = rng(config.seed);
    let mut params = init_params(indexed.len(), config, &mut rng);
    let trace = match config.mode {
        EmbedMode::Exact => descend(&problem, &mut params, config, 1.0),
        EmbedMode::Sampled => {
            sampled_train(&indexed, &mut params, 0, config, &mut rng)?;
            TrainTrace {
                objective: vec![problem.value(&params)],
                rejected_steps: 0,
            }
        }
    };
    Ok((indexed.unflatten(&params, config.dim, EmbeddingKind::FirstOrder), trace))
}

pub fn train_second_order(graph: &WeightedGraph, config: &EmbedConfig) -> Result<(EmbeddingTable, EmbeddingTable)> {
    let (v, c, _) = train_second_order_traced(graph, config)?;
    Ok((v, c))
}

pub fn train_second_order_traced(
    graph: &WeightedGraph,
    config: &EmbedConfig,
) -> Result<(EmbeddingTable, EmbeddingTable, TrainTrace)> {
    config.validate()?;
    let indexed = IndexedGraph::new(graph);
    let problem = SecondOrderProblem::new(&indexed, config.dim)?;
    let mut rng = rng(config.seed);
    let n = indexed.len();
    let mut params = init_params(2 * n, config, &mut rng);
    let trace = match config.mode {
        EmbedMode::Exact => {
            let scale = 1.0 / problem.total_importance();
            descend(&problem, &mut params, config, scale)
        }
        EmbedMode::Sampled => {
            sampled_train(&indexed, &mut params, n, config, &mut rng)?;
            TrainTrace {
                objective: vec![problem.value(&params)],
                rejected_steps: 0,
            }
        }
    };
    let d = config.dim;
    let vertex = indexed.unflatten(&params[..n * d], d, EmbeddingKind::SecondOrderVertex);
    let context = indexed.unflatten(&params[n * d..], d, EmbeddingKind::SecondOrderContext);
    Ok((vertex, context, trace))
}

struct Samplers {
    edges: WeightedIndex<f64>,
    noise: WeightedIndex<f64>,
}

impl Samplers {
    fn new(graph: &IndexedGraph) -> Result<Self> {
        let edges = WeightedIndex::new(graph.edges.iter().map(|e| e.2)).map_err(|_| Error::EmptyGraph)?;
        let noise = WeightedIndex::new(graph.degree.iter().map(|d| d.powf(0.75))).map_err(|_| Error::EmptyGraph)?;
        Ok(Samplers { edges, noise })
    }
}

/// One negative-sampling SGD update. Rows live in a single buffer; target
/// rows are offset by `target_base` (0 when vertices are their own contexts).
#[allow(clippy::too_many_arguments)]
fn ns_update(
    params: &mut [f64],
    target_base: usize,
    src: usize,
    dst: usize,
    negatives: &[usize],
    dim: usize,
    lr: f64,
    source: &mut [f64],
    err: &mut [f64],
) {
    source.copy_from_slice(&params[src * dim..(src + 1) * dim]);
    err.iter_mut().for_each(|e| *e = 0.0);
    for (target, label) in std::iter::once((dst, 1.0)).chain(negatives.iter().map(|&k| (k, 0.0))) {
        let row = (target_base + target) * dim;
        let t = &mut params[row..row + dim];
        let g = label - sigmoid(dot(source, t));
        for k in 0..dim {
            err[k] += g * t[k];
            t[k] += lr * g * source[k];
        }
    }
    let s = &mut params[src * dim..(src + 1) * dim];
    for k in 0..dim {
        s[k] += lr * err[k];
    }
}

fn sampled_train(graph: &IndexedGraph, params: &mut [f64], target_base: usize, config: &EmbedConfig, rng: &mut Rng) -> Result<()> {
    let samplers = Samplers::new(graph)?;
    let total = config.epochs * graph.edges.len();
    let mut source = vec![0.0; config.dim];
    let mut err = vec![0.0; config.dim];
    let mut negatives = vec![0; config.negatives_per_edge];
    for t in 0..total {
        let lr = config.learning_rate * (1.0 - t as f64 / total as f64).max(1e-4);
        let (a, b, _) = graph.edges[samplers.edges.sample(rng)];
        let (src, dst) = if rng.gen_bool(0.5) { (a, b) } else { (b, a) };
        negatives.iter_mut().for_each(|n| *n = samplers.noise.sample(rng));
        ns_update(params, target_base, src, dst, &negatives, config.dim, lr, &mut source, &mut err);
    }
    Ok(())
}

/// First-order, second-order and concatenated tables trained on one graph.
#[derive(Debug, Clone, PartialEq)]
pub struct GraphEmbeddings {
    pub first: EmbeddingTable,
    pub second_vertex: EmbeddingTable,
    pub second_context: EmbeddingTable,
    pub concat: EmbeddingTable,
}

/// Trains both orders on `graph` (isolated vertices dropped) and concatenates them.
pub fn train_graph_embeddings(graph: &WeightedGraph, config: &EmbedConfig) -> Result<GraphEmbeddings> {
    let graph = graph.without_isolated();
    let first = train_first_order(&graph, config)?;
    let (second_vertex, second_context) = train_second_order(&graph, config)?;
    let concat = concat_embeddings(&first, &second_vertex)?;
    Ok(GraphEmbeddings {
        first,
        second_vertex,
        second_context,
        concat,
    })
}
