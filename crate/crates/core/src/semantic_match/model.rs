use std::collections::{BTreeMap, BTreeSet};
use std::fmt::Write as _;

use rand::seq::index::sample;
use rand::seq::SliceRandom;

use super::{EntityVocabulary, InputLayout, SparseInput, TrigramVocabulary};
use crate::corpus::{EntityId, Namespace, ProfileStore, SessionStore};
use crate::graph_embed::{dot, EmbeddingKind, EmbeddingTable, Similarity};
use crate::neural::{parse_kv, read_row, write_row, Activation, Dense, DenseGrad};
use crate::seed::{rng, stage_seed, Rng};
use crate::{Error, Result};

/// Stack of tanh layers whose first layer reads a sparse input.
#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    layers: Vec<Dense>,
}

#[derive(Debug, Clone, Default)]
struct ArmCache {
    pre: Vec<Vec<f64>>,
    post: Vec<Vec<f64>>,
}

impl ArmCache {
    fn output(&self) -> &[f64] {
        self.post.last().map(Vec::as_slice).unwrap_or(&[])
    }
}

#[derive(Debug, Default)]
struct ArmScratch {
    d_post: Vec<f64>,
    d_input: Vec<f64>,
    d_pre: Vec<f64>,
}

fn widths(input: usize, hidden: &[usize], output: usize) -> Vec<(usize, usize)> {
    let mut dims = vec![input];
    dims.extend_from_slice(hidden);
    dims.push(output);
    dims.windows(2).map(|w| (w[0], w[1])).collect()
}

impl Arm {
    pub fn zeros(input: usize, hidden: &[usize], output: usize) -> Self {
        Arm {
            layers: widths(input, hidden, output)
                .into_iter()
                .map(|(i, o)| Dense::zeros(i, o, Activation::Tanh))
                .collect(),
        }
    }

    pub fn glorot(input: usize, hidden: &[usize], output: usize, rng: &mut Rng) -> Self {
        Arm {
            layers: widths(input, hidden, output)
                .into_iter()
                .map(|(i, o)| Dense::glorot(i, o, Activation::Tanh, rng))
                .collect(),
        }
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn input_width(&self) -> usize {
        self.layers[0].inputs
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.outputs).unwrap_or(0)
    }

    fn check(&self, x: &SparseInput) -> Result<()> {
        match x.entries.last() {
            Some(&(i, _)) if i >= self.input_width() => Err(Error::Shape(format!(
                "input index {i} outside an arm of width {}",
                self.input_width()
            ))),
            _ => Ok(()),
        }
    }

    fn forward_into(&self, x: &SparseInput, cache: &mut ArmCache) -> Result<()> {
        self.check(x)?;
        let n = self.layers.len();
        cache.pre.resize(n, Vec::new());
        cache.post.resize(n, Vec::new());
        let first = &self.layers[0];
        let (pre, post) = (&mut cache.pre[0], &mut cache.post[0]);
        pre.clear();
        pre.extend_from_slice(&first.bias);
        for &(i, v) in &x.entries {
            for (o, p) in pre.iter_mut().enumerate() {
                *p += v * first.weights[o * first.inputs + i];
            }
        }
        post.clear();
        post.extend(pre.iter().map(|z| z.tanh()));
        for k in 1..n {
            let layer = &self.layers[k];
            let (done, rest) = cache.post.split_at_mut(k);
            cache.pre[k].resize(layer.outputs, 0.0);
            rest[0].resize(layer.outputs, 0.0);
            layer.forward(&done[k - 1], &mut cache.pre[k], &mut rest[0]);
        }
        Ok(())
    }

    /// Output vector for one input.
    pub fn forward(&self, x: &SparseInput) -> Result<Vec<f64>> {
        let mut cache = ArmCache::default();
        self.forward_into(x, &mut cache)?;
        Ok(cache.output().to_vec())
    }

    fn backward(&self, x: &SparseInput, cache: &ArmCache, d_out: &[f64], grads: &mut [DenseGrad], s: &mut ArmScratch) {
        s.d_post.clear();
        s.d_post.extend_from_slice(d_out);
        for k in (1..self.layers.len()).rev() {
            let layer = &self.layers[k];
            s.d_pre.resize(layer.outputs, 0.0);
            s.d_input.resize(layer.inputs, 0.0);
            layer.backward(
                &cache.post[k - 1],
                &cache.pre[k],
                &cache.post[k],
                &s.d_post,
                &mut grads[k],
                Some(&mut s.d_input),
                &mut s.d_pre,
            );
            std::mem::swap(&mut s.d_post, &mut s.d_input);
        }
        let first = &self.layers[0];
        let g = &mut grads[0];
        for o in 0..first.outputs {
            let out = cache.post[0][o];
            let d = s.d_post[o] * (1.0 - out * out);
            if d == 0.0 {
                continue;
            }
            g.bias[o] += d;
            for &(i, v) in &x.entries {
                g.weights[o * first.inputs + i] += d * v;
            }
        }
    }

    fn zero_gradients(&self) -> Vec<DenseGrad> {
        self.layers.iter().map(DenseGrad::zeros_like).collect()
    }

    fn write_text(&self, name: &str, out: &mut String) {
        let _ = writeln!(out, "arm {name} {}", self.layers.len());
        for l in &self.layers {
            let _ = writeln!(out, "layer {} {}", l.inputs, l.outputs);
            for o in 0..l.outputs {
                write_row(out, &l.weights[o * l.inputs..(o + 1) * l.inputs]);
            }
            write_row(out, &l.bias);
        }
    }

    fn read_text<'a>(name: &str, lines: &mut impl Iterator<Item = &'a str>) -> Result<Self> {
        let mut next = || lines.next().ok_or_else(|| Error::Format("unexpected end of dssm model".into()));
        let count: usize = parse_kv(next()?, &format!("arm {name}"))?;
        let mut layers = Vec::with_capacity(count);
        for _ in 0..count {
            let line = next()?;
            let parts: Vec<&str> = line.split_whitespace().collect();
            let (inputs, outputs) = match parts.as_slice() {
                ["layer", i, o] => (
                    i.parse::<usize>().map_err(|e| Error::Format(format!("layer inputs: {e}")))?,
                    o.parse::<usize>().map_err(|e| Error::Format(format!("layer outputs: {e}")))?,
                ),
                _ => return Err(Error::Format(format!("expected `layer <in> <out>`, found `{line}`"))),
            };
            if let Some(prev) = layers.last().map(|l: &Dense| l.outputs) {
                if prev != inputs {
                    return Err(Error::Format("consecutive arm layers disagree in width".into()));
                }
            }
            let mut weights = Vec::with_capacity(inputs * outputs);
            for _ in 0..outputs {
                weights.extend(read_row(next()?, inputs)?);
            }
            let bias = read_row(next()?, outputs)?;
            layers.push(Dense {
                inputs,
                outputs,
                weights,
                bias,
                activation: Activation::Tanh,
            });
        }
        if layers.is_empty() {
            return Err(Error::Format("arm without layers".into()));
        }
        Ok(Arm { layers })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DssmModel {
    pub layout: InputLayout,
    pub query: Arm,
    pub document: Arm,
    pub similarity: Similarity,
    /// Softmax smoothing factor applied to similarities during training.
    pub gamma: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DssmGradients {
    pub query: Vec<DenseGrad>,
    pub document: Vec<DenseGrad>,
}

impl DssmGradients {
    fn all_mut(&mut self) -> impl Iterator<Item = &mut DenseGrad> {
        self.query.iter_mut().chain(self.document.iter_mut())
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for g in self.query.iter().chain(&self.document) {
            out.extend_from_slice(&g.weights);
            out.extend_from_slice(&g.bias);
        }
        out
    }

    fn clear(&mut self) {
        for g in self.all_mut() {
            g.weights.iter_mut().for_each(|v| *v = 0.0);
            g.bias.iter_mut().for_each(|v| *v = 0.0);
        }
    }
}

/// Similarity and its gradients with respect to both vectors. Cosine against a
/// zero vector is 0 with zero gradient.
fn similarity_grad(q: &[f64], d: &[f64], measure: Similarity) -> (f64, Vec<f64>, Vec<f64>) {
    match measure {
        Similarity::Cosine => {
            let (nq, nd) = (dot(q, q).sqrt(), dot(d, d).sqrt());
            if nq == 0.0 || nd == 0.0 {
                return (0.0, vec![0.0; q.len()], vec![0.0; d.len()]);
            }
            let s = dot(q, d) / (nq * nd);
            let gq = q.iter().zip(d).map(|(a, b)| b / (nq * nd) - s * a / (nq * nq)).collect();
            let gd = q.iter().zip(d).map(|(a, b)| a / (nq * nd) - s * b / (nd * nd)).collect();
            (s, gq, gd)
        }
        _ => (dot(q, d), d.to_vec(), q.to_vec()),
    }
}

fn similarity_value(q: &[f64], d: &[f64], measure: Similarity) -> f64 {
    match measure {
        Similarity::Cosine => crate::graph_embed::cosine(q, d),
        _ => dot(q, d),
    }
}

#[derive(Default)]
struct Workspace {
    q_cache: ArmCache,
    d_caches: Vec<ArmCache>,
    scratch: ArmScratch,
}

impl DssmModel {
    pub fn new(layout: InputLayout, config: &DssmConfig) -> Result<Self> {
        config.validate()?;
        let width = layout.width();
        Ok(DssmModel {
            query: Arm::glorot(width, &config.hidden, config.output_dim, &mut rng(stage_seed(config.seed, "dssm-query"))),
            document: Arm::glorot(width, &config.hidden, config.output_dim, &mut rng(stage_seed(config.seed, "dssm-document"))),
            layout,
            similarity: config.similarity,
            gamma: config.gamma,
        })
    }

    pub fn zeros(layout: InputLayout, config: &DssmConfig) -> Result<Self> {
        config.validate()?;
        let width = layout.width();
        Ok(DssmModel {
            query: Arm::zeros(width, &config.hidden, config.output_dim),
            document: Arm::zeros(width, &config.hidden, config.output_dim),
            layout,
            similarity: config.similarity,
            gamma: config.gamma,
        })
    }

    pub fn output_dim(&self) -> usize {
        self.query.output_dim()
    }

    /// `(q_vec, d_vec, sim)`.
    pub fn forward(&self, query: &SparseInput, document: &SparseInput) -> Result<(Vec<f64>, Vec<f64>, f64)> {
        let q = self.query.forward(query)?;
        let d = self.document.forward(document)?;
        let s = similarity_value(&q, &d, self.similarity);
        Ok((q, d, s))
    }

    pub fn zero_gradients(&self) -> DssmGradients {
        DssmGradients {
            query: self.query.zero_gradients(),
            document: self.document.zero_gradients(),
        }
    }

    fn layers_mut(&mut self) -> impl Iterator<Item = &mut Dense> {
        self.query.layers.iter_mut().chain(self.document.layers.iter_mut())
    }

    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in self.query.layers.iter().chain(&self.document.layers) {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out
    }

    pub fn assign(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.flatten().len() {
            return Err(Error::Shape("parameter vector length does not match the model".into()));
        }
        let mut at = 0;
        for l in self.layers_mut() {
            let (w, b) = (l.weights.len(), l.bias.len());
            l.weights.copy_from_slice(&params[at..at + w]);
            at += w;
            l.bias.copy_from_slice(&params[at..at + b]);
            at += b;
        }
        Ok(())
    }

    /// Loss of one positive `docs[0]` against negatives `docs[1..]`, with its
    /// gradient accumulated into `grads`.
    fn example(&self, query: &SparseInput, docs: &[&SparseInput], grads: &mut DssmGradients, ws: &mut Workspace) -> Result<f64> {
        self.query.forward_into(query, &mut ws.q_cache)?;
        ws.d_caches.resize_with(docs.len(), ArmCache::default);
        let mut sims = Vec::with_capacity(docs.len());
        let mut parts = Vec::with_capacity(docs.len());
        for (doc, cache) in docs.iter().zip(ws.d_caches.iter_mut()) {
            self.document.forward_into(doc, cache)?;
            let (s, gq, gd) = similarity_grad(ws.q_cache.output(), cache.output(), self.similarity);
            sims.push(s);
            parts.push((gq, gd));
        }
        let logits: Vec<f64> = sims.iter().map(|s| self.gamma * s).collect();
        let max = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let z: f64 = logits.iter().map(|l| (l - max).exp()).sum();
        let loss = max + z.ln() - logits[0];
        let mut d_q = vec![0.0; self.output_dim()];
        for (j, ((gq, gd), doc)) in parts.iter().zip(docs).enumerate() {
            let softmax = (logits[j] - max).exp() / z;
            let d_sim = self.gamma * (softmax - if j == 0 { 1.0 } else { 0.0 });
            if d_sim == 0.0 {
                continue;
            }
            d_q.iter_mut().zip(gq).for_each(|(a, g)| *a += d_sim * g);
            let d_d: Vec<f64> = gd.iter().map(|g| d_sim * g).collect();
            self.document.backward(doc, &ws.d_caches[j], &d_d, &mut grads.document, &mut ws.scratch);
        }
        self.query.backward(query, &ws.q_cache, &d_q, &mut grads.query, &mut ws.scratch);
        Ok(loss)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("dssm v1\n");
        let _ = writeln!(out, "similarity {}", self.similarity);
        let _ = writeln!(out, "gamma {}", crate::graph_embed::fmt_float(self.gamma));
        let _ = writeln!(out, "trigrams {}", self.layout.trigrams.len());
        for t in self.layout.trigrams.trigrams() {
            let _ = writeln!(out, "{t}");
        }
        for v in &self.layout.entities {
            let ids: Vec<String> = v.ids().map(|e| e.id.to_string()).collect();
            let _ = writeln!(out, "entities {} {}", v.namespace(), ids.join(" "));
        }
        self.query.write_text("query", &mut out);
        self.document.write_text("document", &mut out);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut next = || lines.next().ok_or_else(|| Error::Format("unexpected end of dssm model".into()));
        if next()?.trim() != "dssm v1" {
            return Err(Error::Format("expected `dssm v1` header".into()));
        }
        let similarity: String = parse_kv(next()?, "similarity")?;
        let similarity = parse_similarity(&similarity).map_err(|e| Error::Format(e.to_string()))?;
        let gamma: f64 = parse_kv(next()?, "gamma")?;
        let n: usize = parse_kv(next()?, "trigrams")?;
        let mut set = BTreeSet::new();
        for _ in 0..n {
            let t = next()?;
            if t.chars().count() != 3 || !set.insert(t.to_string()) {
                return Err(Error::Format(format!("bad trigram `{t}`")));
            }
        }
        let trigrams = TrigramVocabulary::from_sorted(set);
        let mut entities = Vec::new();
        for ns in Namespace::ALL {
            let line = next()?;
            let mut parts = line.split_whitespace();
            if parts.next() != Some("entities") || parts.next() != Some(ns.as_str()) {
                return Err(Error::Format(format!("expected `entities {ns}`")));
            }
            let ids = parts
                .map(|p| p.parse::<u64>().map(|id| EntityId::new(ns, id)))
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::Format(format!("entity id: {e}")))?;
            entities.push(EntityVocabulary::new(ns, ids));
        }
        let layout = InputLayout::new(trigrams, entities)?;
        let query = Arm::read_text("query", &mut lines)?;
        let document = Arm::read_text("document", &mut lines)?;
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(Error::Format("trailing content after the dssm model".into()));
        }
        if query.input_width() != layout.width() || document.input_width() != layout.width() {
            return Err(Error::Format("arm input width does not match the vocabulary layout".into()));
        }
        if query.output_dim() != document.output_dim() {
            return Err(Error::Format("arms disagree in output dimension".into()));
        }
        if !(gamma > 0.0 && gamma.is_finite()) {
            return Err(Error::Format("gamma must be positive".into()));
        }
        Ok(DssmModel {
            layout,
            query,
            document,
            similarity,
            gamma,
        })
    }
}

fn parse_similarity(s: &str) -> Result<Similarity> {
    match s.parse()? {
        Similarity::Hadamard => Err(Error::Config("similarity must be dot or cosine".into())),
        m => Ok(m),
    }
}

/// Softmax loss of `docs[0]` against `docs[1..]` and its full gradient.
pub fn dssm_loss(model: &DssmModel, query: &SparseInput, docs: &[&SparseInput]) -> Result<(f64, DssmGradients)> {
    if docs.len() < 2 {
        return Err(Error::Config("loss needs a positive and at least one negative".into()));
    }
    let mut grads = model.zero_gradients();
    let loss = model.example(query, docs, &mut grads, &mut Workspace::default())?;
    Ok((loss, grads))
}

#[derive(Debug, Clone, PartialEq)]
pub struct DssmConfig {
    pub hidden: Vec<usize>,
    pub output_dim: usize,
    pub similarity: Similarity,
    pub gamma: f64,
    /// Negatives per positive.
    pub negatives: usize,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Positives per minibatch.
    pub batch_size: usize,
    pub seed: u64,
}

impl Default for DssmConfig {
    fn default() -> Self {
        DssmConfig {
            hidden: vec![200, 100],
            output_dim: 50,
            similarity: Similarity::Cosine,
            gamma: 10.0,
            negatives: 4,
            learning_rate: 0.05,
            epochs: 10,
            batch_size: 16,
            seed: 1,
        }
    }
}

impl DssmConfig {
    pub fn validate(&self) -> Result<()> {
        if self.negatives == 0 {
            return Err(Error::Config("dssm needs at least one negative per positive".into()));
        }
        if !(self.gamma > 0.0 && self.gamma.is_finite()) {
            return Err(Error::Config("gamma must be positive".into()));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.output_dim == 0 || self.batch_size == 0 || self.hidden.iter().any(|&h| h == 0) {
            return Err(Error::Config("dssm widths and batch size must be positive".into()));
        }
        if self.similarity == Similarity::Hadamard {
            return Err(Error::Config("similarity must be dot or cosine".into()));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct DssmTrainLog {
    /// Mean example loss per epoch, measured during the epoch.
    pub epoch_loss: Vec<f64>,
    pub examples: usize,
}

struct Example {
    query: usize,
    docs: Vec<u64>,
}

pub fn train_dssm(train: &SessionStore, profiles: &ProfileStore, config: &DssmConfig) -> Result<DssmModel> {
    train_dssm_logged(train, profiles, config).map(|(m, _)| m)
}

pub fn train_dssm_logged(
    train: &SessionStore,
    profiles: &ProfileStore,
    config: &DssmConfig,
) -> Result<(DssmModel, DssmTrainLog)> {
    config.validate()?;
    if train.positive_count() == 0 {
        return Err(Error::Degenerate("dssm training needs at least one positive impression".into()));
    }
    let layout = InputLayout::from_training(train, profiles);
    let mut model = DssmModel::new(layout, config)?;

    let mut member_inputs: BTreeMap<u64, SparseInput> = BTreeMap::new();
    let mut queries = Vec::with_capacity(train.len());
    for s in train.iter() {
        queries.push(model.layout.query_input(&s.query));
        for imp in &s.impressions {
            if !member_inputs.contains_key(&imp.member_id) {
                let m = profiles.get(imp.member_id).ok_or(Error::UnresolvedImpression {
                    session: s.session_id,
                    member: imp.member_id,
                })?;
                member_inputs.insert(imp.member_id, model.layout.member_input(m));
            }
        }
    }
    let pool: Vec<u64> = member_inputs.keys().copied().collect();

    // Negatives are drawn once: in-session first, topped up from the corpus.
    let mut neg_rng = rng(stage_seed(config.seed, "dssm-negatives"));
    let mut examples = Vec::new();
    for (qi, s) in train.iter().enumerate() {
        let in_session: Vec<u64> = s.impressions.iter().filter(|i| i.label == 0).map(|i| i.member_id).collect();
        let shown: BTreeSet<u64> = s.impressions.iter().map(|i| i.member_id).collect();
        let mut positives: Vec<_> = s.impressions.iter().filter(|i| i.label == 1).collect();
        positives.sort_by_key(|i| i.position);
        for p in positives {
            let mut docs = vec![p.member_id];
            if in_session.len() >= config.negatives {
                let picks = sample(&mut neg_rng, in_session.len(), config.negatives);
                docs.extend(picks.iter().map(|i| in_session[i]));
            } else {
                docs.extend_from_slice(&in_session);
                let outside: Vec<u64> = pool.iter().copied().filter(|m| !shown.contains(m)).collect();
                let need = (config.negatives - in_session.len()).min(outside.len());
                let picks = sample(&mut neg_rng, outside.len(), need);
                docs.extend(picks.iter().map(|i| outside[i]));
            }
            if docs.len() > 1 {
                examples.push(Example { query: qi, docs });
            }
        }
    }
    if examples.is_empty() {
        return Err(Error::Degenerate("no positive has a negative to contrast with".into()));
    }

    let mut shuffle_rng = rng(stage_seed(config.seed, "dssm-shuffle"));
    let mut order: Vec<usize> = (0..examples.len()).collect();
    let mut grads = model.zero_gradients();
    let mut ws = Workspace::default();
    let mut log = DssmTrainLog {
        epoch_loss: Vec::with_capacity(config.epochs),
        examples: examples.len(),
    };
    for _ in 0..config.epochs {
        order.shuffle(&mut shuffle_rng);
        let mut total = 0.0;
        for batch in order.chunks(config.batch_size) {
            grads.clear();
            for &e in batch {
                let ex = &examples[e];
                let docs: Vec<&SparseInput> = ex.docs.iter().map(|m| &member_inputs[m]).collect();
                total += model.example(&queries[ex.query], &docs, &mut grads, &mut ws)?;
            }
            let step = config.learning_rate / batch.len() as f64;
            let grad_layers = grads.query.iter().chain(&grads.document);
            for (layer, g) in model.layers_mut().zip(grad_layers) {
                if g.weights.iter().chain(&g.bias).any(|v| !v.is_finite()) {
                    return Err(Error::NonFinite("dssm gradient"));
                }
                layer.weights.iter_mut().zip(&g.weights).for_each(|(w, d)| *w -= step * d);
                layer.bias.iter_mut().zip(&g.bias).for_each(|(b, d)| *b -= step * d);
            }
        }
        log.epoch_loss.push(total / examples.len() as f64);
    }
    Ok((model, log))
}

/// Supervised entity tables: the query-arm output on each entity's one-hot input.
pub fn export_embeddings(model: &DssmModel) -> Result<BTreeMap<Namespace, EmbeddingTable>> {
    let mut out = BTreeMap::new();
    for v in &model.layout.entities {
        let mut table = EmbeddingTable::new(v.namespace(), model.output_dim(), EmbeddingKind::Supervised);
        for id in v.ids() {
            let input = model.layout.entity_input(id).expect("vocabulary entity has an input");
            table.insert(id, model.query.forward(&input)?)?;
        }
        out.insert(v.namespace(), table);
    }
    Ok(out)
}
