//! Multilayer perceptron with a final linear scoring layer, the pointwise and
//! pairwise ranking objectives, plain SGD and a finite-difference gradient checker.

use std::fmt;
use std::fmt::Write as _;
use std::str::FromStr;

use rand::seq::index::sample;
use rand::Rng as _;

use crate::error::{Error, Result};
use crate::graph_embed::fmt_float;
use crate::seed::{rng, Rng};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Activation {
    Relu,
    Tanh,
    Identity,
}

impl Activation {
    fn apply(self, x: f64) -> f64 {
        match self {
            Activation::Relu => x.max(0.0),
            Activation::Tanh => x.tanh(),
            Activation::Identity => x,
        }
    }

    /// Derivative expressed through the pre-activation and the output.
    fn derivative(self, pre: f64, out: f64) -> f64 {
        match self {
            Activation::Relu => {
                if pre > 0.0 {
                    1.0
                } else {
                    0.0
                }
            }
            Activation::Tanh => 1.0 - out * out,
            Activation::Identity => 1.0,
        }
    }
}

impl fmt::Display for Activation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Activation::Relu => "relu",
            Activation::Tanh => "tanh",
            Activation::Identity => "identity",
        })
    }
}

impl FromStr for Activation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "relu" => Ok(Activation::Relu),
            "tanh" => Ok(Activation::Tanh),
            "identity" => Ok(Activation::Identity),
            other => Err(Error::Config(format!("unknown activation `{other}`"))),
        }
    }
}

/// Fully connected layer; `weights` is `outputs × inputs`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dense {
    pub inputs: usize,
    pub outputs: usize,
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub activation: Activation,
}

impl Dense {
    pub fn zeros(inputs: usize, outputs: usize, activation: Activation) -> Self {
        Dense {
            inputs,
            outputs,
            weights: vec![0.0; inputs * outputs],
            bias: vec![0.0; outputs],
            activation,
        }
    }

    /// Uniform `±sqrt(6 / (fan_in + fan_out))` weights, zero bias.
    pub fn glorot(inputs: usize, outputs: usize, activation: Activation, rng: &mut Rng) -> Self {
        let limit = (6.0 / (inputs + outputs) as f64).sqrt();
        let weights = (0..inputs * outputs).map(|_| rng.gen_range(-limit..=limit)).collect();
        Dense {
            weights,
            ..Dense::zeros(inputs, outputs, activation)
        }
    }

    /// `pre = W x + b`, `post = act(pre)`.
    pub fn forward(&self, x: &[f64], pre: &mut [f64], post: &mut [f64]) {
        for o in 0..self.outputs {
            let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
            let z = self.bias[o] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>();
            pre[o] = z;
            post[o] = self.activation.apply(z);
        }
    }

    /// Given `d_post`, accumulates parameter gradients and writes `d_input` when requested.
    pub fn backward(
        &self,
        x: &[f64],
        pre: &[f64],
        post: &[f64],
        d_post: &[f64],
        grad: &mut DenseGrad,
        d_input: Option<&mut [f64]>,
        d_pre: &mut [f64],
    ) {
        for o in 0..self.outputs {
            d_pre[o] = d_post[o] * self.activation.derivative(pre[o], post[o]);
        }
        for o in 0..self.outputs {
            let g = d_pre[o];
            if g == 0.0 {
                continue;
            }
            grad.bias[o] += g;
            let row = &mut grad.weights[o * self.inputs..(o + 1) * self.inputs];
            for (r, v) in row.iter_mut().zip(x) {
                *r += g * v;
            }
        }
        if let Some(d_input) = d_input {
            d_input.iter_mut().for_each(|d| *d = 0.0);
            for o in 0..self.outputs {
                let g = d_pre[o];
                if g == 0.0 {
                    continue;
                }
                let row = &self.weights[o * self.inputs..(o + 1) * self.inputs];
                for (d, w) in d_input.iter_mut().zip(row) {
                    *d += g * w;
                }
            }
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DenseGrad {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl DenseGrad {
    pub fn zeros_like(layer: &Dense) -> Self {
        DenseGrad {
            weights: vec![0.0; layer.weights.len()],
            bias: vec![0.0; layer.bias.len()],
        }
    }
}

/// `score(x) = final_w · ψ(x)` where `ψ` is the stack of hidden layers.
#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    input_width: usize,
    layers: Vec<Dense>,
    final_w: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpGradients {
    pub layers: Vec<DenseGrad>,
    pub final_w: Vec<f64>,
}

impl MlpGradients {
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out.extend_from_slice(&self.final_w);
        out
    }

    pub fn clear(&mut self) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|v| *v = 0.0);
            l.bias.iter_mut().for_each(|v| *v = 0.0);
        }
        self.final_w.iter_mut().for_each(|v| *v = 0.0);
    }

    pub fn scale(&mut self, factor: f64) {
        for l in &mut self.layers {
            l.weights.iter_mut().for_each(|v| *v *= factor);
            l.bias.iter_mut().for_each(|v| *v *= factor);
        }
        self.final_w.iter_mut().for_each(|v| *v *= factor);
    }
}

/// Activations retained by a forward pass for the backward pass.
#[derive(Debug, Clone, Default)]
pub struct ForwardCache {
    input: Vec<f64>,
    pre: Vec<Vec<f64>>,
    /// Activation outputs before dropout.
    act: Vec<Vec<f64>>,
    /// Layer outputs fed forward (after dropout).
    post: Vec<Vec<f64>>,
    masks: Vec<Option<Vec<f64>>>,
}

impl ForwardCache {
    /// Hidden representation `ψ(x)` of the last forward pass.
    pub fn representation(&self) -> &[f64] {
        self.post.last().unwrap_or(&self.input)
    }
}

/// Reusable scratch buffers for backward passes.
#[derive(Debug, Clone, Default)]
pub struct BackwardScratch {
    d_post: Vec<f64>,
    d_input: Vec<f64>,
    d_pre: Vec<f64>,
}

/// Inverted dropout applied to hidden outputs during training.
pub struct Dropout<'r> {
    pub rate: f64,
    pub rng: &'r mut Rng,
}

impl MlpModel {
    /// Zero-initialized network with `hidden` layer widths.
    pub fn zeros(input_width: usize, hidden: &[usize], activation: Activation) -> Self {
        let mut layers = Vec::with_capacity(hidden.len());
        let mut width = input_width;
        for &h in hidden {
            layers.push(Dense::zeros(width, h, activation));
            width = h;
        }
        MlpModel {
            input_width,
            layers,
            final_w: vec![0.0; width],
        }
    }

    /// Glorot-uniform initialization of every layer including the scoring weights.
    pub fn new(input_width: usize, hidden: &[usize], activation: Activation, seed: u64) -> Self {
        let mut rng = rng(seed);
        let mut layers = Vec::with_capacity(hidden.len());
        let mut width = input_width;
        for &h in hidden {
            layers.push(Dense::glorot(width, h, activation, &mut rng));
            width = h;
        }
        let limit = (6.0 / (width + 1) as f64).sqrt();
        let final_w = (0..width).map(|_| rng.gen_range(-limit..=limit)).collect();
        MlpModel {
            input_width,
            layers,
            final_w,
        }
    }

    pub fn from_parts(input_width: usize, layers: Vec<Dense>, final_w: Vec<f64>) -> Result<Self> {
        let mut width = input_width;
        for (i, l) in layers.iter().enumerate() {
            if l.inputs != width || l.weights.len() != l.inputs * l.outputs || l.bias.len() != l.outputs {
                return Err(Error::Shape(format!("layer {i} is inconsistent with its input width {width}")));
            }
            width = l.outputs;
        }
        if final_w.len() != width {
            return Err(Error::Shape(format!(
                "final weights have length {}, top width is {width}",
                final_w.len()
            )));
        }
        let model = MlpModel {
            input_width,
            layers,
            final_w,
        };
        if model.flatten().iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("model parameters"));
        }
        Ok(model)
    }

    pub fn input_width(&self) -> usize {
        self.input_width
    }

    pub fn layers(&self) -> &[Dense] {
        &self.layers
    }

    pub fn layers_mut(&mut self) -> &mut [Dense] {
        &mut self.layers
    }

    pub fn final_weights(&self) -> &[f64] {
        &self.final_w
    }

    pub fn final_weights_mut(&mut self) -> &mut [f64] {
        &mut self.final_w
    }

    pub fn top_width(&self) -> usize {
        self.final_w.len()
    }

    pub fn zero_gradients(&self) -> MlpGradients {
        MlpGradients {
            layers: self.layers.iter().map(DenseGrad::zeros_like).collect(),
            final_w: vec![0.0; self.final_w.len()],
        }
    }

    pub fn param_count(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum::<usize>() + self.final_w.len()
    }

    /// Parameters in the canonical order: per layer weights then bias, then final weights.
    pub fn flatten(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for l in &self.layers {
            out.extend_from_slice(&l.weights);
            out.extend_from_slice(&l.bias);
        }
        out.extend_from_slice(&self.final_w);
        out
    }

    pub fn assign(&mut self, params: &[f64]) -> Result<()> {
        if params.len() != self.param_count() {
            return Err(Error::Shape("parameter vector length".into()));
        }
        let mut at = 0;
        for l in &mut self.layers {
            let n = l.weights.len();
            l.weights.copy_from_slice(&params[at..at + n]);
            at += n;
            let n = l.bias.len();
            l.bias.copy_from_slice(&params[at..at + n]);
            at += n;
        }
        self.final_w.copy_from_slice(&params[at..]);
        Ok(())
    }

    /// Inference-mode score.
    pub fn score(&self, x: &[f64]) -> Result<f64> {
        let mut cache = ForwardCache::default();
        self.forward_into(x, &mut cache, None)
    }

    /// Inference-mode forward pass.
    pub fn forward(&self, x: &[f64]) -> Result<(f64, ForwardCache)> {
        let mut cache = ForwardCache::default();
        let score = self.forward_into(x, &mut cache, None)?;
        Ok((score, cache))
    }

    /// Forward pass reusing `cache`. Dropout, when given, masks hidden outputs
    /// with inverted scaling so inference needs no rescale.
    pub fn forward_into(&self, x: &[f64], cache: &mut ForwardCache, mut dropout: Option<Dropout<'_>>) -> Result<f64> {
        if x.len() != self.input_width {
            return Err(Error::Shape(format!(
                "input has width {}, model expects {}",
                x.len(),
                self.input_width
            )));
        }
        let n = self.layers.len();
        cache.input.clear();
        cache.input.extend_from_slice(x);
        cache.pre.resize(n, Vec::new());
        cache.act.resize(n, Vec::new());
        cache.post.resize(n, Vec::new());
        cache.masks.resize(n, None);
        for (i, layer) in self.layers.iter().enumerate() {
            cache.pre[i].resize(layer.outputs, 0.0);
            cache.act[i].resize(layer.outputs, 0.0);
            let input = if i == 0 { &cache.input } else { &cache.post[i - 1] };
            layer.forward(input, &mut cache.pre[i], &mut cache.act[i]);
            let post = &mut cache.post[i];
            post.clear();
            post.extend_from_slice(&cache.act[i]);
            match dropout.as_mut() {
                Some(d) if d.rate > 0.0 => {
                    let keep = 1.0 - d.rate;
                    let mask: Vec<f64> = (0..layer.outputs)
                        .map(|_| if d.rng.gen_bool(keep) { 1.0 / keep } else { 0.0 })
                        .collect();
                    post.iter_mut().zip(&mask).for_each(|(p, m)| *p *= m);
                    cache.masks[i] = Some(mask);
                }
                _ => cache.masks[i] = None,
            }
        }
        let top = cache.post.last().unwrap_or(&cache.input);
        Ok(self.final_w.iter().zip(top).map(|(w, h)| w * h).sum())
    }

    /// Accumulates `d_score · ∂score/∂θ` into `grads`.
    pub fn backward(&self, cache: &ForwardCache, d_score: f64, grads: &mut MlpGradients, scratch: &mut BackwardScratch) {
        let top = cache.post.last().unwrap_or(&cache.input);
        for (g, h) in grads.final_w.iter_mut().zip(top) {
            *g += d_score * h;
        }
        if self.layers.is_empty() || d_score == 0.0 {
            return;
        }
        scratch.d_post.clear();
        scratch.d_post.extend(self.final_w.iter().map(|w| d_score * w));
        for i in (0..self.layers.len()).rev() {
            let layer = &self.layers[i];
            if let Some(mask) = &cache.masks[i] {
                scratch.d_post.iter_mut().zip(mask).for_each(|(d, m)| *d *= m);
            }
            let input = if i == 0 { &cache.input } else { &cache.post[i - 1] };
            scratch.d_pre.resize(layer.outputs, 0.0);
            let need_input = i > 0;
            scratch.d_input.resize(layer.inputs, 0.0);
            layer.backward(
                input,
                &cache.pre[i],
                &cache.act[i],
                &scratch.d_post,
                &mut grads.layers[i],
                if need_input { Some(&mut scratch.d_input) } else { None },
                &mut scratch.d_pre,
            );
            if need_input {
                std::mem::swap(&mut scratch.d_post, &mut scratch.d_input);
            }
        }
    }

    /// Writes the versioned text block: shapes, then parameters row-major.
    pub fn write_text(&self, out: &mut String) {
        let _ = writeln!(out, "mlp v1");
        let _ = writeln!(out, "input {}", self.input_width);
        for l in &self.layers {
            let _ = writeln!(out, "layer {} {}", l.outputs, l.activation);
        }
        let _ = writeln!(out, "params");
        for l in &self.layers {
            for o in 0..l.outputs {
                write_row(out, &l.weights[o * l.inputs..(o + 1) * l.inputs]);
            }
            write_row(out, &l.bias);
        }
        write_row(out, &self.final_w);
    }

    /// Parses a block produced by [`MlpModel::write_text`].
    pub fn read_text<'a>(lines: &mut impl Iterator<Item = &'a str>) -> Result<Self> {
        let mut next = || lines.next().ok_or_else(|| Error::Format("unexpected end of model".into()));
        if next()?.trim() != "mlp v1" {
            return Err(Error::Format("expected `mlp v1` header".into()));
        }
        let input_width: usize = parse_kv(next()?, "input")?;
        let mut shapes = Vec::new();
        loop {
            let line = next()?;
            let mut parts = line.split_whitespace();
            match parts.next() {
                Some("layer") => {
                    let width: usize = parts
                        .next()
                        .ok_or_else(|| Error::Format("layer width".into()))?
                        .parse()
                        .map_err(|_| Error::Format(format!("bad layer line `{line}`")))?;
                    let act: Activation = parts
                        .next()
                        .ok_or_else(|| Error::Format("layer activation".into()))?
                        .parse()?;
                    shapes.push((width, act));
                }
                Some("params") => break,
                _ => return Err(Error::Format(format!("unexpected line `{line}`"))),
            }
        }
        let mut layers = Vec::with_capacity(shapes.len());
        let mut width = input_width;
        for (outputs, act) in shapes {
            let mut layer = Dense::zeros(width, outputs, act);
            for o in 0..outputs {
                let row = read_row(next()?, width)?;
                layer.weights[o * width..(o + 1) * width].copy_from_slice(&row);
            }
            layer.bias = read_row(next()?, outputs)?;
            layers.push(layer);
            width = outputs;
        }
        let final_w = read_row(next()?, width)?;
        MlpModel::from_parts(input_width, layers, final_w)
    }
}

pub(crate) fn write_row(out: &mut String, row: &[f64]) {
    let mut first = true;
    for v in row {
        if !first {
            out.push(' ');
        }
        first = false;
        out.push_str(&fmt_float(*v));
    }
    out.push('\n');
}

pub(crate) fn read_row(line: &str, expected: usize) -> Result<Vec<f64>> {
    let row = line
        .split_whitespace()
        .map(|t| t.parse::<f64>())
        .collect::<std::result::Result<Vec<_>, _>>()
        .map_err(|e| Error::Format(format!("bad parameter: {e}")))?;
    if row.len() != expected {
        return Err(Error::Format(format!("expected {expected} values, found {}", row.len())));
    }
    Ok(row)
}

pub(crate) fn parse_kv<T: FromStr>(line: &str, key: &str) -> Result<T> {
    let rest = line
        .strip_prefix(key)
        .filter(|r| r.is_empty() || r.starts_with(' '))
        .ok_or_else(|| Error::Format(format!("expected `{key}` line, found `{line}`")))?;
    rest.trim()
        .parse()
        .map_err(|_| Error::Format(format!("bad value in `{line}`")))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PairwiseKind {
    Hinge,
    Logistic,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Objective {
    Pointwise,
    Pairwise(PairwiseKind),
}

impl fmt::Display for Objective {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Objective::Pointwise => "pointwise",
            Objective::Pairwise(PairwiseKind::Hinge) => "pairwise_hinge",
            Objective::Pairwise(PairwiseKind::Logistic) => "pairwise_logistic",
        })
    }
}

impl FromStr for Objective {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "pointwise" => Ok(Objective::Pointwise),
            "pairwise" | "pairwise_hinge" => Ok(Objective::Pairwise(PairwiseKind::Hinge)),
            "pairwise_logistic" => Ok(Objective::Pairwise(PairwiseKind::Logistic)),
            other => Err(Error::Config(format!("unknown objective `{other}`"))),
        }
    }
}

fn softplus(x: f64) -> f64 {
    x.max(0.0) + (-x.abs()).exp().ln_1p()
}

fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Summed logistic cross-entropy of `σ(score)` against binary labels, and its
/// derivative `σ - y` per example.
pub fn pointwise_loss(scores: &[f64], labels: &[u8]) -> Result<(f64, Vec<f64>)> {
    if scores.is_empty() {
        return Err(Error::Shape("pointwise loss of an empty batch".into()));
    }
    if scores.len() != labels.len() {
        return Err(Error::Shape("scores and labels differ in length".into()));
    }
    let mut loss = 0.0;
    let grad = scores
        .iter()
        .zip(labels)
        .map(|(&s, &y)| {
            let y = f64::from(y);
            // -[y log σ(s) + (1-y) log(1-σ(s))] = softplus(s) - y s
            loss += softplus(s) - y * s;
            sigmoid(s) - y
        })
        .collect();
    Ok((loss, grad))
}

/// `f(d)` and `f'(d)`; the hinge subgradient at the kink is 0.
pub fn pairwise_loss(d: f64, kind: PairwiseKind) -> (f64, f64) {
    match kind {
        PairwiseKind::Hinge => {
            if d < 1.0 {
                (1.0 - d, -1.0)
            } else {
                (0.0, 0.0)
            }
        }
        PairwiseKind::Logistic => (softplus(-d), -sigmoid(-d)),
    }
}

/// `d = score(x_pos) - score(x_neg)`.
pub fn pairwise_forward(model: &MlpModel, x_pos: &[f64], x_neg: &[f64]) -> Result<f64> {
    if x_pos.len() != x_neg.len() {
        return Err(Error::Shape("pair members differ in width".into()));
    }
    Ok(model.score(x_pos)? - model.score(x_neg)?)
}

/// Pairwise loss summed over every (positive, negative) pair of one session,
/// and its derivative with respect to each score.
pub fn pairwise_session_loss(scores: &[f64], labels: &[u8], kind: PairwiseKind) -> (f64, Vec<f64>, usize) {
    let mut grad = vec![0.0; scores.len()];
    let mut loss = 0.0;
    let mut pairs = 0;
    for (i, &yi) in labels.iter().enumerate() {
        if yi != 1 {
            continue;
        }
        for (j, &yj) in labels.iter().enumerate() {
            if yj != 0 {
                continue;
            }
            let (f, df) = pairwise_loss(scores[i] - scores[j], kind);
            loss += f;
            grad[i] += df;
            grad[j] -= df;
            pairs += 1;
        }
    }
    (loss, grad, pairs)
}

/// `θ ← θ − lr (g + l2 θ)`; the L2 term skips biases.
pub fn sgd_step(model: &mut MlpModel, grads: &MlpGradients, learning_rate: f64, l2_penalty: f64) -> Result<()> {
    if grads.layers.len() != model.layers.len()
        || grads.final_w.len() != model.final_w.len()
        || grads
            .layers
            .iter()
            .zip(&model.layers)
            .any(|(g, l)| g.weights.len() != l.weights.len() || g.bias.len() != l.bias.len())
    {
        return Err(Error::Shape("gradient shapes do not match the model".into()));
    }
    if grads.flatten().iter().any(|g| !g.is_finite()) {
        return Err(Error::NonFinite("gradient"));
    }
    for (layer, g) in model.layers.iter_mut().zip(&grads.layers) {
        for (w, gw) in layer.weights.iter_mut().zip(&g.weights) {
            *w -= learning_rate * (gw + l2_penalty * *w);
        }
        for (b, gb) in layer.bias.iter_mut().zip(&g.bias) {
            *b -= learning_rate * gb;
        }
    }
    for (w, gw) in model.final_w.iter_mut().zip(&grads.final_w) {
        *w -= learning_rate * (gw + l2_penalty * *w);
    }
    Ok(())
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub objective: Objective,
    pub hidden_layers: Vec<usize>,
    pub activation: Activation,
    pub learning_rate: f64,
    pub epochs: usize,
    /// Sessions per minibatch.
    pub batch_size: usize,
    pub l2_penalty: f64,
    pub dropout_rate: f64,
    pub early_stop_patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            objective: Objective::Pairwise(PairwiseKind::Hinge),
            hidden_layers: vec![100, 100, 100],
            activation: Activation::Relu,
            learning_rate: 0.01,
            epochs: 20,
            batch_size: 8,
            l2_penalty: 0.0,
            dropout_rate: 0.0,
            early_stop_patience: 3,
            seed: 1,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return Err(Error::Config("learning rate must be positive".into()));
        }
        if self.batch_size == 0 {
            return Err(Error::Config("batch size must be positive".into()));
        }
        if !(self.l2_penalty >= 0.0) {
            return Err(Error::Config("l2 penalty must be non-negative".into()));
        }
        if !(0.0..1.0).contains(&self.dropout_rate) {
            return Err(Error::Config("dropout rate must lie in [0, 1)".into()));
        }
        if self.hidden_layers.iter().any(|&h| h == 0) {
            return Err(Error::Config("hidden layers must be nonempty".into()));
        }
        Ok(())
    }
}

/// `|ga − gn| / max(1e-8, |ga| + |gn|)`.
pub fn relative_error(analytic: f64, numeric: f64) -> f64 {
    (analytic - numeric).abs() / (analytic.abs() + numeric.abs()).max(1e-8)
}

/// Indices to probe: all of them when `max` is `None` or at least `n`,
/// otherwise a seeded subsample of `max` indices.
pub fn probe_indices(n: usize, max: Option<usize>, seed: u64) -> Vec<usize> {
    match max {
        Some(m) if m < n => {
            let mut idx = sample(&mut rng(seed), n, m).into_vec();
            idx.sort_unstable();
            idx
        }
        _ => (0..n).collect(),
    }
}

pub const FD_STEP: f64 = 1e-5;

/// Maximum relative error between `analytic` and central differences of `f`
/// (step [`FD_STEP`]) over the probed parameter indices.
pub fn finite_difference_check(
    params: &[f64],
    analytic: &[f64],
    indices: &[usize],
    f: impl Fn(&[f64]) -> f64,
) -> f64 {
    let mut probe = params.to_vec();
    let mut worst: f64 = 0.0;
    for &i in indices {
        let orig = probe[i];
        probe[i] = orig + FD_STEP;
        let up = f(&probe);
        probe[i] = orig - FD_STEP;
        let down = f(&probe);
        probe[i] = orig;
        let numeric = (up - down) / (2.0 * FD_STEP);
        worst = worst.max(relative_error(analytic[i], numeric));
    }
    worst
}

/// Checks the analytic gradient returned by `objective` against central
/// differences. Probes every parameter, or `max_params` of them (at least 200
/// is recommended) chosen by `seed`. Dropout must be off inside `objective`.
pub fn gradient_check<F>(model: &MlpModel, objective: F, max_params: Option<usize>, seed: u64) -> f64
where
    F: Fn(&MlpModel) -> (f64, MlpGradients),
{
    let (_, grads) = objective(model);
    let analytic = grads.flatten();
    let params = model.flatten();
    let indices = probe_indices(params.len(), max_params, seed);
    let mut probe_model = model.clone();
    let probe_model = std::cell::RefCell::new(&mut probe_model);
    finite_difference_check(&params, &analytic, &indices, |p| {
        let mut m = probe_model.borrow_mut();
        m.assign(p).expect("same layout");
        objective(&m).0
    })
}
