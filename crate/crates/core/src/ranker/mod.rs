//! Feature assembly, session pair mining, ranker training and scoring.

mod features;
#[cfg(test)]
mod tests;

use std::collections::BTreeSet;
use std::fmt::Write as _;

use rand::seq::SliceRandom;

pub use features::{
    assemble_features, assemble_from_views, assemble_member_features, jaccard, EmbeddingTables, Feature,
    FeatureSchema, MemberView, QueryView,
};

use crate::corpus::{Impression, MemberProfile, ProfileStore, Query, Session, SessionStore};
use crate::neural::{
    pairwise_session_loss, parse_kv, pointwise_loss, sgd_step, BackwardScratch, Dropout, ForwardCache, MlpModel,
    Objective, TrainConfig,
};
use crate::seed::{rng, stage_seed};
use crate::{Error, Result};

/// Every (positive, negative) pair of a session, ordered by positive position
/// then negative position.
pub fn mine_pairs(session: &Session) -> Vec<(Impression, Impression)> {
    let mut pos: Vec<Impression> = session.impressions.iter().filter(|i| i.label == 1).copied().collect();
    let mut neg: Vec<Impression> = session.impressions.iter().filter(|i| i.label == 0).copied().collect();
    pos.sort_by_key(|i| (i.position, i.member_id));
    neg.sort_by_key(|i| (i.position, i.member_id));
    pos.iter().flat_map(|p| neg.iter().map(move |n| (*p, *n))).collect()
}

#[derive(Debug, Clone, PartialEq)]
pub struct RankingModel {
    pub schema: FeatureSchema,
    pub net: MlpModel,
    pub objective: Objective,
    pub seed: u64,
    pub epochs_run: usize,
}

impl RankingModel {
    pub fn new(schema: FeatureSchema, net: MlpModel, objective: Objective, seed: u64, epochs_run: usize) -> Result<Self> {
        if net.input_width() != schema.width() {
            return Err(Error::Shape(format!(
                "network input width {} for a schema of width {}",
                net.input_width(),
                schema.width()
            )));
        }
        Ok(RankingModel {
            schema,
            net,
            objective,
            seed,
            epochs_run,
        })
    }

    /// `mlp_forward(features)` with dropout off.
    pub fn score_features(&self, features: &[f64]) -> Result<f64> {
        self.net.score(features)
    }

    pub fn score(&self, query: &Query, member: &MemberProfile, tables: &EmbeddingTables) -> Result<f64> {
        self.score_features(&assemble_features(&self.schema, query, member, tables)?)
    }

    pub fn score_member(&self, query: &Query, member_id: u64, profiles: &ProfileStore, tables: &EmbeddingTables) -> Result<f64> {
        self.score(query, profiles.require(member_id)?, tables)
    }

    pub fn to_text(&self) -> String {
        let mut out = String::from("ranker v1\n");
        let _ = writeln!(out, "objective {}", self.objective);
        let _ = writeln!(out, "pooling {}", self.schema.pooling());
        let _ = writeln!(out, "features {}", self.schema.names());
        let _ = writeln!(out, "seed {}", self.seed);
        let _ = writeln!(out, "epochs_run {}", self.epochs_run);
        self.net.write_text(&mut out);
        out
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines();
        let mut next = || lines.next().ok_or_else(|| Error::Format("unexpected end of ranker file".into()));
        if next()?.trim() != "ranker v1" {
            return Err(Error::Format("expected `ranker v1` header".into()));
        }
        let objective: String = parse_kv(next()?, "objective")?;
        let objective: Objective = objective.parse().map_err(|e: Error| Error::Format(e.to_string()))?;
        let pooling: String = parse_kv(next()?, "pooling")?;
        let pooling = pooling.parse().map_err(|e: Error| Error::Format(e.to_string()))?;
        let names: String = parse_kv(next()?, "features")?;
        let schema = FeatureSchema::parse_names(&names, pooling).map_err(|e| Error::Format(e.to_string()))?;
        let seed = parse_kv(next()?, "seed")?;
        let epochs_run = parse_kv(next()?, "epochs_run")?;
        let net = MlpModel::read_text(&mut lines)?;
        if lines.any(|l| !l.trim().is_empty()) {
            return Err(Error::Format("trailing content after the network block".into()));
        }
        RankingModel::new(schema, net, objective, seed, epochs_run).map_err(|e| Error::Format(e.to_string()))
    }
}

/// Feature rows and labels of one session, in impression order.
#[derive(Debug, Clone, PartialEq)]
pub struct SessionExamples {
    pub session_id: u64,
    pub features: Vec<Vec<f64>>,
    pub labels: Vec<u8>,
}

impl SessionExamples {
    fn pairs(&self) -> usize {
        let p = self.labels.iter().filter(|&&l| l == 1).count();
        p * (self.labels.len() - p)
    }
}

/// Assembles examples for every session, reusing one query view per session.
pub fn session_examples(
    sessions: &SessionStore,
    profiles: &ProfileStore,
    tables: &EmbeddingTables,
    schema: &FeatureSchema,
) -> Result<Vec<SessionExamples>> {
    schema.check_tables(tables)?;
    let mut member_views = std::collections::BTreeMap::new();
    sessions
        .iter()
        .map(|s| {
            let qv = QueryView::new(schema, &s.query, tables)?;
            let mut features = Vec::with_capacity(s.impressions.len());
            for imp in &s.impressions {
                let member = profiles.get(imp.member_id).ok_or(Error::UnresolvedImpression {
                    session: s.session_id,
                    member: imp.member_id,
                })?;
                if !member_views.contains_key(&imp.member_id) {
                    member_views.insert(imp.member_id, MemberView::new(schema, member, tables)?);
                }
                features.push(assemble_from_views(schema, &s.query, &qv, member, &member_views[&imp.member_id])?);
            }
            Ok(SessionExamples {
                session_id: s.session_id,
                features,
                labels: s.impressions.iter().map(|i| i.label).collect(),
            })
        })
        .collect()
}

/// Summed objective over `examples` with dropout off, and the number of
/// terms (impressions for pointwise, mined pairs for pairwise).
pub fn objective_loss(net: &MlpModel, examples: &[SessionExamples], objective: Objective) -> Result<(f64, usize)> {
    let (mut total, mut count) = (0.0, 0);
    for ex in examples {
        let scores: Vec<f64> = ex.features.iter().map(|x| net.score(x)).collect::<Result<_>>()?;
        match objective {
            Objective::Pointwise => {
                total += pointwise_loss(&scores, &ex.labels)?.0;
                count += scores.len();
            }
            Objective::Pairwise(kind) => {
                let (loss, _, pairs) = pairwise_session_loss(&scores, &ex.labels, kind);
                total += loss;
                count += pairs;
            }
        }
    }
    Ok((total, count))
}

/// Per-epoch record of a training run.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct TrainLog {
    /// Mean training objective per epoch, measured during the epoch.
    pub train_loss: Vec<f64>,
    /// Mean validation objective after each epoch, when validation is possible.
    pub valid_loss: Vec<f64>,
    pub best_epoch: usize,
}

pub fn train_ranker(
    train: &SessionStore,
    valid: &SessionStore,
    profiles: &ProfileStore,
    tables: &EmbeddingTables,
    schema: &FeatureSchema,
    config: &TrainConfig,
) -> Result<RankingModel> {
    train_ranker_logged(train, valid, profiles, tables, schema, config).map(|(m, _)| m)
}

pub fn train_ranker_logged(
    train: &SessionStore,
    valid: &SessionStore,
    profiles: &ProfileStore,
    tables: &EmbeddingTables,
    schema: &FeatureSchema,
    config: &TrainConfig,
) -> Result<(RankingModel, TrainLog)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Degenerate("training split has no sessions".into()));
    }
    let train_ex = session_examples(train, profiles, tables, schema)?;
    let valid_ex = session_examples(valid, profiles, tables, schema)?;
    train_on_examples(&train_ex, &valid_ex, schema, config)
}

/// Training on preassembled examples; see [`train_ranker`].
pub fn train_on_examples(
    train: &[SessionExamples],
    valid: &[SessionExamples],
    schema: &FeatureSchema,
    config: &TrainConfig,
) -> Result<(RankingModel, TrainLog)> {
    config.validate()?;
    if train.is_empty() {
        return Err(Error::Degenerate("training split has no sessions".into()));
    }
    if let Objective::Pairwise(_) = config.objective {
        if train.iter().all(|s| s.pairs() == 0) {
            return Err(Error::Degenerate("no session holds both a positive and a negative".into()));
        }
    }
    let mut net = MlpModel::new(
        schema.width(),
        &config.hidden_layers,
        config.activation,
        stage_seed(config.seed, "ranker-init"),
    );
    let mut shuffle_rng = rng(stage_seed(config.seed, "ranker-shuffle"));
    let mut dropout_rng = rng(stage_seed(config.seed, "ranker-dropout"));
    let mut grads = net.zero_gradients();
    let mut scratch = BackwardScratch::default();
    let max_len = train.iter().map(|s| s.labels.len()).max().unwrap_or(0);
    let mut caches = vec![ForwardCache::default(); max_len];
    let mut scores = vec![0.0; max_len];
    let mut order: Vec<usize> = (0..train.len()).collect();

    let validate = |net: &MlpModel| -> Result<Option<f64>> {
        let (loss, count) = objective_loss(net, valid, config.objective)?;
        Ok((count > 0).then(|| loss / count as f64))
    };
    let mut log = TrainLog::default();
    let mut best: Option<(f64, MlpModel, usize)> = None;
    let mut since_best = 0;
    let mut epochs_run = 0;
    if let Some(v) = validate(&net)? {
        best = Some((v, net.clone(), 0));
    }
    for epoch in 1..=config.epochs {
        order.shuffle(&mut shuffle_rng);
        let (mut epoch_loss, mut epoch_count) = (0.0, 0usize);
        for batch in order.chunks(config.batch_size) {
            grads.clear();
            let mut count = 0usize;
            for &si in batch {
                let ex = &train[si];
                let n = ex.labels.len();
                for i in 0..n {
                    let dropout = (config.dropout_rate > 0.0).then(|| Dropout {
                        rate: config.dropout_rate,
                        rng: &mut dropout_rng,
                    });
                    scores[i] = net.forward_into(&ex.features[i], &mut caches[i], dropout)?;
                }
                let (loss, coeffs, terms) = match config.objective {
                    Objective::Pointwise => {
                        let (l, g) = pointwise_loss(&scores[..n], &ex.labels)?;
                        (l, g, n)
                    }
                    Objective::Pairwise(kind) => pairwise_session_loss(&scores[..n], &ex.labels, kind),
                };
                if terms == 0 {
                    continue;
                }
                epoch_loss += loss;
                count += terms;
                for (cache, &c) in caches.iter().zip(&coeffs) {
                    if c != 0.0 {
                        net.backward(cache, c, &mut grads, &mut scratch);
                    }
                }
            }
            if count == 0 {
                continue;
            }
            epoch_count += count;
            grads.scale(1.0 / count as f64);
            sgd_step(&mut net, &grads, config.learning_rate, config.l2_penalty)?;
        }
        epochs_run = epoch;
        log.train_loss.push(if epoch_count == 0 { 0.0 } else { epoch_loss / epoch_count as f64 });
        if let Some(v) = validate(&net)? {
            log.valid_loss.push(v);
            match &best {
                Some((b, _, _)) if v >= *b => since_best += 1,
                _ => {
                    best = Some((v, net.clone(), epoch));
                    since_best = 0;
                }
            }
            if config.early_stop_patience > 0 && since_best >= config.early_stop_patience {
                break;
            }
        }
    }
    let net = match best {
        Some((_, best_net, epoch)) => {
            log.best_epoch = epoch;
            best_net
        }
        None => {
            log.best_epoch = epochs_run;
            net
        }
    };
    let model = RankingModel::new(schema.clone(), net, config.objective, config.seed, epochs_run)?;
    Ok((model, log))
}

/// Members of `sessions` absent from `profiles`, for early diagnostics.
pub fn unresolved_members(sessions: &SessionStore, profiles: &ProfileStore) -> BTreeSet<u64> {
    sessions
        .iter()
        .flat_map(|s| s.impressions.iter().map(|i| i.member_id))
        .filter(|m| profiles.get(*m).is_none())
        .collect()
}
