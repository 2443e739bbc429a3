//! Offline replay of recorded sessions: Prec@k and AUC under a candidate scorer.

use std::cmp::Ordering;
use std::collections::BTreeMap;
use std::fmt::Write as _;

use rand::seq::SliceRandom;

use crate::corpus::{MemberProfile, ProfileStore, Query, Session, SessionStore};
use crate::seed::rng;
use crate::{Error, Result};


/// Denominator used by [`precision_at_k`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Denominator {
    /// `min(k, n)`: short sessions are not penalized for lacking k items.
    #[default]
    MinKN,
    K,
}

pub fn precision_at_k(ranked_labels: &[u8], k: usize, denominator: Denominator) -> Result<f64> {
    if ranked_labels.is_empty() {
        return Err(Error::Degenerate("precision of an empty ranking".into()));
    }
    if k == 0 {
        return Err(Error::Config("precision cutoff k must be at least 1".into()));
    }
    let depth = k.min(ranked_labels.len());
    let hits = ranked_labels[..depth].iter().filter(|&&l| l == 1).count();
    let denom = match denominator {
        Denominator::MinKN => depth,
        Denominator::K => k,
    };
    Ok(hits as f64 / denom as f64)
}

/// Mann–Whitney AUC with ties counted one half.
pub fn auc(scores: &[f64], labels: &[u8]) -> Result<f64> {
    if scores.len() != labels.len() {
        return Err(Error::Shape(format!("{} scores for {} labels", scores.len(), labels.len())));
    }
    let mut items: Vec<(f64, u8)> = scores.iter().copied().zip(labels.iter().copied()).collect();
    if items.iter().any(|(s, _)| !s.is_finite()) {
        return Err(Error::NonFinite("score"));
    }
    items.sort_by(|a, b| a.0.total_cmp(&b.0));
    let positives = items.iter().filter(|i| i.1 == 1).count();
    let negatives = items.len() - positives;
    if positives == 0 || negatives == 0 {
        return Err(Error::Degenerate("AUC needs both positive and negative labels".into()));
    }
    // Sum of midranks of positives, ranks 1-based.
    let mut rank_sum = 0.0;
    let mut i = 0;
    while i < items.len() {
        let mut j = i;
        while j + 1 < items.len() && items[j + 1].0 == items[i].0 {
            j += 1;
        }
        let midrank = (i + j) as f64 / 2.0 + 1.0;
        rank_sum += midrank * items[i..=j].iter().filter(|x| x.1 == 1).count() as f64;
        i = j + 1;
    }
    let p = positives as f64;
    Ok((rank_sum - p * (p + 1.0) / 2.0) / (p * negatives as f64))
}

#[derive(Debug, Clone, PartialEq)]
pub struct SessionResult {
    pub session_id: u64,
    pub ranked_members: Vec<u64>,
    pub prec_at: BTreeMap<usize, f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Metrics {
    pub prec_at: BTreeMap<usize, f64>,
    /// `None` when no session holds both classes.
    pub auc: Option<f64>,
    pub sessions_evaluated: usize,
    pub per_session: Vec<SessionResult>,
}

impl Metrics {
    pub fn prec(&self, k: usize) -> Option<f64> {
        self.prec_at.get(&k).copied()
    }

    /// `metric,k,value` lines.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("metric,k,value\n");
        for (k, v) in &self.prec_at {
            let _ = writeln!(out, "prec,{k},{v:.6}");
        }
        if let Some(a) = self.auc {
            let _ = writeln!(out, "auc,,{a:.6}");
        }
        let _ = writeln!(out, "sessions,,{}", self.sessions_evaluated);
        out
    }

    pub fn to_table(&self) -> String {
        let mut out = format!("{:<12}{:>10}\n", "metric", "value");
        for (k, v) in &self.prec_at {
            let _ = writeln!(out, "{:<12}{v:>10.4}", format!("prec@{k}"));
        }
        match self.auc {
            Some(a) => {
                let _ = writeln!(out, "{:<12}{a:>10.4}", "auc");
            }
            None => {
                let _ = writeln!(out, "{:<12}{:>10}", "auc", "n/a");
            }
        }
        let _ = writeln!(out, "{:<12}{:>10}", "sessions", self.sessions_evaluated);
        out
    }
}

#[derive(Debug, Clone)]
pub struct ReplayConfig {
    pub ks: Vec<usize>,
    pub denominator: Denominator,
    pub keep_sessions: bool,
}

impl Default for ReplayConfig {
    fn default() -> Self {
        ReplayConfig {
            ks: vec![1, 5, 10, 25],
            denominator: Denominator::MinKN,
            keep_sessions: false,
        }
    }
}

/// Ranking of one session: score descending, member id ascending on ties.
pub fn rank_session<F>(session: &Session, profiles: &ProfileStore, scorer: &F) -> Result<Vec<(u64, u8, f64)>>
where
    F: Fn(&Query, &MemberProfile) -> Result<f64>,
{
    let mut scored = Vec::with_capacity(session.impressions.len());
    for imp in &session.impressions {
        let member = profiles.get(imp.member_id).ok_or(Error::UnresolvedImpression {
            session: session.session_id,
            member: imp.member_id,
        })?;
        let s = scorer(&session.query, member)?;
        if s.is_nan() {
            return Err(Error::NonFinite("score"));
        }
        scored.push((imp.member_id, imp.label, s));
    }
    scored.sort_by(|a, b| match b.2.total_cmp(&a.2) {
        Ordering::Equal => a.0.cmp(&b.0),
        o => o,
    });
    Ok(scored)
}

pub fn replay<F>(scorer: F, sessions: &SessionStore, profiles: &ProfileStore, config: &ReplayConfig) -> Result<Metrics>
where
    F: Fn(&Query, &MemberProfile) -> Result<f64>,
{
    if config.ks.iter().any(|&k| k == 0) {
        return Err(Error::Config("precision cutoff k must be at least 1".into()));
    }
    let mut sums: BTreeMap<usize, f64> = config.ks.iter().map(|&k| (k, 0.0)).collect();
    let (mut pooled_scores, mut pooled_labels) = (Vec::new(), Vec::new());
    let mut per_session = Vec::new();
    let mut evaluated = 0;
    // SessionStore iterates in session_id order, fixing the reduction order.
    for session in sessions.iter() {
        let ranked = rank_session(session, profiles, &scorer)?;
        let labels: Vec<u8> = ranked.iter().map(|r| r.1).collect();
        let mut prec_at = BTreeMap::new();
        for (&k, sum) in sums.iter_mut() {
            let p = precision_at_k(&labels, k, config.denominator)?;
            *sum += p;
            prec_at.insert(k, p);
        }
        let positives = session.positives();
        if positives > 0 && positives < labels.len() {
            for r in &ranked {
                pooled_scores.push(r.2);
                pooled_labels.push(r.1);
            }
        }
        if config.keep_sessions {
            per_session.push(SessionResult {
                session_id: session.session_id,
                ranked_members: ranked.iter().map(|r| r.0).collect(),
                prec_at,
            });
        }
        evaluated += 1;
    }
    let prec_at = sums
        .into_iter()
        .map(|(k, s)| (k, if evaluated == 0 { 0.0 } else { s / evaluated as f64 }))
        .collect();
    let auc = if pooled_scores.is_empty() {
        None
    } else {
        Some(auc(&pooled_scores, &pooled_labels)?)
    };
    Ok(Metrics {
        prec_at,
        auc,
        sessions_evaluated: evaluated,
        per_session,
    })
}

/// Seeded uniform reorder of a session's impressions with positions rewritten `0..n`.
pub fn random_bucket_shuffle(session: &Session, seed: u64) -> Session {
    let mut out = session.clone();
    out.impressions.shuffle(&mut rng(seed));
    for (pos, imp) in out.impressions.iter_mut().enumerate() {
        imp.position = pos as u32;
    }
    out
}
