//! Corpus data model: member profiles, queries and labeled search sessions.

mod io;
mod synth;

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use crate::error::{Error, Result};

pub use io::{load_profiles, load_sessions, read_profiles, read_sessions, save_profiles, save_sessions, write_profiles, write_sessions};
pub use synth::{synth_corpus, SynthConfig, SynthCorpus, SynthOracle};

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub enum Namespace {
    Skill,
    Title,
    Company,
}

impl Namespace {
    pub const ALL: [Namespace; 3] = [Namespace::Skill, Namespace::Title, Namespace::Company];

    pub fn as_str(self) -> &'static str {
        match self {
            Namespace::Skill => "skill",
            Namespace::Title => "title",
            Namespace::Company => "company",
        }
    }
}

impl fmt::Display for Namespace {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for Namespace {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "skill" | "skills" => Ok(Namespace::Skill),
            "title" | "titles" => Ok(Namespace::Title),
            "company" | "companies" => Ok(Namespace::Company),
            other => Err(Error::Config(format!("unknown namespace `{other}`"))),
        }
    }
}

/// A standardized entity id, scoped to its namespace.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct EntityId {
    pub namespace: Namespace,
    pub id: u64,
}

impl EntityId {
    pub const fn new(namespace: Namespace, id: u64) -> Self {
        EntityId { namespace, id }
    }

    pub const fn skill(id: u64) -> Self {
        EntityId::new(Namespace::Skill, id)
    }

    pub const fn title(id: u64) -> Self {
        EntityId::new(Namespace::Title, id)
    }

    pub const fn company(id: u64) -> Self {
        EntityId::new(Namespace::Company, id)
    }
}

impl fmt::Display for EntityId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}:{}", self.namespace, self.id)
    }
}

/// Builds a namespace-homogeneous entity set from raw ids.
pub fn entity_set(namespace: Namespace, ids: impl IntoIterator<Item = u64>) -> BTreeSet<EntityId> {
    ids.into_iter().map(|id| EntityId::new(namespace, id)).collect()
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct MemberProfile {
    pub member_id: u64,
    skills: BTreeSet<EntityId>,
    titles: BTreeSet<EntityId>,
    companies: BTreeSet<EntityId>,
    pub headline: String,
}

impl MemberProfile {
    pub fn new(
        member_id: u64,
        skills: impl IntoIterator<Item = u64>,
        titles: impl IntoIterator<Item = u64>,
        companies: impl IntoIterator<Item = u64>,
        headline: impl Into<String>,
    ) -> Self {
        MemberProfile {
            member_id,
            skills: entity_set(Namespace::Skill, skills),
            titles: entity_set(Namespace::Title, titles),
            companies: entity_set(Namespace::Company, companies),
            headline: headline.into(),
        }
    }

    pub fn entities(&self, namespace: Namespace) -> &BTreeSet<EntityId> {
        match namespace {
            Namespace::Skill => &self.skills,
            Namespace::Title => &self.titles,
            Namespace::Company => &self.companies,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct Query {
    pub keywords: String,
    facet_skills: BTreeSet<EntityId>,
    facet_titles: BTreeSet<EntityId>,
    facet_companies: BTreeSet<EntityId>,
}

impl Query {
    pub fn new(
        keywords: impl Into<String>,
        facet_skills: impl IntoIterator<Item = u64>,
        facet_titles: impl IntoIterator<Item = u64>,
        facet_companies: impl IntoIterator<Item = u64>,
    ) -> Self {
        Query {
            keywords: keywords.into(),
            facet_skills: entity_set(Namespace::Skill, facet_skills),
            facet_titles: entity_set(Namespace::Title, facet_titles),
            facet_companies: entity_set(Namespace::Company, facet_companies),
        }
    }

    pub fn facets(&self, namespace: Namespace) -> &BTreeSet<EntityId> {
        match namespace {
            Namespace::Skill => &self.facet_skills,
            Namespace::Title => &self.facet_titles,
            Namespace::Company => &self.facet_companies,
        }
    }

    pub fn has_facets(&self) -> bool {
        Namespace::ALL.iter().any(|ns| !self.facets(*ns).is_empty())
    }

    /// A query must carry keywords or at least one facet.
    pub fn is_constrained(&self) -> bool {
        !self.keywords.trim().is_empty() || self.has_facets()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Impression {
    pub member_id: u64,
    pub label: u8,
    pub position: u32,
}

impl Impression {
    pub fn is_positive(&self) -> bool {
        self.label == 1
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Session {
    pub session_id: u64,
    pub timestamp: i64,
    pub query: Query,
    pub impressions: Vec<Impression>,
}

impl Session {
    /// Checks the session invariants: nonempty, binary labels, distinct members, constrained query.
    pub fn validate(&self) -> Result<()> {
        if self.impressions.is_empty() {
            return Err(Error::InvalidRecord(format!(
                "session {} has no impressions",
                self.session_id
            )));
        }
        let mut seen = BTreeSet::new();
        for imp in &self.impressions {
            if imp.label > 1 {
                return Err(Error::InvalidRecord(format!(
                    "session {}: label {} is not binary",
                    self.session_id, imp.label
                )));
            }
            if !seen.insert(imp.member_id) {
                return Err(Error::InvalidRecord(format!(
                    "session {}: member {} appears twice",
                    self.session_id, imp.member_id
                )));
            }
        }
        if !self.query.is_constrained() {
            return Err(Error::InvalidRecord(format!(
                "session {}: query has neither keywords nor facets",
                self.session_id
            )));
        }
        Ok(())
    }

    pub fn positives(&self) -> usize {
        self.impressions.iter().filter(|i| i.is_positive()).count()
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct ProfileStore {
    profiles: BTreeMap<u64, MemberProfile>,
}

impl ProfileStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, profile: MemberProfile) -> Result<()> {
        if self.profiles.contains_key(&profile.member_id) {
            return Err(Error::DuplicateKey {
                what: "member",
                id: profile.member_id,
            });
        }
        self.profiles.insert(profile.member_id, profile);
        Ok(())
    }

    pub fn get(&self, member_id: u64) -> Option<&MemberProfile> {
        self.profiles.get(&member_id)
    }

    pub fn require(&self, member_id: u64) -> Result<&MemberProfile> {
        self.get(member_id).ok_or(Error::UnknownMember(member_id))
    }

    pub fn len(&self) -> usize {
        self.profiles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.profiles.is_empty()
    }

    /// Profiles in ascending member id order.
    pub fn iter(&self) -> impl Iterator<Item = &MemberProfile> {
        self.profiles.values()
    }

    pub fn ids(&self) -> impl Iterator<Item = u64> + '_ {
        self.profiles.keys().copied()
    }
}

impl FromIterator<MemberProfile> for Result<ProfileStore> {
    fn from_iter<I: IntoIterator<Item = MemberProfile>>(iter: I) -> Self {
        let mut store = ProfileStore::new();
        for p in iter {
            store.insert(p)?;
        }
        Ok(store)
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SessionStore {
    sessions: BTreeMap<u64, Session>,
}

impl SessionStore {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn insert(&mut self, session: Session) -> Result<()> {
        session.validate()?;
        if self.sessions.contains_key(&session.session_id) {
            return Err(Error::DuplicateKey {
                what: "session",
                id: session.session_id,
            });
        }
        self.sessions.insert(session.session_id, session);
        Ok(())
    }

    pub fn get(&self, session_id: u64) -> Option<&Session> {
        self.sessions.get(&session_id)
    }

    pub fn len(&self) -> usize {
        self.sessions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.sessions.is_empty()
    }

    /// Sessions in ascending session id order.
    pub fn iter(&self) -> impl Iterator<Item = &Session> {
        self.sessions.values()
    }

    pub fn positive_count(&self) -> usize {
        self.iter().map(Session::positives).sum()
    }

    pub fn impression_count(&self) -> usize {
        self.iter().map(|s| s.impressions.len()).sum()
    }
}

impl FromIterator<Session> for Result<SessionStore> {
    fn from_iter<I: IntoIterator<Item = Session>>(iter: I) -> Self {
        let mut store = SessionStore::new();
        for s in iter {
            store.insert(s)?;
        }
        Ok(store)
    }
}

/// Splits sessions by time: ascending `(timestamp, session_id)`, the first
/// `ceil(train_fraction * n)` go to train and the rest to test.
pub fn time_split(sessions: &SessionStore, train_fraction: f64) -> Result<(SessionStore, SessionStore)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(Error::Config(format!(
            "train fraction must lie in (0, 1), got {train_fraction}"
        )));
    }
    if sessions.is_empty() {
        return Err(Error::Config("cannot split an empty session store".into()));
    }
    let mut ordered: Vec<&Session> = sessions.iter().collect();
    ordered.sort_by_key(|s| (s.timestamp, s.session_id));
    let n_train = ((train_fraction * ordered.len() as f64).ceil() as usize).min(ordered.len());
    let mut train = SessionStore::new();
    let mut test = SessionStore::new();
    for (i, s) in ordered.into_iter().enumerate() {
        let target = if i < n_train { &mut train } else { &mut test };
        target.sessions.insert(s.session_id, s.clone());
    }
    Ok((train, test))
}
