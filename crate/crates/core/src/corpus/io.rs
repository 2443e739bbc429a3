//! Line-delimited JSON interchange for profiles and sessions.

use std::fs;
use std::io::{BufRead, BufReader, Read, Write};
use std::path::Path;

use serde::Serialize;
use serde_json::{Map, Value};

use super::{Impression, MemberProfile, Namespace, ProfileStore, Query, Session, SessionStore};
use crate::error::{Error, Result};

const PROFILE_FIELDS: [&str; 5] = ["member_id", "skills", "titles", "companies", "headline"];
const SESSION_FIELDS: [&str; 4] = ["session_id", "timestamp", "query", "impressions"];
const QUERY_FIELDS: [&str; 4] = ["keywords", "facet_skills", "facet_titles", "facet_companies"];
const IMPRESSION_FIELDS: [&str; 3] = ["member_id", "label", "position"];

#[derive(Serialize)]
struct ProfileRecord<'a> {
    member_id: u64,
    skills: Vec<u64>,
    titles: Vec<u64>,
    companies: Vec<u64>,
    headline: &'a str,
}

#[derive(Serialize)]
struct QueryRecord<'a> {
    keywords: &'a str,
    facet_skills: Vec<u64>,
    facet_titles: Vec<u64>,
    facet_companies: Vec<u64>,
}

#[derive(Serialize)]
struct ImpressionRecord {
    member_id: u64,
    label: u8,
    position: u32,
}

#[derive(Serialize)]
struct SessionRecord<'a> {
    session_id: u64,
    timestamp: i64,
    query: QueryRecord<'a>,
    impressions: Vec<ImpressionRecord>,
}

fn raw_ids(set: &std::collections::BTreeSet<super::EntityId>) -> Vec<u64> {
    set.iter().map(|e| e.id).collect()
}

pub fn load_profiles(path: impl AsRef<Path>) -> Result<ProfileStore> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_profiles(file).map_err(|e| with_path(e, path))
}

pub fn load_sessions(path: impl AsRef<Path>) -> Result<SessionStore> {
    let path = path.as_ref();
    let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
    read_sessions(file).map_err(|e| with_path(e, path))
}

fn with_path(err: Error, path: &Path) -> Error {
    match err {
        Error::Io { source, .. } => Error::io(path, source),
        other => other,
    }
}

pub fn read_profiles(reader: impl Read) -> Result<ProfileStore> {
    let mut store = ProfileStore::new();
    for_each_record(reader, |line, obj| {
        let profile = parse_profile(line, obj)?;
        store.insert(profile)
    })?;
    Ok(store)
}

pub fn read_sessions(reader: impl Read) -> Result<SessionStore> {
    let mut store = SessionStore::new();
    for_each_record(reader, |line, obj| {
        let session = parse_session(line, obj)?;
        store.insert(session).map_err(|e| match e {
            Error::InvalidRecord(reason) => Error::malformed(line, "impressions", reason),
            other => other,
        })
    })?;
    Ok(store)
}

pub fn write_profiles(store: &ProfileStore, mut out: impl Write) -> std::io::Result<()> {
    for p in store.iter() {
        let record = ProfileRecord {
            member_id: p.member_id,
            skills: raw_ids(p.entities(Namespace::Skill)),
            titles: raw_ids(p.entities(Namespace::Title)),
            companies: raw_ids(p.entities(Namespace::Company)),
            headline: &p.headline,
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn write_sessions(store: &SessionStore, mut out: impl Write) -> std::io::Result<()> {
    for s in store.iter() {
        let record = SessionRecord {
            session_id: s.session_id,
            timestamp: s.timestamp,
            query: QueryRecord {
                keywords: &s.query.keywords,
                facet_skills: raw_ids(s.query.facets(Namespace::Skill)),
                facet_titles: raw_ids(s.query.facets(Namespace::Title)),
                facet_companies: raw_ids(s.query.facets(Namespace::Company)),
            },
            impressions: s
                .impressions
                .iter()
                .map(|i| ImpressionRecord {
                    member_id: i.member_id,
                    label: i.label,
                    position: i.position,
                })
                .collect(),
        };
        serde_json::to_writer(&mut out, &record)?;
        out.write_all(b"\n")?;
    }
    Ok(())
}

pub fn save_profiles(store: &ProfileStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_profiles(store, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

pub fn save_sessions(store: &SessionStore, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut buf = Vec::new();
    write_sessions(store, &mut buf).map_err(|e| Error::io(path, e))?;
    fs::write(path, buf).map_err(|e| Error::io(path, e))
}

fn for_each_record(reader: impl Read, mut f: impl FnMut(usize, &Map<String, Value>) -> Result<()>) -> Result<()> {
    for (idx, line) in BufReader::new(reader).lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::io("<input>", e))?;
        if line.trim().is_empty() {
            continue;
        }
        let value: Value = serde_json::from_str(&line)
            .map_err(|e| Error::malformed(line_no, "<record>", e.to_string()))?;
        let Value::Object(obj) = value else {
            return Err(Error::malformed(line_no, "<record>", "expected a JSON object"));
        };
        f(line_no, &obj)?;
    }
    Ok(())
}

fn check_fields(line: usize, obj: &Map<String, Value>, expected: &[&str], scope: &str) -> Result<()> {
    for key in obj.keys() {
        if !expected.contains(&key.as_str()) {
            return Err(Error::malformed(line, &qualified(scope, key), "unknown field"));
        }
    }
    for field in expected {
        if !obj.contains_key(*field) {
            return Err(Error::malformed(line, &qualified(scope, field), "missing field"));
        }
    }
    Ok(())
}

fn qualified(scope: &str, field: &str) -> String {
    if scope.is_empty() {
        field.to_string()
    } else {
        format!("{scope}.{field}")
    }
}

fn get_u64(line: usize, obj: &Map<String, Value>, field: &str) -> Result<u64> {
    obj[field]
        .as_u64()
        .ok_or_else(|| Error::malformed(line, field, "expected a non-negative integer"))
}

fn get_str<'a>(line: usize, obj: &'a Map<String, Value>, field: &str) -> Result<&'a str> {
    obj[field]
        .as_str()
        .ok_or_else(|| Error::malformed(line, field, "expected a string"))
}

fn get_ids(line: usize, obj: &Map<String, Value>, field: &str) -> Result<Vec<u64>> {
    let arr = obj[field]
        .as_array()
        .ok_or_else(|| Error::malformed(line, field, "expected an array of ids"))?;
    arr.iter()
        .map(|v| {
            v.as_u64()
                .ok_or_else(|| Error::malformed(line, field, "ids must be non-negative integers"))
        })
        .collect()
}

fn parse_profile(line: usize, obj: &Map<String, Value>) -> Result<MemberProfile> {
    check_fields(line, obj, &PROFILE_FIELDS, "")?;
    Ok(MemberProfile::new(
        get_u64(line, obj, "member_id")?,
        get_ids(line, obj, "skills")?,
        get_ids(line, obj, "titles")?,
        get_ids(line, obj, "companies")?,
        get_str(line, obj, "headline")?,
    ))
}

fn parse_session(line: usize, obj: &Map<String, Value>) -> Result<Session> {
    check_fields(line, obj, &SESSION_FIELDS, "")?;
    let session_id = get_u64(line, obj, "session_id")?;
    let timestamp = obj["timestamp"]
        .as_i64()
        .ok_or_else(|| Error::malformed(line, "timestamp", "expected an integer"))?;

    let Value::Object(q) = &obj["query"] else {
        return Err(Error::malformed(line, "query", "expected an object"));
    };
    check_fields(line, q, &QUERY_FIELDS, "query")?;
    let query = Query::new(
        get_str(line, q, "keywords")?,
        get_ids(line, q, "facet_skills")?,
        get_ids(line, q, "facet_titles")?,
        get_ids(line, q, "facet_companies")?,
    );

    let imps = obj["impressions"]
        .as_array()
        .ok_or_else(|| Error::malformed(line, "impressions", "expected an array"))?;
    let mut impressions = Vec::with_capacity(imps.len());
    for imp in imps {
        let Value::Object(imp) = imp else {
            return Err(Error::malformed(line, "impressions", "expected objects"));
        };
        check_fields(line, imp, &IMPRESSION_FIELDS, "impressions")?;
        let label = get_u64(line, imp, "label")?;
        if label > 1 {
            return Err(Error::malformed(line, "label", "label must be 0 or 1"));
        }
        let position = u32::try_from(get_u64(line, imp, "position")?)
            .map_err(|_| Error::malformed(line, "position", "position out of range"))?;
        impressions.push(Impression {
            member_id: get_u64(line, imp, "member_id")?,
            label: label as u8,
            position,
        });
    }
    Ok(Session {
        session_id,
        timestamp,
        query,
        impressions,
    })
}
