use std::path::PathBuf;

use thiserror::Error;

use crate::corpus::EntityId;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("line {line}: field `{field}`: {reason}")]
    Malformed {
        line: usize,
        field: String,
        reason: String,
    },

    #[error("duplicate {what} id {id}")]
    DuplicateKey { what: &'static str, id: u64 },

    #[error("invalid record: {0}")]
    InvalidRecord(String),

    #[error("invalid configuration: {0}")]
    Config(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("graph has no edges")]
    EmptyGraph,

    #[error("isolated vertices: {}", format_ids(.0))]
    IsolatedVertices(Vec<EntityId>),

    #[error("unknown vertex {0}")]
    UnknownVertex(EntityId),

    #[error("no embedding vector for {0}")]
    MissingVector(EntityId),

    #[error("member {0} not found in profile store")]
    UnknownMember(u64),

    #[error("session {session}: member {member} not found in profile store")]
    UnresolvedImpression { session: u64, member: u64 },

    #[error("non-finite value in {0}")]
    NonFinite(&'static str),

    #[error("{0}")]
    Degenerate(String),

    #[error("model file: {0}")]
    Format(String),
}

fn format_ids(ids: &[EntityId]) -> String {
    ids.iter().map(|id| id.to_string()).collect::<Vec<_>>().join(", ")
}

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn malformed(line: usize, field: &str, reason: impl Into<String>) -> Self {
        Error::Malformed {
            line,
            field: field.to_string(),
            reason: reason.into(),
        }
    }
}
