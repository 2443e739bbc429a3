use std::collections::BTreeSet;
use std::fmt;
use std::str::FromStr;

use super::EmbeddingTable;
use crate::corpus::EntityId;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PoolMode {
    Mean,
    Max,
}

impl fmt::Display for PoolMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            PoolMode::Mean => "mean",
            PoolMode::Max => "max",
        })
    }
}

impl FromStr for PoolMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "mean" => Ok(PoolMode::Mean),
            "max" => Ok(PoolMode::Max),
            other => Err(Error::Config(format!("unknown pooling mode `{other}`"))),
        }
    }
}

/// A pooled bag vector and the fraction of the bag found in the table.
#[derive(Debug, Clone, PartialEq)]
pub struct Pooled {
    pub vector: Vec<f64>,
    pub coverage: f64,
}

/// Pools the vectors of the bag members present in `table`. An effective bag
/// of size zero yields the zero vector with coverage 0.
pub fn pool(bag: &BTreeSet<EntityId>, table: &EmbeddingTable, mode: PoolMode) -> Pooled {
    let dim = table.dim();
    let mut acc = vec![0.0; dim];
    let mut found = 0usize;
    for id in bag {
        let Some(v) = table.get(id) else { continue };
        if found == 0 {
            acc.copy_from_slice(v);
        } else {
            match mode {
                PoolMode::Mean => acc.iter_mut().zip(v).for_each(|(a, x)| *a += x),
                PoolMode::Max => acc.iter_mut().zip(v).for_each(|(a, x)| *a = a.max(*x)),
            }
        }
        found += 1;
    }
    if found == 0 {
        return Pooled {
            vector: acc,
            coverage: 0.0,
        };
    }
    if mode == PoolMode::Mean && found > 1 {
        let n = found as f64;
        acc.iter_mut().for_each(|a| *a /= n);
    }
    Pooled {
        vector: acc,
        coverage: found as f64 / bag.len() as f64,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Similarity {
    Dot,
    Cosine,
    Hadamard,
}

impl fmt::Display for Similarity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Similarity::Dot => "dot",
            Similarity::Cosine => "cosine",
            Similarity::Hadamard => "hadamard",
        })
    }
}

impl FromStr for Similarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "dot" => Ok(Similarity::Dot),
            "cosine" => Ok(Similarity::Cosine),
            "hadamard" => Ok(Similarity::Hadamard),
            other => Err(Error::Config(format!("unknown similarity `{other}`"))),
        }
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// Cosine similarity, 0 when either vector has zero norm.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = dot(a, a).sqrt();
    let nb = dot(b, b).sqrt();
    if na == 0.0 || nb == 0.0 {
        0.0
    } else {
        dot(a, b) / (na * nb)
    }
}

/// Similarity features between a member vector and a query vector: a single
/// value for dot and cosine, the element-wise product for Hadamard.
pub fn similarity(m: &[f64], q: &[f64], measure: Similarity) -> Result<Vec<f64>> {
    if m.len() != q.len() {
        return Err(Error::Shape(format!(
            "similarity of vectors with lengths {} and {}",
            m.len(),
            q.len()
        )));
    }
    Ok(match measure {
        Similarity::Dot => vec![dot(m, q)],
        Similarity::Cosine => vec![cosine(m, q)],
        Similarity::Hadamard => m.iter().zip(q).map(|(a, b)| a * b).collect(),
    })
}
