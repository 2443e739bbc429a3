use std::collections::BTreeMap;
use std::fmt;
use std::fmt::Write as _;
use std::io::{BufRead, BufReader, Read};
use std::str::FromStr;

use crate::corpus::{EntityId, Namespace};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EmbeddingKind {
    FirstOrder,
    SecondOrderVertex,
    SecondOrderContext,
    Concat,
    Supervised,
}

impl EmbeddingKind {
    pub fn as_str(self) -> &'static str {
        match self {
            EmbeddingKind::FirstOrder => "first_order",
            EmbeddingKind::SecondOrderVertex => "second_order_vertex",
            EmbeddingKind::SecondOrderContext => "second_order_context",
            EmbeddingKind::Concat => "concat",
            EmbeddingKind::Supervised => "supervised",
        }
    }
}

impl fmt::Display for EmbeddingKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for EmbeddingKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Ok(match s {
            "first_order" => EmbeddingKind::FirstOrder,
            "second_order_vertex" => EmbeddingKind::SecondOrderVertex,
            "second_order_context" => EmbeddingKind::SecondOrderContext,
            "concat" => EmbeddingKind::Concat,
            "supervised" => EmbeddingKind::Supervised,
            other => return Err(Error::Format(format!("unknown embedding kind `{other}`"))),
        })
    }
}

/// Entity id → dense vector of fixed dimension, for a single namespace.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingTable {
    namespace: Namespace,
    dim: usize,
    kind: EmbeddingKind,
    vectors: BTreeMap<EntityId, Vec<f64>>,
}

impl EmbeddingTable {
    pub fn new(namespace: Namespace, dim: usize, kind: EmbeddingKind) -> Self {
        EmbeddingTable {
            namespace,
            dim,
            kind,
            vectors: BTreeMap::new(),
        }
    }

    pub fn insert(&mut self, id: EntityId, vector: Vec<f64>) -> Result<()> {
        if id.namespace != self.namespace {
            return Err(Error::Shape(format!(
                "{id} inserted into a {} table",
                self.namespace
            )));
        }
        if vector.len() != self.dim {
            return Err(Error::Shape(format!(
                "vector for {id} has length {}, table dim is {}",
                vector.len(),
                self.dim
            )));
        }
        if vector.iter().any(|v| !v.is_finite()) {
            return Err(Error::NonFinite("embedding vector"));
        }
        self.vectors.insert(id, vector);
        Ok(())
    }

    pub fn namespace(&self) -> Namespace {
        self.namespace
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn kind(&self) -> EmbeddingKind {
        self.kind
    }

    pub fn get(&self, id: &EntityId) -> Option<&[f64]> {
        self.vectors.get(id).map(Vec::as_slice)
    }

    pub fn require(&self, id: EntityId) -> Result<&[f64]> {
        self.get(&id).ok_or(Error::MissingVector(id))
    }

    pub fn len(&self) -> usize {
        self.vectors.len()
    }

    pub fn is_empty(&self) -> bool {
        self.vectors.is_empty()
    }

    pub fn ids(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.vectors.keys().copied()
    }

    pub fn iter(&self) -> impl Iterator<Item = (EntityId, &[f64])> {
        self.vectors.iter().map(|(k, v)| (*k, v.as_slice()))
    }

    /// Interchange text: a `dim=<d> kind=<kind>` header, then `id v1 .. vd`
    /// per entity in ascending id order, 9 significant digits.
    pub fn to_text(&self) -> String {
        let mut out = format!("dim={} kind={}\n", self.dim, self.kind);
        for (id, v) in &self.vectors {
            let _ = write!(out, "{}", id.id);
            for x in v {
                let _ = write!(out, " {}", fmt_float(*x));
            }
            out.push('\n');
        }
        out
    }

    pub fn read_text(namespace: Namespace, reader: impl Read) -> Result<Self> {
        let mut lines = BufReader::new(reader).lines().enumerate();
        let header = match lines.next() {
            Some((_, line)) => line.map_err(|e| Error::io("<embeddings>", e))?,
            None => return Err(Error::Format("embedding file is empty".into())),
        };
        let mut dim = None;
        let mut kind = None;
        for token in header.split_whitespace() {
            if let Some(v) = token.strip_prefix("dim=") {
                dim = Some(v.parse::<usize>().map_err(|e| Error::malformed(1, "dim", e.to_string()))?);
            } else if let Some(v) = token.strip_prefix("kind=") {
                kind = Some(v.parse::<EmbeddingKind>()?);
            } else {
                return Err(Error::malformed(1, "header", format!("unexpected token `{token}`")));
            }
        }
        let (Some(dim), Some(kind)) = (dim, kind) else {
            return Err(Error::malformed(1, "header", "expected `dim=<d> kind=<kind>`"));
        };
        let mut table = EmbeddingTable::new(namespace, dim, kind);
        for (idx, line) in lines {
            let line_no = idx + 1;
            let line = line.map_err(|e| Error::io("<embeddings>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let mut parts = line.split_whitespace();
            let id: u64 = parts
                .next()
                .expect("nonempty line")
                .parse()
                .map_err(|e: std::num::ParseIntError| Error::malformed(line_no, "entity_id", e.to_string()))?;
            let vector = parts
                .map(|p| p.parse::<f64>())
                .collect::<std::result::Result<Vec<_>, _>>()
                .map_err(|e| Error::malformed(line_no, "vector", e.to_string()))?;
            table
                .insert(EntityId::new(namespace, id), vector)
                .map_err(|e| Error::malformed(line_no, "vector", e.to_string()))?;
        }
        Ok(table)
    }
}

/// Nine significant digits in scientific notation.
pub fn fmt_float(x: f64) -> String {
    format!("{x:.8e}")
}

/// Concatenates first-order and second-order vertex vectors, first-order components first.
pub fn concat_embeddings(first: &EmbeddingTable, second: &EmbeddingTable) -> Result<EmbeddingTable> {
    if first.namespace != second.namespace {
        return Err(Error::Shape("tables belong to different namespaces".into()));
    }
    if !first.vectors.keys().eq(second.vectors.keys()) {
        return Err(Error::Shape("tables cover different entity sets".into()));
    }
    let mut out = EmbeddingTable::new(first.namespace, first.dim + second.dim, EmbeddingKind::Concat);
    for ((id, a), b) in first.vectors.iter().zip(second.vectors.values()) {
        let mut v = Vec::with_capacity(out.dim);
        v.extend_from_slice(a);
        v.extend_from_slice(b);
        out.vectors.insert(*id, v);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn table(dim: usize, entries: &[(u64, &[f64])]) -> EmbeddingTable {
        let mut t = EmbeddingTable::new(Namespace::Skill, dim, EmbeddingKind::FirstOrder);
        for (id, v) in entries {
            t.insert(EntityId::skill(*id), v.to_vec()).unwrap();
        }
        t
    }

    #[test]
    fn concat_puts_first_order_first() {
        let a = table(2, &[(1, &[1.0, 0.0])]);
        let b = table(2, &[(1, &[0.0, 2.0])]);
        let c = concat_embeddings(&a, &b).unwrap();
        assert_eq!(c.dim(), 4);
        assert_eq!(c.kind(), EmbeddingKind::Concat);
        assert_eq!(c.get(&EntityId::skill(1)).unwrap(), &[1.0, 0.0, 0.0, 2.0]);
    }

    #[test]
    fn concat_edge_cases() {
        let empty = concat_embeddings(&table(2, &[]), &table(3, &[])).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.dim(), 5);
        let a = table(2, &[(1, &[1.0, 0.0])]);
        let b = table(2, &[(2, &[0.0, 2.0])]);
        assert!(concat_embeddings(&a, &b).is_err());
    }

    #[test]
    fn insert_checks_shape() {
        let mut t = table(2, &[]);
        assert!(t.insert(EntityId::skill(1), vec![1.0]).is_err());
        assert!(t.insert(EntityId::title(1), vec![1.0, 2.0]).is_err());
        assert!(t.insert(EntityId::skill(1), vec![f64::NAN, 2.0]).is_err());
    }

    #[test]
    fn text_format() {
        let t = table(2, &[(7, &[0.5, -1.25]), (3, &[1.0, 1e-10])]);
        let text = t.to_text();
        assert_eq!(
            text,
            "dim=2 kind=first_order\n3 1.00000000e0 1.00000000e-10\n7 5.00000000e-1 -1.25000000e0\n"
        );
        let back = EmbeddingTable::read_text(Namespace::Skill, text.as_bytes()).unwrap();
        assert_eq!(back, t);
        assert!(EmbeddingTable::read_text(Namespace::Skill, "dim=2\n".as_bytes()).is_err());
        assert!(EmbeddingTable::read_text(Namespace::Skill, "dim=2 kind=concat\n1 0.5\n".as_bytes()).is_err());
    }
}
