//! Dense vectors, similarity kernels and embedding sources.
//!
//! All arithmetic is `f64`; stored vectors are never normalized implicitly.

mod encoder;
mod remote;
mod store;

use std::ops::Deref;

use serde::{Deserialize, Serialize};

use crate::{Error, Result};

pub use encoder::{test_encode, HashingEncoder, MIN_TEST_DIM};
pub use remote::{remote_encode, EncodeRequest, EncodeResponse, EncodedVector, RemoteEncoded, TextItem};
pub use store::{load_store, EmbeddingStore, StoreHeader};

/// Store id under which a task's prompt vector is kept.
pub fn prompt_vector_id(task_id: &str) -> String {
    format!("prompt::{task_id}")
}

/// A finite dense vector.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "Vec<f64>", into = "Vec<f64>")]
pub struct Embedding(Vec<f64>);

impl Embedding {
    pub fn new(values: Vec<f64>) -> Result<Self> {
        if values.is_empty() {
            return Err(Error::InvalidArgument("embedding must have dim > 0".into()));
        }
        if let Some(i) = values.iter().position(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("component {i}")));
        }
        Ok(Embedding(values))
    }

    /// Wrap values produced by arithmetic on finite embeddings.
    pub(crate) fn from_finite(values: Vec<f64>) -> Self {
        debug_assert!(values.iter().all(|v| v.is_finite()));
        Embedding(values)
    }

    pub fn zeros(dim: usize) -> Self {
        Embedding(vec![0.0; dim])
    }

    pub fn dim(&self) -> usize {
        self.0.len()
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }

    pub fn norm(&self) -> f64 {
        norm(&self.0)
    }

    pub fn sub(&self, other: &Embedding) -> Embedding {
        Embedding(sub(&self.0, &other.0))
    }

    /// Unit-length copy; the zero vector stays zero.
    pub fn normalized(&self) -> Embedding {
        let n = self.norm();
        if n == 0.0 {
            self.clone()
        } else {
            Embedding(self.0.iter().map(|v| v / n).collect())
        }
    }

    pub fn scaled(&self, factor: f64) -> Embedding {
        Embedding(self.0.iter().map(|v| v * factor).collect())
    }
}

impl Deref for Embedding {
    type Target = [f64];

    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl TryFrom<Vec<f64>> for Embedding {
    type Error = Error;

    fn try_from(values: Vec<f64>) -> Result<Self> {
        Embedding::new(values)
    }
}

impl From<Embedding> for Vec<f64> {
    fn from(e: Embedding) -> Vec<f64> {
        e.0
    }
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dimension mismatch");
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

pub fn sub(a: &[f64], b: &[f64]) -> Vec<f64> {
    assert_eq!(a.len(), b.len(), "dimension mismatch");
    a.iter().zip(b).map(|(x, y)| x - y).collect()
}

/// Similarity used both for centroid scoring and for training losses.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Similarity {
    #[default]
    Cosine,
    /// Negated Euclidean distance, so that larger is always more similar.
    Euclidean,
}

impl Similarity {
    pub fn apply(self, a: &[f64], b: &[f64]) -> f64 {
        match self {
            Similarity::Cosine => cosine(a, b),
            Similarity::Euclidean => -euclidean_distance(a, b),
        }
    }

    pub fn name(self) -> &'static str {
        match self {
            Similarity::Cosine => "cosine",
            Similarity::Euclidean => "euclidean",
        }
    }
}

impl std::str::FromStr for Similarity {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "cosine" => Ok(Similarity::Cosine),
            "euclidean" => Ok(Similarity::Euclidean),
            other => Err(Error::InvalidArgument(format!("unknown similarity `{other}`"))),
        }
    }
}

impl std::fmt::Display for Similarity {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

pub fn similarity(kind: Similarity, a: &[f64], b: &[f64]) -> f64 {
    kind.apply(a, b)
}

/// Cosine similarity clamped to [-1, 1]. A zero operand gives 0.
pub fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let na = norm(a);
    let nb = norm(b);
    if na == 0.0 || nb == 0.0 {
        return 0.0;
    }
    (dot(a, b) / (na * nb)).clamp(-1.0, 1.0)
}

pub fn euclidean_distance(a: &[f64], b: &[f64]) -> f64 {
    assert_eq!(a.len(), b.len(), "dimension mismatch");
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}
