use std::collections::HashMap;
use std::fs;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::hashing::sha256_hex;
use crate::{Error, Result};

use super::Embedding;

/// First line of an embedding exchange file.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StoreHeader {
    pub dim: usize,
    pub encoder: String,
}

#[derive(Serialize, Deserialize)]
struct Record<'a> {
    #[serde(borrow)]
    id: std::borrow::Cow<'a, str>,
    vec: Vec<f64>,
}

/// Id → vector map with a fixed dimension and encoder provenance.
///
/// Records keep insertion order, which is also the file order.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingStore {
    dim: usize,
    encoder: String,
    ids: Vec<String>,
    vectors: Vec<Embedding>,
    position: HashMap<String, usize>,
}

impl EmbeddingStore {
    pub fn new(dim: usize, encoder: impl Into<String>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::InvalidArgument("store dim must be > 0".into()));
        }
        Ok(EmbeddingStore {
            dim,
            encoder: encoder.into(),
            ids: Vec::new(),
            vectors: Vec::new(),
            position: HashMap::new(),
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn encoder(&self) -> &str {
        &self.encoder
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn insert(&mut self, id: impl Into<String>, vector: Embedding) -> Result<()> {
        let id = id.into();
        if vector.dim() != self.dim {
            return Err(Error::Dimension {
                id: Some(id),
                expected: self.dim,
                found: vector.dim(),
            });
        }
        if self.position.contains_key(&id) {
            return Err(Error::DuplicateId(id));
        }
        self.position.insert(id.clone(), self.ids.len());
        self.ids.push(id);
        self.vectors.push(vector);
        Ok(())
    }

    pub fn get(&self, id: &str) -> Option<&Embedding> {
        self.position.get(id).map(|&i| &self.vectors[i])
    }

    pub fn require(&self, id: &str) -> Result<&Embedding> {
        self.get(id).ok_or_else(|| Error::MissingEmbedding(id.to_string()))
    }

    pub fn contains(&self, id: &str) -> bool {
        self.position.contains_key(id)
    }

    pub fn iter(&self) -> impl Iterator<Item = (&str, &Embedding)> {
        self.ids.iter().map(String::as_str).zip(&self.vectors)
    }

    /// A new store with `f` applied to every vector.
    pub fn map(&self, encoder: impl Into<String>, mut f: impl FnMut(&str, &Embedding) -> Result<Embedding>) -> Result<Self> {
        let mut out = EmbeddingStore::new(self.dim, encoder)?;
        for (id, v) in self.iter() {
            out.insert(id, f(id, v)?)?;
        }
        Ok(out)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = Vec::new();
        serde_json::to_writer(
            &mut out,
            &StoreHeader {
                dim: self.dim,
                encoder: self.encoder.clone(),
            },
        )?;
        out.push(b'\n');
        for (id, v) in self.iter() {
            serde_json::to_writer(
                &mut out,
                &Record {
                    id: id.into(),
                    vec: v.as_slice().to_vec(),
                },
            )?;
            out.push(b'\n');
        }
        Ok(out)
    }

    /// SHA-256 of the canonical serialization.
    pub fn content_hash(&self) -> Result<String> {
        Ok(sha256_hex(&self.to_bytes()?))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        let bytes = self.to_bytes()?;
        let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
        f.write_all(&bytes).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header_line = match lines.next() {
            Some(line) => line.map_err(|e| Error::io(path, e))?,
            None => return Err(Error::parse(path, 1, "missing header")),
        };
        let header: StoreHeader = serde_json::from_str(&header_line)
            .map_err(|e| Error::parse(path, 1, format!("bad header: {e}")))?;
        let mut store = EmbeddingStore::new(header.dim, header.encoder)
            .map_err(|e| Error::parse(path, 1, e.to_string()))?;
        for (i, line) in lines.enumerate() {
            let lineno = i + 2;
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let record: Record =
                serde_json::from_str(&line).map_err(|e| Error::parse(path, lineno, e.to_string()))?;
            let id = record.id.into_owned();
            if record.vec.len() != store.dim {
                return Err(Error::Dimension {
                    id: Some(id),
                    expected: store.dim,
                    found: record.vec.len(),
                });
            }
            let v = Embedding::new(record.vec).map_err(|_| Error::NonFinite(format!("vector `{id}`")))?;
            store
                .insert(id, v)
                .map_err(|e| Error::parse(path, lineno, e.to_string()))?;
        }
        Ok(store)
    }
}

/// Load the store at `path`; shorthand for [`EmbeddingStore::load`].
pub fn load_store(path: &Path) -> Result<EmbeddingStore> {
    EmbeddingStore::load(path)
}
