use std::fs;
use std::io::{BufRead, BufReader};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::embedding::Embedding;
use crate::hashing::sha256_hex;
use crate::{Error, Result};

pub const ADAPTER_FORMAT: &str = "relgrade-adapter/1";

#[derive(Serialize, Deserialize)]
struct AdapterHeader {
    dim: usize,
    format: String,
}

/// Square matrix `W` applied to frozen embeddings as `x ↦ W x`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LinearAdapter {
    dim: usize,
    /// Row-major, `dim * dim` entries.
    weights: Vec<f64>,
}

impl LinearAdapter {
    pub fn identity(dim: usize) -> Self {
        let mut weights = vec![0.0; dim * dim];
        for i in 0..dim {
            weights[i * dim + i] = 1.0;
        }
        LinearAdapter { dim, weights }
    }

    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let dim = rows.len();
        if dim == 0 {
            return Err(Error::InvalidArgument("adapter must have dim > 0".into()));
        }
        if let Some(r) = rows.iter().find(|r| r.len() != dim) {
            return Err(Error::Dimension {
                id: None,
                expected: dim,
                found: r.len(),
            });
        }
        let weights: Vec<f64> = rows.into_iter().flatten().collect();
        if weights.iter().any(|w| !w.is_finite()) {
            return Err(Error::NonFinite("adapter weights".into()));
        }
        Ok(LinearAdapter { dim, weights })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn weights(&self) -> &[f64] {
        &self.weights
    }

    pub(crate) fn weights_mut(&mut self) -> &mut [f64] {
        &mut self.weights
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.weights[row * self.dim + col]
    }

    pub fn is_identity(&self) -> bool {
        *self == LinearAdapter::identity(self.dim)
    }

    pub fn apply_slice(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.dim, "adapter dimension mismatch");
        self.weights
            .chunks_exact(self.dim)
            .map(|row| row.iter().zip(x).map(|(w, v)| w * v).sum())
            .collect()
    }

    pub fn apply(&self, x: &Embedding) -> Embedding {
        Embedding::from_finite(self.apply_slice(x))
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec(&AdapterHeader {
            dim: self.dim,
            format: ADAPTER_FORMAT.into(),
        })?;
        out.push(b'\n');
        for row in self.weights.chunks_exact(self.dim) {
            serde_json::to_writer(&mut out, row)?;
            out.push(b'\n');
        }
        Ok(out)
    }

    pub fn content_hash(&self) -> Result<String> {
        Ok(sha256_hex(&self.to_bytes()?))
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let file = fs::File::open(path).map_err(|e| Error::io(path, e))?;
        let mut lines = BufReader::new(file).lines();
        let header: AdapterHeader = match lines.next() {
            Some(line) => serde_json::from_str(&line.map_err(|e| Error::io(path, e))?)
                .map_err(|e| Error::parse(path, 1, format!("bad header: {e}")))?,
            None => return Err(Error::parse(path, 1, "missing header")),
        };
        if header.format != ADAPTER_FORMAT {
            return Err(Error::parse(path, 1, format!("unsupported format `{}`", header.format)));
        }
        let mut rows = Vec::with_capacity(header.dim);
        for (i, line) in lines.enumerate() {
            let line = line.map_err(|e| Error::io(path, e))?;
            if line.trim().is_empty() {
                continue;
            }
            let row: Vec<f64> = serde_json::from_str(&line).map_err(|e| Error::parse(path, i + 2, e.to_string()))?;
            rows.push(row);
        }
        if rows.len() != header.dim {
            return Err(Error::parse(
                path,
                rows.len() + 1,
                format!("expected {} rows, found {}", header.dim, rows.len()),
            ));
        }
        LinearAdapter::from_rows(rows)
    }
}
