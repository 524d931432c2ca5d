use crate::rng::{fnv1a, splitmix64};
use crate::{Error, Result};

use super::Embedding;

pub const MIN_TEST_DIM: usize = 8;

/// Deterministic feature-hashing encoder used in place of a neural encoder.
///
/// Each whitespace token is hashed with a seeded hash into one of `dim`
/// buckets with a ±1 sign; the accumulated vector is scaled to unit norm.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashingEncoder {
    dim: usize,
    seed: u64,
}

impl HashingEncoder {
    pub fn new(dim: usize, seed: u64) -> Result<Self> {
        if dim < MIN_TEST_DIM {
            return Err(Error::InvalidArgument(format!(
                "test encoder needs dim >= {MIN_TEST_DIM}, got {dim}"
            )));
        }
        Ok(HashingEncoder { dim, seed })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn tag(&self) -> String {
        format!("hashing-test-encoder/dim={}/seed={}", self.dim, self.seed)
    }

    pub fn encode(&self, text: &str) -> Embedding {
        let mut v = vec![0.0; self.dim];
        for token in text.split_whitespace() {
            let h = splitmix64(self.seed ^ fnv1a(token.as_bytes()));
            let bucket = (h % self.dim as u64) as usize;
            v[bucket] += if h >> 63 == 1 { -1.0 } else { 1.0 };
        }
        let n = super::norm(&v);
        if n > 0.0 {
            v.iter_mut().for_each(|x| *x /= n);
        }
        Embedding::from_finite(v)
    }
}

/// # Panics
///
/// If `dim` is below [`MIN_TEST_DIM`].
pub fn test_encode(text: &str, dim: usize, seed: u64) -> Embedding {
    HashingEncoder::new(dim, seed).expect("invalid test encoder dim").encode(text)
}
