//! Graded relevance scoring of written essays with dense embeddings.
//!
//! Essays of each relevance level form a cluster in embedding space; the
//! level centroids act as documents and an unseen essay is assigned the level
//! of its most similar centroid. On top of that sit a contrastive fine-tuning
//! loop for a linear adapter over frozen embeddings, a cross-task mode that
//! removes the task-prompt vector from every essay vector, and a QWK-based
//! evaluation harness.
//!
//! Modules:
//!
//! - [`corpus`]: essays, prompts, level indexes, folds and few-shot plans.
//! - [`embedding`]: vectors, the embedding exchange format, the hashing test
//!   encoder, the `/encode` client and similarity kernels.
//! - [`grader`]: centroid models and nearest-centroid scoring.
//! - [`finetune`]: triplet sampling, losses with analytic gradients, AdamW,
//!   plateau scheduling and the training loop.
//! - [`metrics`]: quadratic weighted kappa, confusion matrices, aggregation.
//! - [`par`]: the parallel/sequential execution switch.
//! - [`synthetic`]: generated corpora with known structure, for tests and
//!   benchmarks.

pub mod corpus;
pub mod embedding;
pub mod error;
pub mod finetune;
pub mod grader;
pub mod hashing;
pub mod metrics;
pub mod par;
pub mod rng;
pub mod synthetic;

pub use error::{Error, Result};
