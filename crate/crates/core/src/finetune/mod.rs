//! Contrastive fine-tuning of a linear adapter over frozen embeddings.
//!
//! Training triplets are drawn by relevance level: the positive shares the
//! anchor's level, negatives come from other levels according to the
//! sampling [`Strategy`]. Losses are PSCE (one negative per term) or InfoNCE
//! (all of an anchor's negatives in one term), with analytic gradients with
//! respect to the adapter matrix. Optimization uses AdamW with a
//! reduce-on-plateau schedule driven by validation QWK and early stopping.

mod adapter;
mod loss;
mod optim;
mod sampling;
mod schedule;
mod train;

pub use adapter::{LinearAdapter, ADAPTER_FORMAT};
pub use loss::{
    infonce_from_sims, infonce_loss, loss_gradient, psce_from_sims, psce_loss, similarity_gradient, LossKind,
    UnitGradient,
};
pub use optim::{optimizer_step, AdamState, AdamW};
pub use sampling::{eligible_negative_levels, sample_triplets, training_units, Strategy, Triplet, TrainingUnit};
pub use schedule::{EarlyStopping, PlateauScheduler};
pub use train::{
    train, train_cross_task, CrossTaskSource, EpochRecord, StopReason, TrainConfig, TrainReport,
};
