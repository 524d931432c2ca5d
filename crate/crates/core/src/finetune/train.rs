//! The fine-tuning loop.

use std::collections::{BTreeMap, HashSet};

use serde::{Deserialize, Serialize};

use crate::corpus::{Level, LevelIndex};
use crate::embedding::{Embedding, EmbeddingStore, Similarity};
use crate::grader::{fit_unrecorded, score_batch, FitOptions};
use crate::metrics::qwk;
use crate::par::{self, Execution};
use crate::{Error, Result};

use super::loss::{accumulate, unit_gradient};
use super::{optimizer_step, sample_triplets, training_units, AdamState, AdamW, EarlyStopping, LinearAdapter, LossKind, PlateauScheduler, Strategy};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainConfig {
    pub loss: LossKind,
    /// InfoNCE temperature.
    pub tau: f64,
    pub strategy: Strategy,
    pub negs_per_level: usize,
    pub sim: Similarity,
    pub normalize: bool,
    pub lr: f64,
    /// Loss terms averaged per optimizer step.
    pub batch: usize,
    pub weight_decay: f64,
    pub plateau_factor: f64,
    pub plateau_patience: u32,
    /// Stop after this many epochs without a new best validation QWK.
    pub early_stop_epochs: u32,
    pub max_epochs: u32,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            loss: LossKind::Psce,
            tau: 0.1,
            strategy: Strategy::All,
            negs_per_level: 5,
            sim: Similarity::Cosine,
            normalize: false,
            lr: 1e-6,
            batch: 16,
            weight_decay: 0.01,
            plateau_factor: 0.5,
            plateau_patience: 2,
            early_stop_epochs: 20,
            max_epochs: 100,
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::InvalidArgument(m.into()));
        if !(self.tau > 0.0 && self.tau.is_finite()) {
            return bad("tau must be positive");
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.batch == 0 {
            return bad("batch must be at least 1");
        }
        if self.negs_per_level == 0 {
            return bad("negs_per_level must be at least 1");
        }
        if !(self.plateau_factor > 0.0 && self.plateau_factor <= 1.0) {
            return bad("plateau factor must be in (0, 1]");
        }
        if !(self.weight_decay >= 0.0 && self.weight_decay.is_finite()) {
            return bad("weight decay must be non-negative");
        }
        Ok(())
    }

    fn fit_options(&self) -> FitOptions {
        FitOptions {
            sim: self.sim,
            normalize: self.normalize,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    /// Epoch 0 is the untrained (identity) adapter.
    pub epoch: u32,
    pub mean_loss: Option<f64>,
    pub dev_qwk: Option<f64>,
    /// Learning rate used during this epoch.
    pub lr: f64,
    pub steps: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    MaxEpochs,
    EarlyStopping,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose adapter is returned.
    pub best_epoch: u32,
    pub best_dev_qwk: Option<f64>,
    pub stop_reason: StopReason,
    pub final_lr: f64,
}

fn dev_qwk(
    store: &EmbeddingStore,
    index: &LevelIndex,
    dev: &[(String, Level)],
    adapter: &LinearAdapter,
    config: &TrainConfig,
    exec: Execution,
) -> Result<f64> {
    let model = fit_unrecorded(store, index, config.fit_options(), Some(adapter))?;
    let items: Vec<(&str, &Embedding)> = dev
        .iter()
        .map(|(id, _)| Ok((id.as_str(), store.require(id)?)))
        .collect::<Result<_>>()?;
    let pred: Vec<Level> = score_batch(&model, &items, exec)?.into_iter().map(|s| s.level).collect();
    let gold: Vec<Level> = dev.iter().map(|(_, l)| *l).collect();
    qwk(&gold, &pred, index.min_level, index.max_level)
}

/// Train a linear adapter on the labeled essays of `train_index`.
///
/// Each epoch draws fresh triplets, expands them into loss terms and takes
/// one AdamW step per `batch` terms (the last batch may be short). After
/// every epoch the centroids are refit under the current adapter and scored
/// on `dev`; that QWK drives the learning-rate schedule and early stopping,
/// and the adapter of the best epoch is returned (the identity when no
/// epoch beats it). With an empty `dev`, all `max_epochs` run and the final
/// adapter is returned.
pub fn train(
    store: &EmbeddingStore,
    train_index: &LevelIndex,
    dev: &[(String, Level)],
    config: &TrainConfig,
    exec: Execution,
) -> Result<(LinearAdapter, TrainReport)> {
    config.validate()?;
    let dim = store.dim();
    for (id, _) in train_index.labeled() {
        store.require(id)?;
    }
    let mut adapter = LinearAdapter::identity(dim);
    let mut hyper = AdamW {
        lr: config.lr,
        weight_decay: config.weight_decay,
        ..AdamW::default()
    };
    let mut state = AdamState::new(dim * dim);
    let mut scheduler = PlateauScheduler::new(config.lr, config.plateau_factor, config.plateau_patience);
    let mut stopper = EarlyStopping::new(config.early_stop_epochs);
    let mut best = adapter.clone();
    let mut epochs = Vec::new();

    let validate = !dev.is_empty();
    let q0 = if validate {
        let q = dev_qwk(store, train_index, dev, &adapter, config, exec)?;
        stopper.observe(0, q);
        Some(q)
    } else {
        None
    };
    epochs.push(EpochRecord {
        epoch: 0,
        mean_loss: None,
        dev_qwk: q0,
        lr: config.lr,
        steps: 0,
    });

    let mut stop_reason = StopReason::MaxEpochs;
    for epoch in 1..=config.max_epochs {
        let lr = hyper.lr;
        let triplets = sample_triplets(train_index, config.strategy, config.negs_per_level, config.seed, epoch as u64)?;
        let units = training_units(&triplets, config.loss);
        let mut loss_sum = 0.0;
        let mut steps = 0;
        for chunk in units.chunks(config.batch) {
            let grads = par::map(exec, chunk, |u| {
                let negs: Vec<&[f64]> = u
                    .negatives
                    .iter()
                    .map(|n| store.require(n).map(|e| e.as_slice()))
                    .collect::<Result<_>>()?;
                unit_gradient(
                    config.loss,
                    config.tau,
                    config.sim,
                    &adapter,
                    store.require(u.anchor)?,
                    store.require(u.positive)?,
                    &negs,
                )
            })
            .into_iter()
            .collect::<Result<Vec<_>>>()?;
            loss_sum += grads.iter().map(|g| g.loss).sum::<f64>();
            let n = grads.len() as f64;
            let mut grad = accumulate(dim, &grads, exec);
            grad.iter_mut().for_each(|g| *g /= n);
            optimizer_step(adapter.weights_mut(), &grad, &mut state, &hyper)?;
            steps += 1;
        }
        let mean_loss = loss_sum / units.len() as f64;
        if !mean_loss.is_finite() {
            return Err(Error::NonFinite(format!("training loss at epoch {epoch}")));
        }
        let q = if validate {
            Some(dev_qwk(store, train_index, dev, &adapter, config, exec)?)
        } else {
            None
        };
        log::info!("epoch {epoch}: loss {mean_loss:.6} dev qwk {q:?} lr {lr:e}");
        epochs.push(EpochRecord {
            epoch,
            mean_loss: Some(mean_loss),
            dev_qwk: q,
            lr,
            steps,
        });
        match q {
            Some(q) => {
                if stopper.observe(epoch, q) {
                    best = adapter.clone();
                }
                hyper.lr = scheduler.step(q);
                if stopper.should_stop() {
                    stop_reason = StopReason::EarlyStopping;
                    break;
                }
            }
            None => best = adapter.clone(),
        }
    }

    let best_epoch = if validate {
        stopper.best_epoch
    } else {
        epochs.last().map_or(0, |e| e.epoch)
    };
    Ok((
        best,
        TrainReport {
            epochs,
            best_epoch,
            best_dev_qwk: stopper.best,
            stop_reason,
            final_lr: hyper.lr,
        },
    ))
}

/// One source task for cross-task fine-tuning.
#[derive(Debug, Clone)]
pub struct CrossTaskSource<'a> {
    pub store: &'a EmbeddingStore,
    /// Training essays.
    pub index: LevelIndex,
    /// Held-out essays for validation.
    pub dev: Vec<(String, Level)>,
    pub prompt: &'a Embedding,
}

/// Train one adapter on prompt-subtracted vectors pooled over source tasks.
///
/// Because the adapter is linear, training on `e - p` is the same as
/// applying it to both vectors and subtracting afterwards. Essay ids must be
/// unique across the sources.
pub fn train_cross_task(
    sources: &BTreeMap<String, CrossTaskSource<'_>>,
    config: &TrainConfig,
    exec: Execution,
) -> Result<(LinearAdapter, TrainReport)> {
    let first = sources
        .values()
        .next()
        .ok_or_else(|| Error::InvalidArgument("cross-task training needs at least one source task".into()))?;
    let dim = first.store.dim();
    let mut derived = EmbeddingStore::new(dim, "prompt-subtracted")?;
    let mut dev = Vec::new();
    let mut seen = HashSet::new();
    for (task, source) in sources {
        if source.prompt.dim() != dim || source.store.dim() != dim {
            return Err(Error::Dimension {
                id: Some(format!("source task {task}")),
                expected: dim,
                found: source.store.dim().max(source.prompt.dim()),
            });
        }
        let ids = source.index.labeled().map(|(id, _)| id).chain(source.dev.iter().map(|(id, _)| id.as_str()));
        for id in ids {
            if !seen.insert(id.to_string()) {
                return Err(Error::DuplicateId(id.to_string()));
            }
            let v = source.store.require(id)?;
            derived.insert(id, v.sub(source.prompt))?;
        }
        dev.extend(source.dev.iter().cloned());
    }
    let parts: Vec<&LevelIndex> = sources.values().map(|s| &s.index).collect();
    let pooled = LevelIndex::pooled("cross-task", &parts)?;
    train(&derived, &pooled, &dev, config, exec)
}
