//! `finetune`: train an adapter per fold and evaluate the adapted centroids.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde::Serialize;

use relgrade_core::finetune::{train, StopReason, TrainConfig};
use relgrade_core::grader::{fit_centroids, FitOptions};
use relgrade_core::metrics::FoldResult;
use relgrade_core::par::Execution;
use relgrade_core::rng;

use super::{evaluate, over_folds, table, TaskSummary};
use crate::data::Corpus;
use crate::options::{DataConfig, DataOptions, FileConfig, TrainOptions, Variant};
use crate::report::{emit, ensure_dir};

#[derive(Debug, Args)]
pub struct FinetuneArgs {
    #[command(flatten)]
    pub data: DataOptions,
    #[command(flatten)]
    pub train: TrainOptions,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Serialize)]
struct FinetuneConfig<'a> {
    data: &'a DataConfig,
    train: &'a TrainOptions,
    variants: &'a [Variant],
}

#[derive(Serialize)]
struct FoldTraining {
    fold_id: u32,
    adapter: String,
    best_epoch: u32,
    epochs_run: u32,
    stop_reason: StopReason,
    final_lr: f64,
    dev: Option<FoldResult>,
    test: FoldResult,
}

#[derive(Serialize)]
struct TaskTraining {
    mean_dev_qwk: Option<f64>,
    test: TaskSummary,
    folds: Vec<FoldTraining>,
}

#[derive(Serialize)]
struct VariantResults {
    name: String,
    tasks: BTreeMap<String, TaskTraining>,
}

/// Seed for training fold `fold` of `task`.
pub fn fold_seed(seed: u64, stream: &str, task: &str, fold: u32) -> u64 {
    rng::indexed_seed(rng::stream_seed(rng::stream_seed(seed, stream), task), u64::from(fold))
}

pub fn run(args: FinetuneArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let data = args.data.resolve(&file.data)?;
    let train_opts = args.train.resolved(&file.train)?;
    let variants = train_opts.variants(&data.sim, data.normalize)?;
    ensure_dir(&data.out.join("adapters"))?;
    let corpus = Corpus::load(&data)?;
    let tasks = corpus.tasks(&data);

    let mut all = Vec::new();
    for (vi, variant) in variants.iter().enumerate() {
        let mut per_task = BTreeMap::new();
        for task in &tasks {
            let folds = corpus.folds(task, &data)?;
            let runs = over_folds(&folds, data.parallel_folds, |fold| {
                if fold.test.is_empty() {
                    return Ok(None);
                }
                let config = TrainConfig {
                    seed: fold_seed(data.seed, "finetune", task, fold.fold_id),
                    ..variant.config.clone()
                };
                let index = corpus.index(task, &fold.train)?;
                let dev = corpus.gold(task, &fold.dev);
                let (adapter, report) = train(&corpus.store, &index, &dev, &config, Execution::Parallel)?;
                let name = format!("adapters/v{vi}-{task}-fold{}.jsonl", fold.fold_id);
                adapter.save(&data.out.join(&name))?;
                let options = FitOptions {
                    sim: config.sim,
                    normalize: config.normalize,
                };
                let model = fit_centroids(&corpus.store, &index, options, Some(&adapter))?;
                let dev_result = if dev.is_empty() {
                    None
                } else {
                    Some(evaluate(&corpus, &model, fold.fold_id, &dev, Execution::Parallel)?)
                };
                let test = evaluate(&corpus, &model, fold.fold_id, &corpus.gold(task, &fold.test), Execution::Parallel)?;
                Ok(Some(FoldTraining {
                    fold_id: fold.fold_id,
                    adapter: name,
                    best_epoch: report.best_epoch,
                    epochs_run: report.epochs.last().map_or(0, |e| e.epoch),
                    stop_reason: report.stop_reason,
                    final_lr: report.final_lr,
                    dev: dev_result,
                    test,
                }))
            })?;
            let runs: Vec<FoldTraining> = runs.into_iter().flatten().collect();
            let devs: Vec<f64> = runs.iter().filter_map(|r| r.dev.as_ref().map(|d| d.qwk)).collect();
            let mean_dev_qwk = (!devs.is_empty()).then(|| devs.iter().sum::<f64>() / devs.len() as f64);
            let test = TaskSummary::from_folds(runs.iter().map(|r| r.test.clone()).collect())?;
            per_task.insert(
                task.clone(),
                TaskTraining {
                    mean_dev_qwk,
                    test,
                    folds: runs,
                },
            );
        }
        all.push(VariantResults {
            name: variant.name.clone(),
            tasks: per_task,
        });
    }

    let rows = |pick: &dyn Fn(&TaskTraining) -> Option<f64>| -> Vec<(String, BTreeMap<String, f64>)> {
        all.iter()
            .map(|v| {
                let values = v.tasks.iter().filter_map(|(t, r)| pick(r).map(|q| (t.clone(), q))).collect();
                (v.name.clone(), values)
            })
            .collect()
    };
    let text = format!(
        "{}\n{}",
        table("QWK (development folds)", &tasks, rows(&|r| r.mean_dev_qwk)),
        table("QWK (test folds)", &tasks, rows(&|r| Some(r.test.mean_qwk)))
    );
    let config = FinetuneConfig {
        data: &data,
        train: &train_opts,
        variants: &variants,
    };
    emit(&data.out, "finetune", &config, &corpus.input_hashes, &corpus.warnings, &all, &text)
}
