//! `fewshot`: k-shot training sets per level, nested across k.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::Result;
use clap::Args;
use serde::Serialize;

use relgrade_core::corpus::sample_few_shot;
use relgrade_core::finetune::{train, TrainConfig};
use relgrade_core::grader::{fit_centroids, FitOptions};
use relgrade_core::metrics::FoldResult;
use relgrade_core::par::Execution;

use super::finetune::fold_seed;
use super::{evaluate, over_folds, table, TaskSummary};
use crate::data::Corpus;
use crate::options::{DataConfig, DataOptions, FewShotOptions, FileConfig, TrainOptions};
use crate::report::{emit, ensure_dir, write_json};

#[derive(Debug, Args)]
pub struct FewShotArgs {
    #[command(flatten)]
    pub data: DataOptions,
    #[command(flatten)]
    pub fewshot: FewShotOptions,
    #[command(flatten)]
    pub train: TrainOptions,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Serialize)]
struct FewShotConfig<'a> {
    data: &'a DataConfig,
    k_values: &'a [usize],
    repeats: u32,
    ft: bool,
    train: Option<&'a TrainConfig>,
}

#[derive(Serialize)]
struct KResult {
    /// Mean over folds and repeats.
    mean_qwk: f64,
    /// One entry per (fold, repeat), fold-major.
    runs: Vec<FoldResult>,
    degenerate_runs: usize,
}

pub fn run(args: FewShotArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let data = args.data.resolve(&file.data)?;
    let opts = crate::options::layer(&args.fewshot, &file.fewshot)?;
    let train_opts = args.train.resolved(&file.train)?;
    let k_values = opts.k_values.clone().unwrap_or_else(|| vec![5, 10, 15, 20, 25, 30]);
    let repeats = opts.repeats.unwrap_or(5);
    let ft = opts.ft.unwrap_or(false);
    let sim = data.single_sim()?;
    let train_config = ft.then(|| train_opts.base(sim, data.normalize, TrainConfig::default().max_epochs));
    if let Some(c) = &train_config {
        c.validate()?;
    }
    ensure_dir(&data.out.join("plans"))?;
    let corpus = Corpus::load(&data)?;
    let tasks = corpus.tasks(&data);
    let options = FitOptions {
        sim,
        normalize: data.normalize,
    };

    let mut results: BTreeMap<String, BTreeMap<usize, KResult>> = BTreeMap::new();
    for task in &tasks {
        let folds = corpus.folds(task, &data)?;
        // Per fold: results in (repeat, k) order.
        let per_fold = over_folds(&folds, data.parallel_folds, |fold| {
            if fold.test.is_empty() {
                return Ok(Vec::new());
            }
            let full = corpus.index(task, &fold.train)?;
            let plan = sample_few_shot(&full, &k_values, repeats, fold_seed(data.seed, "fewshot", task, fold.fold_id))?;
            write_json(&data.out.join("plans").join(format!("{task}-fold{}.json", fold.fold_id)), &plan)?;
            let dev = corpus.gold(task, &fold.dev);
            let test = corpus.gold(task, &fold.test);
            let mut out = Vec::new();
            for repeat in 0..repeats {
                for &k in &k_values {
                    let index = plan.index(&full, repeat, k).expect("plan covers every (repeat, k)");
                    let adapter = match &train_config {
                        Some(c) => {
                            let config = TrainConfig {
                                seed: plan.get(repeat, k).map_or(0, |s| s.sub_seed),
                                ..c.clone()
                            };
                            Some(train(&corpus.store, &index, &dev, &config, Execution::Parallel)?.0)
                        }
                        None => None,
                    };
                    let model = fit_centroids(&corpus.store, &index, options, adapter.as_ref())?;
                    out.push((k, evaluate(&corpus, &model, fold.fold_id, &test, Execution::Parallel)?));
                }
            }
            Ok(out)
        })?;
        let mut by_k: BTreeMap<usize, Vec<FoldResult>> = BTreeMap::new();
        for (k, r) in per_fold.into_iter().flatten() {
            by_k.entry(k).or_default().push(r);
        }
        let mut per_k = BTreeMap::new();
        for (k, runs) in by_k {
            let summary = TaskSummary::from_folds(runs)?;
            per_k.insert(
                k,
                KResult {
                    mean_qwk: summary.mean_qwk,
                    degenerate_runs: summary.folds.iter().filter(|f| f.degenerate).count(),
                    runs: summary.folds,
                },
            );
        }
        results.insert(task.clone(), per_k);
    }

    let prefix = if ft { "ft" } else { "pt" };
    let rows = k_values
        .iter()
        .map(|k| {
            let values = results
                .iter()
                .filter_map(|(t, per_k)| per_k.get(k).map(|r| (t.clone(), r.mean_qwk)))
                .collect();
            (format!("{prefix} k={k}"), values)
        })
        .collect();
    let text = table("QWK (few-shot, mean over folds and repeats)", &tasks, rows);
    let config = FewShotConfig {
        data: &data,
        k_values: &k_values,
        repeats,
        ft,
        train: train_config.as_ref(),
    };
    emit(&data.out, "fewshot", &config, &corpus.input_hashes, &corpus.warnings, &results, &text)
}
