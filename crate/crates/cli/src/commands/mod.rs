pub mod crosstask;
pub mod encode;
pub mod eval;
pub mod fewshot;
pub mod finetune;

use std::collections::BTreeMap;

use anyhow::Result;
use serde::Serialize;

use relgrade_core::corpus::{Essay, Level};
use relgrade_core::grader::{score_batch, CentroidModel};
use relgrade_core::metrics::{aggregate, FoldResult};
use relgrade_core::par::{self, Execution};

use crate::data::Corpus;

/// Per-task summary over folds (or repeats).
#[derive(Debug, Clone, Serialize)]
pub struct TaskSummary {
    pub mean_qwk: f64,
    pub degenerate_folds: Vec<u32>,
    pub folds: Vec<FoldResult>,
}

impl TaskSummary {
    pub fn from_folds(folds: Vec<FoldResult>) -> Result<Self> {
        let agg = aggregate(&folds)?;
        Ok(TaskSummary {
            mean_qwk: agg.mean_qwk,
            degenerate_folds: agg.degenerate_folds,
            folds,
        })
    }
}

/// Score `essays` with a task-specific model and compute QWK.
pub fn evaluate(
    corpus: &Corpus,
    model: &CentroidModel,
    fold_id: u32,
    gold: &[(String, Level)],
    exec: Execution,
) -> Result<FoldResult> {
    let items = gold
        .iter()
        .map(|(id, _)| Ok((id.as_str(), corpus.store.require(id)?)))
        .collect::<Result<Vec<_>>>()?;
    let pred: Vec<Level> = score_batch(model, &items, exec)?.iter().map(|s| s.level).collect();
    let gold: Vec<Level> = gold.iter().map(|(_, l)| *l).collect();
    Ok(FoldResult::evaluate(fold_id, &gold, &pred, model.min_level, model.max_level)?)
}

/// Run `f` over folds, concurrently when asked. Results keep fold order.
pub fn over_folds<T: Sync, R: Send>(
    items: &[T],
    parallel: bool,
    f: impl Fn(&T) -> Result<R> + Sync + Send,
) -> Result<Vec<R>> {
    let exec = if parallel { Execution::Parallel } else { Execution::Sequential };
    par::map(exec, items, f).into_iter().collect()
}

/// Average of each row's task values, rendered as a table.
pub fn table(title: &str, tasks: &[String], rows: Vec<(String, BTreeMap<String, f64>)>) -> String {
    relgrade_core::metrics::render_table(title, tasks, &rows)
}

pub fn essay_ids(essays: &[&Essay]) -> Vec<String> {
    essays.iter().map(|e| e.id.clone()).collect()
}
