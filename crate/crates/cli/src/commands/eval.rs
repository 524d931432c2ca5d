//! `fit`, `score` and `eval`: the centroid model without fine-tuning.

use std::collections::BTreeMap;
use std::io::Write;
use std::path::PathBuf;

use anyhow::{bail, Context, Result};
use clap::Args;
use serde::Serialize;

use relgrade_core::corpus::Level;
use relgrade_core::finetune::LinearAdapter;
use relgrade_core::grader::{fit_centroids, score_batch, score_batch_cross_task, CentroidModel, CrossTaskTarget, FitOptions, Mode};
use relgrade_core::hashing::file_sha256;
use relgrade_core::metrics::FoldResult;
use relgrade_core::par::Execution;

use super::{evaluate, over_folds, table, TaskSummary};
use crate::data::Corpus;
use crate::options::{DataConfig, DataOptions, FileConfig, ProbeInput};
use crate::report::{emit, ensure_dir};

#[derive(Debug, Args)]
pub struct FitArgs {
    #[command(flatten)]
    pub data: DataOptions,
    /// TOML config file; flags take precedence.
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Fit on this fold's training split instead of every labeled essay.
    #[arg(long)]
    pub fold: Option<u32>,
    /// Adapter file applied to every vector before fitting.
    #[arg(long)]
    pub adapter: Option<PathBuf>,
}

#[derive(Serialize)]
struct FitConfig<'a> {
    data: &'a DataConfig,
    fold: Option<u32>,
    adapter: Option<&'a PathBuf>,
}

#[derive(Serialize)]
struct FittedModel {
    file: String,
    essays: usize,
    present_levels: Vec<Level>,
    warnings: Vec<String>,
}

pub fn fit(args: FitArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let data = args.data.resolve(&file.data)?;
    ensure_dir(&data.out)?;
    let mut corpus = Corpus::load(&data)?;
    let adapter = args.adapter.as_deref().map(LinearAdapter::load).transpose()?;
    if let Some(p) = &args.adapter {
        corpus.input_hashes.insert(p.display().to_string(), file_sha256(p)?);
    }
    let options = FitOptions {
        sim: data.single_sim()?,
        normalize: data.normalize,
    };
    let mut results = BTreeMap::new();
    for task in corpus.tasks(&data) {
        let ids = match args.fold {
            Some(f) => {
                let folds = corpus.folds(&task, &data)?;
                folds
                    .into_iter()
                    .find(|s| s.fold_id == f)
                    .with_context(|| format!("no fold {f} for task `{task}`"))?
                    .train
            }
            None => super::essay_ids(&corpus.labeled(&task)),
        };
        let index = corpus.index(&task, &ids)?;
        let model = fit_centroids(&corpus.store, &index, options, adapter.as_ref())?;
        let name = format!("model-{task}.json");
        model.save(&data.out.join(&name))?;
        results.insert(
            task,
            FittedModel {
                file: name,
                essays: index.len(),
                present_levels: model.present_levels().collect(),
                warnings: model.warnings.clone(),
            },
        );
    }
    let config = FitConfig {
        data: &data,
        fold: args.fold,
        adapter: args.adapter.as_ref(),
    };
    emit(&data.out, "fit", &config, &corpus.input_hashes, &corpus.warnings, &results, "")
}

#[derive(Debug, Args)]
pub struct ScoreArgs {
    #[command(flatten)]
    pub data: DataOptions,
    #[arg(long)]
    pub config: Option<PathBuf>,
    /// Model file written by `fit` or `crosstask`.
    #[arg(long)]
    pub model: PathBuf,
    /// Blend cross-task scores with target-prompt similarity.
    #[arg(long)]
    pub blend: bool,
    #[arg(long, value_enum, default_value = "raw")]
    pub prompt_similarity: ProbeInput,
}

#[derive(Serialize)]
struct ScoreConfig<'a> {
    data: &'a DataConfig,
    model: &'a PathBuf,
    blend: bool,
    prompt_similarity: ProbeInput,
}

#[derive(Serialize)]
struct ScoreLine<'a> {
    task_id: &'a str,
    essay_id: &'a str,
    gold: Option<Level>,
    level: Level,
    prompt_score: Option<f64>,
    blended: Option<f64>,
    blended_level: Option<Level>,
}

pub fn score(args: ScoreArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let mut opts = args.data;
    // The model file fixes similarity and normalization; these flags are unused.
    opts.sim = None;
    let data = opts.resolve(&file.data)?;
    ensure_dir(&data.out)?;
    let mut corpus = Corpus::load(&data)?;
    let model = CentroidModel::load(&args.model)?;
    corpus
        .input_hashes
        .insert(args.model.display().to_string(), file_sha256(&args.model)?);

    let tasks: Vec<String> = if !data.tasks.is_empty() {
        corpus.tasks(&data)
    } else if model.mode == Mode::TaskSpecific {
        model.provenance.tasks.clone()
    } else {
        corpus
            .tasks(&data)
            .into_iter()
            .filter(|t| !model.provenance.tasks.contains(t))
            .collect()
    };
    if args.blend && model.mode == Mode::TaskSpecific {
        bail!("--blend needs a cross-task model");
    }

    let path = data.out.join("scores.jsonl");
    let mut out = std::fs::File::create(&path).with_context(|| format!("cannot write {}", path.display()))?;
    let mut results = BTreeMap::new();
    for task in &tasks {
        let essays: Vec<_> = corpus.essays.iter().filter(|e| &e.task_id == task).collect();
        let items = essays
            .iter()
            .map(|e| Ok((e.id.as_str(), corpus.store.require(&e.id)?)))
            .collect::<Result<Vec<_>>>()?;
        let scored = if model.mode == Mode::TaskSpecific {
            score_batch(&model, &items, Execution::Parallel)?
        } else {
            let prompt = corpus.prompt(task)?;
            let target = CrossTaskTarget {
                prompt: Some(corpus.prompt_vector(task)?),
                min_level: prompt.min_level,
                max_level: prompt.max_level,
                blend: args.blend,
                prompt_similarity: args.prompt_similarity.into(),
            };
            score_batch_cross_task(&model, &items, target, Execution::Parallel)?
        };
        let mut gold = Vec::new();
        let mut pred = Vec::new();
        for (essay, s) in essays.iter().zip(&scored) {
            let line = ScoreLine {
                task_id: task,
                essay_id: &essay.id,
                gold: essay.relevance,
                level: s.level,
                prompt_score: s.prompt_score,
                blended: s.blended,
                blended_level: s.blended_level,
            };
            writeln!(out, "{}", serde_json::to_string(&line)?).with_context(|| format!("cannot write {}", path.display()))?;
            if let Some(g) = essay.relevance {
                gold.push(g);
                pred.push(s.final_level());
            }
        }
        if !gold.is_empty() {
            let p = corpus.prompt(task)?;
            results.insert(task.clone(), FoldResult::evaluate(0, &gold, &pred, p.min_level, p.max_level)?);
        }
    }
    let config = ScoreConfig {
        data: &data,
        model: &args.model,
        blend: args.blend,
        prompt_similarity: args.prompt_similarity,
    };
    emit(&data.out, "score", &config, &corpus.input_hashes, &corpus.warnings, &results, "")
}

#[derive(Debug, Args)]
pub struct EvalArgs {
    #[command(flatten)]
    pub data: DataOptions,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Serialize)]
struct EvalResults {
    tasks: BTreeMap<String, TaskSummary>,
    average_qwk: f64,
}

/// Cross-validated evaluation: per fold, fit on train and score test.
pub fn eval(args: EvalArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let data = args.data.resolve(&file.data)?;
    ensure_dir(&data.out.join("models"))?;
    let corpus = Corpus::load(&data)?;
    let options = FitOptions {
        sim: data.single_sim()?,
        normalize: data.normalize,
    };
    let tasks = corpus.tasks(&data);
    let mut summaries = BTreeMap::new();
    for task in &tasks {
        let folds = corpus.folds(task, &data)?;
        let results = over_folds(&folds, data.parallel_folds, |fold| {
            if fold.test.is_empty() {
                return Ok(None);
            }
            let index = corpus.index(task, &fold.train)?;
            let model = fit_centroids(&corpus.store, &index, options, None)?;
            model.save(&data.out.join("models").join(format!("{task}-fold{}.json", fold.fold_id)))?;
            let gold = corpus.gold(task, &fold.test);
            evaluate(&corpus, &model, fold.fold_id, &gold, Execution::Parallel).map(Some)
        })?;
        summaries.insert(task.clone(), TaskSummary::from_folds(results.into_iter().flatten().collect())?);
    }
    let row: BTreeMap<String, f64> = summaries.iter().map(|(t, s)| (t.clone(), s.mean_qwk)).collect();
    let average_qwk = row.values().sum::<f64>() / row.len() as f64;
    let text = table("QWK (test folds)", &tasks, vec![("pt".into(), row)]);
    let results = EvalResults {
        tasks: summaries,
        average_qwk,
    };
    emit(&data.out, "eval", &data, &corpus.input_hashes, &corpus.warnings, &results, &text)
}
