//! `crosstask`: score an unseen target task with centroids pooled from the
//! other tasks.

use std::collections::BTreeMap;
use std::path::PathBuf;

use anyhow::{bail, Result};
use clap::Args;
use serde::Serialize;

use relgrade_core::corpus::{Level, LevelIndex};
use relgrade_core::finetune::{train_cross_task, CrossTaskSource, LinearAdapter};
use relgrade_core::grader::{fit_centroids_cross_task, score_batch_cross_task, CrossTaskTarget, FitOptions, SourceTask};
use relgrade_core::metrics::{qwk, FoldResult};
use relgrade_core::par::Execution;

use super::finetune::fold_seed;
use super::table;
use crate::data::Corpus;
use crate::options::{CrossTaskOptions, CrossTaskVariant, DataConfig, DataOptions, FileConfig, ProbeInput, TrainOptions};
use crate::report::{emit, ensure_dir};

#[derive(Debug, Args)]
pub struct CrossTaskArgs {
    #[command(flatten)]
    pub data: DataOptions,
    #[command(flatten)]
    pub crosstask: CrossTaskOptions,
    #[command(flatten)]
    pub train: TrainOptions,
    #[arg(long)]
    pub config: Option<PathBuf>,
}

#[derive(Serialize)]
struct CrossTaskConfig<'a> {
    data: &'a DataConfig,
    variants: &'a [CrossTaskVariant],
    blend: bool,
    prompt_similarity: ProbeInput,
    ft: bool,
    train: Option<&'a relgrade_core::finetune::TrainConfig>,
}

#[derive(Serialize)]
struct TargetResult {
    sources: Vec<String>,
    adapter: Option<String>,
    model: String,
    /// QWK of the reported levels (blended when blending is on).
    result: FoldResult,
    /// QWK of the nearest-centroid levels alone.
    centroid_qwk: f64,
}

pub fn run(args: CrossTaskArgs) -> Result<()> {
    let file = FileConfig::load(args.config.as_deref())?;
    let data = args.data.resolve(&file.data)?;
    let opts = crate::options::layer(&args.crosstask, &file.crosstask)?;
    let train_opts = args.train.resolved(&file.train)?;
    let sim = data.single_sim()?;
    let variants = opts.variant.clone().unwrap_or_else(|| {
        vec![CrossTaskVariant::Vanilla, CrossTaskVariant::Independent, CrossTaskVariant::Similarity]
    });
    let blend_all = opts.blend.unwrap_or(false);
    let probe = opts.prompt_similarity.unwrap_or(ProbeInput::Raw);
    let ft = opts.ft.unwrap_or(false);
    // Cross-task fine-tuning runs a single epoch unless told otherwise.
    let train_config = ft.then(|| train_opts.base(sim, data.normalize, 1));
    if let Some(c) = &train_config {
        c.validate()?;
    }
    ensure_dir(&data.out.join("models"))?;
    if ft {
        ensure_dir(&data.out.join("adapters"))?;
    }
    let corpus = Corpus::load(&data)?;
    let all_tasks: Vec<String> = corpus.prompts.keys().cloned().collect();
    let targets = corpus.tasks(&data);
    let options = FitOptions {
        sim,
        normalize: data.normalize,
    };

    let mut results: BTreeMap<String, BTreeMap<String, TargetResult>> = BTreeMap::new();
    for target in &targets {
        let sources: Vec<String> = opts
            .sources
            .clone()
            .unwrap_or_else(|| all_tasks.clone())
            .into_iter()
            .filter(|t| t != target)
            .collect();
        if sources.is_empty() {
            bail!("no source tasks for target `{target}`");
        }
        let indexes: BTreeMap<String, LevelIndex> = sources
            .iter()
            .map(|s| Ok((s.clone(), corpus.index(s, &super::essay_ids(&corpus.labeled(s)))?)))
            .collect::<Result<_>>()?;

        let adapter = match &train_config {
            Some(config) => {
                let mut train_sources = BTreeMap::new();
                for (s, index) in &indexes {
                    train_sources.insert(
                        s.clone(),
                        CrossTaskSource {
                            store: &corpus.store,
                            index: index.clone(),
                            dev: Vec::new(),
                            prompt: corpus.prompt_vector(s)?,
                        },
                    );
                }
                let config = relgrade_core::finetune::TrainConfig {
                    seed: fold_seed(data.seed, "crosstask", target, 0),
                    ..config.clone()
                };
                let (adapter, _) = train_cross_task(&train_sources, &config, Execution::Parallel)?;
                let name = format!("adapters/{target}.jsonl");
                adapter.save(&data.out.join(&name))?;
                Some((adapter, name))
            }
            None => None,
        };
        let adapter_ref: Option<&LinearAdapter> = adapter.as_ref().map(|(a, _)| a);

        let prompt = corpus.prompt(target)?;
        let essays = corpus.labeled(target);
        let items = essays
            .iter()
            .map(|e| Ok((e.id.as_str(), corpus.store.require(&e.id)?)))
            .collect::<Result<Vec<_>>>()?;
        let gold: Vec<Level> = essays.iter().map(|e| e.relevance.unwrap_or_default()).collect();

        for &variant in &variants {
            let independent = variant != CrossTaskVariant::Vanilla;
            let mut source_tasks = BTreeMap::new();
            for (s, index) in &indexes {
                source_tasks.insert(
                    s.clone(),
                    SourceTask {
                        store: &corpus.store,
                        index,
                        prompt: if independent { Some(corpus.prompt_vector(s)?) } else { None },
                    },
                );
            }
            let model = fit_centroids_cross_task(&source_tasks, options, independent, adapter_ref)?;
            let label = format!("{}-{}", if ft { "ft" } else { "pt" }, variant.label());
            let model_name = format!("models/{label}-{target}.json");
            model.save(&data.out.join(&model_name))?;
            let blend = blend_all || variant == CrossTaskVariant::Similarity;
            let needs_prompt = independent || blend;
            let target_spec = CrossTaskTarget {
                prompt: if needs_prompt { Some(corpus.prompt_vector(target)?) } else { None },
                min_level: prompt.min_level,
                max_level: prompt.max_level,
                blend,
                prompt_similarity: probe.into(),
            };
            let scored = score_batch_cross_task(&model, &items, target_spec, Execution::Parallel)?;
            let pred: Vec<Level> = scored.iter().map(|s| s.final_level()).collect();
            let centroid: Vec<Level> = scored.iter().map(|s| s.level).collect();
            results.entry(label).or_default().insert(
                target.clone(),
                TargetResult {
                    sources: sources.clone(),
                    adapter: adapter.as_ref().map(|(_, n)| n.clone()),
                    model: model_name,
                    result: FoldResult::evaluate(0, &gold, &pred, prompt.min_level, prompt.max_level)?,
                    centroid_qwk: qwk(&gold, &centroid, prompt.min_level, prompt.max_level)?,
                },
            );
        }
    }

    let rows = results
        .iter()
        .map(|(label, per)| (label.clone(), per.iter().map(|(t, r)| (t.clone(), r.result.qwk)).collect()))
        .collect();
    let text = table("QWK (cross-task)", &targets, rows);
    let config = CrossTaskConfig {
        data: &data,
        variants: &variants,
        blend: blend_all,
        prompt_similarity: probe,
        ft,
        train: train_config.as_ref(),
    };
    emit(&data.out, "crosstask", &config, &corpus.input_hashes, &corpus.warnings, &results, &text)
}
