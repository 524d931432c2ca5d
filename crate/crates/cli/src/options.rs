//! Command-line flags, config files and their resolution.
//!
//! Every option group is both a clap argument group and a section of the
//! optional TOML config file. Flags override file values, which override
//! built-in defaults.

use std::path::{Path, PathBuf};

use anyhow::{bail, Context, Result};
use clap::{ArgAction, Args};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use relgrade_core::corpus::EssaySchema;
use relgrade_core::embedding::Similarity;
use relgrade_core::finetune::{LossKind, Strategy, TrainConfig};
use relgrade_core::grader::PromptSimilarityInput;

/// Overlay the fields set in `flags` onto `file`.
pub fn layer<T: Serialize + DeserializeOwned>(flags: &T, file: &T) -> Result<T> {
    let mut base = serde_json::to_value(file)?;
    if let (Some(base), serde_json::Value::Object(over)) = (base.as_object_mut(), serde_json::to_value(flags)?) {
        for (k, v) in over {
            if !v.is_null() {
                base.insert(k, v);
            }
        }
    }
    Ok(serde_json::from_value(base)?)
}

#[derive(Debug, Clone, Default, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct FileConfig {
    pub data: DataOptions,
    pub train: TrainOptions,
    pub crosstask: CrossTaskOptions,
    pub fewshot: FewShotOptions,
}

impl FileConfig {
    pub fn load(path: Option<&Path>) -> Result<Self> {
        let Some(path) = path else { return Ok(FileConfig::default()) };
        let raw = std::fs::read_to_string(path).with_context(|| format!("cannot read config {}", path.display()))?;
        toml::from_str(&raw).with_context(|| format!("invalid config {}", path.display()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum EssayFormat {
    /// `essay_id`, `task_id`, `relevance`, `text` with a header row.
    Canonical,
    /// ASAP-style TSV: `essay_id`, `essay_set`, `essay`, plus a trait column.
    Asap,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct DataOptions {
    /// Essay file.
    #[arg(long)]
    pub essays: Option<PathBuf>,
    /// Task prompt file (task_id, min_level, max_level, prompt_text).
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    /// Embedding exchange file with essay vectors and `prompt::<task>` vectors.
    #[arg(long)]
    pub embeddings: Option<PathBuf>,
    /// Fold file (JSON lines). Generated from the seed when absent.
    #[arg(long)]
    pub folds: Option<PathBuf>,
    /// Tasks to run, comma separated. Defaults to every task in the prompt file.
    #[arg(long = "task", value_delimiter = ',')]
    pub tasks: Option<Vec<String>>,
    #[arg(long, value_enum)]
    pub essay_format: Option<EssayFormat>,
    /// Relevance column for the ASAP layout.
    #[arg(long)]
    pub trait_column: Option<String>,
    /// Number of folds to generate when no fold file is given.
    #[arg(long)]
    pub num_folds: Option<usize>,
    /// Similarity function(s); several values form a sweep where supported.
    #[arg(long, value_delimiter = ',')]
    pub sim: Option<Vec<Similarity>>,
    /// L2-normalize vectors before averaging and scoring.
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_missing_value = "true")]
    pub normalize: Option<bool>,
    #[arg(long)]
    pub seed: Option<u64>,
    /// Run folds concurrently.
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_missing_value = "true")]
    pub parallel_folds: Option<bool>,
    /// Output directory.
    #[arg(long)]
    pub out: Option<PathBuf>,
}

#[derive(Debug, Clone, Serialize)]
pub struct DataConfig {
    pub essays: PathBuf,
    pub prompts: PathBuf,
    pub embeddings: PathBuf,
    pub folds: Option<PathBuf>,
    pub tasks: Vec<String>,
    pub essay_format: EssayFormat,
    pub trait_column: Option<String>,
    pub num_folds: usize,
    pub sim: Vec<Similarity>,
    pub normalize: bool,
    pub seed: u64,
    pub parallel_folds: bool,
    pub out: PathBuf,
}

fn required(value: Option<PathBuf>, flag: &str) -> Result<PathBuf> {
    value.with_context(|| format!("missing required option --{flag}"))
}

impl DataOptions {
    pub fn resolve(self, file: &DataOptions) -> Result<DataConfig> {
        let o = layer(&self, file)?;
        let format = o.essay_format.unwrap_or(EssayFormat::Canonical);
        if format == EssayFormat::Asap && o.trait_column.is_none() {
            bail!("--essay-format asap needs --trait-column");
        }
        Ok(DataConfig {
            essays: required(o.essays, "essays")?,
            prompts: required(o.prompts, "prompts")?,
            embeddings: required(o.embeddings, "embeddings")?,
            folds: o.folds,
            tasks: o.tasks.unwrap_or_default(),
            essay_format: format,
            trait_column: o.trait_column,
            num_folds: o.num_folds.unwrap_or(5),
            sim: o.sim.unwrap_or_else(|| vec![Similarity::Cosine]),
            normalize: o.normalize.unwrap_or(false),
            seed: o.seed.unwrap_or(0),
            parallel_folds: o.parallel_folds.unwrap_or(false),
            out: required(o.out, "out")?,
        })
    }
}

impl DataConfig {
    pub fn schema(&self) -> EssaySchema {
        match self.essay_format {
            EssayFormat::Canonical => EssaySchema::canonical(),
            EssayFormat::Asap => EssaySchema::asap(self.trait_column.as_deref().unwrap_or_default()),
        }
    }

    /// The single similarity function of a non-sweep command.
    pub fn single_sim(&self) -> Result<Similarity> {
        match self.sim.as_slice() {
            [s] => Ok(*s),
            _ => bail!("this command takes exactly one --sim value"),
        }
    }
}

/// Preset sweeps reproducing the four tuning experiments.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
pub enum Experiment {
    /// Similarity function: cosine vs. Euclidean.
    A,
    /// InfoNCE with τ = 0.1, 0.2, 0.3.
    B,
    /// Negative sampling: easy vs. hard levels.
    C,
    /// Negatives per level: 2 to 5.
    D,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct TrainOptions {
    #[arg(long, value_delimiter = ',')]
    pub loss: Option<Vec<LossKind>>,
    /// InfoNCE temperature(s).
    #[arg(long, value_delimiter = ',')]
    pub tau: Option<Vec<f64>>,
    #[arg(long, value_delimiter = ',')]
    pub strategy: Option<Vec<Strategy>>,
    #[arg(long, value_delimiter = ',')]
    pub negs_per_level: Option<Vec<usize>>,
    #[arg(long)]
    pub lr: Option<f64>,
    #[arg(long)]
    pub batch: Option<usize>,
    #[arg(long)]
    pub weight_decay: Option<f64>,
    #[arg(long)]
    pub max_epochs: Option<u32>,
    /// Epochs without validation improvement before stopping.
    #[arg(long)]
    pub early_stop: Option<u32>,
    #[arg(long)]
    pub plateau_factor: Option<f64>,
    #[arg(long)]
    pub plateau_patience: Option<u32>,
    /// Run one of the preset tuning sweeps instead of the sweep flags.
    #[arg(long, value_enum, ignore_case = true)]
    pub experiment: Option<Experiment>,
}

/// One point of a training sweep.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Variant {
    pub name: String,
    pub config: TrainConfig,
}

impl TrainOptions {
    pub fn resolved(&self, file: &TrainOptions) -> Result<TrainOptions> {
        layer(self, file)
    }

    /// Base training configuration (first value of every sweep list).
    pub fn base(&self, sim: Similarity, normalize: bool, default_epochs: u32) -> TrainConfig {
        let d = TrainConfig::default();
        TrainConfig {
            loss: self.loss.as_ref().and_then(|v| v.first().copied()).unwrap_or(d.loss),
            tau: self.tau.as_ref().and_then(|v| v.first().copied()).unwrap_or(d.tau),
            strategy: self.strategy.as_ref().and_then(|v| v.first().copied()).unwrap_or(d.strategy),
            negs_per_level: self.negs_per_level.as_ref().and_then(|v| v.first().copied()).unwrap_or(d.negs_per_level),
            sim,
            normalize,
            lr: self.lr.unwrap_or(d.lr),
            batch: self.batch.unwrap_or(d.batch),
            weight_decay: self.weight_decay.unwrap_or(d.weight_decay),
            plateau_factor: self.plateau_factor.unwrap_or(d.plateau_factor),
            plateau_patience: self.plateau_patience.unwrap_or(d.plateau_patience),
            early_stop_epochs: self.early_stop.unwrap_or(d.early_stop_epochs),
            max_epochs: self.max_epochs.unwrap_or(default_epochs),
            seed: 0,
        }
    }

    /// Expand sweep lists (or a preset experiment) into named variants.
    pub fn variants(&self, sims: &[Similarity], normalize: bool) -> Result<Vec<Variant>> {
        let base = self.base(sims[0], normalize, TrainConfig::default().max_epochs);
        let with = |name: String, f: &dyn Fn(&mut TrainConfig)| {
            let mut config = base.clone();
            f(&mut config);
            Variant { name, config }
        };
        let one = |c: &mut TrainConfig| {
            c.sim = Similarity::Cosine;
            c.loss = LossKind::Psce;
            c.strategy = Strategy::All;
            c.negs_per_level = 1;
        };
        let variants = match self.experiment {
            Some(Experiment::A) => [Similarity::Cosine, Similarity::Euclidean]
                .into_iter()
                .map(|s| with(format!("A sim={s}"), &|c| {
                    one(c);
                    c.sim = s;
                }))
                .collect(),
            Some(Experiment::B) => [0.1, 0.2, 0.3]
                .into_iter()
                .map(|t| with(format!("B infonce tau={t}"), &|c| {
                    one(c);
                    c.loss = LossKind::InfoNce;
                    c.tau = t;
                }))
                .collect(),
            Some(Experiment::C) => [Strategy::Easy, Strategy::Hard]
                .into_iter()
                .map(|s| with(format!("C strategy={s}"), &|c| {
                    one(c);
                    c.strategy = s;
                }))
                .collect(),
            Some(Experiment::D) => (2..=5)
                .map(|n| with(format!("D negs={n}"), &|c| {
                    one(c);
                    c.negs_per_level = n;
                }))
                .collect(),
            None => {
                let losses = self.loss.clone().unwrap_or_else(|| vec![base.loss]);
                let taus = self.tau.clone().unwrap_or_else(|| vec![base.tau]);
                let strategies = self.strategy.clone().unwrap_or_else(|| vec![base.strategy]);
                let negs = self.negs_per_level.clone().unwrap_or_else(|| vec![base.negs_per_level]);
                let mut out = Vec::new();
                for &sim in sims {
                    for &loss in &losses {
                        // Temperature only matters for InfoNCE.
                        let loss_taus = if loss == LossKind::InfoNce { taus.clone() } else { vec![base.tau] };
                        for &tau in &loss_taus {
                            for &strategy in &strategies {
                                for &n in &negs {
                                    let mut name = format!("sim={sim} loss={loss}");
                                    if loss == LossKind::InfoNce {
                                        name.push_str(&format!(" tau={tau}"));
                                    }
                                    name.push_str(&format!(" strategy={strategy} negs={n}"));
                                    out.push(with(name, &|c| {
                                        c.sim = sim;
                                        c.loss = loss;
                                        c.tau = tau;
                                        c.strategy = strategy;
                                        c.negs_per_level = n;
                                    }));
                                }
                            }
                        }
                    }
                }
                out
            }
        };
        for v in &variants {
            v.config.validate()?;
        }
        Ok(variants)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum CrossTaskVariant {
    /// Pool raw essay vectors of the source tasks.
    Vanilla,
    /// Subtract each task's prompt vector before pooling and scoring.
    Independent,
    /// Independent, blended with the similarity to the target prompt.
    Similarity,
}

impl CrossTaskVariant {
    pub fn label(self) -> &'static str {
        match self {
            CrossTaskVariant::Vanilla => "ct-v",
            CrossTaskVariant::Independent => "ct-i",
            CrossTaskVariant::Similarity => "ct-s",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, clap::ValueEnum)]
#[serde(rename_all = "lowercase")]
pub enum ProbeInput {
    Raw,
    Subtracted,
}

impl From<ProbeInput> for PromptSimilarityInput {
    fn from(p: ProbeInput) -> Self {
        match p {
            ProbeInput::Raw => PromptSimilarityInput::Raw,
            ProbeInput::Subtracted => PromptSimilarityInput::Subtracted,
        }
    }
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct CrossTaskOptions {
    /// Source tasks, comma separated. Defaults to every task except the target.
    #[arg(long, value_delimiter = ',')]
    pub sources: Option<Vec<String>>,
    #[arg(long, value_enum, value_delimiter = ',')]
    pub variant: Option<Vec<CrossTaskVariant>>,
    /// Blend with target-prompt similarity for every variant.
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_missing_value = "true")]
    pub blend: Option<bool>,
    /// Which essay vector the prompt similarity is computed from.
    #[arg(long, value_enum)]
    pub prompt_similarity: Option<ProbeInput>,
    /// Fine-tune an adapter on the source tasks first.
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_missing_value = "true")]
    pub ft: Option<bool>,
}

#[derive(Debug, Clone, Default, Args, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields, rename_all = "kebab-case")]
pub struct FewShotOptions {
    /// Shots per level, comma separated, increasing in steps of 5.
    #[arg(long = "k", value_delimiter = ',')]
    pub k_values: Option<Vec<usize>>,
    #[arg(long)]
    pub repeats: Option<u32>,
    /// Fine-tune an adapter on each few-shot set.
    #[arg(long, action = ArgAction::Set, num_args = 0..=1, default_missing_value = "true")]
    pub ft: Option<bool>,
}
