//! Loading inputs and assembling per-task folds.

use std::collections::{BTreeMap, HashSet};
use std::path::Path;

use anyhow::{bail, Context, Result};

use relgrade_core::corpus::{
    build_level_index, generate_folds, load_essays, load_folds, load_prompts, write_folds, Essay, FoldSpec, Level,
    LevelIndex, PromptSet, TaskPrompt,
};
use relgrade_core::embedding::{load_store, prompt_vector_id, Embedding, EmbeddingStore};
use relgrade_core::hashing::file_sha256;
use relgrade_core::rng;

use crate::options::DataConfig;

pub struct Corpus {
    pub essays: Vec<Essay>,
    pub prompts: PromptSet,
    pub store: EmbeddingStore,
    /// File name to SHA-256 of every input read.
    pub input_hashes: BTreeMap<String, String>,
    pub warnings: Vec<String>,
}

fn hash_into(hashes: &mut BTreeMap<String, String>, path: &Path) -> Result<()> {
    hashes.insert(path.display().to_string(), file_sha256(path)?);
    Ok(())
}

impl Corpus {
    pub fn load(config: &DataConfig) -> Result<Self> {
        let prompts = load_prompts(&config.prompts)?;
        let essays = load_essays(&config.essays, &config.schema(), Some(&prompts))?;
        let store = load_store(&config.embeddings)?;
        let mut input_hashes = BTreeMap::new();
        for p in [&config.essays, &config.prompts, &config.embeddings] {
            hash_into(&mut input_hashes, p)?;
        }
        if let Some(f) = &config.folds {
            hash_into(&mut input_hashes, f)?;
        }
        for task in &config.tasks {
            if !prompts.contains_key(task) {
                bail!("unknown task `{task}`: not in {}", config.prompts.display());
            }
        }
        let mut warnings = Vec::new();
        let unlabeled = essays.iter().filter(|e| e.relevance.is_none()).count();
        if unlabeled > 0 {
            warnings.push(format!("{unlabeled} unscored essays are ignored"));
        }
        for w in &warnings {
            log::warn!("{w}");
        }
        Ok(Corpus {
            essays,
            prompts,
            store,
            input_hashes,
            warnings,
        })
    }

    /// Tasks selected by the config, in id order.
    pub fn tasks(&self, config: &DataConfig) -> Vec<String> {
        if config.tasks.is_empty() {
            self.prompts.keys().cloned().collect()
        } else {
            let mut t = config.tasks.clone();
            t.sort();
            t.dedup();
            t
        }
    }

    pub fn prompt(&self, task: &str) -> Result<&TaskPrompt> {
        self.prompts.get(task).with_context(|| format!("unknown task `{task}`"))
    }

    pub fn prompt_vector(&self, task: &str) -> Result<&Embedding> {
        let id = prompt_vector_id(task);
        self.store
            .get(&id)
            .with_context(|| format!("no prompt vector `{id}` in the embedding file"))
    }

    /// Labeled essays of `task`, in file order.
    pub fn labeled(&self, task: &str) -> Vec<&Essay> {
        self.essays
            .iter()
            .filter(|e| e.task_id == task && e.relevance.is_some())
            .collect()
    }

    pub fn index(&self, task: &str, ids: &[String]) -> Result<LevelIndex> {
        let keep: HashSet<&str> = ids.iter().map(String::as_str).collect();
        let essays = self.labeled(task).into_iter().filter(|e| keep.contains(e.id.as_str()));
        Ok(build_level_index(essays, self.prompt(task)?)?)
    }

    /// `(id, level)` for the labeled essays among `ids`, in `ids` order.
    pub fn gold(&self, task: &str, ids: &[String]) -> Vec<(String, Level)> {
        let levels: BTreeMap<&str, Level> = self
            .labeled(task)
            .into_iter()
            .map(|e| (e.id.as_str(), e.relevance.unwrap_or_default()))
            .collect();
        ids.iter()
            .filter_map(|id| levels.get(id.as_str()).map(|l| (id.clone(), *l)))
            .collect()
    }

    /// Folds of `task`: the fold file restricted to the task's labeled
    /// essays, or folds generated from the seed (and written to `out`).
    pub fn folds(&self, task: &str, config: &DataConfig) -> Result<Vec<FoldSpec>> {
        let labeled = self.labeled(task);
        let keep: HashSet<&str> = labeled.iter().map(|e| e.id.as_str()).collect();
        let folds = match &config.folds {
            Some(path) => load_folds(path)?.iter().map(|f| f.restrict(&keep)).collect(),
            None => {
                let ids: Vec<String> = labeled.iter().map(|e| e.id.clone()).collect();
                let folds = generate_folds(&ids, config.num_folds, rng::stream_seed(config.seed, task))?;
                write_folds(&config.out.join(format!("folds-{task}.jsonl")), &folds)?;
                folds
            }
        };
        if folds.iter().all(|f| f.test.is_empty()) {
            bail!("task `{task}` has no test essays in any fold");
        }
        Ok(folds)
    }
}
