//! Centroid models and nearest-centroid scoring.
//!
//! A model holds one centroid per relevance level (the mean of that level's
//! training vectors) and assigns an essay the level whose centroid is most
//! similar. Ties go to the lowest level. Levels without training essays are
//! kept as absent and never predicted.
//!
//! Cross-task models pool essays from several source tasks. In the
//! task-independent mode every essay vector has its task-prompt vector
//! subtracted before pooling, and a target essay has its own task-prompt
//! vector subtracted before scoring. When a [`LinearAdapter`] is attached it
//! is applied to every vector (essays and prompts) before subtraction.

use std::collections::BTreeMap;
use std::fs;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::corpus::{Level, LevelIndex};
use crate::embedding::{cosine, Embedding, EmbeddingStore, Similarity};
use crate::finetune::LinearAdapter;
use crate::par::{self, Execution};
use crate::{Error, Result};

pub const MODEL_FORMAT: &str = "relgrade-centroids/1";

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Mode {
    TaskSpecific,
    CrossTaskVanilla,
    CrossTaskIndependent,
}

impl Mode {
    pub fn is_cross_task(self) -> bool {
        !matches!(self, Mode::TaskSpecific)
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub tasks: Vec<String>,
    pub adapter_hash: Option<String>,
    pub store_hashes: Vec<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LevelCentroid {
    pub level: Level,
    pub count: usize,
    /// `None` when no training essay has this level.
    pub centroid: Option<Embedding>,
}

/// Preprocessing shared by fitting and scoring.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct FitOptions {
    pub sim: Similarity,
    /// L2-normalize vectors (after adapter and prompt subtraction) before
    /// averaging and before scoring.
    pub normalize: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CentroidModel {
    pub format: String,
    pub mode: Mode,
    pub sim: Similarity,
    pub normalize: bool,
    pub dim: usize,
    pub min_level: Level,
    pub max_level: Level,
    pub levels: Vec<LevelCentroid>,
    pub adapter: Option<LinearAdapter>,
    pub provenance: Provenance,
    pub warnings: Vec<String>,
}

/// Result of scoring one essay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoredEssay {
    pub essay_id: String,
    /// Nearest-centroid level.
    pub level: Level,
    /// Prompt-similarity score in `[0, r_max]`.
    pub prompt_score: Option<f64>,
    /// `(level + prompt_score) / 2`.
    pub blended: Option<f64>,
    /// `blended` rounded half-up and clamped to the target range.
    pub blended_level: Option<Level>,
    pub similarities: BTreeMap<Level, f64>,
}

impl ScoredEssay {
    /// The level used for evaluation: the blended level when present.
    pub fn final_level(&self) -> Level {
        self.blended_level.unwrap_or(self.level)
    }
}

/// Which test vector feeds the prompt-similarity score.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum PromptSimilarityInput {
    /// The essay vector as encoded (after any adapter).
    #[default]
    Raw,
    /// The essay vector with the target prompt subtracted.
    Subtracted,
}

/// Target task information for cross-task scoring.
#[derive(Debug, Clone, Copy)]
pub struct CrossTaskTarget<'a> {
    pub prompt: Option<&'a Embedding>,
    pub min_level: Level,
    pub max_level: Level,
    pub blend: bool,
    pub prompt_similarity: PromptSimilarityInput,
}

fn prepare(v: &[f64], adapter: Option<&LinearAdapter>, prompt: Option<&[f64]>, normalize: bool) -> Vec<f64> {
    let mut x = match adapter {
        Some(a) => a.apply_slice(v),
        None => v.to_vec(),
    };
    if let Some(p) = prompt {
        x.iter_mut().zip(p).for_each(|(a, b)| *a -= b);
    }
    if normalize {
        let n = crate::embedding::norm(&x);
        if n > 0.0 {
            x.iter_mut().for_each(|a| *a /= n);
        }
    }
    x
}

/// Running per-level sums in a fixed order.
struct Pool {
    sums: BTreeMap<Level, (Option<Vec<f64>>, usize)>,
}

impl Pool {
    fn new(min: Level, max: Level) -> Self {
        Pool {
            sums: (min..=max).map(|l| (l, (None, 0))).collect(),
        }
    }

    fn add(&mut self, level: Level, v: Vec<f64>) {
        let (sum, count) = self.sums.entry(level).or_insert((None, 0));
        match sum {
            Some(s) => s.iter_mut().zip(&v).for_each(|(a, b)| *a += b),
            None => *sum = Some(v),
        }
        *count += 1;
    }

    fn finish(self) -> (Vec<LevelCentroid>, Vec<String>) {
        let mut warnings = Vec::new();
        let levels = self
            .sums
            .into_iter()
            .map(|(level, (sum, count))| {
                let centroid = sum.map(|s| {
                    let n = count as f64;
                    Embedding::from_finite(s.into_iter().map(|x| x / n).collect())
                });
                if centroid.is_none() {
                    warnings.push(format!("level {level} has no training essays and is never predicted"));
                }
                LevelCentroid { level, count, centroid }
            })
            .collect();
        (levels, warnings)
    }
}

fn check_adapter(adapter: Option<&LinearAdapter>, dim: usize) -> Result<()> {
    match adapter {
        Some(a) if a.dim() != dim => Err(Error::Dimension {
            id: None,
            expected: dim,
            found: a.dim(),
        }),
        _ => Ok(()),
    }
}

/// Same as [`fit_centroids`] without hashing inputs, for per-epoch refits.
pub(crate) fn fit_unrecorded(
    store: &EmbeddingStore,
    index: &LevelIndex,
    options: FitOptions,
    adapter: Option<&LinearAdapter>,
) -> Result<CentroidModel> {
    check_adapter(adapter, store.dim())?;
    let mut pool = Pool::new(index.min_level, index.max_level);
    for (id, level) in index.labeled() {
        let v = store.require(id)?;
        pool.add(level, prepare(v, adapter, None, options.normalize));
    }
    let (levels, warnings) = pool.finish();
    if levels.iter().all(|l| l.centroid.is_none()) {
        return Err(Error::EmptyModel);
    }
    Ok(CentroidModel {
        format: MODEL_FORMAT.into(),
        mode: Mode::TaskSpecific,
        sim: options.sim,
        normalize: options.normalize,
        dim: store.dim(),
        min_level: index.min_level,
        max_level: index.max_level,
        levels,
        adapter: adapter.cloned(),
        provenance: Provenance {
            tasks: vec![index.task_id.clone()],
            adapter_hash: None,
            store_hashes: Vec::new(),
        },
        warnings,
    })
}

/// Fit one centroid per level of `index` from the vectors in `store`.
pub fn fit_centroids(
    store: &EmbeddingStore,
    index: &LevelIndex,
    options: FitOptions,
    adapter: Option<&LinearAdapter>,
) -> Result<CentroidModel> {
    let mut model = fit_unrecorded(store, index, options, adapter)?;
    model.provenance.adapter_hash = adapter.map(LinearAdapter::content_hash).transpose()?;
    model.provenance.store_hashes = vec![store.content_hash()?];
    Ok(model)
}

/// One source task for cross-task fitting.
#[derive(Debug, Clone, Copy)]
pub struct SourceTask<'a> {
    pub store: &'a EmbeddingStore,
    pub index: &'a LevelIndex,
    pub prompt: Option<&'a Embedding>,
}

/// Pool labeled essays of several source tasks into one centroid model.
///
/// With `independent`, each essay vector has its own task-prompt vector
/// subtracted first. The model's level range is the union of the source
/// ranges; a level is pooled only from the tasks that have essays at it.
pub fn fit_centroids_cross_task(
    sources: &BTreeMap<String, SourceTask<'_>>,
    options: FitOptions,
    independent: bool,
    adapter: Option<&LinearAdapter>,
) -> Result<CentroidModel> {
    let first = sources
        .values()
        .next()
        .ok_or_else(|| Error::InvalidArgument("cross-task fitting needs at least one source task".into()))?;
    let dim = first.store.dim();
    check_adapter(adapter, dim)?;
    let min = sources.values().map(|s| s.index.min_level).min().unwrap_or(0);
    let max = sources.values().map(|s| s.index.max_level).max().unwrap_or(0);

    let mut pool = Pool::new(min, max);
    let mut store_hashes = Vec::new();
    for (task, source) in sources {
        if source.store.dim() != dim {
            return Err(Error::Dimension {
                id: None,
                expected: dim,
                found: source.store.dim(),
            });
        }
        store_hashes.push(source.store.content_hash()?);
        let prompt = if independent {
            let p = source.prompt.ok_or_else(|| {
                Error::InvalidArgument(format!("task `{task}` has no prompt vector for task-independent fitting"))
            })?;
            if p.dim() != dim {
                return Err(Error::Dimension {
                    id: Some(format!("prompt of {task}")),
                    expected: dim,
                    found: p.dim(),
                });
            }
            Some(prepare(p, adapter, None, false))
        } else {
            None
        };
        for (id, level) in source.index.labeled() {
            let v = source.store.require(id)?;
            pool.add(level, prepare(v, adapter, prompt.as_deref(), options.normalize));
        }
    }
    store_hashes.dedup();
    let (levels, warnings) = pool.finish();
    if levels.iter().all(|l| l.centroid.is_none()) {
        return Err(Error::EmptyModel);
    }
    for w in &warnings {
        log::warn!("{w}");
    }
    Ok(CentroidModel {
        format: MODEL_FORMAT.into(),
        mode: if independent {
            Mode::CrossTaskIndependent
        } else {
            Mode::CrossTaskVanilla
        },
        sim: options.sim,
        normalize: options.normalize,
        dim,
        min_level: min,
        max_level: max,
        levels,
        adapter: adapter.cloned(),
        provenance: Provenance {
            tasks: sources.keys().cloned().collect(),
            adapter_hash: adapter.map(LinearAdapter::content_hash).transpose()?,
            store_hashes,
        },
        warnings,
    })
}

impl CentroidModel {
    pub fn r_max(&self) -> Level {
        self.max_level
    }

    pub fn centroid(&self, level: Level) -> Option<&Embedding> {
        self.levels.iter().find(|l| l.level == level).and_then(|l| l.centroid.as_ref())
    }

    pub fn present_levels(&self) -> impl Iterator<Item = Level> + '_ {
        self.levels.iter().filter(|l| l.centroid.is_some()).map(|l| l.level)
    }

    fn check_dim(&self, v: &Embedding) -> Result<()> {
        if v.dim() != self.dim {
            return Err(Error::Dimension {
                id: None,
                expected: self.dim,
                found: v.dim(),
            });
        }
        Ok(())
    }

    /// Argmax over present levels within `[lo, hi]`; ties go to the lowest.
    fn nearest(&self, x: &[f64], lo: Level, hi: Level) -> Result<(Level, BTreeMap<Level, f64>)> {
        let mut best: Option<(Level, f64)> = None;
        let mut sims = BTreeMap::new();
        for lc in &self.levels {
            let Some(c) = &lc.centroid else { continue };
            if lc.level < lo || lc.level > hi {
                continue;
            }
            let s = self.sim.apply(x, c);
            sims.insert(lc.level, s);
            if best.is_none_or(|(_, b)| s > b) {
                best = Some((lc.level, s));
            }
        }
        best.map(|(l, _)| (l, sims)).ok_or(Error::EmptyModel)
    }

    /// Nearest-centroid level of `e_t` (task-specific or vanilla models).
    pub fn score(&self, essay_id: &str, e_t: &Embedding) -> Result<ScoredEssay> {
        self.check_dim(e_t)?;
        let x = prepare(e_t, self.adapter.as_ref(), None, self.normalize);
        let (level, similarities) = self.nearest(&x, self.min_level, self.max_level)?;
        Ok(ScoredEssay {
            essay_id: essay_id.to_string(),
            level,
            prompt_score: None,
            blended: None,
            blended_level: None,
            similarities,
        })
    }

    /// Score an essay of an unseen target task.
    ///
    /// Only levels inside the target range are candidates. With `blend`, the
    /// prompt-similarity score is `clamp(cos(e_t, p), 0, 1) * max_level` and
    /// the blended score is its average with the nearest-centroid level.
    pub fn score_cross_task(&self, essay_id: &str, e_t: &Embedding, target: CrossTaskTarget<'_>) -> Result<ScoredEssay> {
        if !self.mode.is_cross_task() {
            return Err(Error::InvalidArgument("score_cross_task needs a cross-task model".into()));
        }
        self.check_dim(e_t)?;
        let needs_prompt = self.mode == Mode::CrossTaskIndependent || target.blend;
        let prompt = match (needs_prompt, target.prompt) {
            (true, None) => return Err(Error::InvalidArgument("target prompt vector required".into())),
            (_, Some(p)) => {
                self.check_dim(p)?;
                Some(prepare(p, self.adapter.as_ref(), None, false))
            }
            (false, None) => None,
        };
        let raw = prepare(e_t, self.adapter.as_ref(), None, false);
        let subtracted = prompt
            .as_ref()
            .map(|p| raw.iter().zip(p).map(|(a, b)| a - b).collect::<Vec<f64>>());
        let mut x = match (self.mode, &subtracted) {
            (Mode::CrossTaskIndependent, Some(s)) => s.clone(),
            _ => raw.clone(),
        };
        if self.normalize {
            let n = crate::embedding::norm(&x);
            if n > 0.0 {
                x.iter_mut().for_each(|a| *a /= n);
            }
        }
        let (level, similarities) = self.nearest(&x, target.min_level, target.max_level)?;
        let mut scored = ScoredEssay {
            essay_id: essay_id.to_string(),
            level,
            prompt_score: None,
            blended: None,
            blended_level: None,
            similarities,
        };
        if target.blend {
            let p = prompt.as_deref().unwrap_or_default();
            let probe = match target.prompt_similarity {
                PromptSimilarityInput::Raw => raw.as_slice(),
                PromptSimilarityInput::Subtracted => subtracted.as_deref().unwrap_or(raw.as_slice()),
            };
            let (s, r_star, rounded) = blend(level, cosine(probe, p), target.min_level, target.max_level);
            scored.prompt_score = Some(s);
            scored.blended = Some(r_star);
            scored.blended_level = Some(rounded);
        }
        Ok(scored)
    }

    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        let mut out = serde_json::to_vec_pretty(self)?;
        out.push(b'\n');
        Ok(out)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        fs::write(path, self.to_bytes()?).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let raw = fs::read(path).map_err(|e| Error::io(path, e))?;
        let model: CentroidModel = serde_json::from_slice(&raw).map_err(|e| Error::parse(path, e.line(), e.to_string()))?;
        if model.format != MODEL_FORMAT {
            return Err(Error::parse(path, 1, format!("unsupported model format `{}`", model.format)));
        }
        Ok(model)
    }
}

/// Prompt-similarity score, blended score and its rounded level.
///
/// `S = clamp(similarity, 0, 1) * max_level`, `R* = (level + S) / 2`, and the
/// rounded level is `floor(R* + 0.5)` clamped to `[min_level, max_level]`.
pub fn blend(level: Level, similarity: f64, min_level: Level, max_level: Level) -> (f64, f64, Level) {
    let s = similarity.clamp(0.0, 1.0) * max_level as f64;
    let r_star = (level as f64 + s) / 2.0;
    let rounded = ((r_star + 0.5).floor() as Level).clamp(min_level, max_level);
    (s, r_star, rounded)
}

/// Score many essays; output order follows `items`.
pub fn score_batch(model: &CentroidModel, items: &[(&str, &Embedding)], exec: Execution) -> Result<Vec<ScoredEssay>> {
    par::map(exec, items, |(id, v)| model.score(id, v)).into_iter().collect()
}

pub fn score_batch_cross_task(
    model: &CentroidModel,
    items: &[(&str, &Embedding)],
    target: CrossTaskTarget<'_>,
    exec: Execution,
) -> Result<Vec<ScoredEssay>> {
    par::map(exec, items, |(id, v)| model.score_cross_task(id, v, target))
        .into_iter()
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn emb(v: &[f64]) -> Embedding {
        Embedding::new(v.to_vec()).unwrap()
    }

    fn store(dim: usize, rows: &[(&str, &[f64])]) -> EmbeddingStore {
        let mut s = EmbeddingStore::new(dim, "test").unwrap();
        for (id, v) in rows {
            s.insert(*id, emb(v)).unwrap();
        }
        s
    }

    fn index(task: &str, min: Level, max: Level, levels: &[(Level, &[&str])]) -> LevelIndex {
        let mut idx = LevelIndex::empty(task, min, max);
        for (l, ids) in levels {
            idx.levels.insert(*l, ids.iter().map(|s| s.to_string()).collect());
        }
        idx
    }

    fn cosine_opts() -> FitOptions {
        FitOptions {
            sim: Similarity::Cosine,
            normalize: false,
        }
    }

    #[test]
    fn centroid_is_mean() {
        let s = store(2, &[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0]), ("c", &[-0.0, 3.0])]);
        let m = fit_centroids(&s, &index("T", 0, 3, &[(2, &["a", "b"]), (1, &["c"])]), cosine_opts(), None).unwrap();
        assert_eq!(m.centroid(2).unwrap().as_slice(), &[0.5, 0.5]);
        // Single essay: bit-exact copy, including the sign of zero.
        let c1 = m.centroid(1).unwrap();
        assert_eq!(c1[0].to_bits(), (-0.0f64).to_bits());
        assert_eq!(c1[1], 3.0);
        assert!(m.centroid(0).is_none());
        assert_eq!(m.levels.iter().map(|l| l.count).collect::<Vec<_>>(), [0, 1, 2, 0]);
        assert_eq!(m.warnings.len(), 2);
    }

    #[test]
    fn fit_errors() {
        let s = store(2, &[("a", &[1.0, 0.0])]);
        assert!(matches!(
            fit_centroids(&s, &index("T", 0, 1, &[]), cosine_opts(), None),
            Err(Error::EmptyModel)
        ));
        let err = fit_centroids(&s, &index("T", 0, 1, &[(0, &["zz"])]), cosine_opts(), None).unwrap_err();
        assert!(err.to_string().contains("zz"));
        let wrong = LinearAdapter::identity(3);
        assert!(fit_centroids(&s, &index("T", 0, 1, &[(0, &["a"])]), cosine_opts(), Some(&wrong)).is_err());
    }

    #[test]
    fn centroids_match_reversed_summation() {
        let mut r = crate::rng::rng(5);
        let mut rows = Vec::new();
        for l in 0..4 {
            for i in 0..10 {
                let v: Vec<f64> = (0..6).map(|_| r.random_range(-1.0..1.0)).collect();
                rows.push((format!("l{l}e{i}"), l as Level, v));
            }
        }
        let mut s = EmbeddingStore::new(6, "t").unwrap();
        let mut idx = LevelIndex::empty("T", 0, 3);
        for (id, l, v) in &rows {
            s.insert(id.clone(), emb(v)).unwrap();
            idx.levels.get_mut(l).unwrap().push(id.clone());
        }
        let m = fit_centroids(&s, &idx, cosine_opts(), None).unwrap();
        for l in 0..4 {
            let members: Vec<&Vec<f64>> = rows.iter().filter(|r| r.1 == l).map(|r| &r.2).collect();
            for d in 0..6 {
                let rev: f64 = members.iter().rev().map(|v| v[d]).sum::<f64>() / members.len() as f64;
                assert!((m.centroid(l).unwrap()[d] - rev).abs() < 1e-12);
            }
        }
    }

    fn two_level_model() -> CentroidModel {
        let s = store(2, &[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        fit_centroids(&s, &index("T", 0, 1, &[(0, &["a"]), (1, &["b"])]), cosine_opts(), None).unwrap()
    }

    #[test]
    fn score_examples() {
        let m = two_level_model();
        assert_eq!(m.score("t", &emb(&[0.9, 0.1])).unwrap().level, 0);
        assert_eq!(m.score("t", &emb(&[0.1, 0.9])).unwrap().level, 1);
        // Equidistant: lowest level wins.
        assert_eq!(m.score("t", &emb(&[1.0, 1.0])).unwrap().level, 0);
        assert!(m.score("t", &emb(&[1.0, 1.0, 1.0])).is_err());
    }

    #[test]
    fn score_matches_exhaustive_scan() {
        let mut r = crate::rng::rng(77);
        let mut s = EmbeddingStore::new(5, "t").unwrap();
        let mut idx = LevelIndex::empty("T", 0, 3);
        for l in 0..4 {
            let id = format!("c{l}");
            s.insert(id.clone(), emb(&(0..5).map(|_| r.random_range(-1.0..1.0)).collect::<Vec<_>>())).unwrap();
            idx.levels.get_mut(&l).unwrap().push(id);
        }
        for sim in [Similarity::Cosine, Similarity::Euclidean] {
            let m = fit_centroids(&s, &idx, FitOptions { sim, normalize: false }, None).unwrap();
            for _ in 0..50 {
                let probe = emb(&(0..5).map(|_| r.random_range(-1.0..1.0)).collect::<Vec<_>>());
                let mut best = (0, f64::NEG_INFINITY);
                for l in 0..4 {
                    let v = sim.apply(&probe, s.get(&format!("c{l}")).unwrap());
                    if v > best.1 {
                        best = (l, v);
                    }
                }
                assert_eq!(m.score("p", &probe).unwrap().level, best.0);
            }
        }
    }

    #[test]
    fn cross_task_exact_cancellation() {
        let s1 = store(3, &[("x", &[1.0, 0.0, 1.0])]);
        let s2 = store(3, &[("y", &[0.0, 1.0, 1.0])]);
        let i1 = index("A", 0, 1, &[(1, &["x"])]);
        let i2 = index("B", 0, 1, &[(1, &["y"])]);
        let p1 = emb(&[1.0, 0.0, 0.0]);
        let p2 = emb(&[0.0, 1.0, 0.0]);
        let sources: BTreeMap<String, SourceTask> = [
            ("A".to_string(), SourceTask { store: &s1, index: &i1, prompt: Some(&p1) }),
            ("B".to_string(), SourceTask { store: &s2, index: &i2, prompt: Some(&p2) }),
        ]
        .into_iter()
        .collect();
        let ind = fit_centroids_cross_task(&sources, cosine_opts(), true, None).unwrap();
        assert_eq!(ind.mode, Mode::CrossTaskIndependent);
        assert_eq!(ind.centroid(1).unwrap().as_slice(), &[0.0, 0.0, 1.0]);
        let van = fit_centroids_cross_task(&sources, cosine_opts(), false, None).unwrap();
        assert_eq!(van.centroid(1).unwrap().as_slice(), &[0.5, 0.5, 1.0]);
        assert!(ind.centroid(0).is_none());
        assert_eq!(ind.provenance.tasks, ["A", "B"]);
    }

    #[test]
    fn cross_task_partial_levels() {
        // Three sources; only two declare level 4.
        let s = store(2, &[("a0", &[1.0, 0.0]), ("b0", &[1.0, 0.1]), ("b4", &[0.0, 1.0]), ("c4", &[0.1, 1.0]), ("c4b", &[0.2, 1.0])]);
        let ia = index("A", 0, 3, &[(0, &["a0"])]);
        let ib = index("B", 0, 4, &[(0, &["b0"]), (4, &["b4"])]);
        let ic = index("C", 0, 4, &[(4, &["c4", "c4b"])]);
        let sources: BTreeMap<String, SourceTask> = [("A", &ia), ("B", &ib), ("C", &ic)]
            .into_iter()
            .map(|(t, i)| (t.to_string(), SourceTask { store: &s, index: i, prompt: None }))
            .collect();
        let m = fit_centroids_cross_task(&sources, cosine_opts(), false, None).unwrap();
        assert_eq!((m.min_level, m.max_level), (0, 4));
        let count = |l| m.levels.iter().find(|c| c.level == l).unwrap().count;
        assert_eq!(count(4), 3);
        assert_eq!(count(0), 2);
        assert!(m.centroid(2).is_none());
        // Independent mode without prompts is rejected.
        assert!(fit_centroids_cross_task(&sources, cosine_opts(), true, None).is_err());
    }

    fn cross_model() -> CentroidModel {
        let s = store(2, &[("a", &[1.0, 0.0]), ("b", &[0.0, 1.0])]);
        let i = index("A", 0, 4, &[(0, &["a"]), (3, &["b"])]);
        let sources: BTreeMap<String, SourceTask> =
            [("A".to_string(), SourceTask { store: &s, index: &i, prompt: None })].into_iter().collect();
        fit_centroids_cross_task(&sources, cosine_opts(), false, None).unwrap()
    }

    #[test]
    fn blend_examples() {
        let m = cross_model();
        let e = emb(&[0.0, 2.0]);
        let p = emb(&[0.0, 1.0]);
        let target = CrossTaskTarget {
            prompt: Some(&p),
            min_level: 0,
            max_level: 4,
            blend: true,
            prompt_similarity: PromptSimilarityInput::Raw,
        };
        let s = m.score_cross_task("t", &e, target).unwrap();
        assert_eq!(s.level, 3);
        assert_eq!(s.prompt_score, Some(4.0));
        assert_eq!(s.blended, Some(3.5));
        assert_eq!(s.blended_level, Some(4));

        // Negative similarity clamps to zero.
        let p_neg = emb(&[-0.2, -(1.0f64 - 0.04).sqrt()]);
        let e2 = emb(&[0.0, 1.0]);
        let s = m.score_cross_task("t", &e2, CrossTaskTarget { prompt: Some(&p_neg), ..target }).unwrap();
        assert_eq!(s.prompt_score, Some(0.0));
        assert_eq!(blend(3, -0.2, 0, 4), (0.0, 1.5, 2));

        let no_blend = m.score_cross_task("t", &e, CrossTaskTarget { blend: false, prompt: None, ..target }).unwrap();
        assert!(no_blend.blended.is_none() && no_blend.prompt_score.is_none());
        assert!(two_level_model().score_cross_task("t", &e, target).is_err());
    }

    #[test]
    fn target_range_limits_candidates() {
        let m = cross_model();
        let target = CrossTaskTarget {
            prompt: None,
            min_level: 0,
            max_level: 2,
            blend: false,
            prompt_similarity: PromptSimilarityInput::Raw,
        };
        // Closest centroid is level 3, which the target task does not have.
        let s = m.score_cross_task("t", &emb(&[0.1, 1.0]), target).unwrap();
        assert_eq!(s.level, 0);
    }

    #[test]
    fn model_file_roundtrip() {
        let m = two_level_model();
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("m.json");
        m.save(&p).unwrap();
        assert_eq!(CentroidModel::load(&p).unwrap(), m);
    }
}
