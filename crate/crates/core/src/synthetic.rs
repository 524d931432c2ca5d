//! Generated corpora with known structure.
//!
//! Each generator returns essays, their task prompts and an embedding store
//! holding one vector per essay plus, where relevant, a prompt vector per
//! task under [`prompt_vector_id`]. Output depends only on the seed.

use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use crate::corpus::{Essay, Level, PromptSet, TaskPrompt};
use crate::embedding::{prompt_vector_id, Embedding, EmbeddingStore};
use crate::rng;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticCorpus {
    pub essays: Vec<Essay>,
    pub prompts: PromptSet,
    pub store: EmbeddingStore,
}

impl SyntheticCorpus {
    fn new(dim: usize, tag: &str) -> Result<Self> {
        Ok(SyntheticCorpus {
            essays: Vec::new(),
            prompts: PromptSet::new(),
            store: EmbeddingStore::new(dim, format!("synthetic:{tag}"))?,
        })
    }

    fn add_task(&mut self, task_id: &str, max_level: Level, prompt: Option<Vec<f64>>) -> Result<()> {
        self.prompts.insert(
            task_id.to_string(),
            TaskPrompt {
                task_id: task_id.to_string(),
                prompt_text: format!("Write about topic {task_id}."),
                min_level: 0,
                max_level,
            },
        );
        if let Some(p) = prompt {
            self.store.insert(prompt_vector_id(task_id), Embedding::new(p)?)?;
        }
        Ok(())
    }

    fn add_essay(&mut self, task_id: &str, level: Level, vector: Vec<f64>) -> Result<()> {
        let id = format!("{task_id}-{}", self.essays.len());
        self.store.insert(id.clone(), Embedding::new(vector)?)?;
        self.essays.push(Essay {
            text: format!("essay {id} on {task_id}"),
            id,
            task_id: task_id.to_string(),
            relevance: Some(level),
        });
        Ok(())
    }

    pub fn essays_of(&self, task_id: &str) -> Vec<&Essay> {
        self.essays.iter().filter(|e| e.task_id == task_id).collect()
    }
}

fn basis(dim: usize, i: usize) -> Vec<f64> {
    let mut v = vec![0.0; dim];
    v[i] = 1.0;
    v
}

fn noisy(rng: &mut ChaCha8Rng, base: &[f64], sigma: f64) -> Vec<f64> {
    let normal = Normal::new(0.0, sigma).expect("sigma is finite and non-negative");
    base.iter().map(|b| b + normal.sample(rng)).collect()
}

/// Levels `0..levels` along orthogonal unit directions with isotropic
/// Gaussian noise. Essays are interleaved across levels.
pub fn separable(task_id: &str, levels: usize, per_level: usize, sigma: f64, dim: usize, seed: u64) -> Result<SyntheticCorpus> {
    assert!(levels >= 1 && levels <= dim, "need one dimension per level");
    let mut rng = rng::rng(rng::stream_seed(seed, "separable"));
    let mut corpus = SyntheticCorpus::new(dim, "separable")?;
    corpus.add_task(task_id, levels as Level - 1, None)?;
    for _ in 0..per_level {
        for level in 0..levels {
            let v = noisy(&mut rng, &basis(dim, level), sigma);
            corpus.add_essay(task_id, level as Level, v)?;
        }
    }
    Ok(corpus)
}

/// Per-level essay counts of the two source tasks in [`cross_task`].
pub const CROSS_TASK_SOURCE_COUNTS: [[usize; 4]; 2] = [[2, 5, 10, 30], [30, 10, 5, 2]];

/// Two source tasks (`src1`, `src2`) and a held-out `target`, all with
/// levels 0..=3, where every essay vector is `p_task + d_level + noise`.
///
/// Prompt vectors have norm 10 and lie in a subspace orthogonal to the unit
/// level directions. The sources have opposite level distributions (see
/// [`CROSS_TASK_SOURCE_COUNTS`]), so pooled raw centroids mix task identity
/// into level identity; the target prompt leans towards `src1`'s.
pub fn cross_task(target_per_level: usize, sigma: f64, seed: u64) -> Result<SyntheticCorpus> {
    let dim = 16;
    let mut rng = rng::rng(rng::stream_seed(seed, "cross-task"));
    let mut corpus = SyntheticCorpus::new(dim, "cross-task")?;
    let unit_in_prompt_space = |rng: &mut ChaCha8Rng| {
        let mut v = vec![0.0; dim];
        for x in &mut v[4..] {
            *x = rng.random_range(-1.0..1.0);
        }
        let n = crate::embedding::norm(&v);
        v.iter().map(|x| x / n).collect::<Vec<f64>>()
    };
    let p1: Vec<f64> = unit_in_prompt_space(&mut rng).iter().map(|x| x * 10.0).collect();
    let p2: Vec<f64> = unit_in_prompt_space(&mut rng).iter().map(|x| x * 10.0).collect();
    let other = unit_in_prompt_space(&mut rng);
    let mixed: Vec<f64> = p1.iter().zip(&other).map(|(a, b)| 0.08 * a + 0.6 * b).collect();
    let n = crate::embedding::norm(&mixed);
    let p3: Vec<f64> = mixed.iter().map(|x| x * 10.0 / n).collect();

    for (task, prompt, counts) in [
        ("src1", &p1, CROSS_TASK_SOURCE_COUNTS[0]),
        ("src2", &p2, CROSS_TASK_SOURCE_COUNTS[1]),
        ("target", &p3, [target_per_level; 4]),
    ] {
        corpus.add_task(task, 3, Some(prompt.clone()))?;
        for (level, &count) in counts.iter().enumerate() {
            let base: Vec<f64> = prompt.iter().zip(basis(dim, level)).map(|(p, d)| p + d).collect();
            for _ in 0..count {
                let v = noisy(&mut rng, &base, sigma);
                corpus.add_essay(task, level as Level, v)?;
            }
        }
    }
    Ok(corpus)
}

/// Random orthogonal matrix (row-major) by Gram-Schmidt on Gaussian rows.
pub fn random_rotation(dim: usize, rng: &mut ChaCha8Rng) -> Vec<Vec<f64>> {
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut rows: Vec<Vec<f64>> = Vec::with_capacity(dim);
    while rows.len() < dim {
        let mut v: Vec<f64> = (0..dim).map(|_| normal.sample(rng)).collect();
        for r in &rows {
            let d = crate::embedding::dot(&v, r);
            v.iter_mut().zip(r).for_each(|(a, b)| *a -= d * b);
        }
        let n = crate::embedding::norm(&v);
        if n > 1e-6 {
            rows.push(v.iter().map(|x| x / n).collect());
        }
    }
    rows
}

/// Levels carried by a few latent dimensions and hidden by large nuisance
/// variance in the rest, then mixed by a random rotation.
///
/// The latent vector of a level-`l` essay is the unit direction `l` plus
/// `N(0, 0.1²)` noise in its first `levels` coordinates and `N(0, nuisance²)`
/// in the others. A rotation alone leaves cosine similarity unchanged; what
/// the rotation hides is which directions carry the nuisance, so an adapter
/// must learn to damp a subspace that is not axis-aligned.
pub fn nuisance(task_id: &str, levels: usize, per_level: usize, dim: usize, nuisance: f64, seed: u64) -> Result<SyntheticCorpus> {
    assert!(levels < dim, "need nuisance dimensions");
    let mut rng = rng::rng(rng::stream_seed(seed, "nuisance"));
    let q = random_rotation(dim, &mut rng);
    let signal = Normal::new(0.0, 0.1).expect("finite sigma");
    let noise = Normal::new(0.0, nuisance).expect("finite sigma");
    let mut corpus = SyntheticCorpus::new(dim, "nuisance")?;
    corpus.add_task(task_id, levels as Level - 1, None)?;
    for _ in 0..per_level {
        for level in 0..levels {
            let z: Vec<f64> = (0..dim)
                .map(|i| {
                    if i < levels {
                        f64::from(u8::from(i == level)) + signal.sample(&mut rng)
                    } else {
                        noise.sample(&mut rng)
                    }
                })
                .collect();
            let x = q.iter().map(|row| crate::embedding::dot(row, &z)).collect();
            corpus.add_essay(task_id, level as Level, x)?;
        }
    }
    Ok(corpus)
}
