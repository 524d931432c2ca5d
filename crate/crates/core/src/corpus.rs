//! Essays, task prompts, per-level indexes, fold definitions and few-shot
//! subsets.
//!
//! Everything here is immutable once built. Loading is single-threaded.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::fs;
use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::rng;
use crate::{Error, Result};

pub type Level = i64;

/// Literal used for an unscored essay in the relevance column.
pub const UNSCORED: &str = "-";

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct Essay {
    pub id: String,
    pub task_id: String,
    pub text: String,
    pub relevance: Option<Level>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct TaskPrompt {
    pub task_id: String,
    pub prompt_text: String,
    pub min_level: Level,
    pub max_level: Level,
}

impl TaskPrompt {
    pub fn levels(&self) -> impl Iterator<Item = Level> {
        self.min_level..=self.max_level
    }

    pub fn contains(&self, level: Level) -> bool {
        (self.min_level..=self.max_level).contains(&level)
    }
}

/// Task prompts keyed by task id.
pub type PromptSet = BTreeMap<String, TaskPrompt>;

/// Column mapping for delimited essay files.
///
/// Columns are addressed by header name. When the text column is the last
/// column and quoting is off, surplus delimiters are folded back into the
/// text.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct EssaySchema {
    pub id: String,
    pub task_id: String,
    pub text: String,
    pub relevance: Option<String>,
    pub delimiter: u8,
    pub quoted: bool,
    /// Keep only essays of these tasks; others are skipped before validation.
    pub tasks: Option<BTreeSet<String>>,
}

impl EssaySchema {
    /// `id<TAB>task_id<TAB>relevance<TAB>text` with a header line.
    pub fn canonical() -> Self {
        EssaySchema {
            id: "id".into(),
            task_id: "task_id".into(),
            text: "text".into(),
            relevance: Some("relevance".into()),
            delimiter: b'\t',
            quoted: false,
            tasks: None,
        }
    }

    /// The original ASAP layout (`essay_id`, `essay_set`, `essay`) with the
    /// relevance level read from `trait_column`.
    pub fn asap(trait_column: &str) -> Self {
        EssaySchema {
            id: "essay_id".into(),
            task_id: "essay_set".into(),
            text: "essay".into(),
            relevance: Some(trait_column.into()),
            delimiter: b'\t',
            quoted: false,
            tasks: None,
        }
    }
}

impl Default for EssaySchema {
    fn default() -> Self {
        Self::canonical()
    }
}

fn normalize_line_endings(text: &str) -> String {
    if text.contains('\r') {
        text.replace("\r\n", "\n").replace('\r', "\n")
    } else {
        text.to_string()
    }
}

fn parse_level(raw: &str) -> Option<std::result::Result<Level, ()>> {
    let raw = raw.trim();
    if raw.is_empty() || raw == UNSCORED {
        return None;
    }
    Some(raw.parse::<Level>().map_err(|_| ()))
}

/// Load essays from a delimited file.
///
/// When `prompts` is given, every essay's task must be declared there and its
/// relevance must lie within the task's level range.
pub fn load_essays(path: &Path, schema: &EssaySchema, prompts: Option<&PromptSet>) -> Result<Vec<Essay>> {
    let mut reader = csv::ReaderBuilder::new()
        .delimiter(schema.delimiter)
        .quoting(schema.quoted)
        .flexible(true)
        .has_headers(true)
        .from_path(path)
        .map_err(|e| match e.into_kind() {
            csv::ErrorKind::Io(io) => Error::io(path, io),
            other => Error::parse(path, 1, format!("{other:?}")),
        })?;

    let headers = reader
        .headers()
        .map_err(|e| Error::parse(path, 1, e.to_string()))?
        .clone();
    let column = |name: &str| -> Result<usize> {
        headers
            .iter()
            .position(|h| h.trim() == name)
            .ok_or_else(|| Error::parse(path, 1, format!("missing column `{name}`")))
    };
    let id_col = column(&schema.id)?;
    let task_col = column(&schema.task_id)?;
    let text_col = column(&schema.text)?;
    let rel_col = schema.relevance.as_deref().map(column).transpose()?;
    let width = headers.len();
    let text_is_last = text_col + 1 == width;
    let delimiter = char::from(schema.delimiter).to_string();

    let mut essays = Vec::new();
    let mut seen = HashSet::new();
    for record in reader.records() {
        let record = record.map_err(|e| {
            let line = e.position().map(|p| p.line() as usize).unwrap_or(0);
            Error::parse(path, line, e.to_string())
        })?;
        let line = record.position().map(|p| p.line() as usize).unwrap_or(0);
        if record.len() == 1 && record.get(0).is_some_and(|f| f.is_empty()) {
            continue;
        }
        if record.len() < width || (record.len() > width && !(text_is_last && !schema.quoted)) {
            return Err(Error::parse(
                path,
                line,
                format!("expected {width} fields, found {}", record.len()),
            ));
        }
        let text = if record.len() > width {
            record.iter().skip(text_col).collect::<Vec<_>>().join(&delimiter)
        } else {
            record[text_col].to_string()
        };

        let id = record[id_col].trim().to_string();
        let task_id = record[task_col].trim().to_string();
        if id.is_empty() {
            return Err(Error::parse(path, line, "empty id"));
        }
        if let Some(keep) = &schema.tasks {
            if !keep.contains(&task_id) {
                continue;
            }
        }
        let relevance = match rel_col.and_then(|c| parse_level(&record[c])) {
            None => None,
            Some(Ok(level)) => Some(level),
            Some(Err(())) => {
                return Err(Error::parse(
                    path,
                    line,
                    format!("relevance `{}` is not an integer", record[rel_col.unwrap_or(0)].trim()),
                ))
            }
        };
        if let Some(prompts) = prompts {
            let prompt = prompts
                .get(&task_id)
                .ok_or_else(|| Error::parse(path, line, format!("unknown task `{task_id}`")))?;
            if let Some(level) = relevance {
                if !prompt.contains(level) {
                    return Err(Error::parse(
                        path,
                        line,
                        Error::LevelOutOfRange {
                            id,
                            task: task_id,
                            level,
                            min: prompt.min_level,
                            max: prompt.max_level,
                        }
                        .to_string(),
                    ));
                }
            }
        }
        if !seen.insert(id.clone()) {
            return Err(Error::parse(path, line, Error::DuplicateId(id).to_string()));
        }
        essays.push(Essay {
            id,
            task_id,
            text: normalize_line_endings(&text),
            relevance,
        });
    }
    Ok(essays)
}

/// Write essays in the canonical TSV layout.
pub fn write_essays(path: &Path, essays: &[Essay]) -> Result<()> {
    let mut out = String::from("id\ttask_id\trelevance\ttext\n");
    for e in essays {
        let rel = e.relevance.map_or_else(|| UNSCORED.to_string(), |l| l.to_string());
        out.push_str(&format!("{}\t{}\t{}\t{}\n", e.id, e.task_id, rel, e.text.replace('\n', " ")));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Load a prompt file: `task_id<TAB>min_level<TAB>max_level<TAB>prompt_text`.
/// A leading header line starting with `task_id` is skipped.
pub fn load_prompts(path: &Path) -> Result<PromptSet> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut prompts = PromptSet::new();
    for (i, line) in raw.lines().enumerate() {
        let lineno = i + 1;
        if line.trim().is_empty() || (i == 0 && line.starts_with("task_id\t")) {
            continue;
        }
        let fields: Vec<&str> = line.splitn(4, '\t').collect();
        if fields.len() != 4 {
            return Err(Error::parse(path, lineno, format!("expected 4 fields, found {}", fields.len())));
        }
        let level = |s: &str| {
            s.trim()
                .parse::<Level>()
                .map_err(|_| Error::parse(path, lineno, format!("level `{s}` is not an integer")))
        };
        let prompt = TaskPrompt {
            task_id: fields[0].trim().to_string(),
            min_level: level(fields[1])?,
            max_level: level(fields[2])?,
            prompt_text: normalize_line_endings(fields[3]),
        };
        if prompt.min_level > prompt.max_level {
            return Err(Error::parse(path, lineno, "min_level exceeds max_level"));
        }
        if prompts.insert(prompt.task_id.clone(), prompt).is_some() {
            return Err(Error::parse(path, lineno, format!("duplicate task `{}`", fields[0].trim())));
        }
    }
    Ok(prompts)
}

pub fn write_prompts(path: &Path, prompts: &PromptSet) -> Result<()> {
    let mut out = String::new();
    for p in prompts.values() {
        out.push_str(&format!(
            "{}\t{}\t{}\t{}\n",
            p.task_id,
            p.min_level,
            p.max_level,
            p.prompt_text.replace('\n', " ")
        ));
    }
    fs::write(path, out).map_err(|e| Error::io(path, e))
}

/// Essay ids grouped by relevance level for one task (or a pool of tasks).
///
/// Every level in `[min_level, max_level]` has an entry, possibly empty.
/// Ids keep their input order within a level.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct LevelIndex {
    pub task_id: String,
    pub min_level: Level,
    pub max_level: Level,
    pub levels: BTreeMap<Level, Vec<String>>,
}

impl LevelIndex {
    pub fn empty(task_id: &str, min_level: Level, max_level: Level) -> Self {
        LevelIndex {
            task_id: task_id.to_string(),
            min_level,
            max_level,
            levels: (min_level..=max_level).map(|l| (l, Vec::new())).collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.levels.values().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn ids(&self, level: Level) -> &[String] {
        self.levels.get(&level).map(Vec::as_slice).unwrap_or(&[])
    }

    /// `(id, level)` pairs in level order.
    pub fn labeled(&self) -> impl Iterator<Item = (&str, Level)> + '_ {
        self.levels
            .iter()
            .flat_map(|(&l, ids)| ids.iter().map(move |id| (id.as_str(), l)))
    }

    pub fn level_of(&self, id: &str) -> Option<Level> {
        self.labeled().find(|(i, _)| *i == id).map(|(_, l)| l)
    }

    /// Keep only the ids in `keep`, preserving order.
    pub fn restrict(&self, keep: &HashSet<&str>) -> LevelIndex {
        LevelIndex {
            task_id: self.task_id.clone(),
            min_level: self.min_level,
            max_level: self.max_level,
            levels: self
                .levels
                .iter()
                .map(|(&l, ids)| (l, ids.iter().filter(|id| keep.contains(id.as_str())).cloned().collect()))
                .collect(),
        }
    }

    /// Pool several task indexes into one whose range covers all of them.
    pub fn pooled(task_id: &str, parts: &[&LevelIndex]) -> Result<LevelIndex> {
        let min = parts.iter().map(|p| p.min_level).min().ok_or(Error::EmptyModel)?;
        let max = parts.iter().map(|p| p.max_level).max().ok_or(Error::EmptyModel)?;
        let mut out = LevelIndex::empty(task_id, min, max);
        for part in parts {
            for (&l, ids) in &part.levels {
                out.levels.entry(l).or_default().extend(ids.iter().cloned());
            }
        }
        Ok(out)
    }
}

pub fn build_level_index<'a>(
    essays: impl IntoIterator<Item = &'a Essay>,
    prompt: &TaskPrompt,
) -> Result<LevelIndex> {
    let mut index = LevelIndex::empty(&prompt.task_id, prompt.min_level, prompt.max_level);
    for essay in essays {
        if essay.task_id != prompt.task_id {
            return Err(Error::WrongTask {
                id: essay.id.clone(),
                found: essay.task_id.clone(),
                expected: prompt.task_id.clone(),
            });
        }
        let level = essay.relevance.ok_or_else(|| Error::Unlabeled(essay.id.clone()))?;
        if !prompt.contains(level) {
            return Err(Error::LevelOutOfRange {
                id: essay.id.clone(),
                task: prompt.task_id.clone(),
                level,
                min: prompt.min_level,
                max: prompt.max_level,
            });
        }
        index.levels.entry(level).or_default().push(essay.id.clone());
    }
    Ok(index)
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FoldSpec {
    pub fold_id: u32,
    pub train: Vec<String>,
    pub dev: Vec<String>,
    pub test: Vec<String>,
}

impl FoldSpec {
    pub fn validate(&self) -> Result<()> {
        let mut owner: HashMap<&str, &'static str> = HashMap::new();
        for (name, ids) in [("train", &self.train), ("dev", &self.dev), ("test", &self.test)] {
            for id in ids {
                if let Some(first) = owner.insert(id.as_str(), name) {
                    return Err(Error::FoldOverlap {
                        fold: self.fold_id,
                        id: id.clone(),
                        first,
                        second: name,
                    });
                }
            }
        }
        Ok(())
    }

    /// The same fold with every split filtered to `keep`.
    pub fn restrict(&self, keep: &HashSet<&str>) -> FoldSpec {
        let f = |ids: &[String]| ids.iter().filter(|i| keep.contains(i.as_str())).cloned().collect();
        FoldSpec {
            fold_id: self.fold_id,
            train: f(&self.train),
            dev: f(&self.dev),
            test: f(&self.test),
        }
    }
}

/// Load a fold file: one JSON object per line with `fold_id`, `train`, `dev`
/// and `test` id arrays.
pub fn load_folds(path: &Path) -> Result<Vec<FoldSpec>> {
    let raw = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut folds = Vec::new();
    let mut ids = HashSet::new();
    for (i, line) in raw.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let fold: FoldSpec =
            serde_json::from_str(line).map_err(|e| Error::parse(path, i + 1, e.to_string()))?;
        fold.validate()?;
        if !ids.insert(fold.fold_id) {
            return Err(Error::parse(path, i + 1, format!("duplicate fold_id {}", fold.fold_id)));
        }
        folds.push(fold);
    }
    Ok(folds)
}

pub fn write_folds(path: &Path, folds: &[FoldSpec]) -> Result<()> {
    let mut file = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    for fold in folds {
        let line = serde_json::to_string(fold)?;
        writeln!(file, "{line}").map_err(|e| Error::io(path, e))?;
    }
    Ok(())
}

/// Deterministic k-fold split: ids are shuffled once, fold `i` tests on chunk
/// `i`, validates on chunk `i + 1` (mod k) and trains on the rest.
pub fn generate_folds(ids: &[String], k: usize, seed: u64) -> Result<Vec<FoldSpec>> {
    if k < 3 {
        return Err(Error::InvalidArgument("need at least 3 folds".into()));
    }
    let mut order = ids.to_vec();
    order.shuffle(&mut rng::rng(rng::stream_seed(seed, "folds")));
    let chunk = |c: usize| -> Vec<String> {
        order.iter().enumerate().filter(|(i, _)| i % k == c).map(|(_, id)| id.clone()).collect()
    };
    Ok((0..k)
        .map(|f| {
            let dev_chunk = (f + 1) % k;
            FoldSpec {
                fold_id: f as u32,
                train: (0..k).filter(|&c| c != f && c != dev_chunk).flat_map(chunk).collect(),
                dev: chunk(dev_chunk),
                test: chunk(f),
            }
        })
        .collect())
}

/// One sampled few-shot training set.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotSet {
    pub repeat: u32,
    pub k: usize,
    pub sub_seed: u64,
    pub ids: BTreeMap<Level, Vec<String>>,
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FewShotPlan {
    pub task_id: String,
    pub k_values: Vec<usize>,
    pub repeats: u32,
    pub seed: u64,
    pub mixer: String,
    pub sets: Vec<FewShotSet>,
}

/// Step between consecutive k values in a few-shot sweep.
pub const FEW_SHOT_STEP: usize = 5;

impl FewShotPlan {
    pub fn get(&self, repeat: u32, k: usize) -> Option<&FewShotSet> {
        self.sets.iter().find(|s| s.repeat == repeat && s.k == k)
    }

    /// The sampled set as a level index over the source index's range.
    pub fn index(&self, source: &LevelIndex, repeat: u32, k: usize) -> Option<LevelIndex> {
        let set = self.get(repeat, k)?;
        let mut index = LevelIndex::empty(&source.task_id, source.min_level, source.max_level);
        for (&l, ids) in &set.ids {
            index.levels.insert(l, ids.clone());
        }
        Some(index)
    }
}

/// Sample nested k-shot subsets.
///
/// For each repeat, every level's ids are shuffled once with the repeat's
/// sub-seed and `set(k)` takes the first `min(k, n)` of that permutation, so
/// `set(k)` is always a prefix of `set(k + 5)`.
pub fn sample_few_shot(index: &LevelIndex, k_values: &[usize], repeats: u32, seed: u64) -> Result<FewShotPlan> {
    if k_values.is_empty() {
        return Err(Error::InvalidArgument("k_values is empty".into()));
    }
    if k_values[0] == 0 {
        return Err(Error::InvalidArgument("k must be positive".into()));
    }
    for w in k_values.windows(2) {
        if w[1] <= w[0] {
            return Err(Error::InvalidArgument(format!(
                "k_values must be strictly increasing, found {} then {}",
                w[0], w[1]
            )));
        }
        if w[1] - w[0] != FEW_SHOT_STEP {
            return Err(Error::InvalidArgument(format!(
                "k_values must advance in steps of {FEW_SHOT_STEP}, found {} then {}",
                w[0], w[1]
            )));
        }
    }
    if repeats == 0 {
        return Err(Error::InvalidArgument("repeats must be at least 1".into()));
    }
    let base = rng::stream_seed(seed, "fewshot");
    let mut sets = Vec::with_capacity(repeats as usize * k_values.len());
    for repeat in 0..repeats {
        let sub_seed = rng::indexed_seed(base, u64::from(repeat));
        let mut rng = rng::rng(sub_seed);
        let shuffled: BTreeMap<Level, Vec<String>> = index
            .levels
            .iter()
            .map(|(&l, ids)| {
                let mut ids = ids.clone();
                ids.shuffle(&mut rng);
                (l, ids)
            })
            .collect();
        for &k in k_values {
            sets.push(FewShotSet {
                repeat,
                k,
                sub_seed,
                ids: shuffled
                    .iter()
                    .map(|(&l, ids)| (l, ids.iter().take(k).cloned().collect()))
                    .collect(),
            });
        }
    }
    Ok(FewShotPlan {
        task_id: index.task_id.clone(),
        k_values: k_values.to_vec(),
        repeats,
        seed,
        mixer: format!("{}(stream_seed(seed, \"fewshot\") + repeat)", rng::MIXER),
        sets,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn essay(id: &str, task: &str, level: Option<Level>) -> Essay {
        Essay {
            id: id.into(),
            task_id: task.into(),
            text: format!("text of {id}"),
            relevance: level,
        }
    }

    fn prompt(task: &str, min: Level, max: Level) -> TaskPrompt {
        TaskPrompt {
            task_id: task.into(),
            prompt_text: "Write about something".into(),
            min_level: min,
            max_level: max,
        }
    }

    fn prompts(task: &str, min: Level, max: Level) -> PromptSet {
        [(task.to_string(), prompt(task, min, max))].into_iter().collect()
    }

    fn write_tmp(contents: &str) -> tempfile::NamedTempFile {
        let mut f = tempfile::NamedTempFile::new().unwrap();
        f.write_all(contents.as_bytes()).unwrap();
        f
    }

    #[test]
    fn canonical_tsv_in_file_order() {
        let f = write_tmp("id\ttask_id\trelevance\ttext\na\tT1\t0\tfirst essay \nb\tT1\t-\tsecond\nc\tT1\t3\tthird\twith tab\n");
        let essays = load_essays(f.path(), &EssaySchema::canonical(), Some(&prompts("T1", 0, 3))).unwrap();
        let ids: Vec<_> = essays.iter().map(|e| e.id.as_str()).collect();
        assert_eq!(ids, ["a", "b", "c"]);
        assert_eq!(essays[0].text, "first essay ");
        assert_eq!(essays[1].relevance, None);
        assert_eq!(essays[2].text, "third\twith tab");
    }

    #[test]
    fn out_of_range_names_row() {
        let f = write_tmp("id\ttask_id\trelevance\ttext\na\tT1\t0\tok\nb\tT1\t7\tbad\n");
        let err = load_essays(f.path(), &EssaySchema::canonical(), Some(&prompts("T1", 0, 3))).unwrap_err();
        let msg = err.to_string();
        assert!(matches!(err, Error::Parse { line: 3, .. }), "{msg}");
        assert!(msg.contains("relevance 7"), "{msg}");
    }

    #[test]
    fn duplicate_and_malformed_rows() {
        let f = write_tmp("id\ttask_id\trelevance\ttext\na\tT1\t0\tx\na\tT1\t1\ty\n");
        let err = load_essays(f.path(), &EssaySchema::canonical(), None).unwrap_err();
        assert!(err.to_string().contains("duplicate id `a`"));

        let f = write_tmp("id\ttask_id\trelevance\ttext\na\tT1\n");
        let err = load_essays(f.path(), &EssaySchema::canonical(), None).unwrap_err();
        assert!(matches!(err, Error::Parse { line: 2, .. }), "{err}");

        let f = write_tmp("id\ttask_id\trelevance\ttext\na\tT1\tx\ttext\n");
        assert!(load_essays(f.path(), &EssaySchema::canonical(), None).is_err());
    }

    #[test]
    fn asap_layout_with_schema_remap() {
        // Hand-built fixture in the ASAP column order with two trait columns.
        let f = write_tmp(concat!(
            "essay_id\tessay_set\tessay\tdomain1_score\tprompt_adherence\n",
            "1001\t3\tThe feature of the setting...\t2\t3\n",
            "1002\t3\tCyclist had trouble.\t1\t1\n",
            "2001\t5\tThe mood created by the author\t4\t4\n",
            "2002\t5\tShe was happy\t0\t0\n",
        ));
        let mut ps = prompts("3", 0, 3);
        ps.insert("5".into(), prompt("5", 0, 4));
        let essays = load_essays(f.path(), &EssaySchema::asap("prompt_adherence"), Some(&ps)).unwrap();
        assert_eq!(
            essays,
            vec![
                Essay { id: "1001".into(), task_id: "3".into(), text: "The feature of the setting...".into(), relevance: Some(3) },
                Essay { id: "1002".into(), task_id: "3".into(), text: "Cyclist had trouble.".into(), relevance: Some(1) },
                Essay { id: "2001".into(), task_id: "5".into(), text: "The mood created by the author".into(), relevance: Some(4) },
                Essay { id: "2002".into(), task_id: "5".into(), text: "She was happy".into(), relevance: Some(0) },
            ]
        );

        let mut only5 = EssaySchema::asap("prompt_adherence");
        only5.tasks = Some(["5".to_string()].into_iter().collect());
        assert_eq!(load_essays(f.path(), &only5, None).unwrap().len(), 2);
    }

    #[test]
    fn quoted_csv_normalizes_line_endings() {
        let f = write_tmp("id,task_id,relevance,text\r\nq1,T1,2,\"line one\r\nline two\"\r\n");
        let schema = EssaySchema {
            delimiter: b',',
            quoted: true,
            ..EssaySchema::canonical()
        };
        let essays = load_essays(f.path(), &schema, None).unwrap();
        assert_eq!(essays[0].text, "line one\nline two");
    }

    #[test]
    fn prompt_file() {
        let f = write_tmp("task_id\tmin_level\tmax_level\tprompt_text\nT3\t0\t3\tWrite a response\nT5\t0\t4\tDescribe the mood\n");
        let ps = load_prompts(f.path()).unwrap();
        assert_eq!(ps.len(), 2);
        assert_eq!(ps["T5"].max_level, 4);
        let f = write_tmp("T3\t3\t0\tbad\n");
        assert!(load_prompts(f.path()).is_err());
        let f = write_tmp("T3\t0\t3\ta\nT3\t0\t3\tb\n");
        assert!(load_prompts(f.path()).is_err());
    }

    #[test]
    fn level_index_examples() {
        let p = prompt("T", 0, 3);
        let es = [essay("a", "T", Some(0)), essay("b", "T", Some(0)), essay("c", "T", Some(1))];
        let idx = build_level_index(&es, &p).unwrap();
        assert_eq!(idx.ids(0), ["a", "b"]);
        assert_eq!(idx.ids(1), ["c"]);
        assert!(idx.ids(2).is_empty() && idx.levels.contains_key(&3));
        assert_eq!(idx.levels.len(), 4);

        let empty = build_level_index(std::iter::empty(), &p).unwrap();
        assert!(empty.is_empty());
        assert_eq!(empty.levels.len(), 4);

        let err = build_level_index(&[essay("x", "T", None)], &p).unwrap_err();
        assert!(matches!(err, Error::Unlabeled(_)));
        assert!(build_level_index(&[essay("x", "U", Some(0))], &p).is_err());
    }

    #[test]
    fn level_index_partition_by_regrouping() {
        use rand::Rng;
        let mut r = rng::rng(11);
        let p = prompt("T", 0, 4);
        let es: Vec<Essay> = (0..20).map(|i| essay(&format!("e{i}"), "T", Some(r.random_range(0..=4)))).collect();
        let idx = build_level_index(&es, &p).unwrap();
        // Independent regroup: one scan per level.
        for level in 0..=4 {
            let expected: Vec<String> = es.iter().filter(|e| e.relevance == Some(level)).map(|e| e.id.clone()).collect();
            assert_eq!(idx.ids(level), expected.as_slice());
        }
        assert_eq!(idx.len(), es.len());
    }

    #[test]
    fn folds_parse_validate_roundtrip() {
        let ids: Vec<String> = (0..10).map(|i| format!("e{i}")).collect();
        let folds = generate_folds(&ids, 5, 3).unwrap();
        assert_eq!(folds.len(), 5);
        for f in &folds {
            f.validate().unwrap();
            assert_eq!(f.train.len() + f.dev.len() + f.test.len(), 10);
        }
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("folds.jsonl");
        write_folds(&path, &folds).unwrap();
        let back = load_folds(&path).unwrap();
        assert_eq!(back, folds);
        let path2 = dir.path().join("folds2.jsonl");
        write_folds(&path2, &back).unwrap();
        assert_eq!(load_folds(&path2).unwrap(), folds);

        let bad = write_tmp(r#"{"fold_id":0,"train":["a","b"],"dev":[],"test":["b"]}"#);
        let err = load_folds(bad.path()).unwrap_err();
        assert!(matches!(err, Error::FoldOverlap { first: "train", second: "test", .. }), "{err}");
    }

    fn big_index() -> LevelIndex {
        let mut idx = LevelIndex::empty("T", 0, 2);
        idx.levels.insert(0, (0..30).map(|i| format!("a{i}")).collect());
        idx.levels.insert(1, (0..3).map(|i| format!("b{i}")).collect());
        idx.levels.insert(2, (0..12).map(|i| format!("c{i}")).collect());
        idx
    }

    #[test]
    fn few_shot_nesting_and_shortfall() {
        let idx = big_index();
        let plan = sample_few_shot(&idx, &[5, 10], 1, 9).unwrap();
        let s5 = plan.get(0, 5).unwrap();
        let s10 = plan.get(0, 10).unwrap();
        assert_eq!(s5.ids[&0].len(), 5);
        assert_eq!(s10.ids[&0].len(), 10);
        assert!(s5.ids[&0].iter().all(|id| s10.ids[&0].contains(id)));
        // Level with 3 essays contributes all of them, no duplicates.
        let mut b = s5.ids[&1].clone();
        b.sort();
        assert_eq!(b, ["b0", "b1", "b2"]);
    }

    #[test]
    fn few_shot_determinism() {
        let idx = big_index();
        let a = sample_few_shot(&idx, &[5, 10], 2, 1).unwrap();
        let b = sample_few_shot(&idx, &[5, 10], 2, 1).unwrap();
        assert_eq!(serde_json::to_string(&a).unwrap(), serde_json::to_string(&b).unwrap());
        for trial in 0..5u64 {
            let x = sample_few_shot(&idx, &[5, 10], 2, 100 + trial).unwrap();
            let y = sample_few_shot(&idx, &[5, 10], 2, 200 + trial).unwrap();
            assert!(x.sets.iter().zip(&y.sets).any(|(s, t)| s.ids != t.ids));
        }
        // Repeats draw independent permutations.
        assert_ne!(a.get(0, 5).unwrap().ids, a.get(1, 5).unwrap().ids);
    }

    #[test]
    fn few_shot_rejects_bad_k() {
        let idx = big_index();
        assert!(sample_few_shot(&idx, &[10, 5], 1, 0).is_err());
        assert!(sample_few_shot(&idx, &[5, 5], 1, 0).is_err());
        assert!(sample_few_shot(&idx, &[5, 12], 1, 0).is_err());
        assert!(sample_few_shot(&idx, &[5], 0, 0).is_err());
    }
}
