#![allow(dead_code)]

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use relgrade_core::corpus::{write_essays, write_prompts};
use relgrade_core::synthetic::SyntheticCorpus;

pub struct Fixture {
    pub essays: PathBuf,
    pub prompts: PathBuf,
    pub embeddings: PathBuf,
}

impl Fixture {
    pub fn write(dir: &Path, corpus: &SyntheticCorpus) -> Fixture {
        let f = Fixture {
            essays: dir.join("essays.tsv"),
            prompts: dir.join("prompts.tsv"),
            embeddings: dir.join("embeddings.jsonl"),
        };
        write_essays(&f.essays, &corpus.essays).unwrap();
        write_prompts(&f.prompts, &corpus.prompts).unwrap();
        corpus.store.save(&f.embeddings).unwrap();
        f
    }

    pub fn args(&self, out: &Path) -> Vec<String> {
        [
            "--essays",
            &self.essays.display().to_string(),
            "--prompts",
            &self.prompts.display().to_string(),
            "--embeddings",
            &self.embeddings.display().to_string(),
            "--out",
            &out.display().to_string(),
        ]
        .iter()
        .map(|s| s.to_string())
        .collect()
    }
}

pub fn relgrade(args: &[String]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relgrade")).args(args).output().unwrap()
}

pub fn run_ok(args: &[String]) -> Output {
    let out = relgrade(args);
    assert!(
        out.status.success(),
        "relgrade {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

pub fn strings(items: &[&str]) -> Vec<String> {
    items.iter().map(|s| s.to_string()).collect()
}

pub fn report(out: &Path) -> serde_json::Value {
    serde_json::from_slice(&fs::read(out.join("report.json")).unwrap()).unwrap()
}

/// Every file under `dir`, keyed by relative path.
pub fn snapshot(dir: &Path) -> BTreeMap<PathBuf, Vec<u8>> {
    let mut files = BTreeMap::new();
    let mut stack = vec![dir.to_path_buf()];
    while let Some(d) = stack.pop() {
        for entry in fs::read_dir(&d).unwrap() {
            let p = entry.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                files.insert(p.strip_prefix(dir).unwrap().to_path_buf(), fs::read(&p).unwrap());
            }
        }
    }
    files
}
