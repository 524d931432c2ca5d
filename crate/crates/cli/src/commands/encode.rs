//! `encode-test`: embed a corpus with the hashing test encoder or a remote
//! `/encode` endpoint.

use std::path::PathBuf;

use anyhow::{Context, Result};
use clap::Args;

use relgrade_core::corpus::{load_essays, load_prompts, EssaySchema};
use relgrade_core::embedding::{prompt_vector_id, remote_encode, EmbeddingStore, HashingEncoder};
use relgrade_core::par::Execution;

use crate::options::EssayFormat;

#[derive(Debug, Args)]
pub struct EncodeArgs {
    #[arg(long)]
    pub essays: PathBuf,
    /// Also encode task prompts, stored as `prompt::<task>`.
    #[arg(long)]
    pub prompts: Option<PathBuf>,
    #[arg(long, default_value_t = 768)]
    pub dim: usize,
    #[arg(long, default_value_t = 0)]
    pub seed: u64,
    /// Output embedding file.
    #[arg(long)]
    pub out: PathBuf,
    #[arg(long, value_enum, default_value = "canonical")]
    pub essay_format: EssayFormat,
    #[arg(long)]
    pub trait_column: Option<String>,
    /// Use a remote encoder instead of the hashing encoder.
    #[arg(long)]
    pub endpoint: Option<String>,
    /// Texts per remote request.
    #[arg(long, default_value_t = 32)]
    pub remote_batch: usize,
}

pub fn run(args: EncodeArgs) -> Result<()> {
    let schema = match args.essay_format {
        EssayFormat::Canonical => EssaySchema::canonical(),
        EssayFormat::Asap => EssaySchema::asap(args.trait_column.as_deref().context("--essay-format asap needs --trait-column")?),
    };
    let prompts = args.prompts.as_deref().map(load_prompts).transpose()?;
    let essays = load_essays(&args.essays, &schema, prompts.as_ref())?;
    if essays.is_empty() {
        log::warn!("{} contains no essays; writing a header-only file", args.essays.display());
    }
    let mut items: Vec<(String, String)> = essays.into_iter().map(|e| (e.id, e.text)).collect();
    if let Some(prompts) = &prompts {
        items.extend(prompts.values().map(|p| (prompt_vector_id(&p.task_id), p.prompt_text.clone())));
    }

    let store = match &args.endpoint {
        Some(endpoint) => {
            let encoded = remote_encode(&items, endpoint, args.remote_batch, Execution::Parallel)?;
            if !encoded.missing.is_empty() {
                anyhow::bail!(
                    "encoder returned no vector for {} ids (first: `{}`)",
                    encoded.missing.len(),
                    encoded.missing[0]
                );
            }
            encoded.store
        }
        None => {
            let encoder = HashingEncoder::new(args.dim, args.seed)?;
            let mut store = EmbeddingStore::new(args.dim, encoder.tag())?;
            for (id, text) in &items {
                store.insert(id.clone(), encoder.encode(text))?;
            }
            store
        }
    };
    store.save(&args.out)?;
    println!("wrote {} vectors (dim {}) to {}", store.len(), store.dim(), args.out.display());
    Ok(())
}
