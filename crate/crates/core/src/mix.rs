//! Prompt-aware co-training data.
//!
//! The output keeps every original sentence pair and appends a prompted copy
//! of a seeded random subset. Downstream subword segmentation must keep
//! `<q>` and `<r>` as atomic tokens.

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use crate::corpus::ParallelCorpus;
use crate::db::PhraseDatabase;
use crate::embed::EmbeddingProvider;
use crate::error::{Error, Result};
use crate::prompt::{render_prompt, retrieve_prompt, PromptConfig};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MixConfig {
    /// Fraction of sentences that also get a prompted copy.
    pub ratio: f64,
    pub seed: u64,
    /// Hide database entries extracted from the sentence being augmented.
    pub exclude_self: bool,
    pub prompt: PromptConfig,
}

impl Default for MixConfig {
    fn default() -> Self {
        MixConfig {
            ratio: 1.0,
            seed: 42,
            exclude_self: true,
            prompt: PromptConfig::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct MixedCorpus {
    pub src: Vec<String>,
    pub tgt: Vec<String>,
    /// Corpus sentence ids of the augmented lines, ascending.
    pub augmented_ids: Vec<usize>,
}

impl MixedCorpus {
    pub fn len(&self) -> usize {
        self.src.len()
    }

    pub fn is_empty(&self) -> bool {
        self.src.is_empty()
    }
}

/// Sentence ids that receive a prompted copy: `round(ratio * n)` of them.
pub fn select_augmented(n: usize, ratio: f64, seed: u64) -> Result<Vec<usize>> {
    if !(0.0..=1.0).contains(&ratio) {
        return Err(Error::InvalidParameter(format!("ratio {ratio} outside [0, 1]")));
    }
    let count = ((ratio * n as f64).round() as usize).min(n);
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut ids = sample(&mut rng, n, count).into_vec();
    ids.sort_unstable();
    Ok(ids)
}

pub fn make_mixed_corpus(
    corpus: &ParallelCorpus,
    db: &PhraseDatabase,
    provider: &dyn EmbeddingProvider,
    config: &MixConfig,
) -> Result<MixedCorpus> {
    if db.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    let augmented_ids = select_augmented(corpus.len(), config.ratio, config.seed)?;
    let prompted: Vec<String> = augmented_ids
        .par_iter()
        .map(|&id| {
            let pair = &corpus.pairs[id];
            let exclude = config.exclude_self.then_some(id);
            let prompt = retrieve_prompt(db, provider, id, &pair.src, &config.prompt, exclude)?;
            render_prompt(&prompt, &pair.src)
        })
        .collect::<Result<_>>()?;

    let mut out = MixedCorpus {
        src: corpus.pairs.iter().map(|p| p.src.join(" ")).collect(),
        tgt: corpus.pairs.iter().map(|p| p.tgt.join(" ")).collect(),
        augmented_ids,
    };
    for (&id, line) in out.augmented_ids.iter().zip(prompted) {
        out.src.push(line);
        out.tgt.push(corpus.pairs[id].tgt.join(" "));
    }
    Ok(out)
}
