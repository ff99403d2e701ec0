//! Phrase-level retrieval prompts for domain adaptation in machine translation.
//!
//! The pipeline:
//!
//! 1. [`corpus`] reads a tokenized parallel corpus and Pharaoh word alignments.
//! 2. [`extract`] enumerates consistent bilingual phrase pairs.
//! 3. [`embed`] pools contextual token vectors into phrase keys.
//! 4. [`db`] stores every occurrence, indexed by [`index`] (exact or IVF-PQ).
//! 5. [`prompt`] retrieves nearest phrase pairs for an input sentence and
//!    renders them as a `src <q> tgt <r> ... <r> sentence` line.
//! 6. [`mix`] builds prompt-aware training data; [`eval`] scores outputs.
//!
//! [`oracle`] holds independent brute-force implementations used to verify
//! the above.

pub mod corpus;
pub mod db;
pub mod embed;
mod error;
pub mod eval;
pub mod extract;
pub mod index;
pub mod mix;
pub mod oracle;
pub mod prompt;
pub mod toy;
pub mod vectors_file;

pub use corpus::{parse_alignments, parse_parallel, AlignmentSet, ParallelCorpus, SentencePair};
pub use db::{build_database, BuildOptions, DbStats, IndexConfig, PhraseDatabase, PhraseEntry};
pub use embed::{hashed_context_embed, pool_phrase, EmbeddingProvider, HashedContextEmbedder, TokenVectors};
pub use error::{Error, Result};
pub use eval::{bleu, constraint_accuracy, BleuConfig, ConstraintCase};
pub use extract::{
    extract_corpus_phrases, extract_phrase_pairs, is_consistent, PhraseOccurrence, Span, SpanPair,
};
pub use index::{FlatIndex, Hit, IvfPqConfig, IvfPqIndex, SearchParams, SearchResult};
pub use mix::{make_mixed_corpus, MixConfig, MixedCorpus};
pub use prompt::{
    candidate_spans, constraint_prompt, parse_prompted_line, render_prompt, retrieve_prompt, retrieve_spans,
    Prompt, PromptConfig, PromptPair, Strategy,
};
pub use vectors_file::{load_vectors_file, write_vectors_file, PrecomputedVectors};
