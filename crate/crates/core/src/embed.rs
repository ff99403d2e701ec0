//! Contextual token vectors and phrase pooling.
//!
//! Phrase representations are the component-wise mean of the token vectors
//! inside the phrase span. Token vectors come from an [`EmbeddingProvider`]:
//! either the built-in [`HashedContextEmbedder`] or precomputed encoder
//! states loaded from an RPPV1 vectors file ([`crate::vectors_file`]).

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::extract::Span;

pub const DEFAULT_DIM: usize = 64;
pub const DEFAULT_WINDOW: usize = 2;
pub const DEFAULT_SEED: u64 = 42;

/// One vector per token of a sentence, stored row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenVectors {
    pub sentence_id: usize,
    pub dim: usize,
    pub data: Vec<f32>,
}

impl TokenVectors {
    pub fn new(sentence_id: usize, dim: usize, data: Vec<f32>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::BadShape("dim must be positive".into()));
        }
        if !data.len().is_multiple_of(dim) {
            return Err(Error::BadShape(format!(
                "{} values do not divide into rows of {dim}",
                data.len()
            )));
        }
        if data.iter().any(|x| !x.is_finite()) {
            return Err(Error::NonFinite);
        }
        Ok(TokenVectors {
            sentence_id,
            dim,
            data,
        })
    }

    pub fn len(&self) -> usize {
        self.data.len() / self.dim
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn row(&self, token: usize) -> &[f32] {
        &self.data[token * self.dim..(token + 1) * self.dim]
    }
}

/// Source of contextual token vectors.
///
/// Implementations must be deterministic: the same sentence always yields
/// bitwise-identical vectors.
pub trait EmbeddingProvider: Sync {
    fn dim(&self) -> usize;

    /// Vectors for `tokens`, the sentence with id `sentence_id` in whatever
    /// text the provider was prepared for.
    fn embed(&self, sentence_id: usize, tokens: &[String]) -> Result<TokenVectors>;
}

/// Deterministic context-sensitive stand-in for a neural encoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct HashedContextEmbedder {
    pub dim: usize,
    pub window: usize,
    pub seed: u64,
}

impl Default for HashedContextEmbedder {
    fn default() -> Self {
        HashedContextEmbedder {
            dim: DEFAULT_DIM,
            window: DEFAULT_WINDOW,
            seed: DEFAULT_SEED,
        }
    }
}

impl EmbeddingProvider for HashedContextEmbedder {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, sentence_id: usize, tokens: &[String]) -> Result<TokenVectors> {
        if self.dim == 0 {
            return Err(Error::InvalidParameter("embedder dim must be positive".into()));
        }
        let mut tv = hashed_context_embed(tokens, self.dim, self.window, self.seed);
        tv.sentence_id = sentence_id;
        Ok(tv)
    }
}

fn fnv1a(seed: u64, bytes: &[u8]) -> u64 {
    const OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
    const PRIME: u64 = 0x0000_0100_0000_01b3;
    seed.to_le_bytes()
        .iter()
        .chain(bytes)
        .fold(OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(PRIME))
}

/// Unit vector derived from a seeded hash of the token string.
fn base_vector(token: &str, dim: usize, seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(fnv1a(seed, token.as_bytes()));
    let mut v: Vec<f64> = (0..dim).map(|_| rng.gen_range(-1.0..1.0)).collect();
    normalize(&mut v);
    v
}

fn normalize(v: &mut [f64]) {
    let norm = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if norm > 0.0 {
        v.iter_mut().for_each(|x| *x /= norm);
    }
}

/// Token `p` gets `normalize(base(t_p) + Σ_{0<|d|≤window} base(t_{p+d}) / (2|d|))`.
pub fn hashed_context_embed(tokens: &[String], dim: usize, window: usize, seed: u64) -> TokenVectors {
    assert!(dim >= 1, "dim must be positive");
    let bases: Vec<Vec<f64>> = tokens.iter().map(|t| base_vector(t, dim, seed)).collect();
    let mut data = Vec::with_capacity(tokens.len() * dim);
    for p in 0..tokens.len() {
        let mut acc = bases[p].clone();
        for d in 1..=window {
            let weight = 1.0 / (2.0 * d as f64);
            let neighbors = [p.checked_sub(d), Some(p + d).filter(|&q| q < tokens.len())];
            for q in neighbors.into_iter().flatten() {
                acc.iter_mut().zip(&bases[q]).for_each(|(a, b)| *a += weight * b);
            }
        }
        normalize(&mut acc);
        data.extend(acc.iter().map(|&x| x as f32));
    }
    TokenVectors {
        sentence_id: 0,
        dim,
        data,
    }
}

/// Mean of the token vectors inside `span`.
pub fn pool_phrase(tv: &TokenVectors, span: Span) -> Result<Vec<f32>> {
    if span.is_empty() {
        return Err(Error::EmptySpan);
    }
    if span.end > tv.len() {
        return Err(Error::SpanOutOfRange {
            begin: span.begin,
            end: span.end,
            len: tv.len(),
        });
    }
    let mut acc = vec![0f64; tv.dim];
    for token in span.begin..span.end {
        acc.iter_mut()
            .zip(tv.row(token))
            .for_each(|(a, &x)| *a += f64::from(x));
    }
    let n = span.len() as f64;
    Ok(acc.into_iter().map(|a| (a / n) as f32).collect())
}
