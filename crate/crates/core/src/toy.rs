//! Synthetic word-aligned corpora for tests, benchmarks and demos.
//!
//! Sentences are drawn from a small pseudo-word vocabulary with a skewed
//! word distribution, so phrases recur in different contexts. Each source
//! word has one fixed target word and alignments are monotone one-to-one,
//! which makes every source span extractable as a phrase.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const SYLLABLES: [&str; 12] = [
    "ka", "lo", "mi", "ne", "su", "ta", "ri", "po", "ve", "du", "fa", "zo",
];

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ToyCorpus {
    pub src: String,
    pub tgt: String,
    pub align: String,
}

fn vocabulary(size: usize, rng: &mut impl Rng) -> Vec<String> {
    let mut words: Vec<String> = Vec::with_capacity(size);
    while words.len() < size {
        let syllables = rng.gen_range(1..=3);
        let w: String = (0..syllables)
            .map(|_| SYLLABLES[rng.gen_range(0..SYLLABLES.len())])
            .collect();
        if !words.contains(&w) {
            words.push(w);
        }
    }
    words
}

fn translate(word: &str) -> String {
    let mut t: String = word.chars().rev().collect();
    t.push('n');
    t
}

/// `sentences` aligned pairs of 3 to 8 tokens each.
pub fn toy_corpus(sentences: usize, seed: u64) -> ToyCorpus {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let vocab = vocabulary(60, &mut rng);
    let mut out = ToyCorpus {
        src: String::new(),
        tgt: String::new(),
        align: String::new(),
    };
    for _ in 0..sentences {
        let len = rng.gen_range(3..=8);
        let words: Vec<&str> = (0..len)
            .map(|_| {
                // Squaring a uniform draw favors the head of the vocabulary.
                let u: f64 = rng.gen();
                vocab[((u * u) * vocab.len() as f64) as usize].as_str()
            })
            .collect();
        let tgt: Vec<String> = words.iter().map(|w| translate(w)).collect();
        let align: Vec<String> = (0..len).map(|i| format!("{i}-{i}")).collect();
        out.src.push_str(&words.join(" "));
        out.src.push('\n');
        out.tgt.push_str(&tgt.join(" "));
        out.tgt.push('\n');
        out.align.push_str(&align.join(" "));
        out.align.push('\n');
    }
    out
}
