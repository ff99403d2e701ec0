//! Corpus BLEU and lexical-constraint accuracy.
//!
//! BLEU here is the single-reference corpus variant on pre-tokenized text:
//! clipped n-gram counts summed over the corpus, geometric mean of the
//! precisions, and the usual brevity penalty. Without smoothing any zero
//! precision (including a 0/0 for hypotheses shorter than `max_n`) gives 0.

use std::collections::HashMap;

use crate::error::{Error, Result};
use crate::prompt::contains_tokens;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BleuConfig {
    pub max_n: usize,
    /// Add one to matches and totals for n >= 2.
    pub smooth: bool,
}

impl Default for BleuConfig {
    fn default() -> Self {
        BleuConfig {
            max_n: 4,
            smooth: false,
        }
    }
}

/// Summed corpus statistics; additive across sentences.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BleuStats {
    pub matches: Vec<u64>,
    pub totals: Vec<u64>,
    pub hyp_len: u64,
    pub ref_len: u64,
}

impl BleuStats {
    fn new(max_n: usize) -> Self {
        BleuStats {
            matches: vec![0; max_n],
            totals: vec![0; max_n],
            hyp_len: 0,
            ref_len: 0,
        }
    }

    fn add<S: AsRef<str>>(&mut self, hyp: &[S], reference: &[S]) {
        self.hyp_len += hyp.len() as u64;
        self.ref_len += reference.len() as u64;
        for n in 1..=self.matches.len() {
            let hyp_counts = ngram_counts(hyp, n);
            let ref_counts = ngram_counts(reference, n);
            let clipped: usize = hyp_counts
                .iter()
                .map(|(g, &c)| c.min(ref_counts.get(g).copied().unwrap_or(0)))
                .sum();
            self.matches[n - 1] += clipped as u64;
            self.totals[n - 1] += hyp.len().saturating_sub(n - 1) as u64;
        }
    }

    pub fn score(&self, smooth: bool) -> f64 {
        let max_n = self.matches.len();
        let mut log_sum = 0.0;
        for n in 0..max_n {
            let (m, t) = if smooth && n > 0 {
                (self.matches[n] + 1, self.totals[n] + 1)
            } else {
                (self.matches[n], self.totals[n])
            };
            if m == 0 || t == 0 {
                return 0.0;
            }
            log_sum += (m as f64 / t as f64).ln();
        }
        let bp = if self.hyp_len < self.ref_len {
            (1.0 - self.ref_len as f64 / self.hyp_len as f64).exp()
        } else {
            1.0
        };
        100.0 * bp * (log_sum / max_n as f64).exp()
    }
}

fn ngram_counts<S: AsRef<str>>(tokens: &[S], n: usize) -> HashMap<Vec<&str>, usize> {
    let mut counts = HashMap::new();
    if tokens.len() >= n {
        for w in tokens.windows(n) {
            *counts.entry(w.iter().map(AsRef::as_ref).collect()).or_insert(0) += 1;
        }
    }
    counts
}

pub fn bleu_stats<S: AsRef<str>>(hyps: &[Vec<S>], refs: &[Vec<S>], max_n: usize) -> Result<BleuStats> {
    if hyps.len() != refs.len() {
        return Err(Error::LengthMismatch {
            hyps: hyps.len(),
            refs: refs.len(),
        });
    }
    if hyps.is_empty() {
        return Err(Error::EmptyCorpus);
    }
    if max_n == 0 {
        return Err(Error::InvalidParameter("max_n must be positive".into()));
    }
    let mut stats = BleuStats::new(max_n);
    for (h, r) in hyps.iter().zip(refs) {
        stats.add(h, r);
    }
    Ok(stats)
}

/// Corpus BLEU in `[0, 100]`.
pub fn bleu<S: AsRef<str>>(hyps: &[Vec<S>], refs: &[Vec<S>], config: &BleuConfig) -> Result<f64> {
    Ok(bleu_stats(hyps, refs, config.max_n)?.score(config.smooth))
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ConstraintCase {
    pub hyp_tokens: Vec<String>,
    pub constraint_tgt: Vec<String>,
}

impl ConstraintCase {
    pub fn new(hyp: &str, constraint: &str) -> Result<Self> {
        let constraint_tgt: Vec<String> = constraint.split_whitespace().map(str::to_owned).collect();
        if constraint_tgt.is_empty() {
            return Err(Error::EmptyPhrase);
        }
        Ok(ConstraintCase {
            hyp_tokens: hyp.split_whitespace().map(str::to_owned).collect(),
            constraint_tgt,
        })
    }

    pub fn satisfied(&self) -> bool {
        contains_tokens(&self.hyp_tokens, &self.constraint_tgt)
    }
}

/// Fraction of cases whose hypothesis contains the target phrase as a
/// contiguous, case-sensitive token run.
pub fn constraint_accuracy(cases: &[ConstraintCase]) -> Result<f64> {
    if cases.is_empty() {
        return Err(Error::EmptyCaseSet);
    }
    if cases.iter().any(|c| c.constraint_tgt.is_empty()) {
        return Err(Error::EmptyPhrase);
    }
    let hits = cases.iter().filter(|c| c.satisfied()).count();
    Ok(hits as f64 / cases.len() as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(lines: &[&str]) -> Vec<Vec<String>> {
        lines
            .iter()
            .map(|l| l.split_whitespace().map(str::to_owned).collect())
            .collect()
    }

    #[test]
    fn identical_corpus_scores_100() {
        let c = corpus(&["the cat sat on the mat", "a b c d e"]);
        let s = bleu(&c, &c, &BleuConfig::default()).unwrap();
        assert!((s - 100.0).abs() < 1e-9);
    }

    #[test]
    fn brevity_penalty_case() {
        let h = corpus(&["a b c d"]);
        let r = corpus(&["a b c d e"]);
        let stats = bleu_stats(&h, &r, 4).unwrap();
        assert_eq!(stats.matches, [4, 3, 2, 1]);
        assert_eq!(stats.totals, [4, 3, 2, 1]);
        let s = bleu(&h, &r, &BleuConfig::default()).unwrap();
        assert!((s - 100.0 * (-0.25f64).exp()).abs() < 1e-9);
        assert!((s - 77.88).abs() < 0.01);
    }

    #[test]
    fn disjoint_and_short_hypotheses() {
        let s = bleu(
            &corpus(&["x y z w"]),
            &corpus(&["a b c d"]),
            &BleuConfig::default(),
        )
        .unwrap();
        assert_eq!(s, 0.0);
        // Three tokens: no 4-grams at all.
        let s = bleu(&corpus(&["a b c"]), &corpus(&["a b c"]), &BleuConfig::default()).unwrap();
        assert_eq!(s, 0.0);
        let smooth = BleuConfig {
            smooth: true,
            ..Default::default()
        };
        let s = bleu(&corpus(&["a b c"]), &corpus(&["a b c"]), &smooth).unwrap();
        assert!(s > 0.0 && s <= 100.0);
    }

    #[test]
    fn clipping() {
        let stats = bleu_stats(&corpus(&["the the the"]), &corpus(&["the cat"]), 1).unwrap();
        assert_eq!((stats.matches[0], stats.totals[0]), (1, 3));
    }

    #[test]
    fn bleu_errors() {
        let c = corpus(&["a"]);
        assert!(matches!(
            bleu(&c, &[], &BleuConfig::default()),
            Err(Error::LengthMismatch { hyps: 1, refs: 0 })
        ));
        let empty: Vec<Vec<String>> = Vec::new();
        assert!(matches!(
            bleu(&empty, &empty, &BleuConfig::default()),
            Err(Error::EmptyCorpus)
        ));
    }

    #[test]
    fn constraint_accuracy_fixtures() {
        let one = [ConstraintCase::new("Welches Risiko ist mit", "Welches Risiko").unwrap()];
        assert_eq!(constraint_accuracy(&one).unwrap(), 1.0);

        let three = [
            ConstraintCase::new("die rote Katze", "rote Katze").unwrap(),
            ConstraintCase::new("die rote Katze", "Katze").unwrap(),
            ConstraintCase::new("die rote Katze", "rot").unwrap(),
        ];
        assert!((constraint_accuracy(&three).unwrap() - 0.6667).abs() < 1e-4);

        assert!(matches!(constraint_accuracy(&[]), Err(Error::EmptyCaseSet)));
        assert!(matches!(ConstraintCase::new("a", " "), Err(Error::EmptyPhrase)));
    }

    #[test]
    fn matching_is_case_sensitive() {
        let c = ConstraintCase::new("das Risiko", "risiko").unwrap();
        assert!(!c.satisfied());
    }
}
