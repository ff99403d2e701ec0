//! Consistent phrase-pair extraction from word-aligned sentence pairs.
//!
//! A source span and a target span form a phrase pair when at least one
//! link lies inside both spans and no link connects the inside of one span
//! to the outside of the other. Unaligned words on either boundary may be
//! included, so a single alignment point can yield several pairs.

use std::collections::BTreeSet;
use std::io::{self, Write};

use rayon::prelude::*;

use crate::corpus::{AlignmentSet, ParallelCorpus, SentencePair};
use crate::error::{Error, Result};

pub const DEFAULT_MAX_LEN: usize = 4;

/// Half-open token interval `[begin, end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct Span {
    pub begin: usize,
    pub end: usize,
}

impl Span {
    pub fn new(begin: usize, end: usize) -> Self {
        Span { begin, end }
    }

    pub fn len(&self) -> usize {
        self.end.saturating_sub(self.begin)
    }

    pub fn is_empty(&self) -> bool {
        self.end <= self.begin
    }

    pub fn contains(&self, pos: usize) -> bool {
        self.begin <= pos && pos < self.end
    }

    pub fn overlaps(&self, other: &Span) -> bool {
        self.begin < other.end && other.begin < self.end
    }
}

/// Ordered by `(s_begin, s_end, t_begin, t_end)`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash)]
pub struct SpanPair {
    pub src: Span,
    pub tgt: Span,
}

impl SpanPair {
    pub fn new(src: (usize, usize), tgt: (usize, usize)) -> Self {
        SpanPair {
            src: Span::new(src.0, src.1),
            tgt: Span::new(tgt.0, tgt.1),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PhraseOccurrence {
    pub sentence_id: usize,
    pub spans: SpanPair,
    pub src_phrase: String,
    pub tgt_phrase: String,
}

pub fn is_consistent(links: &AlignmentSet, spans: &SpanPair) -> bool {
    let mut inside = false;
    for &(i, j) in &links.links {
        match (spans.src.contains(i), spans.tgt.contains(j)) {
            (true, true) => inside = true,
            (false, false) => {}
            _ => return false,
        }
    }
    inside
}

/// Every consistent span pair whose two sides are at most `max_len` tokens.
pub fn extract_phrase_pairs(pair: &SentencePair, links: &AlignmentSet, max_len: usize) -> BTreeSet<SpanPair> {
    let src_len = pair.src.len();
    let tgt_len = pair.tgt.len();
    let mut out = BTreeSet::new();
    if links.is_empty() || max_len == 0 {
        return out;
    }

    // Per target position: the range of source positions linked to it.
    let mut tgt_links: Vec<Option<(usize, usize)>> = vec![None; tgt_len];
    for &(i, j) in &links.links {
        let slot = &mut tgt_links[j];
        *slot = Some(match *slot {
            None => (i, i),
            Some((lo, hi)) => (lo.min(i), hi.max(i)),
        });
    }
    let tgt_aligned = |j: usize| tgt_links[j].is_some();

    for s_begin in 0..src_len {
        for s_end in (s_begin + 1)..=(s_begin + max_len).min(src_len) {
            let mut t_range: Option<(usize, usize)> = None;
            for &(i, j) in links.links.range((s_begin, 0)..(s_end, 0)) {
                debug_assert!(i >= s_begin && i < s_end);
                t_range = Some(match t_range {
                    None => (j, j),
                    Some((lo, hi)) => (lo.min(j), hi.max(j)),
                });
            }
            let Some((t_min, t_max)) = t_range else {
                continue;
            };
            if t_max - t_min + 1 > max_len {
                continue;
            }
            let closed = (t_min..=t_max).all(|j| match tgt_links[j] {
                None => true,
                Some((lo, hi)) => lo >= s_begin && hi < s_end,
            });
            if !closed {
                continue;
            }

            // Grow the target span over unaligned words on both sides.
            let mut t_begin = t_min;
            loop {
                let mut t_end = t_max + 1;
                loop {
                    if t_end - t_begin > max_len {
                        break;
                    }
                    out.insert(SpanPair::new((s_begin, s_end), (t_begin, t_end)));
                    if t_end == tgt_len || tgt_aligned(t_end) {
                        break;
                    }
                    t_end += 1;
                }
                if t_begin == 0 || tgt_aligned(t_begin - 1) {
                    break;
                }
                t_begin -= 1;
                if t_max + 1 - t_begin > max_len {
                    break;
                }
            }
        }
    }
    out
}

fn occurrence(pair: &SentencePair, spans: SpanPair) -> PhraseOccurrence {
    PhraseOccurrence {
        sentence_id: pair.id,
        spans,
        src_phrase: pair.src[spans.src.begin..spans.src.end].join(" "),
        tgt_phrase: pair.tgt[spans.tgt.begin..spans.tgt.end].join(" "),
    }
}

/// Phrase occurrences of the whole corpus, in sentence order then span order.
pub fn extract_corpus_phrases(corpus: &ParallelCorpus, max_len: usize) -> Result<Vec<PhraseOccurrence>> {
    let alignments = corpus.alignments.as_ref().ok_or(Error::MissingAlignments)?;
    let per_sentence: Vec<Vec<PhraseOccurrence>> = corpus
        .pairs
        .par_iter()
        .zip(alignments.par_iter())
        .map(|(pair, links)| {
            extract_phrase_pairs(pair, links, max_len)
                .into_iter()
                .map(|spans| occurrence(pair, spans))
                .collect()
        })
        .collect();
    Ok(per_sentence.into_iter().flatten().collect())
}

/// Writes `sentence_id \t s_begin \t s_end \t t_begin \t t_end \t src \t tgt` lines.
pub fn write_occurrences_tsv<W: Write>(mut out: W, occurrences: &[PhraseOccurrence]) -> io::Result<()> {
    for occ in occurrences {
        writeln!(
            out,
            "{}\t{}\t{}\t{}\t{}\t{}\t{}",
            occ.sentence_id,
            occ.spans.src.begin,
            occ.spans.src.end,
            occ.spans.tgt.begin,
            occ.spans.tgt.end,
            occ.src_phrase,
            occ.tgt_phrase
        )?;
    }
    out.flush()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::parse_parallel;

    fn sentence(src_len: usize, tgt_len: usize) -> SentencePair {
        SentencePair {
            id: 0,
            src: (0..src_len).map(|i| format!("s{i}")).collect(),
            tgt: (0..tgt_len).map(|j| format!("t{j}")).collect(),
        }
    }

    type Bounds = (usize, usize);

    fn set(pairs: &[(Bounds, Bounds)]) -> BTreeSet<SpanPair> {
        pairs.iter().map(|&(s, t)| SpanPair::new(s, t)).collect()
    }

    #[test]
    fn consistency_examples() {
        let single = AlignmentSet::new(0, [(0, 0)]);
        assert!(is_consistent(&single, &SpanPair::new((0, 1), (0, 1))));

        let crossed = AlignmentSet::new(0, [(0, 0), (1, 2), (2, 1)]);
        assert!(!is_consistent(&crossed, &SpanPair::new((0, 2), (0, 3))));

        let empty = AlignmentSet::new(0, []);
        assert!(!is_consistent(&empty, &SpanPair::new((0, 1), (0, 1))));
    }

    #[test]
    fn single_aligned_pair() {
        let links = AlignmentSet::new(0, [(0, 0)]);
        assert_eq!(
            extract_phrase_pairs(&sentence(1, 1), &links, 4),
            set(&[((0, 1), (0, 1))])
        );
    }

    #[test]
    fn crossed_alignment_gives_five_pairs() {
        let links = AlignmentSet::new(0, [(0, 0), (1, 2), (2, 1)]);
        let got = extract_phrase_pairs(&sentence(3, 3), &links, 3);
        let want = set(&[
            ((0, 1), (0, 1)),
            ((1, 2), (2, 3)),
            ((2, 3), (1, 2)),
            ((1, 3), (1, 3)),
            ((0, 3), (0, 3)),
        ]);
        assert_eq!(got, want);
    }

    #[test]
    fn unaligned_words_extend_phrases() {
        let links = AlignmentSet::new(0, [(0, 0)]);
        let got = extract_phrase_pairs(&sentence(2, 2), &links, 2);
        let want = set(&[
            ((0, 1), (0, 1)),
            ((0, 1), (0, 2)),
            ((0, 2), (0, 1)),
            ((0, 2), (0, 2)),
        ]);
        assert_eq!(got, want);
    }

    #[test]
    fn max_len_caps_target_extension() {
        // t0 t1 t2 unaligned around a single link on t1.
        let links = AlignmentSet::new(0, [(0, 1)]);
        let got = extract_phrase_pairs(&sentence(1, 3), &links, 2);
        let want = set(&[((0, 1), (1, 2)), ((0, 1), (0, 2)), ((0, 1), (1, 3))]);
        assert_eq!(got, want);
    }

    #[test]
    fn no_links_no_pairs() {
        let links = AlignmentSet::new(0, []);
        assert!(extract_phrase_pairs(&sentence(3, 3), &links, 4).is_empty());
    }

    #[test]
    fn corpus_extraction() {
        let empty = parse_parallel("", "").unwrap().with_alignments("").unwrap();
        assert!(extract_corpus_phrases(&empty, 4).unwrap().is_empty());

        let one = parse_parallel("s0 s1 s2\n", "t0 t1 t2\n")
            .unwrap()
            .with_alignments("0-0 1-2 2-1\n")
            .unwrap();
        let occ = extract_corpus_phrases(&one, 3).unwrap();
        assert_eq!(occ.len(), 5);
        assert!(occ.iter().all(|o| o.sentence_id == 0));
        assert_eq!(occ[0].src_phrase, "s0");
        assert_eq!(occ[1].src_phrase, "s0 s1 s2");
        assert_eq!(occ[1].tgt_phrase, "t0 t1 t2");

        let two = parse_parallel("s0 s1 s2\ns0 s1 s2\n", "t0 t1 t2\nt0 t1 t2\n")
            .unwrap()
            .with_alignments("0-0 1-2 2-1\n0-0 1-2 2-1\n")
            .unwrap();
        let occ = extract_corpus_phrases(&two, 3).unwrap();
        assert_eq!(occ.len(), 10);
        assert!(occ[..5].iter().all(|o| o.sentence_id == 0));
        assert!(occ[5..].iter().all(|o| o.sentence_id == 1));
    }

    #[test]
    fn missing_alignments() {
        let c = parse_parallel("a\n", "b\n").unwrap();
        assert!(matches!(
            extract_corpus_phrases(&c, 4),
            Err(Error::MissingAlignments)
        ));
    }

    #[test]
    fn tsv_dump() {
        let c = parse_parallel("a b\n", "x y\n")
            .unwrap()
            .with_alignments("0-1 1-0\n")
            .unwrap();
        let occ = extract_corpus_phrases(&c, 2).unwrap();
        let mut buf = Vec::new();
        write_occurrences_tsv(&mut buf, &occ).unwrap();
        assert_eq!(
            String::from_utf8(buf).unwrap(),
            "0\t0\t1\t1\t2\ta\ty\n0\t0\t2\t0\t2\ta b\tx y\n0\t1\t2\t0\t1\tb\tx\n"
        );
    }
}
