use std::collections::BTreeSet;

use phraseprompt::corpus::{parse_alignments, parse_parallel, AlignmentSet, SentencePair};
use phraseprompt::extract::{extract_corpus_phrases, extract_phrase_pairs, is_consistent};
use phraseprompt::oracle::oracle_extract;
use proptest::prelude::*;

fn words(prefix: &str, n: usize) -> Vec<String> {
    (0..n).map(|i| format!("{prefix}{i}")).collect()
}

/// A sentence pair of up to 8×8 tokens with an arbitrary link set.
fn aligned_pair() -> impl Strategy<Value = (SentencePair, AlignmentSet)> {
    (1usize..=8, 1usize..=8).prop_flat_map(|(n, m)| {
        proptest::collection::btree_set((0..n, 0..m), 0..=(n * m).min(20)).prop_map(move |links| {
            let pair = SentencePair {
                id: 0,
                src: words("s", n),
                tgt: words("t", m),
            };
            (pair, AlignmentSet::new(0, links))
        })
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn matches_exhaustive_oracle((pair, links) in aligned_pair(), max_len in 1usize..=9) {
        prop_assert_eq!(
            extract_phrase_pairs(&pair, &links, max_len),
            oracle_extract(&pair, &links, max_len)
        );
    }

    #[test]
    fn output_is_consistent_and_bounded((pair, links) in aligned_pair(), max_len in 1usize..=8) {
        for sp in extract_phrase_pairs(&pair, &links, max_len) {
            prop_assert!(is_consistent(&links, &sp));
            prop_assert!(sp.src.len() <= max_len && sp.tgt.len() <= max_len);
            prop_assert!(sp.src.end <= pair.src.len() && sp.tgt.end <= pair.tgt.len());
            // Every extracted pair carries at least one link.
            let linked = links.links.iter().any(|&(i, j)| sp.src.contains(i) && sp.tgt.contains(j));
            prop_assert!(linked);
        }
    }

    #[test]
    fn raising_max_len_only_adds_pairs((pair, links) in aligned_pair(), a in 1usize..=8, b in 1usize..=8) {
        let (lo, hi) = (a.min(b), a.max(b));
        let small = extract_phrase_pairs(&pair, &links, lo);
        let large = extract_phrase_pairs(&pair, &links, hi);
        prop_assert!(small.is_subset(&large));
        let filtered: BTreeSet<_> = large
            .into_iter()
            .filter(|sp| sp.src.len() <= lo && sp.tgt.len() <= lo)
            .collect();
        prop_assert_eq!(small, filtered);
    }

    #[test]
    fn alignment_item_order_is_irrelevant((pair, links) in aligned_pair(), rotate in 0usize..20) {
        let mut items: Vec<String> = links.links.iter().map(|(i, j)| format!("{i}-{j}")).collect();
        if !items.is_empty() {
            let r = rotate % items.len();
            items.rotate_left(r);
            items.reverse();
        }
        let corpus = parse_parallel(&(pair.src.join(" ") + "\n"), &(pair.tgt.join(" ") + "\n")).unwrap();
        let parsed = parse_alignments(&(items.join(" ") + "\n"), &corpus).unwrap();
        prop_assert_eq!(&parsed[0].links, &links.links);
    }
}

#[test]
fn corpus_extraction_keeps_sentence_order() {
    let corpus = parse_parallel("a b\nc\nd e f\n", "x y\nz\nu v w\n")
        .unwrap()
        .with_alignments("0-0 1-1\n\n0-2 2-0\n")
        .unwrap();
    let occ = extract_corpus_phrases(&corpus, 4).unwrap();
    let ids: Vec<usize> = occ.iter().map(|o| o.sentence_id).collect();
    let mut sorted = ids.clone();
    sorted.sort();
    assert_eq!(ids, sorted);
    assert!(!ids.contains(&1), "an unaligned sentence yields nothing");
    for o in &occ {
        let pair = &corpus.pairs[o.sentence_id];
        assert_eq!(
            o.src_phrase,
            pair.src[o.spans.src.begin..o.spans.src.end].join(" ")
        );
        assert_eq!(
            o.tgt_phrase,
            pair.tgt[o.spans.tgt.begin..o.spans.tgt.end].join(" ")
        );
    }
}
