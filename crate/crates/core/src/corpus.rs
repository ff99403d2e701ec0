//! Tokenized parallel corpora and Pharaoh word alignments.
//!
//! Both sides of a corpus are plain UTF-8 text, one sentence per line, tokens
//! separated by whitespace. Tokenization is never redone here. Alignment
//! lines hold `i-j` items where `i` indexes the source sentence and `j` the
//! target sentence, both 0-based.

use std::collections::BTreeSet;

use crate::error::{Error, Result};

/// Separates the source and target side of one pair inside a prompt.
pub const PAIR_MARKER: &str = "<q>";
/// Separates pairs inside a prompt, and the prompt from the source sentence.
pub const PROMPT_MARKER: &str = "<r>";

pub fn is_marker(token: &str) -> bool {
    token == PAIR_MARKER || token == PROMPT_MARKER
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SentencePair {
    pub id: usize,
    pub src: Vec<String>,
    pub tgt: Vec<String>,
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct AlignmentSet {
    pub id: usize,
    pub links: BTreeSet<(usize, usize)>,
}

impl AlignmentSet {
    pub fn new(id: usize, links: impl IntoIterator<Item = (usize, usize)>) -> Self {
        AlignmentSet {
            id,
            links: links.into_iter().collect(),
        }
    }

    pub fn len(&self) -> usize {
        self.links.len()
    }

    pub fn is_empty(&self) -> bool {
        self.links.is_empty()
    }

    /// Renders the links in canonical Pharaoh form (sorted, single spaces).
    pub fn to_pharaoh(&self) -> String {
        let items: Vec<String> = self.links.iter().map(|(i, j)| format!("{i}-{j}")).collect();
        items.join(" ")
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct ParallelCorpus {
    pub pairs: Vec<SentencePair>,
    pub alignments: Option<Vec<AlignmentSet>>,
}

impl ParallelCorpus {
    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// Parses `align_text` against this corpus and attaches the result.
    pub fn with_alignments(mut self, align_text: &str) -> Result<Self> {
        self.alignments = Some(parse_alignments(align_text, &self)?);
        Ok(self)
    }

    /// Serializes both sides back to canonical text (single spaces, `\n` after every line).
    pub fn to_text(&self) -> (String, String) {
        let mut src = String::new();
        let mut tgt = String::new();
        for pair in &self.pairs {
            src.push_str(&pair.src.join(" "));
            src.push('\n');
            tgt.push_str(&pair.tgt.join(" "));
            tgt.push('\n');
        }
        (src, tgt)
    }
}

/// Splits one line into tokens, rejecting empty lines and reserved markers.
pub fn tokenize_line(line: &str, line_no: usize) -> Result<Vec<String>> {
    let tokens: Vec<String> = line.split_whitespace().map(str::to_owned).collect();
    if tokens.is_empty() {
        return Err(Error::EmptyLine { line: line_no });
    }
    if let Some(tok) = tokens.iter().find(|t| is_marker(t)) {
        return Err(Error::ReservedToken {
            token: tok.clone(),
            context: format!("line {line_no}"),
        });
    }
    Ok(tokens)
}

/// Parses a sentence-per-line file into token sequences (1-based line numbers in errors).
pub fn parse_lines(text: &str) -> Result<Vec<Vec<String>>> {
    text.lines()
        .enumerate()
        .map(|(n, line)| tokenize_line(line, n + 1))
        .collect()
}

pub fn parse_parallel(src_text: &str, tgt_text: &str) -> Result<ParallelCorpus> {
    let src_count = src_text.lines().count();
    let tgt_count = tgt_text.lines().count();
    if src_count != tgt_count {
        return Err(Error::LineCountMismatch {
            left: src_count,
            right: tgt_count,
        });
    }
    let pairs = parse_lines(src_text)?
        .into_iter()
        .zip(parse_lines(tgt_text)?)
        .enumerate()
        .map(|(id, (src, tgt))| SentencePair { id, src, tgt })
        .collect();
    Ok(ParallelCorpus {
        pairs,
        alignments: None,
    })
}

fn parse_link(item: &str, line: usize) -> Result<(usize, usize)> {
    let malformed = || Error::MalformedLink {
        line,
        item: item.to_owned(),
    };
    let (i, j) = item.split_once('-').ok_or_else(malformed)?;
    let digits = |s: &str| !s.is_empty() && s.bytes().all(|b| b.is_ascii_digit());
    if !digits(i) || !digits(j) {
        return Err(malformed());
    }
    Ok((
        i.parse().map_err(|_| malformed())?,
        j.parse().map_err(|_| malformed())?,
    ))
}

/// Parses a Pharaoh alignment file, one line per sentence pair of `corpus`.
///
/// Empty lines are legal and give an empty link set. Duplicate items collapse.
pub fn parse_alignments(align_text: &str, corpus: &ParallelCorpus) -> Result<Vec<AlignmentSet>> {
    let count = align_text.lines().count();
    if count != corpus.len() {
        return Err(Error::LineCountMismatch {
            left: count,
            right: corpus.len(),
        });
    }
    align_text
        .lines()
        .zip(&corpus.pairs)
        .map(|(line, pair)| {
            let line_no = pair.id + 1;
            let mut links = BTreeSet::new();
            for item in line.split_whitespace() {
                let (i, j) = parse_link(item, line_no)?;
                if i >= pair.src.len() || j >= pair.tgt.len() {
                    return Err(Error::IndexOutOfRange {
                        line: line_no,
                        i,
                        j,
                        src_len: pair.src.len(),
                        tgt_len: pair.tgt.len(),
                    });
                }
                links.insert((i, j));
            }
            Ok(AlignmentSet { id: pair.id, links })
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn corpus(src: &str, tgt: &str) -> ParallelCorpus {
        parse_parallel(src, tgt).unwrap()
    }

    #[test]
    fn parses_single_pair() {
        let c = corpus("a b\n", "c\n");
        assert_eq!(c.len(), 1);
        assert_eq!(c.pairs[0].src, ["a", "b"]);
        assert_eq!(c.pairs[0].tgt, ["c"]);
        assert_eq!(c.pairs[0].id, 0);
    }

    #[test]
    fn line_count_mismatch() {
        assert!(matches!(
            parse_parallel("a\nb\n", "c\n"),
            Err(Error::LineCountMismatch { left: 2, right: 1 })
        ));
    }

    #[test]
    fn medical_example_token_counts() {
        let c = corpus(
            "What is the risk associated with Poulvac FluFend H5N3 RG ?\n",
            "Welche Risiken sind mit Poulvac FluFend H5N3 RG verbunden ?\n",
        );
        assert_eq!(c.pairs[0].src.len(), 11);
        assert_eq!(c.pairs[0].tgt.len(), 10);
    }

    #[test]
    fn empty_line_and_reserved_token() {
        assert!(matches!(
            parse_parallel("a\n\n", "b\nc\n"),
            Err(Error::EmptyLine { line: 2 })
        ));
        assert!(matches!(
            parse_parallel("a <q> b\n", "c\n"),
            Err(Error::ReservedToken { .. })
        ));
        assert!(matches!(
            parse_parallel("a\n", "<r>\n"),
            Err(Error::ReservedToken { .. })
        ));
    }

    #[test]
    fn empty_input_is_empty_corpus() {
        assert!(corpus("", "").is_empty());
    }

    #[test]
    fn alignment_parsing() {
        let c = corpus("a b c\n", "d e f\n");
        let a = parse_alignments("0-0 1-2 2-1\n", &c).unwrap();
        assert_eq!(a[0].links, BTreeSet::from([(0, 0), (1, 2), (2, 1)]));

        let a = parse_alignments("0-0 0-0\n", &c).unwrap();
        assert_eq!(a[0].links, BTreeSet::from([(0, 0)]));

        let a = parse_alignments("\n", &c).unwrap();
        assert!(a[0].is_empty());
    }

    #[test]
    fn alignment_errors() {
        let c = corpus("a b\n", "c d\n");
        assert!(matches!(
            parse_alignments("0-5\n", &c),
            Err(Error::IndexOutOfRange { i: 0, j: 5, .. })
        ));
        for bad in ["0_1", "a-1", "-1", "1-", "0-1-2", "+1-0"] {
            assert!(
                matches!(
                    parse_alignments(&format!("{bad}\n"), &c),
                    Err(Error::MalformedLink { .. })
                ),
                "{bad}"
            );
        }
        assert!(matches!(
            parse_alignments("0-0\n1-1\n", &c),
            Err(Error::LineCountMismatch { .. })
        ));
    }

    #[test]
    fn canonical_round_trip() {
        let src = "a b c\nd e\n";
        let tgt = "x\ny z\n";
        let c = corpus(src, tgt);
        assert_eq!(c.to_text(), (src.to_owned(), tgt.to_owned()));
    }

    #[test]
    fn alignments_render_canonically() {
        let c = corpus("a b c\n", "d e f\n")
            .with_alignments("2-1 0-0 1-2\n")
            .unwrap();
        assert_eq!(c.alignments.unwrap()[0].to_pharaoh(), "0-0 1-2 2-1");
    }
}
