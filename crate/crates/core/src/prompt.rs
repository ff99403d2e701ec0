//! Bilingual phrase prompts.
//!
//! A prompted line lists phrase pairs as `src <q> tgt`, separates pairs with
//! `<r>`, and ends with one more `<r>` followed by the source sentence:
//!
//! ```text
//! based on <q> je nach <r> it works
//! ```
//!
//! Prompts come from nearest-neighbor retrieval against a
//! [`PhraseDatabase`] or are written by hand to impose lexical constraints.

use std::collections::HashSet;
use std::fmt;
use std::str::FromStr;

use crate::corpus::{is_marker, PAIR_MARKER, PROMPT_MARKER};
use crate::db::{PhraseDatabase, PhraseEntry};
use crate::embed::{pool_phrase, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::extract::Span;
use crate::index::SearchParams;

#[derive(Debug, Clone, PartialEq)]
pub struct PromptPair {
    pub src: String,
    pub tgt: String,
    /// Squared L2 distance of the retrieved entry; `None` for handcrafted pairs.
    pub distance: Option<f32>,
}

impl PromptPair {
    pub fn handcrafted(src: impl Into<String>, tgt: impl Into<String>) -> Self {
        PromptPair {
            src: src.into(),
            tgt: tgt.into(),
            distance: None,
        }
    }
}

/// Ordered phrase pairs; no two share both source and target strings.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct Prompt {
    pairs: Vec<PromptPair>,
}

impl Prompt {
    /// Keeps the first of any pairs with identical strings.
    pub fn from_pairs(pairs: impl IntoIterator<Item = PromptPair>) -> Self {
        let mut prompt = Prompt::default();
        for p in pairs {
            prompt.push(p);
        }
        prompt
    }

    /// Appends `pair` unless an identical pair is present. Returns whether it was added.
    pub fn push(&mut self, pair: PromptPair) -> bool {
        if self.contains(&pair.src, &pair.tgt) {
            return false;
        }
        self.pairs.push(pair);
        true
    }

    pub fn contains(&self, src: &str, tgt: &str) -> bool {
        self.pairs.iter().any(|p| p.src == src && p.tgt == tgt)
    }

    pub fn pairs(&self) -> &[PromptPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }

    /// `(src, tgt)` string pairs, dropping distances.
    pub fn string_pairs(&self) -> Vec<(String, String)> {
        self.pairs
            .iter()
            .map(|p| (p.src.clone(), p.tgt.clone()))
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Strategy {
    AllNgrams,
    #[default]
    GreedyCover,
}

impl FromStr for Strategy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "all_ngrams" => Ok(Strategy::AllNgrams),
            "greedy_cover" => Ok(Strategy::GreedyCover),
            other => Err(Error::InvalidParameter(format!(
                "unknown strategy {other:?} (expected all_ngrams or greedy_cover)"
            ))),
        }
    }
}

impl fmt::Display for Strategy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            Strategy::AllNgrams => "all_ngrams",
            Strategy::GreedyCover => "greedy_cover",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PromptConfig {
    pub strategy: Strategy,
    pub max_len: usize,
    pub max_pairs: usize,
    /// Largest accepted squared L2 distance.
    pub tau: f32,
    pub search: SearchParams,
}

impl Default for PromptConfig {
    fn default() -> Self {
        PromptConfig {
            strategy: Strategy::GreedyCover,
            max_len: 4,
            max_pairs: 8,
            tau: f32::INFINITY,
            search: SearchParams::default(),
        }
    }
}

/// Query spans for a sentence of `n_tokens` tokens.
///
/// `AllNgrams` yields every span of up to `max_len` tokens ordered by
/// `(begin, length)`. `GreedyCover` yields the same spans in the order the
/// greedy cursor tries them when nothing is accepted: by begin, longest first.
pub fn candidate_spans(n_tokens: usize, max_len: usize, strategy: Strategy) -> Vec<Span> {
    let mut spans = Vec::new();
    for begin in 0..n_tokens {
        let longest = max_len.min(n_tokens - begin);
        match strategy {
            Strategy::AllNgrams => spans.extend((1..=longest).map(|len| Span::new(begin, begin + len))),
            Strategy::GreedyCover => {
                spans.extend((1..=longest).rev().map(|len| Span::new(begin, begin + len)))
            }
        }
    }
    spans
}

/// Retrieves a prompt for one input sentence.
///
/// `exclude_sentence` hides entries extracted from that corpus sentence.
pub fn retrieve_prompt(
    db: &PhraseDatabase,
    provider: &dyn EmbeddingProvider,
    sentence_id: usize,
    tokens: &[String],
    config: &PromptConfig,
    exclude_sentence: Option<usize>,
) -> Result<Prompt> {
    let accepted = retrieve_spans(db, provider, sentence_id, tokens, config, exclude_sentence)?;
    Ok(Prompt::from_pairs(accepted.into_iter().map(|(_, p)| p)))
}

/// The accepted query spans behind [`retrieve_prompt`], each with its pair,
/// in source order.
pub fn retrieve_spans(
    db: &PhraseDatabase,
    provider: &dyn EmbeddingProvider,
    sentence_id: usize,
    tokens: &[String],
    config: &PromptConfig,
    exclude_sentence: Option<usize>,
) -> Result<Vec<(Span, PromptPair)>> {
    if db.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    if tokens.is_empty() {
        return Ok(Vec::new());
    }
    let tv = provider.embed(sentence_id, tokens)?;
    let keep = |e: &PhraseEntry| exclude_sentence != Some(e.sentence_id);
    let nearest = |span: Span| -> Result<Option<(&PhraseEntry, f32)>> {
        let query = pool_phrase(&tv, span)?;
        Ok(db
            .query_filtered(&query, 1, &config.search, &keep)?
            .into_iter()
            .next())
    };

    let mut accepted: Vec<(Span, PromptPair)> = Vec::new();
    let mut seen: HashSet<(String, String)> = HashSet::new();

    match config.strategy {
        Strategy::GreedyCover => {
            let mut cursor = 0;
            while cursor < tokens.len() && accepted.len() < config.max_pairs {
                let longest = config.max_len.min(tokens.len() - cursor);
                let mut advanced = false;
                for len in (1..=longest).rev() {
                    let span = Span::new(cursor, cursor + len);
                    if let Some((entry, d)) = nearest(span)? {
                        if d <= config.tau {
                            take(&mut seen, &mut accepted, span, entry, d);
                            cursor += len;
                            advanced = true;
                            break;
                        }
                    }
                }
                if !advanced {
                    cursor += 1;
                }
            }
        }
        Strategy::AllNgrams => {
            let mut scored = Vec::new();
            for span in candidate_spans(tokens.len(), config.max_len, Strategy::AllNgrams) {
                if let Some((entry, d)) = nearest(span)? {
                    if d <= config.tau {
                        scored.push((d, span, entry));
                    }
                }
            }
            scored.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let mut taken: Vec<Span> = Vec::new();
            for (d, span, entry) in scored {
                if accepted.len() >= config.max_pairs {
                    break;
                }
                if taken.iter().any(|t| t.overlaps(&span)) {
                    continue;
                }
                if seen.contains(&(entry.src_phrase.clone(), entry.tgt_phrase.clone())) {
                    continue;
                }
                taken.push(span);
                take(&mut seen, &mut accepted, span, entry, d);
            }
        }
    }
    accepted.sort_by_key(|(span, _)| *span);
    Ok(accepted)
}

fn take(
    seen: &mut HashSet<(String, String)>,
    accepted: &mut Vec<(Span, PromptPair)>,
    span: Span,
    entry: &PhraseEntry,
    distance: f32,
) {
    if seen.insert((entry.src_phrase.clone(), entry.tgt_phrase.clone())) {
        accepted.push((
            span,
            PromptPair {
                src: entry.src_phrase.clone(),
                tgt: entry.tgt_phrase.clone(),
                distance: Some(distance),
            },
        ));
    }
}

fn canonical_phrase(phrase: &str) -> Result<String> {
    let tokens: Vec<&str> = phrase.split_whitespace().collect();
    if tokens.is_empty() {
        return Err(Error::EmptyPhrase);
    }
    if let Some(tok) = tokens.iter().find(|t| is_marker(t)) {
        return Err(Error::ReservedToken {
            token: (*tok).to_owned(),
            context: format!("phrase {phrase:?}"),
        });
    }
    Ok(tokens.join(" "))
}

/// `p1src <q> p1tgt <r> ... <r> SOURCE`; an empty prompt yields the bare source.
pub fn render_prompt(prompt: &Prompt, tokens: &[String]) -> Result<String> {
    let mut parts = Vec::with_capacity(prompt.len() * 4 + tokens.len());
    for pair in prompt.pairs() {
        parts.push(canonical_phrase(&pair.src)?);
        parts.push(PAIR_MARKER.to_owned());
        parts.push(canonical_phrase(&pair.tgt)?);
        parts.push(PROMPT_MARKER.to_owned());
    }
    if let Some(tok) = tokens.iter().find(|t| is_marker(t)) {
        return Err(Error::ReservedToken {
            token: tok.clone(),
            context: "source sentence".into(),
        });
    }
    parts.extend(tokens.iter().cloned());
    Ok(parts.join(" "))
}

/// Inverse of [`render_prompt`]. Distances are not recoverable and come back as `None`.
pub fn parse_prompted_line(line: &str) -> Result<(Prompt, Vec<String>)> {
    let tokens: Vec<&str> = line.split_whitespace().collect();
    let mut segments: Vec<&[&str]> = tokens.split(|t| *t == PROMPT_MARKER).collect();
    let source = segments.pop().unwrap_or_default();
    if source.contains(&PAIR_MARKER) {
        return Err(Error::DanglingMarker(format!(
            "{PAIR_MARKER} inside the source segment of {line:?}"
        )));
    }
    if !segments.is_empty() && source.is_empty() {
        return Err(Error::DanglingMarker(format!(
            "no source after final {PROMPT_MARKER}"
        )));
    }
    let mut pairs = Vec::with_capacity(segments.len());
    for seg in segments {
        let mut sides = seg.split(|t| *t == PAIR_MARKER);
        match (sides.next(), sides.next(), sides.next()) {
            (Some(src), Some(tgt), None) if !src.is_empty() && !tgt.is_empty() => {
                pairs.push(PromptPair::handcrafted(src.join(" "), tgt.join(" ")));
            }
            _ => {
                return Err(Error::DanglingMarker(format!(
                    "segment {:?} is not `src {PAIR_MARKER} tgt`",
                    seg.join(" ")
                )))
            }
        }
    }
    Ok((
        Prompt::from_pairs(pairs),
        source.iter().map(|t| (*t).to_owned()).collect(),
    ))
}

/// A handcrafted prompt imposing the given source→target renderings.
pub fn constraint_prompt<S: AsRef<str>>(pairs: &[(S, S)]) -> Result<Prompt> {
    let mut prompt = Prompt::default();
    for (src, tgt) in pairs {
        let src = canonical_phrase(src.as_ref())?;
        let tgt = canonical_phrase(tgt.as_ref())?;
        prompt.push(PromptPair::handcrafted(src, tgt));
    }
    Ok(prompt)
}

/// True when `needle` occurs as a contiguous run of `haystack`.
pub fn contains_tokens<T: PartialEq<U>, U>(haystack: &[T], needle: &[U]) -> bool {
    !needle.is_empty()
        && haystack.len() >= needle.len()
        && haystack
            .windows(needle.len())
            .any(|w| w.iter().zip(needle).all(|(a, b)| a == b))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toks(s: &str) -> Vec<String> {
        s.split_whitespace().map(str::to_owned).collect()
    }

    fn pair(src: &str, tgt: &str) -> PromptPair {
        PromptPair::handcrafted(src, tgt)
    }

    #[test]
    fn candidate_span_enumeration() {
        assert_eq!(
            candidate_spans(2, 2, Strategy::AllNgrams),
            [Span::new(0, 1), Span::new(0, 2), Span::new(1, 2)]
        );
        for s in [Strategy::AllNgrams, Strategy::GreedyCover] {
            assert_eq!(candidate_spans(1, 4, s), [Span::new(0, 1)]);
        }
        assert_eq!(candidate_spans(3, 2, Strategy::AllNgrams).len(), 5);
        assert_eq!(
            candidate_spans(2, 2, Strategy::GreedyCover),
            [Span::new(0, 2), Span::new(0, 1), Span::new(1, 2)]
        );
    }

    #[test]
    fn renders_single_pair() {
        let p = Prompt::from_pairs([pair("based on", "je nach")]);
        assert_eq!(
            render_prompt(&p, &toks("it works")).unwrap(),
            "based on <q> je nach <r> it works"
        );
        assert_eq!(render_prompt(&Prompt::default(), &toks("a")).unwrap(), "a");
    }

    #[test]
    fn render_rejects_markers() {
        let p = Prompt::from_pairs([pair("a <r> b", "c")]);
        assert!(matches!(
            render_prompt(&p, &toks("x")),
            Err(Error::ReservedToken { .. })
        ));
    }

    #[test]
    fn parse_examples() {
        let (p, t) = parse_prompted_line("a b").unwrap();
        assert!(p.is_empty());
        assert_eq!(t, ["a", "b"]);

        let (p, t) = parse_prompted_line("based on <q> je nach <r> it works").unwrap();
        assert_eq!(p.string_pairs(), [("based on".into(), "je nach".into())]);
        assert_eq!(t, ["it", "works"]);

        for bad in [
            "x <q> y",
            "x <q> y <r>",
            "<q> y <r> s",
            "x <q> <r> s",
            "a <q> b <q> c <r> s",
            "x y <r> s",
        ] {
            assert!(
                matches!(parse_prompted_line(bad), Err(Error::DanglingMarker(_))),
                "{bad}"
            );
        }
    }

    #[test]
    fn constraint_prompts() {
        let p = constraint_prompt(&[("Poulvac FluFend H5N3", "Poulvac FluFend H5N3")]).unwrap();
        assert_eq!(p.len(), 1);
        assert_eq!(p.pairs()[0].distance, None);
        assert_eq!(
            render_prompt(&p, &toks("RG")).unwrap(),
            "Poulvac FluFend H5N3 <q> Poulvac FluFend H5N3 <r> RG"
        );

        let p = constraint_prompt(&[("a", "b"), ("a", "b")]).unwrap();
        assert_eq!(p.len(), 1);

        assert!(matches!(
            constraint_prompt(&[("<q>", "b")]),
            Err(Error::ReservedToken { .. })
        ));
        assert!(matches!(
            constraint_prompt(&[(" ", "b")]),
            Err(Error::EmptyPhrase)
        ));
    }

    #[test]
    fn token_containment() {
        let hay = toks("die rote Katze");
        assert!(contains_tokens(&hay, &toks("rote Katze")));
        assert!(!contains_tokens(&hay, &toks("rot")));
        assert!(!contains_tokens(&hay, &Vec::<String>::new()));
        assert!(!contains_tokens(&toks("a"), &toks("a b")));
    }

    #[test]
    fn strategy_parsing() {
        assert_eq!("all_ngrams".parse::<Strategy>().unwrap(), Strategy::AllNgrams);
        assert_eq!(Strategy::GreedyCover.to_string(), "greedy_cover");
        assert!("nope".parse::<Strategy>().is_err());
    }
}
