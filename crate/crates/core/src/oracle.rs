//! Brute-force reference implementations and the randomized suites that
//! compare them against the production code.
//!
//! Nothing here calls into the algorithms it checks: consistency, distance,
//! n-gram counting and subsequence search are all written out again in the
//! most direct form. Only plain data types are shared.

use std::collections::{BTreeMap, BTreeSet};
use std::fmt;
use std::str::FromStr;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use crate::corpus::{AlignmentSet, SentencePair};
use crate::error::{Error, Result};
use crate::extract::SpanPair;
use crate::index::{Hit, SearchResult};

#[derive(Debug, Clone, Default, PartialEq, Eq)]
pub struct OracleReport {
    pub case_count: usize,
    pub mismatch_count: usize,
    pub first_mismatch: Option<String>,
}

impl OracleReport {
    pub fn record(&mut self, ok: bool, describe: impl FnOnce() -> String) {
        self.case_count += 1;
        if !ok {
            self.mismatch_count += 1;
            if self.first_mismatch.is_none() {
                self.first_mismatch = Some(describe());
            }
        }
    }

    pub fn merge(&mut self, other: OracleReport) {
        self.case_count += other.case_count;
        self.mismatch_count += other.mismatch_count;
        if self.first_mismatch.is_none() {
            self.first_mismatch = other.first_mismatch;
        }
    }

    pub fn passed(&self) -> bool {
        self.mismatch_count == 0
    }
}

impl fmt::Display for OracleReport {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "cases={} mismatches={}", self.case_count, self.mismatch_count)
    }
}

/// Every span pair within `max_len`, kept when the links agree with it.
pub fn oracle_extract(pair: &SentencePair, links: &AlignmentSet, max_len: usize) -> BTreeSet<SpanPair> {
    let mut out = BTreeSet::new();
    let (n, m) = (pair.src.len(), pair.tgt.len());
    for sb in 0..n {
        for se in sb + 1..=n {
            for tb in 0..m {
                for te in tb + 1..=m {
                    if se - sb > max_len || te - tb > max_len {
                        continue;
                    }
                    let mut anchored = false;
                    let mut leaks = false;
                    for &(i, j) in &links.links {
                        let in_src = sb <= i && i < se;
                        let in_tgt = tb <= j && j < te;
                        if in_src && in_tgt {
                            anchored = true;
                        }
                        if in_src != in_tgt {
                            leaks = true;
                        }
                    }
                    if anchored && !leaks {
                        out.insert(SpanPair::new((sb, se), (tb, te)));
                    }
                }
            }
        }
    }
    out
}

/// Full scan plus stable sort by `(distance, id)`.
pub fn oracle_knn(entries: &[(u64, Vec<f32>)], query: &[f32], k: usize) -> SearchResult {
    let mut all: Vec<Hit> = entries
        .iter()
        .map(|(id, v)| {
            let mut d = 0f32;
            for t in 0..query.len() {
                let diff = query[t] - v[t];
                d += diff * diff;
            }
            Hit { id: *id, distance: d }
        })
        .collect();
    all.sort_by(|a, b| {
        a.distance
            .partial_cmp(&b.distance)
            .expect("finite distances")
            .then(a.id.cmp(&b.id))
    });
    all.truncate(k);
    SearchResult { hits: all }
}

/// Textbook corpus BLEU written with products instead of logs.
pub fn oracle_bleu(hyps: &[Vec<String>], refs: &[Vec<String>], max_n: usize) -> f64 {
    let mut matched = vec![0u64; max_n + 1];
    let mut total = vec![0u64; max_n + 1];
    let (mut c, mut r) = (0u64, 0u64);
    for (h, rf) in hyps.iter().zip(refs) {
        c += h.len() as u64;
        r += rf.len() as u64;
        for n in 1..=max_n {
            let grams = |toks: &[String]| {
                let mut map: BTreeMap<String, u64> = BTreeMap::new();
                let mut start = 0;
                while start + n <= toks.len() {
                    *map.entry(toks[start..start + n].join("\u{1}")).or_default() += 1;
                    start += 1;
                }
                map
            };
            let hg = grams(h);
            let rg = grams(rf);
            for (g, cnt) in &hg {
                matched[n] += (*cnt).min(*rg.get(g).unwrap_or(&0));
                total[n] += cnt;
            }
        }
    }
    let mut product = 1.0f64;
    for n in 1..=max_n {
        if matched[n] == 0 {
            return 0.0;
        }
        product *= matched[n] as f64 / total[n] as f64;
    }
    let bp = if c < r {
        (1.0 - r as f64 / c as f64).exp()
    } else {
        1.0
    };
    100.0 * bp * product.powf(1.0 / max_n as f64)
}

/// Quadratic scan for `needle` as a contiguous run of `haystack`.
pub fn naive_contains(haystack: &[String], needle: &[String]) -> bool {
    if needle.is_empty() {
        return false;
    }
    let mut start = 0;
    while start + needle.len() <= haystack.len() {
        let mut all = true;
        for k in 0..needle.len() {
            if haystack[start + k] != needle[k] {
                all = false;
                break;
            }
        }
        if all {
            return true;
        }
        start += 1;
    }
    false
}

/// A sentence pair with both sides of length `1..=max_side` and each of the
/// `src_len * tgt_len` cells linked with probability up to `max_density`.
pub fn random_aligned_pair(
    rng: &mut impl Rng,
    id: usize,
    max_side: usize,
    max_density: f64,
) -> (SentencePair, AlignmentSet) {
    let n = rng.gen_range(1..=max_side);
    let m = rng.gen_range(1..=max_side);
    let density = rng.gen_range(0.0..=max_density);
    let mut links = BTreeSet::new();
    for i in 0..n {
        for j in 0..m {
            if rng.gen_bool(density) {
                links.insert((i, j));
            }
        }
    }
    let pair = SentencePair {
        id,
        src: (0..n).map(|i| format!("s{i}")).collect(),
        tgt: (0..m).map(|j| format!("t{j}")).collect(),
    };
    (pair, AlignmentSet { id, links })
}

/// `n` rows of `dim` standard-normal components, row-major.
pub fn gaussian_vectors(n: usize, dim: usize, seed: u64) -> Vec<f32> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    (0..n * dim)
        .map(|_| rng.sample::<f32, _>(StandardNormal))
        .collect()
}

/// Ids and distances equal, distances within `rel_tol` relative error.
pub fn same_hits(a: &SearchResult, b: &SearchResult, rel_tol: f32) -> bool {
    a.len() == b.len()
        && a.hits.iter().zip(&b.hits).all(|(x, y)| {
            x.id == y.id
                && (x.distance - y.distance).abs()
                    <= rel_tol * x.distance.abs().max(y.distance.abs()).max(f32::MIN_POSITIVE)
        })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Suite {
    Extract,
    Knn,
    Bleu,
    Roundtrip,
}

impl FromStr for Suite {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "extract" => Ok(Suite::Extract),
            "knn" => Ok(Suite::Knn),
            "bleu" => Ok(Suite::Bleu),
            "roundtrip" => Ok(Suite::Roundtrip),
            other => Err(Error::InvalidParameter(format!(
                "unknown suite {other:?} (expected extract, knn, bleu or roundtrip)"
            ))),
        }
    }
}

impl Suite {
    pub fn default_cases(self) -> usize {
        match self {
            Suite::Extract => 1000,
            Suite::Knn => 100,
            Suite::Bleu => 200,
            Suite::Roundtrip => 1000,
        }
    }

    pub fn run(self, cases: usize, seed: u64) -> Result<OracleReport> {
        match self {
            Suite::Extract => Ok(suites::extract(cases, seed)),
            Suite::Knn => suites::knn(cases, seed),
            Suite::Bleu => suites::bleu(cases, seed),
            Suite::Roundtrip => suites::roundtrip(cases, seed),
        }
    }
}

pub mod suites {
    //! Randomized comparisons of production code against the oracles.

    use super::*;
    use crate::embed::TokenVectors;
    use crate::eval::{bleu as prod_bleu, constraint_accuracy, BleuConfig, ConstraintCase};
    use crate::extract::extract_phrase_pairs;
    use crate::index::{FlatIndex, IvfPqConfig, IvfPqIndex};
    use crate::prompt::{parse_prompted_line, render_prompt, Prompt, PromptPair};
    use crate::vectors_file::{read_vectors, write_vectors};

    pub fn extract(cases: usize, seed: u64) -> OracleReport {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut report = OracleReport::default();
        for id in 0..cases {
            let (pair, links) = random_aligned_pair(&mut rng, id, 8, 0.5);
            let max_len = rng.gen_range(1..=8);
            let got = extract_phrase_pairs(&pair, &links, max_len);
            let want = oracle_extract(&pair, &links, max_len);
            report.record(got == want, || {
                format!(
                    "sentence {id}: {}x{} links [{}] max_len {max_len}: got {} pairs, oracle {}",
                    pair.src.len(),
                    pair.tgt.len(),
                    links.to_pharaoh(),
                    got.len(),
                    want.len()
                )
            });
        }
        report
    }

    fn rows(data: &[f32], dim: usize) -> Vec<(u64, Vec<f32>)> {
        data.chunks_exact(dim)
            .enumerate()
            .map(|(i, v)| (i as u64, v.to_vec()))
            .collect()
    }

    /// Exact search against the full scan on 10k vectors of dim 32 (k = 10).
    pub fn flat_vs_oracle(queries: usize, seed: u64) -> Result<OracleReport> {
        let dim = 32;
        let entries = rows(&gaussian_vectors(10_000, dim, seed), dim);
        let flat = FlatIndex::build(dim, entries.iter().map(|(id, v)| (*id, v.as_slice())))?;
        let qs = gaussian_vectors(queries, dim, seed ^ 0x5eed);
        let mut report = OracleReport::default();
        for (qi, q) in qs.chunks_exact(dim).enumerate() {
            let got = flat.search(q, 10)?;
            let want = oracle_knn(&entries, q, 10);
            report.record(same_hits(&got, &want, 1e-6), || {
                format!("query {qi}: {:?} vs {:?}", got.ids(), want.ids())
            });
        }
        Ok(report)
    }

    /// Exhaustive probing with full re-rank against the full scan on `n` vectors.
    pub fn ivfpq_exhaustive_vs_oracle(n: usize, queries: usize, seed: u64) -> Result<OracleReport> {
        let dim = 32;
        let entries = rows(&gaussian_vectors(n, dim, seed), dim);
        let cfg = IvfPqConfig {
            seed,
            ..Default::default()
        };
        let ivf = IvfPqIndex::build(dim, entries.iter().map(|(id, v)| (*id, v.as_slice())), &cfg)?;
        let qs = gaussian_vectors(queries, dim, seed ^ 0xfeed);
        let mut report = OracleReport::default();
        for (qi, q) in qs.chunks_exact(dim).enumerate() {
            let got = ivf.search(q, 10, ivf.nlist(), n)?;
            let want = oracle_knn(&entries, q, 10);
            report.record(got.ids() == want.ids() && same_hits(&got, &want, 1e-5), || {
                format!("query {qi}: {:?} vs {:?}", got.ids(), want.ids())
            });
        }
        Ok(report)
    }

    pub fn knn(cases: usize, seed: u64) -> Result<OracleReport> {
        let mut report = flat_vs_oracle(cases, seed)?;
        report.merge(ivfpq_exhaustive_vs_oracle(2_000, cases.div_ceil(4), seed)?);
        Ok(report)
    }

    fn random_tokens(rng: &mut impl Rng, lens: std::ops::Range<usize>, vocab: usize) -> Vec<String> {
        let len = rng.gen_range(lens);
        (0..len)
            .map(|_| format!("w{}", rng.gen_range(0..vocab)))
            .collect()
    }

    pub fn bleu(cases: usize, seed: u64) -> Result<OracleReport> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut report = OracleReport::default();
        for case in 0..cases {
            let sentences = rng.gen_range(1..6);
            let mut hyps = Vec::new();
            let mut refs = Vec::new();
            for _ in 0..sentences {
                let r = random_tokens(&mut rng, 1..15, 6);
                // Hypotheses are noisy copies of the reference.
                let mut h: Vec<String> = r.iter().filter(|_| rng.gen_bool(0.85)).cloned().collect();
                if rng.gen_bool(0.3) {
                    h.extend(random_tokens(&mut rng, 2..3, 6));
                }
                hyps.push(h);
                refs.push(r);
            }
            let got = prod_bleu(&hyps, &refs, &BleuConfig::default())?;
            let want = oracle_bleu(&hyps, &refs, 4);
            report.record((got - want).abs() < 1e-9, || {
                format!("corpus {case}: bleu {got} vs oracle {want}")
            });

            let cases: Vec<ConstraintCase> = hyps
                .iter()
                .map(|h| {
                    let c = random_tokens(&mut rng, 1..3, 6);
                    ConstraintCase {
                        hyp_tokens: h.clone(),
                        constraint_tgt: c,
                    }
                })
                .collect();
            let got = constraint_accuracy(&cases)?;
            let hits = cases
                .iter()
                .filter(|c| naive_contains(&c.hyp_tokens, &c.constraint_tgt))
                .count();
            let want = hits as f64 / cases.len() as f64;
            report.record(got == want, || {
                format!("corpus {case}: accuracy {got} vs oracle {want}")
            });
        }
        Ok(report)
    }

    pub fn random_prompt(rng: &mut impl Rng) -> (Prompt, Vec<String>) {
        let pairs = (0..rng.gen_range(0..6)).map(|_| {
            let src = random_tokens(rng, 1..5, 30).join(" ");
            let tgt = random_tokens(rng, 1..5, 30).join(" ");
            PromptPair {
                src,
                tgt,
                distance: rng.gen_bool(0.5).then(|| rng.gen_range(0.0..4.0)),
            }
        });
        let prompt = Prompt::from_pairs(pairs);
        let tokens = random_tokens(rng, 1..12, 30);
        (prompt, tokens)
    }

    pub fn prompt_roundtrip(cases: usize, seed: u64) -> Result<OracleReport> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut report = OracleReport::default();
        for case in 0..cases {
            let (prompt, tokens) = random_prompt(&mut rng);
            let line = render_prompt(&prompt, &tokens)?;
            let (back, back_tokens) = parse_prompted_line(&line)?;
            let ok = back.string_pairs() == prompt.string_pairs() && back_tokens == tokens;
            report.record(ok, || format!("prompt {case}: {line:?}"));
        }
        Ok(report)
    }

    pub fn roundtrip(cases: usize, seed: u64) -> Result<OracleReport> {
        let mut report = prompt_roundtrip(cases, seed)?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed.wrapping_add(1));
        for case in 0..cases.div_ceil(10) {
            let dim = rng.gen_range(1..9);
            let sentences: Vec<TokenVectors> = (0..rng.gen_range(0..5))
                .map(|id| {
                    let len = rng.gen_range(0..6);
                    let data = (0..len * dim).map(|_| rng.sample(StandardNormal)).collect();
                    TokenVectors::new(id, dim, data)
                })
                .collect::<Result<_>>()?;
            let mut buf = Vec::new();
            write_vectors(&mut buf, &sentences)?;
            let back = read_vectors(&buf[..])?;
            let bits = |s: &[TokenVectors]| -> Vec<Vec<u32>> {
                s.iter()
                    .map(|tv| tv.data.iter().map(|x| x.to_bits()).collect())
                    .collect()
            };
            report.record(bits(&back) == bits(&sentences), || {
                format!("vectors file {case}: payload changed")
            });
        }
        Ok(report)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn oracle_extract_edge_cases() {
        let pair = SentencePair {
            id: 0,
            src: vec!["a".into(), "b".into()],
            tgt: vec!["x".into(), "y".into()],
        };
        assert!(oracle_extract(&pair, &AlignmentSet::new(0, []), 4).is_empty());
        let full = AlignmentSet::new(0, [(0, 0), (0, 1), (1, 0), (1, 1)]);
        assert_eq!(
            oracle_extract(&pair, &full, 4),
            BTreeSet::from([SpanPair::new((0, 2), (0, 2))])
        );
    }

    #[test]
    fn oracle_knn_single_entry() {
        let r = oracle_knn(&[(4, vec![1.0, 1.0])], &[0.0, 0.0], 3);
        assert_eq!(r.ids(), [4]);
        assert_eq!(r.hits[0].distance, 2.0);
    }

    #[test]
    fn oracle_bleu_hand_case() {
        let h = vec![vec!["a", "b", "c", "d"].into_iter().map(String::from).collect()];
        let r = vec![vec!["a", "b", "c", "d", "e"]
            .into_iter()
            .map(String::from)
            .collect()];
        assert!((oracle_bleu(&h, &r, 4) - 77.880078).abs() < 1e-5);
    }

    #[test]
    fn small_suites_pass() {
        for suite in [Suite::Extract, Suite::Bleu, Suite::Roundtrip] {
            let report = suite.run(50, 3).unwrap();
            assert!(report.passed(), "{suite:?}: {report} {:?}", report.first_mismatch);
        }
        assert!("nope".parse::<Suite>().is_err());
    }

    #[test]
    fn report_formatting() {
        let mut r = OracleReport::default();
        r.record(true, String::new);
        r.record(false, || "boom".into());
        assert_eq!(r.to_string(), "cases=2 mismatches=1");
        assert_eq!(r.first_mismatch.as_deref(), Some("boom"));
    }
}
