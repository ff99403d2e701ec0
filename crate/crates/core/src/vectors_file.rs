//! RPPV1 token-vector files.
//!
//! Little-endian layout: magic `RPPV1\0`, `u32` dim, `u32` sentence count,
//! then per sentence a `u32` token count followed by `token_count * dim`
//! `f32` values in row-major order.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};

use crate::corpus::ParallelCorpus;
use crate::embed::{EmbeddingProvider, TokenVectors};
use crate::error::{Error, Result};

pub const MAGIC: &[u8; 6] = b"RPPV1\0";

fn to_u32(n: usize, what: &str) -> Result<u32> {
    u32::try_from(n).map_err(|_| Error::BadShape(format!("{what} {n} exceeds u32")))
}

pub fn write_vectors<W: Write>(mut out: W, sentences: &[TokenVectors]) -> Result<()> {
    let dim = sentences.first().map_or(0, |tv| tv.dim);
    if let Some(bad) = sentences.iter().find(|tv| tv.dim != dim) {
        return Err(Error::DimMismatch {
            expected: dim,
            found: bad.dim,
        });
    }
    out.write_all(MAGIC)?;
    out.write_u32::<LittleEndian>(to_u32(dim, "dim")?)?;
    out.write_u32::<LittleEndian>(to_u32(sentences.len(), "sentence count")?)?;
    for tv in sentences {
        out.write_u32::<LittleEndian>(to_u32(tv.len(), "token count")?)?;
        for &x in &tv.data {
            out.write_f32::<LittleEndian>(x)?;
        }
    }
    out.flush()?;
    Ok(())
}

pub fn read_vectors<R: Read>(mut input: R) -> Result<Vec<TokenVectors>> {
    let mut magic = [0u8; 6];
    input.read_exact(&mut magic).map_err(Error::from_read)?;
    if &magic != MAGIC {
        return Err(Error::BadMagic { expected: "RPPV1" });
    }
    let dim = input.read_u32::<LittleEndian>().map_err(Error::from_read)? as usize;
    let count = input.read_u32::<LittleEndian>().map_err(Error::from_read)? as usize;
    if dim == 0 && count > 0 {
        return Err(Error::BadShape("dim 0 with non-empty payload".into()));
    }
    let mut sentences = Vec::with_capacity(count.min(1 << 20));
    for sentence_id in 0..count {
        let tokens = input.read_u32::<LittleEndian>().map_err(Error::from_read)? as usize;
        let mut data = vec![0f32; tokens * dim];
        input
            .read_f32_into::<LittleEndian>(&mut data)
            .map_err(Error::from_read)?;
        sentences.push(TokenVectors::new(sentence_id, dim, data)?);
    }
    let mut rest = [0u8; 1];
    if input.read(&mut rest)? != 0 {
        return Err(Error::Format("trailing bytes after RPPV1 payload".into()));
    }
    Ok(sentences)
}

pub fn write_vectors_file(path: impl AsRef<Path>, sentences: &[TokenVectors]) -> Result<()> {
    write_vectors(BufWriter::new(File::create(path)?), sentences)
}

pub fn load_vectors_file(path: impl AsRef<Path>) -> Result<Vec<TokenVectors>> {
    read_vectors(BufReader::new(File::open(path)?))
}

/// Checks sentence and token counts against the source side of `corpus`.
pub fn check_against_corpus(sentences: &[TokenVectors], corpus: &ParallelCorpus) -> Result<()> {
    check_against_tokens(sentences, corpus.pairs.iter().map(|p| p.src.len()))
}

pub fn check_against_tokens(
    sentences: &[TokenVectors],
    token_counts: impl ExactSizeIterator<Item = usize>,
) -> Result<()> {
    if sentences.len() != token_counts.len() {
        return Err(Error::LineCountMismatch {
            left: sentences.len(),
            right: token_counts.len(),
        });
    }
    for (tv, expected) in sentences.iter().zip(token_counts) {
        if tv.len() != expected {
            return Err(Error::TokenCountMismatch {
                sentence: tv.sentence_id,
                expected,
                found: tv.len(),
            });
        }
    }
    Ok(())
}

/// Serves precomputed vectors by sentence id.
#[derive(Debug, Clone)]
pub struct PrecomputedVectors {
    dim: usize,
    sentences: Vec<TokenVectors>,
}

impl PrecomputedVectors {
    pub fn new(sentences: Vec<TokenVectors>) -> Result<Self> {
        let dim = sentences.first().map(|tv| tv.dim).ok_or(Error::EmptyInput)?;
        if let Some(bad) = sentences.iter().find(|tv| tv.dim != dim) {
            return Err(Error::DimMismatch {
                expected: dim,
                found: bad.dim,
            });
        }
        Ok(PrecomputedVectors { dim, sentences })
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::new(load_vectors_file(path)?)
    }

    pub fn sentences(&self) -> &[TokenVectors] {
        &self.sentences
    }
}

impl EmbeddingProvider for PrecomputedVectors {
    fn dim(&self) -> usize {
        self.dim
    }

    fn embed(&self, sentence_id: usize, tokens: &[String]) -> Result<TokenVectors> {
        let tv = self.sentences.get(sentence_id).ok_or(Error::TokenCountMismatch {
            sentence: sentence_id,
            expected: tokens.len(),
            found: 0,
        })?;
        if tv.len() != tokens.len() {
            return Err(Error::TokenCountMismatch {
                sentence: sentence_id,
                expected: tokens.len(),
                found: tv.len(),
            });
        }
        Ok(tv.clone())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn encode(sentences: &[TokenVectors]) -> Vec<u8> {
        let mut buf = Vec::new();
        write_vectors(&mut buf, sentences).unwrap();
        buf
    }

    #[test]
    fn decodes_hand_built_file() {
        let mut buf = Vec::new();
        buf.extend_from_slice(b"RPPV1\0");
        buf.extend_from_slice(&4u32.to_le_bytes());
        buf.extend_from_slice(&1u32.to_le_bytes());
        buf.extend_from_slice(&2u32.to_le_bytes());
        for i in 0..8 {
            buf.extend_from_slice(&(i as f32).to_le_bytes());
        }
        let got = read_vectors(&buf[..]).unwrap();
        assert_eq!(got.len(), 1);
        assert_eq!(got[0].len(), 2);
        assert_eq!(got[0].dim, 4);
        assert_eq!(got[0].row(1), [4.0, 5.0, 6.0, 7.0]);

        buf.truncate(buf.len() - 4);
        assert!(matches!(read_vectors(&buf[..]), Err(Error::TruncatedFile)));
    }

    #[test]
    fn rejects_bad_magic_and_trailing_bytes() {
        let tv = TokenVectors::new(0, 2, vec![1.0, 2.0]).unwrap();
        let mut buf = encode(&[tv]);
        let mut bad = buf.clone();
        bad[0] = b'X';
        assert!(matches!(read_vectors(&bad[..]), Err(Error::BadMagic { .. })));
        buf.push(0);
        assert!(matches!(read_vectors(&buf[..]), Err(Error::Format(_))));
    }

    #[test]
    fn mixed_dims_rejected_on_write() {
        let a = TokenVectors::new(0, 2, vec![1.0, 2.0]).unwrap();
        let b = TokenVectors::new(1, 3, vec![1.0, 2.0, 3.0]).unwrap();
        assert!(matches!(
            write_vectors(Vec::new(), &[a, b]),
            Err(Error::DimMismatch {
                expected: 2,
                found: 3
            })
        ));
    }

    #[test]
    fn token_count_check() {
        let corpus = crate::corpus::parse_parallel("a b\nc\n", "x\ny\n").unwrap();
        let ok = vec![
            TokenVectors::new(0, 1, vec![0.0, 1.0]).unwrap(),
            TokenVectors::new(1, 1, vec![2.0]).unwrap(),
        ];
        check_against_corpus(&ok, &corpus).unwrap();
        let bad = vec![ok[1].clone(), ok[1].clone()];
        assert!(matches!(
            check_against_corpus(&bad, &corpus),
            Err(Error::TokenCountMismatch { .. })
        ));
    }

    proptest! {
        #[test]
        fn write_then_read_is_identity(
            dim in 1usize..6,
            lens in proptest::collection::vec(0usize..5, 0..5),
            seed in any::<u64>(),
        ) {
            let mut state = seed;
            let sentences: Vec<TokenVectors> = lens
                .iter()
                .enumerate()
                .map(|(id, &len)| {
                    let data = (0..len * dim)
                        .map(|_| {
                            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
                            ((state >> 40) as f32 / 1000.0) - 8000.0
                        })
                        .collect();
                    TokenVectors::new(id, dim, data).unwrap()
                })
                .collect();
            let back = read_vectors(&encode(&sentences)[..]).unwrap();
            prop_assert_eq!(back.len(), sentences.len());
            for (a, b) in back.iter().zip(&sentences) {
                prop_assert_eq!(a.sentence_id, b.sentence_id);
                prop_assert_eq!(
                    a.data.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
                    b.data.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
                );
            }
        }
    }
}
