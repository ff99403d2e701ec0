//! The bilingual phrase database.
//!
//! Every extracted phrase occurrence becomes one entry keyed by the pooled
//! contextual vector of its source span. Identical phrase pairs from
//! different sentences stay separate entries, since their vectors differ.
//!
//! File layout (little-endian):
//!
//! ```text
//! magic "RPPD1\0" | u32 version
//! u8 index kind (0 = flat, 1 = IVF-PQ) | u64 length | index block
//! u64 length | entries block: "entry_id\tsentence_id\tsrc\ttgt\n" per entry
//! u64 length | vectors block: entry_count * dim f32, entry order
//! ```
//!
//! The flat index block is just the `u32` dim; the flat index is rebuilt
//! from the vectors block. The IVF-PQ block is a complete `RPPI1` file.

use std::collections::HashSet;
use std::fs::File;
use std::io::{BufReader, BufWriter, Cursor, Read, Write};
use std::path::Path;

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rayon::prelude::*;

use crate::corpus::ParallelCorpus;
use crate::embed::{pool_phrase, EmbeddingProvider};
use crate::error::{Error, Result};
use crate::extract::extract_corpus_phrases;
use crate::index::{FlatIndex, IvfPqConfig, IvfPqIndex, SearchParams, SearchResult};

pub const DB_MAGIC: &[u8; 6] = b"RPPD1\0";
pub const DB_VERSION: u32 = 1;

const KIND_FLAT: u8 = 0;
const KIND_IVFPQ: u8 = 1;

#[derive(Debug, Clone, PartialEq)]
pub struct PhraseEntry {
    pub entry_id: u64,
    pub src_phrase: String,
    pub tgt_phrase: String,
    pub sentence_id: usize,
    pub vector: Vec<f32>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum IndexConfig {
    #[default]
    Flat,
    IvfPq(IvfPqConfig),
}

#[derive(Debug, Clone, PartialEq)]
pub enum VecIndex {
    Flat(FlatIndex),
    IvfPq(IvfPqIndex),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct DbStats {
    pub entry_count: usize,
    pub distinct_src_phrases: usize,
    pub distinct_pairs: usize,
    pub dim: usize,
}

impl DbStats {
    /// `key=value` lines, one per field.
    pub fn to_kv_lines(&self) -> String {
        format!(
            "entry_count={}\ndistinct_src_phrases={}\ndistinct_pairs={}\ndim={}\n",
            self.entry_count, self.distinct_src_phrases, self.distinct_pairs, self.dim
        )
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PhraseDatabase {
    dim: usize,
    entries: Vec<PhraseEntry>,
    index: VecIndex,
}

#[derive(Debug, Clone, Copy)]
pub struct BuildOptions {
    pub max_len: usize,
    pub index: IndexConfig,
    /// Drop entries whose source, target and vector bits repeat an earlier entry.
    pub dedup_exact: bool,
}

impl Default for BuildOptions {
    fn default() -> Self {
        BuildOptions {
            max_len: crate::extract::DEFAULT_MAX_LEN,
            index: IndexConfig::Flat,
            dedup_exact: false,
        }
    }
}

pub fn build_database(
    corpus: &ParallelCorpus,
    provider: &dyn EmbeddingProvider,
    options: &BuildOptions,
) -> Result<PhraseDatabase> {
    let occurrences = extract_corpus_phrases(corpus, options.max_len)?;
    if occurrences.is_empty() {
        return Err(Error::EmptyDatabase);
    }
    let mut needed: Vec<usize> = occurrences.iter().map(|o| o.sentence_id).collect();
    needed.dedup();
    let embedded: Vec<_> = needed
        .par_iter()
        .map(|&id| {
            let pair = &corpus.pairs[id];
            provider.embed(id, &pair.src).map(|tv| (id, tv))
        })
        .collect::<Result<_>>()?;

    let mut entries = Vec::with_capacity(occurrences.len());
    let mut cursor = 0;
    for occ in occurrences {
        while embedded[cursor].0 != occ.sentence_id {
            cursor += 1;
        }
        let vector = pool_phrase(&embedded[cursor].1, occ.spans.src)?;
        entries.push(PhraseEntry {
            entry_id: 0,
            src_phrase: occ.src_phrase,
            tgt_phrase: occ.tgt_phrase,
            sentence_id: occ.sentence_id,
            vector,
        });
    }
    if options.dedup_exact {
        let mut seen = HashSet::new();
        entries.retain(|e| {
            let bits: Vec<u32> = e.vector.iter().map(|x| x.to_bits()).collect();
            seen.insert((e.src_phrase.clone(), e.tgt_phrase.clone(), bits))
        });
    }
    for (i, e) in entries.iter_mut().enumerate() {
        e.entry_id = i as u64;
    }
    PhraseDatabase::from_entries(provider.dim(), entries, &options.index)
}

impl PhraseDatabase {
    /// Builds the index over `entries`, whose ids must be `0..len`.
    pub fn from_entries(dim: usize, entries: Vec<PhraseEntry>, config: &IndexConfig) -> Result<Self> {
        if dim == 0 {
            return Err(Error::BadShape("dim must be positive".into()));
        }
        for (i, e) in entries.iter().enumerate() {
            if e.entry_id != i as u64 {
                return Err(Error::Format(format!(
                    "entry ids must be contiguous from 0, found {} at {i}",
                    e.entry_id
                )));
            }
        }
        let rows = entries.iter().map(|e| (e.entry_id, e.vector.as_slice()));
        let index = match config {
            IndexConfig::Flat => VecIndex::Flat(FlatIndex::build(dim, rows)?),
            IndexConfig::IvfPq(cfg) => {
                if entries.is_empty() {
                    return Err(Error::EmptyDatabase);
                }
                VecIndex::IvfPq(IvfPqIndex::build(dim, rows, cfg)?)
            }
        };
        Ok(PhraseDatabase { dim, entries, index })
    }

    /// A database with no entries and a flat index.
    pub fn empty(dim: usize) -> Result<Self> {
        Self::from_entries(dim, Vec::new(), &IndexConfig::Flat)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn entries(&self) -> &[PhraseEntry] {
        &self.entries
    }

    pub fn entry(&self, id: u64) -> Option<&PhraseEntry> {
        self.entries.get(id as usize)
    }

    pub fn index(&self) -> &VecIndex {
        &self.index
    }

    pub fn contains_pair(&self, src: &str, tgt: &str) -> bool {
        self.entries
            .iter()
            .any(|e| e.src_phrase == src && e.tgt_phrase == tgt)
    }

    pub fn stats(&self) -> DbStats {
        let src: HashSet<&str> = self.entries.iter().map(|e| e.src_phrase.as_str()).collect();
        let pairs: HashSet<(&str, &str)> = self
            .entries
            .iter()
            .map(|e| (e.src_phrase.as_str(), e.tgt_phrase.as_str()))
            .collect();
        DbStats {
            entry_count: self.entries.len(),
            distinct_src_phrases: src.len(),
            distinct_pairs: pairs.len(),
            dim: self.dim,
        }
    }

    fn search(
        &self,
        query: &[f32],
        k: usize,
        params: &SearchParams,
        keep: &(dyn Fn(u64) -> bool + Sync),
    ) -> Result<SearchResult> {
        match &self.index {
            VecIndex::Flat(flat) => flat.search_filtered(query, k, keep),
            VecIndex::IvfPq(ivf) => {
                let nprobe = params.nprobe.unwrap_or_else(|| ivf.default_nprobe());
                let rerank = params
                    .rerank_depth
                    .unwrap_or(if ivf.has_originals() { 100 } else { 0 });
                // A non-zero re-rank depth never returns fewer than k hits.
                let rerank = if rerank > 0 { rerank.max(k) } else { 0 };
                ivf.search_filtered(query, k, nprobe, rerank, keep)
            }
        }
    }

    /// The `k` entries nearest to `query`, with squared L2 distances.
    pub fn query(&self, query: &[f32], k: usize, params: &SearchParams) -> Result<Vec<(&PhraseEntry, f32)>> {
        self.query_filtered(query, k, params, &|_| true)
    }

    /// Like [`PhraseDatabase::query`], skipping entries rejected by `keep`.
    pub fn query_filtered(
        &self,
        query: &[f32],
        k: usize,
        params: &SearchParams,
        keep: &(dyn Fn(&PhraseEntry) -> bool + Sync),
    ) -> Result<Vec<(&PhraseEntry, f32)>> {
        if query.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: query.len(),
            });
        }
        let by_id = |id: u64| self.entries.get(id as usize).is_some_and(keep);
        let result = self.search(query, k, params, &by_id)?;
        Ok(result
            .hits
            .into_iter()
            .map(|h| (&self.entries[h.id as usize], h.distance))
            .collect())
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(DB_MAGIC)?;
        out.write_u32::<LittleEndian>(DB_VERSION)?;

        let mut index_block = Vec::new();
        let kind = match &self.index {
            VecIndex::Flat(_) => {
                index_block.write_u32::<LittleEndian>(self.dim as u32)?;
                KIND_FLAT
            }
            VecIndex::IvfPq(ivf) => {
                ivf.write_to(&mut index_block)?;
                KIND_IVFPQ
            }
        };
        out.write_u8(kind)?;
        write_block(&mut out, &index_block)?;

        let mut entries_block = String::new();
        for e in &self.entries {
            entries_block.push_str(&format!(
                "{}\t{}\t{}\t{}\n",
                e.entry_id, e.sentence_id, e.src_phrase, e.tgt_phrase
            ));
        }
        write_block(&mut out, entries_block.as_bytes())?;

        let mut vectors_block = Vec::with_capacity(self.entries.len() * self.dim * 4);
        for e in &self.entries {
            for &x in &e.vector {
                vectors_block.write_f32::<LittleEndian>(x)?;
            }
        }
        write_block(&mut out, &vectors_block)?;
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 6];
        input.read_exact(&mut magic).map_err(Error::from_read)?;
        if &magic != DB_MAGIC {
            return Err(Error::BadMagic { expected: "RPPD1" });
        }
        let version = input.read_u32::<LittleEndian>().map_err(Error::from_read)?;
        if version != DB_VERSION {
            return Err(Error::VersionMismatch { found: version });
        }
        let kind = input.read_u8().map_err(Error::from_read)?;
        let index_block = read_block(&mut input)?;
        let entries_block = read_block(&mut input)?;
        let vectors_block = read_block(&mut input)?;

        let ivf = match kind {
            KIND_FLAT => None,
            KIND_IVFPQ => Some(IvfPqIndex::read_from(Cursor::new(&index_block))?),
            other => return Err(Error::Format(format!("unknown index kind {other}"))),
        };
        let dim = match &ivf {
            Some(ivf) => ivf.dim(),
            None => Cursor::new(&index_block)
                .read_u32::<LittleEndian>()
                .map_err(Error::from_read)? as usize,
        };
        if dim == 0 {
            return Err(Error::BadShape("dim must be positive".into()));
        }

        let text = String::from_utf8(entries_block)
            .map_err(|_| Error::Format("entries block is not UTF-8".into()))?;
        let mut entries = Vec::new();
        for (n, line) in text.lines().enumerate() {
            let fields: Vec<&str> = line.split('\t').collect();
            let [id, sid, src, tgt] = fields[..] else {
                return Err(Error::Format(format!("entry line {}: expected 4 fields", n + 1)));
            };
            let parse = |s: &str| {
                s.parse::<u64>()
                    .map_err(|_| Error::Format(format!("entry line {}: bad number {s:?}", n + 1)))
            };
            entries.push(PhraseEntry {
                entry_id: parse(id)?,
                sentence_id: parse(sid)? as usize,
                src_phrase: src.to_owned(),
                tgt_phrase: tgt.to_owned(),
                vector: Vec::new(),
            });
        }
        if vectors_block.len() != entries.len() * dim * 4 {
            return Err(Error::TruncatedFile);
        }
        let mut floats = vec![0f32; entries.len() * dim];
        Cursor::new(&vectors_block)
            .read_f32_into::<LittleEndian>(&mut floats)
            .map_err(Error::from_read)?;
        for (e, v) in entries.iter_mut().zip(floats.chunks_exact(dim)) {
            e.vector = v.to_vec();
        }

        match ivf {
            None => Self::from_entries(dim, entries, &IndexConfig::Flat),
            Some(ivf) => {
                if ivf.len() != entries.len() {
                    return Err(Error::Format(format!(
                        "index holds {} ids for {} entries",
                        ivf.len(),
                        entries.len()
                    )));
                }
                Ok(PhraseDatabase {
                    dim,
                    entries,
                    index: VecIndex::IvfPq(ivf),
                })
            }
        }
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        self.write_to(BufWriter::new(File::create(path)?))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        Self::read_from(BufReader::new(File::open(path)?))
    }
}

fn write_block<W: Write>(out: &mut W, block: &[u8]) -> Result<()> {
    out.write_u64::<LittleEndian>(block.len() as u64)?;
    out.write_all(block)?;
    Ok(())
}

fn read_block<R: Read>(input: &mut R) -> Result<Vec<u8>> {
    let len = input.read_u64::<LittleEndian>().map_err(Error::from_read)?;
    let mut block = Vec::new();
    let got = input.by_ref().take(len).read_to_end(&mut block)?;
    if (got as u64) < len {
        return Err(Error::TruncatedFile);
    }
    Ok(block)
}
