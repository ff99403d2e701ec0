//! Inverted-file index with product-quantized residuals.
//!
//! Vectors are assigned to the nearest of `nlist` coarse centroids. The
//! residual (vector minus centroid) is cut into `m` sub-vectors, each
//! replaced by the index of its nearest entry in a per-sub-space codebook of
//! `2^nbits` centroids. Queries scan the `nprobe` closest cells using
//! asymmetric distance tables and optionally re-rank the best candidates
//! against the original vectors.

use std::collections::{HashMap, HashSet};
use std::io::{Read, Write};

use byteorder::{LittleEndian, ReadBytesExt, WriteBytesExt};
use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::{check_finite, kmeans, nearest_centroid, squared_l2, top_k, Hit, SearchResult};
use crate::error::{Error, Result};

pub const INDEX_MAGIC: &[u8; 6] = b"RPPI1\0";

const FLAG_ORIGINALS: u8 = 1;

/// Build configuration; unset fields are derived from the collection size.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IvfPqConfig {
    pub nlist: Option<usize>,
    pub m: usize,
    pub nbits: u32,
    pub train_sample: Option<usize>,
    pub kmeans_iters: usize,
    pub seed: u64,
    pub keep_originals: bool,
}

impl Default for IvfPqConfig {
    fn default() -> Self {
        IvfPqConfig {
            nlist: None,
            m: 8,
            nbits: 8,
            train_sample: None,
            kmeans_iters: 20,
            seed: 42,
            keep_originals: true,
        }
    }
}

/// Fully resolved build parameters.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct IvfPqParams {
    pub nlist: usize,
    pub m: usize,
    pub nbits: u32,
    pub train_sample: usize,
    pub kmeans_iters: usize,
    pub seed: u64,
    pub keep_originals: bool,
}

impl IvfPqConfig {
    /// `nlist = min(ceil(sqrt(n)), 4096)`, `train_sample = min(n, 100 * nlist)`.
    pub fn resolve(&self, n: usize) -> IvfPqParams {
        let nlist = self
            .nlist
            .unwrap_or_else(|| ((n as f64).sqrt().ceil() as usize).clamp(1, 4096));
        let train_sample = self.train_sample.unwrap_or_else(|| n.min(100 * nlist));
        IvfPqParams {
            nlist,
            m: self.m,
            nbits: self.nbits,
            train_sample,
            kmeans_iters: self.kmeans_iters,
            seed: self.seed,
            keep_originals: self.keep_originals,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
struct Originals {
    ids: Vec<u64>,
    data: Vec<f32>,
    slots: HashMap<u64, usize>,
}

impl Originals {
    fn new(ids: Vec<u64>, data: Vec<f32>) -> Self {
        let slots = ids.iter().enumerate().map(|(s, &id)| (id, s)).collect();
        Originals { ids, data, slots }
    }

    fn get(&self, id: u64, dim: usize) -> Option<&[f32]> {
        self.slots.get(&id).map(|&s| &self.data[s * dim..(s + 1) * dim])
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct IvfPqIndex {
    dim: usize,
    nlist: usize,
    m: usize,
    nbits: u32,
    coarse: Vec<f32>,
    /// `m * 2^nbits * (dim / m)` values, sub-space major.
    codebooks: Vec<f32>,
    list_ids: Vec<Vec<u64>>,
    /// `m` code bytes per entry, parallel to `list_ids`.
    list_codes: Vec<Vec<u8>>,
    originals: Option<Originals>,
}

impl IvfPqIndex {
    pub fn build<'a, I>(dim: usize, vectors: I, config: &IvfPqConfig) -> Result<Self>
    where
        I: IntoIterator<Item = (u64, &'a [f32])>,
    {
        let mut ids = Vec::new();
        let mut data = Vec::new();
        let mut seen = HashSet::new();
        for (id, v) in vectors {
            if v.len() != dim {
                return Err(Error::DimMismatch {
                    expected: dim,
                    found: v.len(),
                });
            }
            check_finite(v)?;
            if !seen.insert(id) {
                return Err(Error::DuplicateId(id));
            }
            ids.push(id);
            data.extend_from_slice(v);
        }
        if ids.is_empty() {
            return Err(Error::EmptyInput);
        }
        let p = config.resolve(ids.len());
        Self::build_resolved(dim, ids, data, &p)
    }

    fn build_resolved(dim: usize, ids: Vec<u64>, data: Vec<f32>, p: &IvfPqParams) -> Result<Self> {
        if dim == 0 || p.m == 0 || !dim.is_multiple_of(p.m) {
            return Err(Error::BadShape(format!(
                "dim {dim} is not divisible into {} sub-quantizers",
                p.m
            )));
        }
        if p.nbits == 0 || p.nbits > 8 {
            return Err(Error::BadShape(format!("nbits {} outside 1..=8", p.nbits)));
        }
        if p.nlist == 0 || p.train_sample == 0 || p.kmeans_iters == 0 {
            return Err(Error::BadShape(
                "nlist, train_sample and kmeans_iters must be positive".into(),
            ));
        }
        let n = ids.len();
        let row = |i: usize| &data[i * dim..(i + 1) * dim];
        let mut rng = ChaCha8Rng::seed_from_u64(p.seed);
        let mut train: Vec<usize> = if p.train_sample < n {
            sample(&mut rng, n, p.train_sample).into_vec()
        } else {
            (0..n).collect()
        };
        train.sort_unstable();
        let train_points: Vec<f32> = train.iter().flat_map(|&i| row(i).iter().copied()).collect();

        let coarse = kmeans(&train_points, dim, p.nlist, p.kmeans_iters, p.seed);

        let assignment: Vec<usize> = (0..n)
            .into_par_iter()
            .map(|i| nearest_centroid(row(i), &coarse, dim).0)
            .collect();
        let residual = |i: usize| -> Vec<f32> {
            let c = &coarse[assignment[i] * dim..(assignment[i] + 1) * dim];
            row(i).iter().zip(c).map(|(x, y)| x - y).collect()
        };

        let dsub = dim / p.m;
        let ksub = 1usize << p.nbits;
        let train_residuals: Vec<Vec<f32>> = train.iter().map(|&i| residual(i)).collect();
        let codebooks: Vec<f32> = (0..p.m)
            .into_par_iter()
            .map(|s| {
                let sub: Vec<f32> = train_residuals
                    .iter()
                    .flat_map(|r| r[s * dsub..(s + 1) * dsub].iter().copied())
                    .collect();
                let seed = p.seed.wrapping_add(1 + s as u64);
                kmeans(&sub, dsub, ksub, p.kmeans_iters, seed)
            })
            .collect::<Vec<_>>()
            .concat();

        let codes: Vec<Vec<u8>> = (0..n)
            .into_par_iter()
            .map(|i| encode_residual(&residual(i), &codebooks, p.m, dsub, ksub))
            .collect();

        let mut list_ids = vec![Vec::new(); p.nlist];
        let mut list_codes = vec![Vec::new(); p.nlist];
        for i in 0..n {
            list_ids[assignment[i]].push(ids[i]);
            list_codes[assignment[i]].extend_from_slice(&codes[i]);
        }

        let originals = p.keep_originals.then(|| Originals::new(ids, data));
        Ok(IvfPqIndex {
            dim,
            nlist: p.nlist,
            m: p.m,
            nbits: p.nbits,
            coarse,
            codebooks,
            list_ids,
            list_codes,
            originals,
        })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn nlist(&self) -> usize {
        self.nlist
    }

    pub fn m(&self) -> usize {
        self.m
    }

    pub fn nbits(&self) -> u32 {
        self.nbits
    }

    pub fn len(&self) -> usize {
        self.list_ids.iter().map(Vec::len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn has_originals(&self) -> bool {
        self.originals.is_some()
    }

    pub fn list_ids(&self) -> &[Vec<u64>] {
        &self.list_ids
    }

    pub fn default_nprobe(&self) -> usize {
        (self.nlist / 8).max(1)
    }

    fn ksub(&self) -> usize {
        1 << self.nbits
    }

    fn dsub(&self) -> usize {
        self.dim / self.m
    }

    /// The stored code of `id`, if present.
    pub fn code(&self, id: u64) -> Option<&[u8]> {
        self.list_ids
            .iter()
            .zip(&self.list_codes)
            .find_map(|(ids, codes)| {
                ids.iter()
                    .position(|&x| x == id)
                    .map(|pos| &codes[pos * self.m..(pos + 1) * self.m])
            })
    }

    /// Coarse centroid plus decoded residual for `id`.
    pub fn reconstruct(&self, id: u64) -> Option<Vec<f32>> {
        let list = self.list_ids.iter().position(|ids| ids.contains(&id))?;
        let code = self.code(id)?;
        let (dsub, ksub) = (self.dsub(), self.ksub());
        let centroid = &self.coarse[list * self.dim..(list + 1) * self.dim];
        let mut out = Vec::with_capacity(self.dim);
        for (s, &c) in code.iter().enumerate() {
            let base = (s * ksub + c as usize) * dsub;
            out.extend_from_slice(&self.codebooks[base..base + dsub]);
        }
        out.iter_mut().zip(centroid).for_each(|(x, c)| *x += c);
        Some(out)
    }

    fn probe_cells(&self, query: &[f32], nprobe: usize) -> Vec<usize> {
        let mut cells: Vec<(f32, usize)> = self
            .coarse
            .chunks_exact(self.dim)
            .enumerate()
            .map(|(c, centroid)| (squared_l2(query, centroid), c))
            .collect();
        cells.sort_unstable_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
        cells.truncate(nprobe.min(self.nlist));
        cells.into_iter().map(|(_, c)| c).collect()
    }

    /// Ids stored in the `nprobe` cells closest to `query`.
    pub fn candidate_ids(&self, query: &[f32], nprobe: usize) -> Result<Vec<u64>> {
        self.check_query(query)?;
        Ok(self
            .probe_cells(query, nprobe)
            .into_iter()
            .flat_map(|c| self.list_ids[c].iter().copied())
            .collect())
    }

    fn check_query(&self, query: &[f32]) -> Result<()> {
        if query.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: query.len(),
            });
        }
        Ok(())
    }

    pub fn search(
        &self,
        query: &[f32],
        k: usize,
        nprobe: usize,
        rerank_depth: usize,
    ) -> Result<SearchResult> {
        self.search_filtered(query, k, nprobe, rerank_depth, &|_| true)
    }

    pub fn search_filtered(
        &self,
        query: &[f32],
        k: usize,
        nprobe: usize,
        rerank_depth: usize,
        keep: &(dyn Fn(u64) -> bool + Sync),
    ) -> Result<SearchResult> {
        self.check_query(query)?;
        if nprobe == 0 {
            return Err(Error::InvalidParameter("nprobe must be positive".into()));
        }
        if rerank_depth > 0 && self.originals.is_none() {
            return Err(Error::NoOriginals);
        }
        let (m, dsub, ksub) = (self.m, self.dsub(), self.ksub());
        let mut table = vec![0f32; m * ksub];
        let mut candidates = Vec::new();
        for cell in self.probe_cells(query, nprobe) {
            let centroid = &self.coarse[cell * self.dim..(cell + 1) * self.dim];
            let residual: Vec<f32> = query.iter().zip(centroid).map(|(q, c)| q - c).collect();
            for s in 0..m {
                let r = &residual[s * dsub..(s + 1) * dsub];
                for j in 0..ksub {
                    let base = (s * ksub + j) * dsub;
                    table[s * ksub + j] = squared_l2(r, &self.codebooks[base..base + dsub]);
                }
            }
            let codes = self.list_codes[cell].chunks_exact(m);
            for (&id, code) in self.list_ids[cell].iter().zip(codes) {
                if !keep(id) {
                    continue;
                }
                let distance = code
                    .iter()
                    .enumerate()
                    .map(|(s, &c)| table[s * ksub + c as usize])
                    .sum();
                candidates.push(Hit { id, distance });
            }
        }

        if rerank_depth == 0 {
            return Ok(top_k(candidates, k));
        }
        let originals = self.originals.as_ref().ok_or(Error::NoOriginals)?;
        let shortlist = top_k(candidates, rerank_depth);
        let exact = shortlist
            .hits
            .into_iter()
            .map(|h| {
                let v = originals.get(h.id, self.dim).ok_or(Error::NoOriginals)?;
                Ok(Hit {
                    id: h.id,
                    distance: squared_l2(query, v),
                })
            })
            .collect::<Result<Vec<_>>>()?;
        Ok(top_k(exact, k))
    }

    pub fn write_to<W: Write>(&self, mut out: W) -> Result<()> {
        out.write_all(INDEX_MAGIC)?;
        for v in [self.dim, self.nlist, self.m, self.nbits as usize] {
            out.write_u32::<LittleEndian>(v as u32)?;
        }
        out.write_u8(if self.originals.is_some() {
            FLAG_ORIGINALS
        } else {
            0
        })?;
        for &x in self.coarse.iter().chain(&self.codebooks) {
            out.write_f32::<LittleEndian>(x)?;
        }
        for (ids, codes) in self.list_ids.iter().zip(&self.list_codes) {
            out.write_u64::<LittleEndian>(ids.len() as u64)?;
            for (&id, code) in ids.iter().zip(codes.chunks_exact(self.m)) {
                out.write_u64::<LittleEndian>(id)?;
                out.write_all(code)?;
            }
        }
        if let Some(orig) = &self.originals {
            out.write_u64::<LittleEndian>(orig.ids.len() as u64)?;
            for (&id, v) in orig.ids.iter().zip(orig.data.chunks_exact(self.dim)) {
                out.write_u64::<LittleEndian>(id)?;
                for &x in v {
                    out.write_f32::<LittleEndian>(x)?;
                }
            }
        }
        out.flush()?;
        Ok(())
    }

    pub fn read_from<R: Read>(mut input: R) -> Result<Self> {
        let mut magic = [0u8; 6];
        input.read_exact(&mut magic).map_err(Error::from_read)?;
        if &magic != INDEX_MAGIC {
            return Err(Error::BadMagic { expected: "RPPI1" });
        }
        let mut header = [0u32; 4];
        input
            .read_u32_into::<LittleEndian>(&mut header)
            .map_err(Error::from_read)?;
        let [dim, nlist, m, nbits] = header.map(|v| v as usize);
        if dim == 0 || m == 0 || dim % m != 0 || nbits == 0 || nbits > 8 || nlist == 0 {
            return Err(Error::BadShape(format!(
                "dim={dim} nlist={nlist} m={m} nbits={nbits}"
            )));
        }
        let flags = input.read_u8().map_err(Error::from_read)?;
        let ksub = 1usize << nbits;
        let mut coarse = vec![0f32; nlist * dim];
        input
            .read_f32_into::<LittleEndian>(&mut coarse)
            .map_err(Error::from_read)?;
        let mut codebooks = vec![0f32; ksub * dim];
        input
            .read_f32_into::<LittleEndian>(&mut codebooks)
            .map_err(Error::from_read)?;

        let mut list_ids = Vec::with_capacity(nlist);
        let mut list_codes = Vec::with_capacity(nlist);
        for _ in 0..nlist {
            let len = input.read_u64::<LittleEndian>().map_err(Error::from_read)? as usize;
            let mut ids = Vec::with_capacity(len.min(1 << 20));
            let mut codes = Vec::with_capacity(len.min(1 << 20) * m);
            let mut code = vec![0u8; m];
            for _ in 0..len {
                ids.push(input.read_u64::<LittleEndian>().map_err(Error::from_read)?);
                input.read_exact(&mut code).map_err(Error::from_read)?;
                if code.iter().any(|&c| (c as usize) >= ksub) {
                    return Err(Error::Format(format!("code byte exceeds {nbits} bits")));
                }
                codes.extend_from_slice(&code);
            }
            list_ids.push(ids);
            list_codes.push(codes);
        }

        let originals = if flags & FLAG_ORIGINALS != 0 {
            let count = input.read_u64::<LittleEndian>().map_err(Error::from_read)? as usize;
            let mut ids = Vec::with_capacity(count.min(1 << 20));
            let mut data = Vec::with_capacity(count.min(1 << 20) * dim);
            let mut v = vec![0f32; dim];
            for _ in 0..count {
                ids.push(input.read_u64::<LittleEndian>().map_err(Error::from_read)?);
                input
                    .read_f32_into::<LittleEndian>(&mut v)
                    .map_err(Error::from_read)?;
                data.extend_from_slice(&v);
            }
            Some(Originals::new(ids, data))
        } else {
            None
        };
        Ok(IvfPqIndex {
            dim,
            nlist,
            m,
            nbits: nbits as u32,
            coarse,
            codebooks,
            list_ids,
            list_codes,
            originals,
        })
    }
}

fn encode_residual(residual: &[f32], codebooks: &[f32], m: usize, dsub: usize, ksub: usize) -> Vec<u8> {
    (0..m)
        .map(|s| {
            let sub = &residual[s * dsub..(s + 1) * dsub];
            let book = &codebooks[s * ksub * dsub..(s + 1) * ksub * dsub];
            nearest_centroid(sub, book, dsub).0 as u8
        })
        .collect()
}
