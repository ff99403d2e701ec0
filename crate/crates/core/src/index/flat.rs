use std::collections::HashSet;

use rayon::prelude::*;

use super::{check_finite, squared_l2, top_k, Hit, SearchResult};
use crate::error::{Error, Result};

/// Brute-force index: scans every stored vector.
#[derive(Debug, Clone, PartialEq)]
pub struct FlatIndex {
    dim: usize,
    ids: Vec<u64>,
    data: Vec<f32>,
}

impl FlatIndex {
    pub fn new(dim: usize) -> Self {
        FlatIndex {
            dim,
            ids: Vec::new(),
            data: Vec::new(),
        }
    }

    pub fn build<'a, I>(dim: usize, entries: I) -> Result<Self>
    where
        I: IntoIterator<Item = (u64, &'a [f32])>,
    {
        if dim == 0 {
            return Err(Error::BadShape("dim must be positive".into()));
        }
        let mut index = FlatIndex::new(dim);
        let mut seen = HashSet::new();
        for (id, v) in entries {
            if !seen.insert(id) {
                return Err(Error::DuplicateId(id));
            }
            index.push(id, v)?;
        }
        Ok(index)
    }

    fn push(&mut self, id: u64, v: &[f32]) -> Result<()> {
        if v.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: v.len(),
            });
        }
        check_finite(v)?;
        self.ids.push(id);
        self.data.extend_from_slice(v);
        Ok(())
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.ids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.ids.is_empty()
    }

    pub fn ids(&self) -> &[u64] {
        &self.ids
    }

    pub fn vector(&self, slot: usize) -> &[f32] {
        &self.data[slot * self.dim..(slot + 1) * self.dim]
    }

    pub fn search(&self, query: &[f32], k: usize) -> Result<SearchResult> {
        self.search_filtered(query, k, &|_| true)
    }

    /// Like [`FlatIndex::search`], restricted to ids accepted by `keep`.
    pub fn search_filtered(
        &self,
        query: &[f32],
        k: usize,
        keep: &(dyn Fn(u64) -> bool + Sync),
    ) -> Result<SearchResult> {
        if query.len() != self.dim {
            return Err(Error::DimMismatch {
                expected: self.dim,
                found: query.len(),
            });
        }
        let hits: Vec<Hit> = self
            .ids
            .par_iter()
            .zip(self.data.par_chunks_exact(self.dim))
            .filter(|(&id, _)| keep(id))
            .map(|(&id, v)| Hit {
                id,
                distance: squared_l2(query, v),
            })
            .collect();
        Ok(top_k(hits, k))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn fixture() -> FlatIndex {
        let vs: [[f32; 2]; 3] = [[0.0, 0.0], [3.0, 4.0], [1.0, 0.0]];
        FlatIndex::build(2, vs.iter().enumerate().map(|(i, v)| (i as u64, &v[..]))).unwrap()
    }

    #[test]
    fn hand_computed_distances() {
        let r = fixture().search(&[0.0, 0.0], 3).unwrap();
        let got: Vec<(u64, f32)> = r.hits.iter().map(|h| (h.id, h.distance)).collect();
        assert_eq!(got, [(0, 0.0), (2, 1.0), (1, 25.0)]);
    }

    #[test]
    fn self_match_and_truncation() {
        let idx = fixture();
        let r = idx.search(&[3.0, 4.0], 1).unwrap();
        assert_eq!((r.hits[0].id, r.hits[0].distance), (1, 0.0));
        assert_eq!(idx.search(&[0.0, 0.0], 10).unwrap().len(), 3);
    }

    #[test]
    fn filtered_search_skips_ids() {
        let r = fixture().search_filtered(&[0.0, 0.0], 3, &|id| id != 0).unwrap();
        assert_eq!(r.ids(), [2, 1]);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            fixture().search(&[0.0], 1),
            Err(Error::DimMismatch {
                expected: 2,
                found: 1
            })
        ));
        let v = [0.0f32, 1.0];
        assert!(matches!(
            FlatIndex::build(2, [(1, &v[..]), (1, &v[..])]),
            Err(Error::DuplicateId(1))
        ));
        let nan = [f32::NAN, 0.0];
        assert!(matches!(
            FlatIndex::build(2, [(1, &nan[..])]),
            Err(Error::NonFinite)
        ));
    }
}
