//! Exact and IVF-PQ nearest-neighbor search under squared L2 distance.
//!
//! Every search returns squared Euclidean distances, sorted ascending with
//! ties broken by ascending id.

mod flat;
mod ivfpq;
mod kmeans;

use std::cmp::Ordering;

pub use flat::FlatIndex;
pub use ivfpq::{IvfPqConfig, IvfPqIndex, IvfPqParams, INDEX_MAGIC};
pub use kmeans::kmeans;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Hit {
    pub id: u64,
    pub distance: f32,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct SearchResult {
    pub hits: Vec<Hit>,
}

impl SearchResult {
    pub fn ids(&self) -> Vec<u64> {
        self.hits.iter().map(|h| h.id).collect()
    }

    pub fn len(&self) -> usize {
        self.hits.len()
    }

    pub fn is_empty(&self) -> bool {
        self.hits.is_empty()
    }
}

/// Search-time knobs for the approximate index; ignored by exact search.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SearchParams {
    /// Coarse cells to scan. `None` uses `max(1, nlist / 8)`.
    pub nprobe: Option<usize>,
    /// ADC candidates re-scored exactly. `None` uses 100 when originals are kept.
    pub rerank_depth: Option<usize>,
}

pub fn squared_l2(a: &[f32], b: &[f32]) -> f32 {
    a.iter()
        .zip(b)
        .map(|(x, y)| {
            let d = x - y;
            d * d
        })
        .sum()
}

pub(crate) fn hit_order(a: &Hit, b: &Hit) -> Ordering {
    a.distance.total_cmp(&b.distance).then(a.id.cmp(&b.id))
}

/// Keeps the `k` best hits in result order.
pub(crate) fn top_k(mut hits: Vec<Hit>, k: usize) -> SearchResult {
    if k == 0 {
        return SearchResult::default();
    }
    if hits.len() > k {
        hits.select_nth_unstable_by(k - 1, hit_order);
        hits.truncate(k);
    }
    hits.sort_unstable_by(hit_order);
    SearchResult { hits }
}

/// Index of the nearest centroid, ties going to the lowest index.
pub(crate) fn nearest_centroid(point: &[f32], centroids: &[f32], dim: usize) -> (usize, f32) {
    let mut best = (0, f32::INFINITY);
    for (c, centroid) in centroids.chunks_exact(dim).enumerate() {
        let d = squared_l2(point, centroid);
        if d < best.1 {
            best = (c, d);
        }
    }
    best
}

fn check_finite(v: &[f32]) -> crate::Result<()> {
    if v.iter().all(|x| x.is_finite()) {
        Ok(())
    } else {
        Err(crate::Error::NonFinite)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn top_k_orders_and_breaks_ties_by_id() {
        let hits = vec![
            Hit { id: 5, distance: 1.0 },
            Hit { id: 2, distance: 1.0 },
            Hit { id: 9, distance: 0.5 },
            Hit { id: 1, distance: 3.0 },
        ];
        let r = top_k(hits.clone(), 3);
        assert_eq!(r.ids(), [9, 2, 5]);
        assert_eq!(top_k(hits.clone(), 10).len(), 4);
        assert!(top_k(hits, 0).is_empty());
    }

    #[test]
    fn nearest_centroid_prefers_lowest_index_on_ties() {
        let centroids = [1.0, 0.0, -1.0, 0.0];
        assert_eq!(nearest_centroid(&[0.0, 0.0], &centroids, 2), (0, 1.0));
    }
}
