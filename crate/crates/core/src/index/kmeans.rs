use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

use super::nearest_centroid;
#[cfg(test)]
use super::squared_l2;

/// Lloyd's k-means over `points` (row-major, `dim` columns).
///
/// Centroids start at `k` distinct sampled points (points are reused when
/// there are fewer than `k`). An emptied cluster takes over the point that
/// lies farthest from its current centroid. Deterministic for a fixed seed.
pub fn kmeans(points: &[f32], dim: usize, k: usize, iters: usize, seed: u64) -> Vec<f32> {
    assert!(dim > 0 && k > 0, "dim and k must be positive");
    assert!(
        !points.is_empty() && points.len().is_multiple_of(dim),
        "bad point matrix"
    );
    let n = points.len() / dim;
    let row = |i: usize| &points[i * dim..(i + 1) * dim];
    let mut rng = ChaCha8Rng::seed_from_u64(seed);

    let mut init: Vec<usize> = if n >= k {
        sample(&mut rng, n, k).into_vec()
    } else {
        let mut idx: Vec<usize> = (0..n).collect();
        idx.extend((n..k).map(|_| rng.gen_range(0..n)));
        idx
    };
    init.sort_unstable();
    let mut centroids: Vec<f32> = init.iter().flat_map(|&i| row(i).iter().copied()).collect();

    let mut assign = vec![0usize; n];
    for _ in 0..iters {
        let assigned: Vec<(usize, f32)> = (0..n)
            .into_par_iter()
            .map(|i| nearest_centroid(row(i), &centroids, dim))
            .collect();
        let mut dists: Vec<f32> = Vec::with_capacity(n);
        for (i, (c, d)) in assigned.into_iter().enumerate() {
            assign[i] = c;
            dists.push(d);
        }

        let mut counts = vec![0usize; k];
        for &c in &assign {
            counts[c] += 1;
        }
        for empty in 0..k {
            if counts[empty] > 0 {
                continue;
            }
            // Steal the worst-fitting point from a cluster that can spare it.
            let donor = (0..n)
                .filter(|&i| counts[assign[i]] > 1)
                .max_by(|&a, &b| dists[a].total_cmp(&dists[b]).then(b.cmp(&a)));
            if let Some(i) = donor {
                counts[assign[i]] -= 1;
                assign[i] = empty;
                counts[empty] = 1;
                dists[i] = 0.0;
            }
        }

        let mut sums = vec![0f64; k * dim];
        for (i, &c) in assign.iter().enumerate() {
            for (s, &x) in sums[c * dim..(c + 1) * dim].iter_mut().zip(row(i)) {
                *s += f64::from(x);
            }
        }
        for c in 0..k {
            if counts[c] == 0 {
                continue;
            }
            let inv = counts[c] as f64;
            for (dst, s) in centroids[c * dim..(c + 1) * dim]
                .iter_mut()
                .zip(&sums[c * dim..(c + 1) * dim])
            {
                *dst = (s / inv) as f32;
            }
        }
    }
    centroids
}

/// Sum of squared distances from each point to its nearest centroid.
#[cfg(test)]
pub(crate) fn distortion(points: &[f32], centroids: &[f32], dim: usize) -> f32 {
    points
        .chunks_exact(dim)
        .map(|p| {
            centroids
                .chunks_exact(dim)
                .map(|c| squared_l2(p, c))
                .fold(f32::INFINITY, f32::min)
        })
        .sum()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn k_equals_n_covers_every_point() {
        let pts = [0.0, 0.0, 5.0, 1.0, -3.0, 2.0, 7.0, 7.0];
        let c = kmeans(&pts, 2, 4, 5, 3);
        assert_eq!(distortion(&pts, &c, 2), 0.0);
        let mut got: Vec<[u32; 2]> = c
            .chunks_exact(2)
            .map(|r| [r[0].to_bits(), r[1].to_bits()])
            .collect();
        let mut want: Vec<[u32; 2]> = pts
            .chunks_exact(2)
            .map(|r| [r[0].to_bits(), r[1].to_bits()])
            .collect();
        got.sort();
        want.sort();
        assert_eq!(got, want);
    }

    #[test]
    fn two_tight_clusters() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut pts = Vec::new();
        for center in [0.0f32, 10.0] {
            for _ in 0..50 {
                pts.push(center + rng.gen_range(-0.3..0.3));
                pts.push(center + rng.gen_range(-0.3..0.3));
            }
        }
        // Oracle: the mean of each generated cluster.
        let mean = |half: &[f32]| {
            let n = (half.len() / 2) as f32;
            let sx: f32 = half.iter().step_by(2).sum();
            let sy: f32 = half.iter().skip(1).step_by(2).sum();
            [sx / n, sy / n]
        };
        let means = [mean(&pts[..100]), mean(&pts[100..])];
        for seed in 0..10 {
            let c = kmeans(&pts, 2, 2, 10, seed);
            for m in &means {
                let closest = c
                    .chunks_exact(2)
                    .map(|r| squared_l2(r, m).sqrt())
                    .fold(f32::INFINITY, f32::min);
                assert!(closest < 0.5, "seed {seed}: {closest}");
            }
        }
    }

    #[test]
    fn deterministic_for_seed() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let pts: Vec<f32> = (0..300).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let a = kmeans(&pts, 3, 7, 8, 99);
        let b = kmeans(&pts, 3, 7, 8, 99);
        assert_eq!(
            a.iter().map(|x| x.to_bits()).collect::<Vec<_>>(),
            b.iter().map(|x| x.to_bits()).collect::<Vec<_>>()
        );
    }

    #[test]
    fn fewer_points_than_clusters() {
        let pts = [1.0, 2.0, 3.0];
        let c = kmeans(&pts, 1, 8, 4, 0);
        assert_eq!(c.len(), 8);
        assert_eq!(distortion(&pts, &c, 1), 0.0);
    }
}
