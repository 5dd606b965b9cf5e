use nalgebra::Vector3;
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::graph::{geodesic_matrix, knn_graph};
use crate::error::{Error, Result};

/// A random subset of samples with its dense graph-geodesic matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct GeodesicBin {
    /// Sample indices into the full dataset.
    pub indices: Vec<usize>,
    /// Row-major `n × n`.
    pub matrix: Vec<f64>,
    pub m: usize,
    pub seed: u64,
}

impl GeodesicBin {
    pub fn build(indices: Vec<usize>, points: &[Vector3<f64>], m: usize, seed: u64) -> Result<Self> {
        let pts: Vec<Vector3<f64>> = indices.iter().map(|&i| points[i]).collect();
        let graph = knn_graph(&pts, m)?;
        let matrix = geodesic_matrix(&graph)?;
        Ok(Self {
            indices,
            matrix,
            m,
            seed,
        })
    }

    pub fn len(&self) -> usize {
        self.indices.len()
    }

    pub fn is_empty(&self) -> bool {
        self.indices.is_empty()
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.matrix[i * self.len() + j]
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SiamesePair {
    pub bin: usize,
    /// Dataset sample indices.
    pub a: usize,
    pub b: usize,
    pub target: f64,
}

/// Random partition into `floor(N / bin_size)` equal bins; the remainder is
/// dropped. Each bin gets its own M-NN geodesic matrix.
pub fn bin_split(
    points: &[Vector3<f64>],
    bin_size: usize,
    m: usize,
    seed: u64,
) -> Result<Vec<GeodesicBin>> {
    if bin_size < 2 || points.len() < bin_size {
        return Err(Error::InvalidArgument(format!(
            "cannot split {} samples into bins of {bin_size}",
            points.len()
        )));
    }
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    order
        .chunks_exact(bin_size)
        .map(|chunk| GeodesicBin::build(chunk.to_vec(), points, m, seed))
        .collect()
}

/// Picks a bin uniformly, then an unordered pair within it uniformly.
pub fn sample_siamese_pairs<R: Rng + ?Sized>(
    bins: &[GeodesicBin],
    batch_size: usize,
    rng: &mut R,
) -> Vec<SiamesePair> {
    assert!(!bins.is_empty(), "no geodesic bins");
    (0..batch_size)
        .map(|_| {
            let bin = rng.random_range(0..bins.len());
            let b = &bins[bin];
            let n = b.len();
            let i = rng.random_range(0..n);
            let mut j = rng.random_range(0..n - 1);
            if j >= i {
                j += 1;
            }
            let (i, j) = (i.min(j), i.max(j));
            SiamesePair {
                bin,
                a: b.indices[i],
                b: b.indices[j],
                target: b.get(i, j),
            }
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn grid(n: usize) -> Vec<Vector3<f64>> {
        (0..n)
            .map(|i| Vector3::new((i % 10) as f64 * 0.001, (i / 10) as f64 * 0.001, 0.0))
            .collect()
    }

    #[test]
    fn split_counts_and_determinism() {
        let pts = grid(100);
        let bins = bin_split(&pts, 40, 6, 9).unwrap();
        assert_eq!(bins.len(), 2);
        assert!(bins.iter().all(|b| b.len() == 40));
        let again = bin_split(&pts, 40, 6, 9).unwrap();
        assert_eq!(bins, again);
        let mut seen: Vec<usize> = bins.iter().flat_map(|b| b.indices.clone()).collect();
        seen.sort_unstable();
        seen.dedup();
        assert_eq!(seen.len(), 80);
    }

    #[test]
    fn exact_division() {
        let pts = grid(4620);
        // Only count bins; matrices here would be needlessly large.
        let n = pts.len() / 2310;
        assert_eq!(n, 2);
        assert!(bin_split(&grid(10), 11, 2, 0).is_err());
    }

    #[test]
    fn pairs_are_intra_bin_and_match_lookups() {
        let pts = grid(90);
        let bins = bin_split(&pts, 30, 6, 1).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for p in sample_siamese_pairs(&bins, 128, &mut rng) {
            let b = &bins[p.bin];
            let i = b.indices.iter().position(|&x| x == p.a).unwrap();
            let j = b.indices.iter().position(|&x| x == p.b).unwrap();
            assert_ne!(p.a, p.b);
            assert_eq!(p.target, b.get(i, j));
        }
    }

    #[test]
    fn two_sample_bin_forces_the_pair() {
        let pts = vec![Vector3::new(0.0, 0.0, 0.0), Vector3::new(1.0, 0.0, 0.0)];
        let bins = bin_split(&pts, 2, 1, 0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        for p in sample_siamese_pairs(&bins, 50, &mut rng) {
            let mut ab = [p.a, p.b];
            ab.sort_unstable();
            assert_eq!(ab, [0, 1]);
            assert_eq!(p.target, 1.0);
        }
    }
}
