//! Exact Euclidean k-nearest-neighbor search.

use rayon::prelude::*;

use super::Matrix;
use crate::error::{Error, Result};

/// Rows of the query block processed against each streamed reference row.
const BLOCK: usize = 64;

/// For every point, its `k` nearest other points sorted by ascending
/// distance (ties by lower index).
#[derive(Clone, Debug, PartialEq)]
pub struct NeighborTable {
    k: usize,
    indices: Vec<usize>,
    distances: Vec<f64>,
    duplicate: Vec<bool>,
}

impl NeighborTable {
    pub fn k(&self) -> usize {
        self.k
    }

    pub fn len(&self) -> usize {
        self.duplicate.len()
    }

    pub fn is_empty(&self) -> bool {
        self.duplicate.is_empty()
    }

    pub fn indices(&self, i: usize) -> &[usize] {
        &self.indices[i * self.k..(i + 1) * self.k]
    }

    pub fn distances(&self, i: usize) -> &[f64] {
        &self.distances[i * self.k..(i + 1) * self.k]
    }

    /// True when point `i` has at least one neighbor at distance zero.
    pub fn has_duplicate(&self, i: usize) -> bool {
        self.duplicate[i]
    }
}

/// Squared Euclidean distance with a fixed four-lane accumulation order, so
/// the result depends only on the two rows (and is symmetric in them).
#[inline]
pub fn squared_distance(a: &[f64], b: &[f64]) -> f64 {
    debug_assert_eq!(a.len(), b.len());
    let mut acc = [0.0f64; 4];
    let chunks = a.len() / 4;
    for c in 0..chunks {
        let o = c * 4;
        for l in 0..4 {
            let d = a[o + l] - b[o + l];
            acc[l] += d * d;
        }
    }
    let mut tail = 0.0;
    for i in chunks * 4..a.len() {
        let d = a[i] - b[i];
        tail += d * d;
    }
    (acc[0] + acc[1]) + (acc[2] + acc[3]) + tail
}

pub fn euclidean(a: &[f64], b: &[f64]) -> f64 {
    squared_distance(a, b).sqrt()
}

pub fn knn(x: &Matrix, k: usize) -> Result<NeighborTable> {
    let n = x.rows();
    if k == 0 {
        return Err(Error::param("k", "must be at least 1"));
    }
    if k >= n {
        return Err(Error::param(
            "k",
            format!("needs k < number of points, got k={k} with {n} points"),
        ));
    }

    let blocks: Vec<(Vec<usize>, Vec<f64>)> = (0..n)
        .into_par_iter()
        .step_by(BLOCK)
        .map(|start| {
            let end = (start + BLOCK).min(n);
            let width = end - start;
            // Per query row: sorted (squared distance, index) candidates.
            let mut best: Vec<Vec<(f64, usize)>> = vec![Vec::with_capacity(k + 1); width];
            for j in 0..n {
                let rj = x.row(j);
                for (off, cand) in best.iter_mut().enumerate() {
                    let i = start + off;
                    if i == j {
                        continue;
                    }
                    let d = squared_distance(x.row(i), rj);
                    insert_candidate(cand, k, d, j);
                }
            }
            let mut idx = Vec::with_capacity(width * k);
            let mut dist = Vec::with_capacity(width * k);
            for cand in best {
                for (d, j) in cand {
                    idx.push(j);
                    dist.push(d.sqrt());
                }
            }
            (idx, dist)
        })
        .collect();

    let mut indices = Vec::with_capacity(n * k);
    let mut distances = Vec::with_capacity(n * k);
    for (idx, dist) in blocks {
        indices.extend(idx);
        distances.extend(dist);
    }
    let duplicate = distances.chunks_exact(k).map(|d| d[0] == 0.0).collect();
    Ok(NeighborTable {
        k,
        indices,
        distances,
        duplicate,
    })
}

/// Keeps `cand` as the `k` smallest `(d, j)` pairs; candidates arrive in
/// increasing `j`, so an equal distance never displaces an earlier index.
#[inline]
fn insert_candidate(cand: &mut Vec<(f64, usize)>, k: usize, d: f64, j: usize) {
    if cand.len() == k && d >= cand[k - 1].0 {
        return;
    }
    let pos = cand.partition_point(|&(cd, _)| cd <= d);
    cand.insert(pos, (d, j));
    cand.truncate(k);
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn line_example() {
        let x = Matrix::from_rows(&[[0.0], [1.0], [3.0]]).unwrap();
        let t = knn(&x, 2).unwrap();
        assert_eq!(t.indices(1), &[0, 2]);
        assert_eq!(t.distances(1), &[1.0, 2.0]);
        assert_eq!(t.indices(0), &[1, 2]);
        assert!(!t.has_duplicate(1));
    }

    #[test]
    fn duplicates_are_flagged() {
        let x = Matrix::from_rows(&[[0.0, 1.0], [0.0, 1.0], [5.0, 5.0]]).unwrap();
        let t = knn(&x, 1).unwrap();
        assert!(t.has_duplicate(0) && t.has_duplicate(1));
        assert_eq!(t.distances(0), &[0.0]);
        assert_eq!(t.indices(0), &[1]);
        assert!(!t.has_duplicate(2));
    }

    #[test]
    fn ties_prefer_lower_index() {
        let x = Matrix::from_rows(&[[0.0], [-1.0], [1.0], [2.0]]).unwrap();
        let t = knn(&x, 2).unwrap();
        assert_eq!(t.indices(0), &[1, 2]);
    }

    #[test]
    fn invalid_k() {
        let x = Matrix::from_rows(&[[0.0], [1.0]]).unwrap();
        assert!(knn(&x, 2).is_err());
        assert!(knn(&x, 0).is_err());
    }
}
