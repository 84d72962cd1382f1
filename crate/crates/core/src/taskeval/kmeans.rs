//! Lloyd's k-means with k-means++ seeding and best-of-restarts selection.

use rayon::prelude::*;

use crate::error::{Error, Result};
use crate::numerics::{squared_distance, Matrix};
use crate::rng::Stream;

pub const DEFAULT_RESTARTS: usize = 10;
pub const MAX_ITERATIONS: usize = 300;

#[derive(Clone, Debug, PartialEq)]
pub struct KMeansResult {
    pub assignments: Vec<usize>,
    pub centroids: Matrix,
    /// Within-cluster sum of squared distances.
    pub inertia: f64,
    /// Index of the winning restart.
    pub restart: usize,
    pub iterations: usize,
    pub converged: bool,
    /// Inertia after every assignment step of the winning restart.
    pub inertia_trace: Vec<f64>,
}

pub fn kmeans(x: &Matrix, k: usize, seed: u64, restarts: usize) -> Result<KMeansResult> {
    if k < 2 {
        return Err(Error::param("k", "need at least 2 clusters"));
    }
    if k > x.rows() {
        return Err(Error::param(
            "k",
            format!("{k} clusters exceed the {} points", x.rows()),
        ));
    }
    if restarts == 0 {
        return Err(Error::param("restarts", "need at least 1 restart"));
    }
    let runs: Vec<KMeansResult> = (0..restarts)
        .into_par_iter()
        .map(|r| {
            let mut rng = Stream::new(seed, &format!("kmeans/restart/{r}"));
            let init = plus_plus_init(x, k, &mut rng);
            let mut run = lloyd(x, init);
            run.restart = r;
            run
        })
        .collect();
    // Lowest inertia wins; ties go to the earliest restart.
    let best = runs
        .into_iter()
        .reduce(|a, b| if b.inertia < a.inertia { b } else { a })
        .unwrap();
    Ok(best)
}

/// k-means++: first centre uniform, each further centre drawn with
/// probability proportional to its squared distance from the nearest centre
/// chosen so far.
fn plus_plus_init(x: &Matrix, k: usize, rng: &mut Stream) -> Vec<usize> {
    let n = x.rows();
    let mut chosen = vec![rng.below(n)];
    let mut d2: Vec<f64> = x
        .row_iter()
        .map(|r| squared_distance(r, x.row(chosen[0])))
        .collect();
    while chosen.len() < k {
        let total: f64 = d2.iter().sum();
        let next = if total > 0.0 {
            let target = rng.unit() * total;
            let mut acc = 0.0;
            let mut pick = None;
            for (i, &w) in d2.iter().enumerate() {
                acc += w;
                if w > 0.0 && acc > target {
                    pick = Some(i);
                    break;
                }
            }
            // Rounding can leave `target` past the final partial sum.
            pick.unwrap_or_else(|| d2.iter().rposition(|&w| w > 0.0).unwrap())
        } else {
            // Every point coincides with a centre: take the first unused row.
            (0..n).find(|i| !chosen.contains(i)).unwrap()
        };
        chosen.push(next);
        for (i, r) in x.row_iter().enumerate() {
            d2[i] = d2[i].min(squared_distance(r, x.row(next)));
        }
    }
    chosen
}

fn assign(x: &Matrix, centroids: &Matrix, out: &mut [usize]) -> f64 {
    let mut inertia = 0.0;
    for (i, r) in x.row_iter().enumerate() {
        let mut best = 0;
        let mut best_d = squared_distance(r, centroids.row(0));
        for c in 1..centroids.rows() {
            let d = squared_distance(r, centroids.row(c));
            if d < best_d {
                best = c;
                best_d = d;
            }
        }
        out[i] = best;
        inertia += best_d;
    }
    inertia
}

fn lloyd(x: &Matrix, init: Vec<usize>) -> KMeansResult {
    let k = init.len();
    let dim = x.cols();
    let mut centroids = x.select_rows(&init).expect("init rows are in range");
    let mut assignments = vec![usize::MAX; x.rows()];
    let mut next = vec![0; x.rows()];
    let mut trace = Vec::new();
    let mut converged = false;
    let mut iterations = 0;
    let mut inertia = f64::INFINITY;

    while iterations < MAX_ITERATIONS {
        inertia = assign(x, &centroids, &mut next);
        trace.push(inertia);
        iterations += 1;
        if next == assignments {
            converged = true;
            break;
        }
        std::mem::swap(&mut assignments, &mut next);

        let mut sums = vec![0.0; k * dim];
        let mut counts = vec![0usize; k];
        for (r, &c) in x.row_iter().zip(&assignments) {
            counts[c] += 1;
            for (s, &v) in sums[c * dim..(c + 1) * dim].iter_mut().zip(r) {
                *s += v;
            }
        }
        for c in 0..k {
            // An emptied cluster keeps its previous centre.
            if counts[c] > 0 {
                for j in 0..dim {
                    centroids.set(c, j, sums[c * dim + j] / counts[c] as f64);
                }
            }
        }
    }
    if !converged {
        // Report the assignment matching the final centroids.
        inertia = assign(x, &centroids, &mut assignments);
        trace.push(inertia);
    }
    KMeansResult {
        assignments,
        centroids,
        inertia,
        restart: 0,
        iterations,
        converged,
        inertia_trace: trace,
    }
}
