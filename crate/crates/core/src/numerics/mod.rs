//! Dense linear algebra and neighbor-search kernels shared by every module.

mod eigen;
mod knn;
mod matrix;

pub use eigen::{sym_eigen, sym_eigenvalues, EigenResult};
pub use knn::{euclidean, knn, squared_distance, NeighborTable};
pub use matrix::Matrix;

use crate::error::{Error, Result};

/// Sample covariance (divisor N−1) of the column-centered matrix.
pub fn covariance(x: &Matrix) -> Result<Matrix> {
    let n = x.rows();
    if n < 2 {
        return Err(Error::Degenerate(format!(
            "covariance needs at least 2 rows, got {n}"
        )));
    }
    let d = x.cols();
    let mean = x.column_means();
    let mut acc = vec![0.0; d * d];
    let mut centered = vec![0.0; d];
    for r in x.row_iter() {
        for ((c, &v), &m) in centered.iter_mut().zip(r).zip(&mean) {
            *c = v - m;
        }
        for a in 0..d {
            let ca = centered[a];
            if ca == 0.0 {
                continue;
            }
            let dst = &mut acc[a * d + a..(a + 1) * d];
            for (o, &cb) in dst.iter_mut().zip(&centered[a..]) {
                *o += ca * cb;
            }
        }
    }
    let denom = (n - 1) as f64;
    let mut cov = Matrix::zeros(d, d);
    for a in 0..d {
        for b in a..d {
            let v = acc[a * d + b] / denom;
            cov.set(a, b, v);
            cov.set(b, a, v);
        }
    }
    Ok(cov)
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// Cosine of the angle between `a` and `b`, clamped to [−1, 1].
pub fn cosine_similarity(a: &[f64], b: &[f64]) -> Result<f64> {
    if a.len() != b.len() {
        return Err(Error::Contract(format!(
            "cosine of vectors with lengths {} and {}",
            a.len(),
            b.len()
        )));
    }
    let (na2, nb2) = (dot(a, a), dot(b, b));
    if na2 == 0.0 || nb2 == 0.0 {
        return Err(Error::Degenerate("cosine similarity of a zero-norm vector".into()));
    }
    // sqrt(fl(x*x)) == |x|, so identical inputs give exactly 1.
    Ok((dot(a, b) / (na2 * nb2).sqrt()).clamp(-1.0, 1.0))
}

/// Orthonormal basis for the column space of `g` (rows ≥ cols), i.e. the Q
/// factor of a QR decomposition whose R has a positive diagonal. Uses
/// modified Gram–Schmidt with one re-orthogonalization pass.
pub fn orthonormalize_columns(g: &Matrix) -> Result<Matrix> {
    let (n, m) = (g.rows(), g.cols());
    if m > n {
        return Err(Error::Contract(format!(
            "cannot orthonormalize {m} columns in {n} dimensions"
        )));
    }
    let mut cols: Vec<Vec<f64>> = (0..m).map(|j| g.column(j)).collect();
    for j in 0..m {
        let (done, rest) = cols.split_at_mut(j);
        let v = &mut rest[0];
        for _pass in 0..2 {
            for q in done.iter() {
                let r = dot(q, v);
                for (vi, qi) in v.iter_mut().zip(q) {
                    *vi -= r * qi;
                }
            }
        }
        let nv = norm(v);
        if nv <= 1e-12 {
            return Err(Error::Degenerate(format!("column {j} is linearly dependent")));
        }
        v.iter_mut().for_each(|x| *x /= nv);
    }
    Ok(Matrix::from_fn(n, m, |i, j| cols[j][i]))
}
