//! Symmetric eigendecomposition by cyclic Jacobi rotations.

use super::Matrix;
use crate::error::{Error, Result};

const SYMMETRY_TOL: f64 = 1e-9;
const CONVERGENCE_TOL: f64 = 1e-12;
const MAX_SWEEPS: usize = 100;

/// Eigenvalues sorted non-increasing; column `i` of `vectors` pairs with
/// `values[i]`.
#[derive(Clone, Debug)]
pub struct EigenResult {
    pub values: Vec<f64>,
    pub vectors: Matrix,
}

impl EigenResult {
    /// Column `i` of the eigenvector matrix.
    pub fn vector(&self, i: usize) -> Vec<f64> {
        self.vectors.column(i)
    }
}

pub fn sym_eigen(m: &Matrix) -> Result<EigenResult> {
    let n = m.rows();
    let mut a = symmetric_copy(m)?;
    let mut v = Matrix::identity(n).into_vec();
    jacobi(&mut a, n, Some(&mut v), m.frobenius_norm())?;

    let order = descending_order(&a, n);
    let values: Vec<f64> = order.iter().map(|&i| a[i * n + i]).collect();
    let mut vectors = Matrix::zeros(n, n);
    for (col, &src) in order.iter().enumerate() {
        // Sign convention: the largest-magnitude entry (first on ties) is positive.
        let mut pivot = 0;
        for r in 1..n {
            if v[r * n + src].abs() > v[pivot * n + src].abs() {
                pivot = r;
            }
        }
        let sign = if v[pivot * n + src] < 0.0 { -1.0 } else { 1.0 };
        for r in 0..n {
            vectors.set(r, col, sign * v[r * n + src]);
        }
    }
    Ok(EigenResult { values, vectors })
}

/// Eigenvalues only, sorted non-increasing. Skips eigenvector accumulation.
pub fn sym_eigenvalues(m: &Matrix) -> Result<Vec<f64>> {
    let n = m.rows();
    let mut a = symmetric_copy(m)?;
    jacobi(&mut a, n, None, m.frobenius_norm())?;
    Ok(descending_order(&a, n)
        .into_iter()
        .map(|i| a[i * n + i])
        .collect())
}

fn symmetric_copy(m: &Matrix) -> Result<Vec<f64>> {
    if !m.is_square() {
        return Err(Error::Contract(format!(
            "eigendecomposition needs a square matrix, got {}x{}",
            m.rows(),
            m.cols()
        )));
    }
    let n = m.rows();
    let scale = m.max_abs().max(1.0);
    let mut a = m.as_slice().to_vec();
    for i in 0..n {
        for j in (i + 1)..n {
            let (x, y) = (m.get(i, j), m.get(j, i));
            if (x - y).abs() > SYMMETRY_TOL * scale {
                return Err(Error::Contract(format!(
                    "matrix is not symmetric: entry ({i},{j})={x} vs ({j},{i})={y}"
                )));
            }
            let avg = 0.5 * (x + y);
            a[i * n + j] = avg;
            a[j * n + i] = avg;
        }
    }
    Ok(a)
}

fn descending_order(a: &[f64], n: usize) -> Vec<usize> {
    let mut order: Vec<usize> = (0..n).collect();
    order.sort_by(|&i, &j| a[j * n + j].total_cmp(&a[i * n + i]).then(i.cmp(&j)));
    order
}

fn off_diagonal_norm(a: &[f64], n: usize) -> f64 {
    let mut s = 0.0;
    for i in 0..n {
        for j in (i + 1)..n {
            s += a[i * n + j] * a[i * n + j];
        }
    }
    (2.0 * s).sqrt()
}

/// In-place cyclic Jacobi on the full symmetric `a` (row-major, n×n). On
/// return the diagonal holds the eigenvalues and `v`, when given, holds the
/// eigenvectors as columns.
fn jacobi(a: &mut [f64], n: usize, mut v: Option<&mut Vec<f64>>, norm: f64) -> Result<()> {
    let target = CONVERGENCE_TOL * norm;
    for _sweep in 0..MAX_SWEEPS {
        if off_diagonal_norm(a, n) <= target {
            return Ok(());
        }
        for p in 0..n {
            for q in (p + 1)..n {
                let apq = a[p * n + q];
                if apq == 0.0 {
                    continue;
                }
                let app = a[p * n + p];
                let aqq = a[q * n + q];
                let theta = (aqq - app) / (2.0 * apq);
                let t = if theta.is_finite() {
                    let t = 1.0 / (theta.abs() + (theta * theta + 1.0).sqrt());
                    if theta < 0.0 {
                        -t
                    } else {
                        t
                    }
                } else {
                    // |theta| overflowed: the rotation angle is ~apq/(aqq-app).
                    apq / (aqq - app)
                };
                let c = 1.0 / (t * t + 1.0).sqrt();
                let s = t * c;
                let tau = s / (1.0 + c);

                a[p * n + p] = app - t * apq;
                a[q * n + q] = aqq + t * apq;
                a[p * n + q] = 0.0;
                a[q * n + p] = 0.0;
                for k in 0..n {
                    if k == p || k == q {
                        continue;
                    }
                    let g = a[k * n + p];
                    let h = a[k * n + q];
                    let kp = g - s * (h + g * tau);
                    let kq = h + s * (g - h * tau);
                    a[k * n + p] = kp;
                    a[p * n + k] = kp;
                    a[k * n + q] = kq;
                    a[q * n + k] = kq;
                }
                if let Some(v) = v.as_deref_mut() {
                    for k in 0..n {
                        let g = v[k * n + p];
                        let h = v[k * n + q];
                        v[k * n + p] = g - s * (h + g * tau);
                        v[k * n + q] = h + s * (g - h * tau);
                    }
                }
            }
        }
    }
    if off_diagonal_norm(a, n) <= target {
        Ok(())
    } else {
        Err(Error::Numerical(format!(
            "Jacobi eigensolver did not converge in {MAX_SWEEPS} sweeps"
        )))
    }
}
