//! IsoScore: how uniformly variance is spread across the directions of an
//! embedding space (1 = isotropic, 0 = a single direction).

use serde::Serialize;

use crate::dataset::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::numerics::{covariance, sym_eigenvalues};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IsotropyReport {
    pub isoscore: f64,
    pub defect: f64,
    pub n_dims: usize,
    pub n_points: usize,
    /// Score before clamping to [0, 1].
    pub raw_isoscore: f64,
}

/// Distance of the normalized variance vector σ̂ = √n·σ/‖σ‖ from the
/// all-ones vector, scaled so one-hot variance gives exactly 1.
pub fn isotropy_defect(variances: &[f64], n: usize) -> Result<f64> {
    if n < 2 {
        return Err(Error::param("n", "need at least 2 dimensions"));
    }
    if variances.len() != n {
        return Err(Error::Contract(format!(
            "{} variances for {n} dimensions",
            variances.len()
        )));
    }
    if let Some(v) = variances.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
        return Err(Error::Contract(format!("variance {v} is negative or non-finite")));
    }
    let len: f64 = variances.iter().map(|v| v * v).sum::<f64>().sqrt();
    if len == 0.0 {
        return Err(Error::Degenerate("all variances are zero".into()));
    }
    let nf = n as f64;
    let root_n = nf.sqrt();
    let dist = variances
        .iter()
        .map(|v| {
            let d = root_n * v / len - 1.0;
            d * d
        })
        .sum::<f64>()
        .sqrt();
    Ok(dist / (2.0 * (nf - root_n)).sqrt())
}

/// Maps an isotropy defect to the score: the fraction of dimensions used,
/// φ = (n − δ²(n − √n))² / n², rescaled affinely so that φ = 1/n ↦ 0 and
/// φ = 1 ↦ 1.
pub fn isoscore_from_defect(defect: f64, n: usize) -> f64 {
    let nf = n as f64;
    let used = (nf - defect * defect * (nf - nf.sqrt())).powi(2) / (nf * nf);
    (nf * used - 1.0) / (nf - 1.0)
}

pub fn isoscore(x: &EmbeddingMatrix) -> Result<IsotropyReport> {
    let (n_points, n_dims) = (x.rows(), x.cols());
    if n_points <= n_dims {
        return Err(Error::Stability(format!(
            "IsoScore needs more points than dimensions ({n_points} points, {n_dims} dims); \
             subsample dimensions or add points"
        )));
    }
    if n_dims < 2 {
        return Err(Error::param("dim", "IsoScore needs at least 2 dimensions"));
    }
    let cov = covariance(&x.matrix)?;
    // Variances in the principal-component basis are the covariance
    // eigenvalues; rounding can leave tiny negatives.
    let spectrum: Vec<f64> = sym_eigenvalues(&cov)?
        .into_iter()
        .map(|v| v.max(0.0))
        .collect();
    let defect = isotropy_defect(&spectrum, n_dims)?;
    let raw = isoscore_from_defect(defect, n_dims);
    Ok(IsotropyReport {
        isoscore: raw.clamp(0.0, 1.0),
        defect: defect.clamp(0.0, 1.0),
        n_dims,
        n_points,
        raw_isoscore: raw,
    })
}
