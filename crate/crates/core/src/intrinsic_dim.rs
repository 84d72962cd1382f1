//! TwoNN intrinsic-dimension estimation.
//!
//! For points sampled uniformly on a d-dimensional manifold, the ratio
//! μ = r₂/r₁ of each point's second- to first-nearest-neighbor distance is
//! Pareto distributed with CDF F(μ) = 1 − μ^(−d). Hence
//! −log(1 − F(μ)) = d·log μ, and d is the slope of a line through the origin
//! fitted to the empirical CDF.

use std::collections::HashSet;

use serde::Serialize;

use crate::dataset::EmbeddingMatrix;
use crate::error::{Error, Result};
use crate::numerics::{knn, Matrix};

pub const DEFAULT_DISCARD_FRACTION: f64 = 0.10;
pub const MIN_POINTS: usize = 12;
const MIN_USED: usize = 10;

#[derive(Clone, Debug, PartialEq)]
pub struct RatioSample {
    /// μᵢ = r₂ᵢ/r₁ᵢ ≥ 1, in point order.
    pub mu: Vec<f64>,
    /// Share of input rows that produced a ratio.
    pub kept_fraction: f64,
    /// Exact duplicate rows removed before the neighbor search.
    pub n_duplicates: usize,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct IdEstimate {
    pub id: f64,
    pub n_used: usize,
    pub discard_fraction: f64,
    /// Closed-form maximum-likelihood estimate n / Σ log μ over all ratios.
    pub mle: f64,
    pub n_duplicates: usize,
    /// Ambient dimension of the data, when known.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub ambient_dim: Option<usize>,
    /// Set when the estimate exceeds the ambient dimension.
    pub exceeds_ambient: bool,
}

/// Removes exact duplicate rows (first occurrence kept; `-0.0 == 0.0`).
fn unique_rows(x: &Matrix) -> (Vec<usize>, usize) {
    let mut seen = HashSet::with_capacity(x.rows());
    let mut keep = Vec::with_capacity(x.rows());
    for (i, r) in x.row_iter().enumerate() {
        let key: Vec<u64> = r.iter().map(|&v| (v + 0.0).to_bits()).collect();
        if seen.insert(key) {
            keep.push(i);
        }
    }
    let dropped = x.rows() - keep.len();
    (keep, dropped)
}

/// The r₂/r₁ kernel for a single point.
pub fn neighbor_ratio(r1: f64, r2: f64) -> Option<f64> {
    (r1 > 0.0).then(|| r2 / r1)
}

pub fn twonn_ratios(x: &EmbeddingMatrix) -> Result<RatioSample> {
    let m = &x.matrix;
    let (keep, n_duplicates) = unique_rows(m);
    if keep.len() < MIN_POINTS {
        return Err(Error::InsufficientData(format!(
            "TwoNN needs at least {MIN_POINTS} distinct points, got {} ({} duplicates dropped)",
            keep.len(),
            n_duplicates
        )));
    }
    let unique;
    let data = if n_duplicates == 0 {
        m
    } else {
        unique = m.select_rows(&keep)?;
        &unique
    };
    let table = knn(data, 2)?;
    let mu: Vec<f64> = (0..table.len())
        .filter_map(|i| {
            let d = table.distances(i);
            neighbor_ratio(d[0], d[1])
        })
        .collect();
    Ok(RatioSample {
        kept_fraction: mu.len() as f64 / m.rows() as f64,
        mu,
        n_duplicates,
    })
}

/// Least-squares slope through the origin of −log(1 − Fᵢ) on log μᵢ, with
/// Fᵢ = i/N over the ascending ratios and the top `discard_fraction` of
/// ratios (always including the last, where F = 1) left out.
pub fn twonn_fit(sample: &RatioSample, discard_fraction: f64) -> Result<IdEstimate> {
    if !(0.0..0.5).contains(&discard_fraction) {
        return Err(Error::param(
            "discard_fraction",
            format!("must lie in [0, 0.5), got {discard_fraction}"),
        ));
    }
    let n = sample.mu.len();
    if let Some(bad) = sample.mu.iter().find(|m| !(m.is_finite() && **m >= 1.0)) {
        return Err(Error::Contract(format!("ratio {bad} is not a finite value >= 1")));
    }
    let mut mu = sample.mu.clone();
    mu.sort_by(f64::total_cmp);

    let kept = (((n as f64) * (1.0 - discard_fraction)).floor() as usize).min(n.saturating_sub(1));
    if kept < MIN_USED {
        return Err(Error::InsufficientData(format!(
            "only {kept} ratios remain after trimming, need {MIN_USED}"
        )));
    }
    let nf = n as f64;
    let (mut sxy, mut sxx) = (0.0, 0.0);
    for (i, &m) in mu[..kept].iter().enumerate() {
        let f = (i + 1) as f64 / nf;
        let x = m.ln();
        let y = -(1.0 - f).ln();
        sxy += x * y;
        sxx += x * x;
    }
    let log_sum: f64 = mu.iter().map(|m| m.ln()).sum();
    if sxx == 0.0 || log_sum == 0.0 {
        return Err(Error::NonIdentifiable(
            "all neighbor-distance ratios equal 1 (degenerate grid)".into(),
        ));
    }
    Ok(IdEstimate {
        id: sxy / sxx,
        n_used: kept,
        discard_fraction,
        mle: nf / log_sum,
        n_duplicates: sample.n_duplicates,
        ambient_dim: None,
        exceeds_ambient: false,
    })
}

/// Ratios plus fit, with the ambient-dimension check filled in.
pub fn twonn(x: &EmbeddingMatrix, discard_fraction: f64) -> Result<IdEstimate> {
    let sample = twonn_ratios(x)?;
    let mut est = twonn_fit(&sample, discard_fraction)?;
    est.ambient_dim = Some(x.cols());
    est.exceeds_ambient = est.id > x.cols() as f64;
    Ok(est)
}
