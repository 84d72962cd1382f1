//! Post-hoc dimensionality reduction: first-d truncation, random coordinate
//! subsets, PCA, and Isomap, behind one fit/apply interface.
//!
//! Embeddings are never re-normalized; column-selection methods copy values
//! unchanged.

use std::cmp::Ordering;
use std::collections::BinaryHeap;
use std::fmt;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{EmbeddingMatrix, TaskBundle};
use crate::error::{Error, Result};
use crate::numerics::{covariance, knn, sym_eigen, Matrix};
use crate::rng::Stream;

pub const DEFAULT_ISOMAP_NEIGHBORS: usize = 15;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReducerKind {
    First,
    Random,
    Pca,
    Isomap,
}

impl ReducerKind {
    pub fn as_str(self) -> &'static str {
        match self {
            ReducerKind::First => "first",
            ReducerKind::Random => "random",
            ReducerKind::Pca => "pca",
            ReducerKind::Isomap => "isomap",
        }
    }
}

impl fmt::Display for ReducerKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ReducerKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "first" => Ok(ReducerKind::First),
            "random" => Ok(ReducerKind::Random),
            "pca" => Ok(ReducerKind::Pca),
            "isomap" => Ok(ReducerKind::Isomap),
            "umap" | "tsne" | "t-sne" => Err(Error::param(
                "method",
                format!("`{s}` is not supported (excluded reduction method)"),
            )),
            _ => Err(Error::param("method", format!("unknown reduction method `{s}`"))),
        }
    }
}

/// A configured reduction. `seed` and `task_id` matter only for `random`;
/// `n_neighbors` only for `isomap`.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Reducer {
    pub kind: ReducerKind,
    pub target_dim: usize,
    pub seed: u64,
    pub task_id: String,
    pub n_neighbors: usize,
}

impl Reducer {
    pub fn new(kind: ReducerKind, target_dim: usize) -> Self {
        Self {
            kind,
            target_dim,
            seed: 0,
            task_id: String::new(),
            n_neighbors: DEFAULT_ISOMAP_NEIGHBORS,
        }
    }

    pub fn first(target_dim: usize) -> Self {
        Self::new(ReducerKind::First, target_dim)
    }

    pub fn random(target_dim: usize, seed: u64, task_id: impl Into<String>) -> Self {
        Self {
            seed,
            task_id: task_id.into(),
            ..Self::new(ReducerKind::Random, target_dim)
        }
    }

    pub fn pca(target_dim: usize) -> Self {
        Self::new(ReducerKind::Pca, target_dim)
    }

    pub fn isomap(target_dim: usize, n_neighbors: usize) -> Self {
        Self {
            n_neighbors,
            ..Self::new(ReducerKind::Isomap, target_dim)
        }
    }

    fn validate(&self, source_dim: usize) -> Result<()> {
        if self.target_dim == 0 {
            return Err(Error::param("dim", "target dimension must be at least 1"));
        }
        if self.target_dim > source_dim {
            return Err(Error::param(
                "dim",
                format!(
                    "target dimension {} exceeds source dimension {source_dim}",
                    self.target_dim
                ),
            ));
        }
        if self.kind == ReducerKind::Isomap && self.n_neighbors < 2 {
            return Err(Error::param("neighbors", "isomap needs at least 2 neighbors"));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq)]
enum Model {
    Columns(Vec<usize>),
    Pca { mean: Vec<f64>, basis: Matrix },
    Isomap { training: Matrix, coords: Matrix },
}

#[derive(Clone, Debug, PartialEq)]
pub struct FittedReducer {
    kind: ReducerKind,
    source_dim: usize,
    model: Model,
}

/// Column order used by the random method: a seeded permutation of `0..dim`.
/// Any target dimension takes a prefix, so smaller subsets nest in larger
/// ones.
pub fn random_column_order(dim: usize, seed: u64, task_id: &str) -> Vec<usize> {
    Stream::new(seed, &format!("reducers/random/{task_id}")).permutation(dim)
}

pub fn fit(r: &Reducer, x: &EmbeddingMatrix) -> Result<FittedReducer> {
    let source_dim = x.cols();
    r.validate(source_dim)?;
    let d = r.target_dim;
    let model = match r.kind {
        ReducerKind::First => Model::Columns((0..d).collect()),
        ReducerKind::Random => {
            let mut order = random_column_order(source_dim, r.seed, &r.task_id);
            order.truncate(d);
            Model::Columns(order)
        }
        ReducerKind::Pca => {
            let cov = covariance(&x.matrix)?;
            let eig = sym_eigen(&cov)?;
            let all: Vec<usize> = (0..d).collect();
            Model::Pca {
                mean: x.matrix.column_means(),
                basis: eig.vectors.select_columns(&all)?,
            }
        }
        ReducerKind::Isomap => {
            if d > x.rows() {
                return Err(Error::param(
                    "dim",
                    format!("isomap target {d} exceeds the {} training points", x.rows()),
                ));
            }
            let geo = geodesic_distances(&x.matrix, r.n_neighbors)?;
            Model::Isomap {
                training: x.matrix.clone(),
                coords: classical_mds(&geo, d)?,
            }
        }
    };
    Ok(FittedReducer {
        kind: r.kind,
        source_dim,
        model,
    })
}

impl FittedReducer {
    pub fn kind(&self) -> ReducerKind {
        self.kind
    }

    pub fn source_dim(&self) -> usize {
        self.source_dim
    }

    pub fn target_dim(&self) -> usize {
        match &self.model {
            Model::Columns(idx) => idx.len(),
            Model::Pca { basis, .. } => basis.cols(),
            Model::Isomap { coords, .. } => coords.cols(),
        }
    }

    /// Selected source columns, for the column-selection methods.
    pub fn column_indices(&self) -> Option<&[usize]> {
        match &self.model {
            Model::Columns(idx) => Some(idx),
            _ => None,
        }
    }

    /// Projection basis (source_dim × target_dim) and centering mean, for PCA.
    pub fn pca_parts(&self) -> Option<(&[f64], &Matrix)> {
        match &self.model {
            Model::Pca { mean, basis } => Some((mean, basis)),
            _ => None,
        }
    }

    /// The same fit restricted to its leading `d` output dimensions. Equal,
    /// bitwise, to fitting with target `d` directly.
    pub fn truncate(&self, d: usize) -> Result<FittedReducer> {
        if d == 0 || d > self.target_dim() {
            return Err(Error::param(
                "dim",
                format!("cannot truncate a {}-dim fit to {d}", self.target_dim()),
            ));
        }
        let prefix: Vec<usize> = (0..d).collect();
        let model = match &self.model {
            Model::Columns(idx) => Model::Columns(idx[..d].to_vec()),
            Model::Pca { mean, basis } => Model::Pca {
                mean: mean.clone(),
                basis: basis.select_columns(&prefix)?,
            },
            Model::Isomap { training, coords } => Model::Isomap {
                training: training.clone(),
                coords: coords.select_columns(&prefix)?,
            },
        };
        Ok(FittedReducer {
            kind: self.kind,
            source_dim: self.source_dim,
            model,
        })
    }

    pub fn apply(&self, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
        if x.cols() != self.source_dim {
            return Err(Error::Contract(format!(
                "reducer was fit on {} columns, input has {}",
                self.source_dim,
                x.cols()
            )));
        }
        let out = match &self.model {
            Model::Columns(idx) => x.matrix.select_columns(idx)?,
            Model::Pca { mean, basis } => {
                let centered = Matrix::from_fn(x.rows(), x.cols(), |i, j| x.matrix.get(i, j) - mean[j]);
                centered.matmul(basis)?
            }
            Model::Isomap { training, coords } => {
                if &x.matrix != training {
                    return Err(Error::Unsupported(
                        "isomap has no out-of-sample extension; apply it to the fit-time matrix".into(),
                    ));
                }
                coords.clone()
            }
        };
        Ok(x.replace_matrix(out))
    }
}

pub fn fit_apply(r: &Reducer, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    fit(r, x)?.apply(x)
}

/// Fits once on the row-concatenation of every matrix in the bundle and
/// applies that single transform to each, so all matrices share one basis.
pub fn fit_bundle(r: &Reducer, bundle: &TaskBundle) -> Result<(FittedReducer, EmbeddingMatrix)> {
    let parts = bundle.matrices();
    let stacked: Vec<&Matrix> = parts.iter().map(|m| &m.matrix).collect();
    let all = parts[0].replace_matrix(Matrix::vstack(&stacked)?);
    Ok((fit(r, &all)?, all))
}

/// Applies a fit produced by [`fit_bundle`] (possibly truncated) to the
/// bundle's stacked matrix and splits the result back into a bundle.
pub fn apply_bundle(
    fitted: &FittedReducer,
    stacked: &EmbeddingMatrix,
    bundle: &TaskBundle,
) -> Result<TaskBundle> {
    let reduced = fitted.apply(stacked)?;
    let mut out = Vec::new();
    let mut start = 0;
    for m in bundle.matrices() {
        let end = start + m.rows();
        out.push(m.replace_matrix(reduced.matrix.row_range(start, end)?));
        start = end;
    }
    bundle.with_matrices(out)
}

pub fn reduce_bundle(r: &Reducer, bundle: &TaskBundle) -> Result<TaskBundle> {
    let (fitted, stacked) = fit_bundle(r, bundle)?;
    apply_bundle(&fitted, &stacked, bundle)
}

#[derive(Clone, Copy, PartialEq)]
struct HeapItem(f64, usize);

impl Eq for HeapItem {}

impl Ord for HeapItem {
    fn cmp(&self, other: &Self) -> Ordering {
        // Min-heap on distance, then on node index.
        other.0.total_cmp(&self.0).then(other.1.cmp(&self.1))
    }
}

impl PartialOrd for HeapItem {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

/// Shortest-path distances over the symmetrized k-NN graph (an edge joins
/// i and j when either is among the other's k nearest neighbors).
pub fn geodesic_distances(x: &Matrix, n_neighbors: usize) -> Result<Matrix> {
    let n = x.rows();
    if n_neighbors < 2 {
        return Err(Error::param("neighbors", "isomap needs at least 2 neighbors"));
    }
    if n_neighbors >= n {
        return Err(Error::param(
            "neighbors",
            format!("{n_neighbors} neighbors need more than {n} points"),
        ));
    }
    let table = knn(x, n_neighbors)?;
    let mut adj: Vec<Vec<(usize, f64)>> = vec![Vec::new(); n];
    for i in 0..n {
        for (&j, &d) in table.indices(i).iter().zip(table.distances(i)) {
            adj[i].push((j, d));
            adj[j].push((i, d));
        }
    }
    for list in &mut adj {
        list.sort_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)));
        list.dedup_by_key(|e| e.0);
    }

    let components = count_components(&adj);
    if components > 1 {
        return Err(Error::Disconnected { components });
    }

    let rows: Vec<Vec<f64>> = (0..n)
        .into_par_iter()
        .map(|s| dijkstra(&adj, s))
        .collect();
    let mut g = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            // Both directions are valid path lengths; they differ only by
            // summation order.
            let v = rows[i][j].min(rows[j][i]);
            g.set(i, j, v);
            g.set(j, i, v);
        }
    }
    Ok(g)
}

fn dijkstra(adj: &[Vec<(usize, f64)>], source: usize) -> Vec<f64> {
    let mut dist = vec![f64::INFINITY; adj.len()];
    let mut heap = BinaryHeap::new();
    dist[source] = 0.0;
    heap.push(HeapItem(0.0, source));
    while let Some(HeapItem(d, u)) = heap.pop() {
        if d > dist[u] {
            continue;
        }
        for &(v, w) in &adj[u] {
            let nd = d + w;
            if nd < dist[v] {
                dist[v] = nd;
                heap.push(HeapItem(nd, v));
            }
        }
    }
    dist
}

fn count_components(adj: &[Vec<(usize, f64)>]) -> usize {
    let mut seen = vec![false; adj.len()];
    let mut components = 0;
    let mut stack = Vec::new();
    for s in 0..adj.len() {
        if seen[s] {
            continue;
        }
        components += 1;
        seen[s] = true;
        stack.push(s);
        while let Some(u) = stack.pop() {
            for &(v, _) in &adj[u] {
                if !seen[v] {
                    seen[v] = true;
                    stack.push(v);
                }
            }
        }
    }
    components
}

/// Classical MDS: eigendecompose B = −½·J·D²·J and scale the top `d`
/// eigenvectors by √λ (negative eigenvalues clamped to zero).
pub fn classical_mds(distances: &Matrix, d: usize) -> Result<Matrix> {
    let n = distances.rows();
    if !distances.is_square() {
        return Err(Error::Contract("distance matrix must be square".into()));
    }
    if d == 0 || d > n {
        return Err(Error::param("dim", format!("MDS target {d} outside 1..={n}")));
    }
    let sq = distances.map(|v| v * v);
    let row_means: Vec<f64> = sq.row_iter().map(|r| r.iter().sum::<f64>() / n as f64).collect();
    let grand = row_means.iter().sum::<f64>() / n as f64;
    let mut b = Matrix::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let v = -0.5 * (sq.get(i, j) - row_means[i] - row_means[j] + grand);
            b.set(i, j, v);
            b.set(j, i, v);
        }
    }
    let eig = sym_eigen(&b)?;
    let scale: Vec<f64> = eig.values[..d].iter().map(|l| l.max(0.0).sqrt()).collect();
    Ok(Matrix::from_fn(n, d, |i, c| eig.vectors.get(i, c) * scale[c]))
}
