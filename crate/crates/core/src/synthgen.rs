//! Seeded synthetic data with analytic ground truth.
//!
//! Every generator is a pure function of its arguments: the same spec yields
//! bitwise-identical output.

use serde::{Deserialize, Serialize};

use crate::dataset::{
    ClassificationBundle, ClusteringBundle, EmbeddingMatrix, PromptType, Qrel, RetrievalBundle,
    StsBundle, StsPair,
};
use crate::error::{Error, Result};
use crate::numerics::{cosine_similarity, norm, orthonormalize_columns, Matrix};
use crate::rng::Stream;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum SynthSpec {
    UniformManifold {
        intrinsic_dim: usize,
        ambient_dim: usize,
        n: usize,
        seed: u64,
    },
    GaussianSpectrum {
        spectrum: Vec<f64>,
        n: usize,
        seed: u64,
    },
    LabeledBlobs {
        classes: usize,
        ambient_dim: usize,
        per_class: usize,
        separation: f64,
        seed: u64,
        /// Class means live in the first `signal_dims` coordinates; the
        /// default spreads them over all of them.
        #[serde(default, skip_serializing_if = "Option::is_none")]
        signal_dims: Option<usize>,
    },
    RetrievalPlanted {
        queries: usize,
        passages: usize,
        ambient_dim: usize,
        noise: f64,
        seed: u64,
    },
    StsPlanted {
        pairs: usize,
        ambient_dim: usize,
        noise: f64,
        seed: u64,
    },
}

#[derive(Clone, Debug, PartialEq)]
pub enum SynthOutput {
    Matrix(EmbeddingMatrix),
    Blobs {
        classification: ClassificationBundle,
        clustering: ClusteringBundle,
    },
    Retrieval(RetrievalBundle),
    Sts(StsBundle),
}

pub fn generate(spec: &SynthSpec) -> Result<SynthOutput> {
    Ok(match *spec {
        SynthSpec::UniformManifold {
            intrinsic_dim,
            ambient_dim,
            n,
            seed,
        } => SynthOutput::Matrix(gen_uniform_manifold(intrinsic_dim, ambient_dim, n, seed)?),
        SynthSpec::GaussianSpectrum {
            ref spectrum,
            n,
            seed,
        } => SynthOutput::Matrix(gen_gaussian_spectrum(spectrum, n, seed)?),
        SynthSpec::LabeledBlobs {
            classes,
            ambient_dim,
            per_class,
            separation,
            seed,
            signal_dims,
        } => {
            let (classification, clustering) = gen_labeled_blobs(&BlobSpec {
                classes,
                ambient_dim,
                per_class,
                separation,
                seed,
                signal_dims,
            })?;
            SynthOutput::Blobs {
                classification,
                clustering,
            }
        }
        SynthSpec::RetrievalPlanted {
            queries,
            passages,
            ambient_dim,
            noise,
            seed,
        } => SynthOutput::Retrieval(gen_retrieval_planted(
            queries,
            passages,
            ambient_dim,
            noise,
            seed,
        )?),
        SynthSpec::StsPlanted {
            pairs,
            ambient_dim,
            noise,
            seed,
        } => SynthOutput::Sts(gen_sts_planted(pairs, ambient_dim, noise, seed)?),
    })
}

/// `rows × cols` matrix with orthonormal columns drawn from the seeded
/// stream (Gram–Schmidt of a Gaussian matrix, positive R diagonal).
pub fn random_orthonormal(rows: usize, cols: usize, stream: &mut Stream) -> Result<Matrix> {
    let g = Matrix::from_fn(rows, cols, |_, _| stream.normal());
    orthonormalize_columns(&g)
}

fn check_n(n: usize) -> Result<()> {
    if n == 0 {
        return Err(Error::param("n", "must be at least 1"));
    }
    Ok(())
}

pub fn gen_uniform_manifold(
    intrinsic_dim: usize,
    ambient_dim: usize,
    n: usize,
    seed: u64,
) -> Result<EmbeddingMatrix> {
    Ok(gen_uniform_manifold_with_basis(intrinsic_dim, ambient_dim, n, seed)?.0)
}

/// Also returns the `ambient × intrinsic` isometric embedding map.
pub fn gen_uniform_manifold_with_basis(
    intrinsic_dim: usize,
    ambient_dim: usize,
    n: usize,
    seed: u64,
) -> Result<(EmbeddingMatrix, Matrix)> {
    if intrinsic_dim == 0 {
        return Err(Error::param("intrinsic_dim", "must be at least 1"));
    }
    if intrinsic_dim > ambient_dim {
        return Err(Error::param(
            "intrinsic_dim",
            format!("{intrinsic_dim} exceeds ambient dimension {ambient_dim}"),
        ));
    }
    check_n(n)?;
    let mut basis_rng = Stream::new(seed, "uniform_manifold/basis");
    let basis = random_orthonormal(ambient_dim, intrinsic_dim, &mut basis_rng)?;
    let mut rng = Stream::new(seed, "uniform_manifold/points");
    let latent = Matrix::from_fn(n, intrinsic_dim, |_, _| rng.unit());
    let x = latent.matmul(&basis.transpose())?;
    let tag = format!("uniform_manifold(d={intrinsic_dim},D={ambient_dim},n={n},seed={seed})");
    Ok((EmbeddingMatrix::new(x, PromptType::None).with_tag(tag), basis))
}

pub fn gen_gaussian_spectrum(spectrum: &[f64], n: usize, seed: u64) -> Result<EmbeddingMatrix> {
    Ok(gen_gaussian_spectrum_with_rotation(spectrum, n, seed)?.0)
}

/// Also returns the rotation `R`; the population covariance is
/// `R·diag(spectrum)·Rᵀ`.
pub fn gen_gaussian_spectrum_with_rotation(
    spectrum: &[f64],
    n: usize,
    seed: u64,
) -> Result<(EmbeddingMatrix, Matrix)> {
    let dim = spectrum.len();
    if dim < 2 {
        return Err(Error::param("spectrum", "needs at least 2 entries"));
    }
    if let Some(bad) = spectrum.iter().find(|s| !(s.is_finite() && **s >= 0.0)) {
        return Err(Error::param("spectrum", format!("entry {bad} is not a non-negative variance")));
    }
    check_n(n)?;
    let mut rot_rng = Stream::new(seed, "gaussian_spectrum/rotation");
    let rotation = random_orthonormal(dim, dim, &mut rot_rng)?;
    let scale: Vec<f64> = spectrum.iter().map(|s| s.sqrt()).collect();
    let mut rng = Stream::new(seed, "gaussian_spectrum/points");
    let z = Matrix::from_fn(n, dim, |_, j| scale[j] * rng.normal());
    let x = z.matmul(&rotation.transpose())?;
    let tag = format!("gaussian_spectrum(n_dims={dim},n={n},seed={seed})");
    Ok((EmbeddingMatrix::new(x, PromptType::None).with_tag(tag), rotation))
}

#[derive(Clone, Debug, PartialEq)]
pub struct BlobSpec {
    pub classes: usize,
    pub ambient_dim: usize,
    pub per_class: usize,
    pub separation: f64,
    pub seed: u64,
    pub signal_dims: Option<usize>,
}

/// Gaussian blobs with unit within-class variance and means at
/// `separation · u_c` for seeded unit directions `u_c`. The classification
/// bundle uses a stratified 80/20 split; the clustering bundle holds every
/// point.
pub fn gen_labeled_blobs(spec: &BlobSpec) -> Result<(ClassificationBundle, ClusteringBundle)> {
    let &BlobSpec {
        classes,
        ambient_dim,
        per_class,
        separation,
        seed,
        signal_dims,
    } = spec;
    if classes < 2 {
        return Err(Error::param("classes", "need at least 2 classes"));
    }
    if per_class < 2 {
        return Err(Error::param("per_class", "need at least 2 points per class"));
    }
    if !(separation.is_finite() && separation >= 0.0) {
        return Err(Error::param("separation", "must be a finite non-negative number"));
    }
    if ambient_dim == 0 {
        return Err(Error::param("ambient_dim", "must be at least 1"));
    }
    let signal = signal_dims.unwrap_or(ambient_dim);
    if signal == 0 || signal > ambient_dim {
        return Err(Error::param(
            "signal_dims",
            format!("must lie in 1..={ambient_dim}, got {signal}"),
        ));
    }

    let mut dir_rng = Stream::new(seed, "labeled_blobs/means");
    let means: Vec<Vec<f64>> = (0..classes)
        .map(|_| {
            let mut u: Vec<f64> = (0..signal).map(|_| dir_rng.normal()).collect();
            let n = norm(&u);
            u.iter_mut().for_each(|v| *v *= separation / n);
            u.resize(ambient_dim, 0.0);
            u
        })
        .collect();

    let n_train = ((per_class * 4 + 2) / 5).clamp(1, per_class - 1);
    let mut rng = Stream::new(seed, "labeled_blobs/points");
    let mut train = Vec::new();
    let mut test = Vec::new();
    let mut train_labels = Vec::new();
    let mut test_labels = Vec::new();
    let mut all_labels = Vec::new();
    for (c, mean) in means.iter().enumerate() {
        for i in 0..per_class {
            let p: Vec<f64> = mean.iter().map(|m| m + rng.normal()).collect();
            if i < n_train {
                train.push(p);
                train_labels.push(c);
            } else {
                test.push(p);
                test_labels.push(c);
            }
            all_labels.push(c);
        }
    }
    let names: Vec<String> = (0..classes).map(|c| format!("c{c}")).collect();
    let tag = format!("labeled_blobs(C={classes},D={ambient_dim},sep={separation},seed={seed})");
    let train_m = Matrix::from_rows(&train)?;
    let test_m = Matrix::from_rows(&test)?;
    let points = Matrix::vstack(&[&train_m, &test_m])?;
    // Class-major order for the clustering bundle.
    let order: Vec<usize> = (0..classes)
        .flat_map(|c| {
            let tr = (c * n_train)..((c + 1) * n_train);
            let te = (train.len() + c * (per_class - n_train))
                ..(train.len() + (c + 1) * (per_class - n_train));
            tr.chain(te)
        })
        .collect();
    let points = points.select_rows(&order)?;

    let classification = ClassificationBundle::new(
        EmbeddingMatrix::new(train_m, PromptType::Classification).with_tag(tag.clone()),
        train_labels,
        EmbeddingMatrix::new(test_m, PromptType::Classification).with_tag(tag.clone()),
        test_labels,
        names.clone(),
    )?;
    let clustering = ClusteringBundle::new(
        EmbeddingMatrix::new(points, PromptType::Clustering).with_tag(tag),
        all_labels,
        names,
    )?;
    Ok((classification, clustering))
}

fn unit_gaussian(rng: &mut Stream, dim: usize) -> Vec<f64> {
    let s = 1.0 / (dim as f64).sqrt();
    (0..dim).map(|_| s * rng.normal()).collect()
}

/// Queries and distractors are isotropic with per-coordinate variance 1/D;
/// query `i`'s single relevant passage is passage `i` = query + noise·g.
pub fn gen_retrieval_planted(
    n_queries: usize,
    n_passages: usize,
    ambient_dim: usize,
    noise: f64,
    seed: u64,
) -> Result<RetrievalBundle> {
    if n_queries == 0 {
        return Err(Error::param("queries", "need at least 1 query"));
    }
    if n_passages < 2 || n_passages < n_queries {
        return Err(Error::param(
            "passages",
            format!("need at least max(2, queries={n_queries}) passages, got {n_passages}"),
        ));
    }
    if ambient_dim == 0 {
        return Err(Error::param("ambient_dim", "must be at least 1"));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::param("noise", "must be a finite non-negative number"));
    }
    let mut rng = Stream::new(seed, "retrieval_planted");
    let queries: Vec<Vec<f64>> = (0..n_queries).map(|_| unit_gaussian(&mut rng, ambient_dim)).collect();
    let passages: Vec<Vec<f64>> = (0..n_passages)
        .map(|i| {
            let g = unit_gaussian(&mut rng, ambient_dim);
            if i < n_queries {
                queries[i].iter().zip(&g).map(|(q, e)| q + noise * e).collect()
            } else {
                g
            }
        })
        .collect();
    let qrels = (0..n_queries)
        .map(|i| Qrel {
            query: i,
            passage: i,
            rel: 1,
        })
        .collect();
    let tag = format!("retrieval_planted(D={ambient_dim},noise={noise},seed={seed})");
    RetrievalBundle::new(
        EmbeddingMatrix::new(Matrix::from_rows(&queries)?, PromptType::RetrievalQuery).with_tag(tag.clone()),
        EmbeddingMatrix::new(Matrix::from_rows(&passages)?, PromptType::RetrievalPassage).with_tag(tag),
        qrels,
    )
}

/// Pair `i` occupies rows `2i` and `2i+1`. Each pair is built with a
/// cosine drawn uniformly from (−1, 1); the gold score is the pair's cosine
/// before independent noise (per-coordinate std noise/√D) is added.
pub fn gen_sts_planted(n_pairs: usize, ambient_dim: usize, noise: f64, seed: u64) -> Result<StsBundle> {
    if n_pairs < 3 {
        return Err(Error::param("pairs", "need at least 3 pairs"));
    }
    if ambient_dim < 2 {
        return Err(Error::param("ambient_dim", "need at least 2 dimensions"));
    }
    if !(noise.is_finite() && noise >= 0.0) {
        return Err(Error::param("noise", "must be a finite non-negative number"));
    }
    let mut rng = Stream::new(seed, "sts_planted");
    let mut rows = Vec::with_capacity(2 * n_pairs);
    let mut pairs = Vec::with_capacity(n_pairs);
    for i in 0..n_pairs {
        let t = 2.0 * rng.unit() - 1.0;
        let a = normalized(unit_gaussian(&mut rng, ambient_dim))?;
        let mut w = unit_gaussian(&mut rng, ambient_dim);
        let proj: f64 = w.iter().zip(&a).map(|(x, y)| x * y).sum();
        w.iter_mut().zip(&a).for_each(|(x, y)| *x -= proj * y);
        let w = normalized(w)?;
        let s = (1.0 - t * t).sqrt();
        let b: Vec<f64> = a.iter().zip(&w).map(|(x, y)| t * x + s * y).collect();
        let gold = cosine_similarity(&a, &b)?;
        let na = unit_gaussian(&mut rng, ambient_dim);
        let nb = unit_gaussian(&mut rng, ambient_dim);
        rows.push(a.iter().zip(&na).map(|(x, e)| x + noise * e).collect::<Vec<f64>>());
        rows.push(b.iter().zip(&nb).map(|(x, e)| x + noise * e).collect::<Vec<f64>>());
        pairs.push(StsPair {
            a: 2 * i,
            b: 2 * i + 1,
            score: gold,
        });
    }
    let tag = format!("sts_planted(D={ambient_dim},noise={noise},seed={seed})");
    StsBundle::new(
        EmbeddingMatrix::new(Matrix::from_rows(&rows)?, PromptType::Sts).with_tag(tag),
        pairs,
    )
}

fn normalized(mut v: Vec<f64>) -> Result<Vec<f64>> {
    let n = norm(&v);
    if n == 0.0 {
        return Err(Error::Numerical("zero-norm Gaussian draw".into()));
    }
    v.iter_mut().for_each(|x| *x /= n);
    Ok(v)
}
