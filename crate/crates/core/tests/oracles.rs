//! Library results checked against independent implementations written here
//! (brute force, closed forms, nalgebra, Monte-Carlo nulls).

use embkit_core::dataset::{
    ClassificationBundle, ClusteringBundle, EmbeddingMatrix, PromptType, Qrel, RetrievalBundle,
};
use embkit_core::numerics::{euclidean, knn, Matrix};
use embkit_core::reducers::{fit_apply, Reducer};
use embkit_core::rng::Stream;
use embkit_core::synthgen::{
    gen_gaussian_spectrum, gen_gaussian_spectrum_with_rotation, gen_labeled_blobs, gen_retrieval_planted, gen_sts_planted,
    gen_uniform_manifold_with_basis, BlobSpec,
};
use embkit_core::taskeval::{
    eval_classification, eval_clustering, eval_retrieval, eval_sts, kmeans, logreg_objective,
    train_logreg, LogRegConfig, DEFAULT_RESTARTS,
};
use embkit_core::isotropy::isoscore;
use embkit_core::numerics::covariance;

fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut s = Stream::new(seed, "oracle-test");
    Matrix::from_fn(rows, cols, |_, _| s.normal())
}

fn emb(m: Matrix) -> EmbeddingMatrix {
    EmbeddingMatrix::new(m, PromptType::None)
}

#[test]
fn pca_matches_nalgebra_projection() {
    for seed in 0..20 {
        let x = gaussian(50, 10, seed);
        let d = 4;
        let got = fit_apply(&Reducer::pca(d), &emb(x.clone())).unwrap().matrix;

        let n = x.rows();
        let means: Vec<f64> = (0..10).map(|j| (0..n).map(|i| x.get(i, j)).sum::<f64>() / n as f64).collect();
        let centered = nalgebra::DMatrix::from_fn(n, 10, |i, j| x.get(i, j) - means[j]);
        let cov = centered.transpose() * &centered / (n as f64 - 1.0);
        let eig = nalgebra::SymmetricEigen::new(cov);
        let mut order: Vec<usize> = (0..10).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[b].total_cmp(&eig.eigenvalues[a]));
        for (k, &c) in order.iter().take(d).enumerate() {
            let proj = &centered * eig.eigenvectors.column(c);
            let sign = if proj.dot(&nalgebra::DVector::from_fn(n, |i, _| got.get(i, k))) < 0.0 { -1.0 } else { 1.0 };
            for i in 0..n {
                assert!((got.get(i, k) - sign * proj[i]).abs() < 1e-8, "seed {seed} col {k}");
            }
        }
    }
}

#[test]
fn knn_matches_brute_force() {
    for (n, seed) in [(3, 1), (17, 2), (120, 3)] {
        let x = gaussian(n, 5, seed);
        let k = 2.min(n - 1);
        let t = knn(&x, k).unwrap();
        for i in 0..n {
            let mut all: Vec<(f64, usize)> = (0..n)
                .filter(|&j| j != i)
                .map(|j| {
                    let d2: f64 = x.row(i).iter().zip(x.row(j)).map(|(a, b)| (a - b) * (a - b)).sum();
                    (d2.sqrt(), j)
                })
                .collect();
            all.sort_by(|a, b| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1)));
            let want: Vec<usize> = all[..k].iter().map(|p| p.1).collect();
            assert_eq!(t.indices(i), &want[..]);
            for (g, w) in t.distances(i).iter().zip(&all) {
                assert!((g - w.0).abs() < 1e-12);
            }
        }
    }
}

/// Objective of the regularized multinomial model, written independently of
/// the library: parameters are W (C×D) then b (C).
fn oracle_objective(x: &Matrix, y: &[usize], c: usize, theta: &[f64], l2: f64) -> f64 {
    let d = x.cols();
    let mut total = 0.0;
    for i in 0..x.rows() {
        let z: Vec<f64> = (0..c)
            .map(|k| theta[c * d + k] + (0..d).map(|j| theta[k * d + j] * x.get(i, j)).sum::<f64>())
            .collect();
        let m = z.iter().cloned().fold(f64::MIN, f64::max);
        let lse = m + z.iter().map(|v| (v - m).exp()).sum::<f64>().ln();
        total += lse - z[y[i]];
    }
    total + 0.5 * l2 * theta[..c * d].iter().map(|w| w * w).sum::<f64>()
}

fn oracle_gradient(x: &Matrix, y: &[usize], c: usize, theta: &[f64], l2: f64) -> Vec<f64> {
    let d = x.cols();
    let mut g = vec![0.0; theta.len()];
    for i in 0..x.rows() {
        let z: Vec<f64> = (0..c)
            .map(|k| theta[c * d + k] + (0..d).map(|j| theta[k * d + j] * x.get(i, j)).sum::<f64>())
            .collect();
        let m = z.iter().cloned().fold(f64::MIN, f64::max);
        let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
        let s: f64 = e.iter().sum();
        for k in 0..c {
            let r = e[k] / s - if k == y[i] { 1.0 } else { 0.0 };
            for j in 0..d {
                g[k * d + j] += r * x.get(i, j);
            }
            g[c * d + k] += r;
        }
    }
    for k in 0..c * d {
        g[k] += l2 * theta[k];
    }
    g
}

#[test]
fn logreg_reaches_the_convex_optimum() {
    let x = gaussian(40, 3, 11);
    let y: Vec<usize> = (0..40).map(|i| i % 3).collect();
    let model = train_logreg(&x, &y, &LogRegConfig::default()).unwrap();
    assert!(model.converged);

    // Long-run fixed small step gradient descent.
    let c = 3;
    let mut theta = vec![0.0; c * 3 + c];
    let lipschitz: f64 = 1.0 + 0.5 * x.row_iter().map(|r| 1.0 + r.iter().map(|v| v * v).sum::<f64>()).sum::<f64>();
    let step = 1.0 / lipschitz;
    for _ in 0..200_000 {
        let g = oracle_gradient(&x, &y, c, &theta, 1.0);
        if g.iter().fold(0.0f64, |m, v| m.max(v.abs())) < 1e-10 {
            break;
        }
        for (t, gi) in theta.iter_mut().zip(&g) {
            *t -= step * gi;
        }
    }
    let oracle = oracle_objective(&x, &y, c, &theta, 1.0);
    let got = logreg_objective(&x, &y, &model, 1.0);
    assert!((got - model.objective).abs() < 1e-9);
    assert!((got - oracle).abs() < 1e-4, "library {got} vs oracle {oracle}");
}

#[test]
fn separated_blobs_score_near_perfectly() {
    let spec = BlobSpec {
        classes: 4,
        ambient_dim: 16,
        per_class: 100,
        separation: 10.0,
        seed: 5,
        signal_dims: None,
    };
    let (cls, clu) = gen_labeled_blobs(&spec).unwrap();
    assert!(eval_classification(&cls, &LogRegConfig::default()).unwrap().value >= 0.99);
    let v = eval_clustering(&clu, 1, DEFAULT_RESTARTS).unwrap();
    assert!(v.value >= 0.99, "{}", v.value);
    let again = eval_clustering(&clu, 1, DEFAULT_RESTARTS).unwrap();
    assert_eq!(v.value.to_bits(), again.value.to_bits());
}

#[test]
fn zero_separation_is_at_chance() {
    let spec = BlobSpec {
        classes: 4,
        ambient_dim: 8,
        per_class: 250,
        separation: 0.0,
        seed: 9,
        signal_dims: None,
    };
    let (cls, clu) = gen_labeled_blobs(&spec).unwrap();
    let acc = eval_classification(&cls, &LogRegConfig::default()).unwrap().value;
    assert!((0.15..=0.35).contains(&acc), "{acc}");
    assert!(eval_clustering(&clu, 0, DEFAULT_RESTARTS).unwrap().value <= 0.05);
}

#[test]
fn kmeans_recovers_three_blobs() {
    let spec = BlobSpec {
        classes: 3,
        ambient_dim: 5,
        per_class: 40,
        separation: 12.0,
        seed: 2,
        signal_dims: None,
    };
    let (_, clu) = gen_labeled_blobs(&spec).unwrap();
    let r = kmeans(&clu.points().matrix, 3, 7, DEFAULT_RESTARTS).unwrap();
    let gold = clu.gold_labels();
    // Same partition: gold[i] == gold[j] ⇔ pred[i] == pred[j].
    for i in 0..gold.len() {
        for j in 0..gold.len() {
            assert_eq!(gold[i] == gold[j], r.assignments[i] == r.assignments[j]);
        }
    }
}

#[test]
fn shuffled_labels_give_chance_accuracy() {
    let mut s = Stream::new(3, "shuffled");
    let train = gaussian(2000, 4, 21);
    let test = gaussian(2000, 4, 22);
    let train_y: Vec<usize> = (0..2000).map(|_| s.below(2)).collect();
    let test_y: Vec<usize> = (0..2000).map(|_| s.below(2)).collect();
    let b = ClassificationBundle::new(emb(train), train_y, emb(test), test_y, vec!["a".into(), "b".into()]).unwrap();
    let acc = eval_classification(&b, &LogRegConfig::default()).unwrap().value;
    assert!((0.45..=0.55).contains(&acc), "{acc}");
}

#[test]
fn one_gaussian_random_gold_clusters_badly() {
    let mut s = Stream::new(4, "null-gold");
    let pts = gaussian(1000, 6, 31);
    let gold: Vec<usize> = (0..1000).map(|_| s.below(2)).collect();
    let b = ClusteringBundle::new(emb(pts), gold, vec!["a".into(), "b".into()]).unwrap();
    assert!(eval_clustering(&b, 0, DEFAULT_RESTARTS).unwrap().value <= 0.05);
}

#[test]
fn retrieval_near_copies_score_one() {
    let b = gen_retrieval_planted(30, 60, 16, 1e-6, 3).unwrap();
    assert_eq!(eval_retrieval(&b).unwrap().value, 1.0);
}

#[test]
fn retrieval_null_matches_uniform_rank_expectation() {
    let (nq, np) = (2000, 100);
    let mut s = Stream::new(8, "null-qrels");
    let q = gaussian(nq, 32, 41);
    let p = gaussian(np, 32, 42);
    let qrels = (0..nq)
        .map(|i| Qrel {
            query: i,
            passage: s.below(np),
            rel: 1,
        })
        .collect();
    let b = RetrievalBundle::new(emb(q), emb(p), qrels).unwrap();
    let got = eval_retrieval(&b).unwrap().value;
    let want: f64 = (1..=10).map(|r| 1.0 / ((r + 1) as f64).log2()).sum::<f64>() / np as f64;
    let second: f64 = (1..=10).map(|r| 1.0 / ((r + 1) as f64).log2().powi(2)).sum::<f64>() / np as f64;
    let se = ((second - want * want) / nq as f64).sqrt();
    assert!((got - want).abs() < 5.0 * se, "{got} vs {want} (se {se})");
}

/// Spearman written as the O(n²) average-rank formula.
fn oracle_spearman(a: &[f64], b: &[f64]) -> f64 {
    let rank = |v: &[f64]| -> Vec<f64> {
        v.iter()
            .map(|&x| {
                let below = v.iter().filter(|&&y| y < x).count() as f64;
                let equal = v.iter().filter(|&&y| y == x).count() as f64;
                below + (equal + 1.0) / 2.0
            })
            .collect()
    };
    let (ra, rb) = (rank(a), rank(b));
    let n = a.len() as f64;
    let (ma, mb) = (ra.iter().sum::<f64>() / n, rb.iter().sum::<f64>() / n);
    let cov: f64 = ra.iter().zip(&rb).map(|(x, y)| (x - ma) * (y - mb)).sum();
    let va: f64 = ra.iter().map(|x| (x - ma).powi(2)).sum();
    let vb: f64 = rb.iter().map(|y| (y - mb).powi(2)).sum();
    cov / (va * vb).sqrt()
}

#[test]
fn sts_matches_direct_formula() {
    let b = gen_sts_planted(300, 12, 0.7, 4).unwrap();
    let x = &b.points().matrix;
    let cos: Vec<f64> = b
        .pairs()
        .iter()
        .map(|p| {
            let (u, v) = (x.row(p.a), x.row(p.b));
            let dot: f64 = u.iter().zip(v).map(|(a, b)| a * b).sum();
            let nu: f64 = u.iter().map(|a| a * a).sum::<f64>().sqrt();
            let nv: f64 = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            dot / (nu * nv)
        })
        .collect();
    let gold: Vec<f64> = b.pairs().iter().map(|p| p.score).collect();
    let got = eval_sts(&b).unwrap().value;
    assert!((got - oracle_spearman(&cos, &gold)).abs() < 1e-12);
    assert!(got < 1.0);
}

#[test]
fn planted_noise_lowers_both_metrics() {
    let mean = |f: &dyn Fn(u64) -> f64| (0..5).map(f).sum::<f64>() / 5.0;
    let mut prev_r = f64::INFINITY;
    let mut prev_s = f64::INFINITY;
    for noise in [0.0, 0.5, 2.0] {
        let r = mean(&|seed| eval_retrieval(&gen_retrieval_planted(50, 200, 8, noise, seed).unwrap()).unwrap().value);
        let s = mean(&|seed| eval_sts(&gen_sts_planted(200, 8, noise, seed).unwrap()).unwrap().value);
        if noise == 0.0 {
            assert_eq!(r, 1.0);
            assert_eq!(s, 1.0);
        }
        assert!(r < prev_r && s < prev_s, "noise {noise}: {r} {s}");
        prev_r = r;
        prev_s = s;
    }
}

#[test]
fn isomap_recovers_a_flat_plane() {
    // With the default 15 neighbours graph paths on 500 points still zig-zag
    // by ~2%; 30 neighbours bring the median error under 1%.
    let (x, _) = gen_uniform_manifold_with_basis(2, 10, 500, 3).unwrap();
    let y = fit_apply(&Reducer::isomap(2, 30), &x).unwrap();
    let mut rel = Vec::new();
    for i in 0..500 {
        for j in i + 1..500 {
            let a = euclidean(x.matrix.row(i), x.matrix.row(j));
            rel.push((a - euclidean(y.matrix.row(i), y.matrix.row(j))).abs() / a);
        }
    }
    rel.sort_by(f64::total_cmp);
    let median = rel[rel.len() / 2];
    assert!(median < 0.01, "median relative error {median}");
}

#[test]
fn gaussian_spectrum_oracles() {
    let iso = gen_gaussian_spectrum(&vec![1.0; 64], 10_000, 1).unwrap();
    assert!(isoscore(&iso).unwrap().isoscore >= 0.95);

    let mut spike = vec![0.0; 16];
    spike[0] = 1.0;
    let rank1 = gen_gaussian_spectrum(&spike, 2_000, 2).unwrap();
    assert!(isoscore(&rank1).unwrap().isoscore <= 0.02);

    // Sample covariance converges entrywise at the CLT rate. For unit
    // variances the bound is 5/√N.
    let n = 10_000;
    let cov = covariance(&iso.matrix).unwrap();
    let worst = (0..64)
        .flat_map(|i| (0..64).map(move |j| (i, j)))
        .map(|(i, j)| (cov.get(i, j) - if i == j { 1.0 } else { 0.0 }).abs())
        .fold(0.0f64, f64::max);
    assert!(worst < 5.0 / (n as f64).sqrt(), "{worst}");

    // Rotated anisotropic spectrum: bound scales with the largest variance.
    let spectrum = [3.0, 2.0, 1.0, 0.5];
    let (x, r) = gen_gaussian_spectrum_with_rotation(&spectrum, n, 3).unwrap();
    let cov = covariance(&x.matrix).unwrap();
    let bound = 5.0 * 3.0 / (n as f64).sqrt();
    for i in 0..4 {
        for j in 0..4 {
            let want: f64 = (0..4).map(|k| r.get(i, k) * spectrum[k] * r.get(j, k)).sum();
            assert!((cov.get(i, j) - want).abs() < bound, "({i},{j}) {} vs {want}", cov.get(i, j));
        }
    }
}
