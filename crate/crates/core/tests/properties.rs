//! Invariants that must hold for any input, checked on generated cases.

use proptest::prelude::*;

use embkit_core::dataset::{decode, encode, EmbeddingMatrix, PromptType, Qrel, RetrievalBundle, TaskBundle};
use embkit_core::intrinsic_dim::twonn;
use embkit_core::isotropy::isoscore;
use embkit_core::numerics::{covariance, sym_eigenvalues, Matrix};
use embkit_core::reducers::{fit, fit_apply, reduce_bundle, Reducer};
use embkit_core::rng::Stream;
use embkit_core::synthgen::{gen_labeled_blobs, gen_retrieval_planted, gen_sts_planted, random_orthonormal, BlobSpec};
use embkit_core::taskeval::{evaluate, ndcg_at_k, rank_passages, spearman, v_measure, EvalOptions};

fn gaussian(rows: usize, cols: usize, seed: u64) -> Matrix {
    let mut s = Stream::new(seed, "property-test");
    Matrix::from_fn(rows, cols, |_, _| s.normal())
}

fn emb(m: Matrix) -> EmbeddingMatrix {
    EmbeddingMatrix::new(m, PromptType::None)
}

fn rel_close(a: f64, b: f64, tol: f64) -> bool {
    (a - b).abs() <= tol * a.abs().max(b.abs()).max(1.0)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn spearman_ignores_monotone_transforms(ints in prop::collection::vec(-500i32..500, 5..40), other in prop::collection::vec(-50i32..50, 40)) {
        let a: Vec<f64> = ints.iter().map(|&i| i as f64 / 7.0).collect();
        let b: Vec<f64> = other[..a.len()].iter().map(|&i| i as f64).collect();
        let distinct = |v: &[f64]| v.iter().any(|x| *x != v[0]);
        prop_assume!(distinct(&a) && distinct(&b));
        let base = spearman(&a, &b).unwrap();
        let ta: Vec<f64> = a.iter().map(|x| x.powi(3) + 2.0 * x + 1.0).collect();
        let tb: Vec<f64> = b.iter().map(|x| (x / 10.0).exp()).collect();
        prop_assert_eq!(spearman(&ta, &tb).unwrap(), base);
    }

    #[test]
    fn v_measure_is_symmetric(gold in prop::collection::vec(0usize..4, 1..60), pred_seed in any::<u64>()) {
        let mut s = Stream::new(pred_seed, "pred");
        let pred: Vec<usize> = gold.iter().map(|_| s.below(5)).collect();
        let a = v_measure(&gold, &pred, 1.0).unwrap();
        let b = v_measure(&pred, &gold, 1.0).unwrap();
        prop_assert!((a - b).abs() < 1e-12);
        prop_assert!((0.0..=1.0).contains(&a));
    }

    #[test]
    fn ndcg_ignores_order_of_irrelevant_tail(head in prop::collection::vec(0i64..3, 10), tail_len in 0usize..20, seed in any::<u64>()) {
        let mut ranked = head.clone();
        ranked.extend(std::iter::repeat(0).take(tail_len));
        let mut judged = head.clone();
        judged.push(1);
        let a = ndcg_at_k(&ranked, 10, &judged).unwrap();
        let mut tail = ranked.split_off(10);
        let perm = Stream::new(seed, "tail").permutation(tail.len());
        tail = perm.iter().map(|&i| tail[i]).collect();
        ranked.extend(tail);
        prop_assert_eq!(ndcg_at_k(&ranked, 10, &judged).unwrap(), a);
    }

    #[test]
    fn retrieval_ranking_survives_row_rescaling(seed in any::<u64>()) {
        let b = gen_retrieval_planted(12, 40, 6, 0.8, seed).unwrap();
        let mut s = Stream::new(seed, "scales");
        let rescale = |m: &Matrix, s: &mut Stream| {
            let f: Vec<f64> = (0..m.rows()).map(|_| 0.01 + 100.0 * s.unit()).collect();
            Matrix::from_fn(m.rows(), m.cols(), |i, j| f[i] * m.get(i, j))
        };
        let q = b.queries().replace_matrix(rescale(&b.queries().matrix, &mut s));
        let p = b.passages().replace_matrix(rescale(&b.passages().matrix, &mut s));
        let scaled = RetrievalBundle::new(q, p, b.qrels().to_vec()).unwrap();
        prop_assert_eq!(rank_passages(&b, 40).unwrap(), rank_passages(&scaled, 40).unwrap());
    }

    #[test]
    fn emb_round_trip(rows in 1usize..6, cols in 1usize..6, seed in any::<u64>(), code in 0u8..6) {
        let m = gaussian(rows, cols, seed).map(|v| v as f32 as f64);
        let x = EmbeddingMatrix::new(m, PromptType::from_code(code).unwrap());
        let bytes = encode(&x).unwrap();
        let back = decode(&bytes).unwrap();
        prop_assert_eq!(&back.matrix, &x.matrix);
        prop_assert_eq!(back.prompt_type, x.prompt_type);
        prop_assert_eq!(encode(&back).unwrap(), bytes);
    }

    #[test]
    fn pca_basis_properties(rows in 12usize..40, cols in 2usize..7, seed in any::<u64>()) {
        let x = emb(gaussian(rows, cols, seed));
        let f = fit(&Reducer::pca(cols), &x).unwrap();
        let (_, basis) = f.pca_parts().unwrap();
        let gram = basis.transpose().matmul(basis).unwrap();
        for i in 0..cols {
            for j in 0..cols {
                let want = if i == j { 1.0 } else { 0.0 };
                prop_assert!((gram.get(i, j) - want).abs() < 1e-10);
            }
        }
        // Projected variances are the eigenvalues, in descending order.
        let y = f.apply(&x).unwrap();
        let var = covariance(&y.matrix).unwrap();
        let eig = sym_eigenvalues(&covariance(&x.matrix).unwrap()).unwrap();
        for k in 0..cols {
            prop_assert!((var.get(k, k) - eig[k]).abs() < 1e-9 * eig[0].max(1.0));
            if k > 0 {
                prop_assert!(var.get(k, k) <= var.get(k - 1, k - 1) + 1e-12);
            }
        }
    }

    #[test]
    fn first_full_dim_changes_no_score(seed in 0u64..1000) {
        let opts = EvalOptions { seed, ..EvalOptions::default() };
        let spec = BlobSpec { classes: 3, ambient_dim: 5, per_class: 10, separation: 3.0, seed, signal_dims: None };
        let (cls, clu) = gen_labeled_blobs(&spec).unwrap();
        let bundles = [
            TaskBundle::Classification(cls),
            TaskBundle::Clustering(clu),
            TaskBundle::Retrieval(gen_retrieval_planted(5, 20, 5, 0.5, seed).unwrap()),
            TaskBundle::Sts(gen_sts_planted(10, 5, 0.5, seed).unwrap()),
        ];
        for b in &bundles {
            let reduced = reduce_bundle(&Reducer::first(5), b).unwrap();
            let (x, y) = (evaluate(b, &opts).unwrap(), evaluate(&reduced, &opts).unwrap());
            prop_assert_eq!(x.value.to_bits(), y.value.to_bits());
        }
    }
}

/// Random rigid motion plus positive scaling of a point cloud.
fn similarity_transform(x: &Matrix, seed: u64) -> Matrix {
    let mut s = Stream::new(seed, "similarity");
    let r = random_orthonormal(x.cols(), x.cols(), &mut s).unwrap();
    let shift: Vec<f64> = (0..x.cols()).map(|_| 10.0 * s.normal()).collect();
    let scale = 0.1 + 5.0 * s.unit();
    let rotated = x.matmul(&r).unwrap();
    Matrix::from_fn(x.rows(), x.cols(), |i, j| scale * rotated.get(i, j) + shift[j])
}

#[test]
fn estimators_are_similarity_invariant() {
    for seed in 0..5 {
        let x = gaussian(400, 6, seed);
        let y = similarity_transform(&x, seed);
        let (a, b) = (twonn(&emb(x.clone()), 0.1).unwrap(), twonn(&emb(y.clone()), 0.1).unwrap());
        assert!(rel_close(a.id, b.id, 1e-9), "{} vs {}", a.id, b.id);
        let (a, b) = (isoscore(&emb(x)).unwrap(), isoscore(&emb(y)).unwrap());
        assert!(rel_close(a.isoscore, b.isoscore, 1e-9));
    }
}

#[test]
fn random_reduction_nests_and_pca_reconstructs() {
    let x = emb(gaussian(30, 8, 1));
    let small = fit_apply(&Reducer::random(3, 4, "t"), &x).unwrap();
    let big = fit_apply(&Reducer::random(6, 4, "t"), &x).unwrap();
    for i in 0..30 {
        assert_eq!(&big.matrix.row(i)[..3], small.matrix.row(i));
    }
    // Full-rank PCA is a rigid motion: pairwise distances survive.
    let y = fit_apply(&Reducer::pca(8), &x).unwrap();
    for (i, j) in [(0, 1), (3, 17), (29, 5)] {
        let d = |m: &Matrix| -> f64 {
            m.row(i).iter().zip(m.row(j)).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt()
        };
        assert!((d(&x.matrix) - d(&y.matrix)).abs() < 1e-10);
    }
}

#[test]
fn retrieval_bundle_with_duplicate_rankings_is_stable() {
    // Two identical passages tie; the lower index must come first.
    let q = emb(Matrix::from_rows(&[[1.0, 0.5]]).unwrap());
    let p = emb(Matrix::from_rows(&[[0.0, 1.0], [2.0, 1.0], [2.0, 1.0]]).unwrap());
    let b = RetrievalBundle::new(q, p, vec![Qrel { query: 0, passage: 2, rel: 1 }]).unwrap();
    assert_eq!(rank_passages(&b, 3).unwrap()[0], vec![1, 2, 0]);
}
