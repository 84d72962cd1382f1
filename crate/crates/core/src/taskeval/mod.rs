//! Downstream evaluations on (possibly reduced) embeddings: classification
//! accuracy, clustering V-measure, retrieval nDCG@10 and STS Spearman.
//!
//! Embeddings are used as given; nothing here normalizes or standardizes
//! features.

mod kmeans;
mod logreg;
mod metrics;

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;
use serde_json::{json, Value};

pub use kmeans::{kmeans, KMeansResult, DEFAULT_RESTARTS, MAX_ITERATIONS};
pub use logreg::{logreg_objective, train_logreg, LogRegConfig, LogRegModel};
pub use metrics::{average_ranks, homogeneity_completeness_v, ndcg_at_k, pearson, spearman, v_measure};

use crate::dataset::{ClassificationBundle, ClusteringBundle, RetrievalBundle, StsBundle, TaskBundle, TaskKind};
use crate::error::{Error, Result};
use crate::numerics::{cosine_similarity, dot};

pub const NDCG_CUTOFF: usize = 10;

#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Accuracy,
    VMeasure,
    NdcgAt10,
    Spearman,
}

impl Metric {
    pub fn as_str(self) -> &'static str {
        match self {
            Metric::Accuracy => "accuracy",
            Metric::VMeasure => "v_measure",
            Metric::NdcgAt10 => "ndcg_at_10",
            Metric::Spearman => "spearman",
        }
    }

    pub fn for_task(kind: TaskKind) -> Metric {
        match kind {
            TaskKind::Classification => Metric::Accuracy,
            TaskKind::Clustering => Metric::VMeasure,
            TaskKind::Retrieval => Metric::NdcgAt10,
            TaskKind::Sts => Metric::Spearman,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TaskScore {
    pub task: TaskKind,
    pub metric: Metric,
    pub value: f64,
    /// Test rows, clustered points, scored queries or STS pairs.
    pub n_items: usize,
    /// Settings and diagnostics (convergence, seeds, skipped queries, …).
    pub meta: BTreeMap<String, Value>,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct EvalOptions {
    pub seed: u64,
    pub logreg: LogRegConfig,
    pub restarts: usize,
}

impl Default for EvalOptions {
    fn default() -> Self {
        Self {
            seed: 0,
            logreg: LogRegConfig::default(),
            restarts: DEFAULT_RESTARTS,
        }
    }
}

pub fn eval_classification(b: &ClassificationBundle, cfg: &LogRegConfig) -> Result<TaskScore> {
    let model = train_logreg(&b.train().matrix, b.train_labels(), cfg)?;
    let pred = model.predict(&b.test().matrix)?;
    let hits = pred
        .iter()
        .zip(b.test_labels())
        .filter(|(p, g)| p == g)
        .count();
    let n = b.test_labels().len();
    let mut meta = BTreeMap::new();
    meta.insert("l2".into(), json!(cfg.l2));
    meta.insert("tol".into(), json!(cfg.tol));
    meta.insert("max_epochs".into(), json!(cfg.max_epochs));
    meta.insert("converged".into(), json!(model.converged));
    meta.insert("epochs".into(), json!(model.epochs));
    meta.insert("features".into(), json!("raw"));
    Ok(TaskScore {
        task: TaskKind::Classification,
        metric: Metric::Accuracy,
        value: hits as f64 / n as f64,
        n_items: n,
        meta,
    })
}

pub fn eval_clustering(b: &ClusteringBundle, seed: u64, restarts: usize) -> Result<TaskScore> {
    let k = b.n_classes();
    let run = kmeans(&b.points().matrix, k, seed, restarts)?;
    let value = v_measure(b.gold_labels(), &run.assignments, 1.0)?;
    let mut meta = BTreeMap::new();
    meta.insert("seed".into(), json!(seed));
    meta.insert("restarts".into(), json!(restarts));
    meta.insert("k".into(), json!(k));
    meta.insert("converged".into(), json!(run.converged));
    meta.insert("inertia".into(), json!(run.inertia));
    Ok(TaskScore {
        task: TaskKind::Clustering,
        metric: Metric::VMeasure,
        value,
        n_items: b.gold_labels().len(),
        meta,
    })
}

/// Passage indices of the `k` highest-cosine passages for every query,
/// ties broken by passage index.
pub fn rank_passages(b: &RetrievalBundle, k: usize) -> Result<Vec<Vec<usize>>> {
    let q = &b.queries().matrix;
    let p = &b.passages().matrix;
    let q_norms = squared_norms(q.row_iter(), "query")?;
    let p_norms = squared_norms(p.row_iter(), "passage")?;
    let k = k.min(p.rows());
    Ok((0..q.rows())
        .into_par_iter()
        .map(|i| {
            let qi = q.row(i);
            let mut scored: Vec<(f64, usize)> = p
                .row_iter()
                .zip(&p_norms)
                .enumerate()
                .map(|(j, (pj, &n2))| (dot(qi, pj) / (q_norms[i] * n2).sqrt(), j))
                .collect();
            let cmp = |a: &(f64, usize), b: &(f64, usize)| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1));
            if k < scored.len() {
                scored.select_nth_unstable_by(k - 1, cmp);
                scored.truncate(k);
            }
            scored.sort_unstable_by(cmp);
            scored.into_iter().map(|(_, j)| j).collect()
        })
        .collect())
}

fn squared_norms<'a>(rows: impl Iterator<Item = &'a [f64]>, what: &str) -> Result<Vec<f64>> {
    rows.enumerate()
        .map(|(i, r)| {
            let n2 = dot(r, r);
            if n2 == 0.0 {
                Err(Error::Degenerate(format!("{what} row {i} has zero norm")))
            } else {
                Ok(n2)
            }
        })
        .collect()
}

pub fn eval_retrieval(b: &RetrievalBundle) -> Result<TaskScore> {
    let n_queries = b.queries().rows();
    let mut judged: Vec<BTreeMap<usize, i64>> = vec![BTreeMap::new(); n_queries];
    for q in b.qrels() {
        judged[q.query].insert(q.passage, i64::from(q.rel));
    }
    let rankings = rank_passages(b, NDCG_CUTOFF)?;
    let mut total = 0.0;
    let mut scored = 0;
    let mut skipped = 0;
    // Summed in query order so the mean does not depend on scheduling.
    for (ranking, rels) in rankings.iter().zip(&judged) {
        let ranked: Vec<i64> = ranking
            .iter()
            .map(|j| rels.get(j).copied().unwrap_or(0))
            .collect();
        let all: Vec<i64> = rels.values().copied().collect();
        match ndcg_at_k(&ranked, NDCG_CUTOFF, &all)? {
            Some(v) => {
                total += v;
                scored += 1;
            }
            None => skipped += 1,
        }
    }
    if scored == 0 {
        return Err(Error::InsufficientData(
            "no query has a passage with positive relevance".into(),
        ));
    }
    let mut meta = BTreeMap::new();
    meta.insert("k".into(), json!(NDCG_CUTOFF));
    meta.insert("gain".into(), json!("linear"));
    meta.insert("discount".into(), json!("1/log2(rank+1)"));
    meta.insert("skipped_queries".into(), json!(skipped));
    Ok(TaskScore {
        task: TaskKind::Retrieval,
        metric: Metric::NdcgAt10,
        value: total / scored as f64,
        n_items: scored,
        meta,
    })
}

/// Cosine similarity of each STS pair, in pair order.
pub fn sts_similarities(b: &StsBundle) -> Result<Vec<f64>> {
    let x = &b.points().matrix;
    b.pairs()
        .iter()
        .enumerate()
        .map(|(i, p)| {
            cosine_similarity(x.row(p.a), x.row(p.b))
                .map_err(|_| Error::Degenerate(format!("pair {i} involves a zero-norm row")))
        })
        .collect()
}

pub fn eval_sts(b: &StsBundle) -> Result<TaskScore> {
    let sims = sts_similarities(b)?;
    let gold: Vec<f64> = b.pairs().iter().map(|p| p.score).collect();
    let value = spearman(&sims, &gold)?;
    Ok(TaskScore {
        task: TaskKind::Sts,
        metric: Metric::Spearman,
        value,
        n_items: gold.len(),
        meta: BTreeMap::new(),
    })
}

pub fn evaluate(bundle: &TaskBundle, opts: &EvalOptions) -> Result<TaskScore> {
    match bundle {
        TaskBundle::Classification(b) => eval_classification(b, &opts.logreg),
        TaskBundle::Clustering(b) => eval_clustering(b, opts.seed, opts.restarts),
        TaskBundle::Retrieval(b) => eval_retrieval(b),
        TaskBundle::Sts(b) => eval_sts(b),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{EmbeddingMatrix, PromptType, Qrel, StsPair};
    use crate::numerics::Matrix;

    fn emb(rows: &[&[f64]]) -> EmbeddingMatrix {
        EmbeddingMatrix::new(Matrix::from_rows(rows).unwrap(), PromptType::None)
    }

    #[test]
    fn distractor_equal_to_query_pushes_relevant_to_rank_two() {
        let q = emb(&[&[1.0, 0.0, 0.0]]);
        // Passage 0 is the distractor, passage 1 the relevant one (orthogonal
        // to the query but closer than passage 2).
        let p = emb(&[&[1.0, 0.0, 0.0], &[0.0, 1.0, 0.0], &[-1.0, 0.0, 0.0]]);
        let b = RetrievalBundle::new(q, p, vec![Qrel { query: 0, passage: 1, rel: 1 }]).unwrap();
        let s = eval_retrieval(&b).unwrap();
        assert!((s.value - 1.0 / 3f64.log2()).abs() < 1e-15);
    }

    #[test]
    fn zero_norm_row_is_named() {
        let q = emb(&[&[1.0, 0.0]]);
        let p = emb(&[&[0.0, 1.0], &[0.0, 0.0]]);
        let b = RetrievalBundle::new(q, p, vec![Qrel { query: 0, passage: 0, rel: 1 }]).unwrap();
        match eval_retrieval(&b) {
            Err(Error::Degenerate(m)) => assert!(m.contains("passage row 1"), "{m}"),
            other => panic!("{other:?}"),
        }
    }

    #[test]
    fn ties_rank_by_passage_index() {
        let q = emb(&[&[1.0, 0.0]]);
        let p = emb(&[&[0.0, 1.0], &[2.0, 0.0], &[1.0, 0.0]]);
        let b = RetrievalBundle::new(q, p, vec![Qrel { query: 0, passage: 2, rel: 1 }]).unwrap();
        assert_eq!(rank_passages(&b, 10).unwrap(), vec![vec![1, 2, 0]]);
    }

    #[test]
    fn sts_with_gold_equal_to_cosines() {
        let x = emb(&[&[1.0, 0.0], &[1.0, 0.2], &[0.0, 1.0], &[1.0, 1.0], &[-1.0, 0.3], &[0.5, 0.5]]);
        let pairs = [(0, 1), (2, 3), (4, 5), (0, 4)];
        let mut ps: Vec<StsPair> = pairs
            .iter()
            .map(|&(a, b)| StsPair { a, b, score: 0.0 })
            .collect();
        let tmp = StsBundle::new(x.clone(), ps.clone()).unwrap();
        let sims = sts_similarities(&tmp).unwrap();
        for (p, s) in ps.iter_mut().zip(&sims) {
            p.score = s.exp();
        }
        let b = StsBundle::new(x, ps).unwrap();
        assert_eq!(eval_sts(&b).unwrap().value, 1.0);
    }

    #[test]
    fn duplicated_test_set_is_perfect() {
        let train = emb(&[&[-1.0, 0.1], &[-1.1, 0.0], &[1.0, 0.0], &[1.2, -0.1]]);
        let b = ClassificationBundle::new(
            train.clone(),
            vec![0, 0, 1, 1],
            train,
            vec![0, 0, 1, 1],
            vec!["a".into(), "b".into()],
        )
        .unwrap();
        let s = eval_classification(&b, &LogRegConfig::default()).unwrap();
        assert_eq!(s.value, 1.0);
        assert_eq!(s.metric.as_str(), "accuracy");
    }
}
