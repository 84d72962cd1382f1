//! Task bundles: embeddings plus ground truth, validated on construction.
//!
//! Sidecars are UTF-8 JSONL, one object per line:
//!
//! * labels: `{"row": <int>, "label": <string>}`
//! * qrels: `{"query": <int>, "passage": <int>, "rel": <int>}`
//! * STS pairs: `{"a": <int>, "b": <int>, "score": <float>}`

use std::collections::{BTreeSet, HashMap};
use std::fs;
use std::path::{Path, PathBuf};

use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};

use super::{load_embeddings, save_embeddings, EmbeddingMatrix, TaskKind};
use crate::error::{Error, Result};

#[derive(Clone, Debug, PartialEq)]
pub struct ClassificationBundle {
    train: EmbeddingMatrix,
    train_labels: Vec<usize>,
    test: EmbeddingMatrix,
    test_labels: Vec<usize>,
    label_names: Vec<String>,
}

impl ClassificationBundle {
    /// Label ids index into `label_names`.
    pub fn new(
        train: EmbeddingMatrix,
        train_labels: Vec<usize>,
        test: EmbeddingMatrix,
        test_labels: Vec<usize>,
        label_names: Vec<String>,
    ) -> Result<Self> {
        check_label_ids("train", &train_labels, train.rows(), label_names.len())?;
        check_label_ids("test", &test_labels, test.rows(), label_names.len())?;
        if train.cols() != test.cols() {
            return Err(Error::Contract(format!(
                "train has {} columns but test has {}",
                train.cols(),
                test.cols()
            )));
        }
        let seen: BTreeSet<usize> = train_labels.iter().copied().collect();
        if let Some(pos) = test_labels.iter().position(|l| !seen.contains(l)) {
            return Err(Error::Contract(format!(
                "test row {pos} has label `{}` absent from the training set",
                label_names[test_labels[pos]]
            )));
        }
        Ok(Self {
            train,
            train_labels,
            test,
            test_labels,
            label_names,
        })
    }

    pub fn train(&self) -> &EmbeddingMatrix {
        &self.train
    }
    pub fn train_labels(&self) -> &[usize] {
        &self.train_labels
    }
    pub fn test(&self) -> &EmbeddingMatrix {
        &self.test
    }
    pub fn test_labels(&self) -> &[usize] {
        &self.test_labels
    }
    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }

    /// Same labels over replacement embeddings (e.g. after reduction).
    pub fn with_embeddings(&self, train: EmbeddingMatrix, test: EmbeddingMatrix) -> Result<Self> {
        Self::new(
            train,
            self.train_labels.clone(),
            test,
            self.test_labels.clone(),
            self.label_names.clone(),
        )
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct ClusteringBundle {
    points: EmbeddingMatrix,
    gold_labels: Vec<usize>,
    label_names: Vec<String>,
}

impl ClusteringBundle {
    pub fn new(
        points: EmbeddingMatrix,
        gold_labels: Vec<usize>,
        label_names: Vec<String>,
    ) -> Result<Self> {
        check_label_ids("gold", &gold_labels, points.rows(), label_names.len())?;
        let distinct: BTreeSet<usize> = gold_labels.iter().copied().collect();
        if distinct.len() < 2 {
            return Err(Error::Degenerate(format!(
                "clustering needs at least 2 distinct gold labels, found {}",
                distinct.len()
            )));
        }
        Ok(Self {
            points,
            gold_labels,
            label_names,
        })
    }

    pub fn points(&self) -> &EmbeddingMatrix {
        &self.points
    }
    pub fn gold_labels(&self) -> &[usize] {
        &self.gold_labels
    }
    pub fn label_names(&self) -> &[String] {
        &self.label_names
    }
    pub fn n_classes(&self) -> usize {
        self.gold_labels.iter().collect::<BTreeSet<_>>().len()
    }

    pub fn with_embeddings(&self, points: EmbeddingMatrix) -> Result<Self> {
        Self::new(points, self.gold_labels.clone(), self.label_names.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Qrel {
    pub query: usize,
    pub passage: usize,
    pub rel: u32,
}

#[derive(Clone, Debug, PartialEq)]
pub struct RetrievalBundle {
    queries: EmbeddingMatrix,
    passages: EmbeddingMatrix,
    qrels: Vec<Qrel>,
}

impl RetrievalBundle {
    pub fn new(queries: EmbeddingMatrix, passages: EmbeddingMatrix, qrels: Vec<Qrel>) -> Result<Self> {
        if queries.cols() != passages.cols() {
            return Err(Error::Contract(format!(
                "queries have {} columns but passages have {}",
                queries.cols(),
                passages.cols()
            )));
        }
        let problems = qrel_problems(&qrels, queries.rows(), passages.rows());
        if let Some((_, reason)) = problems.first() {
            return Err(Error::Contract(reason.clone()));
        }
        if let Some(q) = unjudged_queries(&qrels, queries.rows()).first() {
            return Err(Error::Contract(format!("query {q} has no judged passage")));
        }
        Ok(Self {
            queries,
            passages,
            qrels,
        })
    }

    pub fn queries(&self) -> &EmbeddingMatrix {
        &self.queries
    }
    pub fn passages(&self) -> &EmbeddingMatrix {
        &self.passages
    }
    pub fn qrels(&self) -> &[Qrel] {
        &self.qrels
    }

    pub fn with_embeddings(&self, queries: EmbeddingMatrix, passages: EmbeddingMatrix) -> Result<Self> {
        Self::new(queries, passages, self.qrels.clone())
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct StsPair {
    pub a: usize,
    pub b: usize,
    pub score: f64,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StsBundle {
    points: EmbeddingMatrix,
    pairs: Vec<StsPair>,
}

impl StsBundle {
    pub fn new(points: EmbeddingMatrix, pairs: Vec<StsPair>) -> Result<Self> {
        let problems = sts_problems(&pairs, points.rows());
        if let Some((_, reason)) = problems.first() {
            return Err(Error::Contract(reason.clone()));
        }
        if pairs.len() < 3 {
            return Err(Error::InsufficientData(format!(
                "STS needs at least 3 pairs, got {}",
                pairs.len()
            )));
        }
        Ok(Self { points, pairs })
    }

    pub fn points(&self) -> &EmbeddingMatrix {
        &self.points
    }
    pub fn pairs(&self) -> &[StsPair] {
        &self.pairs
    }

    pub fn with_embeddings(&self, points: EmbeddingMatrix) -> Result<Self> {
        Self::new(points, self.pairs.clone())
    }
}

#[derive(Clone, Debug, PartialEq)]
pub enum TaskBundle {
    Classification(ClassificationBundle),
    Clustering(ClusteringBundle),
    Retrieval(RetrievalBundle),
    Sts(StsBundle),
}

impl TaskBundle {
    pub fn kind(&self) -> TaskKind {
        match self {
            TaskBundle::Classification(_) => TaskKind::Classification,
            TaskBundle::Clustering(_) => TaskKind::Clustering,
            TaskBundle::Retrieval(_) => TaskKind::Retrieval,
            TaskBundle::Sts(_) => TaskKind::Sts,
        }
    }

    /// Embedding dimension shared by every matrix in the bundle.
    pub fn dim(&self) -> usize {
        self.matrices()[0].cols()
    }

    /// Every embedding matrix in the bundle, in a fixed order.
    pub fn matrices(&self) -> Vec<&EmbeddingMatrix> {
        match self {
            TaskBundle::Classification(b) => vec![&b.train, &b.test],
            TaskBundle::Clustering(b) => vec![&b.points],
            TaskBundle::Retrieval(b) => vec![&b.queries, &b.passages],
            TaskBundle::Sts(b) => vec![&b.points],
        }
    }

    /// Rebuilds the bundle over replacement matrices given in
    /// [`matrices`](Self::matrices) order.
    pub fn with_matrices(&self, mut m: Vec<EmbeddingMatrix>) -> Result<Self> {
        let expected = self.matrices().len();
        if m.len() != expected {
            return Err(Error::Contract(format!(
                "expected {expected} matrices, got {}",
                m.len()
            )));
        }
        Ok(match self {
            TaskBundle::Classification(b) => {
                let test = m.pop().unwrap();
                let train = m.pop().unwrap();
                TaskBundle::Classification(b.with_embeddings(train, test)?)
            }
            TaskBundle::Clustering(b) => TaskBundle::Clustering(b.with_embeddings(m.pop().unwrap())?),
            TaskBundle::Retrieval(b) => {
                let passages = m.pop().unwrap();
                let queries = m.pop().unwrap();
                TaskBundle::Retrieval(b.with_embeddings(queries, passages)?)
            }
            TaskBundle::Sts(b) => TaskBundle::Sts(b.with_embeddings(m.pop().unwrap())?),
        })
    }
}

/// File locations for one bundle.
#[derive(Clone, Debug, PartialEq, Eq)]
pub enum BundlePaths {
    Classification {
        train: PathBuf,
        train_labels: PathBuf,
        test: PathBuf,
        test_labels: PathBuf,
    },
    Clustering {
        points: PathBuf,
        labels: PathBuf,
    },
    Retrieval {
        queries: PathBuf,
        passages: PathBuf,
        qrels: PathBuf,
    },
    Sts {
        points: PathBuf,
        pairs: PathBuf,
    },
}

impl BundlePaths {
    /// Conventional file names inside a bundle directory.
    pub fn in_dir(kind: TaskKind, dir: impl AsRef<Path>) -> Self {
        let d = dir.as_ref();
        match kind {
            TaskKind::Classification => BundlePaths::Classification {
                train: d.join("train.emb"),
                train_labels: d.join("train.labels.jsonl"),
                test: d.join("test.emb"),
                test_labels: d.join("test.labels.jsonl"),
            },
            TaskKind::Clustering => BundlePaths::Clustering {
                points: d.join("points.emb"),
                labels: d.join("labels.jsonl"),
            },
            TaskKind::Retrieval => BundlePaths::Retrieval {
                queries: d.join("queries.emb"),
                passages: d.join("passages.emb"),
                qrels: d.join("qrels.jsonl"),
            },
            TaskKind::Sts => BundlePaths::Sts {
                points: d.join("points.emb"),
                pairs: d.join("pairs.jsonl"),
            },
        }
    }

    pub fn kind(&self) -> TaskKind {
        match self {
            BundlePaths::Classification { .. } => TaskKind::Classification,
            BundlePaths::Clustering { .. } => TaskKind::Clustering,
            BundlePaths::Retrieval { .. } => TaskKind::Retrieval,
            BundlePaths::Sts { .. } => TaskKind::Sts,
        }
    }
}

#[derive(Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct LabelLine {
    row: usize,
    label: String,
}

/// Loads and fully validates a bundle. Sidecar problems are reported with
/// 1-based line numbers.
pub fn load_task_bundle(paths: &BundlePaths) -> Result<TaskBundle> {
    match paths {
        BundlePaths::Classification {
            train,
            train_labels,
            test,
            test_labels,
        } => {
            let train_m = load_embeddings(train)?;
            let test_m = load_embeddings(test)?;
            if train_m.cols() != test_m.cols() {
                return Err(Error::Validation {
                    path: test.clone(),
                    lines: vec![],
                    reason: format!(
                        "test has {} columns but train has {}",
                        test_m.cols(),
                        train_m.cols()
                    ),
                });
            }
            let train_names = read_labels(train_labels, train_m.rows())?;
            let test_names = read_labels(test_labels, test_m.rows())?;
            let mut names: Vec<String> = Vec::new();
            let mut index: HashMap<String, usize> = HashMap::new();
            let train_ids: Vec<usize> = train_names
                .iter()
                .map(|(_, n)| {
                    *index.entry(n.clone()).or_insert_with(|| {
                        names.push(n.clone());
                        names.len() - 1
                    })
                })
                .collect();
            let mut unknown = Vec::new();
            let mut test_ids = Vec::with_capacity(test_names.len());
            for (line, n) in &test_names {
                match index.get(n) {
                    Some(&id) => test_ids.push(id),
                    None => unknown.push(*line),
                }
            }
            if !unknown.is_empty() {
                return Err(Error::Validation {
                    path: test_labels.clone(),
                    lines: unknown,
                    reason: "test label not present in the training set".into(),
                });
            }
            Ok(TaskBundle::Classification(ClassificationBundle::new(
                train_m, train_ids, test_m, test_ids, names,
            )?))
        }
        BundlePaths::Clustering { points, labels } => {
            let m = load_embeddings(points)?;
            let named = read_labels(labels, m.rows())?;
            let mut names: Vec<String> = Vec::new();
            let mut index: HashMap<String, usize> = HashMap::new();
            let ids: Vec<usize> = named
                .iter()
                .map(|(_, n)| {
                    *index.entry(n.clone()).or_insert_with(|| {
                        names.push(n.clone());
                        names.len() - 1
                    })
                })
                .collect();
            if names.len() < 2 {
                return Err(Error::Validation {
                    path: labels.clone(),
                    lines: vec![],
                    reason: format!("need at least 2 distinct labels, found {}", names.len()),
                });
            }
            Ok(TaskBundle::Clustering(ClusteringBundle::new(m, ids, names)?))
        }
        BundlePaths::Retrieval {
            queries,
            passages,
            qrels,
        } => {
            let q = load_embeddings(queries)?;
            let p = load_embeddings(passages)?;
            if q.cols() != p.cols() {
                return Err(Error::Validation {
                    path: passages.clone(),
                    lines: vec![],
                    reason: format!(
                        "passages have {} columns but queries have {}",
                        p.cols(),
                        q.cols()
                    ),
                });
            }
            let lines: Vec<(usize, Qrel)> = read_jsonl(qrels)?;
            let judgments: Vec<Qrel> = lines.iter().map(|(_, r)| *r).collect();
            let problems = qrel_problems(&judgments, q.rows(), p.rows());
            if !problems.is_empty() {
                return Err(Error::Validation {
                    path: qrels.clone(),
                    lines: problems.iter().map(|(i, _)| lines[*i].0).collect(),
                    reason: problems[0].1.clone(),
                });
            }
            let missing = unjudged_queries(&judgments, q.rows());
            if !missing.is_empty() {
                let shown: Vec<String> = missing.iter().take(10).map(|q| q.to_string()).collect();
                return Err(Error::Validation {
                    path: qrels.clone(),
                    lines: vec![],
                    reason: format!(
                        "{} queries have no judged passage (first: {})",
                        missing.len(),
                        shown.join(", ")
                    ),
                });
            }
            Ok(TaskBundle::Retrieval(RetrievalBundle::new(q, p, judgments)?))
        }
        BundlePaths::Sts { points, pairs } => {
            let m = load_embeddings(points)?;
            let lines: Vec<(usize, StsPair)> = read_jsonl(pairs)?;
            let list: Vec<StsPair> = lines.iter().map(|(_, p)| *p).collect();
            let problems = sts_problems(&list, m.rows());
            if !problems.is_empty() {
                return Err(Error::Validation {
                    path: pairs.clone(),
                    lines: problems.iter().map(|(i, _)| lines[*i].0).collect(),
                    reason: problems[0].1.clone(),
                });
            }
            if list.len() < 3 {
                return Err(Error::Validation {
                    path: pairs.clone(),
                    lines: vec![],
                    reason: format!("too few pairs: STS needs at least 3, got {}", list.len()),
                });
            }
            Ok(TaskBundle::Sts(StsBundle::new(m, list)?))
        }
    }
}

/// Writes a bundle under `dir` using [`BundlePaths::in_dir`] names.
pub fn save_task_bundle(bundle: &TaskBundle, dir: impl AsRef<Path>) -> Result<BundlePaths> {
    let dir = dir.as_ref();
    fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let paths = BundlePaths::in_dir(bundle.kind(), dir);
    match (bundle, &paths) {
        (
            TaskBundle::Classification(b),
            BundlePaths::Classification {
                train,
                train_labels,
                test,
                test_labels,
            },
        ) => {
            save_embeddings(&b.train, train)?;
            save_embeddings(&b.test, test)?;
            write_labels(train_labels, &b.train_labels, &b.label_names)?;
            write_labels(test_labels, &b.test_labels, &b.label_names)?;
        }
        (TaskBundle::Clustering(b), BundlePaths::Clustering { points, labels }) => {
            save_embeddings(&b.points, points)?;
            write_labels(labels, &b.gold_labels, &b.label_names)?;
        }
        (
            TaskBundle::Retrieval(b),
            BundlePaths::Retrieval {
                queries,
                passages,
                qrels,
            },
        ) => {
            save_embeddings(&b.queries, queries)?;
            save_embeddings(&b.passages, passages)?;
            write_jsonl(qrels, &b.qrels)?;
        }
        (TaskBundle::Sts(b), BundlePaths::Sts { points, pairs }) => {
            save_embeddings(&b.points, points)?;
            write_jsonl(pairs, &b.pairs)?;
        }
        _ => unreachable!("paths built from the bundle kind"),
    }
    Ok(paths)
}

fn check_label_ids(what: &str, ids: &[usize], rows: usize, n_names: usize) -> Result<()> {
    if ids.len() != rows {
        return Err(Error::Contract(format!(
            "{what}: {} labels for {rows} rows",
            ids.len()
        )));
    }
    if let Some(pos) = ids.iter().position(|&l| l >= n_names) {
        return Err(Error::Contract(format!(
            "{what}: label id {} at row {pos} has no name",
            ids[pos]
        )));
    }
    Ok(())
}

/// Indices into `qrels` that reference missing rows or repeat a
/// (query, passage) judgment, each with a reason.
fn qrel_problems(qrels: &[Qrel], n_queries: usize, n_passages: usize) -> Vec<(usize, String)> {
    let mut seen = BTreeSet::new();
    let mut out = Vec::new();
    for (i, r) in qrels.iter().enumerate() {
        if r.query >= n_queries {
            out.push((i, format!("query {} out of range ({n_queries} queries)", r.query)));
        } else if r.passage >= n_passages {
            out.push((
                i,
                format!("passage {} out of range ({n_passages} passages)", r.passage),
            ));
        } else if !seen.insert((r.query, r.passage)) {
            out.push((
                i,
                format!("duplicate judgment for query {} / passage {}", r.query, r.passage),
            ));
        }
    }
    out
}

fn unjudged_queries(qrels: &[Qrel], n_queries: usize) -> Vec<usize> {
    let judged: BTreeSet<usize> = qrels.iter().map(|r| r.query).collect();
    (0..n_queries).filter(|q| !judged.contains(q)).collect()
}

fn sts_problems(pairs: &[StsPair], rows: usize) -> Vec<(usize, String)> {
    let mut out = Vec::new();
    for (i, p) in pairs.iter().enumerate() {
        if p.a >= rows || p.b >= rows {
            out.push((i, format!("pair ({}, {}) out of range ({rows} rows)", p.a, p.b)));
        } else if !p.score.is_finite() {
            out.push((i, "non-finite gold score".into()));
        }
    }
    out
}

/// Row-ordered label names; every row must be labeled exactly once.
fn read_labels(path: &Path, rows: usize) -> Result<Vec<(usize, String)>> {
    let lines: Vec<(usize, LabelLine)> = read_jsonl(path)?;
    let mut by_row: Vec<Option<(usize, String)>> = vec![None; rows];
    let mut bad = Vec::new();
    let mut reason = String::new();
    for (line, l) in lines {
        if l.row >= rows {
            if bad.is_empty() {
                reason = format!("row {} out of range ({rows} rows)", l.row);
            }
            bad.push(line);
        } else if by_row[l.row].is_some() {
            if bad.is_empty() {
                reason = format!("row {} labeled more than once", l.row);
            }
            bad.push(line);
        } else {
            by_row[l.row] = Some((line, l.label));
        }
    }
    if !bad.is_empty() {
        return Err(Error::Validation {
            path: path.to_path_buf(),
            lines: bad,
            reason,
        });
    }
    let unlabeled: Vec<usize> = (0..rows).filter(|&r| by_row[r].is_none()).collect();
    if !unlabeled.is_empty() {
        return Err(Error::Validation {
            path: path.to_path_buf(),
            lines: vec![],
            reason: format!(
                "label count does not match row count: {} of {rows} rows unlabeled (first: row {})",
                unlabeled.len(),
                unlabeled[0]
            ),
        });
    }
    Ok(by_row.into_iter().map(Option::unwrap).collect())
}

fn read_jsonl<T: DeserializeOwned>(path: &Path) -> Result<Vec<(usize, T)>> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut out = Vec::new();
    let mut bad = Vec::new();
    let mut first_reason = String::new();
    for (i, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        match serde_json::from_str::<T>(line) {
            Ok(v) => out.push((i + 1, v)),
            Err(e) => {
                if bad.is_empty() {
                    first_reason = format!("malformed record: {e}");
                }
                bad.push(i + 1);
            }
        }
    }
    if !bad.is_empty() {
        return Err(Error::Validation {
            path: path.to_path_buf(),
            lines: bad,
            reason: first_reason,
        });
    }
    Ok(out)
}

fn write_jsonl<T: Serialize>(path: &Path, items: &[T]) -> Result<()> {
    let mut text = String::new();
    for item in items {
        text.push_str(&serde_json::to_string(item).expect("plain records serialize"));
        text.push('\n');
    }
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

fn write_labels(path: &Path, ids: &[usize], names: &[String]) -> Result<()> {
    let lines: Vec<LabelLine> = ids
        .iter()
        .enumerate()
        .map(|(row, &id)| LabelLine {
            row,
            label: names[id].clone(),
        })
        .collect();
    write_jsonl(path, &lines)
}
