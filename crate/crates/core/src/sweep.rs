//! Dimension sweeps: for every reduction method and target dimension, reduce
//! each configured input and re-run its evaluation or estimator.
//!
//! Cells run in parallel but the report is assembled in a fixed order
//! (baseline first, then methods in config order, dims ascending, targets in
//! config order), so identical configs give byte-identical reports whatever
//! the thread count. A failing cell becomes an error record (`value: null`,
//! `meta.error`) and never aborts its neighbours.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::{json, Value};

use crate::dataset::{load_embeddings, load_task_bundle, BundlePaths, EmbeddingMatrix, TaskBundle, TaskKind};
use crate::error::{Error, Result};
use crate::intrinsic_dim::{twonn, DEFAULT_DISCARD_FRACTION};
use crate::isotropy::isoscore;
use crate::reducers::{apply_bundle, fit, fit_bundle, FittedReducer, Reducer, ReducerKind, DEFAULT_ISOMAP_NEIGHBORS};
use crate::taskeval::{evaluate, EvalOptions, LogRegConfig, DEFAULT_RESTARTS};

pub const BASELINE_METHOD: &str = "none";

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MethodConfig {
    pub kind: ReducerKind,
    /// Name used in records; defaults to the kind.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label: Option<String>,
    /// Column-subset seed for `random`; defaults to the sweep seed.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub seed: Option<u64>,
    /// Graph neighbours for `isomap`.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub n_neighbors: Option<usize>,
}

impl MethodConfig {
    pub fn new(kind: ReducerKind) -> Self {
        Self {
            kind,
            label: None,
            seed: None,
            n_neighbors: None,
        }
    }

    pub fn name(&self) -> &str {
        self.label.as_deref().unwrap_or(self.kind.as_str())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TaskConfig {
    pub name: String,
    pub kind: TaskKind,
    /// Directory holding the bundle files under their conventional names.
    pub dir: PathBuf,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MatrixConfig {
    pub name: String,
    pub path: PathBuf,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EstimatorConfig {
    #[serde(default = "yes")]
    pub twonn: bool,
    #[serde(default = "yes")]
    pub isoscore: bool,
    #[serde(default = "default_discard")]
    pub discard_fraction: f64,
}

fn yes() -> bool {
    true
}

fn default_discard() -> f64 {
    DEFAULT_DISCARD_FRACTION
}

impl Default for EstimatorConfig {
    fn default() -> Self {
        Self {
            twonn: true,
            isoscore: true,
            discard_fraction: DEFAULT_DISCARD_FRACTION,
        }
    }
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ReportFormat {
    #[default]
    Json,
    Csv,
}

impl FromStr for ReportFormat {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "json" => Ok(ReportFormat::Json),
            "csv" => Ok(ReportFormat::Csv),
            _ => Err(Error::param("format", format!("expected `json` or `csv`, got `{s}`"))),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepConfig {
    pub methods: Vec<MethodConfig>,
    /// Strictly ascending target dimensions; defaults to powers of two up to
    /// the source dimension, plus the source dimension itself.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub dims: Option<Vec<usize>>,
    #[serde(default)]
    pub tasks: Vec<TaskConfig>,
    /// Standalone matrices scored by the estimators.
    #[serde(default)]
    pub matrices: Vec<MatrixConfig>,
    #[serde(default)]
    pub estimators: EstimatorConfig,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "default_restarts")]
    pub restarts: usize,
    #[serde(default)]
    pub logreg: LogRegSettings,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub output: Option<PathBuf>,
    #[serde(default)]
    pub format: ReportFormat,
    /// Directory that relative input paths are resolved against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

fn default_restarts() -> usize {
    DEFAULT_RESTARTS
}

/// Serde mirror of [`LogRegConfig`] with per-field defaults.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct LogRegSettings {
    pub l2: f64,
    pub tol: f64,
    pub max_epochs: usize,
}

impl Default for LogRegSettings {
    fn default() -> Self {
        let d = LogRegConfig::default();
        Self {
            l2: d.l2,
            tol: d.tol,
            max_epochs: d.max_epochs,
        }
    }
}

impl From<LogRegSettings> for LogRegConfig {
    fn from(s: LogRegSettings) -> Self {
        LogRegConfig {
            l2: s.l2,
            tol: s.tol,
            max_epochs: s.max_epochs,
        }
    }
}

impl SweepConfig {
    pub fn new(methods: Vec<MethodConfig>) -> Self {
        Self {
            methods,
            dims: None,
            tasks: Vec::new(),
            matrices: Vec::new(),
            estimators: EstimatorConfig::default(),
            seed: 0,
            restarts: DEFAULT_RESTARTS,
            logreg: LogRegSettings::default(),
            output: None,
            format: ReportFormat::Json,
            base_dir: None,
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("sweep config: {e}")))
    }

    /// Reads a JSON config; relative paths inside it resolve against the
    /// file's directory.
    pub fn from_file(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut cfg = Self::from_json(&text)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        cfg.base_dir = path.parent().map(Path::to_path_buf);
        Ok(cfg)
    }

    fn resolve(&self, p: &Path) -> PathBuf {
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    fn eval_options(&self) -> EvalOptions {
        EvalOptions {
            seed: self.seed,
            logreg: self.logreg.into(),
            restarts: self.restarts,
        }
    }

    /// Checks everything that does not need the input data.
    pub fn validate(&self) -> Result<()> {
        if self.methods.is_empty() {
            return Err(Error::Config("sweep has no reduction methods".into()));
        }
        let estimators_on = self.estimators.twonn || self.estimators.isoscore;
        if self.tasks.is_empty() && (self.matrices.is_empty() || !estimators_on) {
            return Err(Error::Config("sweep has no tasks or estimator targets".into()));
        }
        if let Some(dims) = &self.dims {
            check_dims(dims, None)?;
        }
        if self.restarts == 0 {
            return Err(Error::Config("restarts must be at least 1".into()));
        }
        let mut labels = Vec::new();
        for m in &self.methods {
            check_name("method label", m.name())?;
            if m.name() == BASELINE_METHOD || labels.contains(&m.name()) {
                return Err(Error::Config(format!("duplicate method label `{}`", m.name())));
            }
            labels.push(m.name());
            if m.n_neighbors.is_some() && m.kind != ReducerKind::Isomap {
                return Err(Error::Config(format!("`n_neighbors` given for method `{}`", m.name())));
            }
            if m.seed.is_some() && m.kind != ReducerKind::Random {
                return Err(Error::Config(format!("`seed` given for method `{}`", m.name())));
            }
        }
        let mut names = Vec::new();
        for n in self.tasks.iter().map(|t| &t.name).chain(self.matrices.iter().map(|m| &m.name)) {
            check_name("target name", n)?;
            if names.contains(&n) {
                return Err(Error::Config(format!("duplicate target name `{n}`")));
            }
            names.push(n);
        }
        let f = self.estimators.discard_fraction;
        if !(0.0..1.0).contains(&f) {
            return Err(Error::Config(format!("discard_fraction {f} is outside [0, 1)")));
        }
        Ok(())
    }
}

/// Names end up in CSV cells and record targets, so keep them plain.
fn check_name(what: &str, name: &str) -> Result<()> {
    let ok = !name.is_empty()
        && name
            .chars()
            .all(|c| c.is_ascii_alphanumeric() || matches!(c, '_' | '-' | '.'));
    if ok {
        Ok(())
    } else {
        Err(Error::Config(format!(
            "{what} `{name}` must be non-empty ASCII letters, digits, `_`, `-` or `.`"
        )))
    }
}

fn check_dims(dims: &[usize], source_dim: Option<usize>) -> Result<()> {
    if dims.is_empty() {
        return Err(Error::Config("dims must not be empty".into()));
    }
    if dims[0] == 0 {
        return Err(Error::Config("dims must be at least 1".into()));
    }
    if let Some(w) = dims.windows(2).find(|w| w[0] >= w[1]) {
        return Err(Error::Config(format!(
            "dims must be strictly ascending ({} then {})",
            w[0], w[1]
        )));
    }
    if let Some(d) = source_dim {
        let max = *dims.last().unwrap();
        if max > d {
            return Err(Error::Config(format!(
                "dim {max} exceeds the source dimension {d}"
            )));
        }
    }
    Ok(())
}

/// Powers of two from 2 up to `d`, plus `d` itself.
pub fn default_dims(d: usize) -> Vec<usize> {
    let mut out: Vec<usize> = std::iter::successors(Some(2usize), |p| p.checked_mul(2))
        .take_while(|&p| p <= d)
        .collect();
    if out.last() != Some(&d) {
        out.push(d);
    }
    out
}

/// Loaded inputs, in config order.
#[derive(Clone, Debug)]
pub struct SweepInputs {
    pub tasks: Vec<(String, TaskBundle)>,
    pub matrices: Vec<(String, EmbeddingMatrix)>,
}

impl SweepInputs {
    pub fn load(cfg: &SweepConfig) -> Result<Self> {
        let tasks = cfg
            .tasks
            .iter()
            .map(|t| {
                let paths = BundlePaths::in_dir(t.kind, cfg.resolve(&t.dir));
                Ok((t.name.clone(), load_task_bundle(&paths)?))
            })
            .collect::<Result<_>>()?;
        let matrices = cfg
            .matrices
            .iter()
            .map(|m| Ok((m.name.clone(), load_embeddings(cfg.resolve(&m.path))?)))
            .collect::<Result<_>>()?;
        Ok(Self { tasks, matrices })
    }

    /// The common embedding dimension of every input.
    pub fn source_dim(&self) -> Result<usize> {
        let mut dims = self
            .tasks
            .iter()
            .map(|(n, b)| (n, b.dim()))
            .chain(self.matrices.iter().map(|(n, m)| (n, m.cols())));
        let (first_name, d) = dims
            .next()
            .ok_or_else(|| Error::Config("sweep has no inputs".into()))?;
        for (n, dn) in dims {
            if dn != d {
                return Err(Error::Config(format!(
                    "inputs disagree on dimension: `{first_name}` has {d}, `{n}` has {dn}"
                )));
            }
        }
        Ok(d)
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Record {
    pub method: String,
    pub dim: usize,
    pub target: String,
    pub metric: String,
    /// `None` (JSON `null`) for a failed cell; see `meta.error`.
    pub value: Option<f64>,
    pub meta: BTreeMap<String, Value>,
}

impl Record {
    fn failed(method: &str, dim: usize, target: &Target, err: &Error) -> Self {
        let mut meta = BTreeMap::new();
        meta.insert("error".into(), json!(err.to_string()));
        Record {
            method: method.into(),
            dim,
            target: target.name.clone(),
            metric: target.metric.into(),
            value: None,
            meta,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SweepReport {
    pub version: String,
    pub config: Value,
    pub records: Vec<Record>,
    pub notes: Vec<String>,
}

const NOTES: [&str; 4] = [
    "umap and tsne reductions are not implemented",
    "classification metric: test accuracy of L2-regularized multinomial logistic regression on raw embeddings",
    "clustering: k-means++ with best-of-restarts, k = number of gold classes",
    "retrieval: nDCG@10 with linear gain, cosine ranking, ties by passage index; <kind>:average targets are unweighted means over bundles",
];

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Source {
    Task(usize),
    Matrix(usize),
    /// Macro average over the listed task indices.
    Average(TaskKind),
}

#[derive(Clone, Debug)]
struct Target {
    name: String,
    metric: &'static str,
    source: Source,
    estimator: Option<Estimator>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Estimator {
    TwoNn,
    IsoScore,
}

const KIND_ORDER: [TaskKind; 4] = [
    TaskKind::Classification,
    TaskKind::Clustering,
    TaskKind::Retrieval,
    TaskKind::Sts,
];

fn targets(cfg: &SweepConfig, inputs: &SweepInputs) -> Vec<Target> {
    let mut out = Vec::new();
    for (i, (name, b)) in inputs.tasks.iter().enumerate() {
        out.push(Target {
            name: name.clone(),
            metric: crate::taskeval::Metric::for_task(b.kind()).as_str(),
            source: Source::Task(i),
            estimator: None,
        });
    }
    for kind in KIND_ORDER {
        if inputs.tasks.iter().filter(|(_, b)| b.kind() == kind).count() >= 2 {
            out.push(Target {
                name: format!("{}:average", kind.as_str()),
                metric: crate::taskeval::Metric::for_task(kind).as_str(),
                source: Source::Average(kind),
                estimator: None,
            });
        }
    }
    for (i, (name, _)) in inputs.matrices.iter().enumerate() {
        if cfg.estimators.twonn {
            out.push(Target {
                name: format!("twonn:{name}"),
                metric: "intrinsic_dim",
                source: Source::Matrix(i),
                estimator: Some(Estimator::TwoNn),
            });
        }
        if cfg.estimators.isoscore {
            out.push(Target {
                name: format!("isoscore:{name}"),
                metric: "isoscore",
                source: Source::Matrix(i),
                estimator: Some(Estimator::IsoScore),
            });
        }
    }
    out
}

/// Loads the inputs named in `cfg` and runs the sweep.
pub fn run_sweep(cfg: &SweepConfig) -> Result<SweepReport> {
    cfg.validate()?;
    let inputs = SweepInputs::load(cfg)?;
    run_sweep_with(cfg, &inputs)
}

/// Runs the sweep on already loaded inputs (which must match `cfg`'s task
/// and matrix lists in order).
pub fn run_sweep_with(cfg: &SweepConfig, inputs: &SweepInputs) -> Result<SweepReport> {
    cfg.validate()?;
    if inputs.tasks.len() != cfg.tasks.len() || inputs.matrices.len() != cfg.matrices.len() {
        return Err(Error::Contract("loaded inputs do not match the sweep config".into()));
    }
    for ((name, b), t) in inputs.tasks.iter().zip(&cfg.tasks) {
        if b.kind() != t.kind {
            return Err(Error::Config(format!(
                "task `{name}` is {} but configured as {}",
                b.kind().as_str(),
                t.kind.as_str()
            )));
        }
    }
    let source_dim = inputs.source_dim()?;
    let dims = cfg.dims.clone().unwrap_or_else(|| default_dims(source_dim));
    check_dims(&dims, Some(source_dim))?;
    let targets = targets(cfg, inputs);

    let mut echo = cfg.clone();
    echo.dims = Some(dims.clone());
    let config = serde_json::to_value(&echo).map_err(|e| Error::Numerical(e.to_string()))?;

    // One job per (method or baseline, input). Each job yields one value per
    // dim (a single value for the baseline).
    let n_inputs = inputs.tasks.len() + inputs.matrices.len();
    let jobs: Vec<(Option<usize>, usize)> = std::iter::once(None)
        .chain((0..cfg.methods.len()).map(Some))
        .flat_map(|m| (0..n_inputs).map(move |i| (m, i)))
        .collect();
    let results: Vec<Vec<Vec<Cell>>> = jobs
        .par_iter()
        .map(|&(m, i)| {
            let job_dims = match m {
                None => vec![source_dim],
                Some(_) => dims.clone(),
            };
            run_job(cfg, inputs, m.map(|m| &cfg.methods[m]), i, &job_dims)
        })
        .collect();

    // cells[method_slot][input][dim_idx] where slot 0 is the baseline.
    let mut cells: Vec<Vec<Vec<Vec<Cell>>>> = vec![Vec::new(); cfg.methods.len() + 1];
    for (&(m, _), r) in jobs.iter().zip(results) {
        cells[m.map_or(0, |m| m + 1)].push(r);
    }

    let mut records = Vec::new();
    for slot in 0..=cfg.methods.len() {
        let (method, slot_dims): (&str, Vec<usize>) = if slot == 0 {
            (BASELINE_METHOD, vec![source_dim])
        } else {
            (cfg.methods[slot - 1].name(), dims.clone())
        };
        for (di, &d) in slot_dims.iter().enumerate() {
            for t in &targets {
                records.push(assemble(method, d, t, &cells[slot], di, inputs));
            }
        }
    }
    Ok(SweepReport {
        version: env!("CARGO_PKG_VERSION").to_string(),
        config,
        records,
        notes: NOTES.iter().map(|s| s.to_string()).collect(),
    })
}

/// Outcome of one input at one dim: one entry per estimator for matrices,
/// one for tasks.
type Cell = std::result::Result<(f64, BTreeMap<String, Value>), String>;

fn run_job(
    cfg: &SweepConfig,
    inputs: &SweepInputs,
    method: Option<&MethodConfig>,
    input: usize,
    dims: &[usize],
) -> Vec<Vec<Cell>> {
    let n_tasks = inputs.tasks.len();
    let name = if input < n_tasks {
        &inputs.tasks[input].0
    } else {
        &inputs.matrices[input - n_tasks].0
    };
    let reducer = method.map(|m| reducer_for(cfg, m, name, *dims.last().unwrap()));

    if input < n_tasks {
        let bundle = &inputs.tasks[input].1;
        let opts = cfg.eval_options();
        let Some(r) = reducer else {
            return vec![vec![eval_task(bundle, &opts, &BTreeMap::new())]];
        };
        match fit_bundle(&r, bundle) {
            Err(e) => dims.iter().map(|_| vec![Err(e.to_string())]).collect(),
            Ok((fitted, stacked)) => dims
                .iter()
                .map(|&d| {
                    let cell = fitted
                        .truncate(d)
                        .and_then(|f| apply_bundle(&f, &stacked, bundle))
                        .map_err(|e| e.to_string())
                        .and_then(|reduced| eval_task(&reduced, &opts, &reducer_meta(&r)));
                    vec![cell]
                })
                .collect(),
        }
    } else {
        let x = &inputs.matrices[input - n_tasks].1;
        let Some(r) = reducer else {
            return vec![estimate(cfg, x, &BTreeMap::new())];
        };
        match fit(&r, x) {
            Err(e) => dims
                .iter()
                .map(|_| estimators(cfg).map(|_| Err(e.to_string())).collect())
                .collect(),
            Ok(fitted) => dims
                .iter()
                .map(|&d| match reduce_with(&fitted, d, x) {
                    Ok(reduced) => estimate(cfg, &reduced, &reducer_meta(&r)),
                    Err(e) => estimators(cfg).map(|_| Err(e.to_string())).collect(),
                })
                .collect(),
        }
    }
}

fn reduce_with(fitted: &FittedReducer, d: usize, x: &EmbeddingMatrix) -> Result<EmbeddingMatrix> {
    fitted.truncate(d)?.apply(x)
}

fn reducer_for(cfg: &SweepConfig, m: &MethodConfig, input_name: &str, max_dim: usize) -> Reducer {
    match m.kind {
        ReducerKind::Random => Reducer::random(max_dim, m.seed.unwrap_or(cfg.seed), input_name),
        ReducerKind::Isomap => Reducer::isomap(max_dim, m.n_neighbors.unwrap_or(DEFAULT_ISOMAP_NEIGHBORS)),
        kind => Reducer::new(kind, max_dim),
    }
}

fn reducer_meta(r: &Reducer) -> BTreeMap<String, Value> {
    let mut meta = BTreeMap::new();
    match r.kind {
        ReducerKind::Random => {
            meta.insert("reducer_seed".into(), json!(r.seed));
        }
        ReducerKind::Isomap => {
            meta.insert("n_neighbors".into(), json!(r.n_neighbors));
        }
        _ => {}
    }
    meta
}

fn eval_task(b: &TaskBundle, opts: &EvalOptions, extra: &BTreeMap<String, Value>) -> Cell {
    let s = evaluate(b, opts).map_err(|e| e.to_string())?;
    let mut meta = s.meta;
    meta.insert("task".into(), json!(s.task.as_str()));
    meta.insert("n_items".into(), json!(s.n_items));
    meta.extend(extra.clone());
    Ok((s.value, meta))
}

fn estimators(cfg: &SweepConfig) -> impl Iterator<Item = Estimator> {
    [
        cfg.estimators.twonn.then_some(Estimator::TwoNn),
        cfg.estimators.isoscore.then_some(Estimator::IsoScore),
    ]
    .into_iter()
    .flatten()
}

fn estimate(cfg: &SweepConfig, x: &EmbeddingMatrix, extra: &BTreeMap<String, Value>) -> Vec<Cell> {
    estimators(cfg)
        .map(|e| {
            let mut meta = extra.clone();
            let value = match e {
                Estimator::TwoNn => {
                    let est = twonn(x, cfg.estimators.discard_fraction).map_err(|e| e.to_string())?;
                    meta.insert("n_used".into(), json!(est.n_used));
                    meta.insert("discard_fraction".into(), json!(est.discard_fraction));
                    meta.insert("mle".into(), json!(est.mle));
                    meta.insert("n_duplicates".into(), json!(est.n_duplicates));
                    meta.insert("exceeds_ambient".into(), json!(est.exceeds_ambient));
                    est.id
                }
                Estimator::IsoScore => {
                    let rep = isoscore(x).map_err(|e| e.to_string())?;
                    meta.insert("raw_isoscore".into(), json!(rep.raw_isoscore));
                    meta.insert("defect".into(), json!(rep.defect));
                    meta.insert("n_points".into(), json!(rep.n_points));
                    rep.isoscore
                }
            };
            Ok((value, meta))
        })
        .collect()
}

fn assemble(
    method: &str,
    dim: usize,
    t: &Target,
    cells: &[Vec<Vec<Cell>>],
    di: usize,
    inputs: &SweepInputs,
) -> Record {
    let n_tasks = inputs.tasks.len();
    let cell: Cell = match t.source {
        Source::Task(i) => cells[i][di][0].clone(),
        Source::Matrix(i) => {
            let slot = match t.estimator {
                // Estimator cells are stored twonn-first when both are enabled.
                Some(Estimator::IsoScore) if cells[n_tasks + i][di].len() == 2 => 1,
                _ => 0,
            };
            cells[n_tasks + i][di][slot].clone()
        }
        Source::Average(kind) => {
            let members: Vec<usize> = (0..n_tasks)
                .filter(|&i| inputs.tasks[i].1.kind() == kind)
                .collect();
            let mut sum = 0.0;
            let mut failed = Vec::new();
            for &i in &members {
                match &cells[i][di][0] {
                    Ok((v, _)) => sum += v,
                    Err(_) => failed.push(inputs.tasks[i].0.clone()),
                }
            }
            let names: Vec<&str> = members.iter().map(|&i| inputs.tasks[i].0.as_str()).collect();
            if failed.is_empty() {
                let mut meta = BTreeMap::new();
                meta.insert("components".into(), json!(names));
                meta.insert("weighting".into(), json!("unweighted mean"));
                Ok((sum / members.len() as f64, meta))
            } else {
                Err(format!("component cells failed: {}", failed.join(", ")))
            }
        }
    };
    match cell {
        Ok((value, meta)) => Record {
            method: method.into(),
            dim,
            target: t.name.clone(),
            metric: t.metric.into(),
            value: Some(value),
            meta,
        },
        Err(msg) => Record::failed(method, dim, t, &Error::Degenerate(msg)),
    }
}

impl SweepReport {
    pub fn to_json(&self) -> String {
        let mut s = serde_json::to_string_pretty(self).expect("report values are serializable");
        s.push('\n');
        s
    }

    /// Header `method,dim,target,metric,value`; failed cells leave `value`
    /// empty. Values use the same shortest round-trip formatting as JSON.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("method,dim,target,metric,value\n");
        for r in &self.records {
            let v = r.value.map(|v| json!(v).to_string()).unwrap_or_default();
            let _ = writeln!(s, "{},{},{},{},{}", r.method, r.dim, r.target, r.metric, v);
        }
        s
    }

    pub fn render(&self, format: ReportFormat) -> String {
        match format {
            ReportFormat::Json => self.to_json(),
            ReportFormat::Csv => self.to_csv(),
        }
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Config(format!("sweep report: {e}")))
    }

    /// The record for one cell, if present.
    pub fn find(&self, method: &str, dim: usize, target: &str) -> Option<&Record> {
        self.records
            .iter()
            .find(|r| r.method == method && r.dim == dim && r.target == target)
    }
}

pub fn emit_report(report: &SweepReport, format: ReportFormat, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    fs::write(path, report.render(format)).map_err(|e| Error::io(path, e))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn default_grid() {
        assert_eq!(default_dims(8), vec![2, 4, 8]);
        assert_eq!(default_dims(10), vec![2, 4, 8, 10]);
        assert_eq!(default_dims(1), vec![1]);
    }

    #[test]
    fn dims_validation() {
        assert!(check_dims(&[], None).is_err());
        assert!(check_dims(&[0, 2], None).is_err());
        assert!(check_dims(&[4, 2], None).is_err());
        assert!(check_dims(&[2, 2], None).is_err());
        assert!(check_dims(&[2, 16], Some(8)).is_err());
        assert!(check_dims(&[2, 8], Some(8)).is_ok());
    }

    #[test]
    fn config_rejects_empty_and_duplicates() {
        let mut c = SweepConfig::new(vec![]);
        c.matrices.push(MatrixConfig {
            name: "m".into(),
            path: "m.emb".into(),
        });
        assert!(c.validate().is_err());
        c.methods = vec![MethodConfig::new(ReducerKind::First), MethodConfig::new(ReducerKind::First)];
        assert!(c.validate().is_err());
        c.methods.pop();
        assert!(c.validate().is_ok());
        c.estimators.twonn = false;
        c.estimators.isoscore = false;
        assert!(c.validate().is_err());
    }

    #[test]
    fn config_json_defaults() {
        let c = SweepConfig::from_json(
            r#"{"methods":[{"kind":"first"}],"matrices":[{"name":"x","path":"x.emb"}]}"#,
        )
        .unwrap();
        assert_eq!(c.seed, 0);
        assert_eq!(c.restarts, DEFAULT_RESTARTS);
        assert!(c.estimators.twonn && c.estimators.isoscore);
        assert!(SweepConfig::from_json(r#"{"methods":[],"bogus":1}"#).is_err());
        assert!(SweepConfig::from_json(r#"{"methods":[{"kind":"umap"}]}"#).is_err());
    }
}
