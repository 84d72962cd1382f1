//! `embkit`: command-line front end for the embedding-redundancy toolkit.
//!
//! Exit codes: 0 on success, 1 for invalid input or flags (one-line
//! diagnostic on stderr), 2 for internal failures.

use std::fs;
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::Serialize;
use serde_json::json;

use embkit_core::dataset::{
    load_embeddings, load_task_bundle, save_embeddings, save_task_bundle, BundlePaths, TaskBundle, TaskKind,
};
use embkit_core::intrinsic_dim::{twonn, DEFAULT_DISCARD_FRACTION};
use embkit_core::isotropy::isoscore;
use embkit_core::reducers::{fit_apply, Reducer, ReducerKind, DEFAULT_ISOMAP_NEIGHBORS};
use embkit_core::sweep::{emit_report, run_sweep, ReportFormat, SweepConfig};
use embkit_core::synthgen::{generate, SynthOutput, SynthSpec};
use embkit_core::taskeval::{evaluate, EvalOptions, LogRegConfig, DEFAULT_RESTARTS};
use embkit_core::Error;

#[derive(Parser, Debug)]
#[command(name = "embkit", version, about = "Measure and exploit dimensional redundancy in text embeddings")]
struct Cli {
    /// Worker threads (default: machine parallelism). Results do not depend on it.
    #[arg(long, global = true, env = "EMBKIT_THREADS", value_parser = clap::value_parser!(u32).range(1..))]
    threads: Option<u32>,

    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Reduce an EMB1 matrix to fewer dimensions.
    Reduce(ReduceArgs),
    /// Estimate intrinsic dimension with TwoNN.
    Id(IdArgs),
    /// Compute the IsoScore of a matrix.
    Isoscore(InputArgs),
    /// Score a task bundle.
    Eval(EvalArgs),
    /// Generate synthetic data with known ground truth.
    Synth(SynthArgs),
    /// Run a dimension sweep described by a JSON config.
    Sweep(SweepArgs),
    /// Check that a matrix, bundle directory or sweep config loads cleanly.
    Validate(ValidateArgs),
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Method {
    First,
    Random,
    Pca,
    Isomap,
}

impl From<Method> for ReducerKind {
    fn from(m: Method) -> Self {
        match m {
            Method::First => ReducerKind::First,
            Method::Random => ReducerKind::Random,
            Method::Pca => ReducerKind::Pca,
            Method::Isomap => ReducerKind::Isomap,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Kind {
    Classification,
    Clustering,
    Retrieval,
    Sts,
}

impl From<Kind> for TaskKind {
    fn from(k: Kind) -> Self {
        match k {
            Kind::Classification => TaskKind::Classification,
            Kind::Clustering => TaskKind::Clustering,
            Kind::Retrieval => TaskKind::Retrieval,
            Kind::Sts => TaskKind::Sts,
        }
    }
}

#[derive(Clone, Copy, Debug, ValueEnum)]
enum Format {
    Json,
    Csv,
}

#[derive(Args, Debug)]
struct ReduceArgs {
    #[arg(long, value_enum)]
    method: Method,
    /// Target dimension.
    #[arg(long, value_parser = clap::value_parser!(u64).range(1..))]
    dim: u64,
    /// Seed for the random method.
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// Task identifier keying the random method's column subset.
    #[arg(long, default_value = "")]
    task_id: String,
    /// Isomap graph neighbours.
    #[arg(long, default_value_t = DEFAULT_ISOMAP_NEIGHBORS as u64, value_parser = clap::value_parser!(u64).range(2..))]
    neighbors: u64,
    #[arg(long)]
    input: PathBuf,
    #[arg(long)]
    output: PathBuf,
}

#[derive(Args, Debug)]
struct InputArgs {
    #[arg(long)]
    input: PathBuf,
}

#[derive(Args, Debug)]
struct IdArgs {
    #[arg(long)]
    input: PathBuf,
    /// Fraction of the largest neighbour ratios left out of the fit.
    #[arg(long, default_value_t = DEFAULT_DISCARD_FRACTION)]
    discard_fraction: f64,
}

#[derive(Args, Debug)]
struct EvalArgs {
    #[arg(value_enum)]
    kind: Kind,
    /// Directory holding the bundle files.
    #[arg(long)]
    bundle: PathBuf,
    #[arg(long, default_value_t = 0)]
    seed: u64,
    /// k-means restarts (clustering).
    #[arg(long, default_value_t = DEFAULT_RESTARTS as u64, value_parser = clap::value_parser!(u64).range(1..))]
    restarts: u64,
    /// L2 penalty (classification).
    #[arg(long, default_value_t = LogRegConfig::default().l2)]
    l2: f64,
}

#[derive(Args, Debug)]
struct SynthArgs {
    #[command(subcommand)]
    kind: SynthKind,
    /// Output directory.
    #[arg(long, global = true)]
    output: Option<PathBuf>,
}

#[derive(Subcommand, Debug)]
enum SynthKind {
    /// Uniform points on a d-dimensional cube isometrically embedded in ℝ^D.
    UniformManifold {
        #[arg(long)]
        intrinsic_dim: usize,
        #[arg(long)]
        ambient_dim: usize,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Rotated Gaussian with the given covariance spectrum.
    GaussianSpectrum {
        /// Comma-separated variances.
        #[arg(long, value_delimiter = ',', required = true)]
        spectrum: Vec<f64>,
        #[arg(long)]
        n: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Labeled Gaussian blobs (classification and clustering bundles).
    Blobs {
        #[arg(long)]
        classes: usize,
        #[arg(long)]
        ambient_dim: usize,
        #[arg(long)]
        per_class: usize,
        #[arg(long)]
        separation: f64,
        #[arg(long)]
        signal_dims: Option<usize>,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Queries with one planted relevant passage each.
    Retrieval {
        #[arg(long)]
        queries: usize,
        #[arg(long)]
        passages: usize,
        #[arg(long)]
        ambient_dim: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Sentence pairs whose gold score is their pre-noise cosine.
    Sts {
        #[arg(long)]
        pairs: usize,
        #[arg(long)]
        ambient_dim: usize,
        #[arg(long, default_value_t = 0.0)]
        noise: f64,
        #[arg(long, default_value_t = 0)]
        seed: u64,
    },
    /// Any generator, described by a JSON spec file.
    Spec {
        #[arg(long)]
        file: PathBuf,
    },
}

#[derive(Args, Debug)]
struct SweepArgs {
    #[arg(long)]
    config: PathBuf,
    /// Report path (overrides the config); stdout when absent from both.
    #[arg(long)]
    output: Option<PathBuf>,
    #[arg(long, value_enum)]
    format: Option<Format>,
    /// Overrides the config seed.
    #[arg(long)]
    seed: Option<u64>,
    /// Comma-separated target dimensions (overrides the config).
    #[arg(long, value_delimiter = ',')]
    dims: Option<Vec<usize>>,
}

#[derive(Args, Debug)]
struct ValidateArgs {
    /// An `.emb` matrix, a bundle directory, or a sweep config `.json`.
    #[arg(long)]
    input: PathBuf,
    /// Bundle kind, when the directory layout is ambiguous.
    #[arg(long, value_enum)]
    kind: Option<Kind>,
}

/// Errors from the CLI layer: either a library error or a bad flag
/// combination detected here.
enum Failure {
    Lib(Error),
    Usage(String),
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        Failure::Lib(e)
    }
}

type CliResult<T> = Result<T, Failure>;

fn main() -> ExitCode {
    let cli = match Cli::try_parse() {
        Ok(cli) => cli,
        Err(e) => {
            use clap::error::ErrorKind;
            if matches!(e.kind(), ErrorKind::DisplayHelp | ErrorKind::DisplayVersion) {
                let _ = e.print();
                return ExitCode::SUCCESS;
            }
            let msg = e.to_string();
            let first = msg.lines().next().unwrap_or("invalid arguments");
            eprintln!("embkit: {}", first.trim_start_matches("error: "));
            return ExitCode::from(1);
        }
    };
    if let Some(n) = cli.threads {
        if let Err(e) = rayon::ThreadPoolBuilder::new().num_threads(n as usize).build_global() {
            eprintln!("embkit: cannot start {n} worker threads: {e}");
            return ExitCode::from(2);
        }
    }
    match run(cli.command) {
        Ok(()) => ExitCode::SUCCESS,
        Err(Failure::Usage(msg)) => {
            eprintln!("embkit: {msg}");
            ExitCode::from(1)
        }
        Err(Failure::Lib(e)) => {
            let msg = e.to_string().replace('\n', " ");
            eprintln!("embkit: {msg}");
            ExitCode::from(if e.is_user_error() { 1 } else { 2 })
        }
    }
}

fn print_json<T: Serialize>(value: &T) -> CliResult<()> {
    let text = serde_json::to_string_pretty(value).map_err(|e| Error::Numerical(e.to_string()))?;
    let mut out = io::stdout().lock();
    // A closed pipe is not worth an error exit.
    let _ = writeln!(out, "{text}");
    Ok(())
}

fn run(command: Command) -> CliResult<()> {
    match command {
        Command::Reduce(a) => reduce(a),
        Command::Id(a) => {
            let x = load_embeddings(&a.input)?;
            print_json(&twonn(&x, a.discard_fraction)?)
        }
        Command::Isoscore(a) => {
            let x = load_embeddings(&a.input)?;
            print_json(&isoscore(&x)?)
        }
        Command::Eval(a) => {
            let bundle = load_task_bundle(&BundlePaths::in_dir(a.kind.into(), &a.bundle))?;
            let opts = EvalOptions {
                seed: a.seed,
                logreg: LogRegConfig {
                    l2: a.l2,
                    ..LogRegConfig::default()
                },
                restarts: a.restarts as usize,
            };
            print_json(&evaluate(&bundle, &opts)?)
        }
        Command::Synth(a) => synth(a),
        Command::Sweep(a) => sweep(a),
        Command::Validate(a) => validate(a),
    }
}

fn reduce(a: ReduceArgs) -> CliResult<()> {
    let x = load_embeddings(&a.input)?;
    let reducer = Reducer {
        seed: a.seed,
        task_id: a.task_id,
        n_neighbors: a.neighbors as usize,
        ..Reducer::new(a.method.into(), a.dim as usize)
    };
    let y = fit_apply(&reducer, &x)?;
    save_embeddings(&y, &a.output)?;
    print_json(&json!({
        "method": reducer.kind.as_str(),
        "source_dim": x.cols(),
        "dim": y.cols(),
        "rows": y.rows(),
        "output": a.output,
    }))
}

fn synth(a: SynthArgs) -> CliResult<()> {
    let out = a
        .output
        .ok_or_else(|| Failure::Usage("synth needs --output <DIR>".into()))?;
    let spec = match a.kind {
        SynthKind::UniformManifold {
            intrinsic_dim,
            ambient_dim,
            n,
            seed,
        } => SynthSpec::UniformManifold {
            intrinsic_dim,
            ambient_dim,
            n,
            seed,
        },
        SynthKind::GaussianSpectrum { spectrum, n, seed } => SynthSpec::GaussianSpectrum { spectrum, n, seed },
        SynthKind::Blobs {
            classes,
            ambient_dim,
            per_class,
            separation,
            signal_dims,
            seed,
        } => SynthSpec::LabeledBlobs {
            classes,
            ambient_dim,
            per_class,
            separation,
            seed,
            signal_dims,
        },
        SynthKind::Retrieval {
            queries,
            passages,
            ambient_dim,
            noise,
            seed,
        } => SynthSpec::RetrievalPlanted {
            queries,
            passages,
            ambient_dim,
            noise,
            seed,
        },
        SynthKind::Sts {
            pairs,
            ambient_dim,
            noise,
            seed,
        } => SynthSpec::StsPlanted {
            pairs,
            ambient_dim,
            noise,
            seed,
        },
        SynthKind::Spec { file } => {
            let text = fs::read_to_string(&file).map_err(|e| Error::Io {
                path: file.clone(),
                source: e,
            })?;
            serde_json::from_str(&text)
                .map_err(|e| Error::Config(format!("{}: {e}", file.display())))?
        }
    };
    let written = write_synth(&generate(&spec)?, &out)?;
    let spec_path = out.join("spec.json");
    let spec_text = serde_json::to_string_pretty(&spec).map_err(|e| Error::Numerical(e.to_string()))?;
    fs::write(&spec_path, spec_text + "\n").map_err(|e| Error::Io {
        path: spec_path.clone(),
        source: e,
    })?;
    print_json(&json!({ "spec": spec, "written": written }))
}

/// Writes generator output under `dir`; returns the written locations.
fn write_synth(output: &SynthOutput, dir: &Path) -> CliResult<Vec<PathBuf>> {
    Ok(match output {
        SynthOutput::Matrix(x) => {
            let p = dir.join("matrix.emb");
            save_embeddings(x, &p)?;
            vec![p]
        }
        SynthOutput::Blobs {
            classification,
            clustering,
        } => {
            let a = dir.join("classification");
            let b = dir.join("clustering");
            save_task_bundle(&TaskBundle::Classification(classification.clone()), &a)?;
            save_task_bundle(&TaskBundle::Clustering(clustering.clone()), &b)?;
            vec![a, b]
        }
        SynthOutput::Retrieval(b) => {
            save_task_bundle(&TaskBundle::Retrieval(b.clone()), dir)?;
            vec![dir.to_path_buf()]
        }
        SynthOutput::Sts(b) => {
            save_task_bundle(&TaskBundle::Sts(b.clone()), dir)?;
            vec![dir.to_path_buf()]
        }
    })
}

fn sweep(a: SweepArgs) -> CliResult<()> {
    let mut cfg = SweepConfig::from_file(&a.config)?;
    if let Some(seed) = a.seed {
        cfg.seed = seed;
    }
    if let Some(dims) = a.dims {
        cfg.dims = Some(dims);
    }
    if let Some(f) = a.format {
        cfg.format = match f {
            Format::Json => ReportFormat::Json,
            Format::Csv => ReportFormat::Csv,
        };
    }
    // Flag paths are relative to the working directory, config paths to the
    // config file.
    let output = match (a.output, &cfg.output) {
        (Some(p), _) => Some(p),
        (None, Some(p)) if p.is_relative() => Some(a.config.parent().unwrap_or(Path::new("")).join(p)),
        (None, p) => p.clone(),
    };
    let report = run_sweep(&cfg)?;
    match output {
        Some(path) => emit_report(&report, cfg.format, &path)?,
        None => {
            let _ = io::stdout().lock().write_all(report.render(cfg.format).as_bytes());
        }
    }
    Ok(())
}

fn detect_kind(dir: &Path) -> Option<TaskKind> {
    let has = |f: &str| dir.join(f).is_file();
    if has("train.emb") {
        Some(TaskKind::Classification)
    } else if has("queries.emb") {
        Some(TaskKind::Retrieval)
    } else if has("pairs.jsonl") {
        Some(TaskKind::Sts)
    } else if has("labels.jsonl") {
        Some(TaskKind::Clustering)
    } else {
        None
    }
}

fn validate(a: ValidateArgs) -> CliResult<()> {
    let p = &a.input;
    if p.is_dir() {
        let kind = match a.kind {
            Some(k) => k.into(),
            None => detect_kind(p).ok_or_else(|| {
                Failure::Usage(format!("{}: no bundle files found; pass --kind", p.display()))
            })?,
        };
        let b = load_task_bundle(&BundlePaths::in_dir(kind, p))?;
        let rows: Vec<usize> = b.matrices().iter().map(|m| m.rows()).collect();
        return print_json(&json!({
            "valid": true,
            "type": "bundle",
            "kind": kind.as_str(),
            "dim": b.dim(),
            "rows": rows,
        }));
    }
    match p.extension().and_then(|e| e.to_str()) {
        Some("json") => {
            let cfg = SweepConfig::from_file(p)?;
            cfg.validate()?;
            let inputs = embkit_core::sweep::SweepInputs::load(&cfg)?;
            let dim = inputs.source_dim()?;
            print_json(&json!({
                "valid": true,
                "type": "sweep_config",
                "source_dim": dim,
                "tasks": inputs.tasks.len(),
                "matrices": inputs.matrices.len(),
            }))
        }
        _ => {
            let x = load_embeddings(p)?;
            print_json(&json!({
                "valid": true,
                "type": "matrix",
                "rows": x.rows(),
                "cols": x.cols(),
                "prompt_type": x.prompt_type,
            }))
        }
    }
}
