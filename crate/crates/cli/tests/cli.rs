use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use embkit_core::dataset::{load_embeddings, load_task_bundle, save_embeddings, BundlePaths, TaskKind};
use embkit_core::intrinsic_dim::twonn;
use embkit_core::reducers::{fit_apply, Reducer};
use embkit_core::synthgen::gen_uniform_manifold;
use embkit_core::taskeval::{evaluate, EvalOptions};
use serde_json::Value;

fn embkit(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_embkit"))
        .args(args)
        .current_dir(cwd)
        .env_remove("EMBKIT_THREADS")
        .output()
        .unwrap()
}

fn json_out(o: &Output) -> Value {
    assert!(o.status.success(), "stderr: {}", String::from_utf8_lossy(&o.stderr));
    serde_json::from_slice(&o.stdout).unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn id_prints_the_library_estimate() {
    let dir = tempfile::tempdir().unwrap();
    let x = gen_uniform_manifold(3, 12, 400, 2).unwrap();
    save_embeddings(&x, dir.path().join("x.emb")).unwrap();
    let v = json_out(&embkit(&["id", "--input", "x.emb"], dir.path()));
    let direct = twonn(&load_embeddings(dir.path().join("x.emb")).unwrap(), 0.1).unwrap();
    assert_eq!(v["id"].as_f64().unwrap().to_bits(), direct.id.to_bits());
    assert_eq!(v["n_used"].as_u64().unwrap() as usize, direct.n_used);
}

#[test]
fn invalid_dim_names_the_flag() {
    let dir = tempfile::tempdir().unwrap();
    let o = embkit(&["reduce", "--method", "first", "--dim", "0", "--input", "x.emb", "--output", "y.emb"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("--dim"), "{err}");
    assert_eq!(err.trim_end().lines().count(), 1);
}

#[test]
fn exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(embkit(&["--help"], dir.path()).status.code(), Some(0));
    assert_eq!(embkit(&["--version"], dir.path()).status.code(), Some(0));
    assert_eq!(embkit(&["frobnicate"], dir.path()).status.code(), Some(1));
    assert_eq!(embkit(&["id", "--input", "missing.emb"], dir.path()).status.code(), Some(1));
    assert_eq!(embkit(&["id", "--input", "x.emb", "--bogus"], dir.path()).status.code(), Some(1));
    fs::write(dir.path().join("bad.emb"), b"EMB1 but not really").unwrap();
    let o = embkit(&["validate", "--input", "bad.emb"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("byte"), "{}", stderr(&o));
    let o = embkit(&["reduce", "--method", "umap", "--dim", "2", "--input", "a", "--output", "b"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn threads_env_fallback_is_validated() {
    let dir = tempfile::tempdir().unwrap();
    save_embeddings(&gen_uniform_manifold(2, 4, 50, 1).unwrap(), dir.path().join("x.emb")).unwrap();
    let run = |env: &str| {
        Command::new(env!("CARGO_BIN_EXE_embkit"))
            .args(["isoscore", "--input", "x.emb"])
            .current_dir(dir.path())
            .env("EMBKIT_THREADS", env)
            .output()
            .unwrap()
    };
    assert_eq!(run("0").status.code(), Some(1));
    assert_eq!(run("2").status.code(), Some(0));
    assert_eq!(run("1").stdout, run("2").stdout);
}

#[test]
fn reduce_matches_library() {
    let dir = tempfile::tempdir().unwrap();
    let x = gen_uniform_manifold(3, 10, 80, 5).unwrap();
    save_embeddings(&x, dir.path().join("x.emb")).unwrap();
    let x = load_embeddings(dir.path().join("x.emb")).unwrap();
    for (method, reducer) in [("first", Reducer::first(4)), ("pca", Reducer::pca(4)), ("random", Reducer::random(4, 3, "t"))] {
        let o = embkit(
            &["reduce", "--method", method, "--dim", "4", "--seed", "3", "--task-id", "t", "--input", "x.emb", "--output", "y.emb"],
            dir.path(),
        );
        assert_eq!(json_out(&o)["dim"], 4);
        let got = load_embeddings(dir.path().join("y.emb")).unwrap();
        let want = fit_apply(&reducer, &x).unwrap();
        // The file stores f32, so compare after the same rounding.
        assert_eq!(got.matrix, want.matrix.map(|v| v as f32 as f64), "{method}");
    }
}

#[test]
fn synth_then_eval_round_trip() {
    let dir = tempfile::tempdir().unwrap();
    let o = embkit(
        &["synth", "blobs", "--classes", "3", "--ambient-dim", "6", "--per-class", "20", "--separation", "8", "--seed", "4", "--output", "blobs"],
        dir.path(),
    );
    json_out(&o);
    assert!(dir.path().join("blobs/spec.json").is_file());
    for (kind, sub) in [("classification", TaskKind::Classification), ("clustering", TaskKind::Clustering)] {
        let bundle_dir = dir.path().join("blobs").join(kind);
        let v = json_out(&embkit(&["eval", kind, "--bundle", bundle_dir.to_str().unwrap(), "--seed", "2"], dir.path()));
        let b = load_task_bundle(&BundlePaths::in_dir(sub, &bundle_dir)).unwrap();
        let opts = EvalOptions { seed: 2, ..EvalOptions::default() };
        assert_eq!(v["value"].as_f64().unwrap().to_bits(), evaluate(&b, &opts).unwrap().value.to_bits());
        let v = json_out(&embkit(&["validate", "--input", bundle_dir.to_str().unwrap()], dir.path()));
        assert_eq!(v["kind"], kind);
    }
    let o = embkit(&["synth", "sts", "--pairs", "20", "--ambient-dim", "5", "--output", "sts"], dir.path());
    json_out(&o);
    let v = json_out(&embkit(&["eval", "sts", "--bundle", "sts"], dir.path()));
    assert_eq!(v["value"], 1.0);
    let o = embkit(&["synth", "retrieval", "--queries", "5", "--passages", "30", "--ambient-dim", "8", "--output", "ret"], dir.path());
    json_out(&o);
    assert_eq!(json_out(&embkit(&["eval", "retrieval", "--bundle", "ret"], dir.path()))["value"], 1.0);
}

#[test]
fn synth_from_spec_file() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("spec.json"),
        r#"{"kind": "gaussian_spectrum", "spectrum": [1, 1, 1, 1], "n": 300, "seed": 1}"#,
    )
    .unwrap();
    json_out(&embkit(&["synth", "spec", "--file", "spec.json", "--output", "g"], dir.path()));
    let v = json_out(&embkit(&["isoscore", "--input", "g/matrix.emb"], dir.path()));
    assert!(v["isoscore"].as_f64().unwrap() > 0.9);
    let o = embkit(&["synth", "gaussian-spectrum", "--spectrum", "1,-1", "--n", "10", "--output", "h"], dir.path());
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn sweep_flags_override_config() {
    let dir = tempfile::tempdir().unwrap();
    json_out(&embkit(
        &["synth", "uniform-manifold", "--intrinsic-dim", "2", "--ambient-dim", "8", "--n", "200", "--output", "m"],
        dir.path(),
    ));
    fs::write(
        dir.path().join("sweep.json"),
        r#"{"methods": [{"kind": "first"}], "matrices": [{"name": "m", "path": "m/matrix.emb"}], "output": "from-config.json"}"#,
    )
    .unwrap();
    let o = embkit(&["sweep", "--config", "sweep.json"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let report: Value = serde_json::from_str(&fs::read_to_string(dir.path().join("from-config.json")).unwrap()).unwrap();
    assert_eq!(report["config"]["dims"], serde_json::json!([2, 4, 8]));

    let o = embkit(&["sweep", "--config", "sweep.json", "--dims", "4,8", "--format", "csv", "--output", "out.csv"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = fs::read_to_string(dir.path().join("out.csv")).unwrap();
    assert!(csv.starts_with("method,dim,target,metric,value\n"));
    // Baseline + 2 dims, each with twonn and isoscore.
    assert_eq!(csv.lines().count(), 1 + 3 * 2);

    let o = embkit(&["sweep", "--config", "sweep.json", "--dims", "8,4"], dir.path());
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("ascending"));
}
