//! End-to-end runs of the command-line binary.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use prompt_adherence::embedding::{read_embeddings, write_embeddings, EmbeddingMatrix};

const BIN: &str = env!("CARGO_BIN_EXE_prompt-adherence");

fn run(args: &[&str]) -> Output {
    Command::new(BIN).args(args).env_remove("ADHERENCE_CACHE_DIR").output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(args: &[&str]) -> String {
    let o = run(args);
    assert!(o.status.success(), "{args:?} failed: {}", stderr(&o));
    stdout(&o)
}

/// Two small synthetic collections shared by every test in this file.
fn fixture() -> &'static Path {
    static DIR: OnceLock<PathBuf> = OnceLock::new();
    DIR.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap().keep();
        for (style, seed) in [("bright", "1"), ("hollow", "2")] {
            let out = dir.join(style);
            ok(&["synth", "--out", out.to_str().unwrap(), "--style", style, "--n-projects", "8", "--seconds", "12", "--seed", seed]);
        }
        dir
    })
}

fn col(name: &str) -> String {
    fixture().join(name).display().to_string()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn missing_collection_is_reported_by_path() {
    let o = run(&["pairs", "--collections", "/no/such/collection", "--n-windows", "5", "--seed", "0", "--out", "/tmp/x"]);
    assert!(!o.status.success());
    assert!(stderr(&o).contains("/no/such/collection"), "{}", stderr(&o));
}

#[test]
fn pairs_are_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    for out in [&a, &b] {
        ok(&["pairs", "--collections", &col("bright"), "--n-windows", "50", "--seed", "7", "--out", s(out)]);
    }
    let ma = std::fs::read(a.join("manifest.json")).unwrap();
    let mb = std::fs::read(b.join("manifest.json")).unwrap();
    assert_eq!(ma, mb);
    let m: serde_json::Value = serde_json::from_slice(&ma).unwrap();
    assert_eq!(m["pairs"].as_array().unwrap().len(), 50);
}

#[test]
fn too_many_windows_is_a_data_error() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["pairs", "--collections", &col("bright"), "--n-windows", "100000", "--seed", "0", "--out", s(dir.path())]);
    assert_eq!(o.status.code(), Some(3));
    let err = stderr(&o);
    assert!(err.contains("insufficient eligible windows") && err.contains("shortfall"), "{err}");
}

#[test]
fn embed_and_score() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs");
    ok(&["pairs", "--collections", &col("bright"), "--n-windows", "12", "--seed", "3", "--out", s(&pairs)]);
    let mix = dir.path().join("mix.aemb");
    let conc = dir.path().join("conc.aemb");
    ok(&["embed", "--pairs", s(&pairs), "--out", s(&mix)]);
    ok(&["embed", "--pairs", s(&pairs), "--fusion", "conc", "--out", s(&conc)]);
    let m = read_embeddings(&mix).unwrap();
    assert_eq!((m.rows(), m.cols()), (12, 192));
    assert_eq!(m.backend_id(), "builtin-logmel+mix");
    assert_eq!(read_embeddings(&conc).unwrap().cols(), 384);
    assert!(pairs.join("cache").is_dir());

    // Second collection as the non-matching reference.
    let other = dir.path().join("other");
    ok(&["pairs", "--collections", &col("hollow"), "--n-windows", "12", "--seed", "3", "--out", s(&other)]);
    let nm = dir.path().join("nm.aemb");
    ok(&["embed", "--pairs", s(&other), "--out", s(&nm)]);

    let base = ["score", "--reference-emb", s(&mix), "--nonmatching-emb", s(&nm)];
    let score = |cand: &Path, metric: &str| -> f64 {
        let mut args = base.to_vec();
        args.extend(["--candidate-emb", s(cand), "--metric", metric]);
        let v: serde_json::Value = serde_json::from_str(&ok(&["--json"].iter().chain(&args).copied().collect::<Vec<_>>())).unwrap();
        v["score"].as_f64().unwrap()
    };
    for metric in ["fad", "mmd"] {
        assert_eq!(score(&mix, metric), 1.0);
        let x = score(&nm, metric);
        assert!((-1.0..=1.0).contains(&x), "{x}");
    }

    // Candidate equal to both references leaves the score undefined.
    let o = run(&["score", "--reference-emb", s(&mix), "--nonmatching-emb", s(&mix), "--candidate-emb", s(&mix)]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn cache_dir_can_be_redirected() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs");
    let cache = dir.path().join("elsewhere");
    ok(&["pairs", "--collections", &col("hollow"), "--n-windows", "4", "--seed", "1", "--out", s(&pairs)]);
    let o = Command::new(BIN)
        .args(["embed", "--pairs", s(&pairs), "--out", s(&dir.path().join("e.aemb"))])
        .env("ADHERENCE_CACHE_DIR", &cache)
        .output()
        .unwrap();
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(std::fs::read_dir(&cache).unwrap().count() > 0);
    assert!(!pairs.join("cache").exists());
}

#[test]
fn external_rows_must_match_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs");
    ok(&["pairs", "--collections", &col("bright"), "--n-windows", "5", "--seed", "2", "--out", s(&pairs)]);
    let ext = dir.path().join("ext.aemb");
    write_embeddings(&EmbeddingMatrix::new(4, 3, vec![0.5; 12], "mine").unwrap(), &ext).unwrap();
    let backend = format!("external:{}", ext.display());
    let o = run(&["embed", "--pairs", s(&pairs), "--backend", &backend, "--out", s(&dir.path().join("o.aemb"))]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("row/manifest mismatch"), "{}", stderr(&o));

    write_embeddings(&EmbeddingMatrix::new(5, 3, vec![0.5; 15], "mine").unwrap(), &ext).unwrap();
    let out = dir.path().join("o.aemb");
    ok(&["embed", "--pairs", s(&pairs), "--backend", &backend, "--out", s(&out)]);
    assert_eq!(read_embeddings(&out).unwrap().rows(), 5);
}

fn write_config(dir: &Path, body: serde_json::Value) -> PathBuf {
    let path = dir.join("config.json");
    std::fs::write(&path, serde_json::to_vec_pretty(&body).unwrap()).unwrap();
    path
}

fn toy_config(dir: &Path) -> serde_json::Value {
    serde_json::json!({
        "collections": [
            {"name": "bright", "path": col("bright")},
            {"name": "hollow", "path": col("hollow")}
        ],
        "n_windows": 20,
        "metrics": ["fad", "mmd"],
        "fusions": ["mix"],
        "projections": ["np", "pca10"],
        "conditions": ["random", "pitch", "time", "pitch_time"],
        "seed": 5,
        "n_repeats": 2,
        "output_dir": dir.join("out")
    })
}

#[test]
fn experiment_two_writes_one_row_per_cell() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), toy_config(dir.path()));
    ok(&["exp2", "--config", s(&cfg)]);
    let csv = std::fs::read_to_string(dir.path().join("out/records.csv")).unwrap();
    // 2 references x 2 candidates x 2 conditions x 2 projections x 2 metrics x 2 repeats.
    assert_eq!(csv.lines().count() - 1, 2 * 2 * 2 * 2 * 2 * 2);
    assert!(dir.path().join("out/report.json").is_file());
}

#[test]
fn experiment_three_cles_in_unit_interval() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = toy_config(dir.path());
    body["metrics"] = serde_json::json!(["mmd"]);
    body["projections"] = serde_json::json!(["np"]);
    let cfg = write_config(dir.path(), body);
    let v: serde_json::Value = serde_json::from_str(&ok(&["--json", "exp3", "--config", s(&cfg)])).unwrap();
    let cles = v["cles"].as_array().unwrap();
    assert!(!cles.is_empty());
    for c in cles {
        let x = c["cles"].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&x), "{c}");
    }
}

#[test]
fn empty_metric_list_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let mut body = toy_config(dir.path());
    body["metrics"] = serde_json::json!([]);
    let cfg = write_config(dir.path(), body);
    let o = run(&["exp2", "--config", s(&cfg)]);
    assert_eq!(o.status.code(), Some(2));
    let o = run(&["--json", "exp2", "--config", s(&cfg)]);
    let v: serde_json::Value = serde_json::from_str(&stdout(&o)).unwrap_or_else(|_| serde_json::from_str(&stderr(&o)).unwrap());
    assert_eq!(v["exit_code"], 2);
}

#[test]
fn unknown_pretrained_backend_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let pairs = dir.path().join("pairs");
    ok(&["pairs", "--collections", &col("bright"), "--n-windows", "2", "--seed", "0", "--out", s(&pairs)]);
    let o = run(&["embed", "--pairs", s(&pairs), "--backend", "vggish", "--out", s(&dir.path().join("x"))]);
    assert_eq!(o.status.code(), Some(2));
}
