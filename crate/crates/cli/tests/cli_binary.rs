use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use relmatch_cli::commands::cmd_index;
use relmatch_core::{CachingProvider, LocalHashEmbedder};

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures/charger").join(name)
}

fn relmatch(args: &[&str], cwd: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_relmatch"))
        .args(args)
        .current_dir(cwd)
        .env_remove("RELMATCH_API_KEY")
        .output()
        .expect("binary runs")
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

fn index_fixture(dir: &Path) {
    let out = relmatch(
        &["index", "--target", fixture("target.csv").to_str().unwrap(), "--out", "idx"],
        dir,
    );
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
}

fn match_args<'a>(truth: &'a str, source: &'a str, report: &'a str) -> Vec<&'a str> {
    vec![
        "match", "--source", source, "--index", "idx", "--backend", "oracle", "--truth", truth,
        "--report", report,
    ]
}

#[test]
fn help_exits_zero() {
    let dir = tempfile::tempdir().unwrap();
    let out = relmatch(&["--help"], dir.path());
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8_lossy(&out.stdout);
    for sub in ["index", "match", "eval", "generate"] {
        assert!(text.contains(sub), "{text}");
    }
}

#[test]
fn unknown_subcommand_is_an_input_error() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(relmatch(&["frobnicate"], dir.path()).status.code(), Some(2));
}

#[test]
fn empty_target_table_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("empty.csv"), "id,item\n").unwrap();
    let out = relmatch(&["index", "--target", "empty.csv", "--out", "idx"], dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("EmptyTable"), "{}", stderr(&out));
}

#[test]
fn empty_source_table_gives_an_empty_report() {
    let dir = tempfile::tempdir().unwrap();
    index_fixture(dir.path());
    fs::write(dir.path().join("empty.csv"), "id,item\n").unwrap();
    let truth = fixture("truth.json");
    let out = relmatch(&match_args(truth.to_str().unwrap(), "empty.csv", "r.json"), dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["entities"], serde_json::json!([]));
}

#[test]
fn zero_k_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    index_fixture(dir.path());
    let truth = fixture("truth.json");
    let source = fixture("source.csv");
    let mut args = match_args(truth.to_str().unwrap(), source.to_str().unwrap(), "r.json");
    args.extend(["--k", "0"]);
    let out = relmatch(&args, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("k must be at least 1"), "{}", stderr(&out));
    assert!(!dir.path().join("r.json").exists());
}

#[test]
fn provider_mismatch_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    index_fixture(dir.path());
    let truth = fixture("truth.json");
    let source = fixture("source.csv");
    let mut args = match_args(truth.to_str().unwrap(), source.to_str().unwrap(), "r.json");
    args.extend(["--dimension", "32"]);
    let out = relmatch(&args, dir.path());
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("not comparable"), "{}", stderr(&out));
}

#[test]
fn oracle_without_truth_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    index_fixture(dir.path());
    let source = fixture("source.csv");
    let out = relmatch(
        &["match", "--source", source.to_str().unwrap(), "--index", "idx", "--backend", "oracle"],
        dir.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn warm_rerun_is_byte_identical_and_skips_the_backend() {
    let dir = tempfile::tempdir().unwrap();
    index_fixture(dir.path());
    let truth = fixture("truth.json");
    let source = fixture("source.csv");
    let first = relmatch(&match_args(truth.to_str().unwrap(), source.to_str().unwrap(), "a.json"), dir.path());
    let second = relmatch(&match_args(truth.to_str().unwrap(), source.to_str().unwrap(), "b.json"), dir.path());
    assert_eq!(first.status.code(), Some(0), "{}", stderr(&first));
    assert_eq!(second.status.code(), Some(0), "{}", stderr(&second));
    assert!(stderr(&first).contains("backend calls: 5,"), "{}", stderr(&first));
    assert!(stderr(&second).contains("backend calls: 0, cache hits: 5"), "{}", stderr(&second));
    let a = fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.json")).unwrap());
    assert!(dir.path().join("a.txt").is_file());
    assert!(dir.path().join(".relmatch-cache").is_dir());
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let dir = tempfile::tempdir().unwrap();
    index_fixture(dir.path());
    let truth = fixture("truth.json");
    fs::write(
        dir.path().join("relmatch.toml"),
        format!("[policy]\nk = 0\n\n[backend]\nkind = \"oracle\"\ntruth = {:?}\n", truth.to_str().unwrap()),
    )
    .unwrap();
    let source = fixture("source.csv");
    let base = ["--config", "relmatch.toml", "match", "--source", source.to_str().unwrap(), "--index", "idx"];
    assert_eq!(relmatch(&base, dir.path()).status.code(), Some(2));
    let mut with_k = base.to_vec();
    with_k.extend(["--k", "3", "--no-cache"]);
    let out = relmatch(&with_k, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: serde_json::Value =
        serde_json::from_slice(&fs::read(dir.path().join("relmatch-report.json")).unwrap()).unwrap();
    assert_eq!(report["run"]["k"], 3);
}

#[test]
fn unchanged_table_does_not_re_embed() {
    let dir = tempfile::tempdir().unwrap();
    let first = CachingProvider::new(LocalHashEmbedder::new(16, 0));
    let outcome = cmd_index(&fixture("target.csv"), dir.path(), &first).unwrap();
    assert!(outcome.rebuilt);
    assert_eq!(first.misses(), 6);
    let second = CachingProvider::new(LocalHashEmbedder::new(16, 0));
    let outcome = cmd_index(&fixture("target.csv"), dir.path(), &second).unwrap();
    assert!(!outcome.rebuilt);
    assert_eq!(outcome.rows, 6);
    assert_eq!(second.misses(), 0);
}

#[test]
fn eval_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let args = |out: &'static str| ["eval", "--targets", "60", "--sources", "8", "--seed", "7", "--out", out];
    for out in ["a.json", "b.json"] {
        let run = relmatch(&args(out), dir.path());
        assert_eq!(run.status.code(), Some(0), "{}", stderr(&run));
    }
    let a = fs::read(dir.path().join("a.json")).unwrap();
    assert_eq!(a, fs::read(dir.path().join("b.json")).unwrap());
    let metrics: serde_json::Value = serde_json::from_slice(&a).unwrap();
    assert!(metrics["relation_based"]["relations"]["exactly_the_same"].is_object());
}

#[test]
fn generate_then_match_with_the_mock_provider() {
    let dir = tempfile::tempdir().unwrap();
    let gen = relmatch(&["generate", "--targets", "40", "--sources", "5", "--out", "data"], dir.path());
    assert_eq!(gen.status.code(), Some(0), "{}", stderr(&gen));
    let mock = ["--provider", "mock", "--corpus", "data/corpus.json"];
    let mut index = vec!["index", "--target", "data/target.csv", "--out", "idx"];
    index.extend(mock);
    assert_eq!(relmatch(&index, dir.path()).status.code(), Some(0));
    let mut matching = match_args("data/truth.json", "data/source.csv", "r.json");
    matching.extend(mock);
    let out = relmatch(&matching, dir.path());
    assert_eq!(out.status.code(), Some(0), "{}", stderr(&out));
    let report: serde_json::Value = serde_json::from_slice(&fs::read(dir.path().join("r.json")).unwrap()).unwrap();
    assert_eq!(report["entities"].as_array().unwrap().len(), 5);
}
