use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mini_path() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data/mini8.txt")
}

fn vsmquant(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_vsmquant"))
        .args(args)
        .env_remove("VSMQUANT_CACHE")
        .output()
        .unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

#[test]
fn mismatched_bits_or_k_is_a_usage_error() {
    for args in [
        vec!["run", "--corpus", "/nonexistent", "--variant", "quant", "--clf", "knn1"],
        vec!["run", "--corpus", "/nonexistent", "--variant", "tfidf", "--clf", "svm", "--bits", "4"],
        vec!["run", "--corpus", "/nonexistent", "--variant", "svd", "--clf", "svm"],
        vec!["run", "--corpus", "/nonexistent", "--variant", "2", "--clf", "svm", "--bits", "4", "--k", "5"],
    ] {
        let out = vsmquant(&args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", text(&out.stderr));
    }
    let out = vsmquant(&["run", "--corpus", "/nonexistent", "--variant", "quant", "--clf", "knn1", "--bits", "0"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn run_is_deterministic_and_appends_rows() {
    let dir = tempfile::tempdir().unwrap();
    let out_dir = dir.path().to_str().unwrap();
    let corpus = mini_path();
    let args = [
        "run", "--corpus", corpus.to_str().unwrap(), "--variant", "svd-quant", "--clf", "logistic",
        "--bits", "4", "--k", "20", "--seed", "3", "--out", out_dir,
    ];
    let first = vsmquant(&args);
    assert!(first.status.success(), "{}", text(&first.stderr));
    let second = vsmquant(&args);
    assert_eq!(text(&first.stdout), text(&second.stdout));
    assert!(text(&first.stdout).starts_with("mini8 svd-quant logistic: macro F1 "));

    let csv = fs::read_to_string(dir.path().join("runs.csv")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 3);
    assert!(lines[0].starts_with("dataset,variant,classifier,b,k,seed,"));
    let metrics = |l: &str| l.split(',').take(10).collect::<Vec<_>>().join(",");
    assert_eq!(metrics(lines[1]), metrics(lines[2]));
    assert!(lines[1].starts_with("mini8,svd-quant,logistic,4,20,3,"));
    assert_eq!(fs::read_dir(dir.path().join("store")).unwrap().count(), 1);
}

#[test]
fn dump_weights_lists_every_class_and_term() {
    let dir = tempfile::tempdir().unwrap();
    let weights = dir.path().join("w.txt");
    let corpus = mini_path();
    let out = vsmquant(&[
        "run", "--corpus", corpus.to_str().unwrap(), "--variant", "tfidf", "--clf", "svm",
        "--folds", "2", "--out", dir.path().to_str().unwrap(), "--dump-weights",
        weights.to_str().unwrap(),
    ]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let dump = fs::read_to_string(weights).unwrap();
    let rows: Vec<&str> = dump.lines().filter(|l| !l.starts_with('#')).collect();
    assert_eq!(rows.len(), 8);
    // class, class weight, bias, then one weight per vocabulary term
    assert!(rows.iter().all(|r| r.split_whitespace().count() == 3 + 116));
    let columns = dump.lines().skip_while(|l| *l != "# columns").skip(1);
    assert_eq!(columns.count(), 116);
}

#[test]
fn stats_reports_counts_as_json() {
    let corpus = mini_path();
    let out = vsmquant(&["stats", "--corpus", corpus.to_str().unwrap(), "--json"]);
    assert!(out.status.success());
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["mini8"]["documents"], 480);
    assert_eq!(v["mini8"]["classes"], 8);
    assert_eq!(v["mini8"]["vocabulary"], 116);
}

#[test]
fn missing_dataset_names_entry_and_path() {
    let dir = tempfile::tempdir().unwrap();
    let manifest = dir.path().join("m.json");
    fs::write(&manifest, r#"{"datasets": {"r8": {"path": "r8-stemmed.txt", "documents": 7674}}}"#).unwrap();
    let out = vsmquant(&["stats", "--manifest", manifest.to_str().unwrap(), "--dataset", "r8"]);
    assert_eq!(out.status.code(), Some(1));
    let err = text(&out.stderr);
    assert!(err.contains("r8") && err.contains("r8-stemmed.txt"), "{err}");

    let out = vsmquant(&["stats", "--manifest", manifest.to_str().unwrap(), "--dataset", "cade"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("cade"));
}

#[test]
fn fetch_copies_from_mirror_into_cache() {
    let dir = tempfile::tempdir().unwrap();
    let mirror = dir.path().join("mirror");
    let cache = dir.path().join("cache");
    fs::create_dir_all(&mirror).unwrap();
    fs::copy(mini_path(), mirror.join("mini8.txt")).unwrap();
    let manifest = dir.path().join("m.json");
    fs::write(
        &manifest,
        r#"{"datasets": {"mini8": {"path": "mini8.txt", "documents": 480, "classes": 8}}}"#,
    )
    .unwrap();
    let m = manifest.to_str().unwrap();
    let out = vsmquant(&["--cache-dir", cache.to_str().unwrap(), "fetch", "--manifest", m, "--mirror", mirror.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    assert!(cache.join("mini8.txt").is_file());
    let out = vsmquant(&["--cache-dir", cache.to_str().unwrap(), "stats", "--manifest", m]);
    assert!(text(&out.stdout).starts_with("mini8: classes 8 documents 480"));
}

#[test]
fn sweep_then_report_writes_tables_and_charts() {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(mini_path(), dir.path().join("mini8.txt")).unwrap();
    let manifest = dir.path().join("m.json");
    fs::write(
        &manifest,
        r#"{
  "datasets": {"mini8": {"path": "mini8.txt"}},
  "grid": {"variants": ["tfidf", "quant", "quant-svd", "svd", "svd-quant"],
           "classifiers": ["knn1", "svm"], "bits": [4], "ks": [15]},
  "n_folds": 3
}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = vsmquant(&["sweep", "--manifest", manifest.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    let csv = fs::read_to_string(out_dir.join("sweep.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 10);
    assert_eq!(fs::read_to_string(out_dir.join("failures.json")).unwrap().trim(), "[]");

    let report = dir.path().join("report");
    let out = vsmquant(&["report", "--results", out_dir.to_str().unwrap(), "--out", report.to_str().unwrap()]);
    assert!(out.status.success(), "{}", text(&out.stderr));
    for name in ["macro_f1_table.csv", "micro_accuracy_table.csv", "timing_table.csv", "best_variants.svg"] {
        assert!(report.join(name).is_file(), "{name}");
    }
    let svgs = fs::read_dir(&report)
        .unwrap()
        .filter(|e| e.as_ref().unwrap().path().extension().is_some_and(|x| x == "svg"))
        .count();
    assert!(svgs >= 4);

    let empty = dir.path().join("nothing");
    let out = vsmquant(&["report", "--results", empty.to_str().unwrap(), "--out", report.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn sweep_failures_exit_nonzero_and_are_recorded() {
    let dir = tempfile::tempdir().unwrap();
    fs::copy(mini_path(), dir.path().join("mini8.txt")).unwrap();
    let manifest = dir.path().join("m.json");
    fs::write(
        &manifest,
        r#"{"datasets": {"mini8": {"path": "mini8.txt"}},
  "grid": {"variants": ["svd"], "classifiers": ["knn1"], "bits": [], "ks": [10, 5000]}}"#,
    )
    .unwrap();
    let out_dir = dir.path().join("out");
    let out = vsmquant(&["sweep", "--manifest", manifest.to_str().unwrap(), "--out", out_dir.to_str().unwrap()]);
    assert_eq!(out.status.code(), Some(1));
    let failures: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out_dir.join("failures.json")).unwrap()).unwrap();
    assert_eq!(failures.as_array().unwrap().len(), 1);
    assert_eq!(failures[0]["config"]["k"], 5000);
    assert_eq!(fs::read_to_string(out_dir.join("sweep.csv")).unwrap().lines().count(), 2);
}
