mod common;

use std::path::{Path, PathBuf};

use common::{code, json, ok, s, sgm};
use serde_json::Value;
use sgm::EmbeddingTable;

/// Writes `<dir>/blobs.csv` and returns its path.
fn blobs(dir: &Path, extra: &[&str]) -> PathBuf {
    let mut args = vec!["synth", "--out", s(dir)];
    args.extend_from_slice(extra);
    ok(&args);
    dir.join("blobs.csv")
}

fn small_blobs(dir: &Path) -> PathBuf {
    blobs(
        dir,
        &["--classes", "3", "--per-class", "40", "--dim", "6", "--separation", "8", "--seed", "2"],
    )
}

const FAST: [&str; 6] = ["--set", "updates=150", "--set", "hidden=[]", "--set", "embedding_dim=6"];

fn train(dir: &Path, data: &Path, extra: &[&str]) -> PathBuf {
    let out = dir.join("run");
    let mut args = vec!["train", "--dataset", s(data), "--out", s(&out)];
    args.extend_from_slice(&FAST);
    args.extend_from_slice(extra);
    ok(&args);
    out.join("checkpoint.json")
}

#[test]
fn train_writes_checkpoint_and_report() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_blobs(dir.path());
    let ckpt = train(dir.path(), &data, &["--preset", "paper-meth"]);
    assert!(ckpt.exists());
    let report = json(&dir.path().join("run/train_report.json"));
    assert_eq!(report["train"]["loss"], "sgm");
    assert_eq!(report["run"]["config"]["preset"], "paper-meth");
    assert_eq!(report["train"]["loss_trace"].as_array().unwrap().len(), 150);
    assert!(report["train"].get("timing").is_none());
    assert!(dir.path().join("run/train_timing.json").exists());
}

#[test]
fn triplet_loss_is_tagged() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_blobs(dir.path());
    train(dir.path(), &data, &["--loss", "triplet", "--set", "triplets_per_batch=32"]);
    let report = json(&dir.path().join("run/train_report.json"));
    assert_eq!(report["train"]["loss"], "triplet");
    assert_eq!(report["train"]["config"]["triplets_per_batch"], 32);
}

#[test]
fn missing_dataset_leaves_no_output() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let missing = dir.path().join("absent.csv");
    let res = sgm(&["train", "--dataset", s(&missing), "--out", s(&out)]);
    assert_eq!(code(&res), 2);
    assert!(!out.exists());
    let res = sgm(&["train", "--out", s(&out)]);
    assert_eq!(code(&res), 1);
    assert!(!out.exists());
}

#[test]
fn usage_and_data_errors_have_distinct_codes() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_blobs(dir.path());
    let out = dir.path().join("x");
    assert_eq!(code(&sgm(&["nonsense"])), 1);
    assert_eq!(code(&sgm(&["train", "--dataset", s(&data), "--out", s(&out), "--set", "updaets=3"])), 1);
    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "learning_rate = 0.001\nmystery = true\n").unwrap();
    assert_eq!(code(&sgm(&["train", "--dataset", s(&data), "--out", s(&out), "--config", s(&cfg)])), 1);

    let nan = dir.path().join("nan.csv");
    std::fs::write(&nan, "label,f0,f1\n0,1.0,NaN\n1,2.0,3.0\n").unwrap();
    let res = sgm(&["train", "--dataset", s(&nan), "--out", s(&out)]);
    assert_eq!(code(&res), 2);
    assert!(String::from_utf8_lossy(&res.stderr).contains("line 2"));
    assert!(!out.exists());
}

#[test]
fn config_file_is_echoed_resolved() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_blobs(dir.path());
    let cfg = dir.path().join("run.toml");
    std::fs::write(&cfg, "preset = \"paper-exp\"\nupdates = 40\nhidden = []\nembedding_dim = 4\n").unwrap();
    let out = dir.path().join("run");
    ok(&["train", "--dataset", s(&data), "--out", s(&out), "--config", s(&cfg), "--set", "lambda=0.5"]);
    let config = &json(&out.join("train_report.json"))["run"]["config"];
    assert_eq!(config["per_class"], 32);
    assert_eq!(config["updates"], 40);
    assert_eq!(config["lambda"], 0.5);
    assert_eq!(config["sigma"], 0.5);
}

#[test]
fn eval_report_is_complete() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_blobs(dir.path());
    let ckpt = train(dir.path(), &data, &[]);
    let out = dir.path().join("eval");
    ok(&["eval", "--dataset", s(&data), "--checkpoint", s(&ckpt), "--out", s(&out), "--set", "ks=[1,2,4,8,16]"]);
    let m = json(&out.join("metrics.json"));
    for key in ["nmi", "accuracy", "precision", "recall", "f1"] {
        let v = m[key].as_f64().unwrap();
        assert!((0.0..=1.0).contains(&v), "{key} = {v}");
    }
    assert_eq!(m["recall_at_k"].as_object().unwrap().len(), 5);
    assert_eq!(m["acc_at_k"].as_object().unwrap().len(), 5);
    assert_eq!(m["knn_k"], 11);
    assert_eq!(m["seed"], 0);
    assert_eq!(m["retrieval_excludes_query"], true);
    assert_eq!(m["class_gaussians"]["sigma"], 0.5);
    assert_eq!(m["class_gaussians"]["priors"].as_array().unwrap().len(), 3);
    assert_eq!(m["query_rows"], 24);
    assert!(m["accuracy"].as_f64().unwrap() > 0.9);
}

#[test]
fn eval_rejects_k_at_or_above_query_count() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_blobs(dir.path());
    let ckpt = train(dir.path(), &data, &[]);
    let out = dir.path().join("eval");
    let res = sgm(&["eval", "--dataset", s(&data), "--checkpoint", s(&ckpt), "--out", s(&out), "--set", "ks=[1,24]"]);
    assert_eq!(code(&res), 1);
    assert!(!out.exists());
}

#[test]
fn eval_rejects_checkpoint_of_other_width() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_blobs(dir.path());
    let ckpt = train(dir.path(), &data, &[]);
    let other = blobs(&dir.path().join("wide"), &["--classes", "3", "--per-class", "20", "--dim", "9"]);
    let res = sgm(&["eval", "--dataset", s(&other), "--checkpoint", s(&ckpt), "--out", s(&dir.path().join("e"))]);
    assert_eq!(code(&res), 2);
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains('6') && err.contains('9'), "{err}");
}

#[test]
fn untrained_encoder_scores_near_chance_on_overlapping_classes() {
    let dir = tempfile::tempdir().unwrap();
    let data = blobs(
        dir.path(),
        &["--classes", "4", "--per-class", "150", "--dim", "8", "--separation", "0", "--seed", "5"],
    );
    let out = dir.path().join("eval");
    ok(&["eval", "--dataset", s(&data), "--out", s(&out)]);
    let m = json(&out.join("metrics.json"));
    assert_eq!(m["checkpoint_id"], "fresh-init");
    for acc in [m["accuracy"].as_f64().unwrap(), m["gaussian"]["accuracy"].as_f64().unwrap()] {
        assert!((acc - 0.25).abs() <= 0.1, "accuracy {acc}");
    }
}

#[test]
fn subspace_writes_lineage_and_sublabels() {
    let dir = tempfile::tempdir().unwrap();
    let data = blobs(
        dir.path(),
        &[
            "--classes", "2", "--per-class", "80", "--dim", "6", "--separation", "20", "--sub-blobs", "2",
            "--sub-separation", "10",
        ],
    );
    let out = dir.path().join("sub");
    ok(&[
        "subspace", "--dataset", s(&data), "--out", s(&out), "--set", "levels=2", "--set", "min_members=10",
        "--set", "test_fraction=0", "--set", "standardize=false", "--set", "updates=100", "--set", "hidden=[]", "--set", "embedding_dim=6",
    ]);
    let lineage = json(&out.join("lineage.json"));
    let entries = lineage.as_array().unwrap();
    assert_eq!(entries.len(), 2 + 4);
    assert_eq!(entries[2]["level"], 2);
    let report = json(&out.join("subspace_report.json"));
    assert_eq!(report["lineage_mismatches"], 0);
    assert_eq!(report["subclasses_per_class"], serde_json::json!([2, 2]));

    let truth = std::fs::read_to_string(dir.path().join("blobs_truth.csv")).unwrap();
    let sub_blob: Vec<usize> = truth.lines().skip(1).map(|l| l.split(',').nth(2).unwrap().parse().unwrap()).collect();
    let labels = std::fs::read_to_string(out.join("sublabels.csv")).unwrap();
    let mut found = Vec::new();
    for line in labels.lines().skip(1) {
        let (row, sub) = line.split_once(',').unwrap();
        found.push((row.parse::<usize>().unwrap(), sub.parse::<usize>().unwrap()));
    }
    assert_eq!(found.len(), 160);
    let score = sgm::metrics::nmi(
        &found.iter().map(|f| f.1).collect::<Vec<_>>(),
        &found.iter().map(|f| sub_blob[f.0]).collect::<Vec<_>>(),
    )
    .unwrap();
    assert!(score > 0.99, "nmi {score}");
}

#[test]
fn subspace_with_one_level_keeps_labels() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_blobs(dir.path());
    let out = dir.path().join("sub");
    ok(&["subspace", "--dataset", s(&data), "--out", s(&out), "--set", "levels=1", "--set", "test_fraction=0"]);
    let labels = std::fs::read_to_string(out.join("sublabels.csv")).unwrap();
    let dataset = sgm::Dataset::load_csv(&data).unwrap();
    for (line, &label) in labels.lines().skip(1).zip(dataset.labels()) {
        assert_eq!(line.split_once(',').unwrap().1, label.to_string());
    }
    assert_eq!(json(&out.join("subspace_report.json"))["levels"], serde_json::json!([]));
}

#[test]
fn summarize_singleton_dataset() {
    let dir = tempfile::tempdir().unwrap();
    let data = dir.path().join("one.csv");
    std::fs::write(&data, "label,f0,f1\n7,0.5,-1.5\n").unwrap();
    let out = dir.path().join("sum");
    ok(&["summarize", "--dataset", s(&data), "--out", s(&out)]);
    let r = json(&out.join("summary.json"));
    assert_eq!(r["groups_fitted"], 1);
    assert_eq!(r["groups"][0]["top_k"], serde_json::json!([0]));
    assert_eq!(r["groups"][0]["medoid"], 0);
}

#[test]
fn summarize_recovers_blobs() {
    let dir = tempfile::tempdir().unwrap();
    let data = blobs(dir.path(), &["--classes", "5", "--per-class", "40", "--dim", "8", "--separation", "10"]);
    for mode in ["global", "per-class"] {
        let out = dir.path().join(mode);
        ok(&["summarize", "--dataset", s(&data), "--out", s(&out), "--mode", mode, "--set", "groups_per_class=2"]);
        let r = json(&out.join("summary.json"));
        let groups = r["groups"].as_array().unwrap();
        for g in groups {
            let top = g["top_k"].as_array().unwrap();
            assert_eq!(top.len(), g["size"].as_u64().unwrap().min(16) as usize);
            assert_eq!(top[0], g["medoid"]);
        }
        if mode == "global" {
            assert_eq!(groups.len(), 5);
            assert!(r["nmi_vs_labels"].as_f64().unwrap() >= 0.9);
        } else {
            assert!(groups.iter().all(|g| g["class"].as_u64().unwrap() < 5));
        }
        let csv = std::fs::read_to_string(out.join("groups.csv")).unwrap();
        assert_eq!(csv.lines().count(), 201);
    }
    let res = sgm(&["summarize", "--dataset", s(&data), "--out", s(&dir.path().join("bad")), "--set", "summarize_mode=\"tree\""]);
    assert_eq!(code(&res), 1);
}

#[test]
fn retrieve_returns_same_class_neighbors() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_blobs(dir.path());
    let ckpt = train(dir.path(), &data, &[]);
    let run = |out: &Path| {
        ok(&["retrieve", "--dataset", s(&data), "--checkpoint", s(&ckpt), "--out", s(out), "--query", "0", "--query", "60", "--k", "5"]);
        std::fs::read(out.join("retrieval.json")).unwrap()
    };
    let first = run(&dir.path().join("a"));
    assert_eq!(first, run(&dir.path().join("b")));
    let r: Value = serde_json::from_slice(&first).unwrap();
    for q in r["queries"].as_array().unwrap() {
        let neighbors = q["neighbors"].as_array().unwrap();
        assert_eq!(neighbors.len(), 5);
        assert!(neighbors.iter().all(|n| n["label"] == q["label"] && n["index"] != q["query"]));
    }
    let res = sgm(&["retrieve", "--dataset", s(&data), "--checkpoint", s(&ckpt), "--out", s(&dir.path().join("c")), "--query", "0", "--k", "0"]);
    assert_eq!(code(&res), 1);
    let res = sgm(&["retrieve", "--dataset", s(&data), "--checkpoint", s(&ckpt), "--out", s(&dir.path().join("c")), "--query", "120"]);
    assert_eq!(code(&res), 1);
}

#[test]
fn gradcheck_passes_and_corruption_fails() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("gc");
    let res = ok(&["gradcheck", "--out", s(&out), "--set", "gradcheck_instances=4"]);
    let text = String::from_utf8_lossy(&res.stdout);
    for name in ["sgm", "triplet", "encoder+sgm", "encoder+triplet"] {
        assert!(text.lines().any(|l| l.starts_with(name) && l.ends_with("PASS")), "{text}");
    }
    let r = json(&out.join("gradcheck.json"));
    assert_eq!(r["passed"], true);
    assert_eq!(r["suites"].as_array().unwrap().len(), 4);

    let bad = dir.path().join("bad");
    let res = sgm(&["gradcheck", "--out", s(&bad), "--set", "gradcheck_instances=2", "--corrupt"]);
    assert_eq!(code(&res), 3);
    assert_eq!(json(&bad.join("gradcheck.json"))["passed"], false);
}

#[test]
fn embed_round_trips_through_the_table_format() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_blobs(dir.path());
    let ckpt = train(dir.path(), &data, &[]);
    let out = dir.path().join("emb");
    ok(&["embed", "--dataset", s(&data), "--checkpoint", s(&ckpt), "--out", s(&out)]);
    let csv = std::fs::read_to_string(out.join("embeddings.csv")).unwrap();
    assert!(csv.starts_with("id,e0,e1,"));
    let table = EmbeddingTable::load(&out.join("embeddings.csv")).unwrap();
    assert_eq!(table.values.dim(), (120, 6));
    assert_eq!(table.ids, (0..120).collect::<Vec<_>>());
    let id = json(&dir.path().join("run/train_report.json"))["checkpoint_id"].clone();
    assert_eq!(Value::String(table.source), id);
}

#[test]
fn compare_reports_both_losses() {
    let dir = tempfile::tempdir().unwrap();
    let data = small_blobs(dir.path());
    let out = dir.path().join("cmp");
    let mut args = vec!["compare", "--dataset", s(&data), "--out", s(&out), "--set", "ks=[1,2,4]"];
    args.extend_from_slice(&FAST);
    ok(&args);
    let r = json(&out.join("compare.json"));
    assert_eq!(r["sgm"]["loss"], "sgm");
    assert_eq!(r["triplet"]["loss"], "triplet");
    assert_eq!(r["curves"].as_array().unwrap().len(), 3);
    assert!(out.join("sgm_checkpoint.json").exists() && out.join("triplet_checkpoint.json").exists());
}
