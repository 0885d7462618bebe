use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};
use std::sync::OnceLock;

use tempfile::TempDir;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_repmot"))
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(out.status.success(), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    out
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small synthetic data set plus a briefly trained model, shared by the tests.
struct Fixture {
    _dir: TempDir,
    data: PathBuf,
    model: PathBuf,
}

fn train_into(data: &Path, out: &Path, threads: &str) {
    ok(&[
        "train",
        "--corpus",
        s(&data.join("corpus.tsv")),
        "--queries",
        s(&data.join("queries.tsv")),
        "--qrels",
        s(&data.join("qrels.txt")),
        "--output",
        s(out),
        "--warmup-epochs",
        "1",
        "--joint-epochs",
        "1",
        "--num-centroids",
        "4",
        "--seed",
        "5",
        "--threads",
        threads,
    ]);
}

fn fixture() -> &'static Fixture {
    static F: OnceLock<Fixture> = OnceLock::new();
    F.get_or_init(|| {
        let dir = TempDir::new().unwrap();
        let data = dir.path().join("data");
        ok(&["synth", "--output", s(&data), "--num-docs", "80", "--num-queries", "30", "--seed", "5"]);
        let out = dir.path().join("model");
        train_into(&data, &out, "2");
        Fixture { model: out.join("model.bin"), data, _dir: dir }
    })
}

fn stderr(out: &Output) -> String {
    String::from_utf8_lossy(&out.stderr).into_owned()
}

#[test]
fn synth_and_train_write_expected_files() {
    let f = fixture();
    for name in ["corpus.tsv", "queries.tsv", "qrels.txt", "effective_config.toml"] {
        assert!(f.data.join(name).exists(), "{name}");
    }
    let model = repmot::Model::load(&f.model).unwrap();
    assert_eq!(model.num_subvectors(), 8);
    assert_eq!(model.num_centroids(), 4);
    let loss = fs::read_to_string(f.model.with_file_name("loss.csv")).unwrap();
    assert!(loss.starts_with("step,L_r,L_m,total\n"));
}

#[test]
fn same_seed_gives_identical_files() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let data = dir.path().join("data");
    ok(&["synth", "--output", s(&data), "--num-docs", "80", "--num-queries", "30", "--seed", "5"]);
    for name in ["corpus.tsv", "queries.tsv", "qrels.txt"] {
        assert_eq!(fs::read(data.join(name)).unwrap(), fs::read(f.data.join(name)).unwrap());
    }
    let out = dir.path().join("model");
    train_into(&f.data, &out, "1");
    assert_eq!(fs::read(out.join("model.bin")).unwrap(), fs::read(&f.model).unwrap());
    assert_eq!(fs::read(out.join("loss.csv")).unwrap(), fs::read(f.model.with_file_name("loss.csv")).unwrap());
}

#[test]
fn missing_corpus_exits_with_usage_code() {
    let dir = TempDir::new().unwrap();
    let missing = dir.path().join("nope.tsv");
    let out = run(&["train", "--corpus", s(&missing), "--output", s(dir.path())]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains(s(&missing)));
}

#[test]
fn unknown_method_lists_valid_names() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "mask-eval",
        "--model",
        s(&f.model),
        "--corpus",
        s(&f.data.join("corpus.tsv")),
        "--methods",
        "Head,Bogus",
        "--output",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let err = stderr(&out);
    for name in ["Tail", "TF-IDF", "GlobalT", "MoT"] {
        assert!(err.contains(name), "{err}");
    }
}

fn mask_eval(f: &Fixture, out: &Path, threads: &str) {
    ok(&[
        "mask-eval",
        "--model",
        s(&f.model),
        "--corpus",
        s(&f.data.join("corpus.tsv")),
        "--methods",
        "Head,MoT",
        "--steps",
        "8",
        "--output",
        s(out),
        "--threads",
        threads,
    ]);
}

#[test]
fn method_subset_gives_one_row_per_method() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    mask_eval(f, dir.path(), "2");
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("mask_eval.json")).unwrap()).unwrap();
    let methods = report[0]["methods"].as_array().unwrap();
    assert_eq!(methods.len(), 2);
    assert_eq!(methods[0]["method"], "Head");
    assert_eq!(methods[1]["method"], "MoT");
    let table = fs::read_to_string(dir.path().join("mask_eval.txt")).unwrap();
    assert!(table.contains("Head") && table.contains("MoT") && !table.contains("Tail"));
}

#[test]
fn thread_count_does_not_change_results() {
    let f = fixture();
    let a = TempDir::new().unwrap();
    let b = TempDir::new().unwrap();
    mask_eval(f, a.path(), "1");
    mask_eval(f, b.path(), "4");
    for name in ["mask_eval.json", "mask_eval.txt"] {
        assert_eq!(fs::read(a.path().join(name)).unwrap(), fs::read(b.path().join(name)).unwrap());
    }
}

fn inspect(f: &Fixture, out: &Path, extra: &[&str]) -> Output {
    let corpus = f.data.join("corpus.tsv");
    let mut args = vec!["inspect", "--model", s(&f.model), "--corpus", s(&corpus), "--output", s(out)];
    args.extend_from_slice(extra);
    run(&args)
}

#[test]
fn inspect_empty_code_gives_no_words() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let one = dir.path().join("one.tsv");
    let first = fs::read_to_string(f.data.join("corpus.tsv")).unwrap().lines().next().unwrap().to_string();
    fs::write(&one, format!("{first}\n")).unwrap();
    let model = repmot::Model::load(&f.model).unwrap();
    let used = model.code(model.tokenize(first.split_once('\t').unwrap().1).unwrap().ids()).indices()[0];
    let other = ((used + 1) % 4).to_string();
    ok(&["inspect", "--model", s(&f.model), "--corpus", s(&one), "--pool", "0", "--code", &other, "--output", s(dir.path())]);
    let report: serde_json::Value = serde_json::from_str(&fs::read_to_string(dir.path().join("topic.json")).unwrap()).unwrap();
    assert_eq!(report["doc_count"], 0);
    assert!(report["words"].as_array().unwrap().is_empty());
}

#[test]
fn inspect_pool_out_of_range_exits_with_usage_code() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let out = inspect(f, dir.path(), &["--pool", "8"]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn inspect_and_wordcloud_write_svg() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let out = inspect(f, dir.path(), &["--pool", "1", "--svg"]);
    assert!(out.status.success(), "{}", stderr(&out));
    assert!(fs::read_to_string(dir.path().join("topic.svg")).unwrap().starts_with("<svg"));
    let svg = dir.path().join("cloud/out.svg");
    ok(&["wordcloud", s(&dir.path().join("topic.json")), "--out", s(&svg)]);
    assert!(fs::read_to_string(svg).unwrap().contains("</svg>"));
}

#[test]
fn retrieve_without_qrels_writes_no_metrics() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let (corpus, queries) = (f.data.join("corpus.tsv"), f.data.join("queries.tsv"));
    let base = [
        "retrieve",
        "--model",
        s(&f.model),
        "--corpus",
        s(&corpus),
        "--queries",
        s(&queries),
        "--k",
        "5",
    ];
    let plain = dir.path().join("plain");
    let mut args = base.to_vec();
    args.extend(["--output", s(&plain)]);
    ok(&args);
    let run_file = fs::read_to_string(plain.join("run.trec")).unwrap();
    assert_eq!(run_file.lines().count(), 30 * 5);
    assert!(!plain.join("metrics.json").exists());

    let scored = dir.path().join("scored");
    let qrels = f.data.join("qrels.txt");
    let mut args = base.to_vec();
    args.extend(["--qrels", s(&qrels), "--output", s(&scored)]);
    ok(&args);
    let m: serde_json::Value = serde_json::from_str(&fs::read_to_string(scored.join("metrics.json")).unwrap()).unwrap();
    let mrr = m["MRR@10"].as_f64().unwrap();
    assert!((0.0..=1.0).contains(&mrr));
}

#[test]
fn attribute_short_document_gives_token_by_pool_matrix() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let corpus = dir.path().join("short.tsv");
    fs::write(&corpus, "tiny\tt0w0 t1w0 s0\nother\tt2w1 t3w2 t4w3 t5w4\n").unwrap();
    ok(&["attribute", "--model", s(&f.model), "--corpus", s(&corpus), "--doc", "tiny", "--steps", "8", "--output", s(dir.path())]);
    let content = fs::read_to_string(dir.path().join("attributions.jsonl")).unwrap();
    let lines: Vec<&str> = content.lines().collect();
    assert_eq!(lines.len(), 1);
    let rec: serde_json::Value = serde_json::from_str(lines[0]).unwrap();
    assert_eq!(rec["doc_id"], "tiny");
    let matrix = rec["matrix"].as_array().unwrap();
    assert_eq!(matrix.len(), 3);
    assert!(matrix.iter().all(|r| r.as_array().unwrap().len() == 8));
}

#[test]
fn attribute_unknown_document_exits_with_usage_code() {
    let f = fixture();
    let dir = TempDir::new().unwrap();
    let out = run(&[
        "attribute",
        "--model",
        s(&f.model),
        "--corpus",
        s(&f.data.join("corpus.tsv")),
        "--doc",
        "no-such-doc",
        "--output",
        s(dir.path()),
    ]);
    assert_eq!(out.status.code(), Some(2));
    assert!(stderr(&out).contains("no-such-doc"));
}

#[test]
fn bad_flags_exit_with_usage_code() {
    assert_eq!(run(&["train", "--bogus"]).status.code(), Some(2));
    let dir = TempDir::new().unwrap();
    assert_eq!(run(&["synth", "--threads", "0", "--output", s(dir.path())]).status.code(), Some(2));
    assert!(!dir.path().join("corpus.tsv").exists());
}
