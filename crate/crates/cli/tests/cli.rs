use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use tempfile::TempDir;

fn negpmi(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_negpmi"))
        .args(args)
        .env_remove("NEGPMI_DATA_DIR")
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn ok(o: Output) -> Output {
    assert!(o.status.success(), "exit {:?}\nstdout:\n{}\nstderr:\n{}", o.status, stdout(&o), stderr(&o));
    o
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

/// Small corpus with repeated structure so every stage has work to do.
fn workspace() -> (TempDir, PathBuf) {
    let dir = tempfile::tempdir().unwrap();
    let mut text = String::new();
    let rows = [
        "the king rules the kingdom and the queen rules the land",
        "a man walks to the city and a woman walks to the town",
        "paris is the capital of france and rome is the capital of italy",
        "the cat sat on the mat while the dog slept on the rug",
        "berlin is the capital of germany and madrid is the capital of spain",
    ];
    for i in 0..60 {
        text.push_str(rows[i % rows.len()]);
        text.push('\n');
    }
    let corpus = dir.path().join("corpus.txt");
    fs::write(&corpus, text).unwrap();
    (dir, corpus)
}

fn build(dir: &Path, corpus: &Path) -> (PathBuf, PathBuf) {
    let vocab = dir.join("vocab.tsv");
    let cooc = dir.join("m.cooc");
    ok(negpmi(&["vocab", "--corpus", s(corpus), "--min-count", "2", "--out", s(&vocab)]));
    ok(negpmi(&["cooc", "--corpus", s(corpus), "--vocab", s(&vocab), "--out", s(&cooc), "--subsample", "0"]));
    (vocab, cooc)
}

fn train_args<'a>(corpus: &'a Path, vocab: &'a Path, cooc: &'a Path, out: &'a Path) -> Vec<&'a str> {
    vec![
        "train", "--corpus", s(corpus), "--vocab", s(vocab), "--cooc", s(cooc), "--out", s(out),
        "--subsample", "0", "--dim", "8", "--epochs", "2", "--deterministic",
    ]
}

#[test]
fn help_lists_defaults() {
    let help = stdout(&ok(negpmi(&["train", "--help"])));
    for needle in [
        "[default: 2]",
        "[default: 300]",
        "[default: 5]",
        "[default: 0.025]",
        "[default: 0.75]",
        "[default: ppmi]",
        "[default: 0.00001]",
    ] {
        assert!(help.contains(needle), "missing {needle} in\n{help}");
    }
}

#[test]
fn pipeline_runs_end_to_end() {
    let (dir, corpus) = workspace();
    let d = dir.path();
    let (vocab, cooc) = build(d, &corpus);
    let vectors = d.join("vectors.txt");
    let report = d.join("report.jsonl");
    let mut args = train_args(&corpus, &vocab, &cooc, &vectors);
    args.extend(["--save-contexts", "--variant", "ppmi+pos", "--report", s(&report)]);
    let out = stdout(&ok(negpmi(&args)));
    assert!(out.contains("# variant = ppmi+pos"), "{out}");
    assert!(out.contains("# dim = 8"));
    assert!(out.contains("epoch=2"));
    assert!(out.contains("steps_executed"));

    let text = fs::read_to_string(&vectors).unwrap();
    let header: Vec<usize> = text.lines().next().unwrap().split(' ').map(|x| x.parse().unwrap()).collect();
    assert_eq!(header[1], 8);
    assert_eq!(text.lines().count(), header[0] + 1);
    assert!(d.join("vectors.ctx.txt").exists());

    let records: Vec<serde_json::Value> = fs::read_to_string(&report)
        .unwrap()
        .lines()
        .map(|l| serde_json::from_str(l).unwrap())
        .collect();
    assert_eq!(records[0]["event"], "config");
    assert_eq!(records[0]["config"]["variant"], "ppmi+pos");
    assert_eq!(records.iter().filter(|r| r["event"] == "epoch").count(), 2);
    assert_eq!(records.last().unwrap()["event"], "result");

    let ws = d.join("ws.txt");
    fs::write(&ws, "word1\tword2\tscore\nking\tqueen\t8\nman\twoman\t7\ncat\tdog\t6\nparis\trome\t5\nking\tmat\t1\nzzz\tking\t3\n").unwrap();
    let out = stdout(&ok(negpmi(&["eval-ws", "--vectors", s(&vectors), "--dataset", s(&ws)])));
    assert!(out.contains("covered 5/6"), "{out}");

    let an = d.join("an.txt");
    fs::write(&an, ": capital-common-countries\nparis france rome italy\nberlin germany madrid spain\n: gram1-x\nking queen man woman\n").unwrap();
    let out = stdout(&ok(negpmi(&["eval-analogy", "--vectors", s(&vectors), "--dataset", s(&an)])));
    assert!(out.contains("semantic") && out.contains("syntactic") && out.contains("0 unanswerable"), "{out}");

    let sts = d.join("sts.tsv");
    fs::write(&sts, "4.0\tthe king rules\tthe queen rules\n1.0\tthe cat sat\tparis is the capital\n2.5\ta man walks\ta woman walks\n").unwrap();
    let out = stdout(&ok(negpmi(&[
        "eval-sts", "--vectors", s(&vectors), "--dataset", s(&sts),
        "--score-col", "0", "--sent1-col", "1", "--sent2-col", "2",
    ])));
    assert!(out.contains("covered 3/3"), "{out}");
}

#[test]
fn histogram_emits_csv_and_summary() {
    let (dir, corpus) = workspace();
    let d = dir.path();
    let (vocab, cooc) = build(d, &corpus);
    let csv = d.join("hist.csv");
    ok(negpmi(&[
        "histogram", "--corpus", s(&corpus), "--vocab", s(&vocab), "--cooc", s(&cooc),
        "--n", "2000", "--z", "-5", "--bucket-width", "0.2", "--subsample", "0", "--out", s(&csv),
    ]));
    let text = fs::read_to_string(&csv).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("bucket_start,bucket_end,count"));
    let mut total = 0;
    let mut summary = None;
    for l in lines {
        if l.starts_with('#') {
            summary = Some(l.to_owned());
            continue;
        }
        let f: Vec<&str> = l.split(',').collect();
        assert_eq!(f.len(), 3);
        total += f[2].parse::<usize>().unwrap();
    }
    assert_eq!(total, 2000);
    let summary = summary.expect("summary line");
    assert!(summary.contains("[z,z]=") && summary.contains("(0,inf)="), "{summary}");
    assert!(text.starts_with("bucket_start,bucket_end,count\n-5.0000,"), "{text}");
}

#[test]
fn deterministic_runs_are_identical() {
    let (dir, corpus) = workspace();
    let d = dir.path();
    let (vocab, cooc) = build(d, &corpus);
    let a = d.join("a.txt");
    let b = d.join("b.txt");
    ok(negpmi(&train_args(&corpus, &vocab, &cooc, &a)));
    ok(negpmi(&train_args(&corpus, &vocab, &cooc, &b)));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());

    // Counting inside `train` gives the same matrix as the `cooc` stage.
    let c = d.join("c.txt");
    let mut args = train_args(&corpus, &vocab, &cooc, &c);
    let at = args.iter().position(|x| *x == "--cooc").unwrap();
    args.drain(at..at + 2);
    ok(negpmi(&args));
    assert_eq!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn invalid_variant_is_a_usage_error() {
    let (dir, corpus) = workspace();
    let (vocab, cooc) = build(dir.path(), &corpus);
    let out = dir.path().join("v.txt");
    let mut args = train_args(&corpus, &vocab, &cooc, &out);
    args.extend(["--variant", "cpmi:+3"]);
    let o = negpmi(&args);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn window_mismatch_is_rejected_before_training() {
    let (dir, corpus) = workspace();
    let (vocab, cooc) = build(dir.path(), &corpus);
    let out = dir.path().join("v.txt");
    let mut args = train_args(&corpus, &vocab, &cooc, &out);
    args.extend(["--window", "3"]);
    let o = negpmi(&args);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("window"), "{}", stderr(&o));
    assert!(!stdout(&o).contains("epoch="));

    let mut args = train_args(&corpus, &vocab, &cooc, &out);
    args.push("--non-positional");
    assert_eq!(negpmi(&args).status.code(), Some(2));
}

#[test]
fn conflicting_thread_flags_are_rejected() {
    let (dir, corpus) = workspace();
    let (vocab, cooc) = build(dir.path(), &corpus);
    let out = dir.path().join("v.txt");
    let mut args = train_args(&corpus, &vocab, &cooc, &out);
    args.extend(["--threads", "4"]);
    assert_eq!(negpmi(&args).status.code(), Some(2));
}

#[test]
fn missing_and_corrupt_inputs() {
    let (dir, corpus) = workspace();
    let d = dir.path();
    let o = negpmi(&["vocab", "--corpus", "/nonexistent/corpus.txt", "--out", s(&d.join("v.tsv"))]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not found"));

    let (vocab, cooc) = build(d, &corpus);
    let mut bytes = fs::read(&cooc).unwrap();
    bytes[0] = b'X';
    fs::write(&cooc, bytes).unwrap();
    let o = negpmi(&train_args(&corpus, &vocab, &cooc, &d.join("v.txt")));
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains("magic"), "{}", stderr(&o));

    let bad = d.join("bad.txt");
    fs::write(&bad, "2 3\na 1 2 3\nb 1 2 3 4\n").unwrap();
    let ws = d.join("ws.txt");
    fs::write(&ws, "a\tb\t1\n").unwrap();
    let o = negpmi(&["eval-ws", "--vectors", s(&bad), "--dataset", s(&ws)]);
    assert_eq!(o.status.code(), Some(3));
    assert!(stderr(&o).contains(":3:"), "{}", stderr(&o));
}

#[test]
fn data_dir_resolves_relative_inputs() {
    let (dir, corpus) = workspace();
    let out = dir.path().join("vocab.tsv");
    let o = Command::new(env!("CARGO_BIN_EXE_negpmi"))
        .args(["vocab", "--corpus", "corpus.txt", "--min-count", "1", "--out", s(&out)])
        .env("NEGPMI_DATA_DIR", dir.path())
        .current_dir(std::env::temp_dir())
        .output()
        .unwrap();
    ok(o);
    assert!(fs::read_to_string(&out).unwrap().contains("the\t"));
    assert!(corpus.exists());
}
