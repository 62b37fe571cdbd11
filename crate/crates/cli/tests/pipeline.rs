use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn pipeline(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_pipeline"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn synth_world(dir: &Path) -> PathBuf {
    let o = pipeline(&["synth", "--dir", dir.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    dir.join("pipeline.toml")
}

/// Every file under `root`, relative path to contents.
fn snapshot(root: &Path) -> BTreeMap<String, Vec<u8>> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                let rel = p.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, fs::read(&p).unwrap());
            }
        }
    }
    out
}

const STAGES: [&str; 9] = [
    "ingest",
    "kb",
    "filter",
    "sample",
    "pool",
    "statements",
    "profile",
    "evaluate",
    "report",
];

#[test]
fn full_run_then_rerun_skips_and_outputs_are_reproducible() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth_world(tmp.path());
    let cfg = config.to_str().unwrap();

    let first = pipeline(&["all", "--config", cfg]);
    assert!(first.status.success(), "{}\n{}", stdout(&first), stderr(&first));
    let text = stdout(&first);
    for s in STAGES {
        assert!(text.contains(&format!("{s}: done (")), "{s} missing in:\n{text}");
    }
    let out = tmp.path().join("out");
    for f in ["comparison.json", "comparison.txt", "confusion.txt", "summary.txt"] {
        assert!(out.join("report").join(f).is_file(), "report/{f}");
    }
    let cmp: serde_json::Value = serde_json::from_slice(&fs::read(out.join("report/comparison.json")).unwrap()).unwrap();
    for m in ["extractive", "abstractive", "bm25", "amazon_rag"] {
        assert!(cmp.to_string().contains(m), "{m} missing from comparison: {cmp}");
    }

    let again = pipeline(&["all", "--config", cfg]);
    assert!(again.status.success(), "{}", stderr(&again));
    let text = stdout(&again);
    for s in STAGES {
        assert!(text.contains(&format!("{s}: skipped (up to date)")), "{s} not skipped:\n{text}");
    }

    // A second output directory fed the same config and inputs.
    let other = tmp.path().join("pipeline_b.toml");
    let body = fs::read_to_string(&config).unwrap().replace("output = \"out\"", "output = \"out_b\"");
    fs::write(&other, body).unwrap();
    let second = pipeline(&["all", "--config", other.to_str().unwrap()]);
    assert!(second.status.success(), "{}", stderr(&second));
    let a = snapshot(&out);
    let b = snapshot(&tmp.path().join("out_b"));
    assert_eq!(a.keys().collect::<Vec<_>>(), b.keys().collect::<Vec<_>>());
    for (k, v) in &a {
        assert!(v == &b[k], "{k} differs between runs");
    }

    // Every manifest input traces to a raw file or an upstream output.
    for s in STAGES {
        let m: serde_json::Value = serde_json::from_slice(&fs::read(out.join(s).join("manifest.json")).unwrap()).unwrap();
        for input in m["inputs"].as_array().unwrap() {
            let path = input["path"].as_str().unwrap();
            let file = if tmp.path().join(path).is_file() { tmp.path().join(path) } else { out.join(path) };
            assert!(file.is_file(), "{s}: input {path} does not resolve");
        }
    }
}

#[test]
fn changed_setting_reruns_only_affected_stages() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth_world(tmp.path());
    let cfg = config.to_str().unwrap();
    for s in ["ingest", "kb", "filter", "sample"] {
        let o = pipeline(&[s, "--config", cfg]);
        assert!(o.status.success(), "{s}: {}", stderr(&o));
    }
    let body = fs::read_to_string(&config).unwrap().replace("[sample]\n", "[sample]\nresolution = 1.5\n");
    fs::write(&config, body).unwrap();
    let o = pipeline(&["filter", "--config", cfg]);
    assert!(stdout(&o).contains("filter: skipped (up to date)"), "{}", stdout(&o));
    let o = pipeline(&["sample", "--config", cfg]);
    assert!(stdout(&o).contains("sample: done ("), "{}", stdout(&o));

    let o = pipeline(&["sample", "--config", cfg, "--force"]);
    assert!(stdout(&o).contains("sample: done ("), "forced rerun: {}", stdout(&o));
}

#[test]
fn filter_before_ingest_names_the_missing_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth_world(tmp.path());
    let o = pipeline(&["filter", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("requires: ingest"), "{}", stderr(&o));
}

#[test]
fn invalid_config_exits_with_validation_status() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth_world(tmp.path());
    let cfg = config.to_str().unwrap();
    let original = fs::read_to_string(&config).unwrap();

    fs::write(&config, original.replace("[sample]\n", "[sample]\nunknown_key = 1\n")).unwrap();
    let o = pipeline(&["ingest", "--config", cfg]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));

    fs::write(&config, original.replace("corpus = \"tweets.jsonl\"", "corpus = \"absent.jsonl\"")).unwrap();
    let o = pipeline(&["ingest", "--config", cfg]);
    assert_eq!(o.status.code(), Some(1), "{}", stderr(&o));
    assert!(stderr(&o).contains("absent.jsonl"), "{}", stderr(&o));

    let o = pipeline(&["ingest", "--config", tmp.path().join("nope.toml").to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(1));

    let o = pipeline(&["no-such-stage"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn corrupt_input_is_a_runtime_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let config = synth_world(tmp.path());
    fs::write(tmp.path().join("retweets.jsonl"), "{not json\n").unwrap();
    let o = pipeline(&["ingest", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}

#[test]
fn serve_annotation_builds_the_batch_and_answers_over_http() {
    use std::io::{BufRead, BufReader, Read, Write};
    use std::net::TcpStream;
    use std::process::Stdio;

    let tmp = tempfile::tempdir().unwrap();
    let config = synth_world(tmp.path());
    let cfg = config.to_str().unwrap();

    let o = pipeline(&["serve-annotation", "--config", cfg, "--bind", "127.0.0.1:0"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    assert!(stderr(&o).contains("requires: filter"), "{}", stderr(&o));

    let o = pipeline(&["all", "--config", cfg]);
    assert!(o.status.success(), "{}", stderr(&o));

    let mut child = Command::new(env!("CARGO_BIN_EXE_pipeline"))
        .args(["serve-annotation", "--config", cfg, "--bind", "127.0.0.1:0"])
        .stdout(Stdio::piped())
        .stderr(Stdio::null())
        .spawn()
        .unwrap();
    let mut lines = BufReader::new(child.stdout.take().unwrap()).lines();
    let created = lines.next().unwrap().unwrap();
    // 20 profile users x 15 statements, two primary tasks per pair.
    assert_eq!(created, "created batch main with 300 pairs, 600 tasks");
    let listening = lines.next().unwrap().unwrap();
    let addr = listening.strip_prefix("listening on http://").expect(&listening).to_string();

    let mut stream = TcpStream::connect(&addr).unwrap();
    write!(
        stream,
        "GET /tasks/next?annotator=annotator_1 HTTP/1.1\r\nHost: {addr}\r\nAuthorization: Bearer demo-token-1\r\nConnection: close\r\n\r\n"
    )
    .unwrap();
    let mut response = String::new();
    stream.read_to_string(&mut response).unwrap();
    child.kill().unwrap();
    child.wait().unwrap();
    assert!(response.starts_with("HTTP/1.1 200"), "{response}");
    assert!(response.contains("\"pool_tweets\""), "{response}");

    // The journal survives the process; nothing is labeled yet.
    let o = pipeline(&["export-gold", "--config", cfg]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
}
