//! Black-box tests of the `mdsum` binary: exit codes, output contracts,
//! and byte-level idempotency of file-producing commands.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn mdsum(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_mdsum"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn code(out: &Output) -> i32 {
    out.status.code().expect("no signal")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).unwrap()
}

fn assert_ok(out: &Output, what: &str) {
    assert_eq!(
        code(out),
        0,
        "{what} failed\nstdout: {}\nstderr: {}",
        stdout(out),
        stderr(out)
    );
}

fn synth(dir: &Path, samples: usize, seed: u64) -> PathBuf {
    let corpus = dir.join("corpus.jsonl");
    let out = mdsum(&[
        "synth-corpus",
        "--out",
        corpus.to_str().unwrap(),
        "--samples",
        &samples.to_string(),
        "--min-docs",
        "2",
        "--max-docs",
        "3",
        "--vocab-size",
        "40",
        "--seed",
        &seed.to_string(),
    ]);
    assert_ok(&out, "synth-corpus");
    corpus
}

fn run_config(corpus: &Path, out_dir: &Path, max_steps: u64) -> String {
    format!(
        r#"
seed = 11

[data]
corpus = "{}"
out_dir = "{}"
checkpoint_interval = 0

[model]
d_model = 16
heads = 2
n_layers = 1
d_ff = 32
vocab_size = 100
dropout = 0.0
mask_source = "learned"
relations = 10
dep_hidden = 4
dep_slope = 0.01
max_src_len = 128
truncate_src = true

[model.positional]
doc_fn = "sin"
alpha = 0.1
d_model = 16

[train]
base_lr = 0.002
warmup_steps = 10
decay_milestones = [40, 60]
decay_factor = 0.5
accumulation = 1
max_steps = {max_steps}
batch_size = 4
"#,
        corpus.display(),
        out_dir.display()
    )
}

#[test]
fn synth_corpus_is_deterministic_and_parse_stats_reconciles() {
    let dir = tempfile::tempdir().unwrap();
    let a = synth(&dir.path().join("a"), 5, 21);
    let b = synth(&dir.path().join("b"), 5, 21);
    assert_eq!(fs::read(&a).unwrap(), fs::read(&b).unwrap());
    assert_eq!(
        fs::read(a.with_extension("stats.json")).unwrap(),
        fs::read(b.with_extension("stats.json")).unwrap()
    );

    let json = dir.path().join("counted.json");
    let out = mdsum(&[
        "parse-stats",
        "--corpus",
        a.to_str().unwrap(),
        "--json",
        json.to_str().unwrap(),
    ]);
    assert_ok(&out, "parse-stats");
    let text = stdout(&out);
    assert!(text.contains("samples\t5"), "{text}");
    assert!(text.contains("relation\troot\t"), "{text}");
    let counted: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&json).unwrap()).unwrap();
    let ground: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(a.with_extension("stats.json")).unwrap()).unwrap();
    assert_eq!(counted, ground);
}

#[test]
fn train_writes_artifacts_and_identical_runs_match_bytewise() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), 4, 7);
    let mut outputs = Vec::new();
    for name in ["run1", "run2"] {
        let out_dir = dir.path().join(name);
        let config = dir.path().join(format!("{name}.toml"));
        fs::write(&config, run_config(&corpus, &out_dir, 8)).unwrap();
        let out = mdsum(&["train", "--config", config.to_str().unwrap()]);
        assert_ok(&out, "train");
        let text = stdout(&out);
        assert!(text.contains("resolved configuration:"), "{text}");
        assert!(text.contains("vocab_size = "), "{text}");
        for artifact in ["checkpoint-final.ckpt", "trace.tsv", "config-resolved.toml"] {
            assert!(out_dir.join(artifact).exists(), "missing {artifact}");
        }
        outputs.push(out_dir);
    }
    assert_eq!(
        fs::read(outputs[0].join("trace.tsv")).unwrap(),
        fs::read(outputs[1].join("trace.tsv")).unwrap()
    );
    assert_eq!(
        fs::read(outputs[0].join("checkpoint-final.ckpt")).unwrap(),
        fs::read(outputs[1].join("checkpoint-final.ckpt")).unwrap()
    );

    // Rerunning into the same directory rewrites, never appends.
    let config = dir.path().join("run1.toml");
    let before = fs::read(outputs[0].join("trace.tsv")).unwrap();
    let out = mdsum(&["train", "--config", config.to_str().unwrap()]);
    assert_ok(&out, "train rerun");
    assert_eq!(fs::read(outputs[0].join("trace.tsv")).unwrap(), before);
}

#[test]
fn generate_prints_one_summary_line_per_sample() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), 3, 13);
    let out_dir = dir.path().join("out");
    let config = dir.path().join("run.toml");
    fs::write(&config, run_config(&corpus, &out_dir, 5)).unwrap();
    assert_ok(&mdsum(&["train", "--config", config.to_str().unwrap()]), "train");

    let ckpt = out_dir.join("checkpoint-final.ckpt");
    let out = mdsum(&[
        "generate",
        "--checkpoint",
        ckpt.to_str().unwrap(),
        "--input",
        corpus.to_str().unwrap(),
        "--min-len",
        "2",
        "--max-len",
        "12",
    ]);
    assert_ok(&out, "generate");
    let text = stdout(&out);
    let lines: Vec<&str> = text.lines().map(str::trim).collect();
    assert_eq!(lines.len(), 3);
    for line in lines {
        let words = line.split_whitespace().count();
        assert!((2..=12).contains(&words), "unexpected line {line:?}");
    }

    let missing = mdsum(&[
        "generate",
        "--checkpoint",
        dir.path().join("nope.ckpt").to_str().unwrap(),
        "--input",
        corpus.to_str().unwrap(),
    ]);
    assert_eq!(code(&missing), 2, "missing checkpoint is a runtime failure");
}

#[test]
fn score_emits_tsv_and_report_file() {
    let dir = tempfile::tempdir().unwrap();
    let cand = dir.path().join("cand.txt");
    let refs = dir.path().join("refs.txt");
    let report = dir.path().join("report.json");
    fs::write(&cand, "the cat sat\n").unwrap();
    fs::write(&refs, "the cat ran\n").unwrap();
    let out = mdsum(&[
        "score",
        "--candidates",
        cand.to_str().unwrap(),
        "--references",
        refs.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_ok(&out, "score");
    let text = stdout(&out);
    assert!(text.starts_with("metric\tprecision\trecall\tf1\n"), "{text}");
    assert!(text.contains("rouge-2\t0.5\t0.5\t0.5"), "{text}");
    assert!(text.contains("rouge-su\t0.5\t0.5\t0.5"), "{text}");
    let parsed: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(&report).unwrap()).unwrap();
    assert_eq!(parsed["rouge2"]["f1"], 0.5);
    assert_eq!(parsed["samples"], 1);

    fs::write(&refs, "the cat ran\nextra line\n").unwrap();
    let misaligned = mdsum(&[
        "score",
        "--candidates",
        cand.to_str().unwrap(),
        "--references",
        refs.to_str().unwrap(),
        "--report",
        report.to_str().unwrap(),
    ]);
    assert_eq!(code(&misaligned), 1);
    assert!(stderr(&misaligned).contains("line-aligned"));
}

#[test]
fn validate_protocol_reports_verdicts_with_exit_codes() {
    let same = mdsum(&["validate-protocol", "--doc-fn", "same"]);
    assert_eq!(code(&same), 1);
    assert!(stdout(&same).contains("Uniqueness violation"), "{}", stdout(&same));

    let linear = mdsum(&["validate-protocol", "--doc-fn", "linear:5"]);
    assert_eq!(code(&linear), 1);
    assert!(stdout(&linear).contains("violation"));

    for ok in ["sin", "cos", "iter-sin-cos", "iter-sin-cos-scaled", "random:4"] {
        let out = mdsum(&["validate-protocol", "--doc-fn", ok, "--qmax", "10"]);
        assert_ok(&out, ok);
        assert!(stdout(&out).contains("pass"));
    }

    let bogus = mdsum(&["validate-protocol", "--doc-fn", "spiral"]);
    assert_eq!(code(&bogus), 1);
    assert!(stderr(&bogus).contains("unknown document encoding"));
}

#[test]
fn inspect_encodings_prints_scalar_and_fused_table() {
    let out = mdsum(&[
        "inspect-encodings",
        "--doc-fn",
        "sin",
        "--alpha",
        "0.1",
        "--docs",
        "3",
        "--dmodel",
        "8",
    ]);
    assert_ok(&out, "inspect-encodings");
    let text = stdout(&out);
    assert!(text.contains("doc\tscalar\tfused vector at position 0"), "{text}");
    assert_eq!(text.lines().count(), 5, "{text}");
    assert!(text.lines().nth(2).unwrap().starts_with("1\t0.841471\t"), "{text}");
}

#[test]
fn usage_errors_exit_one_and_help_exits_zero() {
    assert_eq!(code(&mdsum(&[])), 1, "no subcommand is a usage error");
    assert_eq!(code(&mdsum(&["frobnicate"])), 1);
    assert_eq!(code(&mdsum(&["score", "--bogus-flag", "x"])), 1);
    assert_eq!(code(&mdsum(&["--help"])), 0);
    assert_eq!(code(&mdsum(&["--version"])), 0);
}

#[test]
fn bad_config_exits_one_and_missing_corpus_exits_two() {
    let dir = tempfile::tempdir().unwrap();
    let corpus = synth(dir.path(), 2, 3);

    let config = dir.path().join("bad.toml");
    let body = run_config(&corpus, &dir.path().join("out"), 3) + "\nmystery_key = 1\n";
    fs::write(&config, body).unwrap();
    let out = mdsum(&["train", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 1);
    assert!(stderr(&out).contains("bad run config"));

    let config = dir.path().join("gone.toml");
    fs::write(
        &config,
        run_config(&dir.path().join("missing.jsonl"), &dir.path().join("out"), 3),
    )
    .unwrap();
    let out = mdsum(&["train", "--config", config.to_str().unwrap()]);
    assert_eq!(code(&out), 2, "stderr: {}", stderr(&out));
}

#[cfg(unix)]
#[test]
fn closed_stdout_pipe_kills_quietly_instead_of_panicking() {
    use std::io::Read;
    use std::os::unix::process::ExitStatusExt;
    use std::process::Stdio;

    // ~1 MB of rows, far past the pipe buffer; reader hangs up after 64 bytes.
    let mut child = Command::new(env!("CARGO_BIN_EXE_mdsum"))
        .args(["inspect-encodings", "--doc-fn", "sin", "--docs", "10000"])
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    let mut first = [0u8; 64];
    child.stdout.take().unwrap().read_exact(&mut first).unwrap();
    let status = child.wait().unwrap();
    let mut err = String::new();
    child.stderr.take().unwrap().read_to_string(&mut err).unwrap();
    assert!(!err.contains("panicked"), "{err}");
    assert_eq!(status.signal(), Some(libc::SIGPIPE));
}
