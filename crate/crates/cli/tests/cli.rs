use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_risk-sampling"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn write_small_config(dir: &Path) -> std::path::PathBuf {
    let corpus = dir.join("corpus");
    let gen = cli(&["generate-corpus", "--out", corpus.to_str().unwrap(), "--works", "150", "--seed", "3"]);
    assert!(gen.status.success(), "{}", String::from_utf8_lossy(&gen.stderr));
    let config = dir.join("small.toml");
    fs::write(
        &config,
        r#"
seed_size = 30
budget = 10
iterations = 2
strategies = ["risk", "random"]
seeds = [0, 1]

[data]
kind = "files"
left = "corpus/left.csv"
right = "corpus/right.csv"
pairs = "corpus/pairs.csv"
"#,
    )
    .unwrap();
    config
}

#[test]
fn generate_corpus_writes_three_tables() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("c");
    let o = cli(&["generate-corpus", "--out", out.to_str().unwrap(), "--works", "60"]);
    assert!(o.status.success());
    for f in ["left.csv", "right.csv", "pairs.csv"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    assert!(stdout(&o).contains("pairs to"));
}

#[test]
fn verify_bounds_small_run_passes_check() {
    let o = cli(&["verify-bounds", "--trials", "200", "--seed", "4", "--check"]);
    assert!(o.status.success(), "{}", stdout(&o));
    let text = stdout(&o);
    for name in ["lemma1", "theorem1", "theorem2", "theorem2-saturating"] {
        assert!(text.contains(name), "{name} missing from\n{text}");
    }
}

#[test]
fn run_writes_log_and_refuses_to_overwrite() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_small_config(dir.path());
    let out = dir.path().join("run");
    let args = ["run", "--config", config.to_str().unwrap(), "--out", out.to_str().unwrap()];

    let first = cli(&args);
    assert!(first.status.success(), "{}", String::from_utf8_lossy(&first.stderr));
    let log = fs::read_to_string(out.join("run_log.csv")).unwrap();
    // 2 strategies x 2 seeds x 3 evaluations, plus the header
    assert_eq!(log.lines().count(), 13);
    assert!(log.starts_with("strategy,seed,iteration"));
    for f in ["config.json", "environment.json", "queries.jsonl"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }
    assert!(stdout(&first).contains("risk"));

    let second = cli(&args);
    assert_eq!(second.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&second.stderr).contains("--force"));

    let mut forced = args.to_vec();
    forced.push("--force");
    assert!(cli(&forced).status.success());
}

#[test]
fn run_overrides_apply() {
    let dir = tempfile::tempdir().unwrap();
    let config = write_small_config(dir.path());
    let out = dir.path().join("run");
    let o = cli(&[
        "run",
        "--config",
        config.to_str().unwrap(),
        "--out",
        out.to_str().unwrap(),
        "--seeds",
        "5",
        "--strategies",
        "max-entropy",
        "--iterations",
        "1",
        "--validation-ratio",
        "0.5",
    ]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    let log = fs::read_to_string(out.join("run_log.csv")).unwrap();
    let rows: Vec<&str> = log.lines().skip(1).collect();
    assert_eq!(rows.len(), 2);
    assert!(rows.iter().all(|r| r.starts_with("max-entropy,5,")));
    assert!(stdout(&o).contains("validation ratio 0.5"));
}

#[test]
fn bad_arguments_exit_with_usage_error() {
    assert_eq!(cli(&["run", "--strategies", "bogus"]).status.code(), Some(2));
    let dir = tempfile::tempdir().unwrap();
    let config = dir.path().join("bad.toml");
    fs::write(&config, "budget = 0\n").unwrap();
    let o = cli(&["run", "--config", config.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&o.stderr).contains("budget"));
}
