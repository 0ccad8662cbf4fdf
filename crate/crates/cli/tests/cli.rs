//! The binary against the bundled synthetic fixture.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_sense-geometry"))
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("../core/fixtures/synthetic")
        .join(name)
}

fn run(args: &[&str], cwd: &Path) -> Output {
    bin().args(args).current_dir(cwd).output().unwrap()
}

fn ok(out: &Output) -> String {
    assert!(
        out.status.success(),
        "status {:?}\nstdout {}\nstderr {}",
        out.status,
        String::from_utf8_lossy(&out.stdout),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn ingest_prints_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&run(
        &["ingest", "--tokens", s(&fixture("tokens.jsonl"))],
        tmp.path(),
    ));
    let v: Value = serde_json::from_str(&out).unwrap();
    assert_eq!(v["lemmas"], 17);
}

#[test]
fn select_stimuli_bounds_sense_counts() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&run(
        &["select-stimuli", "--tokens", s(&fixture("tokens.jsonl"))],
        tmp.path(),
    ));
    let lemmas: Vec<&str> = out
        .lines()
        .skip(1)
        .map(|l| l.split(',').next().unwrap())
        .collect();
    assert!(lemmas.contains(&"line.n"));
    assert!(lemmas.contains(&"bass.n"));
    // two senses, a stopword, and single-sense types
    for gone in ["rare.n", "be.v", "cat.n", "dog.n"] {
        assert!(!lemmas.contains(&gone), "{gone}");
    }
    let narrow = ok(&run(
        &[
            "select-stimuli",
            "--tokens",
            s(&fixture("tokens.jsonl")),
            "--max-senses",
            "3",
        ],
        tmp.path(),
    ));
    assert!(!narrow.contains("line.n"));
}

#[test]
fn run_then_compare_directories_agree() {
    let tmp = tempfile::tempdir().unwrap();
    ok(&run(
        &[
            "run",
            "--config",
            s(&fixture("config.toml")),
            "--out",
            "full",
        ],
        tmp.path(),
    ));
    let report = json(&tmp.path().join("full/report.json"));
    let pipeline_r = report["comparison"]["cosine"]["result"]["r"]
        .as_f64()
        .unwrap();
    let expected = json(&fixture("expected.json"));
    assert!((pipeline_r - expected["cosine_r"].as_f64().unwrap()).abs() < 1e-9);

    ok(&run(
        &[
            "compare",
            "--human",
            "full/human",
            "--model",
            "full/centroids",
            "--labels",
            s(&fixture("pair_labels.csv")),
            "--seed",
            "20190611",
            "--set",
            "resamples=200",
            "--set",
            "baseline_draws=200",
            "--out",
            "cmp/report.json",
        ],
        tmp.path(),
    ));
    let cmp = json(&tmp.path().join("cmp/report.json"));
    assert_eq!(
        cmp["comparison"]["result"],
        report["comparison"]["cosine"]["result"]
    );
    assert_eq!(cmp["baseline"], report["comparison"]["baseline"]);
    assert_eq!(
        cmp["relation"]["human"],
        report["comparison"]["relation"]["human"]
    );

    let conf = run(
        &[
            "compare",
            "--human",
            "full/human",
            "--model",
            "full/confusion",
            "--mode",
            "confusion",
            "--no-labels",
            "--seed",
            "1",
            "--out",
            "conf.json",
        ],
        tmp.path(),
    );
    ok(&conf);
    let conf = json(&tmp.path().join("conf.json"));
    assert_eq!(conf["comparison"]["mode"], "all_off_diagonal");
    assert_eq!(conf["comparison"]["metric"], "confusion");
}

#[test]
fn resume_and_effective_config() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = fixture("config.toml");
    let printed = ok(&run(
        &[
            "run",
            "--config",
            s(&cfg),
            "--set",
            "classifier.folds=4",
            "--print-effective-config",
        ],
        tmp.path(),
    ));
    assert!(printed.contains("folds = 4"), "{printed}");
    assert!(!tmp.path().join("out").exists());

    ok(&run(
        &["run", "--config", s(&cfg), "--out", "a"],
        tmp.path(),
    ));
    let first = fs::read(tmp.path().join("a/report.json")).unwrap();
    ok(&run(
        &["run", "--config", s(&cfg), "--out", "a", "--resume"],
        tmp.path(),
    ));
    assert_eq!(first, fs::read(tmp.path().join("a/report.json")).unwrap());
}

#[test]
fn stage_subcommands_write_their_outputs() {
    let tmp = tempfile::tempdir().unwrap();
    let tokens = fixture("tokens.jsonl");
    let emb = fixture("embeddings.semb");
    let t = s(&tokens);
    let e = s(&emb);
    ok(&run(
        &["entropy", "--tokens", t, "--out", "ent"],
        tmp.path(),
    ));
    let csv = fs::read_to_string(tmp.path().join("ent/entropy.csv")).unwrap();
    assert!(csv.contains("line.n"));

    ok(&run(
        &[
            "centroids",
            "--tokens",
            t,
            "--embeddings",
            e,
            "--relatedness-norm",
            "minmax",
            "--out",
            "cen",
        ],
        tmp.path(),
    ));
    let m = json(&tmp.path().join("cen/centroids/bass.n.json"));
    assert_eq!(m["sense_keys"].as_array().unwrap().len(), 4);
    assert!(!tmp.path().join("cen/cv").exists());

    ok(&run(
        &[
            "classify",
            "--tokens",
            t,
            "--embeddings",
            e,
            "--folds",
            "3",
            "--lambda",
            "0.01",
            "--seed",
            "5",
            "--out",
            "cls",
        ],
        tmp.path(),
    ));
    assert!(tmp.path().join("cls/confusion/bass.n.json").is_file());
    let summary = fs::read_to_string(tmp.path().join("cls/classify_summary.csv")).unwrap();
    assert!(summary.starts_with("type,pos,n_tokens,n_senses,entropy,band,mean_f1"));

    ok(&run(
        &[
            "human",
            "--placements",
            s(&fixture("placements.jsonl")),
            "--language-excluded",
            "s09",
            "--subsample",
            "0",
            "--seed",
            "5",
            "--out",
            "hum",
        ],
        tmp.path(),
    ));
    let ex = fs::read_to_string(tmp.path().join("hum/exclusions.csv")).unwrap();
    assert!(ex.starts_with("participant,holdout_corr,repeat_corr,excluded,reason"));
    assert!(tmp.path().join("hum/human/bass.n.json").is_file());

    ok(&run(
        &[
            "viz",
            "--lemma",
            "seal.n",
            "--tokens",
            t,
            "--embeddings",
            e,
            "--iterations",
            "200",
            "--seed",
            "5",
            "--out",
            "viz",
        ],
        tmp.path(),
    ));
    let dir = tmp.path().join("viz/viz/seal.n");
    for f in [
        "projection.json",
        "scatter.svg",
        "dendrogram.json",
        "dendrogram.svg",
    ] {
        assert!(dir.join(f).is_file(), "{f}");
    }
}

#[test]
fn exit_codes_follow_error_kinds() {
    let tmp = tempfile::tempdir().unwrap();
    let t = fixture("tokens.jsonl");
    let e = fixture("embeddings.semb");
    // missing seed for a stochastic stage
    let out = run(
        &["classify", "--tokens", s(&t), "--embeddings", s(&e)],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    let out = run(
        &[
            "run",
            "--config",
            s(&fixture("config.toml")),
            "--set",
            "classifier.folds=1",
        ],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("classifier.folds"));

    fs::write(tmp.path().join("bad.jsonl"), "{\"token_id\": 1}\n").unwrap();
    let out = run(&["entropy", "--tokens", "bad.jsonl"], tmp.path());
    assert_eq!(out.status.code(), Some(3));
    assert!(String::from_utf8_lossy(&out.stderr).contains("stage ingest"));

    // constant model relatedness leaves the rank correlation undefined
    let flat = tmp.path().join("flat");
    fs::create_dir(&flat).unwrap();
    fs::write(
        flat.join("bass.n.json"),
        r#"{"lemma": "bass.n", "source": "centroid_cosine",
            "sense_keys": ["bass.n.01", "bass.n.02", "bass.n.03", "bass.n.04"],
            "values": [1,0,0,0, 0,1,0,0, 0,0,1,0, 0,0,0,1]}"#,
    )
    .unwrap();
    let out = run(
        &[
            "run",
            "--config",
            s(&fixture("config.toml")),
            "--out",
            "full",
        ],
        tmp.path(),
    );
    ok(&out);
    let out = run(
        &[
            "compare",
            "--human",
            "full/human",
            "--model",
            "flat",
            "--no-labels",
            "--seed",
            "1",
        ],
        tmp.path(),
    );
    assert_eq!(
        out.status.code(),
        Some(4),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );

    // fewer than 100 draws is a parameter error
    let out = run(
        &["calibrate-thresholds", "--seed", "1", "--draws", "10"],
        tmp.path(),
    );
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn calibration_prints_thresholds() {
    let tmp = tempfile::tempdir().unwrap();
    let out = ok(&run(
        &["calibrate-thresholds", "--seed", "3", "--draws", "300"],
        tmp.path(),
    ));
    let v: Value = serde_json::from_str(&out).unwrap();
    let h = v["holdout"]["threshold"].as_f64().unwrap();
    let r = v["repeat"]["threshold"].as_f64().unwrap();
    assert!((0.2..0.6).contains(&h), "{h}");
    assert!((0.0..0.4).contains(&r), "{r}");
}
