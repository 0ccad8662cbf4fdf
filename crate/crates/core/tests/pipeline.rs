//! End-to-end runs over the bundled synthetic fixture.

use std::collections::BTreeMap;
use std::fs;
use std::path::{Path, PathBuf};

use sense_geometry::error::ErrorKind;
use sense_geometry::fixture::Expected;
use sense_geometry::pipeline::{
    run_pipeline, run_pipeline_with, validate_config, Report, RunConfig, RunOptions, Stage,
};
use sha2::{Digest, Sha256};

const TOL: f64 = 1e-9;

fn fixture_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("fixtures/synthetic")
}

fn expected() -> Expected {
    serde_json::from_str(&fs::read_to_string(fixture_dir().join("expected.json")).unwrap()).unwrap()
}

fn config(out: &Path, extra: &[&str]) -> RunConfig {
    let mut overrides = vec![format!("out_dir=\"{}\"", out.display())];
    overrides.extend(extra.iter().map(|s| s.to_string()));
    RunConfig::load(&fixture_dir().join("config.toml"), &overrides).unwrap()
}

/// Digest of every file under `root` except the stage records.
fn tree_digest(root: &Path) -> BTreeMap<String, String> {
    let mut out = BTreeMap::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(dir) = stack.pop() {
        for entry in fs::read_dir(&dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                stack.push(path);
            } else {
                let rel = path
                    .strip_prefix(root)
                    .unwrap()
                    .to_string_lossy()
                    .into_owned();
                if !rel.starts_with("stages") {
                    out.insert(rel, hex::encode(Sha256::digest(fs::read(&path).unwrap())));
                }
            }
        }
    }
    out
}

fn close(a: f64, b: f64) -> bool {
    (a - b).abs() <= TOL
}

#[test]
fn fixture_run_reproduces_planted_statistics() {
    let tmp = tempfile::tempdir().unwrap();
    let report = run_pipeline(&config(tmp.path(), &[])).unwrap();
    let e = expected();

    let cmp = report.comparison.as_ref().expect("comparison");
    let cos = &cmp.section.cosine;
    assert!(
        close(cos.result.r, e.cosine_r),
        "cosine r {} vs {}",
        cos.result.r,
        e.cosine_r
    );
    assert_eq!(cos.result.n, e.cosine_pairs);

    let rel = cmp.section.relation.as_ref().expect("relation");
    assert_eq!(
        rel.labelled_pairs,
        e.human_polysemy.len() + e.human_homonymy.len()
    );
    assert!(
        close(rel.human.u_a, e.human_u_polysemy),
        "{} vs {}",
        rel.human.u_a,
        e.human_u_polysemy
    );
    assert!(
        close(rel.model.u_a, e.model_u_polysemy),
        "{} vs {}",
        rel.model.u_a,
        e.model_u_polysemy
    );

    let human = report.human.as_ref().expect("human");
    let excluded: Vec<String> = human
        .participants_table
        .iter()
        .filter(|r| r.excluded)
        .map(|r| r.participant.clone())
        .collect();
    assert_eq!(excluded, e.excluded);
    let lemmas: Vec<String> = human.lemmas.iter().map(|l| l.to_string()).collect();
    assert_eq!(lemmas, e.human_lemmas);

    let corpus = report.corpus.as_ref().expect("corpus");
    assert_eq!(corpus.summary.total_lemmas, e.total_lemmas);
    let mut candidates: Vec<String> = report.lemmas.iter().map(|l| l.lemma.to_string()).collect();
    let mut planted = e.candidates.clone();
    candidates.sort();
    planted.sort();
    assert_eq!(candidates, planted);
    for block in &report.lemmas {
        let h = e.entropy[&block.lemma.to_string()];
        assert!(
            close(block.entropy, h),
            "{}: {} vs {h}",
            block.lemma,
            block.entropy
        );
    }

    let classifier = report.classifier.as_ref().expect("classifier");
    assert!(classifier.table[0].logistic_regression > classifier.table[0].majority);
    assert_eq!(report.viz.len(), 1);
    for file in &report.viz[0].files {
        assert!(tmp.path().join(file).is_file(), "{file}");
    }
    assert!(tmp.path().join("report.md").is_file());
}

#[test]
fn identical_reruns_are_byte_identical() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_pipeline(&config(a.path(), &[])).unwrap();
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(1)
        .build()
        .unwrap();
    let rb = pool.install(|| run_pipeline(&config(b.path(), &[])).unwrap());
    assert_eq!(ra, rb);
    assert_eq!(tree_digest(a.path()), tree_digest(b.path()));
}

#[test]
fn different_seed_changes_only_stochastic_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let ra = run_pipeline(&config(a.path(), &[])).unwrap();
    let rb = run_pipeline(&config(b.path(), &["seed=7"])).unwrap();
    let (ca, cb) = (ra.comparison.unwrap(), rb.comparison.unwrap());
    assert_eq!(ca.section.cosine.result.r, cb.section.cosine.result.r);
    assert_ne!(ca.section.baseline, cb.section.baseline);
    assert_eq!(
        fs::read(a.path().join("entropy.csv")).unwrap(),
        fs::read(b.path().join("entropy.csv")).unwrap()
    );
}

#[test]
fn resume_reproduces_the_report() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), &[]);
    let first = run_pipeline(&cfg).unwrap();
    let before = tree_digest(tmp.path());
    let second = run_pipeline_with(&cfg, RunOptions { resume: true }).unwrap();
    assert_eq!(first, second);
    assert_eq!(before, tree_digest(tmp.path()));
    assert!(tmp.path().join("stages/classify.json").is_file());
}

#[test]
fn resume_ignores_records_from_other_settings() {
    let tmp = tempfile::tempdir().unwrap();
    run_pipeline(&config(tmp.path(), &[])).unwrap();
    let changed = config(tmp.path(), &["compare.resamples=50"]);
    let resumed = run_pipeline_with(&changed, RunOptions { resume: true }).unwrap();
    let fresh_dir = tempfile::tempdir().unwrap();
    let fresh = run_pipeline(&config(fresh_dir.path(), &["compare.resamples=50"])).unwrap();
    assert_eq!(resumed.comparison, fresh.comparison);
}

#[test]
fn tokens_only_run_stops_after_entropy() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(tmp.path(), &["viz.lemmas=[]"]);
    let cfg = RunConfig {
        inputs: sense_geometry::pipeline::Inputs {
            tokens: cfg.inputs.tokens.clone(),
            ..Default::default()
        },
        ..cfg
    };
    assert_eq!(cfg.stages(), vec![Stage::Ingest, Stage::Entropy]);
    let report: Report = run_pipeline(&cfg).unwrap();
    assert!(report.corpus.is_some());
    assert!(report.classifier.is_none());
    assert!(report.human.is_none());
    assert!(report.comparison.is_none());
    assert!(tmp.path().join("entropy.csv").is_file());
    assert!(!tmp.path().join("comparison.json").exists());
}

#[test]
fn invalid_settings_are_all_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = config(
        tmp.path(),
        &[
            "classifier.folds=1",
            "human.holdout_threshold=1.5",
            "compare.ci_level=1.0",
        ],
    );
    let issues = validate_config(&cfg);
    let fields: Vec<&str> = issues.iter().map(|i| i.field.as_str()).collect();
    for f in [
        "classifier.folds",
        "human.holdout_threshold",
        "compare.ci_level",
    ] {
        assert!(fields.contains(&f), "{f} missing from {fields:?}");
    }
    let err = run_pipeline(&cfg).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Config);
}

#[test]
fn stochastic_stages_require_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = config(tmp.path(), &[]);
    cfg.seed = None;
    assert!(validate_config(&cfg).iter().any(|i| i.field == "seed"));
}

#[test]
fn stage_errors_name_the_stage() {
    let tmp = tempfile::tempdir().unwrap();
    let placements = tmp.path().join("bad.jsonl");
    fs::write(&placements, "{\"not\": \"a trial\"}\n").unwrap();
    let out = tmp.path().join("out");
    let cfg = config(
        &out,
        &[&format!("inputs.placements=\"{}\"", placements.display())],
    );
    let err = run_pipeline(&cfg).unwrap_err();
    assert_eq!(err.kind(), ErrorKind::Data);
    assert!(err.to_string().contains("stage human"), "{err}");
}
