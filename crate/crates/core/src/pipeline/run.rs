use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::Read;
use std::path::Path;

use log::info;
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::config::{validate_config, RunConfig, Stage};
use super::report::{
    ClassifierSection, ComparisonReport, CorpusSection, F1Row, HumanSection, InputDigest,
    LemmaBlock, Provenance, Report, SkippedLemma,
};
use super::stages::{
    centroid_stage, classify_stage, classify_summary_csv, compare_stage, confusion_matrices,
    entropy_table, human_stage, relation_densities, render_lemma, to_json, write_matrices,
    write_text, Classification, CompareInputs, ComparisonOutput, EntropyTable, HumanOutcome,
    VizOutput,
};
use crate::corpus::{
    build_distributions, default_stopwords, load_corpus, load_stopwords, EntropyBand, LemmaKey,
};
use crate::embeddings::{load_embeddings, EmbeddingStore};
use crate::error::{Error, Result};
use crate::human::{load_placements, write_exclusion_rows};
use crate::relatedness::{matrix_file_name, RelatednessMatrix};
use crate::stats::{bundled_pair_labels, load_pair_labels, ols};

pub const TOOL_VERSION: &str = env!("CARGO_PKG_VERSION");

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct RunOptions {
    /// Reuse stage records left by an earlier run with the same settings
    /// and input digests instead of recomputing those stages.
    pub resume: bool,
}

/// A completed stage's result, stored under `stages/` for `--resume`.
#[derive(Serialize, Deserialize)]
struct StageRecord<T> {
    fingerprint: String,
    data: T,
}

fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

fn file_digest(path: &Path) -> Result<InputDigest> {
    let mut file = File::open(path).map_err(|e| Error::io(path, e))?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    let mut bytes = 0u64;
    loop {
        let n = file.read(&mut buf).map_err(|e| Error::io(path, e))?;
        if n == 0 {
            break;
        }
        hasher.update(&buf[..n]);
        bytes += n as u64;
    }
    Ok(InputDigest {
        sha256: hex::encode(hasher.finalize()),
        bytes,
    })
}

fn text_digest(text: &str) -> InputDigest {
    InputDigest {
        sha256: sha256_hex(text.as_bytes()),
        bytes: text.len() as u64,
    }
}

fn input_digests(cfg: &RunConfig) -> Result<BTreeMap<String, InputDigest>> {
    let i = &cfg.inputs;
    let mut out = BTreeMap::new();
    for (name, path) in [
        ("tokens", &i.tokens),
        ("embeddings", &i.embeddings),
        ("placements", &i.placements),
        ("labels", &i.labels),
        ("stopwords", &i.stopwords),
    ] {
        if let Some(p) = path {
            out.insert(name.to_string(), file_digest(p)?);
        }
    }
    if i.tokens.is_some() && i.stopwords.is_none() {
        out.insert(
            "stopwords (bundled)".into(),
            text_digest(include_str!("../../data/stopwords.txt")),
        );
    }
    if i.embeddings.is_some() && i.placements.is_some() && i.labels.is_none() {
        out.insert(
            "labels (bundled)".into(),
            text_digest(include_str!("../../data/pair_labels.csv")),
        );
    }
    Ok(out)
}

struct Records<'a> {
    root: &'a Path,
    fingerprint: String,
    resume: bool,
}

impl Records<'_> {
    fn path(&self, stage: Stage) -> String {
        format!("stages/{}.json", stage.name())
    }

    fn load<T: DeserializeOwned>(&self, stage: Stage) -> Option<T> {
        if !self.resume {
            return None;
        }
        let text = fs::read_to_string(self.root.join(self.path(stage))).ok()?;
        let rec: StageRecord<T> = serde_json::from_str(&text).ok()?;
        (rec.fingerprint == self.fingerprint).then(|| {
            info!("resume: reusing {} stage record", stage.name());
            rec.data
        })
    }

    fn save<T: Serialize>(&self, stage: Stage, data: &T) -> Result<()> {
        let rec = StageRecord {
            fingerprint: self.fingerprint.clone(),
            data,
        };
        write_text(self.root, &self.path(stage), &to_json(&rec))
    }
}

fn stage<T>(s: Stage, f: impl FnOnce() -> Result<T>) -> Result<T> {
    info!("stage {}", s.name());
    f().map_err(|e| e.context(format!("stage {}", s.name())))
}

pub fn run_pipeline(cfg: &RunConfig) -> Result<Report> {
    run_pipeline_with(cfg, RunOptions::default())
}

/// Runs every stage implied by the configured inputs, writing stage outputs
/// and `report.json` / `report.md` under `out_dir`. Outputs of finished
/// stages stay on disk when a later stage fails.
pub fn run_pipeline_with(cfg: &RunConfig, opts: RunOptions) -> Result<Report> {
    let issues = validate_config(cfg);
    if !issues.is_empty() {
        let lines: Vec<String> = issues.iter().map(|i| i.to_string()).collect();
        return Err(Error::Config(lines.join("; ")));
    }
    let root = cfg.out_dir.as_path();
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    let inputs = input_digests(cfg)?;
    let config_sha256 = sha256_hex(cfg.settings_json().as_bytes());
    let fingerprint = sha256_hex(
        format!(
            "{config_sha256}\n{TOOL_VERSION}\n{}",
            serde_json::to_string(&inputs).expect("digests serialise")
        )
        .as_bytes(),
    );
    let records = Records {
        root,
        fingerprint,
        resume: opts.resume,
    };
    let stages = cfg.stages();
    let seed = cfg.seed.unwrap_or_default();
    let mut warnings: Vec<String> = Vec::new();
    let mut report = Report {
        tool_version: TOOL_VERSION.to_string(),
        provenance: Provenance {
            config_sha256,
            inputs,
        },
        stages: stages.clone(),
        corpus: None,
        lemmas: Vec::new(),
        classifier: None,
        human: None,
        comparison: None,
        viz: Vec::new(),
        warnings: Vec::new(),
    };

    let tokens = match &cfg.inputs.tokens {
        Some(p) if stages.contains(&Stage::Ingest) => {
            Some(stage(Stage::Ingest, || load_corpus(p))?)
        }
        _ => None,
    };
    let entropy: Option<EntropyTable> = match &tokens {
        Some(tokens) if stages.contains(&Stage::Entropy) => Some(stage(Stage::Entropy, || {
            let stopwords = match &cfg.inputs.stopwords {
                Some(p) => load_stopwords(p)?,
                None => default_stopwords(),
            };
            let dists = build_distributions(tokens);
            let table = entropy_table(&dists, &stopwords, &cfg.corpus, cfg.classifier.min_tokens)?;
            write_text(root, "entropy.csv", &table.to_csv()?)?;
            Ok(table)
        })?),
        _ => None,
    };
    if let (Some(tokens), Some(table)) = (&tokens, &entropy) {
        report.corpus = Some(corpus_section(tokens.len(), table));
    }

    // model side
    let mut store: Option<EmbeddingStore> = None;
    let mut centroids = BTreeMap::new();
    let mut classifications: Vec<Classification> = Vec::new();
    let mut confusion = BTreeMap::new();
    let embeddings = cfg
        .inputs
        .embeddings
        .as_ref()
        .filter(|_| stages.contains(&Stage::Centroids));
    if let (Some(path), Some(tokens), Some(table)) = (embeddings, &tokens, &entropy) {
        let s = stage(Stage::Centroids, || {
            let s = load_embeddings(path, tokens)?;
            let candidates: Vec<LemmaKey> = table
                .rows
                .iter()
                .filter(|r| r.candidate)
                .map(|r| r.lemma.clone())
                .collect();
            let (m, w) = centroid_stage(&s, &candidates, &cfg.compare)?;
            write_matrices(root, "centroids", &m)?;
            centroids = m;
            warnings.extend(w);
            Ok(s)
        })?;
        let cv = cfg.classifier.cv_config(seed)?;
        classifications = if !stages.contains(&Stage::Classify) {
            Vec::new()
        } else {
            stage(Stage::Classify, || {
                let results = match records.load::<Vec<Classification>>(Stage::Classify) {
                    Some(r) => r,
                    None => {
                        let embedded: BTreeSet<&LemmaKey> = s.lemmas().collect();
                        let lemmas: Vec<LemmaKey> = table
                            .eligible()
                            .into_iter()
                            .filter(|l| embedded.contains(l))
                            .collect();
                        let r = classify_stage(&s, &lemmas, &cv, cfg.classifier.min_tokens, seed)?;
                        records.save(Stage::Classify, &r)?;
                        r
                    }
                };
                for c in &results {
                    if let Some(r) = &c.report {
                        write_text(
                            root,
                            &format!("cv/{}", matrix_file_name(&c.lemma)),
                            &to_json(r),
                        )?;
                    }
                }
                confusion = confusion_matrices(&results)?;
                write_matrices(root, "confusion", &confusion)?;
                write_text(
                    root,
                    "classify_summary.csv",
                    &classify_summary_csv(&results, table)?,
                )?;
                Ok(results)
            })?
        };
        store = Some(s);
    }

    // human side
    let mut human: Option<HumanOutcome> = None;
    if let Some(path) = cfg
        .inputs
        .placements
        .as_ref()
        .filter(|_| stages.contains(&Stage::Human))
    {
        let outcome = stage(Stage::Human, || {
            let outcome = match records.load::<HumanOutcome>(Stage::Human) {
                Some(o) => o,
                None => {
                    let trials = load_placements(path)?;
                    let (o, _) = human_stage(trials, &cfg.human, cfg.shared_lemmas()?, seed)?;
                    records.save(Stage::Human, &o)?;
                    o
                }
            };
            write_matrices(root, "human", &outcome.matrices)?;
            let mut csv = Vec::new();
            write_exclusion_rows(&mut csv, &outcome.exclusions)?;
            write_text(root, "exclusions.csv", &String::from_utf8_lossy(&csv))?;
            Ok(outcome)
        })?;
        warnings.extend(outcome.warnings.iter().map(|w| format!("human: {w}")));
        report.human = Some(human_section(&outcome));
        human = Some(outcome);
    }

    if stages.contains(&Stage::Compare) {
        let (Some(h), Some(s)) = (&human, &store) else {
            unreachable!("compare is planned only with both sides")
        };
        let cv = cfg.classifier.cv_config(seed)?;
        let out = stage(Stage::Compare, || {
            let out = match records.load::<ComparisonOutput>(Stage::Compare) {
                Some(o) => o,
                None => {
                    let labels = match &cfg.inputs.labels {
                        Some(p) => load_pair_labels(p)?,
                        None => bundled_pair_labels(),
                    };
                    let inputs = CompareInputs {
                        human: &h.matrices,
                        centroids: &centroids,
                        confusion: (!confusion.is_empty()).then_some(&confusion),
                        entropy: entropy.as_ref(),
                        labels: Some(&labels),
                        pairwise: Some((s, &cv, cfg.classifier.min_tokens)),
                    };
                    let o = compare_stage(&inputs, &cfg.compare, seed)?;
                    records.save(Stage::Compare, &o)?;
                    o
                }
            };
            write_text(root, "comparison.json", &to_json(&out))?;
            if let Some(split) = &out.split {
                write_text(
                    root,
                    "relation_density.json",
                    &to_json(&relation_densities(split)?),
                )?;
            }
            Ok(out)
        })?;
        warnings.extend(out.warnings.iter().map(|w| format!("compare: {w}")));
        report.comparison = Some(ComparisonReport {
            densities: out
                .split
                .as_ref()
                .map(|_| "relation_density.json".to_string()),
            section: out.section,
            source: "comparison.json".into(),
        });
    }

    if stages.contains(&Stage::Viz) {
        let s = store.as_ref().expect("viz is planned only with embeddings");
        report.viz = stage(Stage::Viz, || {
            if let Some(v) = records.load::<Vec<VizOutput>>(Stage::Viz) {
                if v.iter()
                    .flat_map(|o| &o.files)
                    .all(|f| root.join(f).is_file())
                {
                    return Ok(v);
                }
            }
            let mut outputs = Vec::new();
            for lemma in cfg.viz_lemmas()? {
                let mut matrices: Vec<(&str, &RelatednessMatrix)> = Vec::new();
                if let Some(m) = centroids.get(&lemma) {
                    matrices.push(("centroid", m));
                }
                if let Some(m) = confusion.get(&lemma) {
                    matrices.push(("confusion", m));
                }
                if let Some(m) = human.as_ref().and_then(|h| h.matrices.get(&lemma)) {
                    matrices.push(("human", m));
                }
                outputs.push(
                    render_lemma(root, "viz", s, &lemma, &matrices, &cfg.viz, seed)
                        .map_err(|e| e.context(format!("lemma {lemma}")))?,
                );
            }
            records.save(Stage::Viz, &outputs)?;
            Ok(outputs)
        })?;
    }

    if let Some(table) = &entropy {
        report.lemmas = lemma_blocks(
            table,
            &centroids,
            &classifications,
            &confusion,
            human.as_ref(),
        );
        if stages.contains(&Stage::Classify) {
            report.classifier = Some(classifier_section(
                table,
                &classifications,
                human.as_ref(),
                store.as_ref(),
            ));
        }
    }
    report.warnings = warnings;
    write_text(root, "report.json", &to_json(&report))?;
    write_text(root, "report.md", &report.to_markdown())?;
    Ok(report)
}

fn mean(v: &[f64]) -> f64 {
    v.iter().sum::<f64>() / v.len() as f64
}

fn corpus_section(tokens: usize, table: &EntropyTable) -> CorpusSection {
    let candidates: Vec<_> = table.rows.iter().filter(|r| r.candidate).collect();
    let eligible: Vec<_> = table.rows.iter().filter(|r| r.eligible).collect();
    let avg = |f: fn(&&super::stages::EntropyRow) -> Option<f64>| {
        let v: Vec<f64> = eligible.iter().filter_map(f).collect();
        (!v.is_empty()).then(|| mean(&v))
    };
    CorpusSection {
        tokens,
        summary: table.summary.clone(),
        high_entropy: candidates
            .iter()
            .filter(|r| r.band == EntropyBand::High)
            .count(),
        low_medium_entropy: candidates
            .iter()
            .filter(|r| r.band == EntropyBand::LowMedium)
            .count(),
        eligible: eligible.len(),
        majority_f1: avg(|r| r.majority_f1),
        random_f1: avg(|r| r.random_f1),
        source: "entropy.csv".into(),
    }
}

fn lemma_blocks(
    table: &EntropyTable,
    centroids: &BTreeMap<LemmaKey, RelatednessMatrix>,
    classifications: &[Classification],
    confusion: &BTreeMap<LemmaKey, RelatednessMatrix>,
    human: Option<&HumanOutcome>,
) -> Vec<LemmaBlock> {
    let f1: BTreeMap<&LemmaKey, f64> = classifications
        .iter()
        .filter_map(|c| Some((&c.lemma, c.report.as_ref()?.mean_f1)))
        .collect();
    let path = |dir: &str, l: &LemmaKey, present: bool| {
        present.then(|| format!("{dir}/{}", matrix_file_name(l)))
    };
    table
        .rows
        .iter()
        .filter(|r| r.candidate)
        .map(|r| {
            let l = &r.lemma;
            LemmaBlock {
                lemma: l.clone(),
                n_tokens: r.n_tokens,
                n_senses: r.n_senses,
                entropy: r.entropy,
                band: r.band,
                eligible: r.eligible,
                majority_f1: r.majority_f1,
                random_f1: r.random_f1,
                mean_f1: f1.get(l).copied(),
                centroid_matrix: path("centroids", l, centroids.contains_key(l)),
                confusion_matrix: path("confusion", l, confusion.contains_key(l)),
                cv_report: path("cv", l, f1.contains_key(l)),
                human_matrix: path(
                    "human",
                    l,
                    human.is_some_and(|h| h.matrices.contains_key(l)),
                ),
            }
        })
        .collect()
}

fn classifier_section(
    table: &EntropyTable,
    classifications: &[Classification],
    human: Option<&HumanOutcome>,
    store: Option<&EmbeddingStore>,
) -> ClassifierSection {
    let done: Vec<(&LemmaKey, f64)> = classifications
        .iter()
        .filter_map(|c| Some((&c.lemma, c.report.as_ref()?.mean_f1)))
        .collect();
    let row = |set: &str, lemmas: &[(&LemmaKey, f64)]| -> Option<F1Row> {
        let rows: Vec<_> = lemmas
            .iter()
            .filter_map(|(l, f)| Some((table.row(l)?, *f)))
            .collect();
        if rows.is_empty() {
            return None;
        }
        let pick = |g: &dyn Fn(&(&super::stages::EntropyRow, f64)) -> Option<f64>| {
            mean(&rows.iter().filter_map(g).collect::<Vec<_>>())
        };
        Some(F1Row {
            set: set.to_string(),
            n_types: rows.len(),
            logistic_regression: pick(&|r| Some(r.1)),
            majority: pick(&|r| r.0.majority_f1),
            random: pick(&|r| r.0.random_f1),
        })
    };
    let mut rows: Vec<F1Row> = row("all eligible", &done).into_iter().collect();
    if let Some(h) = human {
        let stimuli: Vec<(&LemmaKey, f64)> = done
            .iter()
            .filter(|(l, _)| h.matrices.contains_key(*l))
            .copied()
            .collect();
        rows.extend(row("stimuli", &stimuli));
    }
    let (x, y): (Vec<f64>, Vec<f64>) = done
        .iter()
        .filter_map(|(l, f)| Some((table.row(l)?.entropy, *f)))
        .unzip();
    let embedded: BTreeSet<&LemmaKey> = store.map(|s| s.lemmas().collect()).unwrap_or_default();
    ClassifierSection {
        table: rows,
        f1_vs_entropy: ols(&x, &y).ok(),
        without_embeddings: table
            .rows
            .iter()
            .filter(|r| r.eligible && !embedded.contains(&r.lemma))
            .count(),
        skipped: classifications
            .iter()
            .filter_map(|c| {
                Some(SkippedLemma {
                    lemma: c.lemma.clone(),
                    reason: c.skipped.clone()?,
                })
            })
            .collect(),
        source: "classify_summary.csv".into(),
    }
}

fn human_section(o: &HumanOutcome) -> HumanSection {
    let mut by_reason: BTreeMap<String, usize> = BTreeMap::new();
    for row in o.exclusions.iter().filter(|r| r.excluded) {
        for reason in row.reason.split(';') {
            *by_reason.entry(reason.to_string()).or_default() += 1;
        }
    }
    HumanSection {
        participants: o.participants,
        excluded: o.exclusions.iter().filter(|r| r.excluded).count(),
        exclusions_by_reason: by_reason,
        shared: o.shared.clone(),
        lemmas: o.matrices.keys().cloned().collect(),
        participants_table: o.exclusions.clone(),
        source: "exclusions.csv".into(),
    }
}
