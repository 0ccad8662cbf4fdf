use std::collections::BTreeSet;
use std::fmt;
use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::classifier::{CvConfig, LambdaPolicy, TrainConfig, DEFAULT_MIN_TOKENS};
use crate::corpus::{LemmaKey, DEFAULT_HIGH_ENTROPY_THRESHOLD};
use crate::embeddings::RelatednessNorm;
use crate::error::{Error, Result};
use crate::human::{DEFAULT_HOLDOUT_THRESHOLD, DEFAULT_REPEAT_THRESHOLD, DEFAULT_SUBSAMPLE};
use crate::stats::MatrixCompareMode;

/// Everything a run depends on. Relative paths are resolved against the
/// directory of the config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Master seed; required whenever a stochastic stage runs.
    pub seed: Option<u64>,
    pub out_dir: PathBuf,
    /// Stages to run, prerequisites included. Empty means every stage the
    /// inputs allow.
    pub stages: Vec<Stage>,
    pub inputs: Inputs,
    pub corpus: CorpusSettings,
    pub classifier: ClassifierSettings,
    pub human: HumanSettings,
    pub compare: CompareSettings,
    pub viz: VizSettings,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            out_dir: PathBuf::from("out"),
            stages: Vec::new(),
            inputs: Inputs::default(),
            corpus: CorpusSettings::default(),
            classifier: ClassifierSettings::default(),
            human: HumanSettings::default(),
            compare: CompareSettings::default(),
            viz: VizSettings::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Inputs {
    pub tokens: Option<PathBuf>,
    pub embeddings: Option<PathBuf>,
    pub placements: Option<PathBuf>,
    /// Pair-labels CSV; the bundled labels are used when absent.
    pub labels: Option<PathBuf>,
    /// Stopword list; the bundled list is used when absent.
    pub stopwords: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CorpusSettings {
    pub min_senses: usize,
    pub max_senses: Option<usize>,
    pub entropy_threshold: f64,
}

impl Default for CorpusSettings {
    fn default() -> Self {
        CorpusSettings {
            min_senses: 2,
            max_senses: None,
            entropy_threshold: DEFAULT_HIGH_ENTROPY_THRESHOLD,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ClassifierSettings {
    pub folds: usize,
    /// `"auto"` (1/n) or a non-negative number.
    pub lambda: LambdaSetting,
    pub min_tokens: usize,
    pub standardize: bool,
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for ClassifierSettings {
    fn default() -> Self {
        let t = TrainConfig::default();
        ClassifierSettings {
            folds: 5,
            lambda: LambdaSetting::Text("auto".into()),
            min_tokens: DEFAULT_MIN_TOKENS,
            standardize: false,
            tol: t.tol,
            max_iter: t.max_iter,
        }
    }
}

/// L1 strength as written in the config: a number or a keyword.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum LambdaSetting {
    Number(f64),
    Text(String),
}

impl LambdaSetting {
    pub fn policy(&self) -> Result<LambdaPolicy> {
        match self {
            LambdaSetting::Number(v) => v.to_string().parse(),
            LambdaSetting::Text(s) => s.parse(),
        }
    }
}

impl ClassifierSettings {
    pub fn cv_config(&self, seed: u64) -> Result<CvConfig> {
        Ok(CvConfig {
            folds: self.folds,
            train: TrainConfig {
                lambda: self.lambda.policy()?,
                tol: self.tol,
                max_iter: self.max_iter,
            },
            standardize: self.standardize,
            seed,
        })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HumanSettings {
    /// Lemmas treated as shared stimuli; inferred from `shared` trials when
    /// absent.
    pub shared: Option<Vec<String>>,
    /// Participants sampled per shared lemma; `0` averages everyone.
    pub subsample: usize,
    pub holdout_threshold: f64,
    pub repeat_threshold: f64,
    /// Participants excluded on the external language criterion.
    pub language_excluded: Vec<String>,
}

impl Default for HumanSettings {
    fn default() -> Self {
        HumanSettings {
            shared: None,
            subsample: DEFAULT_SUBSAMPLE,
            holdout_threshold: DEFAULT_HOLDOUT_THRESHOLD,
            repeat_threshold: DEFAULT_REPEAT_THRESHOLD,
            language_excluded: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CompareSettings {
    pub norm: RelatednessNorm,
    pub cosine_mode: MatrixCompareMode,
    pub confusion_mode: MatrixCompareMode,
    /// Use normalised rather than raw cosine distances in the relation split.
    pub model_distance_normalized: bool,
    pub ci_level: f64,
    pub resamples: usize,
    pub baseline_draws: usize,
    /// Simulated participants per lemma in the random-placement baseline.
    pub baseline_participants: usize,
    /// Cross-validated pairwise F1 for labelled sense pairs.
    pub pairwise_f1: bool,
}

impl Default for CompareSettings {
    fn default() -> Self {
        CompareSettings {
            norm: RelatednessNorm::Max,
            cosine_mode: MatrixCompareMode::UpperTriangle,
            confusion_mode: MatrixCompareMode::AllOffDiagonal,
            model_distance_normalized: false,
            ci_level: 0.95,
            resamples: 1000,
            baseline_draws: 1000,
            baseline_participants: DEFAULT_SUBSAMPLE,
            pairwise_f1: true,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct VizSettings {
    /// Lemmas (`word.pos`) to render.
    pub lemmas: Vec<String>,
    pub perplexity: Option<f64>,
    pub iterations: usize,
}

impl Default for VizSettings {
    fn default() -> Self {
        VizSettings {
            lemmas: Vec::new(),
            perplexity: None,
            iterations: 1000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Stage {
    Ingest,
    Entropy,
    Centroids,
    Classify,
    Human,
    Compare,
    Viz,
}

impl Stage {
    pub fn name(self) -> &'static str {
        match self {
            Stage::Ingest => "ingest",
            Stage::Entropy => "entropy",
            Stage::Centroids => "centroids",
            Stage::Classify => "classify",
            Stage::Human => "human",
            Stage::Compare => "compare",
            Stage::Viz => "viz",
        }
    }

    pub fn is_stochastic(self) -> bool {
        matches!(
            self,
            Stage::Classify | Stage::Human | Stage::Compare | Stage::Viz
        )
    }

    /// Stages whose outputs this one reads directly. The centroids stage
    /// loads the embeddings, so every model-side stage goes through it.
    pub fn prerequisites(self) -> &'static [Stage] {
        match self {
            Stage::Ingest | Stage::Human => &[],
            Stage::Entropy => &[Stage::Ingest],
            Stage::Centroids => &[Stage::Entropy],
            Stage::Classify | Stage::Viz => &[Stage::Centroids],
            Stage::Compare => &[Stage::Classify, Stage::Human],
        }
    }

    /// Input files the stage itself opens, as config fields.
    fn inputs(self) -> &'static [&'static str] {
        match self {
            Stage::Ingest => &["inputs.tokens"],
            Stage::Centroids => &["inputs.embeddings"],
            Stage::Human => &["inputs.placements"],
            _ => &[],
        }
    }
}

impl fmt::Display for Stage {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

/// One validation failure, keyed by the dotted config field.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct ConfigIssue {
    pub field: String,
    pub message: String,
}

impl fmt::Display for ConfigIssue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.field, self.message)
    }
}

impl RunConfig {
    /// Parses TOML text, applies `key=value` overrides (dotted keys, TOML
    /// values; bare words are taken as strings) and resolves relative paths
    /// against `base`.
    pub fn from_toml(text: &str, overrides: &[String], base: &Path) -> Result<RunConfig> {
        let mut table: toml::Table =
            toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        for o in overrides {
            apply_override(&mut table, o)?;
        }
        let mut cfg: RunConfig = table
            .try_into()
            .map_err(|e: toml::de::Error| Error::Config(e.to_string()))?;
        cfg.resolve_paths(base);
        Ok(cfg)
    }

    pub fn load(path: &Path, overrides: &[String]) -> Result<RunConfig> {
        let text = fs::read_to_string(path)
            .map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        RunConfig::from_toml(&text, overrides, base)
    }

    fn resolve_paths(&mut self, base: &Path) {
        let join = |p: &mut PathBuf| {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        };
        join(&mut self.out_dir);
        for p in [
            &mut self.inputs.tokens,
            &mut self.inputs.embeddings,
            &mut self.inputs.placements,
            &mut self.inputs.labels,
            &mut self.inputs.stopwords,
        ]
        .into_iter()
        .flatten()
        {
            join(p);
        }
    }

    pub fn to_toml(&self) -> String {
        toml::to_string_pretty(self).expect("config serialises")
    }

    /// The knobs without any file-system locations; hashed for provenance so
    /// a relocated run keeps its digest.
    pub fn settings_json(&self) -> String {
        let mut settings = self.clone();
        settings.out_dir = PathBuf::new();
        let mark = |p: &mut Option<PathBuf>| {
            if p.is_some() {
                *p = Some(PathBuf::from("<input>"));
            }
        };
        mark(&mut settings.inputs.tokens);
        mark(&mut settings.inputs.embeddings);
        mark(&mut settings.inputs.placements);
        mark(&mut settings.inputs.labels);
        mark(&mut settings.inputs.stopwords);
        serde_json::to_string(&settings).expect("config serialises")
    }

    /// Stages to execute, in execution order: the requested stages with
    /// their prerequisites, or those implied by the inputs.
    pub fn stages(&self) -> Vec<Stage> {
        if !self.stages.is_empty() {
            let mut out = BTreeSet::new();
            let mut todo = self.stages.clone();
            while let Some(s) = todo.pop() {
                if out.insert(s) {
                    todo.extend(s.prerequisites());
                }
            }
            return out.into_iter().collect();
        }
        let i = &self.inputs;
        let mut out = Vec::new();
        let model = i.tokens.is_some() && i.embeddings.is_some();
        if i.tokens.is_some() {
            out.extend([Stage::Ingest, Stage::Entropy]);
        }
        if model {
            out.extend([Stage::Centroids, Stage::Classify]);
        }
        if i.placements.is_some() {
            out.push(Stage::Human);
        }
        if model && i.placements.is_some() {
            out.push(Stage::Compare);
        }
        if model && !self.viz.lemmas.is_empty() {
            out.push(Stage::Viz);
        }
        out
    }

    pub fn viz_lemmas(&self) -> Result<Vec<LemmaKey>> {
        self.viz.lemmas.iter().map(|l| l.parse()).collect()
    }

    pub fn shared_lemmas(&self) -> Result<Option<Vec<LemmaKey>>> {
        self.human
            .shared
            .as_ref()
            .map(|v| v.iter().map(|l| l.parse()).collect())
            .transpose()
    }
}

fn apply_override(table: &mut toml::Table, spec: &str) -> Result<()> {
    let (key, raw) = spec
        .split_once('=')
        .ok_or_else(|| Error::Config(format!("override {spec:?} is not key=value")))?;
    let value: toml::Value = match toml::from_str::<toml::Table>(&format!("v = {raw}")) {
        Ok(mut t) => t.remove("v").expect("parsed key"),
        Err(_) => toml::Value::String(raw.to_string()),
    };
    let parts: Vec<&str> = key.trim().split('.').collect();
    let (last, path) = parts.split_last().expect("split yields one part");
    let mut cur = table;
    for p in path {
        cur = cur
            .entry(p.to_string())
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| Error::Config(format!("override {key}: {p} is not a table")))?;
    }
    cur.insert(last.to_string(), value);
    Ok(())
}

/// Every problem with `cfg`, collected rather than failing at the first.
pub fn validate_config(cfg: &RunConfig) -> Vec<ConfigIssue> {
    let mut issues = Vec::new();
    let mut issue = |field: &str, message: String| {
        issues.push(ConfigIssue {
            field: field.to_string(),
            message,
        })
    };
    let i = &cfg.inputs;
    for (field, path) in [
        ("inputs.tokens", &i.tokens),
        ("inputs.embeddings", &i.embeddings),
        ("inputs.placements", &i.placements),
        ("inputs.labels", &i.labels),
        ("inputs.stopwords", &i.stopwords),
    ] {
        if let Some(p) = path {
            if !p.is_file() {
                issue(field, format!("{} does not exist", p.display()));
            }
        }
    }
    if cfg.stages.is_empty() {
        if i.tokens.is_none() && i.placements.is_none() {
            issue(
                "inputs",
                "nothing to do: neither tokens nor placements given".into(),
            );
        }
        if i.embeddings.is_some() && i.tokens.is_none() {
            issue(
                "inputs.tokens",
                "embeddings need the tokens file to resolve token ids".into(),
            );
        }
        if !cfg.viz.lemmas.is_empty() && i.embeddings.is_none() {
            issue(
                "inputs.embeddings",
                "viz lemmas requested but no embeddings given".into(),
            );
        }
    } else {
        let given = |field: &str| match field {
            "inputs.tokens" => i.tokens.is_some(),
            "inputs.embeddings" => i.embeddings.is_some(),
            _ => i.placements.is_some(),
        };
        let mut missing = BTreeSet::new();
        for s in cfg.stages() {
            for &field in s.inputs() {
                if !given(field) && missing.insert(field) {
                    issue(field, format!("required by the {} stage", s.name()));
                }
            }
        }
        if cfg.stages.contains(&Stage::Viz) && cfg.viz.lemmas.is_empty() {
            issue(
                "viz.lemmas",
                "the viz stage was requested without lemmas".into(),
            );
        }
    }
    if cfg.seed.is_none() && cfg.stages().iter().any(|s| s.is_stochastic()) {
        issue(
            "seed",
            "a seed is required for classify, human, compare and viz stages".into(),
        );
    }

    let c = &cfg.corpus;
    if c.min_senses < 1 {
        issue("corpus.min_senses", "must be at least 1".into());
    }
    if let Some(max) = c.max_senses {
        if max < c.min_senses {
            issue(
                "corpus.max_senses",
                format!("{max} is below min_senses {}", c.min_senses),
            );
        }
    }
    if !(c.entropy_threshold >= 0.0 && c.entropy_threshold.is_finite()) {
        issue(
            "corpus.entropy_threshold",
            "must be a non-negative number".into(),
        );
    }

    let k = &cfg.classifier;
    if k.folds < 2 {
        issue(
            "classifier.folds",
            format!("must be at least 2, got {}", k.folds),
        );
    }
    if k.min_tokens < k.folds {
        issue(
            "classifier.min_tokens",
            format!(
                "{} is below folds {}; stratified folds would fail",
                k.min_tokens, k.folds
            ),
        );
    }
    if let Err(e) = k.lambda.policy() {
        issue("classifier.lambda", e.to_string());
    }
    if !(k.tol > 0.0 && k.tol.is_finite()) {
        issue("classifier.tol", "must be positive".into());
    }
    if k.max_iter == 0 {
        issue("classifier.max_iter", "must be at least 1".into());
    }

    let h = &cfg.human;
    for (field, v) in [
        ("human.holdout_threshold", h.holdout_threshold),
        ("human.repeat_threshold", h.repeat_threshold),
    ] {
        if !(-1.0..=1.0).contains(&v) {
            issue(field, format!("{v} is outside [-1, 1]"));
        }
    }
    if let Some(shared) = &h.shared {
        for l in shared {
            if let Err(e) = l.parse::<LemmaKey>() {
                issue("human.shared", e.to_string());
            }
        }
    }

    let m = &cfg.compare;
    if !(m.ci_level > 0.0 && m.ci_level < 1.0) {
        issue(
            "compare.ci_level",
            format!("{} is outside (0, 1)", m.ci_level),
        );
    }
    if m.resamples == 0 {
        issue("compare.resamples", "must be at least 1".into());
    }
    if m.baseline_draws == 0 {
        issue("compare.baseline_draws", "must be at least 1".into());
    }
    if m.baseline_participants == 0 {
        issue("compare.baseline_participants", "must be at least 1".into());
    }

    for l in &cfg.viz.lemmas {
        if let Err(e) = l.parse::<LemmaKey>() {
            issue("viz.lemmas", e.to_string());
        }
    }
    if let Some(p) = cfg.viz.perplexity {
        if !(p >= 1.0 && p.is_finite()) {
            issue("viz.perplexity", format!("{p} is below 1"));
        }
    }
    if cfg.viz.iterations == 0 {
        issue("viz.iterations", "must be at least 1".into());
    }
    issues
}

#[cfg(test)]
mod tests {
    use super::*;

    fn touch(dir: &Path, name: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, "").unwrap();
        p
    }

    #[test]
    fn defaults_round_trip_through_toml() {
        let cfg = RunConfig::default();
        let back = RunConfig::from_toml(&cfg.to_toml(), &[], Path::new("")).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn overrides_and_relative_paths() {
        let text = "seed = 1\n[inputs]\ntokens = \"t.jsonl\"\n";
        let over = vec![
            "classifier.folds=3".to_string(),
            "classifier.lambda=0.5".to_string(),
        ];
        let cfg = RunConfig::from_toml(text, &over, Path::new("/data")).unwrap();
        assert_eq!(cfg.classifier.folds, 3);
        assert_eq!(cfg.classifier.lambda, LambdaSetting::Number(0.5));
        assert_eq!(
            cfg.classifier.lambda.policy().unwrap(),
            LambdaPolicy::Fixed(0.5)
        );
        assert_eq!(cfg.inputs.tokens, Some(PathBuf::from("/data/t.jsonl")));
        assert_eq!(cfg.out_dir, PathBuf::from("/data/out"));
        assert!(RunConfig::from_toml("bogus = 1", &[], Path::new("")).is_err());
        assert!(RunConfig::from_toml("", &["nokey".into()], Path::new("")).is_err());
    }

    #[test]
    fn stage_gating() {
        let mut cfg = RunConfig::default();
        cfg.inputs.tokens = Some("t".into());
        assert_eq!(cfg.stages(), vec![Stage::Ingest, Stage::Entropy]);
        cfg.inputs.embeddings = Some("e".into());
        cfg.inputs.placements = Some("p".into());
        assert_eq!(cfg.stages().len(), 6);
        cfg.stages = vec![Stage::Compare];
        assert_eq!(cfg.stages().len(), 6);
        cfg.stages = vec![Stage::Classify];
        assert_eq!(
            cfg.stages(),
            vec![
                Stage::Ingest,
                Stage::Entropy,
                Stage::Centroids,
                Stage::Classify
            ]
        );
    }

    #[test]
    fn validation_collects_every_issue() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig {
            seed: Some(1),
            ..RunConfig::default()
        };
        cfg.inputs.tokens = Some(touch(dir.path(), "t.jsonl"));
        cfg.inputs.embeddings = Some(touch(dir.path(), "e.semb"));
        cfg.inputs.placements = Some(touch(dir.path(), "p.jsonl"));
        assert!(validate_config(&cfg).is_empty());

        let mut bad = cfg.clone();
        bad.classifier.folds = 1;
        let issues = validate_config(&bad);
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].field, "classifier.folds");

        let mut bad = cfg.clone();
        bad.inputs.embeddings = Some(dir.path().join("missing.semb"));
        assert_eq!(validate_config(&bad).len(), 1);

        let mut bad = cfg.clone();
        bad.stages = vec![Stage::Classify];
        bad.inputs.embeddings = None;
        let issues = validate_config(&bad);
        assert_eq!(issues.len(), 1);
        assert_eq!(issues[0].field, "inputs.embeddings");

        let mut bad = cfg;
        bad.seed = None;
        bad.classifier.lambda = LambdaSetting::Number(-1.0);
        bad.compare.ci_level = 1.5;
        assert_eq!(validate_config(&bad).len(), 3);
    }
}
