//! Stage computations shared by the full run and the single-stage commands.

use std::collections::{BTreeMap, BTreeSet};
use std::fs;
use std::path::Path;

use log::warn;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::config::{CompareSettings, CorpusSettings, HumanSettings, VizSettings};
use crate::classifier::{
    baseline_f1, confusion_relatedness, cross_validate, filter_senses, lemma_examples,
    pairwise_sense_f1, BaselineMode, CvConfig, CvReport, Example,
};
use crate::corpus::{
    entropy_band, filter_candidates, sense_entropy, summarize_candidates, CandidateSummary,
    EntropyBand, LemmaKey, SenseDistribution,
};
use crate::embeddings::{centroid, centroid_relatedness_matrix, EmbeddingStore};
use crate::error::{Error, Result};
use crate::human::{
    aggregate_cohort, exclusion_rows, group_participants, holdout_screen, mark_language_excluded,
    repeat_screen, shared_lemmas, ExclusionRow, ParticipantRecord, PlacementTrial,
};
use crate::relatedness::{matrix_file_name, RelatednessMatrix};
use crate::seed::derive_seed;
use crate::stats::{
    mann_whitney, pooled_pairs, random_placement_baseline, spearman_with, split_by_relation,
    stratified_correlations, CiOptions, CorrelationResult, MannWhitney, MatrixCompareMode,
    PairLabel, PlacementBaseline, Relation, RelationSplit, StratumCell,
};
use crate::viz::{
    default_perplexity, dendrogram_svg, density_export, heatmap_svg, scatter_svg,
    silverman_bandwidth, single_linkage, tsne, DensitySpec, DensityTable, Metric, TsneParams,
};

pub fn write_text(root: &Path, rel: &str, contents: &str) -> Result<()> {
    let path = root.join(rel);
    if let Some(parent) = path.parent() {
        fs::create_dir_all(parent).map_err(|e| Error::io(parent, e))?;
    }
    fs::write(&path, contents).map_err(|e| Error::io(path, e))
}

pub fn to_json<T: Serialize>(value: &T) -> String {
    serde_json::to_string_pretty(value).expect("serialisable output") + "\n"
}

fn csv_err(e: csv::Error) -> Error {
    Error::Data(e.to_string())
}

fn csv_text(header: &[&str], rows: impl IntoIterator<Item = Vec<String>>) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    w.write_record(header).map_err(csv_err)?;
    for r in rows {
        w.write_record(&r).map_err(csv_err)?;
    }
    let bytes = w.into_inner().map_err(|e| Error::Data(e.to_string()))?;
    String::from_utf8(bytes).map_err(|e| Error::Data(e.to_string()))
}

fn opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

// ---------------------------------------------------------------- entropy

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyRow {
    pub lemma: LemmaKey,
    pub n_tokens: u64,
    pub n_senses: usize,
    pub entropy: f64,
    pub band: EntropyBand,
    /// Survives the stopword, zero-entropy and sense-count filters.
    pub candidate: bool,
    /// Candidate with at least two senses of `min_tokens` tokens, i.e. a
    /// type the classifier can be trained on.
    pub eligible: bool,
    /// Model-free baselines over the senses with at least `min_tokens` tokens.
    pub majority_f1: Option<f64>,
    pub random_f1: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EntropyTable {
    pub summary: CandidateSummary,
    pub rows: Vec<EntropyRow>,
}

impl EntropyTable {
    pub fn row(&self, lemma: &LemmaKey) -> Option<&EntropyRow> {
        self.rows
            .binary_search_by(|r| r.lemma.cmp(lemma))
            .ok()
            .map(|i| &self.rows[i])
    }

    pub fn eligible(&self) -> Vec<LemmaKey> {
        self.rows
            .iter()
            .filter(|r| r.eligible)
            .map(|r| r.lemma.clone())
            .collect()
    }

    pub fn to_csv(&self) -> Result<String> {
        csv_text(
            &[
                "lemma",
                "n_tokens",
                "n_senses",
                "entropy",
                "band",
                "candidate",
                "eligible",
                "majority_f1",
                "random_f1",
            ],
            self.rows.iter().map(|r| {
                vec![
                    r.lemma.to_string(),
                    r.n_tokens.to_string(),
                    r.n_senses.to_string(),
                    r.entropy.to_string(),
                    band_name(r.band).to_string(),
                    r.candidate.to_string(),
                    r.eligible.to_string(),
                    opt(r.majority_f1),
                    opt(r.random_f1),
                ]
            }),
        )
    }
}

pub fn band_name(b: EntropyBand) -> &'static str {
    match b {
        EntropyBand::High => "high",
        EntropyBand::LowMedium => "low_medium",
    }
}

/// Model-free baselines on the senses a classifier would see.
pub fn lemma_baselines(dist: &SenseDistribution, min_tokens: usize) -> Result<Option<(f64, f64)>> {
    match dist.retain_min_count(min_tokens as u64) {
        Some(d) if d.n_senses() >= 2 => Ok(Some((
            baseline_f1(&d, BaselineMode::Majority)?,
            baseline_f1(&d, BaselineMode::Random)?,
        ))),
        _ => Ok(None),
    }
}

pub fn entropy_table(
    dists: &BTreeMap<LemmaKey, SenseDistribution>,
    stopwords: &BTreeSet<String>,
    settings: &CorpusSettings,
    min_tokens: usize,
) -> Result<EntropyTable> {
    let candidates = filter_candidates(dists, stopwords, settings.min_senses, settings.max_senses);
    let summary = summarize_candidates(dists, &candidates);
    let candidate_set: BTreeSet<&LemmaKey> = candidates.iter().map(|(l, _)| l).collect();
    let rows = dists
        .values()
        .map(|d| {
            let entropy = sense_entropy(d)?;
            let candidate = candidate_set.contains(d.lemma());
            let baselines = if candidate {
                lemma_baselines(d, min_tokens)?
            } else {
                None
            };
            Ok(EntropyRow {
                lemma: d.lemma().clone(),
                n_tokens: d.total(),
                n_senses: d.n_senses(),
                entropy,
                band: entropy_band(entropy, settings.entropy_threshold),
                candidate,
                eligible: baselines.is_some(),
                majority_f1: baselines.map(|b| b.0),
                random_f1: baselines.map(|b| b.1),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(EntropyTable { summary, rows })
}

// ---------------------------------------------------------------- centroids

/// Centroid relatedness for every requested lemma with at least two embedded
/// senses. Lemmas whose centroids all coincide are reported as warnings.
pub fn centroid_stage(
    store: &EmbeddingStore,
    lemmas: &[LemmaKey],
    settings: &CompareSettings,
) -> Result<(BTreeMap<LemmaKey, RelatednessMatrix>, Vec<String>)> {
    let results: Vec<(LemmaKey, Result<RelatednessMatrix>)> = lemmas
        .par_iter()
        .filter(|l| store.senses(l).len() >= 2)
        .map(|l| {
            (
                l.clone(),
                centroid_relatedness_matrix(store, l, settings.norm),
            )
        })
        .collect();
    let mut out = BTreeMap::new();
    let mut warnings = Vec::new();
    for (lemma, r) in results {
        match r {
            Ok(m) => {
                out.insert(lemma, m);
            }
            Err(e @ Error::DegenerateGeometry(_)) => warnings.push(format!("centroids: {e}")),
            Err(e) => return Err(e.context(format!("lemma {lemma}"))),
        }
    }
    Ok((out, warnings))
}

pub fn write_matrices(
    root: &Path,
    dir: &str,
    matrices: &BTreeMap<LemmaKey, RelatednessMatrix>,
) -> Result<()> {
    for (lemma, m) in matrices {
        write_text(
            root,
            &format!("{dir}/{}", matrix_file_name(lemma)),
            &to_json(m),
        )?;
    }
    Ok(())
}

// ---------------------------------------------------------------- classify

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub lemma: LemmaKey,
    pub report: Option<CvReport>,
    /// Why the lemma was not classified.
    pub skipped: Option<String>,
}

/// Examples of the senses with at least `min_tokens` embedded tokens.
pub fn classifier_examples(
    store: &EmbeddingStore,
    lemma: &LemmaKey,
    min_tokens: usize,
) -> Vec<Example> {
    filter_senses(&lemma_examples(store, lemma), min_tokens)
}

/// Cross-validates every lemma in parallel; fold seeds are derived per lemma.
pub fn classify_stage(
    store: &EmbeddingStore,
    lemmas: &[LemmaKey],
    cv: &CvConfig,
    min_tokens: usize,
    master_seed: u64,
) -> Result<Vec<Classification>> {
    lemmas
        .par_iter()
        .map(|lemma| {
            let examples = classifier_examples(store, lemma, min_tokens);
            let senses: BTreeSet<&str> = examples.iter().map(|e| e.sense.as_str()).collect();
            if senses.len() < 2 {
                return Ok(Classification {
                    lemma: lemma.clone(),
                    report: None,
                    skipped: Some(format!(
                        "{} sense(s) with at least {min_tokens} embedded tokens",
                        senses.len()
                    )),
                });
            }
            let cfg = CvConfig {
                seed: derive_seed(master_seed, &format!("classify/{lemma}")),
                ..*cv
            };
            let report = cross_validate(lemma, &examples, &cfg)
                .map_err(|e| e.context(format!("lemma {lemma}")))?;
            Ok(Classification {
                lemma: lemma.clone(),
                report: Some(report),
                skipped: None,
            })
        })
        .collect()
}

pub fn confusion_matrices(
    results: &[Classification],
) -> Result<BTreeMap<LemmaKey, RelatednessMatrix>> {
    results
        .iter()
        .filter_map(|c| c.report.as_ref())
        .map(|r| Ok((r.lemma.clone(), confusion_relatedness(r)?.to_relatedness()?)))
        .collect()
}

/// Per-lemma summary in the shape of the F1 table: type, entropy, logistic
/// regression F1 and the two baselines.
pub fn classify_summary_csv(results: &[Classification], entropy: &EntropyTable) -> Result<String> {
    csv_text(
        &[
            "type",
            "pos",
            "n_tokens",
            "n_senses",
            "entropy",
            "band",
            "mean_f1",
            "majority_f1",
            "random_f1",
        ],
        results.iter().filter_map(|c| {
            let report = c.report.as_ref()?;
            let row = entropy.row(&c.lemma);
            Some(vec![
                c.lemma.word_type().to_string(),
                c.lemma.pos().code().to_string(),
                report.support.iter().sum::<u64>().to_string(),
                report.sense_keys.len().to_string(),
                opt(row.map(|r| r.entropy)),
                row.map(|r| band_name(r.band))
                    .unwrap_or_default()
                    .to_string(),
                report.mean_f1.to_string(),
                opt(row.and_then(|r| r.majority_f1)),
                opt(row.and_then(|r| r.random_f1)),
            ])
        }),
    )
}

// ---------------------------------------------------------------- human

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct HumanOutcome {
    pub participants: usize,
    pub shared: Vec<LemmaKey>,
    pub exclusions: Vec<ExclusionRow>,
    pub matrices: BTreeMap<LemmaKey, RelatednessMatrix>,
    pub warnings: Vec<String>,
}

/// Screens the cohort (language flag, hold-one-out, repeat) and aggregates
/// the remaining participants per lemma.
pub fn human_stage(
    trials: Vec<PlacementTrial>,
    settings: &HumanSettings,
    shared_override: Option<Vec<LemmaKey>>,
    master_seed: u64,
) -> Result<(HumanOutcome, Vec<ParticipantRecord>)> {
    let mut records = group_participants(trials);
    let shared: BTreeSet<LemmaKey> = match shared_override {
        Some(v) => v.into_iter().collect(),
        None => shared_lemmas(&records),
    };
    let language: BTreeSet<String> = settings.language_excluded.iter().cloned().collect();
    mark_language_excluded(&mut records, &language);
    let mut warnings = Vec::new();
    if shared.is_empty() {
        warnings.push("no shared lemmas; hold-one-out screen skipped".to_string());
    } else {
        warnings.extend(holdout_screen(
            &mut records,
            &shared,
            settings.holdout_threshold,
        )?);
    }
    warnings.extend(repeat_screen(&mut records, settings.repeat_threshold));
    let subsample = (settings.subsample > 0).then_some(settings.subsample);
    let matrices = aggregate_cohort(
        &records,
        &shared,
        subsample,
        derive_seed(master_seed, "human"),
    )?;
    for w in &warnings {
        warn!("human: {w}");
    }
    Ok((
        HumanOutcome {
            participants: records.len(),
            shared: shared.into_iter().collect(),
            exclusions: exclusion_rows(&records),
            matrices,
            warnings,
        },
        records,
    ))
}

// ---------------------------------------------------------------- compare

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricComparison {
    pub metric: String,
    pub mode: MatrixCompareMode,
    pub lemmas: Vec<LemmaKey>,
    /// Lemmas sharing fewer than two senses with the human matrices.
    pub skipped: Vec<LemmaKey>,
    pub result: CorrelationResult,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BaselineSummary {
    pub mean_r: f64,
    pub interval_low: f64,
    pub interval_high: f64,
    pub p_value: f64,
    pub n: usize,
    pub draws: usize,
    pub participants: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairwiseF1 {
    pub polysemy_mean: Option<f64>,
    pub homonymy_mean: Option<f64>,
    pub pairs: Vec<PairF1>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PairF1 {
    pub lemma: LemmaKey,
    pub sense_a: String,
    pub sense_b: String,
    pub relation: Relation,
    pub f1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RelationSection {
    pub labelled_pairs: usize,
    /// Labelled pairs absent from either side's matrices.
    pub unmatched_pairs: usize,
    pub human: MannWhitney,
    pub model: MannWhitney,
    /// Model distances are normalised (`1 - relatedness`) rather than raw.
    pub model_normalized: bool,
    pub medians: BTreeMap<String, f64>,
    pub pairwise_f1: Option<PairwiseF1>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonSection {
    pub cosine: MetricComparison,
    pub confusion: Option<MetricComparison>,
    /// Cosine correlation over exactly the lemmas and senses of the
    /// confusion comparison.
    pub cosine_on_confusion_subset: Option<CorrelationResult>,
    /// Pooled correlations by metric and stratum (all, part of speech,
    /// entropy band).
    pub table: Vec<StratumCell>,
    pub baseline: BaselineSummary,
    pub relation: Option<RelationSection>,
}

/// Stage output of `compare`: the report section plus the raw material
/// behind it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ComparisonOutput {
    pub section: ComparisonSection,
    pub baseline_draws: Vec<f64>,
    pub split: Option<RelationSplit>,
    pub warnings: Vec<String>,
}

pub struct CompareInputs<'a> {
    pub human: &'a BTreeMap<LemmaKey, RelatednessMatrix>,
    pub centroids: &'a BTreeMap<LemmaKey, RelatednessMatrix>,
    pub confusion: Option<&'a BTreeMap<LemmaKey, RelatednessMatrix>>,
    pub entropy: Option<&'a EntropyTable>,
    pub labels: Option<&'a [PairLabel]>,
    /// Store and classifier settings for pairwise F1 on labelled pairs.
    pub pairwise: Option<(&'a EmbeddingStore, &'a CvConfig, usize)>,
}

fn intersect(
    human: &BTreeMap<LemmaKey, RelatednessMatrix>,
    model: &BTreeMap<LemmaKey, RelatednessMatrix>,
) -> Vec<LemmaKey> {
    human
        .keys()
        .filter(|k| model.contains_key(*k))
        .cloned()
        .collect()
}

fn metric_comparison(
    metric: &str,
    human: &BTreeMap<LemmaKey, RelatednessMatrix>,
    model: &BTreeMap<LemmaKey, RelatednessMatrix>,
    mode: MatrixCompareMode,
    ci: &CiOptions,
) -> Result<MetricComparison> {
    let lemmas = intersect(human, model);
    if lemmas.is_empty() {
        return Err(Error::NoData(format!(
            "no lemma has both human and {metric} matrices"
        )));
    }
    let pooled = pooled_pairs(model, human, &lemmas, mode)?;
    let result = spearman_with(&pooled.x, &pooled.y, ci)?;
    Ok(MetricComparison {
        metric: metric.to_string(),
        mode,
        lemmas: pooled.lemmas,
        skipped: pooled.skipped,
        result,
    })
}

fn stratum_groups(
    lemmas: &[LemmaKey],
    entropy: Option<&EntropyTable>,
) -> Vec<BTreeMap<LemmaKey, String>> {
    let all = lemmas
        .iter()
        .map(|l| (l.clone(), "all".to_string()))
        .collect();
    let pos = lemmas
        .iter()
        .map(|l| (l.clone(), l.pos().name().to_string()))
        .collect();
    let band = lemmas
        .iter()
        .filter_map(|l| Some((l.clone(), band_name(entropy?.row(l)?.band).to_string())))
        .collect();
    vec![all, pos, band]
}

fn median(v: &[f64]) -> f64 {
    crate::stats::percentile(v, 50.0)
}

/// Labelled-pair distances, Mann-Whitney tests and optionally pairwise F1.
fn relation_section(
    labels: &[PairLabel],
    human: &BTreeMap<LemmaKey, RelatednessMatrix>,
    model: &BTreeMap<LemmaKey, RelatednessMatrix>,
    settings: &CompareSettings,
    pairwise: Option<(&EmbeddingStore, &CvConfig, usize)>,
    master_seed: u64,
    warnings: &mut Vec<String>,
) -> Result<Option<(RelationSection, RelationSplit)>> {
    let present = |side: &BTreeMap<LemmaKey, RelatednessMatrix>, p: &PairLabel| {
        side.get(&p.lemma)
            .is_some_and(|m| m.index_of(&p.sense_a).is_some() && m.index_of(&p.sense_b).is_some())
    };
    let usable: Vec<PairLabel> = labels
        .iter()
        .filter(|p| present(human, p) && present(model, p))
        .cloned()
        .collect();
    let split = split_by_relation(&usable, human, model, settings.model_distance_normalized)?;
    if split.human_polysemy.is_empty() || split.human_homonymy.is_empty() {
        warnings.push(format!(
            "relation split skipped: {} labelled pairs matched, need both relations",
            usable.len()
        ));
        return Ok(None);
    }
    let medians = [
        ("human_polysemy", &split.human_polysemy),
        ("human_homonymy", &split.human_homonymy),
        ("model_polysemy", &split.model_polysemy),
        ("model_homonymy", &split.model_homonymy),
    ]
    .into_iter()
    .map(|(k, v)| (k.to_string(), median(v)))
    .collect();

    let pairwise_f1 = match pairwise {
        Some((store, cv, min_tokens)) => {
            Some(pairwise_f1(&usable, store, cv, min_tokens, master_seed)?)
        }
        None => None,
    };
    Ok(Some((
        RelationSection {
            labelled_pairs: usable.len(),
            unmatched_pairs: labels.len() - usable.len(),
            human: mann_whitney(&split.human_polysemy, &split.human_homonymy)?,
            model: mann_whitney(&split.model_polysemy, &split.model_homonymy)?,
            model_normalized: settings.model_distance_normalized,
            medians,
            pairwise_f1,
        },
        split,
    )))
}

/// Two-sense cross-validated F1 of each labelled pair whose senses both have
/// at least `min_tokens` embedded tokens.
pub fn pairwise_f1(
    labels: &[PairLabel],
    store: &EmbeddingStore,
    cv: &CvConfig,
    min_tokens: usize,
    master_seed: u64,
) -> Result<PairwiseF1> {
    let lemmas: BTreeSet<&LemmaKey> = labels.iter().map(|p| &p.lemma).collect();
    let examples: BTreeMap<&LemmaKey, Vec<Example>> = lemmas
        .into_iter()
        .map(|l| (l, classifier_examples(store, l, min_tokens)))
        .collect();
    let pairs: Vec<PairF1> = labels
        .par_iter()
        .filter_map(|p| {
            let ex = &examples[&p.lemma];
            let has = |s: &str| ex.iter().any(|e| e.sense == s);
            if !(has(&p.sense_a) && has(&p.sense_b)) {
                return None;
            }
            let cfg = CvConfig {
                seed: derive_seed(
                    master_seed,
                    &format!("pairwise/{}/{}/{}", p.lemma, p.sense_a, p.sense_b),
                ),
                ..*cv
            };
            Some(
                pairwise_sense_f1(&p.lemma, ex, &p.sense_a, &p.sense_b, &cfg).map(|f1| PairF1 {
                    lemma: p.lemma.clone(),
                    sense_a: p.sense_a.clone(),
                    sense_b: p.sense_b.clone(),
                    relation: p.relation,
                    f1,
                }),
            )
        })
        .collect::<Result<_>>()?;
    let mean = |rel: Relation| {
        let v: Vec<f64> = pairs
            .iter()
            .filter(|p| p.relation == rel)
            .map(|p| p.f1)
            .collect();
        (!v.is_empty()).then(|| v.iter().sum::<f64>() / v.len() as f64)
    };
    Ok(PairwiseF1 {
        polysemy_mean: mean(Relation::Polysemy),
        homonymy_mean: mean(Relation::Homonymy),
        pairs,
    })
}

/// Random-placement baseline over the model entries that take part in
/// `compared`, restricted to the senses the human matrices cover.
fn baseline_summary(
    human: &BTreeMap<LemmaKey, RelatednessMatrix>,
    model: &BTreeMap<LemmaKey, RelatednessMatrix>,
    compared: &MetricComparison,
    settings: &CompareSettings,
    mode: MatrixCompareMode,
    master_seed: u64,
) -> Result<(BaselineSummary, Vec<f64>)> {
    let baseline_model: BTreeMap<LemmaKey, RelatednessMatrix> = compared
        .lemmas
        .iter()
        .map(|l| {
            let h = &human[l];
            let m = &model[l];
            let keep: Vec<String> = m
                .sense_keys
                .iter()
                .filter(|k| h.index_of(k).is_some())
                .cloned()
                .collect();
            Ok((l.clone(), m.restrict(&keep)?))
        })
        .collect::<Result<_>>()?;
    let PlacementBaseline {
        mean_r,
        interval_low,
        interval_high,
        p_value,
        n,
        draws,
    } = random_placement_baseline(
        &baseline_model,
        settings.baseline_participants,
        settings.baseline_draws,
        mode,
        derive_seed(master_seed, "compare/baseline"),
    )?;
    let summary = BaselineSummary {
        mean_r,
        interval_low,
        interval_high,
        p_value,
        n,
        draws: draws.len(),
        participants: settings.baseline_participants,
    };
    Ok((summary, draws))
}

/// Which model relatedness a stand-alone matrix set holds.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelMetric {
    Cosine,
    Confusion,
}

impl ModelMetric {
    pub fn name(self) -> &'static str {
        match self {
            ModelMetric::Cosine => "cosine",
            ModelMetric::Confusion => "confusion",
        }
    }

    fn mode(self, settings: &CompareSettings) -> MatrixCompareMode {
        match self {
            ModelMetric::Cosine => settings.cosine_mode,
            ModelMetric::Confusion => settings.confusion_mode,
        }
    }
}

/// Human matrices against one model matrix set, without the corpus.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MatrixSetComparison {
    pub comparison: MetricComparison,
    /// Pooled correlations over all lemmas and by part of speech.
    pub table: Vec<StratumCell>,
    pub baseline: BaselineSummary,
    pub relation: Option<RelationSection>,
    pub warnings: Vec<String>,
}

/// Compares previously written matrix directories. Seeds match those of
/// [`compare_stage`], so cosine results agree with a full run.
pub fn compare_matrix_sets(
    human: &BTreeMap<LemmaKey, RelatednessMatrix>,
    model: &BTreeMap<LemmaKey, RelatednessMatrix>,
    metric: ModelMetric,
    labels: Option<&[PairLabel]>,
    settings: &CompareSettings,
    master_seed: u64,
) -> Result<MatrixSetComparison> {
    let ci = |label: &str| CiOptions {
        level: settings.ci_level,
        resamples: settings.resamples,
        seed: derive_seed(master_seed, &format!("compare/ci/{label}")),
    };
    let name = metric.name();
    let mode = metric.mode(settings);
    let comparison = metric_comparison(name, human, model, mode, &ci(name))?;
    let mut table = Vec::new();
    for groups in stratum_groups(&intersect(human, model), None)
        .into_iter()
        .filter(|g| !g.is_empty())
    {
        table.extend(stratified_correlations(
            name,
            model,
            human,
            &groups,
            mode,
            &ci(&format!("table/{name}")),
        )?);
    }
    let (baseline, _) = baseline_summary(human, model, &comparison, settings, mode, master_seed)?;
    let mut warnings = Vec::new();
    let relation = match labels {
        Some(labels) => relation_section(
            labels,
            human,
            model,
            settings,
            None,
            master_seed,
            &mut warnings,
        )?
        .map(|(section, _)| section),
        None => None,
    };
    Ok(MatrixSetComparison {
        comparison,
        table,
        baseline,
        relation,
        warnings,
    })
}

pub fn compare_stage(
    inputs: &CompareInputs,
    settings: &CompareSettings,
    master_seed: u64,
) -> Result<ComparisonOutput> {
    let ci = |label: &str| CiOptions {
        level: settings.ci_level,
        resamples: settings.resamples,
        seed: derive_seed(master_seed, &format!("compare/ci/{label}")),
    };
    let mut warnings = Vec::new();
    let cosine = metric_comparison(
        "cosine",
        inputs.human,
        inputs.centroids,
        settings.cosine_mode,
        &ci("cosine"),
    )?;

    let (confusion, subset) = match inputs.confusion {
        Some(conf) if !intersect(inputs.human, conf).is_empty() => {
            let c = metric_comparison(
                "confusion",
                inputs.human,
                conf,
                settings.confusion_mode,
                &ci("confusion"),
            )?;
            // cosine restricted to the lemmas and senses the classifier kept
            let restricted: BTreeMap<LemmaKey, RelatednessMatrix> = c
                .lemmas
                .iter()
                .filter_map(|l| {
                    let m = inputs.centroids.get(l)?;
                    let keep: Vec<String> = conf[l]
                        .sense_keys
                        .iter()
                        .filter(|k| m.index_of(k).is_some())
                        .cloned()
                        .collect();
                    Some(m.restrict(&keep).map(|r| (l.clone(), r)))
                })
                .collect::<Result<_>>()?;
            let subset = metric_comparison(
                "cosine",
                inputs.human,
                &restricted,
                settings.cosine_mode,
                &ci("cosine-subset"),
            )?;
            (Some(c), Some(subset.result))
        }
        _ => (None, None),
    };

    let mut table = Vec::new();
    let metrics: Vec<(
        &str,
        &BTreeMap<LemmaKey, RelatednessMatrix>,
        MatrixCompareMode,
    )> = std::iter::once(("cosine", inputs.centroids, settings.cosine_mode))
        .chain(
            inputs
                .confusion
                .map(|c| ("confusion", c, settings.confusion_mode)),
        )
        .collect();
    for (metric, model, mode) in metrics {
        let lemmas = intersect(inputs.human, model);
        for groups in stratum_groups(&lemmas, inputs.entropy) {
            table.extend(stratified_correlations(
                metric,
                model,
                inputs.human,
                &groups,
                mode,
                &ci(&format!("table/{metric}")),
            )?);
        }
    }

    let (baseline, draws) = baseline_summary(
        inputs.human,
        inputs.centroids,
        &cosine,
        settings,
        settings.cosine_mode,
        master_seed,
    )?;

    let (relation, split) = match inputs.labels {
        Some(labels) => match relation_section(
            labels,
            inputs.human,
            inputs.centroids,
            settings,
            inputs.pairwise.filter(|_| settings.pairwise_f1),
            master_seed,
            &mut warnings,
        )? {
            Some((section, split)) => (Some(section), Some(split)),
            None => (None, None),
        },
        None => (None, None),
    };

    Ok(ComparisonOutput {
        section: ComparisonSection {
            cosine,
            confusion,
            cosine_on_confusion_subset: subset,
            table,
            baseline,
            relation,
        },
        baseline_draws: draws,
        split,
        warnings,
    })
}

/// Histogram and KDE of each labelled-distance series.
pub fn relation_densities(split: &RelationSplit) -> Result<BTreeMap<String, Vec<DensityTable>>> {
    let mut out = BTreeMap::new();
    for (name, v) in [
        ("human_polysemy", &split.human_polysemy),
        ("human_homonymy", &split.human_homonymy),
        ("model_polysemy", &split.model_polysemy),
        ("model_homonymy", &split.model_homonymy),
    ] {
        if v.is_empty() {
            continue;
        }
        let tables = vec![
            density_export(v, DensitySpec::Histogram { bins: 20 })?,
            density_export(
                v,
                DensitySpec::Kde {
                    bandwidth: silverman_bandwidth(v),
                    points: 128,
                },
            )?,
        ];
        out.insert(name.to_string(), tables);
    }
    Ok(out)
}

// ---------------------------------------------------------------- viz

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct VizOutput {
    pub lemma: LemmaKey,
    pub points: usize,
    pub perplexity: f64,
    pub final_kl: Option<f64>,
    /// Files written, relative to the output root.
    pub files: Vec<String>,
}

/// t-SNE scatter of tokens plus sense centroids, token-level single-linkage
/// dendrogram and one heatmap per supplied matrix, under `<prefix>/<lemma>/`.
pub fn render_lemma(
    root: &Path,
    prefix: &str,
    store: &EmbeddingStore,
    lemma: &LemmaKey,
    matrices: &[(&str, &RelatednessMatrix)],
    settings: &VizSettings,
    seed: u64,
) -> Result<VizOutput> {
    let tokens = store.lemma_tokens(lemma);
    if tokens.is_empty() {
        return Err(Error::NoData(format!("no embedded tokens for {lemma}")));
    }
    let senses = store.senses(lemma);
    let mut vectors: Vec<Vec<f64>> = tokens.iter().map(|t| t.2.clone()).collect();
    let mut labels: Vec<String> = tokens.iter().map(|t| format!("token:{}", t.0)).collect();
    let mut groups: Vec<String> = tokens.iter().map(|t| t.1.clone()).collect();
    let mut emphasis = vec![false; tokens.len()];
    for s in &senses {
        vectors.push(centroid(store, lemma, s)?.vector);
        labels.push(format!("centroid:{s}"));
        groups.push(s.clone());
        emphasis.push(true);
    }
    let dir = format!("{prefix}/{lemma}");
    let mut files = Vec::new();
    let mut put = |name: &str, text: &str| -> Result<()> {
        let rel = format!("{dir}/{name}");
        write_text(root, &rel, text)?;
        files.push(rel);
        Ok(())
    };

    let perplexity = settings
        .perplexity
        .unwrap_or_else(|| default_perplexity(vectors.len()));
    let params = TsneParams {
        perplexity,
        iterations: settings.iterations,
        seed: derive_seed(seed, &format!("viz/{lemma}")),
    };
    let projection = tsne(&vectors, &labels, &params)?;
    put("projection.json", &to_json(&projection))?;
    put(
        "scatter.svg",
        &scatter_svg(
            &format!("{lemma} token embeddings"),
            &projection,
            &groups,
            &emphasis,
        ),
    )?;

    let token_vectors: Vec<Vec<f64>> = tokens.iter().map(|t| t.2.clone()).collect();
    let token_groups: Vec<String> = tokens.iter().map(|t| t.1.clone()).collect();
    let dendrogram = single_linkage(&token_vectors, Metric::Cosine)?;
    put("dendrogram.json", &to_json(&dendrogram))?;
    put(
        "dendrogram.svg",
        &dendrogram_svg(
            &format!("{lemma} single linkage"),
            &dendrogram,
            &token_groups,
            &token_groups,
        ),
    )?;
    for (name, m) in matrices {
        put(
            &format!("heatmap_{name}.svg"),
            &heatmap_svg(
                &format!("{lemma} {name}"),
                &m.sense_keys,
                &m.sense_keys,
                &m.values,
            ),
        )?;
    }
    Ok(VizOutput {
        lemma: lemma.clone(),
        points: vectors.len(),
        perplexity,
        final_kl: projection.kl_trace.last().copied(),
        files,
    })
}
