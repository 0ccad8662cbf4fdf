//! Spatial-arrangement judgments: per-trial relatedness, participant
//! screening, aggregation and Monte Carlo threshold calibration.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::{BufRead, BufReader, Write};
use std::path::Path;

use log::warn;
use rand::seq::index::sample;
use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{LemmaKey, Pos};
use crate::error::{Error, Result};
use crate::relatedness::{RelatednessMatrix, RelatednessSource};
use crate::seed;
use crate::stats::{percentile, spearman_r};

pub const DEFAULT_HOLDOUT_THRESHOLD: f64 = 0.4;
pub const DEFAULT_REPEAT_THRESHOLD: f64 = 0.2;
pub const DEFAULT_SUBSAMPLE: usize = 29;

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TrialType {
    Training,
    Shared,
    Test,
    Repeat,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Canvas {
    pub w: f64,
    pub h: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PlacementTrial {
    pub participant_id: String,
    pub trial_index: u32,
    pub trial_type: TrialType,
    pub lemma: LemmaKey,
    pub canvas: Canvas,
    /// sense key -> (x, y) in canvas pixels
    pub placements: BTreeMap<String, (f64, f64)>,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlacementPoint {
    pub sense_key: String,
    pub x: f64,
    pub y: f64,
}

/// One line of the placements file.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct PlacementRecord {
    pub participant_id: String,
    pub trial_index: u32,
    pub trial_type: TrialType,
    pub word_type: String,
    pub pos: Pos,
    pub canvas: Canvas,
    pub placements: Vec<PlacementPoint>,
}

impl PlacementRecord {
    fn into_trial(self) -> Result<PlacementTrial> {
        if !(self.canvas.w > 0.0 && self.canvas.h > 0.0) {
            return Err(Error::Data(format!(
                "canvas {}x{} must have positive size",
                self.canvas.w, self.canvas.h
            )));
        }
        if self.placements.len() < 3 {
            return Err(Error::Data(format!(
                "trial needs at least 3 placements, got {}",
                self.placements.len()
            )));
        }
        let mut placements = BTreeMap::new();
        for p in self.placements {
            if !p.x.is_finite() || !p.y.is_finite() {
                return Err(Error::Data(format!(
                    "non-finite coordinate for {}",
                    p.sense_key
                )));
            }
            if p.x < 0.0 || p.x > self.canvas.w || p.y < 0.0 || p.y > self.canvas.h {
                return Err(Error::Data(format!(
                    "{} placed at ({}, {}) outside the {}x{} canvas",
                    p.sense_key, p.x, p.y, self.canvas.w, self.canvas.h
                )));
            }
            if placements.insert(p.sense_key.clone(), (p.x, p.y)).is_some() {
                return Err(Error::Data(format!("sense {} placed twice", p.sense_key)));
            }
        }
        Ok(PlacementTrial {
            participant_id: self.participant_id,
            trial_index: self.trial_index,
            trial_type: self.trial_type,
            lemma: LemmaKey::new(&self.word_type, self.pos)?,
            canvas: self.canvas,
            placements,
        })
    }
}

impl From<&PlacementTrial> for PlacementRecord {
    fn from(t: &PlacementTrial) -> Self {
        PlacementRecord {
            participant_id: t.participant_id.clone(),
            trial_index: t.trial_index,
            trial_type: t.trial_type,
            word_type: t.lemma.word_type().to_string(),
            pos: t.lemma.pos(),
            canvas: t.canvas,
            placements: t
                .placements
                .iter()
                .map(|(k, &(x, y))| PlacementPoint {
                    sense_key: k.clone(),
                    x,
                    y,
                })
                .collect(),
        }
    }
}

pub fn read_placements<R: BufRead>(reader: R) -> Result<Vec<PlacementTrial>> {
    let mut out = Vec::new();
    for (idx, line) in reader.lines().enumerate() {
        let line_no = idx + 1;
        let line = line.map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        if line.trim().is_empty() {
            continue;
        }
        let rec: PlacementRecord = serde_json::from_str(&line).map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?;
        out.push(rec.into_trial().map_err(|e| Error::Parse {
            line: line_no,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

pub fn load_placements(path: &Path) -> Result<Vec<PlacementTrial>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_placements(BufReader::new(file))
}

pub fn write_placements<W: Write>(mut writer: W, trials: &[PlacementTrial]) -> Result<()> {
    for t in trials {
        let line = serde_json::to_string(&PlacementRecord::from(t))
            .map_err(|e| Error::Data(e.to_string()))?;
        writeln!(writer, "{line}").map_err(|e| Error::io("<placements>", e))?;
    }
    Ok(())
}

/// Euclidean distances between placed senses, row-major in sense-key order.
pub fn trial_distances(trial: &PlacementTrial) -> (Vec<String>, Vec<f64>) {
    let keys: Vec<String> = trial.placements.keys().cloned().collect();
    let pts: Vec<(f64, f64)> = trial.placements.values().copied().collect();
    (keys, pairwise_euclidean(&pts))
}

fn pairwise_euclidean(pts: &[(f64, f64)]) -> Vec<f64> {
    let n = pts.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v = (pts[i].0 - pts[j].0).hypot(pts[i].1 - pts[j].1);
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Distances scaled by the largest pairwise distance of the trial, turned
/// into relatedness `1 - d / d_max`.
pub fn trial_relatedness(trial: &PlacementTrial) -> Result<RelatednessMatrix> {
    if trial.placements.len() < 2 {
        return Err(Error::DegenerateTrial(format!(
            "{} trial {}: fewer than two senses placed",
            trial.participant_id, trial.trial_index
        )));
    }
    let (keys, d) = trial_distances(trial);
    let values = relatedness_from_distances(&d, keys.len()).ok_or_else(|| {
        Error::DegenerateTrial(format!(
            "{} trial {} ({}): all senses placed at one point",
            trial.participant_id, trial.trial_index, trial.lemma
        ))
    })?;
    RelatednessMatrix::new(
        trial.lemma.clone(),
        RelatednessSource::HumanAggregate,
        keys,
        values,
    )
}

fn relatedness_from_distances(d: &[f64], n: usize) -> Option<Vec<f64>> {
    let d_max = d.iter().copied().fold(0.0, f64::max);
    if d_max <= 0.0 {
        return None;
    }
    Some(
        (0..n * n)
            .map(|k| {
                if k / n == k % n {
                    1.0
                } else {
                    (1.0 - d[k] / d_max).clamp(0.0, 1.0)
                }
            })
            .collect(),
    )
}

fn upper_triangle(values: &[f64], n: usize) -> impl Iterator<Item = f64> + '_ {
    (0..n).flat_map(move |i| ((i + 1)..n).map(move |j| values[i * n + j]))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExclusionReason {
    HoldoutBelowThreshold,
    RepeatBelowThreshold,
    LanguageCriterion,
}

impl ExclusionReason {
    pub fn as_str(self) -> &'static str {
        match self {
            ExclusionReason::HoldoutBelowThreshold => "holdout_below_threshold",
            ExclusionReason::RepeatBelowThreshold => "repeat_below_threshold",
            ExclusionReason::LanguageCriterion => "language_criterion",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ParticipantRecord {
    pub participant_id: String,
    pub trials: Vec<PlacementTrial>,
    pub holdout_corr: Option<f64>,
    pub repeat_corr: Option<f64>,
    pub exclusions: BTreeSet<ExclusionReason>,
}

impl ParticipantRecord {
    pub fn new(participant_id: String, mut trials: Vec<PlacementTrial>) -> Self {
        trials.sort_by_key(|t| t.trial_index);
        ParticipantRecord {
            participant_id,
            trials,
            holdout_corr: None,
            repeat_corr: None,
            exclusions: BTreeSet::new(),
        }
    }

    pub fn excluded(&self) -> bool {
        !self.exclusions.is_empty()
    }

    /// Non-training trials; training trials are parsed but never analysed.
    pub fn analysed_trials(&self) -> impl Iterator<Item = &PlacementTrial> {
        self.trials
            .iter()
            .filter(|t| t.trial_type != TrialType::Training)
    }

    fn first_trial(&self, lemma: &LemmaKey, kind: TrialType) -> Option<&PlacementTrial> {
        self.trials
            .iter()
            .find(|t| t.trial_type == kind && &t.lemma == lemma)
    }
}

/// Groups trials by participant, ordered by participant id then trial index.
pub fn group_participants(trials: Vec<PlacementTrial>) -> Vec<ParticipantRecord> {
    let mut by_id: BTreeMap<String, Vec<PlacementTrial>> = BTreeMap::new();
    for t in trials {
        by_id.entry(t.participant_id.clone()).or_default().push(t);
    }
    by_id
        .into_iter()
        .map(|(id, ts)| ParticipantRecord::new(id, ts))
        .collect()
}

/// Lemmas of every `shared` trial in the cohort.
pub fn shared_lemmas(records: &[ParticipantRecord]) -> BTreeSet<LemmaKey> {
    records
        .iter()
        .flat_map(|r| r.trials.iter())
        .filter(|t| t.trial_type == TrialType::Shared)
        .map(|t| t.lemma.clone())
        .collect()
}

pub fn mark_language_excluded(records: &mut [ParticipantRecord], ids: &BTreeSet<String>) {
    for r in records
        .iter_mut()
        .filter(|r| ids.contains(&r.participant_id))
    {
        r.exclusions.insert(ExclusionReason::LanguageCriterion);
    }
}

/// Pooled upper-triangle relatedness entries over the shared lemmas, in
/// lemma order. `None` when a shared trial is missing or degenerate.
fn shared_vector(
    record: &ParticipantRecord,
    shared: &BTreeSet<LemmaKey>,
) -> std::result::Result<Vec<f64>, String> {
    let mut out = Vec::new();
    for lemma in shared {
        let trial = record
            .first_trial(lemma, TrialType::Shared)
            .ok_or_else(|| format!("no shared trial for {lemma}"))?;
        let m = trial_relatedness(trial).map_err(|e| e.to_string())?;
        out.extend(upper_triangle(&m.values, m.len()));
    }
    Ok(out)
}

/// Correlates each participant's pooled shared-trial relatedness entries with
/// the entry-wise mean over every other eligible participant and flags those
/// below `threshold`. Participants already excluded on the language criterion
/// are left out of the pool. Returns warnings for skipped participants.
pub fn holdout_screen(
    records: &mut [ParticipantRecord],
    shared: &BTreeSet<LemmaKey>,
    threshold: f64,
) -> Result<Vec<String>> {
    let mut warnings = Vec::new();
    let mut vectors: Vec<(usize, Vec<f64>)> = Vec::new();
    for (i, r) in records.iter().enumerate() {
        if r.exclusions.contains(&ExclusionReason::LanguageCriterion) {
            continue;
        }
        match shared_vector(r, shared) {
            Ok(v) => vectors.push((i, v)),
            Err(msg) => {
                warn!("hold-one-out screen skips {}: {msg}", r.participant_id);
                warnings.push(format!("{}: {msg}", r.participant_id));
            }
        }
    }
    if vectors.len() < 3 {
        return Err(Error::NoData(format!(
            "hold-one-out screening needs at least 3 participants with shared trials, found {}",
            vectors.len()
        )));
    }
    let len = vectors[0].1.len();
    if vectors.iter().any(|(_, v)| v.len() != len) {
        return Err(Error::Alignment(
            "shared trials differ in sense inventory across participants".into(),
        ));
    }
    let mut totals = vec![0.0; len];
    for (_, v) in &vectors {
        totals.iter_mut().zip(v).for_each(|(t, x)| *t += x);
    }
    let others = (vectors.len() - 1) as f64;
    for (i, v) in &vectors {
        let mean_others: Vec<f64> = totals
            .iter()
            .zip(v)
            .map(|(t, x)| (t - x) / others)
            .collect();
        let record = &mut records[*i];
        match spearman_r(v, &mean_others) {
            Ok(r) => {
                record.holdout_corr = Some(r);
                if r < threshold {
                    record
                        .exclusions
                        .insert(ExclusionReason::HoldoutBelowThreshold);
                }
            }
            Err(e) => {
                warn!(
                    "hold-one-out correlation undefined for {}: {e}",
                    record.participant_id
                );
                warnings.push(format!("{}: {e}", record.participant_id));
            }
        }
    }
    Ok(warnings)
}

/// Raw pairwise distances of each repeat trial and its original test trial,
/// concatenated, over senses placed in both.
fn repeat_pairs(record: &ParticipantRecord) -> (Vec<f64>, Vec<f64>) {
    let mut original = Vec::new();
    let mut repeat = Vec::new();
    for rep in record
        .trials
        .iter()
        .filter(|t| t.trial_type == TrialType::Repeat)
    {
        let Some(orig) = record.first_trial(&rep.lemma, TrialType::Test) else {
            continue;
        };
        let common: Vec<&String> = orig
            .placements
            .keys()
            .filter(|k| rep.placements.contains_key(*k))
            .collect();
        for (a, ka) in common.iter().enumerate() {
            for kb in &common[a + 1..] {
                let d = |t: &PlacementTrial| {
                    let (x1, y1) = t.placements[*ka];
                    let (x2, y2) = t.placements[*kb];
                    (x1 - x2).hypot(y1 - y2)
                };
                original.push(d(orig));
                repeat.push(d(rep));
            }
        }
    }
    (original, repeat)
}

/// Spearman correlation between distances in original and repeat trials;
/// participants below `threshold` are flagged. Participants without repeat
/// pairs keep `repeat_corr = None`.
pub fn repeat_screen(records: &mut [ParticipantRecord], threshold: f64) -> Vec<String> {
    let mut warnings = Vec::new();
    for record in records.iter_mut() {
        let (orig, rep) = repeat_pairs(record);
        if orig.is_empty() {
            continue;
        }
        match spearman_r(&orig, &rep) {
            Ok(r) => {
                record.repeat_corr = Some(r);
                if r < threshold {
                    record
                        .exclusions
                        .insert(ExclusionReason::RepeatBelowThreshold);
                }
            }
            Err(e) => {
                warn!(
                    "repeat correlation undefined for {}: {e}",
                    record.participant_id
                );
                warnings.push(format!("{}: {e}", record.participant_id));
            }
        }
    }
    warnings
}

/// Entry-wise mean of relatedness matrices over the same senses.
pub fn mean_matrix(matrices: &[RelatednessMatrix]) -> Result<RelatednessMatrix> {
    let first = matrices
        .first()
        .ok_or_else(|| Error::NoData("no matrices to average".into()))?;
    let mut sum = vec![0.0; first.values.len()];
    for m in matrices {
        if m.sense_keys != first.sense_keys || m.lemma != first.lemma {
            return Err(Error::Alignment(format!(
                "{}: trials place different senses ({:?} vs {:?})",
                first.lemma, first.sense_keys, m.sense_keys
            )));
        }
        sum.iter_mut().zip(&m.values).for_each(|(s, v)| *s += v);
    }
    let n = matrices.len() as f64;
    let n_senses = first.len();
    let values = sum
        .iter()
        .enumerate()
        .map(|(k, s)| {
            if k / n_senses == k % n_senses {
                1.0
            } else {
                (s / n).clamp(0.0, 1.0)
            }
        })
        .collect();
    RelatednessMatrix::new(
        first.lemma.clone(),
        RelatednessSource::HumanAggregate,
        first.sense_keys.clone(),
        values,
    )
}

/// Aggregate relatedness for one lemma. With `subsample_n`, a seeded uniform
/// sample of that many usable trials is averaged instead of all of them.
/// Degenerate trials are dropped with a warning.
pub fn aggregate(
    trials: &[&PlacementTrial],
    subsample_n: Option<usize>,
    seed: u64,
) -> Result<RelatednessMatrix> {
    let mut matrices = Vec::with_capacity(trials.len());
    for t in trials {
        match trial_relatedness(t) {
            Ok(m) => matrices.push(m),
            Err(Error::DegenerateTrial(msg)) => warn!("dropping trial: {msg}"),
            Err(e) => return Err(e),
        }
    }
    if matrices.is_empty() {
        return Err(Error::NoData("no usable trials for aggregation".into()));
    }
    if let Some(n) = subsample_n {
        if n == 0 || n > matrices.len() {
            return Err(Error::Parameter(format!(
                "subsample of {n} requested from {} usable trials",
                matrices.len()
            )));
        }
        let mut rng = seed::rng(seed);
        let mut picked: Vec<usize> = sample(&mut rng, matrices.len(), n).into_vec();
        picked.sort_unstable();
        let chosen: Vec<RelatednessMatrix> =
            picked.into_iter().map(|i| matrices[i].clone()).collect();
        return mean_matrix(&chosen);
    }
    mean_matrix(&matrices)
}

/// Aggregate matrices for every lemma judged by a non-excluded participant.
/// Shared and test trials contribute; repeats and training trials do not.
/// Shared lemmas with more usable trials than `subsample_n` are subsampled
/// using a per-lemma seed derived from `seed`.
pub fn aggregate_cohort(
    records: &[ParticipantRecord],
    shared: &BTreeSet<LemmaKey>,
    subsample_n: Option<usize>,
    seed: u64,
) -> Result<BTreeMap<LemmaKey, RelatednessMatrix>> {
    let mut by_lemma: BTreeMap<LemmaKey, Vec<&PlacementTrial>> = BTreeMap::new();
    for r in records.iter().filter(|r| !r.excluded()) {
        let mut seen = BTreeSet::new();
        for t in r
            .analysed_trials()
            .filter(|t| matches!(t.trial_type, TrialType::Shared | TrialType::Test))
        {
            // one judgment per participant and lemma
            if seen.insert(t.lemma.clone()) {
                by_lemma.entry(t.lemma.clone()).or_default().push(t);
            }
        }
    }
    by_lemma
        .into_par_iter()
        .map(|(lemma, trials)| {
            let n = match subsample_n {
                Some(n) if shared.contains(&lemma) && trials.len() > n => Some(n),
                _ => None,
            };
            let m = aggregate(
                &trials,
                n,
                seed::derive_seed(seed, &format!("aggregate/{lemma}")),
            )?;
            Ok((lemma, m))
        })
        .collect::<Result<Vec<_>>>()
        .map(|v| v.into_iter().collect())
}

/// Which screening statistic a null simulation reproduces.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "screen", rename_all = "snake_case")]
pub enum NullModel {
    /// One participant's pooled shared-trial relatedness against the mean of
    /// `n_participants - 1` others, everyone placing at random.
    Holdout {
        senses_per_trial: Vec<usize>,
        n_participants: usize,
    },
    /// Distances of random original trials against random repeat trials.
    Repeat { senses_per_trial: Vec<usize> },
}

impl NullModel {
    /// Six shared three-sense trials judged by the full cohort of 105.
    pub fn experiment_holdout() -> Self {
        NullModel::Holdout {
            senses_per_trial: vec![3; 6],
            n_participants: 105,
        }
    }

    /// Two repeat trials, one three-sense and one four-sense test lemma.
    pub fn experiment_repeat() -> Self {
        NullModel::Repeat {
            senses_per_trial: vec![3, 4],
        }
    }

    fn validate(&self) -> Result<()> {
        let (senses, participants) = match self {
            NullModel::Holdout {
                senses_per_trial,
                n_participants,
            } => (senses_per_trial, *n_participants),
            NullModel::Repeat { senses_per_trial } => (senses_per_trial, 3),
        };
        if senses.is_empty() || senses.iter().any(|&k| k < 2) {
            return Err(Error::Parameter(
                "every simulated trial needs at least 2 senses".into(),
            ));
        }
        if participants < 3 {
            return Err(Error::Parameter(
                "hold-one-out simulation needs at least 3 participants".into(),
            ));
        }
        Ok(())
    }
}

fn random_points<R: Rng>(rng: &mut R, k: usize) -> Vec<(f64, f64)> {
    (0..k)
        .map(|_| (rng.random::<f64>(), rng.random::<f64>()))
        .collect()
}

/// Relatedness of `k` senses dropped uniformly at random on a unit canvas.
pub fn random_trial_relatedness<R: Rng>(rng: &mut R, k: usize) -> Vec<f64> {
    loop {
        let d = pairwise_euclidean(&random_points(rng, k));
        if let Some(r) = relatedness_from_distances(&d, k) {
            return r;
        }
    }
}

fn null_draw(model: &NullModel, seed: u64) -> Option<f64> {
    let mut rng = seed::rng(seed);
    match model {
        NullModel::Holdout {
            senses_per_trial,
            n_participants,
        } => {
            let participant = |rng: &mut rand_chacha::ChaCha8Rng| -> Vec<f64> {
                senses_per_trial
                    .iter()
                    .flat_map(|&k| {
                        let r = random_trial_relatedness(rng, k);
                        upper_triangle(&r, k).collect::<Vec<_>>()
                    })
                    .collect()
            };
            let target = participant(&mut rng);
            let mut mean = vec![0.0; target.len()];
            for _ in 1..*n_participants {
                mean.iter_mut()
                    .zip(participant(&mut rng))
                    .for_each(|(m, v)| *m += v);
            }
            spearman_r(&target, &mean).ok()
        }
        NullModel::Repeat { senses_per_trial } => {
            let mut a = Vec::new();
            let mut b = Vec::new();
            for &k in senses_per_trial {
                a.extend(upper_triangle(
                    &pairwise_euclidean(&random_points(&mut rng, k)),
                    k,
                ));
                b.extend(upper_triangle(
                    &pairwise_euclidean(&random_points(&mut rng, k)),
                    k,
                ));
            }
            spearman_r(&a, &b).ok()
        }
    }
}

/// Screening correlations under uniformly random placements, one per draw
/// (draws with an undefined correlation are dropped). Draw `i` uses its own
/// derived seed.
pub fn null_distribution(model: &NullModel, draws: usize, seed: u64) -> Result<Vec<f64>> {
    model.validate()?;
    Ok((0..draws as u64)
        .into_par_iter()
        .filter_map(|i| null_draw(model, seed::derive_indexed(seed, "null", i)))
        .collect())
}

/// The `pct`-th percentile (linear interpolation) of the null distribution.
pub fn calibrate_threshold(model: &NullModel, pct: f64, draws: usize, seed: u64) -> Result<f64> {
    if draws < 100 {
        return Err(Error::Parameter(format!(
            "calibration needs at least 100 draws, got {draws}"
        )));
    }
    if !(0.0..=100.0).contains(&pct) {
        return Err(Error::Parameter(format!(
            "percentile {pct} outside [0, 100]"
        )));
    }
    let values = null_distribution(model, draws, seed)?;
    if values.is_empty() {
        return Err(Error::NoData("every null draw was degenerate".into()));
    }
    Ok(percentile(&values, pct))
}

/// One row of the exclusion report.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ExclusionRow {
    pub participant: String,
    pub holdout_corr: Option<f64>,
    pub repeat_corr: Option<f64>,
    pub excluded: bool,
    pub reason: String,
}

pub fn exclusion_rows(records: &[ParticipantRecord]) -> Vec<ExclusionRow> {
    records
        .iter()
        .map(|r| ExclusionRow {
            participant: r.participant_id.clone(),
            holdout_corr: r.holdout_corr,
            repeat_corr: r.repeat_corr,
            excluded: r.excluded(),
            reason: r
                .exclusions
                .iter()
                .map(|e| e.as_str())
                .collect::<Vec<_>>()
                .join(";"),
        })
        .collect()
}

pub fn write_exclusion_csv<W: Write>(writer: W, records: &[ParticipantRecord]) -> Result<()> {
    write_exclusion_rows(writer, &exclusion_rows(records))
}

pub fn write_exclusion_rows<W: Write>(writer: W, rows: &[ExclusionRow]) -> Result<()> {
    let mut w = csv::Writer::from_writer(writer);
    w.write_record([
        "participant",
        "holdout_corr",
        "repeat_corr",
        "excluded",
        "reason",
    ])
    .map_err(|e| Error::Data(e.to_string()))?;
    let fmt = |v: Option<f64>| v.map(|x| format!("{x:.6}")).unwrap_or_default();
    for row in rows {
        w.write_record([
            row.participant.clone(),
            fmt(row.holdout_corr),
            fmt(row.repeat_corr),
            row.excluded.to_string(),
            row.reason.clone(),
        ])
        .map_err(|e| Error::Data(e.to_string()))?;
    }
    w.flush().map_err(|e| Error::io("<exclusions>", e))
}
