//! Matrix-to-matrix comparison: paired entries, pooled correlations, the
//! polysemy/homonymy split and the random-placement baseline.

use std::collections::{BTreeMap, BTreeSet};
use std::fs::File;
use std::io::Read;
use std::path::Path;
use std::str::FromStr;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::correlation::{
    correlation_p_value, percentile, spearman_r, spearman_with, CiOptions, CorrelationResult,
};
use crate::corpus::{LemmaKey, Pos};
use crate::error::{Error, Result};
use crate::human::random_trial_relatedness;
use crate::relatedness::RelatednessMatrix;
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MatrixCompareMode {
    #[default]
    UpperTriangle,
    /// Every off-diagonal cell; diagonals are excluded.
    AllOffDiagonal,
}

impl FromStr for MatrixCompareMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "upper_triangle" => Ok(MatrixCompareMode::UpperTriangle),
            "all_offdiagonal" => Ok(MatrixCompareMode::AllOffDiagonal),
            other => Err(Error::Parameter(format!(
                "unknown comparison mode {other:?}"
            ))),
        }
    }
}

fn cells(n: usize, mode: MatrixCompareMode) -> Vec<(usize, usize)> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in 0..n {
            let keep = match mode {
                MatrixCompareMode::UpperTriangle => j > i,
                MatrixCompareMode::AllOffDiagonal => j != i,
            };
            if keep {
                out.push((i, j));
            }
        }
    }
    out
}

/// Paired entries of two matrices over the same lemma and senses. `b` is
/// reordered to `a`'s sense order when the sets agree.
pub fn compare_matrices(
    a: &RelatednessMatrix,
    b: &RelatednessMatrix,
    mode: MatrixCompareMode,
) -> Result<(Vec<f64>, Vec<f64>)> {
    if a.lemma != b.lemma {
        return Err(Error::Alignment(format!(
            "comparing {} with {}",
            a.lemma, b.lemma
        )));
    }
    let sa: BTreeSet<&String> = a.sense_keys.iter().collect();
    let sb: BTreeSet<&String> = b.sense_keys.iter().collect();
    if sa != sb {
        return Err(Error::Alignment(format!(
            "{}: sense sets differ ({:?} vs {:?})",
            a.lemma, a.sense_keys, b.sense_keys
        )));
    }
    let b = if a.sense_keys == b.sense_keys {
        b.clone()
    } else {
        b.restrict(&a.sense_keys)?
    };
    if mode == MatrixCompareMode::UpperTriangle
        && !(a.is_numerically_symmetric() && b.is_numerically_symmetric())
    {
        return Err(Error::Parameter(format!(
            "{}: asymmetric matrix requires all_offdiagonal mode",
            a.lemma
        )));
    }
    let pairs = cells(a.len(), mode);
    Ok((
        pairs.iter().map(|&(i, j)| a.get(i, j)).collect(),
        pairs.iter().map(|&(i, j)| b.get(i, j)).collect(),
    ))
}

/// Paired entries pooled across lemmas.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct PooledPairs {
    pub x: Vec<f64>,
    pub y: Vec<f64>,
    /// Lemmas that contributed, in pooling order.
    pub lemmas: Vec<LemmaKey>,
    /// Lemmas left out because fewer than two senses were shared.
    pub skipped: Vec<LemmaKey>,
}

/// Pools paired entries over `lemmas`. Each pair of matrices is restricted to
/// the senses present in both (in `a`'s order), which trims the human side to
/// the senses that survived classifier filtering. Missing lemmas are an
/// alignment error.
pub fn pooled_pairs(
    a: &BTreeMap<LemmaKey, RelatednessMatrix>,
    b: &BTreeMap<LemmaKey, RelatednessMatrix>,
    lemmas: &[LemmaKey],
    mode: MatrixCompareMode,
) -> Result<PooledPairs> {
    let mut out = PooledPairs::default();
    for lemma in lemmas {
        let (Some(ma), Some(mb)) = (a.get(lemma), b.get(lemma)) else {
            return Err(Error::Alignment(format!(
                "{lemma} missing from one side of the comparison"
            )));
        };
        let common: Vec<String> = ma
            .sense_keys
            .iter()
            .filter(|k| mb.index_of(k).is_some())
            .cloned()
            .collect();
        if common.len() < 2 {
            out.skipped.push(lemma.clone());
            continue;
        }
        let (x, y) = compare_matrices(&ma.restrict(&common)?, &mb.restrict(&common)?, mode)?;
        out.x.extend(x);
        out.y.extend(y);
        out.lemmas.push(lemma.clone());
    }
    Ok(out)
}

/// Lemmas present in both maps, in key order.
pub fn common_lemmas(
    a: &BTreeMap<LemmaKey, RelatednessMatrix>,
    b: &BTreeMap<LemmaKey, RelatednessMatrix>,
) -> Vec<LemmaKey> {
    a.keys().filter(|k| b.contains_key(*k)).cloned().collect()
}

pub fn pooled_correlation(
    a: &BTreeMap<LemmaKey, RelatednessMatrix>,
    b: &BTreeMap<LemmaKey, RelatednessMatrix>,
    lemmas: &[LemmaKey],
    mode: MatrixCompareMode,
    ci: &CiOptions,
) -> Result<CorrelationResult> {
    let pooled = pooled_pairs(a, b, lemmas, mode)?;
    spearman_with(&pooled.x, &pooled.y, ci)
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Relation {
    Polysemy,
    Homonymy,
}

impl FromStr for Relation {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "polysemy" => Ok(Relation::Polysemy),
            "homonymy" => Ok(Relation::Homonymy),
            other => Err(Error::Data(format!("unknown relation {other:?}"))),
        }
    }
}

/// A hand-labelled sense pair, stored with `sense_a < sense_b`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Serialize, Deserialize)]
pub struct PairLabel {
    pub lemma: LemmaKey,
    pub sense_a: String,
    pub sense_b: String,
    pub relation: Relation,
}

impl PairLabel {
    pub fn new(lemma: LemmaKey, s1: &str, s2: &str, relation: Relation) -> Result<Self> {
        if s1 == s2 {
            return Err(Error::Data(format!("{lemma}: pair of {s1} with itself")));
        }
        let (a, b) = if s1 < s2 { (s1, s2) } else { (s2, s1) };
        Ok(PairLabel {
            lemma,
            sense_a: a.to_string(),
            sense_b: b.to_string(),
            relation,
        })
    }
}

#[derive(Debug, Deserialize)]
struct PairRow {
    word_type: String,
    pos: String,
    sense_a: String,
    sense_b: String,
    relation: String,
}

/// Parses the pair-labels CSV (`word_type,pos,sense_a,sense_b,relation`).
/// Pairs are canonicalised; a pair listed twice is an integrity error.
pub fn read_pair_labels<R: Read>(reader: R) -> Result<Vec<PairLabel>> {
    let mut rdr = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_reader(reader);
    let mut out = Vec::new();
    let mut seen = BTreeSet::new();
    for (idx, row) in rdr.deserialize::<PairRow>().enumerate() {
        // header is line 1
        let line = idx + 2;
        let parse = |message: String| Error::Parse { line, message };
        let row = row.map_err(|e| parse(e.to_string()))?;
        let pos: Pos = row.pos.parse().map_err(|e: Error| parse(e.to_string()))?;
        let lemma = LemmaKey::new(&row.word_type, pos).map_err(|e| parse(e.to_string()))?;
        let relation: Relation = row
            .relation
            .parse()
            .map_err(|e: Error| parse(e.to_string()))?;
        let label = PairLabel::new(lemma, &row.sense_a, &row.sense_b, relation)
            .map_err(|e| parse(e.to_string()))?;
        if !seen.insert((
            label.lemma.clone(),
            label.sense_a.clone(),
            label.sense_b.clone(),
        )) {
            return Err(Error::Integrity(format!(
                "line {line}: duplicate pair {} {}/{}",
                label.lemma, label.sense_a, label.sense_b
            )));
        }
        out.push(label);
    }
    Ok(out)
}

pub fn load_pair_labels(path: &Path) -> Result<Vec<PairLabel>> {
    let file = File::open(path).map_err(|e| Error::io(path, e))?;
    read_pair_labels(file)
}

/// Hand-labelled pairs shipped with the crate.
pub fn bundled_pair_labels() -> Vec<PairLabel> {
    read_pair_labels(include_str!("../../data/pair_labels.csv").as_bytes())
        .expect("bundled pair labels parse")
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct RelationSplit {
    pub human_polysemy: Vec<f64>,
    pub human_homonymy: Vec<f64>,
    pub model_polysemy: Vec<f64>,
    pub model_homonymy: Vec<f64>,
}

fn locate<'a>(
    side: &'a BTreeMap<LemmaKey, RelatednessMatrix>,
    name: &str,
    p: &PairLabel,
) -> Result<(&'a RelatednessMatrix, usize, usize)> {
    side.get(&p.lemma)
        .and_then(|m| Some((m, m.index_of(&p.sense_a)?, m.index_of(&p.sense_b)?)))
        .ok_or_else(|| {
            Error::Alignment(format!(
                "labelled pair {} {}/{} not found in {name} matrices",
                p.lemma, p.sense_a, p.sense_b
            ))
        })
}

/// Distances of labelled pairs split by relation. Human distances are
/// `1 - relatedness`; model distances are the stored raw cosine distances
/// unless `model_normalized` is set (or none were stored).
pub fn split_by_relation(
    labels: &[PairLabel],
    human: &BTreeMap<LemmaKey, RelatednessMatrix>,
    model: &BTreeMap<LemmaKey, RelatednessMatrix>,
    model_normalized: bool,
) -> Result<RelationSplit> {
    let mut out = RelationSplit::default();
    for p in labels {
        let (hm, hi, hj) = locate(human, "human", p)?;
        let (mm, mi, mj) = locate(model, "model", p)?;
        let h = hm.distance(hi, hj, false);
        let m = mm.distance(mi, mj, !model_normalized);
        match p.relation {
            Relation::Polysemy => {
                out.human_polysemy.push(h);
                out.model_polysemy.push(m);
            }
            Relation::Homonymy => {
                out.human_homonymy.push(h);
                out.model_homonymy.push(m);
            }
        }
    }
    Ok(out)
}

/// One cell of a stratified correlation table. `result` is `None` when the
/// stratum holds fewer than three pairs or the correlation is undefined.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StratumCell {
    pub metric: String,
    pub stratum: String,
    pub n_pairs: usize,
    pub lemmas: usize,
    pub result: Option<CorrelationResult>,
}

impl StratumCell {
    pub fn insufficient(&self) -> bool {
        self.result.is_none()
    }
}

/// Pooled correlations computed separately for each stratum of `groups`
/// (lemma to stratum label, e.g. part of speech or entropy band). Lemmas
/// without a group are ignored.
pub fn stratified_correlations(
    metric: &str,
    a: &BTreeMap<LemmaKey, RelatednessMatrix>,
    b: &BTreeMap<LemmaKey, RelatednessMatrix>,
    groups: &BTreeMap<LemmaKey, String>,
    mode: MatrixCompareMode,
    ci: &CiOptions,
) -> Result<Vec<StratumCell>> {
    let mut strata: BTreeMap<&str, Vec<LemmaKey>> = BTreeMap::new();
    for lemma in common_lemmas(a, b) {
        if let Some(g) = groups.get(&lemma) {
            strata.entry(g.as_str()).or_default().push(lemma);
        }
    }
    let mut out = Vec::new();
    for (stratum, lemmas) in strata {
        let pooled = pooled_pairs(a, b, &lemmas, mode)?;
        let result = if pooled.x.len() < 3 {
            None
        } else {
            match spearman_with(&pooled.x, &pooled.y, ci) {
                Ok(r) => Some(r),
                Err(Error::UndefinedCorrelation(_)) => None,
                Err(e) => return Err(e),
            }
        };
        out.push(StratumCell {
            metric: metric.to_string(),
            stratum: stratum.to_string(),
            n_pairs: pooled.x.len(),
            lemmas: pooled.lemmas.len(),
            result,
        });
    }
    Ok(out)
}

/// Summary of correlations obtained from simulated random placements.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PlacementBaseline {
    pub mean_r: f64,
    /// 2.5th and 97.5th percentiles of the per-draw correlations.
    pub interval_low: f64,
    pub interval_high: f64,
    /// Large-sample t approximation evaluated at `mean_r`.
    pub p_value: f64,
    /// Paired entries per draw.
    pub n: usize,
    pub draws: Vec<f64>,
}

/// For each draw, simulates `n_participants` uniformly random placements per
/// lemma, averages them, pools the entries and correlates against `model`.
/// Draw `i` uses its own derived seed; draws with an undefined correlation
/// are dropped.
pub fn random_placement_baseline(
    model: &BTreeMap<LemmaKey, RelatednessMatrix>,
    n_participants: usize,
    draws: usize,
    mode: MatrixCompareMode,
    seed: u64,
) -> Result<PlacementBaseline> {
    if n_participants == 0 || draws == 0 {
        return Err(Error::Parameter(
            "baseline needs at least one participant and one draw".into(),
        ));
    }
    let lemmas: Vec<&RelatednessMatrix> = model.values().filter(|m| m.len() >= 2).collect();
    let mut model_entries = Vec::new();
    for m in &lemmas {
        if mode == MatrixCompareMode::UpperTriangle && !m.is_numerically_symmetric() {
            return Err(Error::Parameter(format!(
                "{}: asymmetric matrix requires all_offdiagonal mode",
                m.lemma
            )));
        }
        model_entries.extend(cells(m.len(), mode).into_iter().map(|(i, j)| m.get(i, j)));
    }
    if model_entries.len() < 3 {
        return Err(Error::Size(format!(
            "baseline needs at least 3 paired entries, got {}",
            model_entries.len()
        )));
    }
    let mut rs: Vec<f64> = (0..draws as u64)
        .into_par_iter()
        .filter_map(|d| {
            let mut rng = seed::rng(seed::derive_indexed(seed, "placement-baseline", d));
            let mut simulated = Vec::with_capacity(model_entries.len());
            for m in &lemmas {
                let k = m.len();
                let mut mean = vec![0.0; k * k];
                for _ in 0..n_participants {
                    let r = random_trial_relatedness(&mut rng, k);
                    mean.iter_mut().zip(&r).for_each(|(a, v)| *a += v);
                }
                simulated.extend(
                    cells(k, mode)
                        .into_iter()
                        .map(|(i, j)| mean[i * k + j] / n_participants as f64),
                );
            }
            spearman_r(&simulated, &model_entries).ok()
        })
        .collect();
    if rs.is_empty() {
        return Err(Error::UndefinedCorrelation(
            "every baseline draw was degenerate".into(),
        ));
    }
    let mean_r = rs.iter().sum::<f64>() / rs.len() as f64;
    let interval_low = percentile(&rs, 2.5);
    let interval_high = percentile(&rs, 97.5);
    rs.shrink_to_fit();
    Ok(PlacementBaseline {
        mean_r,
        interval_low,
        interval_high,
        p_value: correlation_p_value(mean_r, model_entries.len()),
        n: model_entries.len(),
        draws: rs,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::embeddings::{relatedness_from_vectors, RelatednessNorm};
    use crate::relatedness::RelatednessSource;
    use proptest::prelude::*;

    fn lemma(w: &str) -> LemmaKey {
        LemmaKey::new(w, Pos::Noun).unwrap()
    }

    fn keys(n: usize) -> Vec<String> {
        (1..=n).map(|i| format!("s{i}")).collect()
    }

    fn sym(w: &str, upper: &[f64], n: usize) -> RelatednessMatrix {
        let mut v = vec![1.0; n * n];
        let mut k = 0;
        for i in 0..n {
            for j in (i + 1)..n {
                v[i * n + j] = upper[k];
                v[j * n + i] = upper[k];
                k += 1;
            }
        }
        RelatednessMatrix::new(lemma(w), RelatednessSource::HumanAggregate, keys(n), v).unwrap()
    }

    fn confusion(w: &str, values: Vec<f64>, n: usize) -> RelatednessMatrix {
        RelatednessMatrix::new(lemma(w), RelatednessSource::Confusion, keys(n), values).unwrap()
    }

    #[test]
    fn entry_counts() {
        let a = sym("x", &[0.1, 0.5, 0.9], 3);
        let b = sym("x", &[0.2, 0.4, 0.0], 3);
        assert_eq!(
            compare_matrices(&a, &b, MatrixCompareMode::UpperTriangle)
                .unwrap()
                .0
                .len(),
            3
        );
        let c = confusion("x", vec![0.8, 0.1, 0.1, 0.3, 0.6, 0.1, 0.0, 0.5, 0.5], 3);
        let (x, y) = compare_matrices(&a, &c, MatrixCompareMode::AllOffDiagonal).unwrap();
        assert_eq!(x, vec![0.1, 0.5, 0.1, 0.9, 0.5, 0.9]);
        assert_eq!(y, vec![0.1, 0.1, 0.3, 0.1, 0.0, 0.5]);
        assert!(compare_matrices(&a, &c, MatrixCompareMode::UpperTriangle).is_err());
    }

    #[test]
    fn alignment_errors_and_reordering() {
        let a = sym("x", &[0.1, 0.5, 0.9], 3);
        assert!(matches!(
            compare_matrices(
                &a,
                &sym("y", &[0.1, 0.5, 0.9], 3),
                MatrixCompareMode::UpperTriangle
            ),
            Err(Error::Alignment(_))
        ));
        assert!(matches!(
            compare_matrices(&a, &sym("x", &[0.1], 2), MatrixCompareMode::UpperTriangle),
            Err(Error::Alignment(_))
        ));
        let order = vec!["s3".to_string(), "s1".to_string(), "s2".to_string()];
        let shuffled = a.restrict(&order).unwrap();
        let (x, y) = compare_matrices(&a, &shuffled, MatrixCompareMode::UpperTriangle).unwrap();
        assert_eq!(x, y);
    }

    #[test]
    fn pooling_restricts_to_shared_senses() {
        let human: BTreeMap<_, _> = [sym("x", &[0.1, 0.5, 0.9], 3), sym("y", &[0.3, 0.2, 0.7], 3)]
            .into_iter()
            .map(|m| (m.lemma.clone(), m))
            .collect();
        let model: BTreeMap<_, _> = [sym("x", &[0.2], 2), sym("y", &[0.9, 0.1, 0.4], 3)]
            .into_iter()
            .map(|m| (m.lemma.clone(), m))
            .collect();
        let lemmas = common_lemmas(&human, &model);
        let p = pooled_pairs(&human, &model, &lemmas, MatrixCompareMode::UpperTriangle).unwrap();
        assert_eq!(p.x, vec![0.1, 0.3, 0.2, 0.7]);
        assert_eq!(p.y, vec![0.2, 0.9, 0.1, 0.4]);
        assert!(pooled_pairs(
            &human,
            &model,
            &[lemma("z")],
            MatrixCompareMode::UpperTriangle
        )
        .is_err());
    }

    #[test]
    fn max_and_minmax_normalisation_rank_identically() {
        let vecs: [&[f64]; 4] = [
            &[1.0, 0.2, 0.0],
            &[0.3, 1.0, 0.1],
            &[0.0, 0.5, 1.0],
            &[0.7, 0.7, 0.2],
        ];
        let max =
            relatedness_from_vectors(&lemma("x"), keys(4), &vecs, RelatednessNorm::Max).unwrap();
        let minmax =
            relatedness_from_vectors(&lemma("x"), keys(4), &vecs, RelatednessNorm::MinMax).unwrap();
        let (x, y) = compare_matrices(&max, &minmax, MatrixCompareMode::UpperTriangle).unwrap();
        assert_eq!(spearman_r(&x, &y).unwrap(), 1.0);
    }

    #[test]
    fn pair_labels_parse() {
        let text = "word_type,pos,sense_a,sense_b,relation\n\
                    bank,n,bank.n.02,bank.n.01,homonymy\n\
                    table,n,table.n.02,table.n.03,polysemy\n";
        let labels = read_pair_labels(text.as_bytes()).unwrap();
        assert_eq!(labels[0].sense_a, "bank.n.01");
        assert_eq!(labels[0].relation, Relation::Homonymy);
        let dup = format!("{text}bank,n,bank.n.01,bank.n.02,polysemy\n");
        assert!(matches!(
            read_pair_labels(dup.as_bytes()),
            Err(Error::Integrity(_))
        ));
        let bad = "word_type,pos,sense_a,sense_b,relation\nbank,n,a,b,synonymy\n";
        assert!(matches!(
            read_pair_labels(bad.as_bytes()),
            Err(Error::Parse { line: 2, .. })
        ));
        assert!(
            read_pair_labels("word_type,pos,sense_a,sense_b,relation\n".as_bytes())
                .unwrap()
                .is_empty()
        );
        assert!(!bundled_pair_labels().is_empty());
    }

    #[test]
    fn relation_split() {
        let mut model_m = sym("x", &[0.5, 0.0, 0.25], 3);
        model_m.source = RelatednessSource::CentroidCosine;
        model_m.distances = Some(vec![0.0, 0.2, 0.4, 0.2, 0.0, 0.3, 0.4, 0.3, 0.0]);
        let human: BTreeMap<_, _> = [(lemma("x"), sym("x", &[0.9, 0.1, 0.2], 3))].into();
        let model: BTreeMap<_, _> = [(lemma("x"), model_m)].into();

        let empty = split_by_relation(&[], &human, &model, false).unwrap();
        assert_eq!(empty, RelationSplit::default());

        let labels = vec![
            PairLabel::new(lemma("x"), "s2", "s1", Relation::Polysemy).unwrap(),
            PairLabel::new(lemma("x"), "s1", "s3", Relation::Homonymy).unwrap(),
        ];
        let s = split_by_relation(&labels[..1], &human, &model, false).unwrap();
        assert_eq!(s.human_polysemy.len(), 1);
        assert!(s.human_homonymy.is_empty());
        let s = split_by_relation(&labels, &human, &model, false).unwrap();
        assert!((s.human_polysemy[0] - 0.1).abs() < 1e-12);
        assert!((s.human_homonymy[0] - 0.9).abs() < 1e-12);
        assert_eq!(s.model_polysemy, vec![0.2]);
        assert_eq!(s.model_homonymy, vec![0.4]);
        let s = split_by_relation(&labels, &human, &model, true).unwrap();
        assert_eq!(s.model_polysemy, vec![0.5]);
        assert_eq!(s.model_homonymy, vec![1.0]);

        let missing = vec![PairLabel::new(lemma("x"), "s1", "s9", Relation::Polysemy).unwrap()];
        assert!(matches!(
            split_by_relation(&missing, &human, &model, false),
            Err(Error::Alignment(_))
        ));
    }

    fn fixture_maps() -> (
        BTreeMap<LemmaKey, RelatednessMatrix>,
        BTreeMap<LemmaKey, RelatednessMatrix>,
    ) {
        let h = [
            sym("a", &[0.1, 0.5, 0.9], 3),
            sym("b", &[0.3, 0.2, 0.7], 3),
            sym("c", &[0.8, 0.4, 0.6, 0.0, 0.3, 0.2], 4),
        ];
        let m = [
            sym("a", &[0.2, 0.4, 1.0], 3),
            sym("b", &[0.5, 0.1, 0.6], 3),
            sym("c", &[0.9, 0.2, 0.7, 0.1, 0.0, 0.4], 4),
        ];
        (
            h.into_iter().map(|m| (m.lemma.clone(), m)).collect(),
            m.into_iter().map(|m| (m.lemma.clone(), m)).collect(),
        )
    }

    #[test]
    fn single_stratum_equals_unstratified() {
        let (h, m) = fixture_maps();
        let ci = CiOptions::default();
        let groups: BTreeMap<_, _> = h.keys().map(|k| (k.clone(), "noun".to_string())).collect();
        let cells = stratified_correlations(
            "cosine",
            &h,
            &m,
            &groups,
            MatrixCompareMode::UpperTriangle,
            &ci,
        )
        .unwrap();
        assert_eq!(cells.len(), 1);
        let all = pooled_correlation(
            &h,
            &m,
            &common_lemmas(&h, &m),
            MatrixCompareMode::UpperTriangle,
            &ci,
        )
        .unwrap();
        assert_eq!(cells[0].result, Some(all));
        assert_eq!(cells[0].n_pairs, 12);
    }

    #[test]
    fn small_strata_are_insufficient() {
        let (h, m) = fixture_maps();
        let mut tiny = h.clone();
        tiny.insert(lemma("d"), sym("d", &[0.5], 2));
        let mut tiny_m = m.clone();
        tiny_m.insert(lemma("d"), sym("d", &[0.1], 2));
        let groups: BTreeMap<_, _> = tiny
            .keys()
            .map(|k| {
                (
                    k.clone(),
                    if k.word_type() == "d" { "small" } else { "big" }.to_string(),
                )
            })
            .collect();
        let cells = stratified_correlations(
            "cosine",
            &tiny,
            &tiny_m,
            &groups,
            MatrixCompareMode::UpperTriangle,
            &CiOptions::default(),
        )
        .unwrap();
        let small = cells.iter().find(|c| c.stratum == "small").unwrap();
        assert!(small.insufficient());
        assert_eq!(small.n_pairs, 1);
        assert!(!cells
            .iter()
            .find(|c| c.stratum == "big")
            .unwrap()
            .insufficient());
    }

    #[test]
    fn baseline_is_reproducible() {
        let (_, m) = fixture_maps();
        let a = random_placement_baseline(&m, 29, 1, MatrixCompareMode::UpperTriangle, 5).unwrap();
        let b = random_placement_baseline(&m, 29, 1, MatrixCompareMode::UpperTriangle, 5).unwrap();
        assert_eq!(a, b);
        assert_eq!(a.n, 12);
        let many =
            random_placement_baseline(&m, 29, 200, MatrixCompareMode::UpperTriangle, 5).unwrap();
        assert!(many.interval_low <= many.mean_r && many.mean_r <= many.interval_high);
        assert!(many.mean_r.abs() < 0.15, "{}", many.mean_r);
    }

    proptest! {
        #[test]
        fn upper_triangle_and_offdiagonal_agree_on_symmetric_inputs(
            a in prop::collection::vec(0.0f64..1.0, 6),
            b in prop::collection::vec(0.0f64..1.0, 6),
        ) {
            let ma = sym("x", &a, 4);
            let mb = sym("x", &b, 4);
            let (x1, y1) = compare_matrices(&ma, &mb, MatrixCompareMode::UpperTriangle).unwrap();
            let (x2, y2) = compare_matrices(&ma, &mb, MatrixCompareMode::AllOffDiagonal).unwrap();
            prop_assert_eq!(x2.len(), 2 * x1.len());
            match (spearman_r(&x1, &y1), spearman_r(&x2, &y2)) {
                (Ok(r1), Ok(r2)) => prop_assert!((r1 - r2).abs() < 1e-12),
                (Err(_), Err(_)) => {}
                (l, r) => prop_assert!(false, "{:?} vs {:?}", l, r),
            }
        }
    }
}
