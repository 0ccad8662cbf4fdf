use rand::seq::SliceRandom;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::logistic::{train_problem, Problem, TrainConfig};
use super::{weighted_f1_indices, Example};
use crate::corpus::LemmaKey;
use crate::error::{Error, Result};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CvConfig {
    pub folds: usize,
    pub train: TrainConfig,
    /// z-score features using training-fold statistics.
    pub standardize: bool,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig {
            folds: 5,
            train: TrainConfig::default(),
            standardize: false,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CvReport {
    pub lemma: LemmaKey,
    pub sense_keys: Vec<String>,
    /// Weighted F1 of each held-out fold.
    pub fold_f1: Vec<f64>,
    pub mean_f1: f64,
    /// Held-out predictions summed over folds; rows are true senses.
    pub summed_confusion: Vec<Vec<u64>>,
    pub support: Vec<u64>,
    /// Iterations used by each fold's solver.
    pub iterations: Vec<usize>,
    pub converged: Vec<bool>,
}

/// Fold index per example. Within each sense, examples are shuffled with a
/// sense-specific seed and dealt round-robin, continuing from where the
/// previous sense stopped so fold sizes stay balanced.
pub fn stratified_folds(labels: &[String], folds: usize, seed: u64) -> Result<Vec<usize>> {
    if folds < 2 {
        return Err(Error::Parameter(format!(
            "need at least 2 folds, got {folds}"
        )));
    }
    let mut senses: Vec<&String> = labels.iter().collect();
    senses.sort();
    senses.dedup();
    let mut assignment = vec![0; labels.len()];
    let mut next = 0;
    for sense in senses {
        let mut idx: Vec<usize> = (0..labels.len()).filter(|&i| &labels[i] == sense).collect();
        if idx.len() < folds {
            return Err(Error::Stratification {
                class: sense.clone(),
                count: idx.len(),
                folds,
            });
        }
        idx.shuffle(&mut seed::rng(seed::derive_seed(
            seed,
            &format!("folds/{sense}"),
        )));
        for i in idx {
            assignment[i] = next % folds;
            next += 1;
        }
    }
    Ok(assignment)
}

fn standardize(train: &mut [Example], test: &mut [Example]) {
    let d = train[0].vector.len();
    let n = train.len() as f64;
    let mut mean = vec![0.0; d];
    for e in train.iter() {
        mean.iter_mut()
            .zip(&e.vector)
            .for_each(|(m, v)| *m += v / n);
    }
    let mut sd = vec![0.0; d];
    for e in train.iter() {
        sd.iter_mut()
            .zip(e.vector.iter().zip(&mean))
            .for_each(|(s, (v, m))| *s += (v - m).powi(2) / n);
    }
    sd.iter_mut()
        .for_each(|s| *s = if *s > 0.0 { s.sqrt() } else { 1.0 });
    for e in train.iter_mut().chain(test.iter_mut()) {
        for ((v, m), s) in e.vector.iter_mut().zip(&mean).zip(&sd) {
            *v = (*v - m) / s;
        }
    }
}

struct FoldResult {
    f1: f64,
    confusion: Vec<Vec<u64>>,
    iterations: usize,
    converged: bool,
}

/// Stratified k-fold cross-validation. Folds are trained in parallel and
/// gathered in fold order, so the report does not depend on scheduling.
pub fn cross_validate(
    lemma: &LemmaKey,
    examples: &[Example],
    config: &CvConfig,
) -> Result<CvReport> {
    let labels: Vec<String> = examples.iter().map(|e| e.sense.clone()).collect();
    let mut sense_keys = labels.clone();
    sense_keys.sort();
    sense_keys.dedup();
    if sense_keys.len() < 2 {
        return Err(Error::DegenerateTraining(format!(
            "{lemma}: cross-validation needs at least two senses"
        )));
    }
    let assignment = stratified_folds(&labels, config.folds, config.seed)?;
    let k = sense_keys.len();
    let class_of = |s: &str| {
        sense_keys
            .binary_search_by(|x| x.as_str().cmp(s))
            .expect("known sense")
    };

    let results: Vec<FoldResult> = (0..config.folds)
        .into_par_iter()
        .map(|fold| {
            let mut train: Vec<Example> = Vec::new();
            let mut test: Vec<Example> = Vec::new();
            for (e, &f) in examples.iter().zip(&assignment) {
                if f == fold {
                    test.push(e.clone());
                } else {
                    train.push(e.clone());
                }
            }
            if config.standardize {
                standardize(&mut train, &mut test);
            }
            let problem = Problem::with_classes(&train, sense_keys.clone())?;
            let outcome = train_problem(lemma, &problem, &config.train)?;
            let mut confusion = vec![vec![0u64; k]; k];
            let mut truth = Vec::with_capacity(test.len());
            let mut pred = Vec::with_capacity(test.len());
            for e in &test {
                let p = outcome.model.predict_index(&e.vector)?;
                let t = class_of(&e.sense);
                confusion[t][p] += 1;
                truth.push(t);
                pred.push(p);
            }
            Ok(FoldResult {
                f1: weighted_f1_indices(&truth, &pred, k),
                confusion,
                iterations: outcome.iterations,
                converged: outcome.converged,
            })
        })
        .collect::<Result<Vec<_>>>()?;

    let mut summed = vec![vec![0u64; k]; k];
    for r in &results {
        for (row, add) in summed.iter_mut().zip(&r.confusion) {
            row.iter_mut().zip(add).for_each(|(a, b)| *a += b);
        }
    }
    let fold_f1: Vec<f64> = results.iter().map(|r| r.f1).collect();
    let support = summed.iter().map(|row| row.iter().sum()).collect();
    Ok(CvReport {
        lemma: lemma.clone(),
        mean_f1: fold_f1.iter().sum::<f64>() / fold_f1.len() as f64,
        fold_f1,
        summed_confusion: summed,
        support,
        iterations: results.iter().map(|r| r.iterations).collect(),
        converged: results.iter().map(|r| r.converged).collect(),
        sense_keys,
    })
}

/// Cross-validated weighted F1 of a binary classifier restricted to the
/// tokens of two senses.
pub fn pairwise_sense_f1(
    lemma: &LemmaKey,
    examples: &[Example],
    sense_a: &str,
    sense_b: &str,
    config: &CvConfig,
) -> Result<f64> {
    let subset: Vec<Example> = examples
        .iter()
        .filter(|e| e.sense == sense_a || e.sense == sense_b)
        .cloned()
        .collect();
    for s in [sense_a, sense_b] {
        if !subset.iter().any(|e| e.sense == s) {
            return Err(Error::MissingSense {
                lemma: lemma.to_string(),
                sense: s.to_string(),
            });
        }
    }
    Ok(cross_validate(lemma, &subset, config)?.mean_f1)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Pos;

    #[test]
    fn folds_are_stratified_and_balanced() {
        let labels: Vec<String> = (0..23)
            .map(|i| if i < 13 { "a" } else { "b" }.to_string())
            .collect();
        let f = stratified_folds(&labels, 5, 3).unwrap();
        assert_eq!(f, stratified_folds(&labels, 5, 3).unwrap());
        for fold in 0..5 {
            let a = (0..23)
                .filter(|&i| f[i] == fold && labels[i] == "a")
                .count();
            let b = (0..23)
                .filter(|&i| f[i] == fold && labels[i] == "b")
                .count();
            assert!((2..=3).contains(&a), "{a}");
            assert!((2..=2).contains(&b), "{b}");
            let total = f.iter().filter(|&&x| x == fold).count();
            assert!((4..=5).contains(&total));
        }
        let short: Vec<String> = vec!["a".into(); 4];
        assert!(matches!(
            stratified_folds(&short, 5, 0),
            Err(Error::Stratification { count: 4, .. })
        ));
    }

    #[test]
    fn missing_pair_sense() {
        let lemma = LemmaKey::new("x", Pos::Noun).unwrap();
        let data: Vec<Example> = (0..10)
            .map(|i| Example {
                vector: vec![i as f64],
                sense: "a".into(),
            })
            .collect();
        assert!(matches!(
            pairwise_sense_f1(&lemma, &data, "a", "b", &CvConfig::default()),
            Err(Error::MissingSense { .. })
        ));
    }
}
