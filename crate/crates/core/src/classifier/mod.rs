//! Per-lemma word-sense classification with L1-regularised multinomial
//! logistic regression, cross-validation, baselines and confusion-derived
//! relatedness.

mod cv;
mod logistic;

use std::collections::BTreeMap;

use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::corpus::{LemmaKey, SenseDistribution};
use crate::embeddings::EmbeddingStore;
use crate::error::{Error, Result};
use crate::relatedness::{RelatednessMatrix, RelatednessSource};
use crate::seed;

pub use cv::{cross_validate, pairwise_sense_f1, stratified_folds, CvConfig, CvReport};
pub use logistic::{
    argmax, softmax, train, train_problem, train_with_trace, LambdaPolicy, LogisticModel, Params,
    Problem, TrainConfig, TrainOutcome,
};

pub const DEFAULT_MIN_TOKENS: usize = 10;

/// One token's feature vector and gold sense.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Example {
    pub vector: Vec<f64>,
    pub sense: String,
}

/// Training examples for one lemma, in token order.
pub fn lemma_examples(store: &EmbeddingStore, lemma: &LemmaKey) -> Vec<Example> {
    store
        .lemma_tokens(lemma)
        .into_iter()
        .map(|(_, sense, vector)| Example { vector, sense })
        .collect()
}

/// Drops every example whose sense has fewer than `min_tokens` examples.
pub fn filter_senses(examples: &[Example], min_tokens: usize) -> Vec<Example> {
    let mut counts: BTreeMap<&str, usize> = BTreeMap::new();
    for e in examples {
        *counts.entry(e.sense.as_str()).or_default() += 1;
    }
    examples
        .iter()
        .filter(|e| counts[e.sense.as_str()] >= min_tokens)
        .cloned()
        .collect()
}

pub(crate) fn weighted_f1_indices(truth: &[usize], pred: &[usize], k: usize) -> f64 {
    let mut tp = vec![0usize; k];
    let mut fp = vec![0usize; k];
    let mut fneg = vec![0usize; k];
    for (&t, &p) in truth.iter().zip(pred) {
        if t == p {
            tp[t] += 1;
        } else {
            fp[p] += 1;
            fneg[t] += 1;
        }
    }
    let n = truth.len() as f64;
    (0..k)
        .map(|c| {
            let support = (tp[c] + fneg[c]) as f64;
            let denom = 2 * tp[c] + fp[c] + fneg[c];
            let f1 = if denom == 0 {
                0.0
            } else {
                2.0 * tp[c] as f64 / denom as f64
            };
            support / n * f1
        })
        .sum()
}

/// Support-weighted mean of per-class F1; classes only ever predicted get
/// weight zero and an undefined F1 counts as 0.
pub fn weighted_f1<S: AsRef<str>>(truth: &[S], pred: &[S]) -> Result<f64> {
    if truth.len() != pred.len() {
        return Err(Error::Shape {
            expected: truth.len(),
            actual: pred.len(),
        });
    }
    if truth.is_empty() {
        return Err(Error::Domain("weighted F1 of no predictions".into()));
    }
    let mut labels: Vec<&str> = truth.iter().chain(pred).map(|s| s.as_ref()).collect();
    labels.sort_unstable();
    labels.dedup();
    let idx = |s: &S| labels.binary_search(&s.as_ref()).expect("label present");
    let t: Vec<usize> = truth.iter().map(idx).collect();
    let p: Vec<usize> = pred.iter().map(idx).collect();
    Ok(weighted_f1_indices(&t, &p, labels.len()))
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum BaselineMode {
    Majority,
    Random,
}

/// Weighted F1 of the two model-free baselines. `Majority` always predicts
/// the modal sense (earliest key on ties): its F1 is `2p / (1 + p)` on that
/// sense and 0 elsewhere, weighted by `p`. `Random` is the uniform-guessing
/// expectation evaluated on expected confusion counts, where sense `j` with
/// share `p_j` among `K` senses scores `2 p_j (1/K) / (p_j + 1/K)`.
pub fn baseline_f1(dist: &SenseDistribution, mode: BaselineMode) -> Result<f64> {
    let total = dist.total() as f64;
    if total == 0.0 {
        return Err(Error::Domain(format!(
            "{}: empty sense distribution",
            dist.lemma()
        )));
    }
    let shares: Vec<f64> = dist.counts().values().map(|&c| c as f64 / total).collect();
    Ok(match mode {
        BaselineMode::Majority => {
            let p = shares[argmax(&shares)];
            p * 2.0 * p / (1.0 + p)
        }
        BaselineMode::Random => {
            let q = 1.0 / shares.len() as f64;
            shares.iter().map(|&p| p * 2.0 * p * q / (p + q)).sum()
        }
    })
}

/// Mean weighted F1 of `draws` uniform random labelings of the lemma's tokens.
pub fn random_baseline_monte_carlo(
    dist: &SenseDistribution,
    draws: usize,
    seed: u64,
) -> Result<f64> {
    if draws == 0 {
        return Err(Error::Parameter(
            "Monte Carlo baseline needs at least one draw".into(),
        ));
    }
    let k = dist.n_senses();
    let truth: Vec<usize> = dist
        .counts()
        .values()
        .enumerate()
        .flat_map(|(i, &c)| std::iter::repeat_n(i, c as usize))
        .collect();
    let total: f64 = (0..draws as u64)
        .into_par_iter()
        .map(|d| {
            let mut rng = seed::rng(seed::derive_indexed(seed, "random-baseline", d));
            let pred: Vec<usize> = truth.iter().map(|_| rng.random_range(0..k)).collect();
            weighted_f1_indices(&truth, &pred, k)
        })
        .collect::<Vec<_>>()
        .iter()
        .sum();
    Ok(total / draws as f64)
}

/// Row-normalised confusion probabilities: `probs[i][j]` is the chance a
/// token of sense `i` was predicted as sense `j`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConfusionMatrix {
    pub lemma: LemmaKey,
    pub sense_keys: Vec<String>,
    pub probs: Vec<Vec<f64>>,
}

impl ConfusionMatrix {
    pub fn to_relatedness(&self) -> Result<RelatednessMatrix> {
        RelatednessMatrix::new(
            self.lemma.clone(),
            RelatednessSource::Confusion,
            self.sense_keys.clone(),
            self.probs.iter().flatten().copied().collect(),
        )
    }
}

pub fn confusion_from_counts(
    lemma: &LemmaKey,
    sense_keys: &[String],
    counts: &[Vec<u64>],
) -> Result<ConfusionMatrix> {
    let probs = counts
        .iter()
        .zip(sense_keys)
        .map(|(row, sense)| {
            let total: u64 = row.iter().sum();
            if total == 0 {
                return Err(Error::DegenerateClass(format!(
                    "{lemma}: no held-out tokens of {sense}"
                )));
            }
            Ok(row.iter().map(|&c| c as f64 / total as f64).collect())
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    Ok(ConfusionMatrix {
        lemma: lemma.clone(),
        sense_keys: sense_keys.to_vec(),
        probs,
    })
}

pub fn confusion_relatedness(report: &CvReport) -> Result<ConfusionMatrix> {
    confusion_from_counts(&report.lemma, &report.sense_keys, &report.summed_confusion)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Pos;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn lemma() -> LemmaKey {
        LemmaKey::new("x", Pos::Noun).unwrap()
    }

    fn dist(counts: &[(&str, u64)]) -> SenseDistribution {
        SenseDistribution::new(
            lemma(),
            counts.iter().map(|(k, v)| (k.to_string(), *v)).collect(),
        )
        .unwrap()
    }

    #[test]
    fn f1_examples() {
        let truth: Vec<&str> = [vec!["a"; 30], vec!["b"; 10]].concat();
        let pred = vec!["a"; 40];
        // F1(a) = 2*30/(60+10) = 6/7, F1(b) = 0, weights 0.75/0.25
        let expected = 0.75 * 6.0 / 7.0;
        assert!((weighted_f1(&truth, &pred).unwrap() - expected).abs() < 1e-15);
        assert!((expected - 0.6429).abs() < 5e-5);
        assert_eq!(weighted_f1(&truth, &truth).unwrap(), 1.0);
        assert!(weighted_f1::<&str>(&[], &[]).is_err());
    }

    #[test]
    fn binary_f1_against_confusion_table() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        for _ in 0..100 {
            let n = rng.random_range(1..40);
            let truth: Vec<&str> = (0..n)
                .map(|_| if rng.random::<bool>() { "p" } else { "q" })
                .collect();
            let pred: Vec<&str> = (0..n)
                .map(|_| if rng.random::<bool>() { "p" } else { "q" })
                .collect();
            let count = |t: &str, p: &str| {
                truth
                    .iter()
                    .zip(&pred)
                    .filter(|(a, b)| **a == t && **b == p)
                    .count() as f64
            };
            let (pp, pq, qp, qq) = (
                count("p", "p"),
                count("p", "q"),
                count("q", "p"),
                count("q", "q"),
            );
            let f = |tp: f64, fp: f64, fnn: f64| {
                if tp == 0.0 {
                    0.0
                } else {
                    2.0 * tp / (2.0 * tp + fp + fnn)
                }
            };
            let expected =
                (pp + pq) / n as f64 * f(pp, qp, pq) + (qp + qq) / n as f64 * f(qq, pq, qp);
            assert_eq!(weighted_f1(&truth, &pred).unwrap(), expected);
        }
    }

    #[test]
    fn filter_examples() {
        fn mk(s: &'static str, n: usize) -> impl Iterator<Item = Example> {
            (0..n).map(move |i| Example {
                vector: vec![i as f64],
                sense: s.to_string(),
            })
        }
        let data: Vec<Example> = mk("a", 12).chain(mk("b", 9)).collect();
        let kept = filter_senses(&data, 10);
        assert_eq!(kept.len(), 12);
        assert!(kept.iter().all(|e| e.sense == "a"));
        let big: Vec<Example> = mk("a", 12).chain(mk("b", 10)).collect();
        assert_eq!(filter_senses(&big, 10), big);
    }

    #[test]
    fn baselines() {
        let balanced = dist(&[("a", 50), ("b", 50)]);
        assert!(
            (baseline_f1(&balanced, BaselineMode::Majority).unwrap() - 1.0 / 3.0).abs() < 1e-15
        );
        assert!((baseline_f1(&balanced, BaselineMode::Random).unwrap() - 0.5).abs() < 1e-15);
        let skewed = dist(&[("a", 30), ("b", 10)]);
        assert!(
            (baseline_f1(&skewed, BaselineMode::Majority).unwrap() - 0.75 * 6.0 / 7.0).abs()
                < 1e-15
        );
        let nearly_all = dist(&[("a", 1_000_000), ("b", 1)]);
        assert!((baseline_f1(&nearly_all, BaselineMode::Majority).unwrap() - 1.0).abs() < 1e-5);
    }

    #[test]
    fn random_baseline_monte_carlo_agrees_with_expectation() {
        let d = dist(&[("a", 300), ("b", 150), ("c", 50)]);
        let analytic = baseline_f1(&d, BaselineMode::Random).unwrap();
        let mc = random_baseline_monte_carlo(&d, 2000, 8).unwrap();
        assert!((analytic - mc).abs() < 0.01, "{analytic} vs {mc}");
        assert_eq!(mc, random_baseline_monte_carlo(&d, 2000, 8).unwrap());
    }

    #[test]
    fn confusion_normalisation() {
        let keys = vec!["a".to_string(), "b".to_string()];
        let m = confusion_from_counts(&lemma(), &keys, &[vec![8, 2], vec![1, 9]]).unwrap();
        assert_eq!(m.probs, vec![vec![0.8, 0.2], vec![0.1, 0.9]]);
        let id = confusion_from_counts(&lemma(), &keys, &[vec![5, 0], vec![0, 7]]).unwrap();
        assert_eq!(id.probs, vec![vec![1.0, 0.0], vec![0.0, 1.0]]);
        assert!(matches!(
            confusion_from_counts(&lemma(), &keys, &[vec![5, 0], vec![0, 0]]),
            Err(Error::DegenerateClass(_))
        ));
        let r = m.to_relatedness().unwrap();
        assert_eq!(r.get(1, 0), 0.1);
        assert!(!r.is_numerically_symmetric());
    }

    #[test]
    fn separable_data_cross_validates_perfectly() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let data: Vec<Example> = (0..60)
            .map(|i| {
                let sense = ["a", "b", "c"][i % 3];
                let centre = [(5.0, 0.0), (-5.0, 0.0), (0.0, 5.0)][i % 3];
                Example {
                    vector: vec![
                        centre.0 + rng.random_range(-0.5..0.5),
                        centre.1 + rng.random_range(-0.5..0.5),
                    ],
                    sense: sense.into(),
                }
            })
            .collect();
        let report = cross_validate(&lemma(), &data, &CvConfig::default()).unwrap();
        assert_eq!(report.mean_f1, 1.0);
        assert_eq!(report.fold_f1.len(), 5);
        assert_eq!(
            report.summed_confusion,
            vec![vec![20, 0, 0], vec![0, 20, 0], vec![0, 0, 20]]
        );
        let again = cross_validate(&lemma(), &data, &CvConfig::default()).unwrap();
        assert_eq!(report, again);
        let z = cross_validate(
            &lemma(),
            &data,
            &CvConfig {
                standardize: true,
                ..CvConfig::default()
            },
        )
        .unwrap();
        assert_eq!(z.mean_f1, 1.0);
    }
}
