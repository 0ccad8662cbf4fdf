use std::str::FromStr;

use serde::{Deserialize, Serialize};

use super::Example;
use crate::corpus::LemmaKey;
use crate::error::{Error, Result};

/// How the L1 strength is chosen for a training set of `n` examples.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LambdaPolicy {
    /// `1 / n`.
    #[default]
    Auto,
    Fixed(f64),
}

impl LambdaPolicy {
    pub fn resolve(self, n: usize) -> f64 {
        match self {
            LambdaPolicy::Auto => 1.0 / n.max(1) as f64,
            LambdaPolicy::Fixed(l) => l,
        }
    }
}

impl FromStr for LambdaPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        if s == "auto" {
            return Ok(LambdaPolicy::Auto);
        }
        let v: f64 = s.parse().map_err(|_| {
            Error::Parameter(format!("lambda must be 'auto' or a number, got {s:?}"))
        })?;
        if !(v.is_finite() && v >= 0.0) {
            return Err(Error::Parameter(format!(
                "lambda must be non-negative, got {v}"
            )));
        }
        Ok(LambdaPolicy::Fixed(v))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lambda: LambdaPolicy,
    /// Stop once the relative change of the penalised objective drops below this.
    pub tol: f64,
    pub max_iter: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            lambda: LambdaPolicy::Auto,
            tol: 1e-6,
            max_iter: 5000,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LogisticModel {
    pub lemma: LemmaKey,
    pub sense_keys: Vec<String>,
    pub dim: usize,
    /// `K x d`, row-major.
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
    pub l1_strength: f64,
}

impl LogisticModel {
    pub fn n_classes(&self) -> usize {
        self.sense_keys.len()
    }

    pub fn zero_weights(&self) -> usize {
        self.weights.iter().filter(|w| **w == 0.0).count()
    }

    fn scores(&self, x: &[f64]) -> Vec<f64> {
        (0..self.n_classes())
            .map(|k| {
                let row = &self.weights[k * self.dim..(k + 1) * self.dim];
                self.bias[k] + row.iter().zip(x).map(|(w, v)| w * v).sum::<f64>()
            })
            .collect()
    }

    /// Most probable sense and the class probabilities. Ties go to the
    /// earliest sense key.
    pub fn predict(&self, x: &[f64]) -> Result<(String, Vec<f64>)> {
        if x.len() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                actual: x.len(),
            });
        }
        let probs = softmax(&self.scores(x));
        let best = argmax(&probs);
        Ok((self.sense_keys[best].clone(), probs))
    }

    pub fn predict_index(&self, x: &[f64]) -> Result<usize> {
        if x.len() != self.dim {
            return Err(Error::Shape {
                expected: self.dim,
                actual: x.len(),
            });
        }
        Ok(argmax(&self.scores(x)))
    }
}

/// First index of the maximum.
pub fn argmax(v: &[f64]) -> usize {
    let mut best = 0;
    for (i, x) in v.iter().enumerate().skip(1) {
        if *x > v[best] {
            best = i;
        }
    }
    best
}

pub fn softmax(scores: &[f64]) -> Vec<f64> {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = scores.iter().map(|s| (s - m).exp()).collect();
    let z: f64 = exps.iter().sum();
    exps.iter().map(|e| e / z).collect()
}

fn log_sum_exp(scores: &[f64]) -> f64 {
    let m = scores.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    m + scores.iter().map(|s| (s - m).exp()).sum::<f64>().ln()
}

/// Design matrix and integer labels for one training set.
#[derive(Debug, Clone)]
pub struct Problem {
    pub sense_keys: Vec<String>,
    pub n: usize,
    pub d: usize,
    x: Vec<f64>,
    y: Vec<usize>,
}

/// Weights (`K x d`, row-major) and biases.
#[derive(Debug, Clone, PartialEq)]
pub struct Params {
    pub w: Vec<f64>,
    pub b: Vec<f64>,
}

impl Problem {
    /// Classes are the sorted distinct senses of `examples`.
    pub fn new(examples: &[Example]) -> Result<Self> {
        let mut sense_keys: Vec<String> = examples.iter().map(|e| e.sense.clone()).collect();
        sense_keys.sort();
        sense_keys.dedup();
        Self::with_classes(examples, sense_keys)
    }

    pub fn with_classes(examples: &[Example], sense_keys: Vec<String>) -> Result<Self> {
        if sense_keys.len() < 2 {
            return Err(Error::DegenerateTraining(format!(
                "need at least two senses, got {}",
                sense_keys.len()
            )));
        }
        let d = examples.first().map(|e| e.vector.len()).unwrap_or(0);
        if d == 0 {
            return Err(Error::DegenerateTraining("no training examples".into()));
        }
        let mut x = Vec::with_capacity(examples.len() * d);
        let mut y = Vec::with_capacity(examples.len());
        for e in examples {
            if e.vector.len() != d {
                return Err(Error::Shape {
                    expected: d,
                    actual: e.vector.len(),
                });
            }
            if e.vector.iter().any(|v| !v.is_finite()) {
                return Err(Error::Data(format!(
                    "non-finite feature for sense {}",
                    e.sense
                )));
            }
            let k = sense_keys
                .binary_search(&e.sense)
                .map_err(|_| Error::Data(format!("unexpected sense {}", e.sense)))?;
            x.extend_from_slice(&e.vector);
            y.push(k);
        }
        Ok(Problem {
            sense_keys,
            n: examples.len(),
            d,
            x,
            y,
        })
    }

    pub fn k(&self) -> usize {
        self.sense_keys.len()
    }

    pub fn zeros(&self) -> Params {
        Params {
            w: vec![0.0; self.k() * self.d],
            b: vec![0.0; self.k()],
        }
    }

    fn row(&self, i: usize) -> &[f64] {
        &self.x[i * self.d..(i + 1) * self.d]
    }

    fn scores(&self, p: &Params, i: usize) -> Vec<f64> {
        let x = self.row(i);
        (0..self.k())
            .map(|k| {
                p.b[k]
                    + p.w[k * self.d..(k + 1) * self.d]
                        .iter()
                        .zip(x)
                        .map(|(w, v)| w * v)
                        .sum::<f64>()
            })
            .collect()
    }

    /// Mean softmax cross-entropy.
    pub fn loss(&self, p: &Params) -> f64 {
        let total: f64 = (0..self.n)
            .map(|i| {
                let s = self.scores(p, i);
                log_sum_exp(&s) - s[self.y[i]]
            })
            .sum();
        total / self.n as f64
    }

    /// Mean cross-entropy and its gradient.
    pub fn loss_grad(&self, p: &Params) -> (f64, Params) {
        let (k, d) = (self.k(), self.d);
        let mut g = Params {
            w: vec![0.0; k * d],
            b: vec![0.0; k],
        };
        let mut total = 0.0;
        for i in 0..self.n {
            let s = self.scores(p, i);
            total += log_sum_exp(&s) - s[self.y[i]];
            let probs = softmax(&s);
            let x = self.row(i);
            for (c, prob) in probs.iter().enumerate() {
                let r = prob - if c == self.y[i] { 1.0 } else { 0.0 };
                g.b[c] += r;
                for (gw, v) in g.w[c * d..(c + 1) * d].iter_mut().zip(x) {
                    *gw += r * v;
                }
            }
        }
        let inv = 1.0 / self.n as f64;
        g.w.iter_mut().chain(g.b.iter_mut()).for_each(|v| *v *= inv);
        (total * inv, g)
    }

    /// Loss plus `lambda` times the L1 norm of the weights (bias excluded).
    pub fn objective(&self, p: &Params, lambda: f64) -> f64 {
        self.loss(p) + lambda * l1(&p.w)
    }

    /// Safe initial step from the trace bound on the loss curvature.
    fn initial_step(&self) -> f64 {
        let mean_sq = self.x.iter().map(|v| v * v).sum::<f64>() / self.n as f64;
        1.0 / (0.5 * (mean_sq + 1.0))
    }
}

fn l1(w: &[f64]) -> f64 {
    w.iter().map(|v| v.abs()).sum()
}

fn soft_threshold(v: f64, t: f64) -> f64 {
    if v > t {
        v - t
    } else if v < -t {
        v + t
    } else {
        0.0
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub model: LogisticModel,
    /// Penalised objective at the start and after every accepted step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

pub fn train(
    lemma: &LemmaKey,
    examples: &[Example],
    config: &TrainConfig,
) -> Result<LogisticModel> {
    Ok(train_with_trace(lemma, examples, config)?.model)
}

pub fn train_with_trace(
    lemma: &LemmaKey,
    examples: &[Example],
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let problem = Problem::new(examples)?;
    train_problem(lemma, &problem, config)
}

/// Proximal gradient descent with backtracking from zero initialisation.
/// A step is accepted when it satisfies the quadratic upper-bound condition
/// and does not raise the penalised objective.
pub fn train_problem(
    lemma: &LemmaKey,
    problem: &Problem,
    config: &TrainConfig,
) -> Result<TrainOutcome> {
    let lambda = config.lambda.resolve(problem.n);
    if !(lambda.is_finite() && lambda >= 0.0) {
        return Err(Error::Parameter(format!("invalid L1 strength {lambda}")));
    }
    let mut p = problem.zeros();
    let mut step = problem.initial_step();
    let (mut f, mut g) = problem.loss_grad(&p);
    let mut obj = f + lambda * l1(&p.w);
    let mut trace = vec![obj];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < config.max_iter {
        iterations += 1;
        let mut accepted = None;
        let mut t = step * 2.0;
        for _ in 0..60 {
            let cand = Params {
                w: p.w
                    .iter()
                    .zip(&g.w)
                    .map(|(w, gw)| soft_threshold(w - t * gw, t * lambda))
                    .collect(),
                b: p.b.iter().zip(&g.b).map(|(b, gb)| b - t * gb).collect(),
            };
            let f_cand = problem.loss(&cand);
            let mut lin = 0.0;
            let mut sq = 0.0;
            let moves = cand
                .w
                .iter()
                .zip(&p.w)
                .zip(&g.w)
                .chain(cand.b.iter().zip(&p.b).zip(&g.b));
            for ((c, o), gr) in moves {
                let diff = c - o;
                lin += gr * diff;
                sq += diff * diff;
            }
            let obj_cand = f_cand + lambda * l1(&cand.w);
            if f_cand <= f + lin + sq / (2.0 * t) + 1e-15 * f.abs() && obj_cand <= obj {
                accepted = Some((cand, obj_cand));
                break;
            }
            t *= 0.5;
        }
        let Some((cand, obj_new)) = accepted else {
            // no descent step exists at machine precision
            converged = true;
            break;
        };
        step = t;
        let rel = (obj - obj_new).abs() / obj.abs().max(1e-12);
        p = cand;
        obj = obj_new;
        trace.push(obj);
        if rel < config.tol {
            converged = true;
            break;
        }
        (f, g) = problem.loss_grad(&p);
    }

    if p.w.iter().chain(&p.b).any(|v| !v.is_finite()) {
        return Err(Error::DegenerateTraining(format!(
            "{lemma}: non-finite parameters"
        )));
    }
    Ok(TrainOutcome {
        model: LogisticModel {
            lemma: lemma.clone(),
            sense_keys: problem.sense_keys.clone(),
            dim: problem.d,
            weights: p.w,
            bias: p.b,
            l1_strength: lambda,
        },
        objective_trace: trace,
        iterations,
        converged,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::corpus::Pos;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn lemma() -> LemmaKey {
        LemmaKey::new("x", Pos::Noun).unwrap()
    }

    fn ex(v: &[f64], s: &str) -> Example {
        Example {
            vector: v.to_vec(),
            sense: s.into(),
        }
    }

    #[test]
    fn zero_model_predicts_first_sense_uniformly() {
        let m = LogisticModel {
            lemma: lemma(),
            sense_keys: vec!["a".into(), "b".into(), "c".into()],
            dim: 2,
            weights: vec![0.0; 6],
            bias: vec![0.0; 3],
            l1_strength: 0.1,
        };
        let (label, probs) = m.predict(&[3.0, -1.0]).unwrap();
        assert_eq!(label, "a");
        for p in probs {
            assert!((p - 1.0 / 3.0).abs() < 1e-15);
        }
        assert!(matches!(m.predict(&[1.0]), Err(Error::Shape { .. })));
    }

    #[test]
    fn strong_weight_wins() {
        let m = LogisticModel {
            lemma: lemma(),
            sense_keys: vec!["a".into(), "b".into()],
            dim: 1,
            weights: vec![0.0, 10.0],
            bias: vec![0.0, 0.0],
            l1_strength: 0.1,
        };
        let (label, probs) = m.predict(&[1.0]).unwrap();
        assert_eq!(label, "b");
        assert!(probs[1] > 0.99);
    }

    #[test]
    fn softmax_matches_direct_evaluation() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..50 {
            let s: Vec<f64> = (0..4).map(|_| rng.random_range(-5.0..5.0)).collect();
            let z: f64 = s.iter().map(|v| v.exp()).sum();
            for (p, v) in softmax(&s).iter().zip(&s) {
                assert!((p - v.exp() / z).abs() < 1e-12);
            }
        }
        let shifted: Vec<f64> = [1.0, 2.0, 3.0].iter().map(|v| v + 1000.0).collect();
        assert!((softmax(&shifted)[2] - softmax(&[1.0, 2.0, 3.0])[2]).abs() < 1e-12);
    }

    #[test]
    fn errors() {
        assert!(matches!(
            train(
                &lemma(),
                &[ex(&[1.0], "a"), ex(&[2.0], "a")],
                &TrainConfig::default()
            ),
            Err(Error::DegenerateTraining(_))
        ));
        assert!(matches!(
            train(
                &lemma(),
                &[ex(&[1.0], "a"), ex(&[f64::NAN], "b")],
                &TrainConfig::default()
            ),
            Err(Error::Data(_))
        ));
        assert!("abc".parse::<LambdaPolicy>().is_err());
        assert_eq!(
            "0.5".parse::<LambdaPolicy>().unwrap(),
            LambdaPolicy::Fixed(0.5)
        );
    }

    #[test]
    fn huge_lambda_zeroes_weights_and_predicts_majority() {
        let data = vec![
            ex(&[1.0, 0.0], "a"),
            ex(&[1.1, 0.2], "a"),
            ex(&[0.9, 0.1], "a"),
            ex(&[-1.0, 0.0], "b"),
        ];
        let cfg = TrainConfig {
            lambda: LambdaPolicy::Fixed(1e3),
            ..TrainConfig::default()
        };
        let m = train(&lemma(), &data, &cfg).unwrap();
        assert!(m.weights.iter().all(|w| *w == 0.0));
        assert_eq!(m.predict(&[-5.0, 0.0]).unwrap().0, "a");
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let data: Vec<Example> = (0..30)
            .map(|i| {
                ex(
                    &[rng.random_range(-2.0..2.0)],
                    if i % 2 == 0 { "a" } else { "b" },
                )
            })
            .collect();
        let prob = Problem::new(&data).unwrap();
        for _ in 0..10 {
            let p = Params {
                w: (0..2).map(|_| rng.random_range(-1.0..1.0)).collect(),
                b: (0..2).map(|_| rng.random_range(-1.0..1.0)).collect(),
            };
            let (_, g) = prob.loss_grad(&p);
            let h = 1e-5;
            for idx in 0..4 {
                let bump = |delta: f64| {
                    let mut q = p.clone();
                    if idx < 2 {
                        q.w[idx] += delta;
                    } else {
                        q.b[idx - 2] += delta;
                    }
                    prob.loss(&q)
                };
                let fd = (bump(h) - bump(-h)) / (2.0 * h);
                let an = if idx < 2 { g.w[idx] } else { g.b[idx - 2] };
                assert!((fd - an).abs() <= 1e-5 * an.abs().max(1e-3), "{fd} vs {an}");
            }
        }
    }
}
