use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::seed;

const EXAGGERATION: f64 = 12.0;
const EXAGGERATION_ITERS: usize = 250;
const LEARNING_RATE: f64 = 200.0;
const ENTROPY_TOL: f64 = 1e-5;
const MIN_GAIN: f64 = 0.01;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TsneParams {
    pub perplexity: f64,
    pub iterations: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectedPoint {
    pub label: String,
    pub x: f64,
    pub y: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Projection2D {
    pub points: Vec<ProjectedPoint>,
    pub params: TsneParams,
    /// KL divergence of the unexaggerated affinities after each iteration.
    pub kl_trace: Vec<f64>,
}

/// `min(30, floor((n - 1) / 3))`, nudged down by one half when it would sit
/// exactly on the `(n - 1) / 3` bound.
pub fn default_perplexity(n: usize) -> f64 {
    let bound = (n as f64 - 1.0) / 3.0;
    let p = bound.floor().min(30.0);
    if p >= bound {
        p - 0.5
    } else {
        p
    }
}

fn squared_distances(vectors: &[Vec<f64>]) -> Vec<f64> {
    let n = vectors.len();
    let mut d = vec![0.0; n * n];
    for i in 0..n {
        for j in (i + 1)..n {
            let v: f64 = vectors[i]
                .iter()
                .zip(&vectors[j])
                .map(|(a, b)| (a - b).powi(2))
                .sum();
            d[i * n + j] = v;
            d[j * n + i] = v;
        }
    }
    d
}

/// Row-conditional affinities with per-point precision binary-searched so the
/// row entropy (nats) matches `ln(perplexity)`, then symmetrised.
pub fn joint_probabilities(vectors: &[Vec<f64>], perplexity: f64) -> Vec<f64> {
    let n = vectors.len();
    let d = squared_distances(vectors);
    let target = perplexity.ln();
    let mut p = vec![0.0; n * n];
    for i in 0..n {
        let row = &d[i * n..(i + 1) * n];
        let (mut beta, mut lo, mut hi) = (1.0, 0.0, f64::INFINITY);
        let mut cond = vec![0.0; n];
        for _ in 0..200 {
            // subtract the smallest off-diagonal distance for stability
            let dmin = (0..n)
                .filter(|&j| j != i)
                .map(|j| row[j])
                .fold(f64::INFINITY, f64::min);
            let mut sum = 0.0;
            for j in 0..n {
                cond[j] = if j == i {
                    0.0
                } else {
                    (-(row[j] - dmin) * beta).exp()
                };
                sum += cond[j];
            }
            let mut weighted = 0.0;
            for j in 0..n {
                cond[j] /= sum;
                weighted += cond[j] * (row[j] - dmin);
            }
            let entropy = sum.ln() + beta * weighted;
            let diff = entropy - target;
            if diff.abs() < ENTROPY_TOL {
                break;
            }
            if diff > 0.0 {
                lo = beta;
                beta = if hi.is_finite() {
                    (beta + hi) / 2.0
                } else {
                    beta * 2.0
                };
            } else {
                hi = beta;
                beta = (beta + lo) / 2.0;
            }
        }
        p[i * n..(i + 1) * n].copy_from_slice(&cond);
    }
    let mut joint = vec![0.0; n * n];
    for i in 0..n {
        for j in 0..n {
            if i != j {
                joint[i * n + j] = ((p[i * n + j] + p[j * n + i]) / (2.0 * n as f64)).max(1e-12);
            }
        }
    }
    joint
}

/// Scores on the top two principal components, via power iteration on the
/// centred Gram matrix. `None` when the data has no spread.
fn pca_2d(vectors: &[Vec<f64>], seed: u64) -> Option<Vec<[f64; 2]>> {
    let n = vectors.len();
    let d = vectors[0].len();
    let mut mean = vec![0.0; d];
    for v in vectors {
        mean.iter_mut().zip(v).for_each(|(m, x)| *m += x / n as f64);
    }
    let centred: Vec<Vec<f64>> = vectors
        .iter()
        .map(|v| v.iter().zip(&mean).map(|(x, m)| x - m).collect())
        .collect();
    let mut gram = vec![0.0; n * n];
    for i in 0..n {
        for j in i..n {
            let g: f64 = centred[i].iter().zip(&centred[j]).map(|(a, b)| a * b).sum();
            gram[i * n + j] = g;
            gram[j * n + i] = g;
        }
    }
    let trace: f64 = (0..n).map(|i| gram[i * n + i]).sum();
    if trace <= 0.0 {
        return None;
    }
    let mut rng = seed::rng(seed::derive_seed(seed, "tsne/pca"));
    let normal = Normal::new(0.0, 1.0).expect("unit normal");
    let mut components: Vec<(Vec<f64>, f64)> = Vec::new();
    for _ in 0..2 {
        let mut u: Vec<f64> = (0..n).map(|_| normal.sample(&mut rng)).collect();
        let mut lambda = 0.0;
        for _ in 0..1000 {
            let mut next: Vec<f64> = (0..n)
                .map(|i| (0..n).map(|j| gram[i * n + j] * u[j]).sum())
                .collect();
            for (c, _) in &components {
                let dot: f64 = c.iter().zip(&next).map(|(a, b)| a * b).sum();
                next.iter_mut().zip(c).for_each(|(x, ci)| *x -= dot * ci);
            }
            let norm = next.iter().map(|x| x * x).sum::<f64>().sqrt();
            if norm == 0.0 {
                break;
            }
            next.iter_mut().for_each(|x| *x /= norm);
            let delta: f64 = next.iter().zip(&u).map(|(a, b)| (a - b).abs()).sum();
            u = next;
            let converged = (norm - lambda).abs() <= 1e-12 * norm && delta < 1e-10;
            lambda = norm;
            if converged {
                break;
            }
        }
        // sign convention: largest-magnitude entry positive
        let k = (0..n).fold(0, |b, i| if u[i].abs() > u[b].abs() { i } else { b });
        if u[k] < 0.0 {
            u.iter_mut().for_each(|x| *x = -*x);
        }
        components.push((u, lambda));
    }
    Some(
        (0..n)
            .map(|i| {
                let s = |c: usize| components[c].0[i] * components[c].1.sqrt();
                [s(0), s(1)]
            })
            .collect(),
    )
}

fn kl_divergence(p: &[f64], q_num: &[f64], q_sum: f64) -> f64 {
    p.iter()
        .zip(q_num)
        .filter(|(pi, _)| **pi > 0.0)
        .map(|(pi, num)| pi * (pi / (num / q_sum).max(1e-12)).ln())
        .sum()
}

/// Exact t-SNE to two dimensions. Initialised from the leading principal
/// components rescaled so the first has standard deviation `1e-4`; seeded
/// Gaussian initialisation is used when the inputs have no spread.
pub fn tsne(vectors: &[Vec<f64>], labels: &[String], params: &TsneParams) -> Result<Projection2D> {
    let n = vectors.len();
    if n < 4 {
        return Err(Error::Size(format!(
            "t-SNE needs at least 4 points, got {n}"
        )));
    }
    if labels.len() != n {
        return Err(Error::Shape {
            expected: n,
            actual: labels.len(),
        });
    }
    let bound = (n as f64 - 1.0) / 3.0;
    if !(params.perplexity >= 1.0 && params.perplexity < bound) {
        return Err(Error::Parameter(format!(
            "perplexity {} must lie in [1, {bound:.3}) for {n} points",
            params.perplexity
        )));
    }
    let d = vectors[0].len();
    if vectors.iter().any(|v| v.len() != d) {
        return Err(Error::Shape {
            expected: d,
            actual: vectors.iter().map(Vec::len).find(|&l| l != d).unwrap_or(d),
        });
    }
    if vectors.iter().flatten().any(|x| !x.is_finite()) {
        return Err(Error::Data("non-finite value in t-SNE input".into()));
    }

    let p = joint_probabilities(vectors, params.perplexity);
    let mut y: Vec<[f64; 2]> = match pca_2d(vectors, params.seed) {
        Some(pcs) => {
            let m0 = pcs.iter().map(|v| v[0]).sum::<f64>() / n as f64;
            let sd = (pcs.iter().map(|v| (v[0] - m0).powi(2)).sum::<f64>() / n as f64).sqrt();
            let scale = if sd > 0.0 { 1e-4 / sd } else { 1.0 };
            pcs.iter().map(|v| [v[0] * scale, v[1] * scale]).collect()
        }
        None => {
            let mut rng = seed::rng(seed::derive_seed(params.seed, "tsne/init"));
            let normal = Normal::new(0.0, 1e-4).expect("valid normal");
            (0..n)
                .map(|_| [normal.sample(&mut rng), normal.sample(&mut rng)])
                .collect()
        }
    };

    let mut update = vec![[0.0f64; 2]; n];
    let mut gains = vec![[1.0f64; 2]; n];
    let mut num = vec![0.0; n * n];
    let mut kl_trace = Vec::with_capacity(params.iterations);
    for iter in 0..params.iterations {
        let exaggeration = if iter < EXAGGERATION_ITERS {
            EXAGGERATION
        } else {
            1.0
        };
        let momentum = if iter < EXAGGERATION_ITERS { 0.5 } else { 0.8 };
        let mut q_sum = 0.0;
        for i in 0..n {
            for j in (i + 1)..n {
                let dx = y[i][0] - y[j][0];
                let dy = y[i][1] - y[j][1];
                let v = 1.0 / (1.0 + dx * dx + dy * dy);
                num[i * n + j] = v;
                num[j * n + i] = v;
                q_sum += 2.0 * v;
            }
        }
        for i in 0..n {
            let mut grad = [0.0; 2];
            for j in 0..n {
                if i == j {
                    continue;
                }
                let coeff =
                    4.0 * (exaggeration * p[i * n + j] - num[i * n + j] / q_sum) * num[i * n + j];
                grad[0] += coeff * (y[i][0] - y[j][0]);
                grad[1] += coeff * (y[i][1] - y[j][1]);
            }
            for c in 0..2 {
                let same_sign = (grad[c] > 0.0) == (update[i][c] > 0.0);
                gains[i][c] = if same_sign {
                    gains[i][c] * 0.8
                } else {
                    gains[i][c] + 0.2
                }
                .max(MIN_GAIN);
                update[i][c] = momentum * update[i][c] - LEARNING_RATE * gains[i][c] * grad[c];
            }
        }
        for i in 0..n {
            y[i][0] += update[i][0];
            y[i][1] += update[i][1];
        }
        // recentre
        let cx = y.iter().map(|v| v[0]).sum::<f64>() / n as f64;
        let cy = y.iter().map(|v| v[1]).sum::<f64>() / n as f64;
        y.iter_mut().for_each(|v| {
            v[0] -= cx;
            v[1] -= cy;
        });
        kl_trace.push(kl_after(&p, &y, &mut num));
    }
    if y.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::DegenerateGeometry("t-SNE diverged".into()));
    }
    Ok(Projection2D {
        points: y
            .iter()
            .zip(labels)
            .map(|(v, l)| ProjectedPoint {
                label: l.clone(),
                x: v[0],
                y: v[1],
            })
            .collect(),
        params: *params,
        kl_trace,
    })
}

fn kl_after(p: &[f64], y: &[[f64; 2]], num: &mut [f64]) -> f64 {
    let n = y.len();
    let mut q_sum = 0.0;
    for i in 0..n {
        num[i * n + i] = 0.0;
        for j in (i + 1)..n {
            let dx = y[i][0] - y[j][0];
            let dy = y[i][1] - y[j][1];
            let v = 1.0 / (1.0 + dx * dx + dy * dy);
            num[i * n + j] = v;
            num[j * n + i] = v;
            q_sum += 2.0 * v;
        }
    }
    kl_divergence(p, num, q_sum)
}
