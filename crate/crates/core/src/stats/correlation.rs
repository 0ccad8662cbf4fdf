use rand::Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::error::{Error, Result};
use crate::seed;

/// Average (mid) ranks, 1-based. Ties share the mean of the ranks they span.
pub fn average_ranks(values: &[f64]) -> Vec<f64> {
    let mut order: Vec<usize> = (0..values.len()).collect();
    order.sort_by(|&a, &b| values[a].total_cmp(&values[b]));
    let mut ranks = vec![0.0; values.len()];
    let mut start = 0;
    while start < order.len() {
        let mut end = start + 1;
        while end < order.len() && values[order[end]] == values[order[start]] {
            end += 1;
        }
        // ranks start+1 ..= end
        let mid = (start + 1 + end) as f64 / 2.0;
        for &k in &order[start..end] {
            ranks[k] = mid;
        }
        start = end;
    }
    ranks
}

/// Pearson correlation. `None` when either side has zero variance.
pub fn pearson(x: &[f64], y: &[f64]) -> Option<f64> {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let (mut sxy, mut sxx, mut syy) = (0.0, 0.0, 0.0);
    for (&a, &b) in x.iter().zip(y) {
        let (dx, dy) = (a - mx, b - my);
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if sxx == 0.0 || syy == 0.0 {
        return None;
    }
    Some((sxy / (sxx * syy).sqrt()).clamp(-1.0, 1.0))
}

fn check_pair(x: &[f64], y: &[f64]) -> Result<()> {
    if x.len() != y.len() {
        return Err(Error::Shape {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::Size(format!(
            "need at least 3 paired values, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in correlation input".into()));
    }
    Ok(())
}

/// Spearman's rho: Pearson correlation of mid-ranks.
pub fn spearman_r(x: &[f64], y: &[f64]) -> Result<f64> {
    check_pair(x, y)?;
    pearson(&average_ranks(x), &average_ranks(y))
        .ok_or_else(|| Error::UndefinedCorrelation("zero rank variance".into()))
}

/// Two-sided p-value from the large-sample t approximation with `n - 2`
/// degrees of freedom.
pub fn correlation_p_value(r: f64, n: usize) -> f64 {
    if n < 3 {
        return 1.0;
    }
    if r.abs() >= 1.0 {
        return 0.0;
    }
    let df = (n - 2) as f64;
    let t = r * (df / (1.0 - r * r)).sqrt();
    let dist = StudentsT::new(0.0, 1.0, df).expect("positive degrees of freedom");
    (2.0 * (1.0 - dist.cdf(t.abs()))).clamp(0.0, 1.0)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CorrelationResult {
    pub r: f64,
    pub p_value: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct CiOptions {
    pub level: f64,
    pub resamples: usize,
    pub seed: u64,
}

impl Default for CiOptions {
    fn default() -> Self {
        CiOptions {
            level: 0.95,
            resamples: 1000,
            seed: 0,
        }
    }
}

pub fn spearman(x: &[f64], y: &[f64]) -> Result<CorrelationResult> {
    spearman_with(x, y, &CiOptions::default())
}

/// Spearman correlation with a percentile-bootstrap interval. The interval is
/// widened to contain `r` when the bootstrap percentiles do not.
pub fn spearman_with(x: &[f64], y: &[f64], ci: &CiOptions) -> Result<CorrelationResult> {
    let r = spearman_r(x, y)?;
    let (lo, hi) = ci_spearman(x, y, ci.level, ci.resamples, ci.seed)?;
    Ok(CorrelationResult {
        r,
        p_value: correlation_p_value(r, x.len()),
        ci_low: lo.min(r),
        ci_high: hi.max(r),
        n: x.len(),
    })
}

/// Bootstrap replicate statistics; resamples whose ranks are constant are
/// dropped. Replicate `b` draws from its own derived seed.
fn bootstrap_replicates(x: &[f64], y: &[f64], resamples: usize, seed: u64) -> Vec<f64> {
    let n = x.len();
    let mut reps: Vec<f64> = (0..resamples as u64)
        .into_par_iter()
        .filter_map(|b| {
            let mut rng = seed::rng(seed::derive_indexed(seed, "bootstrap", b));
            let mut xs = Vec::with_capacity(n);
            let mut ys = Vec::with_capacity(n);
            for _ in 0..n {
                let k = rng.random_range(0..n);
                xs.push(x[k]);
                ys.push(y[k]);
            }
            pearson(&average_ranks(&xs), &average_ranks(&ys))
        })
        .collect();
    reps.sort_by(f64::total_cmp);
    reps
}

/// Linear-interpolated percentile (`q` in `[0, 100]`) of sorted data.
pub fn percentile_sorted(sorted: &[f64], q: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty sample");
    let pos = (q / 100.0).clamp(0.0, 1.0) * (sorted.len() - 1) as f64;
    let lo = pos.floor() as usize;
    let hi = pos.ceil() as usize;
    let frac = pos - lo as f64;
    sorted[lo] + (sorted[hi] - sorted[lo]) * frac
}

pub fn percentile(values: &[f64], q: f64) -> f64 {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    percentile_sorted(&sorted, q)
}

/// Percentile bootstrap confidence interval for Spearman's rho over paired
/// entries.
pub fn ci_spearman(
    x: &[f64],
    y: &[f64],
    level: f64,
    resamples: usize,
    seed: u64,
) -> Result<(f64, f64)> {
    let r = spearman_r(x, y)?;
    if !(0.0..1.0).contains(&level) {
        return Err(Error::Parameter(format!(
            "confidence level {level} outside (0, 1)"
        )));
    }
    let reps = bootstrap_replicates(x, y, resamples, seed);
    if reps.is_empty() {
        return Ok((r, r));
    }
    let tail = (1.0 - level) / 2.0 * 100.0;
    Ok((
        percentile_sorted(&reps, tail),
        percentile_sorted(&reps, 100.0 - tail),
    ))
}
