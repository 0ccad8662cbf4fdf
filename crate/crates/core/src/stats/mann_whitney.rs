use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, Normal};

use super::correlation::average_ranks;
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MwuMethod {
    /// Normal approximation with tie and continuity corrections.
    #[default]
    Normal,
    /// Exact null distribution. Only for tie-free samples with `n * m <= 10^6`.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MannWhitney {
    /// `min(u_a, u_b)`.
    pub u: f64,
    /// Pairs with `a_i < b_j`, ties counted one half.
    pub u_a: f64,
    /// Pairs with `b_j < a_i`, ties counted one half.
    pub u_b: f64,
    /// Two-sided p-value.
    pub p_value: f64,
    pub n_a: usize,
    pub n_b: usize,
}

pub const EXACT_LIMIT: usize = 1_000_000;

pub fn mann_whitney(a: &[f64], b: &[f64]) -> Result<MannWhitney> {
    mann_whitney_with(a, b, MwuMethod::Normal)
}

pub fn mann_whitney_with(a: &[f64], b: &[f64], method: MwuMethod) -> Result<MannWhitney> {
    if a.is_empty() || b.is_empty() {
        return Err(Error::Size(
            "Mann-Whitney needs two non-empty samples".into(),
        ));
    }
    if a.iter().chain(b).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in Mann-Whitney input".into()));
    }
    let (n, m) = (a.len(), b.len());
    let pooled: Vec<f64> = a.iter().chain(b).copied().collect();
    let ranks = average_ranks(&pooled);
    let nf = n as f64;
    let mf = m as f64;
    let rank_sum_a: f64 = ranks[..n].iter().sum();
    // U counting b_j < a_i from the rank sum of a; the complement counts a_i < b_j.
    let u_b = rank_sum_a - nf * (nf + 1.0) / 2.0;
    let u_a = nf * mf - u_b;
    let u = u_a.min(u_b);

    let ties = tie_groups(&pooled);
    let p_value = match method {
        MwuMethod::Normal => normal_p(u, n, m, &ties),
        MwuMethod::Exact => {
            if ties.iter().any(|&t| t > 1) {
                return Err(Error::Parameter(
                    "exact Mann-Whitney requires tie-free samples".into(),
                ));
            }
            if n * m > EXACT_LIMIT {
                return Err(Error::Parameter(format!(
                    "exact Mann-Whitney limited to n*m <= {EXACT_LIMIT}, got {}",
                    n * m
                )));
            }
            exact_p(u, n, m)
        }
    };
    Ok(MannWhitney {
        u,
        u_a,
        u_b,
        p_value,
        n_a: n,
        n_b: m,
    })
}

fn tie_groups(values: &[f64]) -> Vec<usize> {
    let mut sorted = values.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut groups = Vec::new();
    let mut i = 0;
    while i < sorted.len() {
        let mut j = i + 1;
        while j < sorted.len() && sorted[j] == sorted[i] {
            j += 1;
        }
        groups.push(j - i);
        i = j;
    }
    groups
}

fn normal_p(u: f64, n: usize, m: usize, ties: &[usize]) -> f64 {
    let (nf, mf) = (n as f64, m as f64);
    let total = nf + mf;
    let tie_term: f64 = ties.iter().map(|&t| (t as f64).powi(3) - t as f64).sum();
    let variance = nf * mf / 12.0 * ((total + 1.0) - tie_term / (total * (total - 1.0)).max(1.0));
    if variance <= 0.0 {
        return 1.0;
    }
    let mean = nf * mf / 2.0;
    let z = ((u - mean).abs() - 0.5).max(0.0) / variance.sqrt();
    let normal = Normal::new(0.0, 1.0).expect("standard normal");
    (2.0 * (1.0 - normal.cdf(z))).clamp(0.0, 1.0)
}

/// Null distribution of U for tie-free samples of sizes `n` and `m`, as
/// probabilities indexed by U. Builds the Gaussian binomial coefficient
/// `[n+m choose k]_q` one factor at a time, rescaled so the coefficients stay
/// a probability distribution.
pub fn exact_null_distribution(n: usize, m: usize) -> Vec<f64> {
    let (small, large) = if n <= m { (n, m) } else { (m, n) };
    let mut poly = vec![1.0f64];
    for k in 1..=small {
        // multiply by (1 - q^(large + k))
        let shift = large + k;
        let mut next = vec![0.0; poly.len() + shift];
        for (i, &c) in poly.iter().enumerate() {
            next[i] += c;
            next[i + shift] -= c;
        }
        // divide by (1 - q^k): running sum with stride k
        for i in k..next.len() {
            next[i] += next[i - k];
        }
        next.truncate(poly.len() + large);
        let scale = k as f64 / (large + k) as f64;
        next.iter_mut().for_each(|c| *c = (*c * scale).max(0.0));
        poly = next;
    }
    let total: f64 = poly.iter().sum();
    poly.iter().map(|c| c / total).collect()
}

fn exact_p(u: f64, n: usize, m: usize) -> f64 {
    let dist = exact_null_distribution(n, m);
    let cutoff = u.floor() as usize;
    let lower: f64 = dist.iter().take(cutoff + 1).sum();
    (2.0 * lower).min(1.0)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};

    fn brute_force(a: &[f64], b: &[f64]) -> (f64, f64) {
        let mut less = 0.0;
        let mut greater = 0.0;
        for &x in a {
            for &y in b {
                if x < y {
                    less += 1.0;
                } else if x > y {
                    greater += 1.0;
                } else {
                    less += 0.5;
                    greater += 0.5;
                }
            }
        }
        (less, greater)
    }

    #[test]
    fn examples() {
        let r = mann_whitney(&[1.0, 2.0], &[3.0, 4.0]).unwrap();
        assert_eq!(r.u, 0.0);
        assert_eq!(r.u_a, 4.0);
        let r = mann_whitney(&[1.0, 2.0, 3.0], &[1.0, 2.0, 3.0]).unwrap();
        assert_eq!(r.u, 4.5);
        assert!((r.p_value - 1.0).abs() < 1e-12);
        assert!(mann_whitney(&[], &[1.0]).is_err());
    }

    #[test]
    fn matches_pair_counting() {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(17);
        for _ in 0..200 {
            let n = rng.random_range(1..25);
            let m = rng.random_range(1..25);
            let a: Vec<f64> = (0..n).map(|_| rng.random_range(0..12) as f64).collect();
            let b: Vec<f64> = (0..m).map(|_| rng.random_range(0..12) as f64).collect();
            let r = mann_whitney(&a, &b).unwrap();
            let (less, greater) = brute_force(&a, &b);
            assert_eq!(r.u_a, less);
            assert_eq!(r.u_b, greater);
            assert_eq!(r.u, less.min(greater));
            let swapped = mann_whitney(&b, &a).unwrap();
            assert_eq!(swapped.u, r.u);
            assert_eq!(r.u_a + r.u_b, (n * m) as f64);
        }
    }

    #[test]
    fn all_tied_gives_p_one() {
        let r = mann_whitney(&[2.0, 2.0], &[2.0, 2.0, 2.0]).unwrap();
        assert_eq!(r.p_value, 1.0);
    }

    #[test]
    fn normal_p_against_reference() {
        // scipy.stats.mannwhitneyu(a, b, method="asymptotic", use_continuity=True)
        let a = [1.0, 4.0, 2.0, 8.0, 5.0, 5.0, 3.0];
        let b = [9.0, 6.0, 7.0, 5.0, 10.0, 12.0];
        let r = mann_whitney(&a, &b).unwrap();
        assert_eq!(r.u, 4.0);
        assert!(
            (r.p_value - 0.017_778_372_968_7).abs() < 1e-9,
            "{}",
            r.p_value
        );
    }

    fn enumerate_null(n: usize, m: usize) -> Vec<f64> {
        // every placement of n labelled items among n+m positions
        let total = n + m;
        let mut counts = vec![0u64; n * m + 1];
        for mask in 0u32..(1 << total) {
            if mask.count_ones() as usize != n {
                continue;
            }
            // U counts pairs (a, b) with a ranked above b
            let mut u = 0;
            let mut bs_below = 0;
            for pos in 0..total {
                if mask & (1 << pos) != 0 {
                    u += bs_below;
                } else {
                    bs_below += 1;
                }
            }
            counts[u] += 1;
        }
        let s: u64 = counts.iter().sum();
        counts.iter().map(|&c| c as f64 / s as f64).collect()
    }

    #[test]
    fn exact_distribution_matches_enumeration() {
        for n in 1..=6 {
            for m in 1..=6 {
                let fast = exact_null_distribution(n, m);
                let slow = enumerate_null(n, m);
                assert_eq!(fast.len(), slow.len());
                for (f, s) in fast.iter().zip(&slow) {
                    assert!((f - s).abs() < 1e-12, "n={n} m={m}");
                }
            }
        }
    }

    #[test]
    fn exact_method() {
        let r = mann_whitney_with(&[1.0, 2.0, 3.0], &[4.0, 5.0, 6.0], MwuMethod::Exact).unwrap();
        // P(U = 0) = 1 / C(6, 3)
        assert!((r.p_value - 2.0 / 20.0).abs() < 1e-12);
        assert!(mann_whitney_with(&[1.0, 1.0], &[2.0], MwuMethod::Exact).is_err());
    }
}
