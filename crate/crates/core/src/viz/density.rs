use std::f64::consts::PI;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum DensitySpec {
    Histogram {
        bins: usize,
    },
    /// Gaussian kernel evaluated on `points` equally spaced grid points
    /// spanning three bandwidths past the data range.
    Kde {
        bandwidth: f64,
        points: usize,
    },
}

/// Binned or gridded density. `mass` sums to one; `density = mass / width`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DensityTable {
    pub x: Vec<f64>,
    pub width: f64,
    pub density: Vec<f64>,
    pub mass: Vec<f64>,
    pub n: usize,
}

pub fn density_export(samples: &[f64], spec: DensitySpec) -> Result<DensityTable> {
    if samples.is_empty() {
        return Err(Error::Domain("density of an empty sample".into()));
    }
    if samples.iter().any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite sample".into()));
    }
    let lo = samples.iter().copied().fold(f64::INFINITY, f64::min);
    let hi = samples.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    match spec {
        DensitySpec::Histogram { bins } => {
            if bins == 0 {
                return Err(Error::Parameter("histogram needs at least one bin".into()));
            }
            if lo == hi {
                return Ok(DensityTable {
                    x: vec![lo],
                    width: 1.0,
                    density: vec![1.0],
                    mass: vec![1.0],
                    n: samples.len(),
                });
            }
            let width = (hi - lo) / bins as f64;
            let mut counts = vec![0usize; bins];
            for &s in samples {
                let b = (((s - lo) / width) as usize).min(bins - 1);
                counts[b] += 1;
            }
            let n = samples.len() as f64;
            let mass: Vec<f64> = counts.iter().map(|&c| c as f64 / n).collect();
            Ok(DensityTable {
                x: (0..bins).map(|b| lo + (b as f64 + 0.5) * width).collect(),
                width,
                density: mass.iter().map(|m| m / width).collect(),
                mass,
                n: samples.len(),
            })
        }
        DensitySpec::Kde { bandwidth, points } => {
            if !(bandwidth > 0.0 && bandwidth.is_finite()) || points < 2 {
                return Err(Error::Parameter(format!(
                    "KDE needs a positive bandwidth and at least 2 points, got {bandwidth} and {points}"
                )));
            }
            let start = lo - 3.0 * bandwidth;
            let width = (hi - lo + 6.0 * bandwidth) / (points - 1) as f64;
            let x: Vec<f64> = (0..points).map(|i| start + i as f64 * width).collect();
            let norm = 1.0 / (samples.len() as f64 * bandwidth * (2.0 * PI).sqrt());
            let raw: Vec<f64> = x
                .iter()
                .map(|&g| {
                    samples
                        .iter()
                        .map(|s| (-0.5 * ((g - s) / bandwidth).powi(2)).exp())
                        .sum::<f64>()
                        * norm
                })
                .collect();
            let total: f64 = raw.iter().map(|d| d * width).sum();
            let mass: Vec<f64> = raw.iter().map(|d| d * width / total).collect();
            Ok(DensityTable {
                density: mass.iter().map(|m| m / width).collect(),
                x,
                width,
                mass,
                n: samples.len(),
            })
        }
    }
}

/// Silverman's rule of thumb, falling back to 0.1 when the sample has no spread.
pub fn silverman_bandwidth(samples: &[f64]) -> f64 {
    let n = samples.len() as f64;
    if n < 2.0 {
        return 0.1;
    }
    let mean = samples.iter().sum::<f64>() / n;
    let sd = (samples.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt();
    if sd > 0.0 {
        1.06 * sd * n.powf(-0.2)
    } else {
        0.1
    }
}
