use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OlsFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub n: usize,
}

impl OlsFit {
    pub fn predict(&self, x: f64) -> f64 {
        self.intercept + self.slope * x
    }
}

/// Simple least-squares line `y = intercept + slope * x`. `R^2 = 1 - SSE/SST`,
/// reported as 0 when `y` is constant.
pub fn ols(x: &[f64], y: &[f64]) -> Result<OlsFit> {
    if x.len() != y.len() {
        return Err(Error::Shape {
            expected: x.len(),
            actual: y.len(),
        });
    }
    if x.len() < 3 {
        return Err(Error::Size(format!(
            "OLS needs at least 3 points, got {}",
            x.len()
        )));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Data("non-finite value in OLS input".into()));
    }
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    if sxx == 0.0 {
        return Err(Error::SingularDesign("x has zero variance".into()));
    }
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let sst: f64 = y.iter().map(|v| (v - my).powi(2)).sum();
    let sse: f64 = x
        .iter()
        .zip(y)
        .map(|(a, b)| (b - intercept - slope * a).powi(2))
        .sum();
    let r_squared = if sst == 0.0 {
        0.0
    } else {
        (1.0 - sse / sst).clamp(0.0, 1.0)
    };
    Ok(OlsFit {
        slope,
        intercept,
        r_squared,
        n: x.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn exact_line() {
        let x = [0.0, 1.0, 2.0, 5.0];
        let y: Vec<f64> = x.iter().map(|v| 2.0 * v + 1.0).collect();
        let fit = ols(&x, &y).unwrap();
        assert!((fit.slope - 2.0).abs() < 1e-12);
        assert!((fit.intercept - 1.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
    }

    #[test]
    fn constant_response() {
        let fit = ols(&[1.0, 2.0, 3.0], &[4.0, 4.0, 4.0]).unwrap();
        assert_eq!(fit.slope, 0.0);
        assert_eq!(fit.r_squared, 0.0);
    }

    #[test]
    fn constant_design_is_singular() {
        assert!(matches!(
            ols(&[1.0, 1.0, 1.0], &[1.0, 2.0, 3.0]),
            Err(Error::SingularDesign(_))
        ));
        assert!(matches!(ols(&[1.0, 2.0], &[1.0, 2.0]), Err(Error::Size(_))));
    }

    proptest! {
        #[test]
        fn residuals_orthogonal_to_x(pts in prop::collection::vec((-50.0f64..50.0, -50.0f64..50.0), 3..60)) {
            let x: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let y: Vec<f64> = pts.iter().map(|p| p.1).collect();
            if let Ok(fit) = ols(&x, &y) {
                let dot: f64 = x.iter().zip(&y).map(|(a, b)| a * (b - fit.predict(*a))).sum();
                let scale = x.iter().chain(&y).fold(1.0f64, |m, v| m.max(v.abs()));
                prop_assert!(dot.abs() < 1e-9 * x.len() as f64 * scale * scale);
            }
        }
    }
}
