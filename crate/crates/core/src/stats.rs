//! Confidence intervals from independent samples.

use serde::{Deserialize, Serialize};
use statrs::distribution::{ContinuousCDF, StudentsT};

use crate::{Error, Result};

/// Mean of a set of samples with the half-width of its two-sided confidence
/// interval. `half_width` is `None` when fewer than two samples exist.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Estimate {
    pub mean: f64,
    pub half_width: Option<f64>,
    pub samples: usize,
}

impl Estimate {
    pub fn contains(&self, value: f64) -> bool {
        match self.half_width {
            Some(h) => (value - self.mean).abs() <= h,
            None => false,
        }
    }

    pub fn lower(&self) -> Option<f64> {
        self.half_width.map(|h| self.mean - h)
    }

    pub fn upper(&self) -> Option<f64> {
        self.half_width.map(|h| self.mean + h)
    }
}

/// Quantile of Student's t distribution with `df` degrees of freedom.
pub fn student_t_quantile(p: f64, df: f64) -> Result<f64> {
    if !(p > 0.0 && p < 1.0) || !(df > 0.0 && df.is_finite()) {
        return Err(Error::domain(format!("need 0 < p < 1 and df > 0, got p={p}, df={df}")));
    }
    let t = StudentsT::new(0.0, 1.0, df).map_err(|e| Error::domain(e.to_string()))?;
    Ok(t.inverse_cdf(p))
}

/// Sample mean with a Student-t confidence interval at `level` (e.g. 0.95).
pub fn confidence_interval(samples: &[f64], level: f64) -> Estimate {
    let k = samples.len();
    if k == 0 {
        return Estimate { mean: f64::NAN, half_width: None, samples: 0 };
    }
    let mean = samples.iter().sum::<f64>() / k as f64;
    if k < 2 {
        return Estimate { mean, half_width: None, samples: k };
    }
    let var = samples.iter().map(|x| (x - mean).powi(2)).sum::<f64>() / (k - 1) as f64;
    let q = student_t_quantile(0.5 + level / 2.0, (k - 1) as f64).unwrap_or(f64::NAN);
    Estimate { mean, half_width: Some(q * (var / k as f64).sqrt()), samples: k }
}
