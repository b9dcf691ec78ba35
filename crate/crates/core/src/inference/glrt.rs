//! Energy-detector GLRT for a beacon of unknown amplitude in unit-power
//! complex Gaussian noise.
//!
//! Under noise only, the summed energy of `n` samples is Gamma(n, 1), so the
//! threshold for a false-alarm probability `pfa` is its `1 - pfa` quantile.
//! [`GlrtTable`] precomputes those quantiles per sample count.

use num_complex::Complex64;
use statrs::distribution::{ContinuousCDF, Gamma};

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectionResult {
    pub statistic: f64,
    pub threshold: f64,
    pub decision: bool,
}

pub fn energy_statistic(samples: &[Complex64]) -> Result<f64> {
    if samples.is_empty() {
        return Err(Error::param("samples", "need at least one sample"));
    }
    let mut total = 0.0;
    for (i, s) in samples.iter().enumerate() {
        if !(s.re.is_finite() && s.im.is_finite()) {
            return Err(Error::NonFiniteSample(i));
        }
        total += s.norm_sqr();
    }
    Ok(total)
}

fn check_pfa(pfa: f64) -> Result<()> {
    if pfa > 0.0 && pfa < 1.0 {
        Ok(())
    } else {
        Err(Error::param("pfa", format!("must lie in (0, 1), got {pfa}")))
    }
}

pub fn glrt_threshold(n_samples: usize, pfa: f64) -> Result<f64> {
    check_pfa(pfa)?;
    if n_samples == 0 {
        return Err(Error::param("samples", "need at least one sample"));
    }
    let gamma = Gamma::new(n_samples as f64, 1.0).map_err(|e| Error::param("samples", e.to_string()))?;
    Ok(gamma.inverse_cdf(1.0 - pfa))
}

pub fn glrt_detect(samples: &[Complex64], pfa: f64) -> Result<DetectionResult> {
    let threshold = glrt_threshold(samples.len(), pfa)?;
    let statistic = energy_statistic(samples)?;
    Ok(DetectionResult { statistic, threshold, decision: statistic > threshold })
}

/// Thresholds for `1..=max_samples` samples at a fixed false-alarm rate.
#[derive(Debug, Clone, PartialEq)]
pub struct GlrtTable {
    pfa: f64,
    thresholds: Vec<f64>,
}

impl GlrtTable {
    pub fn new(pfa: f64, max_samples: usize) -> Result<Self> {
        let thresholds = (1..=max_samples).map(|n| glrt_threshold(n, pfa)).collect::<Result<_>>()?;
        Ok(Self { pfa, thresholds })
    }

    pub fn pfa(&self) -> f64 {
        self.pfa
    }

    pub fn threshold(&self, n_samples: usize) -> Option<f64> {
        n_samples.checked_sub(1).and_then(|i| self.thresholds.get(i)).copied()
    }

    pub fn detect(&self, samples: &[Complex64]) -> Result<DetectionResult> {
        let threshold = self
            .threshold(samples.len())
            .ok_or_else(|| Error::param("samples", format!("table has no entry for {} samples", samples.len())))?;
        let statistic = energy_statistic(samples)?;
        Ok(DetectionResult { statistic, threshold, decision: statistic > threshold })
    }
}
