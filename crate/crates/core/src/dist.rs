//! Bounded capacity distributions.

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum DistError {
    #[error("width must be positive and finite, got {0}")]
    Width(f64),
    #[error("support must satisfy lo < hi, got [{lo}, {hi}]")]
    Support { lo: f64, hi: f64 },
    #[error("density table needs at least two non-negative values with positive mass")]
    Density,
    #[error("mean must be finite, got {0}")]
    Mean(f64),
}

/// Distribution of agent capacities Λ with bounded support.
///
/// `Tabulated` is a piecewise-linear density on an equally spaced grid over
/// `[lo, hi]`; it is normalised by [`CapacityDist::tabulated`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum CapacityDist {
    Rectangular { mean: f64, width: f64 },
    Tabulated { lo: f64, hi: f64, density: Vec<f64> },
}

impl CapacityDist {
    /// Rectangular distribution with unit width.
    pub fn rectangular(mean: f64) -> Self {
        CapacityDist::Rectangular { mean, width: 1.0 }
    }

    pub fn tabulated(lo: f64, hi: f64, density: Vec<f64>) -> Result<Self, DistError> {
        if !(lo < hi) || !lo.is_finite() || !hi.is_finite() {
            return Err(DistError::Support { lo, hi });
        }
        if density.len() < 2 || density.iter().any(|d| !(*d >= 0.0) || !d.is_finite()) {
            return Err(DistError::Density);
        }
        let h = (hi - lo) / (density.len() - 1) as f64;
        let mass: f64 = density.windows(2).map(|w| 0.5 * h * (w[0] + w[1])).sum();
        if !(mass > 0.0) {
            return Err(DistError::Density);
        }
        Ok(CapacityDist::Tabulated {
            lo,
            hi,
            density: density.into_iter().map(|d| d / mass).collect(),
        })
    }

    pub fn validate(&self) -> Result<(), DistError> {
        match self {
            CapacityDist::Rectangular { mean, width } => {
                if !mean.is_finite() {
                    return Err(DistError::Mean(*mean));
                }
                if !(*width > 0.0) || !width.is_finite() {
                    return Err(DistError::Width(*width));
                }
                Ok(())
            }
            CapacityDist::Tabulated { lo, hi, density } => {
                Self::tabulated(*lo, *hi, density.clone()).map(|_| ())
            }
        }
    }

    pub fn support(&self) -> (f64, f64) {
        match self {
            CapacityDist::Rectangular { mean, width } => (mean - 0.5 * width, mean + 0.5 * width),
            CapacityDist::Tabulated { lo, hi, .. } => (*lo, *hi),
        }
    }

    pub fn mean(&self) -> f64 {
        match self {
            CapacityDist::Rectangular { mean, .. } => *mean,
            CapacityDist::Tabulated { lo, hi, density } => {
                let h = (hi - lo) / (density.len() - 1) as f64;
                density
                    .windows(2)
                    .enumerate()
                    .map(|(k, w)| {
                        let a = lo + h * k as f64;
                        // exact first moment of the linear piece
                        h * (w[0] * (a / 2.0 + h / 6.0) + w[1] * (a / 2.0 + h / 3.0))
                    })
                    .sum()
            }
        }
    }

    /// The same shape translated so that its mean is `mean`.
    pub fn with_mean(&self, mean: f64) -> Self {
        match self {
            CapacityDist::Rectangular { width, .. } => CapacityDist::Rectangular { mean, width: *width },
            CapacityDist::Tabulated { lo, hi, density } => {
                let shift = mean - self.mean();
                CapacityDist::Tabulated {
                    lo: lo + shift,
                    hi: hi + shift,
                    density: density.clone(),
                }
            }
        }
    }

    pub fn density(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x < lo || x > hi {
            return 0.0;
        }
        match self {
            CapacityDist::Rectangular { width, .. } => 1.0 / width,
            CapacityDist::Tabulated { density, .. } => {
                let h = (hi - lo) / (density.len() - 1) as f64;
                let s = ((x - lo) / h).min((density.len() - 1) as f64);
                let k = (s.floor() as usize).min(density.len() - 2);
                let f = s - k as f64;
                density[k] * (1.0 - f) + density[k + 1] * f
            }
        }
    }

    pub fn cdf(&self, x: f64) -> f64 {
        let (lo, hi) = self.support();
        if x <= lo {
            return 0.0;
        }
        if x >= hi {
            return 1.0;
        }
        match self {
            CapacityDist::Rectangular { width, .. } => (x - lo) / width,
            CapacityDist::Tabulated { density, .. } => {
                let h = (hi - lo) / (density.len() - 1) as f64;
                let s = (x - lo) / h;
                let k = (s.floor() as usize).min(density.len() - 2);
                let full: f64 = density[..=k].windows(2).map(|w| 0.5 * h * (w[0] + w[1])).sum();
                let dx = x - (lo + h * k as f64);
                let slope = (density[k + 1] - density[k]) / h;
                (full + density[k] * dx + 0.5 * slope * dx * dx).clamp(0.0, 1.0)
            }
        }
    }

    /// Inverse of [`cdf`](Self::cdf) for `p` in `[0, 1]`.
    pub fn quantile(&self, p: f64) -> f64 {
        let (lo, hi) = self.support();
        let p = p.clamp(0.0, 1.0);
        match self {
            CapacityDist::Rectangular { width, .. } => lo + p * width,
            CapacityDist::Tabulated { .. } => crate::numeric::bisect_increasing(|x| self.cdf(x), p, lo, hi, 1e-15 * (hi - lo)),
        }
    }

    /// Interior points where the density is not smooth.
    pub fn breakpoints(&self) -> Vec<f64> {
        match self {
            CapacityDist::Rectangular { .. } => Vec::new(),
            CapacityDist::Tabulated { lo, hi, density } => {
                let h = (hi - lo) / (density.len() - 1) as f64;
                (1..density.len() - 1).map(|k| lo + h * k as f64).collect()
            }
        }
    }

    pub fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.quantile(rng.gen::<f64>())
    }
}
