//! Gaussian kernel density estimation and smoothed bootstrap draws.
//!
//! The bandwidth is picked by least-squares cross-validation over a grid.
//! Draws follow the usual smoothed-bootstrap recipe: resample a data point,
//! add kernel noise, and (optionally) shrink towards the sample mean so the
//! draw variance matches the sample variance.

use alloc::vec::Vec;
use core::f64::consts::PI;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::distributions::Sampler;
use crate::stats::{mean, normal_cdf, normal_pdf, sample_sd};

/// Kernel contributions beyond this many bandwidths are below `exp(-400)`.
const KERNEL_CUTOFF: f64 = 40.0;

const GRID_POINTS: usize = 30;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DensityError {
    #[error("need at least {needed} observations, got {got}")]
    TooFewPoints { needed: usize, got: usize },
    #[error("data has zero variance")]
    ZeroVariance,
    #[error("non-finite observation at index {0}")]
    NonFinite(usize),
    #[error("bandwidth grid must be non-empty, positive and strictly increasing")]
    BadGrid,
}

fn check_finite(data: &[f64]) -> Result<(), DensityError> {
    match data.iter().position(|x| !x.is_finite()) {
        Some(i) => Err(DensityError::NonFinite(i)),
        None => Ok(()),
    }
}

/// Location and scale used to standardize a sample.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Standardization {
    pub center: f64,
    pub scale: f64,
}

impl Standardization {
    pub fn identity() -> Self {
        Self { center: 0.0, scale: 1.0 }
    }

    pub fn of(data: &[f64]) -> Result<Self, DensityError> {
        if data.len() < 2 {
            return Err(DensityError::TooFewPoints { needed: 2, got: data.len() });
        }
        check_finite(data)?;
        let scale = sample_sd(data);
        if !(scale > 0.0) {
            return Err(DensityError::ZeroVariance);
        }
        Ok(Self { center: mean(data), scale })
    }

    #[inline]
    pub fn apply(&self, x: f64) -> f64 {
        (x - self.center) / self.scale
    }
}

/// Rescales `data` to sample mean 0 and sample variance 1 (`n - 1` divisor).
pub fn normalize(data: &[f64]) -> Result<Vec<f64>, DensityError> {
    let s = Standardization::of(data)?;
    Ok(data.iter().map(|&x| s.apply(x)).collect())
}

/// `1.06 * sd * m^(-1/5)`.
pub fn rule_of_thumb(data: &[f64]) -> f64 {
    1.06 * sample_sd(data) * libm::pow(data.len() as f64, -0.2)
}

/// Log-spaced grid over `[0.1, 10] x` the rule-of-thumb bandwidth.
pub fn default_grid(data: &[f64]) -> Vec<f64> {
    let base = rule_of_thumb(data);
    (0..GRID_POINTS)
        .map(|i| {
            let e = -1.0 + 2.0 * i as f64 / (GRID_POINTS - 1) as f64;
            base * libm::pow(10.0, e)
        })
        .collect()
}

/// Least-squares cross-validation score of a Gaussian KDE with bandwidth `h`:
/// `integral of fhat^2 - (2/m) * sum_i fhat_{-i}(x_i)`.
///
/// `sorted` must be sorted ascending.
pub fn lscv_score(sorted: &[f64], h: f64) -> f64 {
    let m = sorted.len() as f64;
    let reach = KERNEL_CUTOFF * h;
    // For each pair: e1 = exp(-d^2 / 4h^2) feeds the convolution term and
    // e1^2 = exp(-d^2 / 2h^2) the leave-one-out term.
    let (mut conv, mut loo) = (0.0, 0.0);
    for (i, &xi) in sorted.iter().enumerate() {
        for &xj in &sorted[i + 1..] {
            let d = xj - xi;
            if d > reach {
                break;
            }
            let e1 = libm::exp(-d * d / (4.0 * h * h));
            conv += e1;
            loo += e1 * e1;
        }
    }
    let root_two_pi = libm::sqrt(2.0 * PI);
    let self_term = 1.0 / (2.0 * libm::sqrt(PI) * m * h);
    let cross = 2.0 * conv / (root_two_pi * libm::sqrt(2.0) * m * m * h);
    let leave_one_out = 4.0 * loo / (root_two_pi * m * (m - 1.0) * h);
    self_term + cross - leave_one_out
}

/// The grid value minimising [`lscv_score`]; the first one on ties.
pub fn cv_bandwidth(data: &[f64], grid: &[f64]) -> Result<f64, DensityError> {
    if data.len() < 10 {
        return Err(DensityError::TooFewPoints { needed: 10, got: data.len() });
    }
    check_finite(data)?;
    let valid_grid = !grid.is_empty()
        && grid.iter().all(|&h| h > 0.0 && h.is_finite())
        && grid.windows(2).all(|w| w[0] < w[1]);
    if !valid_grid {
        return Err(DensityError::BadGrid);
    }
    if !(sample_sd(data) > 0.0) {
        return Err(DensityError::ZeroVariance);
    }
    let mut sorted = data.to_vec();
    sorted.sort_by(f64::total_cmp);
    let mut best = (grid[0], f64::INFINITY);
    for &h in grid {
        let score = lscv_score(&sorted, h);
        if score < best.1 {
            best = (h, score);
        }
    }
    Ok(best.0)
}

/// Kernel density estimate of an in-control sample.
#[derive(Debug, Clone, PartialEq)]
pub struct FittedDensity {
    points: Vec<f64>,
    bandwidth: f64,
    sample_mean: f64,
    sample_sd: f64,
    variance_corrected: bool,
    shrink: f64,
}

/// Fits with the default bandwidth grid and variance correction on.
pub fn fit_kde(data: &[f64]) -> Result<FittedDensity, DensityError> {
    FittedDensity::fit(data, true)
}

impl FittedDensity {
    pub fn fit(data: &[f64], variance_corrected: bool) -> Result<Self, DensityError> {
        let bandwidth = cv_bandwidth(data, &default_grid(data))?;
        Self::with_bandwidth(data, bandwidth, variance_corrected)
    }

    pub fn with_bandwidth(
        data: &[f64],
        bandwidth: f64,
        variance_corrected: bool,
    ) -> Result<Self, DensityError> {
        if data.len() < 2 {
            return Err(DensityError::TooFewPoints { needed: 2, got: data.len() });
        }
        check_finite(data)?;
        if !(bandwidth > 0.0 && bandwidth.is_finite()) {
            return Err(DensityError::BadGrid);
        }
        let sd = sample_sd(data);
        if !(sd > 0.0) {
            return Err(DensityError::ZeroVariance);
        }
        let shrink = 1.0 / libm::sqrt(1.0 + bandwidth * bandwidth / (sd * sd));
        Ok(Self {
            points: data.to_vec(),
            bandwidth,
            sample_mean: mean(data),
            sample_sd: sd,
            variance_corrected,
            shrink,
        })
    }

    pub fn points(&self) -> &[f64] {
        &self.points
    }

    pub fn bandwidth(&self) -> f64 {
        self.bandwidth
    }

    pub fn sample_mean(&self) -> f64 {
        self.sample_mean
    }

    pub fn sample_sd(&self) -> f64 {
        self.sample_sd
    }

    pub fn variance_corrected(&self) -> bool {
        self.variance_corrected
    }

    pub fn set_variance_corrected(&mut self, on: bool) {
        self.variance_corrected = on;
    }

    pub fn density_at(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let sum: f64 = self.points.iter().map(|&p| normal_pdf((x - p) / h)).sum();
        sum / (self.points.len() as f64 * h)
    }

    pub fn cdf_at(&self, x: f64) -> f64 {
        let h = self.bandwidth;
        let sum: f64 = self.points.iter().map(|&p| normal_cdf((x - p) / h)).sum();
        sum / self.points.len() as f64
    }

    /// Distribution function of [`smoothed_draw`](Self::smoothed_draw),
    /// which differs from [`cdf_at`](Self::cdf_at) by the variance-correcting
    /// shrink when that is switched on.
    pub fn draw_cdf(&self, x: f64) -> f64 {
        if self.variance_corrected {
            self.cdf_at(self.sample_mean + (x - self.sample_mean) / self.shrink)
        } else {
            self.cdf_at(x)
        }
    }

    /// One smoothed-bootstrap draw.
    #[inline]
    pub fn smoothed_draw<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let i = rng.random_range(0..self.points.len());
        let z: f64 = StandardNormal.sample(rng);
        let y = self.points[i] + self.bandwidth * z;
        if self.variance_corrected {
            self.sample_mean + (y - self.sample_mean) * self.shrink
        } else {
            y
        }
    }
}

impl Sampler for FittedDensity {
    #[inline]
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.smoothed_draw(rng)
    }
}

/// Plain (unsmoothed) bootstrap: draws data points uniformly with replacement.
#[derive(Debug, Clone, Copy)]
pub struct Resample<'a>(pub &'a [f64]);

impl Sampler for Resample<'_> {
    #[inline]
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        self.0[rng.random_range(0..self.0.len())]
    }
}
