//! Autoregressive prewhitening.
//!
//! An AR(r) model `x(i) - mu = sum_j a_j (x(i-j) - mu) + e(i)` is fitted by
//! Yule-Walker on the biased (divide-by-n) sample autocovariances, the order
//! is chosen by `AIC(r) = n ln(noise variance) + 2r`, and the one-step
//! residuals are what gets monitored.

use alloc::collections::VecDeque;
use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::distributions::Sampler;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum PrewhitenError {
    #[error("series too short: need more than {needed} values, got {got}")]
    TooShort { needed: usize, got: usize },
    #[error("autocovariance matrix is singular")]
    Singular,
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
    #[error("coefficients do not describe a stationary process")]
    NonStationary,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ArModel {
    pub mu: f64,
    /// `a_1 ..= a_r`.
    pub coeffs: Vec<f64>,
    pub noise_var: f64,
}

impl ArModel {
    pub fn new(mu: f64, coeffs: Vec<f64>, noise_var: f64) -> Result<Self, PrewhitenError> {
        if !(noise_var > 0.0 && noise_var.is_finite()) || !mu.is_finite() {
            return Err(PrewhitenError::Singular);
        }
        if let Some(i) = coeffs.iter().position(|a| !a.is_finite()) {
            return Err(PrewhitenError::NonFinite(i));
        }
        if !is_stationary(&coeffs) {
            return Err(PrewhitenError::NonStationary);
        }
        Ok(Self { mu, coeffs, noise_var })
    }

    pub fn order(&self) -> usize {
        self.coeffs.len()
    }

    /// `e(i)` given `x(i)` and the previous `r` values, most recent first.
    #[inline]
    fn innovation<'a>(&self, x: f64, recent: impl Iterator<Item = &'a f64>) -> f64 {
        let fit: f64 = self.coeffs.iter().zip(recent).map(|(a, y)| a * (y - self.mu)).sum();
        (x - self.mu) - fit
    }
}

/// Biased sample autocovariances at lags `0..=max_lag`, centred at the mean.
pub fn autocovariance(series: &[f64], max_lag: usize) -> Vec<f64> {
    let n = series.len();
    let mean = series.iter().sum::<f64>() / n as f64;
    (0..=max_lag)
        .map(|lag| {
            let s: f64 = (lag..n).map(|i| (series[i] - mean) * (series[i - lag] - mean)).sum();
            s / n as f64
        })
        .collect()
}

/// Levinson-Durbin recursion on `acov[0..=order]`. Returns the coefficients
/// and the innovation variance for every order `0..=order`.
pub fn levinson_durbin(acov: &[f64], order: usize) -> Result<Vec<(Vec<f64>, f64)>, PrewhitenError> {
    if acov.len() <= order {
        return Err(PrewhitenError::TooShort { needed: order, got: acov.len() });
    }
    if !(acov[0] > 0.0) {
        return Err(PrewhitenError::Singular);
    }
    let mut out = Vec::with_capacity(order + 1);
    let mut phi: Vec<f64> = Vec::new();
    let mut var = acov[0];
    out.push((phi.clone(), var));
    for m in 1..=order {
        let num = acov[m] - phi.iter().enumerate().map(|(j, a)| a * acov[m - 1 - j]).sum::<f64>();
        let kappa = num / var;
        if !(kappa.abs() < 1.0) {
            return Err(PrewhitenError::Singular);
        }
        let prev = phi.clone();
        for j in 0..m - 1 {
            phi[j] = prev[j] - kappa * prev[m - 2 - j];
        }
        phi.push(kappa);
        var *= 1.0 - kappa * kappa;
        if !(var > 0.0) {
            return Err(PrewhitenError::Singular);
        }
        out.push((phi.clone(), var));
    }
    Ok(out)
}

/// Step-down test: every reflection coefficient lies strictly inside (-1, 1).
pub fn is_stationary(coeffs: &[f64]) -> bool {
    let mut a = coeffs.to_vec();
    while let Some(&kappa) = a.last() {
        if !(kappa.abs() < 1.0) {
            return false;
        }
        let m = a.len();
        let denom = 1.0 - kappa * kappa;
        let prev = a.clone();
        a.pop();
        for j in 0..m - 1 {
            a[j] = (prev[j] + kappa * prev[m - 2 - j]) / denom;
        }
    }
    true
}

fn check_series(series: &[f64], order: usize) -> Result<(), PrewhitenError> {
    let needed = (10 * order).max(1);
    if series.len() <= needed {
        return Err(PrewhitenError::TooShort { needed, got: series.len() });
    }
    if let Some(i) = series.iter().position(|x| !x.is_finite()) {
        return Err(PrewhitenError::NonFinite(i));
    }
    Ok(())
}

pub fn yule_walker_fit(series: &[f64], order: usize) -> Result<ArModel, PrewhitenError> {
    check_series(series, order)?;
    let acov = autocovariance(series, order);
    let (coeffs, var) = levinson_durbin(&acov, order)?.pop().expect("order + 1 entries");
    let mu = series.iter().sum::<f64>() / series.len() as f64;
    ArModel::new(mu, coeffs, var)
}

/// Order in `0..=max_order` minimizing `n ln(noise variance) + 2r`; ties go
/// to the smaller order.
pub fn select_order_aic(series: &[f64], max_order: usize) -> Result<usize, PrewhitenError> {
    check_series(series, max_order)?;
    let n = series.len() as f64;
    let fits = levinson_durbin(&autocovariance(series, max_order), max_order)?;
    let mut best = (0, f64::INFINITY);
    for (r, (_, var)) in fits.iter().enumerate() {
        let aic = n * libm::log(*var) + 2.0 * r as f64;
        if aic < best.1 {
            best = (r, aic);
        }
    }
    Ok(best.0)
}

/// [`select_order_aic`] followed by [`yule_walker_fit`] at the chosen order.
pub fn fit_aic(series: &[f64], max_order: usize) -> Result<ArModel, PrewhitenError> {
    yule_walker_fit(series, select_order_aic(series, max_order)?)
}

/// One-step residuals for `i > r`; the first `r` values are dropped.
pub fn residuals(series: &[f64], model: &ArModel) -> Result<Vec<f64>, PrewhitenError> {
    let r = model.order();
    if series.len() <= r {
        return Err(PrewhitenError::TooShort { needed: r, got: series.len() });
    }
    Ok((r..series.len())
        .map(|i| model.innovation(series[i], series[..i].iter().rev()))
        .collect())
}

/// Streaming form of [`residuals`]: yields nothing until `r` values of
/// history have been seen.
#[derive(Debug, Clone)]
pub struct ResidualFilter {
    model: ArModel,
    recent: VecDeque<f64>,
}

impl ResidualFilter {
    pub fn new(model: ArModel) -> Self {
        let cap = model.order();
        Self { model, recent: VecDeque::with_capacity(cap) }
    }

    /// Pre-loads history, oldest first; only the last `r` values are kept.
    pub fn with_history(model: ArModel, history: &[f64]) -> Self {
        let mut f = Self::new(model);
        for &x in history {
            f.remember(x);
        }
        f
    }

    fn remember(&mut self, x: f64) {
        let r = self.model.order();
        if r == 0 {
            return;
        }
        if self.recent.len() == r {
            self.recent.pop_back();
        }
        self.recent.push_front(x);
    }

    pub fn push(&mut self, x: f64) -> Option<f64> {
        let out = (self.recent.len() == self.model.order())
            .then(|| self.model.innovation(x, self.recent.iter()));
        self.remember(x);
        out
    }

    pub fn model(&self) -> &ArModel {
        &self.model
    }
}

/// `n` values of the AR process driven by `innovations` scaled to the
/// model's noise variance, after `burn_in` discarded steps.
pub fn simulate_ar<S, R>(model: &ArModel, innovations: &S, n: usize, burn_in: usize, rng: &mut R) -> Vec<f64>
where
    S: Sampler + ?Sized,
    R: Rng + ?Sized,
{
    let sd = libm::sqrt(model.noise_var);
    let r = model.order();
    let mut centred: VecDeque<f64> = core::iter::repeat_n(0.0, r).collect();
    let mut out = Vec::with_capacity(n);
    for step in 0..burn_in + n {
        let ar: f64 = model.coeffs.iter().zip(centred.iter()).map(|(a, y)| a * y).sum();
        let y = ar + sd * innovations.sample(rng);
        if r > 0 {
            centred.pop_back();
            centred.push_front(y);
        }
        if step >= burn_in {
            out.push(model.mu + y);
        }
    }
    out
}

/// Three process models shaped like those of a multi-variable industrial
/// series: orders 3, 2 and 1 with unit noise variance.
pub fn example_ar_models() -> [ArModel; 3] {
    [
        ArModel { mu: 0.63, coeffs: alloc::vec![0.07, 0.12, 0.28], noise_var: 1.0 },
        ArModel { mu: 24.81, coeffs: alloc::vec![0.30, 0.24], noise_var: 1.0 },
        ArModel { mu: 12.97, coeffs: alloc::vec![0.55], noise_var: 1.0 },
    ]
}
