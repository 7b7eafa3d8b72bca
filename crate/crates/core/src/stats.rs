//! Summary statistics and Kolmogorov–Smirnov tests.

use alloc::vec::Vec;
use core::f64::consts::{PI, SQRT_2};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum StatsError {
    #[error("need at least {needed} values, got {got}")]
    TooFewValues { needed: usize, got: usize },
    #[error("value {value} at index {index} is outside [0, 1]")]
    OutOfUnitInterval { index: usize, value: f64 },
    #[error("non-finite value at index {0}")]
    NonFinite(usize),
}

pub fn mean(xs: &[f64]) -> f64 {
    xs.iter().sum::<f64>() / xs.len() as f64
}

/// Sample variance with the `n - 1` divisor.
pub fn sample_variance(xs: &[f64]) -> f64 {
    let m = mean(xs);
    xs.iter().map(|x| (x - m) * (x - m)).sum::<f64>() / (xs.len() as f64 - 1.0)
}

pub fn sample_sd(xs: &[f64]) -> f64 {
    libm::sqrt(sample_variance(xs))
}

/// Quantile of already sorted data with linear interpolation between order
/// statistics (the "type 7" rule: position `(n - 1) p`).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    debug_assert!(!sorted.is_empty());
    let pos = (sorted.len() - 1) as f64 * p.clamp(0.0, 1.0);
    let lo = libm::floor(pos) as usize;
    let hi = (lo + 1).min(sorted.len() - 1);
    let frac = pos - lo as f64;
    sorted[lo] + frac * (sorted[hi] - sorted[lo])
}

/// First, second and third quartiles.
pub fn quartiles(xs: &[f64]) -> (f64, f64, f64) {
    let mut sorted = xs.to_vec();
    sorted.sort_by(f64::total_cmp);
    (
        quantile_sorted(&sorted, 0.25),
        quantile_sorted(&sorted, 0.5),
        quantile_sorted(&sorted, 0.75),
    )
}

pub fn normal_pdf(x: f64) -> f64 {
    libm::exp(-0.5 * x * x) / libm::sqrt(2.0 * PI)
}

pub fn normal_cdf(x: f64) -> f64 {
    0.5 * libm::erfc(-x / SQRT_2)
}

/// Survival function of the Kolmogorov distribution, `P(K > lambda)`.
pub fn kolmogorov_survival(lambda: f64) -> f64 {
    if lambda <= 0.0 {
        return 1.0;
    }
    if lambda < 1.18 {
        // Jacobi-theta form converges fast for small arguments.
        let base = -PI * PI / (8.0 * lambda * lambda);
        let mut cdf = 0.0;
        for j in 1..=8u32 {
            let odd = (2 * j - 1) as f64;
            cdf += libm::exp(odd * odd * base);
        }
        (1.0 - libm::sqrt(2.0 * PI) / lambda * cdf).clamp(0.0, 1.0)
    } else {
        let mut sum = 0.0;
        for j in 1..=100u32 {
            let term = libm::exp(-2.0 * (j * j) as f64 * lambda * lambda);
            sum += if j % 2 == 1 { term } else { -term };
            if term < 1e-17 {
                break;
            }
        }
        (2.0 * sum).clamp(0.0, 1.0)
    }
}

/// Asymptotic p-value for a KS distance `d` at effective sample size `ne`,
/// using Stephens' small-sample correction of the scaling factor.
fn ks_pvalue(d: f64, ne: f64) -> f64 {
    let root = libm::sqrt(ne);
    kolmogorov_survival((root + 0.12 + 0.11 / root) * d)
}

/// Result of a Kolmogorov–Smirnov test.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KsOutcome {
    /// Sup-distance between the two distribution functions.
    pub d: f64,
    pub p: f64,
}

fn sorted_finite(xs: &[f64]) -> Result<Vec<f64>, StatsError> {
    if let Some(i) = xs.iter().position(|x| !x.is_finite()) {
        return Err(StatsError::NonFinite(i));
    }
    let mut v = xs.to_vec();
    v.sort_by(f64::total_cmp);
    Ok(v)
}

/// Two-sample KS test.
pub fn ks_two_sample(a: &[f64], b: &[f64]) -> Result<KsOutcome, StatsError> {
    for s in [a, b] {
        if s.len() < 2 {
            return Err(StatsError::TooFewValues { needed: 2, got: s.len() });
        }
    }
    let a = sorted_finite(a)?;
    let b = sorted_finite(b)?;
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0usize, 0usize);
    let mut d: f64 = 0.0;
    while i < a.len() && j < b.len() {
        // Step past every copy of the smaller value in both samples so ties
        // are compared on equal footing.
        let x = a[i].min(b[j]);
        while i < a.len() && a[i] <= x {
            i += 1;
        }
        while j < b.len() && b[j] <= x {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    let ne = na * nb / (na + nb);
    Ok(KsOutcome { d, p: ks_pvalue(d, ne) })
}

/// One-sample KS test of `xs` against the continuous distribution function `cdf`.
pub fn ks_one_sample<F: Fn(f64) -> f64>(xs: &[f64], cdf: F) -> Result<KsOutcome, StatsError> {
    if xs.is_empty() {
        return Err(StatsError::TooFewValues { needed: 1, got: 0 });
    }
    let sorted = sorted_finite(xs)?;
    let n = sorted.len() as f64;
    let d = sorted
        .iter()
        .enumerate()
        .map(|(i, &x)| {
            let f = cdf(x);
            (f - i as f64 / n).max((i + 1) as f64 / n - f)
        })
        .fold(0.0, f64::max);
    Ok(KsOutcome { d, p: ks_pvalue(d, n) })
}

/// One-sample KS test of p-values against the uniform distribution on `[0, 1]`.
pub fn ks_uniform(pvals: &[f64]) -> Result<KsOutcome, StatsError> {
    if let Some((index, &value)) = pvals
        .iter()
        .enumerate()
        .find(|(_, v)| !(0.0..=1.0).contains(*v))
    {
        return Err(StatsError::OutOfUnitInterval { index, value });
    }
    ks_one_sample(pvals, |x| x.clamp(0.0, 1.0))
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    #[test]
    fn kolmogorov_branches_agree_at_switch() {
        let lo = kolmogorov_survival(1.18 - 1e-9);
        let hi = kolmogorov_survival(1.18 + 1e-9);
        assert!((lo - hi).abs() < 1e-8, "{lo} vs {hi}");
        // Tabulated critical value: P(K > 1.3581) = 0.05.
        assert!((kolmogorov_survival(1.3581) - 0.05).abs() < 1e-4);
        assert!((kolmogorov_survival(0.8276) - 0.5).abs() < 1e-3);
    }

    #[test]
    fn identical_samples() {
        let a = [0.3, -1.0, 2.5, 0.0, 4.0];
        let out = ks_two_sample(&a, &a).unwrap();
        assert_eq!(out.d, 0.0);
        assert_eq!(out.p, 1.0);
    }

    #[test]
    fn disjoint_supports() {
        let out = ks_two_sample(&[0.0, 0.0, 0.0], &[1.0, 1.0, 1.0]).unwrap();
        assert_eq!(out.d, 1.0);
    }

    #[test]
    fn ks_rejects_tiny_samples() {
        assert!(matches!(
            ks_two_sample(&[1.0], &[1.0, 2.0]),
            Err(StatsError::TooFewValues { .. })
        ));
    }

    #[test]
    fn uniform_grid_fits() {
        let n = 200;
        let grid: Vec<f64> = (1..=n).map(|i| i as f64 / (n + 1) as f64).collect();
        let out = ks_uniform(&grid).unwrap();
        assert!(out.d < 0.01);
        assert!(out.p > 0.99);
    }

    #[test]
    fn point_mass_is_not_uniform() {
        let out = ks_uniform(&vec![0.5; 500]).unwrap();
        assert!((out.d - 0.5).abs() < 1e-12);
        assert!(out.p < 1e-10);
    }

    #[test]
    fn uniform_rejects_out_of_range() {
        assert_eq!(
            ks_uniform(&[0.1, 1.5]),
            Err(StatsError::OutOfUnitInterval { index: 1, value: 1.5 })
        );
    }

    #[test]
    fn type7_quantiles() {
        let xs = [4.0, 1.0, 3.0, 2.0, 5.0];
        assert_eq!(quartiles(&xs), (2.0, 3.0, 4.0));
        assert_eq!(quantile_sorted(&[1.0, 2.0], 0.5), 1.5);
    }
}
