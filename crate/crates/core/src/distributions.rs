//! In-control distribution models used as ground truth in simulations.
//!
//! Three shapes are provided, all standardized to mean 0 and variance 1:
//! the standard normal, and a right- and a left-skewed two-sided exponential
//! mixture. The right-skewed mixture, before standardization, has density
//! `(1/6) exp(-x/3)` for `x >= 0` and `(1/2) exp(x)` for `x < 0`; the
//! left-skewed one is its mirror image.

use alloc::vec::Vec;

use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::rng::{stream_rng, SimRng};
use crate::stats::{normal_cdf, normal_pdf};

/// Anything that produces i.i.d. in-control draws.
pub trait Sampler {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64;
}

impl<S: Sampler + ?Sized> Sampler for &S {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        (**self).sample(rng)
    }
}

#[derive(Debug, Clone, PartialEq, Error)]
pub enum DistributionError {
    #[error("{0:?} is already standardized")]
    AlreadyStandard(DistributionKind),
    #[error("probability {0} is outside (0, 1)")]
    BadProbability(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum DistributionKind {
    StandardNormal,
    RightSkewMix,
    LeftSkewMix,
}

impl DistributionKind {
    pub const ALL: [DistributionKind; 3] = [
        DistributionKind::StandardNormal,
        DistributionKind::RightSkewMix,
        DistributionKind::LeftSkewMix,
    ];
}

/// Mean and standard deviation of the right-skewed mixture before
/// standardization: an equal mixture of an exponential with scale 3 on the
/// positive axis and a negated unit exponential on the negative axis.
const RIGHT_MEAN: f64 = 1.0;
const RIGHT_SD: f64 = 3.0;

/// Returns the mean and standard deviation of the unstandardized mixture.
pub fn standardization_constants(kind: DistributionKind) -> Result<(f64, f64), DistributionError> {
    match kind {
        DistributionKind::StandardNormal => Err(DistributionError::AlreadyStandard(kind)),
        DistributionKind::RightSkewMix => Ok((RIGHT_MEAN, RIGHT_SD)),
        DistributionKind::LeftSkewMix => Ok((-RIGHT_MEAN, RIGHT_SD)),
    }
}

/// Density of the unstandardized mixture for the skewed kinds, or of the
/// standard normal.
pub fn raw_density(kind: DistributionKind, x: f64) -> f64 {
    match kind {
        DistributionKind::StandardNormal => normal_pdf(x),
        DistributionKind::RightSkewMix => {
            if x >= 0.0 {
                libm::exp(-x / 3.0) / 6.0
            } else {
                0.5 * libm::exp(x)
            }
        }
        DistributionKind::LeftSkewMix => {
            if x < 0.0 {
                libm::exp(x / 3.0) / 6.0
            } else {
                0.5 * libm::exp(-x)
            }
        }
    }
}

fn raw_cdf(kind: DistributionKind, x: f64) -> f64 {
    match kind {
        DistributionKind::StandardNormal => normal_cdf(x),
        DistributionKind::RightSkewMix => {
            if x >= 0.0 {
                1.0 - 0.5 * libm::exp(-x / 3.0)
            } else {
                0.5 * libm::exp(x)
            }
        }
        DistributionKind::LeftSkewMix => 1.0 - raw_cdf(DistributionKind::RightSkewMix, -x),
    }
}

/// A standardized in-control shape plus a location shift.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DistributionModel {
    pub kind: DistributionKind,
    pub shift: f64,
}

impl DistributionModel {
    pub fn new(kind: DistributionKind, shift: f64) -> Self {
        Self { kind, shift }
    }

    pub fn in_control(kind: DistributionKind) -> Self {
        Self { kind, shift: 0.0 }
    }

    pub fn shifted(self, delta: f64) -> Self {
        Self { shift: self.shift + delta, ..self }
    }

    /// Maps a standardized point back to the raw mixture scale.
    fn to_raw(&self, x: f64) -> (f64, f64) {
        match standardization_constants(self.kind) {
            Ok((mu, sd)) => (mu + sd * (x - self.shift), sd),
            Err(_) => (x - self.shift, 1.0),
        }
    }

    pub fn density_at(&self, x: f64) -> f64 {
        let (raw, sd) = self.to_raw(x);
        sd * raw_density(self.kind, raw)
    }

    pub fn cdf_at(&self, x: f64) -> f64 {
        let (raw, _) = self.to_raw(x);
        raw_cdf(self.kind, raw)
    }

    /// Inverse of [`cdf_at`](Self::cdf_at) by bisection.
    pub fn quantile(&self, p: f64) -> Result<f64, DistributionError> {
        if !(p > 0.0 && p < 1.0) {
            return Err(DistributionError::BadProbability(p));
        }
        let (mut lo, mut hi) = (self.shift - 60.0, self.shift + 60.0);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.cdf_at(mid) < p {
                lo = mid;
            } else {
                hi = mid;
            }
        }
        Ok(0.5 * (lo + hi))
    }

    /// `P(X > x)`.
    pub fn exceedance(&self, x: f64) -> f64 {
        1.0 - self.cdf_at(x)
    }
}

impl Sampler for DistributionModel {
    fn sample<R: Rng + ?Sized>(&self, rng: &mut R) -> f64 {
        let standard = match self.kind {
            DistributionKind::StandardNormal => StandardNormal.sample(rng),
            DistributionKind::RightSkewMix => right_skew_standardized(rng),
            DistributionKind::LeftSkewMix => -right_skew_standardized(rng),
        };
        standard + self.shift
    }
}

fn right_skew_standardized<R: Rng + ?Sized>(rng: &mut R) -> f64 {
    let positive_branch = rng.random::<f64>() < 0.5;
    // 1 - U lies in (0, 1], so the logarithm is finite.
    let e = -libm::log(1.0 - rng.random::<f64>());
    let raw = if positive_branch { 3.0 * e } else { -e };
    (raw - RIGHT_MEAN) / RIGHT_SD
}

/// Where the process changes from `F` to `G`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ShiftSpec {
    pub delta: f64,
    /// Number of leading observations drawn from the in-control model.
    pub change_point: usize,
}

impl ShiftSpec {
    pub fn none() -> Self {
        Self { delta: 0.0, change_point: 0 }
    }

    pub fn immediate(delta: f64) -> Self {
        Self { delta, change_point: 0 }
    }
}

/// Endless Phase-II observation source: the first `change_point` values come
/// from `model`, the rest from `model` shifted by `delta`.
#[derive(Debug, Clone)]
pub struct ObservationStream {
    model: DistributionModel,
    spec: ShiftSpec,
    emitted: usize,
    rng: SimRng,
}

impl ObservationStream {
    pub fn new(model: DistributionModel, spec: ShiftSpec, rng: SimRng) -> Self {
        Self { model, spec, emitted: 0, rng }
    }
}

impl Iterator for ObservationStream {
    type Item = f64;

    fn next(&mut self) -> Option<f64> {
        let x = self.model.sample(&mut self.rng);
        let x = if self.emitted >= self.spec.change_point { x + self.spec.delta } else { x };
        self.emitted += 1;
        Some(x)
    }
}

/// Draws `length` observations under `spec`, reproducibly from `seed`.
pub fn sample_stream(
    model: DistributionModel,
    spec: ShiftSpec,
    length: usize,
    seed: u64,
) -> Vec<f64> {
    ObservationStream::new(model, spec, stream_rng(seed, &[]))
        .take(length)
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn simpson<F: Fn(f64) -> f64>(f: F, a: f64, b: f64, n: usize) -> f64 {
        let h = (b - a) / n as f64;
        let mut s = f(a) + f(b);
        for i in 1..n {
            let w = if i % 2 == 1 { 4.0 } else { 2.0 };
            s += w * f(a + i as f64 * h);
        }
        s * h / 3.0
    }

    // Piecewise Simpson with a break at the kink of the mixture. The ends are
    // nudged off the kink so each piece sees its own one-sided limit.
    fn integrate<F: Fn(f64) -> f64 + Copy>(f: F, kink: f64) -> f64 {
        simpson(f, -80.0, kink - 1e-12, 200_000) + simpson(f, kink + 1e-12, 80.0, 200_000)
    }

    #[test]
    fn raw_mixture_constants_by_quadrature() {
        for kind in [DistributionKind::RightSkewMix, DistributionKind::LeftSkewMix] {
            let f = |x: f64| raw_density(kind, x);
            let mass = integrate(f, 0.0);
            let m1 = integrate(|x| x * f(x), 0.0);
            let m2 = integrate(|x| x * x * f(x), 0.0);
            let (mu, sd) = standardization_constants(kind).unwrap();
            assert!((mass - 1.0).abs() < 1e-9);
            assert!((m1 - mu).abs() < 1e-8, "{kind:?}: mean {m1}");
            assert!((libm::sqrt(m2 - m1 * m1) - sd).abs() < 1e-8);
        }
        assert!(standardization_constants(DistributionKind::StandardNormal).is_err());
    }

    #[test]
    fn raw_density_at_the_kink() {
        let k = DistributionKind::RightSkewMix;
        assert!((raw_density(k, 0.0) - 1.0 / 6.0).abs() < 1e-15);
        assert!((raw_density(k, -1e-300) - 0.5).abs() < 1e-15);
        assert!((raw_density(DistributionKind::StandardNormal, 0.0) - 0.398_942_280_401_432_7).abs() < 1e-15);
    }

    #[test]
    fn standardized_moments_by_quadrature() {
        for kind in DistributionKind::ALL {
            let model = DistributionModel::in_control(kind);
            let kink = match kind {
                DistributionKind::RightSkewMix => -1.0 / 3.0,
                DistributionKind::LeftSkewMix => 1.0 / 3.0,
                DistributionKind::StandardNormal => 0.0,
            };
            let f = |x: f64| model.density_at(x);
            let mass = integrate(f, kink);
            assert!((mass - 1.0).abs() < 1e-6, "{kind:?} {mass}");
            assert!(integrate(|x| x * f(x), kink).abs() < 1e-6);
            assert!((integrate(|x| x * x * f(x), kink) - 1.0).abs() < 1e-6);
        }
    }

    #[test]
    fn mirror_images() {
        let r = DistributionModel::in_control(DistributionKind::RightSkewMix);
        let l = DistributionModel::in_control(DistributionKind::LeftSkewMix);
        for i in -400..=400 {
            let x = i as f64 * 0.0173;
            assert!((l.density_at(x) - r.density_at(-x)).abs() < 1e-14);
        }
    }

    #[test]
    fn quantile_inverts_cdf() {
        for kind in DistributionKind::ALL {
            let m = DistributionModel::new(kind, 0.3);
            for p in [0.01, 0.25, 0.5, 0.75, 0.99] {
                let q = m.quantile(p).unwrap();
                assert!((m.cdf_at(q) - p).abs() < 1e-12);
            }
        }
        let m = DistributionModel::in_control(DistributionKind::StandardNormal);
        assert!(m.quantile(1.0).is_err());
    }

    #[test]
    fn change_point_respected() {
        let model = DistributionModel::in_control(DistributionKind::StandardNormal);
        let a = sample_stream(model, ShiftSpec { delta: 100.0, change_point: 3 }, 6, 9);
        let b = sample_stream(model, ShiftSpec::none(), 6, 9);
        for i in 0..3 {
            assert_eq!(a[i], b[i]);
        }
        for i in 3..6 {
            assert!((a[i] - b[i] - 100.0).abs() < 1e-9);
        }
    }
}
