//! Comparison charts: the classical constant-limit CUSUM and the
//! within-group signed-rank CUSUM.

use alloc::vec::Vec;

use rand_distr::{Distribution, StandardNormal};
use thiserror::Error;

use crate::cusum::{run_length, CusumError, LimitSchedule, RunOutcome};
use crate::rng::{stream_rng, tag};

#[derive(Debug, Clone, PartialEq, Error)]
pub enum BaselineError {
    #[error("invalid parameters: {0}")]
    InvalidParams(&'static str),
    #[error("could not bracket ARL_0 = {arl0}: run length {rl} at h = {h}")]
    BracketFailure { arl0: f64, h: f64, rl: f64 },
    #[error(transparent)]
    Cusum(#[from] CusumError),
}

/// Constant-limit CUSUM applied to `(x - mu) / sigma`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ClassicalParams {
    pub k: f64,
    pub h: f64,
    pub mu: f64,
    pub sigma: f64,
}

impl ClassicalParams {
    pub fn new(k: f64, h: f64, mu: f64, sigma: f64) -> Result<Self, BaselineError> {
        if !(k >= 0.0 && k.is_finite()) {
            return Err(BaselineError::InvalidParams("k must be finite and non-negative"));
        }
        if !(h > 0.0) || !(sigma > 0.0 && sigma.is_finite()) || !mu.is_finite() {
            return Err(BaselineError::InvalidParams("need h > 0, sigma > 0 and finite mu"));
        }
        Ok(Self { k, h, mu, sigma })
    }

    /// Known standard normal in-control distribution.
    pub fn standard(k: f64, h: f64) -> Result<Self, BaselineError> {
        Self::new(k, h, 0.0, 1.0)
    }

    #[inline]
    pub fn standardize(&self, x: f64) -> f64 {
        (x - self.mu) / self.sigma
    }

    pub fn schedule(&self) -> LimitSchedule {
        LimitSchedule::constant(self.k, self.h).expect("validated parameters")
    }
}

pub fn classical_run<I>(stream: I, params: &ClassicalParams, cap: u64) -> Result<RunOutcome, CusumError>
where
    I: IntoIterator<Item = f64>,
{
    run_length(stream.into_iter().map(|x| params.standardize(x)), &params.schedule(), cap)
}

/// Limits giving an in-control ARL of 200 under N(0, 1), keyed by `k`.
/// Each solves the run-length integral equation of the chart to 1e-10.
pub const GOLDEN_CLASSICAL_H: [(f64, f64); 3] = [
    (0.0, 12.976_941_307_852_26),
    (0.25, 5.597_424_514_704_293),
    (0.5, 3.502_037_095_303_786),
];

/// Frozen limit for `(k, arl0)` if one is tabulated.
pub fn golden_classical_h(k: f64, arl0: f64) -> Option<f64> {
    if arl0 != 200.0 {
        return None;
    }
    GOLDEN_CLASSICAL_H
        .iter()
        .find(|(gk, _)| (gk - k).abs() < 1e-12)
        .map(|&(_, h)| h)
}

fn normal_arl(k: f64, h: f64, reps: usize, cap: u64, seed: u64) -> f64 {
    let mut total = 0u64;
    for i in 0..reps {
        let mut rng = stream_rng(seed, &[tag::CLASSICAL, i as u64]);
        let mut c = 0.0f64;
        let mut n = 0u64;
        while n < cap {
            let x: f64 = StandardNormal.sample(&mut rng);
            c = (c + x - k).max(0.0);
            n += 1;
            if c > h {
                break;
            }
        }
        total += n;
    }
    total as f64 / reps as f64
}

/// Monte Carlo bisection for the limit that gives the classical chart an
/// in-control ARL of `arl0` under N(0, 1). All evaluations share the same
/// `mc_reps` streams, so the simulated ARL is monotone in `h`.
pub fn classical_h_for_arl(k: f64, arl0: f64, mc_reps: usize, seed: u64) -> Result<f64, BaselineError> {
    if !(arl0 > 1.0 && arl0.is_finite()) {
        return Err(BaselineError::InvalidParams("arl0 must exceed 1"));
    }
    if !(k >= 0.0 && k.is_finite()) || mc_reps < 2 {
        return Err(BaselineError::InvalidParams("need k >= 0 and at least 2 replications"));
    }
    let cap = libm::ceil(50.0 * arl0) as u64;
    let arl = |h: f64| normal_arl(k, h, mc_reps, cap, seed);

    let mut lo = 0.0;
    let mut hi = 8.0;
    let mut rl_hi = arl(hi);
    let mut widen = 0;
    while rl_hi <= arl0 {
        if widen == 5 {
            return Err(BaselineError::BracketFailure { arl0, h: hi, rl: rl_hi });
        }
        lo = hi;
        hi *= 2.0;
        rl_hi = arl(hi);
        widen += 1;
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let rl = arl(mid);
        if (rl - arl0).abs() / arl0 < 0.002 || hi - lo < 1e-9 {
            return Ok(mid);
        }
        if rl < arl0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `(g, k, h)` of the signed-rank CUSUM: block size, allowance on the block
/// statistic and decision limit.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct NpCusumParams {
    pub g: usize,
    pub k: f64,
    pub h: f64,
}

/// `(10, 13, 24)`.
pub const NP1: NpCusumParams = NpCusumParams { g: 10, k: 13.0, h: 24.0 };
/// `(10, 21, 14)`.
pub const NP2: NpCusumParams = NpCusumParams { g: 10, k: 21.0, h: 14.0 };

impl NpCusumParams {
    pub fn new(g: usize, k: f64, h: f64) -> Result<Self, BaselineError> {
        if g < 2 {
            return Err(BaselineError::InvalidParams("block size must be at least 2"));
        }
        if k.is_nan() || h.is_nan() {
            return Err(BaselineError::InvalidParams("k and h must not be NaN"));
        }
        Ok(Self { g, k, h })
    }
}

/// `sum sign(x_j) * rank(|x_j|)` with average ranks for ties.
pub fn signed_rank_block(block: &[f64]) -> f64 {
    let mut order: Vec<usize> = (0..block.len()).collect();
    order.sort_by(|&a, &b| block[a].abs().total_cmp(&block[b].abs()));
    let mut v = 0.0;
    let mut i = 0;
    while i < order.len() {
        let mut j = i + 1;
        while j < order.len() && block[order[j]].abs() == block[order[i]].abs() {
            j += 1;
        }
        // Positions i..j share the mean of ranks i+1..=j.
        let rank = (i + j + 1) as f64 / 2.0;
        for &idx in &order[i..j] {
            let x = block[idx];
            if x > 0.0 {
                v += rank;
            } else if x < 0.0 {
                v -= rank;
            }
        }
        i = j;
    }
    v
}

/// Signed-rank CUSUM over consecutive blocks of `g` observations. The run
/// length is in observations (`g` times the signalling block index); `cap`
/// is in observations too and is rounded down to whole blocks.
pub fn np_cusum_run<I>(stream: I, params: &NpCusumParams, cap: u64) -> Result<RunOutcome, CusumError>
where
    I: IntoIterator<Item = f64>,
{
    let g = params.g as u64;
    if cap < g {
        return Err(CusumError::ZeroCap);
    }
    let max_blocks = cap / g;
    let mut stream = stream.into_iter();
    let mut block = Vec::with_capacity(params.g);
    let mut s = 0.0f64;
    let mut seen = 0u64;
    for b in 1..=max_blocks {
        block.clear();
        for _ in 0..params.g {
            let x = stream.next().ok_or(CusumError::StreamEnded { observed: seen })?;
            seen += 1;
            if !x.is_finite() {
                return Err(CusumError::NonFinite { step: seen });
            }
            block.push(x);
        }
        s = (s + signed_rank_block(&block) - params.k).max(0.0);
        if s > params.h {
            return Ok(RunOutcome { length: b * g, truncated: false });
        }
    }
    Ok(RunOutcome { length: max_blocks * g, truncated: true })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn signed_rank_examples() {
        assert_eq!(signed_rank_block(&[1.2, -0.5, 0.3]), 2.0);
        let all_pos: Vec<f64> = (1..=10).map(|i| i as f64 * 0.37).collect();
        assert_eq!(signed_rank_block(&all_pos), 55.0);
        // |.| ties at 1.0 share rank 2.5.
        assert_eq!(signed_rank_block(&[1.0, -1.0, 0.1, 3.0]), 1.0 + 2.5 - 2.5 + 4.0);
        assert_eq!(signed_rank_block(&[0.0, 2.0]), 2.0);
    }

    #[test]
    fn golden_lookup() {
        assert_eq!(golden_classical_h(0.25, 200.0), Some(5.597_424_514_704_293));
        assert_eq!(golden_classical_h(0.3, 200.0), None);
        assert_eq!(golden_classical_h(0.25, 370.0), None);
    }

    #[test]
    fn classical_h_rejects_small_arl() {
        assert!(classical_h_for_arl(0.5, 1.0, 100, 0).is_err());
    }

    #[test]
    fn classical_h_near_golden() {
        let h = classical_h_for_arl(0.5, 200.0, 4000, 11).unwrap();
        assert!((h - 3.502).abs() < 0.15, "h = {h}");
        let h25 = classical_h_for_arl(0.25, 200.0, 4000, 11).unwrap();
        assert!(h25 > h);
    }

    #[test]
    fn np_run_units_and_limits() {
        let params = NpCusumParams::new(3, 0.0, f64::INFINITY).unwrap();
        let out = np_cusum_run(core::iter::repeat(1.0), &params, 30).unwrap();
        assert_eq!(out, RunOutcome { length: 30, truncated: true });

        // h below the smallest positive increment: signal at the first
        // block with V > 0.
        let params = NpCusumParams::new(3, 0.0, 0.25).unwrap();
        let xs = [-1.0, -2.0, -3.0, 1.0, -2.0, 3.0];
        let out = np_cusum_run(xs, &params, 100).unwrap();
        assert_eq!(out, RunOutcome { length: 6, truncated: false });

        assert!(NpCusumParams::new(1, 0.0, 1.0).is_err());
        assert!(matches!(
            np_cusum_run([1.0, 2.0], &NP1, 100),
            Err(CusumError::StreamEnded { observed: 2 })
        ));
    }

    #[test]
    fn classical_run_standardizes() {
        let p = ClassicalParams::new(0.5, 1.0, 10.0, 2.0).unwrap();
        // (13 - 10) / 2 - 0.5 = 1.0, not above h; second step reaches 2.0.
        let out = classical_run([13.0, 13.0, 13.0], &p, 10).unwrap();
        assert_eq!(out.length, 2);
        assert!(ClassicalParams::new(0.5, 1.0, 0.0, 0.0).is_err());
    }
}
