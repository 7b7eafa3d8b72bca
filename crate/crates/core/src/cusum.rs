//! Upper CUSUM with sprint-length tracking and sprint-indexed control limits.
//!
//! The chart keeps two numbers: the CUSUM value `C_n = max(C_{n-1} + X_n - k, 0)`
//! and the sprint length `T_n`, the number of steps since `C` was last zero.
//! A [`LimitSchedule`] holds one limit per sprint length up to `j_max` and a
//! tail limit for longer sprints; the chart signals when `C_n` strictly
//! exceeds the limit for the current `T_n`.

use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::distributions::Sampler;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CusumError {
    #[error("non-finite observation at step {step}")]
    NonFinite { step: u64 },
    #[error("stream ended after {observed} observations without a signal")]
    StreamEnded { observed: u64 },
    #[error("invalid CUSUM state (c = {c}, t = {t}, n = {n})")]
    InvalidState { c: f64, t: u64, n: u64 },
    #[error("invalid limit schedule: {0}")]
    InvalidSchedule(&'static str),
    #[error("need at least 2 run lengths, got {0}")]
    TooFewRuns(usize),
    #[error("run-length cap must be at least 1")]
    ZeroCap,
}

/// `(C_n, T_n)` together with the number of observations seen.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct CusumState {
    c: f64,
    t: u64,
    n: u64,
}

impl CusumState {
    pub fn new() -> Self {
        Self::default()
    }

    /// Builds a state from its parts, checking `c >= 0`, `c = 0 <=> t = 0`
    /// and `t <= n`.
    pub fn from_parts(c: f64, t: u64, n: u64) -> Result<Self, CusumError> {
        let ok = c.is_finite() && c >= 0.0 && ((c == 0.0) == (t == 0)) && t <= n;
        if ok {
            Ok(Self { c, t, n })
        } else {
            Err(CusumError::InvalidState { c, t, n })
        }
    }

    pub fn c(&self) -> f64 {
        self.c
    }

    /// Sprint length.
    pub fn t(&self) -> u64 {
        self.t
    }

    pub fn n(&self) -> u64 {
        self.n
    }

    /// In-place update without input validation.
    #[inline]
    pub fn update(&mut self, x: f64, k: f64) {
        let c = self.c + x - k;
        if c > 0.0 {
            self.c = c;
            self.t += 1;
        } else {
            self.c = 0.0;
            self.t = 0;
        }
        self.n += 1;
    }

    /// Back to `(0, 0)`, keeping the step counter.
    pub fn restart(&mut self) {
        self.c = 0.0;
        self.t = 0;
    }
}

/// One CUSUM step; rejects non-finite observations.
pub fn cusum_step(state: CusumState, x: f64, k: f64) -> Result<CusumState, CusumError> {
    if !x.is_finite() {
        return Err(CusumError::NonFinite { step: state.n + 1 });
    }
    let mut next = state;
    next.update(x, k);
    Ok(next)
}

/// Allowance plus sprint-length-indexed control limits.
#[derive(Debug, Clone, PartialEq)]
pub struct LimitSchedule {
    k: f64,
    limits: Vec<f64>,
    h_star: f64,
}

impl LimitSchedule {
    pub fn new(k: f64, limits: Vec<f64>, h_star: f64) -> Result<Self, CusumError> {
        if !k.is_finite() {
            return Err(CusumError::InvalidSchedule("allowance must be finite"));
        }
        if limits.is_empty() {
            return Err(CusumError::InvalidSchedule("j_max must be at least 1"));
        }
        let positive = |h: f64| h > 0.0 && !h.is_nan();
        if !limits.iter().all(|&h| positive(h)) || !positive(h_star) {
            return Err(CusumError::InvalidSchedule("limits must be strictly positive"));
        }
        Ok(Self { k, limits, h_star })
    }

    /// A classical chart: the same limit for every sprint length.
    pub fn constant(k: f64, h: f64) -> Result<Self, CusumError> {
        Self::new(k, alloc::vec![h], h)
    }

    pub fn k(&self) -> f64 {
        self.k
    }

    pub fn j_max(&self) -> usize {
        self.limits.len()
    }

    /// `h_1 ..= h_{j_max}`.
    pub fn limits(&self) -> &[f64] {
        &self.limits
    }

    pub fn h_star(&self) -> f64 {
        self.h_star
    }

    /// Limit in force at sprint length `t`; `None` while the CUSUM is zero.
    #[inline]
    pub fn limit_for(&self, t: u64) -> Option<f64> {
        match t {
            0 => None,
            t if t as usize <= self.limits.len() => Some(self.limits[t as usize - 1]),
            _ => Some(self.h_star),
        }
    }

    /// Every limit multiplied by `factor` (which must be positive).
    pub fn scaled(&self, factor: f64) -> Result<Self, CusumError> {
        Self::new(
            self.k,
            self.limits.iter().map(|h| h * factor).collect(),
            self.h_star * factor,
        )
    }

    /// All limits followed by `h_star`.
    pub fn limit_vector(&self) -> impl Iterator<Item = f64> + '_ {
        self.limits.iter().copied().chain(core::iter::once(self.h_star))
    }
}

/// True iff the state lies strictly above the limit for its sprint length.
#[inline]
pub fn signal_check(state: &CusumState, schedule: &LimitSchedule) -> bool {
    match schedule.limit_for(state.t) {
        Some(h) => state.c > h,
        None => false,
    }
}

/// Outcome of one monitored run.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RunOutcome {
    pub length: u64,
    /// The run reached the cap without a signal.
    pub truncated: bool,
}

/// Runs the chart over `stream` until the first signal or until `cap`
/// observations have been seen.
pub fn run_length<I>(stream: I, schedule: &LimitSchedule, cap: u64) -> Result<RunOutcome, CusumError>
where
    I: IntoIterator<Item = f64>,
{
    if cap == 0 {
        return Err(CusumError::ZeroCap);
    }
    let mut state = CusumState::new();
    let mut stream = stream.into_iter();
    while state.n < cap {
        let Some(x) = stream.next() else {
            return Err(CusumError::StreamEnded { observed: state.n });
        };
        state = cusum_step(state, x, schedule.k)?;
        if signal_check(&state, schedule) {
            return Ok(RunOutcome { length: state.n, truncated: false });
        }
    }
    Ok(RunOutcome { length: cap, truncated: true })
}

/// [`run_length`] on fresh draws from `sampler`, mapping each draw through
/// `transform` first. The hot path of every simulation.
#[inline]
pub fn simulate_run_length<S, R, T>(
    sampler: &S,
    transform: T,
    schedule: &LimitSchedule,
    cap: u64,
    rng: &mut R,
) -> RunOutcome
where
    S: Sampler + ?Sized,
    R: Rng + ?Sized,
    T: Fn(f64) -> f64,
{
    let mut state = CusumState::new();
    while state.n < cap {
        state.update(transform(sampler.sample(rng)), schedule.k);
        if signal_check(&state, schedule) {
            return RunOutcome { length: state.n, truncated: false };
        }
    }
    RunOutcome { length: cap, truncated: true }
}

/// Mean run length with its standard error.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RunLengthSummary {
    pub mean: f64,
    /// Sample standard deviation over `sqrt(reps)`.
    pub se: f64,
    pub reps: usize,
    pub truncated: usize,
}

pub fn summarize_runs(run_lengths: &[u64]) -> Result<RunLengthSummary, CusumError> {
    let reps = run_lengths.len();
    if reps < 2 {
        return Err(CusumError::TooFewRuns(reps));
    }
    let n = reps as f64;
    let mean = run_lengths.iter().map(|&r| r as f64).sum::<f64>() / n;
    let ss = run_lengths
        .iter()
        .map(|&r| (r as f64 - mean) * (r as f64 - mean))
        .sum::<f64>();
    let se = libm::sqrt(ss / (n - 1.0)) / libm::sqrt(n);
    Ok(RunLengthSummary { mean, se, reps, truncated: 0 })
}

/// [`summarize_runs`] that also counts truncated runs.
pub fn summarize_outcomes(outcomes: &[RunOutcome]) -> Result<RunLengthSummary, CusumError> {
    let lengths: Vec<u64> = outcomes.iter().map(|o| o.length).collect();
    let mut summary = summarize_runs(&lengths)?;
    summary.truncated = outcomes.iter().filter(|o| o.truncated).count();
    Ok(summary)
}

#[cfg(test)]
mod tests {
    use super::*;
    use alloc::vec;

    fn st(c: f64, t: u64, n: u64) -> CusumState {
        CusumState::from_parts(c, t, n).unwrap()
    }

    #[test]
    fn step_examples() {
        assert_eq!(cusum_step(st(0.0, 0, 0), 0.3, 0.5).unwrap(), st(0.0, 0, 1));
        assert_eq!(cusum_step(st(0.0, 0, 0), 1.5, 0.5).unwrap(), st(1.0, 1, 1));
        assert_eq!(cusum_step(st(2.0, 4, 9), -3.0, 0.5).unwrap(), st(0.0, 0, 10));
        assert!(matches!(
            cusum_step(st(0.0, 0, 0), f64::NAN, 0.5),
            Err(CusumError::NonFinite { step: 1 })
        ));
    }

    #[test]
    fn state_invariants_enforced() {
        assert!(CusumState::from_parts(-1.0, 0, 0).is_err());
        assert!(CusumState::from_parts(1.0, 0, 3).is_err());
        assert!(CusumState::from_parts(0.0, 2, 3).is_err());
        assert!(CusumState::from_parts(1.0, 4, 3).is_err());
    }

    #[test]
    fn signal_examples() {
        let mut limits = vec![5.0; 50];
        limits[1] = 3.0;
        let sched = LimitSchedule::new(0.5, limits, 3.5).unwrap();
        assert!(!signal_check(&st(0.0, 0, 0), &sched));
        assert!(signal_check(&st(3.2, 2, 2), &sched));
        assert!(!signal_check(&st(3.2, 60, 60), &sched));
        assert!(!signal_check(&st(3.0, 2, 2), &sched), "ties are not signals");
    }

    #[test]
    fn schedule_validation() {
        assert!(LimitSchedule::new(0.5, vec![], 1.0).is_err());
        assert!(LimitSchedule::new(0.5, vec![1.0, 0.0], 1.0).is_err());
        assert!(LimitSchedule::new(0.5, vec![1.0], f64::NAN).is_err());
        let s = LimitSchedule::new(0.5, vec![1.0, 2.0], 3.0).unwrap();
        assert_eq!(s.limit_for(0), None);
        assert_eq!(s.limit_for(2), Some(2.0));
        assert_eq!(s.limit_for(3), Some(3.0));
    }

    #[test]
    fn run_length_examples() {
        let sched = LimitSchedule::new(0.5, vec![0.5; 10], 0.5).unwrap();
        let out = run_length(core::iter::repeat(1.5), &sched, 100).unwrap();
        assert_eq!(out, RunOutcome { length: 1, truncated: false });

        let out = run_length(core::iter::repeat(0.0), &sched, 250).unwrap();
        assert_eq!(out, RunOutcome { length: 250, truncated: true });

        assert_eq!(
            run_length([0.0, 0.0], &sched, 10),
            Err(CusumError::StreamEnded { observed: 2 })
        );
        assert_eq!(run_length([0.0], &sched, 0), Err(CusumError::ZeroCap));
    }

    #[test]
    fn summary_examples() {
        let s = summarize_runs(&[10, 10, 10]).unwrap();
        assert_eq!((s.mean, s.se), (10.0, 0.0));
        let s = summarize_runs(&[5, 15]).unwrap();
        assert!((s.mean - 10.0).abs() < 1e-12);
        assert!((s.se - 5.0).abs() < 1e-12);
        assert_eq!(summarize_runs(&[3]), Err(CusumError::TooFewRuns(1)));
    }
}
