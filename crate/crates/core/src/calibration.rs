//! Bootstrap calibration of sprint-length-indexed CUSUM limits.
//!
//! Calibration runs in three stages on standardized Phase-I data:
//!
//! 1. **Allowance.** `k` is found by bisection between the first and third
//!    quartiles so that the mean length of the first sprint of a bootstrap
//!    CUSUM path hits a target. That sprint starts at the first observation
//!    and has length 0 when the first step already returns to zero.
//! 2. **Preliminary limits.** For every sprint length `j <= j_max + 1` the
//!    conditional law of `C_n` given `T_n = j` is sampled from the fitted
//!    density. `M_j` is the `ceil(B (1 - alpha))`-th order statistic, where
//!    `alpha = 1 / (p^2 ARL_0)` and `p` is the share of Phase-I data above
//!    `k`. The `j_max + 1` sample gives the tail limit `M*`.
//! 3. **Tuning.** The whole limit vector is rescaled by false position until
//!    the simulated in-control ARL is within `epsilon_tilde` of `ARL_0`. The
//!    first bracket is `(1 +/- epsilon) M`. Every evaluation reuses the same
//!    `N_1` random streams, so the simulated ARL is monotone in the limits.

use alloc::vec::Vec;

use rand::Rng;
use thiserror::Error;

use crate::cusum::{simulate_run_length, CusumError, LimitSchedule};
use crate::density::{DensityError, FittedDensity, Resample, Standardization};
use crate::distributions::{DistributionError, DistributionModel, Sampler};
use crate::rng::{derive_seed, stream_rng, tag};
use crate::stats::quartiles;

/// Smallest Phase-I sample [`calibrate`] accepts.
pub const MIN_PHASE_ONE: usize = 100;

#[derive(Debug, Clone, PartialEq, Error)]
pub enum CalibrationError {
    #[error("invalid configuration: {0}")]
    InvalidConfig(&'static str),
    #[error("insufficient Phase-I data: need at least {needed} observations, got {got}")]
    InsufficientPhaseOne { needed: usize, got: usize },
    #[error(transparent)]
    Density(#[from] DensityError),
    #[error(transparent)]
    Cusum(#[from] CusumError),
    #[error(transparent)]
    Distribution(#[from] DistributionError),
    #[error("allowance exceeds data range: no in-control observation is above k = {k}")]
    AllowanceAboveData { k: f64 },
    #[error("ARL_0 too small for this k: alpha = {alpha} is not below 1")]
    ArlTooSmall { alpha: f64 },
    #[error("sprint length {j} unreachable after {steps} steps; reduce k or j_max")]
    SprintUnreachable { j: usize, steps: u64 },
    #[error("could not bracket ARL_0 = {arl0}: run length {rl} at epsilon = {epsilon}")]
    BracketFailure { rl: f64, arl0: f64, epsilon: f64 },
    #[error("tuning stopped after {iterations} iterations with run length {rl}")]
    NotConverged { schedule: LimitSchedule, rl: f64, iterations: usize },
    #[error("non-finite simulated run length")]
    NonFiniteRunLength,
    #[error("run lengths {0} and {1} do not bracket the target")]
    NotBracketing(f64, f64),
}

/// Target mean sprint length as a fraction of `j_max`.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SprintFraction {
    Half,
    ThreeQuarters,
    Full,
}

impl SprintFraction {
    pub const ALL: [SprintFraction; 3] =
        [SprintFraction::Half, SprintFraction::ThreeQuarters, SprintFraction::Full];

    pub fn value(self) -> f64 {
        match self {
            SprintFraction::Half => 0.5,
            SprintFraction::ThreeQuarters => 0.75,
            SprintFraction::Full => 1.0,
        }
    }

    pub fn target_for(self, j_max: usize) -> f64 {
        self.value() * j_max as f64
    }

    pub fn from_value(v: f64) -> Option<Self> {
        Self::ALL.into_iter().find(|f| f.value() == v)
    }
}

/// Settings for the allowance bisection.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KSearch {
    /// Stop once the estimate is within this relative distance of the target.
    pub rel_tol: f64,
    pub max_iters: usize,
    /// Longest first sprint followed on a single bootstrap path.
    pub path_budget: u64,
}

impl Default for KSearch {
    fn default() -> Self {
        Self { rel_tol: 0.05, max_iters: 30, path_budget: 100_000 }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationConfig {
    pub arl0: f64,
    pub j_max: usize,
    /// Target mean first-sprint length.
    pub target_sprint: f64,
    /// Bootstrap sample size `B`.
    pub boot_reps: usize,
    /// In-control streams per tuning evaluation, `N_1`.
    pub tune_reps: usize,
    pub epsilon: f64,
    pub epsilon_tilde: f64,
    pub max_tune_iters: usize,
    pub seed: u64,
    pub variance_corrected: bool,
    /// Skip the allowance search and use this `k`.
    pub fixed_k: Option<f64>,
    pub k_search: KSearch,
    /// Steps allowed per recorded conditional value, multiplied by `B`.
    pub steps_per_record: u64,
    /// Truncation point of simulated runs; defaults to `50 * arl0`.
    pub run_cap: Option<u64>,
}

impl CalibrationConfig {
    /// Defaults: `B = 5000`, `N_1 = 100`, `epsilon = 0.2`, `epsilon_tilde = 0.02`.
    pub fn new(arl0: f64, j_max: usize, target_sprint: f64) -> Self {
        Self {
            arl0,
            j_max,
            target_sprint,
            boot_reps: 5000,
            tune_reps: 100,
            epsilon: 0.2,
            epsilon_tilde: 0.02,
            max_tune_iters: 15,
            seed: 0,
            variance_corrected: true,
            fixed_k: None,
            k_search: KSearch::default(),
            steps_per_record: 10_000,
            run_cap: None,
        }
    }

    pub fn with_fraction(arl0: f64, j_max: usize, fraction: SprintFraction) -> Self {
        Self::new(arl0, j_max, fraction.target_for(j_max))
    }

    pub fn run_cap(&self) -> u64 {
        self.run_cap
            .unwrap_or_else(|| libm::ceil(50.0 * self.arl0) as u64)
            .max(1)
    }

    pub fn validate(&self) -> Result<(), CalibrationError> {
        use CalibrationError::InvalidConfig as bad;
        if !(self.arl0 > 1.0 && self.arl0.is_finite()) {
            return Err(bad("arl0 must exceed 1"));
        }
        if self.j_max == 0 {
            return Err(bad("j_max must be at least 1"));
        }
        if !(self.target_sprint > 0.0 && self.target_sprint <= self.j_max as f64) {
            return Err(bad("target sprint must lie in (0, j_max]"));
        }
        if self.boot_reps == 0 || self.tune_reps < 2 {
            return Err(bad("need B >= 1 and N_1 >= 2"));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(bad("epsilon must lie in (0, 1)"));
        }
        if !(self.epsilon_tilde > 0.0 && self.epsilon_tilde < self.epsilon) {
            return Err(bad("epsilon_tilde must lie in (0, epsilon)"));
        }
        if let Some(k) = self.fixed_k {
            if !k.is_finite() {
                return Err(bad("fixed k must be finite"));
            }
        }
        Ok(())
    }
}

// ---------------------------------------------------------------------------
// Allowance selection

/// Length of the sprint that starts with the first observation; zero when the
/// first step already leaves the CUSUM at zero. Capped at `budget`.
pub fn first_sprint_length<S, R>(sampler: &S, k: f64, budget: u64, rng: &mut R) -> u64
where
    S: Sampler + ?Sized,
    R: Rng + ?Sized,
{
    let mut c = 0.0;
    let mut len = 0;
    while len < budget {
        c += sampler.sample(rng) - k;
        if c <= 0.0 {
            break;
        }
        len += 1;
    }
    len
}

/// Mean first-sprint length over `reps` paths, path `i` always using the same
/// sub-stream of `seed`. With `stop_above` set, returns early (with a partial
/// mean that is already above the bound) once the final mean must exceed it.
fn mean_first_sprint<S: Sampler + ?Sized>(
    sampler: &S,
    k: f64,
    reps: usize,
    seed: u64,
    budget: u64,
    stop_above: Option<f64>,
) -> f64 {
    let limit = stop_above.map(|b| b * reps as f64);
    let mut total = 0u64;
    for i in 0..reps {
        let mut rng = stream_rng(seed, &[i as u64]);
        total += first_sprint_length(sampler, k, budget, &mut rng);
        if limit.is_some_and(|l| total as f64 > l) {
            break;
        }
    }
    total as f64 / reps as f64
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum KSearchStatus {
    Converged,
    /// Target out of reach inside the quartile bounds; `k` is the nearer bound.
    BoundReached,
    IterationLimit,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KSelection {
    pub k: f64,
    /// Mean first-sprint length at `k` (a lower bound when the search
    /// stopped early above the target).
    pub estimated_sprint: f64,
    pub iterations: usize,
    pub status: KSearchStatus,
}

/// Bisection for `k` on draws from `sampler`, starting at `bounds.1` inside
/// `[bounds.0, bounds.2]`.
pub fn select_k_with<S: Sampler + ?Sized>(
    sampler: &S,
    bounds: (f64, f64, f64),
    target_sprint: f64,
    boot_reps: usize,
    seed: u64,
    search: &KSearch,
) -> Result<KSelection, CalibrationError> {
    if !(target_sprint > 0.0) || boot_reps == 0 {
        return Err(CalibrationError::InvalidConfig("target sprint and B must be positive"));
    }
    let (q1, q2, q3) = bounds;
    let (mut lo, mut hi, mut k) = (q1, q3, q2);
    let upper_band = target_sprint * (1.0 + search.rel_tol);
    let mut estimate = f64::NAN;
    let mut iterations = 0;
    while iterations < search.max_iters {
        iterations += 1;
        estimate = mean_first_sprint(sampler, k, boot_reps, seed, search.path_budget, Some(upper_band));
        if (estimate - target_sprint).abs() <= search.rel_tol * target_sprint {
            return Ok(KSelection { k, estimated_sprint: estimate, iterations, status: KSearchStatus::Converged });
        }
        // Larger k pulls the CUSUM back to zero sooner.
        if estimate > target_sprint {
            lo = k;
            k = 0.5 * (hi + k);
        } else {
            hi = k;
            k = 0.5 * (lo + k);
        }
        if hi - lo <= 1e-12 * (1.0 + q3.abs().max(q1.abs())) {
            break;
        }
    }
    let (k, status) = if lo == q1 && hi - lo < 1e-6 * (q3 - q1) {
        (q1, KSearchStatus::BoundReached)
    } else if hi == q3 && hi - lo < 1e-6 * (q3 - q1) {
        (q3, KSearchStatus::BoundReached)
    } else {
        (k, KSearchStatus::IterationLimit)
    };
    Ok(KSelection { k, estimated_sprint: estimate, iterations, status })
}

/// Allowance search on raw Phase-I data: the data are standardized and
/// resampled with replacement.
pub fn select_k(
    phase1: &[f64],
    j_max: usize,
    target_sprint: f64,
    boot_reps: usize,
    seed: u64,
) -> Result<KSelection, CalibrationError> {
    if !(target_sprint <= j_max as f64) {
        return Err(CalibrationError::InvalidConfig("target sprint must not exceed j_max"));
    }
    let normalized = crate::density::normalize(phase1)?;
    select_k_with(
        &Resample(&normalized),
        quartiles(&normalized),
        target_sprint,
        boot_reps,
        seed,
        &KSearch::default(),
    )
}

// ---------------------------------------------------------------------------
// Preliminary limits

/// `1 / (p^2 ARL_0)` for an exceedance probability `p = P(X > k)`.
pub fn alpha_from_exceedance(p: f64, k: f64, arl0: f64) -> Result<f64, CalibrationError> {
    if !(arl0 > 1.0) {
        return Err(CalibrationError::InvalidConfig("arl0 must exceed 1"));
    }
    if !(p > 0.0) {
        return Err(CalibrationError::AllowanceAboveData { k });
    }
    let alpha = 1.0 / (p * p * arl0);
    if alpha >= 1.0 {
        return Err(CalibrationError::ArlTooSmall { alpha });
    }
    Ok(alpha)
}

/// `alpha` from the share of in-control observations above `k`.
pub fn estimate_alpha_hat(phase1: &[f64], k: f64, arl0: f64) -> Result<f64, CalibrationError> {
    if phase1.is_empty() {
        return Err(CalibrationError::InsufficientPhaseOne { needed: 1, got: 0 });
    }
    let above = phase1.iter().filter(|&&x| x > k).count();
    alpha_from_exceedance(above as f64 / phase1.len() as f64, k, arl0)
}

/// 1-based rank `ceil(B (1 - alpha))`, clamped to `1..=B`.
pub fn order_statistic_rank(b: usize, alpha: f64) -> usize {
    let pos = b as f64 * (1.0 - alpha);
    // Absorb rounding noise such as 200 * (1 - 0.005) = 199.00000000000003.
    let rank = libm::ceil(pos - 1e-9 * pos.max(1.0)) as usize;
    rank.clamp(1, b)
}

/// Draws `count` independent values of `C_n` conditional on `T_n = j`.
///
/// Each value comes from a fresh sprint started at zero: the path is followed
/// until its sprint length reaches `j` (record and restart) or it returns to
/// zero (keep going). Fails once `max_steps` draws have been spent.
pub fn sprint_conditional_sample<S, R>(
    sampler: &S,
    k: f64,
    j: usize,
    count: usize,
    max_steps: u64,
    rng: &mut R,
) -> Result<Vec<f64>, CalibrationError>
where
    S: Sampler + ?Sized,
    R: Rng + ?Sized,
{
    let mut out = Vec::with_capacity(count);
    let (mut c, mut t, mut steps) = (0.0, 0usize, 0u64);
    while out.len() < count {
        if steps >= max_steps {
            return Err(CalibrationError::SprintUnreachable { j, steps });
        }
        steps += 1;
        c += sampler.sample(rng) - k;
        if c > 0.0 {
            t += 1;
            if t == j {
                out.push(c);
                c = 0.0;
                t = 0;
            }
        } else {
            c = 0.0;
            t = 0;
        }
    }
    Ok(out)
}

/// Bootstrap estimates `M_1..M_{j_max}` and `M*`.
#[derive(Debug, Clone, PartialEq)]
pub struct PreliminaryLimits {
    pub m: Vec<f64>,
    pub m_star: f64,
    pub alpha_hat: f64,
    /// Values recorded per sprint length (all equal to `B`).
    pub conditional_counts: Vec<usize>,
}

impl PreliminaryLimits {
    pub fn schedule(&self, k: f64) -> Result<LimitSchedule, CusumError> {
        LimitSchedule::new(k, self.m.clone(), self.m_star)
    }
}

/// Order statistic of rank `ceil(B (1 - alpha))` from `sample` (any order).
pub fn conditional_quantile(sample: &mut [f64], alpha: f64) -> f64 {
    let rank = order_statistic_rank(sample.len(), alpha);
    let (_, v, _) = sample.select_nth_unstable_by(rank - 1, f64::total_cmp);
    *v
}

pub fn bootstrap_preliminary_limits<S: Sampler + ?Sized>(
    sampler: &S,
    k: f64,
    alpha_hat: f64,
    cfg: &CalibrationConfig,
) -> Result<PreliminaryLimits, CalibrationError> {
    cfg.validate()?;
    if !(alpha_hat > 0.0 && alpha_hat < 1.0) {
        return Err(CalibrationError::InvalidConfig("alpha_hat must lie in (0, 1)"));
    }
    let b = cfg.boot_reps;
    let max_steps = cfg.steps_per_record.saturating_mul(b as u64);
    let mut quantiles = Vec::with_capacity(cfg.j_max + 1);
    for j in 1..=cfg.j_max + 1 {
        let mut rng = stream_rng(cfg.seed, &[tag::PRELIMINARY, j as u64]);
        let mut sample = sprint_conditional_sample(sampler, k, j, b, max_steps, &mut rng)?;
        quantiles.push(conditional_quantile(&mut sample, alpha_hat));
    }
    let m_star = quantiles.pop().expect("j_max + 1 >= 2 entries");
    Ok(PreliminaryLimits {
        m: quantiles,
        m_star,
        alpha_hat,
        conditional_counts: alloc::vec![b; cfg.j_max + 1],
    })
}

// ---------------------------------------------------------------------------
// Tuning

/// Limits on the straight line through `(rl_a, a)` and `(rl_b, b)` at which
/// the run length equals `arl0`; `arl0` must lie between `rl_a` and `rl_b`.
pub fn interpolate_limits(
    a: &LimitSchedule,
    rl_a: f64,
    b: &LimitSchedule,
    rl_b: f64,
    arl0: f64,
) -> Result<LimitSchedule, CalibrationError> {
    let (lo, hi) = if rl_a < rl_b { (rl_a, rl_b) } else { (rl_b, rl_a) };
    if !(lo <= arl0 && arl0 <= hi) || lo == hi {
        return Err(CalibrationError::NotBracketing(rl_a, rl_b));
    }
    let w_a = (rl_b - arl0) / (rl_b - rl_a);
    mix_limits(a, b, w_a)
}

fn mix_limits(a: &LimitSchedule, b: &LimitSchedule, w_a: f64) -> Result<LimitSchedule, CalibrationError> {
    let w_b = 1.0 - w_a;
    let limits = a
        .limits()
        .iter()
        .zip(b.limits())
        .map(|(x, y)| w_a * x + w_b * y)
        .collect();
    let h_star = w_a * a.h_star() + w_b * b.h_star();
    Ok(LimitSchedule::new(a.k(), limits, h_star)?)
}

fn max_rel_diff(a: &LimitSchedule, b: &LimitSchedule) -> f64 {
    a.limit_vector()
        .zip(b.limit_vector())
        .map(|(x, y)| ((x - y) / x).abs())
        .fold(0.0, f64::max)
}

/// Mean simulated run length of `schedule` over `reps` in-control streams;
/// stream `i` always uses the same sub-stream of `seed`.
pub fn simulated_arl<S: Sampler + ?Sized>(
    sampler: &S,
    schedule: &LimitSchedule,
    reps: usize,
    cap: u64,
    seed: u64,
) -> f64 {
    let total: u64 = (0..reps)
        .map(|i| {
            let mut rng = stream_rng(seed, &[i as u64]);
            simulate_run_length(sampler, |x| x, schedule, cap, &mut rng).length
        })
        .sum();
    total as f64 / reps as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct TuneReport {
    pub schedule: LimitSchedule,
    /// Simulated ARL of the final schedule on the tuning streams.
    pub rl: f64,
    /// Interpolation steps taken.
    pub iterations: usize,
    /// Run-length evaluations, including bracket construction.
    pub evaluations: usize,
    /// Bracket width finally used (after any widening).
    pub epsilon: f64,
}

#[derive(Clone)]
struct Point {
    schedule: LimitSchedule,
    rl: f64,
}

/// Rescales the preliminary limits until the simulated in-control ARL on
/// `cfg.tune_reps` streams is within `epsilon_tilde` of `arl0`.
pub fn tune_limits<S: Sampler + ?Sized>(
    sampler: &S,
    k: f64,
    prelim: &PreliminaryLimits,
    cfg: &CalibrationConfig,
) -> Result<TuneReport, CalibrationError> {
    cfg.validate()?;
    let arl0 = cfg.arl0;
    let cap = cfg.run_cap();
    let seed = derive_seed(cfg.seed, &[tag::TUNE]);
    let mut evaluations = 0usize;
    let mut eval = |schedule: LimitSchedule| -> Result<Point, CalibrationError> {
        evaluations += 1;
        let rl = simulated_arl(sampler, &schedule, cfg.tune_reps, cap, seed);
        if !rl.is_finite() {
            return Err(CalibrationError::NonFiniteRunLength);
        }
        Ok(Point { schedule, rl })
    };

    let base = prelim.schedule(k)?;
    let mut current = eval(base.clone())?;
    let mut lower: Option<Point> = None;
    let mut upper: Option<Point> = None;
    let mut epsilon = cfg.epsilon;
    let mut iterations = 0;

    loop {
        if (current.rl - arl0).abs() / arl0 < cfg.epsilon_tilde {
            return Ok(TuneReport {
                schedule: current.schedule,
                rl: current.rl,
                iterations,
                evaluations,
                epsilon,
            });
        }
        if iterations >= cfg.max_tune_iters {
            return Err(CalibrationError::NotConverged {
                schedule: current.schedule,
                rl: current.rl,
                iterations,
            });
        }
        let below = current.rl < arl0;
        let partner = if below {
            match upper.take() {
                Some(p) => p,
                None => {
                    let (p, eps) = open_bracket(&base, arl0, epsilon, true, &mut eval)?;
                    epsilon = eps;
                    p
                }
            }
        } else {
            match lower.take() {
                Some(p) => p,
                None => {
                    let (p, eps) = open_bracket(&base, arl0, epsilon, false, &mut eval)?;
                    epsilon = eps;
                    p
                }
            }
        };
        let mut next =
            interpolate_limits(&current.schedule, current.rl, &partner.schedule, partner.rl, arl0)?;
        // The simulated ARL is a step function of the limits, so false
        // position can stall on one end; fall back to the midpoint then.
        let stalled = max_rel_diff(&next, &current.schedule) < 1e-12
            || max_rel_diff(&next, &partner.schedule) < 1e-12;
        if stalled {
            next = mix_limits(&current.schedule, &partner.schedule, 0.5)?;
        }
        if below {
            upper = Some(partner);
            lower = Some(current);
        } else {
            lower = Some(partner);
            upper = Some(current);
        }
        current = eval(next)?;
        iterations += 1;
    }
}

/// First bracket `(1 + eps) M` (upward) or `(1 - eps) M` (downward), doubling
/// `eps` up to three times if it does not straddle `arl0`.
fn open_bracket<F>(
    base: &LimitSchedule,
    arl0: f64,
    epsilon: f64,
    upward: bool,
    eval: &mut F,
) -> Result<(Point, f64), CalibrationError>
where
    F: FnMut(LimitSchedule) -> Result<Point, CalibrationError>,
{
    let mut eps = epsilon;
    let mut last_rl = f64::NAN;
    for _ in 0..4 {
        let factor = if upward { 1.0 + eps } else { 1.0 - eps.min(0.9) };
        let point = eval(base.scaled(factor)?)?;
        let ok = if upward { point.rl > arl0 } else { point.rl < arl0 };
        if ok {
            return Ok((point, eps));
        }
        last_rl = point.rl;
        eps *= 2.0;
    }
    Err(CalibrationError::BracketFailure { rl: last_rl, arl0, epsilon: eps / 2.0 })
}

/// Keeps the first `new_j_max` limits and re-tunes only the tail limit.
///
/// When `k` was chosen from a target sprint length tied to the old `j_max`,
/// that link no longer holds for the shorter schedule; the returned flag is
/// `false` in that case.
pub fn reduce_horizon<S: Sampler + ?Sized>(
    sampler: &S,
    schedule: &LimitSchedule,
    new_j_max: usize,
    k_was_adaptive: bool,
    cfg: &CalibrationConfig,
) -> Result<(LimitSchedule, bool), CalibrationError> {
    if new_j_max == 0 || new_j_max > schedule.j_max() {
        return Err(CalibrationError::InvalidConfig("new j_max must lie in 1..=j_max"));
    }
    let kept = schedule.limits()[..new_j_max].to_vec();
    let cap = cfg.run_cap();
    let seed = derive_seed(cfg.seed, &[tag::TUNE, new_j_max as u64]);
    let with_tail = |h: f64| LimitSchedule::new(schedule.k(), kept.clone(), h);
    let arl = |h: f64| -> Result<f64, CalibrationError> {
        Ok(simulated_arl(sampler, &with_tail(h)?, cfg.tune_reps, cap, seed))
    };

    let start = schedule.limits()[new_j_max.min(schedule.j_max() - 1)].max(schedule.h_star());
    let (mut lo, mut hi) = (start, start);
    let mut rl_lo = arl(lo)?;
    let mut rl_hi = rl_lo;
    let mut widen = 0;
    while rl_lo >= cfg.arl0 && widen < 60 {
        hi = lo;
        rl_hi = rl_lo;
        lo *= 0.5;
        rl_lo = arl(lo)?;
        widen += 1;
    }
    while rl_hi <= cfg.arl0 && widen < 60 {
        lo = hi;
        rl_lo = rl_hi;
        hi *= 2.0;
        rl_hi = arl(hi)?;
        widen += 1;
    }
    if !(rl_lo < cfg.arl0 && cfg.arl0 < rl_hi) {
        return Err(CalibrationError::BracketFailure { rl: rl_hi, arl0: cfg.arl0, epsilon: 0.0 });
    }
    for _ in 0..60 {
        let mid = 0.5 * (lo + hi);
        let rl = arl(mid)?;
        if (rl - cfg.arl0).abs() / cfg.arl0 < cfg.epsilon_tilde {
            return Ok((with_tail(mid)?, !k_was_adaptive));
        }
        if rl < cfg.arl0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    Ok((with_tail(0.5 * (lo + hi))?, !k_was_adaptive))
}

// ---------------------------------------------------------------------------
// End to end

/// Everything produced by a calibration run.
#[derive(Debug, Clone, PartialEq)]
pub struct Calibration {
    pub schedule: LimitSchedule,
    /// Density the bootstrap drew from (`None` when `F` was known).
    pub density: Option<FittedDensity>,
    /// Map from raw observations to the scale the schedule applies to.
    pub standardization: Standardization,
    pub k_selection: Option<KSelection>,
    pub preliminary: PreliminaryLimits,
    pub tuning: TuneReport,
}

fn calibrate_from<S: Sampler + ?Sized, P: Fn(f64) -> f64>(
    sampler: &S,
    select_from: &dyn Fn(f64, usize, u64, &KSearch) -> Result<KSelection, CalibrationError>,
    exceedance: P,
    cfg: &CalibrationConfig,
) -> Result<(f64, Option<KSelection>, PreliminaryLimits, TuneReport), CalibrationError> {
    let (k, selection) = match cfg.fixed_k {
        Some(k) => (k, None),
        None => {
            let seed = derive_seed(cfg.seed, &[tag::SELECT_K]);
            let sel = select_from(cfg.target_sprint, cfg.boot_reps, seed, &cfg.k_search)?;
            (sel.k, Some(sel))
        }
    };
    let alpha = alpha_from_exceedance(exceedance(k), k, cfg.arl0)?;
    let prelim = bootstrap_preliminary_limits(sampler, k, alpha, cfg)?;
    let tuning = tune_limits(sampler, k, &prelim, cfg)?;
    Ok((k, selection, prelim, tuning))
}

/// Full calibration from Phase-I data: standardize, fit the density, choose
/// `k`, estimate preliminary limits and tune them.
pub fn calibrate(phase1: &[f64], cfg: &CalibrationConfig) -> Result<Calibration, CalibrationError> {
    cfg.validate()?;
    if phase1.len() < MIN_PHASE_ONE {
        return Err(CalibrationError::InsufficientPhaseOne { needed: MIN_PHASE_ONE, got: phase1.len() });
    }
    let standardization = Standardization::of(phase1)?;
    let normalized: Vec<f64> = phase1.iter().map(|&x| standardization.apply(x)).collect();
    let density = FittedDensity::fit(&normalized, cfg.variance_corrected)?;
    let bounds = quartiles(&normalized);
    let select = |target: f64, b: usize, seed: u64, search: &KSearch| {
        select_k_with(&Resample(&normalized), bounds, target, b, seed, search)
    };
    let share_above =
        |k: f64| normalized.iter().filter(|&&x| x > k).count() as f64 / normalized.len() as f64;
    let (_, k_selection, preliminary, tuning) = calibrate_from(&density, &select, share_above, cfg)?;
    Ok(Calibration {
        schedule: tuning.schedule.clone(),
        density: Some(density),
        standardization,
        k_selection,
        preliminary,
        tuning,
    })
}

/// Calibration with the in-control distribution known: every bootstrap draw
/// comes from `model` and `p = P(X > k)` is exact.
pub fn calibrate_known(
    model: &DistributionModel,
    cfg: &CalibrationConfig,
) -> Result<Calibration, CalibrationError> {
    cfg.validate()?;
    let bounds = (model.quantile(0.25)?, model.quantile(0.5)?, model.quantile(0.75)?);
    let select = |target: f64, b: usize, seed: u64, search: &KSearch| {
        select_k_with(model, bounds, target, b, seed, search)
    };
    let (_, k_selection, preliminary, tuning) =
        calibrate_from(model, &select, |k| model.exceedance(k), cfg)?;
    Ok(Calibration {
        schedule: tuning.schedule.clone(),
        density: None,
        standardization: Standardization::identity(),
        k_selection,
        preliminary,
        tuning,
    })
}
