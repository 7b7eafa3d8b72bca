//! Monte Carlo studies: in-control and out-of-control ARL tables for the
//! bootstrap, classical and signed-rank charts, and a check that bootstrap
//! conditional distributions match the true ones.
//!
//! Every replication draws from sub-streams keyed by `(seed, tag, index)`,
//! and results are collected in replication order, so output does not
//! depend on the size of the rayon pool.

use std::io::Write;
use std::str::FromStr;

use rayon::prelude::*;
use sprint_cusum::baselines::{
    classical_h_for_arl, classical_run, golden_classical_h, np_cusum_run, BaselineError, ClassicalParams,
    NpCusumParams, NP1, NP2,
};
use sprint_cusum::calibration::{
    calibrate, calibrate_known, sprint_conditional_sample, Calibration, CalibrationConfig, CalibrationError,
    SprintFraction,
};
use sprint_cusum::cusum::{run_length, summarize_outcomes, CusumError, LimitSchedule, RunLengthSummary, RunOutcome};
use sprint_cusum::density::{Resample, Standardization};
use sprint_cusum::distributions::{
    sample_stream, DistributionKind, DistributionModel, ObservationStream, ShiftSpec,
};
use sprint_cusum::rng::{derive_seed, stream_rng, tag};
use sprint_cusum::stats::{ks_two_sample, ks_uniform, StatsError};
use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

#[derive(Debug, Error)]
pub enum ExperimentError {
    #[error(transparent)]
    Calibration(#[from] CalibrationError),
    #[error(transparent)]
    Baseline(#[from] BaselineError),
    #[error(transparent)]
    Cusum(#[from] CusumError),
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error("invalid experiment: {0}")]
    Invalid(String),
    #[error("cannot write results: {0}")]
    Output(#[from] csv::Error),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Case {
    I,
    II,
    III,
}

impl Case {
    pub const ALL: [Case; 3] = [Case::I, Case::II, Case::III];

    pub fn kind(self) -> DistributionKind {
        match self {
            Case::I => DistributionKind::StandardNormal,
            Case::II => DistributionKind::RightSkewMix,
            Case::III => DistributionKind::LeftSkewMix,
        }
    }

    pub fn label(self) -> &'static str {
        match self {
            Case::I => "I",
            Case::II => "II",
            Case::III => "III",
        }
    }
}

impl FromStr for Case {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        match s {
            "I" | "1" => Ok(Case::I),
            "II" | "2" => Ok(Case::II),
            "III" | "3" => Ok(Case::III),
            _ => Err(format!("unknown case {s:?} (expected I, II or III)")),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Method {
    C,
    Np1,
    Np2,
    B1,
    B2,
    B3,
}

impl Method {
    pub const ALL: [Method; 6] = [Method::C, Method::Np1, Method::Np2, Method::B1, Method::B2, Method::B3];

    pub fn label(self) -> &'static str {
        match self {
            Method::C => "C",
            Method::Np1 => "NP1",
            Method::Np2 => "NP2",
            Method::B1 => "B1",
            Method::B2 => "B2",
            Method::B3 => "B3",
        }
    }

    /// Target sprint fraction of the bootstrap methods.
    pub fn fraction(self) -> Option<SprintFraction> {
        match self {
            Method::B1 => Some(SprintFraction::Half),
            Method::B2 => Some(SprintFraction::ThreeQuarters),
            Method::B3 => Some(SprintFraction::Full),
            _ => None,
        }
    }

    fn np_params(self) -> Option<NpCusumParams> {
        match self {
            Method::Np1 => Some(NP1),
            Method::Np2 => Some(NP2),
            _ => None,
        }
    }
}

impl FromStr for Method {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        Method::ALL
            .into_iter()
            .find(|m| m.label().eq_ignore_ascii_case(s))
            .ok_or_else(|| format!("unknown method {s:?} (expected C, NP1, NP2, B1, B2 or B3)"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub case: Case,
    /// Location shift of Phase II, in standard deviations.
    pub delta: f64,
    /// Phase-I sample size.
    pub m: usize,
    pub reps: usize,
    pub j_max: usize,
    pub arl0: f64,
    pub seed: u64,
    pub boot_reps: usize,
    pub tune_reps: usize,
    /// Truncation point of Phase-II runs.
    pub run_cap: u64,
    /// Streams used when a classical limit has to be found by simulation.
    pub classical_mc_reps: usize,
}

impl ExperimentConfig {
    pub fn new(case: Case, delta: f64, j_max: usize) -> Self {
        Self {
            case,
            delta,
            m: 1000,
            reps: 100,
            j_max,
            arl0: 200.0,
            seed: 0,
            boot_reps: 2000,
            tune_reps: 100,
            run_cap: 20_000,
            classical_mc_reps: 100_000,
        }
    }

    fn validate(&self) -> Result<(), ExperimentError> {
        if self.reps < 2 {
            return Err(ExperimentError::Invalid("need at least 2 replications".into()));
        }
        if !self.delta.is_finite() {
            return Err(ExperimentError::Invalid("delta must be finite".into()));
        }
        if self.run_cap == 0 {
            return Err(ExperimentError::Invalid("run cap must be positive".into()));
        }
        Ok(())
    }

    fn calibration_config(&self, fraction: SprintFraction, rep: usize) -> CalibrationConfig {
        let mut cfg = CalibrationConfig::with_fraction(self.arl0, self.j_max, fraction);
        cfg.boot_reps = self.boot_reps;
        cfg.tune_reps = self.tune_reps;
        cfg.seed = derive_seed(self.seed, &[tag::CALIBRATE, rep as u64, fraction_index(fraction)]);
        cfg
    }

    fn model(&self) -> DistributionModel {
        DistributionModel::in_control(self.case.kind())
    }

    fn phase_two(&self, rep: usize) -> ObservationStream {
        ObservationStream::new(
            self.model(),
            ShiftSpec::immediate(self.delta),
            stream_rng(self.seed, &[tag::PHASE_TWO, rep as u64]),
        )
    }
}

fn fraction_index(f: SprintFraction) -> u64 {
    match f {
        SprintFraction::Half => 1,
        SprintFraction::ThreeQuarters => 2,
        SprintFraction::Full => 3,
    }
}

/// Run lengths of one method over all replications.
#[derive(Debug, Clone, PartialEq)]
pub struct MethodResult {
    pub method: Method,
    pub run_lengths: Vec<u64>,
    pub summary: RunLengthSummary,
    /// Replications whose tuning stopped before reaching tolerance; their
    /// last schedule was used.
    pub tuning_shortfalls: usize,
}

/// Classical limit for `k`: the frozen value when tabulated, otherwise a
/// Monte Carlo search.
pub fn classical_limit(k: f64, arl0: f64, mc_reps: usize, seed: u64) -> Result<f64, BaselineError> {
    match golden_classical_h(k, arl0) {
        Some(h) => Ok(h),
        None => classical_h_for_arl(k, arl0, mc_reps, derive_seed(seed, &[tag::CLASSICAL])),
    }
}

/// Bootstrap calibration that keeps the last schedule when tuning runs out
/// of iterations; the flag reports whether that happened.
fn calibrate_lenient(phase1: &[f64], cfg: &CalibrationConfig) -> Result<(LimitSchedule, Standardization, bool), CalibrationError> {
    match calibrate(phase1, cfg) {
        Ok(c) => Ok((c.schedule, c.standardization, false)),
        Err(CalibrationError::NotConverged { schedule, .. }) => {
            Ok((schedule, Standardization::of(phase1)?, true))
        }
        Err(e) => Err(e),
    }
}

struct RepOutcome {
    outcomes: Vec<RunOutcome>,
    shortfalls: Vec<bool>,
}

/// ARL of each method with `F` estimated from a fresh Phase-I sample in every
/// replication. All methods in a replication see the same Phase-II stream.
pub fn arl_table(cfg: &ExperimentConfig, methods: &[Method]) -> Result<Vec<MethodResult>, ExperimentError> {
    cfg.validate()?;
    if methods.is_empty() {
        return Err(ExperimentError::Invalid("no methods selected".into()));
    }
    let classical_k = cfg.delta.max(0.0) / 2.0;
    let classical_h = if methods.contains(&Method::C) {
        Some(classical_limit(classical_k, cfg.arl0, cfg.classical_mc_reps, cfg.seed)?)
    } else {
        None
    };

    let per_rep: Vec<RepOutcome> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| -> Result<RepOutcome, ExperimentError> {
            let phase1 = sample_stream(
                cfg.model(),
                ShiftSpec::none(),
                cfg.m,
                derive_seed(cfg.seed, &[tag::PHASE_ONE, rep as u64]),
            );
            let stream = cfg.phase_two(rep);
            let mut outcomes = Vec::with_capacity(methods.len());
            let mut shortfalls = Vec::with_capacity(methods.len());
            for &method in methods {
                let (out, short) = match method {
                    Method::C => {
                        let st = Standardization::of(&phase1)
                            .map_err(|e| ExperimentError::Calibration(e.into()))?;
                        let params = ClassicalParams::new(
                            classical_k,
                            classical_h.expect("computed above"),
                            st.center,
                            st.scale,
                        )?;
                        (classical_run(stream.clone(), &params, cfg.run_cap)?, false)
                    }
                    Method::Np1 | Method::Np2 => {
                        let params = method.np_params().expect("NP method");
                        (np_cusum_run(stream.clone(), &params, cfg.run_cap)?, false)
                    }
                    Method::B1 | Method::B2 | Method::B3 => {
                        let fraction = method.fraction().expect("bootstrap method");
                        let ccfg = cfg.calibration_config(fraction, rep);
                        let (schedule, st, short) = calibrate_lenient(&phase1, &ccfg)?;
                        let out = run_length(stream.clone().map(|x| st.apply(x)), &schedule, cfg.run_cap)?;
                        (out, short)
                    }
                };
                outcomes.push(out);
                shortfalls.push(short);
            }
            Ok(RepOutcome { outcomes, shortfalls })
        })
        .collect::<Result<_, _>>()?;

    methods
        .iter()
        .enumerate()
        .map(|(i, &method)| {
            let outcomes: Vec<RunOutcome> = per_rep.iter().map(|r| r.outcomes[i]).collect();
            Ok(MethodResult {
                method,
                run_lengths: outcomes.iter().map(|o| o.length).collect(),
                summary: summarize_outcomes(&outcomes)?,
                tuning_shortfalls: per_rep.iter().filter(|r| r.shortfalls[i]).count(),
            })
        })
        .collect()
}

/// Settings for the known-distribution comparison.
#[derive(Debug, Clone, PartialEq)]
pub struct KnownConfig {
    pub case: Case,
    pub j_max: usize,
    pub target_sprint: f64,
    pub arl0: f64,
    pub boot_reps: usize,
    pub tune_reps: usize,
    /// Phase-II replications used to evaluate both charts.
    pub reps: usize,
    pub classical_k: f64,
    pub run_cap: u64,
    pub seed: u64,
}

impl KnownConfig {
    pub fn new(case: Case) -> Self {
        Self {
            case,
            j_max: 50,
            target_sprint: 37.5,
            arl0: 200.0,
            boot_reps: 2000,
            tune_reps: 1000,
            reps: 1000,
            classical_k: 0.25,
            run_cap: 20_000,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct KnownResult {
    pub calibration: Calibration,
    pub bootstrap: RunLengthSummary,
    pub classical: RunLengthSummary,
    pub classical_h: f64,
}

/// In-control ARL of the bootstrap chart calibrated directly on `F` and of
/// the classical chart with known mean and variance, on paired streams.
pub fn known_f_comparison(cfg: &KnownConfig) -> Result<KnownResult, ExperimentError> {
    let model = DistributionModel::in_control(cfg.case.kind());
    let mut ccfg = CalibrationConfig::new(cfg.arl0, cfg.j_max, cfg.target_sprint);
    ccfg.boot_reps = cfg.boot_reps;
    ccfg.tune_reps = cfg.tune_reps;
    ccfg.seed = derive_seed(cfg.seed, &[tag::CALIBRATE]);
    let calibration = calibrate_known(&model, &ccfg)?;
    let classical_h = classical_limit(cfg.classical_k, cfg.arl0, 100_000, cfg.seed)?;
    let classical = ClassicalParams::standard(cfg.classical_k, classical_h)?;

    let pairs: Vec<(RunOutcome, RunOutcome)> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| -> Result<_, ExperimentError> {
            let stream = ObservationStream::new(
                model,
                ShiftSpec::none(),
                stream_rng(cfg.seed, &[tag::PHASE_TWO, rep as u64]),
            );
            let b = run_length(stream.clone(), &calibration.schedule, cfg.run_cap)?;
            let c = classical_run(stream, &classical, cfg.run_cap)?;
            Ok((b, c))
        })
        .collect::<Result<_, _>>()?;
    let (b, c): (Vec<_>, Vec<_>) = pairs.into_iter().unzip();
    Ok(KnownResult {
        calibration,
        bootstrap: summarize_outcomes(&b)?,
        classical: summarize_outcomes(&c)?,
        classical_h,
    })
}

/// Settings for the bootstrap-validity study. Defaults cut a
/// 1000-replication, B = 2000 design down to 200 and 500. The reference
/// sample keeps its full 100k size: it is shared by every replication, so
/// its error would otherwise correlate the p-values.
#[derive(Debug, Clone, PartialEq)]
pub struct ValidityConfig {
    /// Size of each simulated data set that gets resampled.
    pub n_data: usize,
    pub k: f64,
    pub sprint_lengths: usize,
    /// Reference draws of `C | T = j` per `j`.
    pub reference_reps: usize,
    pub reps: usize,
    pub boot_reps: usize,
    pub seed: u64,
}

impl Default for ValidityConfig {
    fn default() -> Self {
        Self {
            n_data: 10_000,
            k: 0.5,
            sprint_lengths: 10,
            reference_reps: 100_000,
            reps: 200,
            boot_reps: 500,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ValidityTable {
    /// Uniformity p-value for `j = 1..=sprint_lengths`.
    pub uniformity_p: Vec<f64>,
    /// Two-sample KS p-values, `[j - 1][replication]`.
    pub replicate_p: Vec<Vec<f64>>,
}

/// For each sprint length `j`: compares the bootstrap law of `C | T = j`
/// from resampled N(0, 1) data sets against a large direct simulation, then
/// tests the per-replication KS p-values for uniformity.
pub fn bootstrap_validity_study(cfg: &ValidityConfig) -> Result<ValidityTable, ExperimentError> {
    if cfg.sprint_lengths == 0 || cfg.reps < 2 || cfg.boot_reps < 2 || cfg.reference_reps < 2 || cfg.n_data < 2 {
        return Err(ExperimentError::Invalid("validity study sizes too small".into()));
    }
    let model = DistributionModel::in_control(DistributionKind::StandardNormal);
    let budget = |count: usize| 1_000_000u64.saturating_mul(count as u64);

    let reference: Vec<Vec<f64>> = (1..=cfg.sprint_lengths)
        .into_par_iter()
        .map(|j| {
            let mut rng = stream_rng(cfg.seed, &[tag::REFERENCE, j as u64]);
            sprint_conditional_sample(&model, cfg.k, j, cfg.reference_reps, budget(cfg.reference_reps), &mut rng)
        })
        .collect::<Result<_, _>>()?;

    let per_rep: Vec<Vec<f64>> = (0..cfg.reps)
        .into_par_iter()
        .map(|rep| -> Result<Vec<f64>, ExperimentError> {
            let data = sample_stream(model, ShiftSpec::none(), cfg.n_data, derive_seed(cfg.seed, &[tag::PHASE_ONE, rep as u64]));
            let resample = Resample(&data);
            (1..=cfg.sprint_lengths)
                .map(|j| {
                    let mut rng = stream_rng(cfg.seed, &[tag::BOOTSTRAP, rep as u64, j as u64]);
                    let boot = sprint_conditional_sample(&resample, cfg.k, j, cfg.boot_reps, budget(cfg.boot_reps), &mut rng)?;
                    Ok(ks_two_sample(&boot, &reference[j - 1])?.p)
                })
                .collect()
        })
        .collect::<Result<_, _>>()?;

    let replicate_p: Vec<Vec<f64>> = (0..cfg.sprint_lengths)
        .map(|j| per_rep.iter().map(|r| r[j]).collect())
        .collect();
    let uniformity_p = replicate_p
        .iter()
        .map(|ps| ks_uniform(ps).map(|o| o.p))
        .collect::<Result<_, _>>()?;
    Ok(ValidityTable { uniformity_p, replicate_p })
}

/// Two-sided paired t-test p-value for equal means. With no spread in the
/// differences the p-value is 1 if they are all zero and 0 otherwise.
pub fn paired_comparison(a: &[f64], b: &[f64]) -> Result<f64, ExperimentError> {
    if a.len() != b.len() || a.len() < 2 {
        return Err(ExperimentError::Invalid("paired samples need equal lengths of at least 2".into()));
    }
    let d: Vec<f64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
    let n = d.len() as f64;
    let mean = d.iter().sum::<f64>() / n;
    let var = d.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1.0);
    if var == 0.0 {
        return Ok(if mean == 0.0 { 1.0 } else { 0.0 });
    }
    let t = mean / (var / n).sqrt();
    let dist = StudentsT::new(0.0, 1.0, n - 1.0).map_err(|e| ExperimentError::Invalid(e.to_string()))?;
    Ok((2.0 * dist.sf(t.abs())).min(1.0))
}

/// One row of plot-ready output.
#[derive(Debug, Clone, PartialEq)]
pub struct LongRow {
    pub case: Case,
    pub method: String,
    pub delta: f64,
    pub j_max: usize,
    pub arl: f64,
    pub se: f64,
    pub reps: usize,
}

impl LongRow {
    pub fn from_result(cfg: &ExperimentConfig, r: &MethodResult) -> Self {
        Self {
            case: cfg.case,
            method: r.method.label().to_string(),
            delta: cfg.delta,
            j_max: cfg.j_max,
            arl: r.summary.mean,
            se: r.summary.se,
            reps: r.summary.reps,
        }
    }
}

/// Writes `case,method,delta,j_max,arl,se,reps` rows with a header.
pub fn write_long_format<W: Write>(out: W, rows: &[LongRow]) -> Result<(), ExperimentError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(["case", "method", "delta", "j_max", "arl", "se", "reps"])?;
    for r in rows {
        w.write_record([
            r.case.label().to_string(),
            r.method.clone(),
            r.delta.to_string(),
            r.j_max.to_string(),
            format!("{:.4}", r.arl),
            format!("{:.4}", r.se),
            r.reps.to_string(),
        ])?;
    }
    w.flush().map_err(csv::Error::from)?;
    Ok(())
}
