//! Subcommand implementations, independent of argument parsing.

use std::fs;
use std::io::{self, BufRead, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use sprint_cusum::calibration::{calibrate, CalibrationConfig, CalibrationError, SprintFraction};
use sprint_cusum::cusum::{signal_check, CusumState};
use sprint_cusum::density::DensityError;
use sprint_cusum::prewhiten::{fit_aic, residuals, yule_walker_fit, PrewhitenError};
use thiserror::Error;

use crate::experiments::{
    arl_table, bootstrap_validity_study, known_f_comparison, paired_comparison, write_long_format, Case,
    ExperimentConfig, ExperimentError, KnownConfig, LongRow, Method, ValidityConfig,
};
use crate::io::{read_column_file, ColumnStream, InputError};
use crate::schedule_file::{ArSection, ScheduleFile, ScheduleFileError};

/// Failure classes, each with its own process exit code.
#[derive(Debug, Error)]
pub enum AppError {
    #[error("{0}")]
    Usage(String),
    #[error("{0}")]
    Data(String),
    #[error("{0}")]
    Numerical(String),
}

impl AppError {
    pub fn exit_code(&self) -> i32 {
        match self {
            AppError::Usage(_) => 1,
            AppError::Data(_) => 2,
            AppError::Numerical(_) => 3,
        }
    }
}

impl From<InputError> for AppError {
    fn from(e: InputError) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<ScheduleFileError> for AppError {
    fn from(e: ScheduleFileError) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<io::Error> for AppError {
    fn from(e: io::Error) -> Self {
        AppError::Data(e.to_string())
    }
}

impl From<CalibrationError> for AppError {
    fn from(e: CalibrationError) -> Self {
        match e {
            CalibrationError::InvalidConfig(_) => AppError::Usage(e.to_string()),
            CalibrationError::InsufficientPhaseOne { .. }
            | CalibrationError::Density(DensityError::TooFewPoints { .. })
            | CalibrationError::Density(DensityError::ZeroVariance)
            | CalibrationError::Density(DensityError::NonFinite(_)) => AppError::Data(e.to_string()),
            _ => AppError::Numerical(e.to_string()),
        }
    }
}

impl From<PrewhitenError> for AppError {
    fn from(e: PrewhitenError) -> Self {
        match e {
            PrewhitenError::TooShort { .. } | PrewhitenError::NonFinite(_) => AppError::Data(e.to_string()),
            _ => AppError::Numerical(e.to_string()),
        }
    }
}

impl From<ExperimentError> for AppError {
    fn from(e: ExperimentError) -> Self {
        match e {
            ExperimentError::Invalid(_) => AppError::Usage(e.to_string()),
            ExperimentError::Output(_) => AppError::Data(e.to_string()),
            _ => AppError::Numerical(e.to_string()),
        }
    }
}

/// `off`, `aic:<max_order>` or `fixed:<order>`.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Prewhiten {
    Off,
    Aic(usize),
    Fixed(usize),
}

impl FromStr for Prewhiten {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, String> {
        let bad = || format!("invalid prewhiten setting {s:?} (expected off, aic:<max_order> or fixed:<order>)");
        if s == "off" {
            return Ok(Prewhiten::Off);
        }
        let (kind, n) = s.split_once(':').ok_or_else(bad)?;
        let n: usize = n.parse().map_err(|_| bad())?;
        match kind {
            "aic" => Ok(Prewhiten::Aic(n)),
            "fixed" => Ok(Prewhiten::Fixed(n)),
            _ => Err(bad()),
        }
    }
}

pub fn parse_fraction(s: &str) -> Result<SprintFraction, String> {
    s.parse::<f64>()
        .ok()
        .and_then(SprintFraction::from_value)
        .ok_or_else(|| format!("sprint fraction must be 0.5, 0.75 or 1.0, got {s:?}"))
}

#[derive(Debug, Clone)]
pub struct CalibrateArgs {
    pub input: PathBuf,
    pub output: PathBuf,
    pub column: usize,
    pub seed: u64,
    pub arl0: f64,
    pub j_max: usize,
    pub fraction: SprintFraction,
    pub boot_reps: usize,
    pub tune_reps: usize,
    pub prewhiten: Prewhiten,
}

pub fn cmd_calibrate<W: Write>(args: &CalibrateArgs, out: &mut W) -> Result<ScheduleFile, AppError> {
    let raw = read_column_file(&args.input, args.column)?;
    let (data, ar) = match args.prewhiten {
        Prewhiten::Off => (raw.clone(), None),
        Prewhiten::Aic(max) | Prewhiten::Fixed(max) => {
            let model = match args.prewhiten {
                Prewhiten::Aic(_) => fit_aic(&raw, max)?,
                _ => yule_walker_fit(&raw, max)?,
            };
            let res = residuals(&raw, &model)?;
            let history = raw[raw.len() - model.order()..].to_vec();
            let section = ArSection { mu: model.mu, coeffs: model.coeffs.clone(), noise_var: model.noise_var, history };
            (res, Some(section))
        }
    };

    let mut cfg = CalibrationConfig::with_fraction(args.arl0, args.j_max, args.fraction);
    cfg.seed = args.seed;
    cfg.boot_reps = args.boot_reps;
    cfg.tune_reps = args.tune_reps;
    let calibration = calibrate(&data, &cfg)?;

    let mut file = ScheduleFile::new(&calibration.schedule, args.arl0, args.seed, &raw, calibration.standardization);
    file.ar = ar;
    fs::write(&args.output, file.render())?;

    let k = calibration.schedule.k();
    writeln!(out, "k = {k:.6}")?;
    if let Some(sel) = calibration.k_selection {
        writeln!(out, "allowance search: {} iterations, mean first sprint {:.3} ({:?})", sel.iterations, sel.estimated_sprint, sel.status)?;
    }
    if let Some(ar) = &file.ar {
        writeln!(out, "prewhitening: AR({}) coefficients {:?}", ar.coeffs.len(), ar.coeffs)?;
    }
    writeln!(out, "j_max = {}", calibration.schedule.j_max())?;
    writeln!(out, "achieved in-control ARL = {:.2} (target {})", calibration.tuning.rl, args.arl0)?;
    writeln!(out, "tuning iterations = {}", calibration.tuning.iterations)?;
    writeln!(out, "schedule written to {}", args.output.display())?;
    Ok(file)
}

#[derive(Debug, Clone)]
pub struct MonitorArgs {
    pub schedule: PathBuf,
    /// `None` or `-` reads standard input.
    pub input: Option<PathBuf>,
    pub column: usize,
    pub continue_after_signal: bool,
    pub log: Option<PathBuf>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Signal {
    pub n: u64,
    pub c: f64,
    pub t: u64,
    pub limit: f64,
}

/// Runs the stored schedule over a stream, writing the per-step log to `log`
/// and signal reports to `out`. Memory use does not grow with the stream.
pub fn monitor_stream<R: io::Read, L: Write, W: Write>(
    file: &ScheduleFile,
    input: R,
    column: usize,
    continue_after_signal: bool,
    log: &mut L,
    out: &mut W,
) -> Result<Vec<Signal>, AppError> {
    let schedule = file.schedule().map_err(|e| AppError::Data(e.to_string()))?;
    let st = file.standardization();
    let mut filter = file.residual_filter()?;
    let mut state = CusumState::new();
    let mut signals = Vec::new();
    let mut n = 0u64;
    writeln!(log, "n,x,z,c,t,limit")?;
    for item in ColumnStream::new(input, column) {
        let (_, x) = item?;
        n += 1;
        let innovation = match filter.as_mut() {
            Some(f) => f.push(x).expect("filter primed with full history"),
            None => x,
        };
        let z = st.apply(innovation);
        state.update(z, schedule.k());
        let limit = schedule.limit_for(state.t());
        let limit_text = limit.map_or_else(String::new, |h| format!("{h:.6}"));
        writeln!(log, "{n},{x},{z:.6},{:.6},{},{limit_text}", state.c(), state.t())?;
        if signal_check(&state, &schedule) {
            let s = Signal { n, c: state.c(), t: state.t(), limit: limit.expect("signal implies a limit") };
            writeln!(out, "signal at n={}: C={:.6} T={} limit={:.6}", s.n, s.c, s.t, s.limit)?;
            signals.push(s);
            if !continue_after_signal {
                break;
            }
            state.restart();
        }
    }
    if signals.is_empty() {
        writeln!(out, "no signal in {n} observations")?;
    }
    Ok(signals)
}

pub fn cmd_monitor<W: Write>(args: &MonitorArgs, out: &mut W) -> Result<Vec<Signal>, AppError> {
    let text = fs::read_to_string(&args.schedule)?;
    let file = ScheduleFile::parse(&text)?;
    let mut log: Box<dyn Write> = match &args.log {
        Some(p) => Box::new(io::BufWriter::new(fs::File::create(p)?)),
        None => Box::new(io::sink()),
    };
    let stdin_requested = args.input.as_deref().is_none_or(|p| p == Path::new("-"));
    let signals = if stdin_requested {
        let stdin = io::stdin();
        let lock: Box<dyn BufRead> = Box::new(stdin.lock());
        monitor_stream(&file, lock, args.column, args.continue_after_signal, &mut log, out)?
    } else {
        let path = args.input.as_ref().expect("checked above");
        let f = fs::File::open(path).map_err(|e| AppError::Data(format!("cannot read {}: {e}", path.display())))?;
        monitor_stream(&file, io::BufReader::new(f), args.column, args.continue_after_signal, &mut log, out)?
    };
    log.flush()?;
    Ok(signals)
}

#[derive(Debug, Clone)]
pub struct SimulateArgs {
    pub case: Case,
    pub methods: Vec<Method>,
    pub delta: f64,
    pub j_max: usize,
    pub reps: usize,
    pub m: usize,
    pub seed: u64,
    pub arl0: f64,
    pub boot_reps: usize,
    pub table1: bool,
    pub known: bool,
    pub long_format: Option<PathBuf>,
}

pub fn cmd_simulate<W: Write>(args: &SimulateArgs, out: &mut W) -> Result<(), AppError> {
    if args.table1 {
        let cfg = ValidityConfig { seed: args.seed, ..ValidityConfig::default() };
        let table = bootstrap_validity_study(&cfg)?;
        writeln!(out, "j\tuniformity p (%)")?;
        for (j, p) in table.uniformity_p.iter().enumerate() {
            writeln!(out, "{}\t{:.2}", j + 1, 100.0 * p)?;
        }
        return Ok(());
    }
    if args.known {
        let mut cfg = KnownConfig::new(args.case);
        cfg.seed = args.seed;
        cfg.arl0 = args.arl0;
        cfg.j_max = args.j_max;
        cfg.target_sprint = 0.75 * args.j_max as f64;
        cfg.boot_reps = args.boot_reps;
        cfg.reps = args.reps;
        let r = known_f_comparison(&cfg)?;
        writeln!(out, "method\tarl\tse\treps")?;
        writeln!(out, "B\t{:.2}\t{:.2}\t{}", r.bootstrap.mean, r.bootstrap.se, r.bootstrap.reps)?;
        writeln!(out, "C\t{:.2}\t{:.2}\t{}", r.classical.mean, r.classical.se, r.classical.reps)?;
        return Ok(());
    }
    let mut cfg = ExperimentConfig::new(args.case, args.delta, args.j_max);
    cfg.reps = args.reps;
    cfg.m = args.m;
    cfg.seed = args.seed;
    cfg.arl0 = args.arl0;
    cfg.boot_reps = args.boot_reps;
    let results = arl_table(&cfg, &args.methods)?;
    writeln!(out, "method\tarl\tse\treps\ttruncated")?;
    for r in &results {
        writeln!(out, "{}\t{:.2}\t{:.2}\t{}\t{}", r.method.label(), r.summary.mean, r.summary.se, r.summary.reps, r.summary.truncated)?;
    }
    if let Some((first, rest)) = results.split_first() {
        let base: Vec<f64> = first.run_lengths.iter().map(|&x| x as f64).collect();
        for r in rest {
            let other: Vec<f64> = r.run_lengths.iter().map(|&x| x as f64).collect();
            let p = paired_comparison(&base, &other)?;
            writeln!(out, "paired t-test {} vs {}: p = {:.4}", first.method.label(), r.method.label(), p)?;
        }
    }
    if let Some(path) = &args.long_format {
        let rows: Vec<LongRow> = results.iter().map(|r| LongRow::from_result(&cfg, r)).collect();
        write_long_format(fs::File::create(path)?, &rows)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use sprint_cusum::cusum::LimitSchedule;
    use sprint_cusum::density::Standardization;

    #[test]
    fn prewhiten_setting() {
        assert_eq!("off".parse::<Prewhiten>().unwrap(), Prewhiten::Off);
        assert_eq!("aic:6".parse::<Prewhiten>().unwrap(), Prewhiten::Aic(6));
        assert_eq!("fixed:2".parse::<Prewhiten>().unwrap(), Prewhiten::Fixed(2));
        assert!("aic".parse::<Prewhiten>().is_err());
        assert!("ma:2".parse::<Prewhiten>().is_err());
    }

    #[test]
    fn fraction_values() {
        assert_eq!(parse_fraction("0.75").unwrap(), SprintFraction::ThreeQuarters);
        assert_eq!(parse_fraction("1").unwrap(), SprintFraction::Full);
        assert!(parse_fraction("0.6").is_err());
    }

    #[test]
    fn constructed_signal_at_step_seven() {
        let mut limits = vec![100.0; 10];
        limits[0] = 2.0;
        let sched = LimitSchedule::new(0.0, limits, 100.0).unwrap();
        let file = ScheduleFile::new(&sched, 200.0, 0, &[], Standardization::identity());
        // Steps 1-6 return to zero; step 7 jumps above h_1 = 2.
        let input = "-1\n-1\n-1\n-1\n-1\n-1\n3\n-1\n";
        let mut log = Vec::new();
        let mut out = Vec::new();
        let s = monitor_stream(&file, input.as_bytes(), 0, false, &mut log, &mut out).unwrap();
        assert_eq!(s.len(), 1);
        assert_eq!(s[0].n, 7);
        assert!(String::from_utf8(out).unwrap().starts_with("signal at n=7"));
        assert_eq!(String::from_utf8(log).unwrap().lines().count(), 8);
    }

    #[test]
    fn continue_restarts_state() {
        let sched = LimitSchedule::constant(0.0, 2.0).unwrap();
        let file = ScheduleFile::new(&sched, 200.0, 0, &[], Standardization::identity());
        let input = "3\n3\n1\n";
        let (mut log, mut out) = (Vec::new(), Vec::new());
        let s = monitor_stream(&file, input.as_bytes(), 0, true, &mut log, &mut out).unwrap();
        let ns: Vec<u64> = s.iter().map(|s| s.n).collect();
        assert_eq!(ns, vec![1, 2]);
    }
}
