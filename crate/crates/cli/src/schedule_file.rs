//! Calibrated schedules on disk.
//!
//! The file is TOML written by hand so that every float carries 17
//! significant digits and parses back to the identical `f64`.

use std::fmt::Write as _;

use serde::Deserialize;
use sha2::{Digest, Sha256};
use sprint_cusum::cusum::{CusumError, LimitSchedule};
use sprint_cusum::density::Standardization;
use sprint_cusum::prewhiten::{ArModel, PrewhitenError, ResidualFilter};
use thiserror::Error;

pub const FORMAT_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum ScheduleFileError {
    #[error("cannot parse schedule file: {0}")]
    Parse(#[from] toml::de::Error),
    #[error("unsupported format_version {0} (expected {FORMAT_VERSION})")]
    Version(u32),
    #[error("inconsistent schedule file: {0}")]
    Inconsistent(String),
    #[error(transparent)]
    Schedule(#[from] CusumError),
    #[error(transparent)]
    Model(#[from] PrewhitenError),
}

/// AR model used to prewhiten the monitored stream, with the last `r`
/// Phase-I observations so residuals are available from the first new value.
#[derive(Debug, Clone, PartialEq, Deserialize)]
pub struct ArSection {
    pub mu: f64,
    pub coeffs: Vec<f64>,
    pub noise_var: f64,
    pub history: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ScheduleFile {
    pub format_version: u32,
    pub k: f64,
    pub j_max: usize,
    pub limits: Vec<f64>,
    pub h_star: f64,
    pub arl0: f64,
    pub created_with_seed: u64,
    /// SHA-256 of the Phase-I values (little-endian `f64` bytes), hex.
    pub phase1_fingerprint: String,
    /// Monitored values are mapped through `(x - center) / scale` first.
    pub center: f64,
    pub scale: f64,
    pub ar: Option<ArSection>,
}

#[derive(Deserialize)]
#[serde(deny_unknown_fields)]
struct Raw {
    format_version: u32,
    k: f64,
    j_max: usize,
    limits: Vec<f64>,
    h_star: f64,
    arl0: f64,
    created_with_seed: String,
    phase1_fingerprint: String,
    center: f64,
    scale: f64,
    ar: Option<ArSection>,
}

pub fn fingerprint(values: &[f64]) -> String {
    let mut hasher = Sha256::new();
    for v in values {
        hasher.update(v.to_le_bytes());
    }
    hasher.finalize().iter().fold(String::with_capacity(64), |mut s, b| {
        let _ = write!(s, "{b:02x}");
        s
    })
}

fn float(x: f64) -> String {
    if x.is_finite() {
        format!("{x:.16e}")
    } else if x.is_nan() {
        "nan".into()
    } else if x > 0.0 {
        "inf".into()
    } else {
        "-inf".into()
    }
}

fn float_array(xs: &[f64]) -> String {
    let items: Vec<String> = xs.iter().map(|&x| format!("  {},\n", float(x))).collect();
    format!("[\n{}]", items.concat())
}

impl ScheduleFile {
    pub fn new(
        schedule: &LimitSchedule,
        arl0: f64,
        seed: u64,
        phase1: &[f64],
        standardization: Standardization,
    ) -> Self {
        Self {
            format_version: FORMAT_VERSION,
            k: schedule.k(),
            j_max: schedule.j_max(),
            limits: schedule.limits().to_vec(),
            h_star: schedule.h_star(),
            arl0,
            created_with_seed: seed,
            phase1_fingerprint: fingerprint(phase1),
            center: standardization.center,
            scale: standardization.scale,
            ar: None,
        }
    }

    pub fn render(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "format_version = {}", self.format_version);
        let _ = writeln!(out, "k = {}", float(self.k));
        let _ = writeln!(out, "j_max = {}", self.j_max);
        let _ = writeln!(out, "h_star = {}", float(self.h_star));
        let _ = writeln!(out, "arl0 = {}", float(self.arl0));
        let _ = writeln!(out, "created_with_seed = \"{}\"", self.created_with_seed);
        let _ = writeln!(out, "phase1_fingerprint = \"{}\"", self.phase1_fingerprint);
        let _ = writeln!(out, "center = {}", float(self.center));
        let _ = writeln!(out, "scale = {}", float(self.scale));
        let _ = writeln!(out, "limits = {}", float_array(&self.limits));
        if let Some(ar) = &self.ar {
            let _ = writeln!(out, "\n[ar]");
            let _ = writeln!(out, "mu = {}", float(ar.mu));
            let _ = writeln!(out, "noise_var = {}", float(ar.noise_var));
            let _ = writeln!(out, "coeffs = {}", float_array(&ar.coeffs));
            let _ = writeln!(out, "history = {}", float_array(&ar.history));
        }
        out
    }

    pub fn parse(text: &str) -> Result<Self, ScheduleFileError> {
        let raw: Raw = toml::from_str(text)?;
        if raw.format_version != FORMAT_VERSION {
            return Err(ScheduleFileError::Version(raw.format_version));
        }
        let seed = raw
            .created_with_seed
            .parse::<u64>()
            .map_err(|_| ScheduleFileError::Inconsistent("created_with_seed is not a u64".into()))?;
        let file = Self {
            format_version: raw.format_version,
            k: raw.k,
            j_max: raw.j_max,
            limits: raw.limits,
            h_star: raw.h_star,
            arl0: raw.arl0,
            created_with_seed: seed,
            phase1_fingerprint: raw.phase1_fingerprint,
            center: raw.center,
            scale: raw.scale,
            ar: raw.ar,
        };
        file.validate()?;
        Ok(file)
    }

    fn validate(&self) -> Result<(), ScheduleFileError> {
        if self.limits.len() != self.j_max {
            return Err(ScheduleFileError::Inconsistent(format!(
                "j_max = {} but {} limits",
                self.j_max,
                self.limits.len()
            )));
        }
        if !(self.scale > 0.0 && self.scale.is_finite()) || !self.center.is_finite() {
            return Err(ScheduleFileError::Inconsistent("scale must be positive".into()));
        }
        self.schedule()?;
        if let Some(ar) = &self.ar {
            if ar.history.len() < ar.coeffs.len() {
                return Err(ScheduleFileError::Inconsistent(format!(
                    "AR order {} exceeds stored history of {} values",
                    ar.coeffs.len(),
                    ar.history.len()
                )));
            }
            self.ar_model()?;
        }
        Ok(())
    }

    pub fn schedule(&self) -> Result<LimitSchedule, CusumError> {
        LimitSchedule::new(self.k, self.limits.clone(), self.h_star)
    }

    pub fn standardization(&self) -> Standardization {
        Standardization { center: self.center, scale: self.scale }
    }

    pub fn ar_model(&self) -> Result<Option<ArModel>, PrewhitenError> {
        self.ar
            .as_ref()
            .map(|ar| ArModel::new(ar.mu, ar.coeffs.clone(), ar.noise_var))
            .transpose()
    }

    /// Residual filter primed with the stored history, if a model is present.
    pub fn residual_filter(&self) -> Result<Option<ResidualFilter>, ScheduleFileError> {
        let Some(model) = self.ar_model()? else { return Ok(None) };
        let history = &self.ar.as_ref().expect("model implies section").history;
        if history.len() < model.order() {
            return Err(ScheduleFileError::Inconsistent("AR order exceeds stored history".into()));
        }
        Ok(Some(ResidualFilter::with_history(model, history)))
    }
}
