//! Linear 1D SH-wave site response: layered transfer functions, Ricker
//! input ensembles, ground-motion intensity measures, and goodness-of-fit
//! scoring in profile-relative frequency bands.

mod gof;
mod ims;
mod transfer;
mod wavelet;

pub use gof::{
    evaluate_models, gof_score, write_gof_aggregate_csv, write_gof_rows_csv, Band, BandRule,
    BackgroundGenerator, CandidateGenerator, GofAggregateRow, GofReport, GofRow, GofScores,
    IdentityGenerator, ModelGenerator, ProfileMode, RealizationConfig, ScaledGenerator,
};
pub use ims::{
    band_pass, default_psa_periods, intensity_measures, read_motion, write_motion, ImSet,
};
pub use transfer::{
    default_density, propagate, transfer_function, transfer_function_with_density, HalfSpace,
};
pub use wavelet::{ensemble_input, ricker, ricker_spectrum};

use crate::error::{domain, Result};

pub const GRAVITY: f64 = 9.80665;

/// Acceleration units declared by a motion record.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AccelUnits {
    G,
    MetersPerSecond2,
}

impl AccelUnits {
    pub fn label(&self) -> &'static str {
        match self {
            AccelUnits::G => "g",
            AccelUnits::MetersPerSecond2 => "m/s2",
        }
    }

    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "g" => Ok(AccelUnits::G),
            "m/s2" => Ok(AccelUnits::MetersPerSecond2),
            other => Err(domain(format!("unknown acceleration units '{other}'"))),
        }
    }
}

/// A uniformly sampled acceleration time series.
#[derive(Clone, Debug, PartialEq)]
pub struct MotionRecord {
    pub dt: f64,
    pub acc: Vec<f64>,
    pub units: AccelUnits,
    pub label: String,
}

/// Minimum record length.
pub const MIN_SAMPLES: usize = 256;

impl MotionRecord {
    pub fn new(dt: f64, acc: Vec<f64>, units: AccelUnits, label: impl Into<String>) -> Result<Self> {
        if !(dt > 0.0) {
            return Err(domain(format!("dt must be > 0, got {dt}")));
        }
        if acc.len() < MIN_SAMPLES {
            return Err(domain(format!(
                "motion needs >= {MIN_SAMPLES} samples, got {}",
                acc.len()
            )));
        }
        if acc.iter().any(|a| !a.is_finite()) {
            return Err(domain("motion contains non-finite samples".to_string()));
        }
        Ok(Self { dt, acc, units, label: label.into() })
    }

    pub fn duration(&self) -> f64 {
        self.acc.len() as f64 * self.dt
    }

    /// Acceleration samples in m/s^2 regardless of declared units.
    pub fn acc_si(&self) -> Vec<f64> {
        match self.units {
            AccelUnits::MetersPerSecond2 => self.acc.clone(),
            AccelUnits::G => self.acc.iter().map(|a| a * GRAVITY).collect(),
        }
    }
}

pub(crate) fn next_pow2(n: usize) -> usize {
    n.next_power_of_two()
}

/// Global knobs of the site-response pipeline.
#[derive(Clone, Debug)]
pub struct SiteResponseConfig {
    /// Small-strain damping ratio of the linear analyses.
    pub damping: f64,
    /// Half-space velocity floor under each column (m/sec).
    pub halfspace_min_vs: f64,
    /// Oscillator periods of the response spectrum (s).
    pub psa_periods: Vec<f64>,
    /// Frequency-band construction around the fundamental frequency.
    pub band_rule: BandRule,
    /// Vs30 bin edges of the report aggregation (m/sec).
    pub vs30_bin_edges: Vec<f64>,
}

impl Default for SiteResponseConfig {
    fn default() -> Self {
        Self {
            damping: 0.02,
            halfspace_min_vs: 1000.0,
            psa_periods: default_psa_periods(),
            band_rule: BandRule::default(),
            vs30_bin_edges: vec![100.0, 200.0, 300.0, 400.0, 600.0, 800.0, 1200.0],
        }
    }
}
