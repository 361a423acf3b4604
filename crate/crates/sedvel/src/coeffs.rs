//! Model coefficient sets and their on-disk JSON format.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{data, domain, Result};

/// Depth at which the profile switches from constant velocity to the power
/// branch. Fixed by the model parametrization.
pub const Z_STAR: f64 = 2.5;

/// Fitted scalars of the velocity model.
///
/// The mandatory block holds the Vs30-scaling coefficients and the ln-space
/// residual standard deviation. `ell_km`/`omega` (spatial correlation length
/// and scale of the slope-adjustment field) are present for the spatially
/// varying model only. `range_r_m`/`sill_s` describe the along-depth residual
/// semivariogram. Per-profile slope adjustments are carried separately by
/// [`crate::geostat::SpatialField`].
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CoefficientSet {
    /// Log-velocity midpoint of the Vs30 transition (ln m/sec).
    pub vs30_ref: f64,
    /// Transition width (ln units, > 0).
    pub vs30_w: f64,
    /// Log-slope intercept.
    pub r1: f64,
    /// Sigmoid slope gain (>= 0).
    pub r2: f64,
    /// High-Vs30 log-log slope rate (>= 0).
    pub r3: f64,
    /// Curvature gain (> 0).
    pub s2: f64,
    /// Residual standard deviation in ln space (> 0).
    pub sigma: f64,
    /// Constant-velocity depth; must equal 2.5 m.
    pub z_star: f64,
    /// Spatial correlation length of the slope adjustment (km).
    pub ell_km: Option<f64>,
    /// Scale of the slope-adjustment field.
    pub omega: Option<f64>,
    /// Along-depth semivariogram correlation length (m).
    pub range_r_m: Option<f64>,
    /// Along-depth semivariogram sill (ln variance).
    pub sill_s: Option<f64>,
}

impl CoefficientSet {
    /// Bundled stationary-model preset (posterior medians).
    pub fn stationary_tab1() -> Self {
        serde_json::from_str(include_str!("../data/stationary_tab1.json"))
            .expect("bundled stationary preset parses")
    }

    /// Bundled spatially-varying-model preset (posterior medians; the shared
    /// scaling coefficients keep their fixed stationary values).
    pub fn spatial_tab2() -> Self {
        serde_json::from_str(include_str!("../data/spatial_tab2.json"))
            .expect("bundled spatial preset parses")
    }

    /// Stationary preset with posterior means instead of medians.
    pub fn stationary_tab1_mean() -> Self {
        Self {
            vs30_ref: 6.5045,
            vs30_w: 0.4368,
            r1: -2.2960,
            r2: 5.4669,
            r3: 0.4236,
            s2: 7.1685,
            sigma: 0.3759,
            ..Self::stationary_tab1()
        }
    }

    /// Spatially varying preset with posterior means instead of medians.
    pub fn spatial_tab2_mean() -> Self {
        Self {
            r1: -2.6097,
            r2: 5.9316,
            sigma: 0.2807,
            ell_km: Some(1.9471),
            omega: Some(0.3159),
            ..Self::spatial_tab2()
        }
    }

    /// Check the coefficient invariants.
    pub fn validate(&self) -> Result<()> {
        if !(self.vs30_w > 0.0) {
            return Err(domain(format!("vs30_w must be > 0, got {}", self.vs30_w)));
        }
        if !(self.s2 > 0.0) {
            return Err(domain(format!("s2 must be > 0, got {}", self.s2)));
        }
        if !(self.sigma > 0.0) {
            return Err(domain(format!("sigma must be > 0, got {}", self.sigma)));
        }
        if !(self.r2 >= 0.0) {
            return Err(domain(format!("r2 must be >= 0, got {}", self.r2)));
        }
        if !(self.r3 >= 0.0) {
            return Err(domain(format!("r3 must be >= 0, got {}", self.r3)));
        }
        if self.z_star != Z_STAR {
            return Err(domain(format!(
                "z_star is fixed at {Z_STAR} m, got {}",
                self.z_star
            )));
        }
        match (self.ell_km, self.omega) {
            (None, None) => {}
            (Some(ell), Some(omega)) => {
                if !(ell > 0.0) {
                    return Err(domain(format!("ell_km must be > 0, got {ell}")));
                }
                if !(omega >= 0.0) {
                    return Err(domain(format!("omega must be >= 0, got {omega}")));
                }
            }
            _ => {
                return Err(domain(
                    "spatial block requires both ell_km and omega".to_string(),
                ))
            }
        }
        if let Some(r) = self.range_r_m {
            if !(r > 0.0) {
                return Err(domain(format!("range_r_m must be > 0, got {r}")));
            }
        }
        if let Some(s) = self.sill_s {
            if !(s >= 0.0) {
                return Err(domain(format!("sill_s must be >= 0, got {s}")));
            }
        }
        Ok(())
    }

    /// True when the spatial block is present.
    pub fn has_spatial(&self) -> bool {
        self.ell_km.is_some()
    }

    pub fn from_json_file(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| data(format!("{}: {e}", path.as_ref().display())))?;
        let set: Self = serde_json::from_str(&text)?;
        set.validate()?;
        Ok(set)
    }

    pub fn to_json_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }
}
