//! Sedimentary shear-wave velocity modeling engine.
//!
//! Generates Vs30-conditioned median velocity profiles and stochastic
//! realizations, conditions a spatially varying slope adjustment on measured
//! profiles by Gaussian-process kriging, calibrates model coefficients from
//! profile datasets by penalized MAP, merges sedimentary columns with a
//! background community velocity model, and evaluates near-surface
//! amplification with linear 1D site response and goodness-of-fit scoring.

pub mod calibrate;
pub mod coeffs;
pub mod column;
pub mod error;
pub mod geostat;
pub mod merge;
pub mod profile;
pub mod rng;
pub mod siteresponse;
pub mod util;

pub use coeffs::{CoefficientSet, Z_STAR};
pub use column::{Layer, LayeredProfile, Provenance};
pub use error::{Error, Result};
pub use profile::{DiscretizationRule, ProfileParams};
