//! Prior distribution descriptors: log densities and sampling.

use rand::Rng;
use statrs::distribution::Continuous;

use crate::error::{domain, Result};

/// A univariate prior. Conventions:
/// Gamma(shape, scale) has mean shape*scale; InverseGamma(shape, scale) has
/// mode scale/(shape + 1); LogNormal(mu, sd) parameters describe ln x;
/// HalfNormal(sd) is the zero-truncated Normal(0, sd).
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Dist {
    Normal { mean: f64, sd: f64 },
    Gamma { shape: f64, scale: f64 },
    LogNormal { mu: f64, sd: f64 },
    Exponential { rate: f64 },
    InverseGamma { shape: f64, scale: f64 },
    HalfNormal { sd: f64 },
}

impl Dist {
    pub fn validate(&self) -> Result<()> {
        let ok = match *self {
            Dist::Normal { sd, .. } => sd > 0.0,
            Dist::Gamma { shape, scale } => shape > 0.0 && scale > 0.0,
            Dist::LogNormal { sd, .. } => sd > 0.0,
            Dist::Exponential { rate } => rate > 0.0,
            Dist::InverseGamma { shape, scale } => shape > 0.0 && scale > 0.0,
            Dist::HalfNormal { sd } => sd > 0.0,
        };
        if ok {
            Ok(())
        } else {
            Err(domain(format!("invalid prior parameters: {self:?}")))
        }
    }

    /// Log density at `x`; negative infinity outside the support.
    pub fn ln_pdf(&self, x: f64) -> f64 {
        if !x.is_finite() {
            return f64::NEG_INFINITY;
        }
        match *self {
            Dist::Normal { mean, sd } => {
                statrs::distribution::Normal::new(mean, sd).unwrap().ln_pdf(x)
            }
            Dist::Gamma { shape, scale } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                statrs::distribution::Gamma::new(shape, 1.0 / scale).unwrap().ln_pdf(x)
            }
            Dist::LogNormal { mu, sd } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                statrs::distribution::LogNormal::new(mu, sd).unwrap().ln_pdf(x)
            }
            Dist::Exponential { rate } => {
                if x < 0.0 {
                    return f64::NEG_INFINITY;
                }
                statrs::distribution::Exp::new(rate).unwrap().ln_pdf(x)
            }
            Dist::InverseGamma { shape, scale } => {
                if x <= 0.0 {
                    return f64::NEG_INFINITY;
                }
                statrs::distribution::InverseGamma::new(shape, scale).unwrap().ln_pdf(x)
            }
            Dist::HalfNormal { sd } => {
                if x < 0.0 {
                    return f64::NEG_INFINITY;
                }
                std::f64::consts::LN_2
                    + statrs::distribution::Normal::new(0.0, sd).unwrap().ln_pdf(x)
            }
        }
    }

    /// Draw one value (used for multistart initial points).
    pub fn sample<R: Rng>(&self, rng: &mut R) -> f64 {
        use rand_distr::Distribution as _;
        match *self {
            Dist::Normal { mean, sd } => rand_distr::Normal::new(mean, sd).unwrap().sample(rng),
            Dist::Gamma { shape, scale } => {
                rand_distr::Gamma::new(shape, scale).unwrap().sample(rng)
            }
            Dist::LogNormal { mu, sd } => rand_distr::LogNormal::new(mu, sd).unwrap().sample(rng),
            Dist::Exponential { rate } => rand_distr::Exp::new(rate).unwrap().sample(rng),
            Dist::InverseGamma { shape, scale } => {
                1.0 / rand_distr::Gamma::new(shape, 1.0 / scale).unwrap().sample(rng)
            }
            Dist::HalfNormal { sd } => {
                rand_distr::Normal::new(0.0, sd).unwrap().sample(rng).abs()
            }
        }
    }
}
