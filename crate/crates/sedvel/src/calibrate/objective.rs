//! Penalized-MAP objectives in an unconstrained reparameterization.
//!
//! Positive parameters are optimized on the log scale; prior densities pick
//! up the Jacobian term so the transformed objective is the exact posterior
//! density in transformed coordinates. The spatially varying model uses the
//! non-centered parameterization `dBr = omega * L(ell) * u` with
//! `u ~ N(0, I)`, which keeps the joint mode well defined when the field
//! scale is estimated alongside the per-profile adjustments.

use std::sync::{Arc, Mutex};

use nalgebra::DMatrix;

use crate::coeffs::{CoefficientSet, Z_STAR};
use crate::error::Result;
use crate::geostat::cholesky_with_jitter;
use crate::profile::{sigmoid, softplus, vs0_of};

use super::{log_likelihood, PriorSpec, ProfileObs, StationaryParams};

const LN_2PI: f64 = 1.837877066409345;

pub(crate) const STAT_NAMES: [&str; 7] = ["vs30_ref", "vs30_w", "r1", "r2", "r3", "s2", "sigma"];
pub(crate) const STAT_LOG: [bool; 7] = [false, true, false, true, true, true, true];

pub(crate) fn stat_to_t(p: &StationaryParams) -> Vec<f64> {
    let raw = [p.vs30_ref, p.vs30_w, p.r1, p.r2, p.r3, p.s2, p.sigma];
    raw.iter().zip(STAT_LOG).map(|(&v, log)| if log { v.ln() } else { v }).collect()
}

pub(crate) fn stat_from_t(t: &[f64]) -> StationaryParams {
    let v: Vec<f64> =
        t.iter().zip(STAT_LOG).map(|(&x, log)| if log { x.exp() } else { x }).collect();
    StationaryParams {
        vs30_ref: v[0],
        vs30_w: v[1],
        r1: v[2],
        r2: v[3],
        r3: v[4],
        s2: v[5],
        sigma: v[6],
    }
}

/// Negative transformed log posterior of the stationary model.
pub(crate) struct StationaryObjective<'a> {
    pub obs: &'a [ProfileObs],
    pub priors: &'a PriorSpec,
}

impl StationaryObjective<'_> {
    pub fn eval(&self, t: &[f64]) -> f64 {
        let p = stat_from_t(t);
        if !p.vs30_w.is_finite()
            || !p.r2.is_finite()
            || !p.r3.is_finite()
            || !p.s2.is_finite()
            || !p.sigma.is_finite()
        {
            return f64::INFINITY;
        }
        let mut prior = self.priors.vs30_ref.ln_pdf(p.vs30_ref)
            + self.priors.vs30_w.ln_pdf(p.vs30_w)
            + self.priors.r1.ln_pdf(p.r1)
            + self.priors.r2.ln_pdf(p.r2)
            + self.priors.r3.ln_pdf(p.r3)
            + self.priors.s2.ln_pdf(p.s2)
            + self.priors.sigma.ln_pdf(p.sigma);
        // Jacobian of the log transforms.
        for (i, log) in STAT_LOG.iter().enumerate() {
            if *log {
                prior += t[i];
            }
        }
        let ll = log_likelihood(self.obs, &p, None);
        let neg = -(prior + ll);
        if neg.is_nan() {
            f64::INFINITY
        } else {
            neg
        }
    }
}

pub(crate) const SPATIAL_SCALAR_NAMES: [&str; 5] = ["dr1", "dr2", "sigma", "ell_km", "omega"];
pub(crate) const SPATIAL_SCALAR_LOG: [bool; 5] = [false, false, true, true, true];
pub(crate) const IDX_SIGMA: usize = 2;
pub(crate) const IDX_ELL: usize = 3;
pub(crate) const IDX_OMEGA: usize = 4;
pub(crate) const N_SCALARS: usize = 5;

struct SpatialProfilePre {
    vs30: f64,
    /// k-scaling constant at the fixed base coefficients.
    c0: f64,
    /// Sigmoid value entering the dr2 adjustment.
    s: f64,
    /// Curvature, fixed at the base coefficients.
    n_curv: f64,
    /// (mid depth, observed ln vs) pairs.
    samples: Vec<(f64, f64)>,
}

/// Negative transformed log posterior of the spatially varying model
/// (non-centered in the slope-adjustment field).
pub(crate) struct SpatialObjective {
    profiles: Vec<SpatialProfilePre>,
    dists: DMatrix<f64>,
    priors: PriorSpec,
    pub n: usize,
}

impl SpatialObjective {
    pub fn new(obs: &[ProfileObs], base: &CoefficientSet, priors: &PriorSpec) -> Result<Self> {
        let n = obs.len();
        let mut profiles = Vec::with_capacity(n);
        for o in obs {
            let x = (o.vs30.ln() - base.vs30_ref) / base.vs30_w;
            let s = sigmoid(x);
            profiles.push(SpatialProfilePre {
                vs30: o.vs30,
                c0: base.r1 + base.r2 * s + base.r3 * base.vs30_w * softplus(x),
                s,
                n_curv: 1.0 + base.s2 * s,
                samples: o.samples.clone(),
            });
        }
        let mut dists = DMatrix::zeros(n, n);
        for i in 0..n {
            let (xi, yi) = obs[i].xy_km.expect("spatial observations carry coordinates");
            for j in 0..n {
                let (xj, yj) = obs[j].xy_km.expect("spatial observations carry coordinates");
                dists[(i, j)] = (xi - xj).hypot(yi - yj);
            }
        }
        Ok(Self { profiles, dists, priors: priors.clone(), n })
    }

    /// Lower Cholesky factor of the unit-sill correlation matrix at `ell`.
    pub fn corr_chol_l(&self, ell: f64) -> Result<DMatrix<f64>> {
        let n = self.n;
        let mut corr = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                corr[(i, j)] = (-self.dists[(i, j)] / ell).exp();
            }
        }
        Ok(cholesky_with_jitter(&corr, "spatial correlation")?.l())
    }

    /// Slope adjustments implied by the transformed parameter vector.
    pub fn dbr_from_t(&self, t: &[f64]) -> Result<Vec<f64>> {
        let ell = t[IDX_ELL].exp();
        let omega = t[IDX_OMEGA].exp();
        let l = self.corr_chol_l(ell)?;
        Ok(self.dbr_given(&l, omega, &t[N_SCALARS..]))
    }

    fn dbr_given(&self, l: &DMatrix<f64>, omega: f64, u: &[f64]) -> Vec<f64> {
        let n = self.n;
        let mut dbr = vec![0.0; n];
        for i in 0..n {
            let mut acc = 0.0;
            for j in 0..=i {
                acc += l[(i, j)] * u[j];
            }
            dbr[i] = omega * acc;
        }
        dbr
    }

    /// Objective with a caller-supplied correlation factor (valid whenever
    /// the perturbed coordinate is not `ln ell`).
    pub fn eval_with_chol(&self, t: &[f64], l: &DMatrix<f64>) -> f64 {
        let (dr1, dr2) = (t[0], t[1]);
        let sigma = t[IDX_SIGMA].exp();
        let ell = t[IDX_ELL].exp();
        let omega = t[IDX_OMEGA].exp();
        if !sigma.is_finite() || !omega.is_finite() || !ell.is_finite() {
            return f64::INFINITY;
        }
        let u = &t[N_SCALARS..];
        let dbr = self.dbr_given(l, omega, u);

        let mut ll = 0.0;
        let mut m_total = 0usize;
        for (pre, &dbr_i) in self.profiles.iter().zip(&dbr) {
            let ln_k = pre.c0 + dr1 + dr2 * pre.s + dbr_i;
            let k = ln_k.exp();
            if !k.is_finite() || k <= 0.0 {
                return f64::INFINITY;
            }
            let vs0 = match vs0_of(pre.vs30, k, pre.n_curv) {
                Ok(v) if v.is_finite() && v > 0.0 => v,
                _ => return f64::INFINITY,
            };
            let ln_vs0 = vs0.ln();
            for &(mid, ln_vs) in &pre.samples {
                let model = if mid <= Z_STAR {
                    ln_vs0
                } else {
                    ln_vs0 + (k * (mid - Z_STAR)).ln_1p() / pre.n_curv
                };
                let e = ln_vs - model;
                ll -= 0.5 * e * e;
            }
            m_total += pre.samples.len();
        }
        ll /= sigma * sigma;
        ll -= m_total as f64 * (sigma.ln() + 0.5 * LN_2PI);

        let mut prior = self.priors.dr1.ln_pdf(dr1) + self.priors.dr2.ln_pdf(dr2);
        prior += self.priors.sigma.ln_pdf(sigma) + t[IDX_SIGMA];
        prior += self.priors.ell.ln_pdf(ell) + t[IDX_ELL];
        prior += self.priors.omega.ln_pdf(omega) + t[IDX_OMEGA];
        let u_norm2: f64 = u.iter().map(|ui| ui * ui).sum();
        prior += -0.5 * u_norm2 - 0.5 * self.n as f64 * LN_2PI;

        let neg = -(ll + prior);
        if neg.is_nan() {
            f64::INFINITY
        } else {
            neg
        }
    }
}

/// Evaluation wrapper that reuses correlation Cholesky factors across calls
/// with the same `ln ell` coordinate: central differences and Hessian stencils
/// revisit at most a handful of distinct values.
pub(crate) struct CachedSpatialEval<'a> {
    obj: &'a SpatialObjective,
    cache: Mutex<Vec<(u64, Arc<DMatrix<f64>>)>>,
}

impl<'a> CachedSpatialEval<'a> {
    pub fn new(obj: &'a SpatialObjective) -> Self {
        Self { obj, cache: Mutex::new(Vec::new()) }
    }

    pub fn eval(&self, t: &[f64]) -> f64 {
        let t_ell = t[IDX_ELL];
        let ell = t_ell.exp();
        if !ell.is_finite() || ell <= 0.0 {
            return f64::INFINITY;
        }
        let key = t_ell.to_bits();
        let cached = {
            let cache = self.cache.lock().unwrap();
            cache.iter().find(|(k, _)| *k == key).map(|(_, l)| Arc::clone(l))
        };
        let l = match cached {
            Some(l) => l,
            None => match self.obj.corr_chol_l(ell) {
                Ok(l) => {
                    let l = Arc::new(l);
                    let mut cache = self.cache.lock().unwrap();
                    if cache.len() >= 8 {
                        cache.remove(0);
                    }
                    cache.push((key, Arc::clone(&l)));
                    l
                }
                Err(_) => return f64::INFINITY,
            },
        };
        self.obj.eval_with_chol(t, &l)
    }
}
