//! Desk-scale hierarchical calibration: prior specifications, the ln-space
//! Gaussian likelihood, penalized-MAP estimation of the stationary and
//! spatially varying coefficients, and synthetic-dataset generation for
//! recovery tests.
//!
//! The optimizer maximizes the log posterior by quasi-Newton iteration with
//! central-difference gradients in an unconstrained reparameterization
//! (log-transformed positive parameters; prior densities include the
//! Jacobian). Reported parameter uncertainties come from the inverse
//! curvature at the optimum. The spatially varying fit estimates the
//! per-profile slope adjustments jointly with (dr1, dr2, sigma) and the
//! kernel hyperparameters, holding the remaining scaling coefficients at
//! their stationary values.

mod bfgs;
mod dist;
mod objective;
mod synth;

use std::collections::BTreeMap;
use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use crate::coeffs::CoefficientSet;
use crate::column::LayeredProfile;
use crate::error::{data, domain, Result};
use crate::geostat::{cholesky_with_jitter, Projection};
use crate::profile::{sigmoid, softplus, vs0_of};
use crate::rng::stream_rng;
use crate::coeffs::Z_STAR;

pub use bfgs::BfgsOptions;
pub use dist::Dist;
pub use synth::{synth_dataset, SynthLayout, SynthTruth};

use bfgs::{central_gradient, minimize, numerical_hessian};
use objective::{
    stat_from_t, stat_to_t, CachedSpatialEval, SpatialObjective, StationaryObjective, IDX_ELL,
    IDX_OMEGA, IDX_SIGMA, N_SCALARS, SPATIAL_SCALAR_LOG, SPATIAL_SCALAR_NAMES, STAT_LOG,
    STAT_NAMES,
};

const LN_2PI: f64 = 1.837877066409345;

/// Per-parameter prior distributions.
#[derive(Clone, Debug)]
pub struct PriorSpec {
    pub vs30_ref: Dist,
    pub vs30_w: Dist,
    pub r1: Dist,
    pub r2: Dist,
    pub r3: Dist,
    pub s2: Dist,
    pub sigma: Dist,
    pub dr1: Dist,
    pub dr2: Dist,
    pub ell: Dist,
    pub omega: Dist,
}

impl Default for PriorSpec {
    fn default() -> Self {
        Self {
            vs30_ref: Dist::Normal { mean: 5.7, sd: 0.1 },
            vs30_w: Dist::Gamma { shape: 2.0, scale: 0.5 },
            r1: Dist::Normal { mean: 0.0, sd: 5.0 },
            r2: Dist::LogNormal { mu: 0.5, sd: 0.5 },
            r3: Dist::Exponential { rate: 2.0 },
            s2: Dist::LogNormal { mu: 2.0, sd: 0.3 },
            sigma: Dist::LogNormal { mu: -1.0, sd: 0.6 },
            dr1: Dist::Normal { mean: 0.0, sd: 0.2 },
            dr2: Dist::Normal { mean: 0.0, sd: 0.2 },
            ell: Dist::InverseGamma { shape: 2.0, scale: 50.0 },
            omega: Dist::HalfNormal { sd: 0.02 },
        }
    }
}

impl PriorSpec {
    pub fn validate(&self) -> Result<()> {
        for d in [
            &self.vs30_ref,
            &self.vs30_w,
            &self.r1,
            &self.r2,
            &self.r3,
            &self.s2,
            &self.sigma,
            &self.dr1,
            &self.dr2,
            &self.ell,
            &self.omega,
        ] {
            d.validate()?;
        }
        Ok(())
    }
}

/// Calibration-ready view of one measured profile.
#[derive(Clone, Debug)]
pub struct ProfileObs {
    pub id: String,
    pub vs30: f64,
    /// Plane coordinates (spatial fits only).
    pub xy_km: Option<(f64, f64)>,
    /// (layer mid-depth m, observed ln vs) pairs.
    pub samples: Vec<(f64, f64)>,
}

/// Convert layered profiles into observation records. Vs30 is computed from
/// the top 30 m of each profile (full column for shallower ones); locations
/// are projected when a projection is supplied.
pub fn prepare_observations(
    profiles: &[LayeredProfile],
    projection: Option<&Projection>,
) -> Result<Vec<ProfileObs>> {
    profiles
        .iter()
        .map(|p| {
            let vs30 = p.vs30_estimate()?;
            let xy_km = match (projection, p.location) {
                (Some(proj), Some((lat, lon))) => Some(proj.to_plane(lat, lon)),
                _ => None,
            };
            Ok(ProfileObs {
                id: p.id.clone(),
                vs30,
                xy_km,
                samples: p.layers.iter().map(|l| (l.mid_depth(), l.vs.ln())).collect(),
            })
        })
        .collect()
}

/// Stationary-model parameter vector in natural space.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct StationaryParams {
    pub vs30_ref: f64,
    pub vs30_w: f64,
    pub r1: f64,
    pub r2: f64,
    pub r3: f64,
    pub s2: f64,
    pub sigma: f64,
}

impl StationaryParams {
    pub fn from_coeffs(c: &CoefficientSet) -> Self {
        Self {
            vs30_ref: c.vs30_ref,
            vs30_w: c.vs30_w,
            r1: c.r1,
            r2: c.r2,
            r3: c.r3,
            s2: c.s2,
            sigma: c.sigma,
        }
    }

    fn into_coeffs(self) -> CoefficientSet {
        CoefficientSet {
            vs30_ref: self.vs30_ref,
            vs30_w: self.vs30_w,
            r1: self.r1,
            r2: self.r2,
            r3: self.r3,
            s2: self.s2,
            sigma: self.sigma,
            z_star: Z_STAR,
            ell_km: None,
            omega: None,
            range_r_m: None,
            sill_s: None,
        }
    }
}

/// Per-profile ln-space residuals under the given parameters (None when the
/// parameters leave the model's support).
fn profile_eps(o: &ProfileObs, p: &StationaryParams, dbr: f64) -> Option<Vec<f64>> {
    let x = (o.vs30.ln() - p.vs30_ref) / p.vs30_w;
    let s = sigmoid(x);
    let k = (p.r1 + p.r2 * s + p.r3 * p.vs30_w * softplus(x) + dbr).exp();
    if !k.is_finite() || k <= 0.0 {
        return None;
    }
    let n = 1.0 + p.s2 * s;
    let vs0 = match vs0_of(o.vs30, k, n) {
        Ok(v) if v.is_finite() && v > 0.0 => v,
        _ => return None,
    };
    let ln_vs0 = vs0.ln();
    Some(
        o.samples
            .iter()
            .map(|&(mid, ln_vs)| {
                let model = if mid <= Z_STAR {
                    ln_vs0
                } else {
                    ln_vs0 + (k * (mid - Z_STAR)).ln_1p() / n
                };
                ln_vs - model
            })
            .collect(),
    )
}

/// ln-space Gaussian log likelihood of the dataset.
///
/// `dbr` supplies per-profile slope adjustments for spatially varying fits
/// (must match `obs` in length). Out-of-support parameters yield `-inf`
/// rather than an error.
pub fn log_likelihood(obs: &[ProfileObs], p: &StationaryParams, dbr: Option<&[f64]>) -> f64 {
    if !(p.sigma > 0.0) || !(p.vs30_w > 0.0) || p.s2 < 0.0 {
        return f64::NEG_INFINITY;
    }
    if let Some(d) = dbr {
        if d.len() != obs.len() {
            return f64::NEG_INFINITY;
        }
    }
    let mut ss = 0.0;
    let mut m_total = 0usize;
    for (i, o) in obs.iter().enumerate() {
        let dbr_i = dbr.map_or(0.0, |d| d[i]);
        let Some(eps) = profile_eps(o, p, dbr_i) else {
            return f64::NEG_INFINITY;
        };
        ss += eps.iter().map(|e| e * e).sum::<f64>();
        m_total += eps.len();
    }
    let ll = -0.5 * ss / (p.sigma * p.sigma)
        - m_total as f64 * (p.sigma.ln() + 0.5 * LN_2PI);
    if ll.is_nan() {
        f64::NEG_INFINITY
    } else {
        ll
    }
}

/// Stationary-model log prior (natural space; no transform Jacobians).
pub fn log_prior_stationary(p: &StationaryParams, priors: &PriorSpec) -> f64 {
    priors.vs30_ref.ln_pdf(p.vs30_ref)
        + priors.vs30_w.ln_pdf(p.vs30_w)
        + priors.r1.ln_pdf(p.r1)
        + priors.r2.ln_pdf(p.r2)
        + priors.r3.ln_pdf(p.r3)
        + priors.s2.ln_pdf(p.s2)
        + priors.sigma.ln_pdf(p.sigma)
}

/// Spatially-varying-model parameters in natural space.
#[derive(Clone, Debug)]
pub struct SpatialParams {
    pub dr1: f64,
    pub dr2: f64,
    pub sigma: f64,
    pub ell_km: f64,
    pub omega: f64,
    pub dbr: Vec<f64>,
}

/// Spatial-model log prior: scalar densities plus the zero-mean Gaussian
/// process density of the slope-adjustment vector at the given locations.
pub fn log_prior_spatial(p: &SpatialParams, xy_km: &[(f64, f64)], priors: &PriorSpec) -> f64 {
    if xy_km.len() != p.dbr.len() {
        return f64::NEG_INFINITY;
    }
    let mut lp = priors.dr1.ln_pdf(p.dr1)
        + priors.dr2.ln_pdf(p.dr2)
        + priors.sigma.ln_pdf(p.sigma)
        + priors.ell.ln_pdf(p.ell_km)
        + priors.omega.ln_pdf(p.omega);
    if !lp.is_finite() {
        return f64::NEG_INFINITY;
    }
    if !(p.omega > 0.0) || !(p.ell_km > 0.0) {
        return f64::NEG_INFINITY;
    }
    let n = p.dbr.len();
    if n > 0 {
        let mut cov = DMatrix::zeros(n, n);
        for i in 0..n {
            for j in 0..n {
                let d = (xy_km[i].0 - xy_km[j].0).hypot(xy_km[i].1 - xy_km[j].1);
                cov[(i, j)] = p.omega * p.omega * (-d / p.ell_km).exp();
            }
        }
        let Ok(chol) = cholesky_with_jitter(&cov, "dBr prior") else {
            return f64::NEG_INFINITY;
        };
        let ln_det: f64 = 2.0 * (0..n).map(|i| chol.l_dirty()[(i, i)].ln()).sum::<f64>();
        let v = DVector::from_column_slice(&p.dbr);
        let quad = v.dot(&chol.solve(&v));
        lp += -0.5 * (n as f64 * LN_2PI + ln_det + quad);
    }
    if lp.is_nan() {
        f64::NEG_INFINITY
    } else {
        lp
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ModelKind {
    Stationary,
    Spatial,
}

/// Options for [`map_fit`].
#[derive(Clone, Debug)]
pub struct MapOptions {
    pub max_iter: usize,
    /// Total optimizer runs; the first starts from `init`, the rest from
    /// prior draws. Best final objective wins (ties below 1e-9 break toward
    /// the lowest run index).
    pub restarts: usize,
    pub seed: u64,
    /// Convergence threshold on the gradient infinity norm, scaled by
    /// max(1, |objective|).
    pub grad_tol: f64,
    /// Relative step of the central-difference gradients.
    pub rel_step: f64,
    /// Fixed scaling coefficients for spatial fits (stationary preset when
    /// absent).
    pub base: Option<CoefficientSet>,
    /// Compute curvature-based standard deviations at the optimum.
    pub compute_sd: bool,
}

impl Default for MapOptions {
    fn default() -> Self {
        Self {
            max_iter: 800,
            restarts: 5,
            seed: 0,
            grad_tol: 1e-6,
            rel_step: 1e-6,
            base: None,
            compute_sd: true,
        }
    }
}

/// Slope-adjustment estimate for one profile.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct DbrEstimate {
    pub id: String,
    pub mean: f64,
    pub sd: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitDiagnostics {
    pub iterations: usize,
    pub grad_norm: f64,
    /// "converged" or "not-converged".
    pub status: String,
    pub restarts: usize,
    pub best_restart: usize,
    /// Final value of the transformed-space objective that was minimized.
    pub objective: f64,
}

/// Point-estimate analogue of a posterior summary.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FitResult {
    pub model: String,
    pub coefficients: CoefficientSet,
    pub dr1: Option<f64>,
    pub dr2: Option<f64>,
    pub dbr: Option<Vec<DbrEstimate>>,
    /// Negative log posterior in natural (untransformed) parameters at the
    /// reported optimum.
    pub neg_log_posterior: f64,
    /// Natural-space standard deviations (delta method for log-transformed
    /// parameters). Empty when the fit did not converge or curvature was
    /// unusable.
    pub sd: BTreeMap<String, f64>,
    /// Standard deviations on the optimizer's unconstrained scale (log scale
    /// for positive parameters, i.e. relative uncertainty).
    pub sd_unconstrained: BTreeMap<String, f64>,
    /// Pooled sample standard deviation of the fit residuals.
    pub residual_sd: f64,
    pub diagnostics: FitDiagnostics,
}

impl FitResult {
    pub fn to_json_file(&self, path: impl AsRef<Path>) -> Result<()> {
        let text = serde_json::to_string_pretty(self)?;
        std::fs::write(path, text + "\n")?;
        Ok(())
    }

    /// Human-readable coefficient table.
    pub fn summary_table(&self) -> String {
        let mut out = String::new();
        out.push_str(&format!("model: {}\n", self.model));
        out.push_str(&format!(
            "{:<12} {:>12} {:>12} {:>12}\n",
            "coefficient", "estimate", "sd", "sd(ln-scale)"
        ));
        let c = &self.coefficients;
        let mut rows: Vec<(&str, f64)> = vec![
            ("vs30_ref", c.vs30_ref),
            ("vs30_w", c.vs30_w),
            ("r1", c.r1),
            ("r2", c.r2),
            ("r3", c.r3),
            ("s2", c.s2),
            ("sigma", c.sigma),
        ];
        if let Some(d) = self.dr1 {
            rows.push(("dr1", d));
        }
        if let Some(d) = self.dr2 {
            rows.push(("dr2", d));
        }
        if let Some(e) = c.ell_km {
            rows.push(("ell_km", e));
        }
        if let Some(o) = c.omega {
            rows.push(("omega", o));
        }
        for (name, value) in rows {
            let sd = self.sd.get(name).map(|s| format!("{s:>12.5}")).unwrap_or_else(|| format!("{:>12}", "-"));
            let sdu = self
                .sd_unconstrained
                .get(name)
                .map(|s| format!("{s:>12.5}"))
                .unwrap_or_else(|| format!("{:>12}", "-"));
            out.push_str(&format!("{name:<12} {value:>12.5} {sd} {sdu}\n"));
        }
        out.push_str(&format!("residual_sd  {:>12.5}\n", self.residual_sd));
        out.push_str(&format!(
            "status: {} after {} iterations (grad norm {:.3e})\n",
            self.diagnostics.status, self.diagnostics.iterations, self.diagnostics.grad_norm
        ));
        out
    }
}

/// Maximize the penalized log posterior for layered profiles, deriving each
/// profile's Vs30 from its top 30 m (full column when shallower).
///
/// `init` seeds the first optimizer run (prior central values when absent).
/// Non-convergence is reported through the diagnostics status, not as an
/// error.
pub fn map_fit(
    profiles: &[LayeredProfile],
    priors: &PriorSpec,
    model: ModelKind,
    init: Option<&CoefficientSet>,
    options: &MapOptions,
) -> Result<FitResult> {
    let obs = match model {
        ModelKind::Stationary => prepare_observations(profiles, None)?,
        ModelKind::Spatial => {
            let locations: Vec<(f64, f64)> = profiles
                .iter()
                .map(|p| {
                    p.location.ok_or_else(|| {
                        data(format!(
                            "profile '{}' lacks coordinates required for a spatial fit",
                            p.id
                        ))
                    })
                })
                .collect::<Result<_>>()?;
            let projection = Projection::fit(&locations)?;
            prepare_observations(profiles, Some(&projection))?
        }
    };
    map_fit_obs(&obs, priors, model, init, options)
}

/// [`map_fit`] on prepared observations, where each profile's conditioning
/// Vs30 (and plane coordinates, for spatial fits) is supplied explicitly.
pub fn map_fit_obs(
    obs: &[ProfileObs],
    priors: &PriorSpec,
    model: ModelKind,
    init: Option<&CoefficientSet>,
    options: &MapOptions,
) -> Result<FitResult> {
    priors.validate()?;
    if obs.len() < 10 {
        return Err(domain(format!("calibration needs >= 10 profiles, got {}", obs.len())));
    }
    match model {
        ModelKind::Stationary => map_fit_stationary(obs, priors, init, options),
        ModelKind::Spatial => {
            if obs.iter().any(|o| o.xy_km.is_none()) {
                return Err(data("spatial fit observations need coordinates".to_string()));
            }
            map_fit_spatial(obs, priors, init, options)
        }
    }
}

fn pooled_sd(all_eps: &[f64]) -> f64 {
    crate::util::sample_sd(all_eps)
}

fn run_restarts<F, G>(
    f: &F,
    grad: &G,
    starts: Vec<Vec<f64>>,
    opts: &BfgsOptions,
) -> (bfgs::BfgsOutcome, usize)
where
    F: Fn(&[f64]) -> f64,
    G: Fn(&[f64], f64) -> Vec<f64>,
{
    let mut best: Option<(bfgs::BfgsOutcome, usize)> = None;
    for (idx, x0) in starts.into_iter().enumerate() {
        let out = minimize(f, grad, &x0, opts);
        let better = match &best {
            None => true,
            Some((b, _)) => out.f < b.f - 1e-9,
        };
        if better {
            best = Some((out, idx));
        }
    }
    best.expect("at least one restart")
}

fn sds_from_hessian(
    hessian: &DMatrix<f64>,
    x: &[f64],
    names: &[String],
    log_mask: &[bool],
) -> Option<(BTreeMap<String, f64>, BTreeMap<String, f64>, DMatrix<f64>)> {
    let chol = cholesky_with_jitter(hessian, "curvature").ok()?;
    let cov = chol.inverse();
    let mut natural = BTreeMap::new();
    let mut unconstrained = BTreeMap::new();
    for i in 0..names.len() {
        let var = cov[(i, i)].max(0.0);
        let sd_t = var.sqrt();
        unconstrained.insert(names[i].clone(), sd_t);
        let sd_nat = if log_mask[i] { sd_t * x[i].exp() } else { sd_t };
        natural.insert(names[i].clone(), sd_nat);
    }
    Some((natural, unconstrained, cov))
}

fn map_fit_stationary(
    obs: &[ProfileObs],
    priors: &PriorSpec,
    init: Option<&CoefficientSet>,
    options: &MapOptions,
) -> Result<FitResult> {
    let objective = StationaryObjective { obs, priors };
    let f = |t: &[f64]| objective.eval(t);
    let grad = |t: &[f64], ft: f64| central_gradient(&f, t, ft, options.rel_step);

    let init_params = init.map(StationaryParams::from_coeffs).unwrap_or(StationaryParams {
        vs30_ref: 5.7,
        vs30_w: 1.0,
        r1: 0.0,
        r2: 0.5f64.exp(),
        r3: 0.5,
        s2: 2.0f64.exp(),
        sigma: (-1.0f64).exp(),
    });
    let mut starts = vec![stat_to_t(&init_params)];
    for r in 1..options.restarts.max(1) {
        let mut rng = stream_rng(options.seed, "map-restart", r as u64);
        let draw = StationaryParams {
            vs30_ref: priors.vs30_ref.sample(&mut rng),
            vs30_w: priors.vs30_w.sample(&mut rng),
            r1: priors.r1.sample(&mut rng),
            r2: priors.r2.sample(&mut rng),
            r3: priors.r3.sample(&mut rng).max(1e-6),
            s2: priors.s2.sample(&mut rng),
            sigma: priors.sigma.sample(&mut rng),
        };
        starts.push(stat_to_t(&draw));
    }
    let bfgs_opts =
        BfgsOptions { max_iter: options.max_iter, grad_tol: options.grad_tol, rel_step: options.rel_step };
    let (best, best_restart) = run_restarts(&f, &grad, starts, &bfgs_opts);
    let theta = stat_from_t(&best.x);

    let (mut sd, mut sd_u) = (BTreeMap::new(), BTreeMap::new());
    if options.compute_sd && best.converged {
        let hessian = numerical_hessian(&f, &best.x, 1e-4);
        let names: Vec<String> = STAT_NAMES.iter().map(|s| s.to_string()).collect();
        if let Some((nat, unc, _)) = sds_from_hessian(&hessian, &best.x, &names, &STAT_LOG) {
            sd = nat;
            sd_u = unc;
        }
    }

    let mut all_eps = Vec::new();
    for o in obs {
        if let Some(eps) = profile_eps(o, &theta, 0.0) {
            all_eps.extend(eps);
        }
    }
    let neg_log_posterior = -(log_prior_stationary(&theta, priors) + log_likelihood(obs, &theta, None));

    Ok(FitResult {
        model: "stationary".to_string(),
        coefficients: theta.into_coeffs(),
        dr1: None,
        dr2: None,
        dbr: None,
        neg_log_posterior,
        sd,
        sd_unconstrained: sd_u,
        residual_sd: pooled_sd(&all_eps),
        diagnostics: FitDiagnostics {
            iterations: best.iterations,
            grad_norm: best.grad_inf_norm,
            status: if best.converged { "converged" } else { "not-converged" }.to_string(),
            restarts: options.restarts.max(1),
            best_restart,
            objective: best.f,
        },
    })
}

fn map_fit_spatial(
    obs: &[ProfileObs],
    priors: &PriorSpec,
    init: Option<&CoefficientSet>,
    options: &MapOptions,
) -> Result<FitResult> {
    let base = options.base.clone().unwrap_or_else(CoefficientSet::stationary_tab1);
    base.validate()?;

    let objective = SpatialObjective::new(obs, &base, priors)?;
    let cached = CachedSpatialEval::new(&objective);
    let f = |t: &[f64]| cached.eval(t);
    let grad = |t: &[f64], ft: f64| central_gradient(&f, t, ft, options.rel_step);

    let n = obs.len();
    let p_dim = N_SCALARS + n;
    let (sigma0, ell0, omega0) = match init {
        Some(c) if c.has_spatial() => (c.sigma, c.ell_km.unwrap(), c.omega.unwrap().max(1e-3)),
        _ => ((-1.0f64).exp(), 10.0, 0.1),
    };
    let mut t0 = vec![0.0; p_dim];
    t0[IDX_SIGMA] = sigma0.ln();
    t0[IDX_ELL] = ell0.ln();
    t0[IDX_OMEGA] = omega0.ln();
    let mut starts = vec![t0];
    for r in 1..options.restarts.max(1) {
        let mut rng = stream_rng(options.seed, "map-restart", r as u64);
        let mut t = vec![0.0; p_dim];
        t[0] = priors.dr1.sample(&mut rng);
        t[1] = priors.dr2.sample(&mut rng);
        t[IDX_SIGMA] = priors.sigma.sample(&mut rng).ln();
        t[IDX_ELL] = priors.ell.sample(&mut rng).ln();
        t[IDX_OMEGA] = priors.omega.sample(&mut rng).max(1e-4).ln();
        starts.push(t);
    }
    let bfgs_opts =
        BfgsOptions { max_iter: options.max_iter, grad_tol: options.grad_tol, rel_step: options.rel_step };
    let (best, best_restart) = run_restarts(&f, &grad, starts, &bfgs_opts);

    let dr1 = best.x[0];
    let dr2 = best.x[1];
    let sigma = best.x[IDX_SIGMA].exp();
    let ell = best.x[IDX_ELL].exp();
    let omega = best.x[IDX_OMEGA].exp();
    let dbr = objective.dbr_from_t(&best.x)?;

    let fitted_params = StationaryParams {
        vs30_ref: base.vs30_ref,
        vs30_w: base.vs30_w,
        r1: base.r1 + dr1,
        r2: base.r2 + dr2,
        r3: base.r3,
        s2: base.s2,
        sigma,
    };

    let (mut sd, mut sd_u) = (BTreeMap::new(), BTreeMap::new());
    let mut dbr_sds = vec![0.0; n];
    if options.compute_sd && best.converged {
        let hessian = numerical_hessian(&f, &best.x, 1e-4);
        let names: Vec<String> = SPATIAL_SCALAR_NAMES
            .iter()
            .map(|s| s.to_string())
            .chain((0..n).map(|i| format!("u{i}")))
            .collect();
        let mut log_mask = SPATIAL_SCALAR_LOG.to_vec();
        log_mask.extend(std::iter::repeat(false).take(n));
        if let Some((nat, unc, cov)) = sds_from_hessian(&hessian, &best.x, &names, &log_mask) {
            // dBr uncertainty from the u-block, conditional on (omega, ell):
            // cov(dbr) = omega^2 L cov(u) L'.
            let l = objective.corr_chol_l(ell)?;
            let cov_u = cov.view((N_SCALARS, N_SCALARS), (n, n)).into_owned();
            let lcu = &l * cov_u * l.transpose();
            for i in 0..n {
                dbr_sds[i] = omega * lcu[(i, i)].max(0.0).sqrt();
            }
            sd = nat.into_iter().filter(|(k, _)| !k.starts_with('u')).collect();
            sd_u = unc.into_iter().filter(|(k, _)| !k.starts_with('u')).collect();
        }
    }

    let mut all_eps = Vec::new();
    for (o, &dbr_i) in obs.iter().zip(&dbr) {
        if let Some(eps) = profile_eps(o, &fitted_params, dbr_i) {
            all_eps.extend(eps);
        }
    }
    let xy: Vec<(f64, f64)> = obs.iter().map(|o| o.xy_km.unwrap()).collect();
    let spatial_params = SpatialParams { dr1, dr2, sigma, ell_km: ell, omega, dbr: dbr.clone() };
    let neg_log_posterior = -(log_prior_spatial(&spatial_params, &xy, priors)
        + log_likelihood(obs, &fitted_params, Some(&dbr)));

    let mut coefficients = base.clone();
    coefficients.r1 += dr1;
    coefficients.r2 += dr2;
    coefficients.sigma = sigma;
    coefficients.ell_km = Some(ell);
    coefficients.omega = Some(omega);

    Ok(FitResult {
        model: "spatial".to_string(),
        coefficients,
        dr1: Some(dr1),
        dr2: Some(dr2),
        dbr: Some(
            obs.iter()
                .zip(dbr.iter().zip(&dbr_sds))
                .map(|(o, (&mean, &sd))| DbrEstimate { id: o.id.clone(), mean, sd })
                .collect(),
        ),
        neg_log_posterior,
        sd,
        sd_unconstrained: sd_u,
        residual_sd: pooled_sd(&all_eps),
        diagnostics: FitDiagnostics {
            iterations: best.iterations,
            grad_norm: best.grad_inf_norm,
            status: if best.converged { "converged" } else { "not-converged" }.to_string(),
            restarts: options.restarts.max(1),
            best_restart,
            objective: best.f,
        },
    })
}

/// Write a FitResult summary table next to stdout reporting.
pub fn write_summary(path: impl AsRef<Path>, fit: &FitResult) -> Result<()> {
    let mut out = std::fs::File::create(path)?;
    out.write_all(fit.summary_table().as_bytes())?;
    Ok(())
}
