//! Median velocity model: Vs30-conditioned scaling relations, the
//! Vs30-constrained surface velocity, profile evaluation and discretization,
//! and ln-space residuals.
//!
//! The continuous median profile keeps a constant velocity `vs0` down to
//! `z* = 2.5 m` and follows `vs0 * (1 + k (z - z*))^(1/n)` below. `k` and `n`
//! scale with Vs30 through a shared logistic transition; `vs0` is solved in
//! closed form so that the time-averaged velocity of the top 30 m equals the
//! input Vs30 exactly.

use crate::coeffs::{CoefficientSet, Z_STAR};
use crate::column::{Layer, LayeredProfile, Provenance};
use crate::error::{domain, Result};

/// Depth over which the Vs30 constraint is enforced.
const VS30_DEPTH: f64 = 30.0;

/// Numerically stable logistic sigmoid 1/(1 + exp(-x)).
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Numerically stable softplus ln(1 + exp(x)), the smooth hinge.
///
/// For large x this approaches x, which gives the slope parameter its
/// asymptotic log-log growth rate at high Vs30.
pub fn softplus(x: f64) -> f64 {
    if x >= 0.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Normalized log-Vs30 coordinate `(ln(vs30) - vs30_ref) / vs30_w`.
pub fn vs30_scaled(vs30: f64, coeffs: &CoefficientSet) -> Result<f64> {
    if !(vs30 > 0.0) {
        return Err(domain(format!("vs30 must be > 0, got {vs30}")));
    }
    Ok((vs30.ln() - coeffs.vs30_ref) / coeffs.vs30_w)
}

/// Curvature parameter `n = 1 + s2 * S(vs30_scaled)`.
///
/// Approaches 1 for soft sites and `1 + s2` for stiff sites.
pub fn n_of_vs30(vs30: f64, coeffs: &CoefficientSet) -> Result<f64> {
    Ok(1.0 + coeffs.s2 * sigmoid(vs30_scaled(vs30, coeffs)?))
}

/// Slope parameter in 1/m:
/// `k = exp[r1 + r2 S(x) + r3 vs30_w H(x) + dBr]` with `x = vs30_scaled`.
///
/// `dBr` is the location-specific slope adjustment (0 for the stationary
/// model). Converges to `exp(r1)` at low Vs30 and grows with log-log slope
/// `r3` at high Vs30.
pub fn k_of_vs30(vs30: f64, coeffs: &CoefficientSet, dbr: f64) -> Result<f64> {
    if !dbr.is_finite() {
        return Err(domain(format!("dBr must be finite, got {dbr}")));
    }
    let x = vs30_scaled(vs30, coeffs)?;
    Ok((coeffs.r1 + coeffs.r2 * sigmoid(x) + coeffs.r3 * coeffs.vs30_w * softplus(x) + dbr).exp())
}

/// Surface velocity satisfying the Vs30 travel-time constraint.
///
/// Closed form of `30 / integral(1/vs(z), 0..30) = vs30` for the two-branch
/// profile. Written with `expm1`/`ln_1p` so the `n != 1` branch passes
/// continuously through `n = 1`.
pub fn vs0_of(vs30: f64, k: f64, n: f64) -> Result<f64> {
    if !(vs30 > 0.0) {
        return Err(domain(format!("vs30 must be > 0, got {vs30}")));
    }
    if !(k > 0.0) {
        return Err(domain(format!("k must be > 0, got {k}")));
    }
    if !(n >= 1.0) {
        return Err(domain(format!("n must be >= 1, got {n}")));
    }
    let m = 1.0 - 1.0 / n;
    let alpha = VS30_DEPTH - Z_STAR;
    let l = (k * alpha).ln_1p();
    // integral(1/g, z*..30) with g = (1 + k (z - z*))^(1/n) equals
    // expm1(m * l) / (m * k); the m -> 0 limit is l / k.
    let term = if m.abs() < 1e-12 { l } else { (m * l).exp_m1() / m };
    Ok(vs30 * (Z_STAR * k + term) / (VS30_DEPTH * k))
}

/// Sensitivity of `ln vs0` to `ln k` at fixed (vs30, n).
///
/// Used to propagate slope-adjustment uncertainty through the Vs30
/// constraint: raising the slope lowers the surface velocity.
pub fn dln_vs0_dln_k(k: f64, n: f64) -> Result<f64> {
    if !(k > 0.0) {
        return Err(domain(format!("k must be > 0, got {k}")));
    }
    if !(n >= 1.0) {
        return Err(domain(format!("n must be >= 1, got {n}")));
    }
    let m = 1.0 - 1.0 / n;
    let alpha = VS30_DEPTH - Z_STAR;
    let l = (k * alpha).ln_1p();
    let term = if m.abs() < 1e-12 { l } else { (m * l).exp_m1() / m };
    // p(k) = z* k + term(k); vs0 = vs30 p / (30 k).
    let p = Z_STAR * k + term;
    let dp = Z_STAR + (m * l).exp() * alpha / (1.0 + k * alpha);
    Ok(k * dp / p - 1.0)
}

/// Parameters of one continuous profile.
///
/// Construct through [`ProfileParams::from_vs30`] to keep the Vs30
/// constraint satisfied; `new` checks the invariants of caller-supplied
/// values.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct ProfileParams {
    pub vs30: f64,
    /// Slope parameter (1/m, > 0).
    pub k: f64,
    /// Curvature parameter (>= 1).
    pub n: f64,
    /// Surface velocity (m/sec).
    pub vs0: f64,
    /// Slope adjustment applied inside the exponent of `k` (0 = stationary).
    pub dbr: f64,
}

impl ProfileParams {
    /// Evaluate the scaling relations at `vs30` and solve for `vs0`.
    pub fn from_vs30(vs30: f64, coeffs: &CoefficientSet, dbr: f64) -> Result<Self> {
        let k = k_of_vs30(vs30, coeffs, dbr)?;
        let n = n_of_vs30(vs30, coeffs)?;
        let vs0 = vs0_of(vs30, k, n)?;
        Ok(Self { vs30, k, n, vs0, dbr })
    }

    /// Wrap caller-supplied parameters, checking invariants.
    pub fn new(vs30: f64, k: f64, n: f64, vs0: f64, dbr: f64) -> Result<Self> {
        if !(vs30 > 0.0) || !(k > 0.0) || !(n >= 1.0) || !(vs0 > 0.0) {
            return Err(domain(format!(
                "invalid profile parameters: vs30={vs30} k={k} n={n} vs0={vs0}"
            )));
        }
        Ok(Self { vs30, k, n, vs0, dbr })
    }

    /// Sensitivity of `ln vs(z)` to the slope adjustment `dBr`.
    ///
    /// Combines the direct slope effect with the surface-velocity
    /// compensation enforced by the Vs30 constraint.
    pub fn dln_vs_ddbr(&self, z: f64) -> Result<f64> {
        if !(z >= 0.0) {
            return Err(domain(format!("z must be >= 0, got {z}")));
        }
        let base = dln_vs0_dln_k(self.k, self.n)?;
        if z <= Z_STAR {
            Ok(base)
        } else {
            let kz = self.k * (z - Z_STAR);
            Ok(base + kz / (1.0 + kz) / self.n)
        }
    }
}

/// Median shear-wave velocity at depth `z` (m).
pub fn median_vs(z: f64, params: &ProfileParams) -> Result<f64> {
    if !(z >= 0.0) {
        return Err(domain(format!("z must be >= 0, got {z}")));
    }
    if z <= Z_STAR {
        Ok(params.vs0)
    } else {
        Ok(params.vs0 * (1.0 + params.k * (z - Z_STAR)).powf(1.0 / params.n))
    }
}

/// Layer-thickness schedule for discretizing a continuous profile.
#[derive(Clone, Copy, Debug)]
pub struct DiscretizationRule {
    /// Thickness of the shallowest layer (m).
    pub top_thickness: f64,
    /// Geometric growth factor applied per layer.
    pub growth: f64,
    /// Thickness cap (m).
    pub max_thickness: f64,
}

impl Default for DiscretizationRule {
    /// 0.5 m at the surface, 5% growth, 5 m cap: ~20 points per minimum
    /// wavelength at 100 m/sec and 10 Hz.
    fn default() -> Self {
        Self { top_thickness: 0.5, growth: 1.05, max_thickness: 5.0 }
    }
}

impl DiscretizationRule {
    pub fn validate(&self) -> Result<()> {
        if !(self.top_thickness > 0.0) || !(self.growth >= 1.0) || !(self.max_thickness >= self.top_thickness) {
            return Err(domain(format!("invalid discretization rule: {self:?}")));
        }
        Ok(())
    }

    /// Layer boundaries from 0 to exactly `depth_max` (last layer clipped).
    pub fn boundaries(&self, depth_max: f64) -> Result<Vec<f64>> {
        self.validate()?;
        if !(depth_max > 0.0) {
            return Err(domain(format!("depth_max must be > 0, got {depth_max}")));
        }
        let mut edges = vec![0.0];
        let mut thickness = self.top_thickness;
        let mut z = 0.0;
        while z < depth_max {
            z = (z + thickness).min(depth_max);
            // Avoid a sliver layer at the bottom.
            if depth_max - z < 1e-9 * depth_max.max(1.0) {
                z = depth_max;
            }
            edges.push(z);
            thickness = (thickness * self.growth).min(self.max_thickness);
        }
        Ok(edges)
    }
}

/// Discretize the continuous median profile into contiguous layers down to
/// `depth_max`, evaluating the velocity at each layer mid-depth.
pub fn discretize(
    params: &ProfileParams,
    depth_max: f64,
    rule: &DiscretizationRule,
) -> Result<LayeredProfile> {
    let edges = rule.boundaries(depth_max)?;
    let mut layers = Vec::with_capacity(edges.len() - 1);
    for w in edges.windows(2) {
        let (top, bottom) = (w[0], w[1]);
        let vs = median_vs(0.5 * (top + bottom), params)?;
        layers.push(Layer { top_depth: top, thickness: bottom - top, vs });
    }
    LayeredProfile::new(String::new(), None, layers, Provenance::ModelMedian)
}

/// ln-space residuals `ln(vs_obs) - ln(median)` per measured layer, with the
/// median evaluated at the layer mid-depth.
pub fn residuals(measured: &LayeredProfile, params: &ProfileParams) -> Result<Vec<(f64, f64)>> {
    measured
        .layers
        .iter()
        .map(|layer| {
            if !(layer.vs > 0.0) {
                return Err(domain(format!("measured vs must be > 0, got {}", layer.vs)));
            }
            let mid = layer.top_depth + 0.5 * layer.thickness;
            let median = median_vs(mid, params)?;
            Ok((mid, layer.vs.ln() - median.ln()))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    fn tab1() -> CoefficientSet {
        CoefficientSet::stationary_tab1()
    }

    /// Adaptive Simpson quadrature of `integral(1/g(z), 0..30)` for the
    /// two-branch profile shape with vs0 = 1. Independent oracle for the
    /// closed-form `vs0_of`.
    fn travel_time_integral(k: f64, n: f64, tol: f64) -> f64 {
        fn f(z: f64, k: f64, n: f64) -> f64 {
            if z <= Z_STAR {
                1.0
            } else {
                (1.0 + k * (z - Z_STAR)).powf(-1.0 / n)
            }
        }
        fn simpson(a: f64, b: f64, fa: f64, fm: f64, fb: f64) -> f64 {
            (b - a) / 6.0 * (fa + 4.0 * fm + fb)
        }
        fn adapt(
            a: f64,
            b: f64,
            fa: f64,
            fm: f64,
            fb: f64,
            whole: f64,
            tol: f64,
            k: f64,
            n: f64,
            depth: u32,
        ) -> f64 {
            let m = 0.5 * (a + b);
            let (lm, rm) = (0.5 * (a + m), 0.5 * (m + b));
            let (flm, frm) = (f(lm, k, n), f(rm, k, n));
            let left = simpson(a, m, fa, flm, fm);
            let right = simpson(m, b, fm, frm, fb);
            if depth > 40 || (left + right - whole).abs() <= 15.0 * tol {
                left + right + (left + right - whole) / 15.0
            } else {
                adapt(a, m, fa, flm, fm, left, tol / 2.0, k, n, depth + 1)
                    + adapt(m, b, fm, frm, fb, right, tol / 2.0, k, n, depth + 1)
            }
        }
        // Split at z* where the integrand has a kink.
        let mut total = Z_STAR; // constant branch integrates exactly
        let (a, b) = (Z_STAR, VS30_DEPTH);
        let (fa, fb) = (f(a, k, n), f(b, k, n));
        let fm = f(0.5 * (a + b), k, n);
        total += adapt(a, b, fa, fm, fb, simpson(a, b, fa, fm, fb), tol, k, n, 0);
        total
    }

    /// Quadrature-based vs0: invert the Vs30 constraint numerically.
    fn vs0_oracle(vs30: f64, k: f64, n: f64) -> f64 {
        vs30 * travel_time_integral(k, n, 1e-13) / VS30_DEPTH
    }

    #[test]
    fn vs30_scaled_examples() {
        let c = tab1();
        assert_abs_diff_eq!(vs30_scaled((6.4990f64).exp(), &c).unwrap(), 0.0, epsilon = 1e-12);
        assert_abs_diff_eq!(
            vs30_scaled((6.4990f64 + 0.4354).exp(), &c).unwrap(),
            1.0,
            epsilon = 1e-12
        );
        let expected = (200.0f64.ln() - c.vs30_ref) / c.vs30_w;
        assert_relative_eq!(vs30_scaled(200.0, &c).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(vs30_scaled(200.0, &c).unwrap(), -2.758, epsilon = 1e-3);
        assert!(vs30_scaled(0.0, &c).is_err());
        assert!(vs30_scaled(-5.0, &c).is_err());
    }

    #[test]
    fn n_examples_and_asymptotes() {
        let c = tab1();
        // Midpoint.
        assert_relative_eq!(
            n_of_vs30((6.4990f64).exp(), &c).unwrap(),
            1.0 + 7.0741 / 2.0,
            epsilon = 1e-9
        );
        // Soft limit -> 1, stiff limit -> 1 + s2 within 1%.
        assert_abs_diff_eq!(n_of_vs30(1e-3, &c).unwrap(), 1.0, epsilon = 1e-6);
        assert_relative_eq!(n_of_vs30(1e4, &c).unwrap(), 8.07, max_relative = 0.01);
        assert_relative_eq!(n_of_vs30(1e7, &c).unwrap(), 1.0 + c.s2, max_relative = 1e-6);
    }

    #[test]
    fn k_examples_and_asymptotes() {
        let c = tab1();
        // Soft limit -> exp(r1), within 2% already at 50 m/sec.
        assert_relative_eq!(k_of_vs30(50.0, &c, 0.0).unwrap(), (-2.2986f64).exp(), max_relative = 0.02);
        assert_relative_eq!(k_of_vs30(1.0, &c, 0.0).unwrap(), (-2.2986f64).exp(), max_relative = 1e-4);
        // Exponent additivity: dBr = ln 2 doubles k.
        for vs30 in [120.0, 400.0, 900.0] {
            assert_relative_eq!(
                k_of_vs30(vs30, &c, 2.0f64.ln()).unwrap(),
                2.0 * k_of_vs30(vs30, &c, 0.0).unwrap(),
                epsilon = 1e-12
            );
        }
        // Midpoint value with H(0) = ln 2.
        let expected = (-2.2986f64 + 5.3966 * 0.5 + 0.3886 * 0.4354 * 2.0f64.ln()).exp();
        assert_relative_eq!(k_of_vs30((6.4990f64).exp(), &c, 0.0).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 1.677, epsilon = 2e-3);
        // High-Vs30 log-log slope approaches r3.
        let (v1, v2) = (1e6f64, 1e7f64);
        let slope = (k_of_vs30(v2, &c, 0.0).unwrap() / k_of_vs30(v1, &c, 0.0).unwrap()).ln()
            / (v2.ln() - v1.ln());
        assert_relative_eq!(slope, c.r3, max_relative = 1e-4);
    }

    #[test]
    fn vs0_matches_n1_closed_form() {
        // n = 1, k = 0.1, vs30 = 300.
        let expected = 300.0 * (2.5 + 10.0 * (1.0f64 + 0.1 * 27.5).ln()) / 30.0;
        assert_relative_eq!(vs0_of(300.0, 0.1, 1.0).unwrap(), expected, epsilon = 1e-12);
        assert_abs_diff_eq!(expected, 157.2, epsilon = 0.05);
        // Constant-profile limit.
        assert_relative_eq!(vs0_of(300.0, 1e-14, 1.0).unwrap(), 300.0, max_relative = 1e-9);
        assert_relative_eq!(vs0_of(300.0, 1e-14, 4.0).unwrap(), 300.0, max_relative = 1e-9);
        assert!(vs0_of(300.0, 0.0, 1.0).is_err());
        assert!(vs0_of(300.0, 0.1, 0.9).is_err());
    }

    #[test]
    fn vs0_matches_quadrature_oracle() {
        // Frozen case from the oracle plus a parameter sweep.
        let got = vs0_of(500.0, 1.0, 4.0).unwrap();
        assert_relative_eq!(got, vs0_oracle(500.0, 1.0, 4.0), max_relative = 1e-8);
        for &k in &[1e-3, 0.05, 0.3, 2.0, 10.0] {
            for &n in &[1.0, 1.0 + 1e-9, 1.5, 4.0, 8.0] {
                let analytic = vs0_of(400.0, k, n).unwrap();
                let oracle = vs0_oracle(400.0, k, n);
                assert_relative_eq!(analytic, oracle, max_relative = 1e-8);
            }
        }
    }

    #[test]
    fn vs0_branch_continuity_at_n1() {
        for &vs30 in &[150.0, 300.0, 700.0] {
            for &k in &[0.02, 0.1, 1.0, 5.0] {
                let a = vs0_of(vs30, k, 1.0).unwrap();
                let b = vs0_of(vs30, k, 1.0 + 1e-8).unwrap();
                assert!(((a - b) / a).abs() < 1e-5);
            }
        }
    }

    #[test]
    fn vs30_round_trip_via_quadrature() {
        // The integrated time-average of the continuous profile reproduces
        // the input Vs30.
        let c = tab1();
        let mut rng = crate::rng::stream_rng(11, "vs30-roundtrip", 0);
        use rand::Rng;
        for _ in 0..200 {
            let vs30 = 100.0 * (18.0f64).powf(rng.random::<f64>());
            let p = ProfileParams::from_vs30(vs30, &c, 0.0).unwrap();
            let tt = travel_time_integral(p.k, p.n, 1e-13) / p.vs0;
            let realized = VS30_DEPTH / tt;
            assert_relative_eq!(realized, vs30, max_relative = 1e-6);
        }
    }

    #[test]
    fn median_vs_branches() {
        let p = ProfileParams::new(300.0, 0.1, 1.0, 157.2, 0.0).unwrap();
        assert_eq!(median_vs(0.0, &p).unwrap(), 157.2);
        assert_eq!(median_vs(2.5, &p).unwrap(), 157.2);
        assert_relative_eq!(median_vs(12.5, &p).unwrap(), 157.2 * 2.0, epsilon = 1e-12);
        assert!(median_vs(-0.1, &p).is_err());
        // Continuity at z*.
        assert_relative_eq!(
            median_vs(2.5 + 1e-12, &p).unwrap(),
            median_vs(2.5, &p).unwrap(),
            max_relative = 1e-9
        );
    }

    #[test]
    fn monotonicity_in_vs30_and_depth() {
        let c = tab1();
        let mut prev_k = 0.0;
        let mut prev_n = 0.0;
        let mut prev_vs0 = 0.0;
        for i in 0..60 {
            let vs30 = 80.0 * (30.0f64).powf(i as f64 / 59.0);
            let k = k_of_vs30(vs30, &c, 0.0).unwrap();
            let n = n_of_vs30(vs30, &c).unwrap();
            let vs0 = vs0_of(vs30, k, n).unwrap();
            assert!(k > prev_k && n > prev_n && vs0 > prev_vs0, "not monotone at {vs30}");
            prev_k = k;
            prev_n = n;
            prev_vs0 = vs0;
        }
        let p = ProfileParams::from_vs30(300.0, &c, 0.0).unwrap();
        let mut prev = 0.0;
        for i in 0..=300 {
            let v = median_vs(i as f64, &p).unwrap();
            assert!(v >= prev);
            prev = v;
        }
    }

    #[test]
    fn vs0_ratio_band() {
        // vs30 / vs0 stays within [1.5, 2.6] over the sedimentary range.
        let c = tab1();
        for i in 0..=50 {
            let vs30 = 150.0 * (1000.0f64 / 150.0).powf(i as f64 / 50.0);
            let p = ProfileParams::from_vs30(vs30, &c, 0.0).unwrap();
            let ratio = vs30 / p.vs0;
            assert!((1.5..=2.6).contains(&ratio), "ratio {ratio} at vs30 {vs30}");
        }
    }

    #[test]
    fn discretize_constant_profile() {
        let p = ProfileParams::new(300.0, 1e-13, 1.0, 300.0, 0.0).unwrap();
        let col = discretize(&p, 50.0, &DiscretizationRule::default()).unwrap();
        for layer in &col.layers {
            assert_relative_eq!(layer.vs, p.vs0, max_relative = 1e-9);
        }
        assert_relative_eq!(col.depth_max(), 50.0, epsilon = 1e-12);
    }

    #[test]
    fn discretize_realized_vs30_within_half_percent() {
        let c = tab1();
        for &vs30 in &[110.0, 250.0, 500.0, 900.0, 1500.0] {
            let p = ProfileParams::from_vs30(vs30, &c, 0.0).unwrap();
            let col = discretize(&p, 30.0, &DiscretizationRule::default()).unwrap();
            let realized = col.time_averaged_vs(30.0).unwrap();
            assert_relative_eq!(realized, vs30, max_relative = 0.005);
        }
    }

    #[test]
    fn discretize_clips_final_layer() {
        let c = tab1();
        let p = ProfileParams::from_vs30(400.0, &c, 0.0).unwrap();
        let col = discretize(&p, 100.0, &DiscretizationRule::default()).unwrap();
        let last = col.layers.last().unwrap();
        assert_eq!(last.top_depth + last.thickness, 100.0);
        assert!(discretize(&p, 0.0, &DiscretizationRule::default()).is_err());
    }

    #[test]
    fn residuals_identities() {
        let c = tab1();
        let p = ProfileParams::from_vs30(300.0, &c, 0.0).unwrap();
        let col = discretize(&p, 40.0, &DiscretizationRule::default()).unwrap();
        for (_, eps) in residuals(&col, &p).unwrap() {
            assert_abs_diff_eq!(eps, 0.0, epsilon = 1e-12);
        }
        let mut doubled = col.clone();
        for layer in &mut doubled.layers {
            layer.vs *= 2.0;
        }
        for (_, eps) in residuals(&doubled, &p).unwrap() {
            assert_abs_diff_eq!(eps, 2.0f64.ln(), epsilon = 1e-12);
        }
    }

    #[test]
    fn residual_noise_sd_recovers_sigma() {
        // Monte Carlo: ln-noise with sd 0.3759 shows up as the residual sd.
        use rand::Rng;
        use rand_distr::StandardNormal;
        let c = tab1();
        let p = ProfileParams::from_vs30(250.0, &c, 0.0).unwrap();
        let col = discretize(&p, 60.0, &DiscretizationRule::default()).unwrap();
        let mut rng = crate::rng::stream_rng(3, "residual-sd", 0);
        let mut eps_all = Vec::new();
        while eps_all.len() < 600 {
            let mut noisy = col.clone();
            for layer in &mut noisy.layers {
                let z: f64 = rng.sample(StandardNormal);
                layer.vs *= (0.3759 * z).exp();
            }
            eps_all.extend(residuals(&noisy, &p).unwrap().into_iter().map(|(_, e)| e));
        }
        let n = eps_all.len() as f64;
        let mean = eps_all.iter().sum::<f64>() / n;
        let var = eps_all.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / (n - 1.0);
        assert_abs_diff_eq!(var.sqrt(), 0.3759, epsilon = 0.05);
    }

    #[test]
    fn dbr_sensitivity_matches_central_differences() {
        let c = tab1();
        for &vs30 in &[150.0, 400.0, 900.0] {
            let p = ProfileParams::from_vs30(vs30, &c, 0.0).unwrap();
            for &z in &[0.0, 2.0, 5.0, 20.0, 80.0, 200.0] {
                let h = 1e-6;
                let up = ProfileParams::from_vs30(vs30, &c, h).unwrap();
                let dn = ProfileParams::from_vs30(vs30, &c, -h).unwrap();
                let fd = (median_vs(z, &up).unwrap().ln() - median_vs(z, &dn).unwrap().ln())
                    / (2.0 * h);
                assert_relative_eq!(p.dln_vs_ddbr(z).unwrap(), fd, max_relative = 1e-6, epsilon = 1e-9);
            }
        }
    }
}
