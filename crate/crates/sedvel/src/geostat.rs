//! Spatial Gaussian-process machinery for the slope-adjustment field,
//! along-depth correlated residual realizations, and semivariogram
//! estimation/fitting.
//!
//! Coordinates are kilometers on a local tangent plane (equirectangular
//! projection about a reference point, adequate below ~300 km extents).
//! Covariances use the decaying exponential kernel `omega^2 exp(-d/ell)`.

use std::io::Write as _;
use std::path::Path;

use nalgebra::{DMatrix, DVector, Dyn};
use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{data, domain, numerical, Result};
use crate::util::fmt_sig;

pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Equirectangular projection onto a local tangent plane (km).
#[derive(Clone, Copy, Debug)]
pub struct Projection {
    pub origin_lat: f64,
    pub origin_lon: f64,
    cos_lat0: f64,
}

impl Projection {
    pub fn centered_on(origin_lat: f64, origin_lon: f64) -> Self {
        Self { origin_lat, origin_lon, cos_lat0: origin_lat.to_radians().cos() }
    }

    /// Projection centered on the centroid of the given (lat, lon) points.
    pub fn fit(points: &[(f64, f64)]) -> Result<Self> {
        if points.is_empty() {
            return Err(domain("cannot fit a projection to zero points".to_string()));
        }
        let n = points.len() as f64;
        let lat = points.iter().map(|p| p.0).sum::<f64>() / n;
        let lon = points.iter().map(|p| p.1).sum::<f64>() / n;
        Ok(Self::centered_on(lat, lon))
    }

    /// (lat, lon) degrees to plane (x_km, y_km).
    pub fn to_plane(&self, lat: f64, lon: f64) -> (f64, f64) {
        let x = EARTH_RADIUS_KM * (lon - self.origin_lon).to_radians() * self.cos_lat0;
        let y = EARTH_RADIUS_KM * (lat - self.origin_lat).to_radians();
        (x, y)
    }

    /// Plane (x_km, y_km) back to (lat, lon) degrees.
    pub fn to_latlon(&self, x_km: f64, y_km: f64) -> (f64, f64) {
        let lat = self.origin_lat + (y_km / EARTH_RADIUS_KM).to_degrees();
        let lon = self.origin_lon + (x_km / (EARTH_RADIUS_KM * self.cos_lat0)).to_degrees();
        (lat, lon)
    }
}

/// Exponential spatial covariance `omega^2 exp(-d / ell)`.
pub fn spatial_kernel(d_km: f64, omega: f64, ell_km: f64) -> Result<f64> {
    if !(d_km >= 0.0) {
        return Err(domain(format!("distance must be >= 0, got {d_km}")));
    }
    if !(ell_km > 0.0) {
        return Err(domain(format!("ell must be > 0, got {ell_km}")));
    }
    if !(omega >= 0.0) {
        return Err(domain(format!("omega must be >= 0, got {omega}")));
    }
    Ok(omega * omega * (-d_km / ell_km).exp())
}

/// One training location of the slope-adjustment field.
#[derive(Clone, Debug, PartialEq)]
pub struct FieldPoint {
    pub id: String,
    pub x_km: f64,
    pub y_km: f64,
    pub dbr_mean: f64,
    /// Observation noise standard deviation (>= 0; 0 = exact).
    pub dbr_sd: f64,
}

/// Training locations with per-profile slope-adjustment estimates, plus the
/// kernel hyperparameters.
#[derive(Clone, Debug)]
pub struct SpatialField {
    pub points: Vec<FieldPoint>,
    pub omega: f64,
    pub ell_km: f64,
}

/// Points closer than this (1 m) count as coincident.
const COINCIDENT_KM: f64 = 1e-3;

impl SpatialField {
    pub fn new(points: Vec<FieldPoint>, omega: f64, ell_km: f64) -> Result<Self> {
        if !(ell_km > 0.0) {
            return Err(domain(format!("ell must be > 0, got {ell_km}")));
        }
        if !(omega >= 0.0) {
            return Err(domain(format!("omega must be >= 0, got {omega}")));
        }
        for p in &points {
            if !(p.dbr_sd >= 0.0) {
                return Err(domain(format!("point '{}': dBr_sd must be >= 0", p.id)));
            }
        }
        for i in 0..points.len() {
            for j in (i + 1)..points.len() {
                let d = (points[i].x_km - points[j].x_km).hypot(points[i].y_km - points[j].y_km);
                if d < COINCIDENT_KM && points[i].dbr_mean != points[j].dbr_mean {
                    return Err(data(format!(
                        "coincident points '{}' and '{}' carry different dBr means",
                        points[i].id, points[j].id
                    )));
                }
            }
        }
        Ok(Self { points, omega, ell_km })
    }

    /// Read a field from CSV `id,lat,lon,dBr_mean,dBr_sd`, projecting onto
    /// the given tangent plane.
    pub fn read_csv(
        path: impl AsRef<Path>,
        projection: &Projection,
        omega: f64,
        ell_km: f64,
    ) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path.as_ref())
            .map_err(|e| data(format!("{}: {e}", path.as_ref().display())))?;
        let expected = ["id", "lat", "lon", "dBr_mean", "dBr_sd"];
        if reader.headers()?.iter().collect::<Vec<_>>() != expected {
            return Err(data(format!(
                "spatial field csv header must be {:?}",
                expected.join(",")
            )));
        }
        let mut points = Vec::new();
        for (line, record) in reader.records().enumerate() {
            let record = record?;
            let parse = |s: &str, name: &str| -> Result<f64> {
                s.parse::<f64>()
                    .map_err(|_| data(format!("field csv row {}: bad {name} '{s}'", line + 2)))
            };
            let lat = parse(&record[1], "lat")?;
            let lon = parse(&record[2], "lon")?;
            let (x_km, y_km) = projection.to_plane(lat, lon);
            points.push(FieldPoint {
                id: record[0].to_string(),
                x_km,
                y_km,
                dbr_mean: parse(&record[3], "dBr_mean")?,
                dbr_sd: parse(&record[4], "dBr_sd")?,
            });
        }
        Self::new(points, omega, ell_km)
    }

    /// Write the field back to CSV, mapping plane coordinates to lat/lon.
    pub fn write_csv(&self, path: impl AsRef<Path>, projection: &Projection) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
        writeln!(out, "id,lat,lon,dBr_mean,dBr_sd")?;
        for p in &self.points {
            let (lat, lon) = projection.to_latlon(p.x_km, p.y_km);
            writeln!(
                out,
                "{},{},{},{},{}",
                p.id,
                fmt_sig(lat, 8),
                fmt_sig(lon, 8),
                fmt_sig(p.dbr_mean, 6),
                fmt_sig(p.dbr_sd, 6)
            )?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Cholesky factorization with escalating diagonal jitter.
///
/// Tries the matrix as given first, so exactly representable problems (for
/// example noise-free kriging) keep their exact solutions; only near-singular
/// matrices receive jitter (1e-8, escalated two decades before giving up).
pub(crate) fn cholesky_with_jitter(
    matrix: &DMatrix<f64>,
    context: &str,
) -> Result<nalgebra::linalg::Cholesky<f64, Dyn>> {
    const JITTERS: [f64; 4] = [0.0, 1e-8, 1e-6, 1e-4];
    for &jitter in &JITTERS {
        let mut m = matrix.clone();
        if jitter > 0.0 {
            for i in 0..m.nrows() {
                m[(i, i)] += jitter;
            }
        }
        if let Some(chol) = m.cholesky() {
            return Ok(chol);
        }
    }
    Err(numerical(format!(
        "{context}: covariance matrix is not positive definite even with 1e-4 jitter \
         (coincident points with zero noise?)"
    )))
}

/// GP regression of the slope adjustment at query points.
///
/// Prior mean 0, covariance [`spatial_kernel`], heteroscedastic observation
/// noise `dbr_sd^2`. Returns the posterior (mean, sd) per query. Far from all
/// training points the prior is recovered: mean -> 0, sd -> omega.
pub fn krige_dbr(field: &SpatialField, queries: &[(f64, f64)]) -> Result<Vec<(f64, f64)>> {
    let n = field.points.len();
    if n == 0 {
        return Ok(queries.iter().map(|_| (0.0, field.omega)).collect());
    }
    let omega2 = field.omega * field.omega;
    let mut k_train = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            let d = (field.points[i].x_km - field.points[j].x_km)
                .hypot(field.points[i].y_km - field.points[j].y_km);
            k_train[(i, j)] = spatial_kernel(d, field.omega, field.ell_km)?;
        }
        k_train[(i, i)] += field.points[i].dbr_sd * field.points[i].dbr_sd;
    }
    let chol = cholesky_with_jitter(&k_train, "kriging")?;
    let y = DVector::from_iterator(n, field.points.iter().map(|p| p.dbr_mean));
    let alpha = chol.solve(&y);

    let mut out = Vec::with_capacity(queries.len());
    for &(qx, qy) in queries {
        let k_q = DVector::from_iterator(
            n,
            field
                .points
                .iter()
                .map(|p| omega2 * (-(p.x_km - qx).hypot(p.y_km - qy) / field.ell_km).exp()),
        );
        let mean = k_q.dot(&alpha);
        let var = omega2 - k_q.dot(&chol.solve(&k_q));
        // Clamp roundoff; exact interpolation reports sd = 0.
        let var = if var < 1e-12 * omega2.max(1e-300) { 0.0 } else { var };
        out.push((mean, var.sqrt()));
    }
    Ok(out)
}

/// Draw one realization of along-depth residuals at the given depths.
///
/// eps(z) = eta + w(z), where eta ~ N(0, total_var - sill_s) is constant per
/// profile (between-profile variance; within-profile semivariograms cannot
/// see it) and w is zero-mean Gaussian with covariance
/// `sill_s * exp(-|dz| / range_r)`. eta is drawn first, then the w vector, so
/// a fixed seed fixes the realization.
pub fn sample_depth_residuals(
    depths: &[f64],
    sill_s: f64,
    range_r: f64,
    total_var: f64,
    seed: u64,
) -> Result<Vec<f64>> {
    let mut rng = crate::rng::stream_rng(seed, "depth-residuals", 0);
    sample_depth_residuals_with(depths, sill_s, range_r, total_var, &mut rng)
}

/// [`sample_depth_residuals`] drawing from a caller-managed stream.
pub fn sample_depth_residuals_with<R: Rng>(
    depths: &[f64],
    sill_s: f64,
    range_r: f64,
    total_var: f64,
    rng: &mut R,
) -> Result<Vec<f64>> {
    if !(sill_s >= 0.0) {
        return Err(domain(format!("sill must be >= 0, got {sill_s}")));
    }
    if !(range_r > 0.0) {
        return Err(domain(format!("range must be > 0, got {range_r}")));
    }
    if total_var < sill_s {
        return Err(domain(format!(
            "total_var ({total_var}) must be >= sill ({sill_s})"
        )));
    }
    if depths.windows(2).any(|w| w[1] < w[0]) {
        return Err(domain("depths must be sorted ascending".to_string()));
    }
    let n = depths.len();
    let eta_sd = (total_var - sill_s).sqrt();
    let eta: f64 = eta_sd * rng.sample::<f64, _>(StandardNormal);
    if sill_s == 0.0 {
        return Ok(vec![eta; n]);
    }
    let mut cov = DMatrix::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            cov[(i, j)] = sill_s * (-(depths[i] - depths[j]).abs() / range_r).exp();
        }
    }
    let chol = cholesky_with_jitter(&cov, "depth residual covariance")?;
    let z = DVector::from_iterator(n, (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)));
    let w = chol.l() * z;
    Ok(w.iter().map(|wi| eta + wi).collect())
}

/// Empirical semivariogram plus (optionally) fitted exponential-model
/// parameters.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct Semivariogram {
    /// Bin centers (m).
    pub lags: Vec<f64>,
    /// Semivariance per bin; NaN where the bin is empty.
    pub gamma: Vec<f64>,
    /// Pair count per bin.
    pub counts: Vec<u64>,
    pub fitted: Option<FittedVariogram>,
}

/// Exponential semivariogram fit `gamma(h) = s (1 - exp(-h / r))`.
#[derive(Clone, Copy, Debug, Serialize, Deserialize)]
pub struct FittedVariogram {
    /// e-folding correlation length (m).
    pub range_r: f64,
    /// Sill (ln variance).
    pub sill_s: f64,
    pub se_r: f64,
    pub se_s: f64,
    pub iterations: usize,
}

/// Default lag bins: 2 m wide from 0 to 60 m.
pub fn default_bin_edges() -> Vec<f64> {
    (0..=30).map(|i| 2.0 * i as f64).collect()
}

/// Bins with fewer pairs than this are excluded from fitting.
pub const MIN_PAIRS_PER_BIN: u64 = 30;

/// Pool within-profile residual pairs into lag bins.
///
/// Each input profile is a list of (depth m, residual) samples; pairs never
/// span profiles, so per-profile constant shifts cancel. Pairs with lags
/// outside the bin range are not counted. Populated bins report the mean
/// pair lag (not the bin center), which keeps the downstream fit unbiased
/// when sampling depths are regular.
pub fn empirical_semivariogram(
    profiles: &[Vec<(f64, f64)>],
    bin_edges: &[f64],
) -> Result<Semivariogram> {
    if bin_edges.len() < 2 || bin_edges.windows(2).any(|w| w[1] <= w[0]) {
        return Err(domain("bin edges must be strictly increasing".to_string()));
    }
    for (i, p) in profiles.iter().enumerate() {
        if p.len() < 2 {
            return Err(domain(format!(
                "residual profile {i} has fewer than 2 samples"
            )));
        }
    }
    let nbins = bin_edges.len() - 1;
    let mut sums = vec![0.0; nbins];
    let mut lag_sums = vec![0.0; nbins];
    let mut counts = vec![0u64; nbins];
    for profile in profiles {
        for i in 0..profile.len() {
            for j in (i + 1)..profile.len() {
                let h = (profile[i].0 - profile[j].0).abs();
                if h < bin_edges[0] || h >= bin_edges[nbins] {
                    continue;
                }
                let bin = bin_edges[..nbins].partition_point(|&e| e <= h) - 1;
                let d = profile[i].1 - profile[j].1;
                sums[bin] += 0.5 * d * d;
                lag_sums[bin] += h;
                counts[bin] += 1;
            }
        }
    }
    let lags = (0..nbins)
        .map(|i| {
            if counts[i] > 0 {
                lag_sums[i] / counts[i] as f64
            } else {
                0.5 * (bin_edges[i] + bin_edges[i + 1])
            }
        })
        .collect();
    let gamma = sums
        .iter()
        .zip(&counts)
        .map(|(&s, &c)| if c > 0 { s / c as f64 } else { f64::NAN })
        .collect();
    Ok(Semivariogram { lags, gamma, counts, fitted: None })
}

/// Weighted least-squares fit of the exponential semivariogram model to the
/// populated bins (weights = pair counts), by Gauss-Newton with
/// Levenberg-style damping. Standard errors come from the curvature
/// `(J^T W J)^{-1}` scaled by the weighted residual variance.
pub fn fit_semivariogram(emp: &Semivariogram) -> Result<FittedVariogram> {
    fit_semivariogram_min_pairs(emp, MIN_PAIRS_PER_BIN)
}

/// [`fit_semivariogram`] with an explicit bin-population threshold.
pub fn fit_semivariogram_min_pairs(emp: &Semivariogram, min_pairs: u64) -> Result<FittedVariogram> {
    let mut h = Vec::new();
    let mut g = Vec::new();
    let mut w = Vec::new();
    for i in 0..emp.lags.len() {
        if emp.counts[i] >= min_pairs.max(1) && emp.gamma[i].is_finite() {
            h.push(emp.lags[i]);
            g.push(emp.gamma[i]);
            w.push(emp.counts[i] as f64);
        }
    }
    if h.len() < 4 {
        return Err(domain(format!(
            "semivariogram fit needs >= 4 populated bins, got {}",
            h.len()
        )));
    }
    let model = |hi: f64, r: f64, s: f64| s * (-(-hi / r).exp_m1());

    // Init: sill from the deepest lag, range from the 63.2% crossing.
    let mut s = *g.last().unwrap();
    if !(s > 0.0) {
        s = g.iter().cloned().fold(f64::MIN, f64::max).max(1e-12);
    }
    let mut r = h[h.len() / 2];
    for (hi, gi) in h.iter().zip(&g) {
        if *gi >= 0.632 * s {
            r = *hi;
            break;
        }
    }
    r = r.max(1e-6);

    let sse = |r: f64, s: f64| -> f64 {
        h.iter()
            .zip(&g)
            .zip(&w)
            .map(|((hi, gi), wi)| wi * (gi - model(*hi, r, s)).powi(2))
            .sum()
    };
    let mut lambda = 1e-6;
    let mut current = sse(r, s);
    let mut converged = false;
    let mut iterations = 0;
    for iter in 0..200 {
        iterations = iter + 1;
        let mut jtj = [[0.0; 2]; 2];
        let mut jtr = [0.0; 2];
        for ((hi, gi), wi) in h.iter().zip(&g).zip(&w) {
            let e = (-hi / r).exp();
            let ds = 1.0 - e;
            let dr = -s * e * hi / (r * r);
            let resid = gi - model(*hi, r, s);
            jtj[0][0] += wi * dr * dr;
            jtj[0][1] += wi * dr * ds;
            jtj[1][1] += wi * ds * ds;
            jtr[0] += wi * dr * resid;
            jtr[1] += wi * ds * resid;
        }
        jtj[1][0] = jtj[0][1];
        let mut advanced = false;
        for _ in 0..40 {
            let a = [
                [jtj[0][0] * (1.0 + lambda), jtj[0][1]],
                [jtj[1][0], jtj[1][1] * (1.0 + lambda)],
            ];
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            if det.abs() < 1e-300 {
                lambda *= 10.0;
                continue;
            }
            let step_r = (a[1][1] * jtr[0] - a[0][1] * jtr[1]) / det;
            let step_s = (a[0][0] * jtr[1] - a[1][0] * jtr[0]) / det;
            let (r_new, s_new) = (r + step_r, s + step_s);
            if !(r_new > 0.0) || !(s_new > 0.0) {
                lambda *= 10.0;
                continue;
            }
            let next = sse(r_new, s_new);
            if next <= current {
                let rel = (current - next) / current.max(1e-300);
                let step_small =
                    step_r.abs() < 1e-10 * r.max(1.0) && step_s.abs() < 1e-10 * s.max(1e-6);
                r = r_new;
                s = s_new;
                current = next;
                lambda = (lambda * 0.3).max(1e-12);
                advanced = true;
                if rel < 1e-14 || step_small {
                    converged = true;
                }
                break;
            }
            lambda *= 10.0;
        }
        if converged {
            break;
        }
        if !advanced {
            // Stationary point: no descent direction left.
            converged = true;
            break;
        }
    }
    if !converged {
        return Err(numerical(format!(
            "semivariogram fit did not converge after 200 iterations \
             (last iterate r = {r}, s = {s})"
        )));
    }

    // Curvature-based standard errors at the optimum.
    let mut jtj = [[0.0; 2]; 2];
    for (hi, wi) in h.iter().zip(&w) {
        let e = (-hi / r).exp();
        let ds = 1.0 - e;
        let dr = -s * e * hi / (r * r);
        jtj[0][0] += wi * dr * dr;
        jtj[0][1] += wi * dr * ds;
        jtj[1][1] += wi * ds * ds;
    }
    jtj[1][0] = jtj[0][1];
    let dof = (h.len() as f64 - 2.0).max(1.0);
    let sigma2 = current / dof;
    let det = jtj[0][0] * jtj[1][1] - jtj[0][1] * jtj[1][0];
    let (se_r, se_s) = if det > 0.0 {
        (
            (sigma2 * jtj[1][1] / det).max(0.0).sqrt(),
            (sigma2 * jtj[0][0] / det).max(0.0).sqrt(),
        )
    } else {
        (f64::NAN, f64::NAN)
    };
    Ok(FittedVariogram { range_r: r, sill_s: s, se_r, se_s, iterations })
}

/// Write `lag_m,gamma,count` rows; empty bins emit an empty gamma field.
pub fn write_semivariogram_csv(path: impl AsRef<Path>, semi: &Semivariogram) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    writeln!(out, "lag_m,gamma,count")?;
    for i in 0..semi.lags.len() {
        let gamma = if semi.gamma[i].is_finite() {
            fmt_sig(semi.gamma[i], 6)
        } else {
            String::new()
        };
        writeln!(out, "{},{},{}", fmt_sig(semi.lags[i], 6), gamma, semi.counts[i])?;
    }
    out.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::{assert_abs_diff_eq, assert_relative_eq};

    #[test]
    fn kernel_examples() {
        assert_relative_eq!(spatial_kernel(0.0, 0.5, 2.0).unwrap(), 0.25);
        assert_relative_eq!(
            spatial_kernel(2.0, 0.5, 2.0).unwrap(),
            0.25 * (-1.0f64).exp(),
            epsilon = 1e-15
        );
        // Table-2 hyperparameters at 5 km.
        assert_abs_diff_eq!(
            spatial_kernel(5.0, 0.3156, 1.9104).unwrap(),
            0.00729,
            epsilon = 2e-5
        );
        assert!(spatial_kernel(-1.0, 0.3, 2.0).is_err());
        let k1 = spatial_kernel(1.0, 0.3, 2.0).unwrap();
        let k2 = spatial_kernel(2.0, 0.3, 2.0).unwrap();
        assert!(k2 < k1);
    }

    fn single_point_field(mean: f64, sd: f64) -> SpatialField {
        SpatialField::new(
            vec![FieldPoint { id: "p0".into(), x_km: 0.0, y_km: 0.0, dbr_mean: mean, dbr_sd: sd }],
            0.3156,
            1.9104,
        )
        .unwrap()
    }

    #[test]
    fn kriging_noise_free_interpolation() {
        let field = single_point_field(0.4, 0.0);
        let out = krige_dbr(&field, &[(0.0, 0.0)]).unwrap();
        assert_abs_diff_eq!(out[0].0, 0.4, epsilon = 1e-12);
        assert_eq!(out[0].1, 0.0);
    }

    #[test]
    fn kriging_prior_recovery_far_away() {
        let field = single_point_field(0.4, 0.0);
        let far = 100.0 * field.ell_km;
        let out = krige_dbr(&field, &[(far, 0.0)]).unwrap();
        assert_abs_diff_eq!(out[0].0, 0.0, epsilon = 1e-6);
        assert_abs_diff_eq!(out[0].1, field.omega, epsilon = 1e-6);
    }

    #[test]
    fn kriging_single_point_closed_form() {
        let field = single_point_field(0.4, 0.0);
        let out = krige_dbr(&field, &[(field.ell_km, 0.0)]).unwrap();
        assert_relative_eq!(out[0].0, 0.4 * (-1.0f64).exp(), epsilon = 1e-12);
        assert_relative_eq!(
            out[0].1,
            field.omega * (1.0 - (-2.0f64).exp()).sqrt(),
            epsilon = 1e-10
        );
    }

    #[test]
    fn kriging_mean_is_linear_in_training_values() {
        // Superposition over random fields.
        let mut rng = crate::rng::stream_rng(5, "kriging-linear", 0);
        let coords: Vec<(f64, f64)> =
            (0..12).map(|_| (rng.random::<f64>() * 10.0, rng.random::<f64>() * 10.0)).collect();
        let build = |values: &[f64]| {
            SpatialField::new(
                coords
                    .iter()
                    .zip(values)
                    .enumerate()
                    .map(|(i, (&(x, y), &v))| FieldPoint {
                        id: format!("p{i}"),
                        x_km: x,
                        y_km: y,
                        dbr_mean: v,
                        dbr_sd: 0.05,
                    })
                    .collect(),
                0.3,
                2.0,
            )
            .unwrap()
        };
        let a: Vec<f64> = (0..12).map(|_| rng.random::<f64>() - 0.5).collect();
        let b: Vec<f64> = (0..12).map(|_| rng.random::<f64>() - 0.5).collect();
        let sum: Vec<f64> = a.iter().zip(&b).map(|(x, y)| x + y).collect();
        let queries = [(3.3, 4.4), (8.0, 1.0), (-2.0, 5.0)];
        let ka = krige_dbr(&build(&a), &queries).unwrap();
        let kb = krige_dbr(&build(&b), &queries).unwrap();
        let ks = krige_dbr(&build(&sum), &queries).unwrap();
        for i in 0..queries.len() {
            assert_relative_eq!(ks[i].0, ka[i].0 + kb[i].0, epsilon = 1e-9);
            // Variance does not depend on the observed values.
            assert_relative_eq!(ks[i].1, ka[i].1, epsilon = 1e-12);
            assert_relative_eq!(ks[i].1, kb[i].1, epsilon = 1e-12);
        }
    }

    #[test]
    fn coincident_points_with_different_means_rejected() {
        let points = vec![
            FieldPoint { id: "a".into(), x_km: 0.0, y_km: 0.0, dbr_mean: 0.1, dbr_sd: 0.0 },
            FieldPoint { id: "b".into(), x_km: 0.0005, y_km: 0.0, dbr_mean: 0.2, dbr_sd: 0.0 },
        ];
        assert!(SpatialField::new(points, 0.3, 2.0).is_err());
    }

    #[test]
    fn depth_residuals_degenerate_and_errors() {
        let depths = vec![1.0, 5.0, 9.0];
        let eps = sample_depth_residuals(&depths, 0.0, 11.9, 0.0, 1).unwrap();
        assert!(eps.iter().all(|&e| e == 0.0));
        assert!(sample_depth_residuals(&depths, 0.1, 11.9, 0.05, 1).is_err());
        assert!(sample_depth_residuals(&[5.0, 1.0], 0.1, 11.9, 0.2, 1).is_err());
        // Deterministic per seed.
        let a = sample_depth_residuals(&depths, 0.06, 11.9, 0.08, 7).unwrap();
        let b = sample_depth_residuals(&depths, 0.06, 11.9, 0.08, 7).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn depth_residuals_single_depth_variance() {
        // Total variance from the spatial-model sigma, sill from the depth
        // block.
        let total = 0.2807f64 * 0.2807;
        let mut rng = crate::rng::stream_rng(2, "depth-var", 0);
        let mut sum2 = 0.0;
        let n = 10_000;
        for _ in 0..n {
            let eps =
                sample_depth_residuals_with(&[10.0], 0.0607, 11.9778, total, &mut rng).unwrap();
            sum2 += eps[0] * eps[0];
        }
        let var = sum2 / n as f64;
        assert_abs_diff_eq!(var, total, epsilon = 0.003);
    }

    #[test]
    fn depth_residuals_pair_correlation() {
        // At separation = range, correlation ~ exp(-1).
        let dz = 11.98;
        let mut rng = crate::rng::stream_rng(4, "depth-corr", 0);
        let (mut s1, mut s2, mut s11, mut s22, mut s12) = (0.0, 0.0, 0.0, 0.0, 0.0);
        let n = 10_000;
        for _ in 0..n {
            let eps =
                sample_depth_residuals_with(&[0.0, dz], 0.0607, 11.9778, 0.0607, &mut rng).unwrap();
            s1 += eps[0];
            s2 += eps[1];
            s11 += eps[0] * eps[0];
            s22 += eps[1] * eps[1];
            s12 += eps[0] * eps[1];
        }
        let nf = n as f64;
        let cov = s12 / nf - (s1 / nf) * (s2 / nf);
        let v1 = s11 / nf - (s1 / nf).powi(2);
        let v2 = s22 / nf - (s2 / nf).powi(2);
        let corr = cov / (v1 * v2).sqrt();
        assert_abs_diff_eq!(corr, (-dz / 11.9778f64).exp(), epsilon = 0.02);
    }

    #[test]
    fn depth_residuals_covariance_convergence() {
        // Sample covariance of a 4-depth draw approaches the target matrix.
        let depths = [2.0, 6.0, 14.0, 30.0];
        let (sill, range, total) = (0.08, 11.9, 0.12);
        let n = 20_000;
        let mut rng = crate::rng::stream_rng(6, "depth-cov", 0);
        let mut sums = [0.0; 4];
        let mut prods = [[0.0; 4]; 4];
        for _ in 0..n {
            let eps = sample_depth_residuals_with(&depths, sill, range, total, &mut rng).unwrap();
            for i in 0..4 {
                sums[i] += eps[i];
                for j in 0..4 {
                    prods[i][j] += eps[i] * eps[j];
                }
            }
        }
        let nf = n as f64;
        let mut frob_err = 0.0;
        let mut frob_ref = 0.0;
        for i in 0..4 {
            for j in 0..4 {
                let target =
                    (total - sill) + sill * (-(depths[i] - depths[j]).abs() / range).exp();
                let got = prods[i][j] / nf - (sums[i] / nf) * (sums[j] / nf);
                frob_err += (got - target).powi(2);
                frob_ref += target * target;
            }
        }
        assert!((frob_err / frob_ref).sqrt() < 0.10);
    }

    #[test]
    fn semivariogram_constant_residuals() {
        let profiles: Vec<Vec<(f64, f64)>> =
            (0..5).map(|p| (0..20).map(|i| (i as f64, p as f64)).collect()).collect();
        let semi = empirical_semivariogram(&profiles, &default_bin_edges()).unwrap();
        for (i, &g) in semi.gamma.iter().enumerate() {
            if semi.counts[i] > 0 {
                assert_abs_diff_eq!(g, 0.0, epsilon = 1e-15);
            }
        }
    }

    #[test]
    fn semivariogram_iid_nugget() {
        let mut rng = crate::rng::stream_rng(8, "semivar-nugget", 0);
        let v: f64 = 0.09;
        let profiles: Vec<Vec<(f64, f64)>> = (0..300)
            .map(|_| {
                (0..30)
                    .map(|i| (i as f64, v.sqrt() * rng.sample::<f64, _>(StandardNormal)))
                    .collect()
            })
            .collect();
        let semi = empirical_semivariogram(&profiles, &default_bin_edges()).unwrap();
        for i in 0..semi.lags.len() {
            if semi.counts[i] >= MIN_PAIRS_PER_BIN {
                assert_relative_eq!(semi.gamma[i], v, max_relative = 0.06);
            }
        }
    }

    #[test]
    fn semivariogram_invariant_to_profile_order_and_shifts() {
        let mut rng = crate::rng::stream_rng(9, "semivar-shift", 0);
        let profiles: Vec<Vec<(f64, f64)>> = (0..10)
            .map(|_| (0..25).map(|i| (i as f64, rng.random::<f64>())).collect())
            .collect();
        let edges = default_bin_edges();
        let base = empirical_semivariogram(&profiles, &edges).unwrap();
        let mut reordered = profiles.clone();
        reordered.reverse();
        let re = empirical_semivariogram(&reordered, &edges).unwrap();
        // Adding a constant to all residuals of one profile changes nothing.
        let mut shifted = profiles.clone();
        for s in &mut shifted[3] {
            s.1 += 5.0;
        }
        let sh = empirical_semivariogram(&shifted, &edges).unwrap();
        for i in 0..base.gamma.len() {
            if base.counts[i] > 0 {
                assert_relative_eq!(base.gamma[i], re.gamma[i], epsilon = 1e-12);
                assert_relative_eq!(base.gamma[i], sh.gamma[i], epsilon = 1e-9);
            }
        }
    }

    #[test]
    fn fit_recovers_noise_free_model() {
        let (r_true, s_true) = (11.93, 0.082);
        let lags: Vec<f64> = (0..25).map(|i| 1.0 + 2.0 * i as f64).collect();
        let gamma: Vec<f64> = lags.iter().map(|h| s_true * (1.0 - (-h / r_true).exp())).collect();
        let counts = vec![100u64; lags.len()];
        let semi = Semivariogram { lags, gamma, counts, fitted: None };
        let fit = fit_semivariogram(&semi).unwrap();
        assert_relative_eq!(fit.range_r, r_true, max_relative = 1e-6);
        assert_relative_eq!(fit.sill_s, s_true, max_relative = 1e-6);
    }

    #[test]
    fn fit_homogeneity_in_scale() {
        let (r_true, s_true) = (9.0, 0.05);
        let lags: Vec<f64> = (0..20).map(|i| 1.5 + 2.0 * i as f64).collect();
        let gamma: Vec<f64> = lags.iter().map(|h| s_true * (1.0 - (-h / r_true).exp())).collect();
        let scaled: Vec<f64> = gamma.iter().map(|g| 3.0 * g).collect();
        let counts = vec![50u64; lags.len()];
        let base = fit_semivariogram(&Semivariogram {
            lags: lags.clone(),
            gamma,
            counts: counts.clone(),
            fitted: None,
        })
        .unwrap();
        let tripled =
            fit_semivariogram(&Semivariogram { lags, gamma: scaled, counts, fitted: None })
                .unwrap();
        assert_relative_eq!(tripled.sill_s, 3.0 * base.sill_s, max_relative = 1e-6);
        assert_relative_eq!(tripled.range_r, base.range_r, max_relative = 1e-6);
    }

    #[test]
    fn monte_carlo_round_trip_table3() {
        // Fields generated with the stationary depth-variability parameters
        // re-fit to within tolerance.
        let (r_true, s_true) = (11.9293, 0.0820);
        let depths: Vec<f64> = (0..50).map(|i| i as f64).collect();
        let mut rng = crate::rng::stream_rng(12, "semivar-roundtrip", 0);
        let mut profiles = Vec::new();
        for _ in 0..200 {
            let eps =
                sample_depth_residuals_with(&depths, s_true, r_true, s_true, &mut rng).unwrap();
            profiles.push(depths.iter().cloned().zip(eps).collect());
        }
        let semi = empirical_semivariogram(&profiles, &default_bin_edges()).unwrap();
        for i in 0..semi.lags.len() {
            if semi.counts[i] >= MIN_PAIRS_PER_BIN {
                let expected = s_true * (1.0 - (-semi.lags[i] / r_true).exp());
                assert_relative_eq!(semi.gamma[i], expected, max_relative = 0.10);
            }
        }
        let fit = fit_semivariogram(&semi).unwrap();
        assert_relative_eq!(fit.range_r, r_true, max_relative = 0.15);
        assert_relative_eq!(fit.sill_s, s_true, max_relative = 0.10);
    }

    #[test]
    fn projection_round_trip() {
        let proj = Projection::centered_on(37.7, -122.3);
        let (x, y) = proj.to_plane(37.9, -122.1);
        let (lat, lon) = proj.to_latlon(x, y);
        assert_abs_diff_eq!(lat, 37.9, epsilon = 1e-12);
        assert_abs_diff_eq!(lon, -122.1, epsilon = 1e-12);
        // One degree of latitude is ~111 km.
        let (_, y1) = proj.to_plane(38.7, -122.3);
        assert_abs_diff_eq!(y1, 111.19, epsilon = 0.1);
    }

    #[test]
    fn field_csv_round_trip() {
        let proj = Projection::centered_on(37.7, -122.3);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("field.csv");
        std::fs::write(
            &path,
            "id,lat,lon,dBr_mean,dBr_sd\n\
             a,37.75,-122.25,0.21,0.05\n\
             b,37.60,-122.40,-0.1,0\n",
        )
        .unwrap();
        let field = SpatialField::read_csv(&path, &proj, 0.3156, 1.9104).unwrap();
        assert_eq!(field.points.len(), 2);
        assert_relative_eq!(field.points[0].dbr_mean, 0.21);
        let out = dir.path().join("field_out.csv");
        field.write_csv(&out, &proj).unwrap();
        let back = SpatialField::read_csv(&out, &proj, 0.3156, 1.9104).unwrap();
        for (p, q) in field.points.iter().zip(&back.points) {
            assert_relative_eq!(p.x_km, q.x_km, epsilon = 1e-4);
            assert_relative_eq!(p.y_km, q.y_km, epsilon = 1e-4);
        }
    }
}
