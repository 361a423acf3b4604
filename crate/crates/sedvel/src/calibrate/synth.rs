//! Synthetic-dataset generator for calibration recovery tests.

use rand::Rng;
use rand_distr::StandardNormal;

use crate::coeffs::CoefficientSet;
use crate::column::{Layer, LayeredProfile, Provenance};
use crate::error::{domain, Result};
use crate::geostat::{cholesky_with_jitter, FieldPoint, Projection, SpatialField};
use crate::profile::{median_vs, ProfileParams};
use crate::rng::stream_rng;

/// Sampling design for [`synth_dataset`].
#[derive(Clone, Debug)]
pub struct SynthLayout {
    pub n_profiles: usize,
    /// Vs30 drawn log-uniform in this range (m/sec).
    pub vs30_range: (f64, f64),
    /// Profile depth drawn uniform in this range (m).
    pub depth_range: (f64, f64),
    /// Locations drawn uniform over a (width, height) km box.
    pub extent_km: (f64, f64),
    /// Constant layer thickness of the synthetic columns (m).
    pub layer_thickness: f64,
    /// Latitude/longitude anchoring the plane's origin.
    pub origin: (f64, f64),
}

impl Default for SynthLayout {
    fn default() -> Self {
        Self {
            n_profiles: 200,
            vs30_range: (120.0, 1500.0),
            depth_range: (30.0, 100.0),
            extent_km: (40.0, 40.0),
            layer_thickness: 2.0,
            origin: (37.5, -122.2),
        }
    }
}

impl SynthLayout {
    fn validate(&self) -> Result<()> {
        if self.n_profiles == 0 {
            return Err(domain("layout needs at least one profile".to_string()));
        }
        if !(self.vs30_range.0 > 0.0) || !(self.vs30_range.1 >= self.vs30_range.0) {
            return Err(domain(format!("bad vs30 range {:?}", self.vs30_range)));
        }
        if !(self.depth_range.0 > 0.0) || !(self.depth_range.1 >= self.depth_range.0) {
            return Err(domain(format!("bad depth range {:?}", self.depth_range)));
        }
        if !(self.extent_km.0 > 0.0) || !(self.extent_km.1 > 0.0) {
            return Err(domain(format!("degenerate extent {:?}", self.extent_km)));
        }
        if !(self.layer_thickness > 0.0) {
            return Err(domain("layer thickness must be > 0".to_string()));
        }
        Ok(())
    }
}

/// What generated the data: the drawn conditioning Vs30 per profile, the
/// latent slope-adjustment field (present when the coefficient set carries a
/// spatial block), and the plane projection.
///
/// The lognormal layer noise makes a column's realized time-average differ
/// slightly from the drawn Vs30; calibration experiments that condition on
/// the generating value should take it from here.
#[derive(Clone, Debug)]
pub struct SynthTruth {
    pub vs30: Vec<f64>,
    pub field: Option<SpatialField>,
    pub projection: Projection,
}

/// Draw a synthetic profile dataset from the model.
///
/// Per profile: Vs30 log-uniform, location uniform in the extent, the layer
/// ln-velocities are the median profile plus independent Normal(0, sigma)
/// noise. When `theta` carries a spatial block, per-profile slope
/// adjustments are drawn jointly from the Gaussian process first.
/// Deterministic per seed; every profile consumes its own substream, so
/// changing `n_profiles` leaves earlier profiles unchanged.
pub fn synth_dataset(
    theta: &CoefficientSet,
    layout: &SynthLayout,
    seed: u64,
) -> Result<(Vec<LayeredProfile>, SynthTruth)> {
    layout.validate()?;
    let n = layout.n_profiles;
    let projection = Projection::centered_on(layout.origin.0, layout.origin.1);

    // Per-profile design draws.
    let mut xy = Vec::with_capacity(n);
    let mut vs30s = Vec::with_capacity(n);
    let mut depths = Vec::with_capacity(n);
    let mut noise_rngs = Vec::with_capacity(n);
    let (ln_lo, ln_hi) = (layout.vs30_range.0.ln(), layout.vs30_range.1.ln());
    for i in 0..n {
        let mut rng = stream_rng(seed, "synth-profile", i as u64);
        let x = rng.random::<f64>() * layout.extent_km.0;
        let y = rng.random::<f64>() * layout.extent_km.1;
        let vs30 = (ln_lo + rng.random::<f64>() * (ln_hi - ln_lo)).exp();
        let depth =
            layout.depth_range.0 + rng.random::<f64>() * (layout.depth_range.1 - layout.depth_range.0);
        xy.push((x, y));
        vs30s.push(vs30);
        depths.push(depth);
        noise_rngs.push(rng);
    }

    // Latent slope-adjustment field.
    let dbr = match (theta.ell_km, theta.omega) {
        (Some(ell), Some(omega)) if omega > 0.0 => {
            let mut cov = nalgebra::DMatrix::zeros(n, n);
            for i in 0..n {
                for j in 0..n {
                    let d = (xy[i].0 - xy[j].0).hypot(xy[i].1 - xy[j].1);
                    cov[(i, j)] = omega * omega * (-d / ell).exp();
                }
            }
            let chol = cholesky_with_jitter(&cov, "synthetic dBr field")?;
            let mut rng = stream_rng(seed, "synth-dbr", 0);
            let z = nalgebra::DVector::from_iterator(
                n,
                (0..n).map(|_| rng.sample::<f64, _>(StandardNormal)),
            );
            (chol.l() * z).iter().cloned().collect()
        }
        _ => vec![0.0; n],
    };

    let mut profiles = Vec::with_capacity(n);
    for i in 0..n {
        let params = ProfileParams::from_vs30(vs30s[i], theta, dbr[i])?;
        let mut layers = Vec::new();
        let mut top = 0.0;
        while top < depths[i] {
            let bottom = (top + layout.layer_thickness).min(depths[i]);
            if bottom - top < 1e-6 {
                break;
            }
            let mid = 0.5 * (top + bottom);
            let mut ln_vs = median_vs(mid, &params)?.ln();
            if theta.sigma > 0.0 {
                let z: f64 = noise_rngs[i].sample(StandardNormal);
                ln_vs += theta.sigma * z;
            }
            layers.push(Layer { top_depth: top, thickness: bottom - top, vs: ln_vs.exp() });
            top = bottom;
        }
        let (lat, lon) = projection.to_latlon(xy[i].0, xy[i].1);
        profiles.push(LayeredProfile::new(
            format!("synth{i:04}"),
            Some((lat, lon)),
            layers,
            Provenance::Measured,
        )?);
    }

    let field = theta.ell_km.zip(theta.omega).map(|(ell, omega)| SpatialField {
        points: (0..n)
            .map(|i| FieldPoint {
                id: profiles[i].id.clone(),
                x_km: xy[i].0,
                y_km: xy[i].1,
                dbr_mean: dbr[i],
                dbr_sd: 0.0,
            })
            .collect(),
        omega,
        ell_km: ell,
    });
    Ok((profiles, SynthTruth { vs30: vs30s, field, projection }))
}
