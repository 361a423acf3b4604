//! Layered velocity columns: the common currency between the model,
//! geostatistics, merging, and site-response modules.

use std::collections::BTreeSet;
use std::io::Write as _;
use std::path::Path;

use crate::error::{data, domain, Result};
use crate::util::fmt_sig;

/// One soil/rock layer.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Layer {
    /// Depth to the layer top (m).
    pub top_depth: f64,
    /// Layer thickness (m, > 0).
    pub thickness: f64,
    /// Shear-wave velocity (m/sec, > 0).
    pub vs: f64,
}

impl Layer {
    pub fn mid_depth(&self) -> f64 {
        self.top_depth + 0.5 * self.thickness
    }

    pub fn bottom(&self) -> f64 {
        self.top_depth + self.thickness
    }
}

/// Where a column came from.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Provenance {
    Measured,
    ModelMedian,
    ModelRealization,
    Background,
    Merged,
}

/// A discretized Vs-vs-depth column with optional location metadata.
#[derive(Clone, Debug, PartialEq)]
pub struct LayeredProfile {
    pub id: String,
    /// (latitude, longitude) in degrees.
    pub location: Option<(f64, f64)>,
    pub layers: Vec<Layer>,
    pub provenance: Provenance,
}

/// Tolerance for layer contiguity checks (m).
const CONTIGUITY_TOL: f64 = 1e-6;

impl LayeredProfile {
    /// Build a profile, validating contiguity from the surface and positive
    /// thickness/velocity.
    pub fn new(
        id: String,
        location: Option<(f64, f64)>,
        layers: Vec<Layer>,
        provenance: Provenance,
    ) -> Result<Self> {
        if layers.is_empty() {
            return Err(domain(format!("profile '{id}' has no layers")));
        }
        if layers[0].top_depth.abs() > CONTIGUITY_TOL {
            return Err(domain(format!(
                "profile '{id}' must start at depth 0, got {}",
                layers[0].top_depth
            )));
        }
        for (i, layer) in layers.iter().enumerate() {
            if !(layer.thickness > 0.0) {
                return Err(domain(format!(
                    "profile '{id}' layer {i} has non-positive thickness {}",
                    layer.thickness
                )));
            }
            if !(layer.vs > 0.0) {
                return Err(domain(format!(
                    "profile '{id}' layer {i} has non-positive vs {}",
                    layer.vs
                )));
            }
            if i + 1 < layers.len() {
                let gap = (layers[i + 1].top_depth - layer.bottom()).abs();
                if gap > CONTIGUITY_TOL {
                    return Err(domain(format!(
                        "profile '{id}' layers {i} and {} are not contiguous (gap {gap} m)",
                        i + 1
                    )));
                }
            }
        }
        Ok(Self { id, location, layers, provenance })
    }

    /// Convenience constructor from (thickness, vs) pairs starting at the
    /// surface.
    pub fn from_pairs(
        id: impl Into<String>,
        pairs: &[(f64, f64)],
        provenance: Provenance,
    ) -> Result<Self> {
        let mut top = 0.0;
        let mut layers = Vec::with_capacity(pairs.len());
        for &(thickness, vs) in pairs {
            layers.push(Layer { top_depth: top, thickness, vs });
            top += thickness;
        }
        Self::new(id.into(), None, layers, provenance)
    }

    /// Depth to the profile bottom (m).
    pub fn depth_max(&self) -> f64 {
        self.layers.last().map_or(0.0, Layer::bottom)
    }

    /// Time-averaged velocity of the top `depth` meters:
    /// `depth / sum(thickness_i / vs_i)`, splitting the last layer as needed.
    /// `depth = 0` returns the surface-layer velocity (the limit value).
    pub fn time_averaged_vs(&self, depth: f64) -> Result<f64> {
        if !(depth >= 0.0) {
            return Err(domain(format!("depth must be >= 0, got {depth}")));
        }
        if depth == 0.0 {
            return Ok(self.layers[0].vs);
        }
        if depth > self.depth_max() + CONTIGUITY_TOL {
            return Err(domain(format!(
                "profile '{}' extends to {} m, shallower than requested {depth} m",
                self.id,
                self.depth_max()
            )));
        }
        let mut travel_time = 0.0;
        for layer in &self.layers {
            let top = layer.top_depth;
            if top >= depth {
                break;
            }
            let span = (layer.bottom().min(depth)) - top;
            travel_time += span / layer.vs;
        }
        Ok(depth / travel_time)
    }

    /// Quarter-wavelength fundamental frequency of the top `depth` meters:
    /// `f_P = (4 sum(dz_i / vs_i))^-1 = time_averaged_vs / (4 depth)`.
    pub fn fp_quarter_wavelength(&self, depth: f64) -> Result<f64> {
        if !(depth > 0.0) {
            return Err(domain(format!("depth must be > 0, got {depth}")));
        }
        Ok(self.time_averaged_vs(depth)? / (4.0 * depth))
    }

    /// Vs30 estimate: time average of the top 30 m, or of the full column
    /// when the profile is shallower than 30 m.
    pub fn vs30_estimate(&self) -> Result<f64> {
        self.time_averaged_vs(self.depth_max().min(30.0))
    }

    /// Resample onto the given layer boundaries, preserving vertical travel
    /// time (harmonic average) within each target layer. Boundaries must
    /// start at 0 and not exceed the profile depth.
    pub fn resample(&self, boundaries: &[f64]) -> Result<LayeredProfile> {
        if boundaries.len() < 2 {
            return Err(domain("resample needs at least two boundaries".to_string()));
        }
        if boundaries[0].abs() > CONTIGUITY_TOL {
            return Err(domain("resample boundaries must start at 0".to_string()));
        }
        let deepest = *boundaries.last().unwrap();
        if deepest > self.depth_max() + CONTIGUITY_TOL {
            return Err(domain(format!(
                "resample to {deepest} m exceeds profile depth {} m",
                self.depth_max()
            )));
        }
        let mut layers = Vec::with_capacity(boundaries.len() - 1);
        for w in boundaries.windows(2) {
            let (top, bottom) = (w[0], w[1]);
            if !(bottom > top) {
                return Err(domain("resample boundaries must be strictly increasing".to_string()));
            }
            let mut travel_time = 0.0;
            for layer in &self.layers {
                let lo = layer.top_depth.max(top);
                let hi = layer.bottom().min(bottom);
                if hi > lo {
                    travel_time += (hi - lo) / layer.vs;
                }
            }
            layers.push(Layer {
                top_depth: top,
                thickness: bottom - top,
                vs: (bottom - top) / travel_time,
            });
        }
        LayeredProfile::new(self.id.clone(), self.location, layers, self.provenance)
    }
}

fn provenance_label(p: Provenance) -> &'static str {
    match p {
        Provenance::Measured => "measured",
        Provenance::ModelMedian => "model_median",
        Provenance::ModelRealization => "model_realization",
        Provenance::Background => "background",
        Provenance::Merged => "merged",
    }
}

/// Read profiles from CSV with header `id,lat,lon,depth_top_m,thickness_m,vs_mps`.
/// Rows of one profile must be contiguous and depth-sorted; lat/lon may be
/// empty. Provenance of loaded profiles is `Measured`.
pub fn read_profiles_csv(path: impl AsRef<Path>) -> Result<Vec<LayeredProfile>> {
    let mut reader = csv::ReaderBuilder::new()
        .trim(csv::Trim::All)
        .from_path(path.as_ref())
        .map_err(|e| data(format!("{}: {e}", path.as_ref().display())))?;
    let headers = reader.headers()?.clone();
    let expected = ["id", "lat", "lon", "depth_top_m", "thickness_m", "vs_mps"];
    if headers.iter().collect::<Vec<_>>() != expected {
        return Err(data(format!(
            "profile csv header must be {:?}, got {:?}",
            expected.join(","),
            headers
        )));
    }
    let mut profiles: Vec<LayeredProfile> = Vec::new();
    let mut seen: BTreeSet<String> = BTreeSet::new();
    let mut current_id: Option<String> = None;
    let mut location: Option<(f64, f64)> = None;
    let mut layers: Vec<Layer> = Vec::new();

    let flush = |id: Option<String>,
                     location: Option<(f64, f64)>,
                     layers: &mut Vec<Layer>,
                     profiles: &mut Vec<LayeredProfile>|
     -> Result<()> {
        if let Some(id) = id {
            let profile = LayeredProfile::new(
                id,
                location,
                std::mem::take(layers),
                Provenance::Measured,
            )?;
            profiles.push(profile);
        }
        Ok(())
    };

    for (line, record) in reader.records().enumerate() {
        let record = record?;
        if record.len() != 6 {
            return Err(data(format!("profile csv row {}: expected 6 fields", line + 2)));
        }
        let id = record[0].to_string();
        let parse = |s: &str, name: &str| -> Result<f64> {
            s.parse::<f64>()
                .map_err(|_| data(format!("profile csv row {}: bad {name} '{s}'", line + 2)))
        };
        let lat = if record[1].is_empty() { None } else { Some(parse(&record[1], "lat")?) };
        let lon = if record[2].is_empty() { None } else { Some(parse(&record[2], "lon")?) };
        let top = parse(&record[3], "depth_top_m")?;
        let thickness = parse(&record[4], "thickness_m")?;
        let vs = parse(&record[5], "vs_mps")?;
        if current_id.as_deref() != Some(&id) {
            flush(current_id.take(), location, &mut layers, &mut profiles)?;
            if !seen.insert(id.clone()) {
                return Err(data(format!(
                    "profile csv: rows for id '{id}' are not contiguous"
                )));
            }
            current_id = Some(id);
            location = match (lat, lon) {
                (Some(a), Some(o)) => Some((a, o)),
                _ => None,
            };
        }
        layers.push(Layer { top_depth: top, thickness, vs });
    }
    flush(current_id, location, &mut layers, &mut profiles)?;
    Ok(profiles)
}

/// Write profiles in the CSV schema accepted by [`read_profiles_csv`].
/// Floats carry 6 significant digits.
pub fn write_profiles_csv(path: impl AsRef<Path>, profiles: &[LayeredProfile]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    writeln!(out, "id,lat,lon,depth_top_m,thickness_m,vs_mps")?;
    for profile in profiles {
        let (lat, lon) = match profile.location {
            Some((lat, lon)) => (fmt_sig(lat, 6), fmt_sig(lon, 6)),
            None => (String::new(), String::new()),
        };
        for layer in &profile.layers {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                profile.id,
                lat,
                lon,
                fmt_sig(layer.top_depth, 6),
                fmt_sig(layer.thickness, 6),
                fmt_sig(layer.vs, 6)
            )?;
        }
    }
    out.flush()?;
    Ok(())
}

/// Provenance string used in report outputs.
pub fn provenance_name(p: Provenance) -> &'static str {
    provenance_label(p)
}
