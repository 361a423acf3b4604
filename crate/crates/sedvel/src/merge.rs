//! Background community-velocity-model client, the sediment-to-background
//! termination/merge rule, and gridded products (depth-slice rasters).

use std::io::Write as _;
use std::path::Path;

use rayon::prelude::*;

use crate::coeffs::CoefficientSet;
use crate::column::{Layer, LayeredProfile, Provenance};
use crate::error::{data, domain, Result};
use crate::geostat::{krige_dbr, Projection, SpatialField};
use crate::profile::{median_vs, ProfileParams};
use crate::util::fmt_sig;

/// Shear-wave velocity at which the sedimentary model hands over to the
/// background model (m/sec).
pub const VS_TERMINATION: f64 = 1000.0;

/// Plain-text raster: 6-line header (ncols, nrows, xll, yll, cellsize,
/// nodata) followed by row-major values, first row northernmost. No-data
/// cells are NaN in memory and the nodata token on disk. Values round-trip
/// bit-exactly (shortest f64 formatting).
#[derive(Clone, Debug, PartialEq)]
pub struct AsciiGrid {
    pub ncols: usize,
    pub nrows: usize,
    /// X (longitude) of the grid's lower-left corner.
    pub xll: f64,
    /// Y (latitude) of the grid's lower-left corner.
    pub yll: f64,
    pub cellsize: f64,
    pub nodata: f64,
    values: Vec<f64>,
}

impl AsciiGrid {
    pub fn new(ncols: usize, nrows: usize, xll: f64, yll: f64, cellsize: f64, nodata: f64) -> Result<Self> {
        if ncols == 0 || nrows == 0 || !(cellsize > 0.0) {
            return Err(domain(format!(
                "invalid grid shape {ncols}x{nrows} cellsize {cellsize}"
            )));
        }
        Ok(Self { ncols, nrows, xll, yll, cellsize, nodata, values: vec![f64::NAN; ncols * nrows] })
    }

    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.ncols + col]
    }

    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.ncols + col] = v;
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    /// Center coordinates of a cell; row 0 is the northernmost row.
    pub fn cell_center(&self, row: usize, col: usize) -> (f64, f64) {
        let x = self.xll + (col as f64 + 0.5) * self.cellsize;
        let y = self.yll + (self.nrows - 1 - row) as f64 * self.cellsize + 0.5 * self.cellsize;
        (x, y)
    }

    /// Cell containing the point, if inside the grid.
    pub fn index_of(&self, x: f64, y: f64) -> Option<(usize, usize)> {
        let col = ((x - self.xll) / self.cellsize).floor();
        let row_from_bottom = ((y - self.yll) / self.cellsize).floor();
        if col < 0.0 || row_from_bottom < 0.0 {
            return None;
        }
        let (col, rfb) = (col as usize, row_from_bottom as usize);
        if col >= self.ncols || rfb >= self.nrows {
            return None;
        }
        Some((self.nrows - 1 - rfb, col))
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        let text = std::fs::read_to_string(path.as_ref())
            .map_err(|e| data(format!("{}: {e}", path.as_ref().display())))?;
        let mut lines = text.lines();
        let mut header = |name: &str| -> Result<f64> {
            let line = lines
                .next()
                .ok_or_else(|| data(format!("grid header truncated before '{name}'")))?;
            let mut parts = line.split_whitespace();
            let key = parts.next().unwrap_or("");
            if key != name {
                return Err(data(format!("grid header: expected '{name}', got '{key}'")));
            }
            parts
                .next()
                .ok_or_else(|| data(format!("grid header '{name}' missing value")))?
                .parse::<f64>()
                .map_err(|_| data(format!("grid header '{name}' not numeric")))
        };
        let ncols = header("ncols")? as usize;
        let nrows = header("nrows")? as usize;
        let xll = header("xll")?;
        let yll = header("yll")?;
        let cellsize = header("cellsize")?;
        let nodata = header("nodata")?;
        let mut grid = Self::new(ncols, nrows, xll, yll, cellsize, nodata)?;
        let mut idx = 0usize;
        for line in lines {
            for token in line.split_whitespace() {
                if idx >= grid.values.len() {
                    return Err(data("grid has more values than ncols*nrows".to_string()));
                }
                let v: f64 = token
                    .parse()
                    .map_err(|_| data(format!("grid value '{token}' not numeric")))?;
                grid.values[idx] = if v == nodata { f64::NAN } else { v };
                idx += 1;
            }
        }
        if idx != grid.values.len() {
            return Err(data(format!(
                "grid has {idx} values, expected {}",
                grid.values.len()
            )));
        }
        Ok(grid)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
        writeln!(out, "ncols {}", self.ncols)?;
        writeln!(out, "nrows {}", self.nrows)?;
        writeln!(out, "xll {}", self.xll)?;
        writeln!(out, "yll {}", self.yll)?;
        writeln!(out, "cellsize {}", self.cellsize)?;
        writeln!(out, "nodata {}", self.nodata)?;
        for row in 0..self.nrows {
            let mut line = String::new();
            for col in 0..self.ncols {
                if col > 0 {
                    line.push(' ');
                }
                let v = self.get(row, col);
                if v.is_nan() {
                    line.push_str(&format!("{}", self.nodata));
                } else {
                    line.push_str(&format!("{v}"));
                }
            }
            writeln!(out, "{line}")?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Vs30 raster: an [`AsciiGrid`] whose non-missing cells must be positive.
#[derive(Clone, Debug)]
pub struct Vs30Grid {
    pub grid: AsciiGrid,
}

impl Vs30Grid {
    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let grid = AsciiGrid::read(path)?;
        Self::new(grid)
    }

    pub fn new(grid: AsciiGrid) -> Result<Self> {
        for &v in grid.values() {
            if !v.is_nan() && !(v > 0.0) {
                return Err(data(format!("vs30 grid has non-positive value {v}")));
            }
        }
        Ok(Self { grid })
    }
}

/// Regular lat/lon/depth lattice of shear-wave velocities.
#[derive(Clone, Debug)]
pub struct BackgroundModel {
    lats: Vec<f64>,
    lons: Vec<f64>,
    depths: Vec<f64>,
    /// vs indexed [lat][lon][depth].
    vs: Vec<f64>,
}

fn axis_values(mut v: Vec<f64>) -> Vec<f64> {
    v.sort_by(|a, b| a.partial_cmp(b).unwrap());
    v.dedup_by(|a, b| (*a - *b).abs() < 1e-9);
    v
}

impl BackgroundModel {
    /// Load from CSV `lat,lon,depth_m,vs_mps`. The rows must form a complete
    /// regular lattice: uniform lat/lon spacing, strictly increasing depth
    /// axis, one row per node.
    pub fn from_csv(path: impl AsRef<Path>) -> Result<Self> {
        let mut reader = csv::ReaderBuilder::new()
            .trim(csv::Trim::All)
            .from_path(path.as_ref())
            .map_err(|e| data(format!("{}: {e}", path.as_ref().display())))?;
        let expected = ["lat", "lon", "depth_m", "vs_mps"];
        if reader.headers()?.iter().collect::<Vec<_>>() != expected {
            return Err(data(format!(
                "background csv header must be {:?}",
                expected.join(",")
            )));
        }
        let mut rows = Vec::new();
        for record in reader.records() {
            let r = record?;
            let parse = |s: &str| -> Result<f64> {
                s.parse().map_err(|_| data(format!("background csv: bad number '{s}'")))
            };
            rows.push((parse(&r[0])?, parse(&r[1])?, parse(&r[2])?, parse(&r[3])?));
        }
        if rows.is_empty() {
            return Err(data("background csv is empty".to_string()));
        }
        let lats = axis_values(rows.iter().map(|r| r.0).collect());
        let lons = axis_values(rows.iter().map(|r| r.1).collect());
        let depths = axis_values(rows.iter().map(|r| r.2).collect());
        if lats.len() * lons.len() * depths.len() != rows.len() {
            return Err(data(format!(
                "background lattice incomplete: {} rows vs {}x{}x{} axes",
                rows.len(),
                lats.len(),
                lons.len(),
                depths.len()
            )));
        }
        for axis in [&lats, &lons] {
            if axis.len() > 2 {
                let step = axis[1] - axis[0];
                for w in axis.windows(2) {
                    if ((w[1] - w[0]) - step).abs() > 1e-6 * step.abs() {
                        return Err(data("background lat/lon spacing is not uniform".to_string()));
                    }
                }
            }
        }
        let index = |axis: &[f64], v: f64| -> Result<usize> {
            axis.iter()
                .position(|&a| (a - v).abs() < 1e-9)
                .ok_or_else(|| data(format!("background lattice value {v} not on axis")))
        };
        let (nlon, ndep) = (lons.len(), depths.len());
        let mut vs = vec![f64::NAN; lats.len() * nlon * ndep];
        for &(lat, lon, depth, v) in &rows {
            if !(v > 0.0) {
                return Err(data(format!("background vs must be positive, got {v}")));
            }
            let idx = (index(&lats, lat)? * nlon + index(&lons, lon)?) * ndep + index(&depths, depth)?;
            if !vs[idx].is_nan() {
                return Err(data("background csv has duplicate lattice rows".to_string()));
            }
            vs[idx] = v;
        }
        Ok(Self { lats, lons, depths, vs })
    }

    fn node(&self, i_lat: usize, i_lon: usize, i_dep: usize) -> f64 {
        self.vs[(i_lat * self.lons.len() + i_lon) * self.depths.len() + i_dep]
    }

    pub fn depths(&self) -> &[f64] {
        &self.depths
    }

    pub fn max_depth(&self) -> f64 {
        *self.depths.last().unwrap()
    }

    /// (lat, lon) extents of the lattice.
    pub fn extents(&self) -> ((f64, f64), (f64, f64)) {
        (
            (self.lats[0], *self.lats.last().unwrap()),
            (self.lons[0], *self.lons.last().unwrap()),
        )
    }

    /// Query the model: bilinear interpolation in lat/lon, nearest node in
    /// depth. The depth extent is [0, deepest node]; no lateral or downward
    /// extrapolation.
    pub fn query(&self, lat: f64, lon: f64, depth: f64) -> Result<f64> {
        let ((lat0, lat1), (lon0, lon1)) = self.extents();
        if lat < lat0 || lat > lat1 || lon < lon0 || lon > lon1 {
            return Err(domain(format!(
                "query ({lat}, {lon}) outside background extents [{lat0}, {lat1}] x [{lon0}, {lon1}]"
            )));
        }
        if depth < 0.0 || depth > self.max_depth() {
            return Err(domain(format!(
                "query depth {depth} outside background depth extent [0, {}]",
                self.max_depth()
            )));
        }
        // Nearest depth node.
        let i_dep = self
            .depths
            .iter()
            .enumerate()
            .min_by(|(_, a), (_, b)| {
                (**a - depth).abs().partial_cmp(&(**b - depth).abs()).unwrap()
            })
            .map(|(i, _)| i)
            .unwrap();
        let locate = |axis: &[f64], v: f64| -> (usize, f64) {
            if axis.len() == 1 {
                return (0, 0.0);
            }
            let i = axis.partition_point(|&a| a <= v).clamp(1, axis.len() - 1) - 1;
            let w = (v - axis[i]) / (axis[i + 1] - axis[i]);
            (i, w.clamp(0.0, 1.0))
        };
        let (i_lat, w_lat) = locate(&self.lats, lat);
        let (i_lon, w_lon) = locate(&self.lons, lon);
        let (i_lat1, i_lon1) = (
            (i_lat + 1).min(self.lats.len() - 1),
            (i_lon + 1).min(self.lons.len() - 1),
        );
        let v00 = self.node(i_lat, i_lon, i_dep);
        let v01 = self.node(i_lat, i_lon1, i_dep);
        let v10 = self.node(i_lat1, i_lon, i_dep);
        let v11 = self.node(i_lat1, i_lon1, i_dep);
        Ok(v00 * (1.0 - w_lat) * (1.0 - w_lon)
            + v01 * (1.0 - w_lat) * w_lon
            + v10 * w_lat * (1.0 - w_lon)
            + v11 * w_lat * w_lon)
    }

    /// Extract a layered column at (lat, lon) on the given layer boundaries,
    /// sampling the model at layer mid-depths.
    pub fn column(&self, lat: f64, lon: f64, boundaries: &[f64]) -> Result<LayeredProfile> {
        let mut layers = Vec::with_capacity(boundaries.len().saturating_sub(1));
        for w in boundaries.windows(2) {
            let mid = 0.5 * (w[0] + w[1]);
            layers.push(Layer {
                top_depth: w[0],
                thickness: w[1] - w[0],
                vs: self.query(lat, lon, mid)?,
            });
        }
        LayeredProfile::new(
            format!("background({lat:.4},{lon:.4})"),
            Some((lat, lon)),
            layers,
            Provenance::Background,
        )
    }
}

/// Depth at which the continuous median profile reaches `vs_limit`:
/// `z = z* + ((vs_limit / vs0)^n - 1) / k`; 0 when the surface velocity
/// already exceeds the limit.
pub fn z_vs_threshold(params: &ProfileParams, vs_limit: f64) -> Result<f64> {
    if !(vs_limit > 0.0) || !vs_limit.is_finite() {
        return Err(domain(format!("vs_limit must be positive, got {vs_limit}")));
    }
    if vs_limit < params.vs0 {
        return Ok(0.0);
    }
    Ok(crate::coeffs::Z_STAR + ((vs_limit / params.vs0).powf(params.n) - 1.0) / params.k)
}

/// Options for [`merge_profile_opts`].
#[derive(Clone, Copy, Debug)]
pub struct MergeOptions {
    /// Termination velocity (m/sec).
    pub vs_limit: f64,
    /// Optional rock-top depth (m); the handover also triggers at the first
    /// layer whose top reaches it.
    pub rock_depth: Option<f64>,
}

impl Default for MergeOptions {
    fn default() -> Self {
        Self { vs_limit: VS_TERMINATION, rock_depth: None }
    }
}

/// Merge a sedimentary column with the background model column.
///
/// Both profiles must share the layering over the sedimentary profile's
/// extent, with the background at least as deep. Above the first layer where
/// either column reaches the termination velocity, the per-layer maximum is
/// adopted (no negative impedance from the splice); from there the output is
/// the background floored at the termination velocity, until the background
/// itself reaches it, below which the background applies unchanged. The
/// background also wins below the sedimentary profile's maximum depth.
pub fn merge_profile(svm: &LayeredProfile, background: &LayeredProfile) -> Result<LayeredProfile> {
    merge_profile_opts(svm, background, &MergeOptions::default())
}

/// [`merge_profile`] with an explicit termination velocity and optional
/// rock-top depth.
pub fn merge_profile_opts(
    svm: &LayeredProfile,
    background: &LayeredProfile,
    options: &MergeOptions,
) -> Result<LayeredProfile> {
    if background.layers.len() < svm.layers.len() {
        return Err(domain(format!(
            "background column ({} layers) shallower than sedimentary column ({} layers)",
            background.layers.len(),
            svm.layers.len()
        )));
    }
    for (i, (s, b)) in svm.layers.iter().zip(&background.layers).enumerate() {
        if (s.top_depth - b.top_depth).abs() > 1e-6 || (s.thickness - b.thickness).abs() > 1e-6 {
            return Err(domain(format!(
                "incompatible discretizations at layer {i}: svm [{}, {}] vs background [{}, {}] \
                 (resample first)",
                s.top_depth,
                s.thickness,
                b.top_depth,
                b.thickness
            )));
        }
    }
    let limit = options.vs_limit;
    let mut terminated = false;
    let mut background_resumed = false;
    let mut layers = Vec::with_capacity(background.layers.len());
    for (i, b) in background.layers.iter().enumerate() {
        let vs = if i < svm.layers.len() {
            let s = svm.layers[i].vs;
            if !terminated {
                let rock_hit = options
                    .rock_depth
                    .is_some_and(|zr| b.top_depth + 1e-9 >= zr);
                if s.max(b.vs) >= limit || rock_hit {
                    terminated = true;
                }
            }
            if terminated {
                if background_resumed || b.vs >= limit {
                    background_resumed = true;
                    b.vs
                } else {
                    limit
                }
            } else {
                s.max(b.vs)
            }
        } else {
            // Below the sedimentary column the background wins, keeping the
            // termination floor until the background reaches the limit.
            if terminated && !background_resumed {
                if b.vs >= limit {
                    background_resumed = true;
                    b.vs
                } else {
                    limit
                }
            } else {
                b.vs
            }
        };
        layers.push(Layer { vs, ..*b });
    }
    LayeredProfile::new(svm.id.clone(), svm.location.or(background.location), layers, Provenance::Merged)
}

/// Which model a raster slice evaluates.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum GridModelKind {
    Stationary,
    SpatialConditioned,
    SpatialUnconditional,
    Background,
}

/// How spatial-model velocity uncertainty is propagated to rasters.
#[derive(Clone, Copy, Debug)]
pub enum UncertaintyMode {
    /// First-order delta method on ln vs with respect to the slope
    /// adjustment (analytic derivative).
    Delta,
    /// Monte Carlo oracle: sample the slope adjustment per cell.
    MonteCarlo { draws: usize, seed: u64 },
}

/// Inputs for [`grid_slice`].
pub struct GridSliceInputs<'a> {
    pub coeffs: &'a CoefficientSet,
    /// Training field (conditioned spatial rasters).
    pub field: Option<&'a SpatialField>,
    /// Projection used to place grid cells on the field's plane.
    pub projection: Option<&'a Projection>,
    pub background: Option<&'a BackgroundModel>,
    pub uncertainty: UncertaintyMode,
}

/// Optional lat/lon sub-window (lat_min, lat_max, lon_min, lon_max).
pub type Region = (f64, f64, f64, f64);

/// Evaluate a velocity depth slice over the Vs30 grid.
///
/// Returns the mean raster and, for the spatial kinds, the standard
/// deviation raster from the slope-adjustment uncertainty. No-data Vs30
/// cells propagate as no-data.
pub fn grid_slice(
    vs30: &Vs30Grid,
    region: Option<Region>,
    depth: f64,
    kind: GridModelKind,
    inputs: &GridSliceInputs,
) -> Result<(AsciiGrid, Option<AsciiGrid>)> {
    if !(depth >= 0.0) {
        return Err(domain(format!("depth must be >= 0, got {depth}")));
    }
    inputs.coeffs.validate()?;
    let src = &vs30.grid;
    // Resolve the output window.
    let (row0, row1, col0, col1) = match region {
        None => (0, src.nrows, 0, src.ncols),
        Some((lat_min, lat_max, lon_min, lon_max)) => {
            let a = src.index_of(lon_min, lat_min);
            let b = src.index_of(lon_max, lat_max);
            let (Some((row_bottom, col_left)), Some((row_top, col_right))) = (a, b) else {
                return Err(domain(format!(
                    "region ({lat_min}, {lat_max}, {lon_min}, {lon_max}) extends outside the vs30 grid"
                )));
            };
            (row_top, row_bottom + 1, col_left, col_right + 1)
        }
    };
    let (nrows, ncols) = (row1 - row0, col1 - col0);
    let mut mean = AsciiGrid::new(
        ncols,
        nrows,
        src.xll + col0 as f64 * src.cellsize,
        src.yll + (src.nrows - row1) as f64 * src.cellsize,
        src.cellsize,
        src.nodata,
    )?;
    let mut sd_grid = match kind {
        GridModelKind::SpatialConditioned | GridModelKind::SpatialUnconditional => Some(mean.clone()),
        _ => None,
    };

    // Slope-adjustment posterior per cell for the spatial kinds.
    let dbr_by_cell: Option<Vec<(f64, f64)>> = match kind {
        GridModelKind::SpatialUnconditional => {
            let omega = inputs
                .coeffs
                .omega
                .ok_or_else(|| data("spatial raster needs coefficients with a spatial block"))?;
            Some(vec![(0.0, omega); nrows * ncols])
        }
        GridModelKind::SpatialConditioned => {
            let field = inputs
                .field
                .ok_or_else(|| data("conditioned raster needs a spatial training field"))?;
            let projection = inputs
                .projection
                .ok_or_else(|| data("conditioned raster needs a projection"))?;
            let mut queries = Vec::with_capacity(nrows * ncols);
            for row in row0..row1 {
                for col in col0..col1 {
                    let (lon, lat) = src.cell_center(row, col);
                    queries.push(projection.to_plane(lat, lon));
                }
            }
            Some(krige_dbr(field, &queries)?)
        }
        _ => None,
    };

    // Cells are independent; compute rows in parallel, assemble in order.
    let rows: Vec<Vec<(f64, f64)>> = (row0..row1)
        .into_par_iter()
        .map(|row| {
            let mut out = Vec::with_capacity(ncols);
            for col in col0..col1 {
                let v30 = src.get(row, col);
                if v30.is_nan() {
                    out.push((f64::NAN, f64::NAN));
                    continue;
                }
                let cell = (row - row0) * ncols + (col - col0);
                let value = match kind {
                    GridModelKind::Background => {
                        let (lon, lat) = src.cell_center(row, col);
                        match inputs.background {
                            Some(bg) => bg.query(lat, lon, depth).map(|v| (v, f64::NAN)),
                            None => Err(data("background raster needs a background model")),
                        }
                    }
                    GridModelKind::Stationary => ProfileParams::from_vs30(v30, inputs.coeffs, 0.0)
                        .and_then(|p| median_vs(depth, &p))
                        .map(|v| (v, f64::NAN)),
                    GridModelKind::SpatialConditioned | GridModelKind::SpatialUnconditional => {
                        let (dbr_mean, dbr_sd) = dbr_by_cell.as_ref().unwrap()[cell];
                        cell_mean_sd(v30, inputs.coeffs, depth, dbr_mean, dbr_sd, &inputs.uncertainty, cell)
                    }
                };
                match value {
                    Ok(pair) => out.push(pair),
                    Err(e) => return Err(e),
                }
            }
            Ok(out)
        })
        .collect::<Result<_>>()?;

    for (r, row_vals) in rows.into_iter().enumerate() {
        for (c, (m, s)) in row_vals.into_iter().enumerate() {
            mean.set(r, c, m);
            if let Some(g) = sd_grid.as_mut() {
                g.set(r, c, s);
            }
        }
    }
    Ok((mean, sd_grid))
}

/// Mean and propagated sd of vs at depth for one cell.
fn cell_mean_sd(
    vs30: f64,
    coeffs: &CoefficientSet,
    depth: f64,
    dbr_mean: f64,
    dbr_sd: f64,
    mode: &UncertaintyMode,
    cell: usize,
) -> Result<(f64, f64)> {
    let params = ProfileParams::from_vs30(vs30, coeffs, dbr_mean)?;
    let mean = median_vs(depth, &params)?;
    let sd = match *mode {
        UncertaintyMode::Delta => mean * dbr_sd * params.dln_vs_ddbr(depth)?.abs(),
        UncertaintyMode::MonteCarlo { draws, seed } => {
            use rand::Rng;
            use rand_distr::StandardNormal;
            let mut rng = crate::rng::stream_rng(seed, "grid-mc", cell as u64);
            let mut values = Vec::with_capacity(draws);
            for _ in 0..draws {
                let z: f64 = rng.sample(StandardNormal);
                let p = ProfileParams::from_vs30(vs30, coeffs, dbr_mean + dbr_sd * z)?;
                values.push(median_vs(depth, &p)?);
            }
            crate::util::sample_sd(&values)
        }
    };
    Ok((mean, sd))
}

/// Write the manifest of raster outputs produced by one grid command.
pub fn write_manifest(path: impl AsRef<Path>, entries: &[String]) -> Result<()> {
    let mut out = std::io::BufWriter::new(std::fs::File::create(path.as_ref())?);
    for e in entries {
        writeln!(out, "{e}")?;
    }
    out.flush()?;
    Ok(())
}

/// Raster cell formatting used by report emitters.
pub fn format_cell(v: f64) -> String {
    fmt_sig(v, 6)
}
