//! Region datasets, great-circle distance matrices and racetrack geometries.

use std::collections::HashSet;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Mean Earth radius used by the haversine distance, in kilometers.
pub const EARTH_RADIUS_KM: f64 = 6371.0;

/// Tolerance applied to share columns (sums and small negative rounding).
pub const SHARE_TOL: f64 = 1e-9;

pub const REGION_COLUMNS: [&str; 7] = ["id", "name", "latitude", "longitude", "lambda0", "phi", "w0"];

/// One spatial unit (a commune).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Region {
    pub id: String,
    pub name: String,
    pub latitude: f64,
    pub longitude: f64,
    /// Initial share of manufacturing workers.
    pub lambda0: f64,
    /// Share of agricultural (immobile) workers.
    pub phi: f64,
    /// Initial nominal-wage proxy (urbanization rate).
    pub w0: f64,
}

/// Dense symmetric `n x n` matrix of distances in kilometers.
#[derive(Debug, Clone, PartialEq)]
pub struct DistanceMatrix {
    n: usize,
    data: Vec<f64>,
}

impl DistanceMatrix {
    /// Builds a matrix from row-major entries, checking shape, symmetry,
    /// sign and the zero diagonal.
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let n = rows.len();
        let mut data = Vec::with_capacity(n * n);
        for (j, row) in rows.iter().enumerate() {
            if row.len() != n {
                return Err(Error::domain(format!(
                    "distance matrix row {j} has {} entries, expected {n}",
                    row.len()
                )));
            }
            data.extend_from_slice(row);
        }
        let m = DistanceMatrix { n, data };
        m.check()?;
        Ok(m)
    }

    fn check(&self) -> Result<()> {
        for j in 0..self.n {
            if self.get(j, j) != 0.0 {
                return Err(Error::domain(format!("distance matrix diagonal entry {j} is not zero")));
            }
            for k in 0..self.n {
                let d = self.get(j, k);
                if !d.is_finite() || d < 0.0 {
                    return Err(Error::domain(format!("distance ({j}, {k}) = {d} is not a finite non-negative length")));
                }
                if d != self.get(k, j) {
                    return Err(Error::domain(format!("distance matrix is not symmetric at ({j}, {k})")));
                }
            }
        }
        Ok(())
    }

    pub fn zeros(n: usize) -> Self {
        DistanceMatrix { n, data: vec![0.0; n * n] }
    }

    #[inline]
    pub fn n(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn get(&self, j: usize, k: usize) -> f64 {
        self.data[j * self.n + k]
    }

    #[inline]
    pub fn row(&self, j: usize) -> &[f64] {
        &self.data[j * self.n..(j + 1) * self.n]
    }

    pub fn max(&self) -> f64 {
        self.data.iter().copied().fold(0.0, f64::max)
    }

    fn set_pair(&mut self, j: usize, k: usize, d: f64) {
        self.data[j * self.n + k] = d;
        self.data[k * self.n + j] = d;
    }
}

/// Scale factors applied when share columns were renormalized at load.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ShareNormalization {
    /// Raw column sum of `lambda0`; each entry was divided by it.
    pub lambda_scale: f64,
    /// Raw column sum of `phi`.
    pub phi_scale: f64,
    pub warnings: Vec<String>,
}

impl Default for ShareNormalization {
    fn default() -> Self {
        ShareNormalization {
            lambda_scale: 1.0,
            phi_scale: 1.0,
            warnings: Vec::new(),
        }
    }
}

/// An ordered set of regions plus their distance matrix.
#[derive(Debug, Clone, PartialEq)]
pub struct Geography {
    regions: Vec<Region>,
    distances: DistanceMatrix,
    ring_spacing: Option<f64>,
    normalization: ShareNormalization,
}

impl Geography {
    /// Assembles a geography from already-validated parts. Shares must sum
    /// to one within [`SHARE_TOL`].
    pub fn new(regions: Vec<Region>, distances: DistanceMatrix) -> Result<Self> {
        if regions.is_empty() {
            return Err(Error::EmptyDataset);
        }
        if distances.n() != regions.len() {
            return Err(Error::domain(format!(
                "distance matrix is {0}x{0} but there are {1} regions",
                distances.n(),
                regions.len()
            )));
        }
        check_unique_ids(&regions)?;
        for (label, sum) in [
            ("lambda0", regions.iter().map(|r| r.lambda0).sum::<f64>()),
            ("phi", regions.iter().map(|r| r.phi).sum::<f64>()),
        ] {
            if (sum - 1.0).abs() > SHARE_TOL {
                return Err(Error::domain(format!("{label} column sums to {sum}, expected 1")));
            }
        }
        Ok(Geography {
            regions,
            distances,
            ring_spacing: None,
            normalization: ShareNormalization::default(),
        })
    }

    pub fn regions(&self) -> &[Region] {
        &self.regions
    }

    pub fn distances(&self) -> &DistanceMatrix {
        &self.distances
    }

    pub fn len(&self) -> usize {
        self.regions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.regions.is_empty()
    }

    /// Neighbor spacing when this geography is a racetrack ring.
    pub fn ring_spacing(&self) -> Option<f64> {
        self.ring_spacing
    }

    pub fn normalization(&self) -> &ShareNormalization {
        &self.normalization
    }

    pub fn lambda0(&self) -> Vec<f64> {
        self.regions.iter().map(|r| r.lambda0).collect()
    }

    pub fn phi(&self) -> Vec<f64> {
        self.regions.iter().map(|r| r.phi).collect()
    }

    pub fn w0(&self) -> Vec<f64> {
        self.regions.iter().map(|r| r.w0).collect()
    }

    pub fn ids(&self) -> Vec<&str> {
        self.regions.iter().map(|r| r.id.as_str()).collect()
    }

    /// Replaces the distance matrix (e.g. with a precomputed road matrix).
    pub fn with_distances(mut self, distances: DistanceMatrix) -> Result<Self> {
        if distances.n() != self.len() {
            return Err(Error::domain(format!(
                "distance matrix is {0}x{0} but there are {1} regions",
                distances.n(),
                self.len()
            )));
        }
        self.distances = distances;
        self.ring_spacing = None;
        Ok(self)
    }
}

fn check_unique_ids(regions: &[Region]) -> Result<()> {
    let mut seen = HashSet::new();
    for r in regions {
        if !seen.insert(r.id.as_str()) {
            return Err(Error::Validation {
                id: r.id.clone(),
                reason: "duplicate region id".into(),
            });
        }
    }
    Ok(())
}

/// Options for [`load_regions`].
#[derive(Debug, Clone)]
pub struct LoadOptions {
    /// Rescale `lambda0` and `phi` so each column sums to one.
    pub normalize: bool,
    /// Precomputed `n x n` distance CSV overriding haversine distances.
    pub distances: Option<PathBuf>,
}

impl Default for LoadOptions {
    fn default() -> Self {
        LoadOptions {
            normalize: true,
            distances: None,
        }
    }
}

/// Reads a region CSV (`id,name,latitude,longitude,lambda0,phi,w0`).
pub fn load_regions(path: impl AsRef<Path>, options: &LoadOptions) -> Result<Geography> {
    let path = path.as_ref();
    let file = std::fs::File::open(path).map_err(|e| Error::io(path, e))?;
    let regions = parse_regions(file, path)?;
    let mut geo = build_geography(regions, options.normalize)?;
    if let Some(dpath) = &options.distances {
        let matrix = load_distance_matrix(dpath)?;
        geo = geo.with_distances(matrix)?;
    }
    Ok(geo)
}

fn parse_regions<R: std::io::Read>(reader: R, path: &Path) -> Result<Vec<Region>> {
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new().trim(csv::Trim::All).from_reader(reader);
    let headers = rdr.headers().map_err(csv_err)?.clone();
    for column in REGION_COLUMNS {
        if !headers.iter().any(|h| h == column) {
            return Err(Error::MissingColumn { column: column.into() });
        }
    }
    let mut regions = Vec::new();
    for row in rdr.deserialize::<Region>() {
        regions.push(row.map_err(csv_err)?);
    }
    Ok(regions)
}

fn build_geography(mut regions: Vec<Region>, normalize: bool) -> Result<Geography> {
    if regions.is_empty() {
        return Err(Error::EmptyDataset);
    }
    check_unique_ids(&regions)?;

    for r in &mut regions {
        for (label, v) in [("lambda0", &mut r.lambda0), ("phi", &mut r.phi)] {
            if !v.is_finite() || *v < -SHARE_TOL || (!normalize && *v > 1.0 + SHARE_TOL) {
                return Err(Error::Validation {
                    id: r.id.clone(),
                    reason: format!("{label} = {v} is not a valid share"),
                });
            }
            *v = v.max(0.0);
        }
        if !(r.w0.is_finite() && r.w0 > 0.0) {
            return Err(Error::Validation {
                id: r.id.clone(),
                reason: format!("w0 = {} must be positive", r.w0),
            });
        }
    }

    let mut normalization = ShareNormalization::default();
    let lambda_sum = normalize_column(&mut regions, "lambda0", |r| &mut r.lambda0, normalize, &mut normalization)?;
    let phi_sum = normalize_column(&mut regions, "phi", |r| &mut r.phi, normalize, &mut normalization)?;
    normalization.lambda_scale = lambda_sum;
    normalization.phi_scale = phi_sum;

    let distances = distance_matrix(&regions)?;
    let mut geo = Geography::new(regions, distances)?;
    geo.normalization = normalization;
    Ok(geo)
}

fn normalize_column(
    regions: &mut [Region],
    label: &str,
    column: fn(&mut Region) -> &mut f64,
    normalize: bool,
    record: &mut ShareNormalization,
) -> Result<f64> {
    let sum: f64 = regions.iter_mut().map(|r| *column(r)).sum();
    if sum <= 0.0 {
        return Err(Error::Validation {
            id: regions[0].id.clone(),
            reason: format!("{label} column is identically zero"),
        });
    }
    if (sum - 1.0).abs() > SHARE_TOL {
        if !normalize {
            return Err(Error::Validation {
                id: regions[0].id.clone(),
                reason: format!("{label} column sums to {sum} and normalization is disabled"),
            });
        }
        record.warnings.push(format!("{label} column summed to {sum}; rescaled to 1"));
    }
    if normalize {
        for r in regions.iter_mut() {
            *column(r) /= sum;
        }
    }
    Ok(sum)
}

/// Writes regions back out in the CSV schema accepted by [`load_regions`].
pub fn write_regions(geo: &Geography, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut wtr = csv::Writer::from_path(path).map_err(csv_err)?;
    for r in geo.regions() {
        wtr.serialize(r).map_err(csv_err)?;
    }
    wtr.flush().map_err(|e| Error::io(path, e))
}

/// Reads a headerless `n x n` distance CSV.
pub fn load_distance_matrix(path: impl AsRef<Path>) -> Result<DistanceMatrix> {
    let path = path.as_ref();
    let csv_err = |source| Error::Csv {
        path: path.to_path_buf(),
        source,
    };
    let mut rdr = csv::ReaderBuilder::new()
        .has_headers(false)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(csv_err)?;
    let mut rows = Vec::new();
    for record in rdr.records() {
        let record = record.map_err(csv_err)?;
        let row = record
            .iter()
            .map(|s| {
                s.parse::<f64>()
                    .map_err(|_| Error::domain(format!("{}: `{s}` is not a number", path.display())))
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    DistanceMatrix::from_rows(rows)
}

/// Great-circle distance in kilometers between two (latitude, longitude)
/// points given in degrees.
pub fn haversine_km(lat1: f64, lon1: f64, lat2: f64, lon2: f64) -> f64 {
    let (p1, p2) = (lat1.to_radians(), lat2.to_radians());
    let dp = p2 - p1;
    let dl = (lon2 - lon1).to_radians();
    let h = (dp / 2.0).sin().powi(2) + p1.cos() * p2.cos() * (dl / 2.0).sin().powi(2);
    2.0 * EARTH_RADIUS_KM * h.sqrt().min(1.0).asin()
}

/// Pairwise haversine distances between regions.
pub fn distance_matrix(regions: &[Region]) -> Result<DistanceMatrix> {
    for r in regions {
        if !(-90.0..=90.0).contains(&r.latitude) {
            return Err(Error::Range {
                id: r.id.clone(),
                reason: format!("latitude {} outside [-90, 90]", r.latitude),
            });
        }
        if !(-180.0..=180.0).contains(&r.longitude) {
            return Err(Error::Range {
                id: r.id.clone(),
                reason: format!("longitude {} outside [-180, 180]", r.longitude),
            });
        }
    }
    let n = regions.len();
    let mut m = DistanceMatrix::zeros(n);
    for j in 0..n {
        for k in j + 1..n {
            let (a, b) = (&regions[j], &regions[k]);
            m.set_pair(j, k, haversine_km(a.latitude, a.longitude, b.latitude, b.longitude));
        }
    }
    Ok(m)
}

/// Number of ring steps between positions `j` and `k` on an `n`-ring.
#[inline]
pub fn ring_steps(j: usize, k: usize, n: usize) -> usize {
    let d = j.abs_diff(k);
    d.min(n - d)
}

/// `n` regions equally spaced on a circle with arc distances
/// `spacing * min(|j - k|, n - |j - k|)` and uniform shares.
pub fn racetrack(n: usize, spacing: f64) -> Result<Geography> {
    if n < 2 {
        return Err(Error::domain(format!("racetrack needs at least 2 regions, got {n}")));
    }
    if !(spacing.is_finite() && spacing > 0.0) {
        return Err(Error::domain(format!("racetrack spacing must be positive, got {spacing}")));
    }
    let width = (n - 1).to_string().len();
    let regions: Vec<Region> = (0..n)
        .map(|j| {
            // Plot-only coordinates on a one-degree circle around (0, 0).
            let theta = 2.0 * std::f64::consts::PI * j as f64 / n as f64;
            Region {
                id: format!("r{j:0width$}"),
                name: format!("Ring {j}"),
                latitude: theta.sin(),
                longitude: theta.cos(),
                lambda0: 1.0 / n as f64,
                phi: 1.0 / n as f64,
                w0: 1.0,
            }
        })
        .collect();
    let mut m = DistanceMatrix::zeros(n);
    for j in 0..n {
        for k in j + 1..n {
            m.set_pair(j, k, spacing * ring_steps(j, k, n) as f64);
        }
    }
    let mut geo = Geography::new(regions, m)?;
    geo.ring_spacing = Some(spacing);
    Ok(geo)
}
