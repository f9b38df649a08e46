//! Scattered point sets on the unit sphere S²: generation, file loading,
//! mesh metrics and nearest-neighbour queries.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::path::Path;
use std::sync::OnceLock;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Points closer than this (geodesically) are treated as duplicates.
pub const MIN_SEPARATION: f64 = 1e-10;

/// Tolerance on |‖x‖ − 1| accepted when reading point files.
pub const FILE_NORM_TOLERANCE: f64 = 1e-6;

/// A point on the unit sphere in Cartesian coordinates.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SpherePoint {
    pub x: f64,
    pub y: f64,
    pub z: f64,
}

impl SpherePoint {
    /// Projects a nonzero vector onto the sphere.
    pub fn from_cartesian(x: f64, y: f64, z: f64) -> Result<Self> {
        let r = (x * x + y * y + z * z).sqrt();
        if !r.is_finite() || r == 0.0 {
            return Err(Error::InvalidInput(format!(
                "cannot normalise vector ({x}, {y}, {z})"
            )));
        }
        Ok(Self {
            x: x / r,
            y: y / r,
            z: z / r,
        })
    }

    /// Latitude and longitude in radians.
    pub fn from_lat_lon(lat: f64, lon: f64) -> Self {
        let c = lat.cos();
        Self {
            x: c * lon.cos(),
            y: c * lon.sin(),
            z: lat.sin(),
        }
    }

    pub fn north() -> Self {
        Self { x: 0.0, y: 0.0, z: 1.0 }
    }

    pub fn south() -> Self {
        Self { x: 0.0, y: 0.0, z: -1.0 }
    }

    #[inline]
    pub fn dot(&self, other: &SpherePoint) -> f64 {
        self.x * other.x + self.y * other.y + self.z * other.z
    }

    /// Half the squared chord length, i.e. `1 − x·y` computed without
    /// cancellation for nearby points.
    #[inline]
    pub fn half_chord_sq(&self, other: &SpherePoint) -> f64 {
        let dx = self.x - other.x;
        let dy = self.y - other.y;
        let dz = self.z - other.z;
        0.5 * (dx * dx + dy * dy + dz * dz)
    }

    pub fn as_array(&self) -> [f64; 3] {
        [self.x, self.y, self.z]
    }

    pub fn norm(&self) -> f64 {
        (self.x * self.x + self.y * self.y + self.z * self.z).sqrt()
    }

    /// Colatitude θ ∈ [0, π] and longitude φ ∈ (−π, π].
    pub fn colat_lon(&self) -> (f64, f64) {
        let rho = (self.x * self.x + self.y * self.y).sqrt();
        (rho.atan2(self.z), self.y.atan2(self.x))
    }
}

/// Great-circle distance `arccos(a·b)` with the dot product clamped to [−1, 1].
pub fn geodesic_distance(a: &SpherePoint, b: &SpherePoint) -> f64 {
    a.dot(b).clamp(-1.0, 1.0).acos()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Fibonacci,
    Hammersley,
    MinEnergy,
    File,
}

impl Family {
    pub fn as_str(&self) -> &'static str {
        match self {
            Family::Fibonacci => "fibonacci",
            Family::Hammersley => "hammersley",
            Family::MinEnergy => "min_energy",
            Family::File => "file",
        }
    }
}

impl std::str::FromStr for Family {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "fibonacci" => Ok(Family::Fibonacci),
            "hammersley" => Ok(Family::Hammersley),
            "min_energy" | "minenergy" | "energy" => Ok(Family::MinEnergy),
            "file" => Ok(Family::File),
            other => Err(Error::InvalidInput(format!("unknown point family '{other}'"))),
        }
    }
}

/// Fill distance `h`, separation radius `q` and mesh ratio `rho = h / q`,
/// all in radians (the ratio is unitless).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MeshMetrics {
    pub h: f64,
    pub q: f64,
    pub rho: f64,
}

/// An ordered set of distinct points on S². The index of a point is its
/// row/column index in every matrix built from the set.
#[derive(Debug, Clone)]
pub struct PointSet {
    points: Vec<SpherePoint>,
    family: Family,
    metrics: OnceLock<MeshMetrics>,
}

impl PointSet {
    /// Wraps `points`, rejecting pairs closer than [`MIN_SEPARATION`].
    pub fn new(points: Vec<SpherePoint>, family: Family) -> Result<Self> {
        if points.is_empty() {
            return Err(Error::InvalidInput("point set is empty".into()));
        }
        if let Some((i, j)) = find_duplicate(&points) {
            return Err(Error::CoincidentPoints(i, j));
        }
        Ok(Self {
            points,
            family,
            metrics: OnceLock::new(),
        })
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }

    pub fn points(&self) -> &[SpherePoint] {
        &self.points
    }

    pub fn point(&self, i: usize) -> &SpherePoint {
        &self.points[i]
    }

    pub fn family(&self) -> Family {
        self.family
    }

    /// Mesh metrics, computed on first use and cached.
    pub fn metrics(&self) -> Result<MeshMetrics> {
        if let Some(m) = self.metrics.get() {
            return Ok(*m);
        }
        let m = mesh_metrics(self)?;
        Ok(*self.metrics.get_or_init(|| m))
    }

    /// Applies a rotation (row-major 3×3) to every point, keeping indices.
    pub fn rotated(&self, rot: &[[f64; 3]; 3]) -> Result<Self> {
        let pts = self
            .points
            .iter()
            .map(|p| {
                let v = p.as_array();
                let r: Vec<f64> = rot
                    .iter()
                    .map(|row| row[0] * v[0] + row[1] * v[1] + row[2] * v[2])
                    .collect();
                SpherePoint::from_cartesian(r[0], r[1], r[2])
            })
            .collect::<Result<Vec<_>>>()?;
        PointSet::new(pts, self.family)
    }
}

fn find_duplicate(points: &[SpherePoint]) -> Option<(usize, usize)> {
    let n = points.len();
    if n < 2 {
        return None;
    }
    // 1 − cos(MIN_SEPARATION) ≈ MIN_SEPARATION² / 2
    let threshold = 0.5 * MIN_SEPARATION * MIN_SEPARATION;
    let grid = PointGrid::new(points);
    (0..n).into_par_iter().find_map_any(|i| {
        let (j, s) = grid.nearest_excluding(&points[i], Some(i))?;
        (s <= threshold).then(|| (i.min(j), i.max(j)))
    })
}

/// Symmetric spherical Fibonacci lattice with `n` (odd, ≥ 3) points.
pub fn generate_fibonacci(n: usize) -> Result<PointSet> {
    if n < 3 || n % 2 == 0 {
        return Err(Error::InvalidInput(format!(
            "Fibonacci lattices are defined for odd N >= 3, got {n}"
        )));
    }
    PointSet::new(fibonacci_points(n), Family::Fibonacci)
}

fn fibonacci_points(n: usize) -> Vec<SpherePoint> {
    let inv_phi = (5f64.sqrt() - 1.0) / 2.0;
    let half = ((n - 1) / 2) as i64;
    (-half..=half)
        .map(|i| {
            let lat = (2.0 * i as f64 / n as f64).asin();
            let lon = (2.0 * PI * (i as f64 * inv_phi)).rem_euclid(2.0 * PI);
            SpherePoint::from_lat_lon(lat, lon)
        })
        .collect()
}

/// Base-2 van der Corput radical inverse.
pub fn van_der_corput(mut i: u64) -> f64 {
    let mut inv = 0.0;
    let mut f = 0.5;
    while i > 0 {
        if i & 1 == 1 {
            inv += f;
        }
        i >>= 1;
        f *= 0.5;
    }
    inv
}

/// Area-uniform Hammersley set: `z = 1 − 2(i + 1/2)/N`, longitude `2π·vdc₂(i)`.
pub fn generate_hammersley(n: usize) -> Result<PointSet> {
    if n < 2 {
        return Err(Error::InvalidInput(format!("Hammersley needs N >= 2, got {n}")));
    }
    let pts = (0..n)
        .map(|i| {
            let z = 1.0 - 2.0 * (i as f64 + 0.5) / n as f64;
            let r = (1.0 - z * z).max(0.0).sqrt();
            let lon = 2.0 * PI * van_der_corput(i as u64);
            SpherePoint {
                x: r * lon.cos(),
                y: r * lon.sin(),
                z,
            }
        })
        .collect();
    PointSet::new(pts, Family::Hammersley)
}

/// Riesz s = 2 energy `Σ_{j≠k} |x_j − x_k|⁻²` (each pair counted twice).
pub fn riesz_energy(points: &[SpherePoint]) -> f64 {
    points
        .par_iter()
        .enumerate()
        .map(|(j, p)| {
            points
                .iter()
                .enumerate()
                .filter(|&(k, _)| k != j)
                .map(|(_, o)| 1.0 / (2.0 * p.half_chord_sq(o)))
                .sum::<f64>()
        })
        .sum()
}

fn riesz_tangent_gradient(points: &[SpherePoint]) -> Vec<[f64; 3]> {
    points
        .par_iter()
        .enumerate()
        .map(|(j, p)| {
            let mut g = [0.0; 3];
            for (k, o) in points.iter().enumerate() {
                if k == j {
                    continue;
                }
                let d = [p.x - o.x, p.y - o.y, p.z - o.z];
                let r2 = d[0] * d[0] + d[1] * d[1] + d[2] * d[2];
                let w = -4.0 / (r2 * r2);
                for a in 0..3 {
                    g[a] += w * d[a];
                }
            }
            let radial = g[0] * p.x + g[1] * p.y + g[2] * p.z;
            [g[0] - radial * p.x, g[1] - radial * p.y, g[2] - radial * p.z]
        })
        .collect()
}

/// Approximate minimum Riesz-energy configuration by projected gradient
/// descent with backtracking. Starts from a Fibonacci lattice (odd N) or a
/// Hammersley set (even N). Energy never increases across accepted steps.
pub fn generate_min_energy(n: usize, iterations: usize) -> Result<PointSet> {
    if n < 4 {
        return Err(Error::InvalidInput(format!("min-energy needs N >= 4, got {n}")));
    }
    let init = if n % 2 == 1 {
        generate_fibonacci(n)?
    } else {
        generate_hammersley(n)?
    };
    let mut pts = init.points().to_vec();
    let mut energy = riesz_energy(&pts);
    let mut step = 0.1 * (4.0 * PI / n as f64).sqrt();
    let min_step = 1e-14;

    for _ in 0..iterations {
        let grad = riesz_tangent_gradient(&pts);
        let gmax = grad
            .iter()
            .map(|g| (g[0] * g[0] + g[1] * g[1] + g[2] * g[2]).sqrt())
            .fold(0.0, f64::max);
        if gmax == 0.0 || !gmax.is_finite() {
            break;
        }
        let mut accepted = false;
        while step > min_step {
            let trial: Vec<SpherePoint> = pts
                .iter()
                .zip(&grad)
                .map(|(p, g)| {
                    let s = step / gmax;
                    let v = [p.x - s * g[0], p.y - s * g[1], p.z - s * g[2]];
                    let r = (v[0] * v[0] + v[1] * v[1] + v[2] * v[2]).sqrt();
                    SpherePoint {
                        x: v[0] / r,
                        y: v[1] / r,
                        z: v[2] / r,
                    }
                })
                .collect();
            let e = riesz_energy(&trial);
            if e < energy {
                pts = trial;
                energy = e;
                accepted = true;
                step *= 1.5;
                break;
            }
            step *= 0.5;
        }
        if !accepted {
            break;
        }
    }
    PointSet::new(pts, Family::MinEnergy)
}

/// Iteration budget used when a min-energy set is requested by family name.
pub const DEFAULT_MIN_ENERGY_ITERATIONS: usize = 200;

/// Generated point set of the given family. File-based sets have no
/// generator and are rejected.
pub fn generate_family(family: Family, n: usize) -> Result<PointSet> {
    match family {
        Family::Fibonacci => generate_fibonacci(n),
        Family::Hammersley => generate_hammersley(n),
        Family::MinEnergy => generate_min_energy(n, DEFAULT_MIN_ENERGY_ITERATIONS),
        Family::File => Err(Error::InvalidInput(
            "file point sets are loaded with a path, not generated".into(),
        )),
    }
}

/// Reads a whitespace-separated three-column Cartesian point file.
pub fn load_pointset(path: impl AsRef<Path>) -> Result<PointSet> {
    let text = std::fs::read_to_string(path.as_ref())?;
    parse_pointset(&text)
}

/// Parses point-file text. Lines starting with `#` and blank lines are skipped.
pub fn parse_pointset(text: &str) -> Result<PointSet> {
    let mut pts = Vec::new();
    for (lineno, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let line_no = lineno + 1;
        let vals = line
            .split_whitespace()
            .map(|tok| {
                tok.parse::<f64>().map_err(|e| Error::Parse {
                    line: line_no,
                    message: format!("'{tok}': {e}"),
                })
            })
            .collect::<Result<Vec<f64>>>()?;
        if vals.len() != 3 {
            return Err(Error::Parse {
                line: line_no,
                message: format!("expected 3 columns, found {}", vals.len()),
            });
        }
        let norm = (vals[0] * vals[0] + vals[1] * vals[1] + vals[2] * vals[2]).sqrt();
        if (norm - 1.0).abs() > FILE_NORM_TOLERANCE {
            return Err(Error::Validation {
                line: line_no,
                message: format!("point norm {norm} is not 1"),
            });
        }
        pts.push(SpherePoint::from_cartesian(vals[0], vals[1], vals[2])?);
    }
    PointSet::new(pts, Family::File)
}

/// Writes points as a three-column text file readable by [`load_pointset`].
pub fn format_pointset(x: &PointSet) -> String {
    let mut out = String::with_capacity(x.len() * 64);
    for p in x.points() {
        out.push_str(&format!("{:.17e} {:.17e} {:.17e}\n", p.x, p.y, p.z));
    }
    out
}

/// Exact separation radius: half the minimum pairwise geodesic distance.
pub fn separation_radius(x: &PointSet) -> f64 {
    let pts = x.points();
    let min = (0..pts.len())
        .into_par_iter()
        .map(|j| {
            pts[j + 1..]
                .iter()
                .map(|o| geodesic_distance(&pts[j], o))
                .fold(f64::INFINITY, f64::min)
        })
        .reduce(|| f64::INFINITY, f64::min);
    0.5 * min
}

/// Number of Fibonacci probe points used for the fill-distance estimate.
pub fn probe_size(n: usize) -> usize {
    let m = (100 * n).max(100_000);
    m | 1
}

/// Separation radius (exact) and fill distance (estimated from a dense
/// Fibonacci probe set, hence a lower bound converging from below).
pub fn mesh_metrics(x: &PointSet) -> Result<MeshMetrics> {
    if x.len() < 2 {
        return Err(Error::InvalidInput("mesh metrics need N >= 2".into()));
    }
    let q = separation_radius(x);
    let probes = fibonacci_points(probe_size(x.len()));
    let grid = PointGrid::new(x.points());
    let h = probes
        .par_iter()
        .map(|p| {
            let (j, _) = grid
                .nearest_excluding(p, None)
                .expect("point set is nonempty");
            geodesic_distance(p, &x.points()[j])
        })
        .reduce(|| 0.0, f64::max);
    Ok(MeshMetrics { h, q, rho: h / q })
}

/// The `n` points nearest to `x_j` (including `j`), sorted by geodesic
/// distance with ties broken by index.
pub fn nearest_neighbors(x: &PointSet, j: usize, n: usize) -> Result<Vec<usize>> {
    let big_n = x.len();
    if j >= big_n {
        return Err(Error::InvalidInput(format!("index {j} out of range for N = {big_n}")));
    }
    if n == 0 || n > big_n {
        return Err(Error::InvalidInput(format!(
            "neighbour count {n} must lie in 1..={big_n}"
        )));
    }
    let c = x.point(j);
    let mut keyed: Vec<(f64, usize)> = x
        .points()
        .iter()
        .enumerate()
        .map(|(k, p)| (if k == j { 0.0 } else { geodesic_distance(c, p) }, k))
        .collect();
    let cmp = |a: &(f64, usize), b: &(f64, usize)| a.0.total_cmp(&b.0).then(a.1.cmp(&b.1));
    if n < big_n {
        keyed.select_nth_unstable_by(n - 1, cmp);
        keyed.truncate(n);
    }
    keyed.sort_unstable_by(cmp);
    Ok(keyed.into_iter().map(|(_, k)| k).collect())
}

/// Uniform 3D bucket grid over the points for nearest-point queries.
struct PointGrid<'a> {
    points: &'a [SpherePoint],
    cell: f64,
    buckets: HashMap<(i32, i32, i32), Vec<usize>>,
}

impl<'a> PointGrid<'a> {
    fn new(points: &'a [SpherePoint]) -> Self {
        // about one point per cell on the surface
        let cell = (4.0 * PI / points.len().max(1) as f64).sqrt().clamp(1e-3, 2.0);
        let mut buckets: HashMap<(i32, i32, i32), Vec<usize>> = HashMap::new();
        for (i, p) in points.iter().enumerate() {
            buckets.entry(Self::key(p, cell)).or_default().push(i);
        }
        Self { points, cell, buckets }
    }

    fn key(p: &SpherePoint, cell: f64) -> (i32, i32, i32) {
        (
            (p.x / cell).floor() as i32,
            (p.y / cell).floor() as i32,
            (p.z / cell).floor() as i32,
        )
    }

    /// Nearest point to `p` by chord length, optionally skipping one index.
    /// Returns the index and half the squared chord.
    fn nearest_excluding(&self, p: &SpherePoint, skip: Option<usize>) -> Option<(usize, f64)> {
        let (cx, cy, cz) = Self::key(p, self.cell);
        let max_ring = (2.0 / self.cell).ceil() as i32 + 2;
        let mut best: Option<(usize, f64)> = None;
        for ring in 0..=max_ring {
            for dx in -ring..=ring {
                for dy in -ring..=ring {
                    for dz in -ring..=ring {
                        if dx.abs().max(dy.abs()).max(dz.abs()) != ring {
                            continue;
                        }
                        let Some(idx) = self.buckets.get(&(cx + dx, cy + dy, cz + dz)) else {
                            continue;
                        };
                        for &i in idx {
                            if Some(i) == skip {
                                continue;
                            }
                            let s = p.half_chord_sq(&self.points[i]);
                            if best.map_or(true, |(bi, bs)| s < bs || (s == bs && i < bi)) {
                                best = Some((i, s));
                            }
                        }
                    }
                }
            }
            if let Some((_, s)) = best {
                // every unvisited cell is at least `ring * cell` away
                let chord = (2.0 * s).sqrt();
                if chord <= ring as f64 * self.cell {
                    break;
                }
            }
        }
        best
    }
}
