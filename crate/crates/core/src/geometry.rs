//! Emitter configurations.
//!
//! All lengths are dimensionless, measured in units of `1/k_L`, so the
//! separation `ξ` between two atoms is just their Euclidean distance and the
//! resonant wavelength is `λ = 2π`.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal, Uniform};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Distance below which the free-space kernels are considered unreliable.
pub const KERNEL_VALIDITY_XI: f64 = 0.5;

pub type Vec3 = [f64; 3];

/// Provenance of a generated ensemble, written to the JSON sidecar on export.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GeneratorInfo {
    pub label: String,
    pub seed: Option<u64>,
    pub params: serde_json::Value,
}

/// Positions of `N` point emitters.
///
/// Construction rejects coincident atoms and non-finite coordinates, so every
/// ensemble handed to a kernel has strictly positive pairwise separations.
#[derive(Debug, Clone, PartialEq)]
pub struct AtomEnsemble {
    positions: Vec<Vec3>,
    info: GeneratorInfo,
}

impl AtomEnsemble {
    pub fn new(positions: Vec<Vec3>, label: impl Into<String>) -> Result<Self> {
        Self::with_info(
            positions,
            GeneratorInfo {
                label: label.into(),
                seed: None,
                params: serde_json::Value::Null,
            },
        )
    }

    pub fn with_info(positions: Vec<Vec3>, info: GeneratorInfo) -> Result<Self> {
        if let Some(i) = positions.iter().position(|p| p.iter().any(|c| !c.is_finite())) {
            return Err(Error::invalid(format!("atom {i} has a non-finite coordinate")));
        }
        if let Some((i, j, d)) = closest_pair(&positions) {
            if d <= 0.0 {
                return Err(Error::invalid(format!("atoms {i} and {j} coincide")));
            }
        }
        Ok(Self { positions, info })
    }

    /// Empty ensemble (used for the `T = 1` identities).
    pub fn empty() -> Self {
        Self {
            positions: Vec::new(),
            info: GeneratorInfo {
                label: "empty".into(),
                seed: None,
                params: serde_json::Value::Null,
            },
        }
    }

    pub fn n(&self) -> usize {
        self.positions.len()
    }

    pub fn is_empty(&self) -> bool {
        self.positions.is_empty()
    }

    pub fn positions(&self) -> &[Vec3] {
        &self.positions
    }

    pub fn label(&self) -> &str {
        &self.info.label
    }

    pub fn info(&self) -> &GeneratorInfo {
        &self.info
    }

    /// Copy translated so that the centroid sits at the origin.
    pub fn centered(&self) -> Self {
        if self.positions.is_empty() {
            return self.clone();
        }
        let n = self.positions.len() as f64;
        let mut c = [0.0; 3];
        for p in &self.positions {
            for k in 0..3 {
                c[k] += p[k] / n;
            }
        }
        let positions = self
            .positions
            .iter()
            .map(|p| [p[0] - c[0], p[1] - c[1], p[2] - c[2]])
            .collect();
        Self {
            positions,
            info: self.info.clone(),
        }
    }

    /// Write `idx,x,y,z` CSV plus a JSON sidecar (`<stem>.json`) with the generator info.
    pub fn export(&self, csv_path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(csv_path)?;
        w.write_record(["idx", "x", "y", "z"])?;
        for (i, p) in self.positions.iter().enumerate() {
            w.write_record([
                i.to_string(),
                fmt_f64(p[0]),
                fmt_f64(p[1]),
                fmt_f64(p[2]),
            ])?;
        }
        w.flush()?;
        let sidecar = csv_path.with_extension("json");
        let mut f = BufWriter::new(File::create(sidecar)?);
        serde_json::to_writer_pretty(&mut f, &self.info)?;
        f.write_all(b"\n")?;
        Ok(())
    }

    /// Inverse of [`AtomEnsemble::export`]. The sidecar is optional.
    pub fn import(csv_path: &Path) -> Result<Self> {
        let mut r = csv::Reader::from_path(csv_path)?;
        let header = r.headers()?.clone();
        if header.iter().collect::<Vec<_>>() != ["idx", "x", "y", "z"] {
            return Err(Error::invalid(format!(
                "{}: expected header idx,x,y,z",
                csv_path.display()
            )));
        }
        let mut positions = Vec::new();
        for (row, rec) in r.records().enumerate() {
            let rec = rec?;
            let idx: usize = parse_field(&rec, 0, row)?;
            if idx != row {
                return Err(Error::invalid(format!("row {row}: idx {idx} out of order")));
            }
            positions.push([
                parse_field(&rec, 1, row)?,
                parse_field(&rec, 2, row)?,
                parse_field(&rec, 3, row)?,
            ]);
        }
        let sidecar = csv_path.with_extension("json");
        let info = if sidecar.exists() {
            let mut s = String::new();
            BufReader::new(File::open(sidecar)?).read_to_string(&mut s)?;
            serde_json::from_str(&s)?
        } else {
            GeneratorInfo {
                label: csv_path.display().to_string(),
                seed: None,
                params: serde_json::Value::Null,
            }
        };
        Self::with_info(positions, info)
    }
}

fn parse_field<T: std::str::FromStr>(rec: &csv::StringRecord, col: usize, row: usize) -> Result<T> {
    rec.get(col)
        .and_then(|s| s.trim().parse().ok())
        .ok_or_else(|| Error::invalid(format!("row {row}: bad value in column {col}")))
}

/// Shortest round-trip decimal representation.
pub(crate) fn fmt_f64(x: f64) -> String {
    format!("{x:?}")
}

/// Dipole orientation of the emitters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PolarizationSpec {
    Linear([f64; 3]),
    CircularSigmaPlus,
    CircularSigmaMinus,
    /// Both σ± transitions of a V-type emitter (used by the lattice band code).
    VTypePair,
}

impl PolarizationSpec {
    pub fn linear(p: [f64; 3]) -> Result<Self> {
        let s = Self::Linear(p);
        s.validate()?;
        Ok(s)
    }

    pub fn validate(&self) -> Result<()> {
        if let Self::Linear(p) = self {
            let norm = (p[0] * p[0] + p[1] * p[1] + p[2] * p[2]).sqrt();
            if norm == 0.0 || !norm.is_finite() {
                return Err(Error::invalid("zero polarization vector"));
            }
            if (norm - 1.0).abs() > 1e-12 {
                return Err(Error::invalid(format!(
                    "linear polarization must have unit norm, got {norm}"
                )));
            }
        }
        Ok(())
    }

    /// Complex unit vector of a single-transition polarization.
    pub fn vector(&self) -> Option<[Complex64; 3]> {
        match *self {
            Self::Linear(p) => Some(p.map(|c| Complex64::new(c, 0.0))),
            Self::CircularSigmaPlus => Some(sigma_plus()),
            Self::CircularSigmaMinus => Some(sigma_minus()),
            Self::VTypePair => None,
        }
    }
}

/// Spherical basis vector `ê₊ = -(x̂ + iŷ)/√2`.
pub fn sigma_plus() -> [Complex64; 3] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [Complex64::new(-s, 0.0), Complex64::new(0.0, -s), Complex64::new(0.0, 0.0)]
}

/// Spherical basis vector `ê₋ = (x̂ - iŷ)/√2`.
pub fn sigma_minus() -> [Complex64; 3] {
    let s = std::f64::consts::FRAC_1_SQRT_2;
    [Complex64::new(s, 0.0), Complex64::new(0.0, -s), Complex64::new(0.0, 0.0)]
}

fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

/// `n` atoms with i.i.d. normal coordinates of rms widths `sigma`.
pub fn make_gaussian_cloud(n: usize, sigma: Vec3, seed: u64) -> Result<AtomEnsemble> {
    if n == 0 {
        return Err(Error::invalid("cloud needs at least one atom"));
    }
    if sigma.iter().any(|s| !(*s >= 0.0) || !s.is_finite()) {
        return Err(Error::invalid(format!("rms widths must be finite and >= 0, got {sigma:?}")));
    }
    let mut rng = rng(seed);
    let std_normal = Normal::new(0.0, 1.0).expect("unit normal");
    let positions = (0..n)
        .map(|_| {
            let mut p = [0.0; 3];
            for k in 0..3 {
                p[k] = sigma[k] * std_normal.sample(&mut rng);
            }
            p
        })
        .collect();
    AtomEnsemble::with_info(
        positions,
        GeneratorInfo {
            label: "gaussian_cloud".into(),
            seed: Some(seed),
            params: serde_json::json!({ "n": n, "sigma": sigma }),
        },
    )
}

/// Uniform filling of a cylinder of given radius and length along `z`,
/// centred on the origin. `length = 0` gives a disk in the `z = 0` plane.
pub fn make_uniform_cylinder(n: usize, radius: f64, length: f64, seed: u64) -> Result<AtomEnsemble> {
    if !(radius > 0.0) || !radius.is_finite() {
        return Err(Error::invalid(format!("cylinder radius must be > 0, got {radius}")));
    }
    if !(length >= 0.0) || !length.is_finite() {
        return Err(Error::invalid(format!("cylinder length must be >= 0, got {length}")));
    }
    let mut rng = rng(seed);
    let unit = Uniform::new(0.0, 1.0).expect("unit interval");
    let positions = (0..n)
        .map(|_| {
            let u: f64 = unit.sample(&mut rng);
            let r = radius * u.sqrt();
            let phi = 2.0 * PI * unit.sample(&mut rng);
            let z = if length > 0.0 {
                length * (unit.sample(&mut rng) - 0.5)
            } else {
                0.0
            };
            [r * phi.cos(), r * phi.sin(), z]
        })
        .collect();
    AtomEnsemble::with_info(
        positions,
        GeneratorInfo {
            label: "uniform_cylinder".into(),
            seed: Some(seed),
            params: serde_json::json!({ "n": n, "radius": radius, "length": length }),
        },
    )
}

/// Deterministic lattice and chain geometries.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum LatticeKind {
    Square { a: f64 },
    /// Spacings `a` along x and `eta * a` along y.
    Rectangular { a: f64, eta: f64 },
    /// Nearest-neighbour distance `a`, two-site basis.
    Honeycomb { a: f64 },
    /// `count` atoms equally spaced on a circle in the xy plane.
    Ring { count: usize, radius: f64 },
    /// `count` atoms along x with spacing `xi`.
    Chain { count: usize, xi: f64 },
}

impl LatticeKind {
    fn spacing(&self) -> f64 {
        match *self {
            Self::Square { a } | Self::Honeycomb { a } => a,
            Self::Rectangular { a, eta } => a.min(a * eta),
            Self::Ring { radius, .. } => radius,
            Self::Chain { xi, .. } => xi,
        }
    }
}

/// Honeycomb Bravais vectors for nearest-neighbour distance `a`.
pub fn honeycomb_vectors(a: f64) -> ([f64; 2], [f64; 2], [[f64; 2]; 2]) {
    let s3 = 3f64.sqrt();
    (
        [s3 * a, 0.0],
        [s3 * a / 2.0, 1.5 * a],
        [[0.0, 0.0], [0.0, a]],
    )
}

/// Build a lattice with `extents = (m1, m2)` unit cells. Ring and chain
/// geometries carry their own atom count and only require `extents >= 1`.
pub fn make_lattice(kind: LatticeKind, extents: (usize, usize)) -> Result<AtomEnsemble> {
    let spacing = kind.spacing();
    if !(spacing > 0.0) || !spacing.is_finite() {
        return Err(Error::invalid(format!("lattice spacing must be > 0 in {kind:?}")));
    }
    let (m1, m2) = extents;
    if m1 == 0 || m2 == 0 {
        return Err(Error::invalid("lattice extents must be >= 1"));
    }
    let mut positions = Vec::new();
    let label;
    match kind {
        LatticeKind::Square { a } => {
            label = "square";
            for i in 0..m1 {
                for j in 0..m2 {
                    positions.push([i as f64 * a, j as f64 * a, 0.0]);
                }
            }
        }
        LatticeKind::Rectangular { a, eta } => {
            label = "rectangular";
            for i in 0..m1 {
                for j in 0..m2 {
                    positions.push([i as f64 * a, j as f64 * eta * a, 0.0]);
                }
            }
        }
        LatticeKind::Honeycomb { a } => {
            label = "honeycomb";
            let (a1, a2, basis) = honeycomb_vectors(a);
            for i in 0..m1 {
                for j in 0..m2 {
                    let (fi, fj) = (i as f64, j as f64);
                    for d in &basis {
                        positions.push([
                            fi * a1[0] + fj * a2[0] + d[0],
                            fi * a1[1] + fj * a2[1] + d[1],
                            0.0,
                        ]);
                    }
                }
            }
        }
        LatticeKind::Ring { count, radius } => {
            label = "ring";
            if count == 0 {
                return Err(Error::invalid("ring needs at least one atom"));
            }
            for j in 0..count {
                let phi = 2.0 * PI * j as f64 / count as f64;
                positions.push([radius * phi.cos(), radius * phi.sin(), 0.0]);
            }
        }
        LatticeKind::Chain { count, xi } => {
            label = "chain";
            if count == 0 {
                return Err(Error::invalid("chain needs at least one atom"));
            }
            for j in 0..count {
                positions.push([j as f64 * xi, 0.0, 0.0]);
            }
        }
    }
    AtomEnsemble::with_info(
        positions,
        GeneratorInfo {
            label: label.into(),
            seed: None,
            params: serde_json::json!({ "lattice": kind, "extents": [m1, m2] }),
        },
    )
}

/// Which spacing separates the last atom of one zone from the first of the next.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZoneBoundary {
    #[default]
    LaterZone,
    EarlierZone,
    Mean,
}

/// One zone of a dissimilar chain.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Zone {
    pub count: usize,
    pub xi: f64,
}

pub fn make_chain_zones(zones: &[Zone]) -> Result<AtomEnsemble> {
    make_chain_zones_with(zones, ZoneBoundary::LaterZone)
}

/// Collinear chain along x made of consecutive zones.
pub fn make_chain_zones_with(zones: &[Zone], boundary: ZoneBoundary) -> Result<AtomEnsemble> {
    if zones.is_empty() {
        return Err(Error::invalid("zone list is empty"));
    }
    for (i, z) in zones.iter().enumerate() {
        if z.count == 0 {
            return Err(Error::invalid(format!("zone {i} has no atoms")));
        }
        if !(z.xi > 0.0) || !z.xi.is_finite() {
            return Err(Error::invalid(format!("zone {i} spacing must be > 0, got {}", z.xi)));
        }
    }
    let mut positions = Vec::with_capacity(zones.iter().map(|z| z.count).sum());
    let mut x = 0.0;
    for (zi, zone) in zones.iter().enumerate() {
        for k in 0..zone.count {
            if !positions.is_empty() {
                let gap = if k == 0 {
                    let prev = zones[zi - 1].xi;
                    match boundary {
                        ZoneBoundary::LaterZone => zone.xi,
                        ZoneBoundary::EarlierZone => prev,
                        ZoneBoundary::Mean => 0.5 * (prev + zone.xi),
                    }
                } else {
                    zone.xi
                };
                x += gap;
            }
            positions.push([x, 0.0, 0.0]);
        }
    }
    AtomEnsemble::with_info(
        positions,
        GeneratorInfo {
            label: "chain_zones".into(),
            seed: None,
            params: serde_json::json!({ "zones": zones, "boundary": boundary }),
        },
    )
}

/// Minimum pairwise distance `ξ_min`.
pub fn min_pair_distance(ensemble: &AtomEnsemble) -> Result<f64> {
    if ensemble.n() < 2 {
        return Err(Error::invalid("minimum pair distance needs at least two atoms"));
    }
    Ok(closest_pair(ensemble.positions()).expect("n >= 2").2)
}

/// Closest pair by sort-and-sweep along x: pairs are only examined while their
/// x gap is below the best distance found so far.
fn closest_pair(positions: &[Vec3]) -> Option<(usize, usize, f64)> {
    if positions.len() < 2 {
        return None;
    }
    let mut order: Vec<usize> = (0..positions.len()).collect();
    order.sort_by(|&a, &b| positions[a][0].total_cmp(&positions[b][0]));
    let mut best = (order[0], order[1], f64::INFINITY);
    for (ii, &i) in order.iter().enumerate() {
        let pi = positions[i];
        for &j in &order[ii + 1..] {
            let pj = positions[j];
            let dx = pj[0] - pi[0];
            if dx > best.2 {
                break;
            }
            let d = distance(&pi, &pj);
            if d < best.2 {
                best = (i.min(j), i.max(j), d);
            }
        }
    }
    Some(best)
}

pub fn distance(a: &Vec3, b: &Vec3) -> f64 {
    let d = [a[0] - b[0], a[1] - b[1], a[2] - b[2]];
    (d[0] * d[0] + d[1] * d[1] + d[2] * d[2]).sqrt()
}

/// Validity note emitted when atoms sit closer than the kernel's range of validity.
pub fn validity_warning(ensemble: &AtomEnsemble) -> Option<String> {
    let xi = min_pair_distance(ensemble).ok()?;
    (xi < KERNEL_VALIDITY_XI).then(|| {
        format!(
            "minimum separation xi = {xi:.4} is below {KERNEL_VALIDITY_XI}; free-space dipole-dipole kernel is only approximate there"
        )
    })
}
