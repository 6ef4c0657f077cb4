//! TOML run configuration. Unknown keys are rejected everywhere.

use std::path::PathBuf;

use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::bands::{Lattice2D, LatticeSpec2D, RibbonLevels};
use crate::dynamics::DriveSpec;
use crate::error::{Error, Result};
use crate::geometry::{
    make_chain_zones_with, make_gaussian_cloud, make_lattice, make_uniform_cylinder, AtomEnsemble, LatticeKind,
    PolarizationSpec, Zone, ZoneBoundary,
};
use crate::kernel::{chain_coordinates, free_space_coupling, waveguide_coupling, ChiralSpec, CouplingMatrix};
use crate::transmission::Probe;
use crate::waveguide::DriveInput;

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Worker threads for the parallel pool (default: all cores).
    pub threads: Option<usize>,
    /// Default seed for random geometries.
    pub seed: Option<u64>,
    pub output_dir: Option<PathBuf>,
    pub geometry: Option<GeometryConfig>,
    pub coupling: Option<CouplingConfig>,
    pub drive: Option<DriveConfig>,
    pub evolve: Option<EvolveConfig>,
    pub spectrum: Option<SpectrumConfig>,
    pub mirror: Option<MirrorConfig>,
    pub wg_phase: Option<WgPhaseConfig>,
    pub wg_quench: Option<WgQuenchConfig>,
    pub bands: Option<BandsConfig>,
    pub chern: Option<ChernConfig>,
    pub ribbon: Option<RibbonConfig>,
    pub oracle: Option<OracleConfig>,
}

impl RunConfig {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::invalid(format!("config: {e}")))
    }
}

pub(crate) fn section<'a, T>(s: &'a Option<T>, name: &str) -> Result<&'a T> {
    s.as_ref()
        .ok_or_else(|| Error::invalid(format!("config is missing the [{name}] section")))
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "generator", rename_all = "snake_case", deny_unknown_fields)]
pub enum GeometryConfig {
    GaussianCloud {
        n: usize,
        sigma: [f64; 3],
        seed: Option<u64>,
    },
    UniformCylinder {
        n: usize,
        radius: f64,
        #[serde(default)]
        length: f64,
        seed: Option<u64>,
    },
    Lattice {
        lattice: LatticeKind,
        #[serde(default = "one")]
        nx: usize,
        #[serde(default = "one")]
        ny: usize,
        #[serde(default)]
        centered: bool,
    },
    ChainZones {
        zones: Vec<Zone>,
        #[serde(default)]
        boundary: ZoneBoundary,
    },
    Positions {
        positions: Vec<[f64; 3]>,
    },
    File {
        path: PathBuf,
    },
}

fn one() -> usize {
    1
}

impl GeometryConfig {
    pub fn build(&self, default_seed: Option<u64>) -> Result<AtomEnsemble> {
        let seed = |s: &Option<u64>| s.or(default_seed).unwrap_or(0);
        match self {
            Self::GaussianCloud { n, sigma, seed: s } => make_gaussian_cloud(*n, *sigma, seed(s)),
            Self::UniformCylinder {
                n,
                radius,
                length,
                seed: s,
            } => make_uniform_cylinder(*n, *radius, *length, seed(s)),
            Self::Lattice {
                lattice,
                nx,
                ny,
                centered,
            } => {
                let e = make_lattice(*lattice, (*nx, *ny))?;
                Ok(if *centered { e.centered() } else { e })
            }
            Self::ChainZones { zones, boundary } => make_chain_zones_with(zones, *boundary),
            Self::Positions { positions } => AtomEnsemble::new(positions.clone(), "positions"),
            Self::File { path } => AtomEnsemble::import(path),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(tag = "model", rename_all = "snake_case", deny_unknown_fields)]
pub enum CouplingConfig {
    FreeSpace {
        polarization: PolarizationSpec,
        #[serde(default)]
        noninteracting: bool,
    },
    Waveguide {
        gamma_1d: f64,
        d_factor: f64,
        #[serde(default)]
        gamma_ng: f64,
    },
}

impl CouplingConfig {
    pub fn build(&self, ensemble: &AtomEnsemble) -> Result<CouplingMatrix> {
        match self {
            Self::FreeSpace {
                polarization,
                noninteracting,
            } => {
                polarization.validate()?;
                let c = free_space_coupling(ensemble, polarization)?;
                Ok(if *noninteracting { c.noninteracting() } else { c })
            }
            Self::Waveguide {
                gamma_1d,
                d_factor,
                gamma_ng,
            } => waveguide_coupling(ensemble, &ChiralSpec::new(*gamma_1d, *d_factor, *gamma_ng)?),
        }
    }
}

/// Spatial profile of the probe; unit variants are plain strings
/// (`profile = "uniform"`), the others inline tables
/// (`profile = { gaussian = { waist = 20.0 } }`).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum DriveProfile {
    Uniform,
    None,
    PlaneWave {
        #[serde(default = "z_hat")]
        direction: [f64; 3],
    },
    Gaussian {
        waist: f64,
    },
    SingleSite {
        site: usize,
    },
    /// Guided-mode input for a collinear chain.
    Guided {
        #[serde(default)]
        input: DriveInput,
    },
}

fn z_hat() -> [f64; 3] {
    [0.0, 0.0, 1.0]
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct DriveConfig {
    #[serde(default)]
    pub rabi: f64,
    #[serde(default)]
    pub detuning: f64,
    pub profile: DriveProfile,
}

impl DriveConfig {
    pub fn build(&self, ensemble: &AtomEnsemble) -> Result<DriveSpec> {
        let n = ensemble.n();
        match &self.profile {
            DriveProfile::Uniform => DriveSpec::uniform(n, self.rabi, self.detuning),
            DriveProfile::None => Ok(DriveSpec::none(n).with_detuning(self.detuning)),
            DriveProfile::PlaneWave { direction } => DriveSpec::plane_wave(ensemble, self.rabi, self.detuning, *direction),
            DriveProfile::Gaussian { waist } => DriveSpec::gaussian_beam(ensemble, self.rabi, self.detuning, *waist),
            DriveProfile::SingleSite { site } => DriveSpec::single_site(n, *site, self.rabi, self.detuning),
            DriveProfile::Guided { input } => {
                let x = chain_coordinates(ensemble)?;
                DriveSpec::new(self.rabi, self.detuning, input.phases(&x))
            }
        }
    }
}

/// Either an explicit list or an evenly spaced grid (endpoints included).
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(untagged)]
pub enum Grid {
    List(Vec<f64>),
    Range(GridRange),
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridRange {
    pub start: f64,
    pub stop: f64,
    pub count: usize,
}

impl Grid {
    pub fn values(&self) -> Result<Vec<f64>> {
        let v = match self {
            Grid::List(v) => v.clone(),
            Grid::Range(GridRange { start, stop, count }) => {
                if *count == 0 {
                    return Err(Error::invalid("grid count must be > 0"));
                }
                if *count == 1 {
                    vec![*start]
                } else {
                    (0..*count)
                        .map(|k| start + (stop - start) * k as f64 / (*count - 1) as f64)
                        .collect()
                }
            }
        };
        if v.iter().any(|x| !x.is_finite()) {
            return Err(Error::invalid("grid values must be finite"));
        }
        if v.is_empty() {
            return Err(Error::invalid("grid is empty"));
        }
        Ok(v)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", deny_unknown_fields)]
pub enum InitialState {
    Ground,
    Site { site: usize },
    Mode { index: usize },
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct EvolveConfig {
    pub times: Grid,
    pub initial: InitialState,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SpectrumConfig {
    pub probe: Probe,
    pub rabi: f64,
    pub detunings: Grid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct MirrorConfig {
    pub side: usize,
    /// Beam waist in units of λ.
    pub waist_over_lambda: f64,
    pub spacing_over_lambda: Grid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WgPhaseConfig {
    pub n: usize,
    pub gamma_1d: f64,
    #[serde(default)]
    pub gamma_ng: f64,
    pub rabi: f64,
    #[serde(default)]
    pub input: DriveInput,
    pub d_values: Grid,
    pub xi_over_pi: Grid,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct WgQuenchConfig {
    pub zones: Vec<Zone>,
    #[serde(default)]
    pub boundary: ZoneBoundary,
    pub initial_site: usize,
    pub gamma_1d: f64,
    pub d_factor: f64,
    #[serde(default)]
    pub gamma_ng: f64,
    pub times: Grid,
}

impl WgQuenchConfig {
    pub fn spec(&self) -> Result<ChiralSpec> {
        ChiralSpec::new(self.gamma_1d, self.d_factor, self.gamma_ng)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum LatticeName {
    Honeycomb,
    Square,
    Rectangular,
}

/// Planar lattice; give exactly one of `a` (units 1/k) or `a_over_lambda`.
#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeConfig {
    pub kind: LatticeName,
    /// Aspect ratio, rectangular lattices only.
    pub eta: Option<f64>,
    pub a: Option<f64>,
    pub a_over_lambda: Option<f64>,
    #[serde(default)]
    pub zeeman: f64,
    /// Cutoff radius in lattice constants.
    pub r_cut_over_a: f64,
}

impl LatticeConfig {
    pub fn spec(&self) -> Result<LatticeSpec2D> {
        let a = match (self.a, self.a_over_lambda) {
            (Some(a), None) => a,
            (None, Some(f)) => f * 2.0 * std::f64::consts::PI,
            _ => return Err(Error::invalid("give exactly one of `a` and `a_over_lambda`")),
        };
        let lattice = match (self.kind, self.eta) {
            (LatticeName::Honeycomb, None) => Lattice2D::Honeycomb,
            (LatticeName::Square, None) => Lattice2D::Square,
            (LatticeName::Rectangular, Some(eta)) => Lattice2D::Rectangular { eta },
            (LatticeName::Rectangular, None) => return Err(Error::invalid("rectangular lattice needs `eta`")),
            (_, Some(_)) => return Err(Error::invalid("`eta` applies to rectangular lattices only")),
        };
        LatticeSpec2D::new(lattice, a, self.zeeman)
    }

    pub fn r_cut(&self) -> Result<f64> {
        Ok(self.r_cut_over_a * self.spec()?.a)
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BandsConfig {
    pub lattice: LatticeConfig,
    pub points_per_segment: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChernConfig {
    pub lattice: LatticeConfig,
    pub grid: usize,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RibbonConfig {
    pub lattice: LatticeConfig,
    pub width: usize,
    /// Momentum along the strip in units of π/a.
    pub k_par_over_pi_a: Grid,
    #[serde(default)]
    pub levels: RibbonLevels,
}

#[derive(Debug, Clone, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct OracleConfig {
    pub times: Grid,
    /// Solve for the stationary state as well (up to 5 atoms).
    #[serde(default)]
    pub steady: bool,
    /// Detection coefficients for g²(0), as `[re, im]` pairs.
    pub detection: Option<Vec<[f64; 2]>>,
}

impl OracleConfig {
    pub fn detection(&self) -> Option<Vec<Complex64>> {
        self.detection
            .as_ref()
            .map(|d| d.iter().map(|c| Complex64::new(c[0], c[1])).collect())
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn rejects_unknown_keys() {
        assert!(RunConfig::parse("threds = 3").is_err());
        let bad = "[geometry]\ngenerator = \"gaussian_cloud\"\nn = 3\nsigma = [1.0, 1.0, 1.0]\nsigmma = 2\n";
        assert!(RunConfig::parse(bad).is_err());
        let bad = "[drive]\nprofile = \"uniform\"\nrabi = 0.1\nphase = 2\n";
        assert!(RunConfig::parse(bad).is_err());
        let bad = "[chern]\ngrid = 4\n[chern.lattice]\nkind = \"square\"\na = 1.0\nr_cut_over_a = 20\nzeman = 1\n";
        assert!(RunConfig::parse(bad).is_err());
    }

    #[test]
    fn parses_full_sections() {
        let text = r#"
threads = 2
seed = 9

[geometry]
generator = "lattice"
lattice = { kind = "chain", count = 4, xi = 1.0 }

[coupling]
model = "waveguide"
gamma_1d = 1.0
d_factor = 0.2

[drive]
profile = { guided = { input = "left" } }
rabi = 0.01

[evolve]
times = { start = 0.0, stop = 2.0, count = 5 }
initial = { site = { site = 0 } }

[bands]
points_per_segment = 10

[bands.lattice]
kind = "honeycomb"
a_over_lambda = 0.05
r_cut_over_a = 20
"#;
        let c = RunConfig::parse(text).unwrap();
        let e = c.geometry.unwrap().build(c.seed).unwrap();
        assert_eq!(e.n(), 4);
        let d = c.drive.unwrap().build(&e).unwrap();
        assert!((d.phases[1] - Complex64::from_polar(1.0, 1.0)).norm() < 1e-15);
        assert_eq!(c.evolve.unwrap().times.values().unwrap(), vec![0.0, 0.5, 1.0, 1.5, 2.0]);
        let b = c.bands.unwrap();
        assert!((b.lattice.spec().unwrap().a - 0.1 * std::f64::consts::PI).abs() < 1e-15);
    }

    #[test]
    fn lattice_spacing_must_be_unambiguous() {
        let l = LatticeConfig {
            kind: LatticeName::Square,
            eta: None,
            a: Some(1.0),
            a_over_lambda: Some(0.1),
            zeeman: 0.0,
            r_cut_over_a: 20.0,
        };
        assert!(l.spec().is_err());
    }
}
