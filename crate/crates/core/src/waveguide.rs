//! Atoms coupled through a one-dimensional, possibly chiral, guided mode.

use ndarray::Array1;
use num_complex::Complex64;
use rayon::prelude::*;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::dynamics::{evolve, steady_state, DipoleState, DriveSpec};
use crate::error::{Error, Result};
use crate::geometry::{make_chain_zones_with, make_lattice, LatticeKind, Zone, ZoneBoundary};
use crate::kernel::{chain_coordinates, waveguide_coupling, ChiralSpec};

/// Largest Rabi frequency, in units of the total rate, treated as weak drive.
pub const WEAK_DRIVE_LIMIT: f64 = 0.05;

/// Fraction of the chain counted as edge on each side.
pub const EDGE_SHARE: f64 = 0.1;

/// Fraction of decay into the guided mode, `(γ_L + γ_R)/Γ_tot`.
pub fn beta_factor(spec: &ChiralSpec) -> Result<f64> {
    spec.validate()?;
    let total = spec.total_rate();
    if !(total > 0.0) {
        return Err(Error::invalid("all decay rates are zero"));
    }
    Ok((spec.gamma_l() + spec.gamma_r()) / total)
}

/// Where the probe enters.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriveInput {
    /// Guided mode launched from the left, `e^{i x_μ}`.
    #[default]
    Left,
    /// Guided mode launched from the right, `e^{−i x_μ}`.
    Right,
    /// Uniform drive from outside the guide.
    Transverse,
}

impl DriveInput {
    pub fn phases(&self, x: &[f64]) -> Vec<Complex64> {
        x.iter()
            .map(|&xm| match self {
                DriveInput::Left => Complex64::from_polar(1.0, xm),
                DriveInput::Right => Complex64::from_polar(1.0, -xm),
                DriveInput::Transverse => Complex64::new(1.0, 0.0),
            })
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FourierPeak {
    /// Dominant non-zero spatial frequency in cycles per site.
    pub frequency: f64,
    pub index: usize,
    /// `|P_q| / Σ p`, with `P` the transform of the mean-subtracted profile.
    pub contrast: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhaseDiagnostics {
    pub profile: Vec<f64>,
    pub fourier_peak: FourierPeak,
    pub edge_fraction: f64,
}

/// Raw diagnostics of a population profile.
pub fn phase_diagnostics(profile: &[f64]) -> PhaseDiagnostics {
    let n = profile.len();
    let total: f64 = profile.iter().sum();
    let mean = if n > 0 { total / n as f64 } else { 0.0 };
    let mut buf: Vec<Complex64> = profile.iter().map(|p| Complex64::new(p - mean, 0.0)).collect();
    let mut peak = FourierPeak {
        frequency: 0.0,
        index: 0,
        contrast: 0.0,
    };
    if n >= 2 {
        FftPlanner::new().plan_fft_forward(n).process(&mut buf);
        for (q, v) in buf.iter().enumerate().take(n / 2 + 1).skip(1) {
            let c = if total > 0.0 { v.norm() / total } else { 0.0 };
            if c > peak.contrast {
                peak = FourierPeak {
                    frequency: q as f64 / n as f64,
                    index: q,
                    contrast: c,
                };
            }
        }
    }
    let edge = ((EDGE_SHARE * n as f64).round() as usize).max(1).min(n / 2);
    let edge_pop: f64 = profile[..edge].iter().sum::<f64>() + profile[n - edge..].iter().sum::<f64>();
    PhaseDiagnostics {
        profile: profile.to_vec(),
        fourier_peak: peak,
        edge_fraction: if total > 0.0 { edge_pop / total } else { 0.0 },
    }
}

/// Steady-state outcome of a driven chain.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "regime", rename_all = "snake_case")]
pub enum ChainPhase {
    Regular(PhaseDiagnostics),
    /// The linear system is singular: a collective mode is resonant and
    /// undamped, and the population diverges.
    Critical { eigenvalue: Complex64, distance: f64 },
}

impl ChainPhase {
    pub fn diagnostics(&self) -> Option<&PhaseDiagnostics> {
        match self {
            ChainPhase::Regular(d) => Some(d),
            ChainPhase::Critical { .. } => None,
        }
    }
}

/// Weakly driven uniform chain of `n` atoms with spacing `xi` (units 1/k).
pub fn driven_chain_steady_state(
    n: usize,
    xi: f64,
    spec: &ChiralSpec,
    rabi: f64,
    detuning: f64,
    input: DriveInput,
) -> Result<ChainPhase> {
    spec.validate()?;
    if n == 0 {
        return Err(Error::invalid("chain needs at least one atom"));
    }
    if !(rabi.abs() <= WEAK_DRIVE_LIMIT * spec.total_rate()) {
        return Err(Error::invalid(format!(
            "Rabi frequency {rabi} exceeds the weak-drive limit {} x total rate",
            WEAK_DRIVE_LIMIT
        )));
    }
    let chain = make_lattice(LatticeKind::Chain { count: n, xi }, (1, 1))?;
    let x = chain_coordinates(&chain)?;
    let coupling = waveguide_coupling(&chain, spec)?;
    let drive = DriveSpec::new(rabi, detuning, input.phases(&x))?;
    match steady_state(&coupling, &drive) {
        Ok(b) => Ok(ChainPhase::Regular(phase_diagnostics(&b.populations()))),
        Err(Error::Singular { eigenvalue, distance }) => Ok(ChainPhase::Critical { eigenvalue, distance }),
        Err(e) => Err(e),
    }
}

#[derive(Debug, Clone, Serialize)]
pub struct PhaseMapCell {
    pub d_factor: f64,
    pub xi_over_pi: f64,
    pub phase: ChainPhase,
}

/// Diagnostics over a `(D, ξ/π)` grid, row-major in `D`.
pub fn phase_map(
    n: usize,
    d_values: &[f64],
    xi_over_pi: &[f64],
    gamma_1d: f64,
    gamma_ng: f64,
    rabi: f64,
    input: DriveInput,
) -> Result<Vec<PhaseMapCell>> {
    let cells: Vec<(f64, f64)> = d_values
        .iter()
        .flat_map(|&d| xi_over_pi.iter().map(move |&x| (d, x)))
        .collect();
    cells
        .par_iter()
        .map(|&(d, x)| {
            let spec = ChiralSpec::new(gamma_1d, d, gamma_ng)?;
            let phase = driven_chain_steady_state(n, x * std::f64::consts::PI, &spec, rabi, 0.0, input)?;
            Ok(PhaseMapCell {
                d_factor: d,
                xi_over_pi: x,
                phase,
            })
        })
        .collect()
}

#[derive(Debug, Clone, Serialize)]
pub struct QuenchResult {
    pub times: Vec<f64>,
    /// `zone_populations[t][z]`
    pub zone_populations: Vec<Vec<f64>>,
    pub total: Vec<f64>,
    /// Population in the middle zone over the initial population.
    pub retention: Vec<f64>,
    /// Site populations at the last time.
    pub final_profile: Vec<f64>,
}

/// Free decay of a single-site excitation in a zoned chain.
pub fn quench_zones(zones: &[Zone], initial_site: usize, times: &[f64], spec: &ChiralSpec) -> Result<QuenchResult> {
    quench_zones_with(zones, ZoneBoundary::default(), initial_site, times, spec)
}

pub fn quench_zones_with(
    zones: &[Zone],
    boundary: ZoneBoundary,
    initial_site: usize,
    times: &[f64],
    spec: &ChiralSpec,
) -> Result<QuenchResult> {
    let chain = make_chain_zones_with(zones, boundary)?;
    let n = chain.n();
    if initial_site >= n {
        return Err(Error::invalid(format!("initial site {initial_site} outside chain of {n} atoms")));
    }
    let coupling = waveguide_coupling(&chain, spec)?;
    let b0 = DipoleState::single_excitation(n, initial_site)?;
    let traj = evolve(&coupling, &DriveSpec::none(n), &b0, times)?;
    let mut bounds = Vec::with_capacity(zones.len());
    let mut start = 0;
    for z in zones {
        bounds.push((start, start + z.count));
        start += z.count;
    }
    let middle = zones.len() / 2;
    let initial = b0.total_population();
    let mut out = QuenchResult {
        times: times.to_vec(),
        zone_populations: Vec::with_capacity(times.len()),
        total: Vec::with_capacity(times.len()),
        retention: Vec::with_capacity(times.len()),
        final_profile: Vec::new(),
    };
    for s in &traj {
        let p = s.populations();
        let zp: Vec<f64> = bounds.iter().map(|&(a, b)| p[a..b].iter().sum()).collect();
        out.retention.push(zp[middle] / initial);
        out.total.push(p.iter().sum());
        out.zone_populations.push(zp);
    }
    out.final_profile = traj.last().map(|s| s.populations()).unwrap_or_default();
    Ok(out)
}

/// Steady-state amplitudes for an arbitrary drive profile on a uniform chain
/// (used for paired-drive checks).
pub fn chain_steady_amplitudes(
    n: usize,
    xi: f64,
    spec: &ChiralSpec,
    rabi: f64,
    phases: Vec<Complex64>,
) -> Result<Array1<Complex64>> {
    let chain = make_lattice(LatticeKind::Chain { count: n, xi }, (1, 1))?;
    let coupling = waveguide_coupling(&chain, spec)?;
    Ok(steady_state(&coupling, &DriveSpec::new(rabi, 0.0, phases)?)?.b)
}
