//! Single-excitation (coupled-dipole) dynamics.
//!
//! Sign and frame convention used throughout the crate:
//!
//! ```text
//! db_μ/dt = iΔ b_μ − Σ_ν J_μν b_ν + (iΩ₀/2) phase_μ
//! ```
//!
//! so `Re J` is literally half the decay matrix. An eigenvalue `λ_n` of `J`
//! gives the mode decay rate `Γ_n = 2 Re λ_n` and the mode frequency shift
//! `δ_n = Im λ_n`; a mode with `δ_n > 0` is blue detuned and shows up in a
//! detuning scan at `Δ = δ_n`.

mod lindblad;
mod ode;

pub use lindblad::{exact_lindblad, g2_zero, LindbladObservables, LindbladSystem, MAX_EXACT_ATOMS, MAX_STEADY_ATOMS};
pub use ode::{integrate, OdeOptions};

use std::collections::HashMap;

use ndarray::{s, Array1, Array2};
use ndarray_linalg::{Factorize, ReciprocalConditionNum, Solve};
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{AtomEnsemble, Vec3};
use crate::kernel::CouplingMatrix;
use crate::linalg;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Coherent probe: Rabi frequency `Ω₀`, detuning `Δ` and a per-atom complex
/// amplitude (`|phase_μ| ≤ 1`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DriveSpec {
    pub rabi: f64,
    pub detuning: f64,
    pub phases: Vec<Complex64>,
}

impl DriveSpec {
    pub fn new(rabi: f64, detuning: f64, phases: Vec<Complex64>) -> Result<Self> {
        if !rabi.is_finite() || !detuning.is_finite() {
            return Err(Error::invalid("drive parameters must be finite"));
        }
        if let Some(i) = phases
            .iter()
            .position(|p| !(p.norm() <= 1.0 + 1e-12) || !p.re.is_finite() || !p.im.is_finite())
        {
            return Err(Error::invalid(format!(
                "drive amplitude at atom {i} exceeds 1 ({})",
                phases[i].norm()
            )));
        }
        Ok(Self {
            rabi,
            detuning,
            phases,
        })
    }

    /// No drive, detuning zero.
    pub fn none(n: usize) -> Self {
        Self {
            rabi: 0.0,
            detuning: 0.0,
            phases: vec![Complex64::new(0.0, 0.0); n],
        }
    }

    pub fn uniform(n: usize, rabi: f64, detuning: f64) -> Result<Self> {
        Self::new(rabi, detuning, vec![Complex64::new(1.0, 0.0); n])
    }

    /// Plane wave `e^{i k̂·r}` along unit direction `k̂` (wavenumber 1).
    pub fn plane_wave(ensemble: &AtomEnsemble, rabi: f64, detuning: f64, direction: Vec3) -> Result<Self> {
        let norm = (direction[0].powi(2) + direction[1].powi(2) + direction[2].powi(2)).sqrt();
        if (norm - 1.0).abs() > 1e-12 {
            return Err(Error::invalid("plane-wave direction must be a unit vector"));
        }
        let phases = ensemble
            .positions()
            .iter()
            .map(|r| Complex64::from_polar(1.0, direction[0] * r[0] + direction[1] * r[1] + direction[2] * r[2]))
            .collect();
        Self::new(rabi, detuning, phases)
    }

    /// Paraxial Gaussian beam along +z with waist `w0` at `z = 0`.
    pub fn gaussian_beam(ensemble: &AtomEnsemble, rabi: f64, detuning: f64, w0: f64) -> Result<Self> {
        if !(w0 > 0.0) {
            return Err(Error::invalid(format!("beam waist must be > 0, got {w0}")));
        }
        let phases = ensemble
            .positions()
            .iter()
            .map(|r| gaussian_mode(r, w0) * Complex64::from_polar(1.0, r[2]))
            .collect();
        Self::new(rabi, detuning, phases)
    }

    /// Only atom `site` is driven.
    pub fn single_site(n: usize, site: usize, rabi: f64, detuning: f64) -> Result<Self> {
        if site >= n {
            return Err(Error::invalid(format!("site {site} out of range for {n} atoms")));
        }
        let mut phases = vec![Complex64::new(0.0, 0.0); n];
        phases[site] = Complex64::new(1.0, 0.0);
        Self::new(rabi, detuning, phases)
    }

    pub fn n(&self) -> usize {
        self.phases.len()
    }

    /// Same profile at another detuning.
    pub fn with_detuning(&self, detuning: f64) -> Self {
        Self {
            detuning,
            ..self.clone()
        }
    }

    /// Same profile at another Rabi frequency.
    pub fn with_rabi(&self, rabi: f64) -> Self {
        Self { rabi, ..self.clone() }
    }

    /// `d_μ = (iΩ₀/2) phase_μ`.
    pub fn vector(&self) -> Array1<Complex64> {
        self.phases.iter().map(|p| 0.5 * I * self.rabi * p).collect()
    }
}

/// Unit-peak paraxial Gaussian mode (without the carrier `e^{iz}`), wavenumber 1:
/// `u = exp(−ρ²/(w0² (1 + i z/z_R))) / (1 + i z/z_R)` with `z_R = w0²/2`.
pub fn gaussian_mode(r: &Vec3, w0: f64) -> Complex64 {
    let z_r = 0.5 * w0 * w0;
    let q = Complex64::new(1.0, r[2] / z_r);
    let rho2 = r[0] * r[0] + r[1] * r[1];
    (-rho2 / (w0 * w0 * q)).exp() / q
}

/// Single-excitation amplitudes `b_μ = ⟨σ_μ⟩` at a given time.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DipoleState {
    pub b: Array1<Complex64>,
    pub time: f64,
}

impl DipoleState {
    pub fn new(b: Array1<Complex64>, time: f64) -> Self {
        Self { b, time }
    }

    /// All amplitude on one atom.
    pub fn single_excitation(n: usize, site: usize) -> Result<Self> {
        if site >= n {
            return Err(Error::invalid(format!("site {site} out of range for {n} atoms")));
        }
        let mut b = Array1::zeros(n);
        b[site] = Complex64::new(1.0, 0.0);
        Ok(Self { b, time: 0.0 })
    }

    pub fn populations(&self) -> Vec<f64> {
        self.b.iter().map(|z| z.norm_sqr()).collect()
    }

    pub fn total_population(&self) -> f64 {
        self.b.iter().map(|z| z.norm_sqr()).sum()
    }
}

/// Eigen-decomposition of `J`, sorted by decay rate (most subradiant first).
#[derive(Debug, Clone)]
pub struct EigenmodeSet {
    pub eigenvalues: Vec<Complex64>,
    pub rates: Vec<f64>,
    pub shifts: Vec<f64>,
    /// Column `n` is the right eigenvector of mode `n`.
    pub eigenvectors: Array2<Complex64>,
}

impl EigenmodeSet {
    pub fn len(&self) -> usize {
        self.eigenvalues.len()
    }

    pub fn is_empty(&self) -> bool {
        self.eigenvalues.is_empty()
    }

    pub fn mode(&self, n: usize) -> Array1<Complex64> {
        self.eigenvectors.column(n).to_owned()
    }
}

/// `M = iΔ·I − J`, so that `db/dt = M b + d`.
pub fn build_evolution_matrix(coupling: &CouplingMatrix, detuning: f64) -> Array2<Complex64> {
    let mut m = coupling.j().mapv(|z| -z);
    for k in 0..coupling.n() {
        m[[k, k]] += I * detuning;
    }
    m
}

pub fn eigenmodes(coupling: &CouplingMatrix) -> Result<EigenmodeSet> {
    let (w, v) = linalg::eig(coupling.j())?;
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| w[a].re.total_cmp(&w[b].re).then(w[a].im.total_cmp(&w[b].im)));
    let eigenvalues: Vec<Complex64> = order.iter().map(|&k| w[k]).collect();
    let mut eigenvectors = Array2::zeros(v.dim());
    for (dst, &src) in order.iter().enumerate() {
        eigenvectors.column_mut(dst).assign(&v.column(src));
    }
    Ok(EigenmodeSet {
        rates: eigenvalues.iter().map(|z| 2.0 * z.re).collect(),
        shifts: eigenvalues.iter().map(|z| z.im).collect(),
        eigenvalues,
        eigenvectors,
    })
}

/// Reciprocal condition number below which the steady-state system is
/// reported as singular.
pub const SINGULAR_RCOND: f64 = 1e-13;

/// Solves `(J − iΔ) b = d`.
pub fn steady_state(coupling: &CouplingMatrix, drive: &DriveSpec) -> Result<DipoleState> {
    let n = coupling.n();
    if drive.n() != n {
        return Err(Error::invalid(format!(
            "drive has {} amplitudes for {n} atoms",
            drive.n()
        )));
    }
    if n == 0 {
        return Ok(DipoleState::new(Array1::zeros(0), f64::INFINITY));
    }
    let a = build_evolution_matrix(coupling, drive.detuning).mapv(|z| -z);
    let d = drive.vector();
    let singular = || -> Error {
        match linalg::eig(coupling.j()) {
            Ok((w, _)) => {
                let target = I * drive.detuning;
                let (eigenvalue, distance) = w
                    .iter()
                    .map(|&l| (l, (l - target).norm()))
                    .min_by(|x, y| x.1.total_cmp(&y.1))
                    .expect("n > 0");
                Error::Singular { eigenvalue, distance }
            }
            Err(e) => e,
        }
    };
    let lu = match a.factorize() {
        Ok(lu) => lu,
        Err(_) => return Err(singular()),
    };
    let rcond = lu.rcond().map_err(|e| Error::Numerical(e.to_string()))?;
    if !(rcond > SINGULAR_RCOND) {
        return Err(singular());
    }
    let mut b = lu
        .solve(&d)
        .map_err(|e| Error::Numerical(format!("steady-state solve: {e}")))?;
    let dnorm = linalg::vec_norm(&d);
    for _ in 0..3 {
        let r = &d - &a.dot(&b);
        if linalg::vec_norm(&r) < 1e-10 * dnorm {
            return Ok(DipoleState::new(b, f64::INFINITY));
        }
        let db = lu
            .solve(&r)
            .map_err(|e| Error::Numerical(format!("steady-state refinement: {e}")))?;
        b = b + db;
    }
    let r = &d - &a.dot(&b);
    if linalg::vec_norm(&r) < 1e-10 * dnorm || dnorm == 0.0 {
        Ok(DipoleState::new(b, f64::INFINITY))
    } else {
        Err(Error::Numerical(format!(
            "steady-state residual {:e} exceeds tolerance",
            linalg::vec_norm(&r)
        )))
    }
}

/// Exact propagation of `db/dt = M b + d` on a time grid, via the exponential
/// of the augmented generator `[[M, d], [0, 0]]` (valid for singular `M`).
pub fn evolve(coupling: &CouplingMatrix, drive: &DriveSpec, b0: &DipoleState, times: &[f64]) -> Result<Vec<DipoleState>> {
    let n = coupling.n();
    if drive.n() != n || b0.b.len() != n {
        return Err(Error::invalid("drive/state size does not match coupling"));
    }
    if times.iter().any(|t| !t.is_finite()) {
        return Err(Error::invalid("time grid must be finite"));
    }
    if let Some(w) = times.windows(2).position(|w| w[1] < w[0]) {
        return Err(Error::invalid(format!("time grid decreases at index {}", w + 1)));
    }
    if let Some(&t0) = times.first() {
        if t0 < b0.time {
            return Err(Error::invalid("time grid starts before the initial state"));
        }
    }
    let m = build_evolution_matrix(coupling, drive.detuning);
    let mut gen = Array2::zeros((n + 1, n + 1));
    gen.slice_mut(s![..n, ..n]).assign(&m);
    gen.slice_mut(s![..n, n]).assign(&drive.vector());

    let mut cache: HashMap<u64, Array2<Complex64>> = HashMap::new();
    let mut z = Array1::zeros(n + 1);
    z.slice_mut(s![..n]).assign(&b0.b);
    z[n] = Complex64::new(1.0, 0.0);
    let mut t = b0.time;
    let mut out = Vec::with_capacity(times.len());
    for &target in times {
        let dt = target - t;
        if dt > 0.0 {
            let prop = match cache.get(&dt.to_bits()) {
                Some(p) => p,
                None => {
                    let p = linalg::expm(&gen.mapv(|x| x * dt))?;
                    cache.entry(dt.to_bits()).or_insert(p)
                }
            };
            z = prop.dot(&z);
            if z.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
                return Err(Error::Numerical(format!("propagation diverged at t = {target}")));
            }
        }
        t = target;
        out.push(DipoleState::new(z.slice(s![..n]).to_owned(), t));
    }
    Ok(out)
}

/// Radiated power `P = Σ γ_μν b*_μ b_ν` (reciprocal couplings only).
pub fn emitted_power(coupling: &CouplingMatrix, state: &DipoleState) -> Result<f64> {
    if !coupling.is_reciprocal() {
        return Err(Error::Unsupported(
            "emitted power is defined through the symmetric decay matrix; coupling is chiral".into(),
        ));
    }
    if state.b.len() != coupling.n() {
        return Err(Error::invalid("state size does not match coupling"));
    }
    let g = coupling.decay_matrix();
    let gb = g.dot(&state.b);
    Ok(state
        .b
        .iter()
        .zip(gb.iter())
        .map(|(b, x)| (b.conj() * x).re)
        .sum())
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use super::*;
    use crate::geometry::{make_gaussian_cloud, make_lattice, LatticeKind, PolarizationSpec};
    use crate::kernel::{free_space_coupling, free_space_gamma_omega, waveguide_coupling, ChiralSpec};

    fn pair(xi: f64) -> AtomEnsemble {
        AtomEnsemble::new(vec![[0.0; 3], [xi, 0.0, 0.0]], "pair").unwrap()
    }

    fn z_pol() -> PolarizationSpec {
        PolarizationSpec::linear([0.0, 0.0, 1.0]).unwrap()
    }

    fn single() -> CouplingMatrix {
        free_space_coupling(&AtomEnsemble::new(vec![[0.0; 3]], "one").unwrap(), &z_pol()).unwrap()
    }

    fn cloud(n: usize, seed: u64) -> CouplingMatrix {
        let e = make_gaussian_cloud(n, [2.0, 2.0, 2.0], seed).unwrap();
        free_space_coupling(&e, &PolarizationSpec::linear([1.0, 0.0, 0.0]).unwrap()).unwrap()
    }

    #[test]
    fn evolution_matrix_single_atom() {
        let m = build_evolution_matrix(&single(), 0.0);
        assert_eq!(m[[0, 0]], Complex64::new(-0.5, 0.0));
    }

    #[test]
    fn evolution_matrix_symmetric_and_spectrum() {
        let c = free_space_coupling(&pair(0.8), &z_pol()).unwrap();
        let m = build_evolution_matrix(&c, 0.0);
        assert_eq!(m[[0, 1]], m[[1, 0]]);
        let neg = m.mapv(|z| -z);
        let (mut a, _) = linalg::eig(&neg).unwrap().clone();
        let (mut b, _) = linalg::eig(c.j()).unwrap();
        a.as_slice_mut().unwrap().sort_by(|x, y| x.re.total_cmp(&y.re));
        b.as_slice_mut().unwrap().sort_by(|x, y| x.re.total_cmp(&y.re));
        for (x, y) in a.iter().zip(b.iter()) {
            assert!((x - y).norm() < 1e-14);
        }
    }

    #[test]
    fn single_atom_mode() {
        let m = eigenmodes(&single()).unwrap();
        assert!((m.rates[0] - 1.0).abs() < 1e-15);
        assert_eq!(m.shifts[0], 0.0);
    }

    #[test]
    fn two_atom_modes_closed_form() {
        let xi = 0.1;
        let c = free_space_coupling(&pair(xi), &z_pol()).unwrap();
        let m = eigenmodes(&c).unwrap();
        let (g, o) = free_space_gamma_omega(xi, 0.0);
        assert!((m.rates[0] - (1.0 - g)).abs() < 1e-10);
        assert!((m.rates[1] - (1.0 + g)).abs() < 1e-10);
        assert!((m.shifts[0] + o).abs() < 1e-10);
        assert!((m.shifts[1] - o).abs() < 1e-10);
    }

    #[test]
    fn waveguide_pi_chain_has_one_bright_mode() {
        let e = make_lattice(LatticeKind::Chain { count: 10, xi: PI }, (1, 1)).unwrap();
        let c = waveguide_coupling(&e, &ChiralSpec::new(1.0, 0.0, 0.0).unwrap()).unwrap();
        let m = eigenmodes(&c).unwrap();
        assert!((m.rates[9] - 10.0).abs() < 1e-10);
        for r in &m.rates[..9] {
            assert!(r.abs() < 1e-10);
        }
    }

    #[test]
    fn trace_sum_rule() {
        let c = cloud(80, 11);
        let m = eigenmodes(&c).unwrap();
        let s: f64 = m.rates.iter().sum();
        assert!((s - 80.0).abs() < 1e-9 * 80.0);
    }

    #[test]
    fn steady_single_atom() {
        let d = DriveSpec::uniform(1, 0.3, 0.0).unwrap();
        let b = steady_state(&single(), &d).unwrap();
        assert!((b.b[0] - Complex64::new(0.0, 0.3)).norm() < 1e-15);
        let d = DriveSpec::uniform(1, 0.3, 1.0).unwrap();
        let b = steady_state(&single(), &d).unwrap();
        assert!((b.b[0].norm_sqr() - 0.09 / 5.0).abs() < 1e-15);
    }

    #[test]
    fn steady_decoupled_pair() {
        let c = free_space_coupling(&pair(500.0), &z_pol()).unwrap();
        let d = DriveSpec::uniform(2, 0.1, 0.0).unwrap();
        let b = steady_state(&c, &d).unwrap();
        for z in b.b.iter() {
            assert!((z - Complex64::new(0.0, 0.1)).norm() < 0.01 * 0.1);
        }
    }

    #[test]
    fn steady_residual_small() {
        let c = cloud(40, 3);
        let d = DriveSpec::uniform(40, 0.2, 0.7).unwrap();
        let b = steady_state(&c, &d).unwrap();
        let a = build_evolution_matrix(&c, 0.7).mapv(|z| -z);
        let r = &d.vector() - &a.dot(&b.b);
        assert!(linalg::vec_norm(&r) < 1e-10 * linalg::vec_norm(&d.vector()));
    }

    #[test]
    fn steady_reports_dark_mode() {
        let e = make_lattice(LatticeKind::Chain { count: 4, xi: PI }, (1, 1)).unwrap();
        let c = waveguide_coupling(&e, &ChiralSpec::new(1.0, 0.0, 0.0).unwrap()).unwrap();
        let d = DriveSpec::uniform(4, 0.01, 0.0).unwrap();
        match steady_state(&c, &d) {
            Err(Error::Singular { eigenvalue, .. }) => assert!(eigenvalue.norm() < 1e-10),
            other => panic!("expected singular, got {other:?}"),
        }
    }

    #[test]
    fn every_eigenmode_decays_at_its_rate() {
        let c = cloud(12, 5);
        let m = eigenmodes(&c).unwrap();
        let times = [0.5, 1.0, 3.0];
        for n in 0..m.len() {
            let b0 = DipoleState::new(m.mode(n), 0.0);
            let traj = evolve(&c, &DriveSpec::none(12), &b0, &times).unwrap();
            for s in traj {
                let want = (-m.rates[n] * s.time).exp();
                assert!((s.total_population() - want).abs() < 1e-8, "mode {n}");
            }
        }
    }

    #[test]
    fn single_atom_free_decay() {
        let b0 = DipoleState::new(Array1::from(vec![Complex64::new(1.0, 0.0)]), 0.0);
        let traj = evolve(&single(), &DriveSpec::none(1), &b0, &[0.0, 1.0, 2.5]).unwrap();
        for s in traj {
            assert!((s.total_population() - (-s.time).exp()).abs() < 1e-12);
        }
    }

    #[test]
    fn driven_evolution_reaches_steady_state() {
        let c = cloud(8, 2);
        let d = DriveSpec::uniform(8, 0.05, 0.3).unwrap();
        let ss = steady_state(&c, &d).unwrap();
        let slowest = eigenmodes(&c).unwrap().rates.iter().cloned().fold(f64::INFINITY, f64::min);
        let t_end = 40.0 / slowest;
        let traj = evolve(&c, &d, &DipoleState::new(Array1::zeros(8), 0.0), &[t_end]).unwrap();
        let diff = linalg::vec_norm(&(&traj[0].b - &ss.b));
        assert!(diff < 1e-6, "{diff}");
    }

    #[test]
    fn evolve_rejects_decreasing_grid() {
        let b0 = DipoleState::new(Array1::zeros(1), 0.0);
        assert!(evolve(&single(), &DriveSpec::none(1), &b0, &[1.0, 0.5]).is_err());
    }

    #[test]
    fn power_of_single_atom() {
        let s = DipoleState::new(Array1::from(vec![Complex64::new(0.3, 0.4)]), 0.0);
        assert!((emitted_power(&single(), &s).unwrap() - 0.25).abs() < 1e-15);
    }

    #[test]
    fn power_of_dark_mode_vanishes() {
        let e = make_lattice(LatticeKind::Chain { count: 10, xi: PI }, (1, 1)).unwrap();
        let c = waveguide_coupling(&e, &ChiralSpec::new(1.0, 0.0, 0.0).unwrap()).unwrap();
        let m = eigenmodes(&c).unwrap();
        let p = emitted_power(&c, &DipoleState::new(m.mode(0), 0.0)).unwrap();
        assert!(p.abs() < 1e-10);
    }

    #[test]
    fn power_rejects_chiral() {
        let e = make_lattice(LatticeKind::Chain { count: 3, xi: 1.0 }, (1, 1)).unwrap();
        let c = waveguide_coupling(&e, &ChiralSpec::new(1.0, 0.5, 0.0).unwrap()).unwrap();
        let s = DipoleState::new(Array1::zeros(3), 0.0);
        assert!(matches!(emitted_power(&c, &s), Err(Error::Unsupported(_))));
    }

    #[test]
    fn undriven_population_non_increasing() {
        let c = cloud(15, 8);
        let mut b = Array1::zeros(15);
        for k in 0..15 {
            b[k] = Complex64::new((k as f64).sin(), (k as f64 * 0.3).cos());
        }
        let times: Vec<f64> = (0..40).map(|k| k as f64 * 0.1).collect();
        let traj = evolve(&c, &DriveSpec::none(15), &DipoleState::new(b, 0.0), &times).unwrap();
        for w in traj.windows(2) {
            assert!(w[1].total_population() <= w[0].total_population() + 1e-12);
        }
    }

    #[test]
    fn gaussian_mode_is_unit_peak() {
        assert_eq!(gaussian_mode(&[0.0; 3], 3.0), Complex64::new(1.0, 0.0));
        let u = gaussian_mode(&[3.0, 0.0, 0.0], 3.0);
        assert!((u.re - (-1.0f64).exp()).abs() < 1e-15);
        assert!(gaussian_mode(&[1.0, 2.0, 5.0], 2.0).norm() <= 1.0);
    }

    #[test]
    fn drive_validation() {
        assert!(DriveSpec::new(1.0, 0.0, vec![Complex64::new(1.5, 0.0)]).is_err());
        assert!(DriveSpec::single_site(3, 3, 1.0, 0.0).is_err());
        let e = pair(1.0);
        assert!(DriveSpec::plane_wave(&e, 1.0, 0.0, [0.0, 0.0, 2.0]).is_err());
        let d = DriveSpec::plane_wave(&e, 1.0, 0.0, [1.0, 0.0, 0.0]).unwrap();
        assert!((d.phases[1] - Complex64::from_polar(1.0, 1.0)).norm() < 1e-15);
    }
}
