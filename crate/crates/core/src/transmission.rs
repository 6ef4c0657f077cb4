//! Forward transmission of a weak probe through a driven ensemble.

use ndarray::{Array1, Array2};
use ndarray_linalg::Solve;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dynamics::{gaussian_mode, steady_state, DipoleState, DriveSpec};
use crate::error::{Error, Result};
use crate::geometry::{make_lattice, AtomEnsemble, LatticeKind, PolarizationSpec};
use crate::kernel::{free_space_coupling, CouplingMatrix};

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Resonant single-atom scattering cross-section `6π/k²` (k = 1).
pub const SIGMA_0: f64 = 6.0 * std::f64::consts::PI;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TransmissionResult {
    pub t: Complex64,
    pub od: f64,
    pub detuning: f64,
}

impl TransmissionResult {
    pub fn new(t: Complex64, detuning: f64) -> Self {
        Self {
            t,
            od: -t.norm_sqr().ln(),
            detuning,
        }
    }

    pub fn abs2(&self) -> f64 {
        self.t.norm_sqr()
    }
}

fn check(ensemble: &AtomEnsemble, b: &DipoleState, drive: &DriveSpec) -> Result<()> {
    if b.b.len() != ensemble.n() {
        return Err(Error::invalid("state size does not match ensemble"));
    }
    if drive.rabi == 0.0 || !drive.rabi.is_finite() {
        return Err(Error::invalid("transmission needs a non-zero Rabi frequency"));
    }
    Ok(())
}

/// Disk-averaged plane-wave transmission `T = 1 + i (3/(Ω₀R²)) Σ b_μ e^{−i z_μ}`.
pub fn transmission_plane_wave(
    ensemble: &AtomEnsemble,
    b: &DipoleState,
    drive: &DriveSpec,
    disk_radius: f64,
) -> Result<TransmissionResult> {
    if !(disk_radius > 0.0) || !disk_radius.is_finite() {
        return Err(Error::invalid(format!("disk radius must be > 0, got {disk_radius}")));
    }
    check(ensemble, b, drive)?;
    let sum: Complex64 = ensemble
        .positions()
        .iter()
        .zip(b.b.iter())
        .map(|(r, bm)| bm * Complex64::from_polar(1.0, -r[2]))
        .sum();
    let t = 1.0 + I * (3.0 / (drive.rabi * disk_radius * disk_radius)) * sum;
    Ok(TransmissionResult::new(t, drive.detuning))
}

/// Projection onto the unit-peak paraxial mode of waist `w0`:
/// `T = 1 + i (6/(Ω₀ w0²)) Σ u*(r_μ) b_μ e^{−i z_μ}`.
pub fn gaussian_mode_transmission(
    ensemble: &AtomEnsemble,
    b: &DipoleState,
    drive: &DriveSpec,
    w0: f64,
) -> Result<TransmissionResult> {
    if !(w0 > 0.0) || !w0.is_finite() {
        return Err(Error::invalid(format!("beam waist must be > 0, got {w0}")));
    }
    check(ensemble, b, drive)?;
    let sum: Complex64 = ensemble
        .positions()
        .iter()
        .zip(b.b.iter())
        .map(|(r, bm)| gaussian_mode(r, w0).conj() * bm * Complex64::from_polar(1.0, -r[2]))
        .sum();
    let t = 1.0 + I * (6.0 / (drive.rabi * w0 * w0)) * sum;
    Ok(TransmissionResult::new(t, drive.detuning))
}

/// How the probe is defined and projected.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Probe {
    PlaneWave { radius: f64 },
    Gaussian { waist: f64 },
}

impl Probe {
    pub fn drive(&self, ensemble: &AtomEnsemble, rabi: f64, detuning: f64) -> Result<DriveSpec> {
        match *self {
            Probe::PlaneWave { .. } => DriveSpec::plane_wave(ensemble, rabi, detuning, [0.0, 0.0, 1.0]),
            Probe::Gaussian { waist } => DriveSpec::gaussian_beam(ensemble, rabi, detuning, waist),
        }
    }

    pub fn transmission(&self, ensemble: &AtomEnsemble, b: &DipoleState, drive: &DriveSpec) -> Result<TransmissionResult> {
        match *self {
            Probe::PlaneWave { radius } => transmission_plane_wave(ensemble, b, drive, radius),
            Probe::Gaussian { waist } => gaussian_mode_transmission(ensemble, b, drive, waist),
        }
    }
}

/// Steady state and transmission at one detuning.
pub fn transmission_at(
    ensemble: &AtomEnsemble,
    coupling: &CouplingMatrix,
    probe: &Probe,
    rabi: f64,
    detuning: f64,
) -> Result<TransmissionResult> {
    let drive = probe.drive(ensemble, rabi, detuning)?;
    let b = steady_state(coupling, &drive)?;
    probe.transmission(ensemble, &b, &drive)
}

/// `y = B − A / (1 + ((Δ − c)/(w/2))²)` fitted to `|T|²`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LorentzianFit {
    pub center: f64,
    pub width: f64,
    pub depth: f64,
    pub baseline: f64,
    pub rms_residual: f64,
    pub iterations: usize,
}

impl LorentzianFit {
    pub fn eval(&self, x: f64) -> f64 {
        lorentz(&[self.baseline, self.depth, self.center, self.width], x)
    }
}

fn lorentz(p: &[f64; 4], x: f64) -> f64 {
    let u = (x - p[2]) / (0.5 * p[3]);
    p[0] - p[1] / (1.0 + u * u)
}

fn lorentz_grad(p: &[f64; 4], x: f64) -> [f64; 4] {
    let hw = 0.5 * p[3];
    let u = (x - p[2]) / hw;
    let q = 1.0 + u * u;
    let dq = p[1] / (q * q);
    // ∂/∂c and ∂/∂w through u
    [1.0, -1.0 / q, -dq * 2.0 * u / hw, -dq * 2.0 * u * u / p[3]]
}

/// Levenberg–Marquardt least squares for a Lorentzian dip.
pub fn fit_lorentzian_dip(x: &[f64], y: &[f64]) -> Result<LorentzianFit> {
    if x.len() != y.len() {
        return Err(Error::invalid("fit data lengths differ"));
    }
    if x.len() < 5 {
        return Err(Error::invalid("Lorentzian fit needs at least 5 points"));
    }
    if x.iter().chain(y).any(|v| !v.is_finite()) {
        return Err(Error::Fit("data contain non-finite values".into()));
    }
    let (imin, &ymin) = y
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.total_cmp(b.1))
        .expect("non-empty");
    let ymax = y.iter().cloned().fold(f64::MIN, f64::max);
    let half = 0.5 * (ymax + ymin);
    let mut lo = imin;
    while lo > 0 && y[lo] < half {
        lo -= 1;
    }
    let mut hi = imin;
    while hi + 1 < y.len() && y[hi] < half {
        hi += 1;
    }
    let span = x[x.len() - 1] - x[0];
    let mut width = (x[hi] - x[lo]).abs();
    if !(width > 0.0) {
        width = span.abs() / 10.0;
    }
    let mut p = [ymax, ymax - ymin, x[imin], width];
    let cost = |p: &[f64; 4]| x.iter().zip(y).map(|(xi, yi)| (yi - lorentz(p, *xi)).powi(2)).sum::<f64>();
    let mut c = cost(&p);
    let mut lambda = 1e-3;
    for it in 0..500 {
        let mut jtj = Array2::<f64>::zeros((4, 4));
        let mut jtr = Array1::<f64>::zeros(4);
        for (xi, yi) in x.iter().zip(y) {
            let g = lorentz_grad(&p, *xi);
            let r = yi - lorentz(&p, *xi);
            for a in 0..4 {
                jtr[a] += g[a] * r;
                for b in 0..4 {
                    jtj[[a, b]] += g[a] * g[b];
                }
            }
        }
        let mut improved = false;
        while lambda < 1e12 {
            let mut m = jtj.clone();
            for a in 0..4 {
                m[[a, a]] += lambda * jtj[[a, a]].max(1e-30);
            }
            let step = match m.solve(&jtr) {
                Ok(s) => s,
                Err(_) => {
                    lambda *= 10.0;
                    continue;
                }
            };
            let trial = [p[0] + step[0], p[1] + step[1], p[2] + step[2], p[3] + step[3]];
            let ct = cost(&trial);
            if trial[3] > 0.0 && ct <= c {
                let rel = (c - ct) / c.max(1e-300);
                let small_step = (0..4).all(|k| step[k].abs() <= 1e-12 * (p[k].abs() + 1e-12));
                p = trial;
                c = ct;
                lambda = (lambda / 10.0).max(1e-12);
                improved = true;
                if rel < 1e-15 || small_step {
                    return finish(p, c, x.len(), it + 1);
                }
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            // No descent direction left: converged to machine precision.
            return finish(p, c, x.len(), it + 1);
        }
    }
    Err(Error::Fit("Levenberg-Marquardt did not converge in 500 iterations".into()))
}

fn finish(p: [f64; 4], cost: f64, n: usize, iterations: usize) -> Result<LorentzianFit> {
    if !(p[3] > 0.0) || !p.iter().all(|v| v.is_finite()) {
        return Err(Error::Fit(format!("fit converged to unphysical parameters {p:?}")));
    }
    Ok(LorentzianFit {
        baseline: p[0],
        depth: p[1],
        center: p[2],
        width: p[3],
        rms_residual: (cost / n as f64).sqrt(),
        iterations,
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct SpectrumScan {
    pub points: Vec<TransmissionResult>,
    pub fit: Option<LorentzianFit>,
    pub fit_error: Option<String>,
}

/// Per-detuning steady state and transmission, then a Lorentzian fit of `|T|²`.
/// A failed fit is reported in `fit_error` with the raw points kept.
pub fn spectrum_scan(
    ensemble: &AtomEnsemble,
    coupling: &CouplingMatrix,
    probe: &Probe,
    rabi: f64,
    detunings: &[f64],
) -> Result<SpectrumScan> {
    if detunings.len() < 5 {
        return Err(Error::invalid("spectrum scan needs at least 5 detunings"));
    }
    if coupling.n() != ensemble.n() {
        return Err(Error::invalid("ensemble and coupling sizes differ"));
    }
    let points = detunings
        .par_iter()
        .map(|&d| transmission_at(ensemble, coupling, probe, rabi, d))
        .collect::<Result<Vec<_>>>()?;
    let y: Vec<f64> = points.iter().map(|p| p.abs2()).collect();
    let (fit, fit_error) = match fit_lorentzian_dip(detunings, &y) {
        Ok(f) => (Some(f), None),
        Err(e) => (None, Some(e.to_string())),
    };
    Ok(SpectrumScan { points, fit, fit_error })
}

#[derive(Debug, Clone, Serialize)]
pub struct MirrorScan {
    pub side: usize,
    pub waist: f64,
    pub spacings_over_lambda: Vec<f64>,
    pub abs2: Vec<f64>,
    pub points: Vec<TransmissionResult>,
    /// Interior local minima of `|T|²`, refined by a parabola through the
    /// three neighbouring grid points.
    pub minima: Vec<f64>,
}

/// Centred `side × side` square array in the `z = 0` plane.
pub fn square_array(side: usize, spacing: f64) -> Result<AtomEnsemble> {
    let e = make_lattice(LatticeKind::Square { a: spacing }, (side, side))?;
    Ok(e.centered())
}

/// Resonant Gaussian-beam transmission through square arrays over a grid of
/// spacings (`a/λ`), with atoms polarised along `x`.
pub fn mirror_scan(side: usize, spacings_over_lambda: &[f64], waist: f64) -> Result<MirrorScan> {
    if side == 0 {
        return Err(Error::invalid("array side must be > 0"));
    }
    if spacings_over_lambda.iter().any(|a| !(*a > 0.0)) {
        return Err(Error::invalid("spacings must be > 0"));
    }
    let pol = PolarizationSpec::linear([1.0, 0.0, 0.0])?;
    let probe = Probe::Gaussian { waist };
    let points = spacings_over_lambda
        .par_iter()
        .map(|&a| {
            let e = square_array(side, a * 2.0 * std::f64::consts::PI)?;
            let c = free_space_coupling(&e, &pol)?;
            transmission_at(&e, &c, &probe, 1.0, 0.0)
        })
        .collect::<Result<Vec<_>>>()?;
    let abs2: Vec<f64> = points.iter().map(|p| p.abs2()).collect();
    Ok(MirrorScan {
        side,
        waist,
        minima: local_minima(spacings_over_lambda, &abs2),
        spacings_over_lambda: spacings_over_lambda.to_vec(),
        abs2,
        points,
    })
}

/// Interior strict local minima with parabolic refinement.
pub fn local_minima(x: &[f64], y: &[f64]) -> Vec<f64> {
    let mut out = Vec::new();
    for k in 1..y.len().saturating_sub(1) {
        if y[k] < y[k - 1] && y[k] <= y[k + 1] {
            let (x0, x1, x2) = (x[k - 1], x[k], x[k + 1]);
            let (y0, y1, y2) = (y[k - 1], y[k], y[k + 1]);
            let den = (x0 - x1) * (x0 - x2) * (x1 - x2);
            let a = (x2 * (y1 - y0) + x1 * (y0 - y2) + x0 * (y2 - y1)) / den;
            let b = (x2 * x2 * (y0 - y1) + x1 * x1 * (y2 - y0) + x0 * x0 * (y1 - y2)) / den;
            let xm = if a > 0.0 { -b / (2.0 * a) } else { x1 };
            out.push(if xm.is_finite() && xm > x0 && xm < x2 { xm } else { x1 });
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dynamics::eigenmodes;
    use crate::geometry::make_uniform_cylinder;

    fn z_pol() -> PolarizationSpec {
        PolarizationSpec::linear([1.0, 0.0, 0.0]).unwrap()
    }

    #[test]
    fn empty_ensemble_transmits() {
        let e = AtomEnsemble::empty();
        let b = DipoleState::new(Array1::zeros(0), 0.0);
        let d = DriveSpec::uniform(0, 1.0, 0.0).unwrap();
        assert_eq!(transmission_plane_wave(&e, &b, &d, 3.0).unwrap().t, Complex64::new(1.0, 0.0));
        assert_eq!(gaussian_mode_transmission(&e, &b, &d, 3.0).unwrap().t, Complex64::new(1.0, 0.0));
    }

    #[test]
    fn od_identity() {
        let r = TransmissionResult::new(Complex64::new(0.3, -0.4), 0.0);
        assert!((r.od + 0.25f64.ln()).abs() < 1e-12);
        assert!(((-r.od).exp() - r.abs2()).abs() < 1e-12);
    }

    #[test]
    fn rejects_bad_radius_and_waist() {
        let e = AtomEnsemble::new(vec![[0.0; 3]], "one").unwrap();
        let b = DipoleState::new(Array1::zeros(1), 0.0);
        let d = DriveSpec::uniform(1, 1.0, 0.0).unwrap();
        assert!(transmission_plane_wave(&e, &b, &d, 0.0).is_err());
        assert!(gaussian_mode_transmission(&e, &b, &d, -1.0).is_err());
    }

    #[test]
    fn dilute_noninteracting_disk() {
        let target = 0.1;
        let n = 100;
        let radius = (SIGMA_0 * n as f64 / (std::f64::consts::PI * target)).sqrt();
        let e = make_uniform_cylinder(n, radius, 0.0, 1).unwrap();
        let c = free_space_coupling(&e, &z_pol()).unwrap().noninteracting();
        let r = transmission_at(&e, &c, &Probe::PlaneWave { radius }, 0.1, 0.0).unwrap();
        assert!((r.t - Complex64::new(1.0 - target / 2.0, 0.0)).norm() < 1e-12);
    }

    #[test]
    fn single_atom_gaussian_matches_plane_wave_area() {
        let e = AtomEnsemble::new(vec![[0.0; 3]], "one").unwrap();
        let c = free_space_coupling(&e, &z_pol()).unwrap();
        let w0 = 40.0;
        let g = transmission_at(&e, &c, &Probe::Gaussian { waist: w0 }, 0.1, 0.0).unwrap();
        let p = transmission_at(&e, &c, &Probe::PlaneWave { radius: w0 / 2f64.sqrt() }, 0.1, 0.0).unwrap();
        assert!((g.t - p.t).norm() < 0.01 * (1.0 - p.t).norm());
    }

    #[test]
    fn wide_beam_matches_disk_formula() {
        let w0 = 200.0;
        let e = make_uniform_cylinder(60, 20.0, 0.0, 3).unwrap();
        let c = free_space_coupling(&e, &z_pol()).unwrap();
        let g = transmission_at(&e, &c, &Probe::Gaussian { waist: w0 }, 0.1, 0.0).unwrap();
        let p = transmission_at(&e, &c, &Probe::PlaneWave { radius: w0 / 2f64.sqrt() }, 0.1, 0.0).unwrap();
        assert!((g.t - p.t).norm() < 0.02 * (1.0 - p.t).norm());
    }

    #[test]
    fn lorentzian_fit_recovers_parameters() {
        let truth = [0.95, 0.4, 0.3, 1.7];
        let x: Vec<f64> = (0..61).map(|k| -6.0 + 0.2 * k as f64).collect();
        let y: Vec<f64> = x.iter().map(|v| lorentz(&truth, *v)).collect();
        let f = fit_lorentzian_dip(&x, &y).unwrap();
        assert!((f.center - 0.3).abs() < 1e-8);
        assert!((f.width - 1.7).abs() < 1e-8);
        assert!((f.depth - 0.4).abs() < 1e-8);
    }

    #[test]
    fn lorentzian_gradient_matches_finite_differences() {
        let p = [1.0, 0.5, -0.2, 0.8];
        for x in [-1.0, 0.0, 0.4] {
            let g = lorentz_grad(&p, x);
            for k in 0..4 {
                let mut q = p;
                let h = 1e-6;
                q[k] += h;
                let up = lorentz(&q, x);
                q[k] -= 2.0 * h;
                let dn = lorentz(&q, x);
                assert!((g[k] - (up - dn) / (2.0 * h)).abs() < 1e-7);
            }
        }
    }

    #[test]
    fn fit_reports_too_few_points() {
        assert!(fit_lorentzian_dip(&[0.0, 1.0], &[1.0, 0.5]).is_err());
    }

    #[test]
    fn single_atom_spectrum_has_unit_width() {
        let e = AtomEnsemble::new(vec![[0.0; 3]], "one").unwrap();
        let c = free_space_coupling(&e, &z_pol()).unwrap();
        let det: Vec<f64> = (0..41).map(|k| -4.0 + 0.2 * k as f64).collect();
        let s = spectrum_scan(&e, &c, &Probe::PlaneWave { radius: 3.0 }, 0.01, &det).unwrap();
        let f = s.fit.unwrap();
        assert!(f.center.abs() < 1e-6);
        assert!((f.width - 1.0).abs() < 0.02);
    }

    #[test]
    fn pair_spectrum_centre_follows_symmetric_mode() {
        let e = AtomEnsemble::new(vec![[0.0; 3], [0.3, 0.0, 0.0]], "pair").unwrap();
        let pol = PolarizationSpec::linear([0.0, 0.0, 1.0]).unwrap();
        let c = free_space_coupling(&e, &pol).unwrap();
        let modes = eigenmodes(&c).unwrap();
        // The symmetric mode is the bright (fast) one for a pair.
        let shift = modes.shifts[1];
        let det: Vec<f64> = (0..161).map(|k| shift - 8.0 + 0.1 * k as f64).collect();
        let s = spectrum_scan(&e, &c, &Probe::PlaneWave { radius: 3.0 }, 0.01, &det).unwrap();
        let f = s.fit.unwrap();
        assert!((f.center - shift).abs() < 0.1 * shift.abs(), "{} vs {shift}", f.center);
    }

    #[test]
    fn minima_detection_with_refinement() {
        let x: Vec<f64> = (0..11).map(|k| k as f64 * 0.1).collect();
        let y: Vec<f64> = x.iter().map(|v| (v - 0.33).powi(2)).collect();
        let m = local_minima(&x, &y);
        assert_eq!(m.len(), 1);
        assert!((m[0] - 0.33).abs() < 1e-12);
    }
}
