//! Pairwise coupling matrices.
//!
//! Rates are in units of the single-atom total decay rate (`Γ` in free space,
//! `Γ_1D + γ_ng` on the waveguide is whatever the caller picks as unit). The
//! complex coupling is `J = γ/2 + iΩ`; a single-excitation amplitude obeys
//! `db/dt = iΔ b - J b + d`.

use std::path::Path;

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{fmt_f64, validity_warning, AtomEnsemble, PolarizationSpec, Vec3};

const I: Complex64 = Complex64::new(0.0, 1.0);

pub type Tensor3 = [[Complex64; 3]; 3];

/// Complex `N×N` coupling `J` together with the Lindblad decay matrix.
///
/// `decay` is the Hermitian positive semidefinite matrix `G` with
/// `L(ρ) = Σ G_μν (σ_ν ρ σ†_μ - ½{σ†_μ σ_ν, ρ})`; the coherent exchange is
/// `h = -i (J - G/2)`. For reciprocal couplings `G = 2 Re J`.
#[derive(Debug, Clone)]
pub struct CouplingMatrix {
    j: Array2<Complex64>,
    decay: Array2<Complex64>,
    reciprocal: bool,
    warnings: Vec<String>,
}

impl CouplingMatrix {
    /// Assemble from raw parts. `decay` must be Hermitian and `J - G/2` anti-Hermitian.
    pub fn from_parts(j: Array2<Complex64>, decay: Array2<Complex64>, reciprocal: bool) -> Result<Self> {
        let n = j.nrows();
        if j.ncols() != n || decay.dim() != (n, n) {
            return Err(Error::invalid("coupling matrices must be square and of equal size"));
        }
        let scale = j.iter().map(|z| z.norm()).fold(1.0, f64::max);
        for a in 0..n {
            for b in 0..n {
                let herm = decay[[a, b]] - decay[[b, a]].conj();
                let coh = (j[[a, b]] - 0.5 * decay[[a, b]]) + (j[[b, a]] - 0.5 * decay[[b, a]]).conj();
                if herm.norm() > 1e-10 * scale || coh.norm() > 1e-10 * scale {
                    return Err(Error::invalid(format!(
                        "inconsistent coupling/decay matrices at ({a}, {b})"
                    )));
                }
            }
        }
        Ok(Self {
            j,
            decay,
            reciprocal,
            warnings: Vec::new(),
        })
    }

    /// Reciprocal coupling from a symmetric complex `J` (decay = 2 Re J).
    pub fn reciprocal_from_j(j: Array2<Complex64>) -> Result<Self> {
        let decay = j.mapv(|z| Complex64::new(2.0 * z.re, 0.0));
        Self::from_parts(j, decay, true)
    }

    pub fn n(&self) -> usize {
        self.j.nrows()
    }

    pub fn j(&self) -> &Array2<Complex64> {
        &self.j
    }

    pub fn decay_matrix(&self) -> &Array2<Complex64> {
        &self.decay
    }

    /// `γ = 2 Re J`.
    pub fn gamma(&self) -> Array2<f64> {
        self.j.mapv(|z| 2.0 * z.re)
    }

    /// `Ω = Im J` with the (renormalised) self term set to zero.
    pub fn omega(&self) -> Array2<f64> {
        let mut o = self.j.mapv(|z| z.im);
        for k in 0..self.n() {
            o[[k, k]] = 0.0;
        }
        o
    }

    /// Coherent exchange `h = -i (J - G/2)`, Hermitian.
    pub fn coherent_part(&self) -> Array2<Complex64> {
        let mut h = Array2::zeros(self.j.dim());
        for ((a, b), z) in self.j.indexed_iter() {
            h[[a, b]] = -I * (*z - 0.5 * self.decay[[a, b]]);
        }
        h
    }

    pub fn is_reciprocal(&self) -> bool {
        self.reciprocal
    }

    pub fn warnings(&self) -> &[String] {
        &self.warnings
    }

    /// Sum of `Re J_μμ`, i.e. `N/2` times the single-atom total rate.
    pub fn half_total_rate(&self) -> f64 {
        self.j.diag().iter().map(|z| z.re).sum()
    }

    /// Same diagonal, no exchange: independent emitters.
    pub fn noninteracting(&self) -> Self {
        let n = self.n();
        let mut j = Array2::zeros((n, n));
        let mut decay = Array2::zeros((n, n));
        for k in 0..n {
            j[[k, k]] = self.j[[k, k]];
            decay[[k, k]] = self.decay[[k, k]];
        }
        Self {
            j,
            decay,
            reciprocal: true,
            warnings: self.warnings.clone(),
        }
    }

    /// CSV with one row per matrix row and interleaved `re_k, im_k` columns.
    pub fn export_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_path(path)?;
        let n = self.n();
        let mut header = Vec::with_capacity(2 * n + 1);
        header.push("row".to_string());
        for k in 0..n {
            header.push(format!("re_{k}"));
            header.push(format!("im_{k}"));
        }
        w.write_record(&header)?;
        for a in 0..n {
            let mut rec = Vec::with_capacity(2 * n + 1);
            rec.push(a.to_string());
            for b in 0..n {
                rec.push(fmt_f64(self.j[[a, b]].re));
                rec.push(fmt_f64(self.j[[a, b]].im));
            }
            w.write_record(&rec)?;
        }
        w.flush()?;
        Ok(())
    }
}

/// Scalar decay and shift for a linear dipole `p̂` at separation `ξ` along `r̂`,
/// straight from the closed forms. Returns `(γ_μν, Ω_μν)` in units of `Γ`.
pub fn free_space_gamma_omega(xi: f64, cos_p_r: f64) -> (f64, f64) {
    let (s, c) = xi.sin_cos();
    let transverse = 1.0 - cos_p_r * cos_p_r;
    let near = 1.0 - 3.0 * cos_p_r * cos_p_r;
    let gamma = 1.5 * (transverse * s / xi + near * (c / (xi * xi) - s / (xi * xi * xi)));
    let omega = 0.75 * (-transverse * c / xi + near * (s / (xi * xi) + c / (xi * xi * xi)));
    (gamma, omega)
}

/// Free-space coupling of identically polarised emitters.
///
/// Linear polarisations use the scalar closed forms directly; circular ones
/// project the dyadic kernel. The diagonal is `Γ/2` (self shift renormalised
/// into the transition frequency).
pub fn free_space_coupling(ensemble: &AtomEnsemble, polarization: &PolarizationSpec) -> Result<CouplingMatrix> {
    polarization.validate()?;
    let n = ensemble.n();
    let pos = ensemble.positions();
    let rows: Vec<Vec<Complex64>> = match polarization {
        PolarizationSpec::Linear(p) => (0..n)
            .into_par_iter()
            .map(|a| {
                (0..n)
                    .map(|b| {
                        if a == b {
                            return Complex64::new(0.5, 0.0);
                        }
                        let r = sub(&pos[a], &pos[b]);
                        let xi = norm(&r);
                        let cos = dot(p, &r) / xi;
                        let (g, o) = free_space_gamma_omega(xi, cos);
                        Complex64::new(0.5 * g, o)
                    })
                    .collect()
            })
            .collect(),
        PolarizationSpec::CircularSigmaPlus | PolarizationSpec::CircularSigmaMinus => {
            let e = polarization.vector().expect("single transition");
            (0..n)
                .into_par_iter()
                .map(|a| {
                    (0..n)
                        .map(|b| {
                            if a == b {
                                return Complex64::new(0.5, 0.0);
                            }
                            let k = tensor_unchecked(&sub(&pos[a], &pos[b]));
                            project(&k, &e, &e)
                        })
                        .collect()
                })
                .collect()
        }
        PolarizationSpec::VTypePair => {
            return Err(Error::Unsupported(
                "V-type emitters are handled by the lattice band code; pick a single transition here".into(),
            ))
        }
    };
    let mut j = Array2::zeros((n, n));
    for (a, row) in rows.into_iter().enumerate() {
        for (b, z) in row.into_iter().enumerate() {
            j[[a, b]] = z;
        }
    }
    let mut c = CouplingMatrix::reciprocal_from_j(j)?;
    if let Some(w) = validity_warning(ensemble) {
        log::warn!("{w}");
        c.warnings.push(w);
    }
    Ok(c)
}

/// Dyadic kernel `K(r)` with `p̂*·K·p̂ = γ/2 + iΩ` for any unit `p̂`:
/// `K = (3/4) e^{iξ} [ -i/ξ (I - r̂r̂) + (1/ξ² + i/ξ³)(I - 3 r̂r̂) ]`.
pub fn free_space_tensor_kernel(r: Vec3) -> Result<Tensor3> {
    let xi = norm(&r);
    if !(xi > 0.0) {
        return Err(Error::Divergence("dyadic kernel evaluated at zero separation".into()));
    }
    Ok(tensor_unchecked(&r))
}

pub(crate) fn tensor_unchecked(r: &Vec3) -> Tensor3 {
    let xi = norm(r);
    let rh = [r[0] / xi, r[1] / xi, r[2] / xi];
    let phase = Complex64::from_polar(0.75, xi);
    let far = phase * Complex64::new(0.0, -1.0 / xi);
    let near = phase * Complex64::new(1.0 / (xi * xi), 1.0 / (xi * xi * xi));
    let mut k = [[Complex64::new(0.0, 0.0); 3]; 3];
    for a in 0..3 {
        for b in 0..3 {
            let delta = if a == b { 1.0 } else { 0.0 };
            let rr = rh[a] * rh[b];
            k[a][b] = far * (delta - rr) + near * (delta - 3.0 * rr);
        }
    }
    k
}

/// `u*·K·v`.
pub fn project(k: &Tensor3, u: &[Complex64; 3], v: &[Complex64; 3]) -> Complex64 {
    let mut acc = Complex64::new(0.0, 0.0);
    for a in 0..3 {
        for b in 0..3 {
            acc += u[a].conj() * k[a][b] * v[b];
        }
    }
    acc
}

/// Guided-mode rates of a chirally coupled waveguide.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ChiralSpec {
    /// Total guided rate `Γ_1D = γ_L + γ_R`.
    pub gamma_1d: f64,
    /// Directionality `D = (γ_R - γ_L)/(γ_R + γ_L)`.
    pub d_factor: f64,
    /// Non-guided loss `γ_ng`.
    #[serde(default)]
    pub gamma_ng: f64,
}

impl ChiralSpec {
    pub fn new(gamma_1d: f64, d_factor: f64, gamma_ng: f64) -> Result<Self> {
        let s = Self {
            gamma_1d,
            d_factor,
            gamma_ng,
        };
        s.validate()?;
        Ok(s)
    }

    /// Build from the left/right/non-guided rates.
    pub fn from_rates(gamma_l: f64, gamma_r: f64, gamma_ng: f64) -> Result<Self> {
        if !(gamma_l >= 0.0 && gamma_r >= 0.0) {
            return Err(Error::invalid("guided rates must be >= 0"));
        }
        let g = gamma_l + gamma_r;
        let d = if g > 0.0 { (gamma_r - gamma_l) / g } else { 0.0 };
        Self::new(g, d, gamma_ng)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.gamma_1d >= 0.0) || !self.gamma_1d.is_finite() {
            return Err(Error::invalid(format!("Γ_1D must be >= 0, got {}", self.gamma_1d)));
        }
        if !(-1.0..=1.0).contains(&self.d_factor) {
            return Err(Error::invalid(format!("directionality must lie in [-1, 1], got {}", self.d_factor)));
        }
        if !(self.gamma_ng >= 0.0) || !self.gamma_ng.is_finite() {
            return Err(Error::invalid(format!("γ_ng must be >= 0, got {}", self.gamma_ng)));
        }
        Ok(())
    }

    pub fn gamma_l(&self) -> f64 {
        0.5 * self.gamma_1d * (1.0 - self.d_factor)
    }

    pub fn gamma_r(&self) -> f64 {
        0.5 * self.gamma_1d * (1.0 + self.d_factor)
    }

    pub fn total_rate(&self) -> f64 {
        self.gamma_1d + self.gamma_ng
    }
}

/// Axis coordinates of a collinear ensemble, oriented so the axis points
/// along the first non-zero component of the line direction.
pub fn chain_coordinates(chain: &AtomEnsemble) -> Result<Vec<f64>> {
    let pos = chain.positions();
    if pos.len() < 2 {
        return Ok(vec![0.0; pos.len()]);
    }
    let origin = pos[0];
    let (far, span) = pos
        .iter()
        .map(|p| norm(&sub(p, &origin)))
        .enumerate()
        .fold((0, 0.0), |acc, (i, d)| if d > acc.1 { (i, d) } else { acc });
    let mut u = sub(&pos[far], &origin);
    for c in &mut u {
        *c /= span;
    }
    if let Some(first) = u.iter().find(|c| c.abs() > 1e-12) {
        if *first < 0.0 {
            u = u.map(|c| -c);
        }
    }
    let mut xs = Vec::with_capacity(pos.len());
    for (i, p) in pos.iter().enumerate() {
        let d = sub(p, &origin);
        let x = dot(&u, &d);
        let perp = [d[0] - x * u[0], d[1] - x * u[1], d[2] - x * u[2]];
        if norm(&perp) > 1e-9 * span.max(1.0) {
            return Err(Error::invalid(format!("atom {i} is off the waveguide axis")));
        }
        xs.push(x);
    }
    Ok(xs)
}

/// Waveguide coupling `J_μν = γ_R e^{i x_μν}` for `x_μ > x_ν` and
/// `γ_L e^{-i x_μν}` for `x_μ < x_ν`, diagonal `(Γ_1D + γ_ng)/2`.
/// At `D = 0` this is `(Γ_1D/2)[cos x_μν + i sin|x_μν|]`.
pub fn waveguide_coupling(chain: &AtomEnsemble, spec: &ChiralSpec) -> Result<CouplingMatrix> {
    spec.validate()?;
    let x = chain_coordinates(chain)?;
    let n = x.len();
    let (gl, gr) = (spec.gamma_l(), spec.gamma_r());
    let mut j = Array2::zeros((n, n));
    let mut decay = Array2::zeros((n, n));
    for a in 0..n {
        for b in 0..n {
            let dx = x[a] - x[b];
            let fwd = Complex64::from_polar(1.0, dx);
            decay[[a, b]] = gr * fwd + gl * fwd.conj();
            j[[a, b]] = if a == b {
                Complex64::new(0.5 * spec.total_rate(), 0.0)
            } else if dx > 0.0 {
                gr * fwd
            } else {
                gl * fwd.conj()
            };
        }
        decay[[a, a]] += spec.gamma_ng;
    }
    Ok(CouplingMatrix {
        j,
        decay,
        reciprocal: spec.d_factor == 0.0,
        warnings: Vec::new(),
    })
}

pub(crate) fn sub(a: &Vec3, b: &Vec3) -> Vec3 {
    [a[0] - b[0], a[1] - b[1], a[2] - b[2]]
}

pub(crate) fn dot(a: &Vec3, b: &Vec3) -> f64 {
    a[0] * b[0] + a[1] * b[1] + a[2] * b[2]
}

pub(crate) fn norm(a: &Vec3) -> f64 {
    dot(a, a).sqrt()
}

#[cfg(test)]
mod tests {
    use std::f64::consts::PI;

    use ndarray_linalg::{Eigh, UPLO};
    use proptest::prelude::*;

    use super::*;
    use crate::geometry::{make_gaussian_cloud, make_lattice, sigma_minus, sigma_plus, LatticeKind};

    fn pair(xi: f64) -> AtomEnsemble {
        AtomEnsemble::new(vec![[0.0; 3], [xi, 0.0, 0.0]], "pair").unwrap()
    }

    fn perp() -> PolarizationSpec {
        PolarizationSpec::linear([0.0, 0.0, 1.0]).unwrap()
    }

    #[test]
    fn diagonal_is_half_rate() {
        let c = free_space_coupling(&pair(1.0), &perp()).unwrap();
        assert_eq!(c.j()[[0, 0]], Complex64::new(0.5, 0.0));
        assert_eq!(c.gamma()[[1, 1]], 1.0);
        assert_eq!(c.omega()[[0, 0]], 0.0);
    }

    #[test]
    fn two_pi_separation_by_direct_substitution() {
        let xi = 2.0 * PI;
        let c = free_space_coupling(&pair(xi), &perp()).unwrap();
        let gamma = 1.5 / (4.0 * PI * PI);
        // sin 2π = 0, cos 2π = 1
        let omega = 0.75 * (-1.0 / (2.0 * PI) + 1.0 / (8.0 * PI * PI * PI));
        assert!((c.gamma()[[0, 1]] - gamma).abs() < 1e-14);
        assert!((c.omega()[[0, 1]] - omega).abs() < 1e-14);
    }

    #[test]
    fn short_distance_limit() {
        let (g, _) = free_space_gamma_omega(1e-3, 0.0);
        assert!((g - 1.0).abs() < 1e-6);
        let (g, _) = free_space_gamma_omega(1e-3, 1.0);
        assert!((g - 1.0).abs() < 1e-6);
    }

    #[test]
    fn far_field_scales_as_inverse_distance() {
        // sample at peaks of sin (γ) and cos (Ω) near ξ = 200 and ξ = 400
        let (g1, _) = free_space_gamma_omega(63.5 * PI, 0.0);
        let (g2, _) = free_space_gamma_omega(127.5 * PI, 0.0);
        let ratio = g1 / g2;
        assert!((ratio - 2.0).abs() < 0.04, "γ ratio {ratio}");
        let (_, o1) = free_space_gamma_omega(64.0 * PI, 0.0);
        let (_, o2) = free_space_gamma_omega(128.0 * PI, 0.0);
        let ratio = o1 / o2;
        assert!((ratio - 2.0).abs() < 0.04, "Ω ratio {ratio}");
    }

    #[test]
    fn coincident_tensor_diverges() {
        assert!(matches!(free_space_tensor_kernel([0.0; 3]), Err(Error::Divergence(_))));
    }

    #[test]
    fn zero_polarization_rejected() {
        let r = free_space_coupling(&pair(1.0), &PolarizationSpec::Linear([0.0; 3]));
        assert!(matches!(r, Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn tensor_even_in_r() {
        let r = [0.3, -1.2, 0.7];
        let a = free_space_tensor_kernel(r).unwrap();
        let b = free_space_tensor_kernel([-0.3, 1.2, -0.7]).unwrap();
        for i in 0..3 {
            for j in 0..3 {
                assert!((a[i][j] - b[i][j]).norm() < 1e-15);
                assert!((a[i][j] - a[j][i]).norm() < 1e-15);
            }
        }
    }

    #[test]
    fn circular_basis_diagonal_along_z() {
        let k = free_space_tensor_kernel([0.0, 0.0, 2.3]).unwrap();
        let (p, m) = (sigma_plus(), sigma_minus());
        assert!(project(&k, &p, &m).norm() < 1e-15);
        assert!(project(&k, &m, &p).norm() < 1e-15);
        assert!(project(&k, &p, &p).norm() > 1e-3);
    }

    #[test]
    fn gamma_matrix_is_psd_and_symmetric() {
        let e = make_gaussian_cloud(60, [1.5, 1.5, 1.5], 4).unwrap();
        let c = free_space_coupling(&e, &PolarizationSpec::linear([1.0, 0.0, 0.0]).unwrap()).unwrap();
        let g = c.gamma();
        let o = c.omega();
        for a in 0..60 {
            assert_eq!(g[[a, a]], 1.0);
            for b in 0..60 {
                assert_eq!(g[[a, b]], g[[b, a]]);
                assert_eq!(o[[a, b]], o[[b, a]]);
            }
        }
        let (w, _) = g.eigh(UPLO::Lower).unwrap();
        assert!(w.iter().all(|&x| x >= -1e-10), "min eigenvalue {:?}", w[0]);
        assert!((c.half_total_rate() - 30.0).abs() < 1e-12);
    }

    #[test]
    fn circular_coupling_is_reciprocal() {
        let e = make_lattice(LatticeKind::Square { a: 1.3 }, (3, 3)).unwrap();
        let c = free_space_coupling(&e, &PolarizationSpec::CircularSigmaPlus).unwrap();
        for a in 0..9 {
            for b in 0..9 {
                assert!((c.j()[[a, b]] - c.j()[[b, a]]).norm() < 1e-14);
            }
        }
    }

    #[test]
    fn close_atoms_warn() {
        let c = free_space_coupling(&pair(0.1), &perp()).unwrap();
        assert_eq!(c.warnings().len(), 1);
    }

    #[test]
    fn reciprocal_waveguide_at_pi() {
        let e = make_lattice(LatticeKind::Chain { count: 3, xi: PI }, (1, 1)).unwrap();
        let c = waveguide_coupling(&e, &ChiralSpec::new(1.0, 0.0, 0.0).unwrap()).unwrap();
        let z = c.j()[[0, 1]];
        assert!((z.re + 0.5).abs() < 1e-15 && z.im.abs() < 1e-15);
        assert!(c.is_reciprocal());
    }

    #[test]
    fn fully_chiral_has_no_backward_coupling() {
        let e = make_lattice(LatticeKind::Chain { count: 6, xi: 0.7 }, (1, 1)).unwrap();
        let c = waveguide_coupling(&e, &ChiralSpec::new(1.0, 1.0, 0.1).unwrap()).unwrap();
        for a in 0..6 {
            for b in a + 1..6 {
                assert_eq!(c.j()[[a, b]], Complex64::new(0.0, 0.0));
                assert!(c.j()[[b, a]].norm() > 0.99);
            }
            assert!((c.j()[[a, a]].re - 0.55).abs() < 1e-15);
        }
        assert!(!c.is_reciprocal());
    }

    #[test]
    fn non_collinear_rejected() {
        let e = AtomEnsemble::new(vec![[0.0; 3], [1.0, 0.0, 0.0], [2.0, 0.5, 0.0]], "bent").unwrap();
        assert!(matches!(
            waveguide_coupling(&e, &ChiralSpec::new(1.0, 0.0, 0.0).unwrap()),
            Err(Error::InvalidArgument(_))
        ));
    }

    #[test]
    fn chiral_spec_rates() {
        let s = ChiralSpec::new(2.0, 0.2, 0.0).unwrap();
        assert!((s.gamma_l() - 0.8).abs() < 1e-15);
        assert!((s.gamma_r() - 1.2).abs() < 1e-15);
        assert!((s.gamma_l() + s.gamma_r() - 2.0).abs() < 1e-15);
        assert!(ChiralSpec::new(1.0, 1.5, 0.0).is_err());
        assert!(ChiralSpec::new(1.0, 0.0, -0.1).is_err());
        let s = ChiralSpec::from_rates(0.3, 0.7, 0.0).unwrap();
        assert!((s.d_factor - 0.4).abs() < 1e-15);
    }

    #[test]
    fn csv_export_shape() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("j.csv");
        let c = free_space_coupling(&pair(1.0), &perp()).unwrap();
        c.export_csv(&p).unwrap();
        let text = std::fs::read_to_string(&p).unwrap();
        let lines: Vec<&str> = text.lines().collect();
        assert_eq!(lines[0], "row,re_0,im_0,re_1,im_1");
        assert_eq!(lines.len(), 3);
    }

    fn unit(v: [f64; 3]) -> Option<[f64; 3]> {
        let n = norm(&v);
        (n > 1e-3).then(|| v.map(|c| c / n))
    }

    proptest! {
        #[test]
        fn tensor_projection_matches_scalar_closed_form(
            r in prop::array::uniform3(-8.0f64..8.0),
            p in prop::array::uniform3(-1.0f64..1.0),
        ) {
            let xi = norm(&r);
            prop_assume!(xi > 0.05);
            let Some(p) = unit(p) else { return Ok(()); };
            let k = free_space_tensor_kernel(r).unwrap();
            let pc = p.map(|c| Complex64::new(c, 0.0));
            let proj = project(&k, &pc, &pc);
            let (g, o) = free_space_gamma_omega(xi, dot(&p, &r) / xi);
            let want = Complex64::new(0.5 * g, o);
            prop_assert!((proj - want).norm() <= 1e-12 * want.norm().max(1.0));
        }

        #[test]
        fn reciprocal_chiral_form_equals_eq6(x in prop::collection::vec(0.0f64..40.0, 2..12)) {
            let mut xs = x.clone();
            xs.sort_by(f64::total_cmp);
            xs.dedup_by(|a, b| (*a - *b).abs() < 1e-6);
            prop_assume!(xs.len() >= 2);
            let e = AtomEnsemble::new(xs.iter().map(|&v| [v, 0.0, 0.0]).collect(), "chain").unwrap();
            let c = waveguide_coupling(&e, &ChiralSpec::new(1.3, 0.0, 0.0).unwrap()).unwrap();
            for a in 0..xs.len() {
                for b in 0..xs.len() {
                    if a == b { continue; }
                    let dx = xs[a] - xs[b];
                    let want = Complex64::new(0.65 * dx.cos(), 0.65 * dx.abs().sin());
                    prop_assert!((c.j()[[a, b]] - want).norm() < 1e-14);
                }
            }
        }
    }
}
