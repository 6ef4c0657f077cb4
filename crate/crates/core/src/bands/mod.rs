//! Bloch bands of infinite planar lattices of V-type (σ±) emitters.
//!
//! For quasi-momentum `k` the single-excitation Bloch matrix is
//!
//! ```text
//! H(k)_{(s,α),(s',α')} = δ (Z_α − i/2) − i Σ'_R e^{i k·R} ê*_α · K(R + d_s' − d_s) · ê_α'
//! ```
//!
//! with `K` the free-space dyadic kernel, `Z_± = ±B`, and the sum taken over
//! lattice vectors with separation `|R + d_s' − d_s| < r_cut`. Eigenvalues
//! `E` give the frequency shift `Re E` and the decay rate `−2 Im E`; this
//! agrees with the shift `Im λ` of the coupling eigenvalues `λ = iE`.
//!
//! Terms are multiplied by a smooth window that is 1 below `r_cut/2` and
//! vanishes with all derivatives at `r_cut`, which turns the slowly
//! converging radiative part into a well-behaved regularised sum.

mod chern;
mod ribbon;

pub use chern::{chern_number, chern_numbers, ChernResult, GAP_TOLERANCE};
pub use ribbon::{ribbon_spectrum, RibbonLevels, RibbonMode, RibbonSpectrum, MAX_RIBBON_DIM};

use ndarray::Array2;
use num_complex::Complex64;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{honeycomb_vectors, sigma_minus, sigma_plus};
use crate::kernel::{project, tensor_unchecked};
use crate::linalg;

const I: Complex64 = Complex64::new(0.0, 1.0);
const ZERO: Complex64 = Complex64::new(0.0, 0.0);

/// Default threshold on the tail estimate above which a warning is emitted.
pub const TAIL_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Lattice2D {
    /// Nearest-neighbour distance `a`.
    Honeycomb,
    Square,
    /// `a` along x, `eta * a` along y.
    Rectangular { eta: f64 },
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct LatticeSpec2D {
    pub lattice: Lattice2D,
    /// Lattice constant in units of `1/k`.
    pub a: f64,
    /// Zeeman shift `B` applied as `+B` on σ+ and `−B` on σ−.
    #[serde(default)]
    pub zeeman: f64,
}

impl LatticeSpec2D {
    pub fn new(lattice: Lattice2D, a: f64, zeeman: f64) -> Result<Self> {
        let s = Self { lattice, a, zeeman };
        s.validate()?;
        Ok(s)
    }

    pub fn honeycomb(a: f64, zeeman: f64) -> Result<Self> {
        Self::new(Lattice2D::Honeycomb, a, zeeman)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.a > 0.0) || !self.a.is_finite() {
            return Err(Error::invalid(format!("lattice constant must be > 0, got {}", self.a)));
        }
        if !self.zeeman.is_finite() {
            return Err(Error::invalid("Zeeman shift must be finite"));
        }
        if let Lattice2D::Rectangular { eta } = self.lattice {
            if !(eta > 0.0) || !eta.is_finite() {
                return Err(Error::invalid(format!("aspect ratio must be > 0, got {eta}")));
            }
        }
        Ok(())
    }

    /// Primitive vectors.
    pub fn primitive(&self) -> ([f64; 2], [f64; 2]) {
        match self.lattice {
            Lattice2D::Honeycomb => {
                let (a1, a2, _) = honeycomb_vectors(self.a);
                (a1, a2)
            }
            Lattice2D::Square => ([self.a, 0.0], [0.0, self.a]),
            Lattice2D::Rectangular { eta } => ([self.a, 0.0], [0.0, eta * self.a]),
        }
    }

    /// Sublattice offsets.
    pub fn basis(&self) -> Vec<[f64; 2]> {
        match self.lattice {
            Lattice2D::Honeycomb => honeycomb_vectors(self.a).2.to_vec(),
            _ => vec![[0.0, 0.0]],
        }
    }

    /// Reciprocal vectors with `a_i · b_j = 2π δ_ij`.
    pub fn reciprocal(&self) -> ([f64; 2], [f64; 2]) {
        let (a1, a2) = self.primitive();
        let det = a1[0] * a2[1] - a1[1] * a2[0];
        let f = 2.0 * std::f64::consts::PI / det;
        ([f * a2[1], -f * a2[0]], [-f * a1[1], f * a1[0]])
    }

    pub fn dim(&self) -> usize {
        2 * self.basis().len()
    }

    /// High-symmetry points `Γ`, `K` (or `X`), `M`.
    pub fn symmetry_points(&self) -> [[f64; 2]; 3] {
        let (b1, b2) = self.reciprocal();
        match self.lattice {
            Lattice2D::Honeycomb => [
                [0.0, 0.0],
                [(b1[0] + 2.0 * b2[0]) / 3.0, (b1[1] + 2.0 * b2[1]) / 3.0],
                [0.5 * b2[0], 0.5 * b2[1]],
            ],
            _ => [
                [0.0, 0.0],
                [0.5 * b1[0], 0.5 * b1[1]],
                [0.5 * (b1[0] + b2[0]), 0.5 * (b1[1] + b2[1])],
            ],
        }
    }
}

/// `1` for `x ≤ 1/2`, `0` for `x ≥ 1`, smooth in between.
pub fn window(x: f64) -> f64 {
    fn f(t: f64) -> f64 {
        if t > 0.0 {
            (-1.0 / t).exp()
        } else {
            0.0
        }
    }
    if x <= 0.5 {
        1.0
    } else if x >= 1.0 {
        0.0
    } else {
        let t = 2.0 * (1.0 - x);
        f(t) / (f(t) + f(1.0 - t))
    }
}

pub(crate) fn circular_basis() -> [[Complex64; 3]; 2] {
    [sigma_plus(), sigma_minus()]
}

/// Projection of the kernel at in-plane separation `r` onto the σ± basis.
pub(crate) fn circular_block(r: [f64; 2]) -> [[Complex64; 2]; 2] {
    let k = tensor_unchecked(&[r[0], r[1], 0.0]);
    let e = circular_basis();
    let mut out = [[ZERO; 2]; 2];
    for (a, ea) in e.iter().enumerate() {
        for (b, eb) in e.iter().enumerate() {
            out[a][b] = project(&k, ea, eb);
        }
    }
    out
}

struct Term {
    r: [f64; 2],
    s: usize,
    t: usize,
    full: [[Complex64; 2]; 2],
    half: [[Complex64; 2]; 2],
    quarter: [[Complex64; 2]; 2],
}

/// Precomputed windowed lattice sum for one spec and cutoff.
pub struct BlochSum {
    spec: LatticeSpec2D,
    r_cut: f64,
    terms: Vec<Term>,
}

impl BlochSum {
    pub fn new(spec: &LatticeSpec2D, r_cut: f64) -> Result<Self> {
        spec.validate()?;
        if !(r_cut >= 10.0 * spec.a) || !r_cut.is_finite() {
            return Err(Error::invalid(format!(
                "cutoff radius must be at least 10 lattice constants (got {r_cut}, a = {})",
                spec.a
            )));
        }
        let (a1, a2) = spec.primitive();
        let basis = spec.basis();
        // Bound on |n1|,|n2| from the smallest height of the unit cell.
        let area = (a1[0] * a2[1] - a1[1] * a2[0]).abs();
        let h = area / (a1[0].hypot(a1[1])).max(a2[0].hypot(a2[1]));
        let reach = basis
            .iter()
            .flat_map(|p| basis.iter().map(move |q| (p[0] - q[0]).hypot(p[1] - q[1])))
            .fold(0.0, f64::max);
        let nmax = ((r_cut + reach) / h).ceil() as i64 + 1;
        let mut lattice = Vec::new();
        for n1 in -nmax..=nmax {
            for n2 in -nmax..=nmax {
                lattice.push([n1 as f64 * a1[0] + n2 as f64 * a2[0], n1 as f64 * a1[1] + n2 as f64 * a2[1]]);
            }
        }
        let mut terms = Vec::new();
        for (s, ds) in basis.iter().enumerate() {
            for (t, dt) in basis.iter().enumerate() {
                for rv in &lattice {
                    let sep = [rv[0] + dt[0] - ds[0], rv[1] + dt[1] - ds[1]];
                    let d = sep[0].hypot(sep[1]);
                    if d < 1e-12 * spec.a || d >= r_cut {
                        continue;
                    }
                    let block = circular_block(sep);
                    let scale = |w: f64| block.map(|row| row.map(|z| z * w));
                    terms.push(Term {
                        r: *rv,
                        s,
                        t,
                        full: scale(window(d / r_cut)),
                        half: scale(window(2.0 * d / r_cut)),
                        quarter: scale(window(4.0 * d / r_cut)),
                    });
                }
            }
        }
        Ok(Self {
            spec: spec.clone(),
            r_cut,
            terms,
        })
    }

    pub fn spec(&self) -> &LatticeSpec2D {
        &self.spec
    }

    pub fn r_cut(&self) -> f64 {
        self.r_cut
    }

    /// `H(k)` and a tail estimate.
    ///
    /// The estimate is `‖H_{r_cut} − H_{r_cut/2}‖_F` when the sums contract
    /// (that difference is smaller than `‖H_{r_cut/2} − H_{r_cut/4}‖_F`) and
    /// `+∞` otherwise, which happens close to the light line `|k| = 1` where
    /// the real-space sum converges too slowly to bound.
    pub fn hamiltonian_with_tail(&self, k: [f64; 2]) -> (Array2<Complex64>, f64) {
        let dim = self.spec.dim();
        let mut full = Array2::<Complex64>::zeros((dim, dim));
        let mut half = Array2::<Complex64>::zeros((dim, dim));
        let mut quarter = Array2::<Complex64>::zeros((dim, dim));
        for term in &self.terms {
            let ph = Complex64::from_polar(1.0, k[0] * term.r[0] + k[1] * term.r[1]);
            for a in 0..2 {
                for b in 0..2 {
                    let idx = [2 * term.s + a, 2 * term.t + b];
                    full[idx] += ph * term.full[a][b];
                    half[idx] += ph * term.half[a][b];
                    quarter[idx] += ph * term.quarter[a][b];
                }
            }
        }
        let frob = |m: Array2<Complex64>| m.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt();
        let last = frob(&full - &half);
        let previous = frob(&half - &quarter);
        let tail = if last < previous || last == 0.0 { last } else { f64::INFINITY };
        let mut h = full.mapv(|z| -I * z);
        for s in 0..dim / 2 {
            h[[2 * s, 2 * s]] += Complex64::new(self.spec.zeeman, -0.5);
            h[[2 * s + 1, 2 * s + 1]] += Complex64::new(-self.spec.zeeman, -0.5);
        }
        (h, tail)
    }

    pub fn hamiltonian(&self, k: [f64; 2]) -> Array2<Complex64> {
        self.hamiltonian_with_tail(k).0
    }
}

/// Bloch matrix at a single quasi-momentum, with its tail estimate and a
/// warning when the estimate exceeds [`TAIL_TOLERANCE`].
pub fn bloch_hamiltonian(spec: &LatticeSpec2D, k: [f64; 2], r_cut: f64) -> Result<(Array2<Complex64>, f64, Option<String>)> {
    let sum = BlochSum::new(spec, r_cut)?;
    let (h, tail) = sum.hamiltonian_with_tail(k);
    Ok((h, tail, tail_warning(tail, r_cut)))
}

fn tail_warning(tail: f64, r_cut: f64) -> Option<String> {
    (tail > TAIL_TOLERANCE).then(|| {
        format!("lattice sum at r_cut = {r_cut} may not be converged: tail estimate {tail:e} exceeds {TAIL_TOLERANCE:e}")
    })
}

#[derive(Debug, Clone, Serialize)]
pub struct BandSet {
    pub k_path: Vec<[f64; 2]>,
    /// Cumulative path length at each k.
    pub path_length: Vec<f64>,
    /// Eigenvalues per k, sorted by real part.
    pub eigenvalues: Vec<Vec<Complex64>>,
    #[serde(skip)]
    pub eigenvectors: Vec<Array2<Complex64>>,
    pub in_light_cone: Vec<bool>,
    pub tail_bound: f64,
    pub warnings: Vec<String>,
}

impl BandSet {
    pub fn shift(&self, k: usize, band: usize) -> f64 {
        self.eigenvalues[k][band].re
    }

    pub fn decay(&self, k: usize, band: usize) -> f64 {
        -2.0 * self.eigenvalues[k][band].im
    }
}

/// `Γ → K → M → Γ` (or `Γ → X → M → Γ` for rectangular lattices) with
/// `per_segment` points on each leg; the final `Γ` is included.
pub fn high_symmetry_path(spec: &LatticeSpec2D, per_segment: usize) -> Vec<[f64; 2]> {
    let [g, k, m] = spec.symmetry_points();
    let legs = [(g, k), (k, m), (m, g)];
    let mut out = Vec::with_capacity(3 * per_segment + 1);
    for (p, q) in legs {
        for i in 0..per_segment {
            let t = i as f64 / per_segment as f64;
            out.push([p[0] + t * (q[0] - p[0]), p[1] + t * (q[1] - p[1])]);
        }
    }
    out.push(g);
    out
}

/// Sorted eigen-decomposition of `H(k)`.
pub(crate) fn sorted_eig(h: &Array2<Complex64>) -> Result<(Vec<Complex64>, Array2<Complex64>)> {
    let (w, v) = linalg::eig(h)?;
    let mut order: Vec<usize> = (0..w.len()).collect();
    order.sort_by(|&a, &b| w[a].re.total_cmp(&w[b].re).then(w[a].im.total_cmp(&w[b].im)));
    let mut vs = Array2::zeros(v.dim());
    for (dst, &src) in order.iter().enumerate() {
        vs.column_mut(dst).assign(&v.column(src));
    }
    Ok((order.iter().map(|&i| w[i]).collect(), vs))
}

/// Eigenvalues of `H(k)` ordered by real part.
pub fn sorted_eigenvalues(h: &Array2<Complex64>) -> Result<Vec<Complex64>> {
    Ok(sorted_eig(h)?.0)
}

pub fn band_structure(spec: &LatticeSpec2D, path: &[[f64; 2]], r_cut: f64) -> Result<BandSet> {
    let sum = BlochSum::new(spec, r_cut)?;
    let per_k = path
        .par_iter()
        .map(|&k| {
            let (h, tail) = sum.hamiltonian_with_tail(k);
            let (w, v) = sorted_eig(&h)?;
            Ok((w, v, tail))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut path_length = Vec::with_capacity(path.len());
    let mut acc = 0.0;
    for (i, k) in path.iter().enumerate() {
        if i > 0 {
            acc += (k[0] - path[i - 1][0]).hypot(k[1] - path[i - 1][1]);
        }
        path_length.push(acc);
    }
    let tail_bound = per_k.iter().map(|x| x.2).fold(0.0, f64::max);
    let mut eigenvalues = Vec::with_capacity(path.len());
    let mut eigenvectors = Vec::with_capacity(path.len());
    for (w, v, _) in per_k {
        eigenvalues.push(w);
        eigenvectors.push(v);
    }
    Ok(BandSet {
        in_light_cone: path.iter().map(|k| k[0].hypot(k[1]) < 1.0).collect(),
        k_path: path.to_vec(),
        path_length,
        eigenvalues,
        eigenvectors,
        tail_bound,
        warnings: tail_warning(tail_bound, r_cut).into_iter().collect(),
    })
}

/// Smallest distance between neighbouring eigenvalues (ordered by real part),
/// used as a degeneracy and gap measure.
pub fn min_splitting(eigenvalues: &[Complex64]) -> f64 {
    let mut w = eigenvalues.to_vec();
    w.sort_by(|a, b| a.re.total_cmp(&b.re));
    w.windows(2).map(|p| (p[1] - p[0]).norm()).fold(f64::INFINITY, f64::min)
}
