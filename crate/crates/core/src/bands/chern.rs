//! Lattice-gauge Chern numbers from link variables on a Brillouin-zone grid.
//!
//! Eigenvectors are those of the Hermitian part `(H + H†)/2`.

use ndarray::{Array2, Axis};
use ndarray_linalg::{Determinant, Eigh, UPLO};
use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use super::{BlochSum, LatticeSpec2D};
use crate::error::{Error, Result};

/// Minimum direct gap (units Γ) between neighbouring bands for a
/// well-defined Chern number.
pub const GAP_TOLERANCE: f64 = 1e-3;

#[derive(Debug, Clone, Serialize)]
pub struct ChernResult {
    pub chern: Vec<i64>,
    /// Raw plaquette sums over 2π, one per band.
    pub raw: Vec<f64>,
    /// Smallest gap above each band over the grid (last entry unused, `∞`).
    pub min_gaps: Vec<f64>,
    pub grid: usize,
    pub r_cut: f64,
    pub zeeman: f64,
    pub tail_bound: f64,
}

struct GridPoint {
    k: [f64; 2],
    values: Vec<f64>,
    vectors: Array2<Complex64>,
}

fn grid_eigensystems(sum: &BlochSum, m: usize) -> Result<(Vec<GridPoint>, f64)> {
    let (b1, b2) = sum.spec().reciprocal();
    let pts: Vec<(usize, usize)> = (0..m).flat_map(|i| (0..m).map(move |j| (i, j))).collect();
    let out = pts
        .par_iter()
        .map(|&(i, j)| {
            let (fi, fj) = (i as f64 / m as f64, j as f64 / m as f64);
            let k = [fi * b1[0] + fj * b2[0], fi * b1[1] + fj * b2[1]];
            let (h, tail) = sum.hamiltonian_with_tail(k);
            let herm = (&h + &h.t().mapv(|z| z.conj())).mapv(|z| 0.5 * z);
            let (w, v) = herm
                .eigh(UPLO::Upper)
                .map_err(|e| Error::Numerical(format!("Hermitian eigensolver: {e}")))?;
            Ok((
                GridPoint {
                    k,
                    values: w.to_vec(),
                    vectors: v,
                },
                tail,
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let tail = out.iter().map(|x| x.1).fold(0.0, f64::max);
    Ok((out.into_iter().map(|x| x.0).collect(), tail))
}

/// Normalised overlap determinant of band group `bands` between two k-points.
fn link(a: &Array2<Complex64>, b: &Array2<Complex64>, bands: &[usize]) -> Result<Complex64> {
    let va = a.select(Axis(1), bands);
    let vb = b.select(Axis(1), bands);
    let ov = va.t().mapv(|z| z.conj()).dot(&vb);
    let d = ov
        .det()
        .map_err(|e| Error::Numerical(format!("link determinant: {e}")))?;
    if d.norm() < 1e-14 {
        return Err(Error::Numerical("vanishing link variable; refine the grid".into()));
    }
    Ok(d / d.norm())
}

fn flux(points: &[GridPoint], m: usize, bands: &[usize]) -> Result<f64> {
    let at = |i: usize, j: usize| &points[(i % m) * m + (j % m)].vectors;
    let mut total = 0.0;
    for i in 0..m {
        for j in 0..m {
            let u1 = link(at(i, j), at(i + 1, j), bands)?;
            let u2 = link(at(i + 1, j), at(i + 1, j + 1), bands)?;
            let u3 = link(at(i + 1, j + 1), at(i, j + 1), bands)?;
            let u4 = link(at(i, j + 1), at(i, j), bands)?;
            total += (u1 * u2 * u3 * u4).arg();
        }
    }
    Ok(total / (2.0 * std::f64::consts::PI))
}

fn gap_check(points: &[GridPoint], band: usize) -> (f64, [f64; 2]) {
    points
        .iter()
        .map(|p| (p.values[band + 1] - p.values[band], p.k))
        .min_by(|a, b| a.0.total_cmp(&b.0))
        .unwrap_or((f64::INFINITY, [0.0, 0.0]))
}

/// Chern numbers of every band of the Hermitian part of `H(k)` on an `m × m`
/// grid. Fails if any pair of neighbouring bands comes within
/// [`GAP_TOLERANCE`] of each other.
pub fn chern_numbers(spec: &LatticeSpec2D, grid: usize, r_cut: f64) -> Result<ChernResult> {
    if grid < 3 {
        return Err(Error::invalid("Brillouin-zone grid must be at least 3x3"));
    }
    let sum = BlochSum::new(spec, r_cut)?;
    let (points, tail_bound) = grid_eigensystems(&sum, grid)?;
    let nb = spec.dim();
    let mut min_gaps = Vec::with_capacity(nb);
    for b in 0..nb - 1 {
        let (gap, k) = gap_check(&points, b);
        if gap < GAP_TOLERANCE {
            return Err(Error::IllDefinedTopology { kx: k[0], ky: k[1], gap });
        }
        min_gaps.push(gap);
    }
    min_gaps.push(f64::INFINITY);
    let raw = (0..nb)
        .map(|b| flux(&points, grid, &[b]))
        .collect::<Result<Vec<_>>>()?;
    Ok(ChernResult {
        chern: raw.iter().map(|c| c.round() as i64).collect(),
        raw,
        min_gaps,
        grid,
        r_cut,
        zeeman: spec.zeeman,
        tail_bound,
    })
}

/// Chern number of one band; only the gaps adjacent to it must stay open.
pub fn chern_number(spec: &LatticeSpec2D, band: usize, grid: usize, r_cut: f64) -> Result<(i64, f64)> {
    let nb = spec.dim();
    if band >= nb {
        return Err(Error::invalid(format!("band {band} out of range ({nb} bands)")));
    }
    if grid < 3 {
        return Err(Error::invalid("Brillouin-zone grid must be at least 3x3"));
    }
    let sum = BlochSum::new(spec, r_cut)?;
    let (points, _) = grid_eigensystems(&sum, grid)?;
    for b in [band.checked_sub(1), (band + 1 < nb).then_some(band)].into_iter().flatten() {
        let (gap, k) = gap_check(&points, b);
        if gap < GAP_TOLERANCE {
            return Err(Error::IllDefinedTopology { kx: k[0], ky: k[1], gap });
        }
    }
    let raw = flux(&points, grid, &[band])?;
    Ok((raw.round() as i64, raw))
}
