//! Finite-width strips of a rectangular lattice, periodic along the diagonal
//! `t = a1 + a2` and open across it.
//!
//! Rows are labelled by `m = n1 − n2 ∈ [0, W)`; site `(m, j)` sits at
//! `m·a1 + j·t`, and a Bloch phase `e^{i k_par j |t|}` is applied along `t`.

use ndarray::Array2;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{circular_block, sorted_eig, window, Lattice2D, LatticeSpec2D};
use crate::error::{Error, Result};
use crate::kernel::project;
use crate::kernel::tensor_unchecked;

const I: Complex64 = Complex64::new(0.0, 1.0);

/// Largest strip matrix dimension handled by the dense eigensolver.
pub const MAX_RIBBON_DIM: usize = 4096;

/// Internal levels kept per site.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum RibbonLevels {
    /// Both σ+ and σ− transitions.
    #[default]
    VType,
    /// σ+ only.
    SigmaPlus,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct RibbonMode {
    pub eigenvalue: Complex64,
    /// Transverse centre of mass in row units, `0 ≤ com ≤ W − 1`.
    pub com: f64,
    pub ipr: f64,
}

#[derive(Debug, Clone, Serialize)]
pub struct RibbonSpectrum {
    pub width: usize,
    pub k_par: f64,
    pub levels: RibbonLevels,
    pub modes: Vec<RibbonMode>,
}

impl RibbonSpectrum {
    pub fn mean_com(&self) -> f64 {
        self.modes.iter().map(|m| m.com).sum::<f64>() / self.modes.len().max(1) as f64
    }
}

/// Strip spectrum at fixed `k_par` with per-mode localisation measures.
pub fn ribbon_spectrum(
    spec: &LatticeSpec2D,
    width: usize,
    k_par: f64,
    r_cut: f64,
    levels: RibbonLevels,
) -> Result<RibbonSpectrum> {
    spec.validate()?;
    if matches!(spec.lattice, Lattice2D::Honeycomb) {
        return Err(Error::Unsupported("ribbon geometry is defined for rectangular lattices".into()));
    }
    if width < 4 {
        return Err(Error::invalid(format!("ribbon width must be at least 4, got {width}")));
    }
    if !(r_cut >= 10.0 * spec.a) || !r_cut.is_finite() {
        return Err(Error::invalid("cutoff radius must be at least 10 lattice constants"));
    }
    if !k_par.is_finite() {
        return Err(Error::invalid("k_par must be finite"));
    }
    let nl = match levels {
        RibbonLevels::VType => 2,
        RibbonLevels::SigmaPlus => 1,
    };
    let dim = nl * width;
    if dim > MAX_RIBBON_DIM {
        return Err(Error::Capacity(format!(
            "ribbon matrix dimension {dim} exceeds {MAX_RIBBON_DIM}"
        )));
    }
    let (a1, a2) = spec.primitive();
    let t = [a1[0] + a2[0], a1[1] + a2[1]];
    let tl = t[0].hypot(t[1]);
    let jmax = ((r_cut + width as f64 * spec.a) / tl).ceil() as i64 + 1;

    // Blocks depend only on the row difference dm = m_target − m_source.
    let w = width as i64;
    let mut blocks = vec![[[Complex64::new(0.0, 0.0); 2]; 2]; (2 * w - 1) as usize];
    for dm in -(w - 1)..w {
        let acc = &mut blocks[(dm + w - 1) as usize];
        for j in -jmax..=jmax {
            let sep = [dm as f64 * a1[0] + j as f64 * t[0], dm as f64 * a1[1] + j as f64 * t[1]];
            let d = sep[0].hypot(sep[1]);
            if d < 1e-12 * spec.a || d >= r_cut {
                continue;
            }
            let ph = Complex64::from_polar(window(d / r_cut), k_par * j as f64 * tl);
            let b = match levels {
                RibbonLevels::VType => circular_block(sep),
                RibbonLevels::SigmaPlus => {
                    let e = crate::geometry::sigma_plus();
                    let k = tensor_unchecked(&[sep[0], sep[1], 0.0]);
                    let mut out = [[Complex64::new(0.0, 0.0); 2]; 2];
                    out[0][0] = project(&k, &e, &e);
                    out
                }
            };
            for (x, row) in acc.iter_mut().zip(b.iter()) {
                for (y, v) in x.iter_mut().zip(row.iter()) {
                    *y += ph * v;
                }
            }
        }
    }

    let mut h = Array2::<Complex64>::zeros((dim, dim));
    for m in 0..width {
        for mp in 0..width {
            // Source row `mp` acting on target row `m`: separation (mp − m)·a1 + j·t.
            let b = &blocks[(mp as i64 - m as i64 + w - 1) as usize];
            for a in 0..nl {
                for c in 0..nl {
                    h[[nl * m + a, nl * mp + c]] = -I * b[a][c];
                }
            }
        }
        h[[nl * m, nl * m]] += Complex64::new(spec.zeeman, -0.5);
        if nl == 2 {
            h[[nl * m + 1, nl * m + 1]] += Complex64::new(-spec.zeeman, -0.5);
        }
    }

    let (vals, vecs) = sorted_eig(&h)?;
    let modes = vals
        .iter()
        .enumerate()
        .map(|(n, &eigenvalue)| {
            let col = vecs.column(n);
            let site: Vec<f64> = (0..width)
                .map(|m| (0..nl).map(|a| col[nl * m + a].norm_sqr()).sum())
                .collect();
            let norm: f64 = site.iter().sum();
            let com = site.iter().enumerate().map(|(m, p)| m as f64 * p).sum::<f64>() / norm;
            let ipr = site.iter().map(|p| p * p).sum::<f64>() / (norm * norm);
            RibbonMode { eigenvalue, com, ipr }
        })
        .collect();
    Ok(RibbonSpectrum {
        width,
        k_par,
        levels,
        modes,
    })
}
