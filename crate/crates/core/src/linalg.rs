//! Dense complex helpers on top of LAPACK.

use ndarray::{Array1, Array2};
use ndarray_linalg::{Eig, Inverse, Solve};
use num_complex::Complex64;

use crate::error::{Error, Result};

pub fn identity(n: usize) -> Array2<Complex64> {
    Array2::from_diag(&Array1::from_elem(n, Complex64::new(1.0, 0.0)))
}

fn norm_1(a: &Array2<Complex64>) -> f64 {
    a.columns()
        .into_iter()
        .map(|c| c.iter().map(|z| z.norm()).sum::<f64>())
        .fold(0.0, f64::max)
}

/// Complex eigendecomposition; columns of the second matrix are right eigenvectors.
pub fn eig(a: &Array2<Complex64>) -> Result<(Array1<Complex64>, Array2<Complex64>)> {
    if a.iter().any(|z| !z.re.is_finite() || !z.im.is_finite()) {
        return Err(Error::EigenFailure {
            reason: "matrix has non-finite entries".into(),
            matrix: Box::new(a.clone()),
        });
    }
    a.eig().map_err(|e| Error::EigenFailure {
        reason: e.to_string(),
        matrix: Box::new(a.clone()),
    })
}

/// Matrix exponential by scaling and squaring with a degree-13 Padé approximant.
pub fn expm(a: &Array2<Complex64>) -> Result<Array2<Complex64>> {
    const B: [f64; 14] = [
        64764752532480000.0,
        32382376266240000.0,
        7771770303897600.0,
        1187353796428800.0,
        129060195264000.0,
        10559470521600.0,
        670442572800.0,
        33522128640.0,
        1323241920.0,
        40840800.0,
        960960.0,
        16380.0,
        182.0,
        1.0,
    ];
    const THETA13: f64 = 5.371920351148152;
    let n = a.nrows();
    if n == 0 {
        return Ok(a.clone());
    }
    let norm = norm_1(a);
    if !norm.is_finite() {
        return Err(Error::Numerical("matrix exponential of non-finite matrix".into()));
    }
    let s = if norm > THETA13 {
        (norm / THETA13).log2().ceil() as i32
    } else {
        0
    };
    let scale = Complex64::new(2f64.powi(-s), 0.0);
    let a = a.mapv(|z| z * scale);
    let id = identity(n);
    let a2 = a.dot(&a);
    let a4 = a2.dot(&a2);
    let a6 = a4.dot(&a2);
    let c = |k: usize| Complex64::new(B[k], 0.0);
    let u_inner = &a6 * c(13) + &a4 * c(11) + &a2 * c(9);
    let u = a.dot(&(a6.dot(&u_inner) + &a6 * c(7) + &a4 * c(5) + &a2 * c(3) + &id * c(1)));
    let v_inner = &a6 * c(12) + &a4 * c(10) + &a2 * c(8);
    let v = a6.dot(&v_inner) + &a6 * c(6) + &a4 * c(4) + &a2 * c(2) + &id * c(0);
    let p = &v + &u;
    let q = &v - &u;
    let qinv = q
        .inv()
        .map_err(|e| Error::Numerical(format!("Padé denominator not invertible: {e}")))?;
    let mut r = qinv.dot(&p);
    for _ in 0..s {
        r = r.dot(&r);
    }
    Ok(r)
}

pub fn solve(a: &Array2<Complex64>, b: &Array1<Complex64>) -> Result<Array1<Complex64>> {
    a.solve(b)
        .map_err(|e| Error::Numerical(format!("linear solve failed: {e}")))
}

pub fn vec_norm(v: &Array1<Complex64>) -> f64 {
    v.iter().map(|z| z.norm_sqr()).sum::<f64>().sqrt()
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random(n: usize, scale: f64, seed: u64) -> Array2<Complex64> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        Array2::from_shape_fn((n, n), |_| {
            Complex64::new(rng.random_range(-scale..scale), rng.random_range(-scale..scale))
        })
    }

    /// Plain Taylor series with many squarings, independent of the Padé path.
    fn taylor_expm(a: &Array2<Complex64>) -> Array2<Complex64> {
        let s = 12;
        let a = a.mapv(|z| z / 2f64.powi(s));
        let mut term = identity(a.nrows());
        let mut sum = term.clone();
        for k in 1..30 {
            term = term.dot(&a).mapv(|z| z / k as f64);
            sum = sum + &term;
        }
        for _ in 0..s {
            sum = sum.dot(&sum);
        }
        sum
    }

    #[test]
    fn expm_matches_taylor() {
        for (seed, scale) in [(1, 0.1), (2, 1.0), (3, 4.0)] {
            let a = random(6, scale, seed);
            let e = expm(&a).unwrap();
            let t = taylor_expm(&a);
            let err = (&e - &t).iter().map(|z| z.norm()).fold(0.0, f64::max);
            let mag = t.iter().map(|z| z.norm()).fold(0.0, f64::max);
            assert!(err < 1e-11 * mag.max(1.0), "seed {seed}: {err}");
        }
    }

    #[test]
    fn expm_of_diagonal() {
        let d = Array2::from_diag(&Array1::from(vec![
            Complex64::new(-1.0, 2.0),
            Complex64::new(0.5, 0.0),
        ]));
        let e = expm(&d).unwrap();
        assert!((e[[0, 0]] - Complex64::new(-1.0, 2.0).exp()).norm() < 1e-14);
        assert!((e[[1, 1]] - Complex64::new(0.5, 0.0).exp()).norm() < 1e-14);
        assert!(e[[0, 1]].norm() < 1e-16);
    }

    #[test]
    fn eig_rejects_nan() {
        let mut a = random(3, 1.0, 0);
        a[[1, 1]] = Complex64::new(f64::NAN, 0.0);
        assert!(matches!(eig(&a), Err(Error::EigenFailure { .. })));
    }
}
