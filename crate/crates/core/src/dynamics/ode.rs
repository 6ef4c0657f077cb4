//! Adaptive Dormand–Prince 5(4) integrator for complex state vectors.

use num_complex::Complex64;
use rayon::prelude::*;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub initial_step: f64,
    pub max_steps: usize,
}

impl Default for OdeOptions {
    fn default() -> Self {
        Self {
            rtol: 1e-10,
            atol: 1e-12,
            initial_step: 1e-3,
            max_steps: 1_000_000,
        }
    }
}

const C: [f64; 7] = [0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0, 1.0];
const A: [[f64; 6]; 7] = [
    [0.0; 6],
    [1.0 / 5.0, 0.0, 0.0, 0.0, 0.0, 0.0],
    [3.0 / 40.0, 9.0 / 40.0, 0.0, 0.0, 0.0, 0.0],
    [44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0, 0.0, 0.0, 0.0],
    [19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0, 0.0, 0.0],
    [9017.0 / 3168.0, -355.0 / 33.0, 46732.0 / 5247.0, 49.0 / 176.0, -5103.0 / 18656.0, 0.0],
    [35.0 / 384.0, 0.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0],
];
// Fifth-order weights minus embedded fourth-order weights.
const E: [f64; 7] = [
    71.0 / 57600.0,
    0.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
];

/// Integrates `dy/dt = f(t, y)` from `t0` and returns the state at each entry of
/// `times` (non-decreasing, all `≥ t0`).
pub fn integrate<F>(f: F, t0: f64, y0: &[Complex64], times: &[f64], opts: OdeOptions) -> Result<Vec<Vec<Complex64>>>
where
    F: Fn(f64, &[Complex64], &mut [Complex64]),
{
    let n = y0.len();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut h = opts.initial_step;
    let mut k: Vec<Vec<Complex64>> = (0..7).map(|_| vec![Complex64::new(0.0, 0.0); n]).collect();
    let mut stage = vec![Complex64::new(0.0, 0.0); n];
    let mut have_first = false;
    let mut steps = 0usize;
    let mut out = Vec::with_capacity(times.len());

    for &target in times {
        if target < t {
            return Err(Error::invalid("integration times must be non-decreasing"));
        }
        while t < target {
            if steps >= opts.max_steps {
                return Err(Error::Numerical(format!("integrator exceeded {} steps at t = {t}", opts.max_steps)));
            }
            let last = h >= target - t;
            let h_try = if last { target - t } else { h };
            if !have_first {
                f(t, &y, &mut k[0]);
                have_first = true;
            }
            for s in 1..7 {
                let (done, rest) = k.split_at_mut(s);
                stage
                    .par_iter_mut()
                    .enumerate()
                    .for_each(|(i, v)| {
                        let mut acc = Complex64::new(0.0, 0.0);
                        for (j, kj) in done.iter().enumerate() {
                            if A[s][j] != 0.0 {
                                acc += kj[i] * A[s][j];
                            }
                        }
                        *v = y[i] + acc * h_try;
                    });
                f(t + C[s] * h_try, &stage, &mut rest[0]);
            }
            // Stage 7 is evaluated at the fifth-order solution (FSAL). The
            // reduction is sequential so results do not depend on thread count.
            let err = stage
                .par_iter()
                .enumerate()
                .map(|(i, ynew)| {
                    let mut e = Complex64::new(0.0, 0.0);
                    for (j, kj) in k.iter().enumerate() {
                        if E[j] != 0.0 {
                            e += kj[i] * E[j];
                        }
                    }
                    let scale = opts.atol + opts.rtol * y[i].norm().max(ynew.norm());
                    (e.norm() * h_try / scale).powi(2)
                })
                .collect::<Vec<f64>>()
                .iter()
                .sum::<f64>();
            let err = (err / n.max(1) as f64).sqrt();
            if !err.is_finite() {
                return Err(Error::Numerical(format!("integrator produced non-finite values at t = {t}")));
            }
            steps += 1;
            if err <= 1.0 {
                t = if last { target } else { t + h_try };
                std::mem::swap(&mut y, &mut stage);
                k.swap(0, 6);
                let grow = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).min(5.0) };
                if !last || grow < 1.0 {
                    h = h_try * grow;
                }
            } else {
                h = h_try * (0.9 * err.powf(-0.2)).max(0.2);
                if h < 1e-14 * t.abs().max(1.0) {
                    return Err(Error::Numerical(format!("step size underflow at t = {t}")));
                }
            }
        }
        out.push(y.clone());
    }
    Ok(out)
}
