//! Dormand-Prince 5(4) with embedded error control, plus a fixed-step
//! classical RK4 for reproducibility runs.

use num_complex::Complex64 as C64;

use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StepControl {
    pub rtol: f64,
    pub atol: f64,
    /// Upper bound on any step, ps.
    pub h_max: f64,
    pub h_min: f64,
    pub max_steps: usize,
}

impl Default for StepControl {
    fn default() -> Self {
        StepControl { rtol: 1e-8, atol: 1e-12, h_max: 20.0, h_min: 1e-10, max_steps: 5_000_000 }
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq)]
pub struct Stats {
    pub accepted: usize,
    pub rejected: usize,
    pub evaluations: usize,
}

const C2: f64 = 1.0 / 5.0;
const C3: f64 = 3.0 / 10.0;
const C4: f64 = 4.0 / 5.0;
const C5: f64 = 8.0 / 9.0;
const A21: f64 = 1.0 / 5.0;
const A31: f64 = 3.0 / 40.0;
const A32: f64 = 9.0 / 40.0;
const A41: f64 = 44.0 / 45.0;
const A42: f64 = -56.0 / 15.0;
const A43: f64 = 32.0 / 9.0;
const A51: f64 = 19372.0 / 6561.0;
const A52: f64 = -25360.0 / 2187.0;
const A53: f64 = 64448.0 / 6561.0;
const A54: f64 = -212.0 / 729.0;
const A61: f64 = 9017.0 / 3168.0;
const A62: f64 = -355.0 / 33.0;
const A63: f64 = 46732.0 / 5247.0;
const A64: f64 = 49.0 / 176.0;
const A65: f64 = -5103.0 / 18656.0;
const B1: f64 = 35.0 / 384.0;
const B3: f64 = 500.0 / 1113.0;
const B4: f64 = 125.0 / 192.0;
const B5: f64 = -2187.0 / 6784.0;
const B6: f64 = 11.0 / 84.0;
// b − b̂
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

fn combo(out: &mut [C64], y: &[C64], h: f64, terms: &[(f64, &[C64])]) {
    for (i, o) in out.iter_mut().enumerate() {
        let mut acc = C64::new(0.0, 0.0);
        for (c, k) in terms {
            acc += k[i] * *c;
        }
        *o = y[i] + acc * h;
    }
}

/// Integrates `y' = f(t, y)` from `t0` to `t1` in place. `h` carries the
/// step-size guess between calls. `h_cap(t)` bounds the step locally.
pub fn dopri_segment<F, G>(
    f: &mut F,
    h_cap: G,
    t0: f64,
    t1: f64,
    y: &mut Vec<C64>,
    h: &mut f64,
    ctl: &StepControl,
    stats: &mut Stats,
) -> Result<()>
where
    F: FnMut(f64, &[C64], &mut [C64]),
    G: Fn(f64) -> f64,
{
    let n = y.len();
    let mut k: Vec<Vec<C64>> = (0..7).map(|_| vec![C64::new(0.0, 0.0); n]).collect();
    let mut tmp = vec![C64::new(0.0, 0.0); n];
    let mut y_new = vec![C64::new(0.0, 0.0); n];
    let mut t = t0;
    f(t, y, &mut k[0]);
    stats.evaluations += 1;
    let mut fsal_valid = true;

    while t < t1 {
        if stats.accepted + stats.rejected >= ctl.max_steps {
            return Err(Error::NumericalFailure { t, step: *h, error_estimate: f64::NAN });
        }
        if !fsal_valid {
            f(t, y, &mut k[0]);
            stats.evaluations += 1;
            fsal_valid = true;
        }
        let mut step = h.min(ctl.h_max).min(h_cap(t));
        let remaining = t1 - t;
        let last = step >= remaining * (1.0 - 1e-12);
        if last {
            step = remaining;
        }
        if step < ctl.h_min {
            return Err(Error::NumericalFailure { t, step, error_estimate: f64::NAN });
        }

        let (k0, rest) = k.split_first_mut().unwrap();
        let (k1, rest) = rest.split_first_mut().unwrap();
        let (k2, rest) = rest.split_first_mut().unwrap();
        let (k3, rest) = rest.split_first_mut().unwrap();
        let (k4, rest) = rest.split_first_mut().unwrap();
        let (k5, rest) = rest.split_first_mut().unwrap();
        let k6 = &mut rest[0];

        combo(&mut tmp, y, step, &[(A21, k0)]);
        f(t + C2 * step, &tmp, k1);
        combo(&mut tmp, y, step, &[(A31, k0), (A32, k1)]);
        f(t + C3 * step, &tmp, k2);
        combo(&mut tmp, y, step, &[(A41, k0), (A42, k1), (A43, k2)]);
        f(t + C4 * step, &tmp, k3);
        combo(&mut tmp, y, step, &[(A51, k0), (A52, k1), (A53, k2), (A54, k3)]);
        f(t + C5 * step, &tmp, k4);
        combo(&mut tmp, y, step, &[(A61, k0), (A62, k1), (A63, k2), (A64, k3), (A65, k4)]);
        f(t + step, &tmp, k5);
        combo(&mut y_new, y, step, &[(B1, k0), (B3, k2), (B4, k3), (B5, k4), (B6, k5)]);
        f(t + step, &y_new, k6);
        stats.evaluations += 6;

        let mut acc = 0.0;
        for i in 0..n {
            let e = (k0[i] * E1 + k2[i] * E3 + k3[i] * E4 + k4[i] * E5 + k5[i] * E6 + k6[i] * E7) * step;
            let sc = ctl.atol + ctl.rtol * y[i].norm().max(y_new[i].norm());
            acc += (e.norm() / sc).powi(2);
        }
        let err = (acc / n as f64).sqrt();
        if !err.is_finite() {
            return Err(Error::NumericalFailure { t, step, error_estimate: err });
        }

        if err <= 1.0 {
            stats.accepted += 1;
            t = if last { t1 } else { t + step };
            std::mem::swap(y, &mut y_new);
            k.swap(0, 6);
            let factor = if err == 0.0 { 5.0 } else { (0.9 * err.powf(-0.2)).clamp(0.2, 5.0) };
            if !last || factor < 1.0 {
                *h = step * factor;
            }
        } else {
            stats.rejected += 1;
            *h = step * (0.9 * err.powf(-0.2)).clamp(0.1, 0.9);
            if *h < ctl.h_min {
                return Err(Error::NumericalFailure { t, step: *h, error_estimate: err });
            }
        }
    }
    Ok(())
}

/// Classical RK4 with a fixed nominal step, shortened to land on `t1`.
pub fn rk4_segment<F>(f: &mut F, t0: f64, t1: f64, y: &mut Vec<C64>, h: f64, stats: &mut Stats)
where
    F: FnMut(f64, &[C64], &mut [C64]),
{
    let n = y.len();
    let steps = ((t1 - t0) / h).ceil().max(1.0) as usize;
    let h = (t1 - t0) / steps as f64;
    let mut k: Vec<Vec<C64>> = (0..4).map(|_| vec![C64::new(0.0, 0.0); n]).collect();
    let mut tmp = vec![C64::new(0.0, 0.0); n];
    for s in 0..steps {
        let t = t0 + s as f64 * h;
        f(t, y, &mut k[0]);
        combo(&mut tmp, y, 0.5 * h, &[(1.0, &k[0])]);
        f(t + 0.5 * h, &tmp, &mut k[1]);
        combo(&mut tmp, y, 0.5 * h, &[(1.0, &k[1])]);
        f(t + 0.5 * h, &tmp, &mut k[2]);
        combo(&mut tmp, y, h, &[(1.0, &k[2])]);
        f(t + h, &tmp, &mut k[3]);
        let (k0, k1, k2, k3) = (&k[0], &k[1], &k[2], &k[3]);
        for i in 0..n {
            y[i] += (k0[i] + k1[i] * 2.0 + k2[i] * 2.0 + k3[i]) * (h / 6.0);
        }
        stats.accepted += 1;
        stats.evaluations += 4;
    }
}
