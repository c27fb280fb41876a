//! Dormand–Prince 5(4) with PI step-size control for complex linear systems.

use num_complex::Complex64;

use super::SolverStats;
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug)]
pub struct OdeOptions {
    pub rtol: f64,
    pub atol: f64,
    pub h_init: Option<f64>,
    pub h_max: f64,
    pub max_steps: usize,
}

impl OdeOptions {
    pub fn with_tol(tol: f64) -> Self {
        OdeOptions { rtol: tol, atol: tol * 1e-3, h_init: None, h_max: f64::INFINITY, max_steps: 50_000_000 }
    }
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
const A71: f64 = 35.0 / 384.0;
const A73: f64 = 500.0 / 1113.0;
const A74: f64 = 125.0 / 192.0;
const A75: f64 = -2187.0 / 6784.0;
const A76: f64 = 11.0 / 84.0;
const E1: f64 = 71.0 / 57600.0;
const E3: f64 = -71.0 / 16695.0;
const E4: f64 = 71.0 / 1920.0;
const E5: f64 = -17253.0 / 339200.0;
const E6: f64 = 22.0 / 525.0;
const E7: f64 = -1.0 / 40.0;

const SAFETY: f64 = 0.9;
const BETA: f64 = 0.04;
const ALPHA: f64 = 0.2 - 0.75 * BETA;

fn err_norm(e: &[Complex64], y0: &[Complex64], y1: &[Complex64], opts: &OdeOptions) -> f64 {
    if e.is_empty() {
        return 0.0;
    }
    let mut s = 0.0;
    for k in 0..e.len() {
        let sc = opts.atol + opts.rtol * y0[k].norm().max(y1[k].norm());
        s += (e[k].norm() / sc).powi(2);
    }
    (s / e.len() as f64).sqrt()
}

/// Integrate y' = f(t, y) from `t0`, calling `observe` at every entry of
/// `times` (ascending, ≥ t0). Steps are shortened to land on sample times
/// exactly.
pub fn dopri5<F, O>(mut f: F, t0: f64, y0: &[Complex64], times: &[f64], opts: &OdeOptions, mut observe: O) -> Result<SolverStats>
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
    O: FnMut(f64, &[Complex64]),
{
    if times.windows(2).any(|w| w[1] < w[0]) || times.first().is_some_and(|&t| t < t0) {
        return Err(Error::InvalidArgument("sample times must be ascending and not precede t0".into()));
    }
    let n = y0.len();
    let zero = Complex64::new(0.0, 0.0);
    let mut stats = SolverStats::default();
    let mut y = y0.to_vec();
    let mut t = t0;
    let mut k1 = vec![zero; n];
    let mut k2 = vec![zero; n];
    let mut k3 = vec![zero; n];
    let mut k4 = vec![zero; n];
    let mut k5 = vec![zero; n];
    let mut k6 = vec![zero; n];
    let mut k7 = vec![zero; n];
    let mut tmp = vec![zero; n];
    let mut ynew = vec![zero; n];
    let mut err = vec![zero; n];

    f(t, &y, &mut k1);
    stats.rhs_evals += 1;

    let mut h = match opts.h_init {
        Some(h) => h,
        None => initial_step(&mut f, t, &y, &k1, opts, &mut stats),
    }
    .min(opts.h_max);
    let mut err_prev: f64 = 1e-4;
    let mut last_nonfinite = false;

    for &ts in times {
        while t < ts {
            if stats.accepted + stats.rejected >= opts.max_steps {
                return Err(Error::StepSizeUnderflow { t, h });
            }
            let remaining = ts - t;
            let landing = h >= remaining * (1.0 - 1e-12);
            let hs = if landing { remaining } else { h };
            if hs <= 1e-14 * t.abs().max(1.0) {
                return Err(if last_nonfinite { Error::NonFinite { t } } else { Error::StepSizeUnderflow { t, h: hs } });
            }

            for k in 0..n {
                tmp[k] = y[k] + hs * (A21 * k1[k]);
            }
            f(t + C2 * hs, &tmp, &mut k2);
            for k in 0..n {
                tmp[k] = y[k] + hs * (A31 * k1[k] + A32 * k2[k]);
            }
            f(t + C3 * hs, &tmp, &mut k3);
            for k in 0..n {
                tmp[k] = y[k] + hs * (A41 * k1[k] + A42 * k2[k] + A43 * k3[k]);
            }
            f(t + C4 * hs, &tmp, &mut k4);
            for k in 0..n {
                tmp[k] = y[k] + hs * (A51 * k1[k] + A52 * k2[k] + A53 * k3[k] + A54 * k4[k]);
            }
            f(t + C5 * hs, &tmp, &mut k5);
            for k in 0..n {
                tmp[k] = y[k] + hs * (A61 * k1[k] + A62 * k2[k] + A63 * k3[k] + A64 * k4[k] + A65 * k5[k]);
            }
            f(t + hs, &tmp, &mut k6);
            for k in 0..n {
                ynew[k] = y[k] + hs * (A71 * k1[k] + A73 * k3[k] + A74 * k4[k] + A75 * k5[k] + A76 * k6[k]);
            }
            f(t + hs, &ynew, &mut k7);
            stats.rhs_evals += 6;
            for k in 0..n {
                err[k] = hs * (E1 * k1[k] + E3 * k3[k] + E4 * k4[k] + E5 * k5[k] + E6 * k6[k] + E7 * k7[k]);
            }
            let e = err_norm(&err, &y, &ynew, opts);

            if !e.is_finite() {
                last_nonfinite = true;
                stats.rejected += 1;
                h = hs * 0.2;
                continue;
            }
            last_nonfinite = false;
            if e <= 1.0 {
                stats.accepted += 1;
                t = if landing { ts } else { t + hs };
                std::mem::swap(&mut y, &mut ynew);
                std::mem::swap(&mut k1, &mut k7);
                let grow = (SAFETY * e.max(1e-10).powf(-ALPHA) * err_prev.powf(BETA)).clamp(0.2, 10.0);
                err_prev = e.max(1e-4);
                // a shortened landing step says nothing about the natural step size
                let base = if landing { h.max(hs) } else { hs };
                h = (base * grow).min(opts.h_max);
            } else {
                stats.rejected += 1;
                h = hs * (SAFETY * e.powf(-0.2)).max(0.2);
            }
        }
        if y.iter().any(|v| !v.re.is_finite() || !v.im.is_finite()) {
            return Err(Error::NonFinite { t });
        }
        observe(ts, &y);
    }
    Ok(stats)
}

fn initial_step<F>(f: &mut F, t: f64, y: &[Complex64], f0: &[Complex64], opts: &OdeOptions, stats: &mut SolverStats) -> f64
where
    F: FnMut(f64, &[Complex64], &mut [Complex64]),
{
    let n = y.len();
    if n == 0 {
        return 1.0;
    }
    let scale: Vec<f64> = y.iter().map(|v| opts.atol + opts.rtol * v.norm()).collect();
    let rms = |v: &[Complex64]| (v.iter().zip(&scale).map(|(a, s)| (a.norm() / s).powi(2)).sum::<f64>() / n as f64).sqrt();
    let d0 = rms(y);
    let d1 = rms(f0);
    let h0 = if d0 < 1e-5 || d1 < 1e-5 { 1e-6 } else { 0.01 * d0 / d1 };
    let y1: Vec<Complex64> = y.iter().zip(f0).map(|(a, b)| a + h0 * b).collect();
    let mut f1 = vec![Complex64::new(0.0, 0.0); n];
    f(t + h0, &y1, &mut f1);
    stats.rhs_evals += 1;
    let diff: Vec<Complex64> = f1.iter().zip(f0).map(|(a, b)| (a - b) / h0).collect();
    let d2 = rms(&diff);
    let h1 = if d1.max(d2) <= 1e-15 { (h0 * 1e-3).max(1e-6) } else { (0.01 / d1.max(d2)).powf(0.2) };
    (100.0 * h0).min(h1)
}
