//! Canned recipes producing the data behind the figures of the five-state
//! example.

use rayon::prelude::*;

use floquet_core::io::fmt17;
use floquet_core::model::{RunConfig, SystemModel};
use floquet_core::propagation::{integrate_full_lindblad_with, reconstruct_time_domain, uniform_times, HarmonicStack, OdeOptions};
use floquet_core::weakprobe::solve_coherences_direct;
use floquet_core::{Error, Result};
use serde_json::json;

use crate::commands::{files, integrate, load, run_sweep, write_sweep, Outcome};
use crate::output::{emit, emit_json};
use crate::{Common, Figure, Method, Window};

/// Probe attenuation factors of the scaling study.
pub const ALPHAS: [f64; 7] = [1.0, 2.0, 5.0, 10.0, 20.0, 50.0, 100.0];
/// Scaling fits use α at or above this value.
pub const FIT_ALPHA_MIN: f64 = 5.0;

/// Second row of the coupling table, GHz.
pub const FIG2B_COUPLING: [(&str, &str); 4] =
    [("drive.rabi_c.1.3", "0.9"), ("drive.rabi_c.1.4", "1.1"), ("drive.rabi_c.2.3", "0.6"), ("drive.rabi_c.2.4", "0.9")];

pub fn run(figure: Figure, common: &Common, window: &Window) -> Outcome {
    match figure {
        Figure::Fig1 => fig1(common),
        Figure::Fig2a => fig2a(common),
        Figure::Fig2b => fig2b(common, window),
    }
}

const FIG1_DENSITY_HEADER: &str = "time_ns,re_rho00,im_rho10,im_rho20";
const FIG1_HARMONICS_HEADER: &str = "time_ns,N,abs_re_rho00,abs_im_rho10,abs_im_rho20";

fn density_row(out: &mut String, t: f64, r00: f64, r10: f64, r20: f64) {
    out.push_str(&format!("{},{},{},{}\n", fmt17(t), fmt17(r00), fmt17(r10), fmt17(r20)));
}

fn fig1(common: &Common) -> Outcome {
    let (model, run) = load(&common.config, &[])?;
    let times = uniform_times(run.t_end, run.sample_stride);
    let mut density = format!("{FIG1_DENSITY_HEADER}\n");
    let mut harmonics = format!("{FIG1_HARMONICS_HEADER}\n");
    let stats = integrate(&model, &run, &times, |s| {
        let rho = reconstruct_time_domain(s, s.time, model.drive.omega_c);
        density_row(&mut density, s.time, rho[(0, 0)].re, rho[(1, 0)].im, rho[(2, 0)].im);
        for n in [0, 2, 4] {
            harmonics.push_str(&format!(
                "{},{n},{},{},{}\n",
                fmt17(s.time),
                fmt17(s.get(0, 0, n).re.abs()),
                fmt17(s.get(1, 0, n).im.abs()),
                fmt17(s.get(2, 0, n).im.abs())
            ));
        }
    })?;

    let uncoupled = model.with_coupling_scale(0.0);
    let mut plain = format!("{FIG1_DENSITY_HEADER}\n");
    integrate_full_lindblad_with(&uncoupled, &run.initial_density(model.dim()), &times, &OdeOptions::with_tol(run.ode_tol), |t, rho| {
        density_row(&mut plain, t, rho[(0, 0)].re, rho[(1, 0)].im, rho[(2, 0)].im)
    })?;

    let out = vec![
        emit(&common.out, "fig1_density", &density, common.format)?,
        emit(&common.out, "fig1_harmonics", &harmonics, common.format)?,
        emit(&common.out, "fig1_density_uncoupled", &plain, common.format)?,
    ];
    Ok(json!({ "command": "figures", "figure": "fig1", "files": files(&out), "stats": stats }))
}

struct ScalingPoint {
    alpha: f64,
    last: HarmonicStack,
}

fn scaled_steady(model: &SystemModel, run: &RunConfig, alpha: f64) -> Result<ScalingPoint> {
    let m = model.with_probe_scale(1.0 / alpha);
    let mut last = None;
    integrate(&m, run, &[run.t_end], |s| last = Some(s.clone()))?;
    Ok(ScalingPoint { alpha, last: last.expect("one sample requested") })
}

/// Least-squares slope of ln y against ln x.
pub fn log_log_slope(points: &[(f64, f64)]) -> f64 {
    let n = points.len() as f64;
    let mx = points.iter().map(|p| p.0.ln()).sum::<f64>() / n;
    let my = points.iter().map(|p| p.1.ln()).sum::<f64>() / n;
    let num: f64 = points.iter().map(|p| (p.0.ln() - mx) * (p.1.ln() - my)).sum();
    let den: f64 = points.iter().map(|p| (p.0.ln() - mx).powi(2)).sum();
    num / den
}

const FIG2A_HEADER: &str = "alpha,rho00_0,abs_im_rho10_0,abs_im_rho20_0,abs_re_rho00_2,abs_im_rho10_wp,abs_im_rho20_wp";

fn fig2a(common: &Common) -> Outcome {
    let (model, run) = load(&common.config, &[])?;
    if model.dim() < 3 {
        return Err(Error::InvalidArgument("fig2a needs states 0, 1 and 2".into()).into());
    }
    let wp = solve_coherences_direct(&model, &run, 0.0, 0)?;
    let points: Vec<ScalingPoint> = ALPHAS.par_iter().map(|&a| scaled_steady(&model, &run, a)).collect::<Result<_>>()?;

    let mut csv = format!("{FIG2A_HEADER}\n");
    for p in &points {
        let s = &p.last;
        csv.push_str(&format!(
            "{},{},{},{},{},{},{}\n",
            fmt17(p.alpha),
            fmt17(s.get(0, 0, 0).re),
            fmt17(s.get(1, 0, 0).im.abs()),
            fmt17(s.get(2, 0, 0).im.abs()),
            fmt17(s.get(0, 0, 2).re.abs()),
            fmt17(wp.get(1, 0).im.abs() / p.alpha),
            fmt17(wp.get(2, 0).im.abs() / p.alpha)
        ));
    }
    let fit: Vec<&ScalingPoint> = points.iter().filter(|p| p.alpha >= FIT_ALPHA_MIN).collect();
    let slope = |f: &dyn Fn(&HarmonicStack) -> f64| log_log_slope(&fit.iter().map(|p| (p.alpha, f(&p.last))).collect::<Vec<_>>());
    let fits = json!({
        "fit_alphas": fit.iter().map(|p| p.alpha).collect::<Vec<_>>(),
        "slope_abs_im_rho10_0": slope(&|s| s.get(1, 0, 0).im.abs()),
        "slope_abs_im_rho20_0": slope(&|s| s.get(2, 0, 0).im.abs()),
        "slope_abs_re_rho00_2": slope(&|s| s.get(0, 0, 2).re.abs()),
    });
    let out = vec![emit(&common.out, "fig2a", &csv, common.format)?, emit_json(&common.out, "fig2a_fit", &fits)?];
    Ok(json!({ "command": "figures", "figure": "fig2a", "files": files(&out), "fit": fits }))
}

fn fig2b(common: &Common, window: &Window) -> Outcome {
    let extra: Vec<(String, String)> = FIG2B_COUPLING.iter().map(|(k, v)| (k.to_string(), v.to_string())).collect();
    let (model, run) = load(&common.config, &extra)?;
    let on = run_sweep(&model, &run, window, Method::Spectral, 15)?;
    let off = run_sweep(&model.with_coupling_scale(0.0), &run, window, Method::Spectral, 15)?;
    let (mut out, s_on) = write_sweep(common, &on, "_fig2b_coupled")?;
    let (more, s_off) = write_sweep(common, &off, "_fig2b_uncoupled")?;
    out.extend(more);
    Ok(json!({ "command": "figures", "figure": "fig2b", "files": files(&out), "coupled": s_on, "uncoupled": s_off }))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn slope_of_a_power_law() {
        let pts: Vec<(f64, f64)> = [1.0, 3.0, 10.0, 40.0].iter().map(|&a: &f64| (a, 7.0 * a.powf(-2.0))).collect();
        assert!((log_log_slope(&pts) + 2.0).abs() < 1e-12);
    }
}
