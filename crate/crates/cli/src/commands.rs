use std::f64::consts::TAU;
use std::fs;
use std::path::PathBuf;
use std::process::ExitCode;

use floquet_core::io::fmt17;
use floquet_core::liouvillian::{assemble_generator, build_parts};
use floquet_core::model::{
    load_config_with_overrides, parse_override, validate_model, validate_run, RunConfig, SystemModel, FIVE_STATE_CONFIG, GHZ,
};
use floquet_core::propagation::{
    detect_steady_state, integrate_harmonics_with, reconstruct_time_domain, uniform_times, write_density_rows,
    write_harmonic_rows, ComponentFilter, HarmonicStack, OdeOptions, SolverStats, Trajectory, DENSITY_CSV_HEADER,
    HARMONIC_CSV_HEADER,
};
use floquet_core::spectrum::{
    absorption_coefficient, count_local_maxima, dressed_for_source, susceptibility, sweep, uniform_grid, write_markers_csv,
    write_spectrum_csv, Coherences, SpectrumResult, SweepMethod, SweepOptions,
};
use floquet_core::weakprobe::{spectral_terms, write_dressed_csv};
use floquet_core::{Error, Result};
use serde_json::{json, Value};

use crate::output::emit;
use crate::{exit, Common, ConfigArgs, Failure, Method, Window};

pub type Outcome = std::result::Result<Value, Failure>;

fn read_config(cfg: &ConfigArgs) -> Result<String> {
    match &cfg.config {
        Some(p) => fs::read_to_string(p).map_err(|e| Error::Io(format!("{}: {e}", p.display()))),
        None => Ok(FIVE_STATE_CONFIG.to_string()),
    }
}

/// Parse, apply `extra` then the user's overrides, and validate.
pub fn load(cfg: &ConfigArgs, extra: &[(String, String)]) -> std::result::Result<(SystemModel, RunConfig), Failure> {
    let text = read_config(cfg)?;
    let mut overrides = extra.to_vec();
    for s in &cfg.set {
        overrides.push(parse_override(s)?);
    }
    let (model, run) = load_config_with_overrides(&text, &overrides)?;
    let report = validate_model(&model).merge(validate_run(&run, &model));
    if !report.is_empty() {
        return Err(Failure::Violations(report));
    }
    Ok((model, run))
}

pub fn validate(cfg: &ConfigArgs) -> ExitCode {
    let parsed = read_config(cfg).and_then(|text| {
        let overrides = cfg.set.iter().map(|s| parse_override(s)).collect::<Result<Vec<_>>>()?;
        load_config_with_overrides(&text, &overrides)
    });
    match parsed {
        Ok((model, run)) => {
            let report = validate_model(&model).merge(validate_run(&run, &model));
            for v in &report.violations {
                println!("{}", serde_json::to_string(v).expect("violation serialises"));
            }
            if report.is_empty() {
                ExitCode::SUCCESS
            } else {
                ExitCode::from(exit::VIOLATIONS)
            }
        }
        Err(e) => crate::fail(Failure::Core(e)),
    }
}

/// Harmonic integration of `model` from the run's initial state, streaming
/// every sample to `observe`.
pub fn integrate(model: &SystemModel, run: &RunConfig, times: &[f64], observe: impl FnMut(&HarmonicStack)) -> Result<SolverStats> {
    let gen = assemble_generator(build_parts(model)?, run.n_min, run.n_max, model.drive.omega_c)?;
    let init = HarmonicStack::from_density(&run.initial_density(model.dim()), run.n_min, run.n_max)?;
    integrate_harmonics_with(&gen, &init, times, &OdeOptions::with_tol(run.ode_tol), observe)
}

/// Integrate to t_end, keeping the samples of the last coupling period.
pub fn integrate_tail(model: &SystemModel, run: &RunConfig) -> Result<Trajectory> {
    let period = TAU / model.drive.omega_c;
    let times = uniform_times(run.t_end, run.sample_stride);
    let mut tail = Vec::new();
    let stats = integrate(model, run, &times, |s| {
        if s.time >= run.t_end - period * (1.0 + 1e-9) {
            tail.push(s.clone());
        }
    })?;
    Ok(Trajectory { samples: tail, omega_c: model.drive.omega_c, stats })
}

pub fn files(paths: &[PathBuf]) -> Value {
    Value::from(paths.iter().map(|p| p.display().to_string()).collect::<Vec<_>>())
}

pub fn evolve(common: &Common, max_n: i32) -> Outcome {
    let (model, run) = load(&common.config, &[])?;
    let filter = ComponentFilter { max_abs_n: Some(max_n), lower_triangle: true };
    let mut harmonics = format!("{HARMONIC_CSV_HEADER}\n").into_bytes();
    let mut density = format!("{DENSITY_CSV_HEADER}\n").into_bytes();
    let mut io_err = None;
    let stats = integrate(&model, &run, &uniform_times(run.t_end, run.sample_stride), |s| {
        let rho = reconstruct_time_domain(s, s.time, model.drive.omega_c);
        if let Err(e) = write_harmonic_rows(&mut harmonics, s, filter).and_then(|_| write_density_rows(&mut density, s.time, &rho)) {
            io_err.get_or_insert(e);
        }
    })?;
    if let Some(e) = io_err {
        return Err(Error::from(e).into());
    }
    let out = vec![
        emit(&common.out, "harmonics", &String::from_utf8_lossy(&harmonics), common.format)?,
        emit(&common.out, "density", &String::from_utf8_lossy(&density), common.format)?,
    ];
    Ok(json!({ "command": "evolve", "files": files(&out), "stats": stats }))
}

pub fn steady(common: &Common) -> Outcome {
    let (model, run) = load(&common.config, &[])?;
    let traj = integrate_tail(&model, &run)?;
    let steady = detect_steady_state(&traj, None, run.steady_tol)?;
    let mut csv = format!("{HARMONIC_CSV_HEADER}\n").into_bytes();
    write_harmonic_rows(&mut csv, steady.stack(), ComponentFilter::default()).map_err(Error::from)?;
    let out = vec![emit(&common.out, "steady", &String::from_utf8_lossy(&csv), common.format)?];
    let chi = susceptibility(&model, Coherences::Steady(&steady))?;
    let k = absorption_coefficient(chi, model.drive.omega_p0)?;
    Ok(json!({
        "command": "steady",
        "files": files(&out),
        "t_end_ns": run.t_end,
        "chi": [chi.re, chi.im],
        "K": k,
        "stats": traj.stats,
    }))
}

fn default_source(model: &SystemModel, run: &RunConfig) -> Result<usize> {
    model
        .group_a()
        .into_iter()
        .find(|&j| run.population(j) != 0.0)
        .ok_or_else(|| Error::InvalidArgument("no populated group-A state".into()))
}

pub fn dressed(common: &Common, source: Option<usize>) -> Outcome {
    let (model, run) = load(&common.config, &[])?;
    let j = match source {
        Some(j) => j,
        None => default_source(&model, &run)?,
    };
    let d = dressed_for_source(&model, &run, j)?;
    let terms = spectral_terms(&d, &model, &run, j)?;
    let mut csv = Vec::new();
    write_dressed_csv(&mut csv, &d, &terms).map_err(Error::from)?;
    let out = vec![emit(&common.out, "dressed", &String::from_utf8_lossy(&csv), common.format)?];
    Ok(json!({
        "command": "dressed",
        "files": files(&out),
        "source": j,
        "states": d.len(),
        "eigen_residual": d.eigen_residual,
        "biorthogonality_residual": d.biorthogonality_residual,
        "completeness_residual": d.completeness_residual,
    }))
}

pub fn run_sweep(model: &SystemModel, run: &RunConfig, window: &Window, method: Method, top_k: usize) -> Result<SpectrumResult> {
    if !(window.from < window.to) || window.points < 2 {
        return Err(Error::InvalidArgument("spectrum window needs from < to and at least two points".into()));
    }
    let grid = uniform_grid(window.from * GHZ, window.to * GHZ, window.points);
    let method = match method {
        Method::Spectral => SweepMethod::Spectral,
        Method::Direct => SweepMethod::Direct,
    };
    sweep(model, run, &grid, &SweepOptions { method, top_k, contributions: false })
}

/// Spectrum and marker files for one sweep, plus a summary.
pub fn write_sweep(common: &Common, result: &SpectrumResult, suffix: &str) -> Result<(Vec<PathBuf>, Value)> {
    let mut spectrum = Vec::new();
    write_spectrum_csv(&mut spectrum, result)?;
    let mut markers = Vec::new();
    write_markers_csv(&mut markers, &result.markers)?;
    let out = vec![
        emit(&common.out, &format!("spectrum{suffix}"), &String::from_utf8_lossy(&spectrum), common.format)?,
        emit(&common.out, &format!("markers{suffix}"), &String::from_utf8_lossy(&markers), common.format)?,
    ];
    let k: Vec<f64> = result.grid.iter().map(|p| p.k_abs).collect();
    let failed = result.grid.iter().filter(|p| p.error.is_some()).count();
    let peak = result.grid.iter().filter(|p| p.error.is_none()).max_by(|a, b| a.k_abs.total_cmp(&b.k_abs));
    let summary = json!({
        "points": result.grid.len(),
        "failed_points": failed,
        "k_local_maxima": count_local_maxima(&k),
        "k_peak_delta_omega_p_GHz": peak.map(|p| fmt17(p.delta_omega_p / GHZ)),
        "markers": result.markers.len(),
        "n_min": result.n_min,
        "n_max": result.n_max,
    });
    Ok((out, summary))
}

pub fn spectrum(common: &Common, window: &Window, method: Method, top_k: usize) -> Outcome {
    let (model, run) = load(&common.config, &[])?;
    let result = run_sweep(&model, &run, window, method, top_k)?;
    let (out, summary) = write_sweep(common, &result, "")?;
    Ok(json!({ "command": "spectrum", "files": files(&out), "summary": summary }))
}
