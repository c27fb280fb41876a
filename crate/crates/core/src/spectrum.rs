//! Susceptibility, absorption coefficient, probe-frequency sweeps and
//! dressed-state markers.

use std::io::Write;

use num_complex::Complex64;
use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::io::fmt17;
use crate::model::{RunConfig, SystemModel, GHZ, SPEED_OF_LIGHT};
use crate::propagation::{detect_steady_state, SteadyState, Trajectory};
use crate::weakprobe::{
    build_floquet_hamiltonian, build_floquet_hamiltonian_for_source, dressed_states, solve_coherences_direct, spectral_terms,
    CoherenceVector, DressedStateSet, SpectralTerms,
};

/// Steady-state coherences from which χ can be formed.
pub enum Coherences<'a> {
    WeakProbe(&'a [CoherenceVector]),
    Steady(&'a SteadyState),
    /// Checked with `detect_steady_state` at the given tolerance first.
    Trajectory(&'a Trajectory, f64),
}

/// χ = Σ_{i∈B} Σ_{j∈A} g_ij ρ_ij;0 with g_ij the configured dipole scale.
pub fn susceptibility(model: &SystemModel, coherences: Coherences<'_>) -> Result<Complex64> {
    match coherences {
        Coherences::WeakProbe(xs) => {
            let mut chi = Complex64::new(0.0, 0.0);
            for x in xs {
                for &i in &x.index.b_states {
                    chi += x.get(i, 0) * model.drive.dipole_scale(i, x.source);
                }
            }
            Ok(chi)
        }
        Coherences::Steady(s) => Ok(chi_from_zeroth_block(model, s)),
        Coherences::Trajectory(traj, tol) => match detect_steady_state(traj, None, tol) {
            Ok(s) => Ok(chi_from_zeroth_block(model, &s)),
            Err(Error::NotConverged { .. }) => Err(Error::NotSteady),
            Err(e) => Err(e),
        },
    }
}

fn chi_from_zeroth_block(model: &SystemModel, s: &SteadyState) -> Complex64 {
    let stack = s.stack();
    let mut chi = Complex64::new(0.0, 0.0);
    for i in model.group_b() {
        for j in model.group_a() {
            chi += stack.get(i, j, 0) * model.drive.dipole_scale(i, j);
        }
    }
    chi
}

/// K = 2(ω_p/c) Im √(1 + χ), principal branch, in 1/m.
pub fn absorption_coefficient(chi: Complex64, omega_p: f64) -> Result<f64> {
    let z = Complex64::new(1.0, 0.0) + chi;
    if z.im == 0.0 && z.re <= 0.0 {
        return Err(Error::BranchCut { re: z.re, im: z.im });
    }
    Ok(2.0 * omega_p / SPEED_OF_LIGHT * z.sqrt().im)
}

#[derive(Clone, Debug, Serialize)]
pub struct SusceptibilityResult {
    /// Probe offset from ω_p0, rad/ns.
    pub delta_omega_p: f64,
    pub omega_p: f64,
    #[serde(serialize_with = "ser_complex")]
    pub chi: Complex64,
    pub k_abs: f64,
    /// Error kind when this grid point failed.
    pub error: Option<String>,
    /// Per-dressed-state partial sums of χ, when requested.
    #[serde(skip)]
    pub contributions: Option<Vec<Complex64>>,
}

fn ser_complex<S: serde::Serializer>(z: &Complex64, s: S) -> std::result::Result<S::Ok, S::Error> {
    [z.re, z.im].serialize(s)
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize)]
pub struct Marker {
    pub q: usize,
    /// Δω_p at which δω_j + Δω_p + Re ε_q = 0, rad/ns.
    pub delta_omega_p: f64,
    /// |Im ε_q + γ|, rad/ns.
    pub half_width: f64,
    /// |u_qᴴ b^(j)|, rad/ns.
    pub weight: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum SweepMethod {
    Spectral,
    Direct,
}

#[derive(Clone, Debug)]
pub struct SweepOptions {
    pub method: SweepMethod,
    pub top_k: usize,
    pub contributions: bool,
}

impl Default for SweepOptions {
    fn default() -> Self {
        SweepOptions { method: SweepMethod::Spectral, top_k: 15, contributions: false }
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectrumResult {
    pub grid: Vec<SusceptibilityResult>,
    pub markers: Vec<Marker>,
    pub n_min: i32,
    pub n_max: i32,
    pub method: SweepMethod,
}

/// `points` equally spaced values over [lo, hi].
pub fn uniform_grid(lo: f64, hi: f64, points: usize) -> Vec<f64> {
    match points {
        0 => vec![],
        1 => vec![0.5 * (lo + hi)],
        _ => (0..points).map(|k| lo + (hi - lo) * k as f64 / (points - 1) as f64).collect(),
    }
}

/// Spectral data for one source: pole terms and the χ-projection of each
/// right vector, Σ_i g_ij v_q[(i, 0)].
struct SourcePoles {
    terms: SpectralTerms,
    projection: Vec<Complex64>,
}

fn sources(model: &SystemModel, run: &RunConfig) -> Vec<usize> {
    model.group_a().into_iter().filter(|&j| run.population(j) != 0.0).collect()
}

fn dephasing_is_uniform(model: &SystemModel, j: usize) -> bool {
    let b = model.group_b();
    b.iter().all(|&i| model.dephasing.rate(i, j) == model.dephasing.rate(b[0], j))
}

/// Dressed states for source `j`: the shared F when its dephasing is uniform
/// over B, otherwise an F with γ_ij folded in.
pub fn dressed_for_source(model: &SystemModel, run: &RunConfig, j: usize) -> Result<DressedStateSet> {
    let f = if dephasing_is_uniform(model, j) {
        build_floquet_hamiltonian(model, run.n_min, run.n_max)?
    } else {
        build_floquet_hamiltonian_for_source(model, run.n_min, run.n_max, j)?
    };
    dressed_states(&f)
}

fn source_poles(dressed: &DressedStateSet, model: &SystemModel, run: &RunConfig, j: usize) -> Result<SourcePoles> {
    let terms = spectral_terms(dressed, model, run, j)?;
    let projection = (0..dressed.len())
        .map(|q| {
            dressed.index.b_states.iter().map(|&i| dressed.right[(dressed.index.row(i, 0).unwrap(), q)] * model.drive.dipole_scale(i, j)).sum()
        })
        .collect();
    Ok(SourcePoles { terms, projection })
}

fn finish_point(model: &SystemModel, dw: f64, chi: Result<Complex64>, contributions: Option<Vec<Complex64>>) -> SusceptibilityResult {
    let omega_p = model.drive.omega_p0 + dw;
    let outcome = chi.and_then(|chi| {
        if !chi.re.is_finite() || !chi.im.is_finite() {
            return Err(Error::NonFinite { t: f64::NAN });
        }
        absorption_coefficient(chi, omega_p).map(|k| (chi, k))
    });
    match outcome {
        Ok((chi, k_abs)) => SusceptibilityResult { delta_omega_p: dw, omega_p, chi, k_abs, error: None, contributions },
        Err(e) => SusceptibilityResult {
            delta_omega_p: dw,
            omega_p,
            chi: Complex64::new(f64::NAN, f64::NAN),
            k_abs: f64::NAN,
            error: Some(e.kind().to_string()),
            contributions: None,
        },
    }
}

/// χ and K at every probe offset in `grid` (rad/ns), in grid order.
/// Markers are computed for the first populated A state.
pub fn sweep(model: &SystemModel, run: &RunConfig, grid: &[f64], opts: &SweepOptions) -> Result<SpectrumResult> {
    let srcs = sources(model, run);
    let mut dressed = Vec::with_capacity(srcs.len());
    for &j in &srcs {
        dressed.push(dressed_for_source(model, run, j)?);
    }
    let points: Vec<SusceptibilityResult> = match opts.method {
        SweepMethod::Spectral => {
            let mut poles = Vec::with_capacity(srcs.len());
            for (&j, d) in srcs.iter().zip(&dressed) {
                poles.push(source_poles(d, model, run, j)?);
            }
            grid.par_iter()
                .map(|&dw| {
                    let nq: usize = poles.iter().map(|p| p.projection.len()).sum();
                    let mut parts = Vec::with_capacity(if opts.contributions { nq } else { 0 });
                    let mut chi = Complex64::new(0.0, 0.0);
                    for p in &poles {
                        for (c, g) in p.terms.coefficients(dw).iter().zip(&p.projection) {
                            let term = c * g;
                            chi += term;
                            if opts.contributions {
                                parts.push(term);
                            }
                        }
                    }
                    finish_point(model, dw, Ok(chi), opts.contributions.then_some(parts))
                })
                .collect()
        }
        SweepMethod::Direct => grid
            .par_iter()
            .map(|&dw| {
                let xs: Result<Vec<CoherenceVector>> = srcs.iter().map(|&j| solve_coherences_direct(model, run, dw, j)).collect();
                let chi = xs.and_then(|xs| susceptibility(model, Coherences::WeakProbe(&xs)));
                finish_point(model, dw, chi, None)
            })
            .collect(),
    };
    let markers = match (srcs.first(), dressed.first()) {
        (Some(&j), Some(d)) => {
            let lo = grid.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = grid.iter().copied().fold(f64::NEG_INFINITY, f64::max);
            let window = if grid.is_empty() { None } else { Some((lo, hi)) };
            dressed_markers(d, model, run, j, window, opts.top_k)?
        }
        _ => vec![],
    };
    Ok(SpectrumResult { grid: points, markers, n_min: run.n_min, n_max: run.n_max, method: opts.method })
}

/// Markers for source `j`, sorted by weight (descending, ties by q) and cut to
/// `top_k`. With a window, only states whose resonance lies within it, widened
/// by one full width 2|Im ε| on each side, are kept.
pub fn dressed_markers(
    dressed: &DressedStateSet,
    model: &SystemModel,
    run: &RunConfig,
    j: usize,
    window: Option<(f64, f64)>,
    top_k: usize,
) -> Result<Vec<Marker>> {
    let terms = spectral_terms(dressed, model, run, j)?;
    let mut out: Vec<Marker> = (0..dressed.len())
        .map(|q| Marker {
            q,
            delta_omega_p: -terms.poles[q].re - terms.frame_offset,
            half_width: terms.poles[q].im.abs(),
            weight: terms.overlaps[q].norm(),
        })
        .filter(|m| window.is_none_or(|(lo, hi)| m.delta_omega_p >= lo - 2.0 * m.half_width && m.delta_omega_p <= hi + 2.0 * m.half_width))
        .collect();
    out.sort_by(|a, b| b.weight.total_cmp(&a.weight).then(a.q.cmp(&b.q)));
    out.truncate(top_k);
    Ok(out)
}

/// Interior points strictly above both neighbours; plateaus count once.
pub fn count_local_maxima(values: &[f64]) -> usize {
    let mut count = 0;
    let mut k = 1;
    while k + 1 < values.len() {
        if values[k] > values[k - 1] {
            let mut e = k;
            while e + 1 < values.len() && values[e + 1] == values[k] {
                e += 1;
            }
            if e + 1 < values.len() && values[e + 1] < values[k] {
                count += 1;
            }
            k = e + 1;
        } else {
            k += 1;
        }
    }
    count
}

#[derive(Clone, Debug, Serialize)]
pub struct TruncationStep {
    pub n_min: i32,
    pub n_max: i32,
    #[serde(serialize_with = "ser_complex")]
    pub chi: Complex64,
    /// |χ − χ_previous| / |χ|, absent for the first window.
    pub change: Option<f64>,
}

#[derive(Clone, Debug, Serialize)]
pub struct TruncationReport {
    pub steps: Vec<TruncationStep>,
    /// First window whose successor changes χ by less than the tolerance.
    pub recommended: (i32, i32),
}

pub const TRUNCATION_TOL: f64 = 1e-8;

/// χ at one probe offset for each window of a strictly widening schedule.
pub fn truncation_convergence(model: &SystemModel, run: &RunConfig, delta_omega_p: f64, schedule: &[(i32, i32)]) -> Result<TruncationReport> {
    if schedule.len() < 2 {
        return Err(Error::InvalidArgument("truncation schedule needs at least two windows".into()));
    }
    for w in schedule.windows(2) {
        let ((a0, a1), (b0, b1)) = (w[0], w[1]);
        if !(b0 <= a0 && b1 >= a1 && (b0, b1) != (a0, a1)) {
            return Err(Error::InvalidArgument(format!("window ({b0}, {b1}) does not widen ({a0}, {a1})")));
        }
    }
    let srcs = sources(model, run);
    let mut steps: Vec<TruncationStep> = Vec::with_capacity(schedule.len());
    for &(lo, hi) in schedule {
        let r = run.with_truncation(lo, hi);
        let xs = srcs.iter().map(|&j| solve_coherences_direct(model, &r, delta_omega_p, j)).collect::<Result<Vec<_>>>()?;
        let chi = susceptibility(model, Coherences::WeakProbe(&xs))?;
        let change = steps.last().map(|p| relative_change(chi, p.chi));
        steps.push(TruncationStep { n_min: lo, n_max: hi, chi, change });
    }
    let first_ok = steps.iter().position(|s| s.change.is_some_and(|c| c < TRUNCATION_TOL));
    match first_ok {
        Some(k) if steps[k..].iter().all(|s| s.change.is_some_and(|c| c < TRUNCATION_TOL)) => {
            Ok(TruncationReport { recommended: (steps[k - 1].n_min, steps[k - 1].n_max), steps })
        }
        _ => Err(Error::TruncationNotConverged { change: steps.last().unwrap().change.unwrap() }),
    }
}

fn relative_change(a: Complex64, b: Complex64) -> f64 {
    let d = (a - b).norm();
    if d == 0.0 {
        0.0
    } else {
        d / a.norm()
    }
}

pub const SPECTRUM_CSV_HEADER: &str = "delta_omega_p_GHz,re_chi,im_chi,K";
pub const MARKERS_CSV_HEADER: &str = "q,delta_omega_p_GHz,half_width_GHz,weight";

/// Failed grid points are written as NaN rows.
pub fn write_spectrum_csv<W: Write>(mut w: W, result: &SpectrumResult) -> std::io::Result<()> {
    writeln!(w, "{SPECTRUM_CSV_HEADER}")?;
    for p in &result.grid {
        writeln!(w, "{},{},{},{}", fmt17(p.delta_omega_p / GHZ), fmt17(p.chi.re), fmt17(p.chi.im), fmt17(p.k_abs))?;
    }
    Ok(())
}

/// Offsets and half-widths in GHz, weight in GHz.
pub fn write_markers_csv<W: Write>(mut w: W, markers: &[Marker]) -> std::io::Result<()> {
    writeln!(w, "{MARKERS_CSV_HEADER}")?;
    for m in markers {
        writeln!(w, "{},{},{},{}", m.q, fmt17(m.delta_omega_p / GHZ), fmt17(m.half_width / GHZ), fmt17(m.weight / GHZ))?;
    }
    Ok(())
}
