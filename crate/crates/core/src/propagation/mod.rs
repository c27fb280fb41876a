//! Time evolution of the harmonic system, the full master equation and the
//! complex-energy von Neumann equation, plus steady-state detection and
//! eigen-evolution of the generator.

mod ode;
mod stack;

use std::f64::consts::TAU;
use std::io::Write;

use faer::Mat;
use num_complex::Complex64;

pub use ode::{dopri5, OdeOptions};
pub use stack::{harmonic_component, reconstruct_time_domain, HarmonicStack, SolverStats, Trajectory};

use crate::error::{Error, Result};
use crate::io::fmt17;
use crate::linalg::{eigen_biorthogonal, CsrMatrix};
use crate::liouvillian::{build_parts, commutator_superoperator, frame_hamiltonian, FloquetGenerator};
use crate::model::SystemModel;

/// Largest generator dimension `eigen_evolve` will decompose densely.
pub const EIGEN_EVOLVE_CAP: usize = 4096;

/// Absolute floor under the relative drift test of `detect_steady_state`.
pub const STEADY_FLOOR: f64 = 1e-14;

/// Time series of 𝒩×𝒩 density matrices.
pub type DensityTrajectory = Vec<(f64, Mat<Complex64>)>;

/// `0, stride, 2·stride, …` up to and including `t_end`.
pub fn uniform_times(t_end: f64, stride: f64) -> Vec<f64> {
    assert!(stride > 0.0 && t_end >= 0.0);
    let steps = (t_end / stride + 1e-9).floor() as usize;
    let mut times: Vec<f64> = (0..=steps).map(|k| k as f64 * stride).collect();
    if t_end - times[steps] > 1e-12 * t_end.max(1.0) {
        times.push(t_end);
    } else {
        times[steps] = t_end;
    }
    times
}

pub fn integrate_harmonics(gen: &FloquetGenerator, initial: &HarmonicStack, times: &[f64], tol: f64) -> Result<Trajectory> {
    let mut samples = Vec::with_capacity(times.len());
    let stats = integrate_harmonics_with(gen, initial, times, &OdeOptions::with_tol(tol), |s| samples.push(s.clone()))?;
    Ok(Trajectory { samples, omega_c: gen.omega_c, stats })
}

/// Streaming variant: `observe` sees each sample instead of it being stored.
pub fn integrate_harmonics_with<O>(
    gen: &FloquetGenerator,
    initial: &HarmonicStack,
    times: &[f64],
    opts: &OdeOptions,
    mut observe: O,
) -> Result<SolverStats>
where
    O: FnMut(&HarmonicStack),
{
    if initial.dim() != gen.parts.dim || initial.n_min() != gen.n_min || initial.n_max() != gen.n_max {
        return Err(Error::DimensionMismatch { expected: gen.dim(), found: initial.as_slice().len() });
    }
    let template = HarmonicStack::zeros(gen.parts.dim, gen.n_min, gen.n_max);
    dopri5(|_, y, dy| gen.apply_into(y, dy), initial.time, initial.as_slice(), times, opts, |t, y| {
        let mut s = template.clone();
        s.as_mut_slice().copy_from_slice(y);
        s.time = t;
        observe(&s);
    })
}

fn integrate_time_dependent<O>(
    l0: &CsrMatrix,
    l_plus: &CsrMatrix,
    l_minus: &CsrMatrix,
    omega_c: f64,
    rho0: &Mat<Complex64>,
    times: &[f64],
    opts: &OdeOptions,
    mut observe: O,
) -> Result<SolverStats>
where
    O: FnMut(f64, Mat<Complex64>),
{
    let d = rho0.nrows();
    let y0: Vec<Complex64> = (0..d * d).map(|k| rho0[(k / d, k % d)]).collect();
    let mut a = vec![Complex64::new(0.0, 0.0); d * d];
    let mut b = a.clone();
    let rhs = |t: f64, y: &[Complex64], dy: &mut [Complex64]| {
        dy.fill(Complex64::new(0.0, 0.0));
        l0.mul_add(y, dy);
        a.fill(Complex64::new(0.0, 0.0));
        b.fill(Complex64::new(0.0, 0.0));
        l_plus.mul_add(y, &mut a);
        l_minus.mul_add(y, &mut b);
        let e = Complex64::from_polar(1.0, -omega_c * t);
        let ec = e.conj();
        for k in 0..dy.len() {
            dy[k] += e * a[k] + ec * b[k];
        }
    };
    dopri5(rhs, 0.0, &y0, times, opts, |t, y| observe(t, Mat::from_fn(d, d, |i, j| y[i * d + j])))
}

/// Direct integration of dρ/dt = L(t)ρ with the coupling phases kept explicit.
pub fn integrate_full_lindblad(model: &SystemModel, rho0: &Mat<Complex64>, times: &[f64], tol: f64) -> Result<DensityTrajectory> {
    let mut out = Vec::with_capacity(times.len());
    integrate_full_lindblad_with(model, rho0, times, &OdeOptions::with_tol(tol), |t, r| out.push((t, r)))?;
    Ok(out)
}

pub fn integrate_full_lindblad_with<O>(
    model: &SystemModel,
    rho0: &Mat<Complex64>,
    times: &[f64],
    opts: &OdeOptions,
    observe: O,
) -> Result<SolverStats>
where
    O: FnMut(f64, Mat<Complex64>),
{
    check_initial(model, rho0)?;
    let parts = build_parts(model)?;
    integrate_time_dependent(&parts.l0, &parts.l_plus, &parts.l_minus, model.drive.omega_c, rho0, times, opts, observe)
}

/// dρ/dt = −i(H′ρ − ρH′†) with H′ = H^rw − iΣ_B Γ_i/2 |i⟩⟨i|. No jump terms and
/// no pure dephasing, so the trace decays.
pub fn integrate_von_neumann_complex_h(model: &SystemModel, rho0: &Mat<Complex64>, times: &[f64], tol: f64) -> Result<DensityTrajectory> {
    let mut out = Vec::with_capacity(times.len());
    integrate_von_neumann_complex_h_with(model, rho0, times, &OdeOptions::with_tol(tol), |t, r| out.push((t, r)))?;
    Ok(out)
}

pub fn integrate_von_neumann_complex_h_with<O>(
    model: &SystemModel,
    rho0: &Mat<Complex64>,
    times: &[f64],
    opts: &OdeOptions,
    observe: O,
) -> Result<SolverStats>
where
    O: FnMut(f64, Mat<Complex64>),
{
    check_initial(model, rho0)?;
    let h = frame_hamiltonian(model)?;
    let d = model.dim();
    let mut l0 = commutator_superoperator(&h.h_static);
    for a in 0..d {
        for b in 0..d {
            l0[(a * d + b, a * d + b)] -= Complex64::new(0.5 * (model.gamma(a) + model.gamma(b)), 0.0);
        }
    }
    let l0 = CsrMatrix::from_dense(&l0);
    let lp = CsrMatrix::from_dense(&commutator_superoperator(&h.h_plus));
    let lm = CsrMatrix::from_dense(&commutator_superoperator(&h.h_minus));
    integrate_time_dependent(&l0, &lp, &lm, model.drive.omega_c, rho0, times, opts, observe)
}

fn check_initial(model: &SystemModel, rho0: &Mat<Complex64>) -> Result<()> {
    if rho0.nrows() != model.dim() || rho0.ncols() != model.dim() {
        return Err(Error::DimensionMismatch { expected: model.dim(), found: rho0.nrows() });
    }
    Ok(())
}

/// A harmonic stack that passed the drift test.
#[derive(Clone, Debug)]
pub struct SteadyState(HarmonicStack);

impl SteadyState {
    pub fn stack(&self) -> &HarmonicStack {
        &self.0
    }

    pub fn into_inner(self) -> HarmonicStack {
        self.0
    }
}

/// Worst relative drift over the trailing window, with its (i, j, N).
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DriftReport {
    pub i: usize,
    pub j: usize,
    pub n: i32,
    pub drift: f64,
}

pub fn trailing_drift(traj: &Trajectory, window: f64) -> Result<DriftReport> {
    let last = traj.last().ok_or_else(|| Error::InvalidArgument("empty trajectory".into()))?;
    let t_last = last.time;
    let d = last.dim();
    let bd = d * d;
    let mut worst = DriftReport { i: 0, j: 0, n: last.n_min(), drift: 0.0 };
    let end = last.as_slice();
    let mut change = vec![0.0f64; end.len()];
    for s in traj.samples.iter().rev().take_while(|s| s.time >= t_last - window * (1.0 + 1e-12)) {
        for (c, (a, b)) in change.iter_mut().zip(s.as_slice().iter().zip(end)) {
            *c = c.max((a - b).norm());
        }
    }
    for (k, (c, v)) in change.iter().zip(end).enumerate() {
        let rel = c / v.norm().max(STEADY_FLOOR);
        if rel > worst.drift {
            let n = last.n_min() + (k / bd) as i32;
            worst = DriftReport { i: (k % bd) / d, j: k % d, n, drift: rel };
        }
    }
    Ok(worst)
}

/// Accept the final sample iff every component moves by less than
/// `steady_tol` relative (floor `STEADY_FLOOR`) across the trailing window.
/// `window` defaults to one coupling period.
pub fn detect_steady_state(traj: &Trajectory, window: Option<f64>, steady_tol: f64) -> Result<SteadyState> {
    if traj.len() < 2 {
        return Err(Error::InvalidArgument("steady-state detection needs at least two samples".into()));
    }
    let window = window.unwrap_or(TAU / traj.omega_c);
    let r = trailing_drift(traj, window)?;
    if r.drift < steady_tol {
        Ok(SteadyState(traj.last().unwrap().clone()))
    } else {
        Err(Error::NotConverged { i: r.i, j: r.j, n: r.n, drift: r.drift })
    }
}

/// Eigenvalues w_k with right vectors c_k (columns) and left vectors d_k
/// normalised so d_kᴴc_k = 1; `coefficients` are α_k = d_kᴴR(0).
#[derive(Clone, Debug)]
pub struct GeneratorEigensystem {
    pub eigenvalues: Vec<Complex64>,
    pub right: Mat<Complex64>,
    pub left: Mat<Complex64>,
    pub coefficients: Vec<Complex64>,
    /// Modes with |w| < 1e-10.
    pub steady_modes: Vec<usize>,
    pub residual: f64,
}

pub fn generator_eigensystem(gen: &FloquetGenerator, initial: &HarmonicStack) -> Result<GeneratorEigensystem> {
    if gen.dim() > EIGEN_EVOLVE_CAP {
        return Err(Error::Capacity { dim: gen.dim(), cap: EIGEN_EVOLVE_CAP });
    }
    if initial.as_slice().len() != gen.dim() {
        return Err(Error::DimensionMismatch { expected: gen.dim(), found: initial.as_slice().len() });
    }
    let e = eigen_biorthogonal(&gen.to_dense())?;
    let residual = e.biorthogonality_residual.max(e.completeness_residual);
    if !(residual <= 1e-6) {
        return Err(Error::DefectiveGenerator { residual });
    }
    let r0 = initial.as_slice();
    let n = gen.dim();
    let coefficients: Vec<Complex64> = (0..n).map(|k| (0..n).map(|r| e.left[(r, k)].conj() * r0[r]).sum()).collect();
    let steady_modes = e.values.iter().enumerate().filter(|(_, w)| w.norm() < 1e-10).map(|(k, _)| k).collect();
    Ok(GeneratorEigensystem { eigenvalues: e.values, right: e.right, left: e.left, coefficients, steady_modes, residual })
}

impl GeneratorEigensystem {
    /// Σ_k α_k c_k e^{w_k t}
    pub fn evaluate(&self, t: f64) -> Vec<Complex64> {
        let n = self.eigenvalues.len();
        let amp: Vec<Complex64> = (0..n).map(|k| self.coefficients[k] * (self.eigenvalues[k] * t).exp()).collect();
        (0..n).map(|r| (0..n).map(|k| self.right[(r, k)] * amp[k]).sum()).collect()
    }
}

/// R(t) = Σ_k α_k c_k e^{w_k t} sampled at `times`, measured from `initial.time`.
pub fn eigen_evolve(gen: &FloquetGenerator, initial: &HarmonicStack, times: &[f64]) -> Result<Trajectory> {
    let sys = generator_eigensystem(gen, initial)?;
    let mut samples = Vec::with_capacity(times.len());
    for &t in times {
        let data = sys.evaluate(t - initial.time);
        samples.push(HarmonicStack::from_vec(gen.parts.dim, gen.n_min, gen.n_max, t, data)?);
    }
    Ok(Trajectory { samples, omega_c: gen.omega_c, stats: SolverStats::default() })
}

/// Which harmonic components a CSV export keeps.
#[derive(Clone, Copy, Debug, Default)]
pub struct ComponentFilter {
    pub max_abs_n: Option<i32>,
    pub lower_triangle: bool,
}

pub const HARMONIC_CSV_HEADER: &str = "time_ns,i,j,N,re,im";
pub const DENSITY_CSV_HEADER: &str = "time_ns,i,j,re,im";

pub fn write_harmonic_rows<W: Write>(w: &mut W, stack: &HarmonicStack, filter: ComponentFilter) -> std::io::Result<()> {
    let d = stack.dim();
    for n in stack.harmonics() {
        if filter.max_abs_n.is_some_and(|m| n.abs() > m) {
            continue;
        }
        let c = stack.component(n);
        for i in 0..d {
            for j in 0..d {
                if filter.lower_triangle && j > i {
                    continue;
                }
                let v = c[i * d + j];
                writeln!(w, "{},{i},{j},{n},{},{}", fmt17(stack.time), fmt17(v.re), fmt17(v.im))?;
            }
        }
    }
    Ok(())
}

pub fn write_density_rows<W: Write>(w: &mut W, t: f64, rho: &Mat<Complex64>) -> std::io::Result<()> {
    for i in 0..rho.nrows() {
        for j in 0..rho.ncols() {
            let v = rho[(i, j)];
            writeln!(w, "{},{i},{j},{},{}", fmt17(t), fmt17(v.re), fmt17(v.im))?;
        }
    }
    Ok(())
}

pub fn write_trajectory_csv<W: Write>(mut w: W, traj: &Trajectory, filter: ComponentFilter) -> std::io::Result<()> {
    writeln!(w, "{HARMONIC_CSV_HEADER}")?;
    for s in &traj.samples {
        write_harmonic_rows(&mut w, s, filter)?;
    }
    Ok(())
}

pub fn write_density_csv<W: Write>(mut w: W, samples: &[(f64, Mat<Complex64>)]) -> std::io::Result<()> {
    writeln!(w, "{DENSITY_CSV_HEADER}")?;
    for (t, rho) in samples {
        write_density_rows(&mut w, *t, rho)?;
    }
    Ok(())
}

#[cfg(test)]
mod tests;
