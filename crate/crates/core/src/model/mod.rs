//! Level scheme, drive fields and run parameters.
//!
//! All frequencies, rates and Rabi frequencies are stored as angular
//! frequencies in rad/ns and times in ns. Configuration documents quote
//! frequencies in GHz (ordinary frequency), so every frequency-valued input
//! is multiplied by 2π on load.
//!
//! Energies are never stored in absolute form. A group-A state carries its
//! offset `delta_omega` from the reference frequency, a group-B state its
//! probe detuning `detuning_p` quoted at the reference probe frequency
//! `omega_p0`. Sweeping the probe by Δω_p shifts every B-state detuning by
//! Δω_p.

mod config;
mod validate;

pub use config::{apply_override, load_config, load_config_with_overrides, parse_override, to_config_string};
pub use validate::{validate_model, validate_run, ValidationReport, Violation, ViolationKind};

use std::collections::BTreeMap;
use std::f64::consts::TAU;

use faer::Mat;
use num_complex::Complex64;
use serde::{Deserialize, Serialize};

/// Conversion factor GHz (ordinary frequency) → rad/ns.
pub const GHZ: f64 = TAU;

/// Speed of light in m/ns.
pub const SPEED_OF_LIGHT: f64 = 0.299_792_458;

/// Rabi frequency in rad/ns produced by a dipole of one e·a₀ in a field of
/// amplitude 1 V/m.
pub const DIPOLE_FIELD_TO_RAD_PER_NS: f64 = ELEMENTARY_CHARGE * BOHR_RADIUS / HBAR * 1e-9;

const ELEMENTARY_CHARGE: f64 = 1.602_176_634e-19;
const BOHR_RADIUS: f64 = 5.291_772_109_03e-11;
const HBAR: f64 = 1.054_571_817e-34;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Group {
    A,
    B,
}

#[derive(Clone, Debug, PartialEq)]
pub struct StateSpec {
    pub index: usize,
    pub group: Group,
    /// δω⁽ⁱ⁾ = ω⁽ⁱ⁾ − ω_ref, group A only.
    pub delta_omega: Option<f64>,
    /// Δ_p⁽ⁱ⁾ = ω_p0 − (ω⁽ⁱ⁾ − ω_ref), group B only.
    pub detuning_p: Option<f64>,
    /// Γ⁽ⁱ⁾, total decay rate.
    pub gamma_total: f64,
}

impl StateSpec {
    pub fn a(index: usize, delta_omega: f64) -> Self {
        StateSpec { index, group: Group::A, delta_omega: Some(delta_omega), detuning_p: None, gamma_total: 0.0 }
    }

    pub fn b(index: usize, detuning_p: f64, gamma_total: f64) -> Self {
        StateSpec { index, group: Group::B, delta_omega: None, detuning_p: Some(detuning_p), gamma_total }
    }

    /// Diagonal entry of the rotating-frame Hamiltonian (in units of ħ):
    /// δω for group A, −Δ_p for group B.
    pub fn frame_energy(&self) -> f64 {
        match self.group {
            Group::A => self.delta_omega.unwrap_or(0.0),
            Group::B => -self.detuning_p.unwrap_or(0.0),
        }
    }
}

/// Jump operator √Γ |to⟩⟨from|.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CollapseChannel {
    pub from: usize,
    pub to: usize,
    pub rate: f64,
}

#[derive(Clone, Debug)]
pub struct DriveConfig {
    /// Coupling-field angular frequency ω_c.
    pub omega_c: f64,
    /// Reference probe angular frequency ω_p0.
    pub omega_p0: f64,
    /// Ω_p;ij, 𝒩×𝒩. Only entries pairing a B state with an A state are used.
    pub rabi_p: Mat<Complex64>,
    /// Ω_c;ij, 𝒩×𝒩, nonzero only within group B.
    pub rabi_c: Mat<Complex64>,
    /// N_d⟨j|D_z|i⟩/(ε₀ℰ_p) keyed by (i ∈ B, j ∈ A).
    pub dipole_scale: BTreeMap<(usize, usize), f64>,
}

impl DriveConfig {
    pub fn dipole_scale(&self, i: usize, j: usize) -> f64 {
        self.dipole_scale.get(&(i, j)).copied().unwrap_or(0.0)
    }
}

/// Pure dephasing rates γ_ij keyed by (i ∈ B, j ∈ A).
#[derive(Clone, Debug, Default, PartialEq)]
pub struct DephasingSpec {
    pub gamma_extra: BTreeMap<(usize, usize), f64>,
}

impl DephasingSpec {
    pub fn rate(&self, i: usize, j: usize) -> f64 {
        self.gamma_extra.get(&(i, j)).copied().unwrap_or(0.0)
    }
}

#[derive(Clone, Debug)]
pub struct SystemModel {
    /// Sorted by index, indices 0..𝒩.
    pub states: Vec<StateSpec>,
    pub channels: Vec<CollapseChannel>,
    pub drive: DriveConfig,
    pub dephasing: DephasingSpec,
}

impl SystemModel {
    pub fn dim(&self) -> usize {
        self.states.len()
    }

    pub fn is_b(&self, i: usize) -> bool {
        self.states[i].group == Group::B
    }

    pub fn group_a(&self) -> Vec<usize> {
        self.indices_in(Group::A)
    }

    pub fn group_b(&self) -> Vec<usize> {
        self.indices_in(Group::B)
    }

    fn indices_in(&self, group: Group) -> Vec<usize> {
        self.states.iter().filter(|s| s.group == group).map(|s| s.index).collect()
    }

    pub fn gamma(&self, i: usize) -> f64 {
        self.states[i].gamma_total
    }

    /// `true` when every coupling Rabi frequency vanishes.
    pub fn coupling_is_zero(&self) -> bool {
        let n = self.dim();
        (0..n).all(|i| (0..n).all(|j| self.drive.rabi_c[(i, j)] == Complex64::new(0.0, 0.0)))
    }

    /// Copy with every probe Rabi frequency multiplied by `factor`.
    ///
    /// Dipole scales carry 1/ℰ_p and are divided by `factor`, so the
    /// susceptibility of the copy is that of the same medium.
    pub fn with_probe_scale(&self, factor: f64) -> SystemModel {
        let mut m = self.clone();
        m.drive.rabi_p = Mat::from_fn(self.dim(), self.dim(), |i, j| self.drive.rabi_p[(i, j)] * factor);
        for v in m.drive.dipole_scale.values_mut() {
            *v /= factor;
        }
        m
    }

    /// Copy with every coupling Rabi frequency multiplied by `factor`.
    pub fn with_coupling_scale(&self, factor: f64) -> SystemModel {
        let mut m = self.clone();
        m.drive.rabi_c = Mat::from_fn(self.dim(), self.dim(), |i, j| self.drive.rabi_c[(i, j)] * factor);
        m
    }

    /// Copy with the probe moved to ω_p0 + `delta_omega_p`: every B-state
    /// detuning grows by `delta_omega_p`, the reference stays put.
    pub fn with_probe_offset(&self, delta_omega_p: f64) -> SystemModel {
        let mut m = self.clone();
        for s in m.states.iter_mut().filter(|s| s.group == Group::B) {
            s.detuning_p = Some(s.detuning_p.unwrap_or(0.0) + delta_omega_p);
        }
        m
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct RunConfig {
    pub n_min: i32,
    pub n_max: i32,
    /// ns
    pub t_end: f64,
    /// Relative tolerance handed to the ODE integrator.
    pub ode_tol: f64,
    pub steady_tol: f64,
    /// Group-A index → ρ_ii(t = 0).
    pub initial_populations: BTreeMap<usize, f64>,
    /// Output sampling interval for trajectories, ns.
    pub sample_stride: f64,
}

impl RunConfig {
    pub const DEFAULT_N_MIN: i32 = -30;
    pub const DEFAULT_N_MAX: i32 = 30;

    /// Defaults, with all population in the lowest-index A state.
    pub fn defaults_for(model: &SystemModel) -> RunConfig {
        let mut initial_populations = BTreeMap::new();
        if let Some(&first) = model.group_a().first() {
            initial_populations.insert(first, 1.0);
        }
        RunConfig {
            n_min: Self::DEFAULT_N_MIN,
            n_max: Self::DEFAULT_N_MAX,
            t_end: 200.0,
            ode_tol: 1e-9,
            steady_tol: 1e-6,
            initial_populations,
            sample_stride: 0.05,
        }
    }

    pub fn population(&self, j: usize) -> f64 {
        self.initial_populations.get(&j).copied().unwrap_or(0.0)
    }

    pub fn with_truncation(&self, n_min: i32, n_max: i32) -> RunConfig {
        RunConfig { n_min, n_max, ..self.clone() }
    }

    /// Diagonal initial density matrix, no coherences.
    pub fn initial_density(&self, dim: usize) -> Mat<Complex64> {
        Mat::from_fn(dim, dim, |i, j| if i == j { Complex64::new(self.population(i), 0.0) } else { Complex64::new(0.0, 0.0) })
    }
}

/// Rabi frequencies Ω_ij = ℰ⟨i|D_z|j⟩/ħ in rad/ns from a dipole matrix in
/// units of e·a₀ and a field amplitude in V/m.
pub fn rabi_from_dipoles(dipoles: &Mat<Complex64>, field_amplitude: Complex64) -> Mat<Complex64> {
    Mat::from_fn(dipoles.nrows(), dipoles.ncols(), |i, j| field_amplitude * dipoles[(i, j)] * DIPOLE_FIELD_TO_RAD_PER_NS)
}

/// The five-state model of the worked example: one ground state, two
/// probe-coupled decaying states and two undamped states reached by the
/// coupling field. All values in rad/ns.
pub fn five_state_example() -> (SystemModel, RunConfig) {
    load_config(FIVE_STATE_CONFIG).expect("bundled config is valid")
}

/// Bundled configuration of the five-state example (strong coupling).
pub const FIVE_STATE_CONFIG: &str = include_str!("five_state.toml");
