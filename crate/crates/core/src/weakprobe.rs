//! Weak-probe steady state: the linear system for the B–A coherences, the
//! non-Hermitian Floquet Hamiltonian F and its dressed states.
//!
//! Every energy is measured in the probe frame at ω_p0, so a B state enters
//! through its detuning Δ_p^(i) and the sweep variable Δω_p appears only in
//! the scalar shift of the system matrix:
//!
//!   [(δω_j + Δω_p) I + F] x^(j) = b^(j),
//!
//!   F[(i,N),(i,N)]   = Nω_c + Δ_p^(i) + iΓ^(i)/2
//!   F[(i,N),(l,N−1)] = Ω_c;il / 2
//!   F[(i,N),(l,N+1)] = Ω*_c;li / 2
//!
//! and b^(j) is −Ω_p;ij ρ_jj / 2 on the N = 0 block. With this sign the
//! field-free quasienergies are Nω_c + Δ_p^(i) + iΓ^(i)/2 and a dressed state
//! q resonates at δω_j + Δω_p + Re ε_q = 0.

use std::io::Write;

use faer::Mat;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::io::fmt17;
use crate::linalg::{eigen_biorthogonal, BandedMatrix};
use crate::liouvillian::check_topology;
use crate::model::{Group, RunConfig, SystemModel, GHZ};

pub const EIGEN_RESIDUAL_MAX: f64 = 1e-9;
pub const BIORTHOGONALITY_MAX: f64 = 1e-8;
pub const COMPLETENESS_MAX: f64 = 1e-7;
/// Condition estimate beyond which the steady system counts as singular.
pub const CONDITION_MAX: f64 = 1e14;

/// Map between rows of F and (B state, harmonic) pairs; block-major in N.
#[derive(Clone, Debug, PartialEq)]
pub struct FloquetIndex {
    pub b_states: Vec<usize>,
    pub n_min: i32,
    pub n_max: i32,
}

impl FloquetIndex {
    pub fn new(model: &SystemModel, n_min: i32, n_max: i32) -> Result<Self> {
        if n_min > 0 || n_max < 0 {
            return Err(Error::InvalidArgument(format!("window [{n_min}, {n_max}] does not contain N = 0")));
        }
        Ok(FloquetIndex { b_states: model.group_b(), n_min, n_max })
    }

    pub fn n_b(&self) -> usize {
        self.b_states.len()
    }

    pub fn dim(&self) -> usize {
        (self.n_max - self.n_min + 1) as usize * self.n_b()
    }

    /// Row of (state, N), if both lie in the index.
    pub fn row(&self, state: usize, n: i32) -> Option<usize> {
        let p = self.b_states.iter().position(|&s| s == state)?;
        if n < self.n_min || n > self.n_max {
            return None;
        }
        Some((n - self.n_min) as usize * self.n_b() + p)
    }

    pub fn label(&self, row: usize) -> (usize, i32) {
        (self.b_states[row % self.n_b()], self.n_min + (row / self.n_b()) as i32)
    }
}

#[derive(Clone, Debug)]
pub struct FloquetHamiltonian {
    pub matrix: Mat<Complex64>,
    pub index: FloquetIndex,
    pub omega_c: f64,
    /// Source state whose pure-dephasing rates were folded into the diagonal.
    pub dephasing_source: Option<usize>,
}

impl FloquetHamiltonian {
    pub fn dim(&self) -> usize {
        self.index.dim()
    }
}

fn floquet_entries(model: &SystemModel, index: &FloquetIndex, extra: &dyn Fn(usize) -> f64, mut put: impl FnMut(usize, usize, Complex64)) {
    let omega = model.drive.omega_c;
    for n in index.n_min..=index.n_max {
        for &i in &index.b_states {
            let r = index.row(i, n).unwrap();
            let det = model.states[i].detuning_p.unwrap_or(0.0);
            put(r, r, Complex64::new(n as f64 * omega + det, 0.5 * model.gamma(i) + extra(i)));
            for &l in &index.b_states {
                if let Some(c) = index.row(l, n - 1) {
                    let w = model.drive.rabi_c[(i, l)];
                    if w != Complex64::new(0.0, 0.0) {
                        put(r, c, w * 0.5);
                    }
                }
                if let Some(c) = index.row(l, n + 1) {
                    let w = model.drive.rabi_c[(l, i)].conj();
                    if w != Complex64::new(0.0, 0.0) {
                        put(r, c, w * 0.5);
                    }
                }
            }
        }
    }
}

pub fn build_floquet_hamiltonian(model: &SystemModel, n_min: i32, n_max: i32) -> Result<FloquetHamiltonian> {
    build_hamiltonian(model, n_min, n_max, None)
}

/// F with the pure-dephasing rates γ_ij of source `j` added to the decay
/// widths, for models whose dephasing differs between B states.
pub fn build_floquet_hamiltonian_for_source(model: &SystemModel, n_min: i32, n_max: i32, j: usize) -> Result<FloquetHamiltonian> {
    check_source(model, j)?;
    build_hamiltonian(model, n_min, n_max, Some(j))
}

fn build_hamiltonian(model: &SystemModel, n_min: i32, n_max: i32, source: Option<usize>) -> Result<FloquetHamiltonian> {
    check_topology(model)?;
    let index = FloquetIndex::new(model, n_min, n_max)?;
    let d = index.dim();
    let mut matrix = Mat::<Complex64>::zeros(d, d);
    let extra = |i: usize| source.map_or(0.0, |j| model.dephasing.rate(i, j));
    floquet_entries(model, &index, &extra, |r, c, v| matrix[(r, c)] += v);
    Ok(FloquetHamiltonian { matrix, index, omega_c: model.drive.omega_c, dephasing_source: source })
}

fn check_source(model: &SystemModel, j: usize) -> Result<()> {
    match model.states.get(j) {
        Some(s) if s.group == Group::A => Ok(()),
        Some(_) => Err(Error::InvalidArgument(format!("source state {j} is not in group A"))),
        None => Err(Error::InvalidArgument(format!("source state {j} does not exist"))),
    }
}

/// Dressed states of F: ε_q, right vectors v_q and left vectors u_q (columns)
/// with u_qᴴv_q = 1, sorted by (Re ε, Im ε).
#[derive(Clone, Debug)]
pub struct DressedStateSet {
    pub quasienergies: Vec<Complex64>,
    pub right: Mat<Complex64>,
    pub left: Mat<Complex64>,
    pub index: FloquetIndex,
    pub omega_c: f64,
    pub dephasing_source: Option<usize>,
    pub eigen_residual: f64,
    pub biorthogonality_residual: f64,
    pub completeness_residual: f64,
    /// Name and value of the first failed defectiveness gate.
    pub defect: Option<(&'static str, f64)>,
}

impl DressedStateSet {
    pub fn len(&self) -> usize {
        self.quasienergies.len()
    }

    pub fn is_empty(&self) -> bool {
        self.quasienergies.is_empty()
    }

    /// (state, N) carrying the largest share of v_q.
    pub fn dominant_component(&self, q: usize) -> (usize, i32) {
        let mut best = (0, 0.0);
        for r in 0..self.right.nrows() {
            let a = self.right[(r, q)].norm();
            if a > best.1 {
                best = (r, a);
            }
        }
        self.index.label(best.0)
    }
}

pub fn dressed_states(f: &FloquetHamiltonian) -> Result<DressedStateSet> {
    let set = dressed_states_unchecked(f)?;
    match set.defect {
        Some((check, residual)) => Err(Error::DefectiveFloquetMatrix { check, residual }),
        None => Ok(set),
    }
}

/// As `dressed_states`, but a failed gate is recorded in `defect` instead of
/// returned as an error.
pub fn dressed_states_unchecked(f: &FloquetHamiltonian) -> Result<DressedStateSet> {
    let e = eigen_biorthogonal(&f.matrix)?;
    let defect = if !(e.eigen_residual <= EIGEN_RESIDUAL_MAX) {
        Some(("eigen_residual", e.eigen_residual))
    } else if !(e.biorthogonality_residual <= BIORTHOGONALITY_MAX) {
        Some(("biorthogonality", e.biorthogonality_residual))
    } else if !(e.completeness_residual <= COMPLETENESS_MAX) {
        Some(("completeness", e.completeness_residual))
    } else {
        None
    };
    Ok(DressedStateSet {
        quasienergies: e.values,
        right: e.right,
        left: e.left,
        index: f.index.clone(),
        omega_c: f.omega_c,
        dephasing_source: f.dephasing_source,
        eigen_residual: e.eigen_residual,
        biorthogonality_residual: e.biorthogonality_residual,
        completeness_residual: e.completeness_residual,
        defect,
    })
}

/// ρ^wp_{ij;N} for i ∈ B and one source j, in `FloquetIndex` order.
#[derive(Clone, Debug)]
pub struct CoherenceVector {
    pub source: usize,
    pub delta_omega_p: f64,
    pub index: FloquetIndex,
    pub values: Vec<Complex64>,
}

impl CoherenceVector {
    pub fn get(&self, i: usize, n: i32) -> Complex64 {
        self.index.row(i, n).map_or(Complex64::new(0.0, 0.0), |r| self.values[r])
    }

    pub fn norm(&self) -> f64 {
        crate::linalg::norm2(&self.values)
    }
}

/// b^(j) restricted to the N = 0 block, in `b_states` order.
pub fn source_vector(model: &SystemModel, run: &RunConfig, j: usize) -> Vec<Complex64> {
    let rho = run.population(j);
    model.group_b().iter().map(|&i| -model.drive.rabi_p[(i, j)] * (0.5 * rho)).collect()
}

/// Banded form of [(δω_j + Δω_p) I + F] with γ_ij folded in, and its rhs.
#[derive(Clone, Debug)]
pub struct WeakProbeSystem {
    pub source: usize,
    pub delta_omega_p: f64,
    pub index: FloquetIndex,
    pub matrix: BandedMatrix,
    pub rhs: Vec<Complex64>,
}

pub fn build_weak_probe_system(model: &SystemModel, run: &RunConfig, delta_omega_p: f64, j: usize) -> Result<WeakProbeSystem> {
    check_topology(model)?;
    check_source(model, j)?;
    let index = FloquetIndex::new(model, run.n_min, run.n_max)?;
    let bw = (2 * index.n_b()).saturating_sub(1);
    let mut matrix = BandedMatrix::zeros(index.dim(), bw, bw);
    let shift = model.states[j].delta_omega.unwrap_or(0.0) + delta_omega_p;
    let extra = |i: usize| model.dephasing.rate(i, j);
    floquet_entries(model, &index, &extra, |r, c, v| matrix.add(r, c, v));
    for r in 0..index.dim() {
        matrix.add(r, r, Complex64::new(shift, 0.0));
    }
    let mut rhs = vec![Complex64::new(0.0, 0.0); index.dim()];
    for (p, v) in source_vector(model, run, j).into_iter().enumerate() {
        rhs[index.row(index.b_states[p], 0).unwrap()] = v;
    }
    Ok(WeakProbeSystem { source: j, delta_omega_p, index, matrix, rhs })
}

/// Banded LU solve of the weak-probe steady system for source `j`, with the
/// truncation and populations taken from `run`.
pub fn solve_coherences_direct(model: &SystemModel, run: &RunConfig, delta_omega_p: f64, j: usize) -> Result<CoherenceVector> {
    let sys = build_weak_probe_system(model, run, delta_omega_p, j)?;
    let lu = sys.matrix.factorize()?;
    let cond = lu.condition_estimate();
    if !(cond <= CONDITION_MAX) {
        return Err(Error::SingularSystem { cond });
    }
    let values = lu.solve(&sys.rhs);
    Ok(CoherenceVector { source: j, delta_omega_p, index: sys.index, values })
}

/// Shift iγ applied to every pole for source `j`: zero when the dressed set
/// already carries that source's dephasing.
fn dephasing_shift(dressed: &DressedStateSet, model: &SystemModel, j: usize) -> Result<f64> {
    if let Some(s) = dressed.dephasing_source {
        return if s == j { Ok(0.0) } else { Err(Error::NonUniformDephasing { j }) };
    }
    let rates: Vec<f64> = dressed.index.b_states.iter().map(|&i| model.dephasing.rate(i, j)).collect();
    let g = rates.first().copied().unwrap_or(0.0);
    if rates.iter().any(|&r| r != g) {
        return Err(Error::NonUniformDephasing { j });
    }
    Ok(g)
}

/// Pole data of the spectral expansion for one source: x = Σ_q c_q v_q with
/// c_q = w_q / (δω_j + Δω_p + ε_q + iγ).
#[derive(Clone, Debug)]
pub struct SpectralTerms {
    pub source: usize,
    /// u_qᴴ b^(j)
    pub overlaps: Vec<Complex64>,
    /// Pole positions ε_q + iγ.
    pub poles: Vec<Complex64>,
    /// δω_j
    pub frame_offset: f64,
}

impl SpectralTerms {
    pub fn coefficients(&self, delta_omega_p: f64) -> Vec<Complex64> {
        let s = self.frame_offset + delta_omega_p;
        // a term with no residue is absent, even on top of its (undamped) pole
        self.overlaps
            .iter()
            .zip(&self.poles)
            .map(|(w, p)| if *w == Complex64::new(0.0, 0.0) { *w } else { w / (p + s) })
            .collect()
    }
}

pub fn spectral_terms(dressed: &DressedStateSet, model: &SystemModel, run: &RunConfig, j: usize) -> Result<SpectralTerms> {
    if let Some((check, residual)) = dressed.defect {
        return Err(Error::DefectiveInput(format!("{check} residual {residual:e}")));
    }
    check_source(model, j)?;
    if dressed.index.b_states != model.group_b() {
        return Err(Error::DimensionMismatch { expected: model.group_b().len(), found: dressed.index.n_b() });
    }
    let gamma = dephasing_shift(dressed, model, j)?;
    let b = source_vector(model, run, j);
    let rows: Vec<usize> = dressed.index.b_states.iter().map(|&i| dressed.index.row(i, 0).unwrap()).collect();
    let overlaps = (0..dressed.len()).map(|q| rows.iter().zip(&b).map(|(&r, bv)| dressed.left[(r, q)].conj() * bv).sum()).collect();
    let poles = dressed.quasienergies.iter().map(|e| e + Complex64::new(0.0, gamma)).collect();
    Ok(SpectralTerms { source: j, overlaps, poles, frame_offset: model.states[j].delta_omega.unwrap_or(0.0) })
}

/// x^(j) = Σ_q v_q (u_qᴴ b^(j)) / (δω_j + Δω_p + ε_q + iγ_ij).
pub fn solve_coherences_spectral(
    dressed: &DressedStateSet,
    model: &SystemModel,
    run: &RunConfig,
    delta_omega_p: f64,
    j: usize,
) -> Result<CoherenceVector> {
    let terms = spectral_terms(dressed, model, run, j)?;
    let c = terms.coefficients(delta_omega_p);
    let d = dressed.index.dim();
    let values = (0..d).map(|r| (0..dressed.len()).map(|q| dressed.right[(r, q)] * c[q]).sum()).collect();
    Ok(CoherenceVector { source: j, delta_omega_p, index: dressed.index.clone(), values })
}

/// −(Ω_p;ij/2) ρ_jj / (δω_j + Δω_p + Δ_p^(i) + iΓ^(i)/2 + iγ_ij), exact when
/// the coupling field is off.
pub fn zero_coupling_coherence(model: &SystemModel, run: &RunConfig, delta_omega_p: f64, i: usize, j: usize) -> Complex64 {
    let denom = Complex64::new(
        model.states[j].delta_omega.unwrap_or(0.0) + delta_omega_p + model.states[i].detuning_p.unwrap_or(0.0),
        0.5 * model.gamma(i) + model.dephasing.rate(i, j),
    );
    -model.drive.rabi_p[(i, j)] * (0.5 * run.population(j)) / denom
}

pub const DRESSED_CSV_HEADER: &str = "q,re_eps,im_eps,weight_j,dominant_state_index,dominant_N";

/// One row per dressed state; ε and the weight |u_qᴴb^(j)| in GHz.
pub fn write_dressed_csv<W: Write>(mut w: W, dressed: &DressedStateSet, terms: &SpectralTerms) -> std::io::Result<()> {
    writeln!(w, "{DRESSED_CSV_HEADER}")?;
    for q in 0..dressed.len() {
        let e = dressed.quasienergies[q] / GHZ;
        let (s, n) = dressed.dominant_component(q);
        writeln!(w, "{q},{},{},{},{s},{n}", fmt17(e.re), fmt17(e.im), fmt17(terms.overlaps[q].norm() / GHZ))?;
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{hermiticity_defect, identity_defect};
    use crate::model::{five_state_example, CollapseChannel, DephasingSpec, DriveConfig, StateSpec};
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::collections::BTreeMap;
    use std::f64::consts::TAU;

    fn c(re: f64, im: f64) -> Complex64 {
        Complex64::new(re, im)
    }

    fn uncoupled() -> (SystemModel, RunConfig) {
        let (m, r) = five_state_example();
        (m.with_coupling_scale(0.0), r)
    }

    fn rel(a: &[Complex64], b: &[Complex64]) -> f64 {
        let d: Vec<Complex64> = a.iter().zip(b).map(|(x, y)| x - y).collect();
        crate::linalg::norm2(&d) / crate::linalg::norm2(a)
    }

    #[test]
    fn five_state_window_two_matches_hand_indexing() {
        let (m, _) = five_state_example();
        let f = build_floquet_hamiltonian(&m, -2, 2).unwrap();
        assert_eq!(f.dim(), 20);
        // rows: (N + 2) * 4 + (state − 1)
        let row = |s: usize, n: i32| ((n + 2) * 4) as usize + s - 1;
        let det = [0.4, 1.0, -0.2, 0.8];
        let gam = [3.6, 0.9, 0.0, 0.0];
        let oc = |a: usize, b: usize| -> f64 {
            match (a, b) {
                (1, 3) | (3, 1) => 9.0,
                (1, 4) | (4, 1) => 11.0,
                (2, 3) | (3, 2) => 6.0,
                (2, 4) | (4, 2) => 9.0,
                _ => 0.0,
            }
        };
        let mut expected = Mat::<Complex64>::zeros(20, 20);
        for n in -2..=2 {
            for s in 1..=4 {
                expected[(row(s, n), row(s, n))] = c(TAU * (n as f64 + det[s - 1]), TAU * gam[s - 1] / 2.0);
                for l in 1..=4 {
                    if n > -2 {
                        expected[(row(s, n), row(l, n - 1))] = c(TAU * oc(s, l) / 2.0, 0.0);
                    }
                    if n < 2 {
                        expected[(row(s, n), row(l, n + 1))] = c(TAU * oc(l, s) / 2.0, 0.0);
                    }
                }
            }
        }
        for r in 0..20 {
            for col in 0..20 {
                assert!((f.matrix[(r, col)] - expected[(r, col)]).norm() < 1e-12, "({r},{col})");
            }
        }
        assert_eq!(f.index.label(row(3, 1)), (3, 1));
    }

    #[test]
    fn zero_coupling_hamiltonian_is_diagonal() {
        let (m, _) = uncoupled();
        let f = build_floquet_hamiltonian(&m, -3, 3).unwrap();
        for r in 0..f.dim() {
            for col in 0..f.dim() {
                if r != col {
                    assert_eq!(f.matrix[(r, col)], c(0.0, 0.0));
                }
            }
        }
        let d = dressed_states(&f).unwrap();
        assert_eq!(d.completeness_residual, 0.0);
    }

    #[test]
    fn undamped_hamiltonian_is_hermitian_with_real_spectrum() {
        let (mut m, _) = five_state_example();
        for s in m.states.iter_mut() {
            s.gamma_total = 0.0;
        }
        m.channels.clear();
        let f = build_floquet_hamiltonian(&m, -4, 4).unwrap();
        assert!(hermiticity_defect(&f.matrix) < 1e-14);
        let d = dressed_states(&f).unwrap();
        for e in &d.quasienergies {
            assert!(e.im.abs() < 1e-12);
        }
        // u_q ∝ v_q when F is Hermitian
        for q in 0..d.len() {
            let mut dot = c(0.0, 0.0);
            for r in 0..d.right.nrows() {
                dot += d.left[(r, q)].conj() * d.right[(r, q)];
            }
            let un = (0..d.right.nrows()).map(|r| d.left[(r, q)].norm_sqr()).sum::<f64>().sqrt();
            assert!((dot.norm() - un).abs() < 1e-8 * un);
        }
    }

    #[test]
    fn random_floquet_shaped_matrix_is_complete() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let nb: usize = 4;
        let mut a = Mat::<Complex64>::zeros(12, 12);
        for r in 0..12 {
            for col in 0..12 {
                if (r / nb).abs_diff(col / nb) <= 1 {
                    a[(r, col)] = c(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
                }
            }
        }
        let f = FloquetHamiltonian { matrix: a, index: FloquetIndex { b_states: vec![1, 2, 3, 4], n_min: -1, n_max: 1 }, omega_c: 1.0, dephasing_source: None };
        let d = dressed_states(&f).unwrap();
        let mut closure = Mat::<Complex64>::zeros(12, 12);
        for q in 0..12 {
            for r in 0..12 {
                for col in 0..12 {
                    closure[(r, col)] += d.right[(r, q)] * d.left[(col, q)].conj();
                }
            }
        }
        assert!(identity_defect(&closure) < 1e-8);
    }

    #[test]
    fn five_state_zero_coupling_check_value() {
        let (m, run) = uncoupled();
        let x = solve_coherences_direct(&m, &run, 0.0, 0).unwrap();
        let expect = c(-5.0, 0.0) / c(0.4, 1.8);
        assert!((expect - c(-0.588235294117647, 2.647058823529412)).norm() < 1e-14);
        assert!((x.get(1, 0) - expect).norm() < 1e-12 * expect.norm());
        assert!((zero_coupling_coherence(&m, &run, 0.0, 1, 0) - expect).norm() < 1e-13);
        // no harmonic mixing without coupling
        for n in [-3, -1, 1, 5] {
            assert_eq!(x.get(1, n), c(0.0, 0.0));
        }
    }

    #[test]
    fn zero_probe_gives_zero_coherences() {
        let (m, run) = five_state_example();
        let x = solve_coherences_direct(&m.with_probe_scale(0.0), &run, 0.3, 0).unwrap();
        assert!(x.values.iter().all(|v| *v == c(0.0, 0.0)));
    }

    #[test]
    fn zero_coupling_closed_form_limits() {
        let (m, run) = uncoupled();
        // on resonance with state 1
        let dw = -m.states[1].detuning_p.unwrap();
        let v = zero_coupling_coherence(&m, &run, dw, 1, 0);
        let expect = c(0.0, 1.0) * m.drive.rabi_p[(1, 0)] / m.gamma(1);
        assert!((v - expect).norm() < 1e-13 * expect.norm());
        let mut wide = m.clone();
        wide.states[1].gamma_total = 1e12;
        assert!(zero_coupling_coherence(&wide, &run, 0.0, 1, 0).norm() < 1e-10);
    }

    #[test]
    fn direct_and_spectral_agree_on_a_grid() {
        let (m, run) = five_state_example();
        let run = run.with_truncation(-10, 10);
        let f = build_floquet_hamiltonian(&m, run.n_min, run.n_max).unwrap();
        let d = dressed_states(&f).unwrap();
        for k in 0..100 {
            let dw = TAU * (-5.0 + 10.0 * k as f64 / 99.0);
            let a = solve_coherences_direct(&m, &run, dw, 0).unwrap();
            let b = solve_coherences_spectral(&d, &m, &run, dw, 0).unwrap();
            assert!(rel(&a.values, &b.values) < 1e-8, "Δω_p = {dw}");
        }
    }

    #[test]
    fn uncoupled_expansion_reduces_to_single_pole() {
        let (m, run) = uncoupled();
        let run = run.with_truncation(-2, 2);
        let d = dressed_states(&build_floquet_hamiltonian(&m, -2, 2).unwrap()).unwrap();
        let terms = spectral_terms(&d, &m, &run, 0).unwrap();
        assert_eq!(terms.overlaps.iter().filter(|w| w.norm() > 0.0).count(), 2);
        let x = solve_coherences_spectral(&d, &m, &run, 0.7, 0).unwrap();
        let z = zero_coupling_coherence(&m, &run, 0.7, 1, 0);
        assert!((x.get(1, 0) - z).norm() < 1e-13 * z.norm());
    }

    #[test]
    fn uniform_dephasing_shift_matches_direct_solve() {
        let (mut m, run) = five_state_example();
        let run = run.with_truncation(-8, 8);
        for i in 1..=4 {
            m.dephasing.gamma_extra.insert((i, 0), 0.37);
        }
        let d = dressed_states(&build_floquet_hamiltonian(&m, run.n_min, run.n_max).unwrap()).unwrap();
        for dw in [-3.0, 0.0, 2.5] {
            let a = solve_coherences_direct(&m, &run, dw, 0).unwrap();
            let b = solve_coherences_spectral(&d, &m, &run, dw, 0).unwrap();
            assert!(rel(&a.values, &b.values) < 1e-8);
        }
        let undephased = solve_coherences_direct(&five_state_example().0, &run, 0.0, 0).unwrap();
        assert!(rel(&undephased.values, &solve_coherences_direct(&m, &run, 0.0, 0).unwrap().values) > 1e-3);
    }

    #[test]
    fn state_dependent_dephasing_needs_per_source_hamiltonian() {
        let (mut m, run) = five_state_example();
        let run = run.with_truncation(-6, 6);
        m.dephasing.gamma_extra.insert((1, 0), 0.5);
        m.dephasing.gamma_extra.insert((3, 0), 0.2);
        let shared = dressed_states(&build_floquet_hamiltonian(&m, -6, 6).unwrap()).unwrap();
        assert!(matches!(solve_coherences_spectral(&shared, &m, &run, 0.0, 0), Err(Error::NonUniformDephasing { j: 0 })));
        let own = dressed_states(&build_floquet_hamiltonian_for_source(&m, -6, 6, 0).unwrap()).unwrap();
        let a = solve_coherences_direct(&m, &run, 1.1, 0).unwrap();
        let b = solve_coherences_spectral(&own, &m, &run, 1.1, 0).unwrap();
        assert!(rel(&a.values, &b.values) < 1e-8);
    }

    #[test]
    fn undamped_exact_resonance_is_singular() {
        let (mut m, run) = uncoupled();
        m.channels.clear();
        for s in m.states.iter_mut() {
            s.gamma_total = 0.0;
        }
        let dw = -m.states[1].detuning_p.unwrap();
        let run = run.with_truncation(-1, 1);
        assert!(matches!(solve_coherences_direct(&m, &run, dw, 0), Err(Error::SingularSystem { .. })));
    }

    #[test]
    fn flagged_set_is_refused() {
        let (m, run) = five_state_example();
        let mut d = dressed_states(&build_floquet_hamiltonian(&m, -1, 1).unwrap()).unwrap();
        d.defect = Some(("completeness", 1.0));
        assert!(matches!(solve_coherences_spectral(&d, &m, &run, 0.0, 0), Err(Error::DefectiveInput(_))));
        assert!(matches!(solve_coherences_direct(&m, &run, 0.0, 1), Err(Error::InvalidArgument(_))));
    }

    #[test]
    fn dressed_csv_has_one_row_per_state() {
        let (m, run) = five_state_example();
        let d = dressed_states(&build_floquet_hamiltonian(&m, -2, 2).unwrap()).unwrap();
        let t = spectral_terms(&d, &m, &run, 0).unwrap();
        let mut buf = Vec::new();
        write_dressed_csv(&mut buf, &d, &t).unwrap();
        let text = String::from_utf8(buf).unwrap();
        assert_eq!(text.lines().count(), 21);
        assert!(text.starts_with(DRESSED_CSV_HEADER));
    }

    fn two_level(det: f64, gamma: f64, rabi: Complex64) -> (SystemModel, RunConfig) {
        let mut rabi_p = Mat::<Complex64>::zeros(2, 2);
        rabi_p[(1, 0)] = rabi;
        rabi_p[(0, 1)] = rabi.conj();
        let m = SystemModel {
            states: vec![StateSpec::a(0, 0.0), StateSpec::b(1, det, gamma)],
            channels: vec![CollapseChannel { from: 1, to: 0, rate: gamma }],
            drive: DriveConfig { omega_c: 1.0, omega_p0: 1e5, rabi_p, rabi_c: Mat::zeros(2, 2), dipole_scale: BTreeMap::new() },
            dephasing: DephasingSpec::default(),
        };
        let r = RunConfig::defaults_for(&m).with_truncation(-2, 2);
        (m, r)
    }

    proptest! {
        #[test]
        fn coherences_are_linear_in_probe(scale in 1e-3f64..1e3, dw in -20.0f64..20.0) {
            let (m, run) = five_state_example();
            let run = run.with_truncation(-6, 6);
            let a = solve_coherences_direct(&m, &run, dw, 0).unwrap();
            let b = solve_coherences_direct(&m.with_probe_scale(scale), &run, dw, 0).unwrap();
            let scaled: Vec<Complex64> = a.values.iter().map(|v| v * scale).collect();
            prop_assert!(rel(&scaled, &b.values) < 1e-13);
        }

        #[test]
        fn two_level_direct_solve_is_closed_form(det in -30.0f64..30.0, gamma in 0.01f64..30.0, re in -10.0f64..10.0, im in -10.0f64..10.0) {
            let (m, run) = two_level(det, gamma, c(re, im));
            let x = solve_coherences_direct(&m, &run, 0.0, 0).unwrap();
            let z = zero_coupling_coherence(&m, &run, 0.0, 1, 0);
            prop_assert!((x.get(1, 0) - z).norm() <= 1e-12 * z.norm());
        }
    }
}
