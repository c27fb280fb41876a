//! Superoperator parts of the rotating-frame master equation and the
//! block-tridiagonal generator acting on stacked harmonic components.
//!
//! Density matrices are vectorised row-major: ρ_ij sits at `i * 𝒩 + j`.
//! With that order vec(Aρ) = (A ⊗ I) vec ρ and vec(ρA) = (I ⊗ Aᵀ) vec ρ.
//! Harmonic stacks are block-major, block N first at offset
//! `(N − n_min) · 𝒩²`.

use std::io::Write;

use faer::Mat;
use num_complex::Complex64;

use crate::error::{Error, Result};
use crate::linalg::CsrMatrix;
use crate::model::{Group, SystemModel};
use crate::propagation::HarmonicStack;

const I: Complex64 = Complex64 { re: 0.0, im: 1.0 };
const ZERO: Complex64 = Complex64 { re: 0.0, im: 0.0 };

/// Largest generator dimension `assemble_generator` accepts by default.
pub const DEFAULT_GENERATOR_CAP: usize = 1 << 22;

/// L(t) = L₀ + e^{iω_c t} L₋ + e^{−iω_c t} L₊.
#[derive(Clone, Debug)]
pub struct SuperoperatorParts {
    pub l0: CsrMatrix,
    pub l_plus: CsrMatrix,
    pub l_minus: CsrMatrix,
    pub dim: usize,
}

/// Split rotating-frame Hamiltonian: H(t) = H_static + e^{−iω_c t} H₊ + e^{iω_c t} H₋, in units of ħ.
#[derive(Clone, Debug)]
pub struct FrameHamiltonian {
    pub h_static: Mat<Complex64>,
    pub h_plus: Mat<Complex64>,
    pub h_minus: Mat<Complex64>,
}

impl FrameHamiltonian {
    pub fn at(&self, t: f64, omega_c: f64) -> Mat<Complex64> {
        let e = Complex64::from_polar(1.0, -omega_c * t);
        let n = self.h_static.nrows();
        Mat::from_fn(n, n, |i, j| self.h_static[(i, j)] + e * self.h_plus[(i, j)] + e.conj() * self.h_minus[(i, j)])
    }
}

pub(crate) fn check_topology(model: &SystemModel) -> Result<()> {
    let n = model.dim();
    for i in 0..n {
        for j in 0..n {
            let gi = model.states[i].group;
            let gj = model.states[j].group;
            if model.drive.rabi_c[(i, j)] != ZERO && (gi == Group::A || gj == Group::A) {
                return Err(Error::Topology(format!("coupling Rabi frequency ({i},{j}) touches group A")));
            }
            if model.drive.rabi_p[(i, j)] != ZERO && gi == gj {
                return Err(Error::Topology(format!("probe Rabi frequency ({i},{j}) does not pair A with B")));
            }
        }
    }
    Ok(())
}

/// Rotating-wave-frame Hamiltonian with the probe in the RWA and the
/// coupling field kept exactly.
pub fn frame_hamiltonian(model: &SystemModel) -> Result<FrameHamiltonian> {
    check_topology(model)?;
    let n = model.dim();
    let mut h_static = Mat::<Complex64>::zeros(n, n);
    for s in &model.states {
        h_static[(s.index, s.index)] = Complex64::new(s.frame_energy(), 0.0);
    }
    for i in model.group_b() {
        for j in model.group_a() {
            let w = model.drive.rabi_p[(i, j)];
            h_static[(i, j)] -= w * 0.5;
            h_static[(j, i)] -= w.conj() * 0.5;
        }
    }
    let mut h_plus = Mat::<Complex64>::zeros(n, n);
    for i in model.group_b() {
        for j in model.group_b() {
            h_plus[(i, j)] = -model.drive.rabi_c[(i, j)] * 0.5;
        }
    }
    let h_minus = h_plus.adjoint().to_owned();
    Ok(FrameHamiltonian { h_static, h_plus, h_minus })
}

/// −i[H, ·] as an 𝒩²×𝒩² matrix.
pub fn commutator_superoperator(h: &Mat<Complex64>) -> Mat<Complex64> {
    let n = h.nrows();
    let mut s = Mat::<Complex64>::zeros(n * n, n * n);
    for a in 0..n {
        for b in 0..n {
            let row = a * n + b;
            for k in 0..n {
                s[(row, k * n + b)] -= I * h[(a, k)];
                s[(row, a * n + k)] += I * h[(k, b)];
            }
        }
    }
    s
}

/// Lindblad dissipators of every collapse channel plus pure dephasing of
/// the B–A coherences.
pub fn dissipator_superoperator(model: &SystemModel) -> Mat<Complex64> {
    let n = model.dim();
    let mut s = Mat::<Complex64>::zeros(n * n, n * n);
    for c in &model.channels {
        let g = c.rate;
        let (i, j) = (c.to, c.from);
        s[(i * n + i, j * n + j)] += Complex64::new(g, 0.0);
        for b in 0..n {
            s[(j * n + b, j * n + b)] -= Complex64::new(0.5 * g, 0.0);
            s[(b * n + j, b * n + j)] -= Complex64::new(0.5 * g, 0.0);
        }
    }
    for (&(i, j), &g) in &model.dephasing.gamma_extra {
        s[(i * n + j, i * n + j)] -= Complex64::new(g, 0.0);
        s[(j * n + i, j * n + i)] -= Complex64::new(g, 0.0);
    }
    s
}

pub fn build_parts(model: &SystemModel) -> Result<SuperoperatorParts> {
    let h = frame_hamiltonian(model)?;
    let mut l0 = commutator_superoperator(&h.h_static);
    let diss = dissipator_superoperator(model);
    l0 += &diss;
    Ok(SuperoperatorParts {
        l0: CsrMatrix::from_dense(&l0),
        l_plus: CsrMatrix::from_dense(&commutator_superoperator(&h.h_plus)),
        l_minus: CsrMatrix::from_dense(&commutator_superoperator(&h.h_minus)),
        dim: model.dim(),
    })
}

/// dR/dt = M R with A_N = L₀ + iNω_c on the diagonal, L₊ below and L₋ above.
#[derive(Clone, Debug)]
pub struct FloquetGenerator {
    pub parts: SuperoperatorParts,
    pub n_min: i32,
    pub n_max: i32,
    pub omega_c: f64,
}

pub fn assemble_generator(parts: SuperoperatorParts, n_min: i32, n_max: i32, omega_c: f64) -> Result<FloquetGenerator> {
    assemble_generator_with_cap(parts, n_min, n_max, omega_c, DEFAULT_GENERATOR_CAP)
}

pub fn assemble_generator_with_cap(
    parts: SuperoperatorParts,
    n_min: i32,
    n_max: i32,
    omega_c: f64,
    cap: usize,
) -> Result<FloquetGenerator> {
    if n_min > n_max {
        return Err(Error::InvalidArgument(format!("n_min = {n_min} exceeds n_max = {n_max}")));
    }
    let dim = (n_max - n_min + 1) as usize * parts.dim * parts.dim;
    if dim > cap {
        return Err(Error::Capacity { dim, cap });
    }
    Ok(FloquetGenerator { parts, n_min, n_max, omega_c })
}

impl FloquetGenerator {
    pub fn n_blocks(&self) -> usize {
        (self.n_max - self.n_min + 1) as usize
    }

    pub fn block_dim(&self) -> usize {
        self.parts.dim * self.parts.dim
    }

    pub fn dim(&self) -> usize {
        self.n_blocks() * self.block_dim()
    }

    /// y = M x on flat block-major storage.
    pub fn apply_into(&self, x: &[Complex64], y: &mut [Complex64]) {
        let bd = self.block_dim();
        let nb = self.n_blocks();
        debug_assert_eq!(x.len(), nb * bd);
        y.fill(ZERO);
        for k in 0..nb {
            let harmonic = self.n_min + k as i32;
            let shift = I * (harmonic as f64 * self.omega_c);
            let (xk, yk) = (&x[k * bd..(k + 1) * bd], &mut y[k * bd..(k + 1) * bd]);
            self.parts.l0.mul_add(xk, yk);
            for (yi, xi) in yk.iter_mut().zip(xk) {
                *yi += shift * xi;
            }
            if k > 0 {
                self.parts.l_plus.mul_add(&x[(k - 1) * bd..k * bd], yk);
            }
            if k + 1 < nb {
                self.parts.l_minus.mul_add(&x[(k + 1) * bd..(k + 2) * bd], yk);
            }
        }
    }

    /// Right-hand side of the harmonic equations; components outside the
    /// truncation window are taken as zero.
    pub fn apply(&self, stack: &HarmonicStack) -> Result<HarmonicStack> {
        if stack.dim() != self.parts.dim || stack.n_min() != self.n_min || stack.n_max() != self.n_max {
            return Err(Error::DimensionMismatch { expected: self.dim(), found: stack.as_slice().len() });
        }
        let mut out = HarmonicStack::zeros(self.parts.dim, self.n_min, self.n_max);
        out.time = stack.time;
        self.apply_into(stack.as_slice(), out.as_mut_slice());
        Ok(out)
    }

    /// Dense M.
    pub fn to_dense(&self) -> Mat<Complex64> {
        let bd = self.block_dim();
        let nb = self.n_blocks();
        let mut m = Mat::<Complex64>::zeros(nb * bd, nb * bd);
        for k in 0..nb {
            let harmonic = self.n_min + k as i32;
            for (r, c, v) in self.parts.l0.triplets() {
                m[(k * bd + r, k * bd + c)] += v;
            }
            for r in 0..bd {
                m[(k * bd + r, k * bd + r)] += I * (harmonic as f64 * self.omega_c);
            }
            if k > 0 {
                for (r, c, v) in self.parts.l_plus.triplets() {
                    m[(k * bd + r, (k - 1) * bd + c)] += v;
                }
            }
            if k + 1 < nb {
                for (r, c, v) in self.parts.l_minus.triplets() {
                    m[(k * bd + r, (k + 1) * bd + c)] += v;
                }
            }
        }
        m
    }

    /// Nonzero entries of dense M as `row,col,re,im` lines.
    pub fn write_dense_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "row,col,re,im")?;
        let m = self.to_dense();
        for r in 0..m.nrows() {
            for c in 0..m.ncols() {
                let v = m[(r, c)];
                if v != ZERO {
                    writeln!(w, "{r},{c},{:.16e},{:.16e}", v.re, v.im)?;
                }
            }
        }
        Ok(())
    }
}
