use std::f64::consts::TAU;

use faer::Mat;
use num_complex::Complex64;
use serde::Serialize;

use crate::error::{Error, Result};

/// Harmonic components r_N of the density matrix, N ∈ [n_min, n_max].
///
/// Stored block-major; within a block ρ_ij;N sits at `i * dim + j`.
#[derive(Clone, Debug, PartialEq)]
pub struct HarmonicStack {
    dim: usize,
    n_min: i32,
    n_max: i32,
    pub time: f64,
    data: Vec<Complex64>,
}

impl HarmonicStack {
    pub fn zeros(dim: usize, n_min: i32, n_max: i32) -> Self {
        assert!(n_min <= n_max, "empty harmonic window");
        let blocks = (n_max - n_min + 1) as usize;
        HarmonicStack { dim, n_min, n_max, time: 0.0, data: vec![Complex64::new(0.0, 0.0); blocks * dim * dim] }
    }

    /// r₀ = ρ, every other component zero.
    pub fn from_density(rho: &Mat<Complex64>, n_min: i32, n_max: i32) -> Result<Self> {
        if rho.nrows() != rho.ncols() {
            return Err(Error::DimensionMismatch { expected: rho.nrows(), found: rho.ncols() });
        }
        if n_min > 0 || n_max < 0 {
            return Err(Error::InvalidArgument(format!("window [{n_min}, {n_max}] does not contain N = 0")));
        }
        let dim = rho.nrows();
        let mut s = HarmonicStack::zeros(dim, n_min, n_max);
        for i in 0..dim {
            for j in 0..dim {
                s.set(i, j, 0, rho[(i, j)]);
            }
        }
        Ok(s)
    }

    pub fn from_vec(dim: usize, n_min: i32, n_max: i32, time: f64, data: Vec<Complex64>) -> Result<Self> {
        let expected = (n_max - n_min + 1).max(0) as usize * dim * dim;
        if data.len() != expected || n_min > n_max {
            return Err(Error::DimensionMismatch { expected, found: data.len() });
        }
        Ok(HarmonicStack { dim, n_min, n_max, time, data })
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn n_min(&self) -> i32 {
        self.n_min
    }

    pub fn n_max(&self) -> i32 {
        self.n_max
    }

    pub fn harmonics(&self) -> std::ops::RangeInclusive<i32> {
        self.n_min..=self.n_max
    }

    pub fn contains(&self, n: i32) -> bool {
        (self.n_min..=self.n_max).contains(&n)
    }

    pub fn as_slice(&self) -> &[Complex64] {
        &self.data
    }

    pub fn as_mut_slice(&mut self) -> &mut [Complex64] {
        &mut self.data
    }

    pub fn into_vec(self) -> Vec<Complex64> {
        self.data
    }

    fn offset(&self, n: i32) -> usize {
        assert!(self.contains(n), "harmonic {n} outside [{}, {}]", self.n_min, self.n_max);
        (n - self.n_min) as usize * self.dim * self.dim
    }

    /// Flat 𝒩² block of harmonic N.
    pub fn component(&self, n: i32) -> &[Complex64] {
        let o = self.offset(n);
        &self.data[o..o + self.dim * self.dim]
    }

    pub fn component_matrix(&self, n: i32) -> Mat<Complex64> {
        let c = self.component(n);
        Mat::from_fn(self.dim, self.dim, |i, j| c[i * self.dim + j])
    }

    /// ρ_ij;N, zero outside the window.
    pub fn get(&self, i: usize, j: usize, n: i32) -> Complex64 {
        if !self.contains(n) {
            return Complex64::new(0.0, 0.0);
        }
        self.data[self.offset(n) + i * self.dim + j]
    }

    pub fn set(&mut self, i: usize, j: usize, n: i32, v: Complex64) {
        let k = self.offset(n) + i * self.dim + j;
        self.data[k] = v;
    }

    pub fn max_abs(&self) -> f64 {
        crate::linalg::max_abs(&self.data)
    }

    pub fn scaled(&self, factor: f64) -> HarmonicStack {
        let mut s = self.clone();
        for v in s.data.iter_mut() {
            *v *= factor;
        }
        s
    }
}

/// ρ(t) = Σ_N e^{−iNω_c t} r_N.
pub fn reconstruct_time_domain(stack: &HarmonicStack, t: f64, omega_c: f64) -> Mat<Complex64> {
    let d = stack.dim();
    let mut rho = Mat::<Complex64>::zeros(d, d);
    for n in stack.harmonics() {
        let phase = Complex64::from_polar(1.0, -(n as f64) * omega_c * t);
        let c = stack.component(n);
        for i in 0..d {
            for j in 0..d {
                rho[(i, j)] += phase * c[i * d + j];
            }
        }
    }
    rho
}

/// Harmonic N of a sampled periodic signal: (1/T)∫ f(t) e^{iNω_c t} dt over
/// one period, from `samples` equally spaced points covering [t0, t0 + T).
pub fn harmonic_component(samples: &[Complex64], t0: f64, omega_c: f64, n: i32) -> Complex64 {
    let m = samples.len();
    let period = TAU / omega_c;
    let mut acc = Complex64::new(0.0, 0.0);
    for (k, v) in samples.iter().enumerate() {
        let t = t0 + period * k as f64 / m as f64;
        acc += v * Complex64::from_polar(1.0, n as f64 * omega_c * t);
    }
    acc / m as f64
}

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize)]
pub struct SolverStats {
    pub accepted: usize,
    pub rejected: usize,
    pub rhs_evals: usize,
}

/// Harmonic-stack samples at strictly increasing times.
#[derive(Clone, Debug)]
pub struct Trajectory {
    pub samples: Vec<HarmonicStack>,
    pub omega_c: f64,
    pub stats: SolverStats,
}

impl Trajectory {
    pub fn times(&self) -> Vec<f64> {
        self.samples.iter().map(|s| s.time).collect()
    }

    pub fn last(&self) -> Option<&HarmonicStack> {
        self.samples.last()
    }

    pub fn is_empty(&self) -> bool {
        self.samples.is_empty()
    }

    pub fn len(&self) -> usize {
        self.samples.len()
    }
}
